//! Trial protocol, metrics, the geometric insertability proxy, and the
//! benchmark runner.
//!
//! A trial draws a hidden hole placement and a perturbed initial estimate,
//! simulates contact observations, estimates the hole pose (or skips
//! estimation for the direct baseline), and scores the estimate with a
//! collision-checked descent that emulates clearance-capped lateral
//! compliance.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::geometry::{catalog, ContactClass, ContactOracle, GeometryError};
use crate::manifold::{generate_manifold, ContactManifold, ManifoldError, SamplerConfig};
use crate::observe::{simulate_observations, ExplorationConfig};
use crate::pose::{compose, pose_error, relative, Pose6};
use crate::registration::{register, CorrespondenceMode, RegistrationConfig};
use crate::stream_rng;

/// Success threshold on the final insertion depth, mm.
pub const EPSILON_SUCCESS: f64 = 2.0;
/// Commanded overshoot past the success depth, mm, compensating the weakly
/// observable z estimate.
pub const Z_OVERSHOOT: f64 = 2.0;
/// Descent step of the insertability sweep, mm.
const DESCENT_STEP: f64 = 0.1;
/// Hole placements are drawn uniformly within these bounds.
const PLACEMENT_POS: f64 = 20.0;
const PLACEMENT_ROT: f64 = 10.0;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TrialMethod {
    Registration,
    Direct,
}

impl TrialMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrialMethod::Registration => "registration",
            TrialMethod::Direct => "direct",
        }
    }
}

impl std::str::FromStr for TrialMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "registration" => Ok(Self::Registration),
            "direct" => Ok(Self::Direct),
            other => Err(format!(
                "unknown method {other:?} (expected registration or direct)"
            )),
        }
    }
}

/// Per-cell trial settings.
#[derive(Debug, Clone)]
pub struct TrialConfig {
    pub geometry: String,
    pub manifold_size: usize,
    pub t_obs: f64,
    /// Initial-offset bounds: position mm, rotation deg.
    pub offset_pos: f64,
    pub offset_rot: f64,
    pub sigma_pos: f64,
    pub sigma_rot: f64,
    pub trials: usize,
    pub method: TrialMethod,
    pub seed: u64,
}

impl TrialConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.trials == 0 {
            return Err(BenchError::Config("trial count must be at least 1".into()));
        }
        if self.offset_pos <= 0.0 || self.offset_rot <= 0.0 {
            return Err(BenchError::Config("offset bounds must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub geometry: String,
    pub t_obs: f64,
    pub method: TrialMethod,
    pub true_pose: Pose6,
    pub initial_estimate: Pose6,
    pub final_estimate: Pose6,
    /// Signed errors (dx, dy, dz, dalpha, dbeta, dgamma).
    pub errors: [f64; 6],
    pub success: bool,
    pub wall_ms: f64,
    pub observation_count: usize,
}

/// The registration settings the benchmark runs with. Heavier than the
/// library defaults: the acceptance protocol wants the estimator run to
/// convergence with a full restart set.
pub fn bench_registration_config(manifold: &ContactManifold, seed: u64) -> RegistrationConfig {
    RegistrationConfig {
        max_iters: 900,
        k_normals: 12,
        scale: manifold.scale(),
        restarts: 16,
        restart_sigma_pos: 1.0,
        restart_sigma_rot: 1.0,
        early_stop: 1e-5,
        mode: CorrespondenceMode::Se3Relative,
        trim_fraction: 0.0,
        seed,
    }
}

/// One trial: draw placement and offset, collect observations, estimate
/// (or not, for the direct baseline), score.
pub fn run_trial(
    oracle: &ContactOracle,
    manifold: &ContactManifold,
    cfg: &TrialConfig,
    trial_id: usize,
) -> TrialRecord {
    let mut rng = stream_rng(cfg.seed, trial_id as u64);
    let truth = Pose6::new(
        rng.gen_range(-PLACEMENT_POS..=PLACEMENT_POS),
        rng.gen_range(-PLACEMENT_POS..=PLACEMENT_POS),
        rng.gen_range(-PLACEMENT_POS..=PLACEMENT_POS),
        rng.gen_range(-PLACEMENT_ROT..=PLACEMENT_ROT),
        rng.gen_range(-PLACEMENT_ROT..=PLACEMENT_ROT),
        rng.gen_range(-PLACEMENT_ROT..=PLACEMENT_ROT),
    );
    let offset = Pose6::new(
        rng.gen_range(-cfg.offset_pos..=cfg.offset_pos),
        rng.gen_range(-cfg.offset_pos..=cfg.offset_pos),
        rng.gen_range(-cfg.offset_pos..=cfg.offset_pos),
        rng.gen_range(-cfg.offset_rot..=cfg.offset_rot),
        rng.gen_range(-cfg.offset_rot..=cfg.offset_rot),
        rng.gen_range(-cfg.offset_rot..=cfg.offset_rot),
    );
    let init = compose(&truth, &offset);

    let mut ecfg = ExplorationConfig::for_geometry(oracle.spec(), cfg.t_obs, splitmix(cfg.seed, trial_id as u64));
    ecfg.sigma_pos = cfg.sigma_pos;
    ecfg.sigma_rot = cfg.sigma_rot;

    let t0 = std::time::Instant::now();
    let observations = simulate_observations(oracle, &truth, &ecfg);
    let (final_estimate, observation_count, wall_ms) = match (&observations, cfg.method) {
        // a failed collection scores as a failed trial, never an abort
        (Err(_), _) => (init, 0, 0.0),
        (Ok(obs), TrialMethod::Direct) => (init, obs.poses.len(), 0.0),
        (Ok(obs), TrialMethod::Registration) => {
            let rcfg = bench_registration_config(manifold, splitmix(cfg.seed ^ 0x5eed, trial_id as u64));
            match register(manifold, &obs.poses, &init, &rcfg) {
                Ok(r) => (r.estimate, obs.poses.len(), r.wall_ms),
                Err(_) => (init, obs.poses.len(), 0.0),
            }
        }
    };
    let _ = t0;

    let err = pose_error(&final_estimate, &truth);
    let success = observations.is_ok() && insertability_check(oracle, &final_estimate, &truth);
    TrialRecord {
        trial: trial_id,
        geometry: cfg.geometry.clone(),
        t_obs: cfg.t_obs,
        method: cfg.method,
        true_pose: truth,
        initial_estimate: init,
        final_estimate,
        errors: [err[0], err[1], err[2], err[3], err[4], err[5]],
        success,
        wall_ms,
        observation_count,
    }
}

fn splitmix(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9e3779b97f4a7c15))
        .wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Geometric insertion proxy: place the peg at the pose the (possibly
/// wrong) estimate implies, sweep z downward in 0.1 mm steps with the
/// z-error replaced by a fixed overshoot target, and emulate lateral
/// compliance by correcting penetrating steps along the lateral error
/// direction, with the cumulative correction capped at the clearance.
/// Succeeds iff the sweep reaches within 2 mm of full insertion.
pub fn insertability_check(oracle: &ContactOracle, estimate: &Pose6, truth: &Pose6) -> bool {
    let e = relative(truth, estimate);
    let spec = oracle.spec();
    let z_success = -spec.hole_depth;
    let z_target = z_success - Z_OVERSHOOT;

    let lat_norm = (e.x * e.x + e.y * e.y).sqrt();
    let lat_dir = if lat_norm > 1e-12 {
        (-e.x / lat_norm, -e.y / lat_norm)
    } else {
        (0.0, 0.0)
    };
    let cap = spec.clearance;

    let mut correction = 0.0_f64;
    let mut z_reached = f64::INFINITY;
    let mut z = 1.0_f64;
    while z > z_target {
        z = (z - DESCENT_STEP).max(z_target);
        let pose_at = |corr: f64| {
            Pose6::new(
                e.x + corr * lat_dir.0,
                e.y + corr * lat_dir.1,
                z,
                e.alpha,
                e.beta,
                e.gamma,
            )
        };
        if oracle.class_of(&pose_at(correction)) != ContactClass::Penetrating {
            z_reached = z;
            continue;
        }
        // penetrating: search the smallest additional lateral correction
        // within the remaining budget that clears it
        if lat_norm <= 1e-12 || correction >= cap {
            break;
        }
        let budget = cap - correction;
        let mut clearing = None;
        for k in 1..=8 {
            let probe = correction + budget * k as f64 / 8.0;
            if oracle.class_of(&pose_at(probe)) != ContactClass::Penetrating {
                clearing = Some(probe);
                break;
            }
        }
        match clearing {
            Some(first_clear) => {
                // refine downward so the correction stays minimal
                let (mut lo, mut hi) = (correction, first_clear);
                for _ in 0..12 {
                    let mid = 0.5 * (lo + hi);
                    if oracle.class_of(&pose_at(mid)) == ContactClass::Penetrating {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                correction = hi;
                z_reached = z;
            }
            None => break, // jammed
        }
    }
    z_reached - z_success <= EPSILON_SUCCESS
}

/// One aggregate cell of the report.
#[derive(Debug, Clone, Serialize)]
pub struct CellStats {
    pub geometry: String,
    pub t_obs: f64,
    pub method: TrialMethod,
    pub trials: usize,
    /// Mean absolute error per dimension.
    pub mae: [f64; 6],
    /// Population standard deviation of the absolute error per dimension.
    pub std: [f64; 6],
    pub success_rate: f64,
    pub mean_ms: f64,
    pub max_ms: f64,
}

#[derive(Debug, Serialize)]
pub struct BenchReport {
    pub cells: Vec<CellStats>,
    #[serde(skip)]
    pub rows: Vec<TrialRecord>,
}

/// Whole-benchmark configuration, as parsed from the flat key=value file.
#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub geometries: Vec<String>,
    pub t_obs: Vec<f64>,
    pub methods: Vec<TrialMethod>,
    pub trials: usize,
    pub manifold_count: usize,
    pub sigma_pos: f64,
    pub sigma_rot: f64,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            geometries: vec!["square".into()],
            t_obs: vec![6.0, 8.0, 10.0],
            methods: vec![TrialMethod::Registration, TrialMethod::Direct],
            trials: 25,
            manifold_count: 20_000,
            sigma_pos: 0.05,
            sigma_rot: 0.05,
            seed: 7,
        }
    }
}

impl BenchConfig {
    /// Parses the flat `key=value` format; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, BenchError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| BenchError::Config(format!("line {}: expected key=value", i + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |e: String| BenchError::Config(format!("line {}: {key}: {e}", i + 1));
            match key {
                "geometries" => {
                    cfg.geometries = value.split(',').map(|s| s.trim().to_string()).collect()
                }
                "t_obs" => {
                    cfg.t_obs = value
                        .split(',')
                        .map(|s| s.trim().parse::<f64>())
                        .collect::<Result<_, _>>()
                        .map_err(|e| bad(e.to_string()))?
                }
                "methods" => {
                    cfg.methods = value
                        .split(',')
                        .map(|s| s.trim().parse::<TrialMethod>())
                        .collect::<Result<_, _>>()
                        .map_err(BenchError::Config)?
                }
                "trials" => cfg.trials = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                "manifold_count" => {
                    cfg.manifold_count = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?
                }
                "noise_pos" => cfg.sigma_pos = value.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                "noise_rot" => cfg.sigma_rot = value.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                "seed" => cfg.seed = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                other => return Err(BenchError::Config(format!("line {}: unknown key {other:?}", i + 1))),
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.trials == 0 {
            return Err(BenchError::Config("trials must be at least 1".into()));
        }
        if self.geometries.is_empty() || self.t_obs.is_empty() || self.methods.is_empty() {
            return Err(BenchError::Config(
                "geometries, t_obs and methods must be non-empty".into(),
            ));
        }
        for g in &self.geometries {
            catalog(g)?;
        }
        Ok(())
    }
}

/// Runs every (geometry, t_obs, method) cell. Manifolds are generated once
/// per geometry from the master seed; trials run in parallel and the result
/// is deterministic per master seed regardless of scheduling.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    run_benchmark_with_manifolds(cfg, &BTreeMap::new())
}

/// As [`run_benchmark`], with optional pre-built manifolds per geometry.
/// Provided manifolds are validated against the requested geometry before
/// any trial runs.
pub fn run_benchmark_with_manifolds(
    cfg: &BenchConfig,
    prebuilt: &BTreeMap<String, ContactManifold>,
) -> Result<BenchReport, BenchError> {
    cfg.validate()?;
    for (name, m) in prebuilt {
        if &m.geometry != name {
            return Err(BenchError::Config(format!(
                "manifold labeled {:?} supplied for geometry {name:?}",
                m.geometry
            )));
        }
    }

    let mut oracles = BTreeMap::new();
    let mut manifolds = BTreeMap::new();
    for (gi, name) in cfg.geometries.iter().enumerate() {
        let spec = catalog(name)?;
        let oracle = ContactOracle::with_default_tolerances(spec)?;
        let manifold = match prebuilt.get(name) {
            Some(m) => {
                if (m.contact_tol - oracle.contact_tol()).abs() > 1e-12
                    || (m.pen_tol - oracle.pen_tol()).abs() > 1e-12
                {
                    return Err(BenchError::Config(format!(
                        "manifold for {name:?} was built with different oracle tolerances"
                    )));
                }
                m.clone()
            }
            None => {
                let scfg = SamplerConfig::for_oracle(
                    &oracle,
                    cfg.manifold_count,
                    splitmix(cfg.seed, 0x6d61 + gi as u64),
                );
                generate_manifold(&oracle, &scfg)?
            }
        };
        oracles.insert(name.clone(), oracle);
        manifolds.insert(name.clone(), manifold);
    }

    // fully enumerate trials so parallel execution cannot reorder results
    let mut jobs = Vec::new();
    let mut cell_idx = 0u64;
    for name in &cfg.geometries {
        for &t_obs in &cfg.t_obs {
            for &method in &cfg.methods {
                let tcfg = TrialConfig {
                    geometry: name.clone(),
                    manifold_size: cfg.manifold_count,
                    t_obs,
                    offset_pos: 5.0,
                    offset_rot: 5.0,
                    sigma_pos: cfg.sigma_pos,
                    sigma_rot: cfg.sigma_rot,
                    trials: cfg.trials,
                    method,
                    seed: splitmix(cfg.seed, 0x7269 + cell_idx),
                };
                tcfg.validate()?;
                for trial in 0..cfg.trials {
                    jobs.push((tcfg.clone(), trial));
                }
                cell_idx += 1;
            }
        }
    }

    let rows: Vec<TrialRecord> = jobs
        .par_iter()
        .map(|(tcfg, trial)| {
            run_trial(
                &oracles[&tcfg.geometry],
                &manifolds[&tcfg.geometry],
                tcfg,
                *trial,
            )
        })
        .collect();

    let cells = aggregate(&rows);
    Ok(BenchReport { cells, rows })
}

/// Recomputes the per-cell aggregates from trial rows.
pub fn aggregate(rows: &[TrialRecord]) -> Vec<CellStats> {
    let mut groups: BTreeMap<(String, String, String), Vec<&TrialRecord>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.geometry.clone(), format!("{}", r.t_obs), r.method.as_str().to_string()))
            .or_default()
            .push(r);
    }
    groups
        .into_values()
        .map(|rows| {
            let n = rows.len() as f64;
            let mut mae = [0.0; 6];
            let mut std = [0.0; 6];
            for d in 0..6 {
                let abs: Vec<f64> = rows.iter().map(|r| r.errors[d].abs()).collect();
                let mean = abs.iter().sum::<f64>() / n;
                mae[d] = mean;
                std[d] = (abs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
            }
            let success_rate = rows.iter().filter(|r| r.success).count() as f64 / n;
            let mean_ms = rows.iter().map(|r| r.wall_ms).sum::<f64>() / n;
            let max_ms = rows.iter().map(|r| r.wall_ms).fold(0.0, f64::max);
            CellStats {
                geometry: rows[0].geometry.clone(),
                t_obs: rows[0].t_obs,
                method: rows[0].method,
                trials: rows.len(),
                mae,
                std,
                success_rate,
                mean_ms,
                max_ms,
            }
        })
        .collect()
}

pub const TRIAL_CSV_HEADER: &str = "trial,geometry,t_obs,method,dx,dy,dz,da,db,dg,success,ms";

pub fn trial_csv_row(r: &TrialRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        r.trial,
        r.geometry,
        r.t_obs,
        r.method.as_str(),
        r.errors[0],
        r.errors[1],
        r.errors[2],
        r.errors[3],
        r.errors[4],
        r.errors[5],
        if r.success { 1 } else { 0 },
        r.wall_ms,
    )
}

pub const AGGREGATE_CSV_HEADER: &str = "geometry,t_obs,method,trials,mae_x,mae_y,mae_z,mae_a,mae_b,mae_g,std_x,std_y,std_z,std_a,std_b,std_g,success_rate,mean_ms,max_ms";

pub fn aggregate_csv_row(c: &CellStats) -> String {
    let mut out = format!("{},{},{},{}", c.geometry, c.t_obs, c.method.as_str(), c.trials);
    for v in c.mae.iter().chain(c.std.iter()) {
        out.push(',');
        out.push_str(&v.to_string());
    }
    out.push_str(&format!(",{},{},{}", c.success_rate, c.mean_ms, c.max_ms));
    out
}

/// Writes `trials.csv`, `aggregate.csv` and `report.json` into `dir`.
pub fn write_report(report: &BenchReport, dir: &Path) -> Result<(), BenchError> {
    std::fs::create_dir_all(dir)?;
    let mut trials = String::from(TRIAL_CSV_HEADER);
    trials.push('\n');
    for r in &report.rows {
        trials.push_str(&trial_csv_row(r));
        trials.push('\n');
    }
    std::fs::File::create(dir.join("trials.csv"))?.write_all(trials.as_bytes())?;

    let mut agg = String::from(AGGREGATE_CSV_HEADER);
    agg.push('\n');
    for c in &report.cells {
        agg.push_str(&aggregate_csv_row(c));
        agg.push('\n');
    }
    std::fs::File::create(dir.join("aggregate.csv"))?.write_all(agg.as_bytes())?;

    let json = serde_json::to_string_pretty(&report.cells)
        .map_err(|e| BenchError::Config(format!("report serialization: {e}")))?;
    std::fs::File::create(dir.join("report.json"))?.write_all(json.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_oracle() -> ContactOracle {
        ContactOracle::with_default_tolerances(catalog("square").unwrap()).unwrap()
    }

    #[test]
    fn perfect_estimate_inserts_on_every_geometry() {
        for name in crate::geometry::CATALOG_NAMES {
            let oracle = ContactOracle::with_default_tolerances(catalog(name).unwrap()).unwrap();
            let truth = Pose6::new(3.0, -2.0, 5.0, 2.0, -1.0, 4.0);
            assert!(insertability_check(&oracle, &truth, &truth), "{name}");
        }
    }

    #[test]
    fn large_lateral_error_jams() {
        let oracle = square_oracle();
        let truth = Pose6::identity();
        let estimate = Pose6::translation(5.0, 0.0, 0.0);
        assert!(!insertability_check(&oracle, &estimate, &truth));
        // a drawn direct-baseline offset of (4, 4) mm also jams
        let estimate = Pose6::translation(4.0, 4.0, 0.0);
        assert!(!insertability_check(&oracle, &estimate, &truth));
    }

    #[test]
    fn three_degree_tilt_error_jams() {
        let oracle = square_oracle();
        let truth = Pose6::identity();
        let estimate = Pose6::new(0.0, 0.0, 0.0, 3.0, 0.0, 0.0);
        assert!(!insertability_check(&oracle, &estimate, &truth));
    }

    #[test]
    fn small_lateral_error_is_compensated() {
        let oracle = square_oracle();
        let truth = Pose6::identity();
        // within the clearance-capped compliance budget
        let estimate = Pose6::translation(0.15, 0.0, 0.0);
        assert!(insertability_check(&oracle, &estimate, &truth));
    }

    #[test]
    fn z_error_alone_never_fails() {
        let oracle = square_oracle();
        let truth = Pose6::identity();
        for dz in [-4.0, -2.0, 2.0, 4.0] {
            let estimate = Pose6::translation(0.0, 0.0, dz);
            assert!(insertability_check(&oracle, &estimate, &truth), "dz = {dz}");
        }
    }

    #[test]
    fn config_parsing_round_trip() {
        let text = "\n# comment\ngeometries = square, lshape\nt_obs=6,10\nmethods=registration,direct\ntrials=3\nmanifold_count=1500\nnoise_pos=0.01\nnoise_rot=0.02\nseed=11\n";
        let cfg = BenchConfig::parse(text).unwrap();
        assert_eq!(cfg.geometries, vec!["square", "lshape"]);
        assert_eq!(cfg.t_obs, vec![6.0, 10.0]);
        assert_eq!(cfg.trials, 3);
        assert_eq!(cfg.manifold_count, 1500);
        assert_eq!(cfg.sigma_pos, 0.01);
        assert_eq!(cfg.seed, 11);
        cfg.validate().unwrap();

        assert!(BenchConfig::parse("bogus line\n").is_err());
        assert!(BenchConfig::parse("geometries=nosuch\n").unwrap().validate().is_err());
    }

    #[test]
    fn mae_of_simple_errors() {
        let mk = |dx: f64| TrialRecord {
            trial: 0,
            geometry: "square".into(),
            t_obs: 6.0,
            method: TrialMethod::Direct,
            true_pose: Pose6::identity(),
            initial_estimate: Pose6::identity(),
            final_estimate: Pose6::identity(),
            errors: [dx, 0.0, 0.0, 0.0, 0.0, 0.0],
            success: true,
            wall_ms: 1.0,
            observation_count: 0,
        };
        let cells = aggregate(&[mk(0.2), mk(-0.4)]);
        assert_eq!(cells.len(), 1);
        assert!((cells[0].mae[0] - 0.3).abs() < 1e-12);
        assert_eq!(cells[0].success_rate, 1.0);
    }

    #[test]
    fn benchmark_rows_and_cells_are_consistent_and_deterministic() {
        let cfg = BenchConfig {
            geometries: vec!["square".into()],
            t_obs: vec![6.0],
            methods: vec![TrialMethod::Direct],
            trials: 4,
            manifold_count: 1200,
            sigma_pos: 0.0,
            sigma_rot: 0.0,
            seed: 3,
        };
        let a = run_benchmark(&cfg).unwrap();
        assert_eq!(a.rows.len(), 4);
        assert_eq!(a.cells.len(), 1);
        // aggregate recomputation from rows matches exactly
        let re = aggregate(&a.rows);
        for (x, y) in a.cells.iter().zip(re.iter()) {
            assert_eq!(x.mae, y.mae);
            assert_eq!(x.std, y.std);
            assert_eq!(x.success_rate, y.success_rate);
        }
        let b = run_benchmark(&cfg).unwrap();
        for (ra, rb) in a.rows.iter().zip(b.rows.iter()) {
            assert_eq!(ra.true_pose, rb.true_pose);
            assert_eq!(ra.errors, rb.errors);
            assert_eq!(ra.success, rb.success);
        }
    }

    #[test]
    fn mismatched_manifold_is_rejected_before_trials() {
        let oracle = square_oracle();
        let scfg = SamplerConfig::for_oracle(&oracle, 1000, 5);
        let m = generate_manifold(&oracle, &scfg).unwrap();
        let mut prebuilt = BTreeMap::new();
        prebuilt.insert("lshape".to_string(), m);
        let cfg = BenchConfig {
            geometries: vec!["lshape".into()],
            t_obs: vec![6.0],
            methods: vec![TrialMethod::Direct],
            trials: 1,
            manifold_count: 1000,
            sigma_pos: 0.0,
            sigma_rot: 0.0,
            seed: 3,
        };
        assert!(matches!(
            run_benchmark_with_manifolds(&cfg, &prebuilt),
            Err(BenchError::Config(_))
        ));
    }
}
