//! Offline phase: build, annotate and persist the reference contact
//! manifold.
//!
//! Points come from a mixture sampler: half (by default) from spiral +
//! oscillation trajectories walked under compliance, the rest from random
//! free poses projected to contact along random 6-D directions. The random
//! rays guarantee coverage of corner and edge strata that trajectories alone
//! underweight. Every stored pose classifies as contact under the oracle
//! that generated it.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::Matrix6;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{ContactClass, ContactOracle, GeometryError};
use crate::nn::NnIndex;
use crate::observe::{collect_contacts, ExplorationConfig, ObserveError};
use crate::pose::{compose, embed, unembed, MetricScale, Pose6, Vec6};
use crate::stream_rng;

const SCAN_STEPS: usize = 32;
const MAX_BISECT: usize = 40;
/// rng stream id blocks; ray samples and trajectory runs must not collide
const RAY_STREAM_BASE: u64 = 1 << 32;
const TRAJ_STREAM_BASE: u64 = 2 << 32;
const DOWNSAMPLE_QUOTA: usize = 400;

#[derive(Debug, Error)]
pub enum ManifoldError {
    #[error("pose is not free: projection requires a free starting pose")]
    NotFreePose,
    #[error("sampling exhausted after {attempts} attempts for sample {sample}")]
    SamplingExhausted { sample: usize, attempts: usize },
    #[error("insufficient points: need more than k = {k}, got {count}")]
    InsufficientPoints { count: usize, k: usize },
    #[error("invalid count: requested {requested} from {available} points")]
    InvalidCount { requested: usize, available: usize },
    #[error("invalid sampler config: {0}")]
    InvalidConfig(String),
    #[error("manifold file line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("unsupported manifold file version {found:?} (expected \"CMANIFOLD v1\")")]
    Version { found: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Observe(#[from] ObserveError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A contact pose paired with the local 6-D unit normal of the manifold in
/// embedded space.
#[derive(Debug, Clone, PartialEq)]
pub struct PointNormal {
    pub pose: Pose6,
    pub normal: Vec6,
}

/// The reference contact manifold in the hole frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactManifold {
    pub points: Vec<PointNormal>,
    pub geometry: String,
    /// Diametric clearance of the generating spec, mm.
    pub clearance: f64,
    pub contact_tol: f64,
    pub pen_tol: f64,
    pub seed: u64,
    pub rot_scale: f64,
    pub k_normals: usize,
}

impl ContactManifold {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn poses(&self) -> Vec<Pose6> {
        self.points.iter().map(|p| p.pose).collect()
    }

    pub fn scale(&self) -> MetricScale {
        MetricScale::new(self.rot_scale)
    }
}

/// Mixture sampler configuration.
#[derive(Debug, Clone)]
pub struct SamplerConfig {
    /// Number of contact poses to generate, in `[10^3, 10^6]`.
    pub count: usize,
    /// Fraction of points taken from compliant trajectories; the rest come
    /// from random projected rays.
    pub traj_fraction: f64,
    /// Insertion-depth window for sampling, mm below the opening.
    pub depth_range: (f64, f64),
    /// Free poses are drawn laterally within this fraction of the
    /// half-clearance.
    pub lateral_frac: f64,
    /// Tilt window as a multiple of `atan(half_clearance / depth)`.
    pub tilt_factor: f64,
    /// Projection reach along a probe direction (embedded norm).
    pub max_step: f64,
    /// Per-sample retry budget before giving up.
    pub max_attempts: usize,
    pub k_normals: usize,
    pub scale: MetricScale,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn for_oracle(oracle: &ContactOracle, count: usize, seed: u64) -> Self {
        let hole_depth = oracle.spec().hole_depth;
        Self {
            count,
            traj_fraction: 0.5,
            depth_range: (0.2 * hole_depth, 0.8 * hole_depth),
            lateral_frac: 0.7,
            tilt_factor: 2.0,
            max_step: 1.0,
            max_attempts: 400,
            k_normals: 12,
            // angular scale matched to the catalog's tilt-to-displacement
            // coupling so wall strata carry orientation weight
            scale: MetricScale::new(0.25),
            seed,
        }
    }

    fn validate(&self, hole_depth: f64) -> Result<(), ManifoldError> {
        if !(1_000..=1_000_000).contains(&self.count) {
            return Err(ManifoldError::InvalidConfig(format!(
                "count {} outside [10^3, 10^6]",
                self.count
            )));
        }
        let (lo, hi) = self.depth_range;
        if !(0.0 < lo && lo < hi && hi < hole_depth) {
            return Err(ManifoldError::InvalidConfig(format!(
                "depth range ({lo}, {hi}) outside (0, {hole_depth})"
            )));
        }
        if !(0.0..=1.0).contains(&self.traj_fraction) {
            return Err(ManifoldError::InvalidConfig(
                "traj_fraction must be in [0, 1]".into(),
            ));
        }
        if self.k_normals < 4 {
            return Err(ManifoldError::InvalidConfig(
                "k_normals must be at least 4".into(),
            ));
        }
        Ok(())
    }
}

/// Projects a free pose onto the contact band along an embedded probe
/// direction: scans in `max_step / 32` increments for the first non-free
/// sample, then bisects into the band. `Ok(None)` when the ray stays free
/// within `max_step`.
pub fn project_to_contact(
    oracle: &ContactOracle,
    free_pose: &Pose6,
    probe_dir: &Vec6,
    max_step: f64,
    scale: MetricScale,
) -> Result<Option<Pose6>, ManifoldError> {
    if oracle.class_of(free_pose) != ContactClass::Free {
        return Err(ManifoldError::NotFreePose);
    }
    let pose_at = |s: f64| compose(free_pose, &unembed(&(probe_dir * s), scale));
    let step = max_step / SCAN_STEPS as f64;
    let mut prev_s = 0.0;
    for k in 1..=SCAN_STEPS {
        let s = k as f64 * step;
        let p = pose_at(s);
        match oracle.class_of(&p) {
            ContactClass::Free => {
                prev_s = s;
                continue;
            }
            ContactClass::Contact => return Ok(Some(p)),
            ContactClass::Penetrating => {
                let (mut lo, mut hi) = (prev_s, s);
                for _ in 0..MAX_BISECT {
                    let mid = 0.5 * (lo + hi);
                    let q = pose_at(mid);
                    match oracle.class_of(&q) {
                        ContactClass::Free => lo = mid,
                        ContactClass::Contact => return Ok(Some(q)),
                        ContactClass::Penetrating => hi = mid,
                    }
                }
                // the band is thinner than the bisection budget resolves
                // only for floor-dominated rays; treat as no contact
                return Ok(None);
            }
        }
    }
    Ok(None)
}

/// Generates the reference contact manifold with the mixture sampler.
/// Deterministic for a fixed config; samples are drawn on independent rng
/// streams so generation parallelizes without affecting the result.
pub fn generate_manifold(
    oracle: &ContactOracle,
    cfg: &SamplerConfig,
) -> Result<ContactManifold, ManifoldError> {
    cfg.validate(oracle.spec().hole_depth)?;
    let n_traj = ((cfg.count as f64) * cfg.traj_fraction).round() as usize;
    let n_ray = cfg.count - n_traj;

    // trajectory half: independent runs, each filling a fixed quota
    let n_runs = n_traj.div_ceil(DOWNSAMPLE_QUOTA.max(1)).max(1);
    let quotas: Vec<usize> = (0..n_runs)
        .map(|r| {
            let base = n_traj / n_runs;
            if r < n_traj % n_runs {
                base + 1
            } else {
                base
            }
        })
        .collect();
    let mut traj_points: Vec<Vec<Pose6>> = Vec::new();
    quotas
        .par_iter()
        .enumerate()
        .map(|(run, &quota)| trajectory_run(oracle, cfg, run, quota))
        .collect_into_vec(&mut traj_points);
    let traj_points: Vec<Vec<Pose6>> = traj_points;

    // ray half: one stream per sample
    let ray_points: Vec<Result<Pose6, ManifoldError>> = (0..n_ray)
        .into_par_iter()
        .map(|i| ray_sample(oracle, cfg, i))
        .collect();

    let mut poses = Vec::with_capacity(cfg.count);
    for run in traj_points {
        if run.len() < run.capacity() {
            // quota underrun surfaces as exhaustion below
        }
        poses.extend(run);
    }
    if poses.len() < n_traj {
        return Err(ManifoldError::SamplingExhausted {
            sample: poses.len(),
            attempts: cfg.max_attempts,
        });
    }
    for r in ray_points {
        poses.push(r?);
    }
    debug_assert_eq!(poses.len(), cfg.count);

    let normals = estimate_normals(&poses, cfg.k_normals, cfg.scale)?;
    let points = poses
        .into_iter()
        .zip(normals)
        .map(|(pose, normal)| PointNormal { pose, normal })
        .collect();
    Ok(ContactManifold {
        points,
        geometry: oracle.spec().name.clone(),
        clearance: oracle.spec().clearance,
        contact_tol: oracle.contact_tol(),
        pen_tol: oracle.pen_tol(),
        seed: cfg.seed,
        rot_scale: cfg.scale.rot_scale,
        k_normals: cfg.k_normals,
    })
}

/// One compliant trajectory run collecting `quota` contact poses.
fn trajectory_run(
    oracle: &ContactOracle,
    cfg: &SamplerConfig,
    run: usize,
    quota: usize,
) -> Vec<Pose6> {
    let mut rng = stream_rng(cfg.seed, TRAJ_STREAM_BASE + run as u64);
    let mut out = Vec::with_capacity(quota);
    let (dlo, dhi) = cfg.depth_range;
    let mut attempt = 0;
    while out.len() < quota && attempt < cfg.max_attempts {
        attempt += 1;
        // a short exploration burst at a random depth with fresh phases
        let mut ecfg =
            ExplorationConfig::for_geometry(oracle.spec(), 4.0, rng.gen::<u64>());
        ecfg.start_depth = rng.gen_range(dlo..dhi * 0.8);
        ecfg.target_depth = rng.gen_range((ecfg.start_depth + 0.05 * dhi).min(dhi)..=dhi);
        ecfg.descent_rate = (ecfg.target_depth - ecfg.start_depth) / (0.9 * ecfg.t_obs);
        ecfg.ramp_time = 2.0;
        match collect_contacts(oracle, &ecfg) {
            Ok(contacts) => {
                for c in contacts {
                    if out.len() == quota {
                        break;
                    }
                    out.push(c);
                }
            }
            Err(_) => continue,
        }
    }
    out
}

/// One random-ray sample: a uniformly drawn free pose projected to contact
/// along a random unit 6-D direction.
fn ray_sample(
    oracle: &ContactOracle,
    cfg: &SamplerConfig,
    sample: usize,
) -> Result<Pose6, ManifoldError> {
    let mut rng = stream_rng(cfg.seed, RAY_STREAM_BASE + sample as u64);
    let half_clearance = 0.5 * oracle.spec().clearance;
    let half_width = oracle
        .spec()
        .peg_section
        .outer()
        .iter()
        .map(|p| p.coords.norm())
        .fold(0.0, f64::max);
    let (dlo, dhi) = cfg.depth_range;
    // each rejected draw shrinks the window toward the (always free) center
    let mut window = 1.0;
    for _ in 0..cfg.max_attempts {
        let depth = rng.gen_range(dlo..=dhi);
        let lat = window * cfg.lateral_frac * half_clearance;
        let tilt = window * cfg.tilt_factor * (half_clearance / depth).atan().to_degrees();
        let spin = window * cfg.tilt_factor * (half_clearance / half_width).atan().to_degrees();
        let pose = Pose6::new(
            rng.gen_range(-lat..=lat),
            rng.gen_range(-lat..=lat),
            -depth,
            rng.gen_range(-tilt..=tilt),
            rng.gen_range(-tilt..=tilt),
            rng.gen_range(-spin..=spin),
        );
        if oracle.class_of(&pose) != ContactClass::Free {
            window *= 0.8;
            continue;
        }
        let mut dir = Vec6::zeros();
        loop {
            for d in 0..6 {
                dir[d] = rng.sample::<f64, _>(rand_distr::StandardNormal);
            }
            if dir.norm() > 1e-9 {
                break;
            }
        }
        dir /= dir.norm();
        if let Some(contact) = project_to_contact(oracle, &pose, &dir, cfg.max_step, cfg.scale)? {
            return Ok(contact);
        }
    }
    Err(ManifoldError::SamplingExhausted {
        sample,
        attempts: cfg.max_attempts,
    })
}

/// Estimates each point's local 6-D normal: embed the k nearest neighbors,
/// center them on the point, and take the singular vector of the smallest
/// singular value of the covariance. Signs are fixed so the first nonzero
/// component is positive.
pub fn estimate_normals(
    points: &[Pose6],
    k: usize,
    scale: MetricScale,
) -> Result<Vec<Vec6>, ManifoldError> {
    if k < 4 || points.len() <= k {
        return Err(ManifoldError::InsufficientPoints {
            count: points.len(),
            k,
        });
    }
    let embedded: Vec<Vec6> = points.iter().map(|p| embed(p, scale)).collect();
    let index = NnIndex::from_embedded(embedded.clone(), scale).expect("non-empty");
    let normals: Vec<Vec6> = embedded
        .par_iter()
        .enumerate()
        .map(|(i, q)| {
            let neighbors = index.knn(q, k + 1);
            let mut cov = Matrix6::zeros();
            let mut used = 0;
            for &(j, _) in &neighbors {
                if j == i {
                    continue;
                }
                if used == k {
                    break;
                }
                let d = index.point(j) - q;
                cov.syger(1.0, &d, &d, 1.0);
                used += 1;
            }
            let eig = nalgebra::linalg::SymmetricEigen::new(cov);
            let mut imin = 0;
            for c in 1..6 {
                if eig.eigenvalues[c] < eig.eigenvalues[imin] {
                    imin = c;
                }
            }
            let mut n: Vec6 = eig.eigenvectors.column(imin).into_owned();
            n /= n.norm();
            for c in 0..6 {
                if n[c].abs() > 1e-9 {
                    if n[c] < 0.0 {
                        n = -n;
                    }
                    break;
                }
            }
            n
        })
        .collect();
    Ok(normals)
}

/// Uniform random subset of size `n` without replacement, normals
/// recomputed on the subset. Deterministic per rng state.
pub fn downsample<R: Rng + ?Sized>(
    m: &ContactManifold,
    n: usize,
    rng: &mut R,
) -> Result<ContactManifold, ManifoldError> {
    if n > m.len() {
        return Err(ManifoldError::InvalidCount {
            requested: n,
            available: m.len(),
        });
    }
    let mut chosen = rand::seq::index::sample(rng, m.len(), n).into_vec();
    chosen.sort_unstable();
    let poses: Vec<Pose6> = chosen.iter().map(|&i| m.points[i].pose).collect();
    let normals = estimate_normals(&poses, m.k_normals, m.scale())?;
    Ok(ContactManifold {
        points: poses
            .into_iter()
            .zip(normals)
            .map(|(pose, normal)| PointNormal { pose, normal })
            .collect(),
        geometry: m.geometry.clone(),
        clearance: m.clearance,
        contact_tol: m.contact_tol,
        pen_tol: m.pen_tol,
        seed: m.seed,
        rot_scale: m.rot_scale,
        k_normals: m.k_normals,
    })
}

const MANIFOLD_MAGIC: &str = "CMANIFOLD v1";

pub fn save_manifold(m: &ContactManifold, path: &Path) -> Result<(), ManifoldError> {
    let mut out = String::with_capacity(m.len() * 96 + 256);
    out.push_str(MANIFOLD_MAGIC);
    out.push('\n');
    out.push_str(&format!("geometry: {}\n", m.geometry));
    out.push_str(&format!("clearance_mm: {}\n", m.clearance));
    out.push_str(&format!("contact_tol_mm: {}\n", m.contact_tol));
    out.push_str(&format!("pen_tol_mm: {}\n", m.pen_tol));
    out.push_str(&format!("seed: {}\n", m.seed));
    out.push_str(&format!("count: {}\n", m.len()));
    out.push_str(&format!("rot_scale: {}\n", m.rot_scale));
    out.push_str(&format!("k_normals: {}\n", m.k_normals));
    out.push_str("frame: hole\n");
    for p in &m.points {
        let n = &p.normal;
        out.push_str(&format!(
            "{} {} {} {} {} {} {}\n",
            p.pose, n[0], n[1], n[2], n[3], n[4], n[5]
        ));
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

pub fn load_manifold(path: &Path) -> Result<ContactManifold, ManifoldError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let (_, first) = lines.next().ok_or(ManifoldError::Format {
        line: 1,
        msg: "empty file".into(),
    })?;
    let first = first?;
    if first.trim() != MANIFOLD_MAGIC {
        return Err(ManifoldError::Version { found: first });
    }

    let mut m = ContactManifold {
        points: Vec::new(),
        geometry: String::new(),
        clearance: 0.0,
        contact_tol: 0.0,
        pen_tol: 0.0,
        seed: 0,
        rot_scale: 1.0,
        k_normals: 12,
    };
    let mut declared_count: Option<usize> = None;
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: String| ManifoldError::Format { line: lineno, msg };
        if let Some((key, value)) = line.split_once(": ") {
            let value = value.trim();
            match key.trim() {
                "geometry" => m.geometry = value.to_string(),
                "clearance_mm" => {
                    m.clearance = value.parse().map_err(|e| bad(format!("clearance: {e}")))?
                }
                "contact_tol_mm" => {
                    m.contact_tol = value.parse().map_err(|e| bad(format!("contact_tol: {e}")))?
                }
                "pen_tol_mm" => {
                    m.pen_tol = value.parse().map_err(|e| bad(format!("pen_tol: {e}")))?
                }
                "seed" => m.seed = value.parse().map_err(|e| bad(format!("seed: {e}")))?,
                "count" => {
                    declared_count =
                        Some(value.parse().map_err(|e| bad(format!("count: {e}")))?)
                }
                "rot_scale" => {
                    m.rot_scale = value.parse().map_err(|e| bad(format!("rot_scale: {e}")))?
                }
                "k_normals" => {
                    m.k_normals = value.parse().map_err(|e| bad(format!("k_normals: {e}")))?
                }
                "frame" => {
                    if value != "hole" {
                        return Err(bad(format!("unsupported frame {value:?}")));
                    }
                }
                other => return Err(bad(format!("unknown header key {other:?}"))),
            }
        } else {
            let nums: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| bad(format!("record: {e}")))?;
            if nums.len() != 12 {
                return Err(bad(format!("record has {} fields, expected 12", nums.len())));
            }
            m.points.push(PointNormal {
                pose: Pose6::new(nums[0], nums[1], nums[2], nums[3], nums[4], nums[5]),
                normal: Vec6::new(nums[6], nums[7], nums[8], nums[9], nums[10], nums[11]),
            });
        }
    }
    match declared_count {
        Some(c) if c == m.points.len() => Ok(m),
        Some(c) => Err(ManifoldError::Format {
            line: 0,
            msg: format!("header declares {c} records, file holds {}", m.points.len()),
        }),
        None => Err(ManifoldError::Format {
            line: 0,
            msg: "missing count header".into(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::catalog;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn square_oracle() -> ContactOracle {
        ContactOracle::with_default_tolerances(catalog("square").unwrap()).unwrap()
    }

    #[test]
    fn projection_reaches_the_near_wall() {
        let oracle = square_oracle();
        let start = Pose6::translation(0.0, 0.0, -5.0);
        let dir = Vec6::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let p = project_to_contact(&oracle, &start, &dir, 1.0, MetricScale::default())
            .unwrap()
            .expect("wall within reach");
        assert_eq!(oracle.class_of(&p), ContactClass::Contact);
        assert!((p.x - 0.1).abs() < 0.021, "x = {}", p.x);
    }

    #[test]
    fn downward_probe_from_center_finds_nothing() {
        let oracle = square_oracle();
        let start = Pose6::translation(0.0, 0.0, -5.0);
        let dir = Vec6::new(0.0, 0.0, -1.0, 0.0, 0.0, 0.0);
        let r = project_to_contact(&oracle, &start, &dir, 1.0, MetricScale::default()).unwrap();
        assert!(r.is_none());
    }

    #[test]
    fn projection_requires_a_free_start() {
        let oracle = square_oracle();
        let touching = Pose6::translation(0.1, 0.0, -5.0);
        let dir = Vec6::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert!(matches!(
            project_to_contact(&oracle, &touching, &dir, 1.0, MetricScale::default()),
            Err(ManifoldError::NotFreePose)
        ));
    }

    #[test]
    fn generated_manifold_is_all_contact_and_deterministic() {
        let oracle = square_oracle();
        let mut cfg = SamplerConfig::for_oracle(&oracle, 1000, 42);
        cfg.count = 1000;
        let m = generate_manifold(&oracle, &cfg).unwrap();
        assert_eq!(m.len(), 1000);
        for p in &m.points {
            assert_eq!(oracle.class_of(&p.pose), ContactClass::Contact);
            assert!((p.normal.norm() - 1.0).abs() < 1e-9);
        }
        let again = generate_manifold(&oracle, &cfg).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn hyperplane_normals_are_recovered_exactly() {
        // points on the hyperplane x = 0.1, varying elsewhere
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        use rand::Rng;
        let points: Vec<Pose6> = (0..200)
            .map(|_| {
                Pose6::new(
                    0.1,
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect();
        let normals = estimate_normals(&points, 12, MetricScale::default()).unwrap();
        for n in &normals {
            assert!((n[0] - 1.0).abs() < 1e-9, "normal {n:?}");
            for c in 1..6 {
                assert!(n[c].abs() < 1e-9);
            }
        }

        // plane in an angular dimension: gamma = 2 deg
        let points: Vec<Pose6> = (0..200)
            .map(|_| {
                Pose6::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    2.0,
                )
            })
            .collect();
        let normals = estimate_normals(&points, 12, MetricScale::default()).unwrap();
        for n in &normals {
            assert!((n[5] - 1.0).abs() < 1e-9, "normal {n:?}");
        }
    }

    #[test]
    fn normal_estimation_needs_enough_points() {
        let points: Vec<Pose6> = (0..10).map(|i| Pose6::translation(i as f64, 0.0, 0.0)).collect();
        assert!(matches!(
            estimate_normals(&points, 3, MetricScale::default()),
            Err(ManifoldError::InsufficientPoints { .. })
        ));
        assert!(matches!(
            estimate_normals(&points, 12, MetricScale::default()),
            Err(ManifoldError::InsufficientPoints { .. })
        ));
    }

    #[test]
    fn downsample_subset_and_determinism() {
        let oracle = square_oracle();
        let cfg = SamplerConfig::for_oracle(&oracle, 1000, 7);
        let m = generate_manifold(&oracle, &cfg).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = downsample(&m, 200, &mut rng).unwrap();
        assert_eq!(d.len(), 200);
        let parent: std::collections::HashSet<_> =
            m.points.iter().map(|p| format!("{}", p.pose)).collect();
        for p in &d.points {
            assert!(parent.contains(&format!("{}", p.pose)));
        }

        let mut rng2 = ChaCha8Rng::seed_from_u64(1);
        let d2 = downsample(&m, 200, &mut rng2).unwrap();
        assert_eq!(d, d2);

        // n = len keeps the whole set
        let mut rng3 = ChaCha8Rng::seed_from_u64(2);
        let full = downsample(&m, m.len(), &mut rng3).unwrap();
        assert_eq!(full.poses(), m.poses());

        let mut rng4 = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(
            downsample(&m, m.len() + 1, &mut rng4),
            Err(ManifoldError::InvalidCount { .. })
        ));
    }

    #[test]
    fn manifold_file_round_trip() {
        let oracle = square_oracle();
        let cfg = SamplerConfig::for_oracle(&oracle, 1000, 9);
        let m = generate_manifold(&oracle, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.cmanifold");
        save_manifold(&m, &path).unwrap();
        let loaded = load_manifold(&path).unwrap();
        assert_eq!(loaded, m);
    }

    #[test]
    fn malformed_manifold_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.cmanifold");

        std::fs::write(&path, "CMANIFOLD v99\n").unwrap();
        assert!(matches!(
            load_manifold(&path),
            Err(ManifoldError::Version { .. })
        ));

        // truncated: header declares more records than present
        std::fs::write(
            &path,
            "CMANIFOLD v1\ngeometry: square\ncount: 2\n0 0 0 0 0 0 1 0 0 0 0 0\n",
        )
        .unwrap();
        assert!(matches!(
            load_manifold(&path),
            Err(ManifoldError::Format { .. })
        ));

        // short record
        std::fs::write(
            &path,
            "CMANIFOLD v1\ngeometry: square\ncount: 1\n0 0 0 0 0 0 1 0\n",
        )
        .unwrap();
        assert!(matches!(
            load_manifold(&path),
            Err(ManifoldError::Format { line: 4, .. })
        ));
    }
}
