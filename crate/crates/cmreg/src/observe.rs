//! Online-phase simulation: drive an exploration primitive against the
//! contact oracle under a hidden hole pose and collect the contact poses the
//! robot would have recorded.
//!
//! Compliance is emulated quasi-statically: each commanded waypoint that
//! would penetrate is pulled back along the commanded motion direction to
//! the deepest non-penetrating pose, and kept as an observation when that
//! pose classifies as contact.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use thiserror::Error;

use crate::geometry::{ContactClass, ContactOracle, GeometrySpec};
use crate::pose::{compose, embed, relative, sample_gaussian, unembed, MetricScale, Pose6};
use crate::stream_rng;

/// Below this many raw contacts the k-NN normal estimation downstream is
/// degenerate, so collection fails instead.
pub const MIN_CONTACTS: usize = 20;

const MAX_BISECT: usize = 40;
/// rng stream ids carved out of the config seed
const TRAJECTORY_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;

#[derive(Debug, Error)]
pub enum ObserveError {
    #[error("insufficient contacts: {found} in budget, need at least {MIN_CONTACTS}")]
    InsufficientContacts { found: usize },
    #[error("start pose is not free at partial insertion")]
    StartNotFree,
    #[error("invalid exploration config: {0}")]
    InvalidConfig(String),
    #[error("observation file line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("unsupported observation file version {found:?} (expected \"COBS v1\")")]
    Version { found: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Amplitude set for one exploration phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseAmplitudes {
    /// Spiral radius growth, mm per turn.
    pub spiral_growth: f64,
    /// Spiral turn rate, turns per second.
    pub turn_rate: f64,
    /// Spiral radius cap, mm.
    pub max_radius: f64,
    /// Angular oscillation amplitudes (alpha, beta, gamma), degrees.
    pub rot_amp: [f64; 3],
    /// Angular oscillation frequencies, Hz.
    pub rot_freq: [f64; 3],
}

impl PhaseAmplitudes {
    fn fits_under(&self, other: &PhaseAmplitudes) -> bool {
        self.spiral_growth <= other.spiral_growth
            && self.max_radius <= other.max_radius
            && self
                .rot_amp
                .iter()
                .zip(other.rot_amp.iter())
                .all(|(a, b)| a <= b)
    }
}

/// Two-phase exploration primitive parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationConfig {
    /// Observation budget, seconds.
    pub t_obs: f64,
    /// Waypoints per second.
    pub step_rate: f64,
    pub phase1: PhaseAmplitudes,
    pub phase2: PhaseAmplitudes,
    /// Insertion depth at the start pose, mm.
    pub start_depth: f64,
    /// Phase-1 terminates once the commanded depth reaches this, mm.
    pub target_depth: f64,
    /// Phase-1 descent rate, mm per second.
    pub descent_rate: f64,
    /// Retained observation count after temporal downsampling.
    pub n_obs: usize,
    /// Measurement noise applied to kept poses.
    pub sigma_pos: f64,
    pub sigma_rot: f64,
    /// Uniform per-waypoint command perturbation.
    pub jitter_pos: f64,
    pub jitter_rot: f64,
    /// Amplitudes reach full size after this many seconds of execution.
    pub ramp_time: f64,
    pub seed: u64,
}

impl ExplorationConfig {
    /// Defaults scaled to a geometry's clearance and depths.
    ///
    /// The primitive spends most of the budget descending slowly while
    /// spiraling fast against the walls; the commanded amplitudes
    /// deliberately overshoot the feasible window so compliance saturates
    /// at the contact limits, and heavy per-waypoint perturbation keeps
    /// consecutive contacts decorrelated. The target depth deepens with
    /// the budget: longer collection reaches the more constrained, more
    /// discriminative deep strata and widens the retained sample spread.
    pub fn for_geometry(spec: &GeometrySpec, t_obs: f64, seed: u64) -> Self {
        let clearance = spec.clearance;
        let start_depth = 0.30 * spec.hole_depth;
        let target_frac = (0.62 + 0.02 * (t_obs - 10.0)).clamp(0.4, 0.7);
        let target_depth = target_frac * spec.hole_depth;
        let half_width = spec
            .peg_section
            .outer()
            .iter()
            .map(|p| p.coords.norm())
            .fold(0.0, f64::max);
        let tilt = (clearance / start_depth).atan().to_degrees();
        let spin = (clearance / half_width).atan().to_degrees();
        let phase1 = PhaseAmplitudes {
            spiral_growth: clearance * 0.5,
            turn_rate: 21.7,
            max_radius: clearance,
            rot_amp: [2.4 * tilt, 2.4 * tilt, 2.4 * spin],
            rot_freq: [8.4, 12.1, 6.5],
        };
        let phase2 = PhaseAmplitudes {
            spiral_growth: clearance * 0.25,
            turn_rate: 21.7,
            max_radius: clearance * 0.5,
            rot_amp: [1.2 * tilt, 1.2 * tilt, 1.2 * spin],
            rot_freq: [8.4, 12.1, 6.5],
        };
        Self {
            t_obs,
            step_rate: 50.0,
            phase1,
            phase2,
            start_depth,
            target_depth,
            descent_rate: (target_depth - start_depth) / (0.9 * t_obs),
            n_obs: 300,
            sigma_pos: 0.05,
            sigma_rot: 0.05,
            jitter_pos: 0.5 * clearance,
            jitter_rot: 1.0 * tilt,
            ramp_time: 10.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), ObserveError> {
        if self.t_obs <= 0.0 {
            return Err(ObserveError::InvalidConfig("t_obs must be positive".into()));
        }
        if self.step_rate <= 0.0 {
            return Err(ObserveError::InvalidConfig(
                "step_rate must be positive".into(),
            ));
        }
        if self.n_obs < MIN_CONTACTS {
            return Err(ObserveError::InvalidConfig(format!(
                "n_obs must be at least {MIN_CONTACTS}"
            )));
        }
        if !self.phase2.fits_under(&self.phase1) {
            return Err(ObserveError::InvalidConfig(
                "phase-2 amplitudes must not exceed phase 1".into(),
            ));
        }
        if self.sigma_pos < 0.0 || self.sigma_rot < 0.0 {
            return Err(ObserveError::InvalidConfig("noise sigmas must be >= 0".into()));
        }
        Ok(())
    }

    pub fn start_pose(&self) -> Pose6 {
        Pose6::translation(0.0, 0.0, -self.start_depth)
    }
}

/// Commanded waypoints of the two-phase primitive in the hole frame.
/// Waypoint 0 is the start pose; the spiral radius within each phase is
/// monotonically non-decreasing. Deterministic per seed.
pub fn exploration_trajectory(cfg: &ExplorationConfig) -> Vec<Pose6> {
    use rand::Rng;
    let n = (cfg.t_obs * cfg.step_rate).round() as usize;
    let mut rng = stream_rng(cfg.seed, TRAJECTORY_STREAM);
    let mut waypoints = Vec::with_capacity(n);
    waypoints.push(cfg.start_pose());

    let mut osc_phase: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.0..std::f64::consts::TAU));
    let mut in_phase2 = false;
    let mut phase_t0 = 0.0;

    for i in 1..n {
        let t = i as f64 / cfg.step_rate;
        let mut depth = cfg.start_depth + cfg.descent_rate * t;
        if depth >= cfg.target_depth && !in_phase2 {
            in_phase2 = true;
            phase_t0 = t;
            osc_phase = std::array::from_fn(|_| rng.gen_range(0.0..std::f64::consts::TAU));
        }
        if in_phase2 {
            depth = cfg.target_depth;
        }
        let amp = if in_phase2 { &cfg.phase2 } else { &cfg.phase1 };
        let ramp = 0.5 + 0.5 * (t / cfg.ramp_time).min(1.0);
        let tp = t - phase_t0;

        let turns = amp.turn_rate * tp;
        let radius = (amp.spiral_growth * turns).min(amp.max_radius * ramp);
        let angle = std::f64::consts::TAU * turns;
        let mut x = radius * angle.cos() + rng.gen_range(-cfg.jitter_pos..=cfg.jitter_pos);
        let mut y = radius * angle.sin() + rng.gen_range(-cfg.jitter_pos..=cfg.jitter_pos);
        let r_jittered = (x * x + y * y).sqrt();
        if r_jittered > amp.max_radius {
            let s = amp.max_radius / r_jittered;
            x *= s;
            y *= s;
        }
        let mut euler = [0.0; 3];
        for (j, e) in euler.iter_mut().enumerate() {
            *e = ramp
                * amp.rot_amp[j]
                * (std::f64::consts::TAU * amp.rot_freq[j] * tp + osc_phase[j]).sin()
                + rng.gen_range(-cfg.jitter_rot..=cfg.jitter_rot);
        }
        waypoints.push(Pose6::new(x, y, -depth, euler[0], euler[1], euler[2]));
    }
    waypoints
}

/// Moves from `from` toward `to`; if `to` penetrates, backs off along the
/// motion direction to the deepest non-penetrating pose. Returns the
/// resulting pose and, when it classifies as contact, the observation.
pub(crate) fn comply(
    oracle: &ContactOracle,
    from: &Pose6,
    to: &Pose6,
) -> (Pose6, Option<Pose6>) {
    let end_class = oracle.class_of(to);
    if end_class != ContactClass::Penetrating {
        return (*to, (end_class == ContactClass::Contact).then_some(*to));
    }
    // the interpolation parameterization is scale-free
    let scale = MetricScale::default();
    let delta = embed(&relative(from, to), scale);
    let pose_at = |s: f64| compose(from, &unembed(&(delta * s), scale));
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..MAX_BISECT {
        let mid = 0.5 * (lo + hi);
        let p = pose_at(mid);
        match oracle.class_of(&p) {
            ContactClass::Penetrating => hi = mid,
            ContactClass::Contact => return (p, Some(p)),
            ContactClass::Free => lo = mid,
        }
    }
    // no contact band along this segment (e.g. a floor-only approach)
    let p = pose_at(lo);
    let obs = (oracle.class_of(&p) == ContactClass::Contact).then_some(p);
    (p, obs)
}

/// Walks the exploration trajectory under compliance and returns every
/// contact pose in hole-frame order.
pub(crate) fn collect_contacts(
    oracle: &ContactOracle,
    cfg: &ExplorationConfig,
) -> Result<Vec<Pose6>, ObserveError> {
    let waypoints = exploration_trajectory(cfg);
    let start = waypoints[0];
    if oracle.class_of(&start) != ContactClass::Free {
        return Err(ObserveError::StartNotFree);
    }
    let mut actual = start;
    let mut contacts = Vec::new();
    for w in &waypoints[1..] {
        let (next, obs) = comply(oracle, &actual, w);
        actual = next;
        if let Some(c) = obs {
            contacts.push(c);
        }
    }
    Ok(contacts)
}

/// The observed contact submanifold in the agent frame, plus the hidden
/// truth retained for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub poses: Vec<Pose6>,
    /// Hidden from the estimator; `None` for blind files.
    pub true_hole_pose: Option<Pose6>,
    pub geometry: String,
    pub seed: u64,
    pub t_obs: f64,
    pub n_obs: usize,
    pub sigma_pos: f64,
    pub sigma_rot: f64,
}

/// Runs the exploration primitive against the oracle with the hole fixed at
/// `true_hole_pose`, filters contacts, adds measurement noise, maps the kept
/// poses into the agent frame and temporally downsamples to `cfg.n_obs`.
pub fn simulate_observations(
    oracle: &ContactOracle,
    true_hole_pose: &Pose6,
    cfg: &ExplorationConfig,
) -> Result<ObservationSet, ObserveError> {
    cfg.validate()?;
    let contacts = collect_contacts(oracle, cfg)?;
    if contacts.len() < MIN_CONTACTS {
        return Err(ObserveError::InsufficientContacts {
            found: contacts.len(),
        });
    }
    let kept = temporal_downsample(&contacts, cfg.n_obs);
    let mut rng = stream_rng(cfg.seed, NOISE_STREAM);
    let poses = kept
        .iter()
        .map(|p| {
            let noisy = sample_gaussian(p, cfg.sigma_pos, cfg.sigma_rot, &mut rng);
            compose(true_hole_pose, &noisy)
        })
        .collect();
    Ok(ObservationSet {
        poses,
        true_hole_pose: Some(*true_hole_pose),
        geometry: oracle.spec().name.clone(),
        seed: cfg.seed,
        t_obs: cfg.t_obs,
        n_obs: cfg.n_obs,
        sigma_pos: cfg.sigma_pos,
        sigma_rot: cfg.sigma_rot,
    })
}

/// Uniform-stride downsampling that preserves order and keeps both
/// endpoints: indices `round(i * (len-1) / (n-1))`.
pub fn temporal_downsample<T: Clone>(seq: &[T], n: usize) -> Vec<T> {
    assert!(n >= 1, "n must be at least 1");
    if seq.len() <= n {
        return seq.to_vec();
    }
    if n == 1 {
        return vec![seq[0].clone()];
    }
    (0..n)
        .map(|i| {
            let idx = (i as f64 * (seq.len() - 1) as f64 / (n - 1) as f64).round() as usize;
            seq[idx].clone()
        })
        .collect()
}

const OBS_MAGIC: &str = "COBS v1";

/// Writes the observation file; `strip_truth` omits the `eval-only:` line
/// for blind evaluation.
pub fn save_observations(
    set: &ObservationSet,
    path: &Path,
    strip_truth: bool,
) -> Result<(), ObserveError> {
    let mut out = String::new();
    out.push_str(OBS_MAGIC);
    out.push('\n');
    out.push_str(&format!("geometry: {}\n", set.geometry));
    out.push_str(&format!("seed: {}\n", set.seed));
    out.push_str(&format!("t_obs: {}\n", set.t_obs));
    out.push_str(&format!("n_obs: {}\n", set.n_obs));
    out.push_str(&format!("sigma_pos_mm: {}\n", set.sigma_pos));
    out.push_str(&format!("sigma_rot_deg: {}\n", set.sigma_rot));
    if let (false, Some(truth)) = (strip_truth, set.true_hole_pose.as_ref()) {
        out.push_str(&format!("eval-only: {truth}\n"));
    }
    for p in &set.poses {
        out.push_str(&format!("{p}\n"));
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

pub fn load_observations(path: &Path) -> Result<ObservationSet, ObserveError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut lines = reader.lines().enumerate();

    let (_, first) = lines
        .next()
        .ok_or_else(|| ObserveError::Format {
            line: 1,
            msg: "empty file".into(),
        })?;
    let first = first?;
    if first.trim() != OBS_MAGIC {
        return Err(ObserveError::Version { found: first });
    }

    let mut set = ObservationSet {
        poses: Vec::new(),
        true_hole_pose: None,
        geometry: String::new(),
        seed: 0,
        t_obs: 0.0,
        n_obs: 0,
        sigma_pos: 0.0,
        sigma_rot: 0.0,
    };
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: String| ObserveError::Format { line: lineno, msg };
        if let Some((key, value)) = line.split_once(':') {
            let value = value.trim();
            match key.trim() {
                "geometry" => set.geometry = value.to_string(),
                "seed" => set.seed = value.parse().map_err(|e| bad(format!("seed: {e}")))?,
                "t_obs" => set.t_obs = value.parse().map_err(|e| bad(format!("t_obs: {e}")))?,
                "n_obs" => set.n_obs = value.parse().map_err(|e| bad(format!("n_obs: {e}")))?,
                "sigma_pos_mm" => {
                    set.sigma_pos = value.parse().map_err(|e| bad(format!("sigma_pos: {e}")))?
                }
                "sigma_rot_deg" => {
                    set.sigma_rot = value.parse().map_err(|e| bad(format!("sigma_rot: {e}")))?
                }
                "eval-only" => {
                    set.true_hole_pose =
                        Some(Pose6::parse(value).map_err(|e| bad(e.to_string()))?)
                }
                other => return Err(bad(format!("unknown header key {other:?}"))),
            }
        } else {
            set.poses
                .push(Pose6::parse(line).map_err(|e| bad(e.to_string()))?);
        }
    }
    if set.poses.is_empty() {
        return Err(ObserveError::Format {
            line: 0,
            msg: "no observation records".into(),
        });
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::catalog;
    use crate::pose::inverse;

    fn square_oracle() -> ContactOracle {
        ContactOracle::with_default_tolerances(catalog("square").unwrap()).unwrap()
    }

    #[test]
    fn waypoint_count_and_start() {
        let spec = catalog("square").unwrap();
        let cfg = ExplorationConfig::for_geometry(&spec, 6.0, 3);
        let traj = exploration_trajectory(&cfg);
        assert_eq!(traj.len(), 300);
        assert_eq!(traj[0], cfg.start_pose());
    }

    #[test]
    fn phase_two_caps_lateral_amplitude() {
        let spec = catalog("square").unwrap();
        let cfg = ExplorationConfig::for_geometry(&spec, 8.0, 4);
        let traj = exploration_trajectory(&cfg);
        let boundary = traj
            .iter()
            .position(|p| -p.z >= cfg.target_depth - 1e-9)
            .expect("phase boundary reached");
        for p in &traj[boundary..] {
            let r = (p.x * p.x + p.y * p.y).sqrt();
            assert!(r <= cfg.phase2.max_radius + 1e-12, "r = {r}");
            assert!((-p.z - cfg.target_depth).abs() < 1e-9);
        }
    }

    #[test]
    fn spiral_radius_is_monotone_per_phase_without_jitter() {
        let spec = catalog("square").unwrap();
        let mut cfg = ExplorationConfig::for_geometry(&spec, 6.0, 5);
        cfg.jitter_pos = 0.0;
        cfg.jitter_rot = 0.0;
        let traj = exploration_trajectory(&cfg);
        let boundary = traj
            .iter()
            .position(|p| -p.z >= cfg.target_depth - 1e-9)
            .unwrap();
        for seg in [&traj[1..boundary], &traj[boundary..]] {
            let mut last = -1.0;
            for p in seg {
                let r = (p.x * p.x + p.y * p.y).sqrt();
                assert!(r >= last - 1e-12, "radius shrank: {r} < {last}");
                last = r;
            }
        }
    }

    #[test]
    fn trajectory_is_deterministic() {
        let spec = catalog("square").unwrap();
        let cfg = ExplorationConfig::for_geometry(&spec, 6.0, 6);
        assert_eq!(exploration_trajectory(&cfg), exploration_trajectory(&cfg));
    }

    #[test]
    fn temporal_downsample_examples() {
        let seq: Vec<usize> = (0..10).collect();
        assert_eq!(temporal_downsample(&seq, 10), seq);
        assert_eq!(temporal_downsample(&seq, 12), seq);
        let seq: Vec<usize> = (0..5).collect();
        assert_eq!(temporal_downsample(&seq, 2), vec![0, 4]);
        let seq: Vec<usize> = (0..100).collect();
        assert_eq!(temporal_downsample(&seq, 3), vec![0, 50, 99]);
    }

    #[test]
    fn noiseless_observations_all_classify_contact() {
        let oracle = square_oracle();
        let mut cfg = ExplorationConfig::for_geometry(oracle.spec(), 6.0, 7);
        cfg.sigma_pos = 0.0;
        cfg.sigma_rot = 0.0;
        let truth = Pose6::identity();
        let set = simulate_observations(&oracle, &truth, &cfg).unwrap();
        assert!(set.poses.len() >= MIN_CONTACTS);
        for p in &set.poses {
            assert_eq!(oracle.class_of(p), ContactClass::Contact);
        }
    }

    #[test]
    fn observations_map_back_through_the_truth() {
        let oracle = square_oracle();
        let mut cfg = ExplorationConfig::for_geometry(oracle.spec(), 6.0, 8);
        cfg.sigma_pos = 0.0;
        cfg.sigma_rot = 0.0;
        let truth = compose(
            &Pose6::translation(3.0, -2.0, 0.0),
            &Pose6::new(0.0, 0.0, 0.0, 0.0, 0.0, 2.0),
        );
        let set = simulate_observations(&oracle, &truth, &cfg).unwrap();
        let inv = inverse(&truth);
        for p in &set.poses {
            let hole_frame = compose(&inv, p);
            assert_eq!(oracle.class_of(&hole_frame), ContactClass::Contact);
        }
    }

    #[test]
    fn tiny_amplitudes_starve_the_collector() {
        let oracle = square_oracle();
        let mut cfg = ExplorationConfig::for_geometry(oracle.spec(), 6.0, 9);
        let small = PhaseAmplitudes {
            spiral_growth: 0.005,
            turn_rate: 1.5,
            max_radius: 0.01,
            rot_amp: [0.0; 3],
            rot_freq: [0.9, 1.3, 0.7],
        };
        cfg.phase1 = small;
        cfg.phase2 = small;
        cfg.jitter_pos = 0.0;
        cfg.jitter_rot = 0.0;
        assert!(matches!(
            simulate_observations(&oracle, &Pose6::identity(), &cfg),
            Err(ObserveError::InsufficientContacts { .. })
        ));
    }

    #[test]
    fn simulate_is_deterministic() {
        let oracle = square_oracle();
        let cfg = ExplorationConfig::for_geometry(oracle.spec(), 6.0, 10);
        let truth = Pose6::translation(1.0, 2.0, 0.5);
        let a = simulate_observations(&oracle, &truth, &cfg).unwrap();
        let b = simulate_observations(&oracle, &truth, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn observation_file_round_trip_and_strip() {
        let dir = tempfile::tempdir().unwrap();
        let oracle = square_oracle();
        let cfg = ExplorationConfig::for_geometry(oracle.spec(), 6.0, 11);
        let truth = Pose6::translation(1.0, -1.0, 0.0);
        let set = simulate_observations(&oracle, &truth, &cfg).unwrap();

        let path = dir.path().join("obs.cobs");
        save_observations(&set, &path, false).unwrap();
        let loaded = load_observations(&path).unwrap();
        assert_eq!(loaded, set);

        let blind = dir.path().join("blind.cobs");
        save_observations(&set, &blind, true).unwrap();
        let loaded = load_observations(&blind).unwrap();
        assert_eq!(loaded.true_hole_pose, None);
        assert_eq!(loaded.poses, set.poses);
    }

    #[test]
    fn malformed_observation_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.cobs");

        std::fs::write(&path, "COBS v99\ngeometry: square\n").unwrap();
        assert!(matches!(
            load_observations(&path),
            Err(ObserveError::Version { .. })
        ));

        std::fs::write(&path, "COBS v1\ngeometry: square\n1 2 3\n").unwrap();
        assert!(matches!(
            load_observations(&path),
            Err(ObserveError::Format { line: 3, .. })
        ));

        std::fs::write(&path, "COBS v1\ngeometry: square\n").unwrap();
        assert!(matches!(
            load_observations(&path),
            Err(ObserveError::Format { .. })
        ));
    }
}
