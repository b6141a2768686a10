//! Contact manifold registration: iteratively align an observed contact
//! submanifold (agent frame) with the reference manifold (hole frame) to
//! estimate the hole pose.
//!
//! Each iteration matches every observation to its nearest reference point,
//! projects the point-to-point misalignment onto the local normals of both
//! surfaces (symmetric point-to-plane), aggregates the per-point updates
//! with the SE(3) mean, and applies the aggregate to the pose estimate and
//! the observations. Observation normals are recomputed every iteration
//! because they are not invariant under the alignment updates. Multiple
//! restarts from Gaussian-perturbed initializations are averaged into the
//! final estimate.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::manifold::ContactManifold;
use crate::nn::NnIndex;
use crate::pose::{
    compose, embed, inverse, relative, sample_gaussian, se3_mean, unembed, MetricScale, Pose6,
    Vec6,
};
use crate::stream_rng;

#[derive(Debug, Error)]
pub enum RegistrationError {
    #[error("empty manifold")]
    EmptyManifold,
    #[error("insufficient observations: {count} <= k_normals = {k}")]
    InsufficientObservations { count: usize, k: usize },
    #[error("normal is not unit length (|n| = {0})")]
    InvalidNormal(f64),
}

/// How the per-correspondence misalignment vector is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CorrespondenceMode {
    /// The relative pose `inverse(obs) ⊗ ref` as a 6-vector, expressed in
    /// the observed pose's local frame.
    Se3Relative,
    /// `embed(ref) - embed(obs)`: componentwise difference in the shared
    /// frame. Agrees with `Se3Relative` to first order.
    VectorDifference,
}

impl std::str::FromStr for CorrespondenceMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "se3-relative" => Ok(Self::Se3Relative),
            "vector-difference" => Ok(Self::VectorDifference),
            other => Err(format!(
                "unknown correspondence mode {other:?} (expected se3-relative or vector-difference)"
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RegistrationConfig {
    /// Iteration cap per restart.
    pub max_iters: usize,
    /// Neighborhood size for observation normal estimation.
    pub k_normals: usize,
    pub scale: MetricScale,
    /// Number of restarts; restart 0 uses the provided initialization.
    pub restarts: usize,
    pub restart_sigma_pos: f64,
    pub restart_sigma_rot: f64,
    /// Stop once the embedded norm of the aggregate update falls below this.
    pub early_stop: f64,
    pub mode: CorrespondenceMode,
    /// Fraction of worst restarts (by final correspondence distance) to
    /// drop before averaging; 0 keeps the plain SE(3) mean.
    pub trim_fraction: f64,
    pub seed: u64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            max_iters: 60,
            k_normals: 12,
            scale: MetricScale::default(),
            restarts: 8,
            restart_sigma_pos: 1.0,
            restart_sigma_rot: 1.0,
            early_stop: 1e-5,
            mode: CorrespondenceMode::Se3Relative,
            trim_fraction: 0.0,
            seed: 0,
        }
    }
}

/// Estimate plus per-restart diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct RegistrationResult {
    pub estimate: Pose6,
    pub restart_estimates: Vec<Pose6>,
    /// Mean nearest-correspondence distance per iteration, per restart.
    pub traces: Vec<Vec<f64>>,
    pub iterations: Vec<usize>,
    pub wall_ms: f64,
}

/// Misalignment between an observation and its reference correspondence.
pub fn point_misalignment(
    obs: &Pose6,
    reference: &Pose6,
    mode: CorrespondenceMode,
    scale: MetricScale,
) -> Vec6 {
    match mode {
        CorrespondenceMode::Se3Relative => embed(&relative(obs, reference), scale),
        CorrespondenceMode::VectorDifference => embed(reference, scale) - embed(obs, scale),
    }
}

/// Symmetric point-to-plane projection: the average of the misalignment
/// projected onto the reference normal and onto the observation normal.
pub fn symmetric_update(delta: &Vec6, n_q: &Vec6, n_p: &Vec6) -> Result<Vec6, RegistrationError> {
    for n in [n_q, n_p] {
        let len = n.norm();
        if (len - 1.0).abs() > 1e-9 {
            return Err(RegistrationError::InvalidNormal(len));
        }
    }
    Ok(0.5 * (delta.dot(n_q) * n_q + delta.dot(n_p) * n_p))
}

/// One registration loop from a single initialization. Returns the final
/// estimate and the mean-correspondence-distance trace.
pub fn register_once(
    manifold: &ContactManifold,
    observations: &[Pose6],
    init: &Pose6,
    cfg: &RegistrationConfig,
) -> Result<(Pose6, Vec<f64>), RegistrationError> {
    let reference = ReferenceIndex::build(manifold, cfg.scale)?;
    register_once_indexed(&reference, observations, init, cfg)
}

/// Reference-side state shared across restarts: the NN index over embedded
/// manifold poses and their normals.
pub struct ReferenceIndex {
    index: NnIndex,
    poses: Vec<Pose6>,
    normals: Vec<Vec6>,
}

impl ReferenceIndex {
    pub fn build(
        manifold: &ContactManifold,
        scale: MetricScale,
    ) -> Result<Self, RegistrationError> {
        if manifold.is_empty() {
            return Err(RegistrationError::EmptyManifold);
        }
        let poses = manifold.poses();
        let index = NnIndex::build(&poses, scale).map_err(|_| RegistrationError::EmptyManifold)?;
        let normals = manifold.points.iter().map(|p| p.normal).collect();
        Ok(Self {
            index,
            poses,
            normals,
        })
    }
}

fn register_once_indexed(
    reference: &ReferenceIndex,
    observations: &[Pose6],
    init: &Pose6,
    cfg: &RegistrationConfig,
) -> Result<(Pose6, Vec<f64>), RegistrationError> {
    if observations.len() <= cfg.k_normals {
        return Err(RegistrationError::InsufficientObservations {
            count: observations.len(),
            k: cfg.k_normals,
        });
    }
    let scale = cfg.scale;

    // initial alignment into the estimated hole frame
    let init_inv = inverse(init);
    let mut obs: Vec<Pose6> = observations.iter().map(|p| compose(&init_inv, p)).collect();
    let mut estimate = *init;
    let mut trace = Vec::with_capacity(cfg.max_iters);

    for _ in 0..cfg.max_iters {
        let embedded: Vec<Vec6> = obs.iter().map(|p| embed(p, scale)).collect();
        // observation normals are recomputed every iteration
        let obs_normals = local_normals(&embedded, cfg.k_normals, scale);

        let mut updates = Vec::with_capacity(obs.len());
        let mut dist_sum = 0.0;
        for (i, q) in embedded.iter().enumerate() {
            let (j, d2) = reference.index.nearest(q);
            dist_sum += d2.sqrt();
            let delta = point_misalignment(&obs[i], &reference.poses[j], cfg.mode, scale);
            let step = symmetric_update(&delta, &reference.normals[j], &obs_normals[i])?;
            updates.push(unembed(&step, scale));
        }
        trace.push(dist_sum / obs.len() as f64);

        // The per-point updates are local-frame misalignments pointing from
        // the observations toward the manifold. Their SE(3) mean is a
        // representative misalignment at the observation centroid, so it is
        // conjugated by the centroid translation to become a hole-frame
        // increment; without this the rotational moment arm about the frame
        // origin is double-counted and tilt convergence stalls.
        let mean_update = se3_mean(&updates).expect("non-empty updates");
        let n = obs.len() as f64;
        let centroid = Pose6::translation(
            obs.iter().map(|p| p.x).sum::<f64>() / n,
            obs.iter().map(|p| p.y).sum::<f64>() / n,
            obs.iter().map(|p| p.z).sum::<f64>() / n,
        );
        let centroid_inv = inverse(&centroid);
        let increment = compose(&centroid, &compose(&inverse(&mean_update), &centroid_inv));
        estimate = compose(&estimate, &increment);
        let increment_inv = inverse(&increment);
        for p in obs.iter_mut() {
            *p = compose(&increment_inv, p);
        }
        if embed(&increment, scale).norm() < cfg.early_stop {
            break;
        }
    }
    Ok((estimate, trace))
}

/// Local 6-D normals of a point set by covariance of the k nearest
/// neighbors, smallest-eigenvalue eigenvector.
fn local_normals(embedded: &[Vec6], k: usize, scale: MetricScale) -> Vec<Vec6> {
    let index = NnIndex::from_embedded(embedded.to_vec(), scale).expect("non-empty observations");
    embedded
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let neighbors = index.knn(q, k + 1);
            let mut cov = nalgebra::Matrix6::zeros();
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
            n
        })
        .collect()
}

/// Multi-start registration: restart 0 runs from `init` exactly, the rest
/// from Gaussian perturbations of it; the final estimate is the SE(3) mean
/// of the restart estimates. Restarts execute in parallel; the result is
/// deterministic per seed regardless of scheduling.
pub fn register(
    manifold: &ContactManifold,
    observations: &[Pose6],
    init: &Pose6,
    cfg: &RegistrationConfig,
) -> Result<RegistrationResult, RegistrationError> {
    let t0 = std::time::Instant::now();
    let reference = ReferenceIndex::build(manifold, cfg.scale)?;

    // draw every restart init up front so parallelism cannot reorder draws
    let mut rng = stream_rng(cfg.seed, 0);
    let inits: Vec<Pose6> = (0..cfg.restarts.max(1))
        .map(|r| {
            if r == 0 {
                *init
            } else {
                sample_gaussian(init, cfg.restart_sigma_pos, cfg.restart_sigma_rot, &mut rng)
            }
        })
        .collect();

    let runs: Vec<Result<(Pose6, Vec<f64>), RegistrationError>> = inits
        .par_iter()
        .map(|start| register_once_indexed(&reference, observations, start, cfg))
        .collect();

    let mut restart_estimates = Vec::with_capacity(runs.len());
    let mut traces = Vec::with_capacity(runs.len());
    let mut iterations = Vec::with_capacity(runs.len());
    for run in runs {
        let (estimate, trace) = run?;
        restart_estimates.push(estimate);
        iterations.push(trace.len());
        traces.push(trace);
    }

    let estimate = if cfg.trim_fraction > 0.0 && restart_estimates.len() > 1 {
        // outlier trimming: drop the restarts farthest from the
        // componentwise median of the restart estimates
        let embedded: Vec<Vec6> = restart_estimates.iter().map(|p| embed(p, cfg.scale)).collect();
        let mut median = Vec6::zeros();
        for d in 0..6 {
            let mut vals: Vec<f64> = embedded.iter().map(|v| v[d]).collect();
            vals.sort_by(f64::total_cmp);
            median[d] = vals[vals.len() / 2];
        }
        let drop = ((restart_estimates.len() as f64) * cfg.trim_fraction).ceil() as usize;
        let keep = restart_estimates.len().saturating_sub(drop).max(1);
        let mut ranked: Vec<usize> = (0..restart_estimates.len()).collect();
        ranked.sort_by(|&a, &b| {
            let da = (embedded[a] - median).norm();
            let db = (embedded[b] - median).norm();
            da.total_cmp(&db).then(a.cmp(&b))
        });
        let kept: Vec<Pose6> = ranked[..keep].iter().map(|&i| restart_estimates[i]).collect();
        se3_mean(&kept).expect("non-empty restarts")
    } else {
        se3_mean(&restart_estimates).expect("non-empty restarts")
    };

    Ok(RegistrationResult {
        estimate,
        restart_estimates,
        traces,
        iterations,
        wall_ms: t0.elapsed().as_secs_f64() * 1e3,
    })
}
