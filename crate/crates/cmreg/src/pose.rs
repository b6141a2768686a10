//! 6-D pose algebra: composition, inversion, Euclidean embedding, SE(3)
//! averaging and Gaussian sampling.
//!
//! Poses are stored as millimetres and degrees. The Euler convention is
//! extrinsic X-Y-Z, i.e. `R = Rz(gamma) * Ry(beta) * Rx(alpha)`; radians only
//! appear inside the rotation-matrix conversions.

use nalgebra::{
    Isometry3, Matrix4, Quaternion, Translation3, UnitQuaternion, Vector3, Vector4, Vector6,
};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A point in 6-D pose-component space: `(x, y, z)` in mm followed by three
/// angular components (degrees, possibly scaled by a [`MetricScale`]).
pub type Vec6 = Vector6<f64>;

/// Beta magnitudes at or beyond this are rejected as gimbal-locked.
pub const GIMBAL_GUARD_DEG: f64 = 89.0;

#[derive(Debug, Error)]
pub enum PoseError {
    #[error("empty input: at least one pose is required")]
    EmptyInput,
    #[error("gimbal lock: |beta| = {0} deg is inside the +/-{GIMBAL_GUARD_DEG} deg guard band")]
    GimbalLock(f64),
    #[error("malformed pose {0:?}: expected 6 numbers")]
    Parse(String),
}

/// Scaling applied to angular components when embedding poses into R^6,
/// in mm per degree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricScale {
    pub rot_scale: f64,
}

impl MetricScale {
    pub fn new(rot_scale: f64) -> Self {
        assert!(
            rot_scale > 0.0,
            "rot_scale must be positive, got {rot_scale}"
        );
        Self { rot_scale }
    }
}

impl Default for MetricScale {
    fn default() -> Self {
        Self { rot_scale: 1.0 }
    }
}

/// A rigid transform as position (mm) plus extrinsic X-Y-Z Euler angles
/// (degrees, normalized to `(-180, 180]`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose6 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

/// Wraps an angle in degrees to `(-180, 180]`.
pub fn wrap_deg(a: f64) -> f64 {
    let r = (a + 180.0).rem_euclid(360.0) - 180.0;
    if r == -180.0 {
        180.0
    } else {
        r
    }
}

impl Pose6 {
    pub fn new(x: f64, y: f64, z: f64, alpha: f64, beta: f64, gamma: f64) -> Self {
        Self {
            x,
            y,
            z,
            alpha: wrap_deg(alpha),
            beta: wrap_deg(beta),
            gamma: wrap_deg(gamma),
        }
    }

    pub fn identity() -> Self {
        Self::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    }

    pub fn translation(x: f64, y: f64, z: f64) -> Self {
        Self::new(x, y, z, 0.0, 0.0, 0.0)
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_euler_angles(
            self.alpha.to_radians(),
            self.beta.to_radians(),
            self.gamma.to_radians(),
        )
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::new(self.x, self.y, self.z), self.rotation())
    }

    /// Total conversion back from an isometry. Near the |beta| = 90 deg
    /// singularity the Euler split is not unique; callers that must reject
    /// that region use [`Pose6::try_from_isometry`].
    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        let (roll, pitch, yaw) = iso.rotation.euler_angles();
        let t = iso.translation.vector;
        Self::new(
            t.x,
            t.y,
            t.z,
            roll.to_degrees(),
            pitch.to_degrees(),
            yaw.to_degrees(),
        )
    }

    pub fn try_from_isometry(iso: &Isometry3<f64>) -> Result<Self, PoseError> {
        let pose = Self::from_isometry(iso);
        if pose.beta.abs() >= GIMBAL_GUARD_DEG {
            return Err(PoseError::GimbalLock(pose.beta.abs()));
        }
        Ok(pose)
    }

    /// Parses six numbers separated by commas and/or whitespace, rejecting
    /// gimbal-locked orientations.
    pub fn parse(s: &str) -> Result<Self, PoseError> {
        let parts: Vec<f64> = s
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|p| !p.is_empty())
            .map(|p| p.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| PoseError::Parse(s.to_string()))?;
        if parts.len() != 6 {
            return Err(PoseError::Parse(s.to_string()));
        }
        let pose = Self::new(parts[0], parts[1], parts[2], parts[3], parts[4], parts[5]);
        if pose.beta.abs() >= GIMBAL_GUARD_DEG {
            return Err(PoseError::GimbalLock(pose.beta.abs()));
        }
        Ok(pose)
    }

    pub fn components(&self) -> [f64; 6] {
        [self.x, self.y, self.z, self.alpha, self.beta, self.gamma]
    }
}

impl std::fmt::Display for Pose6 {
    /// Space-separated shortest round-trip decimals, the text form used by
    /// every file format in this crate.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {} {} {} {} {}",
            self.x, self.y, self.z, self.alpha, self.beta, self.gamma
        )
    }
}

/// Homogeneous-matrix product: `M(compose(a, b)) = M(a) * M(b)`.
pub fn compose(a: &Pose6, b: &Pose6) -> Pose6 {
    Pose6::from_isometry(&(a.to_isometry() * b.to_isometry()))
}

pub fn inverse(t: &Pose6) -> Pose6 {
    Pose6::from_isometry(&t.to_isometry().inverse())
}

/// `inverse(a) ⊗ b`: the transform of `b` expressed in `a`'s frame.
pub fn relative(a: &Pose6, b: &Pose6) -> Pose6 {
    Pose6::from_isometry(&(a.to_isometry().inverse() * b.to_isometry()))
}

/// Embeds a pose into R^6, scaling the angular components by
/// `scale.rot_scale` so Euclidean distance mixes mm and degrees coherently.
pub fn embed(t: &Pose6, scale: MetricScale) -> Vec6 {
    Vec6::new(
        t.x,
        t.y,
        t.z,
        scale.rot_scale * t.alpha,
        scale.rot_scale * t.beta,
        scale.rot_scale * t.gamma,
    )
}

/// Inverse of [`embed`]; exact for angular components within +/-180 deg.
pub fn unembed(v: &Vec6, scale: MetricScale) -> Pose6 {
    Pose6::new(
        v[0],
        v[1],
        v[2],
        v[3] / scale.rot_scale,
        v[4] / scale.rot_scale,
        v[5] / scale.rot_scale,
    )
}

/// SE(3) mean: arithmetic mean of positions and chordal mean of rotations
/// (largest eigenvector of the sign-aligned quaternion outer-product
/// accumulator). Deterministic for a fixed input order.
pub fn se3_mean(poses: &[Pose6]) -> Result<Pose6, PoseError> {
    if poses.is_empty() {
        return Err(PoseError::EmptyInput);
    }
    let n = poses.len() as f64;
    let mut pos = Vector3::zeros();
    let q0 = quat_vec(&poses[0].rotation());
    let mut acc = Matrix4::zeros();
    for p in poses {
        pos += p.position();
        let mut q = quat_vec(&p.rotation());
        if q.dot(&q0) < 0.0 {
            q = -q;
        }
        acc += q * q.transpose();
    }
    pos /= n;

    let eig = nalgebra::linalg::SymmetricEigen::new(acc);
    let mut imax = 0;
    for i in 1..4 {
        if eig.eigenvalues[i] > eig.eigenvalues[imax] {
            imax = i;
        }
    }
    let mut v: Vector4<f64> = eig.eigenvectors.column(imax).into_owned();
    if v.dot(&q0) < 0.0 {
        v = -v;
    }
    let rot = UnitQuaternion::from_quaternion(Quaternion::new(v[0], v[1], v[2], v[3]));
    Ok(Pose6::from_isometry(&Isometry3::from_parts(
        Translation3::from(pos),
        rot,
    )))
}

/// `mean ⊗ p` with `p` drawn componentwise from zero-mean normals. Zero
/// sigmas return `mean` unchanged.
pub fn sample_gaussian<R: Rng + ?Sized>(
    mean: &Pose6,
    sigma_pos: f64,
    sigma_rot: f64,
    rng: &mut R,
) -> Pose6 {
    assert!(sigma_pos >= 0.0 && sigma_rot >= 0.0, "sigmas must be >= 0");
    let mut draw = [0.0; 6];
    for (i, d) in draw.iter_mut().enumerate() {
        let z: f64 = rng.sample(StandardNormal);
        *d = z * if i < 3 { sigma_pos } else { sigma_rot };
    }
    if draw.iter().all(|&d| d == 0.0) {
        return *mean;
    }
    let perturbation = Pose6::new(draw[0], draw[1], draw[2], draw[3], draw[4], draw[5]);
    compose(mean, &perturbation)
}

/// Componentwise signed error of `relative(truth, estimate)` as
/// `(dx, dy, dz, dalpha, dbeta, dgamma)` in mm and degrees.
pub fn pose_error(estimate: &Pose6, truth: &Pose6) -> Vec6 {
    let r = relative(truth, estimate);
    Vec6::new(r.x, r.y, r.z, r.alpha, r.beta, r.gamma)
}

fn quat_vec(q: &UnitQuaternion<f64>) -> Vector4<f64> {
    Vector4::new(q.w, q.i, q.j, q.k)
}
