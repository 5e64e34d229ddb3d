//! Rigid-body helpers shared by the odometry backend and the evaluation
//! metrics.

use nalgebra::{Isometry3, Matrix3, Matrix4, Quaternion, Translation3, UnitQuaternion, Vector3};

use crate::cloud::Point3;

/// Timestamped SE(3) pose (sensor-to-world).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub timestamp: f64,
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn identity(timestamp: f64) -> Self {
        Pose {
            timestamp,
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_isometry(timestamp: f64, iso: &Isometry3<f64>) -> Self {
        Pose {
            timestamp,
            rotation: iso.rotation,
            translation: iso.translation.vector,
        }
    }

    pub fn isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.translation), self.rotation)
    }
}

/// Relative eigenvalue below which a point set counts as collinear.
const COLLINEAR_TOLERANCE: f64 = 1e-9;

/// Closed-form rigid transform `T` (no scale) minimizing
/// `Σ |T·source_i − target_i|²`, via the unit-quaternion eigenvector
/// method. `None` for fewer than three pairs or collinear input.
pub fn rigid_fit(source: &[Point3], target: &[Point3]) -> Option<Isometry3<f64>> {
    assert_eq!(source.len(), target.len(), "rigid_fit needs paired points");
    let n = source.len();
    if n < 3 {
        return None;
    }
    let inv_n = 1.0 / n as f64;
    let mu_s = source.iter().fold(Vector3::zeros(), |a, p| a + p.coords) * inv_n;
    let mu_t = target.iter().fold(Vector3::zeros(), |a, p| a + p.coords) * inv_n;
    let mut m = Matrix3::zeros();
    let mut spread = Matrix3::zeros();
    for (s, t) in source.iter().zip(target) {
        let ds = s.coords - mu_s;
        m += ds * (t.coords - mu_t).transpose();
        spread += ds * ds.transpose();
    }
    let mut ev: Vec<f64> = spread.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    if !(ev[0] > 0.0) || ev[1] <= COLLINEAR_TOLERANCE * ev[0] {
        return None;
    }
    let (sxx, sxy, sxz) = (m[(0, 0)], m[(0, 1)], m[(0, 2)]);
    let (syx, syy, syz) = (m[(1, 0)], m[(1, 1)], m[(1, 2)]);
    let (szx, szy, szz) = (m[(2, 0)], m[(2, 1)], m[(2, 2)]);
    #[rustfmt::skip]
    let k = Matrix4::new(
        sxx + syy + szz, syz - szy,       szx - sxz,        sxy - syx,
        syz - szy,       sxx - syy - szz, sxy + syx,        szx + sxz,
        szx - sxz,       sxy + syx,       -sxx + syy - szz, syz + szy,
        sxy - syx,       szx + sxz,       syz + szy,        -sxx - syy + szz,
    );
    let eig = k.symmetric_eigen();
    let best = eig.eigenvalues.imax();
    let q = eig.eigenvectors.column(best);
    let rotation = UnitQuaternion::new_normalize(Quaternion::new(q[0], q[1], q[2], q[3]));
    let translation = mu_t - rotation * mu_s;
    if !(translation.iter().all(|v| v.is_finite()) && rotation.coords.iter().all(|v| v.is_finite())) {
        return None;
    }
    Some(Isometry3::from_parts(Translation3::from(translation), rotation))
}
