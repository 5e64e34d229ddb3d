//! Single-frame dynamic point removal.
//!
//! LiDAR points and radar dynamic points are projected onto the xy plane.
//! Every LiDAR point within `pair_radius` of a radar dynamic point forms a
//! candidate pair; the pair is gated by the Mahalanobis distance under the
//! radar point's planar positional covariance, and LiDAR points passing the
//! gate for any partner are removed.

use std::collections::BTreeSet;

use nalgebra::{Matrix2, Vector2, Vector3};

use crate::cloud::{project_xy, LidarCloud, Point2, PointId, RadarCloud, RadarPoint, SpatialIndex2};
use crate::error::{Error, Result};
use crate::radar::MIN_RANGE;

/// Added to the diagonal of ill-conditioned covariances, m².
pub const COVARIANCE_REGULARIZATION: f64 = 1e-9;
const MAX_COVARIANCE_CONDITION: f64 = 1e12;

/// Radar positional noise: `σ_r = range_coeff·r`,
/// `σ_a = sin(azimuth_angle)·r`, `σ_e = sin(elevation_angle)·r`.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyModel {
    pub range_coeff: f64,
    pub azimuth_angle_deg: f64,
    pub elevation_angle_deg: f64,
}

impl Default for UncertaintyModel {
    fn default() -> Self {
        UncertaintyModel {
            range_coeff: 0.00215,
            azimuth_angle_deg: 0.5,
            elevation_angle_deg: 1.0,
        }
    }
}

impl UncertaintyModel {
    /// `(σ_r, σ_a, σ_e)` at range `r`.
    pub fn sigmas(&self, r: f64) -> (f64, f64, f64) {
        (
            self.range_coeff * r,
            self.azimuth_angle_deg.to_radians().sin() * r,
            self.elevation_angle_deg.to_radians().sin() * r,
        )
    }
}

/// Planar 2×2 positional covariance, m².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Covariance2D(pub Matrix2<f64>);

impl Covariance2D {
    pub fn matrix(&self) -> &Matrix2<f64> {
        &self.0
    }

    pub fn eigenvalues(&self) -> Vector2<f64> {
        self.0.symmetric_eigenvalues()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemovalParams {
    pub pair_radius: f64,
    pub mahalanobis_gate: f64,
    pub uncertainty: UncertaintyModel,
}

impl Default for RemovalParams {
    fn default() -> Self {
        RemovalParams {
            pair_radius: 1.0,
            mahalanobis_gate: 3.0,
            uncertainty: UncertaintyModel::default(),
        }
    }
}

impl RemovalParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.pair_radius) {
            return Err(Error::config("dynamic_removal.pair_radius", "must be > 0"));
        }
        if !positive(self.mahalanobis_gate) {
            return Err(Error::config("dynamic_removal.mahalanobis_gate", "must be > 0"));
        }
        if !positive(self.uncertainty.range_coeff) {
            return Err(Error::config("dynamic_removal.sigma_r_coeff", "must be > 0"));
        }
        if !positive(self.uncertainty.azimuth_angle_deg) {
            return Err(Error::config("dynamic_removal.sigma_azimuth_deg", "must be > 0"));
        }
        if !positive(self.uncertainty.elevation_angle_deg) {
            return Err(Error::config("dynamic_removal.sigma_elevation_deg", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemovalResult {
    pub static_lidar: LidarCloud,
    pub dynamic_lidar_ids: BTreeSet<PointId>,
    pub pair_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair {
    pub lidar_id: PointId,
    pub radar_id: PointId,
    pub distance: f64,
}

/// All `(lidar, radar)` pairs closer than `pair_radius` in the plane, sorted
/// by `(lidar_id, radar_id)`.
pub fn select_pairs(
    lidar_xy: &[(PointId, Point2)],
    radar_dyn_xy: &[(PointId, Point2)],
    pair_radius: f64,
) -> Vec<Pair> {
    let index = SpatialIndex2::from_points(lidar_xy.iter().map(|(id, p)| (*id, p)));
    let mut pairs = select_pairs_with_index(&index, radar_dyn_xy, pair_radius);
    pairs.sort_unstable_by_key(|p| (p.lidar_id, p.radar_id));
    pairs
}

fn select_pairs_with_index(index: &SpatialIndex2, radar_dyn_xy: &[(PointId, Point2)], pair_radius: f64) -> Vec<Pair> {
    if index.is_empty() {
        return Vec::new();
    }
    radar_dyn_xy
        .iter()
        .flat_map(|(radar_id, q)| {
            index.within_of(q, pair_radius).into_iter().map(|n| Pair {
                lidar_id: n.id,
                radar_id: *radar_id,
                distance: n.distance,
            })
        })
        .collect()
}

/// Planar covariance of a radar return: the 3D covariance
/// `R·diag(σ_r², σ_a², σ_e²)·Rᵀ` with `R` the local range/azimuth/elevation
/// basis at the point, restricted to its x-y block.
pub fn point_covariance_2d(point: &RadarPoint, model: &UncertaintyModel) -> Result<Covariance2D> {
    let p = point.position.coords;
    let r = p.norm();
    if r < MIN_RANGE {
        return Err(Error::DegenerateGeometry(format!(
            "radar point at range {r} m has no defined bearing"
        )));
    }
    let azimuth = p.y.atan2(p.x);
    let elevation = p.z.atan2(p.x.hypot(p.y));
    let (sa, ca) = azimuth.sin_cos();
    let (se, ce) = elevation.sin_cos();
    let basis = [
        Vector3::new(ce * ca, ce * sa, se),
        Vector3::new(-sa, ca, 0.0),
        Vector3::new(-se * ca, -se * sa, ce),
    ];
    let (sr, saz, sel) = model.sigmas(r);
    let variances = [sr * sr, saz * saz, sel * sel];
    let mut c = Matrix2::zeros();
    for (u, var) in basis.iter().zip(variances) {
        for i in 0..2 {
            for j in 0..2 {
                c[(i, j)] += var * (u[i] * u[j]);
            }
        }
    }
    Ok(Covariance2D(c))
}

fn regularized(cov: &Covariance2D) -> Matrix2<f64> {
    let m = cov.0;
    let ev = m.symmetric_eigenvalues();
    let (lo, hi) = (ev.min(), ev.max());
    if lo > 0.0 && hi / lo < MAX_COVARIANCE_CONDITION {
        m
    } else {
        m + Matrix2::identity() * COVARIANCE_REGULARIZATION
    }
}

/// `sqrt(Δᵀ·C⁻¹·Δ)` with `Δ = lidar − radar`.
pub fn mahalanobis_2d(lidar: &Point2, radar: &Point2, cov: &Covariance2D) -> f64 {
    let m = regularized(cov);
    let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let det = a * d - b * c;
    let dx = lidar.x - radar.x;
    let dy = lidar.y - radar.y;
    let q = (d * dx * dx - (b + c) * dx * dy + a * dy * dy) / det;
    q.max(0.0).sqrt()
}

/// Removes LiDAR points gated against any radar dynamic point.
pub fn remove_dynamic(lidar: &LidarCloud, radar_dynamic: &RadarCloud, params: &RemovalParams) -> Result<RemovalResult> {
    params.validate()?;
    if radar_dynamic.is_empty() || lidar.is_empty() {
        return Ok(RemovalResult {
            static_lidar: lidar.clone(),
            dynamic_lidar_ids: BTreeSet::new(),
            pair_count: 0,
        });
    }

    let lidar_xy = project_xy(lidar);
    let index = SpatialIndex2::from_points(lidar_xy.iter().map(|(id, p)| (*id, p)));
    let lidar_by_id: std::collections::HashMap<PointId, Point2> = lidar_xy.iter().copied().collect();

    let mut dynamic_lidar_ids = BTreeSet::new();
    let mut pair_count = 0;
    for (radar_id, rp) in radar_dynamic.iter() {
        let cov = match point_covariance_2d(rp, &params.uncertainty) {
            Ok(c) => c,
            Err(e) => {
                log::debug!("skipping radar dynamic point {radar_id}: {e}");
                continue;
            }
        };
        let q = Point2::new(rp.position.x, rp.position.y);
        for n in index.within_of(&q, params.pair_radius) {
            pair_count += 1;
            if dynamic_lidar_ids.contains(&n.id) {
                continue;
            }
            if mahalanobis_2d(&lidar_by_id[&n.id], &q, &cov) < params.mahalanobis_gate {
                dynamic_lidar_ids.insert(n.id);
            }
        }
    }

    Ok(RemovalResult {
        static_lidar: lidar.filter(|id, _| !dynamic_lidar_ids.contains(&id)),
        dynamic_lidar_ids,
        pair_count,
    })
}
