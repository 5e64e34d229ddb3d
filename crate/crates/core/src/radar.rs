//! Radar ego-velocity estimation and static/dynamic split.
//!
//! For a static target in direction `d` (unit vector from the sensor), a
//! sensor moving with velocity `v` measures `doppler = -d · v`. Three
//! non-coplanar static returns pin `v` down exactly; the estimator runs
//! 3-point RANSAC over that model, then refits `v` by linear least squares
//! on the inliers of the best hypothesis.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cloud::{PointId, RadarCloud};
use crate::error::{Error, Result};

/// Returns closer than this carry no usable direction.
pub const MIN_RANGE: f64 = 0.1;

/// Minimal samples whose direction matrix is worse conditioned than this
/// are discarded.
pub const MAX_SAMPLE_CONDITION: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct RansacParams {
    pub max_iterations: usize,
    /// Doppler residual gate for inliers, m/s.
    pub inlier_threshold: f64,
    pub min_inlier_ratio: f64,
    pub rng_seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        RansacParams {
            max_iterations: 200,
            inlier_threshold: 0.25,
            min_inlier_ratio: 0.3,
            rng_seed: 0,
        }
    }
}

impl RansacParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::config("radar_preprocess.max_iterations", "must be >= 1"));
        }
        if !(self.inlier_threshold > 0.0 && self.inlier_threshold.is_finite()) {
            return Err(Error::config("radar_preprocess.inlier_threshold", "must be > 0"));
        }
        if !(self.min_inlier_ratio > 0.0 && self.min_inlier_ratio <= 1.0) {
            return Err(Error::config("radar_preprocess.min_inlier_ratio", "must be in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EgoVelocityEstimate {
    pub velocity: Vector3<f64>,
    /// Sorted ids of the points supporting the final model.
    pub inlier_ids: Vec<PointId>,
    pub iterations_used: usize,
    pub converged: bool,
}

/// Static/dynamic partition of one radar frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RadarSplit {
    pub static_cloud: RadarCloud,
    pub dynamic_cloud: RadarCloud,
}

/// Doppler a static target in `direction` would show for sensor velocity
/// `ego_velocity`.
pub fn predicted_doppler(direction: &Vector3<f64>, ego_velocity: &Vector3<f64>) -> Result<f64> {
    let norm = direction.norm();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::Contract(format!(
            "direction must be a unit vector, |d| = {norm}"
        )));
    }
    Ok(-direction.dot(ego_velocity))
}

struct Observation {
    id: PointId,
    direction: Vector3<f64>,
    /// `-doppler`, the right-hand side of `d · v = -doppler`.
    rhs: f64,
}

fn observations(cloud: &RadarCloud) -> Vec<Observation> {
    cloud
        .iter()
        .filter_map(|(id, p)| {
            let r = p.position.coords.norm();
            (r >= MIN_RANGE).then(|| Observation {
                id,
                direction: p.position.coords / r,
                rhs: -p.doppler,
            })
        })
        .collect()
}

fn solve_minimal(obs: &[Observation], sample: [usize; 3]) -> Option<Vector3<f64>> {
    let a = Matrix3::from_rows(&[
        obs[sample[0]].direction.transpose(),
        obs[sample[1]].direction.transpose(),
        obs[sample[2]].direction.transpose(),
    ]);
    let b = Vector3::new(obs[sample[0]].rhs, obs[sample[1]].rhs, obs[sample[2]].rhs);
    let sv = a.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 0.0) || smax / smin > MAX_SAMPLE_CONDITION {
        return None;
    }
    a.lu().solve(&b)
}

fn inliers_of(obs: &[Observation], v: &Vector3<f64>, threshold: f64) -> Vec<usize> {
    obs.iter()
        .enumerate()
        .filter(|(_, o)| (o.direction.dot(v) - o.rhs).abs() < threshold)
        .map(|(i, _)| i)
        .collect()
}

/// Linear least squares `min Σ (dᵢ·v − rhsᵢ)²` over the selected observations.
fn refit(obs: &[Observation], selected: &[usize]) -> Option<Vector3<f64>> {
    let a = DMatrix::from_fn(selected.len(), 3, |r, c| obs[selected[r]].direction[c]);
    let b = DVector::from_iterator(selected.len(), selected.iter().map(|&i| obs[i].rhs));
    let svd = a.svd(true, true);
    let sv = &svd.singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 0.0) || smax / smin > MAX_SAMPLE_CONDITION {
        return None;
    }
    let x = svd.solve(&b, 0.0).ok()?;
    Some(Vector3::new(x[0], x[1], x[2]))
}

/// 3-point RANSAC on Doppler residuals followed by a least-squares refit on
/// the best inlier set.
pub fn estimate_ego_velocity(cloud: &RadarCloud, params: &RansacParams) -> Result<EgoVelocityEstimate> {
    params.validate()?;
    let obs = observations(cloud);
    if obs.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} radar points beyond {MIN_RANGE} m, need 3",
            obs.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let mut best: Option<Vec<usize>> = None;
    let mut iterations_used = 0;
    for _ in 0..params.max_iterations {
        iterations_used += 1;
        let pick = rand::seq::index::sample(&mut rng, obs.len(), 3);
        let sample = [pick.index(0), pick.index(1), pick.index(2)];
        let Some(v) = solve_minimal(&obs, sample) else {
            continue;
        };
        let inliers = inliers_of(&obs, &v, params.inlier_threshold);
        if best.as_ref().is_none_or(|b| inliers.len() > b.len()) {
            let all = inliers.len() == obs.len();
            best = Some(inliers);
            if all {
                break;
            }
        }
    }

    let best = best.ok_or_else(|| {
        Error::DegenerateGeometry(format!(
            "all {iterations_used} sampled triples were degenerate"
        ))
    })?;
    let velocity = refit(&obs, &best).ok_or_else(|| {
        Error::DegenerateGeometry("inlier directions do not span 3D".into())
    })?;
    let ratio = best.len() as f64 / obs.len() as f64;
    let mut inlier_ids: Vec<PointId> = best.iter().map(|&i| obs[i].id).collect();
    inlier_ids.sort_unstable();
    Ok(EgoVelocityEstimate {
        velocity,
        inlier_ids,
        iterations_used,
        converged: ratio >= params.min_inlier_ratio,
    })
}

/// Partitions the cloud: a point is static iff its Doppler matches the
/// prediction from `ego` within `residual_threshold`. Points closer than
/// [`MIN_RANGE`] have no direction and go to the dynamic side.
pub fn split_static_dynamic(
    cloud: &RadarCloud,
    ego: &EgoVelocityEstimate,
    residual_threshold: f64,
) -> Result<RadarSplit> {
    if !ego.converged {
        return Err(Error::Contract("ego-velocity estimate did not converge".into()));
    }
    if !(residual_threshold > 0.0) {
        return Err(Error::Contract("residual threshold must be > 0".into()));
    }
    let is_static = |p: &crate::cloud::RadarPoint| {
        let r = p.position.coords.norm();
        if r < MIN_RANGE {
            return false;
        }
        let predicted = -(p.position.coords / r).dot(&ego.velocity);
        (p.doppler - predicted).abs() < residual_threshold
    };
    Ok(RadarSplit {
        static_cloud: cloud.filter(|_, p| is_static(p)),
        dynamic_cloud: cloud.filter(|_, p| !is_static(p)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{Point3, RadarPoint};
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal, UnitSphere};

    fn cloud(points: Vec<RadarPoint>) -> RadarCloud {
        RadarCloud::new(0.0, "radar", points).unwrap()
    }

    fn static_point(dir: Vector3<f64>, range: f64, v: &Vector3<f64>) -> RadarPoint {
        RadarPoint::new(Point3::from(dir * range), -dir.dot(v))
    }

    fn random_dir(rng: &mut ChaCha8Rng) -> Vector3<f64> {
        let d: [f64; 3] = UnitSphere.sample(rng);
        Vector3::from(d)
    }

    /// Normal-equations least squares, independent of the SVD route.
    fn normal_equations(points: &[RadarPoint]) -> Vector3<f64> {
        let mut ata = Matrix3::zeros();
        let mut atb = Vector3::zeros();
        for p in points {
            let d = p.position.coords.normalize();
            ata += d * d.transpose();
            atb += d * -p.doppler;
        }
        ata.try_inverse().unwrap() * atb
    }

    #[test]
    fn predicted_doppler_examples() {
        let v = Vector3::new(1.0, 0.0, 0.0);
        assert_eq!(predicted_doppler(&Vector3::x(), &v).unwrap(), -1.0);
        assert_eq!(predicted_doppler(&Vector3::y(), &v).unwrap(), 0.0);
        let d = Vector3::new(1.0, 1.0, 0.0) / 2f64.sqrt();
        assert_relative_eq!(
            predicted_doppler(&d, &Vector3::new(2.0, 0.0, 0.0)).unwrap(),
            -2f64.sqrt(),
            epsilon = 1e-12
        );
        assert!(predicted_doppler(&Vector3::new(2.0, 0.0, 0.0), &v).is_err());
    }

    #[test]
    fn stationary_sensor() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = (0..20)
            .map(|_| static_point(random_dir(&mut rng), 5.0, &Vector3::zeros()))
            .collect();
        let c = cloud(pts);
        let est = estimate_ego_velocity(&c, &RansacParams::default()).unwrap();
        assert!(est.velocity.norm() < 1e-12);
        assert_eq!(est.inlier_ids, (0..20).collect::<Vec<_>>());
        assert!(est.converged);
    }

    #[test]
    fn axis_aligned_closed_form() {
        let c = cloud(vec![
            RadarPoint::new(Point3::new(4.0, 0.0, 0.0), -1.0),
            RadarPoint::new(Point3::new(0.0, 3.0, 0.0), 0.0),
            RadarPoint::new(Point3::new(0.0, 0.0, 2.0), 0.0),
        ]);
        let est = estimate_ego_velocity(&c, &RansacParams::default()).unwrap();
        assert_eq!(est.velocity, Vector3::new(1.0, 0.0, 0.0));
        assert!(est.converged);
    }

    #[test]
    fn outliers_rejected_and_inliers_exact() {
        let truth = Vector3::new(2.0, -1.0, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut pts: Vec<RadarPoint> = (0..100)
            .map(|_| static_point(random_dir(&mut rng), rng.random_range(2.0..40.0), &truth))
            .collect();
        for _ in 0..30 {
            let mut p = static_point(random_dir(&mut rng), rng.random_range(2.0..40.0), &truth);
            p.doppler += 3.0;
            pts.push(p);
        }
        let c = cloud(pts.clone());
        let est = estimate_ego_velocity(&c, &RansacParams::default()).unwrap();
        let oracle = normal_equations(&pts[..100]);
        assert!((est.velocity - oracle).norm() < 1e-6);
        assert!((est.velocity - truth).norm() < 1e-6);
        assert_eq!(est.inlier_ids, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn insufficient_and_degenerate() {
        let c = cloud(vec![
            RadarPoint::new(Point3::new(1.0, 0.0, 0.0), 0.0),
            RadarPoint::new(Point3::new(0.0, 1.0, 0.0), 0.0),
            RadarPoint::new(Point3::new(0.0, 0.0, 0.01), 0.0),
        ]);
        assert!(matches!(
            estimate_ego_velocity(&c, &RansacParams::default()),
            Err(Error::InsufficientData(_))
        ));
        // all directions in the xy plane
        let planar = cloud(
            (0..10)
                .map(|i| {
                    let a = i as f64 * 0.3;
                    RadarPoint::new(Point3::new(a.cos() * 5.0, a.sin() * 5.0, 0.0), 0.1)
                })
                .collect(),
        );
        assert!(matches!(
            estimate_ego_velocity(&planar, &RansacParams::default()),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn seeded_determinism() {
        let truth = Vector3::new(0.3, 1.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<_> = (0..60)
            .map(|i| {
                let mut p = static_point(random_dir(&mut rng), 10.0, &truth);
                p.doppler += 0.02 * rng.sample::<f64, _>(StandardNormal);
                if i % 4 == 0 {
                    p.doppler += 2.0;
                }
                p
            })
            .collect();
        let c = cloud(pts);
        let params = RansacParams { rng_seed: 99, ..Default::default() };
        let a = estimate_ego_velocity(&c, &params).unwrap();
        let b = estimate_ego_velocity(&c, &params).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.velocity.x.to_bits(), b.velocity.x.to_bits());
    }

    #[test]
    fn split_examples() {
        let ego = EgoVelocityEstimate {
            velocity: Vector3::zeros(),
            inlier_ids: vec![],
            iterations_used: 1,
            converged: true,
        };
        let c = cloud(vec![
            RadarPoint::new(Point3::new(3.0, 0.0, 0.0), 0.0),
            RadarPoint::new(Point3::new(0.0, 3.0, 0.0), 2.0),
            RadarPoint::new(Point3::new(0.0, 0.0, 0.0), 0.0),
        ]);
        let s = split_static_dynamic(&c, &ego, 0.25).unwrap();
        assert_eq!(s.static_cloud.ids(), &[0]);
        assert_eq!(s.dynamic_cloud.ids(), &[1, 2]);
        let unconverged = EgoVelocityEstimate { converged: false, ..ego };
        assert!(split_static_dynamic(&c, &unconverged, 0.25).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(50))]

            #[test]
            fn noise_free_identifiable(seed in any::<u64>(), rng_seed in any::<u64>(), n in 3usize..60) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let truth = Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-2.0..2.0));
                let pts: Vec<_> = (0..n).map(|_| static_point(random_dir(&mut rng), rng.random_range(1.0..50.0), &truth)).collect();
                let c = cloud(pts.clone());
                let params = RansacParams { rng_seed, ..Default::default() };
                match estimate_ego_velocity(&c, &params) {
                    Ok(est) => prop_assert!((est.velocity - truth).norm() < 1e-9, "{:?}", est.velocity - truth),
                    // random triples can be near-coplanar for tiny n
                    Err(Error::DegenerateGeometry(_)) => prop_assume!(false),
                    Err(e) => return Err(TestCaseError::fail(e.to_string())),
                }
            }

            #[test]
            fn outlier_robustness(seed in any::<u64>()) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let truth = Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-1.0..1.0));
                let n_out = rng.random_range(0..=66); // 66 / 166 < 40%
                let mut pts: Vec<_> = (0..100).map(|_| static_point(random_dir(&mut rng), rng.random_range(1.0..50.0), &truth)).collect();
                for _ in 0..n_out {
                    let mut p = static_point(random_dir(&mut rng), rng.random_range(1.0..50.0), &truth);
                    let off: f64 = rng.random_range(0.5..5.0);
                    p.doppler += if rng.random_bool(0.5) { off } else { -off };
                    pts.push(p);
                }
                let est = estimate_ego_velocity(&cloud(pts), &RansacParams::default()).unwrap();
                prop_assert!((est.velocity - truth).norm() <= 1e-3);
            }

            #[test]
            fn refit_minimizes_squared_residuals(seed in any::<u64>()) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let truth = Vector3::new(1.0, -2.0, 0.3);
                let pts: Vec<_> = (0..80).map(|_| {
                    let mut p = static_point(random_dir(&mut rng), 10.0, &truth);
                    p.doppler += 0.05 * rng.sample::<f64, _>(StandardNormal);
                    p
                }).collect();
                let c = cloud(pts.clone());
                let est = estimate_ego_velocity(&c, &RansacParams::default()).unwrap();
                let inliers: Vec<_> = est.inlier_ids.iter().map(|&i| pts[i]).collect();
                let oracle = normal_equations(&inliers);
                prop_assert!((est.velocity - oracle).norm() < 1e-9);
            }

            #[test]
            fn split_partitions(seed in any::<u64>(), thr in 0.01f64..2.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let pts: Vec<_> = (0..50).map(|_| {
                    RadarPoint::new(Point3::from(random_dir(&mut rng) * rng.random_range(0.0..10.0)), rng.random_range(-3.0..3.0))
                }).collect();
                let c = cloud(pts);
                let ego = EgoVelocityEstimate { velocity: Vector3::new(1.0, 0.0, 0.0), inlier_ids: vec![], iterations_used: 1, converged: true };
                let s = split_static_dynamic(&c, &ego, thr).unwrap();
                let mut all: Vec<_> = s.static_cloud.ids().iter().chain(s.dynamic_cloud.ids()).copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..50).collect::<Vec<_>>());
            }
        }
    }
}
