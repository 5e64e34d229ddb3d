//! Scan-to-map point-to-point ICP odometry.
//!
//! A stand-in backend so the front-end produces trajectories: each selected
//! cloud is registered against a sliding-window voxel map, starting from a
//! constant-velocity guess. Skipped frames repeat the previous pose.

use std::collections::{HashSet, VecDeque};

use nalgebra::Isometry3;

use crate::cloud::{Point3, SpatialIndex3};
use crate::error::{Error, Result};
use crate::eval::Trajectory;
use crate::geometry::{rigid_fit, Pose};
use crate::select::{SelectionResult, Source};

/// Scans with fewer points are not registered.
pub const MIN_SCAN_POINTS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct SourceIcp {
    /// Correspondences farther than this are dropped, meters.
    pub correspondence_distance: f64,
    /// Scan downsampling grid, meters; 0 disables.
    pub voxel_size: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpParams {
    pub max_iterations: usize,
    pub convergence_translation: f64,
    pub convergence_rotation: f64,
    /// Number of most recent frames kept in the local map.
    pub window_frames: usize,
    pub lidar: SourceIcp,
    pub radar: SourceIcp,
}

impl Default for IcpParams {
    fn default() -> Self {
        IcpParams {
            max_iterations: 30,
            convergence_translation: 1e-4,
            convergence_rotation: 1e-4,
            window_frames: 20,
            lidar: SourceIcp {
                correspondence_distance: 1.0,
                voxel_size: 0.4,
            },
            radar: SourceIcp {
                correspondence_distance: 2.5,
                voxel_size: 0.0,
            },
        }
    }
}

impl IcpParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if self.max_iterations == 0 {
            return Err(Error::config("odometry.max_iterations", "must be >= 1"));
        }
        if !positive(self.convergence_translation) {
            return Err(Error::config("odometry.convergence_translation", "must be > 0"));
        }
        if !positive(self.convergence_rotation) {
            return Err(Error::config("odometry.convergence_rotation", "must be > 0"));
        }
        if self.window_frames == 0 {
            return Err(Error::config("odometry.window_frames", "must be >= 1"));
        }
        for (name, s) in [("lidar", &self.lidar), ("radar", &self.radar)] {
            if !positive(s.correspondence_distance) {
                return Err(Error::config(format!("odometry.{name}_correspondence_distance"), "must be > 0"));
            }
            if !(s.voxel_size >= 0.0 && s.voxel_size.is_finite()) {
                return Err(Error::config(format!("odometry.{name}_voxel_size"), "must be >= 0"));
            }
        }
        Ok(())
    }

    pub fn for_source(&self, source: Source) -> &SourceIcp {
        match source {
            Source::Radar => &self.radar,
            _ => &self.lidar,
        }
    }

    /// The map grid follows the LiDAR scan grid.
    pub fn map_voxel_size(&self) -> f64 {
        self.lidar.voxel_size
    }
}

type VoxelKey = (i64, i64, i64);

fn voxel_key(p: &Point3, size: f64) -> VoxelKey {
    (
        (p.x / size).floor() as i64,
        (p.y / size).floor() as i64,
        (p.z / size).floor() as i64,
    )
}

/// First point per voxel, in input order. `size <= 0` keeps everything.
pub fn voxel_downsample(points: &[Point3], size: f64) -> Vec<Point3> {
    if size <= 0.0 {
        return points.to_vec();
    }
    let mut seen = HashSet::with_capacity(points.len());
    points
        .iter()
        .filter(|p| seen.insert(voxel_key(p, size)))
        .copied()
        .collect()
}

/// World-frame points of the last few frames, one representative per voxel.
#[derive(Debug, Clone)]
pub struct LocalMap {
    voxel_size: f64,
    window: usize,
    frames: VecDeque<(Source, Vec<Point3>)>,
    points: Vec<Point3>,
    index: SpatialIndex3,
    lidar_insertions: usize,
    radar_insertions: usize,
}

impl LocalMap {
    pub fn new(voxel_size: f64, window: usize) -> Self {
        LocalMap {
            voxel_size,
            window: window.max(1),
            frames: VecDeque::new(),
            points: Vec::new(),
            index: SpatialIndex3::new(std::iter::empty()),
            lidar_insertions: 0,
            radar_insertions: 0,
        }
    }

    pub fn insert(&mut self, source: Source, world_points: Vec<Point3>) {
        match source {
            Source::Radar => self.radar_insertions += 1,
            _ => self.lidar_insertions += 1,
        }
        self.frames.push_back((source, world_points));
        while self.frames.len() > self.window {
            self.frames.pop_front();
        }
        self.rebuild();
    }

    fn rebuild(&mut self) {
        let mut seen = HashSet::new();
        self.points.clear();
        for (_, pts) in &self.frames {
            for p in pts {
                if self.voxel_size <= 0.0 || seen.insert(voxel_key(p, self.voxel_size)) {
                    self.points.push(*p);
                }
            }
        }
        self.index = SpatialIndex3::from_points(self.points.iter().enumerate());
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `(lidar, radar)` frame insertions so far.
    pub fn insertion_counts(&self) -> (usize, usize) {
        (self.lidar_insertions, self.radar_insertions)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Registration {
    pub transform: Isometry3<f64>,
    pub iterations: usize,
    pub correspondences: usize,
    pub converged: bool,
}

/// Point-to-point ICP of `scan` (sensor frame) against `map` (world frame),
/// returning the sensor-to-world transform.
pub fn register_scan(
    map: &LocalMap,
    scan: &[Point3],
    initial_guess: &Isometry3<f64>,
    params: &IcpParams,
    source: Source,
) -> Result<Registration> {
    if scan.len() < MIN_SCAN_POINTS {
        return Err(Error::Registration(format!(
            "scan has {} points, need {MIN_SCAN_POINTS}",
            scan.len()
        )));
    }
    if map.is_empty() {
        return Err(Error::Registration("local map is empty".into()));
    }
    let max_dist = params.for_source(source).correspondence_distance;
    let mut transform = *initial_guess;
    let mut src = Vec::with_capacity(scan.len());
    let mut dst = Vec::with_capacity(scan.len());
    let mut iterations = 0;
    let mut correspondences = 0;
    let mut converged = false;
    while iterations < params.max_iterations {
        iterations += 1;
        src.clear();
        dst.clear();
        for p in scan {
            let q = transform * p;
            if let Some(nn) = map.index.nearest_to(&q) {
                if nn.distance < max_dist {
                    src.push(q);
                    dst.push(map.points[nn.id]);
                }
            }
        }
        correspondences = src.len();
        if correspondences == 0 {
            return Err(Error::Registration("no correspondences within range".into()));
        }
        let delta = rigid_fit(&src, &dst).ok_or_else(|| {
            Error::Registration(format!("{correspondences} correspondences are degenerate"))
        })?;
        transform = delta * transform;
        if delta.translation.vector.norm() < params.convergence_translation
            && delta.rotation.angle() < params.convergence_rotation
        {
            converged = true;
            break;
        }
    }
    Ok(Registration {
        transform,
        iterations,
        correspondences,
        converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameStatus {
    /// Skip frame before any map exists; identity pose emitted.
    Uninitialized,
    Initialized,
    Registered,
    /// Registration failed; the initial guess was kept.
    Failed,
    Skipped,
}

/// Pose composition accumulates rounding in the quaternion norm, and the
/// constant-velocity model compounds it frame over frame.
fn renormalized(mut iso: Isometry3<f64>) -> Isometry3<f64> {
    iso.rotation.renormalize();
    iso
}

/// Stateful frame loop.
#[derive(Debug, Clone)]
pub struct Odometry {
    params: IcpParams,
    map: LocalMap,
    current: Option<Isometry3<f64>>,
    velocity: Isometry3<f64>,
}

impl Odometry {
    pub fn new(params: IcpParams) -> Result<Self> {
        params.validate()?;
        let map = LocalMap::new(params.map_voxel_size(), params.window_frames);
        Ok(Odometry {
            params,
            map,
            current: None,
            velocity: Isometry3::identity(),
        })
    }

    pub fn map(&self) -> &LocalMap {
        &self.map
    }

    pub fn process(&mut self, frame: &SelectionResult) -> (Pose, FrameStatus) {
        let t = frame.timestamp;
        let Some(current) = self.current else {
            if frame.source == Source::Skip {
                return (Pose::identity(t), FrameStatus::Uninitialized);
            }
            let init = Isometry3::identity();
            self.map.insert(frame.source, frame.cloud.points().to_vec());
            self.current = Some(init);
            return (Pose::from_isometry(t, &init), FrameStatus::Initialized);
        };
        if frame.source == Source::Skip {
            return (Pose::from_isometry(t, &current), FrameStatus::Skipped);
        }

        let guess = current * self.velocity;
        let scan = voxel_downsample(frame.cloud.points(), self.params.for_source(frame.source).voxel_size);
        let (pose, status) = match register_scan(&self.map, &scan, &guess, &self.params, frame.source) {
            Ok(reg) => (reg.transform, FrameStatus::Registered),
            Err(e) => {
                log::warn!("frame t={t}: {e}; keeping motion-model guess");
                (guess, FrameStatus::Failed)
            }
        };
        let pose = renormalized(pose);
        self.velocity = renormalized(current.inverse() * pose);
        self.current = Some(pose);
        self.map
            .insert(frame.source, frame.cloud.points().iter().map(|p| pose * p).collect());
        (Pose::from_isometry(t, &pose), status)
    }
}

/// Runs odometry over a whole sequence of selections.
pub fn run_odometry(frames: &[SelectionResult], params: &IcpParams) -> Result<Trajectory> {
    if frames.iter().all(|f| f.source == Source::Skip) {
        return Err(Error::InsufficientData("every frame was skipped; no trajectory".into()));
    }
    let mut odom = Odometry::new(params.clone())?;
    let poses = frames.iter().map(|f| odom.process(f).0).collect();
    Trajectory::new(poses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::LidarCloud;
    use crate::degeneracy::DegeneracyReport;
    use nalgebra::{Translation3, UnitQuaternion, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Bumpy height field plus two walls: enough structure to constrain all
    /// six degrees of freedom.
    fn surface(n: usize, seed: u64) -> Vec<Point3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let a: f64 = rng.random_range(-5.0..5.0);
                let b: f64 = rng.random_range(-5.0..5.0);
                match i % 3 {
                    0 => Point3::new(a, b, 0.5 * (0.7 * a).sin() * (0.5 * b).cos()),
                    1 => Point3::new(6.0, a, b * 0.4),
                    _ => Point3::new(a, 6.0 + 0.3 * (a * 0.8).sin(), b * 0.4),
                }
            })
            .collect()
    }

    fn map_of(points: &[Point3]) -> LocalMap {
        let mut m = LocalMap::new(0.0, 20);
        m.insert(Source::Lidar, points.to_vec());
        m
    }

    fn frame(t: f64, source: Source, points: Vec<Point3>) -> SelectionResult {
        SelectionResult {
            timestamp: t,
            source,
            cloud: LidarCloud::new(t, "test", points).unwrap(),
            degeneracy: DegeneracyReport::without_lidar(0),
            removal: None,
            ego: None,
            split: None,
        }
    }

    #[test]
    fn identity_fixed_point() {
        let pts = surface(500, 1);
        let reg = register_scan(&map_of(&pts), &pts[..200], &Isometry3::identity(), &IcpParams::default(), Source::Lidar)
            .unwrap();
        assert!(reg.transform.translation.vector.norm() < 1e-9);
        assert!(reg.transform.rotation.angle() < 1e-9);
    }

    #[test]
    fn recovers_inverse_of_applied_motion() {
        let pts = surface(2000, 2);
        let g = Isometry3::from_parts(
            Translation3::new(0.2, 0.1, 0.0),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), 5f64.to_radians()),
        );
        let scan: Vec<Point3> = pts.iter().map(|p| g * p).collect();
        let params = IcpParams { max_iterations: 100, ..Default::default() };
        let reg = register_scan(&map_of(&pts), &scan, &Isometry3::identity(), &params, Source::Lidar).unwrap();
        let expected = g.inverse();
        assert!((reg.transform.translation.vector - expected.translation.vector).norm() < 1e-3);
        assert!(reg.transform.rotation.angle_to(&expected.rotation) < 1e-3);
    }

    #[test]
    fn small_scan_fails() {
        let pts = surface(100, 3);
        let err = register_scan(&map_of(&pts), &pts[..5], &Isometry3::identity(), &IcpParams::default(), Source::Lidar);
        assert!(matches!(err, Err(Error::Registration(_))));
    }

    #[test]
    fn map_against_itself_is_identity() {
        let pts = surface(600, 4);
        let mut map = map_of(&pts[..400]);
        map.insert(Source::Lidar, pts[400..].to_vec());
        let reg = register_scan(&map, map.points(), &Isometry3::identity(), &IcpParams::default(), Source::Lidar).unwrap();
        assert!(reg.transform.translation.vector.norm() < 1e-12);
        assert_eq!(reg.iterations, 1);
    }

    #[test]
    fn rigid_invariance() {
        let pts = surface(1500, 5);
        let g_motion = Isometry3::new(Vector3::new(0.15, -0.1, 0.02), Vector3::new(0.0, 0.0, 0.03));
        let scan: Vec<Point3> = pts.iter().map(|p| g_motion * p).collect();
        let world = Isometry3::new(Vector3::new(3.0, -4.0, 1.0), Vector3::new(0.1, 0.2, -0.5));
        let params = IcpParams::default();
        let a = register_scan(&map_of(&pts), &scan, &Isometry3::identity(), &params, Source::Lidar).unwrap();
        let moved_map: Vec<Point3> = pts.iter().map(|p| world * p).collect();
        let moved_scan: Vec<Point3> = scan.iter().map(|p| world * p).collect();
        let b = register_scan(&map_of(&moved_map), &moved_scan, &Isometry3::identity(), &params, Source::Lidar).unwrap();
        let conj = world * a.transform * world.inverse();
        assert!((b.transform.translation.vector - conj.translation.vector).norm() < 1e-6);
        assert!(b.transform.rotation.angle_to(&conj.rotation) < 1e-6);
    }

    #[test]
    fn voxel_map_one_point_per_voxel() {
        let mut m = LocalMap::new(0.5, 3);
        for k in 0..5 {
            m.insert(Source::Lidar, (0..100).map(|i| Point3::new(i as f64 * 0.1 + k as f64 * 0.01, 0.0, 0.0)).collect());
        }
        let keys: HashSet<_> = m.points().iter().map(|p| voxel_key(p, 0.5)).collect();
        assert_eq!(keys.len(), m.len());
        assert_eq!(m.insertion_counts(), (5, 0));
    }

    #[test]
    fn single_frame_and_stationary_sequence() {
        let pts = surface(800, 6);
        let one = run_odometry(&[frame(0.0, Source::Lidar, pts.clone())], &IcpParams::default()).unwrap();
        assert_eq!(one.poses().len(), 1);
        assert_eq!(one.poses()[0].translation, Vector3::zeros());

        let frames: Vec<_> = (0..10).map(|i| frame(i as f64 * 0.1, Source::Lidar, pts.clone())).collect();
        let traj = run_odometry(&frames, &IcpParams::default()).unwrap();
        for p in traj.poses() {
            assert!(p.translation.norm() < 1e-6);
            assert!(p.rotation.angle() < 1e-6);
        }
    }

    #[test]
    fn skips_repeat_previous_pose_and_all_skip_fails() {
        let pts = surface(800, 7);
        let frames = vec![
            frame(0.0, Source::Skip, vec![]),
            frame(0.1, Source::Lidar, pts.clone()),
            frame(0.2, Source::Skip, vec![]),
        ];
        let traj = run_odometry(&frames, &IcpParams::default()).unwrap();
        assert_eq!(traj.poses().len(), 3);
        assert_eq!(traj.poses()[2].translation, traj.poses()[1].translation);
        assert!(run_odometry(&frames[..1], &IcpParams::default()).is_err());
    }

    #[test]
    fn deterministic() {
        let pts = surface(1000, 8);
        let frames: Vec<_> = (0..6)
            .map(|i| {
                let g = Isometry3::new(Vector3::new(-0.1 * i as f64, 0.0, 0.0), Vector3::zeros());
                frame(i as f64 * 0.1, Source::Lidar, pts.iter().map(|p| g * p).collect())
            })
            .collect();
        let a = run_odometry(&frames, &IcpParams::default()).unwrap();
        let b = run_odometry(&frames, &IcpParams::default()).unwrap();
        assert_eq!(a, b);
        let last = a.poses().last().unwrap();
        // Map voxelization leaves a few millimeters of bias.
        assert!((last.translation - Vector3::new(0.5, 0.0, 0.0)).norm() < 1e-2, "{}", last.translation);
    }
}
