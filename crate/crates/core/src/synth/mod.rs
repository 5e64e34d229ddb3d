//! Synthetic LiDAR + radar sequences with ground truth.
//!
//! A scene is a box-shaped room with obstacles, a sensor rig following a
//! waypoint path, optional walking actors (vertical cylinders) and optional
//! smoke intervals that corrupt or drop the LiDAR. Every frame draws its
//! randomness from its own stream derived from the scene seed, so output
//! is reproducible and frames are independent of each other.

pub mod config;
pub mod world;

use std::fmt::Write as _;
use std::fs;
use std::path::Path as FsPath;

use nalgebra::{UnitQuaternion, Vector2, Vector3};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};

pub use config::{
    Aabb, ActorSpec, ClutterParams, PathSpec, SceneConfig, SensorSpec, SmokeInterval, SmokeMode,
};
use world::{sample_world, Path, Surfel};

use crate::cloud::{
    frame_file_name, labels_file_name, write_lidar_cloud, write_manifest, write_radar_cloud,
    CloudKind, FrameEntry, LidarCloud, Point3, RadarCloud, RadarPoint,
};
use crate::error::{Error, Result};
use crate::eval::{write_tum, Trajectory};
use crate::geometry::Pose;

/// Ground-truth class of a generated return.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointClass {
    Static,
    Dynamic,
    Clutter,
}

impl PointClass {
    pub fn as_str(self) -> &'static str {
        match self {
            PointClass::Static => "static",
            PointClass::Dynamic => "dynamic",
            PointClass::Clutter => "clutter",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PointLabel {
    pub class: PointClass,
    pub actor: Option<usize>,
}

impl PointLabel {
    const STATIC: PointLabel = PointLabel { class: PointClass::Static, actor: None };
    const CLUTTER: PointLabel = PointLabel { class: PointClass::Clutter, actor: None };
}

/// One generated frame. Label vectors are parallel to cloud ids.
#[derive(Debug, Clone)]
pub struct SynthFrame {
    pub index: usize,
    pub timestamp: f64,
    pub pose: Pose,
    /// Sensor velocity in the world frame.
    pub velocity: Vector3<f64>,
    /// `None` when smoke deleted the LiDAR frame.
    pub lidar: Option<LidarCloud>,
    pub lidar_labels: Vec<PointLabel>,
    pub radar: RadarCloud,
    pub radar_labels: Vec<PointLabel>,
    /// Per-return velocity in the world frame, parallel to the radar cloud.
    pub radar_point_velocities: Vec<Vector3<f64>>,
    pub smoke: Option<SmokeMode>,
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub config: SceneConfig,
    pub frames: Vec<SynthFrame>,
    pub ground_truth: Trajectory,
}

impl Scene {
    /// Per-frame smoke flags, the ground truth for degeneracy detection.
    pub fn smoke_flags(&self) -> Vec<bool> {
        self.frames.iter().map(|f| f.smoke.is_some()).collect()
    }
}

fn frame_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

struct ActorState {
    center: Vector2<f64>,
    velocity: Vector3<f64>,
    radius: f64,
    height: f64,
}

/// A return in world coordinates before it is expressed in the sensor frame.
struct WorldReturn {
    position: Point3,
    velocity: Vector3<f64>,
    label: PointLabel,
}

fn visible(s: &Surfel, sensor: &Point3, min_range: f64, max_range: f64) -> bool {
    let to_sensor = sensor - s.position;
    let r = to_sensor.norm();
    r >= min_range && r <= max_range && s.normal.dot(&to_sensor) > 0.0
}

/// What one sensor sees per frame.
#[derive(Clone, Copy)]
struct Beam {
    min_range: f64,
    max_range: f64,
    total: usize,
}

/// Draws `per_actor(actor)` points on the side of each in-range actor that
/// faces the sensor, fills up to `beam.total` with visible surface samples,
/// and shuffles.
fn sample_returns(
    rng: &mut ChaCha8Rng,
    surfels: &[Surfel],
    actors: &[ActorState],
    sensor: &Point3,
    beam: &Beam,
    per_actor: impl Fn(usize) -> usize,
) -> Vec<WorldReturn> {
    let Beam { min_range, max_range, total } = *beam;
    let mut out = Vec::with_capacity(total);
    for (k, a) in actors.iter().enumerate() {
        let offset = Vector2::new(sensor.x, sensor.y) - a.center;
        let d = offset.norm();
        if d - a.radius < min_range || d > max_range {
            continue;
        }
        let facing = offset.y.atan2(offset.x);
        for _ in 0..per_actor(k) {
            let phi = facing + rng.random_range(-std::f64::consts::FRAC_PI_2..std::f64::consts::FRAC_PI_2);
            let z = rng.random_range(0.0..a.height);
            out.push(WorldReturn {
                position: Point3::new(a.center.x + a.radius * phi.cos(), a.center.y + a.radius * phi.sin(), z),
                velocity: a.velocity,
                label: PointLabel { class: PointClass::Dynamic, actor: Some(k) },
            });
        }
    }
    let candidates: Vec<usize> = (0..surfels.len())
        .filter(|&i| visible(&surfels[i], sensor, min_range, max_range))
        .collect();
    let n_static = total.saturating_sub(out.len()).min(candidates.len());
    for i in index::sample(rng, candidates.len(), n_static) {
        out.push(WorldReturn {
            position: surfels[candidates[i]].position,
            velocity: Vector3::zeros(),
            label: PointLabel::STATIC,
        });
    }
    out.shuffle(rng);
    out
}

fn normal(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("noise sigma validated as finite and >= 0")
}

fn jitter(rng: &mut ChaCha8Rng, n: &Normal<f64>) -> Vector3<f64> {
    Vector3::new(n.sample(rng), n.sample(rng), n.sample(rng))
}

/// Replaces exactly `round(fraction * n)` randomly chosen points with points
/// drawn uniformly from a ball of `radius` around the sensor.
pub fn apply_clutter(
    cloud: &LidarCloud,
    labels: &mut [PointLabel],
    params: &ClutterParams,
    rng: &mut impl Rng,
) -> Result<LidarCloud> {
    let n = cloud.len();
    let k = (params.fraction * n as f64).round() as usize;
    let mut points = cloud.points().to_vec();
    for i in index::sample(rng, n, k.min(n)) {
        let dir: [f64; 3] = UnitSphere.sample(rng);
        let r = params.radius * rng.random::<f64>().cbrt();
        points[i] = Point3::new(dir[0] * r, dir[1] * r, dir[2] * r);
        labels[i] = PointLabel::CLUTTER;
    }
    LidarCloud::from_parts(cloud.timestamp, cloud.frame_id.clone(), cloud.ids().to_vec(), points)
}

pub fn generate(config: &SceneConfig) -> Result<Scene> {
    config.validate()?;
    let surfels = sample_world(config.room.as_ref(), &config.boxes, config.surface_spacing);
    let path = Path::new(&config.trajectory);
    let actor_paths: Vec<Path> = config.actors.iter().map(|a| Path::new(&a.path)).collect();
    let s = &config.sensor;
    let dt = 1.0 / s.rate_hz;
    let initial_heading = path.heading(0.0, config.heading_window, 0.0);
    let lidar_noise = normal(s.lidar_noise);
    let radar_noise = normal(s.radar_noise);
    let doppler_noise = normal(s.doppler_noise);

    let mut frames = Vec::with_capacity(config.frames);
    for i in 0..config.frames {
        let mut rng = frame_rng(config.seed, i as u64);
        let t = i as f64 * dt;
        let state = path.state(t);
        let yaw = path.heading(t, config.heading_window, initial_heading);
        let rotation = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw);
        let sensor = Point3::new(state.position.x, state.position.y, s.height);
        let velocity = Vector3::new(state.velocity.x, state.velocity.y, 0.0);
        let pose = Pose { timestamp: t, rotation, translation: sensor.coords };
        let to_body = |p: &Point3| rotation.inverse() * (p - sensor);

        let actors: Vec<ActorState> = config
            .actors
            .iter()
            .zip(&actor_paths)
            .map(|(spec, p)| {
                let st = p.state_shuttle(t);
                ActorState {
                    center: st.position,
                    velocity: Vector3::new(st.velocity.x, st.velocity.y, 0.0),
                    radius: spec.radius,
                    height: spec.height,
                }
            })
            .collect();

        let lidar_returns = sample_returns(
            &mut rng,
            &surfels,
            &actors,
            &sensor,
            &Beam { min_range: s.min_range, max_range: s.lidar_max_range, total: s.lidar_points },
            |k| config.actors[k].lidar_points,
        );
        let mut lidar_labels: Vec<PointLabel> = lidar_returns.iter().map(|r| r.label).collect();
        let lidar_points: Vec<Point3> = lidar_returns
            .iter()
            .map(|r| Point3::from(to_body(&r.position) + jitter(&mut rng, &lidar_noise)))
            .collect();
        let lidar = LidarCloud::new(t, CloudKind::Lidar.name(), lidar_points)?;

        let radar_returns = sample_returns(
            &mut rng,
            &surfels,
            &actors,
            &sensor,
            &Beam { min_range: s.min_range, max_range: s.radar_max_range, total: s.radar_points },
            |k| config.actors[k].radar_points,
        );
        let radar_labels: Vec<PointLabel> = radar_returns.iter().map(|r| r.label).collect();
        let radar_point_velocities: Vec<Vector3<f64>> = radar_returns.iter().map(|r| r.velocity).collect();
        let radar_points: Vec<RadarPoint> = radar_returns
            .iter()
            .map(|r| {
                let body = to_body(&r.position);
                let relative = rotation.inverse() * (velocity - r.velocity);
                let doppler = -body.normalize().dot(&relative) + doppler_noise.sample(&mut rng);
                RadarPoint::new(Point3::from(body + jitter(&mut rng, &radar_noise)), doppler)
            })
            .collect();
        let radar = RadarCloud::new(t, CloudKind::Radar.name(), radar_points)?;

        let smoke = config.smoke_at(i);
        let lidar = match smoke {
            None => Some(lidar),
            Some(SmokeMode::Delete) => {
                lidar_labels.clear();
                None
            }
            Some(SmokeMode::Clutter) => Some(apply_clutter(&lidar, &mut lidar_labels, &config.clutter, &mut rng)?),
        };

        frames.push(SynthFrame {
            index: i,
            timestamp: t,
            pose,
            velocity,
            lidar,
            lidar_labels,
            radar,
            radar_labels,
            radar_point_velocities,
            smoke,
        });
    }
    let ground_truth = Trajectory::new(frames.iter().map(|f| f.pose).collect())?;
    log::debug!(
        "generated {} frames from {} surface samples",
        frames.len(),
        surfels.len()
    );
    Ok(Scene {
        config: config.clone(),
        frames,
        ground_truth,
    })
}

fn write_text(path: &FsPath, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn labels_csv(frame: &SynthFrame) -> String {
    let mut s = String::from("sensor,id,class,actor\n");
    let mut rows = |sensor: &str, ids: &[usize], labels: &[PointLabel]| {
        for (id, l) in ids.iter().zip(labels) {
            let actor = l.actor.map_or(-1, |a| a as i64);
            let _ = writeln!(s, "{sensor},{id},{},{actor}", l.class.as_str());
        }
    };
    if let Some(l) = &frame.lidar {
        rows("lidar", l.ids(), &frame.lidar_labels);
    }
    rows("radar", frame.radar.ids(), &frame.radar_labels);
    s
}

/// Writes the frame files, `frames.csv`, per-frame labels,
/// `smoke_frames.csv`, `gt.tum` and the scene description `scene.ini`.
pub fn write_scene(dir: &FsPath, scene: &Scene) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = Vec::with_capacity(scene.frames.len());
    let mut smoke = String::from("index,smoke,mode\n");
    for f in &scene.frames {
        manifest.push(FrameEntry { index: f.index, timestamp: f.timestamp });
        if let Some(l) = &f.lidar {
            write_lidar_cloud(&dir.join(frame_file_name(f.index, CloudKind::Lidar)), l)?;
        }
        write_radar_cloud(&dir.join(frame_file_name(f.index, CloudKind::Radar)), &f.radar)?;
        write_text(&dir.join(labels_file_name(f.index)), &labels_csv(f))?;
        let _ = writeln!(
            smoke,
            "{},{},{}",
            f.index,
            u8::from(f.smoke.is_some()),
            f.smoke.map_or("none", SmokeMode::as_str)
        );
    }
    write_manifest(dir, &manifest)?;
    write_text(&dir.join("smoke_frames.csv"), &smoke)?;
    write_text(&dir.join("scene.ini"), &scene.config.to_ini())?;
    write_tum(&dir.join("gt.tum"), &scene.ground_truth)
}

/// Reads `index,smoke[,mode]` rows; returns the smoke flag per row.
pub fn read_smoke_flags(path: &FsPath) -> Result<Vec<bool>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut flags = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: &str| Error::Parse { path: path.to_path_buf(), line: i as u64 + 1, message: m.to_string() };
        let flag = line.split(',').nth(1).ok_or_else(|| bad("expected 'index,smoke'"))?;
        flags.push(match flag.trim() {
            "1" | "true" => true,
            "0" | "false" => false,
            _ => return Err(bad("smoke flag must be 0 or 1")),
        });
    }
    Ok(flags)
}

/// Reads the LiDAR ids labelled `dynamic` from a labels file.
pub fn read_dynamic_lidar_ids(path: &FsPath) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut ids = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(Error::Parse { path: path.to_path_buf(), line: i as u64 + 1, message: "expected 4 fields".into() });
        }
        if f[0] == "lidar" && f[2] == "dynamic" {
            ids.push(f[1].parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: i as u64 + 1,
                message: format!("bad id '{}'", f[1]),
            })?);
        }
    }
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SceneConfig {
        let mut c = SceneConfig::parse("[scene]\nframes = 6\n[sensor]\nlidar_points = 500\nradar_points = 40\n").unwrap();
        c.actors.push(ActorSpec {
            path: PathSpec { waypoints: vec![[-8.0, -5.0], [-8.0, 5.0]], speed: 1.2, closed: false },
            radius: 0.3,
            height: 1.8,
            lidar_points: 30,
            radar_points: 5,
        });
        c
    }

    #[test]
    fn deterministic_and_sized() {
        let c = small();
        let a = generate(&c).unwrap();
        let b = generate(&c).unwrap();
        for (x, y) in a.frames.iter().zip(&b.frames) {
            assert_eq!(x.lidar, y.lidar);
            assert_eq!(x.radar, y.radar);
            assert_eq!(x.lidar.as_ref().unwrap().len(), 500);
            assert_eq!(x.radar.len(), 40);
            assert_eq!(x.lidar_labels.len(), 500);
        }
        let mut c2 = c.clone();
        c2.seed += 1;
        assert_ne!(generate(&c2).unwrap().frames[0].lidar, a.frames[0].lidar);
    }

    #[test]
    fn noiseless_doppler_matches_relative_velocity() {
        let mut c = small();
        c.sensor.radar_noise = 0.0;
        c.sensor.doppler_noise = 0.0;
        c.sensor.lidar_noise = 0.0;
        let scene = generate(&c).unwrap();
        for f in &scene.frames {
            let rot = f.pose.rotation;
            for (p, v) in f.radar.points().iter().zip(&f.radar_point_velocities) {
                let world = rot * p.position.coords + f.pose.translation;
                let d = (world - f.pose.translation).normalize();
                let expected = -d.dot(&(f.velocity - v));
                assert!((p.doppler - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn clutter_replaces_exact_count() {
        let mut c = small();
        c.smoke = vec![SmokeInterval { start: 2, end: 3, mode: SmokeMode::Clutter }];
        c.clutter = ClutterParams { fraction: 0.9, radius: 3.0 };
        let scene = generate(&c).unwrap();
        let f = &scene.frames[2];
        let n = f.lidar_labels.iter().filter(|l| l.class == PointClass::Clutter).count();
        assert_eq!(n, 450);
        for (p, l) in f.lidar.as_ref().unwrap().points().iter().zip(&f.lidar_labels) {
            if l.class == PointClass::Clutter {
                assert!(p.coords.norm() <= 3.0);
            }
        }
        assert_eq!(scene.smoke_flags(), vec![false, false, true, true, false, false]);
    }

    #[test]
    fn delete_drops_lidar_and_files() {
        let mut c = small();
        c.smoke = vec![SmokeInterval { start: 1, end: 1, mode: SmokeMode::Delete }];
        let scene = generate(&c).unwrap();
        assert!(scene.frames[1].lidar.is_none());
        let dir = tempfile::tempdir().unwrap();
        write_scene(dir.path(), &scene).unwrap();
        assert!(!dir.path().join("000001_lidar.csv").exists());
        assert!(dir.path().join("000001_radar.csv").exists());
        assert!(dir.path().join("000002_lidar.csv").exists());
        assert!(read_smoke_flags(&dir.path().join("smoke_frames.csv")).unwrap()[1]);
        let gt = crate::eval::read_tum(&dir.path().join("gt.tum")).unwrap();
        assert_eq!(gt.len(), 6);
    }

    #[test]
    fn labels_mark_actor_points() {
        let scene = generate(&small()).unwrap();
        let f = &scene.frames[0];
        let dynamic = f.lidar_labels.iter().filter(|l| l.class == PointClass::Dynamic).count();
        assert_eq!(dynamic, 30);
        let dir = tempfile::tempdir().unwrap();
        write_scene(dir.path(), &scene).unwrap();
        let ids = read_dynamic_lidar_ids(&dir.path().join(labels_file_name(0))).unwrap();
        assert_eq!(ids.len(), 30);
    }
}
