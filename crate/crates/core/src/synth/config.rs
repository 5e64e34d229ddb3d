//! Scene description, read from the same INI dialect as the pipeline config.

use std::fmt::Write as _;
use std::path::Path;

use crate::config::KeyValues;
use crate::error::{Error, Result};

/// Axis-aligned box `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmokeMode {
    /// The frame's LiDAR file is not written.
    Delete,
    /// Most LiDAR returns are replaced by short-range clutter.
    Clutter,
}

impl SmokeMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SmokeMode::Delete => "delete",
            SmokeMode::Clutter => "clutter",
        }
    }
}

/// Inclusive frame range under smoke.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmokeInterval {
    pub start: usize,
    pub end: usize,
    pub mode: SmokeMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClutterParams {
    pub fraction: f64,
    pub radius: f64,
}

impl Default for ClutterParams {
    fn default() -> Self {
        ClutterParams {
            fraction: 0.9,
            radius: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathSpec {
    pub waypoints: Vec<[f64; 2]>,
    pub speed: f64,
    pub closed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorSpec {
    pub path: PathSpec,
    pub radius: f64,
    pub height: f64,
    pub lidar_points: usize,
    pub radar_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorSpec {
    pub rate_hz: f64,
    pub height: f64,
    pub lidar_points: usize,
    pub radar_points: usize,
    pub lidar_max_range: f64,
    pub radar_max_range: f64,
    pub min_range: f64,
    pub lidar_noise: f64,
    pub radar_noise: f64,
    pub doppler_noise: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub frames: usize,
    pub seed: u64,
    /// Enclosing room; its walls and floor face inward.
    pub room: Option<Aabb>,
    /// Obstacles; faces point outward.
    pub boxes: Vec<Aabb>,
    /// Grid spacing of the static surface samples, meters.
    pub surface_spacing: f64,
    pub trajectory: PathSpec,
    /// Heading follows the path chord over +-this arc length, meters.
    pub heading_window: f64,
    pub sensor: SensorSpec,
    pub actors: Vec<ActorSpec>,
    pub smoke: Vec<SmokeInterval>,
    pub clutter: ClutterParams,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            frames: 200,
            seed: 1,
            room: Some(Aabb {
                min: [-20.0, -15.0, 0.0],
                max: [20.0, 15.0, 4.0],
            }),
            boxes: vec![
                Aabb { min: [-6.0, -3.0, 0.0], max: [-4.0, 3.0, 2.5] },
                Aabb { min: [4.0, -2.0, 0.0], max: [7.0, 1.0, 1.5] },
                Aabb { min: [-15.0, 8.0, 0.0], max: [-12.0, 10.0, 3.0] },
                Aabb { min: [12.0, -11.0, 0.0], max: [14.0, -8.0, 2.0] },
            ],
            surface_spacing: 0.2,
            trajectory: PathSpec {
                waypoints: vec![[-12.0, -8.0], [12.0, -8.0], [12.0, 7.0], [-12.0, 7.0]],
                speed: 1.5,
                closed: true,
            },
            heading_window: 2.0,
            sensor: SensorSpec {
                rate_hz: 10.0,
                height: 1.5,
                lidar_points: 4096,
                radar_points: 128,
                lidar_max_range: 40.0,
                radar_max_range: 40.0,
                min_range: 0.5,
                lidar_noise: 0.02,
                radar_noise: 0.05,
                doppler_noise: 0.05,
            },
            actors: Vec::new(),
            smoke: Vec::new(),
            clutter: ClutterParams::default(),
        }
    }
}

fn parse_list<const N: usize>(key: &str, raw: &str) -> Result<Vec<[f64; N]>> {
    raw.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let vals: Vec<f64> = item
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::config(key, format!("cannot parse '{item}'")))?;
            <[f64; N]>::try_from(vals)
                .map_err(|_| Error::config(key, format!("'{item}' needs {N} comma-separated numbers")))
        })
        .collect()
}

fn aabb(key: &str, v: [f64; 6]) -> Result<Aabb> {
    let b = Aabb {
        min: [v[0], v[1], v[2]],
        max: [v[3], v[4], v[5]],
    };
    if (0..3).any(|k| !(b.max[k] > b.min[k])) || v.iter().any(|x| !x.is_finite()) {
        return Err(Error::config(key, "box max must exceed min on every axis"));
    }
    Ok(b)
}

fn parse_intervals(key: &str, raw: &str) -> Result<Vec<SmokeInterval>> {
    raw.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let bad = || Error::config(key, format!("expected 'start-end:mode', found '{item}'"));
            let (range, mode) = item.split_once(':').ok_or_else(bad)?;
            let (a, b) = range.split_once('-').ok_or_else(bad)?;
            let start = a.trim().parse::<usize>().map_err(|_| bad())?;
            let end = b.trim().parse::<usize>().map_err(|_| bad())?;
            let mode = match mode.trim() {
                "delete" => SmokeMode::Delete,
                "clutter" => SmokeMode::Clutter,
                other => return Err(Error::config(key, format!("unknown smoke mode '{other}'"))),
            };
            Ok(SmokeInterval { start, end, mode })
        })
        .collect()
}

fn fmt_list<const N: usize>(items: &[[f64; N]]) -> String {
    items
        .iter()
        .map(|it| it.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","))
        .collect::<Vec<_>>()
        .join("; ")
}

impl SceneConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KeyValues::parse(text)?;
        let d = SceneConfig::default();

        let frames = kv.get_or("scene.frames", d.frames)?;
        let seed = kv.get_or("scene.seed", d.seed)?;

        let room = match kv.raw("world.room") {
            Some(r) if r == "none" => None,
            Some(r) => {
                let v = parse_list::<6>("world.room", &r)?;
                match v.as_slice() {
                    [one] => Some(aabb("world.room", *one)?),
                    _ => return Err(Error::config("world.room", "expects exactly one box")),
                }
            }
            None => d.room,
        };
        let boxes = match kv.raw("world.boxes") {
            Some(r) => parse_list::<6>("world.boxes", &r)?
                .into_iter()
                .map(|v| aabb("world.boxes", v))
                .collect::<Result<_>>()?,
            None => d.boxes.clone(),
        };
        let surface_spacing = kv.get_or("world.spacing", d.surface_spacing)?;

        let trajectory = PathSpec {
            waypoints: match kv.raw("trajectory.waypoints") {
                Some(r) => parse_list::<2>("trajectory.waypoints", &r)?,
                None => d.trajectory.waypoints.clone(),
            },
            speed: kv.get_or("trajectory.speed", d.trajectory.speed)?,
            closed: kv.get_or("trajectory.closed", d.trajectory.closed)?,
        };
        let heading_window = kv.get_or("trajectory.heading_window", d.heading_window)?;
        let sensor_height = kv.get_or("trajectory.height", d.sensor.height)?;

        let s = &d.sensor;
        let sensor = SensorSpec {
            rate_hz: kv.get_or("scene.rate_hz", s.rate_hz)?,
            height: sensor_height,
            lidar_points: kv.get_or("sensor.lidar_points", s.lidar_points)?,
            radar_points: kv.get_or("sensor.radar_points", s.radar_points)?,
            lidar_max_range: kv.get_or("sensor.lidar_max_range", s.lidar_max_range)?,
            radar_max_range: kv.get_or("sensor.radar_max_range", s.radar_max_range)?,
            min_range: kv.get_or("sensor.min_range", s.min_range)?,
            lidar_noise: kv.get_or("sensor.lidar_noise", s.lidar_noise)?,
            radar_noise: kv.get_or("sensor.radar_noise", s.radar_noise)?,
            doppler_noise: kv.get_or("sensor.doppler_noise", s.doppler_noise)?,
        };

        let mut actors = Vec::new();
        for section in kv.sections_with_prefix("actor") {
            let key = |k: &str| format!("{section}.{k}");
            let waypoints = match kv.raw(&key("waypoints")) {
                Some(r) => parse_list::<2>(&key("waypoints"), &r)?,
                None => return Err(Error::config(key("waypoints"), "required")),
            };
            actors.push(ActorSpec {
                path: PathSpec {
                    waypoints,
                    speed: kv.get_or(&key("speed"), 1.5)?,
                    closed: kv.get_or(&key("closed"), false)?,
                },
                radius: kv.get_or(&key("radius"), 0.25)?,
                height: kv.get_or(&key("height"), 1.8)?,
                lidar_points: kv.get_or(&key("lidar_points"), 40)?,
                radar_points: kv.get_or(&key("radar_points"), 8)?,
            });
        }

        let smoke = match kv.raw("smoke.intervals") {
            Some(r) => parse_intervals("smoke.intervals", &r)?,
            None => Vec::new(),
        };
        let clutter = ClutterParams {
            fraction: kv.get_or("smoke.clutter_fraction", d.clutter.fraction)?,
            radius: kv.get_or("smoke.clutter_radius", d.clutter.radius)?,
        };
        kv.finish()?;

        let cfg = SceneConfig {
            frames,
            seed,
            room,
            boxes,
            surface_spacing,
            trajectory,
            heading_window,
            sensor,
            actors,
            smoke,
            clutter,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        let non_negative = |v: f64| v >= 0.0 && v.is_finite();
        if self.frames < 1 {
            return Err(Error::config("scene.frames", "must be >= 1"));
        }
        if !positive(self.sensor.rate_hz) {
            return Err(Error::config("scene.rate_hz", "must be > 0"));
        }
        if !positive(self.surface_spacing) {
            return Err(Error::config("world.spacing", "must be > 0"));
        }
        if self.room.is_none() && self.boxes.is_empty() {
            return Err(Error::config("world.room", "world has no surfaces"));
        }
        if self.trajectory.waypoints.is_empty() {
            return Err(Error::config("trajectory.waypoints", "needs at least one waypoint"));
        }
        if !non_negative(self.trajectory.speed) {
            return Err(Error::config("trajectory.speed", "must be >= 0"));
        }
        if !non_negative(self.heading_window) {
            return Err(Error::config("trajectory.heading_window", "must be >= 0"));
        }
        if let Some(room) = &self.room {
            let inside = |w: &[f64; 2]| (0..2).all(|k| w[k] > room.min[k] && w[k] < room.max[k]);
            if !self.trajectory.waypoints.iter().all(inside) {
                return Err(Error::config("trajectory.waypoints", "waypoint outside the room"));
            }
            if !(self.sensor.height > room.min[2] && self.sensor.height < room.max[2]) {
                return Err(Error::config("trajectory.height", "sensor height outside the room"));
            }
        }
        let s = &self.sensor;
        for (key, v) in [
            ("sensor.lidar_max_range", s.lidar_max_range),
            ("sensor.radar_max_range", s.radar_max_range),
            ("sensor.min_range", s.min_range),
        ] {
            if !positive(v) {
                return Err(Error::config(key, "must be > 0"));
            }
        }
        for (key, v) in [
            ("sensor.lidar_noise", s.lidar_noise),
            ("sensor.radar_noise", s.radar_noise),
            ("sensor.doppler_noise", s.doppler_noise),
        ] {
            if !non_negative(v) {
                return Err(Error::config(key, "must be >= 0"));
            }
        }
        for (i, a) in self.actors.iter().enumerate() {
            if a.path.waypoints.is_empty() {
                return Err(Error::config(format!("actor{i}.waypoints"), "needs at least one waypoint"));
            }
            if !non_negative(a.path.speed) {
                return Err(Error::config(format!("actor{i}.speed"), "must be >= 0"));
            }
            if !positive(a.radius) || !positive(a.height) {
                return Err(Error::config(format!("actor{i}.radius"), "radius and height must be > 0"));
            }
        }
        for iv in &self.smoke {
            if iv.end < iv.start {
                return Err(Error::config(
                    "smoke.intervals",
                    format!("interval {}-{} ends before it starts", iv.start, iv.end),
                ));
            }
            if iv.end >= self.frames {
                return Err(Error::config(
                    "smoke.intervals",
                    format!("interval {}-{} exceeds {} frames", iv.start, iv.end, self.frames),
                ));
            }
        }
        if !(self.clutter.fraction >= 0.0 && self.clutter.fraction <= 1.0) {
            return Err(Error::config("smoke.clutter_fraction", "must be in [0, 1]"));
        }
        if !positive(self.clutter.radius) {
            return Err(Error::config("smoke.clutter_radius", "must be > 0"));
        }
        Ok(())
    }

    pub fn smoke_at(&self, frame: usize) -> Option<SmokeMode> {
        self.smoke
            .iter()
            .find(|iv| (iv.start..=iv.end).contains(&frame))
            .map(|iv| iv.mode)
    }

    /// INI text that parses back to this configuration.
    pub fn to_ini(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[scene]\nframes = {}\nseed = {}\nrate_hz = {}", self.frames, self.seed, self.sensor.rate_hz);
        let _ = writeln!(s, "\n[world]");
        match &self.room {
            Some(r) => {
                let _ = writeln!(s, "room = {}", fmt_list(&[[r.min[0], r.min[1], r.min[2], r.max[0], r.max[1], r.max[2]]]));
            }
            None => {
                let _ = writeln!(s, "room = none");
            }
        }
        let boxes: Vec<[f64; 6]> = self
            .boxes
            .iter()
            .map(|b| [b.min[0], b.min[1], b.min[2], b.max[0], b.max[1], b.max[2]])
            .collect();
        let _ = writeln!(s, "boxes = {}", fmt_list(&boxes));
        let _ = writeln!(s, "spacing = {}", self.surface_spacing);
        let t = &self.trajectory;
        let _ = writeln!(
            s,
            "\n[trajectory]\nwaypoints = {}\nspeed = {}\nclosed = {}\nheight = {}\nheading_window = {}",
            fmt_list(&t.waypoints),
            t.speed,
            t.closed,
            self.sensor.height,
            self.heading_window
        );
        let c = &self.sensor;
        let _ = writeln!(
            s,
            "\n[sensor]\nlidar_points = {}\nradar_points = {}\nlidar_max_range = {}\nradar_max_range = {}\nmin_range = {}\nlidar_noise = {}\nradar_noise = {}\ndoppler_noise = {}",
            c.lidar_points, c.radar_points, c.lidar_max_range, c.radar_max_range, c.min_range, c.lidar_noise, c.radar_noise, c.doppler_noise
        );
        for (i, a) in self.actors.iter().enumerate() {
            let _ = writeln!(
                s,
                "\n[actor{i}]\nwaypoints = {}\nspeed = {}\nclosed = {}\nradius = {}\nheight = {}\nlidar_points = {}\nradar_points = {}",
                fmt_list(&a.path.waypoints),
                a.path.speed,
                a.path.closed,
                a.radius,
                a.height,
                a.lidar_points,
                a.radar_points
            );
        }
        let intervals: Vec<String> = self
            .smoke
            .iter()
            .map(|iv| format!("{}-{}:{}", iv.start, iv.end, iv.mode.as_str()))
            .collect();
        let _ = writeln!(
            s,
            "\n[smoke]\nintervals = {}\nclutter_fraction = {}\nclutter_radius = {}",
            intervals.join("; "),
            self.clutter.fraction,
            self.clutter.radius
        );
        s
    }
}
