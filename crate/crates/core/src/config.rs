//! INI-style `[group]` / `key = value` configuration.
//!
//! Every key must be known to the consumer: [`KeyValues::finish`] rejects
//! whatever was not read. Missing keys take the documented defaults.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::eval::EvalOptions;
use crate::odometry::{IcpParams, SourceIcp};
use crate::radar::RansacParams;
use crate::removal::{RemovalParams, UncertaintyModel};
use crate::select::FrontEndParams;

/// Parsed key-value file with read tracking.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    values: BTreeMap<String, String>,
    used: BTreeSet<String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let ini = ini::Ini::load_from_str(text).map_err(|e| Error::config("<file>", e.to_string()))?;
        let mut values = BTreeMap::new();
        for (section, props) in ini.iter() {
            for (key, value) in props.iter() {
                let full = match section {
                    Some(s) => format!("{s}.{key}"),
                    None => key.to_string(),
                };
                if values.insert(full.clone(), value.trim().to_string()).is_some() {
                    return Err(Error::config(full, "duplicate key"));
                }
            }
        }
        Ok(KeyValues {
            values,
            used: BTreeSet::new(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn raw(&mut self, key: &str) -> Option<String> {
        let v = self.values.get(key).cloned();
        if v.is_some() {
            self.used.insert(key.to_string());
        }
        v
    }

    pub fn get<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|_| Error::config(key, format!("cannot parse '{v}'"))),
        }
    }

    pub fn get_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// All keys whose section starts with `prefix` (e.g. `actor`), in order.
    pub fn sections_with_prefix(&self, prefix: &str) -> Vec<String> {
        let mut out: Vec<String> = self
            .values
            .keys()
            .filter_map(|k| k.split_once('.').map(|(s, _)| s.to_string()))
            .filter(|s| s.starts_with(prefix))
            .collect();
        out.dedup();
        out
    }

    /// Fails on the first key nobody read.
    pub fn finish(self) -> Result<()> {
        match self.values.keys().find(|k| !self.used.contains(*k)) {
            Some(k) => Err(Error::config(k.clone(), "unknown key")),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PipelineMode {
    /// Full sensor selection.
    Fusion,
    /// Baseline without sensor selection: raw LiDAR, skip when missing.
    LidarOnly,
}

impl FromStr for PipelineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fusion" => Ok(PipelineMode::Fusion),
            "lidar_only" => Ok(PipelineMode::LidarOnly),
            other => Err(Error::config("pipeline.mode", format!("unknown mode '{other}'"))),
        }
    }
}

impl PipelineMode {
    fn as_str(self) -> &'static str {
        match self {
            PipelineMode::Fusion => "fusion",
            PipelineMode::LidarOnly => "lidar_only",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub front_end: FrontEndParams,
    pub odometry: IcpParams,
    pub evaluation: EvalOptions,
    pub mode: PipelineMode,
    /// Write `removed_<frame>.csv` with the LiDAR ids dropped as dynamic.
    pub dump_removed: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            front_end: FrontEndParams::default(),
            odometry: IcpParams::default(),
            evaluation: EvalOptions::default(),
            mode: PipelineMode::Fusion,
            dump_removed: false,
        }
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KeyValues::parse(text)?;
        let d = PipelineConfig::default();
        let r = &d.front_end.ransac;
        let ransac = RansacParams {
            max_iterations: kv.get_or("radar_preprocess.max_iterations", r.max_iterations)?,
            inlier_threshold: kv.get_or("radar_preprocess.inlier_threshold", r.inlier_threshold)?,
            min_inlier_ratio: kv.get_or("radar_preprocess.min_inlier_ratio", r.min_inlier_ratio)?,
            rng_seed: kv.get_or("radar_preprocess.rng_seed", r.rng_seed)?,
        };
        let split_threshold = kv.get_or("radar_preprocess.split_threshold", d.front_end.split_threshold)?;
        let dg = &d.front_end.degeneracy;
        let degeneracy = crate::degeneracy::DegeneracyParams {
            match_distance: kv.get_or("degeneracy.match_distance", dg.match_distance)?,
            ratio_threshold: kv.get_or("degeneracy.ratio_threshold", dg.ratio_threshold)?,
        };
        let rm = &d.front_end.removal;
        let removal = RemovalParams {
            pair_radius: kv.get_or("dynamic_removal.pair_radius", rm.pair_radius)?,
            mahalanobis_gate: kv.get_or("dynamic_removal.mahalanobis_gate", rm.mahalanobis_gate)?,
            uncertainty: UncertaintyModel {
                range_coeff: kv.get_or("dynamic_removal.sigma_r_coeff", rm.uncertainty.range_coeff)?,
                azimuth_angle_deg: kv.get_or("dynamic_removal.sigma_azimuth_deg", rm.uncertainty.azimuth_angle_deg)?,
                elevation_angle_deg: kv.get_or("dynamic_removal.sigma_elevation_deg", rm.uncertainty.elevation_angle_deg)?,
            },
        };
        let o = &d.odometry;
        let odometry = IcpParams {
            max_iterations: kv.get_or("odometry.max_iterations", o.max_iterations)?,
            convergence_translation: kv.get_or("odometry.convergence_translation", o.convergence_translation)?,
            convergence_rotation: kv.get_or("odometry.convergence_rotation", o.convergence_rotation)?,
            window_frames: kv.get_or("odometry.window_frames", o.window_frames)?,
            lidar: SourceIcp {
                correspondence_distance: kv.get_or("odometry.lidar_correspondence_distance", o.lidar.correspondence_distance)?,
                voxel_size: kv.get_or("odometry.lidar_voxel_size", o.lidar.voxel_size)?,
            },
            radar: SourceIcp {
                correspondence_distance: kv.get_or("odometry.radar_correspondence_distance", o.radar.correspondence_distance)?,
                voxel_size: kv.get_or("odometry.radar_voxel_size", o.radar.voxel_size)?,
            },
        };
        let e = &d.evaluation;
        let evaluation = EvalOptions {
            max_dt: kv.get_or("evaluation.max_dt", e.max_dt)?,
            rpe_delta: kv.get_or("evaluation.rpe_delta", e.rpe_delta)?,
            align: kv.get_or("evaluation.align", e.align)?,
        };
        let sync_tolerance = kv.get_or("pipeline.sync_tolerance_s", d.front_end.sync_tolerance)?;
        let mode = kv.get_or("pipeline.mode", d.mode)?;
        let dump_removed = kv.get_or("pipeline.dump_removed", d.dump_removed)?;
        kv.finish()?;

        let cfg = PipelineConfig {
            front_end: FrontEndParams {
                ransac,
                split_threshold,
                degeneracy,
                removal,
                sync_tolerance,
            },
            odometry,
            evaluation,
            mode,
            dump_removed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.front_end.validate()?;
        self.odometry.validate()?;
        if !(self.evaluation.max_dt > 0.0) {
            return Err(Error::config("evaluation.max_dt", "must be > 0"));
        }
        if self.evaluation.rpe_delta == 0 {
            return Err(Error::config("evaluation.rpe_delta", "must be >= 1"));
        }
        Ok(())
    }

    /// Effective configuration with every key spelled out.
    pub fn to_ini(&self) -> String {
        let f = &self.front_end;
        let o = &self.odometry;
        let mut s = String::new();
        let _ = writeln!(s, "[radar_preprocess]");
        let _ = writeln!(s, "max_iterations = {}", f.ransac.max_iterations);
        let _ = writeln!(s, "inlier_threshold = {}", f.ransac.inlier_threshold);
        let _ = writeln!(s, "min_inlier_ratio = {}", f.ransac.min_inlier_ratio);
        let _ = writeln!(s, "rng_seed = {}", f.ransac.rng_seed);
        let _ = writeln!(s, "split_threshold = {}", f.split_threshold);
        let _ = writeln!(s, "\n[degeneracy]");
        let _ = writeln!(s, "match_distance = {}", f.degeneracy.match_distance);
        let _ = writeln!(s, "ratio_threshold = {}", f.degeneracy.ratio_threshold);
        let _ = writeln!(s, "\n[dynamic_removal]");
        let _ = writeln!(s, "pair_radius = {}", f.removal.pair_radius);
        let _ = writeln!(s, "mahalanobis_gate = {}", f.removal.mahalanobis_gate);
        let _ = writeln!(s, "sigma_r_coeff = {}", f.removal.uncertainty.range_coeff);
        let _ = writeln!(s, "sigma_azimuth_deg = {}", f.removal.uncertainty.azimuth_angle_deg);
        let _ = writeln!(s, "sigma_elevation_deg = {}", f.removal.uncertainty.elevation_angle_deg);
        let _ = writeln!(s, "\n[odometry]");
        let _ = writeln!(s, "max_iterations = {}", o.max_iterations);
        let _ = writeln!(s, "convergence_translation = {}", o.convergence_translation);
        let _ = writeln!(s, "convergence_rotation = {}", o.convergence_rotation);
        let _ = writeln!(s, "window_frames = {}", o.window_frames);
        let _ = writeln!(s, "lidar_correspondence_distance = {}", o.lidar.correspondence_distance);
        let _ = writeln!(s, "lidar_voxel_size = {}", o.lidar.voxel_size);
        let _ = writeln!(s, "radar_correspondence_distance = {}", o.radar.correspondence_distance);
        let _ = writeln!(s, "radar_voxel_size = {}", o.radar.voxel_size);
        let _ = writeln!(s, "\n[evaluation]");
        let _ = writeln!(s, "max_dt = {}", self.evaluation.max_dt);
        let _ = writeln!(s, "rpe_delta = {}", self.evaluation.rpe_delta);
        let _ = writeln!(s, "align = {}", self.evaluation.align);
        let _ = writeln!(s, "\n[pipeline]");
        let _ = writeln!(s, "sync_tolerance_s = {}", f.sync_tolerance);
        let _ = writeln!(s, "mode = {}", self.mode.as_str());
        let _ = writeln!(s, "dump_removed = {}", self.dump_removed);
        s
    }
}
