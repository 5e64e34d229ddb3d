//! Per-frame sensor selection: radar preprocessing, LiDAR degeneracy test,
//! dynamic removal, and the choice of the cloud handed to odometry.

use std::fmt;

use crate::cloud::{LidarCloud, RadarCloud, SpatialIndex3};
use crate::degeneracy::{self, DegeneracyParams, DegeneracyReport};
use crate::error::{Error, Result};
use crate::radar::{self, EgoVelocityEstimate, RadarSplit, RansacParams};
use crate::removal::{self, RemovalParams, RemovalResult};

#[derive(Debug, Clone, PartialEq)]
pub struct FrontEndParams {
    pub ransac: RansacParams,
    /// Doppler residual below which a radar point is static, m/s.
    pub split_threshold: f64,
    pub degeneracy: DegeneracyParams,
    pub removal: RemovalParams,
    /// Maximum LiDAR/radar timestamp difference, seconds.
    pub sync_tolerance: f64,
}

impl Default for FrontEndParams {
    fn default() -> Self {
        FrontEndParams {
            ransac: RansacParams::default(),
            split_threshold: 0.25,
            degeneracy: DegeneracyParams::default(),
            removal: RemovalParams::default(),
            sync_tolerance: 0.05,
        }
    }
}

impl FrontEndParams {
    pub fn validate(&self) -> Result<()> {
        self.ransac.validate()?;
        if !(self.split_threshold > 0.0 && self.split_threshold.is_finite()) {
            return Err(Error::config("radar_preprocess.split_threshold", "must be > 0"));
        }
        self.degeneracy.validate()?;
        self.removal.validate()?;
        if !(self.sync_tolerance >= 0.0 && self.sync_tolerance.is_finite()) {
            return Err(Error::config("pipeline.sync_tolerance_s", "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Source {
    Lidar,
    Radar,
    Skip,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Lidar => "lidar",
            Source::Radar => "radar",
            Source::Skip => "skip",
        })
    }
}

impl std::str::FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lidar" => Ok(Source::Lidar),
            "radar" => Ok(Source::Radar),
            "skip" => Ok(Source::Skip),
            other => Err(Error::Validation(format!("unknown source '{other}'"))),
        }
    }
}

/// The cloud handed to odometry for one frame, plus how it was chosen.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub timestamp: f64,
    pub source: Source,
    /// LiDAR static points (ids of the LiDAR frame) or radar static positions
    /// (ids of the radar frame); empty on skip.
    pub cloud: LidarCloud,
    pub degeneracy: DegeneracyReport,
    pub removal: Option<RemovalResult>,
    pub ego: Option<EgoVelocityEstimate>,
    pub split: Option<RadarSplit>,
}

impl SelectionResult {
    pub fn n_removed(&self) -> usize {
        self.removal.as_ref().map_or(0, |r| r.dynamic_lidar_ids.len())
    }

    /// A frame with no usable cloud.
    pub fn skip(timestamp: f64, degeneracy: DegeneracyReport, ego: Option<EgoVelocityEstimate>) -> Self {
        SelectionResult {
            timestamp,
            source: Source::Skip,
            cloud: LidarCloud::empty(timestamp, "skip"),
            degeneracy,
            removal: None,
            ego,
            split: None,
        }
    }
}

/// Radar ego-velocity and static/dynamic split; `None` when the frame's
/// radar data cannot support an estimate.
pub fn preprocess_radar(radar: &RadarCloud, params: &FrontEndParams) -> (Option<EgoVelocityEstimate>, Option<RadarSplit>) {
    match radar::estimate_ego_velocity(radar, &params.ransac) {
        Ok(ego) if ego.converged => {
            let split = radar::split_static_dynamic(radar, &ego, params.split_threshold).ok();
            (Some(ego), split)
        }
        Ok(ego) => {
            log::debug!("radar t={}: ego velocity did not converge", radar.timestamp);
            (Some(ego), None)
        }
        Err(e) => {
            log::debug!("radar t={}: {e}", radar.timestamp);
            (None, None)
        }
    }
}

/// Runs the full selection for one frame. `lidar = None` marks a deleted
/// scan, which is never used.
pub fn select(lidar: Option<&LidarCloud>, radar: &RadarCloud, params: &FrontEndParams) -> Result<SelectionResult> {
    params.validate()?;
    if let Some(l) = lidar {
        if !l.is_empty() && !radar.is_empty() && (l.timestamp - radar.timestamp).abs() > params.sync_tolerance {
            return Err(Error::Sync {
                lidar_t: l.timestamp,
                radar_t: radar.timestamp,
                tolerance: params.sync_tolerance,
            });
        }
    }
    let timestamp = radar.timestamp;
    let (ego, split) = preprocess_radar(radar, params);
    let empty_static = RadarCloud::empty(timestamp, "radar");
    let radar_static = split.as_ref().map_or(&empty_static, |s| &s.static_cloud);

    let degeneracy = match lidar {
        Some(l) => {
            let index = SpatialIndex3::from_points(l.iter());
            let stats = degeneracy::match_ratio_with_index(&index, radar_static, params.degeneracy.match_distance);
            degeneracy::is_lidar_usable(stats, &params.degeneracy)
        }
        None => DegeneracyReport::without_lidar(radar_static.len()),
    };

    if let (true, Some(l), Some(s)) = (degeneracy.use_lidar, lidar, split.as_ref()) {
        let removal = removal::remove_dynamic(l, &s.dynamic_cloud, &params.removal)?;
        return Ok(SelectionResult {
            timestamp,
            source: Source::Lidar,
            cloud: removal.static_lidar.clone(),
            degeneracy,
            removal: Some(removal),
            ego,
            split,
        });
    }

    if radar_static.is_empty() {
        let mut skipped = SelectionResult::skip(timestamp, degeneracy, ego);
        skipped.split = split;
        return Ok(skipped);
    }
    Ok(SelectionResult {
        timestamp,
        source: Source::Radar,
        cloud: radar_static.to_position_cloud(),
        degeneracy,
        removal: None,
        ego,
        split,
    })
}

/// LiDAR-only baseline: the raw LiDAR frame when present, otherwise skip.
/// No radar processing or dynamic removal.
pub fn select_lidar_only(lidar: Option<&LidarCloud>, timestamp: f64) -> SelectionResult {
    match lidar {
        Some(l) if !l.is_empty() => SelectionResult {
            timestamp,
            source: Source::Lidar,
            cloud: l.clone(),
            degeneracy: DegeneracyReport {
                n_matched: 0,
                n_radar_static: 0,
                ratio: 0.0,
                use_lidar: true,
                matched_lidar_ids: Default::default(),
            },
            removal: None,
            ego: None,
            split: None,
        },
        _ => SelectionResult::skip(timestamp, DegeneracyReport::without_lidar(0), None),
    }
}
