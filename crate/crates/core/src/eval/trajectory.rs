use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::geometry::Pose;

/// Poses with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    poses: Vec<Pose>,
}

impl Trajectory {
    pub fn new(poses: Vec<Pose>) -> Result<Self> {
        for w in poses.windows(2) {
            if !(w[1].timestamp > w[0].timestamp) {
                return Err(Error::Validation(format!(
                    "trajectory timestamps not strictly increasing: {} then {}",
                    w[0].timestamp, w[1].timestamp
                )));
            }
        }
        if let Some(p) = poses.iter().find(|p| {
            !p.timestamp.is_finite() || !p.translation.iter().all(|v| v.is_finite()) || !p.rotation.coords.iter().all(|v| v.is_finite())
        }) {
            return Err(Error::Validation(format!("non-finite pose at t={}", p.timestamp)));
        }
        Ok(Trajectory { poses })
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

/// `%.{sig}g`-style formatting: `sig` significant digits, trailing zeros
/// trimmed, exponent notation outside `[1e-4, 10^sig)`.
pub fn format_significant(v: f64, sig: usize) -> String {
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{:.*e}", sig - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= sig as i32 {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (sig as i32 - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{v:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// One line per pose: `timestamp tx ty tz qx qy qz qw`, 9 significant digits.
pub fn format_tum(traj: &Trajectory) -> String {
    let mut s = String::new();
    for p in traj.poses() {
        let q = p.rotation.quaternion();
        let fields = [p.timestamp, p.translation.x, p.translation.y, p.translation.z, q.i, q.j, q.k, q.w];
        let line: Vec<String> = fields.iter().map(|v| format_significant(*v, 9)).collect();
        let _ = writeln!(s, "{}", line.join(" "));
    }
    s
}

pub fn write_tum(path: &Path, traj: &Trajectory) -> Result<()> {
    fs::write(path, format_tum(traj)).map_err(|e| Error::io(path, e))
}

pub fn parse_tum(text: &str, path: &Path) -> Result<Trajectory> {
    let mut poses = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message: e.to_string(),
            })?;
        if vals.len() != 8 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("expected 8 fields, found {}", vals.len()),
            });
        }
        let q = Quaternion::new(vals[7], vals[4], vals[5], vals[6]);
        if (q.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::Validation(format!(
                "{}:{line_no}: quaternion norm {} is not 1",
                path.display(),
                q.norm()
            )));
        }
        poses.push(Pose {
            timestamp: vals[0],
            translation: Vector3::new(vals[1], vals[2], vals[3]),
            rotation: UnitQuaternion::from_quaternion(q),
        });
    }
    Trajectory::new(poses)
}

pub fn read_tum(path: &Path) -> Result<Trajectory> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tum(&text, path)
}
