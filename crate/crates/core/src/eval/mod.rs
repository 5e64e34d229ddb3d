//! Trajectory accuracy (APE/RPE RMSE) and degeneracy-detection recall.

mod trajectory;

pub use trajectory::{format_significant, format_tum, parse_tum, read_tum, write_tum, Trajectory};

use nalgebra::Isometry3;

use crate::cloud::Point3;
use crate::error::{Error, Result};
use crate::geometry::rigid_fit;

/// Greedy nearest-timestamp association. Candidate pairs with
/// `|Δt| <= max_dt` are taken in order of increasing `|Δt|`, each pose used at
/// most once. Result is sorted by estimate index.
pub fn associate(est: &Trajectory, gt: &Trajectory, max_dt: f64) -> Result<Vec<(usize, usize)>> {
    if !(max_dt > 0.0) {
        return Err(Error::Evaluation("max_dt must be > 0".into()));
    }
    let gt_t: Vec<f64> = gt.poses().iter().map(|p| p.timestamp).collect();
    let mut candidates = Vec::new();
    for (i, p) in est.poses().iter().enumerate() {
        let lo = gt_t.partition_point(|&t| t < p.timestamp - max_dt);
        for (j, &t) in gt_t.iter().enumerate().skip(lo) {
            let dt = (t - p.timestamp).abs();
            if t > p.timestamp + max_dt {
                break;
            }
            if dt <= max_dt {
                candidates.push((dt, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut est_used = vec![false; est.len()];
    let mut gt_used = vec![false; gt.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if !est_used[i] && !gt_used[j] {
            est_used[i] = true;
            gt_used[j] = true;
            pairs.push((i, j));
        }
    }
    if pairs.is_empty() {
        return Err(Error::Evaluation(format!(
            "no estimate/ground-truth timestamps within {max_dt} s"
        )));
    }
    pairs.sort_unstable();
    Ok(pairs)
}

/// Rigid (unit-scale) transform taking estimated positions onto ground truth.
pub fn align_rigid(est_positions: &[Point3], gt_positions: &[Point3]) -> Result<Isometry3<f64>> {
    rigid_fit(est_positions, gt_positions).ok_or_else(|| {
        Error::Evaluation("alignment needs at least 3 non-collinear positions".into())
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApeResult {
    pub rmse: f64,
    pub alignment: Isometry3<f64>,
    /// Alignment was requested but the geometry was degenerate, so identity
    /// was used.
    pub alignment_degenerate: bool,
    pub n_pairs: usize,
}

fn paired_positions(est: &Trajectory, gt: &Trajectory, pairs: &[(usize, usize)]) -> (Vec<Point3>, Vec<Point3>) {
    pairs
        .iter()
        .map(|&(i, j)| {
            (
                Point3::from(est.poses()[i].translation),
                Point3::from(gt.poses()[j].translation),
            )
        })
        .unzip()
}

/// Translational absolute pose error after (optional) rigid alignment.
pub fn ape(est: &Trajectory, gt: &Trajectory, max_dt: f64, align: bool) -> Result<ApeResult> {
    let pairs = associate(est, gt, max_dt)?;
    let (e, g) = paired_positions(est, gt, &pairs);
    let (alignment, alignment_degenerate) = if align {
        match align_rigid(&e, &g) {
            Ok(t) => (t, false),
            Err(err) => {
                log::warn!("{err}; APE computed without alignment");
                (Isometry3::identity(), true)
            }
        }
    } else {
        (Isometry3::identity(), false)
    };
    let sum: f64 = e.iter().zip(&g).map(|(a, b)| (alignment * a - b).norm_squared()).sum();
    Ok(ApeResult {
        rmse: (sum / pairs.len() as f64).sqrt(),
        alignment,
        alignment_degenerate,
        n_pairs: pairs.len(),
    })
}

pub fn ape_rmse(est: &Trajectory, gt: &Trajectory, max_dt: f64) -> Result<f64> {
    Ok(ape(est, gt, max_dt, true)?.rmse)
}

/// Translational relative pose error over `delta`-frame increments of the
/// associated sequence.
pub fn rpe_rmse(est: &Trajectory, gt: &Trajectory, max_dt: f64, delta: usize) -> Result<f64> {
    if delta == 0 {
        return Err(Error::Evaluation("rpe delta must be >= 1".into()));
    }
    let pairs = associate(est, gt, max_dt)?;
    if pairs.len() < delta + 1 {
        return Err(Error::Evaluation(format!(
            "{} associated poses, need {} for delta {delta}",
            pairs.len(),
            delta + 1
        )));
    }
    let iso = |t: &Trajectory, k: usize| t.poses()[k].isometry();
    let mut sum = 0.0;
    let n = pairs.len() - delta;
    for k in 0..n {
        let (ei, gi) = pairs[k];
        let (ej, gj) = pairs[k + delta];
        let rel_est = iso(est, ei).inverse() * iso(est, ej);
        let rel_gt = iso(gt, gi).inverse() * iso(gt, gj);
        let err = rel_gt.inverse() * rel_est;
        sum += err.translation.vector.norm_squared();
    }
    Ok((sum / n as f64).sqrt())
}

/// Fraction of smoke frames on which LiDAR was rejected.
pub fn detection_recall(use_lidar: &[bool], gt_smoke: &[bool]) -> Result<f64> {
    if use_lidar.len() != gt_smoke.len() {
        return Err(Error::Evaluation(format!(
            "{} decisions for {} labels",
            use_lidar.len(),
            gt_smoke.len()
        )));
    }
    let smoke = gt_smoke.iter().filter(|s| **s).count();
    if smoke == 0 {
        return Err(Error::Evaluation("recall undefined: no smoke frames".into()));
    }
    let detected = use_lidar.iter().zip(gt_smoke).filter(|(u, s)| **s && !**u).count();
    Ok(detected as f64 / smoke as f64)
}

/// Fraction of clean frames on which LiDAR was (wrongly) rejected.
pub fn false_positive_rate(use_lidar: &[bool], gt_smoke: &[bool]) -> Result<f64> {
    let inverted: Vec<bool> = gt_smoke.iter().map(|s| !s).collect();
    detection_recall(use_lidar, &inverted)
        .map_err(|_| Error::Evaluation("false-positive rate undefined: no clean frames".into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub max_dt: f64,
    pub rpe_delta: usize,
    pub align: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            max_dt: 0.02,
            rpe_delta: 1,
            align: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub ape_rmse: f64,
    pub rpe_rmse: f64,
    pub n_poses_evaluated: usize,
    pub alignment: Isometry3<f64>,
    pub alignment_degenerate: bool,
    pub options: EvalOptions,
    pub recall: Option<f64>,
    pub false_positive_rate: Option<f64>,
}

pub fn evaluate(est: &Trajectory, gt: &Trajectory, options: &EvalOptions) -> Result<MetricReport> {
    let a = ape(est, gt, options.max_dt, options.align)?;
    let rpe = rpe_rmse(est, gt, options.max_dt, options.rpe_delta)?;
    Ok(MetricReport {
        ape_rmse: a.rmse,
        rpe_rmse: rpe,
        n_poses_evaluated: a.n_pairs,
        alignment: a.alignment,
        alignment_degenerate: a.alignment_degenerate,
        options: options.clone(),
        recall: None,
        false_positive_rate: None,
    })
}

impl MetricReport {
    /// Flat JSON object; keys sorted.
    pub fn to_json(&self) -> String {
        let mut m = serde_json::Map::new();
        m.insert("ape_rmse".into(), self.ape_rmse.into());
        m.insert("rpe_rmse".into(), self.rpe_rmse.into());
        m.insert("n_poses_evaluated".into(), self.n_poses_evaluated.into());
        m.insert("rpe_delta".into(), self.options.rpe_delta.into());
        m.insert("max_dt".into(), self.options.max_dt.into());
        m.insert("aligned".into(), self.options.align.into());
        m.insert("alignment_degenerate".into(), self.alignment_degenerate.into());
        if let Some(r) = self.recall {
            m.insert("recall".into(), r.into());
        }
        if let Some(f) = self.false_positive_rate {
            m.insert("false_positive_rate".into(), f.into());
        }
        let mut s = serde_json::to_string_pretty(&serde_json::Value::Object(m)).expect("serializable");
        s.push('\n');
        s
    }
}
