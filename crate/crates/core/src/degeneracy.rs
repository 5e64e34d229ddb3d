//! LiDAR degeneracy test.
//!
//! Each radar static point looks up its nearest LiDAR point; the fraction of
//! radar points with a LiDAR neighbor closer than `match_distance` decides
//! whether the LiDAR frame still describes the static scene.

use std::collections::BTreeSet;

use crate::cloud::{LidarCloud, PointId, RadarCloud, SpatialIndex3};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DegeneracyParams {
    /// Radar-to-LiDAR nearest-neighbor distance below which a radar point
    /// counts as matched, meters.
    pub match_distance: f64,
    /// LiDAR is used only when the match ratio strictly exceeds this.
    pub ratio_threshold: f64,
}

impl Default for DegeneracyParams {
    fn default() -> Self {
        DegeneracyParams {
            match_distance: 0.5,
            ratio_threshold: 0.5,
        }
    }
}

impl DegeneracyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.match_distance > 0.0 && self.match_distance.is_finite()) {
            return Err(Error::config("degeneracy.match_distance", "must be > 0"));
        }
        if !(self.ratio_threshold > 0.0 && self.ratio_threshold <= 1.0) {
            return Err(Error::config("degeneracy.ratio_threshold", "must be in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchStats {
    pub n_matched: usize,
    pub n_radar_static: usize,
    pub ratio: f64,
    pub matched_lidar_ids: BTreeSet<PointId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegeneracyReport {
    pub n_matched: usize,
    pub n_radar_static: usize,
    pub ratio: f64,
    pub use_lidar: bool,
    pub matched_lidar_ids: BTreeSet<PointId>,
}

impl DegeneracyReport {
    /// Report for a frame without LiDAR data: never usable.
    pub fn without_lidar(n_radar_static: usize) -> Self {
        DegeneracyReport {
            n_matched: 0,
            n_radar_static,
            ratio: 0.0,
            use_lidar: false,
            matched_lidar_ids: BTreeSet::new(),
        }
    }
}

/// Counts radar static points whose nearest LiDAR point is closer than
/// `match_distance`.
pub fn match_ratio(lidar: &LidarCloud, radar_static: &RadarCloud, match_distance: f64) -> MatchStats {
    let index = SpatialIndex3::from_points(lidar.iter());
    match_ratio_with_index(&index, radar_static, match_distance)
}

pub(crate) fn match_ratio_with_index(
    index: &SpatialIndex3,
    radar_static: &RadarCloud,
    match_distance: f64,
) -> MatchStats {
    let mut n_matched = 0;
    let mut matched_lidar_ids = BTreeSet::new();
    for p in radar_static.points() {
        if let Some(nn) = index.nearest_to(&p.position) {
            if nn.distance < match_distance {
                n_matched += 1;
                matched_lidar_ids.insert(nn.id);
            }
        }
    }
    let n_radar_static = radar_static.len();
    let ratio = if n_radar_static > 0 {
        n_matched as f64 / n_radar_static as f64
    } else {
        0.0
    };
    MatchStats {
        n_matched,
        n_radar_static,
        ratio,
        matched_lidar_ids,
    }
}

pub fn is_lidar_usable(stats: MatchStats, params: &DegeneracyParams) -> DegeneracyReport {
    DegeneracyReport {
        use_lidar: stats.ratio > params.ratio_threshold,
        n_matched: stats.n_matched,
        n_radar_static: stats.n_radar_static,
        ratio: stats.ratio,
        matched_lidar_ids: stats.matched_lidar_ids,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{Point3, RadarPoint};
    use proptest::prelude::*;

    fn lidar(points: Vec<Point3>) -> LidarCloud {
        LidarCloud::new(0.0, "lidar", points).unwrap()
    }

    fn radar(points: &[Point3]) -> RadarCloud {
        RadarCloud::new(0.0, "radar", points.iter().map(|p| RadarPoint::new(*p, 0.0)).collect()).unwrap()
    }

    fn stats(ratio: f64) -> MatchStats {
        MatchStats {
            n_matched: 0,
            n_radar_static: 0,
            ratio,
            matched_lidar_ids: BTreeSet::new(),
        }
    }

    fn brute(lidar: &[Point3], radar: &[Point3], d: f64) -> (usize, BTreeSet<PointId>) {
        let mut n = 0;
        let mut ids = BTreeSet::new();
        for r in radar {
            let best = lidar
                .iter()
                .enumerate()
                .map(|(i, l)| ((l - r).norm(), i))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            if let Some((dist, i)) = best {
                if dist < d {
                    n += 1;
                    ids.insert(i);
                }
            }
        }
        (n, ids)
    }

    #[test]
    fn coincident_points_all_match() {
        let pts: Vec<_> = (0..10).map(|i| Point3::new(i as f64, 1.0, 0.0)).collect();
        let s = match_ratio(&lidar(pts.clone()), &radar(&pts), 0.5);
        assert_eq!(s.n_matched, 10);
        assert_eq!(s.ratio, 1.0);
    }

    #[test]
    fn empty_lidar_or_radar() {
        let r = radar(&[Point3::new(1.0, 0.0, 0.0); 5]);
        let s = match_ratio(&lidar(vec![]), &r, 0.5);
        assert_eq!((s.n_matched, s.ratio), (0, 0.0));
        assert!(s.matched_lidar_ids.is_empty());
        let s = match_ratio(&lidar(vec![Point3::origin()]), &radar(&[]), 0.5);
        assert_eq!(s.ratio, 0.0);
        assert!(!is_lidar_usable(s, &DegeneracyParams::default()).use_lidar);
    }

    #[test]
    fn three_of_four() {
        let r = [
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(5.0, 0.0, 0.0),
            Point3::new(0.0, 5.0, 0.0),
            Point3::new(0.0, 0.0, 5.0),
        ];
        let l = vec![
            Point3::new(0.3, 0.0, 0.0),
            Point3::new(5.0, 0.49, 0.0),
            Point3::new(0.0, 5.0, 0.2),
            Point3::new(0.0, 0.0, 5.6),
        ];
        let (n, _) = brute(&l, &r, 0.5);
        assert_eq!(n, 3);
        let s = match_ratio(&lidar(l), &radar(&r), 0.5);
        assert_eq!(s.ratio, 0.75);
    }

    #[test]
    fn strict_threshold() {
        let p = DegeneracyParams::default();
        assert!(is_lidar_usable(stats(0.75), &p).use_lidar);
        assert!(!is_lidar_usable(stats(0.2), &p).use_lidar);
        assert!(!is_lidar_usable(stats(0.5), &p).use_lidar);
    }

    #[test]
    fn duplicate_lidar_ids_collapse() {
        let r = radar(&[Point3::new(0.0, 0.0, 0.0), Point3::new(0.1, 0.0, 0.0)]);
        let s = match_ratio(&lidar(vec![Point3::new(0.05, 0.0, 0.0)]), &r, 0.5);
        assert_eq!(s.n_matched, 2);
        assert_eq!(s.matched_lidar_ids.len(), 1);
    }

    fn cloud_strategy(max: usize) -> impl Strategy<Value = Vec<Point3>> {
        prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0, -2.0f64..2.0), 0..max)
            .prop_map(|v| v.into_iter().map(|(x, y, z)| Point3::new(x, y, z)).collect())
    }

    proptest! {
        #[test]
        fn agrees_with_brute_force(l in cloud_strategy(300), r in cloud_strategy(100), d in 0.05f64..3.0) {
            let s = match_ratio(&lidar(l.clone()), &radar(&r), d);
            let (n, ids) = brute(&l, &r, d);
            prop_assert_eq!(s.n_matched, n);
            prop_assert_eq!(s.matched_lidar_ids, ids);
            prop_assert!((0.0..=1.0).contains(&s.ratio));
        }

        #[test]
        fn monotone_in_match_distance(l in cloud_strategy(200), r in cloud_strategy(60), d in 0.05f64..2.0, extra in 0.0f64..2.0) {
            let l = lidar(l);
            let r = radar(&r);
            prop_assert!(match_ratio(&l, &r, d).n_matched <= match_ratio(&l, &r, d + extra).n_matched);
        }

        #[test]
        fn far_lidar_forces_radar(r in cloud_strategy(60), d in 0.05f64..2.0, thr in 0.001f64..1.0) {
            // every LiDAR point lies beyond d from all radar points
            let l = lidar((0..50).map(|i| Point3::new(100.0 + i as f64, 100.0, 0.0)).collect());
            let p = DegeneracyParams { match_distance: d, ratio_threshold: thr };
            prop_assert!(!is_lidar_usable(match_ratio(&l, &radar(&r), d), &p).use_lidar);
        }
    }
}
