//! Point-cloud data types shared by every stage.
//!
//! Clouds are value types: an ordered list of points, each carrying a stable
//! integer id. Clouds read from disk get dense ids `0..n` by row order;
//! subsets produced by the pipeline keep the ids of their parent cloud so
//! that set operations stay id-based.

mod index;
mod io;

pub use index::{KdTree, Neighbor, SpatialIndex2, SpatialIndex3};
pub use io::{
    frame_file_name, labels_file_name, read_cloud, read_lidar_cloud, read_manifest,
    read_radar_cloud, write_lidar_cloud, write_manifest, write_radar_cloud, AnyCloud, CloudKind,
    FrameEntry,
};

use std::collections::HashSet;

use crate::error::{Error, Result};

pub type Point3 = nalgebra::Point3<f64>;
pub type Point2 = nalgebra::Point2<f64>;
pub type PointId = usize;

/// A radar return: 3D position plus measured radial (Doppler) velocity.
///
/// Sign convention: a static target seen from a sensor moving with velocity
/// `v` reports `doppler = -dir · v`, so approaching scenery is negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadarPoint {
    pub position: Point3,
    pub doppler: f64,
    pub power: Option<f64>,
}

impl RadarPoint {
    pub fn new(position: Point3, doppler: f64) -> Self {
        RadarPoint {
            position,
            doppler,
            power: None,
        }
    }
}

/// Anything with a 3D position.
pub trait Located {
    fn position(&self) -> Point3;
    fn is_finite(&self) -> bool;
}

impl Located for Point3 {
    fn position(&self) -> Point3 {
        *self
    }

    fn is_finite(&self) -> bool {
        self.coords.iter().all(|c| c.is_finite())
    }
}

impl Located for RadarPoint {
    fn position(&self) -> Point3 {
        self.position
    }

    fn is_finite(&self) -> bool {
        self.position.is_finite()
            && self.doppler.is_finite()
            && self.power.is_none_or(f64::is_finite)
    }
}

/// Timestamped point set with stable per-point ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Cloud<P> {
    pub timestamp: f64,
    pub frame_id: String,
    ids: Vec<PointId>,
    points: Vec<P>,
}

pub type LidarCloud = Cloud<Point3>;
pub type RadarCloud = Cloud<RadarPoint>;

impl<P: Located + Clone> Cloud<P> {
    /// Builds a cloud with dense ids assigned in list order.
    pub fn new(timestamp: f64, frame_id: impl Into<String>, points: Vec<P>) -> Result<Self> {
        let ids = (0..points.len()).collect();
        Self::from_parts(timestamp, frame_id, ids, points)
    }

    /// Builds a cloud with explicit ids, which must be unique.
    pub fn from_parts(
        timestamp: f64,
        frame_id: impl Into<String>,
        ids: Vec<PointId>,
        points: Vec<P>,
    ) -> Result<Self> {
        if !timestamp.is_finite() {
            return Err(Error::Validation(format!(
                "cloud timestamp {timestamp} is not finite"
            )));
        }
        if ids.len() != points.len() {
            return Err(Error::Validation(format!(
                "{} ids for {} points",
                ids.len(),
                points.len()
            )));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::Validation(format!(
                "point {} has a non-finite component",
                ids[i]
            )));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        if let Some(dup) = ids.iter().find(|id| !seen.insert(**id)) {
            return Err(Error::Validation(format!("duplicate point id {dup}")));
        }
        Ok(Cloud {
            timestamp,
            frame_id: frame_id.into(),
            ids,
            points,
        })
    }

    pub fn empty(timestamp: f64, frame_id: impl Into<String>) -> Self {
        Cloud {
            timestamp,
            frame_id: frame_id.into(),
            ids: Vec::new(),
            points: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn ids(&self) -> &[PointId] {
        &self.ids
    }

    pub fn points(&self) -> &[P] {
        &self.points
    }

    /// `(id, point)` pairs in storage order.
    pub fn iter(&self) -> impl Iterator<Item = (PointId, &P)> + '_ {
        self.ids.iter().copied().zip(self.points.iter())
    }

    pub fn positions(&self) -> Vec<Point3> {
        self.points.iter().map(Located::position).collect()
    }

    /// Keeps the points for which `keep(id, point)` holds, preserving ids
    /// and order.
    pub fn filter(&self, mut keep: impl FnMut(PointId, &P) -> bool) -> Self {
        let (ids, points) = self
            .iter()
            .filter(|(id, p)| keep(*id, p))
            .map(|(id, p)| (id, p.clone()))
            .unzip();
        Cloud {
            timestamp: self.timestamp,
            frame_id: self.frame_id.clone(),
            ids,
            points,
        }
    }
}

impl RadarCloud {
    /// Positions only, with ids kept.
    pub fn to_position_cloud(&self) -> LidarCloud {
        Cloud {
            timestamp: self.timestamp,
            frame_id: self.frame_id.clone(),
            ids: self.ids.clone(),
            points: self.positions(),
        }
    }
}

/// Drops `z`; output is parallel to `cloud.ids()`.
pub fn project_xy<P: Located + Clone>(cloud: &Cloud<P>) -> Vec<(PointId, Point2)> {
    cloud
        .iter()
        .map(|(id, p)| {
            let q = p.position();
            (id, Point2::new(q.x, q.y))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_ids_by_order() {
        let c = LidarCloud::new(
            1.0,
            "lidar",
            vec![Point3::new(0., 0., 0.), Point3::new(1., 2., 3.)],
        )
        .unwrap();
        assert_eq!(c.ids(), &[0, 1]);
    }

    #[test]
    fn rejects_nan_and_duplicate_ids() {
        assert!(LidarCloud::new(0.0, "l", vec![Point3::new(f64::NAN, 0., 0.)]).is_err());
        assert!(LidarCloud::new(f64::INFINITY, "l", vec![]).is_err());
        let p = Point3::origin();
        assert!(LidarCloud::from_parts(0.0, "l", vec![3, 3], vec![p, p]).is_err());
        let r = RadarPoint::new(p, f64::NAN);
        assert!(RadarCloud::new(0.0, "r", vec![r]).is_err());
    }

    #[test]
    fn projection_drops_z_keeps_ids() {
        let c = LidarCloud::from_parts(
            0.0,
            "l",
            vec![7, 2],
            vec![Point3::new(1., 2., 3.), Point3::new(0., 0., -5.)],
        )
        .unwrap();
        let xy = project_xy(&c);
        assert_eq!(xy[0], (7, Point2::new(1., 2.)));
        assert_eq!(xy[1], (2, Point2::new(0., 0.)));
    }

    #[test]
    fn projection_identity_on_plane() {
        let c = LidarCloud::new(0.0, "l", vec![Point3::new(4., -1., 0.)]).unwrap();
        let xy = project_xy(&c);
        assert_eq!(Point3::new(xy[0].1.x, xy[0].1.y, 0.0), c.points()[0]);
    }

    #[test]
    fn filter_preserves_ids() {
        let c = LidarCloud::new(0.0, "l", (0..5).map(|i| Point3::new(i as f64, 0., 0.)).collect())
            .unwrap();
        let odd = c.filter(|id, _| id % 2 == 1);
        assert_eq!(odd.ids(), &[1, 3]);
        assert_eq!(odd.points()[1].x, 3.0);
    }
}
