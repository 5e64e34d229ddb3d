//! Static geometry and motion paths.

use nalgebra::{Vector2, Vector3};

use super::config::{Aabb, PathSpec};
use crate::cloud::Point3;

/// A sampled surface element with its outward normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Surfel {
    pub position: Point3,
    pub normal: Vector3<f64>,
}

/// Grid samples over the axis-aligned rectangle spanned by axes `u`, `v`
/// at fixed coordinate `w_value` on axis `w`.
fn sample_face(
    out: &mut Vec<Surfel>,
    b: &Aabb,
    w: usize,
    w_value: f64,
    normal_sign: f64,
    spacing: f64,
) {
    let (u, v) = match w {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let nu = ((b.max[u] - b.min[u]) / spacing).round().max(1.0) as usize;
    let nv = ((b.max[v] - b.min[v]) / spacing).round().max(1.0) as usize;
    let du = (b.max[u] - b.min[u]) / nu as f64;
    let dv = (b.max[v] - b.min[v]) / nv as f64;
    let mut normal = Vector3::zeros();
    normal[w] = normal_sign;
    for i in 0..nu {
        for j in 0..nv {
            let mut p = Point3::origin();
            p[w] = w_value;
            p[u] = b.min[u] + (i as f64 + 0.5) * du;
            p[v] = b.min[v] + (j as f64 + 0.5) * dv;
            out.push(Surfel { position: p, normal });
        }
    }
}

/// Surface samples of the room interior (walls and floor, no ceiling) and
/// of every obstacle (sides and top).
pub fn sample_world(room: Option<&Aabb>, boxes: &[Aabb], spacing: f64) -> Vec<Surfel> {
    let mut out = Vec::new();
    if let Some(r) = room {
        for w in 0..2 {
            sample_face(&mut out, r, w, r.min[w], 1.0, spacing);
            sample_face(&mut out, r, w, r.max[w], -1.0, spacing);
        }
        sample_face(&mut out, r, 2, r.min[2], 1.0, spacing);
    }
    for b in boxes {
        for w in 0..2 {
            sample_face(&mut out, b, w, b.min[w], -1.0, spacing);
            sample_face(&mut out, b, w, b.max[w], 1.0, spacing);
        }
        sample_face(&mut out, b, 2, b.max[2], 1.0, spacing);
    }
    out
}

/// Polyline traversed at constant speed.
#[derive(Debug, Clone)]
pub struct Path {
    points: Vec<Vector2<f64>>,
    /// Cumulative arc length at each vertex (closed paths include the
    /// return segment).
    cumulative: Vec<f64>,
    closed: bool,
    speed: f64,
}

/// Position and velocity on a path at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathState {
    pub position: Vector2<f64>,
    pub velocity: Vector2<f64>,
}

impl Path {
    pub fn new(spec: &PathSpec) -> Self {
        let mut points: Vec<Vector2<f64>> = spec
            .waypoints
            .iter()
            .map(|w| Vector2::new(w[0], w[1]))
            .collect();
        if spec.closed && points.len() > 1 {
            points.push(points[0]);
        }
        let mut cumulative = vec![0.0];
        for w in points.windows(2) {
            let last = *cumulative.last().expect("non-empty");
            cumulative.push(last + (w[1] - w[0]).norm());
        }
        Path {
            points,
            cumulative,
            closed: spec.closed,
            speed: spec.speed,
        }
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().expect("non-empty")
    }

    /// Position and unit tangent at arc length `s` in `[0, length]`.
    fn at_arc(&self, s: f64) -> (Vector2<f64>, Vector2<f64>) {
        if self.points.len() < 2 || self.length() == 0.0 {
            return (self.points[0], Vector2::zeros());
        }
        let s = s.clamp(0.0, self.length());
        let seg = self
            .cumulative
            .windows(2)
            .position(|c| s <= c[1] && c[1] > c[0])
            .unwrap_or(self.points.len() - 2);
        let (a, b) = (self.points[seg], self.points[seg + 1]);
        let len = self.cumulative[seg + 1] - self.cumulative[seg];
        let dir = (b - a) / len;
        (a + dir * (s - self.cumulative[seg]), dir)
    }

    /// Closed paths wrap; open paths stop at the last waypoint.
    pub fn state(&self, t: f64) -> PathState {
        let len = self.length();
        let s = self.speed * t;
        if len == 0.0 {
            return PathState { position: self.points[0], velocity: Vector2::zeros() };
        }
        if self.closed {
            let (p, d) = self.at_arc(s.rem_euclid(len));
            PathState { position: p, velocity: d * self.speed }
        } else if s >= len {
            PathState { position: self.points[self.points.len() - 1], velocity: Vector2::zeros() }
        } else {
            let (p, d) = self.at_arc(s);
            PathState { position: p, velocity: d * self.speed }
        }
    }

    /// Walks back and forth along an open path; closed paths wrap.
    pub fn state_shuttle(&self, t: f64) -> PathState {
        let len = self.length();
        if self.closed || len == 0.0 {
            return self.state(t);
        }
        let s = (self.speed * t).rem_euclid(2.0 * len);
        if s <= len {
            let (p, d) = self.at_arc(s);
            PathState { position: p, velocity: d * self.speed }
        } else {
            let (p, d) = self.at_arc(2.0 * len - s);
            PathState { position: p, velocity: -d * self.speed }
        }
    }

    /// Heading from the chord between the points `window` before and after
    /// the current arc position; `fallback` when the chord vanishes.
    pub fn heading(&self, t: f64, window: f64, fallback: f64) -> f64 {
        let len = self.length();
        if len == 0.0 {
            return fallback;
        }
        let s = self.speed * t;
        let (a, b) = if self.closed {
            (
                self.at_arc((s - window).rem_euclid(len)).0,
                self.at_arc((s + window).rem_euclid(len)).0,
            )
        } else {
            let s = s.min(len);
            (self.at_arc(s - window).0, self.at_arc(s + window).0)
        };
        let chord = b - a;
        if chord.norm() < 1e-9 {
            let (_, d) = self.at_arc(s.clamp(0.0, len));
            if d.norm() > 0.0 {
                return d.y.atan2(d.x);
            }
            return fallback;
        }
        chord.y.atan2(chord.x)
    }
}
