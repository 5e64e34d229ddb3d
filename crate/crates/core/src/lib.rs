//! LiDAR-radar fusion front-end for odometry in degraded visibility.
//!
//! Per frame, radar Doppler returns give the ego velocity and a
//! static/dynamic split. The static radar points check whether the LiDAR
//! scan still sees the same structure; if so, LiDAR points near moving
//! radar targets are removed and the scan feeds odometry, otherwise the
//! static radar cloud is used instead.

pub mod app;
pub mod cloud;
pub mod config;
pub mod degeneracy;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod odometry;
pub mod radar;
pub mod removal;
pub mod select;
pub mod synth;

pub use error::{Error, Result};
