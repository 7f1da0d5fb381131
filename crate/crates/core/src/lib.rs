//! Scene flow estimation and evaluation for lidar sequences.
//!
//! The crate covers the full loop around per-point 3D motion fields:
//!
//! * [`geometry`], [`boxes`], [`cloud`], [`taxonomy`] — SE(3) poses, oriented
//!   boxes, point clouds, flow fields and class mappings.
//! * [`gtflow`] — ground-truth rigid flow derived from box tracks.
//! * [`metrics`] — endpoint-error metrics, including speed-bucketed
//!   normalized errors that do not vanish on the background.
//! * [`tracker`] / [`trackflow`] — a Kalman multi-object tracker and the
//!   detections-to-flow pipeline built on top of it.
//! * [`synth`] — deterministic synthetic scenes and reference predictors for
//!   testing.
//! * [`io`] / [`evaluate`] — on-disk formats, dataset layout, evaluation
//!   reports and charts.

pub mod assignment;
pub mod boxes;
pub mod cloud;
pub mod evaluate;
pub mod geometry;
pub mod gtflow;
pub mod io;
pub mod metrics;
pub mod svg;
pub mod synth;
pub mod taxonomy;
pub mod tracker;
pub mod trackflow;
