//! Constant-velocity Kalman multi-object tracker over 3D detections.
//!
//! Each track filters a 10-dimensional state (center, yaw, dims, linear
//! velocity) from 7-dimensional box observations. Per frame the tracker
//! predicts all tracks forward, associates detections within the same class,
//! updates matched tracks, coasts missed ones on prediction alone for a few
//! frames, and spawns tracks for leftover detections. Track ids are unique
//! for the lifetime of the tracker and never reused.

use crate::assignment::{greedy_assignment, hungarian_assignment, CostMatrix};
use crate::boxes::{iou_3d, Box3D};
use crate::geometry::{wrap_angle, Vec3};
use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use thiserror::Error;

type StateVec = SVector<f64, 10>;
type StateMat = SMatrix<f64, 10, 10>;
type MeasVec = SVector<f64, 7>;
type MeasMat = SMatrix<f64, 7, 7>;
type ObsMat = SMatrix<f64, 7, 10>;

/// How candidate track/detection pairs are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AssociationMetric {
    /// Horizontal center distance in meters; pairs beyond the threshold are
    /// infeasible.
    PlanarCentroid,
    /// Oriented 3D IoU; pairs below the threshold are infeasible and the
    /// cost is `1 - iou`.
    Iou3D,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatchingStrategy {
    Greedy,
    Optimal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    pub association_metric: AssociationMetric,
    /// Meters for `PlanarCentroid`, minimum IoU for `Iou3D`.
    pub association_threshold: f64,
    pub matching: MatchingStrategy,
    /// Consecutive missed frames a track survives on prediction alone.
    pub max_misses: u32,
    /// Updates required before a track is reported.
    pub min_hits: u32,
    /// Multiplier on the base process noise.
    pub process_noise: f64,
    /// Multiplier on the base measurement noise.
    pub measurement_noise: f64,
    /// Detections below this confidence are discarded before tracking.
    pub confidence_threshold: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            association_metric: AssociationMetric::PlanarCentroid,
            association_threshold: 2.0,
            matching: MatchingStrategy::Greedy,
            max_misses: 3,
            min_hits: 1,
            process_noise: 1.0,
            measurement_noise: 1.0,
            confidence_threshold: 0.2,
        }
    }
}

// Base noise levels, scaled by the config multipliers. Velocity starts very
// uncertain so a couple of position observations pin it down quickly.
const BASE_MEASUREMENT_VAR: f64 = 0.01; // (0.1 m)^2
const BASE_PROCESS_VAR: [f64; 10] = [1e-4, 1e-4, 1e-4, 1e-4, 1e-6, 1e-6, 1e-6, 1e-2, 1e-2, 1e-2];
const INITIAL_VAR: [f64; 10] = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1000.0, 1000.0, 1000.0];

fn transition(dt: f64) -> StateMat {
    let mut f = StateMat::identity();
    f[(0, 7)] = dt;
    f[(1, 8)] = dt;
    f[(2, 9)] = dt;
    f
}

fn observation() -> ObsMat {
    let mut h = ObsMat::zeros();
    for i in 0..7 {
        h[(i, i)] = 1.0;
    }
    h
}

fn measurement_of(b: &Box3D) -> MeasVec {
    MeasVec::from_column_slice(&[
        b.center.x, b.center.y, b.center.z, b.yaw, b.dims.0, b.dims.1, b.dims.2,
    ])
}

/// One filtered track.
#[derive(Debug, Clone)]
pub struct KalmanTrack {
    pub state: StateVec,
    pub covariance: StateMat,
    pub track_id: u64,
    pub class: String,
    pub confidence: f64,
    pub hits: u32,
    pub misses: u32,
    pub age: u32,
}

impl KalmanTrack {
    pub fn from_detection(det: &Box3D, track_id: u64) -> Self {
        let mut state = StateVec::zeros();
        state.rows_mut(0, 7).copy_from(&measurement_of(det));
        KalmanTrack {
            state,
            covariance: StateMat::from_diagonal(&StateVec::from_column_slice(&INITIAL_VAR)),
            track_id,
            class: det.class.clone(),
            confidence: det.confidence,
            hits: 1,
            misses: 0,
            age: 0,
        }
    }

    pub fn position(&self) -> Vec3 {
        Vec3::new(self.state[0], self.state[1], self.state[2])
    }

    pub fn velocity(&self) -> Vec3 {
        Vec3::new(self.state[7], self.state[8], self.state[9])
    }

    /// Rolls the state forward by `dt` under constant velocity and inflates
    /// the covariance by the process noise.
    pub fn predict(&mut self, dt: f64, config: &TrackerConfig) {
        let f = transition(dt);
        self.state = f * self.state;
        self.state[3] = wrap_angle(self.state[3]);
        let q = StateMat::from_diagonal(&StateVec::from_column_slice(&BASE_PROCESS_VAR))
            * config.process_noise;
        self.covariance = f * self.covariance * f.transpose() + q;
        self.age += 1;
    }

    /// Folds one observed box into the state.
    ///
    /// The yaw innovation is wrapped to `[-pi, pi)` and, because a box looks
    /// identical under a half turn, flipped by pi whenever it still exceeds
    /// pi/2 — otherwise a detector that flips heading would spin the track.
    /// The covariance update uses the Joseph form, which stays symmetric
    /// positive semi-definite under roundoff where the textbook short form
    /// can drift indefinite.
    pub fn update(&mut self, det: &Box3D, config: &TrackerConfig) {
        let h = observation();
        let r = MeasMat::identity() * (BASE_MEASUREMENT_VAR * config.measurement_noise);

        let mut innovation = measurement_of(det) - h * self.state;
        innovation[3] = wrap_angle(innovation[3]);
        if innovation[3] > FRAC_PI_2 {
            innovation[3] = wrap_angle(innovation[3] - PI);
        } else if innovation[3] < -FRAC_PI_2 {
            innovation[3] = wrap_angle(innovation[3] + PI);
        }

        let s = h * self.covariance * h.transpose() + r;
        let s_inv = s.try_inverse().expect("innovation covariance is invertible (R > 0)");
        let k = self.covariance * h.transpose() * s_inv;

        self.state += k * innovation;
        self.state[3] = wrap_angle(self.state[3]);

        let i_kh = StateMat::identity() - k * h;
        let p = i_kh * self.covariance * i_kh.transpose() + k * r * k.transpose();
        self.covariance = (p + p.transpose()) * 0.5;

        self.confidence = det.confidence;
        self.hits += 1;
        self.misses = 0;
    }

    /// Current state as a box; dims are floored at 1 cm so a noisy filter
    /// can never emit a degenerate box.
    pub fn to_box(&self) -> Box3D {
        Box3D::new(
            self.position(),
            (self.state[4].max(0.01), self.state[5].max(0.01), self.state[6].max(0.01)),
            self.state[3],
            self.class.clone(),
            self.confidence,
            Some(self.track_id),
        )
        .expect("floored dims are positive")
    }

    /// True iff the covariance admits a Cholesky factorization after a tiny
    /// diagonal jitter, i.e. it is numerically positive semi-definite.
    pub fn covariance_is_psd(&self) -> bool {
        let jitter = StateMat::identity() * 1e-9;
        nalgebra::Cholesky::new(self.covariance + jitter).is_some()
    }
}

/// Tracker output for one frame.
#[derive(Debug, Clone)]
pub struct TrackedBox {
    pub track_id: u64,
    /// Filtered (or, when coasted, predicted) box.
    pub box3d: Box3D,
    /// The detection that updated the track this frame, if any, with the
    /// track id attached.
    pub raw_detection: Option<Box3D>,
    /// True when the track was not matched this frame and the box is pure
    /// prediction.
    pub coasted: bool,
    pub hits: u32,
    pub misses: u32,
}

#[derive(Debug, Error)]
pub enum TrackerError {
    #[error("frame time step must be positive, got {0}")]
    NonPositiveDt(f64),
}

#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    tracks: Vec<KalmanTrack>,
    next_id: u64,
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Self {
        Tracker { config, tracks: Vec::new(), next_id: 0 }
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn active_tracks(&self) -> &[KalmanTrack] {
        &self.tracks
    }

    fn cost_matrix(&self, detections: &[Box3D]) -> CostMatrix {
        let mut m = CostMatrix::new(self.tracks.len(), detections.len());
        for (ti, track) in self.tracks.iter().enumerate() {
            let track_box = track.to_box();
            for (di, det) in detections.iter().enumerate() {
                if track.class != det.class {
                    continue; // class gate: leave infeasible
                }
                let cost = match self.config.association_metric {
                    AssociationMetric::PlanarCentroid => {
                        let d = track.position().planar_distance(&det.center);
                        if d > self.config.association_threshold {
                            continue;
                        }
                        d
                    }
                    AssociationMetric::Iou3D => {
                        let iou = iou_3d(&track_box, det);
                        if iou < self.config.association_threshold {
                            continue;
                        }
                        1.0 - iou
                    }
                };
                m.set(ti, di, cost);
            }
        }
        m
    }

    /// Advances the tracker by one frame: predict, associate, update, spawn,
    /// prune. Returns the boxes of all live tracks that have reached
    /// `min_hits`, including coasted ones.
    pub fn step(&mut self, detections: &[Box3D], dt: f64) -> Result<Vec<TrackedBox>, TrackerError> {
        if dt <= 0.0 {
            return Err(TrackerError::NonPositiveDt(dt));
        }
        for track in &mut self.tracks {
            track.predict(dt, &self.config);
        }

        let costs = self.cost_matrix(detections);
        let assignment = match self.config.matching {
            MatchingStrategy::Greedy => greedy_assignment(&costs),
            MatchingStrategy::Optimal => hungarian_assignment(&costs),
        };

        let mut matched_det: Vec<Option<usize>> = vec![None; self.tracks.len()];
        for &(ti, di) in &assignment.matches {
            self.tracks[ti].update(&detections[di], &self.config);
            matched_det[ti] = Some(di);
        }
        for &ti in &assignment.unmatched_rows {
            self.tracks[ti].misses += 1;
        }
        for &di in &assignment.unmatched_cols {
            self.tracks.push(KalmanTrack::from_detection(&detections[di], self.next_id));
            matched_det.push(Some(di));
            self.next_id += 1;
        }

        let max_misses = self.config.max_misses;
        let min_hits = self.config.min_hits;
        let mut outputs = Vec::new();
        let mut keep = Vec::with_capacity(self.tracks.len());
        for (track, det_idx) in self.tracks.drain(..).zip(matched_det) {
            if track.misses > max_misses {
                continue; // dead: drop without emitting
            }
            if track.hits >= min_hits {
                let raw_detection = det_idx.map(|di| {
                    let mut raw = detections[di].clone();
                    raw.track_id = Some(track.track_id);
                    raw
                });
                outputs.push(TrackedBox {
                    track_id: track.track_id,
                    box3d: track.to_box(),
                    coasted: raw_detection.is_none(),
                    raw_detection,
                    hits: track.hits,
                    misses: track.misses,
                });
            }
            keep.push(track);
        }
        self.tracks = keep;
        Ok(outputs)
    }
}
