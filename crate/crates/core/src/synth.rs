//! Deterministic synthetic scenes for tests and demos.
//!
//! Objects follow scripted rigid trajectories; their surface points are
//! sampled once in the box frame and carried rigidly, so the true flow of
//! every object point is exactly the scripted box motion. Background points
//! are static in the global frame. Everything is seeded: the same inputs
//! reproduce the same scene bit for bit.
//!
//! The module also provides reference predictors with known metric outcomes
//! and naive single-pass metric oracles used to cross-check the mergeable
//! accumulators.

use crate::boxes::{iou_3d, Box3D};
use crate::cloud::{FlowField, PointCloud};
use crate::geometry::{wrap_angle, SE3Pose, Vec3};
use crate::gtflow::{generate_gt_flow, AnnotatedFrame, GroundTruthFlow, GtFlowError, GtFlowParams};
use crate::metrics::BucketConfig;
use crate::taxonomy::{ClassId, ClassMap, Taxonomy};
use crate::trackflow::TrackflowFrame;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use thiserror::Error;

/// Scripted rigid trajectory of one object.
#[derive(Debug, Clone)]
pub struct ObjectScript {
    pub class: String,
    pub dims: (f64, f64, f64),
    /// (center, yaw) per frame; length must equal the scene frame count.
    pub poses: Vec<(Vec3, f64)>,
    pub points_per_frame: usize,
    pub sampling_seed: u64,
}

impl ObjectScript {
    /// Straight-line motion at fixed velocity and heading.
    #[allow(clippy::too_many_arguments)]
    pub fn constant_velocity(
        class: impl Into<String>,
        dims: (f64, f64, f64),
        start: Vec3,
        yaw: f64,
        velocity: Vec3,
        frames: usize,
        dt: f64,
        points_per_frame: usize,
        sampling_seed: u64,
    ) -> Self {
        ObjectScript {
            class: class.into(),
            dims,
            poses: (0..frames)
                .map(|k| (start + velocity * (k as f64 * dt), wrap_angle(yaw)))
                .collect(),
            points_per_frame,
            sampling_seed,
        }
    }

    /// Arc motion: fixed speed along a heading that turns at `yaw_rate`
    /// rad/s (forward-Euler integration, which keeps per-step displacement
    /// exactly `speed * dt`).
    #[allow(clippy::too_many_arguments)]
    pub fn turning(
        class: impl Into<String>,
        dims: (f64, f64, f64),
        start: Vec3,
        yaw: f64,
        speed: f64,
        yaw_rate: f64,
        frames: usize,
        dt: f64,
        points_per_frame: usize,
        sampling_seed: u64,
    ) -> Self {
        let mut poses = Vec::with_capacity(frames);
        let mut center = start;
        let mut heading = wrap_angle(yaw);
        for _ in 0..frames {
            poses.push((center, heading));
            center = center + Vec3::new(heading.cos(), heading.sin(), 0.0) * (speed * dt);
            heading = wrap_angle(heading + yaw_rate * dt);
        }
        ObjectScript { class: class.into(), dims, poses, points_per_frame, sampling_seed }
    }

    pub fn stationary(
        class: impl Into<String>,
        dims: (f64, f64, f64),
        center: Vec3,
        yaw: f64,
        frames: usize,
        points_per_frame: usize,
        sampling_seed: u64,
    ) -> Self {
        Self::constant_velocity(
            class,
            dims,
            center,
            yaw,
            Vec3::ZERO,
            frames,
            0.1,
            points_per_frame,
            sampling_seed,
        )
    }

    fn pose_at(&self, frame: usize) -> SE3Pose {
        let (center, yaw) = self.poses[frame];
        SE3Pose::from_yaw(yaw, center)
    }
}

#[derive(Debug, Clone)]
pub struct SceneParams {
    pub frames: usize,
    pub dt: f64,
    pub background_points: usize,
    /// Background is sampled in `[-bounds, bounds]` on x and y.
    pub bounds: f64,
    /// Constant ego velocity; ego yaw stays zero.
    pub ego_velocity: Vec3,
    pub seed: u64,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            frames: 10,
            dt: 0.1,
            background_points: 500,
            bounds: 40.0,
            ego_velocity: Vec3::ZERO,
            seed: 7,
        }
    }
}

/// Two tracked boxes whose volumes intersect in one frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverlapEvent {
    pub frame: usize,
    pub track_a: u64,
    pub track_b: u64,
}

/// A generated scene: global-frame annotated frames ready for ground-truth
/// flow, the ego trajectory, and any box-overlap events.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub frames: Vec<AnnotatedFrame>,
    pub ego_poses: Vec<SE3Pose>,
    pub overlap_events: Vec<OverlapEvent>,
}

impl SyntheticScene {
    /// Perfect detections: the annotated boxes with track ids stripped and
    /// confidence 1.0.
    pub fn perfect_detections(&self) -> Vec<Vec<Box3D>> {
        self.frames
            .iter()
            .map(|f| {
                f.boxes
                    .iter()
                    .map(|b| {
                        let mut d = b.clone();
                        d.track_id = None;
                        d.confidence = 1.0;
                        d
                    })
                    .collect()
            })
            .collect()
    }

    /// Packages the scene for the tracking pipeline: sensor-frame clouds,
    /// ego poses, and the supplied per-frame detections.
    pub fn trackflow_frames(&self, detections: &[Vec<Box3D>]) -> Vec<TrackflowFrame> {
        assert_eq!(detections.len(), self.frames.len());
        self.frames
            .iter()
            .zip(&self.ego_poses)
            .zip(detections)
            .map(|((f, ego), dets)| TrackflowFrame {
                cloud_sensor: f.cloud.transformed(&ego.inverse()),
                ego_pose: *ego,
                detections: dets.clone(),
            })
            .collect()
    }

    /// Sensor-frame clouds (what a logger would write to disk).
    pub fn sensor_clouds(&self) -> Vec<PointCloud> {
        self.frames
            .iter()
            .zip(&self.ego_poses)
            .map(|(f, ego)| f.cloud.transformed(&ego.inverse()))
            .collect()
    }

    /// Ground-truth flow for the frame pair `(k, k + 1)` under the default
    /// semantic class map.
    pub fn ground_truth_pair(&self, k: usize) -> Result<GroundTruthFlow, GtFlowError> {
        generate_gt_flow(
            &self.frames[k],
            &self.frames[k + 1],
            &ClassMap::default_semantic(),
            &GtFlowParams::default(),
        )
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("script `{class}` has {got} poses but the scene has {want} frames")]
    ScriptLengthMismatch { class: String, got: usize, want: usize },
    #[error("could not place {want} background points outside all boxes")]
    BackgroundSamplingFailed { want: usize },
}

/// Margin kept between background points and every box, in meters. Slightly
/// larger than the loosest containment margin used anywhere downstream, so a
/// background point can never be swept into a box.
const BACKGROUND_CLEARANCE: f64 = 0.3;

fn mix_seed(a: u64, b: u64) -> u64 {
    a.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(b)
}

/// Uniform point on the surface of a `dims` box centered at the origin,
/// faces weighted by area.
/// How far inside the box faces body points are placed, in meters. Points
/// exactly on a face would flip between inside and outside once coordinates
/// pass through 32-bit storage; the inset keeps containment stable.
const SURFACE_INSET: f64 = 1e-3;

fn sample_surface_point(rng: &mut ChaCha8Rng, dims: (f64, f64, f64)) -> Vec3 {
    let (l, w, h) = dims;
    let eps = SURFACE_INSET.min(l / 4.0).min(w / 4.0).min(h / 4.0);
    let (li, wi, hi) = (l - 2.0 * eps, w - 2.0 * eps, h - 2.0 * eps);
    let areas = [w * h, w * h, l * h, l * h, l * w, l * w];
    let total: f64 = areas.iter().sum();
    let mut r = rng.gen_range(0.0..total);
    let mut face = 0;
    for (i, a) in areas.iter().enumerate() {
        if r < *a {
            face = i;
            break;
        }
        r -= a;
    }
    let u = rng.gen_range(-0.5..0.5);
    let v = rng.gen_range(-0.5..0.5);
    match face {
        0 => Vec3::new(li / 2.0, u * wi, v * hi),
        1 => Vec3::new(-li / 2.0, u * wi, v * hi),
        2 => Vec3::new(u * li, wi / 2.0, v * hi),
        3 => Vec3::new(u * li, -wi / 2.0, v * hi),
        4 => Vec3::new(u * li, v * wi, hi / 2.0),
        _ => Vec3::new(u * li, v * wi, -hi / 2.0),
    }
}

/// Builds a scene from object scripts plus static background.
///
/// Point layout per frame is deterministic: scripts in order, each
/// contributing `points_per_frame` points, followed by the background block.
pub fn generate_scene(
    scripts: &[ObjectScript],
    params: &SceneParams,
) -> Result<SyntheticScene, SynthError> {
    for s in scripts {
        if s.poses.len() != params.frames {
            return Err(SynthError::ScriptLengthMismatch {
                class: s.class.clone(),
                got: s.poses.len(),
                want: params.frames,
            });
        }
    }

    // per-script body points, sampled once and carried rigidly
    let body_points: Vec<Vec<Vec3>> = scripts
        .iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(params.seed, s.sampling_seed));
            (0..s.points_per_frame).map(|_| sample_surface_point(&mut rng, s.dims)).collect()
        })
        .collect();

    // static background, rejection-sampled clear of every box in every frame
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(params.seed, 0xBAC6));
    let mut background = Vec::with_capacity(params.background_points);
    let mut attempts = 0usize;
    let max_attempts = 1000 * params.background_points.max(1);
    while background.len() < params.background_points {
        if attempts > max_attempts {
            return Err(SynthError::BackgroundSamplingFailed { want: params.background_points });
        }
        attempts += 1;
        let p = Vec3::new(
            rng.gen_range(-params.bounds..params.bounds),
            rng.gen_range(-params.bounds..params.bounds),
            rng.gen_range(0.0..2.0),
        );
        let clear = scripts.iter().enumerate().all(|(si, s)| {
            (0..params.frames).all(|k| {
                let b = script_box(s, si as u64, k);
                !b.contains(p, BACKGROUND_CLEARANCE)
            })
        });
        if clear {
            background.push(p);
        }
    }

    let mut frames = Vec::with_capacity(params.frames);
    let mut ego_poses = Vec::with_capacity(params.frames);
    let mut overlap_events = Vec::new();
    for k in 0..params.frames {
        let mut points = Vec::new();
        let mut boxes = Vec::new();
        for (si, s) in scripts.iter().enumerate() {
            let pose = s.pose_at(k);
            points.extend(body_points[si].iter().map(|&bp| pose.apply(bp)));
            boxes.push(script_box(s, si as u64, k));
        }
        points.extend_from_slice(&background);

        for a in 0..boxes.len() {
            for b in (a + 1)..boxes.len() {
                if iou_3d(&boxes[a], &boxes[b]) > 0.0 {
                    overlap_events.push(OverlapEvent {
                        frame: k,
                        track_a: a as u64,
                        track_b: b as u64,
                    });
                }
            }
        }

        let ego_translation = params.ego_velocity * (k as f64 * params.dt);
        let ego_pose = SE3Pose::from_translation(ego_translation);
        ego_poses.push(ego_pose);
        frames.push(AnnotatedFrame {
            cloud: PointCloud { points, frame_id: k as u64, timestamp: k as f64 * params.dt },
            boxes,
            ego_position: ego_translation,
            dt_to_next: params.dt,
        });
    }

    Ok(SyntheticScene { frames, ego_poses, overlap_events })
}

fn script_box(s: &ObjectScript, track_id: u64, frame: usize) -> Box3D {
    let (center, yaw) = s.poses[frame];
    Box3D::new(center, s.dims, yaw, s.class.clone(), 1.0, Some(track_id))
        .expect("script dims are positive")
}

/// Detector imperfections applied to perfect boxes.
#[derive(Debug, Clone)]
pub struct DetectionNoise {
    pub center_sigma: f64,
    pub yaw_sigma: f64,
    pub dims_sigma: f64,
    /// Probability of dropping each true box.
    pub dropout_prob: f64,
    /// Expected number of spurious boxes per frame (Poisson).
    pub false_positives_per_frame: f64,
    /// Confidence range assigned to true detections.
    pub true_confidence: (f64, f64),
    /// Confidence range assigned to false positives.
    pub false_confidence: (f64, f64),
}

impl Default for DetectionNoise {
    fn default() -> Self {
        DetectionNoise {
            center_sigma: 0.0,
            yaw_sigma: 0.0,
            dims_sigma: 0.0,
            dropout_prob: 0.0,
            false_positives_per_frame: 0.0,
            true_confidence: (1.0, 1.0),
            false_confidence: (0.05, 0.3),
        }
    }
}

fn sample_range(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

fn jitter(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).expect("sigma is finite").sample(rng)
    } else {
        0.0
    }
}

/// Corrupts per-frame ground-truth boxes into detector output: jitter,
/// dropouts, and uniformly placed false positives inside `bounds`. Track ids
/// are stripped — detectors do not know identities. With the default
/// zero-noise config the output equals the input boxes at confidence 1.0.
pub fn perturb_detections(
    gt_boxes: &[Vec<Box3D>],
    noise: &DetectionNoise,
    bounds: f64,
    seed: u64,
) -> Vec<Vec<Box3D>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gt_boxes
        .iter()
        .map(|frame| {
            let mut out = Vec::with_capacity(frame.len());
            for b in frame {
                if noise.dropout_prob > 0.0 && rng.gen_bool(noise.dropout_prob.min(1.0)) {
                    continue;
                }
                let center = b.center
                    + Vec3::new(
                        jitter(&mut rng, noise.center_sigma),
                        jitter(&mut rng, noise.center_sigma),
                        jitter(&mut rng, noise.center_sigma),
                    );
                let dims = (
                    (b.dims.0 + jitter(&mut rng, noise.dims_sigma)).max(0.1),
                    (b.dims.1 + jitter(&mut rng, noise.dims_sigma)).max(0.1),
                    (b.dims.2 + jitter(&mut rng, noise.dims_sigma)).max(0.1),
                );
                let yaw = b.yaw + jitter(&mut rng, noise.yaw_sigma);
                let confidence = sample_range(&mut rng, noise.true_confidence);
                out.push(
                    Box3D::new(center, dims, yaw, b.class.clone(), confidence, None)
                        .expect("dims floored above zero"),
                );
            }
            if noise.false_positives_per_frame > 0.0 {
                let classes: Vec<&str> = frame.iter().map(|b| b.class.as_str()).collect();
                let n = Poisson::new(noise.false_positives_per_frame)
                    .expect("rate is positive")
                    .sample(&mut rng) as usize;
                for _ in 0..n {
                    let class = if classes.is_empty() {
                        "CAR"
                    } else {
                        classes[rng.gen_range(0..classes.len())]
                    };
                    out.push(
                        Box3D::new(
                            Vec3::new(
                                rng.gen_range(-bounds..bounds),
                                rng.gen_range(-bounds..bounds),
                                rng.gen_range(0.0..2.0),
                            ),
                            (
                                rng.gen_range(0.5..5.0),
                                rng.gen_range(0.5..2.5),
                                rng.gen_range(0.8..2.2),
                            ),
                            rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
                            class,
                            sample_range(&mut rng, noise.false_confidence),
                            None,
                        )
                        .expect("sampled dims are positive"),
                    );
                }
            }
            out
        })
        .collect()
}

/// Reference predictors whose metric outcomes are known in closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CannedPredictor {
    /// Everything static: normalized dynamic error is exactly 1.
    Zero,
    /// The ground truth itself: every error is exactly 0.
    Perfect,
    /// Ground truth with the sign flipped: normalized dynamic error is
    /// exactly 2.
    Negated,
    /// Ground truth scaled by alpha: normalized dynamic error is |1 - alpha|.
    Scaled(f64),
    /// The same vector everywhere.
    Constant(Vec3),
}

impl CannedPredictor {
    pub fn predict(&self, gt: &GroundTruthFlow) -> FlowField {
        let vectors: Vec<Vec3> = match self {
            CannedPredictor::Zero => vec![Vec3::ZERO; gt.len()],
            CannedPredictor::Perfect => gt.flow.vectors.clone(),
            CannedPredictor::Negated => gt.flow.vectors.iter().map(|v| -*v).collect(),
            CannedPredictor::Scaled(alpha) => gt.flow.vectors.iter().map(|v| *v * *alpha).collect(),
            CannedPredictor::Constant(v) => vec![*v; gt.len()],
        };
        let n = vectors.len();
        FlowField::new(vectors, vec![true; n])
    }
}

/// Naive reference for the threeway endpoint error: collects plain f64 lists
/// per category and averages them. Independent of the fixed-point
/// accumulators on purpose.
pub fn oracle_threeway(
    pairs: &[(&FlowField, &GroundTruthFlow)],
    background: ClassId,
    speed_split: f64,
) -> (Option<f64>, Option<f64>, Option<f64>, Option<f64>) {
    let mut cats: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (pred, gt) in pairs {
        for i in 0..gt.len() {
            if !gt.included(i) || !pred.valid[i] {
                continue;
            }
            let epe = (pred.vectors[i] - gt.flow.vectors[i]).norm();
            let k = if gt.class_per_point[i] == background {
                2
            } else if gt.speed_per_point[i] > speed_split {
                0
            } else {
                1
            };
            cats[k].push(epe);
        }
    }
    let avg = |v: &Vec<f64>| {
        if v.is_empty() {
            None
        } else {
            Some(v.iter().sum::<f64>() / v.len() as f64)
        }
    };
    let parts = [avg(&cats[0]), avg(&cats[1]), avg(&cats[2])];
    let defined: Vec<f64> = parts.iter().flatten().copied().collect();
    let mean = if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    };
    (parts[0], parts[1], parts[2], mean)
}

/// Naive reference for the bucketed summaries. Returns per class, in id
/// order, `(static_epe, dynamic_normalized_epe)`. Uses mean-of-list and
/// mean-ratio arithmetic rather than running sums, so agreement with the
/// accumulator is a real cross-check.
pub fn oracle_class_summaries(
    pairs: &[(&FlowField, &GroundTruthFlow)],
    taxonomy: &Taxonomy,
    config: &BucketConfig,
) -> Vec<(Option<f64>, Option<f64>)> {
    let buckets = config.bucket_count();
    // (epe list, displacement list) per (class, bucket)
    let mut cells: Vec<(Vec<f64>, Vec<f64>)> =
        vec![(Vec::new(), Vec::new()); taxonomy.len() * buckets];
    for (pred, gt) in pairs {
        for i in 0..gt.len() {
            if !gt.included(i) || !pred.valid[i] {
                continue;
            }
            let c = gt.class_per_point[i].0 as usize;
            let b = config.bucket_index(gt.speed_per_point[i]);
            let cell = &mut cells[c * buckets + b];
            cell.0.push((pred.vectors[i] - gt.flow.vectors[i]).norm());
            cell.1.push(gt.flow.vectors[i].norm());
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    (0..taxonomy.len())
        .map(|c| {
            let static_cell = &cells[c * buckets];
            let static_epe =
                if static_cell.0.is_empty() { None } else { Some(mean(&static_cell.0)) };
            let ratios: Vec<f64> = (1..buckets)
                .filter_map(|b| {
                    let cell = &cells[c * buckets + b];
                    if cell.0.is_empty() {
                        return None;
                    }
                    let disp = mean(&cell.1);
                    if disp == 0.0 {
                        None
                    } else {
                        Some(mean(&cell.0) / disp)
                    }
                })
                .collect();
            let dynamic = if ratios.is_empty() {
                None
            } else {
                Some(ratios.iter().sum::<f64>() / ratios.len() as f64)
            };
            (static_epe, dynamic)
        })
        .collect()
}
