//! Simulated monocular front end.
//!
//! Each frame, world segments that lie fully in front of the ground-truth
//! camera and within range are detected with a fixed probability. An endpoint
//! is mapped once, on its segment's first detection, at the current drift
//! applied to its true position plus isotropic Gaussian noise; later
//! detections reuse the same map points. Data association is exact.
//!
//! Drift is a similarity random walk composed on the right of the running
//! transform once per frame after the first.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{PoseSE3, RotationSO3, Sim3, Vec3};
use crate::trajectory::{StampedPose, Trajectory, TrajectoryError};
use crate::world::World;

pub type PointId = usize;
pub type ObservationId = usize;

#[derive(Debug, Error)]
pub enum FrontendError {
    #[error("invalid front-end config: {0}")]
    InvalidConfig(String),
    #[error("map invariant violated: {0}")]
    Map(String),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftConfig {
    /// Standard deviation of the per-frame log-scale increment.
    pub scale_sigma: f64,
    /// Standard deviation of the per-frame rotation angle (rad).
    pub rot_sigma: f64,
    /// Standard deviation of each per-frame translation component (m).
    pub trans_sigma: f64,
    pub seed: u64,
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self {
            scale_sigma: 1e-3,
            rot_sigma: 0.0,
            trans_sigma: 0.0,
            seed: 0,
        }
    }
}

impl DriftConfig {
    pub fn none() -> Self {
        Self {
            scale_sigma: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), FrontendError> {
        for (name, v) in [
            ("scale_sigma", self.scale_sigma),
            ("rot_sigma", self.rot_sigma),
            ("trans_sigma", self.trans_sigma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(FrontendError::InvalidConfig(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservationConfig {
    pub detect_prob: f64,
    /// Per-axis standard deviation of endpoint placement noise (m).
    pub endpoint_noise_sigma: f64,
    pub max_range: f64,
    /// Segments shorter than this (true length, m) are never reported.
    pub min_segment_length: f64,
    pub seed: u64,
}

impl Default for ObservationConfig {
    fn default() -> Self {
        Self {
            detect_prob: 0.8,
            endpoint_noise_sigma: 0.01,
            max_range: 8.0,
            min_segment_length: 0.3,
            seed: 0,
        }
    }
}

impl ObservationConfig {
    pub fn validate(&self) -> Result<(), FrontendError> {
        if !(0.0..=1.0).contains(&self.detect_prob) {
            return Err(FrontendError::InvalidConfig(format!(
                "detect_prob must lie in [0, 1], got {}",
                self.detect_prob
            )));
        }
        if !(self.endpoint_noise_sigma.is_finite() && self.endpoint_noise_sigma >= 0.0) {
            return Err(FrontendError::InvalidConfig(format!(
                "endpoint_noise_sigma must be finite and non-negative, got {}",
                self.endpoint_noise_sigma
            )));
        }
        if !(self.max_range.is_finite() && self.max_range > 0.0) {
            return Err(FrontendError::InvalidConfig(format!(
                "max_range must be positive, got {}",
                self.max_range
            )));
        }
        if !(self.min_segment_length.is_finite() && self.min_segment_length >= 0.0) {
            return Err(FrontendError::InvalidConfig(format!(
                "min_segment_length must be non-negative, got {}",
                self.min_segment_length
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DriftState {
    pub cumulative: Sim3,
    pub config: DriftConfig,
    rng: ChaCha8Rng,
}

impl DriftState {
    pub fn new(config: DriftConfig) -> Self {
        Self {
            cumulative: Sim3::identity(),
            config,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
        }
    }

    /// Advances the walk by one frame. Always consumes eight normal draws so
    /// the stream position does not depend on which sigmas are zero.
    pub fn step(&mut self) {
        let mut n = [0.0f64; 8];
        for v in &mut n {
            *v = self.rng.sample(StandardNormal);
        }
        let cfg = &self.config;
        let log_s = cfg.scale_sigma * n[0];
        let axis = Vec3::new(n[1], n[2], n[3]);
        let angle = cfg.rot_sigma * n[4];
        let rotation = match nalgebra::Unit::try_new(axis, 1e-12) {
            Some(axis) if angle != 0.0 => RotationSO3::from_axis_angle(&axis, angle),
            _ => RotationSO3::identity(),
        };
        let translation = cfg.trans_sigma * Vec3::new(n[5], n[6], n[7]);
        let increment = Sim3::new(log_s.exp(), rotation, translation);
        self.cumulative = self.cumulative.compose(&increment);
    }
}

/// Functional form of [`DriftState::step`].
pub fn step_drift(d: &DriftState) -> DriftState {
    let mut next = d.clone();
    next.step();
    next
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapPoint {
    pub id: PointId,
    pub position: Vec3,
    pub first_seen_frame: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentObservation {
    pub id: ObservationId,
    /// `(p1, p2)`; the segment vector is `p2 - p1`.
    pub endpoints: (PointId, PointId),
    pub frame: usize,
    /// Simulator bookkeeping; the back end never reads it.
    pub world_segment: usize,
}

/// Map points, segment observations and the drifted camera trajectory.
/// Point and observation ids equal their indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EstimatedMap {
    pub points: Vec<MapPoint>,
    pub observations: Vec<SegmentObservation>,
    pub est_trajectory: Vec<StampedPose>,
}

impl EstimatedMap {
    pub fn point(&self, id: PointId) -> Option<&MapPoint> {
        self.points.get(id)
    }

    pub fn position(&self, id: PointId) -> Option<Vec3> {
        self.points.get(id).map(|p| p.position)
    }

    pub fn segment_vector(&self, obs: &SegmentObservation) -> Option<Vec3> {
        Some(self.position(obs.endpoints.1)? - self.position(obs.endpoints.0)?)
    }

    pub fn trajectory(&self) -> Result<Trajectory, TrajectoryError> {
        Trajectory::new(self.est_trajectory.clone())
    }

    pub fn validate(&self) -> Result<(), FrontendError> {
        for (i, p) in self.points.iter().enumerate() {
            if p.id != i {
                return Err(FrontendError::Map(format!("point at index {i} has id {}", p.id)));
            }
        }
        for (i, o) in self.observations.iter().enumerate() {
            if o.id != i {
                return Err(FrontendError::Map(format!(
                    "observation at index {i} has id {}",
                    o.id
                )));
            }
            let (a, b) = o.endpoints;
            if a == b {
                return Err(FrontendError::Map(format!(
                    "observation {i} uses point {a} twice"
                )));
            }
            if a >= self.points.len() || b >= self.points.len() {
                return Err(FrontendError::Map(format!(
                    "observation {i} references a missing point"
                )));
            }
        }
        Ok(())
    }

    pub fn to_json_string(&self) -> String {
        #[derive(Serialize)]
        struct PoseRecord {
            t: f64,
            q: [f64; 4],
            p: [f64; 3],
        }
        #[derive(Serialize)]
        struct MapFile<'a> {
            points: &'a [MapPoint],
            observations: &'a [SegmentObservation],
            trajectory: Vec<PoseRecord>,
        }
        let trajectory = self
            .est_trajectory
            .iter()
            .map(|sp| {
                let q = sp.pose.rotation.quaternion();
                PoseRecord {
                    t: sp.timestamp,
                    q: [q.w, q.i, q.j, q.k],
                    p: sp.pose.translation.vector.into(),
                }
            })
            .collect();
        let file = MapFile {
            points: &self.points,
            observations: &self.observations,
            trajectory,
        };
        serde_json::to_string_pretty(&file).expect("map serializes")
    }
}

/// Output of one front-end frame.
#[derive(Debug, Clone)]
pub struct FrameStep {
    pub frame: usize,
    pub observations: Range<ObservationId>,
    /// Drift in effect when the frame was produced.
    pub drift: Sim3,
}

/// Frame-by-frame simulator. The pipeline drives it so that back-end
/// corrections can be fed into subsequent frames.
pub struct Frontend<'w> {
    world: &'w World,
    drift: DriftState,
    config: ObservationConfig,
    rng: ChaCha8Rng,
    mapped: Vec<Option<(PointId, PointId)>>,
    next_frame: usize,
}

impl<'w> Frontend<'w> {
    pub fn new(
        world: &'w World,
        drift: DriftConfig,
        config: ObservationConfig,
    ) -> Result<Self, FrontendError> {
        drift.validate()?;
        config.validate()?;
        Ok(Self {
            world,
            drift: DriftState::new(drift),
            config,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            mapped: vec![None; world.segments.len()],
            next_frame: 0,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.world.gt_trajectory.len()
    }

    pub fn drift(&self) -> &Sim3 {
        &self.drift.cumulative
    }

    /// Composes a correction on the left of the running drift so that
    /// everything mapped from now on reflects it.
    pub fn apply_correction(&mut self, correction: &Sim3) {
        self.drift.cumulative = correction.compose(&self.drift.cumulative);
    }

    fn visible(&self, camera: &PoseSE3, a: &Vec3, b: &Vec3) -> bool {
        let center = camera.translation.vector;
        let forward = camera.rotation * Vec3::x();
        [a, b].iter().all(|e| {
            let d = *e - center;
            d.dot(&forward) > 0.0 && d.norm() <= self.config.max_range
        })
    }

    fn noisy(&mut self, p: &Vec3) -> Vec3 {
        let n = Vec3::new(
            self.rng.sample(StandardNormal),
            self.rng.sample(StandardNormal),
            self.rng.sample(StandardNormal),
        );
        self.drift.cumulative.apply(p) + self.config.endpoint_noise_sigma * n
    }

    /// Processes the next frame, appending to `map`. Returns `None` once the
    /// ground-truth trajectory is exhausted.
    pub fn step(&mut self, map: &mut EstimatedMap) -> Option<FrameStep> {
        let frame = self.next_frame;
        let gt = *self.world.gt_trajectory.poses().get(frame)?;
        self.next_frame += 1;
        if frame > 0 {
            self.drift.step();
        }
        let first_obs = map.observations.len();
        for (index, seg) in self.world.segments.iter().enumerate() {
            if seg.vector().norm() < self.config.min_segment_length
                || !self.visible(&gt.pose, &seg.a, &seg.b)
            {
                continue;
            }
            let u: f64 = self.rng.random();
            if u >= self.config.detect_prob {
                continue;
            }
            let endpoints = match self.mapped[index] {
                Some(ids) => ids,
                None => {
                    let pa = self.noisy(&seg.a);
                    let pb = self.noisy(&seg.b);
                    let ida = map.points.len();
                    map.points.push(MapPoint {
                        id: ida,
                        position: pa,
                        first_seen_frame: frame,
                    });
                    map.points.push(MapPoint {
                        id: ida + 1,
                        position: pb,
                        first_seen_frame: frame,
                    });
                    self.mapped[index] = Some((ida, ida + 1));
                    (ida, ida + 1)
                }
            };
            let id = map.observations.len();
            map.observations.push(SegmentObservation {
                id,
                endpoints,
                frame,
                world_segment: index,
            });
        }
        let drift = self.drift.cumulative;
        map.est_trajectory
            .push(StampedPose::new(gt.timestamp, drift.apply_pose(&gt.pose)));
        Some(FrameStep {
            frame,
            observations: first_obs..map.observations.len(),
            drift,
        })
    }
}

/// Runs the front end over the whole world with no back-end feedback.
pub fn simulate(
    world: &World,
    drift: DriftConfig,
    observation: ObservationConfig,
) -> Result<EstimatedMap, FrontendError> {
    let mut frontend = Frontend::new(world, drift, observation)?;
    let mut map = EstimatedMap::default();
    while frontend.step(&mut map).is_some() {}
    Ok(map)
}
