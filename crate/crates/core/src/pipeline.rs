//! End-to-end experiment: front end, incremental clustering, scheduled
//! cluster optimization and pose correction.
//!
//! Pose correction is a surrogate for the bundle adjustment that would carry
//! map corrections into the camera trajectory in a full SLAM system. After
//! each solve, every keyframe gets the similarity that best maps the moved
//! points first seen in its span from their old to their new positions.
//! Frames between keyframes interpolate. Only the linear part (scale, and
//! optionally rotation) of each correction is used, acting about the map
//! origin, which is where monocular drift is anchored. The newest keyframe's
//! correction is also fed back into the front end so that later frames and
//! points are produced at the corrected scale.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{ClusterError, ClusterStore, DEFAULT_TAU};
use crate::frontend::{DriftConfig, EstimatedMap, Frontend, FrontendError, ObservationConfig};
use crate::geometry::{Sim3, Vec3};
use crate::metrics::umeyama;
use crate::optimize::{build_problem, solve, OptError, OptReport, Scope, SolverConfig, DEFAULT_ANCHOR_WEIGHT};
use crate::trajectory::{StampedPose, Trajectory, TrajectoryError};
use crate::world::World;

/// Displacement (m) below which a point counts as unmoved.
const MOVE_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    Baseline,
    Seg,
    SegGlobal,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Baseline, Mode::Seg, Mode::SegGlobal];
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Baseline => "Baseline",
            Mode::Seg => "Seg",
            Mode::SegGlobal => "SegGlobal",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(Mode::Baseline),
            "seg" => Ok(Mode::Seg),
            "segglobal" | "seg-global" | "seg_global" => Ok(Mode::SegGlobal),
            _ => Err(format!("unknown mode `{s}` (expected Baseline, Seg or SegGlobal)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub mode: Mode,
    /// Frames per keyframe.
    pub keyframe_interval: usize,
    /// Keyframes covered by a local solve.
    pub local_window: usize,
    pub max_iterations: usize,
    pub lambda: f64,
    pub tau: f64,
    /// Keyframes on either side whose new points inform a pose correction.
    pub propagation_radius: usize,
    pub correct_rotation: bool,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Seg,
            keyframe_interval: 10,
            local_window: 5,
            max_iterations: 10,
            lambda: DEFAULT_ANCHOR_WEIGHT,
            tau: DEFAULT_TAU,
            propagation_radius: 2,
            correct_rotation: false,
        }
    }
}

impl ScheduleConfig {
    pub fn with_mode(mode: Mode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::InvalidConfig(m));
        if self.keyframe_interval == 0 {
            return bad("keyframe_interval must be at least 1".into());
        }
        if self.local_window == 0 {
            return bad("local_window must be at least 1".into());
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid schedule: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Optimize(#[from] OptError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoundScope {
    Local,
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    /// Frame after which the round ran.
    pub frame: usize,
    pub scope: RoundScope,
    pub report: OptReport,
    /// Keyframes that received a non-identity correction.
    pub corrected_keyframes: usize,
}

/// Correction estimated for one keyframe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyframeCorrection {
    pub keyframe: usize,
    pub correction: Sim3,
    pub moved_points: usize,
}

#[derive(Debug, Clone)]
pub struct PropagationResult {
    pub trajectory: Vec<StampedPose>,
    pub corrections: Vec<KeyframeCorrection>,
    /// One entry per keyframe that had some, but too few, moved points.
    pub log: Vec<String>,
}

/// How map corrections reach the trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagationConfig {
    pub keyframe_interval: usize,
    /// Points first seen within this many keyframes of a keyframe count as
    /// near it.
    pub radius: usize,
    /// Carry the rotation of each correction into the poses as well as its
    /// scale.
    pub correct_rotation: bool,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            keyframe_interval: 10,
            radius: 2,
            correct_rotation: false,
        }
    }
}

impl KeyframeCorrection {
    fn at_frame(corrections: &[KeyframeCorrection], frame: usize, interval: usize) -> Sim3 {
        let k = frame / interval;
        let offset = frame % interval;
        match corrections.get(k + 1) {
            Some(next) if offset != 0 => corrections[k]
                .correction
                .interpolate(&next.correction, offset as f64 / interval as f64),
            _ => corrections[k].correction,
        }
    }
}

/// Re-estimates keyframe poses after the map moved from `pre` to `post`.
pub fn propagate_to_poses(
    pre: &EstimatedMap,
    post: &EstimatedMap,
    trajectory: &[StampedPose],
    config: &PropagationConfig,
) -> PropagationResult {
    let interval = config.keyframe_interval;
    assert!(interval > 0, "keyframe interval must be positive");
    assert_eq!(pre.points.len(), post.points.len(), "maps must share point ids");
    let n_kf = trajectory.len().div_ceil(interval);
    let mut buckets: Vec<(Vec<Vec3>, Vec<Vec3>)> = vec![(Vec::new(), Vec::new()); n_kf];
    let mut moved_count = vec![0usize; n_kf];
    let mut seen = vec![false; pre.points.len()];
    for obs in &pre.observations {
        let (a, b) = obs.endpoints;
        if seen[a] {
            continue;
        }
        seen[a] = true;
        let (pa, pb) = (pre.points[a].position, pre.points[b].position);
        let (qa, qb) = (post.points[a].position, post.points[b].position);
        let moved = usize::from((qa - pa).norm() > MOVE_EPSILON)
            + usize::from((qb - pb).norm() > MOVE_EPSILON);
        if moved == 0 {
            continue;
        }
        // Endpoints relative to their own segment midpoint.
        let h_pre = 0.5 * (pb - pa);
        let h_post = 0.5 * (qb - qa);
        let home = pre.points[a].first_seen_frame / interval;
        let lo = home.saturating_sub(config.radius);
        let hi = (home + config.radius + 1).min(n_kf);
        for k in lo..hi {
            buckets[k].0.extend([-h_pre, h_pre]);
            buckets[k].1.extend([-h_post, h_post]);
            moved_count[k] += moved;
        }
    }

    let mut log = Vec::new();
    let mut corrections = Vec::with_capacity(n_kf);
    for (k, ((from, to), &moved)) in buckets.iter().zip(&moved_count).enumerate() {
        let keyframe = k * interval;
        let correction = if moved >= 3 {
            match umeyama(from, to, true) {
                Ok(t) if config.correct_rotation => t.linear_part(),
                Ok(t) => Sim3::from_scale(t.scale),
                Err(e) => {
                    log.push(format!("keyframe {keyframe}: {e}; identity correction"));
                    Sim3::identity()
                }
            }
        } else {
            if moved > 0 {
                log.push(format!(
                    "keyframe {keyframe}: only {moved} moved points; identity correction"
                ));
            }
            Sim3::identity()
        };
        corrections.push(KeyframeCorrection {
            keyframe,
            correction,
            moved_points: moved,
        });
    }
    for line in &log {
        log::debug!("{line}");
    }

    let trajectory = trajectory
        .iter()
        .enumerate()
        .map(|(f, sp)| {
            let c = KeyframeCorrection::at_frame(&corrections, f, interval);
            StampedPose::new(sp.timestamp, c.apply_pose(&sp.pose))
        })
        .collect();
    PropagationResult {
        trajectory,
        corrections,
        log,
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub mode: Mode,
    /// Corrected trajectory.
    pub trajectory: Trajectory,
    /// Poses as emitted by the front end, before any back-end correction of
    /// already-emitted frames.
    pub raw_trajectory: Trajectory,
    pub map: EstimatedMap,
    pub clusters: ClusterStore,
    pub rounds: Vec<RoundReport>,
    /// Similarity taking each ground-truth pose to its corrected estimate.
    pub frame_distortion: Vec<Sim3>,
    pub propagation_log: Vec<String>,
}

impl RunResult {
    /// `|s_est / s_true - 1|` at the last frame.
    pub fn final_scale_error(&self) -> f64 {
        self.frame_distortion
            .last()
            .map_or(0.0, |d| (d.scale - 1.0).abs())
    }
}

struct Runner<'w> {
    frontend: Frontend<'w>,
    schedule: ScheduleConfig,
    propagation: PropagationConfig,
    solver: SolverConfig,
    map: EstimatedMap,
    store: ClusterStore,
    trajectory: Vec<StampedPose>,
    raw: Vec<StampedPose>,
    distortion: Vec<Sim3>,
    rounds: Vec<RoundReport>,
    log: Vec<String>,
}

impl Runner<'_> {
    fn round(&mut self, frame: usize, scope: Scope) -> Result<(), PipelineError> {
        let problem =
            build_problem(&self.store, &self.map, scope, self.schedule.lambda)?.with_config(self.solver);
        if problem.is_empty() {
            return Ok(());
        }
        let (solution, report) = solve(&problem);
        let pre = self.map.clone();
        solution.write_to(&mut self.map);
        self.store.recompute_centers(&self.map)?;

        let interval = self.propagation.keyframe_interval;
        let prop = propagate_to_poses(&pre, &self.map, &self.trajectory, &self.propagation);
        self.trajectory = prop.trajectory;
        for (f, d) in self.distortion.iter_mut().enumerate() {
            *d = KeyframeCorrection::at_frame(&prop.corrections, f, interval).compose(d);
        }
        let corrected = prop
            .corrections
            .iter()
            .filter(|c| c.correction != Sim3::identity())
            .count();
        if let Some(latest) = prop
            .corrections
            .iter()
            .rev()
            .find(|c| c.correction != Sim3::identity())
        {
            self.frontend.apply_correction(&latest.correction);
        }
        self.log.extend(prop.log);
        self.rounds.push(RoundReport {
            frame,
            scope: match scope {
                Scope::Global => RoundScope::Global,
                Scope::Local { .. } => RoundScope::Local,
            },
            report,
            corrected_keyframes: corrected,
        });
        Ok(())
    }
}

/// Runs the front end over `world` with the back end scheduled per `schedule`.
pub fn run(
    world: &World,
    drift: DriftConfig,
    observation: ObservationConfig,
    schedule: ScheduleConfig,
) -> Result<RunResult, PipelineError> {
    schedule.validate()?;
    let mut r = Runner {
        frontend: Frontend::new(world, drift, observation)?,
        schedule,
        propagation: PropagationConfig {
            keyframe_interval: schedule.keyframe_interval,
            radius: schedule.propagation_radius,
            correct_rotation: schedule.correct_rotation,
        },
        solver: SolverConfig {
            max_iterations: schedule.max_iterations,
            ..SolverConfig::default()
        },
        map: EstimatedMap::default(),
        store: ClusterStore::new(schedule.tau),
        trajectory: Vec::new(),
        raw: Vec::new(),
        distortion: Vec::new(),
        rounds: Vec::new(),
        log: Vec::new(),
    };
    let interval = schedule.keyframe_interval;
    while let Some(step) = r.frontend.step(&mut r.map) {
        let pose = *r.map.est_trajectory.last().expect("frame just pushed");
        r.trajectory.push(pose);
        r.raw.push(pose);
        r.distortion.push(step.drift);
        for id in step.observations {
            match r.store.assign(&r.map.observations[id], &r.map) {
                Ok(_) | Err(ClusterError::ZeroLength(_)) => {}
                Err(e) => return Err(e.into()),
            }
        }
        if schedule.mode == Mode::Baseline || (step.frame + 1) % interval != 0 {
            continue;
        }
        let first_frame = (step.frame + 1).saturating_sub(schedule.local_window * interval);
        r.round(step.frame, Scope::Local { first_frame })?;
        if schedule.mode == Mode::SegGlobal {
            r.round(step.frame, Scope::Global)?;
        }
    }
    r.map.est_trajectory.clone_from(&r.trajectory);
    Ok(RunResult {
        mode: schedule.mode,
        trajectory: Trajectory::new(r.trajectory)?,
        raw_trajectory: Trajectory::new(r.raw)?,
        map: r.map,
        clusters: r.store,
        rounds: r.rounds,
        frame_distortion: r.distortion,
        propagation_log: r.log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{MapPoint, SegmentObservation};
    use crate::geometry::PoseSE3;
    use crate::metrics::{ate, AlignMode};
    use crate::world::{generate_corridor, WorldSpec};

    fn corridor(length: f64) -> World {
        generate_corridor(&WorldSpec {
            corridor_length: length,
            ..WorldSpec::default()
        })
        .unwrap()
    }

    fn exact() -> ObservationConfig {
        ObservationConfig {
            detect_prob: 1.0,
            endpoint_noise_sigma: 0.0,
            ..ObservationConfig::default()
        }
    }

    #[test]
    fn baseline_keeps_the_raw_trajectory() {
        let world = corridor(12.0);
        let res = run(&world, DriftConfig::default(), ObservationConfig::default(), ScheduleConfig::with_mode(Mode::Baseline)).unwrap();
        assert_eq!(res.trajectory, res.raw_trajectory);
        assert!(res.rounds.is_empty());
    }

    #[test]
    fn noiseless_runs_are_exact_in_every_mode() {
        let world = corridor(12.0);
        for mode in Mode::ALL {
            let res = run(&world, DriftConfig::none(), exact(), ScheduleConfig::with_mode(mode)).unwrap();
            let e = ate(&res.trajectory, &world.gt_trajectory, AlignMode::Similarity).unwrap();
            assert!(e < 1e-9, "{mode}: {e}");
            for r in &res.rounds {
                assert!(r.report.initial_objective < 1e-20);
            }
        }
    }

    #[test]
    fn rounds_never_raise_the_objective() {
        let world = corridor(16.0);
        for mode in [Mode::Seg, Mode::SegGlobal] {
            let res = run(&world, DriftConfig::default(), ObservationConfig::default(), ScheduleConfig::with_mode(mode)).unwrap();
            assert!(!res.rounds.is_empty());
            for r in &res.rounds {
                assert!(r.report.final_objective <= r.report.initial_objective);
                assert!(r.report.is_monotone());
            }
            if mode == Mode::SegGlobal {
                assert!(res.rounds.iter().any(|r| r.scope == RoundScope::Global));
            }
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let world = corridor(12.0);
        let go = || run(&world, DriftConfig { seed: 5, ..DriftConfig::default() }, ObservationConfig { seed: 5, ..ObservationConfig::default() }, ScheduleConfig::with_mode(Mode::SegGlobal)).unwrap();
        let (a, b) = (go(), go());
        assert_eq!(a.trajectory, b.trajectory);
        assert_eq!(a.map, b.map);
        assert_eq!(a.rounds, b.rounds);
    }

    fn median(mut v: Vec<f64>) -> f64 {
        v.sort_by(f64::total_cmp);
        let n = v.len();
        0.5 * (v[(n - 1) / 2] + v[n / 2])
    }

    #[test]
    fn slow_scale_drift_is_reduced_without_noise() {
        // Drift slow enough that consecutive jambs stay inside the membership
        // radius of the established cluster.
        let world = corridor(40.0);
        let (mut ate_base, mut ate_seg, mut err_base, mut err_seg) = (vec![], vec![], vec![], vec![]);
        for seed in 0..10 {
            let drift = DriftConfig { seed, scale_sigma: 2e-4, ..DriftConfig::default() };
            let base = run(&world, drift, exact(), ScheduleConfig::with_mode(Mode::Baseline)).unwrap();
            let seg = run(&world, drift, exact(), ScheduleConfig::with_mode(Mode::Seg)).unwrap();
            let a = ate(&base.trajectory, &world.gt_trajectory, AlignMode::Similarity).unwrap();
            let b = ate(&seg.trajectory, &world.gt_trajectory, AlignMode::Similarity).unwrap();
            assert!(b < a, "seed {seed}: {b} vs {a}");
            ate_base.push(a);
            ate_seg.push(b);
            err_base.push(base.final_scale_error());
            err_seg.push(seg.final_scale_error());
        }
        assert!(median(ate_seg) < median(ate_base));
        assert!(median(err_seg) < median(err_base));
    }

    /// Segments `(p1, p2, first_seen_frame)`, one observation each.
    fn map_with(segments: &[(Vec3, Vec3, usize)]) -> EstimatedMap {
        let mut map = EstimatedMap::default();
        for (i, &(a, b, frame)) in segments.iter().enumerate() {
            for (k, p) in [a, b].into_iter().enumerate() {
                map.points.push(MapPoint {
                    id: 2 * i + k,
                    position: p,
                    first_seen_frame: frame,
                });
            }
            map.observations.push(SegmentObservation {
                id: i,
                endpoints: (2 * i, 2 * i + 1),
                frame,
                world_segment: i,
            });
        }
        map
    }

    fn exact_kf() -> PropagationConfig {
        PropagationConfig {
            keyframe_interval: 10,
            radius: 0,
            correct_rotation: true,
        }
    }

    fn poses(n: usize) -> Vec<StampedPose> {
        (0..n)
            .map(|i| {
                StampedPose::new(
                    i as f64 / 30.0,
                    PoseSE3::translation(0.1 * i as f64, 0.0, 0.0),
                )
            })
            .collect()
    }

    fn segments(n: usize) -> Vec<(Vec3, Vec3, usize)> {
        (0..n)
            .map(|i| {
                let f = i as f64;
                let a = Vec3::new(f * 0.4, f.sin() + 1.0, -1.5);
                let d = Vec3::new((0.7 * f).cos(), (1.3 * f).sin(), 1.0 + 0.1 * f);
                (a, a + d, i)
            })
            .collect()
    }

    #[test]
    fn unchanged_map_gives_identity_corrections() {
        let pre = map_with(&segments(12));
        let traj = poses(20);
        let out = propagate_to_poses(&pre, &pre, &traj, &exact_kf());
        assert!(out.corrections.iter().all(|c| c.correction == Sim3::identity()));
        assert_eq!(out.trajectory, traj);
        assert!(out.log.is_empty());
    }

    #[test]
    fn uniform_rescale_is_recovered_per_keyframe() {
        let s = 1.03;
        let pre = map_with(&segments(30));
        let mut post = pre.clone();
        for p in &mut post.points {
            p.position /= s;
        }
        let out = propagate_to_poses(&pre, &post, &poses(30), &exact_kf());
        assert_eq!(out.corrections.len(), 3);
        for c in &out.corrections {
            assert!((c.correction.scale - 1.0 / s).abs() < 1e-6);
            assert!(c.correction.rotation.angle() < 1e-6);
        }
        let traj = poses(30);
        for (a, b) in traj.iter().zip(&out.trajectory) {
            assert!((b.position() - a.position() / s).norm() < 1e-6);
        }
    }

    #[test]
    fn two_moved_points_fall_back_to_identity() {
        let pre = map_with(&[(Vec3::zeros(), Vec3::z(), 0), (Vec3::x(), Vec3::x() + Vec3::y(), 12)]);
        let mut post = pre.clone();
        post.points[0].position.z -= 0.01;
        post.points[1].position.z += 0.01;
        let out = propagate_to_poses(&pre, &post, &poses(20), &exact_kf());
        assert_eq!(out.corrections[0].correction, Sim3::identity());
        assert_eq!(out.corrections[0].moved_points, 2);
        assert_eq!(out.log.len(), 1);
        assert!(out.log[0].contains("keyframe 0"));
    }

    #[test]
    fn mode_names_round_trip() {
        for m in Mode::ALL {
            assert_eq!(m.to_string().parse::<Mode>().unwrap(), m);
        }
        assert!("global".parse::<Mode>().is_err());
    }
}
