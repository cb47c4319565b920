//! Scale-drift reduction for monocular SLAM maps by clustering repeated 3D
//! line segments and optimizing each segment toward its cluster center.
//!
//! The crate simulates a drifting front end over synthetic corridor worlds,
//! clusters segment observations incrementally, solves the cluster-consistency
//! least-squares problem and scores trajectories with ATE and RPE.

pub mod clustering;
pub mod frontend;
pub mod geometry;
pub mod metrics;
pub mod optimize;
pub mod pipeline;
pub mod trajectory;
pub mod world;

pub use clustering::{Cluster, ClusterStore, Sign, DEFAULT_TAU};
pub use frontend::{simulate, DriftConfig, EstimatedMap, ObservationConfig};
pub use geometry::{PoseSE3, RotationSO3, Sim3, Vec3};
pub use metrics::{ate, rpe, AlignMode, MetricsReport};
pub use optimize::{build_problem, evaluate_objective, solve, OptProblem, OptReport, Scope};
pub use pipeline::{run, Mode, RunResult, ScheduleConfig};
pub use trajectory::{StampedPose, Trajectory};
pub use world::{generate_corridor, World, WorldSpec};
