pub mod geometry;
pub mod seed;
pub mod world;
pub mod density;
pub mod grasp;
pub mod singulation;
pub mod pipeline;
pub mod config;

pub use config::{ConfigError, RunConfig};
pub use density::{DensityMap, DotMap, EstimatorNoise};
pub use geometry::{Grid, Pixel, Pose2, UnitVec2, Vec2};
pub use grasp::{DetectorConfig, Grasp};
pub use pipeline::{Environment, FailureReason, Mode, TrialConfig, TrialRecord};
pub use singulation::{Cluster, Flag, PlannedPush, Planner, SingulationParams, SingulationPolicy};
pub use world::{Gripper, Item, Location, Rect, SceneFile, Shape, Workspace, WorldState};
