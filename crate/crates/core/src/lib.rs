//! Next-best-pose planning for stereo extrinsic calibration.
//!
//! Given a two-camera rig with known intrinsics and the board views captured
//! so far, [`planner::next_optimal_pose`] proposes the board pose that most
//! reduces the trace of the relative-pose covariance. The rest of the crate
//! is the pipeline around it: projection and triangulation ([`geometry`]),
//! analytic Jacobians and information blocks ([`jacobian`]), Schur-complement
//! covariance ([`covariance`]), PnP and stereo bundle adjustment
//! ([`pipeline`]), and a synthetic experiment harness ([`simharness`]).

pub mod covariance;
pub mod error;
pub mod geometry;
pub mod jacobian;
pub mod pipeline;
pub mod planner;
mod serde_util;
pub mod simharness;

pub use error::{Error, Result};
pub use geometry::{BoardSpec, CameraModel, Pose, StereoRig};
pub use jacobian::{JacobianMode, JacobianSettings, ViewPair};
pub use pipeline::{CalibrationDataset, CalibrationResult, RobustKernel};
pub use planner::{CandidatePose, PlanningState, RandomPoseConstraints, SearchConfig};
