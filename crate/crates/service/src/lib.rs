//! Guided calibration sessions over HTTP.
//!
//! A session holds a rig's intrinsics, a board, the captured views and the
//! current stereo estimate. Captures are simulated from a board pose (or
//! supplied as detected corners), each one re-runs the calibration and
//! records the relative-pose covariance trace, and `suggest` asks the planner
//! for the pose that shrinks that trace most. Sessions persist as
//! append-only event logs and are rebuilt by replaying them.

mod error;
pub mod http;
pub mod session;
pub mod store;

pub use error::{ErrorBody, ServiceError};
pub use http::{router, serve, ServeConfig};
pub use session::{
    CaptureRequest, CaptureSource, CaptureStats, CreateRequest, Envelope, Event, Mode,
    SessionState, SuggestRequest, Suggestion, Targets,
};
pub use store::Store;
