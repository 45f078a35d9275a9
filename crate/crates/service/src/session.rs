//! Session domain: state, events, and the pure computations behind each
//! command. Every state change is an [`Event`]; folding a session's events
//! with [`SessionState::apply`] rebuilds the state exactly.

use calibguide::covariance::relative_covariance;
use calibguide::geometry::project;
use calibguide::jacobian::assemble_info;
use calibguide::pipeline::{
    calibrate, rotation_error, translation_error, triangulation_error_stats, CalibrationDataset,
    CalibrationResult,
};
use calibguide::planner::{is_visible, search, PlanningState};
use calibguide::simharness::synthesize_view;
use calibguide::{
    BoardSpec, CandidatePose, Error, JacobianMode, Pose, RobustKernel, SearchConfig, StereoRig,
    ViewPair,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Guided,
    Freestyle,
}

/// Stopping thresholds; the session reports when either is met.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct Targets {
    pub trace: Option<f64>,
    pub reprojection_px: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    /// Intrinsics of both cameras. The relative pose is the ground truth the
    /// simulated captures are rendered with.
    pub rig: StereoRig,
    pub board: BoardSpec,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub targets: Targets,
    #[serde(default = "default_kernel")]
    pub kernel: RobustKernel,
    /// Planner settings used by `suggest`; the seed is derived per call.
    #[serde(default = "default_search")]
    pub search: SearchConfig,
}

fn default_kernel() -> RobustKernel {
    RobustKernel::Quadratic
}

fn default_search() -> SearchConfig {
    SearchConfig {
        jacobian: calibguide::JacobianSettings { full_chain: true },
        ..Default::default()
    }
}

/// A capture is either simulated at a board pose, or a set of externally
/// detected corners in the usual view layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CaptureRequest {
    Simulated {
        pose: Pose,
        #[serde(default = "default_sigma")]
        sigma: f64,
    },
    External {
        view: ViewPair,
    },
}

fn default_sigma() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptureSource {
    /// Simulated at the pose of the current suggestion.
    Suggested,
    /// Simulated at an operator-chosen pose.
    Manual,
    External,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuggestRequest {
    pub seed: Option<u64>,
}

/// Telemetry recorded after each accepted capture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureStats {
    pub views: usize,
    pub source: CaptureSource,
    pub trace: Option<f64>,
    pub reprojection_rms_px: Option<f64>,
    /// Triangulation error on the session's own views.
    pub triangulation_mm: Option<f64>,
    /// Errors against the simulated ground-truth relative pose.
    pub rotation_error_deg: Option<f64>,
    pub translation_error_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub candidate: CandidatePose,
    /// Board corners of the suggested pose in the left image.
    pub overlay: Vec<[f64; 2]>,
    pub current_trace: Option<f64>,
    pub seed: u64,
    /// Number of views the suggestion was computed for.
    pub views: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Created {
        id: String,
        request: CreateRequest,
    },
    Captured {
        view: ViewPair,
        true_pose: Option<Pose>,
        estimate: Option<CalibrationResult>,
        stats: CaptureStats,
    },
    Suggested {
        suggestion: Suggestion,
    },
}

/// An event with its position in the session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub seq: usize,
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub id: String,
    pub mode: Mode,
    pub rig: StereoRig,
    pub board: BoardSpec,
    pub seed: u64,
    pub targets: Targets,
    pub kernel: RobustKernel,
    pub search: SearchConfig,
    pub views: Vec<ViewPair>,
    pub true_poses: Vec<Option<Pose>>,
    /// Defined once two views exist.
    pub estimate: Option<CalibrationResult>,
    /// One entry per capture; `null` while the covariance is undefined.
    pub trace_history: Vec<Option<f64>>,
    pub history: Vec<CaptureStats>,
    pub suggestion: Option<Suggestion>,
    pub target_reached: bool,
}

impl SessionState {
    pub fn new(id: String, req: CreateRequest) -> Self {
        Self {
            id,
            mode: req.mode,
            rig: req.rig,
            board: req.board,
            seed: req.seed,
            targets: req.targets,
            kernel: req.kernel,
            search: req.search,
            views: Vec::new(),
            true_poses: Vec::new(),
            estimate: None,
            trace_history: Vec::new(),
            history: Vec::new(),
            suggestion: None,
            target_reached: false,
        }
    }

    /// Rebuilds a session from its log.
    pub fn replay<'a>(events: impl IntoIterator<Item = &'a Event>) -> Option<Self> {
        let mut it = events.into_iter();
        let Some(Event::Created { id, request }) = it.next() else {
            return None;
        };
        let mut state = Self::new(id.clone(), request.clone());
        for e in it {
            state.apply(e);
        }
        Some(state)
    }

    pub fn apply(&mut self, event: &Event) {
        match event {
            Event::Created { .. } => {}
            Event::Captured {
                view,
                true_pose,
                estimate,
                stats,
            } => {
                self.views.push(view.clone());
                self.true_poses.push(*true_pose);
                self.estimate = estimate.clone();
                self.trace_history.push(stats.trace);
                self.history.push(stats.clone());
                self.suggestion = None;
                self.target_reached = self.targets_met(stats);
            }
            Event::Suggested { suggestion } => self.suggestion = Some(suggestion.clone()),
        }
    }

    fn targets_met(&self, stats: &CaptureStats) -> bool {
        let hit = |target: Option<f64>, value: Option<f64>| matches!((target, value), (Some(t), Some(v)) if v <= t);
        hit(self.targets.trace, stats.trace)
            || hit(self.targets.reprojection_px, stats.reprojection_rms_px)
    }

    pub fn dataset(&self) -> CalibrationDataset {
        CalibrationDataset {
            left: self.rig.left,
            right: self.rig.right,
            board: self.board,
            views: self.views.clone(),
        }
    }

    fn jacobian_mode(&self) -> JacobianMode {
        JacobianMode::from_full_chain(self.search.jacobian.full_chain)
    }

    /// Covariance trace of the relative pose under an estimate.
    fn trace_of(&self, estimate: &CalibrationResult, views: &[ViewPair]) -> Option<f64> {
        let rig = self.rig.with_relative(estimate.relative);
        let views: Vec<ViewPair> = views
            .iter()
            .zip(&estimate.per_view_left_abs)
            .map(|(v, p)| v.with_left_abs(*p))
            .collect();
        let info = assemble_info(&views, &rig, self.jacobian_mode()).ok()?;
        relative_covariance(&info)
            .ok()
            .map(|c| calibguide::covariance::trace_objective(&c, &self.search.weights))
    }

    /// Validates a capture, renders it if simulated, and recalibrates.
    pub fn capture(&self, req: &CaptureRequest) -> Result<Event, Error> {
        let (view, true_pose, source) = match req {
            CaptureRequest::Simulated { pose, sigma } => {
                if !(sigma.is_finite() && *sigma >= 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "sigma must be non-negative, got {sigma}"
                    )));
                }
                if !is_visible(pose, &self.rig, &self.board, 0.0) {
                    return Err(Error::NotVisible);
                }
                let mut rng = ChaCha8Rng::seed_from_u64(
                    self.seed ^ (self.views.len() as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
                );
                let view = synthesize_view(&self.rig, &self.board, pose, *sigma, &mut rng)?;
                let source = match &self.suggestion {
                    Some(s) if s.candidate.pose == *pose => CaptureSource::Suggested,
                    _ => CaptureSource::Manual,
                };
                (view, Some(*pose), source)
            }
            CaptureRequest::External { view } => {
                let n = self.board.corner_count();
                if view.board != self.board
                    || view.left_pixels.len() != n
                    || view.right_pixels.len() != n
                {
                    return Err(Error::DimensionMismatch(format!(
                        "expected {n} corners per image on the session board"
                    )));
                }
                (view.clone(), None, CaptureSource::External)
            }
        };

        let mut views = self.views.clone();
        views.push(view.clone());
        let mut stats = CaptureStats {
            views: views.len(),
            source,
            trace: None,
            reprojection_rms_px: None,
            triangulation_mm: None,
            rotation_error_deg: None,
            translation_error_pct: None,
        };
        let estimate = if views.len() >= 2 {
            let ds = CalibrationDataset {
                views: views.clone(),
                ..self.dataset()
            };
            let est = calibrate(&ds, self.kernel)?;
            stats.trace = self.trace_of(&est, &views);
            stats.reprojection_rms_px = Some(est.rms_reproj);
            stats.triangulation_mm = triangulation_error_stats(&ds, &est).ok();
            stats.rotation_error_deg = Some(rotation_error(&self.rig.relative, &est.relative));
            stats.translation_error_pct =
                translation_error(&self.rig.relative.tvec, &est.relative.tvec).ok();
            Some(est)
        } else {
            None
        };
        Ok(Event::Captured {
            view,
            true_pose,
            estimate,
            stats,
        })
    }

    /// Plans the next pose from the current estimate.
    pub fn suggest(&self, req: &SuggestRequest) -> Result<Event, Error> {
        let Some(est) = &self.estimate else {
            return Err(Error::InsufficientViews {
                needed: 2,
                got: self.views.len(),
            });
        };
        let seed = req
            .seed
            .unwrap_or(self.seed.wrapping_add(self.views.len() as u64));
        let state = PlanningState {
            rig: self.rig.with_relative(est.relative),
            board: self.board,
            view_poses: est.per_view_left_abs.clone(),
        };
        let cfg = SearchConfig {
            seed,
            ..self.search.clone()
        };
        let outcome = search(&state, &cfg)?;
        let overlay = self
            .board
            .corners()
            .iter()
            .map(|p| project(&self.rig.left, &outcome.best.pose, p).map(|px| [px.x, px.y]))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Event::Suggested {
            suggestion: Suggestion {
                candidate: outcome.best,
                overlay,
                current_trace: outcome.current_trace,
                seed,
                views: self.views.len(),
            },
        })
    }
}

/// Checks a create request before a session is made from it.
pub fn validate_create(req: &CreateRequest) -> Result<(), Error> {
    let as_config = |e: Error| match e {
        Error::InvalidModel(m) => Error::InvalidConfig(m),
        e => e,
    };
    req.rig.validate().map_err(as_config)?;
    req.board.validate().map_err(as_config)?;
    req.search.validate()
}
