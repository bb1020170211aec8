//! Multi-technique visual place recognition with sequential self-correction.
//!
//! * [`sic`] re-ranks a single technique's top candidates by how consistently
//!   they continue the recent diagonal of the score matrix.
//! * [`music`] runs SIC for every technique and trusts, per frame, the one
//!   whose corrected candidate is most consistent.
//! * [`adaptive`] runs only the subset of techniques that has recently been
//!   winning, and re-selects when a paired t-test on correction magnitudes
//!   signals a change in conditions.
//! * [`eval`] computes accuracy, precision-recall, AUC and the proportion of
//!   technique runs.

pub mod adaptive;
pub mod eval;
pub mod music;
pub mod providers;
pub mod scenarios;
pub mod score;
pub mod sic;
pub mod stats;

pub use adaptive::{AdaptiveConfig, AdaptiveController, ReselectionEvent};
pub use eval::{EvalReport, GroundTruth, PredictionLog};
pub use music::{FrameArbitration, MusicEngine};
pub use providers::{TechniqueId, TechniqueProvider};
pub use score::{ScoreStream, ScoreVector};
pub use sic::{CorrectionRecord, SicConfig};
