//! Speech-feature extraction and hierarchical classification for grading
//! dysarthria severity on a five-point scale (1 = most severe, 5 = healthy).
//!
//! The crate is organised bottom-up:
//!
//! - [`dsp`]: framing, STFT, LPC, DCT, pitch, resampling and silence trimming.
//! - [`glottal`]: glottal closure instant detection (mean-based signal plus
//!   LPC residual) and the seven pulse statistics derived from it.
//! - [`formant`]: LPC root-based estimation of F1..F5.
//! - [`phasefeat`]: the 54-dimensional per-frame phase feature bank.
//! - [`boost`]: gradient boosted trees and a bagged classification forest.
//! - [`hier`]: the two-stage, demographically routed classifier.
//! - [`fusion`] and [`eval`]: late fusion rules and challenge metrics.
//! - [`corpus`]: speaker records, manifests, WAV IO and a synthetic
//!   source-filter corpus with known ground truth.

pub mod boost;
pub mod corpus;
pub mod dsp;
mod error;
pub mod eval;
pub mod formant;
pub mod fusion;
pub mod glottal;
pub mod hier;
pub mod phasefeat;
pub mod seed;
pub mod serial;
mod severity;

pub use crate::corpus::{AudioClip, Gender, SpeakerRecord, UtteranceKind};
pub use crate::error::{Error, Result};
pub use crate::eval::{ConfusionMatrix, MetricsReport};
pub use crate::fusion::{ClassDistribution, FusionMode, TiePolicy, VoteOutcome};
pub use crate::glottal::{GciSequence, GlottalParams};
pub use crate::hier::{HierarchyModel, HierarchyOptions, StageOneSpec, SubgroupKey};
pub use crate::phasefeat::{PhaseFrame, PhaseFrameMatrix};
pub use crate::severity::{Severity, N_CLASSES};
