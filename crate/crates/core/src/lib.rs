//! Speak-and-click object annotation.
//!
//! Annotators click on objects (a point, or four extreme points for a box)
//! while saying the object's class name. This crate turns the recognizer's
//! timed transcripts and the click log into labelled objects:
//!
//! 1. [`segmenter`] splits each transcription into class names from the
//!    [`vocab`], picking the recognizer alternative that fits best.
//! 2. [`aligner`] matches the resulting timed labels to the clicked objects
//!    by temporal overlap with a global sequence alignment.
//!
//! [`simulator`] generates synthetic sessions with known ground truth and
//! [`metrics`] scores the output.

pub mod aligner;
pub mod error;
pub mod eventlog;
pub mod geometry;
pub mod metrics;
pub mod pipeline;
pub mod segmenter;
pub mod simulator;
pub mod transcript;
pub mod vocab;

pub use aligner::{align, interval_overlap, match_cost, Alignment, AlignmentConfig, Interval};
pub use error::{Error, Result};
pub use eventlog::{ImageSession, SessionLog};
pub use geometry::{
    box_from_extreme_clicks, iou, point_in_box, AnnotationSet, BBox, Click, ImageAnnotations, Location,
    ObjectAnnotation, ObjectEvent, ObjectKind,
};
pub use metrics::{evaluate, EvalMode, EvalReport};
pub use segmenter::{Segment, Segmentation, Segmenter, TimedClassLabel};
pub use simulator::{simulate, SimOutput, SimParams, SimTrace};
pub use transcript::{utterance_span, TimedWord, Transcript, TranscriptionAlternative, Utterance};
pub use vocab::{embed_phrase, nearest_class, phrase_distance, EmbeddingTable, Vocabulary};
