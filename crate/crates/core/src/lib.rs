//! Computational core for dense video object captioning.
//!
//! The crate covers trajectory formation from association matrices, the
//! captioned tracking metric (CHOTA) and frame-level mAP-METEOR, caption
//! similarity scores, the detection/tracking/captioning training losses and
//! likelihood-based spatial grounding. Neural components are out of scope:
//! association matrices, features and caption likelihoods are inputs.

pub mod aggregate;
pub mod assoc;
pub mod capmetrics;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod ground;
pub mod io;
pub mod lap;
pub mod losses;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use geometry::{giou, iou, BBox};
pub use types::{Caption, Detection, ObsRef, Trajectory, VideoRecord};
