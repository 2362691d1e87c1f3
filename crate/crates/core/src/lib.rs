pub mod attention;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod ingest;
pub mod linking;
pub mod synth;
pub mod tensor;
pub mod tracking;
pub mod viterbi;

pub use error::{Error, Result};
pub use geometry::{box_iou, clamp_box, tube_iou, BBox, Tube};
pub use tensor::Tensor;
