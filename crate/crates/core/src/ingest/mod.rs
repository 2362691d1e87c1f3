//! File formats and loaders: detections, pixel frames, feature maps, ground
//! truth, manifests and the proposal/ranking documents.
//!
//! JSON documents carry `"format_version": 1` and are written in a canonical
//! form (two-space indentation, trailing newline) so that saving a loaded
//! canonical file reproduces it byte for byte.

mod detections;
mod ground_truth;
pub(crate) mod json;
mod manifest;
mod media;
mod proposals;
pub mod tensor_file;

pub use detections::{load_detections, save_detections, DetectionSet};
pub use ground_truth::{load_ground_truth, save_ground_truth, GroundTruth, GtInstance};
pub use json::to_canonical_json;
pub use manifest::{load_manifest, save_manifest, EntryDoc, Manifest, ManifestDoc, ManifestEntry, Split};
pub use media::{load_features, load_frames, save_features, save_frames, FeatureTensor, VideoFrames};
pub use proposals::{
    load_proposals, load_rankings, save_proposals, save_rankings, ClassRanking, ProposalDoc, ProposalTubeDoc,
    RankedProposal, RankingDoc,
};
pub use tensor_file::{load_tensor, save_tensor, DType, TensorFile};
