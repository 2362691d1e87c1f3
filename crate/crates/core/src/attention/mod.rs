//! Actor attention: pooling features inside actor proposals, classifying each
//! proposal, and aggregating the top-k proposal scores per class into a
//! video-level prediction trained from video labels alone.

mod checkpoint;
mod head;
mod pool;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use head::{
    backward, classify, forward, logit_gradient, objective, param_backward, rank_proposals, sgd_step,
    softmax_cross_entropy, topk_aggregate, ClassifierParams, ForwardPass, Gradients,
};
pub use pool::{actor_of_interest_pool, build_grid, build_grid_at, pool_backward, SamplingGrid};
pub use train::{
    accuracy, encode_frames, fit, flip_features, flip_tube, init_params, predict, segment_center_frames,
    stratified_frames, train, NormalizationSpec, Prediction, TrainConfig, TrainOutcome, VideoInput,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttentionConfig {
    pub grid_x: usize,
    pub grid_y: usize,
    pub top_k: usize,
    pub proposals_per_video: usize,
    pub frames_per_video: usize,
    /// Filled from the class list of the dataset when left at 0.
    pub num_classes: usize,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        AttentionConfig {
            grid_x: 5,
            grid_y: 5,
            top_k: 12,
            proposals_per_video: 20,
            frames_per_video: 16,
            num_classes: 0,
        }
    }
}

impl AttentionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_x == 0 || self.grid_y == 0 || self.frames_per_video == 0 {
            return Err(Error::Config("grid size and frames_per_video must be >= 1".into()));
        }
        if self.top_k == 0 || self.top_k > self.proposals_per_video {
            return Err(Error::Config(format!(
                "top_k {} must lie in 1..={}",
                self.top_k, self.proposals_per_video
            )));
        }
        if self.num_classes == 0 {
            return Err(Error::Config("num_classes must be >= 1".into()));
        }
        Ok(())
    }
}
