//! Proposal and ranking documents exchanged between pipeline stages.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BBox, Tube};
use crate::ingest::json::{check_version, read_json, write_json};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalTubeDoc {
    /// Originating detection, absent for linking methods without seeds.
    pub seed: Option<BBox>,
    #[serde(default)]
    pub degenerate: bool,
    pub boxes: Tube,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalDoc {
    pub format_version: u32,
    pub video_id: String,
    pub method: String,
    pub num_frames: usize,
    pub tubes: Vec<ProposalTubeDoc>,
}

impl ProposalDoc {
    pub fn tubes(&self) -> Vec<Tube> {
        self.tubes.iter().map(|t| t.boxes.clone()).collect()
    }
}

pub fn load_proposals(path: impl AsRef<Path>) -> Result<ProposalDoc> {
    let path = path.as_ref();
    let doc: ProposalDoc = read_json(path)?;
    check_version(doc.format_version, path)?;
    for (i, t) in doc.tubes.iter().enumerate() {
        if t.boxes.end() >= doc.num_frames {
            return Err(Error::validation(
                path,
                format!(
                    "tube {i} ends at frame {} beyond num_frames {}",
                    t.boxes.end(),
                    doc.num_frames
                ),
            ));
        }
    }
    Ok(doc)
}

pub fn save_proposals(path: impl AsRef<Path>, doc: &ProposalDoc) -> Result<()> {
    write_json(path.as_ref(), doc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankedProposal {
    pub proposal: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassRanking {
    pub class: String,
    pub order: Vec<RankedProposal>,
}

/// Per-proposal class scores of one video and the resulting per-class order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankingDoc {
    pub format_version: u32,
    pub video_id: String,
    pub classes: Vec<String>,
    /// `logits[p][k]`.
    pub logits: Vec<Vec<f64>>,
    pub video_logits: Vec<f64>,
    pub rankings: Vec<ClassRanking>,
}

pub fn load_rankings(path: impl AsRef<Path>) -> Result<RankingDoc> {
    let path = path.as_ref();
    let doc: RankingDoc = read_json(path)?;
    check_version(doc.format_version, path)?;
    let k = doc.classes.len();
    if doc.logits.iter().any(|row| row.len() != k) || doc.video_logits.len() != k {
        return Err(Error::validation(path, format!("logit rows must have {k} entries")));
    }
    Ok(doc)
}

pub fn save_rankings(path: impl AsRef<Path>, doc: &RankingDoc) -> Result<()> {
    write_json(path.as_ref(), doc)
}
