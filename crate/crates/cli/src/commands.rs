//! Subcommand implementations. Per-video work runs on a bounded thread pool;
//! results are written one file at a time in manifest order.

use std::path::{Path, PathBuf};

use actorloc::attention::{
    encode_frames, load_checkpoint, predict, rank_proposals, save_checkpoint, train, Checkpoint, VideoInput,
};
use actorloc::eval::{mean_average_precision, recall_curve, ApReport, Detection, ProposalMap};
use actorloc::ingest::{
    load_detections, load_features, load_frames, load_manifest, load_proposals, load_rankings, save_proposals,
    save_rankings, ClassRanking, FeatureTensor, GroundTruth, Manifest, ManifestEntry, RankedProposal, RankingDoc,
    Split,
};
use actorloc::linking::generate_actor_proposals;
use actorloc::synth::{
    classification_suite, deformation_benchmark, write_classification_suite, write_deformation_suite,
};
use actorloc::tracking::{GrayVideo, NccMatcher};
use actorloc::viterbi::extract_k_tubes;
use actorloc::Tube;
use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{RunConfig, SplitChoice, SuiteKind};
use crate::{Failures, Invalid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ActorLinking,
    Viterbi,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::ActorLinking => "actor-linking",
            Method::Viterbi => "viterbi",
        }
    }
}

fn in_split(entry: &ManifestEntry, split: SplitChoice) -> bool {
    match split {
        SplitChoice::All => true,
        SplitChoice::Train => entry.split == Split::Train,
        SplitChoice::Test => entry.split == Split::Test,
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .context("starting the worker pool")
}

/// Runs `work` for each entry on the pool and returns results in entry order.
fn per_video<T: Send>(
    cfg: &RunConfig,
    entries: &[&ManifestEntry],
    work: impl Fn(&ManifestEntry) -> Result<T> + Sync,
) -> Result<Vec<Result<T>>> {
    let pool = pool(cfg.jobs)?;
    Ok(pool.install(|| entries.par_iter().map(|e| work(e)).collect()))
}

fn require<'a>(path: &'a Option<PathBuf>, what: &str, entry: &ManifestEntry) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| Invalid(format!("manifest entry {} has no {what} file", entry.video_id)).into())
}

fn load(cfg: &RunConfig) -> Result<Manifest> {
    Ok(load_manifest(cfg.manifest()?)?)
}

/// `--proposals` may name the per-video directory or a `link` output
/// directory containing it.
fn proposal_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg
        .inputs
        .proposals
        .clone()
        .ok_or_else(|| Invalid("a proposals directory is required (--proposals)".into()))?;
    let nested = dir.join("proposals");
    Ok(if nested.is_dir() { nested } else { dir })
}

fn rankings_dir(dir: &Path) -> PathBuf {
    let nested = dir.join("rankings");
    if nested.is_dir() {
        nested
    } else {
        dir.to_path_buf()
    }
}

fn video_file(dir: &Path, video_id: &str) -> PathBuf {
    dir.join(format!("{video_id}.json"))
}

fn record<T>(failures: &mut Failures, video_id: &str, r: Result<T>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            log::error!("{video_id}: {e:#}");
            failures.add(&e);
            None
        }
    }
}

pub fn link(cfg: &RunConfig, method: Method) -> Result<Failures> {
    let manifest = load(cfg)?;
    let split = cfg.inputs.split.unwrap_or(SplitChoice::All);
    let entries: Vec<&ManifestEntry> = manifest.entries.iter().filter(|e| in_split(e, split)).collect();
    let out = cfg.output_dir()?.join("proposals");
    let matcher = NccMatcher::new(cfg.tracker.clone()).map_err(|e| Invalid(e.to_string()))?;
    let results = per_video(cfg, &entries, |e| {
        let dets = load_detections(require(&e.detections, "detections", e)?)?;
        let set = match method {
            Method::ActorLinking => {
                let frames = load_frames(require(&e.frames, "frames", e)?)?;
                generate_actor_proposals(&dets, &GrayVideo::from_frames(&frames), &matcher, &cfg.linking)?
            }
            Method::Viterbi => extract_k_tubes(&dets, &cfg.viterbi)?,
        };
        Ok(set.to_doc(&e.video_id, dets.num_frames, method.name()))
    })?;
    let mut failures = Failures::default();
    let (mut videos, mut tubes) = (0, 0);
    for (e, r) in entries.iter().zip(results) {
        let written = r.and_then(|doc| {
            save_proposals(video_file(&out, &e.video_id), &doc)?;
            Ok(doc.tubes.len())
        });
        if let Some(n) = record(&mut failures, &e.video_id, written) {
            videos += 1;
            tubes += n;
        }
    }
    println!("{}: {videos} videos processed, {tubes} tubes emitted", method.name());
    Ok(failures)
}

fn video_input(cfg: &RunConfig, e: &ManifestEntry, proposals: &Path) -> Result<VideoInput> {
    let features: FeatureTensor = match (&e.features, &e.frames) {
        (Some(f), _) => load_features(f)?,
        (None, Some(f)) => encode_frames(&load_frames(f)?, cfg.encoder_cell, &cfg.normalization)?,
        (None, None) => {
            return Err(Invalid(format!("manifest entry {} has neither features nor frames", e.video_id)).into())
        }
    };
    let doc = load_proposals(video_file(proposals, &e.video_id))?;
    Ok(VideoInput {
        video_id: e.video_id.clone(),
        features,
        proposals: doc.tubes(),
        label: e.label,
    })
}

fn inputs_for(cfg: &RunConfig, entries: &[&ManifestEntry], failures: &mut Failures) -> Result<Vec<VideoInput>> {
    let dir = proposal_dir(cfg)?;
    let results = per_video(cfg, entries, |e| video_input(cfg, e, &dir))?;
    Ok(entries
        .iter()
        .zip(results)
        .filter_map(|(e, r)| record(failures, &e.video_id, r))
        .collect())
}

pub fn train_cmd(cfg: &RunConfig) -> Result<Failures> {
    let manifest = load(cfg)?;
    let split = cfg.inputs.split.unwrap_or(SplitChoice::Train);
    let entries: Vec<&ManifestEntry> = manifest.entries.iter().filter(|e| in_split(e, split)).collect();
    let mut failures = Failures::default();
    let videos: Vec<VideoInput> = inputs_for(cfg, &entries, &mut failures)?
        .into_iter()
        .filter(|v| {
            let usable = !v.proposals.is_empty() && v.label.is_some();
            if !usable {
                log::warn!("{}: skipped for training (no proposals or no label)", v.video_id);
            }
            usable
        })
        .collect();
    if videos.is_empty() {
        return Err(Invalid("no usable training videos".into()).into());
    }
    let mut attention = cfg.attention.clone();
    if attention.num_classes == 0 {
        attention.num_classes = manifest.classes.len();
    }
    let pool = pool(cfg.jobs)?;
    let outcome = pool.install(|| train(&videos, &attention, &cfg.train, cfg.seed))?;
    let out = cfg.output_dir()?;
    save_checkpoint(
        out.join("checkpoint"),
        &Checkpoint {
            attention,
            classes: manifest.classes.clone(),
            params: outcome.params,
        },
    )?;
    let mut table = String::from("epoch\tmean_loss\n");
    for (i, l) in outcome.loss_history.iter().enumerate() {
        table.push_str(&format!("{i}\t{l}\n"));
    }
    std::fs::write(out.join("loss.tsv"), table).context("writing loss.tsv")?;
    println!(
        "train: {} videos, {} epochs, final loss {}",
        videos.len(),
        outcome.loss_history.len(),
        outcome
            .loss_history
            .last()
            .map_or("n/a".to_string(), |l| format!("{l:.6}"))
    );
    Ok(failures)
}

fn checkpoint(cfg: &RunConfig, manifest: &Manifest) -> Result<Checkpoint> {
    let path = cfg
        .inputs
        .checkpoint
        .as_deref()
        .ok_or_else(|| Invalid("a checkpoint is required (--checkpoint)".into()))?;
    let nested = path.join("checkpoint");
    let ckpt = load_checkpoint(if nested.is_dir() { nested } else { path.to_path_buf() })?;
    if ckpt.classes != manifest.classes {
        return Err(Invalid(format!(
            "checkpoint classes {:?} differ from manifest classes {:?}",
            ckpt.classes, manifest.classes
        ))
        .into());
    }
    Ok(ckpt)
}

fn ranking_doc(video: &VideoInput, ckpt: &Checkpoint) -> Result<RankingDoc> {
    if video.proposals.is_empty() {
        return Ok(RankingDoc {
            format_version: 1,
            video_id: video.video_id.clone(),
            classes: ckpt.classes.clone(),
            logits: Vec::new(),
            video_logits: vec![0.0; ckpt.classes.len()],
            rankings: ckpt
                .classes
                .iter()
                .map(|c| ClassRanking {
                    class: c.clone(),
                    order: Vec::new(),
                })
                .collect(),
        });
    }
    let pred = predict(video, &ckpt.params, &ckpt.attention)?;
    let k = ckpt.classes.len();
    let rankings = (0..k)
        .map(|c| {
            Ok(ClassRanking {
                class: ckpt.classes[c].clone(),
                order: rank_proposals(&pred.logits, c)?
                    .into_iter()
                    .map(|(proposal, score)| RankedProposal { proposal, score })
                    .collect(),
            })
        })
        .collect::<actorloc::Result<Vec<_>>>()?;
    Ok(RankingDoc {
        format_version: 1,
        video_id: video.video_id.clone(),
        classes: ckpt.classes.clone(),
        logits: pred.logits.data().chunks(k).map(<[f64]>::to_vec).collect(),
        video_logits: pred.video_logits,
        rankings,
    })
}

fn compute_rankings(
    cfg: &RunConfig,
    manifest: &Manifest,
    entries: &[&ManifestEntry],
    failures: &mut Failures,
) -> Result<Vec<RankingDoc>> {
    let ckpt = checkpoint(cfg, manifest)?;
    let videos = inputs_for(cfg, entries, failures)?;
    let pool = pool(cfg.jobs)?;
    let results: Vec<Result<RankingDoc>> = pool.install(|| videos.par_iter().map(|v| ranking_doc(v, &ckpt)).collect());
    Ok(videos
        .iter()
        .zip(results)
        .filter_map(|(v, r)| record(failures, &v.video_id, r))
        .collect())
}

pub fn rank(cfg: &RunConfig) -> Result<Failures> {
    let manifest = load(cfg)?;
    let split = cfg.inputs.split.unwrap_or(SplitChoice::Test);
    let entries: Vec<&ManifestEntry> = manifest.entries.iter().filter(|e| in_split(e, split)).collect();
    let mut failures = Failures::default();
    let docs = compute_rankings(cfg, &manifest, &entries, &mut failures)?;
    let out = cfg.output_dir()?.join("rankings");
    for d in &docs {
        let r = save_rankings(video_file(&out, &d.video_id), d).map_err(Into::into);
        record(&mut failures, &d.video_id, r);
    }
    println!("rank: {} videos ranked", docs.len());
    Ok(failures)
}

fn ground_truth(manifest: &Manifest, entries: &[&ManifestEntry]) -> Result<GroundTruth> {
    let gt = manifest.load_ground_truth()?;
    Ok(gt.restrict_to(entries.iter().map(|e| e.video_id.as_str())))
}

fn load_proposal_map(dir: &Path, entries: &[&ManifestEntry], failures: &mut Failures) -> ProposalMap {
    let mut map = ProposalMap::new();
    for e in entries {
        let path = video_file(dir, &e.video_id);
        if !path.exists() {
            log::warn!("{}: no proposal file, counted as empty", e.video_id);
            continue;
        }
        if let Some(doc) = record(failures, &e.video_id, load_proposals(&path).map_err(Into::into)) {
            map.insert(e.video_id.clone(), doc.tubes());
        }
    }
    map
}

pub fn eval_recall(cfg: &RunConfig) -> Result<Failures> {
    let manifest = load(cfg)?;
    let split = cfg.inputs.split.unwrap_or(SplitChoice::All);
    let entries: Vec<&ManifestEntry> = manifest.entries.iter().filter(|e| in_split(e, split)).collect();
    let gt = ground_truth(&manifest, &entries)?;
    let mut failures = Failures::default();
    let proposals = load_proposal_map(&proposal_dir(cfg)?, &entries, &mut failures);
    let report = recall_curve(&proposals, &gt, &cfg.eval.recall_iou, &cfg.eval.budgets)?;
    let out = cfg.output_dir()?;
    report.write_table(out.join("recall.tsv"))?;
    report.write_summary(out.join("recall.json"))?;
    for (t, row) in report.thresholds.iter().zip(&report.recall) {
        for (b, r) in report.budgets.iter().zip(row) {
            println!("recall@{t} (budget {b}): {r:.4}");
        }
    }
    Ok(failures)
}

#[derive(Serialize)]
struct MapSummary<'a> {
    format_version: u32,
    reports: &'a [ApReport],
}

pub fn eval_map(cfg: &RunConfig) -> Result<Failures> {
    let manifest = load(cfg)?;
    let split = cfg.inputs.split.unwrap_or(SplitChoice::Test);
    let entries: Vec<&ManifestEntry> = manifest.entries.iter().filter(|e| in_split(e, split)).collect();
    let gt = ground_truth(&manifest, &entries)?;
    let mut failures = Failures::default();
    let proposals = load_proposal_map(&proposal_dir(cfg)?, &entries, &mut failures);
    let docs = match &cfg.inputs.rankings {
        Some(dir) => {
            let dir = rankings_dir(dir);
            entries
                .iter()
                .filter_map(|e| {
                    let r = load_rankings(video_file(&dir, &e.video_id)).map_err(Into::into);
                    record(&mut failures, &e.video_id, r)
                })
                .collect()
        }
        None => compute_rankings(cfg, &manifest, &entries, &mut failures)?,
    };
    let classes = &manifest.classes;
    let mut detections: Vec<Vec<Detection>> = vec![Vec::new(); classes.len()];
    let none: Vec<Tube> = Vec::new();
    for doc in &docs {
        if doc.classes != *classes {
            failures.add(&Invalid(format!("{}: ranking classes differ from the manifest", doc.video_id)).into());
            continue;
        }
        let tubes = proposals.get(&doc.video_id).unwrap_or(&none);
        if doc.logits.len() != tubes.len() {
            log::error!(
                "{}: {} ranked proposals but {} proposal tubes",
                doc.video_id,
                doc.logits.len(),
                tubes.len()
            );
            failures.add(&Invalid("ranking/proposal mismatch".into()).into());
            continue;
        }
        for (row, tube) in doc.logits.iter().zip(tubes) {
            for (c, &score) in row.iter().enumerate() {
                detections[c].push(Detection {
                    video_id: doc.video_id.clone(),
                    tube: tube.clone(),
                    score,
                });
            }
        }
    }
    let reports = cfg
        .eval
        .map_iou
        .iter()
        .map(|&t| mean_average_precision(&detections, &gt, t))
        .collect::<actorloc::Result<Vec<_>>>()?;
    let out = cfg.output_dir()?;
    let mut table = String::from("iou\tclass\tap\n");
    for r in &reports {
        for c in &r.classes {
            let ap = c.ap.map_or_else(|| "nan".into(), |v| v.to_string());
            table.push_str(&format!("{}\t{}\t{ap}\n", r.iou_threshold, c.class));
        }
        println!("mAP@{}: {:.4}", r.iou_threshold, r.mean_ap);
    }
    std::fs::write(out.join("map.tsv"), table).context("writing map.tsv")?;
    let summary = actorloc::ingest::to_canonical_json(&MapSummary {
        format_version: 1,
        reports: &reports,
    });
    std::fs::write(out.join("map.json"), summary).context("writing map.json")?;
    Ok(failures)
}

pub fn synth(cfg: &RunConfig) -> Result<Failures> {
    let out = cfg.output_dir()?;
    let manifest = match cfg.synth.kind {
        SuiteKind::Deformation => {
            let suite = deformation_benchmark(cfg.synth.videos, cfg.seed)?;
            write_deformation_suite(out, &suite)?
        }
        SuiteKind::Classification => {
            let suite = classification_suite(&cfg.synth.classification)?;
            write_classification_suite(out, &suite, cfg.synth.classification.num_classes)?
        }
    };
    let m = load_manifest(&manifest)?;
    let train = m.entries.iter().filter(|e| e.split == Split::Train).count();
    println!(
        "synth: wrote {} ({train} train, {} test videos)",
        manifest.display(),
        m.entries.len() - train
    );
    Ok(Failures::default())
}
