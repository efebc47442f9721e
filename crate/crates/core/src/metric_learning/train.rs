use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{adam_step, mine_multisimilarity, triplet_loss, AdamConfig, AdamState};
use crate::ad::{Tape, Tensor};
use crate::encoder::{encode_indices, forward, init_params, segment_vars, EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::evaluation::{cluster_accuracy, kmeans, KMeansConfig};
use crate::montage::{select_region, Montage};
use crate::signal_io::{LabelKind, SegmentSet, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LabelMode {
    #[default]
    Video,
    Emotion,
}

impl LabelMode {
    pub fn kind(self) -> LabelKind {
        match self {
            LabelMode::Video => LabelKind::Video,
            LabelMode::Emotion => LabelKind::Emotion,
        }
    }
}

fn d_margin() -> f64 {
    0.2
}
fn d_eps() -> f64 {
    0.1
}
fn d_cap() -> usize {
    20
}
fn d_lr() -> f64 {
    3e-4
}
fn d_wd() -> f64 {
    1e-4
}
fn d_epochs() -> usize {
    100
}
fn d_batch() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "d_margin")]
    pub margin: f64,
    #[serde(default = "d_eps")]
    pub ms_epsilon: f64,
    #[serde(default = "d_cap")]
    pub max_triples_per_anchor: usize,
    #[serde(default = "d_lr")]
    pub lr: f64,
    #[serde(default = "d_wd")]
    pub weight_decay: f64,
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub label_mode: LabelMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(Error::Config(format!("margin must be ≥ 0, got {}", self.margin)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be > 0, got {}", self.lr)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("weight_decay must be ≥ 0".into()));
        }
        if self.batch_size < 2 || self.max_triples_per_anchor == 0 {
            return Err(Error::Config("batch_size ≥ 2 and max_triples_per_anchor ≥ 1 required".into()));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean loss over the steps that mined at least one triple.
    pub mean_loss: f64,
    /// k-means accuracy on the validation split; `None` when it is empty.
    pub val_kmeans_acc: Option<f64>,
    pub triples: usize,
    pub skipped_steps: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned.
    pub selected_epoch: usize,
}

impl TrainHistory {
    /// `epoch,mean_loss,val_kmeans_acc`; an empty validation split leaves the
    /// last column blank.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        w.write_record(["epoch", "mean_loss", "val_kmeans_acc"])
            .map_err(|e| csv_err(path, e))?;
        for r in &self.epochs {
            let acc = r.val_kmeans_acc.map(|a| a.to_string()).unwrap_or_default();
            w.write_record([r.epoch.to_string(), r.mean_loss.to_string(), acc])
                .map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    }
}

/// Class-balanced batches: `⌈batch/K⌉` draws per class from per-class
/// shuffled queues that are refilled (reshuffled) when exhausted.
fn epoch_batches(
    by_class: &mut [Vec<usize>],
    cursors: &mut [usize],
    batch_size: usize,
    n_train: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<usize>> {
    let k = by_class.len();
    let per_class = batch_size.div_ceil(k);
    let n_batches = n_train.div_ceil(per_class * k).max(1);
    let mut out = Vec::with_capacity(n_batches);
    for _ in 0..n_batches {
        let mut batch = Vec::with_capacity(per_class * k);
        for (members, cur) in by_class.iter_mut().zip(cursors.iter_mut()) {
            for _ in 0..per_class.min(members.len()) {
                if *cur == members.len() {
                    members.shuffle(rng);
                    *cur = 0;
                }
                batch.push(members[*cur]);
                *cur += 1;
            }
        }
        out.push(batch);
    }
    out
}

fn val_accuracy(params: &EncoderParams, set: &SegmentSet, val: &[usize], labels: &[usize], k: usize, seed: u64) -> Result<f64> {
    let emb = encode_indices(params, set, val)?;
    let truth: Vec<usize> = val.iter().map(|&i| labels[i]).collect();
    let km = kmeans(&emb, k.min(val.len()), &KMeansConfig { seed, ..KMeansConfig::default() })?;
    Ok(cluster_accuracy(&km.assignments, &truth))
}

/// Trains an encoder on the train split of `segments` with triplet loss.
///
/// Each epoch shuffles the class queues, runs class-balanced batches through
/// encode → mine → loss → backward → Adam, then scores the validation split
/// by k-means accuracy. The parameters of the best validation epoch (the
/// first on ties) are returned, or the final ones if validation is empty.
pub fn train(
    segments: &SegmentSet,
    encoder: &EncoderConfig,
    config: &TrainConfig,
) -> Result<(EncoderParams, TrainHistory)> {
    config.validate()?;
    let mut enc_cfg = encoder.clone();
    if enc_cfg.in_channels == 0 {
        enc_cfg.in_channels = segments.channels();
    }
    let labels = segments.labels(config.label_mode.kind())?;
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let train_idx = segments.indices_in(Split::Train);
    if train_idx.is_empty() {
        return Err(Error::Training("train split is empty".into()));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for &i in &train_idx {
        by_class[labels[i]].push(i);
    }
    by_class.retain(|v| !v.is_empty());
    if by_class.len() < 2 {
        return Err(Error::Training(format!(
            "train split has {} class(es); triplet training needs at least 2",
            by_class.len()
        )));
    }
    let val_idx = segments.indices_in(Split::Val);

    let mut params = init_params(&enc_cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut cursors: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let mut state = AdamState::default();
    let adam = config.adam();
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, EncoderParams)> = None;

    for epoch in 1..=config.epochs {
        let batches = epoch_batches(&mut by_class, &mut cursors, config.batch_size, train_idx.len(), &mut rng);
        let (mut loss_sum, mut steps, mut skipped, mut triples) = (0.0, 0usize, 0usize, 0usize);
        for batch in &batches {
            let mut tape = Tape::new();
            let p = params.attach(&mut tape, true)?;
            let xs = segment_vars(&mut tape, segments, batch)?;
            let emb = forward(&mut tape, &p, &enc_cfg, &xs)?;
            let batch_labels: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let mined = mine_multisimilarity(
                tape.value(emb),
                &batch_labels,
                config.ms_epsilon,
                config.max_triples_per_anchor,
            )?;
            if mined.is_empty() {
                skipped += 1;
                continue;
            }
            triples += mined.len();
            let loss = triplet_loss(&mut tape, emb, &mined, config.margin)?;
            loss_sum += tape.value(loss).data()[0];
            steps += 1;
            tape.backward(loss)?;
            let grads: Vec<Tensor> = p
                .0
                .iter()
                .zip(params.tensors())
                .map(|(&v, t)| tape.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
                .collect();
            adam_step(params.tensors_mut(), &grads, &mut state, &adam)?;
        }
        let mean_loss = if steps > 0 { loss_sum / steps as f64 } else { 0.0 };
        let val_acc = if val_idx.is_empty() {
            None
        } else {
            Some(val_accuracy(&params, segments, &val_idx, &labels, n_classes, config.seed)?)
        };
        log::info!(
            "epoch {epoch}: loss {mean_loss:.5}, val acc {}, {triples} triples, {skipped} skipped",
            val_acc.map_or("-".to_string(), |a| format!("{a:.4}"))
        );
        if let Some(acc) = val_acc {
            if best.as_ref().is_none_or(|(b, _)| acc > *b) {
                best = Some((acc, params.clone()));
                history.selected_epoch = epoch;
            }
        }
        history.epochs.push(EpochRecord {
            epoch,
            mean_loss,
            val_kmeans_acc: val_acc,
            triples,
            skipped_steps: skipped,
        });
    }
    let out = match best {
        Some((_, p)) => p,
        None => {
            history.selected_epoch = config.epochs;
            params
        }
    };
    Ok((out, history))
}

/// [`train`] on the channels of one montage region.
pub fn train_region(
    segments: &SegmentSet,
    montage: &Montage,
    region: &str,
    encoder: &EncoderConfig,
    config: &TrainConfig,
) -> Result<(EncoderParams, TrainHistory)> {
    let selected = select_region(segments, montage, region)?;
    let enc = EncoderConfig {
        in_channels: selected.channels(),
        ..encoder.clone()
    };
    train(&selected, &enc, config)
}
