//! Clustering accuracy, linear probing and the region / time-window
//! ablation harnesses.

mod ablation;
mod export;
mod kmeans;
mod matching;
mod probe;

use serde::{Deserialize, Serialize};

pub use ablation::{
    parse_window, region_ablation, timestep_ablation, window_label, AblationReport, AblationRow,
    AblationSetup, Regime,
};
pub use export::{export_embeddings, fmt_f64, read_embeddings, LabeledEmbeddings};
pub use kmeans::{kmeans, kmeans_pp_init, lloyd, KMeansConfig, KMeansResult};
pub use matching::{cluster_accuracy, max_weight_matching};
pub use probe::{linear_probe, LinearProbe, ProbeConfig};

use crate::encoder::{encode_indices, EncoderParams};
use crate::error::{Error, Result};
use crate::signal_io::{LabelKind, SegmentSet, Split};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansEval {
    pub accuracy: f64,
    pub n: usize,
    pub k: usize,
    pub chance: f64,
}

/// Encodes one split, clusters it with k = number of classes of `label`
/// over the whole set, and scores the clustering.
pub fn evaluate_kmeans(
    params: &EncoderParams,
    set: &SegmentSet,
    split: Split,
    label: LabelKind,
    seed: u64,
) -> Result<KMeansEval> {
    let idx = set.indices_in(split);
    if idx.is_empty() {
        return Err(Error::Split(format!("{} split is empty", split.as_str())));
    }
    let labels = set.labels(label)?;
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let emb = encode_indices(params, set, &idx)?;
    let truth: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
    let km = kmeans(&emb, k.min(idx.len()), &KMeansConfig { seed, ..KMeansConfig::default() })?;
    Ok(KMeansEval {
        accuracy: cluster_accuracy(&km.assignments, &truth),
        n: idx.len(),
        k,
        chance: 1.0 / k as f64,
    })
}
