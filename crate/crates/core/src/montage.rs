//! Electrode-cap region dictionaries and channel-subset projection.
//!
//! Region sets are kept exactly as published for each cap, including
//! duplicated or unsorted entries; [`Montage::region`] exposes the sorted,
//! de-duplicated set used for projection and [`Montage::listing`] the
//! as-published sequence.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal_io::SegmentSet;

pub const BUILTIN_NAMES: [&str; 3] = ["seed_v1", "shot_v1", "seeddv"];

/// A machine-readable remark about a published region table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListingNote {
    pub region: String,
    pub kind: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Montage {
    name: String,
    cap_channels: usize,
    /// (key, indices as published), in published order.
    listing: Vec<(String, Vec<u32>)>,
    /// Sorted, de-duplicated sets parallel to `listing`.
    sets: Vec<Vec<u32>>,
    notes: Vec<ListingNote>,
}

#[derive(Debug, Deserialize)]
struct MontageFile {
    name: String,
    #[serde(default)]
    channels: Option<usize>,
    regions: serde_json::Map<String, serde_json::Value>,
}

impl Montage {
    pub fn new(
        name: impl Into<String>,
        cap_channels: usize,
        listing: Vec<(String, Vec<u32>)>,
    ) -> Result<Self> {
        let name = name.into();
        if !listing.iter().any(|(k, _)| k == "all") {
            return Err(Error::Montage(format!("montage `{name}` has no `all` region")));
        }
        let mut seen = BTreeSet::new();
        for (key, idx) in &listing {
            if !seen.insert(key.as_str()) {
                return Err(Error::Montage(format!("montage `{name}` repeats region `{key}`")));
            }
            if idx.is_empty() {
                return Err(Error::Montage(format!("region `{key}` of `{name}` is empty")));
            }
            if let Some(bad) = idx.iter().find(|&&i| i == 0 || i as usize > cap_channels) {
                return Err(Error::Montage(format!(
                    "region `{key}` of `{name}` has index {bad} outside 1..={cap_channels}"
                )));
            }
        }
        let sets = listing
            .iter()
            .map(|(_, idx)| idx.iter().copied().collect::<BTreeSet<_>>().into_iter().collect())
            .collect();
        let mut m = Self {
            name,
            cap_channels,
            listing,
            sets,
            notes: Vec::new(),
        };
        m.notes = m.detect_notes();
        Ok(m)
    }

    pub fn builtin(name: &str) -> Result<Self> {
        let (table, cap): (&[(&str, &[u32])], usize) = match name {
            "seed_v1" => (SEED_V1, 62),
            "shot_v1" => (SHOT_V1, 64),
            "seeddv" => (SEEDDV, 62),
            other => {
                return Err(Error::Montage(format!(
                    "unknown montage `{other}` (known: {})",
                    BUILTIN_NAMES.join(", ")
                )))
            }
        };
        let listing = table
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_vec()))
            .collect();
        let mut m = Self::new(name, cap, listing)?;
        if name == "seeddv" {
            m.notes.push(ListingNote {
                region: "all".into(),
                kind: "all_omits_index".into(),
                detail: "`all` stops at 61 while several regions include 62".into(),
            });
        }
        Ok(m)
    }

    /// Loads a user cap: `{"name": .., "channels": n?, "regions": {key: [..]}}`.
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::Montage(msg) => Error::format(path, msg),
            other => other,
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: MontageFile =
            serde_json::from_str(text).map_err(|e| Error::Montage(format!("bad montage JSON: {e}")))?;
        let mut listing = Vec::with_capacity(file.regions.len());
        for (key, value) in file.regions {
            let idx: Vec<u32> = serde_json::from_value(value)
                .map_err(|e| Error::Montage(format!("region `{key}`: {e}")))?;
            listing.push((key, idx));
        }
        let max = listing
            .iter()
            .flat_map(|(_, v)| v.iter().copied())
            .max()
            .unwrap_or(0) as usize;
        Self::new(file.name, file.channels.unwrap_or(max), listing)
    }

    /// Resolves a built-in name, falling back to a JSON file path.
    pub fn load(name_or_path: &str) -> Result<Self> {
        if BUILTIN_NAMES.contains(&name_or_path) {
            Self::builtin(name_or_path)
        } else if Path::new(name_or_path).is_file() {
            Self::from_json_file(Path::new(name_or_path))
        } else {
            Self::builtin(name_or_path)
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn cap_channels(&self) -> usize {
        self.cap_channels
    }

    pub fn notes(&self) -> &[ListingNote] {
        &self.notes
    }

    fn position(&self, key: &str) -> Result<usize> {
        self.listing.iter().position(|(k, _)| k == key).ok_or_else(|| {
            Error::Montage(format!("montage `{}` has no region `{key}`", self.name))
        })
    }

    /// Sorted, distinct 1-based channel indices of a region.
    pub fn region(&self, key: &str) -> Result<&[u32]> {
        Ok(&self.sets[self.position(key)?])
    }

    /// Indices exactly as published, in published order.
    pub fn listing(&self, key: &str) -> Result<&[u32]> {
        Ok(&self.listing[self.position(key)?].1)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.listing.iter().map(|(k, _)| k.as_str())
    }

    /// Region keys in published order with their distinct channel counts.
    pub fn region_catalog(&self) -> Vec<(String, usize)> {
        self.listing
            .iter()
            .zip(&self.sets)
            .map(|((k, _), s)| (k.clone(), s.len()))
            .collect()
    }

    /// First `lobes_*` region (published order) containing a 1-based channel.
    pub fn lobe_of(&self, channel: u32) -> Option<&str> {
        self.listing
            .iter()
            .zip(&self.sets)
            .find(|((k, _), s)| k.starts_with("lobes_") && s.binary_search(&channel).is_ok())
            .map(|((k, _), _)| k.as_str())
    }

    fn detect_notes(&self) -> Vec<ListingNote> {
        let mut notes = Vec::new();
        let all: BTreeSet<u32> = self
            .region("all")
            .map(|s| s.iter().copied().collect())
            .unwrap_or_default();
        for ((key, idx), set) in self.listing.iter().zip(&self.sets) {
            if set.len() != idx.len() {
                let mut seen = BTreeSet::new();
                let dups: Vec<u32> = idx.iter().filter(|&&i| !seen.insert(i)).copied().collect();
                notes.push(ListingNote {
                    region: key.clone(),
                    kind: "duplicate_index".into(),
                    detail: format!("{dups:?} listed more than once"),
                });
            }
            if idx.windows(2).any(|w| w[0] > w[1]) {
                notes.push(ListingNote {
                    region: key.clone(),
                    kind: "unsorted".into(),
                    detail: "published order is not ascending".into(),
                });
            }
            let outside: Vec<u32> = set.iter().filter(|i| !all.contains(i)).copied().collect();
            if !outside.is_empty() {
                notes.push(ListingNote {
                    region: key.clone(),
                    kind: "outside_all".into(),
                    detail: format!("{outside:?} not in `all`"),
                });
            }
            if let Some(stem) = key.strip_suffix("_left") {
                if let Ok(right) = self.region(&format!("{stem}_right")) {
                    let both: Vec<u32> =
                        set.iter().filter(|i| right.binary_search(i).is_ok()).copied().collect();
                    if !both.is_empty() {
                        notes.push(ListingNote {
                            region: key.clone(),
                            kind: "left_right_overlap".into(),
                            detail: format!("{both:?} also in `{stem}_right`"),
                        });
                    }
                }
            }
        }
        notes
    }
}

/// Keeps only the channels of a region, in ascending index order.
pub fn select_region(segments: &SegmentSet, montage: &Montage, key: &str) -> Result<SegmentSet> {
    let idx = montage.region(key)?;
    let c = segments.channels();
    if let Some(&max) = idx.last() {
        if max as usize > c {
            return Err(Error::Montage(format!(
                "region `{key}` of montage `{}` needs channel {max}, data has {c} channels",
                montage.name()
            )));
        }
    }
    let rows: Vec<usize> = idx.iter().map(|&i| i as usize - 1).collect();
    segments.select_channels(&rows)
}

#[rustfmt::skip]
const SEED_V1: &[(&str, &[u32])] = &[
    ("all", &[1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22, 23, 24, 25, 26, 27, 28, 29, 30, 31, 32, 33, 34, 35, 36, 37, 38, 39, 40, 41, 42, 43, 44, 45, 46, 47, 48, 49, 50, 51, 52, 53, 54, 55, 56, 57, 58, 59, 60, 61, 62]),
    ("noseback_left", &[1, 4, 6, 7, 8, 9, 15, 16, 17, 18, 24, 25, 26, 27, 33, 34, 35, 36, 42, 43, 44, 45, 51, 52, 53, 58, 59]),
    ("noseback_center", &[2, 10, 19, 28, 37, 46, 54, 60]),
    ("noseback_right", &[3, 5, 11, 12, 13, 14, 20, 21, 22, 23, 29, 30, 31, 32, 38, 39, 40, 41, 47, 48, 49, 50, 55, 56, 57, 61, 62]),
    ("noseback_Q1_right", &[3, 5, 11, 12, 13, 14, 20, 21, 22, 23]),
    ("noseback_Q2_left", &[1, 4, 6, 7, 8, 9, 15, 16, 17, 18]),
    ("noseback_Q3_left", &[33, 34, 35, 36, 42, 43, 44, 45, 51, 52, 53, 58, 59]),
    ("noseback_Q4_right", &[38, 39, 40, 41, 47, 48, 49, 50, 55, 56, 57, 61, 62]),
    ("leftrightear_center", &[24, 25, 26, 27, 28, 29, 30, 31, 32]),
    ("noseback_front", &[1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22, 23]),
    ("noseback_back", &[33, 34, 35, 36, 37, 38, 39, 40, 41, 42, 43, 44, 45, 46, 47, 48, 49, 50, 51, 52, 53, 54, 55, 56, 57, 58, 59, 60, 61, 62]),
    ("lobes_frontal_left", &[1, 4, 6, 7, 8, 9, 16, 17, 18]),
    ("lobes_frontal_right", &[3, 5, 11, 12, 13, 14, 20, 21, 22]),
    ("lobes_parietal_left", &[34, 35, 36, 42, 43, 44, 45]),
    ("lobes_parietal_right", &[36, 39, 40, 47, 48, 49, 50]),
    ("lobes_occipital_left", &[51, 52, 53, 59]),
    ("lobes_occipital_right", &[55, 56, 57, 61]),
    ("lobes_temporal_left", &[15, 24, 33]),
    ("lobes_temporal_right", &[23, 32, 41]),
    ("lobes_frontal", &[1, 4, 6, 7, 8, 9, 16, 17, 18, 3, 5, 11, 12, 13, 14, 20, 21, 22, 2, 10, 19]),
    ("lobes_parietal", &[34, 35, 36, 42, 43, 44, 45, 36, 39, 40, 47, 48, 49, 50, 37, 46]),
    ("lobes_occipital", &[51, 52, 53, 59, 55, 56, 57, 61, 54, 60]),
    ("lobes_temporal", &[15, 23, 24, 32, 33, 41]),
];

#[rustfmt::skip]
const SHOT_V1: &[(&str, &[u32])] = &[
    ("all", &[1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22, 23, 24, 25, 26, 27, 28, 29, 30, 31, 32, 33, 34, 35, 36, 37, 38, 39, 40, 41, 42, 43, 44, 45, 46, 47, 48, 49, 50, 51, 52, 53, 54, 55, 56, 57, 58, 59, 60, 61, 62, 63, 64]),
    ("noseback_left", &[1, 2, 3, 7, 6, 5, 4, 8, 9, 10, 11, 15, 14, 13, 12, 16, 17, 18, 19, 24, 23, 22, 21, 20, 25, 26, 27]),
    ("noseback_center", &[33, 37, 38, 47, 48, 32, 31, 30, 29, 28]),
    ("noseback_right", &[34, 36, 35, 39, 40, 41, 42, 46, 45, 44, 43, 49, 50, 51, 52, 56, 55, 54, 53, 57, 58, 59, 60, 61, 63, 62, 64]),
    ("noseback_Q1_right", &[34, 36, 35, 39, 40, 41, 42, 46, 45, 44, 43]),
    ("noseback_Q2_left", &[1, 2, 3, 7, 6, 5, 4, 8, 9, 10, 11]),
    ("noseback_Q3_left", &[16, 17, 18, 19, 24, 23, 22, 21, 20, 25, 26, 27]),
    ("noseback_Q4_right", &[56, 55, 54, 53, 57, 58, 59, 60, 61, 63, 62, 64]),
    ("leftrightear_center", &[15, 14, 13, 12, 48, 49, 50, 51, 52]),
    ("noseback_front", &[1, 33, 34, 2, 3, 37, 36, 35, 7, 6, 5, 4, 38, 39, 40, 41, 42, 8, 9, 10, 11, 47, 46, 45, 44, 43]),
    ("noseback_back", &[16, 17, 18, 19, 32, 56, 55, 54, 53, 24, 23, 22, 21, 20, 31, 57, 58, 59, 60, 61, 25, 26, 30, 63, 62, 27, 29, 64, 28]),
    ("lobes_frontal_left", &[1, 2, 3, 4, 5, 6, 7, 9, 10, 11]),
    ("lobes_frontal_right", &[34, 35, 36, 39, 40, 41, 42, 46, 45, 44]),
    ("lobes_parietal_left", &[17, 18, 19, 24, 23, 22, 21, 20]),
    ("lobes_parietal_right", &[56, 55, 54, 57, 58, 59, 60, 61]),
    ("lobes_occipital_left", &[25, 26, 27]),
    ("lobes_occipital_right", &[63, 62, 64]),
    ("lobes_temporal_left", &[8, 15, 16]),
    ("lobes_temporal_right", &[43, 52, 53]),
    ("lobes_frontal", &[1, 2, 3, 4, 5, 6, 7, 9, 10, 11, 34, 35, 36, 39, 40, 41, 42, 46, 45, 44, 33, 37, 38, 47]),
    ("lobes_parietal", &[17, 18, 19, 24, 23, 22, 21, 20, 56, 55, 54, 57, 58, 59, 60, 61, 32, 31]),
    ("lobes_occipital", &[25, 26, 27, 63, 62, 64, 30, 29]),
    ("lobes_temporal", &[8, 15, 16, 43, 52, 53]),
];

#[rustfmt::skip]
const SEEDDV: &[(&str, &[u32])] = &[
    ("all", &[1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22, 23, 24, 25, 26, 27, 28, 29, 30, 31, 32, 33, 34, 35, 36, 37, 38, 39, 40, 41, 42, 43, 44, 45, 46, 47, 48, 49, 50, 51, 52, 53, 54, 55, 56, 57, 58, 59, 60, 61]),
    ("noseback_left", &[1, 4, 6, 7, 8, 9, 15, 16, 17, 18, 24, 25, 26, 27, 33, 34, 35, 36, 42, 43, 44, 45, 51, 52, 53, 58, 59]),
    ("noseback_center", &[2, 10, 19, 28, 37, 46, 54, 60]),
    ("noseback_right", &[3, 5, 11, 12, 13, 14, 20, 21, 22, 23, 29, 30, 31, 32, 38, 39, 40, 41, 47, 48, 49, 50, 55, 56, 57, 61, 62]),
    ("noseback_Q1_right", &[3, 5, 11, 12, 13, 14, 20, 21, 22, 23]),
    ("noseback_Q2_left", &[1, 3, 6, 7, 8, 9, 15, 16, 17, 18]),
    ("noseback_Q3_left", &[33, 34, 35, 36, 42, 43, 44, 45, 51, 52, 53, 56, 59]),
    ("noseback_Q4_right", &[38, 39, 40, 41, 47, 48, 49, 50, 55, 56, 57, 61, 62]),
    ("leftrightear_center", &[24, 25, 26, 27, 28, 29, 30, 31, 32]),
    ("noseback_front", &[1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22, 23]),
    ("noseback_back", &[33, 34, 35, 36, 37, 38, 39, 40, 41, 42, 43, 44, 45, 46, 47, 48, 49, 50, 51, 52, 53, 54, 55, 56, 57, 58, 59, 60, 61, 62]),
    ("lobes_frontal_left", &[1, 4, 6, 7, 8, 9, 16, 17, 18]),
    ("lobes_frontal_right", &[3, 5, 11, 12, 13, 14, 20, 21, 22]),
    ("lobes_parietal_left", &[34, 35, 36, 42, 43, 44, 45]),
    ("lobes_parietal_right", &[38, 39, 40, 47, 48, 49, 50]),
    ("lobes_occipital_left", &[51, 52, 53, 54]),
    ("lobes_occipital_right", &[55, 56, 57, 61]),
    ("lobes_temporal_left", &[15, 29, 33]),
    ("lobes_temporal_right", &[23, 32, 41]),
    ("lobes_frontal", &[1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 16, 17, 18, 19, 20, 21, 22]),
    ("lobes_parietal", &[34, 35, 36, 37, 38, 39, 40, 42, 43, 44, 45, 46, 47, 48, 49, 50]),
    ("lobes_occipital", &[51, 52, 53, 54, 55, 56, 57, 59, 60, 61]),
    ("lobes_temporal", &[15, 29, 33, 23, 32, 41]),
];
