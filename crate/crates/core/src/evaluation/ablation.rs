use std::path::Path;

use serde::{Deserialize, Serialize};

use super::export::{csv_error, fmt_f64};
use super::{evaluate_kmeans, KMeansEval};
use crate::encoder::{mask_timesteps, EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::metric_learning::{train_region, TrainConfig};
use crate::montage::{select_region, Montage};
use crate::signal_io::{SegmentSet, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    AllSubject,
    LeaveTwo,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::AllSubject => "all_subject",
            Regime::LeaveTwo => "leave_two",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "all_subject" => Some(Regime::AllSubject),
            "leave_two" => Some(Regime::LeaveTwo),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    /// Region key, or `t1:t2` for a time window (`0:0` is the unmasked baseline).
    pub region: String,
    pub regime: Regime,
    pub accuracy: f64,
    pub n_test: usize,
    pub chance: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn get(&self, region: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.region == region)
    }

    /// CSV with columns `region,regime,accuracy,n_test,chance`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        w.write_record(["region", "regime", "accuracy", "n_test", "chance"])
            .map_err(|e| csv_error(path, e))?;
        for r in &self.rows {
            w.write_record([
                r.region.clone(),
                r.regime.as_str().to_string(),
                fmt_f64(r.accuracy),
                r.n_test.to_string(),
                fmt_f64(r.chance),
            ])
            .map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.rows).expect("report serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Everything one region/time-window evaluation needs besides the data.
#[derive(Debug, Clone)]
pub struct AblationSetup<'a> {
    pub encoder: &'a EncoderConfig,
    pub train: &'a TrainConfig,
    pub regime: Regime,
    pub kmeans_seed: u64,
    /// Worker threads for independent configurations (1 = sequential).
    pub jobs: usize,
}

fn check_regime(set: &SegmentSet, regime: Regime) -> Result<()> {
    let [train, val, test] = set.split_counts();
    if train == 0 || test == 0 {
        return Err(Error::Split("ablation needs non-empty train and test splits".into()));
    }
    if regime == Regime::LeaveTwo {
        let test_subjects: std::collections::BTreeSet<u32> =
            set.indices_in(Split::Test).iter().map(|&i| set.subject_id[i]).collect();
        let leak = set
            .indices_in(Split::Train)
            .iter()
            .any(|&i| test_subjects.contains(&set.subject_id[i]));
        if val != 0 || test_subjects.len() != 2 || leak {
            return Err(Error::Split(
                "leave_two regime needs two held-out test subjects and an empty validation split".into(),
            ));
        }
    }
    Ok(())
}

/// Runs `f` over `items` on up to `jobs` threads, keeping input order.
fn run_parallel<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> Result<R> + Sync) -> Result<Vec<R>> {
    let jobs = jobs.clamp(1, items.len().max(1));
    if jobs == 1 {
        return items.iter().map(&f).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<R>>> = (0..items.len()).map(|_| None).collect();
    let done = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                done.lock().expect("no poisoned workers")[i] = Some(r);
            });
        }
    });
    slots.into_iter().map(|r| r.expect("every item ran")).collect()
}

/// Trains one encoder per region and scores its test split by k-means
/// accuracy. `all` is evaluated first when not requested explicitly.
pub fn region_ablation(
    segments: &SegmentSet,
    montage: &Montage,
    regions: &[String],
    setup: &AblationSetup,
) -> Result<AblationReport> {
    check_regime(segments, setup.regime)?;
    let mut keys: Vec<String> = regions.to_vec();
    if !keys.iter().any(|k| k == "all") {
        keys.insert(0, "all".into());
    }
    for k in &keys {
        montage.region(k)?;
    }
    let label = setup.train.label_mode.kind();
    let rows = run_parallel(&keys, setup.jobs, |key| {
        let named = |e: Error| Error::Training(format!("region `{key}`: {e}"));
        let (params, _) = train_region(segments, montage, key, setup.encoder, setup.train).map_err(named)?;
        let selected = select_region(segments, montage, key)?;
        let eval = evaluate_kmeans(&params, &selected, Split::Test, label, setup.kmeans_seed).map_err(named)?;
        Ok(row(key.clone(), setup.regime, &eval))
    })?;
    Ok(AblationReport { rows })
}

fn row(region: String, regime: Regime, e: &KMeansEval) -> AblationRow {
    AblationRow {
        region,
        regime,
        accuracy: e.accuracy,
        n_test: e.n,
        chance: e.chance,
    }
}

pub fn window_label(t1: usize, t2: usize) -> String {
    format!("{t1}:{t2}")
}

/// Parses `t1:t2`.
pub fn parse_window(s: &str) -> Result<(usize, usize)> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("window `{s}` is not of the form t1:t2")))?;
    let p = |v: &str| {
        v.trim()
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("window `{s}` has a non-integer bound")))
    };
    Ok((p(a)?, p(b)?))
}

/// Masks each window on the test split of `segments` and scores k-means
/// accuracy with a fixed encoder. Row `0:0` is the unmasked baseline.
pub fn timestep_ablation(
    params: &EncoderParams,
    segments: &SegmentSet,
    windows: &[(usize, usize)],
    setup: &AblationSetup,
) -> Result<AblationReport> {
    let t = segments.samples();
    for &(a, b) in windows {
        if !(a < b && b <= t) {
            return Err(Error::Config(format!(
                "mask window [{a}, {b}) must satisfy 0 ≤ t1 < t2 ≤ {t}"
            )));
        }
    }
    let test = segments.split_subset(Split::Test);
    if test.is_empty() {
        return Err(Error::Split("timestep ablation needs a non-empty test split".into()));
    }
    let label = setup.train.label_mode.kind();
    let mut all: Vec<Option<(usize, usize)>> = vec![None];
    all.extend(windows.iter().copied().map(Some));
    let rows = run_parallel(&all, setup.jobs, |w| {
        let (masked, name) = match *w {
            None => (test.clone(), window_label(0, 0)),
            Some((a, b)) => (mask_timesteps(&test, a, b)?, window_label(a, b)),
        };
        let eval = evaluate_kmeans(params, &masked, Split::Test, label, setup.kmeans_seed)?;
        Ok(row(name, setup.regime, &eval))
    })?;
    Ok(AblationReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows_parse() {
        assert_eq!(parse_window("100:300").unwrap(), (100, 300));
        assert!(parse_window("100-300").is_err());
        assert!(parse_window("a:3").is_err());
    }

    #[test]
    fn parallel_keeps_order() {
        let items: Vec<usize> = (0..17).collect();
        let out = run_parallel(&items, 4, |&i| Ok(i * i)).unwrap();
        assert_eq!(out, items.iter().map(|i| i * i).collect::<Vec<_>>());
        let err = run_parallel(&items, 3, |&i| if i == 5 { Err(Error::Config("x".into())) } else { Ok(i) });
        assert!(err.is_err());
    }

    #[test]
    fn report_files() {
        let report = AblationReport {
            rows: vec![AblationRow {
                region: "all".into(),
                regime: Regime::LeaveTwo,
                accuracy: 0.5,
                n_test: 10,
                chance: 0.2,
            }],
        };
        let dir = tempfile::tempdir().unwrap();
        report.write_csv(&dir.path().join("r.csv")).unwrap();
        report.write_json(&dir.path().join("r.json")).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
        assert!(csv.starts_with("region,regime,accuracy,n_test,chance\nall,leave_two,"));
        let json: Vec<AblationRow> =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
        assert_eq!(json, report.rows);
    }
}
