//! Resolved commands: flags and config files merged into one serializable
//! value that the run manifest records and `rerun` replays.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use neurovid::conditioning::export_conditioning;
use neurovid::encoder::{encode_indices, load_params, save_params, EncoderConfig, EncoderParams};
use neurovid::evaluation::{
    evaluate_kmeans, export_embeddings, parse_window, read_embeddings, region_ablation, timestep_ablation,
    AblationReport, AblationSetup, KMeansEval, Regime,
};
use neurovid::metric_learning::{train_region, LabelMode, TrainConfig};
use neurovid::montage::{select_region, Montage};
use neurovid::preprocess::{preprocess_recording, segment_recordings, split_leave_two, split_within, PreprocessConfig};
use neurovid::signal_io::{
    read_pack, read_segments, synth_recordings, synth_segments, write_pack, write_segments, LabelKind, SegmentSet,
    Split, SynthSpec,
};
use neurovid::video_metrics::{compare_clips, read_clip};

use crate::args::*;
use crate::error::{CliError, CliResult};
use crate::manifest::{manifest_path, write_atomic, RunManifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    Within,
    LeaveTwo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "snake_case")]
pub enum Invocation {
    Synth {
        spec: SynthSpec,
        out: PathBuf,
        segments: bool,
    },
    Preprocess {
        input: PathBuf,
        config: PreprocessConfig,
        montage: String,
        out: PathBuf,
    },
    Split {
        segs: PathBuf,
        out: PathBuf,
        mode: SplitMode,
        test_subjects: Option<(u32, u32)>,
        ratios: [f64; 3],
        seed: u64,
    },
    Train {
        segs: PathBuf,
        region: String,
        montage: String,
        encoder: EncoderConfig,
        train: TrainConfig,
        out: PathBuf,
    },
    EvalKmeans {
        model: PathBuf,
        segs: PathBuf,
        region: String,
        montage: String,
        split: Split,
        labels: LabelKind,
        seed: u64,
        out: Option<PathBuf>,
    },
    AblateRegions {
        segs: PathBuf,
        regions: Vec<String>,
        regime: Regime,
        montage: String,
        encoder: EncoderConfig,
        train: TrainConfig,
        kmeans_seed: u64,
        jobs: usize,
        out: PathBuf,
    },
    AblateTimesteps {
        model: PathBuf,
        segs: PathBuf,
        region: String,
        montage: String,
        windows: Vec<(usize, usize)>,
        regime: Regime,
        labels: LabelMode,
        kmeans_seed: u64,
        jobs: usize,
        out: PathBuf,
    },
    Embed {
        model: PathBuf,
        segs: PathBuf,
        region: String,
        montage: String,
        split: Option<Split>,
        out: PathBuf,
    },
    Condition {
        emb: PathBuf,
        frames: usize,
        enc_dim: usize,
        out: PathBuf,
    },
    Metrics {
        gt: PathBuf,
        gen: PathBuf,
        out: Option<PathBuf>,
    },
}

/// Optional `encoder` and `train` sections of a training config file.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainFile {
    #[serde(default = "default_encoder")]
    encoder: EncoderConfig,
    #[serde(default)]
    train: TrainConfig,
}

fn default_encoder() -> EncoderConfig {
    EncoderConfig::new(0)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
}

fn parse_list(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty()).map(String::from).collect()
}

fn parse_split(s: &str) -> CliResult<Split> {
    Split::parse(s).ok_or_else(|| CliError::Usage(format!("unknown split `{s}` (train, val or test)")))
}

fn label_kind(l: LabelArg) -> LabelKind {
    match l {
        LabelArg::Video => LabelKind::Video,
        LabelArg::Emotion => LabelKind::Emotion,
        LabelArg::Subject => LabelKind::Subject,
    }
}

fn regime(r: RegimeArg) -> Regime {
    match r {
        RegimeArg::AllSubject => Regime::AllSubject,
        RegimeArg::LeaveTwo => Regime::LeaveTwo,
    }
}

fn training_config(flags: &TrainingFlags) -> CliResult<(EncoderConfig, TrainConfig)> {
    let file = match &flags.config {
        Some(p) => read_json::<TrainFile>(p)?,
        None => TrainFile {
            encoder: default_encoder(),
            train: TrainConfig::default(),
        },
    };
    let (mut enc, mut tc) = (file.encoder, file.train);
    match flags.labels {
        Some(LabelArg::Video) => tc.label_mode = LabelMode::Video,
        Some(LabelArg::Emotion) => tc.label_mode = LabelMode::Emotion,
        Some(LabelArg::Subject) => return Err(CliError::Usage("training labels are video or emotion".into())),
        None => {}
    }
    if let Some(v) = flags.epochs {
        tc.epochs = v;
    }
    if let Some(v) = flags.lr {
        tc.lr = v;
    }
    if let Some(v) = flags.batch_size {
        tc.batch_size = v;
    }
    if let Some(v) = flags.margin {
        tc.margin = v;
    }
    if let Some(v) = flags.seed {
        tc.seed = v;
    }
    if let Some(v) = flags.init_seed {
        enc.seed = v;
    }
    tc.validate()?;
    Ok((enc, tc))
}

impl Invocation {
    pub fn resolve(command: Command) -> CliResult<Self> {
        Ok(match command {
            Command::Synth(a) => {
                let mut spec: SynthSpec = read_json(&a.spec)?;
                if let Some(s) = a.seed {
                    spec.seed = s;
                }
                spec.validate()?;
                Invocation::Synth {
                    spec,
                    out: a.out,
                    segments: a.format == SynthFormat::Segments,
                }
            }
            Command::Preprocess(a) => {
                let mut config: PreprocessConfig = match &a.config {
                    Some(p) => read_json(p)?,
                    None => PreprocessConfig::default(),
                };
                if let Some(v) = a.notch_hz {
                    config.notch_hz = v;
                }
                if let Some(v) = a.highpass_hz {
                    config.highpass_hz = v;
                }
                config.validate()?;
                Invocation::Preprocess {
                    input: a.input,
                    config,
                    montage: a.montage,
                    out: a.out,
                }
            }
            Command::Split(a) => {
                let mode = match a.mode {
                    SplitModeArg::Within => SplitMode::Within,
                    SplitModeArg::LeaveTwo => SplitMode::LeaveTwo,
                };
                let test_subjects = match (&a.test_subjects, mode) {
                    (Some(s), _) => {
                        let ids: Vec<u32> = parse_list(s)
                            .iter()
                            .map(|v| v.parse())
                            .collect::<Result<_, _>>()
                            .map_err(|_| CliError::Usage(format!("--test-subjects `{s}` is not a list of ids")))?;
                        match ids[..] {
                            [x, y] => Some((x, y)),
                            _ => return Err(CliError::Usage("--test-subjects takes exactly two ids".into())),
                        }
                    }
                    (None, SplitMode::LeaveTwo) => {
                        return Err(CliError::Usage("leave-two mode needs --test-subjects a,b".into()))
                    }
                    (None, SplitMode::Within) => None,
                };
                let ratios = match &a.ratios {
                    None => neurovid::preprocess::DEFAULT_RATIOS,
                    Some(s) => {
                        let v: Vec<f64> = parse_list(s)
                            .iter()
                            .map(|x| x.parse())
                            .collect::<Result<_, _>>()
                            .map_err(|_| CliError::Usage(format!("--ratios `{s}` is not a list of numbers")))?;
                        v.try_into()
                            .map_err(|_| CliError::Usage("--ratios takes three values".into()))?
                    }
                };
                Invocation::Split {
                    segs: a.segs,
                    out: a.out,
                    mode,
                    test_subjects,
                    ratios,
                    seed: a.seed,
                }
            }
            Command::Train(a) => {
                let (encoder, train) = training_config(&a.training)?;
                Invocation::Train {
                    segs: a.segs,
                    region: a.region,
                    montage: a.training.montage,
                    encoder,
                    train,
                    out: a.out,
                }
            }
            Command::Eval(EvalCommand::Kmeans(a)) => Invocation::EvalKmeans {
                model: a.input.model,
                segs: a.input.segs,
                region: a.input.region,
                montage: a.input.montage,
                split: parse_split(&a.split)?,
                labels: label_kind(a.labels),
                seed: a.seed,
                out: a.out,
            },
            Command::Ablate(AblateCommand::Regions(a)) => {
                let (encoder, train) = training_config(&a.training)?;
                let regions = parse_list(&a.regions);
                if regions.is_empty() {
                    return Err(CliError::Usage("--regions is empty".into()));
                }
                Invocation::AblateRegions {
                    segs: a.segs,
                    regions,
                    regime: regime(a.regime),
                    montage: a.training.montage,
                    encoder,
                    train,
                    kmeans_seed: a.kmeans_seed,
                    jobs: a.jobs,
                    out: a.out,
                }
            }
            Command::Ablate(AblateCommand::Timesteps(a)) => {
                let windows = parse_list(&a.windows)
                    .iter()
                    .map(|w| parse_window(w))
                    .collect::<Result<Vec<_>, _>>()?;
                if windows.is_empty() {
                    return Err(CliError::Usage("--windows is empty".into()));
                }
                for &(t1, t2) in &windows {
                    if t1 >= t2 {
                        return Err(CliError::Usage(format!(
                            "window {t1}:{t2} is out of range: need t1 < t2"
                        )));
                    }
                }
                let labels = match a.labels {
                    LabelArg::Video => LabelMode::Video,
                    LabelArg::Emotion => LabelMode::Emotion,
                    LabelArg::Subject => {
                        return Err(CliError::Usage("timestep ablation labels are video or emotion".into()))
                    }
                };
                Invocation::AblateTimesteps {
                    model: a.input.model,
                    segs: a.input.segs,
                    region: a.input.region,
                    montage: a.input.montage,
                    windows,
                    regime: regime(a.regime),
                    labels,
                    kmeans_seed: a.kmeans_seed,
                    jobs: a.jobs,
                    out: a.out,
                }
            }
            Command::Embed(a) => Invocation::Embed {
                model: a.input.model,
                segs: a.input.segs,
                region: a.input.region,
                montage: a.input.montage,
                split: a.split.as_deref().map(parse_split).transpose()?,
                out: a.out,
            },
            Command::Condition(a) => Invocation::Condition {
                emb: a.emb,
                frames: a.frames,
                enc_dim: a.enc_dim,
                out: a.out,
            },
            Command::Metrics(a) => Invocation::Metrics {
                gt: a.gt,
                gen: a.gen,
                out: a.out,
            },
            Command::Rerun(a) => RunManifest::read(&a.manifest)?.invocation,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Invocation::Synth { .. } => "synth",
            Invocation::Preprocess { .. } => "preprocess",
            Invocation::Split { .. } => "split",
            Invocation::Train { .. } => "train",
            Invocation::EvalKmeans { .. } => "eval kmeans",
            Invocation::AblateRegions { .. } => "ablate regions",
            Invocation::AblateTimesteps { .. } => "ablate timesteps",
            Invocation::Embed { .. } => "embed",
            Invocation::Condition { .. } => "condition",
            Invocation::Metrics { .. } => "metrics",
        }
    }

    fn seeds(&self) -> serde_json::Map<String, serde_json::Value> {
        let pairs: Vec<(&str, u64)> = match self {
            Invocation::Synth { spec, .. } => vec![("synth", spec.seed)],
            Invocation::Split { seed, .. } => vec![("split", *seed)],
            Invocation::Train { encoder, train, .. } => vec![("init", encoder.seed), ("train", train.seed)],
            Invocation::EvalKmeans { seed, .. } => vec![("kmeans", *seed)],
            Invocation::AblateRegions {
                encoder,
                train,
                kmeans_seed,
                ..
            } => vec![("init", encoder.seed), ("train", train.seed), ("kmeans", *kmeans_seed)],
            Invocation::AblateTimesteps { kmeans_seed, .. } => vec![("kmeans", *kmeans_seed)],
            _ => vec![],
        };
        pairs.into_iter().map(|(k, v)| (k.to_string(), v.into())).collect()
    }

    fn inputs(&self) -> Vec<PathBuf> {
        match self {
            Invocation::Synth { .. } => vec![],
            Invocation::Preprocess { input, .. } => vec![input.clone()],
            Invocation::Split { segs, .. }
            | Invocation::Train { segs, .. }
            | Invocation::AblateRegions { segs, .. } => vec![segs.clone()],
            Invocation::EvalKmeans { model, segs, .. }
            | Invocation::AblateTimesteps { model, segs, .. }
            | Invocation::Embed { model, segs, .. } => vec![model.clone(), segs.clone()],
            Invocation::Condition { emb, .. } => vec![emb.clone()],
            Invocation::Metrics { gt, gen, .. } => vec![gt.clone(), gen.clone()],
        }
    }

    /// Runs the command and writes a manifest next to each output. Returns
    /// what goes to standard output.
    pub fn execute(&self) -> CliResult<String> {
        let start = std::time::Instant::now();
        let outcome = self.run()?;
        let elapsed = start.elapsed().as_secs_f64();
        for (path, is_dir) in &outcome.outputs {
            let manifest = RunManifest {
                subcommand: self.name().to_string(),
                toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
                invocation: self.clone(),
                seeds: self.seeds(),
                inputs: self.inputs(),
                outputs: outcome.outputs.iter().map(|(p, _)| p.clone()).collect(),
                wall_clock_seconds: elapsed,
            };
            crate::manifest::write_manifest(&manifest, &manifest_path(path, *is_dir))?;
        }
        Ok(outcome.stdout)
    }

    fn run(&self) -> CliResult<Outcome> {
        match self {
            Invocation::Synth { spec, out, segments } => {
                make_dir(out)?;
                if *segments {
                    write_segments(&synth_segments(spec)?, out)?;
                } else {
                    write_pack(&synth_recordings(spec)?, out)?;
                }
                Ok(Outcome::dir(out))
            }
            Invocation::Preprocess {
                input,
                config,
                montage,
                out,
            } => {
                let montage = Montage::load(montage)?;
                let recs = read_pack(input)?;
                let clean = recs
                    .iter()
                    .map(|r| preprocess_recording(r, config, &montage))
                    .collect::<neurovid::Result<Vec<_>>>()?;
                let set = segment_recordings(&clean)?;
                make_dir(out)?;
                write_segments(&set, out)?;
                Ok(Outcome::dir(out).with_stdout(format!("{} segments\n", set.len())))
            }
            Invocation::Split {
                segs,
                out,
                mode,
                test_subjects,
                ratios,
                seed,
            } => {
                let set = read_segments(segs)?;
                let split = match (mode, test_subjects) {
                    (SplitMode::LeaveTwo, Some(pair)) => split_leave_two(&set, *pair)?,
                    (SplitMode::LeaveTwo, None) => {
                        return Err(CliError::Usage("leave-two mode needs test subjects".into()))
                    }
                    (SplitMode::Within, _) => split_within(&set, *ratios, *seed)?,
                };
                make_dir(out)?;
                write_segments(&split, out)?;
                let [a, b, c] = split.split_counts();
                Ok(Outcome::dir(out).with_stdout(format!("train {a} val {b} test {c}\n")))
            }
            Invocation::Train {
                segs,
                region,
                montage,
                encoder,
                train,
                out,
            } => {
                let montage = Montage::load(montage)?;
                let set = read_segments(segs)?;
                let (params, history) = train_region(&set, &montage, region, encoder, train)?;
                save_params(&params, out)?;
                let hist = history_path(out);
                history.write_csv(&hist)?;
                Ok(Outcome::files(&[out, &hist]).with_stdout(format!("selected epoch {}\n", history.selected_epoch)))
            }
            Invocation::EvalKmeans {
                model,
                segs,
                region,
                montage,
                split,
                labels,
                seed,
                out,
            } => {
                let (params, set) = model_and_region(model, segs, region, montage)?;
                let eval = evaluate_kmeans(&params, &set, *split, *labels, *seed)?;
                let text = eval_json(&eval, *split, *labels, region);
                json_outcome(out.as_deref(), text)
            }
            Invocation::AblateRegions {
                segs,
                regions,
                regime,
                montage,
                encoder,
                train,
                kmeans_seed,
                jobs,
                out,
            } => {
                let montage = Montage::load(montage)?;
                let set = read_segments(segs)?;
                let setup = AblationSetup {
                    encoder,
                    train,
                    regime: *regime,
                    kmeans_seed: *kmeans_seed,
                    jobs: *jobs,
                };
                let report = region_ablation(&set, &montage, regions, &setup)?;
                write_report(&report, out)
            }
            Invocation::AblateTimesteps {
                model,
                segs,
                region,
                montage,
                windows,
                regime,
                labels,
                kmeans_seed,
                jobs,
                out,
            } => {
                let (params, set) = model_and_region(model, segs, region, montage)?;
                let train = TrainConfig {
                    label_mode: *labels,
                    ..TrainConfig::default()
                };
                let setup = AblationSetup {
                    encoder: &params.config,
                    train: &train,
                    regime: *regime,
                    kmeans_seed: *kmeans_seed,
                    jobs: *jobs,
                };
                let report = timestep_ablation(&params, &set, windows, &setup)?;
                write_report(&report, out)
            }
            Invocation::Embed {
                model,
                segs,
                region,
                montage,
                split,
                out,
            } => {
                let (params, set) = model_and_region(model, segs, region, montage)?;
                let idx: Vec<usize> = match split {
                    Some(s) => set.indices_in(*s),
                    None => (0..set.len()).collect(),
                };
                if idx.is_empty() {
                    return Err(neurovid::Error::Split("no segments to embed".into()).into());
                }
                let emb = encode_indices(&params, &set, &idx)?;
                let video: Vec<usize> = idx.iter().map(|&i| set.video_label[i]).collect();
                let emotion: Vec<i32> = idx.iter().map(|&i| set.emotion_label[i]).collect();
                let subject: Vec<u32> = idx.iter().map(|&i| set.subject_id[i]).collect();
                export_embeddings(&emb, &video, &emotion, &subject, out)?;
                Ok(Outcome::files(&[out]).with_stdout(format!("{} embeddings\n", idx.len())))
            }
            Invocation::Condition {
                emb,
                frames,
                enc_dim,
                out,
            } => {
                let rows = export_conditioning(&read_embeddings(emb)?, *frames, *enc_dim, out)?;
                Ok(Outcome::files(&[out]).with_stdout(format!("{rows} conditioning rows\n")))
            }
            Invocation::Metrics { gt, gen, out } => {
                let metrics = compare_clips(&read_clip(gt)?, &read_clip(gen)?)?;
                let text = serde_json::to_string_pretty(&metrics).expect("metrics serialize") + "\n";
                json_outcome(out.as_deref(), text)
            }
        }
    }
}

struct Outcome {
    outputs: Vec<(PathBuf, bool)>,
    stdout: String,
}

impl Outcome {
    fn dir(p: &Path) -> Self {
        Self {
            outputs: vec![(p.to_path_buf(), true)],
            stdout: String::new(),
        }
    }

    fn files(ps: &[&Path]) -> Self {
        Self {
            outputs: ps.iter().map(|p| (p.to_path_buf(), false)).collect(),
            stdout: String::new(),
        }
    }

    fn with_stdout(mut self, s: String) -> Self {
        self.stdout = s;
        self
    }
}

fn make_dir(p: &Path) -> CliResult<()> {
    std::fs::create_dir_all(p).map_err(|e| CliError::Data(format!("cannot create {}: {e}", p.display())))
}

/// `model.bin` → `model.history.csv`.
pub fn history_path(model: &Path) -> PathBuf {
    model.with_extension("history.csv")
}

fn model_and_region(model: &Path, segs: &Path, region: &str, montage: &str) -> CliResult<(EncoderParams, SegmentSet)> {
    let params = load_params(model)?;
    let montage = Montage::load(montage)?;
    let set = select_region(&read_segments(segs)?, &montage, region)?;
    if set.channels() != params.config.in_channels {
        return Err(neurovid::Error::Dimension(format!(
            "model expects {} channels but region `{region}` has {}",
            params.config.in_channels,
            set.channels()
        ))
        .into());
    }
    Ok((params, set))
}

fn eval_json(eval: &KMeansEval, split: Split, labels: LabelKind, region: &str) -> String {
    let v = serde_json::json!({
        "accuracy": eval.accuracy,
        "chance": eval.chance,
        "k": eval.k,
        "n": eval.n,
        "split": split,
        "labels": labels,
        "region": region,
    });
    serde_json::to_string_pretty(&v).expect("json") + "\n"
}

fn json_outcome(out: Option<&Path>, text: String) -> CliResult<Outcome> {
    match out {
        Some(p) => {
            write_atomic(p, text.as_bytes())?;
            Ok(Outcome::files(&[p]).with_stdout(text))
        }
        None => Ok(Outcome {
            outputs: vec![],
            stdout: text,
        }),
    }
}

fn write_report(report: &AblationReport, out: &Path) -> CliResult<Outcome> {
    report.write_csv(out)?;
    let json = out.with_extension("json");
    report.write_json(&json)?;
    let mut text = String::new();
    for r in &report.rows {
        text.push_str(&format!("{}\t{:.4}\n", r.region, r.accuracy));
    }
    Ok(Outcome::files(&[out, &json]).with_stdout(text))
}
