//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use eegfatigue_core::ensemble::{
    train_ensemble, BaggedModel, EnsembleConfig, ModelContext, TieRule,
};
use eegfatigue_core::evaluation::{cross_validate, CvConfig, Grouping};
use eegfatigue_core::features::{
    build_labeled_dataset, channel_features, segment_windows, WindowingConfig, FEATURE_NAMES,
};
use eegfatigue_core::mcd::{consistency_factor_at_level, McdConfig};
use eegfatigue_core::signal_io::{
    fmt_f64, generate_synthetic, load_recording_csv, Label, Recording, SynthSpec,
};
use eegfatigue_core::stream::{stream_recording, StreamOptions};
use eegfatigue_core::Error;
use serde::Serialize;

use crate::dataset::{filter_entries, load_labeled, read_labels, resolve_channel};
use crate::{
    CliError, DatasetArgs, EnsembleArgs, EvaluateArgs, ExtractArgs, FeatureArgs, PredictArgs,
    SelectChannelArgs, SignalArgs, SplitArg, StreamArgs, SynthArgs, TieArg, TrainArgs,
};

type CliResult<T = ()> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| {
        CliError::Data(Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn check_rate(signal: &SignalArgs) -> CliResult {
    if signal.rate_hz.is_finite() && signal.rate_hz > 0.0 {
        Ok(())
    } else {
        Err(usage(format!(
            "--rate-hz must be positive, got {}",
            signal.rate_hz
        )))
    }
}

/// Validated windowing and MCD settings.
fn feature_settings(
    features: &FeatureArgs,
    signal: &SignalArgs,
) -> CliResult<(WindowingConfig, McdConfig)> {
    check_rate(signal)?;
    let windowing = WindowingConfig {
        window_s: features.window_s,
        step_s: features.step_s,
    };
    windowing
        .lengths(signal.rate_hz)
        .map_err(|e| usage(e.to_string()))?;
    let mcd = McdConfig::new(features.alpha).map_err(|e| usage(e.to_string()))?;
    Ok((windowing, mcd))
}

fn ensemble_settings(args: &EnsembleArgs) -> CliResult<EnsembleConfig> {
    if args.trees == 0 {
        return Err(usage("--trees must be at least 1"));
    }
    Ok(EnsembleConfig {
        n_trees: args.trees,
        seed: args.seed,
        tie: match args.tie {
            TieArg::Alert => TieRule::Alert,
            TieArg::Fatigue => TieRule::Fatigue,
        },
        ..EnsembleConfig::default()
    })
}

/// Flattens the parsed arguments into `key -> value` strings so that every
/// artifact records the exact settings that produced it.
fn provenance<T: Serialize>(command: &str, args: &T) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    if let Ok(serde_json::Value::Object(map)) = serde_json::to_value(args) {
        for (key, value) in map {
            let text = match value {
                serde_json::Value::String(s) => s,
                other => other.to_string(),
            };
            out.insert(key, text);
        }
    }
    out.insert("command".into(), command.into());
    out.insert("tool_version".into(), env!("CARGO_PKG_VERSION").into());
    out
}

struct Prepared {
    channel: String,
    windowing: WindowingConfig,
    mcd: McdConfig,
    dataset: eegfatigue_core::features::LabeledDataset,
}

fn prepare(data: &DatasetArgs, signal: &SignalArgs, features: &FeatureArgs) -> CliResult<Prepared> {
    let (windowing, mcd) = feature_settings(features, signal)?;
    let entries = filter_entries(read_labels(&data.labels)?, &data.recordings)?;
    let recordings = load_labeled(&entries, signal.rate_hz)?;
    let channel = resolve_channel(&recordings, features.channel.as_deref())?;
    let dataset = build_labeled_dataset(&recordings, &channel, &windowing, &mcd)?;
    Ok(Prepared {
        channel,
        windowing,
        mcd,
        dataset,
    })
}

pub fn select_channel(args: &SelectChannelArgs) -> CliResult {
    check_rate(&args.signal)?;
    let recordings: Vec<Recording> = args
        .recordings
        .iter()
        .map(|p| load_recording_csv(p, args.signal.rate_hz))
        .collect::<Result<_, _>>()?;
    let refs: Vec<&Recording> = recordings.iter().collect();
    let choice = eegfatigue_core::features::select_channel_by_mean_rank(&refs)?;
    println!("{}", choice.name);
    Ok(())
}

pub fn extract(args: &ExtractArgs) -> CliResult {
    let prep = prepare(&args.data, &args.signal, &args.features)?;
    prep.dataset.write_csv(&args.out)?;

    #[derive(Serialize)]
    struct Sidecar<'a> {
        channel_name: &'a str,
        sample_rate_hz: f64,
        window_s: f64,
        step_s: f64,
        alpha: f64,
        consistency_factor: f64,
        features: [&'a str; 4],
        n_rows: usize,
        class_counts: [usize; 2],
        provenance: BTreeMap<String, String>,
    }
    let sidecar = Sidecar {
        channel_name: &prep.channel,
        sample_rate_hz: args.signal.rate_hz,
        window_s: prep.windowing.window_s,
        step_s: prep.windowing.step_s,
        alpha: prep.mcd.alpha,
        consistency_factor: consistency_factor_at_level(prep.mcd.alpha, prep.mcd.alpha)?,
        features: FEATURE_NAMES,
        n_rows: prep.dataset.len(),
        class_counts: prep.dataset.class_counts(),
        provenance: provenance("extract", args),
    };
    let meta_path = sidecar_path(&args.out);
    let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    fs::write(&meta_path, json + "\n").map_err(io_error(&meta_path))?;
    eprintln!(
        "wrote {} rows ({} alert, {} fatigue) from channel {} to {}",
        prep.dataset.len(),
        sidecar.class_counts[0],
        sidecar.class_counts[1],
        prep.channel,
        args.out.display()
    );
    Ok(())
}

/// `features.csv` -> `features.csv.meta.json`.
fn sidecar_path(out: &Path) -> std::path::PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".meta.json");
    name.into()
}

pub fn train(args: &TrainArgs) -> CliResult {
    let cfg = ensemble_settings(&args.ensemble)?;
    let prep = prepare(&args.data, &args.signal, &args.features)?;
    let context = ModelContext {
        channel_name: prep.channel.clone(),
        windowing: prep.windowing,
        mcd: prep.mcd,
    };
    let mut model = train_ensemble(&prep.dataset, &cfg, &context)?;
    model.provenance = provenance("train", args);
    model.save(&args.out)?;
    eprintln!(
        "trained {} trees on {} windows of channel {}; model written to {}",
        model.ensemble_size,
        prep.dataset.len(),
        model.channel_name,
        args.out.display()
    );
    Ok(())
}

pub fn evaluate(args: &EvaluateArgs) -> CliResult {
    let ensemble = ensemble_settings(&args.ensemble)?;
    if args.k < 2 {
        return Err(usage(format!("--k must be at least 2, got {}", args.k)));
    }
    let prep = prepare(&args.data, &args.signal, &args.features)?;
    let cfg = CvConfig {
        k: args.k,
        seed: args.ensemble.seed,
        grouping: match args.split {
            SplitArg::Row => Grouping::Row,
            SplitArg::Recording => Grouping::Recording,
        },
        ensemble,
    };
    let mut report = cross_validate(&prep.dataset, &cfg)?;
    report.provenance = provenance("evaluate", args);
    report
        .provenance
        .insert("channel_name".into(), prep.channel.clone());
    report.write_files(&args.out_dir)?;
    print!("{}", report.to_text());
    Ok(())
}

fn load_model(path: &Path) -> CliResult<BaggedModel> {
    Ok(BaggedModel::load(path)?)
}

fn load_for_model(path: &Path, signal: &SignalArgs) -> CliResult<Recording> {
    check_rate(signal)?;
    Ok(load_recording_csv(path, signal.rate_hz)?)
}

/// Line-oriented stdout that turns a closed pipe (`| head`) into a quiet
/// early exit instead of a panic.
struct Stdout {
    lock: std::io::StdoutLock<'static>,
    error: Option<std::io::Error>,
}

impl Stdout {
    fn new() -> Self {
        Self {
            lock: std::io::stdout().lock(),
            error: None,
        }
    }

    fn line(&mut self, text: std::fmt::Arguments<'_>) {
        if self.error.is_none() {
            if let Err(e) = writeln!(self.lock, "{text}") {
                self.error = Some(e);
            }
        }
    }

    fn finish(mut self) -> CliResult {
        if self.error.is_none() {
            self.error = self.lock.flush().err();
        }
        match self.error {
            None => Ok(()),
            Some(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
            Some(e) => Err(io_error(Path::new("<stdout>"))(e)),
        }
    }
}

const DECISION_HEADER: &str = "window_start_s,window_end_s,label,vote_fraction";

pub fn stream(args: &StreamArgs) -> CliResult {
    let model = load_model(&args.model)?;
    let rec = load_for_model(&args.recording, &args.signal)?;
    let mut out = Stdout::new();
    out.line(format_args!("{DECISION_HEADER},processing_s"));
    let report = stream_recording(
        &model,
        &rec,
        StreamOptions {
            realtime: args.realtime,
        },
        |d| {
            out.line(format_args!(
                "{},{},{},{},{}",
                fmt_f64(d.window_start_s),
                fmt_f64(d.window_end_time_s),
                d.label,
                fmt_f64(d.vote_fraction),
                fmt_f64(d.processing_wall_time_s)
            ))
        },
    )?;
    out.finish()?;
    let s = &report.summary;
    eprintln!(
        "{} windows, {} fatigue; mean processing {:.6} s (max {:.6} s); detection delay {:.6} s",
        s.n_windows,
        s.fatigue_windows,
        s.mean_processing_s,
        s.max_processing_s,
        s.detection_delay_s
    );
    if let Some(path) = &args.report {
        let json = serde_json::to_string_pretty(&report).expect("stream report serializes");
        fs::write(path, json + "\n").map_err(io_error(path))?;
    }
    Ok(())
}

pub fn predict(args: &PredictArgs) -> CliResult {
    let model = load_model(&args.model)?;
    let rec = load_for_model(&args.recording, &args.signal)?;
    let ch = rec
        .channel(&model.channel_name)
        .map_err(|_| Error::ChannelMismatch {
            expected: model.channel_name.clone(),
            available: rec.channel_names().to_vec(),
        })?;
    let windowing = model.windowing();
    let windows = segment_windows(ch.len(), ch.sample_rate_hz, &windowing)?;
    let rows = channel_features(&ch, &windowing, &model.mcd())?;
    let preds = model.predict_batch(&rows);
    let mut out = Stdout::new();
    out.line(format_args!("{DECISION_HEADER}"));
    for ((r, row), p) in windows.iter().zip(&rows).zip(&preds) {
        out.line(format_args!(
            "{},{},{},{}",
            fmt_f64(row.window_start_s),
            fmt_f64(r.end as f64 / ch.sample_rate_hz),
            p.label,
            fmt_f64(p.vote_fraction)
        ));
    }
    out.finish()
}

pub fn synth(args: &SynthArgs) -> CliResult {
    check_rate(&args.signal)?;
    let spec = SynthSpec {
        n_subjects: args.subjects,
        duration_s: args.duration_s,
        sample_rate_hz: args.signal.rate_hz,
        alert_std_uv: args.alert_std,
        fatigue_std_uv: args.fatigue_std,
        fatigue_outlier_rate: args.outlier_rate,
        seed: args.seed,
        channel_name: args.channel.clone(),
    };
    let recordings = generate_synthetic(&spec).map_err(|e| usage(e.to_string()))?;
    fs::create_dir_all(&args.out_dir).map_err(io_error(&args.out_dir))?;
    let mut labels = String::from("recording,label\n");
    for (i, (rec, label)) in recordings.iter().enumerate() {
        let name = format!("rec_{i:02}.csv");
        rec.write_csv(&args.out_dir.join(&name))?;
        let tag = match label {
            Label::Alert => "alert",
            Label::Fatigue => "fatigue",
        };
        labels.push_str(&format!("{name},{tag}\n"));
    }
    let labels_path = args.out_dir.join("labels.csv");
    fs::write(&labels_path, labels).map_err(io_error(&labels_path))?;
    eprintln!(
        "wrote {} recordings and labels.csv to {}",
        recordings.len(),
        args.out_dir.display()
    );
    Ok(())
}
