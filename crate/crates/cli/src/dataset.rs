//! Labels files and the recordings they reference.

use std::path::{Path, PathBuf};

use eegfatigue_core::features::{select_channel_by_mean_rank, LabeledRecording};
use eegfatigue_core::signal_io::{load_recording_csv, Label};
use eegfatigue_core::Error;

use crate::CliError;

/// One `recording,label` line of a labels file.
#[derive(Clone, Debug)]
pub struct LabelEntry {
    /// Path exactly as written in the labels file; used as the recording id.
    pub id: String,
    pub path: PathBuf,
    pub label: Label,
}

fn parse_label(s: &str) -> Option<Label> {
    match s.trim().to_ascii_lowercase().as_str() {
        "0" | "alert" => Some(Label::Alert),
        "1" | "fatigue" => Some(Label::Fatigue),
        _ => None,
    }
}

/// Reads a labels CSV with header `recording,label`. Labels are `0`/`1` or
/// `alert`/`fatigue`; relative paths resolve against the file's directory.
pub fn read_labels(path: &Path) -> Result<Vec<LabelEntry>, CliError> {
    let csv_err = |message: String| {
        CliError::Data(Error::Csv {
            path: path.to_path_buf(),
            message,
        })
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => CliError::Data(Error::Io {
                path: path.to_path_buf(),
                source,
            }),
            other => csv_err(format!("{other:?}")),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| csv_err(e.to_string()))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (Some(rec_col), Some(label_col)) = (col("recording"), col("label")) else {
        return Err(csv_err(
            "header must contain `recording` and `label` columns".into(),
        ));
    };
    let base = path.parent().unwrap_or(Path::new(""));
    let mut entries = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(e.to_string()))?;
        let row = i + 1;
        let id = record.get(rec_col).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(csv_err(format!("row {row}: empty recording path")));
        }
        let raw_label = record.get(label_col).unwrap_or("");
        let label = parse_label(raw_label).ok_or_else(|| {
            csv_err(format!(
                "row {row}: label {raw_label:?} is not one of 0, 1, alert, fatigue"
            ))
        })?;
        if entries.iter().any(|e: &LabelEntry| e.id == id) {
            return Err(csv_err(format!("row {row}: recording {id:?} listed twice")));
        }
        entries.push(LabelEntry {
            path: base.join(&id),
            id,
            label,
        });
    }
    if entries.is_empty() {
        return Err(CliError::Data(Error::EmptyDataset));
    }
    Ok(entries)
}

/// Keeps only the entries named on the command line, in command-line order.
/// A recording matches an entry when both resolve to the same file.
pub fn filter_entries(
    entries: Vec<LabelEntry>,
    wanted: &[PathBuf],
) -> Result<Vec<LabelEntry>, CliError> {
    if wanted.is_empty() {
        return Ok(entries);
    }
    let key = |p: &Path| std::fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf());
    let keyed: Vec<(PathBuf, LabelEntry)> =
        entries.into_iter().map(|e| (key(&e.path), e)).collect();
    wanted
        .iter()
        .map(|w| {
            let k = key(w);
            keyed
                .iter()
                .find(|(ek, _)| *ek == k)
                .map(|(_, e)| e.clone())
                .ok_or_else(|| {
                    CliError::Usage(format!(
                        "recording {} is not listed in the labels file",
                        w.display()
                    ))
                })
        })
        .collect()
}

pub fn load_labeled(
    entries: &[LabelEntry],
    rate_hz: f64,
) -> Result<Vec<LabeledRecording>, CliError> {
    entries
        .iter()
        .map(|e| {
            Ok(LabeledRecording {
                id: e.id.clone(),
                recording: load_recording_csv(&e.path, rate_hz)?,
                label: e.label,
            })
        })
        .collect()
}

/// Resolves the analysis channel: the explicit name if given (it must exist in
/// every recording), otherwise the mean-rank maximum-variance channel.
pub fn resolve_channel(
    recordings: &[LabeledRecording],
    explicit: Option<&str>,
) -> Result<String, CliError> {
    match explicit {
        Some(name) => {
            for lr in recordings {
                lr.recording.channel(name)?;
            }
            Ok(name.to_string())
        }
        None => {
            let refs: Vec<_> = recordings.iter().map(|lr| &lr.recording).collect();
            Ok(select_channel_by_mean_rank(&refs)?.name)
        }
    }
}
