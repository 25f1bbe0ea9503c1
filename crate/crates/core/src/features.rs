//! Channel selection and windowed feature extraction.
//!
//! Each window yields `[robust_scale, robust_location, variance,
//! autocovariance]`, in that column order everywhere (model inputs, CSV,
//! normalizer bounds).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcd::{self, McdConfig};
use crate::signal_io::{fmt_f64, ChannelView, Label, Recording};
use crate::stats;

pub const N_FEATURES: usize = 4;
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "robust_scale",
    "robust_location",
    "variance",
    "autocovariance",
];
pub const FEATURE_CSV_HEADER: &str =
    "window_start_s,robust_scale,robust_location,variance,autocovariance,label,recording_id";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowingConfig {
    pub window_s: f64,
    pub step_s: f64,
}

impl Default for WindowingConfig {
    fn default() -> Self {
        Self {
            window_s: 2.0,
            step_s: 0.5,
        }
    }
}

impl WindowingConfig {
    pub fn window_samples(&self, sample_rate_hz: f64) -> usize {
        (self.window_s * sample_rate_hz).round() as usize
    }

    pub fn step_samples(&self, sample_rate_hz: f64) -> usize {
        (self.step_s * sample_rate_hz).round() as usize
    }

    /// Window and step lengths in samples, validated.
    pub fn lengths(&self, sample_rate_hz: f64) -> Result<(usize, usize)> {
        if !(self.window_s > 0.0 && self.step_s > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "window ({}) and step ({}) must be positive",
                self.window_s, self.step_s
            )));
        }
        let w = self.window_samples(sample_rate_hz);
        let s = self.step_samples(sample_rate_hz);
        if w < 2 {
            return Err(Error::InvalidArgument(format!(
                "window of {} s at {sample_rate_hz} Hz is {w} samples, at least 2 required",
                self.window_s
            )));
        }
        if s < 1 {
            return Err(Error::InvalidArgument(format!(
                "step of {} s at {sample_rate_hz} Hz rounds to zero samples",
                self.step_s
            )));
        }
        Ok((w, s))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub robust_scale: f64,
    pub robust_location: f64,
    pub variance: f64,
    pub autocovariance: f64,
    pub window_start_s: f64,
}

impl FeatureVector {
    pub fn values(&self) -> [f64; N_FEATURES] {
        [
            self.robust_scale,
            self.robust_location,
            self.variance,
            self.autocovariance,
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelChoice {
    pub index: usize,
    pub name: String,
    pub variance: f64,
}

/// Channel with the largest sample variance; ties go to the lowest index.
pub fn select_max_variance_channel(rec: &Recording) -> Result<ChannelChoice> {
    let variances = channel_variances(rec)?;
    let mut best = 0;
    for (i, &v) in variances.iter().enumerate().skip(1) {
        if v > variances[best] {
            best = i;
        }
    }
    Ok(ChannelChoice {
        index: best,
        name: rec.channel_names()[best].clone(),
        variance: variances[best],
    })
}

fn channel_variances(rec: &Recording) -> Result<Vec<f64>> {
    rec.samples()
        .iter()
        .map(|row| stats::sample_variance(row))
        .collect()
}

/// Picks one channel for a whole database: each recording ranks its channels
/// by variance (1 = largest, ties by column order) and the channel with the
/// lowest mean rank wins. Only channels present in every recording compete;
/// remaining ties go to the first recording's column order.
pub fn select_channel_by_mean_rank(recordings: &[&Recording]) -> Result<ChannelChoice> {
    let first = recordings.first().ok_or(Error::EmptyDataset)?;
    let candidates: Vec<&String> = first
        .channel_names()
        .iter()
        .filter(|name| recordings.iter().all(|r| r.channel_names().contains(name)))
        .collect();
    if candidates.is_empty() {
        return Err(Error::InvalidArgument(
            "no channel is shared by all recordings".into(),
        ));
    }
    let mut rank_sum = vec![0.0; candidates.len()];
    let mut var_sum = vec![0.0; candidates.len()];
    for rec in recordings {
        let variances: Vec<f64> = candidates
            .iter()
            .map(|name| stats::sample_variance(rec.channel(name)?.data))
            .collect::<Result<_>>()?;
        let mut order: Vec<usize> = (0..candidates.len()).collect();
        order.sort_by(|&a, &b| variances[b].total_cmp(&variances[a]).then(a.cmp(&b)));
        for (rank, &c) in order.iter().enumerate() {
            rank_sum[c] += (rank + 1) as f64;
            var_sum[c] += variances[c];
        }
    }
    let mut best = 0;
    for i in 1..candidates.len() {
        if rank_sum[i] < rank_sum[best] {
            best = i;
        }
    }
    let name = candidates[best].clone();
    Ok(ChannelChoice {
        index: first
            .channel_names()
            .iter()
            .position(|n| *n == name)
            .expect("candidate comes from first recording"),
        name,
        variance: var_sum[best] / recordings.len() as f64,
    })
}

/// Rectangular windows `[k·S, k·S + W)`; the trailing partial window is dropped.
pub fn segment_windows(
    n_samples: usize,
    sample_rate_hz: f64,
    cfg: &WindowingConfig,
) -> Result<Vec<Range<usize>>> {
    let (w, s) = cfg.lengths(sample_rate_hz)?;
    if n_samples < w {
        return Err(Error::NoWindows {
            samples: n_samples,
            window: w,
        });
    }
    let count = (n_samples - w) / s + 1;
    Ok((0..count).map(|k| k * s..k * s + w).collect())
}

/// Features of a single window of samples.
pub fn window_features(
    window: &[f64],
    alpha: f64,
    consistency_factor: f64,
    window_start_s: f64,
) -> Result<FeatureVector> {
    let (_, variance, autocovariance) = stats::moments(window)?;
    let mut sorted = window.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let robust = mcd::robust_estimate_sorted(&sorted, alpha, consistency_factor)?;
    Ok(FeatureVector {
        robust_scale: robust.scaled_scale,
        robust_location: robust.location,
        variance,
        autocovariance,
        window_start_s,
    })
}

/// One feature row per window, in window order.
pub fn extract_window_features(
    ch: &ChannelView<'_>,
    windows: &[Range<usize>],
    cfg: &McdConfig,
) -> Result<Vec<FeatureVector>> {
    let c0 = mcd::factor_for(cfg)?;
    windows
        .par_iter()
        .map(|r| {
            let data = ch.data.get(r.clone()).ok_or_else(|| {
                Error::InvalidArgument(format!("window {r:?} exceeds channel length {}", ch.len()))
            })?;
            window_features(data, cfg.alpha, c0, r.start as f64 / ch.sample_rate_hz)
        })
        .collect()
}

/// Convenience: segment and extract in one call.
pub fn channel_features(
    ch: &ChannelView<'_>,
    windowing: &WindowingConfig,
    mcd_cfg: &McdConfig,
) -> Result<Vec<FeatureVector>> {
    let windows = segment_windows(ch.len(), ch.sample_rate_hz, windowing)?;
    extract_window_features(ch, &windows, mcd_cfg)
}

/// Per-feature min/max scaling onto [−1, 1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub min: [f64; N_FEATURES],
    pub max: [f64; N_FEATURES],
}

impl Normalizer {
    /// Fits bounds over all rows, classes pooled.
    pub fn fit<'a, I>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a FeatureVector>,
    {
        let mut min = [f64::INFINITY; N_FEATURES];
        let mut max = [f64::NEG_INFINITY; N_FEATURES];
        let mut seen = false;
        for row in rows {
            seen = true;
            for (j, v) in row.values().into_iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        if !seen {
            return Err(Error::EmptyDataset);
        }
        Ok(Self { min, max })
    }

    /// `2(x − min)/(max − min) − 1`, clipped to [−1, 1]; degenerate features
    /// map to 0.
    pub fn apply(&self, values: &[f64; N_FEATURES]) -> [f64; N_FEATURES] {
        let mut out = [0.0; N_FEATURES];
        for j in 0..N_FEATURES {
            let span = self.max[j] - self.min[j];
            out[j] = if span > 0.0 {
                (2.0 * (values[j] - self.min[j]) / span - 1.0).clamp(-1.0, 1.0)
            } else {
                0.0
            };
        }
        out
    }

    pub fn apply_rows(&self, rows: &[FeatureVector]) -> Vec<[f64; N_FEATURES]> {
        rows.iter().map(|r| self.apply(&r.values())).collect()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        for (j, name) in FEATURE_NAMES.iter().enumerate() {
            if !(self.min[j].is_finite() && self.max[j].is_finite() && self.max[j] >= self.min[j]) {
                return Err(Error::MalformedModel(format!(
                    "normalizer bounds for {name} are invalid"
                )));
            }
        }
        Ok(())
    }
}

pub fn fit_normalizer(train: &LabeledDataset) -> Result<Normalizer> {
    Normalizer::fit(&train.rows)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabeledDataset {
    pub rows: Vec<FeatureVector>,
    pub labels: Vec<Label>,
    /// Recording id of each row.
    pub recording_ids: Vec<String>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, row: FeatureVector, label: Label, recording_id: &str) {
        self.rows.push(row);
        self.labels.push(label);
        self.recording_ids.push(recording_id.to_string());
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            rows: indices.iter().map(|&i| self.rows[i]).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            recording_ids: indices
                .iter()
                .map(|&i| self.recording_ids[i].clone())
                .collect(),
        }
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let ones = self.labels.iter().filter(|&&l| l == Label::Fatigue).count();
        [self.labels.len() - ones, ones]
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io_err = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
        writeln!(w, "{FEATURE_CSV_HEADER}").map_err(io_err)?;
        for ((row, label), id) in self.rows.iter().zip(&self.labels).zip(&self.recording_ids) {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                fmt_f64(row.window_start_s),
                fmt_f64(row.robust_scale),
                fmt_f64(row.robust_location),
                fmt_f64(row.variance),
                fmt_f64(row.autocovariance),
                label.as_u8(),
                id
            )
            .map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let csv_err = |message: String| Error::Csv {
            path: path.to_path_buf(),
            message,
        };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(file);
        let header = reader.headers().map_err(|e| csv_err(e.to_string()))?;
        let header: Vec<&str> = header.iter().collect();
        if header.join(",") != FEATURE_CSV_HEADER {
            return Err(csv_err(format!(
                "unexpected header {:?}, expected {FEATURE_CSV_HEADER:?}",
                header.join(",")
            )));
        }
        let columns: Vec<&str> = FEATURE_CSV_HEADER.split(',').collect();
        let mut ds = Self::default();
        for (i, rec) in reader.records().enumerate() {
            let row = i + 1;
            let rec = rec.map_err(|e| csv_err(e.to_string()))?;
            let num = |c: usize| -> Result<f64> {
                rec[c].trim().parse().map_err(|_| Error::NonNumeric {
                    path: path.to_path_buf(),
                    row,
                    column: columns[c].to_string(),
                    value: rec[c].to_string(),
                })
            };
            let fv = FeatureVector {
                window_start_s: num(0)?,
                robust_scale: num(1)?,
                robust_location: num(2)?,
                variance: num(3)?,
                autocovariance: num(4)?,
            };
            let label = match rec[5].trim() {
                "0" => Label::Alert,
                "1" => Label::Fatigue,
                other => {
                    return Err(csv_err(format!("row {row}: label {other:?} is not 0 or 1")));
                }
            };
            ds.push(fv, label, &rec[6]);
        }
        Ok(ds)
    }
}

#[derive(Clone, Debug)]
pub struct LabeledRecording {
    pub id: String,
    pub recording: Recording,
    pub label: Label,
}

/// Concatenates the window features of every recording, each row tagged with
/// its recording's label and id.
pub fn build_labeled_dataset(
    recordings: &[LabeledRecording],
    channel_name: &str,
    windowing: &WindowingConfig,
    mcd_cfg: &McdConfig,
) -> Result<LabeledDataset> {
    let per_recording: Vec<Vec<FeatureVector>> = recordings
        .par_iter()
        .map(|lr| {
            let ch = lr.recording.channel(channel_name)?;
            channel_features(&ch, windowing, mcd_cfg)
        })
        .collect::<Result<_>>()?;
    let mut ds = LabeledDataset::default();
    for (lr, rows) in recordings.iter().zip(per_recording) {
        for row in rows {
            ds.push(row, lr.label, &lr.id);
        }
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(channels: &[(&str, &[f64])]) -> Recording {
        Recording::new(
            channels.iter().map(|(n, _)| n.to_string()).collect(),
            channels.iter().map(|(_, d)| d.to_vec()).collect(),
            1000.0,
        )
        .unwrap()
    }

    #[test]
    fn selects_nonzero_variance_channel() {
        let r = rec(&[("A", &[0.0; 4]), ("B", &[1.0, -1.0, 1.0, -1.0])]);
        assert_eq!(select_max_variance_channel(&r).unwrap().name, "B");
    }

    #[test]
    fn selection_tie_goes_to_lowest_index() {
        let r = rec(&[("A", &[1.0, 2.0]), ("B", &[1.0, 2.0])]);
        let c = select_max_variance_channel(&r).unwrap();
        assert_eq!((c.index, c.name.as_str()), (0, "A"));
    }

    #[test]
    fn selection_by_hand_variances() {
        let r = rec(&[
            ("A", &[1.0, 2.0, 3.0]),
            ("B", &[10.0, 10.0, 10.0]),
            ("C", &[0.0, 4.0, 8.0]),
        ]);
        let c = select_max_variance_channel(&r).unwrap();
        assert_eq!(c.name, "C");
        assert_eq!(c.variance, 16.0);
    }

    #[test]
    fn mean_rank_selection_across_recordings() {
        let r1 = rec(&[("A", &[0.0, 5.0]), ("B", &[0.0, 1.0]), ("C", &[0.0, 3.0])]);
        let r2 = rec(&[("A", &[0.0, 2.0]), ("B", &[0.0, 1.0]), ("C", &[0.0, 3.0])]);
        let r3 = rec(&[("A", &[0.0, 1.0]), ("B", &[0.0, 2.0]), ("C", &[0.0, 3.0])]);
        // Ranks: A 1,2,3; B 3,3,2; C 2,1,1.
        let c = select_channel_by_mean_rank(&[&r1, &r2, &r3]).unwrap();
        assert_eq!(c.name, "C");
    }

    #[test]
    fn window_counts() {
        let cfg = WindowingConfig::default();
        assert_eq!(segment_windows(300_000, 1000.0, &cfg).unwrap().len(), 597);
        assert_eq!(segment_windows(2000, 1000.0, &cfg).unwrap(), vec![0..2000]);
        let wide = WindowingConfig {
            window_s: 2.0,
            step_s: 1.5,
        };
        let starts: Vec<usize> = segment_windows(5000, 1000.0, &wide)
            .unwrap()
            .iter()
            .map(|r| r.start)
            .collect();
        assert_eq!(starts, vec![0, 1500, 3000]);
        assert!(matches!(
            segment_windows(1999, 1000.0, &cfg),
            Err(Error::NoWindows {
                samples: 1999,
                window: 2000
            })
        ));
    }

    #[test]
    fn constant_window_features() {
        let c = 0.3;
        let f = window_features(&[c; 64], 0.5, 7.0, 0.0).unwrap();
        assert_eq!(f.values(), [0.0, c, 0.0, 0.0]);
    }

    #[test]
    fn outlier_window_features() {
        let f = window_features(&[1.0, 2.0, 3.0, 4.0, 100.0], 0.5, 1.0, 0.0).unwrap();
        assert_eq!(f.robust_location, 2.0);
        assert!((f.variance - 1902.5).abs() < 0.1);
        assert!((f.autocovariance - 1522.0).abs() < 0.1);
    }

    #[test]
    fn normalizer_examples() {
        let rows: Vec<FeatureVector> = [2.0, 4.0, 6.0]
            .iter()
            .map(|&v| FeatureVector {
                robust_scale: v,
                robust_location: 5.0,
                variance: v,
                autocovariance: v,
                window_start_s: 0.0,
            })
            .collect();
        let nz = Normalizer::fit(&rows).unwrap();
        assert_eq!(nz.min[0], 2.0);
        assert_eq!(nz.max[0], 6.0);
        let out = nz.apply_rows(&rows);
        assert_eq!(
            out.iter().map(|r| r[0]).collect::<Vec<_>>(),
            vec![-1.0, 0.0, 1.0]
        );
        assert!(out.iter().all(|r| r[1] == 0.0));
        assert_eq!(nz.apply(&[9.0, 5.0, -3.0, 6.0]), [1.0, 0.0, -1.0, 1.0]);
    }

    #[test]
    fn normalizer_single_row_and_empty() {
        let row = FeatureVector {
            robust_scale: 1.0,
            robust_location: 2.0,
            variance: 3.0,
            autocovariance: 4.0,
            window_start_s: 0.0,
        };
        let nz = Normalizer::fit([&row]).unwrap();
        assert_eq!(nz.min, nz.max);
        assert_eq!(nz.min, row.values());
        assert!(matches!(
            Normalizer::fit(std::iter::empty::<&FeatureVector>()),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn normalizer_pools_classes() {
        let mut ds = LabeledDataset::default();
        for (v, l) in [
            (1.0, Label::Alert),
            (2.0, Label::Alert),
            (10.0, Label::Fatigue),
            (12.0, Label::Fatigue),
        ] {
            let fv = FeatureVector {
                robust_scale: v,
                robust_location: v,
                variance: v,
                autocovariance: v,
                window_start_s: 0.0,
            };
            ds.push(fv, l, "r");
        }
        let nz = fit_normalizer(&ds).unwrap();
        assert_eq!(nz.min, [1.0; 4]);
        assert_eq!(nz.max, [12.0; 4]);
    }

    #[test]
    fn dataset_rows_follow_recordings() {
        let data: Vec<f64> = (0..6000).map(|i| ((i * 37) % 101) as f64).collect();
        let mk = |id: &str, label| LabeledRecording {
            id: id.into(),
            recording: Recording::new(vec!["TP7".into()], vec![data.clone()], 1000.0).unwrap(),
            label,
        };
        let recs = vec![mk("a", Label::Alert), mk("b", Label::Alert)];
        let ds = build_labeled_dataset(
            &recs,
            "TP7",
            &WindowingConfig::default(),
            &McdConfig::default(),
        )
        .unwrap();
        // (6000 - 2000) / 500 + 1 = 9 windows each.
        assert_eq!(ds.len(), 18);
        assert!(ds.labels.iter().all(|&l| l == Label::Alert));
        assert_eq!(ds.recording_ids[8], "a");
        assert_eq!(ds.recording_ids[9], "b");
        assert!(matches!(
            build_labeled_dataset(
                &recs,
                "Fz",
                &WindowingConfig::default(),
                &McdConfig::default()
            ),
            Err(Error::UnknownChannel { .. })
        ));
    }
}
