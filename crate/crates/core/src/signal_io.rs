//! Multichannel recordings: CSV loading, single-channel views and a synthetic
//! alert/fatigue generator.
//!
//! The CSV layout is one column per channel with a header row of channel
//! names and one row per time sample. The sampling rate is not part of the
//! file and is supplied by the caller.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Class label of a recording or a feature row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Alert = 0,
    Fatigue = 1,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Label::Alert),
            1 => Some(Label::Fatigue),
            _ => None,
        }
    }
}

/// M channels × N samples, immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct Recording {
    channel_names: Vec<String>,
    samples: Vec<Vec<f64>>,
    sample_rate_hz: f64,
}

impl Recording {
    /// `samples` is indexed `[channel][time]`.
    pub fn new(
        channel_names: Vec<String>,
        samples: Vec<Vec<f64>>,
        sample_rate_hz: f64,
    ) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::InvalidRecording(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if channel_names.is_empty() {
            return Err(Error::InvalidRecording("no channels".into()));
        }
        if channel_names.len() != samples.len() {
            return Err(Error::InvalidRecording(format!(
                "{} channel names for {} sample rows",
                channel_names.len(),
                samples.len()
            )));
        }
        check_unique(&channel_names)?;
        let n = samples[0].len();
        if n < 2 {
            return Err(Error::InvalidRecording(format!(
                "{n} samples per channel, at least 2 required"
            )));
        }
        for (name, row) in channel_names.iter().zip(&samples) {
            if row.len() != n {
                return Err(Error::InvalidRecording(format!(
                    "channel {name:?} has {} samples, expected {n}",
                    row.len()
                )));
            }
            if let Some(i) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidRecording(format!(
                    "channel {name:?} has a non-finite value at sample {i}"
                )));
            }
        }
        Ok(Self {
            channel_names,
            samples,
            sample_rate_hz,
        })
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn n_channels(&self) -> usize {
        self.channel_names.len()
    }

    pub fn n_samples(&self) -> usize {
        self.samples[0].len()
    }

    pub fn channel(&self, name: &str) -> Result<ChannelView<'_>> {
        match self.channel_names.iter().position(|c| c == name) {
            Some(i) => Ok(self.channel_at(i)),
            None => Err(Error::UnknownChannel {
                name: name.to_string(),
                available: self.channel_names.clone(),
            }),
        }
    }

    /// Panics if `index` is out of range.
    pub fn channel_at(&self, index: usize) -> ChannelView<'_> {
        ChannelView {
            name: &self.channel_names[index],
            data: &self.samples[index],
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    /// Writes the recording in the loader's CSV layout, 17 significant digits.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io_err = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = File::create(path).map_err(io_err)?;
        let mut w = BufWriter::new(file);
        writeln!(w, "{}", self.channel_names.join(",")).map_err(io_err)?;
        let mut line = String::new();
        for t in 0..self.n_samples() {
            line.clear();
            for (c, row) in self.samples.iter().enumerate() {
                if c > 0 {
                    line.push(',');
                }
                line.push_str(&fmt_f64(row[t]));
            }
            line.push('\n');
            w.write_all(line.as_bytes()).map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }
}

/// Formats a finite value at 17 significant digits, which round-trips exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn check_unique(names: &[String]) -> Result<()> {
    let mut seen: HashMap<&str, usize> = HashMap::with_capacity(names.len());
    for (i, name) in names.iter().enumerate() {
        if let Some(&first) = seen.get(name.as_str()) {
            return Err(Error::DuplicateChannel {
                name: name.clone(),
                first,
                second: i,
            });
        }
        seen.insert(name, i);
    }
    Ok(())
}

/// Borrowed view of one channel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelView<'a> {
    pub name: &'a str,
    pub data: &'a [f64],
    pub sample_rate_hz: f64,
}

impl ChannelView<'_> {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Loads a recording from CSV. Data rows are numbered from 1 in diagnostics,
/// the header is not counted.
pub fn load_recording_csv(path: &Path, sample_rate_hz: f64) -> Result<Recording> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };

    let header = reader.headers().map_err(csv_err)?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::MissingHeader {
            path: path.to_path_buf(),
        });
    }
    let names: Vec<String> = header.iter().map(str::to_string).collect();
    check_unique(&names)?;

    let m = names.len();
    let mut samples: Vec<Vec<f64>> = vec![Vec::new(); m];
    let mut record = csv::StringRecord::new();
    let mut row = 0usize;
    while reader.read_record(&mut record).map_err(csv_err)? {
        row += 1;
        // A blank line (e.g. trailing newline variants) carries no sample.
        if record.len() == 1 && record[0].is_empty() && m > 1 {
            row -= 1;
            continue;
        }
        if record.len() != m {
            return Err(Error::RaggedRow {
                path: path.to_path_buf(),
                row,
                found: record.len(),
                expected: m,
            });
        }
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::NonNumeric {
                path: path.to_path_buf(),
                row,
                column: names[c].clone(),
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    path: path.to_path_buf(),
                    row,
                    column: names[c].clone(),
                });
            }
            samples[c].push(v);
        }
    }
    if row < 2 {
        return Err(Error::TooFewSamples {
            path: path.to_path_buf(),
            found: row,
        });
    }
    Recording::new(names, samples, sample_rate_hz)
}

/// Parameters of the synthetic alert/fatigue generator.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub n_subjects: usize,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub alert_std_uv: f64,
    pub fatigue_std_uv: f64,
    pub fatigue_outlier_rate: f64,
    pub seed: u64,
    pub channel_name: String,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_subjects: 12,
            duration_s: 300.0,
            sample_rate_hz: 1000.0,
            alert_std_uv: 10.0,
            fatigue_std_uv: 40.0,
            fatigue_outlier_rate: 0.01,
            seed: 42,
            channel_name: "TP7".to_string(),
        }
    }
}

impl SynthSpec {
    pub fn n_samples(&self) -> usize {
        (self.duration_s * self.sample_rate_hz).round() as usize
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.n_subjects == 0 {
            return bad("n_subjects must be positive".into());
        }
        if !(self.duration_s > 0.0 && self.sample_rate_hz > 0.0) {
            return bad("duration and sample rate must be positive".into());
        }
        if self.alert_std_uv.is_nan() || self.alert_std_uv <= 0.0 {
            return bad("alert std must be positive".into());
        }
        if self.fatigue_std_uv.is_nan() || self.fatigue_std_uv <= self.alert_std_uv {
            return bad(format!(
                "fatigue std ({}) must exceed alert std ({})",
                self.fatigue_std_uv, self.alert_std_uv
            ));
        }
        if !(0.0..1.0).contains(&self.fatigue_outlier_rate) {
            return bad(format!(
                "outlier rate must lie in [0, 1), got {}",
                self.fatigue_outlier_rate
            ));
        }
        if self.n_samples() < 2 {
            return bad("synthetic recordings need at least 2 samples".into());
        }
        Ok(())
    }
}

/// Generates `n_subjects` alert recordings followed by `n_subjects` fatigue
/// recordings. Recording `i` draws from its own ChaCha8 stream `i` under
/// `spec.seed`.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<Vec<(Recording, Label)>> {
    spec.validate()?;
    let n = spec.n_samples();
    let mut out = Vec::with_capacity(2 * spec.n_subjects);
    for i in 0..2 * spec.n_subjects {
        let label = if i < spec.n_subjects {
            Label::Alert
        } else {
            Label::Fatigue
        };
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(i as u64);
        let std = match label {
            Label::Alert => spec.alert_std_uv,
            Label::Fatigue => spec.fatigue_std_uv,
        };
        let normal = Normal::new(0.0, std).expect("std validated positive");
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            let mut v = normal.sample(&mut rng);
            if label == Label::Fatigue && spec.fatigue_outlier_rate > 0.0 {
                let spike: f64 = rng.random();
                if spike < spec.fatigue_outlier_rate {
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    v = sign * 10.0 * spec.fatigue_std_uv;
                }
            }
            data.push(v);
        }
        let rec = Recording::new(
            vec![spec.channel_name.clone()],
            vec![data],
            spec.sample_rate_hz,
        )?;
        out.push((rec, label));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_channels_as_columns() {
        let f = write_tmp("A,B\n1,2\n3,4\n");
        let rec = load_recording_csv(f.path(), 1000.0).unwrap();
        assert_eq!(rec.n_channels(), 2);
        assert_eq!(rec.n_samples(), 2);
        assert_eq!(rec.samples(), &[vec![1.0, 3.0], vec![2.0, 4.0]]);
    }

    #[test]
    fn loads_single_zero_channel() {
        let f = write_tmp("A\n0\n0\n0\n");
        let rec = load_recording_csv(f.path(), 1000.0).unwrap();
        assert_eq!(rec.n_channels(), 1);
        assert_eq!(rec.samples()[0], vec![0.0; 3]);
    }

    #[test]
    fn crlf_is_accepted() {
        let f = write_tmp("A,B\r\n1.5,2\r\n3,-4e1\r\n");
        let rec = load_recording_csv(f.path(), 250.0).unwrap();
        assert_eq!(rec.samples(), &[vec![1.5, 3.0], vec![2.0, -40.0]]);
        assert_eq!(rec.sample_rate_hz(), 250.0);
    }

    #[test]
    fn non_numeric_cell_names_row_and_column() {
        let f = write_tmp("A,B\n1,x\n");
        let err = load_recording_csv(f.path(), 1000.0).unwrap_err();
        match &err {
            Error::NonNumeric { row, column, .. } => {
                assert_eq!(*row, 1);
                assert_eq!(column, "B");
            }
            other => panic!("unexpected error {other:?}"),
        }
        let msg = err.to_string();
        assert!(msg.contains("row 1") && msg.contains("column B"), "{msg}");
    }

    #[test]
    fn ragged_row_is_rejected() {
        let f = write_tmp("A,B\n1,2\n3\n");
        let err = load_recording_csv(f.path(), 1000.0).unwrap_err();
        assert!(matches!(
            err,
            Error::RaggedRow {
                row: 2,
                found: 1,
                expected: 2,
                ..
            }
        ));
    }

    #[test]
    fn duplicate_channel_is_rejected() {
        let f = write_tmp("A,A\n1,2\n3,4\n");
        let err = load_recording_csv(f.path(), 1000.0).unwrap_err();
        assert!(matches!(
            err,
            Error::DuplicateChannel {
                first: 0,
                second: 1,
                ..
            }
        ));
    }

    #[test]
    fn too_few_samples_is_rejected() {
        let f = write_tmp("A,B\n1,2\n");
        let err = load_recording_csv(f.path(), 1000.0).unwrap_err();
        assert!(matches!(err, Error::TooFewSamples { found: 1, .. }));
    }

    #[test]
    fn missing_file_names_path() {
        let err = load_recording_csv(Path::new("/nonexistent/rec.csv"), 1000.0).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/rec.csv"));
    }

    #[test]
    fn channel_lookup() {
        let rec = Recording::new(
            vec!["A".into(), "B".into()],
            vec![vec![1.0, 2.0], vec![3.0, 4.0]],
            1000.0,
        )
        .unwrap();
        let b = rec.channel("B").unwrap();
        assert_eq!(b.data, &[3.0, 4.0]);
        assert_eq!(b.sample_rate_hz, 1000.0);

        let single = Recording::new(vec!["A".into()], vec![vec![5.0, 6.0]], 10.0).unwrap();
        assert_eq!(single.channel("A").unwrap().data, &[5.0, 6.0]);
        let err = single.channel("TP7").unwrap_err();
        match err {
            Error::UnknownChannel { available, .. } => assert_eq!(available, vec!["A"]),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn synthetic_counts_and_labels() {
        let spec = SynthSpec {
            n_subjects: 1,
            duration_s: 2.0,
            sample_rate_hz: 100.0,
            ..SynthSpec::default()
        };
        let recs = generate_synthetic(&spec).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].1, Label::Alert);
        assert_eq!(recs[1].1, Label::Fatigue);
        for (r, _) in &recs {
            assert_eq!(r.n_samples(), 200);
        }
    }

    #[test]
    fn synthetic_is_seed_deterministic() {
        let spec = SynthSpec {
            n_subjects: 2,
            duration_s: 5.0,
            ..SynthSpec::default()
        };
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        for ((ra, _), (rb, _)) in a.iter().zip(&b) {
            let bits_a: Vec<u64> = ra.samples()[0].iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = rb.samples()[0].iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
        let c = generate_synthetic(&SynthSpec { seed: 7, ..spec }).unwrap();
        assert_ne!(a[0].0.samples(), c[0].0.samples());
    }

    #[test]
    fn synthetic_alert_std_matches_parameter() {
        let spec = SynthSpec {
            n_subjects: 1,
            ..SynthSpec::default()
        };
        let recs = generate_synthetic(&spec).unwrap();
        let data = &recs[0].0.samples()[0];
        assert_eq!(data.len(), 300_000);
        let n = data.len() as f64;
        let mean = data.iter().sum::<f64>() / n;
        let var = data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let std = var.sqrt();
        assert!((9.5..=10.5).contains(&std), "alert std {std}");
    }

    #[test]
    fn synthetic_rejects_inverted_classes() {
        let spec = SynthSpec {
            fatigue_std_uv: 5.0,
            ..SynthSpec::default()
        };
        assert!(generate_synthetic(&spec).is_err());
    }
}
