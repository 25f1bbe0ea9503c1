//! Cross-validation and classification metrics. Fatigue (1) is the positive
//! class throughout.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ensemble::{train_ensemble, EnsembleConfig, ModelContext};
use crate::error::{Error, Result};
use crate::features::{LabeledDataset, FEATURE_NAMES, N_FEATURES};
use crate::signal_io::Label;
use crate::stats;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// Every window is its own group.
    Row,
    /// All windows of a recording share a fold.
    #[default]
    Recording,
}

/// Splits row indices into `k` shuffled, near-equal folds. Each returned
/// vector is one fold's held-out rows, ascending.
pub fn kfold_split(
    dataset: &LabeledDataset,
    k: usize,
    seed: u64,
    grouping: Grouping,
) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "k must be at least 2, got {k}"
        )));
    }
    let mut group_rows: Vec<Vec<usize>> = Vec::new();
    match grouping {
        Grouping::Row => group_rows.extend((0..dataset.len()).map(|i| vec![i])),
        Grouping::Recording => {
            let mut index: HashMap<&str, usize> = HashMap::new();
            for (i, id) in dataset.recording_ids.iter().enumerate() {
                let g = *index.entry(id.as_str()).or_insert_with(|| {
                    group_rows.push(Vec::new());
                    group_rows.len() - 1
                });
                group_rows[g].push(i);
            }
        }
    }
    if k > group_rows.len() {
        return Err(Error::TooManyFolds {
            k,
            groups: group_rows.len(),
        });
    }
    let mut order: Vec<usize> = (0..group_rows.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::new(); k];
    for (pos, g) in order.into_iter().enumerate() {
        folds[pos % k].extend_from_slice(&group_rows[g]);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn record(&mut self, predicted: u8, actual: Label) {
        match (predicted, actual) {
            (1, Label::Fatigue) => self.tp += 1,
            (1, Label::Alert) => self.fp += 1,
            (_, Label::Alert) => self.tn += 1,
            (_, Label::Fatigue) => self.fn_ += 1,
        }
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn metrics(&self) -> ConfusionMetrics {
        confusion_metrics(self)
    }
}

/// `None` marks a metric whose denominator is zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub accuracy: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn confusion_metrics(cm: &ConfusionMatrix) -> ConfusionMetrics {
    ConfusionMetrics {
        sensitivity: ratio(cm.tp, cm.tp + cm.fn_),
        specificity: ratio(cm.tn, cm.tn + cm.fp),
        accuracy: ratio(cm.tp + cm.tn, cm.total()),
    }
}

fn check_scores(scores: &[f64], labels: &[Label]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let pos = labels.iter().filter(|&&l| l == Label::Fatigue).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::InvalidArgument(
            "ROC analysis needs both classes".into(),
        ));
    }
    Ok((pos, neg))
}

/// Rank-based (Mann–Whitney) AUC; tied scores count one half.
pub fn roc_auc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    let (pos, neg) = check_scores(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j share their average.
        let mid_rank = (i + 1 + j) as f64 / 2.0;
        let n_pos = order[i..j]
            .iter()
            .filter(|&&k| labels[k] == Label::Fatigue)
            .count();
        rank_sum_pos += mid_rank * n_pos as f64;
        i = j;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Scores `>= threshold` are called fatigue.
    pub threshold: f64,
}

/// ROC points from the strictest threshold (+∞) down to the lowest score.
pub fn roc_curve(scores: &[f64], labels: &[Label]) -> Result<Vec<RocPoint>> {
    let (pos, neg) = check_scores(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            match labels[order[i]] {
                Label::Fatigue => tp += 1,
                Label::Alert => fp += 1,
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
            threshold: s,
        });
    }
    Ok(points)
}

pub fn write_roc_csv(points: &[RocPoint], path: &Path) -> Result<()> {
    let mut out = String::from("fpr,tpr,threshold\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.fpr, p.tpr, p.threshold);
    }
    std::fs::write(path, out).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    #[serde(rename = "F")]
    pub f: f64,
    pub p: f64,
    /// Set when the pooled within-group variance is zero.
    pub degenerate: bool,
}

/// One-way ANOVA between two groups, df = (1, n − 2).
pub fn anova_f_test(group0: &[f64], group1: &[f64]) -> Result<AnovaResult> {
    if group0.len() < 2 || group1.len() < 2 {
        return Err(Error::SeriesTooShort {
            operation: "anova_f_test",
            required: 2,
            found: group0.len().min(group1.len()),
        });
    }
    let (n0, n1) = (group0.len() as f64, group1.len() as f64);
    let n = n0 + n1;
    let m0 = stats::mean(group0)?;
    let m1 = stats::mean(group1)?;
    let grand = (n0 * m0 + n1 * m1) / n;
    let ss_between = n0 * (m0 - grand).powi(2) + n1 * (m1 - grand).powi(2);
    let ss_within: f64 = group0.iter().map(|v| (v - m0).powi(2)).sum::<f64>()
        + group1.iter().map(|v| (v - m1).powi(2)).sum::<f64>();
    let df_within = n - 2.0;
    let ms_between = ss_between; // df_between = 1
    let ms_within = ss_within / df_within;
    if ms_within <= 0.0 {
        return Ok(if ms_between > 0.0 {
            AnovaResult {
                f: f64::INFINITY,
                p: 0.0,
                degenerate: true,
            }
        } else {
            AnovaResult {
                f: 0.0,
                p: 1.0,
                degenerate: true,
            }
        });
    }
    let f = ms_between / ms_within;
    Ok(AnovaResult {
        f,
        p: stats::f_survival(f, 1.0, df_within),
        degenerate: false,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvConfig {
    pub k: usize,
    pub seed: u64,
    pub grouping: Grouping,
    pub ensemble: EnsembleConfig,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            k: 10,
            seed: crate::ensemble::DEFAULT_SEED,
            grouping: Grouping::Recording,
            ensemble: EnsembleConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub confusion: ConfusionMatrix,
    pub metrics: ConfusionMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PooledMetrics {
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub accuracy: Option<f64>,
    pub auc: f64,
    pub confusion: ConfusionMatrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub mean_prediction_latency_s: f64,
    pub n_predictions: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub metrics: PooledMetrics,
    pub per_fold: Vec<FoldReport>,
    /// Between-class ANOVA on each raw feature, keyed by feature name.
    pub anova: BTreeMap<String, AnovaResult>,
    pub latency: LatencyReport,
    pub k: usize,
    pub grouping: Grouping,
    pub n_rows: usize,
    /// Free-form settings recorded by the caller.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub provenance: BTreeMap<String, String>,
    /// Out-of-fold vote fraction for every row, in dataset order.
    #[serde(skip)]
    pub scores: Vec<f64>,
    #[serde(skip)]
    pub labels: Vec<Label>,
}

impl EvaluationReport {
    pub fn accuracy(&self) -> Option<f64> {
        self.metrics.accuracy
    }

    pub fn roc_curve(&self) -> Result<Vec<RocPoint>> {
        roc_curve(&self.scores, &self.labels)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is serializable")
    }

    pub fn to_text(&self) -> String {
        let pct = |v: Option<f64>| match v {
            Some(v) => format!("{:.2}%", 100.0 * v),
            None => "undefined".to_string(),
        };
        let m = &self.metrics;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{}-fold cross-validation ({} grouping), {} windows",
            self.k,
            match self.grouping {
                Grouping::Row => "row",
                Grouping::Recording => "recording",
            },
            self.n_rows
        );
        let _ = writeln!(s, "  sensitivity  {}", pct(m.sensitivity));
        let _ = writeln!(s, "  specificity  {}", pct(m.specificity));
        let _ = writeln!(s, "  accuracy     {}", pct(m.accuracy));
        let _ = writeln!(s, "  AUC          {:.4}", m.auc);
        let c = &m.confusion;
        let _ = writeln!(
            s,
            "  confusion    tp={} fp={} tn={} fn={}",
            c.tp, c.fp, c.tn, c.fn_
        );
        let _ = writeln!(s, "per-feature ANOVA (fatigue vs alert):");
        for name in FEATURE_NAMES {
            if let Some(a) = self.anova.get(name) {
                let _ = writeln!(
                    s,
                    "  {name:<16} F = {:<14.6e} p = {:.3e}{}",
                    a.f,
                    a.p,
                    if a.degenerate { " (degenerate)" } else { "" }
                );
            }
        }
        let _ = writeln!(
            s,
            "mean prediction latency: {:.3e} s/window",
            self.latency.mean_prediction_latency_s
        );
        let _ = writeln!(s, "per fold:");
        for f in &self.per_fold {
            let _ = writeln!(
                s,
                "  fold {:>2}: train {:>6} test {:>6} accuracy {}",
                f.fold,
                f.n_train,
                f.n_test,
                pct(f.metrics.accuracy)
            );
        }
        s
    }

    pub fn write_files(&self, dir: &Path) -> Result<()> {
        let io_err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| Error::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let json = dir.join("report.json");
        let mut f = std::fs::File::create(&json).map_err(io_err(&json))?;
        writeln!(f, "{}", self.to_json_pretty()).map_err(io_err(&json))?;
        let txt = dir.join("report.txt");
        std::fs::write(&txt, self.to_text()).map_err(io_err(&txt))?;
        write_roc_csv(&self.roc_curve()?, &dir.join("roc.csv"))
    }
}

/// Per-feature between-class ANOVA on raw (unnormalized) features.
pub fn feature_anova(dataset: &LabeledDataset) -> Result<BTreeMap<String, AnovaResult>> {
    let mut out = BTreeMap::new();
    for (j, name) in FEATURE_NAMES.iter().enumerate().take(N_FEATURES) {
        let (mut g0, mut g1) = (Vec::new(), Vec::new());
        for (row, label) in dataset.rows.iter().zip(&dataset.labels) {
            match label {
                Label::Alert => g0.push(row.values()[j]),
                Label::Fatigue => g1.push(row.values()[j]),
            }
        }
        out.insert(name.to_string(), anova_f_test(&g0, &g1)?);
    }
    Ok(out)
}

/// k-fold cross-validation. Each fold fits its normalizer and ensemble on
/// its own training rows only; confusion counts are pooled across folds and
/// the AUC is computed from the pooled out-of-fold vote fractions.
pub fn cross_validate(dataset: &LabeledDataset, cfg: &CvConfig) -> Result<EvaluationReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let [n_alert, n_fatigue] = dataset.class_counts();
    if n_alert == 0 || n_fatigue == 0 {
        return Err(Error::InvalidArgument(
            "cross-validation needs both classes".into(),
        ));
    }
    let folds = kfold_split(dataset, cfg.k, cfg.seed, cfg.grouping)?;
    let mut in_test = vec![false; dataset.len()];
    let mut scores = vec![f64::NAN; dataset.len()];
    let mut pooled = ConfusionMatrix::default();
    let mut per_fold = Vec::with_capacity(folds.len());
    let mut predict_time = 0.0;

    for (fold, test_idx) in folds.iter().enumerate() {
        in_test.iter_mut().for_each(|v| *v = false);
        for &i in test_idx {
            in_test[i] = true;
        }
        let train_idx: Vec<usize> = (0..dataset.len()).filter(|&i| !in_test[i]).collect();
        let train = dataset.subset(&train_idx);
        let model = train_ensemble(&train, &cfg.ensemble, &ModelContext::default())?;

        let mut cm = ConfusionMatrix::default();
        for &i in test_idx {
            let start = Instant::now();
            let pred = model.predict(&dataset.rows[i]);
            predict_time += start.elapsed().as_secs_f64();
            cm.record(pred.label, dataset.labels[i]);
            scores[i] = pred.vote_fraction;
        }
        pooled.merge(&cm);
        per_fold.push(FoldReport {
            fold,
            n_train: train_idx.len(),
            n_test: test_idx.len(),
            confusion: cm,
            metrics: cm.metrics(),
        });
    }

    let metrics = pooled.metrics();
    Ok(EvaluationReport {
        metrics: PooledMetrics {
            sensitivity: metrics.sensitivity,
            specificity: metrics.specificity,
            accuracy: metrics.accuracy,
            auc: roc_auc(&scores, &dataset.labels)?,
            confusion: pooled,
        },
        per_fold,
        anova: feature_anova(dataset)?,
        latency: LatencyReport {
            mean_prediction_latency_s: predict_time / dataset.len() as f64,
            n_predictions: dataset.len(),
        },
        k: cfg.k,
        grouping: cfg.grouping,
        n_rows: dataset.len(),
        provenance: BTreeMap::new(),
        scores,
        labels: dataset.labels.clone(),
    })
}
