//! Window-by-window replay of a recording through a trained model, with
//! wall-clock timing of each decision.

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::ensemble::BaggedModel;
use crate::error::{Error, Result};
use crate::features::window_features;
use crate::mcd;
use crate::signal_io::Recording;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamDecision {
    pub window_start_s: f64,
    pub window_end_time_s: f64,
    pub label: u8,
    pub vote_fraction: f64,
    /// From arrival of the window's last sample to the decision.
    pub processing_wall_time_s: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamSummary {
    pub n_windows: usize,
    pub window_s: f64,
    pub step_s: f64,
    pub mean_processing_s: f64,
    pub max_processing_s: f64,
    /// `window_s + mean_processing_s`.
    pub detection_delay_s: f64,
    pub fatigue_windows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamReport {
    pub channel_name: String,
    pub summary: StreamSummary,
    pub decisions: Vec<StreamDecision>,
}

impl StreamReport {
    /// Label held by the majority of windows; ties report alert.
    pub fn majority_label(&self) -> u8 {
        u8::from(2 * self.summary.fatigue_windows > self.summary.n_windows)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StreamOptions {
    /// Pace sample arrival at the recording's sampling rate.
    pub realtime: bool,
}

/// Feeds the model's channel through a ring buffer one step at a time and
/// classifies every complete window. `on_decision` sees each decision as
/// soon as it is made.
pub fn stream_recording<F>(
    model: &BaggedModel,
    rec: &Recording,
    opts: StreamOptions,
    mut on_decision: F,
) -> Result<StreamReport>
where
    F: FnMut(&StreamDecision),
{
    let ch = rec
        .channel(&model.channel_name)
        .map_err(|_| Error::ChannelMismatch {
            expected: model.channel_name.clone(),
            available: rec.channel_names().to_vec(),
        })?;
    let windowing = model.windowing();
    let fs = ch.sample_rate_hz;
    let (w, s) = windowing.lengths(fs)?;
    if ch.len() < w {
        return Err(Error::NoWindows {
            samples: ch.len(),
            window: w,
        });
    }
    let mcd_cfg = model.mcd();
    let c0 = mcd::factor_for(&mcd_cfg)?;

    let mut buffer: VecDeque<f64> = VecDeque::with_capacity(w + s);
    let mut decisions = Vec::new();
    let mut fed = 0usize;
    let mut window_end = w;
    let clock = Instant::now();
    while window_end <= ch.len() {
        if opts.realtime {
            let due = Duration::from_secs_f64(window_end as f64 / fs);
            if let Some(wait) = due.checked_sub(clock.elapsed()) {
                std::thread::sleep(wait);
            }
        }
        buffer.extend(&ch.data[fed..window_end]);
        fed = window_end;
        let arrived = Instant::now();
        while buffer.len() > w {
            buffer.pop_front();
        }
        let start = window_end - w;
        let features = window_features(
            buffer.make_contiguous(),
            mcd_cfg.alpha,
            c0,
            start as f64 / fs,
        )?;
        let pred = model.predict(&features);
        let decision = StreamDecision {
            window_start_s: start as f64 / fs,
            window_end_time_s: window_end as f64 / fs,
            label: pred.label,
            vote_fraction: pred.vote_fraction,
            processing_wall_time_s: arrived.elapsed().as_secs_f64(),
        };
        on_decision(&decision);
        decisions.push(decision);
        window_end += s;
    }

    let n = decisions.len();
    let mean = decisions
        .iter()
        .map(|d| d.processing_wall_time_s)
        .sum::<f64>()
        / n as f64;
    let max = decisions
        .iter()
        .map(|d| d.processing_wall_time_s)
        .fold(0.0, f64::max);
    Ok(StreamReport {
        channel_name: model.channel_name.clone(),
        summary: StreamSummary {
            n_windows: n,
            window_s: windowing.window_s,
            step_s: windowing.step_s,
            mean_processing_s: mean,
            max_processing_s: max,
            detection_delay_s: windowing.window_s + mean,
            fatigue_windows: decisions.iter().filter(|d| d.label == 1).count(),
        },
        decisions,
    })
}
