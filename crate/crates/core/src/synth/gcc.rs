//! Simplified sender-side congestion controller: a delay-gradient trendline
//! against an adaptive threshold, AIMD on the target rate, an optional
//! fast-recovery ramp, and a congestion window that scales the pushback rate.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{DominoError, Result};
use crate::trace::GccState;

const THRESHOLD_MIN: f64 = 6.0;
const THRESHOLD_MAX: f64 = 600.0;
/// Adaptation is skipped for outliers this far above the threshold.
const MAX_ADAPT_OFFSET: f64 = 15.0;
const MAX_DELTAS: f64 = 60.0;
const ACK_WINDOW_MS: f64 = 500.0;
const SUSTAIN_MS: f64 = 200.0;
const INITIAL_RTT_MS: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GccConfig {
    pub beta: f64,
    pub additive_bps_per_s: f64,
    /// Minimum spacing between two multiplicative decreases.
    pub reaction_ms: f64,
    pub fast_recovery: bool,
    pub fast_recovery_s: f64,
    pub trend_samples: u32,
    pub trend_gain: f64,
    /// Exponential smoothing applied to the delay before the regression.
    pub trend_smoothing: f64,
    pub k_up: f64,
    pub k_down: f64,
    pub threshold_init: f64,
    pub cwnd_margin_ms: f64,
    pub min_pushback_ratio: f64,
}

impl Default for GccConfig {
    fn default() -> Self {
        GccConfig {
            beta: 0.85,
            additive_bps_per_s: 25_000.0,
            reaction_ms: 200.0,
            fast_recovery: false,
            fast_recovery_s: 2.0,
            trend_samples: 20,
            trend_gain: 4.0,
            trend_smoothing: 0.9,
            k_up: 0.0087,
            k_down: 0.039,
            threshold_init: 12.5,
            cwnd_margin_ms: 150.0,
            min_pushback_ratio: 0.1,
        }
    }
}

impl GccConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.beta > 0.0
            && self.beta < 1.0
            && self.additive_bps_per_s >= 0.0
            && self.reaction_ms >= 0.0
            && self.fast_recovery_s > 0.0
            && self.trend_samples >= 2
            && self.trend_gain > 0.0
            && (0.0..1.0).contains(&self.trend_smoothing)
            && self.k_up > 0.0
            && self.k_down > 0.0
            && (THRESHOLD_MIN..=THRESHOLD_MAX).contains(&self.threshold_init)
            && self.cwnd_margin_ms >= 0.0
            && self.min_pushback_ratio > 0.0
            && self.min_pushback_ratio <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(DominoError::Scenario("gcc parameters out of range".into()))
        }
    }
}

/// One packet group as reported back by the receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelaySample {
    pub send_ms: f64,
    pub recv_ms: f64,
}

impl DelaySample {
    pub fn delay_ms(&self) -> f64 {
        self.recv_ms - self.send_ms
    }
}

/// Contents of one feedback message as seen by the sender at `now_ms`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Feedback {
    pub now_ms: f64,
    pub samples: Vec<DelaySample>,
    pub acked_bytes: u64,
    /// Time from sending the newest acknowledged packet to now.
    pub rtt_ms: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Recovery {
    pre_cut_bps: f64,
    ramp: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct GccModel {
    cfg: GccConfig,
    min_bps: f64,
    max_bps: f64,
    target_bps: f64,
    state: GccState,
    trend: VecDeque<(f64, f64)>,
    seen: u64,
    smoothed: Option<f64>,
    threshold: f64,
    last_sample_ms: Option<f64>,
    last_update_ms: Option<f64>,
    last_decrease_ms: f64,
    normal_since_ms: Option<f64>,
    recovery: Option<Recovery>,
    acked: VecDeque<(f64, u64)>,
    outstanding: u64,
    min_rtt_ms: Option<f64>,
}

impl GccModel {
    pub fn new(cfg: GccConfig, start_bps: f64, min_bps: f64, max_bps: f64) -> Self {
        let threshold = cfg.threshold_init;
        GccModel {
            cfg,
            min_bps,
            max_bps,
            target_bps: start_bps.clamp(min_bps, max_bps),
            state: GccState::Normal,
            trend: VecDeque::new(),
            seen: 0,
            smoothed: None,
            threshold,
            last_sample_ms: None,
            last_update_ms: None,
            last_decrease_ms: f64::NEG_INFINITY,
            normal_since_ms: None,
            recovery: None,
            acked: VecDeque::new(),
            outstanding: 0,
            min_rtt_ms: None,
        }
    }

    pub fn config(&self) -> &GccConfig {
        &self.cfg
    }

    pub fn state(&self) -> GccState {
        self.state
    }

    pub fn target_bps(&self) -> f64 {
        self.target_bps
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn outstanding_bytes(&self) -> u64 {
        self.outstanding
    }

    pub fn cwnd_bytes(&self) -> u64 {
        let rtt = self.min_rtt_ms.unwrap_or(INITIAL_RTT_MS);
        (self.target_bps / 8.0 * (rtt + self.cfg.cwnd_margin_ms) / 1000.0).round() as u64
    }

    pub fn pushback_bps(&self) -> f64 {
        let cwnd = self.cwnd_bytes();
        if self.outstanding > cwnd {
            let ratio = (cwnd as f64 / self.outstanding as f64).clamp(self.cfg.min_pushback_ratio, 1.0);
            self.target_bps * ratio
        } else {
            self.target_bps
        }
    }

    pub fn on_send(&mut self, bytes: u64) {
        self.outstanding += bytes;
    }

    /// Forces a multiplicative cut by `factor`, as if an overuse had been
    /// acted on at `now_ms`.
    pub fn cut(&mut self, now_ms: f64, factor: f64) {
        if self.recovery.is_none() {
            self.recovery = Some(Recovery {
                pre_cut_bps: self.target_bps,
                ramp: None,
            });
        }
        if let Some(r) = &mut self.recovery {
            r.ramp = None;
        }
        self.target_bps = (self.target_bps * factor).max(self.min_bps);
        self.last_decrease_ms = now_ms;
        self.normal_since_ms = None;
    }

    fn acked_rate_bps(&self, now_ms: f64) -> f64 {
        let bytes: u64 = self
            .acked
            .iter()
            .filter(|(t, _)| *t > now_ms - ACK_WINDOW_MS)
            .map(|(_, b)| b)
            .sum();
        bytes as f64 * 8.0 / (ACK_WINDOW_MS / 1000.0)
    }

    /// Least-squares slope of delay against arrival time.
    fn slope(&self) -> Option<f64> {
        let n = self.trend.len() as f64;
        if n < 2.0 {
            return None;
        }
        let (mx, my) = self
            .trend
            .iter()
            .fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
        let (num, den) = self.trend.iter().fold((0.0, 0.0), |(p, q), (x, y)| {
            (p + (x - mx) * (y - my), q + (x - mx) * (x - mx))
        });
        (den > 0.0).then(|| num / den)
    }

    fn detect(&mut self, s: DelaySample) {
        let dt = self.last_sample_ms.map_or(0.0, |t| (s.recv_ms - t).clamp(0.0, 100.0));
        self.last_sample_ms = Some(s.recv_ms);
        let a = self.cfg.trend_smoothing;
        let y = self.smoothed.map_or(s.delay_ms(), |p| a * p + (1.0 - a) * s.delay_ms());
        self.smoothed = Some(y);
        self.trend.push_back((s.recv_ms, y));
        if self.trend.len() > self.cfg.trend_samples as usize {
            self.trend.pop_front();
        }
        self.seen += 1;
        let Some(slope) = self.slope() else {
            return;
        };
        let m = slope * (self.seen as f64 - 1.0).min(MAX_DELTAS) * self.cfg.trend_gain;
        self.state = if m > self.threshold {
            GccState::Overuse
        } else if m < -self.threshold {
            GccState::Underuse
        } else {
            GccState::Normal
        };
        if m.abs() <= self.threshold + MAX_ADAPT_OFFSET {
            let k = if m.abs() < self.threshold {
                self.cfg.k_down
            } else {
                self.cfg.k_up
            };
            self.threshold = (self.threshold + k * (m.abs() - self.threshold) * dt).clamp(THRESHOLD_MIN, THRESHOLD_MAX);
        }
    }

    fn update_rate(&mut self, now_ms: f64, dt_s: f64) {
        match self.state {
            GccState::Overuse => {
                if now_ms - self.last_decrease_ms >= self.cfg.reaction_ms {
                    let beta = self.cfg.beta;
                    self.cut(now_ms, beta);
                }
            }
            GccState::Underuse => self.normal_since_ms = None,
            GccState::Normal => {
                let since = *self.normal_since_ms.get_or_insert(now_ms);
                let sustained = now_ms - since >= SUSTAIN_MS && self.acked_rate_bps(now_ms) >= 0.9 * self.target_bps;
                let ramp = match &mut self.recovery {
                    Some(r) if self.cfg.fast_recovery && (sustained || r.ramp.is_some()) => {
                        let (_, slope) = *r
                            .ramp
                            .get_or_insert((now_ms, (r.pre_cut_bps - self.target_bps) / self.cfg.fast_recovery_s));
                        Some((slope, r.pre_cut_bps))
                    }
                    _ => None,
                };
                self.target_bps = match ramp {
                    Some((slope, cap)) => (self.target_bps + slope.max(self.cfg.additive_bps_per_s) * dt_s).min(cap),
                    None => self.target_bps + self.cfg.additive_bps_per_s * dt_s,
                };
                self.target_bps = self.target_bps.clamp(self.min_bps, self.max_bps);
                if self
                    .recovery
                    .is_some_and(|r| self.target_bps >= r.pre_cut_bps.min(self.max_bps))
                {
                    self.recovery = None;
                }
            }
        }
    }

    /// Processes one feedback message. `dt_s` is the time since the previous
    /// update and scales the additive increase.
    pub fn step(&mut self, fb: &Feedback, dt_s: f64) -> (f64, f64) {
        let now = fb.now_ms;
        self.outstanding = self.outstanding.saturating_sub(fb.acked_bytes);
        self.acked.push_back((now, fb.acked_bytes));
        while self.acked.front().is_some_and(|(t, _)| *t <= now - ACK_WINDOW_MS) {
            self.acked.pop_front();
        }
        if let Some(rtt) = fb.rtt_ms {
            self.min_rtt_ms = Some(self.min_rtt_ms.map_or(rtt, |m| m.min(rtt)));
        }
        for &s in &fb.samples {
            self.detect(s);
        }
        self.update_rate(now, dt_s.max(0.0));
        self.last_update_ms = Some(now);
        (self.target_bps, self.pushback_bps())
    }

    /// Like [`GccModel::step`], deriving `dt` from the previous update.
    pub fn on_feedback(&mut self, fb: &Feedback) -> (f64, f64) {
        let dt = self.last_update_ms.map_or(0.0, |t| (fb.now_ms - t).max(0.0) / 1000.0);
        self.step(fb, dt)
    }
}

pub fn gcc_step(model: &mut GccModel, feedback: &Feedback, dt_s: f64) -> (f64, f64) {
    model.step(feedback, dt_s)
}
