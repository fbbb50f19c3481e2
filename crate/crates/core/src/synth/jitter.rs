//! Receive-side jitter buffer. Buffered media is counted in milliseconds of
//! playout; the target depth follows an interarrival jitter estimate and
//! playout speed is nudged to converge on it.

use serde::{Deserialize, Serialize};

use crate::error::{DominoError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JitterConfig {
    pub min_target_ms: f64,
    pub max_target_ms: f64,
    /// Target depth is `min_target_ms + jitter_gain * jitter`.
    pub jitter_gain: f64,
    /// Playout speed while below target.
    pub slow_speed: f64,
    /// Playout speed while well above target.
    pub fast_speed: f64,
}

impl Default for JitterConfig {
    fn default() -> Self {
        JitterConfig {
            min_target_ms: 40.0,
            max_target_ms: 400.0,
            jitter_gain: 3.0,
            slow_speed: 0.9,
            fast_speed: 1.1,
        }
    }
}

impl JitterConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.min_target_ms > 0.0
            && self.min_target_ms <= self.max_target_ms
            && self.jitter_gain >= 0.0
            && self.slow_speed > 0.0
            && self.slow_speed <= 1.0
            && self.fast_speed >= 1.0;
        if ok {
            Ok(())
        } else {
            Err(DominoError::Scenario("jitter buffer parameters out of range".into()))
        }
    }
}

/// A complete frame becoming decodable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameArrival {
    pub send_ms: f64,
    pub recv_ms: f64,
}

/// What happened during one step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Playout {
    pub played_ms: f64,
    /// The buffer ran empty during this step.
    pub froze: bool,
}

#[derive(Debug, Clone)]
pub struct JitterBuffer {
    cfg: JitterConfig,
    frame_ms: f64,
    buffered_ms: f64,
    jitter_ms: f64,
    last_delay_ms: Option<f64>,
    frozen: bool,
}

impl JitterBuffer {
    pub fn new(cfg: JitterConfig, frame_ms: f64) -> Self {
        JitterBuffer {
            cfg,
            frame_ms,
            buffered_ms: 0.0,
            jitter_ms: 0.0,
            last_delay_ms: None,
            frozen: false,
        }
    }

    pub fn buffered_ms(&self) -> f64 {
        self.buffered_ms
    }

    pub fn jitter_ms(&self) -> f64 {
        self.jitter_ms
    }

    pub fn target_ms(&self) -> f64 {
        (self.cfg.min_target_ms + self.cfg.jitter_gain * self.jitter_ms)
            .clamp(self.cfg.min_target_ms, self.cfg.max_target_ms)
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn push(&mut self, a: FrameArrival) {
        let d = a.recv_ms - a.send_ms;
        if let Some(prev) = self.last_delay_ms {
            self.jitter_ms += ((d - prev).abs() - self.jitter_ms) / 16.0;
        }
        self.last_delay_ms = Some(d);
        self.buffered_ms += self.frame_ms;
        self.frozen = false;
    }

    /// Advances playout by `dt_ms`.
    pub fn play(&mut self, dt_ms: f64) -> Playout {
        if self.buffered_ms <= 0.0 {
            self.buffered_ms = 0.0;
            return Playout {
                played_ms: 0.0,
                froze: false,
            };
        }
        let target = self.target_ms();
        let speed = if self.buffered_ms < target {
            self.cfg.slow_speed
        } else if self.buffered_ms > target + 1.5 * self.frame_ms {
            self.cfg.fast_speed
        } else {
            1.0
        };
        let played = (speed * dt_ms).min(self.buffered_ms);
        self.buffered_ms -= played;
        let froze = self.buffered_ms <= 1e-9;
        if froze {
            self.buffered_ms = 0.0;
            self.frozen = true;
        }
        Playout {
            played_ms: played,
            froze,
        }
    }

    pub fn step(&mut self, arrivals: &[FrameArrival], dt_ms: f64) -> Playout {
        for &a in arrivals {
            self.push(a);
        }
        self.play(dt_ms)
    }
}

pub fn jitter_buffer_step(buffer: &mut JitterBuffer, arrivals: &[FrameArrival], dt_ms: f64) -> Playout {
    buffer.step(arrivals, dt_ms)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FRAME: f64 = 1000.0 / 30.0;

    /// Runs frames sent every `FRAME` ms with forward delay `delay(send)`,
    /// stepping 1 ms at a time. Returns the buffer level after every step.
    fn drive(buf: &mut JitterBuffer, until_ms: f64, delay: impl Fn(f64) -> f64) -> Vec<f64> {
        let mut pending: Vec<FrameArrival> = (0..)
            .map(|k| k as f64 * FRAME)
            .take_while(|&s| s < until_ms)
            .map(|s| FrameArrival {
                send_ms: s,
                recv_ms: s + delay(s),
            })
            .collect();
        pending.sort_by(|a, b| a.recv_ms.total_cmp(&b.recv_ms));
        let mut levels = Vec::new();
        let mut i = 0;
        let mut t = 0.0;
        while t < until_ms {
            t += 1.0;
            let j = pending[i..].partition_point(|a| a.recv_ms <= t) + i;
            buf.step(&pending[i..j], 1.0);
            i = j;
            levels.push(buf.buffered_ms());
        }
        levels
    }

    #[test]
    fn constant_delay_converges() {
        let mut buf = JitterBuffer::new(JitterConfig::default(), FRAME);
        let levels = drive(&mut buf, 20_000.0, |_| 50.0);
        let tail = &levels[15_000..];
        let lo = tail.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = tail.iter().cloned().fold(0.0, f64::max);
        assert!(lo > 0.0 && hi - lo <= FRAME + 1.0, "{lo}..{hi}");
        let early = &levels[10_000..11_000];
        let e_lo = early.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((e_lo - lo).abs() < 1.0);
    }

    #[test]
    fn step_delay_drains_then_rebuilds() {
        let mut buf = JitterBuffer::new(JitterConfig::default(), FRAME);
        let step_at = 10_000.0;
        let levels = drive(&mut buf, 20_000.0, |s| if s < step_at { 50.0 } else { 330.0 });
        let before = levels[step_at as usize - 100..step_at as usize]
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        assert!(before > 0.0 && before < 280.0);
        let drained = levels[step_at as usize..step_at as usize + 400]
            .iter()
            .position(|&l| l == 0.0)
            .expect("drains");
        assert!(drained < 330);
        // After the first post-step frame arrives, the level right after each
        // arrival never falls until the target is reached.
        let resume = step_at as usize + 330;
        let peaks: Vec<f64> = levels[resume..resume + 3_000]
            .windows(2)
            .filter(|w| w[1] > w[0])
            .map(|w| w[1])
            .collect();
        let target = buf.target_ms();
        let mut prev = 0.0;
        for p in peaks.iter().take_while(|&&p| p < target) {
            assert!(*p >= prev - 1e-9, "{p} < {prev}");
            prev = *p;
        }
        assert!(peaks.len() > 5);
    }

    #[test]
    fn jitter_expands_target() {
        let mut buf = JitterBuffer::new(JitterConfig::default(), FRAME);
        drive(&mut buf, 5_000.0, |_| 50.0);
        let calm = buf.target_ms();
        let mut buf2 = JitterBuffer::new(JitterConfig::default(), FRAME);
        drive(&mut buf2, 5_000.0, |s| {
            if ((s / FRAME) as u64).is_multiple_of(2) {
                50.0
            } else {
                90.0
            }
        });
        assert!(buf2.target_ms() > calm + 50.0);
    }
}
