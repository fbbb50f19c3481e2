use serde::{Deserialize, Serialize};

use crate::error::{DominoError, Result};

/// Thresholds for the event conditions. Every value can be overridden from a
/// `key = value` file using the field names below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub fps_hi: f64,
    pub fps_lo: f64,
    pub delay_hi_ms: f64,
    pub tbs_drop_ratio: f64,
    pub rate_gap_frac: f64,
    pub cross_traffic_frac: f64,
    pub mcs_hi: f64,
    pub mcs_lo: f64,
    pub mcs_lo_count: f64,
    pub mcs_bucket_ms: f64,
    pub harq_count: f64,
    pub trend_bucket: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            fps_hi: 27.0,
            fps_lo: 25.0,
            delay_hi_ms: 80.0,
            tbs_drop_ratio: 0.8,
            rate_gap_frac: 0.1,
            cross_traffic_frac: 0.2,
            mcs_hi: 20.0,
            mcs_lo: 10.0,
            mcs_lo_count: 10.0,
            mcs_bucket_ms: 50.0,
            harq_count: 10.0,
            trend_bucket: 10.0,
        }
    }
}

pub const CONFIG_KEYS: [&str; 12] = [
    "fps_hi",
    "fps_lo",
    "delay_hi_ms",
    "tbs_drop_ratio",
    "rate_gap_frac",
    "cross_traffic_frac",
    "mcs_hi",
    "mcs_lo",
    "mcs_lo_count",
    "mcs_bucket_ms",
    "harq_count",
    "trend_bucket",
];

impl DetectorConfig {
    /// Alternate preset that reads the HARQ threshold as "more than 20".
    pub fn table_preset() -> Self {
        DetectorConfig {
            harq_count: 20.0,
            ..Default::default()
        }
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        Some(match key {
            "fps_hi" => self.fps_hi,
            "fps_lo" => self.fps_lo,
            "delay_hi_ms" => self.delay_hi_ms,
            "tbs_drop_ratio" => self.tbs_drop_ratio,
            "rate_gap_frac" => self.rate_gap_frac,
            "cross_traffic_frac" => self.cross_traffic_frac,
            "mcs_hi" => self.mcs_hi,
            "mcs_lo" => self.mcs_lo,
            "mcs_lo_count" => self.mcs_lo_count,
            "mcs_bucket_ms" => self.mcs_bucket_ms,
            "harq_count" => self.harq_count,
            "trend_bucket" => self.trend_bucket,
            _ => return None,
        })
    }

    fn slot(&mut self, key: &str) -> Option<&mut f64> {
        Some(match key {
            "fps_hi" => &mut self.fps_hi,
            "fps_lo" => &mut self.fps_lo,
            "delay_hi_ms" => &mut self.delay_hi_ms,
            "tbs_drop_ratio" => &mut self.tbs_drop_ratio,
            "rate_gap_frac" => &mut self.rate_gap_frac,
            "cross_traffic_frac" => &mut self.cross_traffic_frac,
            "mcs_hi" => &mut self.mcs_hi,
            "mcs_lo" => &mut self.mcs_lo,
            "mcs_lo_count" => &mut self.mcs_lo_count,
            "mcs_bucket_ms" => &mut self.mcs_bucket_ms,
            "harq_count" => &mut self.harq_count,
            "trend_bucket" => &mut self.trend_bucket,
            _ => return None,
        })
    }

    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        if !(value > 0.0 && value.is_finite()) {
            return Err(DominoError::Config(format!("{key} must be positive, got {value}")));
        }
        let slot = self
            .slot(key)
            .ok_or_else(|| DominoError::Config(format!("unknown key `{key}`")))?;
        *slot = value;
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment. `preset = table`
    /// switches to [`DetectorConfig::table_preset`] before later keys apply.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = DetectorConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| DominoError::Config(format!("line {}: expected key = value", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k == "preset" {
                cfg = match v {
                    "default" => DetectorConfig::default(),
                    "table" => DetectorConfig::table_preset(),
                    other => return Err(DominoError::Config(format!("line {}: unknown preset `{other}`", i + 1))),
                };
                continue;
            }
            let value: f64 = v
                .parse()
                .map_err(|_| DominoError::Config(format!("line {}: `{v}` is not a number", i + 1)))?;
            cfg.set(k, value)
                .map_err(|e| DominoError::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(cfg)
    }

    pub fn to_kv_string(&self) -> String {
        CONFIG_KEYS
            .iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("known key")))
            .collect()
    }

    pub(crate) fn trend_bucket_len(&self) -> usize {
        self.trend_bucket.round().max(1.0) as usize
    }

    pub(crate) fn mcs_bucket_us(&self) -> u64 {
        (self.mcs_bucket_ms * 1000.0).round().max(1.0) as u64
    }
}
