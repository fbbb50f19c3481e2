//! Window-level condition primitives. Each returns the onset timestamp (the
//! sample at which the condition first becomes satisfied) or `None` when the
//! condition does not hold. Empty inputs never hold.

use crate::trace::{bucket_mean, group_by_duration, Bucket, Timestamp};

use super::select::nearest_rank;

pub type Series = [(Timestamp, f64)];

/// Index of the first maximum and first minimum.
fn arg_extrema(s: &Series) -> Option<(usize, usize)> {
    let mut imax = 0;
    let mut imin = 0;
    for (i, &(_, v)) in s.iter().enumerate().skip(1) {
        if v > s[imax].1 {
            imax = i;
        }
        if v < s[imin].1 {
            imin = i;
        }
    }
    (!s.is_empty()).then_some((imax, imin))
}

/// Maximum above `hi`, minimum below `lo`, and the maximum precedes the
/// minimum.
pub fn peak_then_dip(s: &Series, hi: f64, lo: f64) -> Option<Timestamp> {
    let (imax, imin) = arg_extrema(s)?;
    (s[imax].1 > hi && s[imin].1 < lo && imax < imin).then(|| s[imin].0)
}

/// `ratio * max > min` with the maximum preceding the minimum.
pub fn ratio_drop(s: &Series, ratio: f64) -> Option<Timestamp> {
    let (imax, imin) = arg_extrema(s)?;
    (ratio * s[imax].1 > s[imin].1 && imax < imin).then(|| s[imin].0)
}

/// Some adjacent pair strictly decreases.
pub fn adjacent_drop(s: &Series) -> Option<Timestamp> {
    s.windows(2).find(|w| w[1].1 < w[0].1).map(|w| w[1].0)
}

pub fn first_where(s: &Series, pred: impl Fn(f64) -> bool) -> Option<Timestamp> {
    s.iter().find(|(_, v)| pred(*v)).map(|(t, _)| *t)
}

/// Means over consecutive groups of `n` samples rise at least once.
pub fn trend_up(s: &Series, n: usize) -> Option<Timestamp> {
    let means = bucket_mean(s, Bucket::Count(n));
    means.windows(2).position(|w| w[1] > w[0]).map(|k| s[(k + 1) * n].0)
}

/// Trend up and some sample above `hi`. Onset is the later of the two
/// witnesses.
pub fn trend_up_above(s: &Series, n: usize, hi: f64) -> Option<Timestamp> {
    let a = trend_up(s, n)?;
    let b = first_where(s, |v| v > hi)?;
    Some(a.max(b))
}

/// `count(flags) > threshold`; onset is the flag that crosses it.
pub fn count_above(flags: &[(Timestamp, bool)], threshold: f64) -> Option<Timestamp> {
    let need = threshold.floor().max(-1.0) as i64 + 1;
    if need <= 0 {
        return flags.first().map(|f| f.0);
    }
    flags.iter().filter(|(_, f)| *f).nth(need as usize - 1).map(|(t, _)| *t)
}

/// Fraction of samples with a positive value exceeds `frac`.
pub fn positive_fraction_above(s: &Series, frac: f64) -> Option<Timestamp> {
    if s.is_empty() {
        return None;
    }
    let positive = s.iter().filter(|(_, v)| *v > 0.0).count();
    if positive as f64 / s.len() as f64 <= frac {
        return None;
    }
    let need = (frac * s.len() as f64).floor() as usize + 1;
    s.iter()
        .filter(|(_, v)| *v > 0.0)
        .nth(need.min(positive) - 1)
        .map(|(t, _)| *t)
}

/// Per-duration-bucket percentile statistics of a series: the largest
/// bucket `p_hi_rank` percentile stays below `hi`, and more than `count`
/// buckets have a median below `lo`.
pub fn degraded_buckets(
    s: &Series,
    origin: Timestamp,
    width_us: u64,
    hi: f64,
    lo: f64,
    count: f64,
) -> Option<Timestamp> {
    let groups = group_by_duration(s, origin, width_us);
    if groups.is_empty() {
        return None;
    }
    let max_p90 = groups
        .iter()
        .filter_map(|g| nearest_rank(g, 90.0))
        .fold(f64::NEG_INFINITY, f64::max);
    if !(max_p90 < hi) {
        return None;
    }
    let need = count.floor().max(-1.0) as i64 + 1;
    let mut seen = 0i64;
    let mut bucket_start: Vec<Timestamp> = Vec::with_capacity(groups.len());
    let mut current = None;
    for &(ts, _) in s.iter().filter(|(t, _)| *t >= origin) {
        let bin = (ts.micros() - origin.micros()) / width_us;
        if current != Some(bin) {
            bucket_start.push(ts);
            current = Some(bin);
        }
    }
    for (g, start) in groups.iter().zip(bucket_start) {
        if nearest_rank(g, 50.0).is_some_and(|m| m < lo) {
            seen += 1;
            if seen >= need {
                return Some(start);
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(values: &[f64]) -> Vec<(Timestamp, f64)> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| (Timestamp::from_micros(i as u64 * 50_000), v))
            .collect()
    }

    #[test]
    fn peak_then_dip_cases() {
        assert!(peak_then_dip(&s(&[28.0, 30.0, 24.0]), 27.0, 25.0).is_some());
        assert!(peak_then_dip(&s(&[24.0, 30.0]), 27.0, 25.0).is_none());
        assert!(peak_then_dip(&s(&[]), 27.0, 25.0).is_none());
    }

    #[test]
    fn count_above_crossing() {
        let flags: Vec<(Timestamp, bool)> = (0..11).map(|i| (Timestamp::from_micros(i), true)).collect();
        assert_eq!(count_above(&flags, 10.0), Some(Timestamp::from_micros(10)));
        assert_eq!(count_above(&flags[..10], 10.0), None);
    }

    #[test]
    fn positive_fraction_threshold() {
        // 1 of 10 positive is exactly 10%: not above.
        let mut v = vec![-1.0; 9];
        v.push(5.0);
        assert!(positive_fraction_above(&s(&v), 0.1).is_none());
        v[0] = 1.0;
        assert!(positive_fraction_above(&s(&v), 0.1).is_some());
    }
}
