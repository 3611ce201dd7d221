//! Descriptive fixed-effect statistics for comparing conditions.

use serde::{Deserialize, Serialize};

use super::{Result, SimError};

/// z for a two-sided 95% interval.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogOdds {
    pub estimate: f64,
    pub se: f64,
    pub ci95: [f64; 2],
    /// A zero cell was present and every cell got +0.5.
    pub corrected: bool,
}

/// Log of the odds ratio of being optimal, group a over group b, from
/// `(optimal, non_optimal)` counts.
pub fn log_odds_ratio(a: (u64, u64), b: (u64, u64)) -> LogOdds {
    let cells = [a.0, a.1, b.0, b.1];
    let corrected = cells.contains(&0);
    let [oa, na, ob, nb] = cells.map(|c| c as f64 + if corrected { 0.5 } else { 0.0 });
    let estimate = ((oa / na) / (ob / nb)).ln();
    let se = (1.0 / oa + 1.0 / na + 1.0 / ob + 1.0 / nb).sqrt();
    LogOdds { estimate, se, ci95: [estimate - Z95 * se, estimate + Z95 * se], corrected }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateRatio {
    pub estimate: f64,
    /// Standard error of the log ratio; infinite when group a has no events.
    pub log_se: f64,
    pub ci95: [f64; 2],
}

/// Event rate of group a over that of group b.
pub fn rate_ratio(events_a: u64, exposure_a: f64, events_b: u64, exposure_b: f64) -> Result<RateRatio> {
    if !(exposure_a > 0.0 && exposure_b > 0.0) {
        return Err(SimError::Stats(format!("exposures must be positive, got {exposure_a} and {exposure_b}")));
    }
    if events_b == 0 {
        return Err(SimError::Stats("zero denominator rate: the reference group has no events".into()));
    }
    let estimate = (events_a as f64 / exposure_a) / (events_b as f64 / exposure_b);
    let log_se = (1.0 / events_a as f64 + 1.0 / events_b as f64).sqrt();
    let ci95 = if events_a == 0 {
        [0.0, f64::INFINITY]
    } else {
        [estimate * (-Z95 * log_se).exp(), estimate * (Z95 * log_se).exp()]
    };
    Ok(RateRatio { estimate, log_se, ci95 })
}
