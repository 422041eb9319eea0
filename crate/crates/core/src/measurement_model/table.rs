use super::{ln_detection_prob, ln_missed_detection_prob, RadioParams};

/// Tabulated `ln(1 - p_d(u))` and `ln p_d(u)` for fast per-particle lookup.
///
/// Linear interpolation on a 0.01 grid; both logs are smooth in `u`, so the
/// interpolation error stays below 1e-4 in log units. Amplitudes past the
/// table end are evaluated directly.
#[derive(Debug, Clone)]
pub struct DetectionTable {
    step: f64,
    ln_missed: Vec<f64>,
    ln_detect: Vec<f64>,
    params: RadioParams,
}

impl DetectionTable {
    pub const STEP: f64 = 0.01;

    pub fn new(params: &RadioParams, u_max: f64) -> Self {
        let n = (u_max / Self::STEP).ceil() as usize + 2;
        let ln_missed: Vec<f64> = (0..n)
            .map(|i| ln_missed_detection_prob(i as f64 * Self::STEP, params))
            .collect();
        let ln_detect = (0..n)
            .map(|i| ln_detection_prob(i as f64 * Self::STEP, params))
            .collect();
        Self {
            step: Self::STEP,
            ln_missed,
            ln_detect,
            params: params.clone(),
        }
    }

    fn interp(&self, table: &[f64], u: f64) -> Option<f64> {
        let t = u.max(0.0) / self.step;
        let i = t as usize;
        if i + 1 >= table.len() {
            return None;
        }
        let f = t - i as f64;
        let (a, b) = (table[i], table[i + 1]);
        if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
            return Some(if f < 0.5 { a } else { b });
        }
        Some(a + f * (b - a))
    }

    /// `ln(1 - p_d(u))`.
    pub fn ln_missed(&self, u: f64) -> f64 {
        self.interp(&self.ln_missed, u)
            .unwrap_or_else(|| ln_missed_detection_prob(u, &self.params))
    }

    /// `ln p_d(u)`.
    pub fn ln_detect(&self, u: f64) -> f64 {
        self.interp(&self.ln_detect, u)
            .unwrap_or_else(|| (-ln_missed_detection_prob(u, &self.params).exp()).ln_1p())
    }
}
