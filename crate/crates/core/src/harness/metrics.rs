//! Aggregate statistics for the experiment outputs.

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Success proportion with its Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proportion {
    pub successes: u64,
    pub samples: u64,
    pub p: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Proportion {
    pub fn new(successes: u64, samples: u64) -> Self {
        let (lo, hi) = wilson(successes, samples, Z95);
        let p = if samples == 0 { 0.0 } else { successes as f64 / samples as f64 };
        Proportion { successes, samples, p, lo, hi }
    }

    /// Intervals share no point.
    pub fn disjoint_from(&self, other: &Proportion) -> bool {
        self.lo > other.hi || other.lo > self.hi
    }

    /// `self` lies strictly above `other`, intervals included.
    pub fn clearly_above(&self, other: &Proportion) -> bool {
        self.lo > other.hi
    }
}

/// Wilson score interval; `(0, 1)` without samples.
pub fn wilson(successes: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let centre = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    // the interval always contains p; clamp away rounding at p = 0 or 1
    ((centre - half).clamp(0.0, p), (centre + half).clamp(p, 1.0))
}

/// Median of the finite-or-infinite values, NaN excluded; `None` when empty.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}
