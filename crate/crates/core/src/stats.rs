//! Sample summaries and the unequal-variance (Welch) two-sample t-test.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsSummary {
    #[serde(rename = "M")]
    pub mean: f64,
    #[serde(rename = "SD")]
    pub sd: f64,
    #[serde(rename = "N")]
    pub n: usize,
}

impl StatsSummary {
    pub fn new(mean: f64, sd: f64, n: usize) -> Option<Self> {
        (n >= 2 && sd >= 0.0 && mean.is_finite() && sd.is_finite()).then_some(Self { mean, sd, n })
    }

    /// Mean and sample standard deviation (n - 1 denominator).
    pub fn from_samples(samples: &[f64]) -> Option<Self> {
        let n = samples.len();
        if n < 2 {
            return None;
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let ss: f64 = samples.iter().map(|x| (x - mean).powi(2)).sum();
        Self::new(mean, (ss / (n - 1) as f64).sqrt(), n)
    }

    fn var_of_mean(&self) -> f64 {
        self.sd * self.sd / self.n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    /// Two-tailed.
    pub p: f64,
}

/// Two-tailed p-value of Student's t with `df` degrees of freedom.
pub fn student_t_two_tailed(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    if t == 0.0 {
        return 1.0;
    }
    beta_reg(df / 2.0, 0.5, df / (df + t * t))
}

/// `t = (Ma - Mb) / sqrt(SDa²/Na + SDb²/Nb)`, Welch–Satterthwaite degrees of
/// freedom. With both variances zero the test degenerates: `t = 0, p = 1`
/// for equal means and `t = ±∞, p = 0` otherwise, reported with
/// `Na + Nb - 2` degrees of freedom.
pub fn welch_t_test(a: &StatsSummary, b: &StatsSummary) -> WelchResult {
    let (va, vb) = (a.var_of_mean(), b.var_of_mean());
    let diff = a.mean - b.mean;
    let se2 = va + vb;
    if se2 == 0.0 {
        let df = (a.n + b.n - 2) as f64;
        return if diff == 0.0 {
            WelchResult { t: 0.0, df, p: 1.0 }
        } else {
            WelchResult { t: diff.signum() * f64::INFINITY, df, p: 0.0 }
        };
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (va * va / (a.n - 1) as f64 + vb * vb / (b.n - 1) as f64);
    WelchResult { t, df, p: student_t_two_tailed(t, df) }
}
