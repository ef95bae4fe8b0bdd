//! Summary statistics over independent runs.

use statrs::distribution::{ContinuousCDF, StudentsT};

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m).powi(2)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Two-sided Student-t quantile for the given confidence level.
pub fn t_quantile(confidence: f64, df: usize) -> f64 {
    let t = StudentsT::new(0.0, 1.0, df as f64).expect("positive degrees of freedom");
    t.inverse_cdf(0.5 + confidence / 2.0)
}

/// Half-width of the two-sided confidence interval of the mean; zero for a
/// single sample.
pub fn half_width(values: &[f64], confidence: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    t_quantile(confidence, n - 1) * std_dev(values) / (n as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    /// 90% half-width.
    pub half_width: f64,
    pub n: usize,
}

pub fn summarize(values: &[f64]) -> Summary {
    Summary {
        mean: mean(values),
        half_width: half_width(values, 0.90),
        n: values.len(),
    }
}
