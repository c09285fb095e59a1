use serde::{Deserialize, Serialize};

/// Compensated summation in slice order.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Order-independent sum: values are sorted before compensated summation, so
/// any permutation of the input gives a bit-identical result.
pub fn sorted_sum(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    neumaier_sum(v)
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl Estimate {
    pub const ZERO: Estimate = Estimate {
        mean: 0.0,
        std_error: 0.0,
    };

    /// Sample mean and standard error. Permutation invariant bit-for-bit.
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self::ZERO;
        }
        let mean = sorted_sum(samples) / n as f64;
        if n == 1 {
            return Self {
                mean,
                std_error: 0.0,
            };
        }
        let sq: Vec<f64> = samples.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = sorted_sum(&sq) / (n - 1) as f64;
        Self {
            mean,
            std_error: (var / n as f64).sqrt(),
        }
    }
}
