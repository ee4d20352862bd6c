//! Empirical CDF, generalized-inverse quantile and one-sided trimmed means.
//!
//! All functions are step functions of the order statistics; nothing is
//! interpolated. Ties at a trimming threshold are kept on both sides.

use crate::EstimationError;

/// Empirical distribution of a finite sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    pub fn new(mut values: Vec<f64>) -> Result<Self, EstimationError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(EstimationError::EmptySample);
        }
        values.sort_by(f64::total_cmp);
        Ok(Ecdf { sorted: values })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted_values(&self) -> &[f64] {
        &self.sorted
    }

    pub fn mean(&self) -> f64 {
        self.sorted.iter().sum::<f64>() / self.len() as f64
    }

    /// `#{values <= y} / n`.
    pub fn eval(&self, y: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= y) as f64 / self.len() as f64
    }

    /// Smallest sample value whose ECDF reaches `q`. Arguments at or below 0
    /// return the minimum and arguments above 1 the maximum.
    pub fn quantile(&self, q: f64) -> f64 {
        self.sorted[self.quantile_rank(q) - 1]
    }

    /// Like [`Self::quantile`], also reporting whether `q` fell outside `(0, 1]`.
    pub fn quantile_checked(&self, q: f64) -> (f64, bool) {
        (self.quantile(q), !(q > 0.0 && q <= 1.0))
    }

    /// Largest sample value `y` with `#{values >= y} / n >= p`.
    pub fn upper_quantile(&self, p: f64) -> f64 {
        self.sorted[self.len() - self.quantile_rank(p)]
    }

    /// 1-based rank `k` of the order statistic returned by [`Self::quantile`]:
    /// the smallest `k` with `k / n >= q`, clamped to `1..=n`.
    fn quantile_rank(&self, q: f64) -> usize {
        let n = self.len();
        let nf = n as f64;
        if q.is_nan() || q <= 0.0 {
            return 1;
        }
        if q >= 1.0 {
            return n;
        }
        // `ceil(q n)` can be off by one in floating point; settle against the
        // same `k / n` expression that `eval` uses.
        let mut k = ((q * nf).ceil() as usize).clamp(1, n);
        while k > 1 && (k - 1) as f64 / nf >= q {
            k -= 1;
        }
        while k < n && (k as f64) / nf < q {
            k += 1;
        }
        k
    }

    /// Mean of the values at or below `quantile(p)`.
    pub fn trimmed_mean_lower(&self, p: f64) -> Result<f64, EstimationError> {
        check_trim(p)?;
        let threshold = self.quantile(p);
        let kept = &self.sorted[..self.sorted.partition_point(|&v| v <= threshold)];
        mean_of(kept, p)
    }

    /// Mean of the values at or above the upper `p` threshold, the
    /// `ceil(p n)`-th largest value (the mirror image of `quantile(p)`).
    pub fn trimmed_mean_upper(&self, p: f64) -> Result<f64, EstimationError> {
        check_trim(p)?;
        let threshold = self.upper_quantile(p);
        let kept = &self.sorted[self.sorted.partition_point(|&v| v < threshold)..];
        mean_of(kept, p)
    }
}

fn check_trim(p: f64) -> Result<(), EstimationError> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(EstimationError::DegenerateTrim(p))
    }
}

fn mean_of(kept: &[f64], p: f64) -> Result<f64, EstimationError> {
    if kept.is_empty() {
        return Err(EstimationError::DegenerateTrim(p));
    }
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}
