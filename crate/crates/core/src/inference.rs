//! Bootstrap standard errors and Imbens–Manski confidence intervals for
//! partially identified parameters.
//!
//! Standard errors come from a group-stratified nonparametric bootstrap that
//! re-runs the whole pipeline, including the always-observed shares, on every
//! replicate. Replicate `b` draws from a ChaCha8 stream seeded with the master
//! seed and stream number `b`, so results do not depend on thread count or
//! scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::erf;
use thiserror::Error;

use crate::bounds::{BoundsResult, Estimator};
use crate::dataset::{Group, PanelDataset};
use crate::EstimationError;

/// Default number of bootstrap replicates.
pub const DEFAULT_BOOTSTRAP: usize = 999;
/// Default nominal coverage.
pub const DEFAULT_ALPHA: f64 = 0.95;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error("coverage level {0} must lie in (0.5, 1)")]
    InvalidAlpha(f64),
    #[error("upper bound {ub} is below lower bound {lb}")]
    InvalidBounds { lb: f64, ub: f64 },
    #[error("bootstrap needs at least 2 replicates, got {0}")]
    TooFewReplicates(usize),
    #[error("{dropped} of {n_boot} bootstrap replicates were degenerate (limit 10%)")]
    TooManyDegenerateReplicates { dropped: usize, n_boot: usize },
    #[error(transparent)]
    Estimation(#[from] EstimationError),
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal quantile, polished with Newton steps on [`normal_cdf`].
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let mut x = -std::f64::consts::SQRT_2 * erf::erfc_inv(2.0 * p);
    for _ in 0..2 {
        let density = normal_pdf(x);
        if density < 1e-300 {
            break;
        }
        x -= (normal_cdf(x) - p) / density;
    }
    x
}

/// Critical value solving
/// `Φ(z + √n (ub − lb) / max(σ_lb, σ_ub)) − Φ(−z) = alpha`.
///
/// The left side is increasing in `z`, so bisection on the bracket between the
/// one-sided and two-sided normal critical values finds the unique root. With
/// both sigmas zero the two-sided value is returned.
pub fn imbens_manski_z(
    lb: f64,
    ub: f64,
    sigma_lb: f64,
    sigma_ub: f64,
    n: usize,
    alpha: f64,
) -> Result<f64, InferenceError> {
    if !(alpha > 0.5 && alpha < 1.0) {
        return Err(InferenceError::InvalidAlpha(alpha));
    }
    if ub < lb {
        return Err(InferenceError::InvalidBounds { lb, ub });
    }
    let two_sided = normal_quantile((1.0 + alpha) / 2.0);
    let sigma = sigma_lb.max(sigma_ub);
    if sigma <= 0.0 {
        return Ok(two_sided);
    }
    let shift = (n as f64).sqrt() * (ub - lb) / sigma;
    let residual = |z: f64| normal_cdf(z + shift) - normal_cdf(-z) - alpha;

    let mut lo = normal_quantile(alpha) - 1e-9;
    let mut hi = two_sided + 1e-9;
    for _ in 0..200 {
        if hi - lo <= 1e-14 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if residual(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Bootstrap standard deviations on the asymptotic scale, `σ̂ = sd · √n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapSigmas {
    pub sigma_lb: f64,
    pub sigma_ub: f64,
    /// Post-period observed units in the original sample.
    pub n: usize,
    pub n_boot: usize,
    pub seed: u64,
    /// Replicates dropped because the pipeline failed on them.
    pub dropped: usize,
    /// `(σ̂_lb(q), σ̂_ub(q))` per quantile grid row, when the estimator has one.
    pub per_quantile: Option<Vec<(f64, f64)>>,
}

impl BootstrapSigmas {
    /// Bootstrap standard deviation of the lower-bound estimator, `σ̂ / √n`.
    pub fn se_lb(&self) -> f64 {
        self.sigma_lb / (self.n as f64).sqrt()
    }

    pub fn se_ub(&self) -> f64 {
        self.sigma_ub / (self.n as f64).sqrt()
    }
}

/// Stratified resample: each group is drawn with replacement to its own size.
pub fn resample(ds: &PanelDataset, rng: &mut impl Rng) -> Result<PanelDataset, EstimationError> {
    let mut rows = Vec::with_capacity(ds.len());
    for g in Group::BOTH {
        let members = ds.group_rows(g);
        rows.extend((0..members.len()).map(|_| members[rng.random_range(0..members.len())]));
    }
    Ok(ds.select_rows(&rows)?)
}

/// Generator for replicate `index` under `seed`.
pub fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn statistics(r: &BoundsResult) -> Vec<f64> {
    let mut out = vec![r.lb, r.ub];
    if let Some(table) = &r.qtt_table {
        out.extend(table.iter().flat_map(|row| [row.lb, row.ub]));
    }
    out
}

fn sample_sd(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (n, sum) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    let mean = sum / n as f64;
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (ss / (n - 1) as f64).sqrt()
}

/// Bootstrap standard deviations of the bound estimators.
pub fn bootstrap_sigmas(
    ds: &PanelDataset,
    estimator: &Estimator,
    n_boot: usize,
    seed: u64,
) -> Result<BootstrapSigmas, InferenceError> {
    if n_boot < 2 {
        return Err(InferenceError::TooFewReplicates(n_boot));
    }
    let draws: Vec<Option<Vec<f64>>> = (0..n_boot)
        .into_par_iter()
        .map(|b| {
            let mut rng = replicate_rng(seed, b as u64);
            let sample = resample(ds, &mut rng).ok()?;
            estimator.run(&sample).ok().map(|r| statistics(&r))
        })
        .collect();
    let kept: Vec<&Vec<f64>> = draws.iter().flatten().collect();
    let dropped = n_boot - kept.len();
    if dropped * 10 > n_boot || kept.len() < 2 {
        return Err(InferenceError::TooManyDegenerateReplicates { dropped, n_boot });
    }
    let width = kept.iter().map(|v| v.len()).min().unwrap_or(2);
    let sd = |k: usize| sample_sd(kept.iter().map(move |v| v[k]));
    let scale = (ds.n_observed_post() as f64).sqrt();
    let per_quantile = (width > 2).then(|| {
        (1..width / 2)
            .map(|i| (sd(2 * i) * scale, sd(2 * i + 1) * scale))
            .collect()
    });
    Ok(BootstrapSigmas {
        sigma_lb: sd(0) * scale,
        sigma_ub: sd(1) * scale,
        n: ds.n_observed_post(),
        n_boot,
        seed,
        dropped,
        per_quantile,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CiInterval {
    pub lo: f64,
    pub hi: f64,
    pub alpha: f64,
    pub z_alpha: f64,
    pub sigma_lb: f64,
    pub sigma_ub: f64,
    pub n: usize,
    pub n_boot: usize,
    pub seed: u64,
}

impl CiInterval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Interval `[lb − z σ̂_lb/√n, ub + z σ̂_ub/√n]` from explicit ingredients.
pub fn interval(
    lb: f64,
    ub: f64,
    sigma_lb: f64,
    sigma_ub: f64,
    n: usize,
    alpha: f64,
) -> Result<(f64, f64, f64), InferenceError> {
    let z = imbens_manski_z(lb, ub, sigma_lb, sigma_ub, n, alpha)?;
    let root_n = (n as f64).sqrt();
    Ok((lb - z * sigma_lb / root_n, ub + z * sigma_ub / root_n, z))
}

/// Confidence interval for the parameter bounded by `bounds`.
pub fn confidence_interval(
    bounds: &BoundsResult,
    sigmas: &BootstrapSigmas,
    alpha: f64,
) -> Result<CiInterval, InferenceError> {
    let (lo, hi, z_alpha) = interval(
        bounds.lb,
        bounds.ub,
        sigmas.sigma_lb,
        sigmas.sigma_ub,
        sigmas.n,
        alpha,
    )?;
    Ok(CiInterval {
        lo,
        hi,
        alpha,
        z_alpha,
        sigma_lb: sigmas.sigma_lb,
        sigma_ub: sigmas.sigma_ub,
        n: sigmas.n,
        n_boot: sigmas.n_boot,
        seed: sigmas.seed,
    })
}

/// Pointwise interval for one quantile grid row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuantileInterval {
    pub q: f64,
    pub lb: f64,
    pub ub: f64,
    pub lo: f64,
    pub hi: f64,
    pub z_alpha: f64,
}

/// Pointwise intervals along the quantile table, using per-row bootstrap sigmas.
pub fn pointwise_intervals(
    bounds: &BoundsResult,
    sigmas: &BootstrapSigmas,
    alpha: f64,
) -> Result<Vec<QuantileInterval>, InferenceError> {
    let (Some(table), Some(per_q)) = (&bounds.qtt_table, &sigmas.per_quantile) else {
        return Ok(Vec::new());
    };
    table
        .iter()
        .zip(per_q)
        .map(|(row, &(s_lb, s_ub))| {
            let (lo, hi, z_alpha) = interval(row.lb, row.ub, s_lb, s_ub, sigmas.n, alpha)?;
            Ok(QuantileInterval {
                q: row.q,
                lb: row.lb,
                ub: row.ub,
                lo,
                hi,
                z_alpha,
            })
        })
        .collect()
}
