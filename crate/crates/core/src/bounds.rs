//! Bounds on the average and quantile treatment effects for treated
//! always-observed units.
//!
//! The difference-in-differences path trims the distribution of the
//! differenced outcome in each group by the always-observed share. The
//! changes-in-changes path trims the per-period outcome distributions and
//! maps treated baseline quantiles through the control group's
//! period-to-period transformation; integrating the quantile bounds over an
//! interior grid gives average-effect bounds.

use serde::Serialize;

use crate::dataset::{observed_diffs, Group, PanelDataset};
use crate::empirical::Ecdf;
use crate::strata::{estimate_proportions, StrataProportions};
use crate::EstimationError;

/// Default number of interior quantile grid points.
pub const DEFAULT_GRID: usize = 99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Did,
    Cic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Estimand {
    #[serde(rename = "ATT_AO")]
    AttAo,
    #[serde(rename = "QTT_AO")]
    QttAo,
}

/// Quantile bounds at one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QttRow {
    pub q: f64,
    pub lb: f64,
    pub ub: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsResult {
    pub lb: f64,
    pub ub: f64,
    pub method: Method,
    pub estimand: Estimand,
    /// Per-quantile bounds over the integration grid (changes-in-changes only).
    pub qtt_table: Option<Vec<QttRow>>,
    pub proportions: StrataProportions,
    /// Composed quantile arguments that fell outside `(0, 1]` and were clamped.
    pub clamp_events: usize,
    /// Units observed in the post period, i.e. rows entering the bounds.
    pub n_used: usize,
}

impl BoundsResult {
    pub fn width(&self) -> f64 {
        self.ub - self.lb
    }
}

/// Trimming bounds on the average effect under parallel trends for the
/// always-observed.
pub fn did_att_bounds(
    ds: &PanelDataset,
    p: &StrataProportions,
) -> Result<BoundsResult, EstimationError> {
    let treated = Ecdf::new(observed_diffs(ds, Group::Treated)?)?;
    let control = Ecdf::new(observed_diffs(ds, Group::Control)?)?;
    let lb = treated.trimmed_mean_lower(p.pi1)? - control.trimmed_mean_upper(p.pi0)?;
    let ub = treated.trimmed_mean_upper(p.pi1)? - control.trimmed_mean_lower(p.pi0)?;
    Ok(BoundsResult {
        lb,
        ub,
        method: Method::Did,
        estimand: Estimand::AttAo,
        qtt_table: None,
        proportions: p.clone(),
        clamp_events: 0,
        n_used: ds.n_observed_post(),
    })
}

/// Per-period outcome distributions of the post-period observed units.
#[derive(Debug, Clone)]
pub struct CicSamples {
    y1: [Ecdf; 2],
    y2: [Ecdf; 2],
}

impl CicSamples {
    pub fn new(ds: &PanelDataset) -> Result<Self, EstimationError> {
        let collect = |g: Group| -> Result<(Ecdf, Ecdf), EstimationError> {
            let (mut a, mut b) = (Vec::new(), Vec::new());
            for u in ds.units().filter(|u| u.group == g && u.s2) {
                if let (Some(y1), Some(y2)) = (u.y1, u.y2) {
                    a.push(y1);
                    b.push(y2);
                }
            }
            if a.is_empty() {
                return Err(EstimationError::EmptySelection(g));
            }
            Ok((Ecdf::new(a)?, Ecdf::new(b)?))
        };
        let (c1, c2) = collect(Group::Control)?;
        let (t1, t2) = collect(Group::Treated)?;
        Ok(CicSamples {
            y1: [c1, t1],
            y2: [c2, t2],
        })
    }

    /// Quantile bounds at `q` plus the number of clamped arguments.
    pub fn qtt_bounds(&self, p: &StrataProportions, q: f64) -> (f64, f64, usize) {
        let (c, t) = (Group::Control.index(), Group::Treated.index());
        let (pi0, pi1) = (p.pi0, p.pi1);
        let low = q * pi1;
        let high = q * pi1 + (1.0 - pi1);
        let mut clamps = 0;
        let mut quantile = |e: &Ecdf, arg: f64| {
            let (v, clamped) = e.quantile_checked(arg);
            clamps += clamped as usize;
            v
        };

        let treated_low = quantile(&self.y2[t], low);
        let baseline_high = quantile(&self.y1[t], high);
        let counterfactual_high = quantile(&self.y2[c], self.y1[c].eval(baseline_high) + (1.0 - pi0));

        let treated_high = quantile(&self.y2[t], high);
        let baseline_low = quantile(&self.y1[t], low);
        let counterfactual_low = quantile(&self.y2[c], self.y1[c].eval(baseline_low) - (1.0 - pi0));

        (
            treated_low - counterfactual_high,
            treated_high - counterfactual_low,
            clamps,
        )
    }

    /// Interior grid `k / (grid + 1)`, bounds at each point, and their averages.
    pub fn att_bounds(&self, p: &StrataProportions, grid: usize) -> Result<(Vec<QttRow>, usize), EstimationError> {
        if grid < 3 {
            return Err(EstimationError::InvalidArgument(format!(
                "quantile grid needs at least 3 points, got {grid}"
            )));
        }
        let mut clamps = 0;
        let rows = (1..=grid)
            .map(|k| {
                let q = k as f64 / (grid + 1) as f64;
                let (lb, ub, c) = self.qtt_bounds(p, q);
                clamps += c;
                QttRow { q, lb, ub }
            })
            .collect();
        Ok((rows, clamps))
    }
}

/// Bounds on the quantile effect at `q` for treated always-observed units.
pub fn cic_qtt_bounds(
    ds: &PanelDataset,
    p: &StrataProportions,
    q: f64,
) -> Result<(f64, f64), EstimationError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(EstimationError::InvalidArgument(format!("quantile level {q} not in (0, 1)")));
    }
    let (lb, ub, _) = CicSamples::new(ds)?.qtt_bounds(p, q);
    Ok((lb, ub))
}

/// Average-effect bounds from the quantile bounds, by midpoint averaging over
/// `grid` interior points.
pub fn cic_att_bounds(
    ds: &PanelDataset,
    p: &StrataProportions,
    grid: usize,
) -> Result<BoundsResult, EstimationError> {
    let samples = CicSamples::new(ds)?;
    let (rows, clamp_events) = samples.att_bounds(p, grid)?;
    let k = rows.len() as f64;
    let lb = rows.iter().map(|r| r.lb).sum::<f64>() / k;
    let ub = rows.iter().map(|r| r.ub).sum::<f64>() / k;
    Ok(BoundsResult {
        lb,
        ub,
        method: Method::Cic,
        estimand: Estimand::AttAo,
        qtt_table: Some(rows),
        proportions: p.clone(),
        clamp_events,
        n_used: ds.n_observed_post(),
    })
}

/// Complete-case difference in mean differenced outcomes.
pub fn naive_did(ds: &PanelDataset) -> Result<f64, EstimationError> {
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    Ok(mean(observed_diffs(ds, Group::Treated)?) - mean(observed_diffs(ds, Group::Control)?))
}

/// Complete-case changes-in-changes average effect: the treated post-period
/// quantile minus the control transformation of the treated baseline
/// quantile, averaged over the interior grid.
pub fn naive_cic(ds: &PanelDataset, grid: usize) -> Result<f64, EstimationError> {
    if grid < 3 {
        return Err(EstimationError::InvalidArgument(format!(
            "quantile grid needs at least 3 points, got {grid}"
        )));
    }
    let s = CicSamples::new(ds)?;
    let (c, t) = (Group::Control.index(), Group::Treated.index());
    let total: f64 = (1..=grid)
        .map(|k| {
            let q = k as f64 / (grid + 1) as f64;
            let rank = s.y1[c].eval(s.y1[t].quantile(q));
            s.y2[t].quantile(q) - s.y2[c].quantile(rank)
        })
        .sum();
    Ok(total / grid as f64)
}

/// Difference-in-differences on selection over all rows, for the overall
/// indicator (`None`) or a 0-based source index.
pub fn selection_did(ds: &PanelDataset, source: Option<usize>) -> Result<f64, EstimationError> {
    let t = ds.tallies();
    let change = |g: Group| match source {
        None => t.mean_s2(g) - t.mean_s1(g),
        Some(j) => t.mean_source_t2(j, g) - t.mean_source_t1(j, g),
    };
    if let Some(j) = source {
        if j >= ds.n_sources() {
            return Err(EstimationError::InvalidArgument(format!(
                "source index {j} out of range for {} sources",
                ds.n_sources()
            )));
        }
    }
    Ok(change(Group::Treated) - change(Group::Control))
}

/// A full estimation pipeline: proportions (when trimming) followed by bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Estimator {
    Did,
    Cic { grid: usize },
    NaiveDid,
    NaiveCic { grid: usize },
}

impl Estimator {
    pub fn method(&self) -> Method {
        match self {
            Estimator::Did | Estimator::NaiveDid => Method::Did,
            Estimator::Cic { .. } | Estimator::NaiveCic { .. } => Method::Cic,
        }
    }

    pub fn run(&self, ds: &PanelDataset) -> Result<BoundsResult, EstimationError> {
        match *self {
            Estimator::Did => did_att_bounds(ds, &estimate_proportions(ds)?),
            Estimator::Cic { grid } => cic_att_bounds(ds, &estimate_proportions(ds)?, grid),
            Estimator::NaiveDid => did_att_bounds(ds, &StrataProportions::point_identified()),
            Estimator::NaiveCic { grid } => {
                cic_att_bounds(ds, &StrataProportions::point_identified(), grid)
            }
        }
    }
}
