//! Synthetic panels with known principal strata and known effects.
//!
//! Each unit carries a selection unobservable `U ~ N(0, 1)` and a persistent
//! outcome factor `a = ρ U + √(1 − ρ²) e`, where `ρ` is the selection link.
//! Units that survive to the baseline are assigned a stratum by slicing `U`
//! into bands ordered `NO < OC < OT < AO`, so with `ρ > 0` the always-observed
//! have the highest outcomes. Baseline dropout is independent of everything
//! else, which keeps the always-observed share identical across groups after
//! conditioning on the baseline and makes the cross-group imputation exact.
//!
//! Untreated outcomes follow `Y_t(0) = λ_t + κ_t g(u_t)` with
//! `u_t = μ_G + σ_G a + noise · ε_t` and `g` strictly increasing. The treated
//! outcome adds `τ(u_2)` at `t = 2`. Units observed in only one arm receive an
//! extra post-period shift, which is what makes complete-case comparisons
//! misleading.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{naive_did, selection_did, Estimator, DEFAULT_GRID};
use crate::dataset::{DataError, Direction, Group, PanelDataset, UnitRecord};
use crate::empirical::Ecdf;
use crate::inference::{
    bootstrap_sigmas, confidence_interval, normal_cdf, normal_quantile, replicate_rng,
    InferenceError,
};
use crate::strata::Stratum;

/// Default Monte Carlo size for the truth oracle.
pub const DEFAULT_ORACLE_N: usize = 1_000_000;
/// Smallest oracle size accepted by [`true_values`].
pub const MIN_ORACLE_N: usize = 100_000;
/// Smallest replication count accepted by [`coverage_study`].
pub const MIN_REPS: usize = 100;

const ORACLE_SEED: u64 = 0x5EED_0AC1E;
const ORACLE_CHUNK: usize = 1 << 16;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("coverage study needs at least {MIN_REPS} replications, got {0}")]
    TooFewReps(usize),
    #[error("every replication failed to estimate")]
    AllRepsFailed,
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Data(#[from] DataError),
}

fn invalid(msg: impl Into<String>) -> SimError {
    SimError::InvalidConfig(msg.into())
}

/// Stratum probabilities among units observed at baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrataProbs {
    #[serde(default)]
    pub ao: f64,
    #[serde(default)]
    pub no: f64,
    #[serde(default)]
    pub oc: f64,
    #[serde(default)]
    pub ot: f64,
}

impl StrataProbs {
    pub fn always_observed() -> Self {
        StrataProbs { ao: 1.0, no: 0.0, oc: 0.0, ot: 0.0 }
    }

    fn sum(&self) -> f64 {
        self.ao + self.no + self.oc + self.ot
    }

    /// Upper band edges on the `U` scale for NO, OC and OT.
    fn cutoffs(&self) -> [f64; 3] {
        let c = [self.no, self.no + self.oc, self.no + self.oc + self.ot];
        c.map(normal_quantile)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupConfig {
    /// `P(S1 = 1)`.
    #[serde(default = "one")]
    pub baseline: f64,
    pub strata: StrataProbs,
    /// Location of the outcome unobservable.
    #[serde(default)]
    pub mu: f64,
    /// Scale of the outcome unobservable.
    #[serde(default = "one")]
    pub sigma: f64,
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

fn default_oracle_n() -> usize {
    DEFAULT_ORACLE_N
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeKind {
    /// `g(u) = u`: the two-way fixed effects model.
    #[default]
    Additive,
    /// `g(u) = exp(u)`.
    Exp,
    /// `g(u) = u + u³ / 3`.
    Cubic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeModel {
    #[serde(default)]
    pub kind: OutcomeKind,
    /// Period intercepts `λ_1, λ_2`.
    #[serde(default = "default_lambda")]
    pub lambda: [f64; 2],
    /// Period slopes `κ_1, κ_2`.
    #[serde(default = "default_scale")]
    pub scale: [f64; 2],
    /// Standard deviation of the transitory shock added to `u_t`.
    #[serde(default = "half")]
    pub noise_sd: f64,
}

fn default_lambda() -> [f64; 2] {
    [0.0, 1.0]
}

fn default_scale() -> [f64; 2] {
    [1.0, 1.0]
}

impl Default for OutcomeModel {
    fn default() -> Self {
        OutcomeModel {
            kind: OutcomeKind::Additive,
            lambda: default_lambda(),
            scale: default_scale(),
            noise_sd: 0.5,
        }
    }
}

impl OutcomeModel {
    /// `m(u, t)` for `t ∈ {1, 2}`.
    pub fn eval(&self, u: f64, t: usize) -> f64 {
        let g = match self.kind {
            OutcomeKind::Additive => u,
            OutcomeKind::Exp => u.exp(),
            OutcomeKind::Cubic => u + u * u * u / 3.0,
        };
        self.lambda[t - 1] + self.scale[t - 1] * g
    }

    /// Strictly increasing and finite on a grid over `[-8, 8]`, both periods.
    pub fn is_strictly_increasing(&self) -> bool {
        (1..=2).all(|t| {
            let values: Vec<f64> = (0..=1600).map(|k| self.eval(-8.0 + k as f64 * 0.01, t)).collect();
            values.iter().all(|v| v.is_finite()) && values.windows(2).all(|w| w[1] > w[0])
        })
    }
}

/// Effect `τ(u_2)` added to the post-period outcome under treatment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TreatmentEffect {
    Constant { value: f64 },
    Linear { intercept: f64, slope: f64 },
}

impl Default for TreatmentEffect {
    fn default() -> Self {
        TreatmentEffect::Constant { value: 0.0 }
    }
}

impl TreatmentEffect {
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            TreatmentEffect::Constant { value } => value,
            TreatmentEffect::Linear { intercept, slope } => intercept + slope * u,
        }
    }
}

/// Post-period outcome shift for units observed in one arm only.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StratumShift {
    #[serde(default)]
    pub oc: f64,
    #[serde(default)]
    pub ot: f64,
}

/// Several mutually exclusive reasons for missingness.
///
/// OT units go missing without treatment through the first positive source
/// and OC units go missing under treatment through the first negative one.
/// Never-observed units and baseline dropouts pick a source by `weights`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourcesConfig {
    pub directions: Vec<Direction>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpConfig {
    pub n: usize,
    #[serde(default = "half")]
    pub p_treat: f64,
    #[serde(default)]
    pub seed: u64,
    /// Correlation between the selection and outcome unobservables.
    #[serde(default)]
    pub selection_link: f64,
    #[serde(default)]
    pub stratum_shift: StratumShift,
    pub control: GroupConfig,
    pub treated: GroupConfig,
    #[serde(default)]
    pub outcome: OutcomeModel,
    #[serde(default)]
    pub effect: TreatmentEffect,
    #[serde(default)]
    pub sources: Option<SourcesConfig>,
    /// Direction assumed for single-source data. Inferred from the strata when absent.
    #[serde(default)]
    pub monotonicity: Option<Direction>,
    #[serde(default = "default_oracle_n")]
    pub oracle_n: usize,
}

impl DgpConfig {
    /// Additive outcomes, all mass on the always-observed, no selection.
    pub fn always_observed(n: usize, seed: u64) -> Self {
        let group = GroupConfig {
            baseline: 1.0,
            strata: StrataProbs::always_observed(),
            mu: 0.0,
            sigma: 1.0,
        };
        DgpConfig {
            n,
            p_treat: 0.5,
            seed,
            selection_link: 0.0,
            stratum_shift: StratumShift::default(),
            control: group,
            treated: GroupConfig { mu: 0.5, ..group },
            outcome: OutcomeModel::default(),
            effect: TreatmentEffect::Constant { value: 0.5 },
            sources: None,
            monotonicity: None,
            oracle_n: DEFAULT_ORACLE_N,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        let cfg: DgpConfig = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn group(&self, g: Group) -> &GroupConfig {
        match g {
            Group::Control => &self.control,
            Group::Treated => &self.treated,
        }
    }

    pub fn n_sources(&self) -> usize {
        self.sources.as_ref().map_or(1, |s| s.directions.len())
    }

    /// Monotonicity directions attached to generated datasets.
    pub fn directions(&self) -> Vec<Direction> {
        if let Some(s) = &self.sources {
            return s.directions.clone();
        }
        let only_oc = [&self.control, &self.treated]
            .iter()
            .all(|g| g.strata.ot == 0.0)
            && [&self.control, &self.treated].iter().any(|g| g.strata.oc > 0.0);
        vec![self.monotonicity.unwrap_or(if only_oc {
            Direction::Negative
        } else {
            Direction::Positive
        })]
    }

    /// Population always-observed shares among post-period observed units.
    pub fn analytic_pi(&self) -> (f64, f64) {
        let c = &self.control.strata;
        let t = &self.treated.strata;
        (c.ao / (c.ao + c.oc), t.ao / (t.ao + t.ot))
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.n < 2 {
            return Err(invalid("n must be at least 2"));
        }
        if !(self.p_treat > 0.0 && self.p_treat < 1.0) {
            return Err(invalid("p_treat must lie in (0, 1)"));
        }
        if !(-1.0..=1.0).contains(&self.selection_link) {
            return Err(invalid("selection_link must lie in [-1, 1]"));
        }
        for g in Group::BOTH {
            let gc = self.group(g);
            let s = &gc.strata;
            if [s.ao, s.no, s.oc, s.ot].iter().any(|p| !(*p >= 0.0)) {
                return Err(invalid(format!("{g} strata probabilities must be non-negative")));
            }
            if (s.sum() - 1.0).abs() > 1e-9 {
                return Err(invalid(format!("{g} strata probabilities sum to {}, not 1", s.sum())));
            }
            if !(gc.baseline > 0.0 && gc.baseline <= 1.0) {
                return Err(invalid(format!("{g} baseline must lie in (0, 1]")));
            }
            if !(gc.sigma > 0.0 && gc.sigma.is_finite() && gc.mu.is_finite()) {
                return Err(invalid(format!("{g} needs finite mu and positive sigma")));
            }
        }
        if !(self.outcome.noise_sd >= 0.0 && self.outcome.noise_sd.is_finite()) {
            return Err(invalid("noise_sd must be non-negative"));
        }
        if !self.outcome.is_strictly_increasing() {
            return Err(invalid("outcome model is not strictly increasing in u"));
        }
        let shifts = [self.stratum_shift.oc, self.stratum_shift.ot];
        if shifts.iter().any(|v| !v.is_finite()) {
            return Err(invalid("stratum shifts must be finite"));
        }
        if let Some(src) = &self.sources {
            let j = src.directions.len();
            if j == 0 || src.weights.len() != j {
                return Err(invalid("sources need one weight per direction"));
            }
            if src.weights.iter().any(|w| !(*w >= 0.0)) || src.weights.iter().sum::<f64>() <= 0.0 {
                return Err(invalid("source weights must be non-negative with positive sum"));
            }
            let any_ot = self.control.strata.ot > 0.0 || self.treated.strata.ot > 0.0;
            let any_oc = self.control.strata.oc > 0.0 || self.treated.strata.oc > 0.0;
            if any_ot && !src.directions.contains(&Direction::Positive) {
                return Err(invalid("OT mass needs a positive source"));
            }
            if any_oc && !src.directions.contains(&Direction::Negative) {
                return Err(invalid("OC mass needs a negative source"));
            }
        }
        if self.oracle_n < MIN_ORACLE_N {
            return Err(invalid(format!("oracle_n must be at least {MIN_ORACLE_N}")));
        }
        Ok(())
    }
}

/// Everything drawn for one unit, including both potential outcomes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Draw {
    pub group: Group,
    pub s1: bool,
    pub stratum: Stratum,
    pub y1: f64,
    pub y2_untreated: f64,
    pub y2_treated: f64,
    /// Outcome unobservable at `t = 2`.
    pub u2: f64,
    /// Source responsible for baseline or never-observed missingness.
    pub source: usize,
}

impl Draw {
    pub fn s2(&self) -> bool {
        let (s0, s1) = self.stratum.selection();
        self.s1
            && match self.group {
                Group::Control => s0,
                Group::Treated => s1,
            }
    }

    pub fn effect(&self) -> f64 {
        self.y2_treated - self.y2_untreated
    }
}

type Assign<'a> = &'a dyn Fn(&GroupConfig, f64) -> Stratum;

fn band_stratum(gc: &GroupConfig, u: f64) -> Stratum {
    let [no, oc, ot] = gc.strata.cutoffs();
    if u <= no {
        Stratum::NO
    } else if u <= oc {
        Stratum::OC
    } else if u <= ot {
        Stratum::OT
    } else {
        Stratum::AO
    }
}

/// Selection as a latent index: `S2(w) = 1{U > c_w}` with group-specific
/// thresholds. Needs one of OC and OT to be empty in each group.
fn threshold_stratum(gc: &GroupConfig, u: f64) -> Stratum {
    let s = &gc.strata;
    let c_untreated = normal_quantile(s.no + s.ot);
    let c_treated = normal_quantile(s.no + s.oc);
    Stratum::from_selection(u > c_untreated, u > c_treated)
}

fn draw_unit(cfg: &DgpConfig, rng: &mut ChaCha8Rng, weights_cdf: &[f64], assign: Assign) -> Draw {
    let group = if rng.random::<f64>() < cfg.p_treat {
        Group::Treated
    } else {
        Group::Control
    };
    let gc = cfg.group(group);
    let s1 = rng.random::<f64>() < gc.baseline;
    let u: f64 = rng.sample(StandardNormal);
    let e: f64 = rng.sample(StandardNormal);
    let eps1: f64 = rng.sample(StandardNormal);
    let eps2: f64 = rng.sample(StandardNormal);
    let pick: f64 = rng.random();
    let rho = cfg.selection_link;
    let a = rho * u + (1.0 - rho * rho).sqrt() * e;
    let noise = cfg.outcome.noise_sd;
    let u1 = gc.mu + gc.sigma * a + noise * eps1;
    let u2 = gc.mu + gc.sigma * a + noise * eps2;
    let stratum = if s1 { assign(gc, u) } else { Stratum::NO };
    let shift = match stratum {
        Stratum::OC => cfg.stratum_shift.oc,
        Stratum::OT => cfg.stratum_shift.ot,
        _ => 0.0,
    };
    let y2_untreated = cfg.outcome.eval(u2, 2) + shift;
    let source = weights_cdf.iter().position(|&c| pick < c).unwrap_or(weights_cdf.len() - 1);
    Draw {
        group,
        s1,
        stratum,
        y1: cfg.outcome.eval(u1, 1),
        y2_untreated,
        y2_treated: y2_untreated + cfg.effect.eval(u2),
        u2,
        source,
    }
}

fn weights_cdf(cfg: &DgpConfig) -> Vec<f64> {
    match &cfg.sources {
        None => vec![1.0],
        Some(s) => {
            let total: f64 = s.weights.iter().sum();
            let mut acc = 0.0;
            s.weights
                .iter()
                .map(|w| {
                    acc += w / total;
                    acc
                })
                .collect()
        }
    }
}

/// Per-source indicators `(t1, t2)` for a draw.
fn source_indicators(cfg: &DgpConfig, d: &Draw) -> (Vec<bool>, Vec<bool>) {
    let src = cfg.sources.as_ref().expect("multi-source config");
    let j = src.directions.len();
    let first = |dir| src.directions.iter().position(|&x| x == dir).unwrap_or(0);
    let mut t1 = vec![true; j];
    let mut t2 = vec![true; j];
    if !d.s1 {
        t1[d.source] = false;
        t2[d.source] = false;
    } else if !d.s2() {
        let k = match d.stratum {
            Stratum::OT => first(Direction::Positive),
            Stratum::OC => first(Direction::Negative),
            _ => d.source,
        };
        t2[k] = false;
    }
    (t1, t2)
}

fn to_record(cfg: &DgpConfig, index: usize, d: &Draw) -> UnitRecord {
    let y2 = match d.group {
        Group::Control => d.y2_untreated,
        Group::Treated => d.y2_treated,
    };
    let record = UnitRecord::new(format!("u{index}"), d.group, d.s1, d.s2(), d.y1, y2);
    if cfg.sources.is_some() {
        let (t1, t2) = source_indicators(cfg, d);
        record.with_sources(t1, t2)
    } else {
        record
    }
}

/// Labels and effects of the drawn sample, for oracle checks only.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTruth {
    pub strata: Vec<Stratum>,
    /// Mean effect over treated always-observed units in the sample.
    pub att_ao: Option<f64>,
}

/// A generated dataset together with its latent labels.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub data: PanelDataset,
    pub truth: SampleTruth,
}

fn build(cfg: &DgpConfig, draws: &[Draw]) -> Result<Simulated, SimError> {
    let units = draws.iter().enumerate().map(|(i, d)| to_record(cfg, i, d)).collect();
    let data = PanelDataset::new(units)?.with_directions(cfg.directions())?;
    let effects: Vec<f64> = draws
        .iter()
        .filter(|d| d.group == Group::Treated && d.stratum == Stratum::AO)
        .map(Draw::effect)
        .collect();
    Ok(Simulated {
        data,
        truth: SampleTruth {
            strata: draws.iter().map(|d| d.stratum).collect(),
            att_ao: (!effects.is_empty()).then(|| effects.iter().sum::<f64>() / effects.len() as f64),
        },
    })
}

fn sample_draws(cfg: &DgpConfig, rng: &mut ChaCha8Rng, n: usize, assign: Assign) -> Vec<Draw> {
    let cdf = weights_cdf(cfg);
    (0..n).map(|_| draw_unit(cfg, rng, &cdf, assign)).collect()
}

/// Draw `cfg.n` units with the generator seeded by `cfg.seed`.
pub fn generate(cfg: &DgpConfig) -> Result<Simulated, SimError> {
    generate_with(cfg, &mut ChaCha8Rng::seed_from_u64(cfg.seed))
}

pub fn generate_with(cfg: &DgpConfig, rng: &mut ChaCha8Rng) -> Result<Simulated, SimError> {
    cfg.validate()?;
    build(cfg, &sample_draws(cfg, rng, cfg.n, &band_stratum))
}

/// Same draws as [`generate`], but strata come from thresholding the
/// selection index in each arm instead of being assigned from labels.
pub fn generate_threshold(cfg: &DgpConfig) -> Result<Simulated, SimError> {
    cfg.validate()?;
    for g in Group::BOTH {
        let s = &cfg.group(g).strata;
        if s.oc > 0.0 && s.ot > 0.0 {
            return Err(invalid(format!(
                "{g}: a single selection index cannot produce both OC and OT units"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    build(cfg, &sample_draws(cfg, &mut rng, cfg.n, &threshold_stratum))
}

/// Population quantities under a DGP.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimTruth {
    pub true_att_ao: f64,
    /// `(q, QTT_AO(q))` on the default interior grid.
    pub true_qtt_ao: Vec<(f64, f64)>,
    pub true_pi0: f64,
    pub true_pi1: f64,
    pub oracle_n: usize,
}

/// Brute-force truth from `oracle_n` draws with both potential outcomes and
/// both potential selections materialized. Draws use a fixed seed, so the
/// result depends on the configuration only.
pub fn true_values(cfg: &DgpConfig, oracle_n: usize) -> Result<SimTruth, SimError> {
    cfg.validate()?;
    if oracle_n < MIN_ORACLE_N {
        return Err(invalid(format!("oracle_n must be at least {MIN_ORACLE_N}")));
    }
    let chunks = oracle_n.div_ceil(ORACLE_CHUNK);
    let parts: Vec<Vec<Draw>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = ORACLE_CHUNK.min(oracle_n - c * ORACLE_CHUNK);
            let mut rng = replicate_rng(ORACLE_SEED, c as u64);
            sample_draws(cfg, &mut rng, len, &band_stratum)
        })
        .collect();

    let mut treated_y1 = Vec::new();
    let mut treated_y0 = Vec::new();
    let mut observed = [0usize; 2];
    let mut observed_ao = [0usize; 2];
    for d in parts.iter().flatten() {
        let ao = d.stratum == Stratum::AO;
        if d.s2() {
            observed[d.group.index()] += 1;
            observed_ao[d.group.index()] += ao as usize;
        }
        if ao && d.group == Group::Treated {
            treated_y1.push(d.y2_treated);
            treated_y0.push(d.y2_untreated);
        }
    }
    if treated_y1.is_empty() || observed.contains(&0) {
        return Err(invalid("oracle drew no treated always-observed units"));
    }
    let att = treated_y1.iter().zip(&treated_y0).map(|(a, b)| a - b).sum::<f64>()
        / treated_y1.len() as f64;
    let f1 = Ecdf::new(treated_y1).map_err(|_| invalid("non-finite oracle outcomes"))?;
    let f0 = Ecdf::new(treated_y0).map_err(|_| invalid("non-finite oracle outcomes"))?;
    let qtt = (1..=DEFAULT_GRID)
        .map(|k| {
            let q = k as f64 / (DEFAULT_GRID + 1) as f64;
            (q, f1.quantile(q) - f0.quantile(q))
        })
        .collect();
    Ok(SimTruth {
        true_att_ao: att,
        true_qtt_ao: qtt,
        true_pi0: observed_ao[0] as f64 / observed[0] as f64,
        true_pi1: observed_ao[1] as f64 / observed[1] as f64,
        oracle_n,
    })
}

/// Closed-form ATT_AO for a linear effect: `τ0 + τ1 (μ1 + σ1 ρ E[U | U > c])`
/// where `c` is the treated always-observed cutoff. Constant effects return
/// the constant.
pub fn analytic_att_ao(cfg: &DgpConfig) -> f64 {
    match cfg.effect {
        TreatmentEffect::Constant { value } => value,
        TreatmentEffect::Linear { intercept, slope } => {
            let t = &cfg.treated;
            let c = t.strata.cutoffs()[2];
            let density = (-0.5 * c * c).exp() / (2.0 * std::f64::consts::PI).sqrt();
            let tail_mean = density / (1.0 - normal_cdf(c));
            intercept + slope * (t.mu + t.sigma * cfg.selection_link * tail_mean)
        }
    }
}

/// Options for [`coverage_study`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StudySpec {
    pub reps: usize,
    pub estimator: Estimator,
    pub alpha: f64,
    /// Bootstrap replicates per replication; 0 skips the confidence interval.
    pub n_boot: usize,
}

/// Mean and standard deviation across replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub mean: f64,
    pub sd: f64,
}

impl Moments {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Moments { mean, sd: var.sqrt() }
    }

    /// Monte Carlo standard error of the mean.
    pub fn se(&self, reps: usize) -> f64 {
        self.sd / (reps as f64).sqrt()
    }
}

/// Estimates from one replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RepRecord {
    pub lb: f64,
    pub ub: f64,
    pub pi0: f64,
    pub pi1: f64,
    pub clipped: bool,
    pub clamp_events: usize,
    pub ci: Option<(f64, f64)>,
    pub naive_did: f64,
    pub selection_did: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub reps: usize,
    pub n: usize,
    pub seed: u64,
    pub spec: StudySpec,
    pub truth: SimTruth,
    /// Replications that failed to estimate and were left out.
    pub failed_reps: usize,
    /// Share of replications whose estimated bounds contain the true ATT_AO.
    pub bounds_coverage: f64,
    /// Share of replications whose confidence interval contains the truth.
    pub ci_coverage: Option<f64>,
    pub pi0_hat: Moments,
    pub pi1_hat: Moments,
    pub lb: Moments,
    pub ub: Moments,
    pub naive_did: Moments,
    pub selection_did: Moments,
    /// Share of replications where a proportion or imputation was clipped.
    pub clip_rate: f64,
    /// Share of replications with at least one clamped quantile argument.
    pub clamp_rate: f64,
    #[serde(skip)]
    pub records: Vec<RepRecord>,
}

/// Containment with slack for floating-point noise in the oracle average.
fn contains(lo: f64, hi: f64, x: f64) -> bool {
    let slack = 1e-9 * x.abs().max(1.0);
    lo - slack <= x && x <= hi + slack
}

fn replication(cfg: &DgpConfig, spec: &StudySpec, r: usize) -> Option<RepRecord> {
    let mut rng = replicate_rng(cfg.seed, r as u64);
    let sim = generate_with(cfg, &mut rng).ok()?;
    let ds = &sim.data;
    let est = spec.estimator.run(ds).ok()?;
    let ci = if spec.n_boot > 0 {
        let boot_seed = cfg.seed ^ (r as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let sigmas = bootstrap_sigmas(ds, &spec.estimator, spec.n_boot, boot_seed).ok()?;
        let ci = confidence_interval(&est, &sigmas, spec.alpha).ok()?;
        Some((ci.lo, ci.hi))
    } else {
        None
    };
    Some(RepRecord {
        lb: est.lb,
        ub: est.ub,
        pi0: est.proportions.pi0,
        pi1: est.proportions.pi1,
        clipped: est.proportions.any_clipped(),
        clamp_events: est.clamp_events,
        ci,
        naive_did: naive_did(ds).ok()?,
        selection_did: selection_did(ds, None).ok()?,
    })
}

/// Repeat generate, estimate and interval construction `spec.reps` times.
/// Replication `r` draws from stream `r` of `cfg.seed`, so the report is
/// deterministic and independent of thread count.
pub fn coverage_study(cfg: &DgpConfig, spec: &StudySpec) -> Result<CoverageReport, SimError> {
    cfg.validate()?;
    if spec.reps < MIN_REPS {
        return Err(SimError::TooFewReps(spec.reps));
    }
    if spec.n_boot > 0 {
        // surface a bad alpha before spending any work
        crate::inference::imbens_manski_z(0.0, 0.0, 1.0, 1.0, 1, spec.alpha)?;
    }
    let truth = true_values(cfg, cfg.oracle_n)?;
    let outcomes: Vec<Option<RepRecord>> = (0..spec.reps)
        .into_par_iter()
        .map(|r| replication(cfg, spec, r))
        .collect();
    let records: Vec<RepRecord> = outcomes.iter().flatten().copied().collect();
    if records.is_empty() {
        return Err(SimError::AllRepsFailed);
    }
    let k = records.len() as f64;
    let share = |f: &dyn Fn(&RepRecord) -> bool| records.iter().filter(|r| f(r)).count() as f64 / k;
    let col = |f: &dyn Fn(&RepRecord) -> f64| Moments::of(&records.iter().map(f).collect::<Vec<_>>());
    let theta = truth.true_att_ao;
    Ok(CoverageReport {
        reps: spec.reps,
        n: cfg.n,
        seed: cfg.seed,
        spec: *spec,
        failed_reps: spec.reps - records.len(),
        bounds_coverage: share(&|r| contains(r.lb, r.ub, theta)),
        ci_coverage: (spec.n_boot > 0)
            .then(|| share(&|r| r.ci.is_some_and(|(lo, hi)| contains(lo, hi, theta)))),
        pi0_hat: col(&|r| r.pi0),
        pi1_hat: col(&|r| r.pi1),
        lb: col(&|r| r.lb),
        ub: col(&|r| r.ub),
        naive_did: col(&|r| r.naive_did),
        selection_did: col(&|r| r.selection_did),
        clip_rate: share(&|r| r.clipped),
        clamp_rate: share(&|r| r.clamp_events > 0),
        truth,
        records,
    })
}

/// One entry of the standard DGP battery.
#[derive(Debug, Clone, PartialEq)]
pub struct BatteryEntry {
    pub name: &'static str,
    pub config: DgpConfig,
    pub estimator: Estimator,
}

fn single_source_group(baseline: f64, mu: f64, sigma: f64) -> GroupConfig {
    GroupConfig {
        baseline,
        strata: StrataProbs { ao: 0.75, no: 0.1, oc: 0.0, ot: 0.15 },
        mu,
        sigma,
    }
}

fn two_source_group(mu: f64, sigma: f64) -> GroupConfig {
    GroupConfig {
        baseline: 0.95,
        strata: StrataProbs { ao: 0.75, no: 0.05, oc: 0.1, ot: 0.1 },
        mu,
        sigma,
    }
}

/// Six DGPs crossing additive/nonlinear outcomes, ignorable/non-ignorable
/// selection and one/two missingness sources. Additive designs pair with the
/// difference-in-differences bounds and nonlinear ones with
/// changes-in-changes.
pub fn standard_battery(n: usize, seed: u64) -> Vec<BatteryEntry> {
    let cic = Estimator::Cic { grid: DEFAULT_GRID };
    let additive = OutcomeModel::default();
    let exp = OutcomeModel {
        kind: OutcomeKind::Exp,
        lambda: [0.0, 0.5],
        scale: [1.0, 1.5],
        noise_sd: 0.3,
    };
    let cubic = OutcomeModel {
        kind: OutcomeKind::Cubic,
        lambda: [0.0, 0.5],
        scale: [1.0, 1.2],
        noise_sd: 0.3,
    };
    let two_sources = Some(SourcesConfig {
        directions: vec![Direction::Negative, Direction::Positive],
        weights: vec![0.5, 0.5],
    });
    let base = DgpConfig {
        n,
        p_treat: 0.5,
        seed,
        selection_link: 0.0,
        stratum_shift: StratumShift::default(),
        control: single_source_group(0.95, 0.0, 1.0),
        treated: single_source_group(0.9, 0.5, 1.0),
        outcome: additive,
        effect: TreatmentEffect::Constant { value: 0.5 },
        sources: None,
        monotonicity: None,
        oracle_n: DEFAULT_ORACLE_N,
    };
    vec![
        BatteryEntry {
            name: "additive-ignorable-single",
            config: base.clone(),
            estimator: Estimator::Did,
        },
        BatteryEntry {
            name: "additive-nonignorable-single",
            config: DgpConfig {
                selection_link: 0.6,
                stratum_shift: StratumShift { oc: 0.0, ot: -0.5 },
                effect: TreatmentEffect::Linear { intercept: 0.5, slope: 0.3 },
                ..base.clone()
            },
            estimator: Estimator::Did,
        },
        BatteryEntry {
            name: "nonlinear-ignorable-single",
            config: DgpConfig {
                outcome: exp,
                control: single_source_group(0.95, 0.0, 0.5),
                treated: single_source_group(0.9, 0.3, 0.6),
                ..base.clone()
            },
            estimator: cic,
        },
        BatteryEntry {
            name: "nonlinear-nonignorable-single",
            config: DgpConfig {
                outcome: cubic,
                selection_link: 0.6,
                control: single_source_group(0.95, 0.0, 0.8),
                treated: single_source_group(0.9, 0.3, 1.0),
                effect: TreatmentEffect::Linear { intercept: 0.5, slope: 0.3 },
                ..base.clone()
            },
            estimator: cic,
        },
        BatteryEntry {
            name: "additive-nonignorable-multi",
            config: DgpConfig {
                selection_link: 0.6,
                stratum_shift: StratumShift { oc: 0.5, ot: -0.5 },
                control: two_source_group(0.0, 1.0),
                treated: two_source_group(0.5, 1.0),
                sources: two_sources.clone(),
                ..base.clone()
            },
            estimator: Estimator::Did,
        },
        BatteryEntry {
            name: "nonlinear-nonignorable-multi",
            config: DgpConfig {
                outcome: cubic,
                selection_link: 0.6,
                control: two_source_group(0.0, 0.8),
                treated: two_source_group(0.3, 1.0),
                sources: two_sources,
                ..base
            },
            estimator: cic,
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_data_is_valid_and_deterministic() {
        for entry in standard_battery(500, 7) {
            let a = generate(&entry.config).unwrap();
            assert!(a.data.validate().is_empty(), "{}", entry.name);
            let b = generate(&entry.config).unwrap();
            assert_eq!(a.data.units().collect::<Vec<_>>(), b.data.units().collect::<Vec<_>>());
            assert_eq!(a.data.n_sources(), entry.config.n_sources());
        }
    }

    #[test]
    fn always_observed_has_no_missingness() {
        let sim = generate(&DgpConfig::always_observed(300, 1)).unwrap();
        assert!(sim.data.units().all(|u| u.s1 && u.s2));
        assert!(sim.truth.strata.iter().all(|s| *s == Stratum::AO));
    }

    #[test]
    fn threshold_sampler_matches_labels() {
        for entry in standard_battery(400, 3).into_iter().filter(|e| e.config.sources.is_none()) {
            let labelled = generate(&entry.config).unwrap();
            let thresholded = generate_threshold(&entry.config).unwrap();
            assert_eq!(labelled.truth, thresholded.truth, "{}", entry.name);
        }
        let multi = &standard_battery(400, 3)[4].config;
        assert!(generate_threshold(multi).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = DgpConfig::always_observed(100, 0);
        cfg.control.strata.ao = 0.9;
        assert!(matches!(cfg.validate(), Err(SimError::InvalidConfig(_))));
        let mut cfg = DgpConfig::always_observed(100, 0);
        cfg.outcome.scale = [1.0, -1.0];
        assert!(cfg.validate().is_err());
        let mut cfg = DgpConfig::always_observed(100, 0);
        cfg.outcome.kind = OutcomeKind::Exp;
        cfg.outcome.scale = [1e306, 1e306];
        assert!(cfg.validate().is_err());
        let mut cfg = DgpConfig::always_observed(100, 0);
        cfg.p_treat = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = standard_battery(100, 0).remove(4).config;
        cfg.sources.as_mut().unwrap().directions = vec![Direction::Positive, Direction::Positive];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        for entry in standard_battery(100, 9) {
            let text = toml::to_string(&entry.config).unwrap();
            assert_eq!(DgpConfig::from_toml_str(&text).unwrap(), entry.config);
        }
        let minimal = r#"
            n = 50
            [control.strata]
            ao = 1.0
            [treated.strata]
            ao = 0.9
            ot = 0.1
        "#;
        let cfg = DgpConfig::from_toml_str(minimal).unwrap();
        assert_eq!(cfg.directions(), vec![Direction::Positive]);
        assert!(DgpConfig::from_toml_str("n = 50\nbogus = 1").is_err());
    }

    #[test]
    fn directions_inferred_for_single_source() {
        let mut cfg = DgpConfig::always_observed(10, 0);
        cfg.treated.strata = StrataProbs { ao: 0.8, no: 0.1, oc: 0.1, ot: 0.0 };
        cfg.control.strata = cfg.treated.strata;
        assert_eq!(cfg.directions(), vec![Direction::Negative]);
        cfg.monotonicity = Some(Direction::Positive);
        assert_eq!(cfg.directions(), vec![Direction::Positive]);
    }

    #[test]
    fn study_requires_enough_reps() {
        let cfg = DgpConfig::always_observed(100, 0);
        let spec = StudySpec { reps: 10, estimator: Estimator::Did, alpha: 0.95, n_boot: 0 };
        assert!(matches!(coverage_study(&cfg, &spec), Err(SimError::TooFewReps(10))));
    }
}
