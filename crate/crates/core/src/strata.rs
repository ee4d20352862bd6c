//! Principal strata and the share of always-observed units among the
//! post-period observed, per group.
//!
//! Counterfactual selection rates are imputed with a changes-in-changes
//! model for the binary selection indicator: a group's missing post-period
//! selection rate is its own baseline rate scaled by the other group's
//! proportional change. Proportions come either from a single selection
//! source with one monotonicity direction, or from several mutually
//! exclusive sources, each with its own direction.

use serde::Serialize;

use crate::dataset::{Direction, Group, PanelDataset, Tallies};
use crate::EstimationError;

/// Principal stratum by the joint potential selection `(S2(0), S2(1))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Stratum {
    /// Always observed: `(1, 1)`.
    AO,
    /// Never observed: `(0, 0)`.
    NO,
    /// Observed only in control: `(1, 0)`.
    OC,
    /// Observed only in treatment: `(0, 1)`.
    OT,
}

impl Stratum {
    pub fn from_selection(untreated: bool, treated: bool) -> Self {
        match (untreated, treated) {
            (true, true) => Stratum::AO,
            (false, false) => Stratum::NO,
            (true, false) => Stratum::OC,
            (false, true) => Stratum::OT,
        }
    }

    /// Potential selection `(S2(0), S2(1))`.
    pub fn selection(self) -> (bool, bool) {
        match self {
            Stratum::AO => (true, true),
            Stratum::NO => (false, false),
            Stratum::OC => (true, false),
            Stratum::OT => (false, true),
        }
    }

    pub const ALL: [Stratum; 4] = [Stratum::AO, Stratum::NO, Stratum::OC, Stratum::OT];
}

/// Why a per-source combination of potential selections cannot occur.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Exclusion {
    /// Two sources remove the unit in the same arm.
    MutualExclusivity,
    /// The unit would be observed-only-in-treatment for one source and
    /// observed-only-in-control for another.
    NoIntersection,
    /// The pair of `source` (0-based) contradicts its direction.
    Monotonicity { source: usize, direction: Direction },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Classification {
    Stratum(Stratum),
    Excluded(Vec<Exclusion>),
}

/// Maps per-source potential selections `(s^j(0), s^j(1))` to the overall
/// stratum, or lists every rule that rules the combination out.
pub fn classify_stratum(pairs: &[(bool, bool)], directions: &[Direction]) -> Classification {
    assert_eq!(pairs.len(), directions.len(), "one direction per source");
    let j = pairs.len();
    let mut reasons = Vec::new();

    let zeros_untreated = pairs.iter().filter(|p| !p.0).count();
    let zeros_treated = pairs.iter().filter(|p| !p.1).count();
    if zeros_untreated > 1 || zeros_treated > 1 {
        reasons.push(Exclusion::MutualExclusivity);
    }
    let has_ot = pairs.iter().any(|&p| p == (false, true));
    let has_oc = pairs.iter().any(|&p| p == (true, false));
    if has_ot && has_oc && j > 1 {
        reasons.push(Exclusion::NoIntersection);
    }
    for (source, (&pair, &direction)) in pairs.iter().zip(directions).enumerate() {
        let violates = match direction {
            Direction::Positive => pair == (true, false),
            Direction::Negative => pair == (false, true),
        };
        if violates {
            reasons.push(Exclusion::Monotonicity { source, direction });
        }
    }
    if !reasons.is_empty() {
        return Classification::Excluded(reasons);
    }

    let overall = pairs
        .iter()
        .fold((true, true), |acc, p| (acc.0 && p.0, acc.1 && p.1));
    Classification::Stratum(Stratum::from_selection(overall.0, overall.1))
}

/// A counterfactual selection rate, before and after clamping to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Imputation {
    pub value: f64,
    pub raw: f64,
    pub clamped: bool,
}

/// Missing post-period selection rate of a group: its own baseline rate
/// times the other group's post/baseline ratio.
pub fn impute_counterfactual_selection(
    s1_own: f64,
    s1_other: f64,
    s2_other: f64,
) -> Result<Imputation, EstimationError> {
    for (name, v) in [("s1_own", s1_own), ("s1_other", s1_other), ("s2_other", s2_other)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(EstimationError::InvalidArgument(format!(
                "{name} = {v} is not a probability"
            )));
        }
    }
    if s1_other == 0.0 {
        return Err(EstimationError::DivisionByZeroBaseline);
    }
    let raw = s1_own * s2_other / s1_other;
    let value = raw.clamp(0.0, 1.0);
    Ok(Imputation {
        value,
        raw,
        clamped: value != raw,
    })
}

/// Group-wise selection means feeding the proportion formulas.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionMeans {
    /// `E[S1 | G]`, indexed by group.
    pub s1: [f64; 2],
    pub s2: [f64; 2],
    /// `E[s^j_1 | G]` per source.
    pub source_t1: Vec<[f64; 2]>,
    pub source_t2: Vec<[f64; 2]>,
}

impl SelectionMeans {
    pub fn from_tallies(t: &Tallies) -> Self {
        let both = |f: &dyn Fn(Group) -> f64| [f(Group::Control), f(Group::Treated)];
        SelectionMeans {
            s1: both(&|g| t.mean_s1(g)),
            s2: both(&|g| t.mean_s2(g)),
            source_t1: (0..t.sources_t1.len())
                .map(|j| both(&|g| t.mean_source_t1(j, g)))
                .collect(),
            source_t2: (0..t.sources_t2.len())
                .map(|j| both(&|g| t.mean_source_t2(j, g)))
                .collect(),
        }
    }

    /// Single-source means: the overall indicator is the only source.
    pub fn single(s1: [f64; 2], s2: [f64; 2]) -> Self {
        SelectionMeans {
            s1,
            s2,
            source_t1: vec![s1],
            source_t2: vec![s2],
        }
    }
}

/// Counterfactual post-period selection rates of one source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SourceImputation {
    /// `E[s_2(0) | G = 1]`.
    pub untreated_in_treated: Option<Imputation>,
    /// `E[s_2(1) | G = 0]`.
    pub treated_in_control: Option<Imputation>,
}

fn impute_both(t1: [f64; 2], t2: [f64; 2]) -> SourceImputation {
    let (c, t) = (Group::Control.index(), Group::Treated.index());
    SourceImputation {
        untreated_in_treated: impute_counterfactual_selection(t1[t], t1[c], t2[c]).ok(),
        treated_in_control: impute_counterfactual_selection(t1[c], t1[t], t2[t]).ok(),
    }
}

/// Shares of always-observed units among post-period observed units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrataProportions {
    pub pi0: f64,
    pub pi1: f64,
    pub pi0_raw: f64,
    pub pi1_raw: f64,
    pub pi0_clipped: bool,
    pub pi1_clipped: bool,
    /// Per-source counterfactual selection rates (one entry on the single-source path).
    pub imputed: Vec<SourceImputation>,
}

impl StrataProportions {
    /// `pi0 = pi1 = 1`: no trimming, the complete-case contrast.
    pub fn point_identified() -> Self {
        StrataProportions::from_raw(1.0, 1.0, Vec::new())
    }

    pub fn from_raw(pi0_raw: f64, pi1_raw: f64, imputed: Vec<SourceImputation>) -> Self {
        let clip = |x: f64| x.clamp(0.0, 1.0);
        StrataProportions {
            pi0: clip(pi0_raw),
            pi1: clip(pi1_raw),
            pi0_raw,
            pi1_raw,
            pi0_clipped: clip(pi0_raw) != pi0_raw,
            pi1_clipped: clip(pi1_raw) != pi1_raw,
            imputed,
        }
    }

    /// Any imputation or proportion hit its clip.
    pub fn any_clipped(&self) -> bool {
        self.pi0_clipped
            || self.pi1_clipped
            || self.imputed.iter().any(|s| {
                s.untreated_in_treated.is_some_and(|i| i.clamped)
                    || s.treated_in_control.is_some_and(|i| i.clamped)
            })
    }
}

fn require_positive(value: f64, what: impl FnOnce() -> String) -> Result<f64, EstimationError> {
    if value > 0.0 {
        Ok(value)
    } else {
        Err(EstimationError::DegenerateDenominator(what()))
    }
}

/// Proportions under single-source monotonicity, from selection means.
pub fn proportions_single_from_means(
    m: &SelectionMeans,
    direction: Direction,
) -> Result<StrataProportions, EstimationError> {
    let (c, t) = (Group::Control.index(), Group::Treated.index());
    require_positive(m.s1[c], || "E[S1|G=0]".into())?;
    require_positive(m.s1[t], || "E[S1|G=1]".into())?;
    let imputed = impute_both(m.s1, m.s2);
    match direction {
        Direction::Positive => {
            let s2_t = require_positive(m.s2[t], || "E[S2|G=1]".into())?;
            let raw = (m.s1[t] / s2_t) * (m.s2[c] / m.s1[c]);
            Ok(StrataProportions::from_raw(1.0, raw, vec![imputed]))
        }
        Direction::Negative => {
            let s2_c = require_positive(m.s2[c], || "E[S2|G=0]".into())?;
            let raw = (m.s1[c] / s2_c) * (m.s2[t] / m.s1[t]);
            Ok(StrataProportions::from_raw(raw, 1.0, vec![imputed]))
        }
    }
}

/// Proportions under single-source monotonicity.
pub fn proportions_single(
    ds: &PanelDataset,
    direction: Direction,
) -> Result<StrataProportions, EstimationError> {
    if ds.n_sources() != 1 {
        return Err(EstimationError::InvalidArgument(format!(
            "single-source proportions need J = 1, dataset has J = {}",
            ds.n_sources()
        )));
    }
    let t = ds.tallies();
    let m = SelectionMeans::from_tallies(t);
    proportions_single_from_means(&SelectionMeans::single(m.s1, m.s2), direction)
}

/// Proportions with several mutually exclusive sources, each monotone in its
/// own direction, from selection means.
pub fn proportions_multi_from_means(
    m: &SelectionMeans,
    directions: &[Direction],
) -> Result<StrataProportions, EstimationError> {
    let n_sources = m.source_t1.len();
    if directions.len() < n_sources {
        return Err(EstimationError::DirectionMissing(directions.len()));
    }
    let (c, t) = (Group::Control.index(), Group::Treated.index());
    let s2_c = require_positive(m.s2[c], || "E[S2|G=0]".into())?;
    let s2_t = require_positive(m.s2[t], || "E[S2|G=1]".into())?;

    let mut missing_control = 0.0;
    let mut missing_treated = 0.0;
    let mut imputed = Vec::with_capacity(n_sources);
    for (j, &direction) in directions.iter().enumerate().take(n_sources) {
        let (t1, t2) = (m.source_t1[j], m.source_t2[j]);
        let imp = impute_both(t1, t2);
        match direction {
            Direction::Positive => {
                require_positive(t1[c], || format!("E[s{}_1|G=0]", j + 1))?;
                let cf = impute_counterfactual_selection(t1[t], t1[c], t2[c])?;
                missing_control += 1.0 - t2[c];
                missing_treated += 1.0 - cf.raw;
            }
            Direction::Negative => {
                require_positive(t1[t], || format!("E[s{}_1|G=1]", j + 1))?;
                let cf = impute_counterfactual_selection(t1[c], t1[t], t2[t])?;
                missing_control += 1.0 - cf.raw;
                missing_treated += 1.0 - t2[t];
            }
        }
        imputed.push(imp);
    }
    let pi0_raw = (1.0 - missing_control) / s2_c;
    let pi1_raw = (1.0 - missing_treated) / s2_t;
    Ok(StrataProportions::from_raw(pi0_raw, pi1_raw, imputed))
}

/// Proportions on the multi-source path, using the dataset's configured directions.
pub fn proportions_multi(ds: &PanelDataset) -> Result<StrataProportions, EstimationError> {
    if ds.directions().len() < ds.n_sources() {
        return Err(EstimationError::DirectionMissing(ds.directions().len()));
    }
    let m = SelectionMeans::from_tallies(ds.tallies());
    proportions_multi_from_means(&m, ds.directions())
}

/// Proportions for a dataset with configured directions: the single-source
/// formula when `J = 1`, the multi-source formula otherwise.
pub fn estimate_proportions(ds: &PanelDataset) -> Result<StrataProportions, EstimationError> {
    match ds.directions() {
        [] => Err(EstimationError::DirectionMissing(0)),
        [d] if ds.n_sources() == 1 => proportions_single(ds, *d),
        _ => proportions_multi(ds),
    }
}

/// Effects of treatment on post-period selection in each group,
/// `(E[S2(1) - S2(0) | G=1], E[S2(1) - S2(0) | G=0])`, with the missing
/// potential rates imputed.
pub fn selection_effects(m: &SelectionMeans) -> Result<(f64, f64), EstimationError> {
    let (c, t) = (Group::Control.index(), Group::Treated.index());
    let untreated_in_treated = impute_counterfactual_selection(m.s1[t], m.s1[c], m.s2[c])?;
    let treated_in_control = impute_counterfactual_selection(m.s1[c], m.s1[t], m.s2[t])?;
    Ok((
        m.s2[t] - untreated_in_treated.raw,
        treated_in_control.raw - m.s2[c],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::UnitRecord;
    use proptest::prelude::*;
    use Direction::{Negative, Positive};

    #[test]
    fn imputations_match_fixture() {
        let a = impute_counterfactual_selection(1.0, 0.2, 0.1).unwrap();
        assert!((a.value - 0.5).abs() < 1e-12);
        let b = impute_counterfactual_selection(0.2, 1.0, 0.6).unwrap();
        assert!((b.value - 0.12).abs() < 1e-12);
        let c = impute_counterfactual_selection(0.5, 0.5, 0.5).unwrap();
        assert_eq!(c.value, 0.5);
        assert!(!c.clamped);
    }

    #[test]
    fn imputation_errors_and_clamps() {
        assert_eq!(
            impute_counterfactual_selection(0.5, 0.0, 0.3),
            Err(EstimationError::DivisionByZeroBaseline)
        );
        assert!(impute_counterfactual_selection(1.2, 0.5, 0.3).is_err());
        let c = impute_counterfactual_selection(0.9, 0.3, 0.5).unwrap();
        assert!(c.clamped);
        assert_eq!(c.value, 1.0);
        assert!((c.raw - 1.5).abs() < 1e-12);
    }

    #[test]
    fn single_positive_table_values() {
        let m = SelectionMeans::single([0.2, 1.0], [0.1, 0.6]);
        let p = proportions_single_from_means(&m, Positive).unwrap();
        assert_eq!(p.pi0, 1.0);
        assert!((p.pi1_raw - (1.0 / 0.6) * (0.1 / 0.2)).abs() < 1e-15);
        assert!((p.pi1 - 0.833_333_333_333_333_3).abs() < 1e-12);
        assert!(!p.pi1_clipped);
    }

    #[test]
    fn single_clip_flag() {
        let m = SelectionMeans::single([1.0, 0.9], [0.6, 0.5]);
        let p = proportions_single_from_means(&m, Positive).unwrap();
        assert!((p.pi1_raw - 1.08).abs() < 1e-12);
        assert_eq!(p.pi1, 1.0);
        assert!(p.pi1_clipped);
    }

    #[test]
    fn single_negative_mirror() {
        let m = SelectionMeans::single([0.2, 1.0], [0.1, 0.6]);
        let p = proportions_single_from_means(&m, Negative).unwrap();
        assert_eq!(p.pi1, 1.0);
        assert!((p.pi0_raw - (0.2 / 0.1) * (0.6 / 1.0)).abs() < 1e-12);
    }

    #[test]
    fn single_no_selection() {
        let units = (0..6)
            .map(|i| {
                let g = if i % 2 == 0 { Group::Treated } else { Group::Control };
                UnitRecord::new(format!("u{i}"), g, true, true, 0.0, 1.0)
            })
            .collect();
        let ds = PanelDataset::new(units).unwrap();
        let p = proportions_single(&ds, Positive).unwrap();
        assert_eq!((p.pi0, p.pi1), (1.0, 1.0));
    }

    #[test]
    fn degenerate_denominators() {
        let m = SelectionMeans::single([0.0, 1.0], [0.0, 0.6]);
        assert!(matches!(
            proportions_single_from_means(&m, Positive),
            Err(EstimationError::DegenerateDenominator(s)) if s == "E[S1|G=0]"
        ));
        let m = SelectionMeans::single([0.5, 1.0], [0.2, 0.0]);
        assert!(matches!(
            proportions_single_from_means(&m, Positive),
            Err(EstimationError::DegenerateDenominator(s)) if s == "E[S2|G=1]"
        ));
    }

    #[test]
    fn multi_needs_directions() {
        let m = SelectionMeans {
            s1: [1.0, 1.0],
            s2: [1.0, 1.0],
            source_t1: vec![[1.0, 1.0]; 2],
            source_t2: vec![[1.0, 1.0]; 2],
        };
        assert_eq!(
            proportions_multi_from_means(&m, &[Positive]),
            Err(EstimationError::DirectionMissing(1))
        );
        let p = proportions_multi_from_means(&m, &[Positive, Negative]).unwrap();
        assert_eq!((p.pi0, p.pi1), (1.0, 1.0));
    }

    fn b(x: u8) -> bool {
        x == 1
    }

    #[test]
    fn two_source_table_enumeration() {
        use Classification::*;
        use Exclusion::*;
        let dirs = [Positive, Negative];
        let mono1 = Monotonicity { source: 0, direction: Positive };
        let mono2 = Monotonicity { source: 1, direction: Negative };
        // (s1(0), s1(1), s2(0), s2(1)) in table row order
        let expected: [((u8, u8, u8, u8), Classification); 16] = [
            ((0, 0, 0, 0), Excluded(vec![MutualExclusivity])),
            ((0, 0, 0, 1), Excluded(vec![MutualExclusivity, mono2])),
            ((0, 0, 1, 0), Excluded(vec![MutualExclusivity])),
            ((0, 0, 1, 1), Stratum(super::Stratum::NO)),
            ((1, 1, 0, 0), Stratum(super::Stratum::NO)),
            ((1, 1, 0, 1), Excluded(vec![mono2])),
            ((1, 1, 1, 0), Stratum(super::Stratum::OC)),
            ((1, 1, 1, 1), Stratum(super::Stratum::AO)),
            ((0, 1, 0, 0), Excluded(vec![MutualExclusivity])),
            ((0, 1, 0, 1), Excluded(vec![MutualExclusivity, mono2])),
            ((0, 1, 1, 0), Excluded(vec![NoIntersection])),
            ((0, 1, 1, 1), Stratum(super::Stratum::OT)),
            ((1, 0, 0, 0), Excluded(vec![MutualExclusivity, mono1])),
            ((1, 0, 0, 1), Excluded(vec![NoIntersection, mono1, mono2])),
            ((1, 0, 1, 0), Excluded(vec![MutualExclusivity, mono1])),
            ((1, 0, 1, 1), Excluded(vec![mono1])),
        ];
        for ((a0, a1, b0, b1), want) in expected {
            let got = classify_stratum(&[(b(a0), b(a1)), (b(b0), b(b1))], &dirs);
            assert_eq!(got, want, "pairs {:?}", (a0, a1, b0, b1));
        }
    }

    #[test]
    fn strata_partition_is_unique() {
        // Every surviving combination maps to the stratum of the overall product.
        for bits in 0u8..16 {
            let pairs = [(bits & 1 == 1, bits & 2 == 2), (bits & 4 == 4, bits & 8 == 8)];
            if let Classification::Stratum(s) = classify_stratum(&pairs, &[Positive, Negative]) {
                let overall = (pairs[0].0 && pairs[1].0, pairs[0].1 && pairs[1].1);
                assert_eq!(s.selection(), overall);
            }
        }
    }

    proptest! {
        #[test]
        fn selection_effect_signs_agree(s1c in 0.01..=1.0f64, s1t in 0.01..=1.0f64, rc in 0.0..=1.0f64, rt in 0.0..=1.0f64) {
            // s2 <= s1 under the absorbing state
            let m = SelectionMeans::single([s1c, s1t], [s1c * rc, s1t * rt]);
            let (et, ec) = selection_effects(&m).unwrap();
            let sign = |x: f64| if x.abs() < 1e-12 { 0 } else if x > 0.0 { 1 } else { -1 };
            prop_assert_eq!(sign(et), sign(ec));
        }

        #[test]
        fn equal_baselines_equal_effects(s1 in 0.01..=1.0f64, rc in 0.0..=1.0f64, rt in 0.0..=1.0f64) {
            let m = SelectionMeans::single([s1, s1], [s1 * rc, s1 * rt]);
            let (et, ec) = selection_effects(&m).unwrap();
            prop_assert!((et - ec).abs() < 1e-12);
        }
    }
}
