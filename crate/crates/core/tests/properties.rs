use bounded_effects::bounds::{cic_att_bounds, did_att_bounds, naive_cic, naive_did, Estimator};
use bounded_effects::dataset::{write_csv, read_csv};
use bounded_effects::strata::{proportions_multi, proportions_single};
use bounded_effects::{Direction, Group, PanelDataset, Schema, StrataProportions, UnitRecord};
use proptest::prelude::*;

fn props(pi0: f64, pi1: f64) -> StrataProportions {
    StrataProportions::from_raw(pi0, pi1, Vec::new())
}

/// Rows `(treated, s1, s2, y1, y2)`; every group keeps at least one observed unit.
fn panel() -> impl Strategy<Value = PanelDataset> {
    let row = (any::<bool>(), 0u8..10, -5.0..5.0f64, -5.0..5.0f64);
    prop::collection::vec(row, 0..40).prop_map(|rows| {
        let mut units = vec![
            UnitRecord::new("t0", Group::Treated, true, true, 0.3, 1.1),
            UnitRecord::new("c0", Group::Control, true, true, -0.2, 0.4),
        ];
        for (i, (treated, sel, y1, y2)) in rows.into_iter().enumerate() {
            let g = if treated { Group::Treated } else { Group::Control };
            // 0: never observed, 1-2: attrits after baseline, else observed twice
            let (s1, s2) = (sel > 0, sel > 2);
            // coarse values produce ties
            let y1 = if i % 3 == 0 { y1.round() } else { y1 };
            units.push(UnitRecord::new(format!("u{i}"), g, s1, s2, y1, y2));
        }
        PanelDataset::new(units)
            .unwrap()
            .with_directions(vec![Direction::Positive])
            .unwrap()
    })
}

fn shift_treated_post(ds: &PanelDataset, c: f64) -> PanelDataset {
    let units = ds
        .units()
        .map(|u| {
            let mut u = u.clone();
            if u.group == Group::Treated {
                u.y2 = u.y2.map(|y| y + c);
            }
            u
        })
        .collect();
    PanelDataset::new(units).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn full_shares_reduce_to_complete_case(ds in panel()) {
        let p = StrataProportions::point_identified();
        let did = did_att_bounds(&ds, &p).unwrap();
        let naive = naive_did(&ds).unwrap();
        prop_assert!((did.lb - naive).abs() < 1e-12 && (did.ub - naive).abs() < 1e-12);
        let cic = cic_att_bounds(&ds, &p, 19).unwrap();
        let naive = naive_cic(&ds, 19).unwrap();
        prop_assert!((cic.lb - naive).abs() < 1e-12 && (cic.ub - naive).abs() < 1e-12);
    }

    #[test]
    fn bounds_are_ordered(ds in panel(), pi0 in 0.01..=1.0f64, pi1 in 0.01..=1.0f64) {
        let p = props(pi0, pi1);
        let did = did_att_bounds(&ds, &p).unwrap();
        prop_assert!(did.lb <= did.ub);
        let cic = cic_att_bounds(&ds, &p, 19).unwrap();
        prop_assert!(cic.lb <= cic.ub);
        for row in cic.qtt_table.unwrap() {
            prop_assert!(row.lb <= row.ub, "q={} lb={} ub={}", row.q, row.lb, row.ub);
        }
    }

    #[test]
    fn width_shrinks_as_shares_grow(ds in panel(), a in 0.01..=1.0f64, b in 0.01..=1.0f64, pi0 in 0.01..=1.0f64) {
        let (small, large) = if a <= b { (a, b) } else { (b, a) };
        let narrow = did_att_bounds(&ds, &props(pi0, large)).unwrap();
        let wide = did_att_bounds(&ds, &props(pi0, small)).unwrap();
        prop_assert!(wide.lb <= narrow.lb + 1e-12 && narrow.ub <= wide.ub + 1e-12);
        let narrow = did_att_bounds(&ds, &props(large, pi0)).unwrap();
        let wide = did_att_bounds(&ds, &props(small, pi0)).unwrap();
        prop_assert!(wide.lb <= narrow.lb + 1e-12 && narrow.ub <= wide.ub + 1e-12);
    }

    #[test]
    fn treated_post_shift_moves_bounds(ds in panel(), c in -3.0..3.0f64, pi0 in 0.05..=1.0f64, pi1 in 0.05..=1.0f64) {
        let shifted = shift_treated_post(&ds, c);
        let p = props(pi0, pi1);
        let a = did_att_bounds(&ds, &p).unwrap();
        let b = did_att_bounds(&shifted, &p).unwrap();
        prop_assert!((b.lb - a.lb - c).abs() < 1e-9 && (b.ub - a.ub - c).abs() < 1e-9);
        let a = cic_att_bounds(&ds, &p, 9).unwrap();
        let b = cic_att_bounds(&shifted, &p, 9).unwrap();
        prop_assert!((b.lb - a.lb - c).abs() < 1e-9 && (b.ub - a.ub - c).abs() < 1e-9);
    }

    #[test]
    fn single_and_multi_source_agree(ds in panel()) {
        let single = proportions_single(&ds, Direction::Positive);
        let multi = proportions_multi(&ds);
        match (single, multi) {
            (Ok(s), Ok(m)) => {
                prop_assert!((s.pi0_raw - m.pi0_raw).abs() < 1e-12);
                prop_assert!((s.pi1_raw - m.pi1_raw).abs() < 1e-12);
            }
            (Err(_), Err(_)) => {}
            (s, m) => prop_assert!(false, "paths disagree: {:?} vs {:?}", s, m),
        }
    }

    #[test]
    fn csv_round_trip(ds in panel()) {
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let raw = read_csv(buf.as_slice(), &Schema::default()).unwrap();
        prop_assert_eq!(raw.units, ds.units().cloned().collect::<Vec<_>>());
        let back = PanelDataset::new(raw_units(&buf)).unwrap().with_directions(vec![Direction::Positive]).unwrap();
        prop_assert_eq!(Estimator::Did.run(&back).ok(), Estimator::Did.run(&ds).ok());
    }
}

fn raw_units(buf: &[u8]) -> Vec<UnitRecord> {
    read_csv(buf, &Schema::default()).unwrap().units
}

#[test]
fn trimming_is_sharp_when_extra_units_sit_in_one_tail() {
    // always-observed treated differences {1, 2, 3}; the single OT unit sits
    // at the top, so the lower bound is attained exactly
    let mut units = Vec::new();
    for (i, d) in [1.0, 2.0, 3.0, 10.0].iter().enumerate() {
        units.push(UnitRecord::new(format!("t{i}"), Group::Treated, true, true, 0.0, *d));
    }
    units.push(UnitRecord::new("c0", Group::Control, true, true, 0.0, 0.0));
    let ds = PanelDataset::new(units).unwrap();
    let r = did_att_bounds(&ds, &props(1.0, 0.75)).unwrap();
    assert_eq!(r.lb, 2.0);
    assert_eq!(r.ub, (2.0 + 3.0 + 10.0) / 3.0);
}
