use std::sync::Arc;

use proptest::prelude::*;

use supcert_core::basis::{build_basis, independence_range, GramBasis, MuSpec};
use supcert_core::conditions::{classify_region, stochastic_form, Region};
use supcert_core::kraus::{appendix_b_quantities, plan, select_index_functions, PlanOutcome};
use supcert_core::oracle::{exhaustive_condition_scan, verify_plan, GridSpec, SourceSpec};
use supcert_core::state::{canonical_order, make_state, tilde, PureState};
use supcert_core::Error;

const TOL: f64 = 1e-9;

fn basis(d: usize, mu: f64) -> Arc<GramBasis> {
    Arc::new(build_basis(d, &MuSpec::Equal(mu), TOL).unwrap())
}

fn state(b: &Arc<GramBasis>, c: &[f64]) -> PureState {
    make_state(b, c, true, TOL).unwrap()
}

fn coeff() -> impl Strategy<Value = f64> {
    (0.1f64..1.0, any::<bool>()).prop_map(|(m, neg)| if neg { -m } else { m })
}

fn positive() -> impl Strategy<Value = f64> {
    0.1f64..1.0
}

/// (d, mu) with mu well inside the admissible interval.
fn dim_mu(dims: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = (usize, f64)> {
    dims.prop_flat_map(|d| {
        let lo = independence_range(d).unwrap().lo;
        (Just(d), (lo + 0.02)..0.95)
    })
}

fn verdict(psi: &PureState, phi: &PureState) -> (Region, bool) {
    let region = classify_region(psi, phi, TOL).unwrap().region;
    let ok = match plan(psi, phi, TOL).unwrap() {
        PlanOutcome::Planned(p) => {
            let rep = verify_plan(psi, phi, &p, TOL).unwrap();
            assert!(rep.passed, "plan failed verification: {:?}", rep.failures().collect::<Vec<_>>());
            true
        }
        PlanOutcome::Refused { .. } => false,
    };
    (region, ok)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    #[test]
    fn basis_reproduces_gram((d, mu) in dim_mu(2..=6)) {
        let b = basis(d, mu);
        let u = b.embedding();
        let g = u.transpose() * u;
        for i in 0..d {
            for j in 0..d {
                let want = if i == j { 1.0 } else { mu };
                prop_assert!((g[(i, j)] - want).abs() < 1e-12);
            }
        }
        let dual = b.dual();
        let prod = dual.transpose() * u;
        for k in 0..d {
            prop_assert!((dual.column(k).norm() - 1.0).abs() < 1e-12);
            prop_assert!((prod[(k, k)] - b.zeta()[k]).abs() < 1e-12);
            for j in (0..d).filter(|&j| j != k) {
                prop_assert!(prod[(k, j)].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tilde_is_a_distribution((d, mu) in dim_mu(2..=5), raw in prop::collection::vec(coeff(), 5)) {
        let b = basis(d, mu);
        let psi = state(&b, &raw[..d]);
        let t = tilde(&psi);
        prop_assert!((t.sum() - 1.0).abs() < 1e-12);
        let sorted = t.sorted();
        prop_assert!(sorted.windows(2).all(|w| w[0] >= w[1] - TOL));
    }

    #[test]
    fn canonical_order_sorts_and_permutes((d, mu) in dim_mu(2..=5), raw in prop::collection::vec(coeff(), 5)) {
        let b = basis(d, mu);
        let psi = state(&b, &raw[..d]);
        let (ordered, perm) = canonical_order(&psi, TOL).unwrap();
        let mut seen = perm.clone();
        seen.sort();
        prop_assert_eq!(seen, (0..d).collect::<Vec<_>>());
        let t = tilde(&ordered);
        prop_assert!(t.values.windows(2).all(|w| w[0] >= w[1] - TOL));
        for (k, &src) in perm.iter().enumerate() {
            prop_assert!((ordered.coeffs()[k] - psi.coeffs()[src]).abs() < 1e-15);
        }
    }

    #[test]
    fn every_plan_verifies((d, mu) in dim_mu(2..=4), a in prop::collection::vec(coeff(), 4), c in prop::collection::vec(coeff(), 4)) {
        let b = basis(d, mu);
        let (psi, phi) = (state(&b, &a[..d]), state(&b, &c[..d]));
        match plan(&psi, &phi, TOL) {
            Ok(PlanOutcome::Planned(p)) => {
                let rep = verify_plan(&psi, &phi, &p, TOL).unwrap();
                prop_assert!(rep.passed, "{:?}", rep.failures().collect::<Vec<_>>());
            }
            Ok(PlanOutcome::Refused { .. }) | Err(Error::UnsupportedCase(_)) => {}
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }

    #[test]
    fn qubit_r1_iff_plan(mu in -0.95f64..0.95, a in prop::collection::vec(coeff(), 2), c in prop::collection::vec(coeff(), 2)) {
        let b = basis(2, mu);
        let (region, ok) = verdict(&state(&b, &a), &state(&b, &c));
        prop_assert_eq!(region == Region::R1, ok);
    }

    #[test]
    fn nonnegative_sources_r1_iff_plan(
        d in 3usize..=4,
        t in 0.02f64..0.98,
        a in prop::collection::vec(positive(), 4),
        c in prop::collection::vec(coeff(), 4),
    ) {
        let lo = independence_range(d).unwrap().lo;
        let mu = lo * t;
        let b = basis(d, mu);
        let (psi, phi) = (state(&b, &a[..d]), state(&b, &c[..d]));
        if let Err(Error::UnsupportedCase(_)) = plan(&psi, &phi, TOL) {
            return Ok(());
        }
        let (region, ok) = verdict(&psi, &phi);
        prop_assert_eq!(region == Region::R1, ok);
    }

    #[test]
    fn stochastic_form_maps_target_to_source((d, mu) in dim_mu(2..=4), a in prop::collection::vec(coeff(), 4), c in prop::collection::vec(coeff(), 4)) {
        let b = basis(d, mu);
        let (psi, phi) = (state(&b, &a[..d]), state(&b, &c[..d]));
        let rep = match classify_region(&psi, &phi, TOL) {
            Ok(r) => r,
            Err(Error::UnsupportedCase(_)) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let Some(probs) = rep.probabilities else { return Ok(()) };
        let (pt, ft) = (tilde(&psi).sorted(), tilde(&phi).sorted());
        let sel = select_index_functions(&pt, &ft, TOL).unwrap();
        let form = stochastic_form(&pt, &ft, &probs, &sel.functions, 1e-9).unwrap();
        let image = form.apply(&ft);
        for (x, y) in image.iter().zip(&pt) {
            prop_assert!((x - y).abs() < 1e-9);
        }
        let m = &form.dmatrix;
        for i in 0..d {
            let row: f64 = (0..d).map(|j| m[i][j]).sum();
            let col: f64 = (0..d).map(|j| m[j][i]).sum();
            prop_assert!((row - 1.0).abs() < 1e-9 && (col - 1.0).abs() < 1e-9);
            prop_assert!((0..d).all(|j| m[i][j] >= -1e-9));
        }
    }

    #[test]
    fn residual_diagonal_sign_matches_coc((d, mu) in dim_mu(2..=3), a in prop::collection::vec(coeff(), 3), c in prop::collection::vec(coeff(), 3)) {
        let b = basis(d, mu);
        let (psi, phi) = (state(&b, &a[..d]), state(&b, &c[..d]));
        let rep = classify_region(&psi, &phi, TOL).unwrap();
        if rep.probabilities.is_none() {
            return Ok(());
        }
        let q = appendix_b_quantities(&psi, &phi, TOL).unwrap();
        prop_assert_eq!(q.min_x() >= -TOL, rep.coc);
    }
}

#[test]
fn qubit_scan_has_no_disagreements() {
    let spec = GridSpec { resolution: 200, source: SourceSpec::Grid, extra_targets: vec![], keep_records: false };
    let census = exhaustive_condition_scan(&basis(2, 0.5), &spec, TOL).unwrap();
    assert_eq!(census.pairs, 40_000);
    assert!(census.disagreements.is_empty(), "{:?}", &census.disagreements[..census.disagreements.len().min(3)]);
    assert_eq!(census.counts.get("R1").copied().unwrap_or(0), census.verified);
    for region in ["R1", "R2", "R3", "R4", "R5"] {
        assert!(census.counts.contains_key(region), "no {region} pairs");
    }
}

#[test]
fn orthonormal_scan_matches_coherence_majorization() {
    let spec = GridSpec { resolution: 60, source: SourceSpec::Grid, extra_targets: vec![], keep_records: true };
    let census = exhaustive_condition_scan(&basis(2, 0.0), &spec, TOL).unwrap();
    let majorized = census
        .records
        .iter()
        .filter(|r| {
            let big = |v: &[f64]| v.iter().map(|x| x * x).fold(0.0, f64::max);
            big(&r.psi) <= big(&r.phi) + TOL
        })
        .count();
    assert_eq!(census.counts.get("R1").copied().unwrap_or(0), majorized);
    assert!(census.disagreements.is_empty());
}

#[test]
fn three_level_scan_with_fixed_source() {
    let k = (2.0f64 / 17.0).sqrt();
    let spec = GridSpec {
        resolution: 30,
        source: SourceSpec::Fixed(vec![3.0 * k, 2.0 * k, k]),
        extra_targets: vec![vec![4.0, 2.0, 1.0], vec![4.0, 2.0, -1.0]],
        keep_records: true,
    };
    let census = exhaustive_condition_scan(&basis(3, -0.25), &spec, TOL).unwrap();
    assert_eq!(census.pairs, 30 * 30 + 2);
    assert!(census.disagreements.is_empty());
    let extra = &census.records[census.records.len() - 2..];
    let find = |c: [f64; 3]| {
        census
            .records
            .iter()
            .find(|r| r.phi.iter().zip(c).all(|(a, b)| (a - b).abs() < 1e-9))
            .unwrap_or_else(|| panic!("no record for {c:?} among {:?}", extra.iter().map(|r| &r.phi).collect::<Vec<_>>()))
    };
    let phi1 = find(scaled(&basis(3, -0.25), [4.0, 2.0, 1.0]));
    let phi2 = find(scaled(&basis(3, -0.25), [4.0, 2.0, -1.0]));
    assert_eq!(phi1.region, "R1");
    assert!(phi1.verified);
    assert_eq!(phi2.region, "R5");
    assert!(!phi2.verified);
}

fn scaled(b: &Arc<GramBasis>, c: [f64; 3]) -> [f64; 3] {
    let s = state(b, &c);
    [s.coeffs()[0], s.coeffs()[1], s.coeffs()[2]]
}

#[test]
fn grid_limit_is_enforced() {
    let spec = GridSpec { resolution: 2000, source: SourceSpec::Grid, extra_targets: vec![], keep_records: false };
    assert!(matches!(exhaustive_condition_scan(&basis(2, 0.1), &spec, TOL), Err(Error::GridTooLarge(_))));
}

#[test]
fn rank_increase_is_rejected() {
    let b = basis(3, -0.2);
    let psi = state(&b, &[1.0, 0.0, 0.0]);
    let phi = state(&b, &[1.0, 1.0, 0.0]);
    assert!(matches!(plan(&psi, &phi, TOL), Err(Error::RankIncrease { .. })));
}
