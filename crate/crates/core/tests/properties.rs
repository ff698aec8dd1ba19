use fsm_capra::capra::{capra_biconjugate_fsm, capra_conjugate_fsm, capra_coupling, CapraContext};
use fsm_capra::localnorms::{Backend, LocalNormFamily};
use fsm_capra::norms::NormSpec;
use fsm_capra::oracle::{direct_capra_conjugate, sampled_support_function, OracleBudget};
use fsm_capra::setfn::SetFunction;
use fsm_capra::subsets::{level_set_membership, project, support};
use fsm_capra::{ExtReal, SubsetMask};
use proptest::prelude::*;

fn ext() -> impl Strategy<Value = ExtReal> {
    prop_oneof![
        1 => Just(ExtReal::NegInf),
        1 => Just(ExtReal::PosInf),
        6 => (-1e3..1e3f64).prop_map(ExtReal::Finite),
    ]
}

fn exponent() -> impl Strategy<Value = f64> {
    prop_oneof![Just(1.5), Just(2.0), Just(3.0), 1.1..6.0f64]
}

fn point(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![1 => Just(0.0), 4 => -3.0..3.0f64], d)
}

fn table(d: usize) -> impl Strategy<Value = SetFunction> {
    prop::collection::vec(-2.0..2.0f64, 1 << d)
        .prop_map(move |v| SetFunction::from_table(d, v.into_iter().map(ExtReal::Finite).collect()).unwrap())
}

fn mask(d: usize) -> impl Strategy<Value = SubsetMask> {
    (0..1u32 << d).prop_map(move |b| SubsetMask::new(d, b).unwrap())
}

proptest! {
    #[test]
    fn extreal_additions(a in ext(), b in ext(), c in ext()) {
        prop_assert_eq!(a.lower_add(b), b.lower_add(a));
        prop_assert_eq!(a.upper_add(b), b.upper_add(a));
        prop_assert!(a.lower_add(b) <= a.upper_add(b));
        prop_assert_eq!(-(a.lower_add(b)), (-a).upper_add(-b));
        prop_assert_eq!(a.max(b).min(c), c.min(b.max(a)));
        prop_assert_eq!(a.lower_add(ExtReal::ZERO), a);
        if a.is_finite() && b.is_finite() && c.is_finite() {
            let l = a.lower_add(b).lower_add(c).to_f64();
            let r = a.lower_add(b.lower_add(c)).to_f64();
            prop_assert!((l - r).abs() <= 1e-9 * (1.0 + l.abs()));
        } else {
            prop_assert_eq!(a.lower_add(b).lower_add(c), a.lower_add(b.lower_add(c)));
        }
    }

    #[test]
    fn extreal_json_round_trip(a in ext()) {
        let s = serde_json::to_string(&a).unwrap();
        prop_assert_eq!(serde_json::from_str::<ExtReal>(&s).unwrap(), a);
    }

    #[test]
    fn subset_algebra(d in 1usize..=8, a in 0u32..256, b in 0u32..256) {
        let m = (1u32 << d) - 1;
        let (k, l) = (SubsetMask::new(d, a & m).unwrap(), SubsetMask::new(d, b & m).unwrap());
        prop_assert_eq!(k.union(l).complement(), k.complement().intersection(l.complement()));
        prop_assert_eq!(k.union(l).len() + k.intersection(l).len(), k.len() + l.len());
        prop_assert_eq!(k.subsets().count(), 1 << k.len());
        prop_assert_eq!(k.supersets().count(), 1 << (d - k.len()));
        prop_assert!(k.subsets().all(|s| s.is_subset_of(k)));
        prop_assert!(k.supersets().all(|s| k.is_subset_of(s)));
        prop_assert_eq!(k.is_subset_of(l), k.union(l) == l);
        let json = serde_json::to_string(&k).unwrap();
        let listed: Vec<usize> = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(listed, k.indices().map(|i| i + 1).collect::<Vec<_>>());
    }

    #[test]
    fn projection_and_support(x in point(5), k in mask(5)) {
        let px = project(&x, k).unwrap();
        prop_assert!(support(&px).unwrap().is_subset_of(k));
        prop_assert_eq!(support(&px).unwrap(), support(&x).unwrap().intersection(k));
        prop_assert_eq!(level_set_membership(&x, k).unwrap(), support(&x).unwrap() == k);
    }

    #[test]
    fn lp_norm_axioms(p in exponent(), x in point(4), y in point(4), t in -4.0..4.0f64) {
        let n = NormSpec::lp(p, 4).unwrap();
        let nx = n.norm_eval(&x).unwrap();
        let ny = n.norm_eval(&y).unwrap();
        let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        prop_assert!(n.norm_eval(&sum).unwrap() <= nx + ny + 1e-12);
        let tx: Vec<f64> = x.iter().map(|a| t * a).collect();
        prop_assert!((n.norm_eval(&tx).unwrap() - t.abs() * nx).abs() <= 1e-10 * (1.0 + nx));
        let dot: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        prop_assert!(dot <= nx * n.dual_norm_eval(&y).unwrap() + 1e-10);
        let dual = n.dual_spec().unwrap();
        prop_assert!((dual.dual_norm_eval(&x).unwrap() - nx).abs() <= 1e-10 * (1.0 + nx));
    }

    #[test]
    fn family_invariants(p in exponent(), x in point(3), k in mask(3), i in 0usize..3) {
        let fam = LocalNormFamily::new(NormSpec::lp(p, 3).unwrap());
        let bigger = k.with(i);
        let dn = fam.source().dual_norm_eval(&x).unwrap();
        let n = fam.source().norm_eval(&x).unwrap();
        let a = fam.dual_coordinate_norm(&x, k).unwrap();
        let b = fam.dual_coordinate_norm(&x, bigger).unwrap();
        prop_assert!(a <= b + 1e-12 && b <= dn + 1e-12);
        let ta = fam.top_k_dual_norm(&x, k).unwrap();
        let tb = fam.top_k_dual_norm(&x, bigger).unwrap();
        prop_assert!(ta <= tb + 1e-12);
        prop_assert!((a - ta).abs() <= 1e-9 * (1.0 + a));
        if !k.is_empty() {
            let c = fam.coordinate_norm(&x, k).unwrap();
            let s = fam.k_support_dual_norm(&x, k).unwrap();
            prop_assert!(c + 1e-12 >= n || !support(&x).unwrap().is_subset_of(k));
            prop_assert!((c - s).abs() <= 1e-9 * (1.0 + c.abs()) || c.is_infinite() && s.is_infinite());
        }
    }

    #[test]
    fn backends_agree(p in exponent(), y in point(3), k in mask(3)) {
        let spec = NormSpec::lp(p, 3).unwrap();
        let closed = LocalNormFamily::new(spec.clone());
        let numeric = LocalNormFamily::with_backend(spec, Backend::Numeric);
        let a = closed.dual_coordinate_norm(&y, k).unwrap();
        let b = numeric.dual_coordinate_norm(&y, k).unwrap();
        prop_assert!((a - b).abs() <= 1e-6 * (1.0 + a), "{} vs {}", a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn capra_fenchel_inequality(p in exponent(), f in table(2), x in point(2), y in point(2)) {
        let c = CapraContext::new(NormSpec::lp(p, 2).unwrap());
        let conj = capra_conjugate_fsm(&c, &f, &y).unwrap().value;
        let fx = f.value(support(&x).unwrap());
        let lhs = capra_coupling(&c, &x, &y).unwrap();
        prop_assert!(lhs <= fx.upper_add(conj).to_f64() + 1e-9);
    }

    #[test]
    fn conjugate_dominates_its_sampled_estimate(p in exponent(), f in table(2), y in point(2)) {
        let c = CapraContext::new(NormSpec::lp(p, 2).unwrap());
        let budget = OracleBudget { samples: 3_000, ..OracleBudget::default() };
        let g = |x: &[f64]| f.value(support(x).unwrap());
        let exact = capra_conjugate_fsm(&c, &f, &y).unwrap().value.to_f64();
        prop_assert!(exact >= direct_capra_conjugate(&c, &g, &y, &budget).unwrap() - 1e-9);
    }

    #[test]
    fn biconjugate_is_a_minorant(p in exponent(), f in table(2), x in point(2)) {
        let c = CapraContext::new(NormSpec::lp(p, 2).unwrap());
        let b = capra_biconjugate_fsm(&c, &f, &x).unwrap();
        let fx = f.value(support(&x).unwrap()).to_f64();
        prop_assert!(b.value.to_f64() <= fx + 1e-6, "{:?} > {}", b.value, fx);
        prop_assert!(b.lower <= b.value);
    }

    #[test]
    fn sampled_estimates_grow_with_the_budget(y in point(2), seed in 0u64..1000, n in 10usize..2000) {
        let member = |u: &[f64]| u.iter().map(|v| v * v).sum::<f64>() <= 1.0;
        let small = OracleBudget { samples: n, seed, ..OracleBudget::default() };
        let large = OracleBudget { samples: 2 * n, ..small.clone() };
        let a = sampled_support_function(&member, &y, &small);
        let b = sampled_support_function(&member, &y, &large);
        if let (Ok(a), Ok(b)) = (a, b) {
            prop_assert!(a <= b);
        }
        let c = CapraContext::new(NormSpec::lp(2.0, 2).unwrap());
        let card = SetFunction::cardinality(2).unwrap();
        let g = |x: &[f64]| card.value(support(x).unwrap());
        let a = direct_capra_conjugate(&c, &g, &y, &small).unwrap();
        let b = direct_capra_conjugate(&c, &g, &y, &large).unwrap();
        prop_assert!(a <= b);
    }
}
