use proptest::prelude::*;

use specvar::oracle;
use specvar::perturb::eig_dir_derivative;
use specvar::sampling::{self, random_orthogonal, random_unit_symmetric, supported_instance, Kind, Shape};
use specvar::spectral::{
    composite_objective, critical_cone_member, spectral_prox, spectral_second_subderivative,
    spectral_subderivative, spectral_value,
};
use specvar::symfun::{mcp_phi, mcp_prox_scalar, theta_value};
use specvar::symmat::{block_sort_permutation, eig_default, fan_gap};
use specvar::{ExtReal, SymMatrix, SymmetricFunctionSpec};

fn kind() -> impl Strategy<Value = Kind> {
    prop::sample::select(Kind::ALL.to_vec())
}

fn sym_entries(n: usize) -> impl Strategy<Value = SymMatrix> {
    prop::collection::vec(-3.0f64..3.0, n * n).prop_map(move |v| {
        let mut m = SymMatrix::zeros(n).row_major();
        for i in 0..n {
            for j in 0..n {
                m[i * n + j] = 0.5 * (v[i * n + j] + v[j * n + i]);
            }
        }
        SymMatrix::from_row_major(n, &m).unwrap()
    })
}

fn sym_any() -> impl Strategy<Value = SymMatrix> {
    (1usize..6).prop_flat_map(sym_entries)
}

fn ext_real() -> impl Strategy<Value = ExtReal> {
    prop_oneof![
        (-1e6f64..1e6).prop_map(ExtReal::Finite),
        Just(ExtReal::PosInf),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn svec_is_an_isometry(x in sym_any()) {
        let v = x.svec();
        prop_assert_eq!(v.len(), SymMatrix::svec_len(x.dim()));
        let back = SymMatrix::from_svec(x.dim(), &v).unwrap();
        prop_assert!(back.sub(&x).max_abs() < 1e-14);
        let norm = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        prop_assert!((norm - x.norm_fro()).abs() <= 1e-12 * (1.0 + norm));
    }

    #[test]
    fn serde_round_trips(x in sym_any(), e in ext_real()) {
        let s = serde_json::to_string(&x).unwrap();
        prop_assert_eq!(serde_json::from_str::<SymMatrix>(&s).unwrap(), x);
        let s = serde_json::to_string(&e).unwrap();
        prop_assert_eq!(serde_json::from_str::<ExtReal>(&s).unwrap(), e);
    }

    #[test]
    fn spec_round_trips(k in kind(), n in 2usize..6, seed in any::<u64>()) {
        let spec = sampling::random_spec(k, n, &mut sampling::rng(seed));
        let s = serde_json::to_string(&spec).unwrap();
        prop_assert_eq!(serde_json::from_str::<SymmetricFunctionSpec>(&s).unwrap(), spec);
    }

    #[test]
    fn eigen_reconstruction_and_order(x in sym_any()) {
        let es = eig_default(&x).unwrap();
        prop_assert!(es.lambda().windows(2).all(|w| w[0] >= w[1]));
        let rebuilt = SymMatrix::from_spectral(es.u(), es.lambda()).unwrap();
        prop_assert!(rebuilt.sub(&x).max_abs() <= 1e-12 * (1.0 + x.max_abs()));
    }

    #[test]
    fn fan_gap_is_nonnegative_and_zero_on_commuting_pairs(x in sym_any(), seed in any::<u64>()) {
        let n = x.dim();
        let mut rng = sampling::rng(seed);
        let y = random_unit_symmetric(n, &mut rng);
        prop_assert!(fan_gap(&x, &y).unwrap() >= -1e-12);
        // diagonal matrices in the same basis share sorted eigenvectors
        let es = eig_default(&x).unwrap();
        let d: Vec<f64> = (0..n).map(|i| (n - i) as f64).collect();
        let z = SymMatrix::from_spectral(es.u(), &d).unwrap();
        prop_assert!(fan_gap(&x, &z).unwrap().abs() < 1e-9);
    }

    #[test]
    fn block_sort_is_a_permutation(x in sym_any(), seed in any::<u64>()) {
        let es = eig_default(&x).unwrap();
        let mut rng = sampling::rng(seed);
        let y: Vec<f64> = (0..x.dim()).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
        let (v, q) = block_sort_permutation(&y, &es).unwrap();
        prop_assert_eq!(q.apply(&y), v.clone());
        prop_assert_eq!(q.apply_transpose(&v), y);
        for b in es.blocks() {
            prop_assert!(v[b.clone()].windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn spectral_value_is_orthogonally_invariant(k in kind(), n in 2usize..6, seed in any::<u64>()) {
        let mut rng = sampling::rng(seed);
        let spec = sampling::random_spec(k, n, &mut rng);
        let x = sampling::random_symmetric(n, &mut rng);
        let u = random_orthogonal(n, &mut rng);
        let a = spectral_value(&spec, &x).unwrap();
        let b = spectral_value(&spec, &x.congruence(&u)).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
    }

    #[test]
    fn theta_is_permutation_invariant(k in kind(), n in 2usize..6, seed in any::<u64>()) {
        let mut rng = sampling::rng(seed);
        let spec = sampling::random_spec(k, n, &mut rng);
        let x: Vec<f64> = (0..n).map(|_| rand::Rng::random_range(&mut rng, -3.0..3.0)).collect();
        let mut p = x.clone();
        p.reverse();
        let (a, b) = (theta_value(&spec, &x).unwrap(), theta_value(&spec, &p).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn subderivative_matches_forward_quotient(k in kind(), n in 2usize..5, seed in any::<u64>()) {
        let mut rng = sampling::rng(seed);
        let inst = supported_instance(k, n, Shape::default(), &mut rng).unwrap();
        let h = random_unit_symmetric(n, &mut rng);
        let dg = spectral_subderivative(&inst.spec, &inst.es, &h).unwrap();
        let t = 1e-6;
        let q = (spectral_value(&inst.spec, &inst.x.axpy(t, &h)).unwrap()
            - spectral_value(&inst.spec, &inst.x).unwrap()) / t;
        prop_assert!((q - dg).abs() <= 1e-4, "dg = {dg}, quotient = {q}");
    }

    #[test]
    fn second_subderivative_is_quadratically_homogeneous(
        k in kind(), n in 2usize..5, tau in 0.1f64..5.0, seed in any::<u64>()
    ) {
        let mut rng = sampling::rng(seed);
        let inst = supported_instance(k, n, Shape::default(), &mut rng).unwrap();
        let h = sampling::critical_direction(&inst, &mut rng).unwrap();
        let a = spectral_second_subderivative(&inst.spec, &inst.es, &inst.triple, &h).unwrap();
        let b = spectral_second_subderivative(&inst.spec, &inst.es, &inst.triple, &h.scale(tau)).unwrap();
        prop_assert!(a.in_critical_cone && b.in_critical_cone);
        let (a, b) = (a.d2.to_f64(), b.d2.to_f64());
        prop_assert!((b - tau * tau * a).abs() <= 1e-9 * (1.0 + b.abs()));
    }

    #[test]
    fn finite_second_subderivative_implies_critical(k in kind(), n in 2usize..5, seed in any::<u64>()) {
        let mut rng = sampling::rng(seed);
        let inst = supported_instance(k, n, Shape { degenerate: true, min_blocks: 1 }, &mut rng).unwrap();
        let h = random_unit_symmetric(n, &mut rng);
        let r = spectral_second_subderivative(&inst.spec, &inst.es, &inst.triple, &h).unwrap();
        let member = critical_cone_member(&inst.spec, &inst.es, &inst.triple, &h).unwrap();
        prop_assert_eq!(r.d2.is_finite(), member);
        if member {
            prop_assert!((r.dg - inst.triple.big_y().inner(&h)).abs() <= 1e-8);
        } else {
            prop_assert_eq!(r.d2, ExtReal::PosInf);
        }
    }

    #[test]
    fn directional_eigenvalues_preserve_trace(x in sym_any(), seed in any::<u64>()) {
        let es = eig_default(&x).unwrap();
        let h = random_unit_symmetric(x.dim(), &mut sampling::rng(seed));
        let d = eig_dir_derivative(&es, &h).unwrap().d;
        let tr: f64 = (0..x.dim()).map(|i| h.get(i, i)).sum();
        prop_assert!((d.iter().sum::<f64>() - tr).abs() < 1e-10);
    }

    #[test]
    fn spectral_prox_beats_perturbations(k in kind(), n in 2usize..5, gamma in 0.1f64..1.5, seed in any::<u64>()) {
        let mut rng = sampling::rng(seed);
        let spec = sampling::random_spec(k, n, &mut rng);
        let x = sampling::random_symmetric(n, &mut rng);
        let p = spectral_prox(&spec, gamma, &x).unwrap();
        let f = composite_objective(&spec, n);
        let obj = |z: &SymMatrix| f(&z.svec()).to_f64() + z.sub(&x).norm_fro().powi(2) / (2.0 * gamma);
        let best = obj(&p.matrix);
        for _ in 0..20 {
            let e = random_unit_symmetric(n, &mut rng).scale(1e-2);
            prop_assert!(obj(&p.matrix.add(&e)) >= best - 1e-9 * (1.0 + best.abs()));
        }
    }

    #[test]
    fn mcp_prox_is_a_global_minimizer(x in -5.0f64..5.0, a in 1.1f64..4.0, c in 0.2f64..2.0, gamma in 0.05f64..0.95) {
        prop_assume!(gamma < a);
        let p = mcp_prox_scalar(x, a, c, gamma);
        let obj = |z: f64| mcp_phi(z, a, c) + (z - x).powi(2) / (2.0 * gamma);
        let best = obj(p);
        for k in 0..=2000 {
            let z = -6.0 + 12.0 * k as f64 / 2000.0;
            prop_assert!(obj(z) >= best - 1e-12);
        }
    }

    #[test]
    fn quadratic_quotient_is_exact(w0 in -2.0f64..2.0, w1 in -2.0f64..2.0, t in 1e-3f64..1.0) {
        let quad = |p: &[f64]| ExtReal::Finite(p[0] * p[0] + 3.0 * p[1] * p[1]);
        let q = oracle::diff_quotient2(&quad, &[0.0, 0.0], &[0.0, 0.0], &[w0, w1], t).unwrap();
        let exact = 2.0 * (w0 * w0 + 3.0 * w1 * w1);
        prop_assert!((q.to_f64() - exact).abs() <= 1e-9 * (1.0 + exact));
    }
}
