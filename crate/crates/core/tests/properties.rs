use ietlab::birkhoff::birkhoff_sum;
use ietlab::cocycle::{random_poly_part, random_symmetric_constants, LogCocycle};
use ietlab::correction::{classify_growth, correction_operator, CorrectionOptions, Trend};
use ietlab::iet::{saddle_orbits, Convention, Iet, PermPair};
use ietlab::lab::Loaded;
use ietlab::linalg::int_mul;
use ietlab::num::{integrate_adaptive, Dd};
use ietlab::rauzy::{combinatorial_step, PeriodicIet};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::sync::OnceLock;

fn irreducible_pair() -> impl Strategy<Value = PermPair> {
    (2usize..=7)
        .prop_flat_map(|d| Just((1..=d).collect::<Vec<_>>()).prop_shuffle())
        .prop_filter_map("reducible", |m| PermPair::from_monodromy(&m).ok())
}

fn pair_with_lengths() -> impl Strategy<Value = Iet> {
    irreducible_pair().prop_flat_map(|pair| {
        let d = pair.d();
        proptest::collection::vec(0.05f64..1.0, d).prop_map(move |l| Iet::new(pair.clone(), l).unwrap())
    })
}

fn instances() -> &'static [PeriodicIet] {
    static CELL: OnceLock<Vec<PeriodicIet>> = OnceLock::new();
    CELL.get_or_init(|| ["golden", "rev4", "rev5"].iter().map(|n| ietlab::catalog::build(n).unwrap()).collect())
}

fn random_cocycle(p: &PeriodicIet, seed: u64) -> LogCocycle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (cp, cm) = random_symmetric_constants(&p.base, &p.saddle, &mut rng);
    let g = random_poly_part(&p.base, 2, &mut rng);
    LogCocycle::new(0, p.base.clone(), cp, cm, g).unwrap()
}

fn zero_mean(phi: &LogCocycle) -> LogCocycle {
    phi.add_constants(&vec![-phi.mean(); phi.d()])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exchange_is_a_piecewise_translation(t in pair_with_lengths(), f in 0.0f64..1.0, g in 0.0f64..1.0) {
        let x = f * t.total;
        let Ok(a) = t.locate(x, Convention::LeftClosed) else { return Ok(()) };
        // a second point in the same interval
        let y = t.left[a] + g * (t.right[a] - t.left[a]);
        let tx = t.evaluate(x, Convention::LeftClosed).unwrap();
        let ty = t.evaluate(y, Convention::LeftClosed).unwrap();
        prop_assert!(((tx - ty).abs() - (x - y).abs()).abs() <= 1e-12 * t.total);
        let back = t.evaluate_inverse(tx, Convention::LeftClosed).unwrap();
        prop_assert!((back - x).abs() <= 1e-12 * t.total);
        if x > t.left[a] {
            prop_assert_eq!(t.evaluate(x, Convention::RightClosed).unwrap(), tx);
        }
    }

    #[test]
    fn saddle_count_and_kernel_vectors(pair in irreducible_pair()) {
        let s = saddle_orbits(&pair);
        let d = pair.d();
        prop_assert_eq!(d, 2 * s.genus + s.kappa - 1);
        prop_assert_eq!(s.b.len(), s.kappa);
        let om = pair.omega();
        for b in &s.b {
            for row in 0..d {
                prop_assert_eq!((0..d).map(|c| om[(row, c)] * b[c]).sum::<i64>(), 0);
            }
        }
        for a in 0..d {
            prop_assert_eq!(s.b.iter().map(|b| b[a]).sum::<i64>(), 0);
        }
    }

    #[test]
    fn rauzy_step_conjugates_the_form(pair in irreducible_pair(), eps in 0usize..2) {
        let st = combinatorial_step(&pair, eps);
        let lhs = int_mul(&int_mul(&st.theta.transpose(), &st.from.omega()).unwrap(), &st.theta).unwrap();
        prop_assert_eq!(lhs, st.to.omega());
    }

    #[test]
    fn double_double_is_exact_on_two_terms(a in -1e6f64..1e6, b in -1e6f64..1e6) {
        let s = Dd::new(a).add(Dd::new(b));
        prop_assert_eq!(s.hi, a + b);
        // the error term of a two-sum recovers b exactly
        prop_assert_eq!(Dd::sum([a, b, -a]).value(), b);
        let p = Dd::new(a).mul(Dd::new(b));
        prop_assert_eq!(p.hi, a * b);
        prop_assert_eq!(p.lo, a.mul_add(b, -(a * b)));
        if b != 0.0 {
            let q = p.div(Dd::new(b));
            prop_assert!((q.value() - a).abs() <= 1e-15 * a.abs());
        }
    }

    #[test]
    fn geometric_sequences_classify_as_exponential(c in 0.1f64..10.0, r in 1.5f64..4.0) {
        let v: Vec<f64> = (0..12).map(|k| c * r.powi(k)).collect();
        match classify_growth(&v, 1).trend {
            Trend::Exponential { rate } => prop_assert!((rate - r.ln()).abs() < 1e-9),
            t => prop_assert!(false, "{:?}", t),
        }
    }

    #[test]
    fn bounded_sequences_classify_as_bounded(c in 0.1f64..10.0, wiggle in proptest::collection::vec(0.5f64..2.0, 12)) {
        let v: Vec<f64> = wiggle.iter().map(|w| c * w).collect();
        prop_assert_eq!(classify_growth(&v, 1).trend, Trend::Bounded);
    }

    #[test]
    fn scenario_hash_ignores_formatting(seed in 0u64..1000, tol in 1e-12f64..1e-8) {
        let text = format!(
            r#"{{"name":"h","source":{{"catalog":"rev4"}},"cocycle":{{"kind":"random-symmetric","poly_degree":1}},"seed":{seed},"settings":{{"series_tol":{tol:e}}}}}"#
        );
        let a = Loaded::from_str(&text, Path::new(".")).unwrap();
        let reformatted = serde_json::to_string_pretty(&serde_json::from_str::<serde_json::Value>(&text).unwrap()).unwrap();
        let b = Loaded::from_str(&reformatted, Path::new(".")).unwrap();
        prop_assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        let other = Loaded::from_str(&text.replace(&format!("\"seed\":{seed}"), &format!("\"seed\":{}", seed + 1)), Path::new(".")).unwrap();
        prop_assert_ne!(a.hash().unwrap(), other.hash().unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn birkhoff_sums_are_additive(which in 0usize..3, seed in 0u64..1000, f in 0.0f64..1.0, m in 0i64..200, n in -200i64..200) {
        let p = &instances()[which];
        let phi = random_cocycle(p, seed);
        let x = f * p.base.total;
        let (Ok(sm), Ok(smn)) = (birkhoff_sum(&phi, x, m), birkhoff_sum(&phi, x, m + n)) else { return Ok(()) };
        let mut y = x;
        for _ in 0..m {
            y = p.base.evaluate(y, Convention::LeftClosed).unwrap();
        }
        let Ok(sn) = birkhoff_sum(&phi, y, n) else { return Ok(()) };
        let scale = 1.0 + sm.abs() + sn.abs() + (m + n.abs()) as f64;
        prop_assert!((smn - sm - sn).abs() <= 1e-9 * scale, "{} vs {} + {}", smn, sm, sn);
    }

    #[test]
    fn mean_value_bounds_against_quadrature(which in 0usize..3, seed in 0u64..1000, a in 0usize..5, f1 in 0.0f64..1.0, f2 in 0.0f64..1.0) {
        let p = &instances()[which];
        let a = a % p.d();
        let phi = random_cocycle(p, seed);
        let len = p.base.lambda[a];
        let (lo, hi) = if f1 < f2 { (f1, f2) } else { (f2, f1) };
        prop_assume!(hi - lo > 1e-3);
        let (u1, u2) = (lo * len, hi * len);
        let r = phi.mean_and_bounds(a, u1, u2).unwrap();
        prop_assert!(r.holds(), "{:?}", r);
        let f = |u: f64| phi.eval_uv(a, u, len - u);
        let oracle = integrate_adaptive(&f, u1, u2, 1e-12, 60) / (u2 - u1);
        prop_assert!((oracle - r.mean_j).abs() <= 1e-7 * (1.0 + oracle.abs()), "{} vs {}", oracle, r.mean_j);
        // |f - m| has kinks at the sign changes, which fool the error estimate; split there
        let g = |u: f64| f(u) - r.mean_j;
        let mut cuts = vec![u1];
        let n = 2000;
        for i in 0..n {
            let (mut a0, mut b0) = (u1 + (u2 - u1) * i as f64 / n as f64, u1 + (u2 - u1) * (i + 1) as f64 / n as f64);
            if g(a0).signum() == g(b0).signum() {
                continue;
            }
            for _ in 0..100 {
                let mid = 0.5 * (a0 + b0);
                if g(mid).signum() == g(a0).signum() { a0 = mid } else { b0 = mid }
            }
            cuts.push(0.5 * (a0 + b0));
        }
        cuts.push(u2);
        let osc = cuts.windows(2).map(|w| integrate_adaptive(&|u: f64| g(u).abs(), w[0], w[1], 1e-13, 60)).sum::<f64>() / (u2 - u1);
        prop_assert!((osc - r.oscillation).abs() <= 1e-6 * (1.0 + osc), "{} vs {}", osc, r.oscillation);
    }

    #[test]
    fn orbit_functional_is_linear(which in 0usize..3, s1 in 0u64..1000, s2 in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let p = &instances()[which];
        let (phi, psi) = (random_cocycle(p, s1), random_cocycle(p, s2 + 1000));
        let mix = phi.combine(a, &psi, b).unwrap();
        for o in 0..p.saddle.orbits.len() {
            let lhs = mix.o_functional(&p.saddle, o).unwrap();
            let rhs = a * phi.o_functional(&p.saddle, o).unwrap() + b * psi.o_functional(&p.saddle, o).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()), "orbit {}: {} vs {}", o, lhs, rhs);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn correction_is_linear(which in 0usize..3, s1 in 0u64..1000, s2 in 0u64..1000, a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let p = &instances()[which];
        let phi = zero_mean(&random_cocycle(p, s1));
        let psi = zero_mean(&random_cocycle(p, s2 + 1000));
        let opts = CorrectionOptions::default();
        let h = |c: &LogCocycle| correction_operator(p, c, &opts).unwrap().h;
        let (hp, hq, hm) = (h(&phi), h(&psi), h(&phi.combine(a, &psi, b).unwrap()));
        let norm = a.abs() * phi.lv() + b.abs() * psi.lv();
        let gap = (0..p.d()).map(|i| (hm[i] - a * hp[i] - b * hq[i]).powi(2)).sum::<f64>().sqrt();
        prop_assert!(gap <= 1e-7 * norm.max(1e-12), "gap {:e}", gap);
    }
}
