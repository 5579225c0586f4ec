//! End-to-end acceptance checks, one test per criterion. Each test writes a
//! single PASS/FAIL line straight to stderr so the verdicts show up in plain
//! `cargo test` output.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};

use ietlab::birkhoff::{cancellation_defect, check_constants, consistency_gap, renormalize_structure};
use ietlab::catalog;
use ietlab::cocycle::{fit_local_model, local_model_integral, random_poly_part, random_symmetric_constants, LogCocycle, Piece};
use ietlab::correction::{
    ac_from_constants, classify_growth, correction_operator, growth_profile, pl_reduction, polynomial_coboundary,
    unstable_zero_mean_basis, CorrectionOptions, PlOptions,
};
use ietlab::engine::{Engine, EngineOptions};
use ietlab::ergodicity::{
    build_rigidity_tower, fit_oscillation_constant, oscillation_integral, spacing_report, tightness_integral, CbarPolicy,
};
use ietlab::iet::{omega_rank_and_subspaces, saddle_orbits, PermPair};
use ietlab::linalg;
use ietlab::rauzy::{build_periodic_from_loop, search_loops, PeriodicIet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn criterion(n: usize, title: &str, body: impl FnOnce() -> Outcome) {
    let r = match catch_unwind(AssertUnwindSafe(body)) {
        Ok(r) => r,
        Err(e) => Err(e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into())),
    };
    let (tag, detail) = match &r {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    let _ = writeln!(std::io::stderr(), "criterion {n:>2} {tag}: {title} -- {detail}");
    if let Err(d) = r {
        panic!("criterion {n} failed: {d}");
    }
}

fn check(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn build(name: &str) -> PeriodicIet {
    catalog::build(name).unwrap()
}

const NAMES: [&str; 3] = ["golden", "rev4", "rev5"];

fn zero_mean(phi: LogCocycle) -> LogCocycle {
    let m = phi.mean();
    phi.add_constants(&vec![-m; phi.d()])
}

fn symmetric(p: &PeriodicIet, poly_degree: usize, rng: &mut ChaCha8Rng) -> LogCocycle {
    let (cp, cm) = random_symmetric_constants(&p.base, &p.saddle, rng);
    let g = if poly_degree == 0 {
        p.base.lambda.iter().map(|&l| Piece::zero(l)).collect()
    } else {
        random_poly_part(&p.base, poly_degree, rng)
    };
    zero_mean(LogCocycle::new(0, p.base.clone(), cp, cm, g).unwrap())
}

fn minted() -> Vec<(String, PeriodicIet)> {
    let mut out = Vec::new();
    for mono in [vec![2, 1], vec![4, 3, 2, 1], vec![5, 4, 3, 2, 1], vec![3, 4, 2, 1]] {
        let pair = PermPair::from_monodromy(&mono).unwrap();
        for moves in search_loops(&pair, 20_000, 3) {
            if let Ok(p) = build_periodic_from_loop(&pair, &moves) {
                out.push((format!("{mono:?}/{moves:?}"), p));
            }
        }
    }
    out
}

#[test]
fn c01_conjugation_identity() {
    criterion(1, "conjugation identity on minted loops", || {
        let loops = minted();
        let mut steps = 0;
        for (name, p) in &loops {
            let path = p.replay(3).map_err(|e| format!("{name}: {e}"))?;
            for st in &path.steps {
                let lhs = linalg::int_mul(&linalg::int_mul(&st.theta.transpose(), &st.from.omega()).map_err(err)?, &st.theta)
                    .map_err(err)?;
                if lhs != st.to.omega() {
                    return Err(format!("{name}: step {} breaks the identity", st.eps));
                }
                steps += 1;
            }
        }
        check(loops.len() >= 3, format!("{} loops, {steps} steps over 3 periods each", loops.len()))
    });
}

#[test]
fn c02_self_similarity() {
    criterion(2, "replay and length self-similarity", || {
        let mut worst: f64 = 0.0;
        let loops = minted();
        for (name, p) in &loops {
            p.replay(3).map_err(|e| format!("{name}: {e}"))?;
            let dev = p.self_similarity(8).map_err(err)?;
            worst = worst.max(dev.iter().copied().fold(0.0, f64::max));
        }
        check(worst <= 1e-10 && loops.len() >= 3, format!("{} loops, max deviation {worst:.2e} for k <= 8", loops.len()))
    });
}

#[test]
fn c03_kernel_combinatorics() {
    criterion(3, "kernel vectors", || {
        let mut worst: f64 = 0.0;
        let mut count = 0;
        for (name, p) in minted().iter().chain(catalog::INSTANCES.iter().map(|i| (i.name.to_string(), i.build().unwrap())).collect::<Vec<_>>().iter()) {
            let s = &p.saddle;
            let d = p.d();
            if d != 2 * s.genus + s.kappa - 1 {
                return Err(format!("{name}: d = {d}, g = {}, kappa = {}", s.genus, s.kappa));
            }
            if (0..d).any(|a| s.b.iter().map(|b| b[a]).sum::<i64>() != 0) {
                return Err(format!("{name}: kernel vectors do not sum to zero"));
            }
            let bs: Vec<Vec<f64>> = s.b.iter().map(|b| b.iter().map(|&v| v as f64).collect()).collect();
            let kernel = omega_rank_and_subspaces(p.perm()).kernel;
            let r = if kernel.is_empty() && linalg::orthonormalize(&bs, 1e-12).is_empty() {
                0.0
            } else {
                linalg::mutual_projection_residual(&kernel, &bs)
            };
            worst = worst.max(r);
            let st = p.stabilize_period().map_err(err)?;
            for b in &st.saddle.b {
                if linalg::int_vec_mul(&st.a, b) != *b {
                    return Err(format!("{name}: A b != b after stabilization"));
                }
            }
            count += 1;
        }
        check(worst < 1e-10, format!("{count} instances, span residual {worst:.1e}"))
    });
}

#[test]
fn c04_constants_renormalization() {
    criterion(4, "constants under renormalization", || {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let mut gap: f64 = 0.0;
        for name in NAMES {
            let p = build(name);
            let phi = symmetric(&p, 2, &mut rng);
            for k2 in 1..=4.min(p.level_cap) {
                let view = renormalize_structure(&p, &phi, k2).map_err(err)?;
                let c = check_constants(&p, &phi, &view).map_err(err)?;
                if !c.blog_exact || c.blog_before != c.blog_after {
                    return Err(format!("{name} k'={k2}: Blog {} -> {}", c.blog_before, c.blog_after));
                }
                let top = view.image.iet.total;
                let xs: Vec<f64> = (0..100).map(|_| rng.gen_range(0.0..top)).collect();
                gap = gap.max(consistency_gap(&p, &phi, &view, &xs).map_err(err)?);
            }
        }
        let mut odiff: f64 = 0.0;
        for i in 0..20 {
            let p = build(NAMES[i % 3]);
            let phi = symmetric(&p, 1 + i % 3, &mut rng);
            let k2 = 1 + i % 3;
            let view = renormalize_structure(&p, &phi, k2).map_err(err)?;
            let s2 = saddle_orbits(&view.image.iet.perm);
            for o in 0..p.saddle.orbits.len() {
                let before = phi.o_functional(&p.saddle, o).map_err(err)?;
                let after = view.image.o_functional(&s2, o).map_err(err)?;
                odiff = odiff.max((before - after).abs());
            }
        }
        check(
            gap <= 1e-8 && odiff <= 1e-7,
            format!("Blog exact for k' <= 4, pointwise gap {gap:.1e} at 100 points per level, orbit functional drift {odiff:.1e} on 20 cocycles"),
        )
    });
}

#[test]
fn c05_remainder_bound() {
    criterion(5, "remainder derivative bound", || {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        let mut per = Vec::new();
        for name in NAMES {
            let p = build(name);
            let phi = symmetric(&p, 0, &mut rng);
            let mut eng = Engine::new(&p, &phi, EngineOptions::default()).map_err(err)?;
            let k_max = 6.min(p.level_cap);
            eng.run_to(k_max).map_err(err)?;
            let cs: Vec<f64> = (1..=k_max).map(|k| eng.remainder_constant(k)).collect::<Result<_, _>>().map_err(err)?;
            let (a, b) = cs.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &c| (a.min(c), b.max(c)));
            per.push(format!("{name} [{a:.3e}, {b:.3e}]"));
            lo = lo.min(a);
            hi = hi.max(b);
        }
        check(hi < 3.0 * lo, format!("ratio {:.2} across levels 1..=6 and instances: {}", hi / lo, per.join(", ")))
    });
}

#[test]
fn c06_correction_dichotomy() {
    criterion(6, "corrected growth bounded, unstable shift exponential", || {
        let p = build("rev5");
        if !(p.hyperbolic() && p.genus() == 2 && p.d() == 5) {
            return Err("rev5 is not a hyperbolic genus-2 instance".into());
        }
        let theta = p.theta_g();
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let mut spread: f64 = 0.0;
        let mut rates = Vec::new();
        for _ in 0..3 {
            let phi = symmetric(&p, 2, &mut rng);
            let r = correction_operator(&p, &phi, &CorrectionOptions::default()).map_err(err)?;
            let corrected = phi.add_constants(&r.h.iter().map(|x| -x).collect::<Vec<_>>());
            let gp = growth_profile(&p, &corrected, 8, true).map_err(err)?;
            spread = spread.max(gp.spread);
            let basis = unstable_zero_mean_basis(&p);
            if basis.is_empty() {
                return Err("no zero-mean unstable direction".into());
            }
            // unit vectors: the basis, its negatives and a random combination
            let mut units: Vec<Vec<f64>> = basis.clone();
            units.extend(basis.iter().map(|u| u.iter().map(|x| -x).collect()));
            let mix: Vec<f64> = basis.iter().fold(vec![0.0; p.d()], |acc, u| {
                let c = rng.gen_range(-1.0..1.0);
                acc.iter().zip(u).map(|(a, x)| a + c * x).collect()
            });
            let nm = linalg::norm2(&mix);
            units.push(mix.iter().map(|x| x / nm).collect());
            for u in &units {
                let gp = growth_profile(&p, &corrected.add_constants(u), 8, true).map_err(err)?;
                rates.push(classify_growth(&gp.v, 4).exp_rate);
            }
        }
        let worst = rates.iter().map(|r| (r / theta - 1.0).abs()).fold(0.0, f64::max);
        check(
            spread <= 10.0 && worst <= 0.2,
            format!("corrected max/min {spread:.2} for k <= 8; {} shifted rates within {:.1}% of {theta:.4}", rates.len(), 100.0 * worst),
        )
    });
}

#[test]
fn c07_operator_laws() {
    criterion(7, "correction operator laws", || {
        let opts = CorrectionOptions::default();
        let mut rng = ChaCha8Rng::seed_from_u64(70);
        let (mut fix_u, mut kill_cs, mut cob, mut gap_ratio) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        let mut ncob = 0;
        for name in NAMES {
            let p = build(name);
            for u in unstable_zero_mean_basis(&p) {
                let h = correction_operator(&p, &LogCocycle::piecewise_constant(&p.base, &u), &opts).map_err(err)?.h;
                fix_u = fix_u.max(h.iter().zip(&u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
            }
            for v in p.spectral.basis_s.iter().chain(&p.spectral.basis_c) {
                let h = correction_operator(&p, &LogCocycle::piecewise_constant(&p.base, v), &opts).map_err(err)?.h;
                kill_cs = kill_cs.max(h.iter().map(|x| x.abs()).fold(0.0, f64::max));
            }
            let per = if name == "golden" { 4 } else { 3 };
            for _ in 0..per {
                let deg = rng.gen_range(1..=3);
                let g: Vec<f64> = (0..=deg).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let c = polynomial_coboundary(&p.base, &g, &vec![0.0; p.d()]);
                let h = correction_operator(&p, &c, &opts).map_err(err)?.h;
                cob = cob.max(h.iter().map(|x| x.abs()).fold(0.0, f64::max));
                ncob += 1;
            }
            for _ in 0..2 {
                let r = correction_operator(&p, &symmetric(&p, 2, &mut rng), &opts).map_err(err)?;
                gap_ratio = gap_ratio.max(r.oracle_gap / (1e-4 * (1.0 + linalg::norm2(&r.h))));
            }
        }
        check(
            fix_u <= 1e-8 && kill_cs <= 1e-8 && cob <= 1e-6 && gap_ratio <= 1.0,
            format!(
                "unstable fixed to {fix_u:.1e}, stable+central killed to {kill_cs:.1e}, {ncob} coboundaries to {cob:.1e}, oracle gap at {gap_ratio:.2} of its budget"
            ),
        )
    });
}

/// (ln r, normalized defect) at `points` random (x, symbol) per level.
fn defects(p: &PeriodicIet, phi: &LogCocycle, levels: std::ops::RangeInclusive<usize>, points: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<(f64, f64)>>, String> {
    let mut out = Vec::new();
    for l in levels {
        let q = p.return_times(0, l).map_err(err)?;
        let mut level = Vec::with_capacity(points);
        for _ in 0..points {
            let r = q[rng.gen_range(0..q.len())] as u64;
            let x = rng.gen_range(0.0..p.base.total);
            level.push(((r as f64).ln(), cancellation_defect(phi, x, r).map_err(err)?.normalized));
        }
        out.push(level);
    }
    Ok(out)
}

#[test]
fn c08_cancellation() {
    criterion(8, "cancellations for symmetric, growth for broken symmetry", || {
        let mut rng = ChaCha8Rng::seed_from_u64(80);
        let mut notes = Vec::new();
        let mut ok = true;
        for name in NAMES {
            let p = build(name);
            let phi = symmetric(&p, 1, &mut rng);
            let sym = defects(&p, &phi, 1..=4, 50, &mut rng)?;
            let fitted: Vec<f64> = sym.iter().map(|l| l.iter().map(|v| v.1).fold(0.0, f64::max)).collect();
            let (lo, hi) = fitted.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &c| (a.min(c), b.max(c)));
            // break the balance on one saddle by delta = 1; the uncancelled
            // singular mass then adds about (delta / Blog) ln r per unit of r
            let mut cp = phi.cplus.clone();
            let a = (0..p.d()).find(|&a| cp[a] != 0.0).unwrap_or(0);
            cp[a] += 1.0;
            let broken = LogCocycle::new(0, p.base.clone(), cp, phi.cminus.clone(), phi.g.clone()).map_err(err)?;
            let deepest = match name {
                "golden" => 12,
                "rev4" => 6,
                _ => 5,
            };
            let pts: Vec<(f64, f64)> = defects(&p, &broken, 2..=deepest, 50, &mut rng)?.concat();
            let xs: Vec<f64> = pts.iter().map(|v| v.0).collect();
            let ys: Vec<f64> = pts.iter().map(|v| v.1).collect();
            let (_, slope) = ietlab::num::linear_fit(&xs, &ys);
            let expect = 1.0 / broken.blog();
            ok &= hi < 3.0 * lo && (slope / expect - 1.0).abs() <= 0.25;
            notes.push(format!("{name} M {lo:.2}..{hi:.2}, broken slope in ln r {slope:.3} vs {expect:.3}"));
        }
        check(ok, notes.join("; "))
    });
}

#[test]
fn c09_rigidity_gates() {
    criterion(9, "rigidity tower gates", || {
        let mut rng = ChaCha8Rng::seed_from_u64(90);
        let mut points = 0;
        let mut towers = 0;
        for name in NAMES {
            let p = build(name);
            let phi = symmetric(&p, 1, &mut rng);
            for n in 2..=6 {
                let t = build_rigidity_tower(&p, &phi, n, CbarPolicy::Formula).map_err(|e| format!("{name} n={n}: {e}"))?;
                if !t.gates.all() {
                    return Err(format!("{name} n={n}: {:?}", t.gates));
                }
                towers += 1;
                if [2, 4, 6].contains(&n) {
                    for _ in 0..20 {
                        let k = rng.gen_range(0..t.p_n);
                        let (lo, hi) = t.floors[k as usize];
                        let r = spacing_report(&p, &phi, &t, k, rng.gen_range(lo..hi)).map_err(err)?;
                        if !r.holds() {
                            return Err(format!("{name} n={n}: {}", r.witness.unwrap_or_default()));
                        }
                        points += 1;
                    }
                }
            }
        }
        check(true, format!("{towers} towers with height, measure, displacement and disjointness gates; spacing clauses at {points} points"))
    });
}

#[test]
fn c10_tightness_and_oscillation() {
    criterion(10, "tightness, oscillation and the coboundary control", || {
        let p = build("golden");
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        let raw = symmetric(&p, 1, &mut rng);
        let r = correction_operator(&p, &raw, &CorrectionOptions::default()).map_err(err)?;
        let phi = raw.add_constants(&r.h.iter().map(|x| -x).collect::<Vec<_>>());
        if phi.blog() == 0.0 || !phi.is_strong_symmetric(&p.saddle) {
            return Err("input is not a strong-symmetric cocycle with Blog > 0".into());
        }
        let ss = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0];
        let mut ints = Vec::new();
        let mut rows = Vec::new();
        let mut towers = Vec::new();
        for n in 2..=6 {
            let t = build_rigidity_tower(&p, &phi, n, CbarPolicy::Formula).map_err(err)?;
            ints.push(tightness_integral(&p, &phi, &t, 16).map_err(err)?.integral);
            rows.extend(oscillation_integral(&p, &phi, &t, &ss).map_err(err)?.rows);
            towers.push(t);
        }
        let ratio = ints.iter().copied().fold(0.0, f64::max) / ints.iter().copied().fold(f64::INFINITY, f64::min);
        let c_hat = fit_oscillation_constant(&rows);
        // one constant for every n: fitted on n = 2..4 it must already cover n = 5, 6
        let split = 3 * ss.len();
        let c_early = fit_oscillation_constant(&rows[..split]);
        let covered = rows[split..].iter().all(|r| r.value <= 2.0 / 3.0 * r.measure + c_early / r.s.abs() + 1e-12);
        let cob = polynomial_coboundary(&p.base, &[0.0, 0.5, -0.5], &[0.0, 0.0]);
        let t6 = &towers[4];
        let control = oscillation_integral(&p, &cob, t6, &ss).map_err(err)?;
        let weakest = control.rows.iter().map(|r| r.value / r.measure).fold(f64::INFINITY, f64::min);
        check(
            ratio <= 10.0 && covered && weakest > 0.9,
            format!(
                "tightness max/min {ratio:.2} over n=2..6; constant {c_hat:.2e} over all n, {c_early:.2e} from n <= 4 covers n = 5, 6; coboundary at n=6 keeps >= {weakest:.3} of |Xi|"
            ),
        )
    });
}

#[test]
fn c11_local_model() {
    criterion(11, "local model integrals", || {
        let mut worst: f64 = 0.0;
        for s in [1e-6, 1e-4, 1e-3, 0.01, 0.1, 0.37, 0.9] {
            let one = local_model_integral(&|_, _| 1.0, s).map_err(err)?;
            let xy = local_model_integral(&|x, y| x * y, s).map_err(err)?;
            let x = local_model_integral(&|x, _| x, s).map_err(err)?;
            worst = worst.max((one + s.ln()).abs()).max((xy + s * s.ln()).abs()).max((x - (1.0 - s)).abs());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(110);
        let mut coef: f64 = 0.0;
        for _ in 0..5 {
            let c: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let g = |x: f64, y: f64| {
                c[0] + c[1] * x + c[2] * y + c[3] * x * y + c[4] * x * x + c[5] * y * y + c[6] * ((x * y).exp() - 1.0) + c[7] * x.cos()
            };
            let (a, b) = fit_local_model(&g).map_err(err)?;
            coef = coef.max((a - (c[0] + c[7])).abs()).max((b - (c[3] + c[6])).abs());
        }
        check(worst <= 1e-8 && coef <= 1e-4, format!("closed forms to {worst:.1e}; coefficients of 5 random g to {coef:.1e}"))
    });
}

#[test]
fn c12_piecewise_affine_reduction() {
    criterion(12, "piecewise affine reduction", || {
        let mut rng = ChaCha8Rng::seed_from_u64(120);
        let mut notes = Vec::new();
        let mut ok = true;
        for name in ["golden", "rev4", "rev4", "rev5", "rev5"] {
            let p = build(name);
            let (cp, cm) = random_symmetric_constants(&p.base, &p.saddle, &mut rng);
            let polys: Vec<Vec<f64>> = (0..p.d()).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            let phi = ac_from_constants(&p.base, &cp, &cm, &polys);
            let levels = if name == "rev5" { 6 } else { 8 };
            let r = pl_reduction(&p, &phi, &PlOptions { levels, ..Default::default() }).map_err(|e| format!("{name}: {e}"))?;
            let slope = (r.s_psi - r.s_phi).abs();
            ok &= r.decay_rate >= 0.7 * r.theta_minus && slope <= 1e-8;
            notes.push(format!("{name} rate {:.3}/{:.3}, slope {slope:.0e}", r.decay_rate, r.theta_minus));
        }
        check(ok, notes.join("; "))
    });
}
