//! The correction operator: the piecewise constant cocycle in the unstable,
//! zero-mean subspace whose removal keeps renormalized L1 norms bounded.
//!
//! The mean vectors satisfy `c_{k+1} = A^t c_k + delta_k` with `delta_k`
//! bounded, so the unstable part of `c_k` stays bounded exactly when
//! `P_u c_0 + sum_r (A^t|u)^-(r+1) P_u delta_r` vanishes. That sum is the
//! correction. A second estimate minimizes the deep-level L1 norm directly.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cocycle::{Kind, LogCocycle, Piece, Side, Term};
use crate::engine::{Engine, EngineOptions};
use crate::error::{Error, Result};
use crate::linalg;
use crate::num;
use crate::rauzy::PeriodicIet;

/// Hard cap on series terms.
pub const MAX_TERMS: usize = 64;

/// A^t restricted to an invariant subspace, in an orthonormal basis of it.
#[derive(Debug, Clone)]
pub struct InvariantBlock {
    basis: DMatrix<f64>,
    restricted: DMatrix<f64>,
    inv: DMatrix<f64>,
}

impl InvariantBlock {
    pub fn new(p: &PeriodicIet, vectors: &[Vec<f64>]) -> Result<Self> {
        let d = p.d();
        let q = linalg::orthonormalize(vectors, 1e-10);
        let m = q.len();
        let basis = DMatrix::from_fn(d, m, |i, j| q[j][i]);
        let restricted = basis.transpose() * p.at_f64() * &basis;
        let inv = if m == 0 {
            DMatrix::zeros(0, 0)
        } else {
            restricted.clone().try_inverse().ok_or_else(|| Error::Invalid("restriction is singular".into()))?
        };
        Ok(InvariantBlock { basis, restricted, inv })
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    fn coords(&self, x: &[f64]) -> nalgebra::DVector<f64> {
        self.basis.transpose() * nalgebra::DVector::from_column_slice(x)
    }

    fn vector(&self, y: &nalgebra::DVector<f64>) -> Vec<f64> {
        (&self.basis * y).iter().copied().collect()
    }

    /// (A^t|V)^n x for x in V. Working in coordinates keeps rounding
    /// errors from feeding faster directions outside V.
    pub fn pow(&self, x: &[f64], n: usize) -> Vec<f64> {
        let mut y = self.coords(x);
        for _ in 0..n {
            y = &self.restricted * y;
        }
        self.vector(&y)
    }

    /// (A^t|V)^-n x for x in V.
    pub fn inv_pow(&self, x: &[f64], n: usize) -> Vec<f64> {
        let mut y = self.coords(x);
        for _ in 0..n {
            y = &self.inv * y;
        }
        self.vector(&y)
    }
}

/// Orthonormal basis of the unstable vectors with zero mean.
pub fn unstable_zero_mean_basis(p: &PeriodicIet) -> Vec<Vec<f64>> {
    let lam = &p.base.lambda;
    let bu = &p.spectral.basis_u;
    let Some(j) = (0..bu.len()).max_by(|&a, &b| linalg::dot(&bu[a], lam).abs().total_cmp(&linalg::dot(&bu[b], lam).abs()))
    else {
        return vec![];
    };
    let pj = linalg::dot(&bu[j], lam);
    let vs: Vec<Vec<f64>> = (0..bu.len())
        .filter(|&i| i != j)
        .map(|i| {
            let c = linalg::dot(&bu[i], lam) / pj;
            bu[i].iter().zip(&bu[j]).map(|(x, y)| x - c * y).collect()
        })
        .collect();
    linalg::orthonormalize(&vs, 1e-10)
}

/// Mean vectors c_0..c_kmax of S(k)phi.
pub fn mean_vector_sequence(p: &PeriodicIet, phi: &LogCocycle, k_max: usize) -> Result<Vec<Vec<f64>>> {
    check_zero_mean(phi)?;
    let mut eng = Engine::new(p, phi, EngineOptions::default())?;
    eng.run_to(k_max)?;
    Ok(eng.means())
}

fn check_zero_mean(phi: &LogCocycle) -> Result<()> {
    let m = phi.mean();
    if m.abs() > 1e-10 * (1.0 + phi.lv()) {
        return Err(Error::Invalid(format!("cocycle mean {m:e} is not zero")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesTerm {
    pub r: usize,
    pub norm: f64,
}

/// P c_0 + sum_r (A^t|V)^-(r+1) P delta_r, stopped once a term drops below tol.
pub fn telescoped_series(
    proj: &DMatrix<f64>,
    block: &InvariantBlock,
    c0: &[f64],
    deltas: &[Vec<f64>],
    tol: f64,
) -> Result<(Vec<f64>, Vec<SeriesTerm>, usize)> {
    let mut h = linalg::mat_vec(proj, c0);
    let mut terms = Vec::new();
    for (r, dl) in deltas.iter().enumerate().take(MAX_TERMS) {
        let t = block.inv_pow(&linalg::mat_vec(proj, dl), r + 1);
        let n = linalg::norm2(&t);
        for (x, y) in h.iter_mut().zip(&t) {
            *x += y;
        }
        terms.push(SeriesTerm { r, norm: n });
        // two consecutive small terms guard against an accidental zero
        if r >= 1 && n < tol && terms[r - 1].norm < tol * 1e3 {
            return Ok((h, terms, r + 1));
        }
    }
    if block.dim() == 0 {
        return Ok((h, terms, 0));
    }
    Err(Error::SeriesDiverged { terms: terms.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionResult {
    pub h: Vec<f64>,
    pub terms: Vec<SeriesTerm>,
    pub truncation: usize,
    pub tail_bound: f64,
    pub h_oracle: Vec<f64>,
    pub oracle_gap: f64,
    /// Distance of h from the unstable subspace and its mean against lambda.
    pub off_subspace: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionOptions {
    /// Series tolerance relative to LV(phi) (absolute when LV vanishes).
    pub tol: f64,
    /// Level used by the regression oracle; `None` picks the level where
    /// the slowest unstable direction has grown by 1e6.
    pub oracle_level: Option<usize>,
    pub engine: EngineOptions,
}

impl Default for CorrectionOptions {
    fn default() -> Self {
        CorrectionOptions { tol: 1e-10, oracle_level: None, engine: EngineOptions::default() }
    }
}

fn check_singular(p: &PeriodicIet, phi: &LogCocycle) -> Result<()> {
    if phi.blog() > 0.0 && !phi.is_strong_symmetric(&p.saddle) {
        let worst = (0..p.saddle.orbits.len()).map(|o| phi.symmetry_defect(&p.saddle, o)).fold(0.0, |m: f64, x| {
            if x.abs() > m.abs() {
                x
            } else {
                m
            }
        });
        return Err(Error::WeakSymmetry(worst));
    }
    Ok(())
}

/// The correction h of a zero-mean cocycle, with the regression cross-check.
pub fn correction_operator(p: &PeriodicIet, phi: &LogCocycle, opts: &CorrectionOptions) -> Result<CorrectionResult> {
    check_zero_mean(phi)?;
    check_singular(p, phi)?;
    let basis = unstable_zero_mean_basis(p);
    let block = InvariantBlock::new(p, &p.spectral.basis_u)?;
    let mut eng = Engine::new(p, phi, opts.engine)?;
    let tol = opts.tol * if phi.lv() > 0.0 { phi.lv() } else { 1.0 };
    let proj = &p.spectral.proj_u;
    // run levels until the series settles
    let mut levels = 24.min(MAX_TERMS + 1);
    let (h, terms, truncation) = loop {
        eng.run_to(levels)?;
        match telescoped_series(proj, &block, &eng.records[0].means, &eng.deltas(), tol) {
            Ok(v) => break v,
            Err(Error::SeriesDiverged { .. }) if levels < MAX_TERMS + 1 => levels = (levels + 16).min(MAX_TERMS + 1),
            Err(e) => return Err(e),
        }
    };
    let ratio = (-p.theta_g()).exp();
    let tail_bound = terms.last().map_or(0.0, |t| t.norm * ratio / (1.0 - ratio));
    let k_oracle = opts.oracle_level.unwrap_or_else(|| ((1e6f64.ln() / p.theta_g()).ceil() as usize).clamp(8, 48));
    eng.run_to(k_oracle)?;
    let h_oracle = regression_oracle(p, &eng, &basis, k_oracle)?;
    let oracle_gap = linalg::norm2(&h.iter().zip(&h_oracle).map(|(x, y)| x - y).collect::<Vec<_>>());
    let proj_h = linalg::mat_vec(proj, &h);
    let off_subspace = linalg::norm2(&h.iter().zip(&proj_h).map(|(x, y)| x - y).collect::<Vec<_>>());
    let mean = linalg::dot(&h, &p.base.lambda);
    Ok(CorrectionResult { h, terms, truncation, tail_bound, h_oracle, oracle_gap, off_subspace, mean })
}

/// L1 norm over the base of psi_k minus a constant vector.
fn shifted_l1(eng: &Engine, k: usize, shift: &[f64]) -> f64 {
    let st = eng.state(k);
    let lam = &eng.p.base.lambda;
    num::sum((0..lam.len()).map(|a| {
        let mut pc = st.piece(a, lam[a]);
        pc.poly[0] -= shift[a];
        pc.integral_abs(0.0, lam[a])
    }))
}

/// argmin over h in span(basis) of ||S(k)(phi - h)||_L1 by coordinate descent
/// with golden-section line searches.
pub fn regression_oracle(p: &PeriodicIet, eng: &Engine, basis: &[Vec<f64>], k: usize) -> Result<Vec<f64>> {
    let d = p.d();
    if basis.is_empty() {
        return Ok(vec![0.0; d]);
    }
    let block = InvariantBlock::new(p, basis)?;
    let grown: Vec<Vec<f64>> = basis.iter().map(|b| block.pow(b, k)).collect();
    let c0 = &eng.records[0].means;
    let span = 100.0 * (1.0 + linalg::norm_max(c0) + eng.l1_over_len(0));
    let mut t = vec![0.0; basis.len()];
    let objective = |t: &[f64]| {
        let shift: Vec<f64> = (0..d).map(|a| (0..t.len()).map(|j| t[j] * grown[j][a]).sum()).collect();
        shifted_l1(eng, k, &shift)
    };
    for _sweep in 0..(if basis.len() == 1 { 1 } else { 12 }) {
        for j in 0..basis.len() {
            let (mut lo, mut hi) = (t[j] - span, t[j] + span);
            let g = 0.5 * (5f64.sqrt() - 1.0);
            let eval = |x: f64, t: &mut Vec<f64>| {
                t[j] = x;
                objective(t)
            };
            let mut x1 = hi - g * (hi - lo);
            let mut x2 = lo + g * (hi - lo);
            let mut f1 = eval(x1, &mut t);
            let mut f2 = eval(x2, &mut t);
            for _ in 0..160 {
                if f1 <= f2 {
                    hi = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = hi - g * (hi - lo);
                    f1 = eval(x1, &mut t);
                } else {
                    lo = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = lo + g * (hi - lo);
                    f2 = eval(x2, &mut t);
                }
                if hi - lo <= 1e-15 * (1.0 + lo.abs()) {
                    break;
                }
            }
            t[j] = 0.5 * (lo + hi);
        }
        if basis.len() == 1 {
            break;
        }
    }
    Ok((0..d).map(|a| (0..t.len()).map(|j| t[j] * basis[j][a]).sum()).collect())
}

/// Trend of the normalized L1 norms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Trend {
    Bounded,
    Polynomial { degree: f64 },
    Exponential { rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthProfile {
    pub v: Vec<f64>,
    pub exp_rate: f64,
    pub exp_residual: f64,
    pub poly_degree: f64,
    pub poly_residual: f64,
    pub spread: f64,
    pub trend: Trend,
}

/// Least-squares slopes of log v_k against k and log k over k >= `from`.
pub fn classify_growth(v: &[f64], from: usize) -> GrowthProfile {
    let ks: Vec<usize> = (from.max(1)..v.len()).filter(|&k| v[k] > 0.0).collect();
    let y: Vec<f64> = ks.iter().map(|&k| v[k].ln()).collect();
    let xs: Vec<f64> = ks.iter().map(|&k| k as f64).collect();
    let xl: Vec<f64> = ks.iter().map(|&k| (k as f64).ln()).collect();
    let resid = |x: &[f64], a: f64, b: f64| num::sum(x.iter().zip(&y).map(|(x, y)| (y - a - b * x).powi(2)));
    let (ea, eb) = if ks.len() >= 2 { num::linear_fit(&xs, &y) } else { (0.0, 0.0) };
    let (pa, pb) = if ks.len() >= 2 { num::linear_fit(&xl, &y) } else { (0.0, 0.0) };
    let er = resid(&xs, ea, eb);
    let pr = resid(&xl, pa, pb);
    let pos: Vec<f64> = v.iter().copied().filter(|&x| x > 0.0).collect();
    let spread = if pos.is_empty() {
        1.0
    } else {
        pos.iter().copied().fold(0.0, f64::max) / pos.iter().copied().fold(f64::INFINITY, f64::min)
    };
    let trend = if spread <= 10.0 || (eb <= 0.05 && pb <= 0.5) {
        Trend::Bounded
    } else if er <= pr {
        Trend::Exponential { rate: eb }
    } else {
        Trend::Polynomial { degree: pb }
    };
    GrowthProfile { v: v.to_vec(), exp_rate: eb, exp_residual: er, poly_degree: pb, poly_residual: pr, spread, trend }
}

/// v_k = ||S(k)phi||_L1/|I^(k)| for k = 0..=k_max, with a trend fit.
pub fn growth_profile(p: &PeriodicIet, phi: &LogCocycle, k_max: usize, zero_mean: bool) -> Result<GrowthProfile> {
    let mut eng = Engine::new(p, phi, EngineOptions { zero_mean, ..Default::default() })?;
    eng.run_to(k_max)?;
    let v: Vec<f64> = (0..=k_max).map(|k| eng.l1_over_len(k)).collect();
    Ok(classify_growth(&v, k_max / 3))
}

/// phi = g - g o T for a polynomial g on [0, |I|), plus a constant vector.
pub fn polynomial_coboundary(iet: &crate::iet::Iet, g: &[f64], h0: &[f64]) -> LogCocycle {
    let pieces = (0..iet.d())
        .map(|a| {
            let here = crate::cocycle::taylor_shift(g, iet.left[a]);
            let there = crate::cocycle::taylor_shift(g, iet.left[a] + iet.w[a]);
            let poly: Vec<f64> = here.iter().zip(&there).enumerate().map(|(i, (x, y))| x - y + if i == 0 { h0[a] } else { 0.0 }).collect();
            Piece::with_poly(iet.lambda[a], poly)
        })
        .collect();
    let d = iet.d();
    LogCocycle::new(0, iet.clone(), vec![0.0; d], vec![0.0; d], pieces).expect("bounded pieces")
}

/// Derivative of an absolutely continuous cocycle (polynomials and x log x terms).
pub fn derivative_cocycle(phi: &LogCocycle) -> Result<LogCocycle> {
    if phi.blog() != 0.0 {
        return Err(Error::Invalid("input has logarithmic singularities".into()));
    }
    let d = phi.d();
    let mut cplus = vec![0.0; d];
    let mut cminus = vec![0.0; d];
    let mut pieces = Vec::with_capacity(d);
    for a in 0..d {
        let src = phi.full(a);
        if !src.chebs.is_empty() {
            return Err(Error::Invalid("derivative needs closed-form pieces".into()));
        }
        let mut poly: Vec<f64> = src.poly.iter().enumerate().skip(1).map(|(i, c)| i as f64 * c).collect();
        if poly.is_empty() {
            poly.push(0.0);
        }
        let mut terms = Vec::new();
        for t in &src.terms {
            if t.kind == Kind::Log {
                return Err(Error::Invalid("input has log terms".into()));
            }
            let s = match t.side {
                Side::Plus => t.coef,
                Side::Minus => -t.coef,
            };
            poly[0] += s;
            if t.is_own() {
                match t.side {
                    Side::Plus => cplus[a] -= s,
                    Side::Minus => cminus[a] -= s,
                }
            } else {
                terms.push(Term::log(t.side, t.delta, s));
            }
        }
        pieces.push(Piece { len: src.len, poly, terms, chebs: vec![] });
    }
    // the wrapped parts of the singular constants are already inside the derivative
    for (a, pc) in pieces.iter_mut().enumerate() {
        for t in crate::cocycle::fform_terms(&phi.iet, &cplus, &cminus, a) {
            if !t.is_own() {
                pc.terms.push(Term { coef: -t.coef, ..t });
            }
        }
        pc.merge_terms();
    }
    LogCocycle::new(phi.level, phi.iet.clone(), cplus, cminus, pieces)
}

/// Absolutely continuous cocycle whose derivative has the given symmetric
/// singular constants, plus a polynomial part.
pub fn ac_from_constants(iet: &crate::iet::Iet, cplus: &[f64], cminus: &[f64], polys: &[Vec<f64>]) -> LogCocycle {
    let d = iet.d();
    let pieces = (0..d)
        .map(|a| {
            let mut terms = Vec::new();
            if cplus[a] != 0.0 {
                terms.push(Term::xlogx(Side::Plus, 0.0, -cplus[a]));
            }
            if cminus[a] != 0.0 {
                terms.push(Term::xlogx(Side::Minus, 0.0, cminus[a]));
            }
            Piece { len: iet.lambda[a], poly: polys[a].clone(), terms, chebs: vec![] }
        })
        .collect();
    LogCocycle::new(0, iet.clone(), vec![0.0; d], vec![0.0; d], pieces).expect("regular pieces")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauchyRow {
    pub distance: f64,
    pub pairs: usize,
    pub max_difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlReduction {
    /// Integral of phi' over I.
    pub s_phi: f64,
    /// Integral of psi' over I.
    pub s_psi: f64,
    pub leb: f64,
    pub h: Vec<f64>,
    pub h1: Vec<f64>,
    /// Slopes of psi on each interval.
    pub slopes: Vec<f64>,
    /// Values of psi at the left ends.
    pub offsets: Vec<f64>,
    pub sups: Vec<f64>,
    pub decay_rate: f64,
    pub theta_minus: f64,
    pub decay_ok: bool,
    pub transfer: Vec<(f64, f64)>,
    pub cauchy: Vec<CauchyRow>,
}

impl PlReduction {
    /// psi as a piecewise affine cocycle.
    pub fn psi(&self, iet: &crate::iet::Iet) -> LogCocycle {
        let pieces = (0..iet.d()).map(|a| Piece::with_poly(iet.lambda[a], vec![self.offsets[a], self.slopes[a]])).collect();
        let d = iet.d();
        LogCocycle::new(0, iet.clone(), vec![0.0; d], vec![0.0; d], pieces).expect("affine pieces")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlOptions {
    pub levels: usize,
    pub fit_from: usize,
    pub orbit_len: usize,
    pub x0: f64,
}

impl Default for PlOptions {
    fn default() -> Self {
        PlOptions { levels: 10, fit_from: 2, orbit_len: 20_000, x0: 0.123_456_789 }
    }
}

/// Split an absolutely continuous phi into a piecewise affine part and a
/// part with exponentially decaying renormalized sup norms.
pub fn pl_reduction(p: &PeriodicIet, phi: &LogCocycle, opts: &PlOptions) -> Result<PlReduction> {
    let d = p.d();
    let base = &p.base;
    let dphi = derivative_cocycle(phi)?;
    let s_phi = dphi.integral();
    let leb = s_phi / base.total;
    let centered = dphi.add_constants(&vec![-leb; d]);
    let corr = correction_operator(p, &centered, &CorrectionOptions::default())?;
    let h = corr.h.clone();
    // phi1 = phi - phi(l+) - (leb + h) u on each interval
    let offsets0: Vec<f64> = (0..d).map(|a| phi.full(a).eval(0.0, base.lambda[a])).collect();
    let slopes: Vec<f64> = h.iter().map(|x| leb + x).collect();
    let shift: Vec<LogCocycle> = vec![{
        let pieces = (0..d).map(|a| Piece::with_poly(base.lambda[a], vec![offsets0[a], slopes[a]])).collect();
        LogCocycle::new(0, base.clone(), vec![0.0; d], vec![0.0; d], pieces)?
    }];
    let phi1 = phi.combine(1.0, &shift[0], -1.0)?;
    // sup-norm correction on the central and unstable part
    let block = InvariantBlock::new(p, &[p.spectral.basis_c.clone(), p.spectral.basis_u.clone()].concat())?;
    let mut e1 = Engine::new(p, &phi1, EngineOptions { zero_mean: false, ..Default::default() })?;
    e1.run_to(40)?;
    let proj = p.spectral.proj_cu();
    let (hc, _, _) = telescoped_series(&proj, &block, &e1.records[0].means, &e1.deltas(), 1e-14)?;
    let h1: Vec<f64> = hc.iter().map(|x| -x).collect();
    let phi2 = phi1.add_constants(&h1);
    let mut e2 = Engine::new(p, &phi2, EngineOptions::default())?;
    e2.run_to(opts.levels)?;
    let sups: Vec<f64> = (0..=opts.levels).map(|k| e2.sup(k)).collect();
    let xs: Vec<f64> = (opts.fit_from..=opts.levels).map(|k| k as f64).collect();
    let ys: Vec<f64> = (opts.fit_from..=opts.levels).map(|k| sups[k].max(1e-300).ln()).collect();
    let (_, slope) = num::linear_fit(&xs, &ys);
    let decay_rate = -slope;
    let theta_minus = p.spectral.theta_minus;
    // transfer function along an orbit: u(T^n x0) = -phi2^(n)(x0)
    let mut transfer = Vec::with_capacity(opts.orbit_len);
    let mut x = opts.x0;
    let mut acc = num::Sum::new();
    for _ in 0..opts.orbit_len {
        transfer.push((x, -acc.value()));
        acc.add(phi2.eval(x)?);
        x = base.evaluate(x, crate::iet::Convention::LeftClosed)?;
    }
    let cauchy = cauchy_report(&transfer);
    let offsets: Vec<f64> = (0..d).map(|a| offsets0[a] - h1[a]).collect();
    let s_psi = num::sum((0..d).map(|a| slopes[a] * base.lambda[a]));
    Ok(PlReduction {
        s_phi,
        s_psi,
        leb,
        h,
        h1,
        slopes,
        offsets,
        sups,
        decay_rate,
        theta_minus,
        decay_ok: decay_rate >= 0.7 * theta_minus,
        transfer,
        cauchy,
    })
}

/// Modulus of continuity of the sampled transfer function: the largest
/// difference over all pairs of orbit points closer than each distance.
pub fn cauchy_report(samples: &[(f64, f64)]) -> Vec<CauchyRow> {
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.0.total_cmp(&b.0));
    [1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&dist| {
            let mut pairs = 0;
            let mut worst: f64 = 0.0;
            for i in 0..s.len() {
                for j in i + 1..s.len() {
                    if s[j].0 - s[i].0 >= dist {
                        break;
                    }
                    pairs += 1;
                    worst = worst.max((s[j].1 - s[i].1).abs());
                }
            }
            CauchyRow { distance: dist, pairs, max_difference: worst }
        })
        .collect()
}
