//! Cocycles over an interval exchange with logarithmic singularities at the
//! ends of the exchanged intervals.
//!
//! On each interval the function is a polynomial in the local coordinate
//! `u = x - l` plus terms `c log t` and `c t log t`, where `t = delta + u`
//! (anchored on the left) or `t = delta + v`, `v = r - x` (anchored on the
//! right), plus optional Chebyshev parts. Derivatives and antiderivatives
//! stay in the same family, so means and integrals are exact up to rounding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iet::{Convention, Iet, SaddleData};
use crate::num::{self, Cheb, Sum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Plus,
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Kind {
    Log,
    XLogX,
}

#[inline]
fn xlnx(t: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else {
        t * t.ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub kind: Kind,
    pub side: Side,
    pub delta: f64,
    pub coef: f64,
}

impl Term {
    pub fn log(side: Side, delta: f64, coef: f64) -> Self {
        Term { kind: Kind::Log, side, delta, coef }
    }

    pub fn xlogx(side: Side, delta: f64, coef: f64) -> Self {
        Term { kind: Kind::XLogX, side, delta, coef }
    }

    #[inline]
    pub fn t(&self, u: f64, v: f64) -> f64 {
        self.delta
            + match self.side {
                Side::Plus => u,
                Side::Minus => v,
            }
    }

    #[inline]
    fn sgn(&self) -> f64 {
        match self.side {
            Side::Plus => 1.0,
            Side::Minus => -1.0,
        }
    }

    /// Singular at the own end of the piece.
    pub fn is_own(&self) -> bool {
        self.delta == 0.0
    }

    #[inline]
    pub fn value(&self, u: f64, v: f64) -> f64 {
        let t = self.t(u, v);
        match self.kind {
            Kind::Log => self.coef * t.ln(),
            Kind::XLogX => self.coef * xlnx(t),
        }
    }

    #[inline]
    pub fn deriv(&self, u: f64, v: f64) -> f64 {
        let t = self.t(u, v);
        self.sgn()
            * self.coef
            * match self.kind {
                Kind::Log => 1.0 / t,
                Kind::XLogX => t.ln() + 1.0,
            }
    }

    #[inline]
    pub fn deriv2(&self, u: f64, v: f64) -> f64 {
        let t = self.t(u, v);
        match self.kind {
            Kind::Log => -self.coef / (t * t),
            Kind::XLogX => self.coef / t,
        }
    }

    /// Antiderivative in x.
    #[inline]
    pub fn anti(&self, u: f64, v: f64) -> f64 {
        let t = self.t(u, v);
        self.sgn()
            * self.coef
            * match self.kind {
                Kind::Log => xlnx(t) - t,
                Kind::XLogX => 0.5 * t * xlnx(t) - 0.25 * t * t,
            }
    }
}

fn horner(p: &[f64], x: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn poly_deriv(p: &[f64]) -> Vec<f64> {
    p.iter().enumerate().skip(1).map(|(i, c)| i as f64 * c).collect()
}

fn poly_anti(p: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0];
    out.extend(p.iter().enumerate().map(|(i, c)| c / (i + 1) as f64));
    out
}

/// Coefficients of p(x + s).
pub fn taylor_shift(p: &[f64], s: f64) -> Vec<f64> {
    let mut c = p.to_vec();
    let n = c.len();
    for i in 0..n {
        for j in (i..n.saturating_sub(1)).rev() {
            c[j] += s * c[j + 1];
        }
    }
    c
}

/// One continuity interval of a cocycle, in local coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub len: f64,
    /// Coefficients in u, lowest degree first.
    pub poly: Vec<f64>,
    pub terms: Vec<Term>,
    /// Chebyshev parts, each on a sub-range of the u axis covering [0, len].
    pub chebs: Vec<Cheb>,
}

impl Piece {
    pub fn zero(len: f64) -> Self {
        Piece { len, poly: Vec::new(), terms: Vec::new(), chebs: Vec::new() }
    }

    pub fn constant(len: f64, c: f64) -> Self {
        Piece { len, poly: vec![c], terms: Vec::new(), chebs: Vec::new() }
    }

    pub fn with_poly(len: f64, poly: Vec<f64>) -> Self {
        Piece { len, poly, terms: Vec::new(), chebs: Vec::new() }
    }

    #[inline]
    pub fn eval(&self, u: f64, v: f64) -> f64 {
        let mut s = horner(&self.poly, u);
        for t in &self.terms {
            s += t.value(u, v);
        }
        for c in &self.chebs {
            s += c.eval(u);
        }
        s
    }

    #[inline]
    pub fn eval_u(&self, u: f64) -> f64 {
        self.eval(u, self.len - u)
    }

    /// Value with the own-end log terms on `side` removed (their regular part).
    pub fn eval_regular(&self, u: f64, v: f64, side: Side) -> f64 {
        let mut s = horner(&self.poly, u);
        for t in &self.terms {
            if t.kind == Kind::Log && t.side == side && t.is_own() {
                continue;
            }
            s += t.value(u, v);
        }
        for c in &self.chebs {
            s += c.eval(u);
        }
        s
    }

    pub fn deriv(&self, u: f64, v: f64) -> f64 {
        let dp = poly_deriv(&self.poly);
        let mut s = horner(&dp, u);
        for t in &self.terms {
            s += t.deriv(u, v);
        }
        for c in &self.chebs {
            s += c.derivative().eval(u);
        }
        s
    }

    pub fn deriv2(&self, u: f64, v: f64) -> f64 {
        let dp = poly_deriv(&poly_deriv(&self.poly));
        let mut s = horner(&dp, u);
        for t in &self.terms {
            s += t.deriv2(u, v);
        }
        for c in &self.chebs {
            s += c.derivative().derivative().eval(u);
        }
        s
    }

    pub fn anti_chebs(&self) -> Vec<Cheb> {
        self.chebs.iter().map(|c| c.antiderivative()).collect()
    }

    /// Antiderivative in x (arbitrary constant), given precomputed Chebyshev antiderivatives.
    pub fn anti_with(&self, u: f64, v: f64, anti: &[Cheb]) -> f64 {
        let mut s = Sum::new();
        s.add(horner(&poly_anti(&self.poly), u));
        for t in &self.terms {
            s.add(t.anti(u, v));
        }
        for c in anti {
            s.add(c.eval(u));
        }
        s.value()
    }

    /// Integral over [u1, u2].
    pub fn integral(&self, u1: f64, u2: f64) -> f64 {
        let a = self.anti_chebs();
        self.anti_with(u2, self.len - u2, &a) - self.anti_with(u1, self.len - u1, &a)
    }

    pub fn mean(&self) -> f64 {
        self.integral(0.0, self.len) / self.len
    }

    /// Integral of |f| over [u1, u2]: exact antiderivative differences between sign changes.
    pub fn integral_abs(&self, u1: f64, u2: f64) -> f64 {
        if u2 <= u1 {
            return 0.0;
        }
        let len = self.len;
        let f = |u: f64| self.eval(u, len - u);
        let mut cuts = vec![u1];
        cuts.extend(num::sign_changes(&f, u1, u2, 200));
        cuts.push(u2);
        let a = self.anti_chebs();
        let vals: Vec<f64> = cuts.iter().map(|&u| self.anti_with(u, len - u, &a)).collect();
        num::sum(vals.windows(2).map(|w| (w[1] - w[0]).abs()))
    }

    /// Restriction to the sub-range [off_u, len - off_v], re-expressed in its own coordinates.
    pub fn translate(&self, off_u: f64, off_v: f64, new_len: f64) -> Piece {
        let poly = if off_u == 0.0 { self.poly.clone() } else { taylor_shift(&self.poly, off_u) };
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let off = match t.side {
                    Side::Plus => off_u,
                    Side::Minus => off_v,
                };
                Term { delta: t.delta + off, ..*t }
            })
            .collect();
        let chebs = self.chebs.iter().map(|c| Cheb { a: c.a - off_u, b: c.b - off_u, coef: c.coef.clone() }).collect();
        Piece { len: new_len, poly, terms, chebs }
    }

    pub fn add_assign(&mut self, o: &Piece) {
        if self.poly.len() < o.poly.len() {
            self.poly.resize(o.poly.len(), 0.0);
        }
        for (a, b) in self.poly.iter_mut().zip(&o.poly) {
            *a += b;
        }
        self.terms.extend_from_slice(&o.terms);
        self.chebs.extend(o.chebs.iter().cloned());
    }

    pub fn scale(&self, s: f64) -> Piece {
        Piece {
            len: self.len,
            poly: self.poly.iter().map(|c| c * s).collect(),
            terms: self.terms.iter().map(|t| Term { coef: t.coef * s, ..*t }).collect(),
            chebs: self.chebs.iter().map(|c| Cheb { a: c.a, b: c.b, coef: c.coef.iter().map(|x| x * s).collect() }).collect(),
        }
    }

    /// Merge terms with identical kind, side and anchor; drop zero coefficients.
    pub fn merge_terms(&mut self) {
        self.terms.sort_by(|a, b| {
            (a.kind as u8, a.side as u8).cmp(&(b.kind as u8, b.side as u8)).then(a.delta.total_cmp(&b.delta))
        });
        let mut out: Vec<Term> = Vec::with_capacity(self.terms.len());
        for t in self.terms.drain(..) {
            match out.last_mut() {
                Some(l) if l.kind == t.kind && l.side == t.side && l.delta == t.delta => l.coef += t.coef,
                _ => out.push(t),
            }
        }
        out.retain(|t| t.coef != 0.0);
        self.terms = out;
    }

    /// Sum of coefficients of the own-end log terms on `side`.
    pub fn own_log(&self, side: Side) -> f64 {
        self.terms.iter().filter(|t| t.kind == Kind::Log && t.side == side && t.is_own()).map(|t| t.coef).sum()
    }
}

fn add_const(p: &mut Vec<f64>, c: f64) {
    if p.is_empty() {
        p.push(0.0);
    }
    p[0] += c;
}

/// Chebyshev interpolant of f(u, len - u) on [0, len] with `n` nodes, computed
/// with both local coordinates taken directly from the node angle.
pub fn fit_cheb(f: &dyn Fn(f64, f64) -> f64, len: f64, n: usize) -> Cheb {
    let vals: Vec<f64> = node_uv(len, n).into_iter().map(|(u, v)| f(u, v)).collect();
    Cheb::fit(0.0, len, &vals)
}

/// Chebyshev nodes as (u, v) pairs with u + v = len, accurate near both ends.
pub fn node_uv(len: f64, n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|k| {
            let th = std::f64::consts::PI * (k as f64 + 0.5) / n as f64;
            let (s, c) = (0.5 * th).sin_cos();
            (len * s * s, len * c * c)
        })
        .collect()
}

/// Flags returned by `classify`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub geometric_type: bool,
    pub weak_symmetric: bool,
    pub strong_symmetric: bool,
    pub bv: bool,
    pub bv1: bool,
    pub mean: f64,
}

/// Result of `mean_and_bounds`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanReport {
    pub mean_j: f64,
    pub mean_piece: f64,
    pub deviation: f64,
    pub deviation_bound: f64,
    pub oscillation: f64,
    pub oscillation_bound: f64,
}

impl MeanReport {
    pub fn holds(&self) -> bool {
        self.deviation <= self.deviation_bound && self.oscillation <= self.oscillation_bound
    }
}

/// A cocycle on the intervals of `iet`:
/// `phi = -sum C+ log(|I|{(x-l)/|I|}) - sum C- log(|I|{(r-x)/|I|}) + g`.
#[derive(Debug, Clone)]
pub struct LogCocycle {
    pub level: usize,
    pub iet: Iet,
    pub cplus: Vec<f64>,
    pub cminus: Vec<f64>,
    /// Regular part, one piece per symbol. No own-end log terms allowed.
    pub g: Vec<Piece>,
    full: Vec<Piece>,
}

/// The wrapped log terms of the singular part on the piece of `alpha`.
pub fn fform_terms(iet: &Iet, cplus: &[f64], cminus: &[f64], alpha: usize) -> Vec<Term> {
    let d = iet.d();
    let mut out = Vec::new();
    for g in 0..d {
        if cplus[g] != 0.0 {
            let delta = if g == alpha {
                0.0
            } else if iet.left[g] > iet.left[alpha] {
                iet.left[alpha] - iet.left[g] + iet.total
            } else {
                iet.left[alpha] - iet.left[g]
            };
            out.push(Term::log(Side::Plus, delta, -cplus[g]));
        }
        if cminus[g] != 0.0 {
            let delta = if g == alpha {
                0.0
            } else if iet.right[g] < iet.right[alpha] {
                iet.right[g] - iet.right[alpha] + iet.total
            } else {
                iet.right[g] - iet.right[alpha]
            };
            out.push(Term::log(Side::Minus, delta, -cminus[g]));
        }
    }
    out
}

impl LogCocycle {
    pub fn new(level: usize, iet: Iet, cplus: Vec<f64>, cminus: Vec<f64>, g: Vec<Piece>) -> Result<Self> {
        let d = iet.d();
        if cplus.len() != d || cminus.len() != d || g.len() != d {
            return Err(Error::Invalid("cocycle data does not match the alphabet".into()));
        }
        for (a, p) in g.iter().enumerate() {
            if (p.len - iet.lambda[a]).abs() > 1e-12 * iet.total {
                return Err(Error::Invalid(format!("piece {a} has length {} but the interval has {}", p.len, iet.lambda[a])));
            }
            if p.terms.iter().any(|t| t.kind == Kind::Log && t.is_own()) {
                return Err(Error::Invalid(format!("piece {a}: own-end log terms belong to the singular constants")));
            }
            if p.terms.iter().any(|t| t.delta < 0.0) {
                return Err(Error::Invalid(format!("piece {a}: anchor inside the interval")));
            }
        }
        let full = (0..d)
            .map(|a| {
                let mut p = g[a].clone();
                p.len = iet.lambda[a];
                p.terms.extend(fform_terms(&iet, &cplus, &cminus, a));
                p
            })
            .collect();
        Ok(LogCocycle { level, iet, cplus, cminus, g, full })
    }

    /// Piecewise constant cocycle h = sum h_a chi_{I_a}.
    pub fn piecewise_constant(iet: &Iet, h: &[f64]) -> Self {
        let d = iet.d();
        let g = (0..d).map(|a| Piece::constant(iet.lambda[a], h[a])).collect();
        LogCocycle::new(0, iet.clone(), vec![0.0; d], vec![0.0; d], g).expect("valid constant cocycle")
    }

    /// Pure singular part with zero regular part.
    pub fn pure_log(iet: &Iet, cplus: Vec<f64>, cminus: Vec<f64>) -> Result<Self> {
        let g = iet.lambda.iter().map(|&l| Piece::zero(l)).collect();
        LogCocycle::new(0, iet.clone(), cplus, cminus, g)
    }

    pub fn d(&self) -> usize {
        self.iet.d()
    }

    pub fn full(&self, a: usize) -> &Piece {
        &self.full[a]
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.full
    }

    /// Local coordinates of x on its interval (left-closed convention).
    pub fn locate(&self, x: f64) -> Result<(usize, f64, f64)> {
        let a = self.iet.locate(x, Convention::LeftClosed)?;
        Ok((a, x - self.iet.left[a], self.iet.right[a] - x))
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        let (a, u, v) = self.locate(x)?;
        Ok(self.full[a].eval(u, v))
    }

    pub fn eval_uv(&self, a: usize, u: f64, v: f64) -> f64 {
        self.full[a].eval(u, v)
    }

    pub fn deriv(&self, x: f64) -> Result<f64> {
        let (a, u, v) = self.locate(x)?;
        Ok(self.full[a].deriv(u, v))
    }

    /// Same cocycle plus a piecewise constant vector.
    pub fn add_constants(&self, h: &[f64]) -> Self {
        let g = self.g.iter().zip(h).map(|(p, &c)| {
            let mut q = p.clone();
            add_const(&mut q.poly, c);
            q
        });
        LogCocycle::new(self.level, self.iet.clone(), self.cplus.clone(), self.cminus.clone(), g.collect()).expect("same shape")
    }

    /// a*self + b*other on the same exchange.
    pub fn combine(&self, a: f64, other: &LogCocycle, b: f64) -> Result<Self> {
        if self.iet != other.iet {
            return Err(Error::Invalid("cocycles live on different exchanges".into()));
        }
        let cp = self.cplus.iter().zip(&other.cplus).map(|(x, y)| a * x + b * y).collect();
        let cm = self.cminus.iter().zip(&other.cminus).map(|(x, y)| a * x + b * y).collect();
        let g = self
            .g
            .iter()
            .zip(&other.g)
            .map(|(p, q)| {
                let mut r = p.scale(a);
                r.add_assign(&q.scale(b));
                r
            })
            .collect();
        LogCocycle::new(self.level, self.iet.clone(), cp, cm, g)
    }

    pub fn blog(&self) -> f64 {
        num::sum(self.cplus.iter().chain(&self.cminus).map(|c| c.abs()))
    }

    /// Total variation of the regular part over the disjoint union of intervals.
    pub fn var_g(&self) -> f64 {
        num::sum(self.g.iter().map(piece_variation))
    }

    pub fn lv(&self) -> f64 {
        self.blog() + self.var_g()
    }

    pub fn integral(&self) -> f64 {
        num::sum(self.full.iter().map(|p| p.integral(0.0, p.len)))
    }

    pub fn mean(&self) -> f64 {
        self.integral() / self.iet.total
    }

    /// Per-symbol means m(phi, I_a).
    pub fn piece_means(&self) -> Vec<f64> {
        self.full.iter().map(|p| p.mean()).collect()
    }

    /// Integral of |phi| over [u1, u2] in the local coordinate of symbol a.
    pub fn integrate_abs_on(&self, a: usize, u1: f64, u2: f64) -> f64 {
        self.full[a].integral_abs(u1, u2)
    }

    /// Integral of |phi| over I.
    pub fn integrate_abs(&self) -> f64 {
        num::sum(self.full.iter().map(|p| p.integral_abs(0.0, p.len)))
    }

    /// sup |g'| over all pieces, sampled densely towards the ends.
    pub fn sup_dg(&self) -> f64 {
        self.g.iter().map(|p| sup_abs(&|u: f64, v: f64| p.deriv(u, v), p.len)).fold(0.0, f64::max)
    }

    /// sup |phi'(x)| dist(x, End(T)), sampled with geometric refinement at the ends.
    pub fn los(&self) -> f64 {
        let mut best: f64 = 0.0;
        for p in &self.full {
            let len = p.len;
            let mut pts = num::probe_grid(0.0, len, 10_000);
            pts.retain(|&u| u > 0.0 && u < len);
            for u in pts {
                let v = len - u;
                best = best.max((p.deriv(u, v) * u.min(v)).abs());
            }
        }
        best
    }

    pub fn symmetry_defect(&self, s: &SaddleData, orbit: usize) -> f64 {
        let m: f64 = s.a_minus[orbit].iter().map(|&a| self.cminus[a]).sum();
        let p: f64 = s.a_plus[orbit].iter().map(|&a| self.cplus[a]).sum();
        m - p
    }

    fn sym_tol(&self) -> f64 {
        1e-12 * (1.0 + self.blog())
    }

    pub fn is_geometric_type(&self) -> bool {
        let p = &self.iet.perm;
        (self.cminus[p.last(0)] == 0.0 || self.cminus[p.last(1)] == 0.0)
            && (self.cplus[p.first(0)] == 0.0 || self.cplus[p.first(1)] == 0.0)
    }

    pub fn weak_defect(&self) -> f64 {
        num::sum(self.cminus.iter().copied()) - num::sum(self.cplus.iter().copied())
    }

    pub fn is_strong_symmetric(&self, s: &SaddleData) -> bool {
        (0..s.orbits.len()).all(|o| self.symmetry_defect(s, o).abs() <= self.sym_tol())
    }

    pub fn classify(&self, s: &SaddleData) -> Classification {
        let bv = self.blog() == 0.0;
        let own_xlogx = self.g.iter().any(|p| p.terms.iter().any(|t| t.is_own()));
        Classification {
            geometric_type: self.is_geometric_type(),
            weak_symmetric: self.weak_defect().abs() <= self.sym_tol(),
            strong_symmetric: self.is_strong_symmetric(s),
            bv,
            bv1: bv && !own_xlogx,
            mean: self.mean(),
        }
    }

    /// Boundary functional of an orbit from the regular parts at the ends.
    pub fn o_functional(&self, s: &SaddleData, orbit: usize) -> Result<f64> {
        let defect = self.symmetry_defect(s, orbit);
        if defect.abs() > self.sym_tol() {
            return Err(Error::DivergentFunctional { orbit, defect });
        }
        let mut acc = Sum::new();
        for &a in &s.a_minus[orbit] {
            let p = &self.full[a];
            acc.add(p.eval_regular(p.len, 0.0, Side::Minus));
        }
        for &a in &s.a_plus[orbit] {
            let p = &self.full[a];
            acc.add(-p.eval_regular(0.0, p.len, Side::Plus));
        }
        Ok(acc.value())
    }

    /// The same functional for bounded cocycles, from one-sided limits
    /// extrapolated linearly from two small offsets.
    pub fn o_functional_bv(&self, s: &SaddleData, orbit: usize) -> Result<f64> {
        if self.blog() != 0.0 {
            return Err(Error::Invalid("one-sided limits need a bounded cocycle".into()));
        }
        let h = 1e-7 * self.iet.min_length();
        let delta = |x: f64| {
            let mut acc = Sum::new();
            for &a in &s.a_minus[orbit] {
                let p = &self.full[a];
                acc.add(p.eval(p.len - x, x));
            }
            for &a in &s.a_plus[orbit] {
                let p = &self.full[a];
                acc.add(-p.eval(x, p.len - x));
            }
            acc.value()
        };
        Ok(2.0 * delta(h) - delta(2.0 * h))
    }

    /// Sum of the functional over all orbits (the total jump for bounded input).
    pub fn slope_functional(&self, s: &SaddleData) -> Result<f64> {
        (0..s.orbits.len()).map(|o| self.o_functional(s, o)).sum()
    }

    /// Mean on J = [u1, u2] inside I_a and the two bounds on means over subintervals.
    pub fn mean_and_bounds(&self, a: usize, u1: f64, u2: f64) -> Result<MeanReport> {
        let p = &self.full[a];
        if !(u1 >= 0.0 && u2 <= p.len * (1.0 + 1e-15) && u2 > u1) {
            return Err(Error::CrossesDiscontinuity { a: self.iet.left[a] + u1, b: self.iet.left[a] + u2 });
        }
        let lj = u2 - u1;
        let mean_j = p.integral(u1, u2) / lj;
        let mean_piece = p.mean();
        let shifted = {
            let mut q = p.clone();
            add_const(&mut q.poly, -mean_j);
            q
        };
        let lv = self.lv();
        Ok(MeanReport {
            mean_j,
            mean_piece,
            deviation: (mean_j - mean_piece).abs(),
            deviation_bound: lv * (4.0 + p.len / lj),
            oscillation: shifted.integral_abs(u1, u2) / lj,
            oscillation_bound: 8.0 * lv,
        })
    }

    pub fn to_json(&self) -> CocycleJson {
        let g = self
            .g
            .iter()
            .enumerate()
            .map(|(a, p)| {
                let (l, r) = (self.iet.left[a], self.iet.right[a]);
                let anchor = |t: &Term| match t.side {
                    Side::Plus => l - t.delta,
                    Side::Minus => r + t.delta,
                };
                let pick = |k: Kind| {
                    p.terms
                        .iter()
                        .filter(|t| t.kind == k)
                        .map(|t| AnchorJson { anchor: anchor(t), side: t.side, coef: t.coef })
                        .collect()
                };
                PieceJson { interval: [l, r], poly: p.poly.clone(), logs: pick(Kind::Log), xlogx: pick(Kind::XLogX), cheb: p.chebs.clone() }
            })
            .collect();
        CocycleJson { level: self.level, cplus: self.cplus.clone(), cminus: self.cminus.clone(), g }
    }

    pub fn from_json(iet: &Iet, j: &CocycleJson) -> Result<Self> {
        let d = iet.d();
        if j.g.len() != d {
            return Err(Error::Invalid("wrong number of pieces".into()));
        }
        let mut g = Vec::with_capacity(d);
        for (a, pj) in j.g.iter().enumerate() {
            let (l, r) = (iet.left[a], iet.right[a]);
            let tol = 1e-12 * iet.total;
            if (pj.interval[0] - l).abs() > tol || (pj.interval[1] - r).abs() > tol {
                return Err(Error::Invalid(format!("piece {a} interval does not match the exchange")));
            }
            let mut terms = Vec::new();
            for (kind, list) in [(Kind::Log, &pj.logs), (Kind::XLogX, &pj.xlogx)] {
                for t in list.iter() {
                    let delta = match t.side {
                        Side::Plus => l - t.anchor,
                        Side::Minus => t.anchor - r,
                    };
                    let delta = if delta.abs() <= tol { 0.0 } else { delta };
                    terms.push(Term { kind, side: t.side, delta, coef: t.coef });
                }
            }
            g.push(Piece { len: iet.lambda[a], poly: pj.poly.clone(), terms, chebs: pj.cheb.clone() });
        }
        LogCocycle::new(j.level, iet.clone(), j.cplus.clone(), j.cminus.clone(), g)
    }
}

/// Random singular constants of geometric type with zero defect on every orbit.
/// The extreme constants of the bottom row vanish.
pub fn random_symmetric_constants<R: rand::Rng>(iet: &Iet, s: &SaddleData, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let d = iet.d();
    let p = &iet.perm;
    let (no_minus, no_plus) = (p.last(1), p.first(1));
    let mut cplus = vec![0.0; d];
    let mut cminus = vec![0.0; d];
    for o in 0..s.orbits.len() {
        let minus: Vec<usize> = s.a_minus[o].iter().copied().filter(|&a| a != no_minus).collect();
        let plus: Vec<usize> = s.a_plus[o].iter().copied().filter(|&a| a != no_plus).collect();
        if minus.is_empty() || plus.is_empty() {
            continue;
        }
        for &a in &minus {
            cminus[a] = rng.gen_range(-1.0..1.0);
        }
        for &a in &plus {
            cplus[a] = rng.gen_range(-1.0..1.0);
        }
        let defect: f64 = minus.iter().map(|&a| cminus[a]).sum::<f64>() - plus.iter().map(|&a| cplus[a]).sum::<f64>();
        cplus[plus[0]] += defect;
    }
    (cplus, cminus)
}

/// Random polynomial regular part of degree `deg`.
pub fn random_poly_part<R: rand::Rng>(iet: &Iet, deg: usize, rng: &mut R) -> Vec<Piece> {
    iet.lambda
        .iter()
        .map(|&l| Piece::with_poly(l, (0..=deg).map(|i| rng.gen_range(-1.0..1.0) / l.powi(i as i32)).collect()))
        .collect()
}

/// Total variation of a piece from the zeros of its derivative.
pub fn piece_variation(p: &Piece) -> f64 {
    let len = p.len;
    let df = |u: f64| p.deriv(u, len - u);
    let mut cuts = vec![0.0];
    cuts.extend(num::sign_changes(&df, 0.0, len, 200));
    cuts.push(len);
    let vals: Vec<f64> = cuts.iter().map(|&u| p.eval(u, len - u)).collect();
    num::sum(vals.windows(2).map(|w| (w[1] - w[0]).abs()))
}

/// sup |f| on [0, len] from dense probing plus both ends.
pub fn sup_abs(f: &dyn Fn(f64, f64) -> f64, len: f64) -> f64 {
    let mut m = f(0.0, len).abs().max(f(len, 0.0).abs());
    for u in num::probe_grid(0.0, len, 400) {
        m = m.max(f(u, len - u).abs());
    }
    m
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AnchorJson {
    pub anchor: f64,
    pub side: Side,
    pub coef: f64,
}

/// One piece in JSON form; `poly` is in the local coordinate x - interval[0].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PieceJson {
    pub interval: [f64; 2],
    pub poly: Vec<f64>,
    pub logs: Vec<AnchorJson>,
    pub xlogx: Vec<AnchorJson>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cheb: Vec<Cheb>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CocycleJson {
    pub level: usize,
    #[serde(rename = "Cplus")]
    pub cplus: Vec<f64>,
    #[serde(rename = "Cminus")]
    pub cminus: Vec<f64>,
    pub g: Vec<PieceJson>,
}

/// xi(s) = int_s^1 g(u, s/u) du/u, computed in the variable tau = log u and
/// split at u = sqrt(s).
pub fn local_model_integral(g: &dyn Fn(f64, f64) -> f64, s: f64) -> Result<f64> {
    if !(s > 0.0 && s <= 1.0) {
        return Err(Error::Invalid(format!("model integral needs 0 < s <= 1, got {s}")));
    }
    let f = |tau: f64| {
        let u = tau.exp();
        g(u, s / u)
    };
    let ls = s.ln();
    let mid = 0.5 * ls;
    Ok(num::integrate_adaptive(&f, ls, mid, 1e-15, 40) + num::integrate_adaptive(&f, mid, 0.0, 1e-15, 40))
}

/// Least-squares fit of xi on log-spaced s; returns (a, b) with
/// xi(s) ~ -a log s - b s log s + smooth.
pub fn fit_local_model(g: &dyn Fn(f64, f64) -> f64) -> Result<(f64, f64)> {
    let n = 80;
    let (lo, hi) = (1e-7f64.ln(), 1e-2f64.ln());
    let mut rows = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for i in 0..n {
        let s = (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp();
        let l = s.ln();
        rows.push(vec![l, s * l, 1.0, s, s * s, s * s * l, s * s * s]);
        ys.push(local_model_integral(g, s)?);
    }
    let c = num::lstsq(&rows, &ys);
    Ok((-c[0], -c[1]))
}
