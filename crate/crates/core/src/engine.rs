//! Level-by-level renormalization of a cocycle in normalized coordinates.
//!
//! `psi_k(y) = S(k)phi(rho^-k y)` lives on the base exchange. On each base
//! interval it is kept as
//! `lp ln u + lm ln v + xp u ln u + xm v ln v + s(u) + e`,
//! with `s` a zero-mean Chebyshev interpolant. One step sums `psi_k` over the
//! level-1 floors. Singular terms on floors that touch an endpoint are moved
//! symbolically; everything else is sampled and refitted. The constants obey
//! `e_{k+1} = A^t e_k + d_k` with `d_k` bounded, which keeps the growing part
//! exact while the fitted part stays small.

use serde::{Deserialize, Serialize};

use crate::birkhoff::{Floor, Tower};
use crate::cocycle::{fform_terms, node_uv, Kind, LogCocycle, Piece, Side, Term};
use crate::error::{Error, Result};
use crate::linalg;
use crate::num::{self, Cheb};
use crate::rauzy::PeriodicIet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineOptions {
    pub min_nodes: usize,
    pub max_nodes: usize,
    /// Relative size of the trailing coefficients accepted for a fit.
    pub tail_tol: f64,
    /// Remove the Perron-Frobenius drift from the means (for zero-mean input).
    pub zero_mean: bool,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions { min_nodes: 64, max_nodes: 512, tail_tol: 1e-13, zero_mean: true }
    }
}

/// Endpoint terms on one base interval.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Own {
    pub lp: f64,
    pub lm: f64,
    pub xp: f64,
    pub xm: f64,
}

impl Own {
    fn value(&self, u: f64, v: f64) -> f64 {
        let mut s = 0.0;
        if self.lp != 0.0 {
            s += self.lp * u.ln();
        }
        if self.lm != 0.0 {
            s += self.lm * v.ln();
        }
        if self.xp != 0.0 {
            s += self.xp * xlnx(u);
        }
        if self.xm != 0.0 {
            s += self.xm * xlnx(v);
        }
        s
    }

    fn mean(&self, len: f64) -> f64 {
        let l = (self.lp + self.lm) * (len.ln() - 1.0);
        let x = (self.xp + self.xm) * (0.5 * len * len.ln() - 0.25 * len);
        l + x
    }

    fn terms(&self) -> Vec<Term> {
        let mut t = Vec::new();
        if self.xp != 0.0 {
            t.push(Term::xlogx(Side::Plus, 0.0, self.xp));
        }
        if self.xm != 0.0 {
            t.push(Term::xlogx(Side::Minus, 0.0, self.xm));
        }
        t
    }
}

fn xlnx(t: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else {
        t * t.ln()
    }
}

/// psi_k in normalized coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelState {
    pub level: usize,
    pub own: Vec<Own>,
    pub smooth: Vec<Cheb>,
    pub e: Vec<f64>,
}

impl LevelState {
    pub fn eval(&self, a: usize, u: f64, v: f64) -> f64 {
        self.own[a].value(u, v) + self.smooth[a].eval(u) + self.e[a]
    }

    /// Per-symbol means c_k.
    pub fn means(&self, lambda: &[f64]) -> Vec<f64> {
        (0..self.e.len()).map(|a| self.e[a] + self.own[a].mean(lambda[a])).collect()
    }

    fn own_means(&self, lambda: &[f64]) -> Vec<f64> {
        (0..self.e.len()).map(|a| self.own[a].mean(lambda[a])).collect()
    }

    /// The state as a piece of the cocycle family (base coordinates).
    pub fn piece(&self, a: usize, len: f64) -> Piece {
        let o = &self.own[a];
        let mut terms = o.terms();
        if o.lp != 0.0 {
            terms.push(Term::log(Side::Plus, 0.0, o.lp));
        }
        if o.lm != 0.0 {
            terms.push(Term::log(Side::Minus, 0.0, o.lm));
        }
        Piece { len, poly: vec![self.e[a]], terms, chebs: vec![self.smooth[a].clone()] }
    }
}

/// Per-level diagnostics recorded by the engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub level: usize,
    pub means: Vec<f64>,
    /// c_{k+1} - A^t c_k, computed from bounded quantities (absent at the last level).
    pub delta: Option<Vec<f64>>,
    pub nodes: Vec<usize>,
}

pub struct Engine<'a> {
    pub p: &'a PeriodicIet,
    pub opts: EngineOptions,
    floors: Vec<Vec<Floor>>,
    omega: Vec<f64>,
    pub states: Vec<LevelState>,
    pub records: Vec<LevelRecord>,
}

/// Chebyshev fit of `f(u, v)` on [0, len] with adaptive node count.
fn adaptive_fit(f: &dyn Fn(f64, f64) -> f64, len: f64, opts: &EngineOptions) -> Result<(Cheb, usize)> {
    let mut n = opts.min_nodes;
    loop {
        let vals: Vec<f64> = node_uv(len, n).into_iter().map(|(u, v)| f(u, v)).collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite sample in the smooth part".into()));
        }
        let c = Cheb::fit(0.0, len, &vals);
        let scale = c.coef.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1e-300);
        if c.tail_norm(4) <= opts.tail_tol * scale.max(1.0) || n >= opts.max_nodes {
            return Ok((chop(c, opts.tail_tol * scale.max(1.0) * 0.1), n));
        }
        n *= 2;
    }
}

fn chop(mut c: Cheb, tol: f64) -> Cheb {
    while c.coef.len() > 1 && c.coef.last().map_or(false, |x| x.abs() < tol) {
        c.coef.pop();
    }
    c
}

impl<'a> Engine<'a> {
    /// Start from a level-0 cocycle on the base exchange.
    pub fn new(p: &'a PeriodicIet, phi: &LogCocycle, opts: EngineOptions) -> Result<Self> {
        if phi.level != 0 || phi.iet != p.base {
            return Err(Error::Invalid("the engine starts from a cocycle on the base exchange".into()));
        }
        let d = p.d();
        let tower = Tower::new(p, 0, 1)?;
        let mut own = vec![Own::default(); d];
        let mut smooth = Vec::with_capacity(d);
        let mut e = vec![0.0; d];
        for a in 0..d {
            let full = phi.full(a);
            let mut rest = full.clone();
            rest.terms.clear();
            for t in &full.terms {
                if t.is_own() {
                    let o = &mut own[a];
                    match (t.kind, t.side) {
                        (Kind::Log, Side::Plus) => o.lp += t.coef,
                        (Kind::Log, Side::Minus) => o.lm += t.coef,
                        (Kind::XLogX, Side::Plus) => o.xp += t.coef,
                        (Kind::XLogX, Side::Minus) => o.xm += t.coef,
                    }
                } else {
                    rest.terms.push(*t);
                }
            }
            let (mut c, _) = adaptive_fit(&|u, v| rest.eval(u, v), full.len, &opts)?;
            let m = c.integral() / full.len;
            c.coef[0] -= m;
            e[a] = m;
            smooth.push(c);
        }
        let omega = pf_left(p)?;
        let state = LevelState { level: 0, own, smooth, e };
        let mut eng = Engine { p, opts, floors: tower.floors, omega, states: vec![], records: vec![] };
        let nodes = vec![0; d];
        eng.records.push(LevelRecord { level: 0, means: state.means(&p.base.lambda), delta: None, nodes });
        eng.states.push(state);
        if opts.zero_mean {
            eng.remove_drift(0);
        }
        Ok(eng)
    }

    pub fn level(&self) -> usize {
        self.states.len() - 1
    }

    pub fn state(&self, k: usize) -> &LevelState {
        &self.states[k]
    }

    fn remove_drift(&mut self, k: usize) -> f64 {
        let lam = &self.p.base.lambda;
        let c = self.states[k].means(lam);
        let t = linalg::dot(&c, lam) / linalg::dot(&self.omega, lam);
        for (x, w) in self.states[k].e.iter_mut().zip(&self.omega) {
            *x -= t * w;
        }
        self.records[k].means = self.states[k].means(lam);
        t
    }

    /// Advance one level.
    pub fn step(&mut self) -> Result<()> {
        let p = self.p;
        let d = p.d();
        let lam = &p.base.lambda;
        let rho = p.rho;
        let lr = rho.ln();
        let cur = self.states.last().unwrap().clone();
        let mut own = vec![Own::default(); d];
        let mut smooth = Vec::with_capacity(d);
        let mut dk = vec![0.0; d];
        let mut nodes = vec![0; d];
        for beta in 0..d {
            let floors = &self.floors[beta];
            // symbolic moves at floors touching an endpoint
            let mut lin = [0.0f64; 3]; // constant, u coefficient, v coefficient
            for f in floors {
                let o = &cur.own[f.alpha];
                if f.off == 0.0 {
                    own[beta].lp += o.lp;
                    own[beta].xp += o.xp / rho;
                    lin[0] -= o.lp * lr;
                    lin[1] -= o.xp * lr / rho;
                }
                if f.roff == 0.0 {
                    own[beta].lm += o.lm;
                    own[beta].xm += o.xm / rho;
                    lin[0] -= o.lm * lr;
                    lin[2] -= o.xm * lr / rho;
                }
            }
            let f = |u: f64, v: f64| {
                let (us, vs) = (u / rho, v / rho);
                let mut acc = num::Sum::new();
                acc.add(lin[0] + lin[1] * u + lin[2] * v);
                for fl in floors {
                    let o = &cur.own[fl.alpha];
                    let (uu, vv) = (fl.off + us, fl.roff + vs);
                    acc.add(cur.smooth[fl.alpha].eval(uu));
                    if fl.off != 0.0 {
                        acc.add(o.lp * uu.ln() + o.xp * xlnx(uu));
                    }
                    if fl.roff != 0.0 {
                        acc.add(o.lm * vv.ln() + o.xm * xlnx(vv));
                    }
                }
                acc.value()
            };
            let (mut c, n) = adaptive_fit(&f, lam[beta], &self.opts)?;
            let m = c.integral() / lam[beta];
            c.coef[0] -= m;
            dk[beta] = m;
            nodes[beta] = n;
            smooth.push(c);
        }
        let at = p.at_f64();
        let e_prop = linalg::mat_vec(&at, &cur.e);
        let e: Vec<f64> = e_prop.iter().zip(&dk).map(|(x, y)| x + y).collect();
        let next = LevelState { level: cur.level + 1, own, smooth, e };
        let k = cur.level;
        self.records.push(LevelRecord { level: k + 1, means: next.means(lam), delta: None, nodes });
        self.states.push(next);
        let t = if self.opts.zero_mean { self.remove_drift(k + 1) } else { 0.0 };
        // c_{k+1} - A^t c_k = d_k - t omega + own_{k+1} - A^t own_k
        let om0 = linalg::mat_vec(&at, &cur.own_means(lam));
        let om1 = self.states[k + 1].own_means(lam);
        let delta: Vec<f64> = (0..d).map(|a| dk[a] - t * self.omega[a] + om1[a] - om0[a]).collect();
        self.records[k].delta = Some(delta);
        Ok(())
    }

    pub fn run_to(&mut self, k: usize) -> Result<()> {
        while self.level() < k {
            self.step()?;
        }
        Ok(())
    }

    /// psi_k as a cocycle on the base exchange (normalized level k).
    pub fn normalized(&self, k: usize) -> Result<LogCocycle> {
        let s = &self.states[k];
        let base = &self.p.base;
        let d = base.d();
        let cplus: Vec<f64> = s.own.iter().map(|o| -o.lp).collect();
        let cminus: Vec<f64> = s.own.iter().map(|o| -o.lm).collect();
        let g = (0..d)
            .map(|a| {
                let mut terms = s.own[a].terms();
                for t in fform_terms(base, &cplus, &cminus, a) {
                    if !t.is_own() {
                        terms.push(Term { coef: -t.coef, ..t });
                    }
                }
                Piece { len: base.lambda[a], poly: vec![s.e[a]], terms, chebs: vec![s.smooth[a].clone()] }
            })
            .collect();
        LogCocycle::new(k, base.clone(), cplus, cminus, g)
    }

    /// v_k = ||S(k)phi||_L1 / |I^(k)|.
    pub fn l1_over_len(&self, k: usize) -> f64 {
        let s = &self.states[k];
        let lam = &self.p.base.lambda;
        num::sum((0..lam.len()).map(|a| s.piece(a, lam[a]).integral_abs(0.0, lam[a]))) / self.p.base.total
    }

    /// ||S(k)phi||_sup (for bounded states).
    pub fn sup(&self, k: usize) -> f64 {
        let s = &self.states[k];
        let lam = &self.p.base.lambda;
        (0..lam.len())
            .map(|a| {
                let pc = s.piece(a, lam[a]);
                crate::cocycle::sup_abs(&|u, v| pc.eval(u, v), lam[a])
            })
            .fold(0.0, f64::max)
    }

    /// sup |g~'| |I^(k)| / Blog: the regular part's derivative in level units.
    pub fn remainder_constant(&self, k: usize) -> Result<f64> {
        let c = self.normalized(k)?;
        let b = c.blog();
        if b == 0.0 {
            return Err(Error::ZeroBlog);
        }
        Ok(c.sup_dg() / b)
    }

    pub fn deltas(&self) -> Vec<Vec<f64>> {
        self.records.iter().filter_map(|r| r.delta.clone()).collect()
    }

    pub fn means(&self) -> Vec<Vec<f64>> {
        self.records.iter().map(|r| r.means.clone()).collect()
    }
}

/// Left Perron-Frobenius eigenvector of A (the growing direction of A^t).
pub fn pf_left(p: &PeriodicIet) -> Result<Vec<f64>> {
    let at = p.a.transpose();
    let (_, v) = crate::rauzy::perron_frobenius(&at)?;
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::birkhoff::renormalize_structure;
    use crate::catalog;
    use crate::iet::Convention;

    #[test]
    fn agrees_with_exact_tower() {
        let p = catalog::build("rev4").unwrap();
        let d = p.d();
        let mut cp = vec![0.0; d];
        let mut cm = vec![0.0; d];
        // one matched pair on a single orbit
        let s = &p.saddle;
        let o = (0..s.orbits.len()).find(|&o| !s.a_minus[o].is_empty() && !s.a_plus[o].is_empty()).unwrap();
        let am = *s.a_minus[o].iter().find(|&&a| a != p.perm().last(1)).unwrap();
        let ap = *s.a_plus[o].iter().find(|&&a| a != p.perm().first(1)).unwrap();
        cm[am] = 1.0;
        cp[ap] = 1.0;
        let g: Vec<Piece> = (0..d).map(|a| Piece::with_poly(p.base.lambda[a], vec![0.0, 1.0])).collect();
        let phi0 = LogCocycle::new(0, p.base.clone(), cp, cm, g).unwrap();
        let phi = phi0.add_constants(&vec![-phi0.mean(); d]);
        let mut eng = Engine::new(&p, &phi, EngineOptions::default()).unwrap();
        eng.run_to(3).unwrap();
        for k in 1..=3 {
            let view = renormalize_structure(&p, &phi, k).unwrap();
            let scale = p.rho.powi(k as i32);
            let hi = &view.image.iet;
            for i in 0..25 {
                let x = hi.total * (i as f64 + 0.43) / 25.0;
                let a = hi.locate(x, Convention::LeftClosed).unwrap();
                let (u, v) = ((x - hi.left[a]) * scale, (hi.right[a] - x) * scale);
                let exact = view.image.eval(x).unwrap();
                let approx = eng.state(k).eval(a, u, v);
                assert!((exact - approx).abs() < 1e-9 * (1.0 + exact.abs()), "k={k} {exact} {approx}");
            }
            let m1 = view.image.piece_means();
            let m2 = &eng.records[k].means;
            for (x, y) in m1.iter().zip(m2) {
                assert!((x - y).abs() < 1e-9 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn constant_vector_follows_transpose() {
        let p = catalog::build("golden").unwrap();
        let u = p.spectral.basis_u[0].clone();
        let h = LogCocycle::piecewise_constant(&p.base, &u);
        let mut eng = Engine::new(&p, &h, EngineOptions { zero_mean: false, ..Default::default() }).unwrap();
        eng.run_to(5).unwrap();
        let at = p.at_f64();
        let mut v = u.clone();
        for k in 1..=5 {
            v = linalg::mat_vec(&at, &v);
            for (x, y) in eng.records[k].means.iter().zip(&v) {
                assert!((x - y).abs() < 1e-10 * (1.0 + y.abs()));
            }
            for dl in eng.records[k - 1].delta.as_ref().unwrap() {
                assert!(dl.abs() < 1e-10);
            }
        }
    }
}
