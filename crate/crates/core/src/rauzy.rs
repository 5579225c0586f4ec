//! Rauzy-Veech induction, periodic-type exchanges built from closed loops,
//! level geometry and the bookkeeping of singular endpoints across levels.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iet::{saddle_orbits, Convention, Iet, PermPair, PermPairJson, SaddleData};
use crate::linalg::{self, IntMat};
use crate::num::Dd;
use crate::spectral::Spectral;

#[derive(Debug, Clone, PartialEq)]
pub struct RauzyStep {
    pub eps: usize,
    pub winner: usize,
    pub loser: usize,
    pub theta: IntMat,
    pub from: PermPair,
    pub to: PermPair,
}

/// Elementary matrix I + E_{winner, loser}.
pub fn theta(d: usize, winner: usize, loser: usize) -> IntMat {
    let mut m = IntMat::identity(d, d);
    m[(winner, loser)] += 1;
    m
}

/// Combinatorial step of type `eps`.
pub fn combinatorial_step(perm: &PermPair, eps: usize) -> RauzyStep {
    let winner = perm.last(eps);
    let loser = perm.last(1 - eps);
    RauzyStep { eps, winner, loser, theta: theta(perm.d(), winner, loser), from: perm.clone(), to: perm.successor(eps) }
}

/// Type of the next step, with ties detected at the point tolerance.
pub fn step_type(t: &Iet) -> Option<usize> {
    let top = t.lambda[t.perm.last(0)];
    let bot = t.lambda[t.perm.last(1)];
    if (top - bot).abs() <= t.point_tol() {
        None
    } else if top > bot {
        Some(0)
    } else {
        Some(1)
    }
}

pub fn rauzy_step(t: &Iet) -> Result<(RauzyStep, Iet)> {
    let eps = step_type(t).ok_or(Error::KeaneTie { step: 0 })?;
    let st = combinatorial_step(&t.perm, eps);
    let mut lambda = t.lambda.clone();
    lambda[st.winner] -= lambda[st.loser];
    let next = Iet::new(st.to.clone(), lambda)?;
    Ok((st, next))
}

#[derive(Debug, Clone)]
pub struct RauzyPath {
    pub steps: Vec<RauzyStep>,
    /// IETs before each step and after the last one (len = steps + 1).
    pub iets: Vec<Iet>,
}

impl RauzyPath {
    /// Product Theta(step k) ... Theta(step k'-1).
    pub fn product(&self, k: usize, k2: usize) -> Result<IntMat> {
        let d = self.iets[0].d();
        let mut m = IntMat::identity(d, d);
        for s in &self.steps[k..k2] {
            m = linalg::int_mul(&m, &s.theta)?;
        }
        Ok(m)
    }

    pub fn moves(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.eps).collect()
    }
}

pub fn iterate_path(t: &Iet, n: usize) -> Result<RauzyPath> {
    let mut steps = Vec::with_capacity(n);
    let mut iets = vec![t.clone()];
    for i in 0..n {
        let cur = iets.last().unwrap();
        let (st, next) = rauzy_step(cur).map_err(|e| match e {
            Error::KeaneTie { .. } => Error::KeaneTie { step: i },
            other => other,
        })?;
        steps.push(st);
        iets.push(next);
    }
    Ok(RauzyPath { steps, iets })
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LoopJson {
    pub pair: PermPairJson,
    pub moves: Vec<usize>,
}

/// Combinatorial loop: steps and the product matrix.
pub fn loop_product(perm: &PermPair, moves: &[usize]) -> Result<(Vec<RauzyStep>, IntMat)> {
    let d = perm.d();
    let mut cur = perm.clone();
    let mut steps = Vec::new();
    let mut a = IntMat::identity(d, d);
    for &e in moves {
        if e > 1 {
            return Err(Error::Invalid(format!("move {e} is not 0 or 1")));
        }
        let st = combinatorial_step(&cur, e);
        a = linalg::int_mul(&a, &st.theta)?;
        cur = st.to.clone();
        steps.push(st);
    }
    if cur != *perm {
        return Err(Error::NotClosed(format!("{moves:?} ends at a different pair")));
    }
    Ok((steps, a))
}

/// Perron-Frobenius data of a primitive non-negative integer matrix.
pub fn perron_frobenius(a: &IntMat) -> Result<(f64, Vec<f64>)> {
    let d = a.nrows();
    let mut m = 1;
    let mut pw = a.clone();
    while pw.iter().any(|&v| v <= 0) {
        m += 1;
        if m > 2 * d * d {
            return Err(Error::NotPrimitive);
        }
        pw = linalg::int_mul(&pw, a)?;
    }
    let af = linalg::to_f64(a);
    let pf = linalg::to_f64(&pw);
    let mut v = vec![1.0 / d as f64; d];
    for _ in 0..500 {
        let nv = linalg::mat_vec(&pf, &v);
        let s: f64 = nv.iter().sum();
        let nv: Vec<f64> = nv.iter().map(|x| x / s).collect();
        let diff = nv.iter().zip(&v).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        v = nv;
        if diff < 1e-15 {
            break;
        }
    }
    // Rayleigh-type estimate, then inverse iteration refinement
    let av = linalg::mat_vec(&af, &v);
    let mut rho = av.iter().sum::<f64>() / v.iter().sum::<f64>();
    for _ in 0..4 {
        let shifted = &af - DMatrix::identity(d, d) * (rho * (1.0 + 1e-13));
        let Ok(nv) = linalg::solve(&shifted, &v) else { break };
        let s: f64 = nv.iter().sum();
        v = nv.iter().map(|x| x / s).collect();
        let av = linalg::mat_vec(&af, &v);
        rho = av.iter().sum::<f64>() / v.iter().sum::<f64>();
    }
    let av = linalg::mat_vec(&af, &v);
    let res = av.iter().zip(&v).map(|(x, y)| (x - rho * y).abs()).fold(0.0, f64::max) / rho;
    if res > 1e-12 || v.iter().any(|&x| x <= 0.0) {
        return Err(Error::NotPrimitive);
    }
    Ok((rho, v))
}

/// Newton refinement of a PF pair (rho, v) with sum(v) = 1 to double-double.
pub fn perron_frobenius_dd(a: &IntMat, rho: f64, v: &[f64]) -> Result<(Dd, Vec<Dd>)> {
    let d = a.nrows();
    let mut rho = Dd::new(rho);
    let mut v: Vec<Dd> = v.iter().map(|&x| Dd::new(x)).collect();
    for _ in 0..3 {
        let r: Vec<f64> = (0..d)
            .map(|i| {
                let av = (0..d).fold(Dd::default(), |acc, j| acc.add(v[j].mul(Dd::new(a[(i, j)] as f64))));
                av.sub(rho.mul(v[i])).value()
            })
            .collect();
        let total = v.iter().fold(Dd::default(), |acc, x| acc.add(*x)).sub(Dd::new(1.0)).value();
        let mut m = DMatrix::zeros(d + 1, d + 1);
        let mut rhs = vec![0.0; d + 1];
        for i in 0..d {
            for j in 0..d {
                m[(i, j)] = a[(i, j)] as f64;
            }
            m[(i, i)] -= rho.value();
            m[(i, d)] = -v[i].value();
            rhs[i] = -r[i];
            m[(d, i)] = 1.0;
        }
        rhs[d] = -total;
        let delta = linalg::solve(&m, &rhs)?;
        for i in 0..d {
            v[i] = v[i].add(Dd::new(delta[i]));
        }
        rho = rho.add(Dd::new(delta[d]));
    }
    Ok((rho, v))
}

/// A periodic-type interval exchange with its period data.
#[derive(Debug, Clone)]
pub struct PeriodicIet {
    /// Normalised base exchange (|I| = 1).
    pub base: Iet,
    pub moves: Vec<usize>,
    pub steps: Vec<RauzyStep>,
    /// Period matrix A = Theta^(p).
    pub a: IntMat,
    pub rho: f64,
    pub saddle: SaddleData,
    pub spectral: Spectral,
    pub nu: f64,
    pub level_cap: usize,
}

impl PeriodicIet {
    pub fn d(&self) -> usize {
        self.base.d()
    }

    pub fn period(&self) -> usize {
        self.moves.len()
    }

    pub fn perm(&self) -> &PermPair {
        &self.base.perm
    }

    pub fn a_f64(&self) -> DMatrix<f64> {
        linalg::to_f64(&self.a)
    }

    pub fn at_f64(&self) -> DMatrix<f64> {
        linalg::to_f64(&self.a).transpose()
    }

    pub fn norm_a(&self) -> f64 {
        linalg::norm_int(&self.a) as f64
    }

    pub fn genus(&self) -> usize {
        self.saddle.genus
    }

    pub fn hyperbolic(&self) -> bool {
        // classification succeeded with exactly kappa-1 central directions
        self.spectral.basis_c.len() + 1 == self.saddle.kappa && self.spectral.basis_u.len() == self.genus()
    }

    /// Slowest growth rate on the unstable part (the genus-th exponent).
    pub fn theta_g(&self) -> f64 {
        self.spectral.exponents[self.genus() - 1]
    }

    pub fn to_loop_json(&self) -> LoopJson {
        LoopJson { pair: self.perm().to_json(), moves: self.moves.clone() }
    }

    /// Q(0,k) = A^k.
    pub fn q(&self, k: usize) -> Result<IntMat> {
        linalg::int_pow(&self.a, k)
    }

    /// Return times Q_beta(k, k') (column sums of A^(k'-k)).
    pub fn return_times(&self, k: usize, k2: usize) -> Result<Vec<i64>> {
        Ok(linalg::col_sums(&self.q(k2 - k)?))
    }

    /// The exchange at level k, T^(k): the base scaled by rho^-k.
    pub fn level_geometry(&self, k: usize) -> Result<Iet> {
        if k > self.level_cap {
            return Err(Error::LevelCap { requested: k, max: self.level_cap });
        }
        Ok(self.base.scaled(self.rho.powi(-(k as i32))))
    }

    /// Level-k exchange induced by the actual base lengths, replayed in
    /// double-double. Unlike `level_geometry` it follows the rounding of the
    /// base eigenvector, which matters once rho^(2k) * 1e-16 is not small
    /// against the level scale.
    pub fn induced_geometry(&self, k: usize) -> Result<Iet> {
        let len = self.induced_lengths(k)?;
        Iet::new(self.base.perm.clone(), len.iter().map(|l| l.value()).collect())
    }

    /// Lengths of the level-k intervals of `induced_geometry` before rounding.
    pub fn induced_lengths(&self, k: usize) -> Result<Vec<Dd>> {
        if k > self.level_cap {
            return Err(Error::LevelCap { requested: k, max: self.level_cap });
        }
        let mut len: Vec<Dd> = self.base.lambda.iter().map(|&l| Dd::new(l)).collect();
        for _ in 0..k {
            for st in &self.steps {
                len[st.winner] = len[st.winner].sub(len[st.loser]);
            }
        }
        Ok(len)
    }

    /// |1 - rho |I^(k+1)| / |I^(k)|| for k < k_max, replaying the loop in
    /// double-double from the refined eigenvector.
    pub fn self_similarity(&self, k_max: usize) -> Result<Vec<f64>> {
        let (rho, mut len) = perron_frobenius_dd(&self.a, self.rho, &self.base.lambda)?;
        let total = |l: &[Dd]| l.iter().fold(Dd::default(), |acc, x| acc.add(*x));
        let mut out = Vec::with_capacity(k_max);
        let mut prev = total(&len);
        for _ in 0..k_max {
            for st in &self.steps {
                len[st.winner] = len[st.winner].sub(len[st.loser]);
            }
            let cur = total(&len);
            out.push(rho.mul(cur).div(prev).sub(Dd::new(1.0)).value().abs());
            prev = cur;
        }
        Ok(out)
    }

    /// Level exchange without the precision cap (for normalised work).
    pub fn scale(&self, k: usize) -> f64 {
        self.rho.powi(-(k as i32))
    }

    /// Replay the induction from the eigenvector for `periods` periods.
    pub fn replay(&self, periods: usize) -> Result<RauzyPath> {
        let path = iterate_path(&self.base, periods * self.period())?;
        for (i, st) in path.steps.iter().enumerate() {
            if st.eps != self.moves[i % self.period()] {
                return Err(Error::ReplayMismatch { step: i });
            }
        }
        Ok(path)
    }

    /// The permutation of orbits induced by A on the vectors b(O).
    pub fn orbit_action(&self) -> Vec<usize> {
        let s = &self.saddle;
        (0..s.orbits.len())
            .map(|i| {
                let img = linalg::int_vec_mul(&self.a, &s.b[i]);
                s.b.iter().position(|v| *v == img).expect("A permutes the kernel vectors")
            })
            .collect()
    }

    /// Replace the period by a multiple so that A b(O) = b(O) for every orbit.
    pub fn stabilize_period(&self) -> Result<PeriodicIet> {
        let m = stabilization_order(&self.orbit_action());
        if m == 1 {
            return Ok(self.clone());
        }
        let moves: Vec<usize> = (0..m).flat_map(|_| self.moves.iter().copied()).collect();
        build_periodic_from_loop(self.perm(), &moves)
    }

    /// nu(A): the largest ratio of entries in a common column or row.
    pub fn compute_nu(a: &IntMat) -> f64 {
        let d = a.nrows();
        let mut nu: f64 = 1.0;
        for g in 0..d {
            for x in 0..d {
                for y in 0..d {
                    nu = nu.max(a[(x, g)] as f64 / a[(y, g)] as f64);
                    nu = nu.max(a[(g, x)] as f64 / a[(g, y)] as f64);
                }
            }
        }
        nu
    }
}

/// Order of a permutation given as an image table.
pub fn stabilization_order(action: &[usize]) -> usize {
    let mut m = 1;
    let mut cur: Vec<usize> = action.to_vec();
    while cur.iter().enumerate().any(|(i, &j)| i != j) {
        cur = cur.iter().map(|&i| action[i]).collect();
        m += 1;
    }
    m
}

/// Largest level whose scale stays a million epsilons above rounding.
pub fn level_cap_for(rho: f64) -> usize {
    let floor = 1e6 * f64::EPSILON;
    (floor.ln() / -rho.ln()).floor() as usize
}

pub fn build_periodic_from_loop(perm: &PermPair, moves: &[usize]) -> Result<PeriodicIet> {
    if moves.is_empty() {
        return Err(Error::NotClosed("empty move sequence".into()));
    }
    let (steps, a) = loop_product(perm, moves)?;
    let (rho, lambda) = perron_frobenius(&a)?;
    if a.iter().any(|&v| v <= 0) {
        return Err(Error::NotPrimitive);
    }
    let base = Iet::new(perm.clone(), lambda)?;
    let saddle = saddle_orbits(perm);
    let spectral = Spectral::of_transpose(&a)?;
    let nu = PeriodicIet::compute_nu(&a);
    let p = PeriodicIet { base, moves: moves.to_vec(), steps, a, rho, saddle, spectral, nu, level_cap: level_cap_for(rho) };
    p.replay(3)?;
    Ok(p)
}

pub fn build_from_loop_json(l: &LoopJson) -> Result<PeriodicIet> {
    build_periodic_from_loop(&l.pair.build()?, &l.moves)
}

/// Per-step transport of the constants at right endpoints.
///
/// `chi` follows the branch rule: after a step of type eps the next branch is eps.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularityBook {
    pub k: usize,
    pub k2: usize,
    pub branch: usize,
    /// C^-_new[a] = C^-_old[chi[a]].
    pub chi: Vec<usize>,
    /// Orbit bijection composed along the path (indices into the saddle data).
    pub xi: Vec<usize>,
    /// Left indices: (T^(k))^j l^(k')_a = l^(k)_a.
    pub left_index: Vec<u64>,
    /// Right indices: hat T^(k))^j r^(k')_a = r^(k)_{chi(a)}; None where not admissible.
    pub right_index: Vec<Option<u64>>,
    /// Branch in force after the last step.
    pub final_branch: usize,
}

/// chi for one step with incoming branch `ups`.
pub fn chi_step(st: &RauzyStep, ups: usize, d: usize) -> Vec<usize> {
    let mut chi: Vec<usize> = (0..d).collect();
    let alpha = |row: usize| st.from.last(row);
    chi[alpha(st.eps)] = alpha(ups);
    chi[alpha(1 - st.eps)] = alpha(1 - ups);
    chi
}

/// R applied to a vector of constants at right endpoints for one step.
pub fn transport_minus_step(st: &RauzyStep, c: &[f64]) -> Vec<f64> {
    let a0 = st.from.last(0);
    let a1 = st.from.last(1);
    let mut out = c.to_vec();
    out[st.from.last(1 - st.eps)] = c[a0] + c[a1];
    out[st.from.last(st.eps)] = 0.0;
    out
}

/// The orbit bijection of one step, matched through Theta^-1 b(O) = b(xi O).
pub fn xi_step(st: &RauzyStep, before: &SaddleData, after: &SaddleData) -> Result<Vec<usize>> {
    let d = st.from.d();
    // Theta^-1 = I - E_{winner, loser}
    (0..before.orbits.len())
        .map(|i| {
            let mut v = before.b[i].clone();
            v[st.winner] -= v[st.loser];
            let _ = d;
            after.b.iter().position(|w| *w == v).ok_or_else(|| Error::OrbitSearch("kernel vector has no image orbit".into()))
        })
        .collect()
}

/// Check the boundary-set correspondence of one step; returns a description of the first mismatch.
pub fn check_orbit_correspondence(st: &RauzyStep, before: &SaddleData, after: &SaddleData, xi: &[usize]) -> Option<String> {
    let d = st.from.d();
    let a_eps = st.from.last(st.eps);
    let a_other = st.from.last(1 - st.eps);
    let o_eps = before.orbit_of(d);
    let o_other = (0..before.orbits.len()).find(|&i| before.a_plus[i].contains(&a_other))?;
    let sorted = |mut v: Vec<usize>| {
        v.sort_unstable();
        v
    };
    for i in 0..before.orbits.len() {
        let j = xi[i];
        if sorted(after.a_plus[j].clone()) != sorted(before.a_plus[i].clone()) {
            return Some(format!("plus sets differ for orbit {i}"));
        }
        let mut expect = before.a_minus[i].clone();
        if o_eps != o_other {
            if i == o_eps {
                expect.retain(|&a| a != a_eps);
            } else if i == o_other {
                expect.push(a_eps);
            }
        }
        if sorted(after.a_minus[j].clone()) != sorted(expect) {
            return Some(format!("minus sets differ for orbit {i}"));
        }
    }
    None
}

impl PeriodicIet {
    /// Steps of the path from level k to level k' (periods k..k').
    pub fn steps_between(&self, k: usize, k2: usize) -> impl Iterator<Item = &RauzyStep> {
        let p = self.period();
        (k * p..k2 * p).map(move |i| &self.steps[i % p])
    }

    /// Compose chi along levels k..k' starting from branch `ups`.
    pub fn chi_between(&self, k: usize, k2: usize, ups: usize) -> (Vec<usize>, usize) {
        let d = self.d();
        let mut chi: Vec<usize> = (0..d).collect();
        let mut branch = ups;
        for st in self.steps_between(k, k2) {
            let c = chi_step(st, branch, d);
            chi = c.iter().map(|&a| chi[a]).collect();
            branch = st.eps;
        }
        (chi, branch)
    }

    /// Transport right-end constants along levels k..k'.
    pub fn transport_minus(&self, k: usize, k2: usize, c: &[f64]) -> Vec<f64> {
        let mut v = c.to_vec();
        for st in self.steps_between(k, k2) {
            v = transport_minus_step(st, &v);
        }
        v
    }

    pub fn singularity_bookkeeping(&self, k: usize, k2: usize, ups: usize) -> Result<SingularityBook> {
        if k2 < k {
            return Err(Error::Invalid("k' < k".into()));
        }
        let d = self.d();
        let (chi, final_branch) = self.chi_between(k, k2, ups);
        // xi along the path; the pair is the same at every level but orbits move
        let mut xi: Vec<usize> = (0..self.saddle.orbits.len()).collect();
        for st in self.steps_between(k, k2) {
            let before = saddle_orbits(&st.from);
            let after = saddle_orbits(&st.to);
            let x = xi_step(st, &before, &after)?;
            if let Some(msg) = check_orbit_correspondence(st, &before, &after, &x) {
                return Err(Error::OrbitSearch(msg));
            }
            xi = xi.iter().map(|&i| x[i]).collect();
        }
        let lo = self.induced_geometry(k)?;
        let hi = self.induced_geometry(k2)?;
        let q = self.return_times(k, k2)?;
        let mut left_index = vec![0u64; d];
        let mut right_index = vec![None; d];
        let first_zero = self.perm().last(ups);
        for a in 0..d {
            let j = orbit_hit(&lo, hi.left[a], lo.left[a], q[a] as u64, true, hi.min_length())?
                .ok_or_else(|| Error::OrbitSearch(format!("left end of symbol {a} not reached")))?;
            left_index[a] = j;
            if k2 == k || chi[a] != first_zero {
                let j = orbit_hit(&lo, hi.right[a], lo.right[chi[a]], q[a] as u64, false, hi.min_length())?
                    .ok_or_else(|| Error::OrbitSearch(format!("right end of symbol {a} not reached")))?;
                right_index[a] = Some(j);
            }
        }
        Ok(SingularityBook { k, k2, branch: ups, chi, xi, left_index, right_index, final_branch })
    }
}

/// Search j < limit with T^j(start) = target. Left ends are followed under T,
/// right ends under the hat map, by walking a point nudged into the interior
/// by a small fraction of `scale`.
pub fn orbit_hit(t: &Iet, start: f64, target: f64, limit: u64, left: bool, scale: f64) -> Result<Option<u64>> {
    let tol = t.point_tol().min(1e-6 * scale);
    let nudge = 1e-3 * scale * if left { 1.0 } else { -1.0 };
    // double-double positions keep long orbits well inside the tolerance
    let goal = crate::num::Dd::new(target).add(crate::num::Dd::new(nudge));
    let mut x = crate::num::Dd::new(start).add(crate::num::Dd::new(nudge));
    let w = t.translations_dd();
    for j in 0..limit.max(1) {
        if x.sub(goal).value().abs() <= tol.max(1e-15 * t.total) {
            return Ok(Some(j));
        }
        let a = t.locate(x.value(), Convention::LeftClosed)?;
        x = x.add(w[a]);
    }
    Ok(None)
}

/// One catalog entry of the loop search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoopEntry {
    pub pair: PermPairJson,
    pub moves: Vec<usize>,
    pub period_matrix: Vec<Vec<i64>>,
    pub rho: String,
    pub hyperbolic: bool,
    pub genus: usize,
    pub kappa: usize,
    pub exponents: Vec<String>,
}

/// Breadth-first search over move sequences from `perm` for closed loops with
/// a strictly positive product. `budget` caps the number of expanded nodes.
pub fn search_loops(perm: &PermPair, budget: usize, max_loops: usize) -> Vec<Vec<usize>> {
    let d = perm.d();
    let mut out = Vec::new();
    let mut queue: VecDeque<(PermPair, Vec<usize>, IntMat)> = VecDeque::new();
    queue.push_back((perm.clone(), Vec::new(), IntMat::identity(d, d)));
    let mut expanded = 0;
    while let Some((cur, moves, m)) = queue.pop_front() {
        if expanded >= budget || out.len() >= max_loops {
            break;
        }
        expanded += 1;
        for e in 0..2 {
            let st = combinatorial_step(&cur, e);
            let Ok(m2) = linalg::int_mul(&m, &st.theta) else { continue };
            let mut mv = moves.clone();
            mv.push(e);
            if st.to == *perm && m2.iter().all(|&v| v > 0) {
                out.push(mv.clone());
                if out.len() >= max_loops {
                    break;
                }
            }
            queue.push_back((st.to, mv, m2));
        }
    }
    out
}

pub fn catalog_entry(p: &PeriodicIet) -> LoopEntry {
    let d = p.d();
    LoopEntry {
        pair: p.perm().to_json(),
        moves: p.moves.clone(),
        period_matrix: (0..d).map(|i| (0..d).map(|j| p.a[(i, j)]).collect()).collect(),
        rho: format!("{:e}", p.rho),
        hyperbolic: p.hyperbolic(),
        genus: p.genus(),
        kappa: p.saddle.kappa,
        exponents: p.spectral.exponents.iter().map(|v| format!("{v:e}")).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn golden_pair() -> PermPair {
        PermPair::new(vec!["A".into(), "B".into()], &[1, 2], &[2, 1]).unwrap()
    }

    #[test]
    fn golden_first_step() {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let t = Iet::new(golden_pair(), vec![phi, 1.0]).unwrap();
        let (st, next) = rauzy_step(&t).unwrap();
        // lambda_B < lambda_A, so the bottom row wins
        assert_eq!(st.eps, 1);
        assert!((next.lambda[0] - (phi - 1.0)).abs() < 1e-15);
        assert_eq!(next.lambda[1], 1.0);
    }

    #[test]
    fn tie_is_an_error() {
        let t = Iet::new(golden_pair(), vec![1.0, 1.0]).unwrap();
        assert_eq!(rauzy_step(&t).unwrap_err(), Error::KeaneTie { step: 0 });
    }

    #[test]
    fn golden_loop_spectrum() {
        let p = build_periodic_from_loop(&golden_pair(), &[0, 1]).unwrap();
        assert_eq!(p.a, IntMat::from_row_slice(2, 2, &[1, 1, 1, 2]));
        assert!((p.rho - (3.0 + 5f64.sqrt()) / 2.0).abs() < 1e-13);
        assert!(p.hyperbolic());
    }

    #[test]
    fn non_closed_rejected() {
        let p = PermPair::reverse(4).unwrap();
        assert!(matches!(build_periodic_from_loop(&p, &[0]), Err(Error::NotClosed(_))));
    }

    #[test]
    fn zero_path_product_is_identity() {
        let t = Iet::new(golden_pair(), vec![0.6, 0.4]).unwrap();
        let path = iterate_path(&t, 0).unwrap();
        assert_eq!(path.product(0, 0).unwrap(), IntMat::identity(2, 2));
    }

    #[test]
    fn permutation_orders() {
        assert_eq!(stabilization_order(&[0, 1, 2]), 1);
        assert_eq!(stabilization_order(&[1, 0]), 2);
        assert_eq!(stabilization_order(&[1, 2, 0, 4, 3]), 6);
    }

    #[test]
    fn self_similar_to_double_double() {
        for name in ["golden", "rev4", "rev5"] {
            let p = crate::catalog::build(name).unwrap();
            let dev = p.self_similarity(8).unwrap();
            assert!(dev.iter().all(|&e| e < 1e-10), "{name}: {dev:?}");
        }
    }

    #[test]
    fn empty_budget_finds_nothing() {
        assert!(search_loops(&golden_pair(), 0, 5).is_empty());
        let found = search_loops(&golden_pair(), 10, 1);
        assert_eq!(found.len(), 1);
    }
}
