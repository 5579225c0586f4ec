//! Rigidity towers and the diagnostics built on them: spacing along orbits,
//! tightness of Birkhoff sums at rigidity times, oscillatory integrals,
//! empirical distributions of the sums, and a consistency classifier.
//!
//! Sums over a tower are computed once on the base floor and then slid up
//! floor by floor, which costs O(p_n) per node instead of O(q_n).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::birkhoff::{birkhoff_sum, birkhoff_sum_deriv, birkhoff_sum_deriv2, Orbit};
use crate::cocycle::{sup_abs, LogCocycle};
use crate::engine::{Engine, EngineOptions};
use crate::error::{Error, Result};
use crate::iet::{Convention, Iet};
use crate::num;
use crate::rauzy::{orbit_hit, PeriodicIet};

/// Largest q_n * nodes evaluated by direct orbit sums.
pub const DIRECT_BUDGET: u64 = 20_000_000;
/// Largest return time walked point by point.
pub const ORBIT_BUDGET: u64 = 100_000_000;

const SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Case {
    /// The tracked singularity sits at a right end.
    R,
    /// The tracked singularity sits at a left end.
    L,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CbarPolicy {
    /// c = (|C|/(pi^2 nu^2 Blog + sup|g''|))^(1/2), clipped below 1/2.
    Formula,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TowerGates {
    pub controlled_height: bool,
    pub measure_bound: bool,
    /// sup |T^q x - x| over the tower.
    pub displacement: f64,
    pub displacement_ok: bool,
    /// |Xi symmetric-difference T^-1 Xi|.
    pub invariance_defect: f64,
    pub invariance_ok: bool,
    pub disjoint: bool,
}

impl TowerGates {
    pub fn all(&self) -> bool {
        self.controlled_height && self.measure_bound && self.displacement_ok && self.invariance_ok && self.disjoint
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigidityTower {
    pub n: usize,
    pub case: Case,
    pub beta0: usize,
    pub beta_n: usize,
    pub j_n: u64,
    pub q_n: u64,
    pub p_n: u64,
    pub cbar: f64,
    /// The formula value, recorded even when overridden.
    pub cbar_formula: f64,
    /// |I^(n)_beta_n|.
    pub lambda: f64,
    /// |I^(n)|.
    pub level_len: f64,
    /// [a_0, b_0) = I^(n)_beta_n.
    pub a0: f64,
    pub b0: f64,
    /// Translation of T^q_n on I^(n)_beta_n.
    pub shift: f64,
    /// J_k, k < p_n.
    pub floors: Vec<(f64, f64)>,
    pub measure: f64,
    pub measure_lower: f64,
    pub gates: TowerGates,
}

impl RigidityTower {
    pub fn base_floor(&self) -> (f64, f64) {
        self.floors[0]
    }

    pub fn floor_len(&self) -> f64 {
        self.floors[0].1 - self.floors[0].0
    }

    /// The thirds of J_0 used by the derivative refinement (left, right).
    pub fn thirds(&self) -> ((f64, f64), (f64, f64)) {
        let (lo, hi) = self.base_floor();
        let t = (hi - lo) / 3.0;
        ((lo, lo + t), (hi - t, hi))
    }
}

fn sup_g2(phi: &LogCocycle) -> f64 {
    phi.g.iter().map(|pc| sup_abs(&|u, v| pc.deriv2(u, v), pc.len)).fold(0.0, f64::max)
}

/// Tower of Definition-style rigidity sets over I^(n)_beta_n.
pub fn build_rigidity_tower(p: &PeriodicIet, phi: &LogCocycle, n: usize, policy: CbarPolicy) -> Result<RigidityTower> {
    if n < 2 {
        return Err(Error::Invalid("rigidity towers need n >= 2".into()));
    }
    let blog = phi.blog();
    if blog == 0.0 {
        return Err(Error::ZeroBlog);
    }
    if !phi.is_geometric_type() {
        return Err(Error::GeometricType("tower construction".into()));
    }
    let base = &p.base;
    let perm = base.perm.clone();
    let d = base.d();
    let hi = p.induced_geometry(n)?;
    let q = p.return_times(0, n)?;
    let q2 = p.return_times(0, n - 2)?;
    let abar = perm.first(0);
    let p_n = q2[abar] as u64;
    let scale = hi.min_length();

    let largest = |c: &[f64], allowed: &dyn Fn(usize) -> bool| {
        (0..d).filter(|&a| c[a] != 0.0 && allowed(a)).max_by(|&a, &b| c[a].abs().total_cmp(&c[b].abs()))
    };
    let (case, beta0, beta_n, j_n) = if let Some(b0) = largest(&phi.cminus, &|_| true) {
        let mut found = None;
        for beta in 0..d {
            if let Some(j) = orbit_hit(base, hi.right[beta], base.right[b0], q[beta] as u64, false, scale)? {
                found = Some((beta, j));
                break;
            }
        }
        let (beta, j) = found.ok_or_else(|| Error::OrbitSearch(format!("right end of {b0} not reached from level {n}")))?;
        (Case::R, b0, beta, j)
    } else {
        let defect = phi.weak_defect();
        if defect.abs() > 1e-12 * (1.0 + blog) {
            return Err(Error::WeakSymmetry(defect));
        }
        let (f0, f1) = (perm.first(0), perm.first(1));
        let b0 = largest(&phi.cplus, &|a| a != f0 && a != f1)
            .ok_or_else(|| Error::OrbitSearch("no admissible left singularity".into()))?;
        let j = orbit_hit(base, hi.left[b0], base.left[b0], q[b0] as u64, true, scale)?
            .ok_or_else(|| Error::OrbitSearch(format!("left end of {b0} not reached from level {n}")))?;
        (Case::L, b0, b0, j)
    };
    let q_n = q[beta_n] as u64;
    let c_abs = match case {
        Case::R => phi.cminus[beta0].abs(),
        Case::L => phi.cplus[beta0].abs(),
    };
    let pi2 = std::f64::consts::PI.powi(2);
    let cbar_formula = (c_abs / (pi2 * p.nu * p.nu * blog + sup_g2(phi))).sqrt();
    let cbar = match policy {
        CbarPolicy::Formula => cbar_formula,
        CbarPolicy::Fixed(c) => c,
    }
    .min(0.499);
    if !(cbar > 0.0) {
        return Err(Error::Invalid(format!("c-bar {cbar} is not positive")));
    }
    let lambda = hi.lambda[beta_n];
    let (a0, b0) = (hi.left[beta_n], hi.right[beta_n]);
    let j0 = match case {
        Case::R => (b0 - cbar * lambda, b0 - 0.5 * cbar * lambda),
        Case::L => (a0 + 0.5 * cbar * lambda, a0 + cbar * lambda),
    };
    let half = 0.5 * (j0.1 - j0.0);
    let shift = hi.w[beta_n];
    if p_n > ORBIT_BUDGET || q_n > ORBIT_BUDGET {
        return Err(Error::Budget(format!("tower height {q_n}")));
    }
    // floors and the displacement of T^q on each of them
    let mid = 0.5 * (j0.0 + j0.1);
    let mut o = Orbit::new(base, mid);
    let mut o2 = Orbit::new(base, mid + shift);
    let mut floors = Vec::with_capacity(p_n as usize);
    let mut displacement: f64 = 0.0;
    for _ in 0..p_n {
        let c = o.position();
        floors.push((c - half, c + half));
        displacement = displacement.max((o2.position() - c).abs());
        o.step()?;
        o2.step()?;
    }
    let measure = num::sum(floors.iter().map(|f| f.1 - f.0));
    let norm_a = p.norm_a();
    let measure_lower = (0.5 * cbar) / (d as f64 * p.nu * p.nu * norm_a * norm_a * base.total * base.total);
    let invariance_defect = {
        let mut b = preimage_pieces(base, j0)?;
        b.extend_from_slice(&floors[..floors.len() - 1]);
        2.0 * union_measure(&[floors.clone(), b.clone()].concat()) - measure - num::sum(b.iter().map(|f| f.1 - f.0))
    };
    let mut sorted = floors.clone();
    sorted.sort_by(|x, y| x.0.total_cmp(&y.0));
    let disjoint = sorted.windows(2).all(|w| w[1].0 >= w[0].1 - SLACK * lambda);
    let gates = TowerGates {
        controlled_height: p_n <= j_n && j_n < q_n,
        measure_bound: measure >= measure_lower,
        displacement,
        displacement_ok: displacement <= hi.total * (1.0 + SLACK),
        invariance_defect,
        invariance_ok: invariance_defect <= hi.total * (1.0 + SLACK),
        disjoint,
    };
    Ok(RigidityTower {
        n,
        case,
        beta0,
        beta_n,
        j_n,
        q_n,
        p_n,
        cbar,
        cbar_formula,
        lambda,
        level_len: hi.total,
        a0,
        b0,
        shift,
        floors,
        measure,
        measure_lower,
        gates,
    })
}

/// T^-1 of an interval, split where the inverse is discontinuous.
fn preimage_pieces(t: &Iet, (lo, hi): (f64, f64)) -> Result<Vec<(f64, f64)>> {
    let mut cuts: Vec<f64> = t.left_img.iter().copied().filter(|&c| c > lo && c < hi).collect();
    cuts.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    let mut start = lo;
    for c in cuts.into_iter().chain(std::iter::once(hi)) {
        let m = t.evaluate_inverse(0.5 * (start + c), Convention::LeftClosed)?;
        let off = m - 0.5 * (start + c);
        out.push((start + off, c + off));
        start = c;
    }
    Ok(out)
}

fn union_measure(iv: &[(f64, f64)]) -> f64 {
    let mut v = iv.to_vec();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut acc = num::Sum::new();
    let mut cur: Option<(f64, f64)> = None;
    for (a, b) in v {
        match cur {
            Some((ca, cb)) if a <= cb => cur = Some((ca, cb.max(b))),
            Some((ca, cb)) => {
                acc.add(cb - ca);
                cur = Some((a, b));
            }
            None => cur = Some((a, b)),
        }
    }
    if let Some((a, b)) = cur {
        acc.add(b - a);
    }
    acc.value()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacingReport {
    pub k: u64,
    pub x: f64,
    /// Smallest distance to the ends on the side away from the tracked singularity.
    pub min_far: f64,
    /// Smallest distance to other active singularities on the tracked side.
    pub min_near_other: f64,
    /// Smallest distance to the tracked singularity, excluding the exceptional index.
    pub min_near_tracked: f64,
    pub exceptional: Vec<u64>,
    pub exceptional_value: f64,
    pub spacing: f64,
    pub clauses: [bool; 4],
    pub witness: Option<String>,
}

impl SpacingReport {
    pub fn holds(&self) -> bool {
        self.clauses.iter().all(|&c| c)
    }
}

/// Orbit of x in J_k for q_n steps against the four spacing clauses.
pub fn spacing_report(p: &PeriodicIet, phi: &LogCocycle, tower: &RigidityTower, k: u64, x: f64) -> Result<SpacingReport> {
    let base = &p.base;
    let (lo, hi) = tower.floors[k as usize];
    if !(x > lo && x < hi) {
        return Err(Error::Invalid(format!("{x} is not inside floor {k}")));
    }
    if tower.q_n > DIRECT_BUDGET {
        return Err(Error::Budget(format!("orbit of length {}", tower.q_n)));
    }
    let total = base.total;
    let fr = |t: f64| t.rem_euclid(total);
    let d = base.d();
    let lam = tower.lambda;
    let nu = p.nu;
    let mut o = Orbit::new(base, x);
    let mut ys = Vec::with_capacity(tower.q_n as usize);
    for _ in 0..tower.q_n {
        ys.push(o.position());
        o.step()?;
    }
    // distances on the tracked side and on the far side
    let (near, far): (Box<dyn Fn(f64, usize) -> f64>, Box<dyn Fn(f64, usize) -> f64>) = match tower.case {
        Case::R => (Box::new(|y, a| fr(base.right[a] - y)), Box::new(|y, a| fr(y - base.left[a]))),
        Case::L => (Box::new(|y, a| fr(y - base.left[a])), Box::new(|y, a| fr(base.right[a] - y))),
    };
    let active = |a: usize| match tower.case {
        Case::R => phi.cminus[a] != 0.0,
        Case::L => phi.cplus[a] != 0.0,
    };
    let mut min_far = f64::INFINITY;
    let mut min_near_other = f64::INFINITY;
    let mut min_near_tracked = f64::INFINITY;
    let mut exceptional = Vec::new();
    let mut exceptional_value = f64::NAN;
    let expected = tower.j_n.checked_sub(k);
    for (j, &y) in ys.iter().enumerate() {
        for a in 0..d {
            min_far = min_far.min(far(y, a));
            if a != tower.beta0 && active(a) {
                min_near_other = min_near_other.min(near(y, a));
            }
        }
        let t = near(y, tower.beta0);
        if t < lam / nu * (1.0 - SLACK) {
            exceptional.push(j as u64);
            exceptional_value = t;
        } else {
            min_near_tracked = min_near_tracked.min(t);
        }
    }
    ys.sort_by(f64::total_cmp);
    let spacing = ys.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let c = tower.cbar;
    let c3 = exceptional.len() == 1
        && Some(exceptional[0]) == expected
        && exceptional_value >= 0.5 * c * lam * (1.0 - SLACK)
        && exceptional_value <= c * lam * (1.0 + SLACK);
    let clauses = [
        min_far >= 0.5 * lam * (1.0 - SLACK),
        min_near_other >= lam / nu * (1.0 - SLACK),
        c3,
        spacing >= lam * (1.0 - SLACK),
    ];
    let names = ["far-side distance", "other singularities", "tracked singularity", "orbit spacing"];
    let witness = clauses.iter().position(|&c| !c).map(|i| {
        format!(
            "{} fails at k={k}, x={x}: far {min_far:e}, other {min_near_other:e}, tracked {min_near_tracked:e}, exceptional {exceptional:?} (expected {expected:?}) value {exceptional_value:e}, spacing {spacing:e}, lambda {lam:e}",
            names[i]
        )
    });
    Ok(SpacingReport {
        k,
        x,
        min_far,
        min_near_other,
        min_near_tracked,
        exceptional,
        exceptional_value,
        spacing,
        clauses,
        witness,
    })
}

/// Which Birkhoff sum to slide along the tower.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    Value,
    First,
    Second,
}

fn point_eval(phi: &LogCocycle, order: Order, a: usize, u: f64, v: f64) -> f64 {
    let pc = phi.full(a);
    match order {
        Order::Value => pc.eval(u, v),
        Order::First => pc.deriv(u, v),
        Order::Second => pc.deriv2(u, v),
    }
}

/// phi^(q_n) (or its derivatives) at base-floor points.
pub fn base_sums(p: &PeriodicIet, phi: &LogCocycle, tower: &RigidityTower, ys: &[f64], order: Order) -> Result<Vec<f64>> {
    if tower.q_n * ys.len() as u64 <= DIRECT_BUDGET {
        return ys
            .iter()
            .map(|&y| match order {
                Order::Value => birkhoff_sum(phi, y, tower.q_n as i64),
                Order::First => birkhoff_sum_deriv(phi, y, tower.q_n),
                Order::Second => birkhoff_sum_deriv2(phi, y, tower.q_n),
            })
            .collect();
    }
    if order != Order::Value {
        return Err(Error::Budget(format!("derivative sums over {} points of height {}", ys.len(), tower.q_n)));
    }
    let mut eng = Engine::new(p, phi, EngineOptions { zero_mean: false, ..Default::default() })?;
    eng.run_to(tower.n)?;
    let st = eng.state(tower.n);
    let s = p.rho.powi(tower.n as i32);
    Ok(ys.iter().map(|&y| st.eval(tower.beta_n, (y - tower.a0) * s, (tower.b0 - y) * s)).collect())
}

/// Slide sums from the base floor up the tower; `f(k, values)` sees floor k.
pub fn walk_floors(
    phi: &LogCocycle,
    tower: &RigidityTower,
    ys: &[f64],
    base: Vec<f64>,
    order: Order,
    mut f: impl FnMut(u64, &[f64]),
) -> Result<()> {
    let mut lower: Vec<Orbit> = ys.iter().map(|&y| Orbit::new(&phi.iet, y)).collect();
    let mut upper: Vec<Orbit> = ys.iter().map(|&y| Orbit::new(&phi.iet, y + tower.shift)).collect();
    let mut vals = base;
    for k in 0..tower.p_n {
        f(k, &vals);
        if k + 1 == tower.p_n {
            break;
        }
        for i in 0..ys.len() {
            let (a, u, v) = lower[i].step()?;
            let (b, u2, v2) = upper[i].step()?;
            vals[i] += point_eval(phi, order, b, u2, v2) - point_eval(phi, order, a, u, v);
        }
    }
    Ok(())
}

/// Composite Gauss-Legendre rule on [lo, hi].
pub fn panel_rule(lo: f64, hi: f64, panels: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = num::gauss_legendre(order);
    let h = (hi - lo) / panels as f64;
    let mut xs = Vec::with_capacity(panels * order);
    let mut ws = Vec::with_capacity(panels * order);
    for j in 0..panels {
        let a = lo + j as f64 * h;
        for (xi, wi) in x.iter().zip(&w) {
            xs.push(a + 0.5 * h * (xi + 1.0));
            ws.push(0.5 * h * wi);
        }
    }
    (xs, ws)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tightness {
    pub n: usize,
    pub integral: f64,
    /// The same integral with half the panels.
    pub coarse: f64,
    /// max over floors m and base points x of |phi^(q)(x) - phi^(q)(T^m x)|.
    pub shift_defect: f64,
    pub measure: f64,
}

/// Integral of |phi^(q_n)| over the tower.
pub fn tightness_integral(p: &PeriodicIet, phi: &LogCocycle, tower: &RigidityTower, panels: usize) -> Result<Tightness> {
    let (lo, hi) = tower.base_floor();
    let mut results = Vec::new();
    let mut shift_defect: f64 = 0.0;
    for (pass, np) in [panels.max(2) / 2, panels.max(2)].into_iter().enumerate() {
        let (ys, ws) = panel_rule(lo, hi, np, 8);
        let base = base_sums(p, phi, tower, &ys, Order::Value)?;
        let first = base.clone();
        let mut acc = num::Sum::new();
        walk_floors(phi, tower, &ys, base, Order::Value, |_, vals| {
            acc.add(num::sum(vals.iter().zip(&ws).map(|(v, w)| v.abs() * w)));
            if pass == 1 {
                for (v, v0) in vals.iter().zip(&first) {
                    shift_defect = shift_defect.max((v - v0).abs());
                }
            }
        })?;
        results.push(acc.value());
    }
    Ok(Tightness { n: tower.n, integral: results[1], coarse: results[0], shift_defect, measure: tower.measure })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillationRow {
    pub s: f64,
    pub value: f64,
    /// Sum over floors of |J_k \ J~_k| + |integral over J~_k|.
    pub refined_bound: f64,
    pub measure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeChecks {
    /// min over J_k of |(psi'')^(q)| * lambda^2 against c_1.
    pub second: f64,
    pub c1: f64,
    /// min over the chosen thirds of |(psi^(q))'| / q against c'.
    pub first: f64,
    pub c_prime: f64,
    /// Floors where the right third was chosen.
    pub right_thirds: u64,
}

impl DerivativeChecks {
    pub fn holds(&self) -> bool {
        self.second >= self.c1 * (1.0 - 1e-6) && self.first >= self.c_prime * (1.0 - 1e-6)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Oscillation {
    pub n: usize,
    pub rows: Vec<OscillationRow>,
    pub panels: usize,
    /// Largest change between the last two refinements.
    pub refinement_gap: f64,
    pub derivatives: Option<DerivativeChecks>,
    pub skipped: Option<String>,
}

fn exp_sums(vals: &[f64], ws: &[f64], s: f64) -> (f64, f64) {
    let tau = 2.0 * std::f64::consts::PI * s;
    let mut re = num::Sum::new();
    let mut im = num::Sum::new();
    for (v, w) in vals.iter().zip(ws) {
        let (sn, cs) = (tau * v).sin_cos();
        re.add(w * cs);
        im.add(w * sn);
    }
    (re.value(), im.value())
}

fn oscillation_pass(p: &PeriodicIet, phi: &LogCocycle, tower: &RigidityTower, ss: &[f64], panels: usize) -> Result<Vec<f64>> {
    let (lo, hi) = tower.base_floor();
    let (ys, ws) = panel_rule(lo, hi, panels, 8);
    let base = base_sums(p, phi, tower, &ys, Order::Value)?;
    let mut acc = vec![(num::Sum::new(), num::Sum::new()); ss.len()];
    walk_floors(phi, tower, &ys, base, Order::Value, |_, vals| {
        for (i, &s) in ss.iter().enumerate() {
            let (re, im) = exp_sums(vals, &ws, s);
            acc[i].0.add(re);
            acc[i].1.add(im);
        }
    })?;
    Ok(acc.into_iter().map(|(re, im)| re.value().hypot(im.value())).collect())
}

/// |integral over the tower of exp(2 pi i s phi^(q_n))| for each s, refined
/// until two panel counts agree, plus the derivative companion checks.
pub fn oscillation_integral(p: &PeriodicIet, phi: &LogCocycle, tower: &RigidityTower, ss: &[f64]) -> Result<Oscillation> {
    let mut panels = 8;
    let mut prev = oscillation_pass(p, phi, tower, ss, panels)?;
    let mut gap = f64::INFINITY;
    while panels < 4096 {
        panels *= 2;
        let cur = oscillation_pass(p, phi, tower, ss, panels)?;
        gap = prev.iter().zip(&cur).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prev = cur;
        if gap <= 1e-6 * tower.measure {
            break;
        }
    }
    let (derivatives, refined, skipped) = match refined_parts(p, phi, tower, ss) {
        Ok((dc, r)) => (Some(dc), r, None),
        Err(Error::Budget(m)) => (None, vec![f64::NAN; ss.len()], Some(m)),
        Err(e) => return Err(e),
    };
    let rows = ss
        .iter()
        .zip(prev)
        .zip(refined)
        .map(|((&s, value), refined_bound)| OscillationRow { s, value, refined_bound, measure: tower.measure })
        .collect();
    Ok(Oscillation { n: tower.n, rows, panels, refinement_gap: gap, derivatives, skipped })
}

/// Third selection by the midpoint sign probe and the refined integrals.
fn refined_parts(p: &PeriodicIet, phi: &LogCocycle, tower: &RigidityTower, ss: &[f64]) -> Result<(DerivativeChecks, Vec<f64>)> {
    let (lo, hi) = tower.base_floor();
    let mid = 0.5 * (lo + hi);
    let (left, right) = tower.thirds();
    // second derivative over the whole floor, first derivative at the probe and on both thirds
    let (y2, _) = panel_rule(lo, hi, 4, 4);
    let b2 = base_sums(p, phi, tower, &y2, Order::Second)?;
    let (yl, wl) = panel_rule(left.0, left.1, 16, 8);
    let (yr, wr) = panel_rule(right.0, right.1, 16, 8);
    let mut y1 = vec![mid];
    y1.extend_from_slice(&yl);
    y1.extend_from_slice(&yr);
    let b1 = base_sums(p, phi, tower, &y1, Order::First)?;
    let m = yl.len();
    let mut second_sign = Vec::with_capacity(tower.p_n as usize);
    let mut second_min = f64::INFINITY;
    walk_floors(phi, tower, &y2, b2, Order::Second, |_, vals| {
        second_min = vals.iter().map(|v| v.abs()).fold(second_min, f64::min);
        second_sign.push(vals[vals.len() / 2].signum());
    })?;
    let mut choose_right = Vec::with_capacity(tower.p_n as usize);
    let mut first_min = f64::INFINITY;
    walk_floors(phi, tower, &y1, b1, Order::First, |k, vals| {
        let right = vals[0] * second_sign[k as usize] >= 0.0;
        choose_right.push(right);
        let part = if right { &vals[1 + m..] } else { &vals[1..1 + m] };
        first_min = part.iter().map(|v| v.abs()).fold(first_min, f64::min);
    })?;
    // refined integrals over the chosen thirds
    let mut ys = yl.clone();
    ys.extend_from_slice(&yr);
    let b = base_sums(p, phi, tower, &ys, Order::Value)?;
    let mut bound = vec![num::Sum::new(); ss.len()];
    let third = tower.floor_len() / 3.0;
    walk_floors(phi, tower, &ys, b, Order::Value, |k, vals| {
        let (v, w) = if choose_right[k as usize] { (&vals[m..], &wr) } else { (&vals[..m], &wl) };
        for (i, &s) in ss.iter().enumerate() {
            let (re, im) = exp_sums(v, w, s);
            bound[i].add(re.hypot(im) + 2.0 * third);
        }
    })?;
    let pi2 = std::f64::consts::PI.powi(2);
    let nu2 = p.nu * p.nu;
    let blog = phi.blog();
    let dc = DerivativeChecks {
        second: second_min * tower.lambda * tower.lambda,
        c1: pi2 * nu2 * blog / 3.0,
        first: first_min / tower.q_n as f64,
        c_prime: pi2 * nu2 * tower.cbar * blog / 36.0,
        right_thirds: choose_right.iter().filter(|&&r| r).count() as u64,
    };
    Ok((dc, bound.into_iter().map(|s| s.value()).collect()))
}

/// Smallest C with value <= (2/3)|Xi| + C/|s| over the given rows.
pub fn fit_oscillation_constant(rows: &[OscillationRow]) -> f64 {
    rows.iter().filter(|r| r.s != 0.0).map(|r| r.s.abs() * (r.value - 2.0 / 3.0 * r.measure).max(0.0)).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub bin_left: f64,
    pub bin_right: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub n: usize,
    pub samples: usize,
    pub bins: Vec<HistogramBin>,
    pub mean: f64,
    pub std_err: f64,
    pub quartiles: [f64; 3],
    pub iqr: f64,
    /// Fraction of samples with |value| <= eps.
    pub near_zero: f64,
    pub eps: f64,
}

/// Empirical distribution of phi^(q_n) over the tower, uniform in Xi_n.
pub fn essential_value_histogram(
    p: &PeriodicIet,
    phi: &LogCocycle,
    tower: &RigidityTower,
    samples: usize,
    bins: usize,
    eps: f64,
    seed: u64,
) -> Result<Histogram> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ tower.n as u64);
    let (lo, hi) = tower.base_floor();
    // several base points even on tall towers, or every floor repeats one value
    let per_floor = samples.div_ceil(tower.p_n as usize).max(32);
    let ys: Vec<f64> = (0..per_floor).map(|_| rng.gen_range(lo..hi)).collect();
    let base = base_sums(p, phi, tower, &ys, Order::Value)?;
    let mut vals = Vec::with_capacity(per_floor * tower.p_n as usize);
    walk_floors(phi, tower, &ys, base, Order::Value, |_, v| vals.extend_from_slice(v))?;
    vals.sort_by(f64::total_cmp);
    let m = vals.len();
    let q = |f: f64| vals[((m - 1) as f64 * f).round() as usize];
    let mean = num::sum(vals.iter().copied()) / m as f64;
    let var = num::sum(vals.iter().map(|v| (v - mean).powi(2))) / (m.max(2) - 1) as f64;
    let (vmin, vmax) = (vals[0], vals[m - 1]);
    let width = if vmax > vmin { (vmax - vmin) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins.max(1)];
    for v in &vals {
        let i = (((v - vmin) / width) as usize).min(counts.len() - 1);
        counts[i] += 1;
    }
    let bins = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| HistogramBin {
            bin_left: vmin + i as f64 * width,
            bin_right: vmin + (i + 1) as f64 * width,
            mass: c as f64 / m as f64,
        })
        .collect();
    let quartiles = [q(0.25), q(0.5), q(0.75)];
    Ok(Histogram {
        n: tower.n,
        samples: m,
        bins,
        mean,
        std_err: (var / m as f64).sqrt(),
        quartiles,
        iqr: quartiles[2] - quartiles[0],
        near_zero: vals.iter().filter(|v| v.abs() <= eps).count() as f64 / m as f64,
        eps,
    })
}

pub fn write_histogram<W: std::io::Write>(h: &Histogram, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for b in &h.bins {
        w.serialize(b).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    ErgodicConsistent,
    CoboundaryConsistent,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOptions {
    pub levels: Vec<usize>,
    pub s_values: Vec<f64>,
    pub panels: usize,
    pub samples: usize,
    pub seed: u64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            levels: vec![2, 3, 4, 5, 6],
            s_values: vec![1.0, 2.0, 5.0, 10.0, 20.0, 50.0],
            panels: 16,
            samples: 2000,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub verdict: Verdict,
    pub tightness: Vec<Tightness>,
    pub tightness_ratio: f64,
    pub tight: bool,
    pub oscillation: Oscillation,
    /// Smallest |integral|/|Xi| over s at the deepest level.
    pub decorrelation: f64,
    /// Largest |integral|/|Xi| over s at the deepest level.
    pub coherence: f64,
    pub iqr: Vec<f64>,
    pub spread: bool,
    pub failed: Vec<String>,
}

/// Evaluate the hypotheses of the essential-value criterion on a tower
/// family built from `shape` (a cocycle with log singularities).
pub fn classify(p: &PeriodicIet, phi: &LogCocycle, shape: &LogCocycle, opts: &ClassifyOptions) -> Result<Evidence> {
    let mut tightness = Vec::new();
    let mut iqr = Vec::new();
    let mut towers = Vec::new();
    for &n in &opts.levels {
        let t = build_rigidity_tower(p, shape, n, CbarPolicy::Formula)?;
        tightness.push(tightness_integral(p, phi, &t, opts.panels)?);
        iqr.push(essential_value_histogram(p, phi, &t, opts.samples, 40, 1e-3, opts.seed)?.iqr);
        towers.push(t);
    }
    let last = towers.last().ok_or_else(|| Error::Invalid("no levels".into()))?;
    let oscillation = oscillation_integral(p, phi, last, &opts.s_values)?;
    evidence(phi, tightness, iqr, oscillation)
}

/// Verdict from per-level tightness integrals, interquartile ranges and the
/// oscillation integrals at the deepest level.
pub fn evidence(phi: &LogCocycle, tightness: Vec<Tightness>, iqr: Vec<f64>, oscillation: Oscillation) -> Result<Evidence> {
    let Some(last) = tightness.last() else {
        return Err(Error::Invalid("no levels".into()));
    };
    let measure = last.measure;
    let ints: Vec<f64> = tightness.iter().map(|t| t.integral).collect();
    let top = ints.iter().copied().fold(0.0, f64::max);
    let bottom = ints.iter().copied().fold(f64::INFINITY, f64::min);
    let tightness_ratio = if top <= 1e-12 { 1.0 } else { top / bottom.max(1e-300) };
    // bounded means no growth past the first level; decay is allowed
    let tight = top <= 10.0 * ints[0].max(1e-12 * measure);
    let ratios: Vec<f64> = oscillation.rows.iter().map(|r| r.value / r.measure).collect();
    let decorrelation = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let coherence = ratios.iter().copied().fold(0.0, f64::max);
    let iqr_max = iqr.iter().copied().fold(0.0, f64::max);
    let iqr_min = iqr.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = iqr_min > 1e-3 && iqr_min >= 0.25 * iqr_max;
    let mut failed = Vec::new();
    if !tight {
        failed.push(format!("tightness: integrals grow to x{:.2} of the first level", top / ints[0]));
    }
    if decorrelation > 0.75 {
        failed.push(format!("oscillation: |integral|/|Xi| stays >= {decorrelation:.3}"));
    }
    if !spread {
        failed.push(format!("spread: interquartile ranges {iqr:?}"));
    }
    let verdict = if tight && decorrelation <= 0.75 && spread && phi.blog() > 0.0 {
        Verdict::ErgodicConsistent
    } else if tight && decorrelation >= 0.9 {
        Verdict::CoboundaryConsistent
    } else {
        Verdict::Inconclusive
    };
    Ok(Evidence { verdict, tightness, tightness_ratio, tight, oscillation, decorrelation, coherence, iqr, spread, failed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::cocycle::{random_symmetric_constants, Piece};
    use crate::correction::polynomial_coboundary;

    fn log_cocycle(name: &str, seed: u64) -> (PeriodicIet, LogCocycle) {
        let p = catalog::build(name).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (cp, cm) = random_symmetric_constants(&p.base, &p.saddle, &mut rng);
        let g = p.base.lambda.iter().map(|&l| Piece::with_poly(l, vec![0.0, 0.3])).collect();
        let phi = LogCocycle::new(0, p.base.clone(), cp, cm, g).unwrap();
        let m = phi.mean();
        let phi = phi.add_constants(&vec![-m; p.d()]);
        (p, phi)
    }

    #[test]
    fn golden_tower_gates() {
        let (p, phi) = log_cocycle("golden", 3);
        for n in 2..=6 {
            let t = build_rigidity_tower(&p, &phi, n, CbarPolicy::Formula).unwrap();
            assert!(t.gates.all(), "{n}: {:?}", t.gates);
            assert_eq!(t.floors.len() as u64, t.p_n);
        }
    }

    #[test]
    fn zero_blog_rejected() {
        let p = catalog::build("golden").unwrap();
        let phi = LogCocycle::piecewise_constant(&p.base, &[1.0, -1.0]);
        assert_eq!(build_rigidity_tower(&p, &phi, 3, CbarPolicy::Formula).unwrap_err(), Error::ZeroBlog);
    }

    #[test]
    fn sliding_matches_direct_sums() {
        let (p, phi) = log_cocycle("rev4", 5);
        let t = build_rigidity_tower(&p, &phi, 3, CbarPolicy::Formula).unwrap();
        let (lo, hi) = t.base_floor();
        let ys = vec![lo + 0.3 * (hi - lo), lo + 0.8 * (hi - lo)];
        let base = base_sums(&p, &phi, &t, &ys, Order::Value).unwrap();
        let mut rows = Vec::new();
        walk_floors(&phi, &t, &ys, base, Order::Value, |k, v| rows.push((k, v.to_vec()))).unwrap();
        for &k in &[0, t.p_n / 2, t.p_n - 1] {
            let (flo, _) = t.floors[k as usize];
            let x = flo + (ys[1] - lo);
            let direct = birkhoff_sum(&phi, x, t.q_n as i64).unwrap();
            assert!((direct - rows[k as usize].1[1]).abs() < 1e-9 * (1.0 + direct.abs()), "{k}");
        }
    }

    #[test]
    fn engine_base_values_agree() {
        let (p, phi) = log_cocycle("rev4", 8);
        let t = build_rigidity_tower(&p, &phi, 3, CbarPolicy::Formula).unwrap();
        let (lo, hi) = t.base_floor();
        let y = 0.5 * (lo + hi);
        let direct = birkhoff_sum(&phi, y, t.q_n as i64).unwrap();
        let mut eng = Engine::new(&p, &phi, EngineOptions { zero_mean: false, ..Default::default() }).unwrap();
        eng.run_to(3).unwrap();
        let s = p.rho.powi(3);
        let e = eng.state(3).eval(t.beta_n, (y - t.a0) * s, (t.b0 - y) * s);
        assert!((direct - e).abs() < 1e-8 * (1.0 + direct.abs()), "{direct} {e}");
    }

    #[test]
    fn spacing_clauses_hold() {
        let (p, phi) = log_cocycle("rev4", 2);
        let t = build_rigidity_tower(&p, &phi, 3, CbarPolicy::Formula).unwrap();
        for k in [0, t.p_n / 2, t.p_n - 1] {
            let (lo, hi) = t.floors[k as usize];
            let r = spacing_report(&p, &phi, &t, k, 0.5 * (lo + hi)).unwrap();
            assert!(r.holds(), "{:?}", r.witness);
        }
    }

    #[test]
    fn zero_cocycle_oscillation_is_measure() {
        let (p, shape) = log_cocycle("golden", 1);
        let t = build_rigidity_tower(&p, &shape, 3, CbarPolicy::Formula).unwrap();
        let zero = LogCocycle::piecewise_constant(&p.base, &[0.0, 0.0]);
        let o = oscillation_pass(&p, &zero, &t, &[0.0, 3.0], 8).unwrap();
        assert!((o[0] - t.measure).abs() < 1e-12 && (o[1] - t.measure).abs() < 1e-12);
        let ti = tightness_integral(&p, &zero, &t, 4).unwrap();
        assert_eq!(ti.integral, 0.0);
        let cob = polynomial_coboundary(&p.base, &[0.0, 0.5, -0.5], &[0.0, 0.0]);
        let h = essential_value_histogram(&p, &cob, &t, 500, 10, 0.05, 3).unwrap();
        assert!(h.samples >= 500);
    }
}
