//! Birkhoff sums and special Birkhoff sums over periodic-type exchanges.
//!
//! Pointwise sums walk orbits in double-double arithmetic. The structural
//! view decomposes each level-k' interval into its tower of level-k floors,
//! with every floor position kept as an integer combination of the level-k'
//! lengths, so floors that touch an endpoint are detected exactly.

use serde::{Deserialize, Serialize};

use crate::cocycle::{fform_terms, Kind, LogCocycle, Piece, Side};
use crate::error::{Error, Result};
use crate::iet::{Convention, Iet};
use crate::linalg::{self, IntMat};
use crate::num::{self, Dd, Sum};
use crate::rauzy::PeriodicIet;

/// Default cap on the number of floors enumerated for one tower.
pub const FLOOR_BUDGET: i64 = 4_000_000;

/// Cap on orbit steps for a single pointwise evaluation.
pub const ORBIT_BUDGET: u64 = 100_000_000;

fn img_symbol(t: &Iet, y: f64) -> Result<usize> {
    if !(y >= 0.0 && y < t.total) {
        return Err(Error::OutsideDomain { x: y });
    }
    let d = t.d();
    Ok((0..d).rev().map(|j| t.perm.at[1][j]).find(|&a| y >= t.left_img[a]).expect("y >= 0"))
}

/// Orbit walker with double-double positions.
struct Walker<'a> {
    t: &'a Iet,
    y: Dd,
    w: Vec<Dd>,
    tol: f64,
}

impl<'a> Walker<'a> {
    fn new(t: &'a Iet, x: f64) -> Self {
        Walker { t, y: Dd::new(x), w: t.translations_dd(), tol: t.point_tol() }
    }

    /// Current symbol and local coordinates; fails near an endpoint.
    fn here(&self, index: i64) -> Result<(usize, f64, f64)> {
        let a = self.t.locate(self.y.hi, Convention::LeftClosed).map_err(|_| Error::Discontinuity { index })?;
        let u = self.y.sub(Dd::new(self.t.left[a])).value();
        let v = Dd::new(self.t.right[a]).sub(self.y).value();
        if u.min(v) <= self.tol {
            return Err(Error::Discontinuity { index });
        }
        Ok((a, u, v))
    }

    fn forward(&mut self, a: usize) {
        self.y = self.y.add(self.w[a]);
    }

    fn backward(&mut self, index: i64) -> Result<()> {
        let a = img_symbol(self.t, self.y.hi).map_err(|_| Error::Discontinuity { index })?;
        self.y = self.y.sub(self.w[a]);
        Ok(())
    }
}

/// Forward orbit of a point, tracked in double-double precision.
pub struct Orbit<'a> {
    w: Walker<'a>,
    index: i64,
}

impl<'a> Orbit<'a> {
    pub fn new(t: &'a Iet, x: f64) -> Self {
        Orbit { w: Walker::new(t, x), index: 0 }
    }

    pub fn position(&self) -> f64 {
        self.w.y.value()
    }

    /// Symbol and local coordinates of the current point, then advance.
    pub fn step(&mut self) -> Result<(usize, f64, f64)> {
        let (a, u, v) = self.w.here(self.index)?;
        self.w.forward(a);
        self.index += 1;
        Ok((a, u, v))
    }
}

/// phi^(n)(x) for the exchange the cocycle lives on; negative n sums backwards.
pub fn birkhoff_sum(phi: &LogCocycle, x: f64, n: i64) -> Result<f64> {
    if n.unsigned_abs() > ORBIT_BUDGET {
        return Err(Error::Budget(format!("{n} orbit steps")));
    }
    let mut w = Walker::new(&phi.iet, x);
    let mut acc = Sum::new();
    if n >= 0 {
        for i in 0..n {
            let (a, u, v) = w.here(i)?;
            acc.add(phi.eval_uv(a, u, v));
            w.forward(a);
        }
        Ok(acc.value())
    } else {
        for i in 1..=(-n) {
            w.backward(-i)?;
            let (a, u, v) = w.here(-i)?;
            acc.add(phi.eval_uv(a, u, v));
        }
        Ok(-acc.value())
    }
}

/// Birkhoff sum of the derivative.
pub fn birkhoff_sum_deriv(phi: &LogCocycle, x: f64, n: u64) -> Result<f64> {
    let mut w = Walker::new(&phi.iet, x);
    let mut acc = Sum::new();
    for i in 0..n as i64 {
        let (a, u, v) = w.here(i)?;
        acc.add(phi.full(a).deriv(u, v));
        w.forward(a);
    }
    Ok(acc.value())
}

/// Birkhoff sum of the second derivative.
pub fn birkhoff_sum_deriv2(phi: &LogCocycle, x: f64, n: u64) -> Result<f64> {
    let mut o = Orbit::new(&phi.iet, x);
    let mut acc = Sum::new();
    for _ in 0..n {
        let (a, u, v) = o.step()?;
        acc.add(phi.full(a).deriv2(u, v));
    }
    Ok(acc.value())
}

/// Level-k' interval containing x and its return time to level k.
fn level_target(p: &PeriodicIet, k: usize, k2: usize, x: f64) -> Result<(Iet, usize, i64)> {
    if k2 < k {
        return Err(Error::Invalid("k' < k".into()));
    }
    let hi = p.induced_geometry(k2)?;
    let beta = hi.locate(x, Convention::LeftClosed)?;
    let q = p.return_times(k, k2)?[beta];
    Ok((hi, beta, q))
}

/// S(k,k')phi(x) by walking the orbit of x under T^(k) for Q_beta(k,k') steps.
pub fn special_sum_pointwise(p: &PeriodicIet, phi: &LogCocycle, k2: usize, x: f64) -> Result<f64> {
    let (_, _, q) = level_target(p, phi.level, k2, x)?;
    if q as u64 > ORBIT_BUDGET {
        return Err(Error::Budget(format!("return time {q}")));
    }
    birkhoff_sum(phi, x, q)
}

/// One floor of a tower: the level-k symbol it lies in and its distances to both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Floor {
    pub alpha: usize,
    /// Distance from the left end of I^(k)_alpha; exactly 0 when the floor starts there.
    pub off: f64,
    /// Distance to the right end of I^(k)_alpha; exactly 0 when the floor ends there.
    pub roff: f64,
}

/// The towers of level-k floors over the level-k' intervals.
#[derive(Debug, Clone)]
pub struct Tower {
    pub k: usize,
    pub k2: usize,
    pub lo: Iet,
    pub hi: Iet,
    pub q: Vec<i64>,
    pub floors: Vec<Vec<Floor>>,
}

fn int_value(n: &[i64], lambda: &[Dd]) -> f64 {
    n.iter().zip(lambda).fold(Dd::default(), |acc, (&c, &l)| acc.add(l.mul(Dd::new(c as f64)))).value()
}

impl Tower {
    pub fn new(p: &PeriodicIet, k: usize, k2: usize) -> Result<Self> {
        Tower::with_budget(p, k, k2, FLOOR_BUDGET)
    }

    pub fn with_budget(p: &PeriodicIet, k: usize, k2: usize, budget: i64) -> Result<Self> {
        if k2 < k {
            return Err(Error::Invalid("k' < k".into()));
        }
        let d = p.d();
        let b: IntMat = p.q(k2 - k)?;
        let q = linalg::col_sums(&b);
        let total: i64 = q.iter().sum();
        if total > budget {
            return Err(Error::Budget(format!("{total} floors between levels {k} and {k2}")));
        }
        // induced rather than scaled lengths: positions are integer
        // combinations of them and must match the base dynamics
        let lo = p.induced_geometry(k)?;
        let lam = p.induced_lengths(k2)?;
        let hi = Iet::new(p.perm().clone(), lam.iter().map(|l| l.value()).collect())?;
        let perm = p.perm();
        let row = |a: usize| -> Vec<i64> { (0..d).map(|j| b[(a, j)]).collect() };
        // level-k ends and translations in the level-k' length basis
        let mut left = vec![vec![0i64; d]; d];
        let mut acc = vec![0i64; d];
        for j in 0..d {
            let a = perm.at[0][j];
            left[a] = acc.clone();
            for (x, y) in acc.iter_mut().zip(row(a)) {
                *x += y;
            }
        }
        let right: Vec<Vec<i64>> = (0..d).map(|a| left[a].iter().zip(row(a)).map(|(x, y)| x + y).collect()).collect();
        let om = perm.omega();
        let ob = linalg::int_mul(&om, &b)?;
        let w: Vec<Vec<i64>> = (0..d).map(|a| (0..d).map(|j| ob[(a, j)]).collect()).collect();
        let mut hi_left = vec![vec![0i64; d]; d];
        let mut acc = vec![0i64; d];
        for j in 0..d {
            let a = perm.at[0][j];
            hi_left[a] = acc.clone();
            acc[a] += 1;
        }
        let lam = &lam;
        let slack = 1e-12 * lo.total;
        let mut floors = Vec::with_capacity(d);
        for beta in 0..d {
            let mut pos = hi_left[beta].clone();
            let mut fl = Vec::with_capacity(q[beta] as usize);
            for i in 0..q[beta] {
                let start = int_value(&pos, lam);
                if i > 0 && start < hi.total - slack {
                    return Err(Error::OrbitSearch(format!("floor {i} over symbol {beta} returns early")));
                }
                let alpha = lo.locate(start + 0.5 * hi.lambda[beta], Convention::LeftClosed)?;
                let off_n: Vec<i64> = pos.iter().zip(&left[alpha]).map(|(x, y)| x - y).collect();
                let roff_n: Vec<i64> = (0..d).map(|j| right[alpha][j] - pos[j] - (j == beta) as i64).collect();
                let off = if off_n.iter().all(|&c| c == 0) { 0.0 } else { int_value(&off_n, lam) };
                let roff = if roff_n.iter().all(|&c| c == 0) { 0.0 } else { int_value(&roff_n, lam) };
                if off < -slack || roff < -slack {
                    return Err(Error::CrossesDiscontinuity { a: start, b: start + hi.lambda[beta] });
                }
                fl.push(Floor { alpha, off: off.max(0.0), roff: roff.max(0.0) });
                for (x, y) in pos.iter_mut().zip(&w[alpha]) {
                    *x += y;
                }
            }
            // the orbit must land on the image of I^(k')_beta
            let expect: Vec<i64> = (0..d).map(|j| hi_left[beta][j] + om[(beta, j)]).collect();
            if pos != expect {
                return Err(Error::OrbitSearch(format!("tower over symbol {beta} does not close")));
            }
            floors.push(fl);
        }
        Ok(Tower { k, k2, lo, hi, q, floors })
    }

    /// Piece of S(k,k')phi over I^(k')_beta: the translated pieces summed.
    pub fn summed_piece(&self, phi: &LogCocycle, beta: usize) -> Piece {
        let len = self.hi.lambda[beta];
        let mut acc = Piece::zero(len);
        for f in &self.floors[beta] {
            acc.add_assign(&phi.full(f.alpha).translate(f.off, f.roff, len));
        }
        acc.merge_terms();
        acc
    }
}

/// Structural image of a special Birkhoff sum.
#[derive(Debug, Clone)]
pub struct SpecialSumView {
    pub k: usize,
    pub k2: usize,
    pub q: Vec<i64>,
    /// S(k,k')phi as a cocycle on the level-k' exchange.
    pub image: LogCocycle,
}

/// Row of the branch whose extreme right constant vanishes.
pub fn branch_for(phi: &LogCocycle) -> Result<usize> {
    let p = &phi.iet.perm;
    if phi.cminus[p.last(0)] == 0.0 {
        Ok(0)
    } else if phi.cminus[p.last(1)] == 0.0 {
        Ok(1)
    } else {
        Err(Error::GeometricType("both extreme right constants are nonzero".into()))
    }
}

/// Build S(k,k')phi from the tower.
pub fn renormalize_structure(p: &PeriodicIet, phi: &LogCocycle, k2: usize) -> Result<SpecialSumView> {
    if !phi.is_geometric_type() {
        return Err(Error::GeometricType("renormalization needs vanishing extreme constants".into()));
    }
    let tower = Tower::new(p, phi.level, k2)?;
    structure_from_tower(&tower, phi)
}

pub fn structure_from_tower(tower: &Tower, phi: &LogCocycle) -> Result<SpecialSumView> {
    let d = phi.d();
    let mut cplus = vec![0.0; d];
    let mut cminus = vec![0.0; d];
    let mut pieces = Vec::with_capacity(d);
    for beta in 0..d {
        let mut piece = tower.summed_piece(phi, beta);
        cplus[beta] = -piece.own_log(Side::Plus);
        cminus[beta] = -piece.own_log(Side::Minus);
        piece.terms.retain(|t| !(t.kind == Kind::Log && t.is_own()));
        pieces.push(piece);
    }
    for (beta, piece) in pieces.iter_mut().enumerate() {
        for t in fform_terms(&tower.hi, &cplus, &cminus, beta) {
            if !t.is_own() {
                piece.terms.push(crate::cocycle::Term { coef: -t.coef, ..t });
            }
        }
        piece.merge_terms();
    }
    let image = LogCocycle::new(tower.k2, tower.hi.clone(), cplus, cminus, pieces)?;
    Ok(SpecialSumView { k: tower.k, k2: tower.k2, q: tower.q.clone(), image })
}

fn sorted_abs(v: &[f64], w: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = v.iter().chain(w).map(|c| c.abs()).filter(|&c| c != 0.0).collect();
    out.sort_by(f64::total_cmp);
    out
}

/// Comparison of the structural constants with the bookkeeping of endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsCheck {
    pub plus_preserved: bool,
    pub minus_transported: bool,
    pub minus_by_chi: bool,
    /// Multisets of nonzero |C| agree exactly, hence Blog does.
    pub blog_exact: bool,
    pub blog_before: f64,
    pub blog_after: f64,
}

pub fn check_constants(p: &PeriodicIet, phi: &LogCocycle, view: &SpecialSumView) -> Result<ConstantsCheck> {
    let ups = branch_for(phi)?;
    let book = p.singularity_bookkeeping(view.k, view.k2, ups)?;
    let img = &view.image;
    let moved = p.transport_minus(view.k, view.k2, &phi.cminus);
    let by_chi: Vec<f64> = book.chi.iter().map(|&a| phi.cminus[a]).collect();
    Ok(ConstantsCheck {
        plus_preserved: img.cplus == phi.cplus,
        minus_transported: img.cminus == moved,
        minus_by_chi: img.cminus == by_chi,
        blog_exact: sorted_abs(&img.cplus, &img.cminus) == sorted_abs(&phi.cplus, &phi.cminus),
        blog_before: phi.blog(),
        blog_after: img.blog(),
    })
}

/// Largest relative gap between the structural image and orbit sums at `xs`.
pub fn consistency_gap(p: &PeriodicIet, phi: &LogCocycle, view: &SpecialSumView, xs: &[f64]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &x in xs {
        let orbit = special_sum_pointwise(p, phi, view.k2, x)?;
        let st = view.image.eval(x)?;
        worst = worst.max((orbit - st).abs() / (1.0 + orbit.abs()));
    }
    Ok(worst)
}

/// Norms of S(k)phi at one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelNorms {
    pub level: usize,
    pub l1: f64,
    pub l1_over_len: f64,
    pub means: Vec<f64>,
    /// Present when the image has no log singularities.
    pub sup: Option<f64>,
}

pub fn norms_of(image: &LogCocycle) -> LevelNorms {
    let l1 = image.integrate_abs();
    let sup = (image.blog() == 0.0).then(|| {
        image.pieces().iter().map(|p| crate::cocycle::sup_abs(&|u, v| p.eval(u, v), p.len)).fold(0.0, f64::max)
    });
    LevelNorms { level: image.level, l1, l1_over_len: l1 / image.iet.total, means: image.piece_means(), sup }
}

/// L1 norm, means and (for bounded input) sup norm of S(phi.level, k)phi by exact tower integration.
pub fn level_norms(p: &PeriodicIet, phi: &LogCocycle, k: usize) -> Result<LevelNorms> {
    let tower = Tower::new(p, phi.level, k)?;
    let view = structure_from_tower(&tower, phi)?;
    Ok(norms_of(&view.image))
}

/// Result of the cancellation check at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cancellation {
    pub defect: f64,
    /// defect / (Blog r / |I^(k)|)
    pub normalized: f64,
    pub closest_left: Vec<Option<f64>>,
    pub closest_right: Vec<Option<f64>>,
}

/// Sum of phi' over r iterates with the closest-point singular terms removed.
pub fn cancellation_defect(phi: &LogCocycle, x: f64, r: u64) -> Result<Cancellation> {
    let t = &phi.iet;
    let d = t.d();
    let mut w = Walker::new(t, x);
    let mut acc = Sum::new();
    let mut xl: Vec<Option<f64>> = vec![None; d];
    let mut xr: Vec<Option<f64>> = vec![None; d];
    for i in 0..r as i64 {
        let (a, u, v) = w.here(i)?;
        acc.add(phi.full(a).deriv(u, v));
        for g in 0..d {
            let dl = w.y.sub(Dd::new(t.left[g])).value();
            if dl >= 0.0 && xl[g].map_or(true, |m| dl < m) {
                xl[g] = Some(dl);
            }
            let dr = Dd::new(t.right[g]).sub(w.y).value();
            if dr > 0.0 && xr[g].map_or(true, |m| dr < m) {
                xr[g] = Some(dr);
            }
        }
        w.forward(a);
    }
    for g in 0..d {
        if let Some(m) = xl[g] {
            acc.add(phi.cplus[g] / m);
        }
        if let Some(m) = xr[g] {
            acc.add(-phi.cminus[g] / m);
        }
    }
    let defect = acc.value().abs();
    let scale = phi.blog() * r as f64 / t.total;
    Ok(Cancellation { defect, normalized: if scale > 0.0 { defect / scale } else { 0.0 }, closest_left: xl, closest_right: xr })
}

/// Outcome of the sup-norm estimate for Birkhoff sums of a bounded cocycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupBound {
    pub bound: f64,
    pub levels_used: usize,
    /// The level sups decay geometrically, so the tail is controlled.
    pub certified: bool,
    pub tail: f64,
}

impl SupBound {
    pub fn status(&self) -> &'static str {
        if self.certified {
            "bounded"
        } else {
            "unbounded estimate"
        }
    }
}

/// 2 sum_l ||A|| ||S(l)phi||_sup over the levels needed for sums of length n,
/// from precomputed level sups.
pub fn birkhoff_sup_bound(p: &PeriodicIet, sups: &[f64], n: u64) -> Result<SupBound> {
    if sups.is_empty() {
        return Err(Error::Invalid("no level sups".into()));
    }
    let za = p.norm_a();
    // levels up to the first whose shortest return time exceeds n
    let mut need = 0usize;
    loop {
        let q = p.return_times(0, need)?;
        if *q.iter().min().unwrap() as u64 > n || need + 1 >= p.level_cap {
            break;
        }
        need += 1;
    }
    let used = (need + 1).min(sups.len());
    let head = num::sum(sups[..used].iter().copied());
    let tail_n = sups.len().min(4);
    let last = &sups[sups.len() - tail_n..];
    let ratio = if tail_n >= 2 && last[0] > 0.0 {
        (last[tail_n - 1] / last[0]).powf(1.0 / (tail_n - 1) as f64)
    } else {
        f64::INFINITY
    };
    let all_zero = sups.iter().all(|&s| s == 0.0);
    let certified = all_zero || ratio < 0.95;
    let tail = if all_zero {
        0.0
    } else if certified {
        sups[sups.len() - 1] * ratio / (1.0 - ratio)
    } else {
        f64::INFINITY
    };
    let extra = if used < need + 1 && certified { tail } else { 0.0 };
    Ok(SupBound { bound: 2.0 * za * (head + extra), levels_used: used, certified, tail })
}

/// Level sups of S(l)h = (A^t)^l h for a piecewise constant h.
pub fn constant_sups(p: &PeriodicIet, h: &[f64], levels: usize) -> Vec<f64> {
    let at = p.at_f64();
    let mut v = h.to_vec();
    let mut out = Vec::with_capacity(levels);
    for _ in 0..levels {
        out.push(linalg::norm_max(&v));
        v = linalg::mat_vec(&at, &v);
    }
    out
}

/// CSV row of level diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagRow {
    pub level: usize,
    pub symbol: String,
    #[serde(rename = "Q")]
    pub q: i64,
    #[serde(rename = "L1_over_len")]
    pub l1_over_len: f64,
    pub sup: Option<f64>,
    pub defect: Option<f64>,
    pub bound: Option<f64>,
}

pub fn write_rows<W: std::io::Write>(rows: &[DiagRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Per-symbol rows for one level.
pub fn level_rows(p: &PeriodicIet, image: &LogCocycle) -> Result<Vec<DiagRow>> {
    let q = p.return_times(0, image.level)?;
    let d = image.d();
    Ok((0..d)
        .map(|a| {
            let piece = image.full(a);
            let l1 = piece.integral_abs(0.0, piece.len);
            let sup = (image.blog() == 0.0).then(|| crate::cocycle::sup_abs(&|u, v| piece.eval(u, v), piece.len));
            DiagRow {
                level: image.level,
                symbol: image.iet.perm.alphabet[a].clone(),
                q: q[a],
                l1_over_len: l1 / piece.len,
                sup,
                defect: None,
                bound: None,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::cocycle::Term;

    fn golden() -> PeriodicIet {
        catalog::build("golden").unwrap()
    }

    #[test]
    fn zero_steps_and_backwards() {
        let p = golden();
        let h = LogCocycle::piecewise_constant(&p.base, &[1.0, -2.0]);
        assert_eq!(birkhoff_sum(&h, 0.3, 0).unwrap(), 0.0);
        let x = 0.3;
        let mut y = x;
        for _ in 0..5 {
            y = p.base.evaluate_inverse(y, Convention::LeftClosed).unwrap();
        }
        let back = birkhoff_sum(&h, x, -5).unwrap();
        let fwd = birkhoff_sum(&h, y, 5).unwrap();
        assert!((back + fwd).abs() < 1e-12);
    }

    #[test]
    fn constant_one_counts_return_times() {
        let p = golden();
        let one = LogCocycle::piecewise_constant(&p.base, &[1.0, 1.0]);
        let q = p.return_times(0, 3).unwrap();
        let hi = p.induced_geometry(3).unwrap();
        for b in 0..2 {
            let x = hi.left[b] + 0.37 * hi.lambda[b];
            assert_eq!(special_sum_pointwise(&p, &one, 3, x).unwrap(), q[b] as f64);
        }
    }

    #[test]
    fn tower_closes_and_counts() {
        for name in ["golden", "rev4", "rev5"] {
            let p = catalog::build(name).unwrap();
            let t = Tower::new(&p, 0, 2).unwrap();
            for b in 0..p.d() {
                assert_eq!(t.floors[b].len() as i64, t.q[b]);
                // exactly one floor starts at a left end of level 0 in each column
                assert!(t.floors[b][0].off >= 0.0);
            }
        }
    }

    #[test]
    fn constants_renormalize_by_transpose() {
        let p = catalog::build("rev4").unwrap();
        let h = vec![0.3, -1.0, 0.25, 0.5];
        let phi = LogCocycle::piecewise_constant(&p.base, &h);
        let view = renormalize_structure(&p, &phi, 2).unwrap();
        let at = p.at_f64();
        let expect = linalg::mat_vec(&(&at * &at), &h);
        let means = view.image.piece_means();
        for (m, e) in means.iter().zip(&expect) {
            assert!((m - e).abs() < 1e-11 * (1.0 + e.abs()));
        }
    }

    #[test]
    fn structural_matches_orbit_sums() {
        let p = golden();
        let pair = LogCocycle::pure_log(&p.base, vec![0.0, 1.0], vec![1.0, 0.0]).unwrap();
        let s = &p.saddle;
        assert!(pair.is_strong_symmetric(s));
        let view = renormalize_structure(&p, &pair, 3).unwrap();
        let hi = &view.image.iet;
        let xs: Vec<f64> = (1..40).map(|i| hi.total * i as f64 / 40.0 + 1e-3 * hi.total).filter(|&x| x < hi.total).collect();
        assert!(consistency_gap(&p, &pair, &view, &xs).unwrap() < 1e-9);
        let c = check_constants(&p, &pair, &view).unwrap();
        assert!(c.blog_exact && c.plus_preserved);
    }

    #[test]
    fn integral_is_preserved() {
        let p = catalog::build("rev4").unwrap();
        let d = p.d();
        let g: Vec<Piece> = (0..d)
            .map(|a| Piece {
                len: p.base.lambda[a],
                poly: vec![0.1 * a as f64, 1.0],
                terms: vec![Term::xlogx(Side::Plus, 0.0, 0.2)],
                chebs: vec![],
            })
            .collect();
        let mut cp = vec![0.0; d];
        let mut cm = vec![0.0; d];
        cp[p.perm().at[0][1]] = 1.0;
        cm[p.perm().at[0][0]] = 0.5;
        let phi = LogCocycle::new(0, p.base.clone(), cp, cm, g).unwrap();
        let view = renormalize_structure(&p, &phi, 2).unwrap();
        let a = phi.integral();
        let b = view.image.integral();
        assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()), "{a} {b}");
        assert!(view.image.integrate_abs() <= phi.integrate_abs() * (1.0 + 1e-9));
    }

    #[test]
    fn sup_bound_for_zero_and_unstable() {
        let p = golden();
        let z = birkhoff_sup_bound(&p, &[0.0; 5], 1000).unwrap();
        assert_eq!(z.bound, 0.0);
        assert!(z.certified);
        let u = &p.spectral.basis_u[0];
        let s = constant_sups(&p, u, 8);
        let b = birkhoff_sup_bound(&p, &s, 10_000).unwrap();
        assert_eq!(b.status(), "unbounded estimate");
    }
}
