//! Permutation pairs, interval exchanges, the translation matrix and the
//! saddle-orbit combinatorics of a pair.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A pair of bijections from the alphabet to positions. Positions are kept
/// 0-based internally; the JSON form uses 1-based positions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PermPair {
    pub alphabet: Vec<String>,
    /// `pos[0][a]` is the top position of symbol `a`, `pos[1][a]` the bottom one.
    pub pos: [Vec<usize>; 2],
    /// `at[row][j]` is the symbol at position `j`.
    pub at: [Vec<usize>; 2],
}

fn invert(p: &[usize]) -> Result<Vec<usize>> {
    let d = p.len();
    let mut inv = vec![usize::MAX; d];
    for (a, &j) in p.iter().enumerate() {
        if j >= d || inv[j] != usize::MAX {
            return Err(Error::InvalidPermutation(format!("{p:?} is not a bijection")));
        }
        inv[j] = a;
    }
    Ok(inv)
}

impl PermPair {
    /// Build from 1-based positions without the irreducibility check.
    pub fn from_positions_unchecked(alphabet: Vec<String>, top: &[usize], bottom: &[usize]) -> Result<Self> {
        let d = alphabet.len();
        if d < 2 || top.len() != d || bottom.len() != d {
            return Err(Error::InvalidPermutation("need d >= 2 and matching lengths".into()));
        }
        if top.iter().chain(bottom).any(|&v| v == 0) {
            return Err(Error::InvalidPermutation("positions are 1-based".into()));
        }
        let p0: Vec<usize> = top.iter().map(|v| v - 1).collect();
        let p1: Vec<usize> = bottom.iter().map(|v| v - 1).collect();
        let a0 = invert(&p0)?;
        let a1 = invert(&p1)?;
        Ok(PermPair { alphabet, pos: [p0, p1], at: [a0, a1] })
    }

    /// Build from 1-based positions and require irreducibility.
    pub fn new(alphabet: Vec<String>, top: &[usize], bottom: &[usize]) -> Result<Self> {
        let p = Self::from_positions_unchecked(alphabet, top, bottom)?;
        p.check_irreducible()?;
        Ok(p)
    }

    /// Pair given by the bottom row read as symbols in top order:
    /// `monodromy[j]` is the 1-based bottom position of the symbol at top position j+1.
    pub fn from_monodromy(monodromy: &[usize]) -> Result<Self> {
        let d = monodromy.len();
        let alphabet = default_alphabet(d);
        let top: Vec<usize> = (1..=d).collect();
        Self::new(alphabet, &top, monodromy)
    }

    /// The standard pair with top = identity and bottom reversed.
    pub fn reverse(d: usize) -> Result<Self> {
        let m: Vec<usize> = (1..=d).rev().collect();
        Self::from_monodromy(&m)
    }

    pub fn d(&self) -> usize {
        self.alphabet.len()
    }

    /// Returns Err(Reducible{k}) with the first offending prefix length.
    pub fn check_irreducible(&self) -> Result<()> {
        let d = self.d();
        let mut max_seen = 0;
        for k in 1..d {
            let a = self.at[0][k - 1];
            max_seen = max_seen.max(self.pos[1][a] + 1);
            if max_seen == k {
                return Err(Error::Reducible { k });
            }
        }
        Ok(())
    }

    /// p(j) = pi1(pi0^{-1}(j)) for 1 <= j <= d, 1-based.
    pub fn monodromy(&self) -> Vec<usize> {
        (0..self.d()).map(|j| self.pos[1][self.at[0][j]] + 1).collect()
    }

    /// The last symbol in row `row` (pi_row^{-1}(d)).
    pub fn last(&self, row: usize) -> usize {
        self.at[row][self.d() - 1]
    }

    /// The first symbol in row `row`.
    pub fn first(&self, row: usize) -> usize {
        self.at[row][0]
    }

    /// Antisymmetric translation matrix.
    pub fn omega(&self) -> DMatrix<i64> {
        let d = self.d();
        DMatrix::from_fn(d, d, |a, b| {
            let (t, u) = (&self.pos[0], &self.pos[1]);
            if u[a] > u[b] && t[a] < t[b] {
                1
            } else if u[a] < u[b] && t[a] > t[b] {
                -1
            } else {
                0
            }
        })
    }

    /// Successor pair after one induction step of type `eps`.
    pub fn successor(&self, eps: usize) -> PermPair {
        let d = self.d();
        let winner = self.last(eps);
        let loser_row = 1 - eps;
        let m = self.pos[loser_row][winner]; // 0-based
        let mut next = self.pos[loser_row].clone();
        for v in next.iter_mut() {
            if *v > m && *v < d - 1 {
                *v += 1;
            } else if *v == d - 1 {
                *v = m + 1;
            }
        }
        let mut pos = self.pos.clone();
        pos[loser_row] = next;
        let at = [invert(&pos[0]).unwrap(), invert(&pos[1]).unwrap()];
        PermPair { alphabet: self.alphabet.clone(), pos, at }
    }

    pub fn to_json(&self) -> PermPairJson {
        PermPairJson {
            alphabet: self.alphabet.clone(),
            pi0: self.pos[0].iter().map(|v| v + 1).collect(),
            pi1: self.pos[1].iter().map(|v| v + 1).collect(),
        }
    }
}

pub fn default_alphabet(d: usize) -> Vec<String> {
    (0..d).map(|i| ((b'A' + i as u8) as char).to_string()).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PermPairJson {
    pub alphabet: Vec<String>,
    pub pi0: Vec<usize>,
    pub pi1: Vec<usize>,
}

impl PermPairJson {
    pub fn build(&self) -> Result<PermPair> {
        PermPair::new(self.alphabet.clone(), &self.pi0, &self.pi1)
    }
}

/// Which half-open convention to use at discontinuities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Convention {
    /// Intervals [l, r); this is T.
    LeftClosed,
    /// Intervals (l, r]; this is the hat map.
    RightClosed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Iet {
    pub perm: PermPair,
    pub lambda: Vec<f64>,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub left_img: Vec<f64>,
    pub right_img: Vec<f64>,
    pub w: Vec<f64>,
    pub total: f64,
}

impl Iet {
    pub fn new(perm: PermPair, lambda: Vec<f64>) -> Result<Self> {
        perm.check_irreducible()?;
        let d = perm.d();
        if lambda.len() != d {
            return Err(Error::Invalid("length vector has the wrong size".into()));
        }
        for (a, &v) in lambda.iter().enumerate() {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::NonPositiveLength { symbol: perm.alphabet[a].clone(), value: v });
            }
        }
        let mut left = vec![0.0; d];
        let mut left_img = vec![0.0; d];
        for row in 0..2 {
            let mut acc = crate::num::Sum::new();
            for j in 0..d {
                let a = perm.at[row][j];
                if row == 0 {
                    left[a] = acc.value();
                } else {
                    left_img[a] = acc.value();
                }
                acc.add(lambda[a]);
            }
        }
        let total = crate::num::sum(lambda.iter().copied());
        let right: Vec<f64> = (0..d).map(|a| if perm.pos[0][a] == d - 1 { total } else { left[perm.at[0][perm.pos[0][a] + 1]] }).collect();
        let right_img: Vec<f64> =
            (0..d).map(|a| if perm.pos[1][a] == d - 1 { total } else { left_img[perm.at[1][perm.pos[1][a] + 1]] }).collect();
        // w = Omega lambda, summed with compensation
        let om = perm.omega();
        let w: Vec<f64> = (0..d)
            .map(|a| crate::num::sum((0..d).map(|b| om[(a, b)] as f64 * lambda[b])))
            .collect();
        Ok(Iet { perm, lambda, left, right, left_img, right_img, w, total })
    }

    pub fn d(&self) -> usize {
        self.perm.d()
    }

    /// Translations carried in double-double, for orbits long enough that
    /// the rounding of `w` would add up.
    pub fn translations_dd(&self) -> Vec<crate::num::Dd> {
        let om = self.perm.omega();
        let d = self.d();
        (0..d)
            .map(|a| {
                (0..d).fold(crate::num::Dd::default(), |acc, b| match om[(a, b)] {
                    0 => acc,
                    k if k > 0 => (0..k).fold(acc, |s, _| s.add(crate::num::Dd::new(self.lambda[b]))),
                    k => (0..-k).fold(acc, |s, _| s.sub(crate::num::Dd::new(self.lambda[b]))),
                })
            })
            .collect()
    }

    pub fn min_length(&self) -> f64 {
        self.lambda.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Point tolerance: 1e-9 of the shortest interval.
    pub fn point_tol(&self) -> f64 {
        1e-9 * self.min_length()
    }

    /// The symbol whose interval contains `x` under `conv`.
    pub fn locate(&self, x: f64, conv: Convention) -> Result<usize> {
        let d = self.d();
        match conv {
            Convention::LeftClosed => {
                if !(x >= 0.0 && x < self.total) {
                    return Err(Error::OutsideDomain { x });
                }
                for j in (0..d).rev() {
                    let a = self.perm.at[0][j];
                    if x >= self.left[a] {
                        return Ok(a);
                    }
                }
            }
            Convention::RightClosed => {
                if !(x > 0.0 && x <= self.total) {
                    return Err(Error::OutsideDomain { x });
                }
                for j in 0..d {
                    let a = self.perm.at[0][j];
                    if x <= self.right[a] {
                        return Ok(a);
                    }
                }
            }
        }
        Err(Error::OutsideDomain { x })
    }

    pub fn evaluate(&self, x: f64, conv: Convention) -> Result<f64> {
        let a = self.locate(x, conv)?;
        Ok(x + self.w[a])
    }

    /// Inverse map under the given convention.
    pub fn evaluate_inverse(&self, y: f64, conv: Convention) -> Result<f64> {
        let d = self.d();
        let a = match conv {
            Convention::LeftClosed => {
                if !(y >= 0.0 && y < self.total) {
                    return Err(Error::OutsideDomain { x: y });
                }
                (0..d).rev().map(|j| self.perm.at[1][j]).find(|&a| y >= self.left_img[a]).unwrap()
            }
            Convention::RightClosed => {
                if !(y > 0.0 && y <= self.total) {
                    return Err(Error::OutsideDomain { x: y });
                }
                (0..d).map(|j| self.perm.at[1][j]).find(|&a| y <= self.right_img[a]).unwrap()
            }
        };
        Ok(y - self.w[a])
    }

    /// Copy with lengths multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Iet {
        Iet::new(self.perm.clone(), self.lambda.iter().map(|v| v * s).collect()).expect("scaling keeps validity")
    }

    /// Sorted set of left endpoints except 0 and right endpoints except |I|.
    pub fn interior_endpoints(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.d();
        let mut ls: Vec<f64> = (0..d).filter(|&a| self.perm.pos[0][a] != 0).map(|a| self.left[a]).collect();
        let mut rs: Vec<f64> = (0..d).filter(|&a| self.perm.pos[0][a] != d - 1).map(|a| self.right[a]).collect();
        ls.sort_by(f64::total_cmp);
        rs.sort_by(f64::total_cmp);
        (ls, rs)
    }

    pub fn to_json(&self) -> IetJson {
        let p = self.perm.to_json();
        IetJson { alphabet: p.alphabet, pi0: p.pi0, pi1: p.pi1, lambda: self.lambda.iter().map(|v| format!("{v:e}")).collect() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct IetJson {
    pub alphabet: Vec<String>,
    pub pi0: Vec<usize>,
    pub pi1: Vec<usize>,
    pub lambda: Vec<String>,
}

impl IetJson {
    pub fn build(&self) -> Result<Iet> {
        let perm = PermPair::new(self.alphabet.clone(), &self.pi0, &self.pi1)?;
        let lambda = self
            .lambda
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Invalid(format!("length {s:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        Iet::new(perm, lambda)
    }
}

/// Saddle orbits of the boundary permutation and the kernel vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SaddleData {
    /// sigma on {0..d}.
    pub sigma: Vec<usize>,
    /// Orbits of sigma, each sorted; orbit 0 contains 0.
    pub orbits: Vec<Vec<usize>>,
    /// Vectors b(O) for every orbit, same order as `orbits`.
    pub b: Vec<Vec<i64>>,
    /// Symbols whose right end is on the orbit.
    pub a_minus: Vec<Vec<usize>>,
    /// Symbols whose left end is on the orbit.
    pub a_plus: Vec<Vec<usize>>,
    pub kappa: usize,
    pub genus: usize,
}

impl SaddleData {
    /// Indices of orbits not containing 0.
    pub fn nonzero_orbits(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.orbits.len()).filter(move |&i| !self.orbits[i].contains(&0))
    }

    pub fn orbit_of(&self, j: usize) -> usize {
        self.orbits.iter().position(|o| o.contains(&j)).expect("every boundary lies on an orbit")
    }
}

pub fn saddle_orbits(perm: &PermPair) -> SaddleData {
    let d = perm.d();
    // p on {0..d+1}
    let mut p = vec![0usize; d + 2];
    for (j, v) in perm.monodromy().into_iter().enumerate() {
        p[j + 1] = v;
    }
    p[d + 1] = d + 1;
    let mut pinv = vec![0usize; d + 2];
    for (j, &v) in p.iter().enumerate() {
        pinv[v] = j;
    }
    let sigma: Vec<usize> = (0..=d).map(|j| pinv[p[j] + 1] - 1).collect();
    let mut seen = vec![false; d + 1];
    let mut orbits = Vec::new();
    for s in 0..=d {
        if seen[s] {
            continue;
        }
        let mut o = Vec::new();
        let mut j = s;
        while !seen[j] {
            seen[j] = true;
            o.push(j);
            j = sigma[j];
        }
        o.sort_unstable();
        orbits.push(o);
    }
    let mut b = Vec::new();
    let mut a_minus = Vec::new();
    let mut a_plus = Vec::new();
    for o in &orbits {
        let chi = |j: usize| o.contains(&j) as i64;
        let mut v = vec![0i64; d];
        let mut am = Vec::new();
        let mut ap = Vec::new();
        for a in 0..d {
            let j = perm.pos[0][a] + 1;
            v[a] = chi(j) - chi(j - 1);
            if o.contains(&j) {
                am.push(a);
            }
            if o.contains(&(j - 1)) {
                ap.push(a);
            }
        }
        b.push(v);
        a_minus.push(am);
        a_plus.push(ap);
    }
    let kappa = orbits.len();
    let rank = crate::linalg::rank_int(&perm.omega());
    SaddleData { sigma, orbits, b, a_minus, a_plus, kappa, genus: rank / 2 }
}

/// (Omega, 2g, kernel basis, image basis) with floating-point bases.
pub struct OmegaSpaces {
    pub omega: DMatrix<i64>,
    pub rank: usize,
    pub kernel: Vec<Vec<f64>>,
    pub image: Vec<Vec<f64>>,
}

pub fn omega_rank_and_subspaces(perm: &PermPair) -> OmegaSpaces {
    let omega = perm.omega();
    let f = omega.map(|v| v as f64);
    let (image, kernel) = crate::linalg::range_and_null(&f, 1e-10);
    OmegaSpaces { rank: image.len(), omega, kernel, image }
}

/// (Lambda h)_O = <h, b(O)> for the orbits avoiding 0.
pub fn lambda_functional(saddle: &SaddleData, h: &[f64]) -> Vec<f64> {
    saddle
        .nonzero_orbits()
        .map(|i| crate::num::sum(saddle.b[i].iter().zip(h).map(|(&b, &x)| b as f64 * x)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn golden_pair() -> PermPair {
        PermPair::new(vec!["A".into(), "B".into()], &[1, 2], &[2, 1]).unwrap()
    }

    #[test]
    fn rotation_translations() {
        let t = Iet::new(golden_pair(), vec![0.7, 0.3]).unwrap();
        assert!((t.w[0] - 0.3).abs() < 1e-15);
        assert!((t.w[1] + 0.7).abs() < 1e-15);
        assert!((t.evaluate(0.1, Convention::LeftClosed).unwrap() - 0.4).abs() < 1e-15);
        // boundary conventions
        assert!((t.evaluate(0.7, Convention::LeftClosed).unwrap() - 0.0).abs() < 1e-15);
        assert!((t.evaluate(0.7, Convention::RightClosed).unwrap() - 1.0).abs() < 1e-15);
        assert!(t.evaluate(1.0, Convention::LeftClosed).is_err());
        assert!(t.evaluate(0.0, Convention::RightClosed).is_err());
    }

    #[test]
    fn identity_pair_is_reducible() {
        let e = PermPair::new(vec!["A".into(), "B".into()], &[1, 2], &[1, 2]).unwrap_err();
        assert_eq!(e, Error::Reducible { k: 1 });
        let e = PermPair::from_monodromy(&[2, 1, 3, 5, 4]).unwrap_err();
        assert_eq!(e, Error::Reducible { k: 2 });
    }

    #[test]
    fn nonpositive_lengths_rejected() {
        assert!(matches!(Iet::new(golden_pair(), vec![0.5, 0.0]), Err(Error::NonPositiveLength { .. })));
    }

    #[test]
    fn omega_sign_table_reverse_four() {
        // sign table evaluated directly: top order A B C D, bottom D C B A
        let p = PermPair::reverse(4).unwrap();
        let om = p.omega();
        for a in 0..4 {
            for b in 0..4 {
                let expect = if a < b { 1 } else if a > b { -1 } else { 0 };
                assert_eq!(om[(a, b)], expect);
            }
        }
    }

    #[test]
    fn golden_saddles() {
        let s = saddle_orbits(&golden_pair());
        assert_eq!(s.orbits, vec![vec![0, 1, 2]]);
        assert_eq!((s.kappa, s.genus), (1, 1));
    }

    #[test]
    fn reverse_five_saddles() {
        // hand iteration of sigma: 0 -> 4 -> 2 -> 0 and 1 -> 5 -> 3 -> 1
        let s = saddle_orbits(&PermPair::reverse(5).unwrap());
        assert_eq!(s.sigma, vec![4, 5, 0, 1, 2, 3]);
        assert_eq!(s.orbits, vec![vec![0, 2, 4], vec![1, 3, 5]]);
        assert_eq!((s.kappa, s.genus), (2, 2));
    }

    #[test]
    fn endpoint_sets_coincide() {
        let p = PermPair::from_monodromy(&[3, 1, 4, 2]).unwrap();
        let t = Iet::new(p, vec![0.31, 0.17, 0.29, 0.23]).unwrap();
        let (ls, rs) = t.interior_endpoints();
        assert_eq!(ls, rs);
    }

    #[test]
    fn json_roundtrip() {
        let t = Iet::new(golden_pair(), vec![0.618, 0.382]).unwrap();
        let s = serde_json::to_string(&t.to_json()).unwrap();
        let back: IetJson = serde_json::from_str(&s).unwrap();
        assert_eq!(back.build().unwrap(), t);
    }
}
