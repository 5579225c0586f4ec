//! Spectral splitting of the transposed period matrix into stable, central
//! and unstable parts, via contour-integral projectors.
//!
//! Eigenvalues on the unit circle are found exactly: the integer
//! characteristic polynomial is stripped of its cyclotomic factors, and the
//! corresponding numerical eigenvalues are snapped to the roots of unity.
//! Whatever is left must stay clear of a guard band around the circle.

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};
use crate::linalg::{self, IntMat};

type C64 = Complex<f64>;

#[derive(Debug, Clone)]
pub struct Spectral {
    /// Eigenvalues of the transposed period matrix, sorted by decreasing modulus.
    pub eigenvalues: Vec<C64>,
    /// log-moduli of the eigenvalues in the same order.
    pub exponents: Vec<f64>,
    pub proj_s: DMatrix<f64>,
    pub proj_c: DMatrix<f64>,
    pub proj_u: DMatrix<f64>,
    pub basis_s: Vec<Vec<f64>>,
    pub basis_c: Vec<Vec<f64>>,
    pub basis_u: Vec<Vec<f64>>,
    /// Slowest contraction rate on the stable part.
    pub theta_minus: f64,
    /// Slowest expansion rate on the unstable part.
    pub theta_plus: f64,
    /// Largest Jordan block size over all eigenvalues.
    pub jordan: usize,
    /// Orders m of the cyclotomic factors, with repetition.
    pub cyclotomic: Vec<usize>,
}

/// Relative band around the unit circle used to classify a modulus as central.
pub const UNIT_BAND: f64 = 1e-8;
/// Non-cyclotomic eigenvalues this close to the circle are refused.
pub const GUARD_BAND: f64 = 1e-4;

/// Characteristic polynomial det(xI - a), coefficients from degree 0 upwards.
pub fn charpoly(a: &IntMat) -> Vec<i128> {
    // Faddeev-LeVerrier; every division is exact over the integers
    let n = a.nrows();
    let a: Vec<Vec<i128>> = (0..n).map(|i| (0..n).map(|j| a[(i, j)] as i128).collect()).collect();
    let mut c = vec![0i128; n + 1];
    c[n] = 1;
    let mut m = vec![vec![0i128; n]; n];
    for k in 1..=n {
        // M_k = A M_{k-1} + c_{n-k+1} I
        let mut next = vec![vec![0i128; n]; n];
        for i in 0..n {
            for j in 0..n {
                let mut s = 0i128;
                for l in 0..n {
                    s += a[i][l] * m[l][j];
                }
                next[i][j] = s + if i == j { c[n - k + 1] } else { 0 };
            }
        }
        m = next;
        let mut tr = 0i128;
        for i in 0..n {
            for l in 0..n {
                tr += a[i][l] * m[l][i];
            }
        }
        c[n - k] = -tr / k as i128;
    }
    c
}

/// Exact division; None if `den` does not divide `num`.
fn poly_div(num: &[i128], den: &[i128]) -> Option<Vec<i128>> {
    let mut r = num.to_vec();
    while r.len() > 1 && *r.last().unwrap() == 0 {
        r.pop();
    }
    let dd = den.len() - 1;
    if r.len() - 1 < dd {
        return None;
    }
    let lead = *den.last().unwrap();
    let mut q = vec![0i128; r.len() - dd];
    for i in (0..q.len()).rev() {
        let top = r[i + dd];
        if top % lead != 0 {
            return None;
        }
        let f = top / lead;
        q[i] = f;
        for (j, &dj) in den.iter().enumerate() {
            r[i + j] -= f * dj;
        }
    }
    if r.iter().all(|&v| v == 0) {
        Some(q)
    } else {
        None
    }
}

/// The m-th cyclotomic polynomial.
pub fn cyclotomic(m: usize) -> Vec<i128> {
    let mut p = vec![0i128; m + 1];
    p[0] = -1;
    p[m] = 1;
    for j in 1..m {
        if m % j == 0 {
            p = poly_div(&p, &cyclotomic(j)).expect("cyclotomic factors divide x^m - 1");
        }
    }
    p
}

fn euler_phi(m: usize) -> usize {
    (1..=m).filter(|&k| gcd(k, m) == 1).count()
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Strip cyclotomic factors; returns the orders found (with repetition).
pub fn cyclotomic_orders(p: &[i128]) -> Vec<usize> {
    let deg = p.len() - 1;
    let mut rest = p.to_vec();
    let mut out = Vec::new();
    for m in 1.. {
        if euler_phi(m) > deg {
            // phi(m) >= sqrt(m/2), so m is bounded by 2 deg^2
            if m > 2 * deg * deg + 2 {
                break;
            }
            continue;
        }
        let c = cyclotomic(m);
        while let Some(q) = poly_div(&rest, &c) {
            rest = q;
            out.push(m);
        }
    }
    out
}

impl Spectral {
    /// Split for the transpose of the integer matrix `a`.
    pub fn of_transpose(a: &IntMat) -> Result<Spectral> {
        let at = a.transpose();
        let m = linalg::to_f64(&at);
        let d = m.nrows();
        let cyclo = cyclotomic_orders(&charpoly(&at));
        let mut roots: Vec<C64> = Vec::new();
        for &o in &cyclo {
            for k in 0..o {
                if gcd(k, o) == 1 {
                    roots.push(C64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / o as f64));
                }
            }
        }
        let mut eig: Vec<C64> = m.clone().complex_eigenvalues().iter().copied().collect();
        let mut central = vec![false; d];
        for r in &roots {
            let (i, dist) = (0..d)
                .filter(|&i| !central[i])
                .map(|i| (i, (eig[i] - r).norm()))
                .min_by(|x, y| x.1.total_cmp(&y.1))
                .expect("as many eigenvalues as roots");
            // a defective root splits by about eps^(1/M)
            if dist > 1e-3 {
                return Err(Error::MarginalSpectrum { modulus: eig[i].norm() });
            }
            eig[i] = *r;
            central[i] = true;
        }
        for i in 0..d {
            if !central[i] && (eig[i].norm() - 1.0).abs() <= GUARD_BAND {
                return Err(Error::MarginalSpectrum { modulus: eig[i].norm() });
            }
        }
        eig.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
        let stable_max = eig.iter().map(|z| z.norm()).filter(|&r| r < 1.0 - UNIT_BAND).fold(0.0, f64::max);
        let unstable_min =
            eig.iter().map(|z| z.norm()).filter(|&r| r > 1.0 + UNIT_BAND).fold(f64::INFINITY, f64::min);
        let r_s = stable_max.max(1e-300).sqrt();
        let r_u = if unstable_min.is_finite() { unstable_min.sqrt() } else { 2.0 };
        let p_inside_s = if stable_max > 0.0 { contour_projector(&m, r_s, &eig)? } else { DMatrix::zeros(d, d) };
        let p_inside_u = contour_projector(&m, r_u, &eig)?;
        let proj_s = p_inside_s.clone();
        let proj_c = &p_inside_u - &p_inside_s;
        let proj_u = DMatrix::identity(d, d) - &p_inside_u;
        let basis = linalg::projector_basis;
        let basis_s = basis(&proj_s);
        let basis_c = basis(&proj_c);
        let basis_u = basis(&proj_u);
        let exponents: Vec<f64> = eig.iter().map(|z| z.norm().ln()).collect();
        let theta_minus = if stable_max > 0.0 { -stable_max.ln() } else { f64::INFINITY };
        let theta_plus = if unstable_min.is_finite() { unstable_min.ln() } else { f64::INFINITY };
        let jordan = jordan_size(&m, &eig);
        Ok(Spectral {
            eigenvalues: eig,
            exponents,
            proj_s,
            proj_c,
            proj_u,
            basis_s,
            basis_c,
            basis_u,
            theta_minus,
            theta_plus,
            jordan,
            cyclotomic: cyclo,
        })
    }

    pub fn proj_cs(&self) -> DMatrix<f64> {
        &self.proj_s + &self.proj_c
    }

    pub fn proj_cu(&self) -> DMatrix<f64> {
        &self.proj_c + &self.proj_u
    }
}

/// (1/2 pi i) times the contour integral of the resolvent over |z| = r.
fn contour_projector(m: &DMatrix<f64>, r: f64, eig: &[C64]) -> Result<DMatrix<f64>> {
    let d = m.nrows();
    // convergence ratio of the trapezoidal rule
    let ratio = eig
        .iter()
        .map(|z| {
            let q = z.norm() / r;
            if q < 1.0 {
                q
            } else {
                1.0 / q
            }
        })
        .fold(0.0, f64::max);
    let n = ((45.0 / -ratio.ln()).ceil() as usize).clamp(64, 200_000);
    let mc: DMatrix<C64> = m.map(|v| C64::new(v, 0.0));
    let mut acc = DMatrix::<C64>::zeros(d, d);
    for j in 0..n {
        let th = 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / n as f64;
        let z = C64::from_polar(r, th);
        let shifted = DMatrix::<C64>::identity(d, d) * z - &mc;
        let inv = shifted.try_inverse().ok_or_else(|| Error::MarginalSpectrum { modulus: r })?;
        acc += inv * z;
    }
    Ok(acc.map(|c| c.re / n as f64))
}

fn jordan_size(m: &DMatrix<f64>, eig: &[C64]) -> usize {
    let d = m.nrows();
    let mc: DMatrix<C64> = m.map(|v| C64::new(v, 0.0));
    let scale = m.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let mut best = 1;
    let mut done: Vec<C64> = Vec::new();
    for &mu in eig {
        if done.iter().any(|z| (z - mu).norm() < 1e-6 * scale) {
            continue;
        }
        done.push(mu);
        let b = &mc - DMatrix::<C64>::identity(d, d) * mu;
        let mut pow = b.clone();
        let mut prev_rank = d;
        for j in 1..=d {
            let sv = pow.clone().svd(false, false).singular_values;
            let smax = sv.iter().copied().fold(0.0, f64::max).max(1e-300);
            let rank = sv.iter().filter(|&&s| s > 1e-7 * smax.max(scale.powi(j as i32))).count();
            if rank == prev_rank {
                best = best.max(j - 1);
                break;
            }
            prev_rank = rank;
            if j == d {
                best = best.max(d);
            }
            pow = &pow * &b;
        }
    }
    best.max(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_split() {
        let m = IntMat::from_row_slice(2, 2, &[1, 1, 1, 2]);
        let s = Spectral::of_transpose(&m).unwrap();
        assert_eq!((s.basis_s.len(), s.basis_c.len(), s.basis_u.len()), (1, 0, 1));
        let rho = (3.0 + 5f64.sqrt()) / 2.0;
        assert!((s.eigenvalues[0].re - rho).abs() < 1e-12);
        assert!((s.theta_minus - rho.ln()).abs() < 1e-12);
        assert_eq!(s.jordan, 1);
        let sum = &s.proj_s + &s.proj_u;
        assert!((sum - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn unipotent_block_is_central() {
        let m = IntMat::from_row_slice(2, 2, &[1, 1, 0, 1]);
        let s = Spectral::of_transpose(&m).unwrap();
        assert_eq!(s.basis_c.len(), 2);
        assert_eq!(s.jordan, 2);
        assert_eq!(s.cyclotomic, vec![1, 1]);
    }

    #[test]
    fn near_circle_refused() {
        // companion of x^2 - (n+1)x + (n+1): the small root is about 1 + 2/n
        let n = 100_000;
        let m = IntMat::from_row_slice(2, 2, &[0, 1, -(n + 1), n + 1]);
        assert!(matches!(Spectral::of_transpose(&m), Err(Error::MarginalSpectrum { .. })));
    }

    #[test]
    fn charpoly_and_cyclotomics() {
        let m = IntMat::from_row_slice(2, 2, &[1, 1, 1, 2]);
        assert_eq!(charpoly(&m), vec![1, -3, 1]);
        assert_eq!(cyclotomic(1), vec![-1, 1]);
        assert_eq!(cyclotomic(4), vec![1, 0, 1]);
        assert_eq!(cyclotomic(6), vec![1, -1, 1]);
        let rot = IntMat::from_row_slice(3, 3, &[0, 1, 0, 0, 0, 1, 1, 0, 0]);
        let mut o = cyclotomic_orders(&charpoly(&rot));
        o.sort_unstable();
        assert_eq!(o, vec![1, 3]);
    }

    #[test]
    fn jordan_block_detected() {
        let m = IntMat::from_row_slice(3, 3, &[2, 0, 0, 1, 2, 0, 0, 0, 3]);
        let s = Spectral::of_transpose(&m).unwrap();
        assert_eq!(s.jordan, 2);
    }
}
