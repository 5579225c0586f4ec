//! Exact integer helpers and floating-point subspace utilities.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type IntMat = DMatrix<i64>;

/// Rank of an integer matrix by fraction-free elimination.
pub fn rank_int(m: &IntMat) -> usize {
    let (rows, cols) = m.shape();
    let mut a: Vec<Vec<i128>> = (0..rows).map(|i| (0..cols).map(|j| m[(i, j)] as i128).collect()).collect();
    let mut rank = 0;
    let mut prev = 1i128;
    for c in 0..cols {
        let Some(p) = (rank..rows).find(|&r| a[r][c] != 0) else { continue };
        a.swap(rank, p);
        for r in rank + 1..rows {
            for j in c + 1..cols {
                a[r][j] = (a[rank][c] * a[r][j] - a[r][c] * a[rank][j]) / prev;
            }
            a[r][c] = 0;
        }
        prev = a[rank][c];
        rank += 1;
        if rank == rows {
            break;
        }
    }
    rank
}

pub fn int_mul(a: &IntMat, b: &IntMat) -> Result<IntMat> {
    let (n, k) = a.shape();
    let m = b.ncols();
    let mut out = IntMat::zeros(n, m);
    for i in 0..n {
        for j in 0..m {
            let mut s: i64 = 0;
            for l in 0..k {
                s = a[(i, l)]
                    .checked_mul(b[(l, j)])
                    .and_then(|v| s.checked_add(v))
                    .ok_or_else(|| Error::Budget("integer overflow in matrix product".into()))?;
            }
            out[(i, j)] = s;
        }
    }
    Ok(out)
}

pub fn int_pow(a: &IntMat, k: usize) -> Result<IntMat> {
    let mut out = IntMat::identity(a.nrows(), a.ncols());
    for _ in 0..k {
        out = int_mul(&out, a)?;
    }
    Ok(out)
}

pub fn int_vec_mul(a: &IntMat, v: &[i64]) -> Vec<i64> {
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)] * v[j]).sum()).collect()
}

/// Column sums (max abs column sum is the operator norm used throughout).
pub fn col_sums(a: &IntMat) -> Vec<i64> {
    (0..a.ncols()).map(|j| (0..a.nrows()).map(|i| a[(i, j)]).sum()).collect()
}

pub fn norm_int(a: &IntMat) -> i64 {
    (0..a.ncols()).map(|j| (0..a.nrows()).map(|i| a[(i, j)].abs()).sum()).max().unwrap_or(0)
}

pub fn to_f64(a: &IntMat) -> DMatrix<f64> {
    a.map(|v| v as f64)
}

/// Orthonormal bases of the range and the null space of `m`.
pub fn range_and_null(m: &DMatrix<f64>, tol: f64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = m.ncols();
    let svd = m.clone().svd(true, true);
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max).max(1.0);
    let mut range = Vec::new();
    let mut sig = vec![false; n];
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s > tol * smax {
            range.push(u.column(i).iter().copied().collect());
            if i < n {
                sig[i] = true;
            }
        }
    }
    let mut null = Vec::new();
    for i in 0..vt.nrows() {
        if !sig[i] {
            null.push(vt.row(i).iter().copied().collect());
        }
    }
    // rows of v_t beyond the singular-value count are null directions too
    (range, null)
}

/// Orthonormal basis of the range of a projector. The rank is its trace;
/// columns are picked by largest remaining norm, then pushed through the
/// projector once more so they lie in the range to rounding.
pub fn projector_basis(p: &DMatrix<f64>) -> Vec<Vec<f64>> {
    let d = p.nrows();
    let rank = p.trace().round().max(0.0) as usize;
    let mut cols: Vec<Vec<f64>> = (0..d).map(|j| p.column(j).iter().copied().collect()).collect();
    let mut out: Vec<Vec<f64>> = Vec::new();
    for _ in 0..rank.min(d) {
        let Some(j) = (0..d).max_by(|&a, &b| norm2(&cols[a]).total_cmp(&norm2(&cols[b]))) else { break };
        let n = norm2(&cols[j]);
        if n == 0.0 {
            break;
        }
        let q: Vec<f64> = cols[j].iter().map(|x| x / n).collect();
        for c in cols.iter_mut() {
            let k = dot(c, &q);
            for (ci, qi) in c.iter_mut().zip(&q) {
                *ci -= k * qi;
            }
        }
        out.push(q);
    }
    let pushed: Vec<Vec<f64>> = out.iter().map(|q| mat_vec(p, q)).collect();
    orthonormalize(&pushed, 1e-12)
}

/// Orthonormal basis of the span of `vs` (Gram-Schmidt with reorthogonalisation).
pub fn orthonormalize(vs: &[Vec<f64>], tol: f64) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for v in vs {
        let mut w = v.clone();
        for _ in 0..2 {
            for q in &out {
                let c = dot(&w, q);
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= c * qi;
                }
            }
        }
        let n = norm2(&w);
        if n > tol * norm2(v).max(1e-300) {
            out.push(w.iter().map(|x| x / n).collect());
        }
    }
    out
}

/// Largest distance from a unit vector of span(a) to span(b), in both directions.
pub fn mutual_projection_residual(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let qa = orthonormalize(a, 1e-12);
    let qb = orthonormalize(b, 1e-12);
    if qa.len() != qb.len() {
        return f64::INFINITY;
    }
    let res = |x: &[Vec<f64>], y: &[Vec<f64>]| {
        x.iter()
            .map(|v| {
                let mut w = v.clone();
                for q in y {
                    let c = dot(&w, q);
                    for (wi, qi) in w.iter_mut().zip(q) {
                        *wi -= c * qi;
                    }
                }
                norm2(&w)
            })
            .fold(0.0, f64::max)
    };
    res(&qa, &qb).max(res(&qb, &qa))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    crate::num::sum(a.iter().zip(b).map(|(x, y)| x * y))
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_max(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn mat_vec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    let r = m * DVector::from_column_slice(v);
    r.iter().copied().collect()
}

/// Real Schur-free solve of a small linear system.
pub fn solve(m: &DMatrix<f64>, v: &[f64]) -> Result<Vec<f64>> {
    m.clone()
        .lu()
        .solve(&DVector::from_column_slice(v))
        .map(|x| x.iter().copied().collect())
        .ok_or_else(|| Error::Invalid("singular linear system".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integer_rank() {
        let m = IntMat::from_row_slice(3, 3, &[1, 2, 3, 2, 4, 6, 1, 0, 1]);
        assert_eq!(rank_int(&m), 2);
        assert_eq!(rank_int(&IntMat::identity(4, 4)), 4);
    }

    #[test]
    fn range_null_dimensions() {
        let m = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 1.0, -1.0, 0.0, 1.0, -1.0, -1.0, 0.0]);
        let (r, n) = range_and_null(&m, 1e-10);
        assert_eq!((r.len(), n.len()), (2, 1));
        let k = &n[0];
        assert!(norm_max(&mat_vec(&m, k)) < 1e-12);
    }

    #[test]
    fn projection_residual_detects_equal_spans() {
        let a = vec![vec![1.0, 1.0, 0.0], vec![0.0, 1.0, 1.0]];
        let b = vec![vec![1.0, 2.0, 1.0], vec![1.0, 0.0, -1.0]];
        assert!(mutual_projection_residual(&a, &b) < 1e-12);
        let c = vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]];
        assert!(mutual_projection_residual(&a, &c) > 0.1);
    }

    #[test]
    fn checked_power_overflows() {
        let m = IntMat::from_row_slice(2, 2, &[3, 1, 1, 3]);
        assert!(int_pow(&m, 10).is_ok());
        assert!(int_pow(&m, 60).is_err());
    }
}
