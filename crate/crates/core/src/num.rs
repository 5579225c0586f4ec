//! Small numerical kernels: compensated sums, Gauss rules, Chebyshev
//! interpolants, adaptive Gauss-Kronrod and least squares.

use nalgebra::{DMatrix, DVector};

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sum {
    hi: f64,
    lo: f64,
}

impl Sum {
    pub fn new() -> Self {
        Sum::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.hi + x;
        if self.hi.abs() >= x.abs() {
            self.lo += (self.hi - t) + x;
        } else {
            self.lo += (x - t) + self.hi;
        }
        self.hi = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.hi + self.lo
    }
}

pub fn sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = Sum::new();
    for x in xs {
        s.add(x);
    }
    s.value()
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p0 / dp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Panel list for [a, b] refined geometrically towards both ends.
/// Returns (left, right) pairs.
pub fn graded_panels(a: f64, b: f64, levels: usize, interior: usize) -> Vec<(f64, f64)> {
    let h = b - a;
    let mut cuts = Vec::new();
    let ratio: f64 = 0.5;
    let edge = 0.1 * h;
    for i in (0..levels).rev() {
        cuts.push(a + edge * ratio.powi(i as i32 + 1));
    }
    let inner_a = a + edge;
    let inner_b = b - edge;
    for i in 0..=interior {
        cuts.push(inner_a + (inner_b - inner_a) * i as f64 / interior as f64);
    }
    for i in 0..levels {
        cuts.push(b - edge * ratio.powi(i as i32 + 1));
    }
    let mut out = Vec::with_capacity(cuts.len() + 1);
    let mut prev = a;
    for c in cuts {
        out.push((prev, c));
        prev = c;
    }
    out.push((prev, b));
    out
}

/// Quadrature points and weights on [a, b] built from graded panels.
pub fn graded_rule(a: f64, b: f64, levels: usize, interior: usize, order: usize) -> Vec<(f64, f64)> {
    let (gx, gw) = gauss_legendre(order);
    let mut pts = Vec::new();
    for (pa, pb) in graded_panels(a, b, levels, interior) {
        let half = 0.5 * (pb - pa);
        let mid = 0.5 * (pb + pa);
        for (x, w) in gx.iter().zip(&gw) {
            pts.push((mid + half * x, half * w));
        }
    }
    pts
}

/// Chebyshev interpolant on [a, b] (first-kind nodes).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Cheb {
    pub a: f64,
    pub b: f64,
    pub coef: Vec<f64>,
}

impl Cheb {
    /// Nodes on [-1,1], first kind, in increasing order.
    pub fn unit_nodes(n: usize) -> Vec<f64> {
        (0..n)
            .map(|k| -(std::f64::consts::PI * (k as f64 + 0.5) / n as f64).cos())
            .collect()
    }

    pub fn zero(a: f64, b: f64) -> Self {
        Cheb { a, b, coef: vec![0.0] }
    }

    /// Fit from values at `unit_nodes(n)` mapped to [a, b].
    pub fn fit(a: f64, b: f64, values: &[f64]) -> Self {
        let n = values.len();
        let mut coef = vec![0.0; n];
        for (j, c) in coef.iter_mut().enumerate() {
            let mut s = Sum::new();
            for (k, v) in values.iter().enumerate() {
                // node k is -cos(theta_k) = cos(pi - theta_k)
                let th = std::f64::consts::PI * (k as f64 + 0.5) / n as f64;
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                s.add(v * sign * (j as f64 * th).cos());
            }
            *c = s.value() * if j == 0 { 1.0 } else { 2.0 } / n as f64;
        }
        Cheb { a, b, coef }
    }

    #[inline]
    pub fn unit(&self, x: f64) -> f64 {
        (2.0 * x - self.a - self.b) / (self.b - self.a)
    }

    /// Clenshaw evaluation at a unit coordinate t in [-1, 1].
    #[inline]
    pub fn eval_unit(&self, t: f64) -> f64 {
        let (mut b1, mut b2) = (0.0, 0.0);
        for &c in self.coef.iter().skip(1).rev() {
            let b0 = 2.0 * t * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        t * b1 - b2 + self.coef[0]
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_unit(self.unit(x))
    }

    /// Coefficients of the derivative (with respect to x).
    pub fn derivative(&self) -> Cheb {
        let n = self.coef.len();
        if n <= 1 {
            return Cheb::zero(self.a, self.b);
        }
        let mut d = vec![0.0; n + 1];
        for j in (1..n).rev() {
            d[j - 1] = d[j + 1] + 2.0 * j as f64 * self.coef[j];
        }
        d[0] *= 0.5;
        d.truncate(n - 1);
        let scale = 2.0 / (self.b - self.a);
        Cheb { a: self.a, b: self.b, coef: d.into_iter().map(|c| c * scale).collect() }
    }

    /// Definite integral over [a, b].
    pub fn integral(&self) -> f64 {
        let mut s = Sum::new();
        for (j, c) in self.coef.iter().enumerate() {
            if j % 2 == 0 {
                s.add(c * 2.0 / (1.0 - (j * j) as f64));
            }
        }
        s.value() * 0.5 * (self.b - self.a)
    }

    /// Antiderivative vanishing at `a`.
    pub fn antiderivative(&self) -> Cheb {
        let n = self.coef.len();
        let mut c = self.coef.clone();
        c.push(0.0);
        c.push(0.0);
        let mut out = vec![0.0; n + 1];
        for j in 1..=n {
            let prev = if j >= 2 { c[j - 1] } else { 2.0 * c[0] };
            let next = c[j + 1];
            out[j] = (prev - next) / (2.0 * j as f64);
        }
        let scale = 0.5 * (self.b - self.a);
        for v in out.iter_mut() {
            *v *= scale;
        }
        let mut r = Cheb { a: self.a, b: self.b, coef: out };
        let at_a = r.eval_unit(-1.0);
        r.coef[0] -= at_a;
        r
    }

    pub fn tail_norm(&self, k: usize) -> f64 {
        let n = self.coef.len();
        self.coef[n.saturating_sub(k)..].iter().map(|c| c.abs()).sum()
    }
}

/// Adaptive Gauss-Kronrod (7-15) integration of `f` on [a, b].
pub fn integrate_adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, max_depth: usize) -> f64 {
    let (v, e) = gk15(f, a, b);
    adapt(f, a, b, v, e, tol, max_depth)
}

fn adapt(f: &dyn Fn(f64) -> f64, a: f64, b: f64, v: f64, e: f64, tol: f64, depth: usize) -> f64 {
    if e <= tol || depth == 0 {
        return v;
    }
    let m = 0.5 * (a + b);
    let (v1, e1) = gk15(f, a, m);
    let (v2, e2) = gk15(f, m, b);
    adapt(f, a, m, v1, e1, 0.5 * tol, depth - 1) + adapt(f, m, b, v2, e2, 0.5 * tol, depth - 1)
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Least-squares solution of `design * x = y` (rows are observations).
pub fn lstsq(design: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let m = design.len();
    let n = design.first().map(|r| r.len()).unwrap_or(0);
    let a = DMatrix::from_fn(m, n, |i, j| design[i][j]);
    let b = DVector::from_column_slice(y);
    let svd = a.svd(true, true);
    let x = svd.solve(&b, 1e-14).expect("svd solve");
    x.iter().copied().collect()
}

/// Ordinary linear fit y = a + b x; returns (a, b).
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let rows: Vec<Vec<f64>> = x.iter().map(|&t| vec![1.0, t]).collect();
    let c = lstsq(&rows, y);
    (c[0], c[1])
}

/// Double-double number: value hi + lo with |lo| <= ulp(hi)/2.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

impl Dd {
    pub fn new(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    #[inline]
    pub fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let e = e + self.lo + o.lo;
        let (hi, lo) = two_sum(s, e);
        Dd { hi, lo }
    }

    #[inline]
    pub fn sub(self, o: Dd) -> Dd {
        self.add(Dd { hi: -o.hi, lo: -o.lo })
    }

    #[inline]
    pub fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p) + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = two_sum(p, e);
        Dd { hi, lo }
    }

    pub fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul(Dd::new(q1)));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul(Dd::new(q2)));
        let q3 = r.hi / o.hi;
        Dd::new(q1).add(Dd::new(q2)).add(Dd::new(q3))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.hi + self.lo
    }

    /// Exact-as-possible sum of doubles.
    pub fn sum(xs: impl IntoIterator<Item = f64>) -> Dd {
        xs.into_iter().fold(Dd::default(), |acc, x| acc.add(Dd::new(x)))
    }

    #[inline]
    pub fn lt(self, o: Dd) -> bool {
        self.hi < o.hi || (self.hi == o.hi && self.lo < o.lo)
    }
}

/// Probe points strictly inside (a, b), dense towards both ends.
pub fn probe_grid(a: f64, b: f64, interior: usize) -> Vec<f64> {
    let h = b - a;
    let mut pts = Vec::with_capacity(2 * 50 + interior);
    for j in (0..50).rev() {
        pts.push(a + 0.05 * h * 0.5f64.powi(j));
    }
    for i in 1..interior {
        pts.push(a + 0.05 * h + 0.9 * h * i as f64 / interior as f64);
    }
    for j in 0..50 {
        pts.push(b - 0.05 * h * 0.5f64.powi(j));
    }
    pts.retain(|&x| x > a && x < b);
    pts.dedup();
    pts
}

/// Zeros of `f` in (a, b) located by sign changes on `probe_grid` and bisection.
pub fn sign_changes(f: &dyn Fn(f64) -> f64, a: f64, b: f64, interior: usize) -> Vec<f64> {
    let pts = probe_grid(a, b, interior);
    let vals: Vec<f64> = pts.iter().map(|&x| f(x)).collect();
    let mut roots = Vec::new();
    for i in 1..pts.len() {
        let (fa, fb) = (vals[i - 1], vals[i]);
        if fa == 0.0 {
            roots.push(pts[i - 1]);
            continue;
        }
        if !(fa.is_finite() && fb.is_finite()) || fa.signum() == fb.signum() || fb == 0.0 {
            continue;
        }
        let (mut lo, mut hi) = (pts[i - 1], pts[i]);
        let flo = fa;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let fm = f(mid);
            if fm == 0.0 {
                lo = mid;
                hi = mid;
                break;
            }
            if fm.signum() == flo.signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        roots.push(0.5 * (lo + hi));
    }
    roots
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dd_product_and_quotient() {
        let third = Dd::new(1.0).div(Dd::new(3.0));
        let back = third.mul(Dd::new(3.0)).sub(Dd::new(1.0));
        assert!(back.value().abs() < 1e-31);
        let x = Dd::new(1.0 + f64::EPSILON);
        let sq = x.mul(x).sub(Dd::new(1.0)).sub(Dd::new(2.0 * f64::EPSILON));
        assert!((sq.value() - f64::EPSILON * f64::EPSILON).abs() < 1e-40);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = Sum::new();
        s.add(1e16);
        for _ in 0..1000 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 1000.0);
    }

    #[test]
    fn gauss_rule_integrates_polynomials() {
        let (x, w) = gauss_legendre(6);
        let v: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(10)).sum();
        assert!((v - 2.0 / 11.0).abs() < 1e-14);
    }

    #[test]
    fn graded_rule_handles_log_ends() {
        let pts = graded_rule(0.0, 1.0, 48, 8, 8);
        let v: f64 = pts.iter().map(|(x, w)| w * (-x.ln())).sum();
        assert!((v - 1.0).abs() < 1e-10, "{v}");
    }

    #[test]
    fn chebyshev_calculus() {
        let n = 24;
        let (a, b) = (0.3, 1.7);
        let vals: Vec<f64> = Cheb::unit_nodes(n)
            .iter()
            .map(|t| {
                let x = 0.5 * (a + b) + 0.5 * (b - a) * t;
                x.exp()
            })
            .collect();
        let c = Cheb::fit(a, b, &vals);
        assert!((c.eval(1.1) - 1.1f64.exp()).abs() < 1e-13);
        assert!((c.derivative().eval(0.9) - 0.9f64.exp()).abs() < 1e-11);
        assert!((c.integral() - (b.exp() - a.exp())).abs() < 1e-13);
        let p = c.antiderivative();
        assert!((p.eval(1.2) - (1.2f64.exp() - a.exp())).abs() < 1e-13);
    }

    #[test]
    fn adaptive_quadrature_log() {
        let v = integrate_adaptive(&|x: f64| -x.ln(), 0.0, 1.0, 1e-12, 60);
        assert!((v - 1.0).abs() < 1e-10);
    }
    #[test]
    fn double_double_keeps_small_parts() {
        let a = Dd::new(1.0).add(Dd::new(1e-20));
        let b = a.sub(Dd::new(1.0));
        assert_eq!(b.value(), 1e-20);
        assert!(Dd::new(1.0).lt(a));
    }

    #[test]
    fn roots_by_sign_change() {
        let r = sign_changes(&|x: f64| (x - 0.3) * (x - 0.7), 0.0, 1.0, 64);
        assert_eq!(r.len(), 2);
        assert!((r[0] - 0.3).abs() < 1e-14 && (r[1] - 0.7).abs() < 1e-14);
    }
}
