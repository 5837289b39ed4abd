//! Contour quadrature, winding numbers and small dense linear algebra.
//!
//! Laurent coefficients are computed with the trapezoidal rule on circles,
//! which converges geometrically for integrands analytic on an annulus
//! around the contour. Every extraction is done twice (n and 2n nodes) and
//! the discrepancy is reported.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

pub const I: C64 = C64::new(0.0, 1.0);
pub const TWO_PI_I: C64 = C64::new(0.0, 2.0 * std::f64::consts::PI);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourSpec {
    pub center: C64,
    pub radius: f64,
    pub nodes: usize,
}

impl ContourSpec {
    pub fn new(center: C64, radius: f64) -> Self {
        ContourSpec {
            center,
            radius,
            nodes: 128,
        }
    }

    pub fn with_nodes(mut self, nodes: usize) -> Self {
        self.nodes = nodes;
        self
    }

    fn check(&self) -> Result<()> {
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(Error::InvalidInput(format!(
                "contour radius {}",
                self.radius
            )));
        }
        if self.nodes < 4 || !self.nodes.is_power_of_two() {
            return Err(Error::InvalidInput(format!(
                "contour nodes {} must be a power of two >= 4",
                self.nodes
            )));
        }
        Ok(())
    }
}

/// Laurent coefficients of a vector-valued function, indexed by `k - kmin`.
#[derive(Debug, Clone)]
pub struct Laurent {
    pub kmin: i32,
    pub coeffs: Vec<Vec<C64>>,
    /// Largest component modulus seen on the contour.
    pub scale: f64,
    pub radius: f64,
    /// Node-doubling discrepancy per order.
    pub doubling_error: Vec<f64>,
}

impl Laurent {
    pub fn get(&self, k: i32) -> &[C64] {
        &self.coeffs[(k - self.kmin) as usize]
    }

    /// Cauchy-estimate magnitude of the order-k coefficient, scale * r^{-k}.
    pub fn cauchy_bound(&self, k: i32) -> f64 {
        self.scale * self.radius.powi(-k)
    }
}

/// Coefficients c_k, kmin <= k <= kmax, of f(z) = sum c_k (z - c)^k on the
/// contour, with a node-doubling reliability check at relative level `doubling_tol`.
pub fn laurent_vec(
    f: &dyn Fn(C64) -> Result<Vec<C64>>,
    spec: &ContourSpec,
    kmin: i32,
    kmax: i32,
    doubling_tol: f64,
) -> Result<Laurent> {
    spec.check()?;
    if kmax < kmin {
        return Err(Error::InvalidInput("empty Laurent order range".into()));
    }
    let n2 = 2 * spec.nodes;
    let mut values = Vec::with_capacity(n2);
    let mut scale = 0.0f64;
    for j in 0..n2 {
        let t = 2.0 * std::f64::consts::PI * j as f64 / n2 as f64;
        let z = spec.center + C64::from_polar(spec.radius, t);
        let v = f(z)?;
        for x in &v {
            if !x.is_finite() {
                return Err(Error::ContourUnreliable(format!("non-finite value at {z}")));
            }
            scale = scale.max(x.norm());
        }
        values.push(v);
    }
    let dim = values[0].len();
    let mut coeffs = Vec::new();
    let mut errs = Vec::new();
    for k in kmin..=kmax {
        let mut fine = vec![C64::new(0.0, 0.0); dim];
        let mut coarse = vec![C64::new(0.0, 0.0); dim];
        for (j, v) in values.iter().enumerate() {
            let t = 2.0 * std::f64::consts::PI * j as f64 / n2 as f64;
            let w = C64::from_polar(spec.radius.powi(-k), -(k as f64) * t);
            for (d, x) in v.iter().enumerate() {
                fine[d] += x * w;
                if j % 2 == 0 {
                    coarse[d] += x * w;
                }
            }
        }
        let mut err = 0.0f64;
        for d in 0..dim {
            fine[d] /= n2 as f64;
            coarse[d] /= spec.nodes as f64;
            err = err.max((fine[d] - coarse[d]).norm());
        }
        let bound = scale * spec.radius.powi(-k);
        if err > doubling_tol * bound.max(f64::MIN_POSITIVE) && err > 1e-14 {
            return Err(Error::ContourUnreliable(format!(
                "order {k}: node doubling changed the coefficient by {err:.3e} (bound {bound:.3e})"
            )));
        }
        coeffs.push(fine);
        errs.push(err);
    }
    Ok(Laurent {
        kmin,
        coeffs,
        scale,
        radius: spec.radius,
        doubling_error: errs,
    })
}

/// Scalar Laurent coefficient of order k.
pub fn laurent_coefficient(
    f: &dyn Fn(C64) -> Result<C64>,
    spec: &ContourSpec,
    k: i32,
) -> Result<C64> {
    let g = |z: C64| f(z).map(|v| vec![v]);
    Ok(laurent_vec(&g, spec, k, k, 1e-8)?.coeffs[0][0])
}

/// Scalar Laurent coefficients for a range of orders.
pub fn laurent_scalar(
    f: &dyn Fn(C64) -> Result<C64>,
    spec: &ContourSpec,
    kmin: i32,
    kmax: i32,
) -> Result<Vec<C64>> {
    let g = |z: C64| f(z).map(|v| vec![v]);
    let l = laurent_vec(&g, spec, kmin, kmax, 1e-8)?;
    Ok(l.coeffs.into_iter().map(|c| c[0]).collect())
}

/// Entrywise matrix Laurent coefficients for a range of orders.
pub fn laurent_matrix(
    f: &dyn Fn(C64) -> Result<CMat>,
    spec: &ContourSpec,
    kmin: i32,
    kmax: i32,
) -> Result<Vec<CMat>> {
    let shape = std::cell::Cell::new((0usize, 0usize));
    let g = |z: C64| {
        let m = f(z)?;
        shape.set((m.nrows(), m.ncols()));
        Ok(m.as_slice().to_vec())
    };
    let l = laurent_vec(&g, spec, kmin, kmax, 1e-8)?;
    let (r, c) = shape.get();
    Ok(l.coeffs
        .into_iter()
        .map(|v| CMat::from_vec(r, c, v))
        .collect())
}

/// A closed path for winding-number computations.
#[derive(Debug, Clone)]
pub enum ClosedPath {
    Circle {
        center: C64,
        radius: f64,
    },
    /// Vertices of a closed polygon, traversed in order and back to the first.
    Polygon(Vec<C64>),
}

impl ClosedPath {
    fn sample(&self, per_unit: usize) -> Vec<C64> {
        match self {
            ClosedPath::Circle { center, radius } => {
                let n = per_unit.max(16);
                (0..n)
                    .map(|j| {
                        center
                            + C64::from_polar(
                                *radius,
                                2.0 * std::f64::consts::PI * j as f64 / n as f64,
                            )
                    })
                    .collect()
            }
            ClosedPath::Polygon(v) => {
                let mut out = Vec::new();
                for i in 0..v.len() {
                    let a = v[i];
                    let b = v[(i + 1) % v.len()];
                    let m = (per_unit / v.len()).max(8);
                    for j in 0..m {
                        out.push(a + (b - a) * (j as f64 / m as f64));
                    }
                }
                out
            }
        }
    }
}

/// Winding number of f around the path: the total change of arg f divided by 2pi.
///
/// The path is refined until every step changes arg f by less than 0.5 rad;
/// the accumulated sum is then within rounding of an integer.
pub fn winding_number(f: &dyn Fn(C64) -> Result<C64>, path: &ClosedPath) -> Result<i64> {
    let mut per = 256usize;
    loop {
        let pts = path.sample(per);
        let vals: Vec<C64> = pts.iter().map(|&z| f(z)).collect::<Result<_>>()?;
        let scale = vals.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if vals
            .iter()
            .any(|v| !v.is_finite() || v.norm() <= 1e-300 + 1e-14 * scale)
        {
            return Err(Error::Winding(
                "function (nearly) vanishes on the path".into(),
            ));
        }
        let mut total = 0.0;
        let mut worst = 0.0f64;
        for i in 0..vals.len() {
            let d = (vals[(i + 1) % vals.len()] / vals[i]).arg();
            worst = worst.max(d.abs());
            total += d;
        }
        if worst < 0.5 {
            let w = total / (2.0 * std::f64::consts::PI);
            let r = w.round();
            if (w - r).abs() > 0.1 {
                return Err(Error::Winding(format!("non-integer winding {w}")));
            }
            return Ok(r as i64);
        }
        per *= 2;
        if per > 1 << 17 {
            return Err(Error::Winding("path could not be resolved".into()));
        }
    }
}

/// Singular values in decreasing order.
pub fn singular_values(m: &CMat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

/// Numerical rank with threshold `rel * sigma_max`.
pub fn rank(m: &CMat, rel: f64) -> usize {
    let s = singular_values(m);
    match s.first() {
        None => 0,
        Some(&0.0) => 0,
        Some(&smax) => s.iter().filter(|&&x| x > rel * smax).count(),
    }
}

/// Krylov matrix [C, AC, ..., A^{n-1}C] for the input pair (A, C).
pub fn controllability_matrix(a: &CMat, c: &CMat) -> CMat {
    let n = a.nrows();
    let r = c.ncols();
    let mut k = CMat::zeros(n, n * r);
    let mut blk = c.clone();
    for j in 0..n {
        k.view_mut((0, j * r), (n, r)).copy_from(&blk);
        blk = a * blk;
    }
    k
}

/// Stacked matrix [B; BA; ...; BA^{n-1}] for the output pair (B, A).
pub fn observability_matrix(b: &CMat, a: &CMat) -> CMat {
    let n = a.nrows();
    let r = b.nrows();
    let mut k = CMat::zeros(n * r, n);
    let mut blk = b.clone();
    for j in 0..n {
        k.view_mut((j * r, 0), (r, n)).copy_from(&blk);
        blk *= a;
    }
    k
}

pub fn controllability_rank(a: &CMat, c: &CMat, rel: f64) -> usize {
    rank(&controllability_matrix(a, c), rel)
}

pub fn observability_rank(b: &CMat, a: &CMat, rel: f64) -> usize {
    rank(&observability_matrix(b, a), rel)
}

/// Least n >= 1 with ||A^n|| below the guard, or None if A is not nilpotent.
pub fn nilpotency_index(a: &CMat, tol: f64) -> Option<usize> {
    let n = a.nrows();
    if n == 0 {
        return Some(0);
    }
    let base = a.norm().max(1.0);
    let mut p = a.clone();
    for k in 1..=n {
        if p.norm() < tol * base.powi(k as i32) {
            return Some(k);
        }
        p = &p * a;
    }
    None
}

pub fn sylvester_residual(api: &CMat, az: &CMat, cpi: &CMat, bz: &CMat, s: &CMat) -> f64 {
    if api.nrows() == 0 || az.nrows() == 0 {
        return 0.0;
    }
    (api * s - s * az - cpi * bz).norm()
}

/// Inverse together with its 2-norm condition number; fails when the matrix
/// is numerically singular by either criterion.
pub fn checked_inverse(m: &CMat, max_cond: f64, min_rel_sigma: f64) -> Result<(CMat, f64)> {
    if m.nrows() != m.ncols() {
        return Err(Error::InvalidInput("inverse of a non-square matrix".into()));
    }
    if m.nrows() == 0 {
        return Ok((m.clone(), 1.0));
    }
    let s = singular_values(m);
    let smax = s[0];
    let smin = *s.last().unwrap();
    let cond = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    if !(cond < max_cond) || smin <= min_rel_sigma * smax {
        return Err(Error::Singular(format!("condition number {cond:.3e}")));
    }
    let inv = m
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("LU inverse failed".into()))?;
    Ok((inv, cond))
}

pub fn condition_number(m: &CMat) -> f64 {
    let s = singular_values(m);
    match (s.first(), s.last()) {
        (Some(&a), Some(&b)) if b > 0.0 => a / b,
        (None, _) => 1.0,
        _ => f64::INFINITY,
    }
}

/// Orthonormal basis (as columns) of the numerical right null space, decided
/// by the relative threshold `rel` on singular values.
pub fn right_null_space(m: &CMat, rel: f64) -> CMat {
    let n = m.ncols();
    if n == 0 {
        return CMat::zeros(0, 0);
    }
    let mut sq = CMat::zeros(m.nrows().max(n), n);
    sq.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
    let svd = sq.svd(true, true);
    let vt = svd.v_t.expect("v_t requested");
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cols: Vec<_> = (0..n)
        .filter(|&j| smax == 0.0 || svd.singular_values[j] <= rel * smax)
        .map(|j| vt.row(j).adjoint())
        .collect();
    if cols.is_empty() {
        return CMat::zeros(n, 0);
    }
    CMat::from_columns(&cols)
}

/// Basis (as rows) of the numerical left null space.
pub fn left_null_space(m: &CMat, rel: f64) -> CMat {
    right_null_space(&m.adjoint(), rel).adjoint()
}

/// Least-squares solution of x * a = b for a row vector x; returns (x, residual).
pub fn solve_row_lstsq(a: &CMat, b: &CMat, rel: f64) -> (CMat, f64) {
    if a.nrows() == 0 {
        return (CMat::zeros(b.nrows(), 0), b.norm());
    }
    // x a = b  <=>  a^T x^T = b^T
    let at = a.transpose();
    let bt = b.transpose();
    let svd = at.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let xt = svd
        .solve(&bt, rel * smax.max(f64::MIN_POSITIVE))
        .unwrap_or_else(|_| CMat::zeros(at.ncols(), bt.ncols()));
    let x = xt.transpose();
    let res = (&x * a - b).norm();
    (x, res)
}

/// Block-diagonal assembly.
pub fn block_diag(blocks: &[CMat]) -> CMat {
    let r: usize = blocks.iter().map(|b| b.nrows()).sum();
    let c: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut m = CMat::zeros(r, c);
    let (mut i, mut j) = (0, 0);
    for b in blocks {
        m.view_mut((i, j), (b.nrows(), b.ncols())).copy_from(b);
        i += b.nrows();
        j += b.ncols();
    }
    m
}

/// Upper-triangular Toeplitz matrix with first row `c`.
pub fn upper_toeplitz(c: &[C64]) -> CMat {
    let n = c.len();
    CMat::from_fn(
        n,
        n,
        |i, j| if j >= i { c[j - i] } else { C64::new(0.0, 0.0) },
    )
}

/// Nilpotent upper shift of size n.
pub fn shift_matrix(n: usize) -> CMat {
    CMat::from_fn(n, n, |i, j| {
        if j == i + 1 {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// Jordan block alpha I + shift.
pub fn jordan_block(alpha: C64, n: usize) -> CMat {
    CMat::identity(n, n) * alpha + shift_matrix(n)
}

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}
