//! Meromorphic trivializations of flat factors of automorphy.
//!
//! A flat factor is fixed by V = xi(tau) (with xi(1) = I); a trivialization is
//! a nondegenerate meromorphic F with F(u + 1) = F(u) and F(u + tau) = V F(u).

use std::sync::Arc;

use num_traits::{FromPrimitive, Num};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::nullpole::SimpleNullPoleData;
use crate::numerics::{
    c, jordan_block, laurent_vec, upper_toeplitz, CMat, ContourSpec, C64, TWO_PI_I,
};
use crate::theta::ThetaEvaluator;
use crate::torus::{EllipticCurve, TorusPoint};

pub type MatFn = Arc<dyn Fn(C64) -> Result<CMat> + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(C64) -> Result<C64> + Send + Sync>;

/// Jordan data of V = S (J_{alpha_1} + ... ) S^{-1}.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatFactor {
    pub blocks: Vec<(C64, usize)>,
    pub similarity: Option<CMat>,
}

impl FlatFactor {
    pub fn new(blocks: Vec<(C64, usize)>, similarity: Option<CMat>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidInput(
                "flat factor needs at least one block".into(),
            ));
        }
        for (a, n) in &blocks {
            if a.norm() == 0.0 || *n == 0 {
                return Err(Error::InvalidInput(
                    "Jordan blocks need alpha != 0 and size >= 1".into(),
                ));
            }
        }
        let r: usize = blocks.iter().map(|b| b.1).sum();
        if let Some(s) = &similarity {
            if s.nrows() != r || s.ncols() != r || s.clone().try_inverse().is_none() {
                return Err(Error::InvalidInput(
                    "similarity must be invertible of the total size".into(),
                ));
            }
        }
        Ok(FlatFactor { blocks, similarity })
    }

    pub fn jordan(alpha: C64, r: usize) -> Result<Self> {
        Self::new(vec![(alpha, r)], None)
    }

    pub fn trivial(r: usize) -> Self {
        FlatFactor {
            blocks: vec![(c(1.0, 0.0), 1); r],
            similarity: None,
        }
    }

    pub fn size(&self) -> usize {
        self.blocks.iter().map(|b| b.1).sum()
    }

    /// V = xi(tau).
    pub fn matrix(&self) -> CMat {
        let parts: Vec<CMat> = self
            .blocks
            .iter()
            .map(|(a, n)| jordan_block(*a, *n))
            .collect();
        let j = crate::numerics::block_diag(&parts);
        match &self.similarity {
            None => j,
            Some(s) => s * j * s.clone().try_inverse().expect("checked at construction"),
        }
    }
}

/// An evaluable r x r meromorphic matrix function with declared poles.
#[derive(Clone)]
pub struct MeromorphicMatrixMap {
    pub dim: usize,
    eval: MatFn,
    pub poles: Vec<(TorusPoint, usize)>,
    pub factor: Option<FlatFactor>,
}

impl std::fmt::Debug for MeromorphicMatrixMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MeromorphicMatrixMap")
            .field("dim", &self.dim)
            .field("poles", &self.poles)
            .field("factor", &self.factor)
            .finish()
    }
}

impl MeromorphicMatrixMap {
    pub fn new(
        dim: usize,
        eval: MatFn,
        poles: Vec<(TorusPoint, usize)>,
        factor: Option<FlatFactor>,
    ) -> Self {
        MeromorphicMatrixMap {
            dim,
            eval,
            poles,
            factor,
        }
    }

    pub fn scalar(
        f: ScalarFn,
        poles: Vec<(TorusPoint, usize)>,
        factor: Option<FlatFactor>,
    ) -> Self {
        let eval: MatFn = Arc::new(move |u| Ok(CMat::from_element(1, 1, f(u)?)));
        Self::new(1, eval, poles, factor)
    }

    pub fn constant(m: CMat) -> Self {
        let dim = m.nrows();
        Self::new(
            dim,
            Arc::new(move |_| Ok(m.clone())),
            Vec::new(),
            Some(FlatFactor::trivial(dim)),
        )
    }

    pub fn eval(&self, u: C64) -> Result<CMat> {
        (self.eval)(u)
    }

    pub fn eval_scalar(&self, u: C64) -> Result<C64> {
        Ok(self.eval(u)?[(0, 0)])
    }

    pub fn det(&self, u: C64) -> Result<C64> {
        Ok(self.eval(u)?.determinant())
    }

    pub fn evaluator(&self) -> MatFn {
        self.eval.clone()
    }
}

/// l_alpha = log(alpha) / (2 pi i), principal branch.
pub fn log_alpha(alpha: C64) -> C64 {
    alpha.ln() / TWO_PI_I
}

fn check_alpha(alpha: C64) -> Result<()> {
    if alpha.norm() == 0.0 || !alpha.is_finite() {
        return Err(Error::InvalidInput(format!(
            "alpha = {alpha} must be nonzero"
        )));
    }
    Ok(())
}

fn near_one(alpha: C64) -> bool {
    (alpha - 1.0).norm() < 1e-14
}

/// f_alpha(u) = theta(u - l_alpha) / theta(u), or the constant 1 when alpha = 1.
pub fn scalar_trivialization(ev: &ThetaEvaluator, alpha: C64) -> Result<MeromorphicMatrixMap> {
    check_alpha(alpha)?;
    let factor = Some(FlatFactor::jordan(alpha, 1)?);
    if near_one(alpha) {
        return Ok(MeromorphicMatrixMap::scalar(
            Arc::new(|_| Ok(c(1.0, 0.0))),
            Vec::new(),
            factor,
        ));
    }
    let l = log_alpha(alpha);
    let ev = ev.clone();
    let curve = *ev.curve();
    let delta = curve.delta();
    let f: ScalarFn = Arc::new(move |u| {
        if curve.lattice_distance(u, delta) < 1e-12 {
            return Err(Error::Pole(format!("{u}")));
        }
        Ok(ev.theta(u - l)? / ev.theta(u)?)
    });
    Ok(MeromorphicMatrixMap::scalar(
        f,
        vec![(curve.reduce(delta), 1)],
        factor,
    ))
}

/// Zero of f_alpha: Delta + l_alpha.
pub fn scalar_trivialization_zero(curve: &EllipticCurve, alpha: C64) -> TorusPoint {
    curve.reduce(curve.delta() + log_alpha(alpha))
}

/// Unsigned Stirling numbers of the first kind c(n, k), n <= nmax.
pub fn stirling_first(nmax: usize) -> Vec<Vec<f64>> {
    let mut s = vec![vec![0.0; nmax + 1]; nmax + 1];
    s[0][0] = 1.0;
    for n in 0..nmax {
        for k in 0..=n {
            s[n + 1][k] += n as f64 * s[n][k];
            s[n + 1][k + 1] += s[n][k];
        }
    }
    s
}

/// Upper-triangular Toeplitz trivialization of xi_{J_alpha} built from the
/// operators L_j = (-1)^j / (alpha^j j!) D'(D'+1)...(D'+j-1), D' = (2 pi i)^{-1} d/du.
pub fn block_theta_triv(ev: &ThetaEvaluator, alpha: C64, r: usize) -> Result<MeromorphicMatrixMap> {
    check_alpha(alpha)?;
    if r == 0 || r > 8 {
        return Err(Error::InvalidInput(format!("block size {r} outside 1..=8")));
    }
    let l = log_alpha(alpha);
    let st = stirling_first(r);
    // coefficient of theta^(m)(u - l) in L_j
    let mut coef = vec![vec![c(0.0, 0.0); r]; r];
    let mut fact = 1.0;
    for j in 0..r {
        if j > 0 {
            fact *= j as f64;
        }
        let pre = C64::from_f64((-1f64).powi(j as i32) / fact).unwrap() / alpha.powi(j as i32);
        for m in 0..=j {
            coef[j][m] = pre * st[j][m] / TWO_PI_I.powi(m as i32);
        }
    }
    let ev = ev.clone();
    let curve = *ev.curve();
    let delta = curve.delta();
    let eval: MatFn = Arc::new(move |u| {
        if curve.lattice_distance(u, delta) < 1e-12 {
            return Err(Error::Pole(format!("{u}")));
        }
        let th = ev.theta(u)?;
        let d = ev.derivs(u - l, r - 1)?;
        let row: Vec<C64> = (0..r)
            .map(|j| (0..=j).map(|m| coef[j][m] * d[m]).sum::<C64>() / th)
            .collect();
        Ok(upper_toeplitz(&row))
    });
    Ok(MeromorphicMatrixMap::new(
        r,
        eval,
        vec![(curve.reduce(delta), r)],
        Some(FlatFactor::jordan(alpha, r)?),
    ))
}

/// lambda_a(u) = -(2 pi i)^{-1} theta'(x)/theta(x), x = u - a - (1 + tau)/2.
pub fn lambda_a(ev: &ThetaEvaluator, a: C64, u: C64) -> Result<C64> {
    let curve = ev.curve();
    if curve.lattice_distance(u, a) < 1e-12 {
        return Err(Error::Pole(format!("{u}")));
    }
    let x = u - a - curve.delta();
    let d = ev.derivs(x, 1)?;
    Ok(-d[1] / (d[0] * TWO_PI_I))
}

/// Coefficients (lowest degree first) of p_n(u) = alpha^{-n}/n! u(u-1)...(u-n+1),
/// in any field-like scalar type.
pub fn pn_coeffs<T: Num + Clone + FromPrimitive>(alpha_inv: T, n: usize) -> Vec<T> {
    let mut p = vec![T::one()];
    for k in 0..n {
        // multiply by (u - k)
        let kk = T::from_usize(k).expect("small integer");
        let mut q = vec![T::zero(); p.len() + 1];
        for (i, ci) in p.iter().enumerate() {
            q[i + 1] = q[i + 1].clone() + ci.clone();
            q[i] = q[i].clone() - ci.clone() * kk.clone();
        }
        p = q;
    }
    let mut scale = T::one();
    for k in 1..=n {
        scale = scale * alpha_inv.clone() / T::from_usize(k).expect("small integer");
    }
    p.into_iter().map(|x| x * scale.clone()).collect()
}

pub fn pn_poly(alpha: C64, n: usize) -> Result<Vec<C64>> {
    check_alpha(alpha)?;
    Ok(pn_coeffs(1.0 / alpha, n))
}

pub fn poly_eval(p: &[C64], x: C64) -> C64 {
    p.iter().rev().fold(c(0.0, 0.0), |acc, v| acc * x + v)
}

/// G_r(u) = P_r(lambda_a(u)): upper Toeplitz in p_0, ..., p_{r-1}.
pub fn single_pole_triv(
    ev: &ThetaEvaluator,
    alpha: C64,
    r: usize,
    a: C64,
) -> Result<MeromorphicMatrixMap> {
    check_alpha(alpha)?;
    if r == 0 {
        return Err(Error::InvalidInput("rank must be positive".into()));
    }
    let polys: Vec<Vec<C64>> = (0..r).map(|n| pn_coeffs(1.0 / alpha, n)).collect();
    let ev = ev.clone();
    let curve = *ev.curve();
    let eval: MatFn = Arc::new(move |u| {
        if r == 1 {
            return Ok(CMat::identity(1, 1));
        }
        let lam = lambda_a(&ev, a, u)?;
        let row: Vec<C64> = polys.iter().map(|p| poly_eval(p, lam)).collect();
        Ok(upper_toeplitz(&row))
    });
    // V = alpha^{-1} J_alpha = D J_1 D^{-1} with D = diag(alpha^{-i})
    let d = CMat::from_fn(r, r, |i, j| {
        if i == j {
            alpha.powi(-(i as i32))
        } else {
            c(0.0, 0.0)
        }
    });
    let factor = FlatFactor::new(vec![(c(1.0, 0.0), r)], Some(d))?;
    let poles = if r > 1 {
        vec![(curve.reduce(a), r - 1)]
    } else {
        Vec::new()
    };
    Ok(MeromorphicMatrixMap::new(r, eval, poles, Some(factor)))
}

/// Largest relative residual of F(u + 1) = F(u) and F(u + tau) = V F(u) over
/// seeded samples of the fundamental domain, avoiding declared poles.
pub fn verify_automorphy(
    curve: &EllipticCurve,
    f: &MeromorphicMatrixMap,
    factor: &FlatFactor,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if samples == 0 {
        return Err(Error::InvalidInput("samples must be >= 1".into()));
    }
    let v = factor.matrix();
    if v.nrows() != f.dim {
        return Err(Error::InvalidInput(
            "factor size differs from the map".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut used = 0;
    let mut attempts = 0;
    while used < samples {
        attempts += 1;
        if attempts > 50 * samples {
            return Err(Error::InvalidInput(
                "all samples landed near poles; resample".into(),
            ));
        }
        let u = curve.random_interior_point(&mut rng, 0.02);
        if f.poles
            .iter()
            .any(|(p, _)| curve.lattice_distance(u, p.rep) < 0.05)
        {
            continue;
        }
        let (f0, f1, ft) = match (f.eval(u), f.eval(u + 1.0), f.eval(u + curve.tau())) {
            (Ok(a), Ok(b), Ok(c)) => (a, b, c),
            (Err(Error::Pole(_)), _, _)
            | (_, Err(Error::Pole(_)), _)
            | (_, _, Err(Error::Pole(_))) => continue,
            (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => return Err(e),
        };
        let scale = f0.norm().max(ft.norm()).max(1e-300);
        worst = worst.max((&f1 - &f0).norm() / scale);
        worst = worst.max((&ft - &v * &f0).norm() / scale);
        used += 1;
    }
    Ok(worst)
}

/// Scalar functions s_1..s_kmax with s_k(u + m + n tau) = alpha^n s_k(u) and
/// principal part exactly u^{-k} at 0.
///
/// For alpha = 1 there is no elliptic function with a single simple pole;
/// s_1 is then the zeta-type function theta'(u - Delta)/theta(u - Delta),
/// which gains -2 pi i under u -> u + tau.
#[derive(Clone)]
pub struct PrincipalPartBasis {
    pub alpha: C64,
    pub functions: Vec<ScalarFn>,
    /// Branch shift applied to l_alpha to avoid a degenerate mu_k, if any.
    pub perturbations: Vec<String>,
}

impl PrincipalPartBasis {
    pub fn eval(&self, k: usize, u: C64) -> Result<C64> {
        (self.functions[k - 1])(u)
    }
}

pub fn principal_part_basis(
    ev: &ThetaEvaluator,
    alpha: C64,
    kmax: usize,
) -> Result<PrincipalPartBasis> {
    check_alpha(alpha)?;
    if kmax == 0 || kmax > 6 {
        return Err(Error::InvalidInput(format!("kmax = {kmax} outside 1..=6")));
    }
    let curve = *ev.curve();
    let delta = curve.delta();
    if near_one(alpha) {
        let mut functions: Vec<ScalarFn> = Vec::new();
        for k in 1..=kmax {
            let ev = ev.clone();
            let sign = if (k - 1) % 2 == 0 { 1.0 } else { -1.0 };
            functions.push(Arc::new(move |u| {
                if curve.lattice_distance(u, c(0.0, 0.0)) < 1e-12 {
                    return Err(Error::Pole(format!("{u}")));
                }
                // (-1)^(k-1) Z^(k-1)/(k-1)! with Z = (log theta)'(u - Delta)
                let d = ev.derivs(u - delta, k)?;
                let num = Jet::from_derivatives(&d[1..]);
                let den = Jet::from_derivatives(&d[..k]);
                let z = num.div(&den)?;
                Ok(z.c[k - 1] * sign)
            }));
        }
        return Ok(PrincipalPartBasis {
            alpha,
            functions,
            perturbations: Vec::new(),
        });
    }
    let mut l = log_alpha(alpha);
    let mut perturbations = Vec::new();
    for k in 1..=kmax {
        if curve.lattice_distance(l / k as f64, c(0.0, 0.0)) < 1e-6 {
            l += 1.0;
            perturbations.push(format!(
                "mu_{k} collided with Delta; log branch shifted by 1"
            ));
        }
    }
    // q_k(u) = (theta(u - mu_k)/theta(u - Delta))^k, mu_k = l/k + Delta.
    // Laurent data at 0: theta(h - Delta) = h D1(h).
    let order = kmax + 1;
    let dd = ev.derivs(-delta, order)?;
    let d1 = Jet::from_derivatives(&dd).divide_by_h();
    let mut lead = Vec::new();
    let mut lower: Vec<Vec<C64>> = Vec::new();
    for k in 1..=kmax {
        let mu = l / k as f64 + delta;
        let nd = ev.derivs(-mu, order - 1)?;
        let rjet = Jet::from_derivatives(&nd).div(&d1.truncate(order - 1))?;
        let rk = rjet.powi(k);
        // q_k = h^{-k} (rk_0 + rk_1 h + ...)
        lead.push(rk.c[0]);
        lower.push(rk.c[..k].to_vec());
    }
    // s_k = q_k / rk_0 - sum_{j<k} (coefficient of h^{-j} in q_k/rk_0) s_j
    let mut weights: Vec<Vec<C64>> = Vec::new(); // s_k = sum_m w[k][m] q_m
    for k in 1..=kmax {
        let mut w = vec![c(0.0, 0.0); kmax];
        w[k - 1] = 1.0 / lead[k - 1];
        for j in 1..k {
            // coefficient of h^{-j}: index k - j in rk
            let cj = lower[k - 1][k - j] / lead[k - 1];
            for m in 0..kmax {
                w[m] -= cj * weights[j - 1][m];
            }
        }
        weights.push(w);
    }
    let mus: Vec<C64> = (1..=kmax).map(|k| l / k as f64 + delta).collect();
    let mut functions: Vec<ScalarFn> = Vec::new();
    for k in 1..=kmax {
        let ev = ev.clone();
        let w = weights[k - 1].clone();
        let mus = mus.clone();
        functions.push(Arc::new(move |u| {
            if curve.lattice_distance(u, c(0.0, 0.0)) < 1e-12 {
                return Err(Error::Pole(format!("{u}")));
            }
            let den = ev.theta(u - delta)?;
            let mut s = c(0.0, 0.0);
            for m in 0..k {
                if w[m] != c(0.0, 0.0) {
                    s += w[m] * (ev.theta(u - mus[m])? / den).powi(m as i32 + 1);
                }
            }
            Ok(s)
        }));
    }
    Ok(PrincipalPartBasis {
        alpha,
        functions,
        perturbations,
    })
}

/// One rung of the inductive construction: the top row [s0, row] of S_{r}.
#[derive(Clone)]
struct Level {
    s0: ScalarFn,
    row: Vec<ScalarFn>,
}

/// F_r = P_r(lambda_a) S_r with S_r upper triangular, every entry carrying the
/// scalar factor alpha, together with the simple null-pole data F_r interpolates.
#[derive(Clone)]
pub struct InductiveTrivialization {
    ev: ThetaEvaluator,
    pub alpha: C64,
    pub a: C64,
    levels: Vec<Level>,
    pub data: SimpleNullPoleData,
}

const CANDIDATES: [(f64, f64); 10] = [
    (0.23, 0.37),
    (0.61, 0.29),
    (0.41, 0.73),
    (0.83, 0.57),
    (0.17, 0.81),
    (0.69, 0.13),
    (0.33, 0.11),
    (0.91, 0.87),
    (0.53, 0.53),
    (0.09, 0.61),
];

impl InductiveTrivialization {
    /// Rank one: f_alpha (alpha != 1) or the constant 1.
    pub fn base(ev: &ThetaEvaluator, alpha: C64, a: C64) -> Result<Self> {
        check_alpha(alpha)?;
        let curve = *ev.curve();
        let f = scalar_trivialization(ev, alpha)?;
        let data = if near_one(alpha) {
            SimpleNullPoleData::empty(1)
        } else {
            let one = CMat::from_element(1, 1, c(1.0, 0.0));
            SimpleNullPoleData::new(
                &curve,
                vec![(scalar_trivialization_zero(&curve, alpha), one.clone())],
                vec![(curve.reduce(curve.delta()), one)],
                1e-9,
            )?
        };
        let s0: ScalarFn = Arc::new(move |u| f.eval_scalar(u));
        Ok(InductiveTrivialization {
            ev: ev.clone(),
            alpha,
            a: curve.reduce(a).rep,
            levels: vec![Level {
                s0,
                row: Vec::new(),
            }],
            data,
        })
    }

    pub fn rank(&self) -> usize {
        self.levels.len()
    }

    fn s_matrix(levels: &[Level], u: C64) -> Result<CMat> {
        let r = levels.len();
        let mut s = CMat::zeros(r, r);
        for i in 0..r {
            let lvl = &levels[r - 1 - i];
            s[(i, i)] = (lvl.s0)(u)?;
            for (k, f) in lvl.row.iter().enumerate() {
                s[(i, i + 1 + k)] = f(u)?;
            }
        }
        Ok(s)
    }

    fn g_matrix(ev: &ThetaEvaluator, alpha: C64, a: C64, r: usize, u: C64) -> Result<CMat> {
        if r == 1 {
            return Ok(CMat::identity(1, 1));
        }
        let lam = lambda_a(ev, a, u)?;
        let row: Vec<C64> = (0..r)
            .map(|n| poly_eval(&pn_coeffs(1.0 / alpha, n), lam))
            .collect();
        Ok(upper_toeplitz(&row))
    }

    pub fn eval(&self, u: C64) -> Result<CMat> {
        let r = self.rank();
        Ok(Self::g_matrix(&self.ev, self.alpha, self.a, r, u)? * Self::s_matrix(&self.levels, u)?)
    }

    pub fn to_map(&self) -> MeromorphicMatrixMap {
        let me = self.clone();
        let r = self.rank();
        let poles: Vec<(TorusPoint, usize)> =
            self.data.poles.iter().map(|(w, _)| (*w, 1)).collect();
        MeromorphicMatrixMap::new(
            r,
            Arc::new(move |u| me.eval(u)),
            poles,
            FlatFactor::jordan(self.alpha, r).ok(),
        )
    }

    fn occupied(&self) -> Vec<C64> {
        let mut v: Vec<C64> = self.data.zeros.iter().map(|z| z.0.rep).collect();
        v.extend(self.data.poles.iter().map(|p| p.0.rep));
        v.push(self.a);
        v
    }

    /// Builds F_{r+1} = [[s0, s_{r+1} + p S_r], [0, F_r]] with s_{r+1} removing
    /// the pole of p S_r at a.
    pub fn extend(&self) -> Result<Self> {
        let r = self.rank();
        if r + 1 > 4 {
            return Err(Error::InvalidInput(
                "inductive extension is limited to rank 4".into(),
            ));
        }
        let ev = self.ev.clone();
        let curve = *ev.curve();
        let delta = curve.delta();
        let alpha = self.alpha;
        let a = self.a;
        let occupied = self.occupied();
        let free =
            |p: C64, taken: &[C64]| taken.iter().all(|q| curve.lattice_distance(p, *q) > 0.08);

        // new pole(s) and zero(s) of s0
        let cands: Vec<C64> = CANDIDATES
            .iter()
            .map(|&(s, t)| curve.from_coords(s, t))
            .collect();
        let (pis, zetas, s0): (Vec<C64>, Vec<C64>, ScalarFn) = if !near_one(alpha) {
            let l = log_alpha(alpha);
            let mut chosen = None;
            for &p in &cands {
                let z = curve.reduce(p + l).rep;
                if free(p, &occupied) && free(z, &occupied) && curve.lattice_distance(p, z) > 0.08 {
                    chosen = Some((p, z));
                    break;
                }
            }
            let (p, z) =
                chosen.ok_or_else(|| Error::ConstructionFailed("no free point for s0".into()))?;
            let e2 = ev.clone();
            let s0: ScalarFn = Arc::new(move |u| {
                if curve.lattice_distance(u, p) < 1e-12 {
                    return Err(Error::Pole(format!("{u}")));
                }
                Ok(e2.theta(u - p + delta - l)? / e2.theta(u - p + delta)?)
            });
            (vec![p], vec![z], s0)
        } else {
            let mut chosen = None;
            'outer: for i in 0..cands.len() {
                for j in 0..cands.len() {
                    for k in 0..cands.len() {
                        if i == j || j == k || i == k {
                            continue;
                        }
                        let (p1, p2, z1) = (cands[i], cands[j], cands[k]);
                        let z2 = p1 + p2 - z1;
                        let pts = [p1, p2, z1, z2];
                        let ok = pts.iter().all(|&x| free(x, &occupied))
                            && (0..4).all(|x| {
                                (x + 1..4).all(|y| curve.lattice_distance(pts[x], pts[y]) > 0.08)
                            });
                        if ok {
                            chosen = Some((p1, p2, z1, z2));
                            break 'outer;
                        }
                    }
                }
            }
            let (p1, p2, z1, z2) =
                chosen.ok_or_else(|| Error::ConstructionFailed("no free points for s0".into()))?;
            let e2 = ev.clone();
            let s0: ScalarFn = Arc::new(move |u| {
                if curve.lattice_distance(u, p1) < 1e-12 || curve.lattice_distance(u, p2) < 1e-12 {
                    return Err(Error::Pole(format!("{u}")));
                }
                let t = |x: C64| e2.theta(u - x + delta);
                Ok(t(z1)? * t(z2)? / (t(p1)? * t(p2)?))
            });
            (
                vec![p1, p2],
                vec![curve.reduce(z1).rep, curve.reduce(z2).rep],
                s0,
            )
        };

        // e(u) = p(u) S_r(u), p = [p_1(lambda_a), ..., p_r(lambda_a)]
        let levels = self.levels.clone();
        let polys: Vec<Vec<C64>> = (1..=r).map(|n| pn_coeffs(1.0 / alpha, n)).collect();
        let e_ev = ev.clone();
        let e_row = move |u: C64| -> Result<Vec<C64>> {
            let lam = lambda_a(&e_ev, a, u)?;
            let s = Self::s_matrix(&levels, u)?;
            let p: Vec<C64> = polys.iter().map(|q| poly_eval(q, lam)).collect();
            Ok((0..r)
                .map(|j| (0..r).map(|k| p[k] * s[(k, j)]).sum())
                .collect())
        };

        // principal parts at a
        let mut singular: Vec<C64> = occupied
            .iter()
            .copied()
            .filter(|&q| curve.lattice_distance(q, a) > 1e-9)
            .collect();
        singular.extend(pis.iter().copied());
        singular.extend(zetas.iter().copied());
        let nearest = singular
            .iter()
            .map(|&q| lattice_euclid(&curve, q, a))
            .fold(f64::INFINITY, f64::min);
        let radius = (0.1f64).min(0.4 * nearest);
        let kmax = (2 * r).min(6);
        let spec = ContourSpec::new(a, radius);
        let lr = laurent_vec(&e_row, &spec, -(kmax as i32) - 1, -1, 1e-8)?;
        let top = lr.get(-(kmax as i32) - 1);
        let bound = lr.cauchy_bound(-(kmax as i32) - 1);
        if top.iter().any(|v| v.norm() > 1e-7 * bound.max(1.0)) {
            return Err(Error::ConstructionFailed(format!(
                "pole order at a exceeds {kmax}; principal-part basis too small"
            )));
        }
        let basis = principal_part_basis(&ev, alpha, kmax)?;
        // coefficients c[k][j] of (u - a)^{-k} in e_j
        let coeffs: Vec<Vec<C64>> = (1..=kmax).map(|k| lr.get(-(k as i32)).to_vec()).collect();
        let pi1 = pis[0];
        let mut row: Vec<ScalarFn> = Vec::new();
        for j in 0..r {
            let basis = basis.clone();
            let cj: Vec<C64> = coeffs.iter().map(|ck| ck[j]).collect();
            let b_ev = ev.clone();
            let unit = near_one(alpha);
            row.push(Arc::new(move |u| {
                let mut s = c(0.0, 0.0);
                for (k, ck) in cj.iter().enumerate() {
                    if ck.norm() == 0.0 {
                        continue;
                    }
                    let bk = if unit && k == 0 {
                        // elliptic replacement of the zeta-type member: residue moved to pi1
                        -TWO_PI_I * (lambda_a(&b_ev, a, u)? - lambda_a(&b_ev, pi1, u)?)
                    } else {
                        basis.eval(k + 1, u - a)?
                    };
                    s -= ck * bk;
                }
                Ok(s)
            }));
        }

        let mut levels = self.levels.clone();
        levels.push(Level {
            s0: s0.clone(),
            row: row.clone(),
        });
        let mut next = InductiveTrivialization {
            ev: ev.clone(),
            alpha,
            a,
            levels,
            data: self.data.clone(),
        };

        // first row must now be holomorphic at a
        let first_row = |u: C64| -> Result<Vec<C64>> {
            let f = next.eval(u)?;
            Ok((0..=r).map(|j| f[(0, j)]).collect())
        };
        let check = laurent_vec(&first_row, &spec, -(kmax as i32), -1, 1e-8)?;
        for k in 1..=kmax {
            let worst = check
                .get(-(k as i32))
                .iter()
                .map(|v| v.norm())
                .fold(0.0, f64::max);
            if worst > 1e-7 * check.cauchy_bound(-(k as i32)).max(1.0) {
                return Err(Error::ConstructionFailed(format!(
                    "pole of order {k} at a survived removal (|c| = {worst:.3e})"
                )));
            }
        }

        // null-pole data of F_{r+1}
        let mut zeros = Vec::new();
        for (z, x) in &self.data.zeros {
            let f = next.eval(z.rep)?;
            // kernel vector [v0; x] with s0 v0 + (s + e) x = 0
            let top: C64 = (0..r).map(|j| f[(0, j + 1)] * x[(j, 0)]).sum();
            let v0 = -top / f[(0, 0)];
            let mut v = CMat::zeros(r + 1, 1);
            v[(0, 0)] = v0;
            v.view_mut((1, 0), (r, 1)).copy_from(x);
            zeros.push((*z, v));
        }
        for &z in &zetas {
            let mut v = CMat::zeros(r + 1, 1);
            v[(0, 0)] = c(1.0, 0.0);
            zeros.push((curve.reduce(z), v));
        }
        let mut poles = Vec::new();
        for (w, y) in &self.data.poles {
            let mut v = CMat::zeros(r + 1, 1);
            v.view_mut((1, 0), (r, 1)).copy_from(y);
            poles.push((*w, v));
        }
        for &p in &pis {
            let others = singular
                .iter()
                .chain(std::iter::once(&a))
                .filter(|&&q| curve.lattice_distance(q, p) > 1e-9)
                .map(|&q| lattice_euclid(&curve, q, p))
                .fold(f64::INFINITY, f64::min);
            let spec = ContourSpec::new(p, (0.1f64).min(0.4 * others));
            let res = laurent_vec(&first_row, &spec, -1, -1, 1e-8)?;
            let y = CMat::from_column_slice(r + 1, 1, res.get(-1));
            let n = y.norm();
            poles.push((curve.reduce(p), y / C64::from(n)));
        }
        next.data = SimpleNullPoleData::new(&curve, zeros, poles, 1e-9)?;
        Ok(next)
    }
}

/// Euclidean distance from u to the nearest lattice translate of v.
pub fn lattice_euclid(curve: &EllipticCurve, u: C64, v: C64) -> f64 {
    let (m, n) = curve.nearest_lattice_shift(u, v);
    let mut best = f64::INFINITY;
    for dm in -1..=1 {
        for dn in -1..=1 {
            let w = v + (m + dm) as f64 + curve.tau() * (n + dn) as f64;
            best = best.min((u - w).norm());
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Tolerances;
    use crate::numerics::laurent_coefficient;
    use num_rational::Ratio;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn ev(tau: C64) -> ThetaEvaluator {
        ThetaEvaluator::new(EllipticCurve::new(tau).unwrap(), &Tolerances::default())
    }

    #[test]
    fn stirling_rows() {
        let s = stirling_first(4);
        assert_eq!(s[3], vec![0.0, 2.0, 3.0, 1.0, 0.0]);
        assert_eq!(s[4], vec![0.0, 6.0, 11.0, 6.0, 1.0]);
    }

    #[test]
    fn scalar_trivialization_unit_alpha_is_one() {
        let e = ev(c(0.0, 1.0));
        let f = scalar_trivialization(&e, c(1.0, 0.0)).unwrap();
        assert_eq!(f.eval_scalar(c(0.3, 0.2)).unwrap(), c(1.0, 0.0));
        assert!(scalar_trivialization(&e, c(0.0, 0.0)).is_err());
    }

    #[test]
    fn scalar_trivialization_multipliers() {
        let e = ev(c(0.0, 1.0));
        let curve = *e.curve();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a1 = (TWO_PI_I * 0.3).exp();
        let f1 = scalar_trivialization(&e, a1).unwrap();
        let f2 = scalar_trivialization(&e, c(2.0, 0.0)).unwrap();
        for _ in 0..20 {
            let u = curve.random_interior_point(&mut rng, 0.05);
            if curve.lattice_distance(u, curve.delta()) < 0.05 {
                continue;
            }
            let r1 = f1.eval_scalar(u + 1.0).unwrap() / f1.eval_scalar(u).unwrap();
            assert!((r1 - 1.0).norm() < 1e-9);
            let r2 = f2.eval_scalar(u + curve.tau()).unwrap() / f2.eval_scalar(u).unwrap();
            assert!((r2 - 2.0).norm() < 1e-8);
        }
    }

    #[test]
    fn automorphy_is_branch_independent() {
        // shifting l_alpha by 1 moves nothing: theta has period one
        let e = ev(c(0.0, 1.0));
        let alpha = c(-0.4, 1.3);
        let l = log_alpha(alpha);
        let u = c(0.31, 0.22);
        let a = e.theta(u - l).unwrap() / e.theta(u).unwrap();
        let b = e.theta(u - l - 1.0).unwrap() / e.theta(u).unwrap();
        assert!((a - b).norm() < 1e-12);
    }

    #[test]
    fn block_theta_rank_one_is_scalar() {
        let e = ev(c(0.0, 1.0));
        let g = block_theta_triv(&e, c(2.0, 0.0), 1).unwrap();
        let f = scalar_trivialization(&e, c(2.0, 0.0)).unwrap();
        let u = c(0.2, 0.3);
        assert!((g.eval_scalar(u).unwrap() - f.eval_scalar(u).unwrap()).norm() < 1e-13);
    }

    #[test]
    fn block_theta_automorphy_and_negative_control() {
        let e = ev(c(0.0, 1.0));
        let g = block_theta_triv(&e, c(2.0, 0.0), 2).unwrap();
        {
            let curve = *e.curve();
            let good = verify_automorphy(
                &curve,
                &g,
                &FlatFactor::jordan(c(2.0, 0.0), 2).unwrap(),
                20,
                7,
            )
            .unwrap();
            assert!(good < 1e-8, "{good}");
            let bad = verify_automorphy(
                &curve,
                &g,
                &FlatFactor::jordan(c(3.0, 0.0), 2).unwrap(),
                20,
                7,
            )
            .unwrap();
            assert!(bad > 1e-3);
            let id = MeromorphicMatrixMap::constant(CMat::identity(2, 2));
            assert_eq!(
                verify_automorphy(&curve, &id, &FlatFactor::trivial(2), 5, 1).unwrap(),
                0.0
            );
        }
    }

    #[test]
    fn block_theta_diagonal_is_scalar_trivialization() {
        let e = ev(c(0.0, 1.0));
        let g = block_theta_triv(&e, c(-1.0, 0.0), 3).unwrap();
        let f = scalar_trivialization(&e, c(-1.0, 0.0)).unwrap();
        let u = c(0.15, 0.4);
        let m = g.eval(u).unwrap();
        let fv = f.eval_scalar(u).unwrap();
        for i in 0..3 {
            assert!((m[(i, i)] - fv).norm() < 1e-12);
        }
    }

    #[test]
    fn block_theta_matches_matrix_series() {
        let e = ev(c(0.0, 2.0));
        let alpha = c(-1.0, 0.0);
        let g = block_theta_triv(&e, alpha, 3).unwrap();
        let v = jordan_block(alpha, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let u = e.curve().random_interior_point(&mut rng, 0.05);
            let a = g.eval(u).unwrap();
            let b = e.matrix_theta_triv(&v, u).unwrap();
            assert!((&a - &b).norm() < 1e-8 * a.norm().max(1.0));
        }
    }

    #[test]
    fn lambda_quasi_periods_and_residue() {
        let e = ev(c(0.0, 1.0));
        let tau = e.curve().tau();
        let zero = c(0.0, 0.0);
        for u in [c(0.3, 0.4), c(0.71, 0.12), c(0.45, 0.88)] {
            let l0 = lambda_a(&e, zero, u).unwrap();
            assert!((lambda_a(&e, zero, u + 1.0).unwrap() - l0).norm() < 1e-9);
            assert!((lambda_a(&e, zero, u + tau).unwrap() - l0 - 1.0).norm() < 1e-9);
        }
        let f = |u: C64| lambda_a(&e, zero, u);
        let res = laurent_coefficient(&f, &ContourSpec::new(zero, 0.1).with_nodes(64), -1).unwrap();
        // residue -1/(2 pi i) = i / (2 pi)
        assert!((res - c(0.0, 1.0 / (2.0 * PI))).norm() < 1e-10, "{res}");
    }

    #[test]
    fn pn_examples() {
        let alpha = c(2.0, 1.0);
        assert_eq!(pn_poly(alpha, 0).unwrap(), vec![c(1.0, 0.0)]);
        let p1 = pn_poly(alpha, 1).unwrap();
        assert!(p1[0].norm() < 1e-15 && (p1[1] - 1.0 / alpha).norm() < 1e-15);
    }

    fn shift_by_one(p: &[Ratio<i64>]) -> Vec<Ratio<i64>> {
        // p(u + 1) via binomial expansion
        let n = p.len();
        let mut out = vec![Ratio::from_integer(0); n];
        for (k, ck) in p.iter().enumerate() {
            let mut binom = 1i64;
            for j in 0..=k {
                out[j] += *ck * Ratio::from_integer(binom);
                binom = binom * (k - j) as i64 / (j + 1) as i64;
            }
        }
        out
    }

    #[test]
    fn pn_difference_identity_exact() {
        let ainv = Ratio::new(1i64, 3);
        for n in 0..=6 {
            let next = pn_coeffs(ainv, n + 1);
            let shifted = shift_by_one(&next);
            let cur = pn_coeffs(ainv, n);
            for k in 0..shifted.len() {
                let diff = shifted[k] - next[k];
                let want = if k < cur.len() {
                    cur[k] * ainv
                } else {
                    Ratio::from_integer(0)
                };
                assert_eq!(diff, want, "n = {n}, k = {k}");
            }
        }
    }

    #[test]
    fn single_pole_examples() {
        let e = ev(c(0.0, 1.0));
        let g1 = single_pole_triv(&e, c(2.0, 0.0), 1, c(0.0, 0.0)).unwrap();
        assert_eq!(g1.eval(c(0.3, 0.3)).unwrap(), CMat::identity(1, 1));
        {
            let curve = *e.curve();
            let g2 = single_pole_triv(&e, c(1.0, 0.0), 2, c(0.0, 0.0)).unwrap();
            let res = verify_automorphy(
                &curve,
                &g2,
                &FlatFactor::jordan(c(1.0, 0.0), 2).unwrap(),
                20,
                2,
            )
            .unwrap();
            assert!(res < 1e-8);
            let alpha = c(2.0, 0.0);
            let g3 = single_pole_triv(&e, alpha, 3, c(0.3, 0.2)).unwrap();
            let v = jordan_block(alpha, 3) / alpha;
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            for _ in 0..20 {
                let u = e.curve().random_interior_point(&mut rng, 0.05);
                let a = g3.eval(u + e.curve().tau()).unwrap();
                let b = &v * g3.eval(u).unwrap();
                assert!((&a - &b).norm() < 1e-7 * b.norm().max(1.0));
            }
        }
    }

    #[test]
    fn principal_parts_are_pure() {
        let e = ev(c(0.0, 1.0));
        for alpha in [c(2.0, 0.0), (TWO_PI_I * 0.3).exp(), c(1.0, 0.0)] {
            let b = principal_part_basis(&e, alpha, 4).unwrap();
            for k in 1..=4usize {
                let f = |u: C64| b.eval(k, u);
                let co =
                    crate::numerics::laurent_scalar(&f, &ContourSpec::new(c(0.0, 0.0), 0.1), -6, 0)
                        .unwrap();
                for (idx, v) in co.iter().enumerate() {
                    let order = idx as i32 - 6;
                    if order == -(k as i32) {
                        assert!((v - 1.0).norm() < 1e-8, "alpha {alpha} k {k}: {v}");
                    } else if order < 0 {
                        assert!(v.norm() < 1e-8, "alpha {alpha} k {k} order {order}: {v}");
                    } else {
                        assert!(v.is_finite());
                    }
                }
            }
        }
    }

    #[test]
    fn principal_part_automorphy() {
        let e = ev(c(0.0, 1.0));
        let tau = e.curve().tau();
        let b = principal_part_basis(&e, c(2.0, 0.0), 3).unwrap();
        let unit = principal_part_basis(&e, c(1.0, 0.0), 3).unwrap();
        for u in [c(0.3, 0.4), c(0.6, 0.2)] {
            for k in 1..=3 {
                let r = b.eval(k, u + tau).unwrap() / b.eval(k, u).unwrap();
                assert!((r - 2.0).norm() < 1e-8);
                assert!((b.eval(k, u + 1.0).unwrap() - b.eval(k, u).unwrap()).norm() < 1e-8);
            }
            // wp-type member is even
            assert!((unit.eval(2, u).unwrap() - unit.eval(2, -u).unwrap()).norm() < 1e-9);
            for k in 2..=3 {
                assert!((unit.eval(k, u + tau).unwrap() - unit.eval(k, u).unwrap()).norm() < 1e-8);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn relations_hold_along_lambda(s in 0.05f64..0.95, t in 0.05f64..0.95, n in 0usize..5) {
            let e = ev(c(0.0, 1.0));
            let alpha = c(2.0, -1.0);
            let u = e.curve().from_coords(s, t);
            prop_assume!(e.curve().lattice_distance(u, c(0.0, 0.0)) > 0.05);
            let a = c(0.0, 0.0);
            let lam = lambda_a(&e, a, u).unwrap();
            let lam_t = lambda_a(&e, a, u + e.curve().tau()).unwrap();
            let lam_1 = lambda_a(&e, a, u + 1.0).unwrap();
            let pn = pn_poly(alpha, n).unwrap();
            let pn1 = pn_poly(alpha, n + 1).unwrap();
            let lhs = poly_eval(&pn1, lam_t) - poly_eval(&pn1, lam) - poly_eval(&pn, lam) / alpha;
            prop_assert!(lhs.norm() < 1e-8 * (1.0 + poly_eval(&pn1, lam).norm()));
            prop_assert!((poly_eval(&pn1, lam_1) - poly_eval(&pn1, lam)).norm() < 1e-8 * (1.0 + poly_eval(&pn1, lam).norm()));
        }
    }
}
