//! The coupling matrix Gamma of a null-pole divisor against a base divisor
//! D0 = p1 - p0, and the interpolation solvers built on it.
//!
//! Rows of Gamma run over the points carrying a pole part (type I, then II),
//! columns over the points carrying a zero part (type II, then III). The local
//! coordinate at a support point u_j is z = u - u_j on the stored representative.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::Tolerances;
use crate::divisors::{
    admissibility_margin, is_cd_admissible, BaseDivisor, IndexPartition, MatrixDivisor,
};
use crate::error::{Error, Result};
use crate::kernels::{cauchy_kernel, BaseKernel, FlatLineBundle, PrimeForm};
use crate::nullpole::{
    matrix_laurent, verify_local_interpolation, SimpleNullPoleData, SylvesterDataSet,
};
use crate::numerics::{block_diag, laurent_coefficient, singular_values, CMat, ContourSpec, C64};
use crate::torus::EllipticCurve;
use crate::trivialize::{
    lattice_euclid, verify_automorphy, FlatFactor, MatFn, MeromorphicMatrixMap,
};

/// How the off-diagonal blocks are computed. Self blocks always use contours.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidueMethod {
    /// Taylor coefficients of f_w(p) in (w, p) from theta jets.
    Analytic,
    Contour,
}

#[derive(Debug, Clone)]
pub struct GammaSystem {
    pub gamma: CMat,
    /// Residues at p1, stacked over the pole points: (sum n_pi) x r.
    pub r: CMat,
    pub bz_row: CMat,
    pub cpi_col: CMat,
    pub partition: IndexPartition,
    pub row_offsets: Vec<usize>,
    pub col_offsets: Vec<usize>,
    /// Smallest distance between support points and p0, p1.
    pub separation: f64,
    pub radius: f64,
    kernel: BaseKernel,
    divisor: MatrixDivisor,
}

#[derive(Debug, Clone)]
pub enum Invertibility {
    Invertible {
        inverse: CMat,
        condition: f64,
    },
    Singular {
        ratio: f64,
    },
    /// Smallest singular value in the grey zone between noise and the invertibility threshold.
    Indeterminate {
        ratio: f64,
    },
}

impl GammaSystem {
    pub fn kernel(&self) -> &BaseKernel {
        &self.kernel
    }

    pub fn divisor(&self) -> &MatrixDivisor {
        &self.divisor
    }

    pub fn base(&self) -> &BaseDivisor {
        &self.kernel.d0
    }

    pub fn rank(&self) -> usize {
        self.divisor.rank
    }

    pub fn block(&self, bi: usize, bj: usize) -> CMat {
        let (r0, r1) = (self.row_offsets[bi], self.row_offsets[bi + 1]);
        let (c0, c1) = (self.col_offsets[bj], self.col_offsets[bj + 1]);
        self.gamma.view((r0, c0), (r1 - r0, c1 - c0)).into_owned()
    }

    fn pole_entries(&self) -> impl Iterator<Item = (C64, &SylvesterDataSet)> {
        self.partition
            .pole_points()
            .into_iter()
            .map(move |i| (self.divisor.entries[i].0.rep, &self.divisor.entries[i].1))
    }

    /// Block-diagonal F_{A_pi}(u) = diag f^{D0}_{u_i, A_pi_i}(u).
    pub fn diag_eval(&self, u: C64) -> Result<CMat> {
        let blocks = self
            .pole_entries()
            .map(|(ui, t)| self.kernel.f_wa(ui, &t.api, u))
            .collect::<Result<Vec<_>>>()?;
        Ok(block_diag(&blocks))
    }

    /// Magnitude against which singular values of Gamma are judged.
    pub fn reference_scale(&self) -> f64 {
        let natural = self.bz_row.norm() * self.cpi_col.norm() / self.separation;
        natural.max(self.gamma.norm()).max(f64::MIN_POSITIVE)
    }

    pub fn invertibility(&self, tol: &Tolerances) -> Invertibility {
        let n = self.gamma.nrows();
        if n == 0 {
            return Invertibility::Invertible {
                inverse: CMat::zeros(0, 0),
                condition: 1.0,
            };
        }
        if self.gamma.ncols() != n {
            return Invertibility::Singular { ratio: 0.0 };
        }
        let s = singular_values(&self.gamma);
        let ratio = s.last().copied().unwrap_or(0.0) / self.reference_scale();
        let condition = if s[n - 1] > 0.0 {
            s[0] / s[n - 1]
        } else {
            f64::INFINITY
        };
        if ratio > tol.gamma_sigma && condition < tol.gamma_condition {
            match self.gamma.clone().full_piv_lu().try_inverse() {
                Some(inverse) => Invertibility::Invertible { inverse, condition },
                None => Invertibility::Singular { ratio },
            }
        } else if ratio <= tol.gamma_floor {
            Invertibility::Singular { ratio }
        } else {
            Invertibility::Indeterminate { ratio }
        }
    }
}

fn min_separation(curve: &EllipticCurve, pts: &[C64]) -> f64 {
    let mut m = f64::INFINITY;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            m = m.min(lattice_euclid(curve, pts[i], pts[j]));
        }
    }
    m
}

fn resolvent(a: &CMat, z: C64) -> Result<CMat> {
    let n = a.nrows();
    (CMat::identity(n, n) * z - a)
        .try_inverse()
        .ok_or_else(|| Error::Pole(format!("resolvent at z = {z}")))
}

/// sum_{k,m} c[k][m] A_pi^k C_pi B_zeta A_zeta^m.
fn contract(c: impl Fn(usize, usize) -> C64, api: &CMat, cb: &CMat, az: &CMat) -> CMat {
    let (np, nz) = (cb.nrows(), cb.ncols());
    let mut out = CMat::zeros(np, nz);
    let mut ak = CMat::identity(np, np);
    for k in 0..np {
        let mut left = &ak * cb;
        for m in 0..nz {
            out += &left * c(k, m);
            left = &left * az;
        }
        ak = &ak * api;
    }
    out
}

fn off_block(
    kernel: &BaseKernel,
    (ui, ti): (C64, &SylvesterDataSet),
    (uj, tj): (C64, &SylvesterDataSet),
    method: ResidueMethod,
    radius: f64,
    tol: &Tolerances,
) -> Result<CMat> {
    let (np, nz) = (ti.n_pi(), tj.n_zeta());
    let cb = &ti.cpi * &tj.bz;
    match method {
        ResidueMethod::Analytic => {
            let t = kernel.jet2(ui, uj, np - 1, nz - 1)?;
            Ok(-contract(|k, m| t.c[k][m], &ti.api, &cb, &tj.az))
        }
        ResidueMethod::Contour => {
            let h = |u: C64| -> Result<CMat> {
                Ok(kernel.f_wa(ui, &ti.api, u)? * &cb * resolvent(&tj.az, u - uj)?)
            };
            let (co, _) = matrix_laurent(&h, uj, radius, -1, -1, tol)?;
            Ok(-&co[0])
        }
    }
}

fn self_block(
    kernel: &BaseKernel,
    uj: C64,
    t: &SylvesterDataSet,
    radius: f64,
    tol: &Tolerances,
) -> Result<CMat> {
    let (np, nz) = (t.n_pi(), t.n_zeta());
    // Taylor coefficients of the regular parts of f_{(k+1) u_j} at u_j
    let g = |u: C64| -> Result<CMat> { Ok(CMat::from_vec(np, 1, kernel.f_kw_all(np, uj, u)?)) };
    let (co, _) = matrix_laurent(&g, uj, radius, 0, nz as i32 - 1, tol)?;
    let cb = &t.cpi * &t.bz;
    Ok(&t.s - contract(|k, m| co[m][(k, 0)], &t.api, &cb, &t.az))
}

/// Assembles Gamma, the residue matrix R at p1 and the block row/column.
pub fn build_gamma(
    pf: &PrimeForm,
    d: &MatrixDivisor,
    d0: &BaseDivisor,
    method: ResidueMethod,
    tol: &Tolerances,
) -> Result<GammaSystem> {
    let curve = pf.curve();
    if !is_cd_admissible(curve, d0, d, tol.lattice) {
        return Err(Error::InvalidInput(
            "D0 meets the support of the divisor".into(),
        ));
    }
    if d.degree() != 0 {
        return Err(Error::InvalidInput(format!(
            "divisor has degree {}, expected 0",
            d.degree()
        )));
    }
    let kernel = BaseKernel::new(pf, d0)?;
    let partition = d.partition();
    let rows = partition.pole_points();
    let cols = partition.zero_points();
    let mut pts = d.support();
    pts.push(d0.p0());
    pts.push(d0.p1());
    let separation = min_separation(curve, &pts);
    let radius = (0.3 * separation).min(tol.contour_radius);
    let offsets = |idx: &[usize], size: &dyn Fn(&SylvesterDataSet) -> usize| {
        let mut o = vec![0];
        for &i in idx {
            o.push(o.last().unwrap() + size(&d.entries[i].1));
        }
        o
    };
    let row_offsets = offsets(&rows, &|t| t.n_pi());
    let col_offsets = offsets(&cols, &|t| t.n_zeta());
    let (np, nz) = (*row_offsets.last().unwrap(), *col_offsets.last().unwrap());
    let r = d.rank;

    let mut gamma = CMat::zeros(np, nz);
    for (bi, &i) in rows.iter().enumerate() {
        let (ui, ti) = (d.entries[i].0.rep, &d.entries[i].1);
        for (bj, &j) in cols.iter().enumerate() {
            let (uj, tj) = (d.entries[j].0.rep, &d.entries[j].1);
            let blk = if i == j {
                self_block(&kernel, uj, tj, radius, tol)?
            } else {
                off_block(&kernel, (ui, ti), (uj, tj), method, radius, tol)?
            };
            gamma
                .view_mut(
                    (row_offsets[bi], col_offsets[bj]),
                    (blk.nrows(), blk.ncols()),
                )
                .copy_from(&blk);
        }
    }

    let mut bz_row = CMat::zeros(r, nz);
    for (bj, &j) in cols.iter().enumerate() {
        bz_row
            .view_mut((0, col_offsets[bj]), (r, d.entries[j].1.n_zeta()))
            .copy_from(&d.entries[j].1.bz);
    }
    let mut cpi_col = CMat::zeros(np, r);
    let mut rmat = CMat::zeros(np, r);
    let p1 = d0.p1();
    for (bi, &i) in rows.iter().enumerate() {
        let (ui, ti) = (d.entries[i].0.rep, &d.entries[i].1);
        cpi_col
            .view_mut((row_offsets[bi], 0), (ti.n_pi(), r))
            .copy_from(&ti.cpi);
        let h = |u: C64| -> Result<CMat> { Ok(kernel.f_wa(ui, &ti.api, u)? * &ti.cpi) };
        let (co, _) = matrix_laurent(&h, p1, radius, -1, -1, tol)?;
        rmat.view_mut((row_offsets[bi], 0), (ti.n_pi(), r))
            .copy_from(&co[0]);
    }

    Ok(GammaSystem {
        gamma,
        r: rmat,
        bz_row,
        cpi_col,
        partition,
        row_offsets,
        col_offsets,
        separation,
        radius,
        kernel,
        divisor: d.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RowTest {
    pub holds: bool,
    pub residual: f64,
    pub scale: f64,
}

/// u0 B_zeta = u Gamma, with u the row of blocks u_i over the pole points.
pub fn membership_row_test(system: &GammaSystem, u0: &CMat, u: &CMat) -> Result<RowTest> {
    if u0.ncols() != system.rank() || u.ncols() != system.gamma.nrows() || u0.nrows() != u.nrows() {
        return Err(Error::InvalidInput(
            "row shapes do not match the Gamma system".into(),
        ));
    }
    let residual = (u0 * &system.bz_row - u * &system.gamma).norm();
    let scale = u0.norm() * system.bz_row.norm() + u.norm() * system.gamma.norm();
    Ok(RowTest {
        holds: residual <= 1e-8 * scale || residual < 1e-13,
        residual,
        scale,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectionCount {
    /// Dimension of the left kernel; None when a singular value sits in the grey zone.
    pub count: Option<usize>,
    pub singular_values: Vec<f64>,
    pub reference: f64,
}

pub fn section_count(system: &GammaSystem, tol: &Tolerances) -> SectionCount {
    let s = singular_values(&system.gamma);
    let reference = system.reference_scale();
    let zero = s
        .iter()
        .filter(|&&x| x <= tol.gamma_floor * reference)
        .count();
    let grey = s
        .iter()
        .filter(|&&x| x > tol.gamma_floor * reference && x <= tol.gamma_sigma * reference)
        .count();
    let rank = s.len() - zero;
    let count = if grey > 0 {
        None
    } else {
        Some(system.gamma.nrows() - rank)
    };
    SectionCount {
        count,
        singular_values: s,
        reference,
    }
}

/// K = U0 + U F_{A_pi}(u) C_pi.
pub fn build_k(system: &GammaSystem, u: &CMat, u0: &CMat) -> Result<MeromorphicMatrixMap> {
    let r = system.rank();
    if u0.ncols() != r || u.ncols() != system.cpi_col.nrows() || u.nrows() != u0.nrows() {
        return Err(Error::InvalidInput(
            "coefficient shapes do not match the Gamma system".into(),
        ));
    }
    let sys = system.clone();
    let rows = u0.nrows();
    let (u, u0) = (u.clone(), u0.clone());
    let eval: MatFn = Arc::new(move |p| Ok(&u0 + &u * sys.diag_eval(p)? * &sys.cpi_col));
    let mut poles: Vec<_> = system
        .partition
        .pole_points()
        .into_iter()
        .map(|i| {
            (
                system.divisor.entries[i].0,
                system.divisor.entries[i].1.n_pi(),
            )
        })
        .collect();
    poles.push((system.base().poles[0].0, 1));
    let factor = (rows == r).then(|| FlatFactor::trivial(r));
    Ok(MeromorphicMatrixMap::new(r, eval, poles, factor))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CertificateOptions {
    pub samples: usize,
    pub seed: u64,
}

impl Default for CertificateOptions {
    fn default() -> Self {
        CertificateOptions {
            samples: 16,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FirstCertificate {
    pub condition: f64,
    pub side_absolute: f64,
    pub side_relative: f64,
    /// Largest relative change of K under u -> u + 1, u -> u + tau.
    pub periodicity: f64,
    pub local: Vec<bool>,
    /// |res_{p1} K| relative to its Cauchy bound.
    pub p1_residue: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum NoSolutionReason {
    SingularGamma { ratio: f64 },
    SideConstraint { absolute: f64, relative: f64 },
}

#[derive(Debug, Clone)]
pub enum FirstOutcome {
    Solved {
        k: MeromorphicMatrixMap,
        certificate: FirstCertificate,
    },
    NoSolution(NoSolutionReason),
}

/// Side constraint B_zeta Gamma^{-1} R: (absolute, relative).
pub fn side_constraint(system: &GammaSystem, inverse: &CMat) -> (f64, f64) {
    let abs = (&system.bz_row * inverse * &system.r).norm();
    let denom = system.bz_row.norm() * inverse.norm() * system.r.norm();
    let rel = if denom > 0.0 { abs / denom } else { 0.0 };
    (abs, rel)
}

/// K(u) = U0 (I + B_zeta Gamma^{-1} F_{A_pi}(u) C_pi) when Gamma is invertible
/// and the side constraint holds.
pub fn solve_first(
    pf: &PrimeForm,
    d: &MatrixDivisor,
    d0: &BaseDivisor,
    u0: &CMat,
    tol: &Tolerances,
    opts: &CertificateOptions,
) -> Result<FirstOutcome> {
    let r = d.rank;
    if u0.nrows() != r || u0.ncols() != r || u0.clone().try_inverse().is_none() {
        return Err(Error::InvalidInput(
            "U0 must be an invertible r x r matrix".into(),
        ));
    }
    let system = build_gamma(pf, d, d0, ResidueMethod::Analytic, tol)?;
    let (inverse, condition) = match system.invertibility(tol) {
        Invertibility::Invertible { inverse, condition } => (inverse, condition),
        Invertibility::Singular { ratio } => {
            return Ok(FirstOutcome::NoSolution(NoSolutionReason::SingularGamma {
                ratio,
            }))
        }
        Invertibility::Indeterminate { ratio } => {
            return Err(Error::Indeterminate(format!(
                "Gamma smallest singular value ratio {ratio:.3e}"
            )))
        }
    };
    let (side_absolute, side_relative) = side_constraint(&system, &inverse);
    if side_relative >= tol.side_relative {
        return Ok(FirstOutcome::NoSolution(NoSolutionReason::SideConstraint {
            absolute: side_absolute,
            relative: side_relative,
        }));
    }
    let u = u0 * &system.bz_row * &inverse;
    let k = build_k(&system, &u, u0)?;
    let curve = pf.curve();
    let periodicity = if d.entries.is_empty() {
        0.0
    } else {
        verify_automorphy(curve, &k, &FlatFactor::trivial(r), opts.samples, opts.seed)?
    };
    let f = k.evaluator();
    let mut local = Vec::new();
    for (p, t) in &d.entries {
        let rep = verify_local_interpolation(&*f, t, p.rep, system.radius, tol)?;
        local.push(rep.passed);
    }
    let (co, l) = matrix_laurent(&*f, d0.p1(), system.radius, -1, -1, tol)?;
    let p1_residue = co[0].norm() / l.cauchy_bound(-1).max(f64::MIN_POSITIVE);
    let passed = periodicity < 1e-7 && local.iter().all(|&b| b) && p1_residue < 1e-7;
    Ok(FirstOutcome::Solved {
        k,
        certificate: FirstCertificate {
            condition,
            side_absolute,
            side_relative,
            periodicity,
            local,
            p1_residue,
            passed,
        },
    })
}

#[derive(Debug, Clone)]
pub enum SecondOutcome {
    Certificate {
        d0: BaseDivisor,
        condition: f64,
        trial: usize,
    },
    /// No invertible Gamma among the candidates; evidence, not proof, of non-existence.
    Unknown { trials: usize, best_ratio: f64 },
}

/// First candidate D0 with invertible Gamma. Candidates meeting the support,
/// or whose bundle sits on a theta zero, are skipped.
pub fn solve_second_with(
    pf: &PrimeForm,
    d: &MatrixDivisor,
    candidates: impl IntoIterator<Item = BaseDivisor>,
    tol: &Tolerances,
) -> Result<SecondOutcome> {
    if d.degree() != 0 {
        return Err(Error::InvalidInput(format!(
            "divisor has degree {}, expected 0",
            d.degree()
        )));
    }
    let mut best_ratio = 0.0f64;
    let mut trials = 0;
    for d0 in candidates {
        trials += 1;
        if !is_cd_admissible(pf.curve(), &d0, d, tol.lattice) {
            continue;
        }
        let system = match build_gamma(pf, d, &d0, ResidueMethod::Analytic, tol) {
            Ok(s) => s,
            Err(Error::Degenerate(_)) => continue,
            Err(e) => return Err(e),
        };
        match system.invertibility(tol) {
            Invertibility::Invertible { condition, .. } => {
                return Ok(SecondOutcome::Certificate {
                    d0,
                    condition,
                    trial: trials,
                })
            }
            Invertibility::Singular { ratio } | Invertibility::Indeterminate { ratio } => {
                best_ratio = best_ratio.max(ratio);
            }
        }
    }
    Ok(SecondOutcome::Unknown { trials, best_ratio })
}

/// Uniform D0 in the fundamental domain, rejected unless every base point is
/// at least `margin` (basis coordinates) from the support and from each other.
pub fn sample_base_divisors(
    curve: &EllipticCurve,
    d: &MatrixDivisor,
    count: usize,
    margin: f64,
    seed: u64,
    tol: &Tolerances,
) -> Vec<BaseDivisor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut attempts = 0;
    while out.len() < count && attempts < 1000 * count.max(1) {
        attempts += 1;
        let (p1, p0) = (curve.random_point(&mut rng), curve.random_point(&mut rng));
        if let Ok(d0) = BaseDivisor::new(curve, p1, p0, tol) {
            if admissibility_margin(curve, &d0, d) >= margin {
                out.push(d0);
            }
        }
    }
    out
}

pub fn solve_second_existence(
    pf: &PrimeForm,
    d: &MatrixDivisor,
    trials: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<SecondOutcome> {
    let candidates = sample_base_divisors(pf.curve(), d, trials, 0.05, seed, tol);
    solve_second_with(pf, d, candidates, tol)
}

/// Orientation of the genus-0 Cauchy matrix S_ij = sign / (mu_j - lambda_i).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CauchyConvention {
    pub negate: bool,
    pub transpose: bool,
}

/// Fixed by [`calibrate_genus0`].
pub const GENUS0_CONVENTION: CauchyConvention = CauchyConvention {
    negate: false,
    transpose: false,
};

pub fn cauchy_matrix(lambdas: &[C64], mus: &[C64], conv: CauchyConvention) -> Result<CMat> {
    let n = lambdas.len();
    if mus.len() != n {
        return Err(Error::InvalidInput(
            "as many zeros as poles required".into(),
        ));
    }
    let all: Vec<C64> = lambdas.iter().chain(mus.iter()).copied().collect();
    for i in 0..all.len() {
        for j in i + 1..all.len() {
            if (all[i] - all[j]).norm() < 1e-12 {
                return Err(Error::InvalidInput(format!("coincident points {}", all[i])));
            }
        }
    }
    let sign = if conv.negate { -1.0 } else { 1.0 };
    let s = CMat::from_fn(n, n, |i, j| sign / (mus[j] - lambdas[i]));
    Ok(if conv.transpose { s.transpose() } else { s })
}

#[derive(Debug, Clone)]
pub struct Genus0Solution {
    pub lambdas: Vec<C64>,
    pub mus: Vec<C64>,
    s_inv: CMat,
}

impl Genus0Solution {
    pub fn new(lambdas: &[C64], mus: &[C64], conv: CauchyConvention) -> Result<Self> {
        let s = cauchy_matrix(lambdas, mus, conv)?;
        let s_inv = s
            .try_inverse()
            .ok_or_else(|| Error::Singular("Cauchy matrix".into()))?;
        Ok(Genus0Solution {
            lambdas: lambdas.to_vec(),
            mus: mus.to_vec(),
            s_inv,
        })
    }

    pub fn product(&self, z: C64) -> C64 {
        let num: C64 = self.lambdas.iter().map(|l| z - l).product();
        let den: C64 = self.mus.iter().map(|m| z - m).product();
        num / den
    }

    /// 1 + [1 ... 1] diag((z - mu_j)^{-1}) S^{-1} [1 ... 1]^T.
    pub fn realization(&self, z: C64) -> C64 {
        let n = self.mus.len();
        let mut acc = C64::new(1.0, 0.0);
        for j in 0..n {
            let row: C64 = (0..n).map(|i| self.s_inv[(j, i)]).sum();
            acc += row / (z - self.mus[j]);
        }
        acc
    }

    pub fn max_deviation(&self, probes: &[C64]) -> f64 {
        probes
            .iter()
            .map(|&z| {
                (self.product(z) - self.realization(z)).norm() / self.product(z).norm().max(1.0)
            })
            .fold(0.0, f64::max)
    }
}

fn genus0_probes() -> Vec<C64> {
    (0..12)
        .map(|k| C64::from_polar(3.5, 0.37 + k as f64 * 0.5))
        .collect()
}

/// Brute force over sign and orientation: N = 1 with lambda = 1, mu = 2 fixes
/// the sign, a fixed N = 2 instance fixes the orientation.
pub fn calibrate_genus0() -> Result<CauchyConvention> {
    let probes = genus0_probes();
    let c = |re: f64, im: f64| C64::new(re, im);
    let cases: [(Vec<C64>, Vec<C64>); 2] = [
        (vec![c(1.0, 0.0)], vec![c(2.0, 0.0)]),
        (
            vec![c(0.3, 0.2), c(-1.0, 0.5)],
            vec![c(1.1, -0.4), c(-0.2, -1.3)],
        ),
    ];
    let mut found = Vec::new();
    for negate in [false, true] {
        for transpose in [false, true] {
            let conv = CauchyConvention { negate, transpose };
            let ok = cases.iter().all(|(l, m)| {
                Genus0Solution::new(l, m, conv)
                    .map(|s| s.max_deviation(&probes) < 1e-12)
                    .unwrap_or(false)
            });
            if ok {
                found.push(conv);
            }
        }
    }
    match found.as_slice() {
        [one] => Ok(*one),
        [] => Err(Error::ConstructionFailed(
            "no Cauchy-matrix convention reproduces the product".into(),
        )),
        _ => Err(Error::Indeterminate(format!(
            "{} conventions fit the calibration cases",
            found.len()
        ))),
    }
}

/// Product and realization forms with the frozen convention, and their largest
/// relative deviation on `probes`.
pub fn genus0_cauchy_solve(
    lambdas: &[C64],
    mus: &[C64],
    probes: &[C64],
) -> Result<(Genus0Solution, f64)> {
    let sol = Genus0Solution::new(lambdas, mus, GENUS0_CONVENTION)?;
    let dev = sol.max_deviation(probes);
    Ok((sol, dev))
}

/// Scalar simple divisor: simple zeros at lambdas, simple poles at mus.
pub fn scalar_divisor(
    curve: &EllipticCurve,
    lambdas: &[C64],
    mus: &[C64],
    tol: &Tolerances,
) -> Result<MatrixDivisor> {
    if lambdas.is_empty() && mus.is_empty() {
        return Ok(MatrixDivisor::empty(1));
    }
    let one = CMat::from_element(1, 1, C64::new(1.0, 0.0));
    let zeros = lambdas
        .iter()
        .map(|&l| (curve.reduce(l), one.clone()))
        .collect();
    let poles = mus
        .iter()
        .map(|&m| (curve.reduce(m), one.clone()))
        .collect();
    let data = SimpleNullPoleData::new(curve, zeros, poles, tol.lattice)?;
    MatrixDivisor::from_simple(curve, &data, tol)
}

/// Whether sum(mu) - sum(lambda) lies on the lattice.
pub fn abel_condition(curve: &EllipticCurve, lambdas: &[C64], mus: &[C64], tol: f64) -> bool {
    let sl: C64 = lambdas.iter().sum();
    let sm: C64 = mus.iter().sum();
    curve.lattice_equivalent(sm, sl, tol)
}

/// Copy of `lambdas` with the first point moved by a lattice vector so that
/// sum(lambda) = sum(mu) exactly on the cover.
pub fn strong_abel_representatives(
    curve: &EllipticCurve,
    lambdas: &[C64],
    mus: &[C64],
) -> Vec<C64> {
    let sl: C64 = lambdas.iter().sum();
    let sm: C64 = mus.iter().sum();
    let (m, n) = curve.nearest_lattice_shift(sm, sl);
    let mut out = lambdas.to_vec();
    if let Some(first) = out.first_mut() {
        *first = curve.deck_translate(*first, m, n);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbelFayReport {
    pub n: usize,
    /// |det M - Fay RHS| / |Fay RHS|.
    pub fay_relative_error: f64,
    /// |theta(sum mu - sum lambda + be)|.
    pub fay_theta: f64,
    pub det_gamma: f64,
    pub gamma_invertible: bool,
    /// Gamma against -(1/theta(be)) D_mu M D_lambda.
    pub factorization_error: f64,
    /// Closed-form Gamma^{-1} with the (-1)^{N-1} correction, entrywise relative error.
    pub inverse_error: f64,
    /// Same, without the correction.
    pub inverse_error_uncorrected: f64,
    pub abel: bool,
    pub intid_constant: Option<[f64; 2]>,
    pub intid_residual: Option<f64>,
    /// Relative residual of the p0-identity (with the (-1)^{N-1} correction) over the probes.
    pub intid2_residual: Option<f64>,
    pub intid2_residual_uncorrected: Option<f64>,
    /// Residues of the p0-identity at p0 = lambda_alpha against the common value.
    pub intid2_residue_error: Option<f64>,
}

struct ScalarPieces {
    be: C64,
    theta_be: C64,
    m: CMat,
    d_mu: Vec<C64>,
    d_lam: Vec<C64>,
}

fn scalar_pieces(
    pf: &PrimeForm,
    lambdas: &[C64],
    mus: &[C64],
    d0: &BaseDivisor,
) -> Result<ScalarPieces> {
    let ev = pf.evaluator();
    let be = FlatLineBundle::for_base_divisor(pf.curve(), d0).be(pf.curve());
    let theta_be = ev.theta(be)?;
    let p0 = d0.p0();
    let n = lambdas.len();
    let mut m = CMat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = ev.theta(mus[i] - lambdas[j] + be)? / pf.e(mus[i], lambdas[j])?;
        }
    }
    let d_mu = mus
        .iter()
        .map(|&mu| Ok(ev.theta(p0 - mu + be)? / pf.e(p0, mu)?))
        .collect::<Result<Vec<_>>>()?;
    let d_lam = lambdas
        .iter()
        .map(|&l| Ok(pf.e(p0, l)? / ev.theta(p0 - l + be)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScalarPieces {
        be,
        theta_be,
        m,
        d_mu,
        d_lam,
    })
}

/// Right-hand side of the Fay determinant formula.
pub fn fay_rhs(pf: &PrimeForm, lambdas: &[C64], mus: &[C64], be: C64) -> Result<C64> {
    let ev = pf.evaluator();
    let n = lambdas.len();
    let sm: C64 = mus.iter().sum();
    let sl: C64 = lambdas.iter().sum();
    let mut v = ev.theta(sm - sl + be)? * ev.theta(be)?.powi(n as i32 - 1);
    for i in 0..n {
        for j in i + 1..n {
            v *= pf.e(mus[i], mus[j])? * pf.e(lambdas[j], lambdas[i])?;
        }
    }
    for &mu in mus {
        for &l in lambdas {
            v /= pf.e(mu, l)?;
        }
    }
    Ok(v)
}

/// Closed-form entries of Gamma^{-1} as printed; alpha indexes zeros, beta poles.
pub fn gamma_inverse_closed_form(
    pf: &PrimeForm,
    lambdas: &[C64],
    mus: &[C64],
    d0: &BaseDivisor,
) -> Result<CMat> {
    let ev = pf.evaluator();
    let be = FlatLineBundle::for_base_divisor(pf.curve(), d0).be(pf.curve());
    let p0 = d0.p0();
    let n = lambdas.len();
    let e = |x: C64, y: C64| pf.e(x, y);
    let sm: C64 = mus.iter().sum();
    let sl: C64 = lambdas.iter().sum();
    let full = ev.theta(sm - sl + be)?;
    let mut out = CMat::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            let mut v = -ev.theta(p0 - lambdas[a] + be)? / e(p0, lambdas[a])?;
            v *= ev.theta(sm - mus[b] - (sl - lambdas[a]) + be)? / full;
            for &mu in mus {
                v *= e(mu, lambdas[a])?;
            }
            for &l in lambdas {
                v *= e(mus[b], l)?;
            }
            for (j, &mu) in mus.iter().enumerate() {
                if j != b {
                    v /= e(mu, mus[b])?;
                }
            }
            for (i, &l) in lambdas.iter().enumerate() {
                if i != a {
                    v /= e(l, lambdas[a])?;
                }
            }
            v /= e(mus[b], lambdas[a])?;
            v *= e(p0, mus[b])? / ev.theta(p0 - mus[b] + be)?;
            out[(a, b)] = v;
        }
    }
    Ok(out)
}

fn max_rel(a: &CMat, b: &CMat) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Fay determinant, Gamma factorization and inverse, and (under the Abel
/// condition) the prime-form identities, for a scalar simple divisor.
pub fn scalar_abel_fay_suite(
    pf: &PrimeForm,
    lambdas: &[C64],
    mus: &[C64],
    d0: &BaseDivisor,
    probes: &[C64],
    tol: &Tolerances,
) -> Result<AbelFayReport> {
    let n = lambdas.len();
    if n == 0 || mus.len() != n || n > 4 {
        return Err(Error::InvalidInput(
            "need 1..=4 zeros and as many poles".into(),
        ));
    }
    let curve = pf.curve();
    let d = scalar_divisor(curve, lambdas, mus, tol)?;
    let system = build_gamma(pf, &d, d0, ResidueMethod::Analytic, tol)?;
    // rows of Gamma follow mus, columns lambdas (entry order is preserved)
    let gamma = &system.gamma;
    let pieces = scalar_pieces(pf, lambdas, mus, d0)?;
    let ev = pf.evaluator();
    let rhs = fay_rhs(pf, lambdas, mus, pieces.be)?;
    let fay_relative_error =
        (pieces.m.determinant() - rhs).norm() / rhs.norm().max(f64::MIN_POSITIVE);
    let sm: C64 = mus.iter().sum();
    let sl: C64 = lambdas.iter().sum();
    let fay_theta = ev.theta(sm - sl + pieces.be)?.norm();
    let det_gamma = gamma.determinant().norm();
    let dm = CMat::from_diagonal(&nalgebra::DVector::from_vec(pieces.d_mu.clone()));
    let dl = CMat::from_diagonal(&nalgebra::DVector::from_vec(pieces.d_lam.clone()));
    let factored = (&dm * &pieces.m * &dl) * (-1.0 / pieces.theta_be);
    let factorization_error = max_rel(gamma, &factored);
    let (gamma_invertible, inverse) = match system.invertibility(tol) {
        Invertibility::Invertible { inverse, .. } => (true, Some(inverse)),
        _ => (false, None),
    };
    let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
    let (inverse_error, inverse_error_uncorrected) = match &inverse {
        Some(inv) => {
            let closed = gamma_inverse_closed_form(pf, lambdas, mus, d0)?;
            (
                max_rel(&(&closed * C64::new(sign, 0.0)), inv),
                max_rel(&closed, inv),
            )
        }
        None => (f64::NAN, f64::NAN),
    };
    let abel = abel_condition(curve, lambdas, mus, tol.lattice);
    let mut report = AbelFayReport {
        n,
        fay_relative_error,
        fay_theta,
        det_gamma,
        gamma_invertible,
        factorization_error,
        inverse_error,
        inverse_error_uncorrected,
        abel,
        intid_constant: None,
        intid_residual: None,
        intid2_residual: None,
        intid2_residual_uncorrected: None,
        intid2_residue_error: None,
    };
    let inv = match (abel, inverse) {
        (true, Some(inv)) => inv,
        _ => return Ok(report),
    };
    let lt = strong_abel_representatives(curve, lambdas, mus);
    let e = |x: C64, y: C64| pf.e(x, y);
    let p0 = d0.p0();
    let prime_ratio = |p: C64| -> Result<C64> {
        let mut v = C64::new(1.0, 0.0);
        for &l in &lt {
            v *= e(p, l)?;
        }
        for &mu in mus {
            v /= e(p, mu)?;
        }
        Ok(v)
    };
    let kconst = 1.0 / prime_ratio(p0)?;
    report.intid_constant = Some([kconst.re, kconst.im]);
    let kernel = system.kernel();
    let mut worst = 0.0f64;
    for &p in probes {
        let mut lhs = C64::new(1.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                lhs += inv[(i, j)] * kernel.f_w(mus[j], p)?;
            }
        }
        let rhs = kconst * prime_ratio(p)?;
        worst = worst.max((lhs - rhs).norm() / rhs.norm().max(1.0));
    }
    report.intid_residual = Some(worst);

    // identity in p0 for fixed p1: sum_a f^{p1 - p0}_{lambda_a}(mu_b) c_a = prod E(mu_j, p0) / prod E(p0, lambda_i)
    let p1 = d0.p1();
    let weight = |a: usize| -> Result<C64> {
        let mut v = C64::new(1.0, 0.0);
        for &mu in mus {
            v *= e(mu, lt[a])?;
        }
        for (i, &l) in lt.iter().enumerate() {
            if i != a {
                v /= e(l, lt[a])?;
            }
        }
        Ok(v)
    };
    let lhs2 = |q0: C64, b: usize| -> Result<C64> {
        let mut acc = C64::new(0.0, 0.0);
        for a in 0..n {
            acc += pf.f_direct(p1, q0, lt[a], mus[b])? * weight(a)?;
        }
        Ok(acc)
    };
    let rhs2 = |q0: C64| -> Result<C64> {
        let mut v = C64::new(1.0, 0.0);
        for &mu in mus {
            v *= e(mu, q0)?;
        }
        for &l in &lt {
            v /= e(q0, l)?;
        }
        Ok(v)
    };
    let (mut w2, mut w2u) = (0.0f64, 0.0f64);
    for &q0 in probes {
        let r = rhs2(q0)?;
        for b in 0..n {
            let l = lhs2(q0, b)?;
            w2 = w2.max((l - r * sign).norm() / r.norm().max(1.0));
            w2u = w2u.max((l - r).norm() / r.norm().max(1.0));
        }
    }
    report.intid2_residual = Some(w2);
    report.intid2_residual_uncorrected = Some(w2u);
    let mut pts = lambdas.to_vec();
    pts.extend_from_slice(mus);
    pts.push(p1);
    let rad = (0.3 * min_separation(curve, &pts)).min(tol.contour_radius);
    let mut rerr = 0.0f64;
    for a in 0..n {
        let g = |q0: C64| lhs2(q0, 0);
        let res = laurent_coefficient(&g, &ContourSpec::new(lt[a], rad), -1)?;
        let common = -weight(a)?;
        rerr = rerr.max((res - common).norm() / common.norm().max(f64::MIN_POSITIVE));
    }
    report.intid2_residue_error = Some(rerr);
    Ok(report)
}

/// Gamma0_ij = -K(bundle; mu_i, lambda_j).
pub fn gamma0_scalar(
    pf: &PrimeForm,
    bundle: &FlatLineBundle,
    mus: &[C64],
    lambdas: &[C64],
) -> Result<CMat> {
    let n = mus.len();
    let mut out = CMat::zeros(n, lambdas.len());
    for i in 0..n {
        for (j, &l) in lambdas.iter().enumerate() {
            out[(i, j)] = -cauchy_kernel(pf, bundle, mus[i], l)?;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Gamma0Comparison {
    /// ||Gamma + D_mu Gamma0(bundle^{-1}) D_lambda|| / ||Gamma||.
    pub scaling_residual: f64,
    /// sigma_2 / sigma_1 of the entrywise ratio Gamma / Gamma0 for the inverse bundle and for the bundle itself.
    pub rank_one_defect_inverse: f64,
    pub rank_one_defect_direct: f64,
    pub gamma_invertible: bool,
    pub gamma0_invertible: bool,
}

fn rank_one_defect(a: &CMat, b: &CMat) -> f64 {
    let q = a.component_div(b);
    let s = singular_values(&q);
    if s.len() < 2 || s[0] == 0.0 {
        0.0
    } else {
        s[1] / s[0]
    }
}

/// Gamma against the Cauchy-kernel matrix Gamma0 under diagonal scalings.
pub fn compare_gamma0(
    pf: &PrimeForm,
    lambdas: &[C64],
    mus: &[C64],
    d0: &BaseDivisor,
    tol: &Tolerances,
) -> Result<Gamma0Comparison> {
    let d = scalar_divisor(pf.curve(), lambdas, mus, tol)?;
    let system = build_gamma(pf, &d, d0, ResidueMethod::Analytic, tol)?;
    let bundle = system.kernel().bundle;
    let g0 = gamma0_scalar(pf, &bundle.inverse(), mus, lambdas)?;
    let g0_direct = gamma0_scalar(pf, &bundle, mus, lambdas)?;
    let p0 = d0.p0();
    let dm = mus
        .iter()
        .map(|&mu| cauchy_kernel(pf, &bundle, mu, p0))
        .collect::<Result<Vec<_>>>()?;
    let dl = lambdas
        .iter()
        .map(|&l| Ok(1.0 / cauchy_kernel(pf, &bundle, l, p0)?))
        .collect::<Result<Vec<_>>>()?;
    let dm = CMat::from_diagonal(&nalgebra::DVector::from_vec(dm));
    let dl = CMat::from_diagonal(&nalgebra::DVector::from_vec(dl));
    let scaled = -(&dm * &g0 * &dl);
    let scaling_residual = max_rel(&scaled, &system.gamma);
    let gamma_invertible = matches!(system.invertibility(tol), Invertibility::Invertible { .. });
    let s0 = singular_values(&g0);
    let gamma0_invertible = s0.last().is_some_and(|&x| x > tol.gamma_sigma * s0[0]);
    Ok(Gamma0Comparison {
        scaling_residual,
        rank_one_defect_inverse: rank_one_defect(&system.gamma, &g0),
        rank_one_defect_direct: rank_one_defect(&system.gamma, &g0_direct),
        gamma_invertible,
        gamma0_invertible,
    })
}
