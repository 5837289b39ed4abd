//! Prime form, Cauchy kernels of flat line bundles, and the canonical
//! functions f^{D0}_{kw} at genus one.
//!
//! Conventions: E(p, q) = theta1(q - p) / theta1'(0) with theta1 = theta[1/2, 1/2];
//! K(chi; p, q) has a simple pole at p = q with residue +1 in p; for
//! D0 = p1 - p0 the bundle is be = p1 - p0 + (1 + tau)/2.

use crate::divisors::BaseDivisor;
use crate::error::{Error, Result};
use crate::jet::{Jet, Jet2};
use crate::numerics::{laurent_coefficient, nilpotency_index, CMat, ContourSpec, C64, TWO_PI_I};
use crate::theta::{Characteristic, ThetaEvaluator};
use crate::torus::EllipticCurve;

#[derive(Debug, Clone)]
pub struct PrimeForm {
    ev: ThetaEvaluator,
    d0: C64,
}

impl PrimeForm {
    pub fn new(ev: &ThetaEvaluator) -> Result<Self> {
        let d0 = ev.char_derivs(Characteristic::odd(), C64::new(0.0, 0.0), 1)?[1];
        Ok(PrimeForm { ev: ev.clone(), d0 })
    }

    pub fn evaluator(&self) -> &ThetaEvaluator {
        &self.ev
    }

    pub fn curve(&self) -> &EllipticCurve {
        self.ev.curve()
    }

    /// theta1'(0).
    pub fn slope(&self) -> C64 {
        self.d0
    }

    pub fn theta1(&self, z: C64) -> Result<C64> {
        self.ev.theta_char(Characteristic::odd(), z)
    }

    /// Taylor jet of theta1 at z.
    pub fn theta1_jet(&self, z: C64, order: usize) -> Result<Jet> {
        Ok(Jet::from_derivatives(&self.ev.char_derivs(
            Characteristic::odd(),
            z,
            order,
        )?))
    }

    pub fn e(&self, p: C64, q: C64) -> Result<C64> {
        if self.curve().lattice_distance(p, q) == 0.0 {
            return Ok(C64::new(0.0, 0.0));
        }
        Ok(self.theta1(q - p)? / self.d0)
    }

    /// f^{p1 - p0}_w(p) as an explicit theta quotient; the fourth point
    /// w + p1 - p0 is forced by Abel's theorem.
    pub fn f_direct(&self, p1: C64, p0: C64, w: C64, p: C64) -> Result<C64> {
        let t = |z: C64| self.theta1(z);
        let den = t(w - p0)? * t(p0 - p1)? * t(p - w)? * t(p - p1)?;
        if den.norm() == 0.0 {
            return Err(Error::Pole(format!("p = {p}, w = {w}")));
        }
        Ok(self.d0 * t(w - p1)? * t(p - p0)? * t(p - w - p1 + p0)? / den)
    }
}

/// chi(A) = exp(-2 pi i a), chi(B) = exp(2 pi i b); be = b + tau a.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatLineBundle {
    pub a: f64,
    pub b: f64,
}

impl FlatLineBundle {
    pub fn new(a: f64, b: f64) -> Self {
        let ch = Characteristic::new(a, b);
        FlatLineBundle { a: ch.a, b: ch.b }
    }

    pub fn from_be(curve: &EllipticCurve, be: C64) -> Self {
        let (s, t) = curve.coords(be);
        Self::new(t, s)
    }

    pub fn be(&self, curve: &EllipticCurve) -> C64 {
        curve.from_coords(self.b, self.a)
    }

    pub fn characteristic(&self) -> Characteristic {
        Characteristic {
            a: self.a,
            b: self.b,
        }
    }

    /// The bundle for D0 = p1 - p0.
    pub fn for_base_divisor(curve: &EllipticCurve, d0: &BaseDivisor) -> Self {
        Self::from_be(curve, d0.p1() - d0.p0() + curve.delta())
    }

    pub fn inverse(&self) -> Self {
        Self::new(-self.a, -self.b)
    }
}

const DEGENERATE: f64 = 1e-10;

/// K(chi; p, q) = theta[a,b](q - p) / (theta[a,b](0) E(q, p)).
pub fn cauchy_kernel(pf: &PrimeForm, bundle: &FlatLineBundle, p: C64, q: C64) -> Result<C64> {
    let ev = pf.evaluator();
    let ch = bundle.characteristic();
    let n0 = ev.theta_char(ch, C64::new(0.0, 0.0))?;
    if n0.norm() < DEGENERATE {
        return Err(Error::Degenerate(
            "theta(be) vanishes; choose another base divisor".into(),
        ));
    }
    if pf.curve().lattice_distance(p, q) < 1e-13 {
        return Err(Error::Pole(format!("diagonal p = q = {p}")));
    }
    Ok(ev.theta_char(ch, q - p)? / (n0 * pf.e(q, p)?))
}

/// exp(2 pi i a (q - p)) theta(q - p + be) / (theta(be) E(q, p)).
pub fn cauchy_kernel_alt(pf: &PrimeForm, bundle: &FlatLineBundle, p: C64, q: C64) -> Result<C64> {
    let ev = pf.evaluator();
    let be = bundle.be(pf.curve());
    let n0 = ev.theta(be)?;
    if n0.norm() < DEGENERATE {
        return Err(Error::Degenerate(
            "theta(be) vanishes; choose another base divisor".into(),
        ));
    }
    if pf.curve().lattice_distance(p, q) < 1e-13 {
        return Err(Error::Pole(format!("diagonal p = q = {p}")));
    }
    Ok((TWO_PI_I * bundle.a * (q - p)).exp() * ev.theta(q - p + be)? / (n0 * pf.e(q, p)?))
}

/// The canonical functions attached to a base divisor D0 = p1 - p0.
#[derive(Debug, Clone)]
pub struct BaseKernel {
    pf: PrimeForm,
    pub d0: BaseDivisor,
    pub bundle: FlatLineBundle,
}

impl BaseKernel {
    pub fn new(pf: &PrimeForm, d0: &BaseDivisor) -> Result<Self> {
        let bundle = FlatLineBundle::for_base_divisor(pf.curve(), d0);
        let th = pf.evaluator().theta(bundle.be(pf.curve()))?;
        if th.norm() < DEGENERATE {
            return Err(Error::Degenerate(
                "the bundle of D0 lands on a theta zero; choose another base divisor".into(),
            ));
        }
        Ok(BaseKernel {
            pf: pf.clone(),
            d0: *d0,
            bundle,
        })
    }

    pub fn prime_form(&self) -> &PrimeForm {
        &self.pf
    }

    pub fn curve(&self) -> &EllipticCurve {
        self.pf.curve()
    }

    fn p0(&self) -> C64 {
        self.d0.p0()
    }

    fn p1(&self) -> C64 {
        self.d0.p1()
    }

    /// Theta quotient with residue 1 at w, zero at p0, simple pole at p1.
    pub fn f_w(&self, w: C64, p: C64) -> Result<C64> {
        self.pf.f_direct(self.p1(), self.p0(), w, p)
    }

    /// K(p, w) K(w, p0) / K(p, p0).
    pub fn f_w_cauchy(&self, w: C64, p: C64) -> Result<C64> {
        let k = |x: C64, y: C64| cauchy_kernel(&self.pf, &self.bundle, x, y);
        Ok(k(p, w)? * k(w, self.p0())? / k(p, self.p0())?)
    }

    /// Fully expanded theta / prime-form expression.
    pub fn f_w_expanded(&self, w: C64, p: C64) -> Result<C64> {
        let ev = self.pf.evaluator();
        let be = self.bundle.be(self.curve());
        let p0 = self.p0();
        let e = |x: C64, y: C64| self.pf.e(x, y);
        Ok(ev.theta(w - p + be)? * e(p0, p)? * ev.theta(p0 - w + be)?
            / (ev.theta(be)? * e(w, p)? * ev.theta(p0 - p + be)? * e(p0, w)?))
    }

    /// f_{kw}(p) for k = 1..=kmax: Taylor coefficients in w of f_w(p).
    pub fn f_kw_all(&self, kmax: usize, w: C64, p: C64) -> Result<Vec<C64>> {
        if kmax == 0 || kmax > 6 {
            return Err(Error::InvalidInput(format!("k = {kmax} outside 1..=6")));
        }
        let (p0, p1) = (self.p0(), self.p1());
        let o = kmax - 1;
        let j = |z: C64| self.pf.theta1_jet(z, o);
        let num = &(&j(w - p1)? * &j(p - w - p1 + p0)?.reflect())
            .scale(self.pf.slope() * self.pf.theta1(p - p0)?);
        let den = &(&j(w - p0)? * &j(p - w)?.reflect())
            .scale(self.pf.theta1(p0 - p1)? * self.pf.theta1(p - p1)?);
        Ok(num.div(den)?.c)
    }

    pub fn f_kw(&self, k: usize, w: C64, p: C64) -> Result<C64> {
        Ok(self.f_kw_all(k, w, p)?[k - 1])
    }

    /// f_{w,A}(p) = sum_k f_{(k+1)w}(p) A^k for nilpotent A.
    pub fn f_wa(&self, w: C64, a: &CMat, p: C64) -> Result<CMat> {
        let n = a.nrows();
        if n == 0 {
            return Ok(CMat::zeros(0, 0));
        }
        if nilpotency_index(a, 1e-10).is_none() {
            return Err(Error::InvalidInput("A must be nilpotent".into()));
        }
        let f = self.f_kw_all(n, w, p)?;
        let mut out = CMat::zeros(n, n);
        let mut pow = CMat::identity(n, n);
        for fk in f {
            out += &pow * fk;
            pow = &pow * a;
        }
        Ok(out)
    }

    /// Bivariate jet of (h_w, h_p) -> f_{w + h_w}(p + h_p) at (w, p), w != p.
    pub fn jet2(&self, w: C64, p: C64, nx: usize, ny: usize) -> Result<Jet2> {
        let (p0, p1) = (self.p0(), self.p1());
        let o = nx + ny;
        let j = |z: C64| self.pf.theta1_jet(z, o);
        let ix = |z: C64| -> Result<Jet2> { Ok(Jet2::in_x(&j(z)?.truncate(nx), ny)) };
        let iy = |z: C64| -> Result<Jet2> { Ok(Jet2::in_y(&j(z)?.truncate(ny), nx)) };
        let df = |z: C64| -> Result<Jet2> { Ok(Jet2::of_difference(&j(z)?, nx, ny)) };
        let mut num = &ix(w - p1)? * &iy(p - p0)?;
        num = &num * &df(p - w - p1 + p0)?;
        let mut den = &ix(w - p0)? * &df(p - w)?;
        den = &den * &iy(p - p1)?;
        let c = self.pf.slope() / self.pf.theta1(p0 - p1)?;
        let mut q = num.div(&den)?;
        for row in q.c.iter_mut() {
            for v in row.iter_mut() {
                *v *= c;
            }
        }
        Ok(q)
    }
}

/// res_{p0 = w} of p0 -> f^{D - p0}_w(p) with D = {p1}, by contour.
pub fn residue_in_base_point(pf: &PrimeForm, p1: C64, w: C64, p: C64, radius: f64) -> Result<C64> {
    let f = |p0: C64| pf.f_direct(p1, p0, w, p);
    laurent_coefficient(&f, &ContourSpec::new(w, radius), -1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuityReport {
    pub epsilons: Vec<f64>,
    pub deviations: Vec<f64>,
    /// deviation(eps_0) / deviation(eps_1) for consecutive pairs.
    pub ratios: Vec<f64>,
}

/// Which point of D0 = p1 - p0 is moved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Perturb {
    P1,
    P0,
}

/// Deviation of f^{D0}_{kw}(p) when a support point of D0 moves by eps * direction.
///
/// For k >= 2 the function does not depend on p1 at all (the p1 pole is
/// killed by the w-derivative), so moving p1 only probes k = 1.
#[allow(clippy::too_many_arguments)]
pub fn continuity_spot_check(
    pf: &PrimeForm,
    d0: &BaseDivisor,
    which: Perturb,
    k: usize,
    w: C64,
    p: C64,
    direction: C64,
    epsilons: &[f64],
) -> Result<ContinuityReport> {
    let base = BaseKernel::new(pf, d0)?.f_kw(k, w, p)?;
    let mut deviations = Vec::new();
    for &eps in epsilons {
        let shift = |q: crate::torus::TorusPoint| crate::torus::TorusPoint {
            rep: q.rep + direction * eps,
        };
        let moved = match which {
            Perturb::P1 => BaseDivisor {
                poles: [(shift(d0.poles[0].0), 1)],
                base_point: d0.base_point,
            },
            Perturb::P0 => BaseDivisor {
                poles: d0.poles,
                base_point: shift(d0.base_point),
            },
        };
        let v = BaseKernel::new(pf, &moved)?.f_kw(k, w, p)?;
        deviations.push((v - base).norm());
    }
    let ratios = deviations.windows(2).map(|d| d[0] / d[1]).collect();
    Ok(ContinuityReport {
        epsilons: epsilons.to_vec(),
        deviations,
        ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Tolerances;
    use crate::numerics::{c, jordan_block, laurent_scalar};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pf() -> PrimeForm {
        let curve = EllipticCurve::new(c(0.0, 1.0)).unwrap();
        PrimeForm::new(&ThetaEvaluator::new(curve, &Tolerances::default())).unwrap()
    }

    fn kernel(p1: C64, p0: C64) -> BaseKernel {
        let pf = pf();
        let d0 = BaseDivisor::new(pf.curve(), p1, p0, &Tolerances::default()).unwrap();
        BaseKernel::new(&pf, &d0).unwrap()
    }

    #[test]
    fn prime_form_basics() {
        let pf = pf();
        let p = c(0.3, 0.2);
        assert_eq!(pf.e(p, p).unwrap().norm(), 0.0);
        let q = c(0.71, 0.55);
        assert!((pf.e(p, q).unwrap() + pf.e(q, p).unwrap()).norm() < 1e-10);
        let h = 1e-3;
        assert!((pf.e(p, p + h).unwrap() / h - 1.0).norm() < 1e-4);
    }

    #[test]
    fn cauchy_kernel_forms_and_residue() {
        let pf = pf();
        let b = FlatLineBundle::new(0.13, 0.41);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let p = pf.curve().random_point(&mut rng);
            let q = pf.curve().random_point(&mut rng);
            let k1 = cauchy_kernel(&pf, &b, p, q).unwrap();
            let k2 = cauchy_kernel_alt(&pf, &b, p, q).unwrap();
            assert!((k1 - k2).norm() < 1e-9 * k1.norm().max(1.0));
        }
        let q = c(0.4, 0.3);
        let f = |p: C64| cauchy_kernel(&pf, &b, p, q);
        let res = laurent_coefficient(&f, &ContourSpec::new(q, 0.1), -1).unwrap();
        assert!((res - 1.0).norm() < 1e-8);
    }

    #[test]
    fn cauchy_kernel_multipliers_golden() {
        // K(p + 1, q) = -exp(-2 pi i a) K and K(p + tau, q) = -exp(2 pi i b) K
        let pf = pf();
        let tau = pf.curve().tau();
        let b = FlatLineBundle::new(0.13, 0.41);
        let (p, q) = (c(0.2, 0.1), c(0.6, 0.7));
        let k = cauchy_kernel(&pf, &b, p, q).unwrap();
        let m1 = cauchy_kernel(&pf, &b, p + 1.0, q).unwrap() / k;
        let mt = cauchy_kernel(&pf, &b, p + tau, q).unwrap() / k;
        assert!((m1 + (-TWO_PI_I * b.a).exp()).norm() < 1e-8);
        assert!((mt + (TWO_PI_I * b.b).exp()).norm() < 1e-8);
    }

    #[test]
    fn degenerate_bundle_is_rejected() {
        let pf = pf();
        // theta[a,b](0) = 0 exactly at be = Delta
        let b = FlatLineBundle::new(0.5, 0.5);
        assert!(matches!(
            cauchy_kernel(&pf, &b, c(0.1, 0.1), c(0.5, 0.5)),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn f_w_three_routes_agree() {
        let k = kernel(c(0.3, 0.6), c(0.9, 0.1));
        let w = c(0.45, 0.25);
        for p in [c(0.1, 0.8), c(0.7, 0.4), c(0.55, 0.9)] {
            let a = k.f_w(w, p).unwrap();
            let b = k.f_w_cauchy(w, p).unwrap();
            let e = k.f_w_expanded(w, p).unwrap();
            assert!((a - b).norm() < 1e-8 * a.norm().max(1.0), "{a} {b}");
            assert!((a - e).norm() < 1e-8 * a.norm().max(1.0), "{a} {e}");
        }
    }

    #[test]
    fn f_w_divisor_properties() {
        let k = kernel(c(0.3, 0.6), c(0.9, 0.1));
        let w = c(0.45, 0.25);
        let f = |p: C64| k.f_w(w, p);
        let res = laurent_coefficient(&f, &ContourSpec::new(w, 0.1), -1).unwrap();
        assert!((res - 1.0).norm() < 1e-8);
        assert!(k.f_w(w, c(0.9, 0.1)).unwrap().norm() < 1e-9);
        let r1 = laurent_coefficient(&f, &ContourSpec::new(c(0.3, 0.6), 0.1), -1).unwrap();
        assert!((r1 + 1.0).norm() < 1e-8, "residue at p1 {r1}");
        let tau = k.curve().tau();
        let p = c(0.2, 0.45);
        assert!((k.f_w(w, p + 1.0).unwrap() - f(p).unwrap()).norm() < 1e-8);
        assert!((k.f_w(w, p + tau).unwrap() - f(p).unwrap()).norm() < 1e-8);
    }

    #[test]
    fn f_kw_principal_parts_and_finite_difference() {
        let k = kernel(c(0.3, 0.6), c(0.9, 0.1));
        let w = c(0.45, 0.25);
        let p = c(0.15, 0.7);
        assert!((k.f_kw(1, w, p).unwrap() - k.f_w(w, p).unwrap()).norm() < 1e-12);
        let h = 1e-4;
        let fd = (k.f_w(w + h, p).unwrap() - k.f_w(w - h, p).unwrap()) / (2.0 * h);
        let an = k.f_kw(2, w, p).unwrap();
        assert!((fd - an).norm() < 1e-5 * an.norm().max(1.0));
        for kk in 2..=4usize {
            let f = |u: C64| k.f_kw(kk, w, u);
            let co = laurent_scalar(&f, &ContourSpec::new(w, 0.1), -(kk as i32) - 1, -1).unwrap();
            for (i, v) in co.iter().enumerate() {
                let order = i as i32 - kk as i32 - 1;
                let want = if order == -(kk as i32) { 1.0 } else { 0.0 };
                assert!((v - want).norm() < 1e-7, "k {kk} order {order}: {v}");
            }
        }
    }

    #[test]
    fn f_wa_specializations() {
        let k = kernel(c(0.3, 0.6), c(0.9, 0.1));
        let w = c(0.45, 0.25);
        let p = c(0.15, 0.7);
        let a0 = CMat::zeros(1, 1);
        assert!((k.f_wa(w, &a0, p).unwrap()[(0, 0)] - k.f_w(w, p).unwrap()).norm() < 1e-13);
        let n = jordan_block(c(0.0, 0.0), 2);
        let g = |u: C64| -> Result<CMat> {
            let z = u - w;
            let inv = (CMat::identity(2, 2) * z - &n).try_inverse().unwrap();
            Ok(k.f_wa(w, &n, u)? - inv)
        };
        let (co, l) =
            crate::nullpole::matrix_laurent(&g, w, 0.1, -3, -1, &Tolerances::default()).unwrap();
        for m in &co {
            assert!(m.norm() < 1e-7 * l.scale.max(1.0));
        }
        let s = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(0.5, 1.0), c(-1.0, 0.0)]);
        let si = s.clone().try_inverse().unwrap();
        let lhs = k.f_wa(w, &(&s * &n * &si), p).unwrap();
        let rhs = &s * k.f_wa(w, &n, p).unwrap() * &si;
        assert!((lhs - rhs).norm() < 1e-9);
        assert!(k.f_wa(w, &CMat::identity(1, 1), p).is_err());
    }

    #[test]
    fn jet2_matches_direct_expansion() {
        let k = kernel(c(0.3, 0.6), c(0.9, 0.1));
        let (w, p) = (c(0.45, 0.25), c(0.15, 0.7));
        let j = k.jet2(w, p, 2, 2).unwrap();
        for a in 0..=2i32 {
            for b in 0..=2i32 {
                let inner = |x: C64| -> Result<C64> {
                    let g = |y: C64| k.f_w(x, y);
                    laurent_coefficient(&g, &ContourSpec::new(p, 0.05), b)
                };
                let v = laurent_coefficient(&inner, &ContourSpec::new(w, 0.05), a).unwrap();
                let got = j.c[a as usize][b as usize];
                assert!(
                    (got - v).norm() < 1e-9 * v.norm().max(1.0),
                    "{a} {b}: {got} vs {v}"
                );
            }
        }
        // x-only column reproduces f_kw
        for kk in 1..=3 {
            assert!((j.c[kk - 1][0] - k.f_kw(kk, w, p).unwrap()).norm() < 1e-10);
        }
    }

    #[test]
    fn base_point_residue_and_symmetry() {
        let pf = pf();
        let (p1, w, p) = (c(0.3, 0.6), c(0.1, 0.0), c(0.8, 0.0));
        let r = residue_in_base_point(&pf, p1, w, p, 0.05).unwrap();
        assert!((r + 1.0).norm() < 1e-7, "{r}");
        let p0 = c(0.62, 0.33);
        let lhs = pf.f_direct(p1, p0, w, p).unwrap();
        let rhs = -pf.f_direct(p - p1 + p0, p, w, p0).unwrap();
        assert!((lhs - rhs).norm() < 1e-9 * lhs.norm().max(1.0));
        assert!(pf.f_direct(p1, c(0.5, 0.9), w, p).unwrap().is_finite());
    }

    #[test]
    fn continuity_is_linear() {
        let pf = pf();
        let d0 =
            BaseDivisor::new(pf.curve(), c(0.3, 0.6), c(0.9, 0.1), &Tolerances::default()).unwrap();
        let (w, p, dir) = (c(0.45, 0.25), c(0.15, 0.7), c(0.6, 0.8));
        let eps = [1e-2, 1e-3, 1e-4, 0.0];
        for (which, k) in [
            (Perturb::P1, 1),
            (Perturb::P0, 1),
            (Perturb::P0, 2),
            (Perturb::P0, 3),
        ] {
            let rep = continuity_spot_check(&pf, &d0, which, k, w, p, dir, &eps).unwrap();
            assert!((rep.ratios[1] - 10.0).abs() < 3.0, "{:?}", rep);
            assert_eq!(rep.deviations[3], 0.0);
            assert!(rep.deviations[0].is_finite() && rep.deviations[0] < 1.0);
        }
        let flat = continuity_spot_check(&pf, &d0, Perturb::P1, 2, w, p, dir, &eps).unwrap();
        assert!(flat.deviations.iter().all(|d| *d < 1e-12));
    }
}
