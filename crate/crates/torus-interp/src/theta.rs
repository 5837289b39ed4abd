//! Genus-one theta series.
//!
//! theta(u) = sum_n exp 2 pi i (n^2 tau / 2 + n u), summed over |n| <= N with N
//! chosen from the tail bound exp(-pi Im(tau) N^2 + 2 pi N S) < tail on the
//! strip |Im u| <= S.

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::numerics::{CMat, C64, TWO_PI_I};
use crate::torus::EllipticCurve;

use std::f64::consts::PI;

/// Characteristic (a, b), both reduced into [0, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Characteristic {
    pub a: f64,
    pub b: f64,
}

impl Characteristic {
    pub fn new(a: f64, b: f64) -> Self {
        let r = |x: f64| {
            let y = x - x.floor();
            if y >= 1.0 {
                0.0
            } else {
                y
            }
        };
        Characteristic { a: r(a), b: r(b) }
    }

    pub fn odd() -> Self {
        Characteristic { a: 0.5, b: 0.5 }
    }
}

#[derive(Debug, Clone)]
pub struct ThetaEvaluator {
    curve: EllipticCurve,
    n_terms: i64,
    tail: f64,
    strip: f64,
    max_derivative: usize,
}

impl ThetaEvaluator {
    pub fn new(curve: EllipticCurve, tol: &Tolerances) -> Self {
        let strip = tol.strip_factor * curve.tau().im;
        Self::with_strip(curve, strip, tol.tail, tol.max_derivative)
    }

    pub fn with_strip(curve: EllipticCurve, strip: f64, tail: f64, max_derivative: usize) -> Self {
        let y = curve.tau().im;
        // terms must already be decreasing at N; the +1 covers the shift by a in
        // characteristic series
        let mut n = (strip / y).ceil() as i64 + 2;
        while (-PI * y * (n * n) as f64 + 2.0 * PI * n as f64 * strip) > tail.ln() {
            n += 1;
        }
        ThetaEvaluator {
            curve,
            n_terms: n,
            tail,
            strip,
            max_derivative,
        }
    }

    /// Same curve and strip with a different truncation, used for doubling checks.
    pub fn with_terms(&self, n_terms: i64) -> Self {
        ThetaEvaluator {
            n_terms,
            ..self.clone()
        }
    }

    pub fn curve(&self) -> &EllipticCurve {
        &self.curve
    }

    pub fn terms(&self) -> i64 {
        self.n_terms
    }

    pub fn tail(&self) -> f64 {
        self.tail
    }

    pub fn strip(&self) -> f64 {
        self.strip
    }

    pub fn max_derivative(&self) -> usize {
        self.max_derivative
    }

    fn check_strip(&self, u: C64) -> Result<()> {
        if !u.is_finite() || u.im.abs() > self.strip * (1.0 + 1e-12) {
            return Err(Error::StripViolation {
                arg: format!("{u}"),
                bound: self.strip,
            });
        }
        Ok(())
    }

    fn check_order(&self, k: usize) -> Result<()> {
        if k > self.max_derivative {
            return Err(Error::DerivativeOrder {
                requested: k,
                cap: self.max_derivative,
            });
        }
        Ok(())
    }

    fn term(&self, n: f64, u: C64) -> C64 {
        (TWO_PI_I * (self.curve.tau() * (n * n * 0.5) + u * n)).exp()
    }

    pub fn theta(&self, u: C64) -> Result<C64> {
        self.check_strip(u)?;
        let mut s = C64::new(1.0, 0.0);
        for n in 1..=self.n_terms {
            let n = n as f64;
            s += self.term(n, u) + self.term(-n, u);
        }
        Ok(s)
    }

    /// theta^(k)(u) for k = 0..=kmax.
    pub fn derivs(&self, u: C64, kmax: usize) -> Result<Vec<C64>> {
        self.check_strip(u)?;
        self.check_order(kmax)?;
        let mut out = vec![C64::new(0.0, 0.0); kmax + 1];
        out[0] = C64::new(1.0, 0.0);
        for n in 1..=self.n_terms {
            let n = n as f64;
            let tp = self.term(n, u);
            let tm = self.term(-n, u);
            let f = TWO_PI_I * n;
            let mut pp = C64::new(1.0, 0.0);
            let mut pm = C64::new(1.0, 0.0);
            for v in out.iter_mut() {
                *v += tp * pp + tm * pm;
                pp *= f;
                pm *= -f;
            }
        }
        Ok(out)
    }

    pub fn deriv(&self, u: C64, k: usize) -> Result<C64> {
        Ok(self.derivs(u, k)?[k])
    }

    /// Direct series sum_m exp(pi i tau (m+a)^2 + 2 pi i (z+b)(m+a)), with derivatives in z.
    pub fn char_derivs(&self, ch: Characteristic, z: C64, kmax: usize) -> Result<Vec<C64>> {
        self.check_strip(z)?;
        self.check_order(kmax)?;
        let tau = self.curve.tau();
        let mut out = vec![C64::new(0.0, 0.0); kmax + 1];
        for m in -(self.n_terms + 1)..=(self.n_terms + 1) {
            let ma = m as f64 + ch.a;
            let t = (C64::new(0.0, PI) * tau * (ma * ma) + TWO_PI_I * (z + ch.b) * ma).exp();
            let f = TWO_PI_I * ma;
            let mut p = C64::new(1.0, 0.0);
            for v in out.iter_mut() {
                *v += t * p;
                p *= f;
            }
        }
        Ok(out)
    }

    pub fn theta_char(&self, ch: Characteristic, z: C64) -> Result<C64> {
        Ok(self.char_derivs(ch, z, 0)?[0])
    }

    /// exp(pi i tau a^2 + 2 pi i (z+b) a) theta(z + tau a + b).
    pub fn theta_char_reduced(&self, ch: Characteristic, z: C64) -> Result<C64> {
        let tau = self.curve.tau();
        let pre = (C64::new(0.0, PI) * tau * (ch.a * ch.a) + TWO_PI_I * (z + ch.b) * ch.a).exp();
        Ok(pre * self.theta(z + tau * ch.a + ch.b)?)
    }

    /// theta(u)^{-1} sum_n V^{-n} exp 2 pi i (n^2 tau/2 + n u).
    pub fn matrix_theta_triv(&self, v: &CMat, u: C64) -> Result<CMat> {
        self.check_strip(u)?;
        let r = v.nrows();
        if r != v.ncols() || r == 0 {
            return Err(Error::InvalidInput("V must be square and nonempty".into()));
        }
        let vinv = v
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular("V not invertible".into()))?;
        let th = self.theta(u)?;
        if th.norm() < 1e-10 {
            return Err(Error::Pole(format!("{u}: theta vanishes")));
        }
        let mut s = CMat::identity(r, r);
        let mut pos = CMat::identity(r, r);
        let mut neg = CMat::identity(r, r);
        for n in 1..=self.n_terms {
            pos = &pos * &vinv;
            neg = &neg * v;
            let nf = n as f64;
            s += &pos * self.term(nf, u) + &neg * self.term(-nf, u);
        }
        Ok(s / th)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::c;
    use proptest::prelude::*;

    fn ev(tau: C64) -> ThetaEvaluator {
        ThetaEvaluator::new(EllipticCurve::new(tau).unwrap(), &Tolerances::default())
    }

    #[test]
    fn vanishes_at_half_period() {
        for tau in [c(0.0, 1.0), c(0.0, 2.0), c(0.3, 0.8)] {
            let e = ev(tau);
            let d = e.curve().delta();
            assert!(e.theta(d).unwrap().norm() < 1e-12, "tau = {tau}");
        }
    }

    #[test]
    fn derivative_order_zero_and_parity() {
        let e = ev(c(0.0, 1.0));
        let u = c(0.3, 0.1);
        assert_eq!(e.deriv(u, 0).unwrap(), e.theta(u).unwrap());
        assert!(e.deriv(c(0.0, 0.0), 1).unwrap().norm() < 1e-13);
        assert!(matches!(e.deriv(u, 9), Err(Error::DerivativeOrder { .. })));
    }

    #[test]
    fn derivative_matches_central_difference() {
        let e = ev(c(0.0, 1.0));
        let u = c(0.3, 0.0);
        let h = 1e-5;
        let fd = (e.theta(u + h).unwrap() - e.theta(u - h).unwrap()) / (2.0 * h);
        let d = e.deriv(u, 1).unwrap();
        assert!((fd - d).norm() / d.norm() < 1e-6);
    }

    #[test]
    fn strip_violation_is_reported() {
        let e = ev(c(0.0, 1.0));
        assert!(matches!(
            e.theta(c(0.0, 10.0)),
            Err(Error::StripViolation { .. })
        ));
    }

    #[test]
    fn characteristic_specializations() {
        let e = ev(c(0.0, 1.0));
        let z = c(0.21, -0.33);
        let t0 = e.theta_char(Characteristic::new(0.0, 0.0), z).unwrap();
        assert!((t0 - e.theta(z).unwrap()).norm() < 1e-13);
        assert!(
            e.theta_char(Characteristic::odd(), c(0.0, 0.0))
                .unwrap()
                .norm()
                < 1e-13
        );
        let ch = Characteristic::new(0.13, 0.41);
        let a = e.theta_char(ch, z).unwrap();
        let b = e.theta_char_reduced(ch, z).unwrap();
        assert!((a - b).norm() < 1e-11 * a.norm().max(1.0));
    }

    #[test]
    fn characteristic_period_one() {
        let e = ev(c(0.0, 1.0));
        let ch = Characteristic::new(0.13, 0.41);
        for z in [c(0.1, 0.2), c(-0.4, 0.5), c(0.77, -0.3)] {
            let lhs = e.theta_char(ch, z + 1.0).unwrap();
            let rhs = (TWO_PI_I * ch.a).exp() * e.theta_char(ch, z).unwrap();
            assert!((lhs - rhs).norm() < 1e-10);
        }
    }

    #[test]
    fn identity_matrix_collapses() {
        let e = ev(c(0.0, 1.0));
        let g = e
            .matrix_theta_triv(&CMat::identity(3, 3), c(0.2, 0.3))
            .unwrap();
        assert!((g - CMat::identity(3, 3)).norm() < 1e-12);
    }

    proptest! {
        #[test]
        fn quasi_periodicity(s in 0.0f64..1.0, t in 0.0f64..1.0, which in 0usize..3) {
            let tau = [c(0.0, 1.0), c(0.0, 2.0), c(0.3, 0.8)][which];
            let e = ev(tau);
            let u = e.curve().from_coords(s, t);
            let th = e.theta(u).unwrap();
            let shifted = e.theta(u + tau).unwrap();
            let factor = (-(C64::new(0.0, PI) * tau) - TWO_PI_I * u).exp();
            let scale = th.norm().max(shifted.norm()).max(1.0);
            prop_assert!((shifted - factor * th).norm() < 1e-11 * scale);
            prop_assert!((e.theta(u + 1.0).unwrap() - th).norm() < 1e-11 * scale);
        }

        #[test]
        fn evenness_is_exact(re in -1.0f64..1.0, im in -1.5f64..1.5) {
            let e = ev(c(0.3, 0.8));
            let u = c(re, im);
            prop_assert_eq!(e.theta(u).unwrap(), e.theta(-u).unwrap());
        }

        #[test]
        fn truncation_doubling_is_stable(re in -1.0f64..1.0, im in -1.0f64..1.0) {
            let e = ev(c(0.0, 1.0));
            let u = c(re, im);
            let a = e.theta(u).unwrap();
            let b = e.with_terms(2 * e.terms()).theta(u).unwrap();
            prop_assert!((a - b).norm() < 1e-12 * a.norm().max(1.0));
        }
    }
}
