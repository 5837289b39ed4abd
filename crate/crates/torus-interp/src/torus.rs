//! The curve C/(Z + tau Z) and its fundamental parallelogram.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::C64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CurveRepr", into = "CurveRepr")]
pub struct EllipticCurve {
    tau: C64,
}

#[derive(Serialize, Deserialize)]
struct CurveRepr {
    tau: [f64; 2],
}

impl TryFrom<CurveRepr> for EllipticCurve {
    type Error = Error;
    fn try_from(r: CurveRepr) -> Result<Self> {
        EllipticCurve::new(C64::new(r.tau[0], r.tau[1]))
    }
}

impl From<EllipticCurve> for CurveRepr {
    fn from(c: EllipticCurve) -> Self {
        CurveRepr {
            tau: [c.tau.re, c.tau.im],
        }
    }
}

/// Unique representative s + t tau with s, t in [0, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusPoint {
    pub rep: C64,
}

impl EllipticCurve {
    pub fn new(tau: C64) -> Result<Self> {
        if !(tau.im > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidInput(format!(
                "tau = {tau} must have positive imaginary part"
            )));
        }
        Ok(EllipticCurve { tau })
    }

    pub fn tau(&self) -> C64 {
        self.tau
    }

    /// The theta zero (1 + tau)/2.
    pub fn delta(&self) -> C64 {
        (1.0 + self.tau) * 0.5
    }

    /// Real coordinates (s, t) with u = s + t tau.
    pub fn coords(&self, u: C64) -> (f64, f64) {
        let t = u.im / self.tau.im;
        let s = u.re - t * self.tau.re;
        (s, t)
    }

    pub fn from_coords(&self, s: f64, t: f64) -> C64 {
        C64::new(s, 0.0) + self.tau * t
    }

    pub fn reduce(&self, u: C64) -> TorusPoint {
        const EPS: f64 = 1e-13;
        let (s, t) = self.coords(u);
        let inside = |x: f64| (-EPS..1.0 - EPS).contains(&x);
        if inside(s) && inside(t) {
            return TorusPoint { rep: u };
        }
        let wrap = |x: f64| {
            let y = x - x.floor();
            if y >= 1.0 - EPS {
                0.0
            } else {
                y
            }
        };
        TorusPoint {
            rep: self.from_coords(wrap(s), wrap(t)),
        }
    }

    /// Distance from u - v to the lattice in basis coordinates (max norm).
    pub fn lattice_distance(&self, u: C64, v: C64) -> f64 {
        let (s, t) = self.coords(u - v);
        (s - s.round()).abs().max((t - t.round()).abs())
    }

    pub fn lattice_equivalent(&self, u: C64, v: C64, tol: f64) -> bool {
        self.lattice_distance(u, v) <= tol
    }

    pub fn deck_translate(&self, u: C64, m: i64, n: i64) -> C64 {
        u + m as f64 + self.tau * n as f64
    }

    /// The lattice vector m + n tau nearest to u - v in basis coordinates.
    pub fn nearest_lattice_shift(&self, u: C64, v: C64) -> (i64, i64) {
        let (s, t) = self.coords(u - v);
        (s.round() as i64, t.round() as i64)
    }

    /// Uniform sample of the fundamental parallelogram.
    pub fn random_point<R: Rng>(&self, rng: &mut R) -> C64 {
        self.from_coords(rng.gen::<f64>(), rng.gen::<f64>())
    }

    /// Uniform sample whose basis coordinates stay at least `margin` from the
    /// parallelogram edges.
    pub fn random_interior_point<R: Rng>(&self, rng: &mut R, margin: f64) -> C64 {
        let s = margin + (1.0 - 2.0 * margin) * rng.gen::<f64>();
        let t = margin + (1.0 - 2.0 * margin) * rng.gen::<f64>();
        self.from_coords(s, t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn reduce_examples() {
        let e = EllipticCurve::new(c(0.0, 1.0)).unwrap();
        assert_eq!(e.reduce(c(0.0, 0.0)).rep, c(0.0, 0.0));
        assert!(e.reduce(c(1.0, 1.0)).rep.norm() < 1e-15);
        assert!((e.reduce(c(2.5, 0.25)).rep - c(0.5, 0.25)).norm() < 1e-15);
    }

    #[test]
    fn equivalence_examples() {
        let e = EllipticCurve::new(c(0.0, 1.0)).unwrap();
        assert!(e.lattice_equivalent(c(0.3, 0.0), c(1.3, 2.0), 1e-9));
        assert!(!e.lattice_equivalent(c(0.3, 0.0), c(0.4, 0.0), 1e-9));
        let tau = c(0.5, 1.0);
        let e = EllipticCurve::new(tau).unwrap();
        let u = c(0.2, 0.1);
        assert!(e.lattice_equivalent(u, u + 3.0 + tau * 2.0, 1e-9));
    }

    #[test]
    fn deck_examples() {
        let e = EllipticCurve::new(c(0.0, 1.0)).unwrap();
        assert_eq!(e.deck_translate(c(0.0, 0.0), 1, 0), c(1.0, 0.0));
        assert_eq!(e.deck_translate(c(0.5, 0.0), 0, 1), c(0.5, 1.0));
        let e = EllipticCurve::new(c(0.0, 2.0)).unwrap();
        assert_eq!(e.deck_translate(c(1.0, 1.0), -1, 2), c(0.0, 5.0));
    }

    #[test]
    fn rejects_degenerate_tau() {
        assert!(EllipticCurve::new(c(1.0, 0.0)).is_err());
        assert!(EllipticCurve::new(c(0.0, -1.0)).is_err());
    }

    proptest! {
        #[test]
        fn reduce_is_idempotent(re in -20.0f64..20.0, im in -20.0f64..20.0, tr in -1.0f64..1.0, ti in 0.3f64..3.0) {
            let e = EllipticCurve::new(c(tr, ti)).unwrap();
            let r = e.reduce(c(re, im));
            prop_assert_eq!(e.reduce(r.rep), r);
            let (s, t) = e.coords(r.rep);
            prop_assert!((-1e-12..1.0).contains(&s));
            prop_assert!((-1e-12..1.0).contains(&t));
            prop_assert!(e.lattice_equivalent(r.rep, c(re, im), 1e-9));
        }

        #[test]
        fn deck_translates_are_equivalent(re in -2.0f64..2.0, im in -2.0f64..2.0, m in -10i64..=10, n in -10i64..=10) {
            let e = EllipticCurve::new(c(0.3, 0.8)).unwrap();
            let u = c(re, im);
            prop_assert!(e.lattice_equivalent(u, e.deck_translate(u, m, n), 1e-9));
        }
    }
}
