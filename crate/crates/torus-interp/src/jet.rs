//! Truncated Taylor series in one and two variables.

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::numerics::C64;

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

/// sum c[k] h^k, k <= order.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub c: Vec<C64>,
}

impl Jet {
    pub fn new(c: Vec<C64>) -> Self {
        Jet { c }
    }

    pub fn constant(v: C64, order: usize) -> Self {
        let mut c = vec![zero(); order + 1];
        c[0] = v;
        Jet { c }
    }

    /// From derivative values f^(k)(x0), k = 0..=order.
    pub fn from_derivatives(d: &[C64]) -> Self {
        let mut fact = 1.0;
        let c = d
            .iter()
            .enumerate()
            .map(|(k, v)| {
                if k > 0 {
                    fact *= k as f64;
                }
                v / fact
            })
            .collect();
        Jet { c }
    }

    pub fn order(&self) -> usize {
        self.c.len() - 1
    }

    /// g(h) = f(-h).
    pub fn reflect(&self) -> Self {
        Jet {
            c: self
                .c
                .iter()
                .enumerate()
                .map(|(k, v)| if k % 2 == 1 { -v } else { *v })
                .collect(),
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        Jet {
            c: self.c.iter().map(|v| v * s).collect(),
        }
    }

    pub fn recip(&self) -> Result<Self> {
        let n = self.c.len();
        let a0 = self.c[0];
        if a0.norm() == 0.0 {
            return Err(Error::Degenerate(
                "reciprocal of a series vanishing at its center".into(),
            ));
        }
        let mut b = vec![zero(); n];
        b[0] = 1.0 / a0;
        for k in 1..n {
            let mut s = zero();
            for j in 1..=k {
                s += self.c[j] * b[k - j];
            }
            b[k] = -s / a0;
        }
        Ok(Jet { c: b })
    }

    pub fn div(&self, other: &Jet) -> Result<Self> {
        Ok(self * &other.recip()?)
    }

    /// Drops the leading coefficient, which must vanish: f(h)/h.
    pub fn divide_by_h(&self) -> Self {
        Jet {
            c: self.c[1..].to_vec(),
        }
    }

    pub fn truncate(&self, order: usize) -> Self {
        Jet {
            c: self.c[..=order.min(self.order())].to_vec(),
        }
    }

    pub fn powi(&self, k: usize) -> Self {
        let mut out = Jet::constant(C64::new(1.0, 0.0), self.order());
        for _ in 0..k {
            out = &out * self;
        }
        out
    }

    pub fn eval(&self, h: C64) -> C64 {
        self.c.iter().rev().fold(zero(), |acc, v| acc * h + v)
    }
}

impl Mul for &Jet {
    type Output = Jet;
    fn mul(self, o: &Jet) -> Jet {
        let n = self.c.len().min(o.c.len());
        let mut c = vec![zero(); n];
        for i in 0..n {
            for j in 0..n - i {
                c[i + j] += self.c[i] * o.c[j];
            }
        }
        Jet { c }
    }
}

impl Add for &Jet {
    type Output = Jet;
    fn add(self, o: &Jet) -> Jet {
        let n = self.c.len().min(o.c.len());
        Jet {
            c: (0..n).map(|k| self.c[k] + o.c[k]).collect(),
        }
    }
}

impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, o: &Jet) -> Jet {
        let n = self.c.len().min(o.c.len());
        Jet {
            c: (0..n).map(|k| self.c[k] - o.c[k]).collect(),
        }
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        Jet {
            c: self.c.iter().map(|v| -v).collect(),
        }
    }
}

/// sum c[a][b] x^a y^b with a <= nx, b <= ny.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet2 {
    pub nx: usize,
    pub ny: usize,
    pub c: Vec<Vec<C64>>,
}

impl Jet2 {
    pub fn zeros(nx: usize, ny: usize) -> Self {
        Jet2 {
            nx,
            ny,
            c: vec![vec![zero(); ny + 1]; nx + 1],
        }
    }

    pub fn constant(v: C64, nx: usize, ny: usize) -> Self {
        let mut j = Jet2::zeros(nx, ny);
        j.c[0][0] = v;
        j
    }

    /// Function of x alone.
    pub fn in_x(j: &Jet, ny: usize) -> Self {
        let nx = j.order();
        let mut out = Jet2::zeros(nx, ny);
        for a in 0..=nx {
            out.c[a][0] = j.c[a];
        }
        out
    }

    /// Function of y alone.
    pub fn in_y(j: &Jet, nx: usize) -> Self {
        let ny = j.order();
        let mut out = Jet2::zeros(nx, ny);
        for b in 0..=ny {
            out.c[0][b] = j.c[b];
        }
        out
    }

    /// g(y - x) for a one-variable jet g of order >= nx + ny.
    pub fn of_difference(g: &Jet, nx: usize, ny: usize) -> Self {
        let mut out = Jet2::zeros(nx, ny);
        let mut binom = vec![vec![0.0f64; nx + ny + 2]; nx + ny + 2];
        for n in 0..binom.len() {
            binom[n][0] = 1.0;
            for k in 1..=n {
                binom[n][k] = binom[n - 1][k - 1] + if k < n { binom[n - 1][k] } else { 0.0 };
            }
        }
        for a in 0..=nx {
            for b in 0..=ny {
                let n = a + b;
                if n <= g.order() {
                    let sign = if a % 2 == 1 { -1.0 } else { 1.0 };
                    out.c[a][b] = g.c[n] * (sign * binom[n][a]);
                }
            }
        }
        out
    }

    pub fn recip(&self) -> Result<Self> {
        let a0 = self.c[0][0];
        if a0.norm() == 0.0 {
            return Err(Error::Degenerate(
                "reciprocal of a bivariate series vanishing at its center".into(),
            ));
        }
        let mut b = Jet2::zeros(self.nx, self.ny);
        for a in 0..=self.nx {
            for bb in 0..=self.ny {
                if a == 0 && bb == 0 {
                    b.c[0][0] = 1.0 / a0;
                    continue;
                }
                let mut s = zero();
                for i in 0..=a {
                    for j in 0..=bb {
                        if i == 0 && j == 0 {
                            continue;
                        }
                        s += self.c[i][j] * b.c[a - i][bb - j];
                    }
                }
                b.c[a][bb] = -s / a0;
            }
        }
        Ok(b)
    }

    pub fn div(&self, other: &Jet2) -> Result<Self> {
        Ok(self * &other.recip()?)
    }
}

impl Mul for &Jet2 {
    type Output = Jet2;
    fn mul(self, o: &Jet2) -> Jet2 {
        let nx = self.nx.min(o.nx);
        let ny = self.ny.min(o.ny);
        let mut out = Jet2::zeros(nx, ny);
        for a in 0..=nx {
            for b in 0..=ny {
                if self.c[a][b] == zero() {
                    continue;
                }
                for i in 0..=nx - a {
                    for j in 0..=ny - b {
                        out.c[a + i][b + j] += self.c[a][b] * o.c[i][j];
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn reciprocal_of_geometric() {
        // 1/(1-h) = 1 + h + h^2 + ...
        let j = Jet::new(vec![c(1.0), c(-1.0), c(0.0), c(0.0)]);
        let r = j.recip().unwrap();
        for v in &r.c {
            assert!((v - c(1.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn difference_expansion_matches_direct_evaluation() {
        // g(t) = exp(t) at t0 = 0.3: g(0.3 + y - x)
        let t0 = 0.3f64;
        let d: Vec<C64> = (0..=8).map(|_| c(t0.exp())).collect();
        let g = Jet::from_derivatives(&d);
        let j2 = Jet2::of_difference(&g, 3, 3);
        let (x, y) = (0.01f64, -0.02f64);
        let mut s = C64::new(0.0, 0.0);
        for a in 0..=3 {
            for b in 0..=3 {
                s += j2.c[a][b] * x.powi(a as i32) * y.powi(b as i32);
            }
        }
        assert!((s - c((t0 + y - x).exp())).norm() < 1e-8);
    }

    #[test]
    fn bivariate_reciprocal() {
        let mut j = Jet2::constant(c(2.0), 2, 2);
        j.c[1][0] = c(1.0);
        j.c[0][1] = c(-0.5);
        let p = &j * &j.recip().unwrap();
        for a in 0..=2 {
            for b in 0..=2 {
                let want = if a == 0 && b == 0 { c(1.0) } else { c(0.0) };
                assert!((p.c[a][b] - want).norm() < 1e-14);
            }
        }
    }
}
