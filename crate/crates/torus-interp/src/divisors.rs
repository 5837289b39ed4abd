//! Right matrix null/pole divisors and base divisors D0 = p1 - p0.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::nullpole::{SimpleNullPoleData, SylvesterDataSet};
use crate::numerics::{jordan_block, CMat, C64};
use crate::torus::{EllipticCurve, TorusPoint};

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixDivisor {
    pub rank: usize,
    pub entries: Vec<(TorusPoint, SylvesterDataSet)>,
}

/// Support indices split by type: I pole only, II both, III zero only.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IndexPartition {
    pub i: Vec<usize>,
    pub ii: Vec<usize>,
    pub iii: Vec<usize>,
}

impl IndexPartition {
    pub fn n_inf(&self) -> usize {
        self.i.len()
    }
    pub fn n_c(&self) -> usize {
        self.ii.len()
    }
    pub fn n_0(&self) -> usize {
        self.iii.len()
    }
    /// Points carrying a pole part.
    pub fn n_p(&self) -> usize {
        self.i.len() + self.ii.len()
    }
    /// Points carrying a zero part.
    pub fn n_z(&self) -> usize {
        self.iii.len() + self.ii.len()
    }
    /// Row order of the coupling matrix: I then II.
    pub fn pole_points(&self) -> Vec<usize> {
        self.i.iter().chain(self.ii.iter()).copied().collect()
    }
    /// Column order of the coupling matrix: II then III.
    pub fn zero_points(&self) -> Vec<usize> {
        self.ii.iter().chain(self.iii.iter()).copied().collect()
    }
}

impl MatrixDivisor {
    pub fn new(
        curve: &EllipticCurve,
        rank: usize,
        entries: Vec<(TorusPoint, SylvesterDataSet)>,
        tol: &Tolerances,
    ) -> Result<Self> {
        let mut kept: Vec<(TorusPoint, SylvesterDataSet)> = Vec::new();
        for (p, t) in entries {
            if t.rank() != rank {
                return Err(Error::InvalidInput(format!(
                    "triple of rank {} in a rank {rank} divisor",
                    t.rank()
                )));
            }
            let rep = t.is_admissible(tol);
            if !rep.admissible {
                return Err(Error::InvalidInput(format!(
                    "triple at {} not admissible: {}",
                    p.rep,
                    rep.failures.join(", ")
                )));
            }
            if t.is_trivial() {
                continue;
            }
            let p = curve.reduce(p.rep);
            if kept
                .iter()
                .any(|(q, _)| curve.lattice_equivalent(p.rep, q.rep, tol.lattice))
            {
                return Err(Error::InvalidInput(format!(
                    "support point {} repeated",
                    p.rep
                )));
            }
            kept.push((p, t));
        }
        Ok(MatrixDivisor {
            rank,
            entries: kept,
        })
    }

    pub fn empty(rank: usize) -> Self {
        MatrixDivisor {
            rank,
            entries: Vec::new(),
        }
    }

    pub fn from_simple(
        curve: &EllipticCurve,
        d: &SimpleNullPoleData,
        tol: &Tolerances,
    ) -> Result<Self> {
        Self::new(curve, d.rank, d.to_divisor_entries(), tol)
    }

    pub fn degree(&self) -> i64 {
        self.entries
            .iter()
            .map(|(_, t)| t.n_zeta() as i64 - t.n_pi() as i64)
            .sum()
    }

    pub fn partition(&self) -> IndexPartition {
        let mut p = IndexPartition::default();
        for (k, (_, t)) in self.entries.iter().enumerate() {
            match (t.n_pi() > 0, t.n_zeta() > 0) {
                (true, false) => p.i.push(k),
                (true, true) => p.ii.push(k),
                (false, true) => p.iii.push(k),
                (false, false) => {}
            }
        }
        p
    }

    pub fn support(&self) -> Vec<C64> {
        self.entries.iter().map(|(p, _)| p.rep).collect()
    }

    pub fn adjoint(&self) -> Self {
        MatrixDivisor {
            rank: self.rank,
            entries: self
                .entries
                .iter()
                .map(|(p, t)| (*p, t.adjoint()))
                .collect(),
        }
    }
}

/// D0 = p1 + ... + pg - p0 with g = 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaseDivisor {
    pub poles: [(TorusPoint, usize); 1],
    pub base_point: TorusPoint,
}

impl BaseDivisor {
    pub fn new(curve: &EllipticCurve, p1: C64, p0: C64, tol: &Tolerances) -> Result<Self> {
        if curve.lattice_equivalent(p1, p0, tol.lattice) {
            return Err(Error::InvalidInput("p0 and p1 must be distinct".into()));
        }
        Ok(BaseDivisor {
            poles: [(curve.reduce(p1), 1)],
            base_point: curve.reduce(p0),
        })
    }

    pub fn p1(&self) -> C64 {
        self.poles[0].0.rep
    }

    pub fn p0(&self) -> C64 {
        self.base_point.rep
    }
}

pub fn is_cd_admissible(
    curve: &EllipticCurve,
    d0: &BaseDivisor,
    d: &MatrixDivisor,
    tol: f64,
) -> bool {
    let base = [d0.p0(), d0.p1()];
    d.support()
        .iter()
        .all(|&q| base.iter().all(|&b| !curve.lattice_equivalent(q, b, tol)))
}

/// Distance (basis coordinates) from the base points to the support.
pub fn admissibility_margin(curve: &EllipticCurve, d0: &BaseDivisor, d: &MatrixDivisor) -> f64 {
    let base = [d0.p0(), d0.p1()];
    let mut m = curve.lattice_distance(d0.p0(), d0.p1());
    for q in d.support() {
        for b in base {
            m = m.min(curve.lattice_distance(q, b));
        }
    }
    m
}

pub fn adjoint_divisor(d: &MatrixDivisor) -> MatrixDivisor {
    d.adjoint()
}

fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    })
}

/// Random triple with Jordan-cell A's; a point carrying both parts needs
/// n_pi <= rank so that any C_pi B_zeta = A_pi S - S A_zeta can be met.
pub fn random_triple<R: Rng>(
    rng: &mut R,
    rank: usize,
    np: usize,
    nz: usize,
) -> Result<SylvesterDataSet> {
    let zero = C64::new(0.0, 0.0);
    let api = jordan_block(zero, np);
    let az = jordan_block(zero, nz);
    let cpi = random_matrix(rng, np, rank);
    if np == 0 || nz == 0 {
        let bz = random_matrix(rng, rank, nz);
        return SylvesterDataSet::new(bz, az, api, cpi, CMat::zeros(np, nz));
    }
    if np > rank {
        return Err(Error::InvalidInput(format!(
            "n_pi = {np} exceeds rank {rank} at a mixed point"
        )));
    }
    let s = random_matrix(rng, np, nz);
    let m = &api * &s - &s * &az;
    let gram = (&cpi * cpi.adjoint())
        .try_inverse()
        .ok_or_else(|| Error::Singular("random C_pi lost rank".into()))?;
    let pinv = cpi.adjoint() * gram;
    let w = random_matrix(rng, rank, nz);
    let bz = &pinv * &m + (CMat::identity(rank, rank) - &pinv * &cpi) * w;
    SylvesterDataSet::new(bz, az, api, cpi, s)
}

/// Random admissible degree-zero divisor with at most `max_points` seeded
/// points before balancing and cell sizes up to `max_block`. Rank one never
/// gets mixed points.
pub fn random_divisor<R: Rng>(
    curve: &EllipticCurve,
    rank: usize,
    max_points: usize,
    max_block: usize,
    rng: &mut R,
    tol: &Tolerances,
) -> Result<MatrixDivisor> {
    if rank == 0 || max_points == 0 || max_block == 0 {
        return Err(Error::InvalidInput(
            "rank, max_points and max_block must be >= 1".into(),
        ));
    }
    for _ in 0..200 {
        let k = rng.gen_range(1..=max_points);
        let mut sizes: Vec<(usize, usize)> = Vec::new();
        for _ in 0..k {
            let kind = if rank >= 2 {
                rng.gen_range(0..3)
            } else {
                2 * rng.gen_range(0..2)
            };
            let b = rng.gen_range(1..=max_block);
            sizes.push(match kind {
                0 => (b, 0),
                1 => (b.min(rank), rng.gen_range(1..=max_block)),
                _ => (0, b),
            });
        }
        let mut deficit: i64 = sizes.iter().map(|(p, z)| *p as i64 - *z as i64).sum();
        while deficit != 0 {
            let b = (deficit.unsigned_abs() as usize).min(max_block);
            if deficit > 0 {
                sizes.push((0, b));
                deficit -= b as i64;
            } else {
                sizes.push((b, 0));
                deficit += b as i64;
            }
        }
        let mut pts: Vec<C64> = Vec::new();
        while pts.len() < sizes.len() {
            let u = curve.random_interior_point(rng, 0.05);
            if pts.iter().all(|&q| curve.lattice_distance(u, q) > 0.12) {
                pts.push(u);
            }
            if pts.len() < sizes.len() && rng.gen_range(0..1000) == 0 {
                break;
            }
        }
        if pts.len() < sizes.len() {
            continue;
        }
        let mut entries = Vec::new();
        let mut ok = true;
        for (&(np, nz), &u) in sizes.iter().zip(pts.iter()) {
            match random_triple(rng, rank, np, nz) {
                Ok(t) if t.is_admissible(tol).admissible => entries.push((curve.reduce(u), t)),
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return MatrixDivisor::new(curve, rank, entries, tol);
        }
    }
    Err(Error::ConstructionFailed(
        "no admissible random divisor in 200 attempts".into(),
    ))
}

/// Complex number as [re, im].
pub type ComplexJson = [f64; 2];
/// Row-major matrix of complex entries.
pub type MatrixJson = Vec<Vec<ComplexJson>>;

pub fn matrix_from_json(m: &MatrixJson, rows: usize, cols: usize, what: &str) -> Result<CMat> {
    if m.len() != rows || m.iter().any(|r| r.len() != cols) {
        return Err(Error::InvalidInput(format!(
            "{what}: expected {rows}x{cols} matrix"
        )));
    }
    Ok(CMat::from_fn(rows, cols, |i, j| {
        C64::new(m[i][j][0], m[i][j][1])
    }))
}

pub fn matrix_to_json(m: &CMat) -> MatrixJson {
    (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                .map(|j| [m[(i, j)].re, m[(i, j)].im])
                .collect()
        })
        .collect()
}

fn dims(m: &Option<MatrixJson>) -> (usize, usize) {
    match m {
        None => (0, 0),
        Some(v) => (v.len(), v.first().map_or(0, |r| r.len())),
    }
}

/// One support point: position as lattice coordinates (s, t) and the triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DivisorEntryJson {
    pub at: [f64; 2],
    #[serde(default)]
    pub bz: Option<MatrixJson>,
    #[serde(default)]
    pub az: Option<MatrixJson>,
    #[serde(default)]
    pub api: Option<MatrixJson>,
    #[serde(default)]
    pub cpi: Option<MatrixJson>,
    #[serde(default)]
    pub s: Option<MatrixJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DivisorJson {
    pub rank: usize,
    pub entries: Vec<DivisorEntryJson>,
}

impl DivisorJson {
    pub fn to_divisor(&self, curve: &EllipticCurve, tol: &Tolerances) -> Result<MatrixDivisor> {
        let r = self.rank;
        let mut entries = Vec::new();
        for e in &self.entries {
            let nz = dims(&e.az).0;
            let np = dims(&e.api).0;
            let get = |m: &Option<MatrixJson>, rows: usize, cols: usize, what: &str| match m {
                Some(v) => matrix_from_json(v, rows, cols, what),
                None if rows == 0 || cols == 0 => Ok(CMat::zeros(rows, cols)),
                None => Err(Error::InvalidInput(format!("{what} missing"))),
            };
            let t = SylvesterDataSet::new(
                get(&e.bz, r, nz, "bz")?,
                get(&e.az, nz, nz, "az")?,
                get(&e.api, np, np, "api")?,
                get(&e.cpi, np, r, "cpi")?,
                match &e.s {
                    Some(v) => matrix_from_json(v, np, nz, "s")?,
                    None => CMat::zeros(np, nz),
                },
            )?;
            entries.push((curve.reduce(curve.from_coords(e.at[0], e.at[1])), t));
        }
        MatrixDivisor::new(curve, r, entries, tol)
    }

    pub fn from_divisor(curve: &EllipticCurve, d: &MatrixDivisor) -> Self {
        let opt = |m: &CMat| {
            if m.is_empty() {
                None
            } else {
                Some(matrix_to_json(m))
            }
        };
        DivisorJson {
            rank: d.rank,
            entries: d
                .entries
                .iter()
                .map(|(p, t)| {
                    let (s, tt) = curve.coords(p.rep);
                    DivisorEntryJson {
                        at: [s, tt],
                        bz: opt(&t.bz),
                        az: opt(&t.az),
                        api: opt(&t.api),
                        cpi: opt(&t.cpi),
                        s: opt(&t.s),
                    }
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{c, jordan_block};
    use proptest::prelude::*;

    fn curve() -> EllipticCurve {
        EllipticCurve::new(c(0.0, 1.0)).unwrap()
    }

    fn col(v: &[f64]) -> CMat {
        CMat::from_column_slice(
            v.len(),
            1,
            &v.iter().map(|x| c(*x, 0.0)).collect::<Vec<_>>(),
        )
    }

    fn simple(n: usize) -> MatrixDivisor {
        let e = curve();
        let zeros = (0..n)
            .map(|k| (e.reduce(c(0.1 + 0.2 * k as f64, 0.3)), col(&[1.0, 0.0])))
            .collect();
        let poles = (0..n)
            .map(|k| (e.reduce(c(0.15 + 0.2 * k as f64, 0.7)), col(&[0.0, 1.0])))
            .collect();
        let d = SimpleNullPoleData::new(&e, zeros, poles, 1e-9).unwrap();
        MatrixDivisor::from_simple(&e, &d, &Tolerances::default()).unwrap()
    }

    #[test]
    fn degree_examples() {
        assert_eq!(MatrixDivisor::empty(1).degree(), 0);
        assert_eq!(simple(3).degree(), 0);
        let t =
            SylvesterDataSet::pole_only(jordan_block(c(0.0, 0.0), 2), col(&[0.0, 1.0])).unwrap();
        let d = MatrixDivisor::new(
            &curve(),
            1,
            vec![(curve().reduce(c(0.5, 0.5)), t)],
            &Tolerances::default(),
        )
        .unwrap();
        assert_eq!(d.degree(), -2);
    }

    #[test]
    fn partition_examples() {
        let p = simple(2).partition();
        assert_eq!((p.i.len(), p.ii.len(), p.iii.len()), (2, 0, 2));
        assert_eq!(
            MatrixDivisor::empty(1).partition(),
            IndexPartition::default()
        );
        let t = SylvesterDataSet::new(
            col(&[1.0, 0.0]),
            CMat::zeros(1, 1),
            CMat::zeros(1, 1),
            col(&[0.0, 1.0]).transpose(),
            CMat::zeros(1, 1),
        )
        .unwrap();
        let d = MatrixDivisor::new(
            &curve(),
            2,
            vec![(curve().reduce(c(0.5, 0.5)), t)],
            &Tolerances::default(),
        )
        .unwrap();
        let p = d.partition();
        assert_eq!(p.ii, vec![0]);
        assert_eq!((p.n_p(), p.n_z()), (1, 1));
    }

    #[test]
    fn admissibility_of_base() {
        let e = curve();
        let tol = Tolerances::default();
        let d0 = BaseDivisor::new(&e, c(0.0, 0.8), c(0.9, 0.0), &tol).unwrap();
        let t = SylvesterDataSet::null_only(col(&[1.0]), CMat::zeros(1, 1)).unwrap();
        let tp = SylvesterDataSet::pole_only(CMat::zeros(1, 1), col(&[1.0])).unwrap();
        let d = MatrixDivisor::new(
            &e,
            1,
            vec![
                (e.reduce(c(0.2, 0.0)), t.clone()),
                (e.reduce(c(0.5, 0.0)), tp),
            ],
            &tol,
        )
        .unwrap();
        assert!(is_cd_admissible(&e, &d0, &d, 1e-9));
        let d0b = BaseDivisor::new(&e, c(0.2, 0.0), c(0.9, 0.0), &tol).unwrap();
        assert!(!is_cd_admissible(&e, &d0b, &d, 1e-9));
        assert!(BaseDivisor::new(&e, c(0.3, 0.0), c(1.3, 1.0), &tol).is_err());
    }

    #[test]
    fn adjoint_examples() {
        assert_eq!(
            adjoint_divisor(&MatrixDivisor::empty(2)),
            MatrixDivisor::empty(2)
        );
        let d = simple(2);
        assert_eq!(adjoint_divisor(&adjoint_divisor(&d)), d);
    }

    #[test]
    fn json_round_trip() {
        let e = curve();
        let d = simple(2);
        let j = DivisorJson::from_divisor(&e, &d);
        let text = serde_json::to_string(&j).unwrap();
        let back: DivisorJson = serde_json::from_str(&text).unwrap();
        let d2 = back.to_divisor(&e, &Tolerances::default()).unwrap();
        assert_eq!(d2.entries.len(), d.entries.len());
        for ((p, t), (q, u)) in d.entries.iter().zip(d2.entries.iter()) {
            assert!(e.lattice_equivalent(p.rep, q.rep, 1e-12));
            assert_eq!(t, u);
        }
    }

    #[test]
    fn random_divisors_are_admissible() {
        use rand::SeedableRng;
        let e = curve();
        let tol = Tolerances::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for rank in 1..=2 {
            for _ in 0..20 {
                let d = random_divisor(&e, rank, 3, 2, &mut rng, &tol).unwrap();
                assert_eq!(d.degree(), 0);
                assert!(!d.entries.is_empty());
                for (_, t) in &d.entries {
                    assert!(t.is_admissible(&tol).admissible);
                    if rank == 1 {
                        assert!(t.n_pi() == 0 || t.n_zeta() == 0);
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn adjoint_flips_degree(nz in 0usize..3, np in 0usize..3, s in 0.05f64..0.95) {
            let e = curve();
            let tol = Tolerances::default();
            let mut entries = Vec::new();
            if nz > 0 {
                let mut bz = CMat::zeros(1, nz);
                bz[(0, 0)] = c(1.0, 0.0);
                entries.push((e.reduce(c(s, 0.2)), SylvesterDataSet::null_only(bz, jordan_block(c(0.0, 0.0), nz)).unwrap()));
            }
            if np > 0 {
                let mut cp = CMat::zeros(np, 1);
                cp[(np - 1, 0)] = c(1.0, 0.0);
                entries.push((e.reduce(c(s, 0.6)), SylvesterDataSet::pole_only(jordan_block(c(0.0, 0.0), np), cp).unwrap()));
            }
            let d = MatrixDivisor::new(&e, 1, entries, &tol).unwrap();
            let a = adjoint_divisor(&d);
            prop_assert_eq!(a.degree(), -d.degree());
            prop_assert_eq!(adjoint_divisor(&a), d.clone());
            let p = d.partition();
            prop_assert_eq!(p.n_inf() + p.n_c() + p.n_0(), d.entries.len());
            for (_, t) in &a.entries {
                prop_assert!(t.is_admissible(&tol).admissible);
            }
        }
    }
}
