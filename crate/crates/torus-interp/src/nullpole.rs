//! Right null-pole triples, singular subspaces, and simple null-pole data.

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::numerics::{
    controllability_rank, laurent_vec, nilpotency_index, observability_rank, singular_values,
    solve_row_lstsq, sylvester_residual, winding_number, CMat, ClosedPath, ContourSpec, Laurent,
    C64,
};
use crate::torus::{EllipticCurve, TorusPoint};

/// ((B_zeta, A_zeta), (A_pi, C_pi), S).
#[derive(Debug, Clone, PartialEq)]
pub struct SylvesterDataSet {
    pub bz: CMat,
    pub az: CMat,
    pub api: CMat,
    pub cpi: CMat,
    pub s: CMat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport {
    pub admissible: bool,
    pub failures: Vec<String>,
    pub sylvester_residual: f64,
}

impl SylvesterDataSet {
    pub fn new(bz: CMat, az: CMat, api: CMat, cpi: CMat, s: CMat) -> Result<Self> {
        let nz = az.nrows();
        let np = api.nrows();
        let r = bz.nrows();
        let ok = az.ncols() == nz
            && api.ncols() == np
            && bz.ncols() == nz
            && cpi.nrows() == np
            && cpi.ncols() == r
            && s.nrows() == np
            && s.ncols() == nz;
        if !ok {
            return Err(Error::InvalidInput(format!(
                "inconsistent triple shapes: Bz {}x{}, Az {}x{}, Api {}x{}, Cpi {}x{}, S {}x{}",
                bz.nrows(),
                bz.ncols(),
                az.nrows(),
                az.ncols(),
                api.nrows(),
                api.ncols(),
                cpi.nrows(),
                cpi.ncols(),
                s.nrows(),
                s.ncols()
            )));
        }
        Ok(SylvesterDataSet {
            bz,
            az,
            api,
            cpi,
            s,
        })
    }

    pub fn empty(r: usize) -> Self {
        SylvesterDataSet {
            bz: CMat::zeros(r, 0),
            az: CMat::zeros(0, 0),
            api: CMat::zeros(0, 0),
            cpi: CMat::zeros(0, r),
            s: CMat::zeros(0, 0),
        }
    }

    pub fn null_only(bz: CMat, az: CMat) -> Result<Self> {
        let r = bz.nrows();
        let nz = az.nrows();
        Self::new(
            bz,
            az,
            CMat::zeros(0, 0),
            CMat::zeros(0, r),
            CMat::zeros(0, nz),
        )
    }

    pub fn pole_only(api: CMat, cpi: CMat) -> Result<Self> {
        let r = cpi.ncols();
        let np = api.nrows();
        Self::new(
            CMat::zeros(r, 0),
            CMat::zeros(0, 0),
            api,
            cpi,
            CMat::zeros(np, 0),
        )
    }

    pub fn rank(&self) -> usize {
        self.bz.nrows()
    }

    pub fn n_zeta(&self) -> usize {
        self.az.nrows()
    }

    pub fn n_pi(&self) -> usize {
        self.api.nrows()
    }

    pub fn is_trivial(&self) -> bool {
        self.n_zeta() == 0 && self.n_pi() == 0
    }

    pub fn is_admissible(&self, tol: &Tolerances) -> AdmissibilityReport {
        let mut failures = Vec::new();
        let (np, nz) = (self.n_pi(), self.n_zeta());
        if np > 0 && nilpotency_index(&self.api, tol.nilpotent).is_none() {
            failures.push("Api not nilpotent".to_string());
        }
        if nz > 0 && nilpotency_index(&self.az, tol.nilpotent).is_none() {
            failures.push("Az not nilpotent".to_string());
        }
        if np > 0 && controllability_rank(&self.api, &self.cpi, tol.rank) < np {
            failures.push("(Api, Cpi) not controllable".to_string());
        }
        if nz > 0 && observability_rank(&self.bz, &self.az, tol.rank) < nz {
            failures.push("(Bz, Az) not observable".to_string());
        }
        let res = sylvester_residual(&self.api, &self.az, &self.cpi, &self.bz, &self.s);
        if res >= tol.sylvester {
            failures.push(format!("Sylvester residual {res:.3e}"));
        }
        AdmissibilityReport {
            admissible: failures.is_empty(),
            failures,
            sylvester_residual: res,
        }
    }

    /// ((Cpi^T, Api^T), (Az^T, Bz^T), -S^T).
    pub fn adjoint(&self) -> Self {
        SylvesterDataSet {
            bz: self.cpi.transpose(),
            az: self.api.transpose(),
            api: self.az.transpose(),
            cpi: self.bz.transpose(),
            s: -self.s.transpose(),
        }
    }

    /// ((Bz U, U^{-1} Az U), (V^{-1} Api V, V^{-1} Cpi), V^{-1} S U).
    pub fn similarity(&self, u: &CMat, v: &CMat) -> Result<Self> {
        let ui = u
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular("similarity U".into()))?;
        let vi = v
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular("similarity V".into()))?;
        if u.nrows() != self.n_zeta() || v.nrows() != self.n_pi() {
            return Err(Error::InvalidInput(
                "similarity sizes differ from the triple".into(),
            ));
        }
        Ok(SylvesterDataSet {
            bz: &self.bz * u,
            az: &ui * &self.az * u,
            api: &vi * &self.api * v,
            cpi: &vi * &self.cpi,
            s: &vi * &self.s * u,
        })
    }
}

/// Laurent coefficients of a matrix function, retrying with smaller radii when
/// node doubling disagrees.
pub fn matrix_laurent(
    f: &dyn Fn(C64) -> Result<CMat>,
    center: C64,
    radius: f64,
    kmin: i32,
    kmax: i32,
    tol: &Tolerances,
) -> Result<(Vec<CMat>, Laurent)> {
    let shape = std::cell::Cell::new((0usize, 0usize));
    let g = |z: C64| {
        let m = f(z)?;
        shape.set((m.nrows(), m.ncols()));
        Ok(m.as_slice().to_vec())
    };
    let mut rad = radius;
    let mut last = None;
    for _ in 0..3 {
        let spec = ContourSpec::new(center, rad).with_nodes(tol.contour_nodes);
        match laurent_vec(&g, &spec, kmin, kmax, tol.contour_doubling) {
            Ok(l) => {
                let (r, cc) = shape.get();
                let mats = l
                    .coeffs
                    .iter()
                    .map(|v| CMat::from_vec(r, cc, v.clone()))
                    .collect();
                return Ok((mats, l));
            }
            Err(e @ Error::ContourUnreliable(_)) | Err(e @ Error::Pole(_)) => {
                last = Some(e);
                rad *= 0.5;
            }
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap_or_else(|| Error::ContourUnreliable("no attempt".into())))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MembershipVerdict {
    pub member: bool,
    pub x: Option<CMat>,
    pub principal_residual: f64,
    pub residue_residual: f64,
    pub diagnostic: String,
}

/// h in S(T, q0, z), z(u) = u - q0: principal part x (zI - Api)^{-1} Cpi and
/// x S = res_{q0} h Bz (zI - Az)^{-1}.
pub fn membership(
    h: &dyn Fn(C64) -> Result<CMat>,
    t: &SylvesterDataSet,
    q0: C64,
    radius: f64,
    tol: &Tolerances,
) -> Result<MembershipVerdict> {
    let np = t.n_pi();
    let nz = t.n_zeta();
    let r = t.rank();
    let kneg = (np + 3) as i32;
    let kpos = nz.max(1) as i32 - 1;
    let (co, l) = matrix_laurent(h, q0, radius, -kneg, kpos, tol)?;
    let at = |k: i32| &co[(k + kneg) as usize];
    for k in -kneg..0 {
        if at(k).nrows() != 1 || at(k).ncols() != r {
            return Err(Error::InvalidInput("h must be a 1 x r row".into()));
        }
    }
    // x [Cpi, Api Cpi, ...] = [h_{-1}, h_{-2}, ...]
    let kk = kneg as usize;
    let mut krylov = CMat::zeros(np, kk * r);
    let mut target = CMat::zeros(1, kk * r);
    let mut p = t.cpi.clone();
    for j in 0..kk {
        krylov.view_mut((0, j * r), (np, r)).copy_from(&p);
        target
            .view_mut((0, j * r), (1, r))
            .copy_from(at(-(j as i32) - 1));
        p = &t.api * p;
    }
    let (x, principal_residual) = if np == 0 {
        (CMat::zeros(1, 0), target.norm())
    } else {
        solve_row_lstsq(&krylov, &target, tol.rank)
    };
    let bound_neg: f64 = (1..=kneg).map(|k| l.cauchy_bound(-k)).fold(0.0, f64::max);
    if principal_residual > tol.principal_match * bound_neg.max(1e-300)
        && principal_residual > 1e-13
    {
        return Ok(MembershipVerdict {
            member: false,
            x: None,
            principal_residual,
            residue_residual: f64::NAN,
            diagnostic: "unmatched principal part".into(),
        });
    }
    // res h Bz (zI - Az)^{-1} = sum_k h_k Bz Az^k
    let mut res = CMat::zeros(1, nz);
    let mut bound = 0.0;
    let mut bk = t.bz.clone();
    for k in 0..nz {
        res += at(k as i32) * &bk;
        bound += l.cauchy_bound(k as i32) * bk.norm();
        bk = &bk * &t.az;
    }
    let lhs = &x * &t.s;
    let residue_residual = (&lhs - &res).norm();
    bound += x.norm() * t.s.norm();
    let ok =
        residue_residual <= tol.zero_coefficient * bound.max(1e-300) || residue_residual < 1e-13;
    Ok(MembershipVerdict {
        member: ok,
        x: Some(x),
        principal_residual,
        residue_residual,
        diagnostic: if ok {
            "member".into()
        } else {
            "residue condition fails".into()
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalInterpolationReport {
    pub passed: bool,
    pub rows_member: Vec<bool>,
    pub zero_side_holomorphic: bool,
    pub pole_side_holomorphic: bool,
    pub winding: i64,
    pub expected_winding: i64,
}

fn negative_part_small(co: &[CMat], l: &Laurent, kneg: i32, tol: f64) -> bool {
    (1..=kneg).all(|k| {
        let m = &co[(kneg - k) as usize];
        m.norm() <= tol * l.cauchy_bound(-k).max(1e-300) || m.norm() < 1e-13
    })
}

/// Checks O^{1 x r} F = S(T, q0) through its row, zero-pair, pole-pair and
/// determinant consequences.
pub fn verify_local_interpolation(
    f: &dyn Fn(C64) -> Result<CMat>,
    t: &SylvesterDataSet,
    q0: C64,
    radius: f64,
    tol: &Tolerances,
) -> Result<LocalInterpolationReport> {
    let r = t.rank();
    let np = t.n_pi();
    let nz = t.n_zeta();
    let mut rows_member = Vec::new();
    for i in 0..r {
        let row = |u: C64| -> Result<CMat> { Ok(f(u)?.rows(i, 1).into_owned()) };
        rows_member.push(membership(&row, t, q0, radius, tol)?.member);
    }
    let zneg = (np + nz + 2) as i32;
    let fz = |u: C64| -> Result<CMat> {
        let z = u - q0;
        let m = CMat::identity(nz, nz) * z - &t.az;
        let inv = m.try_inverse().ok_or_else(|| Error::Pole(format!("{u}")))?;
        Ok(f(u)? * &t.bz * inv)
    };
    let zero_side_holomorphic = if nz == 0 {
        true
    } else {
        let (co, l) = matrix_laurent(&fz, q0, radius, -zneg, -1, tol)?;
        negative_part_small(&co, &l, zneg, tol.zero_coefficient)
    };
    let fp = |u: C64| -> Result<CMat> {
        let z = u - q0;
        let m = CMat::identity(np, np) * z - &t.api;
        let inv = m.try_inverse().ok_or_else(|| Error::Pole(format!("{u}")))?;
        let finv = f(u)?
            .try_inverse()
            .ok_or_else(|| Error::Singular(format!("F({u})")))?;
        Ok(inv * &t.cpi * finv)
    };
    let pole_side_holomorphic = if np == 0 {
        true
    } else {
        let (co, l) = matrix_laurent(&fp, q0, radius, -zneg, -1, tol)?;
        negative_part_small(&co, &l, zneg, tol.zero_coefficient)
    };
    let det = |u: C64| Ok(f(u)?.determinant());
    let winding = winding_number(&det, &ClosedPath::Circle { center: q0, radius })?;
    let expected_winding = nz as i64 - np as i64;
    let passed = rows_member.iter().all(|&b| b)
        && zero_side_holomorphic
        && pole_side_holomorphic
        && winding == expected_winding;
    Ok(LocalInterpolationReport {
        passed,
        rows_member,
        zero_side_holomorphic,
        pole_side_holomorphic,
        winding,
        expected_winding,
    })
}

/// (z_i, x_i) : (w_i, y_i), i = 1..N.
#[derive(Debug, Clone, PartialEq)]
pub struct SimpleNullPoleData {
    pub rank: usize,
    pub zeros: Vec<(TorusPoint, CMat)>,
    pub poles: Vec<(TorusPoint, CMat)>,
}

impl SimpleNullPoleData {
    pub fn empty(rank: usize) -> Self {
        SimpleNullPoleData {
            rank,
            zeros: Vec::new(),
            poles: Vec::new(),
        }
    }

    pub fn new(
        curve: &EllipticCurve,
        zeros: Vec<(TorusPoint, CMat)>,
        poles: Vec<(TorusPoint, CMat)>,
        tol: f64,
    ) -> Result<Self> {
        if zeros.len() != poles.len() {
            return Err(Error::InvalidInput(format!(
                "{} zeros but {} poles",
                zeros.len(),
                poles.len()
            )));
        }
        let rank = match zeros.first() {
            Some(z) => z.1.nrows(),
            None => {
                return Err(Error::InvalidInput(
                    "use SimpleNullPoleData::empty for N = 0".into(),
                ))
            }
        };
        for (_, v) in zeros.iter().chain(poles.iter()) {
            if v.nrows() != rank || v.ncols() != 1 || v.norm() == 0.0 {
                return Err(Error::InvalidInput(
                    "vectors must be nonzero r x 1 columns".into(),
                ));
            }
        }
        let zeros: Vec<_> = zeros
            .into_iter()
            .map(|(p, v)| (curve.reduce(p.rep), v))
            .collect();
        let poles: Vec<_> = poles
            .into_iter()
            .map(|(p, v)| (curve.reduce(p.rep), v))
            .collect();
        let pts: Vec<C64> = zeros.iter().chain(poles.iter()).map(|p| p.0.rep).collect();
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                if curve.lattice_distance(pts[i], pts[j]) <= tol {
                    return Err(Error::InvalidInput(
                        "null-pole points must be distinct".into(),
                    ));
                }
            }
        }
        Ok(SimpleNullPoleData { rank, zeros, poles })
    }

    pub fn n(&self) -> usize {
        self.zeros.len()
    }

    /// Zero points carry the null pair (x_i, 0); pole points the pole pair (0, y_i^T).
    pub fn to_divisor_entries(&self) -> Vec<(TorusPoint, SylvesterDataSet)> {
        let zero = CMat::zeros(1, 1);
        let mut out = Vec::new();
        for (z, x) in &self.zeros {
            out.push((
                *z,
                SylvesterDataSet::null_only(x.clone(), zero.clone()).expect("shapes"),
            ));
        }
        for (w, y) in &self.poles {
            out.push((
                *w,
                SylvesterDataSet::pole_only(zero.clone(), y.transpose()).expect("shapes"),
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimpleStructureReport {
    pub passed: bool,
    pub checks: Vec<StructureCheck>,
}

impl SimpleStructureReport {
    fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(StructureCheck {
            name: name.into(),
            passed,
            detail,
        });
        self.passed &= passed;
    }
}

fn min_separation(curve: &EllipticCurve, p: C64, others: &[C64]) -> f64 {
    others
        .iter()
        .filter(|&&q| curve.lattice_distance(p, q) > 1e-12)
        .map(|&q| crate::trivialize::lattice_euclid(curve, p, q))
        .fold(f64::INFINITY, f64::min)
}

/// Verifies that F interpolates simple null-pole data: local windings,
/// simple poles with rank-one residue along y^T, 1-dimensional kernels along
/// x, analyticity elsewhere on a cell grid, and degree zero overall.
pub fn check_simple_structure(
    curve: &EllipticCurve,
    f: &dyn Fn(C64) -> Result<CMat>,
    d: &SimpleNullPoleData,
    tol: &Tolerances,
) -> Result<SimpleStructureReport> {
    let mut rep = SimpleStructureReport {
        passed: true,
        checks: Vec::new(),
    };
    let r = d.rank;
    let probe = curve.from_coords(0.377, 0.619);
    let det0 = f(probe)?.determinant();
    if !det0.is_finite() || det0.norm() < 1e-300 {
        return Err(Error::Degenerate(
            "det F vanishes at the probe point".into(),
        ));
    }
    let det = |u: C64| Ok(f(u)?.determinant());
    let pts: Vec<C64> = d
        .zeros
        .iter()
        .chain(d.poles.iter())
        .map(|p| p.0.rep)
        .collect();
    let radius_at = |p: C64| (0.05f64).min(0.3 * min_separation(curve, p, &pts));

    for (i, (z, x)) in d.zeros.iter().enumerate() {
        let rad = radius_at(z.rep);
        let w = winding_number(
            &det,
            &ClosedPath::Circle {
                center: z.rep,
                radius: rad,
            },
        )?;
        rep.push(&format!("winding at z{i}"), w == 1, format!("{w}"));
        let (co, l) = matrix_laurent(f, z.rep, rad, -2, 0, tol)?;
        let hol = negative_part_small(&co, &l, 2, tol.zero_coefficient);
        rep.push(&format!("holomorphic at z{i}"), hol, String::new());
        let fz = &co[2];
        let scale = l.scale.max(1e-300);
        let kernel_res = (fz * x).norm() / (x.norm() * scale);
        rep.push(
            &format!("F(z{i}) x{i} = 0"),
            kernel_res < tol.kernel_gap,
            format!("{kernel_res:.3e}"),
        );
        let sv = singular_values(fz);
        let one_dim = if r == 1 {
            sv[0] < tol.kernel_gap * scale
        } else {
            sv[r - 1] < tol.kernel_gap * sv[0] && sv[r - 2] > tol.kernel_gap * sv[0]
        };
        rep.push(
            &format!("kernel at z{i} is 1-dimensional"),
            one_dim,
            format!("{sv:?}"),
        );
    }
    for (i, (w, y)) in d.poles.iter().enumerate() {
        let rad = radius_at(w.rep);
        let wn = winding_number(
            &det,
            &ClosedPath::Circle {
                center: w.rep,
                radius: rad,
            },
        )?;
        rep.push(&format!("winding at w{i}"), wn == -1, format!("{wn}"));
        let (co, l) = matrix_laurent(f, w.rep, rad, -3, -1, tol)?;
        let higher = co[0].norm().max(co[1].norm());
        let simple = higher <= tol.zero_coefficient * l.cauchy_bound(-2) || higher < 1e-13;
        rep.push(
            &format!("simple pole at w{i}"),
            simple,
            format!("{higher:.3e}"),
        );
        let res = &co[2];
        let sv = singular_values(res);
        let rank_one =
            sv[0] > tol.kernel_gap * l.scale * rad && (r == 1 || sv[1] < tol.kernel_gap * sv[0]);
        rep.push(
            &format!("rank-one residue at w{i}"),
            rank_one,
            format!("{sv:?}"),
        );
        let yt = y.transpose();
        let ybar = y.map(|v| v.conj());
        let yy = (&yt * &ybar)[(0, 0)];
        let proj = res * &ybar * &yt / yy;
        let along = (res - proj).norm() / res.norm().max(1e-300);
        rep.push(
            &format!("residue rows along y{i}"),
            along < tol.kernel_gap,
            format!("{along:.3e}"),
        );
        let finv = |u: C64| {
            f(u)?
                .try_inverse()
                .ok_or_else(|| Error::Singular(format!("F({u})")))
        };
        let (ico, il) = matrix_laurent(&finv, w.rep, rad, -1, 0, tol)?;
        let g0 = &ico[1];
        let left = (&yt * g0).norm() / (y.norm() * il.scale.max(1e-300));
        rep.push(
            &format!("y{i}^T F^-1(w{i}) = 0"),
            left < tol.kernel_gap,
            format!("{left:.3e}"),
        );
    }

    // no other zeros or poles: cell windings match the declared counts
    let cells = 4;
    let mut grid_ok = false;
    let mut detail = String::new();
    for shift in [(0.013, 0.029), (0.071, 0.043), (0.157, 0.111)] {
        let mut ok = true;
        let mut total = 0i64;
        let mut failed = false;
        'cells: for a in 0..cells {
            for b in 0..cells {
                let s0 = shift.0 + a as f64 / cells as f64;
                let t0 = shift.1 + b as f64 / cells as f64;
                let h = 1.0 / cells as f64;
                let corners = vec![
                    curve.from_coords(s0, t0),
                    curve.from_coords(s0 + h, t0),
                    curve.from_coords(s0 + h, t0 + h),
                    curve.from_coords(s0, t0 + h),
                ];
                let wn = match winding_number(&det, &ClosedPath::Polygon(corners)) {
                    Ok(w) => w,
                    Err(Error::Winding(_)) | Err(Error::Pole(_)) | Err(Error::Singular(_)) => {
                        failed = true;
                        break 'cells;
                    }
                    Err(e) => return Err(e),
                };
                let inside = |p: C64| {
                    let (ps, pt) = curve.coords(p);
                    let ws = (ps - s0).rem_euclid(1.0);
                    let wt = (pt - t0).rem_euclid(1.0);
                    ws < h && wt < h
                };
                let expect = d.zeros.iter().filter(|p| inside(p.0.rep)).count() as i64
                    - d.poles.iter().filter(|p| inside(p.0.rep)).count() as i64;
                total += wn;
                if wn != expect {
                    ok = false;
                    detail = format!("cell ({a},{b}): winding {wn}, expected {expect}");
                }
            }
        }
        if failed {
            continue;
        }
        grid_ok = ok && total == 0;
        if ok && total != 0 {
            detail = format!("total winding {total}");
        }
        break;
    }
    rep.push("no undeclared zeros or poles", grid_ok, detail);
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{c, jordan_block, right_null_space};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn m(rows: usize, cols: usize, v: &[f64]) -> CMat {
        CMat::from_row_slice(
            rows,
            cols,
            &v.iter().map(|x| c(*x, 0.0)).collect::<Vec<_>>(),
        )
    }

    /// Null pair of u^2 at 0: Bz = [1 0], Az = 2x2 nilpotent Jordan cell.
    fn example_triple() -> SylvesterDataSet {
        SylvesterDataSet::null_only(m(1, 2, &[1.0, 0.0]), jordan_block(c(0.0, 0.0), 2)).unwrap()
    }

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn scalar(f: impl Fn(C64) -> C64 + 'static) -> impl Fn(C64) -> Result<CMat> {
        move |u| Ok(CMat::from_element(1, 1, f(u)))
    }

    #[test]
    fn admissibility_examples() {
        assert!(SylvesterDataSet::empty(2).is_admissible(&tol()).admissible);
        assert!(example_triple().is_admissible(&tol()).admissible);
        let bad = SylvesterDataSet::pole_only(CMat::identity(1, 1), m(1, 1, &[1.0])).unwrap();
        let rep = bad.is_admissible(&tol());
        assert!(!rep.admissible);
        assert!(rep.failures.iter().any(|f| f == "Api not nilpotent"));
    }

    #[test]
    fn adjoint_examples() {
        let e = SylvesterDataSet::empty(1);
        assert_eq!(e.adjoint(), e);
        let t = example_triple();
        let a = t.adjoint();
        assert_eq!(a.n_zeta(), 0);
        assert_eq!(a.api, t.az.transpose());
        assert_eq!(a.cpi, t.bz.transpose());
        assert!(a.is_admissible(&tol()).admissible);
        assert_eq!(a.adjoint(), t);
    }

    #[test]
    fn membership_example_verdicts() {
        let t = example_triple();
        let u2 = scalar(|u| u * u);
        let u1 = scalar(|u| u);
        assert!(
            membership(&u2, &t, c(0.0, 0.0), 0.1, &tol())
                .unwrap()
                .member
        );
        assert!(
            !membership(&u1, &t, c(0.0, 0.0), 0.1, &tol())
                .unwrap()
                .member
        );
        let one = scalar(|_| c(1.0, 0.0));
        assert!(
            !membership(&one, &t, c(0.0, 0.0), 0.1, &tol())
                .unwrap()
                .member
        );
        let pole = SylvesterDataSet::pole_only(m(1, 1, &[0.0]), m(1, 1, &[1.0])).unwrap();
        let inv = scalar(|u| 1.0 / u);
        let v = membership(&inv, &pole, c(0.0, 0.0), 0.1, &tol()).unwrap();
        assert!(v.member);
        assert!((v.x.unwrap()[(0, 0)] - 1.0).norm() < 1e-12);
        let inv2 = scalar(|u| 1.0 / (u * u));
        let v = membership(&inv2, &pole, c(0.0, 0.0), 0.1, &tol()).unwrap();
        assert!(!v.member);
        assert_eq!(v.diagnostic, "unmatched principal part");
    }

    #[test]
    fn similarity_preserves_verdicts() {
        let t = example_triple();
        let u = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(2.0, 0.0), c(1.0, 0.0)]));
        let t2 = t.similarity(&u, &CMat::zeros(0, 0)).unwrap();
        assert_eq!(
            t.similarity(&CMat::identity(2, 2), &CMat::zeros(0, 0))
                .unwrap(),
            t
        );
        for k in 0..4 {
            let h = scalar(move |z| z.powi(k));
            let a = membership(&h, &t, c(0.0, 0.0), 0.1, &tol()).unwrap().member;
            let b = membership(&h, &t2, c(0.0, 0.0), 0.1, &tol())
                .unwrap()
                .member;
            assert_eq!(a, b, "u^{k}");
        }
    }

    #[test]
    fn local_interpolation_examples() {
        let t = example_triple();
        let f2 = scalar(|u| u * u);
        assert!(
            verify_local_interpolation(&f2, &t, c(0.0, 0.0), 0.1, &tol())
                .unwrap()
                .passed
        );
        let f1 = scalar(|u| u);
        let rep = verify_local_interpolation(&f1, &t, c(0.0, 0.0), 0.1, &tol()).unwrap();
        assert!(!rep.passed);
        assert_eq!(rep.winding, 1);
        let t = SylvesterDataSet::new(
            m(2, 1, &[0.0, 1.0]),
            m(1, 1, &[0.0]),
            m(1, 1, &[0.0]),
            m(1, 2, &[1.0, 0.0]),
            m(1, 1, &[0.0]),
        )
        .unwrap();
        let f = |u: C64| -> Result<CMat> {
            let mut r = CMat::zeros(2, 2);
            r[(0, 0)] = 1.0 / u;
            r[(1, 1)] = u;
            Ok(r)
        };
        assert!(
            verify_local_interpolation(&f, &t, c(0.0, 0.0), 0.1, &tol())
                .unwrap()
                .passed
        );
    }

    #[test]
    fn simple_entries() {
        let curve = EllipticCurve::new(c(0.0, 1.0)).unwrap();
        assert!(SimpleNullPoleData::empty(2).to_divisor_entries().is_empty());
        let d = SimpleNullPoleData::new(
            &curve,
            vec![(curve.reduce(c(0.2, 0.0)), m(2, 1, &[1.0, 0.0]))],
            vec![(curve.reduce(c(0.7, 0.0)), m(2, 1, &[0.0, 1.0]))],
            1e-9,
        )
        .unwrap();
        let e = d.to_divisor_entries();
        assert_eq!(e.len(), 2);
        assert!(e.iter().all(|(_, t)| t.is_admissible(&tol()).admissible));
        assert_eq!(e[0].1.n_zeta(), 1);
        assert_eq!(e[1].1.n_pi(), 1);
    }

    #[test]
    fn random_similarity_keeps_admissibility() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = example_triple();
        for _ in 0..10 {
            let u = CMat::from_fn(2, 2, |_, _| {
                c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            }) + CMat::identity(2, 2) * c(2.0, 0.0);
            let t2 = t.similarity(&u, &CMat::zeros(0, 0)).unwrap();
            assert!(t2.is_admissible(&tol()).admissible);
        }
    }

    #[test]
    fn right_kernel_helper_agrees() {
        let a = m(1, 2, &[1.0, -1.0]);
        let k = right_null_space(&a, 1e-10);
        assert_eq!(k.ncols(), 1);
    }
}
