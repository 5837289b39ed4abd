//! The named pipelines. Each one only calls into the library and records the
//! library's own residuals against fixed bounds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use torus_interp::divisors::{
    admissibility_margin, matrix_from_json, matrix_to_json, MatrixDivisor,
};
use torus_interp::interpolate::{
    build_gamma, calibrate_genus0, genus0_cauchy_solve, sample_base_divisors,
    scalar_abel_fay_suite, section_count, solve_first, solve_second_with, CertificateOptions,
    FirstOutcome, GammaSystem, Invertibility, ResidueMethod, SecondOutcome, GENUS0_CONVENTION,
};
use torus_interp::kernels::{
    continuity_spot_check, residue_in_base_point, BaseKernel, Perturb, PrimeForm,
};
use torus_interp::nullpole::{check_simple_structure, SimpleNullPoleData};
use torus_interp::numerics::{jordan_block, laurent_coefficient, ContourSpec};
use torus_interp::theta::ThetaEvaluator;
use torus_interp::trivialize::{
    block_theta_triv, lattice_euclid, scalar_trivialization, scalar_trivialization_zero,
    single_pole_triv, verify_automorphy, FlatFactor, InductiveTrivialization, MeromorphicMatrixMap,
};
use torus_interp::{CMat, EllipticCurve, Error, Result, Tolerances, C64};

use crate::scenario::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Below,
    Holds,
    Equals,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub relation: Relation,
    pub passed: bool,
}

impl Check {
    pub fn below(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Check {
            name: name.into(),
            value,
            bound,
            relation: Relation::Below,
            passed: value < bound,
        }
    }

    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        let v = if ok { 1.0 } else { 0.0 };
        Check {
            name: name.into(),
            value: v,
            bound: 1.0,
            relation: Relation::Holds,
            passed: ok,
        }
    }

    pub fn equals(name: impl Into<String>, value: usize, expected: usize) -> Self {
        Check {
            name: name.into(),
            value: value as f64,
            bound: expected as f64,
            relation: Relation::Equals,
            passed: value == expected,
        }
    }

    /// Replaces the bound of a `below` check.
    pub fn rebound(&mut self, bound: f64) {
        if self.relation == Relation::Below {
            self.bound = bound;
            self.passed = self.value < bound;
        }
    }
}

#[derive(Default)]
pub struct PipelineOutput {
    pub checks: Vec<Check>,
    pub verdict: Option<String>,
    pub details: Value,
    /// Set when the numerics could not decide; the runner exits 3.
    pub indeterminate: Option<String>,
    pub functions: Vec<(String, MeromorphicMatrixMap)>,
}

pub struct Context<'a> {
    pub scenario: &'a Scenario,
    pub curve: EllipticCurve,
    pub tol: Tolerances,
    pub seed: u64,
}

impl Context<'_> {
    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    fn evaluator(&self) -> ThetaEvaluator {
        ThetaEvaluator::new(self.curve, &self.tol)
    }

    fn prime_form(&self) -> Result<PrimeForm> {
        PrimeForm::new(&self.evaluator())
    }

    fn divisor(&self, d: &torus_interp::divisors::DivisorJson) -> Result<MatrixDivisor> {
        d.to_divisor(&self.curve, &self.tol)
    }
}

pub fn run_pipeline(ctx: &Context) -> Result<PipelineOutput> {
    match ctx.scenario.pipeline.as_str() {
        "theta-check" => theta_check(ctx),
        "trivialize" => trivialize(ctx),
        "extend" => extend(ctx),
        "simple-structure" => simple_structure(ctx),
        "gamma" => gamma(ctx),
        "solve-first" => first(ctx),
        "solve-second" => second(ctx),
        "genus0" => genus0(ctx),
        "abel-fay" => abel_fay(ctx),
        "kernels-check" => kernels_check(ctx),
        other => Err(Error::InvalidInput(format!("unknown pipeline {other:?}"))),
    }
}

fn coords(curve: &EllipticCurve, u: C64) -> [f64; 2] {
    let (s, t) = curve.coords(u);
    [s, t]
}

fn cjson(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

fn theta_check(ctx: &Context) -> Result<PipelineOutput> {
    let inp: ThetaCheckInputs = ctx.scenario.inputs()?;
    let ev = ctx.evaluator();
    let doubled = ev.with_terms(2 * ev.terms());
    let tau = ctx.curve.tau();
    let mut rng = ctx.rng();
    let (mut quasi, mut one, mut even, mut trunc, mut scale) =
        (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..inp.points.max(1) {
        let u = ctx
            .curve
            .from_coords(rng.gen_range(0.0..1.0), rng.gen_range(-0.5..0.5));
        let th = ev.theta(u)?;
        let s = th.norm().max(1e-300);
        scale = scale.max(th.norm());
        let factor = (-std::f64::consts::PI * C64::i() * (tau + 2.0 * u)).exp();
        let shifted = ev.theta(u + tau)?;
        quasi = quasi.max((shifted - factor * th).norm() / shifted.norm().max(s * factor.norm()));
        one = one.max((ev.theta(u + 1.0)? - th).norm() / s);
        even = even.max((ev.theta(-u)? - th).norm() / s);
        trunc = trunc.max((doubled.theta(u)? - th).norm() / s);
    }
    let zero = ev.theta(ctx.curve.delta())?.norm() / scale.max(1.0);
    let theta_fn =
        MeromorphicMatrixMap::scalar(std::sync::Arc::new(move |u| ev.theta(u)), Vec::new(), None);
    Ok(PipelineOutput {
        checks: vec![
            Check::below("quasi-periodicity", quasi, 1e-10),
            Check::below("period one", one, 1e-10),
            Check::below("evenness", even, 1e-10),
            Check::below("zero at (1 + tau)/2", zero, 1e-10),
            Check::below("truncation doubling", trunc, 1e-12),
        ],
        details: json!({ "terms": ctx.evaluator().terms(), "points": inp.points }),
        functions: vec![("theta".into(), theta_fn)],
        ..Default::default()
    })
}

fn build_construction(
    ctx: &Context,
    construction: Construction,
    alpha: C64,
    rank: usize,
    pole: PointJson,
) -> Result<(MeromorphicMatrixMap, Option<SimpleNullPoleData>)> {
    let ev = ctx.evaluator();
    let a = point(&ctx.curve, pole);
    Ok(match construction {
        Construction::Scalar => {
            if rank != 1 {
                return Err(Error::InvalidInput(
                    "the scalar construction has rank 1".into(),
                ));
            }
            let map = scalar_trivialization(&ev, alpha)?;
            let one = CMat::from_element(1, 1, C64::new(1.0, 0.0));
            let data = if (alpha - 1.0).norm() < 1e-14 {
                SimpleNullPoleData::empty(1)
            } else {
                SimpleNullPoleData::new(
                    &ctx.curve,
                    vec![(scalar_trivialization_zero(&ctx.curve, alpha), one.clone())],
                    vec![(ctx.curve.reduce(ctx.curve.delta()), one)],
                    ctx.tol.lattice,
                )?
            };
            (map, Some(data))
        }
        Construction::BlockTheta => (block_theta_triv(&ev, alpha, rank)?, None),
        Construction::SinglePole => (single_pole_triv(&ev, alpha, rank, a)?, None),
        Construction::Inductive => {
            let f = inductive(&ev, alpha, rank, a)?;
            (f.to_map(), Some(f.data.clone()))
        }
    })
}

fn inductive(
    ev: &ThetaEvaluator,
    alpha: C64,
    rank: usize,
    a: C64,
) -> Result<InductiveTrivialization> {
    if rank == 0 || rank > 4 {
        return Err(Error::InvalidInput(format!("rank {rank} outside 1..=4")));
    }
    let mut f = InductiveTrivialization::base(ev, alpha, a)?;
    while f.rank() < rank {
        f = f.extend()?;
    }
    Ok(f)
}

fn factor_of(map: &MeromorphicMatrixMap, alpha: C64) -> Result<FlatFactor> {
    match &map.factor {
        Some(f) => Ok(f.clone()),
        None => FlatFactor::jordan(alpha, map.dim),
    }
}

fn trivialize(ctx: &Context) -> Result<PipelineOutput> {
    let inp: TrivializeInputs = ctx.scenario.inputs()?;
    let alpha = complex(inp.alpha);
    let (map, _) = build_construction(ctx, inp.construction, alpha, inp.rank, inp.pole)?;
    let factor = factor_of(&map, alpha)?;
    let auto = verify_automorphy(&ctx.curve, &map, &factor, inp.points.max(1), ctx.seed)?;
    let mut checks = vec![Check::below("automorphy", auto, 1e-7)];
    if inp.construction == Construction::BlockTheta {
        let ev = ctx.evaluator();
        let v = jordan_block(alpha, inp.rank);
        let mut rng = ctx.rng();
        let mut worst = 0.0f64;
        for _ in 0..inp.points.max(1) {
            let u = ctx.curve.random_interior_point(&mut rng, 0.05);
            let a = map.eval(u)?;
            let b = ev.matrix_theta_triv(&v, u)?;
            worst = worst.max((&a - &b).norm() / a.norm().max(1.0));
        }
        checks.push(Check::below(
            "derivative form vs matrix series",
            worst,
            1e-8,
        ));
    }
    Ok(PipelineOutput {
        checks,
        details: json!({
            "rank": map.dim,
            "poles": map.poles.iter().map(|(p, o)| json!({"at": coords(&ctx.curve, p.rep), "order": o})).collect::<Vec<_>>(),
        }),
        functions: vec![("F".into(), map)],
        ..Default::default()
    })
}

fn extend(ctx: &Context) -> Result<PipelineOutput> {
    let inp: ExtendInputs = ctx.scenario.inputs()?;
    let alpha = complex(inp.alpha);
    let f = inductive(&ctx.evaluator(), alpha, inp.rank, point(&ctx.curve, inp.a))?;
    let expected = if (alpha - 1.0).norm() < 1e-14 {
        2 * (inp.rank - 1)
    } else {
        inp.rank
    };
    let map = f.to_map();
    let auto = verify_automorphy(
        &ctx.curve,
        &map,
        &FlatFactor::jordan(alpha, inp.rank)?,
        inp.points.max(1),
        ctx.seed,
    )?;
    let rep = check_simple_structure(&ctx.curve, &|u| f.eval(u), &f.data, &ctx.tol)?;
    Ok(PipelineOutput {
        checks: vec![
            Check::equals("simple zero/pole count", f.data.n(), expected),
            Check::below("automorphy", auto, 1e-7),
            Check::holds("simple structure", rep.passed),
        ],
        details: json!({
            "structure": structure_json(&rep),
            "data": simple_data_json(&ctx.curve, &f.data),
        }),
        functions: vec![("F".into(), map)],
        ..Default::default()
    })
}

fn structure_json(rep: &torus_interp::nullpole::SimpleStructureReport) -> Value {
    Value::Array(
        rep.checks
            .iter()
            .map(|c| json!({"name": c.name, "passed": c.passed, "detail": c.detail}))
            .collect(),
    )
}

fn simple_data_json(curve: &EllipticCurve, d: &SimpleNullPoleData) -> Value {
    let side = |v: &[(torus_interp::TorusPoint, CMat)]| -> Value {
        v.iter()
            .map(|(p, x)| json!({"at": coords(curve, p.rep), "v": x.iter().map(|z| cjson(*z)).collect::<Vec<_>>()}))
            .collect()
    };
    json!({"zeros": side(&d.zeros), "poles": side(&d.poles)})
}

fn parse_simple_data(
    curve: &EllipticCurve,
    d: &SimpleDataJson,
    tol: &Tolerances,
) -> Result<SimpleNullPoleData> {
    let side = |v: &[SimpleVectorJson]| {
        v.iter()
            .map(|e| {
                let col = CMat::from_iterator(e.v.len(), 1, e.v.iter().map(|z| complex(*z)));
                (curve.reduce(point(curve, e.at)), col)
            })
            .collect::<Vec<_>>()
    };
    SimpleNullPoleData::new(curve, side(&d.zeros), side(&d.poles), tol.lattice)
}

fn simple_structure(ctx: &Context) -> Result<PipelineOutput> {
    let inp: SimpleStructureInputs = ctx.scenario.inputs()?;
    let alpha = complex(inp.alpha);
    let (map, own) = build_construction(ctx, inp.construction, alpha, inp.rank, inp.pole)?;
    let (data, explicit) = match (&inp.data, own) {
        (Some(d), _) => (parse_simple_data(&ctx.curve, d, &ctx.tol)?, true),
        (None, Some(d)) => (d, false),
        (None, None) => {
            return Err(Error::InvalidInput(
                "this construction carries no simple data; supply `data`".into(),
            ))
        }
    };
    if data.rank != map.dim {
        return Err(Error::InvalidInput(
            "data rank differs from the construction".into(),
        ));
    }
    let rep = check_simple_structure(&ctx.curve, &|u| map.eval(u), &data, &ctx.tol)?;
    // explicit data is a question about the function, not an invariant of it
    let checks = if explicit {
        Vec::new()
    } else {
        vec![Check::holds("simple structure", rep.passed)]
    };
    Ok(PipelineOutput {
        checks,
        verdict: Some(if rep.passed { "simple" } else { "not-simple" }.into()),
        details: json!({ "structure": structure_json(&rep), "n": data.n() }),
        functions: vec![("F".into(), map)],
        ..Default::default()
    })
}

fn gamma_json(sys: &GammaSystem) -> Value {
    json!({
        "gamma": matrix_to_json(&sys.gamma),
        "r": matrix_to_json(&sys.r),
        "b_zeta": matrix_to_json(&sys.bz_row),
        "c_pi": matrix_to_json(&sys.cpi_col),
        "separation": sys.separation,
        "radius": sys.radius,
    })
}

fn invertibility_json(inv: &Invertibility) -> (String, Value) {
    match inv {
        Invertibility::Invertible { condition, .. } => {
            ("invertible".into(), json!({ "condition": condition }))
        }
        Invertibility::Singular { ratio } => ("singular".into(), json!({ "sigma_ratio": ratio })),
        Invertibility::Indeterminate { ratio } => {
            ("indeterminate".into(), json!({ "sigma_ratio": ratio }))
        }
    }
}

fn gamma(ctx: &Context) -> Result<PipelineOutput> {
    let inp: GammaInputs = ctx.scenario.inputs()?;
    let pf = ctx.prime_form()?;
    let d = ctx.divisor(&inp.divisor)?;
    let d0 = inp.base.to_base(&ctx.curve, &ctx.tol)?;
    let primary = match inp.method {
        MethodJson::Contour => ResidueMethod::Contour,
        _ => ResidueMethod::Analytic,
    };
    let sys = build_gamma(&pf, &d, &d0, primary, &ctx.tol)?;
    let mut checks = Vec::new();
    if inp.method == MethodJson::Both {
        let other = build_gamma(&pf, &d, &d0, ResidueMethod::Contour, &ctx.tol)?;
        let diff = (&sys.gamma - &other.gamma).norm() / sys.gamma.norm().max(1.0);
        checks.push(Check::below("analytic vs contour blocks", diff, 1e-7));
    }
    let r_err = (&sys.r + &sys.cpi_col).norm() / sys.cpi_col.norm().max(1.0);
    checks.push(Check::below("residue matrix equals -C_pi", r_err, 1e-7));
    let inv = sys.invertibility(&ctx.tol);
    let (verdict, inv_json) = invertibility_json(&inv);
    let count = section_count(&sys, &ctx.tol);
    let indeterminate = matches!(inv, Invertibility::Indeterminate { .. })
        .then(|| "smallest singular value of Gamma in the grey zone".to_string());
    Ok(PipelineOutput {
        checks,
        details: json!({
            "system": gamma_json(&sys),
            "invertibility": inv_json,
            "section_count": count,
            "degree": d.degree(),
        }),
        verdict: Some(verdict),
        indeterminate,
        ..Default::default()
    })
}

fn first(ctx: &Context) -> Result<PipelineOutput> {
    let inp: SolveFirstInputs = ctx.scenario.inputs()?;
    let pf = ctx.prime_form()?;
    let d = ctx.divisor(&inp.divisor)?;
    let d0 = inp.base.to_base(&ctx.curve, &ctx.tol)?;
    let r = d.rank;
    let u0 = match &inp.u0 {
        Some(m) => matrix_from_json(m, r, r, "u0")?,
        None => CMat::identity(r, r),
    };
    let opts = CertificateOptions {
        samples: inp.points.max(1),
        seed: ctx.seed,
    };
    match solve_first(&pf, &d, &d0, &u0, &ctx.tol, &opts) {
        Ok(FirstOutcome::Solved { k, certificate: c }) => {
            let mut checks = vec![
                Check::below(
                    "side constraint (relative)",
                    c.side_relative,
                    ctx.tol.side_relative,
                ),
                Check::below("double periodicity", c.periodicity, 1e-7),
                Check::below("no pole at p1", c.p1_residue, 1e-7),
            ];
            for (i, ok) in c.local.iter().enumerate() {
                checks.push(Check::holds(
                    format!("local interpolation at point {i}"),
                    *ok,
                ));
            }
            Ok(PipelineOutput {
                checks,
                verdict: Some("solved".into()),
                details: json!({ "certificate": c }),
                functions: vec![("K".into(), k)],
                ..Default::default()
            })
        }
        Ok(FirstOutcome::NoSolution(reason)) => Ok(PipelineOutput {
            verdict: Some("no-solution".into()),
            details: json!({ "reason": reason }),
            ..Default::default()
        }),
        Err(Error::Indeterminate(msg)) => Ok(PipelineOutput {
            indeterminate: Some(msg),
            ..Default::default()
        }),
        Err(e) => Err(e),
    }
}

fn second(ctx: &Context) -> Result<PipelineOutput> {
    let inp: SolveSecondInputs = ctx.scenario.inputs()?;
    let pf = ctx.prime_form()?;
    let d = ctx.divisor(&inp.divisor)?;
    let candidates = match &inp.candidates {
        Some(c) => c
            .iter()
            .map(|b| b.to_base(&ctx.curve, &ctx.tol))
            .collect::<Result<Vec<_>>>()?,
        None => sample_base_divisors(&ctx.curve, &d, inp.trials, 0.05, ctx.seed, &ctx.tol),
    };
    let out = solve_second_with(&pf, &d, candidates, &ctx.tol)?;
    let (verdict, details) = match out {
        SecondOutcome::Certificate {
            d0,
            condition,
            trial,
        } => (
            "certificate",
            json!({
                "p1": coords(&ctx.curve, d0.p1()),
                "p0": coords(&ctx.curve, d0.p0()),
                "condition": condition,
                "trial": trial,
                "margin": admissibility_margin(&ctx.curve, &d0, &d),
            }),
        ),
        SecondOutcome::Unknown { trials, best_ratio } => (
            "unknown",
            json!({ "trials": trials, "best_sigma_ratio": best_ratio }),
        ),
    };
    Ok(PipelineOutput {
        verdict: Some(verdict.into()),
        details,
        ..Default::default()
    })
}

fn separated_points<R: Rng>(rng: &mut R, n: usize, radius: f64, sep: f64) -> Vec<C64> {
    let mut out: Vec<C64> = Vec::new();
    while out.len() < n {
        let z = C64::new(
            rng.gen_range(-radius..radius),
            rng.gen_range(-radius..radius),
        );
        if z.norm() <= radius && out.iter().all(|w| (w - z).norm() >= sep) {
            out.push(z);
        }
    }
    out
}

fn genus0(ctx: &Context) -> Result<PipelineOutput> {
    let inp: Genus0Inputs = ctx.scenario.inputs()?;
    let mut rng = ctx.rng();
    let (lambdas, mus) = match (&inp.lambdas, &inp.mus) {
        (Some(l), Some(m)) => (
            l.iter().map(|z| complex(*z)).collect::<Vec<_>>(),
            m.iter().map(|z| complex(*z)).collect(),
        ),
        (None, None) => {
            let n = inp.n.unwrap_or(3);
            if n == 0 || n > 8 {
                return Err(Error::InvalidInput(format!("n = {n} outside 1..=8")));
            }
            let pts = separated_points(&mut rng, 2 * n, 2.0, 0.3);
            (pts[..n].to_vec(), pts[n..].to_vec())
        }
        _ => {
            return Err(Error::InvalidInput(
                "give both lambdas and mus, or neither".into(),
            ))
        }
    };
    let mut probes: Vec<C64> = (0..inp.probes.max(1))
        .map(|k| C64::from_polar(3.5, 0.37 + k as f64 * 0.61))
        .collect();
    let support: Vec<C64> = lambdas.iter().chain(mus.iter()).copied().collect();
    while probes.len() < 2 * inp.probes.max(1) {
        let z = C64::new(rng.gen_range(-2.5..2.5), rng.gen_range(-2.5..2.5));
        if support.iter().all(|w| (w - z).norm() > 0.1) {
            probes.push(z);
        }
    }
    let calibrated = calibrate_genus0()?;
    let (_, dev) = genus0_cauchy_solve(&lambdas, &mus, &probes)?;
    Ok(PipelineOutput {
        checks: vec![
            Check::holds(
                "calibrated convention is the frozen one",
                calibrated == GENUS0_CONVENTION,
            ),
            Check::below("product vs realization", dev, 1e-9),
        ],
        details: json!({
            "lambdas": lambdas.iter().map(|z| cjson(*z)).collect::<Vec<_>>(),
            "mus": mus.iter().map(|z| cjson(*z)).collect::<Vec<_>>(),
            "max_deviation": dev,
            "convention": GENUS0_CONVENTION,
        }),
        ..Default::default()
    })
}

fn probes_avoiding<R: Rng>(
    curve: &EllipticCurve,
    rng: &mut R,
    n: usize,
    avoid: &[C64],
    margin: f64,
) -> Vec<C64> {
    let mut out = Vec::new();
    while out.len() < n {
        let p = curve.random_interior_point(rng, 0.02);
        if avoid.iter().all(|&a| lattice_euclid(curve, p, a) > margin) {
            out.push(p);
        }
    }
    out
}

fn abel_fay(ctx: &Context) -> Result<PipelineOutput> {
    let inp: AbelFayInputs = ctx.scenario.inputs()?;
    let pf = ctx.prime_form()?;
    let curve = ctx.curve;
    let lambdas: Vec<C64> = inp.lambdas.iter().map(|p| point(&curve, *p)).collect();
    let mut mus: Vec<C64> = inp.mus.iter().map(|p| point(&curve, *p)).collect();
    if inp.enforce_abel && mus.pop().is_some() {
        let rest: C64 = mus.iter().sum();
        mus.push(curve.reduce(lambdas.iter().sum::<C64>() - rest).rep);
    }
    let d0 = inp.base.to_base(&curve, &ctx.tol)?;
    let mut avoid = lambdas.clone();
    avoid.extend_from_slice(&mus);
    avoid.push(d0.p1());
    avoid.push(d0.p0());
    let probes = probes_avoiding(&curve, &mut ctx.rng(), inp.probes.max(1), &avoid, 0.05);
    let rep = scalar_abel_fay_suite(&pf, &lambdas, &mus, &d0, &probes, &ctx.tol)?;
    let mut checks = vec![
        Check::below("Fay determinant", rep.fay_relative_error, 1e-8),
        Check::below("Gamma factorization", rep.factorization_error, 1e-8),
        Check::holds(
            "criterion agrees with invertibility",
            (rep.fay_theta > 1e-8) == rep.gamma_invertible,
        ),
    ];
    if rep.gamma_invertible {
        checks.push(Check::below("closed-form inverse", rep.inverse_error, 1e-8));
    }
    if let Some(v) = rep.intid_residual {
        checks.push(Check::below("interpolation identity", v, 1e-6));
    }
    if let Some(v) = rep.intid2_residual {
        checks.push(Check::below("base-point identity", v, 1e-6));
    }
    if let Some(v) = rep.intid2_residue_error {
        checks.push(Check::below("base-point identity residues", v, 1e-6));
    }
    Ok(PipelineOutput {
        checks,
        verdict: Some(if rep.abel { "abel" } else { "not-abel" }.into()),
        details: json!({
            "report": rep,
            "mus": mus.iter().map(|z| coords(&curve, *z)).collect::<Vec<_>>(),
        }),
        ..Default::default()
    })
}

fn kernels_check(ctx: &Context) -> Result<PipelineOutput> {
    let inp: KernelsCheckInputs = ctx.scenario.inputs()?;
    let pf = ctx.prime_form()?;
    let curve = ctx.curve;
    let d0 = inp.base.to_base(&curve, &ctx.tol)?;
    let w = point(&curve, inp.w);
    let (p1, p0) = (d0.p1(), d0.p0());
    if [p1, p0]
        .iter()
        .any(|&q| lattice_euclid(&curve, q, w) < 0.05)
    {
        return Err(Error::InvalidInput(
            "w must stay away from the base divisor".into(),
        ));
    }
    let k = BaseKernel::new(&pf, &d0)?;
    let probes = probes_avoiding(
        &curve,
        &mut ctx.rng(),
        inp.points.max(1),
        &[w, p1, p0],
        0.08,
    );
    let (mut direct, mut cauchy) = (0.0f64, 0.0f64);
    for &p in &probes {
        let f = k.f_w(w, p)?;
        let s = f.norm().max(1.0);
        direct = direct.max((pf.f_direct(p1, p0, w, p)? - f).norm() / s);
        cauchy = cauchy.max((k.f_w_cauchy(w, p)? - f).norm() / s);
    }
    let radius = (0.3
        * [
            lattice_euclid(&curve, w, p1),
            lattice_euclid(&curve, w, p0),
            lattice_euclid(&curve, p1, p0),
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min))
    .min(ctx.tol.contour_radius);
    let g = |p: C64| k.f_w(w, p);
    let res_w = laurent_coefficient(&g, &ContourSpec::new(w, radius), -1)?;
    let res_p1 = laurent_coefficient(&g, &ContourSpec::new(p1, radius), -1)?;
    let p = probes[0];
    let res_p0 = residue_in_base_point(
        &pf,
        p1,
        w,
        p,
        radius.min(0.3 * lattice_euclid(&curve, w, p)),
    )?;
    let eps = [1e-3, 1e-4];
    let dir = C64::new(0.6, 0.8);
    let c1 = continuity_spot_check(&pf, &d0, Perturb::P1, 1, w, p, dir, &eps)?;
    let c2 = continuity_spot_check(&pf, &d0, Perturb::P0, 2, w, p, dir, &eps)?;
    let ratio_err = |r: f64| (r / 10.0 - 1.0).abs();
    Ok(PipelineOutput {
        checks: vec![
            Check::below("kernel form vs theta quotient", direct, 1e-8),
            Check::below("kernel form vs Cauchy-kernel product", cauchy, 1e-8),
            Check::below("residue at w is 1", (res_w - 1.0).norm(), 1e-8),
            Check::below("residue at p1 is -1", (res_p1 + 1.0).norm(), 1e-7),
            Check::below(
                "residue in the base point is -1",
                (res_p0 + 1.0).norm(),
                1e-7,
            ),
            Check::below(
                "continuity in p1 (slope ratio off 10)",
                ratio_err(c1.ratios[0]),
                0.3,
            ),
            Check::below(
                "continuity in p0 (slope ratio off 10)",
                ratio_err(c2.ratios[0]),
                0.3,
            ),
        ],
        details: json!({
            "continuity_p1": { "epsilons": c1.epsilons, "deviations": c1.deviations, "ratios": c1.ratios },
            "continuity_p0": { "epsilons": c2.epsilons, "deviations": c2.deviations, "ratios": c2.ratios },
        }),
        functions: vec![(
            "f_w".into(),
            MeromorphicMatrixMap::scalar(
                std::sync::Arc::new(move |p| k.f_w(w, p)),
                vec![(curve.reduce(w), 1), (curve.reduce(p1), 1)],
                Some(FlatFactor::trivial(1)),
            ),
        )],
        ..Default::default()
    })
}
