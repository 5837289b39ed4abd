//! Scenario text in, report and optional CSV out.

use std::time::Instant;

use serde::Serialize;
use serde_json::{Map, Value};
use torus_interp::trivialize::{lattice_euclid, MeromorphicMatrixMap};
use torus_interp::{EllipticCurve, Error, Tolerances};

use crate::pipelines::{run_pipeline, Check, Context, PipelineOutput};
use crate::scenario::{merge_tolerances, SampleSpec, Scenario};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECKS_FAILED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    /// Replaces the bound of every residual check.
    pub tol: Option<f64>,
    /// Tolerance overrides from the config file.
    pub config: Map<String, Value>,
    pub timings: bool,
    pub samples: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    InputError,
    NumericalError,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleSummary {
    pub function: String,
    pub grid: [usize; 2],
    pub margin: f64,
    pub rows: usize,
    pub omitted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timings {
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub tool: &'static str,
    pub version: &'static str,
    pub status: Status,
    pub exit_code: i32,
    pub pipeline: Option<String>,
    pub seed: u64,
    pub scenario: Value,
    pub tolerances: Option<Tolerances>,
    pub verdict: Option<String>,
    pub checks: Vec<Check>,
    pub details: Value,
    pub samples: Option<SampleSummary>,
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
}

pub struct RunResult {
    pub report: Report,
    pub csv: Option<String>,
}

impl RunResult {
    pub fn exit_code(&self) -> i32 {
        self.report.exit_code
    }
}

fn empty_report(scenario: Value, seed: u64) -> Report {
    Report {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        status: Status::Pass,
        exit_code: EXIT_OK,
        pipeline: None,
        seed,
        scenario,
        tolerances: None,
        verdict: None,
        checks: Vec::new(),
        details: Value::Null,
        samples: None,
        error: None,
        timings: None,
    }
}

fn fail(mut report: Report, err: &Error) -> Report {
    let (status, code) = if err.is_input() {
        (Status::InputError, EXIT_INPUT)
    } else {
        (Status::NumericalError, EXIT_NUMERICAL)
    };
    report.status = status;
    report.exit_code = code;
    report.error = Some(err.to_string());
    report
}

pub fn run(text: &str, opts: &RunOptions) -> RunResult {
    let start = Instant::now();
    let echo: Value = serde_json::from_str(text).unwrap_or(Value::Null);
    let mut report = empty_report(echo, opts.seed.unwrap_or(0));
    let finish = |mut report: Report, csv: Option<String>| {
        if opts.timings {
            report.timings = Some(Timings {
                total_ms: start.elapsed().as_secs_f64() * 1e3,
            });
        }
        RunResult { report, csv }
    };
    let scenario = match Scenario::from_json(text) {
        Ok(s) => s,
        Err(e) => return finish(fail(report, &e), None),
    };
    report.pipeline = Some(scenario.pipeline.clone());
    report.seed = opts.seed.or(scenario.seed).unwrap_or(0);
    let setup = merge_tolerances(&[&opts.config, &scenario.tolerances])
        .and_then(|tol| Ok((tol, scenario.curve()?)));
    let (tol, curve) = match setup {
        Ok(v) => v,
        Err(e) => return finish(fail(report, &e), None),
    };
    report.tolerances = Some(tol);
    let ctx = Context {
        scenario: &scenario,
        curve,
        tol,
        seed: report.seed,
    };
    let out = match run_pipeline(&ctx) {
        Ok(o) => o,
        Err(e) => return finish(fail(report, &e), None),
    };
    let PipelineOutput {
        mut checks,
        verdict,
        details,
        indeterminate,
        functions,
    } = out;
    if let Some(t) = opts.tol {
        checks.iter_mut().for_each(|c| c.rebound(t));
    }
    report.verdict = verdict;
    report.details = details;
    report.checks = checks;
    let mut csv = None;
    if opts.samples {
        let spec = scenario.samples.clone().unwrap_or_default();
        match sample(&curve, &functions, &spec) {
            Ok((summary, text)) => {
                report.samples = Some(summary);
                csv = Some(text);
            }
            Err(e) => return finish(fail(report, &e), None),
        }
    }
    if let Some(msg) = indeterminate {
        report.status = Status::NumericalError;
        report.exit_code = EXIT_NUMERICAL;
        report.error = Some(format!("numerically indeterminate: {msg}"));
    } else if report.checks.iter().all(|c| c.passed) {
        report.status = Status::Pass;
        report.exit_code = EXIT_OK;
    } else {
        report.status = Status::Fail;
        report.exit_code = EXIT_CHECKS_FAILED;
    }
    finish(report, csv)
}

/// Cell-centred grid over the fundamental domain, dropping points within
/// `margin` of a declared pole or where evaluation hits one.
pub fn sample(
    curve: &EllipticCurve,
    functions: &[(String, MeromorphicMatrixMap)],
    spec: &SampleSpec,
) -> torus_interp::Result<(SampleSummary, String)> {
    let names: Vec<&str> = functions.iter().map(|f| f.0.as_str()).collect();
    let (name, map) = match &spec.function {
        Some(want) => functions.iter().find(|f| &f.0 == want),
        None => functions.first(),
    }
    .ok_or_else(|| match &spec.function {
        _ if names.is_empty() => {
            Error::InvalidInput("this pipeline constructs no function to sample".into())
        }
        Some(want) => Error::InvalidInput(format!(
            "unknown sample selector {want:?}; expected one of [{}]",
            names.join(", ")
        )),
        None => unreachable!("first() only fails on an empty list"),
    })?;
    let [ns, nt] = spec.grid;
    if ns == 0 || nt == 0 || !(spec.margin >= 0.0) {
        return Err(Error::InvalidInput(
            "grid sizes must be positive and the margin non-negative".into(),
        ));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let d = map.dim;
    let mut header = vec!["re_u".to_string(), "im_u".to_string()];
    for i in 0..d {
        for j in 0..d {
            header.push(format!("re_f_{i}_{j}"));
            header.push(format!("im_f_{i}_{j}"));
        }
    }
    let io = |e: csv::Error| Error::InvalidInput(format!("csv: {e}"));
    w.write_record(&header).map_err(io)?;
    let (mut rows, mut omitted) = (0, 0);
    for a in 0..ns {
        for b in 0..nt {
            let u = curve.from_coords((a as f64 + 0.5) / ns as f64, (b as f64 + 0.5) / nt as f64);
            if map
                .poles
                .iter()
                .any(|(p, _)| lattice_euclid(curve, u, p.rep) < spec.margin)
            {
                omitted += 1;
                continue;
            }
            let m = match map.eval(u) {
                Ok(m) => m,
                Err(Error::Pole(_)) => {
                    omitted += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let mut rec = vec![format!("{:e}", u.re), format!("{:e}", u.im)];
            for i in 0..d {
                for j in 0..d {
                    rec.push(format!("{:e}", m[(i, j)].re));
                    rec.push(format!("{:e}", m[(i, j)].im));
                }
            }
            w.write_record(&rec).map_err(io)?;
            rows += 1;
        }
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidInput(format!("csv: {e}")))?;
    let text = String::from_utf8(bytes).expect("csv output is utf-8");
    Ok((
        SampleSummary {
            function: name.clone(),
            grid: spec.grid,
            margin: spec.margin,
            rows,
            omitted,
        },
        text,
    ))
}
