//! Scenario files: curve, pipeline name, pipeline inputs, tolerances, seed.
//!
//! Points on the torus are lattice coordinates (s, t) meaning s + t tau;
//! complex numbers are [re, im]; matrices are row-major nested arrays of
//! complex numbers.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use torus_interp::divisors::{BaseDivisor, DivisorJson, MatrixJson};
use torus_interp::{EllipticCurve, Error, Result, Tolerances, C64};

pub type PointJson = [f64; 2];
pub type ComplexJson = [f64; 2];

pub const PIPELINES: [&str; 10] = [
    "theta-check",
    "trivialize",
    "extend",
    "simple-structure",
    "gamma",
    "solve-first",
    "solve-second",
    "genus0",
    "abel-fay",
    "kernels-check",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub pipeline: String,
    /// tau as [re, im]; Im tau > 0.
    #[serde(default = "default_tau")]
    pub tau: ComplexJson,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Partial tolerance overrides; unknown keys are rejected.
    #[serde(default)]
    pub tolerances: Map<String, Value>,
    #[serde(default)]
    pub inputs: Value,
    #[serde(default)]
    pub samples: Option<SampleSpec>,
}

fn default_tau() -> ComplexJson {
    [0.0, 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSpec {
    /// Name of the constructed function to sample.
    pub function: Option<String>,
    /// Grid size along s and t.
    #[serde(default = "default_grid")]
    pub grid: [usize; 2],
    /// Grid points closer than this to a declared pole are dropped.
    #[serde(default = "default_margin")]
    pub margin: f64,
}

fn default_grid() -> [usize; 2] {
    [50, 50]
}

fn default_margin() -> f64 {
    0.01
}

impl Default for SampleSpec {
    fn default() -> Self {
        SampleSpec {
            function: None,
            grid: default_grid(),
            margin: default_margin(),
        }
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)
            .map_err(|e| Error::InvalidInput(format!("scenario: {e}")))?;
        if !PIPELINES.contains(&s.pipeline.as_str()) {
            return Err(Error::InvalidInput(format!(
                "unknown pipeline {:?}; expected one of {}",
                s.pipeline,
                PIPELINES.join(", ")
            )));
        }
        Ok(s)
    }

    pub fn curve(&self) -> Result<EllipticCurve> {
        EllipticCurve::new(C64::new(self.tau[0], self.tau[1]))
    }

    pub fn inputs<T: serde::de::DeserializeOwned>(&self) -> Result<T> {
        let v = if self.inputs.is_null() {
            Value::Object(Map::new())
        } else {
            self.inputs.clone()
        };
        serde_json::from_value(v)
            .map_err(|e| Error::InvalidInput(format!("inputs for {}: {e}", self.pipeline)))
    }
}

/// Defaults, then the config file, then the scenario's own overrides.
pub fn merge_tolerances(layers: &[&Map<String, Value>]) -> Result<Tolerances> {
    let mut base = match serde_json::to_value(Tolerances::default()) {
        Ok(Value::Object(m)) => m,
        _ => unreachable!("Tolerances serializes to an object"),
    };
    for layer in layers {
        for (k, v) in layer.iter() {
            if !base.contains_key(k) {
                return Err(Error::InvalidInput(format!("unknown tolerance {k:?}")));
            }
            base.insert(k.clone(), v.clone());
        }
    }
    serde_json::from_value(Value::Object(base))
        .map_err(|e| Error::InvalidInput(format!("tolerances: {e}")))
}

pub fn point(curve: &EllipticCurve, p: PointJson) -> C64 {
    curve.reduce(curve.from_coords(p[0], p[1])).rep
}

pub fn complex(z: ComplexJson) -> C64 {
    C64::new(z[0], z[1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseJson {
    pub p1: PointJson,
    pub p0: PointJson,
}

impl BaseJson {
    pub fn to_base(&self, curve: &EllipticCurve, tol: &Tolerances) -> Result<BaseDivisor> {
        BaseDivisor::new(curve, point(curve, self.p1), point(curve, self.p0), tol)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaCheckInputs {
    #[serde(default = "twenty")]
    pub points: usize,
}

fn twenty() -> usize {
    20
}

fn one() -> usize {
    1
}

fn ten() -> usize {
    10
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Construction {
    Scalar,
    BlockTheta,
    SinglePole,
    Inductive,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrivializeInputs {
    pub construction: Construction,
    pub alpha: ComplexJson,
    #[serde(default = "one")]
    pub rank: usize,
    /// Pole of the single-pole construction and base point of the inductive one.
    #[serde(default)]
    pub pole: PointJson,
    #[serde(default = "twenty")]
    pub points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtendInputs {
    pub alpha: ComplexJson,
    pub rank: usize,
    /// Base point of the auxiliary single-pole functions.
    #[serde(default)]
    pub a: PointJson,
    #[serde(default = "twenty")]
    pub points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimpleVectorJson {
    pub at: PointJson,
    pub v: Vec<ComplexJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimpleDataJson {
    pub zeros: Vec<SimpleVectorJson>,
    pub poles: Vec<SimpleVectorJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimpleStructureInputs {
    pub construction: Construction,
    pub alpha: ComplexJson,
    #[serde(default = "one")]
    pub rank: usize,
    #[serde(default)]
    pub pole: PointJson,
    /// Data to check against instead of the construction's own.
    #[serde(default)]
    pub data: Option<SimpleDataJson>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MethodJson {
    Analytic,
    Contour,
    #[default]
    Both,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaInputs {
    pub divisor: DivisorJson,
    pub base: BaseJson,
    #[serde(default)]
    pub method: MethodJson,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveFirstInputs {
    pub divisor: DivisorJson,
    pub base: BaseJson,
    /// Value at the base point; identity when absent.
    #[serde(default)]
    pub u0: Option<MatrixJson>,
    #[serde(default = "twenty")]
    pub points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSecondInputs {
    pub divisor: DivisorJson,
    #[serde(default = "ten")]
    pub trials: usize,
    /// Explicit candidates; sampled from the seed when absent.
    #[serde(default)]
    pub candidates: Option<Vec<BaseJson>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Genus0Inputs {
    /// Random well-separated instance of this size when the points are absent.
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub lambdas: Option<Vec<ComplexJson>>,
    #[serde(default)]
    pub mus: Option<Vec<ComplexJson>>,
    #[serde(default = "twenty")]
    pub probes: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbelFayInputs {
    pub lambdas: Vec<PointJson>,
    pub mus: Vec<PointJson>,
    pub base: BaseJson,
    /// Replace the last pole so that the Abel condition holds.
    #[serde(default)]
    pub enforce_abel: bool,
    #[serde(default = "twenty")]
    pub probes: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelsCheckInputs {
    pub base: BaseJson,
    pub w: PointJson,
    #[serde(default = "twenty")]
    pub points: usize,
}
