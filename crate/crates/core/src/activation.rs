//! Base and parametric activation functions.
//!
//! An [`ActivationSpec`] is the loosely typed, serializable form (a kind plus a
//! name→value map). [`ActivationSpec::resolve`] checks it against the kind's
//! [`ParamSchema`] and yields an [`Activation`] that evaluates quickly.
//!
//! Parametric families:
//!
//! * `sinlu(a, b)`: `(x + a·sin(b·x))·σ(x)`
//! * `relun(n)`: `min(max(0, x), n)`
//! * `shilu(a, b)`: `a·relu(x) + b`
//! * `poly(degree, w0..w_degree)`: `(Σ_{i=0}^{d} w_i·σ(x)^i) / √2^d`
//!
//! Transcendentals and products are evaluated in `f64` and rounded once to `f32`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Relu,
    LeakyRelu,
    Sigmoid,
    Tanh,
    Silu,
    Sinlu,
    Relun,
    Shilu,
    Poly,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 9] = [
        ActivationKind::Relu,
        ActivationKind::LeakyRelu,
        ActivationKind::Sigmoid,
        ActivationKind::Tanh,
        ActivationKind::Silu,
        ActivationKind::Sinlu,
        ActivationKind::Relun,
        ActivationKind::Shilu,
        ActivationKind::Poly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActivationKind::Relu => "relu",
            ActivationKind::LeakyRelu => "leaky_relu",
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Silu => "silu",
            ActivationKind::Sinlu => "sinlu",
            ActivationKind::Relun => "relun",
            ActivationKind::Shilu => "shilu",
            ActivationKind::Poly => "poly",
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActivationKind {
    type Err = ActivationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ActivationKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| ActivationError::UnknownKind(s.to_string()))
    }
}

/// One problem with an [`ActivationSpec`]. `code` is a stable machine-readable tag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: String,
    pub param: Option<String>,
    pub message: String,
}

impl Violation {
    fn new(code: &str, param: Option<&str>, message: impl Into<String>) -> Self {
        Self {
            code: code.to_string(),
            param: param.map(str::to_string),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ActivationError {
    #[error("unknown activation kind {0:?}")]
    UnknownKind(String),
    #[error("invalid activation spec: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("curve range must satisfy x_min < x_max (got {x_min}..{x_max})")]
    BadRange { x_min: f32, x_max: f32 },
    #[error("curve needs at least 2 points, got {0}")]
    BadCount(usize),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| v.message.as_str())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Slider metadata for one parameter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamInfo {
    pub name: String,
    pub default: f32,
    /// Soft range for UI sliders. Values outside it are accepted with a warning.
    pub min: f32,
    pub max: f32,
    /// When set, `min` itself lies outside the soft range.
    pub min_exclusive: bool,
    /// Narrower range known to give gentle results, where one exists.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub suggested: Option<(f32, f32)>,
    /// Parameter must be an integer (only the polynomial degree).
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub integer: bool,
}

impl ParamInfo {
    fn new(name: &str, default: f32, min: f32, max: f32) -> Self {
        Self {
            name: name.to_string(),
            default,
            min,
            max,
            min_exclusive: false,
            suggested: None,
            integer: false,
        }
    }

    pub fn in_soft_range(&self, v: f32) -> bool {
        let above = if self.min_exclusive {
            v > self.min
        } else {
            v >= self.min
        };
        above && v <= self.max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamSchema {
    pub kind: ActivationKind,
    pub params: Vec<ParamInfo>,
}

pub const POLY_MAX_DEGREE: u32 = 3;
const POLY_DEFAULT_DEGREE: u32 = 3;
const POLY_SOFT: (f32, f32) = (0.5, 1.5);
const POLY_SUGGESTED: (f32, f32) = (0.8, 1.2);

impl ParamSchema {
    /// Schema for `kind`; polynomials use the default degree (3).
    pub fn for_kind(kind: ActivationKind) -> Self {
        match kind {
            ActivationKind::Poly => Self::poly(POLY_DEFAULT_DEGREE),
            _ => Self {
                kind,
                params: match kind {
                    ActivationKind::LeakyRelu => vec![ParamInfo::new("slope", 0.2, 0.0, 1.0)],
                    ActivationKind::Sinlu => vec![
                        ParamInfo::new("a", 1.0, -5.0, 5.0),
                        ParamInfo::new("b", 1.0, -5.0, 5.0),
                    ],
                    ActivationKind::Relun => vec![ParamInfo {
                        min_exclusive: true,
                        ..ParamInfo::new("n", 6.0, 0.0, 20.0)
                    }],
                    ActivationKind::Shilu => vec![
                        ParamInfo::new("a", 1.0, -5.0, 5.0),
                        ParamInfo::new("b", 0.0, -5.0, 5.0),
                    ],
                    _ => Vec::new(),
                },
            },
        }
    }

    /// Polynomial schema: `degree` followed by weights `w0..w{degree}`.
    pub fn poly(degree: u32) -> Self {
        let mut params = vec![ParamInfo {
            integer: true,
            ..ParamInfo::new("degree", degree as f32, 1.0, POLY_MAX_DEGREE as f32)
        }];
        params.extend((0..=degree).map(|i| ParamInfo {
            suggested: Some(POLY_SUGGESTED),
            ..ParamInfo::new(&format!("w{i}"), 1.0, POLY_SOFT.0, POLY_SOFT.1)
        }));
        Self {
            kind: ActivationKind::Poly,
            params,
        }
    }

    pub fn get(&self, name: &str) -> Option<&ParamInfo> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn defaults(&self) -> BTreeMap<String, f32> {
        self.params
            .iter()
            .map(|p| (p.name.clone(), p.default))
            .collect()
    }
}

pub fn param_schema(kind: ActivationKind) -> ParamSchema {
    ParamSchema::for_kind(kind)
}

/// Serializable activation choice: `{"kind": "sinlu", "params": {"a": 1.0, "b": 2.5}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationSpec {
    pub kind: ActivationKind,
    #[serde(default)]
    pub params: BTreeMap<String, f32>,
}

impl ActivationSpec {
    pub fn new(kind: ActivationKind, params: &[(&str, f32)]) -> Self {
        Self {
            kind,
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    /// The kind with every parameter at its schema default.
    pub fn with_defaults(kind: ActivationKind) -> Self {
        Self {
            kind,
            params: ParamSchema::for_kind(kind).defaults(),
        }
    }

    /// Schema defaults overlaid with `overrides`. A polynomial `degree` override
    /// selects the weight count before defaults are filled in.
    pub fn with_overrides(kind: ActivationKind, overrides: &BTreeMap<String, f32>) -> Self {
        let schema = match (kind, overrides.get("degree")) {
            (ActivationKind::Poly, Some(&d)) if d.fract() == 0.0 && (1.0..=3.0).contains(&d) => {
                ParamSchema::poly(d as u32)
            }
            _ => ParamSchema::for_kind(kind),
        };
        let mut params = schema.defaults();
        params.extend(overrides.iter().map(|(k, v)| (k.clone(), *v)));
        Self { kind, params }
    }

    pub fn relu() -> Self {
        Self::new(ActivationKind::Relu, &[])
    }

    pub fn leaky_relu(slope: f32) -> Self {
        Self::new(ActivationKind::LeakyRelu, &[("slope", slope)])
    }

    pub fn tanh() -> Self {
        Self::new(ActivationKind::Tanh, &[])
    }

    pub fn sinlu(a: f32, b: f32) -> Self {
        Self::new(ActivationKind::Sinlu, &[("a", a), ("b", b)])
    }

    pub fn relun(n: f32) -> Self {
        Self::new(ActivationKind::Relun, &[("n", n)])
    }

    pub fn shilu(a: f32, b: f32) -> Self {
        Self::new(ActivationKind::Shilu, &[("a", a), ("b", b)])
    }

    pub fn poly(weights: &[f32]) -> Self {
        let mut params = BTreeMap::new();
        params.insert("degree".to_string(), weights.len().saturating_sub(1) as f32);
        for (i, w) in weights.iter().enumerate() {
            params.insert(format!("w{i}"), *w);
        }
        Self {
            kind: ActivationKind::Poly,
            params,
        }
    }

    /// Schema this spec is checked against (for polynomials, the one matching its degree).
    pub fn schema(&self) -> ParamSchema {
        match self.poly_degree() {
            Some(d) => ParamSchema::poly(d),
            None => ParamSchema::for_kind(self.kind),
        }
    }

    fn poly_degree(&self) -> Option<u32> {
        if self.kind != ActivationKind::Poly {
            return None;
        }
        let d = *self.params.get("degree")?;
        (d.fract() == 0.0 && d >= 1.0 && d <= POLY_MAX_DEGREE as f32).then_some(d as u32)
    }

    /// Hard validity errors. An empty list means the spec can be evaluated.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (name, v) in &self.params {
            if !v.is_finite() {
                out.push(Violation::new(
                    "non_finite",
                    Some(name),
                    format!("parameter {name} must be finite"),
                ));
            }
        }

        let schema = if self.kind == ActivationKind::Poly {
            match self.params.get("degree") {
                None => {
                    out.push(Violation::new(
                        "missing_parameter",
                        Some("degree"),
                        "missing parameter degree",
                    ));
                    return out;
                }
                Some(&d) => match self.poly_degree() {
                    Some(deg) => {
                        let weights = self.params.keys().filter(|k| is_weight_name(k)).count();
                        if weights != deg as usize + 1 {
                            out.push(Violation::new(
                                "weight_count",
                                None,
                                format!("expected {} weights, got {weights}", deg + 1),
                            ));
                        }
                        ParamSchema::poly(deg)
                    }
                    None => {
                        out.push(Violation::new(
                            "bad_degree",
                            Some("degree"),
                            format!("degree must be 1, 2 or 3, got {d}"),
                        ));
                        return out;
                    }
                },
            }
        } else {
            ParamSchema::for_kind(self.kind)
        };

        for p in &schema.params {
            if !self.params.contains_key(&p.name) {
                out.push(Violation::new(
                    "missing_parameter",
                    Some(&p.name),
                    format!("missing parameter {}", p.name),
                ));
            }
        }
        if let (ActivationKind::Relun, Some(&n)) = (self.kind, self.params.get("n")) {
            if n.is_finite() && n <= 0.0 {
                out.push(Violation::new(
                    "out_of_domain",
                    Some("n"),
                    format!("ReLUN cap n must be positive, got {n}"),
                ));
            }
        }
        for name in self.params.keys() {
            if schema.get(name).is_none() {
                out.push(Violation::new(
                    "unknown_parameter",
                    Some(name),
                    format!("unknown parameter {name} for {}", self.kind),
                ));
            }
        }
        out
    }

    /// Parameters outside their soft (slider) range. Never blocks evaluation.
    pub fn soft_range_warnings(&self) -> Vec<Violation> {
        let schema = self.schema();
        self.params
            .iter()
            .filter_map(|(name, &v)| {
                let info = schema.get(name)?;
                (!info.in_soft_range(v)).then(|| {
                    let open = if info.min_exclusive { '(' } else { '[' };
                    Violation::new(
                        "soft_range",
                        Some(name),
                        format!(
                            "parameter {name}={v} is outside the soft range {open}{}, {}]",
                            info.min, info.max
                        ),
                    )
                })
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), Vec<Violation>> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(v)
        }
    }

    pub fn resolve(&self) -> Result<Activation, ActivationError> {
        self.validate().map_err(ActivationError::Invalid)?;
        let p = |name: &str| self.params[name];
        Ok(match self.kind {
            ActivationKind::Relu => Activation::Relu,
            ActivationKind::LeakyRelu => Activation::LeakyRelu { slope: p("slope") },
            ActivationKind::Sigmoid => Activation::Sigmoid,
            ActivationKind::Tanh => Activation::Tanh,
            ActivationKind::Silu => Activation::Silu,
            ActivationKind::Sinlu => Activation::SinLu { a: p("a"), b: p("b") },
            ActivationKind::Relun => Activation::ReluN { n: p("n") },
            ActivationKind::Shilu => Activation::ShiLu { a: p("a"), b: p("b") },
            ActivationKind::Poly => {
                let degree = self.poly_degree().expect("validated");
                Activation::Poly {
                    weights: (0..=degree).map(|i| p(&format!("w{i}"))).collect(),
                }
            }
        })
    }
}

fn is_weight_name(name: &str) -> bool {
    name.strip_prefix('w')
        .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
}

/// A validated activation ready for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu { slope: f32 },
    Sigmoid,
    Tanh,
    Silu,
    SinLu { a: f32, b: f32 },
    ReluN { n: f32 },
    ShiLu { a: f32, b: f32 },
    Poly { weights: Vec<f32> },
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn relu(x: f32) -> f32 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// `√2^d`, exact for even `d`.
fn sqrt2_pow(d: usize) -> f64 {
    let even = 2f64.powi((d / 2) as i32);
    if d % 2 == 1 {
        even * std::f64::consts::SQRT_2
    } else {
        even
    }
}

impl Activation {
    pub fn eval(&self, x: f32) -> f32 {
        let xd = x as f64;
        match self {
            Activation::Relu => relu(x),
            Activation::LeakyRelu { slope } => {
                if x >= 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Activation::Sigmoid => sigmoid(xd) as f32,
            Activation::Tanh => xd.tanh() as f32,
            Activation::Silu => (xd * sigmoid(xd)) as f32,
            Activation::SinLu { a, b } => {
                ((xd + *a as f64 * (*b as f64 * xd).sin()) * sigmoid(xd)) as f32
            }
            Activation::ReluN { n } => relu(x).min(*n),
            Activation::ShiLu { a, b } => {
                if x > 0.0 {
                    (*a as f64 * xd + *b as f64) as f32
                } else {
                    *b
                }
            }
            Activation::Poly { weights } => {
                let s = sigmoid(xd);
                let mut power = 1.0f64;
                let mut sum = 0.0f64;
                for w in weights {
                    sum += *w as f64 * power;
                    power *= s;
                }
                (sum / sqrt2_pow(weights.len() - 1)) as f32
            }
        }
    }

    pub fn apply(&self, x: &Tensor) -> Tensor {
        x.map(|v| self.eval(v))
    }
}

pub fn eval_scalar(spec: &ActivationSpec, x: f32) -> Result<f32, ActivationError> {
    Ok(spec.resolve()?.eval(x))
}

pub fn eval_tensor(spec: &ActivationSpec, x: &Tensor) -> Result<Tensor, ActivationError> {
    Ok(spec.resolve()?.apply(x))
}

/// `n` evenly spaced samples over `[x_min, x_max]`, both endpoints included exactly.
pub fn sample_curve(
    spec: &ActivationSpec,
    x_min: f32,
    x_max: f32,
    n: usize,
) -> Result<Vec<(f32, f32)>, ActivationError> {
    if !x_min.is_finite() || !x_max.is_finite() || x_min >= x_max {
        return Err(ActivationError::BadRange { x_min, x_max });
    }
    if n < 2 {
        return Err(ActivationError::BadCount(n));
    }
    let act = spec.resolve()?;
    let (lo, hi) = (x_min as f64, x_max as f64);
    Ok((0..n)
        .map(|i| {
            let x = if i == n - 1 {
                x_max
            } else {
                (lo + (hi - lo) * i as f64 / (n - 1) as f64) as f32
            };
            (x, act.eval(x))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    // (1 + sin 1)·σ(1), from an independent f64 evaluation.
    const SINLU_11_AT_1: f32 = 1.346_223_2;

    fn grid(lo: f32, hi: f32, n: usize) -> impl Iterator<Item = f32> {
        (0..n).map(move |i| lo + (hi - lo) * i as f32 / (n - 1) as f32)
    }

    fn eval(spec: &ActivationSpec, x: f32) -> f32 {
        eval_scalar(spec, x).unwrap()
    }

    #[test]
    fn kind_names_round_trip() {
        for k in ActivationKind::ALL {
            assert_eq!(k.as_str().parse::<ActivationKind>().unwrap(), k);
            assert_eq!(
                serde_json::to_string(&k).unwrap(),
                format!("\"{}\"", k.as_str())
            );
        }
        assert_eq!(
            "sinloo".parse::<ActivationKind>(),
            Err(ActivationError::UnknownKind("sinloo".into()))
        );
    }

    #[test]
    fn sinlu_examples() {
        for (a, b) in [(0.0, 0.0), (3.0, -2.0), (1.0, 7.0)] {
            assert_eq!(eval(&ActivationSpec::sinlu(a, b), 0.0), 0.0);
        }
        let y = eval(&ActivationSpec::sinlu(1.0, 1.0), 1.0);
        assert!((y - SINLU_11_AT_1).abs() <= 1e-6, "{y}");
    }

    #[test]
    fn sinlu_zero_amplitude_is_silu() {
        let silu = ActivationSpec::new(ActivationKind::Silu, &[]);
        for b in [0.0, 1.0, -4.5] {
            let spec = ActivationSpec::sinlu(0.0, b);
            for x in grid(-10.0, 10.0, 10_000) {
                assert!((eval(&spec, x) - eval(&silu, x)).abs() <= 1e-7);
            }
        }
    }

    #[test]
    fn relun_examples() {
        let s = ActivationSpec::relun(3.0);
        assert_eq!(eval(&s, 5.0), 3.0);
        assert_eq!(eval(&s, -2.0), 0.0);
        assert_eq!(eval(&s, 1.5), 1.5);
        for x in grid(-50.0, 50.0, 1001) {
            let y = eval(&s, x);
            assert!((0.0..=3.0).contains(&y));
        }
    }

    #[test]
    fn relun_cap_must_be_positive() {
        for n in [0.0, -1.0] {
            let codes: Vec<_> = ActivationSpec::relun(n)
                .violations()
                .into_iter()
                .map(|v| v.code)
                .collect();
            assert_eq!(codes, ["out_of_domain"]);
        }
        assert!(ActivationSpec::relun(25.0).validate().is_ok());
    }

    #[test]
    fn relun_huge_n_is_relu() {
        let s = ActivationSpec::relun(1e6);
        for x in grid(-100.0, 100.0, 10_000) {
            assert_eq!(eval(&s, x), eval(&ActivationSpec::relu(), x));
        }
    }

    #[test]
    fn shilu_examples() {
        let s = ActivationSpec::shilu(1.5, -0.5);
        assert_eq!(eval(&s, 2.0), 2.5);
        for x in grid(-10.0, 0.0, 500) {
            assert_eq!(eval(&s, x), -0.5);
        }
        let neutral = ActivationSpec::shilu(1.0, 0.0);
        for x in grid(-10.0, 10.0, 10_000) {
            assert_eq!(
                eval(&neutral, x).to_bits(),
                eval(&ActivationSpec::relu(), x).to_bits()
            );
        }
    }

    #[test]
    fn poly_examples() {
        assert_eq!(eval(&ActivationSpec::poly(&[1.0, 1.0, 1.0]), 0.0), 0.875);
        let as_sigmoid = ActivationSpec::poly(&[0.0, std::f32::consts::SQRT_2]);
        let sig = ActivationSpec::new(ActivationKind::Sigmoid, &[]);
        for x in grid(-10.0, 10.0, 10_000) {
            assert!((eval(&as_sigmoid, x) - eval(&sig, x)).abs() <= 1e-7);
        }
        let cubic = ActivationSpec::poly(&[0.0, std::f32::consts::SQRT_2, 0.0, 0.0]);
        assert!((eval(&cubic, 0.0) - 0.5 / 2.0).abs() <= 1e-7);
    }

    #[test]
    fn sinlu_continuity_in_amplitude() {
        let base = ActivationSpec::sinlu(0.0, 2.0);
        for delta in [1.0f32, 0.1, 0.01] {
            let spec = ActivationSpec::sinlu(delta, 2.0);
            let worst = grid(-10.0, 10.0, 4001)
                .map(|x| (eval(&spec, x) - eval(&base, x)).abs())
                .fold(0.0f32, f32::max);
            // allow f32 rounding of the two outputs
            assert!(worst <= delta + 4e-6, "delta {delta}: {worst}");
        }
    }

    #[test]
    fn tensor_eval_matches_scalar() {
        let x = Tensor::from_vec(vec![-1.0, 0.0, 2.0]);
        let y = eval_tensor(&ActivationSpec::relu(), &x).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0, 2.0]);

        let data: Vec<f32> = crate::rng::normal_vector(4, 16).into_data();
        let x = Tensor::new(&[4, 4], data).unwrap();
        for spec in [
            ActivationSpec::sinlu(1.3, -2.0),
            ActivationSpec::poly(&[0.9, 1.1, 1.2, 0.7]),
            ActivationSpec::shilu(-2.0, 0.5),
        ] {
            let y = eval_tensor(&spec, &x).unwrap();
            assert_eq!(y.shape(), x.shape());
            for (yi, xi) in y.data().iter().zip(x.data()) {
                assert_eq!(yi.to_bits(), eval(&spec, *xi).to_bits());
            }
        }
    }

    #[test]
    fn curve_sampling() {
        let pts = sample_curve(&ActivationSpec::relu(), -1.0, 1.0, 3).unwrap();
        assert_eq!(pts, vec![(-1.0, 0.0), (0.0, 0.0), (1.0, 1.0)]);

        let pts = sample_curve(&ActivationSpec::sinlu(1.0, 1.0), -5.0, 5.0, 101).unwrap();
        assert_eq!(pts.len(), 101);
        assert_eq!(pts[0].0, -5.0);
        assert_eq!(pts[100].0, 5.0);
        assert_eq!(pts[60].0, 1.0);
        assert!((pts[60].1 - SINLU_11_AT_1).abs() <= 1e-6);

        let pts = sample_curve(&ActivationSpec::relu(), -0.3, 0.7, 7).unwrap();
        assert_eq!((pts[0].0, pts[6].0), (-0.3, 0.7));

        assert!(matches!(
            sample_curve(&ActivationSpec::relu(), 1.0, 1.0, 3),
            Err(ActivationError::BadRange { .. })
        ));
        assert_eq!(
            sample_curve(&ActivationSpec::relu(), 0.0, 1.0, 1),
            Err(ActivationError::BadCount(1))
        );
    }

    #[test]
    fn schema_defaults() {
        let shilu = param_schema(ActivationKind::Shilu).defaults();
        assert_eq!(shilu["a"], 1.0);
        assert_eq!(shilu["b"], 0.0);
        let sinlu = param_schema(ActivationKind::Sinlu);
        assert_eq!(sinlu.defaults()["a"], 1.0);
        assert_eq!((sinlu.params[1].min, sinlu.params[1].max), (-5.0, 5.0));
        let relun = param_schema(ActivationKind::Relun);
        assert_eq!(relun.params[0].default, 6.0);
        assert!(relun.params[0].min_exclusive);
        let poly = param_schema(ActivationKind::Poly);
        assert_eq!(poly.params.len(), 5);
        for w in &poly.params[1..] {
            assert_eq!((w.min, w.max, w.default), (0.5, 1.5, 1.0));
        }
        for kind in ActivationKind::ALL {
            let schema = param_schema(kind);
            for p in &schema.params {
                assert!(p.min < p.max);
                assert!(p.default >= p.min && p.default <= p.max, "{kind} {}", p.name);
            }
            assert!(ActivationSpec::with_defaults(kind).violations().is_empty());
        }
    }

    #[test]
    fn validation_messages() {
        let missing_b = ActivationSpec::new(ActivationKind::Sinlu, &[("a", 1.0)]);
        let v = missing_b.violations();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].message, "missing parameter b");
        assert_eq!(v[0].code, "missing_parameter");

        let mut poly = ActivationSpec::poly(&[1.0, 1.0, 1.0]);
        poly.params.insert("degree".into(), 3.0);
        let v = poly.violations();
        assert!(v.iter().any(|v| v.message.starts_with("expected 4 weights")));

        let extra = ActivationSpec::new(ActivationKind::Relu, &[("q", 1.0)]);
        assert_eq!(extra.violations()[0].code, "unknown_parameter");

        let nan = ActivationSpec::sinlu(f32::NAN, 1.0);
        assert_eq!(nan.violations()[0].code, "non_finite");
        assert!(matches!(nan.resolve(), Err(ActivationError::Invalid(_))));

        let bad_degree = ActivationSpec::poly(&[1.0; 6]);
        assert_eq!(bad_degree.violations()[0].code, "bad_degree");
    }

    #[test]
    fn soft_range_is_a_warning() {
        let wild = ActivationSpec::poly(&[9.0, 9.0, 9.0, 9.0]);
        assert!(wild.violations().is_empty());
        let w = wild.soft_range_warnings();
        assert_eq!(w.len(), 4);
        assert!(w.iter().all(|w| w.code == "soft_range"));
        assert!(ActivationSpec::relun(0.0).soft_range_warnings().len() == 1);
        assert!(ActivationSpec::relun(20.0).soft_range_warnings().is_empty());
        assert!(eval_scalar(&wild, 0.3).is_ok());
    }

    #[test]
    fn overrides_fill_defaults() {
        let mut o = BTreeMap::new();
        o.insert("degree".to_string(), 1.0);
        o.insert("w1".to_string(), 1.2);
        let spec = ActivationSpec::with_overrides(ActivationKind::Poly, &o);
        assert_eq!(spec.params.len(), 3);
        assert_eq!(spec.params["w1"], 1.2);
        assert!(spec.violations().is_empty());
    }

    #[test]
    fn spec_json_shape() {
        let s = ActivationSpec::sinlu(1.0, 2.5);
        assert_eq!(
            serde_json::to_string(&s).unwrap(),
            r#"{"kind":"sinlu","params":{"a":1.0,"b":2.5}}"#
        );
    }
}
