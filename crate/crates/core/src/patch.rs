//! User intent applied on top of a [`ModelGraph`]: activation overrides,
//! enable/disable toggles and latent edits.
//!
//! Patch files are versioned JSON. The canonical text form has the top-level
//! keys in the order `version, activation_overrides, enable_overrides,
//! latent_edits, seed`, map keys sorted, no whitespace, and floats in shortest
//! round-trip form. `latent_edits` is an object (`{"index": value}`) for sparse
//! edits or an array for a whole-vector replacement.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::activation::{ActivationKind, ActivationSpec};
use crate::model::ModelGraph;
use crate::rng::normal_vector;
use crate::tensor::Tensor;

pub const PATCH_FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum LatentEdits {
    /// Individual components overwritten after sampling.
    Sparse(BTreeMap<usize, f32>),
    /// The whole latent vector, superseding sampling.
    Replace(Vec<f32>),
}

impl Default for LatentEdits {
    fn default() -> Self {
        LatentEdits::Sparse(BTreeMap::new())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PatchSet {
    pub activation_overrides: BTreeMap<String, ActivationSpec>,
    pub enable_overrides: BTreeMap<String, bool>,
    pub latent_edits: LatentEdits,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub code: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layer_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub param: Option<String>,
    pub message: String,
}

impl Issue {
    fn new(code: &str, layer_id: Option<&str>, message: impl Into<String>) -> Self {
        Self {
            code: code.to_string(),
            layer_id: layer_id.map(str::to_string),
            param: None,
            message: message.into(),
        }
    }
}

/// Outcome of [`PatchSet::validate`]. The patch applies iff `errors` is empty.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct ValidationReport {
    pub errors: Vec<Issue>,
    pub warnings: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn has_error(&self, code: &str) -> bool {
        self.errors.iter().any(|e| e.code == code)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PatchError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error ({code}): {message}")]
    Schema { code: String, message: String },
}

impl PatchError {
    /// Stable code: `parse_error` or the schema code.
    pub fn code(&self) -> &str {
        match self {
            PatchError::Parse { .. } => "parse_error",
            PatchError::Schema { code, .. } => code,
        }
    }
}

fn schema(code: &str, message: impl Into<String>) -> PatchError {
    PatchError::Schema {
        code: code.to_string(),
        message: message.into(),
    }
}

impl PatchSet {
    pub fn is_empty(&self) -> bool {
        *self == PatchSet::default()
    }

    /// Checks every reference and parameter against `graph`. Never fails; all
    /// problems are reported as data.
    pub fn validate(&self, graph: &ModelGraph) -> ValidationReport {
        let mut report = ValidationReport::default();
        let unknown = |id: &str| {
            Issue::new(
                "unknown_layer",
                Some(id),
                format!("no layer with id {id:?}"),
            )
        };

        for (id, spec) in &self.activation_overrides {
            if graph.layer(id).is_none() {
                report.errors.push(unknown(id));
            }
            for v in spec.violations() {
                report.errors.push(Issue {
                    param: v.param,
                    ..Issue::new(&v.code, Some(id), v.message)
                });
            }
            for w in spec.soft_range_warnings() {
                report.warnings.push(Issue {
                    param: w.param,
                    ..Issue::new(&w.code, Some(id), w.message)
                });
            }
        }
        for id in self.enable_overrides.keys() {
            if graph.layer(id).is_none() {
                report.errors.push(unknown(id));
            }
        }

        let dim = graph.latent_dim();
        let non_finite = |what: String| Issue::new("non_finite", None, format!("{what} must be finite"));
        match &self.latent_edits {
            LatentEdits::Sparse(edits) => {
                for (&i, v) in edits {
                    if i >= dim {
                        report.errors.push(Issue::new(
                            "latent_index_out_of_range",
                            None,
                            format!("latent index {i} is out of range for latent_dim {dim}"),
                        ));
                    }
                    if !v.is_finite() {
                        report.errors.push(non_finite(format!("latent edit {i}")));
                    }
                }
            }
            LatentEdits::Replace(values) => {
                if values.len() != dim {
                    report.errors.push(Issue::new(
                        "latent_length_mismatch",
                        None,
                        format!(
                            "replacement latent has {} components, expected {dim}",
                            values.len()
                        ),
                    ));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    report.errors.push(non_finite("replacement latent".to_string()));
                }
            }
        }
        report
    }

    /// The latent the generator should see: sampled from the patch's own seed
    /// (else `fallback_seed`), then edited.
    ///
    /// Panics if sparse edits index past `latent_dim`; run [`validate`](Self::validate) first.
    pub fn effective_latent(&self, latent_dim: usize, fallback_seed: u64) -> Tensor {
        match &self.latent_edits {
            LatentEdits::Replace(values) => Tensor::from_vec(values.clone()),
            LatentEdits::Sparse(edits) => {
                let mut z = normal_vector(self.seed.unwrap_or(fallback_seed), latent_dim);
                for (&i, &v) in edits {
                    z.data_mut()[i] = v;
                }
                z
            }
        }
    }

    /// Canonical JSON text. Equal patch sets produce byte-equal output.
    pub fn to_canonical_json(&self) -> String {
        let mut out = String::new();
        write!(out, "{{\"version\":{PATCH_FORMAT_VERSION},\"activation_overrides\":{{").unwrap();
        for (i, (id, spec)) in self.activation_overrides.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{}:{{\"kind\":\"{}\",\"params\":{{", json_str(id), spec.kind).unwrap();
            for (j, (name, v)) in spec.params.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                write!(out, "{}:{}", json_str(name), json_f32(*v)).unwrap();
            }
            out.push_str("}}");
        }
        out.push_str("},\"enable_overrides\":{");
        for (i, (id, on)) in self.enable_overrides.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{}:{on}", json_str(id)).unwrap();
        }
        out.push_str("},\"latent_edits\":");
        match &self.latent_edits {
            LatentEdits::Sparse(edits) => {
                out.push('{');
                for (i, (idx, v)) in edits.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    write!(out, "\"{idx}\":{}", json_f32(*v)).unwrap();
                }
                out.push('}');
            }
            LatentEdits::Replace(values) => {
                out.push('[');
                for (i, v) in values.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push_str(&json_f32(*v));
                }
                out.push(']');
            }
        }
        match self.seed {
            Some(s) => write!(out, ",\"seed\":{s}}}").unwrap(),
            None => out.push_str(",\"seed\":null}"),
        }
        out
    }

    pub fn from_json(text: &str) -> Result<Self, PatchError> {
        let value: Value = serde_json::from_str(text).map_err(|e| PatchError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Self::from_value(&value)
    }

    /// Builds a patch set from already-parsed JSON.
    pub fn from_value(value: &Value) -> Result<Self, PatchError> {
        let obj = value
            .as_object()
            .ok_or_else(|| schema("bad_type", "patch config must be a JSON object"))?;
        const KEYS: [&str; 5] = [
            "version",
            "activation_overrides",
            "enable_overrides",
            "latent_edits",
            "seed",
        ];
        if let Some(k) = obj.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(schema("unknown_key", format!("unknown top-level key {k:?}")));
        }

        match obj.get("version") {
            None => return Err(schema("missing_key", "missing key \"version\"")),
            Some(v) if v.as_u64() == Some(PATCH_FORMAT_VERSION) => {}
            Some(v) => return Err(schema("bad_version", format!("unsupported version {v}"))),
        }

        let mut patches = PatchSet::default();

        if let Some(v) = non_null(obj.get("activation_overrides")) {
            for (id, spec) in expect_object(v, "activation_overrides")? {
                patches
                    .activation_overrides
                    .insert(id.clone(), parse_activation(spec, id)?);
            }
        }

        if let Some(v) = non_null(obj.get("enable_overrides")) {
            for (id, flag) in expect_object(v, "enable_overrides")? {
                let on = flag.as_bool().ok_or_else(|| {
                    schema("bad_type", format!("enable_overrides.{id} must be a boolean"))
                })?;
                patches.enable_overrides.insert(id.clone(), on);
            }
        }

        patches.latent_edits = match non_null(obj.get("latent_edits")) {
            None => LatentEdits::default(),
            Some(Value::Object(map)) => {
                let mut edits = BTreeMap::new();
                for (k, v) in map {
                    let idx = k
                        .parse::<usize>()
                        .ok()
                        .filter(|_| k.bytes().all(|b| b.is_ascii_digit()))
                        .ok_or_else(|| schema("bad_index", format!("latent edit key {k:?} is not an index")))?;
                    edits.insert(idx, number(v, &format!("latent_edits.{k}"))?);
                }
                LatentEdits::Sparse(edits)
            }
            Some(Value::Array(items)) => LatentEdits::Replace(
                items
                    .iter()
                    .enumerate()
                    .map(|(i, v)| number(v, &format!("latent_edits[{i}]")))
                    .collect::<Result<_, _>>()?,
            ),
            Some(_) => {
                return Err(schema(
                    "bad_type",
                    "latent_edits must be an object or an array",
                ))
            }
        };

        patches.seed = match non_null(obj.get("seed")) {
            None => None,
            Some(v) => Some(
                v.as_u64()
                    .ok_or_else(|| schema("bad_type", "seed must be an unsigned 64-bit integer or null"))?,
            ),
        };
        Ok(patches)
    }
}

fn non_null(v: Option<&Value>) -> Option<&Value> {
    v.filter(|v| !v.is_null())
}

fn expect_object<'a>(
    v: &'a Value,
    what: &str,
) -> Result<&'a serde_json::Map<String, Value>, PatchError> {
    v.as_object()
        .ok_or_else(|| schema("bad_type", format!("{what} must be an object")))
}

fn number(v: &Value, what: &str) -> Result<f32, PatchError> {
    v.as_f64()
        .map(|x| x as f32)
        .ok_or_else(|| schema("bad_type", format!("{what} must be a number")))
}

/// Parses `{"kind": ..., "params": {...}}`. Parameter checks are left to validation.
pub fn parse_activation(v: &Value, at: &str) -> Result<ActivationSpec, PatchError> {
    let obj = expect_object(v, at)?;
    if let Some(k) = obj.keys().find(|k| *k != "kind" && *k != "params") {
        return Err(schema("unknown_key", format!("unknown key {k:?} in {at}")));
    }
    let kind_name = obj
        .get("kind")
        .ok_or_else(|| schema("missing_key", format!("{at} is missing \"kind\"")))?
        .as_str()
        .ok_or_else(|| schema("bad_type", format!("{at}.kind must be a string")))?;
    let kind: ActivationKind = kind_name.parse().map_err(|_| {
        schema(
            "unknown_activation",
            format!("unknown activation kind {kind_name:?} in {at}"),
        )
    })?;
    let mut params = BTreeMap::new();
    if let Some(p) = non_null(obj.get("params")) {
        for (name, value) in expect_object(p, &format!("{at}.params"))? {
            params.insert(name.clone(), number(value, &format!("{at}.params.{name}"))?);
        }
    }
    Ok(ActivationSpec { kind, params })
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

/// Shortest round-trip form, always with a decimal point or exponent.
fn json_f32(v: f32) -> String {
    serde_json::to_string(&v).expect("finite floats serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_toy_generator, GeneratorConfig};
    use crate::weights::random_init;

    fn graph() -> ModelGraph {
        let cfg = GeneratorConfig::default();
        build_toy_generator(cfg.clone(), random_init(&cfg, 1)).unwrap()
    }

    #[test]
    fn empty_canonical_form() {
        assert_eq!(
            PatchSet::default().to_canonical_json(),
            r#"{"version":1,"activation_overrides":{},"enable_overrides":{},"latent_edits":{},"seed":null}"#
        );
        assert!(PatchSet::default().validate(&graph()) == ValidationReport::default());
    }

    #[test]
    fn canonical_form_with_content() {
        let mut p = PatchSet::default();
        p.activation_overrides
            .insert("syn.0.conv".into(), ActivationSpec::sinlu(1.0, 2.5));
        p.activation_overrides
            .insert("map.0".into(), ActivationSpec::relun(6.0));
        p.enable_overrides.insert("syn.1.torgb".into(), false);
        p.latent_edits = LatentEdits::Sparse([(10, -0.5), (2, 0.0)].into_iter().collect());
        p.seed = Some(u64::MAX);
        let text = p.to_canonical_json();
        assert_eq!(
            text,
            concat!(
                r#"{"version":1,"activation_overrides":{"map.0":{"kind":"relun","params":{"n":6.0}},"#,
                r#""syn.0.conv":{"kind":"sinlu","params":{"a":1.0,"b":2.5}}},"#,
                r#""enable_overrides":{"syn.1.torgb":false},"latent_edits":{"2":0.0,"10":-0.5},"#,
                r#""seed":18446744073709551615}"#
            )
        );
        assert_eq!(PatchSet::from_json(&text).unwrap(), p);
    }

    #[test]
    fn replacement_latent_round_trip() {
        let p = PatchSet {
            latent_edits: LatentEdits::Replace(vec![0.1, -3.0, 1e-20]),
            ..PatchSet::default()
        };
        let text = p.to_canonical_json();
        assert!(text.contains(r#""latent_edits":[0.1,-3.0,1e-20]"#), "{text}");
        assert_eq!(PatchSet::from_json(&text).unwrap(), p);
    }

    #[test]
    fn validation_codes() {
        let g = graph();
        let mut p = PatchSet::default();
        p.activation_overrides
            .insert("nope".into(), ActivationSpec::relu());
        let r = p.validate(&g);
        assert!(r.has_error("unknown_layer"));
        assert_eq!(r.errors[0].layer_id.as_deref(), Some("nope"));

        let mut p = PatchSet::default();
        p.enable_overrides.insert("map.99".into(), true);
        assert!(p.validate(&g).has_error("unknown_layer"));

        let mut p = PatchSet::default();
        p.activation_overrides
            .insert("map.1".into(), ActivationSpec::poly(&[9.0, 9.0, 9.0, 9.0]));
        let r = p.validate(&g);
        assert!(r.is_ok());
        assert_eq!(r.warnings.len(), 4);
        assert!(r.warnings.iter().all(|w| w.code == "soft_range"));
        assert!(r.warnings[0].message.contains("[0.5, 1.5]"));

        let mut p = PatchSet::default();
        p.activation_overrides.insert(
            "map.1".into(),
            ActivationSpec::new(ActivationKind::Sinlu, &[("a", 1.0)]),
        );
        let r = p.validate(&g);
        assert!(r.has_error("missing_parameter"));
        assert_eq!(r.errors[0].param.as_deref(), Some("b"));

        let p = PatchSet {
            latent_edits: LatentEdits::Sparse([(64, 1.0)].into_iter().collect()),
            ..PatchSet::default()
        };
        assert!(p.validate(&g).has_error("latent_index_out_of_range"));

        let p = PatchSet {
            latent_edits: LatentEdits::Replace(vec![0.0; 3]),
            ..PatchSet::default()
        };
        assert!(p.validate(&g).has_error("latent_length_mismatch"));

        let p = PatchSet {
            latent_edits: LatentEdits::Sparse([(0, f32::INFINITY)].into_iter().collect()),
            ..PatchSet::default()
        };
        assert!(p.validate(&g).has_error("non_finite"));
    }

    #[test]
    fn effective_latent_rules() {
        let base = normal_vector(7, 64);
        assert!(PatchSet::default().effective_latent(64, 7).bit_eq(&base));

        let p = PatchSet {
            latent_edits: LatentEdits::Sparse([(0, 0.0)].into_iter().collect()),
            ..PatchSet::default()
        };
        let z = p.effective_latent(64, 7);
        assert_eq!(z.data()[0].to_bits(), 0);
        assert_eq!(&z.data()[1..], &base.data()[1..]);

        let p = PatchSet {
            seed: Some(7),
            ..PatchSet::default()
        };
        assert!(p.effective_latent(64, 1234).bit_eq(&base));

        let p = PatchSet {
            latent_edits: LatentEdits::Replace(vec![0.0; 64]),
            seed: Some(3),
            ..PatchSet::default()
        };
        for seed in [0, 1, 99] {
            assert!(p.effective_latent(64, seed).data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn parse_and_schema_errors() {
        match PatchSet::from_json("{\n  \"version\": 1,\n  oops\n}") {
            Err(PatchError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let bad_kind = r#"{"version":1,"activation_overrides":{"map.0":{"kind":"sinloo","params":{}}}}"#;
        assert_eq!(
            PatchSet::from_json(bad_kind).unwrap_err().code(),
            "unknown_activation"
        );
        let cases = [
            (r#"[]"#, "bad_type"),
            (r#"{}"#, "missing_key"),
            (r#"{"version":2}"#, "bad_version"),
            (r#"{"version":1,"extra":0}"#, "unknown_key"),
            (r#"{"version":1,"enable_overrides":{"map.0":1}}"#, "bad_type"),
            (r#"{"version":1,"latent_edits":{"-1":0.0}}"#, "bad_index"),
            (r#"{"version":1,"latent_edits":{"+1":0.0}}"#, "bad_index"),
            (r#"{"version":1,"latent_edits":"zero"}"#, "bad_type"),
            (r#"{"version":1,"seed":-5}"#, "bad_type"),
            (r#"{"version":1,"activation_overrides":{"m":{"params":{}}}}"#, "missing_key"),
            (r#"{"version":1,"activation_overrides":{"m":{"kind":"relu","p":{}}}}"#, "unknown_key"),
            (r#"{"version":1,"activation_overrides":{"m":{"kind":"relu","params":{"x":"1"}}}}"#, "bad_type"),
        ];
        for (text, code) in cases {
            assert_eq!(PatchSet::from_json(text).unwrap_err().code(), code, "{text}");
        }
    }

    #[test]
    fn lenient_optional_keys() {
        let p = PatchSet::from_json(r#"{"version":1,"seed":5}"#).unwrap();
        assert_eq!(p.seed, Some(5));
        assert!(p.activation_overrides.is_empty());
        let p = PatchSet::from_json(
            r#"{"version":1,"activation_overrides":{"map.0":{"kind":"shilu","params":{"a":2,"b":-1}}}}"#,
        )
        .unwrap();
        assert_eq!(p.activation_overrides["map.0"], ActivationSpec::shilu(2.0, -1.0));
    }
}
