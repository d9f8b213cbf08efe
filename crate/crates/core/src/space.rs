//! Named hyperparameter dimensions and their maps from the unit interval.
//!
//! Each dimension maps a genotype coordinate `x ∈ [0,1]` through one of five
//! closed-form transforms with constants `(a, b)`:
//!
//! | kind              | value                 |
//! |-------------------|-----------------------|
//! | `linear`          | `a + b·x`             |
//! | `pow10_affine`    | `10^(a + b·x)`        |
//! | `pow2_affine`     | `2^(a + b·x)`         |
//! | `double_exp10`    | `10^(a + 10^(b·x))`   |
//! | `one_minus_pow10` | `1 − 10^(a + b·x)`    |
//!
//! Integer dimensions round half-up after the continuous transform and are
//! inverted from the continuous value.
//!
//! # Space files
//!
//! A space file is TOML with one `[[param]]` table per dimension, in genotype
//! order. Every field is required and the serializer writes them in this
//! order:
//!
//! ```toml
//! [[param]]
//! name = "batch_size_e0"
//! kind = "pow2_affine"
//! a = 4.0
//! b = 4.0
//! integer_round = true
//! lo = 16.0
//! hi = 256.0
//! ```
//!
//! `lo`/`hi` is the declared range. It is checked against the transform
//! endpoints for every kind except `double_exp10`, where it is reporting
//! metadata only.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance for endpoint checks and for accepting values at the
/// edge of a dimension's image in [`SearchSpace::inverse_transform`].
const EDGE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("malformed space file: {0}")]
    Malformed(String),
    #[error("line {line}: {field}: {msg}")]
    Field {
        line: usize,
        field: &'static str,
        msg: String,
    },
    #[error("duplicate parameter name '{0}'")]
    Duplicate(String),
    #[error("unknown builtin space '{0}' (known: mnist_adadelta, mnist_adam)")]
    UnknownBuiltin(String),
    #[error("genotype has {got} coordinates, space has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("coordinate {index} ({name}) = {value} lies outside [0,1]")]
    OutOfCube { index: usize, name: String, value: f64 },
    #[error("value {value} for '{name}' lies outside [{lo}, {hi}]")]
    OutOfImage { name: String, value: f64, lo: f64, hi: f64 },
    #[error("missing value for '{0}'")]
    MissingValue(String),
    #[error("invalid parameter '{name}': {msg}")]
    Invalid { name: String, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Linear,
    Pow10Affine,
    Pow2Affine,
    DoubleExp10,
    OneMinusPow10,
}

impl TransformKind {
    pub const ALL: [TransformKind; 5] = [
        TransformKind::Linear,
        TransformKind::Pow10Affine,
        TransformKind::Pow2Affine,
        TransformKind::DoubleExp10,
        TransformKind::OneMinusPow10,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TransformKind::Linear => "linear",
            TransformKind::Pow10Affine => "pow10_affine",
            TransformKind::Pow2Affine => "pow2_affine",
            TransformKind::DoubleExp10 => "double_exp10",
            TransformKind::OneMinusPow10 => "one_minus_pow10",
        }
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TransformKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TransformKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown kind '{s}'"))
    }
}

/// One named dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub kind: TransformKind,
    pub a: f64,
    pub b: f64,
    pub integer_round: bool,
    pub lo: f64,
    pub hi: f64,
}

impl ParamSpec {
    pub fn new(name: &str, kind: TransformKind, a: f64, b: f64, integer_round: bool, lo: f64, hi: f64) -> Self {
        Self {
            name: name.to_string(),
            kind,
            a,
            b,
            integer_round,
            lo,
            hi,
        }
    }

    /// Spec whose declared range is its transform's image over `[0,1]`.
    pub fn derived(name: &str, kind: TransformKind, a: f64, b: f64, integer_round: bool) -> Self {
        let mut p = Self::new(name, kind, a, b, integer_round, 0.0, 0.0);
        let (e0, e1) = (p.continuous(0.0), p.continuous(1.0));
        p.lo = e0.min(e1);
        p.hi = e0.max(e1);
        p
    }

    /// Transform without integer rounding.
    pub fn continuous(&self, x: f64) -> f64 {
        let (a, b) = (self.a, self.b);
        match self.kind {
            TransformKind::Linear => a + b * x,
            TransformKind::Pow10Affine => pow10(a + b * x),
            TransformKind::Pow2Affine => (a + b * x).exp2(),
            TransformKind::DoubleExp10 => pow10(a + pow10(b * x)),
            TransformKind::OneMinusPow10 => 1.0 - pow10(a + b * x),
        }
    }

    /// Transform including integer rounding (half-up).
    pub fn value(&self, x: f64) -> f64 {
        let v = self.continuous(x);
        if self.integer_round {
            (v + 0.5).floor()
        } else {
            v
        }
    }

    /// Continuous-value inverse, without range checks.
    fn inverse_unchecked(&self, v: f64) -> f64 {
        let (a, b) = (self.a, self.b);
        match self.kind {
            TransformKind::Linear => (v - a) / b,
            TransformKind::Pow10Affine => (v.log10() - a) / b,
            TransformKind::Pow2Affine => (v.log2() - a) / b,
            TransformKind::DoubleExp10 => (v.log10() - a).log10() / b,
            TransformKind::OneMinusPow10 => ((1.0 - v).log10() - a) / b,
        }
    }

    /// Image of `[0,1]` under the continuous transform, as `(min, max)`.
    pub fn image(&self) -> (f64, f64) {
        let (e0, e1) = (self.continuous(0.0), self.continuous(1.0));
        (e0.min(e1), e0.max(e1))
    }

    /// Genotype coordinate producing continuous value `v`.
    pub fn inverse(&self, v: f64) -> Result<f64, SpaceError> {
        let (lo, hi) = self.image();
        let slack = EDGE_TOL * lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
        if !v.is_finite() || v < lo - slack || v > hi + slack {
            return Err(SpaceError::OutOfImage {
                name: self.name.clone(),
                value: v,
                lo,
                hi,
            });
        }
        Ok(self.inverse_unchecked(v).clamp(0.0, 1.0))
    }

    fn check(&self) -> Result<(), String> {
        if self.name.is_empty() {
            return Err("name must not be empty".into());
        }
        if !self.a.is_finite() || !self.b.is_finite() {
            return Err("constants a and b must be finite".into());
        }
        if self.b == 0.0 {
            return Err("b must be non-zero (transform must be strictly monotone)".into());
        }
        if !(self.lo <= self.hi) {
            return Err(format!("declared range [{}, {}] is empty", self.lo, self.hi));
        }
        let (e0, e1) = (self.continuous(0.0), self.continuous(1.0));
        if !e0.is_finite() || !e1.is_finite() {
            return Err("transform is not finite on [0,1]".into());
        }
        if self.kind != TransformKind::DoubleExp10 {
            let (lo, hi) = self.image();
            if !rel_close(lo, self.lo) || !rel_close(hi, self.hi) {
                return Err(format!(
                    "declared range [{}, {}] does not match transform endpoints [{lo}, {hi}]",
                    self.lo, self.hi
                ));
            }
        }
        Ok(())
    }
}

fn rel_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= EDGE_TOL * a.abs().max(b.abs()).max(1e-300) || a == b
}

/// `10^e`, exact whenever `e` is an integer in the range of `f64` powers of ten
/// that parse exactly.
fn pow10(e: f64) -> f64 {
    if e.fract() == 0.0 && e.abs() <= 308.0 {
        // decimal literals round correctly; powf does not promise to
        format!("1e{}", e as i32).parse().expect("valid literal")
    } else {
        10f64.powf(e)
    }
}

/// Ordered list of dimensions with unique names.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    dims: Vec<ParamSpec>,
}

#[derive(Serialize)]
struct SpaceFileOut<'a> {
    param: &'a [ParamSpec],
}

#[derive(Deserialize)]
struct SpaceFileIn {
    #[serde(default)]
    param: Vec<toml::Spanned<RawParam>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParam {
    name: toml::Spanned<String>,
    kind: toml::Spanned<String>,
    a: f64,
    b: toml::Spanned<f64>,
    integer_round: bool,
    lo: f64,
    hi: f64,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl SearchSpace {
    pub fn new(dims: Vec<ParamSpec>) -> Result<Self, SpaceError> {
        let mut seen = HashSet::new();
        for p in &dims {
            if !seen.insert(p.name.as_str()) {
                return Err(SpaceError::Duplicate(p.name.clone()));
            }
            p.check().map_err(|msg| SpaceError::Invalid {
                name: p.name.clone(),
                msg,
            })?;
        }
        Ok(Self { dims })
    }

    /// Parses a space file.
    pub fn parse(text: &str) -> Result<Self, SpaceError> {
        let file: SpaceFileIn = toml::from_str(text).map_err(|e| SpaceError::Malformed(e.to_string()))?;
        let mut dims = Vec::with_capacity(file.param.len());
        let mut seen = HashSet::new();
        for spanned in file.param {
            let record_line = line_of(text, spanned.span().start);
            let raw = spanned.into_inner();
            let name_line = line_of(text, raw.name.span().start);
            let name = raw.name.into_inner();
            if name.is_empty() {
                return Err(SpaceError::Field {
                    line: name_line,
                    field: "name",
                    msg: "must not be empty".into(),
                });
            }
            if !seen.insert(name.clone()) {
                return Err(SpaceError::Field {
                    line: name_line,
                    field: "name",
                    msg: format!("duplicate parameter name '{name}'"),
                });
            }
            let kind_line = line_of(text, raw.kind.span().start);
            let kind: TransformKind = raw.kind.get_ref().parse().map_err(|msg| SpaceError::Field {
                line: kind_line,
                field: "kind",
                msg,
            })?;
            let b_line = line_of(text, raw.b.span().start);
            let b = raw.b.into_inner();
            if b == 0.0 {
                return Err(SpaceError::Field {
                    line: b_line,
                    field: "b",
                    msg: format!("'{name}': b must be non-zero"),
                });
            }
            let spec = ParamSpec {
                name,
                kind,
                a: raw.a,
                b,
                integer_round: raw.integer_round,
                lo: raw.lo,
                hi: raw.hi,
            };
            spec.check().map_err(|msg| SpaceError::Field {
                line: record_line,
                field: "param",
                msg: format!("'{}': {msg}", spec.name),
            })?;
            dims.push(spec);
        }
        if dims.is_empty() {
            return Err(SpaceError::Malformed("no [[param]] records".into()));
        }
        Self::new(dims)
    }

    /// Canonical space-file text.
    pub fn to_text(&self) -> String {
        toml::to_string(&SpaceFileOut { param: &self.dims }).expect("space serializes")
    }

    pub fn builtin(tag: &str) -> Result<Self, SpaceError> {
        match tag {
            "mnist_adadelta" => Ok(mnist_space(Optimizer::Adadelta)),
            "mnist_adam" => Ok(mnist_space(Optimizer::Adam)),
            other => Err(SpaceError::UnknownBuiltin(other.to_string())),
        }
    }

    /// `d` identity dimensions named `x0..x{d-1}`.
    pub fn unit_cube(dim: usize) -> Self {
        let dims = (0..dim)
            .map(|i| ParamSpec::derived(&format!("x{i}"), TransformKind::Linear, 0.0, 1.0, false))
            .collect();
        Self { dims }
    }

    pub fn dims(&self) -> &[ParamSpec] {
        &self.dims
    }

    pub fn dim_count(&self) -> usize {
        self.dims.len()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.dims.iter().map(|p| p.name.as_str())
    }

    /// Named values for a genotype, in dimension order.
    pub fn transform(&self, genotype: &[f64]) -> Result<Vec<(String, f64)>, SpaceError> {
        if genotype.len() != self.dims.len() {
            return Err(SpaceError::DimensionMismatch {
                expected: self.dims.len(),
                got: genotype.len(),
            });
        }
        self.dims
            .iter()
            .zip(genotype)
            .enumerate()
            .map(|(index, (p, &x))| {
                if !(0.0..=1.0).contains(&x) {
                    return Err(SpaceError::OutOfCube {
                        index,
                        name: p.name.clone(),
                        value: x,
                    });
                }
                Ok((p.name.clone(), p.value(x)))
            })
            .collect()
    }

    /// Genotype for a set of named values. Names may come in any order;
    /// every dimension must be present.
    pub fn inverse_transform(&self, values: &[(String, f64)]) -> Result<Vec<f64>, SpaceError> {
        self.dims
            .iter()
            .map(|p| {
                let v = values
                    .iter()
                    .find(|(n, _)| *n == p.name)
                    .map(|(_, v)| *v)
                    .ok_or_else(|| SpaceError::MissingValue(p.name.clone()))?;
                p.inverse(v)
            })
            .collect()
    }
}

#[derive(Clone, Copy)]
enum Optimizer {
    Adadelta,
    Adam,
}

fn mnist_space(opt: Optimizer) -> SearchSpace {
    use TransformKind::*;
    let mut dims = vec![
        ParamSpec::new("selection_pressure_e0", DoubleExp10, -2.0, 2.0, false, 1e-2, 1e98),
        ParamSpec::new("selection_pressure_eend", DoubleExp10, -2.0, 2.0, false, 1e-2, 1e98),
        ParamSpec::derived("batch_size_e0", Pow2Affine, 4.0, 4.0, true),
        ParamSpec::derived("batch_size_eend", Pow2Affine, 4.0, 4.0, true),
        ParamSpec::derived("loss_recompute_freq", Linear, 0.0, 2.0, false),
        ParamSpec::derived("bn_alpha", Linear, 0.01, 0.2, false),
        ParamSpec::derived("bn_epsilon", Pow10Affine, -8.0, 5.0, false),
        ParamSpec::derived("dropout_pool1", Linear, 0.0, 0.8, false),
        ParamSpec::derived("dropout_pool2", Linear, 0.0, 0.8, false),
        ParamSpec::derived("dropout_output", Linear, 0.0, 0.8, false),
        ParamSpec::derived("filters_conv1", Pow2Affine, 3.0, 5.0, true),
        ParamSpec::derived("filters_conv2", Pow2Affine, 3.0, 5.0, true),
        ParamSpec::derived("units_fc", Pow2Affine, 4.0, 5.0, true),
    ];
    match opt {
        Optimizer::Adadelta => dims.extend([
            ParamSpec::derived("lr_e0", Pow10Affine, 0.5, -2.0, false),
            ParamSpec::derived("lr_eend", Pow10Affine, 0.5, -2.0, false),
            ParamSpec::derived("rho", Linear, 0.8, 0.199, false),
            ParamSpec::derived("epsilon", Pow10Affine, -3.0, -6.0, false),
        ]),
        Optimizer::Adam => dims.extend([
            ParamSpec::derived("lr_e0", Pow10Affine, -1.0, -3.0, false),
            ParamSpec::derived("lr_eend", Pow10Affine, -3.0, -3.0, false),
            ParamSpec::derived("beta1", Linear, 0.8, 0.199, false),
            ParamSpec::derived("epsilon", Pow10Affine, -3.0, -6.0, false),
            ParamSpec::derived("beta2", OneMinusPow10, -2.0, -2.0, false),
        ]),
    }
    dims.push(ParamSpec::derived("adaptation_end_epoch", Linear, 20.0, 200.0, true));
    SearchSpace::new(dims).expect("builtin space is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn adam() -> SearchSpace {
        SearchSpace::builtin("mnist_adam").unwrap()
    }

    fn value_at(space: &SearchSpace, index: usize, x: f64) -> f64 {
        space.dims()[index].value(x)
    }

    #[test]
    fn builtin_shapes() {
        assert_eq!(adam().dim_count(), 19);
        assert_eq!(SearchSpace::builtin("mnist_adadelta").unwrap().dim_count(), 18);
        assert_eq!(
            SearchSpace::builtin("cifar"),
            Err(SpaceError::UnknownBuiltin("cifar".into()))
        );
    }

    #[test]
    fn batch_size_endpoints() {
        let s = adam();
        assert_eq!(value_at(&s, 2, 0.0), 16.0);
        assert_eq!(value_at(&s, 2, 1.0), 256.0);
    }

    #[test]
    fn beta2_endpoints() {
        let s = adam();
        assert_eq!(value_at(&s, 17, 0.0), 0.99);
        assert_eq!(value_at(&s, 17, 1.0), 0.9999);
    }

    #[test]
    fn selection_pressure_upper_endpoint() {
        let s = adam();
        assert_eq!(value_at(&s, 0, 1.0), 1e98);
        assert_eq!(value_at(&s, 0, 1.0).log10(), 98.0);
        // formula value at x = 0 is 10^-1, not the declared 10^-2
        assert_eq!(value_at(&s, 0, 0.0), 0.1);
    }

    #[test]
    fn linear_rows() {
        let s = adam();
        assert_eq!(value_at(&s, 5, 0.0), 0.01);
        assert_eq!(value_at(&s, 18, 0.5), 120.0);
        assert_eq!(s.dims()[18].continuous(0.5), 120.0);
    }

    #[test]
    fn filters_round_half_up() {
        let s = adam();
        let raw = s.dims()[10].continuous(0.5);
        assert!((raw - 2f64.powf(5.5)).abs() < 1e-12);
        assert!((raw - 45.254_833_995_939_04).abs() < 1e-9);
        assert_eq!(value_at(&s, 10, 0.5), 45.0);
    }

    #[test]
    fn inverse_examples() {
        let s = adam();
        assert!((s.dims()[5].inverse(0.11).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(s.dims()[2].inverse(16.0).unwrap(), 0.0);
        assert!((s.dims()[17].inverse(0.999).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn inverse_rejects_values_outside_image() {
        let s = adam();
        let err = s.dims()[5].inverse(0.5).unwrap_err();
        assert!(matches!(err, SpaceError::OutOfImage { ref name, .. } if name == "bn_alpha"));
        assert!(err.to_string().contains("0.01"));
        assert!(s.dims()[17].inverse(1.0).is_err());
    }

    #[test]
    fn transform_validates_input() {
        let s = adam();
        assert!(matches!(
            s.transform(&[0.5; 18]),
            Err(SpaceError::DimensionMismatch { expected: 19, got: 18 })
        ));
        let mut g = vec![0.5; 19];
        g[4] = 1.2;
        assert!(matches!(s.transform(&g), Err(SpaceError::OutOfCube { index: 4, .. })));
    }

    #[test]
    fn named_transform_round_trip() {
        let s = adam();
        let g: Vec<f64> = (0..19).map(|i| (i as f64 + 0.5) / 19.0).collect();
        let values = s.transform(&g).unwrap();
        assert_eq!(values[0].0, "selection_pressure_e0");
        let back = s.inverse_transform(&values).unwrap();
        for (i, p) in s.dims().iter().enumerate() {
            if !p.integer_round {
                assert!((back[i] - g[i]).abs() < 1e-9, "{}", p.name);
            }
        }
        assert!(matches!(
            s.inverse_transform(&values[1..]),
            Err(SpaceError::MissingValue(_))
        ));
    }

    #[test]
    fn parse_minimal() {
        let text = "[[param]]\nname = \"lr\"\nkind = \"linear\"\na = 0.0\nb = 1.0\ninteger_round = false\nlo = 0.0\nhi = 1.0\n";
        let s = SearchSpace::parse(text).unwrap();
        assert_eq!(s.dim_count(), 1);
        assert_eq!(SearchSpace::parse(&s.to_text()).unwrap(), s);
    }

    fn record(name: &str, kind: &str, b: &str) -> String {
        format!("[[param]]\nname = \"{name}\"\nkind = \"{kind}\"\na = 0.0\nb = {b}\ninteger_round = false\nlo = 0.0\nhi = 1.0\n\n")
    }

    #[test]
    fn parse_errors_carry_context() {
        let dup = record("x", "linear", "1.0") + &record("x", "linear", "1.0");
        let err = SearchSpace::parse(&dup).unwrap_err();
        assert_eq!(
            err,
            SpaceError::Field {
                line: 11,
                field: "name",
                msg: "duplicate parameter name 'x'".into()
            }
        );

        let kind = record("x", "cubic", "1.0");
        assert!(matches!(
            SearchSpace::parse(&kind).unwrap_err(),
            SpaceError::Field { line: 3, field: "kind", .. }
        ));

        let zero = record("y", "linear", "1.0") + &record("x", "linear", "0.0");
        assert!(matches!(
            SearchSpace::parse(&zero).unwrap_err(),
            SpaceError::Field { line: 14, field: "b", .. }
        ));

        assert!(matches!(
            SearchSpace::parse("[[param]]\nname = 3\n").unwrap_err(),
            SpaceError::Malformed(_)
        ));

        let range = record("x", "linear", "2.0");
        assert!(matches!(
            SearchSpace::parse(&range).unwrap_err(),
            SpaceError::Field { field: "param", .. }
        ));
    }

    #[test]
    fn builtin_text_round_trips() {
        for tag in ["mnist_adam", "mnist_adadelta"] {
            let s = SearchSpace::builtin(tag).unwrap();
            let text = s.to_text();
            assert_eq!(SearchSpace::parse(&text).unwrap(), s);
            assert_eq!(SearchSpace::parse(&text).unwrap().to_text(), text);
        }
    }
}
