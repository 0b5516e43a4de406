//! Experiment configuration: a flat, typed key/value text format.
//!
//! Grammar (UTF-8, line oriented):
//!
//! ```text
//! file    := { line }
//! line    := section | entry | blank | comment
//! section := '[' ident ']'
//! entry   := ident '=' value
//! value   := number | bool | string | list
//! string  := '"' chars '"'
//! list    := '[' [ value { ',' value } ] ']'
//! comment := '#' anything
//! ```
//!
//! Keys live inside the most recent section header. Numbers parse as f64;
//! `true`/`false` as booleans.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::expr;
use crate::fields::random_trig_scalar;
use crate::grid::{GridScalar, GridSpec, Scheme};
use crate::mapcalc::{MapField, PullbackSection};
use crate::structure::{
    conformal_rescale, heisenberg, solve_structure, ContactCoframe, FlatModel,
    PseudohermitianData,
};
use crate::target::TargetMetric;

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    Bool(bool),
    Str(String),
    List(Vec<Value>),
}

impl Value {
    fn type_name(&self) -> &'static str {
        match self {
            Value::Num(_) => "number",
            Value::Bool(_) => "bool",
            Value::Str(_) => "string",
            Value::List(_) => "list",
        }
    }
}

/// Parsed config: `section.key -> value`.
#[derive(Debug, Clone, Default)]
pub struct Config {
    entries: BTreeMap<String, Value>,
}

fn parse_value(raw: &str, line_no: usize) -> Result<Value> {
    let raw = raw.trim();
    if raw == "true" {
        return Ok(Value::Bool(true));
    }
    if raw == "false" {
        return Ok(Value::Bool(false));
    }
    if let Some(rest) = raw.strip_prefix('"') {
        let Some(inner) = rest.strip_suffix('"') else {
            return Err(Error::Config(format!("line {line_no}: unterminated string")));
        };
        return Ok(Value::Str(inner.to_string()));
    }
    if let Some(rest) = raw.strip_prefix('[') {
        let Some(inner) = rest.strip_suffix(']') else {
            return Err(Error::Config(format!("line {line_no}: unterminated list")));
        };
        let inner = inner.trim();
        if inner.is_empty() {
            return Ok(Value::List(Vec::new()));
        }
        // split at top-level commas (strings may contain commas)
        let mut items = Vec::new();
        let mut depth_quote = false;
        let mut start = 0;
        let bytes = inner.as_bytes();
        for (i, &b) in bytes.iter().enumerate() {
            match b {
                b'"' => depth_quote = !depth_quote,
                b',' if !depth_quote => {
                    items.push(parse_value(&inner[start..i], line_no)?);
                    start = i + 1;
                }
                _ => {}
            }
        }
        items.push(parse_value(&inner[start..], line_no)?);
        return Ok(Value::List(items));
    }
    raw.parse::<f64>()
        .map(Value::Num)
        .map_err(|_| Error::Config(format!("line {line_no}: cannot parse value `{raw}`")))
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = match line.find('#') {
                // '#' inside a quoted string does not start a comment
                Some(pos) if line[..pos].matches('"').count() % 2 == 0 => &line[..pos],
                _ => line,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let Some(name) = rest.strip_suffix(']') else {
                    return Err(Error::Config(format!(
                        "line {line_no}: malformed section header"
                    )));
                };
                section = name.trim().to_string();
                continue;
            }
            let Some(eq) = line.find('=') else {
                return Err(Error::Config(format!(
                    "line {line_no}: expected `key = value`"
                )));
            };
            let key = line[..eq].trim();
            if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(Error::Config(format!("line {line_no}: bad key `{key}`")));
            }
            let value = parse_value(&line[eq + 1..], line_no)?;
            entries.insert(format!("{section}.{key}"), value);
        }
        Ok(Config { entries })
    }

    pub fn load(path: &std::path::Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Config::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries.get(key)
    }

    pub fn has_section(&self, section: &str) -> bool {
        let prefix = format!("{section}.");
        self.entries.keys().any(|k| k.starts_with(&prefix))
    }

    fn want<'a>(&'a self, key: &str) -> Result<&'a Value> {
        self.get(key)
            .ok_or_else(|| Error::Config(format!("missing key `{key}`")))
    }

    pub fn num(&self, key: &str) -> Result<f64> {
        match self.want(key)? {
            Value::Num(v) => Ok(*v),
            other => Err(Error::Config(format!(
                "`{key}` should be a number, found {}",
                other.type_name()
            ))),
        }
    }

    pub fn num_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(Value::Num(v)) => Ok(*v),
            Some(other) => Err(Error::Config(format!(
                "`{key}` should be a number, found {}",
                other.type_name()
            ))),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        let v = self.num_or(key, default as f64)?;
        if v < 0.0 || v.fract() != 0.0 {
            return Err(Error::Config(format!("`{key}` should be a non-negative integer")));
        }
        Ok(v as usize)
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some(Value::Bool(b)) => Ok(*b),
            Some(other) => Err(Error::Config(format!(
                "`{key}` should be a bool, found {}",
                other.type_name()
            ))),
        }
    }

    pub fn str(&self, key: &str) -> Result<&str> {
        match self.want(key)? {
            Value::Str(s) => Ok(s),
            other => Err(Error::Config(format!(
                "`{key}` should be a string, found {}",
                other.type_name()
            ))),
        }
    }

    pub fn str_or<'a>(&'a self, key: &str, default: &'a str) -> Result<&'a str> {
        match self.get(key) {
            None => Ok(default),
            Some(Value::Str(s)) => Ok(s),
            Some(other) => Err(Error::Config(format!(
                "`{key}` should be a string, found {}",
                other.type_name()
            ))),
        }
    }

    pub fn num_list(&self, key: &str) -> Result<Vec<f64>> {
        match self.want(key)? {
            Value::List(items) => items
                .iter()
                .map(|v| match v {
                    Value::Num(x) => Ok(*x),
                    other => Err(Error::Config(format!(
                        "`{key}` should list numbers, found {}",
                        other.type_name()
                    ))),
                })
                .collect(),
            other => Err(Error::Config(format!(
                "`{key}` should be a list, found {}",
                other.type_name()
            ))),
        }
    }

    pub fn str_list(&self, key: &str) -> Result<Vec<String>> {
        match self.want(key)? {
            Value::List(items) => items
                .iter()
                .map(|v| match v {
                    Value::Str(s) => Ok(s.clone()),
                    other => Err(Error::Config(format!(
                        "`{key}` should list strings, found {}",
                        other.type_name()
                    ))),
                })
                .collect(),
            other => Err(Error::Config(format!(
                "`{key}` should be a list, found {}",
                other.type_name()
            ))),
        }
    }
}

/// A fully built experiment: model structure, target, and base map.
#[derive(Debug)]
pub struct Experiment {
    pub config: Config,
    pub coframe: ContactCoframe,
    pub structure: PseudohermitianData,
    pub flat_model: FlatModel,
    pub conformal_factor: Option<GridScalar>,
    pub map: MapField,
    pub seed: u64,
}

/// Builds model/structure/map from a config, with optional scheme override
/// and grid refinement factor.
pub fn build_experiment(
    config: &Config,
    seed: u64,
    scheme_override: Option<Scheme>,
    refine: usize,
) -> Result<Experiment> {
    let kind = config.str_or("model.kind", "heisenberg")?.to_string();
    let n = config.usize_or("model.n", 1)?;
    let dims: Vec<usize> = config
        .num_list("model.dims")?
        .into_iter()
        .map(|v| v as usize)
        .collect();
    let scheme = match scheme_override {
        Some(s) => s,
        None => Scheme::parse(config.str_or("model.scheme", "spectral")?)?,
    };
    let mut spec = GridSpec::unit(dims, scheme)?;
    if refine > 1 {
        spec = spec.refined(refine)?;
    }
    if spec.ndim() != 2 * n + 1 {
        return Err(Error::Config(format!(
            "model.dims has {} axes but n = {n} needs {}",
            spec.ndim(),
            2 * n + 1
        )));
    }

    let flat_model = FlatModel::new(n, spec.clone())?;
    let base = heisenberg(n, &spec)?;

    let conformal_expr = match (kind.as_str(), config.get("model.conformal_factor")) {
        ("heisenberg", None) => None,
        ("heisenberg_rescaled", Some(Value::Str(s))) => Some(s.clone()),
        ("heisenberg_rescaled", None) => {
            return Err(Error::Config(
                "heisenberg_rescaled requires model.conformal_factor".into(),
            ))
        }
        ("heisenberg", Some(Value::Str(s))) => Some(s.clone()),
        (other, _) => {
            return Err(Error::Config(format!(
                "unknown model.kind `{other}` (expected heisenberg or heisenberg_rescaled)"
            )))
        }
    };
    let conformal_factor = match &conformal_expr {
        Some(src) => Some(expr::eval_str(src, &spec)?),
        None => None,
    };
    if conformal_factor.is_some() && n != 1 {
        return Err(Error::Config("conformal rescaling requires n = 1".into()));
    }

    let coframe = match &conformal_factor {
        Some(u) => conformal_rescale(&base, u)?,
        None => base,
    };
    let structure = if n == 1 {
        solve_structure(&coframe)?
    } else {
        // structure solver is n = 1 only; higher models use the flat data
        solve_structure(&heisenberg_fallback(&flat_model)?)?
    };

    let target = build_target(config)?;
    let map = build_map(config, &flat_model, &target, seed)?;
    Ok(Experiment {
        config: config.clone(),
        coframe,
        structure,
        flat_model,
        conformal_factor,
        map,
        seed,
    })
}

// placeholder structure for n >= 2 experiments: the jet path never touches it
fn heisenberg_fallback(model: &FlatModel) -> Result<ContactCoframe> {
    if model.n() == 1 {
        return heisenberg(1, model.spec());
    }
    // build a throwaway n = 1 structure on the smallest valid grid
    let spec = GridSpec::cubic(3, 8, model.spec().scheme())?;
    heisenberg(1, &spec)
}

fn build_target(config: &Config) -> Result<TargetMetric> {
    let variant = config.str_or("target.variant", "flat_torus")?;
    match variant {
        "flat_torus" => {
            let dim = config.usize_or("target.dim", 2)?;
            Ok(TargetMetric::flat_torus(dim))
        }
        "sphere" | "embedded_sphere_2" => Ok(TargetMetric::Sphere2),
        "webster" | "webster_metric" => Ok(TargetMetric::Webster),
        other => Err(Error::Config(format!(
            "unknown target.variant `{other}` (flat_torus | sphere | webster)"
        ))),
    }
}

fn build_map(
    config: &Config,
    model: &FlatModel,
    target: &TargetMetric,
    seed: u64,
) -> Result<MapField> {
    if let Some(Value::Str(builtin)) = config.get("map.builtin") {
        let map = match builtin.as_str() {
            "projection" => MapField::projection(model),
            "identity" => MapField::identity(model)?,
            "constant" => {
                let values = config
                    .num_list("map.values")
                    .unwrap_or_else(|_| vec![0.0; target.dim()]);
                MapField::constant(model, target.clone(), &values)?
            }
            "random_trig" => return random_map(config, model, target, seed),
            other => {
                return Err(Error::Config(format!(
                    "unknown map.builtin `{other}` (projection | identity | constant | random_trig)"
                )))
            }
        };
        if !map.target.compatible(target) {
            return Err(Error::Config(format!(
                "map.builtin `{builtin}` produces a {:?} target but config asks for {:?}",
                map.target, target
            )));
        }
        return Ok(map);
    }
    let comps_src = config.str_list("map.comps").map_err(|_| {
        Error::Config("need map.builtin or map.comps (list of expressions)".into())
    })?;
    if comps_src.len() != target.dim() {
        return Err(Error::Config(format!(
            "map has {} components but target dimension is {}",
            comps_src.len(),
            target.dim()
        )));
    }
    let comps = comps_src
        .iter()
        .map(|src| expr::eval_str(src, model.spec()))
        .collect::<Result<Vec<_>>>()?;
    MapField::new(target.clone(), comps)
}

fn random_map(
    config: &Config,
    model: &FlatModel,
    target: &TargetMetric,
    seed: u64,
) -> Result<MapField> {
    let amp = config.num_or("map.amp", 0.3)?;
    let max_mode = config.usize_or("map.max_mode", 1)?;
    let t_dependent = config.bool_or("map.t_dependent", true)?;
    let axes: Vec<usize> = if t_dependent {
        (0..model.ndim()).collect()
    } else {
        (0..model.ndim() - 1).collect()
    };
    let spec = model.spec();
    match target {
        TargetMetric::FlatTorus { .. } | TargetMetric::Webster => {
            let comps = (0..target.dim())
                .map(|k| random_trig_scalar(spec, seed.wrapping_add(k as u64), max_mode, amp, &axes))
                .collect();
            MapField::new(target.clone(), comps)
        }
        TargetMetric::Sphere2 => {
            let north = MapField::constant(model, TargetMetric::Sphere2, &[0.0, 0.0, 1.0])?;
            let vx = random_trig_scalar(spec, seed, max_mode, amp, &axes);
            let vy = random_trig_scalar(spec, seed.wrapping_add(1), max_mode, amp, &axes);
            let dir = PullbackSection::from_comps(
                TargetMetric::Sphere2,
                vec![vx, vy, GridScalar::zeros(spec)],
            );
            north.retract(&dir, 1.0)
        }
        TargetMetric::Chart { .. } => Err(Error::Config(
            "random_trig maps are not defined for chart targets".into(),
        )),
    }
}

/// Seeded real variation section along a map (tangential for spheres).
pub fn random_variation(map: &MapField, seed: u64, amp: f64, t_dependent: bool) -> PullbackSection {
    let spec = map.comps[0].spec();
    let d = spec.ndim();
    let axes: Vec<usize> = if t_dependent {
        (0..d).collect()
    } else {
        (0..d - 1).collect()
    };
    let comps: Vec<GridScalar> = (0..map.dim())
        .map(|k| random_trig_scalar(spec, seed.wrapping_add(100 + k as u64), 1, amp, &axes))
        .collect();
    let raw = PullbackSection::from_comps(map.target.clone(), comps);
    if map.target.is_sphere() {
        let phi_sec = PullbackSection::from_comps(map.target.clone(), map.comps.clone());
        let dot = crate::mapcalc::h_pair(map, &raw, &phi_sec);
        raw.sub(&phi_sec.scale_field(&dot))
    } else {
        raw
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
# sample experiment
[model]
kind = "heisenberg"
n = 1
dims = [8, 8, 8]
scheme = "spectral"

[target]
variant = "flat_torus"
dim = 2

[map]
builtin = "projection"

[flow]
step = 0.0001
max_steps = 10
backtracking = true
stop_tol = 0.000001
"#;

    #[test]
    fn parses_sections_and_types() {
        let c = Config::parse(SAMPLE).unwrap();
        assert_eq!(c.str("model.kind").unwrap(), "heisenberg");
        assert_eq!(c.usize_or("model.n", 0).unwrap(), 1);
        assert_eq!(c.num_list("model.dims").unwrap(), vec![8.0, 8.0, 8.0]);
        assert!(c.bool_or("flow.backtracking", false).unwrap());
        assert!(c.has_section("flow"));
        assert!(!c.has_section("jet"));
    }

    #[test]
    fn builds_experiment() {
        let c = Config::parse(SAMPLE).unwrap();
        let e = build_experiment(&c, 0, None, 1).unwrap();
        assert_eq!(e.map.dim(), 2);
        assert!(e.conformal_factor.is_none());
    }

    #[test]
    fn rejects_mismatched_map_dimension() {
        let text = SAMPLE.replace(
            "builtin = \"projection\"",
            "comps = [\"sin(2*pi*x)\", \"0\", \"t\"]",
        );
        let c = Config::parse(&text).unwrap();
        match build_experiment(&c, 0, None, 1) {
            Err(Error::Config(msg)) => assert!(msg.contains("components"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(Config::parse("[model\nkind = 1").is_err());
        assert!(Config::parse("kind : 1").is_err());
        assert!(Config::parse("[m]\nkind = \"unterminated").is_err());
    }

    #[test]
    fn rescaled_model_builds() {
        let text = SAMPLE
            .replace(
                "kind = \"heisenberg\"",
                "kind = \"heisenberg_rescaled\"\nconformal_factor = \"0.1*sin(2*pi*x)\"",
            )
            .replace("dims = [8, 8, 8]", "dims = [16, 16, 16]");
        let c = Config::parse(&text).unwrap();
        let e = build_experiment(&c, 0, None, 1).unwrap();
        assert!(e.conformal_factor.is_some());
        assert!(e.structure.torsion().norm_inf() > 1e-6);
    }

    #[test]
    fn comment_inside_string_preserved() {
        let c = Config::parse("[m]\nexpr = \"x # not a comment\"\n").unwrap();
        assert_eq!(c.str("m.expr").unwrap(), "x # not a comment");
    }
}
