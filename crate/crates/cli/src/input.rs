use std::fs;
use std::path::Path;

use fsm_capra::norms::{NormConfig, NormSpec};
use fsm_capra::setfn::{SetFunction, SetFunctionConfig};
use fsm_capra::ExtReal;
use serde::Deserialize;

use crate::CliError;

/// Reads `arg` as a file when one exists at that path, otherwise returns it
/// unchanged as inline text.
fn file_or_inline(arg: &str) -> Result<String, CliError> {
    let path = Path::new(arg);
    if path.is_file() {
        return fs::read_to_string(path).map_err(|e| CliError::config(format!("cannot read {arg}: {e}")));
    }
    Ok(arg.to_string())
}

/// `l2`, `linf`, ... or a JSON norm configuration (inline or in a file).
pub fn parse_norm(arg: &str) -> Result<NormConfig, CliError> {
    if let Some(c) = NormConfig::from_shorthand(arg.trim()) {
        return Ok(c);
    }
    let text = file_or_inline(arg)?;
    if let Some(c) = NormConfig::from_shorthand(text.trim()) {
        return Ok(c);
    }
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("bad norm {arg:?}: {e}")))
}

pub fn norm_dim(c: &NormConfig) -> Option<usize> {
    match c {
        NormConfig::Lp { .. } => None,
        NormConfig::WeightedLp { weights, .. } => Some(weights.len()),
        NormConfig::CustomTable { rows, .. } => rows.first().map(Vec::len),
    }
}

/// A set function before its dimension is known.
#[derive(Clone, Debug)]
pub enum SetFunctionArg {
    Named { name: String, a: Option<f64>, b: Option<f64> },
    Config(SetFunctionConfig),
    Table(Vec<ExtReal>),
}

impl SetFunctionArg {
    pub fn dim(&self) -> Result<Option<usize>, CliError> {
        Ok(match self {
            SetFunctionArg::Named { .. } => None,
            SetFunctionArg::Config(c) => Some(c.d),
            SetFunctionArg::Table(v) => {
                let n = v.len();
                if !n.is_power_of_two() || n < 2 {
                    return Err(CliError::config(format!("a value table needs 2^d entries with d >= 1, got {n}")));
                }
                Some(n.trailing_zeros() as usize)
            }
        })
    }

    pub fn build(&self, d: usize) -> Result<SetFunction, CliError> {
        let cfg = match self {
            SetFunctionArg::Named { name, a, b } => SetFunctionConfig { d, name: Some(name.clone()), values: None, a: *a, b: *b },
            SetFunctionArg::Config(c) => c.clone(),
            SetFunctionArg::Table(v) => SetFunctionConfig { d, name: None, values: Some(v.clone()), a: None, b: None },
        };
        SetFunction::from_config(&cfg).map_err(|e| CliError::config(e.to_string()))
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SetFunctionJson {
    Config(SetFunctionConfig),
    Table(Vec<ExtReal>),
}

/// A generator name, a JSON value table, or a JSON set-function object.
pub fn parse_set_function(arg: &str) -> Result<SetFunctionArg, CliError> {
    let text = file_or_inline(arg)?;
    let t = text.trim();
    if !t.starts_with('{') && !t.starts_with('[') {
        return Ok(SetFunctionArg::Named { name: t.to_string(), a: None, b: None });
    }
    match serde_json::from_str::<SetFunctionJson>(t) {
        Ok(SetFunctionJson::Config(c)) => Ok(SetFunctionArg::Config(c)),
        Ok(SetFunctionJson::Table(v)) => Ok(SetFunctionArg::Table(v)),
        Err(e) => Err(CliError::config(format!("bad set function {arg:?}: {e}"))),
    }
}

/// A JSON array of points, inline or in a file.
pub fn parse_points(arg: &str) -> Result<Vec<Vec<f64>>, CliError> {
    let text = file_or_inline(arg)?;
    let pts: Vec<Vec<f64>> = serde_json::from_str(&text).map_err(|e| CliError::config(format!("bad points {arg:?}: {e}")))?;
    if pts.is_empty() {
        return Err(CliError::config("the point list is empty"));
    }
    Ok(pts)
}

/// A single vector written as JSON or comma separated, with optional
/// parentheses: `[1,1]`, `(1,1)`, `1,1`.
pub fn parse_vector(arg: &str) -> Result<Vec<f64>, CliError> {
    let text = file_or_inline(arg)?;
    let t = text.trim().trim_start_matches(['[', '(']).trim_end_matches([']', ')']);
    let v: Result<Vec<f64>, _> = t.split(',').map(|s| s.trim().parse::<f64>()).collect();
    match v {
        Ok(v) if !v.is_empty() => Ok(v),
        _ => Err(CliError::config(format!("bad vector {arg:?}"))),
    }
}

/// `a..b` with `a <= b`.
pub fn parse_range(arg: &str) -> Result<(f64, f64), CliError> {
    let err = || CliError::config(format!("bad range {arg:?}, expected a..b"));
    let (a, b) = arg.split_once("..").ok_or_else(err)?;
    let a: f64 = a.trim().parse().map_err(|_| err())?;
    let b: f64 = b.trim().parse().map_err(|_| err())?;
    if !(a.is_finite() && b.is_finite() && a <= b) {
        return Err(err());
    }
    Ok((a, b))
}

/// Agrees on one dimension across every source that fixes it.
pub fn resolve_dim(sources: &[(&str, Option<usize>)]) -> Result<usize, CliError> {
    let mut found: Option<(&str, usize)> = None;
    for (what, d) in sources {
        let Some(d) = *d else { continue };
        match found {
            None => found = Some((what, d)),
            Some((w0, d0)) if d0 != d => {
                return Err(CliError::config(format!("dimension mismatch: {w0} has d = {d0}, {what} has d = {d}")));
            }
            _ => {}
        }
    }
    found.map(|(_, d)| d).ok_or_else(|| CliError::config("cannot infer the dimension; pass --d"))
}

pub fn norm_spec(c: &NormConfig, d: usize) -> Result<NormSpec, CliError> {
    NormSpec::from_config(c, d).map_err(|e| CliError::config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_forms() {
        assert_eq!(parse_norm("l1.5").unwrap(), NormConfig::lp(1.5));
        assert_eq!(parse_norm(r#"{"type":"lp","p":"inf"}"#).unwrap(), NormConfig::lp(f64::INFINITY));
        assert!(parse_norm("euclid").is_err());
    }

    #[test]
    fn set_function_forms() {
        assert!(matches!(parse_set_function("cardinality").unwrap(), SetFunctionArg::Named { .. }));
        let t = parse_set_function("[0, 1, 1, 3]").unwrap();
        assert_eq!(t.dim().unwrap(), Some(2));
        assert_eq!(t.build(2).unwrap().values()[3], ExtReal::Finite(3.0));
        assert!(parse_set_function("[0, 1, 1]").unwrap().dim().is_err());
        let c = parse_set_function(r#"{"d":3,"name":"affine","a":1,"b":0.5}"#).unwrap();
        assert_eq!(c.dim().unwrap(), Some(3));
    }

    #[test]
    fn vectors_and_ranges() {
        assert_eq!(parse_vector("(1,1)").unwrap(), vec![1.0, 1.0]);
        assert_eq!(parse_vector("[0.5, -2]").unwrap(), vec![0.5, -2.0]);
        assert!(parse_vector("x").is_err());
        assert_eq!(parse_range("0.1..2").unwrap(), (0.1, 2.0));
        assert!(parse_range("2..1").is_err());
        assert!(parse_points("[]").is_err());
    }

    #[test]
    fn dimension_agreement() {
        assert_eq!(resolve_dim(&[("norm", None), ("points", Some(3))]).unwrap(), 3);
        assert!(resolve_dim(&[("norm", Some(2)), ("points", Some(3))]).is_err());
        assert!(resolve_dim(&[("norm", None)]).is_err());
    }
}
