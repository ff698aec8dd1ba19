use std::fs;
use std::path::PathBuf;

use fsm_capra::capra::CapraContext;
use fsm_capra::subsets::support;
use fsm_capra::variational::{bounds, eval_l0f, UpperVariant};
use serde_json::Value;

use crate::eval::point_cell;
use crate::input::{self, norm_dim, parse_norm, parse_range, parse_set_function, parse_vector, resolve_dim};
use crate::{write_text, CliError};

pub struct ReportArgs {
    pub inputs: Vec<PathBuf>,
    pub ray: Option<String>,
    pub scale: String,
    pub steps: usize,
    pub norm: String,
    pub set_function: String,
    pub out: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

/// Left-aligned columns separated by two spaces.
fn render(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut width: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<String>| {
        let s: Vec<String> = cells.iter().zip(&width).map(|(c, w)| format!("{c:<w$}")).collect();
        s.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(header.iter().map(|h| h.to_string()).collect());
    out += &line(width.iter().map(|w| "-".repeat(*w)).collect());
    for r in rows {
        out += &line(r.clone());
    }
    out
}

fn text(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        Value::Array(a) => a.iter().map(text).collect::<Vec<_>>().join(" "),
        other => other.to_string(),
    }
}

#[derive(Default)]
struct Tables {
    verify: Vec<Vec<String>>,
    eval: Vec<Vec<String>>,
}

fn absorb(t: &mut Tables, source: &str, doc: &Value) -> Result<(), CliError> {
    let bad = || CliError::config(format!("{source} is not an fsm-capra output"));
    match doc.get("command").and_then(Value::as_str) {
        Some("verify") => {
            let claims = doc.get("claims").and_then(Value::as_array).ok_or_else(bad)?;
            for c in claims {
                let status = if c.get("passed").and_then(Value::as_bool) == Some(true) { "PASS" } else { "FAIL" };
                t.verify.push(vec![
                    source.into(),
                    text(&doc["suite"]),
                    text(&doc["norm"]),
                    text(&doc["d"]),
                    text(&doc["seed"]),
                    text(&c["claim"]),
                    status.into(),
                    text(&c["instances"]),
                    text(&c["failures"]),
                    text(&c["max_residual"]),
                ]);
            }
        }
        Some("eval") => {
            let records = doc.get("records").and_then(Value::as_array).ok_or_else(bad)?;
            for r in records {
                t.eval.push(vec![
                    source.into(),
                    text(&r["operation"]),
                    text(&doc["norm"]),
                    text(&r["index"]),
                    text(&r["point"]),
                    text(&r["value"]),
                    text(&r["lower"]),
                    text(&r["upper"]),
                    text(&r["member"]),
                ]);
            }
        }
        _ => return Err(bad()),
    }
    Ok(())
}

fn summary(inputs: &[PathBuf]) -> Result<String, CliError> {
    let mut t = Tables::default();
    for p in inputs {
        let source = p.display().to_string();
        let raw = fs::read_to_string(p).map_err(|e| CliError::config(format!("cannot read {source}: {e}")))?;
        let doc: Value = serde_json::from_str(&raw).map_err(|e| CliError::config(format!("{source}: {e}")))?;
        absorb(&mut t, &source, &doc)?;
    }
    let mut out = String::new();
    if !t.verify.is_empty() {
        t.verify.sort_by(|a, b| a[1..6].cmp(&b[1..6]));
        let h = ["source", "suite", "norm", "d", "seed", "claim", "status", "instances", "failures", "max residual"];
        out += &render(&h, &t.verify);
        let failed = t.verify.iter().filter(|r| r[6] == "FAIL").count();
        out += &format!("{} claims, {} failed\n", t.verify.len(), failed);
    }
    if !t.eval.is_empty() {
        if !out.is_empty() {
            out += "\n";
        }
        t.eval.sort_by(|a, b| a[1..3].cmp(&b[1..3]));
        let h = ["source", "operation", "norm", "index", "point", "value", "lower", "upper", "member"];
        out += &render(&h, &t.eval);
    }
    Ok(out)
}

/// CSV of the hidden-convexity value and the norm-ratio bounds at `s·x0` for
/// `steps` evenly spaced scales.
fn ray_csv(a: &ReportArgs, spec: &str) -> Result<String, CliError> {
    let x0 = parse_vector(spec)?;
    let (s0, s1) = parse_range(&a.scale)?;
    if a.steps == 0 {
        return Err(CliError::config("--steps must be positive"));
    }
    let norm = parse_norm(&a.norm)?;
    let sf = parse_set_function(&a.set_function)?;
    let d = resolve_dim(&[("the norm", norm_dim(&norm)), ("the set function", sf.dim()?), ("the ray", Some(x0.len()))])?;
    let ctx = CapraContext::new(input::norm_spec(&norm, d)?);
    let f = sf.build(d)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::config(e.to_string());
    w.write_record(["scale", "point", "norm", "l0f", "l0f_lower", "fsm", "bound_lower", "bound_upper"]).map_err(io)?;
    for i in 0..a.steps {
        let s = if a.steps == 1 { s0 } else { s0 + (s1 - s0) * i as f64 / (a.steps - 1) as f64 };
        let x: Vec<f64> = x0.iter().map(|v| s * v).collect();
        let l = eval_l0f(&ctx, &f, &x)?;
        let n = ctx.source().norm_eval(&x)?;
        let fsm = f.value(support(&x)?);
        // Bounds need a normalized, positive set function; left blank otherwise.
        let (bl, bu) = match bounds(&ctx, &f, &x, UpperVariant::ContainingSupport) {
            Ok(b) => (b.lower.to_string(), b.upper.to_string()),
            Err(_) => (String::new(), String::new()),
        };
        w.write_record([s.to_string(), point_cell(&x), n.to_string(), l.value.to_string(), l.lower.to_string(), fsm.to_string(), bl, bu])
            .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::config(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::config(e.to_string()))
}

pub fn run(a: &ReportArgs) -> Result<u8, CliError> {
    if a.inputs.is_empty() && a.ray.is_none() {
        return Err(CliError::config("nothing to report: give input files or --ray"));
    }
    if let Some(p) = a.inputs.iter().find(|p| !p.is_file()) {
        return Err(CliError::config(format!("missing input {}", p.display())));
    }
    if !a.inputs.is_empty() {
        write_text(a.out.as_deref(), &summary(&a.inputs)?)?;
    }
    if let Some(spec) = &a.ray {
        write_text(a.csv.as_deref(), &ray_csv(a, spec)?)?;
    }
    Ok(0)
}
