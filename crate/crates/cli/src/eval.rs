use std::path::PathBuf;

use fsm_capra::capra::{
    capra_biconjugate_fsm, capra_conjugate_fsm, construct_subgradient, subdiff_at_zero_membership, subdiff_membership, CapraContext,
};
use fsm_capra::setfn::SetFunction;
use fsm_capra::variational::{bounds, eval_l0f, AggregateNorm, UpperVariant};
use fsm_capra::subsets::support;
use fsm_capra::ExtReal;
use serde::Serialize;
use serde_json::{json, Value};

use crate::input::{self, norm_dim, parse_norm, parse_points, parse_set_function, parse_vector, resolve_dim};
use crate::{timestamp, write_text, CliError, Operation, UpperArg};

pub struct EvalArgs {
    pub op: Operation,
    pub norm: String,
    pub set_function: String,
    pub points: String,
    pub d: Option<usize>,
    pub dual: Option<String>,
    pub upper: UpperArg,
    pub out: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

/// One evaluated point. `operation` names the library function that produced
/// `value`.
#[derive(Clone, Debug, Serialize)]
pub struct Record {
    pub index: usize,
    pub operation: &'static str,
    pub point: Vec<f64>,
    pub value: Option<ExtReal>,
    pub lower: Option<ExtReal>,
    pub upper: Option<ExtReal>,
    pub member: Option<bool>,
    pub detail: Value,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn fin(v: f64) -> Option<ExtReal> {
    ExtReal::new(v)
}

pub fn evaluate(
    op: Operation,
    ctx: &CapraContext,
    f: &SetFunction,
    x: &[f64],
    index: usize,
    dual: Option<&[f64]>,
    upper: UpperVariant,
) -> Result<Record, CliError> {
    let mut r = Record { index, operation: "", point: x.to_vec(), value: None, lower: None, upper: None, member: None, detail: Value::Null };
    match op {
        Operation::Conjugate => {
            let c = capra_conjugate_fsm(ctx, f, x)?;
            r.operation = "capra_conjugate_fsm";
            r.value = Some(c.value);
            r.detail = to_value(&c);
        }
        Operation::Biconjugate => {
            let b = capra_biconjugate_fsm(ctx, f, x)?;
            r.operation = "capra_biconjugate_fsm";
            r.value = Some(b.value);
            r.lower = Some(b.lower);
            r.detail = json!({ "theorem_applies": b.theorem_applies, "fsm": f.value(support(x)?) });
        }
        Operation::L0f => {
            let l = eval_l0f(ctx, f, x)?;
            r.operation = "eval_l0f";
            r.value = Some(l.value);
            r.lower = Some(l.lower);
            r.detail = to_value(&l.state);
        }
        Operation::Bounds => {
            let b = bounds(ctx, f, x, upper)?;
            r.operation = "bounds";
            r.value = fin(b.value);
            r.lower = fin(b.lower);
            r.upper = fin(b.upper);
            r.detail = to_value(&b);
        }
        Operation::Subdiff => {
            let zero = x.iter().all(|v| *v == 0.0);
            let y = match dual {
                Some(y) => y.to_vec(),
                None if zero => return Err(CliError::config("subdiff at the origin needs --dual")),
                None => construct_subgradient(ctx, f, x)?,
            };
            let q = if zero {
                r.operation = "subdiff_at_zero_membership";
                subdiff_at_zero_membership(ctx, f, &y)?
            } else {
                r.operation = "subdiff_membership";
                subdiff_membership(ctx, f, x, &y)?
            };
            r.member = Some(q.member);
            r.detail = json!({ "dual": y, "constructed": dual.is_none(), "case": q.case, "certificate": q.certificate });
        }
        Operation::AggregateNorm => {
            let agg = AggregateNorm::new(ctx, f)?;
            let res = agg.aggregate_support_dual_norm(x)?;
            r.operation = "aggregate_support_dual_norm";
            r.value = fin(res.value);
            r.lower = fin(res.lower);
            r.detail = json!({ "gap": res.gap, "decomposition": res.primal });
        }
    }
    Ok(r)
}

fn cell(v: &Option<ExtReal>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn point_cell(x: &[f64]) -> String {
    x.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn records_csv(records: &[Record]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::config(e.to_string());
    w.write_record(["index", "operation", "point", "value", "lower", "upper", "member"]).map_err(io)?;
    for r in records {
        let member = r.member.map(|m| m.to_string()).unwrap_or_default();
        w.write_record([r.index.to_string(), r.operation.into(), point_cell(&r.point), cell(&r.value), cell(&r.lower), cell(&r.upper), member])
            .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::config(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::config(e.to_string()))
}

pub fn run(a: &EvalArgs) -> Result<u8, CliError> {
    let norm = parse_norm(&a.norm)?;
    let sf = parse_set_function(&a.set_function)?;
    let points = parse_points(&a.points)?;
    let dual = a.dual.as_deref().map(parse_vector).transpose()?;
    let d = resolve_dim(&[
        ("--d", a.d),
        ("the norm", norm_dim(&norm)),
        ("the set function", sf.dim()?),
        ("the first point", Some(points[0].len())),
        ("the dual vector", dual.as_ref().map(Vec::len)),
    ])?;
    if let Some(i) = points.iter().position(|p| p.len() != d) {
        return Err(CliError::config(format!("point {i} has dimension {}, expected {d}", points[i].len())));
    }
    let ctx = CapraContext::new(input::norm_spec(&norm, d)?);
    let f = sf.build(d)?;
    let upper = match a.upper {
        UpperArg::ContainingSupport => UpperVariant::ContainingSupport,
        UpperArg::AllK => UpperVariant::AllK,
    };
    let records = points
        .iter()
        .enumerate()
        .map(|(i, x)| evaluate(a.op, &ctx, &f, x, i, dual.as_deref(), upper))
        .collect::<Result<Vec<_>, _>>()?;
    let table = records_csv(&records)?;
    match &a.out {
        Some(out) => {
            let doc = json!({
                "command": "eval",
                "operation": records[0].operation,
                "norm": ctx.source().name(),
                "set_function": f.to_config(),
                "d": d,
                "records": records,
                "timestamp": timestamp(),
            });
            let text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::config(e.to_string()))? + "\n";
            write_text(Some(out), &text)?;
            let csv_path = a.csv.clone().unwrap_or_else(|| out.with_extension("csv"));
            write_text(Some(&csv_path), &table)?;
        }
        None => {
            if let Some(p) = &a.csv {
                write_text(Some(p), &table)?;
            }
            write_text(None, &table)?;
        }
    }
    Ok(0)
}
