//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

use std::collections::BTreeMap;
use std::process::Command;
use std::time::{Duration, Instant};

use fsm_capra::norms::NormConfig;
use fsm_capra::verify::{run_suite, ClaimReport, Suite, SuiteConfig, VerificationReport};
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_fsm-capra");

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn suite(s: Suite, norm: &str, d: usize, trials: usize, seed: u64) -> VerificationReport {
    let mut cfg = SuiteConfig::new(s, NormConfig::from_shorthand(norm).unwrap(), d);
    cfg.trials = Some(trials);
    cfg.seed = seed;
    run_suite(&cfg).unwrap_or_else(|e| panic!("{} {norm} d={d}: {e}", s.name()))
}

fn claim<'a>(r: &'a VerificationReport, prefix: &str) -> &'a ClaimReport {
    r.claims.iter().find(|c| c.claim.starts_with(prefix)).unwrap_or_else(|| panic!("no claim {prefix:?} in {}", r.suite))
}

/// The claim passed with at least `min` instances at a tolerance no looser
/// than `tol`.
fn claim_ok(r: &VerificationReport, prefix: &str, tol: f64, min: usize) -> Result<usize, String> {
    let c = claim(r, prefix);
    if c.tolerance > tol {
        return Err(format!("{}: tolerance {:e} looser than {:e}", c.claim, c.tolerance, tol));
    }
    if !c.passed {
        return Err(format!("{} {} d={}: {}: {} failures, max residual {:e}", r.suite, r.norm, r.d, c.claim, c.failures, c.max_residual));
    }
    if c.instances < min {
        return Err(format!("{}: only {} instances", c.claim, c.instances));
    }
    Ok(c.instances)
}

fn all_ok(checks: Vec<Result<usize, String>>) -> Result<usize, String> {
    checks.into_iter().sum()
}

fn theorem1() -> Outcome {
    let mut slowest = Duration::ZERO;
    let mut total = 0;
    for norm in ["l1.5", "l2", "l3"] {
        for d in 2..=4 {
            let t = Instant::now();
            let r = suite(Suite::Theorem1, norm, d, 50, 1);
            let dt = t.elapsed();
            slowest = slowest.max(dt);
            match claim_ok(&r, "biconjugate equals", 1e-4, 50 * 20) {
                Ok(n) => total += n,
                Err(e) => return outcome(false, e),
            }
            if dt > Duration::from_secs(60) {
                return outcome(false, format!("{norm} d={d} took {dt:.1?}"));
            }
        }
    }
    outcome(true, format!("{total} instances over 9 (norm, d) pairs, slowest {slowest:.1?}"))
}

fn non_osm() -> Outcome {
    let out = Command::new(BIN).args(["verify", "theorem1", "--norm", "linf", "--d", "2", "--trials", "10", "--seed", "3"]).output().unwrap();
    if out.status.code() != Some(1) {
        return outcome(false, format!("exit status {:?}", out.status.code()));
    }
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    let c = doc["claims"].as_array().unwrap().iter().find(|c| c["claim"].as_str().unwrap().starts_with("biconjugate equals")).unwrap();
    let n = c["instances"].as_u64().unwrap();
    let gap = c["max_residual"].as_f64().unwrap();
    let witness_gap = c["witness"]["gap"].as_f64().unwrap_or(0.0);
    let ok = n <= 210 && gap > 1e-3 && witness_gap > 1e-3 && c["witness"]["x"].is_array() && c["witness"]["F"].is_array();
    outcome(ok, format!("{n} instances, witness gap {witness_gap:.4}"))
}

fn appendix_b() -> Outcome {
    let prefixes = [
        ("graded identity", 1e-8),
        ("coordinate norm equals support dual norm", 1e-8),
        ("dual coordinate norm equals top dual norm", 1e-8),
        ("coordinate norm <= support dual norm", 1e-8),
        ("dual coordinate norm >= top dual norm", 1e-8),
        ("dual coordinate family is nondecreasing", 1e-8),
        ("coordinate family is antitone", 1e-8),
        ("top dual family is nondecreasing", 1e-8),
        ("support dual ball lies in the coordinate ball", 1e-8),
        ("top dual norm is unchanged", 1e-8),
        ("top dual norm drops strictly", 1e-6),
    ];
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for norm in ["l1.5", "l2", "l3"] {
        for d in 2..=4 {
            let r = suite(Suite::AppendixB, norm, d, 1000, 2);
            for (p, tol) in prefixes {
                match claim_ok(&r, p, tol, 1) {
                    Ok(n) => *counts.entry(p).or_default() += n,
                    Err(e) => return outcome(false, e),
                }
            }
        }
    }
    let fewest = counts.values().copied().min().unwrap_or(0);
    outcome(fewest >= 1000, format!("{} claims, fewest instances per claim {fewest}", counts.len()))
}

fn conjugate_oracle() -> Outcome {
    let r = suite(Suite::ConjugateOracle, "l2", 2, 100, 4);
    match all_ok(vec![claim_ok(&r, "formula minus sampled conjugate lies in [0, 5e-3]", 5e-3, 100), claim_ok(&r, "formula is not below", 1e-9, 100)]) {
        Ok(_) => outcome(true, format!("100 directions, max gap {:e}", claim(&r, "formula minus").max_residual)),
        Err(e) => outcome(false, e),
    }
}

fn theorem2() -> Outcome {
    let mut checks = Vec::new();
    for (norm, d) in [("l2", 2), ("l1.5", 3), ("l3", 4)] {
        let r = suite(Suite::Theorem2, norm, d, 100, 5);
        checks.push(claim_ok(&r, "canonical decomposition is feasible", 0.0, 100));
        checks.push(claim_ok(&r, "no restart undercuts", 1e-6, 100));
        checks.push(claim_ok(&r, "solver value equals", 1e-4, 100));
    }
    match all_ok(checks) {
        Ok(n) => outcome(true, format!("{n} claim instances over 3 norms")),
        Err(e) => outcome(false, e),
    }
}

fn subdiff() -> Outcome {
    let mut checks = Vec::new();
    for (norm, d) in [("l2", 2), ("l1.5", 3), ("l3", 4)] {
        let r = suite(Suite::Subdiff, norm, d, 100, 6);
        checks.push(claim_ok(&r, "constructed subgradient is accepted", 0.0, 100));
        checks.push(claim_ok(&r, "global subgradient inequality", 1e-6, 100));
        checks.push(claim_ok(&r, "membership at zero matches", 0.0, 100));
    }
    match all_ok(checks) {
        Ok(n) => outcome(true, format!("{n} claim instances over 3 norms")),
        Err(e) => outcome(false, e),
    }
}

fn bounds() -> Outcome {
    let r2 = suite(Suite::Bounds, "l2", 2, 1000, 8);
    let r3 = suite(Suite::Bounds, "l1.5", 3, 1000, 8);
    let checks = vec![
        claim_ok(&r2, "lower <= F(supp(x)) <= upper", 1e-6, 1000),
        claim_ok(&r3, "lower <= F(supp(x)) <= upper", 1e-6, 1000),
        claim_ok(&r2, "worked instance", 1e-6, 1),
        claim_ok(&r2, "aggregate norm equals", 1e-3, 1),
        claim_ok(&r3, "aggregate norm equals", 1e-3, 1),
    ];
    match all_ok(checks) {
        Ok(n) => outcome(true, format!("{n} claim instances")),
        Err(e) => outcome(false, e),
    }
}

fn hidden_convexity() -> Outcome {
    let mut checks = Vec::new();
    for (norm, d) in [("l2", 3), ("l1.5", 2)] {
        let r = suite(Suite::HiddenConvexity, norm, d, 500, 9);
        checks.push(claim_ok(&r, "midpoint convexity", 1e-6, 500));
        checks.push(claim_ok(&r, "coincidence with F(supp(x)) on the unit sphere", 1e-4, 200));
    }
    match all_ok(checks) {
        Ok(n) => outcome(true, format!("{n} claim instances")),
        Err(e) => outcome(false, e),
    }
}

fn strip_timestamp(mut v: Value) -> Value {
    if let Value::Object(m) = &mut v {
        m.remove("timestamp");
    }
    v
}

fn determinism() -> Outcome {
    let run = || {
        let out = Command::new(BIN).args(["verify", "theorem1", "--seed", "7"]).output().unwrap();
        (out.status.code(), serde_json::from_slice::<Value>(&out.stdout).map(strip_timestamp).ok())
    };
    let (c1, a) = run();
    let (c2, b) = run();
    let ok = c1 == Some(0) && c2 == Some(0) && a.is_some() && a == b;
    outcome(ok, "verify theorem1 --seed 7 twice")
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("biconjugate equals F(supp(x)) under orthant-strict monotonicity", theorem1),
        ("l-infinity counterexample with witness", non_osm),
        ("local norm family identities", appendix_b),
        ("conjugate against the sampled oracle", conjugate_oracle),
        ("exact variational formula certificate", theorem2),
        ("subdifferential", subdiff),
        ("norm-ratio bounds", bounds),
        ("hidden convexity", hidden_convexity),
        ("deterministic verify output", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = run();
        let tag = if o.passed { "PASS" } else { "FAIL" };
        println!("{tag} criterion {}: {name}: {} [{:.1?}]", i + 1, o.detail, t.elapsed());
        if !o.passed {
            failed += 1;
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
