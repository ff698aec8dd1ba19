//! The hidden-convexity function `L0^F`, its variational formulas, the exact
//! formula for `F∘supp` away from the origin, the aggregate `F`-norms with
//! the bounds they give, and sparse optimization through the reformulation.
//!
//! All minimizations over decompositions go through [`crate::decomp::solve`].
//! With `G = F - F(∅)` and `m = min(0, min_K G(K))`, the ball formulation is
//! `L0^F(x) = F(∅) + m + min Σ_K N_K(z_K) (G(K) - m)` subject to
//! `Σ_K N_K(z_K) <= 1` and `Σ_K z_K = x`: the mass left over in the simplex
//! goes to a subset where `F` is smallest.

use serde::Serialize;

use crate::capra::CapraContext;
use crate::decomp::{self, Block, Decomposition, DecompositionProblem, DecompositionResult, SolverOptions, SolverTrace, BUDGET_SLACK};
use crate::engine::{default_iterations, minimize, support_sup, Program, SupportValue, ValueGrad};
use crate::error::{Error, Result};
use crate::localnorms::{BlockNorm, LocalNormFamily};
use crate::norms::mask;
use crate::setfn::SetFunction;
use crate::subsets::{euclid, support_unchecked, ExtReal, SubsetMask};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratingSet {
    Ball,
    Sphere,
}

#[derive(Clone, Debug, Serialize)]
pub struct LambdaEntry {
    pub subset: SubsetMask,
    pub weight: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolverState {
    /// Simplex weights, `∅` included, summing to one.
    pub lambda: Vec<LambdaEntry>,
    pub z: Option<Decomposition>,
    pub objective: ExtReal,
    pub diagnostic: Option<String>,
    pub trace: Option<SolverTrace>,
}

#[derive(Clone, Debug, Serialize)]
pub struct LambdaValue {
    pub value: ExtReal,
    pub lower: ExtReal,
    pub state: SolverState,
}

impl LambdaValue {
    fn constant(value: ExtReal, lambda: Vec<LambdaEntry>, diagnostic: Option<String>) -> Self {
        LambdaValue { value, lower: value, state: SolverState { lambda, z: None, objective: value, diagnostic, trace: None } }
    }
}

/// Ball formulation with the given block norms, at budget one.
pub(crate) fn ball_form_value(fam: &LocalNormFamily, block: BlockNorm, f: &SetFunction, x: &[f64], opts: &SolverOptions) -> Result<LambdaValue> {
    form_value(fam, block, f, x, GeneratingSet::Ball, opts)
}

fn form_value(fam: &LocalNormFamily, block: BlockNorm, f: &SetFunction, x: &[f64], set: GeneratingSet, opts: &SolverOptions) -> Result<LambdaValue> {
    let d = f.dim();
    let empty = SubsetMask::empty(d);
    if let Some(k) = f.subsets().find(|k| f.value(*k) == ExtReal::NegInf) {
        return Ok(LambdaValue::constant(ExtReal::NegInf, vec![LambdaEntry { subset: k, weight: 1.0 }], None));
    }
    let f0 = match f.value(empty) {
        ExtReal::Finite(v) => v,
        _ => return Err(Error::InvalidSetFunction("F(∅) = +∞ is not supported".into())),
    };
    let mut m = (0.0, empty);
    let mut weights = Vec::new();
    for k in f.subsets().skip(1) {
        if let ExtReal::Finite(v) = f.value(k) {
            let g = v - f0;
            if g < m.0 {
                m = (g, k);
            }
            weights.push((k, g));
        }
    }
    if set == GeneratingSet::Sphere && m.0 < 0.0 {
        return Err(Error::Precondition("the sphere formulation needs F(K) >= F(∅)".into()));
    }
    let (m, mk) = m;
    for w in &mut weights {
        w.1 -= m;
    }
    if x.iter().all(|v| *v == 0.0) {
        return Ok(LambdaValue::constant(ExtReal::Finite(f0 + m), vec![LambdaEntry { subset: mk, weight: 1.0 }], None));
    }
    let infeasible = |why: &str| Ok(LambdaValue::constant(ExtReal::PosInf, Vec::new(), Some(why.into())));
    if weights.is_empty() {
        return infeasible("no subset with finite value");
    }
    if fam.source().eval(x) > 1.0 + BUDGET_SLACK {
        return infeasible("x lies outside the unit ball");
    }
    let p = DecompositionProblem { family: fam, block, weights, x: x.to_vec(), budget: Some(1.0) };
    let r = match decomp::solve(&p, opts) {
        Ok(r) => r,
        Err(Error::Solver(_)) => return infeasible("no feasible decomposition found"),
        Err(e) => return Err(e),
    };
    let used = r.primal.budget_used;
    let mut lambda: Vec<LambdaEntry> = r.primal.blocks.iter().map(|b| LambdaEntry { subset: b.subset, weight: b.norm }).collect();
    let rest = (1.0 - used).max(0.0);
    match lambda.iter_mut().find(|e| e.subset == mk) {
        Some(e) => e.weight += rest,
        None => lambda.push(LambdaEntry { subset: mk, weight: rest }),
    }
    let value = ExtReal::Finite(f0 + m + r.value);
    Ok(LambdaValue {
        value,
        lower: ExtReal::Finite(f0 + m + r.lower),
        state: SolverState { lambda, z: Some(r.primal), objective: value, diagnostic: None, trace: Some(r.trace) },
    })
}

/// `min Σ λ_K F(K)` over the simplex with `x ∈ Σ λ_K Γ_K`, `Γ_K` the unit
/// ball or sphere of the support dual norm on `FlatR_K` (`Γ_∅ = {0}`).
pub fn solve_lambda_form(ctx: &CapraContext, f: &SetFunction, x: &[f64], set: GeneratingSet) -> Result<LambdaValue> {
    ctx.check(x)?;
    ctx.check_fn(f)?;
    if !f.flags().finite_valued {
        return Err(Error::Precondition("set function must be finite-valued".into()));
    }
    form_value(ctx.family(), BlockNorm::SupportDual, f, x, set, &SolverOptions::default())
}

/// `L0^F(x)`, `+∞` outside the unit ball.
pub fn eval_l0f(ctx: &CapraContext, f: &SetFunction, x: &[f64]) -> Result<LambdaValue> {
    eval_l0f_with(ctx, f, x, &SolverOptions::default())
}

pub fn eval_l0f_with(ctx: &CapraContext, f: &SetFunction, x: &[f64], opts: &SolverOptions) -> Result<LambdaValue> {
    ctx.check(x)?;
    ctx.check_fn(f)?;
    f.require_nondecreasing_finite()?;
    form_value(ctx.family(), BlockNorm::SupportDual, f, x, GeneratingSet::Ball, opts)
}

#[derive(Clone, Debug, Serialize)]
pub struct VariationalValue {
    /// Solver value of `(1/‖x‖) min Σ F(K) N_K(z_K)`.
    pub value: f64,
    pub lower: f64,
    /// The one-block decomposition `z_L = x`, `L = supp(x)`.
    pub certificate: Decomposition,
    pub certificate_feasible: bool,
    pub theorem_applies: bool,
    pub solver: DecompositionResult,
}

/// Tolerance for the solver value against `F(supp(x))`.
pub const VALUE_TOL: f64 = 1e-4;

/// `(1/‖x‖) min Σ_K F(K)‖z_K‖_⟨K⟩,sd` over decompositions of `x` with
/// `Σ_K ‖z_K‖_⟨K⟩,sd <= ‖x‖`.
///
/// Under the strict monotonicity hypotheses the value must be `F(supp(x))`,
/// attained by the canonical certificate; a disagreement is an error.
pub fn variational_value(ctx: &CapraContext, f: &SetFunction, x: &[f64]) -> Result<VariationalValue> {
    variational_value_with(ctx, f, x, &SolverOptions::default())
}

pub fn variational_value_with(ctx: &CapraContext, f: &SetFunction, x: &[f64], opts: &SolverOptions) -> Result<VariationalValue> {
    ctx.check(x)?;
    ctx.check_fn(f)?;
    f.require_nondecreasing_finite()?;
    if !f.flags().normalized {
        return Err(Error::Precondition("set function must satisfy F(∅) = 0".into()));
    }
    let l = support_unchecked(x, 0.0);
    if l.is_empty() {
        return Err(Error::Precondition("x must be nonzero".into()));
    }
    let nx = ctx.norm(x);
    let fam = ctx.family();
    let fl = f.finite(l);
    let cn = fam.ksd(x, l).0;
    let certificate = Decomposition {
        blocks: vec![Block { subset: l, z: x.to_vec(), norm: cn }],
        objective: fl * cn,
        budget_used: cn,
        residual: 0.0,
    };
    let certificate_feasible = cn <= nx + BUDGET_SLACK * nx.max(1.0);
    let weights = f.subsets().skip(1).map(|k| (k, f.finite(k))).collect();
    let p = DecompositionProblem { family: fam, block: BlockNorm::SupportDual, weights, x: x.to_vec(), budget: Some(nx) };
    // every restart runs, so the certificate is tested against all of them
    let opts = SolverOptions { early_stop: false, ..opts.clone() };
    let solver = decomp::solve(&p, &opts)?;
    let value = solver.value / nx;
    let lower = solver.lower / nx;
    let theorem_applies = ctx.osm_hypotheses();
    if theorem_applies && (!certificate_feasible || (value - fl).abs() > VALUE_TOL) {
        return Err(Error::CertificateMismatch { value, expected: fl });
    }
    Ok(VariationalValue { value, lower, certificate, certificate_feasible, theorem_applies, solver })
}

/// The aggregate norms of a positive set function: the top dual form
/// `sup_{K≠∅} ‖y‖_⟨K⟩,⋆ / F(K)` and its dual, the infimal convolution
/// `inf Σ_K F(K)‖z_K‖_⟨K⟩,sd` over decompositions of `x`.
#[derive(Clone, Debug)]
pub struct AggregateNorm {
    fam: LocalNormFamily,
    f: SetFunction,
}

impl AggregateNorm {
    pub fn new(ctx: &CapraContext, f: &SetFunction) -> Result<Self> {
        ctx.check_fn(f)?;
        if !f.flags().normalized {
            return Err(Error::InvalidSetFunction("aggregate norm needs F(∅) = 0".into()));
        }
        if f.subsets().skip(1).any(|k| !matches!(f.value(k), ExtReal::Finite(v) if v > 0.0)) {
            return Err(Error::InvalidSetFunction("aggregate norm needs 0 < F(K) < +∞ for K ≠ ∅".into()));
        }
        Ok(AggregateNorm { fam: ctx.family().clone(), f: f.clone() })
    }

    fn check(&self, v: &[f64]) -> Result<()> {
        self.fam.check(v, SubsetMask::full(self.f.dim()))
    }

    fn top_value_grad(&self, y: &[f64]) -> ValueGrad {
        let mut best = (0.0, vec![0.0; y.len()]);
        for k in self.f.subsets().skip(1) {
            let w = self.f.finite(k);
            let (v, g) = self.fam.topk(y, k);
            if v / w > best.0 {
                best = (v / w, g.iter().map(|a| a / w).collect());
            }
        }
        best
    }

    pub fn aggregate_top_dual_norm(&self, y: &[f64]) -> Result<f64> {
        self.check(y)?;
        Ok(self.top_value_grad(y).0)
    }

    /// Infimal convolution form, from the decomposition solver.
    pub fn aggregate_support_dual_norm(&self, x: &[f64]) -> Result<DecompositionResult> {
        self.aggregate_support_dual_norm_with(x, &SolverOptions::default())
    }

    pub fn aggregate_support_dual_norm_with(&self, x: &[f64], opts: &SolverOptions) -> Result<DecompositionResult> {
        self.check(x)?;
        let weights = self.f.subsets().skip(1).map(|k| (k, self.f.finite(k))).collect();
        let p = DecompositionProblem { family: &self.fam, block: BlockNorm::SupportDual, weights, x: x.to_vec(), budget: None };
        decomp::solve(&p, opts)
    }

    /// `sup { <x, y> : aggregate_top_dual_norm(y) <= 1 }`, dualized numerically.
    pub fn dual_of_top(&self, x: &[f64]) -> Result<SupportValue> {
        self.check(x)?;
        Ok(support_sup(SubsetMask::full(self.f.dim()), x, &|y| self.top_value_grad(y)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum UpperVariant {
    /// `min` over all nonempty `K`.
    AllK,
    /// `min` over `K ⊇ supp(x)`.
    #[default]
    ContainingSupport,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundsReport {
    pub lower: f64,
    pub value: f64,
    pub upper: f64,
    pub upper_variant: UpperVariant,
    pub upper_all_k: f64,
    pub upper_containing_support: f64,
    /// Dual lower bound on the aggregate norm, divided by `‖x‖`.
    pub lower_certified: f64,
}

/// `lower = ‖x‖_F,sd / ‖x‖ <= F(supp(x)) <= min_K F(K)‖x‖_⟨K⟩,sd / ‖x‖ = upper`.
pub fn bounds(ctx: &CapraContext, f: &SetFunction, x: &[f64], variant: UpperVariant) -> Result<BoundsReport> {
    bounds_with(ctx, f, x, variant, &SolverOptions::default())
}

pub fn bounds_with(ctx: &CapraContext, f: &SetFunction, x: &[f64], variant: UpperVariant, opts: &SolverOptions) -> Result<BoundsReport> {
    ctx.check(x)?;
    let agg = AggregateNorm::new(ctx, f)?;
    if !f.flags().nondecreasing {
        return Err(Error::Precondition("set function must be nondecreasing".into()));
    }
    let l = support_unchecked(x, 0.0);
    if l.is_empty() {
        return Err(Error::Precondition("x must be nonzero".into()));
    }
    let nx = ctx.norm(x);
    let r = agg.aggregate_support_dual_norm_with(x, opts)?;
    let upper_of = |k: SubsetMask| f.finite(k) * ctx.family().ksd(x, k).0 / nx;
    let upper_all_k = f.subsets().skip(1).map(upper_of).fold(f64::INFINITY, f64::min);
    let upper_containing_support = l.supersets().map(upper_of).fold(f64::INFINITY, f64::min);
    let upper = match variant {
        UpperVariant::AllK => upper_all_k,
        UpperVariant::ContainingSupport => upper_containing_support,
    };
    Ok(BoundsReport {
        lower: r.value / nx,
        value: f.finite(l),
        upper,
        upper_variant: variant,
        upper_all_k,
        upper_containing_support,
        lower_certified: r.lower / nx,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SparseSetMin {
    pub value: f64,
    pub argmin: Vec<f64>,
    pub index: usize,
    /// `(F(supp(x)), variational value)` per point.
    pub per_point: Vec<(f64, f64)>,
}

/// `min_{x ∈ C} F(supp(x))`, evaluated directly and through the variational
/// value at every point.
pub fn sparse_min_over_set(ctx: &CapraContext, f: &SetFunction, c: &[Vec<f64>]) -> Result<SparseSetMin> {
    if c.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut per_point = Vec::with_capacity(c.len());
    let mut best: Option<(f64, usize)> = None;
    for (i, x) in c.iter().enumerate() {
        ctx.check(x)?;
        if x.iter().all(|v| *v == 0.0) {
            return Err(Error::Precondition("the constraint sample must not contain 0".into()));
        }
        let direct = f.finite(support_unchecked(x, 0.0));
        let v = variational_value(ctx, f, x)?;
        per_point.push((direct, v.value));
        if best.is_none_or(|(b, _)| direct < b) {
            best = Some((direct, i));
        }
    }
    let (value, index) = best.expect("nonempty sample");
    Ok(SparseSetMin { value, argmin: c[index].clone(), index, per_point })
}

#[derive(Clone, Debug)]
pub struct SolverBudget {
    /// Radius of the starting ball of the convex solves.
    pub radius: f64,
    pub iterations: Option<usize>,
}

impl Default for SolverBudget {
    fn default() -> Self {
        SolverBudget { radius: 100.0, iterations: None }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SparseConstrained {
    pub value: f64,
    pub x: Vec<f64>,
    /// Lifted decomposition `z_L = x`.
    pub z: Decomposition,
    /// The lifted constraints hold at `z` within the budget slack.
    pub lifted_feasible: bool,
}

/// `min f0(x)` subject to `F(supp(x)) <= α`, solved through the lifted
/// program: its feasible points sum to exactly the vectors with
/// `F(supp(x)) <= α`, so the convex objective is minimized on each
/// admissible face `FlatR_K` and the best face is lifted to `z_K = x`.
pub fn sparse_constrained_min(
    ctx: &CapraContext,
    f: &SetFunction,
    f0: &dyn Fn(&[f64]) -> ValueGrad,
    alpha: f64,
    budget: &SolverBudget,
) -> Result<SparseConstrained> {
    ctx.check_fn(f)?;
    f.require_nondecreasing_finite()?;
    if !f.flags().normalized {
        return Err(Error::Precondition("set function must satisfy F(∅) = 0".into()));
    }
    if !(alpha >= 0.0) {
        return Err(Error::Infeasible(format!("no vector has F(supp(x)) <= {alpha}")));
    }
    let d = f.dim();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for k in f.subsets() {
        if f.finite(k) > alpha {
            continue;
        }
        let (v, x) = minimize_on_face(f0, k, d, budget);
        if best.as_ref().is_none_or(|(b, _)| v < *b) {
            best = Some((v, x));
        }
    }
    let Some((value, x)) = best else {
        return Err(Error::Infeasible("no admissible support".into()));
    };
    let l = support_unchecked(&x, 0.0);
    if f.finite(l) > alpha + 1e-9 {
        return Err(Error::Solver(format!("returned support {l} violates the sparsity level")));
    }
    let nx = ctx.norm(&x);
    let n = ctx.family().ksd(&x, l).0;
    let slack = BUDGET_SLACK * nx.max(1.0);
    let lifted_feasible = n <= nx + slack && f.finite(l) * n <= alpha * nx + slack;
    let blocks = if l.is_empty() { Vec::new() } else { vec![Block { subset: l, z: x.clone(), norm: n }] };
    let z = Decomposition { blocks, objective: f.finite(l) * n, budget_used: n, residual: 0.0 };
    Ok(SparseConstrained { value, x, z, lifted_feasible })
}

fn minimize_on_face(f0: &dyn Fn(&[f64]) -> ValueGrad, k: SubsetMask, d: usize, budget: &SolverBudget) -> (f64, Vec<f64>) {
    let idx: Vec<usize> = k.indices().collect();
    if idx.is_empty() {
        let z = vec![0.0; d];
        return (f0(&z).0, z);
    }
    let lift = |u: &[f64]| {
        let mut x = vec![0.0; d];
        for (a, &i) in idx.iter().enumerate() {
            x[i] = u[a];
        }
        x
    };
    let objective = |u: &[f64]| {
        let (v, g) = f0(&lift(u));
        (v, idx.iter().map(|&i| g[i]).collect())
    };
    let m = idx.len();
    let its = budget.iterations.unwrap_or(default_iterations(m));
    let mut radius = budget.radius;
    let mut best = (f64::INFINITY, vec![0.0; d]);
    for _ in 0..4 {
        let prog = Program { dim: m, constraint: None, objective: &objective };
        let out = minimize(&prog, &vec![0.0; m], radius, its, 1e-12);
        if out.value < best.0 {
            best = (out.value, mask(&lift(&out.x), k));
        }
        if euclid(&out.x) < 0.9 * radius {
            break;
        }
        radius *= 8.0;
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::NormSpec;
    use crate::subsets::dot;

    fn ctx(p: f64, d: usize) -> CapraContext {
        CapraContext::new(NormSpec::lp(p, d).unwrap())
    }

    #[test]
    fn hidden_convexity_examples() {
        let c = ctx(2.0, 2);
        let card = SetFunction::cardinality(2).unwrap();
        assert!((eval_l0f(&c, &card, &[0.0, 1.0]).unwrap().value.to_f64() - 1.0).abs() < 1e-9);
        assert!((eval_l0f(&c, &card, &[0.0, 0.5]).unwrap().value.to_f64() - 0.5).abs() < 1e-9);
        assert_eq!(eval_l0f(&c, &card, &[0.0, 0.0]).unwrap().value, ExtReal::ZERO);
        assert_eq!(eval_l0f(&c, &card, &[0.0, 1.5]).unwrap().value, ExtReal::PosInf);
        let s = solve_lambda_form(&c, &card, &[0.5, 0.0], GeneratingSet::Ball).unwrap();
        assert!((s.value.to_f64() - 0.5).abs() < 1e-9);
        let w = |k: &[usize]| s.state.lambda.iter().find(|e| e.subset == SubsetMask::from_indices(2, k).unwrap()).map_or(0.0, |e| e.weight);
        assert!((w(&[1]) - 0.5).abs() < 1e-9 && (w(&[]) - 0.5).abs() < 1e-9, "{:?}", s.state.lambda);
    }

    #[test]
    fn variational_examples() {
        let c = ctx(2.0, 2);
        let card = SetFunction::cardinality(2).unwrap();
        let v = variational_value(&c, &card, &[0.0, 2.0]).unwrap();
        assert!((v.value - 1.0).abs() < 1e-9);
        assert_eq!(v.certificate.blocks[0].subset, SubsetMask::from_indices(2, &[2]).unwrap());
        assert!((variational_value(&c, &card, &[1.0, 1.0]).unwrap().value - 2.0).abs() < 1e-9);
        let one = SetFunction::from_fn(2, "min1", |k| ExtReal::Finite(k.len().min(1) as f64)).unwrap();
        assert!((variational_value(&c, &one, &[3.0, 4.0]).unwrap().value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bounds_examples() {
        let c = ctx(2.0, 2);
        let card = SetFunction::cardinality(2).unwrap();
        let b = bounds(&c, &card, &[1.0, 1.0], UpperVariant::ContainingSupport).unwrap();
        assert!((b.lower - 2f64.sqrt()).abs() < 1e-6, "{b:?}");
        assert_eq!(b.value, 2.0);
        assert!((b.upper - 2.0).abs() < 1e-12);
        assert!((b.upper_all_k - 0.5f64.sqrt()).abs() < 1e-12);
        let b = bounds(&c, &card, &[3.0, 0.0], UpperVariant::ContainingSupport).unwrap();
        assert!((b.lower - 1.0).abs() < 1e-6 && (b.upper - 1.0).abs() < 1e-12);
        let agg = AggregateNorm::new(&c, &card).unwrap();
        assert_eq!(agg.aggregate_top_dual_norm(&[3.0, 4.0]).unwrap(), 4.0);
        assert!((agg.dual_of_top(&[1.0, 1.0]).unwrap().value - 2.0).abs() < 1e-6);
    }

    #[test]
    fn sparse_examples() {
        let c = ctx(2.0, 3);
        let card = SetFunction::cardinality(3).unwrap();
        let r = sparse_min_over_set(&c, &card, &[vec![1.0, 1.0, 1.0], vec![0.0, 2.0, 0.0], vec![1.0, 0.0, 1.0]]).unwrap();
        assert_eq!((r.value, r.index), (1.0, 1));
        let c = ctx(2.0, 2);
        let card = SetFunction::cardinality(2).unwrap();
        let f0 = |x: &[f64]| {
            let r = [x[0], x[1] - 3.0];
            (dot(&r, &r), vec![2.0 * r[0], 2.0 * r[1]])
        };
        let s = sparse_constrained_min(&c, &card, &f0, 1.0, &SolverBudget::default()).unwrap();
        assert!(s.value < 1e-8 && (s.x[1] - 3.0).abs() < 1e-4 && s.x[0] == 0.0, "{s:?}");
        assert!(s.lifted_feasible);
        let z = sparse_constrained_min(&c, &card, &f0, 0.0, &SolverBudget::default()).unwrap();
        assert_eq!(z.x, vec![0.0, 0.0]);
        assert!(sparse_constrained_min(&c, &card, &f0, -1.0, &SolverBudget::default()).is_err());
    }
}
