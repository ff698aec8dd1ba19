//! The Capra coupling `¢(x, y) = <x, y> / ‖x‖` (and `0` at `x = 0`), its
//! conjugates for functions of the support mapping, subdifferentials and
//! the Fenchel baseline.

use serde::Serialize;

use crate::decomp::SolverOptions;
use crate::error::{Error, Result};
use crate::localnorms::{Backend, BlockNorm, LocalNormFamily};
use crate::norms::{Flag, NormSpec};
use crate::oracle::{grid_fenchel_conjugate, OracleBudget};
use crate::setfn::SetFunction;
use crate::subsets::{check_dim, dot, support_unchecked, ExtReal, SubsetMask};
use crate::variational::{ball_form_value, LambdaValue};

/// Absolute tolerance for equalities, applied after scaling by `max(1, |terms|)`.
pub const EQ_TOL: f64 = 1e-6;
/// Tolerance for ties in argmax membership.
pub const TIE_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct CapraContext {
    fam: LocalNormFamily,
}

impl CapraContext {
    pub fn new(source: NormSpec) -> Self {
        CapraContext { fam: LocalNormFamily::new(source) }
    }

    pub fn with_backend(source: NormSpec, backend: Backend) -> Self {
        CapraContext { fam: LocalNormFamily::with_backend(source, backend) }
    }

    pub fn source(&self) -> &NormSpec {
        self.fam.source()
    }

    pub fn family(&self) -> &LocalNormFamily {
        &self.fam
    }

    pub fn dim(&self) -> usize {
        self.fam.dim()
    }

    /// Source and dual norm both declared orthant-strictly monotonic.
    pub fn osm_hypotheses(&self) -> bool {
        let f = self.source().declared_flags();
        f.orthant_strictly_monotonic == Flag::Yes && f.dual_orthant_strictly_monotonic == Flag::Yes
    }

    pub(crate) fn check(&self, v: &[f64]) -> Result<()> {
        check_dim(v.len())?;
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: v.len() });
        }
        if let Some(i) = v.iter().position(|a| !a.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(())
    }

    pub(crate) fn check_fn(&self, f: &SetFunction) -> Result<()> {
        f.require_dim(self.dim())
    }

    pub(crate) fn norm(&self, x: &[f64]) -> f64 {
        self.source().eval(x)
    }

    pub(crate) fn coupling(&self, x: &[f64], y: &[f64]) -> f64 {
        let n = self.norm(x);
        if n == 0.0 {
            0.0
        } else {
            dot(x, y) / n
        }
    }

    pub(crate) fn normalized(&self, x: &[f64]) -> Vec<f64> {
        let n = self.norm(x);
        if n == 0.0 {
            vec![0.0; x.len()]
        } else {
            x.iter().map(|v| v / n).collect()
        }
    }
}

pub fn capra_coupling(ctx: &CapraContext, x: &[f64], y: &[f64]) -> Result<f64> {
    ctx.check(x)?;
    ctx.check(y)?;
    Ok(ctx.coupling(x, y))
}

/// `x / ‖x‖`, and `0` at `0`.
pub fn normalize(ctx: &CapraContext, x: &[f64]) -> Result<Vec<f64>> {
    ctx.check(x)?;
    Ok(ctx.normalized(x))
}

/// Fenchel conjugate of `F∘supp`: `sup_K sup_{supp x = K} <x, y> - F(K)`.
///
/// A face with `y_K ≠ 0` contributes `+∞` unless `F(K) = +∞`; a face with
/// `y_K = 0` contributes `-F(K)`. At `y = 0` this is
/// `sup(-F(∅), -inf_{K≠∅} F(K))`.
pub fn fenchel_conjugate_fsm(f: &SetFunction, y: &[f64]) -> Result<ExtReal> {
    f.require_dim(y.len())?;
    if let Some(i) = y.iter().position(|a| !a.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let sy = support_unchecked(y, 0.0);
    let mut best = ExtReal::NegInf;
    for k in f.subsets() {
        let fk = f.value(k);
        let term = if k.intersection(sy).is_empty() {
            -fk
        } else if fk == ExtReal::PosInf {
            ExtReal::NegInf
        } else {
            ExtReal::PosInf
        };
        best = best.max(term);
    }
    Ok(best)
}

#[derive(Clone, Debug, Serialize)]
pub struct ConjugateValue {
    pub value: ExtReal,
    /// First subset attaining the supremum.
    pub argmax: SubsetMask,
    /// The top dual norm form, computed for orthant-monotonic sources.
    pub top_k_value: Option<ExtReal>,
    pub forms_agree: Option<bool>,
}

/// `sup_K [‖y‖_(K),⋆ - F(K)]` under lower addition.
pub fn capra_conjugate_fsm(ctx: &CapraContext, f: &SetFunction, y: &[f64]) -> Result<ConjugateValue> {
    ctx.check(y)?;
    ctx.check_fn(f)?;
    let (value, argmax) = sup_over(f, |k| ctx.fam.dcn(y, k).0);
    let (top_k_value, forms_agree) = if ctx.fam.orthant_monotonic() {
        let (t, _) = sup_over(f, |k| ctx.fam.topk(y, k).0);
        let agree = match (value, t) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0),
            (a, b) => a == b,
        };
        (Some(t), Some(agree))
    } else {
        (None, None)
    };
    Ok(ConjugateValue { value, argmax, top_k_value, forms_agree })
}

fn sup_over(f: &SetFunction, rho: impl Fn(SubsetMask) -> f64) -> (ExtReal, SubsetMask) {
    let mut best = (ExtReal::NegInf, SubsetMask::empty(f.dim()));
    let mut first = true;
    for k in f.subsets() {
        let v = ExtReal::Finite(rho(k)).lower_add(-f.value(k));
        if first || v > best.0 {
            best = (v, k);
            first = false;
        }
    }
    best
}

#[derive(Clone, Debug, Serialize)]
pub struct ReverseConjugate {
    pub value: ExtReal,
    /// The supremum kept growing with the search box and was reported as `+∞`.
    pub truncated: bool,
}

/// `g'(x) = g^*(n(x))` where `g^*` is the Fenchel conjugate of `g_conj`,
/// estimated on the oracle grid over the boxes of radius `R` and `2R`.
pub fn capra_reverse_conjugate(
    ctx: &CapraContext,
    g_conj: &(dyn Fn(&[f64]) -> ExtReal + Sync),
    x: &[f64],
    budget: &OracleBudget,
) -> Result<ReverseConjugate> {
    ctx.check(x)?;
    let u = ctx.normalized(x);
    let v1 = grid_fenchel_conjugate(g_conj, &u, budget)?;
    let wide = OracleBudget { box_radius: 2.0 * budget.box_radius, grid_resolution: 2.0 * budget.grid_resolution, ..budget.clone() };
    let v2 = grid_fenchel_conjugate(g_conj, &u, &wide)?;
    if v2 > v1 + 1e-6 * (1.0 + v1.abs()) {
        return Ok(ReverseConjugate { value: ExtReal::PosInf, truncated: true });
    }
    Ok(ReverseConjugate { value: ExtReal::new(v1.max(v2)).unwrap_or(ExtReal::NegInf), truncated: false })
}

#[derive(Clone, Debug, Serialize)]
pub struct BiconjugateValue {
    pub value: ExtReal,
    /// Dual lower bound from the solver.
    pub lower: ExtReal,
    /// Source and dual norm are orthant-strictly monotonic and `F` is
    /// nondecreasing and finite.
    pub theorem_applies: bool,
}

/// Capra biconjugate of `F∘supp` at `x`, computed as the hidden-convexity
/// value at `n(x)` with coordinate blocks.
pub fn capra_biconjugate_fsm(ctx: &CapraContext, f: &SetFunction, x: &[f64]) -> Result<BiconjugateValue> {
    capra_biconjugate_with(ctx, f, x, &SolverOptions::default())
}

pub fn capra_biconjugate_with(ctx: &CapraContext, f: &SetFunction, x: &[f64], opts: &SolverOptions) -> Result<BiconjugateValue> {
    ctx.check(x)?;
    ctx.check_fn(f)?;
    let u = ctx.normalized(x);
    let LambdaValue { value, lower, .. } = ball_form_value(&ctx.fam, BlockNorm::Coordinate, f, &u, opts)?;
    let fl = f.flags();
    Ok(BiconjugateValue { value, lower, theorem_applies: ctx.osm_hypotheses() && fl.nondecreasing && fl.finite_valued })
}

/// One checked relation `lhs <= rhs` (or `lhs = rhs`) with its residual.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub label: String,
    pub lhs: ExtReal,
    pub rhs: ExtReal,
    /// Amount of violation, `0` when satisfied exactly.
    pub residual: ExtReal,
    pub tolerance: f64,
}

impl Check {
    fn le(label: String, lhs: ExtReal, rhs: ExtReal, tol: f64) -> Check {
        let residual = lhs.upper_add(-rhs).max(ExtReal::ZERO);
        Check { label, lhs, rhs, residual, tolerance: tol }
    }

    fn eq(label: String, lhs: f64, rhs: f64, tol: f64) -> Check {
        let (l, r) = (ExtReal::Finite(lhs), ExtReal::Finite(rhs));
        Check { label, lhs: l, rhs: r, residual: ExtReal::Finite((lhs - rhs).abs()), tolerance: tol }
    }

    pub fn holds(&self) -> bool {
        self.residual <= ExtReal::Finite(self.tolerance)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SubdiffQueryResult {
    pub member: bool,
    /// Which case of the characterization applied.
    pub case: String,
    pub certificate: Vec<Check>,
}

impl SubdiffQueryResult {
    fn from_checks(case: &str, certificate: Vec<Check>) -> Self {
        SubdiffQueryResult { member: certificate.iter().all(Check::holds), case: case.into(), certificate }
    }

    fn constant(case: &str, member: bool) -> Self {
        SubdiffQueryResult { member, case: case.into(), certificate: Vec::new() }
    }
}

fn scale(vals: &[f64]) -> f64 {
    vals.iter().fold(1.0f64, |m, v| if v.is_finite() { m.max(v.abs()) } else { m })
}

/// `y ∈ ∂(F∘supp)(0)` iff `‖y‖_(K),⋆ <= F(K) ⊤+ (-F(∅))` for every `K`.
pub fn subdiff_at_zero_membership(ctx: &CapraContext, f: &SetFunction, y: &[f64]) -> Result<SubdiffQueryResult> {
    ctx.check(y)?;
    ctx.check_fn(f)?;
    let f0 = f.value(SubsetMask::empty(f.dim()));
    let checks = f
        .subsets()
        .map(|k| {
            let r = ctx.fam.dcn(y, k).0;
            let bound = f.value(k).upper_add(-f0);
            let tol = TIE_TOL * scale(&[r, bound.to_f64()]);
            Check::le(format!("dual-coordinate {k}"), ExtReal::Finite(r), bound, tol)
        })
        .collect();
    Ok(SubdiffQueryResult::from_checks("zero", checks))
}

/// Membership of `y` in the Capra subdifferential of `F∘supp` at `x ≠ 0`.
pub fn subdiff_membership(ctx: &CapraContext, f: &SetFunction, x: &[f64], y: &[f64]) -> Result<SubdiffQueryResult> {
    ctx.check(x)?;
    ctx.check(y)?;
    ctx.check_fn(f)?;
    let l = support_unchecked(x, 0.0);
    if l.is_empty() {
        return Err(Error::Precondition("x must be nonzero; use subdiff_at_zero_membership".into()));
    }
    let fl = f.value(l);
    if fl == ExtReal::NegInf || f.values().iter().all(|v| *v == ExtReal::PosInf) {
        return Ok(SubdiffQueryResult::constant("everything", true));
    }
    if fl == ExtReal::PosInf {
        return Ok(SubdiffQueryResult::constant("empty", false));
    }
    let fl = fl.to_f64();
    let nx = ctx.norm(x);
    let (rl, _) = ctx.fam.dcn(y, l);
    let xy = dot(x, y);
    let mut checks = vec![Check::eq(format!("normal cone at {l}"), xy, nx * rl, EQ_TOL * scale(&[xy, nx * rl]))];
    let at_l = rl - fl;
    for k in f.subsets() {
        if k == l {
            continue;
        }
        let v = ExtReal::Finite(ctx.fam.dcn(y, k).0).lower_add(-f.value(k));
        let tol = TIE_TOL * scale(&[at_l, v.to_f64()]);
        checks.push(Check::le(format!("argmax against {k}"), v, ExtReal::Finite(at_l), tol));
    }
    Ok(SubdiffQueryResult::from_checks("finite", checks))
}

/// `λ v` with `v` a dual-unit subgradient of the source norm at `x`, for the
/// first `λ = 1, 2, 4, …, 2^40` accepted by [`subdiff_membership`].
pub fn construct_subgradient(ctx: &CapraContext, f: &SetFunction, x: &[f64]) -> Result<Vec<f64>> {
    ctx.check(x)?;
    ctx.check_fn(f)?;
    if x.iter().all(|v| *v == 0.0) {
        return Ok(vec![0.0; x.len()]);
    }
    let mut v = ctx.source().subgradient(x);
    let l = support_unchecked(x, 0.0);
    for (i, vi) in v.iter_mut().enumerate() {
        if !l.contains(i) {
            *vi = 0.0;
        }
    }
    let dn = ctx.source().dual_eval(&v);
    if !(dn > 0.0) {
        return Err(Error::SubgradientNotFound { scale: 0.0, residual: f64::INFINITY });
    }
    v.iter_mut().for_each(|a| *a /= dn);
    let mut lambda = 1.0;
    let mut last = f64::INFINITY;
    while lambda <= 2f64.powi(40) {
        let y: Vec<f64> = v.iter().map(|a| lambda * a).collect();
        let r = subdiff_membership(ctx, f, x, &y)?;
        if r.member {
            return Ok(y);
        }
        last = r.certificate.iter().map(|c| c.residual.to_f64()).fold(0.0, f64::max);
        lambda *= 2.0;
    }
    Err(Error::SubgradientNotFound { scale: lambda / 2.0, residual: last })
}

/// `inf_{λ>0} f(λx)` for `x` on the unit sphere or at `0`, and `+∞` elsewhere.
pub fn conditional_infimum(ctx: &CapraContext, f: &dyn Fn(&[f64]) -> ExtReal, x: &[f64], ray_samples: usize) -> Result<ExtReal> {
    ctx.check(x)?;
    let n = ctx.norm(x);
    if n == 0.0 {
        return Ok(f(x));
    }
    if (n - 1.0).abs() > 1e-9 {
        return Ok(ExtReal::PosInf);
    }
    let m = ray_samples.max(2);
    let at = |t: f64| f(&x.iter().map(|v| t * v).collect::<Vec<_>>());
    let (lo, hi) = (1e-6f64.ln(), 1e6f64.ln());
    let step = (hi - lo) / (m - 1) as f64;
    let mut best = (ExtReal::PosInf, lo);
    for i in 0..m {
        let s = lo + step * i as f64;
        let v = at(s.exp());
        if v < best.0 {
            best = (v, s);
        }
    }
    // refine around the incumbent on finer log grids
    let mut width = step;
    for _ in 0..6 {
        let c = best.1;
        for j in -8i32..=8 {
            let s = (c + width * j as f64 / 8.0).clamp(lo, hi);
            let v = at(s.exp());
            if v < best.0 {
                best = (v, s);
            }
        }
        width /= 8.0;
    }
    Ok(best.0)
}

/// `max_{u ∈ U} <n(u), y>` for a finite nonempty set `U`.
pub fn conjugate_of_indicator(ctx: &CapraContext, points: &[Vec<f64>], y: &[f64]) -> Result<f64> {
    ctx.check(y)?;
    if points.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut best = f64::NEG_INFINITY;
    for u in points {
        ctx.check(u)?;
        best = best.max(dot(&ctx.normalized(u), y));
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(p: f64, d: usize) -> CapraContext {
        CapraContext::new(NormSpec::lp(p, d).unwrap())
    }

    #[test]
    fn coupling_and_normalization() {
        let c = ctx(2.0, 2);
        assert_eq!(capra_coupling(&c, &[0.0, 0.0], &[4.0, 1.0]).unwrap(), 0.0);
        assert!((capra_coupling(&c, &[3.0, 4.0], &[1.0, 0.0]).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(capra_coupling(&c, &[2.0, 0.0], &[5.0, 7.0]).unwrap(), 5.0);
        assert_eq!(normalize(&ctx(1.0, 2), &[2.0, -2.0]).unwrap(), vec![0.5, -0.5]);
    }

    #[test]
    fn conjugate_examples() {
        let c = ctx(2.0, 2);
        let card = SetFunction::cardinality(2).unwrap();
        let v = capra_conjugate_fsm(&c, &card, &[3.0, 4.0]).unwrap();
        assert_eq!(v.value, ExtReal::Finite(3.0));
        assert_eq!(v.forms_agree, Some(true));
        let sq = SetFunction::from_fn(2, "square", |k| ExtReal::Finite((k.len() * k.len()) as f64)).unwrap();
        assert_eq!(capra_conjugate_fsm(&c, &sq, &[3.0, 4.0]).unwrap().value, ExtReal::Finite(3.0));
        assert_eq!(fenchel_conjugate_fsm(&card, &[0.0, 0.0]).unwrap(), ExtReal::ZERO);
        assert_eq!(fenchel_conjugate_fsm(&card, &[1.0, 1.0]).unwrap(), ExtReal::PosInf);
    }

    #[test]
    fn subdifferential_examples() {
        let c = ctx(2.0, 2);
        let card = SetFunction::cardinality(2).unwrap();
        assert!(subdiff_at_zero_membership(&c, &card, &[1.0, 1.0]).unwrap().member);
        assert!(!subdiff_at_zero_membership(&c, &card, &[2.0, 0.0]).unwrap().member);
        let x = [0.0, 2.0];
        assert!(subdiff_membership(&c, &card, &x, &[0.0, 1.0]).unwrap().member);
        assert!(!subdiff_membership(&c, &card, &x, &[1.0, 0.0]).unwrap().member);
        assert!(!subdiff_membership(&c, &card, &x, &[0.0, 0.5]).unwrap().member);
        assert_eq!(construct_subgradient(&c, &card, &x).unwrap(), vec![0.0, 1.0]);
        let y = construct_subgradient(&c, &card, &[3.0, 4.0]).unwrap();
        assert!((y[0] - 4.8).abs() < 1e-12 && (y[1] - 6.4).abs() < 1e-12, "{y:?}");
    }

    #[test]
    fn ray_infimum_and_indicator() {
        let c = ctx(2.0, 2);
        let card = SetFunction::cardinality(2).unwrap();
        let fsm = |x: &[f64]| card.value(support_unchecked(x, 0.0));
        assert_eq!(conditional_infimum(&c, &fsm, &[0.0, 1.0], 50).unwrap(), ExtReal::Finite(1.0));
        assert_eq!(conditional_infimum(&c, &fsm, &[0.0, 2.0], 50).unwrap(), ExtReal::PosInf);
        let sq = |x: &[f64]| ExtReal::Finite(dot(x, x));
        assert!(conditional_infimum(&c, &sq, &[1.0, 0.0], 50).unwrap().to_f64() < 1e-6);
        assert!((conjugate_of_indicator(&c, &[vec![3.0, 4.0]], &[1.0, 0.0]).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(conjugate_of_indicator(&c, &[vec![1.0, 0.0], vec![0.0, 1.0]], &[2.0, 3.0]).unwrap(), 3.0);
    }

    #[test]
    fn biconjugate_examples() {
        let c = ctx(2.0, 3);
        let card = SetFunction::cardinality(3).unwrap();
        let b = capra_biconjugate_fsm(&c, &card, &[1.0, 1.0, 1.0]).unwrap();
        assert!((b.value.to_f64() - 3.0).abs() < 1e-6 && b.theorem_applies, "{b:?}");
        let b = capra_biconjugate_fsm(&c, &card, &[0.0, 2.0, 0.0]).unwrap();
        assert!((b.value.to_f64() - 1.0).abs() < 1e-6, "{b:?}");
        assert_eq!(capra_biconjugate_fsm(&c, &card, &[0.0; 3]).unwrap().value, ExtReal::ZERO);
    }
}
