//! Source norms, their duals, restriction norms and the orthant
//! monotonicity checks.
//!
//! Catalog norms (`lp`, weighted `lp`) have closed-form duals. Table norms
//! `‖Ax‖_1` / `‖Ax‖_∞` and programmatic norms are dualized numerically with
//! [`crate::engine::support_sup`].

use std::fmt;
use std::sync::Arc;

use dashmap::DashMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::engine::{support_sup, ValueGrad};
use crate::error::{Error, Result};
use crate::lp::simplex;
use crate::subsets::{check_dim, dot, support_unchecked, SubsetMask};

/// An exponent `p` in `[1, ∞]`. Serialized as a number or `"inf"`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Exponent(pub f64);

impl Exponent {
    pub const INF: Exponent = Exponent(f64::INFINITY);

    pub fn conjugate(self) -> Exponent {
        let p = self.0;
        if p == 1.0 {
            Exponent::INF
        } else if p.is_infinite() {
            Exponent(1.0)
        } else {
            Exponent(p / (p - 1.0))
        }
    }

    pub fn is_inf(self) -> bool {
        self.0.is_infinite()
    }

    fn validate(self) -> Result<()> {
        if !(self.0 >= 1.0) {
            return Err(Error::InvalidNorm(format!("exponent {} is not in [1, inf]", self.0)));
        }
        Ok(())
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_inf() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.is_inf() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Exponent(v)),
            Raw::Text(t) if t == "inf" || t == "infinity" => Ok(Exponent::INF),
            Raw::Text(t) => t
                .parse::<f64>()
                .map(Exponent)
                .map_err(|_| serde::de::Error::custom(format!("bad exponent {t:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combine {
    /// `Σ_r |a_r·x|`
    Sum,
    /// `max_r |a_r·x|`
    Max,
}

/// Three-valued monotonicity flag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Flag {
    Yes,
    No,
    #[default]
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct DeclaredFlags {
    #[serde(default)]
    pub orthant_monotonic: Flag,
    #[serde(default)]
    pub orthant_strictly_monotonic: Flag,
    #[serde(default)]
    pub dual_orthant_strictly_monotonic: Flag,
}

/// Serializable norm configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NormConfig {
    Lp {
        p: Exponent,
    },
    /// `‖w∘x‖_p` with positive weights; the dual is `‖y/w‖_q`.
    WeightedLp {
        p: Exponent,
        weights: Vec<f64>,
    },
    /// `‖Ax‖_1` (combine = "sum") or `‖Ax‖_∞` (combine = "max").
    CustomTable {
        combine: Combine,
        rows: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        flags: Option<DeclaredFlags>,
    },
}

impl NormConfig {
    pub fn lp(p: f64) -> NormConfig {
        NormConfig::Lp { p: Exponent(p) }
    }

    /// Parses `l1`, `l1.5`, `l2`, `l3`, `linf`, … as an `lp` norm.
    pub fn from_shorthand(s: &str) -> Option<NormConfig> {
        let rest = s.strip_prefix('l')?;
        if rest == "inf" {
            return Some(NormConfig::Lp { p: Exponent::INF });
        }
        let p: f64 = rest.parse().ok()?;
        Some(NormConfig::Lp { p: Exponent(p) })
    }
}

/// A norm supplied as code.
pub trait CustomNorm: Send + Sync + fmt::Debug {
    fn name(&self) -> String;
    fn eval(&self, x: &[f64]) -> f64;
    /// A subgradient at `x`; numeric central differences when `None`.
    fn subgradient(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }
    /// Closed-form dual norm, if known.
    fn dual(&self, _y: &[f64]) -> Option<f64> {
        None
    }
    fn flags(&self) -> DeclaredFlags {
        DeclaredFlags::default()
    }
}

#[derive(Clone, Debug)]
enum Kind {
    Lp(Exponent),
    WeightedLp(Exponent, Vec<f64>),
    Table(Combine, Vec<Vec<f64>>),
    Custom(Arc<dyn CustomNorm>),
}

type DualCache = DashMap<(u32, Vec<u64>), (f64, Vec<f64>)>;

/// A validated norm on `R^d`.
#[derive(Clone)]
pub struct NormSpec {
    dim: usize,
    kind: Kind,
    config: Option<NormConfig>,
    flags: DeclaredFlags,
    cache: Arc<DualCache>,
}

impl fmt::Debug for NormSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NormSpec({}, d={})", self.name(), self.dim)
    }
}

impl NormSpec {
    pub fn from_config(config: &NormConfig, dim: usize) -> Result<NormSpec> {
        check_dim(dim)?;
        let (kind, flags) = match config {
            NormConfig::Lp { p } => {
                p.validate()?;
                (Kind::Lp(*p), lp_flags(*p, dim))
            }
            NormConfig::WeightedLp { p, weights } => {
                p.validate()?;
                if weights.len() != dim {
                    return Err(Error::InvalidNorm(format!("{} weights for dimension {dim}", weights.len())));
                }
                if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
                    return Err(Error::InvalidNorm("weights must be finite and positive".into()));
                }
                (Kind::WeightedLp(*p, weights.clone()), lp_flags(*p, dim))
            }
            NormConfig::CustomTable { combine, rows, flags } => {
                if rows.is_empty() || rows.iter().any(|r| r.len() != dim) {
                    return Err(Error::InvalidNorm(format!("table rows must all have length {dim}")));
                }
                if rows.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidNorm("table entries must be finite".into()));
                }
                if rank(rows) < dim {
                    return Err(Error::InvalidNorm("table has rank below the dimension, so it is not a norm".into()));
                }
                (Kind::Table(*combine, rows.clone()), flags.unwrap_or_default())
            }
        };
        Ok(NormSpec { dim, kind, config: Some(config.clone()), flags, cache: Arc::default() })
    }

    pub fn lp(p: f64, dim: usize) -> Result<NormSpec> {
        Self::from_config(&NormConfig::lp(p), dim)
    }

    pub fn custom(norm: Arc<dyn CustomNorm>, dim: usize) -> Result<NormSpec> {
        check_dim(dim)?;
        let flags = norm.flags();
        Ok(NormSpec { dim, kind: Kind::Custom(norm), config: None, flags, cache: Arc::default() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The configuration this norm was built from; `None` for programmatic norms.
    pub fn config(&self) -> Option<&NormConfig> {
        self.config.as_ref()
    }

    pub fn declared_flags(&self) -> DeclaredFlags {
        self.flags
    }

    pub fn name(&self) -> String {
        match &self.kind {
            Kind::Lp(p) => format!("l{p}"),
            Kind::WeightedLp(p, _) => format!("weighted-l{p}"),
            Kind::Table(Combine::Sum, _) => "custom-table-sum".into(),
            Kind::Table(Combine::Max, _) => "custom-table-max".into(),
            Kind::Custom(c) => c.name(),
        }
    }

    /// Whether the dual norm and all restricted duals have closed forms.
    pub fn has_closed_form_dual(&self) -> bool {
        matches!(self.kind, Kind::Lp(_) | Kind::WeightedLp(..))
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(())
    }

    fn check_in(&self, x: &[f64], k: SubsetMask) -> Result<()> {
        self.check(x)?;
        if k.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: k.dim() });
        }
        if !support_unchecked(x, 0.0).is_subset_of(k) {
            return Err(Error::SupportNotContained { subset: k });
        }
        Ok(())
    }

    /// `‖x‖`.
    pub fn norm_eval(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        Ok(self.eval(x))
    }

    /// `‖y‖_⋆`.
    pub fn dual_norm_eval(&self, y: &[f64]) -> Result<f64> {
        self.check(y)?;
        Ok(self.dual_eval(y))
    }

    pub(crate) fn eval(&self, x: &[f64]) -> f64 {
        match &self.kind {
            Kind::Lp(p) => lp_norm(x, *p),
            Kind::WeightedLp(p, w) => {
                let wx: Vec<f64> = x.iter().zip(w).map(|(a, b)| a * b).collect();
                lp_norm(&wx, *p)
            }
            Kind::Table(c, rows) => table_norm(rows, *c, x),
            Kind::Custom(n) => n.eval(x),
        }
    }

    /// A subgradient of `‖·‖` at `x`.
    pub(crate) fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            Kind::Lp(p) => lp_grad(x, *p),
            Kind::WeightedLp(p, w) => {
                let wx: Vec<f64> = x.iter().zip(w).map(|(a, b)| a * b).collect();
                lp_grad(&wx, *p).iter().zip(w).map(|(g, b)| g * b).collect()
            }
            Kind::Table(c, rows) => table_grad(rows, *c, x),
            Kind::Custom(n) => n.subgradient(x).unwrap_or_else(|| numeric_grad(&|v| n.eval(v), x)),
        }
    }

    pub(crate) fn value_grad(&self, x: &[f64]) -> ValueGrad {
        (self.eval(x), self.subgradient(x))
    }

    pub(crate) fn dual_eval(&self, y: &[f64]) -> f64 {
        match &self.kind {
            Kind::Lp(p) => lp_norm(y, p.conjugate()),
            Kind::WeightedLp(p, w) => {
                let yw: Vec<f64> = y.iter().zip(w).map(|(a, b)| a / b).collect();
                lp_norm(&yw, p.conjugate())
            }
            Kind::Custom(n) => match n.dual(y) {
                Some(v) => v,
                None => self.engine_dual(y, SubsetMask::full(self.dim)).0,
            },
            Kind::Table(..) => self.engine_dual(y, SubsetMask::full(self.dim)).0,
        }
    }

    /// `‖y‖_⋆` with a subgradient, which is a maximizer of `<x, y>` over the unit ball.
    pub(crate) fn dual_value_grad(&self, y: &[f64]) -> ValueGrad {
        match &self.kind {
            Kind::Lp(p) => (lp_norm(y, p.conjugate()), lp_grad(y, p.conjugate())),
            Kind::WeightedLp(p, w) => {
                let yw: Vec<f64> = y.iter().zip(w).map(|(a, b)| a / b).collect();
                let g = lp_grad(&yw, p.conjugate());
                (lp_norm(&yw, p.conjugate()), g.iter().zip(w).map(|(a, b)| a / b).collect())
            }
            _ => self.engine_dual(y, SubsetMask::full(self.dim)),
        }
    }

    /// `sup { <x, y> : x ∈ FlatR_K, ‖x‖ <= 1 }` through the numeric engine,
    /// with the maximizer. Memoized per `(K, y)`.
    pub(crate) fn engine_dual(&self, y: &[f64], k: SubsetMask) -> ValueGrad {
        let key = (k.bits(), y.iter().map(|v| v.to_bits()).collect::<Vec<u64>>());
        if let Some(hit) = self.cache.get(&key) {
            return hit.clone();
        }
        let s = support_sup(k, y, &|x| self.value_grad(x));
        let out = (s.value, s.argmax);
        if self.cache.len() < 200_000 {
            self.cache.insert(key, out.clone());
        }
        out
    }

    /// `‖x‖_K`: the source norm restricted to `FlatR_K`.
    pub fn restriction_norm(&self, x: &[f64], k: SubsetMask) -> Result<f64> {
        self.check_in(x, k)?;
        Ok(self.eval(x))
    }

    /// `‖y‖_{K,⋆}`: dual of the restriction to `FlatR_K`.
    pub fn set_star_norm(&self, y: &[f64], k: SubsetMask) -> Result<f64> {
        self.check_in(y, k)?;
        Ok(self.set_star_value_grad(y, k).0)
    }

    pub(crate) fn set_star_value_grad(&self, y: &[f64], k: SubsetMask) -> ValueGrad {
        match &self.kind {
            // coordinate-separable: restricting then dualizing keeps the form
            Kind::Lp(_) | Kind::WeightedLp(..) => {
                let (v, g) = self.dual_value_grad(y);
                (v, mask(&g, k))
            }
            _ => self.engine_dual(y, k),
        }
    }

    /// `‖y‖_{⋆,K}`: the dual norm restricted to `FlatR_K`.
    pub fn star_set_norm(&self, y: &[f64], k: SubsetMask) -> Result<f64> {
        self.check_in(y, k)?;
        Ok(self.dual_eval(y))
    }

    /// The dual norm as a norm, when it has a closed form.
    pub fn dual_spec(&self) -> Option<NormSpec> {
        let config = match &self.kind {
            Kind::Lp(p) => NormConfig::Lp { p: p.conjugate() },
            Kind::WeightedLp(p, w) => NormConfig::WeightedLp { p: p.conjugate(), weights: w.iter().map(|v| 1.0 / v).collect() },
            _ => return None,
        };
        NormSpec::from_config(&config, self.dim).ok()
    }
}

pub(crate) fn mask(v: &[f64], k: SubsetMask) -> Vec<f64> {
    v.iter().enumerate().map(|(i, &a)| if k.contains(i) { a } else { 0.0 }).collect()
}

fn lp_flags(p: Exponent, dim: usize) -> DeclaredFlags {
    let yes_if = |b: bool| if b || dim == 1 { Flag::Yes } else { Flag::No };
    DeclaredFlags {
        orthant_monotonic: Flag::Yes,
        orthant_strictly_monotonic: yes_if(!p.is_inf()),
        dual_orthant_strictly_monotonic: yes_if(p.0 > 1.0),
    }
}

pub(crate) fn lp_norm(x: &[f64], p: Exponent) -> f64 {
    let m = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if p.is_inf() || m == 0.0 {
        return m;
    }
    let p = p.0;
    if p == 1.0 {
        return x.iter().map(|v| v.abs()).sum();
    }
    if p == 2.0 {
        return m * x.iter().map(|v| (v / m) * (v / m)).sum::<f64>().sqrt();
    }
    m * x.iter().map(|v| (v.abs() / m).powf(p)).sum::<f64>().powf(1.0 / p)
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub(crate) fn lp_grad(x: &[f64], p: Exponent) -> Vec<f64> {
    let n = lp_norm(x, p);
    if n == 0.0 {
        return vec![0.0; x.len()];
    }
    if p.is_inf() {
        let (imax, _) = x.iter().enumerate().fold((0, -1.0), |(bi, bv), (i, v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) });
        let mut g = vec![0.0; x.len()];
        g[imax] = sign(x[imax]);
        return g;
    }
    let p = p.0;
    if p == 1.0 {
        return x.iter().map(|&v| sign(v)).collect();
    }
    x.iter().map(|&v| sign(v) * (v.abs() / n).powf(p - 1.0)).collect()
}

fn table_norm(rows: &[Vec<f64>], c: Combine, x: &[f64]) -> f64 {
    let it = rows.iter().map(|r| dot(r, x).abs());
    match c {
        Combine::Sum => it.sum(),
        Combine::Max => it.fold(0.0, f64::max),
    }
}

fn table_grad(rows: &[Vec<f64>], c: Combine, x: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    match c {
        Combine::Sum => {
            for r in rows {
                let s = sign(dot(r, x));
                for (gi, ri) in g.iter_mut().zip(r) {
                    *gi += s * ri;
                }
            }
        }
        Combine::Max => {
            let mut best = (0usize, -1.0);
            for (i, r) in rows.iter().enumerate() {
                let v = dot(r, x).abs();
                if v > best.1 {
                    best = (i, v);
                }
            }
            if best.1 > 0.0 {
                let r = &rows[best.0];
                let s = sign(dot(r, x));
                for (gi, ri) in g.iter_mut().zip(r) {
                    *gi = s * ri;
                }
            }
        }
    }
    g
}

pub(crate) fn numeric_grad(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let h = 1e-7 * x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let a = f(&p);
            p[i] = x[i] - h;
            let b = f(&p);
            p[i] = x[i];
            (a - b) / (2.0 * h)
        })
        .collect()
}

fn rank(rows: &[Vec<f64>]) -> usize {
    let mut m: Vec<Vec<f64>> = rows.to_vec();
    let cols = m[0].len();
    let scale = m.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    let mut r = 0;
    for c in 0..cols {
        let Some(piv) = (r..m.len()).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())) else {
            break;
        };
        if m[piv][c].abs() <= 1e-12 * scale {
            continue;
        }
        m.swap(r, piv);
        for i in 0..m.len() {
            if i != r {
                let f = m[i][c] / m[r][c];
                for j in 0..cols {
                    m[i][j] -= f * m[r][j];
                }
            }
        }
        r += 1;
    }
    r
}

/// Counterexample to a monotonicity property.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonotonicityWitness {
    pub test: String,
    /// The dominated point (or the alignment probe `u`).
    pub x: Vec<f64>,
    /// The dominating point, when the test compares two points.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_prime: Option<Vec<f64>>,
    pub norm_x: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm_x_prime: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum Verdict {
    TrueAnalytic,
    TrueSampled { trials: usize },
    False { witness: MonotonicityWitness },
}

impl Verdict {
    pub fn holds(&self) -> bool {
        !matches!(self, Verdict::False { .. })
    }
}

fn random_signed(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            if rng.random_bool(0.2) {
                0.0
            } else {
                z
            }
        })
        .collect()
}

// factors in [0, 1], often exactly 0 or 1 so that faces get probed
fn random_shrink(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d)
        .map(|_| match rng.random_range(0..3) {
            0 => 0.0,
            1 => 1.0,
            _ => rng.random::<f64>(),
        })
        .collect()
}

/// Checks `|x| <= |x'|` in one orthant ⇒ `‖x‖ <= ‖x'‖`, plus growth with
/// coordinate subspaces.
pub fn check_orthant_monotonic(n: &NormSpec, trials: usize, seed: u64) -> Verdict {
    if n.has_closed_form_dual() {
        return Verdict::TrueAnalytic;
    }
    sampled_monotonicity(&|x| n.eval(x), n.dim, trials, seed, false)
}

/// Checks strict orthant monotonicity: `|x| <= |x'|`, `x != x'` in one
/// orthant ⇒ `‖x‖ < ‖x'‖`, plus the dual-alignment test.
pub fn check_orthant_strictly_monotonic(n: &NormSpec, trials: usize, seed: u64) -> Verdict {
    match &n.kind {
        Kind::Lp(p) | Kind::WeightedLp(p, _) => {
            if !p.is_inf() || n.dim == 1 {
                return Verdict::TrueAnalytic;
            }
            let mut x = vec![0.0; n.dim];
            x[0] = 1.0;
            let mut xp = x.clone();
            if let Kind::WeightedLp(_, w) = &n.kind {
                // keep the dominating point's max on the first coordinate
                x[0] = 1.0 / w[0];
                xp[0] = x[0];
                xp[1] = 0.5 / w[1];
            } else {
                xp[1] = 1.0;
            }
            return Verdict::False {
                witness: MonotonicityWitness {
                    test: "strict-domination".into(),
                    norm_x: n.eval(&x),
                    norm_x_prime: Some(n.eval(&xp)),
                    x,
                    x_prime: Some(xp),
                },
            };
        }
        _ => {}
    }
    let v = sampled_monotonicity(&|x| n.eval(x), n.dim, trials, seed, true);
    if !v.holds() {
        return v;
    }
    alignment_test(n, trials, seed ^ 0x5eed)
}

/// Strict orthant monotonicity of the dual norm.
pub fn check_dual_orthant_strictly_monotonic(n: &NormSpec, trials: usize, seed: u64) -> Verdict {
    if let Some(dual) = n.dual_spec() {
        return check_orthant_strictly_monotonic(&dual, trials, seed);
    }
    sampled_monotonicity(&|y| n.dual_eval(y), n.dim, trials, seed, true)
}

fn sampled_monotonicity(f: &dyn Fn(&[f64]) -> f64, d: usize, trials: usize, seed: u64, strict: bool) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let xp = random_signed(&mut rng, d);
        let t = random_shrink(&mut rng, d);
        let x: Vec<f64> = xp.iter().zip(&t).map(|(a, b)| a * b).collect();
        let (nx, nxp) = (f(&x), f(&xp));
        let tol = 1e-12 * nxp.max(1.0);
        let bad = if strict { x != xp && nx >= nxp - tol } else { nx > nxp + tol };
        if bad {
            return Verdict::False {
                witness: MonotonicityWitness {
                    test: if strict { "strict-domination" } else { "domination" }.into(),
                    x,
                    x_prime: Some(xp),
                    norm_x: nx,
                    norm_x_prime: Some(nxp),
                },
            };
        }
    }
    Verdict::TrueSampled { trials }
}

// For u != 0, look for v with supp(v) = supp(u), u∘v >= 0, <u,v> = ‖u‖‖v‖_⋆.
fn alignment_test(n: &NormSpec, trials: usize, seed: u64) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = n.dim;
    for _ in 0..trials.min(2000) {
        let u = random_signed(&mut rng, d);
        if u.iter().all(|v| *v == 0.0) {
            continue;
        }
        let aligned = match &n.kind {
            Kind::Table(c, rows) => table_alignment(rows, *c, &u),
            _ => {
                let v = n.subgradient(&u);
                aligned_pair(n, &u, &v)
            }
        };
        if !aligned {
            return Verdict::False {
                witness: MonotonicityWitness { test: "dual-alignment".into(), norm_x: n.eval(&u), x: u, x_prime: None, norm_x_prime: None },
            };
        }
    }
    Verdict::TrueSampled { trials }
}

fn aligned_pair(n: &NormSpec, u: &[f64], v: &[f64]) -> bool {
    let su = support_unchecked(u, 0.0);
    let tol = 1e-9 * v.iter().fold(0.0f64, |m, a| m.max(a.abs())).max(1e-300);
    if support_unchecked(v, tol) != su || u.iter().zip(v).any(|(a, b)| a * b < 0.0) {
        return false;
    }
    let lhs = dot(u, v);
    let rhs = n.eval(u) * n.dual_eval(v);
    (lhs - rhs).abs() <= 1e-6 * rhs.abs().max(1.0)
}

// The subdifferential of a table norm is polyhedral, so the search for an
// aligned subgradient is a linear program: maximize t with u_i v_i >= t on
// supp(u) and v_i = 0 off it.
fn table_alignment(rows: &[Vec<f64>], c: Combine, u: &[f64]) -> bool {
    let d = u.len();
    let su = support_unchecked(u, 0.0);
    let vals: Vec<f64> = rows.iter().map(|r| dot(r, u)).collect();
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    // v = base + Σ_j s_j dir_j with s in a box (sum) or a simplex (max)
    let mut base = vec![0.0; d];
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    match c {
        Combine::Sum => {
            for (r, &v) in rows.iter().zip(&vals) {
                if v.abs() > 1e-12 * scale {
                    for (b, a) in base.iter_mut().zip(r) {
                        *b += sign(v) * a;
                    }
                } else {
                    // s in [-1, 1] written as -r + 2 s' r, s' in [0, 1]
                    for (b, a) in base.iter_mut().zip(r) {
                        *b -= a;
                    }
                    dirs.push(r.iter().map(|a| 2.0 * a).collect());
                }
            }
        }
        Combine::Max => {
            for (r, &v) in rows.iter().zip(&vals) {
                if v.abs() >= scale * (1.0 - 1e-12) {
                    dirs.push(r.iter().map(|a| sign(v) * a).collect());
                }
            }
        }
    }
    let k = dirs.len();
    if k == 0 {
        return aligned_vec(&base, u, su);
    }
    // variables: s (k), slack per box bound (k, sum only), t+ , t-, slack per support row
    let sup_idx: Vec<usize> = su.indices().collect();
    let box_slacks = if c == Combine::Sum { k } else { 0 };
    let nv = k + box_slacks + 2 + sup_idx.len();
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..d {
        let mut row = vec![0.0; nv];
        for j in 0..k {
            row[j] = u[i] * dirs[j][i];
        }
        if su.contains(i) {
            // u_i v_i - t - slack = 0
            let pos = sup_idx.iter().position(|&q| q == i).unwrap();
            row[k + box_slacks] = -1.0;
            row[k + box_slacks + 1] = 1.0;
            row[k + box_slacks + 2 + pos] = -1.0;
            b.push(-u[i] * base[i]);
        } else {
            for j in 0..k {
                row[j] = dirs[j][i];
            }
            b.push(-base[i]);
        }
        a.push(row);
    }
    if c == Combine::Sum {
        for j in 0..k {
            let mut row = vec![0.0; nv];
            row[j] = 1.0;
            row[k + j] = 1.0;
            a.push(row);
            b.push(1.0);
        }
    } else {
        let mut row = vec![0.0; nv];
        for v in row.iter_mut().take(k) {
            *v = 1.0;
        }
        a.push(row);
        b.push(1.0);
    }
    // cap t so the program stays bounded
    let mut row = vec![0.0; nv];
    row[k + box_slacks] = 1.0;
    row[k + box_slacks + 1] = -1.0;
    let mut capped = row;
    capped.push(1.0);
    for r in a.iter_mut() {
        r.push(0.0);
    }
    a.push(capped);
    b.push(1e6);
    let mut cost = vec![0.0; nv + 1];
    cost[k + box_slacks] = -1.0;
    cost[k + box_slacks + 1] = 1.0;
    match simplex(&a, &b, &cost) {
        Some((_, val)) => -val > 1e-10 * scale * scale,
        None => false,
    }
}

fn aligned_vec(v: &[f64], u: &[f64], su: SubsetMask) -> bool {
    let tol = 1e-12 * v.iter().fold(0.0f64, |m, a| m.max(a.abs())).max(1e-300);
    (0..u.len()).all(|i| if su.contains(i) { u[i] * v[i] > 0.0 } else { v[i].abs() <= tol })
}
