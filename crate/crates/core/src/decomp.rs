//! Block decompositions `x = Σ_K z_K`, `z_K ∈ FlatR_K`, minimizing
//! `Σ_K w_K N_K(z_K)` under an optional budget `Σ_K N_K(z_K) <= b`, where
//! `N_K` is a coordinate norm or a support dual norm.
//!
//! The solver brackets the minimum:
//! * upper bound: the best exactly representing, budget-feasible
//!   decomposition among the canonical one, an atom program rebuilt from the
//!   dual solution, and exact-penalty projected subgradient restarts;
//! * lower bound: the concave dual
//!   `D(y) = <x, y> - b max(0, max_K (ρ_K(y) - w_K))`, maximized with the
//!   ellipsoid method (`ρ_K` is the dual of `N_K` on `FlatR_K`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::engine::{default_iterations, minimize, Program};
use crate::error::{Error, Result};
use crate::localnorms::{BlockNorm, LocalNormFamily};
use crate::lp::simplex;
use crate::norms::mask;
use crate::subsets::{dot, euclid, support_unchecked, SubsetMask};

/// Relative slack allowed on the budget constraint.
pub const BUDGET_SLACK: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct SolverOptions {
    pub restarts: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Run the ellipsoid dual (lower bound and atom recovery).
    pub dual: bool,
    /// Extra dual points whose dual values are lower bounds.
    pub dual_candidates: Vec<Vec<f64>>,
    /// Skip the subgradient restarts once the upper and lower bounds agree
    /// to `1e-9` relative.
    pub early_stop: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { restarts: 10, iterations: 200, seed: 0, dual: true, dual_candidates: Vec::new(), early_stop: true }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Block {
    pub subset: SubsetMask,
    pub z: Vec<f64>,
    pub norm: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Decomposition {
    pub blocks: Vec<Block>,
    pub objective: f64,
    pub budget_used: f64,
    /// `max_i |Σ_K z_K - x|_i`.
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolverTrace {
    /// Which start produced the reported decomposition.
    pub best_start: String,
    pub restarts: usize,
    pub subgradient_iterations: usize,
    pub dual_iterations: usize,
    /// Best feasible objective reached from each subgradient start.
    pub restart_values: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecompositionResult {
    /// Best feasible objective (an upper bound on the minimum).
    pub value: f64,
    /// Dual lower bound on the minimum.
    pub lower: f64,
    pub gap: f64,
    pub primal: Decomposition,
    /// Best dual point.
    pub dual: Vec<f64>,
    pub trace: SolverTrace,
}

pub struct DecompositionProblem<'a> {
    pub family: &'a LocalNormFamily,
    pub block: BlockNorm,
    /// Nonempty subsets with their finite weights.
    pub weights: Vec<(SubsetMask, f64)>,
    pub x: Vec<f64>,
    pub budget: Option<f64>,
}

impl DecompositionProblem<'_> {
    fn d(&self) -> usize {
        self.x.len()
    }

    fn norm(&self, z: &[f64], k: SubsetMask) -> (f64, Vec<f64>) {
        self.family.block(self.block, z, k)
    }

    fn feasible_budget(&self, used: f64) -> bool {
        match self.budget {
            Some(b) => used <= b + BUDGET_SLACK * b.abs().max(1.0),
            None => true,
        }
    }

    // the budget the primal side may use, so dual values bound every
    // decomposition the solver accepts
    fn dual_budget(&self) -> Option<f64> {
        self.budget.map(|b| b + BUDGET_SLACK * b.abs().max(1.0))
    }

    fn full_index(&self) -> Option<usize> {
        self.weights.iter().position(|(k, _)| k.is_full())
    }

    /// Evaluates blocks given per-weight-index vectors.
    fn assemble(&self, zs: &[Vec<f64>]) -> Decomposition {
        let d = self.d();
        let mut sum = vec![0.0; d];
        let mut blocks = Vec::new();
        let (mut obj, mut used) = (0.0, 0.0);
        for ((k, w), z) in self.weights.iter().zip(zs) {
            if z.iter().all(|v| *v == 0.0) {
                continue;
            }
            let n = self.norm(z, *k).0;
            obj += w * n;
            used += n;
            for i in 0..d {
                sum[i] += z[i];
            }
            blocks.push(Block { subset: *k, z: z.clone(), norm: n });
        }
        let residual = sum.iter().zip(&self.x).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        Decomposition { blocks, objective: obj, budget_used: used, residual }
    }

    // ρ_K(y) - w_K maximized over blocks, with the maximizing index
    fn dual_excess(&self, y: &[f64]) -> (f64, usize, Vec<f64>) {
        let mut best = (f64::NEG_INFINITY, 0, Vec::new());
        for (a, (k, w)) in self.weights.iter().enumerate() {
            let (r, g) = self.family.block_dual(self.block, y, *k);
            if r - w > best.0 {
                best = (r - w, a, g);
            }
        }
        best
    }

    /// Dual value `D(y)`, or `None` when `y` is infeasible for an unbudgeted problem.
    pub fn dual_value(&self, y: &[f64]) -> Option<f64> {
        let (ex, _, _) = self.dual_excess(y);
        match self.dual_budget() {
            Some(b) => Some(dot(&self.x, y) - b * ex.max(0.0)),
            None => {
                if self.weights.is_empty() || ex <= 0.0 {
                    Some(dot(&self.x, y))
                } else {
                    None
                }
            }
        }
    }
}

pub fn solve(p: &DecompositionProblem<'_>, opts: &SolverOptions) -> Result<DecompositionResult> {
    let d = p.d();
    if p.family.dim() != d {
        return Err(Error::DimensionMismatch { expected: p.family.dim(), got: d });
    }
    if p.weights.iter().any(|(k, w)| k.is_empty() || !w.is_finite()) {
        return Err(Error::Precondition("decomposition weights must be finite and on nonempty subsets".into()));
    }
    let mut best: Option<(Decomposition, String)> = None;
    let offer = |dec: Decomposition, label: &str, best: &mut Option<(Decomposition, String)>| {
        let scale = p.x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if dec.residual > 1e-12 * scale || !p.feasible_budget(dec.budget_used) {
            return;
        }
        if best.as_ref().is_none_or(|(b, _)| dec.objective < b.objective) {
            *best = Some((dec, label.to_string()));
        }
    };
    let zero = || vec![vec![0.0; d]; p.weights.len()];

    // canonical decompositions z_K = x for K ⊇ supp(x)
    let sx = support_unchecked(&p.x, 0.0);
    if sx.is_empty() {
        offer(p.assemble(&zero()), "zero", &mut best);
    }
    for (a, (k, _)) in p.weights.iter().enumerate() {
        if sx.is_subset_of(*k) && !sx.is_empty() {
            let mut zs = zero();
            zs[a] = p.x.clone();
            offer(p.assemble(&zs), "canonical", &mut best);
        }
    }

    // dual bound
    let mut lower = f64::NEG_INFINITY;
    let mut ybest = vec![0.0; d];
    let mut dual_iterations = 0;
    for c in &opts.dual_candidates {
        if let Some(v) = p.dual_value(c) {
            if v > lower {
                lower = v;
                ybest = c.clone();
            }
        }
    }
    if opts.dual && !p.weights.is_empty() {
        let (y, v, its) = maximize_dual(p);
        dual_iterations = its;
        if v > lower {
            lower = v;
            ybest = y;
        }
    }
    if p.weights.is_empty() && sx.is_empty() {
        lower = lower.max(0.0);
    }

    // atom program from the dual point
    let mut duals = vec![ybest.clone()];
    duals.extend(opts.dual_candidates.iter().cloned());
    if let Some(zs) = atom_program(p, &duals) {
        offer(p.assemble(&zs), "atoms", &mut best);
    }

    // exact-penalty projected subgradient restarts
    let mut restart_values = Vec::new();
    let mut total_its = 0;
    let closed = best.as_ref().is_some_and(|(b, _)| b.objective - lower <= 1e-9 * (1.0 + lower.abs()));
    if let Some(v_idx) = p.full_index().filter(|_| !(opts.early_stop && closed)) {
        let excess = p.dual_excess(&ybest).0.max(0.0);
        let wmax = p.weights.iter().fold(0.0f64, |m, (_, w)| m.max(w.abs()));
        let penalty = (10.0 * (1.0 + wmax)).max(2.0 * excess + 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut starts: Vec<(String, Vec<Vec<f64>>)> = Vec::new();
        if let Some((dec, _)) = &best {
            starts.push(("warm".into(), to_slots(p, dec)));
        }
        let xs = euclid(&p.x).max(1e-12);
        for r in 0..opts.restarts {
            let mut zs = zero();
            for (a, (k, _)) in p.weights.iter().enumerate() {
                if a != v_idx {
                    let g: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal) * xs / (p.weights.len() as f64).sqrt()).collect();
                    zs[a] = mask(&g, *k);
                }
            }
            starts.push((format!("random-{r}"), zs));
        }
        for (label, start) in starts {
            let (zs, its) = subgradient_descent(p, v_idx, start, penalty, opts.iterations);
            total_its += its;
            match zs {
                Some(zs) => {
                    let dec = p.assemble(&zs);
                    restart_values.push(dec.objective);
                    offer(dec, &label, &mut best);
                }
                None => restart_values.push(f64::INFINITY),
            }
        }
    }

    let Some((primal, label)) = best else {
        return Err(Error::Solver("no feasible decomposition found".into()));
    };
    let value = primal.objective;
    Ok(DecompositionResult {
        value,
        lower,
        gap: value - lower,
        primal,
        dual: ybest,
        trace: SolverTrace {
            best_start: label,
            restarts: restart_values.len(),
            subgradient_iterations: total_its,
            dual_iterations,
            restart_values,
        },
    })
}

fn to_slots(p: &DecompositionProblem<'_>, dec: &Decomposition) -> Vec<Vec<f64>> {
    let mut zs = vec![vec![0.0; p.d()]; p.weights.len()];
    for b in &dec.blocks {
        if let Some(a) = p.weights.iter().position(|(k, _)| *k == b.subset) {
            for i in 0..p.d() {
                zs[a][i] += b.z[i];
            }
        }
    }
    zs
}

// returns (y, D(y), iterations)
fn maximize_dual(p: &DecompositionProblem<'_>) -> (Vec<f64>, f64, usize) {
    let d = p.d();
    let full = SubsetMask::full(d);
    let rho_min = (0..d)
        .map(|i| {
            let mut e = vec![0.0; d];
            e[i] = 1.0;
            p.family.block_dual(p.block, &e, full).0
        })
        .fold(f64::INFINITY, f64::min)
        .max(1e-12);
    let wmax = p.weights.iter().fold(0.0f64, |m, (_, w)| m.max(w.abs()));
    let mut radius = 4.0 * (1.0 + wmax) * (d as f64).sqrt() / rho_min;
    let xs = euclid(&p.x);
    let objective = |y: &[f64]| -> (f64, Vec<f64>) {
        let (ex, _, g) = p.dual_excess(y);
        let b = p.dual_budget().unwrap_or(0.0);
        if ex > 0.0 && p.budget.is_some() {
            (b * ex - dot(&p.x, y), g.iter().zip(&p.x).map(|(gi, xi)| b * gi - xi).collect())
        } else {
            (-dot(&p.x, y), p.x.iter().map(|v| -v).collect())
        }
    };
    let constraint = |y: &[f64]| -> Option<(f64, Vec<f64>)> {
        let (ex, _, g) = p.dual_excess(y);
        if ex > 0.0 {
            Some((ex, g))
        } else {
            None
        }
    };
    let mut best: (Vec<f64>, f64) = (vec![0.0; d], p.dual_value(&vec![0.0; d]).unwrap_or(f64::NEG_INFINITY));
    let mut its = 0;
    for _ in 0..7 {
        let prog = Program {
            dim: d,
            constraint: if p.budget.is_none() { Some(&constraint) } else { None },
            objective: &objective,
        };
        let tol = 1e-12 * (1.0 + wmax) * (1.0 + xs);
        let out = minimize(&prog, &vec![0.0; d], radius, default_iterations(d), tol);
        its += out.iterations;
        if out.feasible {
            if let Some(v) = p.dual_value(&out.x) {
                if v > best.1 {
                    best = (out.x.clone(), v);
                }
            }
        }
        if !out.feasible || euclid(&out.x) < 0.45 * radius {
            break;
        }
        radius *= 8.0;
    }
    (best.0, best.1, its)
}

// Rebuilds a decomposition as a nonnegative combination of block atoms
// u with N_K(u) = 1, solved as a linear program; merging atoms of one block
// can only lower both the objective and the budget.
fn atom_program(p: &DecompositionProblem<'_>, duals: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let d = p.d();
    let mut atoms: Vec<(usize, Vec<f64>)> = Vec::new();
    let push = |a: usize, u: Vec<f64>, atoms: &mut Vec<(usize, Vec<f64>)>| {
        let k = p.weights[a].0;
        let n = p.norm(&u, k).0;
        if n > 1e-300 && n.is_finite() {
            atoms.push((a, u.iter().map(|v| v / n).collect()));
        }
    };
    for (a, (k, _)) in p.weights.iter().enumerate() {
        for y in duals {
            let g = p.family.block_dual(p.block, y, *k).1;
            push(a, mask(&g, *k), &mut atoms);
        }
        let xk = mask(&p.x, *k);
        push(a, xk, &mut atoms);
        for i in k.indices() {
            for s in [1.0, -1.0] {
                let mut e = vec![0.0; d];
                e[i] = s;
                push(a, e, &mut atoms);
            }
        }
    }
    let na = atoms.len();
    let wmax = p.weights.iter().fold(0.0f64, |m, (_, w)| m.max(w.abs()));
    let big = 1e4 * (1.0 + wmax);
    let nv = na + 2 * d + usize::from(p.budget.is_some());
    let mut a_rows = Vec::new();
    let mut rhs = Vec::new();
    for i in 0..d {
        let mut row = vec![0.0; nv];
        for (j, (_, u)) in atoms.iter().enumerate() {
            row[j] = u[i];
        }
        row[na + i] = 1.0;
        row[na + d + i] = -1.0;
        a_rows.push(row);
        rhs.push(p.x[i]);
    }
    if let Some(b) = p.budget {
        if b < 0.0 {
            return None;
        }
        let mut row = vec![0.0; nv];
        for v in row.iter_mut().take(na) {
            *v = 1.0;
        }
        row[nv - 1] = 1.0;
        a_rows.push(row);
        rhs.push(b * (1.0 - 1e-10));
    }
    let mut cost = vec![0.0; nv];
    for (j, (a, _)) in atoms.iter().enumerate() {
        cost[j] = p.weights[*a].1;
    }
    for v in cost.iter_mut().skip(na).take(2 * d) {
        *v = big;
    }
    let (sol, _) = simplex(&a_rows, &rhs, &cost)?;
    let mut zs = vec![vec![0.0; d]; p.weights.len()];
    for (j, (a, u)) in atoms.iter().enumerate() {
        if sol[j] > 0.0 {
            for i in 0..d {
                zs[*a][i] += sol[j] * u[i];
            }
        }
    }
    // exact representation: put the remainder on the smallest block containing it
    let mut sum = vec![0.0; d];
    for z in &zs {
        for i in 0..d {
            sum[i] += z[i];
        }
    }
    let r: Vec<f64> = p.x.iter().zip(&sum).map(|(a, b)| a - b).collect();
    if r.iter().any(|v| *v != 0.0) {
        let sr = support_unchecked(&r, 0.0);
        let host = p.weights.iter().enumerate().filter(|(_, (k, _))| sr.is_subset_of(*k)).min_by_key(|(_, (k, _))| k.len())?.0;
        for i in 0..d {
            zs[host][i] += r[i];
        }
        // the sum is now exact up to rounding; recompute the host to absorb it
        let mut others = vec![0.0; d];
        for (a, z) in zs.iter().enumerate() {
            if a != host {
                for i in 0..d {
                    others[i] += z[i];
                }
            }
        }
        let hk = p.weights[host].0;
        zs[host] = mask(&p.x.iter().zip(&others).map(|(a, b)| a - b).collect::<Vec<_>>(), hk);
    }
    Some(zs)
}

// Minimizes the exact penalty Σ w_K N_K(z_K) + M (Σ N_K(z_K) - b)_+ with the
// full block eliminated through z_V = x - Σ_{K≠V} z_K. Returns the best
// feasible point and the iteration count.
fn subgradient_descent(
    p: &DecompositionProblem<'_>,
    v_idx: usize,
    mut zs: Vec<Vec<f64>>,
    penalty: f64,
    iterations: usize,
) -> (Option<Vec<Vec<f64>>>, usize) {
    let d = p.d();
    let fix_full = |zs: &mut Vec<Vec<f64>>| {
        let mut rest = p.x.clone();
        for (a, z) in zs.iter().enumerate() {
            if a != v_idx {
                for i in 0..d {
                    rest[i] -= z[i];
                }
            }
        }
        zs[v_idx] = rest;
    };
    fix_full(&mut zs);
    let step0 = 0.2 * euclid(&p.x).max(1e-12);
    let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
    let mut its = 0;
    for t in 1..=iterations {
        its = t;
        let evals: Vec<(f64, Vec<f64>)> = p.weights.iter().zip(&zs).map(|((k, _), z)| p.norm(z, *k)).collect();
        let used: f64 = evals.iter().map(|e| e.0).sum();
        let obj: f64 = p.weights.iter().zip(&evals).map(|((_, w), e)| w * e.0).sum();
        if p.feasible_budget(used) && best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, zs.clone()));
        }
        let viol = p.budget.is_some_and(|b| used > b);
        let m = if viol { penalty } else { 0.0 };
        let gv: Vec<f64> = evals[v_idx].1.iter().map(|g| (p.weights[v_idx].1 + m) * g).collect();
        let mut steps: Vec<Vec<f64>> = vec![vec![0.0; d]; zs.len()];
        let mut norm2 = 0.0;
        for (a, (k, w)) in p.weights.iter().enumerate() {
            if a == v_idx {
                continue;
            }
            let s: Vec<f64> = (0..d).map(|i| if k.contains(i) { (w + m) * evals[a].1[i] - gv[i] } else { 0.0 }).collect();
            norm2 += s.iter().map(|v| v * v).sum::<f64>();
            steps[a] = s;
        }
        if norm2 == 0.0 {
            break;
        }
        let alpha = step0 / (t as f64).sqrt() / norm2.sqrt();
        for (a, s) in steps.iter().enumerate() {
            if a != v_idx {
                for i in 0..d {
                    zs[a][i] -= alpha * s[i];
                }
            }
        }
        fix_full(&mut zs);
    }
    (best.map(|b| b.1), its)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::NormSpec;

    fn cardinality_weights(d: usize) -> Vec<(SubsetMask, f64)> {
        (1..1u32 << d).map(|b| (SubsetMask::new(d, b).unwrap(), b.count_ones() as f64)).collect()
    }

    #[test]
    fn latent_group_example() {
        // l2, cardinality, x = (1, 1): the decomposition (1,0) + (0,1) costs 2
        let fam = LocalNormFamily::new(NormSpec::lp(2.0, 2).unwrap());
        let p = DecompositionProblem { family: &fam, block: BlockNorm::SupportDual, weights: cardinality_weights(2), x: vec![1.0, 1.0], budget: None };
        let r = solve(&p, &SolverOptions::default()).unwrap();
        assert!((r.value - 2.0).abs() < 1e-9, "{r:?}");
        assert!(r.gap < 1e-6, "{r:?}");
    }

    #[test]
    fn sphere_point_keeps_canonical_value() {
        let fam = LocalNormFamily::new(NormSpec::lp(2.0, 3).unwrap());
        let x = vec![0.6, 0.0, 0.8];
        let p = DecompositionProblem { family: &fam, block: BlockNorm::SupportDual, weights: cardinality_weights(3), x, budget: Some(1.0) };
        let r = solve(&p, &SolverOptions::default()).unwrap();
        assert!((r.value - 2.0).abs() < 1e-9, "{r:?}");
        assert!(r.gap < 1e-6, "{:?}", (r.value, r.lower));
    }

    #[test]
    fn sup_norm_has_cheaper_decompositions() {
        let fam = LocalNormFamily::new(NormSpec::lp(f64::INFINITY, 2).unwrap());
        let p = DecompositionProblem { family: &fam, block: BlockNorm::Coordinate, weights: cardinality_weights(2), x: vec![1.0, 0.5], budget: Some(1.0) };
        let r = solve(&p, &SolverOptions::default()).unwrap();
        assert!((r.value - 1.5).abs() < 1e-9, "{r:?}");
        assert!(r.gap < 1e-6);
    }
}
