//! Brute-force reference values used to validate the closed forms.
//!
//! Every oracle errs on a known side: suprema are estimated from below and
//! minima from above, so a disagreement with an analytic value is conclusive.
//! Sample streams are seeded and the first `n` samples do not depend on the
//! total count, so raising `samples` never worsens an estimate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::capra::CapraContext;
use crate::decomp::BUDGET_SLACK;
use crate::error::{Error, Result};
use crate::par::{map_indexed, Execution};
use crate::setfn::SetFunction;
use crate::subsets::{check_dim, dot, ExtReal, SubsetMask};

/// Largest number of grid points visited by one oracle call.
pub const GRID_CAP: usize = 4_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleBudget {
    pub samples: usize,
    pub grid_resolution: f64,
    pub box_radius: f64,
    pub seed: u64,
}

impl Default for OracleBudget {
    fn default() -> Self {
        OracleBudget { samples: 100_000, grid_resolution: 1e-2, box_radius: 10.0, seed: 0 }
    }
}

impl OracleBudget {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 || !(self.grid_resolution > 0.0) || !(self.box_radius > 0.0) {
            return Err(Error::Precondition("oracle budget needs samples >= 1, resolution > 0 and radius > 0".into()));
        }
        Ok(())
    }

    /// Per-side point count `n` and step `h`: the grid is `{i h : |i| <= n}^d`,
    /// coarsened until it has at most [`GRID_CAP`] points.
    fn grid(&self, d: usize) -> (usize, f64) {
        let mut n = (self.box_radius / self.grid_resolution).ceil().max(1.0) as usize;
        let cap = (GRID_CAP as f64).powf(1.0 / d as f64);
        if (2 * n + 1) as f64 > cap {
            n = (((cap - 1.0) / 2.0).floor() as usize).max(1);
        }
        (n, self.box_radius / n as f64)
    }
}

/// Max of `score` over the grid, with the first coordinate spread over threads.
fn grid_max(d: usize, n: usize, h: f64, score: &(dyn Fn(&[f64]) -> f64 + Sync)) -> f64 {
    let side = 2 * n + 1;
    let coord = |i: usize| (i as f64 - n as f64) * h;
    let rows = map_indexed(Execution::Parallel, side, |i0| {
        let mut x = vec![0.0; d];
        x[0] = coord(i0);
        let mut idx = vec![0usize; d];
        let mut best = f64::NEG_INFINITY;
        loop {
            for j in 1..d {
                x[j] = coord(idx[j]);
            }
            best = best.max(score(&x));
            let mut j = 1;
            while j < d {
                idx[j] += 1;
                if idx[j] < side {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
            if j >= d {
                break;
            }
        }
        best
    });
    rows.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

fn box_samples(budget: &OracleBudget, d: usize) -> impl Iterator<Item = Vec<f64>> + '_ {
    let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
    let r = budget.box_radius;
    (0..budget.samples).map(move |_| (0..d).map(|_| rng.random_range(-r..=r)).collect())
}

fn check_vec(y: &[f64]) -> Result<()> {
    check_dim(y.len())?;
    if let Some(i) = y.iter().position(|a| !a.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    Ok(())
}

/// Lower estimate of `σ_S(y) = sup_{x ∈ S} <x, y>` over the box grid and
/// uniform samples in the box.
pub fn sampled_support_function(member: &(dyn Fn(&[f64]) -> bool + Sync), y: &[f64], budget: &OracleBudget) -> Result<f64> {
    check_vec(y)?;
    budget.validate()?;
    let d = y.len();
    let (n, h) = budget.grid(d);
    let score = |x: &[f64]| if member(x) { dot(x, y) } else { f64::NEG_INFINITY };
    let mut best = grid_max(d, n, h, &score);
    for x in box_samples(budget, d) {
        best = best.max(score(&x));
    }
    if best == f64::NEG_INFINITY {
        return Err(Error::EmptySample);
    }
    Ok(best)
}

fn conjugate_term(x: &[f64], y: &[f64], fx: ExtReal) -> f64 {
    ExtReal::Finite(dot(x, y)).lower_add(-fx).to_f64()
}

/// Lower estimate of the Fenchel conjugate `sup_x <x, y> ⊥+ (-f(x))` over
/// the box grid and uniform samples in the box.
pub fn grid_fenchel_conjugate(f: &(dyn Fn(&[f64]) -> ExtReal + Sync), y: &[f64], budget: &OracleBudget) -> Result<f64> {
    check_vec(y)?;
    budget.validate()?;
    let d = y.len();
    let (n, h) = budget.grid(d);
    let score = |x: &[f64]| conjugate_term(x, y, f(x));
    let mut best = grid_max(d, n, h, &score);
    for x in box_samples(budget, d) {
        best = best.max(score(&x));
    }
    Ok(best)
}

/// Lower estimate of the Capra conjugate `sup_x ¢(x, y) ⊥+ (-f(x))`.
///
/// The coupling is constant along rays, so `x` ranges over `0` and random
/// unit-sphere points, spread evenly over the support faces.
pub fn direct_capra_conjugate(ctx: &CapraContext, f: &(dyn Fn(&[f64]) -> ExtReal + Sync), y: &[f64], budget: &OracleBudget) -> Result<f64> {
    ctx.check(y)?;
    budget.validate()?;
    let d = ctx.dim();
    let zero = vec![0.0; d];
    let faces = (1usize << d) - 1;
    let per_face = (budget.samples / faces).max(1);
    let vals = map_indexed(Execution::Parallel, faces, |a| {
        let k = SubsetMask::new(d, a as u32 + 1).expect("face within dimension");
        let mut rng = ChaCha8Rng::seed_from_u64(budget.seed ^ (a as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let mut best = f64::NEG_INFINITY;
        let mut x = vec![0.0; d];
        for _ in 0..per_face {
            for i in 0..d {
                x[i] = if k.contains(i) { rng.sample::<f64, _>(StandardNormal) } else { 0.0 };
            }
            let nx = ctx.norm(&x);
            if !(nx > 0.0) || x.iter().enumerate().any(|(i, v)| k.contains(i) && *v == 0.0) {
                continue;
            }
            x.iter_mut().for_each(|v| *v /= nx);
            best = best.max(conjugate_term(&x, y, f(&x)));
        }
        best
    });
    let at_zero = conjugate_term(&zero, y, f(&zero));
    Ok(vals.into_iter().fold(at_zero, f64::max))
}

/// Upper estimate of `(1/‖x‖) min Σ_K F(K)‖z_K‖_⟨K⟩,sd` over decompositions
/// with `Σ_K ‖z_K‖_⟨K⟩,sd <= ‖x‖`, by exhaustive search for `d <= 3`.
///
/// The full block is eliminated through `z_V = x - Σ_{K≠V} z_K`; every other
/// block coordinate runs over the box grid together with `0` and `x_i`,
/// and a second pass refines ten times finer around the incumbent.
pub fn grid_decomposition_min(ctx: &CapraContext, f: &SetFunction, x: &[f64], budget: &OracleBudget) -> Result<f64> {
    ctx.check(x)?;
    ctx.check_fn(f)?;
    budget.validate()?;
    let d = ctx.dim();
    if d > 3 {
        return Err(Error::Precondition("the grid decomposition oracle supports d <= 3".into()));
    }
    if x.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    if !f.flags().finite_valued {
        return Err(Error::Precondition("set function must be finite-valued".into()));
    }
    let nx = ctx.norm(x);
    let full = SubsetMask::full(d);
    let blocks: Vec<SubsetMask> = f.subsets().skip(1).filter(|k| !k.is_full()).collect();
    let vars: Vec<(usize, usize)> = blocks.iter().enumerate().flat_map(|(b, k)| k.indices().map(move |i| (b, i))).collect();
    let fam = ctx.family();
    let eval = |vals: &[f64]| -> f64 {
        let mut zs = vec![vec![0.0; d]; blocks.len()];
        let mut rest = x.to_vec();
        for (&(b, i), v) in vars.iter().zip(vals) {
            zs[b][i] = *v;
            rest[i] -= v;
        }
        let mut used = fam.ksd(&rest, full).0;
        let mut obj = f.finite(full) * used;
        for (k, z) in blocks.iter().zip(&zs) {
            let n = fam.ksd(z, *k).0;
            used += n;
            obj += f.finite(*k) * n;
        }
        if used <= nx + BUDGET_SLACK * nx.max(1.0) {
            obj / nx
        } else {
            f64::INFINITY
        }
    };
    if vars.is_empty() {
        return Ok(eval(&[]));
    }
    let nv = vars.len();
    let per_axis = ((GRID_CAP as f64).powf(1.0 / nv as f64).floor() as usize).max(5);
    let n = budget.grid(1).0.min((per_axis - 3) / 2).max(1);
    let h = budget.box_radius / n as f64;
    let axes: Vec<Vec<f64>> = vars
        .iter()
        .map(|&(_, i)| {
            let mut a: Vec<f64> = (0..=2 * n).map(|j| (j as f64 - n as f64) * h).collect();
            a.push(x[i]);
            a.push(0.0);
            a.sort_by(f64::total_cmp);
            a.dedup();
            a
        })
        .collect();
    let (best, arg) = search(&axes, &eval);
    if !best.is_finite() {
        return Ok(best);
    }
    // ten times finer around the incumbent
    let fine = ((per_axis.min(21) - 1) / 2) as i64;
    let axes: Vec<Vec<f64>> = arg.iter().map(|c| (-fine..=fine).map(|j| c + j as f64 * h / 10.0).collect()).collect();
    let (refined, _) = search(&axes, &eval);
    Ok(best.min(refined))
}

fn search(axes: &[Vec<f64>], eval: &(dyn Fn(&[f64]) -> f64 + Sync)) -> (f64, Vec<f64>) {
    let nv = axes.len();
    let rows = map_indexed(Execution::Parallel, axes[0].len(), |i0| {
        let mut idx = vec![0usize; nv];
        idx[0] = i0;
        let mut vals: Vec<f64> = idx.iter().zip(axes).map(|(i, a)| a[*i]).collect();
        let mut best = (f64::INFINITY, vals.clone());
        loop {
            for j in 1..nv {
                vals[j] = axes[j][idx[j]];
            }
            let v = eval(&vals);
            if v < best.0 {
                best = (v, vals.clone());
            }
            let mut j = 1;
            while j < nv {
                idx[j] += 1;
                if idx[j] < axes[j].len() {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
            if j >= nv {
                break;
            }
        }
        best
    });
    rows.into_iter().fold((f64::INFINITY, Vec::new()), |a, b| if b.0 < a.0 { b } else { a })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::NormSpec;
    use crate::subsets::euclid;

    #[test]
    fn support_function_of_the_disc() {
        let b = OracleBudget::default();
        let v = sampled_support_function(&|x: &[f64]| euclid(x) <= 1.0, &[3.0, 4.0], &b).unwrap();
        assert!(v <= 5.0 && v >= 5.0 - 0.05, "{v}");
        assert_eq!(sampled_support_function(&|x: &[f64]| euclid(x) <= 1.0, &[0.0, 0.0], &b).unwrap(), 0.0);
        let origin = |x: &[f64]| x.iter().all(|v| *v == 0.0);
        assert_eq!(sampled_support_function(&origin, &[1.0, 2.0], &b).unwrap(), 0.0);
    }

    #[test]
    fn fenchel_grid_examples() {
        let b = OracleBudget { samples: 100, ..OracleBudget::default() };
        let delta0 = |x: &[f64]| if x.iter().all(|v| *v == 0.0) { ExtReal::ZERO } else { ExtReal::PosInf };
        assert_eq!(grid_fenchel_conjugate(&delta0, &[3.0, -1.0], &b).unwrap(), 0.0);
        let l2 = |x: &[f64]| ExtReal::Finite(euclid(x));
        assert!(grid_fenchel_conjugate(&l2, &[0.6, 0.8], &b).unwrap().abs() < 1e-12);
    }

    #[test]
    fn decomposition_grid_examples() {
        let ctx = CapraContext::new(NormSpec::lp(2.0, 2).unwrap());
        let card = SetFunction::cardinality(2).unwrap();
        let b = OracleBudget::default();
        assert!((grid_decomposition_min(&ctx, &card, &[0.0, 2.0], &b).unwrap() - 1.0).abs() < 1e-12);
        assert!((grid_decomposition_min(&ctx, &card, &[1.0, 1.0], &b).unwrap() - 2.0).abs() < 1e-9);
        assert_eq!(grid_decomposition_min(&ctx, &card, &[0.0, 0.0], &b).unwrap(), 0.0);
    }
}
