//! Ellipsoid method for small convex programs, and the support-function
//! maximization built on it.
//!
//! Every numeric dualization in the crate goes through [`support_sup`]:
//! `sup { <x, y> : y ∈ FlatR_K, g(y) <= 1 }` for a convex gauge `g`.

use crate::subsets::{dot, euclid, SubsetMask};

/// Value and one subgradient of a convex function.
pub type ValueGrad = (f64, Vec<f64>);

pub(crate) struct Program<'a> {
    pub dim: usize,
    /// `Some((h, g))` when the point violates the constraints by `h > 0`,
    /// with `g` a subgradient of the violated constraint.
    pub constraint: Option<&'a dyn Fn(&[f64]) -> Option<ValueGrad>>,
    pub objective: &'a dyn Fn(&[f64]) -> ValueGrad,
}

#[derive(Clone, Debug)]
pub(crate) struct Outcome {
    pub x: Vec<f64>,
    pub value: f64,
    /// Lower bound on the minimum, valid when a minimizer lies in the
    /// starting ball.
    pub lower: f64,
    pub feasible: bool,
    pub iterations: usize,
}

/// Minimizes over the ball of `radius` around `center`, stopping once the
/// certified gap drops below `tol`.
pub(crate) fn minimize(p: &Program<'_>, center: &[f64], radius: f64, max_iter: usize, tol: f64) -> Outcome {
    if p.dim == 1 {
        return minimize_interval(p, center[0], radius, max_iter, tol);
    }
    let n = p.dim;
    let nf = n as f64;
    let mut c = center.to_vec();
    let mut mat = vec![0.0; n * n];
    for i in 0..n {
        mat[i * n + i] = radius * radius;
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut lower = f64::NEG_INFINITY;
    let mut pg = vec![0.0; n];
    let mut iterations = 0;
    for it in 0..max_iter {
        iterations = it + 1;
        let (g, depth_num) = match p.constraint.and_then(|cons| cons(&c)) {
            Some((h, g)) => (g, h),
            None => {
                let (f, g) = (p.objective)(&c);
                if best.as_ref().is_none_or(|(b, _)| f < *b) {
                    best = Some((f, c.clone()));
                }
                let fb = best.as_ref().map(|b| b.0).unwrap_or(f);
                let w = quad(&mat, &g, n).max(0.0).sqrt();
                lower = lower.max(f - w);
                if fb - lower <= tol {
                    break;
                }
                (g, f - fb)
            }
        };
        let gpg = quad(&mat, &g, n);
        if !(gpg > 1e-300) {
            break;
        }
        let w = gpg.sqrt();
        let alpha = (depth_num / w).max(0.0);
        if alpha >= 1.0 {
            // the cut removes the whole ellipsoid
            break;
        }
        for i in 0..n {
            pg[i] = (0..n).map(|j| mat[i * n + j] * g[j]).sum::<f64>() / w;
        }
        let tau = (1.0 + nf * alpha) / (nf + 1.0);
        let delta = nf * nf * (1.0 - alpha * alpha) / (nf * nf - 1.0);
        let sigma = 2.0 * (1.0 + nf * alpha) / ((nf + 1.0) * (1.0 + alpha));
        for i in 0..n {
            c[i] -= tau * pg[i];
        }
        for i in 0..n {
            for j in i..n {
                let v = delta * (mat[i * n + j] - sigma * pg[i] * pg[j]);
                mat[i * n + j] = v;
                mat[j * n + i] = v;
            }
        }
    }
    match best {
        Some((value, x)) => Outcome { x, value, lower, feasible: true, iterations },
        None => Outcome { x: c, value: f64::INFINITY, lower, feasible: false, iterations },
    }
}

fn quad(mat: &[f64], g: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        let mut r = 0.0;
        for j in 0..n {
            r += mat[i * n + j] * g[j];
        }
        s += g[i] * r;
    }
    s
}

fn minimize_interval(p: &Program<'_>, center: f64, radius: f64, max_iter: usize, tol: f64) -> Outcome {
    let (mut lo, mut hi) = (center - radius, center + radius);
    let mut best: Option<(f64, f64)> = None;
    let mut lower = f64::NEG_INFINITY;
    let mut iterations = 0;
    for it in 0..max_iter {
        iterations = it + 1;
        if !(hi > lo) {
            break;
        }
        let c = 0.5 * (lo + hi);
        let (g, h) = match p.constraint.and_then(|cons| cons(&[c])) {
            Some((h, g)) => (g[0], h),
            None => {
                let (f, g) = (p.objective)(&[c]);
                if best.is_none_or(|(b, _)| f < b) {
                    best = Some((f, c));
                }
                let fb = best.map(|b| b.0).unwrap_or(f);
                lower = lower.max(f - g[0].abs() * 0.5 * (hi - lo));
                if fb - lower <= tol {
                    break;
                }
                (g[0], f - fb)
            }
        };
        if g == 0.0 {
            break;
        }
        // keep {y : g (y - c) <= -h}
        let edge = c - h / g;
        if g > 0.0 {
            hi = hi.min(edge);
        } else {
            lo = lo.max(edge);
        }
    }
    match best {
        Some((value, x)) => Outcome { x: vec![x], value, lower, feasible: true, iterations },
        None => Outcome { x: vec![0.5 * (lo + hi)], value: f64::INFINITY, lower, feasible: false, iterations },
    }
}

pub(crate) fn default_iterations(n: usize) -> usize {
    2 * n * (n + 1) * 45 + 100
}

/// Result of a support-function maximization.
#[derive(Clone, Debug)]
pub struct SupportValue {
    pub value: f64,
    /// A maximizer in `R^d`, supported in `K`.
    pub argmax: Vec<f64>,
    /// Certified upper bound on the supremum.
    pub upper: f64,
}

/// `sup { <x, y> : y ∈ FlatR_K, g(y) <= 1 }` where `g` is a convex,
/// positively homogeneous gauge on `R^d` returning a value and subgradient.
///
/// Returns `+∞` when `g` vanishes along a direction where `x` does not.
pub fn support_sup(k: SubsetMask, x: &[f64], g: &dyn Fn(&[f64]) -> ValueGrad) -> SupportValue {
    let d = x.len();
    let idx: Vec<usize> = k.indices().collect();
    let m = idx.len();
    let xk: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
    if m == 0 || xk.iter().all(|&v| v == 0.0) {
        return SupportValue { value: 0.0, argmax: vec![0.0; d], upper: 0.0 };
    }
    let lift = |y: &[f64]| {
        let mut full = vec![0.0; d];
        for (a, &i) in idx.iter().enumerate() {
            full[i] = y[a];
        }
        full
    };
    let unit = |i: usize| {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        e
    };
    if m == 1 {
        let i = idx[0];
        let gp = g(&unit(i)).0;
        let mut e = unit(i);
        e[i] = -1.0;
        let gm = g(&e).0;
        let (t, gv) = if x[i] > 0.0 { (1.0, gp) } else { (-1.0, gm) };
        if gv <= 0.0 {
            return SupportValue { value: f64::INFINITY, argmax: vec![0.0; d], upper: f64::INFINITY };
        }
        let mut arg = vec![0.0; d];
        arg[i] = t / gv;
        return SupportValue { value: x[i].abs() / gv, argmax: arg, upper: x[i].abs() / gv };
    }
    let gmin = idx
        .iter()
        .flat_map(|&i| {
            let mut e = unit(i);
            let a = g(&e).0;
            e[i] = -1.0;
            [a, g(&e).0]
        })
        .fold(f64::INFINITY, f64::min);
    if !(gmin > 0.0) {
        return SupportValue { value: f64::INFINITY, argmax: vec![0.0; d], upper: f64::INFINITY };
    }
    let mut radius = 2.0 * (m as f64).sqrt() / gmin;
    let constraint = |y: &[f64]| {
        let full = lift(y);
        let (v, grad) = g(&full);
        if v <= 1.0 {
            None
        } else {
            Some((v - 1.0, idx.iter().map(|&i| grad[i]).collect()))
        }
    };
    let objective = |y: &[f64]| (-dot(&xk, y), xk.iter().map(|v| -v).collect());
    let scale = euclid(&xk);
    let mut last = None;
    for _ in 0..8 {
        let prog = Program { dim: m, constraint: Some(&constraint), objective: &objective };
        let out = minimize(&prog, &vec![0.0; m], radius, default_iterations(m), 1e-13 * scale * radius);
        let near_edge = out.feasible && euclid(&out.x) > 0.9 * radius;
        let done = out.feasible && !near_edge;
        last = Some(out);
        if done {
            break;
        }
        radius *= 8.0;
    }
    let out = last.expect("at least one pass");
    if !out.feasible {
        return SupportValue { value: f64::INFINITY, argmax: vec![0.0; d], upper: f64::INFINITY };
    }
    // rescale onto the boundary, which only improves the objective
    let arg = lift(&out.x);
    let gv = g(&arg).0;
    let (value, argmax) = if gv > 0.0 {
        let s: Vec<f64> = arg.iter().map(|v| v / gv).collect();
        (dot(x, &s), s)
    } else {
        (-out.value, arg)
    };
    SupportValue { value, argmax, upper: (-out.lower).max(value) }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l2(y: &[f64]) -> ValueGrad {
        let n = euclid(y);
        let g = if n > 0.0 { y.iter().map(|v| v / n).collect() } else { vec![0.0; y.len()] };
        (n, g)
    }

    fn l1(y: &[f64]) -> ValueGrad {
        (y.iter().map(|v| v.abs()).sum(), y.iter().map(|v| if *v > 0.0 { 1.0 } else if *v < 0.0 { -1.0 } else { 0.0 }).collect())
    }

    #[test]
    fn euclidean_support_function() {
        let k = SubsetMask::full(3);
        let s = support_sup(k, &[3.0, 4.0, 0.0], &l2);
        assert!((s.value - 5.0).abs() < 1e-10, "{s:?}");
        assert!(s.upper >= s.value - 1e-12);
    }

    #[test]
    fn polyhedral_support_function() {
        // sup over the l1 ball is the max-abs coordinate
        let k = SubsetMask::from_indices(4, &[1, 2, 4]).unwrap();
        let s = support_sup(k, &[0.5, -2.0, 9.0, 1.0], &l1);
        assert!((s.value - 2.0).abs() < 1e-9, "{s:?}");
        assert_eq!(s.argmax[2], 0.0);
    }

    #[test]
    fn one_dimensional_face() {
        let k = SubsetMask::from_indices(2, &[2]).unwrap();
        let s = support_sup(k, &[7.0, -3.0], &l1);
        assert_eq!(s.value, 3.0);
        assert_eq!(s.argmax, vec![0.0, -1.0]);
    }
}
