//! Local norm families indexed by subsets `K ⊆ V`, all extended to `R^d`
//! as seminorms that only look at `x_K`.
//!
//! * dual coordinate norm `‖y‖_(K),⋆ = sup_{J ⊆ K} ‖y_J‖_{J,⋆}`
//! * coordinate norm `‖x‖_(K)`, its dual on `FlatR_K`
//! * top dual norm `‖y‖_⟨K⟩,⋆ = sup_{J ⊆ K} ‖y_J‖_⋆`
//! * support dual norm `‖x‖_⟨K⟩,sd`, its dual on `FlatR_K`
//!
//! With [`Backend::Auto`] the closed forms are used: the dual coordinate
//! norm is `‖y_K‖_{K,⋆}` and the coordinate norm is `‖x_K‖` for every source
//! norm; for orthant-monotonic sources the top and support families reduce
//! to `‖y_K‖_⋆` and `‖x_K‖`. [`Backend::Numeric`] evaluates the suprema
//! literally and dualizes with the ellipsoid engine.

use serde::{Deserialize, Serialize};

use crate::engine::{support_sup, ValueGrad};
use crate::error::{Error, Result};
use crate::norms::{mask, Flag, NormSpec};
use crate::subsets::{check_dim, SubsetMask};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Auto,
    Numeric,
}

/// Which family plays the block norm in a decomposition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockNorm {
    /// coordinate norms, paired with dual coordinate norms
    Coordinate,
    /// support dual norms, paired with top dual norms
    SupportDual,
}

#[derive(Clone, Debug)]
pub struct LocalNormFamily {
    source: NormSpec,
    backend: Backend,
    collapse: bool,
}

impl LocalNormFamily {
    pub fn new(source: NormSpec) -> Self {
        Self::with_backend(source, Backend::Auto)
    }

    pub fn with_backend(source: NormSpec, backend: Backend) -> Self {
        let collapse = backend == Backend::Auto && source.declared_flags().orthant_monotonic == Flag::Yes;
        LocalNormFamily { source, backend, collapse }
    }

    pub fn source(&self) -> &NormSpec {
        &self.source
    }

    pub fn dim(&self) -> usize {
        self.source.dim()
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    /// Whether the top and support families are known to coincide with the
    /// coordinate families.
    pub fn orthant_monotonic(&self) -> bool {
        self.source.declared_flags().orthant_monotonic == Flag::Yes
    }

    pub(crate) fn check(&self, v: &[f64], k: SubsetMask) -> Result<()> {
        check_dim(v.len())?;
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: v.len() });
        }
        if k.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: k.dim() });
        }
        if let Some(i) = v.iter().position(|a| !a.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(())
    }

    /// `‖y‖_(K),⋆`, a seminorm depending on `y_K` only.
    pub fn dual_coordinate_norm(&self, y: &[f64], k: SubsetMask) -> Result<f64> {
        self.check(y, k)?;
        Ok(self.dcn(y, k).0)
    }

    /// `‖x‖_(K)`, a seminorm depending on `x_K` only.
    pub fn coordinate_norm(&self, x: &[f64], k: SubsetMask) -> Result<f64> {
        self.check(x, k)?;
        Ok(self.cn(x, k).0)
    }

    /// `‖y‖_⟨K⟩,⋆`, a seminorm depending on `y_K` only.
    pub fn top_k_dual_norm(&self, y: &[f64], k: SubsetMask) -> Result<f64> {
        self.check(y, k)?;
        Ok(self.topk(y, k).0)
    }

    /// `‖x‖_⟨K⟩,sd`, a seminorm depending on `x_K` only.
    pub fn k_support_dual_norm(&self, x: &[f64], k: SubsetMask) -> Result<f64> {
        self.check(x, k)?;
        Ok(self.ksd(x, k).0)
    }

    pub(crate) fn dcn(&self, y: &[f64], k: SubsetMask) -> ValueGrad {
        if k.is_empty() {
            return (0.0, vec![0.0; y.len()]);
        }
        let yk = mask(y, k);
        if self.collapse {
            let (v, g) = self.source.dual_value_grad(&yk);
            return (v, mask(&g, k));
        }
        match self.backend {
            Backend::Auto => self.source.set_star_value_grad(&yk, k),
            Backend::Numeric => sup_over_subsets(k, |j| self.source.set_star_value_grad(&mask(&yk, j), j)),
        }
    }

    pub(crate) fn cn(&self, x: &[f64], k: SubsetMask) -> ValueGrad {
        if k.is_empty() {
            return (0.0, vec![0.0; x.len()]);
        }
        let xk = mask(x, k);
        match self.backend {
            Backend::Auto => {
                let (v, g) = self.source.value_grad(&xk);
                (v, mask(&g, k))
            }
            Backend::Numeric => {
                let s = support_sup(k, &xk, &|y| self.dcn(y, k));
                (s.value, s.argmax)
            }
        }
    }

    pub(crate) fn topk(&self, y: &[f64], k: SubsetMask) -> ValueGrad {
        if k.is_empty() {
            return (0.0, vec![0.0; y.len()]);
        }
        let yk = mask(y, k);
        if self.collapse {
            let (v, g) = self.source.dual_value_grad(&yk);
            return (v, mask(&g, k));
        }
        sup_over_subsets(k, |j| {
            let (v, g) = self.source.dual_value_grad(&mask(&yk, j));
            (v, mask(&g, j))
        })
    }

    pub(crate) fn ksd(&self, x: &[f64], k: SubsetMask) -> ValueGrad {
        if k.is_empty() {
            return (0.0, vec![0.0; x.len()]);
        }
        let xk = mask(x, k);
        if self.collapse {
            let (v, g) = self.source.value_grad(&xk);
            return (v, mask(&g, k));
        }
        let s = support_sup(k, &xk, &|y| self.topk(y, k));
        (s.value, s.argmax)
    }

    /// Block norm and its paired dual family.
    pub(crate) fn block(&self, b: BlockNorm, z: &[f64], k: SubsetMask) -> ValueGrad {
        match b {
            BlockNorm::Coordinate => self.cn(z, k),
            BlockNorm::SupportDual => self.ksd(z, k),
        }
    }

    pub(crate) fn block_dual(&self, b: BlockNorm, y: &[f64], k: SubsetMask) -> ValueGrad {
        match b {
            BlockNorm::Coordinate => self.dcn(y, k),
            BlockNorm::SupportDual => self.topk(y, k),
        }
    }
}

// sup over J ⊆ K of a value, with the subgradient of a maximizing piece
fn sup_over_subsets(k: SubsetMask, f: impl Fn(SubsetMask) -> ValueGrad) -> ValueGrad {
    let mut best: Option<ValueGrad> = None;
    for j in k.subsets().skip(1) {
        let (v, g) = f(j);
        if best.as_ref().is_none_or(|b| v > b.0) {
            best = Some((v, g));
        }
    }
    best.unwrap_or_else(|| (0.0, vec![0.0; k.dim()]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::{Combine, NormConfig};

    fn k(d: usize, idx: &[usize]) -> SubsetMask {
        SubsetMask::from_indices(d, idx).unwrap()
    }

    #[test]
    fn l2_examples() {
        let fam = LocalNormFamily::new(NormSpec::lp(2.0, 3).unwrap());
        let v = fam.dual_coordinate_norm(&[3.0, 4.0, 0.0], k(3, &[1, 2])).unwrap();
        assert!((v - 5.0).abs() < 1e-12);
        assert_eq!(fam.dual_coordinate_norm(&[3.0, 4.0, 0.0], k(3, &[3])).unwrap(), 0.0);
        let fam = LocalNormFamily::new(NormSpec::lp(2.0, 2).unwrap());
        assert!((fam.coordinate_norm(&[1.0, 1.0], k(2, &[1, 2])).unwrap() - 2f64.sqrt()).abs() < 1e-12);
        let l1 = LocalNormFamily::new(NormSpec::lp(1.0, 2).unwrap());
        assert_eq!(l1.top_k_dual_norm(&[2.0, -3.0], k(2, &[1, 2])).unwrap(), 3.0);
        assert_eq!(fam.dual_coordinate_norm(&[1.0, 1.0], SubsetMask::empty(2)).unwrap(), 0.0);
    }

    #[test]
    fn numeric_backend_matches_closed_forms() {
        for p in [1.5, 2.0, 3.0] {
            let src = NormSpec::lp(p, 3).unwrap();
            let auto = LocalNormFamily::new(src.clone());
            let num = LocalNormFamily::with_backend(src, Backend::Numeric);
            let x = [0.7, -1.3, 0.4];
            for kk in [k(3, &[1, 2]), k(3, &[1, 2, 3]), k(3, &[3])] {
                let a = auto.coordinate_norm(&x, kk).unwrap();
                let b = num.coordinate_norm(&x, kk).unwrap();
                assert!((a - b).abs() < 1e-8 * a.max(1.0), "p={p} {kk}: {a} vs {b}");
                let a = auto.k_support_dual_norm(&x, kk).unwrap();
                let b = num.k_support_dual_norm(&x, kk).unwrap();
                assert!((a - b).abs() < 1e-8 * a.max(1.0), "p={p} {kk}: {a} vs {b}");
                let a = auto.dual_coordinate_norm(&x, kk).unwrap();
                let b = num.dual_coordinate_norm(&x, kk).unwrap();
                assert!((a - b).abs() < 1e-12 * a.max(1.0));
            }
        }
    }

    #[test]
    fn non_monotonic_source_families_differ() {
        // |x1 - x2| + |x2|
        let c = NormConfig::CustomTable { combine: Combine::Sum, rows: vec![vec![1.0, -1.0], vec![0.0, 1.0]], flags: None };
        let fam = LocalNormFamily::new(NormSpec::from_config(&c, 2).unwrap());
        let y = [0.0, 1.0];
        let v = k(2, &[1, 2]);
        let top = fam.top_k_dual_norm(&y, v).unwrap();
        let dcn = fam.dual_coordinate_norm(&y, v).unwrap();
        assert!(top <= dcn + 1e-9, "{top} {dcn}");
        // coordinate norm is the restriction for every source norm
        let x = [0.3, 2.0];
        let a = fam.coordinate_norm(&x, v).unwrap();
        let num = LocalNormFamily::with_backend(fam.source().clone(), Backend::Numeric);
        let b = num.coordinate_norm(&x, v).unwrap();
        assert!((a - b).abs() < 1e-7 * a, "{a} {b}");
    }
}
