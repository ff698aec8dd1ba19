//! Set functions `F : 2^V → [-∞, +∞]` stored as full tables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::subsets::{check_dim, ExtReal, SubsetMask};

/// Serializable form: either a named generator or an explicit table in
/// bitmask order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetFunctionConfig {
    pub d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<ExtReal>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
}

impl SetFunctionConfig {
    pub fn named(d: usize, name: &str) -> Self {
        SetFunctionConfig { d, name: Some(name.into()), values: None, a: None, b: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SetFunctionFlags {
    pub nondecreasing: bool,
    pub finite_valued: bool,
    /// `F(∅) = 0`.
    pub normalized: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SetFunction {
    d: usize,
    values: Vec<ExtReal>,
    name: String,
    flags: SetFunctionFlags,
}

impl SetFunction {
    /// A table of `2^d` values in increasing bitmask order.
    pub fn from_table(d: usize, values: Vec<ExtReal>) -> Result<Self> {
        Self::build(d, values, "table".into())
    }

    pub fn from_fn(d: usize, name: &str, f: impl Fn(SubsetMask) -> ExtReal) -> Result<Self> {
        check_dim(d)?;
        let values = (0..1u32 << d).map(|b| f(SubsetMask::raw(d, b))).collect();
        Self::build(d, values, name.into())
    }

    pub fn cardinality(d: usize) -> Result<Self> {
        Self::from_fn(d, "cardinality", |k| ExtReal::Finite(k.len() as f64))
    }

    pub fn sqrt_cardinality(d: usize) -> Result<Self> {
        Self::from_fn(d, "sqrt-cardinality", |k| ExtReal::Finite((k.len() as f64).sqrt()))
    }

    /// `F(∅) = 0` and `F(K) = a + b|K|` otherwise.
    pub fn affine(d: usize, a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::InvalidSetFunction("affine coefficients must be finite".into()));
        }
        Self::from_fn(d, "affine", |k| if k.is_empty() { ExtReal::ZERO } else { ExtReal::Finite(a + b * k.len() as f64) })
    }

    pub fn from_config(c: &SetFunctionConfig) -> Result<Self> {
        match (&c.name, &c.values) {
            (Some(_), Some(_)) => Err(Error::InvalidSetFunction("give either a name or values, not both".into())),
            (None, Some(v)) => {
                if c.a.is_some() || c.b.is_some() {
                    return Err(Error::InvalidSetFunction("coefficients only apply to named generators".into()));
                }
                Self::from_table(c.d, v.clone())
            }
            (Some(name), None) => match name.as_str() {
                "cardinality" => Self::cardinality(c.d),
                "sqrt-cardinality" => Self::sqrt_cardinality(c.d),
                "affine" => Self::affine(c.d, c.a.unwrap_or(0.0), c.b.unwrap_or(1.0)),
                other => Err(Error::InvalidSetFunction(format!("unknown generator {other:?}"))),
            },
            (None, None) => Err(Error::InvalidSetFunction("missing name or values".into())),
        }
    }

    /// The explicit-table configuration of this function.
    pub fn to_config(&self) -> SetFunctionConfig {
        SetFunctionConfig { d: self.d, name: None, values: Some(self.values.clone()), a: None, b: None }
    }

    fn build(d: usize, values: Vec<ExtReal>, name: String) -> Result<Self> {
        check_dim(d)?;
        if values.len() != 1 << d {
            return Err(Error::InvalidSetFunction(format!("expected {} values for d = {d}, got {}", 1usize << d, values.len())));
        }
        let finite_valued = values.iter().all(|v| v.is_finite());
        let normalized = values[0] == ExtReal::ZERO;
        let mut nondecreasing = true;
        'outer: for b in 0..values.len() {
            for i in 0..d {
                if b >> i & 1 == 0 && values[b] > values[b | 1 << i] {
                    nondecreasing = false;
                    break 'outer;
                }
            }
        }
        let flags = SetFunctionFlags { nondecreasing, finite_valued, normalized };
        Ok(SetFunction { d, values, name, flags })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn flags(&self) -> SetFunctionFlags {
        self.flags
    }

    pub fn values(&self) -> &[ExtReal] {
        &self.values
    }

    pub fn value(&self, k: SubsetMask) -> ExtReal {
        self.values[k.bits() as usize]
    }

    /// Finite value at `K`; panics when infinite.
    pub(crate) fn finite(&self, k: SubsetMask) -> f64 {
        self.value(k).as_finite().expect("finite set function value")
    }

    pub fn subsets(&self) -> impl Iterator<Item = SubsetMask> {
        let d = self.d;
        (0..1u32 << d).map(move |b| SubsetMask::raw(d, b))
    }

    pub(crate) fn require_dim(&self, d: usize) -> Result<()> {
        if self.d != d {
            return Err(Error::DimensionMismatch { expected: self.d, got: d });
        }
        Ok(())
    }

    pub(crate) fn require_nondecreasing_finite(&self) -> Result<()> {
        if !self.flags.finite_valued {
            return Err(Error::Precondition("set function must be finite-valued".into()));
        }
        if !self.flags.nondecreasing {
            return Err(Error::Precondition("set function must be nondecreasing".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_and_flags() {
        let f = SetFunction::cardinality(3).unwrap();
        assert_eq!(f.value(SubsetMask::from_indices(3, &[1, 3]).unwrap()), ExtReal::Finite(2.0));
        assert_eq!(f.flags(), SetFunctionFlags { nondecreasing: true, finite_valued: true, normalized: true });
        let g = SetFunction::from_table(1, vec![ExtReal::Finite(1.0), ExtReal::Finite(0.0)]).unwrap();
        assert!(!g.flags().nondecreasing && !g.flags().normalized);
        assert!(SetFunction::from_table(2, vec![ExtReal::ZERO; 3]).is_err());
        let h = SetFunction::affine(2, 1.0, 0.5).unwrap();
        assert_eq!(h.values(), &[ExtReal::ZERO, ExtReal::Finite(1.5), ExtReal::Finite(1.5), ExtReal::Finite(2.0)]);
    }

    #[test]
    fn config_round_trip() {
        let c: SetFunctionConfig = serde_json::from_str(r#"{"d":2,"values":[0,1,"inf",2]}"#).unwrap();
        let f = SetFunction::from_config(&c).unwrap();
        assert_eq!(f.value(SubsetMask::from_indices(2, &[2]).unwrap()), ExtReal::PosInf);
        let back: SetFunctionConfig = serde_json::from_str(&serde_json::to_string(&f.to_config()).unwrap()).unwrap();
        assert_eq!(SetFunction::from_config(&back).unwrap().values(), f.values());
        let named: SetFunctionConfig = serde_json::from_str(r#"{"d":3,"name":"cardinality"}"#).unwrap();
        assert_eq!(SetFunction::from_config(&named).unwrap().name(), "cardinality");
        assert!(serde_json::from_str::<SetFunctionConfig>(r#"{"d":3,"nme":"x"}"#).is_err());
    }
}
