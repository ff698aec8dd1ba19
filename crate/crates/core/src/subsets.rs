//! Subsets of `{1,…,d}` as bitmasks, vectors, the support mapping and
//! extended reals.
//!
//! Bit `i` of a mask stands for coordinate `i + 1`. Subsets are enumerated
//! in increasing bitmask order, so the empty set always comes first.

use std::cmp::Ordering;
use std::fmt;
use std::ops::Deref;

use serde::de::{self, Deserializer, Visitor};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 16;

pub fn check_dim(d: usize) -> Result<()> {
    if d == 0 || d > MAX_DIM {
        return Err(Error::Dimension(d));
    }
    Ok(())
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubsetMask {
    bits: u32,
    dim: u8,
}

impl SubsetMask {
    pub fn new(dim: usize, bits: u32) -> Result<Self> {
        check_dim(dim)?;
        if bits >> dim != 0 {
            return Err(Error::Precondition(format!(
                "mask {bits:#b} has bits beyond dimension {dim}"
            )));
        }
        Ok(SubsetMask { bits, dim: dim as u8 })
    }

    pub(crate) fn raw(dim: usize, bits: u32) -> Self {
        debug_assert!(dim <= MAX_DIM && bits >> dim == 0);
        SubsetMask { bits, dim: dim as u8 }
    }

    pub fn empty(dim: usize) -> Self {
        Self::raw(dim, 0)
    }

    pub fn full(dim: usize) -> Self {
        Self::raw(dim, ((1u64 << dim) - 1) as u32)
    }

    /// Builds a mask from 1-based coordinate indices.
    pub fn from_indices(dim: usize, indices: &[usize]) -> Result<Self> {
        check_dim(dim)?;
        let mut bits = 0u32;
        for &i in indices {
            if i == 0 || i > dim {
                return Err(Error::Precondition(format!("index {i} outside 1..={dim}")));
            }
            bits |= 1 << (i - 1);
        }
        Ok(Self::raw(dim, bits))
    }

    pub fn bits(self) -> u32 {
        self.bits
    }

    pub fn dim(self) -> usize {
        self.dim as usize
    }

    /// Whether 0-based coordinate `i` belongs to the subset.
    pub fn contains(self, i: usize) -> bool {
        i < 32 && self.bits >> i & 1 == 1
    }

    pub fn len(self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.bits == 0
    }

    pub fn is_full(self) -> bool {
        self == Self::full(self.dim())
    }

    pub fn is_subset_of(self, other: SubsetMask) -> bool {
        self.bits & !other.bits == 0
    }

    pub fn union(self, other: SubsetMask) -> SubsetMask {
        Self::raw(self.dim(), self.bits | other.bits)
    }

    pub fn intersection(self, other: SubsetMask) -> SubsetMask {
        Self::raw(self.dim(), self.bits & other.bits)
    }

    pub fn complement(self) -> SubsetMask {
        Self::raw(self.dim(), !self.bits & Self::full(self.dim()).bits)
    }

    pub fn with(self, i: usize) -> SubsetMask {
        Self::raw(self.dim(), self.bits | 1 << i)
    }

    pub fn without(self, i: usize) -> SubsetMask {
        Self::raw(self.dim(), self.bits & !(1 << i))
    }

    /// 0-based indices of the members, increasing.
    pub fn indices(self) -> impl Iterator<Item = usize> {
        let bits = self.bits;
        (0..self.dim()).filter(move |&i| bits >> i & 1 == 1)
    }

    /// All subsets `J ⊆ self`, in increasing bitmask order.
    pub fn subsets(self) -> impl Iterator<Item = SubsetMask> {
        let dim = self.dim();
        let k = self.bits;
        let mut next = Some(0u32);
        std::iter::from_fn(move || {
            let cur = next?;
            next = if cur == k { None } else { Some((cur.wrapping_sub(k)) & k) };
            Some(SubsetMask::raw(dim, cur))
        })
    }

    /// All supersets `self ⊆ K ⊆ V`, in increasing bitmask order.
    pub fn supersets(self) -> impl Iterator<Item = SubsetMask> {
        let base = self.bits;
        self.complement().subsets().map(move |j| SubsetMask::raw(j.dim(), j.bits | base))
    }
}

impl fmt::Display for SubsetMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (n, i) in self.indices().enumerate() {
            if n > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", i + 1)?;
        }
        write!(f, "}}")
    }
}

impl fmt::Debug for SubsetMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

// Serialized as the list of 1-based member indices.
impl Serialize for SubsetMask {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.len()))?;
        for i in self.indices() {
            seq.serialize_element(&(i + 1))?;
        }
        seq.end()
    }
}

/// All `2^d` subsets of `{1,…,d}`, empty set first.
pub fn enumerate_subsets(d: usize) -> Result<impl Iterator<Item = SubsetMask>> {
    check_dim(d)?;
    Ok((0..1u32 << d).map(move |b| SubsetMask::raw(d, b)))
}

/// A point of `R^d` with finite coordinates and `1 <= d <= 16`.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        check_dim(coords.len())?;
        if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Vector(coords))
    }

    pub fn zeros(d: usize) -> Result<Self> {
        Self::new(vec![0.0; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Vector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Vector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Vector::new(v)
    }
}

impl From<Vector> for Vec<f64> {
    fn from(v: Vector) -> Vec<f64> {
        v.0
    }
}

impl fmt::Debug for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

/// `supp(x) = {j : x_j != 0}` with exact comparison to zero.
pub fn support(x: &[f64]) -> Result<SubsetMask> {
    check_dim(x.len())?;
    Ok(support_unchecked(x, 0.0))
}

/// Support with a magnitude threshold: coordinates with `|x_j| <= tol` count as zero.
pub fn support_with_tol(x: &[f64], tol: f64) -> Result<SubsetMask> {
    check_dim(x.len())?;
    Ok(support_unchecked(x, tol))
}

pub(crate) fn support_unchecked(x: &[f64], tol: f64) -> SubsetMask {
    let mut bits = 0u32;
    for (i, &v) in x.iter().enumerate() {
        if v.abs() > tol {
            bits |= 1 << i;
        }
    }
    SubsetMask::raw(x.len(), bits)
}

/// `x_K`: keeps the coordinates in `K`, zeroes the rest.
pub fn project(x: &[f64], k: SubsetMask) -> Result<Vec<f64>> {
    if x.len() != k.dim() {
        return Err(Error::DimensionMismatch { expected: k.dim(), got: x.len() });
    }
    Ok(project_unchecked(x, k))
}

pub(crate) fn project_unchecked(x: &[f64], k: SubsetMask) -> Vec<f64> {
    x.iter()
        .enumerate()
        .map(|(i, &v)| if k.contains(i) { v } else { 0.0 })
        .collect()
}

/// Whether `x` lies on the level curve `{supp = K}`.
pub fn level_set_membership(x: &[f64], k: SubsetMask) -> Result<bool> {
    if x.len() != k.dim() {
        return Err(Error::DimensionMismatch { expected: k.dim(), got: x.len() });
    }
    Ok(support_unchecked(x, 0.0) == k)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn euclid(a: &[f64]) -> f64 {
    let m = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if m == 0.0 {
        return 0.0;
    }
    m * a.iter().map(|v| (v / m) * (v / m)).sum::<f64>().sqrt()
}

/// `R ∪ {-∞, +∞}` without NaN.
#[derive(Clone, Copy, PartialEq, Debug)]
pub enum ExtReal {
    NegInf,
    Finite(f64),
    PosInf,
}

impl ExtReal {
    pub const ZERO: ExtReal = ExtReal::Finite(0.0);

    /// Maps infinite floats to the matching infinity; NaN is rejected.
    pub fn new(v: f64) -> Option<ExtReal> {
        if v.is_nan() {
            None
        } else if v == f64::INFINITY {
            Some(ExtReal::PosInf)
        } else if v == f64::NEG_INFINITY {
            Some(ExtReal::NegInf)
        } else {
            Some(ExtReal::Finite(v))
        }
    }

    pub fn finite(v: f64) -> ExtReal {
        ExtReal::new(v).expect("NaN is not an extended real")
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn as_finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(v),
            _ => None,
        }
    }

    pub fn to_f64(self) -> f64 {
        match self {
            ExtReal::NegInf => f64::NEG_INFINITY,
            ExtReal::Finite(v) => v,
            ExtReal::PosInf => f64::INFINITY,
        }
    }

    /// Lower addition: `(+∞) ∔ (-∞) = -∞`.
    pub fn lower_add(self, other: ExtReal) -> ExtReal {
        use ExtReal::*;
        match (self, other) {
            (NegInf, _) | (_, NegInf) => NegInf,
            (PosInf, _) | (_, PosInf) => PosInf,
            (Finite(a), Finite(b)) => ExtReal::finite(a + b),
        }
    }

    /// Upper addition: `(+∞) ∔ (-∞) = +∞`.
    pub fn upper_add(self, other: ExtReal) -> ExtReal {
        use ExtReal::*;
        match (self, other) {
            (PosInf, _) | (_, PosInf) => PosInf,
            (NegInf, _) | (_, NegInf) => NegInf,
            (Finite(a), Finite(b)) => ExtReal::finite(a + b),
        }
    }

    pub fn max(self, other: ExtReal) -> ExtReal {
        if other > self {
            other
        } else {
            self
        }
    }

    pub fn min(self, other: ExtReal) -> ExtReal {
        if other < self {
            other
        } else {
            self
        }
    }
}

impl std::ops::Neg for ExtReal {
    type Output = ExtReal;
    fn neg(self) -> ExtReal {
        match self {
            ExtReal::NegInf => ExtReal::PosInf,
            ExtReal::Finite(v) => ExtReal::Finite(-v),
            ExtReal::PosInf => ExtReal::NegInf,
        }
    }
}

impl From<f64> for ExtReal {
    /// Panics on NaN.
    fn from(v: f64) -> ExtReal {
        ExtReal::finite(v)
    }
}

impl Eq for ExtReal {}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExtReal {
    fn cmp(&self, other: &Self) -> Ordering {
        use ExtReal::*;
        match (self, other) {
            (NegInf, NegInf) | (PosInf, PosInf) => Ordering::Equal,
            (NegInf, _) | (_, PosInf) => Ordering::Less,
            (_, NegInf) | (PosInf, _) => Ordering::Greater,
            (Finite(a), Finite(b)) => a.total_cmp(b),
        }
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::NegInf => write!(f, "-inf"),
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::PosInf => write!(f, "inf"),
        }
    }
}

// Finite values are JSON numbers, infinities the strings "inf" and "-inf".
impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExtReal::NegInf => s.serialize_str("-inf"),
            ExtReal::Finite(v) => s.serialize_f64(*v),
            ExtReal::PosInf => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for ExtReal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = ExtReal;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "a number or one of \"inf\", \"+inf\", \"-inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<ExtReal, E> {
                ExtReal::new(v).ok_or_else(|| E::custom("NaN is not an extended real"))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<ExtReal, E> {
                Ok(ExtReal::Finite(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<ExtReal, E> {
                Ok(ExtReal::Finite(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<ExtReal, E> {
                match v {
                    "inf" | "+inf" | "Infinity" => Ok(ExtReal::PosInf),
                    "-inf" | "-Infinity" => Ok(ExtReal::NegInf),
                    _ => Err(E::custom(format!("unknown extended real {v:?}"))),
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn support_is_exact() {
        let k = support(&[0.0, 1e-300, -2.0]).unwrap();
        assert_eq!(k.to_string(), "{2,3}");
        assert_eq!(support_with_tol(&[0.0, 1e-300, -2.0], 1e-12).unwrap().to_string(), "{3}");
        assert!(support(&[]).is_err());
        assert!(support(&[1.0; 17]).is_err());
    }

    #[test]
    fn enumeration_order() {
        let all: Vec<u32> = enumerate_subsets(3).unwrap().map(|k| k.bits()).collect();
        assert_eq!(all, (0..8).collect::<Vec<_>>());
        let k = SubsetMask::from_indices(4, &[1, 3]).unwrap();
        let subs: Vec<String> = k.subsets().map(|j| j.to_string()).collect();
        assert_eq!(subs, ["{}", "{1}", "{3}", "{1,3}"]);
        let sup: Vec<String> = k.supersets().map(|j| j.to_string()).collect();
        assert_eq!(sup, ["{1,3}", "{1,2,3}", "{1,3,4}", "{1,2,3,4}"]);
    }

    #[test]
    fn projection_and_level_sets() {
        let k = SubsetMask::from_indices(3, &[1, 3]).unwrap();
        assert_eq!(project(&[1.0, 2.0, 3.0], k).unwrap(), vec![1.0, 0.0, 3.0]);
        assert!(level_set_membership(&[1.0, 0.0, 3.0], k).unwrap());
        assert!(!level_set_membership(&[1.0, 0.0, 0.0], k).unwrap());
        assert!(project(&[1.0], k).is_err());
    }

    #[test]
    fn extended_addition() {
        use ExtReal::*;
        assert_eq!(PosInf.lower_add(NegInf), NegInf);
        assert_eq!(PosInf.upper_add(NegInf), PosInf);
        assert_eq!(Finite(1.0).lower_add(Finite(2.0)), Finite(3.0));
        assert_eq!(-PosInf, NegInf);
        assert!(NegInf < Finite(-1e300) && Finite(1e300) < PosInf);
        assert!(ExtReal::new(f64::NAN).is_none());
    }

    #[test]
    fn ext_real_json() {
        let v = vec![ExtReal::Finite(1.5), ExtReal::PosInf, ExtReal::NegInf];
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, r#"[1.5,"inf","-inf"]"#);
        let back: Vec<ExtReal> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }
}
