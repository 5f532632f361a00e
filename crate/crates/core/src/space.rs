//! Finite measured spaces, real functions on them, lattice operations and
//! the weighted Lebesgue / distribution-function machinery.
//!
//! The underlying set carries the discrete topology: every subset is open and
//! every function is continuous.

use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use crate::error::{invalid, Error, Result};

/// Point set `{0, .., n-1}` with strictly positive weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMeasuredSpace {
    measure: Vec<f64>,
}

impl FiniteMeasuredSpace {
    pub fn new(measure: Vec<f64>) -> Result<Self> {
        if measure.is_empty() {
            return Err(invalid("measure", "space must have at least one point"));
        }
        if let Some((i, m)) = measure
            .iter()
            .enumerate()
            .find(|(_, m)| !(m.is_finite() && **m > 0.0))
        {
            return Err(invalid(
                "measure",
                format!("weight of point {i} must be finite and > 0, got {m}"),
            ));
        }
        Ok(Self { measure })
    }

    /// Counting measure on `n` points.
    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(vec![1.0; n])
    }

    pub fn n(&self) -> usize {
        self.measure.len()
    }

    pub fn measure(&self) -> &[f64] {
        &self.measure
    }

    pub fn total_mass(&self) -> f64 {
        self.measure.iter().sum()
    }

    pub fn mass(&self, set: &SubsetMask) -> f64 {
        set.indices().map(|i| self.measure[i]).sum()
    }

    pub fn check(&self, u: &Func) -> Result<()> {
        if u.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: u.len(),
            });
        }
        Ok(())
    }

    /// Weighted inner product `Σ m_i u_i v_i`.
    pub fn inner(&self, u: &Func, v: &Func) -> f64 {
        debug_assert_eq!(u.len(), v.len());
        self.measure
            .iter()
            .zip(u.iter().zip(v.iter()))
            .map(|(m, (a, b))| m * a * b)
            .sum()
    }

    pub fn l2_norm_sq(&self, u: &Func) -> f64 {
        self.inner(u, u)
    }

    pub fn l2_norm(&self, u: &Func) -> f64 {
        self.l2_norm_sq(u).sqrt()
    }

    /// `(Σ m_i |u_i|^p)^{1/p}`, or `max |u_i|` for `p = ∞`.
    pub fn lp_norm(&self, u: &Func, p: f64) -> Result<f64> {
        self.check(u)?;
        if p.is_nan() || p < 1.0 {
            return Err(invalid("p", format!("Lp exponent must be >= 1, got {p}")));
        }
        Ok(self.lp_norm_unchecked(u, p))
    }

    pub(crate) fn lp_norm_unchecked(&self, u: &Func, p: f64) -> f64 {
        if p.is_infinite() {
            return u.sup_norm();
        }
        // Rescale by the sup norm so that large p does not overflow.
        let s = u.sup_norm();
        if s == 0.0 {
            return 0.0;
        }
        let sum: f64 = self
            .measure
            .iter()
            .zip(u.iter())
            .map(|(m, x)| m * (x.abs() / s).powf(p))
            .sum();
        s * sum.powf(1.0 / p)
    }

    /// `∫ |u|^q dm` without the outer root.
    pub fn lp_integral(&self, u: &Func, q: f64) -> f64 {
        self.measure
            .iter()
            .zip(u.iter())
            .map(|(m, x)| m * x.abs().powf(q))
            .sum()
    }

    /// `m({|f| ≥ λ})`.
    pub fn distribution_function(&self, f: &Func, lambda: f64) -> Result<f64> {
        self.check(f)?;
        if lambda.is_nan() || lambda < 0.0 {
            return Err(invalid("lambda", format!("level must be >= 0, got {lambda}")));
        }
        Ok(self.distribution_unchecked(f, lambda))
    }

    pub(crate) fn distribution_unchecked(&self, f: &Func, lambda: f64) -> f64 {
        self.measure
            .iter()
            .zip(f.iter())
            .filter(|(_, x)| x.abs() >= lambda)
            .map(|(m, _)| m)
            .sum()
    }

    /// Weak-Lp quasinorm `sup_λ λ m_f(λ)^{1/p}`, evaluated exactly.
    ///
    /// On `(b_k, b_{k+1}]` between consecutive values of `|f|` the distribution
    /// function is constant, so the supremum is attained at some `λ = |f_i|`.
    pub fn weak_lp_norm(&self, f: &Func, p: f64) -> Result<f64> {
        self.check(f)?;
        if p.is_nan() || p < 1.0 {
            return Err(invalid("p", format!("weak-Lp exponent must be >= 1, got {p}")));
        }
        Ok(self.weak_lp_unchecked(f, p))
    }

    pub(crate) fn weak_lp_unchecked(&self, f: &Func, p: f64) -> f64 {
        let mut levels: Vec<(f64, f64)> = f
            .iter()
            .zip(self.measure.iter())
            .map(|(x, m)| (x.abs(), *m))
            .collect();
        levels.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut best = 0.0_f64;
        let mut mass = 0.0;
        let mut k = 0;
        while k < levels.len() {
            let level = levels[k].0;
            // Absorb ties so the mass is m({|f| >= level}).
            while k < levels.len() && levels[k].0 == level {
                mass += levels[k].1;
                k += 1;
            }
            if level > 0.0 {
                best = best.max(level * mass.powf(1.0 / p));
            }
        }
        best
    }
}

/// A real function on a finite space, stored by point index.
#[derive(Debug, Clone, PartialEq)]
pub struct Func(Vec<f64>);

impl Func {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self(vec![c; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Func {
        Func(self.0.iter().map(|&x| f(x)).collect())
    }

    pub fn zip_map(&self, other: &Func, f: impl Fn(f64, f64) -> f64) -> Func {
        debug_assert_eq!(self.len(), other.len());
        Func(self.0.iter().zip(&other.0).map(|(&a, &b)| f(a, b)).collect())
    }

    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |acc, x| acc.max(x.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }

    /// `true` iff `self ≤ other + slack` pointwise.
    pub fn le_with_slack(&self, other: &Func, slack: f64) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| *a <= *b + slack)
    }

    pub fn max_abs_diff(&self, other: &Func) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }
}

impl From<Vec<f64>> for Func {
    fn from(v: Vec<f64>) -> Self {
        Func(v)
    }
}

impl Index<usize> for Func {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for Func {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl Add for &Func {
    type Output = Func;
    fn add(self, rhs: &Func) -> Func {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &Func {
    type Output = Func;
    fn sub(self, rhs: &Func) -> Func {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Mul<f64> for &Func {
    type Output = Func;
    fn mul(self, s: f64) -> Func {
        self.map(|x| s * x)
    }
}

impl Neg for &Func {
    type Output = Func;
    fn neg(self) -> Func {
        self.map(|x| -x)
    }
}

/// A subset of the point set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubsetMask(Vec<bool>);

impl SubsetMask {
    pub fn new(members: Vec<bool>) -> Self {
        Self(members)
    }

    pub fn empty(n: usize) -> Self {
        Self(vec![false; n])
    }

    pub fn full(n: usize) -> Self {
        Self(vec![true; n])
    }

    pub fn singleton(n: usize, i: usize) -> Self {
        let mut m = vec![false; n];
        m[i] = true;
        Self(m)
    }

    pub fn from_indices(n: usize, idx: &[usize]) -> Self {
        let mut m = vec![false; n];
        for &i in idx {
            m[i] = true;
        }
        Self(m)
    }

    /// Bit `i` of `bits` decides membership of point `i`.
    pub fn from_bits(n: usize, bits: u64) -> Self {
        Self((0..n).map(|i| bits >> i & 1 == 1).collect())
    }

    pub fn bits(&self) -> u64 {
        self.indices().fold(0u64, |acc, i| acc | 1 << i)
    }

    /// `{i : |f_i| ≥ λ}`.
    pub fn level_set(f: &Func, lambda: f64) -> Self {
        Self(f.iter().map(|x| x.abs() >= lambda).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        !self.0.iter().any(|&b| b)
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn members(&self) -> &[bool] {
        &self.0
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    pub fn is_subset_of(&self, other: &SubsetMask) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| !a || *b)
    }

    pub fn indicator(&self) -> Func {
        Func(self.0.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
    }
}

fn same_len(u: &Func, v: &Func) -> Result<()> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            got: v.len(),
        });
    }
    Ok(())
}

/// Pointwise minimum `u ∧ v`.
pub fn meet(u: &Func, v: &Func) -> Result<Func> {
    same_len(u, v)?;
    Ok(u.zip_map(v, f64::min))
}

/// Pointwise maximum `u ∨ v`.
pub fn join(u: &Func, v: &Func) -> Result<Func> {
    same_len(u, v)?;
    Ok(u.zip_map(v, f64::max))
}

/// `(-c) ∨ u ∧ c`.
pub fn truncate(u: &Func, c: f64) -> Result<Func> {
    if c.is_nan() || c < 0.0 {
        return Err(invalid("c", format!("truncation level must be >= 0, got {c}")));
    }
    Ok(u.map(|x| x.clamp(-c, c)))
}

fn pos(x: f64) -> f64 {
    x.max(0.0)
}

fn neg_part(x: f64) -> f64 {
    (-x).max(0.0)
}

/// The pair `(v + w, u - w)` with `w = ½((u-v+α)₊ - (u-v-α)₋)`.
///
/// `x₋ = max(-x, 0)`, so `x = x₊ - x₋`. Where `|u - v| ≤ α` the correction
/// equals `u - v` and the pair is `(u, v)`; elsewhere both outputs lie between
/// `u` and `v`. The sum `a + b = u + v` is preserved.
pub fn median_combination(u: &Func, v: &Func, alpha: f64) -> Result<(Func, Func)> {
    same_len(u, v)?;
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(invalid("alpha", format!("must be > 0, got {alpha}")));
    }
    let w = u.zip_map(v, |a, b| {
        let d = a - b;
        0.5 * (pos(d + alpha) - neg_part(d - alpha))
    });
    Ok((v + &w, u - &w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn f(v: &[f64]) -> Func {
        Func::new(v.to_vec())
    }

    #[test]
    fn lattice_examples() {
        assert_eq!(meet(&f(&[1., 0.]), &f(&[0., 1.])).unwrap(), f(&[0., 0.]));
        assert_eq!(join(&f(&[1., 0.]), &f(&[0., 1.])).unwrap(), f(&[1., 1.]));
        let u = f(&[0.3, -2.0, 7.0]);
        assert_eq!(meet(&u, &u).unwrap(), u);
        assert!(matches!(
            meet(&f(&[1.0]), &f(&[1.0, 2.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn truncate_examples() {
        assert_eq!(truncate(&f(&[3., -1., 2.]), 2.).unwrap(), f(&[2., -1., 2.]));
        assert_eq!(truncate(&f(&[3., -1., 2.]), 0.).unwrap(), f(&[0., 0., 0.]));
        assert_eq!(truncate(&f(&[0.5, -0.5]), 1.).unwrap(), f(&[0.5, -0.5]));
        assert!(truncate(&f(&[1.0]), -0.1).is_err());
    }

    #[test]
    fn median_combination_examples() {
        let u = f(&[0.4, -1.2]);
        let (a, b) = median_combination(&u, &u, 1.0).unwrap();
        assert_eq!((a, b), (u.clone(), u));

        let (a, b) = median_combination(&f(&[2.]), &f(&[0.]), 1.).unwrap();
        assert_eq!((a[0], b[0]), (1.5, 0.5));
        let (a, b) = median_combination(&f(&[0.]), &f(&[2.]), 1.).unwrap();
        assert_eq!((a[0], b[0]), (0.5, 1.5));

        assert!(median_combination(&u_one(), &u_one(), 0.0).is_err());
    }

    fn u_one() -> Func {
        f(&[1.0])
    }

    #[test]
    fn lp_norm_examples() {
        let s = FiniteMeasuredSpace::new(vec![1., 1.]).unwrap();
        assert_eq!(s.lp_norm(&Func::zeros(2), 3.0).unwrap(), 0.0);
        assert!((s.lp_norm(&f(&[3., 4.]), 2.).unwrap() - 5.0).abs() < 1e-15);
        let s = FiniteMeasuredSpace::new(vec![1., 2.]).unwrap();
        assert_eq!(s.lp_norm(&f(&[1., 1.]), 1.).unwrap(), 3.0);
        assert_eq!(s.lp_norm(&f(&[1., -4.]), f64::INFINITY).unwrap(), 4.0);
        assert!(s.lp_norm(&f(&[1., 1.]), 0.5).is_err());
    }

    #[test]
    fn space_rejects_bad_weights() {
        assert!(FiniteMeasuredSpace::new(vec![]).is_err());
        assert!(FiniteMeasuredSpace::new(vec![1.0, 0.0]).is_err());
        assert!(FiniteMeasuredSpace::new(vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn distribution_examples() {
        let s = FiniteMeasuredSpace::new(vec![1., 2., 1.]).unwrap();
        let g = f(&[3., -1., 2.]);
        assert_eq!(s.distribution_function(&g, 2.).unwrap(), 2.0);
        assert_eq!(s.distribution_function(&g, 0.).unwrap(), 4.0);
        assert_eq!(s.distribution_function(&g, 3.5).unwrap(), 0.0);
        assert!(s.distribution_function(&g, -1.0).is_err());
    }

    #[test]
    fn weak_lp_examples() {
        let s = FiniteMeasuredSpace::new(vec![1., 1.]).unwrap();
        assert_eq!(s.weak_lp_norm(&Func::zeros(2), 4.).unwrap(), 0.0);
        assert!((s.weak_lp_norm(&f(&[2., 1.]), 4.).unwrap() - 2.0).abs() < 1e-15);

        let s = FiniteMeasuredSpace::new(vec![0.5, 2.0, 1.5]).unwrap();
        let a = SubsetMask::from_indices(3, &[0, 2]);
        let ind = a.indicator();
        let expected = s.distribution_function(&ind, 1.0).unwrap().powf(1.0 / 3.0);
        assert!((s.weak_lp_norm(&ind, 3.).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 2.0f64.powf(1.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn subset_bits_roundtrip() {
        let a = SubsetMask::from_indices(5, &[0, 3]);
        assert_eq!(a.bits(), 0b01001);
        assert_eq!(SubsetMask::from_bits(5, a.bits()), a);
        assert!(a.is_subset_of(&SubsetMask::full(5)));
        assert!(!SubsetMask::full(5).is_subset_of(&a));
    }

    fn vec_and_weights() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
        (1usize..8).prop_flat_map(|n| {
            (
                prop::collection::vec(-10.0..10.0f64, n),
                prop::collection::vec(-10.0..10.0f64, n),
                prop::collection::vec(0.05..5.0f64, n),
            )
        })
    }

    proptest! {
        #[test]
        fn median_preserves_sum((u, v, _) in vec_and_weights(), alpha in 0.01..20.0f64) {
            let (u, v) = (Func::new(u), Func::new(v));
            let (a, b) = median_combination(&u, &v, alpha).unwrap();
            for i in 0..u.len() {
                prop_assert!((a[i] + b[i] - u[i] - v[i]).abs() <= 1e-12 * (1.0 + u[i].abs() + v[i].abs()));
            }
        }

        #[test]
        fn lattice_ops_nonexpansive_in_sup((u, v, w) in vec_and_weights(), c in 0.0..5.0f64) {
            let (u, v, w) = (Func::new(u), Func::new(v), Func::new(w));
            let d = u.max_abs_diff(&v);
            prop_assert!(meet(&u, &w).unwrap().max_abs_diff(&meet(&v, &w).unwrap()) <= d);
            prop_assert!(join(&u, &w).unwrap().max_abs_diff(&join(&v, &w).unwrap()) <= d);
            prop_assert!(truncate(&u, c).unwrap().max_abs_diff(&truncate(&v, c).unwrap()) <= d);
            let hi = join(&u, &v).unwrap();
            prop_assert!(truncate(&u, c).unwrap().le_with_slack(&truncate(&hi, c).unwrap(), 0.0));
        }

        #[test]
        fn weak_lp_below_strong_lp((u, _, m) in vec_and_weights(), p in 1.0..8.0f64) {
            let s = FiniteMeasuredSpace::new(m).unwrap();
            let u = Func::new(u);
            let weak = s.weak_lp_norm(&u, p).unwrap();
            let strong = s.lp_norm(&u, p).unwrap();
            prop_assert!(weak <= strong * (1.0 + 1e-12));
        }

        #[test]
        fn distribution_nonincreasing((u, _, m) in vec_and_weights(), a in 0.0..10.0f64, b in 0.0..10.0f64) {
            let s = FiniteMeasuredSpace::new(m).unwrap();
            let u = Func::new(u);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(s.distribution_function(&u, hi).unwrap() <= s.distribution_function(&u, lo).unwrap());
        }

        #[test]
        fn lp_norm_homogeneous((u, _, m) in vec_and_weights(), p in 1.0..6.0f64, sc in -5.0..5.0f64) {
            let s = FiniteMeasuredSpace::new(m).unwrap();
            let u = Func::new(u);
            let lhs = s.lp_norm(&(&u * sc), p).unwrap();
            let rhs = sc.abs() * s.lp_norm(&u, p).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1e-300));
        }
    }
}
