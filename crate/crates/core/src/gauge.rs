//! Minkowski gauges of the sublevel sets `{E₁ ≤ 1}` and `{E ≤ 1}`.
//!
//! `λ ↦ F(u/λ)` is nonincreasing for convex `F` with `F(0) = 0`, so the gauge
//! `inf{λ > 0 : F(u/λ) ≤ 1}` is found by bracketing and bisection.

use crate::error::{Error, Result};
use crate::forms::{check_growth_type, FormInstance};
use crate::report::{InequalityReport, ReportBuilder};
use crate::sampling::Sampler;
use crate::space::Func;

pub const DEFAULT_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaugeResult {
    /// Midpoint of the final bracket; `0` when the gauge vanishes.
    pub value: f64,
    /// `F(u/hi) ≤ 1 < F(u/lo)` whenever `value > 0`.
    pub bracket: (f64, f64),
    pub evals: usize,
}

fn bisect(f: impl Fn(&Func) -> f64, u: &Func, l2: f64, rel_tol: f64) -> GaugeResult {
    let atol = 1e-14 * l2;
    if u.is_zero() {
        return GaugeResult {
            value: 0.0,
            bracket: (0.0, 0.0),
            evals: 0,
        };
    }
    let mut evals = 0;
    let mut above = |lambda: f64| {
        evals += 1;
        f(&(u * (1.0 / lambda))) > 1.0
    };
    let mut hi = l2.max(1.0);
    while above(hi) {
        hi *= 2.0;
    }
    let mut lo = 0.5 * hi;
    loop {
        if lo < atol {
            // F(u/λ) ≤ 1 all the way down: the gauge vanishes.
            return GaugeResult {
                value: 0.0,
                bracket: (0.0, lo),
                evals,
            };
        }
        if above(lo) {
            break;
        }
        hi = lo;
        lo *= 0.5;
    }
    let rel_tol = rel_tol.max(4.0 * f64::EPSILON);
    loop {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= rel_tol * mid.max(atol) {
            break;
        }
        if above(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    GaugeResult {
        value: 0.5 * (lo + hi),
        bracket: (lo, hi),
        evals,
    }
}

/// `‖u‖_D = inf{λ > 0 : E₁(u/λ) ≤ 1}`.
pub fn dirichlet_norm(form: &FormInstance, u: &Func, rel_tol: f64) -> Result<GaugeResult> {
    form.space().check(u)?;
    Ok(norm_result(form, u, rel_tol))
}

/// `|u|_D = inf{λ > 0 : E(u/λ) ≤ 1}`; zero along null directions of `E`.
pub fn dirichlet_seminorm(form: &FormInstance, u: &Func, rel_tol: f64) -> Result<GaugeResult> {
    form.space().check(u)?;
    Ok(seminorm_result(form, u, rel_tol))
}

pub(crate) fn norm_result(form: &FormInstance, u: &Func, rel_tol: f64) -> GaugeResult {
    bisect(|v| form.energy_e1(v), u, form.space().l2_norm(u), rel_tol)
}

pub(crate) fn seminorm_result(form: &FormInstance, u: &Func, rel_tol: f64) -> GaugeResult {
    bisect(|v| form.energy(v), u, form.space().l2_norm(u), rel_tol)
}

/// Unchecked `‖u‖_D` at the default tolerance.
pub(crate) fn norm(form: &FormInstance, u: &Func) -> f64 {
    norm_result(form, u, DEFAULT_REL_TOL).value
}

pub(crate) fn seminorm(form: &FormInstance, u: &Func) -> f64 {
    seminorm_result(form, u, DEFAULT_REL_TOL).value
}

/// `‖u ∧ v‖_D ≤ ‖u‖_D + ‖v‖_D` and `‖(-c) ∨ u ∧ c‖_D ≤ ‖u‖_D` on sampled
/// `(u, v, c)`, relative tolerance `1e-8`.
pub fn check_lattice_norm_inequalities(
    form: &FormInstance,
    samples: usize,
    seed: u64,
) -> InequalityReport {
    let n = form.n();
    let mut b = ReportBuilder::new("lattice_norm", 1e-8);
    let mut s = Sampler::new(seed);
    for _ in 0..samples {
        let u = s.mixture(n);
        let v = if s.index(8) == 0 { u.clone() } else { s.mixture(n) };
        let nu = norm(form, &u);
        let nv = norm(form, &v);
        let lo = u.zip_map(&v, f64::min);
        let hi = u.zip_map(&v, f64::max);
        b.push(norm(form, &lo), nu + nv, || vec![u.clone(), v.clone()]);
        b.push(norm(form, &hi), nu + nv, || vec![u.clone(), v.clone()]);
        let c = s.uniform(0.0, 1.2 * u.sup_norm());
        let t = u.map(|x| x.clamp(-c, c));
        b.push(norm(form, &t), nu, || vec![u.clone()]);
    }
    b.finish()
}

/// Empirical constants `c⁻ ≤ ‖u‖_D / (‖u‖_{L²} + |u|_D) ≤ c⁺` over sampled
/// `u ≠ 0`.
///
/// The ratio always lies in `[1/2, 1]`: `‖u‖_{L²}` and `|u|_D` are each at
/// most `‖u‖_D`, and convexity of `E₁` at `λ = ‖u‖_{L²} + |u|_D` gives
/// `E₁(u/λ) ≤ 1`. The report compares `c⁺/c⁻` with that bound of 2.
pub fn check_norm_equivalence(form: &FormInstance, samples: usize, seed: u64) -> InequalityReport {
    let n = form.n();
    let mut s = Sampler::new(seed);
    let mut c_minus = f64::INFINITY;
    let mut c_plus = 0.0_f64;
    let mut counted = 0;
    for _ in 0..samples {
        let u = s.mixture(n);
        if u.is_zero() {
            continue;
        }
        let denom = form.space().l2_norm(&u) + seminorm(form, &u);
        let ratio = norm(form, &u) / denom;
        c_minus = c_minus.min(ratio);
        c_plus = c_plus.max(ratio);
        counted += 1;
    }
    let cond = c_plus / c_minus;
    let mut r = InequalityReport::single("norm_equivalence", cond, 2.0, 1e-8)
        .with_constant(cond)
        .with_note(format!("c_minus={c_minus:e}"))
        .with_note(format!("c_plus={c_plus:e}"));
    r.samples = counted;
    r.pass &= counted > 0 && c_minus > 0.0 && c_plus.is_finite();
    r
}

/// `‖u‖_D^r ≤ E₁(u)` for sampled `u` rescaled into the unit ball of `D`.
///
/// Requires growth type at most `r`, verified first with
/// [`check_growth_type`]; a failing form yields [`Error::HypothesisViolated`].
pub fn check_growth_lemma(
    form: &FormInstance,
    r: f64,
    samples: usize,
    seed: u64,
) -> Result<InequalityReport> {
    let growth = check_growth_type(form, r, &[1.0, 1.5, 2.0, 4.0, 16.0], samples.min(200), seed)?;
    if !growth.pass {
        return Err(Error::HypothesisViolated(format!(
            "form is not of growth type at most {r}: {} > {}",
            growth.lhs, growth.rhs
        )));
    }
    let n = form.n();
    let mut b = ReportBuilder::new("growth_lemma", 1e-9);
    b.constant(r);
    let zero = Func::zeros(n);
    b.push(0.0, form.energy_e1(&zero), || vec![zero.clone()]);
    let mut s = Sampler::new(seed ^ 0x6a09);
    for k in 0..samples {
        let u = s.mixture(n);
        if u.is_zero() {
            continue;
        }
        let target = if k % 8 == 0 { 1.0 } else { s.uniform(0.0, 1.0) };
        let v = &u * (target / norm(form, &u));
        let nv = norm(form, &v);
        b.push(nv.powf(r), form.energy_e1(&v), || vec![v.clone()]);
    }
    Ok(b.finish())
}
