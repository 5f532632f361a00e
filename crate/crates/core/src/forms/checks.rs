//! Sampled checks of the defining inequalities of a Dirichlet form.

use super::FormInstance;
use crate::error::{invalid, Result};
use crate::report::{InequalityReport, ReportBuilder};
use crate::sampling::Sampler;
use crate::space::{join, median_combination, meet, Func};

/// `E(u ∧ v) + E(u ∨ v) ≤ E(u) + E(v)` for an arbitrary functional.
pub fn check_submodularity_of(
    name: &str,
    energy: impl Fn(&Func) -> f64,
    u: &Func,
    v: &Func,
    tol: f64,
) -> Result<InequalityReport> {
    let lo = meet(u, v)?;
    let hi = join(u, v)?;
    let mut b = ReportBuilder::new(name, tol);
    b.push(energy(&lo) + energy(&hi), energy(u) + energy(v), || {
        vec![u.clone(), v.clone()]
    });
    Ok(b.finish())
}

pub fn check_submodularity(
    form: &FormInstance,
    u: &Func,
    v: &Func,
    tol: f64,
) -> Result<InequalityReport> {
    form.space().check(u)?;
    form.space().check(v)?;
    check_submodularity_of("submodularity", |w| form.energy(w), u, v, tol)
}

/// `E(a) + E(b) ≤ E(u) + E(v)` for `(a, b) = median_combination(u, v, α)`.
pub fn check_truncation_property_of(
    name: &str,
    energy: impl Fn(&Func) -> f64,
    u: &Func,
    v: &Func,
    alpha: f64,
    tol: f64,
) -> Result<InequalityReport> {
    let (a, b) = median_combination(u, v, alpha)?;
    let mut r = ReportBuilder::new(name, tol);
    r.constant(alpha);
    r.push(energy(&a) + energy(&b), energy(u) + energy(v), || {
        vec![u.clone(), v.clone()]
    });
    Ok(r.finish())
}

pub fn check_truncation_property(
    form: &FormInstance,
    u: &Func,
    v: &Func,
    alpha: f64,
    tol: f64,
) -> Result<InequalityReport> {
    form.space().check(u)?;
    form.space().check(v)?;
    check_truncation_property_of("truncation", |w| form.energy(w), u, v, alpha, tol)
}

/// `E(0) = 0` and `|E(u) - E(-u)| ≤ tol·(1 + E(u))` on sampled `u`.
pub fn check_evenness(form: &FormInstance, samples: usize, seed: u64, tol: f64) -> InequalityReport {
    check_evenness_of("evenness", |u| form.energy(u), form.n(), samples, seed, tol)
}

fn check_evenness_of(
    name: &str,
    energy: impl Fn(&Func) -> f64,
    n: usize,
    samples: usize,
    seed: u64,
    tol: f64,
) -> InequalityReport {
    let mut b = ReportBuilder::new(name, tol);
    let zero = Func::zeros(n);
    b.push(energy(&zero).abs(), 0.0, || vec![zero.clone()]);
    let mut s = Sampler::new(seed);
    for _ in 0..samples {
        let u = s.mixture(n);
        let e = energy(&u);
        let lhs = (e - energy(&-&u)).abs() / (1.0 + e);
        b.push(lhs, 0.0, || vec![u.clone()]);
    }
    b.finish()
}

/// Growth type at most `r`: `E(λu) ≤ λ^r E(u)` for every `λ ≥ 1`, checked on
/// sampled `u` with relative tolerance `1e-9`.
pub fn check_growth_type(
    form: &FormInstance,
    r: f64,
    lambdas: &[f64],
    samples: usize,
    seed: u64,
) -> Result<InequalityReport> {
    if !(r >= 2.0) {
        return Err(invalid("r", format!("growth exponent must be >= 2, got {r}")));
    }
    if let Some(l) = lambdas.iter().find(|l| !(**l >= 1.0)) {
        return Err(invalid("lambda", format!("growth factors must be >= 1, got {l}")));
    }
    let mut b = ReportBuilder::new("growth_type", 1e-9);
    b.constant(r);
    let mut s = Sampler::new(seed);
    for _ in 0..samples {
        let u = s.mixture(form.n());
        let e = form.energy(&u);
        for &lambda in lambdas {
            let lhs = form.energy(&(&u * lambda));
            b.push(lhs, lambda.powf(r) * e, || vec![u.clone()]);
        }
    }
    Ok(b.finish())
}

/// Midpoint-type convexity `E(tu + (1-t)v) ≤ tE(u) + (1-t)E(v)`.
pub fn check_convexity(form: &FormInstance, samples: usize, seed: u64, tol: f64) -> InequalityReport {
    let mut b = ReportBuilder::new("convexity", tol);
    let mut s = Sampler::new(seed);
    for _ in 0..samples {
        let u = s.mixture(form.n());
        let v = s.mixture(form.n());
        let t = s.uniform(0.0, 1.0);
        let w = u.zip_map(&v, |a, c| t * a + (1.0 - t) * c);
        let rhs = t * form.energy(&u) + (1.0 - t) * form.energy(&v);
        b.push(form.energy(&w), rhs, || vec![u.clone(), v.clone()]);
    }
    b.finish()
}

/// `E(u) + ⟨∇E(u), v - u⟩ ≤ E(v)`.
pub fn check_subgradient_inequality(
    form: &FormInstance,
    samples: usize,
    seed: u64,
    tol: f64,
) -> InequalityReport {
    let mut b = ReportBuilder::new("subgradient", tol);
    let mut s = Sampler::new(seed);
    for _ in 0..samples {
        let u = s.mixture(form.n());
        let v = s.mixture(form.n());
        let g = form.grad(&u);
        let lhs = form.energy(&u) + form.space().inner(&g, &(&v - &u));
        b.push(lhs, form.energy(&v), || vec![u.clone(), v.clone()]);
    }
    b.finish()
}

/// Pairs used by the sampled lattice suites: all ordered pairs of distinct
/// unit indicators first, then mixture draws.
fn lattice_pairs(n: usize, samples: usize, seed: u64) -> Vec<(Func, Func, f64)> {
    let mut out = Vec::with_capacity(samples);
    'outer: for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            if out.len() >= samples {
                break 'outer;
            }
            let mut u = Func::zeros(n);
            let mut v = Func::zeros(n);
            u[i] = 1.0;
            v[j] = 1.0;
            out.push((u, v, 0.5));
        }
    }
    let mut s = Sampler::new(seed);
    while out.len() < samples {
        let u = s.mixture(n);
        let v = if s.index(4) == 0 {
            // nearby pairs exercise the |u - v| < α branch
            u.zip_map(&s.gaussian(n), |a, g| a + 0.1 * g)
        } else {
            s.mixture(n)
        };
        let alpha = s.log_uniform(1e-3, 1e2);
        out.push((u, v, alpha));
    }
    out
}

fn lattice_suite(
    prefix: &str,
    energy: &dyn Fn(&Func) -> f64,
    n: usize,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Vec<InequalityReport> {
    let pairs = lattice_pairs(n, samples, seed);
    let mut sub = ReportBuilder::new(format!("{prefix}submodularity"), tol);
    let mut trunc = ReportBuilder::new(format!("{prefix}truncation"), tol);
    for (u, v, alpha) in &pairs {
        let eu_ev = energy(u) + energy(v);
        let lo = u.zip_map(v, f64::min);
        let hi = u.zip_map(v, f64::max);
        sub.push(energy(&lo) + energy(&hi), eu_ev, || vec![u.clone(), v.clone()]);
        let (a, b) = median_combination(u, v, *alpha).expect("alpha > 0 and equal lengths");
        trunc.push(energy(&a) + energy(&b), eu_ev, || vec![u.clone(), v.clone()]);
    }
    vec![
        sub.finish(),
        trunc.finish(),
        check_evenness_of(&format!("{prefix}evenness"), energy, n, samples, seed ^ 0xe7e7, tol),
    ]
}

/// Submodularity, truncation, evenness and convexity of `E` on `samples`
/// seeded draws each.
pub fn check_dirichlet_properties(
    form: &FormInstance,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Vec<InequalityReport> {
    let mut out = lattice_suite("", &|u| form.energy(u), form.n(), samples, seed, tol);
    out.push(check_convexity(form, samples, seed ^ 0xc0c0, tol));
    out
}

/// The same lattice checks for `E₁ = ‖·‖² + E`.
pub fn check_dirichlet_properties_e1(
    form: &FormInstance,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Vec<InequalityReport> {
    lattice_suite("e1_", &|u| form.energy_e1(u), form.n(), samples, seed, tol)
}
