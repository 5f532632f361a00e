//! Gradient flow of `E` by implicit Euler (minimizing movements), its
//! contraction properties and the `L² → L^p` smoothing experiment.

use rayon::prelude::*;

use crate::embed::poincare_constant;
use crate::error::{invalid, Error, Result};
use crate::forms::FormInstance;
use crate::gauge::norm;
use crate::report::{InequalityReport, ReportBuilder};
use crate::sampling::Sampler;
use crate::solver::SolverConfig;
use crate::space::Func;

/// Relative tolerance of the per-step dissipation inequality.
pub const DISSIPATION_TOL: f64 = 1e-8;
/// Relative tolerance of the contraction and order checks.
pub const CONTRACTION_TOL: f64 = 1e-7;
/// Slack allowed between the training fit and held-out ratios.
pub const HELD_OUT_SLACK: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepPolicy {
    Uniform,
    /// `dt_{n+1} = ratio · dt_n`, scaled so the steps sum to `t_end`.
    Geometric { ratio: f64 },
}

impl StepPolicy {
    /// Step sizes summing to `t_end`.
    pub fn steps(&self, t_end: f64, steps: usize) -> Result<Vec<f64>> {
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(invalid("t_end", format!("must be finite and > 0, got {t_end}")));
        }
        if steps == 0 {
            return Err(invalid("steps", "must be >= 1"));
        }
        match *self {
            StepPolicy::Uniform => Ok(vec![t_end / steps as f64; steps]),
            StepPolicy::Geometric { ratio } => {
                if !(ratio > 0.0 && ratio.is_finite()) {
                    return Err(invalid("ratio", format!("must be finite and > 0, got {ratio}")));
                }
                let w: Vec<f64> = (0..steps).map(|k| ratio.powi(k as i32)).collect();
                let total: f64 = w.iter().sum();
                Ok(w.into_iter().map(|x| t_end * x / total).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowTrace {
    pub times: Vec<f64>,
    pub states: Vec<Func>,
    pub step_policy: StepPolicy,
    pub energy_values: Vec<f64>,
}

impl FlowTrace {
    pub fn last(&self) -> &Func {
        self.states.last().expect("trace holds the initial datum")
    }
}

fn step(form: &FormInstance, dt: f64, u: &Func, cfg: &SolverConfig) -> Result<Func> {
    Ok(form.prox_solve(dt, u, None, cfg)?.x)
}

/// Implicit Euler `u_{n+1} = prox(dt_n, u_n)` from `u0` up to `t_end`.
pub fn evolve(
    form: &FormInstance,
    u0: &Func,
    t_end: f64,
    steps: usize,
    policy: StepPolicy,
    cfg: &SolverConfig,
) -> Result<FlowTrace> {
    form.space().check(u0)?;
    let dts = policy.steps(t_end, steps)?;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut energy_values = Vec::with_capacity(steps + 1);
    let mut t = 0.0;
    let mut u = u0.clone();
    times.push(t);
    energy_values.push(form.energy(&u));
    states.push(u.clone());
    for (k, dt) in dts.iter().enumerate() {
        u = step(form, *dt, &u, cfg)?;
        t = if k + 1 == steps { t_end } else { t + dt };
        times.push(t);
        energy_values.push(form.energy(&u));
        states.push(u.clone());
    }
    Ok(FlowTrace {
        times,
        states,
        step_policy: policy,
        energy_values,
    })
}

/// States at the increasing checkpoints `times`, each segment between
/// consecutive checkpoints (starting from 0) split into `steps_per_segment`
/// uniform steps. Two calls with the same grid share every step size.
pub fn evolve_checkpoints(
    form: &FormInstance,
    u0: &Func,
    times: &[f64],
    steps_per_segment: usize,
    cfg: &SolverConfig,
) -> Result<Vec<Func>> {
    form.space().check(u0)?;
    validate_grid(times)?;
    if steps_per_segment == 0 {
        return Err(invalid("steps_per_segment", "must be >= 1"));
    }
    let mut out = Vec::with_capacity(times.len());
    let mut u = u0.clone();
    let mut prev = 0.0;
    for &t in times {
        let dt = (t - prev) / steps_per_segment as f64;
        for _ in 0..steps_per_segment {
            u = step(form, dt, &u, cfg)?;
        }
        out.push(u.clone());
        prev = t;
    }
    Ok(out)
}

fn validate_grid(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(invalid("times", "empty grid"));
    }
    let mut prev = 0.0;
    for &t in times {
        if !(t > prev && t.is_finite()) {
            return Err(invalid("times", "must be finite, positive and strictly increasing"));
        }
        prev = t;
    }
    Ok(())
}

/// `n` log-spaced points from `t0` to `t1`.
pub fn log_grid(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![t1];
    }
    let (a, b) = (t0.ln(), t1.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// `E(u_{n+1}) + ‖u_{n+1} - u_n‖²/(2dt) ≤ E(u_n)` at every step.
pub fn check_dissipation(form: &FormInstance, trace: &FlowTrace) -> InequalityReport {
    let mut acc = ReportBuilder::new("energy_dissipation", DISSIPATION_TOL);
    for k in 1..trace.states.len() {
        let dt = trace.times[k] - trace.times[k - 1];
        let d = &trace.states[k] - &trace.states[k - 1];
        let lhs = trace.energy_values[k] + form.space().l2_norm_sq(&d) / (2.0 * dt);
        acc.push(lhs, trace.energy_values[k - 1], || {
            vec![trace.states[k - 1].clone()]
        });
    }
    acc.finish()
}

/// `‖u_{n+1}‖_{L²} ≤ ‖u_n‖_{L²}` along the trace.
pub fn check_l2_decay(form: &FormInstance, trace: &FlowTrace) -> InequalityReport {
    let mut acc = ReportBuilder::new("l2_decay", DISSIPATION_TOL);
    for k in 1..trace.states.len() {
        let space = form.space();
        acc.push(
            space.l2_norm(&trace.states[k]),
            space.l2_norm(&trace.states[k - 1]),
            || vec![trace.states[k - 1].clone()],
        );
    }
    acc.finish()
}

/// Step-halving ratio `‖u_N - u_{2N}‖ / (2‖u_{2N} - u_{4N}‖)` at `t_end`
/// with uniform steps; close to 1 for a first-order scheme. `None` if the
/// finer difference vanishes.
pub fn richardson_ratio(
    form: &FormInstance,
    u0: &Func,
    t_end: f64,
    steps: usize,
    cfg: &SolverConfig,
) -> Result<Option<f64>> {
    let end = |k: usize| -> Result<Func> {
        Ok(evolve(form, u0, t_end, k, StepPolicy::Uniform, cfg)?
            .last()
            .clone())
    };
    let (a, b, c) = (end(steps)?, end(2 * steps)?, end(4 * steps)?);
    let space = form.space();
    let d1 = space.l2_norm(&(&a - &b));
    let d2 = space.l2_norm(&(&b - &c));
    if d2 == 0.0 {
        return Ok(None);
    }
    Ok(Some(d1 / (2.0 * d2)))
}

pub const CONTRACTION_EXPONENTS: [f64; 4] = [1.0, 2.0, 4.0, f64::INFINITY];

fn exponent_label(p: f64) -> String {
    if p.is_infinite() {
        "inf".to_string()
    } else {
        format!("{p}")
    }
}

/// Seeded pairs for [`contraction_checks`]: even indices are unrelated
/// draws, odd indices are ordered pairs `u ≤ v`.
pub fn contraction_pairs(n: usize, count: usize, seed: u64) -> Vec<(Func, Func)> {
    let mut s = Sampler::new(seed);
    (0..count)
        .map(|k| {
            let u = s.mixture(n);
            if k % 2 == 0 {
                (u, s.mixture(n))
            } else {
                let bump = s.mixture(n).map(f64::abs);
                let v = &u + &bump;
                (u, v)
            }
        })
        .collect()
}

/// For every pair and checkpoint: `‖T_t u0 - T_t v0‖_{L^p} ≤ ‖u0 - v0‖_{L^p}`
/// at `p ∈ {1, 2, 4, ∞}`, and `T_t u0 ≤ T_t v0` whenever `u0 ≤ v0`.
/// Returns one report per exponent followed by the order report.
pub fn contraction_checks(
    form: &FormInstance,
    pairs: &[(Func, Func)],
    times: &[f64],
    steps_per_segment: usize,
    cfg: &SolverConfig,
) -> Result<Vec<InequalityReport>> {
    validate_grid(times)?;
    let flows = pairs
        .par_iter()
        .map(|(u, v)| {
            Ok((
                evolve_checkpoints(form, u, times, steps_per_segment, cfg)?,
                evolve_checkpoints(form, v, times, steps_per_segment, cfg)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let space = form.space();
    let mut out = Vec::new();
    for p in CONTRACTION_EXPONENTS {
        let mut acc = ReportBuilder::new(
            format!("contraction_l{}", exponent_label(p)),
            CONTRACTION_TOL,
        );
        acc.constant(1.0);
        for ((u, v), (tu, tv)) in pairs.iter().zip(&flows) {
            let initial = space.lp_norm(&(u - v), p)?;
            for (a, b) in tu.iter().zip(tv) {
                acc.push(space.lp_norm(&(a - b), p)?, initial, || {
                    vec![u.clone(), v.clone()]
                });
            }
        }
        out.push(acc.finish());
    }
    let mut acc = ReportBuilder::new("order_preservation", CONTRACTION_TOL);
    for ((u, v), (tu, tv)) in pairs.iter().zip(&flows) {
        if !u.le_with_slack(v, 0.0) {
            continue;
        }
        let scale = u.sup_norm().max(v.sup_norm());
        for (a, b) in tu.iter().zip(tv) {
            let excess = a
                .iter()
                .zip(b.iter())
                .map(|(x, y)| x - y)
                .fold(0.0_f64, f64::max);
            acc.push(excess / (1.0 + scale), 0.0, || vec![u.clone(), v.clone()]);
        }
    }
    out.push(acc.finish());
    Ok(out)
}

/// `C₁` for `‖u‖_D^σ ≤ C₁ E(u)` on a `σ`-homogeneous form without kernel:
/// `‖u‖_D ≤ ‖u‖_{L²} + |u|_D ≤ (C_P + 1)|u|_D` and `|u|_D^σ = E(u)`.
pub fn smoothing_c1(
    form: &FormInstance,
    sigma: f64,
    samples: usize,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<f64> {
    match form.homogeneity() {
        Some(d) if d == sigma => {}
        Some(d) => {
            return Err(invalid(
                "sigma",
                format!("form is {d}-homogeneous, sigma = {sigma} needs an explicit C1"),
            ))
        }
        None => {
            return Err(invalid(
                "sigma",
                "form is not homogeneous; supply C1 explicitly",
            ))
        }
    }
    let cp = poincare_constant(form, samples, seed, cfg)?;
    Ok((cp + 1.0).powf(sigma))
}

/// Sampled `‖u‖_D^σ ≤ C₁ E(u)`.
pub fn check_smoothing_hypothesis(
    form: &FormInstance,
    sigma: f64,
    c1: f64,
    samples: usize,
    seed: u64,
) -> InequalityReport {
    let n = form.n();
    let mut s = Sampler::new(seed);
    let mut acc = ReportBuilder::new("smoothing_hypothesis", 1e-9);
    acc.constant(c1);
    for _ in 0..samples {
        let u = s.mixture(n);
        acc.push(norm(form, &u).powf(sigma), c1 * form.energy(&u), || {
            vec![u.clone()]
        });
    }
    acc.finish()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingParams {
    /// Target exponent of `‖T_t u‖_{L^p}`.
    pub p: f64,
    pub sigma: f64,
    pub c1: f64,
    /// Checkpoints, e.g. [`log_grid`]`(0.01, 10, 13)`.
    pub times: Vec<f64>,
    pub steps_per_segment: usize,
    pub train: usize,
    pub held_out: usize,
    /// Training samples refined by local search.
    pub refine: usize,
    pub hypothesis_samples: usize,
    pub seed: u64,
}

impl SmoothingParams {
    pub fn new(p: f64, sigma: f64, c1: f64, seed: u64) -> Self {
        Self {
            p,
            sigma,
            c1,
            times: log_grid(0.01, 10.0, 13),
            steps_per_segment: 8,
            train: 200,
            held_out: 200,
            refine: 4,
            hypothesis_samples: 1000,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingRow {
    pub sample: usize,
    pub held_out: bool,
    pub t: f64,
    pub lp_norm: f64,
    pub l2_initial: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingResult {
    pub hypothesis: InequalityReport,
    pub k_emp: f64,
    pub held_out_max: f64,
    /// Held-out maximum against `K_emp·(1 + HELD_OUT_SLACK)`.
    pub report: InequalityReport,
    pub rows: Vec<SmoothingRow>,
}

/// `R(u0, t) = ‖T_t u0‖_{L^p} t^σ / ‖u0‖_{L²}^{2/σ}` on the grid, with the
/// rows it is computed from. `u0 = 0` gives `R ≡ 0`.
pub fn smoothing_ratios(
    form: &FormInstance,
    u0: &Func,
    params: &SmoothingParams,
    cfg: &SolverConfig,
) -> Result<Vec<(f64, f64, f64, f64)>> {
    let space = form.space();
    let l2 = space.l2_norm(u0);
    let states = evolve_checkpoints(form, u0, &params.times, params.steps_per_segment, cfg)?;
    params
        .times
        .iter()
        .zip(&states)
        .map(|(&t, u)| {
            let lp = space.lp_norm(u, params.p)?;
            let ratio = if l2 == 0.0 {
                0.0
            } else {
                lp * t.powf(params.sigma) / l2.powf(2.0 / params.sigma)
            };
            Ok((t, lp, l2, ratio))
        })
        .collect()
}

fn max_ratio(rows: &[(f64, f64, f64, f64)]) -> f64 {
    rows.iter().map(|r| r.3).fold(0.0, f64::max)
}

/// Fits `K_emp` as the largest `R` over a training sample set (refined by a
/// coordinate search around the worst samples) and checks a disjoint
/// held-out set against `K_emp·(1 + 0.05)`.
///
/// The hypothesis `‖u‖_D^σ ≤ C₁ E(u)` is checked first; a violation is an
/// [`Error::HypothesisViolated`] naming the offending `u`.
pub fn smoothing_experiment(
    form: &FormInstance,
    params: &SmoothingParams,
    cfg: &SolverConfig,
) -> Result<SmoothingResult> {
    if !(params.p >= 2.0) {
        return Err(invalid("p", format!("must be >= 2, got {}", params.p)));
    }
    if !(params.sigma > 0.0 && params.c1 >= 0.0) {
        return Err(invalid("sigma", "need sigma > 0 and C1 >= 0"));
    }
    validate_grid(&params.times)?;
    let hypothesis = check_smoothing_hypothesis(
        form,
        params.sigma,
        params.c1,
        params.hypothesis_samples,
        params.seed ^ 0x4859_5054,
    );
    if !hypothesis.pass {
        return Err(Error::HypothesisViolated(format!(
            "‖u‖_D^{} > {} E(u) at u = {:?}",
            params.sigma,
            params.c1,
            hypothesis
                .counterexample
                .first()
                .map(|u| u.values().to_vec())
                .unwrap_or_default()
        )));
    }
    let n = form.n();
    let draw = |seed: u64, count: usize| {
        let mut s = Sampler::new(seed);
        (0..count).map(|_| s.mixture(n)).collect::<Vec<_>>()
    };
    let train = draw(params.seed, params.train);
    let held = draw(params.seed.wrapping_add(0x9e37_79b9_7f4a_7c15), params.held_out);
    let run = |set: &[Func]| -> Result<Vec<Vec<(f64, f64, f64, f64)>>> {
        set.par_iter()
            .map(|u| smoothing_ratios(form, u, params, cfg))
            .collect()
    };
    let train_rows = run(&train)?;
    let held_rows = run(&held)?;

    let mut order: Vec<(f64, usize)> = train_rows
        .iter()
        .enumerate()
        .map(|(i, r)| (max_ratio(r), i))
        .collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut k_emp = order.first().map(|x| x.0).unwrap_or(0.0);
    let refined = order
        .iter()
        .take(params.refine)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&&(r0, i)| refine(form, &train[i], r0, params, cfg))
        .collect::<Result<Vec<f64>>>()?;
    for r in refined {
        k_emp = k_emp.max(r);
    }

    let held_out_max = held_rows.iter().map(|r| max_ratio(r)).fold(0.0, f64::max);
    let mut acc = ReportBuilder::new("smoothing_held_out", 0.0);
    acc.constant(k_emp);
    for (u, r) in held.iter().zip(&held_rows) {
        acc.push(max_ratio(r), k_emp * (1.0 + HELD_OUT_SLACK), || vec![u.clone()]);
    }
    acc.note(format!("K_emp = {k_emp}"));

    let mut rows = Vec::new();
    for (held_out, set) in [(false, &train_rows), (true, &held_rows)] {
        for (sample, r) in set.iter().enumerate() {
            rows.extend(r.iter().map(|&(t, lp_norm, l2_initial, ratio)| SmoothingRow {
                sample,
                held_out,
                t,
                lp_norm,
                l2_initial,
                ratio,
            }));
        }
    }
    Ok(SmoothingResult {
        hypothesis,
        k_emp,
        held_out_max,
        report: acc.finish(),
        rows,
    })
}

/// Coordinate and scale search increasing `max_t R(u, t)` from `u`.
fn refine(
    form: &FormInstance,
    u: &Func,
    r0: f64,
    params: &SmoothingParams,
    cfg: &SolverConfig,
) -> Result<f64> {
    const BUDGET: usize = 120;
    let n = u.len();
    let mut best = u.clone();
    let mut val = r0;
    let mut step = 0.25;
    let mut evals = 0;
    while step > 1e-3 && evals < BUDGET {
        let mut improved = false;
        for i in 0..=n {
            for sign in [1.0, -1.0] {
                let scale = best.sup_norm();
                let trial = if i == n {
                    &best * (1.0 + sign * step)
                } else {
                    let mut t = best.clone();
                    t[i] += sign * step * scale;
                    t
                };
                if trial.is_zero() {
                    continue;
                }
                evals += 1;
                let v = max_ratio(&smoothing_ratios(form, &trial, params, cfg)?);
                if v > val {
                    best = trial;
                    val = v;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok(val)
}

/// For sampled `u` with `f = ∇E(u)`: `E(u) ≤ ⟨f, u⟩` and
/// `‖u‖_{L^p}^σ ≤ C₁ C₂^σ ⟨f, u⟩`.
pub fn gagliardo_nirenberg_check(
    form: &FormInstance,
    p: f64,
    sigma: f64,
    c1: f64,
    c2: f64,
    samples: usize,
    seed: u64,
) -> Result<InequalityReport> {
    let space = form.space();
    let n = form.n();
    let mut s = Sampler::new(seed);
    let constant = c1 * c2.powf(sigma);
    let mut pairing = ReportBuilder::new("energy_below_pairing", 1e-10);
    let mut gn = ReportBuilder::new("gagliardo_nirenberg", 1e-9);
    gn.constant(constant);
    for _ in 0..samples {
        let u = s.mixture(n);
        let f = form.grad(&u);
        let pair = space.inner(&f, &u);
        pairing.push(form.energy(&u), pair, || vec![u.clone()]);
        gn.push(space.lp_norm(&u, p)?.powf(sigma), constant * pair, || {
            vec![u.clone()]
        });
    }
    Ok(InequalityReport::all(
        "gagliardo_nirenberg_chain",
        &[pairing.finish(), gn.finish()],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capacity::CapacityCache;
    use crate::embed::lp_embedding_constant;
    use crate::forms::{path_edges, ring_edges, Edge, FormSpec};
    use crate::space::FiniteMeasuredSpace;
    use proptest::prelude::*;

    fn two_point(killing: Option<Vec<f64>>) -> FormInstance {
        let mut spec = FormSpec::p_energy(2.0, vec![Edge::new(0, 1, 1.0)]);
        if let Some(k) = killing {
            spec = spec.with_killing(k, 2.0);
        }
        FormInstance::new(FiniteMeasuredSpace::uniform(2).unwrap(), spec).unwrap()
    }

    fn grounded_ring(n: usize, p: f64) -> FormInstance {
        let mut kill = vec![0.0; n];
        kill[0] = 1.0;
        FormInstance::new(
            FiniteMeasuredSpace::uniform(n).unwrap(),
            FormSpec::p_energy(p, ring_edges(n)).with_killing(kill, p),
        )
        .unwrap()
    }

    #[test]
    fn two_point_mode_decay() {
        let form = two_point(None);
        let u0 = Func::new(vec![1.0, -1.0]);
        let steps = 1 << 10;
        let tr = evolve(&form, &u0, 1.0, steps, StepPolicy::Uniform, &SolverConfig::default())
            .unwrap();
        let euler = (1.0 + 2.0 / steps as f64).powi(-(steps as i32));
        let end = tr.last();
        assert!((end[0] - euler).abs() < 1e-8 * euler);
        assert!((end[1] + euler).abs() < 1e-8 * euler);
        let exact = (-2.0f64).exp();
        assert!((end[0] - exact).abs() / exact < 2e-3);
        assert_eq!(tr.times.len(), steps + 1);
        assert_eq!(tr.states[0], u0);
    }

    #[test]
    fn equilibria_stay_put() {
        let form = two_point(None);
        let cfg = SolverConfig::default();
        let z = evolve(&form, &Func::zeros(2), 1.0, 8, StepPolicy::Uniform, &cfg).unwrap();
        assert!(z.states.iter().all(Func::is_zero));
        let c = Func::constant(2, 0.7);
        let tr = evolve(&form, &c, 3.0, 8, StepPolicy::Geometric { ratio: 1.5 }, &cfg).unwrap();
        for s in &tr.states {
            assert!(s.max_abs_diff(&c) < 1e-12);
        }
    }

    #[test]
    fn geometric_steps_sum_to_horizon() {
        let dts = StepPolicy::Geometric { ratio: 1.3 }.steps(2.0, 10).unwrap();
        assert!((dts.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        assert!((dts[1] / dts[0] - 1.3).abs() < 1e-12);
        assert!(StepPolicy::Uniform.steps(1.0, 0).is_err());
    }

    #[test]
    fn semigroup_property_is_exact() {
        let form = grounded_ring(6, 3.0);
        let cfg = SolverConfig::default();
        let u0 = Func::new(vec![1.0, -0.5, 2.0, 0.3, 0.0, -1.2]);
        let whole = evolve(&form, &u0, 0.75, 12, StepPolicy::Uniform, &cfg).unwrap();
        let first = evolve(&form, &u0, 0.25, 4, StepPolicy::Uniform, &cfg).unwrap();
        let second = evolve(&form, first.last(), 0.5, 8, StepPolicy::Uniform, &cfg).unwrap();
        assert_eq!(whole.last(), second.last());
    }

    #[test]
    fn dissipation_and_l2_decay() {
        let form = grounded_ring(8, 3.0);
        let cfg = SolverConfig::default();
        let mut s = Sampler::new(3);
        for _ in 0..5 {
            let u0 = s.mixture(8);
            for policy in [StepPolicy::Uniform, StepPolicy::Geometric { ratio: 1.2 }] {
                let tr = evolve(&form, &u0, 2.0, 20, policy, &cfg).unwrap();
                assert!(check_dissipation(&form, &tr).pass);
                assert!(check_l2_decay(&form, &tr).pass);
                for w in tr.energy_values.windows(2) {
                    assert!(w[1] <= w[0] * (1.0 + 1e-9) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn richardson_first_order() {
        let form = grounded_ring(6, 3.0);
        let u0 = Func::new(vec![1.0, -0.5, 2.0, 0.3, 0.0, -1.2]);
        let r = richardson_ratio(&form, &u0, 1.0, 32, &SolverConfig::default())
            .unwrap()
            .unwrap();
        assert!((0.3..=3.0).contains(&r), "{r}");
    }

    #[test]
    fn two_point_contraction_factors() {
        let form = two_point(None);
        let cfg = SolverConfig::default();
        let u = Func::new(vec![0.5, -0.5]);
        let v = Func::zeros(2);
        let times = [0.5, 1.0];
        let tu = evolve_checkpoints(&form, &u, &times, 16, &cfg).unwrap();
        for (k, t) in tu.iter().enumerate() {
            let factor = (1.0 + 2.0 * 0.5 / 16.0f64).powi(-16 * (k as i32 + 1));
            assert!((t[0] - 0.5 * factor).abs() < 1e-10);
        }
        let reports = contraction_checks(&form, &[(u, v)], &times, 16, &cfg).unwrap();
        assert_eq!(reports.len(), 5);
        assert!(reports.iter().all(|r| r.pass));
    }

    #[test]
    fn sampled_contraction_p3() {
        let form = grounded_ring(8, 3.0);
        let pairs = contraction_pairs(8, 12, 5);
        let reports =
            contraction_checks(&form, &pairs, &[0.1, 0.5, 2.0], 6, &SolverConfig::default())
                .unwrap();
        for r in &reports {
            assert!(r.pass, "{r:?}");
        }
        assert!(reports[4].samples > 0);
    }

    #[test]
    fn identical_pairs_stay_together() {
        let form = grounded_ring(5, 2.0);
        let u = Func::new(vec![1.0, 2.0, -1.0, 0.0, 3.0]);
        let r = contraction_checks(&form, &[(u.clone(), u)], &[1.0], 4, &SolverConfig::default())
            .unwrap();
        for rep in &r[..4] {
            assert_eq!(rep.lhs, 0.0);
        }
    }

    #[test]
    fn smoothing_zero_datum() {
        let form = two_point(Some(vec![1.0, 1.0]));
        let params = SmoothingParams::new(4.0, 2.0, 1.0, 0);
        let rows = smoothing_ratios(&form, &Func::zeros(2), &params, &SolverConfig::default())
            .unwrap();
        assert!(rows.iter().all(|r| r.3 == 0.0));
    }

    #[test]
    fn smoothing_ratio_killed_two_point() {
        // Modes (1,1) and (1,-1) decay at rates 1 and 3 under implicit Euler.
        let form = two_point(Some(vec![1.0, 1.0]));
        let mut params = SmoothingParams::new(4.0, 2.0, 1.0, 0);
        params.times = vec![0.01, 0.1, 1.0, 10.0];
        params.steps_per_segment = 10;
        let u0 = Func::new(vec![3.0, 1.0]);
        let rows = smoothing_ratios(&form, &u0, &params, &SolverConfig::default()).unwrap();
        let (mut a, mut b) = (2.0, 1.0);
        let mut prev = 0.0;
        for (t, lp, l2, r) in rows {
            let dt = (t - prev) / 10.0;
            a *= (1.0 + dt).powi(-10);
            b *= (1.0 + 3.0 * dt).powi(-10);
            prev = t;
            let (x, y): (f64, f64) = (a + b, a - b);
            let expect_lp = (x.powi(4) + y.powi(4)).powf(0.25);
            assert!((lp - expect_lp).abs() < 1e-8 * (1.0 + expect_lp));
            assert!((l2 - 10f64.sqrt()).abs() < 1e-14);
            assert!((r - expect_lp * t * t / 10f64.sqrt()).abs() < 1e-7 * (1.0 + r));
            assert!(r.is_finite());
        }
    }

    #[test]
    fn smoothing_c1_requires_homogeneity() {
        let form = FormInstance::new(
            FiniteMeasuredSpace::uniform(3).unwrap(),
            FormSpec::p_energy(2.0, path_edges(3)).with_killing(vec![1.0, 0.0, 0.0], 3.0),
        )
        .unwrap();
        assert!(smoothing_c1(&form, 2.0, 10, 0, &SolverConfig::default()).is_err());
    }

    #[test]
    fn hypothesis_violation_is_an_error() {
        let form = grounded_ring(6, 2.0);
        let params = SmoothingParams::new(4.0, 2.0, 1e-6, 1);
        match smoothing_experiment(&form, &params, &SolverConfig::default()) {
            Err(Error::HypothesisViolated(msg)) => assert!(msg.contains("u =")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn held_out_generalizes_quadratic() {
        let form = grounded_ring(8, 2.0);
        let cfg = SolverConfig::default();
        let c1 = smoothing_c1(&form, 2.0, 200, 1, &cfg).unwrap();
        let mut params = SmoothingParams::new(4.0, 2.0, c1, 11);
        params.train = 60;
        params.held_out = 60;
        let res = smoothing_experiment(&form, &params, &cfg).unwrap();
        assert!(res.hypothesis.pass);
        assert!(res.report.pass, "{:?}", res.report);
        assert_eq!(res.rows.len(), 120 * params.times.len());
        assert!(res.k_emp > 0.0);
    }

    #[test]
    fn gn_chain_on_grounded_graph() {
        let form = grounded_ring(6, 3.0);
        let cfg = SolverConfig::default();
        let c1 = smoothing_c1(&form, 3.0, 200, 2, &cfg).unwrap();
        let cache = CapacityCache::new(&form, 1e-8, cfg.clone());
        let c2 = lp_embedding_constant(&cache, 4.0).unwrap();
        let r = gagliardo_nirenberg_check(&form, 4.0, 3.0, c1, c2, 200, 9).unwrap();
        assert!(r.pass, "{r:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn euler_identity_pairing(v in prop::collection::vec(-5.0f64..5.0, 6)) {
            // ⟨∇E(u), u⟩ = p E(u) for a p-homogeneous form.
            let form = grounded_ring(6, 3.0);
            let u = Func::new(v);
            let pair = form.space().inner(&form.grad(&u), &u);
            let e = form.energy(&u);
            prop_assert!((pair - 3.0 * e).abs() <= 1e-9 * (1.0 + pair.abs()));
        }

        #[test]
        fn single_step_is_l1_contraction(
            a in prop::collection::vec(-3.0f64..3.0, 5),
            b in prop::collection::vec(-3.0f64..3.0, 5),
            dt in 0.01f64..2.0,
        ) {
            let form = grounded_ring(5, 4.0);
            let cfg = SolverConfig::default();
            let (u, v) = (Func::new(a), Func::new(b));
            let (su, sv) = (step(&form, dt, &u, &cfg).unwrap(), step(&form, dt, &v, &cfg).unwrap());
            let sp = form.space();
            let before = sp.lp_norm(&(&u - &v), 1.0).unwrap();
            let after = sp.lp_norm(&(&su - &sv), 1.0).unwrap();
            prop_assert!(after <= before + 1e-7 * (1.0 + before));
        }
    }
}
