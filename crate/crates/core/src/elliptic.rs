//! The resolvent equation `∇E(u) + λu = f` and the truncation argument that
//! bounds its solutions.
//!
//! With `ζ_k = u - (-k) ∨ u ∧ k` and `M(k)` the level sets of the solution,
//! the chain
//!
//! ```text
//! ‖ζ_k‖_D^r ≤ E₁(ζ_k) ≤ ∫_{M(k)} f² ≤ m(M(k))^{1-2/q} ‖f‖_q²
//! c (h-k)^r m(M(h))^{r/p} ≤ ‖ζ_k‖_D^r,          c = C_emb^{-r}
//! ```
//!
//! (the first line needs `‖ζ_k‖_D ≤ 1`) gives, keeping a spare factor 2,
//! `m(M(h)) ≤ Ĉ m(M(k))^β ‖f‖_q^{2p/r} / (h-k)^p` with
//! `Ĉ = (2/c)^{p/r}` and `β = (1 - 2/q) p/r`, and Stampacchia's lemma turns
//! that into an explicit level above which `M` is empty.

use crate::error::{invalid, Error, Result};
use crate::forms::{check_growth_type, FormInstance};
use crate::gauge::norm;
use crate::report::{InequalityReport, ReportBuilder};
use crate::sampling::Sampler;
use crate::solver::{Objective, Problem, SolverConfig};
use crate::space::Func;

#[derive(Debug, Clone, PartialEq)]
pub struct EllipticSolution {
    pub u: Func,
    pub lambda: f64,
    /// `‖∇E(u) + λu - f‖_{L²}`.
    pub residual: f64,
}

struct Resolvent<'a> {
    form: &'a FormInstance,
    lambda: f64,
    f: &'a Func,
}

impl Objective for Resolvent<'_> {
    fn value(&self, v: &Func) -> f64 {
        let sp = self.form.space();
        self.form.energy(v) + 0.5 * self.lambda * sp.l2_norm_sq(v) - sp.inner(self.f, v)
    }
    fn gradient(&self, v: &Func) -> Func {
        let g = self.form.grad(v);
        Func::new(
            (0..v.len())
                .map(|i| g[i] + self.lambda * v[i] - self.f[i])
                .collect(),
        )
    }
}

/// `u = argmin E(v) + (λ/2)‖v‖² - ⟨f, v⟩`, the solution of `∇E(u) + λu = f`.
/// The residual is below `grad_tol · (1 + ‖f‖_{L²})`.
pub fn resolve(form: &FormInstance, lambda: f64, f: &Func, cfg: &SolverConfig) -> Result<EllipticSolution> {
    resolve_warm(form, lambda, f, None, cfg)
}

pub fn resolve_warm(
    form: &FormInstance,
    lambda: f64,
    f: &Func,
    warm: Option<&Func>,
    cfg: &SolverConfig,
) -> Result<EllipticSolution> {
    form.space().check(f)?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid("lambda", format!("must be finite and > 0, got {lambda}")));
    }
    cfg.validate()?;
    if f.is_zero() {
        return Ok(EllipticSolution {
            u: Func::zeros(f.len()),
            lambda,
            residual: 0.0,
        });
    }
    let obj = Resolvent { form, lambda, f };
    let problem = Problem {
        objective: &obj,
        metric: form.space().measure(),
        lower: None,
    };
    let tol = cfg.grad_tol * (1.0 + form.space().l2_norm(f));
    let x0 = warm.cloned().unwrap_or_else(|| f * (1.0 / lambda));
    let out = problem.minimize(x0, tol, cfg, |_| false)?;
    Ok(EllipticSolution {
        u: out.x,
        lambda,
        residual: out.residual,
    })
}

/// Sampled properties of `f ↦ u`: nonexpansivity with factor `1/λ`
/// (monotonicity of `∇E` gives `λ‖u - v‖² ≤ ⟨f - g, u - v⟩`), order
/// preservation and `‖u‖_∞ ≤ ‖f‖_∞ / λ`.
pub fn check_resolvent_properties(
    form: &FormInstance,
    lambda: f64,
    samples: usize,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<Vec<InequalityReport>> {
    let sp = form.space();
    let n = form.n();
    let mut lip = ReportBuilder::new("resolvent_nonexpansive", 1e-8);
    lip.constant(1.0 / lambda);
    let mut order = ReportBuilder::new("resolvent_order", 1e-8);
    let mut sup = ReportBuilder::new("resolvent_linfty", 1e-8);
    sup.constant(1.0 / lambda);
    let mut s = Sampler::new(seed);
    for _ in 0..samples {
        let f = s.mixture(n);
        let g = if s.coin() {
            // ordered pair f ≤ g
            f.zip_map(&s.gaussian(n), |a, b| a + b.abs() * f.sup_norm().max(1.0))
        } else {
            s.mixture(n)
        };
        let u = resolve(form, lambda, &f, cfg)?.u;
        let v = resolve(form, lambda, &g, cfg)?.u;
        lip.push(sp.l2_norm(&(&u - &v)), sp.l2_norm(&(&f - &g)) / lambda, || {
            vec![f.clone(), g.clone()]
        });
        if f.le_with_slack(&g, 0.0) {
            let excess = (0..n).map(|i| u[i] - v[i]).fold(f64::NEG_INFINITY, f64::max);
            order.push(excess, 0.0, || vec![f.clone(), g.clone()]);
        }
        sup.push(u.sup_norm(), f.sup_norm() / lambda, || vec![f.clone()]);
    }
    Ok(vec![lip.finish(), order.finish(), sup.finish()])
}

/// Which level sets `M(k)` the truncation argument uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LevelConvention {
    /// `M(k) = {|u| ≥ k}` for the solution `u`.
    #[default]
    Solution,
    /// `M(k) = {f > k}` for the datum `f`.
    Datum,
}

impl LevelConvention {
    pub fn mask(self, u: &Func, f: &Func, k: f64) -> Vec<bool> {
        match self {
            Self::Solution => u.iter().map(|x| x.abs() >= k).collect(),
            Self::Datum => f.iter().map(|x| *x > k).collect(),
        }
    }
}

/// `ζ_k = u - (-k) ∨ u ∧ k`.
pub fn zeta(u: &Func, k: f64) -> Func {
    u.map(|x| x - x.clamp(-k, k))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetTrace {
    pub convention: LevelConvention,
    pub ks: Vec<f64>,
    /// `m(M(k))` per level.
    pub masses: Vec<f64>,
    /// `‖ζ_k‖_D` per level.
    pub zeta_norms: Vec<f64>,
    /// `E₁(ζ_k)` per level.
    pub zeta_e1: Vec<f64>,
}

pub fn level_set_trace(
    form: &FormInstance,
    u: &Func,
    f: &Func,
    ks: &[f64],
    convention: LevelConvention,
) -> Result<LevelSetTrace> {
    form.space().check(u)?;
    form.space().check(f)?;
    let mut sorted = ks.to_vec();
    if sorted.iter().any(|k| !(*k >= 0.0 && k.is_finite())) {
        return Err(invalid("ks", "levels must be finite and >= 0"));
    }
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let sp = form.space();
    let mut trace = LevelSetTrace {
        convention,
        ks: sorted.clone(),
        masses: Vec::new(),
        zeta_norms: Vec::new(),
        zeta_e1: Vec::new(),
    };
    for &k in &sorted {
        let z = zeta(u, k);
        let mask = convention.mask(u, f, k);
        trace.masses.push(
            sp.measure()
                .iter()
                .zip(&mask)
                .filter(|(_, &inside)| inside)
                .map(|(m, _)| m)
                .sum(),
        );
        trace.zeta_norms.push(norm(form, &z));
        trace.zeta_e1.push(form.energy_e1(&z));
    }
    Ok(trace)
}

/// `E₁(ζ_k) ≤ ⟨ζ_k, f⟩` for `u` solving `∇E(u) + 2u = f`.
pub fn energy_truncation_check(form: &FormInstance, u: &Func, f: &Func, k: f64) -> Result<InequalityReport> {
    form.space().check(u)?;
    form.space().check(f)?;
    if !(k >= 0.0) {
        return Err(invalid("k", format!("level must be >= 0, got {k}")));
    }
    let z = zeta(u, k);
    let mut b = ReportBuilder::new("energy_truncation", 1e-8);
    b.constant(k);
    b.push(form.energy_e1(&z), form.space().inner(&z, f), || vec![u.clone(), f.clone()]);
    Ok(b.finish())
}

/// Exponents and constants of the level-decay inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayConstants {
    pub q: f64,
    pub p_emb: f64,
    pub r: f64,
    pub c_emb: f64,
}

impl DecayConstants {
    fn validate(&self) -> Result<()> {
        if !(self.q >= 2.0) {
            return Err(invalid("q", format!("must be >= 2, got {}", self.q)));
        }
        if !(self.p_emb >= 2.0 && self.p_emb.is_finite()) {
            return Err(invalid("p_emb", format!("must be finite and >= 2, got {}", self.p_emb)));
        }
        if !(self.r >= 2.0) {
            return Err(invalid("r", format!("must be >= 2, got {}", self.r)));
        }
        if !(self.c_emb > 0.0 && self.c_emb.is_finite()) {
            return Err(invalid("c_emb", format!("must be finite and > 0, got {}", self.c_emb)));
        }
        Ok(())
    }

    /// `c = C_emb^{-r}` from `‖ζ‖_D^r ≥ c ‖ζ‖_{L^p}^r`.
    pub fn c(&self) -> f64 {
        self.c_emb.powf(-self.r)
    }

    /// `Ĉ = (2/c)^{p/r}`.
    pub fn c_hat(&self) -> f64 {
        (2.0 / self.c()).powf(self.p_emb / self.r)
    }

    /// `β = (1 - 2/q) p/r`; the argument closes when `β > 1`.
    pub fn beta(&self) -> f64 {
        (1.0 - 2.0 / self.q) * self.p_emb / self.r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelDecayReport {
    pub c_hat: f64,
    pub beta: f64,
    /// One aggregated report per step of the chain, then the decay
    /// inequality itself over pairs `h > k`.
    pub steps: Vec<InequalityReport>,
    /// Levels skipped because `‖ζ_k‖_D > 1`.
    pub skipped: Vec<f64>,
    pub trace: LevelSetTrace,
}

impl LevelDecayReport {
    pub fn pass(&self) -> bool {
        self.steps.iter().all(|r| r.pass)
    }

    pub fn decay(&self) -> &InequalityReport {
        self.steps.last().expect("decay report is always present")
    }
}

/// Runs the truncation chain on `u = resolve(2, f)` at the levels `ks`.
pub fn level_decay_check(
    form: &FormInstance,
    f: &Func,
    consts: DecayConstants,
    ks: &[f64],
    convention: LevelConvention,
    cfg: &SolverConfig,
) -> Result<LevelDecayReport> {
    consts.validate()?;
    let growth = check_growth_type(form, consts.r, &[1.0, 2.0, 4.0, 16.0], 100, 0x9a)?;
    if !growth.pass {
        return Err(Error::HypothesisViolated(format!(
            "form is not of growth type at most {}",
            consts.r
        )));
    }
    let u = resolve(form, 2.0, f, cfg)?.u;
    decay_chain(form, &u, f, consts, ks, convention)
}

fn decay_chain(
    form: &FormInstance,
    u: &Func,
    f: &Func,
    consts: DecayConstants,
    ks: &[f64],
    convention: LevelConvention,
) -> Result<LevelDecayReport> {
    let sp = form.space();
    let trace = level_set_trace(form, u, f, ks, convention)?;
    let DecayConstants { q, p_emb: p, r, .. } = consts;
    let c = consts.c();
    let c_hat = consts.c_hat();
    let beta = consts.beta();
    let f_q = sp.lp_norm_unchecked(f, q);
    let tol = 1e-8;

    let mut trunc = ReportBuilder::new("energy_truncation", tol);
    let mut young = ReportBuilder::new("young", tol);
    let mut growth = ReportBuilder::new("growth_lemma", tol);
    growth.constant(r);
    let mut holder = ReportBuilder::new("holder", tol);
    holder.constant(1.0 - 2.0 / q);
    let mut embed = ReportBuilder::new("embedding", tol);
    embed.constant(c);
    let mut decay = ReportBuilder::new("level_decay", tol);
    decay.constant(c_hat);
    decay.note(format!("beta={beta}"));
    decay.note(format!("beta>1:{}", beta > 1.0));

    let mut skipped = Vec::new();
    for (i, &k) in trace.ks.iter().enumerate() {
        if trace.zeta_norms[i] > 1.0 {
            skipped.push(k);
            continue;
        }
        let z = zeta(u, k);
        let mask = convention.mask(u, f, k);
        let e1 = trace.zeta_e1[i];
        let inputs = || vec![f.clone(), Func::constant(1, k)];
        trunc.push(e1, sp.inner(&z, f), inputs);
        let f2_on_m: f64 = (0..f.len())
            .filter(|&j| mask[j])
            .map(|j| sp.measure()[j] * f[j] * f[j])
            .sum();
        young.push(e1, f2_on_m, inputs);
        growth.push(trace.zeta_norms[i].powf(r), e1, inputs);
        holder.push(f2_on_m, trace.masses[i].powf(1.0 - 2.0 / q) * f_q * f_q, inputs);
        let zn_r = trace.zeta_norms[i].powf(r);
        for (j, &h) in trace.ks.iter().enumerate().skip(i + 1) {
            let m_h = trace.masses[j];
            embed.push(c * (h - k).powf(r) * m_h.powf(r / p), zn_r, inputs);
            let rhs = c_hat * trace.masses[i].powf(beta) * f_q.powf(2.0 * p / r) / (h - k).powf(p);
            decay.push(m_h, rhs, inputs);
        }
    }
    Ok(LevelDecayReport {
        c_hat,
        beta,
        steps: vec![
            trunc.finish(),
            young.finish(),
            growth.finish(),
            holder.finish(),
            embed.finish(),
            decay.finish(),
        ],
        skipped,
        trace,
    })
}

/// Level `d` beyond which every nonincreasing `φ ≥ 0` with
/// `φ(h) ≤ C φ(k)^β / (h-k)^α` for `h > k ≥ k₀` vanishes:
/// `d^α = C φ(k₀)^{β-1} 2^{αβ/(β-1)}`.
pub fn stampacchia_vanishing_level(c: f64, alpha: f64, beta: f64, phi0: f64) -> Result<f64> {
    if !(beta > 1.0) {
        return Err(invalid("beta", format!("Stampacchia's lemma needs beta > 1, got {beta}")));
    }
    if !(c > 0.0 && alpha > 0.0 && phi0 >= 0.0) {
        return Err(invalid("c, alpha, phi0", "need c > 0, alpha > 0 and phi0 >= 0"));
    }
    if phi0 == 0.0 {
        return Ok(0.0);
    }
    let log2_d = (c.log2() + (beta - 1.0) * phi0.log2() + alpha * beta / (beta - 1.0)) / alpha;
    Ok(log2_d.exp2())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StampacchiaRun {
    pub levels: Vec<f64>,
    /// `log₂ φ_i`; kept in log space because `φ^β` underflows long before
    /// the recursion settles.
    pub log2_values: Vec<f64>,
}

impl StampacchiaRun {
    pub fn last_value(&self) -> f64 {
        self.log2_values.last().map_or(0.0, |v| v.exp2())
    }
}

/// The saturating recursion `φ_{i+1} = C φ_i^β / (k_{i+1} - k_i)^α` on the
/// levels `k_i = k₀ + d (1 - 2^{-i})`. Stops once `φ ≤ floor`, once `φ`
/// exceeds `2⁶⁴ φ₀`, or after `steps` steps.
///
/// The recursion is unstable (errors in `log φ` grow by `β` per step), so a
/// run at exactly the vanishing level drifts on rounding alone; callers add a
/// relative margin to `d`.
pub fn simulate_stampacchia(
    c: f64,
    alpha: f64,
    beta: f64,
    phi0: f64,
    k0: f64,
    d: f64,
    floor: f64,
    steps: usize,
) -> StampacchiaRun {
    let mut levels = vec![k0];
    let mut log_phi = phi0.log2();
    let mut log2_values = vec![log_phi];
    let (log_floor, log_cap) = (floor.log2(), log_phi + 64.0);
    for i in 0..steps {
        if log_phi <= log_floor || log_phi > log_cap {
            break;
        }
        let j = i as f64 + 1.0;
        // log₂ of the gap d·2^{-j}
        let log_gap = d.log2() - j;
        log_phi = c.log2() + beta * log_phi - alpha * log_gap;
        levels.push(k0 + d * (1.0 - (-j).exp2()));
        log2_values.push(log_phi);
    }
    StampacchiaRun {
        levels,
        log2_values,
    }
}

/// Simulates the saturating recursion at the predicted level (plus `1e-12`
/// relative) and checks that `φ` falls below `1e-12` there, that it stays
/// under the closed form `φ₀ 2^{-iα/(β-1)}`, and that it blows up at `0.9 d`.
pub fn check_stampacchia(c: f64, alpha: f64, beta: f64, phi0: f64) -> Result<Vec<InequalityReport>> {
    let d = stampacchia_vanishing_level(c, alpha, beta, phi0)?;
    let floor = 1e-12;
    let inputs = || vec![Func::new(vec![c, alpha, beta, phi0])];
    let mut vanish = ReportBuilder::new("stampacchia_vanishing", 0.0);
    vanish.constant(d);
    let mut envelope = ReportBuilder::new("stampacchia_envelope", 1e-9);
    let mut sharp = ReportBuilder::new("stampacchia_sharpness", 0.0);
    if phi0 == 0.0 {
        vanish.push(0.0, floor, inputs);
    } else {
        let d_sim = d * (1.0 + 1e-12);
        let run = simulate_stampacchia(c, alpha, beta, phi0, 0.0, d_sim, floor, 100_000);
        vanish.push(run.last_value(), floor, inputs);
        vanish.push(*run.levels.last().expect("nonempty"), d_sim, inputs);
        for (i, lv) in run.log2_values.iter().enumerate() {
            let exact = phi0.log2() - i as f64 * alpha / (beta - 1.0);
            envelope.push(lv.exp2(), exact.exp2(), inputs);
        }
        let short = simulate_stampacchia(c, alpha, beta, phi0, 0.0, 0.9 * d, 0.0, 100_000);
        // diverged: φ ends above φ₀
        let last = *short.log2_values.last().expect("nonempty");
        sharp.push(phi0.log2(), last, inputs);
    }
    let mut out = vec![vanish.finish(), envelope.finish()];
    if phi0 > 0.0 {
        out.push(sharp.finish());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundednessCertificate {
    pub u_sup: f64,
    /// Smallest level with `‖ζ_k‖_D ≤ 1`.
    pub k0: f64,
    /// `m(M(k₀))`.
    pub phi0: f64,
    pub c_hat: f64,
    /// `Ĉ ‖f‖_q^{2p/r}`, the constant handed to Stampacchia's lemma.
    pub c_stampacchia: f64,
    pub alpha: f64,
    pub beta: f64,
    pub d: f64,
    /// `k₀ + d`.
    pub predicted: f64,
    /// `‖u‖_∞ ≤ k₀ + d`.
    pub report: InequalityReport,
    pub decay: LevelDecayReport,
}

/// Smallest `k ≥ 0` with `‖ζ_k‖_D ≤ 1`; `‖ζ_k‖_D` is nonincreasing in `k`
/// because `ζ_{k'}` is `ζ_k` minus a truncation of itself.
fn admissible_level(form: &FormInstance, u: &Func) -> f64 {
    if norm(form, u) <= 1.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, u.sup_norm());
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if norm(form, &zeta(u, mid)) <= 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Solves at `λ = 2`, assembles the constants of the truncation argument and
/// compares the level predicted by Stampacchia's lemma with `‖u‖_∞`.
pub fn boundedness_certificate(
    form: &FormInstance,
    f: &Func,
    consts: DecayConstants,
    cfg: &SolverConfig,
) -> Result<BoundednessCertificate> {
    consts.validate()?;
    let beta = consts.beta();
    if !(beta > 1.0) {
        return Err(Error::HypothesisViolated(format!(
            "(1 - 2/q) p/r = {beta} must exceed 1"
        )));
    }
    let u = resolve(form, 2.0, f, cfg)?.u;
    let u_sup = u.sup_norm();
    let k0 = admissible_level(form, &u);
    let sp = form.space();
    let phi0 = sp.distribution_unchecked(&u, k0);
    let c_hat = consts.c_hat();
    let p = consts.p_emb;
    let c_s = c_hat * sp.lp_norm_unchecked(f, consts.q).powf(2.0 * p / consts.r);
    let d = if phi0 == 0.0 || c_s == 0.0 {
        0.0
    } else {
        stampacchia_vanishing_level(c_s, p, beta, phi0)?
    };
    let predicted = k0 + d;
    let ks: Vec<f64> = (0..=16).map(|i| k0 + (u_sup - k0).max(0.0) * i as f64 / 16.0).collect();
    let decay = decay_chain(form, &u, f, consts, &ks, LevelConvention::Solution)?;
    let report = InequalityReport::single("boundedness", u_sup, predicted, 1e-12)
        .with_constant(c_s)
        .with_note(format!("k0={k0}"))
        .with_note(format!("d={d}"));
    Ok(BoundednessCertificate {
        u_sup,
        k0,
        phi0,
        c_hat,
        c_stampacchia: c_s,
        alpha: p,
        beta,
        d,
        predicted,
        report,
        decay,
    })
}

/// The resolvent identity in both parametrizations.
///
/// For the standard resolvent `J_λ = (I + λ∇E)^{-1}`:
/// `J_λ = J₂((2/λ) Id + (1 - 2/λ) J_λ)`. For the solution map
/// `R_λ f = u` of `∇E(u) + λu = f`: `R_λ = R₂(Id + (2 - λ) R_λ)`. Each
/// residual must be at most `tol · (1 + ‖f‖)`.
pub fn resolvent_identity_check(
    form: &FormInstance,
    lambda: f64,
    f: &Func,
    cfg: &SolverConfig,
) -> Result<Vec<InequalityReport>> {
    form.space().check(f)?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid("lambda", format!("must be finite and > 0, got {lambda}")));
    }
    let fine = SolverConfig {
        grad_tol: cfg.grad_tol.min(1e-12),
        ..cfg.clone()
    };
    let sp = form.space();
    let tol = 1e-8;
    let scale = 1.0 + sp.l2_norm(f);

    let j_lambda = form.prox(lambda, f, &fine)?;
    let mix = f.zip_map(&j_lambda, |a, b| (2.0 / lambda) * a + (1.0 - 2.0 / lambda) * b);
    let j_two = form.prox(2.0, &mix, &fine)?;
    let standard = InequalityReport::single(
        "resolvent_identity",
        sp.l2_norm(&(&j_lambda - &j_two)),
        0.0,
        0.0,
    );

    let r_lambda = resolve(form, lambda, f, &fine)?.u;
    let shifted = f.zip_map(&r_lambda, |a, b| a + (2.0 - lambda) * b);
    let r_two = resolve(form, 2.0, &shifted, &fine)?.u;
    let elliptic = InequalityReport::single(
        "elliptic_resolvent_identity",
        sp.l2_norm(&(&r_lambda - &r_two)),
        0.0,
        0.0,
    );
    Ok([standard, elliptic]
        .into_iter()
        .map(|mut r| {
            r.rhs = tol * scale;
            r.margin = r.rhs - r.lhs;
            r.pass = r.lhs <= r.rhs;
            r.tol = tol;
            r.constant_used = lambda;
            r
        })
        .collect())
}
