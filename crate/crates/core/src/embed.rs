//! Sobolev-type embeddings of the Dirichlet space against isocapacitary
//! constants, checked in both directions.
//!
//! Level sets use the closed convention `m_f(λ) = m({|f| ≥ λ})`.

use rayon::prelude::*;

use crate::capacity::CapacityCache;
use crate::error::{invalid, Error, Result};
use crate::forms::FormInstance;
use crate::gauge::{norm, seminorm};
use crate::report::{InequalityReport, ReportBuilder};
use crate::sampling::Sampler;
use crate::solver::SolverConfig;
use crate::space::{FiniteMeasuredSpace, Func, SubsetMask};

pub const DEFAULT_MAX_N: usize = 12;
pub const APPROX_SUBSETS: usize = 10_000;
/// Relative tolerance of the embedding checks.
pub const EMBED_TOL: f64 = 1e-6;

/// Largest sampled `‖f‖_{L²} / |f|_D`, refined by pattern search.
///
/// Forms with a null direction have no Poincaré inequality and yield
/// [`Error::KernelDetected`].
pub fn poincare_constant(
    form: &FormInstance,
    samples: usize,
    seed: u64,
    _cfg: &SolverConfig,
) -> Result<f64> {
    if let Some(null) = form.null_direction() {
        return Err(Error::KernelDetected {
            null_direction: null.into_values(),
        });
    }
    let n = form.n();
    let ratio = |f: &Func| -> Result<f64> {
        let semi = seminorm(form, f);
        if semi == 0.0 {
            return Err(Error::KernelDetected {
                null_direction: f.values().to_vec(),
            });
        }
        Ok(form.space().l2_norm(f) / semi)
    };
    let mut s = Sampler::new(seed);
    let mut pool: Vec<(f64, Func)> = Vec::with_capacity(samples + n);
    for i in 0..n {
        let mut e = Func::zeros(n);
        e[i] = 1.0;
        pool.push((ratio(&e)?, e));
    }
    for _ in 0..samples {
        let f = s.mixture(n);
        if f.is_zero() {
            continue;
        }
        pool.push((ratio(&f)?, f));
    }
    pool.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best = pool[0].0;
    for (r0, f0) in pool.into_iter().take(4) {
        let (r, _) = pattern_search(f0, r0, |f| ratio(f).unwrap_or(f64::INFINITY))?;
        best = best.max(r);
    }
    Ok(best)
}

/// Coordinate pattern search maximizing `objective`, including a scale move
/// for non-homogeneous forms.
fn pattern_search(
    mut f: Func,
    mut val: f64,
    objective: impl Fn(&Func) -> f64,
) -> Result<(f64, Func)> {
    let n = f.len();
    let mut step = 0.25 * f.sup_norm();
    let floor = 1e-7 * f.sup_norm();
    let mut evals = 0;
    while step > floor && evals < 4000 {
        let mut improved = false;
        for i in 0..=n {
            for sign in [1.0, -1.0] {
                let trial = if i == n {
                    &f * (1.0 + sign * step / f.sup_norm().max(f64::MIN_POSITIVE))
                } else {
                    let mut t = f.clone();
                    t[i] += sign * step;
                    t
                };
                evals += 1;
                if trial.is_zero() {
                    continue;
                }
                let v = objective(&trial);
                if v.is_infinite() {
                    return Err(Error::KernelDetected {
                        null_direction: trial.into_values(),
                    });
                }
                if v > val {
                    f = trial;
                    val = v;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok((val, f))
}

/// Forward and converse halves of an embedding equivalence.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingReport {
    /// Isocapacitary bound implies the embedding.
    pub forward: InequalityReport,
    /// The empirical embedding constant implies the isocapacitary bound.
    pub converse: InequalityReport,
    /// Constant derived from capacities.
    pub constant: f64,
    /// Largest sampled embedding ratio.
    pub empirical: f64,
}

impl EmbeddingReport {
    pub fn pass(&self) -> bool {
        self.forward.pass && self.converse.pass
    }
}

/// Seeded test functions: mixture draws plus capacity witnesses of all
/// singletons and of random subsets (every fifth draw).
pub fn test_functions(cache: &CapacityCache<'_>, samples: usize, seed: u64) -> Result<Vec<Func>> {
    let n = cache.form().n();
    let mut out = Vec::with_capacity(samples);
    for x in 0..n.min(samples) {
        out.push(cache.get(&SubsetMask::singleton(n, x))?.witness);
    }
    let mut s = Sampler::new(seed);
    while out.len() < samples {
        if out.len() % 5 == 0 {
            out.push(cache.get(&s.subset(n, true))?.witness);
        } else {
            let f = s.mixture(n);
            if !f.is_zero() {
                out.push(f);
            }
        }
    }
    Ok(out)
}

/// `‖f‖_∞ ≤ ‖f‖_D / min_x cap({x})` on sampled `f`, and conversely
/// `cap({x}) ≥ 1/C_emp` for the empirical constant
/// `C_emp = max ‖f‖_∞ / ‖f‖_D`.
pub fn linfty_embedding_check(
    cache: &CapacityCache<'_>,
    samples: usize,
    seed: u64,
) -> Result<EmbeddingReport> {
    let form = cache.form();
    let n = form.n();
    let (c_min, _) = cache.min_singleton()?;
    let mut fwd = ReportBuilder::new("linfty_embedding", EMBED_TOL);
    fwd.constant(1.0 / c_min);
    let mut c_emp = 0.0_f64;
    for f in test_functions(cache, samples, seed)? {
        let nd = norm(form, &f);
        let sup = f.sup_norm();
        c_emp = c_emp.max(sup / nd);
        fwd.push(sup, nd / c_min, || vec![f.clone()]);
    }
    let mut conv = ReportBuilder::new("linfty_isocapacity", EMBED_TOL);
    conv.constant(c_emp);
    for x in 0..n {
        let set = SubsetMask::singleton(n, x);
        conv.push(1.0 / c_emp, cache.value(&set)?, || vec![set.indicator()]);
    }
    Ok(EmbeddingReport {
        forward: fwd.finish(),
        converse: conv.finish(),
        constant: 1.0 / c_min,
        empirical: c_emp,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanEntry {
    pub set: SubsetMask,
    pub mass: f64,
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsocapScanResult {
    pub q: f64,
    /// `max m(A)^{1/q} / cap(A)` over the scanned sets.
    pub best_constant: f64,
    pub argmax_subset: SubsetMask,
    pub subsets_scanned: usize,
    /// `false` for the randomized mode, where `best_constant` is only a
    /// lower bound on the isocapacitary constant.
    pub exhaustive: bool,
    pub entries: Vec<ScanEntry>,
}

fn scan_sets(cache: &CapacityCache<'_>, q: f64, sets: Vec<SubsetMask>, exhaustive: bool) -> Result<IsocapScanResult> {
    if !(q >= 1.0 && q.is_finite()) {
        return Err(invalid("q", format!("exponent must be finite and >= 1, got {q}")));
    }
    let space = cache.form().space();
    let caps: Vec<Result<f64>> = sets.par_iter().map(|a| cache.value(a)).collect();
    let mut entries = Vec::with_capacity(sets.len());
    let mut best = (f64::NEG_INFINITY, 0usize);
    // Sequential reduction in set order keeps ties deterministic.
    for (k, (set, cap)) in sets.into_iter().zip(caps).enumerate() {
        let cap = cap?;
        let mass = space.mass(&set);
        let ratio = mass.powf(1.0 / q) / cap;
        if ratio > best.0 {
            best = (ratio, k);
        }
        entries.push(ScanEntry {
            set,
            mass,
            capacity: cap,
        });
    }
    Ok(IsocapScanResult {
        q,
        best_constant: best.0,
        argmax_subset: entries[best.1].set.clone(),
        subsets_scanned: entries.len(),
        exhaustive,
        entries,
    })
}

/// Exhaustive scan over the `2ⁿ - 1` nonempty subsets.
pub fn isocap_scan(cache: &CapacityCache<'_>, q: f64, max_n: usize) -> Result<IsocapScanResult> {
    let n = cache.form().n();
    if n > max_n || n >= 64 {
        return Err(Error::TooLarge { n, max_n });
    }
    let sets = (1..(1u64 << n)).map(|b| SubsetMask::from_bits(n, b)).collect();
    scan_sets(cache, q, sets, true)
}

/// Randomized scan over `count` seeded nonempty subsets plus all
/// singletons; the result is flagged non-exhaustive.
pub fn isocap_scan_approx(
    cache: &CapacityCache<'_>,
    q: f64,
    count: usize,
    seed: u64,
) -> Result<IsocapScanResult> {
    let n = cache.form().n();
    let mut s = Sampler::new(seed);
    let mut seen = std::collections::HashSet::new();
    let mut sets = Vec::new();
    for x in 0..n {
        let a = SubsetMask::singleton(n, x);
        seen.insert(a.clone());
        sets.push(a);
    }
    sets.push(SubsetMask::full(n));
    seen.insert(SubsetMask::full(n));
    for _ in 0..count {
        let a = s.subset(n, true);
        if seen.insert(a.clone()) {
            sets.push(a);
        }
    }
    scan_sets(cache, q, sets, false)
}

/// `‖f‖_{L^{p,w}} ≤ K ‖f‖_D` with `K` from the scan at exponent `p`, and the
/// converse `m(A) ≤ m_{u_A}(1) ≤ ‖u_A‖_{L^{p,w}}^p ≤ (C_emp cap(A))^p` through
/// the capacity witnesses `u_A`.
pub fn weak_lp_embedding_check(
    cache: &CapacityCache<'_>,
    p: f64,
    scan: &IsocapScanResult,
    samples: usize,
    seed: u64,
) -> Result<EmbeddingReport> {
    if !(p > 2.0) {
        return Err(invalid("p", format!("the weak-Lp embedding needs p > 2, got {p}")));
    }
    if scan.q != p {
        return Err(invalid("scan", format!("scan exponent {} differs from p = {p}", scan.q)));
    }
    let form = cache.form();
    let space = form.space();
    let k = scan.best_constant;
    let mut fwd = ReportBuilder::new("weak_lp_embedding", EMBED_TOL);
    fwd.constant(k);
    let mut c_emp = 0.0_f64;
    let mut sample = |f: &Func, fwd: &mut ReportBuilder| {
        let nd = norm(form, f);
        let weak = space.weak_lp_unchecked(f, p);
        c_emp = c_emp.max(weak / nd);
        fwd.push(weak, k * nd, || vec![f.clone()]);
    };
    let zero = Func::zeros(form.n());
    fwd.push(0.0, k * norm(form, &zero), || vec![zero.clone()]);
    for f in test_functions(cache, samples, seed)? {
        sample(&f, &mut fwd);
    }
    let mut witnesses = Vec::with_capacity(scan.entries.len());
    for e in &scan.entries {
        let w = cache.get(&e.set)?.witness;
        sample(&w, &mut fwd);
        witnesses.push(w);
    }
    let mut conv = ReportBuilder::new("weak_lp_isocapacity", EMBED_TOL);
    conv.constant(c_emp);
    for (e, w) in scan.entries.iter().zip(&witnesses) {
        let level_mass = space.distribution_unchecked(w, 1.0);
        let weak_p = space.weak_lp_unchecked(w, p).powf(p);
        conv.push(e.mass, level_mass, || vec![w.clone()]);
        conv.push(level_mass, weak_p, || vec![w.clone()]);
        conv.push(e.mass, (c_emp * e.capacity).powf(p), || vec![w.clone()]);
    }
    Ok(EmbeddingReport {
        forward: fwd.finish(),
        converse: conv.finish(),
        constant: k,
        empirical: c_emp,
    })
}

/// `q ∫₁^∞ m_f(λ) λ^{q-1} dλ`, integrated exactly between the breakpoints
/// `|f_i|` where `m_f` jumps.
pub fn layer_cake_tail(space: &FiniteMeasuredSpace, f: &Func, q: f64) -> f64 {
    let mut levels: Vec<(f64, f64)> = f
        .iter()
        .zip(space.measure())
        .filter(|(x, _)| x.abs() > 1.0)
        .map(|(x, m)| (x.abs(), *m))
        .collect();
    levels.sort_by(|a, b| b.0.total_cmp(&a.0));
    // On (b_{k+1}, b_k] the level set {|f| ≥ λ} holds the points with
    // |f| ≥ b_k, so m_f is constant there.
    let mut total = 0.0;
    let mut mass = 0.0;
    for k in 0..levels.len() {
        mass += levels[k].1;
        let top = levels[k].0;
        let bottom = levels.get(k + 1).map_or(1.0, |l| l.0);
        total += mass * (top.powf(q) - bottom.powf(q));
    }
    total
}

/// `∫_{|f|≥1} |f|^q dm = q ∫₁^∞ m_f(λ) λ^{q-1} dλ + m({|f| ≥ 1})`, with the
/// left side summed directly. Relative tolerance `1e-12`.
pub fn check_layer_cake(space: &FiniteMeasuredSpace, f: &Func, q: f64) -> Result<InequalityReport> {
    space.check(f)?;
    let direct: f64 = f
        .iter()
        .zip(space.measure())
        .filter(|(x, _)| x.abs() >= 1.0)
        .map(|(x, m)| m * x.abs().powf(q))
        .sum();
    let cake = layer_cake_tail(space, f, q) + space.distribution_unchecked(f, 1.0);
    let scale = direct.abs().max(cake.abs()).max(f64::MIN_POSITIVE);
    let mut r = ReportBuilder::new("layer_cake", 0.0);
    r.constant(q);
    r.push((direct - cake).abs() / scale, 1e-12, || vec![f.clone()]);
    let mut out = r.finish();
    out.lhs = direct;
    out.rhs = cake;
    out.margin = cake - direct;
    Ok(out)
}

pub fn check_layer_cake_suite(
    space: &FiniteMeasuredSpace,
    q: f64,
    samples: usize,
    seed: u64,
) -> InequalityReport {
    let mut s = Sampler::new(seed);
    let parts: Vec<InequalityReport> = (0..samples)
        .map(|_| {
            let f = s.mixture(space.n());
            check_layer_cake(space, &f, q).expect("sampled on this space")
        })
        .collect();
    let worst = parts
        .iter()
        .map(|r| (r.lhs - r.rhs).abs() / r.lhs.abs().max(r.rhs.abs()).max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    let mut out = InequalityReport::single("layer_cake", worst, 1e-12, 0.0).with_constant(q);
    out.samples = samples;
    out.pass = parts.iter().all(|r| r.pass);
    out
}

/// `∫|f|^q ≤ ‖f‖_D² + (q C^{q+ε} / ε) ‖f‖_D^{q+ε}` with `C` the isocapacitary
/// constant at exponent `q + ε`.
pub fn lq_embedding_check(
    cache: &CapacityCache<'_>,
    q: f64,
    p: f64,
    eps: f64,
    scan: &IsocapScanResult,
    samples: usize,
    seed: u64,
) -> Result<InequalityReport> {
    if !(q >= 2.0 && p > q && eps > 0.0 && q + eps < p) {
        return Err(invalid(
            "exponents",
            format!("need 2 <= q < q + eps < p, got q = {q}, eps = {eps}, p = {p}"),
        ));
    }
    let q_eps = q + eps;
    if (scan.q - q_eps).abs() > 1e-12 * q_eps {
        return Err(invalid("scan", format!("scan exponent {} differs from q + eps = {q_eps}", scan.q)));
    }
    let form = cache.form();
    let space = form.space();
    let c = scan.best_constant;
    let coeff = q * c.powf(q_eps) / eps;
    let mut b = ReportBuilder::new("lq_embedding", EMBED_TOL);
    b.constant(coeff);
    let zero = Func::zeros(form.n());
    b.push(0.0, 0.0, || vec![zero.clone()]);
    for f in test_functions(cache, samples, seed)? {
        let nd = norm(form, &f);
        let lhs = space.lp_integral(&f, q);
        b.push(lhs, nd * nd + coeff * nd.powf(q_eps), || vec![f.clone()]);
    }
    Ok(b.finish())
}

/// `C_emb` with `‖f‖_{L^p} ≤ C_emb ‖f‖_D`, from
/// `‖f‖_{L^p} ≤ m(X)^{1/p} ‖f‖_∞ ≤ m(X)^{1/p} ‖f‖_D / min_x cap({x})`,
/// inflated by the capacity tolerance.
pub fn lp_embedding_constant(cache: &CapacityCache<'_>, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(invalid("p", format!("must be >= 1, got {p}")));
    }
    let (c_min, _) = cache.min_singleton()?;
    let mass = cache.form().space().total_mass();
    let m = if p.is_infinite() { 1.0 } else { mass.powf(1.0 / p) };
    Ok(m / c_min * (1.0 + 10.0 * cache.outer_tol()))
}

/// `‖f‖_{L^p} ≤ C ‖f‖_D` on sampled `f`.
pub fn check_lp_embedding(
    cache: &CapacityCache<'_>,
    p: f64,
    constant: f64,
    samples: usize,
    seed: u64,
) -> Result<InequalityReport> {
    let form = cache.form();
    let mut b = ReportBuilder::new("lp_embedding", EMBED_TOL);
    b.constant(constant);
    for f in test_functions(cache, samples, seed)? {
        let lhs = form.space().lp_norm_unchecked(&f, p);
        b.push(lhs, constant * norm(form, &f), || vec![f.clone()]);
    }
    Ok(b.finish())
}
