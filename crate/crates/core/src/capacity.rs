//! Norm-capacity `cap(A) = inf{‖u‖_D : u ≥ 1 on A}`.
//!
//! In the discrete topology every set is open, so the neighbourhood in the
//! usual definition can be taken to be `A` itself.
//!
//! `cap(A) ≤ t` iff `min{E₁(w) : w ≥ 1/t on A} ≤ 1`, so the value is found by
//! bisection on `t` with a projected-gradient feasibility oracle. The oracle
//! stops as soon as either an iterate with `E₁ ≤ 1` appears or the strong
//! convexity bound `E₁(y) ≥ E₁(w) + ⟨∇E₁(w), y - w⟩ + ‖y - w‖²` certifies
//! that the minimum exceeds 1.

use std::collections::HashMap;
use std::sync::Mutex;

use crate::error::{invalid, Error, Result};
use crate::forms::FormInstance;
use crate::gauge::norm;
use crate::report::{InequalityReport, ReportBuilder};
use crate::sampling::Sampler;
use crate::solver::{Iterate, Objective, Problem, SolverConfig};
use crate::space::{Func, SubsetMask};

pub const DEFAULT_OUTER_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityResult {
    pub value: f64,
    /// Feasible: `≥ 1` on `A`, with `‖witness‖_D = value`.
    pub witness: Func,
    /// Final `(lo, hi)` of the outer bisection; `lo` is a certified lower
    /// bound whenever the oracle decided infeasibility by its bound.
    pub bracket: (f64, f64),
    pub outer_iters: usize,
    pub inner_iters: usize,
}

struct E1<'a>(&'a FormInstance);

impl Objective for E1<'_> {
    fn value(&self, x: &Func) -> f64 {
        self.0.energy_e1(x)
    }
    fn gradient(&self, x: &Func) -> Func {
        self.0.grad_e1(x)
    }
}

enum Verdict {
    Feasible(Func),
    Infeasible(Func),
}

/// Decide whether `min{E₁(w) : w ≥ lower} ≤ 1`, starting from `warm`.
fn feasibility(
    form: &FormInstance,
    lower: &[f64],
    warm: Func,
    cfg: &SolverConfig,
    iters: &mut usize,
) -> Result<Verdict> {
    let m = form.space().measure();
    let obj = E1(form);
    let problem = Problem {
        objective: &obj,
        metric: m,
        lower: Some(lower),
    };
    let mut decided: Option<bool> = None;
    let monitor = |it: &Iterate<'_>| {
        if it.value <= 1.0 {
            decided = Some(true);
            return true;
        }
        // Minimize the strongly convex model over the box: separable, μ = 2.
        let mut lb = it.value;
        for i in 0..m.len() {
            let (w, g) = (it.x[i], it.gradient[i]);
            let d = (w - 0.5 * g).max(lower[i]) - w;
            lb += m[i] * (g * d + d * d);
        }
        if lb > 1.0 {
            decided = Some(false);
            return true;
        }
        false
    };
    let tol = cfg.grad_tol * (1.0 + form.space().l2_norm(&warm));
    let out = problem.minimize(warm, tol, cfg, monitor)?;
    *iters += out.iters;
    let feasible = decided.unwrap_or(out.value <= 1.0);
    Ok(if feasible {
        Verdict::Feasible(out.x)
    } else {
        Verdict::Infeasible(out.x)
    })
}

/// `cap(A)` to relative accuracy `outer_tol`, with an optimal witness.
pub fn capacity(
    form: &FormInstance,
    set: &SubsetMask,
    outer_tol: f64,
    cfg: &SolverConfig,
) -> Result<CapacityResult> {
    let n = form.n();
    if set.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: set.len(),
        });
    }
    if !(outer_tol > 0.0 && outer_tol < 1.0) {
        return Err(invalid("outer_tol", format!("must lie in (0, 1), got {outer_tol}")));
    }
    cfg.validate()?;
    if set.is_empty() {
        return Ok(CapacityResult {
            value: 0.0,
            witness: Func::zeros(n),
            bracket: (0.0, 0.0),
            outer_iters: 0,
            inner_iters: 0,
        });
    }

    let ones = Func::constant(n, 1.0);
    let mut best = ones.clone();
    let mut hi = norm(form, &ones);
    // ‖u‖_D ≥ ‖u‖_{L²} ≥ √m(A) for every admissible u.
    let mut lo = form.space().mass(set).sqrt().min(hi);
    let mut warm = &ones * (1.0 / hi);
    let mut outer = 0;
    let mut inner = 0;
    let mut lower = vec![f64::NEG_INFINITY; n];

    while hi - lo > outer_tol * hi {
        outer += 1;
        let t = 0.5 * (lo + hi);
        for i in set.indices() {
            lower[i] = 1.0 / t;
        }
        match feasibility(form, &lower, warm.clone(), cfg, &mut inner)? {
            Verdict::Feasible(w) => {
                hi = t;
                best = &w * t;
                warm = w;
            }
            Verdict::Infeasible(w) => {
                lo = t;
                warm = w;
            }
        }
    }

    for i in set.indices() {
        best[i] = best[i].max(1.0);
    }
    let clipped = best.map(|x| x.clamp(0.0, 1.0));
    let (value, witness) = [best, clipped]
        .into_iter()
        .map(|u| (norm(form, &u), u))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("two candidates");
    Ok(CapacityResult {
        value,
        witness,
        bracket: (lo, hi),
        outer_iters: outer,
        inner_iters: inner,
    })
}

/// Memoized capacities of one form, keyed by subset. Safe to share across
/// threads.
pub struct CapacityCache<'a> {
    form: &'a FormInstance,
    outer_tol: f64,
    cfg: SolverConfig,
    map: Mutex<HashMap<Vec<bool>, CapacityResult>>,
}

impl<'a> CapacityCache<'a> {
    pub fn new(form: &'a FormInstance, outer_tol: f64, cfg: SolverConfig) -> Self {
        Self {
            form,
            outer_tol,
            cfg,
            map: Mutex::new(HashMap::new()),
        }
    }

    pub fn form(&self) -> &'a FormInstance {
        self.form
    }

    pub fn outer_tol(&self) -> f64 {
        self.outer_tol
    }

    pub fn get(&self, set: &SubsetMask) -> Result<CapacityResult> {
        if let Some(r) = self.map.lock().expect("cache lock").get(set.members()) {
            return Ok(r.clone());
        }
        let r = capacity(self.form, set, self.outer_tol, &self.cfg)?;
        self.map
            .lock()
            .expect("cache lock")
            .insert(set.members().to_vec(), r.clone());
        Ok(r)
    }

    pub fn value(&self, set: &SubsetMask) -> Result<f64> {
        Ok(self.get(set)?.value)
    }

    /// `min_x cap({x})` and a minimizing point.
    pub fn min_singleton(&self) -> Result<(f64, usize)> {
        let n = self.form.n();
        let mut best = (f64::INFINITY, 0);
        for x in 0..n {
            let c = self.value(&SubsetMask::singleton(n, x))?;
            if c < best.0 {
                best = (c, x);
            }
        }
        Ok(best)
    }
}

/// `cap(A) ≤ tol`. With full support only the empty set is polar.
pub fn is_polar(form: &FormInstance, set: &SubsetMask, tol: f64) -> Result<bool> {
    let cap = capacity(form, set, DEFAULT_OUTER_TOL, &SolverConfig::default())?;
    let polar = cap.value <= tol;
    debug_assert!(
        !polar || set.is_empty() || tol >= form.space().mass(set).sqrt(),
        "a nonempty set of positive measure has capacity at least its L2 mass"
    );
    Ok(polar)
}

fn chebyshev_push(
    b: &mut ReportBuilder,
    cache: &CapacityCache<'_>,
    f: &Func,
    lambda: f64,
) -> Result<()> {
    let set = SubsetMask::new(f.iter().map(|x| x.abs() >= lambda).collect());
    let cap = cache.value(&set)?;
    let rhs = norm(cache.form(), f) / lambda;
    b.push(cap, rhs, || vec![f.clone()]);
    Ok(())
}

/// `cap({|f| ≥ λ}) ≤ ‖f‖_D / λ`.
pub fn chebyshev_check(form: &FormInstance, f: &Func, lambda: f64) -> Result<InequalityReport> {
    form.space().check(f)?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid("lambda", format!("must be finite and > 0, got {lambda}")));
    }
    let cache = CapacityCache::new(form, DEFAULT_OUTER_TOL, SolverConfig::default());
    let mut b = ReportBuilder::new("chebyshev", 10.0 * DEFAULT_OUTER_TOL);
    b.constant(lambda);
    chebyshev_push(&mut b, &cache, f, lambda)?;
    Ok(b.finish())
}

/// Sampled Chebyshev inequality over `(f, λ)` pairs. Every tenth `f` is a
/// capacity witness of a random set, tested at `λ = 1`.
pub fn check_chebyshev_suite(
    cache: &CapacityCache<'_>,
    samples: usize,
    seed: u64,
) -> Result<InequalityReport> {
    let n = cache.form().n();
    let mut b = ReportBuilder::new("chebyshev", 10.0 * cache.outer_tol());
    let mut s = Sampler::new(seed);
    for k in 0..samples {
        if k % 10 == 0 {
            let w = cache.get(&s.subset(n, true))?.witness;
            chebyshev_push(&mut b, cache, &w, 1.0)?;
            continue;
        }
        let f = s.mixture(n);
        let sup = f.sup_norm();
        if sup == 0.0 {
            continue;
        }
        let lambda = s.uniform(0.0, 1.2 * sup).max(1e-3 * sup);
        chebyshev_push(&mut b, cache, &f, lambda)?;
    }
    Ok(b.finish())
}

/// `cap(A) ≤ cap(B) + tol` for each pair with `A ⊆ B`.
pub fn capacity_monotonicity_check(
    form: &FormInstance,
    pairs: &[(SubsetMask, SubsetMask)],
) -> Result<InequalityReport> {
    let cache = CapacityCache::new(form, DEFAULT_OUTER_TOL, SolverConfig::default());
    capacity_monotonicity_cached(&cache, pairs)
}

pub fn capacity_monotonicity_cached(
    cache: &CapacityCache<'_>,
    pairs: &[(SubsetMask, SubsetMask)],
) -> Result<InequalityReport> {
    let mut b = ReportBuilder::new("capacity_monotonicity", 10.0 * cache.outer_tol());
    for (a, bb) in pairs {
        if !a.is_subset_of(bb) {
            return Err(invalid("pairs", "every pair must satisfy A ⊆ B"));
        }
        b.push(cache.value(a)?, cache.value(bb)?, || {
            vec![a.indicator(), bb.indicator()]
        });
    }
    Ok(b.finish())
}

/// Random pairs `A ⊆ B` of subsets of an `n`-point space.
pub fn nested_pairs(n: usize, count: usize, seed: u64) -> Vec<(SubsetMask, SubsetMask)> {
    let mut s = Sampler::new(seed);
    (0..count)
        .map(|_| {
            let b = s.subset(n, false);
            let a = SubsetMask::new(b.members().iter().map(|&x| x && s.coin()).collect());
            (a, b)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::{path_edges, ring_edges, Edge, FormSpec};
    use crate::space::FiniteMeasuredSpace;

    fn two_point() -> FormInstance {
        FormInstance::new(
            FiniteMeasuredSpace::uniform(2).unwrap(),
            FormSpec::p_energy(2.0, vec![Edge::new(0, 1, 1.0)]),
        )
        .unwrap()
    }

    fn cap(form: &FormInstance, idx: &[usize]) -> CapacityResult {
        let set = SubsetMask::from_indices(form.n(), idx);
        capacity(form, &set, DEFAULT_OUTER_TOL, &SolverConfig::default()).unwrap()
    }

    #[test]
    fn one_dimensional_oracle() {
        // min over u_b of 1 + u_b² + ½(1 - u_b)²: u_b = 1/3, value 4/3
        let c = cap(&two_point(), &[0]);
        assert!((c.value - (4.0_f64 / 3.0).sqrt()).abs() < 1e-5, "{c:?}");
        assert!((c.witness[1] - 1.0 / 3.0).abs() < 1e-2);
        assert!(c.witness[0] >= 1.0);
    }

    #[test]
    fn whole_space() {
        let c = cap(&two_point(), &[0, 1]);
        assert!((c.value - 2.0_f64.sqrt()).abs() < 1e-5);
    }

    #[test]
    fn empty_set_is_polar() {
        let f = two_point();
        assert_eq!(cap(&f, &[]).value, 0.0);
        assert!(is_polar(&f, &SubsetMask::empty(2), 1e-12).unwrap());
        assert!(!is_polar(&f, &SubsetMask::singleton(2, 1), 1e-6).unwrap());
        assert!(!is_polar(&f, &SubsetMask::full(2), 1e-6).unwrap());
    }

    #[test]
    fn witness_invariants() {
        let f = FormInstance::new(
            FiniteMeasuredSpace::new(vec![1.0, 2.0, 0.5, 1.0, 1.5]).unwrap(),
            FormSpec::p_energy(3.0, ring_edges(5)),
        )
        .unwrap();
        for idx in [&[0][..], &[1, 3], &[0, 2, 4], &[0, 1, 2, 3, 4]] {
            let c = cap(&f, idx);
            for &i in idx {
                assert!(c.witness[i] >= 1.0);
            }
            let nw = norm(&f, &c.witness);
            assert!((nw - c.value).abs() <= 1e-9 * (1.0 + c.value));
            let (lo, hi) = c.bracket;
            assert!(lo <= c.value * (1.0 + 1e-9) && c.value <= hi * (1.0 + 1e-9));
            assert!(hi - lo <= DEFAULT_OUTER_TOL * hi);
        }
    }

    /// Coarse grid over `[−3, 3]ⁿ` (`[1, 3]` on `A`), refined locally, with
    /// the closed-form gauge `√E₁` of a 2-homogeneous form.
    fn grid_capacity(form: &FormInstance, set: &SubsetMask) -> f64 {
        let n = form.n();
        let gauge = |u: &[f64]| form.energy_e1(&Func::new(u.to_vec())).sqrt();
        let ranges: Vec<(f64, f64)> = (0..n)
            .map(|i| if set.contains(i) { (1.0, 3.0) } else { (-3.0, 3.0) })
            .collect();
        let mut center: Vec<f64> = vec![0.0; n];
        let mut best = f64::INFINITY;
        let mut boxes: Vec<(f64, f64)> = ranges.clone();
        for step in [0.05, 0.005, 0.001] {
            let counts: Vec<usize> = boxes
                .iter()
                .map(|(a, b)| ((b - a) / step).round() as usize + 1)
                .collect();
            let total: usize = counts.iter().product();
            let mut u = vec![0.0; n];
            let mut next = center.clone();
            for mut k in 0..total {
                for i in 0..n {
                    u[i] = boxes[i].0 + (k % counts[i]) as f64 * step;
                    k /= counts[i];
                }
                let g = gauge(&u);
                if g < best {
                    best = g;
                    next.copy_from_slice(&u);
                }
            }
            center = next;
            boxes = (0..n)
                .map(|i| {
                    let (a, b) = ranges[i];
                    ((center[i] - 10.0 * step).max(a), (center[i] + 10.0 * step).min(b))
                })
                .collect();
        }
        best
    }

    #[test]
    fn brute_force_grid_agreement() {
        let fixtures = vec![
            two_point(),
            FormInstance::new(
                FiniteMeasuredSpace::uniform(2).unwrap(),
                FormSpec::p_energy(2.0, vec![Edge::new(0, 1, 1.0)]).with_killing(vec![1.0, 1.0], 2.0),
            )
            .unwrap(),
            FormInstance::new(
                FiniteMeasuredSpace::new(vec![1.0, 0.5, 2.0]).unwrap(),
                FormSpec::p_energy(2.0, path_edges(3)),
            )
            .unwrap(),
        ];
        for f in &fixtures {
            let n = f.n();
            for bits in 1..(1u64 << n) {
                let set = SubsetMask::from_bits(n, bits);
                let ours = capacity(f, &set, DEFAULT_OUTER_TOL, &SolverConfig::default())
                    .unwrap()
                    .value;
                let grid = grid_capacity(f, &set);
                assert!((ours - grid).abs() < 1e-3, "bits {bits}: {ours} vs {grid}");
            }
        }
    }

    #[test]
    fn chebyshev_examples() {
        let f = two_point();
        let r = chebyshev_check(&f, &Func::new(vec![1.0, 0.0]), 1.0).unwrap();
        assert!(r.pass);
        assert!((r.lhs - (4.0_f64 / 3.0).sqrt()).abs() < 1e-5);
        assert!((r.rhs - 1.5_f64.sqrt()).abs() < 1e-9);
        let r = chebyshev_check(&f, &Func::new(vec![1.0, 0.0]), 2.0).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert!(chebyshev_check(&f, &Func::zeros(2), 0.0).is_err());
    }

    #[test]
    fn chebyshev_suite_on_ring() {
        let f = FormInstance::new(
            FiniteMeasuredSpace::uniform(6).unwrap(),
            FormSpec::p_energy(3.0, ring_edges(6)).with_killing(vec![0.5; 6], 3.0),
        )
        .unwrap();
        let cache = CapacityCache::new(&f, DEFAULT_OUTER_TOL, SolverConfig::default());
        let r = check_chebyshev_suite(&cache, 200, 9).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn monotone_in_the_set() {
        let f = FormInstance::new(
            FiniteMeasuredSpace::uniform(6).unwrap(),
            FormSpec::p_energy(2.0, path_edges(6)),
        )
        .unwrap();
        let pairs = nested_pairs(6, 60, 4);
        assert!(pairs.iter().all(|(a, b)| a.is_subset_of(b)));
        let r = capacity_monotonicity_check(&f, &pairs).unwrap();
        assert!(r.pass, "{r:?}");
        let bad = vec![(SubsetMask::full(6), SubsetMask::empty(6))];
        assert!(capacity_monotonicity_check(&f, &bad).is_err());
        let two = two_point();
        let r = capacity_monotonicity_check(
            &two,
            &[(SubsetMask::singleton(2, 0), SubsetMask::full(2))],
        )
        .unwrap();
        assert!(r.pass && r.lhs < r.rhs);
    }

    #[test]
    fn cache_hits_match() {
        let f = two_point();
        let cache = CapacityCache::new(&f, DEFAULT_OUTER_TOL, SolverConfig::default());
        let a = cache.get(&SubsetMask::singleton(2, 1)).unwrap();
        let b = cache.get(&SubsetMask::singleton(2, 1)).unwrap();
        assert_eq!(a, b);
        let (c, _) = cache.min_singleton().unwrap();
        assert!((c - (4.0_f64 / 3.0).sqrt()).abs() < 1e-5);
    }
}
