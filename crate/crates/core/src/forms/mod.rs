//! Convex even energies on finite measured spaces.
//!
//! Every form is a sum of a pair-interaction term and an on-site killing term
//!
//! ```text
//! E(u) = Σ_{edges} w_ij Φ(u_i - u_j) + (1/k) Σ_i κ_i |u_i|^k
//! ```
//!
//! with `Φ(x) = |x|^p / p` for p-energies (the `1/p` prefactor keeps the
//! gradient free of constants), a validated profile `φ` for φ-energies, and
//! all pairs `i < j` weighted by a dense kernel for nonlocal energies.
//!
//! Gradients are taken with respect to the m-weighted inner product
//! `⟨f, v⟩ = Σ m_i f_i v_i`: the Euclidean partial derivative at `i` is divided
//! by `m_i`.

mod checks;
mod phi;

pub use checks::{
    check_convexity, check_dirichlet_properties, check_dirichlet_properties_e1, check_evenness, check_growth_type,
    check_subgradient_inequality, check_submodularity, check_submodularity_of,
    check_truncation_property, check_truncation_property_of,
};
pub use phi::{Phi, PhiPiece};

use crate::error::{invalid, Error, Result};
use crate::solver::{Minimum, Objective, Problem, SolverConfig};
use crate::space::{FiniteMeasuredSpace, Func};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

impl Edge {
    pub fn new(i: usize, j: usize, w: f64) -> Self {
        Self { i, j, w }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Interaction {
    /// `(1/p) Σ w_ij |u_i - u_j|^p` over the listed edges.
    PEnergy { p: f64, edges: Vec<Edge> },
    /// `Σ w_ij φ(u_i - u_j)` over the listed edges.
    PhiEnergy { phi: Phi, edges: Vec<Edge> },
    /// `(1/p) Σ_{i<j} K_ij |u_i - u_j|^p` for a symmetric nonnegative kernel.
    NonlocalKernel { p: f64, kernel: Vec<Vec<f64>> },
    /// `½ uᵀ Q u` for a symmetric positive semidefinite `Q`.
    ///
    /// Convex and even, but in general not a Dirichlet form; used as a
    /// fixture for the property checkers.
    Quadratic { matrix: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FormSpec {
    pub interaction: Interaction,
    /// On-site coefficients `κ_i ≥ 0`; empty means no killing.
    pub killing: Vec<f64>,
    pub killing_exponent: f64,
}

impl FormSpec {
    pub fn p_energy(p: f64, edges: Vec<Edge>) -> Self {
        Self {
            interaction: Interaction::PEnergy { p, edges },
            killing: Vec::new(),
            killing_exponent: p,
        }
    }

    pub fn phi_energy(phi: Phi, edges: Vec<Edge>) -> Self {
        Self {
            interaction: Interaction::PhiEnergy { phi, edges },
            killing: Vec::new(),
            killing_exponent: 2.0,
        }
    }

    pub fn nonlocal(p: f64, kernel: Vec<Vec<f64>>) -> Self {
        Self {
            interaction: Interaction::NonlocalKernel { p, kernel },
            killing: Vec::new(),
            killing_exponent: p,
        }
    }

    pub fn quadratic(matrix: Vec<Vec<f64>>) -> Self {
        Self {
            interaction: Interaction::Quadratic { matrix },
            killing: Vec::new(),
            killing_exponent: 2.0,
        }
    }

    pub fn with_killing(mut self, killing: Vec<f64>, exponent: f64) -> Self {
        self.killing = killing;
        self.killing_exponent = exponent;
        self
    }
}

/// Path graph `0 - 1 - ... - (n-1)` with unit weights.
pub fn path_edges(n: usize) -> Vec<Edge> {
    (1..n).map(|i| Edge::new(i - 1, i, 1.0)).collect()
}

/// Cycle on `n ≥ 3` nodes with unit weights.
pub fn ring_edges(n: usize) -> Vec<Edge> {
    let mut e = path_edges(n);
    if n >= 3 {
        e.push(Edge::new(n - 1, 0, 1.0));
    }
    e
}

/// All pairs `i < j` with unit weights.
pub fn complete_edges(n: usize) -> Vec<Edge> {
    let mut e = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            e.push(Edge::new(i, j, 1.0));
        }
    }
    e
}

/// A validated form bound to its space. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct FormInstance {
    spec: FormSpec,
    space: FiniteMeasuredSpace,
}

fn check_edges(n: usize, edges: &[Edge]) -> Result<()> {
    for (k, e) in edges.iter().enumerate() {
        if e.i >= n || e.j >= n {
            return Err(Error::InvalidForm(format!(
                "edge {k} ({}, {}) out of range for n = {n}",
                e.i, e.j
            )));
        }
        if !(e.w.is_finite() && e.w >= 0.0) {
            return Err(Error::InvalidForm(format!(
                "edge {k} weight must be finite and >= 0, got {}",
                e.w
            )));
        }
    }
    Ok(())
}

fn check_square_symmetric(n: usize, m: &[Vec<f64>], what: &str, nonneg: bool) -> Result<()> {
    if m.len() != n || m.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidForm(format!("{what} must be {n}x{n}")));
    }
    for i in 0..n {
        for j in 0..n {
            let v = m[i][j];
            if !v.is_finite() || (nonneg && v < 0.0) {
                return Err(Error::InvalidForm(format!(
                    "{what} entry ({i}, {j}) = {v} not allowed"
                )));
            }
            if (v - m[j][i]).abs() > 1e-12 * (1.0 + v.abs()) {
                return Err(Error::InvalidForm(format!("{what} is not symmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

fn check_exponent(p: f64, what: &'static str) -> Result<()> {
    if !(p.is_finite() && p >= 2.0) {
        return Err(invalid(what, format!("exponent must be finite and >= 2, got {p}")));
    }
    Ok(())
}

impl FormInstance {
    pub fn new(space: FiniteMeasuredSpace, spec: FormSpec) -> Result<Self> {
        let n = space.n();
        match &spec.interaction {
            Interaction::PEnergy { p, edges } => {
                check_exponent(*p, "p")?;
                check_edges(n, edges)?;
            }
            Interaction::PhiEnergy { edges, .. } => check_edges(n, edges)?,
            Interaction::NonlocalKernel { p, kernel } => {
                check_exponent(*p, "p")?;
                check_square_symmetric(n, kernel, "kernel", true)?;
            }
            Interaction::Quadratic { matrix } => {
                check_square_symmetric(n, matrix, "quadratic matrix", false)?;
                check_psd_sampled(matrix)?;
            }
        }
        if !spec.killing.is_empty() {
            if spec.killing.len() != n {
                return Err(Error::InvalidForm(format!(
                    "killing vector has length {}, expected {n}",
                    spec.killing.len()
                )));
            }
            if let Some(k) = spec.killing.iter().find(|k| !(k.is_finite() && **k >= 0.0)) {
                return Err(Error::InvalidForm(format!("killing coefficient {k} must be >= 0")));
            }
        }
        check_exponent(spec.killing_exponent, "killing_exponent")?;
        Ok(Self { spec, space })
    }

    pub fn spec(&self) -> &FormSpec {
        &self.spec
    }

    pub fn space(&self) -> &FiniteMeasuredSpace {
        &self.space
    }

    pub fn n(&self) -> usize {
        self.space.n()
    }

    pub fn has_killing(&self) -> bool {
        self.spec.killing.iter().any(|&k| k > 0.0)
    }

    /// Smallest `r` for which growth type `≤ r` is expected: the largest
    /// homogeneity degree among the terms (for φ, the largest polynomial
    /// degree). Sampled verification lives in [`check_growth_type`].
    pub fn growth_exponent(&self) -> f64 {
        let pair = match &self.spec.interaction {
            Interaction::PEnergy { p, .. } | Interaction::NonlocalKernel { p, .. } => *p,
            Interaction::PhiEnergy { phi, .. } => phi.degree() as f64,
            Interaction::Quadratic { .. } => 2.0,
        };
        if self.has_killing() {
            pair.max(self.spec.killing_exponent)
        } else {
            pair
        }
    }

    /// Degree `d` with `E(su) = s^d E(u)` for all `s > 0`, if the form is
    /// positively homogeneous.
    pub fn homogeneity(&self) -> Option<f64> {
        let pair = match &self.spec.interaction {
            Interaction::PEnergy { p, .. } | Interaction::NonlocalKernel { p, .. } => *p,
            Interaction::Quadratic { .. } => 2.0,
            Interaction::PhiEnergy { phi, .. } => {
                let pieces = phi.pieces();
                let pure = pieces.len() == 1
                    && pieces[0].coeffs.iter().filter(|c| **c != 0.0).count() == 1;
                if !pure {
                    return None;
                }
                phi.degree() as f64
            }
        };
        if self.has_killing() && self.spec.killing_exponent != pair {
            return None;
        }
        Some(pair)
    }

    /// `E(u)`. Always `≥ 0` and `E(0) = 0`.
    pub fn eval(&self, u: &Func) -> Result<f64> {
        self.space.check(u)?;
        Ok(self.energy(u))
    }

    /// `E₁(u) = ‖u‖²_{L²} + E(u)`.
    pub fn eval_e1(&self, u: &Func) -> Result<f64> {
        self.space.check(u)?;
        Ok(self.energy_e1(u))
    }

    /// Unchecked `E(u)`; callers guarantee the dimension.
    pub fn energy(&self, u: &Func) -> f64 {
        let pair = match &self.spec.interaction {
            Interaction::PEnergy { p, edges } => edges
                .iter()
                .map(|e| e.w * (u[e.i] - u[e.j]).abs().powf(*p))
                .sum::<f64>()
                / p,
            Interaction::PhiEnergy { phi, edges } => {
                edges.iter().map(|e| e.w * phi.value(u[e.i] - u[e.j])).sum()
            }
            Interaction::NonlocalKernel { p, kernel } => {
                let mut s = 0.0;
                for i in 0..u.len() {
                    for j in i + 1..u.len() {
                        s += kernel[i][j] * (u[i] - u[j]).abs().powf(*p);
                    }
                }
                s / p
            }
            Interaction::Quadratic { matrix } => {
                let mut s = 0.0;
                for i in 0..u.len() {
                    for j in 0..u.len() {
                        s += u[i] * matrix[i][j] * u[j];
                    }
                }
                (0.5 * s).max(0.0)
            }
        };
        pair + self.killing_energy(u)
    }

    fn killing_energy(&self, u: &Func) -> f64 {
        if self.spec.killing.is_empty() {
            return 0.0;
        }
        let k = self.spec.killing_exponent;
        self.spec
            .killing
            .iter()
            .zip(u.iter())
            .map(|(c, x)| c * x.abs().powf(k))
            .sum::<f64>()
            / k
    }

    pub fn energy_e1(&self, u: &Func) -> f64 {
        self.space.l2_norm_sq(u) + self.energy(u)
    }

    /// The m-weighted gradient: the unique subgradient of the C¹ form.
    pub fn gradient(&self, u: &Func) -> Result<Func> {
        self.space.check(u)?;
        Ok(self.grad(u))
    }

    /// Unchecked m-weighted gradient.
    pub fn grad(&self, u: &Func) -> Func {
        let n = u.len();
        let mut g = vec![0.0; n];
        // |x|^{p-2} x, the derivative of |x|^p / p
        let dpow = |x: f64, p: f64| x.abs().powf(p - 1.0) * x.signum();
        match &self.spec.interaction {
            Interaction::PEnergy { p, edges } => {
                for e in edges {
                    let d = e.w * dpow(u[e.i] - u[e.j], *p);
                    g[e.i] += d;
                    g[e.j] -= d;
                }
            }
            Interaction::PhiEnergy { phi, edges } => {
                for e in edges {
                    let d = e.w * phi.derivative(u[e.i] - u[e.j]);
                    g[e.i] += d;
                    g[e.j] -= d;
                }
            }
            Interaction::NonlocalKernel { p, kernel } => {
                for i in 0..n {
                    for j in i + 1..n {
                        let d = kernel[i][j] * dpow(u[i] - u[j], *p);
                        g[i] += d;
                        g[j] -= d;
                    }
                }
            }
            Interaction::Quadratic { matrix } => {
                for i in 0..n {
                    g[i] = (0..n).map(|j| matrix[i][j] * u[j]).sum();
                }
            }
        }
        if !self.spec.killing.is_empty() {
            let k = self.spec.killing_exponent;
            for (i, c) in self.spec.killing.iter().enumerate() {
                g[i] += c * dpow(u[i], k);
            }
        }
        for (gi, m) in g.iter_mut().zip(self.space.measure()) {
            *gi /= m;
        }
        Func::new(g)
    }

    /// m-weighted gradient of `E₁`: `∇E(u) + 2u`.
    pub fn grad_e1(&self, u: &Func) -> Func {
        let g = self.grad(u);
        g.zip_map(u, |a, b| a + 2.0 * b)
    }

    /// `argmin_v E(v) + ‖v - g‖²_{L²} / (2τ)`, the minimizing-movement step
    /// (equivalently the resolvent `(I + τ∂E)^{-1} g`).
    pub fn prox(&self, tau: f64, g: &Func, cfg: &SolverConfig) -> Result<Func> {
        Ok(self.prox_solve(tau, g, None, cfg)?.x)
    }

    /// [`FormInstance::prox`] with an optional warm start, returning solver
    /// diagnostics. The residual is `‖∇E(u) + (u - g)/τ‖_{L²}` and is below
    /// `grad_tol · (1 + ‖g‖_{L²})` on success.
    pub fn prox_solve(
        &self,
        tau: f64,
        g: &Func,
        warm: Option<&Func>,
        cfg: &SolverConfig,
    ) -> Result<Minimum> {
        self.space.check(g)?;
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(invalid("tau", format!("must be finite and > 0, got {tau}")));
        }
        cfg.validate()?;
        if g.is_zero() {
            // E even and convex: 0 minimizes E and the distance term.
            return Ok(Minimum {
                x: Func::zeros(g.len()),
                value: 0.0,
                residual: 0.0,
                iters: 0,
                stopped_early: false,
            });
        }
        let obj = ProxObjective {
            form: self,
            center: g,
            tau,
        };
        let problem = Problem {
            objective: &obj,
            metric: self.space.measure(),
            lower: None,
        };
        let tol = cfg.grad_tol * (1.0 + self.space.l2_norm(g));
        let x0 = warm.cloned().unwrap_or_else(|| g.clone());
        problem.minimize(x0, tol, cfg, |_| false)
    }

    /// Structural candidate null direction: the indicator of a connected
    /// component (of the interaction graph) carrying no killing, provided the
    /// form vanishes along it.
    pub fn null_direction(&self) -> Option<Func> {
        let n = self.n();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            let mut c = x;
            while p[c] != r {
                let next = p[c];
                p[c] = r;
                c = next;
            }
            r
        }
        let mut link = |a: usize, b: usize| {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra] = rb;
            }
        };
        match &self.spec.interaction {
            Interaction::PEnergy { edges, .. } | Interaction::PhiEnergy { edges, .. } => {
                for e in edges.iter().filter(|e| e.w > 0.0) {
                    link(e.i, e.j);
                }
            }
            Interaction::NonlocalKernel { kernel: m, .. } | Interaction::Quadratic { matrix: m } => {
                for i in 0..n {
                    for j in i + 1..n {
                        if m[i][j] != 0.0 {
                            link(i, j);
                        }
                    }
                }
            }
        }
        for root in 0..n {
            if find(&mut parent, root) != root {
                continue;
            }
            let members: Vec<usize> = (0..n).filter(|&i| find(&mut parent, i) == root).collect();
            let killed = members
                .iter()
                .any(|&i| self.spec.killing.get(i).copied().unwrap_or(0.0) > 0.0);
            if killed {
                continue;
            }
            let mut ind = Func::zeros(n);
            for &i in &members {
                ind[i] = 1.0;
            }
            if [1.0, 10.0, 100.0]
                .iter()
                .all(|&s| self.energy(&(&ind * s)) == 0.0)
            {
                return Some(ind);
            }
        }
        None
    }
}

fn check_psd_sampled(matrix: &[Vec<f64>]) -> Result<()> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let n = matrix.len();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x51de);
    for _ in 0..2000 {
        let u: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm2: f64 = u.iter().map(|x| x * x).sum();
        let mut q = 0.0;
        for i in 0..n {
            for j in 0..n {
                q += u[i] * matrix[i][j] * u[j];
            }
        }
        if q < -1e-12 * norm2 {
            return Err(Error::InvalidForm(
                "quadratic matrix is not positive semidefinite".into(),
            ));
        }
    }
    Ok(())
}

struct ProxObjective<'a> {
    form: &'a FormInstance,
    center: &'a Func,
    tau: f64,
}

impl Objective for ProxObjective<'_> {
    fn value(&self, x: &Func) -> f64 {
        let d = x - self.center;
        self.form.energy(x) + self.form.space.l2_norm_sq(&d) / (2.0 * self.tau)
    }

    fn gradient(&self, x: &Func) -> Func {
        let g = self.form.grad(x);
        let inv = 1.0 / self.tau;
        Func::new(
            (0..x.len())
                .map(|i| g[i] + inv * (x[i] - self.center[i]))
                .collect(),
        )
    }
}
