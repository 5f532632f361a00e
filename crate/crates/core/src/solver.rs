//! Projected gradient descent with Armijo backtracking.
//!
//! All gradients live in the m-weighted inner product, so the metric used for
//! step lengths and residuals is `⟨x, y⟩ = Σ m_i x_i y_i`. Trial steps start
//! from a Barzilai-Borwein estimate and are shrunk by `backtrack_factor`
//! until the Armijo condition holds.

use crate::error::{invalid, Error, Result};
use crate::space::Func;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub grad_tol: f64,
    pub max_iter: usize,
    pub backtrack_factor: f64,
    pub armijo_c: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-9,
            max_iter: 100_000,
            backtrack_factor: 0.5,
            armijo_c: 1e-4,
            seed: 0x5eed,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) {
            return Err(invalid("grad_tol", "must be > 0"));
        }
        if self.max_iter == 0 {
            return Err(invalid("max_iter", "must be > 0"));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(invalid("backtrack_factor", "must lie in (0, 1)"));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return Err(invalid("armijo_c", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Smooth objective with value and m-weighted gradient.
pub trait Objective {
    fn value(&self, x: &Func) -> f64;
    fn gradient(&self, x: &Func) -> Func;
}

/// Current state handed to the monitor callback.
pub struct Iterate<'a> {
    pub x: &'a Func,
    pub value: f64,
    pub gradient: &'a Func,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Func,
    pub value: f64,
    pub residual: f64,
    pub iters: usize,
    /// The monitor asked to stop before the residual test was met.
    pub stopped_early: bool,
}

/// Box-constrained problem `min f(x)` subject to `x_i ≥ lower_i`.
pub struct Problem<'a, O: Objective> {
    pub objective: &'a O,
    pub metric: &'a [f64],
    /// `None` means unconstrained; `-∞` entries are free coordinates.
    pub lower: Option<&'a [f64]>,
}

impl<O: Objective> Problem<'_, O> {
    fn project(&self, x: &mut Func) {
        if let Some(lo) = self.lower {
            for (xi, &l) in (0..x.len()).zip(lo) {
                if x[xi] < l {
                    x[xi] = l;
                }
            }
        }
    }

    fn dot(&self, a: &Func, b: &Func) -> f64 {
        self.metric
            .iter()
            .zip(a.iter().zip(b.iter()))
            .map(|(m, (x, y))| m * x * y)
            .sum()
    }

    /// `‖x - P(x - g)‖_m`, the projected-gradient residual.
    pub fn residual(&self, x: &Func, g: &Func) -> f64 {
        match self.lower {
            None => self.dot(g, g).sqrt(),
            Some(lo) => {
                let mut s = 0.0;
                for i in 0..x.len() {
                    let step = x[i] - (x[i] - g[i]).max(lo[i]);
                    s += self.metric[i] * step * step;
                }
                s.sqrt()
            }
        }
    }

    pub fn minimize(
        &self,
        x0: Func,
        tol: f64,
        cfg: &SolverConfig,
        mut monitor: impl FnMut(&Iterate<'_>) -> bool,
    ) -> Result<Minimum> {
        let mut x = x0;
        self.project(&mut x);
        let mut fx = self.objective.value(&x);
        let mut gx = self.objective.gradient(&x);
        let mut step = {
            let gn = self.dot(&gx, &gx).sqrt();
            if gn > 0.0 {
                1.0_f64.min(1.0 / gn).max(1e-6)
            } else {
                1.0
            }
        };
        let mut stalls = 0usize;

        for iter in 0..cfg.max_iter {
            let residual = self.residual(&x, &gx);
            if !residual.is_finite() || !fx.is_finite() {
                return Err(Error::NonConvergence {
                    iters: iter,
                    residual,
                });
            }
            if residual <= tol {
                return Ok(Minimum {
                    x,
                    value: fx,
                    residual,
                    iters: iter,
                    stopped_early: false,
                });
            }
            if monitor(&Iterate {
                x: &x,
                value: fx,
                gradient: &gx,
            }) {
                return Ok(Minimum {
                    x,
                    value: fx,
                    residual,
                    iters: iter,
                    stopped_early: true,
                });
            }

            // Roundoff floor for the sufficient-decrease test.
            let slack = 8.0 * f64::EPSILON * (1.0 + fx.abs());
            let mut accepted = None;
            let mut s = step;
            for _ in 0..80 {
                let mut y = &x - &(&gx * s);
                self.project(&mut y);
                let d = &y - &x;
                let fy = self.objective.value(&y);
                if fy.is_finite() && fy <= fx + cfg.armijo_c * self.dot(&gx, &d) + slack {
                    accepted = Some((y, fy, d));
                    break;
                }
                s *= cfg.backtrack_factor;
            }
            let Some((y, fy, d)) = accepted else {
                stalls += 1;
                if stalls > 3 {
                    return Err(Error::NonConvergence {
                        iters: iter,
                        residual,
                    });
                }
                step = 1e-3;
                continue;
            };
            let gy = self.objective.gradient(&y);
            let dg = &gy - &gx;
            let sy = self.dot(&d, &dg);
            let ss = self.dot(&d, &d);
            step = if sy > 0.0 && ss > 0.0 {
                (ss / sy).clamp(1e-12, 1e12)
            } else {
                (s * 2.0).min(1e12)
            };
            x = y;
            fx = fy;
            gx = gy;
        }
        let residual = self.residual(&x, &gx);
        Err(Error::NonConvergence {
            iters: cfg.max_iter,
            residual,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quad {
        diag: Vec<f64>,
        center: Vec<f64>,
    }

    impl Objective for Quad {
        fn value(&self, x: &Func) -> f64 {
            (0..x.len())
                .map(|i| 0.5 * self.diag[i] * (x[i] - self.center[i]).powi(2))
                .sum()
        }
        fn gradient(&self, x: &Func) -> Func {
            Func::new(
                (0..x.len())
                    .map(|i| self.diag[i] * (x[i] - self.center[i]))
                    .collect(),
            )
        }
    }

    #[test]
    fn unconstrained_quadratic() {
        let q = Quad {
            diag: vec![1.0, 100.0, 0.5],
            center: vec![1.0, -2.0, 3.0],
        };
        let metric = [1.0; 3];
        let p = Problem {
            objective: &q,
            metric: &metric,
            lower: None,
        };
        let m = p
            .minimize(Func::zeros(3), 1e-12, &SolverConfig::default(), |_| false)
            .unwrap();
        assert!(m.x.max_abs_diff(&Func::new(q.center.clone())) < 1e-10);
    }

    #[test]
    fn box_constraint_is_active() {
        let q = Quad {
            diag: vec![2.0, 2.0],
            center: vec![0.0, 0.0],
        };
        let metric = [1.0; 2];
        let lower = [1.0, f64::NEG_INFINITY];
        let p = Problem {
            objective: &q,
            metric: &metric,
            lower: Some(&lower),
        };
        let m = p
            .minimize(Func::new(vec![5.0, 5.0]), 1e-12, &SolverConfig::default(), |_| false)
            .unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-12);
        assert!(m.x[1].abs() < 1e-10);
    }

    #[test]
    fn non_convergence_is_reported() {
        let q = Quad {
            diag: vec![1.0, 1e6],
            center: vec![1.0, 1.0],
        };
        let metric = [1.0; 2];
        let p = Problem {
            objective: &q,
            metric: &metric,
            lower: None,
        };
        let cfg = SolverConfig {
            max_iter: 2,
            ..SolverConfig::default()
        };
        let err = p.minimize(Func::zeros(2), 1e-14, &cfg, |_| false).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { .. }));
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = SolverConfig {
            backtrack_factor: 1.5,
            ..SolverConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
