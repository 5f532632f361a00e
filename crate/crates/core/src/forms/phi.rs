//! Even convex scalar profiles given piecewise by polynomials in `|x|`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One polynomial piece `Σ_k coeffs[k] |x|^k`, valid from `start` up to the
/// next piece's start.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiPiece {
    pub start: f64,
    pub coeffs: Vec<f64>,
}

impl PhiPiece {
    fn value(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    fn derivative(&self, t: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, c)| acc * t + k as f64 * c)
    }

    fn degree(&self) -> usize {
        self.coeffs
            .iter()
            .rposition(|c| *c != 0.0)
            .unwrap_or(0)
    }
}

/// `φ(x) = ψ(|x|)` with `ψ` piecewise polynomial on `[0, ∞)`.
///
/// Construction validates `φ(0) = 0`, `φ'(0) = 0`, C¹ matching at the
/// breakpoints, eventual positivity and convexity (sampled midpoint test).
#[derive(Debug, Clone, PartialEq)]
pub struct Phi {
    pieces: Vec<PhiPiece>,
}

const MATCH_TOL: f64 = 1e-9;
const CONVEXITY_SAMPLES: usize = 4000;

impl Phi {
    pub fn new(pieces: Vec<PhiPiece>) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidForm(format!("phi: {msg}")));
        let Some(first) = pieces.first() else {
            return bad("at least one piece required".into());
        };
        if first.start != 0.0 {
            return bad(format!("first piece must start at 0, starts at {}", first.start));
        }
        for (k, p) in pieces.iter().enumerate() {
            if p.coeffs.is_empty() || p.coeffs.iter().any(|c| !c.is_finite()) {
                return bad(format!("piece {k} needs finite coefficients"));
            }
            if !p.start.is_finite() {
                return bad(format!("piece {k} has non-finite start"));
            }
            if k > 0 && p.start <= pieces[k - 1].start {
                return bad(format!("piece starts must increase (piece {k})"));
            }
        }
        if first.value(0.0).abs() > MATCH_TOL {
            return bad(format!("phi(0) must be 0, got {}", first.value(0.0)));
        }
        if first.derivative(0.0).abs() > MATCH_TOL {
            return bad(format!(
                "phi'(0) must be 0 for an even C1 profile, got {}",
                first.derivative(0.0)
            ));
        }
        for k in 1..pieces.len() {
            let t = pieces[k].start;
            let (l, r) = (&pieces[k - 1], &pieces[k]);
            let scale = 1.0 + l.value(t).abs();
            if (l.value(t) - r.value(t)).abs() > MATCH_TOL * scale {
                return bad(format!("discontinuous at breakpoint {t}"));
            }
            let dscale = 1.0 + l.derivative(t).abs();
            if (l.derivative(t) - r.derivative(t)).abs() > MATCH_TOL * dscale {
                return bad(format!("derivative jumps at breakpoint {t}"));
            }
        }
        let phi = Self { pieces };
        phi.validate_convexity()?;
        Ok(phi)
    }

    /// Quadratic profile `x²/2`.
    pub fn quadratic() -> Self {
        Self::new(vec![PhiPiece {
            start: 0.0,
            coeffs: vec![0.0, 0.0, 0.5],
        }])
        .expect("x^2/2 is a valid profile")
    }

    /// Huber profile: `x²/2` for `|x| ≤ δ`, `δ|x| - δ²/2` beyond.
    pub fn huber(delta: f64) -> Result<Self> {
        Self::new(vec![
            PhiPiece {
                start: 0.0,
                coeffs: vec![0.0, 0.0, 0.5],
            },
            PhiPiece {
                start: delta,
                coeffs: vec![-0.5 * delta * delta, delta],
            },
        ])
    }

    pub fn pieces(&self) -> &[PhiPiece] {
        &self.pieces
    }

    fn piece(&self, t: f64) -> &PhiPiece {
        let idx = self.pieces.partition_point(|p| p.start <= t);
        &self.pieces[idx.saturating_sub(1)]
    }

    pub fn value(&self, x: f64) -> f64 {
        let t = x.abs();
        self.piece(t).value(t)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        if x == 0.0 {
            return 0.0;
        }
        let t = x.abs();
        x.signum() * self.piece(t).derivative(t)
    }

    /// Largest polynomial degree, floored at 2: the candidate growth exponent.
    pub fn degree(&self) -> usize {
        self.pieces.iter().map(PhiPiece::degree).max().unwrap_or(0).max(2)
    }

    fn sample_radius(&self) -> f64 {
        2.0 * self.pieces.last().map(|p| p.start).unwrap_or(0.0) + 2.0
    }

    fn validate_convexity(&self) -> Result<()> {
        let r = self.sample_radius();
        if !(self.value(r) > 0.0) {
            return Err(Error::InvalidForm(format!(
                "phi: profile must be eventually positive, phi({r}) = {}",
                self.value(r)
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x9e37_79b9);
        for _ in 0..CONVEXITY_SAMPLES {
            let a = rng.random_range(-r..r);
            let b = rng.random_range(-r..r);
            let mid = self.value(0.5 * (a + b));
            let avg = 0.5 * (self.value(a) + self.value(b));
            if mid > avg + 1e-12 * (1.0 + avg.abs()) {
                return Err(Error::InvalidForm(format!(
                    "phi: midpoint convexity fails between {a} and {b}"
                )));
            }
            if self.value(a) < -1e-12 {
                return Err(Error::InvalidForm(format!("phi: negative value at {a}")));
            }
        }
        Ok(())
    }
}
