//! Degree-2 expanding circle maps: evaluation, derivatives, inverse
//! branches, orbits, and weight cocycles.
//!
//! A map is described by a strictly increasing lift `L: [0,1] → [0,2]`
//! with `L(0) = 0`, `L(1) = 2`; the circle map is `F(x) = L(x) mod 1`.
//! The reference measure is Lebesgue, so the Jacobian weight `g` equals
//! the derivative of the lift. The fixed point sits at 0 for every
//! admissible lift (`L(0) = 0`), so no coordinate rotation is needed.

use alloc::sync::Arc;
use alloc::{format, vec::Vec};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Pointwise rule for a custom lift and its derivative.
pub type LiftFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum MapFamily {
    /// `L(x) = 2x`, the angle-doubling map.
    Linear,
    /// `L(x) = 2x + ε sin(2πx)`.
    PerturbedDoubling { epsilon: f64 },
    /// User-supplied lift and derivative.
    CustomLift { lift: LiftFn, deriv: LiftFn },
}

impl core::fmt::Debug for MapFamily {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            MapFamily::Linear => write!(f, "Linear"),
            MapFamily::PerturbedDoubling { epsilon } => {
                write!(f, "PerturbedDoubling {{ epsilon: {epsilon} }}")
            }
            MapFamily::CustomLift { .. } => write!(f, "CustomLift {{ .. }}"),
        }
    }
}

/// A degree-2 expanding circle map, immutable after construction.
#[derive(Debug, Clone)]
pub struct CircleMap {
    family: MapFamily,
    lambda_min: f64,
    /// Split point of the two Markov branches: the unique `s` with `L(s) = 1`.
    branch_split: f64,
}

/// Number of grid points used to certify expansion at construction.
const EXPANSION_GRID: usize = 1 << 16;
/// Upper bound on the perturbation amplitude; keeps `λ_min = 2 − 2πε > 1.02`.
const MAX_EPSILON: f64 = 0.155;
const NEWTON_TOL: f64 = 1e-14;
const NEWTON_CAP: usize = 100;
const BISECTION_STEPS: usize = 60;
const BRANCH_RESIDUAL: f64 = 1e-13;

pub(crate) fn wrap_unit(t: f64) -> f64 {
    let mut r = t - libm::floor(t);
    if r >= 1.0 {
        r -= 1.0;
    }
    if r < 0.0 {
        r += 1.0;
    }
    r
}

/// Distance on the circle `R/Z`.
pub fn circle_dist(a: f64, b: f64) -> f64 {
    let d = libm::fabs(wrap_unit(a) - wrap_unit(b));
    if d > 0.5 {
        1.0 - d
    } else {
        d
    }
}

impl CircleMap {
    pub fn linear() -> CircleMap {
        CircleMap {
            family: MapFamily::Linear,
            lambda_min: 2.0,
            branch_split: 0.5,
        }
    }

    pub fn perturbed_doubling(epsilon: f64) -> Result<CircleMap> {
        if !(0.0..MAX_EPSILON).contains(&epsilon) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must lie in [0, {MAX_EPSILON}), got {epsilon}"
            )));
        }
        // L(1/2) = 1 + ε sin(π) = 1, so the branch split is exactly 1/2.
        let map = CircleMap {
            family: MapFamily::PerturbedDoubling { epsilon },
            lambda_min: 2.0 - 2.0 * core::f64::consts::PI * epsilon,
            branch_split: 0.5,
        };
        map.validate()?;
        Ok(map)
    }

    /// A custom strictly increasing lift with `L(0) = 0`, `L(1) = 2`.
    /// The expansion constant is certified on a dense grid, with a small
    /// haircut because the grid cannot see between its own points.
    pub fn custom(lift: LiftFn, deriv: LiftFn) -> Result<CircleMap> {
        if libm::fabs(lift(0.0)) > 1e-12 || libm::fabs(lift(1.0) - 2.0) > 1e-12 {
            return Err(Error::InvalidParameter(
                "custom lift must satisfy L(0) = 0 and L(1) = 2".into(),
            ));
        }
        let mut grid_min = f64::INFINITY;
        for i in 0..=EXPANSION_GRID {
            let x = i as f64 / EXPANSION_GRID as f64;
            let d = deriv(x);
            if d < grid_min {
                grid_min = d;
            }
        }
        if !(grid_min > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "lift derivative must exceed 1 everywhere; sampled minimum {grid_min}"
            )));
        }
        let mut map = CircleMap {
            family: MapFamily::CustomLift { lift, deriv },
            lambda_min: grid_min * (1.0 - 1e-3),
            branch_split: 0.5,
        };
        map.branch_split = map.solve_lift_equals(1.0, 0.0, 1.0)?;
        map.validate()?;
        Ok(map)
    }

    fn validate(&self) -> Result<()> {
        for i in 0..=EXPANSION_GRID {
            let x = i as f64 / EXPANSION_GRID as f64;
            if !(self.deriv_lift(x) > 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "derivative not expanding at x = {x}"
                )));
            }
        }
        let degree = self.lift(1.0) - self.lift(0.0);
        if libm::fabs(degree - 2.0) > 1e-10 {
            return Err(Error::InvalidParameter(format!(
                "lift must increase by exactly 2 over one period, got {degree}"
            )));
        }
        if circle_dist(self.eval(self.fixed_point()), self.fixed_point()) > 1e-12 {
            return Err(Error::InvalidParameter("F(0) must equal 0".into()));
        }
        Ok(())
    }

    pub fn family(&self) -> &MapFamily {
        &self.family
    }

    /// Certified lower bound for the derivative of the lift.
    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    /// The fixed point generating the Markov partition.
    pub fn fixed_point(&self) -> f64 {
        0.0
    }

    /// Right endpoint of the branch domain `I_0 = [0, s)`; satisfies `L(s) = 1`.
    pub fn branch_split(&self) -> f64 {
        self.branch_split
    }

    /// The lift evaluated on `[0, 1]` (extended by degree-2 periodicity
    /// outside).
    pub fn lift(&self, x: f64) -> f64 {
        match &self.family {
            MapFamily::Linear => 2.0 * x,
            MapFamily::PerturbedDoubling { epsilon } => {
                2.0 * x + epsilon * libm::sin(2.0 * core::f64::consts::PI * x)
            }
            MapFamily::CustomLift { lift, .. } => lift(x),
        }
    }

    fn deriv_lift(&self, x: f64) -> f64 {
        match &self.family {
            MapFamily::Linear => 2.0,
            MapFamily::PerturbedDoubling { epsilon } => {
                2.0 + 2.0 * core::f64::consts::PI
                    * epsilon
                    * libm::cos(2.0 * core::f64::consts::PI * x)
            }
            MapFamily::CustomLift { deriv, .. } => deriv(x),
        }
    }

    /// `F(x) = L(x) mod 1`.
    pub fn eval(&self, x: f64) -> f64 {
        wrap_unit(self.lift(wrap_unit(x)))
    }

    /// `DF(x)`, which is also the Jacobian weight `g(x)` for the Lebesgue
    /// reference measure.
    pub fn deriv(&self, x: f64) -> f64 {
        self.deriv_lift(wrap_unit(x))
    }

    /// Solve `L(x) = target` by bisection bracketing plus Newton polish;
    /// the monotone lift guarantees a unique root in `[lo, hi]`.
    fn solve_lift_equals(&self, target: f64, mut lo: f64, mut hi: f64) -> Result<f64> {
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if self.lift(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut x = 0.5 * (lo + hi);
        for _ in 0..NEWTON_CAP {
            let r = self.lift(x) - target;
            if libm::fabs(r) <= NEWTON_TOL {
                break;
            }
            let mut next = x - r / self.deriv_lift(x);
            if !(lo..=hi).contains(&next) {
                next = 0.5 * (lo + hi);
            }
            if self.lift(next) < target {
                lo = next;
            } else {
                hi = next;
            }
            x = next;
        }
        let residual = libm::fabs(self.lift(x) - target);
        if residual > 1e-12 {
            return Err(Error::NonConvergence { residual });
        }
        Ok(x)
    }

    /// The branch inverse `h_b: [0,1) → I_b` with `F(h_b(y)) = y`.
    pub fn inverse_branch(&self, branch: u8, y: f64) -> Result<f64> {
        debug_assert!(branch < 2);
        let y = wrap_unit(y);
        // Preimages of the fixed point are known exactly; returning them
        // verbatim keeps partition endpoints nested bit-for-bit.
        if y == 0.0 {
            return Ok(if branch == 0 { 0.0 } else { self.branch_split });
        }
        let target = y + branch as f64;
        let (lo, hi) = if branch == 0 {
            (0.0, self.branch_split)
        } else {
            (self.branch_split, 1.0)
        };
        let x = self.solve_lift_equals(target, lo, hi)?;
        let residual = circle_dist(self.eval(x), y);
        if residual > BRANCH_RESIDUAL {
            return Err(Error::NonConvergence { residual });
        }
        Ok(x)
    }

    /// `[x, F x, …, F^{n−1} x]`.
    pub fn orbit(&self, x: f64, n: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(n);
        let mut y = wrap_unit(x);
        for _ in 0..n {
            out.push(y);
            y = self.eval(y);
        }
        out
    }

    /// `g_n(x)^β = (∏_{k<n} g(F^k x))^β`; the empty product is 1.
    /// Accumulates in log space beyond 64 factors to dodge overflow.
    pub fn weight_product(&self, x: f64, n: usize, beta: f64) -> f64 {
        if n > 64 {
            libm::exp(beta * self.log_weight_sum(x, n))
        } else {
            let mut p = 1.0;
            let mut y = wrap_unit(x);
            for _ in 0..n {
                p *= self.deriv(y);
                y = self.eval(y);
            }
            libm::pow(p, beta)
        }
    }

    /// Complex-exponent variant of [`weight_product`](Self::weight_product).
    pub fn weight_product_complex(&self, x: f64, n: usize, beta: Complex64) -> Complex64 {
        (beta * self.log_weight_sum(x, n)).exp()
    }

    /// `Σ_{k<n} ln g(F^k x)`.
    pub fn log_weight_sum(&self, x: f64, n: usize) -> f64 {
        let mut s = 0.0;
        let mut y = wrap_unit(x);
        for _ in 0..n {
            s += libm::log(self.deriv(y));
            y = self.eval(y);
        }
        s
    }
}
