//! External drift potentials `V` and regularized interaction kernels `W`.
//!
//! Both interaction variants model `W(x) = 2 chi log|x|`:
//!
//! * `Log1d` replaces the derivative inside `|x| < eps` by the odd saturation
//!   `2 chi sign(x) / eps`. The matching value is the antiderivative
//!   `2 chi (ln eps + |x|/eps - 1)` there, so the discrete energy stays
//!   finite and its gradient is exactly the force used by the dynamics.
//! * `Log2d` is the log kernel convolved with `phi_eps`, whose gradient has
//!   the closed form `2 chi x / |x|^2 (1 - exp(-|x|^2 / (8 eps^2)))` and whose
//!   value is `chi (ln(8 eps^2) - gamma + Ein(|x|^2 / (8 eps^2)))`.

use serde::{Deserialize, Serialize};

use crate::point::Point;
use crate::special::{ein, EULER_GAMMA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftPotential {
    #[default]
    None,
    /// `V(x) = |x|^2 / 2`.
    Quadratic,
}

impl DriftPotential {
    pub fn value(self, x: Point) -> f64 {
        match self {
            DriftPotential::None => 0.0,
            DriftPotential::Quadratic => 0.5 * x.norm_sq(),
        }
    }

    pub fn grad(self, x: Point) -> Point {
        match self {
            DriftPotential::None => Point::ZERO,
            DriftPotential::Quadratic => x,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum InteractionPotential {
    #[default]
    None,
    Log1d { chi: f64, eps: f64 },
    Log2d { chi: f64, eps: f64 },
}

impl InteractionPotential {
    pub fn is_none(&self) -> bool {
        matches!(self, InteractionPotential::None)
    }

    /// Radial coefficient `c(|x|^2)` with `grad W(x) = c * x`. Zero at the
    /// origin, which makes the self-interaction term vanish.
    #[inline]
    pub fn grad_coeff(&self, r2: f64) -> f64 {
        if r2 == 0.0 {
            return 0.0;
        }
        match *self {
            InteractionPotential::None => 0.0,
            InteractionPotential::Log1d { chi, eps } => {
                let r = r2.sqrt();
                2.0 * chi / (r * r.max(eps))
            }
            InteractionPotential::Log2d { chi, eps } => {
                let a = r2 / (8.0 * eps * eps);
                2.0 * chi * (-(-a).exp_m1()) / r2
            }
        }
    }

    pub fn grad(&self, x: Point) -> Point {
        x * self.grad_coeff(x.norm_sq())
    }

    pub fn value(&self, x: Point) -> f64 {
        match *self {
            InteractionPotential::None => 0.0,
            InteractionPotential::Log1d { chi, eps } => {
                let r = x.norm();
                if r >= eps {
                    2.0 * chi * r.ln()
                } else {
                    2.0 * chi * (eps.ln() + r / eps - 1.0)
                }
            }
            InteractionPotential::Log2d { chi, eps } => {
                let s = 8.0 * eps * eps;
                chi * (s.ln() - EULER_GAMMA + ein(x.norm_sq() / s))
            }
        }
    }
}
