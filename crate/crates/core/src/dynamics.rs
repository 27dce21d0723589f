//! Regularized velocity field, discrete energy and dissipation.
//!
//! With `s_i = (phi_eps * mu)(X_i)` the particles move with
//!
//! ```text
//! v_i = -grad V(X_i) - sum_j grad W(X_i - X_j) m_j
//!       - sum_j [F'(s_i) + F'(s_j)] grad phi_eps(X_i - X_j) m_j
//! ```
//!
//! which is `-(1/m_i)` times the gradient of the regularized energy
//! `E(X) = sum V m + 1/2 sum sum W m m + sum F(s_i) m_i`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::ParticleEnsemble;
use crate::error::{Error, Result};
use crate::mollifier::{Dimension, Mollifier};
use crate::point::Point;
use crate::potentials::{DriftPotential, InteractionPotential};
use crate::sum::folded_sum;

/// Diffusion exponent, drift, interaction and mollifier of one problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemSpec {
    m: f64,
    drift: DriftPotential,
    interaction: InteractionPotential,
    mollifier: Mollifier,
}

impl ProblemSpec {
    pub fn new(m: f64, drift: DriftPotential, interaction: InteractionPotential, mollifier: Mollifier) -> Result<Self> {
        if !(m >= 1.0 && m.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "diffusion exponent must satisfy m >= 1, got {m}"
            )));
        }
        match (interaction, mollifier.dimension()) {
            (InteractionPotential::Log1d { .. }, Dimension::Two) => {
                return Err(Error::InvalidArgument("log1d interaction needs dimension 1".into()))
            }
            (InteractionPotential::Log2d { .. }, Dimension::One) => {
                return Err(Error::InvalidArgument("log2d interaction needs dimension 2".into()))
            }
            _ => {}
        }
        if let InteractionPotential::Log1d { chi, eps } | InteractionPotential::Log2d { chi, eps } = interaction {
            if !(eps > 0.0 && eps.is_finite() && chi.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "log interaction needs finite chi and eps > 0, got chi = {chi}, eps = {eps}"
                )));
            }
        }
        Ok(ProblemSpec {
            m,
            drift,
            interaction,
            mollifier,
        })
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn drift(&self) -> DriftPotential {
        self.drift
    }

    pub fn interaction(&self) -> InteractionPotential {
        self.interaction
    }

    pub fn mollifier(&self) -> &Mollifier {
        &self.mollifier
    }

    pub fn dimension(&self) -> Dimension {
        self.mollifier.dimension()
    }

    /// `F'(s)`: `1/s` for `m = 1`, `s^(m-2)` otherwise.
    #[inline]
    pub fn internal_derivative(&self, s: f64) -> f64 {
        let m = self.m;
        if m == 1.0 {
            1.0 / s
        } else if m == 2.0 {
            1.0
        } else if m == 3.0 {
            s
        } else {
            s.powf(m - 2.0)
        }
    }

    /// `F(s)`: `ln s` for `m = 1`, `s^(m-1) / (m-1)` otherwise.
    pub fn internal_energy_density(&self, s: f64) -> f64 {
        let m = self.m;
        if m == 1.0 {
            s.ln()
        } else if m == 2.0 {
            s
        } else {
            s.powf(m - 1.0) / (m - 1.0)
        }
    }

    pub(crate) fn check(&self, e: &ParticleEnsemble) -> Result<()> {
        if e.dimension() != self.dimension() {
            return Err(Error::InvalidArgument(format!(
                "ensemble is {}-D but the problem is {}-D",
                e.dimension().get(),
                self.dimension().get()
            )));
        }
        Ok(())
    }
}

/// Which contributions enter the velocity. Everything is on by default;
/// tests switch parts off to isolate one mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Terms {
    pub drift: bool,
    pub interaction: bool,
    pub diffusion: bool,
}

impl Default for Terms {
    fn default() -> Self {
        Terms {
            drift: true,
            interaction: true,
            diffusion: true,
        }
    }
}

/// `(phi_eps * mu)(X_j)` for every particle.
pub fn conv_phi_at_particles(e: &ParticleEnsemble, moll: &Mollifier) -> Vec<f64> {
    conv_phi(e.positions(), e.masses(), moll)
}

pub(crate) fn conv_phi(pos: &[Point], masses: &[f64], moll: &Mollifier) -> Vec<f64> {
    let n = pos.len();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = pos[i];
            folded_sum(n, |j| moll.phi_r2((xi - pos[j]).norm_sq()) * masses[j])
        })
        .collect()
}

pub fn velocity_field(e: &ParticleEnsemble, p: &ProblemSpec) -> Result<Vec<Point>> {
    velocity_field_with(e, p, Terms::default())
}

pub fn velocity_field_with(e: &ParticleEnsemble, p: &ProblemSpec, terms: Terms) -> Result<Vec<Point>> {
    p.check(e)?;
    let mut out = vec![Point::ZERO; e.len()];
    velocities(e.positions(), e.masses(), p, terms, &mut out)?;
    Ok(out)
}

/// Velocity of every particle written into `out`.
pub(crate) fn velocities(pos: &[Point], masses: &[f64], p: &ProblemSpec, terms: Terms, out: &mut [Point]) -> Result<()> {
    let n = pos.len();
    let moll = &p.mollifier;
    let fp: Vec<f64> = if terms.diffusion {
        let s = conv_phi(pos, masses, moll);
        let fp: Vec<f64> = s.iter().map(|&s| p.internal_derivative(s)).collect();
        if let Some(index) = fp.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                index,
                what: format!("F'(s) with s = {:e}", s[index]),
            });
        }
        fp
    } else {
        Vec::new()
    };
    let w = if terms.interaction { p.interaction } else { InteractionPotential::None };
    let with_w = !w.is_none();
    let drift = if terms.drift { p.drift } else { DriftPotential::None };

    out.par_iter_mut().enumerate().for_each(|(i, vi)| {
        let xi = pos[i];
        let pair: Point = if terms.diffusion {
            let fpi = fp[i];
            folded_sum(n, |j| {
                let dx = xi - pos[j];
                let r2 = dx.norm_sq();
                let grad = dx * moll.phi_grad_coeff(r2);
                let d = grad * ((fpi + fp[j]) * masses[j]);
                if with_w {
                    d + dx * (w.grad_coeff(r2) * masses[j])
                } else {
                    d
                }
            })
        } else if with_w {
            folded_sum(n, |j| {
                let dx = xi - pos[j];
                dx * (w.grad_coeff(dx.norm_sq()) * masses[j])
            })
        } else {
            Point::ZERO
        };
        *vi = -(drift.grad(xi) + pair);
    });
    if let Some(index) = out.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            index,
            what: "velocity".into(),
        });
    }
    Ok(())
}

/// Regularized energy `sum V m + 1/2 sum sum W m m + sum F(s_i) m_i`.
pub fn discrete_energy(e: &ParticleEnsemble, p: &ProblemSpec) -> Result<f64> {
    p.check(e)?;
    Ok(energy(e.positions(), e.masses(), p))
}

pub(crate) fn energy(pos: &[Point], masses: &[f64], p: &ProblemSpec) -> f64 {
    let n = pos.len();
    let s = conv_phi(pos, masses, &p.mollifier);
    let w = p.interaction;
    let per_particle: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = pos[i];
            let mut v = p.drift.value(xi) + p.internal_energy_density(s[i]);
            if !w.is_none() {
                v += 0.5 * folded_sum(n, |j| w.value(xi - pos[j]) * masses[j]);
            }
            v * masses[i]
        })
        .collect();
    folded_sum(n, |i| per_particle[i])
}

/// `D = sum_i m_i |v_i|^2`, the rate at which the energy decreases.
pub fn dissipation(e: &ParticleEnsemble, p: &ProblemSpec) -> Result<f64> {
    let v = velocity_field(e, p)?;
    Ok(dissipation_of(&v, e.masses()))
}

pub(crate) fn dissipation_of(v: &[Point], masses: &[f64]) -> f64 {
    folded_sum(v.len(), |i| masses[i] * v[i].norm_sq())
}

/// Largest `|m_i v_i + dE/dX_i| / (1 + |dE/dX_i|)` over particles and
/// coordinates, with `dE/dX_i` from central differences of step `step`.
pub fn energy_gradient_check(e: &ParticleEnsemble, p: &ProblemSpec, step: f64) -> Result<f64> {
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    let v = velocity_field(e, p)?;
    let masses = e.masses();
    let mut pos = e.positions().to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..pos.len() {
        for k in 0..e.dimension().get() {
            let x0 = pos[i].coord(k);
            *pos[i].coord_mut(k) = x0 + step;
            let ep = energy(&pos, masses, p);
            *pos[i].coord_mut(k) = x0 - step;
            let em = energy(&pos, masses, p);
            *pos[i].coord_mut(k) = x0;
            let de = (ep - em) / (2.0 * step);
            let err = (masses[i] * v[i].coord(k) + de).abs() / (1.0 + de.abs());
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn line(xs: &[f64], ms: &[f64]) -> ParticleEnsemble {
        ParticleEnsemble::new(Dimension::One, xs.iter().map(|&x| Point::on_line(x)).collect(), ms.to_vec()).unwrap()
    }

    fn spec1(m: f64, eps: f64) -> ProblemSpec {
        ProblemSpec::new(
            m,
            DriftPotential::None,
            InteractionPotential::None,
            Mollifier::new(eps, Dimension::One).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn rejects_small_m() {
        let moll = Mollifier::new(0.1, Dimension::One).unwrap();
        let err = ProblemSpec::new(0.5, DriftPotential::None, InteractionPotential::None, moll).unwrap_err();
        assert!(err.to_string().contains("m >= 1"));
        assert!(ProblemSpec::new(
            1.0,
            DriftPotential::None,
            InteractionPotential::Log2d { chi: 1.0, eps: 0.1 },
            moll
        )
        .is_err());
    }

    #[test]
    fn conv_examples() {
        let p = spec1(2.0, 0.5);
        let moll = p.mollifier();
        let single = line(&[0.0], &[1.0]);
        assert_eq!(conv_phi_at_particles(&single, moll), vec![moll.phi_at_zero()]);
        let a = 0.3;
        let pair = line(&[-a, a], &[0.5, 0.5]);
        let expected = 0.5 * moll.phi_at_zero() + 0.5 * moll.phi(Point::on_line(2.0 * a));
        for s in conv_phi_at_particles(&pair, moll) {
            assert_relative_eq!(s, expected, max_relative = 1e-15);
        }
    }

    #[test]
    fn single_particle_does_not_move() {
        for m in [1.0, 2.0, 3.0] {
            let v = velocity_field(&line(&[0.7], &[1.0]), &spec1(m, 0.3)).unwrap();
            assert_eq!(v[0], Point::ZERO);
        }
    }

    #[test]
    fn two_particles_repel() {
        let v = velocity_field(&line(&[-0.25, 0.25], &[0.5, 0.5]), &spec1(2.0, 0.5)).unwrap();
        // x / (4 eps^2) phi(x) at x = 0.5, eps = 0.5
        let expected = 0.5 * 0.398_942_280_401_432_7 * (-0.125f64).exp();
        assert_relative_eq!(v[1].x, expected, max_relative = 1e-14);
        assert_relative_eq!(v[1].x, 0.176_032_663, max_relative = 1e-8);
        assert_eq!(v[0].x, -v[1].x);
    }

    #[test]
    fn pure_drift_hook() {
        let moll = Mollifier::new(0.2, Dimension::Two).unwrap();
        let p = ProblemSpec::new(
            2.0,
            DriftPotential::Quadratic,
            InteractionPotential::Log2d { chi: 1.0, eps: 0.2 },
            moll,
        )
        .unwrap();
        let e = ParticleEnsemble::new(
            Dimension::Two,
            vec![Point::new(1.0, -3.0), Point::new(0.2, 0.4)],
            vec![0.3, 0.7],
        )
        .unwrap();
        let v = velocity_field_with(
            &e,
            &p,
            Terms {
                drift: true,
                interaction: false,
                diffusion: false,
            },
        )
        .unwrap();
        assert_eq!(v, vec![Point::new(-1.0, 3.0), Point::new(-0.2, -0.4)]);
    }

    #[test]
    fn energy_examples() {
        let single = line(&[0.0], &[1.0]);
        assert_relative_eq!(
            discrete_energy(&single, &spec1(2.0, 0.5)).unwrap(),
            0.398_942_280_401_432_7,
            max_relative = 1e-15
        );
        let moll = Mollifier::new(0.5, Dimension::One).unwrap();
        let with_drift = ProblemSpec::new(2.0, DriftPotential::Quadratic, InteractionPotential::None, moll).unwrap();
        assert_relative_eq!(
            discrete_energy(&single, &with_drift).unwrap(),
            0.398_942_280_401_432_7,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            discrete_energy(&single, &spec1(1.0, 0.5)).unwrap(),
            -0.918_938_533_204_672_7,
            max_relative = 1e-14
        );
    }

    #[test]
    fn dissipation_examples() {
        let moll = Mollifier::new(0.5, Dimension::One).unwrap();
        let p = ProblemSpec::new(2.0, DriftPotential::Quadratic, InteractionPotential::None, moll).unwrap();
        let e = line(&[2.0], &[0.3]);
        assert_relative_eq!(dissipation(&e, &p).unwrap(), 4.0 * 0.3, max_relative = 1e-15);
        assert_eq!(dissipation(&line(&[2.0], &[1.0]), &spec1(3.0, 0.5)).unwrap(), 0.0);
    }

    #[test]
    fn gradient_check_single_particle() {
        let moll = Mollifier::new(0.5, Dimension::One).unwrap();
        let p = ProblemSpec::new(2.0, DriftPotential::Quadratic, InteractionPotential::None, moll).unwrap();
        assert!(energy_gradient_check(&line(&[0.4], &[1.0]), &p, 1e-5).unwrap() < 1e-9);
        assert!(energy_gradient_check(&line(&[0.4], &[1.0]), &spec1(2.0, 0.5), 1e-5).unwrap() < 1e-12);
    }

    #[test]
    fn gradient_check_small_ensembles() {
        let xs = [-0.9, -0.35, 0.0, 0.42, 1.1, 1.3, -1.7, 0.77, -0.05, 2.0];
        let ms = [0.05, 0.1, 0.2, 0.15, 0.05, 0.1, 0.1, 0.1, 0.1, 0.05];
        let moll = Mollifier::new(0.3, Dimension::One).unwrap();
        let p = ProblemSpec::new(2.0, DriftPotential::Quadratic, InteractionPotential::None, moll).unwrap();
        assert!(energy_gradient_check(&line(&xs, &ms), &p, 1e-5).unwrap() < 1e-6);
        let p1 = spec1(1.0, 0.3);
        assert!(energy_gradient_check(&line(&xs[..5], &ms[..5]), &p1, 1e-5).unwrap() < 1e-6);
    }

    #[test]
    fn m2_equals_doubled_phi_interaction() {
        let xs = [-0.9, -0.35, 0.0, 0.42, 1.1];
        let ms = [0.05, 0.3, 0.2, 0.15, 0.3];
        let e = line(&xs, &ms);
        let p = spec1(2.0, 0.25);
        let v = velocity_field(&e, &p).unwrap();
        let moll = p.mollifier();
        for (i, vi) in v.iter().enumerate() {
            let r: Point = folded_sum(xs.len(), |j| moll.phi_grad(e.positions()[i] - e.positions()[j]) * (2.0 * ms[j]));
            assert_eq!(*vi, -r);
        }
    }

    fn ensemble_2d() -> impl Strategy<Value = ParticleEnsemble> {
        prop::collection::vec((-1.5f64..1.5, -1.5f64..1.5, 0.01f64..1.0), 1..12).prop_map(|v| {
            ParticleEnsemble::new(
                Dimension::Two,
                v.iter().map(|&(x, y, _)| Point::new(x, y)).collect(),
                v.iter().map(|&(_, _, m)| m).collect(),
            )
            .unwrap()
        })
    }

    proptest! {
        #[test]
        fn momentum_is_conserved(e in ensemble_2d(), m in prop::sample::select(vec![1.0, 2.0, 3.0])) {
            let moll = Mollifier::new(0.3, Dimension::Two).unwrap();
            let p = ProblemSpec::new(m, DriftPotential::None, InteractionPotential::Log2d { chi: 0.5, eps: 0.3 }, moll).unwrap();
            let v = velocity_field(&e, &p).unwrap();
            let total = folded_sum(v.len(), |i| v[i] * e.masses()[i]);
            prop_assert!(total.norm() < 1e-12 * (1.0 + v.iter().map(|x| x.norm()).fold(0.0, f64::max)));
        }

        #[test]
        fn symmetric_ensembles_have_odd_velocities(pts in prop::collection::vec((0.01f64..1.5, -1.5f64..1.5, 0.01f64..1.0), 1..8)) {
            let mut pos: Vec<Point> = pts.iter().map(|&(x, y, _)| Point::new(x, y)).collect();
            let mut ms: Vec<f64> = pts.iter().map(|&(_, _, m)| m).collect();
            let mirrored: Vec<Point> = pos.iter().rev().map(|&p| -p).collect();
            let mm: Vec<f64> = ms.iter().rev().cloned().collect();
            pos.extend(mirrored);
            ms.extend(mm);
            let e = ParticleEnsemble::new(Dimension::Two, pos, ms).unwrap();
            let moll = Mollifier::new(0.2, Dimension::Two).unwrap();
            let p = ProblemSpec::new(1.0, DriftPotential::Quadratic, InteractionPotential::Log2d { chi: 0.3, eps: 0.2 }, moll).unwrap();
            let v = velocity_field(&e, &p).unwrap();
            let n = v.len();
            for k in 0..n {
                prop_assert_eq!(v[k], -v[n - 1 - k]);
            }
        }

        #[test]
        fn velocity_is_permutation_equivariant(e in ensemble_2d(), seed in 0usize..1000) {
            let n = e.len();
            // rotation followed by an optional reversal
            let mut perm: Vec<usize> = (0..n).map(|k| (k + seed) % n).collect();
            if seed % 2 == 1 {
                perm.reverse();
            }
            let e2 = ParticleEnsemble::new(
                Dimension::Two,
                perm.iter().map(|&k| e.positions()[k]).collect(),
                perm.iter().map(|&k| e.masses()[k]).collect(),
            ).unwrap();
            let moll = Mollifier::new(0.25, Dimension::Two).unwrap();
            let p = ProblemSpec::new(2.0, DriftPotential::None, InteractionPotential::None, moll).unwrap();
            let v = velocity_field(&e, &p).unwrap();
            let v2 = velocity_field(&e2, &p).unwrap();
            for (slot, &k) in perm.iter().enumerate() {
                prop_assert!((v2[slot] - v[k]).norm() <= 1e-13 * (1.0 + v[k].norm()));
            }
        }
    }
}
