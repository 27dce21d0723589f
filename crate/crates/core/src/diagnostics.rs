//! Stability observables along computed flows.
//!
//! With `s_i = (phi_eps * mu)(X_i)` and the reweighted atoms
//! `p = sum_i m_i s_i^(m-2) delta_{X_i}`:
//!
//! ```text
//! nonlocal Sobolev = int |grad zeta*p| (zeta*mu) + |grad zeta*mu| (zeta*p) dx
//! BV_eps norm      = int sum_j zeta(x - X_j) |grad zeta*p (x) + grad zeta*mu (x) s_j^(m-2)| m_j dx
//! ```
//!
//! For `m = 2` both collapse to `2 int |grad zeta*mu| (zeta*mu) dx`. The
//! `x` integrals use the trapezoid rule on a box lattice that covers the
//! particles with a margin of several `eps`.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, ProblemSpec};
use crate::ensemble::ParticleEnsemble;
use crate::error::{Error, Result};
use crate::grid::fmt;
use crate::integrator::Trajectory;
use crate::mollifier::{Dimension, Mollifier};
use crate::point::Point;
use crate::registry::Registry;
use crate::sum::folded_sum;

/// Resolution of the `x` quadrature, relative to the mollifier width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSettings {
    /// Lattice nodes per `eps`; at least 2. The integrands have kinks where
    /// `grad zeta*mu` vanishes, which limits the trapezoid rule to a relative
    /// error near `1 / (12 nodes_per_eps^2)`, hence the fine default.
    pub nodes_per_eps: f64,
    /// Margin around the particle bounding box, in units of `eps`.
    pub padding: f64,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        QuadratureSettings {
            nodes_per_eps: 40.0,
            padding: 6.0,
        }
    }
}

impl QuadratureSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.nodes_per_eps >= 2.0 && self.nodes_per_eps.is_finite()) {
            return Err(Error::config(
                "diagnostics.nodes_per_eps",
                format!("must be at least 2 so the spacing resolves the mollifier, got {}", self.nodes_per_eps),
            ));
        }
        if !(self.padding > 0.0 && self.padding.is_finite()) {
            return Err(Error::config("diagnostics.padding", format!("must be positive, got {}", self.padding)));
        }
        Ok(())
    }

    pub fn refined(&self, factor: f64) -> Self {
        QuadratureSettings {
            nodes_per_eps: self.nodes_per_eps * factor,
            ..*self
        }
    }
}

/// Box lattice `lo + h k` for the continuum integrals.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    pub spacing: f64,
    pub lo: Point,
    pub counts: [usize; 2],
    pub dimension: Dimension,
}

impl QuadratureGrid {
    /// Lattice covering the particles of `e` padded by `padding * eps`.
    pub fn covering(e: &ParticleEnsemble, moll: &Mollifier, s: &QuadratureSettings) -> Result<Self> {
        s.validate()?;
        if e.is_empty() {
            return Err(Error::EmptyEnsemble("no particles to integrate over".into()));
        }
        let eps = moll.epsilon();
        let spacing = eps / s.nodes_per_eps;
        let pad = s.padding * eps;
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in e.positions() {
            lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        let d = e.dimension();
        let mut counts = [1usize; 2];
        let mut start = Point::ZERO;
        for k in 0..d.get() {
            let a = lo.coord(k) - pad;
            let b = hi.coord(k) + pad;
            counts[k] = ((b - a) / spacing).ceil() as usize + 1;
            *start.coord_mut(k) = a;
        }
        Ok(QuadratureGrid {
            spacing,
            lo: start,
            counts,
            dimension: d,
        })
    }

    pub fn len(&self) -> usize {
        match self.dimension {
            Dimension::One => self.counts[0],
            Dimension::Two => self.counts[0] * self.counts[1],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn node(&self, k: usize) -> Point {
        let h = self.spacing;
        match self.dimension {
            Dimension::One => Point::on_line(self.lo.x + k as f64 * h),
            Dimension::Two => {
                let (i, j) = (k / self.counts[1], k % self.counts[1]);
                Point::new(self.lo.x + i as f64 * h, self.lo.y + j as f64 * h)
            }
        }
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dimension.get() as i32)
    }

    /// `int f dx`; `f` is assumed to vanish at the boundary, where the
    /// trapezoid rule and the plain lattice sum coincide.
    fn integrate(&self, f: impl Fn(Point) -> f64 + Sync) -> f64 {
        let vals: Vec<f64> = (0..self.len()).into_par_iter().map(|k| f(self.node(k))).collect();
        folded_sum(vals.len(), |k| vals[k]) * self.cell_volume()
    }
}

/// `s_i^(m-2)` at every particle.
fn weight_factors(e: &ParticleEnsemble, p: &ProblemSpec) -> Vec<f64> {
    let s = dynamics::conv_phi_at_particles(e, p.mollifier());
    s.iter().map(|&si| si.powf(p.m() - 2.0)).collect()
}

/// `(zeta*mu, zeta*p, grad zeta*mu, grad zeta*p)` at `x`.
fn smoothed(x: Point, pos: &[Point], masses: &[f64], w: &[f64], moll: &Mollifier) -> (f64, f64, Point, Point) {
    let cut = moll.zeta_cutoff_sq();
    folded_sum(pos.len(), |j| {
        let dx = x - pos[j];
        let r2 = dx.norm_sq();
        if r2 > cut {
            return Quad::default();
        }
        let z = moll.zeta_r2(r2);
        let g = dx * moll.zeta_grad_coeff(r2);
        let q = masses[j] * w[j];
        Quad(z * masses[j], z * q, g * masses[j], g * q)
    })
    .into()
}

#[derive(Clone, Copy, Default)]
struct Quad(f64, f64, Point, Point);

impl std::ops::Add for Quad {
    type Output = Quad;
    fn add(self, o: Quad) -> Quad {
        Quad(self.0 + o.0, self.1 + o.1, self.2 + o.2, self.3 + o.3)
    }
}

impl From<Quad> for (f64, f64, Point, Point) {
    fn from(q: Quad) -> Self {
        (q.0, q.1, q.2, q.3)
    }
}

pub fn nonlocal_sobolev(e: &ParticleEnsemble, p: &ProblemSpec, q: &QuadratureGrid) -> Result<f64> {
    p.check(e)?;
    let w = weight_factors(e, p);
    let (pos, masses, moll) = (e.positions(), e.masses(), p.mollifier());
    Ok(q.integrate(|x| {
        let (zm, zp, gm, gp) = smoothed(x, pos, masses, &w, moll);
        gp.norm() * zm + gm.norm() * zp
    }))
}

pub fn bv_eps_norm(e: &ParticleEnsemble, p: &ProblemSpec, q: &QuadratureGrid) -> Result<f64> {
    p.check(e)?;
    let w = weight_factors(e, p);
    let (pos, masses, moll) = (e.positions(), e.masses(), p.mollifier());
    let cut = moll.zeta_cutoff_sq();
    Ok(q.integrate(|x| {
        let (_, _, gm, gp) = smoothed(x, pos, masses, &w, moll);
        folded_sum(pos.len(), |j| {
            let r2 = (x - pos[j]).norm_sq();
            if r2 > cut {
                return 0.0;
            }
            moll.zeta_r2(r2) * (gp + gm * w[j]).norm() * masses[j]
        })
    }))
}

/// `sum_i m_i |v_i|` for the diffusive part of the velocity alone.
pub fn diffusive_velocity_l1(e: &ParticleEnsemble, p: &ProblemSpec) -> Result<f64> {
    let terms = dynamics::Terms {
        drift: false,
        interaction: false,
        diffusion: true,
    };
    let v = dynamics::velocity_field_with(e, p, terms)?;
    Ok(folded_sum(v.len(), |i| v[i].norm() * e.masses()[i]))
}

/// A scalar evaluated on each snapshot of a trajectory.
pub trait Observable: Send + Sync {
    fn name(&self) -> &'static str;
    fn evaluate(&self, e: &ParticleEnsemble, p: &ProblemSpec) -> Result<f64>;
}

struct Energy;
struct Dissipation;
struct SecondMoment;
struct NonlocalSobolev(QuadratureSettings);
struct BvNorm(QuadratureSettings);

impl Observable for Energy {
    fn name(&self) -> &'static str {
        "energy"
    }
    fn evaluate(&self, e: &ParticleEnsemble, p: &ProblemSpec) -> Result<f64> {
        dynamics::discrete_energy(e, p)
    }
}

impl Observable for Dissipation {
    fn name(&self) -> &'static str {
        "dissipation"
    }
    fn evaluate(&self, e: &ParticleEnsemble, p: &ProblemSpec) -> Result<f64> {
        dynamics::dissipation(e, p)
    }
}

impl Observable for SecondMoment {
    fn name(&self) -> &'static str {
        "second_moment"
    }
    fn evaluate(&self, e: &ParticleEnsemble, _: &ProblemSpec) -> Result<f64> {
        Ok(e.second_moment())
    }
}

impl Observable for NonlocalSobolev {
    fn name(&self) -> &'static str {
        "nonlocal_sobolev"
    }
    fn evaluate(&self, e: &ParticleEnsemble, p: &ProblemSpec) -> Result<f64> {
        nonlocal_sobolev(e, p, &QuadratureGrid::covering(e, p.mollifier(), &self.0)?)
    }
}

impl Observable for BvNorm {
    fn name(&self) -> &'static str {
        "bv_norm"
    }
    fn evaluate(&self, e: &ParticleEnsemble, p: &ProblemSpec) -> Result<f64> {
        bv_eps_norm(e, p, &QuadratureGrid::covering(e, p.mollifier(), &self.0)?)
    }
}

fn build_energy(_: &QuadratureSettings) -> Result<Box<dyn Observable>> {
    Ok(Box::new(Energy))
}
fn build_dissipation(_: &QuadratureSettings) -> Result<Box<dyn Observable>> {
    Ok(Box::new(Dissipation))
}
fn build_second_moment(_: &QuadratureSettings) -> Result<Box<dyn Observable>> {
    Ok(Box::new(SecondMoment))
}
fn build_sobolev(s: &QuadratureSettings) -> Result<Box<dyn Observable>> {
    s.validate()?;
    Ok(Box::new(NonlocalSobolev(*s)))
}
fn build_bv(s: &QuadratureSettings) -> Result<Box<dyn Observable>> {
    s.validate()?;
    Ok(Box::new(BvNorm(*s)))
}

/// Available observables: `energy`, `dissipation`, `second_moment`,
/// `nonlocal_sobolev`, `bv_norm`.
pub fn observables() -> Registry<dyn Observable, QuadratureSettings> {
    Registry::new("observable")
        .register("energy", build_energy)
        .register("dissipation", build_dissipation)
        .register("second_moment", build_second_moment)
        .register("nonlocal_sobolev", build_sobolev)
        .register("bv_norm", build_bv)
        .alias("m2", "second_moment")
        .alias("bv_eps", "bv_norm")
}

/// Observables tabulated against time, one row per snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesTable {
    pub columns: Vec<&'static str>,
    pub times: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

impl SeriesTable {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| *c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn write_csv_to<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["t"];
        header.extend(&self.columns);
        out.write_record(&header)?;
        for (t, row) in self.times.iter().zip(&self.rows) {
            let mut rec = vec![fmt(*t)];
            rec.extend(row.iter().map(|v| fmt(*v)));
            out.write_record(&rec)?;
        }
        out.flush().map_err(|e| Error::io("series", e))?;
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv_to(&mut buf)?;
        crate::io::write_atomic(path, &buf)
    }
}

/// Evaluates the named observables on every snapshot of `traj`.
pub fn assemble_series(traj: &Trajectory, p: &ProblemSpec, q: &QuadratureSettings, which: &[&str]) -> Result<SeriesTable> {
    let reg = observables();
    let obs: Vec<Box<dyn Observable>> = which.iter().map(|n| reg.build(n, q)).collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(traj.snapshots.len());
    for (_, e) in &traj.snapshots {
        rows.push(obs.iter().map(|o| o.evaluate(e, p)).collect::<Result<Vec<f64>>>()?);
    }
    Ok(SeriesTable {
        columns: obs.iter().map(|o| o.name()).collect(),
        times: traj.times(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{integrate, IntegratorConfig};
    use crate::potentials::{DriftPotential, InteractionPotential};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn problem(m: f64, eps: f64, d: Dimension) -> ProblemSpec {
        ProblemSpec::new(m, DriftPotential::None, InteractionPotential::None, Mollifier::new(eps, d).unwrap()).unwrap()
    }

    fn single(d: Dimension) -> ParticleEnsemble {
        ParticleEnsemble::new(d, vec![Point::ZERO], vec![1.0]).unwrap()
    }

    fn both(e: &ParticleEnsemble, p: &ProblemSpec, s: &QuadratureSettings) -> (f64, f64) {
        let q = QuadratureGrid::covering(e, p.mollifier(), s).unwrap();
        (nonlocal_sobolev(e, p, &q).unwrap(), bv_eps_norm(e, p, &q).unwrap())
    }

    #[test]
    fn single_particle_closed_form() {
        // 2 int |zeta'| zeta = 2 zeta(0)^2 for a unit atom
        let p = problem(2.0, 0.5, Dimension::One);
        let (ns, bv) = both(&single(Dimension::One), &p, &QuadratureSettings::default());
        let z0 = (4.0 * std::f64::consts::PI * 0.25f64).powf(-0.5);
        assert!((z0 - 0.564_190).abs() < 1e-6);
        assert_relative_eq!(ns, 2.0 * z0 * z0, max_relative = 1e-4);
        assert!((ns - std::f64::consts::FRAC_2_PI).abs() < 1e-4);
        assert_relative_eq!(bv, ns, max_relative = 1e-12);
    }

    #[test]
    fn single_particle_scales_like_eps_to_minus_m() {
        for m in [1.0, 2.0, 3.0] {
            let s = QuadratureSettings::default();
            let (a, _) = both(&single(Dimension::One), &problem(m, 0.3, Dimension::One), &s);
            let (b, bb) = both(&single(Dimension::One), &problem(m, 0.6, Dimension::One), &s);
            // s^(m-2) ~ eps^(2-m) and int |zeta'| zeta = zeta(0)^2 ~ eps^-2
            let want = 2f64.powf(-m);
            assert_relative_eq!(b / a, want, max_relative = 1e-6);
            assert!(bb > 0.0 && bb.is_finite());
        }
    }

    #[test]
    fn m2_collapse_and_refinement() {
        let pos: Vec<Point> = [-0.7, -0.2, 0.1, 0.15, 0.9].iter().map(|&x| Point::on_line(x)).collect();
        let e = ParticleEnsemble::new(Dimension::One, pos, vec![0.1, 0.3, 0.2, 0.25, 0.15]).unwrap();
        let p = problem(2.0, 0.2, Dimension::One);
        let s = QuadratureSettings::default();
        let (ns, bv) = both(&e, &p, &s);
        assert_relative_eq!(ns, bv, max_relative = 1e-12);
        let (fine, _) = both(&e, &p, &s.refined(2.0));
        assert!(((fine - ns) / fine).abs() < 1e-4, "{ns} vs {fine}");
    }

    #[test]
    fn two_dimensional_single_particle() {
        // int |grad zeta| zeta = (4 pi eps^2)^-2 * pi * eps * sqrt(pi / 2) in the plane
        let eps: f64 = 0.3;
        let p = problem(2.0, eps, Dimension::Two);
        let e = single(Dimension::Two);
        let s = QuadratureSettings::default();
        let (a, b) = both(&e, &p, &s);
        let pi = std::f64::consts::PI;
        let exact = 2.0 * (4.0 * pi * eps * eps).powi(-2) * pi * eps * (pi / 2.0).sqrt();
        assert_relative_eq!(a, exact, max_relative = 1e-6);
        assert_relative_eq!(a, b, max_relative = 1e-12);
        let (fine, _) = both(&e, &p, &s.refined(2.0));
        assert!(((fine - a) / fine).abs() < 1e-4);
    }

    #[test]
    fn series_table() {
        let e = ParticleEnsemble::new(Dimension::One, vec![Point::on_line(-1.0), Point::on_line(1.0)], vec![0.5, 0.5]).unwrap();
        let p = problem(2.0, 0.3, Dimension::One);
        let cfg = IntegratorConfig {
            t_final: 0.02,
            record_times: vec![0.01],
            ..Default::default()
        };
        let traj = integrate(&e, &p, &cfg).unwrap();
        let t = assemble_series(&traj, &p, &QuadratureSettings::default(), &["m2", "nonlocal_sobolev"]).unwrap();
        assert_eq!(t.rows.len(), traj.snapshots.len());
        assert_eq!(t.columns, vec!["second_moment", "nonlocal_sobolev"]);
        assert_eq!(t.column("second_moment").unwrap()[0], 1.0);
        let empty = assemble_series(&traj, &p, &QuadratureSettings::default(), &[]).unwrap();
        assert!(empty.columns.is_empty() && empty.rows.iter().all(|r| r.is_empty()));
        let mut buf = Vec::new();
        empty.write_csv_to(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("t\n0e0\n"));
        assert!(assemble_series(&traj, &p, &QuadratureSettings::default(), &["entropy"]).is_err());
    }

    fn ensemble_1d() -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((-1.5f64..1.5, 0.05f64..1.0), 1..8)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn bv_dominates_diffusive_velocity(v in ensemble_1d(), m in prop::sample::select(vec![1.0, 2.0, 3.0])) {
            let e = ParticleEnsemble::new(
                Dimension::One,
                v.iter().map(|p| Point::on_line(p.0)).collect(),
                v.iter().map(|p| p.1).collect(),
            ).unwrap();
            let p = problem(m, 0.25, Dimension::One);
            let (_, bv) = both(&e, &p, &QuadratureSettings::default());
            let l1 = diffusive_velocity_l1(&e, &p).unwrap();
            prop_assert!(bv >= l1 * (1.0 - 1e-6), "{} < {}", bv, l1);
        }

        #[test]
        fn invariant_under_permutation_and_translation(v in ensemble_1d(), shift in -2.0f64..2.0, m in prop::sample::select(vec![1.0, 2.0, 3.0])) {
            let mk = |v: &[(f64, f64)], c: f64| ParticleEnsemble::new(
                Dimension::One,
                v.iter().map(|p| Point::on_line(p.0 + c)).collect(),
                v.iter().map(|p| p.1).collect(),
            ).unwrap();
            let p = problem(m, 0.25, Dimension::One);
            let s = QuadratureSettings::default();
            let (a, b) = both(&mk(&v, 0.0), &p, &s);
            let mut r = v.clone();
            r.reverse();
            let (ra, rb) = both(&mk(&r, shift), &p, &s);
            prop_assert!((a - ra).abs() <= 1e-6 * a.abs().max(1e-12));
            prop_assert!((b - rb).abs() <= 1e-6 * b.abs().max(1e-12));
        }
    }
}
