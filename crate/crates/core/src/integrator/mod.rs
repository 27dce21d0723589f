//! Time integration of the particle system with trajectory recording.

mod dopri;
mod rk4;

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::{self, ProblemSpec, Terms};
use crate::ensemble::ParticleEnsemble;
use crate::error::{Error, Result};
use crate::grid::fmt;
use crate::point::Point;
use crate::registry::Registry;

pub use dopri::DormandPrince;
pub use rk4::ClassicalRk4;

/// Right-hand side of `y' = f(t, y)`.
pub trait OdeSystem: Sync {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dydt: &mut [f64]) -> Result<()>;
}

/// One-step method. `step` advances `y` from `t` by at most `dt_max` and
/// returns the step actually taken.
pub trait Stepper: Send {
    fn name(&self) -> &'static str;

    /// Called once before the first step.
    fn start(&mut self, sys: &dyn OdeSystem, t0: f64, y0: &[f64], t_final: f64) -> Result<()>;

    fn step(&mut self, sys: &dyn OdeSystem, t: f64, y: &mut [f64], dt_max: f64) -> Result<f64>;

    fn stats(&self) -> StepStats;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: u64,
    pub rejected: u64,
    pub rhs_evaluations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    /// Registered stepper name, see [`steppers`].
    pub scheme: String,
    /// Fixed step of `rk4_fixed`.
    pub dt: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// First adaptive step; chosen automatically when absent.
    pub dt_init: Option<f64>,
    pub dt_max: Option<f64>,
    pub t_final: f64,
    /// Output times in `[0, t_final]`; `0` and `t_final` are always recorded.
    pub record_times: Vec<f64>,
    pub max_steps: u64,
    /// Particles closer than `merge_fraction * eps` are fused into one;
    /// `0` disables merging.
    pub merge_fraction: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            scheme: "rk45_adaptive".into(),
            dt: 1e-3,
            rel_tol: 1e-6,
            abs_tol: 1e-9,
            dt_init: None,
            dt_max: None,
            t_final: 1.0,
            record_times: Vec::new(),
            max_steps: 2_000_000,
            merge_fraction: 1e-4,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::config(format!("integrator.{field}"), msg));
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return bad("t_final", format!("must be positive, got {}", self.t_final));
        }
        if !(self.dt > 0.0) {
            return bad("dt", format!("must be positive, got {}", self.dt));
        }
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) {
            return bad("rel_tol", "tolerances must be positive".into());
        }
        if let Some(h) = self.dt_init {
            if !(h > 0.0) {
                return bad("dt_init", format!("must be positive, got {h}"));
            }
        }
        if let Some(h) = self.dt_max {
            if !(h > 0.0) {
                return bad("dt_max", format!("must be positive, got {h}"));
            }
        }
        for &t in &self.record_times {
            if !(0.0..=self.t_final).contains(&t) {
                return bad("record_times", format!("{t} lies outside [0, {}]", self.t_final));
            }
        }
        if self.record_times.windows(2).any(|w| w[1] < w[0]) {
            return bad("record_times", "must be sorted".into());
        }
        if self.max_steps == 0 {
            return bad("max_steps", "must be positive".into());
        }
        if !(0.0..1.0).contains(&self.merge_fraction) {
            return bad("merge_fraction", format!("must lie in [0, 1), got {}", self.merge_fraction));
        }
        steppers().resolve(&self.scheme)?;
        Ok(())
    }

    /// Output times: `0`, the configured record times and `t_final`,
    /// strictly increasing.
    pub fn output_times(&self) -> Vec<f64> {
        let mut out = vec![0.0];
        for &t in self.record_times.iter().chain(std::iter::once(&self.t_final)) {
            if t > *out.last().unwrap() {
                out.push(t);
            }
        }
        out
    }
}

/// All registered time steppers.
pub fn steppers() -> Registry<dyn Stepper, IntegratorConfig> {
    fn rk4(c: &IntegratorConfig) -> Result<Box<dyn Stepper>> {
        Ok(Box::new(ClassicalRk4::new(c.dt)?))
    }
    fn dopri(c: &IntegratorConfig) -> Result<Box<dyn Stepper>> {
        Ok(Box::new(DormandPrince::new(c.rel_tol, c.abs_tol, c.dt_init, c.dt_max)?))
    }
    Registry::new("scheme")
        .register("rk4_fixed", rk4)
        .register("rk45_adaptive", dopri)
        .alias("rk4", "rk4_fixed")
        .alias("dopri5", "rk45_adaptive")
        .alias("rk45", "rk45_adaptive")
}

/// Why a run stopped before `t_final`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowUp {
    pub time: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriveOutcome {
    pub stats: StepStats,
    pub blow_up: Option<BlowUp>,
}

/// Integrate `sys` from `y0`, calling `observe` at every output time.
///
/// Output times are hit exactly by shortening the step that would cross
/// them. Step-size underflow, a non-finite state or an exhausted step
/// budget stop the run early and are reported in the outcome.
pub fn drive(
    sys: &dyn OdeSystem,
    stepper: &mut dyn Stepper,
    y0: &[f64],
    cfg: &IntegratorConfig,
    observe: &mut dyn FnMut(f64, &[f64]) -> Result<()>,
) -> Result<DriveOutcome> {
    cfg.validate()?;
    if y0.len() != sys.dim() {
        return Err(Error::InvalidArgument(format!(
            "state has length {} but the system has dimension {}",
            y0.len(),
            sys.dim()
        )));
    }
    let mut y = y0.to_vec();
    let times = cfg.output_times();
    let mut cur = Cursor::new(&times);
    observe(0.0, &y)?;
    let blow_up = match advance(sys, stepper, &mut y, &mut cur, cfg, observe, &mut |_, _| false)? {
        Halt::Stopped(b) => Some(b),
        Halt::Finished | Halt::Interrupted => None,
    };
    Ok(DriveOutcome {
        stats: stepper.stats(),
        blow_up,
    })
}

/// Progress through the output times, carried across restarts.
struct Cursor<'a> {
    t: f64,
    next: usize,
    times: &'a [f64],
    steps: u64,
}

impl<'a> Cursor<'a> {
    fn new(times: &'a [f64]) -> Self {
        Cursor { t: 0.0, next: 1, times, steps: 0 }
    }
}

enum Halt {
    Finished,
    Stopped(BlowUp),
    /// `interrupt` asked for a restart after an accepted step.
    Interrupted,
}

/// Step from `cur.t` until the last output time, an early stop, or until
/// `interrupt` returns true after an accepted step.
fn advance(
    sys: &dyn OdeSystem,
    stepper: &mut dyn Stepper,
    y: &mut [f64],
    cur: &mut Cursor,
    cfg: &IntegratorConfig,
    observe: &mut dyn FnMut(f64, &[f64]) -> Result<()>,
    interrupt: &mut dyn FnMut(f64, &[f64]) -> bool,
) -> Result<Halt> {
    let stopped = |t: f64, e: Error| -> Result<Halt> {
        match e {
            Error::StepUnderflow { .. } | Error::NonFinite { .. } => Ok(Halt::Stopped(BlowUp {
                time: t,
                reason: e.to_string(),
            })),
            other => Err(other),
        }
    };
    if let Err(e) = stepper.start(sys, cur.t, y, cfg.t_final) {
        return stopped(cur.t, e);
    }
    while cur.next < cur.times.len() {
        let target = cur.times[cur.next];
        if cur.steps >= cfg.max_steps {
            log::warn!("step budget of {} exhausted at t = {}", cfg.max_steps, cur.t);
            return Ok(Halt::Stopped(BlowUp {
                time: cur.t,
                reason: format!("step budget of {} exhausted", cfg.max_steps),
            }));
        }
        let remaining = target - cur.t;
        match stepper.step(sys, cur.t, y, remaining) {
            Ok(h) => {
                cur.steps += 1;
                // land exactly on the target when the step was truncated to it
                cur.t = if h >= remaining { target } else { cur.t + h };
            }
            Err(e) => return stopped(cur.t, e),
        }
        if cur.t == target {
            observe(cur.t, y)?;
            cur.next += 1;
        }
        if cur.next < cur.times.len() && interrupt(cur.t, y) {
            return Ok(Halt::Interrupted);
        }
    }
    Ok(Halt::Finished)
}

/// The particle ODE `X_i' = v_i(X)` with a flat state
/// `[x_0, (y_0), x_1, (y_1), ...]`.
pub struct ParticleSystem<'a> {
    masses: &'a [f64],
    problem: &'a ProblemSpec,
    terms: Terms,
}

impl<'a> ParticleSystem<'a> {
    pub fn new(masses: &'a [f64], problem: &'a ProblemSpec) -> Self {
        ParticleSystem {
            masses,
            problem,
            terms: Terms::default(),
        }
    }

    pub fn with_terms(mut self, terms: Terms) -> Self {
        self.terms = terms;
        self
    }

    fn d(&self) -> usize {
        self.problem.dimension().get()
    }

    pub fn flatten(&self, pos: &[Point]) -> Vec<f64> {
        let d = self.d();
        let mut y = Vec::with_capacity(pos.len() * d);
        for p in pos {
            y.extend((0..d).map(|k| p.coord(k)));
        }
        y
    }

    pub fn unflatten(&self, y: &[f64]) -> Vec<Point> {
        match self.d() {
            1 => y.iter().map(|&x| Point::on_line(x)).collect(),
            _ => y.chunks_exact(2).map(|c| Point::new(c[0], c[1])).collect(),
        }
    }
}

impl OdeSystem for ParticleSystem<'_> {
    fn dim(&self) -> usize {
        self.masses.len() * self.d()
    }

    fn rhs(&self, _t: f64, y: &[f64], dydt: &mut [f64]) -> Result<()> {
        if let Some(k) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                index: k / self.d(),
                what: "position".into(),
            });
        }
        let pos = self.unflatten(y);
        let mut v = vec![Point::ZERO; pos.len()];
        dynamics::velocities(&pos, self.masses, self.problem, self.terms, &mut v)?;
        let d = self.d();
        for (i, vi) in v.iter().enumerate() {
            for k in 0..d {
                dydt[i * d + k] = vi.coord(k);
            }
        }
        Ok(())
    }
}

/// Per-snapshot diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub energy: f64,
    pub dissipation: f64,
    pub second_moment: f64,
    pub n_particles: usize,
}

impl DiagnosticsRow {
    pub fn compute(t: f64, e: &ParticleEnsemble, p: &ProblemSpec) -> Result<Self> {
        Ok(DiagnosticsRow {
            t,
            energy: dynamics::discrete_energy(e, p)?,
            dissipation: dynamics::dissipation(e, p)?,
            second_moment: e.second_moment(),
            n_particles: e.len(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snapshots: Vec<(f64, ParticleEnsemble)>,
    pub diagnostics: Vec<DiagnosticsRow>,
    pub blow_up: Option<BlowUp>,
    pub stats: StepStats,
    /// Particles absorbed by merging; snapshots after a merge are shorter.
    pub merged: usize,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|(t, _)| *t).collect()
    }

    pub fn last(&self) -> &(f64, ParticleEnsemble) {
        self.snapshots.last().expect("a trajectory always holds the initial snapshot")
    }

    /// Snapshot recorded at exactly `t`, if any.
    pub fn at(&self, t: f64) -> Option<&ParticleEnsemble> {
        self.snapshots.iter().find(|(s, _)| *s == t).map(|(_, e)| e)
    }

    pub fn write_diagnostics_csv_to<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "energy", "dissipation", "second_moment", "n_particles"])?;
        for r in &self.diagnostics {
            out.write_record([
                fmt(r.t),
                fmt(r.energy),
                fmt(r.dissipation),
                fmt(r.second_moment),
                r.n_particles.to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::io("diagnostics", e))?;
        Ok(())
    }

    pub fn write_diagnostics_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_diagnostics_csv_to(&mut buf)?;
        crate::io::write_atomic(path, &buf)
    }
}

/// Evolve `e0` under `p`, recording snapshots and diagnostics at the
/// configured output times.
pub fn integrate(e0: &ParticleEnsemble, p: &ProblemSpec, cfg: &IntegratorConfig) -> Result<Trajectory> {
    integrate_with(e0, p, cfg, Terms::default())
}

pub fn integrate_with(e0: &ParticleEnsemble, p: &ProblemSpec, cfg: &IntegratorConfig, terms: Terms) -> Result<Trajectory> {
    if e0.dimension() != p.dimension() {
        return Err(Error::InvalidArgument("ensemble and problem dimensions differ".into()));
    }
    cfg.validate()?;
    // Attraction that stays finite at contact (the 1-D log cutoff) lets
    // particles collide; once together they move as one, which an explicit
    // scheme can only follow if the pair is fused.
    let radius = cfg.merge_fraction * p.mollifier().epsilon();
    let mut masses: Arc<Vec<f64>> = e0.shared_masses();
    let mut stepper = steppers().build(&cfg.scheme, cfg)?;
    let mut snapshots = Vec::new();
    let mut diagnostics = Vec::new();
    let mut merged = 0;
    let times = cfg.output_times();
    let mut cur = Cursor::new(&times);
    let mut y = ParticleSystem::new(&masses, p).flatten(e0.positions());
    let blow_up = loop {
        let sys = ParticleSystem::new(&masses, p).with_terms(terms);
        let mut record = |t: f64, y: &[f64]| -> Result<()> {
            let e = ParticleEnsemble::with_shared_masses(e0.dimension(), sys.unflatten(y), Arc::clone(&masses))?;
            diagnostics.push(DiagnosticsRow::compute(t, &e, p)?);
            snapshots.push((t, e));
            Ok(())
        };
        if cur.t == 0.0 {
            record(0.0, &y)?;
        }
        let mut fused = None;
        let mut check = |_t: f64, y: &[f64]| {
            fused = crate::ensemble::merge_close(&sys.unflatten(y), &masses, radius);
            fused.is_some()
        };
        match advance(&sys, stepper.as_mut(), &mut y, &mut cur, cfg, &mut record, &mut check)? {
            Halt::Finished => break None,
            Halt::Stopped(b) => break Some(b),
            Halt::Interrupted => {
                let (pos, ms) = fused.expect("interrupted only after a merge");
                log::debug!("merged {} particles at t = {}", masses.len() - ms.len(), cur.t);
                merged += masses.len() - ms.len();
                y = sys.flatten(&pos);
                masses = Arc::new(ms);
            }
        }
    };
    if let Some(b) = &blow_up {
        log::info!("run stopped early at t = {}: {}", b.time, b.reason);
    }
    if merged > 0 {
        log::info!("{merged} particles merged on contact");
    }
    Ok(Trajectory {
        snapshots,
        diagnostics,
        blow_up,
        stats: stepper.stats(),
        merged,
    })
}

/// One classical RK4 step of the particle system.
pub fn step_rk4(e: &ParticleEnsemble, p: &ProblemSpec, dt: f64) -> Result<ParticleEnsemble> {
    if !(dt >= 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be non-negative, got {dt}")));
    }
    if dt == 0.0 {
        return Ok(e.clone());
    }
    let masses = e.shared_masses();
    let sys = ParticleSystem::new(&masses, p);
    let mut y = sys.flatten(e.positions());
    rk4::rk4_step(&sys, 0.0, &mut y, dt)?;
    e.moved_to(sys.unflatten(&y))
}

/// Root-mean-square of `err_i / (abs + rel * max(|a_i|, |b_i|))`.
pub(crate) fn scaled_rms(err: &[f64], a: &[f64], b: &[f64], rel: f64, abs: f64) -> f64 {
    if err.is_empty() {
        return 0.0;
    }
    let s: f64 = err
        .iter()
        .zip(a.iter().zip(b))
        .map(|(e, (x, y))| {
            let sc = abs + rel * x.abs().max(y.abs());
            (e / sc).powi(2)
        })
        .sum();
    (s / err.len() as f64).sqrt()
}
