//! Executes scenarios and writes their artifacts.
//!
//! A run directory holds `diagnostics.csv`, `errors.csv` (when a reference
//! exists), `density_NNN.csv` for each recorded time and `manifest.toml`.
//! The manifest echoes the resolved scenario next to derived quantities and
//! can be fed back to reproduce the run.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{assemble_series, SeriesTable};
use crate::dynamics::ProblemSpec;
use crate::error::{Error, Result};
use crate::grid::{fmt, GridSpec};
use crate::integrator::{integrate, Trajectory};
use crate::io::write_atomic;
use crate::metrics::{metrics, ErrorInputs};
use crate::mollifier::Dimension;
use crate::potentials::InteractionPotential;
use crate::reference::ks_second_moment_slope;
use crate::scenario::config::ScenarioConfig;
use crate::scenario::fit::{fit_loglog_slope, linear_fit};

/// Quantities fixed by the scenario but not spelled out in it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Derived {
    pub version: String,
    pub epsilon: f64,
    pub n_particles: usize,
    pub total_mass: f64,
    pub grid_radius: f64,
    pub record_times: Vec<f64>,
    pub accepted_steps: u64,
    pub rejected_steps: u64,
    pub rhs_evaluations: u64,
    /// Particles absorbed after colliding with another.
    pub merged_particles: usize,
    /// Time at which integration stopped early, with the reason.
    pub stopped_at: Option<f64>,
    pub stop_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub scenario: ScenarioConfig,
    pub derived: Derived,
}

pub struct RunOutput {
    pub manifest: Manifest,
    pub problem: ProblemSpec,
    pub grid: GridSpec,
    pub trajectory: Trajectory,
    pub series: SeriesTable,
    /// Error metrics against the reference at every recorded time.
    pub errors: Option<SeriesTable>,
}

/// Scenario with every default that depends on other fields written out.
pub fn resolve(cfg: &ScenarioConfig) -> Result<ScenarioConfig> {
    let mut c = cfg.clone();
    c.grid.radius = Some(cfg.grid_radius());
    match cfg.problem()?.interaction() {
        InteractionPotential::Log1d { chi, eps } | InteractionPotential::Log2d { chi, eps } => {
            c.interaction.chi = Some(chi);
            c.interaction.eps = Some(eps);
        }
        InteractionPotential::None => {}
    }
    Ok(c)
}

/// Runs `cfg`, writing artifacts under `out` when given.
pub fn run_scenario(cfg: &ScenarioConfig, out: Option<&Path>) -> Result<RunOutput> {
    cfg.validate()?;
    let cfg = resolve(cfg)?;
    let problem = cfg.problem()?;
    let grid = cfg.grid_spec()?;
    let e0 = cfg.initial_ensemble()?;
    log::info!(
        "{}: N = {}, eps = {:.4e}, h = {}, t_final = {}",
        cfg.name,
        e0.len(),
        cfg.epsilon(),
        cfg.grid.h,
        cfg.integrator.t_final
    );
    let trajectory = integrate(&e0, &problem, &cfg.integrator)?;
    let names: Vec<&str> = cfg.diagnostics.observables.iter().map(String::as_str).collect();
    let series = assemble_series(&trajectory, &problem, &cfg.diagnostics.quadrature, &names)?;
    let errors = error_table(&cfg, &problem, &grid, &trajectory)?;

    let derived = Derived {
        version: env!("CARGO_PKG_VERSION").to_string(),
        epsilon: cfg.epsilon(),
        n_particles: e0.len(),
        total_mass: e0.total_mass(),
        grid_radius: grid.radius,
        record_times: trajectory.times(),
        accepted_steps: trajectory.stats.accepted,
        rejected_steps: trajectory.stats.rejected,
        rhs_evaluations: trajectory.stats.rhs_evaluations,
        merged_particles: trajectory.merged,
        stopped_at: trajectory.blow_up.as_ref().map(|b| b.time),
        stop_reason: trajectory.blow_up.as_ref().map(|b| b.reason.clone()),
    };
    let run = RunOutput {
        manifest: Manifest { scenario: cfg, derived },
        problem,
        grid,
        trajectory,
        series,
        errors,
    };
    if let Some(dir) = out {
        write_run(&run, dir)?;
    }
    Ok(run)
}

fn error_table(cfg: &ScenarioConfig, p: &ProblemSpec, grid: &GridSpec, traj: &Trajectory) -> Result<Option<SeriesTable>> {
    if cfg.exact_at(0.0).is_none() {
        return Ok(None);
    }
    let reg = metrics();
    let names = cfg.metric_names()?;
    let ms = names
        .iter()
        .map(|n| reg.build(n, &cfg.metrics.settings))
        .collect::<Result<Vec<_>>>()?;
    let d = cfg.dimension;
    let mut rows = Vec::new();
    for (t, e) in &traj.snapshots {
        let (exact, radius) = cfg.exact_at(*t).expect("reference checked above");
        let f = move |x| exact.eval(d, x);
        // the exact support may outgrow the initial grid
        let mgrid = GridSpec::new(grid.spacing, grid.radius.max(radius), d)?;
        let inputs = ErrorInputs {
            ensemble: e,
            mollifier: p.mollifier(),
            grid: &mgrid,
            exact: &f,
            support_radius: mgrid.radius,
        };
        rows.push(ms.iter().map(|m| m.evaluate(&inputs)).collect::<Result<Vec<f64>>>()?);
    }
    Ok(Some(SeriesTable {
        columns: names,
        times: traj.times(),
        rows,
    }))
}

fn write_run(run: &RunOutput, dir: &Path) -> Result<()> {
    run.series.write_csv(&dir.join("diagnostics.csv"))?;
    if let Some(errs) = &run.errors {
        errs.write_csv(&dir.join("errors.csv"))?;
    }
    if run.manifest.scenario.output.densities {
        for (k, (_, e)) in run.trajectory.snapshots.iter().enumerate() {
            e.sample_on_grid(run.problem.mollifier(), &run.grid)
                .write_csv(&dir.join(format!("density_{k:03}.csv")))?;
        }
    }
    let text = toml::to_string(&run.manifest).map_err(|e| Error::config("manifest", e.to_string()))?;
    write_atomic(&dir.join("manifest.toml"), text.as_bytes())
}

/// Errors of every metric at one spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub h: f64,
    pub epsilon: f64,
    pub n_particles: usize,
    pub errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub metrics: Vec<&'static str>,
    pub points: Vec<SweepPoint>,
    /// Least-squares slope of `log(error)` against `log(h)` per metric.
    pub slopes: Vec<f64>,
}

impl SweepReport {
    pub fn slope(&self, metric: &str) -> Option<f64> {
        self.metrics.iter().position(|m| *m == metric).map(|k| self.slopes[k])
    }

    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["h", "epsilon", "n_particles"];
        header.extend(&self.metrics);
        w.write_record(&header)?;
        for p in &self.points {
            let mut rec = vec![fmt(p.h), fmt(p.epsilon), p.n_particles.to_string()];
            rec.extend(p.errors.iter().map(|e| fmt(*e)));
            w.write_record(&rec)?;
        }
        write_atomic(&dir.join("sweep.csv"), &into_bytes(w)?)?;

        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["metric", "slope"])?;
        for (m, s) in self.metrics.iter().zip(&self.slopes) {
            w.write_record([m.to_string(), fmt(*s)])?;
        }
        write_atomic(&dir.join("slopes.csv"), &into_bytes(w)?)
    }
}

fn into_bytes(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| Error::io("<csv>", e.into_error()))
}

/// Runs `base` at each spacing up to `t_eval` and fits error slopes.
pub fn convergence_sweep(base: &ScenarioConfig, hs: &[f64], t_eval: f64, out: Option<&Path>) -> Result<SweepReport> {
    if base.exact_at(0.0).is_none() {
        return Err(Error::config("reference", "a convergence sweep needs a reference solution"));
    }
    if !(t_eval > 0.0 && t_eval.is_finite()) {
        return Err(Error::config("t_eval", format!("must be positive, got {t_eval}")));
    }
    let names = base.metric_names()?;
    let report = sweep_with(hs, names, |h| {
        let mut c = base.clone();
        c.grid.h = h;
        c.integrator.t_final = t_eval;
        c.integrator.record_times.clear();
        c.output.densities = false;
        let dir = out.map(|d| d.join(format!("h_{h}")));
        let run = run_scenario(&c, dir.as_deref())?;
        if let Some(b) = &run.trajectory.blow_up {
            return Err(Error::Incomplete {
                time: b.time,
                target: t_eval,
                reason: b.reason.clone(),
            });
        }
        let errs = run.errors.expect("reference checked above");
        let last = errs.rows.last().expect("a run records its final time").clone();
        Ok((run.manifest.derived.epsilon, run.manifest.derived.n_particles, last))
    })?;
    if let Some(d) = out {
        report.write_csv(d)?;
    }
    Ok(report)
}

/// Sweep driver with the per-spacing evaluation supplied by the caller.
pub fn sweep_with<F>(hs: &[f64], metrics: Vec<&'static str>, eval: F) -> Result<SweepReport>
where
    F: Fn(f64) -> Result<(f64, usize, Vec<f64>)> + Sync,
{
    if hs.len() < 3 {
        return Err(Error::config("h", format!("a sweep needs at least three spacings, got {}", hs.len())));
    }
    if let Some(h) = hs.iter().find(|h| !(**h > 0.0 && h.is_finite())) {
        return Err(Error::config("h", format!("spacings must be positive, got {h}")));
    }
    let results: Vec<Result<SweepPoint>> = hs
        .par_iter()
        .map(|&h| {
            let (epsilon, n_particles, errors) = eval(h).map_err(|e| Error::SweepPoint { h, source: Box::new(e) })?;
            Ok(SweepPoint {
                h,
                epsilon,
                n_particles,
                errors,
            })
        })
        .collect();
    let points = results.into_iter().collect::<Result<Vec<_>>>()?;
    let hv: Vec<f64> = points.iter().map(|p| p.h).collect();
    let slopes = (0..metrics.len())
        .map(|k| {
            let ev: Vec<f64> = points.iter().map(|p| p.errors[k]).collect();
            fit_loglog_slope(&hv, &ev).unwrap_or(f64::NAN)
        })
        .collect();
    Ok(SweepReport { metrics, points, slopes })
}

/// Linear fit of the second moment for one mass.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalityRow {
    pub mass: f64,
    pub fitted_slope: f64,
    pub reference_slope: f64,
    pub r2: f64,
    pub stopped_at: Option<f64>,
}

/// Runs `base` with its initial data rescaled to each mass and fits
/// `M2(t)` against the virial slope.
pub fn ks2d_criticality(base: &ScenarioConfig, masses: &[f64], out: Option<&Path>) -> Result<Vec<CriticalityRow>> {
    if masses.is_empty() {
        return Err(Error::config("mass", "at least one mass is required"));
    }
    if let Some(m) = masses.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
        return Err(Error::config("mass", format!("masses must be positive, got {m}")));
    }
    if base.m != 1.0 {
        return Err(Error::config("m", "the virial slope holds for linear diffusion, m = 1"));
    }
    if base.dimension != Dimension::Two {
        return Err(Error::config("dimension", "criticality sweeps are two-dimensional"));
    }
    let rows: Vec<Result<CriticalityRow>> = masses
        .iter()
        .enumerate()
        .map(|(k, &mass)| {
            let mut c = base.clone();
            c.initial.mass = Some(mass);
            c.reference = Default::default();
            let dir = out.map(|d| d.join(format!("mass_{k}")));
            let run = run_scenario(&c, dir.as_deref())?;
            let chi = match run.problem.interaction() {
                InteractionPotential::Log2d { chi, .. } => chi,
                _ => return Err(Error::config("interaction.kind", "criticality sweeps need the log2d interaction")),
            };
            let ts = run.trajectory.times();
            let m2: Vec<f64> = run.trajectory.snapshots.iter().map(|(_, e)| e.second_moment()).collect();
            let f = linear_fit(&ts, &m2)?;
            Ok(CriticalityRow {
                mass,
                fitted_slope: f.slope,
                reference_slope: ks_second_moment_slope(mass, Dimension::Two, chi),
                r2: f.r2,
                stopped_at: run.manifest.derived.stopped_at,
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    if let Some(d) = out {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["mass", "fitted_slope", "reference_slope", "r2", "stopped_at"])?;
        for r in &rows {
            w.write_record([
                fmt(r.mass),
                fmt(r.fitted_slope),
                fmt(r.reference_slope),
                fmt(r.r2),
                r.stopped_at.map(fmt).unwrap_or_default(),
            ])?;
        }
        write_atomic(&d.join("criticality.csv"), &into_bytes(w)?)?;
    }
    Ok(rows)
}
