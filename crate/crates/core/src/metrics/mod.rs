//! Error measurement against reference densities.
//!
//! Discrete `L1`/`Linf` norms on the simulation grid, `W2` on the line from
//! quantile functions, and `W2` in the plane by exact discrete transport.
//! Each is an [`ErrorMetric`] selected by name through [`metrics`].

pub mod lp;
pub mod measure;
pub mod transport;
pub mod w1d;

pub use lp::{l1_error, linf_error};
pub use measure::{measure_from_ensemble, measure_from_field, DiscreteMeasure};
pub use transport::w2_2d;
pub use w1d::{quantile_from_density, w2_1d_atoms, w2_1d_density, ContinuousMeasure1d};

use serde::{Deserialize, Serialize};

use crate::ensemble::ParticleEnsemble;
use crate::error::{Error, Result};
use crate::grid::{GridField, GridSpec};
use crate::mollifier::{Dimension, Mollifier};
use crate::point::Point;
use crate::registry::Registry;

/// What a metric sees: the computed ensemble and the exact density at the
/// same time.
pub struct ErrorInputs<'a> {
    pub ensemble: &'a ParticleEnsemble,
    pub mollifier: &'a Mollifier,
    /// Simulation grid; `L1`/`Linf` are taken on its nodes.
    pub grid: &'a GridSpec,
    pub exact: &'a (dyn Fn(Point) -> f64 + Sync),
    /// Radius of a centered ball holding all but a negligible part of the
    /// exact mass.
    pub support_radius: f64,
}

impl ErrorInputs<'_> {
    fn blob_field(&self, grid: &GridSpec) -> GridField {
        self.ensemble.sample_on_grid(self.mollifier, grid)
    }

    fn exact_field(&self, grid: &GridSpec) -> GridField {
        GridField::from_fn(*grid, |x| (self.exact)(x))
    }
}

/// Metric settings shared by every entry of the registry.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct MetricSettings {
    /// Spacing of the grid on which 2-D densities are discretized for
    /// transport; `None` uses the simulation grid spacing.
    pub w2_spacing: Option<f64>,
    /// Upper bound on that grid's node count; the spacing is coarsened until
    /// it fits.
    pub w2_max_nodes: usize,
    /// Cells of the CDF table behind 1-D quantiles.
    pub quantile_cells: usize,
}

impl Default for MetricSettings {
    fn default() -> Self {
        MetricSettings {
            w2_spacing: None,
            w2_max_nodes: transport::MAX_ATOMS,
            quantile_cells: w1d::DEFAULT_CELLS,
        }
    }
}

impl MetricSettings {
    pub fn validate(&self) -> Result<()> {
        if let Some(h) = self.w2_spacing {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::config("metrics.w2_spacing", format!("must be positive, got {h}")));
            }
        }
        if self.w2_max_nodes == 0 || self.w2_max_nodes > transport::MAX_ATOMS {
            return Err(Error::config(
                "metrics.w2_max_nodes",
                format!("must lie in 1..={}, got {}", transport::MAX_ATOMS, self.w2_max_nodes),
            ));
        }
        if self.quantile_cells < 10 {
            return Err(Error::config("metrics.quantile_cells", "must be at least 10"));
        }
        Ok(())
    }

    /// Grid for 2-D transport: the requested spacing, widened by 5% steps
    /// until the ball holds at most `w2_max_nodes` nodes.
    pub fn w2_grid(&self, sim: &GridSpec) -> Result<GridSpec> {
        let mut g = GridSpec::new(self.w2_spacing.unwrap_or(sim.spacing), sim.radius, sim.dimension)?;
        while g.len() > self.w2_max_nodes {
            g.spacing *= 1.05;
        }
        Ok(g)
    }
}

pub trait ErrorMetric: Send + Sync {
    fn name(&self) -> &'static str;
    fn evaluate(&self, inputs: &ErrorInputs) -> Result<f64>;
}

struct L1;
struct Linf;
struct Wasserstein(MetricSettings);

impl ErrorMetric for L1 {
    fn name(&self) -> &'static str {
        "l1"
    }

    fn evaluate(&self, inputs: &ErrorInputs) -> Result<f64> {
        l1_error(&inputs.blob_field(inputs.grid), &inputs.exact_field(inputs.grid))
    }
}

impl ErrorMetric for Linf {
    fn name(&self) -> &'static str {
        "linf"
    }

    fn evaluate(&self, inputs: &ErrorInputs) -> Result<f64> {
        linf_error(&inputs.blob_field(inputs.grid), &inputs.exact_field(inputs.grid))
    }
}

impl ErrorMetric for Wasserstein {
    fn name(&self) -> &'static str {
        "w2"
    }

    /// On the line the particles themselves are compared with the exact
    /// continuum. In the plane both the blob and the exact density are
    /// discretized on the transport grid. Both sides are normalized to unit
    /// mass first.
    fn evaluate(&self, inputs: &ErrorInputs) -> Result<f64> {
        match inputs.ensemble.dimension() {
            Dimension::One => {
                let r = inputs.support_radius;
                let exact = ContinuousMeasure1d::new(|x| (inputs.exact)(Point::on_line(x)), -r, r, self.0.quantile_cells)?;
                w2_1d_density(&measure_from_ensemble(inputs.ensemble), &exact)
            }
            Dimension::Two => {
                let g = self.0.w2_grid(inputs.grid)?;
                let a = measure_from_field(&inputs.blob_field(&g))?.normalized();
                let b = measure_from_field(&inputs.exact_field(&g))?.normalized();
                w2_2d(&a, &b)
            }
        }
    }
}

fn build_l1(_: &MetricSettings) -> Result<Box<dyn ErrorMetric>> {
    Ok(Box::new(L1))
}

fn build_linf(_: &MetricSettings) -> Result<Box<dyn ErrorMetric>> {
    Ok(Box::new(Linf))
}

fn build_w2(s: &MetricSettings) -> Result<Box<dyn ErrorMetric>> {
    s.validate()?;
    Ok(Box::new(Wasserstein(s.clone())))
}

/// Available error metrics: `l1`, `linf`, `w2`.
pub fn metrics() -> Registry<dyn ErrorMetric, MetricSettings> {
    Registry::new("metric")
        .register("l1", build_l1)
        .register("linf", build_linf)
        .register("w2", build_w2)
        .alias("wasserstein", "w2")
}
