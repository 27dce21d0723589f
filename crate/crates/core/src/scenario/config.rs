//! Scenario files: one TOML document describing a complete run.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{observables, QuadratureSettings};
use crate::dynamics::ProblemSpec;
use crate::ensemble::{discretize_density, Discretization, MassRule, ParticleEnsemble};
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::integrator::IntegratorConfig;
use crate::metrics::{metrics, MetricSettings};
use crate::mollifier::{Dimension, Mollifier};
use crate::point::Point;
use crate::potentials::{DriftPotential, InteractionPotential};
use crate::reference::{beta, fundamental, Bump, Profile, ProfileSum};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub dimension: Dimension,
    /// Diffusion exponent, `m >= 1`.
    pub m: f64,
    #[serde(default)]
    pub drift: DriftPotential,
    #[serde(default)]
    pub interaction: InteractionConfig,
    pub initial: InitialConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub epsilon: EpsilonRule,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub reference: ReferenceKind,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionKind {
    #[default]
    None,
    Log1d,
    Log2d,
}

/// `W = 2 chi log|x|`, regularized at scale `eps` (the mollifier width
/// unless given).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionConfig {
    #[serde(default)]
    pub kind: InteractionKind,
    /// Required for `log1d`; `log2d` defaults to `1 / (4 pi)`, the classical
    /// Keller-Segel kernel `(1 / 2 pi) log|x|`.
    pub chi: Option<f64>,
    pub eps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    /// Rescale the discrete masses to this total.
    pub mass: Option<f64>,
    #[serde(default)]
    pub mass_rule: MassRule,
    pub bumps: Vec<Bump>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub h: f64,
    /// Radius `R` of the particle grid; defaults to the support radius of
    /// the initial density.
    pub radius: Option<f64>,
}

/// `eps = h^(1 - p)` unless `value` fixes it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpsilonRule {
    pub p: f64,
    pub value: Option<f64>,
}

impl Default for EpsilonRule {
    fn default() -> Self {
        EpsilonRule { p: 0.01, value: None }
    }
}

impl EpsilonRule {
    pub fn epsilon(&self, h: f64) -> f64 {
        self.value.unwrap_or_else(|| h.powf(1.0 - self.p))
    }
}

/// Exact solution the run is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    #[default]
    None,
    /// `rho_t = Lap rho^m`: profiles advance `tau -> tau + t`.
    Diffusion,
    /// `rho_t = Lap rho^m + div(x rho)`: profiles follow the confined time
    /// change and, for `m = 1`, centers contract like `exp(-t)`.
    FokkerPlanck,
    /// The unit-mass confined steady state `psi_m(beta, .)` at every time.
    SteadyState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub names: Vec<String>,
    pub settings: MetricSettings,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            names: vec!["w2".into(), "l1".into(), "linf".into()],
            settings: MetricSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsConfig {
    pub observables: Vec<String>,
    pub quadrature: QuadratureSettings,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            observables: vec!["energy".into(), "dissipation".into(), "second_moment".into()],
            quadrature: QuadratureSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Write the blob density on the grid at every recorded time.
    pub densities: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { densities: true }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Reads a scenario file, or the scenario echoed in a run manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let table: toml::Table = toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        match table.get("scenario") {
            Some(v) if table.contains_key("derived") => v
                .clone()
                .try_into()
                .map_err(|e: toml::de::Error| Error::Parse(e.to_string())),
            _ => Self::from_toml_str(&text),
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("scenario", e.to_string()))
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon.epsilon(self.grid.h)
    }

    pub fn profile(&self) -> ProfileSum {
        ProfileSum {
            bumps: self.initial.bumps.clone(),
        }
    }

    pub fn grid_radius(&self) -> f64 {
        self.grid.radius.unwrap_or_else(|| self.profile().radius(self.dimension))
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::config("name", "must not be empty"));
        }
        if !(self.m >= 1.0 && self.m.is_finite()) {
            return Err(Error::config("m", format!("the diffusion exponent must satisfy m >= 1, got {}", self.m)));
        }
        if self.m > 1.0 && self.m < 2.0 {
            log::warn!("m = {} lies in (1, 2): F'(s) = s^(m-2) is singular at s = 0; results are experimental", self.m);
        }
        let h = self.grid.h;
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::config("grid.h", format!("must be positive, got {h}")));
        }
        if let Some(r) = self.grid.radius {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::config("grid.radius", format!("must be positive, got {r}")));
            }
        }
        match self.epsilon.value {
            Some(e) if !(e > 0.0 && e.is_finite()) => {
                return Err(Error::config("epsilon.value", format!("must be positive, got {e}")));
            }
            None if !(self.epsilon.p > 0.0 && self.epsilon.p < 1.0) => {
                return Err(Error::config("epsilon.p", format!("must lie in (0, 1), got {}", self.epsilon.p)));
            }
            _ => {}
        }
        if self.epsilon() <= h {
            log::warn!("eps = {} does not exceed h = {h}; the blob method expects h = o(eps)", self.epsilon());
        }
        self.profile().validate(self.dimension)?;
        if let Some(mass) = self.initial.mass {
            if !(mass > 0.0 && mass.is_finite()) {
                return Err(Error::config("initial.mass", format!("must be positive, got {mass}")));
            }
        }
        self.interaction()?;
        self.integrator.validate()?;
        self.metrics.settings.validate()?;
        for n in &self.metrics.names {
            metrics().resolve(n).map_err(|e| Error::config("metrics.names", e.to_string()))?;
        }
        self.diagnostics.quadrature.validate()?;
        for n in &self.diagnostics.observables {
            observables()
                .resolve(n)
                .map_err(|e| Error::config("diagnostics.observables", e.to_string()))?;
        }
        self.check_reference()
    }

    fn interaction(&self) -> Result<InteractionPotential> {
        let c = self.interaction;
        let eps = c.eps.unwrap_or_else(|| self.epsilon());
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::config("interaction.eps", format!("must be positive, got {eps}")));
        }
        let chi = |default: Option<f64>| {
            c.chi
                .or(default)
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::config("interaction.chi", "a finite chi is required"))
        };
        Ok(match (c.kind, self.dimension) {
            (InteractionKind::None, _) => InteractionPotential::None,
            (InteractionKind::Log1d, Dimension::One) => InteractionPotential::Log1d { chi: chi(None)?, eps },
            (InteractionKind::Log2d, Dimension::Two) => InteractionPotential::Log2d {
                chi: chi(Some(1.0 / (4.0 * std::f64::consts::PI)))?,
                eps,
            },
            (k, d) => {
                return Err(Error::config(
                    "interaction.kind",
                    format!("{k:?} interaction does not apply in dimension {}", d.get()),
                ))
            }
        })
    }

    fn check_reference(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::config("reference", msg.to_string()));
        let kind = self.reference;
        if kind == ReferenceKind::None {
            return Ok(());
        }
        if self.interaction.kind != InteractionKind::None {
            return bad("exact solutions exist only without interaction");
        }
        let want_drift = match kind {
            ReferenceKind::Diffusion => DriftPotential::None,
            _ => DriftPotential::Quadratic,
        };
        if self.drift != want_drift {
            return bad("the reference does not match the configured drift");
        }
        if kind == ReferenceKind::SteadyState {
            return Ok(());
        }
        for b in &self.initial.bumps {
            let pm = match b.profile {
                Profile::Heat { .. } => 1.0,
                Profile::Barenblatt { m, .. } => m,
            };
            if pm != self.m {
                return bad("initial profiles must be self-similar solutions with the configured m");
            }
        }
        if self.m != 1.0 && (self.initial.bumps.len() != 1 || self.initial.bumps[0].center.0 != Point::ZERO) {
            return bad("for m > 1 the exact solution needs a single centered profile");
        }
        if self.initial.mass.is_some_and(|mass| (mass - self.profile().total_weight()).abs() > 1e-12 * mass) && self.m != 1.0 {
            return bad("for m > 1 rescaling the initial mass breaks self-similarity");
        }
        Ok(())
    }

    pub fn problem(&self) -> Result<ProblemSpec> {
        let moll = Mollifier::new(self.epsilon(), self.dimension)?;
        ProblemSpec::new(self.m, self.drift, self.interaction()?, moll).map_err(|e| match e {
            Error::InvalidArgument(msg) => Error::config("m", msg),
            other => other,
        })
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.grid.h, self.grid_radius(), self.dimension)
    }

    pub fn initial_ensemble(&self) -> Result<ParticleEnsemble> {
        let rho = self.profile();
        let d = self.dimension;
        discretize_density(
            move |x| rho.eval(d, x),
            &self.grid_spec()?,
            Discretization {
                rule: self.initial.mass_rule,
                normalize_to: self.initial.mass,
            },
        )
    }

    /// Exact density at time `t`, with the radius that holds its mass.
    pub fn exact_at(&self, t: f64) -> Option<(ProfileSum, f64)> {
        let d = self.dimension;
        let scale = self.initial.mass.map_or(1.0, |m| m / self.profile().total_weight());
        let scaled = |mut p: ProfileSum| {
            p.bumps.iter_mut().for_each(|b| b.weight *= scale);
            p
        };
        let p = match self.reference {
            ReferenceKind::None => return None,
            ReferenceKind::Diffusion => scaled(self.profile().map_profiles(|p| p.diffused(t))),
            ReferenceKind::FokkerPlanck => {
                let mut p = scaled(self.profile().map_profiles(|p| p.confined(d, t)));
                let c = (-t).exp();
                p.bumps.iter_mut().for_each(|b| b.center.0 = b.center.0 * c);
                p
            }
            ReferenceKind::SteadyState => {
                let b = beta(self.m, d);
                let prof = if self.m == 1.0 {
                    Profile::Heat { tau: b }
                } else {
                    Profile::Barenblatt { m: self.m, tau: b }
                };
                let mut p = ProfileSum::single(prof);
                p.bumps[0].weight = self.initial.mass.unwrap_or(1.0);
                p
            }
        };
        let r = p.radius(d);
        Some((p, r))
    }

    /// Metric names resolved to canonical form.
    pub fn metric_names(&self) -> Result<Vec<&'static str>> {
        self.metrics.names.iter().map(|n| metrics().resolve(n)).collect()
    }

    /// Unit-mass confined steady state `psi_m(beta, x)`.
    pub fn steady_state(&self, x: Point) -> f64 {
        fundamental(self.m, beta(self.m, self.dimension), self.dimension, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heat() -> ScenarioConfig {
        ScenarioConfig::from_toml_str(
            r#"
            name = "heat"
            dimension = 1
            m = 1.0
            reference = "diffusion"
            [initial]
            bumps = [{ profile = "heat", tau = 0.0625 }]
            [grid]
            h = 0.02
            radius = 2.5
            [integrator]
            t_final = 0.05
            "#,
        )
        .unwrap()
    }

    #[test]
    fn parses_and_round_trips() {
        let c = heat();
        c.validate().unwrap();
        assert_eq!(c.dimension, Dimension::One);
        assert!((c.epsilon() - 0.02f64.powf(0.99)).abs() < 1e-15);
        assert!(c.epsilon() > c.grid.h);
        let back = ScenarioConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_bad_fields() {
        let mut c = heat();
        c.m = 0.5;
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("m >= 1"), "{msg}");
        let mut c = heat();
        c.interaction.kind = InteractionKind::Log2d;
        assert!(c.validate().unwrap_err().to_string().contains("interaction"));
        let mut c = heat();
        c.metrics.names.push("w7".into());
        assert!(c.validate().unwrap_err().to_string().contains("metrics.names"));
        assert!(ScenarioConfig::from_toml_str("name = 'x'\nbogus = 1").is_err());
        let mut c = heat();
        c.epsilon.p = 1.5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn reference_needs_matching_profiles() {
        let mut c = heat();
        c.m = 2.0;
        assert!(c.validate().is_err());
        c.initial.bumps[0].profile = Profile::Barenblatt { m: 2.0, tau: 0.0625 };
        c.validate().unwrap();
        c.reference = ReferenceKind::FokkerPlanck;
        assert!(c.validate().is_err());
        c.drift = DriftPotential::Quadratic;
        c.validate().unwrap();
    }

    #[test]
    fn exact_solutions_advance() {
        let c = heat();
        let (p, r) = c.exact_at(0.05).unwrap();
        assert_eq!(p.bumps[0].profile, Profile::Heat { tau: 0.1125 });
        assert!(r > 1.0);
        let mut s = heat();
        s.drift = DriftPotential::Quadratic;
        s.reference = ReferenceKind::SteadyState;
        s.m = 2.0;
        s.dimension = Dimension::Two;
        let (p, _) = s.exact_at(3.0).unwrap();
        assert_eq!(p.bumps[0].profile, Profile::Barenblatt { m: 2.0, tau: 0.25 });
        assert_eq!(p.eval(Dimension::Two, Point::new(0.1, 0.2)), s.steady_state(Point::new(0.1, 0.2)));
    }
}
