use super::{OdeSystem, StepStats, Stepper};
use crate::error::{Error, Result};

/// Classical four-stage Runge-Kutta with a fixed step.
#[derive(Debug, Clone)]
pub struct ClassicalRk4 {
    dt: f64,
    stats: StepStats,
}

impl ClassicalRk4 {
    pub fn new(dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::config("integrator.dt", format!("must be positive, got {dt}")));
        }
        Ok(ClassicalRk4 {
            dt,
            stats: StepStats::default(),
        })
    }
}

impl Stepper for ClassicalRk4 {
    fn name(&self) -> &'static str {
        "rk4_fixed"
    }

    fn start(&mut self, _sys: &dyn OdeSystem, _t0: f64, _y0: &[f64], _t_final: f64) -> Result<()> {
        Ok(())
    }

    fn step(&mut self, sys: &dyn OdeSystem, t: f64, y: &mut [f64], dt_max: f64) -> Result<f64> {
        let h = self.dt.min(dt_max);
        rk4_step(sys, t, y, h)?;
        self.stats.accepted += 1;
        self.stats.rhs_evaluations += 4;
        Ok(h)
    }

    fn stats(&self) -> StepStats {
        self.stats
    }
}

pub(crate) fn rk4_step(sys: &dyn OdeSystem, t: f64, y: &mut [f64], h: f64) -> Result<()> {
    let n = y.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    sys.rhs(t, y, &mut k1)?;
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k1[i];
    }
    sys.rhs(t + 0.5 * h, &tmp, &mut k2)?;
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k2[i];
    }
    sys.rhs(t + 0.5 * h, &tmp, &mut k3)?;
    for i in 0..n {
        tmp[i] = y[i] + h * k3[i];
    }
    sys.rhs(t + h, &tmp, &mut k4)?;
    for i in 0..n {
        y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    if let Some(k) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            index: k,
            what: "state after RK4 step".into(),
        });
    }
    Ok(())
}
