//! Dormand-Prince 5(4) with first-same-as-last reuse.

use super::{scaled_rms, OdeSystem, StepStats, Stepper};
use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// fifth-order weights minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;
/// Steps shorter than this fraction of the horizon count as blow-up.
const UNDERFLOW: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct DormandPrince {
    rel_tol: f64,
    abs_tol: f64,
    dt_init: Option<f64>,
    dt_max: f64,
    h: f64,
    h_min: f64,
    k: [Vec<f64>; 7],
    /// `k[0]` holds `f(t, y)` for the current state.
    fsal: bool,
    tmp: Vec<f64>,
    y_new: Vec<f64>,
    err: Vec<f64>,
    stats: StepStats,
}

impl DormandPrince {
    pub fn new(rel_tol: f64, abs_tol: f64, dt_init: Option<f64>, dt_max: Option<f64>) -> Result<Self> {
        if !(rel_tol > 0.0 && abs_tol > 0.0) {
            return Err(Error::config("integrator.rel_tol", "tolerances must be positive"));
        }
        Ok(DormandPrince {
            rel_tol,
            abs_tol,
            dt_init,
            dt_max: dt_max.unwrap_or(f64::INFINITY),
            h: 0.0,
            h_min: 0.0,
            k: Default::default(),
            fsal: false,
            tmp: Vec::new(),
            y_new: Vec::new(),
            err: Vec::new(),
            stats: StepStats::default(),
        })
    }

    fn eval(&mut self, sys: &dyn OdeSystem, stage: usize, t: f64) -> Result<()> {
        self.stats.rhs_evaluations += 1;
        sys.rhs(t, &self.tmp, &mut self.k[stage])
    }

    /// Starting step from the usual two-evaluation heuristic.
    fn initial_step(&mut self, sys: &dyn OdeSystem, t0: f64, y0: &[f64]) -> Result<f64> {
        let zeros = vec![0.0; y0.len()];
        let d0 = scaled_rms(y0, y0, &zeros, self.rel_tol, self.abs_tol);
        let d1 = scaled_rms(&self.k[0], y0, &zeros, self.rel_tol, self.abs_tol);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        for i in 0..y0.len() {
            self.tmp[i] = y0[i] + h0 * self.k[0][i];
        }
        self.eval(sys, 1, t0 + h0)?;
        let diff: Vec<f64> = self.k[1].iter().zip(&self.k[0]).map(|(a, b)| a - b).collect();
        let d2 = scaled_rms(&diff, y0, &zeros, self.rel_tol, self.abs_tol) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        Ok((100.0 * h0).min(h1))
    }
}

impl Stepper for DormandPrince {
    fn name(&self) -> &'static str {
        "rk45_adaptive"
    }

    fn start(&mut self, sys: &dyn OdeSystem, t0: f64, y0: &[f64], t_final: f64) -> Result<()> {
        let n = y0.len();
        for k in self.k.iter_mut() {
            *k = vec![0.0; n];
        }
        self.tmp = y0.to_vec();
        self.y_new = vec![0.0; n];
        self.err = vec![0.0; n];
        self.h_min = UNDERFLOW * t_final;
        self.eval(sys, 0, t0)?;
        self.fsal = true;
        let h = match self.dt_init {
            Some(h) => h,
            None => self.initial_step(sys, t0, y0)?,
        };
        self.h = h.min(self.dt_max).min(t_final);
        Ok(())
    }

    fn step(&mut self, sys: &dyn OdeSystem, t: f64, y: &mut [f64], dt_max: f64) -> Result<f64> {
        let n = y.len();
        if !self.fsal {
            self.tmp.copy_from_slice(y);
            self.eval(sys, 0, t)?;
            self.fsal = true;
        }
        loop {
            let truncated = self.h > dt_max;
            let h = if truncated { dt_max } else { self.h };
            if h < self.h_min && !truncated {
                return Err(Error::StepUnderflow { time: t, dt: h });
            }
            let k = &self.k;
            for i in 0..n {
                self.tmp[i] = y[i] + h * A21 * k[0][i];
            }
            self.eval(sys, 1, t + C2 * h)?;
            let k = &self.k;
            for i in 0..n {
                self.tmp[i] = y[i] + h * (A31 * k[0][i] + A32 * k[1][i]);
            }
            self.eval(sys, 2, t + C3 * h)?;
            let k = &self.k;
            for i in 0..n {
                self.tmp[i] = y[i] + h * (A41 * k[0][i] + A42 * k[1][i] + A43 * k[2][i]);
            }
            self.eval(sys, 3, t + C4 * h)?;
            let k = &self.k;
            for i in 0..n {
                self.tmp[i] = y[i] + h * (A51 * k[0][i] + A52 * k[1][i] + A53 * k[2][i] + A54 * k[3][i]);
            }
            self.eval(sys, 4, t + C5 * h)?;
            let k = &self.k;
            for i in 0..n {
                self.tmp[i] =
                    y[i] + h * (A61 * k[0][i] + A62 * k[1][i] + A63 * k[2][i] + A64 * k[3][i] + A65 * k[4][i]);
            }
            self.eval(sys, 5, t + h)?;
            let k = &self.k;
            for i in 0..n {
                self.y_new[i] =
                    y[i] + h * (A71 * k[0][i] + A73 * k[2][i] + A74 * k[3][i] + A75 * k[4][i] + A76 * k[5][i]);
            }
            self.tmp.copy_from_slice(&self.y_new);
            self.eval(sys, 6, t + h)?;
            let k = &self.k;
            for i in 0..n {
                self.err[i] = h
                    * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
            }
            let err = scaled_rms(&self.err, y, &self.y_new, self.rel_tol, self.abs_tol);
            let factor = if err == 0.0 {
                MAX_FACTOR
            } else {
                (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
            };
            if err <= 1.0 && err.is_finite() {
                y.copy_from_slice(&self.y_new);
                self.k.swap(0, 6);
                self.stats.accepted += 1;
                let next = (h * factor).min(self.dt_max);
                // a step shortened to hit an output time says nothing against
                // the longer step that was planned
                self.h = if truncated && factor >= 1.0 { self.h.max(next) } else { next };
                return Ok(h);
            }
            self.stats.rejected += 1;
            self.h = h * if err.is_finite() { factor.min(1.0) } else { MIN_FACTOR };
            if self.h < self.h_min {
                return Err(Error::StepUnderflow { time: t, dt: self.h });
            }
        }
    }

    fn stats(&self) -> StepStats {
        self.stats
    }
}
