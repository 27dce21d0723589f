//! Wasserstein-2 distance on the line via quantile functions.

use crate::error::{Error, Result};
use crate::metrics::measure::DiscreteMeasure;

/// Relative mismatch of total masses tolerated before normalization.
pub const MASS_TOLERANCE: f64 = 1e-9;

const GL8_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

fn gauss8(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let c = 0.5 * (b - a);
    let m = 0.5 * (a + b);
    let mut s = 0.0;
    for (x, w) in GL8_NODES.iter().zip(GL8_WEIGHTS) {
        s += w * f(m + c * x);
    }
    s * c
}

/// Atoms on the line sorted by position, with unit total mass.
fn sorted_unit_atoms(m: &DiscreteMeasure) -> Vec<(f64, f64)> {
    let t = m.total();
    let mut v: Vec<(f64, f64)> = m.points().iter().zip(m.weights()).map(|(p, &w)| (p.x, w / t)).collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    v
}

fn check_masses(a: f64, b: f64) -> Result<()> {
    if (a - b).abs() > MASS_TOLERANCE * a.abs().max(b.abs()) {
        return Err(Error::MassMismatch { left: a, right: b });
    }
    Ok(())
}

/// Exact `W2` between two atomic measures on the line, summing
/// `|F^-1(s) - G^-1(s)|^2` over the merged breakpoints of the two step
/// quantile functions. Masses must agree to [`MASS_TOLERANCE`] and are
/// normalized to one.
pub fn w2_1d_atoms(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<f64> {
    check_masses(a.total(), b.total())?;
    Ok(w2_sorted(&sorted_unit_atoms(a), &sorted_unit_atoms(b)))
}

fn w2_sorted(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0].1, b[0].1);
    let mut acc = 0.0;
    loop {
        let step = ra.min(rb);
        let d = a[i].0 - b[j].0;
        acc += step * d * d;
        ra -= step;
        rb -= step;
        if ra <= 0.0 {
            i += 1;
            if i == a.len() {
                break;
            }
            ra = a[i].1;
        }
        if rb <= 0.0 {
            j += 1;
            if j == b.len() {
                break;
            }
            rb = b[j].1;
        }
    }
    acc.max(0.0).sqrt()
}

/// A density on an interval, tabulated for CDF and quantile queries.
///
/// The interval is split into cells; the CDF at cell edges comes from
/// 8-point Gauss-Legendre per cell, and inside a cell it is evaluated by the
/// same rule on the partial cell.
pub struct ContinuousMeasure1d<F> {
    rho: F,
    lo: f64,
    width: f64,
    /// Unnormalized cumulative mass at the cell edges.
    cum: Vec<f64>,
}

/// Cells used when none are specified.
pub const DEFAULT_CELLS: usize = 20_000;

/// Quantiles are bisected to this absolute accuracy.
pub const QUANTILE_TOL: f64 = 1e-10;

impl<F: Fn(f64) -> f64> ContinuousMeasure1d<F> {
    pub fn new(rho: F, lo: f64, hi: f64, cells: usize) -> Result<Self> {
        if !(hi > lo) || cells == 0 {
            return Err(Error::InvalidArgument(format!("bad interval [{lo}, {hi}] or no cells")));
        }
        let width = (hi - lo) / cells as f64;
        let mut cum = Vec::with_capacity(cells + 1);
        cum.push(0.0);
        let mut acc = 0.0;
        for k in 0..cells {
            let a = lo + k as f64 * width;
            let part = gauss8(&rho, a, a + width);
            if part < 0.0 || !part.is_finite() {
                return Err(Error::InvalidArgument(format!("density is negative or non-finite near {a}")));
            }
            acc += part;
            cum.push(acc);
        }
        if !(acc > 0.0) {
            return Err(Error::EmptyEnsemble("density has no mass on the interval".into()));
        }
        Ok(ContinuousMeasure1d { rho, lo, width, cum })
    }

    pub fn total(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    pub fn lower(&self) -> f64 {
        self.lo
    }

    pub fn upper(&self) -> f64 {
        self.edge(self.cum.len() - 1)
    }

    fn edge(&self, k: usize) -> f64 {
        self.lo + k as f64 * self.width
    }

    fn cells(&self) -> usize {
        self.cum.len() - 1
    }

    /// Normalized CDF.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.lo {
            return 0.0;
        }
        if x >= self.upper() {
            return 1.0;
        }
        let k = (((x - self.lo) / self.width) as usize).min(self.cells() - 1);
        (self.cum[k] + gauss8(&self.rho, self.edge(k), x)) / self.total()
    }

    /// Generalized inverse of the normalized CDF for `s` in `(0, 1)`.
    pub fn quantile(&self, s: f64) -> Result<f64> {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::InvalidArgument(format!("quantile level must lie in (0, 1), got {s}")));
        }
        Ok(self.quantile_unchecked(s))
    }

    fn quantile_unchecked(&self, s: f64) -> f64 {
        let target = s * self.total();
        // first edge with cumulative mass >= target
        let k = self.cum.partition_point(|&c| c < target).clamp(1, self.cells());
        let base = self.cum[k - 1];
        let (mut a, mut b) = (self.edge(k - 1), self.edge(k));
        let a0 = a;
        while b - a > QUANTILE_TOL {
            let mid = 0.5 * (a + b);
            if base + gauss8(&self.rho, a0, mid) < target {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    }

    /// `int_a^b g(x) rho(x) dx`, splitting at cell edges.
    fn weighted_integral(&self, g: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let f = |x: f64| g(x) * (self.rho)(x);
        let ka = (((a - self.lo) / self.width).floor().max(0.0) as usize).min(self.cells() - 1);
        let mut acc = 0.0;
        let mut left = a;
        let mut k = ka + 1;
        while left < b {
            let right = if k <= self.cells() { self.edge(k).min(b) } else { b };
            if right > left {
                acc += gauss8(&f, left, right);
            }
            left = right;
            k += 1;
        }
        acc
    }
}

/// Quantile of `rho` on `[lo, hi]` at level `s`, by bisection on a
/// tabulated CDF.
pub fn quantile_from_density(rho: impl Fn(f64) -> f64, lo: f64, hi: f64, s: f64) -> Result<f64> {
    ContinuousMeasure1d::new(rho, lo, hi, DEFAULT_CELLS)?.quantile(s)
}

/// `W2` between atoms and a density, both normalized to unit mass.
///
/// With `y_k` the density's quantile at the atoms' cumulative masses `S_k`,
/// the monotone rearrangement sends `[y_{k-1}, y_k]` onto atom `x_k`, so
/// `W2^2 = sum_k int_{y_{k-1}}^{y_k} (x - x_k)^2 rho(x) dx`. This is the
/// quantile integral after the substitution `s = F(x)`, and it avoids the
/// unbounded quantile near `s = 0, 1`.
pub fn w2_1d_density<F: Fn(f64) -> f64>(atoms: &DiscreteMeasure, rho: &ContinuousMeasure1d<F>) -> Result<f64> {
    let a = sorted_unit_atoms(atoms);
    let scale = 1.0 / rho.total();
    let mut acc = 0.0;
    let mut s = 0.0;
    let mut y_prev = rho.lower();
    for (k, &(x, w)) in a.iter().enumerate() {
        s += w;
        let y = if k + 1 == a.len() || s >= 1.0 {
            rho.upper()
        } else {
            rho.quantile_unchecked(s)
        };
        acc += rho.weighted_integral(|z| (z - x) * (z - x), y_prev, y);
        y_prev = y;
    }
    Ok((acc * scale).max(0.0).sqrt())
}
