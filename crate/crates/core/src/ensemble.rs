//! Atomic measures `sum_i m_i delta_{X_i}` and their construction from densities.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{GridField, GridSpec};
use crate::mollifier::{Dimension, Mollifier};
use crate::point::Point;
use crate::sum::{folded_sum, PairwiseSum};

/// Relative mass below which grid particles are discarded.
pub const DROP_THRESHOLD: f64 = 1e-14;

/// Particle positions with fixed masses.
///
/// Masses are shared between snapshots of a trajectory and never change.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    dimension: Dimension,
    positions: Vec<Point>,
    masses: Arc<Vec<f64>>,
}

impl ParticleEnsemble {
    pub fn new(dimension: Dimension, positions: Vec<Point>, masses: Vec<f64>) -> Result<Self> {
        Self::with_shared_masses(dimension, positions, Arc::new(masses))
    }

    pub fn with_shared_masses(dimension: Dimension, positions: Vec<Point>, masses: Arc<Vec<f64>>) -> Result<Self> {
        if positions.len() != masses.len() {
            return Err(Error::InvalidArgument(format!(
                "{} positions but {} masses",
                positions.len(),
                masses.len()
            )));
        }
        if positions.is_empty() {
            return Err(Error::EmptyEnsemble("no particles".into()));
        }
        if let Some(k) = masses.iter().position(|&m| !(m >= 0.0 && m.is_finite())) {
            return Err(Error::InvalidArgument(format!("mass {k} is negative or non-finite")));
        }
        if !(masses.iter().sum::<f64>() > 0.0) {
            return Err(Error::EmptyEnsemble("total mass is zero".into()));
        }
        if dimension == Dimension::One && positions.iter().any(|p| p.y != 0.0) {
            return Err(Error::InvalidArgument("1-D ensemble with non-zero y coordinate".into()));
        }
        Ok(ParticleEnsemble { dimension, positions, masses })
    }

    /// Same masses, new positions.
    pub fn moved_to(&self, positions: Vec<Point>) -> Result<Self> {
        if positions.len() != self.masses.len() {
            return Err(Error::InvalidArgument("position count changed".into()));
        }
        if let Some(index) = positions.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite {
                index,
                what: "position".into(),
            });
        }
        Ok(ParticleEnsemble {
            dimension: self.dimension,
            positions,
            masses: Arc::clone(&self.masses),
        })
    }

    pub fn dimension(&self) -> Dimension {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn shared_masses(&self) -> Arc<Vec<f64>> {
        Arc::clone(&self.masses)
    }

    pub fn total_mass(&self) -> f64 {
        let mut s = PairwiseSum::new();
        for &m in self.masses.iter() {
            s.push(m);
        }
        s.total()
    }

    /// First moment `sum_i m_i X_i`.
    pub fn momentum(&self) -> Point {
        let mut s = PairwiseSum::new();
        for (p, &m) in self.positions.iter().zip(self.masses.iter()) {
            s.push(*p * m);
        }
        s.total()
    }

    /// Second moment `M2 = sum_i m_i |X_i|^2`.
    pub fn second_moment(&self) -> f64 {
        let mut s = PairwiseSum::new();
        for (p, &m) in self.positions.iter().zip(self.masses.iter()) {
            s.push(m * p.norm_sq());
        }
        s.total()
    }

    /// Blob density `(phi_eps * mu)(x) = sum_i phi_eps(x - X_i) m_i`.
    pub fn blob_density(&self, mollifier: &Mollifier, x: Point) -> f64 {
        let pos = &self.positions;
        let m = &self.masses;
        folded_sum(pos.len(), |j| mollifier.phi_r2((x - pos[j]).norm_sq()) * m[j])
    }

    /// Blob density at every node of `grid`, lexicographic order.
    pub fn sample_on_grid(&self, mollifier: &Mollifier, grid: &GridSpec) -> GridField {
        let nodes = grid.nodes();
        let values: Vec<f64> = nodes.par_iter().map(|&x| self.blob_density(mollifier, x)).collect();
        GridField::new(*grid, values).expect("node count matches by construction")
    }

    pub fn translated(&self, shift: Point) -> Result<Self> {
        self.moved_to(self.positions.iter().map(|&p| p + shift).collect())
    }

    /// Fuse particles closer than `radius` into their centre of mass, or
    /// `None` when no pair is that close. Mass and momentum are unchanged.
    pub fn merged_within(&self, radius: f64) -> Option<Self> {
        let (positions, masses) = merge_close(&self.positions, &self.masses, radius)?;
        Some(ParticleEnsemble {
            dimension: self.dimension,
            positions,
            masses: Arc::new(masses),
        })
    }
}

/// Greedy pairing along a sweep in `x`: each particle joins at most one
/// pair per call, so a triple contact resolves over two calls. The survivor
/// keeps the lower index and the order of the others is preserved.
pub(crate) fn merge_close(pos: &[Point], masses: &[f64], radius: f64) -> Option<(Vec<Point>, Vec<f64>)> {
    if !(radius > 0.0) || pos.len() < 2 {
        return None;
    }
    let mut order: Vec<usize> = (0..pos.len()).collect();
    order.sort_by(|&a, &b| pos[a].x.total_cmp(&pos[b].x));
    let r2 = radius * radius;
    let mut partner: Vec<Option<usize>> = vec![None; pos.len()];
    let mut taken = vec![false; pos.len()];
    for (k, &a) in order.iter().enumerate() {
        if taken[a] {
            continue;
        }
        for &b in &order[k + 1..] {
            if pos[b].x - pos[a].x >= radius {
                break;
            }
            if !taken[b] && (pos[b] - pos[a]).norm_sq() < r2 {
                taken[a] = true;
                taken[b] = true;
                partner[a.min(b)] = Some(a.max(b));
                break;
            }
        }
    }
    if !taken.iter().any(|&t| t) {
        return None;
    }
    let mut out_pos = Vec::with_capacity(pos.len());
    let mut out_mass = Vec::with_capacity(pos.len());
    for i in 0..pos.len() {
        match partner[i] {
            Some(j) => {
                let m = masses[i] + masses[j];
                let x = if m > 0.0 {
                    (pos[i] * masses[i] + pos[j] * masses[j]) * (1.0 / m)
                } else {
                    pos[i]
                };
                out_pos.push(x);
                out_mass.push(m);
            }
            // the higher index of a pair is absorbed
            None if taken[i] => {}
            None => {
                out_pos.push(pos[i]);
                out_mass.push(masses[i]);
            }
        }
    }
    Some((out_pos, out_mass))
}

/// How particle masses are assigned from the initial density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MassRule {
    /// `m_i = rho0(ih) h^d`.
    #[default]
    PointValue,
    /// `m_i = int_{Q_i} rho0`, over the cube of side `h` centred at `ih`
    /// (4-point Gauss-Legendre per axis).
    CellIntegral,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Discretization {
    pub rule: MassRule,
    /// Rescale masses to this total, if set.
    pub normalize_to: Option<f64>,
}

/// Place one particle at every grid node with mass taken from `rho0`.
///
/// Particles lighter than [`DROP_THRESHOLD`] times the heaviest one are
/// discarded.
pub fn discretize_density<F>(rho0: F, grid: &GridSpec, opts: Discretization) -> Result<ParticleEnsemble>
where
    F: Fn(Point) -> f64 + Sync,
{
    let nodes = grid.nodes();
    let h = grid.spacing;
    let vol = grid.cell_volume();
    let d = grid.dimension;
    let raw: Vec<f64> = nodes
        .par_iter()
        .map(|&p| match opts.rule {
            MassRule::PointValue => rho0(p) * vol,
            MassRule::CellIntegral => cell_integral(&rho0, p, h, d),
        })
        .collect();
    if let Some(k) = raw.iter().position(|&m| !(m >= 0.0 && m.is_finite())) {
        return Err(Error::InvalidArgument(format!(
            "initial density is negative or non-finite at {:?}",
            nodes[k]
        )));
    }
    let max = raw.iter().cloned().fold(0.0, f64::max);
    if !(max > 0.0) {
        return Err(Error::EmptyEnsemble("initial density vanishes on the grid".into()));
    }
    let cut = DROP_THRESHOLD * max;
    let (positions, mut masses): (Vec<Point>, Vec<f64>) = nodes
        .into_iter()
        .zip(raw)
        .filter(|&(_, m)| m >= cut)
        .unzip();
    if let Some(target) = opts.normalize_to {
        if !(target > 0.0) {
            return Err(Error::InvalidArgument(format!("target mass must be positive, got {target}")));
        }
        let total: f64 = {
            let mut s = PairwiseSum::new();
            masses.iter().for_each(|&m| s.push(m));
            s.total()
        };
        let scale = target / total;
        masses.iter_mut().for_each(|m| *m *= scale);
    }
    ParticleEnsemble::new(d, positions, masses)
}

const GL4_NODES: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
const GL4_WEIGHTS: [f64; 4] = [
    0.347_854_845_137_453_9,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_9,
];

fn cell_integral<F: Fn(Point) -> f64>(rho: &F, c: Point, h: f64, d: Dimension) -> f64 {
    let half = 0.5 * h;
    match d {
        Dimension::One => {
            let mut s = 0.0;
            for (x, w) in GL4_NODES.iter().zip(GL4_WEIGHTS) {
                s += w * rho(Point::on_line(c.x + half * x));
            }
            s * half
        }
        Dimension::Two => {
            let mut s = 0.0;
            for (x, wx) in GL4_NODES.iter().zip(GL4_WEIGHTS) {
                for (y, wy) in GL4_NODES.iter().zip(GL4_WEIGHTS) {
                    s += wx * wy * rho(Point::new(c.x + half * x, c.y + half * y));
                }
            }
            s * half * half
        }
    }
}
