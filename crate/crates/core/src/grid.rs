//! Regular grids `Q_R^h = { i in Z^d : |i h| <= R }` and fields sampled on them.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mollifier::Dimension;
use crate::point::Point;

/// Lattice of spacing `h` restricted to the closed ball of radius `R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub spacing: f64,
    pub radius: f64,
    pub dimension: Dimension,
}

impl GridSpec {
    pub fn new(spacing: f64, radius: f64, dimension: Dimension) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::InvalidArgument(format!("grid spacing must be positive, got {spacing}")));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidArgument(format!("grid radius must be positive, got {radius}")));
        }
        Ok(GridSpec { spacing, radius, dimension })
    }

    /// Largest index magnitude along one axis.
    pub fn max_index(&self) -> i64 {
        ((self.radius / self.spacing) * (1.0 + 1e-12)).floor() as i64
    }

    /// Integer indices in lexicographic order (first coordinate outermost).
    pub fn indices(&self) -> Vec<[i64; 2]> {
        let n = self.max_index();
        let lim = (self.radius / self.spacing).powi(2) * (1.0 + 1e-12);
        match self.dimension {
            Dimension::One => (-n..=n).map(|i| [i, 0]).collect(),
            Dimension::Two => {
                let mut out = Vec::new();
                for i in -n..=n {
                    for j in -n..=n {
                        if ((i * i + j * j) as f64) <= lim {
                            out.push([i, j]);
                        }
                    }
                }
                out
            }
        }
    }

    pub fn nodes(&self) -> Vec<Point> {
        let h = self.spacing;
        self.indices()
            .into_iter()
            .map(|[i, j]| Point::new(i as f64 * h, j as f64 * h))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.indices().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `h^d`, the volume of one grid cell.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dimension.get() as i32)
    }
}

/// Scalar values on the nodes of a [`GridSpec`], in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    grid: GridSpec,
    nodes: Vec<Point>,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        let nodes = grid.nodes();
        if nodes.len() != values.len() {
            return Err(Error::GridMismatch(format!(
                "grid has {} nodes but {} values were supplied",
                nodes.len(),
                values.len()
            )));
        }
        Ok(GridField { grid, nodes, values })
    }

    /// Evaluate `f` at every node.
    pub fn from_fn(grid: GridSpec, f: impl Fn(Point) -> f64) -> Self {
        let nodes = grid.nodes();
        let values = nodes.iter().map(|&p| f(p)).collect();
        GridField { grid, nodes, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Discrete mass `sum_i f(ih) h^d`.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv_to(&mut buf)?;
        crate::io::write_atomic(path, &buf)
    }

    /// Columns: coordinates (`x` or `x,y`) then `value`, one row per node.
    pub fn write_csv_to<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        match self.grid.dimension {
            Dimension::One => {
                wtr.write_record(["x", "value"])?;
                for (p, v) in self.nodes.iter().zip(&self.values) {
                    wtr.write_record([fmt(p.x), fmt(*v)])?;
                }
            }
            Dimension::Two => {
                wtr.write_record(["x", "y", "value"])?;
                for (p, v) in self.nodes.iter().zip(&self.values) {
                    wtr.write_record([fmt(p.x), fmt(p.y), fmt(*v)])?;
                }
            }
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

pub(crate) fn fmt(v: f64) -> String {
    // Shortest round-trip representation; locale independent.
    format!("{v:e}")
}
