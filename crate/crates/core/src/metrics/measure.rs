use crate::ensemble::ParticleEnsemble;
use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::point::Point;
use crate::sum::PairwiseSum;

/// Weighted atoms `sum_k w_k delta_{p_k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    points: Vec<Point>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(points: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::InvalidArgument(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if let Some(k) = weights.iter().position(|&w| !(w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidArgument(format!("weight {k} is negative or non-finite")));
        }
        if let Some(index) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite {
                index,
                what: "atom position".into(),
            });
        }
        let m = DiscreteMeasure { points, weights };
        if !(m.total() > 0.0) {
            return Err(Error::EmptyEnsemble("measure has no mass".into()));
        }
        Ok(m)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total(&self) -> f64 {
        let mut s = PairwiseSum::new();
        self.weights.iter().for_each(|&w| s.push(w));
        s.total()
    }

    /// Same atoms rescaled to unit mass.
    pub fn normalized(&self) -> Self {
        let t = self.total();
        DiscreteMeasure {
            points: self.points.clone(),
            weights: self.weights.iter().map(|w| w / t).collect(),
        }
    }

    /// Drop atoms lighter than `rel` times the heaviest one.
    pub fn thresholded(&self, rel: f64) -> Self {
        let max = self.weights.iter().cloned().fold(0.0, f64::max);
        let cut = rel * max;
        let (points, weights) = self
            .points
            .iter()
            .zip(&self.weights)
            .filter(|(_, &w)| w >= cut && w > 0.0)
            .map(|(p, w)| (*p, *w))
            .unzip();
        DiscreteMeasure { points, weights }
    }

    pub fn translated(&self, c: Point) -> Self {
        DiscreteMeasure {
            points: self.points.iter().map(|&p| p + c).collect(),
            weights: self.weights.clone(),
        }
    }
}

/// Atoms at the grid nodes with weights `value * h^d`.
pub fn measure_from_field(f: &GridField) -> Result<DiscreteMeasure> {
    if let Some(k) = f.values().iter().position(|&v| v < 0.0) {
        return Err(Error::InvalidArgument(format!("field value {k} is negative")));
    }
    let vol = f.grid().cell_volume();
    DiscreteMeasure::new(f.nodes().to_vec(), f.values().iter().map(|v| v * vol).collect())
}

/// The particles themselves as atoms.
pub fn measure_from_ensemble(e: &ParticleEnsemble) -> DiscreteMeasure {
    DiscreteMeasure {
        points: e.positions().to_vec(),
        weights: e.masses().to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::mollifier::Dimension;

    #[test]
    fn single_node_field() {
        let g = GridSpec::new(1.0, 0.5, Dimension::One).unwrap();
        let f = GridField::new(g, vec![1.0]).unwrap();
        let m = measure_from_field(&f).unwrap();
        assert_eq!(m.points(), &[Point::ZERO]);
        assert_eq!(m.weights(), &[1.0]);
    }

    #[test]
    fn field_mass_is_l1_mass() {
        let g = GridSpec::new(0.1, 1.0, Dimension::Two).unwrap();
        let f = GridField::from_fn(g, |p| (-(p.x * p.x + 3.0 * p.y * p.y)).exp());
        let m = measure_from_field(&f).unwrap();
        assert!((m.total() - f.mass()).abs() < 1e-14);
        let n = m.len();
        for k in 0..n {
            assert_eq!(m.points()[k], -m.points()[n - 1 - k]);
            assert_eq!(m.weights()[k], m.weights()[n - 1 - k]);
        }
    }

    #[test]
    fn rejects_empty_and_negative() {
        let g = GridSpec::new(1.0, 1.0, Dimension::One).unwrap();
        assert!(measure_from_field(&GridField::new(g, vec![0.0; 3]).unwrap()).is_err());
        assert!(measure_from_field(&GridField::new(g, vec![1.0, -1.0, 0.0]).unwrap()).is_err());
    }

    #[test]
    fn threshold_and_normalize() {
        let m = DiscreteMeasure::new(
            vec![Point::ZERO, Point::on_line(1.0), Point::on_line(2.0)],
            vec![2.0, 1e-15, 2.0],
        )
        .unwrap();
        let t = m.thresholded(1e-12).normalized();
        assert_eq!(t.len(), 2);
        assert_eq!(t.weights(), &[0.5, 0.5]);
    }
}
