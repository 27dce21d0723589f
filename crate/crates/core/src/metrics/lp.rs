use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::sum::PairwiseSum;

fn check(a: &GridField, b: &GridField) -> Result<()> {
    if a.grid() != b.grid() {
        return Err(Error::GridMismatch(format!("{:?} vs {:?}", a.grid(), b.grid())));
    }
    Ok(())
}

/// `sum_i |a(ih) - b(ih)| h^d`.
pub fn l1_error(a: &GridField, b: &GridField) -> Result<f64> {
    check(a, b)?;
    let mut s = PairwiseSum::new();
    for (x, y) in a.values().iter().zip(b.values()) {
        s.push((x - y).abs());
    }
    Ok(s.total() * a.grid().cell_volume())
}

/// `max_i |a(ih) - b(ih)|`.
pub fn linf_error(a: &GridField, b: &GridField) -> Result<f64> {
    check(a, b)?;
    Ok(a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}
