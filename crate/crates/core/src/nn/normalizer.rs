use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Component-wise min-max scaling fitted on training inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub min: Array1<f64>,
    pub max: Array1<f64>,
}

impl Normalizer {
    pub fn new(min: Array1<f64>, max: Array1<f64>) -> Result<Self> {
        if min.len() != max.len() {
            return Err(Error::Config(format!("normalizer min has {} entries, max {}", min.len(), max.len())));
        }
        if let Some(i) = (0..min.len()).find(|&i| !(max[i] > min[i]) || !min[i].is_finite() || !max[i].is_finite()) {
            return Err(Error::Numeric(format!(
                "degenerate scale in input component {i}: min {} max {}",
                min[i], max[i]
            )));
        }
        Ok(Self { min, max })
    }

    pub fn fit(rows: ArrayView2<'_, f64>) -> Result<Self> {
        if rows.nrows() < 2 {
            return Err(Error::Numeric("normalizer needs at least two rows".into()));
        }
        let min = rows.fold_axis(Axis(0), f64::INFINITY, |a, &b| a.min(b));
        let max = rows.fold_axis(Axis(0), f64::NEG_INFINITY, |a, &b| a.max(b));
        Self::new(min, max)
    }

    pub fn len(&self) -> usize {
        self.min.len()
    }

    pub fn is_empty(&self) -> bool {
        self.min.is_empty()
    }

    /// `(x - min) / (max - min)`; values outside the fitted range pass through.
    pub fn apply(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        (&x - &self.min) / (&self.max - &self.min)
    }

    pub fn apply_rows(&self, rows: ArrayView2<'_, f64>) -> Array2<f64> {
        (&rows - &self.min) / (&self.max - &self.min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn scales_to_unit_interval() {
        let rows = array![[2.0, 10.0], [4.0, 30.0], [3.0, 20.0]];
        let n = Normalizer::fit(rows.view()).unwrap();
        assert_eq!(n.apply(array![3.0, 10.0].view()), array![0.5, 0.0]);
        assert_eq!(n.apply(array![6.0, 30.0].view()), array![2.0, 1.0]);
        let all = n.apply_rows(rows.view());
        assert!(all.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn constant_component_is_rejected() {
        let rows = array![[1.0, 5.0], [2.0, 5.0]];
        assert!(matches!(Normalizer::fit(rows.view()), Err(Error::Numeric(_))));
    }
}
