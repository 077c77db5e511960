use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-dimension min-max scaling to `[0, 1]` with statistics fixed at fit
/// time. Dimensions whose range is within `epsilon` map to 0; values
/// outside the fitted range are clamped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub epsilon: f64,
}

pub const DEFAULT_EPSILON: f64 = 1e-12;

impl Normalizer {
    pub fn dim(&self) -> usize {
        self.min.len()
    }

    fn check(&self, cols: usize) -> Result<()> {
        if cols != self.dim() {
            return Err(Error::ShapeMismatch(format!(
                "normalizer has {} dims, matrix has {cols}",
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn apply(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut out = x.to_owned();
        self.apply_inplace(&mut out)?;
        Ok(out)
    }

    pub fn apply_inplace(&self, x: &mut Array2<f64>) -> Result<()> {
        self.check(x.ncols())?;
        for mut row in x.rows_mut() {
            for (d, v) in row.iter_mut().enumerate() {
                let range = self.max[d] - self.min[d];
                *v = if range <= self.epsilon {
                    0.0
                } else {
                    ((*v - self.min[d]) / range).clamp(0.0, 1.0)
                };
            }
        }
        Ok(())
    }

    /// Maps normalized values back to the raw scale (no clamping).
    pub fn invert(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(x.ncols())?;
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for (d, v) in row.iter_mut().enumerate() {
                let range = self.max[d] - self.min[d];
                *v = if range <= self.epsilon {
                    self.min[d]
                } else {
                    *v * range + self.min[d]
                };
            }
        }
        Ok(out)
    }
}

/// Running min/max over any number of matrices. Min and max are
/// order-independent, so parallel partial fits merge to the same result.
#[derive(Debug, Clone)]
pub struct NormalizerFit {
    min: Vec<f64>,
    max: Vec<f64>,
    frames: usize,
}

impl NormalizerFit {
    pub fn new(dim: usize) -> Self {
        Self {
            min: vec![f64::INFINITY; dim],
            max: vec![f64::NEG_INFINITY; dim],
            frames: 0,
        }
    }

    pub fn observe(&mut self, x: ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.min.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} dims, found {}",
                self.min.len(),
                x.ncols()
            )));
        }
        for row in x.axis_iter(Axis(0)) {
            for (d, &v) in row.iter().enumerate() {
                self.min[d] = self.min[d].min(v);
                self.max[d] = self.max[d].max(v);
            }
        }
        self.frames += x.nrows();
        Ok(())
    }

    pub fn merge(mut self, other: NormalizerFit) -> Result<Self> {
        if other.min.len() != self.min.len() {
            return Err(Error::ShapeMismatch("cannot merge fits of different width".into()));
        }
        for d in 0..self.min.len() {
            self.min[d] = self.min[d].min(other.min[d]);
            self.max[d] = self.max[d].max(other.max[d]);
        }
        self.frames += other.frames;
        Ok(self)
    }

    pub fn finish(self) -> Result<Normalizer> {
        if self.frames == 0 {
            return Err(Error::invalid("cannot fit a normalizer on zero frames"));
        }
        Ok(Normalizer {
            min: self.min,
            max: self.max,
            epsilon: DEFAULT_EPSILON,
        })
    }
}

/// Fits per-dimension statistics over all frames of all matrices pooled.
pub fn fit_normalizer<'a, I>(matrices: I) -> Result<Normalizer>
where
    I: IntoIterator<Item = ArrayView2<'a, f64>>,
{
    let mut fit: Option<NormalizerFit> = None;
    for m in matrices {
        fit.get_or_insert_with(|| NormalizerFit::new(m.ncols())).observe(m)?;
    }
    fit.ok_or_else(|| Error::invalid("no training features to fit a normalizer"))?
        .finish()
}
