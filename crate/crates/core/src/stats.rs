//! Streaming first and second moments of recordings, and the model
//! covariance `A R Γe R A^T + Γε` they estimate.

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef, Par};

use crate::error::{Error, Result};
use crate::solver::SymmetricMatrix;

/// Running sums `Σ y` and `Σ y y^T` over a stream of recordings.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentAccumulator {
    dim: usize,
    count: usize,
    sum: Vec<f64>,
    sum_outer: Mat<f64>,
}

/// Finalized moments, with the biased `1/K` normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub count: usize,
    pub mean: Vec<f64>,
    pub covariance: SymmetricMatrix,
}

impl MomentAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            count: 0,
            sum: vec![0.0; dim],
            sum_outer: Mat::zeros(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn sum(&self) -> &[f64] {
        &self.sum
    }

    pub fn sum_outer(&self) -> &Mat<f64> {
        &self.sum_outer
    }

    pub fn accumulate(&mut self, y: &[f64]) -> Result<()> {
        if y.len() != self.dim {
            return Err(Error::mismatch("accumulate", self.dim, y.len()));
        }
        for (s, v) in self.sum.iter_mut().zip(y) {
            *s += v;
        }
        for j in 0..self.dim {
            let yj = y[j];
            if yj == 0.0 {
                continue;
            }
            let mut col = self.sum_outer.col_mut(j);
            for (i, &yi) in y.iter().enumerate() {
                col[i] += yi * yj;
            }
        }
        self.count += 1;
        Ok(())
    }

    /// Adds a block of recordings through one matrix product.
    pub fn accumulate_batch<R: AsRef<[f64]>>(&mut self, batch: &[R]) -> Result<()> {
        if let Some(bad) = batch.iter().find(|y| y.as_ref().len() != self.dim) {
            return Err(Error::mismatch("accumulate_batch", self.dim, bad.as_ref().len()));
        }
        if batch.is_empty() {
            return Ok(());
        }
        let block = Mat::from_fn(self.dim, batch.len(), |i, k| batch[k].as_ref()[i]);
        for y in batch {
            for (s, v) in self.sum.iter_mut().zip(y.as_ref()) {
                *s += v;
            }
        }
        matmul(
            self.sum_outer.as_mut(),
            Accum::Add,
            block.as_ref(),
            block.transpose(),
            1.0,
            Par::Seq,
        );
        self.count += batch.len();
        Ok(())
    }

    /// Combines two accumulators as if one had seen both streams.
    pub fn merge(mut self, other: &MomentAccumulator) -> Result<Self> {
        if other.dim != self.dim {
            return Err(Error::mismatch("merge", self.dim, other.dim));
        }
        for (s, v) in self.sum.iter_mut().zip(&other.sum) {
            *s += v;
        }
        self.sum_outer += &other.sum_outer;
        self.count += other.count;
        Ok(self)
    }

    pub fn finalize(&self) -> Result<Moments> {
        if self.count == 0 {
            return Err(Error::EmptyInput("no recordings accumulated"));
        }
        let k = self.count as f64;
        let mean: Vec<f64> = self.sum.iter().map(|s| s / k).collect();
        let n = self.dim;
        let mut cov = Mat::zeros(n, n);
        // upper triangle only, mirrored, so the result is exactly symmetric
        for j in 0..n {
            for i in 0..=j {
                let v = self.sum_outer[(i, j)] / k - mean[i] * mean[j];
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        Ok(Moments {
            count: self.count,
            mean,
            covariance: SymmetricMatrix::new(cov)?,
        })
    }
}

pub fn merge(a: MomentAccumulator, b: &MomentAccumulator) -> Result<MomentAccumulator> {
    a.merge(b)
}

/// `A diag(rho) Γe diag(rho) A^T + Γε`.
pub fn model_covariance(
    a: MatRef<'_, f64>,
    rho: &[f64],
    gamma_e: &SymmetricMatrix,
    gamma_eps: &SymmetricMatrix,
) -> Result<SymmetricMatrix> {
    let (rows, cols) = a.shape();
    if rho.len() != cols {
        return Err(Error::mismatch("model_covariance rho", cols, rho.len()));
    }
    if gamma_e.dim() != cols {
        return Err(Error::mismatch("model_covariance gamma_e", cols, gamma_e.dim()));
    }
    if gamma_eps.dim() != rows {
        return Err(Error::mismatch("model_covariance gamma_eps", rows, gamma_eps.dim()));
    }
    let ar = Mat::from_fn(rows, cols, |i, j| a[(i, j)] * rho[j]);
    let inner = &ar * gamma_e.as_mat();
    let full = &inner * ar.transpose() + gamma_eps.as_mat();
    let sym = Mat::from_fn(rows, rows, |i, j| {
        if i == j {
            full[(i, i)]
        } else {
            0.5 * (full[(i, j)] + full[(j, i)])
        }
    });
    SymmetricMatrix::new(sym)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_recording() {
        let mut acc = MomentAccumulator::new(3);
        acc.accumulate(&[1.0, -2.0, 0.5]).unwrap();
        let m = acc.finalize().unwrap();
        assert_eq!(m.mean, vec![1.0, -2.0, 0.5]);
        assert!(m.covariance.as_mat().norm_max() == 0.0);
    }

    #[test]
    fn two_unit_vectors() {
        let mut acc = MomentAccumulator::new(2);
        acc.accumulate(&[1.0, 0.0]).unwrap();
        acc.accumulate(&[0.0, 1.0]).unwrap();
        let m = acc.finalize().unwrap();
        assert_eq!(m.mean, vec![0.5, 0.5]);
        let c = m.covariance.as_mat();
        assert_eq!([c[(0, 0)], c[(0, 1)], c[(1, 0)], c[(1, 1)]], [0.25, -0.25, -0.25, 0.25]);
    }

    #[test]
    fn repeated_recording_has_zero_covariance() {
        let mut acc = MomentAccumulator::new(2);
        for _ in 0..7 {
            acc.accumulate(&[0.25, 3.0]).unwrap();
        }
        assert!(acc.finalize().unwrap().covariance.as_mat().norm_max() == 0.0);
    }

    #[test]
    fn batch_matches_sequential() {
        let ys: Vec<Vec<f64>> = (0..9).map(|k| (0..4).map(|i| ((k * 5 + i * 3) % 7) as f64 - 3.0).collect()).collect();
        let mut seq = MomentAccumulator::new(4);
        for y in &ys {
            seq.accumulate(y).unwrap();
        }
        let mut batch = MomentAccumulator::new(4);
        batch.accumulate_batch(&ys).unwrap();
        // small integers: all sums are exact
        assert_eq!(seq, batch);
    }

    #[test]
    fn errors() {
        let mut acc = MomentAccumulator::new(2);
        assert!(matches!(acc.accumulate(&[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(acc.finalize(), Err(Error::EmptyInput(_))));
        assert!(MomentAccumulator::new(2).merge(&MomentAccumulator::new(3)).is_err());
    }

    #[test]
    fn merge_with_empty_is_identity() {
        let mut a = MomentAccumulator::new(2);
        a.accumulate(&[1.5, 2.0]).unwrap();
        a.accumulate(&[-1.0, 0.25]).unwrap();
        assert_eq!(MomentAccumulator::new(2).merge(&a).unwrap(), a);
    }

    #[test]
    fn model_covariance_cases() {
        let eye = Mat::<f64>::identity(2, 2);
        let ge = SymmetricMatrix::identity(2);
        let zero = SymmetricMatrix::new(Mat::zeros(2, 2)).unwrap();
        let c = model_covariance(eye.as_ref(), &[1.0, 2.0], &ge, &zero).unwrap();
        assert_eq!(c.as_mat(), &Mat::from_fn(2, 2, |i, j| if i == j { [1.0, 4.0][i] } else { 0.0 }));

        let a = Mat::from_fn(3, 2, |i, j| (i + 2 * j) as f64);
        let geps = SymmetricMatrix::new(Mat::from_fn(3, 3, |i, j| if i == j { 0.5 } else { 0.1 })).unwrap();
        let c = model_covariance(a.as_ref(), &[0.0, 0.0], &ge, &geps).unwrap();
        assert_eq!(c, geps);
        assert!(model_covariance(a.as_ref(), &[1.0], &ge, &geps).is_err());
    }
}
