use faer::Mat;

use crate::error::{Error, Result};
use crate::geometry::ObjectGrid;

/// 2D convolution with a point spread function on the object grid,
/// zero outside the grid. Output has the same shape as the grid.
///
/// The kernel is stored row-major (`rows x cols`) and its origin is the
/// element `(rows / 2, cols / 2)`.
#[derive(Debug, Clone)]
pub struct MicroscopyOperator {
    grid: ObjectGrid,
    kernel: Vec<f64>,
    kernel_rows: usize,
    kernel_cols: usize,
}

impl MicroscopyOperator {
    pub fn new(kernel: Vec<f64>, kernel_rows: usize, kernel_cols: usize, grid: ObjectGrid) -> Result<Self> {
        if kernel_rows == 0
            || kernel_cols == 0
            || kernel_rows > grid.n_y()
            || kernel_cols > grid.n_x()
        {
            return Err(Error::KernelSize {
                kernel_rows,
                kernel_cols,
                grid_rows: grid.n_y(),
                grid_cols: grid.n_x(),
            });
        }
        if kernel.len() != kernel_rows * kernel_cols {
            return Err(Error::mismatch("psf kernel", kernel_rows * kernel_cols, kernel.len()));
        }
        if kernel.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("psf kernel has non-finite entries".into()));
        }
        Ok(Self {
            grid,
            kernel,
            kernel_rows,
            kernel_cols,
        })
    }

    pub fn grid(&self) -> &ObjectGrid {
        &self.grid
    }

    pub fn size(&self) -> usize {
        self.grid.len()
    }

    fn for_each_weight(&self, mut visit: impl FnMut(usize, usize, f64)) {
        let (ny, nx) = (self.grid.n_y() as isize, self.grid.n_x() as isize);
        let (cr, cc) = ((self.kernel_rows / 2) as isize, (self.kernel_cols / 2) as isize);
        for r in 0..ny {
            for c in 0..nx {
                let out = (r * nx + c) as usize;
                for a in 0..self.kernel_rows {
                    let sr = r + cr - a as isize;
                    if sr < 0 || sr >= ny {
                        continue;
                    }
                    for b in 0..self.kernel_cols {
                        let sc = c + cc - b as isize;
                        if sc < 0 || sc >= nx {
                            continue;
                        }
                        visit(out, (sr * nx + sc) as usize, self.kernel[a * self.kernel_cols + b]);
                    }
                }
            }
        }
    }

    pub fn apply(&self, rho: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.size()];
        self.for_each_weight(|o, i, w| out[o] += w * rho[i]);
        out
    }

    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.size()];
        self.for_each_weight(|o, i, w| out[i] += w * y[o]);
        out
    }

    pub fn dense(&self) -> Mat<f64> {
        let n = self.size();
        let mut a = Mat::zeros(n, n);
        self.for_each_weight(|o, i, w| a[(o, i)] += w);
        a
    }
}

/// Normalized, centered Gaussian PSF of odd size `size x size`.
pub fn gaussian_psf(size: usize, sigma_pixels: f64) -> Vec<f64> {
    let c = (size / 2) as f64;
    let mut k: Vec<f64> = (0..size * size)
        .map(|i| {
            let (r, col) = ((i / size) as f64 - c, (i % size) as f64 - c);
            (-(r * r + col * col) / (2.0 * sigma_pixels * sigma_pixels)).exp()
        })
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}
