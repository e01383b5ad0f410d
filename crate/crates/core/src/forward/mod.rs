//! Forward operators mapping absorber coefficients to recordings.
//!
//! The photoacoustic operator is split as `A = A_EIR' A_s`: a sparse
//! time-of-flight deposit of point-absorber deltas followed by convolution of
//! each transducer trace with the derivative of the impulse response. The
//! microscopy variant is plain PSF convolution on the object grid.

mod eir;
mod microscopy;
mod signal;

use faer::Mat;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

pub use eir::{eir_derivative_value, eir_value, envelope_sigma, EirModel};
pub use microscopy::{gaussian_psf, MicroscopyOperator};
pub use signal::{MediumParams, SignalTap, SparseSignalOperator};

use crate::error::{Error, Result};
use crate::geometry::{ObjectGrid, Timebase, TransducerArray};

/// Default cap on dense materialization, in bytes.
pub const DEFAULT_DENSE_BUDGET: usize = 4 << 30;

#[derive(Debug, Clone)]
pub enum OperatorKind {
    Pat {
        signal: SparseSignalOperator,
        eir: EirModel,
    },
    Microscopy(MicroscopyOperator),
}

#[derive(Debug, Clone)]
pub struct ForwardOperator {
    kind: OperatorKind,
    dense_cache: Option<Mat<f64>>,
}

pub fn build_sparse_signal_operator(
    grid: &ObjectGrid,
    array: &TransducerArray,
    timebase: &Timebase,
    medium: &MediumParams,
) -> Result<SparseSignalOperator> {
    SparseSignalOperator::build(grid, array, timebase, medium)
}

pub fn build_eir(f0: f64, fwhm: f64, timebase: Timebase) -> Result<EirModel> {
    EirModel::new(f0, fwhm, timebase)
}

/// Microscopy operator from a row-major `rows x cols` PSF.
pub fn build_microscopy_operator(
    kernel: Vec<f64>,
    rows: usize,
    cols: usize,
    grid: &ObjectGrid,
) -> Result<ForwardOperator> {
    Ok(ForwardOperator {
        kind: OperatorKind::Microscopy(MicroscopyOperator::new(kernel, rows, cols, grid.clone())?),
        dense_cache: None,
    })
}

impl ForwardOperator {
    pub fn pat(signal: SparseSignalOperator, eir: EirModel) -> Result<Self> {
        if signal.samples() != eir.timebase().samples() {
            return Err(Error::mismatch("eir timebase", signal.samples(), eir.timebase().samples()));
        }
        Ok(Self {
            kind: OperatorKind::Pat { signal, eir },
            dense_cache: None,
        })
    }

    /// Photoacoustic operator straight from the setup description.
    pub fn build_pat(
        grid: &ObjectGrid,
        array: &TransducerArray,
        timebase: &Timebase,
        medium: &MediumParams,
        f0: f64,
        fwhm: f64,
    ) -> Result<Self> {
        let signal = SparseSignalOperator::build(grid, array, timebase, medium)?;
        let eir = EirModel::new(f0, fwhm, *timebase)?;
        Self::pat(signal, eir)
    }

    pub fn kind(&self) -> &OperatorKind {
        &self.kind
    }

    pub fn rows(&self) -> usize {
        match &self.kind {
            OperatorKind::Pat { signal, .. } => signal.rows(),
            OperatorKind::Microscopy(op) => op.size(),
        }
    }

    pub fn cols(&self) -> usize {
        match &self.kind {
            OperatorKind::Pat { signal, .. } => signal.cols(),
            OperatorKind::Microscopy(op) => op.size(),
        }
    }

    /// `y = A rho`, through the implicit split form.
    pub fn apply(&self, rho: &[f64]) -> Result<Vec<f64>> {
        if rho.len() != self.cols() {
            return Err(Error::mismatch("apply_forward", self.cols(), rho.len()));
        }
        Ok(match &self.kind {
            OperatorKind::Pat { signal, eir } => {
                let deposited = signal.apply(rho);
                let t = signal.samples();
                let mut out = vec![0.0; deposited.len()];
                let mut buf = Vec::with_capacity(eir.fft_len());
                for (src, dst) in deposited.chunks_exact(t).zip(out.chunks_exact_mut(t)) {
                    eir.convolve(src, dst, &mut buf);
                }
                out
            }
            OperatorKind::Microscopy(op) => op.apply(rho),
        })
    }

    /// `A^T y`, implicit.
    pub fn apply_adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.rows() {
            return Err(Error::mismatch("apply_adjoint", self.rows(), y.len()));
        }
        Ok(match &self.kind {
            OperatorKind::Pat { signal, eir } => {
                let t = signal.samples();
                let mut filtered = vec![0.0; y.len()];
                let mut buf = Vec::with_capacity(eir.fft_len());
                for (src, dst) in y.chunks_exact(t).zip(filtered.chunks_exact_mut(t)) {
                    eir.correlate(src, dst, &mut buf);
                }
                signal.apply_transpose(&filtered)
            }
            OperatorKind::Microscopy(op) => op.apply_transpose(y),
        })
    }

    pub fn materialize_dense(&self) -> Result<Mat<f64>> {
        self.materialize_dense_with_budget(DEFAULT_DENSE_BUDGET)
    }

    /// Dense `rows x cols` matrix whose column `j` is `A e_j`.
    pub fn materialize_dense_with_budget(&self, budget_bytes: usize) -> Result<Mat<f64>> {
        let required = self
            .rows()
            .checked_mul(self.cols())
            .and_then(|n| n.checked_mul(std::mem::size_of::<f64>()))
            .unwrap_or(usize::MAX);
        if required > budget_bytes {
            return Err(Error::MemoryBudgetExceeded {
                required,
                budget: budget_bytes,
            });
        }
        Ok(match &self.kind {
            OperatorKind::Pat { signal, eir } => {
                let t = signal.samples();
                let mut a = Mat::zeros(signal.rows(), signal.cols());
                for tap in signal.taps() {
                    let block = tap.row / t * t;
                    let shift = (tap.row - block) as isize;
                    let mut col = a.col_mut(tap.col);
                    for i in 0..t {
                        col[block + i] += tap.weight * eir.derivative_tap(i as isize - shift);
                    }
                }
                a
            }
            OperatorKind::Microscopy(op) => op.dense(),
        })
    }

    /// Materializes and keeps the dense matrix.
    pub fn with_dense_cache(mut self, budget_bytes: usize) -> Result<Self> {
        self.dense_cache = Some(self.materialize_dense_with_budget(budget_bytes)?);
        Ok(self)
    }

    pub fn dense_cache(&self) -> Option<&Mat<f64>> {
        self.dense_cache.as_ref()
    }

    /// `A^T y` through the dense cache.
    pub fn apply_adjoint_dense(&self, y: &[f64]) -> Result<Vec<f64>> {
        let a = self
            .dense_cache
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("operator has no dense cache".into()))?;
        if y.len() != a.nrows() {
            return Err(Error::mismatch("apply_adjoint_dense", a.nrows(), y.len()));
        }
        Ok((0..a.ncols())
            .map(|j| a.col(j).iter().zip(y).map(|(a, b)| a * b).sum())
            .collect())
    }
}

/// Magnitude of the analytic signal of a real trace.
pub fn hilbert_envelope(trace: &[f64]) -> Vec<f64> {
    let n = trace.len();
    if n == 0 {
        return Vec::new();
    }
    let len = (2 * n).next_power_of_two();
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex64> = trace.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(len, Complex64::new(0.0, 0.0));
    planner.plan_fft_forward(len).process(&mut buf);
    for (k, b) in buf.iter_mut().enumerate() {
        if k == 0 || k == len / 2 {
            continue;
        } else if k < len / 2 {
            *b *= 2.0;
        } else {
            *b = Complex64::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    buf.iter().take(n).map(|c| c.norm() / len as f64).collect()
}
