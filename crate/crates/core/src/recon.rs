//! Second-order (covariance) reconstruction and the first-order baseline.
//!
//! The second-order path recovers `R = diag(rho)` from
//! `Γy - Γε = A R Γe R A^T` with four ridge solves around a PSD square root:
//!
//! 1. `M1 = Γ̂y - Γε`
//! 2. `M2 = argmin ||A M - M1||² + λ1 ||M||²`
//! 3. `M3 = argmin ||M A^T - M2||² + λ1 ||M||²`   (≈ `R Γe R`)
//! 4. `M4 = √Γe M3 √Γe`
//! 5. `M5 = sqrt(proj_psd(sym(M4)))`              (≈ `√Γe R √Γe`)
//! 6. `M6 = argmin ||√Γe M - M5||² + λ2 ||M||²`
//! 7. `R̂ = argmin ||M √Γe - M6||² + λ2 ||M||²`
//! 8. `rho_hat = diag(R̂)`
//!
//! Solves 2/3 share one factorization of `A`, solves 6/7 one of `√Γe`.

use std::sync::Arc;
use std::time::{Duration, Instant};

use faer::{Mat, MatRef};

use crate::error::{Error, Result};
use crate::solver::{project_psd, psd_sqrt, spectral_norm_squared, symmetrize, RidgeFactorization, SymmetricMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    /// Skip the PSD projection when `sym(M4)` already has a square root.
    pub skip_projection: bool,
    pub trace_intermediates: bool,
}

impl ReconConfig {
    pub fn new(lambda1: f64, lambda2: f64) -> Self {
        Self {
            lambda1,
            lambda2,
            skip_projection: false,
            trace_intermediates: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Intermediate matrices, kept when `trace_intermediates` is set.
#[derive(Debug, Clone, Default)]
pub struct Alg1Trace {
    pub m1: Option<Mat<f64>>,
    pub m2: Option<Mat<f64>>,
    pub m3: Option<Mat<f64>>,
    pub m4: Option<Mat<f64>>,
    pub m5: Option<Mat<f64>>,
    pub m6: Option<Mat<f64>>,
    pub r_hat: Option<Mat<f64>>,
    /// Whether the PSD projection ran.
    pub projected: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ReconTimings {
    pub factorization: Duration,
    pub algorithm: Duration,
    /// Factorizations were reused rather than computed.
    pub factorization_cached: bool,
}

#[derive(Debug, Clone)]
pub struct SecondOrderOutput {
    pub rho: Vec<f64>,
    pub trace: Alg1Trace,
    pub timings: ReconTimings,
}

/// Square root of the speckle covariance and its ridge factorization.
#[derive(Debug, Clone)]
pub struct SpeckleRoot {
    sqrt: SymmetricMatrix,
    factor: RidgeFactorization,
}

impl SpeckleRoot {
    pub fn new(gamma_e: &SymmetricMatrix, lambda2: f64) -> Result<Self> {
        let sqrt = psd_sqrt(gamma_e)?;
        let factor = RidgeFactorization::new(sqrt.as_ref(), lambda2)?;
        Ok(Self { sqrt, factor })
    }

    pub fn sqrt(&self) -> &SymmetricMatrix {
        &self.sqrt
    }

    pub fn factor(&self) -> &RidgeFactorization {
        &self.factor
    }
}

/// Algorithm 1 with its factorizations prepared ahead of time.
///
/// The factorization of `A` depends only on the imaging setup and `λ1`; the
/// speckle root only on `Γe` and `λ2`. Both are shared through `Arc` so one
/// setup can serve many reconstructions.
#[derive(Debug, Clone)]
pub struct SecondOrderReconstructor {
    design: Arc<RidgeFactorization>,
    speckle: Arc<SpeckleRoot>,
    factorization_time: Duration,
    cached: bool,
}

impl SecondOrderReconstructor {
    pub fn new(a: MatRef<'_, f64>, gamma_e: &SymmetricMatrix, lambda1: f64, lambda2: f64) -> Result<Self> {
        if gamma_e.dim() != a.ncols() {
            return Err(Error::mismatch("gamma_e", a.ncols(), gamma_e.dim()));
        }
        let start = Instant::now();
        let design = Arc::new(RidgeFactorization::new(a, lambda1)?);
        let speckle = Arc::new(SpeckleRoot::new(gamma_e, lambda2)?);
        Ok(Self {
            design,
            speckle,
            factorization_time: start.elapsed(),
            cached: false,
        })
    }

    /// Assembles a reconstructor from factorizations computed elsewhere.
    pub fn from_parts(design: Arc<RidgeFactorization>, speckle: Arc<SpeckleRoot>) -> Result<Self> {
        if speckle.sqrt.dim() != design.cols() {
            return Err(Error::mismatch("speckle root", design.cols(), speckle.sqrt.dim()));
        }
        Ok(Self {
            design,
            speckle,
            factorization_time: Duration::ZERO,
            cached: true,
        })
    }

    pub fn design(&self) -> &Arc<RidgeFactorization> {
        &self.design
    }

    pub fn speckle(&self) -> &Arc<SpeckleRoot> {
        &self.speckle
    }

    pub fn reconstruct(
        &self,
        gamma_y_hat: &SymmetricMatrix,
        gamma_eps: &SymmetricMatrix,
        skip_projection: bool,
        trace_intermediates: bool,
    ) -> Result<SecondOrderOutput> {
        let rows = self.design.rows();
        for (name, m) in [("gamma_y_hat", gamma_y_hat), ("gamma_eps", gamma_eps)] {
            if m.dim() != rows {
                return Err(Error::mismatch(name, rows, m.dim()));
            }
        }
        let start = Instant::now();
        let mut trace = Alg1Trace::default();
        let keep = |m: &Mat<f64>| trace_intermediates.then(|| m.clone());

        let m1 = gamma_y_hat.as_mat() - gamma_eps.as_mat();
        trace.m1 = keep(&m1);
        let m2 = self.design.solve_left(m1.as_ref())?;
        drop(m1);
        trace.m2 = keep(&m2);
        let m3 = self.design.solve_right(m2.as_ref())?;
        trace.m3 = keep(&m3);

        let root = self.speckle.sqrt.as_mat();
        let m4 = root * &m3 * root;
        trace.m4 = keep(&m4);
        let sym = symmetrize(m4.as_ref())?;
        let m5 = match skip_projection.then(|| psd_sqrt(&sym)) {
            Some(Ok(m5)) => m5,
            Some(Err(Error::NotPsd { .. })) | None => {
                trace.projected = true;
                psd_sqrt(&project_psd(&sym)?)?
            }
            Some(Err(e)) => return Err(e),
        };
        trace.m5 = keep(m5.as_mat());

        let m6 = self.speckle.factor.solve_left(m5.as_ref())?;
        trace.m6 = keep(&m6);
        let r_hat = self.speckle.factor.solve_right(m6.as_ref())?;
        let rho = (0..r_hat.nrows()).map(|i| r_hat[(i, i)]).collect();
        trace.r_hat = keep(&r_hat);

        Ok(SecondOrderOutput {
            rho,
            trace,
            timings: ReconTimings {
                factorization: self.factorization_time,
                algorithm: start.elapsed(),
                factorization_cached: self.cached,
            },
        })
    }
}

/// One-shot second-order reconstruction.
pub fn reconstruct_second_order(
    gamma_y_hat: &SymmetricMatrix,
    gamma_e: &SymmetricMatrix,
    gamma_eps: &SymmetricMatrix,
    a: MatRef<'_, f64>,
    cfg: &ReconConfig,
) -> Result<(Vec<f64>, Alg1Trace)> {
    cfg.validate()?;
    let out = SecondOrderReconstructor::new(a, gamma_e, cfg.lambda1, cfg.lambda2)?.reconstruct(
        gamma_y_hat,
        gamma_eps,
        cfg.skip_projection,
        cfg.trace_intermediates,
    )?;
    Ok((out.rho, out.trace))
}

/// Tikhonov baseline `argmin ||A rho - y_bar||² + λ ||rho||²`.
pub fn reconstruct_first_order(y_bar: &[f64], a: MatRef<'_, f64>, lambda: f64) -> Result<Vec<f64>> {
    first_order_with(&RidgeFactorization::new(a, lambda)?, y_bar)
}

/// Baseline through an existing factorization of `A`.
pub fn first_order_with(factor: &RidgeFactorization, y_bar: &[f64]) -> Result<Vec<f64>> {
    if y_bar.len() != factor.rows() {
        return Err(Error::mismatch("first-order data", factor.rows(), y_bar.len()));
    }
    let b = Mat::from_fn(y_bar.len(), 1, |i, _| y_bar[i]);
    let x = factor.solve_left(b.as_ref())?;
    Ok(x.col(0).iter().copied().collect())
}

/// Regularization weight, absolute or relative to a matrix scale.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lambda {
    Absolute(f64),
    /// Multiple of the squared spectral norm of the design matrix.
    Relative(f64),
}

impl Lambda {
    pub fn resolve(&self, scale_squared: f64) -> f64 {
        match *self {
            Lambda::Absolute(v) => v,
            Lambda::Relative(alpha) => alpha * scale_squared,
        }
    }
}

/// `λ1` relative to `σ_max(A)²`.
pub fn resolve_lambda1(setting: Lambda, a: MatRef<'_, f64>) -> Result<f64> {
    Ok(match setting {
        Lambda::Absolute(v) => v,
        Lambda::Relative(_) => setting.resolve(spectral_norm_squared(a)?),
    })
}

/// `λ2` relative to `σ_max(√Γe)² = λ_max(Γe)`.
pub fn resolve_lambda2(setting: Lambda, gamma_e: &SymmetricMatrix) -> Result<f64> {
    Ok(match setting {
        Lambda::Absolute(v) => v,
        Lambda::Relative(_) => {
            let top = gamma_e.eigenvalues()?.last().copied().unwrap_or(0.0).max(0.0);
            setting.resolve(top)
        }
    })
}
