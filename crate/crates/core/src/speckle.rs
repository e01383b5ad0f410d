//! Fully developed speckle with Gaussian field correlation, and the additive
//! recording noise model.
//!
//! The underlying complex field is circular Gaussian with covariance
//! `G_ij = exp(-|x_i - x_j|^2 / (2 ell^2))`; the intensity is `mu |u|^2`.
//! By the Siegert relation the intensity covariance is then `mu^2 G_ij^2`,
//! which is what the reconstruction consumes as the known speckle statistics.

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::{distance, ObjectGrid};
use crate::solver::SymmetricMatrix;

/// Fraction of the peak clean amplitude used as noise standard deviation.
pub const DEFAULT_NOISE_FRACTION: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct SpeckleModel {
    grid: ObjectGrid,
    mu: f64,
    ell: f64,
    field_cov: SymmetricMatrix,
    field_factor: Mat<f64>,
    intensity_cov: SymmetricMatrix,
}

/// Gaussian field correlation matrix on a grid.
pub fn field_covariance(grid: &ObjectGrid, ell: f64) -> SymmetricMatrix {
    let pts = grid.points();
    let n = pts.len();
    let scale = 1.0 / (2.0 * ell * ell);
    let mut g = Mat::zeros(n, n);
    for j in 0..n {
        g[(j, j)] = 1.0;
        for i in j + 1..n {
            let d = distance(&pts[i], &pts[j]);
            let v = (-d * d * scale).exp();
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    SymmetricMatrix::new(g).expect("constructed symmetric")
}

/// `mu^2 G∘G`.
pub fn intensity_covariance(field_cov: &SymmetricMatrix, mu: f64) -> SymmetricMatrix {
    let g = field_cov.as_mat();
    let m2 = mu * mu;
    SymmetricMatrix::new(Mat::from_fn(g.nrows(), g.ncols(), |i, j| m2 * g[(i, j)] * g[(i, j)]))
        .expect("elementwise square of a symmetric matrix")
}

fn validate(ell: f64, mu: f64) -> Result<()> {
    if !(ell > 0.0) || !ell.is_finite() {
        return Err(Error::InvalidParameter(format!("speckle correlation length must be positive, got {ell}")));
    }
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::InvalidParameter(format!("speckle mean must be positive, got {mu}")));
    }
    Ok(())
}

/// Analytic intensity covariance without building the sampling factor.
pub fn analytic_intensity_covariance(grid: &ObjectGrid, ell: f64, mu: f64) -> Result<SymmetricMatrix> {
    validate(ell, mu)?;
    Ok(intensity_covariance(&field_covariance(grid, ell), mu))
}

impl SpeckleModel {
    pub fn new(grid: &ObjectGrid, ell: f64, mu: f64) -> Result<Self> {
        validate(ell, mu)?;
        let field_cov = field_covariance(grid, ell);
        let (values, vectors) = field_cov.eigen()?;
        // F = Q sqrt(max(Lambda, 0)), so F F^T = G up to the clipped roundoff.
        let roots: Vec<f64> = values.iter().map(|v| v.max(0.0).sqrt()).collect();
        let n = values.len();
        let field_factor = Mat::from_fn(n, n, |i, j| vectors[(i, j)] * roots[j]);
        let intensity_cov = intensity_covariance(&field_cov, mu);
        Ok(Self {
            grid: grid.clone(),
            mu,
            ell,
            field_cov,
            field_factor,
            intensity_cov,
        })
    }

    pub fn grid(&self) -> &ObjectGrid {
        &self.grid
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn ell(&self) -> f64 {
        self.ell
    }

    pub fn field_cov(&self) -> &SymmetricMatrix {
        &self.field_cov
    }

    pub fn field_factor(&self) -> &Mat<f64> {
        &self.field_factor
    }

    pub fn intensity_cov(&self) -> &SymmetricMatrix {
        &self.intensity_cov
    }

    pub fn sample(&self, seed: u64) -> Vec<f64> {
        self.sample_batch(&[seed]).pop().expect("one seed")
    }

    /// One speckle pattern per seed. For each seed the generator draws `N`
    /// real parts followed by `N` imaginary parts of the white field.
    pub fn sample_batch(&self, seeds: &[u64]) -> Vec<Vec<f64>> {
        let n = self.grid.len();
        let b = seeds.len();
        let mut re = Mat::zeros(n, b);
        let mut im = Mat::zeros(n, b);
        let half = std::f64::consts::FRAC_1_SQRT_2;
        for (k, &seed) in seeds.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in 0..n {
                re[(i, k)] = half * rng.sample::<f64, _>(StandardNormal);
            }
            for i in 0..n {
                im[(i, k)] = half * rng.sample::<f64, _>(StandardNormal);
            }
        }
        let u_re = &self.field_factor * &re;
        let u_im = &self.field_factor * &im;
        (0..b)
            .map(|k| {
                (0..n)
                    .map(|i| self.mu * (u_re[(i, k)] * u_re[(i, k)] + u_im[(i, k)] * u_im[(i, k)]))
                    .collect()
            })
            .collect()
    }
}

pub fn build_speckle_model(grid: &ObjectGrid, ell: f64, mu: f64) -> Result<SpeckleModel> {
    SpeckleModel::new(grid, ell, mu)
}

pub fn sample_speckle(model: &SpeckleModel, seed: u64) -> Vec<f64> {
    model.sample(seed)
}

/// i.i.d. zero-mean Gaussian noise of standard deviation `sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    sigma: f64,
    dim: usize,
}

impl NoiseModel {
    pub fn new(sigma: f64, dim: usize) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!("noise sigma must be >= 0, got {sigma}")));
        }
        Ok(Self { sigma, dim })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sample(&self, seed: u64) -> Vec<f64> {
        if self.sigma == 0.0 {
            return vec![0.0; self.dim];
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..self.dim)
            .map(|_| self.sigma * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    /// `sigma^2 I`.
    pub fn covariance(&self) -> SymmetricMatrix {
        let v = self.sigma * self.sigma;
        SymmetricMatrix::new(Mat::from_fn(self.dim, self.dim, |i, j| if i == j { v } else { 0.0 }))
            .expect("diagonal")
    }
}

pub fn sample_noise(model: &NoiseModel, seed: u64) -> Vec<f64> {
    model.sample(seed)
}

/// `fraction * max |y|` over all clean recordings.
pub fn calibrate_noise_sigma_with_fraction<R: AsRef<[f64]>>(recordings: &[R], fraction: f64) -> Result<f64> {
    if recordings.is_empty() {
        return Err(Error::EmptyInput("no recordings to calibrate noise from"));
    }
    let peak = recordings
        .iter()
        .flat_map(|r| r.as_ref().iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(fraction * peak)
}

/// Noise level at 1% of the peak clean amplitude.
pub fn calibrate_noise_sigma<R: AsRef<[f64]>>(recordings: &[R]) -> Result<f64> {
    calibrate_noise_sigma_with_fraction(recordings, DEFAULT_NOISE_FRACTION)
}

/// Mean lag-one autocorrelation coefficient of intensity fluctuations along
/// grid rows, pooled over samples. Larger speckle gives larger values.
pub fn lag_one_correlation(grid: &ObjectGrid, samples: &[Vec<f64>]) -> f64 {
    let n = samples.len() as f64;
    let npix = grid.len();
    let mean: Vec<f64> = (0..npix).map(|i| samples.iter().map(|s| s[i]).sum::<f64>() / n).collect();
    let (mut cross, mut var) = (0.0, 0.0);
    for s in samples {
        for row in 0..grid.n_y() {
            for col in 0..grid.n_x() {
                let i = grid.index(row, col);
                let a = s[i] - mean[i];
                var += a * a;
                if col + 1 < grid.n_x() {
                    let j = grid.index(row, col + 1);
                    cross += a * (s[j] - mean[j]);
                }
            }
        }
    }
    let pairs = (grid.n_x() - 1) as f64 / grid.n_x() as f64;
    cross / (var * pairs)
}
