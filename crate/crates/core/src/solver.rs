//! Regularized dense linear algebra: ridge factorizations reused across
//! left/right matrix solves, symmetrization, projection onto the PSD cone
//! and the PSD square root.

use faer::linalg::triangular_solve::solve_upper_triangular_in_place;
use faer::{Mat, MatRef, Par, Side};

use crate::error::{Error, Result};

/// Relative eigenvalue tolerance used by [`psd_sqrt`].
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Orthogonal factorization of the stacked design matrix `[A; sqrt(lambda) I]`.
///
/// Only the top `rows x cols` block of the thin `Q` is kept: the right-hand
/// side of a ridge problem is `[B; 0]`, so `Q^T [B; 0] = Q_top^T B`.
#[derive(Debug, Clone)]
pub struct RidgeFactorization {
    rows: usize,
    cols: usize,
    lambda: f64,
    q_top: Mat<f64>,
    r: Mat<f64>,
}

impl RidgeFactorization {
    pub fn new(a: MatRef<'_, f64>, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        let (rows, cols) = a.shape();
        if cols == 0 {
            return Err(Error::InvalidDimension("design matrix has no columns".into()));
        }
        for j in 0..cols {
            if a.col(j).iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter("design matrix has non-finite entries".into()));
            }
        }
        if lambda == 0.0 && rows < cols {
            return Err(Error::RankDeficient);
        }
        let ridge = lambda.sqrt();
        let stacked = Mat::from_fn(rows + cols, cols, |i, j| {
            if i < rows {
                a[(i, j)]
            } else if i - rows == j {
                ridge
            } else {
                0.0
            }
        });
        let qr = stacked.qr();
        let r = qr.thin_R().to_owned();
        let diag_max = (0..cols).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
        let threshold = diag_max * f64::EPSILON * (rows + cols) as f64;
        if diag_max == 0.0 || (0..cols).any(|i| r[(i, i)].abs() <= threshold) {
            return Err(Error::RankDeficient);
        }
        let q = qr.compute_thin_Q();
        let q_top = q.as_ref().subrows(0, rows).to_owned();
        Ok(Self {
            rows,
            cols,
            lambda,
            q_top,
            r,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `argmin_M ||A M - B||_F^2 + lambda ||M||_F^2`, column by column.
    pub fn solve_left(&self, b: MatRef<'_, f64>) -> Result<Mat<f64>> {
        if b.nrows() != self.rows {
            return Err(Error::mismatch("ridge_solve_left rows", self.rows, b.nrows()));
        }
        let mut x = self.q_top.transpose() * b;
        solve_upper_triangular_in_place(self.r.as_ref(), x.as_mut(), Par::Seq);
        Ok(x)
    }

    /// `argmin_M ||M A^T - B||_F^2 + lambda ||M||_F^2`, via the transposed left solve.
    pub fn solve_right(&self, b: MatRef<'_, f64>) -> Result<Mat<f64>> {
        if b.ncols() != self.rows {
            return Err(Error::mismatch("ridge_solve_right cols", self.rows, b.ncols()));
        }
        Ok(self.solve_left(b.transpose())?.transpose().to_owned())
    }
}

pub fn ridge_factorize(a: MatRef<'_, f64>, lambda: f64) -> Result<RidgeFactorization> {
    RidgeFactorization::new(a, lambda)
}

pub fn ridge_solve_left(f: &RidgeFactorization, b: MatRef<'_, f64>) -> Result<Mat<f64>> {
    f.solve_left(b)
}

pub fn ridge_solve_right(f: &RidgeFactorization, b: MatRef<'_, f64>) -> Result<Mat<f64>> {
    f.solve_right(b)
}

/// Dense square matrix that is exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix(Mat<f64>);

impl SymmetricMatrix {
    /// Wraps `m` if it is exactly symmetric.
    pub fn new(m: Mat<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::mismatch("symmetric matrix", format!("{0}x{0}", m.nrows()), format!("{}x{}", m.nrows(), m.ncols())));
        }
        let n = m.nrows();
        for j in 0..n {
            for i in j + 1..n {
                if m[(i, j)] != m[(j, i)] {
                    return Err(Error::NotSymmetric);
                }
            }
        }
        Ok(Self(m))
    }

    pub fn identity(n: usize) -> Self {
        Self(Mat::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_ref(&self) -> MatRef<'_, f64> {
        self.0.as_ref()
    }

    pub fn as_mat(&self) -> &Mat<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Mat<f64> {
        self.0
    }

    /// Ascending eigenvalues and matching orthonormal eigenvectors (as columns).
    pub fn eigen(&self) -> Result<(Vec<f64>, Mat<f64>)> {
        let evd = self
            .0
            .self_adjoint_eigen(Side::Lower)
            .map_err(|_| Error::Eigendecomposition)?;
        let values: Vec<f64> = evd.S().column_vector().iter().copied().collect();
        Ok((values, evd.U().to_owned()))
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        self.0
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|_| Error::Eigendecomposition)
    }

    /// `U diag(f(values)) U^T`, with `f >= 0`.
    fn from_spectrum(values: &[f64], vectors: &Mat<f64>, f: impl Fn(f64) -> f64) -> Self {
        let n = values.len();
        let roots: Vec<f64> = values.iter().map(|&v| f(v).sqrt()).collect();
        let scaled = Mat::from_fn(n, n, |i, j| vectors[(i, j)] * roots[j]);
        Self(exact_symmetric(&(&scaled * scaled.transpose())))
    }
}

fn exact_symmetric(m: &Mat<f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| {
        if i == j {
            m[(i, i)]
        } else {
            0.5 * (m[(i, j)] + m[(j, i)])
        }
    })
}

/// `(M + M^T) / 2`.
pub fn symmetrize(m: MatRef<'_, f64>) -> Result<SymmetricMatrix> {
    if m.nrows() != m.ncols() {
        return Err(Error::mismatch(
            "symmetrize",
            "square matrix",
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(SymmetricMatrix(exact_symmetric(&m.to_owned())))
}

/// Frobenius-nearest PSD matrix: `Q max(Lambda, 0) Q^T`. A matrix that is
/// already PSD is returned unchanged.
pub fn project_psd(m: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    let (values, vectors) = m.eigen()?;
    if values.first().is_none_or(|&v| v >= 0.0) {
        return Ok(m.clone());
    }
    Ok(SymmetricMatrix::from_spectrum(&values, &vectors, |v| v.max(0.0)))
}

/// Symmetric PSD square root. Eigenvalues in `[-tol, 0)` with
/// `tol = 1e-10 ||M||_2` are treated as zero; anything lower is an error.
pub fn psd_sqrt(m: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    let (values, vectors) = m.eigen()?;
    let norm = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let tolerance = PSD_TOLERANCE * norm;
    let min = values.first().copied().unwrap_or(0.0);
    if min < -tolerance {
        return Err(Error::NotPsd {
            min_eigenvalue: min,
            tolerance,
        });
    }
    Ok(SymmetricMatrix::from_spectrum(&values, &vectors, |v| v.max(0.0).sqrt()))
}

/// Largest eigenvalue of `A^T A` (squared spectral norm), from the smaller Gram matrix.
pub fn spectral_norm_squared(a: MatRef<'_, f64>) -> Result<f64> {
    let gram = if a.nrows() >= a.ncols() {
        a.transpose() * a
    } else {
        a * a.transpose()
    };
    let values = SymmetricMatrix(exact_symmetric(&gram)).eigenvalues()?;
    Ok(values.last().copied().unwrap_or(0.0).max(0.0))
}

pub fn frobenius(m: MatRef<'_, f64>) -> f64 {
    m.norm_l2()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat<f64> {
        Mat::from_fn(r, c, |_, _| rng.sample(StandardNormal))
    }

    /// `(A^T A + lambda I)^-1 A^T B` by Gauss-Jordan elimination with partial pivoting.
    fn normal_equations(a: &Mat<f64>, b: &Mat<f64>, lambda: f64) -> Mat<f64> {
        let n = a.ncols();
        let mut g: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| (0..a.nrows()).map(|k| a[(k, i)] * a[(k, j)]).sum::<f64>() + if i == j { lambda } else { 0.0 }).collect())
            .collect();
        let mut rhs: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..b.ncols()).map(|j| (0..a.nrows()).map(|k| a[(k, i)] * b[(k, j)]).sum()).collect())
            .collect();
        for col in 0..n {
            let p = (col..n).max_by(|&x, &y| g[x][col].abs().total_cmp(&g[y][col].abs())).unwrap();
            g.swap(col, p);
            rhs.swap(col, p);
            let d = g[col][col];
            for row in 0..n {
                if row != col {
                    let f = g[row][col] / d;
                    for k in 0..n {
                        g[row][k] -= f * g[col][k];
                    }
                    for k in 0..b.ncols() {
                        rhs[row][k] -= f * rhs[col][k];
                    }
                }
            }
        }
        Mat::from_fn(n, b.ncols(), |i, j| rhs[i][j] / g[i][i])
    }

    fn rel(a: &Mat<f64>, b: &Mat<f64>) -> f64 {
        (a - b).norm_l2() / b.norm_l2().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn identity_design() {
        let eye = Mat::<f64>::identity(2, 2);
        let b = Mat::from_fn(2, 3, |i, j| (i * 3 + j) as f64 - 2.0);
        let f = ridge_factorize(eye.as_ref(), 0.0).unwrap();
        assert!(rel(&f.solve_left(b.as_ref()).unwrap(), &b) < 1e-15);
        let f = ridge_factorize(eye.as_ref(), 1.0).unwrap();
        let half = Mat::from_fn(2, 3, |i, j| b[(i, j)] / 2.0);
        assert!(rel(&f.solve_left(b.as_ref()).unwrap(), &half) < 1e-15);
    }

    #[test]
    fn solve_left_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_mat(&mut rng, 20, 5);
        let b = random_mat(&mut rng, 20, 3);
        let f = ridge_factorize(a.as_ref(), 0.1).unwrap();
        assert!(rel(&f.solve_left(b.as_ref()).unwrap(), &normal_equations(&a, &b, 0.1)) < 1e-10);
    }

    #[test]
    fn zero_rhs_and_consistent_rhs() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_mat(&mut rng, 12, 4);
        let f = ridge_factorize(a.as_ref(), 0.0).unwrap();
        let zero = f.solve_left(Mat::<f64>::zeros(12, 2).as_ref()).unwrap();
        assert!(zero.norm_l2() == 0.0);
        let x = random_mat(&mut rng, 4, 3);
        let b = &a * &x;
        assert!(rel(&f.solve_left(b.as_ref()).unwrap(), &x) < 1e-10);
        let bt = &x.transpose().to_owned() * a.transpose();
        assert!(rel(&f.solve_right(bt.as_ref()).unwrap(), &x.transpose().to_owned()) < 1e-10);
    }

    #[test]
    fn stacked_residual_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (r, c, lambda) = (15, 6, 0.3);
        let a = random_mat(&mut rng, r, c);
        let b = random_mat(&mut rng, r, 2);
        let m = ridge_factorize(a.as_ref(), lambda).unwrap().solve_left(b.as_ref()).unwrap();
        let stacked = Mat::from_fn(r + c, c, |i, j| if i < r { a[(i, j)] } else if i - r == j { lambda.sqrt() } else { 0.0 });
        let target = Mat::from_fn(r + c, 2, |i, j| if i < r { b[(i, j)] } else { 0.0 });
        let residual = &stacked * &m - &target;
        let grad = stacked.transpose() * &residual;
        assert!(grad.norm_max() <= 1e-8);
    }

    #[test]
    fn solve_right_is_transposed_left_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let a = random_mat(&mut rng, 9, 4);
        let b = random_mat(&mut rng, 3, 9);
        let f = ridge_factorize(a.as_ref(), 0.2).unwrap();
        let right = f.solve_right(b.as_ref()).unwrap();
        let left = f.solve_left(b.transpose()).unwrap();
        assert_eq!(right, left.transpose().to_owned());
        // B A (A^T A + lambda I)^-1
        let oracle = normal_equations(&a, &b.transpose().to_owned(), 0.2).transpose().to_owned();
        assert!(rel(&right, &oracle) < 1e-10);
    }

    #[test]
    fn rank_deficiency_only_without_ridge() {
        let a = Mat::from_fn(6, 3, |i, j| if j == 2 { (i as f64) * 2.0 } else if j == 1 { i as f64 } else { 1.0 });
        assert!(matches!(ridge_factorize(a.as_ref(), 0.0), Err(Error::RankDeficient)));
        assert!(ridge_factorize(a.as_ref(), 1e-3).is_ok());
        let wide = Mat::<f64>::zeros(2, 3);
        assert!(matches!(ridge_factorize(wide.as_ref(), 0.0), Err(Error::RankDeficient)));
    }

    #[test]
    fn dimension_checks() {
        let a = Mat::<f64>::identity(3, 3);
        let f = ridge_factorize(a.as_ref(), 1.0).unwrap();
        assert!(matches!(f.solve_left(Mat::<f64>::zeros(4, 1).as_ref()), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(f.solve_right(Mat::<f64>::zeros(1, 4).as_ref()), Err(Error::DimensionMismatch { .. })));
        assert!(ridge_factorize(a.as_ref(), -1.0).is_err());
    }

    #[test]
    fn symmetrize_cases() {
        let m = Mat::from_fn(2, 2, |i, j| if (i, j) == (0, 1) { 1.0 } else { 0.0 });
        let s = symmetrize(m.as_ref()).unwrap();
        assert_eq!(s.as_mat(), &Mat::from_fn(2, 2, |i, j| if i != j { 0.5 } else { 0.0 }));
        let again = symmetrize(s.as_ref()).unwrap();
        assert_eq!(again, s);
        assert!(symmetrize(Mat::<f64>::zeros(2, 3).as_ref()).is_err());
        assert!(matches!(SymmetricMatrix::new(m), Err(Error::NotSymmetric)));
    }

    #[test]
    fn projection_clips_negative_eigenvalues() {
        let d = SymmetricMatrix::new(Mat::from_fn(2, 2, |i, j| match (i, j) { (0, 0) => 3.0, (1, 1) => -2.0, _ => 0.0 })).unwrap();
        let p = project_psd(&d).unwrap();
        let expected = Mat::from_fn(2, 2, |i, j| if (i, j) == (0, 0) { 3.0 } else { 0.0 });
        assert!((p.as_mat() - &expected).norm_max() < 1e-14);
    }

    #[test]
    fn projection_of_psd_is_identity_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b = random_mat(&mut rng, 5, 5);
        let m = symmetrize((&b * b.transpose()).as_ref()).unwrap();
        let p = project_psd(&m).unwrap();
        assert!((p.as_mat() - m.as_mat()).norm_l2() <= 1e-12 * m.as_mat().norm_l2());
    }

    #[test]
    fn sqrt_cases() {
        let eye = SymmetricMatrix::identity(3);
        assert!((psd_sqrt(&eye).unwrap().as_mat() - eye.as_mat()).norm_max() < 1e-15);
        let d = SymmetricMatrix::new(Mat::from_fn(2, 2, |i, j| match (i, j) { (0, 0) => 4.0, (1, 1) => 9.0, _ => 0.0 })).unwrap();
        let s = psd_sqrt(&d).unwrap();
        assert!((s.as_mat()[(0, 0)] - 2.0).abs() < 1e-14 && (s.as_mat()[(1, 1)] - 3.0).abs() < 1e-14);
        let neg = SymmetricMatrix::new(Mat::from_fn(2, 2, |i, j| match (i, j) { (0, 0) => 1.0, (1, 1) => -0.5, _ => 0.0 })).unwrap();
        assert!(matches!(psd_sqrt(&neg), Err(Error::NotPsd { .. })));
        // tiny negative within tolerance is clipped
        let tiny = SymmetricMatrix::new(Mat::from_fn(2, 2, |i, j| match (i, j) { (0, 0) => 1.0, (1, 1) => -1e-12, _ => 0.0 })).unwrap();
        assert_eq!(psd_sqrt(&tiny).unwrap().as_mat()[(1, 1)], 0.0);
    }

    #[test]
    fn sqrt_commutes_and_squares_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let b = random_mat(&mut rng, 6, 6);
        let m = symmetrize((&b * b.transpose()).as_ref()).unwrap();
        let s = psd_sqrt(&m).unwrap();
        let (mm, ss) = (m.as_mat(), s.as_mat());
        assert!((ss * ss - mm).norm_l2() <= 1e-8 * mm.norm_l2());
        assert!((ss * mm - mm * ss).norm_l2() <= 1e-8 * mm.norm_l2() * ss.norm_l2());
        assert!(s.eigenvalues().unwrap()[0] >= -1e-12);
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        let a = Mat::from_fn(4, 3, |i, j| if i == j { (i + 1) as f64 } else { 0.0 });
        assert!((spectral_norm_squared(a.as_ref()).unwrap() - 9.0).abs() < 1e-12);
        assert!((spectral_norm_squared(a.transpose()).unwrap() - 9.0).abs() < 1e-12);
    }
}
