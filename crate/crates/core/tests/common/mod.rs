#![allow(dead_code)]

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use speckle_pat::solver::{symmetrize, SymmetricMatrix};
use speckle_pat::stats::model_covariance;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat<f64> {
    Mat::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn rel(a: &Mat<f64>, b: &Mat<f64>) -> f64 {
    (a - b).norm_l2() / b.norm_l2().max(f64::MIN_POSITIVE)
}

pub fn rel_vec(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let n: f64 = b.iter().map(|y| y * y).sum();
    (d / n).sqrt()
}

/// Solves `G X = B` by Gauss-Jordan elimination with partial pivoting.
pub fn gauss_jordan(g: &Mat<f64>, b: &Mat<f64>) -> Mat<f64> {
    let n = g.nrows();
    let k = b.ncols();
    let mut lhs: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| g[(i, j)]).collect()).collect();
    let mut rhs: Vec<Vec<f64>> = (0..n).map(|i| (0..k).map(|j| b[(i, j)]).collect()).collect();
    for col in 0..n {
        let p = (col..n)
            .max_by(|&x, &y| lhs[x][col].abs().total_cmp(&lhs[y][col].abs()))
            .unwrap();
        lhs.swap(col, p);
        rhs.swap(col, p);
        for row in 0..n {
            if row == col {
                continue;
            }
            let f = lhs[row][col] / lhs[col][col];
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                lhs[row][j] -= f * lhs[col][j];
            }
            for j in 0..k {
                rhs[row][j] -= f * rhs[col][j];
            }
        }
    }
    Mat::from_fn(n, k, |i, j| rhs[i][j] / lhs[i][i])
}

/// `(A^T A + lambda I)^-1 A^T B` with plain loops.
pub fn normal_equations(a: &Mat<f64>, b: &Mat<f64>, lambda: f64) -> Mat<f64> {
    let (r, c) = (a.nrows(), a.ncols());
    let g = Mat::from_fn(c, c, |i, j| {
        (0..r).map(|k| a[(k, i)] * a[(k, j)]).sum::<f64>() + if i == j { lambda } else { 0.0 }
    });
    let atb = Mat::from_fn(c, b.ncols(), |i, j| (0..r).map(|k| a[(k, i)] * b[(k, j)]).sum::<f64>());
    gauss_jordan(&g, &atb)
}

/// Synthetic second-order problem with an exactly known covariance.
pub struct Instance {
    pub a: Mat<f64>,
    pub rho: Vec<f64>,
    pub gamma_e: SymmetricMatrix,
    pub gamma_eps: SymmetricMatrix,
    pub gamma_y: SymmetricMatrix,
}

/// `N = 6` pixels, `TM = 24` samples, Gaussian `A`, `rho` in `[0.5, 1.5]`,
/// `Γe = I + 0.1 B B^T / n`.
pub fn exact_instance(seed: u64, noise_var: f64) -> Instance {
    let (n, tm) = (6, 24);
    let mut r = rng(seed);
    let a = gaussian(&mut r, tm, n);
    let rho: Vec<f64> = (0..n).map(|_| r.random_range(0.5..1.5)).collect();
    let b = gaussian(&mut r, n, n);
    let ge = &b * b.transpose() * (0.1 / n as f64) + Mat::<f64>::identity(n, n);
    let gamma_e = symmetrize(ge.as_ref()).unwrap();
    let gamma_eps = SymmetricMatrix::new(Mat::from_fn(tm, tm, |i, j| if i == j { noise_var } else { 0.0 })).unwrap();
    let gamma_y = model_covariance(a.as_ref(), &rho, &gamma_e, &gamma_eps).unwrap();
    Instance {
        a,
        rho,
        gamma_e,
        gamma_eps,
        gamma_y,
    }
}

/// Recordings `A (rho ∘ e) + eps` on a 3-pixel, 2-sample toy, with the
/// exact covariance they should have.
pub fn toy_recordings(k: usize, seed_offset: u64) -> (Vec<Vec<f64>>, SymmetricMatrix) {
    use speckle_pat::geometry::ObjectGrid;
    use speckle_pat::speckle::{NoiseModel, SpeckleModel};
    let grid = ObjectGrid::new(3, 1, 2e-6, 1e-6, 0.0).unwrap();
    let model = SpeckleModel::new(&grid, 1.0e-6, 1.0).unwrap();
    let a = [[1.0, 0.5, -0.25], [0.2, -1.0, 0.75]];
    let rho = [1.0, 2.0, 0.5];
    let noise = NoiseModel::new(0.1, 2).unwrap();
    let seeds: Vec<u64> = (0..k as u64).map(|s| s + seed_offset).collect();
    let recordings = seeds
        .chunks(4096)
        .flat_map(|chunk| {
            model
                .sample_batch(chunk)
                .into_iter()
                .zip(chunk)
                .map(|(e, &s)| {
                    let eps = noise.sample(s ^ 0x5eed);
                    (0..2).map(|t| (0..3).map(|n| a[t][n] * rho[n] * e[n]).sum::<f64>() + eps[t]).collect()
                })
                .collect::<Vec<Vec<f64>>>()
        })
        .collect();
    let am = Mat::from_fn(2, 3, |i, j| a[i][j]);
    let exact = model_covariance(am.as_ref(), &rho, model.intensity_cov(), &noise.covariance()).unwrap();
    (recordings, exact)
}

/// Sub-sample location of the largest entry, from a parabola through it and its neighbours.
pub fn refined_peak(v: &[f64]) -> f64 {
    let p = (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).expect("non-empty");
    if p == 0 || p + 1 == v.len() {
        return p as f64;
    }
    let (a, b, c) = (v[p - 1], v[p], v[p + 1]);
    let curvature = a - 2.0 * b + c;
    if curvature >= 0.0 {
        return p as f64;
    }
    p as f64 + 0.5 * (a - c) / curvature
}
