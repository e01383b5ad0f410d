//! End-to-end experiment: simulate on the data grid, reconstruct on the
//! reconstruction grid, score against the phantom.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, Par};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::io::{export_image, read_matrix, write_matrix, MatrixData};
use super::metrics::{compute_metrics, MetricsRecord};
use crate::error::{Error, Result, StageContext};
use crate::forward::{ForwardOperator, EirModel, SparseSignalOperator};
use crate::geometry::{star_phantom, ObjectField, ObjectGrid};
use crate::recon::{first_order_with, resolve_lambda1, resolve_lambda2, SecondOrderReconstructor, SpeckleRoot};
use crate::solver::{RidgeFactorization, SymmetricMatrix};
use crate::speckle::{analytic_intensity_covariance, calibrate_noise_sigma_with_fraction, NoiseModel, SpeckleModel};
use crate::stats::{MomentAccumulator, Moments};

/// Per-recording seeds for speckle (stream 0) and noise (stream 1),
/// drawn from a generator keyed by the base seed.
pub fn recording_seeds(base_seed: u64, count: usize) -> (Vec<u64>, Vec<u64>) {
    let draw = |stream| {
        let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
        rng.set_stream(stream);
        (0..count).map(|_| rng.next_u64()).collect::<Vec<u64>>()
    };
    (draw(0), draw(1))
}

pub const METRICS_HEADER: [&str; 5] = ["method", "speckle_size_m", "correlation", "rel_l2", "wall_seconds"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    First,
    Second,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::First => "first_order",
            Method::Second => "second_order",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub operator_build: f64,
    pub data_simulation: f64,
    pub moment_accumulation: f64,
    pub factorization: f64,
    pub algorithm1: f64,
    pub first_order: f64,
    /// The reconstruction reused factorizations computed earlier.
    pub factorization_cached: bool,
}

/// Moments of the recordings for one speckle size.
#[derive(Debug, Clone)]
pub struct SizeData {
    pub speckle_size: f64,
    pub noise_sigma: f64,
    pub moments: Moments,
    /// Noisy recordings, kept only when requested.
    pub recordings: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub truth: ObjectField,
    pub sizes: Vec<SizeData>,
    pub timings: StageTimings,
}

#[derive(Debug, Clone)]
pub struct ResultEntry {
    pub method: Method,
    pub speckle_size: f64,
    pub field: ObjectField,
    pub metrics: MetricsRecord,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub truth: ObjectField,
    pub entries: Vec<ResultEntry>,
    pub timings: StageTimings,
}

impl ExperimentResult {
    pub fn entry(&self, method: Method, speckle_size: f64) -> Option<&ResultEntry> {
        self.entries
            .iter()
            .find(|e| e.method == method && e.speckle_size == speckle_size)
    }
}

fn pat_operator(cfg: &ExperimentConfig, grid: &ObjectGrid) -> Result<Mat<f64>> {
    let tb = cfg.timebase()?;
    let array = cfg.transducers(grid)?;
    let signal = SparseSignalOperator::build(grid, &array, &tb, &cfg.medium)?;
    let eir = EirModel::new(cfg.eir.f0, cfg.eir.fwhm, tb)?;
    ForwardOperator::pat(signal, eir)?.materialize_dense_with_budget(cfg.dense_budget_bytes)
}

fn seconds(start: Instant) -> f64 {
    start.elapsed().as_secs_f64()
}

/// Simulates `K` noisy recordings per speckle size on the data grid and
/// reduces them to moments.
pub fn simulate(cfg: &ExperimentConfig) -> Result<Simulation> {
    cfg.validate().stage("configuration")?;
    let mut timings = StageTimings::default();

    let start = Instant::now();
    let grid = cfg.data_grid().stage("operator build")?;
    let truth = star_phantom(&grid, cfg.phantom.arms, cfg.phantom.inner_radius, cfg.phantom.outer_radius)
        .stage("operator build")?;
    let a = pat_operator(cfg, &grid).stage("operator build")?;
    timings.operator_build = seconds(start);

    let k = cfg.recordings;
    let rows = a.nrows();
    let mut sizes = Vec::with_capacity(cfg.speckle_sizes.len());
    for &ell in &cfg.speckle_sizes {
        let start = Instant::now();
        let model = SpeckleModel::new(&grid, ell, cfg.speckle_mean).stage("data simulation")?;
        let (seeds, noise_seeds) = recording_seeds(cfg.seed, k);
        // pass 1: clean recordings, needed in full to calibrate the noise level
        let mut recordings: Vec<Vec<f64>> = seeds
            .par_chunks(cfg.batch_size)
            .map(|chunk| simulate_clean(&model, truth.rho(), &a, chunk))
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect();
        let sigma = calibrate_noise_sigma_with_fraction(&recordings, cfg.noise_fraction).stage("data simulation")?;
        let noise = NoiseModel::new(sigma, rows).stage("data simulation")?;
        // pass 2: independent noise per recording
        recordings.par_iter_mut().zip(noise_seeds.par_iter()).for_each(|(y, &seed)| {
            let eps = noise.sample(seed);
            for (v, e) in y.iter_mut().zip(eps) {
                *v += e;
            }
        });
        timings.data_simulation += seconds(start);

        let start = Instant::now();
        let partials: Vec<MomentAccumulator> = recordings
            .par_chunks(cfg.batch_size)
            .map(|chunk| {
                let mut acc = MomentAccumulator::new(rows);
                acc.accumulate_batch(chunk).map(|_| acc)
            })
            .collect::<Result<_>>()
            .stage("moment accumulation")?;
        // ordered reduction keeps the result independent of scheduling
        let total = partials
            .iter()
            .try_fold(MomentAccumulator::new(rows), |acc, p| acc.merge(p))
            .stage("moment accumulation")?;
        let moments = total.finalize().stage("moment accumulation")?;
        timings.moment_accumulation += seconds(start);

        sizes.push(SizeData {
            speckle_size: ell,
            noise_sigma: sigma,
            moments,
            recordings: cfg.save_recordings.then_some(recordings),
        });
    }
    Ok(Simulation { truth, sizes, timings })
}

fn simulate_clean(model: &SpeckleModel, rho: &[f64], a: &Mat<f64>, seeds: &[u64]) -> Vec<Vec<f64>> {
    let speckles = model.sample_batch(seeds);
    let x = Mat::from_fn(rho.len(), seeds.len(), |i, j| rho[i] * speckles[j][i]);
    let mut y = Mat::zeros(a.nrows(), seeds.len());
    matmul(y.as_mut(), Accum::Replace, a.as_ref(), x.as_ref(), 1.0, Par::Seq);
    (0..seeds.len()).map(|j| y.col(j).iter().copied().collect()).collect()
}

/// Reconstruction-grid operator and every factorization the reconstructions need.
#[derive(Debug, Clone)]
pub struct ReconContext {
    grid: ObjectGrid,
    a: Arc<Mat<f64>>,
    first: Arc<RidgeFactorization>,
    design: Arc<RidgeFactorization>,
    speckle: Vec<(f64, Arc<SpeckleRoot>)>,
    operator_build: f64,
    factorization: f64,
    cached: bool,
}

impl ReconContext {
    pub fn prepare(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate().stage("configuration")?;
        let start = Instant::now();
        let grid = cfg.recon_grid().stage("operator build")?;
        let a = pat_operator(cfg, &grid).stage("operator build")?;
        let operator_build = seconds(start);

        let start = Instant::now();
        let lambda1 = resolve_lambda1(cfg.lambda1, a.as_ref()).stage("factorization")?;
        let lambda_first = resolve_lambda1(cfg.lambda_first, a.as_ref()).stage("factorization")?;
        let design = Arc::new(RidgeFactorization::new(a.as_ref(), lambda1).stage("factorization")?);
        let first = if lambda_first == lambda1 {
            Arc::clone(&design)
        } else {
            Arc::new(RidgeFactorization::new(a.as_ref(), lambda_first).stage("factorization")?)
        };
        let speckle = cfg
            .speckle_sizes
            .iter()
            .map(|&ell| {
                // rebuilt analytically on this grid rather than resampled
                let gamma_e = analytic_intensity_covariance(&grid, ell, cfg.speckle_mean)?;
                let lambda2 = resolve_lambda2(cfg.lambda2, &gamma_e)?;
                Ok((ell, Arc::new(SpeckleRoot::new(&gamma_e, lambda2)?)))
            })
            .collect::<Result<Vec<_>>>()
            .stage("factorization")?;
        Ok(Self {
            grid,
            a: Arc::new(a),
            first,
            design,
            speckle,
            operator_build,
            factorization: seconds(start),
            cached: false,
        })
    }

    /// Shares every factorization; reconstructions through the copy report
    /// no operator or factorization time.
    pub fn reuse(&self) -> Self {
        Self {
            operator_build: 0.0,
            factorization: 0.0,
            cached: true,
            ..self.clone()
        }
    }

    pub fn grid(&self) -> &ObjectGrid {
        &self.grid
    }

    pub fn operator(&self) -> &Mat<f64> {
        &self.a
    }

    pub fn is_cached(&self) -> bool {
        self.cached
    }

    fn speckle_root(&self, ell: f64) -> Result<&Arc<SpeckleRoot>> {
        self.speckle
            .iter()
            .find(|(l, _)| *l == ell)
            .map(|(_, root)| root)
            .ok_or_else(|| Error::InvalidParameter(format!("no speckle factorization for size {ell}")))
    }
}

/// Runs the requested methods on every speckle size.
pub fn reconstruct(
    cfg: &ExperimentConfig,
    truth: &ObjectField,
    data: &[SizeData],
    ctx: &ReconContext,
    methods: &[Method],
) -> Result<(Vec<ResultEntry>, StageTimings)> {
    let mut timings = StageTimings {
        operator_build: ctx.operator_build,
        factorization: ctx.factorization,
        factorization_cached: ctx.cached,
        ..StageTimings::default()
    };
    let mut entries = Vec::new();
    for size in data {
        for &method in methods {
            let start = Instant::now();
            let rho = match method {
                Method::First => first_order_with(&ctx.first, &size.moments.mean).stage("first-order")?,
                Method::Second => {
                    let root = ctx.speckle_root(size.speckle_size).stage("algorithm 1")?;
                    let rec = SecondOrderReconstructor::from_parts(Arc::clone(&ctx.design), Arc::clone(root))
                        .stage("algorithm 1")?;
                    let gamma_eps = NoiseModel::new(size.noise_sigma, ctx.a.nrows())
                        .stage("algorithm 1")?
                        .covariance();
                    rec.reconstruct(&size.moments.covariance, &gamma_eps, cfg.skip_projection, false)
                        .stage("algorithm 1")?
                        .rho
                }
            };
            let wall_seconds = seconds(start);
            match method {
                Method::First => timings.first_order += wall_seconds,
                Method::Second => timings.algorithm1 += wall_seconds,
            }
            let field = ObjectField::new(ctx.grid.clone(), rho).stage("metrics")?;
            let metrics = compute_metrics(&field, truth).stage("metrics")?;
            entries.push(ResultEntry {
                method,
                speckle_size: size.speckle_size,
                field,
                metrics,
                wall_seconds,
            });
        }
    }
    Ok((entries, timings))
}

/// Simulation, both reconstructions, metrics, and artifacts when
/// `output_dir` is set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let sim = simulate(cfg)?;
    let ctx = ReconContext::prepare(cfg)?;
    let result = finish(cfg, sim, &ctx)?;
    if let Some(dir) = &cfg.output_dir {
        write_artifacts(cfg, &result, dir)?;
    }
    Ok(result)
}

/// Reconstructs a finished simulation through `ctx` and merges the timings.
pub fn finish(cfg: &ExperimentConfig, sim: Simulation, ctx: &ReconContext) -> Result<ExperimentResult> {
    let (entries, recon) = reconstruct(cfg, &sim.truth, &sim.sizes, ctx, &[Method::First, Method::Second])?;
    let timings = StageTimings {
        operator_build: sim.timings.operator_build + recon.operator_build,
        data_simulation: sim.timings.data_simulation,
        moment_accumulation: sim.timings.moment_accumulation,
        ..recon
    };
    Ok(ExperimentResult {
        truth: sim.truth,
        entries,
        timings,
    })
}

pub fn field_stem(method: Method, index: usize) -> String {
    format!("{}_size{index}", method.label())
}

/// Writes the metrics table. Stage times are written as 0 unless
/// `timing_in_metrics` is set, so the table is reproducible.
pub fn write_metrics_csv(cfg: &ExperimentConfig, entries: &[ResultEntry], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(METRICS_HEADER)?;
    for e in entries {
        let wall = if cfg.timing_in_metrics { e.wall_seconds } else { 0.0 };
        w.write_record([
            e.method.label().to_string(),
            e.speckle_size.to_string(),
            e.metrics.correlation.to_string(),
            e.metrics.rel_l2.to_string(),
            wall.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timings(timings: &StageTimings, path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(timings)?)?;
    Ok(())
}

/// Config, ground truth, reconstructed fields (raw and PGM), metrics and timings.
pub fn write_artifacts(cfg: &ExperimentConfig, result: &ExperimentResult, dir: &Path) -> Result<()> {
    write_entries(cfg, &result.truth, &result.entries, &result.timings, dir).stage("artifacts")
}

fn write_entries(
    cfg: &ExperimentConfig,
    truth: &ObjectField,
    entries: &[ResultEntry],
    timings: &StageTimings,
    dir: &Path,
) -> Result<()> {
    let fields = dir.join("fields");
    std::fs::create_dir_all(&fields)?;
    cfg.to_json_file(&dir.join("config.json"))?;
    export_image(truth, &dir.join("truth.pgm"), false)?;
    for e in entries {
        let index = cfg
            .speckle_sizes
            .iter()
            .position(|&l| l == e.speckle_size)
            .unwrap_or_default();
        export_image(&e.field, &fields.join(format!("{}.pgm", field_stem(e.method, index))), false)?;
    }
    write_metrics_csv(cfg, entries, &dir.join("metrics.csv"))?;
    write_timings(timings, &dir.join("timings.json"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MomentsEntry {
    speckle_size: f64,
    count: usize,
    noise_sigma: f64,
    mean: PathBuf,
    covariance: PathBuf,
    recordings: Option<PathBuf>,
}

pub const MOMENTS_MANIFEST: &str = "moments.json";

/// Stores moments as binary matrices plus a JSON manifest.
pub fn write_simulation(cfg: &ExperimentConfig, sim: &Simulation, dir: &Path) -> Result<()> {
    let inner = || -> Result<()> {
        std::fs::create_dir_all(dir)?;
        cfg.to_json_file(&dir.join("config.json"))?;
        export_image(&sim.truth, &dir.join("truth.pgm"), false)?;
        let mut manifest = Vec::new();
        for (i, s) in sim.sizes.iter().enumerate() {
            let mean = PathBuf::from(format!("size{i}_mean.bin"));
            let covariance = PathBuf::from(format!("size{i}_covariance.bin"));
            write_matrix(&dir.join(&mean), &MatrixData::column(&s.moments.mean))?;
            write_matrix(&dir.join(&covariance), &MatrixData::from_mat(s.moments.covariance.as_ref()))?;
            let recordings = match &s.recordings {
                Some(rec) => {
                    let path = PathBuf::from(format!("size{i}_recordings.bin"));
                    let data = MatrixData {
                        rows: rec.len(),
                        cols: rec.first().map_or(0, Vec::len),
                        data: rec.concat(),
                    };
                    write_matrix(&dir.join(&path), &data)?;
                    Some(path)
                }
                None => None,
            };
            manifest.push(MomentsEntry {
                speckle_size: s.speckle_size,
                count: s.moments.count,
                noise_sigma: s.noise_sigma,
                mean,
                covariance,
                recordings,
            });
        }
        std::fs::write(dir.join(MOMENTS_MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
        write_timings(&sim.timings, &dir.join("timings.json"))
    };
    inner().stage("artifacts")
}

/// Reads moments written by [`write_simulation`]. Stored recordings are not loaded.
pub fn read_simulation(dir: &Path) -> Result<Vec<SizeData>> {
    let inner = || -> Result<Vec<SizeData>> {
        let manifest: Vec<MomentsEntry> = serde_json::from_str(&std::fs::read_to_string(dir.join(MOMENTS_MANIFEST))?)?;
        manifest
            .into_iter()
            .map(|m| {
                let mean = read_matrix(&dir.join(&m.mean))?;
                let cov = read_matrix(&dir.join(&m.covariance))?;
                if mean.cols != 1 || cov.rows != mean.rows || cov.cols != mean.rows {
                    return Err(Error::Format {
                        path: dir.display().to_string(),
                        reason: "moment dimensions disagree".into(),
                    });
                }
                Ok(SizeData {
                    speckle_size: m.speckle_size,
                    noise_sigma: m.noise_sigma,
                    moments: Moments {
                        count: m.count,
                        mean: mean.data,
                        covariance: SymmetricMatrix::new(cov.to_mat())?,
                    },
                    recordings: None,
                })
            })
            .collect()
    };
    inner().stage("loading moments")
}

/// Reconstructs stored moments with one method and writes fields, metrics and timings.
pub fn reconstruct_from_dir(cfg: &ExperimentConfig, moments_dir: &Path, method: Method, out: &Path) -> Result<Vec<ResultEntry>> {
    let data = read_simulation(moments_dir)?;
    let grid = cfg.data_grid().stage("operator build")?;
    let truth = star_phantom(&grid, cfg.phantom.arms, cfg.phantom.inner_radius, cfg.phantom.outer_radius)
        .stage("operator build")?;
    let mut cfg = cfg.clone();
    cfg.speckle_sizes = data.iter().map(|d| d.speckle_size).collect();
    let ctx = ReconContext::prepare(&cfg)?;
    let (entries, timings) = reconstruct(&cfg, &truth, &data, &ctx, &[method])?;
    write_entries(&cfg, &truth, &entries, &timings, out).stage("artifacts")?;
    Ok(entries)
}
