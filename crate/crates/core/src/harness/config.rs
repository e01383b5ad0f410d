//! Experiment configuration. All physical quantities are SI.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{MediumParams, DEFAULT_DENSE_BUDGET};
use crate::geometry::{circular_array, square_array_from_count, ArrayKind, ObjectGrid, Timebase, TransducerArray};
use crate::recon::Lambda;
use crate::speckle::DEFAULT_NOISE_FRACTION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_x: usize,
    pub n_y: usize,
}

impl GridSpec {
    pub fn square(n: usize) -> Self {
        Self { n_x: n, n_y: n }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArraySpec {
    pub kind: ArrayKind,
    /// Total number of transducers; a perfect square for the square array.
    pub count: usize,
    /// Height of the square array above the object plane.
    pub standoff: f64,
    /// Side length of the square array.
    pub extent: f64,
    /// Radius of the circular array.
    pub radius: f64,
}

impl Default for ArraySpec {
    fn default() -> Self {
        Self {
            kind: ArrayKind::Square,
            count: 64,
            standoff: 30e-6,
            extent: 160e-6,
            radius: 160e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimebaseSpec {
    pub samples: usize,
    /// Time from the first to the last sample.
    pub duration: f64,
    pub t0: f64,
}

impl Default for TimebaseSpec {
    fn default() -> Self {
        Self {
            samples: 200,
            duration: 199e-9,
            t0: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EirSpec {
    pub f0: f64,
    pub fwhm: f64,
}

impl Default for EirSpec {
    fn default() -> Self {
        Self { f0: 50e6, fwhm: 25e6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomSpec {
    pub arms: usize,
    pub inner_radius: f64,
    pub outer_radius: f64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            arms: 8,
            inner_radius: 24e-6,
            outer_radius: 72e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data_grid: GridSpec,
    pub recon_grid: GridSpec,
    /// Side length of the square object region.
    pub extent: f64,
    pub array: ArraySpec,
    pub timebase: TimebaseSpec,
    pub eir: EirSpec,
    pub medium: MediumParams,
    pub phantom: PhantomSpec,
    /// Field correlation lengths, coarse to fine.
    pub speckle_sizes: Vec<f64>,
    pub speckle_mean: f64,
    /// Number of speckle patterns `K` per speckle size.
    pub recordings: usize,
    pub noise_fraction: f64,
    pub lambda_first: Lambda,
    pub lambda1: Lambda,
    pub lambda2: Lambda,
    pub skip_projection: bool,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    /// Bypasses the check that data and reconstruction grids differ.
    pub allow_inverse_crime: bool,
    /// Recordings per simulation work item.
    pub batch_size: usize,
    pub dense_budget_bytes: usize,
    /// Write measured stage times into the metrics table (makes it nondeterministic).
    pub timing_in_metrics: bool,
    /// Also store every simulated recording when simulating.
    pub save_recordings: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::full_scale()
    }
}

impl ExperimentConfig {
    /// Full-size setup: 101x101 data grid, 81x81 reconstruction grid, 64 transducers.
    pub fn full_scale() -> Self {
        Self {
            data_grid: GridSpec::square(101),
            recon_grid: GridSpec::square(81),
            extent: 160e-6,
            array: ArraySpec::default(),
            timebase: TimebaseSpec::default(),
            eir: EirSpec::default(),
            medium: MediumParams::default(),
            phantom: PhantomSpec::default(),
            speckle_sizes: vec![16e-6, 8e-6, 4e-6],
            speckle_mean: 1.0,
            recordings: 1000,
            noise_fraction: DEFAULT_NOISE_FRACTION,
            lambda_first: Lambda::Relative(1e-3),
            lambda1: Lambda::Relative(1e-3),
            lambda2: Lambda::Relative(1e-3),
            skip_projection: false,
            seed: 0,
            output_dir: None,
            allow_inverse_crime: false,
            batch_size: 50,
            dense_budget_bytes: DEFAULT_DENSE_BUDGET,
            timing_in_metrics: false,
            save_recordings: false,
        }
    }

    /// Reduced setup: 41x41 data grid, 33x33 reconstruction grid,
    /// 16 transducers, 120 samples over the same window, K = 500.
    pub fn desk_scale(kind: ArrayKind) -> Self {
        Self {
            data_grid: GridSpec::square(41),
            recon_grid: GridSpec::square(33),
            array: ArraySpec {
                kind,
                count: 16,
                ..ArraySpec::default()
            },
            timebase: TimebaseSpec {
                samples: 120,
                ..TimebaseSpec::default()
            },
            recordings: 500,
            // the finest speckle stays at or above the reconstruction pixel pitch
            speckle_sizes: vec![24e-6, 12e-6, 6e-6],
            lambda_first: Lambda::Relative(1e-4),
            // the circular array's operator is better conditioned on this grid
            lambda1: Lambda::Relative(match kind {
                ArrayKind::Square => 3e-4,
                ArrayKind::Circular => 1e-4,
            }),
            lambda2: Lambda::Relative(5e-4),
            ..Self::full_scale()
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_json_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("extent", self.extent),
            ("array.standoff", self.array.standoff),
            ("array.extent", self.array.extent),
            ("array.radius", self.array.radius),
            ("timebase.duration", self.timebase.duration),
            ("eir.f0", self.eir.f0),
            ("eir.fwhm", self.eir.fwhm),
            ("speckle_mean", self.speckle_mean),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.noise_fraction >= 0.0) || !self.noise_fraction.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "noise_fraction must be >= 0, got {}",
                self.noise_fraction
            )));
        }
        if self.speckle_sizes.is_empty() {
            return Err(Error::EmptyInput("speckle_sizes"));
        }
        if let Some(bad) = self.speckle_sizes.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidParameter(format!("speckle size must be positive, got {bad}")));
        }
        if self.recordings == 0 {
            return Err(Error::InvalidParameter("recordings must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch_size must be at least 1".into()));
        }
        for (name, l) in [("lambda_first", self.lambda_first), ("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            let v = match l {
                Lambda::Absolute(v) | Lambda::Relative(v) => v,
            };
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {v}")));
            }
        }
        self.medium.validate()?;
        if self.data_grid == self.recon_grid && !self.allow_inverse_crime {
            return Err(Error::InverseCrime);
        }
        Ok(())
    }

    pub fn data_grid(&self) -> Result<ObjectGrid> {
        ObjectGrid::new(self.data_grid.n_x, self.data_grid.n_y, self.extent, self.extent, 0.0)
    }

    pub fn recon_grid(&self) -> Result<ObjectGrid> {
        ObjectGrid::new(self.recon_grid.n_x, self.recon_grid.n_y, self.extent, self.extent, 0.0)
    }

    pub fn transducers(&self, grid: &ObjectGrid) -> Result<TransducerArray> {
        match self.array.kind {
            ArrayKind::Square => square_array_from_count(self.array.count, self.array.standoff, self.array.extent, grid),
            ArrayKind::Circular => circular_array(self.array.count, self.array.radius, grid),
        }
    }

    pub fn timebase(&self) -> Result<Timebase> {
        Timebase::from_duration(self.timebase.samples, self.timebase.duration, self.timebase.t0)
    }
}
