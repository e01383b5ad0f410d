use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{distance, ObjectGrid, Timebase, TransducerArray};

/// Medium constants of the thermoacoustic point-source model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MediumParams {
    /// Thermal volume-expansion coefficient (1/K).
    pub beta: f64,
    /// Specific heat capacity at constant pressure (J/(kg K)).
    pub heat_capacity: f64,
    /// Speed of sound (m/s).
    pub sound_speed: f64,
}

impl Default for MediumParams {
    /// Water at room temperature.
    fn default() -> Self {
        Self {
            beta: 2.07e-4,
            heat_capacity: 4184.0,
            sound_speed: 1500.0,
        }
    }
}

impl MediumParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("beta", self.beta),
            ("heat_capacity", self.heat_capacity),
            ("sound_speed", self.sound_speed),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("medium {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// `beta / (4 pi C_p)`.
    pub fn prefactor(&self) -> f64 {
        self.beta / (4.0 * PI * self.heat_capacity)
    }
}

/// One nonzero of the time-of-flight operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalTap {
    pub row: usize,
    pub col: usize,
    pub weight: f64,
}

/// Sparse map from point absorbers to un-filtered transducer traces.
///
/// Pixel `n` contributes a delta of amplitude `prefactor / r` at the arrival
/// time `r / c0` of each transducer `m`, deposited on the two bracketing
/// samples by linear interpolation. Rows are transducer-major: `m * T + i`.
#[derive(Debug, Clone)]
pub struct SparseSignalOperator {
    samples: usize,
    transducers: usize,
    cols: usize,
    taps: Vec<SignalTap>,
}

// Fractional offsets this close to a sample are snapped onto it.
const SNAP: f64 = 1e-9;

impl SparseSignalOperator {
    pub fn build(
        grid: &ObjectGrid,
        array: &TransducerArray,
        timebase: &Timebase,
        medium: &MediumParams,
    ) -> Result<Self> {
        medium.validate()?;
        let samples = timebase.samples();
        let min_distance = grid.min_spacing();
        let prefactor = medium.prefactor();
        let last = (samples - 1) as f64;
        let mut taps = Vec::with_capacity(2 * grid.len() * array.len());
        for (n, x) in grid.points().iter().enumerate() {
            for (m, p) in array.positions().iter().enumerate() {
                let r = distance(p, x);
                if r < min_distance {
                    return Err(Error::TransducerTooClose {
                        pixel: n,
                        transducer: m,
                        distance: r,
                        minimum: min_distance,
                    });
                }
                let t = r / medium.sound_speed;
                let out_of_window = || Error::ArrivalOutOfWindow {
                    pixel: n,
                    transducer: m,
                    time: t,
                    start: timebase.t0(),
                    end: timebase.end(),
                };
                let pos = (t - timebase.t0()) / timebase.dt();
                if pos < -SNAP || pos > last + SNAP {
                    return Err(out_of_window());
                }
                let mut base = pos.floor();
                let mut frac = pos - base;
                if frac < SNAP {
                    frac = 0.0;
                } else if frac > 1.0 - SNAP {
                    base += 1.0;
                    frac = 0.0;
                }
                let base = base.max(0.0) as usize;
                if base >= samples || (frac > 0.0 && base + 1 >= samples) {
                    return Err(out_of_window());
                }
                let amplitude = prefactor / r;
                let row = m * samples + base;
                taps.push(SignalTap {
                    row,
                    col: n,
                    weight: amplitude * (1.0 - frac),
                });
                if frac > 0.0 {
                    taps.push(SignalTap {
                        row: row + 1,
                        col: n,
                        weight: amplitude * frac,
                    });
                }
            }
        }
        Ok(Self {
            samples,
            transducers: array.len(),
            cols: grid.len(),
            taps,
        })
    }

    pub fn rows(&self) -> usize {
        self.samples * self.transducers
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn transducers(&self) -> usize {
        self.transducers
    }

    /// Nonzeros, grouped by column.
    pub fn taps(&self) -> &[SignalTap] {
        &self.taps
    }

    pub fn apply(&self, rho: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows()];
        for tap in &self.taps {
            out[tap.row] += tap.weight * rho[tap.col];
        }
        out
    }

    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for tap in &self.taps {
            out[tap.col] += tap.weight * y[tap.row];
        }
        out
    }
}
