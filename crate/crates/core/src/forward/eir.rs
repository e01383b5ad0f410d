use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::geometry::Timebase;

/// Acousto-electric impulse response: a Gaussian-envelope cosine,
/// `EIR(t) = cos(2 pi f0 t) exp(-t^2 / (2 sigma^2))` with
/// `sigma = sqrt(2 ln 2) / (pi fwhm)`, peak-centered with zero latency.
///
/// The model keeps the spectrum of the time derivative `EIR'` on a circular
/// FFT grid long enough that convolving a `T`-sample trace never wraps.
#[derive(Clone)]
pub struct EirModel {
    f0: f64,
    fwhm: f64,
    sigma_t: f64,
    timebase: Timebase,
    fft_len: usize,
    kernel_spectrum: Vec<Complex64>,
    // EIR' samples indexed by lag modulo fft_len
    derivative_taps: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for EirModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EirModel")
            .field("f0", &self.f0)
            .field("fwhm", &self.fwhm)
            .field("sigma_t", &self.sigma_t)
            .field("timebase", &self.timebase)
            .field("fft_len", &self.fft_len)
            .finish_non_exhaustive()
    }
}

/// Envelope width in seconds for a given frequency-domain FWHM.
pub fn envelope_sigma(fwhm: f64) -> f64 {
    (2.0 * std::f64::consts::LN_2).sqrt() / (PI * fwhm)
}

/// Analytic impulse response.
pub fn eir_value(f0: f64, sigma_t: f64, t: f64) -> f64 {
    (2.0 * PI * f0 * t).cos() * (-t * t / (2.0 * sigma_t * sigma_t)).exp()
}

/// Analytic time derivative of [`eir_value`].
pub fn eir_derivative_value(f0: f64, sigma_t: f64, t: f64) -> f64 {
    let w = 2.0 * PI * f0;
    let env = (-t * t / (2.0 * sigma_t * sigma_t)).exp();
    -(w * (w * t).sin() + t / (sigma_t * sigma_t) * (w * t).cos()) * env
}

impl EirModel {
    pub fn new(f0: f64, fwhm: f64, timebase: Timebase) -> Result<Self> {
        if !(f0 > 0.0) || !f0.is_finite() {
            return Err(Error::InvalidParameter(format!("center frequency must be positive, got {f0}")));
        }
        if !(fwhm > 0.0) || !fwhm.is_finite() {
            return Err(Error::InvalidParameter(format!("fwhm must be positive, got {fwhm}")));
        }
        let dt = timebase.dt();
        let nyquist = 0.5 / dt;
        if nyquist <= f0 + fwhm {
            return Err(Error::NyquistViolation {
                nyquist,
                required: f0 + fwhm,
            });
        }
        let sigma_t = envelope_sigma(fwhm);
        let samples = timebase.samples();
        let support = 2 * (10.0 * sigma_t / dt).ceil() as usize + 1;
        let fft_len = (2 * samples - 1).max(support).next_power_of_two();

        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(fft_len);
        let ifft = planner.plan_fft_inverse(fft_len);

        let mut spectrum: Vec<Complex64> = (0..fft_len)
            .map(|i| Complex64::new(eir_value(f0, sigma_t, lag_of(i, fft_len) as f64 * dt), 0.0))
            .collect();
        fft.process(&mut spectrum);
        for (k, s) in spectrum.iter_mut().enumerate() {
            *s *= Complex64::new(0.0, 2.0 * PI * frequency_of(k, fft_len, dt));
        }
        let mut taps = spectrum.clone();
        ifft.process(&mut taps);
        let scale = 1.0 / fft_len as f64;
        let derivative_taps = taps.iter().map(|c| c.re * scale).collect();

        Ok(Self {
            f0,
            fwhm,
            sigma_t,
            timebase,
            fft_len,
            kernel_spectrum: spectrum,
            derivative_taps,
            fft,
            ifft,
        })
    }

    pub fn f0(&self) -> f64 {
        self.f0
    }

    pub fn fwhm(&self) -> f64 {
        self.fwhm
    }

    pub fn sigma_t(&self) -> f64 {
        self.sigma_t
    }

    pub fn timebase(&self) -> &Timebase {
        &self.timebase
    }

    pub fn fft_len(&self) -> usize {
        self.fft_len
    }

    /// Spectrum of `EIR'` on the circular FFT grid.
    pub fn kernel_spectrum(&self) -> &[Complex64] {
        &self.kernel_spectrum
    }

    /// Frequency in Hz of FFT bin `k`.
    pub fn frequency(&self, k: usize) -> f64 {
        frequency_of(k, self.fft_len, self.timebase.dt())
    }

    /// `EIR'` sampled at integer lag `lag` (in samples).
    pub fn derivative_tap(&self, lag: isize) -> f64 {
        self.derivative_taps[lag.rem_euclid(self.fft_len as isize) as usize]
    }

    /// Spectrum of the (undifferentiated) EIR on the same grid.
    pub fn eir_spectrum(&self) -> Vec<Complex64> {
        let dt = self.timebase.dt();
        let mut buf: Vec<Complex64> = (0..self.fft_len)
            .map(|i| Complex64::new(eir_value(self.f0, self.sigma_t, lag_of(i, self.fft_len) as f64 * dt), 0.0))
            .collect();
        self.fft.process(&mut buf);
        buf
    }

    /// Linear convolution of a `T`-sample trace with `EIR'`, truncated to `T` samples.
    pub(crate) fn convolve(&self, input: &[f64], output: &mut [f64], buf: &mut Vec<Complex64>) {
        self.filter(input, output, buf, false);
    }

    /// Adjoint of [`Self::convolve`]: correlation with `EIR'`.
    pub(crate) fn correlate(&self, input: &[f64], output: &mut [f64], buf: &mut Vec<Complex64>) {
        self.filter(input, output, buf, true);
    }

    fn filter(&self, input: &[f64], output: &mut [f64], buf: &mut Vec<Complex64>, adjoint: bool) {
        let n = self.timebase.samples();
        debug_assert_eq!(input.len(), n);
        debug_assert_eq!(output.len(), n);
        buf.clear();
        buf.extend(input.iter().map(|&v| Complex64::new(v, 0.0)));
        buf.resize(self.fft_len, Complex64::new(0.0, 0.0));
        self.fft.process(buf);
        for (b, k) in buf.iter_mut().zip(&self.kernel_spectrum) {
            *b *= if adjoint { k.conj() } else { *k };
        }
        self.ifft.process(buf);
        let scale = 1.0 / self.fft_len as f64;
        for (o, b) in output.iter_mut().zip(buf.iter()) {
            *o = b.re * scale;
        }
    }
}

fn lag_of(index: usize, len: usize) -> isize {
    if index <= len / 2 {
        index as isize
    } else {
        index as isize - len as isize
    }
}

fn frequency_of(k: usize, len: usize, dt: f64) -> f64 {
    // Nyquist bin of an even-length grid carries no derivative, keeping the kernel real.
    if len % 2 == 0 && k == len / 2 {
        return 0.0;
    }
    lag_of(k, len) as f64 / (len as f64 * dt)
}
