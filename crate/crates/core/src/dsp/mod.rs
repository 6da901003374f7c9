//! Time–frequency analysis and synthesis, masking, convolution, resampling
//! and SNR mixing.
//!
//! Everything here is a pure function of its inputs. Samples are carried as
//! `f64` internally; WAV I/O converts at the boundary.

mod convolve;
mod mix;
mod resample;
mod stft;
pub mod wav;

pub use convolve::{convolve, convolve_full};
pub use mix::{mix_at_snr, segmental_snr, signal_power, snr_db, Mixture};
pub use resample::resample;
pub use stft::{istft, istft_padded, stft, stft_padded, PaddedSpectrogram};

use rustfft::num_complex::Complex64;
use thiserror::Error;

/// Canonical sample rate for every run.
pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DspError {
    #[error("input too short: {len} samples, need at least {min}")]
    InputTooShort { len: usize, min: usize },
    #[error("non-invertible config: window/hop violates constant overlap-add (deviation {deviation:.3e})")]
    NonInvertibleConfig { deviation: f64 },
    #[error("invalid stft config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("sample-rate mismatch: {0} Hz vs {1} Hz")]
    SampleRateMismatch(u32, u32),
    #[error("resample ratio {0} outside [0.1, 10]")]
    RatioOutOfRange(f64),
    #[error("zero-power input ({0})")]
    ZeroPower(&'static str),
    #[error("no active frames in reference signal")]
    NoActiveFrames,
    #[error("invalid waveform: {0}")]
    InvalidWaveform(String),
    #[error("invalid mask: {0}")]
    InvalidMask(String),
    #[error("wav: {0}")]
    Wav(String),
}

/// Mono audio with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, DspError> {
        if sample_rate == 0 {
            return Err(DspError::InvalidWaveform("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(DspError::InvalidWaveform(format!(
                "non-finite sample at index {i}"
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |m, s| m.max(s.abs()))
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        signal_power(&self.samples).sqrt()
    }

    /// Returns a copy with every sample multiplied by `gain`.
    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

/// Analysis window shape. Windows are periodic (DFT-even).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Hann,
    Hamming,
    Rectangular,
}

impl WindowKind {
    pub fn build(self, len: usize) -> Vec<f64> {
        let n = len as f64;
        (0..len)
            .map(|i| {
                let phase = 2.0 * std::f64::consts::PI * i as f64 / n;
                match self {
                    WindowKind::Hann => 0.5 - 0.5 * phase.cos(),
                    WindowKind::Hamming => 0.54 - 0.46 * phase.cos(),
                    WindowKind::Rectangular => 1.0,
                }
            })
            .collect()
    }
}

impl std::str::FromStr for WindowKind {
    type Err = DspError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hann" => Ok(WindowKind::Hann),
            "hamming" => Ok(WindowKind::Hamming),
            "rectangular" | "rect" => Ok(WindowKind::Rectangular),
            other => Err(DspError::InvalidConfig(format!("unknown window '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct StftConfig {
    pub fft_size: usize,
    pub hop: usize,
    pub window: WindowKind,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            fft_size: 512,
            hop: 256,
            window: WindowKind::Hann,
        }
    }
}

impl StftConfig {
    pub fn new(fft_size: usize, hop: usize, window: WindowKind) -> Result<Self, DspError> {
        let cfg = Self {
            fft_size,
            hop,
            window,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), DspError> {
        if self.fft_size < 2 || self.fft_size % 2 != 0 {
            return Err(DspError::InvalidConfig(format!(
                "fft_size must be even and >= 2, got {}",
                self.fft_size
            )));
        }
        if self.hop == 0 || self.hop > self.fft_size {
            return Err(DspError::InvalidConfig(format!(
                "hop must be in 1..={}, got {}",
                self.fft_size, self.hop
            )));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn window(&self) -> Vec<f64> {
        self.window.build(self.fft_size)
    }

    /// Relative spread (max − min) / mean of the overlap-added analysis window.
    pub fn cola_deviation(&self) -> f64 {
        let w = self.window();
        let sums: Vec<f64> = (0..self.hop)
            .map(|n| w.iter().skip(n).step_by(self.hop).sum())
            .collect();
        let max = sums.iter().cloned().fold(f64::MIN, f64::max);
        let min = sums.iter().cloned().fold(f64::MAX, f64::min);
        let mean = sums.iter().sum::<f64>() / sums.len() as f64;
        if mean <= 0.0 {
            return f64::INFINITY;
        }
        (max - min) / mean
    }

    pub fn is_cola(&self) -> bool {
        self.cola_deviation() <= 1e-6
    }

    /// Number of frames produced for `len` samples without padding.
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.fft_size {
            0
        } else {
            (len - self.fft_size) / self.hop + 1
        }
    }
}

/// Complex frames × bins grid, row-major by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    frames: usize,
    bins: usize,
    data: Vec<Complex64>,
    config: StftConfig,
    sample_rate: u32,
}

impl Spectrogram {
    pub fn new(
        frames: usize,
        data: Vec<Complex64>,
        config: StftConfig,
        sample_rate: u32,
    ) -> Result<Self, DspError> {
        let bins = config.bins();
        if data.len() != frames * bins {
            return Err(DspError::InvalidConfig(format!(
                "spectrogram data length {} does not match {frames} frames x {bins} bins",
                data.len()
            )));
        }
        if data.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(DspError::InvalidConfig("non-finite spectrogram value".into()));
        }
        Ok(Self {
            frames,
            bins,
            data,
            config,
            sample_rate,
        })
    }

    pub fn zeros(frames: usize, config: StftConfig, sample_rate: u32) -> Self {
        Self {
            frames,
            bins: config.bins(),
            data: vec![Complex64::new(0.0, 0.0); frames * config.bins()],
            config,
            sample_rate,
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.frames, self.bins)
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn frame(&self, t: usize) -> &[Complex64] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }

    pub fn magnitude(&self) -> MagSpectrogram {
        MagSpectrogram {
            frames: self.frames,
            bins: self.bins,
            data: self.data.iter().map(|c| c.norm()).collect(),
            config: self.config,
        }
    }
}

/// Nonnegative frames × bins grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MagSpectrogram {
    frames: usize,
    bins: usize,
    data: Vec<f64>,
    config: StftConfig,
}

impl MagSpectrogram {
    pub fn new(frames: usize, data: Vec<f64>, config: StftConfig) -> Result<Self, DspError> {
        let bins = config.bins();
        if data.len() != frames * bins {
            return Err(DspError::InvalidConfig(format!(
                "magnitude data length {} does not match {frames} frames x {bins} bins",
                data.len()
            )));
        }
        if data.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(DspError::InvalidConfig(
                "magnitudes must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            frames,
            bins,
            data,
            config,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.frames, self.bins)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }
}

/// Time–frequency gain in `[floor, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    frames: usize,
    bins: usize,
    data: Vec<f64>,
    floor: f64,
}

impl Mask {
    pub const DEFAULT_FLOOR: f64 = 0.05;

    pub fn new(frames: usize, bins: usize, data: Vec<f64>, floor: f64) -> Result<Self, DspError> {
        if !(floor > 0.0 && floor <= 1.0) {
            return Err(DspError::InvalidMask(format!("floor {floor} outside (0, 1]")));
        }
        if data.len() != frames * bins {
            return Err(DspError::InvalidMask(format!(
                "length {} does not match {frames}x{bins}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(**v >= floor && **v <= 1.0)) {
            return Err(DspError::InvalidMask(format!(
                "entry {v} outside [{floor}, 1]"
            )));
        }
        Ok(Self {
            frames,
            bins,
            data,
            floor,
        })
    }

    /// Builds a mask by clamping arbitrary values into `[floor, 1]`.
    pub fn clamped(frames: usize, bins: usize, data: Vec<f64>, floor: f64) -> Result<Self, DspError> {
        let data = data.into_iter().map(|v| v.clamp(floor, 1.0)).collect();
        Self::new(frames, bins, data, floor)
    }

    pub fn ones(frames: usize, bins: usize, floor: f64) -> Self {
        Self {
            frames,
            bins,
            data: vec![1.0; frames * bins],
            floor,
        }
    }

    pub fn floor_mask(frames: usize, bins: usize, floor: f64) -> Self {
        Self {
            frames,
            bins,
            data: vec![floor; frames * bins],
            floor,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.frames, self.bins)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }
}

/// Scales the noisy magnitude by `mask` and keeps the noisy phase.
pub fn apply_mask(mask: &Mask, noisy: &Spectrogram) -> Result<Spectrogram, DspError> {
    if mask.shape() != noisy.shape() {
        return Err(DspError::ShapeMismatch {
            left: mask.shape(),
            right: noisy.shape(),
        });
    }
    let data = mask
        .data
        .iter()
        .zip(&noisy.data)
        .map(|(m, c)| c * *m)
        .collect();
    Ok(Spectrogram {
        data,
        ..noisy.clone()
    })
}

pub use rustfft::num_complex;
