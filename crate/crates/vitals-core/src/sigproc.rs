//! Non-differentiable signal utilities: brick-wall bandpass, spectral peak
//! rate estimation, sliding-window instantaneous rates, cumulative sum, and
//! standardization.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::fft;

/// Uniformly sampled real signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    /// Sample rate in Hz.
    pub fs: f64,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, fs: f64) -> Self {
        assert!(fs > 0.0, "waveform: fs must be positive, got {}", fs);
        assert!(!samples.is_empty(), "waveform: empty sample array");
        assert!(
            samples.iter().all(|v| v.is_finite()),
            "waveform: non-finite sample"
        );
        Self { samples, fs }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }
}

/// Passband in Hz. The shipped defaults are the pulse band [0.7, 2.5] Hz
/// (42–150 bpm) and the breathing band [0.13, 0.34] Hz (7.8–20.4 bpm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandLimits {
    pub lo: f64,
    pub hi: f64,
}

/// Default heart-rate passband.
pub const HR_BAND: BandLimits = BandLimits { lo: 0.7, hi: 2.5 };
/// Default respiration-rate passband.
pub const RR_BAND: BandLimits = BandLimits { lo: 0.13, hi: 0.34 };

impl BandLimits {
    pub fn validate(&self, fs: f64) -> Result<(), SigError> {
        if self.lo > 0.0 && self.lo < self.hi && self.hi < fs / 2.0 {
            Ok(())
        } else {
            Err(SigError::InvalidBand {
                lo: self.lo,
                hi: self.hi,
                fs,
            })
        }
    }

    /// Band edges in beats/breaths per minute.
    pub fn bpm_lo(&self) -> f64 {
        60.0 * self.lo
    }

    pub fn bpm_hi(&self) -> f64 {
        60.0 * self.hi
    }
}

/// Per-frame instantaneous rate estimates in beats/breaths per minute.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSeries {
    pub rates_bpm: Vec<f64>,
    /// Frame rate of the source clip in Hz.
    pub fs: f64,
}

impl RateSeries {
    pub fn len(&self) -> usize {
        self.rates_bpm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates_bpm.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SigError {
    /// Band does not satisfy 0 < lo < hi < fs/2.
    InvalidBand { lo: f64, hi: f64, fs: f64 },
    /// Every in-band FFT bin is exactly zero; `window` identifies the
    /// sliding-window index when raised from `sliding_rate`.
    NoInBandEnergy { window: Option<usize> },
    /// Signal shorter than the operation needs.
    TooShort { need: usize, have: usize },
    /// Invalid argument (stride, window length, ...).
    BadParam { detail: String },
}

impl core::fmt::Display for SigError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SigError::InvalidBand { lo, hi, fs } => write!(
                f,
                "invalid band [{}, {}] Hz for sample rate {} Hz (need 0 < lo < hi < fs/2)",
                lo, hi, fs
            ),
            SigError::NoInBandEnergy { window: Some(w) } => {
                write!(f, "no in-band energy in window {}", w)
            }
            SigError::NoInBandEnergy { window: None } => write!(f, "no in-band energy"),
            SigError::TooShort { need, have } => {
                write!(f, "signal too short: need {} samples, have {}", need, have)
            }
            SigError::BadParam { detail } => write!(f, "{}", detail),
        }
    }
}

/// Brick-wall FFT bandpass: zero every bin whose frequency lies outside
/// [lo, hi] (DC always removed; edges inclusive), inverse transform back.
pub fn bandpass(w: &Waveform, band: BandLimits) -> Result<Waveform, SigError> {
    band.validate(w.fs)?;
    let n = w.len();
    let (mut re, mut im) = fft::rfft(&w.samples);
    for k in 0..re.len() {
        let f = k as f64 * w.fs / n as f64;
        if k == 0 || f < band.lo || f > band.hi {
            re[k] = 0.0;
            im[k] = 0.0;
        }
    }
    Ok(Waveform {
        samples: fft::irfft(&re, &im, n),
        fs: w.fs,
    })
}

/// Dominant in-band frequency as a rate in units/minute, refined by
/// parabolic interpolation around the peak magnitude bin. The signal is
/// mean-centered and zero-padded to 4× the next power of two so the raw bin
/// quantization is well below the interpolation error.
pub fn dominant_rate(w: &Waveform, band: BandLimits) -> Result<f64, SigError> {
    band.validate(w.fs)?;
    let n = w.len();
    let m = 4 * fft::next_pow2(n);
    let mean = w.samples.iter().sum::<f64>() / n as f64;
    let mut padded = vec![0.0; m];
    for (p, &s) in padded.iter_mut().zip(&w.samples) {
        *p = s - mean;
    }
    let (re, im) = fft::rfft(&padded);
    let bins = re.len();
    let mag = |k: usize| libm::sqrt(re[k] * re[k] + im[k] * im[k]);
    let bin_hz = w.fs / m as f64;
    let k_lo = libm::ceil(band.lo / bin_hz) as usize;
    let k_hi = (libm::floor(band.hi / bin_hz) as usize).min(bins - 1);
    let mut best: Option<usize> = None;
    for k in k_lo.max(1)..=k_hi {
        if mag(k) > 0.0 && best.is_none_or(|b| mag(k) > mag(b)) {
            best = Some(k);
        }
    }
    let k = best.ok_or(SigError::NoInBandEnergy { window: None })?;
    // Parabolic peak refinement over (k-1, k, k+1).
    let beta = mag(k);
    let alpha = if k > 0 { mag(k - 1) } else { beta };
    let gamma = if k + 1 < bins { mag(k + 1) } else { beta };
    let denom = alpha - 2.0 * beta + gamma;
    let delta = if denom == 0.0 {
        0.0
    } else {
        (0.5 * (alpha - gamma) / denom).clamp(-0.5, 0.5)
    };
    let hz = (k as f64 + delta) * bin_hz;
    Ok((60.0 * hz).clamp(band.bpm_lo(), band.bpm_hi()))
}

/// Instantaneous rate per frame: `dominant_rate` over a centered moving
/// window; frames in the first/last half-window take the nearest valid
/// window's rate, so the output has exactly one rate per input frame.
pub fn sliding_rate(
    w: &Waveform,
    band: BandLimits,
    win_s: f64,
    stride_frames: usize,
) -> Result<RateSeries, SigError> {
    band.validate(w.fs)?;
    if stride_frames == 0 {
        return Err(SigError::BadParam {
            detail: "sliding_rate: stride must be at least 1 frame".into(),
        });
    }
    let n = w.len();
    let wl = libm::round(win_s * w.fs) as usize;
    if wl < 2 {
        return Err(SigError::BadParam {
            detail: format!("sliding_rate: window of {} s is under 2 frames", win_s),
        });
    }
    if wl > n {
        return Err(SigError::TooShort { need: wl, have: n });
    }
    let n_wins = (n - wl) / stride_frames + 1;
    let mut win_rates = Vec::with_capacity(n_wins);
    for wi in 0..n_wins {
        let start = wi * stride_frames;
        let seg = Waveform {
            samples: w.samples[start..start + wl].to_vec(),
            fs: w.fs,
        };
        let r = dominant_rate(&seg, band).map_err(|e| match e {
            SigError::NoInBandEnergy { .. } => SigError::NoInBandEnergy { window: Some(wi) },
            other => other,
        })?;
        win_rates.push(r);
    }
    // Frame i inherits the window whose center (start + wl/2) is nearest.
    let half = wl as f64 / 2.0;
    let rates = (0..n)
        .map(|i| {
            let pos = (i as f64 - half) / stride_frames as f64;
            let wi = libm::round(pos).clamp(0.0, (n_wins - 1) as f64) as usize;
            win_rates[wi]
        })
        .collect();
    Ok(RateSeries {
        rates_bpm: rates,
        fs: w.fs,
    })
}

/// Running sum: out[i] = Σ_{j≤i} in[j].
pub fn cumsum(w: &Waveform) -> Waveform {
    let mut acc = 0.0;
    let samples = w
        .samples
        .iter()
        .map(|&v| {
            acc += v;
            acc
        })
        .collect();
    Waveform { samples, fs: w.fs }
}

/// Zero-mean, unit-variance copy. Signals with variance below 1e-12 come
/// back all-zero with the degenerate flag set instead of exploding.
pub fn standardize(w: &Waveform) -> (Waveform, bool) {
    assert!(w.len() >= 2, "standardize: need at least 2 samples");
    let n = w.len() as f64;
    let mean = w.samples.iter().sum::<f64>() / n;
    let var = w.samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var < 1e-12 {
        return (
            Waveform {
                samples: vec![0.0; w.len()],
                fs: w.fs,
            },
            true,
        );
    }
    let inv = 1.0 / libm::sqrt(var);
    (
        Waveform {
            samples: w.samples.iter().map(|v| (v - mean) * inv).collect(),
            fs: w.fs,
        },
        false,
    )
}

/// Mean/std standardization of a bare slice (shared by windowing and the
/// classical estimators); returns the degenerate flag alongside.
pub fn standardize_slice(xs: &mut [f64]) -> bool {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var < 1e-12 {
        for v in xs.iter_mut() {
            *v = 0.0;
        }
        return true;
    }
    let inv = 1.0 / libm::sqrt(var);
    for v in xs.iter_mut() {
        *v = (*v - mean) * inv;
    }
    false
}
