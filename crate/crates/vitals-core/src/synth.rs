//! Synthetic skin-reflection clips with known pulse and rate ground truth.
//!
//! Each pixel follows a linear reflection model: a stationary diffuse term,
//! a diffuse modulation shared between motion `m(t)` and pulse `p(t)`, a
//! specular term with its own motion/pulse mix, and a pulsatile color term
//! present only on skin pixels:
//!
//! `C_k(t) = g_k · i0 · [ u_c·c0·b_k·(1 + Ψ(t)) + u_s·(s0 + Φ(t)) + u_p·p(t)·skin_k ] + v_n(t)`
//!
//! with `Ψ = a_Ψm·m + a_Ψp·p`, `Φ = a_Φm·m + a_Φp·p`, a smooth per-pixel
//! gain field `g_k` within ±10% of 1, and `b_k` an albedo factor that is 1
//! on skin and `bg_gain` elsewhere (so the skin region is distinguishable).

use alloc::vec::Vec;

use libm::{cos, round, sin, sqrt};

use crate::frames::VideoClip;
use crate::rng::{child, gaussian, uniform_in, Rng};
use crate::sigproc::{BandLimits, RateSeries, Waveform};
use rand_core::RngCore;

/// Scene and reflection-model parameters for one rendered clip.
#[derive(Debug, Clone)]
pub struct SceneParams {
    /// Unit-norm diffuse skin color direction.
    pub u_c: [f64; 3],
    /// Unit-norm specular color direction.
    pub u_s: [f64; 3],
    /// Pulsatile color vector (strength per channel, not unit norm).
    pub u_p: [f64; 3],
    /// Illumination intensity.
    pub i0: f64,
    /// Stationary diffuse reflection strength.
    pub c0: f64,
    /// Stationary specular reflection strength.
    pub s0: f64,
    /// Standard deviation of i.i.d. Gaussian sensor noise per value.
    pub noise_sigma: f64,
    /// Diffuse modulation mix `Ψ = psi_gain.0·m + psi_gain.1·p`.
    pub psi_gain: (f64, f64),
    /// Specular modulation mix `Φ = phi_gain.0·m + phi_gain.1·p`.
    pub phi_gain: (f64, f64),
    /// Albedo factor applied to the diffuse term outside the skin region.
    pub bg_gain: f64,
    /// Seed for the gain field and the sensor noise.
    pub seed: u64,
}

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    [v[0] / n, v[1] / n, v[2] / n]
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            u_c: unit([0.70, 0.55, 0.45]),
            u_s: unit([1.0, 1.0, 1.0]),
            // green-dominant so chrominance projections keep the pulse: the
            // specular pulse mix inflates the dim blue channel's relative
            // modulation, and a weak green pulse would let the G−B and
            // G+B−2R axes cancel each other
            u_p: [0.006, 0.028, 0.004],
            i0: 1.0,
            c0: 0.6,
            s0: 0.05,
            noise_sigma: 0.0,
            psi_gain: (0.5, 0.05),
            phi_gain: (0.5, 0.05),
            bg_gain: 0.8,
            seed: 0,
        }
    }
}

/// Piecewise-linear rate curve in bpm over clip time.
#[derive(Debug, Clone)]
pub struct RateProfile {
    /// `(time_s, bpm)` breakpoints, strictly increasing in time.
    points: Vec<(f64, f64)>,
}

impl RateProfile {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, SynthError> {
        if points.is_empty() {
            return Err(SynthError::BadParam {
                detail: "rate profile needs at least one breakpoint",
            });
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(SynthError::BadParam {
                detail: "rate profile breakpoints must be strictly increasing in time",
            });
        }
        Ok(Self { points })
    }

    pub fn constant(bpm: f64) -> Self {
        Self { points: alloc::vec![(0.0, bpm)] }
    }

    /// Linear ramp from `bpm0` at t=0 to `bpm1` at `duration_s`.
    pub fn linear(bpm0: f64, bpm1: f64, duration_s: f64) -> Self {
        Self { points: alloc::vec![(0.0, bpm0), (duration_s, bpm1)] }
    }

    /// Rate in bpm at time `t` (clamped to the first/last breakpoint).
    pub fn at(&self, t: f64) -> f64 {
        let pts = &self.points;
        if t <= pts[0].0 {
            return pts[0].1;
        }
        for w in pts.windows(2) {
            let ((t0, r0), (t1, r1)) = (w[0], w[1]);
            if t <= t1 {
                return r0 + (r1 - r0) * (t - t0) / (t1 - t0);
            }
        }
        pts[pts.len() - 1].1
    }

    /// Extremes over the breakpoints (piecewise-linear curves attain their
    /// extremes at breakpoints).
    pub fn bpm_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &(_, bpm) in &self.points {
            lo = lo.min(bpm);
            hi = hi.max(bpm);
        }
        (lo, hi)
    }
}

/// A rendered clip with its generating signals and per-frame rate labels.
#[derive(Debug, Clone)]
pub struct SynthClip {
    pub clip: VideoClip,
    pub pulse: Waveform,
    pub motion: Waveform,
    pub rate_gt: RateSeries,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SynthError {
    /// Rate profile leaves the target band (bpm limits shown).
    ProfileOutOfBand { bpm: f64, lo: f64, hi: f64 },
    /// Pulse and motion tracks disagree in length or rate.
    LengthMismatch { pulse: usize, motion: usize },
    /// Stationary pixel mean falls outside (0, 1).
    SceneSaturates { value: f64 },
    BadParam { detail: &'static str },
}

impl core::fmt::Display for SynthError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SynthError::ProfileOutOfBand { bpm, lo, hi } => write!(
                f,
                "rate profile leaves band: {} bpm outside [{}, {}] bpm",
                bpm, lo, hi
            ),
            SynthError::LengthMismatch { pulse, motion } => write!(
                f,
                "pulse ({} samples) and motion ({} samples) tracks do not match",
                pulse, motion
            ),
            SynthError::SceneSaturates { value } => write!(
                f,
                "scene saturates: stationary pixel mean {} outside (0, 1)",
                value
            ),
            SynthError::BadParam { detail } => write!(f, "bad parameter: {}", detail),
        }
    }
}

/// Quasi-sinusoidal pulse with instantaneous rate following `profile`.
///
/// Phase integrates the instantaneous frequency with the trapezoid rule, so
/// the pulse is fully determined by the profile; `seed` is accepted for
/// interface uniformity with the other generators but does not affect the
/// output. Returns the pulse and the per-frame rate labels.
pub fn gen_pulse(
    duration_s: f64,
    fs: f64,
    profile: &RateProfile,
    band: BandLimits,
    _seed: u64,
) -> Result<(Waveform, RateSeries), SynthError> {
    if !(duration_s > 0.0) || !(fs > 0.0) {
        return Err(SynthError::BadParam {
            detail: "duration and fs must be positive",
        });
    }
    let n = round(duration_s * fs) as usize;
    if n < 2 {
        return Err(SynthError::BadParam {
            detail: "duration too short for at least 2 samples",
        });
    }
    let (lo_bpm, hi_bpm) = (band.bpm_lo(), band.bpm_hi());
    let (pmin, pmax) = profile.bpm_range();
    if pmin < lo_bpm {
        return Err(SynthError::ProfileOutOfBand { bpm: pmin, lo: lo_bpm, hi: hi_bpm });
    }
    if pmax > hi_bpm {
        return Err(SynthError::ProfileOutOfBand { bpm: pmax, lo: lo_bpm, hi: hi_bpm });
    }
    let dt = 1.0 / fs;
    let mut rates = Vec::with_capacity(n);
    let mut samples = Vec::with_capacity(n);
    let mut phase = 0.0f64;
    let mut prev_hz = profile.at(0.0) / 60.0;
    rates.push(profile.at(0.0));
    samples.push(sin(phase));
    for i in 1..n {
        let t = i as f64 * dt;
        let bpm = profile.at(t);
        let hz = bpm / 60.0;
        phase += core::f64::consts::PI * (prev_hz + hz) * dt;
        prev_hz = hz;
        rates.push(bpm);
        samples.push(sin(phase));
    }
    Ok((
        Waveform::new(samples, fs),
        RateSeries { rates_bpm: rates, fs },
    ))
}

/// Smoothed Gaussian motion track: seeded white noise brick-wall low-passed
/// at `cutoff_hz` (DC removed), then scaled to the requested RMS amplitude.
pub fn gen_motion(
    duration_s: f64,
    fs: f64,
    amplitude: f64,
    cutoff_hz: f64,
    seed: u64,
) -> Result<Waveform, SynthError> {
    if !(duration_s > 0.0) || !(fs > 0.0) {
        return Err(SynthError::BadParam {
            detail: "duration and fs must be positive",
        });
    }
    if !(cutoff_hz > 0.0) || cutoff_hz >= fs / 2.0 {
        return Err(SynthError::BadParam {
            detail: "motion cutoff must lie in (0, fs/2)",
        });
    }
    if amplitude < 0.0 {
        return Err(SynthError::BadParam {
            detail: "motion amplitude must be non-negative",
        });
    }
    let n = round(duration_s * fs) as usize;
    if n < 2 {
        return Err(SynthError::BadParam {
            detail: "duration too short for at least 2 samples",
        });
    }
    if amplitude == 0.0 {
        return Ok(Waveform::new(alloc::vec![0.0; n], fs));
    }
    let mut rng = child(seed, 0x6d6f_7469_6f6e); // "motion"
    let white: Vec<f64> = (0..n).map(|_| gaussian(&mut rng)).collect();
    let (mut re, mut im) = crate::fft::rfft(&white);
    let bin = fs / n as f64;
    for k in 0..re.len() {
        let f = k as f64 * bin;
        if k == 0 || f > cutoff_hz {
            re[k] = 0.0;
            im[k] = 0.0;
        }
    }
    let mut low = crate::fft::irfft(&re, &im, n);
    let rms = sqrt(low.iter().map(|v| v * v).sum::<f64>() / n as f64);
    if rms > 0.0 {
        let scale = amplitude / rms;
        for v in &mut low {
            *v *= scale;
        }
    }
    Ok(Waveform::new(low, fs))
}

/// Row/column bounds `(y0, y1, x0, x1)` of the central skin region
/// (roughly the middle 60% in each dimension, half-open ranges).
pub fn skin_region(h: usize, w: usize) -> (usize, usize, usize, usize) {
    let my = round(0.2 * h as f64) as usize;
    let mx = round(0.2 * w as f64) as usize;
    (my, h - my, mx, w - mx)
}

/// Smooth per-pixel gain field within ±10% of 1: two low-frequency cosine
/// ripples with seeded phases.
fn gain_field(h: usize, w: usize, rng: &mut Rng) -> Vec<f64> {
    let ph_x = uniform_in(rng, 0.0, 2.0 * core::f64::consts::PI);
    let ph_y = uniform_in(rng, 0.0, 2.0 * core::f64::consts::PI);
    let fx = 1.0 + (rng.next_u32() % 2) as f64; // 1 or 2 cycles across
    let fy = 1.0 + (rng.next_u32() % 2) as f64;
    let mut g = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let ax = 2.0 * core::f64::consts::PI * fx * x as f64 / w as f64 + ph_x;
            let ay = 2.0 * core::f64::consts::PI * fy * y as f64 / h as f64 + ph_y;
            g.push(1.0 + 0.05 * cos(ax) + 0.05 * sin(ay));
        }
    }
    g
}

/// Render a clip from the reflection model. `pulse` and `motion` must share
/// length and rate; `rate_gt` carries the per-frame labels produced with the
/// pulse. Pixel values are clamped to [0, 1] after noise.
pub fn render_clip(
    params: &SceneParams,
    pulse: &Waveform,
    motion: &Waveform,
    rate_gt: &RateSeries,
    h: usize,
    w: usize,
) -> Result<SynthClip, SynthError> {
    if pulse.len() != motion.len() || pulse.fs != motion.fs {
        return Err(SynthError::LengthMismatch {
            pulse: pulse.len(),
            motion: motion.len(),
        });
    }
    if rate_gt.rates_bpm.len() != pulse.len() {
        return Err(SynthError::LengthMismatch {
            pulse: pulse.len(),
            motion: rate_gt.rates_bpm.len(),
        });
    }
    if h < 4 || w < 4 {
        return Err(SynthError::BadParam { detail: "frame size must be at least 4x4" });
    }
    for u in [params.u_c, params.u_s] {
        let norm = sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
        if (norm - 1.0).abs() > 1e-9 {
            return Err(SynthError::BadParam {
                detail: "u_c and u_s must be unit-norm",
            });
        }
    }
    if !(params.i0 > 0.0) || !(params.c0 > 0.0) || params.s0 < 0.0 {
        return Err(SynthError::BadParam {
            detail: "i0 and c0 must be positive, s0 non-negative",
        });
    }
    if params.noise_sigma < 0.0 {
        return Err(SynthError::BadParam {
            detail: "noise_sigma must be non-negative",
        });
    }
    if !(params.bg_gain > 0.0) {
        return Err(SynthError::BadParam { detail: "bg_gain must be positive" });
    }

    let mut rng = child(params.seed, 0x7363_656e_65); // "scene"
    let gain = gain_field(h, w, &mut rng);
    let (y0, y1, x0, x1) = skin_region(h, w);

    // stationary saturation check: every pixel's time-mean must sit in (0, 1)
    for y in 0..h {
        for x in 0..w {
            let g = gain[y * w + x];
            let skin = y >= y0 && y < y1 && x >= x0 && x < x1;
            let b = if skin { 1.0 } else { params.bg_gain };
            for c in 0..3 {
                let v = g * params.i0 * (params.u_c[c] * params.c0 * b + params.u_s[c] * params.s0);
                if v <= 0.0 || v >= 1.0 {
                    return Err(SynthError::SceneSaturates { value: v });
                }
            }
        }
    }

    let t_len = pulse.len();
    let mut frames = Vec::with_capacity(t_len * h * w * 3);
    let mut noise_rng = child(params.seed, 0x6e6f_6973_65); // "noise"
    let (a_pm, a_pp) = params.psi_gain;
    let (a_fm, a_fp) = params.phi_gain;
    for t in 0..t_len {
        let p = pulse.samples[t];
        let m = motion.samples[t];
        let psi = a_pm * m + a_pp * p;
        let phi = a_fm * m + a_fp * p;
        for y in 0..h {
            let row_skin = y >= y0 && y < y1;
            for x in 0..w {
                let g = gain[y * w + x];
                let skin = row_skin && x >= x0 && x < x1;
                let b = if skin { 1.0 } else { params.bg_gain };
                let s = if skin { 1.0 } else { 0.0 };
                for c in 0..3 {
                    let mut v = g
                        * params.i0
                        * (params.u_c[c] * params.c0 * b * (1.0 + psi)
                            + params.u_s[c] * (params.s0 + phi)
                            + params.u_p[c] * p * s);
                    if params.noise_sigma > 0.0 {
                        v += params.noise_sigma * gaussian(&mut noise_rng);
                    }
                    frames.push(v.clamp(0.0, 1.0) as f32);
                }
            }
        }
    }
    Ok(SynthClip {
        clip: VideoClip::new(frames, t_len, h, w, pulse.fs),
        pulse: pulse.clone(),
        motion: motion.clone(),
        rate_gt: RateSeries {
            rates_bpm: rate_gt.rates_bpm.clone(),
            fs: rate_gt.fs,
        },
    })
}

/// Convenience: pulse + motion + render in one call.
pub fn make_clip(
    params: &SceneParams,
    profile: &RateProfile,
    band: BandLimits,
    duration_s: f64,
    fs: f64,
    h: usize,
    w: usize,
    motion_amplitude: f64,
    motion_cutoff_hz: f64,
) -> Result<SynthClip, SynthError> {
    let (pulse, rate_gt) = gen_pulse(duration_s, fs, profile, band, params.seed)?;
    let motion = if motion_amplitude == 0.0 {
        Waveform::new(alloc::vec![0.0; pulse.len()], fs)
    } else {
        gen_motion(duration_s, fs, motion_amplitude, motion_cutoff_hz, params.seed)?
    };
    render_clip(params, &pulse, &motion, &rate_gt, h, w)
}
