//! Classical non-learning pulse estimators: the green channel, the
//! plane-orthogonal-to-skin chrominance projection, and blind source
//! separation via FastICA. All operate on spatially averaged RGB traces and
//! return a standardized, bandpassed waveform; none of them sees ground
//! truth.

use alloc::vec;
use alloc::vec::Vec;

use libm::{round, sqrt, tanh};

use crate::fft::rfft;
use crate::frames::VideoClip;
use crate::rng::{child, gaussian};
use crate::sigproc::{bandpass, standardize, BandLimits, SigError, Waveform};

/// Spatially averaged RGB values per frame.
#[derive(Debug, Clone)]
pub struct RgbTrace {
    pub r: Vec<f64>,
    pub g: Vec<f64>,
    pub b: Vec<f64>,
    pub fs: f64,
}

impl RgbTrace {
    pub fn new(r: Vec<f64>, g: Vec<f64>, b: Vec<f64>, fs: f64) -> Self {
        assert!(r.len() >= 2, "trace: need at least 2 frames");
        assert_eq!(r.len(), g.len());
        assert_eq!(r.len(), b.len());
        assert!(fs > 0.0);
        debug_assert!(
            r.iter().chain(&g).chain(&b).all(|v| v.is_finite()),
            "trace: non-finite value"
        );
        Self { r, g, b, fs }
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    fn channel(&self, c: usize) -> &[f64] {
        match c {
            0 => &self.r,
            1 => &self.g,
            _ => &self.b,
        }
    }

    /// Scale every channel by a constant (useful for invariance checks).
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            r: self.r.iter().map(|v| v * k).collect(),
            g: self.g.iter().map(|v| v * k).collect(),
            b: self.b.iter().map(|v| v * k).collect(),
            fs: self.fs,
        }
    }
}

/// Per-frame weighted spatial mean over pixels, per channel. `weights`, if
/// present, has one entry per pixel (H·W) and must sum to a positive value;
/// `None` averages uniformly over the full frame.
pub fn spatial_average(clip: &VideoClip, weights: Option<&[f64]>) -> Result<RgbTrace, SigError> {
    let hw = clip.h * clip.w;
    if let Some(wt) = weights {
        if wt.len() != hw {
            return Err(SigError::BadParam {
                detail: "weight mask length does not match pixel count".into(),
            });
        }
        let sum: f64 = wt.iter().sum();
        if !(sum > 0.0) {
            return Err(SigError::BadParam {
                detail: "weight mask must sum to a positive value".into(),
            });
        }
    }
    let mut r = Vec::with_capacity(clip.t);
    let mut g = Vec::with_capacity(clip.t);
    let mut b = Vec::with_capacity(clip.t);
    for t in 0..clip.t {
        let mut acc = [0.0f64; 3];
        let mut wsum = 0.0f64;
        let mut pix = 0usize;
        for y in 0..clip.h {
            for x in 0..clip.w {
                let wt = weights.map_or(1.0, |m| m[pix]);
                pix += 1;
                if wt == 0.0 {
                    continue;
                }
                for (c, a) in acc.iter_mut().enumerate() {
                    *a += wt * clip.at(t, y, x, c) as f64;
                }
                wsum += wt;
            }
        }
        r.push(acc[0] / wsum);
        g.push(acc[1] / wsum);
        b.push(acc[2] / wsum);
    }
    Ok(RgbTrace::new(r, g, b, clip.fps))
}

fn finish(samples: Vec<f64>, fs: f64, band: BandLimits) -> Result<Waveform, SigError> {
    let (std_wave, _degenerate) = standardize(&Waveform::new(samples, fs));
    bandpass(&std_wave, band)
}

/// Standardized, bandpassed green channel.
pub fn green_method(trace: &RgbTrace, band: BandLimits) -> Result<Waveform, SigError> {
    finish(trace.g.clone(), trace.fs, band)
}

/// Chrominance projection over overlapping windows: per window, normalize
/// each channel by its mean, project onto S1 = G−B and S2 = G+B−2R, combine
/// `h = S1 + (σ(S1)/σ(S2))·S2` (σ(S2) floored at 1e-12), mean-subtract `h`,
/// and overlap-add. The assembled signal is standardized and bandpassed.
pub fn pos_method(trace: &RgbTrace, band: BandLimits, win_s: f64) -> Result<Waveform, SigError> {
    let n = trace.len();
    let l = round(win_s * trace.fs) as usize;
    if l < 2 {
        return Err(SigError::BadParam {
            detail: "window too short for the trace rate".into(),
        });
    }
    if n < l {
        return Err(SigError::TooShort { need: l, have: n });
    }
    let mut out = vec![0.0f64; n];
    let mut s1 = vec![0.0f64; l];
    let mut s2 = vec![0.0f64; l];
    for t0 in 0..=n - l {
        let mut mean = [0.0f64; 3];
        for c in 0..3 {
            let ch = trace.channel(c);
            mean[c] = ch[t0..t0 + l].iter().sum::<f64>() / l as f64;
            if mean[c] == 0.0 {
                mean[c] = 1.0; // all-zero channel: normalization is a no-op
            }
        }
        for j in 0..l {
            let rn = trace.r[t0 + j] / mean[0];
            let gn = trace.g[t0 + j] / mean[1];
            let bn = trace.b[t0 + j] / mean[2];
            s1[j] = gn - bn;
            s2[j] = gn + bn - 2.0 * rn;
        }
        let sd = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            sqrt(v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64)
        };
        let ratio = sd(&s1) / sd(&s2).max(1e-12);
        let mut hm = 0.0;
        for j in 0..l {
            hm += s1[j] + ratio * s2[j];
        }
        hm /= l as f64;
        for j in 0..l {
            out[t0 + j] += s1[j] + ratio * s2[j] - hm;
        }
    }
    finish(out, trace.fs, band)
}

// ---------------------------------------------------------------------------
// FastICA with a Jacobi eigensolver for whitening
// ---------------------------------------------------------------------------

/// Eigen-decomposition of a symmetric 3×3 matrix by cyclic Jacobi rotations.
/// Returns eigenvalues and matching unit eigenvectors (as rows of `vecs`).
fn jacobi_eigen_sym3(mut a: [[f64; 3]; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    // v starts as identity; accumulated rotations make its COLUMNS the
    // eigenvectors, so we transpose on return to hand back rows.
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for _sweep in 0..64 {
        let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
        if off < 1e-28 {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            if a[p][q].abs() < 1e-300 {
                continue;
            }
            let tau = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = if tau >= 0.0 {
                1.0 / (tau + sqrt(1.0 + tau * tau))
            } else {
                -1.0 / (-tau + sqrt(1.0 + tau * tau))
            };
            let c = 1.0 / sqrt(1.0 + t * t);
            let s = t * c;
            for k in 0..3 {
                let akp = a[k][p];
                let akq = a[k][q];
                a[k][p] = c * akp - s * akq;
                a[k][q] = s * akp + c * akq;
            }
            for k in 0..3 {
                let apk = a[p][k];
                let aqk = a[q][k];
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
            for row in &mut v {
                let vp = row[p];
                let vq = row[q];
                row[p] = c * vp - s * vq;
                row[q] = s * vp + c * vq;
            }
        }
    }
    let vals = [a[0][0], a[1][1], a[2][2]];
    let rows = [
        [v[0][0], v[1][0], v[2][0]],
        [v[0][1], v[1][1], v[2][1]],
        [v[0][2], v[1][2], v[2][2]],
    ];
    (vals, rows)
}

/// Remove the least-squares linear trend in place.
fn detrend_linear(x: &mut [f64]) {
    let n = x.len() as f64;
    let tm = (n - 1.0) / 2.0;
    let xm = x.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, v) in x.iter().enumerate() {
        let dt = i as f64 - tm;
        num += dt * (*v - xm);
        den += dt * dt;
    }
    let slope = if den > 0.0 { num / den } else { 0.0 };
    for (i, v) in x.iter_mut().enumerate() {
        *v -= xm + slope * (i as f64 - tm);
    }
}

/// Ratio of the strongest in-band spectral power to total power (DC
/// excluded); the selection score for ICA components.
fn band_peak_ratio(x: &[f64], fs: f64, band: BandLimits) -> f64 {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let (re, im) = rfft(&centered);
    let bin = fs / n as f64;
    let mut total = 0.0;
    let mut peak = 0.0;
    for k in 1..re.len() {
        let p = re[k] * re[k] + im[k] * im[k];
        total += p;
        let f = k as f64 * bin;
        if f >= band.lo && f <= band.hi && p > peak {
            peak = p;
        }
    }
    if total > 0.0 {
        peak / total
    } else {
        0.0
    }
}

/// Deflation FastICA (tanh contrast) on 3 pre-whitened rows. Returns the
/// unmixing rows in whitened space, or `None` when any component fails to
/// converge within `max_iter`.
fn fastica_deflation(
    z: &[Vec<f64>; 3],
    n: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Option<[[f64; 3]; 3]> {
    let mut rng = child(seed, 0x6963_61); // "ica"
    let mut w_rows = [[0.0f64; 3]; 3];
    for comp in 0..3 {
        let mut w = [gaussian(&mut rng), gaussian(&mut rng), gaussian(&mut rng)];
        orthonormalize(&mut w, &w_rows[..comp])?;
        let mut converged = false;
        for _ in 0..max_iter {
            // w_new = E[z·tanh(wᵀz)] − E[1 − tanh²(wᵀz)]·w
            let mut ez = [0.0f64; 3];
            let mut eg = 0.0f64;
            for t in 0..n {
                let y = w[0] * z[0][t] + w[1] * z[1][t] + w[2] * z[2][t];
                let th = tanh(y);
                ez[0] += z[0][t] * th;
                ez[1] += z[1][t] * th;
                ez[2] += z[2][t] * th;
                eg += 1.0 - th * th;
            }
            let nf = n as f64;
            let mut w_new = [
                ez[0] / nf - eg / nf * w[0],
                ez[1] / nf - eg / nf * w[1],
                ez[2] / nf - eg / nf * w[2],
            ];
            orthonormalize(&mut w_new, &w_rows[..comp])?;
            let dot = (w_new[0] * w[0] + w_new[1] * w[1] + w_new[2] * w[2]).abs();
            w = w_new;
            if (dot - 1.0).abs() < tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return None;
        }
        w_rows[comp] = w;
    }
    Some(w_rows)
}

/// Gram-Schmidt against `prev` rows, then normalize. `None` if the vector
/// collapses (fully inside the span of `prev`).
fn orthonormalize(w: &mut [f64; 3], prev: &[[f64; 3]]) -> Option<()> {
    for p in prev {
        let d = w[0] * p[0] + w[1] * p[1] + w[2] * p[2];
        for k in 0..3 {
            w[k] -= d * p[k];
        }
    }
    let norm = sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2]);
    if norm < 1e-12 {
        return None;
    }
    for k in w.iter_mut() {
        *k /= norm;
    }
    Some(())
}

/// Blind source separation: detrend and standardize the channels, whiten,
/// run deflation FastICA (tanh contrast, max 200 iterations, tolerance 1e-6,
/// seeded init), select the component with the highest in-band spectral peak
/// ratio, sign-align it to the green channel, standardize and bandpass.
///
/// The second return value is true when ICA failed to converge and the
/// result fell back to `green_method`.
pub fn ica_method(
    trace: &RgbTrace,
    band: BandLimits,
    seed: u64,
) -> Result<(Waveform, bool), SigError> {
    let n = trace.len();
    let mut x: [Vec<f64>; 3] = [trace.r.clone(), trace.g.clone(), trace.b.clone()];
    let mut degenerate = false;
    for ch in &mut x {
        detrend_linear(ch);
        if crate::sigproc::standardize_slice(ch) {
            degenerate = true;
        }
    }
    if degenerate {
        // a constant channel carries no pulse and breaks whitening
        return Ok((green_method(trace, band)?, true));
    }

    // covariance of the standardized channels
    let mut cov = [[0.0f64; 3]; 3];
    for i in 0..3 {
        for j in i..3 {
            let c = x[i].iter().zip(&x[j]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
            cov[i][j] = c;
            cov[j][i] = c;
        }
    }
    let (vals, rows) = jacobi_eigen_sym3(cov);

    // whiten: z = Λ^{-1/2} · E · x  (rows of E are eigenvectors)
    let mut z: [Vec<f64>; 3] = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for i in 0..3 {
        let scale = 1.0 / sqrt(vals[i].max(1e-12));
        for t in 0..n {
            z[i][t] =
                scale * (rows[i][0] * x[0][t] + rows[i][1] * x[1][t] + rows[i][2] * x[2][t]);
        }
    }

    let Some(w_rows) = fastica_deflation(&z, n, seed, 200, 1e-6) else {
        return Ok((green_method(trace, band)?, true));
    };

    // components and in-band selection
    let mut best: Option<(usize, f64)> = None;
    let mut comps: Vec<Vec<f64>> = Vec::with_capacity(3);
    for w in &w_rows {
        let s: Vec<f64> = (0..n)
            .map(|t| w[0] * z[0][t] + w[1] * z[1][t] + w[2] * z[2][t])
            .collect();
        let score = band_peak_ratio(&s, trace.fs, band);
        let idx = comps.len();
        if best.map_or(true, |(_, b)| score > b) {
            best = Some((idx, score));
        }
        comps.push(s);
    }
    let (sel, _) = best.expect("three components were produced");
    let mut s = comps.swap_remove(sel);

    // sign-align with the green channel
    let corr_g: f64 = s.iter().zip(&x[1]).map(|(a, b)| a * b).sum();
    if corr_g < 0.0 {
        for v in &mut s {
            *v = -*v;
        }
    }
    Ok((finish(s, trace.fs, band)?, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use crate::sigproc::{dominant_rate, HR_BAND};
    use crate::synth::{make_clip, RateProfile, SceneParams};
    use libm::sin;

    fn band_power(w: &Waveform, band: BandLimits) -> f64 {
        let (re, im) = rfft(&w.samples);
        let bin = w.fs / w.len() as f64;
        let mut acc = 0.0;
        for k in 1..re.len() {
            let f = k as f64 * bin;
            if f >= band.lo && f <= band.hi {
                acc += re[k] * re[k] + im[k] * im[k];
            }
        }
        acc
    }

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let (mut num, mut da, mut db) = (0.0, 0.0, 0.0);
        for (x, y) in a.iter().zip(b) {
            num += (x - ma) * (y - mb);
            da += (x - ma) * (x - ma);
            db += (y - mb) * (y - mb);
        }
        num / sqrt(da * db)
    }

    #[test]
    fn spatial_average_of_uniform_frame() {
        let clip = VideoClip::new(vec![0.4; 2 * 3 * 3 * 3], 2, 3, 3, 30.0);
        let tr = spatial_average(&clip, None).unwrap();
        for t in 0..2 {
            assert!((tr.r[t] - 0.4).abs() < 1e-7);
            assert!((tr.g[t] - 0.4).abs() < 1e-7);
            assert!((tr.b[t] - 0.4).abs() < 1e-7);
        }
    }

    #[test]
    fn spatial_average_single_pixel_mask() {
        let mut rng = SplitMix64::new(5);
        let frames: Vec<f32> = (0..2 * 2 * 2 * 3).map(|_| rng.next_f64() as f32).collect();
        let clip = VideoClip::new(frames, 2, 2, 2, 30.0);
        let mut mask = vec![0.0; 4];
        mask[3] = 1.0; // pixel (1,1)
        let tr = spatial_average(&clip, Some(&mask)).unwrap();
        for t in 0..2 {
            assert_eq!(tr.r[t], clip.at(t, 1, 1, 0) as f64);
            assert_eq!(tr.g[t], clip.at(t, 1, 1, 1) as f64);
            assert_eq!(tr.b[t], clip.at(t, 1, 1, 2) as f64);
        }
    }

    #[test]
    fn spatial_average_uniform_mask_matches_unmasked() {
        let mut rng = SplitMix64::new(6);
        let frames: Vec<f32> = (0..3 * 4 * 4 * 3).map(|_| rng.next_f64() as f32).collect();
        let clip = VideoClip::new(frames, 3, 4, 4, 30.0);
        let mask = vec![0.7; 16];
        let a = spatial_average(&clip, None).unwrap();
        let b = spatial_average(&clip, Some(&mask)).unwrap();
        for t in 0..3 {
            assert!((a.r[t] - b.r[t]).abs() < 1e-7);
            assert!((a.g[t] - b.g[t]).abs() < 1e-7);
            assert!((a.b[t] - b.b[t]).abs() < 1e-7);
        }
    }

    #[test]
    fn spatial_average_rejects_zero_mask() {
        let clip = VideoClip::new(vec![0.5; 2 * 2 * 2 * 3], 2, 2, 2, 30.0);
        assert!(spatial_average(&clip, Some(&vec![0.0; 4])).is_err());
        assert!(spatial_average(&clip, Some(&vec![1.0; 3])).is_err());
    }

    fn noise_free_clip(bpm: f64, seed: u64) -> crate::synth::SynthClip {
        let params = SceneParams { seed, ..SceneParams::default() };
        make_clip(
            &params,
            &RateProfile::constant(bpm),
            HR_BAND,
            12.0,
            30.0,
            16,
            16,
            0.0,
            0.3,
        )
        .unwrap()
    }

    #[test]
    fn green_recovers_rate_on_clean_clip() {
        let sc = noise_free_clip(72.0, 1);
        let tr = spatial_average(&sc.clip, None).unwrap();
        let w = green_method(&tr, HR_BAND).unwrap();
        let est = dominant_rate(&w, HR_BAND).unwrap();
        assert!((est - 72.0).abs() < 1.0, "estimated {}", est);
    }

    #[test]
    fn green_ignores_red_only_pulse() {
        let fs = 30.0;
        let n = 300;
        let r: Vec<f64> = (0..n)
            .map(|i| 0.5 + 0.02 * sin(2.0 * core::f64::consts::PI * 1.2 * i as f64 / fs))
            .collect();
        let tr = RgbTrace::new(r.clone(), vec![0.4; n], vec![0.3; n], fs);
        let out = green_method(&tr, HR_BAND).unwrap();
        let red_ref = finish(r, fs, HR_BAND).unwrap();
        let p_out = band_power(&out, HR_BAND);
        let p_red = band_power(&red_ref, HR_BAND);
        assert!(p_out < 0.1 * p_red, "out {} vs red {}", p_out, p_red);
    }

    #[test]
    fn green_degenerate_channel_gives_zeros() {
        let tr = RgbTrace::new(vec![0.5; 64], vec![0.4; 64], vec![0.3; 64], 30.0);
        let w = green_method(&tr, HR_BAND).unwrap();
        assert!(w.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pos_recovers_rate_under_motion() {
        let params = SceneParams { noise_sigma: 0.002, seed: 3, ..SceneParams::default() };
        let sc = make_clip(
            &params,
            &RateProfile::constant(72.0),
            HR_BAND,
            12.0,
            30.0,
            16,
            16,
            0.1,
            0.3,
        )
        .unwrap();
        let tr = spatial_average(&sc.clip, None).unwrap();
        let w = pos_method(&tr, HR_BAND, 1.6).unwrap();
        let est = dominant_rate(&w, HR_BAND).unwrap();
        assert!((est - 72.0).abs() < 2.0, "estimated {}", est);
    }

    #[test]
    fn pos_cancels_pure_intensity_modulation() {
        let fs = 30.0;
        let n = 300;
        let base = [0.5, 0.4, 0.3];
        let tone =
            |i: usize| 0.03 * sin(2.0 * core::f64::consts::PI * 1.2 * i as f64 / fs);
        // intensity-only: all channels share the same relative modulation
        let intensity = RgbTrace::new(
            (0..n).map(|i| base[0] * (1.0 + tone(i))).collect(),
            (0..n).map(|i| base[1] * (1.0 + tone(i))).collect(),
            (0..n).map(|i| base[2] * (1.0 + tone(i))).collect(),
            fs,
        );
        // pulsatile: equal-amplitude modulation on green only
        let pulsatile = RgbTrace::new(
            vec![base[0]; n],
            (0..n).map(|i| base[1] * (1.0 + tone(i))).collect(),
            vec![base[2]; n],
            fs,
        );
        let wi = pos_method(&intensity, HR_BAND, 1.6).unwrap();
        let wp = pos_method(&pulsatile, HR_BAND, 1.6).unwrap();
        let pi = band_power(&wi, HR_BAND);
        let pp = band_power(&wp, HR_BAND);
        assert!(pi < 0.05 * pp, "intensity {} vs pulsatile {}", pi, pp);
    }

    #[test]
    fn pos_constant_chroma_window_is_harmless() {
        // constant trace: S1 = S2 = 0 in every window; floor rule keeps this
        // finite and the output degenerates to zeros
        let tr = RgbTrace::new(vec![0.5; 120], vec![0.4; 120], vec![0.3; 120], 30.0);
        let w = pos_method(&tr, HR_BAND, 1.6).unwrap();
        assert!(w.samples.iter().all(|&v| v.is_finite()));
        assert!(w.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pos_rejects_trace_shorter_than_window() {
        let tr = RgbTrace::new(vec![0.5; 20], vec![0.4; 20], vec![0.3; 20], 30.0);
        let err = pos_method(&tr, HR_BAND, 1.6).unwrap_err();
        assert!(matches!(err, SigError::TooShort { need: 48, have: 20 }));
    }

    fn uniform_sources(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut rng = SplitMix64::new(seed);
        let fs = 30.0;
        let tone: Vec<f64> = (0..n)
            .map(|i| sin(2.0 * core::f64::consts::PI * 1.2 * i as f64 / fs))
            .collect();
        let n1: Vec<f64> = (0..n).map(|_| rng.next_f64() - 0.5).collect();
        let n2: Vec<f64> = (0..n).map(|_| rng.next_f64() - 0.5).collect();
        (tone, n1, n2)
    }

    #[test]
    fn ica_unmixes_tone_from_random_mixture() {
        let n = 600;
        let (tone, n1, n2) = uniform_sources(n, 9);
        // fixed nonsingular mixing matrix
        let a = [[0.8, 0.3, 0.2], [0.4, 0.9, 0.1], [0.2, 0.5, 0.7]];
        let mix = |row: &[f64; 3]| -> Vec<f64> {
            (0..n)
                .map(|t| row[0] * tone[t] + row[1] * n1[t] + row[2] * n2[t])
                .collect()
        };
        let tr = RgbTrace::new(mix(&a[0]), mix(&a[1]), mix(&a[2]), 30.0);
        let (w, fell_back) = ica_method(&tr, HR_BAND, 4).unwrap();
        assert!(!fell_back, "ICA should converge on this mixture");
        let r = pearson(&w.samples, &tone);
        assert!(r.abs() > 0.95, "corr {}", r);
    }

    #[test]
    fn ica_identity_mixing_recovers_source() {
        let n = 600;
        let (tone, n1, n2) = uniform_sources(n, 10);
        let tr = RgbTrace::new(tone.clone(), n1, n2, 30.0);
        let (w, fell_back) = ica_method(&tr, HR_BAND, 5).unwrap();
        assert!(!fell_back);
        let r = pearson(&w.samples, &tone);
        assert!(r.abs() > 0.99, "corr {}", r);
    }

    #[test]
    fn ica_is_deterministic_for_fixed_seed() {
        let n = 400;
        let (tone, n1, n2) = uniform_sources(n, 11);
        let a = [[0.7, 0.2, 0.3], [0.3, 0.8, 0.2], [0.1, 0.4, 0.9]];
        let mix = |row: &[f64; 3]| -> Vec<f64> {
            (0..n)
                .map(|t| row[0] * tone[t] + row[1] * n1[t] + row[2] * n2[t])
                .collect()
        };
        let tr = RgbTrace::new(mix(&a[0]), mix(&a[1]), mix(&a[2]), 30.0);
        let (w1, f1) = ica_method(&tr, HR_BAND, 7).unwrap();
        let (w2, f2) = ica_method(&tr, HR_BAND, 7).unwrap();
        assert_eq!(f1, f2);
        assert_eq!(w1.samples, w2.samples);
    }

    #[test]
    fn all_methods_recover_rate_on_clean_clip() {
        let sc = noise_free_clip(84.0, 12);
        let tr = spatial_average(&sc.clip, None).unwrap();
        let wg = green_method(&tr, HR_BAND).unwrap();
        let wp = pos_method(&tr, HR_BAND, 1.6).unwrap();
        let (wi, _) = ica_method(&tr, HR_BAND, 1).unwrap();
        for (name, w) in [("green", wg), ("pos", wp), ("ica", wi)] {
            let est = dominant_rate(&w, HR_BAND).unwrap();
            assert!((est - 84.0).abs() < 1.0, "{} estimated {}", name, est);
        }
    }

    #[test]
    fn all_methods_invariant_to_positive_scaling() {
        let sc = noise_free_clip(66.0, 13);
        let tr = spatial_average(&sc.clip, None).unwrap();
        let tr2 = tr.scaled(3.7);
        let pairs = [
            (
                green_method(&tr, HR_BAND).unwrap(),
                green_method(&tr2, HR_BAND).unwrap(),
            ),
            (
                pos_method(&tr, HR_BAND, 1.6).unwrap(),
                pos_method(&tr2, HR_BAND, 1.6).unwrap(),
            ),
            (
                ica_method(&tr, HR_BAND, 2).unwrap().0,
                ica_method(&tr2, HR_BAND, 2).unwrap().0,
            ),
        ];
        for (a, b) in &pairs {
            for (x, y) in a.samples.iter().zip(&b.samples) {
                assert!((x - y).abs() < 1e-6, "{} vs {}", x, y);
            }
        }
    }

    #[test]
    fn jacobi_reconstructs_symmetric_matrix() {
        let m = [[2.0, 0.5, -0.3], [0.5, 1.5, 0.2], [-0.3, 0.2, 3.0]];
        let (vals, rows) = jacobi_eigen_sym3(m);
        // check A·vᵢ = λᵢ·vᵢ for each eigenpair
        for i in 0..3 {
            for r in 0..3 {
                let av: f64 = (0..3).map(|c| m[r][c] * rows[i][c]).sum();
                assert!(
                    (av - vals[i] * rows[i][r]).abs() < 1e-9,
                    "eigenpair {} row {}: {} vs {}",
                    i,
                    r,
                    av,
                    vals[i] * rows[i][r]
                );
            }
        }
        // eigenvectors are orthonormal
        for i in 0..3 {
            for j in 0..3 {
                let d: f64 = (0..3).map(|k| rows[i][k] * rows[j][k]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((d - expect).abs() < 1e-10);
            }
        }
    }
}
