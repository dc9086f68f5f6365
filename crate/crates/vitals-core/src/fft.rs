//! FFT kernels for real-valued signals of arbitrary length.
//!
//! Power-of-two sizes use an iterative radix-2 transform; everything else
//! goes through Bluestein's chirp-z algorithm, so exact-length transforms
//! (needed by the brick-wall bandpass and the circular cross-correlation)
//! work for any `n`. The forward transform is unnormalized
//! (`X_k = sum_j x_j e^{-2pi i jk/n}`), the inverse carries the `1/n`.
//!
//! `rfft_adjoint` and `irfft_adjoint` are the transposes of the real
//! transforms viewed as linear maps on `(re, im)` pairs; the autodiff tape
//! uses them as backward rules.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

/// Smallest power of two >= n (n >= 1).
pub fn next_pow2(n: usize) -> usize {
    n.next_power_of_two()
}

/// Number of rfft bins for a length-n real signal.
pub fn rfft_bins(n: usize) -> usize {
    n / 2 + 1
}

fn fft_pow2(re: &mut [f64], im: &mut [f64], sign: f64) {
    let n = re.len();
    debug_assert!(n.is_power_of_two());
    // bit-reversal permutation
    let mut j = 0usize;
    for i in 0..n {
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
        let mut bit = n >> 1;
        while bit > 0 && j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
    }
    let mut len = 2;
    while len <= n {
        let ang = sign * 2.0 * PI / len as f64;
        let half = len / 2;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let w_re = libm::cos(ang * k as f64);
                let w_im = libm::sin(ang * k as f64);
                let a = start + k;
                let b = a + half;
                let t_re = re[b] * w_re - im[b] * w_im;
                let t_im = re[b] * w_im + im[b] * w_re;
                re[b] = re[a] - t_re;
                im[b] = im[a] - t_im;
                re[a] += t_re;
                im[a] += t_im;
            }
        }
        len <<= 1;
    }
}

fn fft_bluestein(re: &mut [f64], im: &mut [f64], sign: f64) {
    let n = re.len();
    let m = next_pow2(2 * n - 1);
    // chirp c_j = exp(sign * i * pi * j^2 / n); j^2 reduced mod 2n keeps the
    // angle argument small enough for full f64 precision.
    let mut chirp_re = vec![0.0; n];
    let mut chirp_im = vec![0.0; n];
    for jj in 0..n {
        let sq = ((jj as u64 * jj as u64) % (2 * n as u64)) as f64;
        let ang = sign * PI * sq / n as f64;
        chirp_re[jj] = libm::cos(ang);
        chirp_im[jj] = libm::sin(ang);
    }
    // a = x .* c, zero-padded to m
    let mut a_re = vec![0.0; m];
    let mut a_im = vec![0.0; m];
    for jj in 0..n {
        a_re[jj] = re[jj] * chirp_re[jj] - im[jj] * chirp_im[jj];
        a_im[jj] = re[jj] * chirp_im[jj] + im[jj] * chirp_re[jj];
    }
    // b = conj(c), wrapped so that b[(k - j) mod m] = conj(c)[|k - j|]
    let mut b_re = vec![0.0; m];
    let mut b_im = vec![0.0; m];
    for jj in 0..n {
        b_re[jj] = chirp_re[jj];
        b_im[jj] = -chirp_im[jj];
        if jj != 0 {
            b_re[m - jj] = chirp_re[jj];
            b_im[m - jj] = -chirp_im[jj];
        }
    }
    fft_pow2(&mut a_re, &mut a_im, -1.0);
    fft_pow2(&mut b_re, &mut b_im, -1.0);
    for k in 0..m {
        let r = a_re[k] * b_re[k] - a_im[k] * b_im[k];
        let i = a_re[k] * b_im[k] + a_im[k] * b_re[k];
        a_re[k] = r;
        a_im[k] = i;
    }
    fft_pow2(&mut a_re, &mut a_im, 1.0);
    let inv_m = 1.0 / m as f64;
    for k in 0..n {
        let conv_re = a_re[k] * inv_m;
        let conv_im = a_im[k] * inv_m;
        re[k] = conv_re * chirp_re[k] - conv_im * chirp_im[k];
        im[k] = conv_re * chirp_im[k] + conv_im * chirp_re[k];
    }
}

fn fft_core(re: &mut [f64], im: &mut [f64], sign: f64) {
    let n = re.len();
    assert_eq!(n, im.len(), "fft: re/im length mismatch");
    if n <= 1 {
        return;
    }
    if n.is_power_of_two() {
        fft_pow2(re, im, sign);
    } else {
        fft_bluestein(re, im, sign);
    }
}

/// In-place complex DFT, unnormalized, exponent sign -1.
pub fn fft(re: &mut [f64], im: &mut [f64]) {
    fft_core(re, im, -1.0);
}

/// In-place complex inverse DFT, including the 1/n factor.
pub fn ifft(re: &mut [f64], im: &mut [f64]) {
    fft_core(re, im, 1.0);
    let scale = 1.0 / re.len() as f64;
    for v in re.iter_mut() {
        *v *= scale;
    }
    for v in im.iter_mut() {
        *v *= scale;
    }
}

/// Forward real FFT: n samples -> n/2+1 complex bins.
pub fn rfft(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let mut re = x.to_vec();
    let mut im = vec![0.0; n];
    fft_core(&mut re, &mut im, -1.0);
    let bins = rfft_bins(n);
    re.truncate(bins);
    im.truncate(bins);
    (re, im)
}

/// Inverse real FFT for an n-sample signal. `xre`/`xim` hold the one-sided
/// spectrum (`rfft_bins(n)` entries); returns the real signal.
pub fn irfft(xre: &[f64], xim: &[f64], n: usize) -> Vec<f64> {
    let bins = rfft_bins(n);
    assert_eq!(xre.len(), bins, "irfft: bin count mismatch for n={}", n);
    assert_eq!(xim.len(), bins);
    let mut re = vec![0.0; n];
    let mut im = vec![0.0; n];
    for k in 0..bins {
        re[k] = xre[k];
        im[k] = xim[k];
    }
    // Hermitian mirror of the interior bins.
    let top = if n % 2 == 0 { n / 2 } else { n / 2 + 1 };
    for k in 1..top {
        re[n - k] = xre[k];
        im[n - k] = -xim[k];
    }
    ifft(&mut re, &mut im);
    re
}

/// Adjoint of `rfft` as a linear map from n reals to (re, im) bin pairs:
/// given the cotangent `(gre, gim)` of the bins, returns the cotangent of
/// the input signal.
pub fn rfft_adjoint(gre: &[f64], gim: &[f64], n: usize) -> Vec<f64> {
    let bins = rfft_bins(n);
    assert_eq!(gre.len(), bins);
    assert_eq!(gim.len(), bins);
    let mut re = vec![0.0; n];
    let mut im = vec![0.0; n];
    re[..bins].copy_from_slice(gre);
    im[..bins].copy_from_slice(gim);
    // x_adj[j] = sum_k Re(G_k e^{+2pi i jk/n}): unnormalized inverse-sign DFT.
    fft_core(&mut re, &mut im, 1.0);
    re
}

/// Adjoint of `irfft`: given the cotangent of the time-domain output,
/// returns the cotangent of the one-sided spectrum.
pub fn irfft_adjoint(g: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(g.len(), n);
    let (mut fre, mut fim) = rfft(g);
    let bins = rfft_bins(n);
    let nf = n as f64;
    for k in 0..bins {
        let interior = k != 0 && !(n % 2 == 0 && k == n / 2);
        let w = if interior { 2.0 } else { 1.0 };
        fre[k] *= w / nf;
        fim[k] *= w / nf;
    }
    // Im at DC (and Nyquist for even n) never reaches the output.
    fim[0] = 0.0;
    if n % 2 == 0 {
        fim[n / 2] = 0.0;
    }
    (fre, fim)
}
