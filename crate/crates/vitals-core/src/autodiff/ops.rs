//! Raw compute kernels shared by the tape's forward and backward passes.

use alloc::vec;
use alloc::vec::Vec;

/// Row-major strides for a shape.
pub fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// out += a[m,k] · b[k,n]
pub fn matmul_fwd(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (kk, &av) in arow.iter().enumerate() {
            let brow = &b[kk * n..(kk + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
}

/// da += g[m,n] · bᵀ  (for out = a·b)
pub fn matmul_bwd_a(g: &[f64], b: &[f64], m: usize, k: usize, n: usize, da: &mut [f64]) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        let darow = &mut da[i * k..(i + 1) * k];
        for kk in 0..k {
            let brow = &b[kk * n..(kk + 1) * n];
            let mut acc = 0.0;
            for j in 0..n {
                acc += grow[j] * brow[j];
            }
            darow[kk] += acc;
        }
    }
}

/// db += aᵀ · g[m,n]  (for out = a·b)
pub fn matmul_bwd_b(a: &[f64], g: &[f64], m: usize, k: usize, n: usize, db: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let grow = &g[i * n..(i + 1) * n];
        for kk in 0..k {
            let av = arow[kk];
            let dbrow = &mut db[kk * n..(kk + 1) * n];
            for j in 0..n {
                dbrow[j] += av * grow[j];
            }
        }
    }
}

/// Fully resolved convolution geometry (padding already turned into offsets).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn out_shape(&self) -> Vec<usize> {
        vec![self.batch, self.cout, self.out_h, self.out_w]
    }
}

/// Clamp the kernel index range so `o*stride + k - pad` stays inside `0..extent`.
fn k_range(o: usize, stride: usize, pad: usize, ksize: usize, extent: usize) -> (usize, usize) {
    let base = o * stride; // input index = base + k - pad
    let lo = pad.saturating_sub(base);
    let hi = (extent + pad - base).min(ksize);
    (lo, hi.max(lo))
}

/// out = conv2d(x, wgt) + bias, NCHW, weight [cout, cin, kh, kw].
pub fn conv2d_fwd(x: &[f64], wgt: &[f64], bias: Option<&[f64]>, g: &ConvGeom, out: &mut [f64]) {
    let xplane = g.h * g.w;
    let oplane = g.out_h * g.out_w;
    for b in 0..g.batch {
        for co in 0..g.cout {
            let b0 = bias.map_or(0.0, |bb| bb[co]);
            let obase = (b * g.cout + co) * oplane;
            for oy in 0..g.out_h {
                let (ky_lo, ky_hi) = k_range(oy, g.stride, g.pad_top, g.kh, g.h);
                for ox in 0..g.out_w {
                    let (kx_lo, kx_hi) = k_range(ox, g.stride, g.pad_left, g.kw, g.w);
                    let mut acc = b0;
                    for ci in 0..g.cin {
                        let xbase = (b * g.cin + ci) * xplane;
                        let wbase = ((co * g.cin + ci) * g.kh) * g.kw;
                        for ky in ky_lo..ky_hi {
                            let iy = oy * g.stride + ky - g.pad_top;
                            let xrow = xbase + iy * g.w + ox * g.stride;
                            let wrow = wbase + ky * g.kw;
                            for kx in kx_lo..kx_hi {
                                acc += x[xrow + kx - g.pad_left] * wgt[wrow + kx];
                            }
                        }
                    }
                    out[obase + oy * g.out_w + ox] = acc;
                }
            }
        }
    }
}

/// Scatter gradients of a conv2d output back to its operands (any subset).
pub fn conv2d_bwd(
    x: &[f64],
    wgt: &[f64],
    gout: &[f64],
    g: &ConvGeom,
    mut dx: Option<&mut [f64]>,
    mut dwgt: Option<&mut [f64]>,
    mut dbias: Option<&mut [f64]>,
) {
    let xplane = g.h * g.w;
    let oplane = g.out_h * g.out_w;
    for b in 0..g.batch {
        for co in 0..g.cout {
            let obase = (b * g.cout + co) * oplane;
            for oy in 0..g.out_h {
                let (ky_lo, ky_hi) = k_range(oy, g.stride, g.pad_top, g.kh, g.h);
                for ox in 0..g.out_w {
                    let go = gout[obase + oy * g.out_w + ox];
                    if let Some(db) = dbias.as_deref_mut() {
                        db[co] += go;
                    }
                    let (kx_lo, kx_hi) = k_range(ox, g.stride, g.pad_left, g.kw, g.w);
                    for ci in 0..g.cin {
                        let xbase = (b * g.cin + ci) * xplane;
                        let wbase = ((co * g.cin + ci) * g.kh) * g.kw;
                        for ky in ky_lo..ky_hi {
                            let iy = oy * g.stride + ky - g.pad_top;
                            let xrow = xbase + iy * g.w + ox * g.stride;
                            let wrow = wbase + ky * g.kw;
                            for kx in kx_lo..kx_hi {
                                let xi = xrow + kx - g.pad_left;
                                if let Some(d) = dx.as_deref_mut() {
                                    d[xi] += go * wgt[wrow + kx];
                                }
                                if let Some(d) = dwgt.as_deref_mut() {
                                    d[wrow + kx] += go * x[xi];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Permuted copy: `out[idx] = data[idx ∘ perm]`; returns (out_shape, out).
pub fn transpose_copy(data: &[f64], shape: &[usize], perm: &[usize]) -> (Vec<usize>, Vec<f64>) {
    let rank = shape.len();
    let mut out_shape = vec![0usize; rank];
    for (i, &p) in perm.iter().enumerate() {
        out_shape[i] = shape[p];
    }
    let in_strides = strides_of(shape);
    let mut map = vec![0usize; rank];
    for (i, &p) in perm.iter().enumerate() {
        map[i] = in_strides[p];
    }
    let n = data.len();
    let mut out = vec![0.0; n];
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    for slot in out.iter_mut() {
        *slot = data[off];
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            off += map[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            off -= idx[ax] * map[ax];
            idx[ax] = 0;
        }
    }
    (out_shape, out)
}
