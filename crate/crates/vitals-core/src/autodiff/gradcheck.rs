//! Central finite-difference verification of backward rules.
//!
//! `grad_check` rebuilds the graph from scratch for every probe, so it is a
//! fully independent check of the analytic gradients: the only shared code
//! between the two sides is the forward pass.

use alloc::format;
use alloc::vec::Vec;

use super::{Tape, TapeError, Tensor, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub pass: bool,
    /// Coordinate with the largest relative error.
    pub worst_coord: usize,
    pub n_checked: usize,
}

/// Relative error with an absolute floor: tiny absolute disagreements on
/// near-zero gradients do not count as failures.
fn rel_err(g: f64, fd: f64) -> f64 {
    let d = (g - fd).abs();
    if d <= 1e-8 {
        0.0
    } else {
        d / g.abs().max(fd.abs()).max(1e-8)
    }
}

/// Compare a caller-supplied analytic gradient against central finite
/// differences of `f` at the listed coordinates.
pub fn fd_check(
    mut f: impl FnMut(&[f64]) -> Result<f64, TapeError>,
    x: &[f64],
    analytic: &[f64],
    coords: &[usize],
    eps: f64,
    tol: f64,
) -> Result<GradCheckReport, TapeError> {
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(TapeError::Unsupported {
            op: "grad_check",
            detail: format!("eps {} outside [1e-7, 1e-3]", eps),
        });
    }
    let mut buf = x.to_vec();
    let mut max_rel = 0.0;
    let mut worst = 0;
    for &c in coords {
        buf[c] = x[c] + eps;
        let fp = f(&buf)?;
        buf[c] = x[c] - eps;
        let fm = f(&buf)?;
        buf[c] = x[c];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(TapeError::NonFinite {
                op: "grad_check",
                coord: c,
            });
        }
        let fd = (fp - fm) / (2.0 * eps);
        let r = rel_err(analytic[c], fd);
        if r > max_rel {
            max_rel = r;
            worst = c;
        }
    }
    Ok(GradCheckReport {
        max_rel_err: max_rel,
        pass: max_rel <= tol,
        worst_coord: worst,
        n_checked: coords.len(),
    })
}

/// Verify the tape's backward pass for `build` (a graph from one leaf to one
/// scalar) at every coordinate of `x`.
pub fn grad_check<F>(build: F, x: &Tensor, eps: f64, tol: f64) -> Result<GradCheckReport, TapeError>
where
    F: Fn(&mut Tape, Var) -> Result<Var, TapeError>,
{
    let coords: Vec<usize> = (0..x.numel()).collect();
    grad_check_subset(build, x, eps, tol, &coords)
}

/// As `grad_check`, probing only the listed coordinates (for large graphs).
pub fn grad_check_subset<F>(
    build: F,
    x: &Tensor,
    eps: f64,
    tol: f64,
    coords: &[usize],
) -> Result<GradCheckReport, TapeError>
where
    F: Fn(&mut Tape, Var) -> Result<Var, TapeError>,
{
    let mut tape = Tape::new();
    let vx = tape.leaf(x.clone());
    let out = build(&mut tape, vx)?;
    if tape.value(out).numel() != 1 {
        return Err(TapeError::NonScalarLoss {
            shape: tape.value(out).shape.clone(),
        });
    }
    if !tape.value(out).data[0].is_finite() {
        return Err(TapeError::NonFinite {
            op: "grad_check",
            coord: 0,
        });
    }
    tape.backward(out)?;
    let analytic = tape.grad(vx).to_vec();
    let shape = x.shape.clone();
    fd_check(
        |vals| {
            let mut t = Tape::new();
            let v = t.leaf(Tensor::new(shape.clone(), vals.to_vec()));
            let o = build(&mut t, v)?;
            Ok(t.value(o).data[0])
        },
        &x.data,
        &analytic,
        coords,
        eps,
        tol,
    )
}
