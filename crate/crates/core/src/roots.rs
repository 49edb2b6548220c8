//! Bracketed root finding for monotone scalar equations.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RootError {
    #[error("root is not bracketed: f({lo}) = {flo}, f({hi}) = {fhi}")]
    NotBracketed {
        lo: f64,
        hi: f64,
        flo: f64,
        fhi: f64,
    },
    #[error("no convergence after {iterations} iterations (bracket width {width})")]
    NoConvergence { iterations: usize, width: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct RootOptions {
    /// Stop once the bracket is narrower than `x_tol·max(1, |x|)`.
    pub x_tol: f64,
    pub max_iter: usize,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self {
            x_tol: 1e-15,
            max_iter: 200,
        }
    }
}

/// Newton's method safeguarded by bisection. `f` returns the value and
/// derivative; the root must be bracketed by `[lo, hi]`.
pub fn newton_bisect<F>(f: F, lo: f64, hi: f64, opts: RootOptions) -> Result<f64, RootError>
where
    F: Fn(f64) -> (f64, f64),
{
    let (mut lo, mut hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let (flo, _) = f(lo);
    let (fhi, _) = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(RootError::NotBracketed { lo, hi, flo, fhi });
    }
    // orient so that f(lo) < 0 < f(hi)
    let increasing = flo < 0.0;
    let mut x = 0.5 * (lo + hi);
    let mut dx_old = hi - lo;
    let mut dx = dx_old;
    let (mut fx, mut dfx) = f(x);
    for _ in 0..opts.max_iter {
        if fx == 0.0 {
            return Ok(x);
        }
        if (fx < 0.0) == increasing {
            lo = x;
        } else {
            hi = x;
        }
        let newton_ok = dfx != 0.0 && {
            let step = fx / dfx;
            let cand = x - step;
            cand > lo && cand < hi && (2.0 * step).abs() <= dx_old.abs()
        };
        dx_old = dx;
        if newton_ok {
            dx = fx / dfx;
            x -= dx;
        } else {
            dx = 0.5 * (hi - lo);
            x = lo + dx;
        }
        let tol = opts.x_tol * x.abs().max(1.0);
        if dx.abs() <= tol || hi - lo <= tol {
            return Ok(x);
        }
        let next = f(x);
        fx = next.0;
        dfx = next.1;
    }
    Err(RootError::NoConvergence {
        iterations: opts.max_iter,
        width: hi - lo,
    })
}

/// Plain bisection; returns the final bracket. `f(lo)` and `f(hi)` must
/// have opposite signs (zero counts as either).
pub fn bisect<F>(f: F, lo: f64, hi: f64, iterations: usize) -> Result<(f64, f64), RootError>
where
    F: FnMut(f64) -> f64,
{
    let mut f = f;
    let (mut lo, mut hi) = (lo, hi);
    let flo = f(lo);
    let fhi = f(hi);
    if flo * fhi > 0.0 {
        return Err(RootError::NotBracketed { lo, hi, flo, fhi });
    }
    let lo_negative = flo < 0.0 || (flo == 0.0 && fhi > 0.0);
    for _ in 0..iterations {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok((mid, mid));
        }
        if (fm < 0.0) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo, hi))
}

/// Expands `[lo, hi]` geometrically until `f` changes sign.
pub fn expand_bracket<F>(f: F, mut lo: f64, mut hi: f64, max_steps: usize) -> Option<(f64, f64)>
where
    F: Fn(f64) -> f64,
{
    let mut flo = f(lo);
    let mut fhi = f(hi);
    for _ in 0..max_steps {
        if flo.signum() != fhi.signum() || flo == 0.0 || fhi == 0.0 {
            return Some((lo, hi));
        }
        let width = hi - lo;
        if flo.abs() < fhi.abs() {
            lo -= width;
            flo = f(lo);
        } else {
            hi += width;
            fhi = f(hi);
        }
    }
    None
}
