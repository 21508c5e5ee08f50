//! Bracketed scalar root finding.

use crate::error::{Error, Result};

pub const MAX_BISECTIONS: usize = 200;

/// Bisection on `[lo, hi]` where `f(lo)` and `f(hi)` have opposite signs.
///
/// Stops when the bracket stops shrinking in floating point, when
/// `|f| < ftol`, or after `max_iter` halvings.
pub fn bisect<F>(mut f: F, lo: f64, hi: f64, ftol: f64, max_iter: usize) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (mut a, mut b) = (lo, hi);
    let mut fa = f(a)?;
    let fb = f(b)?;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() || !fa.is_finite() || !fb.is_finite() {
        return Err(Error::NoBracket { lo, hi });
    }
    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m)?;
        if fm == 0.0 || fm.abs() < ftol {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}
