//! Noise whose channel correlation favours the common mode.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Channel noise `(ε_A, ε_B)` built from independent mode noises
/// `ε_u ~ N(0, 1−g)` and `ε_v ~ N(0, 1+g)`.
///
/// Each channel keeps unit variance and `Cov(ε_A, ε_B) = −g`.
pub fn mode_shaped_noise<R: Rng + ?Sized>(g: f64, dim: usize, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(0.0..1.0).contains(&g) {
        return Err(Error::invalid(format!("mode-shaped noise needs 0 <= g < 1, got {g}")));
    }
    let (su, sv) = ((1.0 - g).sqrt(), (1.0 + g).sqrt());
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut a = Vec::with_capacity(dim);
    let mut b = Vec::with_capacity(dim);
    for _ in 0..dim {
        let u = su * rng.sample::<f64, _>(StandardNormal);
        let v = sv * rng.sample::<f64, _>(StandardNormal);
        a.push(r * (u + v));
        b.push(r * (u - v));
    }
    Ok((a, b))
}
