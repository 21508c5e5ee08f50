//! Curve metrics: cosine stabilization, crossing times, ghosting, Wilson
//! intervals and baseline-corrected agreement.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::sampler::dot;

/// Mean cosine between each state of a batch of series and that series'
/// last state.
///
/// `series[b][i]` is the vector of path `b` at time index `i`. Zero vectors
/// are left out of the mean at that index; an index with no usable pair is NaN.
pub fn cosine_to_final(series: &[Vec<Vec<f64>>]) -> Result<Vec<f64>> {
    let Some(len) = series.first().map(Vec::len) else {
        return Err(Error::invalid("cosine curve needs at least one path"));
    };
    if len == 0 || series.iter().any(|s| s.len() != len) {
        return Err(Error::invalid("paths must be non-empty and of equal length"));
    }
    let mut sum = vec![0.0; len];
    let mut count = vec![0usize; len];
    for path in series {
        let last = &path[len - 1];
        let nl = dot(last, last).sqrt();
        if nl == 0.0 {
            continue;
        }
        for (i, v) in path.iter().enumerate() {
            let nv = dot(v, v).sqrt();
            if nv > 0.0 {
                sum[i] += (dot(v, last) / (nv * nl)).clamp(-1.0, 1.0);
                count[i] += 1;
            }
        }
    }
    Ok(sum.iter().zip(&count).map(|(s, &c)| if c == 0 { f64::NAN } else { s / c as f64 }).collect())
}

/// `max{t : curve(t) ≥ τ}`, linearly interpolated towards the neighbouring
/// later-noise point where the curve is below `τ`. `None` if never reached.
///
/// `times` may be in either order.
pub fn last_crossing(times: &[f64], curve: &[f64], tau: f64) -> Result<Option<f64>> {
    if times.len() != curve.len() || times.is_empty() {
        return Err(Error::invalid("times and curve must be non-empty and aligned"));
    }
    let mut idx: Vec<usize> = (0..times.len()).collect();
    idx.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let Some(pos) = idx.iter().rposition(|&i| curve[i] >= tau) else {
        return Ok(None);
    };
    let i = idx[pos];
    if pos + 1 == idx.len() {
        return Ok(Some(times[i]));
    }
    let j = idx[pos + 1];
    let (c0, c1) = (curve[i], curve[j]);
    if !c1.is_finite() || c0 == c1 {
        return Ok(Some(times[i]));
    }
    let w = (c0 - tau) / (c0 - c1);
    Ok(Some(times[i] + w * (times[j] - times[i])))
}

/// Crossing times of several thresholds.
pub fn crossing_times(times: &[f64], curve: &[f64], taus: &[f64]) -> Result<Vec<Option<f64>>> {
    taus.iter().map(|&tau| last_crossing(times, curve, tau)).collect()
}

/// `Δt(τ) = t_v(τ) − t_u(τ)`; `None` when either curve is censored.
pub fn sync_gap(times: &[f64], cos_u: &[f64], cos_v: &[f64], tau: f64) -> Result<Option<f64>> {
    let tu = last_crossing(times, cos_u, tau)?;
    let tv = last_crossing(times, cos_v, tau)?;
    Ok(tu.zip(tv).map(|(u, v)| v - u))
}

/// `GI(t) = 2 c_u − c_A − c_B`.
pub fn ghosting_index(c_u: &[f64], c_a: &[f64], c_b: &[f64]) -> Result<Vec<f64>> {
    if c_u.len() != c_a.len() || c_u.len() != c_b.len() {
        return Err(Error::invalid("ghosting curves are on different grids"));
    }
    Ok(c_u.iter().zip(c_a).zip(c_b).map(|((u, a), b)| 2.0 * u - a - b).collect())
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: u64, n: u64, conf: f64) -> Result<(f64, f64)> {
    if n == 0 || k > n {
        return Err(Error::invalid(format!("need 0 <= k <= n and n >= 1 (k = {k}, n = {n})")));
    }
    if !(conf > 0.0 && conf < 1.0) {
        return Err(Error::invalid(format!("confidence level must lie in (0, 1), got {conf}")));
    }
    let z = Normal::standard().inverse_cdf(0.5 + 0.5 * conf);
    let n_f = n as f64;
    let p = k as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let centre = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    let mut lo = (centre - half).max(0.0);
    let mut hi = (centre + half).min(1.0);
    if k == 0 {
        lo = 0.0;
    }
    if k == n {
        hi = 1.0;
    }
    Ok((lo, hi))
}

/// `(φ − φ_indep) / (1 − φ_indep)`.
pub fn excess(phi: f64, baseline: f64) -> f64 {
    (phi - baseline) / (1.0 - baseline)
}
