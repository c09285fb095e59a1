//! Radial clipping `q_r(x) = r x / (r ∨ |x|)`.

use crate::error::{Error, Result};

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Writes `q_r(x)` into `out`. The output norm never exceeds `r` in floating
/// point, and `x` is copied bit-for-bit when `|x| <= r`.
pub fn truncate_into(x: &[f64], r: f64, out: &mut [f64]) -> Result<()> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::Domain(format!("truncation radius must be positive, got {r}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("truncation of a non-finite vector".into()));
    }
    let n = norm(x);
    if n <= r {
        out.copy_from_slice(x);
        return Ok(());
    }
    let scale = r / n;
    for (o, v) in out.iter_mut().zip(x) {
        *o = v * scale;
    }
    // rounding can leave the norm an ulp above r
    while norm(out) > r {
        for o in out.iter_mut() {
            *o *= 1.0 - f64::EPSILON;
        }
    }
    Ok(())
}

pub fn truncate_qr(x: &[f64], r: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; x.len()];
    truncate_into(x, r, &mut out)?;
    Ok(out)
}
