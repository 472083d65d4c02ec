use crate::error::{Error, Result};

/// Default Savitzky–Golay window, samples.
pub const DEFAULT_WINDOW: usize = 11;

/// Derivative of a uniformly sampled series by local quadratic least squares
/// (Savitzky–Golay, order 2). Interior points use a centred window; the
/// first and last `window / 2` points reuse the nearest full window and
/// evaluate the fitted polynomial's slope at their own offset.
pub fn smooth_differentiate(series: &[f64], dt: f64, window: usize) -> Result<Vec<f64>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Input(format!("sampling interval must be positive, got {dt}")));
    }
    if window < 3 || window % 2 == 0 {
        return Err(Error::Input(format!("window must be odd and at least 3, got {window}")));
    }
    if series.len() <= window {
        return Err(Error::Input(format!(
            "series of {} samples is too short for a {window}-sample window",
            series.len()
        )));
    }
    let n = series.len();
    let half = window / 2;
    // Weights for the slope at offset x (in samples) from the window centre.
    // With centred abscissae the normal equations decouple, so the slope of
    // c0 + c1·x + c2·x² at x is c1 + 2·c2·x.
    let s2: f64 = (-(half as i64)..=half as i64).map(|j| (j * j) as f64).sum();
    let s4: f64 = (-(half as i64)..=half as i64).map(|j| (j * j * j * j) as f64).sum();
    let w = window as f64;
    let det = w * s4 - s2 * s2;
    let slope_weights = |x: f64| -> Vec<f64> {
        (-(half as i64)..=half as i64)
            .map(|j| {
                let j = j as f64;
                let c1 = j / s2;
                let c2 = (w * j * j - s2) / det;
                c1 + 2.0 * x * c2
            })
            .collect()
    };
    let centre = slope_weights(0.0);
    let mut out = vec![0.0; n];
    for (i, slot) in out.iter_mut().enumerate() {
        let (start, x, owned);
        let weights: &[f64] = if i < half {
            start = 0;
            x = i as f64 - half as f64;
            owned = slope_weights(x);
            &owned
        } else if i + half >= n {
            start = n - window;
            x = (i - start) as f64 - half as f64;
            owned = slope_weights(x);
            &owned
        } else {
            start = i - half;
            &centre
        };
        let d: f64 = weights.iter().zip(&series[start..start + window]).map(|(a, b)| a * b).sum();
        *slot = d / dt;
    }
    Ok(out)
}
