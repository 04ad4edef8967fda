use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Errors above this are treated as pre-asymptotic.
pub const WINDOW_MAX: f64 = 1.0;
/// Errors below this are treated as round-off.
pub const WINDOW_MIN: f64 = 1e-12;

/// Least-squares fit of `log2 error = intercept - slope * log2 M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Step counts inside the window.
    pub used: Vec<usize>,
    /// Step counts dropped by the window.
    pub excluded: Vec<usize>,
}

/// Fits over the default window `[WINDOW_MIN, WINDOW_MAX]`.
pub fn fit_order(points: &[(usize, f64)]) -> Result<OrderFit> {
    fit_order_window(points, WINDOW_MIN, WINDOW_MAX)
}

/// Fits `(M, error)` pairs whose error is finite and within `[lo, hi]`.
pub fn fit_order_window(points: &[(usize, f64)], lo: f64, hi: f64) -> Result<OrderFit> {
    let (inside, outside): (Vec<_>, Vec<_>) = points
        .iter()
        .partition(|(m, e)| *m > 0 && e.is_finite() && *e >= lo && *e <= hi);
    let excluded: Vec<usize> = outside.iter().map(|(m, _)| *m).collect();
    if inside.len() < 3 {
        return Err(Error::Fit(format!(
            "{} usable points, need 3 (excluded M = {excluded:?})",
            inside.len()
        )));
    }
    let xs: Vec<f64> = inside.iter().map(|(m, _)| (*m as f64).log2()).collect();
    let ys: Vec<f64> = inside.iter().map(|(_, e)| e.log2()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all usable points share one M".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Ok(OrderFit {
        slope: -b,
        intercept: a,
        r_squared,
        used: inside.iter().map(|(m, _)| *m).collect(),
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let pts: Vec<(usize, f64)> = [10, 20, 40, 80]
            .iter()
            .map(|&m| (m, 3.0 / (m * m) as f64))
            .collect();
        let fit = fit_order(&pts).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-6);
        assert!(fit.r_squared > 0.999_999);
        assert!((fit.intercept - 3f64.log2()).abs() < 1e-9);
    }

    #[test]
    fn divergent_entries_are_excluded() {
        let pts = vec![
            (5, f64::NAN),
            (10, 1e-2),
            (20, 2.5e-3),
            (40, 6.25e-4),
            (80, 1e-14),
            (160, 5.0),
        ];
        let fit = fit_order(&pts).unwrap();
        assert_eq!(fit.used, [10, 20, 40]);
        assert_eq!(fit.excluded, [5, 80, 160]);
        assert!((fit.slope - 2.0).abs() < 1e-9);
    }

    #[test]
    fn too_few_points_names_exclusions() {
        let err = fit_order(&[(10, 1e-2), (20, f64::INFINITY), (40, 1e-3)]).unwrap_err();
        assert!(err.to_string().contains("[20]"), "{err}");
    }
}
