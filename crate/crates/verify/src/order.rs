//! Observed order of accuracy from refinement studies.

use crate::VerifyError;

/// Least-squares slope of `log e` against `log h`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrderFit {
    pub order: f64,
    /// Some error failed to decrease under refinement (superconvergence or
    /// round-off noise); the slope is still reported.
    pub flagged: bool,
}

/// Fits `e ≈ C hᵖ` to `(h, e)` pairs.
pub fn observed_order(data: &[(f64, f64)]) -> Result<OrderFit, VerifyError> {
    if data.len() < 2 {
        return Err(VerifyError::Input(format!("need at least two (h, e) pairs, got {}", data.len())));
    }
    if data.iter().any(|&(h, _)| !(h > 0.0 && h.is_finite())) {
        return Err(VerifyError::Input("spacings must be positive".into()));
    }
    let mut sorted = data.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let flagged = sorted.iter().any(|&(_, e)| !(e > 0.0 && e.is_finite())) || sorted.windows(2).any(|w| w[1].1 >= w[0].1);
    let pts: Vec<(f64, f64)> = sorted
        .iter()
        .filter(|(_, e)| *e > 0.0 && e.is_finite())
        .map(|&(h, e)| (h.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return Ok(OrderFit { order: f64::NAN, flagged: true });
    }
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(VerifyError::Input("all spacings are equal".into()));
    }
    Ok(OrderFit { order: sxy / sxx, flagged })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fit(p: f64, c: f64) -> OrderFit {
        let d: Vec<_> = [0.1, 0.05, 0.025].iter().map(|&h: &f64| (h, c * h.powf(p))).collect();
        observed_order(&d).unwrap()
    }

    #[test]
    fn exact_power_laws() {
        assert!((fit(2.0, 1.0).order - 2.0).abs() < 1e-12);
        assert!((fit(1.0, 1.0).order - 1.0).abs() < 1e-12);
        assert!((fit(1.5, 3.0).order - 1.5).abs() < 1e-12);
        assert!(!fit(2.0, 1.0).flagged);
    }

    #[test]
    fn non_decreasing_error_is_flagged() {
        let f = observed_order(&[(0.1, 1e-3), (0.05, 2e-3)]).unwrap();
        assert!(f.flagged && f.order < 0.0);
        assert!(observed_order(&[(0.1, 0.0), (0.05, 0.0)]).unwrap().flagged);
        assert!(observed_order(&[(0.1, 1.0)]).is_err());
    }
}
