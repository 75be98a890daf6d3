use crate::error::{Error, Result};

/// Power-law fit `y ∝ x^exponent` by least squares in log-log coordinates.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FitResult {
    pub exponent: f64,
    /// Log of the prefactor.
    pub intercept: f64,
    pub stderr: f64,
    pub points_used: usize,
    /// Number of largest-x points kept, `None` when all were used.
    pub restriction: Option<usize>,
}

impl FitResult {
    pub fn predict(&self, x: f64) -> f64 {
        (self.intercept + self.exponent * x.ln()).exp()
    }
}

/// Fits `ys ∝ xs^α`. With `restrict_largest > 0` only that many points with
/// the largest `xs` enter the fit.
pub fn fit_scaling(xs: &[f64], ys: &[f64], restrict_largest: usize) -> Result<FitResult> {
    if xs.len() != ys.len() {
        return Err(Error::Dimension { expected: xs.len(), got: ys.len() });
    }
    if let Some(y) = ys.iter().find(|y| !(**y > 0.0) || !y.is_finite()) {
        return Err(Error::InvalidParam(format!("power-law fit needs positive finite values, got {y}")));
    }
    if let Some(x) = xs.iter().find(|x| !(**x > 0.0) || !x.is_finite()) {
        return Err(Error::InvalidParam(format!("power-law fit needs positive abscissae, got {x}")));
    }
    let mut pts: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let restriction = (restrict_largest > 0 && restrict_largest < pts.len()).then_some(restrict_largest);
    if let Some(k) = restriction {
        pts.drain(..pts.len() - k);
    }
    let m = pts.len();
    if m < 2 {
        return Err(Error::InvalidParam(format!("power-law fit needs at least two points, got {m}")));
    }
    let lx: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / m as f64;
    let my = ly.iter().sum::<f64>() / m as f64;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParam("power-law fit needs at least two distinct abscissae".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let stderr = if m > 2 {
        let ssr: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - exponent * x).powi(2)).sum();
        (ssr / (m - 2) as f64 / sxx).sqrt()
    } else {
        0.0
    };
    Ok(FitResult { exponent, intercept, stderr, points_used: m, restriction })
}
