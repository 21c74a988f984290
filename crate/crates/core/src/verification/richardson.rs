use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RichardsonError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
}

/// Least-squares slope of `log(error)` against `log(h)`.
pub fn richardson_order(errors: &[f64], hs: &[f64]) -> Result<f64, RichardsonError> {
    if errors.len() != hs.len() {
        return Err(RichardsonError::DegenerateInput(format!(
            "{} errors for {} spacings",
            errors.len(),
            hs.len()
        )));
    }
    if errors.len() < 2 {
        return Err(RichardsonError::DegenerateInput("need at least two samples".into()));
    }
    if let Some(e) = errors.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(RichardsonError::DegenerateInput(format!("non-positive error {e}")));
    }
    if let Some(h) = hs.iter().find(|h| !(**h > 0.0 && h.is_finite())) {
        return Err(RichardsonError::DegenerateInput(format!("non-positive spacing {h}")));
    }
    let n = errors.len() as f64;
    let lx: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ly: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(RichardsonError::DegenerateInput("all spacings equal".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

/// Orders between consecutive samples.
pub fn pairwise_orders(errors: &[f64], hs: &[f64]) -> Vec<f64> {
    errors
        .windows(2)
        .zip(hs.windows(2))
        .map(|(e, h)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
        .collect()
}
