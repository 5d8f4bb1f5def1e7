use super::ScoringError;

const MONOTONE_SLACK: f64 = 1e-12;

/// Trapezoidal CRPS of a CDF against `y` on `[lower, upper]`.
///
/// The grid has `n_grid` equally spaced nodes with `y` inserted as an extra node, so a
/// CDF that steps exactly at `y` integrates to zero.
pub fn crps_numeric(
    cdf: impl Fn(f64) -> f64,
    y: f64,
    lower: f64,
    upper: f64,
    n_grid: usize,
) -> Result<f64, ScoringError> {
    if !(lower.is_finite() && upper.is_finite() && lower < upper) || n_grid < 2 {
        return Err(ScoringError::InvalidDomain);
    }
    if !(lower..=upper).contains(&y) {
        return Err(ScoringError::InvalidDomain);
    }
    let step = (upper - lower) / (n_grid - 1) as f64;
    let mut nodes: Vec<f64> = (0..n_grid).map(|i| lower + step * i as f64).collect();
    nodes[n_grid - 1] = upper;
    let at = nodes.partition_point(|&x| x < y);
    if nodes.get(at) != Some(&y) {
        nodes.insert(at, y);
    }

    let mut prev_f = f64::NEG_INFINITY;
    let mut total = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for &x in &nodes {
        let f = cdf(x);
        if !f.is_finite() {
            return Err(ScoringError::NonFinite);
        }
        if f < prev_f - MONOTONE_SLACK {
            return Err(ScoringError::NonMonotoneCdf { x });
        }
        prev_f = f;
        let indicator = if x >= y { 1.0 } else { 0.0 };
        let g = (f - indicator).powi(2);
        if let Some((px, pg)) = prev {
            total += 0.5 * (x - px) * (g + pg);
        }
        prev = Some((x, g));
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(x: f64) -> f64 {
        x.clamp(0.0, 1.0)
    }

    #[test]
    fn uniform_at_half() {
        let v = crps_numeric(uniform, 0.5, 0.0, 1.0, 2001).unwrap();
        assert!((v - 1.0 / 12.0).abs() < 1e-6, "{v}");
    }

    #[test]
    fn uniform_at_zero() {
        let v = crps_numeric(uniform, 0.0, 0.0, 1.0, 2001).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-6, "{v}");
    }

    #[test]
    fn step_at_truth_is_zero() {
        let y = 0.4271;
        let v = crps_numeric(|x| if x >= y { 1.0 } else { 0.0 }, y, -1.0, 2.0, 101).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn decreasing_cdf_rejected() {
        assert!(matches!(
            crps_numeric(|x| 1.0 - x, 0.5, 0.0, 1.0, 11),
            Err(ScoringError::NonMonotoneCdf { .. })
        ));
        assert!(crps_numeric(uniform, 2.0, 0.0, 1.0, 11).is_err());
    }
}
