use super::{
    fit_regressor_predict, mean, mix_seed, Fallback, ImputeError, ImputerConfig, SliceLog,
    TargetQuantileSlice,
};

/// Step one of chained equations: every missing cell takes its column's observed mean.
pub fn initialize_with_column_means(
    slice: &TargetQuantileSlice,
) -> Result<TargetQuantileSlice, ImputeError> {
    super::fill_columns(slice, mean)
}

/// Iterative column-by-column regression imputation.
///
/// After mean initialization, columns are visited in order of ascending missing count
/// (ties by index). The visited column's model is fitted on the rows where that column
/// was observed, using the current values of every other column, and predicts the
/// missing cells. Sweeps repeat until the largest relative change of an imputed cell,
/// `|new - old| / (|old| + 1)`, falls below `rel_tolerance`, or `max_iterations` sweeps
/// have run. Fits that fail, or whose predictors are all constant, fall back to the
/// column mean and are logged.
pub fn chained_equations(
    slice: &TargetQuantileSlice,
    config: &ImputerConfig,
) -> Result<(TargetQuantileSlice, SliceLog), ImputeError> {
    if !config.technique.is_regression() {
        return Err(ImputeError::NotARegression(config.technique));
    }
    config.validate()?;
    let mut current = initialize_with_column_means(slice)?;
    let n_rows = slice.n_rows();
    let n_cols = slice.n_cols();
    let mut log = SliceLog::default();

    let missing: Vec<Vec<usize>> = (0..n_cols)
        .map(|c| (0..n_rows).filter(|&r| !slice.is_observed(r, c)).collect())
        .collect();
    let mut order: Vec<usize> = (0..n_cols).filter(|&c| !missing[c].is_empty()).collect();
    order.sort_by_key(|&c| (missing[c].len(), c));
    if order.is_empty() {
        log.converged = true;
        return Ok((current, log));
    }
    if n_cols < 2 {
        // No other columns to regress on; the mean initialization is final.
        log.converged = true;
        log.fallbacks.push(Fallback {
            sweep: 0,
            column: 0,
            reason: "no predictor columns".into(),
        });
        return Ok((current, log));
    }

    for sweep in 1..=config.max_iterations {
        let before = current.q.clone();
        for &col in &order {
            let train: Vec<usize> = (0..n_rows).filter(|&r| slice.is_observed(r, col)).collect();
            let features = |r: usize| -> Vec<f64> {
                current.q[r]
                    .iter()
                    .enumerate()
                    .filter(|&(c, _)| c != col)
                    .map(|(_, &v)| v)
                    .collect()
            };
            let x: Vec<Vec<f64>> = train.iter().map(|&r| features(r)).collect();
            let y: Vec<f64> = train.iter().map(|&r| current.q[r][col]).collect();
            let x_query: Vec<Vec<f64>> = missing[col].iter().map(|&r| features(r)).collect();

            let column_mean = mean(&y).ok_or(ImputeError::CannotImpute)?;
            let predictions = if constant_columns(&x) {
                log.fallbacks.push(Fallback {
                    sweep,
                    column: col,
                    reason: "zero-variance predictors".into(),
                });
                vec![column_mean; x_query.len()]
            } else {
                let cfg = ImputerConfig {
                    seed: mix_seed(config.seed, (sweep as u64) << 32 | col as u64),
                    ..config.clone()
                };
                match fit_regressor_predict(config.technique, &x, &y, &x_query, &cfg) {
                    Ok(p) => p,
                    Err(e) => {
                        log.fallbacks.push(Fallback {
                            sweep,
                            column: col,
                            reason: e.to_string(),
                        });
                        vec![column_mean; x_query.len()]
                    }
                }
            };
            for (&r, v) in missing[col].iter().zip(predictions) {
                current.q[r][col] = v;
            }
        }
        log.sweeps = sweep;

        let change = order
            .iter()
            .flat_map(|&c| missing[c].iter().map(move |&r| (r, c)))
            .map(|(r, c)| (current.q[r][c] - before[r][c]).abs() / (before[r][c].abs() + 1.0))
            .fold(0.0, f64::max);
        if change < config.rel_tolerance {
            log.converged = true;
            break;
        }
    }
    Ok((current, log))
}

fn constant_columns(x: &[Vec<f64>]) -> bool {
    let Some(first) = x.first() else {
        return true;
    };
    (0..first.len()).all(|c| x.iter().all(|r| r[c] == first[c]))
}
