use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use super::ScoringError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTestResult {
    pub mean_difference: f64,
    pub t_statistic: f64,
    /// Lower-tail probability: evidence that `a` scores below `b`.
    pub p_value_one_sided: f64,
    pub n: usize,
}

/// One-sided paired t-test of `mean(a - b) < 0`.
pub fn paired_t_test_one_sided(a: &[f64], b: &[f64]) -> Result<PairedTestResult, ScoringError> {
    if a.len() != b.len() {
        return Err(ScoringError::UnequalLengths(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(ScoringError::InsufficientData(n));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(ScoringError::NonFinite);
    }
    if d.iter().all(|&v| v == d[0]) {
        return Err(ScoringError::DegenerateSample);
    }
    let nf = n as f64;
    let mean = d.iter().sum::<f64>() / nf;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let sd = var.sqrt();
    if sd == 0.0 {
        return Err(ScoringError::DegenerateSample);
    }
    let t = mean / (sd / nf.sqrt());
    Ok(PairedTestResult {
        mean_difference: mean,
        t_statistic: t,
        p_value_one_sided: student_t_cdf(t, nf - 1.0),
        n,
    })
}

/// CDF of Student's t with `df` degrees of freedom, by quadrature of the density.
///
/// The substitution `x = tan(theta)` maps the real line onto a bounded interval, and
/// the tail is integrated directly so small lower-tail probabilities keep their
/// relative accuracy.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    if t.is_nan() || !(df > 0.0) {
        return f64::NAN;
    }
    if t == f64::INFINITY {
        return 1.0;
    }
    if t == f64::NEG_INFINITY {
        return 0.0;
    }
    let log_norm = ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0) - 0.5 * (df * PI).ln();
    let norm = log_norm.exp();
    let density = |theta: f64| {
        let (s, c) = theta.sin_cos();
        if c <= 0.0 {
            return if df == 1.0 { norm } else { 0.0 };
        }
        let base = c * c + s * s / df;
        norm * base.powf(-(df + 1.0) / 2.0) * c.powf(df - 1.0)
    };
    let tail = adaptive_simpson(&density, t.abs().atan(), FRAC_PI_2, 1e-15);
    if t < 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, eps: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, eps, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    eps: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * eps {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, eps / 2.0, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, eps / 2.0, depth - 1)
}

/// Lanczos approximation (g = 7, n = 9), accurate to about 1e-15 for x > 0.
fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection formula.
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    let t = x + G + 0.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, StudentsT};

    #[test]
    fn textbook_example() {
        let r = paired_t_test_one_sided(&[-1.0, -2.0, -3.0], &[0.0; 3]).unwrap();
        assert_eq!(r.mean_difference, -2.0);
        assert!((r.t_statistic + 2.0 * 3f64.sqrt()).abs() < 1e-12);
        assert!((r.t_statistic + 3.464).abs() < 1e-3);
        assert_eq!(r.n, 3);
    }

    #[test]
    fn zero_mean_gives_half() {
        let r = paired_t_test_one_sided(&[1.0, -1.0, 0.0], &[0.0; 3]).unwrap();
        assert_eq!(r.t_statistic, 0.0);
        assert!((r.p_value_one_sided - 0.5).abs() < 1e-9);
    }

    #[test]
    fn degenerate_and_short_samples() {
        assert_eq!(
            paired_t_test_one_sided(&[5.0; 3], &[0.0; 3]),
            Err(ScoringError::DegenerateSample)
        );
        let a = [0.3, 1.7, 2.2];
        assert_eq!(paired_t_test_one_sided(&a, &a), Err(ScoringError::DegenerateSample));
        assert_eq!(
            paired_t_test_one_sided(&[1.0], &[0.0]),
            Err(ScoringError::InsufficientData(1))
        );
        assert!(paired_t_test_one_sided(&[1.0, 2.0], &[0.0]).is_err());
    }

    #[test]
    fn cauchy_case_is_closed_form() {
        for t in [-30.0, -2.0, -0.5, 0.0, 0.7, 4.0] {
            let exact = 0.5 + f64::atan(t) / PI;
            assert!((student_t_cdf(t, 1.0) - exact).abs() < 1e-12, "t = {t}");
        }
    }

    #[test]
    fn agrees_with_statrs() {
        for df in [1.0, 2.0, 3.0, 5.0, 9.0, 29.0, 120.0] {
            let reference = StudentsT::new(0.0, 1.0, df).unwrap();
            for t in [-12.0, -3.464, -2.13, -1.0, -0.1, 0.0, 0.4, 1.9, 6.0] {
                let ours = student_t_cdf(t, df);
                let theirs = reference.cdf(t);
                assert!((ours - theirs).abs() < 1e-9, "df={df} t={t}: {ours} vs {theirs}");
            }
        }
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!(ln_gamma(1.0).abs() < 1e-14);
        assert!((ln_gamma(0.5) - PI.sqrt().ln()).abs() < 1e-14);
        assert!((ln_gamma(10.0) - 362_880f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn p_values_decrease_with_more_negative_t() {
        let mut last = 1.0;
        for i in 0..60 {
            let t = -0.25 * i as f64;
            let p = student_t_cdf(t, 5.0);
            assert!(p <= last);
            last = p;
        }
    }
}
