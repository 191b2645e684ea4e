//! Order-independent ensemble reductions and least-squares helpers.

use crate::rng::{Purpose, Stream};

/// Pairwise (cascade) summation; the result depends only on the order of
/// `xs`, never on how work was scheduled.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    pairwise_sum(&sq) / (xs.len() - 1) as f64
}

/// Standard error of the mean.
pub fn std_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Ordinary least squares `y ~ intercept + slope x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub r_squared: f64,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> LineFit {
    let mx = mean(xs);
    let my = mean(ys);
    let sxy: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).collect();
    let sxx: Vec<f64> = xs.iter().map(|x| (x - mx) * (x - mx)).collect();
    let syy: Vec<f64> = ys.iter().map(|y| (y - my) * (y - my)).collect();
    let (sxy, sxx, syy) = (pairwise_sum(&sxy), pairwise_sum(&sxx), pairwise_sum(&syy));
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    LineFit {
        intercept,
        slope,
        r_squared,
    }
}

/// Bootstrap standard error of `statistic` over resamples of `0..n`.
///
/// The statistic receives the resampled indices. Resample `b` draws from
/// the `(seed, Bootstrap, b)` stream, so the estimate is reproducible.
pub fn bootstrap_se<F>(n: usize, resamples: usize, seed: u64, statistic: F) -> f64
where
    F: Fn(&[usize]) -> f64,
{
    if n < 2 || resamples < 2 {
        return 0.0;
    }
    let mut idx = vec![0usize; n];
    let values: Vec<f64> = (0..resamples)
        .map(|b| {
            let mut s = Stream::new(seed, Purpose::Bootstrap, b as u64);
            for slot in idx.iter_mut() {
                *slot = s.below(n);
            }
            statistic(&idx)
        })
        .collect();
    variance(&values).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let xs: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&xs), 500_500.0);
    }

    #[test]
    fn line_fit_recovers_exact_line() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x).collect();
        let f = fit_line(&xs, &ys);
        assert!((f.slope + 0.5).abs() < 1e-14);
        assert!((f.intercept - 2.0).abs() < 1e-14);
        assert!((f.r_squared - 1.0).abs() < 1e-14);
    }

    #[test]
    fn bootstrap_se_of_mean_is_close_to_analytic() {
        let mut s = Stream::new(2, Purpose::Aux(3), 0);
        let xs = s.normal_vec(400);
        let se = bootstrap_se(xs.len(), 1000, 5, |idx| idx.iter().map(|&i| xs[i]).sum::<f64>() / idx.len() as f64);
        let analytic = std_error(&xs);
        assert!((se / analytic - 1.0).abs() < 0.15, "{se} vs {analytic}");
    }
}
