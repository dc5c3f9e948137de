use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("empty input")]
    EmptyInput,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("rank correlation undefined for constant input")]
    ConstantInput,
}

pub fn mean(xs: &[f64]) -> Result<f64, StatsError> {
    if xs.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    Ok(xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Area under the learning curve: the mean of all episodic rewards so far.
pub fn auc(rewards: &[f64]) -> Result<f64, StatsError> {
    mean(rewards)
}

/// Sample standard deviation; zero for a single value.
pub fn sample_std(xs: &[f64]) -> Result<f64, StatsError> {
    let m = mean(xs)?;
    if xs.len() == 1 {
        return Ok(0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    Ok((ss / (xs.len() - 1) as f64).sqrt())
}

/// 1-based ranks with ties sharing the average of their positions.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::LengthMismatch(xs.len(), ys.len()));
    }
    let (mx, my) = (mean(xs)?, mean(ys)?);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ConstantInput);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    pearson(&average_ranks(xs), &average_ranks(ys))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Average rank of each element over every permutation that sorts the
    /// input, found by trying all orderings.
    fn enumerated_ranks(xs: &[f64]) -> Vec<f64> {
        fn permute(k: usize, perm: &mut Vec<usize>, xs: &[f64], sums: &mut [f64], count: &mut usize) {
            if k == perm.len() {
                if perm.windows(2).all(|w| xs[w[0]] <= xs[w[1]]) {
                    for (pos, &i) in perm.iter().enumerate() {
                        sums[i] += (pos + 1) as f64;
                    }
                    *count += 1;
                }
                return;
            }
            for i in k..perm.len() {
                perm.swap(k, i);
                permute(k + 1, perm, xs, sums, count);
                perm.swap(k, i);
            }
        }
        let mut sums = vec![0.0; xs.len()];
        let mut count = 0;
        permute(0, &mut (0..xs.len()).collect(), xs, &mut sums, &mut count);
        sums.into_iter().map(|s| s / count as f64).collect()
    }

    #[test]
    fn auc_is_mean() {
        assert_eq!(auc(&[1.0, 2.0, 3.0]).unwrap(), 2.0);
        assert_eq!(auc(&[]), Err(StatsError::EmptyInput));
    }

    #[test]
    fn std_cases() {
        assert_eq!(sample_std(&[4.0]).unwrap(), 0.0);
        assert!((sample_std(&[1.0, 2.0, 3.0, 4.0]).unwrap() - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn spearman_monotone() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[30.0, 20.0, 10.0]).unwrap(), -1.0);
    }

    #[test]
    fn spearman_with_ties_matches_enumeration() {
        let xs = [1.0, 2.0, 2.0, 4.0];
        let ys = [1.0, 3.0, 2.0, 4.0];
        assert_eq!(average_ranks(&xs), enumerated_ranks(&xs));
        assert_eq!(average_ranks(&ys), enumerated_ranks(&ys));
        let expected = pearson(&enumerated_ranks(&xs), &enumerated_ranks(&ys)).unwrap();
        let got = spearman(&xs, &ys).unwrap();
        assert!((got - expected).abs() < 1e-15);
        // Ranks [1, 2.5, 2.5, 4] and [1, 3, 2, 4].
        assert!((got - 0.9486832980505138).abs() < 1e-12);
    }

    #[test]
    fn spearman_errors() {
        assert_eq!(spearman(&[1.0], &[1.0, 2.0]), Err(StatsError::LengthMismatch(1, 2)));
        assert_eq!(spearman(&[], &[]), Err(StatsError::EmptyInput));
        assert_eq!(spearman(&[1.0, 1.0], &[1.0, 2.0]), Err(StatsError::ConstantInput));
    }
}
