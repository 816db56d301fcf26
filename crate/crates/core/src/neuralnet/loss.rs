/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy of `softmax(logits)` against class `target`, with the
/// gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: &[f64], target: usize) -> (f64, Vec<f64>) {
    let mut probs = softmax(logits);
    let loss = -probs[target].max(f64::MIN_POSITIVE).ln();
    probs[target] -= 1.0;
    (loss, probs)
}

/// Squared error `(pred − target)²` with gradient `2(pred − target)`.
pub fn mse(pred: f64, target: f64) -> (f64, f64) {
    let diff = pred - target;
    (diff * diff, 2.0 * diff)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[1000.0, 999.0, -5.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p[0] > p[1] && p[1] > p[2]);
    }

    #[test]
    fn cross_entropy_decreases_as_logits_concentrate() {
        let mut previous = f64::INFINITY;
        for scale in 0..30 {
            let s = scale as f64;
            let (loss, _) = softmax_cross_entropy(&[0.0, s, 0.0, -s], 1);
            assert!(loss <= previous);
            previous = loss;
        }
        assert!(previous < 1e-10);
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_difference() {
        let logits = [0.3, -1.2, 2.0];
        let (_, grad) = softmax_cross_entropy(&logits, 2);
        for i in 0..3 {
            let h = 1e-6;
            let mut lp = logits;
            lp[i] += h;
            let mut lm = logits;
            lm[i] -= h;
            let fd = (softmax_cross_entropy(&lp, 2).0 - softmax_cross_entropy(&lm, 2).0) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-8);
        }
    }
}
