use crate::{Error, Result};

/// Row-wise softmax of a `batch × classes` matrix, max-subtracted.
pub fn softmax(logits: &[f64], classes: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks_exact(classes) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        out.extend(exps.iter().map(|e| e / total));
    }
    out
}

/// Mean cross-entropy of two-class logits against labels in `{0, 1}`, and
/// its gradient `(softmax − onehot) / batch`.
pub fn softmax_cross_entropy(logits: &[f64], labels: &[u8]) -> Result<(f64, Vec<f64>)> {
    const CLASSES: usize = 2;
    let batch = labels.len();
    if batch == 0 || logits.len() != batch * CLASSES {
        return Err(Error::InvalidArgument(format!(
            "{} logits for a batch of {batch}",
            logits.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&l| l as usize >= CLASSES) {
        return Err(Error::InvalidArgument(format!("label {bad} outside {{0, 1}}")));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite logits".into()));
    }
    let mut loss = 0.0;
    let mut grad = softmax(logits, CLASSES);
    for (b, &label) in labels.iter().enumerate() {
        let row = &logits[b * CLASSES..(b + 1) * CLASSES];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        loss += log_sum - row[label as usize];
        grad[b * CLASSES + label as usize] -= 1.0;
    }
    let scale = 1.0 / batch as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok((loss * scale, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_cost_ln2() {
        let (loss, grad) = softmax_cross_entropy(&[0.0, 0.0], &[0]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(grad, vec![-0.5, 0.5]);
    }

    #[test]
    fn large_logits_do_not_overflow() {
        let (loss, grad) = softmax_cross_entropy(&[1000.0, 0.0], &[0]).unwrap();
        assert!(loss.is_finite() && loss.abs() < 1e-300);
        assert!(grad.iter().all(|g| g.is_finite()));
        let (loss, _) = softmax_cross_entropy(&[1000.0, 0.0], &[1]).unwrap();
        assert!((loss - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn bad_labels_are_rejected() {
        assert!(softmax_cross_entropy(&[0.0, 0.0], &[2]).is_err());
        assert!(softmax_cross_entropy(&[0.0, 0.0, 1.0], &[0]).is_err());
    }
}
