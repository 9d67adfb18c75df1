//! Linear classification head and softmax cross-entropy.

use super::params::HeadParams;
use crate::error::{Error, Result};

pub fn head_forward(h: &[f64], head: &HeadParams) -> Result<Vec<f64>> {
    if h.len() != head.w.cols || head.b.len() != head.w.rows {
        return Err(Error::Shape(format!(
            "head is {}×{}, embedding has {} entries",
            head.w.rows,
            head.w.cols,
            h.len()
        )));
    }
    let mut logits = head.b.clone();
    head.w.mul_vec_add(h, &mut logits);
    Ok(logits)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Returns `-log softmax(logits)[label]` and its gradient w.r.t. the logits.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::Argument(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::Numeric("non-finite logits".into()));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
    let loss = log_sum - logits[label];
    let mut grad = softmax(logits);
    grad[label] -= 1.0;
    Ok((loss, grad))
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::linalg::Mat;

    #[test]
    fn head_examples() {
        let head = HeadParams {
            w: Mat::zeros(3, 2),
            b: vec![1.0, 2.0, 3.0],
        };
        assert_eq!(head_forward(&[5.0, -1.0], &head).unwrap(), vec![1.0, 2.0, 3.0]);
        let id = HeadParams {
            w: Mat::identity(3),
            b: vec![0.0; 3],
        };
        assert_eq!(head_forward(&[0.5, -2.0, 7.0], &id).unwrap(), vec![0.5, -2.0, 7.0]);

        let w = Mat::from_fn(2, 3, |i, j| (i as f64 + 1.0) * (j as f64 - 1.0));
        let head = HeadParams { w, b: vec![0.25, -0.5] };
        let h = [1.5, -2.0, 4.0];
        let got = head_forward(&h, &head).unwrap();
        // row 0 = (-1, 0, 1), row 1 = (-2, 0, 2)
        assert!((got[0] - (0.25 + -1.5 + 4.0)).abs() < 1e-12);
        assert!((got[1] - (-0.5 + -3.0 + 8.0)).abs() < 1e-12);
        assert!(head_forward(&[1.0], &head).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        let (loss, g) = cross_entropy(&[0.3, 0.3, 0.3], 1).unwrap();
        assert!((loss - 3f64.ln()).abs() < 1e-12);
        assert!((loss - 1.098612).abs() < 1e-6);
        assert!(g.iter().sum::<f64>().abs() < 1e-15);

        let (loss, g) = cross_entropy(&[1000.0, 0.0, 0.0], 0).unwrap();
        assert!(loss.abs() < 1e-12);
        assert!(g.iter().all(|v| v.is_finite()));

        let (_, g) = cross_entropy(&[2.0, -7.5, 0.1, 30.0], 2).unwrap();
        assert!(g.iter().sum::<f64>().abs() < 1e-12);

        assert!(matches!(cross_entropy(&[f64::NAN, 0.0], 0), Err(Error::Numeric(_))));
        assert!(cross_entropy(&[0.0, 0.0], 2).is_err());
    }
}
