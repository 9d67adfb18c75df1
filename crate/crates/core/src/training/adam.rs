//! Adam with bias correction.

use crate::error::{Error, Result};
use crate::model::{Gradients, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates, one buffer per trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let shapes: Vec<usize> = params.trainable().iter().map(|(_, t)| t.len()).collect();
        Self {
            step: 0,
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }
}

/// One update. Gradients are checked for finiteness before anything is
/// modified, so a failed step leaves parameters and state untouched.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &Gradients,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    let grad_tensors = grads.tensors();
    if grad_tensors.len() != state.first.len() {
        return Err(Error::Shape("gradient layout differs from optimizer state".into()));
    }
    for (name, g) in &grad_tensors {
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite gradient in {name}[{i}] = {} at step {}",
                g[i],
                state.step + 1
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let correct1 = 1.0 - cfg.beta1.powi(t);
    let correct2 = 1.0 - cfg.beta2.powi(t);
    for (k, ((name, p), (_, g))) in params.trainable_mut().into_iter().zip(&grad_tensors).enumerate() {
        let (m, v) = (&mut state.first[k], &mut state.second[k]);
        if p.len() != g.len() || m.len() != g.len() {
            return Err(Error::Shape(format!("{name}: parameter/gradient length mismatch")));
        }
        for i in 0..p.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / correct1;
            let v_hat = v[i] / correct2;
            p[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Dims;

    fn setup() -> (ModelParams, Gradients, AdamState) {
        let dims = Dims {
            n_channels: 2,
            hidden: 3,
            n_classes: 2,
        };
        let p = ModelParams::init(dims, true, 1).unwrap();
        let g = Gradients::zeros_like(&p);
        let s = AdamState::new(&p);
        (p, g, s)
    }

    fn fill(g: &mut Gradients, f: impl Fn(usize) -> f64) {
        let mut k = 0;
        for (_, t) in g.tensors_mut() {
            for v in t.iter_mut() {
                *v = f(k);
                k += 1;
            }
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let (mut p, g, mut s) = setup();
        let before = p.clone();
        adam_step(&mut p, &g, &mut s, &AdamConfig::default()).unwrap();
        assert_eq!(p, before);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_moves_by_about_lr() {
        let (mut p, mut g, mut s) = setup();
        // magnitudes from 1e-4 up to 1e3, alternating sign
        fill(&mut g, |k| {
            let mag = 10f64.powf(-4.0 + (k % 8) as f64);
            if k % 2 == 0 { mag } else { -mag }
        });
        let before = p.clone();
        adam_step(&mut p, &g, &mut s, &AdamConfig::default()).unwrap();
        for ((_, a), ((_, b), (_, gr))) in p.trainable().iter().zip(before.trainable().iter().zip(g.tensors())) {
            for i in 0..a.len() {
                let delta = a[i] - b[i];
                assert!(delta.abs() >= 0.0099 && delta.abs() <= 0.01, "Δ = {delta} for g = {}", gr[i]);
                assert_eq!(delta.signum(), -gr[i].signum());
            }
        }
    }

    #[test]
    fn repeated_gradient_keeps_step_near_lr() {
        let (mut p, mut g, mut s) = setup();
        fill(&mut g, |k| 0.5 + k as f64 * 0.01);
        for _ in 0..2 {
            let before = p.clone();
            adam_step(&mut p, &g, &mut s, &AdamConfig::default()).unwrap();
            for ((_, a), (_, b)) in p.trainable().iter().zip(before.trainable()) {
                for i in 0..a.len() {
                    assert!(((a[i] - b[i]).abs() - 0.01).abs() <= 0.01 * 0.01);
                }
            }
        }
    }

    #[test]
    fn non_finite_gradient_names_the_tensor() {
        let (mut p, mut g, mut s) = setup();
        g.head.b[1] = f64::NAN;
        let before = p.clone();
        match adam_step(&mut p, &g, &mut s, &AdamConfig::default()) {
            Err(Error::Numeric(msg)) => assert!(msg.contains("head.b"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(p, before);
        assert_eq!(s.step, 0);
    }
}
