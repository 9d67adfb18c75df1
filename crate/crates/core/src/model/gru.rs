//! Single-layer GRU run over a feature sequence, with truncation-free BPTT.
//!
//! Gate convention, for each step t:
//!
//! ```text
//! r_t = σ(W_r z_t + U_r h_{t-1} + b_r)
//! u_t = σ(W_u z_t + U_u h_{t-1} + b_u)
//! c_t = tanh(W_c z_t + U_c (r_t ⊙ h_{t-1}) + b_c)
//! h_t = (1 - u_t) ⊙ h_{t-1} + u_t ⊙ c_t
//! ```

use super::linalg::{add_assign, sigmoid, Mat};
use super::params::GruParams;
use crate::error::{Error, Result};

/// Activations kept from the forward pass.
#[derive(Debug, Clone)]
pub struct GruCache {
    pub n: usize,
    pub m: usize,
    pub steps: usize,
    /// Inputs, `steps × n`.
    pub x: Vec<f64>,
    /// Hidden states `h_0 ..= h_steps`, `(steps + 1) × m`.
    pub h: Vec<f64>,
    pub reset: Vec<f64>,
    pub update: Vec<f64>,
    pub candidate: Vec<f64>,
}

impl GruCache {
    pub fn final_state(&self) -> &[f64] {
        &self.h[self.steps * self.m..]
    }
}

/// Runs the recurrence over a time-major `steps × n` buffer and returns the
/// final hidden state.
pub fn gru_forward(
    x: &[f64],
    n: usize,
    gru: &GruParams,
    h0: Option<&[f64]>,
) -> Result<(Vec<f64>, GruCache)> {
    if n != gru.input_channels() {
        return Err(Error::Shape(format!(
            "GRU expects {} channels, got {n}",
            gru.input_channels()
        )));
    }
    if x.is_empty() || x.len() % n != 0 {
        return Err(Error::Shape(format!("{} values is not a whole number of {n}-channel frames", x.len())));
    }
    let m = gru.hidden();
    let steps = x.len() / n;
    let mut h = Vec::with_capacity((steps + 1) * m);
    match h0 {
        Some(h0) if h0.len() != m => {
            return Err(Error::Shape(format!("h0 has {} entries, hidden size is {m}", h0.len())))
        }
        Some(h0) => h.extend_from_slice(h0),
        None => h.resize(m, 0.0),
    }
    let mut reset = Vec::with_capacity(steps * m);
    let mut update = Vec::with_capacity(steps * m);
    let mut candidate = Vec::with_capacity(steps * m);
    let mut a_r = vec![0.0; m];
    let mut a_u = vec![0.0; m];
    let mut a_c = vec![0.0; m];
    let mut rh = vec![0.0; m];

    for t in 0..steps {
        let xt = &x[t * n..(t + 1) * n];
        let hp = &h[t * m..(t + 1) * m];
        a_r.copy_from_slice(&gru.b_r);
        a_u.copy_from_slice(&gru.b_u);
        a_c.copy_from_slice(&gru.b_c);
        gru.w_r.mul_vec_add(xt, &mut a_r);
        gru.u_r.mul_vec_add(hp, &mut a_r);
        gru.w_u.mul_vec_add(xt, &mut a_u);
        gru.u_u.mul_vec_add(hp, &mut a_u);
        for i in 0..m {
            a_r[i] = sigmoid(a_r[i]);
            a_u[i] = sigmoid(a_u[i]);
            rh[i] = a_r[i] * hp[i];
        }
        gru.w_c.mul_vec_add(xt, &mut a_c);
        gru.u_c.mul_vec_add(&rh, &mut a_c);
        let mut next = Vec::with_capacity(m);
        for i in 0..m {
            let c = a_c[i].tanh();
            a_c[i] = c;
            next.push((1.0 - a_u[i]) * hp[i] + a_u[i] * c);
        }
        reset.extend_from_slice(&a_r);
        update.extend_from_slice(&a_u);
        candidate.extend_from_slice(&a_c);
        h.extend_from_slice(&next);
    }
    let cache = GruCache {
        n,
        m,
        steps,
        x: x.to_vec(),
        h,
        reset,
        update,
        candidate,
    };
    Ok((cache.final_state().to_vec(), cache))
}

/// Backpropagates `dh_final` through every step. Returns parameter
/// gradients and, when `need_dx`, the gradient w.r.t. the inputs.
pub fn gru_backward(
    gru: &GruParams,
    cache: &GruCache,
    dh_final: &[f64],
    need_dx: bool,
) -> (GruParams, Option<Vec<f64>>) {
    let (n, m) = (cache.n, cache.m);
    let mut g = GruParams::zeros(n, m);
    let mut dx = need_dx.then(|| vec![0.0; cache.steps * n]);
    let mut dh = dh_final.to_vec();
    let mut da_r = vec![0.0; m];
    let mut da_u = vec![0.0; m];
    let mut da_c = vec![0.0; m];
    let mut rh = vec![0.0; m];
    let mut drh = vec![0.0; m];
    let mut dh_prev = vec![0.0; m];

    for t in (0..cache.steps).rev() {
        let xt = &cache.x[t * n..(t + 1) * n];
        let hp = &cache.h[t * m..(t + 1) * m];
        let r = &cache.reset[t * m..(t + 1) * m];
        let u = &cache.update[t * m..(t + 1) * m];
        let c = &cache.candidate[t * m..(t + 1) * m];

        for i in 0..m {
            dh_prev[i] = dh[i] * (1.0 - u[i]);
            da_c[i] = dh[i] * u[i] * (1.0 - c[i] * c[i]);
            da_u[i] = dh[i] * (c[i] - hp[i]) * u[i] * (1.0 - u[i]);
            rh[i] = r[i] * hp[i];
        }
        drh.fill(0.0);
        gru.u_c.tmul_vec_add(&da_c, &mut drh);
        for i in 0..m {
            da_r[i] = drh[i] * hp[i] * r[i] * (1.0 - r[i]);
            dh_prev[i] += drh[i] * r[i];
        }
        gru.u_u.tmul_vec_add(&da_u, &mut dh_prev);
        gru.u_r.tmul_vec_add(&da_r, &mut dh_prev);

        g.w_c.add_outer(&da_c, xt);
        g.w_u.add_outer(&da_u, xt);
        g.w_r.add_outer(&da_r, xt);
        g.u_c.add_outer(&da_c, &rh);
        g.u_u.add_outer(&da_u, hp);
        g.u_r.add_outer(&da_r, hp);
        add_assign(&mut g.b_c, &da_c);
        add_assign(&mut g.b_u, &da_u);
        add_assign(&mut g.b_r, &da_r);

        if let Some(dx) = dx.as_mut() {
            let dxt = &mut dx[t * n..(t + 1) * n];
            gru.w_r.tmul_vec_add(&da_r, dxt);
            gru.w_u.tmul_vec_add(&da_u, dxt);
            gru.w_c.tmul_vec_add(&da_c, dxt);
        }
        std::mem::swap(&mut dh, &mut dh_prev);
    }
    (g, dx)
}

pub(crate) fn add_gru(acc: &mut GruParams, g: &GruParams) {
    fn add_mat(a: &mut Mat, b: &Mat) {
        add_assign(&mut a.data, &b.data);
    }
    add_mat(&mut acc.w_r, &g.w_r);
    add_mat(&mut acc.w_u, &g.w_u);
    add_mat(&mut acc.w_c, &g.w_c);
    add_mat(&mut acc.u_r, &g.u_r);
    add_mat(&mut acc.u_u, &g.u_u);
    add_mat(&mut acc.u_c, &g.u_c);
    add_assign(&mut acc.b_r, &g.b_r);
    add_assign(&mut acc.b_u, &g.b_u);
    add_assign(&mut acc.b_c, &g.b_c);
}
