//! A single LSTM cell with gates stacked as `[input, forget, candidate, output]`.

use super::tensor::{mat_vec_acc, outer_acc, vec_mat_acc};
use crate::error::{Error, Result};

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Borrowed cell weights: `w_x` is `[d_in, 4 d_h]`, `w_h` is `[d_h, 4 d_h]`, `b` is `[4 d_h]`.
#[derive(Debug, Clone, Copy)]
pub struct LstmWeights<'a> {
    pub w_x: &'a [f64],
    pub w_h: &'a [f64],
    pub b: &'a [f64],
    pub d_in: usize,
    pub d_h: usize,
}

impl<'a> LstmWeights<'a> {
    pub fn new(w_x: &'a [f64], w_h: &'a [f64], b: &'a [f64], d_in: usize, d_h: usize) -> Result<Self> {
        if w_x.len() != d_in * 4 * d_h || w_h.len() != d_h * 4 * d_h || b.len() != 4 * d_h {
            return Err(Error::Shape(format!(
                "lstm weights do not match d_in={d_in}, d_h={d_h}"
            )));
        }
        Ok(Self { w_x, w_h, b, d_in, d_h })
    }
}

/// Gradient buffers matching [`LstmWeights`].
#[derive(Debug)]
pub struct LstmGrads<'a> {
    pub w_x: &'a mut [f64],
    pub w_h: &'a mut [f64],
    pub b: &'a mut [f64],
}

/// Everything the backward pass needs from one forward step.
#[derive(Debug, Clone)]
pub struct LstmCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    /// Post-activation gates, `[i, f, g, o]` each of length d_h.
    pub gates: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

pub fn lstm_step(x: &[f64], h: &[f64], c: &[f64], w: &LstmWeights) -> Result<LstmCache> {
    let d_h = w.d_h;
    if x.len() != w.d_in || h.len() != d_h || c.len() != d_h {
        return Err(Error::Shape(format!(
            "lstm step: x={}, h={}, c={} for d_in={}, d_h={}",
            x.len(),
            h.len(),
            c.len(),
            w.d_in,
            d_h
        )));
    }
    let mut z = w.b.to_vec();
    vec_mat_acc(x, w.w_x, &mut z);
    vec_mat_acc(h, w.w_h, &mut z);
    for (k, v) in z.iter_mut().enumerate() {
        *v = if (2 * d_h..3 * d_h).contains(&k) {
            v.tanh()
        } else {
            sigmoid(*v)
        };
    }
    let mut c_new = vec![0.0; d_h];
    let mut tanh_c = vec![0.0; d_h];
    let mut h_new = vec![0.0; d_h];
    for j in 0..d_h {
        let (i, f, g, o) = (z[j], z[d_h + j], z[2 * d_h + j], z[3 * d_h + j]);
        c_new[j] = f * c[j] + i * g;
        tanh_c[j] = c_new[j].tanh();
        h_new[j] = o * tanh_c[j];
    }
    Ok(LstmCache {
        x: x.to_vec(),
        h_prev: h.to_vec(),
        c_prev: c.to_vec(),
        gates: z,
        c: c_new,
        tanh_c,
        h: h_new,
    })
}

/// Accumulates weight gradients and returns `(dx, dh_prev, dc_prev)` given the
/// loss gradients flowing into this step's outputs `h` and `c`.
pub fn lstm_step_backward(
    cache: &LstmCache,
    w: &LstmWeights,
    dh: &[f64],
    dc: &[f64],
    grads: &mut LstmGrads,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let d_h = w.d_h;
    let z = &cache.gates;
    let mut dz = vec![0.0; 4 * d_h];
    let mut dc_prev = vec![0.0; d_h];
    for j in 0..d_h {
        let (i, f, g, o) = (z[j], z[d_h + j], z[2 * d_h + j], z[3 * d_h + j]);
        let tc = cache.tanh_c[j];
        let dct = dc[j] + dh[j] * o * (1.0 - tc * tc);
        dz[j] = dct * g * i * (1.0 - i);
        dz[d_h + j] = dct * cache.c_prev[j] * f * (1.0 - f);
        dz[2 * d_h + j] = dct * i * (1.0 - g * g);
        dz[3 * d_h + j] = dh[j] * tc * o * (1.0 - o);
        dc_prev[j] = dct * f;
    }
    outer_acc(&cache.x, &dz, grads.w_x);
    outer_acc(&cache.h_prev, &dz, grads.w_h);
    grads.b.iter_mut().zip(&dz).for_each(|(g, d)| *g += d);

    let mut dx = vec![0.0; w.d_in];
    mat_vec_acc(w.w_x, &dz, &mut dx);
    let mut dh_prev = vec![0.0; d_h];
    mat_vec_acc(w.w_h, &dz, &mut dh_prev);
    (dx, dh_prev, dc_prev)
}
