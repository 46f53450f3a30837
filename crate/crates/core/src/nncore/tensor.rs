use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};

/// Dense row-major array of finite `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} holds {n} values, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Shape("non-finite tensor value".into()));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    /// Uniform(-s, s) with s = 1 / sqrt(fan_in).
    pub fn uniform<R: Rng>(shape: &[usize], fan_in: usize, rng: &mut R) -> Self {
        let s = 1.0 / (fan_in.max(1) as f64).sqrt();
        Self {
            shape: shape.to_vec(),
            data: (0..shape.iter().product::<usize>())
                .map(|_| rng.gen_range(-s..s))
                .collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Named parameter tensors. Iteration order is by name, so anything derived
/// from it (checkpoints, optimizer state) is deterministic.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelParams {
    tensors: BTreeMap<String, Tensor>,
}

impl ModelParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    /// Data slice of `name`, checked against `shape`.
    pub fn expect(&self, name: &str, shape: &[usize]) -> Result<&[f64]> {
        let t = self.get(name)?;
        if t.shape() != shape {
            return Err(Error::Shape(format!(
                "{name}: expected {shape:?}, found {:?}",
                t.shape()
            )));
        }
        Ok(t.data())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|(k, t)| (k.clone(), Tensor::zeros(t.shape())))
                .collect(),
        }
    }

    pub fn same_layout(&self, other: &ModelParams) -> bool {
        self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|((a, ta), (b, tb))| a == b && ta.shape() == tb.shape())
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors
            .values()
            .flat_map(|t| t.data.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors.values_mut() {
            t.data.iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// `self += other`, requiring identical layouts.
    pub fn add_assign(&mut self, other: &ModelParams) -> Result<()> {
        if !self.same_layout(other) {
            return Err(Error::Shape("parameter layouts differ".into()));
        }
        for (a, b) in self.tensors.values_mut().zip(other.tensors.values()) {
            a.data.iter_mut().zip(&b.data).for_each(|(x, y)| *x += y);
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.tensors
            .values()
            .all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// Rescales so the global L2 norm is at most `max_norm`; returns the norm before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let n = self.global_norm();
        if n > max_norm {
            self.scale(max_norm / n);
        }
        n
    }
}

/// `out[k] += sum_a x[a] * w[a, k]` for row-major `w` of shape `[x.len(), out.len()]`.
pub(crate) fn vec_mat_acc(x: &[f64], w: &[f64], out: &mut [f64]) {
    let cols = out.len();
    debug_assert_eq!(w.len(), x.len() * cols);
    for (a, &xa) in x.iter().enumerate() {
        if xa == 0.0 {
            continue;
        }
        let row = &w[a * cols..(a + 1) * cols];
        for (o, &wv) in out.iter_mut().zip(row) {
            *o += xa * wv;
        }
    }
}

/// `out[a] += sum_k w[a, k] * d[k]`, the transpose product of [`vec_mat_acc`].
pub(crate) fn mat_vec_acc(w: &[f64], d: &[f64], out: &mut [f64]) {
    let cols = d.len();
    for (a, o) in out.iter_mut().enumerate() {
        let row = &w[a * cols..(a + 1) * cols];
        *o += row.iter().zip(d).map(|(wv, dv)| wv * dv).sum::<f64>();
    }
}

/// `gw[a, k] += x[a] * d[k]`.
pub(crate) fn outer_acc(x: &[f64], d: &[f64], gw: &mut [f64]) {
    let cols = d.len();
    for (a, &xa) in x.iter().enumerate() {
        if xa == 0.0 {
            continue;
        }
        let row = &mut gw[a * cols..(a + 1) * cols];
        for (g, &dv) in row.iter_mut().zip(d) {
            *g += xa * dv;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_checked() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![1], vec![f64::NAN]).is_err());
        assert_eq!(Tensor::new(vec![2, 3], vec![0.0; 6]).unwrap().len(), 6);
    }

    #[test]
    fn clipping() {
        let mut p = ModelParams::new();
        p.insert("a", Tensor::new(vec![2], vec![3.0, 4.0]).unwrap());
        assert_eq!(p.clip_global_norm(10.0), 5.0);
        assert_eq!(p.get("a").unwrap().data(), &[3.0, 4.0]);
        p.clip_global_norm(1.0);
        assert!((p.global_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn products_agree() {
        let w = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // [2, 3]
        let mut out = [0.0; 3];
        vec_mat_acc(&[1.0, -1.0], &w, &mut out);
        assert_eq!(out, [-3.0, -3.0, -3.0]);
        let mut back = [0.0; 2];
        mat_vec_acc(&w, &[1.0, 0.0, 1.0], &mut back);
        assert_eq!(back, [4.0, 10.0]);
    }
}
