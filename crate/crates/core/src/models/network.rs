//! Forward and backward passes shared by the baseline and attention models.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::vocab::Vocab;
use crate::corpus::{TrafficStateTensor, WINDOW_MINUTES};
use crate::error::{Error, Result};
use crate::nncore::{
    lstm_step, lstm_step_backward, softmax, softmax_cross_entropy, LstmCache, LstmGrads,
    LstmWeights, ModelParams, Tensor,
};
use crate::nncore::{mat_vec_acc, outer_acc, vec_mat_acc};

pub const EMBED: &str = "embed";
pub const LSTM_WX: &str = "lstm.w_x";
pub const LSTM_WH: &str = "lstm.w_h";
pub const LSTM_B: &str = "lstm.b";
pub const DECODER_W: &str = "decoder.w";
pub const DECODER_B: &str = "decoder.b";
pub const TRAFFIC_W: &str = "traffic.w_f";
pub const ATTN_W: &str = "attention.w_a";
pub const ATTN_U: &str = "attention.u_a";
pub const ATTN_V: &str = "attention.v_a";
pub const INIT_H: &str = "init.w_h";
pub const INIT_C: &str = "init.w_c";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Rnn,
    Arnn,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Rnn => "rnn",
            ModelKind::Arnn => "arnn",
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rnn" => Ok(ModelKind::Rnn),
            "arnn" => Ok(ModelKind::Arnn),
            _ => Err(Error::Config(format!("unknown model kind {s:?}"))),
        }
    }
}

/// Dimensions of a model. `d_f` and `d_a` only matter for the attention model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub n_cells: usize,
    pub d_e: usize,
    pub d_h: usize,
    pub d_f: usize,
    pub d_a: usize,
}

impl ModelConfig {
    /// Traffic-feature and attention sizes default to `d_h`.
    pub fn new(kind: ModelKind, n_cells: usize, d_e: usize, d_h: usize) -> Self {
        Self {
            kind,
            n_cells,
            d_e,
            d_h,
            d_f: d_h,
            d_a: d_h,
        }
    }

    pub fn vocab(&self) -> Vocab {
        Vocab::new(self.n_cells)
    }

    fn d_in(&self) -> usize {
        match self.kind {
            ModelKind::Rnn => self.d_e,
            ModelKind::Arnn => self.d_e + self.d_f,
        }
    }

    fn shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        let v = self.n_cells + 2;
        let h4 = 4 * self.d_h;
        let mut s = vec![
            (EMBED, vec![v, self.d_e]),
            (LSTM_WX, vec![self.d_in(), h4]),
            (LSTM_WH, vec![self.d_h, h4]),
            (LSTM_B, vec![h4]),
            (DECODER_W, vec![self.d_h, v]),
            (DECODER_B, vec![v]),
        ];
        if self.kind == ModelKind::Arnn {
            s.extend([
                (TRAFFIC_W, vec![WINDOW_MINUTES, self.d_f]),
                (ATTN_W, vec![self.d_h, self.d_a]),
                (ATTN_U, vec![self.d_f, self.d_a]),
                (ATTN_V, vec![self.d_a]),
                (INIT_H, vec![self.d_f, self.d_h]),
                (INIT_C, vec![self.d_f, self.d_h]),
            ]);
        }
        s
    }

    fn validate(&self) -> Result<()> {
        if self.n_cells == 0 || self.d_e == 0 || self.d_h == 0 || self.d_f == 0 || self.d_a == 0 {
            return Err(Error::Config(format!("invalid model dimensions {self:?}")));
        }
        Ok(())
    }
}

/// A baseline RNN or attention RNN with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    params: ModelParams,
}

/// Per-cell traffic features `tanh(W_f^T traffic[j])`, row-major `[N, d_f]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficFeatures {
    n_cells: usize,
    d_f: usize,
    values: Vec<f64>,
}

impl TrafficFeatures {
    pub fn new(n_cells: usize, d_f: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_cells * d_f {
            return Err(Error::Shape(format!(
                "features: expected {n_cells}x{d_f}, got {} values",
                values.len()
            )));
        }
        Ok(Self { n_cells, d_f, values })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn d_f(&self) -> usize {
        self.d_f
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.d_f..(j + 1) * self.d_f]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Borrowed parameter slices, looked up once per sequence.
pub(crate) struct View<'a> {
    cfg: ModelConfig,
    embed: &'a [f64],
    lstm: LstmWeights<'a>,
    dec_w: &'a [f64],
    dec_b: &'a [f64],
    attn: Option<AttnView<'a>>,
}

struct AttnView<'a> {
    w_f: &'a [f64],
    w_a: &'a [f64],
    u_a: &'a [f64],
    v_a: &'a [f64],
    init_h: &'a [f64],
    init_c: &'a [f64],
}

/// Traffic-dependent quantities computed once per trip.
pub(crate) struct Prepared {
    traffic: Vec<f64>,
    feats: TrafficFeatures,
    /// `U_a^T h_j`, `[N, d_a]`.
    uh: Vec<f64>,
    mean: Vec<f64>,
    pub(crate) h0: Vec<f64>,
    pub(crate) c0: Vec<f64>,
}

struct AttnTrace {
    s_prev: Vec<f64>,
    /// `tanh(W_a^T s + U_a^T h_j)`, `[N, d_a]`.
    t: Vec<f64>,
    alpha: Vec<f64>,
}

pub(crate) struct StepTrace {
    token: usize,
    lstm: LstmCache,
    pub(crate) logits: Vec<f64>,
    attn: Option<AttnTrace>,
}

impl StepTrace {
    pub(crate) fn h(&self) -> &[f64] {
        &self.lstm.h
    }

    pub(crate) fn c(&self) -> &[f64] {
        &self.lstm.c
    }

    pub(crate) fn alpha(&self) -> Option<&[f64]> {
        self.attn.as_ref().map(|a| a.alpha.as_slice())
    }
}

impl Model {
    /// Random initialization: uniform(-s, s) with s = 1/sqrt(fan_in), forget bias 1.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ModelParams::new();
        for (name, shape) in config.shapes() {
            let t = match name {
                LSTM_B | DECODER_B => Tensor::zeros(&shape),
                EMBED => Tensor::uniform(&shape, config.d_e, &mut rng),
                ATTN_V => Tensor::uniform(&shape, config.d_a, &mut rng),
                _ => Tensor::uniform(&shape, shape[0], &mut rng),
            };
            params.insert(name, t);
        }
        let b = params.get_mut(LSTM_B)?.data_mut();
        b[config.d_h..2 * config.d_h].iter_mut().for_each(|v| *v = 1.0);
        Ok(Self { config, params })
    }

    pub fn from_params(config: ModelConfig, params: ModelParams) -> Result<Self> {
        config.validate()?;
        let shapes = config.shapes();
        if shapes.len() != params.len() {
            return Err(Error::Shape(format!(
                "{} model expects {} tensors, found {}",
                config.kind,
                shapes.len(),
                params.len()
            )));
        }
        for (name, shape) in &shapes {
            params.expect(name, shape)?;
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    pub fn vocab(&self) -> Vocab {
        self.config.vocab()
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.params
    }

    pub(crate) fn view(&self) -> Result<View<'_>> {
        let c = &self.config;
        let p = &self.params;
        let v = c.n_cells + 2;
        let attn = match c.kind {
            ModelKind::Rnn => None,
            ModelKind::Arnn => Some(AttnView {
                w_f: p.expect(TRAFFIC_W, &[WINDOW_MINUTES, c.d_f])?,
                w_a: p.expect(ATTN_W, &[c.d_h, c.d_a])?,
                u_a: p.expect(ATTN_U, &[c.d_f, c.d_a])?,
                v_a: p.expect(ATTN_V, &[c.d_a])?,
                init_h: p.expect(INIT_H, &[c.d_f, c.d_h])?,
                init_c: p.expect(INIT_C, &[c.d_f, c.d_h])?,
            }),
        };
        Ok(View {
            cfg: *c,
            embed: p.expect(EMBED, &[v, c.d_e])?,
            lstm: LstmWeights::new(
                p.expect(LSTM_WX, &[c.d_in(), 4 * c.d_h])?,
                p.expect(LSTM_WH, &[c.d_h, 4 * c.d_h])?,
                p.expect(LSTM_B, &[4 * c.d_h])?,
                c.d_in(),
                c.d_h,
            )?,
            dec_w: p.expect(DECODER_W, &[c.d_h, v])?,
            dec_b: p.expect(DECODER_B, &[v])?,
            attn,
        })
    }

    /// Checks the traffic argument against the model kind and builds the
    /// per-trip attention inputs.
    pub(crate) fn prepare(&self, traffic: Option<&TrafficStateTensor>) -> Result<Option<Prepared>> {
        match (self.config.kind, traffic) {
            (ModelKind::Rnn, _) => Ok(None),
            (ModelKind::Arnn, None) => Err(Error::Shape("attention model needs traffic".into())),
            (ModelKind::Arnn, Some(t)) => self.view()?.prepare(t).map(Some),
        }
    }
}

impl View<'_> {
    fn attn(&self) -> &AttnView<'_> {
        self.attn.as_ref().expect("attention weights present for attention model")
    }

    fn encode(&self, traffic: &TrafficStateTensor) -> Result<TrafficFeatures> {
        let n = self.cfg.n_cells;
        if traffic.n_cells() != n {
            return Err(Error::Shape(format!(
                "traffic has {} cells, model has {n}",
                traffic.n_cells()
            )));
        }
        let d_f = self.cfg.d_f;
        let mut values = vec![0.0; n * d_f];
        for j in 0..n {
            let out = &mut values[j * d_f..(j + 1) * d_f];
            vec_mat_acc(traffic.row(j), self.attn().w_f, out);
            out.iter_mut().for_each(|v| *v = v.tanh());
        }
        TrafficFeatures::new(n, d_f, values)
    }

    fn init_state(&self, feats: &TrafficFeatures) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let d_f = self.cfg.d_f;
        let mut mean = vec![0.0; d_f];
        for j in 0..feats.n_cells {
            mean.iter_mut().zip(feats.row(j)).for_each(|(m, v)| *m += v);
        }
        let inv = 1.0 / feats.n_cells.max(1) as f64;
        mean.iter_mut().for_each(|m| *m *= inv);
        let a = self.attn();
        let mut h0 = vec![0.0; self.cfg.d_h];
        let mut c0 = vec![0.0; self.cfg.d_h];
        vec_mat_acc(&mean, a.init_h, &mut h0);
        vec_mat_acc(&mean, a.init_c, &mut c0);
        h0.iter_mut().for_each(|v| *v = v.tanh());
        c0.iter_mut().for_each(|v| *v = v.tanh());
        (mean, h0, c0)
    }

    fn prepare(&self, traffic: &TrafficStateTensor) -> Result<Prepared> {
        let feats = self.encode(traffic)?;
        let d_a = self.cfg.d_a;
        let mut uh = vec![0.0; feats.n_cells * d_a];
        for j in 0..feats.n_cells {
            vec_mat_acc(feats.row(j), self.attn().u_a, &mut uh[j * d_a..(j + 1) * d_a]);
        }
        let (mean, h0, c0) = self.init_state(&feats);
        Ok(Prepared {
            traffic: traffic.values().to_vec(),
            feats,
            uh,
            mean,
            h0,
            c0,
        })
    }

    /// Returns `(alpha, tanh terms, context)`.
    fn attend(&self, prep: &Prepared, s_prev: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let a = self.attn();
        let d_a = self.cfg.d_a;
        let n = prep.feats.n_cells;
        let mut ws = vec![0.0; d_a];
        vec_mat_acc(s_prev, a.w_a, &mut ws);
        let mut t = vec![0.0; n * d_a];
        let mut e = vec![0.0; n];
        for j in 0..n {
            let tj = &mut t[j * d_a..(j + 1) * d_a];
            let uj = &prep.uh[j * d_a..(j + 1) * d_a];
            let mut ej = 0.0;
            for k in 0..d_a {
                tj[k] = (ws[k] + uj[k]).tanh();
                ej += a.v_a[k] * tj[k];
            }
            e[j] = ej;
        }
        let alpha = softmax(&e);
        let mut ctx = vec![0.0; self.cfg.d_f];
        for (j, &aj) in alpha.iter().enumerate() {
            ctx.iter_mut().zip(prep.feats.row(j)).for_each(|(c, h)| *c += aj * h);
        }
        (alpha, t, ctx)
    }

    pub(crate) fn step(
        &self,
        prep: Option<&Prepared>,
        h: &[f64],
        c: &[f64],
        token: usize,
    ) -> Result<StepTrace> {
        let (d_e, v) = (self.cfg.d_e, self.cfg.n_cells + 2);
        if token >= v {
            return Err(Error::LabelOutOfRange { label: token, size: v });
        }
        let emb = &self.embed[token * d_e..(token + 1) * d_e];
        let (input, attn) = match prep {
            None => (emb.to_vec(), None),
            Some(p) => {
                let (alpha, t, ctx) = self.attend(p, h);
                let mut input = emb.to_vec();
                input.extend_from_slice(&ctx);
                (
                    input,
                    Some(AttnTrace {
                        s_prev: h.to_vec(),
                        t,
                        alpha,
                    }),
                )
            }
        };
        let lstm = lstm_step(&input, h, c, &self.lstm)?;
        let mut logits = self.dec_b.to_vec();
        vec_mat_acc(&lstm.h, self.dec_w, &mut logits);
        Ok(StepTrace {
            token,
            lstm,
            logits,
            attn,
        })
    }

    pub(crate) fn initial(&self, prep: Option<&Prepared>) -> (Vec<f64>, Vec<f64>) {
        match prep {
            Some(p) => (p.h0.clone(), p.c0.clone()),
            None => (vec![0.0; self.cfg.d_h], vec![0.0; self.cfg.d_h]),
        }
    }
}

/// Gradient buffers laid out like [`View`].
struct Grads {
    embed: Vec<f64>,
    w_x: Vec<f64>,
    w_h: Vec<f64>,
    b: Vec<f64>,
    dec_w: Vec<f64>,
    dec_b: Vec<f64>,
    w_f: Vec<f64>,
    w_a: Vec<f64>,
    u_a: Vec<f64>,
    v_a: Vec<f64>,
    init_h: Vec<f64>,
    init_c: Vec<f64>,
}

impl Grads {
    fn new(v: &View) -> Self {
        let z = |s: &[f64]| vec![0.0; s.len()];
        let a = v.attn.as_ref();
        let za = |pick: &dyn Fn(&AttnView) -> usize| vec![0.0; a.map_or(0, pick)];
        Self {
            embed: z(v.embed),
            w_x: z(v.lstm.w_x),
            w_h: z(v.lstm.w_h),
            b: z(v.lstm.b),
            dec_w: z(v.dec_w),
            dec_b: z(v.dec_b),
            w_f: za(&|a| a.w_f.len()),
            w_a: za(&|a| a.w_a.len()),
            u_a: za(&|a| a.u_a.len()),
            v_a: za(&|a| a.v_a.len()),
            init_h: za(&|a| a.init_h.len()),
            init_c: za(&|a| a.init_c.len()),
        }
    }

    fn into_params(self, like: &ModelParams) -> Result<ModelParams> {
        let mut out = like.zeros_like();
        let pairs = [
            (EMBED, self.embed),
            (LSTM_WX, self.w_x),
            (LSTM_WH, self.w_h),
            (LSTM_B, self.b),
            (DECODER_W, self.dec_w),
            (DECODER_B, self.dec_b),
            (TRAFFIC_W, self.w_f),
            (ATTN_W, self.w_a),
            (ATTN_U, self.u_a),
            (ATTN_V, self.v_a),
            (INIT_H, self.init_h),
            (INIT_C, self.init_c),
        ];
        for (name, data) in pairs {
            if let Ok(t) = out.get_mut(name) {
                t.data_mut().copy_from_slice(&data);
            }
        }
        Ok(out)
    }
}

impl Model {
    /// Teacher-forced forward pass; returns per-step probabilities and, for the
    /// attention model, per-step attention rows.
    pub(crate) fn forward_indices(
        &self,
        x: &[usize],
        traffic: Option<&TrafficStateTensor>,
    ) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let view = self.view()?;
        let prep = self.prepare(traffic)?;
        let (mut h, mut c) = view.initial(prep.as_ref());
        let mut probs = Vec::with_capacity(x.len());
        let mut attn = Vec::new();
        for &tok in x {
            let tr = view.step(prep.as_ref(), &h, &c, tok)?;
            probs.push(softmax(&tr.logits));
            if let Some(a) = tr.alpha() {
                attn.push(a.to_vec());
            }
            h = tr.lstm.h;
            c = tr.lstm.c;
        }
        Ok((probs, attn))
    }

    /// Summed per-step cross-entropy of `y` given teacher-forced `x`, and its
    /// gradient with respect to every parameter.
    pub fn loss_and_grad(
        &self,
        x: &[usize],
        y: &[usize],
        traffic: Option<&TrafficStateTensor>,
    ) -> Result<(f64, ModelParams)> {
        if x.len() != y.len() || x.is_empty() {
            return Err(Error::Shape(format!(
                "x has {} steps, y has {}",
                x.len(),
                y.len()
            )));
        }
        let view = self.view()?;
        let prep = self.prepare(traffic)?;
        let cfg = view.cfg;
        let (d_e, d_h, d_f, d_a) = (cfg.d_e, cfg.d_h, cfg.d_f, cfg.d_a);

        let (mut h, mut c) = view.initial(prep.as_ref());
        let mut traces = Vec::with_capacity(x.len());
        let mut dlogits = Vec::with_capacity(x.len());
        let mut loss = 0.0;
        for (&tok, &label) in x.iter().zip(y) {
            let tr = view.step(prep.as_ref(), &h, &c, tok)?;
            let (l, g) = softmax_cross_entropy(&tr.logits, label)?;
            loss += l;
            dlogits.push(g);
            h = tr.lstm.h.clone();
            c = tr.lstm.c.clone();
            traces.push(tr);
        }

        let mut g = Grads::new(&view);
        let n = prep.as_ref().map_or(0, |p| p.feats.n_cells);
        // Loss gradient w.r.t. features, and w.r.t. U_a^T h_j summed over steps.
        let mut dfeat = vec![0.0; n * d_f];
        let mut duh = vec![0.0; n * d_a];
        let mut dh = vec![0.0; d_h];
        let mut dc = vec![0.0; d_h];
        for (tr, dl) in traces.iter().zip(&dlogits).rev() {
            g.dec_b.iter_mut().zip(dl).for_each(|(a, b)| *a += b);
            outer_acc(&tr.lstm.h, dl, &mut g.dec_w);
            mat_vec_acc(view.dec_w, dl, &mut dh);
            let (dx, mut dh_prev, dc_prev) = lstm_step_backward(
                &tr.lstm,
                &view.lstm,
                &dh,
                &dc,
                &mut LstmGrads {
                    w_x: &mut g.w_x,
                    w_h: &mut g.w_h,
                    b: &mut g.b,
                },
            );
            g.embed[tr.token * d_e..(tr.token + 1) * d_e]
                .iter_mut()
                .zip(&dx[..d_e])
                .for_each(|(a, b)| *a += b);

            if let (Some(at), Some(p)) = (&tr.attn, prep.as_ref()) {
                let av = view.attn();
                let dctx = &dx[d_e..];
                let mut dalpha = vec![0.0; n];
                for j in 0..n {
                    let hj = p.feats.row(j);
                    dalpha[j] = dctx.iter().zip(hj).map(|(a, b)| a * b).sum();
                    dfeat[j * d_f..(j + 1) * d_f]
                        .iter_mut()
                        .zip(dctx)
                        .for_each(|(f, d)| *f += at.alpha[j] * d);
                }
                let mix: f64 = at.alpha.iter().zip(&dalpha).map(|(a, d)| a * d).sum();
                let mut da_sum = vec![0.0; d_a];
                for j in 0..n {
                    let de = at.alpha[j] * (dalpha[j] - mix);
                    let tj = &at.t[j * d_a..(j + 1) * d_a];
                    for k in 0..d_a {
                        g.v_a[k] += de * tj[k];
                        let da = de * av.v_a[k] * (1.0 - tj[k] * tj[k]);
                        da_sum[k] += da;
                        duh[j * d_a + k] += da;
                    }
                }
                outer_acc(&at.s_prev, &da_sum, &mut g.w_a);
                mat_vec_acc(av.w_a, &da_sum, &mut dh_prev);
            }
            dh = dh_prev;
            dc = dc_prev;
        }

        if let Some(p) = prep.as_ref() {
            let av = view.attn();
            let mut dmean = vec![0.0; d_f];
            for (state, dstate, w, gw) in [
                (&p.h0, &dh, av.init_h, &mut g.init_h),
                (&p.c0, &dc, av.init_c, &mut g.init_c),
            ] {
                let dz: Vec<f64> = state
                    .iter()
                    .zip(dstate)
                    .map(|(s, d)| d * (1.0 - s * s))
                    .collect();
                outer_acc(&p.mean, &dz, gw);
                mat_vec_acc(w, &dz, &mut dmean);
            }
            let inv = 1.0 / n as f64;
            for j in 0..n {
                let hj = p.feats.row(j);
                let duj = &duh[j * d_a..(j + 1) * d_a];
                outer_acc(hj, duj, &mut g.u_a);
                let df = &mut dfeat[j * d_f..(j + 1) * d_f];
                mat_vec_acc(av.u_a, duj, df);
                df.iter_mut().zip(&dmean).for_each(|(a, m)| *a += m * inv);
                let dz: Vec<f64> = df.iter().zip(hj).map(|(d, h)| d * (1.0 - h * h)).collect();
                outer_acc(
                    &p.traffic[j * WINDOW_MINUTES..(j + 1) * WINDOW_MINUTES],
                    &dz,
                    &mut g.w_f,
                );
            }
        }

        if !loss.is_finite() {
            return Err(Error::Diverged(format!("non-finite loss {loss}")));
        }
        Ok((loss, g.into_params(&self.params)?))
    }
}

/// Per-cell traffic features of the attention model.
pub fn encode_traffic(traffic: &TrafficStateTensor, model: &Model) -> Result<TrafficFeatures> {
    attention_view(model)?.encode(traffic)
}

/// Initial `(h, c)` from mean-pooled features.
pub fn attention_init_state(features: &TrafficFeatures, model: &Model) -> Result<(Vec<f64>, Vec<f64>)> {
    let v = attention_view(model)?;
    check_features(features, model)?;
    let (_, h0, c0) = v.init_state(features);
    Ok((h0, c0))
}

/// Attention weights over cells and the resulting context vector.
pub fn attention_step(
    s_prev: &[f64],
    features: &TrafficFeatures,
    model: &Model,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let v = attention_view(model)?;
    check_features(features, model)?;
    if s_prev.len() != model.config.d_h {
        return Err(Error::Shape(format!(
            "state has {} entries, expected {}",
            s_prev.len(),
            model.config.d_h
        )));
    }
    let d_a = model.config.d_a;
    let mut uh = vec![0.0; features.n_cells * d_a];
    for j in 0..features.n_cells {
        vec_mat_acc(features.row(j), v.attn().u_a, &mut uh[j * d_a..(j + 1) * d_a]);
    }
    let prep = Prepared {
        traffic: Vec::new(),
        feats: features.clone(),
        uh,
        mean: Vec::new(),
        h0: Vec::new(),
        c0: Vec::new(),
    };
    let (alpha, _, ctx) = v.attend(&prep, s_prev);
    Ok((alpha, ctx))
}

fn attention_view(model: &Model) -> Result<View<'_>> {
    if model.kind() != ModelKind::Arnn {
        return Err(Error::Shape("operation requires the attention model".into()));
    }
    model.view()
}

fn check_features(f: &TrafficFeatures, model: &Model) -> Result<()> {
    if f.d_f != model.config.d_f || f.n_cells == 0 {
        return Err(Error::Shape(format!(
            "features are {}x{}, model expects d_f={}",
            f.n_cells, f.d_f, model.config.d_f
        )));
    }
    Ok(())
}
