//! Small differentiable blocks: dense matrices, scaled dot-product attention
//! and a two-layer denoiser, each with a hand-written backward pass.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{io_at, Error, Result};
use crate::scalar::Real;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2D<S> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<S>,
}

impl<S: Real> Tensor2D<S> {
    pub fn new(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(format!(
                "tensor data has {} values, expected {rows}x{cols}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("tensor contains non-finite values"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> S) -> Self {
        let data = (0..rows * cols).map(|i| f(i / cols, i % cols)).collect();
        Self { rows, cols, data }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> S {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.at(c, r))
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::dim(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(i, k);
                let src = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(src) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn scaled(&self, s: S) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v * s).collect(),
        }
    }
}

/// `1/√d`.
pub fn default_scale<S: Real>(dim: usize) -> S {
    S::one() / S::from_usize_lossy(dim.max(1)).sqrt()
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<S: Real>(logits: &Tensor2D<S>) -> Tensor2D<S> {
    let mut out = logits.clone();
    for r in 0..out.rows {
        let row = &mut out.data[r * out.cols..(r + 1) * out.cols];
        let max = row.iter().copied().fold(S::neg_infinity(), S::max);
        let mut sum = S::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

fn check_attention<S: Real>(q: &Tensor2D<S>, k: &Tensor2D<S>, v: &Tensor2D<S>) -> Result<()> {
    if q.cols != k.cols {
        return Err(Error::dim(format!("query width {} != key width {}", q.cols, k.cols)));
    }
    if k.rows != v.rows {
        return Err(Error::dim(format!("{} keys but {} values", k.rows, v.rows)));
    }
    if k.rows == 0 {
        return Err(Error::dim("attention needs at least one key"));
    }
    Ok(())
}

/// Softmax probabilities `softmax(q kᵀ · scale)`.
pub fn attention_weights<S: Real>(q: &Tensor2D<S>, k: &Tensor2D<S>, scale: S) -> Result<Tensor2D<S>> {
    if q.cols != k.cols {
        return Err(Error::dim(format!("query width {} != key width {}", q.cols, k.cols)));
    }
    Ok(softmax_rows(&q.matmul(&k.transpose())?.scaled(scale)))
}

/// `softmax(q kᵀ · scale) v`.
pub fn attention<S: Real>(q: &Tensor2D<S>, k: &Tensor2D<S>, v: &Tensor2D<S>, scale: S) -> Result<Tensor2D<S>> {
    check_attention(q, k, v)?;
    attention_weights(q, k, scale)?.matmul(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionGrads<S> {
    pub q: Tensor2D<S>,
    pub k: Tensor2D<S>,
    pub v: Tensor2D<S>,
}

/// Gradients of `Σ upstream ⊙ attention(q, k, v, scale)`.
pub fn attention_backward<S: Real>(
    q: &Tensor2D<S>,
    k: &Tensor2D<S>,
    v: &Tensor2D<S>,
    scale: S,
    upstream: &Tensor2D<S>,
) -> Result<AttentionGrads<S>> {
    check_attention(q, k, v)?;
    if upstream.rows != q.rows || upstream.cols != v.cols {
        return Err(Error::dim(format!(
            "upstream is {}x{}, output is {}x{}",
            upstream.rows, upstream.cols, q.rows, v.cols
        )));
    }
    let p = attention_weights(q, k, scale)?;
    let dv = p.transpose().matmul(upstream)?;
    let dp = upstream.matmul(&v.transpose())?;
    let mut ds = Tensor2D::zeros(p.rows, p.cols);
    for r in 0..p.rows {
        let dot: S = p.row(r).iter().zip(dp.row(r)).map(|(&a, &b)| a * b).sum();
        for c in 0..p.cols {
            ds.data[r * p.cols + c] = p.at(r, c) * (dp.at(r, c) - dot) * scale;
        }
    }
    Ok(AttentionGrads {
        q: ds.matmul(k)?,
        k: ds.transpose().matmul(q)?,
        v: dv,
    })
}

/// Attention-based conditioning: the noisy sample is the query, condition
/// tokens supply keys and values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionDims {
    /// Width of one condition token.
    pub token_dim: usize,
    pub attn_dim: usize,
    pub value_dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenoiserDims {
    pub data_dim: usize,
    pub hidden: usize,
    /// Even number of sinusoidal time features.
    pub time_dim: usize,
    #[serde(default)]
    pub condition: Option<ConditionDims>,
}

impl DenoiserDims {
    pub fn new(data_dim: usize, hidden: usize, time_dim: usize) -> Self {
        Self {
            data_dim,
            hidden,
            time_dim,
            condition: None,
        }
    }

    pub fn with_condition(mut self, cond: ConditionDims) -> Self {
        self.condition = Some(cond);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.data_dim == 0 || self.hidden == 0 {
            return Err(Error::Config("denoiser dims must be positive".into()));
        }
        if !self.time_dim.is_multiple_of(2) {
            return Err(Error::Config(format!("time_dim must be even, got {}", self.time_dim)));
        }
        if let Some(c) = self.condition {
            if c.token_dim == 0 || c.attn_dim == 0 || c.value_dim == 0 {
                return Err(Error::Config("condition dims must be positive".into()));
            }
        }
        Ok(())
    }

    /// Width of the perceptron input `[x, time features, context]`.
    pub fn input_dim(&self) -> usize {
        self.data_dim + self.time_dim + self.condition.map_or(0, |c| c.value_dim)
    }
}

/// Offsets of each parameter block inside the flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
    pub wq: usize,
    pub wk: usize,
    pub wv: usize,
    pub len: usize,
}

impl ParamLayout {
    pub fn new(d: &DenoiserDims) -> Self {
        let din = d.input_dim();
        let w1 = 0;
        let b1 = w1 + d.hidden * din;
        let w2 = b1 + d.hidden;
        let b2 = w2 + d.data_dim * d.hidden;
        let wq = b2 + d.data_dim;
        let (wk, wv, len) = match d.condition {
            Some(c) => {
                let wk = wq + d.data_dim * c.attn_dim;
                let wv = wk + c.token_dim * c.attn_dim;
                (wk, wv, wv + c.token_dim * c.value_dim)
            }
            None => (wq, wq, wq),
        };
        Self {
            w1,
            b1,
            w2,
            b2,
            wq,
            wk,
            wv,
            len,
        }
    }
}

/// `tanh` perceptron predicting the noise in `x_t`.
///
/// `W1` is `H × Din`, `W2` is `D × H`. With conditioning, `Wq` is `D × A`,
/// `Wk` is `C × A` and `Wv` is `C × V`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyDenoiser<S> {
    dims: DenoiserDims,
    layout: ParamLayout,
    params: Vec<S>,
}

/// Sinusoidal features `[sin(t ω_i), cos(t ω_i)]`, `ω_i = 10000^(−i/half)`.
pub fn time_embedding<S: Real>(t: usize, dim: usize) -> Vec<S> {
    let half = dim / 2;
    let mut out = Vec::with_capacity(dim);
    for i in 0..half {
        let w = (-(i as f64) / half as f64 * 10000f64.ln()).exp();
        out.push(S::lit((t as f64 * w).sin()));
    }
    for i in 0..half {
        let w = (-(i as f64) / half as f64 * 10000f64.ln()).exp();
        out.push(S::lit((t as f64 * w).cos()));
    }
    out
}

/// Per-parameter gradients in the same flat layout, plus the input gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserGrads<S> {
    pub params: Vec<S>,
    pub input: Vec<S>,
}

struct Forward<S> {
    z: Vec<S>,
    h: Vec<S>,
    out: Vec<S>,
    q: Option<Tensor2D<S>>,
    k: Option<Tensor2D<S>>,
    v: Option<Tensor2D<S>>,
    c: Option<Tensor2D<S>>,
}

impl<S: Real> ToyDenoiser<S> {
    pub fn zeros(dims: DenoiserDims) -> Result<Self> {
        dims.validate()?;
        let layout = ParamLayout::new(&dims);
        Ok(Self {
            dims,
            layout,
            params: vec![S::zero(); layout.len],
        })
    }

    /// Uniform `±1/√fan_in` for every weight and bias.
    pub fn init(dims: DenoiserDims, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = model.layout;
        let din = dims.input_dim();
        let mut fill = |range: std::ops::Range<usize>, fan_in: usize, params: &mut [S]| {
            let b = 1.0 / (fan_in as f64).sqrt();
            for p in &mut params[range] {
                *p = S::lit(rng.gen_range(-b..=b));
            }
        };
        let p = &mut model.params;
        fill(l.w1..l.w2, din, p);
        fill(l.w2..l.wq, dims.hidden, p);
        if let Some(c) = dims.condition {
            fill(l.wq..l.wk, dims.data_dim, p);
            fill(l.wk..l.len, c.token_dim, p);
        }
        Ok(model)
    }

    pub fn from_params(dims: DenoiserDims, params: Vec<S>) -> Result<Self> {
        dims.validate()?;
        let layout = ParamLayout::new(&dims);
        if params.len() != layout.len {
            return Err(Error::dim(format!(
                "{} parameters for a model needing {}",
                params.len(),
                layout.len
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::data("non-finite model parameter"));
        }
        Ok(Self { dims, layout, params })
    }

    pub fn dims(&self) -> &DenoiserDims {
        &self.dims
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn params(&self) -> &[S] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [S] {
        &mut self.params
    }

    fn block(&self, start: usize, rows: usize, cols: usize) -> Tensor2D<S> {
        Tensor2D {
            rows,
            cols,
            data: self.params[start..start + rows * cols].to_vec(),
        }
    }

    fn check_input(&self, x: &[S], cond: Option<&Tensor2D<S>>) -> Result<()> {
        if x.len() != self.dims.data_dim {
            return Err(Error::dim(format!(
                "input has {} values, model expects {}",
                x.len(),
                self.dims.data_dim
            )));
        }
        match (self.dims.condition, cond) {
            (None, None) => Ok(()),
            (Some(c), Some(t)) if t.cols == c.token_dim && t.rows > 0 => Ok(()),
            (Some(c), Some(t)) => Err(Error::dim(format!(
                "condition is {}x{}, model expects tokens of width {}",
                t.rows, t.cols, c.token_dim
            ))),
            (Some(_), None) => Err(Error::dim("conditioned model needs condition tokens")),
            (None, Some(_)) => Err(Error::dim("model has no conditioning branch")),
        }
    }

    fn run(&self, x: &[S], t: usize, cond: Option<&Tensor2D<S>>) -> Result<Forward<S>> {
        self.check_input(x, cond)?;
        let d = self.dims;
        let l = self.layout;
        let mut z = x.to_vec();
        z.extend(time_embedding::<S>(t, d.time_dim));
        let (mut q, mut k, mut v, mut c_tok) = (None, None, None, None);
        if let (Some(c), Some(tokens)) = (d.condition, cond) {
            let xr = Tensor2D {
                rows: 1,
                cols: d.data_dim,
                data: x.to_vec(),
            };
            let qq = xr.matmul(&self.block(l.wq, d.data_dim, c.attn_dim))?;
            let kk = tokens.matmul(&self.block(l.wk, c.token_dim, c.attn_dim))?;
            let vv = tokens.matmul(&self.block(l.wv, c.token_dim, c.value_dim))?;
            let ctx = attention(&qq, &kk, &vv, default_scale(c.attn_dim))?;
            z.extend_from_slice(&ctx.data);
            q = Some(qq);
            k = Some(kk);
            v = Some(vv);
            c_tok = Some(tokens.clone());
        }
        let din = z.len();
        let p = &self.params;
        let h: Vec<S> = (0..d.hidden)
            .map(|j| {
                let row = &p[l.w1 + j * din..l.w1 + (j + 1) * din];
                let a: S = row.iter().zip(&z).map(|(&w, &zi)| w * zi).sum();
                (a + p[l.b1 + j]).tanh()
            })
            .collect();
        let out = (0..d.data_dim)
            .map(|i| {
                let row = &p[l.w2 + i * d.hidden..l.w2 + (i + 1) * d.hidden];
                row.iter().zip(&h).map(|(&w, &hj)| w * hj).sum::<S>() + p[l.b2 + i]
            })
            .collect();
        Ok(Forward {
            z,
            h,
            out,
            q,
            k,
            v,
            c: c_tok,
        })
    }

    /// Predicted noise for `x_t` at step `t`.
    pub fn forward(&self, x: &[S], t: usize, cond: Option<&Tensor2D<S>>) -> Result<Vec<S>> {
        Ok(self.run(x, t, cond)?.out)
    }

    /// Gradients of `Σ upstream ⊙ forward(x, t)`.
    pub fn backward(&self, x: &[S], t: usize, cond: Option<&Tensor2D<S>>, upstream: &[S]) -> Result<DenoiserGrads<S>> {
        let d = self.dims;
        if upstream.len() != d.data_dim {
            return Err(Error::dim(format!(
                "upstream has {} values, output has {}",
                upstream.len(),
                d.data_dim
            )));
        }
        let f = self.run(x, t, cond)?;
        let l = self.layout;
        let p = &self.params;
        let din = f.z.len();
        let mut g = vec![S::zero(); l.len];

        let mut dh = vec![S::zero(); d.hidden];
        for (i, &gi) in upstream.iter().enumerate() {
            g[l.b2 + i] = gi;
            for j in 0..d.hidden {
                g[l.w2 + i * d.hidden + j] = gi * f.h[j];
                dh[j] += p[l.w2 + i * d.hidden + j] * gi;
            }
        }
        let mut dz = vec![S::zero(); din];
        for j in 0..d.hidden {
            let da = dh[j] * (S::one() - f.h[j] * f.h[j]);
            g[l.b1 + j] = da;
            for (m, dzm) in dz.iter_mut().enumerate() {
                g[l.w1 + j * din + m] = da * f.z[m];
                *dzm += p[l.w1 + j * din + m] * da;
            }
        }
        let mut dx = dz[..d.data_dim].to_vec();

        if let (Some(c), Some(q), Some(k), Some(v), Some(tokens)) = (d.condition, &f.q, &f.k, &f.v, &f.c) {
            let off = d.data_dim + d.time_dim;
            let dctx = Tensor2D {
                rows: 1,
                cols: c.value_dim,
                data: dz[off..off + c.value_dim].to_vec(),
            };
            let ag = attention_backward(q, k, v, default_scale(c.attn_dim), &dctx)?;
            // q = x Wq
            for i in 0..d.data_dim {
                for a in 0..c.attn_dim {
                    g[l.wq + i * c.attn_dim + a] = x[i] * ag.q.data[a];
                    dx[i] += p[l.wq + i * c.attn_dim + a] * ag.q.data[a];
                }
            }
            // k = C Wk, v = C Wv
            let dwk = tokens.transpose().matmul(&ag.k)?;
            let dwv = tokens.transpose().matmul(&ag.v)?;
            g[l.wk..l.wv].copy_from_slice(&dwk.data);
            g[l.wv..l.len].copy_from_slice(&dwv.data);
        }
        Ok(DenoiserGrads { params: g, input: dx })
    }

    /// Sum of per-item gradients, reduced in index order.
    pub fn backward_batch(&self, items: &[(Vec<S>, usize, Vec<S>)], cond: Option<&Tensor2D<S>>) -> Result<DenoiserGrads<S>> {
        let mut acc = DenoiserGrads {
            params: vec![S::zero(); self.layout.len],
            input: vec![S::zero(); self.dims.data_dim],
        };
        for (x, t, up) in items {
            let g = self.backward(x, *t, cond, up)?;
            for (a, b) in acc.params.iter_mut().zip(&g.params) {
                *a += *b;
            }
            for (a, b) in acc.input.iter_mut().zip(&g.input) {
                *a += *b;
            }
        }
        Ok(acc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub dims: DenoiserDims,
    pub seed: u64,
    pub steps: usize,
    pub params: usize,
}

const CHECKPOINT_FORMAT: &str = "motionflow-denoiser-v1";

/// JSON header line followed by little-endian `f64` parameters.
pub fn save_checkpoint<S: Real>(model: &ToyDenoiser<S>, seed: u64, steps: usize, path: impl AsRef<Path>) -> Result<()> {
    let header = CheckpointHeader {
        format: CHECKPOINT_FORMAT.into(),
        dims: model.dims,
        seed,
        steps,
        params: model.params.len(),
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    for p in &model.params {
        out.extend_from_slice(&p.as_f64().to_le_bytes());
    }
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(io_at(path))?;
    file.write_all(&out)?;
    Ok(())
}

pub fn load_checkpoint<S: Real>(path: impl AsRef<Path>) -> Result<(ToyDenoiser<S>, CheckpointHeader)> {
    let path = path.as_ref();
    let mut reader = BufReader::new(fs::File::open(path).map_err(io_at(path))?);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let header: CheckpointHeader =
        serde_json::from_str(line.trim_end()).map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(Error::Format(format!("unknown checkpoint format '{}'", header.format)));
    }
    let mut payload = Vec::new();
    reader.read_to_end(&mut payload)?;
    if payload.len() != header.params * 8 {
        return Err(Error::Format(format!(
            "checkpoint payload has {} bytes, header declares {} parameters",
            payload.len(),
            header.params
        )));
    }
    let params = payload
        .chunks_exact(8)
        .map(|c| S::lit(f64::from_le_bytes(c.try_into().unwrap())))
        .collect();
    let model = ToyDenoiser::from_params(header.dims, params)?;
    Ok((model, header))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: usize, cols: usize, data: &[f64]) -> Tensor2D<f64> {
        Tensor2D::new(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn single_key_returns_value() {
        let out = attention(&t(1, 2, &[0.3, -2.0]), &t(1, 2, &[5.0, 1.0]), &t(1, 3, &[1.5, -2.5, 7.0]), 0.7).unwrap();
        assert_eq!(out.data, vec![1.5, -2.5, 7.0]);
    }

    #[test]
    fn tied_keys_average_values() {
        let k = t(2, 2, &[1.0, 2.0, 1.0, 2.0]);
        let v = t(2, 2, &[0.0, 4.0, 2.0, -4.0]);
        let out = attention(&t(1, 2, &[0.5, 0.5]), &k, &v, 1.0).unwrap();
        assert!((out.data[0] - 1.0).abs() < 1e-15 && out.data[1].abs() < 1e-15);
    }

    #[test]
    fn large_gap_selects_dominant_row() {
        let q = t(1, 1, &[1.0]);
        let k = t(2, 1, &[50.0, 0.0]);
        let v = t(2, 2, &[3.0, -1.0, 100.0, 100.0]);
        let out = attention(&q, &k, &v, 1.0).unwrap();
        // weight of the second row is e^-50 / (1 + e^-50)
        let w = (-50f64).exp() / (1.0 + (-50f64).exp());
        assert!((out.data[0] - (3.0 * (1.0 - w) + 100.0 * w)).abs() < 1e-15);
        assert!((out.data[0] - 3.0).abs() < 1e-9 && (out.data[1] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn softmax_rows_normalized_at_extreme_logits() {
        let logits = t(2, 3, &[1e4, -1e4, 9999.0, -1e4, -1e4, -1e4]);
        let p = softmax_rows(&logits);
        for r in 0..2 {
            let s: f64 = p.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_dim_errors() {
        assert!(attention(&t(1, 2, &[0.0; 2]), &t(1, 3, &[0.0; 3]), &t(1, 1, &[0.0]), 1.0).is_err());
        assert!(attention(&t(1, 2, &[0.0; 2]), &t(2, 2, &[0.0; 4]), &t(1, 1, &[0.0]), 1.0).is_err());
    }

    #[test]
    fn single_key_value_gradient_is_upstream() {
        let up = t(2, 2, &[0.25, -1.0, 3.0, 0.5]);
        let g = attention_backward(&t(2, 1, &[1.0, 2.0]), &t(1, 1, &[0.4]), &t(1, 2, &[1.0, 1.0]), 1.0, &up).unwrap();
        assert_eq!(g.v.data, vec![3.25, -0.5]);
        assert!(g.q.data.iter().chain(&g.k.data).all(|&x| x == 0.0));
    }

    #[test]
    fn zero_scale_kills_logit_gradients() {
        let q = t(2, 2, &[1.0, -0.5, 0.3, 2.0]);
        let k = t(3, 2, &[0.1, 0.2, -1.0, 0.5, 0.7, 0.7]);
        let v = t(3, 1, &[1.0, -2.0, 4.0]);
        let g = attention_backward(&q, &k, &v, 0.0, &t(2, 1, &[1.0, -3.0])).unwrap();
        assert!(g.q.data.iter().chain(&g.k.data).all(|&x| x == 0.0));
        for r in 0..3 {
            assert!((g.v.data[r] - (-2.0 / 3.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_model_outputs_zero() {
        let m = ToyDenoiser::<f64>::zeros(DenoiserDims::new(3, 5, 4)).unwrap();
        assert_eq!(m.forward(&[1.0, -2.0, 3.0], 17, None).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let dims = DenoiserDims::new(4, 8, 6);
        let a = ToyDenoiser::<f64>::init(dims, 3).unwrap();
        let b = ToyDenoiser::<f64>::init(dims, 3).unwrap();
        assert_eq!(a, b);
        let l = *a.layout();
        let bound = 1.0 / (dims.input_dim() as f64).sqrt();
        assert!(a.params()[l.w1..l.w2].iter().all(|w| w.abs() <= bound));
        let x = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(a.forward(&x, 5, None).unwrap(), b.forward(&x, 5, None).unwrap());
        assert_ne!(a, ToyDenoiser::<f64>::init(dims, 4).unwrap());
    }

    #[test]
    fn zero_upstream_zero_gradients() {
        let dims = DenoiserDims::new(2, 3, 2).with_condition(ConditionDims {
            token_dim: 2,
            attn_dim: 2,
            value_dim: 2,
        });
        let m = ToyDenoiser::<f64>::init(dims, 1).unwrap();
        let c = t(3, 2, &[0.1, 0.2, 0.3, -0.4, 0.5, 0.6]);
        let g = m.backward(&[0.5, -0.5], 3, Some(&c), &[0.0, 0.0]).unwrap();
        assert!(g.params.iter().chain(&g.input).all(|&x| x == 0.0));
    }

    #[test]
    fn condition_presence_checked() {
        let m = ToyDenoiser::<f64>::zeros(DenoiserDims::new(2, 3, 2)).unwrap();
        assert!(m.forward(&[0.0, 0.0], 1, Some(&t(1, 1, &[0.0]))).is_err());
        assert!(m.forward(&[0.0], 1, None).is_err());
        assert!(ToyDenoiser::<f64>::zeros(DenoiserDims::new(2, 3, 3)).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let m = ToyDenoiser::<f64>::init(DenoiserDims::new(3, 4, 2), 9).unwrap();
        save_checkpoint(&m, 9, 120, &path).unwrap();
        let (back, header) = load_checkpoint::<f64>(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!((header.seed, header.steps), (9, 120));
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.pop();
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(load_checkpoint::<f64>(&path), Err(Error::Format(_))));
    }

    #[test]
    fn time_embedding_shape() {
        let e = time_embedding::<f64>(0, 6);
        assert_eq!(e, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
    }
}
