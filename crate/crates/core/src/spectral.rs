//! Temporal-frequency stabilization.
//!
//! Token features are transformed along the frame axis with a real-input FFT
//! (unnormalized forward, `1/T` inverse), scaled per frequency bin by
//! non-negative weights, and transformed back before attention.

use std::sync::Arc;

use num_traits::Float;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftNum, FftPlanner};

use crate::error::{Error, Result};
use crate::flow::{FlowField, FlowSequence};
use crate::nn::{attention, Tensor2D};
use crate::scalar::Real;

/// `T` frames × `N` tokens × `D` channels, frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence<S> {
    pub frames: usize,
    pub tokens: usize,
    pub channels: usize,
    pub data: Vec<S>,
}

impl<S: Real> TokenSequence<S> {
    pub fn new(frames: usize, tokens: usize, channels: usize, data: Vec<S>) -> Result<Self> {
        if frames == 0 {
            return Err(Error::arg("token sequence needs at least one frame"));
        }
        if data.len() != frames * tokens * channels {
            return Err(Error::dim(format!(
                "token data has {} values, expected {frames}x{tokens}x{channels}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("token sequence contains non-finite values"));
        }
        Ok(Self {
            frames,
            tokens,
            channels,
            data,
        })
    }

    pub fn from_fn(frames: usize, tokens: usize, channels: usize, f: impl Fn(usize, usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(frames * tokens * channels);
        for t in 0..frames {
            for n in 0..tokens {
                for d in 0..channels {
                    data.push(f(t, n, d));
                }
            }
        }
        Self {
            frames,
            tokens,
            channels,
            data,
        }
    }

    pub fn at(&self, t: usize, n: usize, d: usize) -> S {
        self.data[(t * self.tokens + n) * self.channels + d]
    }

    /// The `N × D` slice of frame `t`.
    pub fn frame(&self, t: usize) -> &[S] {
        let len = self.tokens * self.channels;
        &self.data[t * len..(t + 1) * len]
    }

    /// One token per pixel, channels `(u, v)`.
    pub fn from_flow(seq: &FlowSequence<S>) -> Result<Self> {
        let data = seq
            .frames()
            .iter()
            .flat_map(|f| f.data().iter().flat_map(|p| [p[0], p[1]]))
            .collect();
        Self::new(seq.len(), seq.width() * seq.height(), 2, data)
    }

    /// Inverse of [`TokenSequence::from_flow`]; validity masks are taken from `like`.
    pub fn to_flow(&self, like: &FlowSequence<S>) -> Result<FlowSequence<S>> {
        if self.channels != 2 || self.tokens != like.width() * like.height() || self.frames != like.len() {
            return Err(Error::dim("token layout does not match the flow sequence"));
        }
        let frames = like
            .frames()
            .iter()
            .enumerate()
            .map(|(t, f)| {
                let data = self.frame(t).chunks_exact(2).map(|c| [c[0], c[1]]).collect();
                let out = FlowField::new(like.width(), like.height(), data)?;
                match f.valid_mask() {
                    Some(m) => out.with_mask(m.to_vec()),
                    None => Ok(out),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        FlowSequence::new(like.width(), like.height(), frames)
    }

    /// `Σ x²` over every value.
    pub fn energy(&self) -> S {
        self.data.iter().map(|&v| v * v).sum()
    }
}

/// Number of real-FFT bins for `frames` samples.
pub fn bin_count(frames: usize) -> usize {
    frames / 2 + 1
}

/// Non-negative per-bin weights, optionally one column per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralWeights<S> {
    bins: usize,
    channels: Option<usize>,
    values: Vec<S>,
}

impl<S: Real> SpectralWeights<S> {
    /// Shared weights, one per bin.
    pub fn new(values: Vec<S>) -> Result<Self> {
        Self::validate(&values)?;
        Ok(Self {
            bins: values.len(),
            channels: None,
            values,
        })
    }

    /// Bin-major `bins × channels` weights.
    pub fn per_channel(bins: usize, channels: usize, values: Vec<S>) -> Result<Self> {
        if values.len() != bins * channels {
            return Err(Error::dim(format!(
                "{} weights for {bins} bins x {channels} channels",
                values.len()
            )));
        }
        Self::validate(&values)?;
        Ok(Self {
            bins,
            channels: Some(channels),
            values,
        })
    }

    fn validate(values: &[S]) -> Result<()> {
        if values.iter().any(|w| !(w.is_finite() && *w >= S::zero())) {
            return Err(Error::data("spectral weights must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn identity(frames: usize) -> Self {
        Self::lowpass(frames, usize::MAX)
    }

    pub fn dc_only(frames: usize) -> Self {
        Self::lowpass(frames, 0)
    }

    /// Keeps bins `0..=cutoff`, zeroes the rest.
    pub fn lowpass(frames: usize, cutoff: usize) -> Self {
        let values = (0..bin_count(frames))
            .map(|k| if k <= cutoff { S::one() } else { S::zero() })
            .collect();
        Self {
            bins: bin_count(frames),
            channels: None,
            values,
        }
    }

    /// `softplus(raw)` per bin, the trainable parameterization.
    pub fn from_softplus(raw: &[S]) -> Self {
        let values = raw
            .iter()
            .map(|&r| {
                // Stable softplus.
                r.max(S::zero()) + (-Float::abs(r)).exp().ln_1p()
            })
            .collect();
        Self {
            bins: raw.len(),
            channels: None,
            values,
        }
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn weight(&self, bin: usize, channel: usize) -> S {
        match self.channels {
            None => self.values[bin],
            Some(c) => self.values[bin * c + channel],
        }
    }

    pub fn is_at_most_one(&self) -> bool {
        self.values.iter().all(|&w| w <= S::one())
    }
}

/// Named filters accepted on the command line.
#[derive(Debug, Clone, PartialEq)]
pub enum SpectralFilter {
    Identity,
    DcOnly,
    Lowpass(usize),
    Custom(Vec<f64>),
}

impl SpectralFilter {
    /// Parses `identity`, `dc-only` or `lowpass:K`.
    pub fn parse(spec: &str) -> Result<Self> {
        match spec {
            "identity" => Ok(Self::Identity),
            "dc-only" => Ok(Self::DcOnly),
            s => match s.strip_prefix("lowpass:") {
                Some(k) => k
                    .parse()
                    .map(Self::Lowpass)
                    .map_err(|_| Error::arg(format!("bad lowpass cutoff '{k}'"))),
                None => Err(Error::arg(format!(
                    "unknown filter '{s}' (identity | dc-only | lowpass:K | custom weights)"
                ))),
            },
        }
    }

    pub fn weights<S: Real>(&self, frames: usize) -> Result<SpectralWeights<S>> {
        Ok(match self {
            Self::Identity => SpectralWeights::identity(frames),
            Self::DcOnly => SpectralWeights::dc_only(frames),
            Self::Lowpass(k) => SpectralWeights::lowpass(frames, *k),
            Self::Custom(v) => SpectralWeights::new(v.iter().map(|&x| S::lit(x)).collect())?,
        })
    }
}

/// Complex spectrum, `bins × N × D`, bin-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum<S> {
    pub frames: usize,
    pub bins: usize,
    pub tokens: usize,
    pub channels: usize,
    pub data: Vec<Complex<S>>,
}

impl<S: Real> Spectrum<S> {
    pub fn at(&self, k: usize, n: usize, d: usize) -> Complex<S> {
        self.data[(k * self.tokens + n) * self.channels + d]
    }
}

struct Plans<S: FftNum> {
    forward: Arc<dyn Fft<S>>,
    inverse: Arc<dyn Fft<S>>,
}

impl<S: Real + FftNum> Plans<S> {
    fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }
}

fn series<S: Real>(seq: &TokenSequence<S>, series: usize) -> Vec<Complex<S>> {
    let stride = seq.tokens * seq.channels;
    (0..seq.frames)
        .map(|t| Complex::new(seq.data[t * stride + series], S::zero()))
        .collect()
}

/// Real-input FFT along the frame axis for every `(token, channel)`.
pub fn temporal_fft<S: Real + FftNum>(seq: &TokenSequence<S>) -> Spectrum<S> {
    let plans = Plans::new(seq.frames);
    let bins = bin_count(seq.frames);
    let stride = seq.tokens * seq.channels;
    let columns: Vec<Vec<Complex<S>>> = (0..stride)
        .into_par_iter()
        .map(|s| {
            let mut buf = series(seq, s);
            plans.forward.process(&mut buf);
            buf.truncate(bins);
            buf
        })
        .collect();
    let mut data = vec![Complex::new(S::zero(), S::zero()); bins * stride];
    for (s, col) in columns.iter().enumerate() {
        for (k, &c) in col.iter().enumerate() {
            data[k * stride + s] = c;
        }
    }
    Spectrum {
        frames: seq.frames,
        bins,
        tokens: seq.tokens,
        channels: seq.channels,
        data,
    }
}

/// `IFFT(w ⊙ FFT(x))` along the frame axis; the imaginary residue is dropped.
pub fn spectral_reweight<S: Real + FftNum>(
    seq: &TokenSequence<S>,
    weights: &SpectralWeights<S>,
) -> Result<TokenSequence<S>> {
    let t_len = seq.frames;
    if weights.bins() != bin_count(t_len) {
        return Err(Error::dim(format!(
            "{} spectral weights for {} frames (need {})",
            weights.bins(),
            t_len,
            bin_count(t_len)
        )));
    }
    if let Some(c) = weights.channels {
        if c != seq.channels {
            return Err(Error::dim(format!(
                "weights have {c} channels, sequence has {}",
                seq.channels
            )));
        }
    }
    let plans = Plans::new(t_len);
    let stride = seq.tokens * seq.channels;
    let inv_len = S::one() / S::from_usize_lossy(t_len);
    let columns: Vec<Vec<S>> = (0..stride)
        .into_par_iter()
        .map(|s| {
            let channel = s % seq.channels;
            let mut buf = series(seq, s);
            plans.forward.process(&mut buf);
            for (k, c) in buf.iter_mut().enumerate() {
                // Bin k and its mirror T-k share one weight.
                let bin = k.min(t_len - k);
                *c = *c * weights.weight(bin, channel);
            }
            plans.inverse.process(&mut buf);
            buf.into_iter().map(|c| c.re * inv_len).collect()
        })
        .collect();
    let mut data = vec![S::zero(); seq.data.len()];
    for (s, col) in columns.iter().enumerate() {
        for (t, &v) in col.iter().enumerate() {
            data[t * stride + s] = v;
        }
    }
    TokenSequence::new(seq.frames, seq.tokens, seq.channels, data)
}

/// Query/key/value projections for [`stabilized_attention`].
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionProjections<S> {
    /// `D × A`
    pub query: Tensor2D<S>,
    /// `D × A`
    pub key: Tensor2D<S>,
    /// `D × D`
    pub value: Tensor2D<S>,
}

/// Reweights the sequence spectrally, then runs per-frame self-attention.
///
/// `scale` defaults to `1/√A`.
pub fn stabilized_attention<S: Real + FftNum>(
    seq: &TokenSequence<S>,
    weights: &SpectralWeights<S>,
    params: &AttentionProjections<S>,
    scale: Option<S>,
) -> Result<TokenSequence<S>> {
    let d = seq.channels;
    let (q, k, v) = (&params.query, &params.key, &params.value);
    if q.rows != d || k.rows != d || v.rows != d || q.cols != k.cols || v.cols != d {
        return Err(Error::dim(format!(
            "projections {}x{}, {}x{}, {}x{} do not fit {} channels",
            q.rows, q.cols, k.rows, k.cols, v.rows, v.cols, d
        )));
    }
    let scale = scale.unwrap_or_else(|| S::one() / S::from_usize_lossy(q.cols).sqrt());
    let filtered = spectral_reweight(seq, weights)?;
    let frames = (0..seq.frames)
        .into_par_iter()
        .map(|t| {
            let x = Tensor2D::new(seq.tokens, d, filtered.frame(t).to_vec())?;
            attention(&x.matmul(q)?, &x.matmul(k)?, &x.matmul(v)?, scale)
        })
        .collect::<Result<Vec<_>>>()?;
    let data = frames.into_iter().flat_map(|o| o.data).collect();
    TokenSequence::new(seq.frames, seq.tokens, d, data)
}

/// Mean squared temporal second difference:
/// `1/(T−2) Σ_t mean_p |x_{t+1} − 2x_t + x_{t−1}|²`, with `point_dim`
/// consecutive values forming one point.
pub fn flicker_metric<S: Real>(frames: &[&[S]], point_dim: usize) -> Result<S> {
    if frames.len() < 3 {
        return Err(Error::arg(format!(
            "flicker metric needs at least 3 frames, got {}",
            frames.len()
        )));
    }
    let len = frames[0].len();
    if point_dim == 0 || !len.is_multiple_of(point_dim) || frames.iter().any(|f| f.len() != len) {
        return Err(Error::dim("frames must share one layout"));
    }
    let points = S::from_usize_lossy((len / point_dim).max(1));
    let two = S::two();
    let total: S = frames
        .windows(3)
        .map(|w| {
            let sq: S = (0..len)
                .map(|i| {
                    let dd = w[2][i] - two * w[1][i] + w[0][i];
                    dd * dd
                })
                .sum();
            sq / points
        })
        .sum();
    Ok(total / S::from_usize_lossy(frames.len() - 2))
}

pub fn flow_flicker<S: Real>(seq: &FlowSequence<S>) -> Result<S> {
    let flat: Vec<Vec<S>> = seq
        .frames()
        .iter()
        .map(|f| f.data().iter().flat_map(|p| [p[0], p[1]]).collect())
        .collect();
    let refs: Vec<&[S]> = flat.iter().map(Vec::as_slice).collect();
    flicker_metric(&refs, 2)
}

pub fn token_flicker<S: Real>(seq: &TokenSequence<S>) -> Result<S> {
    let refs: Vec<&[S]> = (0..seq.frames).map(|t| seq.frame(t)).collect();
    flicker_metric(&refs, seq.channels.max(1))
}
