//! A small sequential network with hand-written backpropagation:
//! 2-D convolution, batch normalisation, ReLU, dense layers and a sigmoid
//! head. Activations are `f64` and laid out `(batch, channel, row, col)`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Layout;
use crate::error::{Error, Result};

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;
/// Sigmoid outputs are kept this far inside `(0, 1)`.
const OUTPUT_MARGIN: f64 = 1e-15;

fn sigmoid(v: f64) -> f64 {
    (1.0 / (1.0 + (-v).exp())).clamp(OUTPUT_MARGIN, 1.0 - OUTPUT_MARGIN)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel: usize,
}

/// Network architecture descriptor.
///
/// Layers run conv..., flatten, dense...; `activations` has one entry per
/// conv and dense layer. Convolutions use stride 1 and "same" zero padding
/// (the extra row/column of an even kernel is padded after).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetArch {
    pub layout: Layout,
    pub n_r: usize,
    pub n_t: usize,
    pub n_s: usize,
    pub conv: Vec<ConvSpec>,
    /// Dense widths; the last one is the IRS size.
    pub dense: Vec<usize>,
    pub batch_norm: bool,
    pub activations: Vec<Activation>,
}

impl NetArch {
    fn with_widths(
        layout: Layout,
        n_r: usize,
        n_t: usize,
        n_s: usize,
        filters: [usize; 2],
        dense: [usize; 2],
    ) -> Self {
        Self {
            layout,
            n_r,
            n_t,
            n_s,
            conv: filters
                .iter()
                .map(|&f| ConvSpec { filters: f, kernel: 2 })
                .collect(),
            dense: vec![dense[0], dense[1], n_s],
            batch_norm: true,
            activations: vec![
                Activation::Relu,
                Activation::Relu,
                Activation::Relu,
                Activation::Relu,
                Activation::Sigmoid,
            ],
        }
    }

    /// Full-size network: 256 and 512 filters of 2x2, dense 64 N_s, 16 N_s, N_s.
    pub fn reference(layout: Layout, n_r: usize, n_t: usize, n_s: usize) -> Self {
        Self::with_widths(layout, n_r, n_t, n_s, [256, 512], [64 * n_s, 16 * n_s])
    }

    /// Reduced network for CPU training: 16 and 32 filters, dense 8 N_s, 4 N_s, N_s.
    pub fn desk(layout: Layout, n_r: usize, n_t: usize, n_s: usize) -> Self {
        Self::with_widths(layout, n_r, n_t, n_s, [16, 32], [8 * n_s, 4 * n_s])
    }

    pub fn input_shape(&self) -> Shape {
        self.layout.shape(self.n_r, self.n_t, self.n_s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_s == 0 || self.n_r == 0 || self.n_t == 0 {
            return Err(Error::Config("network dimensions must be positive".into()));
        }
        if self.dense.last() != Some(&self.n_s) {
            return Err(Error::Config(format!(
                "final dense width must equal N_s = {}",
                self.n_s
            )));
        }
        if self.activations.len() != self.conv.len() + self.dense.len() {
            return Err(Error::Config(
                "need one activation per conv and dense layer".into(),
            ));
        }
        if self.activations.last() != Some(&Activation::Sigmoid) {
            return Err(Error::Config("output activation must be sigmoid".into()));
        }
        if self.conv.iter().any(|c| c.filters == 0 || c.kernel == 0)
            || self.dense.iter().any(|&w| w == 0)
        {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        Ok(())
    }
}

/// Per-sample activation shape `(channels, rows, cols)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn flat(n: usize) -> Self {
        Self { c: n, h: 1, w: 1 }
    }

    pub fn len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    in_shape: Shape,
    out_c: usize,
    k: usize,
    /// `[out_c][in_c * k * k]` followed by `[out_c]` biases.
    pub(crate) params: Vec<f64>,
    pub(crate) grads: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    input: usize,
    output: usize,
    /// `[output][input]` followed by `[output]` biases.
    pub(crate) params: Vec<f64>,
    pub(crate) grads: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    shape: Shape,
    /// `gamma[c]` followed by `beta[c]`.
    pub(crate) params: Vec<f64>,
    pub(crate) grads: Vec<f64>,
    pub(crate) running_mean: Vec<f64>,
    pub(crate) running_var: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Conv(Conv2d),
    Norm(BatchNorm),
    Dense(Dense),
    Relu,
    Sigmoid,
}

/// Values a layer needs from its forward pass to run backward.
enum Cache {
    /// Layer input (im2col patches for convolutions).
    Input(Vec<f64>),
    Norm { xhat: Vec<f64>, inv_std: Vec<f64> },
    Output(Vec<f64>),
}

fn uniform_fill<R: Rng>(rng: &mut R, n: usize, bound: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
}

/// Strided view of a row-major or transposed matrix for [`gemm`].
#[derive(Clone, Copy)]
struct View<'a> {
    data: &'a [f64],
    rs: usize,
    cs: usize,
}

fn view(data: &[f64], rs: usize, cs: usize) -> View<'_> {
    View { data, rs, cs }
}

/// `c = a b + beta c` with `a` m x k, `b` k x n and `c` row-major m x n.
fn gemm(m: usize, k: usize, n: usize, a: View<'_>, b: View<'_>, beta: f64, c: &mut [f64]) {
    if m == 0 || n == 0 {
        return;
    }
    let reach = |v: View<'_>, rows: usize, cols: usize| (rows - 1) * v.rs + (cols - 1) * v.cs;
    assert!(c.len() >= m * n);
    if k > 0 {
        assert!(reach(a, m, k) < a.data.len() && reach(b, k, n) < b.data.len());
    }
    // SAFETY: the asserts above keep every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Conv2d {
    fn new<R: Rng>(rng: &mut R, in_shape: Shape, spec: ConvSpec) -> Self {
        let fan_in = in_shape.c * spec.kernel * spec.kernel;
        let bound = 1.0 / (fan_in as f64).sqrt();
        let params = uniform_fill(rng, spec.filters * fan_in + spec.filters, bound);
        Self {
            in_shape,
            out_c: spec.filters,
            k: spec.kernel,
            grads: vec![0.0; params.len()],
            params,
        }
    }

    fn out_shape(&self) -> Shape {
        Shape {
            c: self.out_c,
            ..self.in_shape
        }
    }

    fn patch_len(&self) -> usize {
        self.in_shape.c * self.k * self.k
    }

    /// Source index of each patch entry at each position (`None` in the
    /// zero padding), laid out `[position][c * k * k]`.
    fn patch_map(&self) -> Vec<Option<usize>> {
        let Shape { c, h, w } = self.in_shape;
        let k = self.k;
        let pad = (k - 1) / 2;
        let mut map = Vec::with_capacity(h * w * self.patch_len());
        for y in 0..h {
            for xx in 0..w {
                for ci in 0..c {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (y + ky).wrapping_sub(pad);
                            let ix = (xx + kx).wrapping_sub(pad);
                            map.push((iy < h && ix < w).then(|| (ci * h + iy) * w + ix));
                        }
                    }
                }
            }
        }
        map
    }

    /// im2col over the batch: `[sample][position][c * k * k]`.
    fn columns(&self, x: &[f64], n: usize) -> Vec<f64> {
        let map = self.patch_map();
        let in_len = self.in_shape.len();
        let mut cols = vec![0.0; n * map.len()];
        cols.par_chunks_mut(map.len())
            .zip(x.par_chunks(in_len))
            .for_each(|(dst, xs)| {
                for (d, src) in dst.iter_mut().zip(&map) {
                    if let Some(i) = src {
                        *d = xs[*i];
                    }
                }
            });
        cols
    }

    fn forward(&self, x: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
        let positions = self.in_shape.h * self.in_shape.w;
        let pl = self.patch_len();
        let oc = self.out_c;
        let cols = self.columns(x, n);
        let (weights, bias) = self.params.split_at(oc * pl);
        // tmp[(s, p)][f] = cols[(s, p)] . W[f]
        let mut tmp = vec![0.0; n * positions * oc];
        gemm(n * positions, pl, oc, view(&cols, pl, 1), view(weights, 1, pl), 0.0, &mut tmp);
        let mut out = vec![0.0; n * positions * oc];
        for s in 0..n {
            for p in 0..positions {
                let row = &tmp[(s * positions + p) * oc..][..oc];
                for f in 0..oc {
                    out[(s * oc + f) * positions + p] = row[f] + bias[f];
                }
            }
        }
        (out, cols)
    }

    fn backward(&mut self, cols: &[f64], dy: &[f64], n: usize, need_input_grad: bool) -> Vec<f64> {
        let positions = self.in_shape.h * self.in_shape.w;
        let pl = self.patch_len();
        let oc = self.out_c;
        // dyt[(s, p)][f]
        let mut dyt = vec![0.0; n * positions * oc];
        for s in 0..n {
            for f in 0..oc {
                for p in 0..positions {
                    dyt[(s * positions + p) * oc + f] = dy[(s * oc + f) * positions + p];
                }
            }
        }
        let rows = n * positions;
        let (gw, gb) = self.grads.split_at_mut(oc * pl);
        gemm(oc, rows, pl, view(&dyt, 1, oc), view(cols, pl, 1), 1.0, gw);
        for row in dyt.chunks(oc) {
            for (g, v) in gb.iter_mut().zip(row) {
                *g += v;
            }
        }
        if !need_input_grad {
            return Vec::new();
        }
        let mut dcols = vec![0.0; rows * pl];
        gemm(rows, oc, pl, view(&dyt, oc, 1), view(&self.params[..oc * pl], pl, 1), 0.0, &mut dcols);
        let map = self.patch_map();
        let in_len = self.in_shape.len();
        let mut dx = vec![0.0; n * in_len];
        dx.par_chunks_mut(in_len)
            .zip(dcols.par_chunks(map.len()))
            .for_each(|(dxs, dc)| {
                for (v, src) in dc.iter().zip(&map) {
                    if let Some(i) = src {
                        dxs[*i] += v;
                    }
                }
            });
        dx
    }
}

impl Dense {
    fn new<R: Rng>(rng: &mut R, input: usize, output: usize) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        let params = uniform_fill(rng, output * input + output, bound);
        Self {
            input,
            output,
            grads: vec![0.0; params.len()],
            params,
        }
    }

    fn forward(&self, x: &[f64], n: usize) -> Vec<f64> {
        let (inp, outp) = (self.input, self.output);
        let (weights, bias) = self.params.split_at(outp * inp);
        let mut out = vec![0.0; n * outp];
        for row in out.chunks_mut(outp) {
            row.copy_from_slice(bias);
        }
        gemm(n, inp, outp, view(x, inp, 1), view(weights, 1, inp), 1.0, &mut out);
        out
    }

    fn backward(&mut self, x: &[f64], dy: &[f64], n: usize, need_input_grad: bool) -> Vec<f64> {
        let (inp, outp) = (self.input, self.output);
        let (gw, gb) = self.grads.split_at_mut(outp * inp);
        gemm(outp, n, inp, view(dy, 1, outp), view(x, inp, 1), 1.0, gw);
        for row in dy.chunks(outp) {
            for (g, v) in gb.iter_mut().zip(row) {
                *g += v;
            }
        }
        if !need_input_grad {
            return Vec::new();
        }
        let mut dx = vec![0.0; n * inp];
        gemm(n, outp, inp, view(dy, outp, 1), view(&self.params[..outp * inp], inp, 1), 0.0, &mut dx);
        dx
    }
}

impl BatchNorm {
    fn new(shape: Shape) -> Self {
        let c = shape.c;
        let mut params = vec![1.0; c];
        params.extend(std::iter::repeat(0.0).take(c));
        Self {
            shape,
            grads: vec![0.0; 2 * c],
            params,
            running_mean: vec![0.0; c],
            running_var: vec![1.0; c],
        }
    }

    fn spatial(&self) -> usize {
        self.shape.h * self.shape.w
    }

    fn forward(&mut self, x: &[f64], n: usize, mode: Mode) -> (Vec<f64>, Cache) {
        let c = self.shape.c;
        let sp = self.spatial();
        let len = self.shape.len();
        let count = (n * sp) as f64;
        let (mean, var) = match mode {
            Mode::Eval => (self.running_mean.clone(), self.running_var.clone()),
            Mode::Train => {
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for s in 0..n {
                    for ch in 0..c {
                        let base = s * len + ch * sp;
                        mean[ch] += x[base..base + sp].iter().sum::<f64>();
                    }
                }
                mean.iter_mut().for_each(|m| *m /= count);
                for s in 0..n {
                    for ch in 0..c {
                        let base = s * len + ch * sp;
                        var[ch] += x[base..base + sp]
                            .iter()
                            .map(|v| (v - mean[ch]).powi(2))
                            .sum::<f64>();
                    }
                }
                var.iter_mut().for_each(|v| *v /= count);
                let unbias = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
                for ch in 0..c {
                    self.running_mean[ch] =
                        (1.0 - BN_MOMENTUM) * self.running_mean[ch] + BN_MOMENTUM * mean[ch];
                    self.running_var[ch] =
                        (1.0 - BN_MOMENTUM) * self.running_var[ch] + BN_MOMENTUM * var[ch] * unbias;
                }
                (mean, var)
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let (gamma, beta) = self.params.split_at(c);
        let mut xhat = vec![0.0; x.len()];
        let mut out = vec![0.0; x.len()];
        for s in 0..n {
            for ch in 0..c {
                let base = s * len + ch * sp;
                for i in base..base + sp {
                    xhat[i] = (x[i] - mean[ch]) * inv_std[ch];
                    out[i] = gamma[ch] * xhat[i] + beta[ch];
                }
            }
        }
        (out, Cache::Norm { xhat, inv_std })
    }

    fn backward(&mut self, xhat: &[f64], inv_std: &[f64], dy: &[f64], n: usize, mode: Mode) -> Vec<f64> {
        let c = self.shape.c;
        let sp = self.spatial();
        let len = self.shape.len();
        let count = (n * sp) as f64;
        let mut sum_dy = vec![0.0; c];
        let mut sum_dy_xhat = vec![0.0; c];
        for s in 0..n {
            for ch in 0..c {
                let base = s * len + ch * sp;
                for i in base..base + sp {
                    sum_dy[ch] += dy[i];
                    sum_dy_xhat[ch] += dy[i] * xhat[i];
                }
            }
        }
        for ch in 0..c {
            self.grads[ch] += sum_dy_xhat[ch];
            self.grads[c + ch] += sum_dy[ch];
        }
        let gamma = &self.params[..c];
        let mut dx = vec![0.0; dy.len()];
        for s in 0..n {
            for ch in 0..c {
                let base = s * len + ch * sp;
                let scale = gamma[ch] * inv_std[ch];
                for i in base..base + sp {
                    dx[i] = match mode {
                        Mode::Eval => scale * dy[i],
                        Mode::Train => {
                            scale * (dy[i] - sum_dy[ch] / count - xhat[i] * sum_dy_xhat[ch] / count)
                        }
                    };
                }
            }
        }
        dx
    }
}

/// Sequential network built from a [`NetArch`].
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub arch: NetArch,
    pub(crate) layers: Vec<Layer>,
}

/// Forward-pass record used by [`Model::backward`].
pub struct Trace {
    caches: Vec<Cache>,
    n: usize,
    mode: Mode,
}

impl Model {
    /// Initialises weights uniformly in `+-1/sqrt(fan_in)`.
    pub fn new<R: Rng>(arch: NetArch, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let mut layers = Vec::new();
        let mut shape = arch.input_shape();
        let mut acts = arch.activations.iter();
        let n_layers = arch.conv.len() + arch.dense.len();
        let mut index = 0;
        let mut push_act = |layers: &mut Vec<Layer>, shape: Shape, index: usize| {
            let act = *acts.next().expect("validated");
            if arch.batch_norm && index + 1 < n_layers {
                layers.push(Layer::Norm(BatchNorm::new(shape)));
            }
            layers.push(match act {
                Activation::Relu => Layer::Relu,
                Activation::Sigmoid => Layer::Sigmoid,
            });
        };
        for spec in &arch.conv {
            let conv = Conv2d::new(rng, shape, *spec);
            shape = conv.out_shape();
            layers.push(Layer::Conv(conv));
            push_act(&mut layers, shape, index);
            index += 1;
        }
        let mut width = shape.len();
        for &out in &arch.dense {
            layers.push(Layer::Dense(Dense::new(rng, width, out)));
            width = out;
            push_act(&mut layers, Shape::flat(width), index);
            index += 1;
        }
        Ok(Self { arch, layers })
    }

    pub fn input_len(&self) -> usize {
        self.arch.input_shape().len()
    }

    pub fn output_len(&self) -> usize {
        self.arch.n_s
    }

    pub fn num_params(&self) -> usize {
        self.param_slices().map(|p| p.len()).sum()
    }

    pub(crate) fn param_slices(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.layers.iter().filter_map(|l| match l {
            Layer::Conv(c) => Some(&c.params),
            Layer::Dense(d) => Some(&d.params),
            Layer::Norm(b) => Some(&b.params),
            _ => None,
        })
    }

    /// Mutable `(params, grads)` pairs in a fixed order.
    pub(crate) fn param_grad_pairs(&mut self) -> impl Iterator<Item = (&mut Vec<f64>, &mut Vec<f64>)> {
        self.layers.iter_mut().filter_map(|l| match l {
            Layer::Conv(c) => Some((&mut c.params, &mut c.grads)),
            Layer::Dense(d) => Some((&mut d.params, &mut d.grads)),
            Layer::Norm(b) => Some((&mut b.params, &mut b.grads)),
            _ => None,
        })
    }

    pub(crate) fn norm_stats_mut(&mut self) -> impl Iterator<Item = (&mut Vec<f64>, &mut Vec<f64>)> {
        self.layers.iter_mut().filter_map(|l| match l {
            Layer::Norm(b) => Some((&mut b.running_mean, &mut b.running_var)),
            _ => None,
        })
    }

    pub(crate) fn norm_stats(&self) -> impl Iterator<Item = (&Vec<f64>, &Vec<f64>)> {
        self.layers.iter().filter_map(|l| match l {
            Layer::Norm(b) => Some((&b.running_mean, &b.running_var)),
            _ => None,
        })
    }

    pub fn zero_grads(&mut self) {
        for (_, g) in self.param_grad_pairs() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Runs `n` samples stored contiguously in `x`. Train mode uses batch
    /// statistics and updates the running ones.
    pub fn forward(&mut self, x: &[f64], n: usize, mode: Mode) -> Result<(Vec<f64>, Trace)> {
        if x.len() != n * self.input_len() {
            return Err(Error::Config(format!(
                "input has {} values, expected {} samples of {}",
                x.len(),
                n,
                self.input_len()
            )));
        }
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        for layer in &mut self.layers {
            let (next, cache) = match layer {
                Layer::Conv(c) => {
                    let (out, cols) = c.forward(&cur, n);
                    (out, Cache::Input(cols))
                }
                Layer::Dense(d) => (d.forward(&cur, n), Cache::Input(cur)),
                Layer::Norm(b) => b.forward(&cur, n, mode),
                Layer::Relu => {
                    let out: Vec<f64> = cur.iter().map(|v| v.max(0.0)).collect();
                    (out.clone(), Cache::Output(out))
                }
                Layer::Sigmoid => {
                    let out: Vec<f64> = cur.iter().map(|&v| sigmoid(v)).collect();
                    (out.clone(), Cache::Output(out))
                }
            };
            caches.push(cache);
            cur = next;
        }
        Ok((cur, Trace { caches, n, mode }))
    }

    /// Inference without touching running statistics.
    pub fn predict(&self, x: &[f64], n: usize) -> Result<Vec<f64>> {
        if x.len() != n * self.input_len() {
            return Err(Error::Config(format!(
                "input has {} values, expected {} samples of {}",
                x.len(),
                n,
                self.input_len()
            )));
        }
        let mut cur = x.to_vec();
        for layer in &self.layers {
            cur = match layer {
                Layer::Conv(c) => c.forward(&cur, n).0,
                Layer::Dense(d) => d.forward(&cur, n),
                Layer::Norm(b) => {
                    let c = b.shape.c;
                    let sp = b.spatial();
                    let (gamma, beta) = b.params.split_at(c);
                    let mut out = cur;
                    for (i, v) in out.iter_mut().enumerate() {
                        let ch = (i / sp) % c;
                        *v = gamma[ch] * (*v - b.running_mean[ch])
                            / (b.running_var[ch] + BN_EPS).sqrt()
                            + beta[ch];
                    }
                    out
                }
                Layer::Relu => cur.into_iter().map(|v| v.max(0.0)).collect(),
                Layer::Sigmoid => cur.into_iter().map(sigmoid).collect(),
            };
        }
        Ok(cur)
    }

    /// Accumulates parameter gradients given `d loss / d output`.
    pub fn backward(&mut self, trace: Trace, d_out: &[f64]) {
        let Trace { caches, n, mode } = trace;
        let mut grad = d_out.to_vec();
        for (i, (layer, cache)) in self.layers.iter_mut().zip(caches).enumerate().rev() {
            let need_input = i > 0;
            grad = match (layer, cache) {
                (Layer::Conv(c), Cache::Input(cols)) => c.backward(&cols, &grad, n, need_input),
                (Layer::Dense(d), Cache::Input(x)) => d.backward(&x, &grad, n, need_input),
                (Layer::Norm(b), Cache::Norm { xhat, inv_std }) => {
                    b.backward(&xhat, &inv_std, &grad, n, mode)
                }
                (Layer::Relu, Cache::Output(y)) => grad
                    .iter()
                    .zip(&y)
                    .map(|(g, v)| if *v > 0.0 { *g } else { 0.0 })
                    .collect(),
                (Layer::Sigmoid, Cache::Output(y)) => {
                    grad.iter().zip(&y).map(|(g, v)| g * v * (1.0 - v)).collect()
                }
                _ => unreachable!("cache kind matches layer kind"),
            };
            if !need_input {
                break;
            }
        }
    }
}
