//! Dense feed-forward networks whose forward pass carries the two input
//! tangents (d/dx, d/dt) alongside the value, plus a reverse pass over that
//! augmented graph for parameter gradients.
//!
//! Input width is 2 (`x`, `t`), output width is 1, and the output layer is
//! affine. A forward evaluation yields a [`Jet`]; any scalar loss built from
//! jets can be pulled back through [`NetworkParams::backprop`] by supplying
//! one cotangent triple per sample.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::{Error, Point, Result};

/// Neuron nonlinearity. `Identity` makes the whole net affine; it exists for
/// diagnostics and tests, not for training runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Sin,
    Identity,
}

impl Activation {
    /// sigma(z) and sigma'(z) in one evaluation.
    #[inline]
    fn eval(self, z: f64) -> (f64, f64) {
        match self {
            Activation::Tanh => {
                let a = z.tanh();
                (a, 1.0 - a * a)
            }
            Activation::Sin => z.sin_cos(),
            Activation::Identity => (z, 1.0),
        }
    }

    /// sigma''(z) recovered from the stored pair (sigma, sigma'); no extra
    /// transcendental calls.
    #[inline]
    fn curvature(self, a: f64, s1: f64) -> f64 {
        match self {
            Activation::Tanh => -2.0 * a * s1,
            Activation::Sin => -a,
            Activation::Identity => 0.0,
        }
    }

    fn tag(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Sin => 1,
            Activation::Identity => 2,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Activation::Tanh),
            1 => Ok(Activation::Sin),
            2 => Ok(Activation::Identity),
            other => Err(Error::Checkpoint(format!("unknown activation tag {other}"))),
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "tanh" => Ok(Activation::Tanh),
            "sin" => Ok(Activation::Sin),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Config(format!("unknown activation '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Sin => "sin",
            Activation::Identity => "identity",
        }
    }
}

/// Network output and its first-order space/time partials at one point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub dx: f64,
    pub dt: f64,
}

/// Weights and biases of one network. `weights[k]` is row-major with shape
/// `widths[k+1] x widths[k]`; biases follow the same layer order.
#[derive(Clone, Debug)]
pub struct NetworkParams {
    pub(crate) widths: Vec<usize>,
    pub(crate) activation: Activation,
    pub(crate) weights: Vec<Vec<f64>>,
    pub(crate) biases: Vec<Vec<f64>>,
}

fn validate_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 2 {
        return Err(Error::Config(format!(
            "need at least input and output layer, got widths {widths:?}"
        )));
    }
    if widths[0] != 2 || *widths.last().unwrap() != 1 {
        return Err(Error::Config(format!(
            "expected input width 2 and output width 1, got widths {widths:?}"
        )));
    }
    if widths.iter().any(|&w| w == 0) {
        return Err(Error::Config(format!("zero-width layer in {widths:?}")));
    }
    Ok(())
}

/// 53 uniform random bits mapped to [0, 1). Kept explicit so the draw stream
/// is pinned by this crate, not by a distribution crate's internals.
#[inline]
fn unit_f64(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

impl NetworkParams {
    /// Glorot-uniform weights (bound `sqrt(6 / (fan_in + fan_out))`), zero
    /// biases. The same seed always yields bit-identical parameters.
    pub fn init(widths: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        validate_widths(widths)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(widths.len() - 1);
        let mut biases = Vec::with_capacity(widths.len() - 1);
        for k in 0..widths.len() - 1 {
            let (fan_in, fan_out) = (widths[k], widths[k + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = (0..fan_in * fan_out)
                .map(|_| (2.0 * unit_f64(&mut rng) - 1.0) * bound)
                .collect();
            weights.push(w);
            biases.push(vec![0.0; fan_out]);
        }
        Ok(NetworkParams {
            widths: widths.to_vec(),
            activation,
            weights,
            biases,
        })
    }

    /// All-zero parameters; the network is identically `0`.
    pub fn zeros(widths: &[usize], activation: Activation) -> Result<Self> {
        validate_widths(widths)?;
        let weights = (0..widths.len() - 1)
            .map(|k| vec![0.0; widths[k] * widths[k + 1]])
            .collect();
        let biases = (0..widths.len() - 1).map(|k| vec![0.0; widths[k + 1]]).collect();
        Ok(NetworkParams {
            widths: widths.to_vec(),
            activation,
            weights,
            biases,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// (fan_in, fan_out) of layer `k`.
    pub fn layer_dims(&self, k: usize) -> (usize, usize) {
        (self.widths[k], self.widths[k + 1])
    }

    pub fn weight(&self, k: usize, row: usize, col: usize) -> f64 {
        self.weights[k][row * self.widths[k] + col]
    }

    pub fn set_weight(&mut self, k: usize, row: usize, col: usize, v: f64) {
        self.weights[k][row * self.widths[k] + col] = v;
    }

    pub fn bias(&self, k: usize, row: usize) -> f64 {
        self.biases[k][row]
    }

    pub fn set_bias(&mut self, k: usize, row: usize, v: f64) {
        self.biases[k][row] = v;
    }

    /// Value and input tangents at a single point. Convenience wrapper; batch
    /// work should go through [`NetworkParams::forward_batch`].
    pub fn forward_jet(&self, p: Point) -> Jet {
        let mut trace = BatchTrace::new();
        self.forward_batch(std::slice::from_ref(&p), true, &mut trace);
        trace.out[0]
    }

    pub fn forward_value(&self, p: Point) -> f64 {
        let mut trace = BatchTrace::new();
        self.forward_batch(std::slice::from_ref(&p), false, &mut trace);
        trace.out[0].value
    }

    /// Forward pass over a batch, recording everything the reverse pass
    /// needs. With `jets == false` the tangent streams are skipped, which is
    /// cheaper and enough for losses that only read values.
    pub fn forward_batch(&self, points: &[Point], jets: bool, trace: &mut BatchTrace) {
        let n = points.len();
        let n_hidden = self.n_layers() - 1;
        trace.prepare(self, n, jets);
        trace.points.clear();
        trace.points.extend_from_slice(points);

        let max_w = *self.widths.iter().max().unwrap();
        let mut cur = trace.scratch_take(6, max_w);
        for (p_idx, p) in points.iter().enumerate() {
            // stream 0: value, 1: x-tangent, 2: t-tangent
            cur[0][0] = p.x;
            cur[0][1] = p.t;
            cur[1][0] = 1.0;
            cur[1][1] = 0.0;
            cur[2][0] = 0.0;
            cur[2][1] = 1.0;
            let mut in_w = 2usize;
            for k in 0..self.n_layers() {
                let out_w = self.widths[k + 1];
                let w = &self.weights[k];
                let b = &self.biases[k];
                for i in 0..out_w {
                    let row = &w[i * in_w..(i + 1) * in_w];
                    let mut z = b[i];
                    for (wj, aj) in row.iter().zip(&cur[0][..in_w]) {
                        z += wj * aj;
                    }
                    let (mut zx, mut zt) = (0.0, 0.0);
                    if jets {
                        for (wj, aj) in row.iter().zip(&cur[1][..in_w]) {
                            zx += wj * aj;
                        }
                        for (wj, aj) in row.iter().zip(&cur[2][..in_w]) {
                            zt += wj * aj;
                        }
                    }
                    if k == self.n_layers() - 1 {
                        trace.out[p_idx] = Jet { value: z, dx: zx, dt: zt };
                    } else {
                        let (a, s1) = self.activation.eval(z);
                        let at = p_idx * out_w + i;
                        trace.act[k][at] = a;
                        trace.s1[k][at] = s1;
                        cur[3][i] = a;
                        if jets {
                            trace.zx[k][at] = zx;
                            trace.zt[k][at] = zt;
                            cur[4][i] = s1 * zx;
                            cur[5][i] = s1 * zt;
                        }
                    }
                }
                if k < n_hidden {
                    cur.swap(0, 3);
                    cur.swap(1, 4);
                    cur.swap(2, 5);
                    in_w = out_w;
                }
            }
        }
        trace.scratch_put(cur);
    }

    /// Accumulate parameter gradients for a batch whose forward pass was
    /// recorded in `trace`. `cotangents[i]` holds the partial derivatives of
    /// the loss with respect to sample `i`'s (value, dx, dt).
    pub fn backprop_batch(
        &self,
        trace: &BatchTrace,
        cotangents: &[Jet],
        grad: &mut GradientBuffer,
    ) -> Result<()> {
        if cotangents.len() != trace.points.len() {
            return Err(Error::Shape(format!(
                "{} cotangents for a batch of {}",
                cotangents.len(),
                trace.points.len()
            )));
        }
        if !trace.jets && cotangents.iter().any(|c| c.dx != 0.0 || c.dt != 0.0) {
            return Err(Error::Shape(
                "tangent cotangents supplied for a value-only trace".into(),
            ));
        }
        grad.check_shape(self)?;

        let max_w = *self.widths.iter().max().unwrap();
        let mut buf = vec![0.0f64; 9 * max_w];
        let (lam, rest) = buf.split_at_mut(3 * max_w);
        let (lam_in, act_in) = rest.split_at_mut(3 * max_w);

        for (p_idx, (p, cot)) in trace.points.iter().zip(cotangents).enumerate() {
            // seed at the affine output layer (width 1)
            lam[0] = cot.value;
            lam[max_w] = cot.dx;
            lam[2 * max_w] = cot.dt;
            for k in (0..self.n_layers()).rev() {
                let (in_w, out_w) = (self.widths[k], self.widths[k + 1]);
                let w = &self.weights[k];
                // inputs that fed layer k on the forward pass
                if k == 0 {
                    act_in[0] = p.x;
                    act_in[1] = p.t;
                    act_in[max_w] = 1.0;
                    act_in[max_w + 1] = 0.0;
                    act_in[2 * max_w] = 0.0;
                    act_in[2 * max_w + 1] = 1.0;
                } else {
                    let base = p_idx * in_w;
                    for j in 0..in_w {
                        let a = trace.act[k - 1][base + j];
                        act_in[j] = a;
                        if trace.jets {
                            let s1 = trace.s1[k - 1][base + j];
                            act_in[max_w + j] = s1 * trace.zx[k - 1][base + j];
                            act_in[2 * max_w + j] = s1 * trace.zt[k - 1][base + j];
                        } else {
                            act_in[max_w + j] = 0.0;
                            act_in[2 * max_w + j] = 0.0;
                        }
                    }
                }
                let gw = &mut grad.weights[k];
                let gb = &mut grad.biases[k];
                for i in 0..out_w {
                    let (lz, lzx, lzt) = (lam[i], lam[max_w + i], lam[2 * max_w + i]);
                    gb[i] += lz;
                    let grow = &mut gw[i * in_w..(i + 1) * in_w];
                    for j in 0..in_w {
                        grow[j] += lz * act_in[j] + lzx * act_in[max_w + j] + lzt * act_in[2 * max_w + j];
                    }
                }
                if k == 0 {
                    break;
                }
                // cotangents of layer k's inputs
                for j in 0..in_w {
                    let (mut la, mut lax, mut lat) = (0.0, 0.0, 0.0);
                    for i in 0..out_w {
                        let wij = w[i * in_w + j];
                        la += wij * lam[i];
                        lax += wij * lam[max_w + i];
                        lat += wij * lam[2 * max_w + i];
                    }
                    lam_in[j] = la;
                    lam_in[max_w + j] = lax;
                    lam_in[2 * max_w + j] = lat;
                }
                // through the activation of hidden layer k-1
                let base = p_idx * in_w;
                for j in 0..in_w {
                    let a = trace.act[k - 1][base + j];
                    let s1 = trace.s1[k - 1][base + j];
                    let la = lam_in[j];
                    let lax = lam_in[max_w + j];
                    let lat = lam_in[2 * max_w + j];
                    if trace.jets {
                        let s2 = self.activation.curvature(a, s1);
                        let zx = trace.zx[k - 1][base + j];
                        let zt = trace.zt[k - 1][base + j];
                        lam[j] = s1 * la + s2 * (zx * lax + zt * lat);
                        lam[max_w + j] = s1 * lax;
                        lam[2 * max_w + j] = s1 * lat;
                    } else {
                        lam[j] = s1 * la;
                        lam[max_w + j] = 0.0;
                        lam[2 * max_w + j] = 0.0;
                    }
                }
            }
        }
        Ok(())
    }

    /// One-shot reverse pass: forward the batch with jets, then pull the
    /// given cotangents back to a fresh gradient buffer.
    pub fn backprop(&self, points: &[Point], cotangents: &[Jet]) -> Result<GradientBuffer> {
        if points.len() != cotangents.len() {
            return Err(Error::Shape(format!(
                "{} points but {} cotangents",
                points.len(),
                cotangents.len()
            )));
        }
        let mut trace = BatchTrace::new();
        self.forward_batch(points, true, &mut trace);
        let mut grad = GradientBuffer::zeros_like(self);
        self.backprop_batch(&trace, cotangents, &mut grad)?;
        Ok(grad)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut r)
    }

    /// Checkpoint layout: magic `WNET`, format version, activation tag,
    /// layer-width table, then all weights layer by layer in row-major order,
    /// then all biases. Every number is little-endian; floats are f64 bits,
    /// so a round trip is exact.
    pub fn write_to<W: Write>(&self, out: &mut W) -> Result<()> {
        out.write_all(b"WNET")?;
        out.write_all(&[1u8, self.activation.tag()])?;
        out.write_all(&(self.widths.len() as u32).to_le_bytes())?;
        for &w in &self.widths {
            out.write_all(&(w as u64).to_le_bytes())?;
        }
        for layer in &self.weights {
            for &v in layer {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        for layer in &self.biases {
            for &v in layer {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(inp: &mut R) -> Result<Self> {
        let mut head = [0u8; 6];
        read_exact(inp, &mut head)?;
        if &head[..4] != b"WNET" {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        if head[4] != 1 {
            return Err(Error::Checkpoint(format!("unsupported format version {}", head[4])));
        }
        let activation = Activation::from_tag(head[5])?;
        let mut n_widths = [0u8; 4];
        read_exact(inp, &mut n_widths)?;
        let n_widths = u32::from_le_bytes(n_widths) as usize;
        if n_widths < 2 || n_widths > 64 {
            return Err(Error::Checkpoint(format!("implausible layer count {n_widths}")));
        }
        let mut widths = Vec::with_capacity(n_widths);
        for _ in 0..n_widths {
            let mut b = [0u8; 8];
            read_exact(inp, &mut b)?;
            let w = u64::from_le_bytes(b);
            if w == 0 || w > 1 << 20 {
                return Err(Error::Checkpoint(format!("implausible layer width {w}")));
            }
            widths.push(w as usize);
        }
        validate_widths(&widths).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let read_f64 = |inp: &mut R| -> Result<f64> {
            let mut b = [0u8; 8];
            read_exact(inp, &mut b)?;
            Ok(f64::from_le_bytes(b))
        };
        let mut weights = Vec::with_capacity(n_widths - 1);
        for k in 0..n_widths - 1 {
            let mut layer = Vec::with_capacity(widths[k] * widths[k + 1]);
            for _ in 0..widths[k] * widths[k + 1] {
                layer.push(read_f64(inp)?);
            }
            weights.push(layer);
        }
        let mut biases = Vec::with_capacity(n_widths - 1);
        for k in 0..n_widths - 1 {
            let mut layer = Vec::with_capacity(widths[k + 1]);
            for _ in 0..widths[k + 1] {
                layer.push(read_f64(inp)?);
            }
            biases.push(layer);
        }
        let mut probe = [0u8; 1];
        if inp.read(&mut probe)? != 0 {
            return Err(Error::Checkpoint("trailing bytes after parameters".into()));
        }
        Ok(NetworkParams {
            widths,
            activation,
            weights,
            biases,
        })
    }
}

fn read_exact<R: Read>(inp: &mut R, buf: &mut [u8]) -> Result<()> {
    inp.read_exact(buf)
        .map_err(|_| Error::Checkpoint("truncated checkpoint".into()))
}

/// Recorded forward pass of one batch, reusable across epochs to avoid
/// reallocation. Hidden layer `k` stores sigma(z), sigma'(z) and, when jets
/// are on, the raw pre-activation tangents.
pub struct BatchTrace {
    jets: bool,
    points: Vec<Point>,
    act: Vec<Vec<f64>>,
    s1: Vec<Vec<f64>>,
    zx: Vec<Vec<f64>>,
    zt: Vec<Vec<f64>>,
    out: Vec<Jet>,
    scratch: Vec<Vec<f64>>,
}

impl BatchTrace {
    pub fn new() -> Self {
        BatchTrace {
            jets: false,
            points: Vec::new(),
            act: Vec::new(),
            s1: Vec::new(),
            zx: Vec::new(),
            zt: Vec::new(),
            out: Vec::new(),
            scratch: Vec::new(),
        }
    }

    pub fn out(&self) -> &[Jet] {
        &self.out
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn prepare(&mut self, params: &NetworkParams, n: usize, jets: bool) {
        self.jets = jets;
        let n_hidden = params.n_layers() - 1;
        self.act.resize_with(n_hidden, Vec::new);
        self.s1.resize_with(n_hidden, Vec::new);
        self.zx.resize_with(n_hidden, Vec::new);
        self.zt.resize_with(n_hidden, Vec::new);
        self.act.truncate(n_hidden);
        self.s1.truncate(n_hidden);
        self.zx.truncate(n_hidden);
        self.zt.truncate(n_hidden);
        for k in 0..n_hidden {
            let len = n * params.widths[k + 1];
            self.act[k].resize(len, 0.0);
            self.s1[k].resize(len, 0.0);
            if jets {
                self.zx[k].resize(len, 0.0);
                self.zt[k].resize(len, 0.0);
            }
        }
        self.out.resize(n, Jet::default());
    }

    fn scratch_take(&mut self, count: usize, width: usize) -> Vec<Vec<f64>> {
        let mut bufs = std::mem::take(&mut self.scratch);
        bufs.resize_with(count, Vec::new);
        for b in &mut bufs {
            b.clear();
            b.resize(width, 0.0);
        }
        bufs
    }

    fn scratch_put(&mut self, bufs: Vec<Vec<f64>>) {
        self.scratch = bufs;
    }
}

impl Default for BatchTrace {
    fn default() -> Self {
        Self::new()
    }
}

/// Accumulator shaped like a [`NetworkParams`].
#[derive(Clone, Debug)]
pub struct GradientBuffer {
    pub(crate) weights: Vec<Vec<f64>>,
    pub(crate) biases: Vec<Vec<f64>>,
}

impl GradientBuffer {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        GradientBuffer {
            weights: params.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: params.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn clear(&mut self) {
        for w in &mut self.weights {
            w.iter_mut().for_each(|v| *v = 0.0);
        }
        for b in &mut self.biases {
            b.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn weight(&self, k: usize, row: usize, col: usize, fan_in: usize) -> f64 {
        self.weights[k][row * fan_in + col]
    }

    pub fn bias(&self, k: usize, row: usize) -> f64 {
        self.biases[k][row]
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(self.biases.iter()).all(|layer| layer.iter().all(|v| v.is_finite()))
    }

    fn check_shape(&self, params: &NetworkParams) -> Result<()> {
        let ok = self.weights.len() == params.weights.len()
            && self.biases.len() == params.biases.len()
            && self.weights.iter().zip(&params.weights).all(|(a, b)| a.len() == b.len())
            && self.biases.iter().zip(&params.biases).all(|(a, b)| a.len() == b.len());
        if ok {
            Ok(())
        } else {
            Err(Error::Shape("gradient buffer does not match network".into()))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    PlainGd,
    Adam,
}

impl OptimizerKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "gd" => Ok(OptimizerKind::PlainGd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::Config(format!("unknown optimizer '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::PlainGd => "gd",
            OptimizerKind::Adam => "adam",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Descend,
    Ascend,
}

/// Plain gradient steps or Adam with the usual defaults
/// (beta1 = 0.9, beta2 = 0.999, eps = 1e-8). Ascent flips the gradient sign
/// before the update, so maximization shares all the moment bookkeeping.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step_count: u64,
    m: Option<GradientBuffer>,
    v: Option<GradientBuffer>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Optimizer {
            kind,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step_count: 0,
            m: None,
            v: None,
        }
    }

    /// Drop all moment state, as after a parameter re-initialization.
    pub fn reset(&mut self) {
        self.step_count = 0;
        self.m = None;
        self.v = None;
    }

    pub fn step(
        &mut self,
        params: &mut NetworkParams,
        grad: &GradientBuffer,
        dir: Direction,
    ) -> Result<()> {
        grad.check_shape(params)?;
        if !grad.is_finite() {
            return Err(Error::NonFiniteGradient);
        }
        let sign = match dir {
            Direction::Descend => 1.0,
            Direction::Ascend => -1.0,
        };
        match self.kind {
            OptimizerKind::PlainGd => {
                for (pw, gw) in params.weights.iter_mut().zip(&grad.weights) {
                    for (p, g) in pw.iter_mut().zip(gw) {
                        *p -= self.lr * sign * g;
                    }
                }
                for (pb, gb) in params.biases.iter_mut().zip(&grad.biases) {
                    for (p, g) in pb.iter_mut().zip(gb) {
                        *p -= self.lr * sign * g;
                    }
                }
            }
            OptimizerKind::Adam => {
                if self.m.is_none() {
                    self.m = Some(GradientBuffer::zeros_like(params));
                    self.v = Some(GradientBuffer::zeros_like(params));
                }
                self.step_count += 1;
                let bc1 = 1.0 - self.beta1.powi(self.step_count as i32);
                let bc2 = 1.0 - self.beta2.powi(self.step_count as i32);
                let m = self.m.as_mut().unwrap();
                let v = self.v.as_mut().unwrap();
                let apply = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
                    for i in 0..p.len() {
                        let gi = sign * g[i];
                        m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                        v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                        let mhat = m[i] / bc1;
                        let vhat = v[i] / bc2;
                        p[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
                    }
                };
                for k in 0..params.weights.len() {
                    apply(&mut params.weights[k], &grad.weights[k], &mut m.weights[k], &mut v.weights[k]);
                    apply(&mut params.biases[k], &grad.biases[k], &mut m.biases[k], &mut v.biases[k]);
                }
            }
        }
        Ok(())
    }
}
