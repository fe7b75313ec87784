//! From-scratch dense feed-forward autoencoder: Glorot initialization,
//! forward pass, mean-square reconstruction loss, reverse-mode gradients,
//! and SGD/Adam steps. Everything runs in double precision.
//!
//! Constraint penalties act on the bottleneck only: callers can inject an
//! external gradient on the bottleneck outputs, which is added to the
//! reconstruction path's upstream gradient before backpropagation continues
//! into the encoder. The decoder's gradient stays purely
//! reconstruction-driven.

use std::io::{Read, Write};
use std::path::Path;

use crate::constraints::Lambdas;
use crate::error::{Error, Result};
use crate::mat::{axpy, Mat};
use crate::rng::{streams, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative as a function of the pre-activation. ReLU uses 0 at the
    /// kink (a valid subgradient choice).
    #[inline]
    fn derivative(&self, pre: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = pre.tanh();
                1.0 - t * t
            }
        }
    }

    fn tag(&self) -> u8 {
        match self {
            Activation::Linear => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Linear),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Tanh),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Activation::Linear),
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Network(format!("unknown activation '{other}'"))),
        }
    }
}

/// One dense layer; weights are stored `out x in` so each output unit's
/// weights form a contiguous row.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weights: Mat,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    fn forward(&self, input: &Mat) -> (Mat, Mat) {
        let mut pre = input.matmul_nt(&self.weights);
        for b in 0..pre.rows() {
            let row = pre.row_mut(b);
            for (v, bias) in row.iter_mut().zip(&self.biases) {
                *v += bias;
            }
        }
        let mut post = pre.clone();
        if self.activation != Activation::Linear {
            for v in post.data_mut() {
                *v = self.activation.apply(*v);
            }
        }
        (pre, post)
    }
}

/// Encoder/decoder dense stacks. The last encoder layer is the bottleneck
/// and always has linear activation.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub encoder: Vec<Layer>,
    pub decoder: Vec<Layer>,
}

impl Network {
    pub fn input_dim(&self) -> usize {
        self.encoder[0].in_dim()
    }

    pub fn bottleneck_dim(&self) -> usize {
        self.encoder.last().unwrap().out_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.decoder.last().unwrap().out_dim()
    }

    fn validate(&self) -> Result<()> {
        if self.encoder.is_empty() || self.decoder.is_empty() {
            return Err(Error::Network("encoder and decoder must be non-empty".into()));
        }
        let mut dim = self.input_dim();
        for layer in self.encoder.iter().chain(&self.decoder) {
            if layer.in_dim() != dim {
                return Err(Error::ShapeMismatch {
                    expected: format!("layer input {dim}"),
                    got: format!("{}", layer.in_dim()),
                });
            }
            if layer.biases.len() != layer.out_dim() {
                return Err(Error::Network("bias length mismatch".into()));
            }
            dim = layer.out_dim();
        }
        if dim != self.input_dim() {
            return Err(Error::Network("decoder output width must equal encoder input width".into()));
        }
        if self.encoder.last().unwrap().activation != Activation::Linear {
            return Err(Error::Network("bottleneck activation must be linear".into()));
        }
        Ok(())
    }
}

/// Layer-width chain for [`init_network`]; the bottleneck is the unique
/// minimum entry of the chain.
#[derive(Clone, Debug, PartialEq)]
pub struct NetConfig {
    pub widths: Vec<usize>,
    pub hidden_activation: Activation,
}

impl NetConfig {
    /// The default architecture for a given feature dimension:
    /// `D -> 500 -> 100 -> 50 -> 20 -> 2 -> 20 -> 50 -> 100 -> 500 -> D`.
    pub fn for_input_dim(d: usize) -> Self {
        let hidden = [500, 100, 50, 20];
        let mut widths = Vec::with_capacity(2 * hidden.len() + 3);
        widths.push(d);
        widths.extend(&hidden);
        widths.push(2);
        widths.extend(hidden.iter().rev());
        widths.push(d);
        NetConfig { widths, hidden_activation: Activation::Relu }
    }

    pub fn bottleneck_index(&self) -> Result<usize> {
        let widths = &self.widths;
        if widths.len() < 3 {
            return Err(Error::Network("width chain needs at least 3 entries".into()));
        }
        let min = *widths.iter().min().unwrap();
        let positions: Vec<usize> =
            widths.iter().enumerate().filter(|&(_, w)| *w == min).map(|(i, _)| i).collect();
        if positions.len() != 1 {
            return Err(Error::Network(format!(
                "width chain must have a unique minimum (the bottleneck), got {positions:?}"
            )));
        }
        let b = positions[0];
        if b == 0 || b == widths.len() - 1 {
            return Err(Error::Network("bottleneck cannot be the input or output layer".into()));
        }
        if widths[b] >= widths[0] {
            return Err(Error::Network("bottleneck width must be below the input width".into()));
        }
        Ok(b)
    }
}

/// Initializes a network from a width chain. Weights are Glorot-uniform
/// (`+-sqrt(6/(fan_in+fan_out))`), biases zero; deterministic per seed.
pub fn init_network(config: &NetConfig, seed: u64) -> Result<Network> {
    let b = config.bottleneck_index()?;
    if config.widths.contains(&0) {
        return Err(Error::Network("zero-width layer".into()));
    }
    let mut rng = Rng::derive(seed, streams::INIT);
    let make_stack = |rng: &mut Rng, widths: &[usize], last_linear_all: bool| -> Vec<Layer> {
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for w in widths.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weights = Mat::from_fn(fan_out, fan_in, |_, _| rng.uniform(-bound, bound));
            let is_last = layers.len() == widths.len() - 2;
            let activation = if is_last && last_linear_all {
                Activation::Linear
            } else {
                config.hidden_activation
            };
            layers.push(Layer { weights, biases: vec![0.0; fan_out], activation });
        }
        layers
    };
    let net = Network {
        encoder: make_stack(&mut rng, &config.widths[..=b], true),
        decoder: make_stack(&mut rng, &config.widths[b..], true),
    };
    net.validate()?;
    Ok(net)
}

/// Pre- and post-activation values of one layer over a batch.
#[derive(Clone, Debug)]
pub struct LayerCache {
    pub pre: Mat,
    pub post: Mat,
}

/// Forward values of one dense stack.
#[derive(Clone, Debug)]
pub struct StackCache {
    pub input: Mat,
    pub layers: Vec<LayerCache>,
}

impl StackCache {
    pub fn output(&self) -> &Mat {
        &self.layers.last().expect("non-empty stack").post
    }
}

/// Forward values of the full autoencoder over a batch.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub encoder: StackCache,
    pub decoder: StackCache,
}

impl ForwardCache {
    pub fn bottleneck(&self) -> &Mat {
        self.encoder.output()
    }

    pub fn reconstruction(&self) -> &Mat {
        self.decoder.output()
    }
}

fn run_stack(layers: &[Layer], input: &Mat) -> StackCache {
    let mut caches = Vec::with_capacity(layers.len());
    let mut current = input;
    for layer in layers {
        let (pre, post) = layer.forward(current);
        caches.push(LayerCache { pre, post });
        current = &caches.last().unwrap().post;
    }
    StackCache { input: input.clone(), layers: caches }
}

fn check_batch(net: &Network, batch: &Mat) -> Result<()> {
    if batch.cols() != net.input_dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("batch width {}", net.input_dim()),
            got: format!("{}", batch.cols()),
        });
    }
    if batch.rows() == 0 {
        return Err(Error::Network("empty batch".into()));
    }
    if !batch.is_finite() {
        return Err(Error::Network("batch contains non-finite values".into()));
    }
    Ok(())
}

/// Full forward pass. Returns reconstructions, bottleneck outputs, and the
/// cache needed for backpropagation.
pub fn forward(net: &Network, batch: &Mat) -> Result<(Mat, Mat, ForwardCache)> {
    check_batch(net, batch)?;
    let encoder = run_stack(&net.encoder, batch);
    let decoder = run_stack(&net.decoder, encoder.output());
    let cache = ForwardCache { encoder, decoder };
    Ok((cache.reconstruction().clone(), cache.bottleneck().clone(), cache))
}

/// Encoder-only forward pass (used for constraint batches and for
/// extracting the final chart).
pub fn encoder_forward(net: &Network, batch: &Mat) -> Result<(Mat, StackCache)> {
    check_batch(net, batch)?;
    let cache = run_stack(&net.encoder, batch);
    Ok((cache.output().clone(), cache))
}

/// Encoder output without keeping the cache.
pub fn encode(net: &Network, batch: &Mat) -> Result<Mat> {
    Ok(encoder_forward(net, batch)?.0)
}

/// Gradient of one dense layer's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrads {
    pub d_weights: Mat,
    pub d_biases: Vec<f64>,
}

impl LayerGrads {
    fn zeros_like(layer: &Layer) -> Self {
        LayerGrads {
            d_weights: Mat::zeros(layer.weights.rows(), layer.weights.cols()),
            d_biases: vec![0.0; layer.biases.len()],
        }
    }
}

/// Gradients for the whole network, mirroring its layer structure.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub encoder: Vec<LayerGrads>,
    pub decoder: Vec<LayerGrads>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Gradients {
            encoder: net.encoder.iter().map(LayerGrads::zeros_like).collect(),
            decoder: net.decoder.iter().map(LayerGrads::zeros_like).collect(),
        }
    }

    /// Adds encoder-stack gradients (from a constraint pass) in place.
    pub fn add_encoder(&mut self, other: &[LayerGrads]) {
        assert_eq!(self.encoder.len(), other.len());
        for (a, b) in self.encoder.iter_mut().zip(other) {
            a.d_weights.add_assign(&b.d_weights);
            for (x, y) in a.d_biases.iter_mut().zip(&b.d_biases) {
                *x += y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.encoder.iter().chain(&self.decoder).all(|g| {
            g.d_weights.is_finite() && g.d_biases.iter().all(|v| v.is_finite())
        })
    }
}

/// Backpropagates `upstream` (gradient w.r.t. the stack output) through a
/// stack, producing per-layer parameter gradients and the gradient w.r.t.
/// the stack input.
fn stack_backward(layers: &[Layer], cache: &StackCache, upstream: &Mat) -> (Vec<LayerGrads>, Mat) {
    let mut grads: Vec<LayerGrads> = layers.iter().map(LayerGrads::zeros_like).collect();
    let mut up = upstream.clone();
    for (idx, layer) in layers.iter().enumerate().rev() {
        let lc = &cache.layers[idx];
        // d_pre = upstream o sigma'(pre)
        let mut d_pre = up;
        if layer.activation != Activation::Linear {
            for (v, pre) in d_pre.data_mut().iter_mut().zip(lc.pre.data()) {
                *v *= layer.activation.derivative(*pre);
            }
        }
        let input = if idx == 0 { &cache.input } else { &cache.layers[idx - 1].post };
        let g = &mut grads[idx];
        for b in 0..d_pre.rows() {
            let gp = d_pre.row(b);
            let x = input.row(b);
            for (o, &gv) in gp.iter().enumerate() {
                if gv != 0.0 {
                    axpy(g.d_weights.row_mut(o), gv, x);
                }
                g.d_biases[o] += gv;
            }
        }
        up = d_pre.matmul_nn(&layer.weights);
    }
    (grads, up)
}

/// Mean-square reconstruction loss over the batch and its parameter
/// gradients. `external_bottleneck_grads`, when given, is added to the
/// bottleneck's upstream gradient before backpropagation continues into the
/// encoder; it does not touch the decoder.
pub fn loss_and_gradients(
    net: &Network,
    batch: &Mat,
    external_bottleneck_grads: Option<&Mat>,
) -> Result<(f64, Gradients)> {
    let (recon, bottleneck, cache) = forward(net, batch)?;
    if let Some(ext) = external_bottleneck_grads {
        if ext.rows() != batch.rows() || ext.cols() != bottleneck.cols() {
            return Err(Error::ShapeMismatch {
                expected: format!("external grads {}x{}", batch.rows(), bottleneck.cols()),
                got: format!("{}x{}", ext.rows(), ext.cols()),
            });
        }
    }

    let b = batch.rows() as f64;
    let mut loss = 0.0;
    let mut d_recon = Mat::zeros(recon.rows(), recon.cols());
    for r in 0..recon.rows() {
        let x = batch.row(r);
        let x_hat = recon.row(r);
        let d = d_recon.row_mut(r);
        for ((xv, rv), dv) in x.iter().zip(x_hat).zip(d.iter_mut()) {
            let diff = rv - xv;
            loss += diff * diff;
            *dv = 2.0 * diff / b;
        }
    }
    loss /= b;

    let (decoder_grads, mut d_bottleneck) = stack_backward(&net.decoder, &cache.decoder, &d_recon);
    if let Some(ext) = external_bottleneck_grads {
        d_bottleneck.add_assign(ext);
    }
    let (encoder_grads, _) = stack_backward(&net.encoder, &cache.encoder, &d_bottleneck);

    Ok((loss, Gradients { encoder: encoder_grads, decoder: decoder_grads }))
}

/// Parameter gradients of the encoder stack alone for a given upstream
/// gradient on its output (the constraint-pass backward).
pub fn encoder_gradients(net: &Network, cache: &StackCache, upstream: &Mat) -> Vec<LayerGrads> {
    stack_backward(&net.encoder, cache, upstream).0
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl OptimizerKind {
    pub fn adam_default() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Training hyperparameters. The per-kind constraint weights multiply the
/// per-constraint weights; the constraint term is averaged over the
/// constraint batch.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub epochs: usize,
    pub data_batch_size: usize,
    pub constraint_batch_size: usize,
    pub lambdas: Lambdas,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            optimizer: OptimizerKind::adam_default(),
            epochs: 200,
            data_batch_size: 64,
            constraint_batch_size: 64,
            lambdas: Lambdas::default(),
            seed: 3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::Network("learning_rate must be positive".into()));
        }
        if self.data_batch_size == 0 || self.constraint_batch_size == 0 {
            return Err(Error::Network("batch sizes must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Network("epochs must be at least 1".into()));
        }
        let l = &self.lambdas;
        if [l.fad, l.frd, l.mad, l.mrd].iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::Network("constraint weights must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Optimizer state; Adam's moment estimates mirror the gradient structure.
#[derive(Clone, Debug)]
pub struct OptState {
    step: u64,
    m: Gradients,
    v: Gradients,
}

impl OptState {
    pub fn new(net: &Network) -> Self {
        OptState { step: 0, m: Gradients::zeros_like(net), v: Gradients::zeros_like(net) }
    }
}

/// Applies one optimizer step in place.
pub fn optimizer_step(
    net: &mut Network,
    grads: &Gradients,
    state: &mut OptState,
    config: &TrainConfig,
) {
    match config.optimizer {
        OptimizerKind::Sgd => {
            let lr = config.learning_rate;
            for (layer, g) in net
                .encoder
                .iter_mut()
                .chain(net.decoder.iter_mut())
                .zip(grads.encoder.iter().chain(&grads.decoder))
            {
                for (w, dw) in layer.weights.data_mut().iter_mut().zip(g.d_weights.data()) {
                    *w -= lr * dw;
                }
                for (b, db) in layer.biases.iter_mut().zip(&g.d_biases) {
                    *b -= lr * db;
                }
            }
        }
        OptimizerKind::Adam { beta1, beta2, epsilon } => {
            state.step += 1;
            let t = state.step as f64;
            let corr1 = 1.0 - beta1.powf(t);
            let corr2 = 1.0 - beta2.powf(t);
            let lr = config.learning_rate;
            let layers = net.encoder.iter_mut().chain(net.decoder.iter_mut());
            let gs = grads.encoder.iter().chain(&grads.decoder);
            let ms = state.m.encoder.iter_mut().chain(state.m.decoder.iter_mut());
            let vs = state.v.encoder.iter_mut().chain(state.v.decoder.iter_mut());
            for (((layer, g), m), v) in layers.zip(gs).zip(ms).zip(vs) {
                adam_update(
                    layer.weights.data_mut(),
                    g.d_weights.data(),
                    m.d_weights.data_mut(),
                    v.d_weights.data_mut(),
                    lr,
                    beta1,
                    beta2,
                    epsilon,
                    corr1,
                    corr2,
                );
                adam_update(
                    &mut layer.biases,
                    &g.d_biases,
                    &mut m.d_biases,
                    &mut v.d_biases,
                    lr,
                    beta1,
                    beta2,
                    epsilon,
                    corr1,
                    corr2,
                );
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn adam_update(
    theta: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    corr1: f64,
    corr2: f64,
) {
    for i in 0..theta.len() {
        let g = grad[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        let m_hat = m[i] / corr1;
        let v_hat = v[i] / corr2;
        theta[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
    }
}

const NET_MAGIC: &[u8; 4] = b"CCNN";
const NET_VERSION: u16 = 1;

/// Writes the network checkpoint: magic `CCNN`, u16 version, u32 total layer
/// count, u32 encoder layer count, then per layer u32 rows, u32 cols, u8
/// activation tag, little-endian f64 weights (row-major) and biases.
pub fn write_checkpoint(net: &Network, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(NET_MAGIC);
    buf.extend_from_slice(&NET_VERSION.to_le_bytes());
    let total = (net.encoder.len() + net.decoder.len()) as u32;
    buf.extend_from_slice(&total.to_le_bytes());
    buf.extend_from_slice(&(net.encoder.len() as u32).to_le_bytes());
    for layer in net.encoder.iter().chain(&net.decoder) {
        buf.extend_from_slice(&(layer.out_dim() as u32).to_le_bytes());
        buf.extend_from_slice(&(layer.in_dim() as u32).to_le_bytes());
        buf.push(layer.activation.tag());
        for w in layer.weights.data() {
            buf.extend_from_slice(&w.to_le_bytes());
        }
        for b in &layer.biases {
            buf.extend_from_slice(&b.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads a checkpoint written by [`write_checkpoint`].
pub fn read_checkpoint(path: &Path) -> Result<Network> {
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::new();
    f.read_to_end(&mut buf).map_err(|e| Error::io(path, e))?;
    let mut off = 0usize;
    let take = |buf: &[u8], off: &mut usize, n: usize| -> Result<Vec<u8>> {
        if *off + n > buf.len() {
            return Err(Error::format(path, "truncated checkpoint"));
        }
        let s = buf[*off..*off + n].to_vec();
        *off += n;
        Ok(s)
    };
    if take(&buf, &mut off, 4)? != NET_MAGIC {
        return Err(Error::format(path, "not a CCNN file"));
    }
    let version = u16::from_le_bytes(take(&buf, &mut off, 2)?.try_into().unwrap());
    if version != NET_VERSION {
        return Err(Error::format(path, format!("unsupported CCNN version {version}")));
    }
    let total = u32::from_le_bytes(take(&buf, &mut off, 4)?.try_into().unwrap()) as usize;
    let enc = u32::from_le_bytes(take(&buf, &mut off, 4)?.try_into().unwrap()) as usize;
    if enc == 0 || enc >= total {
        return Err(Error::format(path, "invalid layer counts"));
    }
    let mut layers = Vec::with_capacity(total);
    for _ in 0..total {
        let rows = u32::from_le_bytes(take(&buf, &mut off, 4)?.try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(take(&buf, &mut off, 4)?.try_into().unwrap()) as usize;
        let tag = take(&buf, &mut off, 1)?[0];
        let activation = Activation::from_tag(tag)
            .ok_or_else(|| Error::format(path, format!("unknown activation tag {tag}")))?;
        let mut weights = Mat::zeros(rows, cols);
        for w in weights.data_mut() {
            *w = f64::from_le_bytes(take(&buf, &mut off, 8)?.try_into().unwrap());
        }
        let mut biases = vec![0.0; rows];
        for b in &mut biases {
            *b = f64::from_le_bytes(take(&buf, &mut off, 8)?.try_into().unwrap());
        }
        layers.push(Layer { weights, biases, activation });
    }
    if off != buf.len() {
        return Err(Error::format(path, "trailing bytes in checkpoint"));
    }
    let decoder = layers.split_off(enc);
    let net = Network { encoder: layers, decoder };
    net.validate()?;
    Ok(net)
}
