//! Feed-forward autoencoder-classifier with a training-only side branch.
//!
//! Topology: encoder MLP to a bottleneck of width `d_y`, a decoder-classifier
//! MLP from the bottleneck to `K` logits, and a single linear side branch
//! from the bottleneck whose (optionally column-normalized) output feeds the
//! rate objective during encoder phases. The side branch is never used at
//! inference time.

mod backward;
mod io;
mod optim;

pub use backward::{backward, ce_loss_and_grad, forward, BackwardAux, ForwardPass, Gradients, LossTap};
pub use io::{load_model, model_bytes, model_checksum, model_from_bytes, save_model, FORMAT_VERSION, MAGIC};
pub use optim::{sgd_step, OptimizerState};

use crate::error::{Error, Result};
use crate::ldr::LdrConfig;
use crate::numerics::{Matrix, SeededRng};
use crate::Scalar;
use std::collections::BTreeSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::FormatError(format!("unknown activation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

/// One dense layer: `out = act(W x + b)` applied column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<F> {
    pub spec: LayerSpec,
    pub w: Matrix<F>,
    pub b: Matrix<F>, // out_dim x 1
}

/// Linear projection from the bottleneck to the rate-objective features,
/// with optional per-column L2 normalization of the output.
#[derive(Debug, Clone, PartialEq)]
pub struct SideBranch<F> {
    pub w: Matrix<F>,
    pub b: Matrix<F>,
    pub normalize: bool,
}

/// Addresses one parameter tensor. Ordering gives every tensor a stable
/// canonical position for serialization and optimizer state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct TensorKey {
    pub group: TensorGroup,
    pub layer: usize,
    pub kind: TensorKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TensorGroup {
    Encoder,
    Decoder,
    Side,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TensorKind {
    Weight,
    Bias,
}

impl TensorKey {
    pub fn name(&self) -> String {
        let kind = match self.kind {
            TensorKind::Weight => "w",
            TensorKind::Bias => "b",
        };
        match self.group {
            TensorGroup::Encoder => format!("enc.{}.{}", self.layer, kind),
            TensorGroup::Decoder => format!("dec.{}.{}", self.layer, kind),
            TensorGroup::Side => format!("side.{}", kind),
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        let bad = || Error::FormatError(format!("bad tensor name {name:?}"));
        let parts: Vec<&str> = name.split('.').collect();
        let kind = |s: &str| match s {
            "w" => Ok(TensorKind::Weight),
            "b" => Ok(TensorKind::Bias),
            _ => Err(bad()),
        };
        match parts.as_slice() {
            ["enc", i, k] => Ok(TensorKey {
                group: TensorGroup::Encoder,
                layer: i.parse().map_err(|_| bad())?,
                kind: kind(k)?,
            }),
            ["dec", i, k] => Ok(TensorKey {
                group: TensorGroup::Decoder,
                layer: i.parse().map_err(|_| bad())?,
                kind: kind(k)?,
            }),
            ["side", k] => Ok(TensorKey {
                group: TensorGroup::Side,
                layer: 0,
                kind: kind(k)?,
            }),
            _ => Err(bad()),
        }
    }
}

/// Set of frozen tensors. A frozen tensor receives no gradient and is
/// bit-identical across any number of optimizer steps.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FreezeMask {
    frozen: BTreeSet<TensorKey>,
}

impl FreezeMask {
    pub fn none() -> Self {
        FreezeMask::default()
    }

    pub fn is_frozen(&self, key: TensorKey) -> bool {
        self.frozen.contains(&key)
    }

    pub fn set(&mut self, key: TensorKey, frozen: bool) {
        if frozen {
            self.frozen.insert(key);
        } else {
            self.frozen.remove(&key);
        }
    }

    pub fn frozen_keys(&self) -> impl Iterator<Item = &TensorKey> {
        self.frozen.iter()
    }
}

/// All parameters of the split model plus the freeze mask and the config
/// metadata that rides along in checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<F = f64> {
    pub encoder: Vec<Layer<F>>,
    pub decoder: Vec<Layer<F>>,
    pub side: SideBranch<F>,
    pub freeze: FreezeMask,
    pub d_in: usize,
    pub d_y: usize,
    pub k: usize,
    pub side_dim: usize,
    pub init_seed: u64,
    pub ldr: LdrConfig,
}

fn init_layer<F: Scalar>(spec: LayerSpec, rng: &mut SeededRng) -> Layer<F> {
    // He-uniform for ReLU layers, Glorot-uniform otherwise; zero bias.
    let limit = match spec.activation {
        Activation::Relu => (6.0 / spec.in_dim as f64).sqrt(),
        Activation::Identity => (6.0 / (spec.in_dim + spec.out_dim) as f64).sqrt(),
    };
    let w = Matrix::from_fn(spec.out_dim, spec.in_dim, |_, _| {
        F::from_f64(rng.next_f64_range(-limit, limit))
    });
    let b = Matrix::zeros(spec.out_dim, 1);
    Layer { spec, w, b }
}

impl<F: Scalar> ModelParams<F> {
    /// Builds a model with the given hidden widths. The bottleneck layer is
    /// linear (identity activation) so the transmitted latent stays
    /// real-valued and roughly Gaussian; hidden layers are ReLU.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        d_in: usize,
        enc_hidden: &[usize],
        d_y: usize,
        dec_hidden: &[usize],
        k: usize,
        side_dim: usize,
        ldr: LdrConfig,
        seed: u64,
    ) -> Self {
        let mut rng = SeededRng::new(seed).derive(streams::INIT);
        let mut encoder = Vec::new();
        let mut prev = d_in;
        for &h in enc_hidden {
            encoder.push(init_layer(
                LayerSpec { in_dim: prev, out_dim: h, activation: Activation::Relu },
                &mut rng,
            ));
            prev = h;
        }
        encoder.push(init_layer(
            LayerSpec { in_dim: prev, out_dim: d_y, activation: Activation::Identity },
            &mut rng,
        ));

        let mut decoder = Vec::new();
        prev = d_y;
        for &h in dec_hidden {
            decoder.push(init_layer(
                LayerSpec { in_dim: prev, out_dim: h, activation: Activation::Relu },
                &mut rng,
            ));
            prev = h;
        }
        decoder.push(init_layer(
            LayerSpec { in_dim: prev, out_dim: k, activation: Activation::Identity },
            &mut rng,
        ));

        // Square side branches start at the identity: the projection head
        // then only ever reshapes what the encoder already provides.
        let side = if side_dim == d_y {
            SideBranch {
                w: Matrix::identity(d_y),
                b: Matrix::zeros(d_y, 1),
                normalize: ldr.normalize_columns,
            }
        } else {
            let side_layer = init_layer(
                LayerSpec { in_dim: d_y, out_dim: side_dim, activation: Activation::Identity },
                &mut rng,
            );
            SideBranch {
                w: side_layer.w,
                b: side_layer.b,
                normalize: ldr.normalize_columns,
            }
        };

        ModelParams {
            encoder,
            decoder,
            side,
            freeze: FreezeMask::none(),
            d_in,
            d_y,
            k,
            side_dim,
            init_seed: seed,
            ldr,
        }
    }

    /// Canonical tensor order: encoder layers, decoder layers, side branch;
    /// weight before bias within a layer.
    pub fn tensor_keys(&self) -> Vec<TensorKey> {
        let mut keys = Vec::new();
        for i in 0..self.encoder.len() {
            keys.push(TensorKey { group: TensorGroup::Encoder, layer: i, kind: TensorKind::Weight });
            keys.push(TensorKey { group: TensorGroup::Encoder, layer: i, kind: TensorKind::Bias });
        }
        for i in 0..self.decoder.len() {
            keys.push(TensorKey { group: TensorGroup::Decoder, layer: i, kind: TensorKind::Weight });
            keys.push(TensorKey { group: TensorGroup::Decoder, layer: i, kind: TensorKind::Bias });
        }
        keys.push(TensorKey { group: TensorGroup::Side, layer: 0, kind: TensorKind::Weight });
        keys.push(TensorKey { group: TensorGroup::Side, layer: 0, kind: TensorKind::Bias });
        keys
    }

    pub fn tensor(&self, key: TensorKey) -> &Matrix<F> {
        match (key.group, key.kind) {
            (TensorGroup::Encoder, TensorKind::Weight) => &self.encoder[key.layer].w,
            (TensorGroup::Encoder, TensorKind::Bias) => &self.encoder[key.layer].b,
            (TensorGroup::Decoder, TensorKind::Weight) => &self.decoder[key.layer].w,
            (TensorGroup::Decoder, TensorKind::Bias) => &self.decoder[key.layer].b,
            (TensorGroup::Side, TensorKind::Weight) => &self.side.w,
            (TensorGroup::Side, TensorKind::Bias) => &self.side.b,
        }
    }

    pub fn tensor_mut(&mut self, key: TensorKey) -> &mut Matrix<F> {
        match (key.group, key.kind) {
            (TensorGroup::Encoder, TensorKind::Weight) => &mut self.encoder[key.layer].w,
            (TensorGroup::Encoder, TensorKind::Bias) => &mut self.encoder[key.layer].b,
            (TensorGroup::Decoder, TensorKind::Weight) => &mut self.decoder[key.layer].w,
            (TensorGroup::Decoder, TensorKind::Bias) => &mut self.decoder[key.layer].b,
            (TensorGroup::Side, TensorKind::Weight) => &mut self.side.w,
            (TensorGroup::Side, TensorKind::Bias) => &mut self.side.b,
        }
    }

    pub fn freeze_group(&mut self, group: TensorGroup, frozen: bool) {
        for key in self.tensor_keys() {
            if key.group == group {
                self.freeze.set(key, frozen);
            }
        }
    }

    pub fn unfreeze_all(&mut self) {
        self.freeze = FreezeMask::none();
    }
}

/// Applies a dense layer column-wise: `act(W x + b)`.
fn layer_forward<F: Scalar>(layer: &Layer<F>, input: &Matrix<F>) -> (Matrix<F>, Matrix<F>) {
    let mut pre = layer.w.matmul(input);
    for r in 0..pre.rows() {
        let bias = layer.b.get(r, 0);
        for v in pre.row_mut(r) {
            *v += bias;
        }
    }
    let post = match layer.spec.activation {
        Activation::Identity => pre.clone(),
        Activation::Relu => {
            let mut p = pre.clone();
            for v in p.data_mut() {
                if *v < F::zero() {
                    *v = F::zero();
                }
            }
            p
        }
    };
    (pre, post)
}

fn run_layers<F: Scalar>(
    layers: &[Layer<F>],
    input: &Matrix<F>,
) -> (Vec<Matrix<F>>, Vec<Matrix<F>>) {
    let mut pres = Vec::with_capacity(layers.len());
    let mut posts = Vec::with_capacity(layers.len());
    let mut cur = input.clone();
    for layer in layers {
        let (pre, post) = layer_forward(layer, &cur);
        cur = post.clone();
        pres.push(pre);
        posts.push(post);
    }
    (pres, posts)
}

fn check_input<F: Scalar>(x: &Matrix<F>, want_rows: usize, op: &'static str) -> Result<()> {
    if x.rows() != want_rows {
        return Err(Error::ShapeMismatch {
            op,
            details: format!("expected {} input rows, got {}", want_rows, x.rows()),
        });
    }
    Ok(())
}

/// Encoder forward pass: input batch to bottleneck latents.
pub fn encode<F: Scalar>(params: &ModelParams<F>, x: &Matrix<F>) -> Result<Matrix<F>> {
    check_input(x, params.d_in, "encode")?;
    if params.encoder.is_empty() {
        return Ok(x.clone());
    }
    let (_, posts) = run_layers(&params.encoder, x);
    Ok(posts.into_iter().last().unwrap())
}

/// Decoder-classifier forward pass: bottleneck latents to logits.
pub fn classify<F: Scalar>(params: &ModelParams<F>, y: &Matrix<F>) -> Result<Matrix<F>> {
    check_input(y, params.d_y, "classify")?;
    if params.decoder.is_empty() {
        return Ok(y.clone());
    }
    let (_, posts) = run_layers(&params.decoder, y);
    Ok(posts.into_iter().last().unwrap())
}

/// Column-wise L2 normalization; zero columns are left untouched.
/// Returns the normalized matrix and the original column norms.
pub(crate) fn normalize_columns<F: Scalar>(m: &Matrix<F>) -> (Matrix<F>, Vec<F>) {
    let mut out = m.clone();
    let mut norms = Vec::with_capacity(m.cols());
    for c in 0..m.cols() {
        let mut s = F::zero();
        for r in 0..m.rows() {
            let v = m.get(r, c);
            s += v * v;
        }
        let norm = s.sqrt();
        norms.push(norm);
        if norm > F::zero() {
            for r in 0..m.rows() {
                out.set(r, c, m.get(r, c) / norm);
            }
        }
    }
    (out, norms)
}

/// Side-branch features of a latent batch: linear map plus optional column
/// normalization. These are the inputs to the rate objective.
pub fn side_features<F: Scalar>(params: &ModelParams<F>, y: &Matrix<F>) -> Result<Matrix<F>> {
    check_input(y, params.d_y, "side_features")?;
    let mut lin = params.side.w.matmul(y);
    for r in 0..lin.rows() {
        let bias = params.side.b.get(r, 0);
        for v in lin.row_mut(r) {
            *v += bias;
        }
    }
    if params.side.normalize {
        Ok(normalize_columns(&lin).0)
    } else {
        Ok(lin)
    }
}

/// Fixed RNG sub-stream ids so identical phases consume identical streams
/// regardless of what ran before them.
pub mod streams {
    pub const INIT: u64 = 0;
    pub const CE: u64 = 1;
    pub const STEP1_ENC: u64 = 2;
    pub const STEP1_DEC: u64 = 3;
    pub const STEP2_ENC: u64 = 4;
    pub const STEP2_DEC: u64 = 5;
    pub const AUGMENT: u64 = 6;
    pub const DATASET: u64 = 7;
    pub const EVAL: u64 = 8;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_model(seed: u64) -> ModelParams<f64> {
        ModelParams::new(4, &[5], 3, &[4], 2, 3, LdrConfig::default(), seed)
    }

    #[test]
    fn zero_weights_give_zero_latent() {
        let mut m = tiny_model(1);
        for key in m.tensor_keys() {
            let t = m.tensor_mut(key);
            *t = Matrix::zeros(t.rows(), t.cols());
        }
        let x = Matrix::from_fn(4, 3, |r, c| (r + c) as f64);
        let y = encode(&m, &x).unwrap();
        assert_eq!(y.max_abs(), 0.0);
    }

    #[test]
    fn identity_encoder_passes_through() {
        let mut m = tiny_model(2);
        m.encoder = vec![Layer {
            spec: LayerSpec { in_dim: 4, out_dim: 4, activation: Activation::Identity },
            w: Matrix::identity(4),
            b: Matrix::zeros(4, 1),
        }];
        m.d_y = 4;
        let x = Matrix::from_fn(4, 2, |r, c| (r as f64) - (c as f64) * 0.5);
        let y = encode(&m, &x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn encode_matches_straight_line_reimplementation() {
        let m = tiny_model(3);
        let mut rng = SeededRng::new(99);
        let x = Matrix::<f64>::random_gaussian(4, 6, &mut rng);
        let y = encode(&m, &x).unwrap();

        // Independent straight-line evaluation of the same arithmetic.
        for c in 0..x.cols() {
            let mut cur: Vec<f64> = x.col(c);
            for layer in &m.encoder {
                let mut next = vec![0.0; layer.spec.out_dim];
                for r in 0..layer.spec.out_dim {
                    let mut acc = layer.b.get(r, 0);
                    for (i, &xi) in cur.iter().enumerate() {
                        acc += layer.w.get(r, i) * xi;
                    }
                    next[r] = match layer.spec.activation {
                        Activation::Relu => acc.max(0.0),
                        Activation::Identity => acc,
                    };
                }
                cur = next;
            }
            for r in 0..m.d_y {
                assert!((y.get(r, c) - cur[r]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn classify_shape_and_determinism() {
        let m = tiny_model(4);
        let mut rng = SeededRng::new(7);
        let y = Matrix::<f64>::random_gaussian(3, 5, &mut rng);
        let l1 = classify(&m, &y).unwrap();
        let l2 = classify(&m, &y).unwrap();
        assert_eq!(l1.rows(), 2);
        assert_eq!(l1.cols(), 5);
        assert_eq!(l1, l2);
    }

    #[test]
    fn classify_rejects_wrong_width() {
        let m = tiny_model(5);
        let y = Matrix::<f64>::zeros(2, 5);
        assert!(matches!(classify(&m, &y), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn side_identity_preserves_unit_columns() {
        let mut m = tiny_model(6);
        m.side = SideBranch { w: Matrix::identity(3), b: Matrix::zeros(3, 1), normalize: true };
        let mut y = Matrix::zeros(3, 2);
        y.set_col(0, &[1.0, 0.0, 0.0]);
        y.set_col(1, &[0.0, 0.6, 0.8]);
        let s = side_features(&m, &y).unwrap();
        assert!(s.sub(&y).max_abs() < 1e-15);
    }

    #[test]
    fn side_normalization_gives_unit_columns_and_keeps_zeros() {
        let mut m = tiny_model(7);
        m.side.normalize = true;
        m.side.b = Matrix::zeros(m.side_dim, 1);
        let mut y = Matrix::zeros(3, 3);
        y.set_col(0, &[3.0, -4.0, 0.0]);
        y.set_col(2, &[0.2, 0.1, 5.0]);
        // Column 1 stays zero; with zero bias its side output is zero.
        let s = side_features(&m, &y).unwrap();
        for c in [0usize, 2] {
            let norm: f64 = s.col(c).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() <= 1e-12);
        }
        assert!(s.col(1).iter().all(|&v| v == 0.0));
    }
}
