//! Reverse-mode gradients for the two loss taps.

use super::{
    normalize_columns, run_layers, Activation, Layer, ModelParams, TensorGroup, TensorKey,
    TensorKind,
};
use crate::error::{Error, Result};
use crate::ldr::{self, LdrConfig, Partition};
use crate::numerics::Matrix;
use crate::Scalar;

/// Which scalar loss the backward pass differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossTap {
    /// Softmax cross-entropy on the decoder logits.
    CeAtDecoder,
    /// Negated rate reduction on the side-branch features.
    LdrAtSide,
}

/// Cached activations of one forward pass, tied to the tap it was run for.
pub struct ForwardPass<F> {
    tap: LossTap,
    x: Matrix<F>,
    enc_pre: Vec<Matrix<F>>,
    enc_post: Vec<Matrix<F>>,
    /// Bottleneck latents (encoder output).
    pub y: Matrix<F>,
    dec_pre: Vec<Matrix<F>>,
    dec_post: Vec<Matrix<F>>,
    side_lin: Option<Matrix<F>>,
    side_norms: Option<Vec<F>>,
    side_out: Option<Matrix<F>>,
}

impl<F: Scalar> ForwardPass<F> {
    pub fn tap(&self) -> LossTap {
        self.tap
    }

    /// Decoder logits; present only for the cross-entropy tap.
    pub fn logits(&self) -> Option<&Matrix<F>> {
        if self.tap == LossTap::CeAtDecoder {
            self.dec_post.last().or(Some(&self.y))
        } else {
            None
        }
    }

    /// Side-branch features; present only for the rate tap.
    pub fn side(&self) -> Option<&Matrix<F>> {
        self.side_out.as_ref()
    }
}

/// Runs the forward pass for a tap and caches everything backward needs.
pub fn forward<F: Scalar>(params: &ModelParams<F>, x: &Matrix<F>, tap: LossTap) -> Result<ForwardPass<F>> {
    super::check_input(x, params.d_in, "forward")?;
    let (enc_pre, enc_post) = run_layers(&params.encoder, x);
    let y = enc_post.last().cloned().unwrap_or_else(|| x.clone());
    let mut pass = ForwardPass {
        tap,
        x: x.clone(),
        enc_pre,
        enc_post,
        y: y.clone(),
        dec_pre: Vec::new(),
        dec_post: Vec::new(),
        side_lin: None,
        side_norms: None,
        side_out: None,
    };
    match tap {
        LossTap::CeAtDecoder => {
            let (dec_pre, dec_post) = run_layers(&params.decoder, &y);
            pass.dec_pre = dec_pre;
            pass.dec_post = dec_post;
        }
        LossTap::LdrAtSide => {
            let mut lin = params.side.w.matmul(&y);
            for r in 0..lin.rows() {
                let bias = params.side.b.get(r, 0);
                for v in lin.row_mut(r) {
                    *v += bias;
                }
            }
            let (out, norms) = if params.side.normalize {
                normalize_columns(&lin)
            } else {
                (lin.clone(), vec![F::one(); lin.cols()])
            };
            pass.side_lin = Some(lin);
            pass.side_norms = Some(norms);
            pass.side_out = Some(out);
        }
    }
    Ok(pass)
}

/// Auxiliary inputs for [`backward`], one variant per tap.
pub enum BackwardAux<'a> {
    Ce { labels: &'a Partition },
    Ldr { part: &'a Partition, cfg: &'a LdrConfig },
}

/// Gradients for the unfrozen tensors touched by a loss tap, sorted by
/// canonical tensor key. Frozen tensors never appear.
#[derive(Debug, Clone)]
pub struct Gradients<F> {
    pub(crate) entries: Vec<(TensorKey, Matrix<F>)>,
}

impl<F: Scalar> Gradients<F> {
    fn new() -> Self {
        Gradients { entries: Vec::new() }
    }

    fn push(&mut self, key: TensorKey, grad: Matrix<F>) {
        self.entries.push((key, grad));
    }

    fn sort(&mut self) {
        self.entries.sort_by_key(|(k, _)| *k);
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, key: TensorKey) -> Option<&Matrix<F>> {
        self.entries
            .binary_search_by_key(&key, |(k, _)| *k)
            .ok()
            .map(|i| &self.entries[i].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (TensorKey, &Matrix<F>)> {
        self.entries.iter().map(|(k, g)| (*k, g))
    }
}

/// Mean softmax cross-entropy in nats and its gradient w.r.t. the logits.
///
/// The gradient is `(softmax - onehot) / B`, valid for the mean loss.
pub fn ce_loss_and_grad<F: Scalar>(logits: &Matrix<F>, labels: &Partition) -> Result<(F, Matrix<F>)> {
    let (k, b) = (logits.rows(), logits.cols());
    if labels.len() != b {
        return Err(Error::PartitionMismatch(format!(
            "{} labels for {} columns",
            labels.len(),
            b
        )));
    }
    if labels.labels().iter().any(|&l| l >= k) {
        return Err(Error::PartitionMismatch(format!(
            "label out of range for {} logit rows",
            k
        )));
    }
    let inv_b = F::from_f64(1.0 / b as f64);
    let mut loss = F::zero();
    let mut grad = Matrix::zeros(k, b);
    for c in 0..b {
        let col = logits.col(c);
        let max = col.iter().fold(F::neg_infinity(), |m, &v| m.max(v));
        let mut denom = F::zero();
        for &v in &col {
            denom += (v - max).exp();
        }
        let log_denom = denom.ln() + max;
        let target = labels.labels()[c];
        loss -= (col[target] - log_denom) * inv_b;
        for r in 0..k {
            let p = (col[r] - log_denom).exp();
            let indicator = if r == target { F::one() } else { F::zero() };
            grad.set(r, c, (p - indicator) * inv_b);
        }
    }
    Ok((loss, grad))
}

/// Backpropagates through a layer stack given the gradient at its output.
/// Returns the gradient at the stack input; tensor gradients are appended for
/// unfrozen tensors only.
fn layers_backward<F: Scalar>(
    layers: &[Layer<F>],
    group: TensorGroup,
    input: &Matrix<F>,
    pres: &[Matrix<F>],
    posts: &[Matrix<F>],
    mut g_out: Matrix<F>,
    params: &ModelParams<F>,
    grads: &mut Gradients<F>,
) -> Matrix<F> {
    for i in (0..layers.len()).rev() {
        let layer = &layers[i];
        // d loss / d pre-activation
        if layer.spec.activation == Activation::Relu {
            let pre = &pres[i];
            for r in 0..g_out.rows() {
                for c in 0..g_out.cols() {
                    if pre.get(r, c) <= F::zero() {
                        g_out.set(r, c, F::zero());
                    }
                }
            }
        }
        let layer_input = if i == 0 { input } else { &posts[i - 1] };
        let wkey = TensorKey { group, layer: i, kind: TensorKind::Weight };
        let bkey = TensorKey { group, layer: i, kind: TensorKind::Bias };
        if !params.freeze.is_frozen(wkey) {
            grads.push(wkey, g_out.matmul(&layer_input.transpose()));
        }
        if !params.freeze.is_frozen(bkey) {
            let mut db = Matrix::zeros(g_out.rows(), 1);
            for r in 0..g_out.rows() {
                let s: F = g_out.row(r).iter().copied().sum();
                db.set(r, 0, s);
            }
            grads.push(bkey, db);
        }
        g_out = layer.w.transpose().matmul(&g_out);
    }
    g_out
}

/// Exact reverse-mode gradients of the selected scalar loss for every
/// unfrozen tensor on the tap's path. Returns the loss value as well.
///
/// Cross-entropy flows through encoder and decoder; the rate loss flows
/// through encoder and side branch. The pass must have been produced by
/// [`forward`] with the same tap, otherwise the cache is missing the needed
/// activations.
pub fn backward<F: Scalar>(
    params: &ModelParams<F>,
    pass: &ForwardPass<F>,
    aux: BackwardAux<'_>,
) -> Result<(F, Gradients<F>)> {
    let mut grads = Gradients::new();
    let loss;
    let g_y: Matrix<F>;

    match (&aux, pass.tap) {
        (BackwardAux::Ce { labels }, LossTap::CeAtDecoder) => {
            let logits = if params.decoder.is_empty() {
                &pass.y
            } else {
                pass.dec_post.last().ok_or_else(|| {
                    Error::MissingForwardCache("decoder activations not cached".into())
                })?
            };
            let (l, g_logits) = ce_loss_and_grad(logits, labels)?;
            loss = l;
            g_y = layers_backward(
                &params.decoder,
                TensorGroup::Decoder,
                &pass.y,
                &pass.dec_pre,
                &pass.dec_post,
                g_logits,
                params,
                &mut grads,
            );
        }
        (BackwardAux::Ldr { part, cfg }, LossTap::LdrAtSide) => {
            let s = pass
                .side_out
                .as_ref()
                .ok_or_else(|| Error::MissingForwardCache("side features not cached".into()))?;
            // loss = -delta_r(S); dL/dS = -grad
            let dr_grad = ldr::delta_r_grad(s, part, cfg)?;
            loss = -ldr::delta_r(s, part, cfg)?;
            let mut g_s = dr_grad.scale(-F::one());

            if params.side.normalize {
                let norms = pass.side_norms.as_ref().unwrap();
                // Through column normalization: g_lin = (g - s (s.g)) / norm
                for c in 0..g_s.cols() {
                    let norm = norms[c];
                    if norm <= F::zero() {
                        for r in 0..g_s.rows() {
                            g_s.set(r, c, F::zero());
                        }
                        continue;
                    }
                    let mut sg = F::zero();
                    for r in 0..g_s.rows() {
                        sg += s.get(r, c) * g_s.get(r, c);
                    }
                    for r in 0..g_s.rows() {
                        let v = (g_s.get(r, c) - s.get(r, c) * sg) / norm;
                        g_s.set(r, c, v);
                    }
                }
            }

            let wkey = TensorKey { group: TensorGroup::Side, layer: 0, kind: TensorKind::Weight };
            let bkey = TensorKey { group: TensorGroup::Side, layer: 0, kind: TensorKind::Bias };
            if !params.freeze.is_frozen(wkey) {
                grads.push(wkey, g_s.matmul(&pass.y.transpose()));
            }
            if !params.freeze.is_frozen(bkey) {
                let mut db = Matrix::zeros(g_s.rows(), 1);
                for r in 0..g_s.rows() {
                    let sum: F = g_s.row(r).iter().copied().sum();
                    db.set(r, 0, sum);
                }
                grads.push(bkey, db);
            }
            g_y = params.side.w.transpose().matmul(&g_s);
        }
        _ => {
            return Err(Error::MissingForwardCache(format!(
                "forward pass was cached for {:?}",
                pass.tap
            )))
        }
    }

    layers_backward(
        &params.encoder,
        TensorGroup::Encoder,
        &pass.x,
        &pass.enc_pre,
        &pass.enc_post,
        g_y,
        params,
        &mut grads,
    );
    grads.sort();
    Ok((loss, grads))
}
