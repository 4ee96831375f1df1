//! The two transformer variants.
//!
//! Both are decoder-style stacks of pre-norm residual blocks over a token
//! set, with no positional encodings: positions ride inside the tokens
//! themselves, so the input really is an unordered set and outputs are
//! permutation equivariant. The 1-d baseline reads `(x, y)` tokens plus a
//! `(x_query, 0)` token and decodes the query token to a scalar. The
//! relational variant reads similarity-matrix tokens `(i, j, s)` plus query
//! tokens and decodes one scalar per query token, i.e. the next row of the
//! similarity matrix.
//!
//! Attention is scaled dot-product per head, gated multiplicatively by the
//! mask laws in [`crate::gating`]; with `learned_window` the gate is built
//! on the tape so the loss gradient reaches the window parameters.

use crate::codec::RelTokenSet;
use crate::gating::{
    build_gate_1d, build_gate_1d_taped, build_gate_rel, build_gate_rel_taped, IndicatorMode,
    WindowParams,
};
use crate::scalar::Scalar;
use crate::tensor::{Tape, TensorError, TensorId};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("operation requires the {expected:?} variant, model is {got:?}")]
    WrongVariant { expected: Variant, got: Variant },
    #[error("query index {index} out of range for {n} tokens")]
    MissingQuery { index: usize, n: usize },
    #[error("malformed relational token set: {0}")]
    BadTokenSet(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("checkpoint is missing tensor '{0}'")]
    MissingTensor(String),
    #[error("tensor '{name}' has shape {got:?}, expected {expected:?}")]
    TensorShape {
        name: String,
        got: Vec<usize>,
        expected: Vec<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    OneD,
    Relational,
}

impl Variant {
    pub fn input_dim(&self) -> usize {
        match self {
            Variant::OneD => 2,
            Variant::Relational => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Gelu,
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub variant: Variant,
    pub learned_window: bool,
    /// One `(a, b)` pair per layer instead of a single shared pair.
    pub per_layer_window: bool,
    pub indicator: IndicatorMode,
    pub activation: Activation,
    pub mlp_mult: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::desk(Variant::OneD, false)
    }
}

impl ModelConfig {
    /// Desk-scale preset: trains on a laptop CPU in minutes.
    pub fn desk(variant: Variant, learned_window: bool) -> Self {
        ModelConfig {
            d_model: 64,
            n_heads: 4,
            n_layers: 4,
            variant,
            learned_window,
            per_layer_window: false,
            indicator: IndicatorMode::Inclusive,
            activation: Activation::Gelu,
            mlp_mult: 4,
            seed: 0,
        }
    }

    /// Full-scale preset (256-dim, 8 heads, 12 layers).
    pub fn paper(variant: Variant, learned_window: bool) -> Self {
        ModelConfig {
            d_model: 256,
            n_heads: 8,
            n_layers: 12,
            ..ModelConfig::desk(variant, learned_window)
        }
    }

    /// Tiny preset for gradient checks.
    pub fn tiny(variant: Variant, learned_window: bool) -> Self {
        ModelConfig {
            d_model: 8,
            n_heads: 2,
            n_layers: 1,
            ..ModelConfig::desk(variant, learned_window)
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.d_model == 0 || self.n_heads == 0 || self.n_layers == 0 || self.mlp_mult == 0 {
            return Err("model dimensions must be positive".into());
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor<T: Scalar> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

/// Ordered named parameters; the order is the staging and checkpoint order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<T: Scalar> {
    pub tensors: Vec<ParamTensor<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn get(&self, name: &str) -> Option<&ParamTensor<T>> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn total_params(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.tensors.iter().map(|t| t.data.len()).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors
            .iter()
            .all(|t| t.data.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerLayout {
    ln1_s: usize,
    ln1_b: usize,
    wq: usize,
    bq: usize,
    wk: usize,
    bk: usize,
    wv: usize,
    bv: usize,
    wo: usize,
    bo: usize,
    ln2_s: usize,
    ln2_b: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    window: Option<(usize, usize)>,
}

#[derive(Debug, Clone)]
struct Layout {
    input_w: usize,
    input_b: usize,
    layers: Vec<LayerLayout>,
    final_s: usize,
    final_b: usize,
    dec_w: usize,
    dec_b: usize,
    window: Option<(usize, usize)>,
}

/// Tape handles for one staged copy of the parameters, in store order in
/// `flat` plus structured access for the forward pass.
pub struct StagedParams {
    pub flat: Vec<TensorId>,
    input_w: TensorId,
    input_b: TensorId,
    layers: Vec<StagedLayer>,
    final_s: TensorId,
    final_b: TensorId,
    dec_w: TensorId,
    dec_b: TensorId,
    window: Option<(TensorId, TensorId)>,
}

#[derive(Debug, Clone, Copy)]
pub struct StagedLayer {
    ln1_s: TensorId,
    ln1_b: TensorId,
    wq: TensorId,
    bq: TensorId,
    wk: TensorId,
    bk: TensorId,
    wv: TensorId,
    bv: TensorId,
    wo: TensorId,
    bo: TensorId,
    ln2_s: TensorId,
    ln2_b: TensorId,
    w1: TensorId,
    b1: TensorId,
    w2: TensorId,
    b2: TensorId,
    window: Option<(TensorId, TensorId)>,
}

/// Result of a forward pass: the output tensor plus the staged parameter
/// handles (needed to read gradients back out after `backward`).
pub struct ForwardPass {
    pub output: TensorId,
    pub staged: StagedParams,
}

pub struct Model<T: Scalar> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
    layout: Layout,
}

enum GateSpec<'a> {
    OneD(&'a [f64]),
    Rel(&'a [(f64, f64)]),
}

impl<T: Scalar> Model<T> {
    /// Fresh model with seeded scaled-normal initialization: weights at
    /// std 0.02, residual output projections scaled down by
    /// `1/sqrt(2 n_layers)`, biases zero, norms identity, window open.
    pub fn new(config: ModelConfig) -> Self {
        config.validate().expect("invalid model config");
        let mut rng = rng_for_init(config.seed);
        let d = config.d_model;
        let mlp = config.d_model * config.mlp_mult;
        let in_dim = config.variant.input_dim();
        let resid_scale = 1.0 / (2.0 * config.n_layers as f64).sqrt();
        let w0 = WindowParams::open();

        let mut store = ParamStore::default();
        let push = |store: &mut ParamStore<T>,
                        name: String,
                        shape: Vec<usize>,
                        init: Init,
                        rng: &mut ChaCha8Rng|
         -> usize {
            let numel: usize = shape.iter().product();
            let data: Vec<T> = match init {
                Init::Normal(std) => (0..numel)
                    .map(|_| {
                        let z: f64 = rng.sample(StandardNormal);
                        T::from_f64(z * std)
                    })
                    .collect(),
                Init::Const(v) => vec![T::from_f64(v); numel],
            };
            store.tensors.push(ParamTensor { name, shape, data });
            store.tensors.len() - 1
        };

        let input_w = push(
            &mut store,
            "input_proj.weight".into(),
            vec![in_dim, d],
            Init::Normal(0.02),
            &mut rng,
        );
        let input_b = push(
            &mut store,
            "input_proj.bias".into(),
            vec![d],
            Init::Const(0.0),
            &mut rng,
        );
        let mut layers = Vec::with_capacity(config.n_layers);
        for l in 0..config.n_layers {
            let p = |s: &str| format!("layers.{l}.{s}");
            let ln1_s = push(&mut store, p("ln1.scale"), vec![d], Init::Const(1.0), &mut rng);
            let ln1_b = push(&mut store, p("ln1.shift"), vec![d], Init::Const(0.0), &mut rng);
            let wq = push(&mut store, p("attn.wq.weight"), vec![d, d], Init::Normal(0.02), &mut rng);
            let bq = push(&mut store, p("attn.wq.bias"), vec![d], Init::Const(0.0), &mut rng);
            let wk = push(&mut store, p("attn.wk.weight"), vec![d, d], Init::Normal(0.02), &mut rng);
            let bk = push(&mut store, p("attn.wk.bias"), vec![d], Init::Const(0.0), &mut rng);
            let wv = push(&mut store, p("attn.wv.weight"), vec![d, d], Init::Normal(0.02), &mut rng);
            let bv = push(&mut store, p("attn.wv.bias"), vec![d], Init::Const(0.0), &mut rng);
            let wo = push(
                &mut store,
                p("attn.wo.weight"),
                vec![d, d],
                Init::Normal(0.02 * resid_scale),
                &mut rng,
            );
            let bo = push(&mut store, p("attn.wo.bias"), vec![d], Init::Const(0.0), &mut rng);
            let ln2_s = push(&mut store, p("ln2.scale"), vec![d], Init::Const(1.0), &mut rng);
            let ln2_b = push(&mut store, p("ln2.shift"), vec![d], Init::Const(0.0), &mut rng);
            let w1 = push(&mut store, p("mlp.w1.weight"), vec![d, mlp], Init::Normal(0.02), &mut rng);
            let b1 = push(&mut store, p("mlp.w1.bias"), vec![mlp], Init::Const(0.0), &mut rng);
            let w2 = push(
                &mut store,
                p("mlp.w2.weight"),
                vec![mlp, d],
                Init::Normal(0.02 * resid_scale),
                &mut rng,
            );
            let b2 = push(&mut store, p("mlp.w2.bias"), vec![d], Init::Const(0.0), &mut rng);
            let window = (config.learned_window && config.per_layer_window).then(|| {
                let ra = push(&mut store, p("window.raw_a"), vec![1], Init::Const(w0.raw_a), &mut rng);
                let rb = push(&mut store, p("window.raw_b"), vec![1], Init::Const(w0.raw_b), &mut rng);
                (ra, rb)
            });
            layers.push(LayerLayout {
                ln1_s, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_s, ln2_b, w1, b1, w2, b2, window,
            });
        }
        let final_s = push(&mut store, "final_ln.scale".into(), vec![d], Init::Const(1.0), &mut rng);
        let final_b = push(&mut store, "final_ln.shift".into(), vec![d], Init::Const(0.0), &mut rng);
        let dec_w = push(&mut store, "decoder.weight".into(), vec![d, 1], Init::Normal(0.02), &mut rng);
        let dec_b = push(&mut store, "decoder.bias".into(), vec![1], Init::Const(0.0), &mut rng);
        let window = (config.learned_window && !config.per_layer_window).then(|| {
            let ra = push(&mut store, "window.raw_a".into(), vec![1], Init::Const(w0.raw_a), &mut rng);
            let rb = push(&mut store, "window.raw_b".into(), vec![1], Init::Const(w0.raw_b), &mut rng);
            (ra, rb)
        });

        Model {
            config,
            params: store,
            layout: Layout {
                input_w,
                input_b,
                layers,
                final_s,
                final_b,
                dec_w,
                dec_b,
                window,
            },
        }
    }

    /// Rebuild a model from named tensors (checkpoint load). Shapes must
    /// match the config's layout exactly.
    pub fn from_named_tensors(
        config: ModelConfig,
        mut named: std::collections::HashMap<String, (Vec<usize>, Vec<T>)>,
    ) -> Result<Self, ModelError> {
        let mut model = Model::new(config);
        for t in &mut model.params.tensors {
            let (shape, data) = named
                .remove(&t.name)
                .ok_or_else(|| ModelError::MissingTensor(t.name.clone()))?;
            if shape != t.shape {
                return Err(ModelError::TensorShape {
                    name: t.name.clone(),
                    got: shape,
                    expected: t.shape.clone(),
                });
            }
            t.data = data;
        }
        Ok(model)
    }

    /// Same parameters at a different precision.
    pub fn convert<U: Scalar>(&self) -> Model<U> {
        let mut out = Model::new(self.config.clone());
        for (dst, src) in out.params.tensors.iter_mut().zip(&self.params.tensors) {
            dst.data = src.data.iter().map(|&v| U::from_f64(v.as_f64())).collect();
        }
        out
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.params
            .tensors
            .iter()
            .flat_map(|t| t.data.iter().map(|v| v.as_f64()))
            .collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        let mut k = 0;
        for t in &mut self.params.tensors {
            for v in &mut t.data {
                *v = T::from_f64(flat[k]);
                k += 1;
            }
        }
        assert_eq!(k, flat.len(), "flat parameter length mismatch");
    }

    /// Effective `(a, b)` of every window parameter pair (empty when the
    /// model has no learned window).
    pub fn window_values(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut read = |idx: (usize, usize)| {
            let wp = WindowParams {
                raw_a: self.params.tensors[idx.0].data[0].as_f64(),
                raw_b: self.params.tensors[idx.1].data[0].as_f64(),
            };
            out.push(wp.effective());
        };
        if let Some(w) = self.layout.window {
            read(w);
        }
        for l in &self.layout.layers {
            if let Some(w) = l.window {
                read(w);
            }
        }
        out
    }

    /// Stage every parameter on the tape, as gradient-tracking leaves when
    /// `trainable` (training, gradient checks) or constants (evaluation).
    pub fn stage(&self, tape: &mut Tape<T>) -> StagedParams {
        self.stage_with(tape, true)
    }

    pub fn stage_with(&self, tape: &mut Tape<T>, trainable: bool) -> StagedParams {
        let flat: Vec<TensorId> = self
            .params
            .tensors
            .iter()
            .map(|t| tape.leaf(&t.shape, t.data.clone(), trainable))
            .collect();
        let l = &self.layout;
        StagedParams {
            input_w: flat[l.input_w],
            input_b: flat[l.input_b],
            layers: l
                .layers
                .iter()
                .map(|ll| StagedLayer {
                    ln1_s: flat[ll.ln1_s],
                    ln1_b: flat[ll.ln1_b],
                    wq: flat[ll.wq],
                    bq: flat[ll.bq],
                    wk: flat[ll.wk],
                    bk: flat[ll.bk],
                    wv: flat[ll.wv],
                    bv: flat[ll.bv],
                    wo: flat[ll.wo],
                    bo: flat[ll.bo],
                    ln2_s: flat[ll.ln2_s],
                    ln2_b: flat[ll.ln2_b],
                    w1: flat[ll.w1],
                    b1: flat[ll.b1],
                    w2: flat[ll.w2],
                    b2: flat[ll.b2],
                    window: ll.window.map(|(a, b)| (flat[a], flat[b])),
                })
                .collect(),
            final_s: flat[l.final_s],
            final_b: flat[l.final_b],
            dec_w: flat[l.dec_w],
            dec_b: flat[l.dec_b],
            window: l.window.map(|(a, b)| (flat[a], flat[b])),
            flat,
        }
    }

    /// Gradients for every parameter after `tape.backward`, in store order.
    /// Parameters the loss never touched come back as zeros.
    pub fn read_grads(&self, tape: &Tape<T>, staged: &StagedParams) -> Vec<Vec<T>> {
        staged
            .flat
            .iter()
            .zip(&self.params.tensors)
            .map(|(&id, t)| {
                tape.grad(id)
                    .map(|g| g.to_vec())
                    .unwrap_or_else(|| vec![T::zero(); t.data.len()])
            })
            .collect()
    }

    /// Forward pass of the 1-d baseline. `tokens` are `(x, y)` pairs
    /// including the query token (its y is conventionally 0); only the
    /// token at `query_index` is decoded.
    pub fn forward_1d(
        &self,
        tape: &mut Tape<T>,
        tokens: &[(f64, f64)],
        query_index: usize,
        trainable: bool,
    ) -> Result<ForwardPass, ModelError> {
        if self.config.variant != Variant::OneD {
            return Err(ModelError::WrongVariant {
                expected: Variant::OneD,
                got: self.config.variant,
            });
        }
        if query_index >= tokens.len() {
            return Err(ModelError::MissingQuery {
                index: query_index,
                n: tokens.len(),
            });
        }
        let n = tokens.len();
        let mut rows = Vec::with_capacity(n * 2);
        let mut xs = Vec::with_capacity(n);
        for &(x, y) in tokens {
            rows.push(x);
            rows.push(y);
            xs.push(x);
        }
        self.forward_set(
            tape,
            &rows,
            n,
            GateSpec::OneD(&xs),
            &[query_index],
            trainable,
        )
    }

    /// Forward pass of the relational variant: one output per query token,
    /// in query order, i.e. the predicted next similarity row.
    pub fn forward_rel(
        &self,
        tape: &mut Tape<T>,
        rel: &RelTokenSet,
        trainable: bool,
    ) -> Result<ForwardPass, ModelError> {
        if self.config.variant != Variant::Relational {
            return Err(ModelError::WrongVariant {
                expected: Variant::Relational,
                got: self.config.variant,
            });
        }
        validate_token_set(rel)?;
        let n = rel.tokens.len();
        let mut rows = Vec::with_capacity(n * 3);
        for t in &rel.tokens {
            rows.extend_from_slice(t);
        }
        let coords = rel.coords();
        self.forward_set(
            tape,
            &rows,
            n,
            GateSpec::Rel(&coords),
            &rel.query_indices,
            trainable,
        )
    }

    fn forward_set(
        &self,
        tape: &mut Tape<T>,
        rows: &[f64],
        n: usize,
        gate_spec: GateSpec<'_>,
        query_rows: &[usize],
        trainable: bool,
    ) -> Result<ForwardPass, ModelError> {
        let staged = self.stage_with(tape, trainable);
        let in_dim = self.config.variant.input_dim();
        let x0 = tape.constant_from_f64(&[n, in_dim], rows);
        let proj = tape.matmul(x0, staged.input_w)?;
        let mut x = tape.add_row(proj, staged.input_b)?;

        let shared_gate = if !self.config.per_layer_window {
            Some(self.build_gate(tape, &gate_spec, staged.window)?)
        } else {
            None
        };
        for layer in &staged.layers {
            let gate = match shared_gate {
                Some(g) => g,
                None => self.build_gate(tape, &gate_spec, layer.window)?,
            };
            x = self.attention_block(tape, x, gate, layer)?;
        }
        let xn = tape.layer_norm(x, staged.final_s, staged.final_b, LN_EPS)?;
        let dec = tape.matmul(xn, staged.dec_w)?;
        let dec = tape.add_row(dec, staged.dec_b)?;
        let q = tape.gather_rows(dec, query_rows)?;
        let output = tape.reshape(q, &[query_rows.len()])?;
        Ok(ForwardPass { output, staged })
    }

    fn build_gate(
        &self,
        tape: &mut Tape<T>,
        spec: &GateSpec<'_>,
        window_ids: Option<(TensorId, TensorId)>,
    ) -> Result<TensorId, TensorError> {
        let mode = self.config.indicator;
        match (spec, window_ids) {
            (GateSpec::OneD(xs), Some((ra, rb))) => build_gate_1d_taped(tape, ra, rb, xs, mode),
            (GateSpec::Rel(coords), Some((ra, rb))) => {
                build_gate_rel_taped(tape, ra, rb, coords, mode)
            }
            (GateSpec::OneD(xs), None) => Ok(build_gate_1d(xs, None, mode).to_tensor(tape)),
            (GateSpec::Rel(coords), None) => Ok(build_gate_rel(coords, None, mode).to_tensor(tape)),
        }
    }

    /// One pre-norm residual block: `x + MHA(LN(x))` then `x + MLP(LN(x))`,
    /// attention logits gated through `softmax_gated`.
    pub fn attention_block(
        &self,
        tape: &mut Tape<T>,
        x: TensorId,
        gate: TensorId,
        layer: &StagedLayer,
    ) -> Result<TensorId, ModelError> {
        let d = self.config.d_model;
        let hd = d / self.config.n_heads;
        let scale = T::from_f64(1.0 / (hd as f64).sqrt());

        let h = tape.layer_norm(x, layer.ln1_s, layer.ln1_b, LN_EPS)?;
        let q = tape.matmul(h, layer.wq)?;
        let q = tape.add_row(q, layer.bq)?;
        let k = tape.matmul(h, layer.wk)?;
        let k = tape.add_row(k, layer.bk)?;
        let v = tape.matmul(h, layer.wv)?;
        let v = tape.add_row(v, layer.bv)?;

        let mut heads = Vec::with_capacity(self.config.n_heads);
        for i in 0..self.config.n_heads {
            let qh = tape.slice_cols(q, i * hd, hd)?;
            let kh = tape.slice_cols(k, i * hd, hd)?;
            let vh = tape.slice_cols(v, i * hd, hd)?;
            let logits = tape.matmul_nt(qh, kh)?;
            let logits = tape.scale(logits, scale);
            let att = tape.softmax_gated(logits, gate)?;
            heads.push(tape.matmul(att, vh)?);
        }
        let cat = tape.concat_cols(&heads)?;
        let proj = tape.matmul(cat, layer.wo)?;
        let proj = tape.add_row(proj, layer.bo)?;
        let x = tape.add(x, proj)?;

        let h2 = tape.layer_norm(x, layer.ln2_s, layer.ln2_b, LN_EPS)?;
        let m = tape.matmul(h2, layer.w1)?;
        let m = tape.add_row(m, layer.b1)?;
        let m = match self.config.activation {
            Activation::Gelu => tape.gelu(m),
            Activation::Relu => tape.relu(m),
        };
        let m = tape.matmul(m, layer.w2)?;
        let m = tape.add_row(m, layer.b2)?;
        Ok(tape.add(x, m)?)
    }
}

fn validate_token_set(rel: &RelTokenSet) -> Result<(), ModelError> {
    let n = rel.n_context;
    if n < 2 {
        return Err(ModelError::BadTokenSet(format!(
            "context length {n} below 2"
        )));
    }
    if rel.tokens.len() != RelTokenSet::expected_len(n) {
        return Err(ModelError::BadTokenSet(format!(
            "expected {} tokens for context {n}, got {}",
            RelTokenSet::expected_len(n),
            rel.tokens.len()
        )));
    }
    if rel.query_indices.len() != n + 1 {
        return Err(ModelError::BadTokenSet(format!(
            "expected {} query tokens, got {}",
            n + 1,
            rel.query_indices.len()
        )));
    }
    for &qi in &rel.query_indices {
        if qi >= rel.tokens.len() {
            return Err(ModelError::BadTokenSet(format!(
                "query index {qi} out of range"
            )));
        }
        if rel.tokens[qi][2] != 0.0 {
            return Err(ModelError::BadTokenSet(
                "query token has nonzero similarity component".into(),
            ));
        }
    }
    Ok(())
}

enum Init {
    Normal(f64),
    Const(f64),
}

const INIT_DOMAIN: u64 = 0x6d6f_64656c_696e69; // distinct stream from curve seeds

fn rng_for_init(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ INIT_DOMAIN)
}
