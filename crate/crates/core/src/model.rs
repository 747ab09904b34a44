//! GPT-2-family decoder with residual-stream capture and sub-block ablation.
//!
//! Capture point 0 is the token + positional embedding sum; capture point
//! `p` (1..=n_layers) is the residual stream after block `p`. The output of
//! the final layer norm is recorded separately in [`HiddenStates::final_norm`].

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::LayerTrajectory;
use crate::rng::SeededRng;
use crate::tensor::{self, layer_norm_rows, matmul, matmul_transposed, Tensor2D};

/// Standard deviation of the untrained initialization.
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub vocab_size: usize,
    pub context_window: usize,
}

impl ModelConfig {
    pub const GPT2_VOCAB: usize = 50257;

    pub fn gpt2_small() -> Self {
        Self { n_layers: 12, d_model: 768, n_heads: 12, vocab_size: Self::GPT2_VOCAB, context_window: 1024 }
    }

    pub fn distilgpt2() -> Self {
        Self { n_layers: 6, ..Self::gpt2_small() }
    }

    pub fn gpt2_medium() -> Self {
        Self { n_layers: 24, d_model: 1024, n_heads: 16, ..Self::gpt2_small() }
    }

    pub fn gpt2_large() -> Self {
        Self { n_layers: 36, d_model: 1280, n_heads: 20, ..Self::gpt2_small() }
    }

    pub fn gpt2_xl() -> Self {
        Self { n_layers: 48, d_model: 1600, n_heads: 25, ..Self::gpt2_small() }
    }

    /// Looks up a published configuration by name (`gpt2`, `distilgpt2`,
    /// `gpt2-medium`, `gpt2-large`, `gpt2-xl`).
    pub fn preset(name: &str) -> Option<Self> {
        Some(match name {
            "gpt2" | "gpt2-small" => Self::gpt2_small(),
            "distilgpt2" => Self::distilgpt2(),
            "gpt2-medium" => Self::gpt2_medium(),
            "gpt2-large" => Self::gpt2_large(),
            "gpt2-xl" => Self::gpt2_xl(),
            _ => return None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 || self.d_model == 0 || self.n_heads == 0 || self.vocab_size == 0 {
            return Err(Error::Config(format!("zero-sized dimension in {self:?}")));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.context_window == 0 {
            return Err(Error::Config("context_window must be positive".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn mlp_dim(&self) -> usize {
        4 * self.d_model
    }

    /// Parameter count with tied input/output embeddings.
    pub fn parameter_count(&self) -> usize {
        let d = self.d_model;
        let block = 2 * 2 * d + (d * 3 * d + 3 * d) + (d * d + d) + (d * 4 * d + 4 * d) + (4 * d * d + d);
        self.vocab_size * d + self.context_window * d + self.n_layers * block + 2 * d
    }

    /// Tensor names and shapes in checkpoint order, using the GPT-2 naming.
    pub fn tensor_specs(&self) -> Vec<(String, Vec<usize>)> {
        let d = self.d_model;
        let mut out = vec![
            ("wte.weight".into(), vec![self.vocab_size, d]),
            ("wpe.weight".into(), vec![self.context_window, d]),
        ];
        for l in 0..self.n_layers {
            let p = |s: &str| format!("h.{l}.{s}");
            out.extend([
                (p("ln_1.weight"), vec![d]),
                (p("ln_1.bias"), vec![d]),
                (p("attn.c_attn.weight"), vec![d, 3 * d]),
                (p("attn.c_attn.bias"), vec![3 * d]),
                (p("attn.c_proj.weight"), vec![d, d]),
                (p("attn.c_proj.bias"), vec![d]),
                (p("ln_2.weight"), vec![d]),
                (p("ln_2.bias"), vec![d]),
                (p("mlp.c_fc.weight"), vec![d, 4 * d]),
                (p("mlp.c_fc.bias"), vec![4 * d]),
                (p("mlp.c_proj.weight"), vec![4 * d, d]),
                (p("mlp.c_proj.bias"), vec![d]),
            ]);
        }
        out.push(("ln_f.weight".into(), vec![d]));
        out.push(("ln_f.bias".into(), vec![d]));
        out
    }
}

/// Sub-block whose residual contribution can be ablated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Component {
    Attention,
    Mlp,
}

impl Component {
    pub fn name(self) -> &'static str {
        match self {
            Component::Attention => "attention",
            Component::Mlp => "mlp",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "attention" | "attn" => Some(Component::Attention),
            "mlp" => Some(Component::Mlp),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub ln1_gain: Vec<f32>,
    pub ln1_bias: Vec<f32>,
    pub attn_qkv: Tensor2D,
    pub attn_qkv_bias: Vec<f32>,
    pub attn_out: Tensor2D,
    pub attn_out_bias: Vec<f32>,
    pub ln2_gain: Vec<f32>,
    pub ln2_bias: Vec<f32>,
    pub mlp_up: Tensor2D,
    pub mlp_up_bias: Vec<f32>,
    pub mlp_down: Tensor2D,
    pub mlp_down_bias: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub token_embedding: Tensor2D,
    pub position_embedding: Tensor2D,
    pub blocks: Vec<Block>,
    pub final_gain: Vec<f32>,
    pub final_bias: Vec<f32>,
}

/// Source of named f32 tensors, e.g. a checkpoint file.
pub trait TensorSource {
    /// Returns the tensor's shape and row-major data, or `None` if absent.
    fn fetch(&mut self, name: &str) -> Result<Option<(Vec<usize>, Vec<f32>)>>;
}

#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    weights: Arc<Weights>,
    ablations: Vec<(usize, Component)>,
}

/// Per-token hidden states at every capture point.
#[derive(Debug, Clone)]
pub struct HiddenStates {
    /// Index 0: embeddings; index p: residual stream after block p.
    pub capture_points: Vec<LayerTrajectory>,
    /// Output of the final layer norm, labeled `n_layers + 1`.
    pub final_norm: LayerTrajectory,
    /// `[tokens, vocab]` next-token scores, when requested.
    pub logits: Option<Tensor2D>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Logits {
    None,
    Last,
    All,
}

impl Model {
    pub fn from_weights(config: ModelConfig, weights: Weights) -> Result<Self> {
        config.validate()?;
        let model = Self { config, weights: Arc::new(weights), ablations: Vec::new() };
        model.check_shapes()?;
        Ok(model)
    }

    /// Loads every tensor named by [`ModelConfig::tensor_specs`] from `source`.
    pub fn from_source(config: ModelConfig, source: &mut dyn TensorSource) -> Result<Self> {
        config.validate()?;
        let mut fetch = |name: String, expected: Vec<usize>| -> Result<Vec<f32>> {
            let (shape, data) = source.fetch(&name)?.ok_or_else(|| Error::MissingTensor(name.clone()))?;
            let n: usize = expected.iter().product();
            if shape != expected || data.len() != n {
                return Err(Error::TensorShape { name, expected, actual: shape });
            }
            Ok(data)
        };
        let mut specs = config.tensor_specs().into_iter();
        let mut next_vec = || {
            let (name, shape) = specs.next().expect("spec list matches construction order");
            fetch(name, shape)
        };
        let d = config.d_model;
        let token_embedding = Tensor2D::new(config.vocab_size, d, next_vec()?)?;
        let position_embedding = Tensor2D::new(config.context_window, d, next_vec()?)?;
        let mut blocks = Vec::with_capacity(config.n_layers);
        for _ in 0..config.n_layers {
            blocks.push(Block {
                ln1_gain: next_vec()?,
                ln1_bias: next_vec()?,
                attn_qkv: Tensor2D::new(d, 3 * d, next_vec()?)?,
                attn_qkv_bias: next_vec()?,
                attn_out: Tensor2D::new(d, d, next_vec()?)?,
                attn_out_bias: next_vec()?,
                ln2_gain: next_vec()?,
                ln2_bias: next_vec()?,
                mlp_up: Tensor2D::new(d, 4 * d, next_vec()?)?,
                mlp_up_bias: next_vec()?,
                mlp_down: Tensor2D::new(4 * d, d, next_vec()?)?,
                mlp_down_bias: next_vec()?,
            });
        }
        let final_gain = next_vec()?;
        let final_bias = next_vec()?;
        Self::from_weights(config, Weights { token_embedding, position_embedding, blocks, final_gain, final_bias })
    }

    /// Untrained model: matrices and embeddings ~ Normal(0, 0.02), biases 0,
    /// layer-norm gains 1. Deterministic in `seed`.
    pub fn random_init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = SeededRng::new(seed);
        let mut normal = |rows: usize, cols: usize| {
            let data = (0..rows * cols).map(|_| rng.normal(0.0, INIT_STD) as f32).collect();
            Tensor2D::new(rows, cols, data).expect("sized to shape")
        };
        let d = config.d_model;
        let token_embedding = normal(config.vocab_size, d);
        let position_embedding = normal(config.context_window, d);
        let blocks = (0..config.n_layers)
            .map(|_| Block {
                ln1_gain: vec![1.0; d],
                ln1_bias: vec![0.0; d],
                attn_qkv: normal(d, 3 * d),
                attn_qkv_bias: vec![0.0; 3 * d],
                attn_out: normal(d, d),
                attn_out_bias: vec![0.0; d],
                ln2_gain: vec![1.0; d],
                ln2_bias: vec![0.0; d],
                mlp_up: normal(d, 4 * d),
                mlp_up_bias: vec![0.0; 4 * d],
                mlp_down: normal(4 * d, d),
                mlp_down_bias: vec![0.0; d],
            })
            .collect();
        Self::from_weights(
            config,
            Weights { token_embedding, position_embedding, blocks, final_gain: vec![1.0; d], final_bias: vec![0.0; d] },
        )
    }

    fn check_shapes(&self) -> Result<()> {
        let c = &self.config;
        let w = &*self.weights;
        let d = c.d_model;
        let mut actual: Vec<Vec<usize>> = vec![w.token_embedding.shape().to_vec(), w.position_embedding.shape().to_vec()];
        if w.blocks.len() != c.n_layers {
            return Err(Error::Config(format!("{} blocks for {} layers", w.blocks.len(), c.n_layers)));
        }
        for b in &w.blocks {
            actual.extend([
                vec![b.ln1_gain.len()],
                vec![b.ln1_bias.len()],
                b.attn_qkv.shape().to_vec(),
                vec![b.attn_qkv_bias.len()],
                b.attn_out.shape().to_vec(),
                vec![b.attn_out_bias.len()],
                vec![b.ln2_gain.len()],
                vec![b.ln2_bias.len()],
                b.mlp_up.shape().to_vec(),
                vec![b.mlp_up_bias.len()],
                b.mlp_down.shape().to_vec(),
                vec![b.mlp_down_bias.len()],
            ]);
        }
        actual.push(vec![w.final_gain.len()]);
        actual.push(vec![w.final_bias.len()]);
        debug_assert_eq!(d, c.d_model);
        for ((name, expected), actual) in c.tensor_specs().into_iter().zip(actual) {
            if expected != actual {
                return Err(Error::TensorShape { name, expected, actual });
            }
        }
        Ok(())
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn ablations(&self) -> &[(usize, Component)] {
        &self.ablations
    }

    /// Copy of this model whose `component` at `layer` (0-based block index)
    /// contributes nothing to the residual stream. Weights are shared.
    pub fn ablate(&self, layer: usize, component: Component) -> Result<Self> {
        if layer >= self.config.n_layers {
            return Err(Error::LayerOutOfRange { layer, n_layers: self.config.n_layers });
        }
        let mut out = self.clone();
        if !out.ablations.contains(&(layer, component)) {
            out.ablations.push((layer, component));
        }
        Ok(out)
    }

    fn is_ablated(&self, layer: usize, component: Component) -> bool {
        self.ablations.contains(&(layer, component))
    }

    /// Forward pass with all capture points and full logits.
    pub fn forward(&self, ids: &[u32]) -> Result<HiddenStates> {
        self.forward_with(ids, Logits::All)
    }

    pub fn forward_with(&self, ids: &[u32], logits: Logits) -> Result<HiddenStates> {
        let mut captures = Vec::with_capacity(self.config.n_layers + 1);
        let final_states = self.run(ids, |p, x| captures.push(LayerTrajectory::new(p, x.clone())))?;
        let logits = match logits {
            Logits::None => None,
            Logits::All => Some(matmul_transposed(&final_states, &self.weights.token_embedding)?),
            Logits::Last => {
                let last = final_states.slice_rows(final_states.rows() - 1, final_states.rows());
                Some(matmul_transposed(&last, &self.weights.token_embedding)?)
            }
        };
        Ok(HiddenStates {
            capture_points: captures,
            final_norm: LayerTrajectory::new(self.config.n_layers + 1, final_states),
            logits,
        })
    }

    /// Scores for the token following `ids`.
    pub fn next_token_logits(&self, ids: &[u32]) -> Result<Vec<f32>> {
        let final_states = self.run(ids, |_, _| {})?;
        let last = final_states.row(final_states.rows() - 1);
        let wte = &self.weights.token_embedding;
        Ok((0..wte.rows()).map(|v| tensor::dot(last, wte.row(v)) as f32).collect())
    }

    /// Runs the decoder, reporting each capture point, and returns the
    /// final-norm states.
    fn run(&self, ids: &[u32], mut capture: impl FnMut(usize, &Tensor2D)) -> Result<Tensor2D> {
        let c = &self.config;
        if ids.is_empty() {
            return Err(Error::Empty("token sequence"));
        }
        if ids.len() > c.context_window {
            return Err(Error::Length { len: ids.len(), limit: c.context_window });
        }
        let w = &*self.weights;
        let n = ids.len();
        let d = c.d_model;
        let mut x = Tensor2D::zeros(n, d);
        for (t, &id) in ids.iter().enumerate() {
            if id as usize >= c.vocab_size {
                return Err(Error::TokenOutOfRange(id));
            }
            let tok = w.token_embedding.row(id as usize);
            let pos = w.position_embedding.row(t);
            for ((o, a), b) in x.row_mut(t).iter_mut().zip(tok).zip(pos) {
                *o = a + b;
            }
        }
        capture(0, &x);
        for (l, block) in w.blocks.iter().enumerate() {
            if !self.is_ablated(l, Component::Attention) {
                let a = self.attention(block, &x)?;
                x.add_assign(&a)?;
            }
            if !self.is_ablated(l, Component::Mlp) {
                let m = mlp(block, &x)?;
                x.add_assign(&m)?;
            }
            capture(l + 1, &x);
        }
        layer_norm_rows(&x, &w.final_gain, &w.final_bias)
    }

    fn attention(&self, block: &Block, x: &Tensor2D) -> Result<Tensor2D> {
        let c = &self.config;
        let (n, d, hd) = (x.rows(), c.d_model, c.head_dim());
        let h = layer_norm_rows(x, &block.ln1_gain, &block.ln1_bias)?;
        let mut qkv = matmul(&h, &block.attn_qkv)?;
        qkv.add_row_vector(&block.attn_qkv_bias)?;
        let scale = 1.0 / libm::sqrt(hd as f64);
        let mut merged = Tensor2D::zeros(n, d);
        let mut weights = vec![0.0f64; n];
        for head in 0..c.n_heads {
            let (qo, ko, vo) = (head * hd, d + head * hd, 2 * d + head * hd);
            for i in 0..n {
                let q = &qkv.row(i)[qo..qo + hd];
                let mut max = f64::NEG_INFINITY;
                for (j, wj) in weights.iter_mut().enumerate().take(i + 1) {
                    let s = tensor::dot(q, &qkv.row(j)[ko..ko + hd]) * scale;
                    *wj = s;
                    max = max.max(s);
                }
                let mut sum = 0.0;
                for wj in &mut weights[..=i] {
                    *wj = libm::exp(*wj - max);
                    sum += *wj;
                }
                let mut acc = vec![0.0f64; hd];
                for (j, &wj) in weights[..=i].iter().enumerate() {
                    let p = wj / sum;
                    for (a, &v) in acc.iter_mut().zip(&qkv.row(j)[vo..vo + hd]) {
                        *a += p * v as f64;
                    }
                }
                for (o, a) in merged.row_mut(i)[qo..qo + hd].iter_mut().zip(acc) {
                    *o = a as f32;
                }
            }
        }
        let mut out = matmul(&merged, &block.attn_out)?;
        out.add_row_vector(&block.attn_out_bias)?;
        Ok(out)
    }
}

fn mlp(block: &Block, x: &Tensor2D) -> Result<Tensor2D> {
    let h = layer_norm_rows(x, &block.ln2_gain, &block.ln2_bias)?;
    let mut up = matmul(&h, &block.mlp_up)?;
    up.add_row_vector(&block.mlp_up_bias)?;
    tensor::gelu_in_place(up.data_mut());
    let mut down = matmul(&up, &block.mlp_down)?;
    down.add_row_vector(&block.mlp_down_bias)?;
    Ok(down)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig { n_layers: 3, d_model: 16, n_heads: 4, vocab_size: 40, context_window: 32 }
    }

    fn zeroed(config: ModelConfig) -> Model {
        let m = Model::random_init(config, 0).unwrap();
        let mut w = (*m.weights).clone();
        for b in &mut w.blocks {
            for t in [&mut b.attn_qkv, &mut b.attn_out, &mut b.mlp_up, &mut b.mlp_down] {
                t.data_mut().iter_mut().for_each(|v| *v = 0.0);
            }
        }
        Model::from_weights(config, w).unwrap()
    }

    #[test]
    fn published_presets() {
        let s = ModelConfig::gpt2_small();
        assert_eq!((s.n_layers, s.d_model, s.n_heads), (12, 768, 12));
        let d = ModelConfig::distilgpt2();
        assert_eq!((d.n_layers, d.d_model), (6, 768));
        let xl = ModelConfig::gpt2_xl();
        assert_eq!((xl.n_layers, xl.d_model, xl.n_heads), (48, 1600, 25));
        // 124M for GPT-2 small with tied embeddings.
        assert_eq!(s.parameter_count(), 124_439_808);
        assert!(ModelConfig { n_heads: 5, ..tiny() }.validate().is_err());
    }

    #[test]
    fn random_init_determinism() {
        let a = Model::random_init(tiny(), 11).unwrap();
        let b = Model::random_init(tiny(), 11).unwrap();
        let c = Model::random_init(tiny(), 12).unwrap();
        assert_eq!(a.weights(), b.weights());
        assert_ne!(a.weights(), c.weights());
    }

    #[test]
    fn shape_law() {
        let m = Model::random_init(tiny(), 1).unwrap();
        let h = m.forward(&[1, 2, 3, 4, 5]).unwrap();
        assert_eq!(h.capture_points.len(), 4);
        for (p, cp) in h.capture_points.iter().enumerate() {
            assert_eq!(cp.layer, p);
            assert_eq!(cp.states.shape(), [5, 16]);
        }
        assert_eq!(h.final_norm.layer, 4);
        assert_eq!(h.logits.unwrap().shape(), [5, 40]);
    }

    #[test]
    fn overlong_and_bad_tokens() {
        let m = Model::random_init(tiny(), 1).unwrap();
        let ids: Vec<u32> = (0..33).map(|i| i % 40).collect();
        assert!(matches!(m.forward(&ids), Err(Error::Length { len: 33, limit: 32 })));
        assert!(matches!(m.forward(&[40]), Err(Error::TokenOutOfRange(40))));
        assert!(m.forward(&[]).is_err());
    }

    #[test]
    fn zero_network_passes_embeddings_through() {
        let m = zeroed(tiny());
        let h = m.forward(&[3, 1, 4, 1, 5]).unwrap();
        for cp in &h.capture_points[1..] {
            assert_eq!(cp.states, h.capture_points[0].states);
        }
        let normed = layer_norm_rows(&h.capture_points[0].states, &[1.0; 16], &[0.0; 16]).unwrap();
        assert_eq!(h.final_norm.states, normed);
    }

    #[test]
    fn causal_truncation() {
        let m = Model::random_init(tiny(), 5).unwrap();
        let ids = [7, 3, 9, 12, 0, 33, 21];
        let full = m.forward(&ids).unwrap();
        let part = m.forward(&ids[..4]).unwrap();
        for (a, b) in full.capture_points.iter().zip(&part.capture_points) {
            for t in 0..4 {
                for (x, y) in a.states.row(t).iter().zip(b.states.row(t)) {
                    assert!((x - y).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn ablation_locality() {
        let m = Model::random_init(tiny(), 5).unwrap();
        let ids = [7, 3, 9, 12, 0];
        let base = m.forward(&ids).unwrap();
        for comp in [Component::Attention, Component::Mlp] {
            let ab = m.ablate(1, comp).unwrap().forward(&ids).unwrap();
            for p in 0..=1 {
                assert_eq!(ab.capture_points[p].states, base.capture_points[p].states);
            }
            assert_ne!(ab.capture_points[2].states, base.capture_points[2].states);
        }
        assert!(matches!(m.ablate(3, Component::Mlp), Err(Error::LayerOutOfRange { .. })));
    }

    #[test]
    fn ablating_zero_component_is_noop() {
        let m = zeroed(tiny());
        let ids = [1, 2, 3];
        let base = m.forward(&ids).unwrap();
        let ab = m.ablate(0, Component::Attention).unwrap().forward(&ids).unwrap();
        assert_eq!(ab.logits, base.logits);
    }

    #[test]
    fn next_token_logits_match_forward() {
        let m = Model::random_init(tiny(), 2).unwrap();
        let ids = [5, 6, 7];
        let full = m.forward(&ids).unwrap().logits.unwrap();
        let last = m.next_token_logits(&ids).unwrap();
        assert_eq!(full.row(2), &last[..]);
        let only_last = m.forward_with(&ids, Logits::Last).unwrap().logits.unwrap();
        assert_eq!(only_last.row(0), &last[..]);
    }

    struct MapSource(Vec<(String, Vec<usize>, Vec<f32>)>);

    impl TensorSource for MapSource {
        fn fetch(&mut self, name: &str) -> Result<Option<(Vec<usize>, Vec<f32>)>> {
            Ok(self.0.iter().find(|t| t.0 == name).map(|t| (t.1.clone(), t.2.clone())))
        }
    }

    fn source_from(m: &Model) -> MapSource {
        let w = m.weights();
        let mut flat: Vec<Vec<f32>> = vec![w.token_embedding.data().to_vec(), w.position_embedding.data().to_vec()];
        for b in &w.blocks {
            flat.extend([
                b.ln1_gain.clone(),
                b.ln1_bias.clone(),
                b.attn_qkv.data().to_vec(),
                b.attn_qkv_bias.clone(),
                b.attn_out.data().to_vec(),
                b.attn_out_bias.clone(),
                b.ln2_gain.clone(),
                b.ln2_bias.clone(),
                b.mlp_up.data().to_vec(),
                b.mlp_up_bias.clone(),
                b.mlp_down.data().to_vec(),
                b.mlp_down_bias.clone(),
            ]);
        }
        flat.push(w.final_gain.clone());
        flat.push(w.final_bias.clone());
        MapSource(m.config().tensor_specs().into_iter().zip(flat).map(|((n, s), d)| (n, s, d)).collect())
    }

    #[test]
    fn load_from_source_round_trips() {
        let m = Model::random_init(tiny(), 4).unwrap();
        let loaded = Model::from_source(tiny(), &mut source_from(&m)).unwrap();
        assert_eq!(loaded.weights(), m.weights());
    }

    #[test]
    fn load_reports_bad_tensors() {
        let m = Model::random_init(tiny(), 4).unwrap();
        let mut src = source_from(&m);
        src.0.retain(|t| t.0 != "h.1.mlp.c_fc.bias");
        assert_eq!(
            Model::from_source(tiny(), &mut src).unwrap_err(),
            Error::MissingTensor("h.1.mlp.c_fc.bias".into())
        );
        let mut src = source_from(&m);
        src.0[4].2.pop();
        match Model::from_source(tiny(), &mut src).unwrap_err() {
            Error::TensorShape { name, .. } => assert_eq!(name, "h.0.attn.c_attn.weight"),
            e => panic!("{e:?}"),
        }
    }
}
