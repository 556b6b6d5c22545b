use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attention::AttentionMap;
use crate::autodiff::{Gradients, NodeId, Tape};
use crate::error::{shape_err, Error, Result};
use crate::linalg::DenseMatrix;
use crate::math;
use crate::polyfilter::{BasisKind, PolyFilter, DEFAULT_ORDER};
use crate::table::{ColumnKind, FeatureValue, Reserved, TableRow, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum AttentionKind {
    Vanilla,
    CheAtt,
}

/// Basis and order used for every CheAtt layer.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PolyTemplate {
    pub basis: BasisKind,
    pub order: usize,
}

impl Default for PolyTemplate {
    fn default() -> Self {
        Self {
            basis: BasisKind::Chebyshev,
            order: DEFAULT_ORDER,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelConfig {
    pub n_tokens: usize,
    pub embed_dim: usize,
    pub depth: usize,
    pub n_heads: usize,
    pub poly: PolyTemplate,
    pub attention_kind: AttentionKind,
    pub ffn_hidden: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_tokens", self.n_tokens),
            ("embed_dim", self.embed_dim),
            ("n_heads", self.n_heads),
            ("ffn_hidden", self.ffn_hidden),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Parameter(format!("{name} must be positive")));
            }
        }
        if self.embed_dim % self.n_heads != 0 {
            return Err(Error::Parameter(format!(
                "embed_dim {} is not divisible by n_heads {}",
                self.embed_dim, self.n_heads
            )));
        }
        if self.attention_kind == AttentionKind::CheAtt && self.poly.order == 0 {
            return Err(Error::Parameter("CheAtt needs polynomial order ≥ 1".into()));
        }
        self.poly.basis.validate()
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.n_heads
    }
}

/// Named trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: DenseMatrix,
    /// Whether weight decay applies; polynomial coefficients are exempt.
    pub decay: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    pub params: Vec<Param>,
}

impl ParamStore {
    fn push(&mut self, name: String, value: DenseMatrix, decay: bool) -> usize {
        self.params.push(Param { name, value, decay });
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.data().len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum EmbedSlot {
    Table(usize),
    Affine { weight: usize, bias: usize },
}

#[derive(Debug, Clone, PartialEq)]
struct HeadSlots {
    wq: usize,
    wk: usize,
    wv: usize,
    wo: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct LayerSlots {
    heads: Vec<HeadSlots>,
    attn_bias: usize,
    ln1_gamma: usize,
    ln1_beta: usize,
    ffn_w1: usize,
    ffn_b1: usize,
    ffn_w2: usize,
    ffn_b2: usize,
    ln2_gamma: usize,
    ln2_beta: usize,
    alpha: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    embed: Vec<EmbedSlot>,
    layers: Vec<LayerSlots>,
    head_w1: usize,
    head_b1: usize,
    head_w2: usize,
    head_b2: usize,
    recon: Vec<(usize, usize)>,
}

/// Parameter nodes of a model on a particular tape.
#[derive(Debug, Clone)]
pub struct Bound {
    ids: Vec<NodeId>,
}

impl Bound {
    pub fn node(&self, param: usize) -> NodeId {
        self.ids[param]
    }
}

/// Node ids of one forward pass.
#[derive(Debug, Clone)]
pub struct EncoderTrace {
    /// `X⁽⁰⁾ … X⁽ᴸ⁾`.
    pub layers: Vec<NodeId>,
    /// Attention maps per layer, per head.
    pub attention: Vec<Vec<NodeId>>,
}

impl EncoderTrace {
    pub fn output(&self) -> NodeId {
        *self.layers.last().expect("trace always holds the embedding")
    }
}

/// Materialised feature maps and attention maps of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderActivations {
    pub layers: Vec<DenseMatrix>,
    pub attention: Vec<Vec<AttentionMap>>,
}

/// Encoder, prediction head and reconstruction heads with their parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    columns: Vec<ColumnKind>,
    task: Task,
    params: ParamStore,
    layout: Layout,
}

struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    fn uniform(&mut self, rows: usize, cols: usize, fan_in: usize) -> DenseMatrix {
        let bound = 1.0 / math::sqrt(fan_in as f64);
        DenseMatrix::from_fn(rows, cols, |_, _| self.rng.gen_range(-bound..bound))
    }
}

impl Model {
    /// Builds and initialises a model: projections uniform in `±1/√fan_in`,
    /// biases and layer-norm shifts zero, layer-norm scales one, polynomial
    /// coefficients from [`PolyFilter::initial_coeffs`].
    pub fn new(config: ModelConfig, columns: Vec<ColumnKind>, task: Task) -> Result<Self> {
        config.validate()?;
        if columns.len() != config.n_tokens {
            return Err(Error::Parameter(format!(
                "{} columns for n_tokens = {}",
                columns.len(),
                config.n_tokens
            )));
        }
        let d = config.embed_dim;
        let dh = config.head_dim();
        let hidden = config.ffn_hidden;
        let mut init = Init {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
        };
        let mut store = ParamStore::default();

        let mut embed = Vec::with_capacity(columns.len());
        for (c, kind) in columns.iter().enumerate() {
            embed.push(match kind {
                ColumnKind::Categorical { .. } => EmbedSlot::Table(store.push(
                    format!("embed.col{c}.table"),
                    init.uniform(kind.table_rows(), d, d),
                    true,
                )),
                ColumnKind::Continuous => EmbedSlot::Affine {
                    weight: store.push(format!("embed.col{c}.weight"), init.uniform(1, d, d), true),
                    bias: store.push(format!("embed.col{c}.bias"), DenseMatrix::zeros(1, d), false),
                },
            });
        }

        let mut layers = Vec::with_capacity(config.depth);
        for l in 0..config.depth {
            let heads = (0..config.n_heads)
                .map(|h| HeadSlots {
                    wq: store.push(format!("layer{l}.head{h}.wq"), init.uniform(d, dh, d), true),
                    wk: store.push(format!("layer{l}.head{h}.wk"), init.uniform(d, dh, d), true),
                    wv: store.push(format!("layer{l}.head{h}.wv"), init.uniform(d, dh, d), true),
                    wo: store.push(format!("layer{l}.head{h}.wo"), init.uniform(dh, d, d), true),
                })
                .collect();
            let alpha = match config.attention_kind {
                AttentionKind::Vanilla => None,
                AttentionKind::CheAtt => {
                    let coeffs = PolyFilter::initial_coeffs(config.poly.order);
                    let n = coeffs.len();
                    Some(store.push(
                        format!("layer{l}.cheatt.alpha"),
                        DenseMatrix::from_vec(1, n, coeffs)?,
                        false,
                    ))
                }
            };
            layers.push(LayerSlots {
                heads,
                attn_bias: store.push(format!("layer{l}.attn_out.bias"), DenseMatrix::zeros(1, d), false),
                ln1_gamma: store.push(format!("layer{l}.ln1.gamma"), DenseMatrix::filled(1, d, 1.0), false),
                ln1_beta: store.push(format!("layer{l}.ln1.beta"), DenseMatrix::zeros(1, d), false),
                ffn_w1: store.push(format!("layer{l}.ffn.w1"), init.uniform(d, hidden, d), true),
                ffn_b1: store.push(format!("layer{l}.ffn.b1"), DenseMatrix::zeros(1, hidden), false),
                ffn_w2: store.push(format!("layer{l}.ffn.w2"), init.uniform(hidden, d, hidden), true),
                ffn_b2: store.push(format!("layer{l}.ffn.b2"), DenseMatrix::zeros(1, d), false),
                ln2_gamma: store.push(format!("layer{l}.ln2.gamma"), DenseMatrix::filled(1, d, 1.0), false),
                ln2_beta: store.push(format!("layer{l}.ln2.beta"), DenseMatrix::zeros(1, d), false),
                alpha,
            });
        }

        let out = task.output_dim();
        let head_w1 = store.push("head.w1".into(), init.uniform(d, hidden, d), true);
        let head_b1 = store.push("head.b1".into(), DenseMatrix::zeros(1, hidden), false);
        let head_w2 = store.push("head.w2".into(), init.uniform(hidden, out, hidden), true);
        let head_b2 = store.push("head.b2".into(), DenseMatrix::zeros(1, out), false);

        let recon = columns
            .iter()
            .enumerate()
            .map(|(c, kind)| {
                let width = match kind {
                    ColumnKind::Continuous => 1,
                    ColumnKind::Categorical { .. } => kind.table_rows(),
                };
                (
                    store.push(format!("recon.col{c}.weight"), init.uniform(d, width, d), true),
                    store.push(format!("recon.col{c}.bias"), DenseMatrix::zeros(1, width), false),
                )
            })
            .collect();

        Ok(Self {
            config,
            columns,
            task,
            params: store,
            layout: Layout {
                embed,
                layers,
                head_w1,
                head_b1,
                head_w2,
                head_b2,
                recon,
            },
        })
    }

    /// Rebuilds a model from stored parameter values. Names and shapes must
    /// match a freshly initialised model with the same configuration.
    pub fn from_parts(
        config: ModelConfig,
        columns: Vec<ColumnKind>,
        task: Task,
        values: Vec<(String, DenseMatrix)>,
    ) -> Result<Self> {
        let mut model = Self::new(config, columns, task)?;
        if values.len() != model.params.len() {
            return Err(Error::Data(format!(
                "{} parameters supplied, model has {}",
                values.len(),
                model.params.len()
            )));
        }
        for (param, (name, value)) in model.params.params.iter_mut().zip(values) {
            if param.name != name {
                return Err(Error::Data(format!(
                    "expected parameter {}, found {name}",
                    param.name
                )));
            }
            if param.value.shape() != value.shape() {
                return Err(shape_err(
                    "from_parts",
                    format!("{name}: {:?} vs {:?}", param.value.shape(), value.shape()),
                ));
            }
            if !value.is_finite() {
                return Err(Error::Data(format!("{name} has non-finite entries")));
            }
            param.value = value;
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn columns(&self) -> &[ColumnKind] {
        &self.columns
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn value(&self, slot: usize) -> &DenseMatrix {
        &self.params.params[slot].value
    }

    /// The filter each layer applies to its attention maps; Vanilla layers
    /// report the degree-one filter `A`.
    pub fn layer_filters(&self) -> Vec<PolyFilter> {
        self.layout
            .layers
            .iter()
            .map(|layer| match layer.alpha {
                Some(slot) => PolyFilter::new(self.config.poly.basis, self.value(slot).data().to_vec())
                    .expect("stored coefficients are finite"),
                None => PolyFilter::vanilla(BasisKind::Power, 1).expect("valid"),
            })
            .collect()
    }

    /// Puts every parameter on `tape` as a leaf.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        Bound {
            ids: self
                .params
                .params
                .iter()
                .map(|p| tape.leaf(p.value.clone()))
                .collect(),
        }
    }

    /// Gradient per parameter, zeros where a parameter did not contribute.
    pub fn param_grads(&self, grads: &Gradients, bound: &Bound) -> Vec<DenseMatrix> {
        self.params
            .params
            .iter()
            .zip(&bound.ids)
            .map(|(p, &id)| grads.get_or_zeros(id, p.value.rows(), p.value.cols()))
            .collect()
    }

    /// Token matrix `X⁽⁰⁾` (`n × d`): categorical cells look up their table
    /// row (unknown indices fall back to UNK), continuous cells map to
    /// `c · w + b`.
    pub fn embed_columns(&self, tape: &mut Tape, bound: &Bound, row: &TableRow) -> Result<NodeId> {
        if row.values.len() != self.columns.len() {
            return Err(Error::Data(format!(
                "row has {} values, model expects {}",
                row.values.len(),
                self.columns.len()
            )));
        }
        let mut tokens = Vec::with_capacity(row.values.len());
        for (c, (value, slot)) in row.values.iter().zip(&self.layout.embed).enumerate() {
            let token = match (slot, value, self.columns[c]) {
                (EmbedSlot::Table(t), FeatureValue::Categorical(idx), ColumnKind::Categorical { vocab }) => {
                    let idx = if (*idx as usize) < self.columns[c].table_rows() {
                        *idx
                    } else {
                        Reserved::Unk.index(vocab)
                    };
                    tape.select_row(bound.node(*t), idx as usize)?
                }
                (EmbedSlot::Affine { weight, bias }, FeatureValue::Continuous(x), _) => {
                    if !x.is_finite() {
                        return Err(Error::Data(format!("column {c} holds a non-finite value")));
                    }
                    tape.affine_scalar(bound.node(*weight), bound.node(*bias), *x)?
                }
                _ => {
                    return Err(Error::Data(format!(
                        "column {c}: value kind does not match column kind"
                    )))
                }
            };
            tokens.push(token);
        }
        tape.stack_rows(&tokens)
    }

    /// Runs every encoder block on `x0`.
    pub fn encoder_forward(&self, tape: &mut Tape, bound: &Bound, x0: NodeId) -> Result<EncoderTrace> {
        let (n, d) = tape.value(x0).shape();
        if d != self.config.embed_dim {
            return Err(shape_err(
                "encoder_forward",
                format!("input is {n}x{d}, embed_dim is {}", self.config.embed_dim),
            ));
        }
        let scale = math::sqrt(self.config.head_dim() as f64);
        let mut layers = Vec::with_capacity(self.config.depth + 1);
        let mut attention = Vec::with_capacity(self.config.depth);
        layers.push(x0);
        let mut x = x0;
        for layer in &self.layout.layers {
            let mut projected = Vec::with_capacity(layer.heads.len());
            let mut maps = Vec::with_capacity(layer.heads.len());
            for head in &layer.heads {
                let q = tape.matmul(x, bound.node(head.wq))?;
                let k = tape.matmul(x, bound.node(head.wk))?;
                let v = tape.matmul(x, bound.node(head.wv))?;
                let logits = tape.matmul_transb(q, k)?;
                let a = tape.softmax_rows(logits, scale);
                let mixed = match layer.alpha {
                    None => tape.matmul(a, v)?,
                    Some(alpha) => tape.poly_filter(a, v, bound.node(alpha), self.config.poly.basis)?,
                };
                projected.push(tape.matmul(mixed, bound.node(head.wo))?);
                maps.push(a);
            }
            let attn = tape.sum(&projected)?;
            let attn = tape.add_row(attn, bound.node(layer.attn_bias))?;
            let res = tape.add(x, attn)?;
            let x1 = tape.layer_norm(res, bound.node(layer.ln1_gamma), bound.node(layer.ln1_beta))?;
            let h = tape.matmul(x1, bound.node(layer.ffn_w1))?;
            let h = tape.add_row(h, bound.node(layer.ffn_b1))?;
            let h = tape.gelu(h);
            let f = tape.matmul(h, bound.node(layer.ffn_w2))?;
            let f = tape.add_row(f, bound.node(layer.ffn_b2))?;
            let res = tape.add(x1, f)?;
            x = tape.layer_norm(res, bound.node(layer.ln2_gamma), bound.node(layer.ln2_beta))?;
            layers.push(x);
            attention.push(maps);
        }
        Ok(EncoderTrace { layers, attention })
    }

    /// Prediction head over mean-pooled tokens: `1 × output_dim` logits (or
    /// the regression value).
    pub fn predict_head(&self, tape: &mut Tape, bound: &Bound, tokens: NodeId) -> Result<NodeId> {
        let pooled = tape.mean_rows(tokens);
        let h = tape.matmul(pooled, bound.node(self.layout.head_w1))?;
        let h = tape.add_row(h, bound.node(self.layout.head_b1))?;
        let h = tape.gelu(h);
        let o = tape.matmul(h, bound.node(self.layout.head_w2))?;
        tape.add_row(o, bound.node(self.layout.head_b2))
    }

    /// Reconstruction of column `col` from its final token: logits over the
    /// column's table for categorical columns, a `1 × 1` value otherwise.
    pub fn reconstruct(&self, tape: &mut Tape, bound: &Bound, tokens: NodeId, col: usize) -> Result<NodeId> {
        let (w, b) = *self
            .layout
            .recon
            .get(col)
            .ok_or_else(|| Error::Parameter(format!("no column {col}")))?;
        let token = tape.select_row(tokens, col)?;
        let o = tape.matmul(token, bound.node(w))?;
        tape.add_row(o, bound.node(b))
    }

    /// Full forward pass of one row on a fresh tape.
    pub fn trace(&self, row: &TableRow) -> Result<(Tape, Bound, EncoderTrace)> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let x0 = self.embed_columns(&mut tape, &bound, row)?;
        let trace = self.encoder_forward(&mut tape, &bound, x0)?;
        Ok((tape, bound, trace))
    }

    /// Feature maps and attention maps of every layer for one row.
    pub fn activations(&self, row: &TableRow) -> Result<EncoderActivations> {
        let (tape, _, trace) = self.trace(row)?;
        let layers = trace.layers.iter().map(|&id| tape.value(id).clone()).collect();
        let attention = trace
            .attention
            .iter()
            .map(|heads| {
                heads
                    .iter()
                    .map(|&id| AttentionMap::from_matrix_unchecked(tape.value(id).clone()))
                    .collect()
            })
            .collect();
        Ok(EncoderActivations { layers, attention })
    }

    /// Class probabilities, or the single regression output.
    pub fn predict(&self, row: &TableRow) -> Result<Vec<f64>> {
        let (mut tape, bound, trace) = self.trace(row)?;
        let out = self.predict_head(&mut tape, &bound, trace.output())?;
        let raw = tape.value(out).data().to_vec();
        if !self.task.is_classification() {
            return Ok(raw);
        }
        let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = raw.iter().map(|&x| math::exp(x - max)).collect();
        let z: f64 = exps.iter().sum();
        Ok(exps.into_iter().map(|e| e / z).collect())
    }
}
