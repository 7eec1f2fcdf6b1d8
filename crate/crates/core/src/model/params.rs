use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::init_trainable_table;

/// Nonlinearity applied to aggregated neighbor states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Elu,
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }

    /// Derivative at `x`, given `y = apply(x)`.
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    y + 1.0
                }
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// User embedding size; also the node size fed to the first graph layer.
    pub user_dim: usize,
    pub item_dim: usize,
    /// Size of the query/key projections inside attention.
    pub hidden: usize,
    /// Heads per graph-attention layer.
    pub heads: Vec<usize>,
    pub leaky_slope: f64,
    pub gat_activation: Activation,
    pub cross_layers: usize,
    pub deep_layers: Vec<usize>,
    /// Uniform init range for user/item tables.
    pub embedding_init: f64,
    /// Off: one parameter-free mean over each neighborhood replaces the
    /// attention layers.
    pub use_gat: bool,
    pub use_dcn: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            user_dim: 256,
            item_dim: 256,
            hidden: 256,
            heads: vec![4, 1],
            leaky_slope: 0.2,
            gat_activation: Activation::Elu,
            cross_layers: 2,
            deep_layers: vec![128, 128],
            embedding_init: 0.1,
            use_gat: true,
            use_dcn: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.user_dim == 0 || self.hidden == 0 {
            return fail("model dims must be positive".into());
        }
        if self.user_dim != self.item_dim {
            return fail(format!(
                "user_dim ({}) and item_dim ({}) must match: graph layers mix node kinds",
                self.user_dim, self.item_dim
            ));
        }
        if self.use_gat && (self.heads.is_empty() || self.heads.contains(&0)) {
            return fail("every graph layer needs at least one head".into());
        }
        if self.use_dcn && self.deep_layers.contains(&0) {
            return fail("deep layer sizes must be positive".into());
        }
        if !(self.leaky_slope.is_finite() && self.leaky_slope >= 0.0) {
            return fail("leaky_slope must be a non-negative number".into());
        }
        Ok(())
    }

    /// Node state size after the graph layers.
    pub fn node_out_dim(&self) -> usize {
        if self.use_gat {
            self.user_dim * self.heads.iter().product::<usize>()
        } else {
            self.user_dim
        }
    }

    /// Input size of the interaction network, `[user || item || sentence]`.
    pub fn interaction_in_dim(&self) -> usize {
        3 * self.node_out_dim()
    }

    /// Size of the final sentence representation.
    pub fn interaction_out_dim(&self) -> usize {
        let deep_out = self.deep_layers.last().copied();
        if self.use_dcn {
            self.interaction_in_dim() + deep_out.unwrap_or(0)
        } else {
            deep_out.unwrap_or(self.node_out_dim())
        }
    }

    fn linear_out_dim(&self) -> usize {
        self.deep_layers
            .last()
            .copied()
            .unwrap_or(self.node_out_dim())
    }
}

/// Table sizes that depend on the data rather than the architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub users: usize,
    pub items: usize,
    pub attribute_dim: usize,
    pub sentence_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatHead {
    /// `hidden x in_dim`
    pub query: Array2<f64>,
    /// `hidden x in_dim`
    pub key: Array2<f64>,
    /// Attention vector over `[query || key]`, length `2 * hidden`.
    pub attention: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatLayer {
    pub heads: Vec<GatHead>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DcnParams {
    pub cross_w: Vec<Array1<f64>>,
    pub cross_b: Vec<Array1<f64>>,
    /// `out x in` per deep layer.
    pub deep_w: Vec<Array2<f64>>,
    pub deep_b: Vec<Array1<f64>>,
}

/// Feature-interaction stage: the cross/deep network or, as an ablation, a
/// single linear layer.
#[derive(Debug, Clone, PartialEq)]
pub enum Interaction {
    Dcn(DcnParams),
    Linear { w: Array2<f64>, b: Array1<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub user_emb: Array2<f64>,
    pub item_emb: Array2<f64>,
    /// Maps sentence encoder vectors to node size.
    pub sentence_proj_w: Array2<f64>,
    pub sentence_proj_b: Array1<f64>,
    pub gat: Vec<GatLayer>,
    pub interaction: Interaction,
    pub sentence_head: Array1<f64>,
    pub attribute_head: Array1<f64>,
}

fn xavier(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-limit..=limit))
}

fn uniform_vec(rng: &mut ChaCha8Rng, len: usize) -> Array1<f64> {
    let limit = (3.0 / len as f64).sqrt();
    Array1::from_shape_simple_fn(len, || rng.random_range(-limit..=limit))
}

impl ModelParams {
    /// Seeded initialization. User/item tables are Uniform(-init, init);
    /// matrices use Glorot-uniform; biases start at zero.
    pub fn init(config: &ModelConfig, shape: &ModelShape, seed: u64) -> Result<Self> {
        config.validate()?;
        if shape.attribute_dim != config.user_dim {
            return Err(Error::Shape(format!(
                "attribute vectors have dimension {}, node size is {}",
                shape.attribute_dim, config.user_dim
            )));
        }
        let d = config.user_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let user_emb =
            init_trainable_table(shape.users, d, rng.random(), config.embedding_init).into_data();
        let item_emb =
            init_trainable_table(shape.items, d, rng.random(), config.embedding_init).into_data();
        let sentence_proj_w = xavier(&mut rng, d, shape.sentence_dim);
        let sentence_proj_b = Array1::zeros(d);

        let mut gat = Vec::new();
        if config.use_gat {
            let mut in_dim = d;
            for &n_heads in &config.heads {
                let heads = (0..n_heads)
                    .map(|_| GatHead {
                        query: xavier(&mut rng, config.hidden, in_dim),
                        key: xavier(&mut rng, config.hidden, in_dim),
                        attention: uniform_vec(&mut rng, 2 * config.hidden),
                    })
                    .collect();
                gat.push(GatLayer { heads });
                in_dim *= n_heads;
            }
        }

        let x_dim = config.interaction_in_dim();
        let interaction = if config.use_dcn {
            let mut cross_w = Vec::new();
            let mut cross_b = Vec::new();
            for _ in 0..config.cross_layers {
                cross_w.push(uniform_vec(&mut rng, x_dim));
                cross_b.push(Array1::zeros(x_dim));
            }
            let mut deep_w = Vec::new();
            let mut deep_b = Vec::new();
            let mut prev = x_dim;
            for &width in &config.deep_layers {
                deep_w.push(xavier(&mut rng, width, prev));
                deep_b.push(Array1::zeros(width));
                prev = width;
            }
            Interaction::Dcn(DcnParams {
                cross_w,
                cross_b,
                deep_w,
                deep_b,
            })
        } else {
            let out = config.linear_out_dim();
            Interaction::Linear {
                w: xavier(&mut rng, out, x_dim),
                b: Array1::zeros(out),
            }
        };
        let sentence_head = uniform_vec(&mut rng, config.interaction_out_dim());
        let attribute_head = uniform_vec(&mut rng, config.node_out_dim());
        Ok(ModelParams {
            user_emb,
            item_emb,
            sentence_proj_w,
            sentence_proj_b,
            gat,
            interaction,
            sentence_head,
            attribute_head,
        })
    }

    /// All-zero tensors with this structure.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, mut t) in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    /// Every trainable tensor with its stable name, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        let mut out: Vec<(String, ArrayViewD<'_, f64>)> = vec![
            ("user_emb".into(), self.user_emb.view().into_dyn()),
            ("item_emb".into(), self.item_emb.view().into_dyn()),
            (
                "sentence_proj.w".into(),
                self.sentence_proj_w.view().into_dyn(),
            ),
            (
                "sentence_proj.b".into(),
                self.sentence_proj_b.view().into_dyn(),
            ),
        ];
        for (l, layer) in self.gat.iter().enumerate() {
            for (h, head) in layer.heads.iter().enumerate() {
                out.push((format!("gat.{l}.{h}.query"), head.query.view().into_dyn()));
                out.push((format!("gat.{l}.{h}.key"), head.key.view().into_dyn()));
                out.push((
                    format!("gat.{l}.{h}.attention"),
                    head.attention.view().into_dyn(),
                ));
            }
        }
        match &self.interaction {
            Interaction::Dcn(p) => {
                for (l, (w, b)) in p.cross_w.iter().zip(&p.cross_b).enumerate() {
                    out.push((format!("cross.{l}.w"), w.view().into_dyn()));
                    out.push((format!("cross.{l}.b"), b.view().into_dyn()));
                }
                for (l, (w, b)) in p.deep_w.iter().zip(&p.deep_b).enumerate() {
                    out.push((format!("deep.{l}.w"), w.view().into_dyn()));
                    out.push((format!("deep.{l}.b"), b.view().into_dyn()));
                }
            }
            Interaction::Linear { w, b } => {
                out.push(("linear.w".into(), w.view().into_dyn()));
                out.push(("linear.b".into(), b.view().into_dyn()));
            }
        }
        out.push(("sentence_head".into(), self.sentence_head.view().into_dyn()));
        out.push((
            "attribute_head".into(),
            self.attribute_head.view().into_dyn(),
        ));
        out
    }

    /// Mutable counterpart of [`tensors`](Self::tensors), same order.
    pub fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
        let mut out: Vec<(String, ArrayViewMutD<'_, f64>)> = vec![
            ("user_emb".into(), self.user_emb.view_mut().into_dyn()),
            ("item_emb".into(), self.item_emb.view_mut().into_dyn()),
            (
                "sentence_proj.w".into(),
                self.sentence_proj_w.view_mut().into_dyn(),
            ),
            (
                "sentence_proj.b".into(),
                self.sentence_proj_b.view_mut().into_dyn(),
            ),
        ];
        for (l, layer) in self.gat.iter_mut().enumerate() {
            for (h, head) in layer.heads.iter_mut().enumerate() {
                out.push((
                    format!("gat.{l}.{h}.query"),
                    head.query.view_mut().into_dyn(),
                ));
                out.push((format!("gat.{l}.{h}.key"), head.key.view_mut().into_dyn()));
                out.push((
                    format!("gat.{l}.{h}.attention"),
                    head.attention.view_mut().into_dyn(),
                ));
            }
        }
        match &mut self.interaction {
            Interaction::Dcn(p) => {
                for (l, (w, b)) in p.cross_w.iter_mut().zip(p.cross_b.iter_mut()).enumerate() {
                    out.push((format!("cross.{l}.w"), w.view_mut().into_dyn()));
                    out.push((format!("cross.{l}.b"), b.view_mut().into_dyn()));
                }
                for (l, (w, b)) in p.deep_w.iter_mut().zip(p.deep_b.iter_mut()).enumerate() {
                    out.push((format!("deep.{l}.w"), w.view_mut().into_dyn()));
                    out.push((format!("deep.{l}.b"), b.view_mut().into_dyn()));
                }
            }
            Interaction::Linear { w, b } => {
                out.push(("linear.w".into(), w.view_mut().into_dyn()));
                out.push(("linear.b".into(), b.view_mut().into_dyn()));
            }
        }
        out.push((
            "sentence_head".into(),
            self.sentence_head.view_mut().into_dyn(),
        ));
        out.push((
            "attribute_head".into(),
            self.attribute_head.view_mut().into_dyn(),
        ));
        out
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// `self += other`, tensor by tensor.
    pub fn add_assign(&mut self, other: &ModelParams) {
        for ((_, mut a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            Zip::from(&mut a).and(&b).for_each(|x, &y| *x += y);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, mut t) in self.tensors_mut() {
            t.mapv_inplace(|v| v * factor);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}
