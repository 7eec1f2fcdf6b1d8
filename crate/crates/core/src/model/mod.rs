//! Sentence scoring network: graph attention over a [`PairGraph`], a
//! cross/deep interaction per sentence, a linear sentence head and a
//! logistic attribute head, with exact reverse-mode gradients.

mod checkpoint;
mod dcn;
mod gat;
mod params;

use ndarray::{s, Array1, Array2, Axis};

pub use checkpoint::{load_archive, save_archive, NamedTensor, TensorArchive};
pub use dcn::{dcn_forward, interaction_backward, interaction_forward, InteractionTrace};
pub use gat::{
    gat_layer, gat_layer_backward, stable_softmax, AttentionSettings, HeadTrace, LayerTrace,
};
pub use params::{
    sigmoid, Activation, DcnParams, GatHead, GatLayer, Interaction, ModelConfig, ModelParams,
    ModelShape,
};

use crate::error::{Error, Result};
use crate::features::FeatureStore;
use crate::graph::{PairGraph, ITEM_NODE, USER_NODE};

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub user: usize,
    pub item: usize,
    pub neighborhoods: Vec<Vec<usize>>,
    pub sentence_inputs: Array2<f64>,
    pub initial: Array2<f64>,
    pub layers: Vec<LayerTrace>,
    pub node_states: Array2<f64>,
    pub interaction: InteractionTrace,
    pub scores: Array1<f64>,
    pub attribute_logits: Array1<f64>,
    pub attribute_probs: Array1<f64>,
    n_attributes: usize,
}

impl ForwardTrace {
    pub fn n_sentences(&self) -> usize {
        self.scores.len()
    }

    pub fn n_attributes(&self) -> usize {
        self.n_attributes
    }

    /// Attention weights of layer `l`, head `h`, aligned with `neighborhoods`.
    pub fn attention(&self, l: usize, h: usize) -> &[Vec<f64>] {
        &self.layers[l].heads[h].alpha
    }
}

fn settings(config: &ModelConfig) -> AttentionSettings {
    AttentionSettings {
        leaky_slope: config.leaky_slope,
        activation: config.gat_activation,
    }
}

/// Without attention: each node becomes the plain mean of its neighborhood,
/// so a sentence still sees its attributes and the user and item theirs.
fn mean_pool(states: &Array2<f64>, neighborhoods: &[Vec<usize>]) -> Array2<f64> {
    let mut out = Array2::zeros(states.dim());
    for (i, hood) in neighborhoods.iter().enumerate() {
        let w = 1.0 / hood.len() as f64;
        for &j in hood {
            out.row_mut(i).scaled_add(w, &states.row(j));
        }
    }
    out
}

fn mean_pool_backward(d_out: &Array2<f64>, neighborhoods: &[Vec<usize>]) -> Array2<f64> {
    let mut d_in = Array2::zeros(d_out.dim());
    for (i, hood) in neighborhoods.iter().enumerate() {
        let w = 1.0 / hood.len() as f64;
        for &j in hood {
            d_in.row_mut(j).scaled_add(w, &d_out.row(i));
        }
    }
    d_in
}

/// Scores every sentence node and predicts every attribute node.
pub fn forward(
    graph: &PairGraph,
    features: &FeatureStore,
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<ForwardTrace> {
    let d = config.user_dim;
    let user = graph.user.index();
    let item = graph.item.index();
    if user >= params.user_emb.nrows() || item >= params.item_emb.nrows() {
        return Err(Error::Shape(format!(
            "user {user} / item {item} outside embedding tables ({} / {})",
            params.user_emb.nrows(),
            params.item_emb.nrows()
        )));
    }
    if features.attribute_dim() != d {
        return Err(Error::Shape(format!(
            "attribute vectors have dimension {}, node size is {d}",
            features.attribute_dim()
        )));
    }
    if features.sentence_dim() != params.sentence_proj_w.ncols() {
        return Err(Error::Shape(format!(
            "sentence vectors have dimension {}, projection expects {}",
            features.sentence_dim(),
            params.sentence_proj_w.ncols()
        )));
    }
    let m = graph.attributes.len();
    let n_sent = graph.sentences.len();
    let n = graph.node_count();

    let mut sentence_inputs = Array2::zeros((n_sent, features.sentence_dim()));
    for (r, s) in graph.sentences.iter().enumerate() {
        sentence_inputs
            .row_mut(r)
            .assign(&features.sentences.row(s.index()));
    }
    let mut initial = Array2::zeros((n, d));
    initial
        .row_mut(USER_NODE)
        .assign(&params.user_emb.row(user));
    initial
        .row_mut(ITEM_NODE)
        .assign(&params.item_emb.row(item));
    for (f, a) in graph.attributes.iter().enumerate() {
        initial
            .row_mut(graph.attribute_node(f))
            .assign(&features.attributes.row(a.index()));
    }
    let projected = sentence_inputs.dot(&params.sentence_proj_w.t()) + &params.sentence_proj_b;
    initial.slice_mut(s![2 + m.., ..]).assign(&projected);

    let neighborhoods = graph.neighborhoods()?;
    let mut layers = Vec::with_capacity(params.gat.len());
    let mut states = initial.clone();
    if config.use_gat {
        for layer in &params.gat {
            let trace = gat_layer(&states, &neighborhoods, layer, settings(config))?;
            states = trace.output.clone();
            layers.push(trace);
        }
    } else {
        states = mean_pool(&initial, &neighborhoods);
    }
    let width = states.ncols();

    let mut x0 = Array2::zeros((n_sent, 3 * width));
    for r in 0..n_sent {
        let mut row = x0.row_mut(r);
        row.slice_mut(s![..width]).assign(&states.row(USER_NODE));
        row.slice_mut(s![width..2 * width])
            .assign(&states.row(ITEM_NODE));
        row.slice_mut(s![2 * width..])
            .assign(&states.row(graph.sentence_node(r)));
    }
    let interaction = interaction_forward(&x0, &params.interaction)?;
    if interaction.output.ncols() != params.sentence_head.len() {
        return Err(Error::Shape(format!(
            "sentence head has {} weights for {} features",
            params.sentence_head.len(),
            interaction.output.ncols()
        )));
    }
    if params.attribute_head.len() != width {
        return Err(Error::Shape(format!(
            "attribute head has {} weights for node size {width}",
            params.attribute_head.len()
        )));
    }
    let scores = interaction.output.dot(&params.sentence_head);
    let attribute_logits = states.slice(s![2..2 + m, ..]).dot(&params.attribute_head);
    let attribute_probs = attribute_logits.mapv(sigmoid);

    Ok(ForwardTrace {
        user,
        item,
        neighborhoods,
        sentence_inputs,
        initial,
        layers,
        node_states: states,
        interaction,
        scores,
        attribute_logits,
        attribute_probs,
        n_attributes: m,
    })
}

/// Gradients of a downstream loss with respect to every parameter, given
/// the loss gradient on sentence scores and attribute probabilities.
pub fn backward(
    trace: &ForwardTrace,
    params: &ModelParams,
    config: &ModelConfig,
    d_scores: &Array1<f64>,
    d_probs: &Array1<f64>,
) -> Result<ModelParams> {
    let n_sent = trace.n_sentences();
    let m = trace.n_attributes;
    if d_scores.len() != n_sent || d_probs.len() != m {
        return Err(Error::Shape(format!(
            "upstream gradients ({}, {}) do not match trace ({n_sent}, {m})",
            d_scores.len(),
            d_probs.len()
        )));
    }
    if params.sentence_head.len() != trace.interaction.output.ncols()
        || params.gat.len() != trace.layers.len()
        || params.attribute_head.len() != trace.node_states.ncols()
    {
        return Err(Error::Shape(
            "trace was produced with different parameters".into(),
        ));
    }
    let mut grad = params.zeros_like();
    let width = trace.node_states.ncols();
    let n = trace.node_states.nrows();

    grad.sentence_head = trace.interaction.output.t().dot(d_scores);
    let d_repr = d_scores
        .view()
        .insert_axis(Axis(1))
        .dot(&params.sentence_head.view().insert_axis(Axis(0)));
    let d_x0 = interaction_backward(
        &trace.interaction,
        &params.interaction,
        &d_repr,
        &mut grad.interaction,
    );

    let mut d_states = Array2::<f64>::zeros((n, width));
    for r in 0..n_sent {
        let row = d_x0.row(r);
        d_states
            .row_mut(USER_NODE)
            .scaled_add(1.0, &row.slice(s![..width]));
        d_states
            .row_mut(ITEM_NODE)
            .scaled_add(1.0, &row.slice(s![width..2 * width]));
        d_states
            .row_mut(2 + m + r)
            .scaled_add(1.0, &row.slice(s![2 * width..]));
    }

    let d_logits: Array1<f64> = d_probs
        .iter()
        .zip(&trace.attribute_probs)
        .map(|(g, p)| g * p * (1.0 - p))
        .collect();
    let attr_states = trace.node_states.slice(s![2..2 + m, ..]);
    grad.attribute_head = attr_states.t().dot(&d_logits);
    for (f, &dl) in d_logits.iter().enumerate() {
        d_states
            .row_mut(2 + f)
            .scaled_add(dl, &params.attribute_head);
    }

    if config.use_gat {
        for (l, layer_trace) in trace.layers.iter().enumerate().rev() {
            d_states = gat_layer_backward(
                layer_trace,
                &trace.neighborhoods,
                &params.gat[l],
                settings(config),
                &d_states,
                &mut grad.gat[l],
            );
        }
    } else {
        d_states = mean_pool_backward(&d_states, &trace.neighborhoods);
    }

    grad.user_emb
        .row_mut(trace.user)
        .scaled_add(1.0, &d_states.row(USER_NODE));
    grad.item_emb
        .row_mut(trace.item)
        .scaled_add(1.0, &d_states.row(ITEM_NODE));
    let d_proj = d_states.slice(s![2 + m.., ..]);
    grad.sentence_proj_w = d_proj.t().dot(&trace.sentence_inputs);
    grad.sentence_proj_b = d_proj.sum_axis(Axis(0));
    Ok(grad)
}
