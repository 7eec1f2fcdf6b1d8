//! Multi-head graph attention over a fixed neighborhood structure.
//!
//! Per head, with `q_i = W_q h_i` and `k_j = W_k h_j`:
//!
//! ```text
//! z_ij  = LeakyReLU(a . [q_i || k_j])
//! alpha = softmax_j z_ij            over j in N(i)
//! h'_i  = act(sum_j alpha_ij h_j)
//! ```
//!
//! Head outputs are concatenated, so a layer with `H` heads maps node size
//! `D` to `H * D`.

use ndarray::{s, Array1, Array2, ArrayView1, Axis};

use super::params::{Activation, GatHead, GatLayer};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionSettings {
    pub leaky_slope: f64,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadTrace {
    pub query: Array2<f64>,
    pub key: Array2<f64>,
    /// Per node, logits before LeakyReLU, aligned with its neighborhood.
    pub pre_logits: Vec<Vec<f64>>,
    /// Per node, attention weights aligned with its neighborhood.
    pub alpha: Vec<Vec<f64>>,
    /// Aggregated states before the activation.
    pub aggregated: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub input: Array2<f64>,
    pub heads: Vec<HeadTrace>,
    pub output: Array2<f64>,
}

fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

/// Softmax with the row maximum subtracted.
pub fn stable_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn split_attention(head: &GatHead) -> (ArrayView1<'_, f64>, ArrayView1<'_, f64>) {
    let hidden = head.query.nrows();
    (
        head.attention.slice(s![..hidden]),
        head.attention.slice(s![hidden..]),
    )
}

fn check_head(head: &GatHead, in_dim: usize) -> Result<()> {
    let hidden = head.query.nrows();
    if head.query.ncols() != in_dim
        || head.key.dim() != (hidden, in_dim)
        || head.attention.len() != 2 * hidden
    {
        return Err(Error::Shape(format!(
            "attention head expects node size {}, got {in_dim}",
            head.query.ncols()
        )));
    }
    Ok(())
}

/// One graph-attention layer. `hoods[i]` is the attention neighborhood of node `i`.
pub fn gat_layer(
    h: &Array2<f64>,
    hoods: &[Vec<usize>],
    layer: &GatLayer,
    settings: AttentionSettings,
) -> Result<LayerTrace> {
    let (n, d) = h.dim();
    if hoods.len() != n {
        return Err(Error::Shape(format!(
            "{} neighborhoods for {n} nodes",
            hoods.len()
        )));
    }
    if let Some(i) = hoods.iter().position(Vec::is_empty) {
        return Err(Error::Graph(format!(
            "node {i} has an empty attention neighborhood"
        )));
    }
    let mut output = Array2::zeros((n, d * layer.heads.len()));
    let mut heads = Vec::with_capacity(layer.heads.len());
    for (hi, head) in layer.heads.iter().enumerate() {
        check_head(head, d)?;
        let (a_q, a_k) = split_attention(head);
        let query = h.dot(&head.query.t());
        let key = h.dot(&head.key.t());
        let src = query.dot(&a_q);
        let dst = key.dot(&a_k);
        let mut pre_logits = Vec::with_capacity(n);
        let mut alpha = Vec::with_capacity(n);
        let mut aggregated = Array2::zeros((n, d));
        for (i, hood) in hoods.iter().enumerate() {
            let pre: Vec<f64> = hood.iter().map(|&j| src[i] + dst[j]).collect();
            let z: Vec<f64> = pre
                .iter()
                .map(|&e| leaky(e, settings.leaky_slope))
                .collect();
            let weights = stable_softmax(&z);
            let mut row = aggregated.row_mut(i);
            for (&j, &w) in hood.iter().zip(&weights) {
                row.scaled_add(w, &h.row(j));
            }
            pre_logits.push(pre);
            alpha.push(weights);
        }
        output
            .slice_mut(s![.., hi * d..(hi + 1) * d])
            .assign(&aggregated.mapv(|x| settings.activation.apply(x)));
        heads.push(HeadTrace {
            query,
            key,
            pre_logits,
            alpha,
            aggregated,
        });
    }
    Ok(LayerTrace {
        input: h.clone(),
        heads,
        output,
    })
}

/// Backpropagates `d_out` through one layer, accumulating parameter
/// gradients into `grad` and returning the gradient on the layer input.
pub fn gat_layer_backward(
    trace: &LayerTrace,
    hoods: &[Vec<usize>],
    layer: &GatLayer,
    settings: AttentionSettings,
    d_out: &Array2<f64>,
    grad: &mut GatLayer,
) -> Array2<f64> {
    let h = &trace.input;
    let (n, d) = h.dim();
    let mut d_h = Array2::zeros((n, d));
    for (hi, (head, ht)) in layer.heads.iter().zip(&trace.heads).enumerate() {
        let (a_q, a_k) = split_attention(head);
        let out = trace.output.slice(s![.., hi * d..(hi + 1) * d]);
        let mut d_agg = d_out.slice(s![.., hi * d..(hi + 1) * d]).to_owned();
        ndarray::Zip::from(&mut d_agg)
            .and(&ht.aggregated)
            .and(&out)
            .for_each(|g, &x, &y| *g *= settings.activation.derivative(x, y));

        let mut d_src = Array1::<f64>::zeros(n);
        let mut d_dst = Array1::<f64>::zeros(n);
        for (i, hood) in hoods.iter().enumerate() {
            let g_i = d_agg.row(i);
            let weights = &ht.alpha[i];
            let d_alpha: Vec<f64> = hood.iter().map(|&j| g_i.dot(&h.row(j))).collect();
            let mean: f64 = weights.iter().zip(&d_alpha).map(|(a, g)| a * g).sum();
            for (k, &j) in hood.iter().enumerate() {
                d_h.row_mut(j).scaled_add(weights[k], &g_i);
                let d_z = weights[k] * (d_alpha[k] - mean);
                let slope = if ht.pre_logits[i][k] > 0.0 {
                    1.0
                } else {
                    settings.leaky_slope
                };
                let d_e = d_z * slope;
                d_src[i] += d_e;
                d_dst[j] += d_e;
            }
        }

        // src = (H W_q^T) a_q, dst = (H W_k^T) a_k
        let g = &mut grad.heads[hi];
        let hidden = head.query.nrows();
        g.attention
            .slice_mut(s![..hidden])
            .scaled_add(1.0, &ht.query.t().dot(&d_src));
        g.attention
            .slice_mut(s![hidden..])
            .scaled_add(1.0, &ht.key.t().dot(&d_dst));
        let h_src = h.t().dot(&d_src);
        let h_dst = h.t().dot(&d_dst);
        g.query += &outer(&a_q, &h_src);
        g.key += &outer(&a_k, &h_dst);
        let q_back = head.query.t().dot(&a_q);
        let k_back = head.key.t().dot(&a_k);
        for i in 0..n {
            let mut row = d_h.row_mut(i);
            row.scaled_add(d_src[i], &q_back);
            row.scaled_add(d_dst[i], &k_back);
        }
    }
    d_h
}

fn outer(a: &ArrayView1<'_, f64>, b: &Array1<f64>) -> Array2<f64> {
    let a2 = a.view().insert_axis(Axis(1));
    let b2 = b.view().insert_axis(Axis(0));
    a2.dot(&b2)
}
