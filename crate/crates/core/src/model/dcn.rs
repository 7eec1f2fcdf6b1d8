//! Cross and deep feature interaction over `x0 = [user || item || sentence]`.
//!
//! Cross layer: `x_{l+1} = x0 (x_l . w_l) + b_l + x_l`.
//! Deep layer:  `y_{l+1} = relu(W_l y_l + b_l)`, with `y_0 = x0`.
//! Output: `[x_Lc || y_Ld]`. Rows are independent sentences.

use ndarray::{concatenate, s, Array1, Array2, Axis, Zip};

use super::params::{DcnParams, Interaction};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionTrace {
    pub x0: Array2<f64>,
    /// Cross states `x_0 ..= x_Lc`.
    pub cross: Vec<Array2<f64>>,
    /// `x_l . w_l` per layer, one entry per row.
    pub cross_dot: Vec<Array1<f64>>,
    /// Deep pre-activations per layer.
    pub deep_pre: Vec<Array2<f64>>,
    /// Deep activations `y_0 ..= y_Ld`.
    pub deep: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

impl Interaction {
    pub fn input_dim(&self) -> usize {
        match self {
            Interaction::Dcn(p) => p
                .cross_w
                .first()
                .map(Array1::len)
                .or_else(|| p.deep_w.first().map(Array2::ncols))
                .unwrap_or(0),
            Interaction::Linear { w, .. } => w.ncols(),
        }
    }
}

/// Forward pass for a batch of rows.
pub fn interaction_forward(x0: &Array2<f64>, params: &Interaction) -> Result<InteractionTrace> {
    let expected = params.input_dim();
    if expected != 0 && x0.ncols() != expected {
        return Err(Error::Shape(format!(
            "interaction input has {} columns, expected {expected}",
            x0.ncols()
        )));
    }
    match params {
        Interaction::Dcn(p) => Ok(dcn_batch(x0, p)),
        Interaction::Linear { w, b } => {
            let output = x0.dot(&w.t()) + b;
            Ok(InteractionTrace {
                x0: x0.clone(),
                cross: Vec::new(),
                cross_dot: Vec::new(),
                deep_pre: Vec::new(),
                deep: Vec::new(),
                output,
            })
        }
    }
}

fn dcn_batch(x0: &Array2<f64>, p: &DcnParams) -> InteractionTrace {
    let mut cross = vec![x0.clone()];
    let mut cross_dot = Vec::new();
    for (w, b) in p.cross_w.iter().zip(&p.cross_b) {
        let xl = cross.last().unwrap();
        let c = xl.dot(w);
        let mut next = xl + b;
        Zip::from(next.rows_mut())
            .and(x0.rows())
            .and(&c)
            .for_each(|mut row, x0_row, &ci| row.scaled_add(ci, &x0_row));
        cross_dot.push(c);
        cross.push(next);
    }
    let mut deep = vec![x0.clone()];
    let mut deep_pre = Vec::new();
    for (w, b) in p.deep_w.iter().zip(&p.deep_b) {
        let pre = deep.last().unwrap().dot(&w.t()) + b;
        deep.push(pre.mapv(|v| v.max(0.0)));
        deep_pre.push(pre);
    }
    let cross_out = cross.last().unwrap();
    let output = if p.deep_w.is_empty() {
        cross_out.clone()
    } else {
        concatenate(Axis(1), &[cross_out.view(), deep.last().unwrap().view()])
            .expect("row counts match")
    };
    InteractionTrace {
        x0: x0.clone(),
        cross,
        cross_dot,
        deep_pre,
        deep,
        output,
    }
}

/// Single-vector form.
pub fn dcn_forward(x0: &Array1<f64>, params: &DcnParams) -> Result<Array1<f64>> {
    let batch = x0.view().insert_axis(Axis(0)).to_owned();
    let trace = interaction_forward(&batch, &Interaction::Dcn(params.clone()))?;
    Ok(trace.output.row(0).to_owned())
}

/// Returns the gradient on `x0`; parameter gradients are accumulated into `grad`.
pub fn interaction_backward(
    trace: &InteractionTrace,
    params: &Interaction,
    d_out: &Array2<f64>,
    grad: &mut Interaction,
) -> Array2<f64> {
    match (params, grad) {
        (Interaction::Linear { w, .. }, Interaction::Linear { w: gw, b: gb }) => {
            *gw += &d_out.t().dot(&trace.x0);
            *gb += &d_out.sum_axis(Axis(0));
            d_out.dot(w)
        }
        (Interaction::Dcn(p), Interaction::Dcn(g)) => dcn_backward(trace, p, d_out, g),
        _ => panic!("gradient structure does not match parameters"),
    }
}

fn dcn_backward(
    trace: &InteractionTrace,
    p: &DcnParams,
    d_out: &Array2<f64>,
    g: &mut DcnParams,
) -> Array2<f64> {
    let x0 = &trace.x0;
    let x_dim = x0.ncols();
    let mut d_x0 = Array2::zeros(x0.raw_dim());

    // deep path
    if !p.deep_w.is_empty() {
        let mut d_y = d_out.slice(s![.., x_dim..]).to_owned();
        for l in (0..p.deep_w.len()).rev() {
            let mut d_pre = d_y;
            Zip::from(&mut d_pre)
                .and(&trace.deep_pre[l])
                .for_each(|gv, &pre| {
                    if pre <= 0.0 {
                        *gv = 0.0
                    }
                });
            g.deep_w[l] += &d_pre.t().dot(&trace.deep[l]);
            g.deep_b[l] += &d_pre.sum_axis(Axis(0));
            d_y = d_pre.dot(&p.deep_w[l]);
        }
        d_x0 += &d_y;
    }

    // cross path
    let mut d_x = d_out.slice(s![.., ..x_dim]).to_owned();
    for l in (0..p.cross_w.len()).rev() {
        let c = &trace.cross_dot[l];
        // x_{l+1} = x0 * c + b + x_l,  c = x_l . w
        let d_c: Array1<f64> = (&d_x * x0).sum_axis(Axis(1));
        Zip::from(d_x0.rows_mut())
            .and(d_x.rows())
            .and(c)
            .for_each(|mut row, g_row, &ci| row.scaled_add(ci, &g_row));
        g.cross_w[l] += &trace.cross[l].t().dot(&d_c);
        g.cross_b[l] += &d_x.sum_axis(Axis(0));
        let w = &p.cross_w[l];
        Zip::from(d_x.rows_mut())
            .and(&d_c)
            .for_each(|mut row, &dc| row.scaled_add(dc, w));
    }
    d_x0 + d_x
}
