//! Single-layer LSTM language model.
//!
//! Gate pre-activations are `b + x̃ W_x + h̃ W_h` with `x̃ = x ⊙ s_x(t)` and
//! `h̃ = h_{t-1} ⊙ s_h(t)`, so dropping a row of `W_x` or `W_h` removes one
//! source unit from all four gates. Gate order within the `4H` axis is
//! input, forget, candidate, output.

use super::dropout::RowScales;
use super::params::{Architecture, ModelParams};

const EMB: usize = 0;
const W_IN: usize = 1;
const W_REC: usize = 2;
const BIAS: usize = 3;

const SITE_INPUT: usize = 0;
const SITE_RECURRENT: usize = 1;

pub(crate) struct Dims {
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
    pub tied: bool,
}

pub(crate) fn dims(params: &ModelParams) -> Dims {
    match params.architecture() {
        Architecture::Lstm {
            vocab,
            embed,
            hidden,
            tied,
        } => Dims {
            vocab: *vocab,
            embed: *embed,
            hidden: *hidden,
            tied: *tied,
        },
        Architecture::Mlp { .. } => unreachable!("LSTM routine called on an MLP"),
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(crate) struct StepTrace {
    token: usize,
    x_in: Vec<f64>,
    h_in: Vec<f64>,
    /// i, f, g, o after their nonlinearities, `4H`.
    gates: Vec<f64>,
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

pub(crate) struct LstmTrace {
    pub steps: Vec<StepTrace>,
    pub logits: Vec<Vec<f64>>,
}

pub(crate) fn forward(params: &ModelParams, tokens: &[usize], scales: &RowScales) -> LstmTrace {
    let d = dims(params);
    let t = params.tensors();
    let hid = d.hidden;
    let emb = &t[EMB];
    let w_in = &t[W_IN];
    let w_rec = &t[W_REC];
    let bias = t[BIAS].data();
    let out_bias = t[t.len() - 1].data();

    let mut h = vec![0.0; hid];
    let mut c = vec![0.0; hid];
    let mut steps = Vec::with_capacity(tokens.len());
    let mut logits = Vec::with_capacity(tokens.len());
    for (step, &tok) in tokens.iter().enumerate() {
        let x_in: Vec<f64> = emb
            .row(tok)
            .iter()
            .zip(scales.at(SITE_INPUT, step))
            .map(|(x, s)| x * s)
            .collect();
        let h_in: Vec<f64> = h
            .iter()
            .zip(scales.at(SITE_RECURRENT, step))
            .map(|(x, s)| x * s)
            .collect();
        let mut z = bias.to_vec();
        for (j, &a) in x_in.iter().enumerate() {
            if a != 0.0 {
                for (zk, w) in z.iter_mut().zip(w_in.row(j)) {
                    *zk += a * w;
                }
            }
        }
        for (j, &a) in h_in.iter().enumerate() {
            if a != 0.0 {
                for (zk, w) in z.iter_mut().zip(w_rec.row(j)) {
                    *zk += a * w;
                }
            }
        }
        for (k, zk) in z.iter_mut().enumerate() {
            *zk = if (2 * hid..3 * hid).contains(&k) {
                zk.tanh()
            } else {
                sigmoid(*zk)
            };
        }
        let c_prev = c.clone();
        for k in 0..hid {
            c[k] = z[hid + k] * c_prev[k] + z[k] * z[2 * hid + k];
        }
        let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        for k in 0..hid {
            h[k] = z[3 * hid + k] * tanh_c[k];
        }
        logits.push(output_logits(params, &d, &h, out_bias));
        steps.push(StepTrace {
            token: tok,
            x_in,
            h_in,
            gates: z,
            c_prev,
            tanh_c,
            h: h.clone(),
        });
    }
    LstmTrace { steps, logits }
}

fn output_logits(params: &ModelParams, d: &Dims, h: &[f64], out_bias: &[f64]) -> Vec<f64> {
    let t = params.tensors();
    if d.tied {
        let emb = &t[EMB];
        (0..d.vocab)
            .map(|v| out_bias[v] + emb.row(v).iter().zip(h).map(|(e, x)| e * x).sum::<f64>())
            .collect()
    } else {
        let w_out = &t[4];
        let mut z = out_bias.to_vec();
        for (k, &a) in h.iter().enumerate() {
            for (zv, w) in z.iter_mut().zip(w_out.row(k)) {
                *zv += a * w;
            }
        }
        z
    }
}

/// Backpropagation through time. `dlogits[t]` is `d loss / d logits_t`
/// (`None` for steps that carry no loss).
pub(crate) fn backward(
    params: &ModelParams,
    trace: &LstmTrace,
    scales: &RowScales,
    dlogits: &[Option<Vec<f64>>],
    grads: &mut ModelParams,
) {
    let d = dims(params);
    let hid = d.hidden;
    let t = params.tensors();
    let n_tensors = t.len();
    let mut dh_next = vec![0.0; hid];
    let mut dc_next = vec![0.0; hid];

    for step in (0..trace.steps.len()).rev() {
        let st = &trace.steps[step];
        let g = grads.tensors_mut();
        let mut dh = dh_next.clone();

        if let Some(dl) = &dlogits[step] {
            for (gb, x) in g[n_tensors - 1].data_mut().iter_mut().zip(dl) {
                *gb += x;
            }
            if d.tied {
                let emb = &t[EMB];
                for (v, &dv) in dl.iter().enumerate() {
                    for (ge, hk) in g[EMB].row_mut(v).iter_mut().zip(&st.h) {
                        *ge += dv * hk;
                    }
                    for (dhk, e) in dh.iter_mut().zip(emb.row(v)) {
                        *dhk += dv * e;
                    }
                }
            } else {
                let w_out = &t[4];
                for k in 0..hid {
                    let hk = st.h[k];
                    for (gw, dv) in g[4].row_mut(k).iter_mut().zip(dl) {
                        *gw += hk * dv;
                    }
                    dh[k] += w_out.row(k).iter().zip(dl).map(|(w, dv)| w * dv).sum::<f64>();
                }
            }
        }

        let gates = &st.gates;
        let mut dz = vec![0.0; 4 * hid];
        for k in 0..hid {
            let (i, f, gg, o) = (gates[k], gates[hid + k], gates[2 * hid + k], gates[3 * hid + k]);
            let tc = st.tanh_c[k];
            let d_o = dh[k] * tc;
            let dc = dh[k] * o * (1.0 - tc * tc) + dc_next[k];
            dz[k] = dc * gg * i * (1.0 - i);
            dz[hid + k] = dc * st.c_prev[k] * f * (1.0 - f);
            dz[2 * hid + k] = dc * i * (1.0 - gg * gg);
            dz[3 * hid + k] = d_o * o * (1.0 - o);
            dc_next[k] = dc * f;
        }

        for (gb, x) in g[BIAS].data_mut().iter_mut().zip(&dz) {
            *gb += x;
        }
        for (j, &a) in st.x_in.iter().enumerate() {
            if a != 0.0 {
                for (gw, x) in g[W_IN].row_mut(j).iter_mut().zip(&dz) {
                    *gw += a * x;
                }
            }
        }
        for (j, &a) in st.h_in.iter().enumerate() {
            if a != 0.0 {
                for (gw, x) in g[W_REC].row_mut(j).iter_mut().zip(&dz) {
                    *gw += a * x;
                }
            }
        }

        let s_x = scales.at(SITE_INPUT, step);
        let ge = g[EMB].row_mut(st.token);
        for j in 0..d.embed {
            if s_x[j] != 0.0 {
                let dx: f64 = t[W_IN].row(j).iter().zip(&dz).map(|(w, x)| w * x).sum();
                ge[j] += dx * s_x[j];
            }
        }
        let s_h = scales.at(SITE_RECURRENT, step);
        for j in 0..hid {
            dh_next[j] = if s_h[j] != 0.0 {
                t[W_REC].row(j).iter().zip(&dz).map(|(w, x)| w * x).sum::<f64>() * s_h[j]
            } else {
                0.0
            };
        }
    }
}
