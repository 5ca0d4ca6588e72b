//! Fully connected classifier. Weights are stored `(in, out)` so that row `j`
//! of a weight matrix holds the outgoing weights of input unit `j`.

use super::dropout::RowScales;
use super::params::ModelParams;

pub(crate) struct MlpTrace {
    /// Unscaled input of every layer.
    pub acts: Vec<Vec<f64>>,
    /// Row-scaled input of every layer.
    pub inputs: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
}

fn layers(params: &ModelParams) -> usize {
    params.tensors().len() / 2
}

pub(crate) fn forward(params: &ModelParams, x: &[f64], scales: &RowScales) -> MlpTrace {
    let n_layers = layers(params);
    let t = params.tensors();
    let mut inputs = Vec::with_capacity(n_layers);
    let mut acts = Vec::with_capacity(n_layers);
    let mut act = x.to_vec();
    for l in 0..n_layers {
        let w = &t[2 * l];
        let b = &t[2 * l + 1];
        let scaled: Vec<f64> = act
            .iter()
            .zip(scales.at(l, 0))
            .map(|(a, s)| a * s)
            .collect();
        let mut z = b.data().to_vec();
        for (j, &a) in scaled.iter().enumerate() {
            if a != 0.0 {
                for (zk, wjk) in z.iter_mut().zip(w.row(j)) {
                    *zk += a * wjk;
                }
            }
        }
        inputs.push(scaled);
        acts.push(act);
        act = if l + 1 < n_layers {
            z.into_iter().map(f64::tanh).collect()
        } else {
            z
        };
    }
    MlpTrace {
        acts,
        inputs,
        logits: act,
    }
}

/// Accumulates `d loss / d params` into `grads` given `d loss / d logits`.
pub(crate) fn backward(
    params: &ModelParams,
    trace: &MlpTrace,
    scales: &RowScales,
    dlogits: &[f64],
    grads: &mut ModelParams,
) {
    let n_layers = layers(params);
    let mut dz = dlogits.to_vec();
    for l in (0..n_layers).rev() {
        let input = &trace.inputs[l];
        {
            let g = grads.tensors_mut();
            for (gb, d) in g[2 * l + 1].data_mut().iter_mut().zip(&dz) {
                *gb += d;
            }
            let gw = &mut g[2 * l];
            for (j, &a) in input.iter().enumerate() {
                if a != 0.0 {
                    for (gjk, d) in gw.row_mut(j).iter_mut().zip(&dz) {
                        *gjk += a * d;
                    }
                }
            }
        }
        if l == 0 {
            break;
        }
        let w = &params.tensors()[2 * l];
        let s = scales.at(l, 0);
        let act = &trace.acts[l];
        // input[j] = tanh(z_prev[j]) * s[j]
        dz = (0..input.len())
            .map(|j| {
                let da: f64 = w.row(j).iter().zip(&dz).map(|(wjk, d)| wjk * d).sum();
                da * s[j] * (1.0 - act[j] * act[j])
            })
            .collect();
    }
}
