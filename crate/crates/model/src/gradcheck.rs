//! Central finite-difference verification of [`Network::backward`].

use ndarray::ArrayView2;

use crate::error::Result;
use crate::network::{l1_loss, Masks, Network};

/// Gradients below this magnitude are compared absolutely, since a
/// difference quotient cannot resolve them relatively.
pub const GRAD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GradCheck {
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst: String,
}

/// Perturbs every parameter by `±step` and compares the difference quotient
/// of the L1 loss with the analytic gradient.
pub fn check_gradients(
    net: &Network,
    x_emg: Option<ArrayView2<f64>>,
    x_audio: ArrayView2<f64>,
    target: ArrayView2<f64>,
    masks: Option<&Masks>,
    step: f64,
) -> Result<GradCheck> {
    let (_, grads) = net.loss_and_grads(x_emg, x_audio, target, masks)?;
    let analytic: Vec<(String, Vec<f64>)> = grads.tensors().into_iter().map(|(n, _, d)| (n, d.to_vec())).collect();
    let loss_at = |p: &Network| -> Result<f64> {
        let f = p.forward(x_emg, x_audio, masks)?;
        l1_loss(f.z.view(), target)
    };

    let mut probe = net.clone();
    let mut out = GradCheck {
        checked: 0,
        max_rel_err: 0.0,
        worst: String::new(),
    };
    for (ti, (name, g)) in analytic.iter().enumerate() {
        for k in 0..g.len() {
            let orig = probe.tensors()[ti].2[k];
            probe.tensors_mut()[ti].1[k] = orig + step;
            let up = loss_at(&probe)?;
            probe.tensors_mut()[ti].1[k] = orig - step;
            let down = loss_at(&probe)?;
            probe.tensors_mut()[ti].1[k] = orig;
            let numeric = (up - down) / (2.0 * step);
            let rel = (numeric - g[k]).abs() / numeric.abs().max(g[k].abs()).max(GRAD_FLOOR);
            if rel > out.max_rel_err {
                out.max_rel_err = rel;
                out.worst = format!("{name}[{k}]");
            }
            out.checked += 1;
        }
    }
    Ok(out)
}
