use super::mlp::{Mlp, Tape};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Compares analytic parameter gradients of `sum(outputs)` against central
/// differences with step `h`. Returns the max over parameters of
/// `|analytic - numeric| / max(1e-12, |analytic| + |numeric|)`.
pub fn finite_diff_check(mlp: &Mlp, input: &Tensor, h: f64) -> Result<f64> {
    if h.is_nan() || h <= 0.0 {
        return Err(Error::Precondition(format!("finite-difference step must be > 0, got {h}")));
    }
    let mut tape = Tape::new();
    let out = mlp.forward_recorded(input, &mut tape)?;
    let analytic = mlp.backward(&tape, &vec![1.0; out.len()])?.params;

    let total = |net: &Mlp| -> Result<f64> { Ok(net.forward(input)?.data().iter().sum()) };
    let mut probe = mlp.clone();
    let mut worst: f64 = 0.0;
    for k in 0..mlp.param_count() {
        let orig = probe.params()[k];
        probe.params_mut()[k] = orig + h;
        let fp = total(&probe)?;
        probe.params_mut()[k] = orig - h;
        let fm = total(&probe)?;
        probe.params_mut()[k] = orig;
        let numeric = (fp - fm) / (2.0 * h);
        let a = analytic[k];
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-12);
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// Smallest |pre-activation| over all hidden units for the given input, used to keep
/// finite-difference probes away from ReLU kinks.
pub fn min_kink_margin(mlp: &Mlp, input: &Tensor) -> Result<f64> {
    let mut x = input.clone();
    let mut margin = f64::INFINITY;
    let batch = input.rows();
    for l in 0..mlp.num_layers().saturating_sub(1) {
        let (w, b) = mlp.layer(l);
        let fan_out = b.len();
        let fan_in = w.len() / fan_out;
        let mut z = vec![0.0; batch * fan_out];
        for r in 0..batch {
            let xr = &x.data()[r * fan_in..(r + 1) * fan_in];
            for j in 0..fan_out {
                let mut s = b[j];
                for (i, xi) in xr.iter().enumerate() {
                    s += xi * w[i * fan_out + j];
                }
                margin = margin.min(s.abs());
                z[r * fan_out + j] = s.max(0.0);
            }
        }
        x = Tensor::matrix(batch, fan_out, z)?;
    }
    Ok(margin)
}
