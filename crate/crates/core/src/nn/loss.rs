//! Cross-entropy and temperature-scaled KL losses with exact gradients.

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::nn::{Logits, Mlp, ParamVector};

fn check_temperature(temperature: f64) -> Result<()> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::invalid(format!(
            "temperature: must be a positive real, got {temperature}"
        )));
    }
    Ok(())
}

/// Row-wise max-subtracted log-softmax of `logits / temperature`.
pub fn log_softmax(logits: &ArrayView2<f64>, temperature: f64) -> Result<Array2<f64>> {
    check_temperature(temperature)?;
    let mut out = logits.mapv(|v| v / temperature);
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln() + max;
        row.mapv_inplace(|v| v - log_sum);
    }
    Ok(out)
}

/// Row-wise softmax of `logits / temperature`; rows sum to 1.
pub fn softmax(logits: &ArrayView2<f64>, temperature: f64) -> Result<Array2<f64>> {
    let mut out = log_softmax(logits, temperature)?;
    out.mapv_inplace(f64::exp);
    Ok(out)
}

fn check_labels(labels: &[usize], batch: usize, classes: usize) -> Result<()> {
    if labels.len() != batch {
        return Err(Error::dim(format!(
            "labels: {} labels for a batch of {batch}",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::OutOfRange(format!(
            "label {bad} with only {classes} classes"
        )));
    }
    Ok(())
}

/// Mean cross-entropy over the batch and its exact parameter gradient.
pub fn ce_loss_grad(
    model: &Mlp,
    inputs: &ArrayView2<f64>,
    labels: &[usize],
) -> Result<(f64, ParamVector)> {
    let cache = model.forward_cached(inputs)?;
    let logits = cache.activations.last().unwrap();
    let batch = logits.nrows();
    check_labels(labels, batch, model.shape().output_dim())?;

    let log_p = log_softmax(&logits.view(), 1.0)?;
    let loss = -labels
        .iter()
        .enumerate()
        .map(|(i, &y)| log_p[[i, y]])
        .sum::<f64>()
        / batch as f64;

    // dLoss/dZ = (softmax(Z) - onehot(y)) / batch
    let mut d_logits = log_p.mapv(f64::exp);
    for (i, &y) in labels.iter().enumerate() {
        d_logits[[i, y]] -= 1.0;
    }
    d_logits.mapv_inplace(|v| v / batch as f64);

    Ok((loss, model.backprop(&cache, d_logits)))
}

/// Distillation loss `T^2 * mean_i KL(softmax(Zt_i/T) || softmax(Zs_i/T))`
/// and its exact gradient w.r.t. the student parameters. Teacher logits are
/// treated as constants.
pub fn kl_loss_grad(
    model: &Mlp,
    inputs: &ArrayView2<f64>,
    teacher_logits: &Logits,
    temperature: f64,
) -> Result<(f64, ParamVector)> {
    let cache = model.forward_cached(inputs)?;
    let logits = cache.activations.last().unwrap();
    if teacher_logits.dim() != logits.dim() {
        return Err(Error::dim(format!(
            "teacher logits {:?} vs student logits {:?}",
            teacher_logits.dim(),
            logits.dim()
        )));
    }
    let batch = logits.nrows() as f64;
    let t = temperature;

    let log_q = log_softmax(&teacher_logits.view(), t)?;
    let log_p = log_softmax(&logits.view(), t)?;
    let q = log_q.mapv(f64::exp);
    let p = log_p.mapv(f64::exp);

    // sum_i sum_c q * (log q - log p); q -> 0 terms vanish with it.
    let loss = q
        .iter()
        .zip(log_q.iter())
        .zip(log_p.iter())
        .map(|((&qi, &lqi), &lpi)| if qi > 0.0 { qi * (lqi - lpi) } else { 0.0 })
        .sum::<f64>()
        * t
        * t
        / batch;

    // dLoss/dZs = T^2 * (p - q) / (T * batch) = T * (p - q) / batch
    let mut d_logits = p;
    d_logits.zip_mut_with(&q, |pi, &qi| *pi = (*pi - qi) * t / batch);

    Ok((loss.max(0.0), model.backprop(&cache, d_logits)))
}

/// Mean cross-entropy of `logits` against `labels`, without gradients.
pub fn ce_loss_from_logits(logits: &Logits, labels: &[usize]) -> Result<f64> {
    check_labels(labels, logits.nrows(), logits.ncols())?;
    let log_p = log_softmax(&logits.view(), 1.0)?;
    Ok(-labels
        .iter()
        .enumerate()
        .map(|(i, &y)| log_p[[i, y]])
        .sum::<f64>()
        / logits.nrows() as f64)
}

/// Mean `KL(softmax(Zt/T) || softmax(Zs/T))` over rows, scaled by `T^2`.
pub fn kl_from_logits(teacher: &Logits, student: &Logits, temperature: f64) -> Result<f64> {
    if teacher.dim() != student.dim() {
        return Err(Error::dim(format!(
            "teacher {:?} vs student {:?}",
            teacher.dim(),
            student.dim()
        )));
    }
    let log_q = log_softmax(&teacher.view(), temperature)?;
    let log_p = log_softmax(&student.view(), temperature)?;
    let loss = log_q
        .iter()
        .zip(log_p.iter())
        .map(|(&lq, &lp)| {
            let q = lq.exp();
            if q > 0.0 {
                q * (lq - lp)
            } else {
                0.0
            }
        })
        .sum::<f64>()
        * temperature
        * temperature
        / teacher.nrows() as f64;
    Ok(loss.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::MlpShape;
    use crate::oracle::finite_diff_grad;
    use ndarray::array;

    fn shape(sizes: &[usize]) -> MlpShape {
        MlpShape::new(sizes.to_vec()).unwrap()
    }

    #[test]
    fn softmax_uniform_rows() {
        let z = array![[0.0, 0.0, 0.0]];
        let p = softmax(&z.view(), 1.0).unwrap();
        for &v in p.iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_shift_invariant() {
        let a = array![[1.0, 2.0, 3.0]];
        let b = array![[101.0, 102.0, 103.0]];
        let pa = softmax(&a.view(), 1.0).unwrap();
        let pb = softmax(&b.view(), 1.0).unwrap();
        for (x, y) in pa.iter().zip(pb.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_temperature_three_matches_scalar_arithmetic() {
        // Direct exp/sum evaluation of softmax((1,2,3)/3).
        let e: Vec<f64> = [1.0, 2.0, 3.0].iter().map(|v| (v / 3.0).exp()).collect();
        let s: f64 = e.iter().sum();
        let p = softmax(&array![[1.0, 2.0, 3.0]].view(), 3.0).unwrap();
        for (got, want) in p.iter().zip(e.iter().map(|v| v / s)) {
            assert!((got - want).abs() < 1e-14);
        }
    }

    #[test]
    fn softmax_rejects_bad_temperature() {
        let z = array![[0.0, 1.0]];
        assert!(softmax(&z.view(), 0.0).is_err());
        assert!(softmax(&z.view(), -1.0).is_err());
    }

    #[test]
    fn ce_uniform_logits_is_ln_classes() {
        let m = Mlp::zeros(shape(&[2, 3]));
        let x = array![[0.5, -0.5], [1.0, 2.0]];
        let (loss, _) = ce_loss_grad(&m, &x.view(), &[0, 2]).unwrap();
        assert!((loss - 3.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn ce_rejects_out_of_range_label() {
        let m = Mlp::zeros(shape(&[2, 3]));
        let x = array![[0.5, -0.5]];
        assert!(matches!(
            ce_loss_grad(&m, &x.view(), &[3]),
            Err(Error::OutOfRange(_))
        ));
    }

    #[test]
    fn ce_grad_matches_finite_differences() {
        let m = Mlp::init(shape(&[2, 4, 3]), 21);
        let x = array![[0.3, -0.8], [1.1, 0.2], [-0.5, 0.6]];
        let labels = [0usize, 2, 1];
        let (_, grad) = ce_loss_grad(&m, &x.view(), &labels).unwrap();
        let numeric = finite_diff_grad(
            |p| {
                let model = Mlp::unflatten(m.shape(), p).unwrap();
                ce_loss_grad(&model, &x.view(), &labels).unwrap().0
            },
            &m.flatten(),
            1e-5,
        );
        for (a, n) in grad.iter().zip(numeric.iter()) {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
            assert!(rel <= 1e-5, "analytic {a} vs numeric {n}");
        }
    }

    #[test]
    fn ce_duplicating_batch_rows_changes_nothing() {
        let m = Mlp::init(shape(&[2, 4, 3]), 4);
        let x = array![[0.3, -0.8], [1.1, 0.2]];
        let xx = array![[0.3, -0.8], [1.1, 0.2], [0.3, -0.8], [1.1, 0.2]];
        let (l1, g1) = ce_loss_grad(&m, &x.view(), &[0, 2]).unwrap();
        let (l2, g2) = ce_loss_grad(&m, &xx.view(), &[0, 2, 0, 2]).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for (a, b) in g1.iter().zip(g2.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn kl_self_teacher_is_zero() {
        let m = Mlp::init(shape(&[2, 4, 3]), 5);
        let x = array![[0.3, -0.8], [1.1, 0.2]];
        let teacher = m.forward(&x.view()).unwrap();
        let (loss, grad) = kl_loss_grad(&m, &x.view(), &teacher, 3.0).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g.abs() < 1e-15));
    }

    #[test]
    fn kl_positive_when_distributions_differ() {
        let m = Mlp::init(shape(&[2, 4, 3]), 5);
        let x = array![[0.3, -0.8]];
        let teacher = array![[2.0, -1.0, 0.5]];
        let (loss, _) = kl_loss_grad(&m, &x.view(), &teacher, 1.0).unwrap();
        assert!(loss > 0.0);
    }

    #[test]
    fn kl_grad_matches_finite_differences() {
        for &t in &[1.0, 3.0] {
            let m = Mlp::init(shape(&[2, 4, 3]), 33);
            let x = array![[0.3, -0.8], [1.1, 0.2]];
            let teacher = array![[1.0, 0.2, -0.7], [-0.3, 0.9, 0.1]];
            let (_, grad) = kl_loss_grad(&m, &x.view(), &teacher, t).unwrap();
            let numeric = finite_diff_grad(
                |p| {
                    let model = Mlp::unflatten(m.shape(), p).unwrap();
                    kl_loss_grad(&model, &x.view(), &teacher, t).unwrap().0
                },
                &m.flatten(),
                1e-5,
            );
            for (a, n) in grad.iter().zip(numeric.iter()) {
                let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
                assert!(rel <= 1e-5, "T={t}: analytic {a} vs numeric {n}");
            }
        }
    }

    #[test]
    fn kl_rejects_shape_mismatch() {
        let m = Mlp::zeros(shape(&[2, 3]));
        let x = array![[0.5, -0.5]];
        let teacher = array![[0.0, 0.0]];
        assert!(kl_loss_grad(&m, &x.view(), &teacher, 1.0).is_err());
    }
}
