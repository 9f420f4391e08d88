//! SGD with momentum, plus small parameter-space helpers.

use crate::error::{Error, Result};
use crate::nn::ParamVector;

/// Velocity and hyperparameters for SGD with momentum.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub velocity: ParamVector,
    pub lr: f64,
    pub momentum: f64,
}

impl OptimizerState {
    pub fn new(param_len: usize, lr: f64, momentum: f64) -> Result<Self> {
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(Error::invalid(format!("lr: must be positive, got {lr}")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::invalid(format!(
                "momentum: must be in [0, 1), got {momentum}"
            )));
        }
        Ok(OptimizerState {
            velocity: ParamVector::zeros(param_len),
            lr,
            momentum,
        })
    }
}

/// One momentum-SGD step: `v' = momentum*v + grad; theta' = theta - lr*v'`.
pub fn sgd_step(
    params: &ParamVector,
    grad: &ParamVector,
    state: OptimizerState,
) -> Result<(ParamVector, OptimizerState)> {
    params.check_same_len(grad, "sgd_step params/grad")?;
    params.check_same_len(&state.velocity, "sgd_step params/velocity")?;
    let velocity = state.velocity.scale(state.momentum).add_scaled(1.0, grad);
    let params = params.add_scaled(-state.lr, &velocity);
    Ok((
        params,
        OptimizerState {
            velocity,
            ..state
        },
    ))
}

/// Squared Euclidean distance `sum_i (a_i - b_i)^2`.
pub fn l2_sq_dist(a: &ParamVector, b: &ParamVector) -> Result<f64> {
    a.check_same_len(b, "l2_sq_dist")?;
    Ok(a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(vals: &[f64]) -> ParamVector {
        ParamVector::new(vals.to_vec())
    }

    #[test]
    fn plain_sgd_without_momentum() {
        let state = OptimizerState::new(2, 1.0, 0.0).unwrap();
        let (p, _) = sgd_step(&pv(&[1.0, 2.0]), &pv(&[0.5, -0.5]), state).unwrap();
        assert_eq!(p.as_slice(), &[0.5, 2.5]);
    }

    #[test]
    fn zero_grad_zero_velocity_is_identity() {
        let state = OptimizerState::new(2, 0.1, 0.9).unwrap();
        let (p, s) = sgd_step(&pv(&[1.0, -3.0]), &pv(&[0.0, 0.0]), state).unwrap();
        assert_eq!(p.as_slice(), &[1.0, -3.0]);
        assert!(s.velocity.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_momentum_steps_match_hand_unrolled_recurrence() {
        // theta = 1.0, g = 0.5 both steps, momentum 0.9, lr 0.1:
        //   v1 = 0.5,        theta1 = 1.0 - 0.05        = 0.95
        //   v2 = 0.45 + 0.5, theta2 = 0.95 - 0.1 * 0.95 = 0.855
        let g = pv(&[0.5]);
        let state = OptimizerState::new(1, 0.1, 0.9).unwrap();
        let (p1, s1) = sgd_step(&pv(&[1.0]), &g, state).unwrap();
        assert!((p1[0] - 0.95).abs() < 1e-15);
        let (p2, _) = sgd_step(&p1, &g, s1).unwrap();
        assert!((p2[0] - 0.855).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let state = OptimizerState::new(2, 0.1, 0.0).unwrap();
        assert!(sgd_step(&pv(&[1.0]), &pv(&[1.0, 2.0]), state).is_err());
    }

    #[test]
    fn invalid_hyperparameters_rejected() {
        assert!(OptimizerState::new(2, 0.0, 0.0).is_err());
        assert!(OptimizerState::new(2, 0.1, 1.0).is_err());
        assert!(OptimizerState::new(2, 0.1, -0.1).is_err());
    }

    #[test]
    fn l2_sq_dist_cases() {
        assert_eq!(l2_sq_dist(&pv(&[1.0, 2.0]), &pv(&[1.0, 2.0])).unwrap(), 0.0);
        assert_eq!(l2_sq_dist(&pv(&[1.0, 2.0]), &pv(&[0.0, 0.0])).unwrap(), 5.0);
        let a = pv(&[0.3, -1.7, 2.0]);
        let b = pv(&[-0.4, 0.0, 1.0]);
        assert_eq!(
            l2_sq_dist(&a, &b).unwrap(),
            l2_sq_dist(&b, &a).unwrap()
        );
    }
}
