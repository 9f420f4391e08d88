//! Independent verification oracles used by the test suites.
//!
//! Nothing here shares a code path with the implementations it checks:
//! [`qp_project_oracle`] enumerates KKT cases of the projection QP with its
//! own scalar loops, and [`finite_diff_grad`] differentiates a black-box
//! loss numerically.

use crate::error::{Error, Result};
use crate::nn::ParamVector;

/// Solution of `min 1/2 ||g_new - g||^2  s.t.  <g, g_glob> >= 0`.
#[derive(Clone, Debug)]
pub struct QpSolution {
    pub g_proj: ParamVector,
    /// KKT multiplier of the single inequality constraint.
    pub lambda: f64,
    /// Whether the constraint is active (binding) at the optimum.
    pub active: bool,
}

fn raw_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

/// Solves the projection QP by enumerating both KKT cases (λ = 0 and the
/// active constraint) and verifying the KKT conditions of the returned case.
///
/// The oracle solves the exact ε = 0 problem; callers comparing it to an
/// ε-stabilized closed form must absorb the ε perturbation themselves.
pub fn qp_project_oracle(g_new: &ParamVector, g_glob: &ParamVector) -> Result<QpSolution> {
    g_new.check_same_len(g_glob, "qp_project_oracle")?;
    let gn = g_new.as_slice();
    let gg = g_glob.as_slice();
    let norm_sq = raw_dot(gg, gg);
    if norm_sq == 0.0 {
        return Err(Error::invalid("g_glob: zero vector has no projection QP"));
    }
    let inner = raw_dot(gn, gg);

    // Case 1 (λ = 0): g_new itself is feasible.
    if inner >= 0.0 {
        return Ok(QpSolution {
            g_proj: g_new.clone(),
            lambda: 0.0,
            active: false,
        });
    }

    // Case 2 (active constraint): λ = -<g_new, g_glob> / ||g_glob||^2 > 0,
    // g_proj = g_new + λ g_glob from stationarity.
    let lambda = -inner / norm_sq;
    let mut g_proj = vec![0.0; gn.len()];
    for i in 0..gn.len() {
        g_proj[i] = gn[i] + lambda * gg[i];
    }

    // KKT verification on the solved case, scaled to the problem size so the
    // checks are meaningful at any vector magnitude.
    let scale = (raw_dot(gn, gn).sqrt() * norm_sq.sqrt()).max(1.0);
    debug_assert!(lambda >= 0.0);
    let slackness = lambda * raw_dot(&g_proj, gg);
    debug_assert!(
        slackness.abs() <= 1e-10 * scale.max(lambda * scale),
        "complementary slackness violated: {slackness}"
    );
    let feasibility = raw_dot(&g_proj, gg);
    debug_assert!(
        feasibility >= -1e-10 * scale,
        "primal feasibility violated: {feasibility}"
    );

    Ok(QpSolution {
        g_proj: ParamVector::new(g_proj),
        lambda,
        active: true,
    })
}

/// Central finite differences of a black-box loss:
/// `(f(x + h e_i) - f(x - h e_i)) / 2h` per coordinate.
pub fn finite_diff_grad<F>(loss: F, params: &ParamVector, h: f64) -> ParamVector
where
    F: Fn(&ParamVector) -> f64,
{
    assert!(h > 0.0, "finite_diff_grad: h must be positive");
    let mut grad = Vec::with_capacity(params.len());
    let mut probe = params.clone();
    for i in 0..params.len() {
        let orig = probe[i];
        probe.as_mut_slice()[i] = orig + h;
        let plus = loss(&probe);
        probe.as_mut_slice()[i] = orig - h;
        let minus = loss(&probe);
        probe.as_mut_slice()[i] = orig;
        grad.push((plus - minus) / (2.0 * h));
    }
    ParamVector::new(grad)
}
