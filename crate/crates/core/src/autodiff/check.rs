//! Central finite-difference gradient checking.

use super::adam::ParamSet;
use super::tensor::Tensor;
use alloc::vec::Vec;

/// Relative error with a small-magnitude floor: below the floor the
/// comparison degrades to an absolute tolerance of floor·threshold, which
/// keeps finite-difference round-off from failing near-zero gradients.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    const FLOOR: f64 = 1e-4;
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| {
            let denom = crate::math::abs(a).max(crate::math::abs(n)).max(FLOOR);
            crate::math::abs(a - n) / denom
        })
        .fold(0.0, f64::max)
}

/// Checks an analytic gradient for one flat coordinate vector against
/// central differences of `f`; returns the max relative error.
pub fn grad_check(
    mut f: impl FnMut(&[f64]) -> f64,
    x: &[f64],
    analytic: &[f64],
    h: f64,
) -> f64 {
    assert_eq!(x.len(), analytic.len(), "gradient length mismatch");
    assert!(h > 0.0);
    let mut probe = x.to_vec();
    let mut numeric = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        numeric.push((up - down) / (2.0 * h));
    }
    max_rel_err(analytic, &numeric)
}

/// Gradient check across a whole [`ParamSet`]: perturbs every coordinate of
/// every tensor and re-evaluates `loss`. The analytic slice pairs with the
/// parameter ids (`None` for zero gradient).
pub fn grad_check_params(
    mut loss: impl FnMut(&ParamSet) -> f64,
    params: &ParamSet,
    analytic: &[Option<Tensor>],
    h: f64,
) -> f64 {
    assert_eq!(analytic.len(), params.len());
    let mut worst = 0.0f64;
    let mut probe = params.clone();
    for id in 0..params.len() {
        let zeros;
        let a = match &analytic[id] {
            Some(t) => t.data(),
            None => {
                zeros = Tensor::zeros(params.get(id).shape());
                zeros.data()
            }
        };
        let n = params.get(id).numel();
        for j in 0..n {
            let x0 = params.get(id).data()[j];
            probe.get_mut(id).data_mut()[j] = x0 + h;
            let up = loss(&probe);
            probe.get_mut(id).data_mut()[j] = x0 - h;
            let down = loss(&probe);
            probe.get_mut(id).data_mut()[j] = x0;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(max_rel_err(&a[j..=j], &[numeric]));
        }
    }
    worst
}
