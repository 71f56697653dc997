//! Central finite-difference verification, shared by the op-level and
//! whole-model gradient tests. Run at f64; f32 finite differences are too
//! noisy to certify anything.

/// Relative error with a unit floor, the usual gradcheck metric.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

/// Central finite difference of `f` w.r.t. `params[i]`.
///
/// `f` must be a pure function of the parameter vector.
pub fn central_diff<F>(f: &mut F, params: &mut [f64], i: usize, step: f64) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    let saved = params[i];
    params[i] = saved + step;
    let plus = f(params);
    params[i] = saved - step;
    let minus = f(params);
    params[i] = saved;
    (plus - minus) / (2.0 * step)
}

/// Check every coordinate of an analytic gradient against central
/// differences. Returns the worst relative error observed.
pub fn check_gradient<F>(
    mut f: F,
    params: &mut [f64],
    analytic: &[f64],
    step: f64,
) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len());
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        let numeric = central_diff(&mut f, params, i, step);
        let err = rel_error(analytic[i], numeric);
        if err > worst {
            worst = err;
        }
    }
    worst
}
