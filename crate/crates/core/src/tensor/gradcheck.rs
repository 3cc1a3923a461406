//! Central finite-difference gradient checking.
//!
//! The check only ever calls the forward pass, so it stays independent of the
//! backward rules it validates.

use super::{Graph, ParamStore, Tensor, TensorError, Var};

pub const DEFAULT_STEP: f64 = 1e-5;

/// Denominator floor for the element-wise relative error.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, RELATIVE_FLOOR)`.
    pub max_relative_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
}

/// Compares backward against central differences for every element of every
/// input. `build` receives one graph leaf per input and must return a scalar.
pub fn check<F>(inputs: &[Tensor], step: f64, build: F) -> Result<GradCheckReport, TensorError>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var, TensorError>,
{
    let eval = |ts: &[Tensor]| -> Result<f64, TensorError> {
        let mut g = Graph::new();
        let vars: Vec<Var> = ts.iter().map(|t| g.input(t)).collect();
        let out = build(&mut g, &vars)?;
        Ok(g.value(out)[0])
    };

    let leaves: Vec<Tensor> = inputs
        .iter()
        .map(|t| t.clone().with_requires_grad(true))
        .collect();
    let mut g = Graph::new();
    let vars: Vec<Var> = leaves.iter().map(|t| g.input(t)).collect();
    let loss = build(&mut g, &vars)?;
    let grads = g.backward(loss)?;

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        max_abs_error: 0.0,
        checked: 0,
    };
    let mut probe: Vec<Tensor> = inputs.to_vec();
    for (k, v) in vars.iter().enumerate() {
        let zeros = vec![0.0; inputs[k].numel()];
        let analytic = grads.get(*v).unwrap_or(&zeros).to_vec();
        for i in 0..inputs[k].numel() {
            let orig = inputs[k].data()[i];
            probe[k].data_mut()[i] = orig + step;
            let up = eval(&probe)?;
            probe[k].data_mut()[i] = orig - step;
            let down = eval(&probe)?;
            probe[k].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * step);
            let abs = (analytic[i] - numeric).abs();
            let rel = abs / analytic[i].abs().max(numeric.abs()).max(RELATIVE_FLOOR);
            report.max_abs_error = report.max_abs_error.max(abs);
            report.max_relative_error = report.max_relative_error.max(rel);
            report.checked += 1;
        }
    }
    Ok(report)
}

/// Finite-difference check of parameter gradients. At most `per_param`
/// evenly spaced entries of each parameter are probed.
pub fn check_params<F, E>(
    store: &ParamStore,
    step: f64,
    per_param: usize,
    build: F,
) -> Result<GradCheckReport, E>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var, E>,
    E: From<TensorError>,
{
    let mut g = Graph::new();
    let loss = build(&mut g, store)?;
    let grads = g.backward(loss)?;

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        max_abs_error: 0.0,
        checked: 0,
    };
    let mut probe = store.clone();
    for id in store.ids() {
        if !store.get(id).requires_grad() {
            continue;
        }
        let n = store.get(id).numel();
        let stride = n.div_ceil(per_param.max(1)).max(1);
        for i in (0..n).step_by(stride) {
            let analytic = grads.param(id).map_or(0.0, |g| g[i]);
            let orig = store.get(id).data()[i];
            let mut eval = |v: f64| -> Result<f64, E> {
                probe.get_mut(id).data_mut()[i] = v;
                let mut g = Graph::new();
                let out = build(&mut g, &probe)?;
                Ok(g.value(out)[0])
            };
            let up = eval(orig + step)?;
            let down = eval(orig - step)?;
            probe.get_mut(id).data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * step);
            let abs = (analytic - numeric).abs();
            let rel = abs / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
            report.max_abs_error = report.max_abs_error.max(abs);
            report.max_relative_error = report.max_relative_error.max(rel);
            report.checked += 1;
        }
    }
    Ok(report)
}
