//! Central finite-difference oracle for the autodiff engine.

use crate::error::{Error, Result};

use super::graph::{Graph, Var};
use super::params::ParamStore;
use super::tensor::Tensor;

/// Relative errors are measured against `max(|analytic|, |numeric|, FLOOR)`.
pub const RELATIVE_FLOOR: f64 = 1e-4;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Builds `f` on gradient-tracked leaves holding `inputs`, backpropagates,
/// and compares every input gradient entry with a central difference of
/// step `h`. Returns the largest relative error.
pub fn check_gradients<F>(inputs: &[Tensor], h: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let loss = f(&mut g, &vars)?;
    g.backward(loss)?;
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.leaf(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        Ok(g.value(out).item())
    };
    let mut worst = 0.0f64;
    let mut values = inputs.to_vec();
    for (k, v) in vars.iter().enumerate() {
        let analytic = g
            .grad(*v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(inputs[k].rows(), inputs[k].cols()));
        for i in 0..inputs[k].len() {
            let orig = values[k].data()[i];
            values[k].data_mut()[i] = orig + h;
            let up = eval(&values)?;
            values[k].data_mut()[i] = orig - h;
            let down = eval(&values)?;
            values[k].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            if !numeric.is_finite() {
                return Err(Error::NonFinite(format!("finite difference for input {k} entry {i}")));
            }
            worst = worst.max(relative_error(analytic.data()[i], numeric));
        }
    }
    Ok(worst)
}

/// Same oracle for modules whose parameters live in a [`ParamStore`]:
/// every scalar of every parameter is perturbed in turn.
pub fn check_param_gradients<F>(store: &ParamStore, h: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut g = Graph::new();
    let loss = f(&mut g, store)?;
    g.backward(loss)?;
    let grads = g.param_grads();
    let eval = |s: &ParamStore| -> Result<f64> {
        let mut g = Graph::inference();
        let out = f(&mut g, s)?;
        Ok(g.value(out).item())
    };
    let mut worst = 0.0f64;
    let mut work = store.clone();
    for id in store.ids() {
        let analytic = grads.iter().find(|(i, _)| *i == id).map(|(_, t)| t.clone());
        for i in 0..store.get(id).len() {
            let orig = store.get(id).data()[i];
            work.get_mut(id).data_mut()[i] = orig + h;
            let up = eval(&work)?;
            work.get_mut(id).data_mut()[i] = orig - h;
            let down = eval(&work)?;
            work.get_mut(id).data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.as_ref().map_or(0.0, |t| t.data()[i]);
            worst = worst.max(relative_error(a, numeric));
        }
    }
    Ok(worst)
}
