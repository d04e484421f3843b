//! Central finite-difference gradient verification.

use super::graph::{Graph, Var};
use super::optim::{ParamId, ParamStore};

/// Compare analytic gradients against central differences.
///
/// `build` must construct the same scalar loss for the current store
/// contents every time it is called. At most `max_coords` coordinates per
/// parameter are probed (stride-sampled), keeping the cost bounded on
/// larger fragments. Returns the maximum relative error seen.
pub fn grad_check(
    store: &mut ParamStore,
    ids: &[ParamId],
    build: &dyn Fn(&mut Graph, &ParamStore) -> Var,
    eps: f64,
    max_coords: usize,
) -> f64 {
    let mut graph = Graph::new();
    let loss = build(&mut graph, store);
    let grads = graph.backward(loss);
    let analytic: std::collections::HashMap<usize, Vec<f64>> = ids
        .iter()
        .filter_map(|&id| {
            let var = graph.var_of_param(id)?;
            let g = grads.get(var)?;
            Some((id.index(), g.data.clone()))
        })
        .collect();

    let mut worst = 0.0f64;
    for &id in ids {
        let len = store.get(id).tensor.len();
        let zero = vec![0.0; len];
        let a = analytic.get(&id.index()).unwrap_or(&zero);
        let stride = len.div_ceil(max_coords.max(1)).max(1);
        for i in (0..len).step_by(stride) {
            let original = store.get(id).tensor.data[i];

            store.get_mut(id).tensor.data[i] = original + eps;
            let mut g_plus = Graph::new();
            let l_plus = build(&mut g_plus, store);
            let f_plus = g_plus.value(l_plus).item();

            store.get_mut(id).tensor.data[i] = original - eps;
            let mut g_minus = Graph::new();
            let l_minus = build(&mut g_minus, store);
            let f_minus = g_minus.value(l_minus).item();

            store.get_mut(id).tensor.data[i] = original;

            let numeric = (f_plus - f_minus) / (2.0 * eps);
            worst = worst.max(relative_error(a[i], numeric));
        }
    }
    worst
}

/// Relative error with a noise floor: gradients that are tiny on both sides
/// are indistinguishable from finite-difference noise and count as exact.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-7 {
        0.0
    } else {
        (analytic - numeric).abs() / scale.max(1e-7)
    }
}
