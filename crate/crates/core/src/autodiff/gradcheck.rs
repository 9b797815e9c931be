use super::graph::{Graph, ParamId, ParamStore, Var};
use crate::error::Result;

/// Outcome of comparing tape gradients against central differences.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst component.
    pub worst: Option<(String, usize)>,
    pub components: usize,
}

/// Relative discrepancy between an analytic and a numeric derivative.
///
/// The denominator is floored at `floor` so components whose true value sits
/// below the finite-difference rounding noise are compared absolutely.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff == 0.0 {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs()).max(floor)
}

/// Checks `d f / d params` from the tape against `(f(p + h) - f(p - h)) / 2h`
/// for every scalar of every parameter in `store`.
///
/// `build` must record a scalar loss on the supplied graph and be a
/// deterministic function of the store. The floor for [`relative_error`] is
/// `1e-8 * max(1, |f|)`, the rounding scale of a central difference at
/// `step = 1e-5`.
pub fn grad_check<F>(store: &ParamStore, step: f64, build: F) -> Result<GradCheck>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let eval = |s: &ParamStore| -> Result<f64> {
        let mut g = Graph::new();
        let root = build(&mut g, s)?;
        g.value(root).item()
    };
    let mut g = Graph::new();
    let root = build(&mut g, store)?;
    let f0 = g.value(root).item()?;
    let grads = g.backward(root, store)?;
    let floor = 1e-8 * f0.abs().max(1.0);

    let mut probe = store.clone();
    let mut worst = None;
    let mut max_rel: f64 = 0.0;
    let mut components = 0;
    for p in 0..store.len() {
        let id = ParamId(p);
        for j in 0..store.get(id).len() {
            let orig = store.get(id).data()[j];
            probe.get_mut(id).data_mut()[j] = orig + step;
            let fp = eval(&probe)?;
            probe.get_mut(id).data_mut()[j] = orig - step;
            let fm = eval(&probe)?;
            probe.get_mut(id).data_mut()[j] = orig;
            let numeric = (fp - fm) / (2.0 * step);
            let analytic = grads.get(id).data()[j];
            let rel = relative_error(analytic, numeric, floor);
            components += 1;
            if worst.is_none() || rel > max_rel {
                max_rel = max_rel.max(rel);
                worst = Some((store.name(id).to_string(), j));
            }
        }
    }
    Ok(GradCheck {
        max_rel_error: max_rel,
        worst,
        components,
    })
}
