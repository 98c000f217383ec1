//! Finite-difference gradient auditing.
//!
//! Compares analytic gradients against central differences computed in f64.
//! The loss closure is called once with `accumulate = true` to populate
//! analytic gradients, then repeatedly with `accumulate = false` while each
//! parameter element is perturbed by `+-h`.

use super::store::ParamStore;

/// Worst relative error observed for one parameter.
#[derive(Debug, Clone)]
pub struct GradCheckEntry {
    pub name: String,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.max_rel_err <= self.tolerance)
    }

    pub fn worst(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.max_rel_err)
            .fold(0.0, f64::max)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            let status = if e.max_rel_err <= self.tolerance {
                "ok"
            } else {
                "FAIL"
            };
            s.push_str(&format!(
                "{status:4}  {:<40} max rel err {:.3e}\n",
                e.name, e.max_rel_err
            ));
        }
        s.push_str(&format!(
            "worst {:.3e} (tolerance {:.1e})\n",
            self.worst(),
            self.tolerance
        ));
        s
    }
}

/// Relative error between analytic and numeric derivatives; zero when both
/// are negligibly small.
fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-10 {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// Audits every trainable parameter of `store` against central differences.
///
/// `f(store, accumulate)` must return the scalar loss; when `accumulate` is
/// true it must also add analytic gradients into the store. The closure is
/// expected to be deterministic given the parameter values.
pub fn check_gradients<F>(
    store: &mut ParamStore<f64>,
    mut f: F,
    h: f64,
    tolerance: f64,
) -> GradCheckReport
where
    F: FnMut(&mut ParamStore<f64>, bool) -> f64,
{
    store.zero_grads();
    let _ = f(store, true);
    let analytic: Vec<(String, Option<Vec<f64>>)> = store
        .iter()
        .map(|p| {
            (
                p.name.clone(),
                if p.trainable { p.grad.clone() } else { None },
            )
        })
        .collect();

    let mut entries = Vec::new();
    for (idx, (name, grads)) in analytic.iter().enumerate() {
        let Some(grads) = grads else { continue };
        let mut max_rel = 0.0f64;
        for i in 0..grads.len() {
            let id = super::store::ParamId(idx);
            let orig = store.get(id).data[i];
            store.get_mut(id).data[i] = orig + h;
            let plus = f(store, false);
            store.get_mut(id).data[i] = orig - h;
            let minus = f(store, false);
            store.get_mut(id).data[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            max_rel = max_rel.max(relative_error(grads[i], numeric));
        }
        entries.push(GradCheckEntry {
            name: name.clone(),
            max_rel_err: max_rel,
        });
    }
    GradCheckReport { entries, tolerance }
}
