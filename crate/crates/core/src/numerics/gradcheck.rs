use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::graph::{Graph, Var};
use crate::numerics::params::ParameterStore;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub step: f64,
    /// Check at most this many coordinates per tensor (never fewer than 32).
    pub max_coords: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            max_coords: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub coords_checked: usize,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_err).fold(0.0, f64::max)
    }
}

/// |a − b| / max(|a|, |b|, 1e-6). Below the floor a central difference is
/// dominated by round-off, so tiny coordinates are judged on absolute error.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Compares reverse-mode gradients of a scalar function of `store` against
/// central finite differences.
pub fn grad_check<T, F>(store: &ParameterStore<T>, cfg: GradCheckConfig, f: F) -> Result<GradCheckReport>
where
    T: Scalar,
    F: Fn(&mut Graph<T>, &ParameterStore<T>) -> Result<Var>,
{
    let mut graph = Graph::new();
    let out = f(&mut graph, store)?;
    let grads = graph.backward(out)?;
    let mut analytic = store.clone();
    analytic.zero_grads();
    analytic.accumulate(&graph, &grads);

    let eval = |s: &ParameterStore<T>| -> Result<f64> {
        let mut g = Graph::new();
        let v = f(&mut g, s)?;
        let y = g.scalar(v).as_f64();
        if !y.is_finite() {
            return Err(Error::Numeric("grad_check probe is non-finite".into()));
        }
        Ok(y)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let h = cfg.step;
    let mut probe = store.clone();
    let mut report = Vec::new();
    for id in store.ids() {
        let n = store.value(id).len();
        let coords: Vec<usize> = match cfg.max_coords {
            Some(cap) if n > cap.max(32) => sample(&mut rng, n, cap.max(32)).into_vec(),
            _ => (0..n).collect(),
        };
        let mut worst: f64 = 0.0;
        for &k in &coords {
            let orig = store.value(id).get(k);
            probe.value_mut(id).data_mut()[k] = T::lit(orig.as_f64() + h);
            let plus = eval(&probe)?;
            probe.value_mut(id).data_mut()[k] = T::lit(orig.as_f64() - h);
            let minus = eval(&probe)?;
            probe.value_mut(id).data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic.grad(id).get(k).as_f64();
            worst = worst.max(relative_error(a, numeric));
        }
        report.push(ParamCheck {
            name: store.name(id).to_string(),
            coords_checked: coords.len(),
            max_rel_err: worst,
        });
    }
    Ok(GradCheckReport { params: report })
}
