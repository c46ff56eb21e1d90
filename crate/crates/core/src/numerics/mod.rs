//! Dense tensors, a reverse-mode tape, trainable parameter storage and the
//! tooling around them.

pub mod graph;
pub mod gradcheck;
pub mod optim;
pub mod params;
pub mod tensor;

pub use graph::{softmax_slice, Gradients, Graph, Var};
pub use gradcheck::{grad_check, relative_error, GradCheckConfig, GradCheckReport};
pub use optim::RmsProp;
pub use params::{ParamId, ParameterStore};
pub use tensor::Tensor;

use crate::error::Result;
use crate::scalar::Scalar;

/// Default negative slope for [`Graph::leaky_relu`].
pub const LEAKY_SLOPE: f64 = 0.01;
/// Default epsilon for [`Graph::layer_norm`].
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// GRU weights for one direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GruParams {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub bias: ParamId,
    pub d_in: usize,
    pub d_hidden: usize,
}

impl GruParams {
    pub fn init<T: Scalar, R: rand::Rng>(
        store: &mut ParameterStore<T>,
        prefix: &str,
        d_in: usize,
        d_hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let w_ih = store.insert_uniform(format!("{prefix}.w_ih"), 3 * d_hidden, d_in, rng)?;
        let w_hh = store.insert_uniform(format!("{prefix}.w_hh"), 3 * d_hidden, d_hidden, rng)?;
        let bias = store.insert(format!("{prefix}.bias"), Tensor::zeros(&[3 * d_hidden]))?;
        Ok(Self {
            w_ih,
            w_hh,
            bias,
            d_in,
            d_hidden,
        })
    }

    /// Graph handles for the three tensors.
    pub fn bind<T: Scalar>(&self, graph: &mut Graph<T>, store: &ParameterStore<T>) -> GruVars {
        GruVars {
            w_ih: store.var(graph, self.w_ih),
            w_hh: store.var(graph, self.w_hh),
            bias: store.var(graph, self.bias),
        }
    }
}

/// [`GruParams`] bound to a graph.
#[derive(Debug, Clone, Copy)]
pub struct GruVars {
    pub w_ih: Var,
    pub w_hh: Var,
    pub bias: Var,
}

impl GruVars {
    pub fn step<T: Scalar>(&self, graph: &mut Graph<T>, x: Var, h: Var) -> Result<Var> {
        graph.gru_cell(x, h, self.w_ih, self.w_hh, self.bias)
    }
}
