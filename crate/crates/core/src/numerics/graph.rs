//! Reverse-mode differentiation over a dynamically recorded tape.
//!
//! Every primitive appends one node holding its forward value and enough
//! cached intermediates to run its backward rule. Nodes are addressed by
//! [`Var`] handles; a graph is built fresh for each forward pass and dropped
//! after its gradients have been harvested.

use crate::error::{Error, Result};
use crate::numerics::params::ParamId;
use crate::numerics::tensor::Tensor;
use crate::scalar::Scalar;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Input,
    Param(ParamId),
    MatVec(Var, Var),
    MatTVec(Var, Var),
    MatMulNT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Sigmoid(Var),
    Tanh(Var),
    LeakyRelu(Var, T),
    Gru(Box<GruNode<T>>),
    LayerNorm(Box<LayerNormNode<T>>),
    Softmax(Var),
    LogSoftmax(Var),
    Concat(Vec<Var>),
    Gather(Var, Vec<usize>),
    Dot(Var, Var),
    Sum(Var),
    MeanRows(Var),
}

#[derive(Debug)]
struct GruNode<T> {
    x: Var,
    h: Var,
    w_ih: Var,
    w_hh: Var,
    b: Var,
    z: Vec<T>,
    r: Vec<T>,
    cand: Vec<T>,
    rh: Vec<T>,
}

#[derive(Debug)]
struct LayerNormNode<T> {
    x: Var,
    gain: Var,
    bias: Var,
    xhat: Vec<T>,
    inv_std: T,
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Recorded computation.
#[derive(Debug)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    param_vars: Vec<Option<Var>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(what: &str, a: &[usize], b: &[usize]) -> Error {
    Error::Shape(format!("{what}: {a:?} vs {b:?}"))
}

fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

/// y = W x for row-major W [m × n].
fn matvec_into<T: Scalar>(w: &[T], x: &[T], m: usize, n: usize, out: &mut [T]) {
    for (i, o) in out.iter_mut().enumerate().take(m) {
        let row = &w[i * n..(i + 1) * n];
        let mut acc = T::zero();
        for (a, b) in row.iter().zip(x) {
            acc = acc + *a * *b;
        }
        *o = acc;
    }
}

/// out += Wᵀ g for row-major W [m × n].
fn matvec_t_acc<T: Scalar>(w: &[T], g: &[T], m: usize, n: usize, out: &mut [T]) {
    for i in 0..m {
        let gi = g[i];
        if gi == T::zero() {
            continue;
        }
        let row = &w[i * n..(i + 1) * n];
        for (o, a) in out.iter_mut().zip(row) {
            *o = *o + *a * gi;
        }
    }
}

/// dW += g ⊗ x.
fn outer_acc<T: Scalar>(g: &[T], x: &[T], dw: &mut [T]) {
    let n = x.len();
    for (i, gi) in g.iter().enumerate() {
        if *gi == T::zero() {
            continue;
        }
        let row = &mut dw[i * n..(i + 1) * n];
        for (o, xv) in row.iter_mut().zip(x) {
            *o = *o + *gi * *xv;
        }
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            param_vars: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value.get(0)
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::Numeric(format!(
                "non-finite output from {}",
                op_name(&op)
            )));
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Constant leaf; receives no gradient outside the graph.
    pub fn input(&mut self, t: Tensor<T>) -> Result<Var> {
        self.push(t, Op::Input)
    }

    pub fn input_vec(&mut self, data: Vec<T>) -> Result<Var> {
        self.input(Tensor::vector(data))
    }

    /// Leaf bound to a stored parameter. Repeated calls with the same id
    /// return the same node.
    pub fn param(&mut self, id: ParamId, value: &Tensor<T>) -> Var {
        let slot = id.index();
        if slot < self.param_vars.len() {
            if let Some(v) = self.param_vars[slot] {
                return v;
            }
        } else {
            self.param_vars.resize(slot + 1, None);
        }
        self.nodes.push(Node {
            value: value.clone(),
            op: Op::Param(id),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[slot] = Some(v);
        v
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn data(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.data()
    }

    /// Matrix [m × n] times vector [n].
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let (m, n) = self.value(w).dims2()?;
        if self.value(x).len() != n {
            return Err(shape_err("matvec", self.shape(w), self.shape(x)));
        }
        let mut out = vec![T::zero(); m];
        matvec_into(self.data(w), self.data(x), m, n, &mut out);
        self.push(Tensor::vector(out), Op::MatVec(w, x))
    }

    /// Transposed matrix [m × n] times vector [m], giving [n].
    pub fn mat_t_vec(&mut self, w: Var, x: Var) -> Result<Var> {
        let (m, n) = self.value(w).dims2()?;
        if self.value(x).len() != m {
            return Err(shape_err("mat_t_vec", self.shape(w), self.shape(x)));
        }
        let mut out = vec![T::zero(); n];
        matvec_t_acc(self.data(w), self.data(x), m, n, &mut out);
        self.push(Tensor::vector(out), Op::MatTVec(w, x))
    }

    /// A [p × d] times Bᵀ for B [q × d], giving [p × q].
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (p, d) = self.value(a).dims2()?;
        let (q, d2) = self.value(b).dims2()?;
        if d != d2 {
            return Err(shape_err("matmul_nt", self.shape(a), self.shape(b)));
        }
        let (ad, bd) = (self.data(a), self.data(b));
        let mut out = vec![T::zero(); p * q];
        for i in 0..p {
            for j in 0..q {
                let mut acc = T::zero();
                for k in 0..d {
                    acc = acc + ad[i * d + k] * bd[j * d + k];
                }
                out[i * q + j] = acc;
            }
        }
        self.push(Tensor::new(vec![p, q], out)?, Op::MatMulNT(a, b))
    }

    fn zip_op(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T, op: Op<T>) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(op_name(&op), self.shape(a), self.shape(b)));
        }
        let data = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(x, y)| f(*x, *y))
            .collect();
        let t = Tensor::new(self.shape(a).to_vec(), data)?;
        self.push(t, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_op(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_op(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_op(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Result<Var> {
        let t = self.value(a).map(|v| v * c);
        self.push(t, Op::Scale(a, c))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).map(sigmoid);
        self.push(t, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).map(|v| v.tanh());
        self.push(t, Op::Tanh(a))
    }

    /// max(x, slope·x) for 0 ≤ slope ≤ 1.
    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Result<Var> {
        let t = self
            .value(a)
            .map(|v| if v >= T::zero() { v } else { slope * v });
        self.push(t, Op::LeakyRelu(a, slope))
    }

    /// One GRU step. `w_ih` is [3d × d_in], `w_hh` is [3d × d] and `b` is
    /// [3d], each stacked as (update, reset, candidate).
    pub fn gru_cell(&mut self, x: Var, h: Var, w_ih: Var, w_hh: Var, b: Var) -> Result<Var> {
        let (rows, d_in) = self.value(w_ih).dims2()?;
        let (rows2, d) = self.value(w_hh).dims2()?;
        if rows != 3 * d
            || rows2 != rows
            || self.value(b).len() != rows
            || self.value(x).len() != d_in
            || self.value(h).len() != d
        {
            return Err(Error::Shape(format!(
                "gru_cell: x {:?}, h {:?}, w_ih {:?}, w_hh {:?}, b {:?}",
                self.shape(x),
                self.shape(h),
                self.shape(w_ih),
                self.shape(w_hh),
                self.shape(b)
            )));
        }
        let (xd, hd, wi, wh, bd) = (
            self.data(x),
            self.data(h),
            self.data(w_ih),
            self.data(w_hh),
            self.data(b),
        );
        let mut ax = vec![T::zero(); 3 * d];
        matvec_into(wi, xd, 3 * d, d_in, &mut ax);
        let mut ah = vec![T::zero(); 2 * d];
        matvec_into(&wh[..2 * d * d], hd, 2 * d, d, &mut ah);
        let mut z = vec![T::zero(); d];
        let mut r = vec![T::zero(); d];
        for k in 0..d {
            z[k] = sigmoid(ax[k] + ah[k] + bd[k]);
            r[k] = sigmoid(ax[d + k] + ah[d + k] + bd[d + k]);
        }
        let rh: Vec<T> = r.iter().zip(hd).map(|(a, b)| *a * *b).collect();
        let mut u = vec![T::zero(); d];
        matvec_into(&wh[2 * d * d..], &rh, d, d, &mut u);
        let mut cand = vec![T::zero(); d];
        let mut out = vec![T::zero(); d];
        for k in 0..d {
            cand[k] = (ax[2 * d + k] + u[k] + bd[2 * d + k]).tanh();
            out[k] = (T::one() - z[k]) * hd[k] + z[k] * cand[k];
        }
        let node = GruNode {
            x,
            h,
            w_ih,
            w_hh,
            b,
            z,
            r,
            cand,
            rh,
        };
        self.push(Tensor::vector(out), Op::Gru(Box::new(node)))
    }

    /// Normalizes over all elements with population variance, then applies
    /// the affine gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: T) -> Result<Var> {
        let d = self.value(x).len();
        if d < 2 {
            return Err(Error::Shape(format!("layer_norm needs d >= 2, got {d}")));
        }
        if self.value(gain).len() != d || self.value(bias).len() != d {
            return Err(shape_err("layer_norm", self.shape(x), self.shape(gain)));
        }
        let xd = self.data(x);
        let n = T::lit(d as f64);
        let mean = xd.iter().copied().sum::<T>() / n;
        let var = xd.iter().map(|v| (*v - mean) * (*v - mean)).sum::<T>() / n;
        let inv_std = T::one() / (var + eps).sqrt();
        let xhat: Vec<T> = xd.iter().map(|v| (*v - mean) * inv_std).collect();
        let out: Vec<T> = xhat
            .iter()
            .zip(self.data(gain))
            .zip(self.data(bias))
            .map(|((h, g), b)| *h * *g + *b)
            .collect();
        let shape = self.shape(x).to_vec();
        let node = LayerNormNode {
            x,
            gain,
            bias,
            xhat,
            inv_std,
        };
        self.push(Tensor::new(shape, out)?, Op::LayerNorm(Box::new(node)))
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let t = Tensor::new(self.shape(x).to_vec(), softmax_slice(self.data(x))?)?;
        self.push(t, Op::Softmax(x))
    }

    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        let xd = self.data(x);
        if xd.is_empty() {
            return Err(Error::Shape("log_softmax of empty tensor".into()));
        }
        let m = xd.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = m + xd.iter().map(|v| (*v - m).exp()).sum::<T>().ln();
        let t = self.value(x).map(|v| v - lse);
        self.push(t, Op::LogSoftmax(x))
    }

    /// Concatenates flattened inputs into one vector.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let data: Vec<T> = parts
            .iter()
            .flat_map(|p| self.data(*p).iter().copied())
            .collect();
        self.push(Tensor::vector(data), Op::Concat(parts.to_vec()))
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        let first = rows
            .first()
            .ok_or_else(|| Error::Shape("stack_rows of zero rows".into()))?;
        let d = self.value(*first).len();
        if rows.iter().any(|r| self.value(*r).len() != d) {
            return Err(Error::Shape("stack_rows with ragged rows".into()));
        }
        let data: Vec<T> = rows
            .iter()
            .flat_map(|p| self.data(*p).iter().copied())
            .collect();
        let t = Tensor::new(vec![rows.len(), d], data)?;
        self.push(t, Op::Concat(rows.to_vec()))
    }

    /// Picks flat elements by index into a vector.
    pub fn gather(&mut self, x: Var, indices: Vec<usize>) -> Result<Var> {
        let xd = self.data(x);
        if let Some(bad) = indices.iter().find(|i| **i >= xd.len()) {
            return Err(Error::Shape(format!(
                "gather index {bad} out of range {}",
                xd.len()
            )));
        }
        let data = indices.iter().map(|i| xd[*i]).collect();
        self.push(Tensor::vector(data), Op::Gather(x, indices))
    }

    /// Row `i` of a matrix (an embedding lookup).
    pub fn row(&mut self, m: Var, i: usize) -> Result<Var> {
        let (rows, cols) = self.value(m).dims2()?;
        if i >= rows {
            return Err(Error::Shape(format!("row {i} of {rows}-row matrix")));
        }
        self.gather(m, (i * cols..(i + 1) * cols).collect())
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).len() != self.value(b).len() {
            return Err(shape_err("dot", self.shape(a), self.shape(b)));
        }
        let v = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(x, y)| *x * *y)
            .sum();
        self.push(Tensor::scalar(v), Op::Dot(a, b))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let v = self.data(a).iter().copied().sum();
        self.push(Tensor::scalar(v), Op::Sum(a))
    }

    /// Column means of a matrix [n × d], giving [d].
    pub fn mean_rows(&mut self, m: Var) -> Result<Var> {
        let (n, d) = self.value(m).dims2()?;
        let md = self.data(m);
        let inv = T::one() / T::lit(n as f64);
        let data = (0..d)
            .map(|j| (0..n).map(|i| md[i * d + j]).sum::<T>() * inv)
            .collect();
        self.push(Tensor::vector(data), Op::MeanRows(m))
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Gradients<T>> {
        if self.value(output).len() != 1 {
            return Err(Error::Shape(format!(
                "backward needs a scalar output, got {:?}",
                self.shape(output)
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(vec![T::one()]);
        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.backprop_node(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, idx: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[idx];
        let out = node.value.data();
        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::MatVec(w, x) => {
                let (m, n) = self.value(*w).dims2().expect("matrix");
                outer_acc(g, self.data(*x), acc(grads, *w, m * n));
                matvec_t_acc(self.data(*w), g, m, n, acc(grads, *x, n));
            }
            Op::MatTVec(w, x) => {
                let (m, n) = self.value(*w).dims2().expect("matrix");
                outer_acc(self.data(*x), g, acc(grads, *w, m * n));
                let gx = acc(grads, *x, m);
                let wd = self.data(*w);
                for (i, o) in gx.iter_mut().enumerate() {
                    let row = &wd[i * n..(i + 1) * n];
                    *o = *o + row.iter().zip(g).map(|(a, b)| *a * *b).sum::<T>();
                }
            }
            Op::MatMulNT(a, b) => {
                let (p, d) = self.value(*a).dims2().expect("matrix");
                let (q, _) = self.value(*b).dims2().expect("matrix");
                let (ad, bd) = (self.data(*a), self.data(*b));
                {
                    let ga = acc(grads, *a, p * d);
                    for i in 0..p {
                        for j in 0..q {
                            let gij = g[i * q + j];
                            for k in 0..d {
                                ga[i * d + k] = ga[i * d + k] + gij * bd[j * d + k];
                            }
                        }
                    }
                }
                let gb = acc(grads, *b, q * d);
                for i in 0..p {
                    for j in 0..q {
                        let gij = g[i * q + j];
                        for k in 0..d {
                            gb[j * d + k] = gb[j * d + k] + gij * ad[i * d + k];
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                add_into(acc(grads, *a, g.len()), g, T::one());
                add_into(acc(grads, *b, g.len()), g, T::one());
            }
            Op::Sub(a, b) => {
                add_into(acc(grads, *a, g.len()), g, T::one());
                add_into(acc(grads, *b, g.len()), g, -T::one());
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (self.data(*a), self.data(*b));
                {
                    let ga = acc(grads, *a, g.len());
                    for k in 0..g.len() {
                        ga[k] = ga[k] + g[k] * bd[k];
                    }
                }
                let gb = acc(grads, *b, g.len());
                for k in 0..g.len() {
                    gb[k] = gb[k] + g[k] * ad[k];
                }
            }
            Op::Scale(a, c) => add_into(acc(grads, *a, g.len()), g, *c),
            Op::Sigmoid(a) => {
                let ga = acc(grads, *a, g.len());
                for k in 0..g.len() {
                    ga[k] = ga[k] + g[k] * out[k] * (T::one() - out[k]);
                }
            }
            Op::Tanh(a) => {
                let ga = acc(grads, *a, g.len());
                for k in 0..g.len() {
                    ga[k] = ga[k] + g[k] * (T::one() - out[k] * out[k]);
                }
            }
            Op::LeakyRelu(a, slope) => {
                let ad = self.data(*a);
                let ga = acc(grads, *a, g.len());
                for k in 0..g.len() {
                    let s = if ad[k] >= T::zero() { T::one() } else { *slope };
                    ga[k] = ga[k] + g[k] * s;
                }
            }
            Op::Gru(n) => self.backprop_gru(n, g, grads),
            Op::LayerNorm(n) => {
                let d = g.len();
                let gain = self.data(n.gain);
                {
                    let gg = acc(grads, n.gain, d);
                    for k in 0..d {
                        gg[k] = gg[k] + g[k] * n.xhat[k];
                    }
                }
                add_into(acc(grads, n.bias, d), g, T::one());
                let dxhat: Vec<T> = g.iter().zip(gain).map(|(a, b)| *a * *b).collect();
                let nf = T::lit(d as f64);
                let mean_dxhat = dxhat.iter().copied().sum::<T>() / nf;
                let mean_dxhat_xhat = dxhat
                    .iter()
                    .zip(&n.xhat)
                    .map(|(a, b)| *a * *b)
                    .sum::<T>()
                    / nf;
                let gx = acc(grads, n.x, d);
                for k in 0..d {
                    gx[k] = gx[k]
                        + n.inv_std * (dxhat[k] - mean_dxhat - n.xhat[k] * mean_dxhat_xhat);
                }
            }
            Op::Softmax(a) => {
                let s: T = g.iter().zip(out).map(|(x, y)| *x * *y).sum();
                let ga = acc(grads, *a, g.len());
                for k in 0..g.len() {
                    ga[k] = ga[k] + out[k] * (g[k] - s);
                }
            }
            Op::LogSoftmax(a) => {
                let total: T = g.iter().copied().sum();
                let ga = acc(grads, *a, g.len());
                for k in 0..g.len() {
                    ga[k] = ga[k] + g[k] - out[k].exp() * total;
                }
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let n = self.value(*p).len();
                    add_into(acc(grads, *p, n), &g[off..off + n], T::one());
                    off += n;
                }
            }
            Op::Gather(a, indices) => {
                let n = self.value(*a).len();
                let ga = acc(grads, *a, n);
                for (k, i) in indices.iter().enumerate() {
                    ga[*i] = ga[*i] + g[k];
                }
            }
            Op::Dot(a, b) => {
                let (ad, bd) = (self.data(*a), self.data(*b));
                add_into(acc(grads, *a, ad.len()), bd, g[0]);
                add_into(acc(grads, *b, bd.len()), ad, g[0]);
            }
            Op::Sum(a) => {
                let n = self.value(*a).len();
                let ga = acc(grads, *a, n);
                for v in ga.iter_mut() {
                    *v = *v + g[0];
                }
            }
            Op::MeanRows(m) => {
                let (n, d) = self.value(*m).dims2().expect("matrix");
                let inv = T::one() / T::lit(n as f64);
                let gm = acc(grads, *m, n * d);
                for i in 0..n {
                    for j in 0..d {
                        gm[i * d + j] = gm[i * d + j] + g[j] * inv;
                    }
                }
            }
        }
    }

    fn backprop_gru(&self, n: &GruNode<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let d = g.len();
        let d_in = self.value(n.x).len();
        let hd = self.data(n.h);
        let wi = self.data(n.w_ih);
        let wh = self.data(n.w_hh);
        let mut da = vec![T::zero(); 3 * d];
        let mut gh = vec![T::zero(); d];
        for k in 0..d {
            let dz = g[k] * (n.cand[k] - hd[k]);
            let dcand = g[k] * n.z[k];
            gh[k] = g[k] * (T::one() - n.z[k]);
            da[k] = dz * n.z[k] * (T::one() - n.z[k]);
            da[2 * d + k] = dcand * (T::one() - n.cand[k] * n.cand[k]);
        }
        // d(r ⊙ h) = U_hᵀ da_h
        let mut drh = vec![T::zero(); d];
        matvec_t_acc(&wh[2 * d * d..], &da[2 * d..], d, d, &mut drh);
        for k in 0..d {
            let dr = drh[k] * hd[k];
            gh[k] = gh[k] + drh[k] * n.r[k];
            da[d + k] = dr * n.r[k] * (T::one() - n.r[k]);
        }
        matvec_t_acc(&wh[..2 * d * d], &da[..2 * d], 2 * d, d, &mut gh);

        outer_acc(&da, self.data(n.x), acc(grads, n.w_ih, 3 * d * d_in));
        {
            let gwh = acc(grads, n.w_hh, 3 * d * d);
            outer_acc(&da[..2 * d], hd, &mut gwh[..2 * d * d]);
            outer_acc(&da[2 * d..], &n.rh, &mut gwh[2 * d * d..]);
        }
        add_into(acc(grads, n.b, 3 * d), &da, T::one());
        matvec_t_acc(wi, &da, 3 * d, d_in, acc(grads, n.x, d_in));
        add_into(acc(grads, n.h, d), &gh, T::one());
    }
}

fn acc<T: Scalar>(grads: &mut [Option<Vec<T>>], v: Var, n: usize) -> &mut [T] {
    grads[v.0].get_or_insert_with(|| vec![T::zero(); n])
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T], c: T) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d = *d + *s * c;
    }
}

fn op_name<T>(op: &Op<T>) -> &'static str {
    match op {
        Op::Input => "input",
        Op::Param(_) => "param",
        Op::MatVec(..) => "matvec",
        Op::MatTVec(..) => "mat_t_vec",
        Op::MatMulNT(..) => "matmul_nt",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::Scale(..) => "scale",
        Op::Sigmoid(_) => "sigmoid",
        Op::Tanh(_) => "tanh",
        Op::LeakyRelu(..) => "leaky_relu",
        Op::Gru(_) => "gru_cell",
        Op::LayerNorm(_) => "layer_norm",
        Op::Softmax(_) => "softmax",
        Op::LogSoftmax(_) => "log_softmax",
        Op::Concat(_) => "concat",
        Op::Gather(..) => "gather",
        Op::Dot(..) => "dot",
        Op::Sum(_) => "sum",
        Op::MeanRows(_) => "mean_rows",
    }
}

/// Numerically stable softmax of a slice.
pub fn softmax_slice<T: Scalar>(x: &[T]) -> Result<Vec<T>> {
    if x.is_empty() {
        return Err(Error::Shape("softmax of empty tensor".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("softmax of non-finite logits".into()));
    }
    let m = x.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = x.iter().map(|v| (*v - m).exp()).collect();
    let s: T = e.iter().copied().sum();
    Ok(e.into_iter().map(|v| v / s).collect())
}

/// Per-node adjoints from one reverse sweep.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Adjoint of `v`, or `None` when the output does not depend on it.
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradients of every parameter leaf reached by the sweep.
    pub fn params<'a>(&'a self, graph: &'a Graph<T>) -> impl Iterator<Item = (ParamId, &'a [T])> + 'a {
        graph
            .nodes
            .iter()
            .enumerate()
            .filter_map(move |(i, n)| match n.op {
                Op::Param(id) => self.grads.get(i).and_then(|g| g.as_deref()).map(|g| (id, g)),
                _ => None,
            })
    }
}
