use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::graph::{Gradients, Graph, Var};
use crate::numerics::tensor::Tensor;
use crate::scalar::Scalar;

/// Index of an entry in a [`ParameterStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Entry<T> {
    name: String,
    value: Tensor<T>,
    grad: Tensor<T>,
}

/// Named trainable tensors with paired gradient accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterStore<T> {
    entries: Vec<Entry<T>>,
    by_name: HashMap<String, ParamId>,
}

impl<T: Scalar> Default for ParameterStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParameterStore<T> {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name {name}")));
        }
        let id = ParamId(self.entries.len());
        let grad = Tensor::zeros(value.shape());
        self.by_name.insert(name.clone(), id);
        self.entries.push(Entry { name, value, grad });
        Ok(id)
    }

    /// Weight matrix [rows × fan_in] drawn from U(−1/√fan_in, 1/√fan_in).
    pub fn insert_uniform<R: Rng>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        fan_in: usize,
        rng: &mut R,
    ) -> Result<ParamId> {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let data = (0..rows * fan_in)
            .map(|_| T::lit(rng.random_range(-bound..bound)))
            .collect();
        self.insert(name, Tensor::matrix(rows, fan_in, data)?)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].grad
    }

    /// Total number of scalar weights.
    pub fn num_weights(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    /// Binds a parameter to a graph leaf.
    pub fn var(&self, graph: &mut Graph<T>, id: ParamId) -> Var {
        graph.param(id, self.value(id))
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.grad.data_mut().iter_mut().for_each(|g| *g = T::zero());
        }
    }

    /// Adds the parameter adjoints of one reverse sweep into the accumulators.
    pub fn accumulate(&mut self, graph: &Graph<T>, grads: &Gradients<T>) {
        for (id, g) in grads.params(graph) {
            let dst = self.entries[id.0].grad.data_mut();
            for (d, s) in dst.iter_mut().zip(g) {
                *d = *d + *s;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|e| e.value.all_finite())
    }

    pub fn cast<U: Scalar>(&self) -> ParameterStore<U> {
        ParameterStore {
            entries: self
                .entries
                .iter()
                .map(|e| Entry {
                    name: e.name.clone(),
                    value: e.value.cast(),
                    grad: e.grad.cast(),
                })
                .collect(),
            by_name: self.by_name.clone(),
        }
    }

    /// Writes a `.psnap` file: one line of JSON header, then the values as
    /// little-endian `f64`.
    pub fn save(&self, path: &Path, meta: serde_json::Value) -> Result<()> {
        let mut entries = BTreeMap::new();
        let mut offset = 0;
        for e in &self.entries {
            entries.insert(
                e.name.clone(),
                SnapEntry {
                    offset,
                    shape: e.value.shape().to_vec(),
                },
            );
            offset += e.value.len();
        }
        let header = SnapHeader {
            format: "psnap".into(),
            version: 1,
            order: self.entries.iter().map(|e| e.name.clone()).collect(),
            entries,
            meta,
        };
        let mut buf = serde_json::to_vec(&header).map_err(|e| Error::Data(e.to_string()))?;
        buf.push(b'\n');
        for e in &self.entries {
            for v in e.value.data() {
                buf.extend_from_slice(&v.as_f64().to_le_bytes());
            }
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    /// Reads a `.psnap` file back, returning the store and its metadata.
    pub fn load(path: &Path) -> Result<(Self, serde_json::Value)> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = BufReader::new(f);
        let mut line = Vec::new();
        reader
            .read_until(b'\n', &mut line)
            .map_err(|e| Error::io(path, e))?;
        let header: SnapHeader = serde_json::from_slice(&line)
            .map_err(|e| Error::Data(format!("bad psnap header: {e}")))?;
        let mut body = Vec::new();
        reader
            .read_to_end(&mut body)
            .map_err(|e| Error::io(path, e))?;
        if body.len() % 8 != 0 {
            return Err(Error::Data("psnap body is not a whole number of f64".into()));
        }
        let flat: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let mut store = Self::new();
        for name in &header.order {
            let e = header
                .entries
                .get(name)
                .ok_or_else(|| Error::Data(format!("psnap missing entry {name}")))?;
            let n: usize = e.shape.iter().product();
            let slice = flat
                .get(e.offset..e.offset + n)
                .ok_or_else(|| Error::Data(format!("psnap entry {name} out of range")))?;
            let t = Tensor::new(e.shape.clone(), slice.iter().map(|v| T::lit(*v)).collect())?;
            store.insert(name.clone(), t)?;
        }
        Ok((store, header.meta))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SnapEntry {
    offset: usize,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SnapHeader {
    format: String,
    version: u32,
    order: Vec<String>,
    entries: BTreeMap<String, SnapEntry>,
    #[serde(default)]
    meta: serde_json::Value,
}
