//! Named parameter tensors and the sources that create or look them up.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use crate::autograd::Matrix;
use crate::error::{Error, Result};
use crate::rng::trunc_normal;

static NEXT_UID: AtomicU64 = AtomicU64::new(1);

fn next_uid() -> u64 {
    NEXT_UID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered collection of named matrices.
///
/// Each store carries a process-unique id so a graph can bind parameters from
/// several stores at once. A frozen store's leaves never require gradients.
#[derive(Debug)]
pub struct ParamStore {
    uid: u64,
    trainable: bool,
    names: Vec<String>,
    values: Vec<Matrix>,
    index: HashMap<String, usize>,
}

impl Clone for ParamStore {
    fn clone(&self) -> Self {
        Self {
            uid: next_uid(),
            trainable: self.trainable,
            names: self.names.clone(),
            values: self.values.clone(),
            index: self.index.clone(),
        }
    }
}

impl ParamStore {
    pub fn new(trainable: bool) -> Self {
        Self {
            uid: next_uid(),
            trainable,
            names: Vec::new(),
            values: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn uid(&self) -> u64 {
        self.uid
    }

    pub fn is_trainable(&self) -> bool {
        self.trainable
    }

    pub fn set_trainable(&mut self, trainable: bool) {
        self.trainable = trainable;
    }

    pub fn add(&mut self, name: &str, value: Matrix) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(Error::Config(format!("duplicate parameter name {name}")));
        }
        let id = self.values.len();
        self.names.push(name.to_string());
        self.values.push(value);
        self.index.insert(name.to_string(), id);
        Ok(ParamId(id))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.values[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Matrix> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.names.iter().map(String::as_str).zip(self.values.iter())
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|m| m.len()).sum()
    }

    /// Zero matrices shaped like every parameter, for gradient accumulation.
    pub fn zeros_like(&self) -> Vec<Matrix> {
        self.values.iter().map(|m| Matrix::zeros(m.dim())).collect()
    }

    /// Rounds every value to the nearest `f32`, the checkpoint precision.
    pub fn round_to_f32(&mut self) {
        for m in &mut self.values {
            m.mapv_inplace(|v| v as f32 as f64);
        }
    }

    /// Bitwise equality of names, shapes and values.
    pub fn bitwise_eq(&self, other: &ParamStore) -> bool {
        self.names == other.names
            && self.values.len() == other.values.len()
            && self.values.iter().zip(&other.values).all(|(a, b)| {
                a.dim() == b.dim() && a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|m| m.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    TruncNormal(f64),
}

/// Supplies parameters while a module is being assembled.
pub trait ParamSource {
    fn param(&mut self, name: &str, shape: (usize, usize), init: Init) -> Result<ParamId>;
}

/// Creates freshly initialized parameters in a store.
pub struct Initializer<'a, R: Rng> {
    store: &'a mut ParamStore,
    rng: &'a mut R,
}

impl<'a, R: Rng> Initializer<'a, R> {
    pub fn new(store: &'a mut ParamStore, rng: &'a mut R) -> Self {
        Self { store, rng }
    }
}

impl<R: Rng> ParamSource for Initializer<'_, R> {
    fn param(&mut self, name: &str, shape: (usize, usize), init: Init) -> Result<ParamId> {
        let value = match init {
            Init::Zeros => Matrix::zeros(shape),
            Init::Ones => Matrix::ones(shape),
            Init::TruncNormal(std) => Matrix::from_shape_fn(shape, |_| trunc_normal(self.rng, std)),
        };
        self.store.add(name, value)
    }
}

/// Resolves parameters of an existing store by name, checking shapes.
pub struct Lookup<'a> {
    store: &'a ParamStore,
}

impl<'a> Lookup<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Self { store }
    }
}

impl ParamSource for Lookup<'_> {
    fn param(&mut self, name: &str, shape: (usize, usize), _init: Init) -> Result<ParamId> {
        let id = self
            .store
            .id(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
        let found = self.store.get(id).dim();
        if found != shape {
            return Err(Error::Shape(format!(
                "tensor {name}: expected {shape:?}, found {found:?}"
            )));
        }
        Ok(id)
    }
}

/// Counts scalars without allocating; used for full-scale configurations.
#[derive(Debug, Default)]
pub struct Counter {
    pub scalars: usize,
    next: usize,
}

impl ParamSource for Counter {
    fn param(&mut self, _name: &str, shape: (usize, usize), _init: Init) -> Result<ParamId> {
        self.scalars += shape.0 * shape.1;
        self.next += 1;
        Ok(ParamId(self.next - 1))
    }
}
