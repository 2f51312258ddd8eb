use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::autograd::Tensor;
use crate::Rng;

/// Named parameter tensors in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

/// Serialisable form of one tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.names.push(name.into());
        self.tensors.push(tensor);
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index(name).map(|i| &self.tensors[i])
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn item_embeddings(&self) -> &Tensor {
        self.get(super::ITEM_EMB).expect("item embedding table")
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn to_named(&self) -> Vec<NamedTensor> {
        self.names
            .iter()
            .zip(&self.tensors)
            .map(|(name, t)| NamedTensor {
                name: name.clone(),
                shape: [t.nrows(), t.ncols()],
                data: t.iter().copied().collect(),
            })
            .collect()
    }

    pub fn from_named(named: Vec<NamedTensor>) -> crate::Result<Self> {
        let mut set = Self::new();
        for nt in named {
            let t = Array2::from_shape_vec((nt.shape[0], nt.shape[1]), nt.data).map_err(|e| {
                crate::Error::Config(format!("tensor {}: {e}", nt.name))
            })?;
            set.push(nt.name, t);
        }
        Ok(set)
    }
}

impl Default for ParameterSet {
    fn default() -> Self {
        Self::new()
    }
}

/// Normal draws with standard deviation `scale`, resampled outside ±2σ.
pub(crate) fn truncated_normal(rng: &mut Rng, shape: (usize, usize), scale: f64) -> Tensor {
    Array2::from_shape_simple_fn(shape, || {
        if scale == 0.0 {
            return 0.0;
        }
        loop {
            // Box–Muller
            let u1: f64 = 1.0 - rng.gen::<f64>();
            let u2: f64 = rng.gen::<f64>();
            let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
            if z.abs() <= 2.0 {
                return z * scale;
            }
        }
    })
}
