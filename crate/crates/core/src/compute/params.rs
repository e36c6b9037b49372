//! Named parameter storage shared by every model component.
//!
//! Matrices are stored row-major. Embedding tables keep one row per
//! vocabulary entry, so "column `s` of `E`" in the usual notation is row
//! `s` here.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Param {
    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    pub fn cols(&self) -> usize {
        if self.shape.len() < 2 {
            1
        } else {
            self.shape[1..].iter().product()
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }
}

/// An ordered, name-addressable collection of parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Param>,
    by_name: BTreeMap<String, ParamId>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a parameter initialised uniformly in `[-scale, scale]`.
    pub fn add_uniform<R: Rng + ?Sized>(
        &mut self,
        name: &str,
        shape: &[usize],
        scale: f64,
        rng: &mut R,
    ) -> ParamId {
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-scale..=scale)).collect();
        self.insert(name, shape, data)
    }

    pub fn add_zeros(&mut self, name: &str, shape: &[usize]) -> ParamId {
        let n = shape.iter().product();
        self.insert(name, shape, vec![0.0; n])
    }

    pub fn insert(&mut self, name: &str, shape: &[usize], data: Vec<f64>) -> ParamId {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "shape of {name}");
        assert!(!self.by_name.contains_key(name), "duplicate parameter {name}");
        let id = ParamId(self.params.len());
        self.params.push(Param {
            name: name.to_string(),
            shape: shape.to_vec(),
            data,
        });
        self.by_name.insert(name.to_string(), id);
        id
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.by_name.get(name).copied().ok_or_else(|| Error::Format {
            what: "parameter set",
            detail: format!("missing parameter {name}"),
        })
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (ParamId, &mut Param)> {
        self.params.iter_mut().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }
}

/// Dense gradient buffers, one per parameter, allocated on first touch.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn zeros_like(params: &ParamSet) -> Self {
        Self {
            grads: vec![None; params.len()],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.grads[id.0].as_deref()
    }

    pub(crate) fn buffer(&mut self, id: ParamId, len: usize) -> &mut [f64] {
        self.grads[id.0].get_or_insert_with(|| vec![0.0; len])
    }

    /// Mutable access to an already-allocated buffer.
    pub fn get_mut(&mut self, id: ParamId) -> Option<&mut [f64]> {
        self.grads[id.0].as_deref_mut()
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.grads.iter_mut().flatten() {
            g.iter_mut().for_each(|x| *x *= factor);
        }
    }
}
