//! Token embeddings, the character-level numeral encoder, and the gated
//! token/character input embedding used for numerals.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::Rng;

use crate::compute::nn::INIT_SCALE;
use crate::compute::{Graph, Lstm, NodeId, ParamId, ParamSet};
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};

/// Character inventory of the numeral encoders: ten digits, the decimal
/// point, end-of-sequence and start-of-sequence.
pub mod chars {
    pub const POINT: usize = 10;
    pub const EOS: usize = 11;
    pub const SOS: usize = 12;
    pub const COUNT: usize = 13;

    pub fn index(c: char) -> Option<usize> {
        match c {
            '0'..='9' => Some(c as usize - '0' as usize),
            '.' => Some(POINT),
            _ => None,
        }
    }

    pub fn symbol(i: usize) -> &'static str {
        const NAMES: [&str; COUNT] = [
            "0", "1", "2", "3", "4", "5", "6", "7", "8", "9", ".", "<eos>", "<sos>",
        ];
        NAMES[i]
    }
}

pub fn char_indices(surface: &str) -> Result<Vec<usize>> {
    surface
        .chars()
        .map(|c| chars::index(c).ok_or(Error::UnknownCharacter(c)))
        .collect()
}

/// A `|V| × D` table; row `s` is the embedding of vocabulary entry `s`.
#[derive(Debug, Clone, Copy)]
pub struct EmbeddingTable {
    pub table: ParamId,
    pub size: usize,
    pub dim: usize,
}

impl EmbeddingTable {
    pub fn new<R: Rng + ?Sized>(params: &mut ParamSet, name: &str, size: usize, dim: usize, rng: &mut R) -> Self {
        let table = params.add_uniform(name, &[size, dim], INIT_SCALE, rng);
        Self { table, size, dim }
    }

    pub fn from_params(params: &ParamSet, name: &str) -> Result<Self> {
        let table = params.id(name)?;
        let p = params.get(table);
        Ok(Self {
            table,
            size: p.rows(),
            dim: p.cols(),
        })
    }

    pub fn embed(&self, g: &mut Graph<'_>, index: usize) -> Result<NodeId> {
        if index >= self.size {
            return Err(Error::IndexOutOfRange {
                index,
                size: self.size,
            });
        }
        Ok(g.row(self.table, index))
    }

    pub fn vector<'a>(&self, params: &'a ParamSet, index: usize) -> &'a [f64] {
        params.get(self.table).row(index)
    }
}

/// Character-level recurrent encoder: the final hidden state after reading
/// the surface characters from a zero state.
#[derive(Debug, Clone, Copy)]
pub struct CharEncoder {
    pub chars: ParamId,
    pub lstm: Lstm,
}

impl CharEncoder {
    pub fn new<R: Rng + ?Sized>(params: &mut ParamSet, prefix: &str, dim: usize, rng: &mut R) -> Self {
        let chars = params.add_uniform(&format!("{prefix}.chars"), &[chars::COUNT, dim], INIT_SCALE, rng);
        let lstm = Lstm::new(params, &format!("{prefix}.lstm"), dim, dim, rng);
        Self { chars, lstm }
    }

    pub fn from_params(params: &ParamSet, prefix: &str) -> Result<Self> {
        Ok(Self {
            chars: params.id(&format!("{prefix}.chars"))?,
            lstm: Lstm::from_params(params, &format!("{prefix}.lstm"))?,
        })
    }

    pub fn dim(&self) -> usize {
        self.lstm.hidden_dim
    }

    pub fn encode(&self, g: &mut Graph<'_>, surface: &str) -> Result<NodeId> {
        let idx = char_indices(surface)?;
        let mut state = self.lstm.zero_state(g);
        for i in idx {
            let x = g.row(self.chars, i);
            state = self.lstm.step(g, x, state)?;
        }
        Ok(state.h)
    }
}

/// `e = g ⊙ token + (1 − g) ⊙ chars` with `g = σ(W token + b)`.
#[derive(Debug, Clone, Copy)]
pub struct GatedEmbedding {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl GatedEmbedding {
    pub fn new<R: Rng + ?Sized>(params: &mut ParamSet, prefix: &str, dim: usize, rng: &mut R) -> Self {
        Self {
            weight: params.add_uniform(&format!("{prefix}.weight"), &[dim, dim], INIT_SCALE, rng),
            bias: params.add_uniform(&format!("{prefix}.bias"), &[dim], INIT_SCALE, rng),
        }
    }

    pub fn from_params(params: &ParamSet, prefix: &str) -> Result<Self> {
        Ok(Self {
            weight: params.id(&format!("{prefix}.weight"))?,
            bias: params.id(&format!("{prefix}.bias"))?,
        })
    }

    pub fn combine(&self, g: &mut Graph<'_>, token: NodeId, chars: NodeId) -> NodeId {
        let wt = g.matvec(self.weight, token);
        let b = g.param(self.bias);
        let z = g.add(wt, b);
        let gate = g.sigmoid(z);
        let diff = g.sub(token, chars);
        let gated = g.mul(gate, diff);
        g.add(chars, gated)
    }
}

/// Vectors read from a whitespace-separated text embedding file.
#[derive(Debug, Clone, Default)]
pub struct PretrainedEmbeddings {
    pub dim: usize,
    pub vectors: HashMap<String, Vec<f64>>,
}

impl PretrainedEmbeddings {
    pub fn parse(text: &str) -> Result<Self> {
        let mut out = Self::default();
        for (n, line) in text.lines().enumerate() {
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else { continue };
            let vec: Vec<f64> = fields
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format {
                    what: "embedding file",
                    detail: format!("line {}: {e}", n + 1),
                })?;
            if out.dim == 0 {
                out.dim = vec.len();
            }
            if vec.len() != out.dim || vec.is_empty() {
                return Err(Error::Format {
                    what: "embedding file",
                    detail: format!("line {}: expected {} values, found {}", n + 1, out.dim, vec.len()),
                });
            }
            out.vectors.insert(token.to_string(), vec);
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Overwrites the rows of `table` whose vocabulary entry appears in the
    /// file. Returns the number of rows initialised.
    pub fn apply(&self, params: &mut ParamSet, table: &EmbeddingTable, vocab: &Vocabulary) -> Result<usize> {
        if self.vectors.is_empty() {
            return Ok(0);
        }
        if self.dim != table.dim {
            return Err(Error::DimensionMismatch {
                expected: table.dim,
                actual: self.dim,
            });
        }
        let mut n = 0;
        let data = &mut params.get_mut(table.table).data;
        for i in 0..table.size.min(vocab.len()) {
            if let Some(v) = self.vectors.get(vocab.surface(i)) {
                data[i * table.dim..(i + 1) * table.dim].copy_from_slice(v);
                n += 1;
            }
        }
        Ok(n)
    }
}
