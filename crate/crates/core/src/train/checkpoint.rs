//! Binary checkpoint: magic, format version, the run configuration, the
//! vocabulary, the component bank, and every parameter as
//! `name → shape → little-endian f64`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::compute::ParamSet;
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::gmm::ComponentBank;
use crate::model::{LanguageModel, ModelKind};

use super::trainer::EpochLog;

pub const MAGIC: &[u8; 8] = b"NUMLMCKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    /// Run configuration in its canonical text form.
    pub config_text: String,
    /// Digest of the training split the model was fitted on.
    pub train_digest: String,
    pub log: Vec<EpochLog>,
    pub model: LanguageModel,
}

fn put_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_u64::<LittleEndian>(s.len() as u64)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn get_str<R: Read>(r: &mut R) -> Result<String> {
    let n = r.read_u64::<LittleEndian>()? as usize;
    let mut buf = Vec::new();
    r.by_ref().take(n as u64).read_to_end(&mut buf)?;
    if buf.len() != n {
        return Err(bad("truncated string"));
    }
    String::from_utf8(buf).map_err(|_| bad("string is not UTF-8"))
}

fn bad(detail: &str) -> Error {
    Error::Format { what: "checkpoint", detail: detail.to_string() }
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
        put_str(w, &self.config_text)?;
        put_str(w, &self.train_digest)?;
        put_str(w, &serde_json::to_string(&self.log)?)?;
        let m = &self.model;
        put_str(w, m.kind.name())?;
        w.write_f64::<LittleEndian>(m.dropout)?;
        put_str(w, &m.vocab.to_file_string())?;
        put_str(w, &m.bank.as_ref().map(|b| b.to_file_string()).unwrap_or_default())?;
        w.write_u64::<LittleEndian>(m.params.len() as u64)?;
        for (_, p) in m.params.iter() {
            put_str(w, &p.name)?;
            w.write_u32::<LittleEndian>(p.shape.len() as u32)?;
            for &d in &p.shape {
                w.write_u64::<LittleEndian>(d as u64)?;
            }
            for &x in &p.data {
                w.write_f64::<LittleEndian>(x)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch { expected: FORMAT_VERSION, found: version });
        }
        let config_text = get_str(r)?;
        let train_digest = get_str(r)?;
        let log = serde_json::from_str(&get_str(r)?)?;
        let kind: ModelKind = get_str(r)?.parse()?;
        let dropout = r.read_f64::<LittleEndian>()?;
        let vocab = Vocabulary::parse(&get_str(r)?)?;
        let bank_text = get_str(r)?;
        let bank = if bank_text.is_empty() { None } else { Some(ComponentBank::parse(&bank_text)?) };
        let n = r.read_u64::<LittleEndian>()? as usize;
        let mut params = ParamSet::new();
        for _ in 0..n {
            let name = get_str(r)?;
            let ndim = r.read_u32::<LittleEndian>()? as usize;
            if ndim == 0 || ndim > 4 {
                return Err(bad(&format!("parameter {name} has rank {ndim}")));
            }
            let shape: Vec<usize> = (0..ndim)
                .map(|_| r.read_u64::<LittleEndian>().map(|d| d as usize))
                .collect::<std::io::Result<_>>()?;
            let len: usize = shape.iter().product();
            let mut data = vec![0.0; len];
            r.read_f64_into::<LittleEndian>(&mut data)?;
            params.insert(&name, &shape, data);
        }
        let model = LanguageModel::from_params(kind, vocab, bank, params, dropout)?;
        Ok(Self { config_text, train_digest, log, model })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        Ok(buf)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::read_from(&mut bytes.as_slice())
    }
}
