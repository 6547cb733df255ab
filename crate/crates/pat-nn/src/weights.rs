//! Named parameter container: one file holding a JSON index followed by
//! concatenated tensor records.
//!
//! Layout: `u64 LE` index length, JSON index bytes, then the tensor records
//! in index order. Each index entry records the layer name, byte offset of
//! its record relative to the start of the record section, shape, and the
//! Glorot fan metadata it was initialized with.

use std::fs;
use std::path::Path;

use pat_core::scalar::Scalar;
use pat_core::tensor_file::{decode_tensor, encode_tensor, NamedTensor};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, NnError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightIndexEntry {
    pub name: String,
    pub offset: u64,
    pub dims: Vec<usize>,
    pub fan_in: usize,
    pub fan_out: usize,
}

/// Ordered collection of named parameter buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet<S: Scalar> {
    entries: Vec<(WeightIndexEntry, Vec<S>)>,
}

impl<S: Scalar> Default for WeightSet<S> {
    fn default() -> Self {
        WeightSet { entries: Vec::new() }
    }
}

impl<S: Scalar> WeightSet<S> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(
        &mut self,
        name: impl Into<String>,
        dims: Vec<usize>,
        fan_in: usize,
        fan_out: usize,
        data: Vec<S>,
    ) -> Result<()> {
        let name = name.into();
        if self.entries.iter().any(|(e, _)| e.name == name) {
            return Err(invalid(format!("duplicate weight name {name:?}")));
        }
        if dims.iter().product::<usize>() != data.len() {
            return Err(invalid(format!(
                "weight {name:?}: buffer length {} does not match dims {dims:?}",
                data.len()
            )));
        }
        self.entries.push((
            WeightIndexEntry {
                name,
                offset: 0,
                dims,
                fan_in,
                fan_out,
            },
            data,
        ));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<(&WeightIndexEntry, &[S])> {
        self.entries
            .iter()
            .find(|(e, _)| e.name == name)
            .map(|(e, d)| (e, d.as_slice()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&WeightIndexEntry, &[S])> {
        self.entries.iter().map(|(e, d)| (e, d.as_slice()))
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut records = Vec::new();
        let mut index = Vec::with_capacity(self.entries.len());
        for (entry, data) in &self.entries {
            let tensor = NamedTensor::new(entry.name.clone(), entry.dims.clone(), data.clone())?;
            let mut e = entry.clone();
            e.offset = records.len() as u64;
            records.extend_from_slice(&encode_tensor(&tensor)?);
            index.push(e);
        }
        let json = serde_json::to_vec(&index)
            .map_err(|e| invalid(format!("index serialization failed: {e}")))?;
        let mut out = Vec::with_capacity(8 + json.len() + records.len());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&records);
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<WeightSet<S>> {
        if bytes.len() < 8 {
            return Err(invalid("weight container truncated"));
        }
        let json_len = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let body = bytes
            .get(8..8 + json_len)
            .ok_or_else(|| invalid("weight container index truncated"))?;
        let index: Vec<WeightIndexEntry> = serde_json::from_slice(body)
            .map_err(|e| invalid(format!("weight index parse failed: {e}")))?;
        let records = &bytes[8 + json_len..];
        let mut entries = Vec::with_capacity(index.len());
        for entry in index {
            let at = records
                .get(entry.offset as usize..)
                .ok_or_else(|| invalid(format!("record offset for {:?} out of range", entry.name)))?;
            let (tensor, _) = decode_tensor::<S>(at)?;
            if tensor.name != entry.name || tensor.dims != entry.dims {
                return Err(invalid(format!(
                    "record at offset {} does not match index entry {:?}",
                    entry.offset, entry.name
                )));
            }
            entries.push((entry, tensor.data));
        }
        Ok(WeightSet { entries })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.encode()?).map_err(|e| NnError::Core(pat_core::CoreError::Io(e)))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<WeightSet<S>> {
        let bytes = fs::read(path).map_err(|e| NnError::Core(pat_core::CoreError::Io(e)))?;
        Self::decode(&bytes)
    }
}
