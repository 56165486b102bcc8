use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::backends::EmbeddingVector;
use crate::{Error, Result};

const BIN: &str = "embeddings.bin";
const IDX: &str = "embeddings.idx";

/// Cache key for one asset under one embedding backend.
pub fn cache_key(content_hash: &str, backend_name: &str) -> String {
    format!("{backend_name}:{content_hash}")
}

/// Persistent embedding store.
///
/// `embeddings.bin` holds records of `u32 key_len | key | u32 dim | dim × f32`
/// (little endian); `embeddings.idx` has one `key<TAB>offset<TAB>dim` line per
/// record. Both files are append-only; a later record for a key wins.
#[derive(Debug)]
pub struct EmbeddingCache {
    dir: PathBuf,
    entries: BTreeMap<String, EmbeddingVector>,
}

impl EmbeddingCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        let idx_path = dir.join(IDX);
        let bin_path = dir.join(BIN);
        let mut entries = BTreeMap::new();
        let idx = match std::fs::read_to_string(&idx_path) {
            Ok(s) => s,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(Error::io(&idx_path, e)),
        };
        if !idx.trim().is_empty() {
            let bin = std::fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
            for line in idx.lines().filter(|l| !l.trim().is_empty()) {
                let mut parts = line.split('\t');
                let (Some(key), Some(offset), Some(_dim)) = (parts.next(), parts.next(), parts.next())
                else {
                    return Err(Error::invalid(format!("malformed cache index line {line:?}")));
                };
                let offset: usize = offset
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad offset in {line:?}")))?;
                let (stored_key, vector) = read_record(&bin, offset)?;
                if stored_key != key {
                    return Err(Error::invalid(format!(
                        "cache index names {key} but record holds {stored_key}"
                    )));
                }
                entries.insert(stored_key, vector);
            }
        }
        Ok(Self { dir, entries })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn get(&self, key: &str) -> Option<&EmbeddingVector> {
        self.entries.get(key)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Appends a record and its index line.
    pub fn insert(&mut self, key: &str, vector: EmbeddingVector) -> Result<()> {
        if key.contains(['\t', '\n']) {
            return Err(Error::invalid("cache keys may not contain tabs or newlines"));
        }
        let bin_path = self.dir.join(BIN);
        let mut bin = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&bin_path)
            .map_err(|e| Error::io(&bin_path, e))?;
        let offset = bin.metadata().map_err(|e| Error::io(&bin_path, e))?.len();
        let mut record = Vec::with_capacity(8 + key.len() + 4 * vector.dim());
        record.extend((key.len() as u32).to_le_bytes());
        record.extend(key.as_bytes());
        record.extend((vector.dim() as u32).to_le_bytes());
        for v in vector.values() {
            record.extend(v.to_le_bytes());
        }
        bin.write_all(&record)
            .and_then(|_| bin.sync_data())
            .map_err(|e| Error::io(&bin_path, e))?;

        let idx_path = self.dir.join(IDX);
        let mut idx = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&idx_path)
            .map_err(|e| Error::io(&idx_path, e))?;
        writeln!(idx, "{key}\t{offset}\t{}", vector.dim()).map_err(|e| Error::io(&idx_path, e))?;
        self.entries.insert(key.to_string(), vector);
        Ok(())
    }
}

fn read_record(bin: &[u8], offset: usize) -> Result<(String, EmbeddingVector)> {
    let truncated = || Error::invalid(format!("truncated cache record at offset {offset}"));
    let u32_at = |at: usize| -> Result<usize> {
        let bytes = bin.get(at..at + 4).ok_or_else(truncated)?;
        Ok(u32::from_le_bytes(bytes.try_into().expect("4 bytes")) as usize)
    };
    let key_len = u32_at(offset)?;
    let key_start = offset + 4;
    let key = bin.get(key_start..key_start + key_len).ok_or_else(truncated)?;
    let key = String::from_utf8(key.to_vec()).map_err(|_| Error::invalid("cache key is not UTF-8"))?;
    let dim = u32_at(key_start + key_len)?;
    let data_start = key_start + key_len + 4;
    let data = bin.get(data_start..data_start + 4 * dim).ok_or_else(truncated)?;
    let values = data
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok((key, EmbeddingVector::new(values)?))
}
