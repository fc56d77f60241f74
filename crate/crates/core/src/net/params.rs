//! Named parameter storage with flat-binary checkpoints.
//!
//! All weights live in one contiguous `f64` buffer; each named entry records
//! its shape and offset. Checkpoints are the raw little-endian buffer plus a
//! `<path>.manifest` text file listing `name<TAB>shape<TAB>offset` per line.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

/// Flat parameter buffer with named, shaped views.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<Entry>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
}

impl ParamStore {
    pub fn new() -> ParamStore {
        ParamStore::default()
    }

    /// Registers a tensor under `name`; names must be unique.
    pub fn add(&mut self, name: &str, tensor: Tensor) {
        assert!(
            !self.index.contains_key(name),
            "duplicate parameter name {name}"
        );
        let offset = self.data.len();
        self.data.extend_from_slice(tensor.data());
        self.index.insert(name.to_string(), self.entries.len());
        self.entries.push(Entry {
            name: name.to_string(),
            shape: tensor.shape().to_vec(),
            offset,
        });
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    /// Tensor copy of a named parameter; panics on unknown names.
    pub fn get(&self, name: &str) -> Tensor {
        let e = &self.entries[*self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))];
        let n: usize = e.shape.iter().product();
        Tensor::new(&e.shape, self.data[e.offset..e.offset + n].to_vec())
    }

    /// (offset, length) of a named parameter in the flat buffer.
    pub fn span(&self, name: &str) -> (usize, usize) {
        let e = &self.entries[*self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))];
        (e.offset, e.shape.iter().product())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Writes the flat buffer and its manifest.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for v in &self.data {
            w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;

        let mpath = manifest_path(path);
        let mf = File::create(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let mut mw = BufWriter::new(mf);
        for e in &self.entries {
            let dims: Vec<String> = e.shape.iter().map(|d| d.to_string()).collect();
            writeln!(mw, "{}\t{}\t{}", e.name, dims.join("x"), e.offset)
                .map_err(|er| Error::io(&mpath, er))?;
        }
        mw.flush().map_err(|e| Error::io(&mpath, e))
    }

    /// Reads a checkpoint written by [`ParamStore::save`].
    pub fn load(path: impl AsRef<Path>) -> Result<ParamStore> {
        let path = path.as_ref();
        let mpath = manifest_path(path);
        let manifest =
            std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let mut entries = Vec::new();
        let mut index = HashMap::new();
        let mut expected = 0usize;
        for (lineno, line) in manifest.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            if parts.len() != 3 {
                return Err(Error::format(
                    &mpath,
                    format!("manifest line {} malformed", lineno + 1),
                    0,
                ));
            }
            let shape: Vec<usize> = parts[1]
                .split('x')
                .map(|d| d.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| {
                    Error::format(&mpath, format!("bad shape on line {}", lineno + 1), 0)
                })?;
            let offset: usize = parts[2].parse().map_err(|_| {
                Error::format(&mpath, format!("bad offset on line {}", lineno + 1), 0)
            })?;
            if offset != expected {
                return Err(Error::format(
                    &mpath,
                    format!("non-contiguous offset on line {}", lineno + 1),
                    0,
                ));
            }
            expected += shape.iter().product::<usize>();
            index.insert(parts[0].to_string(), entries.len());
            entries.push(Entry {
                name: parts[0].to_string(),
                shape,
                offset,
            });
        }

        let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
        if bytes.len() != expected * 8 {
            return Err(Error::format(
                path,
                format!(
                    "checkpoint holds {} bytes but manifest implies {}",
                    bytes.len(),
                    expected * 8
                ),
                0,
            ));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(ParamStore {
            entries,
            index,
            data,
        })
    }
}

fn manifest_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_os_string();
    os.push(".manifest");
    os.into()
}
