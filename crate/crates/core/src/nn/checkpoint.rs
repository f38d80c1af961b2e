//! Versioned parameter container.
//!
//! Layout: a UTF-8 text header terminated by the line `end_header`, followed by every
//! array's values as little-endian `f64`, in header order. MLP parameters are written
//! layer-major (weights then bias for each layer).
//!
//! ```text
//! pgrl-checkpoint
//! format_version 1
//! seed 7
//! meta iteration 120
//! array policy.mean 46148
//! end_header
//! <binary>
//! ```

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "pgrl-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub seed: u64,
    pub meta: Vec<(String, String)>,
    pub arrays: Vec<(String, Vec<f64>)>,
}

impl Checkpoint {
    pub fn new(seed: u64) -> Self {
        Checkpoint { seed, ..Default::default() }
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string().replace('\n', " ");
        match self.meta.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.meta.push((key.to_string(), value)),
        }
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn push_array(&mut self, name: &str, values: Vec<f64>) {
        self.arrays.push((name.to_string(), values));
    }

    pub fn array(&self, name: &str) -> Result<&[f64]> {
        self.arrays.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice()).ok_or_else(|| Error::Checkpoint(format!("missing array `{name}`")))
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{CHECKPOINT_MAGIC}")?;
        writeln!(w, "format_version {CHECKPOINT_VERSION}")?;
        writeln!(w, "seed {}", self.seed)?;
        for (k, v) in &self.meta {
            writeln!(w, "meta {k} {v}")?;
        }
        for (name, values) in &self.arrays {
            writeln!(w, "array {name} {}", values.len())?;
        }
        writeln!(w, "end_header")?;
        for (_, values) in &self.arrays {
            for v in values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let mut reader = BufReader::new(r);
        let mut line = String::new();
        let mut next_line = |reader: &mut BufReader<R>| -> Result<String> {
            line.clear();
            let n = reader.read_line(&mut line).map_err(|e| Error::Checkpoint(format!("reading header: {e}")))?;
            if n == 0 {
                return Err(Error::Checkpoint("unexpected end of header".into()));
            }
            Ok(line.trim_end_matches(['\n', '\r']).to_string())
        };
        if next_line(&mut reader)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let version = next_line(&mut reader)?;
        match version.strip_prefix("format_version ").map(str::parse::<u32>) {
            Some(Ok(CHECKPOINT_VERSION)) => {}
            _ => return Err(Error::Checkpoint(format!("unsupported version line `{version}`"))),
        }
        let mut ckpt = Checkpoint::default();
        let mut lengths = Vec::new();
        loop {
            let l = next_line(&mut reader)?;
            if l == "end_header" {
                break;
            }
            let mut parts = l.splitn(3, ' ');
            match (parts.next(), parts.next(), parts.next()) {
                (Some("seed"), Some(s), None) => ckpt.seed = s.parse().map_err(|_| Error::Checkpoint(format!("bad seed `{s}`")))?,
                (Some("meta"), Some(k), v) => ckpt.meta.push((k.to_string(), v.unwrap_or("").to_string())),
                (Some("array"), Some(name), Some(len)) => {
                    let n: usize = len.parse().map_err(|_| Error::Checkpoint(format!("bad length in `{l}`")))?;
                    lengths.push((name.to_string(), n));
                }
                _ => return Err(Error::Checkpoint(format!("unrecognized header line `{l}`"))),
            }
        }
        let mut buf = [0u8; 8];
        for (name, n) in lengths {
            let mut values = Vec::with_capacity(n);
            for _ in 0..n {
                reader.read_exact(&mut buf).map_err(|_| Error::Checkpoint(format!("truncated data in array `{name}`")))?;
                values.push(f64::from_le_bytes(buf));
            }
            ckpt.arrays.push((name, values));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(file)
    }
}
