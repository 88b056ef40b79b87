//! Matrix and vector dumps for offline inspection.
//!
//! Each dump is a pair of files: `<stem>.bin` holds row-major entries as
//! interleaved little-endian `f64` re/im, and `<stem>.txt` is a short
//! `key = value` header describing the shape.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{OtsmError, Result};
use crate::linalg::CMat;
use crate::C64;

#[derive(Debug, Clone, PartialEq)]
pub struct Dump {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Row-major.
    pub data: Vec<C64>,
}

impl Dump {
    pub fn from_matrix(name: &str, m: &CMat) -> Self {
        let (rows, cols) = m.shape();
        let data = (0..rows).flat_map(|r| (0..cols).map(move |c| m[(r, c)])).collect();
        Self {
            name: name.to_string(),
            rows,
            cols,
            data,
        }
    }

    pub fn from_vector(name: &str, v: &[C64]) -> Self {
        Self {
            name: name.to_string(),
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    fn paths(dir: &Path, name: &str) -> (PathBuf, PathBuf) {
        (dir.join(format!("{name}.bin")), dir.join(format!("{name}.txt")))
    }

    /// Writes `<dir>/<name>.bin` and `<dir>/<name>.txt`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        if self.data.len() != self.rows * self.cols {
            return Err(OtsmError::Dimension {
                expected: self.rows * self.cols,
                got: self.data.len(),
            });
        }
        fs::create_dir_all(dir)?;
        let (bin, txt) = Self::paths(dir, &self.name);
        let mut bytes = Vec::with_capacity(self.data.len() * 16);
        for z in &self.data {
            bytes.extend_from_slice(&z.re.to_le_bytes());
            bytes.extend_from_slice(&z.im.to_le_bytes());
        }
        fs::write(bin, bytes)?;
        let mut h = fs::File::create(txt)?;
        writeln!(h, "name = {}", self.name)?;
        writeln!(h, "rows = {}", self.rows)?;
        writeln!(h, "cols = {}", self.cols)?;
        writeln!(h, "layout = row-major")?;
        writeln!(h, "dtype = complex128 interleaved f64 little-endian")?;
        Ok(())
    }

    pub fn read(dir: &Path, name: &str) -> Result<Self> {
        let (bin, txt) = Self::paths(dir, name);
        let header = fs::read_to_string(txt)?;
        let field = |k: &str| -> Result<usize> {
            header
                .lines()
                .filter_map(|l| l.split_once('='))
                .find(|(a, _)| a.trim() == k)
                .and_then(|(_, v)| v.trim().parse().ok())
                .ok_or_else(|| OtsmError::Numeric(format!("dump header for {name} lacks `{k}`")))
        };
        let (rows, cols) = (field("rows")?, field("cols")?);
        let bytes = fs::read(bin)?;
        if bytes.len() != rows * cols * 16 {
            return Err(OtsmError::Dimension {
                expected: rows * cols * 16,
                got: bytes.len(),
            });
        }
        let f = |c: &[u8]| f64::from_le_bytes(c.try_into().unwrap());
        let data = bytes
            .chunks_exact(16)
            .map(|c| C64::new(f(&c[..8]), f(&c[8..])))
            .collect();
        Ok(Self {
            name: name.to_string(),
            rows,
            cols,
            data,
        })
    }
}
