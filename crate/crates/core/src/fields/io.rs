//! The VAF1 binary field format.
//!
//! Layout (little endian): `b"VAF1"`, `u32` dim, `dim` x `u32` sizes,
//! `dim` x `f64` box lengths, `u32` component count, then the components
//! back to back, each row-major `f64`.

use std::fs;
use std::path::Path;

use super::{Grid, ScalarField, VectorField};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"VAF1";

/// Header plus any number of components.
#[derive(Clone, Debug, PartialEq)]
pub struct RawField {
    pub grid: Grid,
    pub comps: Vec<Vec<f64>>,
}

impl RawField {
    pub fn into_vector(self) -> Result<VectorField> {
        VectorField::new(self.grid, self.comps)
    }

    pub fn into_scalar(mut self) -> Result<ScalarField> {
        if self.comps.len() != 1 {
            return Err(Error::Format(format!("expected 1 component, found {}", self.comps.len())));
        }
        ScalarField::new(self.grid, self.comps.pop().expect("one component"))
    }
}

impl From<&VectorField> for RawField {
    fn from(f: &VectorField) -> Self {
        RawField { grid: f.grid().clone(), comps: f.comps().to_vec() }
    }
}

impl From<&ScalarField> for RawField {
    fn from(f: &ScalarField) -> Self {
        RawField { grid: f.grid().clone(), comps: vec![f.data().to_vec()] }
    }
}

pub fn encode(f: &RawField) -> Vec<u8> {
    let g = &f.grid;
    let mut out = Vec::with_capacity(16 + 12 * g.dim() + 8 * g.len() * f.comps.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(g.dim() as u32).to_le_bytes());
    for &n in g.sizes() {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for &l in g.box_len() {
        out.extend_from_slice(&l.to_le_bytes());
    }
    out.extend_from_slice(&(f.comps.len() as u32).to_le_bytes());
    for c in &f.comps {
        for x in c {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format(format!("truncated while reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

pub fn decode(buf: &[u8]) -> Result<RawField> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(4, "magic")? != MAGIC {
        return Err(Error::Format("bad magic, expected VAF1".into()));
    }
    let dim = c.u32("dim")? as usize;
    if !(2..=3).contains(&dim) {
        return Err(Error::Format(format!("dimension {dim} not in {{2,3}}")));
    }
    let sizes = (0..dim).map(|_| c.u32("sizes").map(|n| n as usize)).collect::<Result<Vec<_>>>()?;
    let box_len = (0..dim).map(|_| c.f64("box lengths")).collect::<Result<Vec<_>>>()?;
    let grid = Grid::new(&sizes, &box_len).map_err(|e| Error::Format(e.to_string()))?;
    let ncomp = c.u32("component count")? as usize;
    if ncomp == 0 {
        return Err(Error::Format("zero components".into()));
    }
    let expected = ncomp.checked_mul(grid.len()).and_then(|n| n.checked_mul(8)).ok_or_else(|| Error::Format("size overflow".into()))?;
    if buf.len() - c.pos != expected {
        return Err(Error::Format(format!("payload is {} bytes, header implies {expected}", buf.len() - c.pos)));
    }
    let comps = (0..ncomp).map(|_| (0..grid.len()).map(|_| c.f64("samples")).collect::<Result<Vec<_>>>()).collect::<Result<Vec<_>>>()?;
    Ok(RawField { grid, comps })
}

pub fn write(path: impl AsRef<Path>, f: &RawField) -> Result<()> {
    fs::write(path, encode(f))?;
    Ok(())
}

pub fn read(path: impl AsRef<Path>) -> Result<RawField> {
    decode(&fs::read(path)?)
}

pub fn save_vector(path: impl AsRef<Path>, f: &VectorField) -> Result<()> {
    write(path, &RawField::from(f))
}

pub fn load_vector(path: impl AsRef<Path>) -> Result<VectorField> {
    read(path)?.into_vector()
}

pub fn save_scalar(path: impl AsRef<Path>, f: &ScalarField) -> Result<()> {
    write(path, &RawField::from(f))
}

pub fn load_scalar(path: impl AsRef<Path>) -> Result<ScalarField> {
    read(path)?.into_scalar()
}
