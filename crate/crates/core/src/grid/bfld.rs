//! Binary cell-field dump: little-endian, magic `BFLD`, version 1, dims, spacing, origin,
//! then one `f64` triple per grid cell in x-fastest order (NaN for unoccupied cells).

use std::io::{Read, Write};

use super::{CellField, GridSpec, VoxelDomain};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"BFLD";
const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BfldHeader {
    pub version: u32,
    pub grid: GridSpec,
}

pub fn write_bfld(mut w: impl Write, domain: &VoxelDomain, field: &CellField) -> Result<()> {
    if field.len() != domain.cell_count() {
        return Err(Error::InvalidInput(format!(
            "field has {} cells, domain has {}",
            field.len(),
            domain.cell_count()
        )));
    }
    let grid = domain.grid();
    let mut buf = Vec::with_capacity(52 + 24 * grid.cell_count());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    for d in grid.dims {
        let d = u32::try_from(d)
            .map_err(|_| Error::InvalidInput(format!("grid dimension {d} exceeds u32")))?;
        buf.extend_from_slice(&d.to_le_bytes());
    }
    buf.extend_from_slice(&grid.spacing.to_le_bytes());
    for o in grid.origin {
        buf.extend_from_slice(&o.to_le_bytes());
    }
    let values = field.as_slice();
    for c in 0..grid.cell_count() {
        let v = domain.rank_of(c).map_or([f64::NAN; 3], |r| values[r]);
        for x in v {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Returns the header and one triple per grid cell (NaN where unoccupied).
pub fn read_bfld(mut r: impl Read) -> Result<(BfldHeader, Vec<[f64; 3]>)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
    };
    if cur.take(4)? != MAGIC {
        return Err(Error::Parse("missing BFLD magic".into()));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(Error::Parse(format!("unsupported BFLD version {version}")));
    }
    let dims = [
        cur.u32()? as usize,
        cur.u32()? as usize,
        cur.u32()? as usize,
    ];
    let spacing = cur.f64()?;
    let origin = [cur.f64()?, cur.f64()?, cur.f64()?];
    let grid = GridSpec {
        origin,
        spacing,
        dims,
    };
    let n = grid.cell_count();
    if bytes.len() - cur.pos != 24 * n {
        return Err(Error::Parse(format!(
            "BFLD payload holds {} bytes, dims {dims:?} need {}",
            bytes.len() - cur.pos,
            24 * n
        )));
    }
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        values.push([cur.f64()?, cur.f64()?, cur.f64()?]);
    }
    Ok((BfldHeader { version, grid }, values))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Parse("truncated BFLD header".into()))?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}
