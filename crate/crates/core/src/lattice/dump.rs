//! Binary checkpoint format for sequences of [`FieldSlice`]s.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic   b"PLYFIELD"
//! version u32 (= 1)
//! d       u32
//! radius  i64
//! center  d x i64
//! count   u64
//! then per slice: t i64, log_scale f64, (2 radius + 1)^d x f64
//! ```

use std::io::{Read, Write};

use super::FieldSlice;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"PLYFIELD";
pub const FORMAT_VERSION: u32 = 1;

pub fn write_slices<W: Write>(mut w: W, slices: &[FieldSlice]) -> Result<()> {
    let first = slices
        .first()
        .ok_or_else(|| Error::Domain("no slices to write".into()))?;
    if slices
        .iter()
        .any(|s| s.d != first.d || s.radius != first.radius || s.center != first.center)
    {
        return Err(Error::Domain("slices must share one box".into()));
    }
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(first.d as u32).to_le_bytes())?;
    w.write_all(&first.radius.to_le_bytes())?;
    for c in &first.center {
        w.write_all(&c.to_le_bytes())?;
    }
    w.write_all(&(slices.len() as u64).to_le_bytes())?;
    for s in slices {
        w.write_all(&s.t.to_le_bytes())?;
        w.write_all(&s.log_scale.to_le_bytes())?;
        for v in &s.values {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_array<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

pub fn read_slices<R: Read>(mut r: R) -> Result<Vec<FieldSlice>> {
    let magic: [u8; 8] = read_array(&mut r)?;
    if &magic != MAGIC {
        return Err(Error::Integrity("not a field dump".into()));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != FORMAT_VERSION {
        return Err(Error::Integrity(format!("unsupported dump version {version}")));
    }
    let d = u32::from_le_bytes(read_array(&mut r)?) as usize;
    if !(1..=4).contains(&d) {
        return Err(Error::Integrity(format!("bad dimension {d}")));
    }
    let radius = i64::from_le_bytes(read_array(&mut r)?);
    if !(0..=1 << 20).contains(&radius) {
        return Err(Error::Integrity(format!("bad radius {radius}")));
    }
    let center = (0..d)
        .map(|_| Ok(i64::from_le_bytes(read_array(&mut r)?)))
        .collect::<Result<Vec<_>>>()?;
    let count = u64::from_le_bytes(read_array(&mut r)?);
    let cells = ((2 * radius + 1) as usize).pow(d as u32);
    let mut out = Vec::new();
    for _ in 0..count {
        let t = i64::from_le_bytes(read_array(&mut r)?);
        let log_scale = f64::from_le_bytes(read_array(&mut r)?);
        let mut values = Vec::with_capacity(cells);
        for _ in 0..cells {
            values.push(f64::from_le_bytes(read_array(&mut r)?));
        }
        out.push(FieldSlice {
            t,
            d,
            center: center.clone(),
            radius,
            values,
            log_scale,
        });
    }
    Ok(out)
}
