//! Flat binary parameter checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes  "RULCKPT1"
//! arch_len     u32, arch  UTF-8 bytes   ("cnn" | "lstm")
//! meta_len     u32, meta  UTF-8 bytes   (free text, e.g. a config hash)
//! n_inputs     u32                      (sensor channels)
//! n_tensors    u32
//! per tensor:  name_len u32, name UTF-8, ndim u32, dims u64 × ndim,
//!              offset u64               (element offset into the data block)
//! n_values     u64
//! data         f64 × n_values
//! ```

use std::io::{Read, Write};

use crate::error::{Result, RulError};

const MAGIC: &[u8; 8] = b"RULCKPT1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub arch: String,
    pub meta: String,
    pub n_inputs: u32,
    /// `(name, shape, values)` in model parameter order.
    pub tensors: Vec<(String, Vec<usize>, Vec<f64>)>,
}

impl Checkpoint {
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        write_str(&mut w, &self.arch)?;
        write_str(&mut w, &self.meta)?;
        w.write_all(&self.n_inputs.to_le_bytes())?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        let mut offset = 0u64;
        for (name, shape, values) in &self.tensors {
            write_str(&mut w, name)?;
            w.write_all(&(shape.len() as u32).to_le_bytes())?;
            for &d in shape {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            w.write_all(&offset.to_le_bytes())?;
            offset += values.len() as u64;
        }
        w.write_all(&offset.to_le_bytes())?;
        for (_, _, values) in &self.tensors {
            for v in values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(RulError::structure("not a parameter checkpoint (bad magic)"));
        }
        let arch = read_str(&mut r)?;
        let meta = read_str(&mut r)?;
        let n_inputs = read_u32(&mut r)?;
        let n = read_u32(&mut r)? as usize;
        let mut table = Vec::with_capacity(n);
        for _ in 0..n {
            let name = read_str(&mut r)?;
            let ndim = read_u32(&mut r)? as usize;
            let shape = (0..ndim).map(|_| read_u64(&mut r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let offset = read_u64(&mut r)? as usize;
            table.push((name, shape, offset));
        }
        let total = read_u64(&mut r)? as usize;
        let mut data = vec![0u8; total * 8];
        r.read_exact(&mut data)?;
        let values: Vec<f64> = data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let tensors = table
            .into_iter()
            .map(|(name, shape, offset)| {
                let len: usize = shape.iter().product();
                let slice = values
                    .get(offset..offset + len)
                    .ok_or_else(|| RulError::structure(format!("tensor {name} runs past the data block")))?;
                Ok((name, shape, slice.to_vec()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { arch, meta, n_inputs, tensors })
    }
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let len = read_u32(r)? as usize;
    if len > 1 << 16 {
        return Err(RulError::structure("checkpoint string too long"));
    }
    let mut b = vec![0u8; len];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|_| RulError::structure("checkpoint string is not UTF-8"))
}
