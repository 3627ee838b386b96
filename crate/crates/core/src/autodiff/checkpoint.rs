//! Binary parameter files.
//!
//! Layout, all little endian: magic `FRICKPT\0`, `u32` version, `u64` tensor
//! count, then per tensor `u64` name length, UTF-8 name, `u64` rank, `u64`
//! dims, `f64` payload.

use std::io::{Read, Write};
use std::path::Path;

use super::{ParamSet, Tensor};
use crate::error::{FriError, Result};

const MAGIC: &[u8; 8] = b"FRICKPT\0";
const VERSION: u32 = 1;

pub fn write_tensors<W: Write>(mut w: W, tensors: &[(&str, &Tensor)]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(tensors.len() as u64).to_le_bytes())?;
    for (name, t) in tensors {
        w.write_all(&(name.len() as u64).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.shape().len() as u64).to_le_bytes())?;
        for d in t.shape() {
            w.write_all(&(*d as u64).to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_tensors<R: Read>(mut r: R) -> Result<Vec<(String, Tensor)>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(FriError::config("not a checkpoint file"));
    }
    let mut vb = [0u8; 4];
    r.read_exact(&mut vb)?;
    let version = u32::from_le_bytes(vb);
    if version != VERSION {
        return Err(FriError::config(format!("unsupported checkpoint version {version}")));
    }
    let count = read_u64(&mut r)?;
    let mut out = Vec::new();
    for _ in 0..count {
        let len = read_u64(&mut r)? as usize;
        if len > 1 << 16 {
            return Err(FriError::config("corrupt checkpoint name length"));
        }
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| FriError::config("checkpoint name is not UTF-8"))?;
        let rank = read_u64(&mut r)? as usize;
        if rank > 3 {
            return Err(FriError::config(format!("tensor `{name}` has rank {rank}")));
        }
        let shape = (0..rank).map(|_| read_u64(&mut r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let mut bytes = vec![0u8; n * 8];
        r.read_exact(&mut bytes)?;
        let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        out.push((name, Tensor::new(shape, data)?));
    }
    Ok(out)
}

pub fn save_params(path: &Path, params: &ParamSet) -> Result<()> {
    let tensors: Vec<(&str, &Tensor)> = params.iter().map(|p| (p.name.as_str(), &p.value)).collect();
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_tensors(file, &tensors)
}

/// Overwrites values of `params` by name; every parameter must be present.
pub fn load_params(path: &Path, params: &mut ParamSet) -> Result<()> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let tensors = read_tensors(file)?;
    let names: Vec<String> = params.iter().map(|p| p.name.clone()).collect();
    for name in names {
        let t = tensors
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| FriError::config(format!("checkpoint lacks `{name}`")))?;
        let id = params.find(&name).expect("name from set");
        params.set_value(id, t.1.clone())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_bytes() {
        let a = Tensor::new(vec![2, 3], (0..6).map(|i| i as f64 * 0.1).collect()).unwrap();
        let b = Tensor::scalar(-1.5);
        let mut buf = Vec::new();
        write_tensors(&mut buf, &[("a", &a), ("b", &b)]).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        let back = read_tensors(&buf[..]).unwrap();
        assert_eq!(back[0].0, "a");
        assert_eq!(back[0].1, a);
        assert_eq!(back[1].1, b);
    }

    #[test]
    fn bad_magic() {
        assert!(read_tensors(&b"NOTACKPT\x01\0\0\0"[..]).is_err());
    }
}
