//! Portable checkpoint encoding.
//!
//! Layout: magic `GLQN`, version byte `0x01`, tensor count (u32 LE), then per
//! tensor: name length (u16 LE) + UTF-8 name, rank (u8), dims (u32 LE each),
//! raw 32-bit little-endian IEEE-754 values in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{io_err, Error, Result};

use super::{NetParams, NetSpec, Tensor};

const MAGIC: &[u8; 4] = b"GLQN";
const VERSION: u8 = 0x01;

pub fn save_checkpoint(params: &NetParams<f32>, spec: &NetSpec, path: &Path) -> Result<()> {
    let descs = spec.param_descs();
    assert_eq!(descs.len(), params.tensors.len());
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let put = |w: &mut BufWriter<File>, bytes: &[u8]| w.write_all(bytes).map_err(io_err(path));
    put(&mut w, MAGIC)?;
    put(&mut w, &[VERSION])?;
    put(&mut w, &(descs.len() as u32).to_le_bytes())?;
    for (desc, tensor) in descs.iter().zip(&params.tensors) {
        assert_eq!(desc.shape.as_slice(), tensor.shape());
        put(&mut w, &(desc.name.len() as u16).to_le_bytes())?;
        put(&mut w, desc.name.as_bytes())?;
        put(&mut w, &[tensor.shape().len() as u8])?;
        for &d in tensor.shape() {
            put(&mut w, &(d as u32).to_le_bytes())?;
        }
        for &v in tensor.data() {
            put(&mut w, &v.to_le_bytes())?;
        }
    }
    w.flush().map_err(io_err(path))
}

pub fn load_checkpoint(path: &Path, expected: &NetSpec) -> Result<NetParams<f32>> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut r = BufReader::new(file);
    let truncated = |detail: &str| Error::CheckpointTruncated {
        path: path.to_path_buf(),
        detail: detail.to_string(),
    };

    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic).map_err(|_| truncated("missing header"))?;
    if &magic != MAGIC {
        return Err(Error::CheckpointBadMagic {
            path: path.to_path_buf(),
        });
    }
    let mut version = [0u8; 1];
    read_exact(&mut r, &mut version).map_err(|_| truncated("missing version byte"))?;
    if version[0] != VERSION {
        return Err(Error::CheckpointBadVersion {
            path: path.to_path_buf(),
            version: version[0],
        });
    }
    let mut count = [0u8; 4];
    read_exact(&mut r, &mut count).map_err(|_| truncated("missing tensor count"))?;
    let count = u32::from_le_bytes(count) as usize;

    let descs = expected.param_descs();
    if count != descs.len() {
        return Err(Error::CheckpointShapeMismatch {
            path: path.to_path_buf(),
            name: "(tensor count)".to_string(),
            expected: vec![descs.len()],
            found: vec![count],
        });
    }

    let mut tensors = Vec::with_capacity(count);
    for desc in &descs {
        let mut nlen = [0u8; 2];
        read_exact(&mut r, &mut nlen).map_err(|_| truncated("missing tensor name length"))?;
        let mut name = vec![0u8; u16::from_le_bytes(nlen) as usize];
        read_exact(&mut r, &mut name).map_err(|_| truncated("missing tensor name"))?;
        let name = String::from_utf8(name)
            .map_err(|_| truncated("tensor name is not valid UTF-8"))?;
        let mut rank = [0u8; 1];
        read_exact(&mut r, &mut rank).map_err(|_| truncated("missing tensor rank"))?;
        let mut shape = Vec::with_capacity(rank[0] as usize);
        for _ in 0..rank[0] {
            let mut dim = [0u8; 4];
            read_exact(&mut r, &mut dim).map_err(|_| truncated("missing tensor dims"))?;
            shape.push(u32::from_le_bytes(dim) as usize);
        }
        if name != desc.name || shape != desc.shape {
            return Err(Error::CheckpointShapeMismatch {
                path: path.to_path_buf(),
                name,
                expected: desc.shape.clone(),
                found: shape,
            });
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        let mut buf = [0u8; 4];
        for _ in 0..n {
            read_exact(&mut r, &mut buf).map_err(|_| truncated("missing tensor values"))?;
            data.push(f32::from_le_bytes(buf));
        }
        tensors.push(Tensor::from_vec(&shape, data));
    }
    Ok(NetParams { tensors })
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> std::io::Result<()> {
    r.read_exact(buf)
}
