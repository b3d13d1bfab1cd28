//! Self-describing network snapshots.
//!
//! Layout (little endian):
//!
//! ```text
//! magic    8 bytes  "DIPSTOPN"
//! version  u32
//! channels u32      image channels in/out
//! seed     u64      initialization seed
//! spec_len u32      length of the JSON architecture that follows
//! spec     [u8]     ArchSpec as JSON
//! count    u64      number of parameters
//! theta    [f64]    parameters in layer order
//! ```

use std::path::Path;

use super::arch::ArchSpec;
use super::hourglass::DenoiserNetwork;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"DIPSTOPN";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(net: &DenoiserNetwork) -> Result<Vec<u8>> {
    let spec = serde_json::to_vec(net.arch())?;
    let theta = net.theta();
    let mut out = Vec::with_capacity(40 + spec.len() + 8 * theta.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(net.io_channels() as u32).to_le_bytes());
    out.extend_from_slice(&net.seed().to_le_bytes());
    out.extend_from_slice(&(spec.len() as u32).to_le_bytes());
    out.extend_from_slice(&spec);
    out.extend_from_slice(&(theta.len() as u64).to_le_bytes());
    for v in theta {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format("checkpoint truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<DenoiserNetwork> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Format("not a network checkpoint".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "checkpoint version {version} is not supported"
        )));
    }
    let channels = r.u32()? as usize;
    let seed = r.u64()?;
    let spec_len = r.u32()? as usize;
    let arch: ArchSpec = serde_json::from_slice(r.take(spec_len)?)?;
    let count = r.u64()? as usize;
    let raw = r.take(count.checked_mul(8).ok_or_else(|| Error::Format("bad count".into()))?)?;
    let theta: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if r.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after checkpoint".into()));
    }
    DenoiserNetwork::from_parts(arch, channels, seed, &theta)
}

pub fn save_checkpoint(net: &DenoiserNetwork, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(net)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<DenoiserNetwork> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip() {
        let mut net = DenoiserNetwork::new(ArchSpec::uniform(2, 4, 1), 3, 11).unwrap();
        let mut theta = net.theta();
        theta.iter_mut().for_each(|v| *v *= 1.5);
        net.set_theta(&theta).unwrap();
        let back = decode_checkpoint(&encode_checkpoint(&net).unwrap()).unwrap();
        assert_eq!(back.theta(), net.theta());
        assert_eq!(back.arch(), net.arch());
        assert_eq!(back.seed(), 11);
        assert_eq!(back.io_channels(), 3);
    }

    #[test]
    fn corrupt_checkpoints_are_rejected() {
        let net = DenoiserNetwork::new(ArchSpec::uniform(1, 2, 0), 1, 0).unwrap();
        let bytes = encode_checkpoint(&net).unwrap();
        assert!(decode_checkpoint(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_checkpoint(&bad).is_err());
        let mut newer = bytes.clone();
        newer[8] = 9;
        assert!(decode_checkpoint(&newer).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(decode_checkpoint(&extra).is_err());
    }
}
