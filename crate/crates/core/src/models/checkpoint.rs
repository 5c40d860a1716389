//! Binary network checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic      8 bytes  "GBCKPT\0\0"
//! version    u32      1
//! input_dim  u64
//! n_layers   u32
//! layers     n_layers records: tag u8, then u64 fields
//!              0 dense      inputs, outputs, bias (0|1)
//!              1 conv2d     in_channels, out_channels, kernel, height, width
//!              2 relu
//!              3 maxpool2d  channels, height, width
//!              4 flatten
//! n_weights  u64
//! weights    n_weights × f64
//! ```

use std::io::{Read, Write};

use super::{LayerSpec, Network};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"GBCKPT\0\0";
pub const VERSION: u32 = 1;

fn io_err(e: std::io::Error) -> Error {
    Error::Format(format!("checkpoint i/o: {e}"))
}

pub fn write_checkpoint<W: Write>(net: &Network, mut w: W) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(net.input_dim() as u64).to_le_bytes());
    buf.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
    let put = |buf: &mut Vec<u8>, v: usize| buf.extend_from_slice(&(v as u64).to_le_bytes());
    for l in net.layers() {
        match *l {
            LayerSpec::Dense { inputs, outputs, bias } => {
                buf.push(0);
                put(&mut buf, inputs);
                put(&mut buf, outputs);
                put(&mut buf, usize::from(bias));
            }
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                height,
                width,
            } => {
                buf.push(1);
                for v in [in_channels, out_channels, kernel, height, width] {
                    put(&mut buf, v);
                }
            }
            LayerSpec::Relu => buf.push(2),
            LayerSpec::MaxPool2d {
                channels,
                height,
                width,
            } => {
                buf.push(3);
                for v in [channels, height, width] {
                    put(&mut buf, v);
                }
            }
            LayerSpec::Flatten => buf.push(4),
        }
    }
    put(&mut buf, net.param_count());
    for v in net.weights() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf).map_err(io_err)
}

struct Cursor<R> {
    inner: R,
}

impl<R: Read> Cursor<R> {
    fn bytes<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.inner
            .read_exact(&mut b)
            .map_err(|_| Error::Format(format!("checkpoint truncated while reading {what}")))?;
        Ok(b)
    }

    fn u64(&mut self, what: &str) -> Result<usize> {
        let v = u64::from_le_bytes(self.bytes::<8>(what)?);
        usize::try_from(v).map_err(|_| Error::Format(format!("{what} = {v} does not fit in memory")))
    }
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<Network> {
    let mut c = Cursor { inner: r };
    let magic = c.bytes::<8>("magic")?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad checkpoint magic {magic:02x?}")));
    }
    let version = u32::from_le_bytes(c.bytes::<4>("version")?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let input_dim = c.u64("input_dim")?;
    let n_layers = u32::from_le_bytes(c.bytes::<4>("layer count")?) as usize;
    let mut layers = Vec::with_capacity(n_layers.min(1024));
    for i in 0..n_layers {
        let tag = c.bytes::<1>("layer tag")?[0];
        let layer = match tag {
            0 => LayerSpec::Dense {
                inputs: c.u64("dense.inputs")?,
                outputs: c.u64("dense.outputs")?,
                bias: match c.u64("dense.bias")? {
                    0 => false,
                    1 => true,
                    v => return Err(Error::Format(format!("layer {i}: bias flag {v}"))),
                },
            },
            1 => LayerSpec::Conv2d {
                in_channels: c.u64("conv2d.in_channels")?,
                out_channels: c.u64("conv2d.out_channels")?,
                kernel: c.u64("conv2d.kernel")?,
                height: c.u64("conv2d.height")?,
                width: c.u64("conv2d.width")?,
            },
            2 => LayerSpec::Relu,
            3 => LayerSpec::MaxPool2d {
                channels: c.u64("maxpool2d.channels")?,
                height: c.u64("maxpool2d.height")?,
                width: c.u64("maxpool2d.width")?,
            },
            4 => LayerSpec::Flatten,
            t => return Err(Error::Format(format!("layer {i}: unknown tag {t}"))),
        };
        layers.push(layer);
    }
    let net = Network::new(input_dim, layers).map_err(|e| Error::Format(format!("checkpoint architecture: {e}")))?;
    let n = c.u64("weight count")?;
    if n != net.param_count() {
        return Err(Error::Format(format!(
            "checkpoint stores {n} weights but the architecture has {}",
            net.param_count()
        )));
    }
    let mut weights = Vec::with_capacity(n);
    for _ in 0..n {
        weights.push(f64::from_le_bytes(c.bytes::<8>("weights")?));
    }
    net.with_weights(weights).map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Seed;

    #[test]
    fn round_trip_cnn() {
        let net = Network::cnn(1, 6, 6, &[2], 3, 5, 3).unwrap().init_uniform(Seed(4));
        let mut buf = Vec::new();
        write_checkpoint(&net, &mut buf).unwrap();
        let back = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn rejects_corruption() {
        let net = Network::linear(2, 2).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&net, &mut buf).unwrap();
        assert!(read_checkpoint(&buf[..buf.len() - 3]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_checkpoint(bad.as_slice()), Err(Error::Format(_))));
    }
}
