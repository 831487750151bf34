//! `BMF1` checkpoint container.
//!
//! Little-endian layout:
//!
//! ```text
//! "BMF1"  u32 version  u8 phase  u8 activation  u32 L  (L+1) × u32 layer dims
//! per layer:
//!   u8 kind (0 dense, 1 factorized)  u32 n  u32 m
//!   dense:       n·m f32 W, n f32 bias
//!   factorized:  u32 r  u8 sign storage (0 real, 1 packed)  u8 convention (0 ±1, 1 {0,1})
//!                packed: ⌈n·r/64⌉ u64 words, LSB-first in row-major order
//!                real:   n·r f32
//!                r·m f32 A, n f32 bias
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::factor::{Convention, SignMatrix, WORD_BITS};
use crate::nn::{Layer, Network, NetworkSpec, SignFactor, TrainPhase};
use crate::tensor::{RealMatrix, Scalar};

pub const MAGIC: &[u8; 4] = b"BMF1";
pub const VERSION: u32 = 1;

const DENSE: u8 = 0;
const FACTORIZED: u8 = 1;
const SIGN_REAL: u8 = 0;
const SIGN_PACKED: u8 = 1;

pub fn encode_checkpoint<T: Scalar>(net: &Network<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    out.push(match net.phase() {
        TrainPhase::Relaxed => 0,
        TrainPhase::FrozenBinary => 1,
    });
    out.push(0);
    let dims = net.spec().layer_dims();
    put_u32(&mut out, net.layers().len() as u32);
    for &d in dims {
        put_u32(&mut out, d as u32);
    }
    for layer in net.layers() {
        match layer {
            Layer::Dense { w, bias } => {
                out.push(DENSE);
                put_u32(&mut out, w.rows() as u32);
                put_u32(&mut out, w.cols() as u32);
                put_reals(&mut out, w.as_slice());
                put_reals(&mut out, bias);
            }
            Layer::Factorized { z, a, bias } => {
                out.push(FACTORIZED);
                put_u32(&mut out, bias.len() as u32);
                put_u32(&mut out, a.cols() as u32);
                put_u32(&mut out, a.rows() as u32);
                match z {
                    SignFactor::Relaxed(z) => {
                        out.extend_from_slice(&[SIGN_REAL, 0]);
                        put_reals(&mut out, z.as_slice());
                    }
                    SignFactor::Binary(bits) => {
                        let convention = match bits.convention() {
                            Convention::PlusMinusOne => 0,
                            Convention::ZeroOne => 1,
                        };
                        out.extend_from_slice(&[SIGN_PACKED, convention]);
                        for w in bits.words() {
                            out.extend_from_slice(&w.to_le_bytes());
                        }
                    }
                }
                put_reals(&mut out, a.as_slice());
                put_reals(&mut out, bias);
            }
        }
    }
    out
}

pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<Network<T>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::format("not a BMF1 checkpoint (bad magic)"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::format(format!("unsupported checkpoint version {version}")));
    }
    let phase = match r.u8()? {
        0 => TrainPhase::Relaxed,
        1 => TrainPhase::FrozenBinary,
        p => return Err(Error::format(format!("unknown phase tag {p}"))),
    };
    if r.u8()? != 0 {
        return Err(Error::format("unknown activation tag"));
    }
    let num_layers = r.u32()? as usize;
    r.ensure(num_layers.saturating_add(1).saturating_mul(4))?;
    let dims: Vec<usize> = (0..=num_layers).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_>>()?;

    let mut layers = Vec::with_capacity(num_layers);
    let mut mask = Vec::with_capacity(num_layers);
    let mut ranks = Vec::with_capacity(num_layers);
    for l in 0..num_layers {
        let kind = r.u8()?;
        let n = r.u32()? as usize;
        let m = r.u32()? as usize;
        if (n, m) != (dims[l + 1], dims[l]) {
            return Err(Error::format(format!("layer {l} is {n}x{m}, header says {}x{}", dims[l + 1], dims[l])));
        }
        match kind {
            DENSE => {
                let w = r.matrix(n, m)?;
                let bias = r.reals(n)?;
                layers.push(Layer::Dense { w, bias });
                mask.push(false);
                ranks.push(0);
            }
            FACTORIZED => {
                let rank = r.u32()? as usize;
                let storage = r.u8()?;
                let convention = match r.u8()? {
                    0 => Convention::PlusMinusOne,
                    1 => Convention::ZeroOne,
                    c => return Err(Error::format(format!("unknown convention tag {c}"))),
                };
                let z = match storage {
                    SIGN_REAL => SignFactor::Relaxed(r.matrix(n, rank)?),
                    SIGN_PACKED => {
                        let count = n.saturating_mul(rank).div_ceil(WORD_BITS);
                        r.ensure(count.saturating_mul(8))?;
                        let words = (0..count).map(|_| r.u64()).collect::<Result<_>>()?;
                        SignFactor::Binary(SignMatrix::from_words(n, rank, convention, words)?)
                    }
                    s => return Err(Error::format(format!("unknown sign storage tag {s}"))),
                };
                let a = r.matrix(rank, m)?;
                let bias = r.reals(n)?;
                layers.push(Layer::Factorized { z, a, bias });
                mask.push(true);
                ranks.push(rank);
            }
            k => return Err(Error::format(format!("unknown layer kind {k}"))),
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::format(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let spec = NetworkSpec::new(dims, mask, Some(&ranks)).map_err(as_format)?;
    Network::from_layers(spec, layers, phase).map_err(as_format)
}

pub fn save_checkpoint<T: Scalar>(net: &Network<T>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_checkpoint(net))?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<Network<T>> {
    decode_checkpoint(&fs::read(path)?)
}

fn as_format(e: Error) -> Error {
    match e {
        Error::Format(_) => e,
        other => Error::format(other.to_string()),
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_reals<T: Scalar>(out: &mut Vec<u8>, values: &[T]) {
    for v in values {
        out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn ensure(&self, len: usize) -> Result<()> {
        if self.bytes.len() - self.pos < len {
            return Err(Error::format(format!(
                "truncated checkpoint: need {len} bytes at offset {}, {} left",
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        self.ensure(len)?;
        let out = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn reals<T: Scalar>(&mut self, len: usize) -> Result<Vec<T>> {
        let raw = self.take(len.checked_mul(4).ok_or_else(|| Error::format("tensor too large"))?)?;
        raw.chunks_exact(4)
            .map(|c| {
                let v = f32::from_le_bytes(c.try_into().unwrap());
                if v.is_finite() {
                    Ok(T::of(v as f64))
                } else {
                    Err(Error::format("non-finite value in checkpoint"))
                }
            })
            .collect()
    }

    fn matrix<T: Scalar>(&mut self, rows: usize, cols: usize) -> Result<RealMatrix<T>> {
        let len = rows.checked_mul(cols).ok_or_else(|| Error::format("tensor too large"))?;
        RealMatrix::new(rows, cols, self.reals(len)?).map_err(as_format)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::memory_bits;
    use crate::tensor::Rng;

    fn net(mask: [bool; 3], frozen: bool) -> Network<f32> {
        let spec = NetworkSpec::lenet_300_100(mask.to_vec(), None).unwrap();
        let mut net = Network::init(&spec, &mut Rng::new(3)).unwrap();
        if frozen {
            net.binarize(true).unwrap();
        }
        net
    }

    #[test]
    fn round_trip_is_bitwise() {
        let mut rng = Rng::new(9);
        let x = RealMatrix::<f32>::from_fn(4, 784, |_, _| rng.unit() as f32);
        for (mask, frozen) in [([false; 3], false), ([true, false, true], false), ([true; 3], true)] {
            let net = net(mask, frozen);
            let back: Network<f32> = decode_checkpoint(&encode_checkpoint(&net)).unwrap();
            assert_eq!(back, net);
            let (a, b) = (net.forward(&x).unwrap(), back.forward(&x).unwrap());
            let bits = |m: &RealMatrix<f32>| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a), bits(&b));
        }
    }

    #[test]
    fn frozen_size_tracks_memory_audit() {
        let net = net([true; 3], true);
        let bytes = encode_checkpoint(&net).len() as f64;
        let audit = memory_bits(&net) as f64 / 8.0;
        assert!(bytes >= audit);
        assert!((bytes - audit) / audit < 0.05, "{bytes} vs {audit}");
    }

    #[test]
    fn corrupted_inputs_are_format_errors() {
        let bytes = encode_checkpoint(&net([true, false, false], true));
        let check = |b: &[u8]| {
            assert!(matches!(decode_checkpoint::<f32>(b), Err(Error::Format(_))));
        };
        let mut bad = bytes.clone();
        bad[0] = b'X';
        check(&bad);
        let mut bad = bytes.clone();
        bad[4] = 2;
        check(&bad);
        for cut in [0, 3, 7, 20, bytes.len() / 2, bytes.len() - 1] {
            check(&bytes[..cut]);
        }
        let mut long = bytes.clone();
        long.push(0);
        check(&long);
        let mut bad = bytes.clone();
        // First layer kind tag follows the 4 layer dims.
        bad[4 + 4 + 2 + 4 + 16] = 7;
        check(&bad);
    }
}
