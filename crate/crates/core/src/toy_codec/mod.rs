//! Minimal intra block codec used to put real numbers on rate and distortion.
//!
//! Each block is coded directly (zero prediction): 2D DCT, uniform scalar
//! quantization, zigzag scan, then (run, level) pairs in exp-Golomb codes closed
//! by an end-of-block symbol. A per-block gate flag lets the caller drop the
//! payload entirely. The exact stream layout is documented in `docs/bitstream.md`.

mod bitio;
mod block;
mod container;
mod frame;

pub use bitio::{signed_to_unsigned, unsigned_to_signed, BitReader, BitWriter};
pub use block::{block_sse, code_block, decode_block, encode_block, CodedBlock, EOB_RUN};
pub use container::{SequenceStream, SEQUENCE_MAGIC, SEQUENCE_VERSION};
pub use frame::{decode_frame, encode_frame, Bitstream, DecodedFrame, FRAME_MAGIC, FRAME_VERSION};

use std::sync::OnceLock;

use thiserror::Error;

use crate::block_engine::BlockError;
use crate::transforms::{TransformError, MAX_DCT_SIZE};

pub const MAX_QP: u8 = 51;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("qp {0} outside 0..=51")]
    InvalidQp(i64),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Block(#[from] BlockError),
    #[error("coefficient run collides with the reserved end-of-block value")]
    ReservedRunCollision,
    #[error("bitstream ends early")]
    TruncatedStream,
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("corrupt payload: {0}")]
    CorruptPayload(String),
    #[error("{got} gate decisions for {blocks} blocks")]
    GateCountMismatch { blocks: usize, got: usize },
    #[error("block map does not match the {width}x{height} plane")]
    MapMismatch { width: usize, height: usize },
    #[error("plane {width}x{height} exceeds the 65535 limit")]
    PlaneTooLarge { width: usize, height: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QuantParams {
    qp: u8,
}

impl QuantParams {
    pub fn new(qp: i64) -> Result<Self, CodecError> {
        if !(0..=MAX_QP as i64).contains(&qp) {
            return Err(CodecError::InvalidQp(qp));
        }
        Ok(Self { qp: qp as u8 })
    }

    pub fn qp(self) -> u8 {
        self.qp
    }

    /// `2^((qp - 4) / 6)`: one octave every six steps, unit step at qp 4.
    pub fn step(self) -> f64 {
        ((self.qp as f64 - 4.0) / 6.0).exp2()
    }
}

/// Rounds `c / step` half away from zero.
pub fn quantize(coeffs: &[f64], q: QuantParams) -> Vec<i64> {
    let step = q.step();
    coeffs.iter().map(|&c| (c / step).round() as i64).collect()
}

pub fn dequantize(levels: &[i64], q: QuantParams) -> Vec<f64> {
    let step = q.step();
    levels.iter().map(|&l| l as f64 * step).collect()
}

static ZIGZAG_CACHE: [OnceLock<Vec<usize>>; 6] = [const { OnceLock::new() }; 6];

/// Raster indices in zigzag order: anti-diagonals from DC, the first one
/// stepping right, alternating direction.
pub fn zigzag_order(size: usize) -> Result<&'static [usize], CodecError> {
    if !(2..=MAX_DCT_SIZE).contains(&size) || !size.is_power_of_two() {
        return Err(TransformError::UnsupportedSize(size).into());
    }
    let slot = size.trailing_zeros() as usize - 1;
    Ok(ZIGZAG_CACHE[slot].get_or_init(|| {
        let mut order = Vec::with_capacity(size * size);
        for s in 0..2 * size - 1 {
            let lo = s.saturating_sub(size - 1);
            let hi = s.min(size - 1);
            if s % 2 == 1 {
                order.extend((lo..=hi).map(|y| y * size + (s - y)));
            } else {
                order.extend((lo..=hi).rev().map(|y| y * size + (s - y)));
            }
        }
        order
    }))
}

pub fn zigzag<T: Copy>(block: &[T], size: usize) -> Result<Vec<T>, CodecError> {
    let order = zigzag_order(size)?;
    check_block_len(block.len(), size)?;
    Ok(order.iter().map(|&i| block[i]).collect())
}

pub fn inverse_zigzag<T: Copy + Default>(seq: &[T], size: usize) -> Result<Vec<T>, CodecError> {
    let order = zigzag_order(size)?;
    check_block_len(seq.len(), size)?;
    let mut out = vec![T::default(); size * size];
    for (&i, &v) in order.iter().zip(seq) {
        out[i] = v;
    }
    Ok(out)
}

fn check_block_len(len: usize, size: usize) -> Result<(), CodecError> {
    if len != size * size {
        return Err(BlockError::InvalidBlock(format!("{len} values for a {size}x{size} block")).into());
    }
    Ok(())
}
