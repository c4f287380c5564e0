use rayon::prelude::*;

use super::bitio::{BitReader, BitWriter};
use super::block::{decode_block, encode_block};
use super::{CodecError, QuantParams};
use crate::block_engine::{BlockMap, CODEC_BLOCK_SIZES};
use crate::frame_io::FramePlane;

pub const FRAME_MAGIC: &[u8; 4] = b"CFBP";
pub const FRAME_VERSION: u8 = 1;
/// Magic, version, width, height, qp.
const HEADER_BYTES: usize = 10;

/// One coded plane.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitstream {
    pub width: usize,
    pub height: usize,
    pub quant: QuantParams,
    pub map: BlockMap,
    pub gates: Vec<bool>,
    data: Vec<u8>,
    bit_count: u64,
    padding_bits: u8,
}

impl Bitstream {
    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.data
    }

    /// Bits before the final byte padding, header included.
    pub fn bit_count(&self) -> u64 {
        self.bit_count
    }

    pub fn padding_bits(&self) -> u8 {
        self.padding_bits
    }

    /// Physical length in bits.
    pub fn total_bits(&self) -> u64 {
        self.data.len() as u64 * 8
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        Ok(decode_frame(bytes)?.stream)
    }

    pub fn open_gates(&self) -> usize {
        self.gates.iter().filter(|&&g| g).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedFrame {
    pub plane: FramePlane,
    pub stream: Bitstream,
}

fn size_code(size: usize) -> Option<u64> {
    CODEC_BLOCK_SIZES.iter().position(|&s| s == size).map(|i| i as u64)
}

/// Codes `plane` block by block in map order; `gates[i]` decides whether
/// block `i` carries a payload.
pub fn encode_frame(
    plane: &FramePlane,
    map: &BlockMap,
    q: QuantParams,
    gates: &[bool],
) -> Result<Bitstream, CodecError> {
    let (width, height) = plane.dims();
    if (map.width, map.height) != (width, height) {
        return Err(CodecError::MapMismatch { width, height });
    }
    if width > u16::MAX as usize || height > u16::MAX as usize {
        return Err(CodecError::PlaneTooLarge { width, height });
    }
    if gates.len() != map.len() {
        return Err(CodecError::GateCountMismatch {
            blocks: map.len(),
            got: gates.len(),
        });
    }
    let top = size_code(map.top_size)
        .ok_or_else(|| CodecError::MalformedHeader(format!("top block size {}", map.top_size)))?;

    let payloads: Vec<BitWriter> = map
        .blocks
        .par_iter()
        .zip(gates.par_iter())
        .map(|(b, &open)| {
            let mut samples = Vec::with_capacity(b.size * b.size);
            for y in b.y..b.y + b.size {
                samples.extend(plane.row(y)[b.x..b.x + b.size].iter().map(|&s| s as f64));
            }
            encode_block(&samples, b.size, q, open)
        })
        .collect::<Result<_, _>>()?;

    let mut w = BitWriter::new();
    w.put_bits(u32::from_be_bytes(*FRAME_MAGIC) as u64, 32);
    w.put_bits(FRAME_VERSION as u64, 8);
    w.put_bits(width as u64, 16);
    w.put_bits(height as u64, 16);
    w.put_bits(q.qp() as u64, 8);
    w.put_bits(top, 2);
    for &s in &map.splits {
        w.put_bit(s);
    }
    for (payload, &open) in payloads.iter().zip(gates) {
        w.put_bit(open);
        w.append(payload);
    }
    let bit_count = w.bit_len();
    let (data, padding_bits) = w.finish();
    Ok(Bitstream {
        width,
        height,
        quant: q,
        map: map.clone(),
        gates: gates.to_vec(),
        data,
        bit_count,
        padding_bits,
    })
}

pub fn decode_frame(bytes: &[u8]) -> Result<DecodedFrame, CodecError> {
    if bytes.len() < HEADER_BYTES {
        return Err(CodecError::MalformedHeader(format!("{} bytes", bytes.len())));
    }
    if &bytes[..4] != FRAME_MAGIC {
        return Err(CodecError::MalformedHeader("bad magic".into()));
    }
    if bytes[4] != FRAME_VERSION {
        return Err(CodecError::MalformedHeader(format!("version {}", bytes[4])));
    }
    let width = u16::from_be_bytes([bytes[5], bytes[6]]) as usize;
    let height = u16::from_be_bytes([bytes[7], bytes[8]]) as usize;
    let q = QuantParams::new(bytes[9] as i64)
        .map_err(|_| CodecError::MalformedHeader(format!("qp {}", bytes[9])))?;

    let mut r = BitReader::new(bytes, bytes.len() as u64 * 8);
    r.get_bits(HEADER_BYTES as u32 * 8)?;
    let top_size = CODEC_BLOCK_SIZES[r.get_bits(2)? as usize];
    if top_size > width.min(height) {
        return Err(CodecError::MalformedHeader(format!(
            "top block size {top_size} for a {width}x{height} plane"
        )));
    }
    let map = BlockMap::build((width, height), top_size, |_| r.get_bit())?;

    let mut samples = vec![0u8; width * height];
    let mut gates = Vec::with_capacity(map.len());
    for b in &map.blocks {
        let open = r.get_bit()?;
        gates.push(open);
        if !open {
            for y in b.y..b.y + b.size {
                samples[y * width + b.x..y * width + b.x + b.size].fill(0);
            }
            continue;
        }
        let recon = decode_block(&mut r, q, b.size)?;
        for (dy, row) in recon.chunks_exact(b.size).enumerate() {
            let at = (b.y + dy) * width + b.x;
            samples[at..at + b.size].copy_from_slice(row);
        }
    }

    let bit_count = r.position();
    let padding_bits = r.remaining();
    if padding_bits >= 8 || r.get_bits(padding_bits as u32)? != 0 {
        return Err(CodecError::CorruptPayload("trailing data after the last block".into()));
    }
    let plane = FramePlane::new(width, height, samples)
        .map_err(|e| CodecError::MalformedHeader(e.to_string()))?;
    Ok(DecodedFrame {
        plane,
        stream: Bitstream {
            width,
            height,
            quant: q,
            map,
            gates,
            data: bytes.to_vec(),
            bit_count,
            padding_bits: padding_bits as u8,
        },
    })
}
