use super::bitio::{BitReader, BitWriter};
use super::{dequantize, inverse_zigzag, quantize, zigzag, CodecError, QuantParams};
use crate::collab_filter::round_to_sample;
use crate::transforms::Dct2;

/// Run value reserved as the end-of-block symbol.
pub const EOB_RUN: u64 = 65535;

/// Payload bits for a coded block plus the decoder's reconstruction of it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodedBlock {
    pub bits: BitWriter,
    pub recon: Vec<u8>,
}

/// Payload for one `size`×`size` block of residual samples. A closed gate
/// (`coded == false`) produces no bits.
pub fn encode_block(
    samples: &[f64],
    size: usize,
    q: QuantParams,
    coded: bool,
) -> Result<BitWriter, CodecError> {
    let mut w = BitWriter::new();
    if !coded {
        return Ok(w);
    }
    let dct = Dct2::get(size)?;
    if samples.len() != size * size {
        return Err(crate::block_engine::BlockError::InvalidBlock(format!(
            "{} samples for a {size}x{size} block",
            samples.len()
        ))
        .into());
    }
    let mut coeffs = vec![0.0; size * size];
    let mut scratch = vec![0.0; size * size];
    dct.forward_into(samples, &mut coeffs, &mut scratch);
    let scan = zigzag(&quantize(&coeffs, q), size)?;
    let mut run = 0u64;
    for level in scan {
        if level == 0 {
            run += 1;
            continue;
        }
        if run == EOB_RUN {
            return Err(CodecError::ReservedRunCollision);
        }
        w.put_ue(run);
        w.put_se(level);
        run = 0;
    }
    w.put_ue(EOB_RUN);
    Ok(w)
}

/// Reads one block payload and returns its reconstructed samples.
pub fn decode_block(r: &mut BitReader<'_>, q: QuantParams, size: usize) -> Result<Vec<u8>, CodecError> {
    let n = size * size;
    let mut scan = vec![0i64; n];
    let mut pos = 0usize;
    loop {
        let run = r.get_ue()?;
        if run == EOB_RUN {
            break;
        }
        let at = pos as u64 + run;
        if at >= n as u64 {
            return Err(CodecError::CorruptPayload(format!(
                "coefficient {at} outside a {size}x{size} block"
            )));
        }
        let level = r.get_se()?;
        if level == 0 {
            return Err(CodecError::CorruptPayload("zero level in a run/level pair".into()));
        }
        scan[at as usize] = level;
        pos = at as usize + 1;
    }
    reconstruct(&scan, q, size)
}

fn reconstruct(scan: &[i64], q: QuantParams, size: usize) -> Result<Vec<u8>, CodecError> {
    let dct = Dct2::get(size)?;
    let coeffs = dequantize(&inverse_zigzag(scan, size)?, q);
    let mut out = vec![0.0; size * size];
    let mut scratch = vec![0.0; size * size];
    dct.inverse_into(&coeffs, &mut out, &mut scratch);
    Ok(out.into_iter().map(round_to_sample).collect())
}

/// Encodes a block and decodes it back, giving rate and reconstruction together.
pub fn code_block(samples: &[f64], size: usize, q: QuantParams, coded: bool) -> Result<CodedBlock, CodecError> {
    let bits = encode_block(samples, size, q, coded)?;
    let recon = if coded {
        let (bytes, _) = bits.clone().finish();
        decode_block(&mut BitReader::new(&bytes, bits.bit_len()), q, size)?
    } else {
        vec![0; size * size]
    };
    Ok(CodedBlock { bits, recon })
}

/// Sum of squared differences between source samples and a reconstruction.
pub fn block_sse(samples: &[f64], recon: &[u8]) -> f64 {
    samples
        .iter()
        .zip(recon)
        .map(|(&s, &r)| (s - r as f64) * (s - r as f64))
        .sum()
}
