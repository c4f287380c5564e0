use super::frame::{decode_frame, Bitstream};
use super::CodecError;
use crate::frame_io::{FramePlane, FrameRate, VideoSequence};

pub const SEQUENCE_MAGIC: &[u8; 4] = b"CFBS";
pub const SEQUENCE_VERSION: u8 = 1;
const HEADER_BYTES: usize = 18;

/// A coded sequence: every frame holds one (mono) or three (Y, U, V) plane streams.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceStream {
    pub frame_rate: FrameRate,
    pub frames: Vec<Vec<Bitstream>>,
}

impl SequenceStream {
    pub fn planes_per_frame(&self) -> usize {
        self.frames.first().map_or(1, Vec::len)
    }

    /// Pre-padding bits summed over every plane stream.
    pub fn payload_bits(&self) -> u64 {
        self.frames.iter().flatten().map(Bitstream::bit_count).sum()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CodecError> {
        let planes = self.planes_per_frame();
        if !matches!(planes, 1 | 3) || self.frames.iter().any(|f| f.len() != planes) {
            return Err(CodecError::MalformedHeader("frames must all carry 1 or 3 planes".into()));
        }
        let mut out = Vec::new();
        out.extend_from_slice(SEQUENCE_MAGIC);
        out.push(SEQUENCE_VERSION);
        out.push(planes as u8);
        out.extend_from_slice(&(self.frames.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.frame_rate.num.to_be_bytes());
        out.extend_from_slice(&self.frame_rate.den.to_be_bytes());
        for stream in self.frames.iter().flatten() {
            let bytes = stream.as_bytes();
            out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
            out.extend_from_slice(bytes);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        Ok(Self::decode(bytes)?.0)
    }

    /// Parses and decodes every plane.
    pub fn decode(bytes: &[u8]) -> Result<(Self, VideoSequence), CodecError> {
        if bytes.len() < HEADER_BYTES || &bytes[..4] != SEQUENCE_MAGIC {
            return Err(CodecError::MalformedHeader("not a sequence stream".into()));
        }
        if bytes[4] != SEQUENCE_VERSION {
            return Err(CodecError::MalformedHeader(format!("sequence version {}", bytes[4])));
        }
        let planes = bytes[5] as usize;
        if !matches!(planes, 1 | 3) {
            return Err(CodecError::MalformedHeader(format!("{planes} planes per frame")));
        }
        let be32 = |at: usize| u32::from_be_bytes(bytes[at..at + 4].try_into().unwrap());
        let count = be32(6) as usize;
        let frame_rate = FrameRate::new(be32(10), be32(14));
        if frame_rate.num == 0 || frame_rate.den == 0 {
            return Err(CodecError::MalformedHeader("zero frame rate".into()));
        }

        let mut at = HEADER_BYTES;
        let mut frames = Vec::new();
        let mut luma = Vec::new();
        let mut chroma = Vec::new();
        for _ in 0..count {
            let mut streams = Vec::with_capacity(planes);
            let mut decoded: Vec<FramePlane> = Vec::with_capacity(planes);
            for _ in 0..planes {
                if bytes.len() < at + 4 {
                    return Err(CodecError::TruncatedStream);
                }
                let len = be32(at) as usize;
                at += 4;
                if bytes.len() < at + len {
                    return Err(CodecError::TruncatedStream);
                }
                let d = decode_frame(&bytes[at..at + len])?;
                at += len;
                streams.push(d.stream);
                decoded.push(d.plane);
            }
            let mut it = decoded.into_iter();
            luma.push(it.next().unwrap());
            if planes == 3 {
                chroma.push([it.next().unwrap(), it.next().unwrap()]);
            }
            frames.push(streams);
        }
        if at != bytes.len() {
            return Err(CodecError::CorruptPayload("trailing bytes after the last frame".into()));
        }
        let seq = VideoSequence::new(luma, frame_rate, (planes == 3).then_some(chroma))
            .map_err(|e| CodecError::MalformedHeader(e.to_string()))?;
        Ok((Self { frame_rate, frames }, seq))
    }
}
