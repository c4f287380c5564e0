//! Raw video ingestion (Y4M and headerless planar YUV) and distortion metrics.

mod metrics;
mod y4m;

pub use metrics::{mse, psnr, sequence_psnr, PsnrValue};
pub use y4m::{parse_y4m, write_y4m};

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FrameError {
    #[error("malformed Y4M header: {0}")]
    MalformedHeader(String),
    #[error("unsupported color space `{0}` (only 8-bit 4:2:0 and mono are handled)")]
    UnsupportedColorSpace(String),
    #[error("stream ends inside frame {frame}")]
    TruncatedFrame { frame: usize },
    #[error("stream length {len} is not a multiple of the {frame_bytes}-byte frame size")]
    SizeMismatch { len: usize, frame_bytes: usize },
    #[error("plane dimensions differ: {a:?} vs {b:?}")]
    DimensionMismatch { a: (usize, usize), b: (usize, usize) },
    #[error("invalid plane: {0}")]
    InvalidPlane(String),
}

/// One 8-bit sample plane, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FramePlane {
    width: usize,
    height: usize,
    samples: Vec<u8>,
}

impl FramePlane {
    pub fn new(width: usize, height: usize, samples: Vec<u8>) -> Result<Self, FrameError> {
        if width == 0 || height == 0 {
            return Err(FrameError::InvalidPlane(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if samples.len() != width * height {
            return Err(FrameError::InvalidPlane(format!(
                "{} samples for a {width}x{height} plane",
                samples.len()
            )));
        }
        Ok(Self {
            width,
            height,
            samples,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0, "plane dimensions must be positive");
        Self {
            width,
            height,
            samples: vec![value; width * height],
        }
    }

    /// Builds a plane by evaluating `f(x, y)` at every position.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        assert!(width > 0 && height > 0, "plane dimensions must be positive");
        let mut samples = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                samples.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            samples,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    #[inline]
    pub fn samples_mut(&mut self) -> &mut [u8] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<u8> {
        self.samples
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.samples[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.samples[y * self.width + x] = v;
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[u8] {
        &self.samples[y * self.width..(y + 1) * self.width]
    }

    pub fn mean(&self) -> f64 {
        let sum: u64 = self.samples.iter().map(|&s| s as u64).sum();
        sum as f64 / self.samples.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChromaMode {
    Mono,
    Yuv420,
}

impl ChromaMode {
    pub fn chroma_dims(width: usize, height: usize) -> (usize, usize) {
        (width.div_ceil(2), height.div_ceil(2))
    }

    /// Bytes occupied by one frame of this layout.
    pub fn frame_bytes(self, width: usize, height: usize) -> usize {
        match self {
            ChromaMode::Mono => width * height,
            ChromaMode::Yuv420 => {
                let (cw, ch) = Self::chroma_dims(width, height);
                width * height + 2 * cw * ch
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameRate {
    pub num: u32,
    pub den: u32,
}

impl FrameRate {
    pub fn new(num: u32, den: u32) -> Self {
        Self { num, den }
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl Default for FrameRate {
    fn default() -> Self {
        Self { num: 25, den: 1 }
    }
}

/// Decoded video: luma planes plus optional 4:2:0 chroma carried alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoSequence {
    pub frames: Vec<FramePlane>,
    pub frame_rate: FrameRate,
    /// `[u, v]` per frame when the source is 4:2:0.
    pub chroma: Option<Vec<[FramePlane; 2]>>,
}

impl VideoSequence {
    /// Checks the cross-frame invariants: shared luma size and 4:2:0 chroma sizes.
    pub fn new(
        frames: Vec<FramePlane>,
        frame_rate: FrameRate,
        chroma: Option<Vec<[FramePlane; 2]>>,
    ) -> Result<Self, FrameError> {
        if let Some(first) = frames.first() {
            let dims = first.dims();
            for f in &frames[1..] {
                if f.dims() != dims {
                    return Err(FrameError::DimensionMismatch { a: dims, b: f.dims() });
                }
            }
            if let Some(chroma) = &chroma {
                if chroma.len() != frames.len() {
                    return Err(FrameError::InvalidPlane(format!(
                        "{} chroma pairs for {} frames",
                        chroma.len(),
                        frames.len()
                    )));
                }
                let want = ChromaMode::chroma_dims(dims.0, dims.1);
                for pair in chroma {
                    for plane in pair {
                        if plane.dims() != want {
                            return Err(FrameError::DimensionMismatch {
                                a: want,
                                b: plane.dims(),
                            });
                        }
                    }
                }
            }
        }
        Ok(Self {
            frames,
            frame_rate,
            chroma,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> Option<(usize, usize)> {
        self.frames.first().map(FramePlane::dims)
    }

    pub fn chroma_mode(&self) -> ChromaMode {
        if self.chroma.is_some() {
            ChromaMode::Yuv420
        } else {
            ChromaMode::Mono
        }
    }
}

/// Splits a headerless planar stream into frames of `width`×`height`.
pub fn parse_raw_yuv(
    bytes: &[u8],
    width: usize,
    height: usize,
    chroma: ChromaMode,
) -> Result<VideoSequence, FrameError> {
    if width == 0 || height == 0 {
        return Err(FrameError::InvalidPlane(format!(
            "dimensions must be positive, got {width}x{height}"
        )));
    }
    let frame_bytes = chroma.frame_bytes(width, height);
    if !bytes.len().is_multiple_of(frame_bytes) {
        return Err(FrameError::SizeMismatch {
            len: bytes.len(),
            frame_bytes,
        });
    }
    let mut frames = Vec::new();
    let mut pairs = Vec::new();
    for chunk in bytes.chunks_exact(frame_bytes) {
        let (luma, pair) = split_frame(chunk, width, height, chroma);
        frames.push(luma);
        if let Some(p) = pair {
            pairs.push(p);
        }
    }
    let chroma = (chroma == ChromaMode::Yuv420).then_some(pairs);
    VideoSequence::new(frames, FrameRate::default(), chroma)
}

/// Inverse of [`parse_raw_yuv`]: concatenates every plane in Y, U, V order.
pub fn write_raw_yuv(seq: &VideoSequence) -> Vec<u8> {
    let mut out = Vec::new();
    for (i, f) in seq.frames.iter().enumerate() {
        out.extend_from_slice(f.samples());
        if let Some(chroma) = &seq.chroma {
            for plane in &chroma[i] {
                out.extend_from_slice(plane.samples());
            }
        }
    }
    out
}

pub(crate) fn split_frame(
    chunk: &[u8],
    width: usize,
    height: usize,
    chroma: ChromaMode,
) -> (FramePlane, Option<[FramePlane; 2]>) {
    let luma_len = width * height;
    let luma = FramePlane {
        width,
        height,
        samples: chunk[..luma_len].to_vec(),
    };
    let pair = match chroma {
        ChromaMode::Mono => None,
        ChromaMode::Yuv420 => {
            let (cw, ch) = ChromaMode::chroma_dims(width, height);
            let c = cw * ch;
            let u = FramePlane {
                width: cw,
                height: ch,
                samples: chunk[luma_len..luma_len + c].to_vec(),
            };
            let v = FramePlane {
                width: cw,
                height: ch,
                samples: chunk[luma_len + c..luma_len + 2 * c].to_vec(),
            };
            Some([u, v])
        }
    };
    (luma, pair)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn raw_mono_two_frames() {
        let seq = parse_raw_yuv(&[7u8; 32], 4, 4, ChromaMode::Mono).unwrap();
        assert_eq!(seq.len(), 2);
        assert!(seq.chroma.is_none());
        assert_eq!(seq.frames[1].samples(), &[7u8; 16]);
    }

    #[test]
    fn raw_size_mismatch() {
        let err = parse_raw_yuv(&[0u8; 30], 4, 4, ChromaMode::Mono).unwrap_err();
        assert_eq!(
            err,
            FrameError::SizeMismatch {
                len: 30,
                frame_bytes: 16
            }
        );
    }

    #[test]
    fn raw_420_single_frame() {
        let bytes: Vec<u8> = (0..24).collect();
        let seq = parse_raw_yuv(&bytes, 4, 4, ChromaMode::Yuv420).unwrap();
        assert_eq!(seq.len(), 1);
        let chroma = seq.chroma.as_ref().unwrap();
        assert_eq!(chroma[0][0].dims(), (2, 2));
        assert_eq!(chroma[0][0].samples(), &[16, 17, 18, 19]);
        assert_eq!(chroma[0][1].samples(), &[20, 21, 22, 23]);
    }

    #[test]
    fn odd_dimensions_round_chroma_up() {
        assert_eq!(ChromaMode::chroma_dims(5, 3), (3, 2));
        assert_eq!(ChromaMode::Yuv420.frame_bytes(5, 3), 15 + 12);
    }

    #[test]
    fn plane_rejects_wrong_length() {
        assert!(FramePlane::new(2, 2, vec![0; 3]).is_err());
        assert!(FramePlane::new(0, 2, vec![]).is_err());
    }

    #[test]
    fn sequence_rejects_mixed_dimensions() {
        let frames = vec![FramePlane::filled(4, 4, 0), FramePlane::filled(4, 2, 0)];
        assert!(VideoSequence::new(frames, FrameRate::default(), None).is_err());
    }

    proptest! {
        #[test]
        fn raw_roundtrip(
            w in 1usize..9,
            h in 1usize..9,
            n in 1usize..4,
            with_chroma in any::<bool>(),
            pool in proptest::collection::vec(any::<u8>(), 1024),
        ) {
            let mode = if with_chroma { ChromaMode::Yuv420 } else { ChromaMode::Mono };
            let len = mode.frame_bytes(w, h) * n;
            let bytes = pool[..len].to_vec();
            let seq = parse_raw_yuv(&bytes, w, h, mode).unwrap();
            prop_assert_eq!(seq.len(), n);
            prop_assert_eq!(write_raw_yuv(&seq), bytes);
        }
    }
}
