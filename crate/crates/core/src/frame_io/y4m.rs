use super::{split_frame, ChromaMode, FrameError, FrameRate, VideoSequence};

const SIGNATURE: &[u8] = b"YUV4MPEG2";
const FRAME_MARKER: &[u8] = b"FRAME";

fn parse_colorspace(tag: &str) -> Result<ChromaMode, FrameError> {
    match tag {
        "420" | "420jpeg" | "420paldv" | "420mpeg2" => Ok(ChromaMode::Yuv420),
        "mono" => Ok(ChromaMode::Mono),
        other => Err(FrameError::UnsupportedColorSpace(other.to_string())),
    }
}

fn parse_dim(value: &str, name: char) -> Result<usize, FrameError> {
    match value.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(FrameError::MalformedHeader(format!(
            "invalid {name} value `{value}`"
        ))),
    }
}

fn parse_rate(value: &str) -> Result<FrameRate, FrameError> {
    let bad = || FrameError::MalformedHeader(format!("invalid frame rate `{value}`"));
    let (num, den) = value.split_once(':').ok_or_else(bad)?;
    let num: u32 = num.parse().map_err(|_| bad())?;
    let den: u32 = den.parse().map_err(|_| bad())?;
    if num == 0 || den == 0 {
        return Err(bad());
    }
    Ok(FrameRate { num, den })
}

struct Header {
    width: usize,
    height: usize,
    rate: FrameRate,
    chroma: ChromaMode,
}

fn parse_header(line: &[u8]) -> Result<Header, FrameError> {
    let line = std::str::from_utf8(line)
        .map_err(|_| FrameError::MalformedHeader("header is not ASCII".into()))?;
    let mut tokens = line.split(' ').filter(|t| !t.is_empty());
    if tokens.next() != Some("YUV4MPEG2") {
        return Err(FrameError::MalformedHeader("missing YUV4MPEG2 signature".into()));
    }
    let (mut width, mut height, mut rate) = (None, None, None);
    let mut chroma = ChromaMode::Yuv420;
    for tok in tokens {
        let (key, value) = tok.split_at(1);
        match key {
            "W" => width = Some(parse_dim(value, 'W')?),
            "H" => height = Some(parse_dim(value, 'H')?),
            "F" => rate = Some(parse_rate(value)?),
            "C" => chroma = parse_colorspace(value)?,
            // Interlacing, aspect ratio and extensions carry no sample layout.
            _ => {}
        }
    }
    Ok(Header {
        width: width.ok_or_else(|| FrameError::MalformedHeader("missing W".into()))?,
        height: height.ok_or_else(|| FrameError::MalformedHeader("missing H".into()))?,
        rate: rate.ok_or_else(|| FrameError::MalformedHeader("missing F".into()))?,
        chroma,
    })
}

/// Parses a complete YUV4MPEG2 stream.
pub fn parse_y4m(bytes: &[u8]) -> Result<VideoSequence, FrameError> {
    if !bytes.starts_with(SIGNATURE) {
        return Err(FrameError::MalformedHeader("missing YUV4MPEG2 signature".into()));
    }
    let header_end = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| FrameError::MalformedHeader("unterminated header line".into()))?;
    let header = parse_header(&bytes[..header_end])?;
    let frame_bytes = header.chroma.frame_bytes(header.width, header.height);

    let mut frames = Vec::new();
    let mut pairs = Vec::new();
    let mut pos = header_end + 1;
    while pos < bytes.len() {
        let index = frames.len();
        let rest = &bytes[pos..];
        if rest.len() < FRAME_MARKER.len() {
            return Err(if FRAME_MARKER.starts_with(rest) {
                FrameError::TruncatedFrame { frame: index }
            } else {
                FrameError::MalformedHeader(format!("expected FRAME marker for frame {index}"))
            });
        }
        if !rest.starts_with(FRAME_MARKER) {
            return Err(FrameError::MalformedHeader(format!(
                "expected FRAME marker for frame {index}"
            )));
        }
        let marker_end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or(FrameError::TruncatedFrame { frame: index })?;
        let payload = &rest[marker_end + 1..];
        if payload.len() < frame_bytes {
            return Err(FrameError::TruncatedFrame { frame: index });
        }
        let (luma, pair) = split_frame(&payload[..frame_bytes], header.width, header.height, header.chroma);
        frames.push(luma);
        if let Some(p) = pair {
            pairs.push(p);
        }
        pos += marker_end + 1 + frame_bytes;
    }
    let chroma = (header.chroma == ChromaMode::Yuv420).then_some(pairs);
    VideoSequence::new(frames, header.rate, chroma)
}

/// Serializes a sequence as YUV4MPEG2 (`C420` or `Cmono`).
pub fn write_y4m(seq: &VideoSequence) -> Vec<u8> {
    let (width, height) = seq.dims().unwrap_or((0, 0));
    let tag = match seq.chroma_mode() {
        ChromaMode::Mono => "mono",
        ChromaMode::Yuv420 => "420",
    };
    let mut out = format!(
        "YUV4MPEG2 W{width} H{height} F{}:{} Ip A1:1 C{tag}\n",
        seq.frame_rate.num, seq.frame_rate.den
    )
    .into_bytes();
    for (i, frame) in seq.frames.iter().enumerate() {
        out.extend_from_slice(b"FRAME\n");
        out.extend_from_slice(frame.samples());
        if let Some(chroma) = &seq.chroma {
            for plane in &chroma[i] {
                out.extend_from_slice(plane.samples());
            }
        }
    }
    out
}
