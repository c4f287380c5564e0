use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use cafbp_core::frame_io::{parse_raw_yuv, parse_y4m, write_y4m, ChromaMode, VideoSequence};
use clap::{Args, ValueEnum};

use crate::UsageError;

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ChromaArg {
    #[value(name = "420")]
    Yuv420,
    Mono,
}

/// Headerless input needs its geometry spelled out.
#[derive(Debug, Clone, Args)]
pub struct RawArgs {
    /// Frame width for raw .yuv input
    #[arg(long)]
    pub width: Option<usize>,
    /// Frame height for raw .yuv input
    #[arg(long)]
    pub height: Option<usize>,
    /// Chroma layout for raw .yuv input
    #[arg(long, value_enum, default_value = "420")]
    pub chroma: ChromaArg,
}

fn is_y4m(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("y4m"))
}

pub fn read_sequence(path: &PathBuf, raw: &RawArgs) -> Result<VideoSequence> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let seq = if is_y4m(path) {
        parse_y4m(&bytes)
    } else {
        let (Some(w), Some(h)) = (raw.width, raw.height) else {
            return Err(UsageError(format!(
                "{} is not .y4m; pass --width and --height for raw input",
                path.display()
            ))
            .into());
        };
        let mode = match raw.chroma {
            ChromaArg::Yuv420 => ChromaMode::Yuv420,
            ChromaArg::Mono => ChromaMode::Mono,
        };
        parse_raw_yuv(&bytes, w, h, mode)
    };
    seq.with_context(|| format!("parsing {}", path.display()))
}

pub fn write_sequence(path: &PathBuf, seq: &VideoSequence) -> Result<()> {
    let bytes = if is_y4m(path) {
        write_y4m(seq)
    } else {
        cafbp_core::frame_io::write_raw_yuv(seq)
    };
    write_file(path, &bytes)
}

pub fn write_file(path: &PathBuf, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}
