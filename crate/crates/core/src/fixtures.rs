//! Deterministic synthetic test sequence: piecewise-constant 4:2:0 frames with
//! a black-level quadrant, a moving bright square and a checkerboard, plus a
//! copy with seeded additive Gaussian noise on luma. Chroma is noise-free and
//! has exact-zero areas, which are the blocks a rate-distortion gate should skip.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::frame_io::{FramePlane, FrameRate, VideoSequence};

pub const FIXTURE_SIZE: usize = 128;
pub const FIXTURE_FRAMES: usize = 4;
pub const FIXTURE_SIGMA: f64 = 25.0;
pub const FIXTURE_SEED: u64 = 2024;
/// Nominal video black.
pub const BLACK_LEVEL: u8 = 16;

fn luma_at(x: usize, y: usize, t: usize) -> u8 {
    let sq = 16 + 4 * t;
    if (sq..sq + 24).contains(&x) && (72..96).contains(&y) {
        return 230;
    }
    match (x < 64, y < 64) {
        (true, true) => BLACK_LEVEL,
        (false, true) => 200,
        (true, false) => 100,
        (false, false) => {
            if (x / 8 + y / 8).is_multiple_of(2) {
                60
            } else {
                180
            }
        }
    }
}

fn chroma_at(x: usize, y: usize, a: u8, b: u8, phase: usize) -> u8 {
    match (x < 32, y < 32) {
        (true, true) => 0,
        (false, true) => a,
        (true, false) => b,
        (false, false) => {
            if (x / 8 + y / 8 + phase).is_multiple_of(2) {
                0
            } else {
                200
            }
        }
    }
}

/// The noise-free sequence.
pub fn clean_sequence() -> VideoSequence {
    let n = FIXTURE_SIZE;
    let c = n / 2;
    let frames = (0..FIXTURE_FRAMES)
        .map(|t| FramePlane::from_fn(n, n, |x, y| luma_at(x, y, t)))
        .collect();
    let chroma = (0..FIXTURE_FRAMES)
        .map(|_| {
            [
                FramePlane::from_fn(c, c, |x, y| chroma_at(x, y, 96, 160, 0)),
                FramePlane::from_fn(c, c, |x, y| chroma_at(x, y, 170, 110, 1)),
            ]
        })
        .collect();
    VideoSequence::new(frames, FrameRate::default(), Some(chroma)).expect("fixture dimensions are consistent")
}

/// Luma with additive Gaussian noise of `sigma`, rounded and clamped; chroma untouched.
pub fn add_noise(seq: &VideoSequence, sigma: f64, seed: u64) -> VideoSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and non-negative");
    let mut out = seq.clone();
    for f in &mut out.frames {
        for s in f.samples_mut() {
            let v = *s as f64 + normal.sample(&mut rng);
            *s = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

pub fn noisy_sequence() -> VideoSequence {
    add_noise(&clean_sequence(), FIXTURE_SIGMA, FIXTURE_SEED)
}
