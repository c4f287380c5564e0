//! Two-pass collaborative denoiser.
//!
//! Pass 1 groups similar 8x8 blocks from the noisy frames, hard-thresholds
//! the 3D spectrum of each group and aggregates the inverse-transformed
//! blocks with weight `1 / retained_count`. Pass 2 regroups on that basic
//! estimate, shrinks the noisy spectrum with the empirical Wiener factor
//! `basic² / (basic² + σ²)` and aggregates with weight `1 / ΣW²`.
//!
//! Groups are filtered in parallel but always aggregated in raster order of
//! their reference blocks, so the output does not depend on the thread count.

use rayon::prelude::*;
use thiserror::Error;

use crate::block_engine::{build_group, reference_positions, BlockError, BlockGroup, MatchParams, FILTER_BLOCK};
use crate::frame_io::FramePlane;
use crate::transforms::{group_forward, group_inverse, Spectrum3D, TransformError};

const WIENER_WEIGHT_FLOOR: f64 = 1e-12;
/// Reference rows filtered concurrently before their estimates are aggregated.
const ROWS_PER_BATCH: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum FilterError {
    #[error(transparent)]
    Block(#[from] BlockError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error("spectra dimensions differ")]
    DimensionMismatch,
    #[error("frame index {index} out of range for {len} frames")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid filter parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterParams {
    /// Noise standard deviation in 8-bit sample units.
    pub sigma: f64,
    /// Hard-threshold multiplier.
    pub lambda_3d: f64,
    pub pass1: MatchParams,
    pub pass2: MatchParams,
    pub max_pipeline_iters: usize,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            sigma: 25.0,
            lambda_3d: 2.7,
            pass1: MatchParams::pass1(),
            pass2: MatchParams::pass2(),
            max_pipeline_iters: 4,
        }
    }
}

impl FilterParams {
    pub fn with_sigma(sigma: f64) -> Self {
        Self {
            sigma,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), FilterError> {
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(FilterError::InvalidParams(format!("sigma {} must be >= 0", self.sigma)));
        }
        if self.lambda_3d.is_nan() || self.lambda_3d <= 0.0 {
            return Err(FilterError::InvalidParams(format!(
                "lambda_3d {} must be > 0",
                self.lambda_3d
            )));
        }
        if self.max_pipeline_iters == 0 {
            return Err(FilterError::InvalidParams("max_pipeline_iters must be >= 1".into()));
        }
        self.pass1.validate()?;
        self.pass2.validate()?;
        Ok(())
    }

    /// Same matching configuration with edge adaptation switched on or off in both passes.
    pub fn edge_adaptive(mut self, tau: Option<f64>) -> Self {
        self.pass1.edge_tau = tau;
        self.pass2.edge_tau = tau;
        self
    }
}

/// Weighted per-pixel sums of overlapping block estimates.
#[derive(Debug, Clone)]
pub struct Accumulator {
    width: usize,
    height: usize,
    numerator: Vec<f64>,
    denominator: Vec<f64>,
}

impl Accumulator {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            numerator: vec![0.0; width * height],
            denominator: vec![0.0; width * height],
        }
    }

    pub fn add_block(&mut self, x: usize, y: usize, size: usize, values: &[f64], weight: f64) {
        for r in 0..size {
            let base = (y + r) * self.width + x;
            let src = &values[r * size..(r + 1) * size];
            for (i, &v) in src.iter().enumerate() {
                self.numerator[base + i] += weight * v;
                self.denominator[base + i] += weight;
            }
        }
    }

    pub fn numerator(&self) -> &[f64] {
        &self.numerator
    }

    pub fn denominator(&self) -> &[f64] {
        &self.denominator
    }

    /// Divides out the weights, rounds half-up and clamps to 8 bits.
    /// Pixels that received no estimate keep their value from `fallback`.
    pub fn finish(&self, fallback: &FramePlane) -> FramePlane {
        FramePlane::from_fn(self.width, self.height, |x, y| {
            let i = y * self.width + x;
            if self.denominator[i] > 0.0 {
                round_to_sample(self.numerator[i] / self.denominator[i])
            } else {
                fallback.get(x, y)
            }
        })
    }
}

/// Round half-up, then clamp to `[0, 255]`.
#[inline]
pub fn round_to_sample(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Zeroes every coefficient with `|c| < λ·σ` except the joint DC.
/// Returns the thresholded spectrum and its nonzero count (DC always counted).
pub fn hard_threshold(spectrum: &Spectrum3D, sigma: f64, lambda_3d: f64) -> (Spectrum3D, usize) {
    let threshold = lambda_3d * sigma;
    let mut out = spectrum.clone();
    let mut retained = 1;
    for c in out.coeffs.iter_mut().skip(1) {
        if c.abs() < threshold {
            *c = 0.0;
        } else if *c != 0.0 {
            retained += 1;
        }
    }
    (out, retained)
}

/// Empirical Wiener shrinkage of `noisy` guided by `basic`.
/// Returns the shrunk spectrum and `ΣW²`.
pub fn wiener_shrink(
    noisy: &Spectrum3D,
    basic: &Spectrum3D,
    sigma: f64,
) -> Result<(Spectrum3D, f64), FilterError> {
    if noisy.size != basic.size
        || noisy.group_size != basic.group_size
        || noisy.coeffs.len() != basic.coeffs.len()
    {
        return Err(FilterError::DimensionMismatch);
    }
    let s2 = sigma * sigma;
    let mut out = noisy.clone();
    let mut norm = 0.0;
    for (c, &b) in out.coeffs.iter_mut().zip(&basic.coeffs) {
        let b2 = b * b;
        let denom = b2 + s2;
        // 0/0 carries no evidence either way
        let w = if denom == 0.0 { 0.0 } else { b2 / denom };
        *c *= w;
        norm += w * w;
    }
    Ok((out, norm))
}

struct GroupEstimate {
    group: BlockGroup,
    values: Vec<f64>,
    weight: f64,
}

fn check_window(window: &[&FramePlane], center: usize) -> Result<(usize, usize), FilterError> {
    let plane = window.get(center).ok_or(FilterError::IndexOutOfRange {
        index: center,
        len: window.len(),
    })?;
    let dims = plane.dims();
    for other in window {
        if other.dims() != dims {
            return Err(FilterError::InvalidParams("window frames differ in size".into()));
        }
    }
    if dims.0 < FILTER_BLOCK || dims.1 < FILTER_BLOCK {
        return Err(BlockError::FrameTooSmall {
            width: dims.0,
            height: dims.1,
            min: FILTER_BLOCK,
        }
        .into());
    }
    Ok(dims)
}

/// Runs `estimate` for every reference block and aggregates the center-frame
/// members in raster order of the references.
fn collaborate(
    dims: (usize, usize),
    center: usize,
    step: usize,
    fallback: &FramePlane,
    estimate: impl Fn(usize, usize) -> Result<GroupEstimate, FilterError> + Sync,
) -> Result<FramePlane, FilterError> {
    let xs = reference_positions(dims.0, FILTER_BLOCK, step);
    let ys = reference_positions(dims.1, FILTER_BLOCK, step);
    let mut acc = Accumulator::new(dims.0, dims.1);
    let plane = FILTER_BLOCK * FILTER_BLOCK;
    for rows in ys.chunks(ROWS_PER_BATCH) {
        let batch: Vec<GroupEstimate> = rows
            .par_iter()
            .flat_map_iter(|&y| xs.iter().map(move |&x| (x, y)))
            .map(|(x, y)| estimate(x, y))
            .collect::<Result<_, _>>()?;
        for est in &batch {
            for (m, values) in est.group.members.iter().zip(est.values.chunks_exact(plane)) {
                if m.frame == center {
                    acc.add_block(m.x, m.y, FILTER_BLOCK, values, est.weight);
                }
            }
        }
    }
    Ok(acc.finish(fallback))
}

/// Hard-thresholding pass over `window[center]`.
pub fn pass1_basic_estimate(
    window: &[&FramePlane],
    center: usize,
    p: &FilterParams,
) -> Result<FramePlane, FilterError> {
    p.validate()?;
    let dims = check_window(window, center)?;
    collaborate(dims, center, p.pass1.step, window[center], |x, y| {
        let group = build_group(window, center, x, y, FILTER_BLOCK, &p.pass1, None);
        let spectrum = group_forward(&group.stack(window), FILTER_BLOCK, group.len())?;
        let (filtered, retained) = hard_threshold(&spectrum, p.sigma, p.lambda_3d);
        Ok(GroupEstimate {
            values: group_inverse(&filtered)?,
            weight: 1.0 / retained.max(1) as f64,
            group,
        })
    })
}

/// Wiener pass. Grouping runs on `basic_window`; the same coordinates are
/// read from both windows.
pub fn pass2_final_estimate(
    noisy_window: &[&FramePlane],
    basic_window: &[&FramePlane],
    center: usize,
    p: &FilterParams,
) -> Result<FramePlane, FilterError> {
    p.validate()?;
    let dims = check_window(noisy_window, center)?;
    if basic_window.len() != noisy_window.len() || check_window(basic_window, center)? != dims {
        return Err(FilterError::InvalidParams("basic estimate does not match the noisy frames".into()));
    }
    collaborate(dims, center, p.pass2.step, noisy_window[center], |x, y| {
        let group = build_group(basic_window, center, x, y, FILTER_BLOCK, &p.pass2, None);
        let basic = group_forward(&group.stack(basic_window), FILTER_BLOCK, group.len())?;
        let noisy = group_forward(&group.stack(noisy_window), FILTER_BLOCK, group.len())?;
        let (shrunk, norm) = wiener_shrink(&noisy, &basic, p.sigma)?;
        Ok(GroupEstimate {
            values: group_inverse(&shrunk)?,
            weight: 1.0 / norm.max(WIENER_WEIGHT_FLOOR),
            group,
        })
    })
}

fn window_bounds(len: usize, index: usize, depth: usize) -> std::ops::Range<usize> {
    index.saturating_sub(depth)..(index + depth + 1).min(len)
}

/// Both passes on one frame, using up to `temporal_depth` neighbours on each side.
pub fn aegbm3d_denoise(frames: &[FramePlane], index: usize, p: &FilterParams) -> Result<FramePlane, FilterError> {
    if index >= frames.len() {
        return Err(FilterError::IndexOutOfRange {
            index,
            len: frames.len(),
        });
    }
    p.validate()?;
    let depth1 = p.pass1.temporal_depth;
    let depth2 = p.pass2.temporal_depth;
    // Pass 2 needs basic estimates for its own temporal window.
    let range2 = window_bounds(frames.len(), index, depth2);
    let noisy: Vec<&FramePlane> = frames.iter().collect();
    let mut basics = Vec::with_capacity(range2.len());
    for f in range2.clone() {
        let r1 = window_bounds(frames.len(), f, depth1);
        basics.push(pass1_basic_estimate(&noisy[r1.clone()], f - r1.start, p)?);
    }
    let basic_window: Vec<&FramePlane> = basics.iter().collect();
    pass2_final_estimate(&noisy[range2.clone()], &basic_window, index - range2.start, p)
}

/// Pass-1 estimate of every frame.
pub fn basic_sequence(frames: &[FramePlane], p: &FilterParams) -> Result<Vec<FramePlane>, FilterError> {
    p.validate()?;
    let noisy: Vec<&FramePlane> = frames.iter().collect();
    (0..frames.len())
        .map(|f| {
            let r = window_bounds(frames.len(), f, p.pass1.temporal_depth);
            pass1_basic_estimate(&noisy[r.clone()], f - r.start, p)
        })
        .collect()
}

/// Denoises every frame, sharing basic estimates between neighbouring frames.
pub fn denoise_sequence(frames: &[FramePlane], p: &FilterParams) -> Result<Vec<FramePlane>, FilterError> {
    let basics = basic_sequence(frames, p)?;
    let noisy: Vec<&FramePlane> = frames.iter().collect();
    let basic_refs: Vec<&FramePlane> = basics.iter().collect();
    (0..frames.len())
        .map(|f| {
            let r = window_bounds(frames.len(), f, p.pass2.temporal_depth);
            pass2_final_estimate(&noisy[r.clone()], &basic_refs[r.clone()], f - r.start, p)
        })
        .collect()
}

/// Both passes on a single plane with no temporal neighbours.
pub fn denoise_plane(plane: &FramePlane, p: &FilterParams) -> Result<FramePlane, FilterError> {
    aegbm3d_denoise(std::slice::from_ref(plane), 0, p)
}
