//! Block extraction, block statistics, variance-driven partitioning and
//! block matching into 3D groups.

use std::cmp::Ordering;

use thiserror::Error;

use crate::frame_io::FramePlane;

/// Side of the blocks the collaborative filter works on.
pub const FILTER_BLOCK: usize = 8;
/// Codec partition sizes, finest first.
pub const CODEC_BLOCK_SIZES: [usize; 4] = [8, 16, 32, 64];
pub const MAX_GROUP_SIZE: usize = 32;

#[derive(Debug, Error, PartialEq)]
pub enum BlockError {
    #[error("variance thresholds must be strictly increasing, got {0:?}")]
    ThresholdOrderInvalid((f64, f64, f64)),
    #[error("block of size {0} is too small for a 3x3 gradient")]
    BlockTooSmall(usize),
    #[error("block sizes differ: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("block at ({x}, {y}) of size {size} does not fit a {width}x{height} plane")]
    OutOfBounds {
        x: usize,
        y: usize,
        size: usize,
        width: usize,
        height: usize,
    },
    #[error("{width}x{height} plane is smaller than the minimum block size {min}")]
    FrameTooSmall { width: usize, height: usize, min: usize },
    #[error("invalid block: {0}")]
    InvalidBlock(String),
    #[error("invalid match parameters: {0}")]
    InvalidParams(String),
}

/// A square patch of samples with its top-left origin in the source plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub size: usize,
    pub x: usize,
    pub y: usize,
    pub samples: Vec<f64>,
}

impl Block {
    pub fn new(size: usize, x: usize, y: usize, samples: Vec<f64>) -> Result<Self, BlockError> {
        if size == 0 || samples.len() != size * size {
            return Err(BlockError::InvalidBlock(format!(
                "{} samples for size {size}",
                samples.len()
            )));
        }
        Ok(Self { size, x, y, samples })
    }

    pub fn extract(plane: &FramePlane, x: usize, y: usize, size: usize) -> Result<Self, BlockError> {
        check_fits(plane, x, y, size)?;
        let mut samples = Vec::with_capacity(size * size);
        for r in 0..size {
            samples.extend(plane.row(y + r)[x..x + size].iter().map(|&s| s as f64));
        }
        Ok(Self { size, x, y, samples })
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.samples[y * self.size + x]
    }
}

fn check_fits(plane: &FramePlane, x: usize, y: usize, size: usize) -> Result<(), BlockError> {
    if size == 0 || x + size > plane.width() || y + size > plane.height() {
        return Err(BlockError::OutOfBounds {
            x,
            y,
            size,
            width: plane.width(),
            height: plane.height(),
        });
    }
    Ok(())
}

/// Population variance of the block's samples.
pub fn block_variance(b: &Block) -> f64 {
    variance(&b.samples)
}

pub(crate) fn variance(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n
}

/// Population variance of a square region of a plane, accumulated in integers.
pub fn region_variance(plane: &FramePlane, x: usize, y: usize, size: usize) -> f64 {
    let (mut sum, mut sq) = (0u64, 0u64);
    for r in 0..size {
        for &s in &plane.row(y + r)[x..x + size] {
            sum += s as u64;
            sq += (s as u64) * (s as u64);
        }
    }
    let n = (size * size) as f64;
    let mean = sum as f64 / n;
    (sq as f64 / n - mean * mean).max(0.0)
}

/// Variance cut points `(T1, T2, T3)` that pick 64/32/16/8 partitions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceThresholds {
    t1: f64,
    t2: f64,
    t3: f64,
}

impl VarianceThresholds {
    pub fn new(t1: f64, t2: f64, t3: f64) -> Result<Self, BlockError> {
        if !(t1 < t2 && t2 < t3) {
            return Err(BlockError::ThresholdOrderInvalid((t1, t2, t3)));
        }
        Ok(Self { t1, t2, t3 })
    }

    pub fn as_tuple(&self) -> (f64, f64, f64) {
        (self.t1, self.t2, self.t3)
    }
}

impl Default for VarianceThresholds {
    fn default() -> Self {
        Self {
            t1: 50.0,
            t2: 300.0,
            t3: 1200.0,
        }
    }
}

/// Maps local variance to a codec block size, shrunk until it fits the frame.
pub fn select_block_size(
    dims: (usize, usize),
    variance: f64,
    thresholds: &VarianceThresholds,
) -> Result<usize, BlockError> {
    let wanted = if variance < thresholds.t1 {
        64
    } else if variance < thresholds.t2 {
        32
    } else if variance < thresholds.t3 {
        16
    } else {
        8
    };
    let limit = dims.0.min(dims.1);
    CODEC_BLOCK_SIZES
        .iter()
        .rev()
        .copied()
        .find(|&s| s <= wanted && s <= limit)
        .ok_or(BlockError::FrameTooSmall {
            width: dims.0,
            height: dims.1,
            min: CODEC_BLOCK_SIZES[0],
        })
}

fn sobel_mean(size: usize, at: impl Fn(usize, usize) -> f64) -> f64 {
    let mut total = 0.0;
    for y in 1..size - 1 {
        for x in 1..size - 1 {
            let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            total += (gx * gx + gy * gy).sqrt();
        }
    }
    total / ((size - 2) * (size - 2)) as f64
}

/// Mean 3x3 Sobel gradient magnitude over the block interior.
pub fn edge_energy(b: &Block) -> Result<f64, BlockError> {
    if b.size < 3 {
        return Err(BlockError::BlockTooSmall(b.size));
    }
    Ok(sobel_mean(b.size, |x, y| b.at(x, y)))
}

pub(crate) fn plane_edge_energy(plane: &FramePlane, x0: usize, y0: usize, size: usize) -> f64 {
    sobel_mean(size, |x, y| plane.get(x0 + x, y0 + y) as f64)
}

/// Per-pixel normalized sum of squared differences.
pub fn match_distance(a: &Block, b: &Block) -> Result<f64, BlockError> {
    if a.size != b.size {
        return Err(BlockError::SizeMismatch(a.size, b.size));
    }
    let ssd: f64 = a
        .samples
        .iter()
        .zip(&b.samples)
        .map(|(p, q)| (p - q) * (p - q))
        .sum();
    Ok(ssd / (a.size * a.size) as f64)
}

/// Block origins along one axis at stride `step`, with the last origin
/// pinned to `dim - size` so the far edge is always covered.
pub fn reference_positions(dim: usize, size: usize, step: usize) -> Vec<usize> {
    assert!(dim >= size && step > 0);
    let last = dim - size;
    let mut out: Vec<usize> = (0..=last).step_by(step).collect();
    if *out.last().unwrap() != last {
        out.push(last);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchParams {
    pub search_radius: usize,
    pub max_group_size: usize,
    /// Per-pixel normalized squared distance.
    pub match_threshold: f64,
    pub temporal_depth: usize,
    pub step: usize,
    /// Halve the match threshold for reference blocks whose edge energy exceeds this.
    pub edge_tau: Option<f64>,
}

impl MatchParams {
    pub const DEFAULT_EDGE_TAU: f64 = 30.0;

    /// Hard-thresholding pass defaults.
    pub fn pass1() -> Self {
        Self {
            search_radius: 16,
            max_group_size: 16,
            match_threshold: 3000.0,
            temporal_depth: 1,
            step: 3,
            edge_tau: Some(Self::DEFAULT_EDGE_TAU),
        }
    }

    /// Wiener pass defaults; matching runs on the cleaner basic estimate.
    pub fn pass2() -> Self {
        Self {
            match_threshold: 400.0,
            max_group_size: 32,
            ..Self::pass1()
        }
    }

    pub fn validate(&self) -> Result<(), BlockError> {
        if !self.max_group_size.is_power_of_two() || self.max_group_size > MAX_GROUP_SIZE {
            return Err(BlockError::InvalidParams(format!(
                "group size {} is not a power of two in 1..=32",
                self.max_group_size
            )));
        }
        if self.step == 0 || self.step > FILTER_BLOCK {
            return Err(BlockError::InvalidParams(format!(
                "step {} must be in 1..={FILTER_BLOCK}",
                self.step
            )));
        }
        if self.match_threshold.is_nan() || self.match_threshold < 0.0 {
            return Err(BlockError::InvalidParams("negative match threshold".into()));
        }
        if self.search_radius == 0 {
            return Err(BlockError::InvalidParams("search radius must be positive".into()));
        }
        Ok(())
    }
}

/// Location of a block inside a search window (`frame` indexes the window).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockCoord {
    pub frame: usize,
    pub x: usize,
    pub y: usize,
}

/// Mutually similar blocks, reference first, sorted by distance.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGroup {
    pub size: usize,
    pub members: Vec<BlockCoord>,
    pub distances: Vec<f64>,
}

impl BlockGroup {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn reference(&self) -> BlockCoord {
        self.members[0]
    }

    /// Member samples stacked back to back, read from `window`.
    pub fn stack(&self, window: &[&FramePlane]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len() * self.size * self.size);
        for m in &self.members {
            let plane = window[m.frame];
            for r in 0..self.size {
                out.extend(plane.row(m.y + r)[m.x..m.x + self.size].iter().map(|&s| s as f64));
            }
        }
        out
    }

    pub fn blocks(&self, window: &[&FramePlane]) -> Vec<Block> {
        self.members
            .iter()
            .map(|m| Block::extract(window[m.frame], m.x, m.y, self.size).expect("member inside plane"))
            .collect()
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    ssd: u64,
    coord: BlockCoord,
}

impl Candidate {
    fn order(&self, other: &Self) -> Ordering {
        self.ssd
            .cmp(&other.ssd)
            .then(self.coord.y.cmp(&other.coord.y))
            .then(self.coord.x.cmp(&other.coord.x))
            .then(self.coord.frame.cmp(&other.coord.frame))
    }
}

/// SSD between two same-size blocks; stops early once `limit` is exceeded.
#[allow(clippy::too_many_arguments)]
fn block_ssd(a: &FramePlane, ax: usize, ay: usize, b: &FramePlane, bx: usize, by: usize, size: usize, limit: u64) -> u64 {
    let mut acc = 0u64;
    for r in 0..size {
        let ra = &a.row(ay + r)[ax..ax + size];
        let rb = &b.row(by + r)[bx..bx + size];
        for (&p, &q) in ra.iter().zip(rb) {
            let d = p as i32 - q as i32;
            acc += (d * d) as u64;
        }
        if acc > limit {
            return acc;
        }
    }
    acc
}

fn search_range(center: usize, radius: usize, max_origin: usize) -> std::ops::RangeInclusive<usize> {
    center.saturating_sub(radius)..=(center + radius).min(max_origin)
}

/// Groups blocks similar to the reference at `(x, y)` in `window[center]`.
///
/// The center frame is searched exhaustively within `search_radius`. Temporal
/// neighbours are searched within `search_radius / 2` around a predicted
/// location: `prediction` (or the co-located position) for the nearest
/// neighbour, then the best match of the previous frame moving outward.
pub fn build_group(
    window: &[&FramePlane],
    center: usize,
    x: usize,
    y: usize,
    size: usize,
    params: &MatchParams,
    prediction: Option<(usize, usize)>,
) -> BlockGroup {
    let reference = window[center];
    let (width, height) = reference.dims();
    debug_assert!(x + size <= width && y + size <= height);
    let (max_x, max_y) = (width - size, height - size);

    let mut threshold = params.match_threshold;
    if let Some(tau) = params.edge_tau {
        if size >= 3 && plane_edge_energy(reference, x, y, size) > tau {
            threshold *= 0.5;
        }
    }
    let area = (size * size) as f64;
    // Largest integer SSD whose normalized distance is within the threshold.
    let limit = (threshold * area).floor().min(u64::MAX as f64) as u64;

    let mut kept = Vec::new();
    for cy in search_range(y, params.search_radius, max_y) {
        for cx in search_range(x, params.search_radius, max_x) {
            if cx == x && cy == y {
                continue;
            }
            let ssd = block_ssd(reference, x, y, reference, cx, cy, size, limit);
            if ssd <= limit {
                kept.push(Candidate {
                    ssd,
                    coord: BlockCoord { frame: center, x: cx, y: cy },
                });
            }
        }
    }

    let temporal_radius = params.search_radius / 2;
    let start = prediction.map_or((x, y), |(px, py)| (px.min(max_x), py.min(max_y)));
    let before = (0..center).rev().take(params.temporal_depth);
    let after = (center + 1..window.len()).take(params.temporal_depth);
    for direction in [before.collect::<Vec<_>>(), after.collect::<Vec<_>>()] {
        let mut predicted = start;
        for f in direction {
            let plane = window[f];
            let mut best: Option<Candidate> = None;
            for cy in search_range(predicted.1, temporal_radius, max_y) {
                for cx in search_range(predicted.0, temporal_radius, max_x) {
                    let cand = Candidate {
                        ssd: block_ssd(reference, x, y, plane, cx, cy, size, u64::MAX),
                        coord: BlockCoord { frame: f, x: cx, y: cy },
                    };
                    if cand.ssd <= limit {
                        kept.push(cand);
                    }
                    if best.is_none_or(|b| cand.order(&b) == Ordering::Less) {
                        best = Some(cand);
                    }
                }
            }
            if let Some(b) = best {
                predicted = (b.coord.x, b.coord.y);
            }
        }
    }

    kept.sort_unstable_by(|a, b| a.order(b));
    let total = (kept.len() + 1).min(params.max_group_size.max(1));
    let count = 1usize << (usize::BITS - 1 - total.leading_zeros());

    let mut members = Vec::with_capacity(count);
    let mut distances = Vec::with_capacity(count);
    members.push(BlockCoord { frame: center, x, y });
    distances.push(0.0);
    for c in kept.into_iter().take(count - 1) {
        members.push(c.coord);
        distances.push(c.ssd as f64 / area);
    }
    BlockGroup {
        size,
        members,
        distances,
    }
}

/// One codec partition block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MapBlock {
    pub x: usize,
    pub y: usize,
    pub size: usize,
}

/// Variance-driven quadtree partition of a plane into codec blocks.
///
/// The plane is tiled by `top_size` squares (the last row/column clamped to
/// the plane edge); each square is split while its variance asks for a finer
/// size. `splits` records the decision at every node larger than 8 in
/// preorder, which is all a decoder needs to rebuild the map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockMap {
    pub width: usize,
    pub height: usize,
    pub top_size: usize,
    pub blocks: Vec<MapBlock>,
    pub splits: Vec<bool>,
}

impl BlockMap {
    pub fn from_plane(plane: &FramePlane, thresholds: &VarianceThresholds) -> Result<Self, BlockError> {
        let dims = plane.dims();
        let top_size = select_block_size(dims, 0.0, thresholds)?;
        Self::build(dims, top_size, |node| {
            let var = region_variance(plane, node.x, node.y, node.size);
            Ok(select_block_size(dims, var, thresholds)? < node.size)
        })
    }

    /// Every block at one fixed size.
    pub fn uniform(dims: (usize, usize), size: usize) -> Result<Self, BlockError> {
        if !CODEC_BLOCK_SIZES.contains(&size) {
            return Err(BlockError::InvalidBlock(format!("unsupported codec size {size}")));
        }
        let top_size = select_block_size(dims, 0.0, &VarianceThresholds::default())?;
        if size > top_size {
            return Err(BlockError::FrameTooSmall {
                width: dims.0,
                height: dims.1,
                min: size,
            });
        }
        Self::build(dims, top_size, |node| Ok(node.size > size))
    }

    /// Rebuilds a map from recorded split decisions.
    pub fn build<E>(
        dims: (usize, usize),
        top_size: usize,
        mut split: impl FnMut(MapBlock) -> Result<bool, E>,
    ) -> Result<Self, E> {
        let mut blocks = Vec::new();
        let mut splits = Vec::new();
        for ty in reference_positions(dims.1, top_size, top_size) {
            for tx in reference_positions(dims.0, top_size, top_size) {
                let mut stack = vec![MapBlock { x: tx, y: ty, size: top_size }];
                while let Some(node) = stack.pop() {
                    let divide = node.size > CODEC_BLOCK_SIZES[0] && split(node)?;
                    if node.size > CODEC_BLOCK_SIZES[0] {
                        splits.push(divide);
                    }
                    if divide {
                        let h = node.size / 2;
                        // pushed in reverse so quadrants pop in z-order
                        for (dx, dy) in [(h, h), (0, h), (h, 0), (0, 0)] {
                            stack.push(MapBlock { x: node.x + dx, y: node.y + dy, size: h });
                        }
                    } else {
                        blocks.push(node);
                    }
                }
            }
        }
        Ok(Self {
            width: dims.0,
            height: dims.1,
            top_size,
            blocks,
            splits,
        })
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}
