//! Filter-then-code pipeline: variance block maps, threshold-driven
//! denoising, network-gated block coding and rate-distortion measurement.
//!
//! Work is split in two stages. [`prepare`] filters the luma planes and builds
//! the block maps; it does not depend on the quantizer, so a QP sweep prepares
//! once and encodes many times with [`encode_prepared`].

use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::block_engine::{region_variance, plane_edge_energy, BlockError, BlockMap, MapBlock, VarianceThresholds, CODEC_BLOCK_SIZES};
use crate::bp_net::{NetError, Network, NetworkShape, TrainingPair};
use crate::collab_filter::{denoise_plane, denoise_sequence, FilterError, FilterParams};
use crate::frame_io::{psnr, sequence_psnr, FrameError, FramePlane, FrameRate, PsnrValue, VideoSequence};
use crate::toy_codec::{block_sse, code_block, encode_frame, Bitstream, CodecError, QuantParams, SequenceStream};

/// Threshold used when every frame filters to an exact copy of its input.
pub const THRESHOLD_CAP_DB: f64 = 60.0;
/// Largest population variance of 8-bit samples, `(255 / 2)²`.
pub const MAX_SAMPLE_VARIANCE: f64 = 16256.25;
pub const GATE_INPUTS: usize = 4;
pub const DEFAULT_QP: i64 = 30;
pub const RD_CSV_HEADER: &str = "qp,bits,kbps,psnr_y,psnr_u,psnr_v";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("sequence has no frames")]
    EmptySequence,
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Block(#[from] BlockError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("rd csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdPsnr {
    /// Highest single-pass PSNR over the sequence.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateTraining {
    pub hidden: usize,
    pub eta: f64,
    pub error_goal: f64,
    pub max_epochs: usize,
}

impl Default for GateTraining {
    fn default() -> Self {
        Self {
            hidden: 8,
            eta: 0.5,
            error_goal: 0.02,
            max_epochs: 5000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub filter: FilterParams,
    /// `false` codes the input as is (the no-filter baseline).
    pub filtering: bool,
    /// Halve sigma on every re-filter iteration.
    pub sigma_decay: bool,
    pub quant: QuantParams,
    pub thresholds: VarianceThresholds,
    pub threshold_psnr: ThresholdPsnr,
    pub gate_model: Option<Network>,
    pub gate_cutoff: f64,
    /// Lagrange multiplier for oracle labels and RD cost; `None` means `0.85·step²`.
    pub lambda_rd: Option<f64>,
    pub training: GateTraining,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            filter: FilterParams::default(),
            filtering: true,
            sigma_decay: true,
            quant: QuantParams::new(DEFAULT_QP).expect("default qp is in range"),
            thresholds: VarianceThresholds::default(),
            threshold_psnr: ThresholdPsnr::Auto,
            gate_model: None,
            gate_cutoff: 0.5,
            lambda_rd: None,
            training: GateTraining::default(),
            seed: 42,
        }
    }
}

impl PipelineConfig {
    pub fn lambda(&self) -> f64 {
        self.lambda_rd.unwrap_or_else(|| default_lambda(self.quant))
    }

    pub fn validate(&self) -> Result<()> {
        self.filter.validate()?;
        if let ThresholdPsnr::Fixed(t) = self.threshold_psnr {
            if !t.is_finite() {
                return Err(PipelineError::InvalidConfig(format!("threshold {t} dB must be finite")));
            }
        }
        if let Some(l) = self.lambda_rd {
            if !l.is_finite() || l <= 0.0 {
                return Err(PipelineError::InvalidConfig(format!("lambda {l} must be > 0")));
            }
        }
        if let Some(net) = &self.gate_model {
            if net.shape.inputs != GATE_INPUTS || net.shape.outputs != 1 {
                return Err(PipelineError::InvalidConfig(format!(
                    "gate model must be {GATE_INPUTS}-L-1, got {}-{}-{}",
                    net.shape.inputs, net.shape.hidden, net.shape.outputs
                )));
            }
        }
        let t = &self.training;
        if t.hidden == 0 || t.max_epochs == 0 || t.eta.is_nan() || t.eta <= 0.0 {
            return Err(PipelineError::InvalidConfig("gate training needs hidden, epochs and eta > 0".into()));
        }
        Ok(())
    }
}

pub fn default_lambda(q: QuantParams) -> f64 {
    0.85 * q.step() * q.step()
}

/// Gate network inputs for one block, each in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateFeatures {
    pub variance_norm: f64,
    pub edge_norm: f64,
    pub residual_energy_norm: f64,
    pub size_index: f64,
}

impl GateFeatures {
    pub fn from_block(plane: &FramePlane, b: &MapBlock) -> Self {
        let variance = region_variance(plane, b.x, b.y, b.size);
        let edge = plane_edge_energy(plane, b.x, b.y, b.size);
        let mut abs_sum = 0u64;
        for y in b.y..b.y + b.size {
            abs_sum += plane.row(y)[b.x..b.x + b.size].iter().map(|&s| s as u64).sum::<u64>();
        }
        let mean_abs = abs_sum as f64 / (b.size * b.size) as f64;
        let index = CODEC_BLOCK_SIZES.iter().position(|&s| s == b.size).unwrap_or(0);
        Self {
            variance_norm: (variance / MAX_SAMPLE_VARIANCE).clamp(0.0, 1.0),
            edge_norm: (edge / 255.0).clamp(0.0, 1.0),
            residual_energy_norm: (mean_abs / 255.0).clamp(0.0, 1.0),
            size_index: index as f64 / (CODEC_BLOCK_SIZES.len() - 1) as f64,
        }
    }

    pub fn to_vec(self) -> Vec<f64> {
        vec![self.variance_norm, self.edge_norm, self.residual_energy_norm, self.size_index]
    }
}

/// Distortion and rate of a block coded and skipped. Rates include the gate flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateCosts {
    pub d_code: f64,
    pub r_code: u64,
    pub d_skip: f64,
    pub r_skip: u64,
}

impl GateCosts {
    pub fn j_code(&self, lambda: f64) -> f64 {
        self.d_code + lambda * self.r_code as f64
    }

    pub fn j_skip(&self, lambda: f64) -> f64 {
        self.d_skip + lambda * self.r_skip as f64
    }
}

pub fn gate_costs(samples: &[f64], size: usize, q: QuantParams) -> Result<GateCosts> {
    let coded = code_block(samples, size, q, true)?;
    Ok(GateCosts {
        d_code: block_sse(samples, &coded.recon),
        r_code: 1 + coded.bits.bit_len(),
        d_skip: samples.iter().map(|s| s * s).sum(),
        r_skip: 1,
    })
}

/// `true` iff coding the block has strictly lower RD cost than skipping it.
pub fn oracle_gate_label(samples: &[f64], size: usize, q: QuantParams, lambda: f64) -> Result<bool> {
    let c = gate_costs(samples, size, q)?;
    Ok(c.j_code(lambda) < c.j_skip(lambda))
}

pub fn block_samples(plane: &FramePlane, b: &MapBlock) -> Vec<f64> {
    let mut out = Vec::with_capacity(b.size * b.size);
    for y in b.y..b.y + b.size {
        out.extend(plane.row(y)[b.x..b.x + b.size].iter().map(|&s| s as f64));
    }
    out
}

fn threshold_from_estimates(estimates: &[FramePlane], inputs: &[FramePlane]) -> Result<f64> {
    let mut best: Option<f64> = None;
    for (e, i) in estimates.iter().zip(inputs) {
        let p = psnr(e, i)?;
        if !p.is_infinite() {
            best = Some(best.map_or(p.db(), |b: f64| b.max(p.db())));
        }
    }
    Ok(best.unwrap_or(THRESHOLD_CAP_DB))
}

/// Highest finite PSNR between a single filter pass and its input over all
/// frames, or [`THRESHOLD_CAP_DB`] when every pass is lossless.
pub fn compute_threshold_psnr(seq: &VideoSequence, filter: &FilterParams) -> Result<f64> {
    if seq.is_empty() {
        return Err(PipelineError::EmptySequence);
    }
    let estimates = denoise_sequence(&seq.frames, filter)?;
    threshold_from_estimates(&estimates, &seq.frames)
}

/// Runs the first (temporal) pass on frame `index`, then re-filters the
/// estimate spatially until an iteration's output is within `threshold` dB of
/// that iteration's input, at most `filter.max_pipeline_iters` passes in all.
pub fn filter_until_threshold(
    frames: &[FramePlane],
    index: usize,
    threshold: f64,
    filter: &FilterParams,
    sigma_decay: bool,
) -> Result<(FramePlane, usize)> {
    let first = crate::collab_filter::aegbm3d_denoise(frames, index, filter)?;
    refine(first, &frames[index], threshold, filter, sigma_decay)
}

fn refine(
    first: FramePlane,
    input: &FramePlane,
    threshold: f64,
    filter: &FilterParams,
    sigma_decay: bool,
) -> Result<(FramePlane, usize)> {
    if !threshold.is_finite() {
        return Err(PipelineError::InvalidConfig(format!("threshold {threshold} dB must be finite")));
    }
    let mut estimate = first;
    if psnr(&estimate, input)?.db() >= threshold {
        return Ok((estimate, 1));
    }
    let mut iterations = 1;
    for k in 2..=filter.max_pipeline_iters {
        let mut p = filter.clone();
        if sigma_decay {
            p.sigma = filter.sigma / (1u64 << (k - 1)) as f64;
        }
        let next = denoise_plane(&estimate, &p)?;
        let reached = psnr(&next, &estimate)?.db() >= threshold;
        estimate = next;
        iterations = k;
        if reached {
            break;
        }
    }
    Ok((estimate, iterations))
}

/// Luma, then chroma planes when present.
fn frame_planes(seq: &VideoSequence, f: usize) -> Vec<&FramePlane> {
    let mut planes = vec![&seq.frames[f]];
    if let Some(chroma) = &seq.chroma {
        planes.extend(chroma[f].iter());
    }
    planes
}

/// Quantizer-independent state shared by every encode of one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSequence {
    pub input: VideoSequence,
    /// Filtered luma with the input chroma.
    pub filtered: VideoSequence,
    pub threshold_db: Option<f64>,
    pub iterations: Vec<usize>,
    /// Per frame, one map per plane.
    pub maps: Vec<Vec<BlockMap>>,
}

impl PreparedSequence {
    pub fn planes(&self, f: usize) -> Vec<&FramePlane> {
        frame_planes(&self.filtered, f)
    }
}

pub fn prepare(seq: &VideoSequence, config: &PipelineConfig) -> Result<PreparedSequence> {
    config.validate()?;
    if seq.is_empty() {
        return Err(PipelineError::EmptySequence);
    }
    let maps = (0..seq.len())
        .map(|f| {
            frame_planes(seq, f)
                .into_iter()
                .map(|p| BlockMap::from_plane(p, &config.thresholds))
                .collect::<std::result::Result<Vec<_>, _>>()
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;

    if !config.filtering {
        return Ok(PreparedSequence {
            input: seq.clone(),
            filtered: seq.clone(),
            threshold_db: None,
            iterations: vec![0; seq.len()],
            maps,
        });
    }

    let first = denoise_sequence(&seq.frames, &config.filter)?;
    let threshold = match config.threshold_psnr {
        ThresholdPsnr::Auto => threshold_from_estimates(&first, &seq.frames)?,
        ThresholdPsnr::Fixed(t) => t,
    };
    let refined: Vec<(FramePlane, usize)> = first
        .into_par_iter()
        .zip(seq.frames.par_iter())
        .map(|(est, input)| refine(est, input, threshold, &config.filter, config.sigma_decay))
        .collect::<Result<_>>()?;
    let (frames, iterations): (Vec<_>, Vec<_>) = refined.into_iter().unzip();
    let filtered = VideoSequence::new(frames, seq.frame_rate, seq.chroma.clone())?;
    Ok(PreparedSequence {
        input: seq.clone(),
        filtered,
        threshold_db: Some(threshold),
        iterations,
        maps,
    })
}

#[derive(Debug, Clone, Copy)]
pub enum GateMode<'a> {
    AllOpen,
    AllClosed,
    /// Per-block RD decision with the configured lambda.
    Oracle,
    Network(&'a Network, f64),
}

pub fn gate_decisions(plane: &FramePlane, map: &BlockMap, mode: GateMode<'_>, q: QuantParams, lambda: f64) -> Result<Vec<bool>> {
    match mode {
        GateMode::AllOpen => Ok(vec![true; map.len()]),
        GateMode::AllClosed => Ok(vec![false; map.len()]),
        GateMode::Oracle => map
            .blocks
            .par_iter()
            .map(|b| oracle_gate_label(&block_samples(plane, b), b.size, q, lambda))
            .collect(),
        GateMode::Network(net, cutoff) => map
            .blocks
            .iter()
            .map(|b| Ok(net.gate(&GateFeatures::from_block(plane, b).to_vec(), cutoff)?))
            .collect(),
    }
}

/// One point of an RD curve. PSNR compares the reconstruction with the
/// frames that were coded; chroma entries are `None` for mono input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdPoint {
    pub qp: u8,
    pub bits: u64,
    pub psnr_y: PsnrValue,
    pub psnr_u: Option<PsnrValue>,
    pub psnr_v: Option<PsnrValue>,
}

impl RdPoint {
    /// The point as it reads back from CSV.
    pub fn rounded(self) -> Self {
        let r = |p: PsnrValue| PsnrValue::parse(&p.to_string()).expect("display output parses");
        Self {
            psnr_y: r(self.psnr_y),
            psnr_u: self.psnr_u.map(r),
            psnr_v: self.psnr_v.map(r),
            ..self
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameReport {
    pub iterations: usize,
    pub bits: u64,
    pub gates_open: usize,
    pub gates_closed: usize,
    /// Luma reconstruction vs filtered frame.
    pub psnr_y_filtered: PsnrValue,
    /// Luma reconstruction vs raw input frame.
    pub psnr_y_input: PsnrValue,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Baseline {
    pub bits: u64,
    pub psnr_y_input: PsnrValue,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub qp: u8,
    pub lambda: f64,
    pub gating: String,
    pub threshold_db: Option<f64>,
    pub frames: Vec<FrameReport>,
    pub bits: u64,
    pub rd_cost: f64,
    pub psnr_vs_filtered: [Option<PsnrValue>; 3],
    pub psnr_vs_input: [Option<PsnrValue>; 3],
    pub baseline: Option<Baseline>,
    pub settings: Vec<(String, String)>,
}

impl Report {
    pub fn gates_open(&self) -> usize {
        self.frames.iter().map(|f| f.gates_open).sum()
    }

    pub fn gates_closed(&self) -> usize {
        self.frames.iter().map(|f| f.gates_closed).sum()
    }
}

fn cell(p: Option<PsnrValue>) -> String {
    p.map_or_else(|| "-".to_string(), |v| v.to_string())
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# cafbp encode report")?;
        for (k, v) in &self.settings {
            writeln!(f, "{k}: {v}")?;
        }
        writeln!(f, "qp: {}", self.qp)?;
        writeln!(f, "lambda: {:.4}", self.lambda)?;
        writeln!(f, "gating: {}", self.gating)?;
        match self.threshold_db {
            Some(t) => writeln!(f, "threshold_psnr_db: {t:.4}")?,
            None => writeln!(f, "threshold_psnr_db: -")?,
        }
        writeln!(f, "total_bits: {}", self.bits)?;
        writeln!(f, "rd_cost: {:.4}", self.rd_cost)?;
        writeln!(f, "gates_open: {}", self.gates_open())?;
        writeln!(f, "gates_closed: {}", self.gates_closed())?;
        let [y, u, v] = self.psnr_vs_filtered;
        writeln!(f, "psnr_vs_filtered_yuv: {} {} {}", cell(y), cell(u), cell(v))?;
        let [y, u, v] = self.psnr_vs_input;
        writeln!(f, "psnr_vs_input_yuv: {} {} {}", cell(y), cell(u), cell(v))?;
        if let Some(b) = &self.baseline {
            writeln!(f, "baseline_bits: {}", b.bits)?;
            writeln!(f, "baseline_psnr_y_vs_input: {}", b.psnr_y_input)?;
            let dbits = 100.0 * (self.bits as f64 - b.bits as f64) / b.bits as f64;
            writeln!(f, "delta_bits_percent: {dbits:.4}")?;
            match (self.psnr_vs_input[0], b.psnr_y_input) {
                (Some(p), base) if !p.is_infinite() && !base.is_infinite() => {
                    writeln!(f, "delta_psnr_y_vs_input_db: {:.4}", p.db() - base.db())?
                }
                _ => writeln!(f, "delta_psnr_y_vs_input_db: -")?,
            }
        }
        writeln!(f, "frame,iterations,bits,gates_open,gates_closed,psnr_y_filtered,psnr_y_input")?;
        for (i, fr) in self.frames.iter().enumerate() {
            writeln!(
                f,
                "{i},{},{},{},{},{},{}",
                fr.iterations, fr.bits, fr.gates_open, fr.gates_closed, fr.psnr_y_filtered, fr.psnr_y_input
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CafbpRun {
    pub stream: SequenceStream,
    pub recon: VideoSequence,
    pub rd: RdPoint,
    pub report: Report,
}

fn gating_label(mode: &GateMode<'_>) -> String {
    match mode {
        GateMode::AllOpen => "all-open".into(),
        GateMode::AllClosed => "all-closed".into(),
        GateMode::Oracle => "oracle".into(),
        GateMode::Network(net, cutoff) => format!(
            "network {}-{}-{} cutoff {cutoff}",
            net.shape.inputs, net.shape.hidden, net.shape.outputs
        ),
    }
}

fn sse(a: &FramePlane, b: &FramePlane) -> f64 {
    a.samples()
        .iter()
        .zip(b.samples())
        .map(|(&x, &y)| (x.abs_diff(y) as u64).pow(2))
        .sum::<u64>() as f64
}

/// Codes every plane of a prepared sequence at `q` with the given gating.
pub fn encode_prepared(
    prepared: &PreparedSequence,
    q: QuantParams,
    mode: GateMode<'_>,
    lambda: f64,
) -> Result<CafbpRun> {
    let n = prepared.filtered.len();
    let coded: Vec<(Vec<Bitstream>, Vec<FramePlane>)> = (0..n)
        .into_par_iter()
        .map(|f| {
            let mut streams = Vec::new();
            let mut recon = Vec::new();
            for (plane, map) in prepared.planes(f).into_iter().zip(&prepared.maps[f]) {
                let gates = gate_decisions(plane, map, mode, q, lambda)?;
                let stream = encode_frame(plane, map, q, &gates)?;
                recon.push(crate::toy_codec::decode_frame(stream.as_bytes())?.plane);
                streams.push(stream);
            }
            Ok((streams, recon))
        })
        .collect::<Result<_>>()?;

    let mut luma = Vec::with_capacity(n);
    let mut chroma = Vec::with_capacity(n);
    let mut frames = Vec::with_capacity(n);
    let mut reports = Vec::with_capacity(n);
    let mut distortion = 0.0;
    for (f, (streams, recon)) in coded.into_iter().enumerate() {
        for (r, target) in recon.iter().zip(prepared.planes(f)) {
            distortion += sse(r, target);
        }
        let open: usize = streams.iter().map(Bitstream::open_gates).sum();
        let total: usize = streams.iter().map(|s| s.gates.len()).sum();
        reports.push(FrameReport {
            iterations: prepared.iterations[f],
            bits: streams.iter().map(Bitstream::bit_count).sum(),
            gates_open: open,
            gates_closed: total - open,
            psnr_y_filtered: psnr(&recon[0], &prepared.filtered.frames[f])?,
            psnr_y_input: psnr(&recon[0], &prepared.input.frames[f])?,
        });
        let mut it = recon.into_iter();
        luma.push(it.next().expect("luma is always coded"));
        if let (Some(u), Some(v)) = (it.next(), it.next()) {
            chroma.push([u, v]);
        }
        frames.push(streams);
    }
    let recon = VideoSequence::new(
        luma,
        prepared.filtered.frame_rate,
        prepared.filtered.chroma.is_some().then_some(chroma),
    )?;
    let stream = SequenceStream {
        frame_rate: prepared.filtered.frame_rate,
        frames,
    };
    let bits = stream.payload_bits();
    let psnr_vs_filtered = plane_psnrs(&recon, &prepared.filtered)?;
    let psnr_vs_input = plane_psnrs(&recon, &prepared.input)?;
    let rd = RdPoint {
        qp: q.qp(),
        bits,
        psnr_y: psnr_vs_filtered[0].expect("luma present"),
        psnr_u: psnr_vs_filtered[1],
        psnr_v: psnr_vs_filtered[2],
    };
    let report = Report {
        qp: q.qp(),
        lambda,
        gating: gating_label(&mode),
        threshold_db: prepared.threshold_db,
        frames: reports,
        bits,
        rd_cost: distortion + lambda * bits as f64,
        psnr_vs_filtered,
        psnr_vs_input,
        baseline: None,
        settings: Vec::new(),
    };
    Ok(CafbpRun {
        stream,
        recon,
        rd,
        report,
    })
}

fn plane_psnrs(a: &VideoSequence, b: &VideoSequence) -> Result<[Option<PsnrValue>; 3]> {
    let y = sequence_psnr(a.frames.iter().zip(&b.frames))?;
    let (u, v) = match (&a.chroma, &b.chroma) {
        (Some(ca), Some(cb)) => (
            Some(sequence_psnr(ca.iter().zip(cb).map(|(p, q)| (&p[0], &q[0])))?),
            Some(sequence_psnr(ca.iter().zip(cb).map(|(p, q)| (&p[1], &q[1])))?),
        ),
        _ => (None, None),
    };
    Ok([Some(y), u, v])
}

fn settings(config: &PipelineConfig) -> Vec<(String, String)> {
    let f = &config.filter;
    let m = |p: &crate::block_engine::MatchParams| {
        format!(
            "radius {} group {} threshold {} depth {} step {} edge_tau {}",
            p.search_radius,
            p.max_group_size,
            p.match_threshold,
            p.temporal_depth,
            p.step,
            p.edge_tau.map_or("off".to_string(), |t| t.to_string())
        )
    };
    let (t1, t2, t3) = config.thresholds.as_tuple();
    vec![
        ("filtering".into(), config.filtering.to_string()),
        ("sigma".into(), f.sigma.to_string()),
        ("lambda_3d".into(), f.lambda_3d.to_string()),
        ("pass1".into(), m(&f.pass1)),
        ("pass2".into(), m(&f.pass2)),
        ("max_pipeline_iters".into(), f.max_pipeline_iters.to_string()),
        ("sigma_decay".into(), config.sigma_decay.to_string()),
        ("variance_thresholds".into(), format!("{t1} {t2} {t3}")),
        (
            "threshold_psnr".into(),
            match config.threshold_psnr {
                ThresholdPsnr::Auto => "auto".into(),
                ThresholdPsnr::Fixed(t) => t.to_string(),
            },
        ),
        ("seed".into(), config.seed.to_string()),
    ]
}

/// The full scheme on one sequence at `config.quant`, with the report's
/// baseline taken from coding the raw input, all gates open.
pub fn run_cafbp(seq: &VideoSequence, config: &PipelineConfig) -> Result<CafbpRun> {
    run_prepared(prepare(seq, config)?, config)
}

/// [`run_cafbp`] on an already prepared sequence.
pub fn run_prepared(prepared: PreparedSequence, config: &PipelineConfig) -> Result<CafbpRun> {
    config.validate()?;
    let mode = match &config.gate_model {
        Some(net) => GateMode::Network(net, config.gate_cutoff),
        None => GateMode::AllOpen,
    };
    let mut run = encode_prepared(&prepared, config.quant, mode, config.lambda())?;
    let raw = PreparedSequence {
        filtered: prepared.input.clone(),
        threshold_db: None,
        iterations: vec![0; prepared.input.len()],
        ..prepared
    };
    let base = encode_prepared(&raw, config.quant, GateMode::AllOpen, config.lambda())?;
    run.report.baseline = Some(Baseline {
        bits: base.report.bits,
        psnr_y_input: base.report.psnr_vs_input[0].expect("luma present"),
    });
    run.report.settings = settings(config);
    Ok(run)
}

/// One training pattern per block of every filtered plane, labelled by the oracle.
pub fn gate_corpus(prepared: &PreparedSequence, q: QuantParams, lambda: f64) -> Result<Vec<TrainingPair>> {
    let mut pairs = Vec::new();
    for f in 0..prepared.filtered.len() {
        for (plane, map) in prepared.planes(f).into_iter().zip(&prepared.maps[f]) {
            let labels = gate_decisions(plane, map, GateMode::Oracle, q, lambda)?;
            for (b, label) in map.blocks.iter().zip(labels) {
                let target = if label { 1.0 } else { 0.0 };
                pairs.push(TrainingPair::new(GateFeatures::from_block(plane, b).to_vec(), vec![target]));
            }
        }
    }
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSummary {
    pub patterns: usize,
    pub positives: usize,
    pub epochs: usize,
    pub final_mse: f64,
    /// Fraction of patterns where the trained gate agrees with its label.
    pub accuracy: f64,
}

pub fn train_gate_prepared(prepared: &PreparedSequence, config: &PipelineConfig) -> Result<(Network, TrainingSummary)> {
    config.validate()?;
    let pairs = gate_corpus(prepared, config.quant, config.lambda())?;
    let t = &config.training;
    let shape = NetworkShape::new(GATE_INPUTS, t.hidden, 1)?;
    let mut net = Network::random(shape, t.eta, config.seed);
    let history = net.train(&pairs, t.max_epochs, t.error_goal)?;
    let mut agree = 0;
    for p in &pairs {
        if net.gate(&p.input, config.gate_cutoff)? == (p.target[0] >= 0.5) {
            agree += 1;
        }
    }
    let summary = TrainingSummary {
        patterns: pairs.len(),
        positives: pairs.iter().filter(|p| p.target[0] >= 0.5).count(),
        epochs: history.len(),
        final_mse: *history.last().expect("at least one epoch"),
        accuracy: agree as f64 / pairs.len() as f64,
    };
    Ok((net, summary))
}

/// Trains a gate for `config.quant` on the blocks of the filtered `seq`.
pub fn train_gate(seq: &VideoSequence, config: &PipelineConfig) -> Result<Network> {
    let prepared = prepare(seq, config)?;
    Ok(train_gate_prepared(&prepared, config)?.0)
}

/// Where each point of a sweep gets its gate decisions.
#[derive(Debug, Clone, Copy)]
pub enum SweepGating<'a> {
    AllOpen,
    Model(&'a Network),
    /// Train a fresh network for every QP.
    TrainPerQp,
}

pub fn rd_sweep(seq: &VideoSequence, config: &PipelineConfig, qps: &[u8], gating: SweepGating<'_>) -> Result<Vec<RdPoint>> {
    if qps.is_empty() {
        return Err(PipelineError::InvalidConfig("empty qp list".into()));
    }
    let prepared = prepare(seq, config)?;
    let mut points = Vec::with_capacity(qps.len());
    for &qp in qps {
        let mut c = config.clone();
        c.quant = QuantParams::new(qp as i64)?;
        let lambda = c.lambda_rd.unwrap_or_else(|| default_lambda(c.quant));
        let trained;
        let mode = match gating {
            SweepGating::AllOpen => GateMode::AllOpen,
            SweepGating::Model(net) => GateMode::Network(net, c.gate_cutoff),
            SweepGating::TrainPerQp => {
                trained = train_gate_prepared(&prepared, &c)?.0;
                GateMode::Network(&trained, c.gate_cutoff)
            }
        };
        points.push(encode_prepared(&prepared, c.quant, mode, lambda)?.rd);
    }
    Ok(points)
}

fn psnr_cell(p: Option<PsnrValue>) -> String {
    p.map_or_else(String::new, |v| v.to_string())
}

/// CSV text, rows sorted by qp. `kbps = bits · fps / frames / 1000`.
pub fn rd_csv(points: &[RdPoint], frame_rate: FrameRate, frames: usize) -> Result<String> {
    if points.is_empty() {
        return Err(PipelineError::Csv("no points".into()));
    }
    if frames == 0 {
        return Err(PipelineError::EmptySequence);
    }
    let mut sorted = points.to_vec();
    sorted.sort_by_key(|p| p.qp);
    let mut out = String::from(RD_CSV_HEADER);
    out.push('\n');
    for p in sorted {
        let kbps = p.bits as f64 * frame_rate.as_f64() / frames as f64 / 1000.0;
        out.push_str(&format!(
            "{},{},{:.4},{},{},{}\n",
            p.qp,
            p.bits,
            kbps,
            p.psnr_y,
            psnr_cell(p.psnr_u),
            psnr_cell(p.psnr_v)
        ));
    }
    Ok(out)
}

pub fn emit_rd_csv(points: &[RdPoint], frame_rate: FrameRate, frames: usize, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, rd_csv(points, frame_rate, frames)?)?;
    Ok(())
}

pub fn parse_rd_csv(text: &str) -> Result<Vec<RdPoint>> {
    let mut lines = text.lines();
    if lines.next() != Some(RD_CSV_HEADER) {
        return Err(PipelineError::Csv("missing or wrong header".into()));
    }
    let bad = |line: &str| PipelineError::Csv(format!("bad row `{line}`"));
    let mut points = Vec::new();
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 6 {
            return Err(bad(line));
        }
        let opt = |s: &str| -> Result<Option<PsnrValue>> {
            if s.is_empty() {
                Ok(None)
            } else {
                PsnrValue::parse(s).map(Some).ok_or_else(|| bad(line))
            }
        };
        points.push(RdPoint {
            qp: cells[0].parse().map_err(|_| bad(line))?,
            bits: cells[1].parse().map_err(|_| bad(line))?,
            psnr_y: PsnrValue::parse(cells[3]).ok_or_else(|| bad(line))?,
            psnr_u: opt(cells[4])?,
            psnr_v: opt(cells[5])?,
        });
    }
    Ok(points)
}
