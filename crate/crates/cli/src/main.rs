//! `cafbp`: denoise, train a coding gate, encode, decode and measure RD curves.
//!
//! Exit status is 0 on success, 1 for usage errors and 2 for data errors.

mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use cafbp_core::block_engine::{MatchParams, VarianceThresholds};
use cafbp_core::bp_net::Network;
use cafbp_core::collab_filter::{denoise_sequence, FilterParams};
use cafbp_core::frame_io::{sequence_psnr, VideoSequence};
use cafbp_core::pipeline::{
    emit_rd_csv, prepare, rd_csv, rd_sweep, run_prepared, train_gate_prepared, GateTraining, PipelineConfig,
    SweepGating, ThresholdPsnr, DEFAULT_QP,
};
use cafbp_core::toy_codec::{QuantParams, SequenceStream};
use clap::{Args, Parser, Subcommand};

use io::{read_sequence, write_file, write_sequence, RawArgs};

#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "cafbp", version, about = "Block-matching denoiser, learned coding gate and toy intra codec")]
struct Cli {
    /// Worker threads (default: all cores); results do not depend on it
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for network initialization
    #[arg(long, global = true, env = "CAFBP_SEED", default_value_t = 42)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Two-pass collaborative denoising of the luma planes
    Denoise {
        input: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        filter: FilterArgs,
        #[command(flatten)]
        raw: RawArgs,
    },
    /// Train a coding-gate network on a sequence
    Train {
        input: PathBuf,
        /// Model file to write (JSON)
        model: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[command(flatten)]
        training: TrainingArgs,
        #[command(flatten)]
        raw: RawArgs,
    },
    /// Filter, gate and code a sequence
    Encode {
        input: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[command(flatten)]
        gate: GateArgs,
        #[command(flatten)]
        training: TrainingArgs,
        /// Write the report here instead of standard output
        #[arg(long)]
        report: Option<PathBuf>,
        /// Also write a one-row RD CSV
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        raw: RawArgs,
    },
    /// Decode a .cfbp stream
    Decode { input: PathBuf, output: PathBuf },
    /// Sweep quantizers and write an RD CSV
    Rd {
        input: PathBuf,
        output: PathBuf,
        /// Comma-separated QP list
        #[arg(long, value_delimiter = ',', default_value = "22,26,30,34,38")]
        qps: Vec<u8>,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[command(flatten)]
        gate: GateArgs,
        #[command(flatten)]
        training: TrainingArgs,
        #[command(flatten)]
        raw: RawArgs,
    },
    /// PSNR in dB between two sequences (luma, pooled over frames)
    Psnr {
        a: PathBuf,
        b: PathBuf,
        /// Also print the chroma values
        #[arg(long)]
        all_planes: bool,
        #[command(flatten)]
        raw: RawArgs,
    },
}

#[derive(Debug, Clone, Args)]
struct FilterArgs {
    /// Noise standard deviation
    #[arg(long, default_value_t = 25.0)]
    sigma: f64,
    /// Hard-threshold multiplier
    #[arg(long, alias = "lambda3d", default_value_t = 2.7)]
    lambda_3d: f64,
    /// Block-matching search radius
    #[arg(long, default_value_t = 16)]
    search_radius: usize,
    /// Reference block step
    #[arg(long, default_value_t = 3)]
    step: usize,
    /// Neighbouring frames searched on each side
    #[arg(long, default_value_t = 1)]
    temporal_depth: usize,
    /// Match threshold, first pass
    #[arg(long, default_value_t = 3000.0)]
    match_threshold1: f64,
    /// Match threshold, second pass
    #[arg(long, default_value_t = 400.0)]
    match_threshold2: f64,
    /// Group size cap, first pass
    #[arg(long, default_value_t = 16)]
    group_size1: usize,
    /// Group size cap, second pass
    #[arg(long, default_value_t = 32)]
    group_size2: usize,
    /// Edge energy above which the match threshold is halved
    #[arg(long, default_value_t = MatchParams::DEFAULT_EDGE_TAU)]
    edge_tau: f64,
    /// Disable edge-adaptive matching
    #[arg(long)]
    no_edge_adapt: bool,
    /// Cap on filter passes per frame
    #[arg(long, default_value_t = 4)]
    max_iters: usize,
}

impl FilterArgs {
    fn params(&self) -> FilterParams {
        let tau = (!self.no_edge_adapt).then_some(self.edge_tau);
        let pass = |threshold, group| MatchParams {
            search_radius: self.search_radius,
            max_group_size: group,
            match_threshold: threshold,
            temporal_depth: self.temporal_depth,
            step: self.step,
            edge_tau: tau,
        };
        FilterParams {
            sigma: self.sigma,
            lambda_3d: self.lambda_3d,
            pass1: pass(self.match_threshold1, self.group_size1),
            pass2: pass(self.match_threshold2, self.group_size2),
            max_pipeline_iters: self.max_iters,
        }
    }
}

#[derive(Debug, Clone, Args)]
struct PipelineArgs {
    #[command(flatten)]
    filter: FilterArgs,
    /// Quantization parameter, 0..=51
    #[arg(long, default_value_t = DEFAULT_QP)]
    qp: i64,
    /// Variance cutoffs for 64/32/16/8 blocks
    #[arg(long, value_delimiter = ',', default_value = "50,300,1200")]
    var_thresholds: Vec<f64>,
    /// Filter-loop PSNR threshold in dB, or `auto`
    #[arg(long, default_value = "auto")]
    threshold_psnr: String,
    /// Re-filter at full sigma instead of halving it each iteration
    #[arg(long)]
    no_sigma_decay: bool,
    /// Code the input without filtering
    #[arg(long)]
    no_filter: bool,
    /// Lagrange multiplier (default 0.85 * step^2)
    #[arg(long)]
    lambda_rd: Option<f64>,
    /// Gate output at or above which a block is coded
    #[arg(long, default_value_t = 0.5)]
    gate_cutoff: f64,
}

#[derive(Debug, Clone, Args)]
struct TrainingArgs {
    /// Hidden units in the gate network
    #[arg(long, default_value_t = 8)]
    hidden: usize,
    /// Learning rate
    #[arg(long, default_value_t = 0.5)]
    eta: f64,
    /// Stop once the epoch mean squared error reaches this
    #[arg(long, default_value_t = 0.02)]
    error_goal: f64,
    /// Epoch cap
    #[arg(long, default_value_t = 5000)]
    max_epochs: usize,
}

#[derive(Debug, Clone, Args)]
struct GateArgs {
    /// Gate blocks with a trained model
    #[arg(long, conflicts_with = "train_gate")]
    gate_model: Option<PathBuf>,
    /// Train a gate on the input first (per QP for `rd`)
    #[arg(long)]
    train_gate: bool,
}

fn config(p: &PipelineArgs, t: &TrainingArgs, seed: u64) -> Result<PipelineConfig> {
    let usage = |m: String| anyhow::Error::from(UsageError(m));
    let quant = QuantParams::new(p.qp).map_err(|e| usage(e.to_string()))?;
    let v = &p.var_thresholds;
    if v.len() != 3 {
        return Err(usage(format!("--var-thresholds takes three values, got {}", v.len())));
    }
    let thresholds = VarianceThresholds::new(v[0], v[1], v[2]).map_err(|e| usage(e.to_string()))?;
    let threshold_psnr = if p.threshold_psnr == "auto" {
        ThresholdPsnr::Auto
    } else {
        ThresholdPsnr::Fixed(
            p.threshold_psnr
                .parse()
                .map_err(|_| usage(format!("--threshold-psnr `{}` is not a number or `auto`", p.threshold_psnr)))?,
        )
    };
    let c = PipelineConfig {
        filter: p.filter.params(),
        filtering: !p.no_filter,
        sigma_decay: !p.no_sigma_decay,
        quant,
        thresholds,
        threshold_psnr,
        gate_model: None,
        gate_cutoff: p.gate_cutoff,
        lambda_rd: p.lambda_rd,
        training: GateTraining {
            hidden: t.hidden,
            eta: t.eta,
            error_goal: t.error_goal,
            max_epochs: t.max_epochs,
        },
        seed,
    };
    c.validate().map_err(|e| usage(e.to_string()))?;
    Ok(c)
}

fn load_model(path: &PathBuf) -> Result<Network> {
    Network::load(path).with_context(|| format!("loading gate model {}", path.display()))
}

fn denoise(input: &PathBuf, output: &PathBuf, filter: &FilterArgs, raw: &RawArgs) -> Result<()> {
    let p = filter.params();
    p.validate().map_err(|e| UsageError(e.to_string()))?;
    let seq = read_sequence(input, raw)?;
    let frames = denoise_sequence(&seq.frames, &p)?;
    let out = VideoSequence::new(frames, seq.frame_rate, seq.chroma)?;
    write_sequence(output, &out)
}

fn psnr_line(a: &VideoSequence, b: &VideoSequence, all: bool) -> Result<String> {
    if a.len() != b.len() || a.dims() != b.dims() {
        anyhow::bail!("sequences differ in frame count or size");
    }
    let y = sequence_psnr(a.frames.iter().zip(&b.frames))?;
    if !all {
        return Ok(y.to_string());
    }
    match (&a.chroma, &b.chroma) {
        (Some(ca), Some(cb)) => {
            let u = sequence_psnr(ca.iter().zip(cb).map(|(p, q)| (&p[0], &q[0])))?;
            let v = sequence_psnr(ca.iter().zip(cb).map(|(p, q)| (&p[1], &q[1])))?;
            Ok(format!("{y} {u} {v}"))
        }
        _ => Ok(y.to_string()),
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(UsageError("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("starting the thread pool")?;
    }
    match &cli.command {
        Command::Denoise { input, output, filter, raw } => denoise(input, output, filter, raw),
        Command::Train {
            input,
            model,
            pipeline,
            training,
            raw,
        } => {
            let c = config(pipeline, training, cli.seed)?;
            let seq = read_sequence(input, raw)?;
            let prepared = prepare(&seq, &c)?;
            let (net, s) = train_gate_prepared(&prepared, &c)?;
            net.save(model).with_context(|| format!("writing {}", model.display()))?;
            println!("patterns: {}", s.patterns);
            println!("code_labels: {}", s.positives);
            println!("epochs: {}", s.epochs);
            println!("final_mse: {:.6}", s.final_mse);
            println!("accuracy: {:.4}", s.accuracy);
            Ok(())
        }
        Command::Encode {
            input,
            output,
            pipeline,
            gate,
            training,
            report,
            csv,
            raw,
        } => {
            let mut c = config(pipeline, training, cli.seed)?;
            let seq = read_sequence(input, raw)?;
            let prepared = prepare(&seq, &c)?;
            if let Some(path) = &gate.gate_model {
                c.gate_model = Some(load_model(path)?);
            } else if gate.train_gate {
                c.gate_model = Some(train_gate_prepared(&prepared, &c)?.0);
            }
            c.validate().map_err(|e| UsageError(e.to_string()))?;
            let run = run_prepared(prepared, &c)?;
            write_file(output, run.stream.to_bytes()?)?;
            let text = run.report.to_string();
            match report {
                Some(path) => write_file(path, text)?,
                None => print!("{text}"),
            }
            if let Some(path) = csv {
                write_file(path, rd_csv(&[run.rd], seq.frame_rate, seq.len())?)?;
            }
            Ok(())
        }
        Command::Decode { input, output } => {
            let bytes = std::fs::read(input).with_context(|| format!("reading {}", input.display()))?;
            let (_, seq) = SequenceStream::decode(&bytes).with_context(|| format!("decoding {}", input.display()))?;
            write_sequence(output, &seq)
        }
        Command::Rd {
            input,
            output,
            qps,
            pipeline,
            gate,
            training,
            raw,
        } => {
            let c = config(pipeline, training, cli.seed)?;
            if let Some(bad) = qps.iter().find(|&&q| QuantParams::new(q as i64).is_err()) {
                return Err(UsageError(format!("qp {bad} outside 0..=51")).into());
            }
            let seq = read_sequence(input, raw)?;
            let model = gate.gate_model.as_ref().map(load_model).transpose()?;
            let gating = match (&model, gate.train_gate) {
                (Some(net), _) => SweepGating::Model(net),
                (None, true) => SweepGating::TrainPerQp,
                (None, false) => SweepGating::AllOpen,
            };
            let points = rd_sweep(&seq, &c, qps, gating)?;
            emit_rd_csv(&points, seq.frame_rate, seq.len(), output)?;
            Ok(())
        }
        Command::Psnr { a, b, all_planes, raw } => {
            let sa = read_sequence(a, raw)?;
            let sb = read_sequence(b, raw)?;
            println!("{}", psnr_line(&sa, &sb, *all_planes)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
