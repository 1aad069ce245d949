//! Command-line front end: analyze / plan / simulate / verify.
//!
//! Every subcommand is a thin wrapper over the library; emitted CSV and
//! JSON come from the library renderers, so CLI output and library results
//! cannot diverge. Runs are deterministic: synthetic weights and random
//! inputs derive from the `--seed` flag.
//!
//! Exit codes: 0 success, 1 verification mismatch, 2 infeasible plan or
//! simulation, 3 input error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use blockconv::graph::{
    self, feature_map_volumes, load_network, preset, stride_to_pool_rewrite, NetworkDesc,
    VolumeUnit,
};
use blockconv::planner::{
    explore, fusion_blocking_plan, BlockingStyle, ExploreConfig, FusionPlan, HardwareBudget,
};
use blockconv::sim::{
    simulate_baseline, simulate_baseline_shapes, simulate_fused, simulate_fused_shapes,
    BaselineOptions, Tiling,
};
use blockconv::{io as tio, BlockingPlan, Dims, NetWeights, ScalarFormat, SimError, Tensor4D};

#[derive(Parser)]
#[command(
    name = "blockconv",
    version,
    about = "Block convolution: feature-map analysis, fusion planning, and functional dataflow simulation with exact off-chip traffic accounting"
)]
struct Cli {
    /// Seed for synthetic weights and random inputs.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-conv-layer output feature-map volumes as CSV.
    Analyze(AnalyzeArgs),
    /// Brute-force fusion-plan exploration under a hardware budget.
    Plan(PlanArgs),
    /// Run the fused or baseline dataflow simulator.
    Simulate(SimulateArgs),
    /// Compare two tensor files bit for bit.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct NetArgs {
    /// Network description: a JSON file path or `preset:<name>` where
    /// name is one of vgg16-conv, vdsr, resnet18-conv, mobilenet-v1-conv.
    #[arg(long)]
    network: String,
    /// Override the activation format to `fixed(bits, bits/2)`.
    #[arg(long)]
    act_bits: Option<u32>,
    /// Override the weight format to `fixed(bits, bits/2)`.
    #[arg(long)]
    weight_bits: Option<u32>,
    /// Rewrite strided convolutions to stride 1 plus max pooling first.
    #[arg(long)]
    stride_to_pool: bool,
}

impl NetArgs {
    fn load(&self) -> Result<NetworkDesc> {
        let mut net = if let Some(name) = self.network.strip_prefix("preset:") {
            preset(name).with_context(|| format!("unknown preset {name}"))?
        } else {
            let json = fs::read_to_string(&self.network)
                .with_context(|| format!("reading {}", self.network))?;
            load_network(&json).context("parsing network description")?
        };
        if let Some(bits) = self.act_bits {
            net.activation_format = ScalarFormat::fixed(bits, bits / 2)?;
        }
        if let Some(bits) = self.weight_bits {
            net.weight_format = ScalarFormat::fixed(bits, bits / 2)?;
        }
        if self.stride_to_pool {
            net = stride_to_pool_rewrite(&net);
        }
        net.infer_shapes().context("network shape inference")?;
        Ok(net)
    }
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    net: NetArgs,
    #[arg(long, value_enum, default_value_t = UnitArg::Mbits)]
    unit: UnitArg,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, ValueEnum)]
enum UnitArg {
    Mbits,
    Mbytes,
}

impl From<UnitArg> for VolumeUnit {
    fn from(u: UnitArg) -> VolumeUnit {
        match u {
            UnitArg::Mbits => VolumeUnit::Mbits,
            UnitArg::Mbytes => VolumeUnit::MBytes,
        }
    }
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    net: NetArgs,
    /// Hardware budget JSON ({"bram_bits":..,"n_pe":..,"activation_bits":..,
    /// "weight_buffer_bits":..}).
    #[arg(long)]
    budget: PathBuf,
    /// Candidate entry tiles, e.g. "14x14,28x14,28x28".
    #[arg(long)]
    tiles: String,
    /// Model a third intermediate buffer for block prefetch.
    #[arg(long)]
    prefetch: bool,
    /// Enumeration cap on fusion units.
    #[arg(long, default_value_t = 20)]
    max_units: usize,
    /// Write the full plan CSV here instead of stdout.
    #[arg(long)]
    out_csv: Option<PathBuf>,
    /// Write the best feasible plan (with its score) as JSON.
    #[arg(long)]
    best_plan: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    net: NetArgs,
    #[arg(long, value_enum, default_value_t = ModeArg::Fused)]
    mode: ModeArg,
    /// Fusion plan: a JSON file or `single-group:TRxTC` (fused mode).
    #[arg(long)]
    plan: Option<String>,
    /// Blocking style for the `single-group:` shorthand.
    #[arg(long, value_enum, default_value_t = StyleArg::Fixed)]
    style: StyleArg,
    /// Blocking plan JSON; derived from the fusion plan when omitted.
    #[arg(long)]
    blocking: Option<PathBuf>,
    /// Hardware budget JSON (fused mode).
    #[arg(long)]
    budget: Option<PathBuf>,
    /// Baseline spatial tiling, e.g. "27x48".
    #[arg(long)]
    tiling: Option<String>,
    /// Baseline channel tiling, e.g. "64x64"; defaults to full channels.
    #[arg(long)]
    channel_tiles: Option<String>,
    /// Skip overhead accounting of halo reads and channel re-reads.
    #[arg(long)]
    no_halo: bool,
    /// Fuse the first two convolution passes (baseline accounting).
    #[arg(long)]
    fuse_head: bool,
    /// A final residual add against the network input runs host-side.
    #[arg(long)]
    host_residual: bool,
    /// Model a prefetch buffer (fused mode).
    #[arg(long)]
    prefetch: bool,
    /// Traffic and trace only, no tensor arithmetic.
    #[arg(long)]
    shapes_only: bool,
    /// Input tensor file, or `random` for a seeded one.
    #[arg(long, default_value = "random")]
    input: String,
    /// Write the output tensor here.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Write the traffic CSV here instead of stdout.
    #[arg(long)]
    traffic_csv: Option<PathBuf>,
    /// Write the phase trace as JSON lines.
    #[arg(long)]
    trace_jsonl: Option<PathBuf>,
}

#[derive(Copy, Clone, ValueEnum)]
enum ModeArg {
    Fused,
    Baseline,
}

#[derive(Copy, Clone, ValueEnum)]
enum StyleArg {
    Fixed,
    Hierarchical,
}

#[derive(Args)]
struct VerifyArgs {
    a: PathBuf,
    b: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Analyze(args) => cmd_analyze(args),
        Command::Plan(args) => cmd_plan(args),
        Command::Simulate(args) => cmd_simulate(args, cli.seed),
        Command::Verify(args) => cmd_verify(args),
    }
}

fn emit(out: Option<&Path>, content: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, content).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{content}"),
    }
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<ExitCode> {
    let net = args.net.load()?;
    let volumes = feature_map_volumes(&net)?;
    let csv = graph::volumes_to_csv(&volumes, args.unit.into());
    emit(args.out.as_deref(), &csv)?;
    Ok(ExitCode::SUCCESS)
}

fn parse_tile(s: &str) -> Result<(usize, usize)> {
    let (a, b) = s
        .split_once('x')
        .ok_or_else(|| anyhow!("tile {s} must look like 14x14"))?;
    Ok((a.trim().parse()?, b.trim().parse()?))
}

fn cmd_plan(args: PlanArgs) -> Result<ExitCode> {
    let net = args.net.load()?;
    let budget_json = fs::read_to_string(&args.budget)
        .with_context(|| format!("reading {}", args.budget.display()))?;
    let budget = HardwareBudget::from_json(&budget_json).context("parsing budget")?;
    let tiles: Vec<(usize, usize)> = args
        .tiles
        .split(',')
        .map(parse_tile)
        .collect::<Result<_>>()?;
    let config = ExploreConfig { max_units: args.max_units, prefetch: args.prefetch };
    let result = explore(&net, &budget, &tiles, &config)?;
    emit(args.out_csv.as_deref(), &result.to_csv())?;
    match result.best() {
        Some(best) => {
            match &args.best_plan {
                Some(path) => fs::write(path, best.to_json())?,
                None => eprintln!(
                    "best plan: {} ({} cycles, {} on-chip bits)",
                    best.id, best.score.cycles, best.score.onchip_bits
                ),
            }
        }
        None => eprintln!("warning: no plan fits the budget of {} bits", budget.bram_bits),
    }
    Ok(ExitCode::SUCCESS)
}

fn load_input(net: &NetworkDesc, spec: &str, seed: u64) -> Result<Tensor4D> {
    if spec == "random" {
        let dims = Dims::new(1, net.input_shape.c, net.input_shape.h, net.input_shape.w);
        Ok(Tensor4D::seeded_random(dims, net.activation_format, seed))
    } else {
        tio::load_tensor(Path::new(spec)).with_context(|| format!("reading {spec}"))
    }
}

fn infeasible(err: &SimError) -> bool {
    matches!(
        err,
        SimError::BufferOverflow { .. }
            | SimError::PlanInconsistent { .. }
            | SimError::Plan(blockconv::PlanError::WeightTileTooLarge { .. })
    )
}

fn cmd_simulate(args: SimulateArgs, seed: u64) -> Result<ExitCode> {
    let net = args.net.load()?;
    let (traffic, trace, output) = match args.mode {
        ModeArg::Baseline => {
            let tiling_spec = args
                .tiling
                .as_deref()
                .ok_or_else(|| anyhow!("baseline mode needs --tiling TRxTC"))?;
            let (t_r, t_c) = parse_tile(tiling_spec)?;
            let shapes = net.infer_shapes()?;
            let max_ch = shapes.output.iter().map(|s| s.c).max().unwrap_or(1).max(net.input_shape.c);
            let (t_m, t_n) = match &args.channel_tiles {
                Some(s) => parse_tile(s)?,
                None => (max_ch, max_ch),
            };
            let opts = BaselineOptions {
                tiling: Tiling { t_r, t_c, t_m, t_n },
                halo: !args.no_halo,
                fuse_head: args.fuse_head,
                host_residual_output: args.host_residual,
            };
            if args.shapes_only {
                match simulate_baseline_shapes(&net, &opts) {
                    Ok((traffic, trace)) => (traffic, trace, None),
                    Err(e) if infeasible(&e) => {
                        eprintln!("infeasible: {e}");
                        return Ok(ExitCode::from(2));
                    }
                    Err(e) => return Err(e.into()),
                }
            } else {
                let weights = NetWeights::seeded(&net, seed)?;
                let input = load_input(&net, &args.input, seed)?;
                match simulate_baseline(&net, &weights, &input, &opts) {
                    Ok(sim) => (sim.traffic, sim.trace, Some(sim.output)),
                    Err(e) if infeasible(&e) => {
                        eprintln!("infeasible: {e}");
                        return Ok(ExitCode::from(2));
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        }
        ModeArg::Fused => {
            let plan_spec = args
                .plan
                .as_deref()
                .ok_or_else(|| anyhow!("fused mode needs --plan <file|single-group:TRxTC>"))?;
            let plan = if let Some(tile) = plan_spec.strip_prefix("single-group:") {
                let tile = parse_tile(tile)?;
                let style = match args.style {
                    StyleArg::Fixed => BlockingStyle::Fixed,
                    StyleArg::Hierarchical => BlockingStyle::Hierarchical,
                };
                FusionPlan::single_group(&net, tile, style)
            } else {
                let json = fs::read_to_string(plan_spec).with_context(|| format!("reading {plan_spec}"))?;
                FusionPlan::from_json(&json).context("parsing fusion plan")?
            };
            let budget_path = args
                .budget
                .as_ref()
                .ok_or_else(|| anyhow!("fused mode needs --budget"))?;
            let budget_json = fs::read_to_string(budget_path)
                .with_context(|| format!("reading {}", budget_path.display()))?;
            let budget = HardwareBudget::from_json(&budget_json).context("parsing budget")?;
            let blocking = match &args.blocking {
                Some(path) => {
                    let json = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                    BlockingPlan::from_json(&json).context("parsing blocking plan")?
                }
                None => fusion_blocking_plan(&net, &plan).context("deriving the blocking plan")?,
            };
            let opts = blockconv::sim::FusedOptions {
                prefetch: args.prefetch,
                host_residual_output: args.host_residual,
            };
            if args.shapes_only {
                match simulate_fused_shapes(&net, &plan, &blocking, &budget, opts) {
                    Ok((traffic, trace)) => (traffic, trace, None),
                    Err(e) if infeasible(&e) => {
                        eprintln!("infeasible: {e}");
                        return Ok(ExitCode::from(2));
                    }
                    Err(e) => return Err(e.into()),
                }
            } else {
                let weights = NetWeights::seeded(&net, seed)?;
                let input = load_input(&net, &args.input, seed)?;
                match simulate_fused(&net, &weights, &input, &plan, &blocking, &budget, opts) {
                    Ok(sim) => (sim.traffic, sim.trace, Some(sim.output)),
                    Err(e) if infeasible(&e) => {
                        eprintln!("infeasible: {e}");
                        return Ok(ExitCode::from(2));
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        }
    };
    if let (Some(path), Some(tensor)) = (&args.output, &output) {
        tio::save_tensor(path, tensor)?;
    }
    emit(args.traffic_csv.as_deref(), &traffic.to_csv())?;
    if let Some(path) = &args.trace_jsonl {
        fs::write(path, trace.to_jsonl())?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(args: VerifyArgs) -> Result<ExitCode> {
    let a = tio::load_tensor(&args.a).with_context(|| format!("reading {}", args.a.display()))?;
    let b = tio::load_tensor(&args.b).with_context(|| format!("reading {}", args.b.display()))?;
    match blockconv::sim::verify_equivalence(&a, &b) {
        Ok(blockconv::sim::VerifyResult::Pass) => {
            println!("PASS: {} values identical", a.dims.len());
            Ok(ExitCode::SUCCESS)
        }
        Ok(blockconv::sim::VerifyResult::Mismatch { index, left, right }) => {
            println!("FAIL: first mismatch at index {index}: {left} != {right}");
            Ok(ExitCode::from(1))
        }
        Err(err) => {
            println!("FAIL: {err}");
            Ok(ExitCode::from(1))
        }
    }
}
