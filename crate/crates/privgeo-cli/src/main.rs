//! Batch front end for the privgeo toolkit.
//!
//! One subcommand per pipeline: datasets come in as CSV or JSONL matrices,
//! results go out as a single versioned JSON report on stdout, and failures
//! exit with code 2 (broken precondition) or 3 (capacity cap). Every run is
//! deterministic given `--seed` and the arguments; wall-clock time is the
//! only report field that varies.

mod data;

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use serde_json::{json, Value};

use data::{load_dataset, load_labeled, Format};
use privgeo::apps::{self, MarginInstance, OneClusterInstance};
use privgeo::closestpair::{CPConfig, CPState};
use privgeo::clustering::{
    cluster_high_dim, nonprivate_solver, private_coreset, ClusteringInstance,
};
use privgeo::config::{Ctx, Tunables};
use privgeo::densestball::{densest_ball_high_dim, BallInstance};
use privgeo::dpcore::{Mode, PrivacyBudget};
use privgeo::error::{contract, Result};
use privgeo::geom;
use privgeo::lattice::{relevant_vectors, LatticeBackend};

// --- argument surface ------------------------------------------------------

#[derive(Parser)]
#[command(name = "privgeo", version, about = "Differentially private geometric clustering toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// RNG seed; falls back to the PRIVGEO_SEED environment variable, then 0.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for data-parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(flatten)]
    consts: ConstOverrides,
}

#[derive(Subcommand)]
enum Command {
    /// Find a dense ball: a center whose (1+alpha)r-ball holds nearly as
    /// many points as the best r-ball.
    DensestBall(DensestBallArgs),
    /// Inverse dense-ball search: smallest radius holding about the target
    /// count, or a bottom report when nothing qualifies.
    OneCluster(OneClusterArgs),
    /// Private k-clustering of a unit-ball dataset.
    Kcluster(KclusterArgs),
    /// Private weighted surrogate (coreset) for k-clustering.
    Coreset(CoresetArgs),
    /// Learn a separating halfspace from ±1-labeled margin data.
    Halfspace(HalfspaceArgs),
    /// Replay an insert/delete/query stream through the closest-pair
    /// tracker.
    ClosestPair(ClosestPairArgs),
    /// Time the private clustering pipeline over a small size grid.
    Bench(BenchArgs),
    /// Report the parameters of the cover lattice at a given dimension.
    LatticeInspect(LatticeInspectArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Input dataset path.
    #[arg(long)]
    input: PathBuf,
    /// Input format.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Rescale the whole file by its maximum row norm when that exceeds 1.
    #[arg(long)]
    normalize: bool,
}

#[derive(Args)]
struct BudgetArgs {
    /// Privacy parameter ε (> 0).
    #[arg(long)]
    eps: f64,
    /// Privacy parameter δ; 0 selects pure DP.
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    /// Failure probability β for the utility guarantees.
    #[arg(long, default_value_t = 0.05)]
    beta: f64,
}

impl BudgetArgs {
    fn budget(&self) -> Result<PrivacyBudget> {
        PrivacyBudget::approx(self.eps, self.delta, self.beta)
    }
    fn as_json(&self) -> Value {
        json!({"eps": self.eps, "delta": self.delta, "beta": self.beta})
    }
}

#[derive(Args)]
struct DensestBallArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Reference ball radius in (0, 1].
    #[arg(long)]
    r: f64,
    /// Radius slack: the returned ball has radius (1+alpha)·r.
    #[arg(long)]
    alpha: f64,
    #[command(flatten)]
    budget: BudgetArgs,
}

#[derive(Args)]
struct OneClusterArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Target number of points the ball should hold.
    #[arg(long)]
    target: usize,
    /// Resolution floor: radii below this are not distinguished.
    #[arg(long)]
    kappa: f64,
    /// Radius step of the search schedule, in (1, 2].
    #[arg(long, default_value_t = 1.5)]
    w: f64,
    /// Lower end of the radius search range (default: kappa).
    #[arg(long)]
    r_low: Option<f64>,
    /// Upper end of the radius search range (default: 1).
    #[arg(long)]
    r_high: Option<f64>,
    #[command(flatten)]
    budget: BudgetArgs,
}

#[derive(Args)]
struct KclusterArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Number of centers.
    #[arg(long)]
    k: usize,
    /// Cost exponent; distances enter the objective as dist^p.
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    /// Target multiplicative accuracy in (0, 1].
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[command(flatten)]
    budget: BudgetArgs,
}

#[derive(Args)]
struct CoresetArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Number of centers the surrogate must serve.
    #[arg(long)]
    k: usize,
    /// Cost exponent.
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    /// Target multiplicative accuracy in (0, 1].
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[command(flatten)]
    budget: BudgetArgs,
}

#[derive(Args)]
struct HalfspaceArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Guaranteed margin of the labeled data, in (0, 1).
    #[arg(long)]
    mu: f64,
    /// Admissible excess classification error of the learned separator.
    #[arg(long, default_value_t = 0.1)]
    excess: f64,
    #[command(flatten)]
    budget: BudgetArgs,
}

#[derive(Args)]
struct ClosestPairArgs {
    /// Point dimension (1..=8).
    #[arg(long)]
    d: usize,
    /// Coordinates range over the integers in [0, 2^l_bits].
    #[arg(long)]
    l_bits: u32,
    /// Squared-distance threshold defining a close pair.
    #[arg(long)]
    xi: u128,
    /// Op stream: one `I x1..xd`, `D x1..xd`, or `Q` per line.
    #[arg(long)]
    stream: PathBuf,
    /// Print one 0/1 line per query instead of a JSON report.
    #[arg(long)]
    raw: bool,
    /// Write the canonical serialized state to this path after the replay.
    #[arg(long)]
    state_out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Dataset sizes to time.
    #[arg(long, value_delimiter = ',', default_values_t = [400usize, 1600])]
    n: Vec<usize>,
    /// Dimensions to time.
    #[arg(long = "dims", value_delimiter = ',', default_values_t = [2usize, 8])]
    dims: Vec<usize>,
    /// Center counts to time.
    #[arg(long, value_delimiter = ',', default_values_t = [2usize, 4])]
    k: Vec<usize>,
    /// Privacy parameter ε per run.
    #[arg(long, default_value_t = 1.0)]
    eps: f64,
}

#[derive(Args)]
struct LatticeInspectArgs {
    /// Lattice dimension.
    #[arg(long)]
    d: usize,
    /// Lattice scale (shortest vector length).
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Use the planar hexagonal lattice even when d = 2 would allow it;
    /// otherwise the scaled integer grid is used for d ≠ 2.
    #[arg(long)]
    hex: bool,
}

/// Overrides for the tunable constants; defaults live in the library.
#[derive(Args, Clone, Default)]
struct ConstOverrides {
    /// Max dimension served by the direct low-dimensional cover path.
    #[arg(long = "const-low-dim-limit", global = true)]
    low_dim_limit: Option<usize>,
    /// Cap on the decoder offset-set size before a capacity error.
    #[arg(long = "const-decode-set-cap", global = true)]
    decode_set_cap: Option<usize>,
    /// Multiplier in the dense-ball projection dimension formula.
    #[arg(long = "const-ball-dim", global = true)]
    ball_dim: Option<f64>,
    /// Hard override of the dense-ball projection dimension.
    #[arg(long = "const-ball-dim-override", global = true)]
    ball_dim_override: Option<usize>,
    /// Replace the dense-ball dimension multiplier with the aggressive 20.
    #[arg(long = "const-aggressive-dims", global = true)]
    aggressive_dims: bool,
    /// Block-size constant of the pure-mode block center solver.
    #[arg(long = "const-block-pure", global = true)]
    block_pure: Option<f64>,
    /// Block-size constant of the approximate-mode block center solver.
    #[arg(long = "const-block-apx", global = true)]
    block_apx: Option<f64>,
    /// Direct per-block dimension target.
    #[arg(long = "const-block-dim-override", global = true)]
    block_dim_override: Option<usize>,
    /// Override the refinement grid parameter ζ.
    #[arg(long = "const-zeta-override", global = true)]
    zeta_override: Option<f64>,
    /// Multiplier in the clustering projection dimension formula.
    #[arg(long = "const-cluster-dim", global = true)]
    cluster_dim: Option<f64>,
    /// Hard override of the clustering projection dimension.
    #[arg(long = "const-cluster-dim-override", global = true)]
    cluster_dim_override: Option<usize>,
    /// Cap on enumerated k-subsets in the discrete selection solver.
    #[arg(long = "const-em-tuple-cap", global = true)]
    em_tuple_cap: Option<u128>,
    /// Multiplier in the halfspace projection dimension formula.
    #[arg(long = "const-halfspace-dim", global = true)]
    halfspace_dim: Option<f64>,
    /// Multiplier in the halfspace sample floor formula.
    #[arg(long = "const-halfspace-sample", global = true)]
    halfspace_sample: Option<f64>,
    /// Radius slack of the halfspace dense-ball call.
    #[arg(long = "const-halfspace-alpha", global = true)]
    halfspace_alpha: Option<f64>,
    /// Coefficient of the aggregation target count.
    #[arg(long = "const-stability-fraction", global = true)]
    stability_fraction: Option<f64>,
}

impl ConstOverrides {
    fn apply(&self, cfg: &mut Tunables) {
        macro_rules! set {
            ($src:ident, $dst:ident) => {
                if let Some(v) = self.$src {
                    cfg.$dst = v;
                }
            };
        }
        set!(low_dim_limit, low_dim_limit);
        set!(decode_set_cap, decode_set_cap);
        set!(ball_dim, ball_dim_const);
        set!(block_pure, block_const_pure);
        set!(block_apx, block_const_apx);
        set!(cluster_dim, cluster_dim_const);
        set!(em_tuple_cap, em_tuple_cap);
        set!(halfspace_dim, halfspace_dim_const);
        set!(halfspace_sample, halfspace_sample_const);
        set!(halfspace_alpha, halfspace_alpha);
        set!(stability_fraction, stability_fraction);
        if self.ball_dim_override.is_some() {
            cfg.ball_dim_override = self.ball_dim_override;
        }
        if self.block_dim_override.is_some() {
            cfg.block_dim_override = self.block_dim_override;
        }
        if self.zeta_override.is_some() {
            cfg.zeta_override = self.zeta_override;
        }
        if self.cluster_dim_override.is_some() {
            cfg.cluster_dim_override = self.cluster_dim_override;
        }
        if self.aggressive_dims {
            cfg.aggressive_dims = true;
        }
    }

    fn as_json(&self) -> Value {
        let mut set = serde_json::Map::new();
        macro_rules! record {
            ($field:ident, $name:literal) => {
                if let Some(v) = &self.$field {
                    set.insert($name.into(), json!(v));
                }
            };
        }
        record!(low_dim_limit, "low-dim-limit");
        record!(decode_set_cap, "decode-set-cap");
        record!(ball_dim, "ball-dim");
        record!(ball_dim_override, "ball-dim-override");
        record!(block_pure, "block-pure");
        record!(block_apx, "block-apx");
        record!(block_dim_override, "block-dim-override");
        record!(zeta_override, "zeta-override");
        record!(cluster_dim, "cluster-dim");
        record!(cluster_dim_override, "cluster-dim-override");
        record!(halfspace_dim, "halfspace-dim");
        record!(halfspace_sample, "halfspace-sample");
        record!(halfspace_alpha, "halfspace-alpha");
        record!(stability_fraction, "stability-fraction");
        if let Some(v) = &self.em_tuple_cap {
            set.insert("em-tuple-cap".into(), json!(v.to_string()));
        }
        if self.aggressive_dims {
            set.insert("aggressive-dims".into(), json!(true));
        }
        Value::Object(set)
    }
}

// --- report ----------------------------------------------------------------

#[derive(Serialize)]
struct BudgetSide {
    epsilon: f64,
    delta: f64,
}

#[derive(Serialize)]
struct BudgetReport {
    declared: BudgetSide,
    consumed: BudgetSide,
}

#[derive(Serialize)]
struct RunReport {
    schema: u32,
    command: String,
    parameters: Value,
    seed: u64,
    budget: BudgetReport,
    outputs: Value,
    wall_ms: f64,
}

/// What a handler returns: parameters echoed, outputs, declared budget.
struct Outcome {
    parameters: Value,
    outputs: Value,
    declared: (f64, f64),
}

// --- entry -----------------------------------------------------------------

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn resolve_seed(explicit: Option<u64>) -> Result<u64> {
    if let Some(s) = explicit {
        return Ok(s);
    }
    match std::env::var("PRIVGEO_SEED") {
        Ok(text) => text
            .parse::<u64>()
            .map_err(|_| contract(format!("PRIVGEO_SEED must be an unsigned integer, got {text:?}"))),
        Err(_) => Ok(0),
    }
}

fn run(cli: Cli) -> Result<()> {
    let seed = resolve_seed(cli.seed)?;
    if let Some(threads) = cli.threads {
        // Ignore a failure to reconfigure: the pool can only be set once
        // per process and the default is fine.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let mut cfg = Tunables::default();
    cli.consts.apply(&mut cfg);
    let constants = cli.consts.as_json();

    let start = Instant::now();
    let command_name = command_name(&cli.command);

    // The raw closest-pair mode bypasses the JSON report entirely.
    if let Command::ClosestPair(args) = &cli.command {
        if args.raw {
            let (responses, _, _) = replay_stream(args)?;
            let mut out = String::new();
            for r in responses {
                out.push(if r == 1 { '1' } else { '0' });
                out.push('\n');
            }
            print!("{out}");
            return Ok(());
        }
    }

    let mut ctx = Ctx::with(cfg.clone(), seed);
    let outcome = match &cli.command {
        Command::DensestBall(args) => cmd_densest_ball(args, &mut ctx)?,
        Command::OneCluster(args) => cmd_one_cluster(args, &mut ctx)?,
        Command::Kcluster(args) => cmd_kcluster(args, &mut ctx)?,
        Command::Coreset(args) => cmd_coreset(args, &mut ctx)?,
        Command::Halfspace(args) => cmd_halfspace(args, &mut ctx)?,
        Command::ClosestPair(args) => cmd_closest_pair(args)?,
        Command::Bench(args) => cmd_bench(args, &cfg, seed)?,
        Command::LatticeInspect(args) => cmd_lattice_inspect(args)?,
    };

    let consumed = match &cli.command {
        // Bench runs many contexts; its consumed side is folded into the
        // outcome by the handler (max over rows).
        Command::Bench(_) | Command::ClosestPair(_) | Command::LatticeInspect(_) => {
            bench_consumed(&outcome)
        }
        _ => ctx.ledger.consumed(),
    };

    let mut parameters = outcome.parameters;
    if let Value::Object(map) = &mut parameters {
        if !constants.as_object().map_or(true, |m| m.is_empty()) {
            map.insert("constants".into(), constants);
        }
    }

    let report = RunReport {
        schema: 1,
        command: command_name.to_string(),
        parameters,
        seed,
        budget: BudgetReport {
            declared: BudgetSide { epsilon: outcome.declared.0, delta: outcome.declared.1 },
            consumed: BudgetSide { epsilon: consumed.0, delta: consumed.1 },
        },
        outputs: outcome.outputs,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    let text = serde_json::to_string_pretty(&report)
        .map_err(|e| contract(format!("report serialization failed: {e}")))?;
    println!("{text}");
    Ok(())
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::DensestBall(_) => "densest-ball",
        Command::OneCluster(_) => "one-cluster",
        Command::Kcluster(_) => "kcluster",
        Command::Coreset(_) => "coreset",
        Command::Halfspace(_) => "halfspace",
        Command::ClosestPair(_) => "closest-pair",
        Command::Bench(_) => "bench",
        Command::LatticeInspect(_) => "lattice-inspect",
    }
}

/// Consumed-budget tally for handlers that annotate it into their outputs.
fn bench_consumed(outcome: &Outcome) -> (f64, f64) {
    let eps = outcome.outputs.get("consumed_eps").and_then(Value::as_f64).unwrap_or(0.0);
    let delta = outcome.outputs.get("consumed_delta").and_then(Value::as_f64).unwrap_or(0.0);
    (eps, delta)
}

// --- handlers --------------------------------------------------------------

fn input_json(input: &InputArgs, source: &str) -> Value {
    json!({
        "input": source,
        "format": format!("{:?}", input.format).to_lowercase(),
        "normalize": input.normalize,
    })
}

fn merge(base: Value, extra: Value) -> Value {
    let (Value::Object(mut a), Value::Object(b)) = (base, extra) else {
        unreachable!("parameter fragments are objects");
    };
    a.extend(b);
    Value::Object(a)
}

fn cmd_densest_ball(args: &DensestBallArgs, ctx: &mut Ctx) -> Result<Outcome> {
    let ds = load_dataset(&args.input.input, args.input.format, args.input.normalize)?;
    let budget = args.budget.budget()?;
    let mode = if budget.delta > 0.0 { Mode::Approx } else { Mode::Pure };
    let inst = BallInstance::with_dimension(ds.d, ds.points, args.r, args.alpha, budget)?;
    let ball = densest_ball_high_dim(&inst, mode, ctx)?;
    Ok(Outcome {
        parameters: merge(
            input_json(&args.input, &ds.source),
            merge(json!({"r": args.r, "alpha": args.alpha}), args.budget.as_json()),
        ),
        outputs: json!({
            "center": ball.center,
            "effective_radius": ball.effective_radius,
            "count": ball.count_inside,
            "n": ds.n,
            "d": ds.d,
        }),
        declared: (budget.epsilon, budget.delta),
    })
}

fn cmd_one_cluster(args: &OneClusterArgs, ctx: &mut Ctx) -> Result<Outcome> {
    let ds = load_dataset(&args.input.input, args.input.format, args.input.normalize)?;
    let budget = args.budget.budget()?;
    let r_low = args.r_low.unwrap_or(args.kappa);
    let r_high = args.r_high.unwrap_or(1.0);
    let inst = OneClusterInstance::new(
        ds.points,
        args.target,
        args.kappa,
        r_low,
        r_high,
        args.w,
        budget,
    )?;
    let threshold = apps::one_cluster_threshold(&inst, &ctx.cfg);
    let found = apps::one_cluster(&inst, ctx)?;
    let outputs = match found {
        Some((center, radius)) => json!({
            "found": true,
            "center": center,
            "radius": radius,
            "count_threshold": threshold,
        }),
        None => json!({
            "found": false,
            "center": Value::Null,
            "radius": Value::Null,
            "count_threshold": threshold,
        }),
    };
    Ok(Outcome {
        parameters: merge(
            input_json(&args.input, &ds.source),
            merge(
                json!({
                    "target": args.target,
                    "kappa": args.kappa,
                    "w": args.w,
                    "r_low": r_low,
                    "r_high": r_high,
                }),
                args.budget.as_json(),
            ),
        ),
        outputs,
        declared: (budget.epsilon, budget.delta),
    })
}

fn cmd_kcluster(args: &KclusterArgs, ctx: &mut Ctx) -> Result<Outcome> {
    let ds = load_dataset(&args.input.input, args.input.format, args.input.normalize)?;
    let budget = args.budget.budget()?;
    let inst = ClusteringInstance::new(ds.points, args.k, args.p, args.alpha, budget)?;
    let solution = cluster_high_dim(&inst, nonprivate_solver, ctx)?;
    Ok(Outcome {
        parameters: merge(
            input_json(&args.input, &ds.source),
            merge(
                json!({"k": args.k, "p": args.p, "alpha": args.alpha}),
                args.budget.as_json(),
            ),
        ),
        outputs: json!({
            "centers": solution.centers,
            "cost": solution.cost,
            "n": ds.n,
            "d": ds.d,
        }),
        declared: (budget.epsilon, budget.delta),
    })
}

fn cmd_coreset(args: &CoresetArgs, ctx: &mut Ctx) -> Result<Outcome> {
    let ds = load_dataset(&args.input.input, args.input.format, args.input.normalize)?;
    let budget = args.budget.budget()?;
    let inst = ClusteringInstance::new(ds.points, args.k, args.p, args.alpha, budget)?;
    let coreset = private_coreset(&inst, ctx)?;
    let total = coreset.total_weight();
    let points: Vec<Value> = coreset
        .points
        .iter()
        .map(|(x, w)| json!({"point": x, "weight": w}))
        .collect();
    Ok(Outcome {
        parameters: merge(
            input_json(&args.input, &ds.source),
            merge(
                json!({"k": args.k, "p": args.p, "alpha": args.alpha}),
                args.budget.as_json(),
            ),
        ),
        outputs: json!({
            "points": points,
            "size": coreset.points.len(),
            "total_weight": total,
            "n": ds.n,
            "d": ds.d,
        }),
        declared: (budget.epsilon, budget.delta),
    })
}

fn cmd_halfspace(args: &HalfspaceArgs, ctx: &mut Ctx) -> Result<Outcome> {
    let samples = load_labeled(&args.input.input, args.input.format)?;
    let budget = args.budget.budget()?;
    let n = samples.len();
    let d = samples.first().map_or(0, |(x, _)| x.len());
    let inst = MarginInstance::new(samples, args.mu, args.excess, budget)?;
    let normal = apps::learn_halfspace(&inst, ctx)?;
    Ok(Outcome {
        parameters: merge(
            input_json(&args.input, &args.input.input.display().to_string()),
            merge(json!({"mu": args.mu, "excess": args.excess}), args.budget.as_json()),
        ),
        outputs: json!({"normal": normal, "n": n, "d": d}),
        declared: (budget.epsilon, budget.delta),
    })
}

/// Parses and replays the op stream; returns per-query responses and the
/// final state (plus the op count).
fn replay_stream(args: &ClosestPairArgs) -> Result<(Vec<u8>, CPState, usize)> {
    let cfg = CPConfig::new(args.d, args.l_bits, args.xi)?;
    let text = std::fs::read_to_string(&args.stream)
        .map_err(|e| contract(format!("cannot read {}: {e}", args.stream.display())))?;
    let mut state = CPState::new(cfg);
    let mut responses = Vec::new();
    let mut ops = 0usize;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let mut fields = line.split_whitespace();
        let Some(op) = fields.next() else { continue };
        let parse_point = |fields: std::str::SplitWhitespace<'_>| -> Result<Vec<u64>> {
            let coords: Vec<u64> = fields
                .map(|f| {
                    f.parse::<u64>()
                        .map_err(|_| contract(format!("line {lineno}: bad coordinate {f:?}")))
                })
                .collect::<Result<_>>()?;
            if coords.len() != args.d {
                return Err(contract(format!(
                    "line {lineno}: got {} coordinates, expected {}",
                    coords.len(),
                    args.d
                )));
            }
            Ok(coords)
        };
        match op {
            "I" => state.insert(&parse_point(fields)?)?,
            "D" => state.delete(&parse_point(fields)?)?,
            "Q" => {
                if fields.next().is_some() {
                    return Err(contract(format!("line {lineno}: Q takes no arguments")));
                }
                responses.push(state.lookup() as u8);
            }
            other => {
                return Err(contract(format!(
                    "line {lineno}: unknown op {other:?} (expected I, D, or Q)"
                )))
            }
        }
        ops += 1;
    }
    if let Some(path) = &args.state_out {
        std::fs::write(path, state.serialize())
            .map_err(|e| contract(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok((responses, state, ops))
}

fn cmd_closest_pair(args: &ClosestPairArgs) -> Result<Outcome> {
    let (responses, state, ops) = replay_stream(args)?;
    Ok(Outcome {
        parameters: json!({
            "d": args.d,
            "l_bits": args.l_bits,
            "xi": args.xi.to_string(),
            "stream": args.stream.display().to_string(),
        }),
        outputs: json!({
            "responses": responses,
            "ops": ops,
            "q_marked": state.q_marked(),
            "p_total": state.p_total(),
        }),
        declared: (0.0, 0.0),
    })
}

fn cmd_bench(args: &BenchArgs, cfg: &Tunables, seed: u64) -> Result<Outcome> {
    let budget = PrivacyBudget::pure(args.eps, 0.05)?;
    let mut rows = Vec::new();
    let mut consumed_max = (0.0f64, 0.0f64);
    let mut row_index = 0u64;
    for &n in &args.n {
        for &d in &args.dims {
            for &k in &args.k {
                let row_seed = seed.wrapping_add(row_index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
                row_index += 1;
                let mut gen = ChaCha20Rng::seed_from_u64(row_seed ^ 0x5EED);
                let centers: Vec<Vec<f64>> =
                    (0..k).map(|_| geom::uniform_in_ball(d, 0.5, &mut gen)).collect();
                let points: Vec<Vec<f64>> = (0..n)
                    .map(|_| {
                        let c = &centers[gen.random_range(0..k)];
                        let jitter = geom::uniform_in_ball(d, 0.05, &mut gen);
                        c.iter().zip(&jitter).map(|(a, b)| a + b).collect()
                    })
                    .collect();
                let inst = ClusteringInstance::new(points, k, 2.0, 0.5, budget)?;
                let mut ctx = Ctx::with(cfg.clone(), row_seed);
                let t0 = Instant::now();
                let solution = cluster_high_dim(&inst, nonprivate_solver, &mut ctx)?;
                let wall_ms = t0.elapsed().as_secs_f64() * 1e3;
                let used = ctx.ledger.consumed();
                consumed_max = (consumed_max.0.max(used.0), consumed_max.1.max(used.1));
                rows.push(json!({
                    "n": n,
                    "d": d,
                    "k": k,
                    "wall_ms": wall_ms,
                    "cost": solution.cost,
                }));
            }
        }
    }
    Ok(Outcome {
        parameters: json!({
            "n": args.n,
            "dims": args.dims,
            "k": args.k,
            "eps": args.eps,
        }),
        outputs: json!({
            "rows": rows,
            "consumed_eps": consumed_max.0,
            "consumed_delta": consumed_max.1,
        }),
        declared: (args.eps, 0.0),
    })
}

fn cmd_lattice_inspect(args: &LatticeInspectArgs) -> Result<Outcome> {
    let backend = if args.hex || args.d == 2 {
        if args.d != 2 {
            return Err(contract("the hexagonal lattice exists only at d = 2"));
        }
        LatticeBackend::scaled_a_star(args.scale)?
    } else {
        LatticeBackend::scaled_integer(args.d, args.scale)?
    };
    let vectors = relevant_vectors(&backend)?;
    let listed: Vec<Value> = if vectors.len() <= 64 {
        vectors.iter().map(|v| json!(v.embedding)).collect()
    } else {
        Vec::new()
    };
    Ok(Outcome {
        parameters: json!({"d": args.d, "scale": args.scale, "hex": args.hex}),
        outputs: json!({
            "family": format!("{:?}", backend.family),
            "dimension": backend.dimension,
            "scale": backend.scale,
            "min_distance": backend.min_distance,
            "covering_radius": backend.covering_radius,
            "tau": backend.tau,
            "relevant_vector_count": vectors.len(),
            "relevant_vectors": listed,
        }),
        declared: (0.0, 0.0),
    })
}
