//! Command-line front end. `run` returns the process exit code:
//! 0 on success, 1 on a domain error, 2 on a usage error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::cost::{evaluate, DeviceProfile};
use crate::decision::{score, train, LrModel, LrTrainConfig};
use crate::error::Error;
use crate::gate::{Mode, Policy};
use crate::optimizer::{
    compare_strategies, optimize, pareto, qos_from_context, AccuracyRule, GridSpec, Objective, ParetoAxes, QosSpec,
};
use crate::report::{emit_report, parse_thresholds, Emit, Format};
use crate::trace::{generate_synthetic, load_trace, save_trace, SynthConfig, Trace};
use crate::wire::{self, DelayModel, Predictor};

#[derive(Debug, Parser)]
#[command(name = "hiedge", version, about = "Hierarchical-inference offload policies, early-exit gating and offload emulation")]
struct Cli {
    /// Worker threads for parallel sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a trace file against its schema and invariants.
    Validate {
        #[arg(long)]
        trace: PathBuf,
    },
    /// Generate a synthetic trace.
    Gen(GenArgs),
    /// Train the LR offload decider on a trace's final exit.
    TrainLr(TrainArgs),
    /// Evaluate one policy.
    Eval(EvalArgs),
    /// Brute-force EE-HI thresholds under QoS constraints.
    Optimize(OptimizeArgs),
    /// Pareto front of the EE-HI threshold grid.
    Pareto(ParetoArgs),
    /// Preferred strategy for each fixed QoS dimension.
    Compare(CompareArgs),
    /// Run the offload server.
    Serve(ServeArgs),
    /// Offload one payload and print the class and round-trip time.
    Offload(OffloadArgs),
    /// Measure round-trip statistics.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct SeedArg {
    #[arg(long, env = "HIEDGE_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// json or csv; guessed from --out's extension when omitted.
    #[arg(long)]
    format: Option<Format>,
}

impl OutputArgs {
    fn format(&self) -> Format {
        self.format
            .or_else(|| self.out.as_deref().map(Format::from_path))
            .unwrap_or(Format::Json)
    }
}

#[derive(Debug, Args)]
struct GenArgs {
    /// JSON SynthConfig; individual flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    classes: Option<usize>,
    /// Comma-separated per-exit accuracies, shallow to deep.
    #[arg(long, value_delimiter = ',')]
    exit_acc: Option<Vec<f64>>,
    #[arg(long)]
    server_acc: Option<f64>,
    #[arg(long)]
    separation: Option<f64>,
    #[arg(long, env = "HIEDGE_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct LrArgs {
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 1000)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 0.0)]
    l2: f64,
    #[arg(long)]
    class_weight: bool,
    #[arg(long)]
    random_init: bool,
    /// Accept-probability cutoff.
    #[arg(long, default_value_t = 0.5)]
    decision_threshold: f64,
}

impl LrArgs {
    fn config(&self, seed: u64) -> LrTrainConfig {
        LrTrainConfig {
            learning_rate: self.lr,
            max_epochs: self.epochs,
            tolerance: self.tol,
            l2: self.l2,
            class_weighting: self.class_weight,
            seed,
            random_init: self.random_init,
            decision_threshold: self.decision_threshold,
        }
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    lr: LrArgs,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Trained LR model (JSON).
    #[arg(long, conflicts_with = "train")]
    model: Option<PathBuf>,
    /// Train the LR on the evaluation trace instead of loading one.
    #[arg(long)]
    train: bool,
    #[command(flatten)]
    lr: LrArgs,
}

#[derive(Debug, Args)]
struct QosArgs {
    #[arg(long)]
    accuracy_floor: Option<f64>,
    #[arg(long)]
    latency_cap_ms: Option<f64>,
    #[arg(long)]
    energy_cap_mj: Option<f64>,
    /// Derive all three constraints from this state-of-the-art accuracy and
    /// the profile's offload cost. Explicit bounds above take precedence.
    #[arg(long)]
    sota: Option<f64>,
    /// absolute-10pts or relative-90pct.
    #[arg(long, default_value = "absolute-10pts")]
    rule: AccuracyRule,
}

impl QosArgs {
    fn resolve(&self, profile: &DeviceProfile) -> Option<QosSpec> {
        let derived = self
            .sota
            .map(|s| qos_from_context(s, profile.offload_latency_ms, profile.offload_energy_mj, self.rule))
            .unwrap_or_default();
        let qos = QosSpec {
            accuracy_floor: self.accuracy_floor.or(derived.accuracy_floor),
            latency_cap_ms: self.latency_cap_ms.or(derived.latency_cap_ms),
            energy_cap_mj: self.energy_cap_mj.or(derived.energy_cap_mj),
        };
        (qos != QosSpec::default()).then_some(qos)
    }
}

#[derive(Debug, Args)]
struct Inputs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    profile: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// on-device, remote, ee, hi or ee-hi.
    #[arg(long)]
    mode: Mode,
    /// Early-exit thresholds, comma or semicolon separated.
    #[arg(long, default_value = "")]
    thresholds: String,
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    qos: QosArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct OptimizeArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// lower:upper:step
    #[arg(long, default_value = "0.5:1.0:0.01")]
    grid: GridSpec,
    /// min-latency or min-energy.
    #[arg(long, default_value = "min-latency")]
    objective: Objective,
    #[command(flatten)]
    qos: QosArgs,
    /// Exit with status 1 when no grid point satisfies the QoS.
    #[arg(long)]
    strict: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct ParetoArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, default_value = "0.5:1.0:0.01")]
    grid: GridSpec,
    /// acc-latency or acc-energy.
    #[arg(long, default_value = "acc-latency")]
    axes: ParetoAxes,
    #[command(flatten)]
    qos: QosArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, default_value = "0.5:1.0:0.01")]
    grid: GridSpec,
    #[command(flatten)]
    qos: QosArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:9000")]
    bind: String,
    #[arg(long, default_value_t = 0.0)]
    delay_ms: f64,
    #[arg(long, default_value_t = 0.0)]
    jitter_ms: f64,
    /// const:N, lookup:FILE or trace:FILE.
    #[arg(long, default_value = "const:0")]
    predictor: String,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Debug, Args)]
struct OffloadArgs {
    #[arg(long)]
    connect: String,
    /// Random payload of this size.
    #[arg(long, default_value_t = 3072, conflicts_with = "payload_file")]
    payload_bytes: usize,
    /// Send this file's bytes instead of a random payload.
    #[arg(long)]
    payload_file: Option<PathBuf>,
    /// Address a trace sample (see `serve --predictor trace:FILE`).
    #[arg(long, conflicts_with = "payload_file")]
    sample_id: Option<u64>,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    connect: String,
    #[arg(long, default_value_t = 3072)]
    payload_bytes: usize,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[command(flatten)]
    seed: SeedArg,
    #[command(flatten)]
    output: OutputArgs,
}

/// Failure of a subcommand, split by exit code.
enum Failure {
    Domain(Error),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Domain(e)
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Parses `argv` (program name first) and runs the subcommand.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return 1;
        }
    };

    match pool.install(|| dispatch(cli.command)) {
        Ok(()) => 0,
        Err(Failure::Domain(e)) => {
            eprintln!("error: {e}");
            1
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            2
        }
    }
}

fn dispatch(command: Command) -> CmdResult {
    match command {
        Command::Validate { trace } => cmd_validate(&trace),
        Command::Gen(a) => cmd_gen(a),
        Command::TrainLr(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Optimize(a) => cmd_optimize(a),
        Command::Pareto(a) => cmd_pareto(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Serve(a) => cmd_serve(a),
        Command::Offload(a) => cmd_offload(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

fn cmd_validate(path: &Path) -> CmdResult {
    let trace = load_trace(path)?;
    let accs: Vec<String> = (0..trace.num_exits)
        .map(|k| format!("{:.4}", trace.exit_accuracy(k)))
        .collect();
    println!(
        "ok: {} records, {} classes, {} exits; exit accuracy [{}], server accuracy {:.4}",
        trace.len(),
        trace.num_classes,
        trace.num_exits,
        accs.join(", "),
        trace.server_accuracy()
    );
    Ok(())
}

fn cmd_gen(a: GenArgs) -> CmdResult {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str::<SynthConfig>(&text).map_err(|source| Error::Json {
                path: p.clone(),
                source,
            })?
        }
        None => SynthConfig {
            num_samples: 10_000,
            num_classes: 10,
            exit_accuracy: Vec::new(),
            server_accuracy: 0.99,
            separation: 4.0,
            seed: 0,
        },
    };
    if let Some(v) = a.samples {
        cfg.num_samples = v;
    }
    if let Some(v) = a.classes {
        cfg.num_classes = v;
    }
    if let Some(v) = a.exit_acc {
        cfg.exit_accuracy = v;
    }
    if let Some(v) = a.server_acc {
        cfg.server_accuracy = v;
    }
    if let Some(v) = a.separation {
        cfg.separation = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if cfg.exit_accuracy.is_empty() {
        return Err(Failure::Usage("--exit-acc (or --config) is required".into()));
    }
    let trace = generate_synthetic(&cfg)?;
    save_trace(&trace, &a.out)?;
    eprintln!("wrote {} records to {}", trace.len(), a.out.display());
    Ok(())
}

fn cmd_train(a: TrainArgs) -> CmdResult {
    let trace = load_trace(&a.trace)?;
    let model = train(&trace, &a.lr.config(a.seed.seed))?;
    model.save(&a.out)?;
    let s = score(&model, &trace);
    eprintln!(
        "trained: w = [{:.6}, {:.6}], b = {:.6}; training F1 {:.4} (P {:.4}, R {:.4})",
        model.weights[0], model.weights[1], model.bias, s.f1, s.precision, s.recall
    );
    Ok(())
}

struct Loaded {
    trace: Trace,
    profile: DeviceProfile,
    model: Option<LrModel>,
}

fn load_inputs(inputs: &Inputs, need_model: bool) -> std::result::Result<Loaded, Failure> {
    let trace = load_trace(&inputs.trace)?;
    let profile = DeviceProfile::load(&inputs.profile)?;
    let model = match (&inputs.model.model, inputs.model.train) {
        (Some(p), _) => Some(LrModel::load(p)?),
        (None, true) => Some(train(&trace, &inputs.model.lr.config(inputs.seed.seed))?),
        (None, false) if need_model => {
            return Err(Failure::Usage("this mode needs --model FILE or --train".into()));
        }
        (None, false) => None,
    };
    Ok(Loaded { trace, profile, model })
}

fn cmd_eval(a: EvalArgs) -> CmdResult {
    let thresholds = parse_thresholds(&a.thresholds).map_err(|e| Failure::Usage(e.to_string()))?;
    let loaded = load_inputs(&a.inputs, a.mode.needs_model())?;
    let policy = Policy::new(a.mode, thresholds);
    let report = evaluate(&loaded.trace, &policy, loaded.model.as_ref(), &loaded.profile)?;
    let qos = a.qos.resolve(&loaded.profile);
    emit_report(&Emit::Report(&report, qos.as_ref()), a.output.format(), a.output.out.as_deref())?;
    Ok(())
}

fn cmd_optimize(a: OptimizeArgs) -> CmdResult {
    let loaded = load_inputs(&a.inputs, true)?;
    let qos = a
        .qos
        .resolve(&loaded.profile)
        .ok_or_else(|| Failure::Usage("give at least one QoS bound or --sota".into()))?;
    let model = loaded.model.as_ref().expect("required above");
    let outcome = optimize(&loaded.trace, model, &loaded.profile, &qos, &a.grid, a.objective)?;
    emit_report(
        &Emit::Candidates(std::slice::from_ref(&outcome.best), Some(&qos)),
        a.output.format(),
        a.output.out.as_deref(),
    )?;
    if !outcome.feasible {
        eprintln!(
            "no feasible point among {} evaluated; reported the closest one",
            outcome.evaluated
        );
        if a.strict {
            return Err(Failure::Domain(Error::Config("QoS is infeasible on this grid".into())));
        }
    }
    Ok(())
}

fn cmd_pareto(a: ParetoArgs) -> CmdResult {
    let loaded = load_inputs(&a.inputs, true)?;
    let qos = a.qos.resolve(&loaded.profile);
    let model = loaded.model.as_ref().expect("required above");
    let front = pareto(&loaded.trace, model, &loaded.profile, &a.grid, a.axes)?;
    emit_report(&Emit::Candidates(&front, qos.as_ref()), a.output.format(), a.output.out.as_deref())?;
    Ok(())
}

fn cmd_compare(a: CompareArgs) -> CmdResult {
    let loaded = load_inputs(&a.inputs, true)?;
    let qos = a
        .qos
        .resolve(&loaded.profile)
        .ok_or_else(|| Failure::Usage("give at least one QoS bound or --sota".into()))?;
    let model = loaded.model.as_ref().expect("required above");
    let rows = compare_strategies(&loaded.trace, model, &loaded.profile, &qos, &a.grid)?;
    emit_report(&Emit::Compare(&rows), a.output.format(), a.output.out.as_deref())?;
    Ok(())
}

fn parse_predictor(spec: &str) -> std::result::Result<Predictor, Failure> {
    let (kind, arg) = spec
        .split_once(':')
        .ok_or_else(|| Failure::Usage(format!("predictor '{spec}' is not KIND:ARG")))?;
    match kind {
        "const" => arg
            .parse::<u16>()
            .map(Predictor::Constant)
            .map_err(|_| Failure::Usage(format!("'{arg}' is not a class index"))),
        "lookup" => Ok(Predictor::load_lookup(arg)?),
        "trace" => Ok(Predictor::from_trace(&load_trace(arg)?)?),
        _ => Err(Failure::Usage(format!("unknown predictor kind '{kind}'"))),
    }
}

fn cmd_serve(a: ServeArgs) -> CmdResult {
    let predictor = parse_predictor(&a.predictor)?;
    let delay = DelayModel {
        fixed_ms: a.delay_ms,
        jitter_ms: a.jitter_ms,
        seed: a.seed.seed,
    };
    let handle = wire::serve(a.bind.as_str(), predictor, delay)?;
    println!("listening on {}", handle.local_addr());
    let _ = std::io::stdout().flush();
    handle.wait();
    Ok(())
}

fn cmd_offload(a: OffloadArgs) -> CmdResult {
    use rand::{RngCore, SeedableRng};
    let payload = match (&a.payload_file, a.sample_id) {
        (Some(p), _) => std::fs::read(p).map_err(|e| Error::io(p, e))?,
        (None, Some(id)) => wire::sample_payload(id, a.payload_bytes),
        (None, None) => {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(a.seed.seed);
            let mut p = vec![0u8; a.payload_bytes];
            rng.fill_bytes(&mut p);
            p
        }
    };
    let (class, rtt) = wire::offload(&a.connect, &payload)?;
    println!("{{\"class\":{class},\"rtt_ms\":{rtt}}}");
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> CmdResult {
    let result = wire::bench(&a.connect, a.payload_bytes, a.reps, a.seed.seed)?;
    let format = a.output.format.or_else(|| a.output.out.as_deref().map(Format::from_path)).unwrap_or(Format::Csv);
    emit_report(&Emit::Bench(&result.stats), format, a.output.out.as_deref())?;
    Ok(())
}
