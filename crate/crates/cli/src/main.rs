//! `qsim`: dataset generation, surrogate training and evaluation, and the
//! VQE, Grover, three-qubit and tomography experiments.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use qsurrogate::bench::{
    fidelity_report, grover_run, summary, vqe_run, write_probabilities_csv, write_trace_csv, Backend, OptimizerConfig,
    VqeProblem,
};
use qsurrogate::datagen::{generate_dataset, record_seed, Dataset, DatasetConfig, Family, InitialStateMode, NoiseConfig};
use qsurrogate::extend3q::{load_layers, simulate_3q, simulate_direct, ExactBackend, Inversion, Layer, SurrogateBackend};
use qsurrogate::qcore::{mixed_fidelity, DensityMatrix, DensityRecord, NoiseModel, NoiseParams};
use qsurrogate::surrogate::{train_with, Precision, TrainOptions};
use qsurrogate::tomo::{load_records, measure_all, save_records, tomo_pipeline};
use qsurrogate::{Error, ModelConfig, SurrogateModel};

#[derive(Parser, Debug)]
#[command(name = "qsim", version, about = "Quantum circuit simulation with a trained attention surrogate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(tag = "command", rename_all = "lowercase")]
enum Command {
    /// Generate a dataset of (input, target) records.
    Gen(GenArgs),
    /// Train a surrogate on a dataset.
    Train(TrainArgs),
    /// Per-record fidelity of a surrogate on a dataset.
    Eval(EvalArgs),
    /// Variational ground-state search.
    Vqe(VqeArgs),
    /// One Grover iteration marking |11⟩.
    Grover(GroverArgs),
    /// Three-qubit circuits through the two-qubit block scheme.
    Sim3q(Sim3qArgs),
    /// Least-squares state tomography.
    Tomo(TomoArgs),
    /// Convert a CSV report into whitespace-separated columns for gnuplot.
    Plotdata(PlotArgs),
}

#[derive(Clone, Copy, Debug, Serialize, ValueEnum, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
enum BackendArg {
    Exact,
    ExactNoisy,
    Surrogate,
}

#[derive(Clone, Copy, Debug, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
enum PrecisionArg {
    F32,
    F64,
}

#[derive(Clone, Copy, Debug, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
enum InitArg {
    Fixed,
    Random,
    RandomMixed,
}

impl From<InitArg> for InitialStateMode {
    fn from(a: InitArg) -> Self {
        match a {
            InitArg::Fixed => Self::Fixed,
            InitArg::Random => Self::Random,
            InitArg::RandomMixed => Self::RandomMixed,
        }
    }
}

const NOISE_HELP: &str = "Noise: `gamma=..,lambda=..,depol=..` (omitted keys take the defaults 0.02, 0.02, 0), `none`, or `realistic`";
const FAMILY_HELP: &str = "One of 1q, 1q-noisy, 2q-special, 2q-special-noisy, 2q-universal, 2q-universal-noisy";

#[derive(Args, Debug, Serialize)]
struct GenArgs {
    #[arg(long, value_parser = parse_family, help = FAMILY_HELP)]
    family: Family,
    /// Number of records.
    #[arg(long)]
    n: usize,
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_parser = parse_noise, default_value = "gamma=0.02,lambda=0.02,depol=0", help = NOISE_HELP)]
    noise: NoiseConfig,
    /// Initial states of the universal families.
    #[arg(long, value_enum, default_value_t = InitArg::Random)]
    initial_state: InitArg,
    /// Rotate pure targets so the largest amplitude is real positive.
    #[arg(long)]
    canonical_phase: bool,
    /// Output dataset (JSON lines).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    /// Training dataset.
    #[arg(long)]
    data: PathBuf,
    /// Output checkpoint.
    #[arg(long)]
    out: PathBuf,
    /// Weight-initialization and shuffling seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    d_model: usize,
    #[arg(long, default_value_t = 4)]
    heads: usize,
    #[arg(long, default_value_t = 2)]
    encoder_layers: usize,
    #[arg(long, default_value_t = 2)]
    decoder_layers: usize,
    #[arg(long, default_value_t = 128)]
    d_ff: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    /// Early-stopping patience in epochs.
    #[arg(long, default_value_t = 20)]
    patience: usize,
    #[arg(long, value_enum, default_value_t = PrecisionArg::F32)]
    precision: PrecisionArg,
    /// Per-epoch losses as CSV.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Print one line per epoch to stderr.
    #[arg(long)]
    progress: bool,
}

#[derive(Args, Debug, Serialize)]
struct EvalArgs {
    /// Trained checkpoint.
    #[arg(long)]
    model: PathBuf,
    /// Evaluation dataset; when absent a fresh one is generated.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Size of the generated dataset.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Seed of the generated dataset.
    #[arg(long, default_value_t = 12345)]
    seed: u64,
    #[arg(long, value_parser = parse_noise, default_value = "gamma=0.02,lambda=0.02,depol=0", help = NOISE_HELP)]
    noise: NoiseConfig,
    /// Initial states of a generated universal-family dataset.
    #[arg(long, value_enum, default_value_t = InitArg::Random)]
    initial_state: InitArg,
    /// Per-record fidelities as CSV.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct VqeArgs {
    /// 2 (`XX+YY+ZZ`) or 3 (`XXX+YYY+ZZZ`).
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(2..=3))]
    qubits: u8,
    #[arg(long, value_enum, default_value_t = BackendArg::Exact)]
    backend: BackendArg,
    /// Half-block checkpoint for the surrogate backend.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_parser = parse_noise, default_value = "gamma=0.02,lambda=0.02,depol=0", help = NOISE_HELP)]
    noise: NoiseConfig,
    /// Subtract β·I instead of β·E(I) in the three-qubit scheme.
    #[arg(long)]
    naive_inversion: bool,
    /// Seeds the offsets of restarts after the first.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Every energy evaluation as CSV.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct GroverArgs {
    #[arg(long, value_enum, default_value_t = BackendArg::Exact)]
    backend: BackendArg,
    /// Half-block checkpoint for the surrogate backend.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_parser = parse_noise, default_value = "gamma=0.02,lambda=0.02,depol=0", help = NOISE_HELP)]
    noise: NoiseConfig,
    /// Basis-state probabilities as CSV.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct Sim3qArgs {
    /// Circuit file (JSON list of layers); when absent, random circuits are drawn.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Number of random circuits.
    #[arg(long, default_value_t = 20)]
    n: usize,
    /// Layers per random circuit.
    #[arg(long, default_value_t = 3)]
    layers: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = BackendArg::Exact)]
    backend: BackendArg,
    /// Noisy half-block checkpoint for the surrogate backend.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Noise of the exact-noisy backend and of the reference simulation for
    /// noisy backends.
    #[arg(long, value_parser = parse_noise, default_value = "gamma=0.02,lambda=0.02,depol=0", help = NOISE_HELP)]
    noise: NoiseConfig,
    #[arg(long)]
    naive_inversion: bool,
    /// Output density matrix (with `--in`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-circuit fidelity against direct simulation as CSV.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct TomoArgs {
    /// Probability records to reconstruct from.
    #[arg(long = "in", conflicts_with = "from_state", required_unless_present = "from_state")]
    input: Option<PathBuf>,
    /// Instead of reconstructing, measure this density matrix and write its
    /// probability records.
    #[arg(long)]
    from_state: Option<PathBuf>,
    /// Shots per readout when measuring; exact probabilities when absent.
    #[arg(long, requires = "from_state")]
    shots: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct PlotArgs {
    /// CSV report.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_family(s: &str) -> Result<Family, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_noise(s: &str) -> Result<NoiseConfig, String> {
    match s {
        "none" => return Ok(NoiseConfig::Uniform(NoiseParams::none())),
        "realistic" => return Ok(NoiseConfig::realistic()),
        _ => {}
    }
    let mut p = NoiseParams::default();
    for part in s.split(',') {
        let (k, v) = part.split_once('=').ok_or_else(|| format!("expected key=value, got `{part}`"))?;
        let v: f64 = v.trim().parse().map_err(|_| format!("`{v}` is not a number"))?;
        if !(0.0..=1.0).contains(&v) {
            return Err(format!("{k} = {v} is outside [0, 1]"));
        }
        match k.trim() {
            "gamma" => p.gamma = v,
            "lambda" => p.lambda = v,
            "depol" => p.depol = v,
            other => return Err(format!("unknown noise key `{other}`")),
        }
    }
    Ok(NoiseConfig::Uniform(p))
}

/// Usage problems detected after parsing.
struct Usage(String);

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self::Runtime(e)
    }
}

impl From<Usage> for Failure {
    fn from(u: Usage) -> Self {
        Self::Usage(u.0)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Self::Runtime(Error::Io(e))
    }
}

type Outcome = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(1);
    }
    println!("config: {}", serde_json::to_string(&cli.command).expect("config serializes"));
    println!("seed: {}", master_seed(&cli.command));
    let result = match &cli.command {
        Command::Gen(a) => gen(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Vqe(a) => vqe(a),
        Command::Grover(a) => grover(a),
        Command::Sim3q(a) => sim3q(a),
        Command::Tomo(a) => tomo(a),
        Command::Plotdata(a) => plotdata(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn configure_threads() -> std::result::Result<(), String> {
    let Ok(v) = std::env::var("QSIM_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().map_err(|_| format!("QSIM_THREADS=`{v}` is not a positive integer"))?;
    if n == 0 {
        return Err("QSIM_THREADS must be at least 1".into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn master_seed(c: &Command) -> u64 {
    match c {
        Command::Gen(a) => a.seed,
        Command::Train(a) => a.seed,
        Command::Eval(a) => a.seed,
        Command::Vqe(a) => a.seed,
        Command::Sim3q(a) => a.seed,
        Command::Tomo(a) => a.seed,
        Command::Grover(_) | Command::Plotdata(_) => 0,
    }
}

fn create(path: &Path) -> io::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn noise_params(cfg: &NoiseConfig, n_qubits: usize, seed: u64) -> Vec<NoiseParams> {
    cfg.resolve(n_qubits, seed)
}

fn noise_model(cfg: &NoiseConfig, n_qubits: usize, seed: u64) -> Result<NoiseModel<f64>, Error> {
    NoiseModel::from_params(n_qubits, &noise_params(cfg, n_qubits, seed))
}

fn load_model(path: Option<&PathBuf>) -> std::result::Result<SurrogateModel, Failure> {
    let path = path.ok_or_else(|| Usage("the surrogate backend needs --model".into()))?;
    Ok(SurrogateModel::load(path)?)
}

fn gen(a: &GenArgs) -> Outcome {
    if a.n == 0 {
        return Err(Usage("--n must be positive".into()).into());
    }
    let cfg = DatasetConfig {
        noise: a.noise.clone(),
        initial_state: a.initial_state.into(),
        canonical_phase: a.canonical_phase,
        ..DatasetConfig::new(a.family, a.n, a.seed)
    };
    let ds = generate_dataset(&cfg)?;
    ds.save(&a.out)?;
    println!("wrote {} records of {} to {}", ds.len(), ds.family(), a.out.display());
    Ok(())
}

fn train(a: &TrainArgs) -> Outcome {
    let ds = Dataset::load(&a.data)?;
    let cfg = ModelConfig {
        d_model: a.d_model,
        n_heads: a.heads,
        n_encoder_layers: a.encoder_layers,
        n_decoder_layers: a.decoder_layers,
        d_ff: a.d_ff,
        learning_rate: a.lr,
        batch_size: a.batch_size,
        max_epochs: a.epochs,
        patience: a.patience,
        seed: a.seed,
        ..ModelConfig::for_family(ds.family())
    };
    cfg.validate().map_err(|e| Usage(e.to_string()))?;
    let precision = match a.precision {
        PrecisionArg::F32 => Precision::F32,
        PrecisionArg::F64 => Precision::F64,
    };
    let opts = TrainOptions { precision, progress: a.progress, ..TrainOptions::default() };
    let (model, report) = train_with(&ds, &cfg, &opts)?;
    model.save(&a.out)?;
    if let Some(path) = &a.report {
        let mut w = csv::Writer::from_writer(create(path)?);
        w.write_record(["epoch", "train_mse", "val_mse"]).map_err(csv_err)?;
        for e in &report.epochs {
            w.write_record([e.epoch.to_string(), format!("{:.12e}", e.train_mse), format!("{:.12e}", e.val_mse)])
                .map_err(csv_err)?;
        }
        w.flush()?;
    }
    println!("parameters: {}", report.n_params);
    println!("epochs: {} (best {})", report.final_epoch, report.best_epoch);
    println!("best_val_mse: {:.6e}", report.best_val_mse);
    println!("wrote model to {}", a.out.display());
    Ok(())
}

fn csv_err(e: csv::Error) -> Failure {
    Failure::Runtime(Error::Format(e.to_string()))
}

fn eval(a: &EvalArgs) -> Outcome {
    let model = SurrogateModel::load(&a.model)?;
    let data = match &a.data {
        Some(p) => Dataset::load(p)?,
        None => {
            if a.n == 0 {
                return Err(Usage("--n must be positive".into()).into());
            }
            generate_dataset(&DatasetConfig {
                noise: a.noise.clone(),
                initial_state: a.initial_state.into(),
                ..DatasetConfig::new(model.family(), a.n, a.seed)
            })?
        }
    };
    let rep = fidelity_report(&model, &data)?;
    if let Some(path) = &a.report {
        let mut w = create(path)?;
        rep.write_csv(&mut w)?;
        w.flush()?;
    }
    println!("family: {}", rep.family);
    println!("records: {}", rep.fidelities.len());
    println!("decode_failures: {}", rep.decode_failures);
    println!("mean_fidelity: {:.6}", rep.mean);
    println!("min_fidelity: {:.6}", rep.min);
    println!("fraction_at_least_0.99: {:.4}", rep.fraction_at_least(0.99));
    Ok(())
}

fn vqe(a: &VqeArgs) -> Outcome {
    let mut problem = if a.qubits == 2 { VqeProblem::two_qubit() } else { VqeProblem::three_qubit() };
    problem.optimizer = OptimizerConfig {
        restart_seed: a.seed,
        max_iterations: a.max_iter.unwrap_or(problem.optimizer.max_iterations),
        ..problem.optimizer
    };
    if problem.optimizer.max_iterations == 0 {
        return Err(Usage("--max-iter must be positive".into()).into());
    }
    let inversion = if a.naive_inversion { Inversion::Naive } else { Inversion::Corrected };
    let n = problem.ansatz.n_qubits();
    let noise = noise_model(&a.noise, n, a.seed)?;
    let model = if a.backend == BackendArg::Surrogate { Some(load_model(a.model.as_ref())?) } else { None };
    let backend = match (a.backend, n) {
        (BackendArg::Exact, _) => Backend::Exact,
        (BackendArg::ExactNoisy, _) => Backend::ExactNoisy(&noise),
        (BackendArg::Surrogate, 2) => Backend::Surrogate(model.as_ref().expect("loaded")),
        (BackendArg::Surrogate, _) => Backend::Extend3q { model: model.as_ref(), noise: None, inversion },
    };
    let trace = vqe_run(&problem, &backend)?;
    if let Some(path) = &a.report {
        let mut w = create(path)?;
        write_trace_csv(&trace, &mut w)?;
        w.flush()?;
    }
    println!("backend: {}", trace.backend);
    println!("final_energy: {:.6}", trace.final_energy);
    println!("reference_energy: {:.6}", trace.reference_energy);
    if n == 3 {
        println!("reference_values: -1.4 theoretical, -1.33 estimated");
    }
    let params: Vec<String> = trace.final_params.iter().map(|p| format!("{p:.6}")).collect();
    println!("final_params: {}", params.join(" "));
    println!("iterations: {}", trace.iterations);
    println!("converged: {}", trace.converged);
    if !trace.converged {
        eprintln!("warning: iteration cap reached; reporting the best point found");
    }
    Ok(())
}

fn grover(a: &GroverArgs) -> Outcome {
    let noise = noise_model(&a.noise, 2, 0)?;
    let model = if a.backend == BackendArg::Surrogate { Some(load_model(a.model.as_ref())?) } else { None };
    let backend = match a.backend {
        BackendArg::Exact => Backend::Exact,
        BackendArg::ExactNoisy => Backend::ExactNoisy(&noise),
        BackendArg::Surrogate => Backend::Surrogate(model.as_ref().expect("loaded")),
    };
    let probs = grover_run(&backend)?;
    if let Some(path) = &a.report {
        let mut w = create(path)?;
        write_probabilities_csv(&probs, &mut w)?;
        w.flush()?;
    }
    for (i, p) in probs.iter().enumerate() {
        println!("p({}): {:.6}", qsurrogate::bench::basis_label(i, 2), p);
    }
    Ok(())
}

fn sim3q(a: &Sim3qArgs) -> Outcome {
    let inversion = if a.naive_inversion { Inversion::Naive } else { Inversion::Corrected };
    let noise = noise_model(&a.noise, 3, a.seed)?;
    let model = if a.backend == BackendArg::Surrogate { Some(load_model(a.model.as_ref())?) } else { None };
    let surrogate = model.as_ref().map(SurrogateBackend::new).transpose()?;
    let exact = ExactBackend { noise: (a.backend == BackendArg::ExactNoisy).then(|| noise.clone()) };
    // Reference: direct 8×8 simulation with the noise the backend models.
    let reference_noise = (a.backend != BackendArg::Exact).then_some(&noise);
    let run = |layers: &[Layer]| -> std::result::Result<(DensityMatrix<f64>, f64), Error> {
        let rho = match &surrogate {
            Some(s) => simulate_3q(layers, s, inversion)?,
            None => simulate_3q(layers, &exact, inversion)?,
        };
        let reference = simulate_direct(layers, reference_noise)?;
        let f = mixed_fidelity(&rho, &reference)?;
        Ok((rho, f))
    };
    let circuits: Vec<Vec<Layer>> = match &a.input {
        Some(path) => vec![load_layers(path)?],
        None => {
            if a.n == 0 || a.layers == 0 {
                return Err(Usage("--n and --layers must be positive".into()).into());
            }
            (0..a.n)
                .map(|i| {
                    let mut rng = ChaCha8Rng::seed_from_u64(record_seed(a.seed, i as u64));
                    (0..a.layers).map(|_| Layer::random(&mut rng)).collect()
                })
                .collect()
        }
    };
    let mut fids = Vec::with_capacity(circuits.len());
    let mut last = None;
    for c in &circuits {
        let (rho, f) = run(c)?;
        fids.push(f);
        last = Some(rho);
    }
    if let Some(path) = &a.out {
        if a.input.is_none() {
            return Err(Usage("--out needs --in".into()).into());
        }
        let rec = DensityRecord::from_density(last.as_ref().expect("one circuit"));
        let mut w = create(path)?;
        serde_json::to_writer(&mut w, &rec).map_err(Error::from)?;
        writeln!(w)?;
        w.flush()?;
    }
    if let Some(path) = &a.report {
        let mut w = csv::Writer::from_writer(create(path)?);
        w.write_record(["index", "fidelity"]).map_err(csv_err)?;
        for (i, f) in fids.iter().enumerate() {
            w.write_record([i.to_string(), format!("{f:.12}")]).map_err(csv_err)?;
        }
        let mut w = w.into_inner().map_err(|e| Failure::from(e.into_error()))?;
        let (mean, min) = summary(&fids);
        writeln!(w, "# mean={mean:.12}")?;
        writeln!(w, "# min={min:.12}")?;
        w.flush()?;
    }
    let (mean, min) = summary(&fids);
    println!("circuits: {}", fids.len());
    println!("inversion: {}", if a.naive_inversion { "naive" } else { "corrected" });
    println!("mean_fidelity: {mean:.6}");
    println!("min_fidelity: {min:.6}");
    Ok(())
}

fn tomo(a: &TomoArgs) -> Outcome {
    if let Some(path) = &a.from_state {
        let text = std::fs::read_to_string(path)?;
        let rec: DensityRecord = serde_json::from_str(&text).map_err(Error::from)?;
        let rho = rec.to_density()?;
        if a.shots == Some(0) {
            return Err(Usage("--shots must be positive".into()).into());
        }
        let records = measure_all(&rho, a.shots, a.seed)?;
        save_records(&a.out, &records)?;
        println!("wrote {} probability records to {}", records.len(), a.out.display());
        return Ok(());
    }
    let input = a.input.as_ref().expect("clap requires --in or --from-state");
    let records = load_records(input)?;
    let rho = tomo_pipeline(&records)?;
    let mut w = create(&a.out)?;
    serde_json::to_writer(&mut w, &DensityRecord::from_density(&rho)).map_err(Error::from)?;
    writeln!(w)?;
    w.flush()?;
    println!("qubits: {}", rho.n_qubits());
    println!("purity: {:.6}", rho.purity());
    println!("wrote density matrix to {}", a.out.display());
    Ok(())
}

fn plotdata(a: &PlotArgs) -> Outcome {
    let mut text = String::new();
    File::open(&a.input)?.read_to_string(&mut text)?;
    let mut out = String::new();
    let mut header_done = false;
    for line in text.lines() {
        if line.starts_with('#') || line.trim().is_empty() {
            out.push_str(line);
            out.push('\n');
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if !header_done {
            out.push_str("# ");
            header_done = true;
        }
        out.push_str(&cols.join(" "));
        out.push('\n');
    }
    if !header_done {
        return Err(Failure::Runtime(Error::Format(format!("{} has no CSV rows", a.input.display()))));
    }
    match &a.out {
        Some(p) => std::fs::write(p, out)?,
        None => io::stdout().write_all(out.as_bytes())?,
    }
    Ok(())
}
