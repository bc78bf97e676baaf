mod manifest;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use gridflow_core::ac::{solve_nr, InitMode, NrOptions};
use gridflow_core::case_io::{read_case, write_json};
use gridflow_core::dc::solve_dc;
use gridflow_core::metrics::{dc_baseline, nrmse_over, smoothness_report, EvalReport};
use gridflow_core::models::{
    gradcheck, load_checkpoint, predict_all, save_checkpoint, toy_config, toy_sample, train_with, CheckpointMeta,
    Model, ModelConfig, ModelKind, TrainOptions,
};
use gridflow_core::sampler::{generate_dataset, read_dataset, write_dataset, Dataset, SamplerConfig, Split};
use gridflow_core::{cases, Grid};

use manifest::{config_hash, write_atomic, RunManifest};

const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "gridflow", version, about = "AC/DC power flow, line-graph datasets and GNN flow regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Newton-Raphson AC power flow; bus and branch tables as CSV on stdout.
    SolveAc {
        /// Bundled case name or path to a `.m` / `.json` file.
        case: String,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 30)]
        max_iter: usize,
        #[arg(long)]
        flat_start: bool,
    },
    /// Linearized power flow.
    SolveDc { case: String },
    /// Rewrite a case file in the JSON schema.
    Convert { input: PathBuf, output: PathBuf },
    MakeDataset(MakeDataset),
    Train(Train),
    Eval(Eval),
    /// Finite-difference check of every parameter gradient on a toy instance.
    Gradcheck {
        #[arg(long, value_parser = parse_kind)]
        model: ModelKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Per-vertex cosine distance to the average label, as CSV.
    Smoothness {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
    },
}

#[derive(Args)]
#[command(group(ArgGroup::new("grids").required(true).multiple(true).args(["case", "cases"])))]
struct MakeDataset {
    #[arg(long)]
    case: Option<String>,
    /// Comma-separated list of cases.
    #[arg(long, value_delimiter = ',')]
    cases: Vec<String>,
    /// Samples per grid.
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: u64,
    /// Disconnect random branches before sampling.
    #[arg(long)]
    perturb: bool,
    /// Draws allowed per sample before giving up.
    #[arg(long, default_value_t = 1000)]
    retry_budget: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Train {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_parser = parse_kind)]
    model: ModelKind,
    #[arg(long, default_value_t = 250)]
    epochs: usize,
    /// Defaults to 16, or 32 when the dataset holds several grids.
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[command(group(ArgGroup::new("predictor").required(true).args(["checkpoint", "dc"])))]
struct Eval {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Score the linearized power flow instead of a model.
    #[arg(long)]
    dc: bool,
    /// Reference grid for `--dc` when the dataset's grids are not bundled.
    #[arg(long = "case")]
    cases: Vec<String>,
    #[arg(long)]
    report: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    split: SplitArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    ModelKind::parse(s).ok_or_else(|| format!("unknown model `{s}` (arma, gcn, local-mlp, global-mlp)"))
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let threads = match std::env::var("GRIDFLOW_THREADS") {
        Ok(v) => match v.parse::<usize>() {
            Ok(n) if n > 0 => Some(n),
            _ => {
                eprintln!("error: GRIDFLOW_THREADS must be a positive integer, got `{v}`");
                return ExitCode::from(2);
            }
        },
        Err(_) => None,
    };
    match run(cli, &args[1..], threads) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli, args: &[String], threads: Option<usize>) -> Result<()> {
    let start = Instant::now();
    match cli.command {
        Command::SolveAc {
            case,
            tol,
            max_iter,
            flat_start,
        } => solve_ac(&case, tol, max_iter, flat_start),
        Command::SolveDc { case } => solve_dc_cmd(&case),
        Command::Convert { input, output } => {
            let doc = read_case(&input).with_context(|| format!("reading {}", input.display()))?;
            for w in &doc.warnings {
                eprintln!("warning: {w}");
            }
            let text = write_json(&doc.grid);
            write_atomic(&output, text.as_bytes())?;
            let mut m = RunManifest::new("convert", args);
            m.config_hash = config_hash(&text);
            m.inputs.push(input);
            m.outputs.push(output.clone());
            m.finish(start.elapsed()).write_beside(&output)
        }
        Command::MakeDataset(cmd) => make_dataset(cmd, args, threads, start),
        Command::Train(cmd) => train_cmd(cmd, args, start),
        Command::Eval(cmd) => eval_cmd(cmd, args, start),
        Command::Gradcheck { model, seed } => {
            let model = Model::new(toy_config(model), seed)?;
            let sample = toy_sample(seed);
            let report = gradcheck(&model, &model.batch(&[&sample])?)?;
            println!("param,entries,max_rel_error,max_abs_error");
            for p in &report.params {
                println!("{},{},{:e},{:e}", p.name, p.entries, p.max_rel_error, p.max_abs_error);
            }
            eprintln!("max relative error {:e}", report.max_rel_error);
            if report.max_rel_error >= GRADCHECK_TOLERANCE {
                bail!("gradient check failed: {:e} >= {GRADCHECK_TOLERANCE:e}", report.max_rel_error);
            }
            Ok(())
        }
        Command::Smoothness {
            dataset,
            checkpoint,
            out,
            split,
        } => {
            let data = load_dataset(&dataset)?;
            let (model, _) = load_checkpoint(&checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
            let samples = data.split(split.into());
            let preds = predict_all(&model, &samples, 64)?;
            let report = smoothness_report(&samples, &preds)?;
            write_atomic(&out, report.to_csv().as_bytes())?;
            let json_path = out.with_extension("json");
            write_atomic(&json_path, serde_json::to_string_pretty(&report)?.as_bytes())?;
            println!("mean_prediction,mean_label");
            println!("{},{}", report.mean_prediction, report.mean_label);
            let mut m = RunManifest::new("smoothness", args);
            m.config_hash = config_hash(model.config());
            m.inputs = vec![dataset, checkpoint];
            m.outputs = vec![out.clone(), json_path];
            m.finish(start.elapsed()).write_beside(&out)
        }
    }
}

/// A path if one exists, a bundled case name otherwise.
fn load_case(arg: &str) -> Result<Grid> {
    let path = Path::new(arg);
    if path.exists() {
        let doc = read_case(path).with_context(|| format!("reading {arg}"))?;
        for w in &doc.warnings {
            eprintln!("warning: {w}");
        }
        return Ok(doc.grid);
    }
    Ok(cases::load(arg)?)
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    read_dataset(path).with_context(|| format!("reading {}", path.display()))
}

/// Writes to stdout, treating a closed pipe as success.
fn emit(text: &str) -> Result<()> {
    use std::io::Write;
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn solve_ac(case: &str, tol: f64, max_iter: usize, flat_start: bool) -> Result<()> {
    let grid = load_case(case)?;
    let options = NrOptions {
        tolerance: tol,
        max_iterations: max_iter,
        init: if flat_start { InitMode::FlatStart } else { InitMode::CaseVoltages },
        ..NrOptions::default()
    };
    let sol = solve_nr(&grid, &options)?;
    eprintln!(
        "{}: converged={} iterations={} max_mismatch={:e}",
        grid.name, sol.converged, sol.iterations, sol.max_mismatch
    );
    if !sol.converged {
        bail!("power flow did not converge");
    }
    let mut out = String::from("bus,vm,va\n");
    for (b, v) in grid.buses.iter().zip(&sol.v) {
        writeln!(out, "{},{},{}", b.id, v.norm(), v.arg())?;
    }
    out.push_str("\nbranch,from,to,pf,qf,if_re,if_im,pt,qt,it_re,it_im\n");
    for (k, (br, f)) in grid.branches.iter().zip(&sol.branches).enumerate() {
        let cols: Vec<String> = f.to_array().iter().map(f64::to_string).collect();
        writeln!(out, "{k},{},{},{}", br.from, br.to, cols.join(","))?;
    }
    emit(&out)
}

fn solve_dc_cmd(case: &str) -> Result<()> {
    let grid = load_case(case)?;
    let sol = solve_dc(&grid)?;
    let mut out = String::from("bus,va\n");
    for (b, t) in grid.buses.iter().zip(&sol.theta) {
        writeln!(out, "{},{t}", b.id)?;
    }
    out.push_str("\nbranch,from,to,pf,pt\n");
    for (k, (br, f)) in grid.branches.iter().zip(&sol.branches).enumerate() {
        writeln!(out, "{k},{},{},{},{}", br.from, br.to, f.pf, f.pt)?;
    }
    emit(&out)
}

fn make_dataset(cmd: MakeDataset, args: &[String], threads: Option<usize>, start: Instant) -> Result<()> {
    let names: Vec<String> = cmd.case.into_iter().chain(cmd.cases).collect();
    let grids: Vec<Grid> = names.iter().map(|n| load_case(n)).collect::<Result<_>>()?;
    let mut config = SamplerConfig::new(cmd.seed, cmd.n);
    config.perturb = cmd.perturb;
    config.retry_budget = cmd.retry_budget;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build()?;
    let dataset = pool.install(|| generate_dataset(&grids, &config))?;
    write_dataset(&dataset, &cmd.out).with_context(|| format!("writing {}", cmd.out.display()))?;
    let c = &dataset.header.split_counts;
    eprintln!("{} samples: train {} val {} test {}", dataset.samples.len(), c.train, c.val, c.test);
    let mut m = RunManifest::new("make-dataset", args);
    m.config_hash = dataset.header.config_hash.clone();
    m.seed = Some(cmd.seed);
    m.inputs = names.iter().filter(|n| Path::new(n).exists()).map(PathBuf::from).collect();
    m.outputs.push(cmd.out.clone());
    m.finish(start.elapsed()).write_beside(&cmd.out)
}

fn train_cmd(cmd: Train, args: &[String], start: Instant) -> Result<()> {
    let data = load_dataset(&cmd.dataset)?;
    let config = ModelConfig::default_for(cmd.model, &data.header.grids);
    let mut options = if data.header.grids.len() > 1 {
        TrainOptions::multi_grid(cmd.seed)
    } else {
        TrainOptions::new(cmd.seed)
    };
    options.epochs = cmd.epochs;
    options.lr = cmd.lr;
    if let Some(b) = cmd.batch {
        options.batch_size = b;
    }
    let mut model = Model::new(config, cmd.seed)?;
    let history = train_with(
        &mut model,
        &data.split(Split::Train),
        &data.split(Split::Val),
        &options,
        |s| eprintln!("epoch {} train {:.6e} val {:.6e}", s.epoch + 1, s.train_loss, s.val_loss),
    )?;
    let meta = CheckpointMeta {
        seed: cmd.seed,
        epochs: options.epochs,
        best_epoch: Some(history.best_epoch),
        best_val_loss: Some(history.best_val_loss),
        training: Some(options),
    };
    save_checkpoint(&cmd.out, &model, &meta).with_context(|| format!("writing {}", cmd.out.display()))?;
    eprintln!(
        "best epoch {} val loss {:.6e}, {} parameters",
        history.best_epoch + 1,
        history.best_val_loss,
        model.parameter_count()
    );
    let mut m = RunManifest::new("train", args);
    m.config_hash = config_hash(&(model.config(), &options, &data.header.config_hash));
    m.seed = Some(cmd.seed);
    m.inputs.push(cmd.dataset);
    m.outputs.push(cmd.out.clone());
    m.finish(start.elapsed()).write_beside(&cmd.out)
}

fn eval_cmd(cmd: Eval, args: &[String], start: Instant) -> Result<()> {
    let data = load_dataset(&cmd.dataset)?;
    let samples = data.split(cmd.split.into());
    let (name, preds, hash) = match &cmd.checkpoint {
        Some(path) => {
            let (model, _) = load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?;
            let preds = predict_all(&model, &samples, 64)?;
            (model.kind().name().to_string(), preds, config_hash(model.config()))
        }
        None => {
            let overrides: Vec<Grid> = cmd.cases.iter().map(|c| load_case(c)).collect::<Result<_>>()?;
            let mut references = Vec::new();
            for info in &data.header.grids {
                let grid = match overrides.iter().find(|g| g.name == info.name) {
                    Some(g) => g.clone(),
                    None => cases::load(&info.name)
                        .map_err(|_| anyhow!("no reference grid for `{}`; pass it with --case", info.name))?,
                };
                references.push(grid);
            }
            let preds = samples
                .iter()
                .map(|s| {
                    let reference = references
                        .iter()
                        .find(|g| g.name == s.grid_name)
                        .ok_or_else(|| anyhow!("sample from unknown grid `{}`", s.grid_name))?;
                    Ok(dc_baseline(s, reference)?)
                })
                .collect::<Result<Vec<_>>>()?;
            ("dc".to_string(), preds, config_hash(&"dc"))
        }
    };
    let mut report: EvalReport = nrmse_over(&samples, &preds)?;
    report.model = name;
    report.dataset = cmd
        .dataset
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let csv = report.to_csv();
    write_atomic(&cmd.report, csv.as_bytes())?;
    let json_path = cmd.report.with_extension("json");
    write_atomic(&json_path, serde_json::to_string_pretty(&report)?.as_bytes())?;
    print!("{csv}");
    let mut m = RunManifest::new("eval", args);
    m.config_hash = hash;
    m.inputs.push(cmd.dataset);
    m.inputs.extend(cmd.checkpoint);
    m.outputs = vec![cmd.report.clone(), json_path];
    m.finish(start.elapsed()).write_beside(&cmd.report)
}
