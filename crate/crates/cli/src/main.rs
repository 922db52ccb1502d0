//! `softbart` command-line front end.
//!
//! Exit codes: 0 success, 2 bad input, 3 contract violation (for example an
//! archive without cached trees), 4 internal error.

mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use softbart::archive;
use softbart::models::{fit_gbart, fit_probit, fit_regression, fit_vc, FitConfig, FittedModel};
use softbart::preprocess::{Table, TypeOverrides};
use softbart::simulate;
use softbart::summaries::{numeric_grid, partial_dependence, posterior_probs, training_levels};

use output::{FitOutputs, Summary};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Contract(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Contract(_) => 3,
            CliError::Internal(_) => 4,
        }
    }
}

impl From<softbart::Error> for CliError {
    fn from(e: softbart::Error) -> Self {
        use softbart::Error as E;
        match e {
            E::TreesNotCached => CliError::Contract(
                "the archive holds no trees; refit with tree caching enabled to predict".into(),
            ),
            E::Archive(_) => CliError::Contract(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(name = "softbart", version, about = "Soft Bayesian additive regression trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to a CSV file and save it.
    Fit(FitArgs),
    /// Predict new rows with a saved model.
    Predict(PredictArgs),
    /// Partial dependence of the fitted mean on one covariate.
    Pdp(PdpArgs),
    /// Posterior inclusion probabilities and the median probability model.
    Varselect(VarselectArgs),
    /// Write a synthetic benchmark data set.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Regression,
    Probit,
    Vc,
    Gbart,
}

#[derive(Args, Default)]
struct TypeArgs {
    /// Columns to read as categorical.
    #[arg(long, value_delimiter = ',')]
    categorical: Vec<String>,
    /// Columns to read as numeric.
    #[arg(long, value_delimiter = ',')]
    numeric: Vec<String>,
}

impl TypeArgs {
    fn overrides(&self) -> TypeOverrides {
        TypeOverrides { categorical: self.categorical.clone(), numeric: self.numeric.clone() }
    }
}

#[derive(Args)]
struct FitArgs {
    #[arg(long, value_enum, default_value = "regression")]
    model: Kind,
    /// Training CSV.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    outcome: String,
    /// Optional test CSV with the same covariates.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    /// Archive path; sidecar files share this prefix.
    #[arg(long)]
    out: PathBuf,
    /// TOML file with `hypers`, `opts` and other fit settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long)]
    burn: Option<usize>,
    #[arg(long)]
    save: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    no_update_s: bool,
    #[arg(long)]
    no_update_sigma: bool,
    #[arg(long)]
    no_update_sigma_mu: bool,
    /// Do not store trees (the archive then cannot predict).
    #[arg(long)]
    no_cache_trees: bool,
    #[arg(long)]
    hard_trees: bool,
    /// Linear column(s): one for vc, one or more for gbart.
    #[arg(long, value_delimiter = ',')]
    z_column: Vec<String>,
    /// Columns left out of the covariates.
    #[arg(long, value_delimiter = ',')]
    exclude: Vec<String>,
    #[command(flatten)]
    types: TypeArgs,
}

#[derive(Args)]
struct PredictArgs {
    /// Archive written by `fit`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Output prefix: writes `<out>.draws.csv` and `<out>.mean.csv`.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    types: TypeArgs,
}

#[derive(Args)]
struct PdpArgs {
    #[arg(long)]
    model: PathBuf,
    /// Background rows to average over.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    variable: String,
    /// Numeric grid bounds; default to the range of the background column.
    #[arg(long)]
    grid_min: Option<f64>,
    #[arg(long)]
    grid_max: Option<f64>,
    #[arg(long, default_value_t = 10)]
    grid_steps: usize,
    /// CSV path for the long-format records; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    types: TypeArgs,
}

#[derive(Args)]
struct VarselectArgs {
    #[arg(long)]
    model: PathBuf,
    /// Forest index (varying-coefficient models: 0 intercept, 1 slope).
    #[arg(long, default_value_t = 0)]
    forest: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Setting {
    Friedman,
    Sine,
    Probit,
    Vc,
    Gbart,
    Treatment,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value = "friedman")]
    setting: Setting,
    #[arg(long, default_value_t = 250)]
    n: usize,
    #[arg(long, default_value_t = 250)]
    p: usize,
    /// Noise standard deviation (sine defaults to 0.1, others to 1).
    #[arg(long)]
    sigma: Option<f64>,
    /// Constant treatment effect for the treatment setting.
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn read_table(path: &Path, types: &TypeArgs) -> CliResult<Table> {
    Table::from_csv_path(path, &types.overrides())
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> CliResult<FittedModel> {
    match archive::load(path) {
        Ok(m) => Ok(m),
        Err(softbart::Error::Io(e)) => Err(CliError::Input(format!("{}: {e}", path.display()))),
        Err(e) => Err(e.into()),
    }
}

fn fit_config(args: &FitArgs) -> CliResult<FitConfig> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
            toml::from_str::<FitConfig>(&text).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?
        }
        None => FitConfig::default(),
    };
    cfg.seed = args.seed;
    let h = &mut cfg.hypers;
    if let Some(v) = args.trees {
        h.num_tree = v;
    }
    if let Some(v) = args.gamma {
        h.gamma = v;
    }
    if let Some(v) = args.beta {
        h.beta = v;
    }
    if let Some(v) = args.k {
        h.k = v;
    }
    h.hard_trees |= args.hard_trees;
    let o = &mut cfg.opts;
    if let Some(v) = args.burn {
        o.num_burn = v;
    }
    if let Some(v) = args.save {
        o.num_save = v;
    }
    if let Some(v) = args.thin {
        o.num_thin = v;
    }
    o.update_s &= !args.no_update_s;
    o.update_sigma &= !args.no_update_sigma;
    o.update_sigma_mu &= !args.no_update_sigma_mu;
    o.cache_trees &= !args.no_cache_trees;
    cfg.exclude.extend(args.exclude.iter().cloned());
    cfg.hypers.validate()?;
    cfg.opts.validate()?;
    Ok(cfg)
}

fn cmd_fit(args: FitArgs) -> CliResult<()> {
    let cfg = fit_config(&args)?;
    let train = read_table(&args.data, &args.types)?;
    train.require(&args.outcome)?;
    let test = args.test.as_deref().map(|p| read_table(p, &args.types)).transpose()?;
    let single_z = || -> CliResult<&str> {
        match args.z_column.as_slice() {
            [z] => Ok(z.as_str()),
            _ => Err(CliError::Input("--model vc needs exactly one --z-column".into())),
        }
    };
    let outputs = match args.model {
        Kind::Regression => FitOutputs::regression(fit_regression(&train, &args.outcome, test.as_ref(), &cfg)?),
        Kind::Probit => FitOutputs::probit(fit_probit(&train, &args.outcome, test.as_ref(), &cfg)?),
        Kind::Vc => FitOutputs::vc(fit_vc(&train, &args.outcome, single_z()?, test.as_ref(), &cfg)?),
        Kind::Gbart => {
            if args.z_column.is_empty() {
                return Err(CliError::Input("--model gbart needs at least one --z-column".into()));
            }
            FitOutputs::gbart(fit_gbart(&train, &args.outcome, &args.z_column, test.as_ref(), &cfg)?)
        }
    };
    let summary = Summary::build(&outputs, &train, test.as_ref())?;
    archive::save(&outputs.model, &args.out)?;
    outputs.write_draws(&args.out)?;
    summary.write_json(&sidecar(&args.out, "summary.json"))?;
    print!("{}", summary.render());
    Ok(())
}

/// `<out>.<suffix>`
fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_predict(args: PredictArgs) -> CliResult<()> {
    let model = load_model(&args.model)?;
    if !model.trees_cached() {
        return Err(softbart::Error::TreesNotCached.into());
    }
    let table = read_table(&args.data, &args.types)?;
    let pred = model.predict(&table)?;
    output::write_matrix(&sidecar(&args.out, "draws.csv"), &pred.mu)?;
    output::write_means(&sidecar(&args.out, "mean.csv"), &pred)?;
    println!("predicted {} rows with {} draws", table.nrows(), pred.mu.nrows());
    Ok(())
}

fn cmd_pdp(args: PdpArgs) -> CliResult<()> {
    let model = load_model(&args.model)?;
    if !model.trees_cached() {
        return Err(softbart::Error::TreesNotCached.into());
    }
    let background = read_table(&args.data, &args.types)?;
    let grid = match training_levels(&model, &args.variable)? {
        Some(levels) => levels,
        None => {
            let (lo, hi) = match (args.grid_min, args.grid_max) {
                (Some(a), Some(b)) => (a, b),
                (a, b) => {
                    let v = background.require(&args.variable)?.numbers()?;
                    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
                    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    (a.unwrap_or(min), b.unwrap_or(max))
                }
            };
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(CliError::Input("grid bounds must be finite with min <= max".into()));
            }
            numeric_grid(lo, hi, args.grid_steps)
        }
    };
    let pd = partial_dependence(&model, &background, &args.variable, &grid)?;
    output::write_records(args.out.as_deref(), &pd.records())?;
    Ok(())
}

fn cmd_varselect(args: VarselectArgs) -> CliResult<()> {
    let model = load_model(&args.model)?;
    if args.forest >= model.num_forests() {
        return Err(CliError::Input(format!("the model has {} forest(s)", model.num_forests())));
    }
    let map = model.info.transforms.column_map();
    let vs = posterior_probs(&model.counts(args.forest), &map)?;
    output::write_varselect(args.out.as_deref(), &vs)?;
    let names = vs.selected_names();
    let ids: Vec<String> = vs.median_probability_model.iter().map(|j| (j + 1).to_string()).collect();
    eprintln!("median probability model: {} ({})", names.join(" "), ids.join(" "));
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> CliResult<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let table = match args.setting {
        Setting::Friedman | Setting::Gbart => simulate::friedman(&mut rng, args.n, args.p, args.sigma.unwrap_or(1.0)),
        Setting::Sine => simulate::sine(&mut rng, args.n, args.sigma.unwrap_or(0.1)),
        Setting::Probit => simulate::probit(&mut rng, args.n, args.p),
        Setting::Vc => simulate::varying_coefficient(&mut rng, args.n, args.p, args.sigma.unwrap_or(1.0)),
        Setting::Treatment => simulate::treatment(&mut rng, args.n, args.p, args.sigma.unwrap_or(1.0), args.tau),
    }?;
    let f = std::fs::File::create(&args.out).map_err(|e| CliError::Input(format!("{}: {e}", args.out.display())))?;
    table.write_csv(std::io::BufWriter::new(f))?;
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Pdp(a) => cmd_pdp(a),
        Command::Varselect(a) => cmd_varselect(a),
        Command::Simulate(a) => cmd_simulate(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = std::panic::catch_unwind(|| run(cli))
        .unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            Err(CliError::Internal(msg))
        });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
