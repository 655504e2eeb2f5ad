use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use kleinlab_cli::commands::{self, Context, Outcome};
use kleinlab_cli::config::RunConfig;
use kleinlab_cli::CliError;

/// Orbit statistics for discrete groups of hyperbolic isometries.
///
/// Every subcommand writes CSV or JSON artifacts into the output directory and
/// prints a JSON summary on stdout. Errors are reported as JSON on stderr with
/// exit status 1 (domain error) or 2 (usage error).
#[derive(Parser, Debug)]
#[command(name = "kleinlab", version)]
struct Cli {
    #[command(flatten)]
    params: Params,
    #[command(subcommand)]
    command: Command,
}

/// Parameters shared by all subcommands; they override values from `--config`.
#[derive(Args, Debug, Default)]
struct Params {
    /// TOML run configuration; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write the effective configuration to this file.
    #[arg(long, global = true)]
    dump_config: Option<PathBuf>,
    /// Builtin group (psl2z, hecke:<q>, schottky, apollonian) or spec file.
    #[arg(long, global = true)]
    group: Option<String>,
    /// Orbit base point as comma-separated x_1,..,x_{n-1},y.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    w: Option<Vec<f64>>,
    /// Observer point (ball mode), same layout as --w.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    z: Option<Vec<f64>>,
    #[arg(long, global = true)]
    t: Option<f64>,
    #[arg(long, global = true)]
    s: Option<f64>,
    /// ball (interior observer) or horoball (boundary observer).
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Comma-separated abscissae for curves.
    #[arg(long, global = true, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    /// Critical exponent override.
    #[arg(long, global = true)]
    delta: Option<f64>,
    /// Patterson parameter s (default δ + 0.05).
    #[arg(long, global = true)]
    patterson_s: Option<f64>,
    /// Fit window in t as lo,hi.
    #[arg(long, global = true, value_delimiter = ',')]
    fit_window: Option<Vec<f64>>,
    #[arg(long, global = true)]
    fit_samples: Option<usize>,
    /// Monte Carlo sample count.
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Exponents β_j for `stats moments`.
    #[arg(long, global = true, value_delimiter = ',')]
    beta: Option<Vec<f64>>,
    #[arg(long, global = true)]
    l_cutoff: Option<f64>,
    #[arg(long, global = true)]
    r_max: Option<f64>,
    #[arg(long, global = true)]
    margin: Option<f64>,
    #[arg(long, global = true)]
    t_truncate: Option<f64>,
    /// Rotation quadrature nodes for limit curves.
    #[arg(long, global = true)]
    nodes: Option<usize>,
    /// Pair-correlation calibration point as xi,value.
    #[arg(long, global = true, value_delimiter = ',')]
    calibrate: Option<Vec<f64>>,
    #[arg(long, global = true)]
    curvature_bound: Option<f64>,
    /// Radius window for the packing exponent fit as lo,hi.
    #[arg(long, global = true, value_delimiter = ',')]
    eps_window: Option<Vec<f64>>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Enumerate an orbit slice and dump it as CSV.
    Orbit {
        /// Also write the binary cache `orbit.bin`.
        #[arg(long)]
        binary: bool,
    },
    /// Project an orbit slice to directions (ball) or boundary points (horoball).
    Project,
    /// Empirical statistics of the projected point set.
    Stats {
        #[arg(value_parser = ["gaps", "nn", "pair", "count", "moments"])]
        which: String,
    },
    /// Fit the critical exponent or the counting constant ratio.
    Fit {
        #[arg(value_parser = ["delta", "theta"])]
        which: String,
    },
    /// Build the truncated Patterson measure.
    Nu,
    /// Evaluate a limit curve.
    Limit {
        #[arg(value_parser = ["gaps", "gapdensity", "nn", "pair"])]
        which: String,
    },
    /// Apollonian packing generation and statistics.
    Packing {
        #[arg(value_parser = ["gen", "stats"])]
        which: String,
    },
    /// Compare two curve CSV files (sup norm and pointwise differences).
    Compare { first: PathBuf, second: PathBuf },
    /// Print the effective configuration as TOML.
    Config,
}

impl Command {
    fn label(&self) -> String {
        match self {
            Command::Orbit { .. } => "orbit".into(),
            Command::Project => "project".into(),
            Command::Stats { which } => format!("stats {which}"),
            Command::Fit { which } => format!("fit {which}"),
            Command::Nu => "nu".into(),
            Command::Limit { which } => format!("limit {which}"),
            Command::Packing { which } => format!("packing {which}"),
            Command::Compare { .. } => "compare".into(),
            Command::Config => "config".into(),
        }
    }
}

fn pair(name: &str, v: Option<Vec<f64>>) -> Result<Option<[f64; 2]>, CliError> {
    match v {
        None => Ok(None),
        Some(v) if v.len() == 2 => Ok(Some([v[0], v[1]])),
        Some(_) => Err(CliError::Usage(format!("--{name} takes exactly two comma-separated values"))),
    }
}

fn effective_config(p: Params, label: String) -> Result<RunConfig, CliError> {
    let mut c = match &p.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            RunConfig::from_toml(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    c.command = label;
    let z_given = p.z.is_some() || p.config.is_some();
    macro_rules! set {
        ($($field:ident <- $value:expr),* $(,)?) => {
            $(if let Some(v) = $value { c.$field = v; })*
        };
    }
    set!(
        group <- p.group,
        w <- p.w,
        z <- p.z,
        t <- p.t,
        s <- p.s,
        mode <- p.mode,
        grid <- p.grid,
        fit_window <- pair("fit-window", p.fit_window)?,
        fit_samples <- p.fit_samples,
        samples <- p.samples,
        beta <- p.beta,
        l_cutoff <- p.l_cutoff,
        margin <- p.margin,
        t_truncate <- p.t_truncate,
        nodes <- p.nodes,
        curvature_bound <- p.curvature_bound,
        eps_window <- pair("eps-window", p.eps_window)?,
        seed <- p.seed,
        threads <- p.threads,
        output_dir <- p.out,
    );
    if p.delta.is_some() {
        c.delta = p.delta;
    }
    if p.patterson_s.is_some() {
        c.patterson_s = p.patterson_s;
    }
    if p.r_max.is_some() {
        c.r_max = p.r_max;
    }
    if p.calibrate.is_some() {
        c.calibrate = pair("calibrate", p.calibrate)?;
    }
    if !z_given && c.z.len() != c.w.len() {
        // default observer: the base point i in the dimension of w
        c.z = vec![0.0; c.w.len()];
        *c.z.last_mut().expect("nonempty") = 1.0;
    }
    Ok(c)
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    let label = cli.command.label();
    let dump = cli.params.dump_config.clone();
    let cfg = effective_config(cli.params, label)?;
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let text = cfg.to_toml().map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(path) = dump {
        std::fs::write(&path, &text).map_err(|e| CliError::Domain {
            kind: "io",
            message: e.to_string(),
        })?;
    }
    if let Command::Config = cli.command {
        cfg.validate().map_err(CliError::Usage)?;
        // a closed stdout (e.g. a pipe into `head`) is not an error
        let _ = std::io::stdout().lock().write_all(text.as_bytes());
        return Ok(Outcome {
            artifacts: Vec::new(),
            summary: serde_json::Value::Null,
        });
    }
    let mut ctx = Context::new(cfg)?;
    match cli.command {
        Command::Orbit { binary } => commands::orbit(&ctx, binary),
        Command::Project => commands::project(&ctx),
        Command::Stats { which } => commands::stats(&mut ctx, &which),
        Command::Fit { which } => commands::fit(&mut ctx, &which),
        Command::Nu => commands::nu(&mut ctx),
        Command::Limit { which } => commands::limit(&mut ctx, &which),
        Command::Packing { which } => commands::packing(&mut ctx, &which),
        Command::Compare { first, second } => commands::compare(&ctx, &first, &second),
        Command::Config => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let is_config = matches!(cli.command, Command::Config);
    match run(cli) {
        Ok(out) => {
            if !is_config {
                let v = json!({ "artifacts": out.artifacts, "summary": out.summary });
                let text = serde_json::to_string_pretty(&v).expect("serializable summary");
                let _ = writeln!(std::io::stdout().lock(), "{text}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
