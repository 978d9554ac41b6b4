//! `henren`: command-line front end.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration, exit status 2.
    Usage(String),
    /// The computation itself failed, exit status 1.
    Domain { reason: String, detail: Option<String> },
}

impl From<henren::Error> for CliError {
    fn from(e: henren::Error) -> Self {
        CliError::Domain { reason: e.to_string(), detail: None }
    }
}

#[derive(Parser, Debug)]
#[command(name = "henren", version, about = "Renormalization of unimodal and Hénon-like maps")]
struct Cli {
    /// JSON config; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Result JSON path; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Per-depth CSV table.
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
    /// Omit the metadata block, making output byte-reproducible.
    #[arg(long, global = true)]
    no_meta: bool,
    /// Worker threads.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Arithmetic mode; only `double`.
    #[arg(long, global = true)]
    precision: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Regularity {
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long = "L")]
    l: Option<f64>,
    /// Side of the certification grid.
    #[arg(long)]
    grid: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Renormalize a map repeatedly and record every level.
    Renormalize {
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long)]
        bmax: Option<usize>,
        #[command(flatten)]
        reg: Regularity,
        /// Skip the regularity certification of the levels.
        #[arg(long)]
        no_certify: bool,
    },
    /// Certify the return of one level.
    Certify {
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long)]
        depth: Option<usize>,
        /// Level to certify; the deepest by default.
        #[arg(long)]
        level: Option<usize>,
        #[arg(long)]
        bmax: Option<usize>,
        #[command(flatten)]
        reg: Regularity,
    },
    /// Find parameters realizing a combinatorics word.
    Search {
        #[arg(long)]
        family: Option<String>,
        #[arg(long)]
        jacobian: Option<f64>,
        #[arg(long)]
        word: Option<PathBuf>,
        #[arg(long)]
        depth: Option<usize>,
        /// Parameter interval `lo,hi`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        params: Option<Vec<f64>>,
        #[arg(long)]
        bmax: Option<usize>,
        #[arg(long)]
        scan: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        eta: Option<f64>,
        #[command(flatten)]
        reg: Regularity,
        #[arg(long)]
        no_certify: bool,
    },
    /// Convergence diagnostics and the finite-time check along a sequence.
    Converge {
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long)]
        bmax: Option<usize>,
        #[command(flatten)]
        reg: Regularity,
        #[arg(long)]
        eps0: Option<f64>,
        #[arg(long = "C")]
        c: Option<f64>,
        #[arg(long = "K")]
        k: Option<f64>,
        #[arg(long)]
        d: Option<f64>,
        /// Quadratic parameter of the reference 1D orbit.
        #[arg(long, allow_hyphen_values = true)]
        reference: Option<f64>,
        /// Radius factor of the unicriticality probe; no probe when absent.
        #[arg(long)]
        probe_t: Option<f64>,
        #[arg(long)]
        probe_samples: Option<usize>,
    },
    /// Kneading flags of the profile.
    Kneading {
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        chi: Option<usize>,
    },
    /// Lyapunov estimate from attractor orbits.
    Lyapunov {
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        transient: Option<usize>,
    },
}

fn flags_of(cli: &Cli) -> RunConfig {
    let mut f = RunConfig {
        out: cli.out.clone(),
        csv: cli.csv.clone(),
        workers: cli.workers,
        seed: cli.seed,
        precision: cli.precision.clone(),
        ..Default::default()
    };
    let reg = |f: &mut RunConfig, r: &Regularity| {
        f.eps = r.eps;
        f.lambda = r.lambda;
        f.l = r.l;
        f.grid = r.grid;
    };
    match &cli.command {
        Command::Renormalize { map, depth, bmax, reg: r, no_certify } => {
            f.command = Some("renormalize".into());
            f.map = map.clone();
            f.depth = *depth;
            f.bmax = *bmax;
            reg(&mut f, r);
            f.certify = no_certify.then_some(false);
        }
        Command::Certify { map, depth, level, bmax, reg: r } => {
            f.command = Some("certify".into());
            f.map = map.clone();
            f.depth = *depth;
            f.level = *level;
            f.bmax = *bmax;
            reg(&mut f, r);
        }
        Command::Search { family, jacobian, word, depth, params, bmax, scan, tol, eta, reg: r, no_certify } => {
            f.command = Some("search".into());
            f.family = family.clone();
            f.jacobian = *jacobian;
            f.word = word.clone();
            f.depth = *depth;
            f.params = params.as_ref().map(|p| [p[0], p[1]]);
            f.bmax = *bmax;
            f.scan = *scan;
            f.tol = *tol;
            f.eta = *eta;
            reg(&mut f, r);
            f.certify = no_certify.then_some(false);
        }
        Command::Converge { map, depth, bmax, reg: r, eps0, c, k, d, reference, probe_t, probe_samples } => {
            f.command = Some("converge".into());
            f.map = map.clone();
            f.depth = *depth;
            f.bmax = *bmax;
            reg(&mut f, r);
            f.eps0 = *eps0;
            f.c = *c;
            f.k = *k;
            f.d = *d;
            f.reference = *reference;
            f.probe_t = *probe_t;
            f.probe_samples = *probe_samples;
        }
        Command::Kneading { map, eta, chi } => {
            f.command = Some("kneading".into());
            f.map = map.clone();
            f.eta = *eta;
            f.chi = *chi;
        }
        Command::Lyapunov { map, horizon, seeds, transient } => {
            f.command = Some("lyapunov".into());
            f.map = map.clone();
            f.horizon = *horizon;
            f.seeds = *seeds;
            f.transient = *transient;
        }
    }
    f
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Command::Search { params: Some(p), .. } = &cli.command {
        if p.len() != 2 {
            return Err(CliError::Usage(format!("--params: expected lo,hi, got {} values", p.len())));
        }
    }
    let flags = flags_of(cli);
    let base = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let (Some(a), Some(b)) = (&base.command, &flags.command) {
        if a != b {
            return Err(CliError::Usage(format!("--config: command \"{a}\" does not match subcommand \"{b}\"")));
        }
    }
    let cfg = base.merged(&flags);
    cfg.validate()?;
    if let Some(n) = cfg.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--workers: {e}")))?;
    }
    commands::dispatch(&cfg, !cli.no_meta)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Domain { reason, detail }) => {
            let msg = serde_json::json!({ "status": "error", "reason": reason, "detail": detail });
            eprintln!("{msg}");
            ExitCode::from(1)
        }
    }
}
