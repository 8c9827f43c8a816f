use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use rfvar::record::write_csv;
use rfvar::{CleanVarianceForm, Source, SweepRecord};
use rfvar_cli::{run_analytic, run_estimator, run_mc, verify, GridSpec, KappaAxis, McBudget, SweepSpec};

#[derive(Parser, Debug)]
#[command(name = "rfvar", version, about = "Bias-variance sweeps for random-feature ridge regression")]
struct Cli {
    /// Cap on worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Closed-form (and optionally quadrature) sweep.
    Analytic {
        #[command(flatten)]
        axes: Axes,
        /// Also emit Marchenko-Pastur quadrature rows.
        #[arg(long)]
        quadrature: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo sweep; writes `<out>.se.csv` with standard errors.
    Mc {
        #[command(flatten)]
        axes: Axes,
        #[command(flatten)]
        budget: Budget,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Split-estimator sweep.
    Estimator {
        #[command(flatten)]
        axes: Axes,
        #[command(flatten)]
        budget: Budget,
        #[arg(long, default_value_t = 5)]
        splits: usize,
        #[arg(long, default_value_t = 1000)]
        test_size: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the self-check suite.
    Verify {
        #[arg(long, value_enum, default_value_t = LevelArg::Quick)]
        level: LevelArg,
        #[arg(long, default_value = "corrected")]
        clean_form: CleanVarianceForm,
        #[command(flatten)]
        budget: Budget,
    },
}

#[derive(Args, Debug)]
struct Axes {
    #[arg(long = "lambda0", default_value = "0.1")]
    lambda0: Vec<f64>,
    #[arg(long = "sigma0-sq", default_value = "1")]
    sigma0_sq: Vec<f64>,
    /// `start:stop:steps[:log]` or a single value.
    #[arg(long, default_value = "0.05:4:80")]
    gamma_grid: GridSpec,
    #[arg(long, conflicts_with = "alpha")]
    alpha_grid: Option<GridSpec>,
    /// Fixed mask density.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, conflicts_with = "kappa_tie_gamma")]
    kappa: Option<f64>,
    /// Use kappa = gamma at every grid point.
    #[arg(long)]
    kappa_tie_gamma: bool,
    #[arg(long, default_value = "corrected")]
    clean_form: CleanVarianceForm,
}

#[derive(Args, Debug)]
struct Budget {
    #[arg(long, default_value_t = 128)]
    d: usize,
    #[arg(long, default_value_t = 64.0)]
    rho: f64,
    #[arg(long, default_value_t = 300)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// q/d of the masked model when no kappa is given.
    #[arg(long, default_value_t = 4.0)]
    q_ratio: f64,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum LevelArg {
    Quick,
    Full,
}

impl Budget {
    fn to_budget(&self) -> McBudget {
        McBudget {
            d: self.d,
            rho: self.rho,
            trials: self.trials,
            seed: self.seed,
            q_ratio: self.q_ratio,
        }
    }
}

impl Axes {
    fn to_spec(&self, sources: Vec<Source>, budget: Option<McBudget>) -> SweepSpec {
        let kappa = match (self.kappa, self.kappa_tie_gamma) {
            (Some(k), _) => KappaAxis::Fixed(k),
            (None, true) => KappaAxis::TieToGamma,
            (None, false) => KappaAxis::Unused,
        };
        let alpha = match (&self.alpha_grid, self.alpha) {
            (Some(g), _) => Some(g.points()),
            (None, Some(a)) => Some(vec![a]),
            (None, None) => None,
        };
        SweepSpec {
            lambda0: self.lambda0.clone(),
            sigma0_sq: self.sigma0_sq.clone(),
            gamma: self.gamma_grid.points(),
            alpha,
            kappa,
            sources,
            mc_budget: budget,
            clean_form: self.clean_form,
        }
    }
}

fn emit(rows: &[SweepRecord], out: Option<&Path>) -> anyhow::Result<()> {
    match out {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            let mut w = BufWriter::new(file);
            write_csv(&mut w, rows)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            write_csv(stdout.lock(), rows)?;
        }
    }
    Ok(())
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".se.csv");
    PathBuf::from(s)
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Analytic { axes, quadrature, out } => {
            let mut sources = vec![Source::Analytic];
            if quadrature {
                sources.push(Source::Quadrature);
            }
            emit(&run_analytic(&axes.to_spec(sources, None))?, out.as_deref())?;
        }
        Command::Mc { axes, budget, out } => {
            let spec = axes.to_spec(vec![Source::Mc], Some(budget.to_budget()));
            if budget.rho < 8.0 {
                eprintln!("warning: rho = {} is below the recommended 8", budget.rho);
            }
            let (rows, se) = run_mc(&spec)?;
            emit(&rows, out.as_deref())?;
            if let Some(path) = &out {
                emit(&se, Some(&sidecar(path)))?;
            }
        }
        Command::Estimator {
            axes,
            budget,
            splits,
            test_size,
            out,
        } => {
            let spec = axes.to_spec(vec![Source::Estimator], Some(budget.to_budget()));
            emit(&run_estimator(&spec, splits, test_size)?, out.as_deref())?;
        }
        Command::Verify { level, clean_form, budget } => {
            let ctx = verify::VerifyContext {
                clean_form,
                mc: budget.to_budget(),
                ..Default::default()
            };
            let level = match level {
                LevelArg::Quick => verify::Level::Quick,
                LevelArg::Full => verify::Level::Full,
            };
            let report = verify::run(level, &ctx);
            println!("{report}");
            return Ok(if report.all_pass() { ExitCode::SUCCESS } else { ExitCode::from(1) });
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
