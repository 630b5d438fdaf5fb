use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fracctl::experiment::{format_csv, format_table, load_config, Experiment};
use fracctl::gramian::assemble_gramian;
use fracctl::mlf::{ml_eval, MlParams};
use fracctl::spectral::{verify_decay, SpectralOperator};
use fracctl::Error;

#[derive(Parser)]
#[command(name = "fracctl", version, about = "Regularized control of fractional evolution equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write output here instead of stdout
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Layout of the `run` results
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Table,
}

#[derive(Subcommand)]
enum Command {
    /// Run the regularization sweep of a configuration
    Run {
        /// Record per-row wall time (otherwise written as 0)
        #[arg(long)]
        timing: bool,
    },
    /// Validate a configuration and evaluate the growth condition
    Check,
    /// Evaluate the Mittag-Leffler function E_{alpha,beta}(z)
    Kernel {
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, allow_negative_numbers = true, num_args = 1.., required = true)]
        z: Vec<f64>,
    },
    /// Check the decay of the solution operator
    Decay {
        /// Order; defaults to the configuration's
        #[arg(long)]
        alpha: Option<f64>,
        /// Single eigenvalue to use instead of a configuration
        #[arg(long, allow_negative_numbers = true)]
        mu: Option<f64>,
    },
    /// Eigenvalues of the controllability Gramian of a configuration
    Gramian,
}

enum Failure {
    Invalid(String),
    Rows,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Invalid(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Rows) => ExitCode::from(2),
    }
}

fn experiment(common: &Common) -> Result<Experiment, Failure> {
    let path = common.config.as_deref().ok_or_else(|| Failure::Invalid("--config is required".into()))?;
    Ok(load_config(path)?.build()?)
}

fn emit(common: &Common, text: &str) -> Result<(), Failure> {
    match &common.out {
        Some(path) => std::fs::write(path, text).map_err(|source| Error::Io { path: path.clone(), source }.into()),
        None => {
            let _ = std::io::stdout().write_all(text.as_bytes());
            Ok(())
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    let common = &cli.common;
    match &cli.command {
        Command::Run { timing } => {
            let exp = experiment(common)?;
            if common.verbose {
                eprintln!("{}", describe(&exp, common.config.as_deref()));
            }
            let rows = exp.run(*timing)?;
            let text = match common.format {
                Format::Csv => format_csv(&rows),
                Format::Table => format_table(&rows),
            };
            emit(common, &text)?;
            let mut all_ok = true;
            for r in &rows {
                if let Some(f) = &r.failure {
                    eprintln!("row a={:e} failed: {f}", r.a);
                    all_ok = false;
                } else if !r.converged {
                    eprintln!("row a={:e} did not converge in {} iterations", r.a, r.picard_iters);
                    all_ok = false;
                }
            }
            if all_ok {
                Ok(())
            } else {
                Err(Failure::Rows)
            }
        }
        Command::Check => {
            let exp = experiment(common)?;
            let g = exp.growth_check()?;
            let mut s = describe(&exp, common.config.as_deref());
            let _ = writeln!(s, "growth: M={} M_B={} gamma={:e}", g.m, g.m_b, g.gamma);
            let _ = writeln!(s, "condition value {:e} ({})", g.value, if g.satisfied { "satisfied" } else { "violated" });
            emit(common, &s)
        }
        Command::Kernel { alpha, beta, z } => {
            let params = MlParams::new(*alpha, *beta).map_err(Error::from)?;
            let mut s = String::from("z,value,est_abs_error,branch\n");
            for &z in z {
                let r = ml_eval(params, z).map_err(Error::from)?;
                let _ = writeln!(s, "{z:e},{:e},{:e},{:?}", r.value, r.est_abs_error, r.branch);
            }
            emit(common, &s)
        }
        Command::Decay { alpha, mu } => {
            let (op, alpha) = match (mu, common.config.is_some()) {
                (Some(mu), _) => {
                    let alpha = alpha.ok_or_else(|| Failure::Invalid("--alpha is required with --mu".into()))?;
                    (SpectralOperator::new(vec![*mu])?, alpha)
                }
                (None, true) => {
                    let exp = experiment(common)?;
                    (exp.op, alpha.unwrap_or(exp.alpha))
                }
                (None, false) => return Err(Failure::Invalid("give --config or --mu".into())),
            };
            let rep = verify_decay(&op, alpha)?;
            let mut s = format!(
                "fitted_C={:e}\nfitted_slope={:e}\nmax_ratio={:e}\n",
                rep.fitted_c, rep.fitted_slope, rep.max_ratio
            );
            if common.verbose {
                s.push_str("t,norm\n");
                for (t, n) in &rep.samples {
                    let _ = writeln!(s, "{t:e},{n:e}");
                }
            }
            emit(common, &s)
        }
        Command::Gramian => {
            let exp = experiment(common)?;
            let g = assemble_gramian(&exp.op, exp.alpha, &exp.control, exp.horizon, exp.quad_nodes)?;
            let mut s = String::from("index,eigenvalue\n");
            for (i, l) in g.eigenvalues().iter().enumerate() {
                let _ = writeln!(s, "{},{l:e}", i + 1);
            }
            emit(common, &s)
        }
    }
}

fn describe(exp: &Experiment, path: Option<&Path>) -> String {
    format!(
        "{}: N={} alpha={} b={} rhs={} ({}) nonlocal={} rows={}\n",
        path.map(|p| p.display().to_string()).unwrap_or_default(),
        exp.op.dim(),
        exp.alpha,
        exp.horizon,
        exp.rhs.name(),
        exp.rhs.selection.name(),
        exp.nonlocal.is_some(),
        exp.a_values.len()
    )
}
