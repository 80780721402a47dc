#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use patankar::csvio;
use patankar::harness::{self, total_variation};
use patankar::mprk::{scheme_by_name, Method, SCHEME_NAMES};
use patankar::pds::{problem_by_name, robertson, PdsProblem, PROBLEM_NAMES};
use patankar::Result;

#[derive(Parser)]
#[command(name = "patankar", version, about = "Positive and conservative MPRK integrators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SchemeArgs {
    #[arg(long)]
    scheme: String,
    /// Two-stage tableau parameter (a21 = c2 = alpha).
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Convex PWD weight.
    #[arg(long, default_value_t = 0.5)]
    omega: f64,
    /// Convex PWD first exponent.
    #[arg(long, default_value_t = 1.0)]
    s1: f64,
}

impl SchemeArgs {
    fn method(&self) -> Result<Method> {
        scheme_by_name(&self.scheme, self.alpha, self.omega, self.s1)
    }

    fn meta(&self, method: &Method) -> Vec<(String, String)> {
        let mut meta = vec![("scheme_name".to_string(), self.scheme.clone())];
        if let Method::Patankar(cfg) = method {
            if cfg.kind.stages() == 2 {
                meta.push(("alpha".into(), self.alpha.to_string()));
            }
            meta.push(("delta".into(), cfg.delta.to_string()));
            if let patankar::mprk::FinalPwd::Convex { omega, s1 } = cfg.pwd {
                meta.push(("omega".into(), omega.to_string()));
                meta.push(("s1".into(), s1.to_string()));
            }
        }
        meta
    }
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one problem with a fixed step and write the trajectory.
    Run {
        #[arg(long)]
        problem: String,
        #[command(flatten)]
        scheme: SchemeArgs,
        #[arg(long)]
        dt: f64,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Step-halving study: dt = dt_max / 2^k.
    Converge {
        #[arg(long)]
        problem: String,
        #[command(flatten)]
        scheme: SchemeArgs,
        /// Defaults to a fifth of the problem's time span.
        #[arg(long)]
        dt_max: Option<f64>,
        #[arg(long, default_value_t = 8)]
        levels: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Error of MPRK22(alpha) (or MPRK22ncs with --ncs) for several alphas.
    SweepAlpha {
        #[arg(long)]
        problem: String,
        #[arg(long, value_delimiter = ',', required = true)]
        alphas: Vec<f64>,
        #[arg(long)]
        dt: f64,
        #[arg(long)]
        ncs: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Robertson problem with geometrically growing steps.
    Robertson {
        #[command(flatten)]
        scheme: SchemeArgs,
        #[arg(long, default_value_t = 1e-6)]
        dt0: f64,
        #[arg(long, default_value_t = 2.0)]
        ratio: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// List available problems and schemes.
    List,
}

fn problem_meta(problem: &PdsProblem) -> Vec<(String, String)> {
    problem
        .params()
        .iter()
        .map(|(k, v)| (format!("param_{k}"), v.to_string()))
        .collect()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            problem,
            scheme,
            dt,
            t_end,
            out,
        } => {
            let problem = problem_by_name(&problem)?;
            let method = scheme.method()?;
            let (t0, t1) = problem.default_span();
            let traj = harness::integrate_fixed(
                &problem,
                &method,
                problem.default_initial(),
                (t0, t_end.unwrap_or(t1)),
                dt,
            )?;
            let mut meta = scheme.meta(&method);
            meta.push(("dt".into(), dt.to_string()));
            meta.extend(problem_meta(&problem));
            let mut w = create(&out)?;
            csvio::write_trajectory(&mut w, &traj, &meta)?;
            w.flush()?;
        }
        Command::Converge {
            problem,
            scheme,
            dt_max,
            levels,
            out,
        } => {
            let problem = problem_by_name(&problem)?;
            let method = scheme.method()?;
            let (t0, t1) = problem.default_span();
            let dt_max = dt_max.unwrap_or((t1 - t0) / 5.0);
            let report = harness::convergence_study(&problem, &method, dt_max, levels)?;
            let mut meta = scheme.meta(&method);
            meta.push(("dt_max".into(), dt_max.to_string()));
            meta.push(("levels".into(), levels.to_string()));
            meta.extend(problem_meta(&problem));
            let mut w = create(&out)?;
            csvio::write_report(&mut w, &report, &meta)?;
            w.flush()?;
        }
        Command::SweepAlpha {
            problem,
            alphas,
            dt,
            ncs,
            out,
        } => {
            let problem = problem_by_name(&problem)?;
            let rows = harness::alpha_sweep(&problem, &alphas, dt, !ncs)?;
            let mut meta = vec![
                ("problem".to_string(), problem.name().to_string()),
                ("scheme".into(), if ncs { "MPRK22ncs" } else { "MPRK22" }.into()),
                ("delta".into(), if ncs { "0" } else { "1" }.into()),
                ("dt".into(), dt.to_string()),
            ];
            meta.extend(problem_meta(&problem));
            let mut w = create(&out)?;
            csvio::write_sweep(&mut w, &rows, &meta)?;
            w.flush()?;
        }
        Command::Robertson {
            scheme,
            dt0,
            ratio,
            out,
        } => {
            let problem = robertson();
            let method = scheme.method()?;
            let (t0, t1) = problem.default_span();
            let traj =
                harness::integrate_geometric(&problem, &method, problem.default_initial(), t0, dt0, ratio, t1)?;
            let mut meta = scheme.meta(&method);
            meta.push(("dt0".into(), dt0.to_string()));
            meta.push(("ratio".into(), ratio.to_string()));
            meta.push(("plot_scale".into(), "1,1e4,1".into()));
            let mut w = create(&out)?;
            csvio::write_trajectory(&mut w, &traj, &meta)?;
            csvio::write_tv_footer(&mut w, &total_variation(&traj))?;
            w.flush()?;
        }
        Command::List => {
            println!("problems:");
            for name in PROBLEM_NAMES {
                let p = problem_by_name(name)?;
                let (t0, t1) = p.default_span();
                println!("  {name:<12} n={} span=[{t0}, {t1}]", p.dim());
            }
            println!("schemes:");
            for name in SCHEME_NAMES {
                println!("  {name}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
