use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{ArgGroup, Parser, ValueEnum};

use spectra_core::dacg::{BetaFormula, DacgConfig};
use spectra_core::generate::{constant_unit_vector, generate_laplacian, LaplacianKind};
use spectra_core::ichol::IcFactor;
use spectra_core::jd::{jd_solve, JdConfig};
use spectra_core::mmio::load_matrix_market;
use spectra_core::newton::{solve_dacg_only, solve_with_factor, SolveReport, SolverConfig};
use spectra_core::pcg::PcgConfig;
use spectra_core::trace::{
    format_summary_table, write_comparison_csv, write_pairs_csv, write_trace_csv, RunLabel, SummaryRow,
};
use spectra_core::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Solver {
    DacgNewton,
    Jd,
    DacgPure,
}

impl Solver {
    fn name(self) -> &'static str {
        match self {
            Solver::DacgNewton => "dacg-newton",
            Solver::Jd => "jd",
            Solver::DacgPure => "dacg-pure",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Beta {
    Fr,
    Pr,
}

/// Leftmost eigenpairs of a sparse SPD matrix.
#[derive(Debug, Parser)]
#[command(name = "spectra", version)]
#[command(group(ArgGroup::new("source").required(true).args(["matrix", "generate"])))]
struct Cli {
    /// Matrix Market file (coordinate, real, symmetric).
    #[arg(long, value_name = "FILE")]
    matrix: Option<PathBuf>,

    /// Built-in test matrix: path:N, grid2d:K[xM], grid3d:K[xMxL], graph:N[:SEED].
    #[arg(long, value_name = "KIND")]
    generate: Option<String>,

    #[arg(long, value_enum, default_value = "dacg-newton")]
    solver: Solver,

    /// Number of leftmost eigenpairs.
    #[arg(long, default_value_t = 20)]
    neig: usize,

    /// Outer tolerance on the relative eigenresidual.
    #[arg(long, default_value_t = 1e-8)]
    tau: f64,

    /// Outer iterations per eigenpair.
    #[arg(long, default_value_t = 100)]
    itmax: usize,

    #[arg(long, default_value_t = 1e-2)]
    tau_dacg: f64,

    #[arg(long, default_value_t = 5000)]
    itmax_dacg: usize,

    #[arg(long, value_enum, default_value = "fr")]
    beta: Beta,

    #[arg(long, default_value_t = 1e-2)]
    tau_pcg: f64,

    #[arg(long, default_value_t = 20)]
    itmax_pcg: usize,

    /// Fill entries kept per row of the incomplete Cholesky factor.
    #[arg(long, default_value_t = 30)]
    lfil: usize,

    /// Drop tolerance of the incomplete Cholesky factor.
    #[arg(long, default_value_t = 1e-2)]
    tau_ic: f64,

    /// BFGS window length (dacg-newton; jd uses it only when given).
    #[arg(long)]
    kmax: Option<usize>,

    /// Run dacg-newton once per listed window length.
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    kmax_sweep: Option<Vec<usize>>,

    /// Jacobi-Davidson search space bounds.
    #[arg(long, default_value_t = 5)]
    jd_min: usize,
    #[arg(long, default_value_t = 10)]
    jd_max: usize,

    /// Deflate the constant vector (automatic for graph:N).
    #[arg(long)]
    deflate_constant: bool,

    /// Output directory for summary.csv, comparison.csv, trace.csv and report.txt.
    #[arg(long, default_value = "spectra-out")]
    out: PathBuf,

    /// Seed for start vectors; SPECTRA_SEED takes precedence.
    #[arg(long, default_value_t = 20_240_917)]
    seed: u64,
}

struct Problem {
    matrix: SparseMatrix,
    description: String,
    deflate_constant: bool,
}

fn parse_dims(text: &str, count: usize) -> anyhow::Result<Vec<usize>> {
    let parts: Vec<usize> = text
        .split('x')
        .map(|p| p.parse::<usize>().with_context(|| format!("bad size {p:?}")))
        .collect::<anyhow::Result<_>>()?;
    match parts.len() {
        1 => Ok(vec![parts[0]; count]),
        m if m == count => Ok(parts),
        _ => bail!("expected 1 or {count} sizes in {text:?}"),
    }
}

fn parse_generator(spec: &str) -> anyhow::Result<LaplacianKind> {
    let (kind, rest) = spec
        .split_once(':')
        .with_context(|| format!("generator spec {spec:?} must look like kind:size"))?;
    Ok(match kind {
        "path" => LaplacianKind::Path {
            n: parse_dims(rest, 1)?[0],
        },
        "grid2d" => {
            let d = parse_dims(rest, 2)?;
            LaplacianKind::Grid2d { nx: d[0], ny: d[1] }
        }
        "grid3d" => {
            let d = parse_dims(rest, 3)?;
            LaplacianKind::Grid3d {
                nx: d[0],
                ny: d[1],
                nz: d[2],
            }
        }
        "graph" => {
            let (n, seed) = match rest.split_once(':') {
                Some((n, seed)) => (n, Some(seed.parse::<u64>().context("bad graph seed")?)),
                None => (rest, None),
            };
            let mut g = LaplacianKind::graph(n.parse().context("bad graph size")?);
            if let (Some(s), LaplacianKind::Graph { seed, .. }) = (seed, &mut g) {
                *seed = s;
            }
            g
        }
        other => bail!("unknown generator {other:?} (expected path, grid2d, grid3d or graph)"),
    })
}

fn load_problem(cli: &Cli) -> anyhow::Result<Problem> {
    if let Some(path) = &cli.matrix {
        let matrix = load_matrix_market(path).with_context(|| format!("cannot load {}", path.display()))?;
        return Ok(Problem {
            matrix,
            description: path.display().to_string(),
            deflate_constant: cli.deflate_constant,
        });
    }
    let spec = cli.generate.as_deref().expect("clap enforces one source");
    let kind = parse_generator(spec)?;
    let matrix = generate_laplacian(&kind)?;
    Ok(Problem {
        matrix,
        description: spec.to_string(),
        deflate_constant: cli.deflate_constant || kind.has_constant_null_vector(),
    })
}

fn seed(cli: &Cli) -> anyhow::Result<u64> {
    match std::env::var("SPECTRA_SEED") {
        Ok(v) => v.trim().parse().with_context(|| format!("SPECTRA_SEED={v:?} is not an integer")),
        Err(_) => Ok(cli.seed),
    }
}

fn solver_config(cli: &Cli, seed: u64, deflation: Vec<Vec<f64>>) -> SolverConfig {
    SolverConfig {
        n_eig: cli.neig,
        tau: cli.tau,
        itmax: cli.itmax,
        dacg: DacgConfig {
            tau_dacg: cli.tau_dacg,
            itmax_dacg: cli.itmax_dacg,
            beta: match cli.beta {
                Beta::Fr => BetaFormula::FletcherReeves,
                Beta::Pr => BetaFormula::PolakRibiere,
            },
            ..DacgConfig::default()
        },
        pcg: PcgConfig {
            tau_pcg: cli.tau_pcg,
            itmax_pcg: cli.itmax_pcg,
            ..PcgConfig::default()
        },
        lfil: cli.lfil,
        tau_ic: cli.tau_ic,
        k_max: cli.kmax.unwrap_or(5),
        seed,
        initial_deflation: deflation,
        ..SolverConfig::default()
    }
}

struct Run {
    solver: Solver,
    k_max: usize,
    report: SolveReport,
}

fn run(cli: &Cli) -> anyhow::Result<bool> {
    if cli.kmax_sweep.is_some() && cli.solver != Solver::DacgNewton {
        bail!("--kmax-sweep applies to --solver dacg-newton only");
    }
    let problem = load_problem(cli)?;
    let a = &problem.matrix;
    let n = a.n();
    let deflation = if problem.deflate_constant {
        vec![constant_unit_vector(n)]
    } else {
        Vec::new()
    };
    let cfg = solver_config(cli, seed(cli)?, deflation);
    cfg.validate(n)?;

    fs::create_dir_all(&cli.out).with_context(|| format!("cannot create {}", cli.out.display()))?;

    let t = Instant::now();
    let ic = IcFactor::factor(a, cfg.lfil, cfg.tau_ic)?;
    let factor_time = t.elapsed();

    let mut runs = Vec::new();
    match cli.solver {
        Solver::DacgNewton => {
            let sweep = cli.kmax_sweep.clone().unwrap_or_else(|| vec![cfg.k_max]);
            for k_max in sweep {
                let run_cfg = SolverConfig { k_max, ..cfg.clone() };
                let mut report = solve_with_factor(a, &ic, &run_cfg, &mut ())?;
                report.timings.factorization = factor_time;
                runs.push(Run {
                    solver: cli.solver,
                    k_max,
                    report,
                });
            }
        }
        Solver::Jd => {
            let jd_cfg = JdConfig {
                n_eig: cfg.n_eig,
                tau: cfg.tau,
                itmax: cfg.itmax,
                m_min: cli.jd_min,
                m_max: cli.jd_max,
                pcg: cfg.pcg.clone(),
                seed: cfg.seed,
                k_max: cli.kmax.unwrap_or(0),
                initial_deflation: cfg.initial_deflation.clone(),
            };
            let mut report = jd_solve(a, &ic, &jd_cfg)?;
            report.timings.factorization = factor_time;
            runs.push(Run {
                solver: cli.solver,
                k_max: jd_cfg.k_max,
                report,
            });
        }
        Solver::DacgPure => {
            let mut report = solve_dacg_only(a, &ic, &cfg)?;
            report.timings.factorization = factor_time;
            runs.push(Run {
                solver: cli.solver,
                k_max: 0,
                report,
            });
        }
    }

    write_outputs(cli, &problem, &ic, &runs)?;
    Ok(runs.iter().all(|r| r.report.all_converged()))
}

fn write_outputs(cli: &Cli, problem: &Problem, ic: &IcFactor, runs: &[Run]) -> anyhow::Result<()> {
    let out = &cli.out;
    let labelled: Vec<(RunLabel<'_>, &SolveReport)> = runs
        .iter()
        .map(|r| {
            (
                RunLabel {
                    solver: r.solver.name(),
                    k_max: r.k_max,
                },
                &r.report,
            )
        })
        .collect();
    let rows: Vec<SummaryRow> = runs.iter().map(|r| r.report.summary_row(r.solver.name(), r.k_max)).collect();

    write_pairs_csv(&labelled, BufWriter::new(create(&out.join("summary.csv"))?))?;
    write_comparison_csv(&rows, BufWriter::new(create(&out.join("comparison.csv"))?))?;
    let traces: Vec<_> = labelled.iter().map(|(l, r)| (*l, &r.trace)).collect();
    write_trace_csv(&traces, BufWriter::new(create(&out.join("trace.csv"))?))?;

    let table = format_summary_table(&rows);
    let a = &problem.matrix;
    let mut report = String::new();
    writeln!(report, "matrix        {}", problem.description)?;
    writeln!(report, "n             {}", a.n())?;
    writeln!(report, "nnz           {}", a.nnz())?;
    writeln!(report, "lfil, tau_ic  {}, {:e}", ic.lfil(), ic.tau_ic())?;
    writeln!(report, "fill sigma    {:.3}", ic.fill_ratio())?;
    if ic.shift_used() > 0.0 {
        writeln!(report, "ic shift      {:e}", ic.shift_used())?;
    }
    if problem.deflate_constant {
        writeln!(report, "deflated      constant vector")?;
    }
    writeln!(report)?;
    writeln!(report, "{table}")?;
    for (run, row) in runs.iter().zip(&rows) {
        writeln!(report, "{} k_max={}:", run.solver.name(), run.k_max)?;
        let t = &run.report.timings;
        writeln!(
            report,
            "  wall clock: factorization {:.3} s, warm start {:.3} s, refinement {:.3} s",
            t.factorization.as_secs_f64(),
            t.warm_start.as_secs_f64(),
            t.refinement.as_secs_f64()
        )?;
        writeln!(report, "  converged {}/{}", row.converged, row.n_eig)?;
        for p in &run.report.pairs {
            writeln!(
                report,
                "  {:>3}  lambda {:.12e}  residual {:.2e}{}",
                p.level,
                p.lambda,
                p.rel_residual,
                if p.converged { "" } else { "  not converged" }
            )?;
        }
    }
    fs::write(out.join("report.txt"), &report).with_context(|| format!("cannot write to {}", out.display()))?;
    print!("{table}");
    Ok(())
}

fn create(path: &Path) -> anyhow::Result<File> {
    File::create(path).with_context(|| format!("cannot create {}", path.display()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if std::env::args_os().len() <= 1 {
        use clap::CommandFactory;
        eprintln!("{}", Cli::command().render_help());
        return ExitCode::from(1);
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("some eigenpairs did not converge; see {}", cli.out.join("report.txt").display());
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_specs() {
        assert_eq!(parse_generator("path:7").unwrap(), LaplacianKind::Path { n: 7 });
        assert_eq!(parse_generator("grid2d:4").unwrap(), LaplacianKind::Grid2d { nx: 4, ny: 4 });
        assert_eq!(parse_generator("grid2d:4x6").unwrap(), LaplacianKind::Grid2d { nx: 4, ny: 6 });
        assert_eq!(
            parse_generator("grid3d:2x3x4").unwrap(),
            LaplacianKind::Grid3d { nx: 2, ny: 3, nz: 4 }
        );
        match parse_generator("graph:300:9").unwrap() {
            LaplacianKind::Graph { n, seed, .. } => assert_eq!((n, seed), (300, 9)),
            other => panic!("{other:?}"),
        }
        assert!(parse_generator("grid2d:4x5x6").is_err());
        assert!(parse_generator("torus:4").is_err());
        assert!(parse_generator("grid2d").is_err());
    }

    #[test]
    fn defaults_follow_table() {
        let cli = Cli::try_parse_from(["spectra", "--generate", "path:50"]).unwrap();
        let cfg = solver_config(&cli, 1, Vec::new());
        let d = SolverConfig::default();
        assert_eq!(
            (cfg.n_eig, cfg.tau, cfg.itmax, cfg.lfil, cfg.tau_ic, cfg.k_max),
            (d.n_eig, d.tau, d.itmax, d.lfil, d.tau_ic, d.k_max)
        );
        assert_eq!(cfg.dacg, d.dacg);
        assert_eq!(cfg.pcg, d.pcg);
    }

    #[test]
    fn sources_are_exclusive() {
        assert!(Cli::try_parse_from(["spectra", "--generate", "path:5", "--matrix", "a.mtx"]).is_err());
        assert!(Cli::try_parse_from(["spectra", "--neig", "3"]).is_err());
    }
}
