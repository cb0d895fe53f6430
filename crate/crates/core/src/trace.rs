//! Per-iteration convergence records and their CSV serialization.

use std::io::Write;
use std::time::Duration;

use crate::newton::SolveReport;
use crate::pcg::ExitReason;

pub const TRACE_SCHEMA: &str = "# spectra-trace v1";
pub const SUMMARY_SCHEMA: &str = "# spectra-summary v1";
pub const COMPARISON_SCHEMA: &str = "# spectra-comparison v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Dacg,
    Newton,
    Jd,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Dacg => "dacg",
            Phase::Newton => "newton",
            Phase::Jd => "jd",
        }
    }
}

/// `Outer` rows carry an explicitly computed eigenresidual after an outer
/// step; `Inner` rows carry the monitored eigenresidual of the tentative
/// iterate after one inner CG iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Outer,
    Inner,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub level: usize,
    pub phase: Phase,
    pub kind: RowKind,
    pub outer_iter: usize,
    /// Inner iteration within the current correction solve (0 for outer rows).
    pub inner_iter: usize,
    /// Inner iterations accumulated over the level so far.
    pub cumulative_inner: usize,
    /// Products with A accumulated over the whole run.
    pub cumulative_mvp: u64,
    pub theta: f64,
    /// ‖Au - θu‖/θ
    pub rel_residual: f64,
    pub pcg_exit: Option<ExitReason>,
}

#[derive(Debug, Clone, Default)]
pub struct ConvergenceTrace {
    pub rows: Vec<TraceRow>,
}

impl ConvergenceTrace {
    pub fn push(&mut self, row: TraceRow) {
        self.rows.push(row);
    }

    pub fn level(&self, level: usize) -> impl Iterator<Item = &TraceRow> {
        self.rows.iter().filter(move |r| r.level == level)
    }
}

/// One labelled run for the CSV writers.
#[derive(Debug, Clone, Copy)]
pub struct RunLabel<'a> {
    pub solver: &'a str,
    pub k_max: usize,
}

pub fn write_trace_csv<W: Write>(runs: &[(RunLabel<'_>, &ConvergenceTrace)], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{TRACE_SCHEMA}")?;
    writeln!(
        w,
        "solver,k_max,level,phase,kind,outer_iter,inner_iter,cumulative_inner,cumulative_mvp,theta,rel_residual,pcg_exit"
    )?;
    for (label, trace) in runs {
        for r in &trace.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{:e},{:e},{}",
                label.solver,
                label.k_max,
                r.level,
                r.phase.as_str(),
                match r.kind {
                    RowKind::Outer => "outer",
                    RowKind::Inner => "inner",
                },
                r.outer_iter,
                r.inner_iter,
                r.cumulative_inner,
                r.cumulative_mvp,
                r.theta,
                r.rel_residual,
                r.pcg_exit.map_or("", ExitReason::as_str)
            )?;
        }
    }
    Ok(())
}

/// One row per computed eigenpair, ascending in λ within each run.
/// Deterministic columns first, wall-clock columns last.
pub fn write_pairs_csv<W: Write>(runs: &[(RunLabel<'_>, &SolveReport)], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{SUMMARY_SCHEMA}")?;
    writeln!(
        w,
        "solver,k_max,level,lambda,rel_residual,converged,warm_start_its,outer_its,inner_its,mvp_warm_start,mvp_refinement,mvp_total,secs_warm_start,secs_refinement"
    )?;
    for (label, report) in runs {
        for p in &report.pairs {
            writeln!(
                w,
                "{},{},{},{:e},{:e},{},{},{},{},{},{},{},{:.6},{:.6}",
                label.solver,
                label.k_max,
                p.level,
                p.lambda,
                p.rel_residual,
                p.converged,
                p.warm_start_iterations,
                p.outer_iterations,
                p.inner_iterations,
                p.mvp_warm_start,
                p.mvp_refinement,
                p.mvp_warm_start + p.mvp_refinement,
                p.warm_start_time.as_secs_f64(),
                p.refinement_time.as_secs_f64()
            )?;
        }
    }
    Ok(())
}

/// Wall clock split by phase.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Timings {
    pub factorization: Duration,
    pub warm_start: Duration,
    pub refinement: Duration,
}

impl Timings {
    pub fn total(&self) -> Duration {
        self.factorization + self.warm_start + self.refinement
    }
}

/// One line of a comparison table (one k_max, or one solver).
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub solver: String,
    pub k_max: usize,
    pub n_eig: usize,
    pub converged: usize,
    pub warm_start_iterations: usize,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub mvp_warm_start: u64,
    pub mvp_refinement: u64,
    pub timings: Timings,
}

impl SummaryRow {
    pub fn mvp_total(&self) -> u64 {
        self.mvp_warm_start + self.mvp_refinement
    }

    pub fn all_converged(&self) -> bool {
        self.converged == self.n_eig
    }
}

/// One row per run. Deterministic columns first, wall-clock columns last.
pub fn write_comparison_csv<W: Write>(rows: &[SummaryRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{COMPARISON_SCHEMA}")?;
    writeln!(
        w,
        "solver,k_max,n_eig,converged,warm_start_its,outer_its,inner_its,mvp_warm_start,mvp_refinement,mvp_total,secs_factor,secs_warm_start,secs_refinement,secs_total"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
            r.solver,
            r.k_max,
            r.n_eig,
            r.converged,
            r.warm_start_iterations,
            r.outer_iterations,
            r.inner_iterations,
            r.mvp_warm_start,
            r.mvp_refinement,
            r.mvp_total(),
            r.timings.factorization.as_secs_f64(),
            r.timings.warm_start.as_secs_f64(),
            r.timings.refinement.as_secs_f64(),
            r.timings.total().as_secs_f64()
        )?;
    }
    Ok(())
}

/// Fixed-width text table; runs with unconverged levels are marked with ‡.
pub fn format_summary_table(rows: &[SummaryRow]) -> String {
    let mut out = format!(
        "{:<12} {:>5} {:>9} {:>8} {:>8} {:>10} {:>10} {:>10} {:>9} {:>9}\n",
        "solver", "k_max", "warm_its", "outer", "inner", "mvp_warm", "mvp_ref", "mvp_total", "cpu_warm", "cpu_ref"
    );
    for r in rows {
        let mark = if r.all_converged() { "" } else { "\u{2021}" };
        out.push_str(&format!(
            "{:<12} {:>5} {:>9} {:>8} {:>8} {:>10} {:>10} {:>10} {:>9.3} {:>9.3}{}\n",
            r.solver,
            r.k_max,
            r.warm_start_iterations,
            r.outer_iterations,
            r.inner_iterations,
            r.mvp_warm_start,
            r.mvp_refinement,
            r.mvp_total(),
            r.timings.warm_start.as_secs_f64(),
            r.timings.refinement.as_secs_f64(),
            mark
        ));
    }
    out
}
