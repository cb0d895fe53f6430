//! Acceptance checks. Runs as a plain binary and prints one PASS/FAIL line
//! per criterion; exits nonzero if any criterion fails.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spectra_core::bfgs::{spd_probe, BfgsWindow};
use spectra_core::dacg::dacg_minimize;
use spectra_core::deflation::{eigenresidual, DeflationBasis, Orthogonalized, ProjectedJacobian};
use spectra_core::dense::{
    apply, dense_bfgs_preconditioner, dense_eigenvalues, dense_initial_preconditioner,
    preconditioned_jacobian_spectrum,
};
use spectra_core::generate::{constant_unit_vector, generate_laplacian, LaplacianKind};
use spectra_core::ichol::IcFactor;
use spectra_core::jd::{jd_solve, JdConfig};
use spectra_core::mmio::{load_matrix_market, read_matrix_market, write_matrix_market};
use spectra_core::newton::{
    random_start, solve_leftmost, solve_leftmost_observed, solve_with_factor, NewtonObserver,
    NewtonStep, SolveReport, SolverConfig,
};
use spectra_core::pcg::{solve_correction, ExitReason, ProjectedIc};
use spectra_core::sparse::CountedMatrix;
use spectra_core::trace::{Phase, RowKind};
use spectra_core::vector::{dot, norm2};
use spectra_core::SparseMatrix;

type Outcome = Result<String, String>;

fn grid(k: usize) -> SparseMatrix {
    generate_laplacian(&LaplacianKind::Grid2d { nx: k, ny: k }).unwrap()
}

fn graph_instance() -> (SparseMatrix, Vec<Vec<f64>>) {
    let a = generate_laplacian(&LaplacianKind::graph(1000)).unwrap();
    (a, vec![constant_unit_vector(1000)])
}

fn defaults(n_eig: usize) -> SolverConfig {
    SolverConfig {
        n_eig,
        ..SolverConfig::default()
    }
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Records ‖Qᵀs‖/‖s‖ for every correction.
#[derive(Default)]
struct OrthogonalityWatch {
    worst: f64,
    corrections: usize,
}

impl NewtonObserver for OrthogonalityWatch {
    fn on_step(&mut self, step: &NewtonStep<'_>) {
        let s = &step.outcome.s;
        let ns = norm2(s);
        if ns > 0.0 {
            let qs = norm2(&step.basis.coefficients(s));
            self.worst = self.worst.max(qs / ns);
        }
        self.corrections += 1;
    }
}

fn max_pair_overlap(report: &SolveReport, extra: &[Vec<f64>]) -> f64 {
    let mut vs: Vec<&Vec<f64>> = report.pairs.iter().map(|p| &p.vector).collect();
    vs.extend(extra.iter());
    let mut worst: f64 = 0.0;
    for i in 0..vs.len() {
        for j in 0..i {
            worst = worst.max(dot(vs[i], vs[j]).abs());
        }
    }
    worst
}

fn criterion_1() -> Outcome {
    let a = grid(20);
    let exact = dense_eigenvalues(&a).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let rep = solve_leftmost(&a, &defaults(10)).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let max_err = rep
        .pairs
        .iter()
        .zip(&exact)
        .map(|(p, e)| (p.lambda - e).abs() / e)
        .fold(0.0, f64::max);
    let max_res = rep.pairs.iter().map(|p| p.rel_residual).fold(0.0, f64::max);
    check(
        rep.pairs.len() == 10 && max_err <= 1e-7 && max_res <= 1e-8 && secs < 10.0,
        format!("grid 20x20, 10 pairs: max rel error {max_err:.2e}, max rel residual {max_res:.2e}, {secs:.2} s"),
    )
}

fn newton_mvp(a: &SparseMatrix, cfg: &SolverConfig, k_max: usize) -> Result<(u64, bool), String> {
    let rep = solve_leftmost(
        a,
        &SolverConfig {
            k_max,
            ..cfg.clone()
        },
    )
    .map_err(|e| e.to_string())?;
    Ok((rep.pairs.iter().map(|p| p.mvp_refinement).sum(), rep.all_converged()))
}

fn criterion_2() -> Outcome {
    let mut lines = Vec::new();
    let mut never_worse = true;
    let mut best_gain: f64 = 0.0;
    let (g, null) = graph_instance();
    let instances = [
        ("grid 30x30", grid(30), SolverConfig::default()),
        (
            "graph n=1000",
            g,
            SolverConfig {
                initial_deflation: null,
                ..SolverConfig::default()
            },
        ),
    ];
    for (name, a, cfg) in &instances {
        let (m0, c0) = newton_mvp(a, cfg, 0)?;
        let (m5, c5) = newton_mvp(a, cfg, 5)?;
        let gain = 1.0 - m5 as f64 / m0 as f64;
        // the k_max=5 runs must converge; the gain only counts where both did
        never_worse &= m5 <= m0 && c5;
        if c0 {
            best_gain = best_gain.max(gain);
        }
        lines.push(format!(
            "{name}: Newton MVP {m0} (k_max=0{}) vs {m5} (k_max=5{}), {:.1}% saved",
            if c0 { "" } else { ", some levels unconverged" },
            if c5 { "" } else { ", some levels unconverged" },
            100.0 * gain
        ));
    }
    check(never_worse && best_gain >= 0.10, lines.join("; "))
}

struct SpdWatch {
    steps: usize,
    failures: usize,
    min_rayleigh: f64,
}

impl NewtonObserver for SpdWatch {
    fn on_step(&mut self, step: &NewtonStep<'_>) {
        let rep = spd_probe(step.window, step.ic, step.basis, 1000, 1000 + self.steps as u64);
        self.steps += 1;
        self.failures += rep.failures;
        self.min_rayleigh = self.min_rayleigh.min(rep.min_rayleigh);
    }
}

fn criterion_3() -> Outcome {
    let a = grid(20);
    let cfg = SolverConfig {
        k_max: 10,
        ..defaults(10)
    };
    let mut watch = SpdWatch {
        steps: 0,
        failures: 0,
        min_rayleigh: f64::INFINITY,
    };
    let rep = solve_leftmost_observed(&a, &cfg, &mut watch).map_err(|e| e.to_string())?;
    check(
        watch.failures == 0 && watch.steps > 0 && rep.all_converged(),
        format!(
            "{} Newton steps x 1000 trials, {} failures, min zᵀPz/zᵀz = {:.3e}",
            watch.steps, watch.failures, watch.min_rayleigh
        ),
    )
}

fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> SparseMatrix {
    let mut trip = Vec::new();
    let mut rowsum = vec![0.0; n];
    for i in 0..n {
        for j in 0..i {
            if rng.gen_bool(0.15) {
                let v: f64 = rng.gen_range(-1.0..1.0);
                trip.push((i, j, v));
                trip.push((j, i, v));
                rowsum[i] += v.abs();
                rowsum[j] += v.abs();
            }
        }
    }
    for (i, s) in rowsum.iter().enumerate() {
        trip.push((i, i, s + rng.gen_range(0.5..2.0)));
    }
    SparseMatrix::from_triplets(n, &trip).unwrap()
}

fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn criterion_4() -> Outcome {
    let n = 40;
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_spd(n, &mut rng);
        let ic = IcFactor::factor(&a, 5, 1e-2).map_err(|e| e.to_string())?;
        let p0 = dense_initial_preconditioner(&ic);
        let q: Vec<Vec<f64>> = (0..3).map(|_| random_vec(n, &mut rng)).collect();
        let basis = DeflationBasis::from_vectors(&q).map_err(|e| e.to_string())?;
        for npairs in 1..=3 {
            let mut window = BfgsWindow::new(3);
            let mut pairs = Vec::new();
            for _ in 0..npairs {
                let mut s = random_vec(n, &mut rng);
                basis.project(&mut s);
                // r = -D s with D > 0 diagonal keeps sᵀr safely negative
                let mut r: Vec<f64> = s.iter().map(|x| -x * rng.gen_range(0.5..2.0)).collect();
                basis.project(&mut r);
                window.push_pair(&s, &r).map_err(|e| format!("{e:?}"))?;
                pairs.push((s, r));
            }
            let dense = dense_bfgs_preconditioner(&p0, &pairs, &basis);
            for _ in 0..3 {
                let mut g = random_vec(n, &mut rng);
                basis.project(&mut g);
                let c = window.apply_preconditioner(&ic, &basis, &g).map_err(|e| e.to_string())?;
                let c_ref = apply(&dense, &g);
                let diff: Vec<f64> = c.iter().zip(&c_ref).map(|(x, y)| x - y).collect();
                worst = worst.max(norm2(&diff) / norm2(&c_ref));
            }
        }
    }
    check(
        worst <= 1e-11,
        format!("100 seeds x 1..3 pairs on n=40: max relative deviation {worst:.2e}"),
    )
}

/// Keeps (θ, Q, window) of the first and the last Newton step per level.
#[derive(Default)]
struct StepRecorder {
    first: Vec<Option<(f64, DeflationBasis, BfgsWindow)>>,
    last: Vec<Option<(f64, DeflationBasis, BfgsWindow)>>,
}

impl NewtonObserver for StepRecorder {
    fn on_step(&mut self, step: &NewtonStep<'_>) {
        let slot = step.level - 1;
        if self.first.len() <= slot {
            self.first.resize(slot + 1, None);
            self.last.resize(slot + 1, None);
        }
        let state = (step.residual.theta, step.basis.clone(), step.window.clone());
        if step.outer_iter == 0 {
            self.first[slot] = Some(state.clone());
        }
        self.last[slot] = Some(state);
    }
}

fn criterion_5() -> Outcome {
    let a = grid(12);
    let cfg = defaults(10);
    let ic = IcFactor::factor(&a, cfg.lfil, cfg.tau_ic).map_err(|e| e.to_string())?;
    let mut rec = StepRecorder::default();
    solve_with_factor(&a, &ic, &cfg, &mut rec).map_err(|e| e.to_string())?;
    let mut good = 0;
    let mut cells = Vec::new();
    for level in 0..10 {
        let (Some(first), Some(last)) = (rec.first.get(level).cloned().flatten(), rec.last.get(level).cloned().flatten()) else {
            // converged by the warm start alone: nothing to compare
            good += 1;
            cells.push(format!("{}:-", level + 1));
            continue;
        };
        // κ(J̃_0): the first step's Jacobian with the unmodified P̂_0
        let k0 = preconditioned_jacobian_spectrum(&a, first.0, &first.1, &BfgsWindow::new(0), &ic)
            .map_err(|e| e.to_string())?
            .kappa;
        let kk = preconditioned_jacobian_spectrum(&a, last.0, &last.1, &last.2, &ic)
            .map_err(|e| e.to_string())?
            .kappa;
        if kk <= k0 {
            good += 1;
        }
        cells.push(format!("{}:{:.3e}->{:.3e}", level + 1, k0, kk));
    }
    check(good >= 8, format!("{good}/10 levels with κ(J̃_k) <= κ(J̃_0) [{}]", cells.join(" ")))
}

/// Newton iteration with the fixed projected IC preconditioner, written
/// without any window. Returns the relative eigenresidual per outer row.
fn reference_fixed_preconditioner(a: &SparseMatrix, cfg: &SolverConfig) -> Result<Vec<f64>, String> {
    let n = a.n();
    let ic = IcFactor::factor(a, cfg.lfil, cfg.tau_ic).map_err(|e| e.to_string())?;
    let op = CountedMatrix::new(a);
    let pcg = cfg.inner_config();
    let mut converged = DeflationBasis::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rows = Vec::new();
    for _ in 0..cfg.n_eig {
        let x0 = random_start(n, &converged, &mut rng).map_err(|e| e.to_string())?;
        let warm = dacg_minimize(&op, &ic, &converged, &x0, &cfg.dacg).map_err(|e| e.to_string())?;
        let mut u = warm.u;
        let mut res = eigenresidual(&op, &mut u).map_err(|e| e.to_string())?;
        rows.push(res.relative());
        let mut k = 0;
        while res.rnorm > cfg.tau * res.theta && k < cfg.itmax {
            let q = converged.with_column(&u);
            let mut rhs: Vec<f64> = res.r.iter().map(|v| -v).collect();
            q.project(&mut rhs);
            let jac = ProjectedJacobian::new(&op, res.theta, &q);
            let pre = ProjectedIc { ic: &ic, basis: &q };
            let out = solve_correction(&jac, &rhs, &pre, &pcg, &u, &res.au).map_err(|e| e.to_string())?;
            let mut next: Vec<f64> = u.iter().zip(&out.s).map(|(x, y)| x + y).collect();
            if converged.orthogonalize(&mut next) != Orthogonalized::Ok {
                return Err("iterate fell into the converged span".into());
            }
            res = eigenresidual(&op, &mut next).map_err(|e| e.to_string())?;
            u = next;
            rows.push(res.relative());
            k += 1;
        }
        converged.push_unchecked(u);
    }
    Ok(rows)
}

fn criterion_6() -> Outcome {
    let a = grid(20);
    let cfg = SolverConfig {
        k_max: 0,
        ..defaults(10)
    };
    let rep = solve_leftmost(&a, &cfg).map_err(|e| e.to_string())?;
    let driver: Vec<f64> = rep
        .trace
        .rows
        .iter()
        .filter(|r| r.kind == RowKind::Outer)
        .map(|r| r.rel_residual)
        .collect();
    let reference = reference_fixed_preconditioner(&a, &cfg)?;
    let worst = driver
        .iter()
        .zip(&reference)
        .map(|(x, y)| (x - y).abs() / y.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    check(
        driver.len() == reference.len() && worst <= 1e-14,
        format!(
            "{} outer rows vs {} reference rows, max relative deviation {worst:.1e}",
            driver.len(),
            reference.len()
        ),
    )
}

fn criterion_7() -> Outcome {
    let a = grid(20);
    let cfg = defaults(10);
    let newton = solve_leftmost(&a, &cfg).map_err(|e| e.to_string())?;
    let ic = IcFactor::factor(&a, cfg.lfil, cfg.tau_ic).map_err(|e| e.to_string())?;
    let jd_cfg = JdConfig {
        n_eig: 10,
        ..JdConfig::default()
    };
    let jd = jd_solve(&a, &ic, &jd_cfg).map_err(|e| e.to_string())?;
    let worst = newton
        .pairs
        .iter()
        .zip(&jd.pairs)
        .map(|(x, y)| (x.lambda - y.lambda).abs() / y.lambda)
        .fold(0.0, f64::max);
    let mvp_n = newton.summary_row("dacg-newton", cfg.k_max).mvp_total();
    let mvp_j = jd.summary_row("jd", 0).mvp_total();
    let ratio = mvp_n.max(mvp_j) as f64 / mvp_n.min(mvp_j) as f64;
    check(
        newton.all_converged() && jd.all_converged() && worst <= 1e-7 && ratio <= 2.5,
        format!("max relative eigenvalue gap {worst:.2e}; MVP dacg-newton {mvp_n}, jd {mvp_j} (ratio {ratio:.2})"),
    )
}

fn criterion_8() -> Outcome {
    let (a, null) = graph_instance();
    let cfg = SolverConfig {
        initial_deflation: null,
        ..SolverConfig::default()
    };
    let rep = solve_leftmost(&a, &cfg).map_err(|e| e.to_string())?;
    let mut eig_tol = 0;
    let mut stagnation = 0;
    let mut reduced = 0;
    let mut prev: Option<(usize, f64)> = None;
    for row in rep.trace.rows.iter().filter(|r| r.kind == RowKind::Outer) {
        if row.phase == Phase::Newton {
            let early = matches!(row.pcg_exit, Some(ExitReason::EigenTol | ExitReason::Stagnation));
            if early {
                match row.pcg_exit {
                    Some(ExitReason::EigenTol) => eig_tol += 1,
                    _ => stagnation += 1,
                }
                if let Some((level, before)) = prev {
                    if level == row.level && row.rel_residual < before {
                        reduced += 1;
                    }
                }
            }
        }
        prev = Some((row.level, row.rel_residual));
    }
    check(
        reduced > 0 && rep.all_converged(),
        format!(
            "graph n=1000: {eig_tol} eigen-tol and {stagnation} stagnation exits, {reduced} of them followed by a smaller eigenresidual"
        ),
    )
}

fn criterion_9() -> Outcome {
    let mut worst_s: f64 = 0.0;
    let mut worst_v: f64 = 0.0;
    let mut corrections = 0;
    let (g, null) = graph_instance();
    let runs: Vec<(SparseMatrix, SolverConfig)> = vec![
        (grid(20), defaults(10)),
        (
            grid(20),
            SolverConfig {
                k_max: 10,
                ..defaults(10)
            },
        ),
        (grid(12), defaults(10)),
        (
            grid(30),
            SolverConfig {
                k_max: 0,
                ..SolverConfig::default()
            },
        ),
        (grid(30), SolverConfig::default()),
        (
            g,
            SolverConfig {
                initial_deflation: null.clone(),
                ..SolverConfig::default()
            },
        ),
    ];
    for (a, cfg) in &runs {
        let mut watch = OrthogonalityWatch::default();
        let rep = solve_leftmost_observed(a, cfg, &mut watch).map_err(|e| e.to_string())?;
        worst_s = worst_s.max(watch.worst);
        corrections += watch.corrections;
        worst_v = worst_v.max(max_pair_overlap(&rep, &cfg.initial_deflation));
    }
    let a = grid(20);
    let ic = IcFactor::factor(&a, 30, 1e-2).map_err(|e| e.to_string())?;
    let jd = jd_solve(
        &a,
        &ic,
        &JdConfig {
            n_eig: 10,
            ..JdConfig::default()
        },
    )
    .map_err(|e| e.to_string())?;
    worst_v = worst_v.max(max_pair_overlap(&jd, &[]));
    check(
        worst_s <= 1e-10 && worst_v <= 1e-8,
        format!("{corrections} corrections: max ‖Qᵀs‖/‖s‖ {worst_s:.1e}; max |vᵢᵀvⱼ| {worst_v:.1e}"),
    )
}

fn criterion_10() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let a = random_spd(100, &mut rng);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("a.mtx");
    write_matrix_market(&a, &path).map_err(|e| e.to_string())?;
    let b = load_matrix_market(&path).map_err(|e| e.to_string())?;
    let exact = a == b;

    let text = "%%MatrixMarket matrix coordinate real symmetric\n4 4 7\n1 1 4.0\n2 1 -1.5\n2 2 5.0\n3 2 0.25\n3 3 3.0\n4 1 1e-3\n4 4 2.0\n";
    let lower = read_matrix_market(text.as_bytes(), std::path::Path::new("inline.mtx"))
        .map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let x = random_vec(4, &mut rng);
        let y = random_vec(4, &mut rng);
        let xay = dot(&x, &lower.matvec(&y).map_err(|e| e.to_string())?);
        let yax = dot(&y, &lower.matvec(&x).map_err(|e| e.to_string())?);
        worst = worst.max((xay - yax).abs());
    }
    check(
        exact && worst <= 1e-12,
        format!("100x100 round trip exact: {exact}; lower-storage operator |xᵀAy - yᵀAx| <= {worst:.1e}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("oracle correctness", criterion_1),
        ("BFGS benefit", criterion_2),
        ("SPD preservation", criterion_3),
        ("dense-recursion equivalence", criterion_4),
        ("condition-number trend", criterion_5),
        ("k_max=0 degeneracy", criterion_6),
        ("JD parity", criterion_7),
        ("exit strategy", criterion_8),
        ("orthogonality invariants", criterion_9),
        ("Matrix Market round trip", criterion_10),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = run();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS criterion {id} ({name}): {detail} [{secs:.1} s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {id} ({name}): {detail} [{secs:.1} s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
