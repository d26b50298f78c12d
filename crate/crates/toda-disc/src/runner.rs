//! Drivers behind the CLI: orchestrates solves, exhaustions, mollification,
//! uniqueness probes, verification suites, and exports, and owns the exit
//! code contract (0 success, 1 solver non-convergence, 2 config error,
//! 3 verification failure).

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use crate::analysis::{
    check_khn, check_master_inequalities, check_volume_bounds, completeness_diagnostic,
    free_energy_invariance, thermo, ThermoRef,
};
use crate::config::RunConfig;
use crate::error::{Result, TodaError};
use crate::geometry::background;
use crate::io::{save_state, write_csv, write_heatmap, write_report, ColorScale};
use crate::lemma_lab::run_suite;
use crate::solver::{
    boundary_lm, run_exhaustion, run_mollification, run_uniqueness_probe, solve_dirichlet,
};
use crate::toda_core::{exact_flat, exact_hyperbolic, reality_defect};
use crate::weights::{validate_semipositivity, MollifierSchedule, WeightKind, WeightModel};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NONCONVERGENCE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_VERIFICATION: i32 = 3;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Command {
    Solve,
    Exhaust,
    Mollify,
    ProbeUniqueness,
    Verify { suite: String },
    Lemmas,
    Export { state_dir: PathBuf },
}

/// Worker cap from TODA_THREADS; the implementation is sequential, so the
/// value is validated and recorded but does not change results.
fn thread_cap() -> Result<Option<usize>> {
    match std::env::var("TODA_THREADS") {
        Err(_) => Ok(None),
        Ok(raw) => match raw.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(TodaError::Config {
                path: "TODA_THREADS".into(),
                message: format!("expected a positive integer, got {raw:?}"),
            }),
        },
    }
}

fn write_error_report(out: &Path, err: &TodaError) {
    let _ = std::fs::create_dir_all(out);
    let report = json!({ "error": err.to_string() });
    let _ = write_report(&out.join("error.json"), &report);
}

fn exit_code_for(err: &TodaError) -> i32 {
    match err {
        TodaError::NonConvergence { .. } | TodaError::LinearSolveFailure(_) => {
            EXIT_NONCONVERGENCE
        }
        TodaError::Config { .. } => EXIT_CONFIG,
        _ => EXIT_CONFIG,
    }
}

/// Run a command; errors are written as machine-readable reports and mapped
/// to the exit-code contract.
pub fn execute(command: &Command, cfg: &RunConfig) -> i32 {
    match run(command, cfg) {
        Ok(code) => code,
        Err(e) => {
            write_error_report(&cfg.out, &e);
            exit_code_for(&e)
        }
    }
}

fn write_manifest(cfg: &RunConfig, threads: Option<usize>) -> Result<()> {
    std::fs::create_dir_all(&cfg.out)?;
    let manifest = json!({ "config": cfg, "toda_threads": threads });
    write_report(&cfg.out.join("manifest.json"), &manifest)
}

fn weight_spec_json(cfg: &RunConfig) -> serde_json::Value {
    serde_json::to_value(&cfg.weight).expect("weight spec serializes")
}

fn run(command: &Command, cfg: &RunConfig) -> Result<i32> {
    cfg.validate()?;
    let threads = thread_cap()?;
    write_manifest(cfg, threads)?;
    match command {
        Command::Solve => run_solve(cfg),
        Command::Exhaust => run_exhaust(cfg),
        Command::Mollify => run_mollify(cfg),
        Command::ProbeUniqueness => run_probe(cfg),
        Command::Verify { suite } => run_verify(cfg, suite),
        Command::Lemmas => run_lemmas(cfg),
        Command::Export { state_dir } => run_export(cfg, state_dir),
    }
}

fn emit_state_artifacts(cfg: &RunConfig, dir: &Path, state: &crate::toda_core::TodaState) -> Result<()> {
    save_state(dir, state, &weight_spec_json(cfg))?;
    for (j, u) in state.u.iter().enumerate() {
        write_csv(&dir.join(format!("u{}.csv", j + 1)), u)?;
        if cfg.heatmaps {
            write_heatmap(&dir.join(format!("u{}.png", j + 1)), u, 512, ColorScale::Linear)?;
            let vol = u.map(f64::exp);
            write_heatmap(&dir.join(format!("u{}_log.png", j + 1)), &vol, 512, ColorScale::Log)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct ThermoSummary {
    beta: f64,
    entropy_min: f64,
    entropy_max: f64,
    sum_defect: f64,
}

fn thermo_summaries(
    cfg: &RunConfig,
    dir: &Path,
    state: &crate::toda_core::TodaState,
) -> Result<Vec<ThermoSummary>> {
    let mut out = Vec::new();
    for &beta in &cfg.betas {
        let rep = thermo(state, beta, &ThermoRef::OmegaX)?;
        if cfg.heatmaps {
            write_heatmap(
                &dir.join(format!("entropy_beta{beta}.png")),
                &rep.entropy,
                512,
                ColorScale::Linear,
            )?;
            write_heatmap(
                &dir.join(format!("free_energy_beta{beta}.png")),
                &rep.free_energy,
                512,
                ColorScale::Linear,
            )?;
        }
        write_csv(&dir.join(format!("entropy_beta{beta}.csv")), &rep.entropy)?;
        out.push(ThermoSummary {
            beta,
            entropy_min: rep.entropy.min(),
            entropy_max: rep.entropy.max(),
            sum_defect: rep.sum_defect,
        });
    }
    Ok(out)
}

fn run_solve(cfg: &RunConfig) -> Result<i32> {
    let grid = cfg.grid()?;
    let bg = background(&grid);
    let weight = cfg.weight_model(&grid)?;
    let boundary = boundary_lm(&grid, cfg.r);
    let (state, report) = solve_dirichlet(&weight, &grid, &bg, &boundary, &cfg.solve_options())?;
    let state_dir = cfg.out.join("state");
    emit_state_artifacts(cfg, &state_dir, &state)?;
    let bounds = check_volume_bounds(&state, 1.0);
    let inequalities = check_master_inequalities(&state, 1.0);
    let khn = check_khn(&state, &bg, 1e-5);
    let thermo_reports = thermo_summaries(cfg, &cfg.out, &state)?;
    let summary = json!({
        "solve": report,
        "reality_defect": reality_defect(&state),
        "bounds": bounds,
        "inequalities": inequalities,
        "khn": khn,
        "thermo": thermo_reports,
    });
    write_report(&cfg.out.join("report.json"), &summary)?;
    Ok(EXIT_OK)
}

fn run_exhaust(cfg: &RunConfig) -> Result<i32> {
    let master = cfg.master_lattice();
    // the weight model is grid-free for analytic kinds; Samples need the
    // run lattice, which exhaustion does not use
    let grid = cfg.grid()?;
    let weight = cfg.weight_model(&grid)?;
    if matches!(weight.kind, WeightKind::Samples { .. }) {
        return Err(TodaError::Config {
            path: "weight".into(),
            message: "exhaustion requires an analytic weight kind".into(),
        });
    }
    let run = run_exhaustion(&weight, cfg.stages, &master, &cfg.solve_options())?;
    let mut cert_rows = String::from("stage,radius,n_r,succ_diff\n");
    for (s, stage) in run.stages.iter().enumerate() {
        let diff =
            if s == 0 { f64::NAN } else { run.succ_diffs[s - 1] };
        cert_rows.push_str(&format!(
            "{},{},{},{}\n",
            s + 1,
            stage.radius,
            stage.state.grid.n_r,
            diff
        ));
        emit_state_artifacts(cfg, &cfg.out.join(format!("stage{}", s + 1)), &stage.state)?;
    }
    std::fs::write(cfg.out.join("stages.csv"), cert_rows)?;
    let completeness = completeness_diagnostic(&run, &[0])?;
    let summary = json!({
        "stages": run.stages.iter().map(|s| json!({
            "radius": s.radius,
            "report": s.report,
        })).collect::<Vec<_>>(),
        "monotonicity": run.monotonicity,
        "succ_diffs": run.succ_diffs,
        "completeness": {
            "strictly_increasing": completeness.strictly_increasing,
            "certified": completeness.certified,
        },
    });
    write_report(&cfg.out.join("report.json"), &summary)?;
    Ok(EXIT_OK)
}

fn run_mollify(cfg: &RunConfig) -> Result<i32> {
    let grid = cfg.grid()?;
    let weight = cfg.weight_model(&grid)?;
    let schedule = MollifierSchedule::new(cfg.mollify_deltas.clone())?;
    let run = run_mollification(&weight, &schedule, &grid, &cfg.solve_options())?;
    for (i, state) in run.states.iter().enumerate() {
        emit_state_artifacts(cfg, &cfg.out.join(format!("delta{}", i + 1)), state)?;
    }
    emit_state_artifacts(cfg, &cfg.out.join("direct"), &run.direct_state)?;
    let summary = json!({
        "deltas": run.deltas,
        "monotonicity": run.monotonicity,
        "final_diff": run.final_diff,
    });
    write_report(&cfg.out.join("report.json"), &summary)?;
    Ok(EXIT_OK)
}

fn run_probe(cfg: &RunConfig) -> Result<i32> {
    let grid = cfg.grid()?;
    let weight = cfg.weight_model(&grid)?;
    let run = run_uniqueness_probe(
        &weight,
        cfg.stages,
        &cfg.master_lattice(),
        cfg.seed_factor,
        &cfg.solve_options(),
    )?;
    write_report(&cfg.out.join("report.json"), &run)?;
    Ok(EXIT_OK)
}

fn run_lemmas(cfg: &RunConfig) -> Result<i32> {
    let summary = run_suite(cfg.samples, cfg.seed);
    write_report(&cfg.out.join("report.json"), &summary)?;
    Ok(EXIT_OK)
}

fn run_export(cfg: &RunConfig, state_dir: &Path) -> Result<i32> {
    let (state, _) = crate::io::load_state(state_dir)?;
    let out = cfg.out.join("export");
    std::fs::create_dir_all(&out)?;
    for (j, u) in state.u.iter().enumerate() {
        write_csv(&out.join(format!("u{}.csv", j + 1)), u)?;
        write_heatmap(&out.join(format!("u{}.png", j + 1)), u, 512, ColorScale::Linear)?;
        let vol = u.map(f64::exp);
        write_heatmap(&out.join(format!("u{}_log.png", j + 1)), &vol, 512, ColorScale::Log)?;
    }
    write_csv(&out.join("E.csv"), &state.e_field)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct VerifyCheck {
    name: String,
    pass: bool,
    detail: String,
}

fn run_verify(cfg: &RunConfig, suite: &str) -> Result<i32> {
    let mut checks: Vec<VerifyCheck> = Vec::new();
    match suite {
        "exact" => verify_exact(cfg, &mut checks)?,
        "inequalities" => verify_inequalities(cfg, &mut checks)?,
        "lemmas" => verify_lemmas(cfg, &mut checks)?,
        other => {
            return Err(TodaError::Config {
                path: "suite".into(),
                message: format!(
                    "unknown suite {other:?}, expected exact | inequalities | lemmas"
                ),
            })
        }
    }
    let pass = checks.iter().all(|c| c.pass);
    let summary = json!({ "suite": suite, "pass": pass, "checks": checks });
    write_report(&cfg.out.join("report.json"), &summary)?;
    Ok(if pass { EXIT_OK } else { EXIT_VERIFICATION })
}

fn verify_exact(cfg: &RunConfig, checks: &mut Vec<VerifyCheck>) -> Result<()> {
    let grid = cfg.grid()?;
    let bg = background(&grid);
    for r in [2usize, 3] {
        // hyperbolic reproduction with the exact boundary trace
        let zero = WeightModel { kind: WeightKind::Zero, r };
        let exact = exact_hyperbolic(r, &grid, &bg)?;
        let (state, _) =
            solve_dirichlet(&zero, &grid, &bg, &exact.boundary, &cfg.solve_options())?;
        let mut worst = 0.0f64;
        for (u, v) in state.u.iter().zip(&exact.u) {
            for (a, b) in u.values.iter().zip(&v.values) {
                worst = worst.max((a - b).abs() / b.abs().max(1.0));
            }
        }
        checks.push(VerifyCheck {
            name: format!("hyperbolic_r{r}"),
            pass: worst <= 5e-3,
            detail: format!("max relative error {worst:.3e}"),
        });
        // flat fixed point
        let one = WeightModel {
            kind: WeightKind::Differential {
                coeffs: vec![num_complex::Complex64::new(1.0, 0.0)],
            },
            r,
        };
        let flat = exact_flat(&one, r, &grid, &bg)?;
        let res = crate::toda_core::residual_norm(&crate::toda_core::residual(&flat)?);
        checks.push(VerifyCheck {
            name: format!("flat_r{r}"),
            pass: res <= 1e-10,
            detail: format!("residual {res:.3e}"),
        });
    }
    Ok(())
}

fn verify_inequalities(cfg: &RunConfig, checks: &mut Vec<VerifyCheck>) -> Result<()> {
    let grid = cfg.grid()?;
    let bg = background(&grid);
    let weight = cfg.weight_model(&grid)?;
    let semip = validate_semipositivity(&weight, &grid, &bg)?;
    checks.push(VerifyCheck {
        name: "semipositivity".into(),
        pass: semip.pass,
        detail: format!(
            "{} violations over {} nodes (tol {:.3e})",
            semip.violations.len(),
            semip.checked_nodes,
            semip.tol
        ),
    });
    let boundary = boundary_lm(&grid, cfg.r);
    let (state, _) = solve_dirichlet(&weight, &grid, &bg, &boundary, &cfg.solve_options())?;
    let rep = check_master_inequalities(&state, 1.0);
    checks.push(VerifyCheck {
        name: "master_inequalities".into(),
        pass: rep.pass,
        detail: format!(
            "min defects {:.3e} / {:.3e} / {:.3e} vs tol {:.3e}",
            rep.wellknown_min_defect, rep.hi_min_defect, rep.c1c2_min_defect, rep.tol_disc
        ),
    });
    // thermo identities on the solved state
    let beta = cfg.betas.first().copied().unwrap_or(1.0);
    let rep = thermo(&state, beta, &ThermoRef::OmegaX)?;
    let logr = (cfg.r as f64).ln();
    let s_ok = rep.sum_defect <= 1e-12
        && rep.entropy.min() >= -1e-12
        && rep.entropy.max() <= logr + 1e-12;
    checks.push(VerifyCheck {
        name: "thermo_identities".into(),
        pass: s_ok,
        detail: format!(
            "sum defect {:.3e}, entropy range [{:.3e}, {:.3e}]",
            rep.sum_defect,
            rep.entropy.min(),
            rep.entropy.max()
        ),
    });
    let exact = exact_hyperbolic(cfg.r, &grid, &bg)?;
    let inv = free_energy_invariance(
        &state,
        &exact,
        beta,
        &ThermoRef::OmegaX,
        &ThermoRef::H1,
    )?;
    checks.push(VerifyCheck {
        name: "free_energy_invariance".into(),
        pass: inv <= 1e-12,
        detail: format!("residual {inv:.3e}"),
    });
    Ok(())
}

fn verify_lemmas(cfg: &RunConfig, checks: &mut Vec<VerifyCheck>) -> Result<()> {
    let summary = run_suite(cfg.samples, cfg.seed);
    for rank in &summary.per_rank {
        let pass = rank.lemma1_min_margin >= -1e-12
            && rank.lemma1_min_margin_deg >= -1e-12
            && rank.lemma2_violations == 0
            && rank.delta_hat.iter().all(|&(_, d)| d > 0.0)
            && rank.lemma4_zero_violations == 0;
        checks.push(VerifyCheck {
            name: format!("lemmas_r{}", rank.r),
            pass,
            detail: format!(
                "min margin {:.3e} (deg {:.3e}), lemma2 {}/{}, c1_hat {:.3}",
                rank.lemma1_min_margin,
                rank.lemma1_min_margin_deg,
                rank.lemma2_violations,
                rank.lemma2_conforming,
                rank.lemma4_c1_hat
            ),
        });
    }
    Ok(())
}
