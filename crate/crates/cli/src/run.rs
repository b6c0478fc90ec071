//! End-to-end completion runs and their on-disk artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::{json, Value};
use stlt_core::{
    eval_recovery, generate_synthetic, io, outer_solve, recover_primal, DenseTensor, IterationRecord, OuterResult,
    OuterStatus, Problem, ProblemSpec, RecoveryMetrics, SparseTensor, Support,
};

use crate::config::RunConfig;
use crate::plot::log_plot;
use crate::CliError;

pub const HISTORY_HEADER: &str = "iter,g_value,grad_norm,duality_gap,rel_gap,inner_iters,wall_ms";

/// Observations plus the ground truth when one is known.
pub struct Data {
    pub observed: SparseTensor,
    pub truth: Option<DenseTensor>,
}

pub fn load_data(config: &RunConfig) -> Result<Data, CliError> {
    if let Some(s) = &config.synthetic {
        let syn = generate_synthetic(s.kind.kind(), &s.dims, &s.ranks, s.fraction, s.seed).map_err(CliError::input)?;
        return Ok(Data {
            observed: syn.observed,
            truth: Some(syn.truth),
        });
    }
    let path = config.input.as_ref().ok_or_else(|| CliError::Input("no input given".into()))?;
    let observed = io::read_sparse(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let truth = match &config.truth {
        Some(p) => Some(io::read_dense(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?),
        None => None,
    };
    Ok(Data { observed, truth })
}

/// `K / ||Y_Omega||`, or zero for all-zero observations.
pub fn default_lambda(observed: &SparseTensor) -> f64 {
    let n = observed.norm();
    if n > 0.0 {
        observed.dims().len() as f64 / n
    } else {
        0.0
    }
}

/// Builds the problem; returns it with the total `lambda` actually used.
pub fn build_problem(config: &RunConfig, observed: SparseTensor) -> Result<(Problem, f64), CliError> {
    let lambda = config.lambda.unwrap_or_else(|| default_lambda(&observed));
    let k = observed.dims().len();
    let spec = ProblemSpec::new(
        observed,
        config.cost_c,
        ProblemSpec::split_lambda(lambda, k),
        config.ranks.clone(),
        config.constraint_kind()?,
    )
    .map_err(CliError::input)?;
    Ok((Problem::new(spec).map_err(CliError::input)?, lambda))
}

pub fn exit_code(status: OuterStatus) -> i32 {
    if status.is_success() {
        0
    } else {
        2
    }
}

pub fn history_csv(history: &[IterationRecord], record_wall_time: bool) -> String {
    let mut out = String::with_capacity(64 * (history.len() + 1));
    out.push_str(HISTORY_HEADER);
    out.push('\n');
    for r in history {
        let wall = if record_wall_time { r.wall_ms } else { 0.0 };
        let _ = writeln!(
            out,
            "{},{:e},{:e},{:e},{:e},{},{:e}",
            r.iter, r.g_value, r.grad_norm, r.duality_gap, r.rel_gap, r.inner_iters, wall
        );
    }
    out
}

pub fn recovery_json(m: &RecoveryMetrics) -> Value {
    json!({
        "rmse_test": m.rmse_test,
        "rmse_train": m.rmse_train,
        "rms_truth_test": m.rms_truth_test,
        "rms_truth_train": m.rms_truth_train,
        "min_entry": m.min_entry,
        "max_abs": m.max_abs,
        "n_test": m.n_test,
        "n_train": m.n_train,
    })
}

pub struct RunOutcome {
    pub result: OuterResult,
    pub w_hat: DenseTensor,
    pub manifest: Value,
    pub exit_code: i32,
}

/// Solves the configured problem and writes `history.csv`, `manifest.json`,
/// `W_hat.tns` and `plots/` under `config.out`.
pub fn run_completion(config: &RunConfig) -> Result<RunOutcome, CliError> {
    config.validate()?;
    let data = load_data(config)?;
    let (problem, lambda) = build_problem(config, data.observed)?;
    let result = outer_solve(&problem, &config.outer_params()).map_err(CliError::internal)?;
    let w_hat = recover_primal(&problem, &result.u, &result.solution).map_err(CliError::internal)?;
    let recovery = match &data.truth {
        Some(t) => Some(eval_recovery(&w_hat, t, problem.observed().support()).map_err(CliError::input)?),
        None => None,
    };

    let code = exit_code(result.status);
    let mut echoed = config.clone();
    echoed.lambda = Some(lambda);
    let last = result.history.last().expect("history holds the starting point");
    let manifest = json!({
        "config": echoed,
        "versions": { "stlt": env!("CARGO_PKG_VERSION") },
        "problem": {
            "dims": problem.dims(),
            "observed": problem.omega_len(),
            "y_norm": problem.y_norm(),
            "lambdas": problem.lambdas(),
            "factor_shapes": problem.factor_shapes(),
        },
        "solver": result.solver.name(),
        "status": result.status.name(),
        "exit_code": code,
        "iterations": last.iter,
        "final": {
            "g_value": last.g_value,
            "grad_norm": last.grad_norm,
            "duality_gap": last.duality_gap,
            "rel_gap": last.rel_gap,
        },
        "recovery": recovery.as_ref().map(recovery_json),
    });

    write_outputs(&config.out, config, &result.history, &w_hat, &manifest)?;
    Ok(RunOutcome {
        result,
        w_hat,
        manifest,
        exit_code: code,
    })
}

fn write_outputs(
    out: &Path,
    config: &RunConfig,
    history: &[IterationRecord],
    w_hat: &DenseTensor,
    manifest: &Value,
) -> Result<(), CliError> {
    let plots = out.join("plots");
    fs::create_dir_all(&plots).map_err(|e| CliError::Internal(format!("{}: {e}", plots.display())))?;
    let write = |name: &Path, text: &str| fs::write(name, text).map_err(|e| CliError::Internal(format!("{}: {e}", name.display())));

    write(&out.join("history.csv"), &history_csv(history, config.record_wall_time))?;
    let full = Support::full(w_hat.dims()).map_err(CliError::internal)?;
    let values = full.iter().map(|idx| w_hat.get(idx)).collect();
    let w_sparse = SparseTensor::from_support(full, values).map_err(CliError::internal)?;
    write(&out.join("W_hat.tns"), &io::format_sparse(&w_sparse))?;
    let text = serde_json::to_string_pretty(manifest).map_err(|e| CliError::Internal(e.to_string()))?;
    write(&out.join("manifest.json"), &(text + "\n"))?;

    let iters: Vec<f64> = history.iter().map(|r| r.iter as f64).collect();
    let grad: Vec<f64> = history.iter().map(|r| r.grad_norm).collect();
    let gap: Vec<f64> = history.iter().map(|r| r.rel_gap).collect();
    write(&plots.join("grad_norm.svg"), &log_plot("Gradient norm", "iteration", "grad_norm", &iters, &grad))?;
    write(&plots.join("rel_gap.svg"), &log_plot("Relative duality gap", "iteration", "rel_gap", &iters, &gap))?;
    Ok(())
}
