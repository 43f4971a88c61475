//! The row sets of each suite, one instance at a time.

use std::time::Instant;

use anyhow::Result;
use freesym::check::CheckRow;
use freesym::free_sums::{self, FreeFamily};
use freesym::js;
use freesym::martingale;
use freesym::rmt::{self, ModelConfig};
use freesym::words;
use freesym::SymmetricSpace;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ExperimentConfig, Suite};
use crate::generate;
use crate::report::ReportRow;

/// Every instance in order; an instance that fails contributes one failed
/// row with the reason and the batch goes on.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    cfg.validate()?;
    let spaces = cfg.parsed_spaces()?;
    let name = cfg.experiment.name();
    let mut rows = Vec::new();
    for i in 0..cfg.instance.count {
        let seed = rmt::trial_seed(cfg.instance.seed, i as u64);
        let model = ModelConfig { seed: rmt::trial_seed(cfg.model.seed, i as u64), ..cfg.model_config() };
        let start = Instant::now();
        let result = run_instance(cfg, &spaces, &model, &mut ChaCha8Rng::seed_from_u64(seed));
        let ms = if cfg.output.timing { start.elapsed().as_millis() as u64 } else { 0 };
        match result {
            Ok(checks) => rows.extend(checks.into_iter().map(|c| ReportRow::from_check(name, i, seed, c, model.n, ms))),
            Err(e) => rows.push(ReportRow::failure(name, i, seed, &format!("{e:#}"), ms)),
        }
    }
    Ok(rows)
}

fn run_instance(cfg: &ExperimentConfig, spaces: &[SymmetricSpace], model: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Vec<CheckRow>> {
    let inst = &cfg.instance;
    let solver = cfg.solver_config();
    match cfg.experiment {
        Suite::Norm => norm_rows(&generate::free_family(inst, rng)?, spaces, model, cfg),
        Suite::Mu => mu_rows(&generate::free_family(inst, rng)?, spaces, model),
        Suite::Decompose => decompose_rows(&generate::free_family(inst, rng)?, spaces, cfg),
        Suite::Voiculescu => Ok(free_sums::voiculescu_rows(&generate::free_family(inst, rng)?, model)?),
        Suite::Maincor => Ok(free_sums::verify_inequalities(&generate::free_family(inst, rng)?, spaces, model, &solver)?),
        Suite::Buchholz => {
            let x = generate::words(inst, rng)?;
            let mut rows = Vec::new();
            let mut prev = words::compression_lower_bound(&x, 0)?;
            for l in 1..=inst.radius {
                let next = words::compression_lower_bound(&x, l)?;
                rows.push(CheckRow::new(format!("compression_monotone_{l}"), prev, next, 1.0, 0.0));
                prev = next;
            }
            rows.extend(words::buchholz_rows(&x, inst.radius, model)?);
            Ok(rows)
        }
        Suite::Lengthd => {
            let x = generate::words(inst, rng)?;
            let dec = words::word_optimal_decomposition(&x, &solver)?;
            let mut rows = vec![
                CheckRow::new("solver_reconstruction", dec.reconstruction_residual(&x)?, 1.0, cfg.tolerances.exact, 0.0),
                CheckRow::new("solver_duality_gap", dec.value, dec.dual_bound, 1.0, cfg.tolerances.residual.max(1e-3)),
            ];
            rows.extend(words::verify_lengthd(&x, &dec, spaces, model)?);
            Ok(rows)
        }
        Suite::Js => {
            let f = generate::symmetric_family(inst, rng)?;
            let mut rows = Vec::new();
            for space in spaces {
                rows.extend(js::verify_js(&f, space, model)?);
            }
            Ok(rows)
        }
        Suite::Burkholder => {
            let f = generate::filtration(inst, rng)?;
            let x = generate::matrix(inst.size, rng)?;
            let n = martingale::burkholder_norms(&f, &x, &SymmetricSpace::lp(2.0)?)?;
            let sq = x.norm2().powi(2);
            let tol = cfg.tolerances.exact;
            Ok([("pythagoras_column", n.column), ("pythagoras_row", n.row), ("pythagoras_diagonal", n.diagonal)]
                .into_iter()
                .map(|(q, v)| CheckRow::new(q, (v * v - sq).abs(), sq, tol, 0.0))
                .collect())
        }
    }
}

/// `‖x‖_{E,Σ}` against each conditioned part, and the Rosenthal-type
/// sandwich against the model.
fn norm_rows(f: &FreeFamily, spaces: &[SymmetricSpace], model: &ModelConfig, cfg: &ExperimentConfig) -> Result<Vec<CheckRow>> {
    let solver = cfg.solver_config();
    let mut rows = Vec::new();
    for space in spaces {
        let cap = free_sums::cap_norm(f, space)?;
        let sigma = free_sums::sigma_norm(f, space, &solver)?.value;
        for (q, part) in [("sigma_le_column", cap.column), ("sigma_le_row", cap.row), ("sigma_le_diagonal", cap.diagonal)] {
            rows.push(CheckRow::new(q, sigma, part, 1.0, cfg.tolerances.residual).in_space(space));
        }
        let est = rmt::model_symmetric_norm(f, space, model)?;
        for (trial, &v) in est.samples.iter().enumerate() {
            let seed = rmt::trial_seed(model.seed, trial as u64);
            rows.push(CheckRow::new("model_le_12cap", v, cap.value, 12.0, model.slack).in_space(space).with_seed(seed));
            rows.push(CheckRow::new("sigma_le_16model", sigma, v, 16.0, model.slack).in_space(space).with_seed(seed));
        }
    }
    Ok(rows)
}

/// Moments of the model singular value function: the L² identity, the
/// Voiculescu upper bound on its top, and the upper Rosenthal bound per space.
fn mu_rows(f: &FreeFamily, spaces: &[SymmetricSpace], model: &ModelConfig) -> Result<Vec<CheckRow>> {
    model.validate()?;
    let linf = SymmetricSpace::linf();
    let l2 = SymmetricSpace::lp(2.0)?;
    let cap_inf = free_sums::cap_norm(f, &linf)?;
    let caps: Vec<f64> = spaces.iter().map(|s| free_sums::cap_norm(f, s).map(|c| c.value)).collect::<freesym::Result<_>>()?;
    let exact2 = f.l2_norm().powi(2);
    let mut rows = Vec::new();
    for trial in 0..model.trials {
        let seed = rmt::trial_seed(model.seed, trial as u64);
        let mu = rmt::matrix_mu(&rmt::free_model_embed(f, model.n, &mut model.trial_rng(trial))?)?;
        rows.push(CheckRow::new("mu_l2", (l2.eval(&mu).powi(2) - exact2).abs(), exact2, model.l2_tolerance(), 0.0).with_seed(seed));
        rows.push(
            CheckRow::new("mu_sup", mu.sup(), cap_inf.column + cap_inf.row + cap_inf.diagonal, 1.0, model.slack).with_seed(seed),
        );
        for (space, cap) in spaces.iter().zip(&caps) {
            rows.push(CheckRow::new("mu_norm_le_12cap", space.eval(&mu), *cap, 12.0, model.slack).in_space(space).with_seed(seed));
        }
    }
    Ok(rows)
}

/// Residuals of the algebraic decomposition and the exact bounds of `α`,
/// `β`, `Σγᵢ⊗eᵢ` by the conditioned norms.
fn decompose_rows(f: &FreeFamily, spaces: &[SymmetricSpace], cfg: &ExperimentConfig) -> Result<Vec<CheckRow>> {
    let alg = free_sums::algebraic_decomposition(f, &cfg.solver_config())?;
    let r = &alg.residuals;
    let tol = cfg.tolerances.residual;
    let mut rows: Vec<CheckRow> = [
        ("residual_reconstruction", r.reconstruction),
        ("residual_intertwining", r.intertwining),
        ("residual_alpha_support", r.alpha_support_deficit),
        ("residual_beta_support", r.beta_support_deficit),
        ("residual_gamma_support", r.gamma_support_deficit),
        ("residual_delta_support", r.delta_support_deficit),
        ("residual_modulus", r.rela),
    ]
    .into_iter()
    .map(|(q, v)| CheckRow::new(q, v, tol, 1.0, 0.0))
    .collect();
    for (q, v) in [("column_contraction", r.column_sup), ("row_contraction", r.row_sup), ("summand_contraction", r.max_u)] {
        rows.push(CheckRow::new(q, v, 1.0, 1.0, tol));
    }
    for space in spaces {
        let cap = free_sums::cap_norm(f, space)?;
        for (q, lhs, rhs) in [
            ("majsum_alpha", space.norm(&alg.alpha), cap.column),
            ("majsum_beta", space.norm(&alg.beta), cap.row),
            ("majsum_gamma", free_sums::diagonal_norm(&alg.gamma, space), cap.diagonal),
        ] {
            rows.push(CheckRow::new(q, lhs, rhs, 1.0, tol / rhs.max(tol)).in_space(space));
        }
    }
    Ok(rows)
}
