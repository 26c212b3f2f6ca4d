use std::fs;

use agebranch::estimate::{estimate_fb_boundary, AgeGrid};
use agebranch::experiment::{rate_regression, run_table};
use agebranch::manytoone::{verify_mto_boundary, verify_mto_interior, verify_mto_pairs, Identity, MtoConfig, MtoReport};
use agebranch::regime::smooth_class_membership;
use agebranch::rng::stream;
use agebranch::tree::{extract_sample, simulate_tree_capped, PopulationTree};
use agebranch::{classify_regime, estimate_all, solve_malthus, Result};
use serde_json::json;

use crate::config::RunConfig;
use crate::{Cli, Command};

pub enum Outcome {
    Passed,
    Failed(String),
}

pub fn run(cli: &Cli, cfg: &RunConfig) -> Result<Outcome> {
    if cli.command != Command::ModelInfo {
        fs::create_dir_all(&cli.out)?;
        fs::write(cli.out.join("effective_config.toml"), cfg.to_toml())?;
    }
    match cli.command {
        Command::ModelInfo => model_info(cfg),
        Command::Simulate => simulate(cli, cfg),
        Command::Estimate => estimate(cli, cfg),
        Command::Verify => verify(cli, cfg),
        Command::Experiment => experiment(cli, cfg),
    }
}

fn model_info(cfg: &RunConfig) -> Result<Outcome> {
    let (rate, law) = cfg.model.build()?;
    let md = solve_malthus(&rate, &law)?;
    let diag = classify_regime(&rate, &law)?;
    let info = json!({
        "rate": rate.label(),
        "offspring_mean": md.offspring_mean,
        "pair_constant": law.pair_constant(),
        "lambda": md.lambda,
        "rho": md.rho,
        "regime": diag.regime,
        "varpi": diag.varpi,
        "kappa": md.kappa_boundary,
        "kappa_prime": md.kappa_interior,
        "c_B": md.c_b,
        "biased_rate_limit": md.biased().limit_at_infinity(),
        "smooth_class": format!("{:?}", smooth_class_membership(&rate, md.offspring_mean)),
    });
    println!("{}", serde_json::to_string_pretty(&info)?);
    Ok(Outcome::Passed)
}

fn simulate(cli: &Cli, cfg: &RunConfig) -> Result<Outcome> {
    let (rate, law) = cfg.model.build()?;
    let s = &cfg.simulate;
    let tree = simulate_tree_capped(&rate, &law, s.horizon, s.node_cap, &mut stream(cfg.seed, 0))?.with_seed(cfg.seed);
    tree.write_csv(fs::File::create(cli.out.join("tree.csv"))?)?;
    let sample = extract_sample(&tree);
    let summary = json!({
        "T": s.horizon,
        "seed": cfg.seed,
        "nodes": tree.len(),
        "n_interior": sample.interior_len(),
        "n_boundary": sample.boundary_len(),
    });
    fs::write(cli.out.join("tree.json"), serde_json::to_string_pretty(&summary)?)?;
    println!("{summary}");
    Ok(Outcome::Passed)
}

fn estimate(cli: &Cli, cfg: &RunConfig) -> Result<Outcome> {
    let e = &cfg.estimate;
    let tree = match &e.input {
        Some(path) => PopulationTree::read_csv(fs::File::open(path)?, e.horizon)?,
        None => {
            let (rate, law) = cfg.model.build()?;
            simulate_tree_capped(&rate, &law, e.horizon, e.node_cap, &mut stream(cfg.seed, 0))?
        }
    };
    let sample = extract_sample(&tree);
    let grid = AgeGrid::new(e.grid.start, e.grid.end, e.grid.step)?;
    let result = estimate_all(&sample, e.kernel, e.bandwidth, &grid)?.with_seed(cfg.seed);
    result.write_csv(fs::File::create(cli.out.join("estimate.csv"))?)?;
    fs::write(cli.out.join("estimate.json"), result.metadata_json()?)?;
    if e.boundary_density {
        let f = estimate_fb_boundary(&sample, result.m_hat, result.lambda_hat, e.kernel, result.bandwidth, &grid)?;
        let mut w = csv::Writer::from_path(cli.out.join("boundary_density.csv"))?;
        w.write_record(["x", "f_hat"])?;
        for (x, v) in result.grid.iter().zip(&f) {
            w.write_record([x.to_string(), v.to_string()])?;
        }
        w.flush()?;
    }
    println!("{}", result.metadata_json()?);
    Ok(Outcome::Passed)
}

fn verify(cli: &Cli, cfg: &RunConfig) -> Result<Outcome> {
    let (rate, law) = cfg.model.build()?;
    let md = solve_malthus(&rate, &law)?;
    let v = &cfg.verify;
    let mto = MtoConfig {
        horizon: v.horizon,
        n_trees: v.n_trees,
        n_paths: v.n_paths,
        grid_cells: v.grid_cells,
        batches: v.batches,
        node_cap: v.node_cap,
        seed: cfg.seed,
    };
    let wants = |id: Identity| v.identities.contains(&id);
    let g = &v.test_function;
    let mut reports: Vec<MtoReport> = Vec::new();
    if wants(Identity::Boundary) {
        reports.push(verify_mto_boundary(&md, &law, g, &mto)?);
    }
    if wants(Identity::Interior) {
        reports.push(verify_mto_interior(&md, &law, g, &mto)?);
    }
    if [Identity::Forks, Identity::Lineage, Identity::AliveForks].into_iter().any(wants) {
        reports.extend(verify_mto_pairs(&md, &law, g, &mto)?.into_iter().filter(|r| wants(r.identity)));
    }
    fs::write(cli.out.join("verify.json"), serde_json::to_string_pretty(&reports)?)?;
    let mut failed = Vec::new();
    for r in &reports {
        let ok = r.passes(v.z_max);
        println!(
            "{:<11} T={:<6} lhs={:.6e} ± {:.2e}  rhs={:.6e} ± {:.2e}  z={:+.3}  {}",
            serde_json::to_value(r.identity)?.as_str().unwrap_or_default(),
            r.horizon,
            r.lhs,
            r.lhs_se,
            r.rhs,
            r.rhs_se,
            r.z,
            if ok { "ok" } else { "FAIL" }
        );
        if !ok {
            failed.push(format!("{:?} z={:.3}", r.identity, r.z));
        }
    }
    if failed.is_empty() {
        Ok(Outcome::Passed)
    } else {
        Ok(Outcome::Failed(failed.join(", ")))
    }
}

fn experiment(cli: &Cli, cfg: &RunConfig) -> Result<Outcome> {
    let report = run_table(&cfg.experiment)?;
    report.write_outputs(&cli.out)?;
    for h in &report.horizons {
        println!(
            "T={:<5} ok={:<4} failed={:<3} mean_error={:.4} std={:.4} mean|interior|={:.1}",
            h.horizon,
            h.n_ok,
            h.n_failed,
            h.mean_error,
            h.std_error,
            h.interior_size.map_or(f64::NAN, |s| s.mean)
        );
    }
    if let Ok(r) = rate_regression(&report) {
        println!(
            "log-error slope {:.4} [{:.4}, {:.4}], reference {:.4}",
            r.slope, r.ci_lower, r.ci_upper, r.reference_slope
        );
    }
    let checks = report.checks();
    if checks.passed() {
        Ok(Outcome::Passed)
    } else {
        Ok(Outcome::Failed(format!(
            "valid={} trend={} (inversions {})",
            checks.valid, checks.trend, checks.inversions
        )))
    }
}

