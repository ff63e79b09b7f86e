//! Experiment driver: reproduces the library's benchmark games as CSV
//! artifacts and wraps the brute-force verification suites.

mod config;
mod output;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use config::ExperimentConfig;
use output::{time_to_eta, write_summary, write_trajectories, MethodSummary};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use robust_games::bregman::{run_flow, FlowOptions, Generator, TimeScaling};
use robust_games::divergence::FDivergence;
use robust_games::game::{dual_solve, is_robust_equilibrium, ProbeSpec};
use robust_games::games;
use robust_games::learning::{run_baseline, run_learning, BaselineMethod, LearningOutput};
use robust_games::oracle::{primal_inner_sup, triality_check};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "rgame", version, about = "Distributionally robust game experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write CSV artifacts.
    Run { config: PathBuf },
    /// Run a verification suite; nonzero exit on any failure.
    Verify {
        /// One of: duality, triality, bounds.
        suite: String,
    },
    /// List the built-in games.
    ListGames,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { config } => cmd_run(&config),
        Command::Verify { suite } => cmd_verify(&suite),
        Command::ListGames => {
            for name in games::GAME_NAMES {
                let dim = games::scenario_dim(name).unwrap();
                println!("{name}  (scenario dimension {dim})");
            }
            Ok(())
        }
    }
}

fn cmd_run(path: &std::path::Path) -> Result<()> {
    let config = ExperimentConfig::load(path)?;
    let game = config.build_game()?;
    let learner = config.build_learner()?;
    std::fs::create_dir_all(&config.output.dir)
        .with_context(|| format!("creating {}", config.output.dir.display()))?;

    let action_dims: Vec<usize> = (0..game.n_players())
        .map(|j| game.decision_set(j).dim())
        .collect();

    let mut runs: Vec<(String, LearningOutput)> = Vec::new();
    let bregman_out = run_learning(&game, &learner)?;
    runs.push(("bregman".to_string(), bregman_out));
    for name in &config.baselines {
        let method = BaselineMethod::by_name(name)
            .with_context(|| format!("unknown baseline '{name}'"))?;
        let baseline = config.build_baseline(method)?;
        let out = run_baseline(&game, &baseline)?;
        runs.push((name.clone(), out));
    }

    for (method, out) in &runs {
        let file = write_trajectories(&config.output.dir, method, &out.trajectories, &action_dims)?;
        println!("wrote {}", config.output.dir.join(file).display());
    }

    // Certify the accelerated run's final profile.
    let final_actions: Vec<Vec<f64>> = runs[0]
        .1
        .final_state
        .decisions
        .iter()
        .map(|d| d.action.clone())
        .collect();
    let certificate = is_robust_equilibrium(
        &game,
        &final_actions,
        config.output.eta.max(1e-6),
        &ProbeSpec::Grid {
            resolution: config.output.probe_resolution,
        },
    )?;

    let summaries: Vec<MethodSummary> = runs
        .iter()
        .enumerate()
        .map(|(i, (method, out))| MethodSummary {
            method,
            output: out,
            time_to_eta: out
                .trajectories
                .iter()
                .map(|t| time_to_eta(t, config.output.eta))
                .collect(),
            certificate: (i == 0).then_some(&certificate),
        })
        .collect();
    let file = write_summary(&config.output.dir, &summaries, &action_dims)?;
    println!("wrote {}", config.output.dir.join(file).display());

    for (method, out) in &runs {
        let finals: Vec<String> = out
            .final_state
            .decisions
            .iter()
            .map(|d| format!("{:.4?}", d.action))
            .collect();
        println!("{method}: final actions {}", finals.join(" "));
    }
    println!(
        "equilibrium certificate: {} (worst improvement {:.3e}{})",
        certificate.equilibrium,
        certificate
            .worst_deviations
            .iter()
            .map(|r| r.improvement)
            .fold(0.0f64, f64::max),
        if certificate.grid_limited { ", grid-limited" } else { "" }
    );
    Ok(())
}

fn cmd_verify(suite: &str) -> Result<()> {
    match suite {
        "duality" => verify_duality(),
        "triality" => verify_triality(),
        "bounds" => verify_bounds(),
        other => bail!("unknown suite '{other}'; expected duality, triality, or bounds"),
    }
}

/// Dual solve vs the primal interior-point oracle on 50 random instances.
fn verify_duality() -> Result<()> {
    let kl = FDivergence::kl();
    let mut rng = ChaCha8Rng::seed_from_u64(990011);
    let mut worst = 0.0f64;
    let mut failures = 0;
    for case in 0..50 {
        let n = rng.gen_range(2..=6);
        let losses: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
        let sum: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / sum).collect();
        let rho = 10f64.powf(rng.gen_range(-2.0..0.0));
        let dual = dual_solve(&losses, &weights, &kl, rho)?;
        let primal = primal_inner_sup(&losses, &weights, &kl, rho)?;
        let gap = (dual.value - primal.value).abs() / primal.value.abs().max(1.0);
        worst = worst.max(gap);
        let ok = gap <= 1e-4;
        if !ok {
            failures += 1;
        }
        println!(
            "case {case:2}: atoms {n}, rho {rho:.4}, dual {:.8}, primal {:.8}, relative gap {gap:.2e} {}",
            dual.value,
            primal.value,
            if ok { "ok" } else { "FAIL" }
        );
    }
    println!("duality: worst relative gap {worst:.2e} over 50 cases");
    if failures > 0 {
        bail!("{failures} duality case(s) exceeded the 1e-4 gap");
    }
    Ok(())
}

/// Both triality inequality chains on 1000 random tensors.
fn verify_triality() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(424242);
    let mut passed = 0;
    for case in 0..1000 {
        let tensor: Vec<Vec<Vec<f64>>> = (0..5)
            .map(|_| {
                (0..5)
                    .map(|_| (0..5).map(|_| rng.gen_range(-10.0..10.0)).collect())
                    .collect()
            })
            .collect();
        let report = triality_check(&tensor)?;
        if report.ok() {
            passed += 1;
        } else {
            println!("case {case}: VIOLATION {report:?}");
        }
    }
    println!("triality: {passed}/1000 tensors satisfied both chains");
    if passed != 1000 {
        bail!("{} triality violations", 1000 - passed);
    }
    Ok(())
}

/// Convergence bound on the 1-D quadratic: the pure ideal scaling on its
/// f64-integrable horizon, then the capped scaling to t = 5.
fn verify_bounds() -> Result<()> {
    let gen = Generator::SqEuclidean;
    let z_star = 0.3;
    let grad = move |z: &[f64]| vec![z[0] - z_star];
    let objective = move |z: &[f64]| 0.5 * (z[0] - z_star) * (z[0] - z_star);

    let mut violations = 0usize;
    let mut samples = 0usize;
    for (scaling, horizon) in [
        (TimeScaling::ideal(), 3.2),
        (TimeScaling::CappedIdeal { beta0: 0.0, beta_cap: 12.0 }, 5.0),
    ] {
        let opts = FlowOptions {
            dt: 1e-3,
            horizon,
            curvature_hint: Some(1.0),
            z_star: Some(vec![z_star]),
            record_every: 1,
            ..FlowOptions::default()
        };
        let trajectory = run_flow(
            &gen,
            &scaling,
            vec![1.3],
            vec![0.0],
            &grad,
            &objective,
            &opts,
        )?;
        for s in &trajectory.samples {
            samples += 1;
            if s.objective > s.bound.unwrap() * 1.001 {
                violations += 1;
            }
        }
        println!(
            "bounds: {scaling:?} to t = {horizon}: final error {:.2e}, bound {:.2e}",
            trajectory.last().unwrap().objective,
            trajectory.last().unwrap().bound.unwrap()
        );
    }
    println!("bounds: {violations} violation(s) in {samples} samples");
    if violations > 0 {
        bail!("{violations} bound violations");
    }
    Ok(())
}
