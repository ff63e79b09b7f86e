//! CSV artifact writers. Formatting is fixed so identical configs rerun to
//! byte-identical files.

use anyhow::{Context, Result};
use robust_games::bregman::BregmanTrajectory;
use robust_games::game::EquilibriumCertificate;
use robust_games::learning::LearningOutput;
use std::fmt::Write as _;
use std::path::Path;

/// Shortest-round-trip float formatting; empty for missing optionals.
fn fmt(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

/// Write `trajectory_<method>.csv`: one row per (sample, player) with the
/// header `t,player,action0..,lambda,mu,objective,bound,lyapunov`.
pub fn write_trajectories(
    dir: &Path,
    method: &str,
    trajectories: &[BregmanTrajectory],
    action_dims: &[usize],
) -> Result<String> {
    let max_dim = action_dims.iter().copied().max().unwrap_or(1);
    let mut text = String::from("t,player");
    for d in 0..max_dim {
        write!(text, ",action{d}").unwrap();
    }
    text.push_str(",lambda,mu,objective,bound,lyapunov\n");

    let samples = trajectories
        .first()
        .map(|t| t.samples.len())
        .unwrap_or(0);
    for s in 0..samples {
        for (player, trajectory) in trajectories.iter().enumerate() {
            let sample = &trajectory.samples[s];
            let dim = action_dims[player];
            write!(text, "{},{player}", fmt(sample.t)).unwrap();
            for d in 0..max_dim {
                if d < dim {
                    write!(text, ",{}", fmt(sample.z[d])).unwrap();
                } else {
                    text.push(',');
                }
            }
            writeln!(
                text,
                ",{},{},{},{},{}",
                fmt(sample.z[dim]),
                fmt(sample.z[dim + 1]),
                fmt(sample.objective),
                fmt_opt(sample.bound),
                fmt_opt(sample.lyapunov),
            )
            .unwrap();
        }
    }

    let name = format!("trajectory_{method}.csv");
    std::fs::write(dir.join(&name), text)
        .with_context(|| format!("writing {name}"))?;
    Ok(name)
}

/// One method's final summary rows.
pub struct MethodSummary<'a> {
    pub method: &'a str,
    pub output: &'a LearningOutput,
    pub time_to_eta: Vec<Option<f64>>,
    pub certificate: Option<&'a EquilibriumCertificate>,
}

/// Write `summary.csv` with final states, the equilibrium certificate, and
/// time-to-eta per method and player.
pub fn write_summary(
    dir: &Path,
    summaries: &[MethodSummary<'_>],
    action_dims: &[usize],
) -> Result<String> {
    let max_dim = action_dims.iter().copied().max().unwrap_or(1);
    let mut text = String::from("method,player");
    for d in 0..max_dim {
        write!(text, ",final_action{d}").unwrap();
    }
    text.push_str(
        ",final_lambda,final_mu,final_objective,time_to_eta,equilibrium,worst_deviation_improvement,grid_limited\n",
    );
    for summary in summaries {
        for (player, decision) in summary.output.final_state.decisions.iter().enumerate() {
            write!(text, "{},{player}", summary.method).unwrap();
            for d in 0..max_dim {
                if d < decision.action.len() {
                    write!(text, ",{}", fmt(decision.action[d])).unwrap();
                } else {
                    text.push(',');
                }
            }
            let final_objective = summary.output.trajectories[player]
                .last()
                .map(|s| s.objective)
                .unwrap_or(f64::NAN);
            let (equilibrium, worst, grid_limited) = match summary.certificate {
                Some(cert) => (
                    cert.equilibrium.to_string(),
                    fmt(cert.worst_deviations[player].improvement),
                    cert.grid_limited.to_string(),
                ),
                None => (String::new(), String::new(), String::new()),
            };
            writeln!(
                text,
                ",{},{},{},{},{},{},{}",
                fmt(decision.lambda),
                fmt(decision.mu),
                fmt(final_objective),
                fmt_opt(summary.time_to_eta[player]),
                equilibrium,
                worst,
                grid_limited,
            )
            .unwrap();
        }
    }
    std::fs::write(dir.join("summary.csv"), text).context("writing summary.csv")?;
    Ok("summary.csv".to_string())
}

/// First recorded time from which the objective stays within eta of its
/// final value.
pub fn time_to_eta(trajectory: &BregmanTrajectory, eta: f64) -> Option<f64> {
    let last = trajectory.last()?;
    let final_objective = last.objective;
    let mut answer = None;
    for sample in &trajectory.samples {
        if (sample.objective - final_objective).abs() <= eta {
            if answer.is_none() {
                answer = Some(sample.t);
            }
        } else {
            answer = None;
        }
    }
    answer
}
