//! The operations behind each CLI subcommand. Every output is a pure
//! function of the configuration (wall-clock timings only when asked for),
//! so re-running a command rewrites identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{self, Checkpoint, EpochMetrics};
use crate::baselines::{dp_optimal, optimality_gap, run_episode, GreedyPolicy, MyopicPolicy, Policy, PolicyResult};
use crate::config::{RunConfig, ScenarioMode};
use crate::env::{feature_len, worst_step_cost, Env};
use crate::error::{Error, Result};
use crate::grid::load_network;
use crate::powerflow::{solve_opf, NetworkModel, OpfConfig, OpfProblem, OpfSolution};
use crate::scenario::{generate_scenarios, load_timeseries, GenerationOptions, Scenario, ScenarioSet};

impl Error {
    /// Process exit code: 1 for numerical failures, 2 for usage, input and
    /// configuration problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::Infeasible(_) => 1,
            _ => 2,
        }
    }
}

/// Seed offsets of the generated scenario streams relative to the master seed.
const TRAIN_STREAM: u64 = 1;
const TEST_STREAM: u64 = 2;
const VALIDATION_STREAM: u64 = 3;

/// Network, environment and the scenario sets for a configuration.
pub struct Workspace {
    pub model: Arc<NetworkModel>,
    pub env: Env,
    pub train: Vec<Scenario>,
    /// Used only to pick the returned weights during training; never the
    /// test set.
    pub validation: Vec<Scenario>,
    pub test: Vec<Scenario>,
}

pub fn prepare(cfg: &RunConfig) -> Result<Workspace> {
    cfg.validate()?;
    let net = load_network(&cfg.paths.network)?;
    let model = Arc::new(NetworkModel::new(net)?);
    let forecasts = load_timeseries(&cfg.paths.timeseries)?;
    let pf = cfg.scenario.power_factor;
    let window = cfg.agent.window;

    let n_val = cfg.scenario.n_validation;
    let (train, validation, mut test) = match cfg.scenario.mode {
        ScenarioMode::Deterministic => {
            let s = Scenario::deterministic(&forecasts, pf, window);
            (vec![s.clone()], vec![s.clone()], vec![s])
        }
        ScenarioMode::Stochastic => {
            let opts = GenerationOptions::for_network(&model.network, pf, window);
            let errs = &cfg.scenario.errors;
            let train = generate_scenarios(&forecasts, errs, cfg.scenario.n_train, cfg.seed.wrapping_add(TRAIN_STREAM), &opts)?;
            let stream = |n: usize, offset: u64| -> Result<Vec<Scenario>> {
                if n == 0 {
                    return Ok(Vec::new());
                }
                Ok(generate_scenarios(&forecasts, errs, n, cfg.seed.wrapping_add(offset), &opts)?.scenarios)
            };
            let validation = stream(n_val, VALIDATION_STREAM)?;
            let test = stream(cfg.scenario.n_test, TEST_STREAM)?;
            (train.scenarios, validation, test)
        }
        ScenarioMode::Historical => {
            let (a, b) = forecasts.split_days(cfg.scenario.steps_per_day, cfg.scenario.train_days);
            if a.is_empty() {
                return Err(Error::Config("historical mode needs at least one training day".into()));
            }
            let day = |f: &crate::scenario::Forecasts| Scenario::deterministic(f, pf, window);
            let train: Vec<Scenario> = a.iter().map(day).collect();
            let validation = train[train.len().saturating_sub(n_val)..].to_vec();
            (train, validation, b.iter().map(day).collect())
        }
    };
    if let Some(path) = &cfg.paths.test_scenarios {
        test = ScenarioSet::load(path)?.scenarios;
    }
    for s in train.iter().chain(&test) {
        check_scenario(s, window)?;
    }

    let env = Env::new(model.clone(), cfg.run.battery_levels, cfg.penalties, cfg.opf, cfg.run.dt)?;
    let max_price = train.iter().chain(&test).map(Scenario::max_price).fold(0.0, f64::max);
    cfg.penalties.validate(worst_step_cost(&model, max_price, cfg.run.dt))?;
    Ok(Workspace { model, env, train, validation, test })
}

fn check_scenario(s: &Scenario, window: usize) -> Result<()> {
    let n = s.horizon();
    if n == 0 {
        return Err(Error::ScenarioMismatch("scenario has no steps".into()));
    }
    if [s.wind.len(), s.pv.len(), s.q.len(), s.price.len(), s.day_ahead.len()].iter().any(|&l| l != n) {
        return Err(Error::ScenarioMismatch("scenario series differ in length".into()));
    }
    if s.window != window {
        return Err(Error::ScenarioMismatch(format!(
            "scenario window {} but the agent uses {window}",
            s.window
        )));
    }
    Ok(())
}

fn check_checkpoint(ck: &Checkpoint, env: &Env, test: &[Scenario]) -> Result<()> {
    let want = feature_len(env.n_dgs(), ck.config.window);
    if ck.net.n_inputs() != want || ck.norm.min.len() != want {
        return Err(Error::ScenarioMismatch(format!(
            "checkpoint expects {} inputs, this network and window give {want}",
            ck.net.n_inputs()
        )));
    }
    if ck.net.n_outputs() != env.n_actions() {
        return Err(Error::ScenarioMismatch(format!(
            "checkpoint has {} outputs, the action space has {}",
            ck.net.n_outputs(),
            env.n_actions()
        )));
    }
    for s in test {
        check_scenario(s, ck.config.window)?;
    }
    Ok(())
}

fn out_dir(cfg: &RunConfig) -> Result<&Path> {
    fs::create_dir_all(&cfg.paths.out_dir)?;
    Ok(&cfg.paths.out_dir)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn metrics_csv(metrics: &[EpochMetrics]) -> String {
    let mut s = String::from("epoch,cumulative_reward,test_expected_cost\n");
    for m in metrics {
        let _ = writeln!(s, "{},{},{}", m.epoch, m.cumulative_reward, opt(m.test_expected_cost));
    }
    s
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
    pub final_test_cost: Option<f64>,
}

pub fn cmd_train(cfg: &RunConfig, progress: impl FnMut(&EpochMetrics)) -> Result<TrainReport> {
    let ws = prepare(cfg)?;
    let (ck, metrics) = agent::train(&ws.env, &ws.train, &ws.validation, &ws.test, &cfg.agent, cfg.run.epochs, cfg.seed, progress)?;
    let dir = out_dir(cfg)?;
    let checkpoint = cfg.checkpoint_path();
    if let Some(parent) = checkpoint.parent() {
        fs::create_dir_all(parent)?;
    }
    ck.save(&checkpoint)?;
    let metrics_path = dir.join("metrics.csv");
    fs::write(&metrics_path, metrics_csv(&metrics))?;
    let final_test_cost = (!ws.test.is_empty()).then(|| agent::expected_cost(&ws.env, &ck, &ws.test));
    Ok(TrainReport {
        checkpoint,
        metrics: metrics_path,
        final_test_cost,
    })
}

/// One row of a results or comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: usize,
    pub policy: String,
    pub total_cost: f64,
    pub gap: Option<f64>,
    pub avg_decision_ms: Option<f64>,
}

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut s = String::from("scenario,policy,total_cost,gap,avg_decision_ms\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.scenario,
            r.policy,
            r.total_cost,
            opt(r.gap),
            opt(r.avg_decision_ms)
        );
    }
    s
}

/// Per-step dispatch of one episode: `hour,p_<unit>...,p_grid,p_bat,soc,reward`.
/// `soc` is the state of charge at the start of the hour.
pub fn dispatch_csv(env: &Env, result: &PolicyResult) -> String {
    let mut s = String::from("hour");
    for g in env.generators() {
        let _ = write!(s, ",p_{}", g.name);
    }
    s.push_str(",p_grid,p_bat,soc,reward\n");
    for (t, step) in result.steps.iter().enumerate() {
        let _ = write!(s, "{t}");
        match &step.opf {
            Some(sol) => {
                for p in &sol.p_g {
                    let _ = write!(s, ",{p}");
                }
                let _ = write!(s, ",{}", sol.p_grid);
            }
            None => s.push_str(&",".repeat(env.n_dgs() + 1)),
        }
        let _ = writeln!(s, ",{},{},{}", step.p_bat, step.soc, step.reward);
    }
    s
}

fn with_policy<'a>(
    env: &Env,
    scenarios: &[Scenario],
    soc0: f64,
    make: impl Fn() -> Box<dyn Policy + 'a> + Sync,
) -> Vec<PolicyResult> {
    // Scenario-parallel; collection keeps scenario order.
    scenarios
        .par_iter()
        .map(|s| run_episode(env, s, make().as_mut(), soc0))
        .collect()
}

fn dp_costs(cfg: &RunConfig, env: &Env, scenarios: &[Scenario]) -> Result<Vec<PolicyResult>> {
    scenarios
        .par_iter()
        .map(|s| dp_optimal(env, s, &cfg.dp).map(|r| r.result))
        .collect()
}

fn rows_for(
    name: &str,
    results: &[PolicyResult],
    reference: Option<&[PolicyResult]>,
    timing: bool,
) -> Result<Vec<ResultRow>> {
    results
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let gap = match reference {
                Some(dp) => Some(optimality_gap(r.total_cost, dp[k].total_cost)?),
                None => None,
            };
            Ok(ResultRow {
                scenario: k,
                policy: name.to_string(),
                total_cost: r.total_cost,
                gap,
                avg_decision_ms: timing.then(|| r.avg_decision_ms()),
            })
        })
        .collect()
}

pub fn load_checkpoint(cfg: &RunConfig) -> Result<Checkpoint> {
    let path = cfg.checkpoint_path();
    if !path.is_file() {
        return Err(Error::Config(format!("checkpoint {} not found", path.display())));
    }
    Checkpoint::load(path)
}

#[derive(Debug, Clone)]
pub struct EvaluateReport {
    pub rows: Vec<ResultRow>,
    pub results: PathBuf,
    pub dispatch: Vec<PathBuf>,
}

/// Greedy rollouts of the trained checkpoint over the test set.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<EvaluateReport> {
    let ws = prepare(cfg)?;
    let ck = load_checkpoint(cfg)?;
    check_checkpoint(&ck, &ws.env, &ws.test)?;
    let soc0 = ck.config.initial_soc;
    let dqn = with_policy(&ws.env, &ws.test, soc0, || Box::new(GreedyPolicy { checkpoint: &ck }));
    let dp = if cfg.run.evaluate_gap {
        Some(dp_costs(cfg, &ws.env, &ws.test)?)
    } else {
        None
    };
    let rows = rows_for("dqn", &dqn, dp.as_deref(), cfg.run.timing)?;

    let dir = out_dir(cfg)?;
    let results = dir.join("results.csv");
    fs::write(&results, results_csv(&rows))?;
    let ddir = dir.join("dispatch");
    fs::create_dir_all(&ddir)?;
    let mut dispatch = Vec::new();
    for (k, r) in dqn.iter().enumerate() {
        let p = ddir.join(format!("scenario_{k:03}.csv"));
        fs::write(&p, dispatch_csv(&ws.env, r))?;
        dispatch.push(p);
    }
    Ok(EvaluateReport { rows, results, dispatch })
}

/// Gap statistics of one policy across scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSummary {
    pub policy: String,
    pub mean_cost: f64,
    pub mean_gap: f64,
    pub max_gap: f64,
    pub min_gap: f64,
    pub std_gap: f64,
}

pub fn summarize(policy: &str, rows: &[ResultRow]) -> GapSummary {
    let mine: Vec<&ResultRow> = rows.iter().filter(|r| r.policy == policy).collect();
    let n = mine.len().max(1) as f64;
    let gaps: Vec<f64> = mine.iter().map(|r| r.gap.unwrap_or(f64::NAN)).collect();
    let mean_gap = gaps.iter().sum::<f64>() / n;
    let var = gaps.iter().map(|g| (g - mean_gap).powi(2)).sum::<f64>() / n;
    GapSummary {
        policy: policy.to_string(),
        mean_cost: mine.iter().map(|r| r.total_cost).sum::<f64>() / n,
        mean_gap,
        max_gap: gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        min_gap: gaps.iter().cloned().fold(f64::INFINITY, f64::min),
        std_gap: var.sqrt(),
    }
}

pub fn summary_csv(summaries: &[GapSummary]) -> String {
    let mut s = String::from("policy,mean_cost,mean_gap,max_gap,min_gap,std_gap\n");
    for g in summaries {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            g.policy, g.mean_cost, g.mean_gap, g.max_gap, g.min_gap, g.std_gap
        );
    }
    s
}

/// Human-readable comparison: one block per scenario, then the summary.
pub fn comparison_table(rows: &[ResultRow], summaries: &[GapSummary]) -> String {
    let mut s = String::new();
    let n_scen = rows.iter().map(|r| r.scenario + 1).max().unwrap_or(0);
    if n_scen == 1 {
        let _ = writeln!(s, "{:<8} {:>12} {:>10}", "policy", "cost ($)", "gap (%)");
        for r in rows {
            let _ = writeln!(s, "{:<8} {:>12.3} {:>10.2}", r.policy, r.total_cost, 100.0 * r.gap.unwrap_or(f64::NAN));
        }
    } else {
        let _ = writeln!(
            s,
            "{:<8} {:>12} {:>10} {:>10} {:>10} {:>10}",
            "policy", "mean cost", "mean gap%", "max gap%", "min gap%", "std gap%"
        );
        for g in summaries {
            let _ = writeln!(
                s,
                "{:<8} {:>12.3} {:>10.2} {:>10.2} {:>10.2} {:>10.2}",
                g.policy,
                g.mean_cost,
                100.0 * g.mean_gap,
                100.0 * g.max_gap,
                100.0 * g.min_gap,
                100.0 * g.std_gap
            );
        }
    }
    s
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub rows: Vec<ResultRow>,
    pub summaries: Vec<GapSummary>,
    pub table: String,
    pub comparison: PathBuf,
    pub summary: PathBuf,
}

/// DQN, myopic and DP on the same test scenarios, gaps relative to DP.
pub fn cmd_compare(cfg: &RunConfig) -> Result<CompareReport> {
    let ws = prepare(cfg)?;
    let ck = load_checkpoint(cfg)?;
    check_checkpoint(&ck, &ws.env, &ws.test)?;
    let soc0 = ck.config.initial_soc;
    if (soc0 - cfg.dp.initial_soc).abs() > 0.0 {
        return Err(Error::Config(format!(
            "agent initial_soc {soc0} differs from dp initial_soc {}",
            cfg.dp.initial_soc
        )));
    }
    let dqn = with_policy(&ws.env, &ws.test, soc0, || Box::new(GreedyPolicy { checkpoint: &ck }));
    let myopic = with_policy(&ws.env, &ws.test, soc0, || Box::new(MyopicPolicy));
    let dp = dp_costs(cfg, &ws.env, &ws.test)?;

    let timing = cfg.run.timing;
    let mut rows = Vec::new();
    let per_policy = [
        rows_for("dqn", &dqn, Some(&dp), timing)?,
        rows_for("myopic", &myopic, Some(&dp), timing)?,
        rows_for("dp", &dp, Some(&dp), timing)?,
    ];
    // Interleave by scenario so each block reads like a small table.
    for k in 0..ws.test.len() {
        for p in &per_policy {
            rows.push(p[k].clone());
        }
    }
    let summaries: Vec<GapSummary> = ["dqn", "myopic", "dp"].iter().map(|p| summarize(p, &rows)).collect();
    let table = comparison_table(&rows, &summaries);
    let dir = out_dir(cfg)?;
    let comparison = dir.join("comparison.csv");
    let summary = dir.join("summary.csv");
    fs::write(&comparison, results_csv(&rows))?;
    fs::write(&summary, summary_csv(&summaries))?;
    Ok(CompareReport {
        rows,
        summaries,
        table,
        comparison,
        summary,
    })
}

/// Writes the train and test scenario archives.
pub fn cmd_gen_scenarios(cfg: &RunConfig) -> Result<(PathBuf, PathBuf)> {
    let ws = prepare(cfg)?;
    let dir = out_dir(cfg)?;
    let train = dir.join("scenarios_train.json");
    let test = dir.join("scenarios_test.json");
    ScenarioSet {
        seed: cfg.seed.wrapping_add(TRAIN_STREAM),
        scenarios: ws.train,
    }
    .save(&train)?;
    ScenarioSet {
        seed: cfg.seed.wrapping_add(TEST_STREAM),
        scenarios: ws.test,
    }
    .save(&test)?;
    Ok((train, test))
}

/// A stand-alone OPF problem: the network it runs on, the problem itself
/// and optional solver settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpfProblemFile {
    /// Case file, relative to the problem file.
    pub network: PathBuf,
    pub problem: OpfProblem,
    #[serde(default)]
    pub opf: OpfConfig,
}

impl OpfProblemFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut file: OpfProblemFile = toml::from_str(&text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start].lines().count().max(1)).unwrap_or(0);
            Error::Parse {
                line,
                msg: e.message().to_string(),
            }
        })?;
        if file.network.is_relative() {
            file.network = path.parent().unwrap_or(Path::new(".")).join(&file.network);
        }
        Ok(file)
    }
}

pub fn cmd_opf(path: impl AsRef<Path>) -> Result<(OpfSolution, String)> {
    let file = OpfProblemFile::load(path)?;
    let model = NetworkModel::new(load_network(&file.network)?)?;
    let n = model.network.generators.len();
    let p = &file.problem;
    if p.commitment.len() != n || p.prev_commitment.len() != n || p.prev_dispatch.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: p.commitment.len().min(p.prev_commitment.len()).min(p.prev_dispatch.len()),
        });
    }
    let sol = solve_opf(&model, p, &file.opf);
    Ok((sol.clone(), opf_report(&model, &sol)))
}

pub fn opf_report(model: &NetworkModel, sol: &OpfSolution) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "converged = {}", sol.converged);
    let _ = writeln!(s, "iterations = {}", sol.iterations);
    let _ = writeln!(s, "objective = {}", sol.objective);
    let _ = writeln!(s, "max_mismatch_pu = {:e}", sol.max_mismatch);
    let _ = writeln!(s, "\n[dispatch]");
    for (g, spec) in model.network.generators.iter().enumerate() {
        let _ = writeln!(s, "{} = {{ p_kw = {}, q_kvar = {} }}", spec.name, sol.p_g[g], sol.q_g[g]);
    }
    let _ = writeln!(s, "grid = {{ p_kw = {}, q_kvar = {} }}", sol.p_grid, sol.q_grid);
    let _ = writeln!(s, "battery_q_kvar = {}", sol.q_bat);
    let _ = writeln!(s, "\n[buses]");
    for (i, (v, d)) in sol.v.iter().zip(&sol.delta).enumerate() {
        let _ = writeln!(s, "{i} = {{ v_pu = {v}, delta_rad = {d} }}");
    }
    let _ = writeln!(s, "\n[branches]");
    for (k, f) in sol.branch_flows.iter().enumerate() {
        let _ = writeln!(s, "{k} = {{ p_kw = {f} }}");
    }
    if !sol.converged {
        let _ = writeln!(s, "\n[residuals]");
        for (k, r) in sol.history.iter().enumerate() {
            let _ = writeln!(s, "{k} = {r:e}");
        }
    }
    s
}
