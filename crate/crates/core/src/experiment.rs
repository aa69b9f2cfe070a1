//! Experiment configuration, replica fan-out and report emission.
//!
//! Replica `r` always draws from `replica_rng(seed, r)` (or a tagged stream
//! for multi-size sweeps), and per-replica results are collected in replica
//! order before any reduction, so outputs do not depend on the thread count.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::fw::{aligned_dt, default_dt, fw_heterozygosity, fw_simulate};
use crate::rng::{replica_rng, tagged_rng};
use crate::sim::{
    consensus_time_experiment, default_t_cap, duality_check, simulate_two_walks, simulate_voter, StartMode,
    VoterInit,
};
use crate::stats::{
    edge_tail_runs, exp_cdf, exp_rate_fit, homogenisation_functional, homogenisation_scale, ks_statistic,
    mean_se, within_se, Gate,
};
use crate::theta::{identity_residual, make_consts, theta, ModelConst, ThetaBundle, DEFAULT_TOL};
use crate::toy::{TreeHeight, TwoPhaseModel};

pub const SCHEMA_VERSION: u32 = 1;
pub const THREADS_ENV: &str = "DYNVOTER_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    ThetaTable,
    SimMeeting,
    SimVoter,
    SimToy,
    DualityCheck,
    Fw,
    EdgeTail,
    Homogenisation,
    Consensus,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::ThetaTable => "theta-table",
            Experiment::SimMeeting => "sim-meeting",
            Experiment::SimVoter => "sim-voter",
            Experiment::SimToy => "sim-toy",
            Experiment::DualityCheck => "duality-check",
            Experiment::Fw => "fw",
            Experiment::EdgeTail => "edge-tail",
            Experiment::Homogenisation => "homogenisation",
            Experiment::Consensus => "consensus",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn one_or_many<'de, D, T>(de: D) -> std::result::Result<Vec<T>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany<T> {
        One(T),
        Many(Vec<T>),
    }
    Ok(match OneOrMany::deserialize(de)? {
        OneOrMany::One(x) => vec![x],
        OneOrMany::Many(v) => v,
    })
}

/// Run parameters. `n`, `d` and `nu` accept a single value or a list; only
/// `theta-table` (d, nu) and `homogenisation` (n) use more than one value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default, deserialize_with = "one_or_many", skip_serializing_if = "Vec::is_empty")]
    pub n: Vec<usize>,
    #[serde(default, deserialize_with = "one_or_many", skip_serializing_if = "Vec::is_empty")]
    pub d: Vec<u32>,
    #[serde(default, deserialize_with = "one_or_many", skip_serializing_if = "Vec::is_empty")]
    pub nu: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<f64>,
    /// Simulation horizon in natural time units.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    /// Macroscopic horizon `T` (homogenisation).
    #[serde(default, rename = "T", alias = "t_end", skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    /// Evaluation time (duality).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hbar: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_n: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Overrides the computed diffusion constant (fw only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<StartMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_cap: Option<f64>,
    /// Check times in units of `n` (voter heterozygosity) or absolute (fw).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub s: Vec<f64>,
    /// Absolute check times for the voter martingale gates.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub check_times: Vec<f64>,
}

impl Params {
    /// Fills every field of `self` that `other` sets.
    pub fn override_with(&mut self, other: Params) {
        macro_rules! take_vec {
            ($($f:ident),*) => {$( if !other.$f.is_empty() { self.$f = other.$f; } )*};
        }
        macro_rules! take_opt {
            ($($f:ident),*) => {$( if other.$f.is_some() { self.$f = other.$f; } )*};
        }
        take_vec!(n, d, nu, s, check_times);
        take_opt!(u, horizon, t_end, t, reps, delta, hbar, tol, s_n, dt, theta, start, grid_step, t_cap);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema")]
    pub schema: u32,
    pub experiment: Experiment,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        ExperimentConfig { schema: SCHEMA_VERSION, experiment, params: Params::default(), seed: 0, threads: None, out: None }
    }
}

/// Command-line values layered on top of an optional config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub experiment: Option<Experiment>,
    pub params: Params,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    serde_json::from_str(text).map_err(|e| config_err(format!("config: {e}")))
}

/// Reads `path` (if given), applies `flags` on top and validates the result.
pub fn load_config(path: Option<&Path>, flags: Overrides) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| config_err(format!("{}: {e}", p.display())))?;
            let cfg = parse_config(&text).map_err(|e| config_err(format!("{}: {e}", p.display())))?;
            if let Some(exp) = flags.experiment {
                if exp != cfg.experiment {
                    return Err(config_err(format!(
                        "config file describes {} but the subcommand is {exp}",
                        cfg.experiment
                    )));
                }
            }
            cfg
        }
        None => ExperimentConfig::new(
            flags.experiment.ok_or_else(|| config_err("no experiment given"))?,
        ),
    };
    cfg.params.override_with(flags.params);
    if let Some(seed) = flags.seed {
        cfg.seed = seed;
    }
    if flags.threads.is_some() {
        cfg.threads = flags.threads;
    }
    if flags.out.is_some() {
        cfg.out = flags.out;
    }
    validate(&cfg)?;
    Ok(cfg)
}

fn need<T: Copy>(v: Option<T>, name: &str, exp: Experiment) -> Result<T> {
    v.ok_or_else(|| config_err(format!("{exp}: missing required parameter `{name}`")))
}

fn single<T: Copy>(v: &[T], name: &str, exp: Experiment) -> Result<T> {
    match v {
        [x] => Ok(*x),
        [] => Err(config_err(format!("{exp}: missing required parameter `{name}`"))),
        _ => Err(config_err(format!("{exp}: `{name}` takes a single value"))),
    }
}

/// Checks presence and ranges of the parameters `cfg.experiment` uses.
pub fn validate(cfg: &ExperimentConfig) -> Result<()> {
    let exp = cfg.experiment;
    let p = &cfg.params;
    if cfg.schema != SCHEMA_VERSION {
        return Err(config_err(format!("unsupported schema {}; expected {SCHEMA_VERSION}", cfg.schema)));
    }
    if cfg.threads == Some(0) {
        return Err(config_err("threads must be >= 1"));
    }
    if let Some(&nu) = p.nu.iter().find(|&&nu| !(nu >= 0.0 && nu.is_finite())) {
        return Err(config_err(format!("nu={nu} must be finite and >= 0")));
    }
    let d_min = if exp == Experiment::ThetaTable { 2 } else { 3 };
    if let Some(&d) = p.d.iter().find(|&&d| d < d_min) {
        return Err(config_err(format!("{exp}: d={d} must be >= {d_min}")));
    }
    if let Some(u) = p.u {
        if !(0.0..=1.0).contains(&u) {
            return Err(config_err(format!("u={u} must lie in [0,1]")));
        }
    }
    if p.reps == Some(0) {
        return Err(config_err("reps must be >= 1"));
    }
    match exp {
        Experiment::ThetaTable => {
            if p.d.is_empty() || p.nu.is_empty() {
                return Err(config_err("theta-table: `d` and `nu` are required"));
            }
        }
        Experiment::Fw => {
            need(p.u, "u", exp)?;
            need(p.reps, "reps", exp)?;
            if p.theta.is_none() {
                single(&p.d, "d", exp)?;
                single(&p.nu, "nu", exp)?;
            }
        }
        Experiment::Homogenisation => {
            if p.n.is_empty() {
                return Err(config_err("homogenisation: missing required parameter `n`"));
            }
            single(&p.d, "d", exp)?;
            single(&p.nu, "nu", exp)?;
            need(p.reps, "reps", exp)?;
            need(p.u, "u", exp)?;
        }
        _ => {
            single(&p.n, "n", exp)?;
            single(&p.d, "d", exp)?;
            single(&p.nu, "nu", exp)?;
            need(p.reps, "reps", exp)?;
        }
    }
    match exp {
        Experiment::SimVoter | Experiment::Consensus => {
            need(p.u, "u", exp)?;
        }
        Experiment::DualityCheck => {
            need(p.t, "t", exp)?;
        }
        Experiment::SimToy if p.delta.is_none() && p.hbar.is_none() => {
            return Err(config_err("sim-toy: one of `delta` or `hbar` is required"));
        }
        _ => {}
    }
    if let Some(&n) = p.n.iter().find(|&&n| n < 2) {
        return Err(config_err(format!("n={n} must be >= 2")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub schema: u32,
    pub experiment: Experiment,
    pub seed: u64,
    pub params: Params,
    pub estimates: Map<String, Value>,
    pub gates: Vec<Gate>,
}

impl Summary {
    pub fn passed(&self) -> bool {
        self.gates.iter().all(|g| g.pass)
    }
}

/// Everything an experiment produces, before anything touches the disk.
#[derive(Debug, Clone)]
pub struct Report {
    pub summary: Summary,
    pub csv: Vec<u8>,
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let threads = threads
        .or_else(|| std::env::var(THREADS_ENV).ok().and_then(|s| s.parse().ok()))
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Runs the configured experiment on a pool of `cfg.threads` workers.
pub fn run(cfg: &ExperimentConfig) -> Result<Report> {
    validate(cfg)?;
    pool(cfg.threads)?.install(|| match cfg.experiment {
        Experiment::ThetaTable => run_theta_table(cfg),
        Experiment::SimMeeting => run_meeting(cfg),
        Experiment::SimVoter => run_voter(cfg),
        Experiment::SimToy => run_toy(cfg),
        Experiment::DualityCheck => run_duality(cfg),
        Experiment::Fw => run_fw(cfg),
        Experiment::EdgeTail => run_edge_tail(cfg),
        Experiment::Homogenisation => run_homogenisation(cfg),
        Experiment::Consensus => run_consensus(cfg),
    })
}

/// Default CSV path `<experiment>.csv`; the summary goes next to it as `.json`.
pub fn output_paths(cfg: &ExperimentConfig) -> (PathBuf, PathBuf) {
    let csv = cfg.out.clone().unwrap_or_else(|| PathBuf::from(format!("{}.csv", cfg.experiment)));
    let json = csv.with_extension("json");
    (csv, json)
}

pub fn write_report(cfg: &ExperimentConfig, report: &Report) -> Result<(PathBuf, PathBuf)> {
    let (csv, js) = output_paths(cfg);
    if let Some(dir) = csv.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(&csv, &report.csv)?;
    let mut text = serde_json::to_string_pretty(&report.summary)?;
    text.push('\n');
    fs::write(&js, text)?;
    Ok((csv, js))
}

/// Process exit code for a finished run or an error.
pub fn exit_code(outcome: &Result<Report>) -> i32 {
    match outcome {
        Ok(r) if r.summary.passed() => 0,
        Ok(_) => 1,
        Err(Error::NumericalFailure(_)) => 3,
        Err(_) => 2,
    }
}

fn summary(cfg: &ExperimentConfig, estimates: Map<String, Value>, gates: Vec<Gate>) -> Summary {
    Summary {
        schema: SCHEMA_VERSION,
        experiment: cfg.experiment,
        seed: cfg.seed,
        params: cfg.params.clone(),
        estimates,
        gates,
    }
}

fn csv_bytes<F>(header: &[&str], fill: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> Result<()>,
{
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header)?;
        fill(&mut w)?;
        w.flush()?;
    }
    Ok(buf)
}

fn gate_within(name: &str, value: f64, target: f64, se: f64, k: f64) -> Gate {
    Gate { name: name.to_string(), value, threshold: k * se, pass: within_se(value, target, se, k) }
}

fn model_theta(d: u32, nu: f64, tol: Option<f64>) -> Result<(ModelConst, f64)> {
    let c = make_consts(d, nu)?;
    let th = match tol {
        Some(t) => crate::theta::theta_with_tol(&c, t)?,
        None => theta(&c)?,
    };
    Ok((c, th))
}

fn run_theta_table(cfg: &ExperimentConfig) -> Result<Report> {
    let p = &cfg.params;
    let tol = p.tol.unwrap_or(DEFAULT_TOL);
    let mut rows = Vec::new();
    for &d in &p.d {
        for &nu in &p.nu {
            rows.push(ThetaBundle::compute(make_consts(d, nu)?, tol)?);
        }
    }
    let csv = csv_bytes(&["d", "nu", "beta", "rho", "delta0", "theta", "depth", "residual"], |w| {
        for b in &rows {
            let c = &b.consts;
            w.serialize((c.d, c.nu, c.beta, c.rho, b.delta0, b.theta, b.depth_used, b.residual))?;
        }
        Ok(())
    })?;
    let mut anchor = 0.0_f64;
    let mut identity = 0.0_f64;
    let mut residual = 0.0_f64;
    let mut has_anchor = false;
    let mut has_identity = false;
    for b in &rows {
        residual = residual.max(b.residual);
        if b.consts.nu == 0.0 {
            has_anchor = true;
            anchor = anchor.max((b.theta - b.consts.static_theta()).abs());
        } else if b.consts.d >= 3 {
            has_identity = true;
            identity = identity.max(identity_residual(&b.consts)?);
        }
    }
    let mut gates = vec![Gate::below("recursion-residual", residual, 1e-10)];
    if has_anchor {
        gates.push(Gate::below("closed-form-anchors", anchor, 1e-12));
    }
    if has_identity {
        gates.push(Gate::below("cf-identity", identity, 1e-10));
    }
    let mut est = Map::new();
    est.insert(
        "theta".into(),
        Value::Array(rows.iter().map(|b| json!({"d": b.consts.d, "nu": b.consts.nu, "theta": b.theta})).collect()),
    );
    Ok(Report { summary: summary(cfg, est, gates), csv })
}

fn run_meeting(cfg: &ExperimentConfig) -> Result<Report> {
    let p = &cfg.params;
    let exp = cfg.experiment;
    let (n, d, nu, reps) = (single(&p.n, "n", exp)?, single(&p.d, "d", exp)?, single(&p.nu, "nu", exp)?, need(p.reps, "reps", exp)?);
    let (_, th) = model_theta(d, nu, p.tol)?;
    let start = p.start.unwrap_or(StartMode::StationaryPair);
    let t_cap = p.t_cap.unwrap_or_else(|| default_t_cap(n, th));
    let runs: Vec<_> = (0..reps as u64)
        .into_par_iter()
        .map(|r| simulate_two_walks(n, d as usize, nu, start, t_cap, &mut replica_rng(cfg.seed, r)))
        .collect::<Result<_>>()?;
    let csv = csv_bytes(&["replica", "tau", "censored"], |w| {
        for (r, m) in runs.iter().enumerate() {
            w.serialize((r, m.tau, m.censored))?;
        }
        Ok(())
    })?;
    let censored = runs.iter().filter(|m| m.censored).count();
    let scaled: Vec<f64> = runs.iter().filter(|m| !m.censored).map(|m| m.tau / n as f64).collect();
    let rate = 2.0 * th;
    let mut est = Map::new();
    est.insert("theta".into(), json!(th));
    est.insert("censored".into(), json!(censored));
    let censor_frac = censored as f64 / reps as f64;
    let mut gates = vec![Gate::below("meeting-censoring", censor_frac, 0.01)];
    if !scaled.is_empty() {
        let (m, se) = mean_se(&scaled);
        let ks = ks_statistic(&scaled, |s| exp_cdf(rate, s))?;
        est.insert("mean_tau_over_n".into(), json!(m));
        est.insert("se".into(), json!(se));
        est.insert("ks".into(), json!(ks));
        if start == StartMode::StationaryPair {
            gates.push(Gate::below("meeting-ks", ks, 0.06));
            // coincident starts give tau = 0 and are excluded from the rate fit
            let positive: Vec<f64> = scaled.iter().copied().filter(|&x| x > 0.0).collect();
            if !positive.is_empty() {
                let fit = exp_rate_fit(&positive)?;
                est.insert("rate".into(), json!(fit.rate));
                est.insert("rate_ci".into(), json!([fit.ci_low, fit.ci_high]));
                gates.push(Gate::below("meeting-rate", (fit.rate - rate).abs() / rate, 0.10));
            }
        }
    }
    Ok(Report { summary: summary(cfg, est, gates), csv })
}

fn run_voter(cfg: &ExperimentConfig) -> Result<Report> {
    let p = &cfg.params;
    let exp = cfg.experiment;
    let (n, d, nu, reps) = (single(&p.n, "n", exp)?, single(&p.d, "d", exp)?, single(&p.nu, "nu", exp)?, need(p.reps, "reps", exp)?);
    let u = need(p.u, "u", exp)?;
    let (_, th) = model_theta(d, nu, p.tol)?;
    let s_points = if p.s.is_empty() { vec![0.2, 0.5, 1.0] } else { p.s.clone() };
    let smax = s_points.iter().cloned().fold(0.0, f64::max);
    let horizon = p.horizon.unwrap_or(smax * n as f64).max(p.check_times.iter().cloned().fold(0.0, f64::max));
    if !(horizon > 0.0) {
        return Err(config_err("sim-voter: horizon must be > 0"));
    }
    let step = p.grid_step.unwrap_or(horizon / 100.0);
    let init = VoterInit::Density(u);
    let traces: Vec<_> = (0..reps as u64)
        .into_par_iter()
        .map(|r| simulate_voter(n, d as usize, nu, &init, horizon, step, &mut replica_rng(cfg.seed, r)))
        .collect::<Result<_>>()?;
    let csv = csv_bytes(&["replica", "t", "O", "D"], |w| {
        for (r, tr) in traces.iter().enumerate() {
            for k in 0..tr.times.len() {
                w.serialize((r, tr.times[k], tr.opinion(k), tr.discordance[k]))?;
            }
        }
        Ok(())
    })?;
    let mut est = Map::new();
    est.insert("theta".into(), json!(th));
    est.insert("recount_ok".into(), json!(traces.iter().all(|t| t.recount_ok)));
    let mut gates = vec![Gate {
        name: "discordance-recount".into(),
        value: traces.iter().filter(|t| !t.recount_ok).count() as f64,
        threshold: 0.0,
        pass: traces.iter().all(|t| t.recount_ok),
    }];
    let at = |t: f64| -> Result<usize> {
        traces[0]
            .sample_at(t)
            .ok_or_else(|| config_err(format!("time {t} is not on the sampling grid (step {step})")))
    };
    let check_times = if p.check_times.is_empty() { vec![horizon] } else { p.check_times.clone() };
    for &t in &check_times {
        let k = at(t)?;
        let o: Vec<f64> = traces.iter().map(|tr| tr.opinion(k)).collect();
        let (mo, so) = mean_se(&o);
        gates.push(gate_within(&format!("martingale-O@{t}"), mo, u, so, 3.0));
        // O_t^2 - (1/n) int_0^t D  minus its value at 0
        let m2: Vec<f64> = traces
            .iter()
            .map(|tr| tr.opinion(k).powi(2) - tr.int_discordance[k] / n as f64 - tr.opinion(0).powi(2))
            .collect();
        let (mq, sq) = mean_se(&m2);
        gates.push(gate_within(&format!("quadratic-variation@{t}"), mq, 0.0, sq, 3.0));
        est.insert(format!("mean_O@{t}"), json!([mo, so]));
        est.insert(format!("qv_increment@{t}"), json!([mq, sq]));
    }
    for &s in &s_points {
        let t = s * n as f64;
        if t > horizon * (1.0 + 1e-12) {
            continue;
        }
        let k = at(t)?;
        let h: Vec<f64> = traces.iter().map(|tr| { let o = tr.opinion(k); o * (1.0 - o) }).collect();
        let (mh, sh) = mean_se(&h);
        let target = fw_heterozygosity(th, u, s);
        gates.push(gate_within(&format!("heterozygosity@s={s}"), mh, target, sh, 3.0));
        est.insert(format!("heterozygosity@s={s}"), json!({"mean": mh, "se": sh, "reference": target}));
    }
    Ok(Report { summary: summary(cfg, est, gates), csv })
}

fn run_toy(cfg: &ExperimentConfig) -> Result<Report> {
    let p = &cfg.params;
    let exp = cfg.experiment;
    let (n, d, nu, reps) = (single(&p.n, "n", exp)?, single(&p.d, "d", exp)?, single(&p.nu, "nu", exp)?, need(p.reps, "reps", exp)?);
    let height = match (p.hbar, p.delta) {
        (Some(h), _) => TreeHeight::Explicit(h),
        (None, Some(delta)) => TreeHeight::Delta(delta),
        (None, None) => return Err(config_err("sim-toy: one of `delta` or `hbar` is required")),
    };
    let model = TwoPhaseModel::new(d, nu, n as u64, height)?;
    let (_, th) = model_theta(d, nu, p.tol)?;
    let samples: Vec<_> = (0..reps as u64)
        .into_par_iter()
        .map(|r| model.sample(&mut replica_rng(cfg.seed, r)))
        .collect();
    let csv = csv_bytes(&["replica", "tau_first", "tau_second", "tau_final", "N"], |w| {
        for (r, s) in samples.iter().enumerate() {
            w.serialize((r, s.tau_first_total, s.tau_second_total, s.tau_final, s.iterations))?;
        }
        Ok(())
    })?;
    let scaled: Vec<f64> = samples.iter().map(|s| s.tau_final / n as f64).collect();
    let (m, se) = mean_se(&scaled);
    let ks = ks_statistic(&scaled, |s| exp_cdf(2.0 * th, s))?;
    let target = 1.0 / (2.0 * th);
    let mut est = Map::new();
    est.insert("theta".into(), json!(th));
    est.insert("hbar".into(), json!(model.hbar));
    est.insert("mean_tau_over_n".into(), json!(m));
    est.insert("se".into(), json!(se));
    est.insert("ks".into(), json!(ks));
    let gates = vec![
        Gate::below("two-phase-ks", ks, 0.05),
        Gate::below("two-phase-mean", (m - target).abs() / target, 0.05),
    ];
    Ok(Report { summary: summary(cfg, est, gates), csv })
}

fn run_duality(cfg: &ExperimentConfig) -> Result<Report> {
    use rand::Rng;
    let p = &cfg.params;
    let exp = cfg.experiment;
    let (n, d, nu, reps) = (single(&p.n, "n", exp)?, single(&p.d, "d", exp)?, single(&p.nu, "nu", exp)?, need(p.reps, "reps", exp)?);
    let t = need(p.t, "t", exp)?;
    let u = p.u.unwrap_or(0.5);
    let reports: Vec<_> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(cfg.seed, r);
            let xi: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<f64>() < u)).collect();
            duality_check(n, d as usize, nu, &xi, t, &mut rng)
        })
        .collect::<Result<_>>()?;
    let csv = csv_bytes(&["replica", "pass", "mismatch_count"], |w| {
        for (r, rep) in reports.iter().enumerate() {
            w.serialize((r, rep.pass, rep.mismatches.len()))?;
        }
        Ok(())
    })?;
    let total: usize = reports.iter().map(|r| r.mismatches.len()).sum();
    let mut est = Map::new();
    est.insert("failed_trials".into(), json!(reports.iter().filter(|r| !r.pass).count()));
    est.insert("mismatches".into(), json!(total));
    let gates = vec![Gate { name: "duality".into(), value: total as f64, threshold: 0.0, pass: total == 0 }];
    Ok(Report { summary: summary(cfg, est, gates), csv })
}

fn run_fw(cfg: &ExperimentConfig) -> Result<Report> {
    let p = &cfg.params;
    let exp = cfg.experiment;
    let th = match p.theta {
        Some(t) => t,
        None => model_theta(single(&p.d, "d", exp)?, single(&p.nu, "nu", exp)?, p.tol)?.1,
    };
    let u = need(p.u, "u", exp)?;
    let reps = need(p.reps, "reps", exp)?;
    let s_points = if p.s.is_empty() { vec![0.2, 0.5, 1.0] } else { p.s.clone() };
    let horizon = p.horizon.unwrap_or_else(|| s_points.iter().cloned().fold(0.0, f64::max));
    let (dt, every) = aligned_dt(p.dt.unwrap_or_else(|| default_dt(th)), p.grid_step.unwrap_or(0.01));
    let paths: Vec<_> = (0..reps as u64)
        .into_par_iter()
        .map(|r| fw_simulate(th, u, horizon, dt, every, &mut replica_rng(cfg.seed, r)))
        .collect::<Result<_>>()?;
    let csv = csv_bytes(&["path", "s", "B"], |w| {
        for (r, path) in paths.iter().enumerate() {
            for (s, b) in path.times.iter().zip(&path.values) {
                w.serialize((r, s, b))?;
            }
        }
        Ok(())
    })?;
    let mut est = Map::new();
    est.insert("theta".into(), json!(th));
    est.insert("dt".into(), json!(dt));
    let mut gates = Vec::new();
    for &s in s_points.iter().filter(|&&s| s <= horizon * (1.0 + 1e-12)) {
        let h: Vec<f64> = paths.iter().map(|p| { let b = p.value_at(s); b * (1.0 - b) }).collect();
        let (mh, sh) = mean_se(&h);
        let target = fw_heterozygosity(th, u, s);
        gates.push(gate_within(&format!("fw-heterozygosity@s={s}"), mh, target, sh, 3.0));
        est.insert(format!("heterozygosity@s={s}"), json!({"mean": mh, "se": sh, "reference": target}));
    }
    let end: Vec<f64> = paths.iter().map(|p| *p.values.last().unwrap()).collect();
    let (me, se) = mean_se(&end);
    gates.push(gate_within("fw-martingale", me, u, se, 3.0));
    Ok(Report { summary: summary(cfg, est, gates), csv })
}

fn run_edge_tail(cfg: &ExperimentConfig) -> Result<Report> {
    let p = &cfg.params;
    let exp = cfg.experiment;
    let (n, d, nu, reps) = (single(&p.n, "n", exp)?, single(&p.d, "d", exp)?, single(&p.nu, "nu", exp)?, need(p.reps, "reps", exp)?);
    let (_, th) = model_theta(d, nu, p.tol)?;
    let s_n = p.s_n.unwrap_or((n as f64).sqrt());
    let (runs, tail) = edge_tail_runs(n, d as usize, nu, s_n, reps, |r| replica_rng(cfg.seed, r))?;
    let csv = csv_bytes(&["replica", "tau", "censored"], |w| {
        for (r, m) in runs.iter().enumerate() {
            w.serialize((r, m.tau, m.censored))?;
        }
        Ok(())
    })?;
    let mut est = Map::new();
    est.insert("theta".into(), json!(th));
    est.insert("s_n".into(), json!(s_n));
    est.insert("phat".into(), json!(tail.phat));
    est.insert("se".into(), json!(tail.se));
    let tol = 0.03f64.max(3.0 * tail.se);
    let gates = vec![Gate::below("edge-tail", (tail.phat - th).abs(), tol)];
    Ok(Report { summary: summary(cfg, est, gates), csv })
}

fn run_homogenisation(cfg: &ExperimentConfig) -> Result<Report> {
    let p = &cfg.params;
    let exp = cfg.experiment;
    let (d, nu, reps) = (single(&p.d, "d", exp)?, single(&p.nu, "nu", exp)?, need(p.reps, "reps", exp)?);
    let u = need(p.u, "u", exp)?;
    let t_end = p.t_end.unwrap_or(1.0);
    let (_, th) = model_theta(d, nu, p.tol)?;
    let mut sizes = p.n.clone();
    sizes.sort_unstable();
    sizes.dedup();
    let init = VoterInit::Density(u);
    let mut rows = Vec::new();
    let mut stats = Vec::new();
    for (idx, &n) in sizes.iter().enumerate() {
        let horizon = homogenisation_scale(n, th) * t_end;
        let values: Vec<f64> = (0..reps as u64)
            .into_par_iter()
            .map(|r| {
                let mut rng = tagged_rng(cfg.seed, idx as u32 + 1, r);
                let tr = simulate_voter(n, d as usize, nu, &init, horizon, horizon, &mut rng)?;
                homogenisation_functional(&tr, th, n, t_end)
            })
            .collect::<Result<_>>()?;
        let (m, se) = mean_se(&values);
        stats.push((n, m, se));
        rows.extend(values.into_iter().enumerate().map(|(r, v)| (n, r, v)));
    }
    let csv = csv_bytes(&["n", "replica", "value"], |w| {
        for row in &rows {
            w.serialize(row)?;
        }
        Ok(())
    })?;
    let mut est = Map::new();
    est.insert("theta".into(), json!(th));
    est.insert(
        "by_n".into(),
        Value::Array(stats.iter().map(|&(n, m, se)| json!({"n": n, "mean": m, "se": se})).collect()),
    );
    let &(n_max, m_last, se_last) = stats.last().expect("at least one size");
    let mut gates = vec![gate_within(&format!("homogenisation@n={n_max}"), m_last, 0.0, se_last, 3.0)];
    if stats.len() > 1 {
        let bounds: Vec<f64> = stats.iter().map(|&(_, m, se)| m.abs() + se).collect();
        let worst = bounds.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
        gates.push(Gate::below("homogenisation-decreasing", worst, 0.0));
    }
    Ok(Report { summary: summary(cfg, est, gates), csv })
}

fn run_consensus(cfg: &ExperimentConfig) -> Result<Report> {
    let p = &cfg.params;
    let exp = cfg.experiment;
    let (n, d, nu, reps) = (single(&p.n, "n", exp)?, single(&p.d, "d", exp)?, single(&p.nu, "nu", exp)?, need(p.reps, "reps", exp)?);
    let u = need(p.u, "u", exp)?;
    let (_, th) = model_theta(d, nu, p.tol)?;
    let res = consensus_time_experiment(n, d as usize, nu, u, th, reps, |r| replica_rng(cfg.seed, r))?;
    let csv = csv_bytes(&["replica", "tau_over_n"], |w| {
        for (r, v) in res.scaled_times.iter().enumerate() {
            w.serialize((r, v))?;
        }
        Ok(())
    })?;
    let mut est = Map::new();
    est.insert("theta".into(), json!(th));
    est.insert("mean_tau_over_n".into(), json!(res.mean));
    est.insert("se".into(), json!(res.se));
    est.insert("censored".into(), json!(res.censored));
    est.insert("entropy_reference".into(), json!(res.reference));
    // exploratory: no gates
    Ok(Report { summary: summary(cfg, est, Vec::new()), csv })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(exp: Experiment, params: Params) -> Overrides {
        Overrides { experiment: Some(exp), params, ..Default::default() }
    }

    #[test]
    fn minimal_meeting_flags_are_valid() {
        let params = Params { n: vec![1500], d: vec![3], nu: vec![0.3], reps: Some(1000), ..Default::default() };
        let mut f = flags(Experiment::SimMeeting, params);
        f.seed = Some(7);
        let cfg = load_config(None, f).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.params.n, vec![1500]);
    }

    #[test]
    fn rejects_bad_values() {
        let p = Params { n: vec![100], d: vec![2], nu: vec![0.3], u: Some(0.5), reps: Some(3), ..Default::default() };
        assert!(matches!(load_config(None, flags(Experiment::SimVoter, p)), Err(Error::Config(_))));
        let p = Params { d: vec![2], nu: vec![0.0, 1.0], ..Default::default() };
        assert!(load_config(None, flags(Experiment::ThetaTable, p)).is_ok());
        let p = Params { n: vec![100], d: vec![3], nu: vec![-0.1], reps: Some(3), ..Default::default() };
        assert!(load_config(None, flags(Experiment::SimMeeting, p)).is_err());
        let p = Params { d: vec![3], nu: vec![0.3], reps: Some(3), ..Default::default() };
        let e = load_config(None, flags(Experiment::SimMeeting, p)).unwrap_err();
        assert!(e.to_string().contains("`n`"), "{e}");
    }

    #[test]
    fn json_config_and_override() {
        let text = r#"{"schema": 1, "experiment": "theta-table", "params": {"d": [3, 4], "nu": 0.3}, "seed": 5}"#;
        let mut cfg = parse_config(text).unwrap();
        assert_eq!(cfg.params.d, vec![3, 4]);
        assert_eq!(cfg.params.nu, vec![0.3]);
        cfg.params.override_with(Params { nu: vec![1.0], ..Default::default() });
        assert_eq!(cfg.params.nu, vec![1.0]);
        assert_eq!(cfg.params.d, vec![3, 4]);
        let bad = r#"{"experiment": "theta-table", "params": {"dd": 3}}"#;
        let e = parse_config(bad).unwrap_err().to_string();
        assert!(e.contains("dd") && e.contains("line"), "{e}");
    }

    #[test]
    fn theta_table_report() {
        let mut cfg = ExperimentConfig::new(Experiment::ThetaTable);
        cfg.params.d = vec![3, 4];
        cfg.params.nu = vec![0.0, 0.3];
        let rep = run(&cfg).unwrap();
        let text = String::from_utf8(rep.csv).unwrap();
        assert!(text.starts_with("d,nu,beta,rho,delta0,theta,depth,residual\n"));
        assert_eq!(text.lines().count(), 5);
        assert!(rep.summary.passed(), "{:?}", rep.summary.gates);
        assert_eq!(exit_code(&Ok(run(&cfg).unwrap())), 0);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let mut cfg = ExperimentConfig::new(Experiment::SimMeeting);
        cfg.params = Params { n: vec![60], d: vec![3], nu: vec![0.3], reps: Some(40), ..Default::default() };
        cfg.seed = 11;
        cfg.threads = Some(1);
        let a = run(&cfg).unwrap();
        cfg.threads = Some(4);
        let b = run(&cfg).unwrap();
        assert_eq!(a.csv, b.csv);
        assert_eq!(serde_json::to_string(&a.summary).unwrap(), serde_json::to_string(&b.summary).unwrap());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Err(Error::NumericalFailure("x".into()))), 3);
        assert_eq!(exit_code(&Err(Error::Config("x".into()))), 2);
    }
}
