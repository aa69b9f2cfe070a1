//! Python bindings: the diffusion constant, the graph, the simulators and the
//! experiment runner.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use dynvoter::experiment::{parse_config, run};
use dynvoter::fw::{default_dt, fw_simulate as fw_sim};
use dynvoter::graph::{GraphState, Stub, Vertex};
use dynvoter::rng::{replica_rng, ReplicaRng};
use dynvoter::sim::{self, StartMode, VoterInit};
use dynvoter::stats;
use dynvoter::theta::{self, make_consts, ThetaBundle, DEFAULT_TOL};
use dynvoter::toy::{TreeHeight, TwoPhaseModel};
use dynvoter::Error;

fn err(e: Error) -> PyErr {
    match e {
        Error::NumericalFailure(_) => PyRuntimeError::new_err(e.to_string()),
        Error::Io(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

type Res<T> = PyResult<T>;

fn consts(d: u32, nu: f64) -> Res<dynvoter::ModelConst> {
    make_consts(d, nu).map_err(err)
}

/// Diffusion constant `theta_{d,nu}`.
#[pyfunction]
#[pyo3(signature = (d, nu, tol=None))]
fn theta_value(d: u32, nu: f64, tol: Option<f64>) -> Res<f64> {
    theta::theta_with_tol(&consts(d, nu)?, tol.unwrap_or(DEFAULT_TOL)).map_err(err)
}

/// Continued fraction `Delta_{d,nu}` and the depth used.
#[pyfunction]
#[pyo3(signature = (d, nu, tol=None))]
fn delta(d: u32, nu: f64, tol: Option<f64>) -> Res<(f64, usize)> {
    theta::delta_cf(&consts(d, nu)?, tol.unwrap_or(DEFAULT_TOL)).map_err(err)
}

#[pyfunction]
fn delta_seq(d: u32, nu: f64, i_max: usize) -> Res<Vec<f64>> {
    theta::delta_seq(&consts(d, nu)?, i_max).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (d, nu, tol=None))]
fn theta_bundle<'py>(py: Python<'py>, d: u32, nu: f64, tol: Option<f64>) -> Res<Bound<'py, PyDict>> {
    let b = ThetaBundle::compute(consts(d, nu)?, tol.unwrap_or(DEFAULT_TOL)).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("d", b.consts.d)?;
    out.set_item("nu", b.consts.nu)?;
    out.set_item("beta", b.consts.beta)?;
    out.set_item("rho", b.consts.rho)?;
    out.set_item("delta0", b.delta0)?;
    out.set_item("theta", b.theta)?;
    out.set_item("delta_seq", b.delta_seq)?;
    out.set_item("depth_used", b.depth_used)?;
    out.set_item("residual", b.residual)?;
    Ok(out)
}

/// Probability that the killed chain started at `ell` ever reaches 0.
#[pyfunction]
fn meet_prob_q(d: u32, nu: f64, ell: usize) -> Res<f64> {
    theta::meet_prob_q(&consts(d, nu)?, ell).map_err(err)
}

/// Expected collision local time from distance `i`.
#[pyfunction]
fn local_time_r(d: u32, nu: f64, i: usize) -> Res<f64> {
    theta::local_time_r(&consts(d, nu)?, i).map_err(err)
}

#[pyfunction]
fn identity_residual(d: u32, nu: f64) -> Res<f64> {
    theta::identity_residual(&consts(d, nu)?).map_err(err)
}

/// `(gamma_n, hbar, gamma_inf)`; pass either `delta` or `hbar`.
#[pyfunction]
#[pyo3(signature = (d, nu, n, delta=None, hbar=None))]
fn gamma_rate(d: u32, nu: f64, n: u64, delta: Option<f64>, hbar: Option<u32>) -> Res<(f64, u32, f64)> {
    let c = consts(d, nu)?;
    let g = match (hbar, delta) {
        (Some(h), _) => theta::gamma_rate_with_height(&c, n, h),
        (None, Some(dl)) => theta::gamma_rate(&c, n, dl),
        (None, None) => theta::gamma_rate(&c, n, theta::DEFAULT_HEIGHT_DELTA),
    }
    .map_err(err)?;
    Ok((g.gamma_n, g.hbar, g.gamma_inf))
}

/// A `d`-regular multigraph as a stub matching, with its own random stream.
#[pyclass(name = "Graph")]
struct PyGraph {
    graph: GraphState,
    rng: ReplicaRng,
}

#[pymethods]
impl PyGraph {
    /// Uniform configuration-model graph.
    #[new]
    #[pyo3(signature = (n, d, seed=0))]
    fn new(n: usize, d: usize, seed: u64) -> Res<Self> {
        let mut rng = replica_rng(seed, 0);
        let graph = GraphState::sample_matching(n, d, &mut rng).map_err(err)?;
        Ok(PyGraph { graph, rng })
    }

    #[staticmethod]
    #[pyo3(signature = (n, d, edges, seed=0))]
    fn from_edges(n: usize, d: usize, edges: Vec<(Vertex, Vertex)>, seed: u64) -> Res<Self> {
        let graph = GraphState::from_edges(n, d, &edges).map_err(err)?;
        Ok(PyGraph { graph, rng: replica_rng(seed, 0) })
    }

    #[getter]
    fn n(&self) -> usize {
        self.graph.n()
    }

    #[getter]
    fn d(&self) -> usize {
        self.graph.d()
    }

    fn matching(&self) -> Vec<Stub> {
        self.graph.matching().to_vec()
    }

    fn is_valid(&self) -> bool {
        self.graph.is_valid()
    }

    fn neighbor_via(&self, stub: Stub) -> Res<Vertex> {
        if stub as usize >= self.graph.num_stubs() {
            return Err(PyValueError::new_err(format!("stub {stub} out of range")));
        }
        Ok(self.graph.neighbor_via(stub))
    }

    fn apply_rewire(&mut self, a: Stub, b: Stub) -> Res<bool> {
        let m = self.graph.num_stubs() as Stub;
        if a >= m || b >= m {
            return Err(PyValueError::new_err("stub out of range"));
        }
        Ok(self.graph.apply_rewire(a, b))
    }

    /// One uniform rewiring move: `(a, b, applied)`.
    fn random_rewire(&mut self) -> (Stub, Stub, bool) {
        let ev = self.graph.random_rewire(0.0, &mut self.rng);
        (ev.a, ev.b, ev.applied)
    }

    fn uniform_edge(&mut self) -> (Vertex, Vertex) {
        self.graph.uniform_edge(&mut self.rng)
    }

    #[pyo3(signature = (x, y, cutoff=usize::MAX))]
    fn distance(&self, x: Vertex, y: Vertex, cutoff: usize) -> Option<usize> {
        self.graph.bfs_distance(x, y, cutoff)
    }

    fn __repr__(&self) -> String {
        format!("Graph(n={}, d={})", self.graph.n(), self.graph.d())
    }
}

fn parse_start(s: &str) -> Res<StartMode> {
    match s {
        "stationary-pair" => Ok(StartMode::StationaryPair),
        "edge" => Ok(StartMode::Edge),
        _ => Err(PyValueError::new_err(format!("unknown start mode {s:?}"))),
    }
}

/// Meeting time of two walks: `(tau, censored)`.
#[pyfunction]
#[pyo3(signature = (n, d, nu, start="stationary-pair", t_cap=None, seed=0, replica=0))]
fn simulate_two_walks(
    n: usize,
    d: usize,
    nu: f64,
    start: &str,
    t_cap: Option<f64>,
    seed: u64,
    replica: u64,
) -> Res<(f64, bool)> {
    let cap = match t_cap {
        Some(c) => c,
        None => sim::default_t_cap(n, theta_value(d as u32, nu, None)?),
    };
    let r = sim::simulate_two_walks(n, d, nu, parse_start(start)?, cap, &mut replica_rng(seed, replica)).map_err(err)?;
    Ok((r.tau, r.censored))
}

/// Voter trace sampled on a grid; returns a dict of lists.
#[pyfunction]
#[pyo3(signature = (n, d, nu, u, horizon, grid_step=None, seed=0, replica=0))]
#[allow(clippy::too_many_arguments)]
fn simulate_voter<'py>(
    py: Python<'py>,
    n: usize,
    d: usize,
    nu: f64,
    u: f64,
    horizon: f64,
    grid_step: Option<f64>,
    seed: u64,
    replica: u64,
) -> Res<Bound<'py, PyDict>> {
    let step = grid_step.unwrap_or(horizon / 100.0);
    let tr = sim::simulate_voter(n, d, nu, &VoterInit::Density(u), horizon, step, &mut replica_rng(seed, replica))
        .map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("t", tr.times.clone())?;
    out.set_item("O", tr.opinions())?;
    out.set_item("D", tr.discordance.clone())?;
    out.set_item("int_D", tr.int_discordance.clone())?;
    out.set_item("int_H", tr.int_heterozygosity.clone())?;
    out.set_item("consensus_time", tr.consensus_time)?;
    Ok(out)
}

/// Forward voter vs backward walks on one event log: `(pass, mismatches)`.
#[pyfunction]
#[pyo3(signature = (d, nu, xi, t, seed=0, replica=0))]
fn duality_check(d: usize, nu: f64, xi: Vec<u8>, t: f64, seed: u64, replica: u64) -> Res<(bool, Vec<Vertex>)> {
    let rep = sim::duality_check(xi.len(), d, nu, &xi, t, &mut replica_rng(seed, replica)).map_err(err)?;
    Ok((rep.pass, rep.mismatches))
}

/// Fisher-Wright path: `(times, values)`.
#[pyfunction]
#[pyo3(signature = (theta, u, horizon, dt=None, record_every=1, seed=0, replica=0))]
fn fw_simulate(
    theta: f64,
    u: f64,
    horizon: f64,
    dt: Option<f64>,
    record_every: usize,
    seed: u64,
    replica: u64,
) -> Res<(Vec<f64>, Vec<f64>)> {
    let p = fw_sim(theta, u, horizon, dt.unwrap_or_else(|| default_dt(theta)), record_every, &mut replica_rng(seed, replica))
        .map_err(err)?;
    Ok((p.times, p.values))
}

/// Draws from the two-phase model: list of `(tau_first, tau_second, tau_final, N)`.
#[pyfunction]
#[pyo3(signature = (d, nu, n, hbar, reps=1, seed=0))]
fn two_phase_samples(d: u32, nu: f64, n: u64, hbar: u32, reps: usize, seed: u64) -> Res<Vec<(f64, f64, f64, u64)>> {
    let model = TwoPhaseModel::new(d, nu, n, TreeHeight::Explicit(hbar)).map_err(err)?;
    Ok((0..reps as u64)
        .map(|r| {
            let s = model.sample(&mut replica_rng(seed, r));
            (s.tau_first_total, s.tau_second_total, s.tau_final, s.iterations)
        })
        .collect())
}

#[pyfunction]
fn ks_exponential(samples: Vec<f64>, rate: f64) -> Res<f64> {
    stats::ks_statistic(&samples, |s| stats::exp_cdf(rate, s)).map_err(err)
}

/// `(rate, ci_low, ci_high)`.
#[pyfunction]
fn exp_rate_fit(samples: Vec<f64>) -> Res<(f64, f64, f64)> {
    let f = stats::exp_rate_fit(&samples).map_err(err)?;
    Ok((f.rate, f.ci_low, f.ci_high))
}

/// Runs a JSON experiment config; returns `(summary_json, csv_text)`.
#[pyfunction]
fn run_experiment(py: Python<'_>, config_json: &str) -> Res<(String, String)> {
    let cfg = parse_config(config_json).map_err(err)?;
    let report = py.detach(|| run(&cfg)).map_err(err)?;
    let summary = serde_json::to_string(&report.summary).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let csv = String::from_utf8(report.csv).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok((summary, csv))
}

#[pymodule]
#[pyo3(name = "dynvoter")]
fn dynvoter_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_function(wrap_pyfunction!(theta_value, m)?)?;
    m.add("theta", m.getattr("theta_value")?)?;
    m.add_function(wrap_pyfunction!(delta, m)?)?;
    m.add_function(wrap_pyfunction!(delta_seq, m)?)?;
    m.add_function(wrap_pyfunction!(theta_bundle, m)?)?;
    m.add_function(wrap_pyfunction!(meet_prob_q, m)?)?;
    m.add_function(wrap_pyfunction!(local_time_r, m)?)?;
    m.add_function(wrap_pyfunction!(identity_residual, m)?)?;
    m.add_function(wrap_pyfunction!(gamma_rate, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_two_walks, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_voter, m)?)?;
    m.add_function(wrap_pyfunction!(duality_check, m)?)?;
    m.add_function(wrap_pyfunction!(fw_simulate, m)?)?;
    m.add_function(wrap_pyfunction!(two_phase_samples, m)?)?;
    m.add_function(wrap_pyfunction!(ks_exponential, m)?)?;
    m.add_function(wrap_pyfunction!(exp_rate_fit, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
