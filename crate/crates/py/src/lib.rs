//! Python bindings: network loading, single-period OPF, the environment's
//! cost helpers, checkpoint inference and the CLI commands.

use std::path::PathBuf;
use std::sync::Arc;

use microdispatch::agent::Checkpoint as CoreCheckpoint;
use microdispatch::commands;
use microdispatch::config::RunConfig;
use microdispatch::env::{self, Env, PenaltyConfig};
use microdispatch::grid::{self, Network as CoreNetwork};
use microdispatch::powerflow::{solve_opf, NetworkModel, OpfConfig, OpfProblem};
use microdispatch::Error;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        Error::Domain(_) | Error::Infeasible(_) => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

#[pyclass(module = "microdispatch", frozen)]
struct Network {
    model: Arc<NetworkModel>,
}

#[pymethods]
impl Network {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let net = grid::load_network(path).map_err(err)?;
        Ok(Network {
            model: Arc::new(NetworkModel::new(net).map_err(err)?),
        })
    }

    #[getter]
    fn n_bus(&self) -> usize {
        self.model.n_bus()
    }

    #[getter]
    fn generators(&self) -> Vec<String> {
        self.model.network.generators.iter().map(|g| g.name.clone()).collect()
    }

    /// Number of primary actions for a battery ladder of `levels` steps.
    fn action_space_size(&self, levels: usize) -> usize {
        env::action_space_size(self.model.network.generators.len(), levels)
    }

    /// Fuel cost of generator `index` producing `p` kW for `dt` hours.
    #[pyo3(signature = (index, p, dt = 1.0))]
    fn fuel_cost(&self, index: usize, p: f64, dt: f64) -> PyResult<f64> {
        let g = self
            .model
            .network
            .generators
            .get(index)
            .ok_or_else(|| PyValueError::new_err(format!("no generator {index}")))?;
        Ok(env::fuel_cost(g, true, p, dt))
    }

    /// Solve one dispatch problem; returns a dict of the solution.
    #[pyo3(signature = (commitment, p_bat, p_pv, p_wt, d, q, price, prev_commitment = None, prev_dispatch = None, dt = 1.0))]
    #[allow(clippy::too_many_arguments)]
    fn opf<'py>(
        &self,
        py: Python<'py>,
        commitment: Vec<bool>,
        p_bat: f64,
        p_pv: f64,
        p_wt: f64,
        d: f64,
        q: f64,
        price: f64,
        prev_commitment: Option<Vec<bool>>,
        prev_dispatch: Option<Vec<f64>>,
        dt: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let gens = &self.model.network.generators;
        if commitment.len() != gens.len() {
            return Err(PyValueError::new_err(format!(
                "commitment has {} entries, network has {} generators",
                commitment.len(),
                gens.len()
            )));
        }
        let problem = OpfProblem {
            prev_commitment: prev_commitment.unwrap_or_else(|| commitment.clone()),
            prev_dispatch: prev_dispatch
                .unwrap_or_else(|| gens.iter().map(|g| 0.5 * (g.p_min + g.p_max)).collect()),
            commitment,
            p_bat,
            p_pv,
            p_wt,
            d,
            q,
            price,
            dt,
        };
        let sol = py.detach(|| solve_opf(&self.model, &problem, &OpfConfig::default()));
        let out = PyDict::new(py);
        out.set_item("converged", sol.converged)?;
        out.set_item("objective", sol.objective)?;
        out.set_item("p_g", sol.p_g)?;
        out.set_item("q_g", sol.q_g)?;
        out.set_item("p_grid", sol.p_grid)?;
        out.set_item("q_grid", sol.q_grid)?;
        out.set_item("v", sol.v)?;
        out.set_item("delta", sol.delta)?;
        out.set_item("branch_flows", sol.branch_flows)?;
        out.set_item("max_mismatch", sol.max_mismatch)?;
        out.set_item("iterations", sol.iterations)?;
        Ok(out)
    }

    /// Default-penalty environment step from the all-off initial state:
    /// returns (reward, penalty name, applied battery power).
    #[pyo3(signature = (action, p_pv, p_wt, d, q, price, soc = 0.5, levels = 9))]
    #[allow(clippy::too_many_arguments)]
    fn first_step(
        &self,
        action: usize,
        p_pv: f64,
        p_wt: f64,
        d: f64,
        q: f64,
        price: f64,
        soc: f64,
        levels: usize,
    ) -> PyResult<(f64, String, f64)> {
        let env = Env::new(self.model.clone(), levels, PenaltyConfig::default(), OpfConfig::default(), 1.0)
            .map_err(err)?;
        if action >= env.n_actions() {
            return Err(PyValueError::new_err(format!("action {action} out of range")));
        }
        let exo = env::Exogenous {
            p_pv,
            p_wt,
            d,
            q,
            price,
            forecast: Vec::new(),
        };
        let state = env.initial_state(&exo, soc);
        let out = env.step_index(&state, action, &exo);
        Ok((out.reward, format!("{:?}", out.penalty), out.p_bat))
    }
}

#[pyclass(module = "microdispatch", frozen)]
struct Checkpoint {
    inner: CoreCheckpoint,
}

#[pymethods]
impl Checkpoint {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Checkpoint {
            inner: CoreCheckpoint::load(path).map_err(err)?,
        })
    }

    #[getter]
    fn widths(&self) -> Vec<usize> {
        self.inner.net.widths()
    }

    #[getter]
    fn step(&self) -> u64 {
        self.inner.step
    }

    /// Greedy action for raw (unnormalised) state features.
    fn act(&self, features: Vec<f64>) -> PyResult<usize> {
        self.inner.act(&features).map_err(err)
    }

    /// Q-values for raw features.
    fn q_values(&self, features: Vec<f64>) -> PyResult<Vec<f64>> {
        if features.len() != self.inner.net.n_inputs() {
            return Err(err(Error::Dimension {
                expected: self.inner.net.n_inputs(),
                got: features.len(),
            }));
        }
        self.inner.net.forward(&self.inner.norm.apply(&features)).map_err(err)
    }
}

fn load_config(path: PathBuf) -> PyResult<RunConfig> {
    RunConfig::load(path).map_err(err)
}

/// Train from a run configuration; returns the checkpoint path.
#[pyfunction]
fn train(py: Python<'_>, config: PathBuf) -> PyResult<String> {
    let cfg = load_config(config)?;
    let report = py.detach(|| commands::cmd_train(&cfg, |_| {})).map_err(err)?;
    Ok(report.checkpoint.display().to_string())
}

/// Compare the trained policy with the baselines; returns
/// `[(scenario, policy, total_cost, gap)]`.
#[pyfunction]
fn compare(py: Python<'_>, config: PathBuf) -> PyResult<Vec<(usize, String, f64, Option<f64>)>> {
    let cfg = load_config(config)?;
    let report = py.detach(|| commands::cmd_compare(&cfg)).map_err(err)?;
    Ok(report
        .rows
        .into_iter()
        .map(|r| (r.scenario, r.policy, r.total_cost, r.gap))
        .collect())
}

/// Round-trip a case file through the parser; returns the canonical text.
#[pyfunction]
fn canonical_case(path: PathBuf) -> PyResult<String> {
    let net: CoreNetwork = grid::load_network(path).map_err(err)?;
    Ok(grid::serialize_network(&net))
}

#[pymodule]
#[pyo3(name = "microdispatch")]
fn py_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Network>()?;
    m.add_class::<Checkpoint>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(canonical_case, m)?)?;
    Ok(())
}
