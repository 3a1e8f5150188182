//! The online protocol: commit an iterate, reveal the round's cost, incur
//! its loss, then use that cost to produce the next iterate.
//!
//! Bookkeeping convention: the cost `f_t` revealed at round `t` is charged
//! at the pair `(xᵗ, zᵗ)` committed beforehand — round 1 charges the caller's
//! starting pair — and then drives the update producing `(xᵗ⁺¹, zᵗ⁺¹)`. So
//! iterate `t+1` is built from `f_t`, never from a cost the player has not
//! seen. Costs are pulled lazily from the stream; the loop cannot peek ahead.
//!
//! Two cumulative quantities are tracked per run: the loss sum
//! `Σ_t f_t(xᵗ) + g(zᵗ)` (whose gap to `N` times the best fixed decision's
//! average value is the objective regret) and the squared-residual sum
//! `Σ_t ‖Axᵗ + Bzᵗ − c‖²` (the constraint-violation regret).

use crate::engine::{
    step_perturbed, Perturbation, ProximalScaling, SSchedule, SolverConfig, SolverState,
};
use crate::linalg::{PsdOperator, Vector};
use crate::problem::{CouplingConstraint, OnlineStream, Regularizer};
use thiserror::Error;

/// One row of the per-round regret ledger.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    /// `f_t(xᵗ) + g(zᵗ)`; `+∞` when the committed `zᵗ` violates an indicator.
    pub loss: f64,
    /// `‖Axᵗ + Bzᵗ − c‖²`.
    pub residual_sq: f64,
    /// Prefix sum of `loss`.
    pub cum_loss: f64,
    /// Prefix sum of `residual_sq`.
    pub cum_ctr: f64,
}

/// The per-round ledger of a completed (or aborted) run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegretLog {
    pub rounds: Vec<RoundRecord>,
}

impl RegretLog {
    fn push(&mut self, round: usize, loss: f64, residual_sq: f64) {
        let (cum_loss, cum_ctr) = match self.rounds.last() {
            Some(prev) => (prev.cum_loss + loss, prev.cum_ctr + residual_sq),
            None => (loss, residual_sq),
        };
        self.rounds.push(RoundRecord { round, loss, residual_sq, cum_loss, cum_ctr });
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn total_loss(&self) -> f64 {
        self.rounds.last().map_or(0.0, |r| r.cum_loss)
    }

    pub fn total_residual_sq(&self) -> f64 {
        self.rounds.last().map_or(0.0, |r| r.cum_ctr)
    }
}

/// Objective regret `Σ_t loss_t − N·ν*`; any infinite loss propagates to an
/// infinite regret rather than being clipped.
pub fn objective_regret(log: &RegretLog, nu_star: f64, n_rounds: usize) -> f64 {
    if log.rounds.iter().any(|r| r.loss.is_infinite()) {
        return f64::INFINITY;
    }
    log.total_loss() - n_rounds as f64 * nu_star
}

/// Constraint-violation regret `Σ_t ‖Axᵗ + Bzᵗ − c‖²`.
pub fn constraint_regret(log: &RegretLog) -> f64 {
    log.total_residual_sq()
}

/// The committed triple of one round.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateTriple {
    pub x: Vector,
    pub z: Vector,
    pub y: Vector,
}

/// The full iterate history `k = 1..=N+1`. Index `0` holds the starting
/// triple; the pre-start `z⁰` is defined to equal `z¹` so one-step history
/// terms are well defined from the first round.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub states: Vec<IterateTriple>,
}

impl Trajectory {
    pub fn state(&self, k: usize) -> &IterateTriple {
        &self.states[k - 1]
    }

    /// `zᵏ⁻¹` with the `z⁰ = z¹` convention.
    pub fn z_lag(&self, k: usize) -> &Vector {
        if k == 1 {
            &self.states[0].z
        } else {
            &self.states[k - 2].z
        }
    }

    pub fn rounds(&self) -> usize {
        self.states.len().saturating_sub(1)
    }
}

/// Everything a completed run exposes for regret math and certification.
#[derive(Debug, Clone)]
pub struct OnlineRun {
    pub log: RegretLog,
    pub trajectory: Trajectory,
    /// The recorded subgradient of `f_t` at the committed `xᵗ`, one per round.
    pub subgradients: Vec<Vector>,
    /// Engine-side loss `f_k(xᵏ⁺¹) + g(zᵏ⁺¹)` of each step, one per round.
    pub step_losses: Vec<f64>,
    pub sigma: f64,
}

#[derive(Debug, Error)]
#[error("run aborted at round {round}: {source}")]
pub struct RunError {
    pub round: usize,
    pub source: crate::engine::EngineError,
    /// Ledger of the rounds completed before the abort.
    pub partial: RegretLog,
}

/// Parameters of an online run; `sigma = None` applies the default `√N`.
#[derive(Debug, Clone)]
pub struct OnlineParams {
    pub sigma: Option<f64>,
    pub tau: f64,
    pub t_op: PsdOperator,
    pub s_schedule: SSchedule,
}

impl OnlineParams {
    pub fn resolve_sigma(&self, n_rounds: usize) -> f64 {
        self.sigma.unwrap_or_else(|| (n_rounds as f64).sqrt())
    }
}

/// Drive the protocol for the stream's full horizon.
pub fn run_online(
    stream: &OnlineStream,
    g: &Regularizer,
    cc: &CouplingConstraint,
    params: &OnlineParams,
    init: SolverState,
) -> Result<OnlineRun, RunError> {
    run_online_perturbed(stream, g, cc, params, init, None)
}

/// [`run_online`] with an optional injected fault, for audit-sensitivity
/// tests.
pub fn run_online_perturbed(
    stream: &OnlineStream,
    g: &Regularizer,
    cc: &CouplingConstraint,
    params: &OnlineParams,
    init: SolverState,
    perturbation: Option<&Perturbation>,
) -> Result<OnlineRun, RunError> {
    let n_rounds = stream.horizon();
    let sigma = params.resolve_sigma(n_rounds);
    let config = SolverConfig {
        sigma,
        tau: params.tau,
        t_op: params.t_op.clone(),
        s_schedule: params.s_schedule.clone(),
        scaling: ProximalScaling::Online,
    };
    let mut log = RegretLog::default();
    let mut trajectory = Trajectory::default();
    let mut subgradients = Vec::with_capacity(n_rounds);
    let mut step_losses = Vec::with_capacity(n_rounds);
    let mut state = init;
    trajectory.states.push(IterateTriple {
        x: state.x.clone(),
        z: state.z.clone(),
        y: state.y.clone(),
    });
    for t in 1..=n_rounds {
        let abort = |source: crate::engine::EngineError, log: &RegretLog| RunError {
            round: t,
            source,
            partial: log.clone(),
        };
        let cost = stream.cost(t).map_err(|e| abort(e.into(), &log))?;
        // reveal: charge the committed pair
        let loss = cost.value(&state.x) + g.value(&state.z);
        let res = cc.residual(&state.x, &state.z).map_err(|e| abort(e.into(), &log))?;
        log.push(t, loss, res * res);
        subgradients.push(cost.gradient(&state.x));
        // update: the revealed cost drives the next iterate
        let (next, rec) = step_perturbed(&cost, g, cc, &state, &config, perturbation)
            .map_err(|e| abort(e, &log))?;
        step_losses.push(rec.loss);
        trajectory.states.push(IterateTriple {
            x: next.x.clone(),
            z: next.z.clone(),
            y: next.y.clone(),
        });
        state = next;
    }
    Ok(OnlineRun { log, trajectory, subgradients, step_losses, sigma })
}

/// Run the offline iteration (constant cost, offline proximal scaling) for a
/// fixed number of rounds, with the same ledger and trajectory shape as an
/// online run.
pub fn run_offline(
    problem: &crate::problem::OfflineProblem,
    params: &OnlineParams,
    init: SolverState,
    rounds: usize,
) -> Result<OnlineRun, RunError> {
    let sigma = params.sigma.unwrap_or_else(|| (rounds as f64).sqrt());
    let config = SolverConfig {
        sigma,
        tau: params.tau,
        t_op: params.t_op.clone(),
        s_schedule: params.s_schedule.clone(),
        scaling: ProximalScaling::Offline,
    };
    let mut log = RegretLog::default();
    let mut trajectory = Trajectory::default();
    let mut subgradients = Vec::with_capacity(rounds);
    let mut step_losses = Vec::with_capacity(rounds);
    let mut state = init;
    trajectory.states.push(IterateTriple {
        x: state.x.clone(),
        z: state.z.clone(),
        y: state.y.clone(),
    });
    for t in 1..=rounds {
        let loss = problem.cost.value(&state.x) + problem.reg.value(&state.z);
        let res = problem
            .cc
            .residual(&state.x, &state.z)
            .map_err(|e| RunError { round: t, source: e.into(), partial: log.clone() })?;
        log.push(t, loss, res * res);
        subgradients.push(problem.cost.gradient(&state.x));
        let (next, rec) = step_perturbed(&problem.cost, &problem.reg, &problem.cc, &state, &config, None)
            .map_err(|e| RunError { round: t, source: e, partial: log.clone() })?;
        step_losses.push(rec.loss);
        trajectory.states.push(IterateTriple {
            x: next.x.clone(),
            z: next.z.clone(),
            y: next.y.clone(),
        });
        state = next;
    }
    Ok(OnlineRun { log, trajectory, subgradients, step_losses, sigma })
}
