//! Numerical certification of the iteration's per-round decrease estimates.
//!
//! Nothing here re-proves anything: the module evaluates both sides of each
//! claimed inequality on an actual trajectory, at full floating-point
//! precision, and reports the slack `RHS − LHS`. A run is certified when
//! every slack stays above `−tol·scale`. The companion [`crate::report`]
//! module turns per-run measurements into regret-bound evaluations.
//!
//! Three per-round decrease estimates are checked against a feasible anchor
//! pair `(x̂, ẑ)`:
//!
//! * the **two-sided potential form** — a potential at round `k` minus the
//!   same potential at `k+1` minus explicit decrease terms;
//! * the **refined potential form** — the same statement with the residual
//!   cross-terms rebalanced into the constants `s_τ`, `t_τ`;
//! * the **combined form** — the refined form folded into two metric
//!   operators: an anchor metric `M̄_k` weighting the distance to `(x̂, ẑ)`
//!   and a step metric `H̄_k` weighting the successive difference.
//!
//! For offline runs against a certified stationary triple, the combined form
//! tightens to a contraction of the full `(x, z, y)` distance, which is the
//! classical Fejér-style estimate; [`check_fejer_recovery`] certifies it.

use crate::engine::SSchedule;
use crate::linalg::{
    hcat, positive_definite, seminorm_sq, spectral_norm_sym, Matrix, PsdOperator, Vector,
};
use crate::online::{OnlineRun, Trajectory};
use crate::oracle::KktTriple;
use crate::problem::{CouplingConstraint, QuadCost, Regularizer};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("dual step-length out of range (0, (1+sqrt(5))/2): got {0}")]
    TauOutOfRange(f64),
    #[error("anchor pair is infeasible: residual {0:.3e}")]
    AnchorInfeasible(f64),
    #[error("well-posedness predicates disagree (x/z blocks {xz}, anchor metric {anchor}, step metric {step}); this flags an assembly bug")]
    EquivalenceViolation { xz: bool, anchor: bool, step: bool },
    #[error("schedule error: {0}")]
    Schedule(String),
    #[error("round {0} outside the recorded trajectory")]
    RoundOutOfRange(usize),
    #[error("stationary triple not certified: {0}")]
    UncertifiedKkt(String),
    #[error("linear algebra failure: {0}")]
    Linalg(#[from] crate::linalg::LinalgError),
    #[error("problem error: {0}")]
    Problem(#[from] crate::problem::ProblemError),
}

/// The dual-step-length constants entering every decrease estimate:
/// `s_τ = ¼(5 − τ − 3·min(τ, 1/τ))`, `t_τ = ½(1 − τ + min(τ, 1/τ))`, and
/// the bound coefficient `η(τ) = (1 + 8τ) / (2 t_τ τ)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TauConstants {
    pub tau: f64,
    pub s_tau: f64,
    pub t_tau: f64,
    pub eta_tau: f64,
}

/// Evaluate the `τ` constants; `τ` must lie strictly inside
/// `(0, (1+√5)/2)` so that `t_τ > 0` and none of the estimates degenerate.
pub fn tau_constants(tau: f64) -> Result<TauConstants, AuditError> {
    if !(tau > 0.0 && tau < crate::engine::TAU_LIMIT) {
        return Err(AuditError::TauOutOfRange(tau));
    }
    let min_tt = tau.min(1.0 / tau);
    let s_tau = 0.25 * (5.0 - tau - 3.0 * min_tt);
    let t_tau = 0.5 * (1.0 - tau + min_tt);
    let eta_tau = (1.0 + 8.0 * tau) / (2.0 * t_tau * tau);
    Ok(TauConstants { tau, s_tau, t_tau, eta_tau })
}

impl TauConstants {
    pub fn min_tau_inv(&self) -> f64 {
        self.tau.min(1.0 / self.tau)
    }
}

/// Per-run fixed data the certification needs.
#[derive(Debug, Clone)]
pub struct AuditContext<'a> {
    pub cc: &'a CouplingConstraint,
    pub reg: &'a Regularizer,
    pub t_op: &'a PsdOperator,
    pub s_schedule: &'a SSchedule,
    pub sigma: f64,
    pub consts: TauConstants,
    /// The x-proximal multiplier `ρ`: `σ` for online runs, `1` for offline.
    pub prox_factor: f64,
}

impl<'a> AuditContext<'a> {
    /// The stacked map `Ē = [A B]` acting on `(x, z)`.
    pub fn stacked_map(&self) -> Matrix {
        hcat(self.cc.a(), self.cc.b())
    }
}

/// The metric operators of one round, assembled from its cost curvature.
#[derive(Debug, Clone)]
pub struct OperatorBundle {
    /// The round's x-proximal operator `S_k` (unscaled).
    pub s_k: PsdOperator,
    /// `M̄_k = Diag(ρS_k + Σ_f, T + Σ_g + σBᵀB) + s_τ ĒᵀĒ` on `(x, z)`.
    pub anchor_metric: PsdOperator,
    /// `H̄_k = Diag(ρS_k + ½Σ_f, T + Σ_g + 2t_τ τσ BᵀB) + ¼t_τσ ĒᵀĒ`.
    pub step_metric: PsdOperator,
    /// `Θ_k = ½Σ_f + ρS_k + (2τ/(1+8τ)) t_τ σ AᵀA` on `x` — the x-block
    /// floor of the step metric.
    pub x_step_floor: PsdOperator,
    /// `W_k = Diag(Σ_f, Σ_g) + ½t_τσ ĒᵀĒ` — the solution-regret weight.
    pub solution_metric: PsdOperator,
    /// `M̂_k = Diag(ρS_k, T + σBᵀB) + (1 − min(τ,1/τ))σ ĒᵀĒ`.
    pub alt_anchor_metric: PsdOperator,
    /// `Ĥ_k = Diag(ρS_k, T + 2σt_τ BᵀB)`.
    pub alt_step_metric: PsdOperator,
    /// `Diag(M̄_k, (στ)⁻¹ I)` on `(x, z, y)` — the contraction metric.
    pub full_anchor_metric: PsdOperator,
    /// `Diag(H̄_k, (στ²)⁻¹ t_τ I)` on `(x, z, y)`.
    pub full_step_metric: PsdOperator,
}

/// Assemble the round's operator bundle and cross-check the three
/// well-posedness predicates that must agree: positive definiteness of the
/// two subproblem blocks, of the anchor metric, and of the step metric.
pub fn assemble_operators(
    ctx: &AuditContext<'_>,
    cost: &QuadCost,
) -> Result<OperatorBundle, AuditError> {
    let cc = ctx.cc;
    let (sigma, rho) = (ctx.sigma, ctx.prox_factor);
    let c = &ctx.consts;
    let s_k = ctx
        .s_schedule
        .operator(cost)
        .map_err(|e| AuditError::Schedule(e.to_string()))?;
    let sf = cost.curvature();
    let sg = ctx.reg.curvature_op();
    let a_gram = PsdOperator::gram(cc.a());
    let b_gram = PsdOperator::gram(cc.b());
    let e_gram = PsdOperator::gram(&ctx.stacked_map());

    let x_block = s_k.scale(rho).add(sf);
    let z_block = ctx.t_op.add(&sg).add(&b_gram.scale(sigma));
    let anchor_metric = x_block.block_diag(&z_block).add(&e_gram.scale(c.s_tau));

    let x_block_h = s_k.scale(rho).add(&sf.scale(0.5));
    let z_block_h = ctx
        .t_op
        .add(&sg)
        .add(&b_gram.scale(2.0 * c.t_tau * c.tau * sigma));
    let step_metric = x_block_h
        .block_diag(&z_block_h)
        .add(&e_gram.scale(0.25 * c.t_tau * sigma));

    let beta = 2.0 * c.tau * c.t_tau / (1.0 + 8.0 * c.tau);
    let x_step_floor = sf
        .scale(0.5)
        .add(&s_k.scale(rho))
        .add(&a_gram.scale(beta * sigma));

    let solution_metric = sf
        .block_diag(&sg)
        .add(&e_gram.scale(0.5 * c.t_tau * sigma));

    let alt_anchor_metric = s_k
        .scale(rho)
        .block_diag(&ctx.t_op.add(&b_gram.scale(sigma)))
        .add(&e_gram.scale((1.0 - c.min_tau_inv()) * sigma));
    let alt_step_metric = s_k
        .scale(rho)
        .block_diag(&ctx.t_op.add(&b_gram.scale(2.0 * sigma * c.t_tau)));

    let y_dim = cc.y_dim();
    let full_anchor_metric = anchor_metric
        .block_diag(&PsdOperator::scaled_identity(y_dim, 1.0 / (sigma * c.tau)));
    let full_step_metric = step_metric.block_diag(&PsdOperator::scaled_identity(
        y_dim,
        c.t_tau / (sigma * c.tau * c.tau),
    ));

    // the three well-posedness predicates are equivalent; a disagreement
    // means the assembly itself is broken
    let tol = 1e-9;
    let x_pred = sf.add(&s_k.scale(rho)).add(&a_gram.scale(sigma));
    let z_pred = sg.add(ctx.t_op).add(&b_gram.scale(sigma));
    let p_blocks = positive_definite(&x_pred, tol * x_pred.spectral_norm().max(1.0))
        && positive_definite(&z_pred, tol * z_pred.spectral_norm().max(1.0));
    let p_anchor =
        positive_definite(&anchor_metric, tol * anchor_metric.spectral_norm().max(1.0));
    let p_step = positive_definite(&step_metric, tol * step_metric.spectral_norm().max(1.0));
    if p_blocks != p_anchor || p_anchor != p_step {
        return Err(AuditError::EquivalenceViolation {
            xz: p_blocks,
            anchor: p_anchor,
            step: p_step,
        });
    }

    Ok(OperatorBundle {
        s_k,
        anchor_metric,
        step_metric,
        x_step_floor,
        solution_metric,
        alt_anchor_metric,
        alt_step_metric,
        full_anchor_metric,
        full_step_metric,
    })
}

/// The three equivalent well-posedness predicates, exposed separately for
/// the draw-based agreement tests.
pub fn well_posedness_predicates(
    ctx: &AuditContext<'_>,
    cost: &QuadCost,
) -> Result<(bool, bool, bool), AuditError> {
    match assemble_operators(ctx, cost) {
        Ok(bundle) => {
            let tol = 1e-9;
            let p = positive_definite(
                &bundle.anchor_metric,
                tol * bundle.anchor_metric.spectral_norm().max(1.0),
            );
            Ok((p, p, p))
        }
        Err(AuditError::EquivalenceViolation { xz, anchor, step }) => Ok((xz, anchor, step)),
        Err(e) => Err(e),
    }
}

/// One evaluated inequality at one round.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SlackRow {
    pub round: usize,
    pub id: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub pass: bool,
}

impl SlackRow {
    fn new(round: usize, id: &'static str, lhs: f64, rhs: f64, tol: f64) -> Self {
        let slack = rhs - lhs;
        let pass = slack >= -tol * lhs.abs().max(rhs.abs()).max(1.0);
        Self { round, id, lhs, rhs, slack, pass }
    }
}

pub const DESCENT_COMBINED: &str = "descent_combined";
pub const DESCENT_POTENTIAL: &str = "descent_potential";
pub const DESCENT_REFINED: &str = "descent_refined";
pub const FEJER_CONTRACTION: &str = "fejer_contraction";
pub const FEJER_MONOTONE: &str = "fejer_monotone";

/// Everything one round's descent evaluation needs from the trajectory.
pub struct RoundView<'a> {
    pub k: usize,
    pub cost: &'a QuadCost,
    pub x_k: &'a Vector,
    pub z_k: &'a Vector,
    pub y_k: &'a Vector,
    pub z_lag: &'a Vector,
    pub x_next: &'a Vector,
    pub z_next: &'a Vector,
    pub y_next: &'a Vector,
}

impl<'a> RoundView<'a> {
    pub fn from_trajectory(
        traj: &'a Trajectory,
        cost: &'a QuadCost,
        k: usize,
    ) -> Result<Self, AuditError> {
        if k == 0 || k + 1 > traj.states.len() {
            return Err(AuditError::RoundOutOfRange(k));
        }
        let s_k = traj.state(k);
        let s_next = traj.state(k + 1);
        Ok(Self {
            k,
            cost,
            x_k: &s_k.x,
            z_k: &s_k.z,
            y_k: &s_k.y,
            z_lag: traj.z_lag(k),
            x_next: &s_next.x,
            z_next: &s_next.z,
            y_next: &s_next.y,
        })
    }
}

/// Check that the anchor pair satisfies the coupling constraint tightly
/// enough to be a legitimate comparator.
pub fn check_anchor_feasible(
    cc: &CouplingConstraint,
    anchor: (&Vector, &Vector),
) -> Result<(), AuditError> {
    let r = cc
        .residual(anchor.0, anchor.1)
        .map_err(AuditError::Problem)?;
    if r > 1e-10 * cc.c().norm().max(1.0) {
        return Err(AuditError::AnchorInfeasible(r));
    }
    Ok(())
}

/// Evaluate the three per-round decrease estimates against a feasible
/// anchor. Returns rows in the order combined, two-sided potential, refined.
pub fn check_descent_inequality(
    ctx: &AuditContext<'_>,
    bundle: &OperatorBundle,
    view: &RoundView<'_>,
    g: &Regularizer,
    anchor: (&Vector, &Vector),
    tol: f64,
) -> Result<Vec<SlackRow>, AuditError> {
    check_anchor_feasible(ctx.cc, anchor)?;
    let cc = ctx.cc;
    let c = &ctx.consts;
    let (sigma, rho, tau) = (ctx.sigma, ctx.prox_factor, c.tau);
    let (x_hat, z_hat) = anchor;
    let f = view.cost;
    let sf = f.curvature();
    let sg = g.curvature_op();
    let m_tt = c.min_tau_inv();

    let value_gap = (f.value(view.x_next) + g.value(view.z_next))
        - (f.value(x_hat) + g.value(z_hat));
    let r_next = cc.residual_vec(view.x_next, view.z_next)?;
    let r_cur = cc.residual_vec(view.x_k, view.z_k)?;

    let u_cur = crate::linalg::stack2(view.x_k, view.z_k);
    let u_next = crate::linalg::stack2(view.x_next, view.z_next);
    let u_hat = crate::linalg::stack2(x_hat, z_hat);
    let du = &u_next - &u_cur;
    let dx = view.x_next - view.x_k;
    let dz = view.z_next - view.z_k;

    let rho_s = bundle.s_k.scale(rho);
    let sn = |op: &PsdOperator, v: &Vector| seminorm_sq(op, v);

    // combined form: anchor-metric decrease minus step-metric cost
    let lhs_combined = value_gap + 0.5 * sigma * c.t_tau * r_next.norm_squared();
    let hist_cur = sn(ctx.t_op, &(view.z_k - view.z_lag))?;
    let hist_next = sn(ctx.t_op, &dz)?;
    let rhs_combined = 0.5 * (view.y_k.norm_squared() / (tau * sigma) + hist_cur)
        - 0.5 * (view.y_next.norm_squared() / (tau * sigma) + hist_next)
        + 0.5
            * (sn(&bundle.anchor_metric, &(&u_cur - &u_hat))?
                - sn(&bundle.anchor_metric, &(&u_next - &u_hat))?)
        - 0.5 * sn(&bundle.step_metric, &du)?;
    let combined = SlackRow::new(view.k, DESCENT_COMBINED, lhs_combined, rhs_combined, tol);

    // two-sided potential form
    let potential = |x: &Vector, z: &Vector, y: &Vector, z_hist: &Vector, r: &Vector| {
        Ok::<f64, AuditError>(
            y.norm_squared() / (2.0 * sigma * tau)
                + 0.5 * sn(&rho_s, &(x - x_hat))?
                + 0.5 * sn(ctx.t_op, &(z - z_hat))?
                + 0.5 * sigma * (cc.b() * (z - z_hat)).norm_squared()
                + 0.5 * sn(ctx.t_op, &(z - z_hist))?
                + (1.0 - m_tt) * 0.5 * sigma * r.norm_squared(),
        )
    };
    let pot_cur = potential(view.x_k, view.z_k, view.y_k, view.z_lag, &r_cur)?;
    let pot_next = potential(view.x_next, view.z_next, view.y_next, view.z_k, &r_next)?;
    let decrease_pot = 0.5 * tau * (1.0 - tau + m_tt) * sigma
        * (cc.b() * &dz).norm_squared()
        + 0.5 * sn(ctx.t_op, &dz)?
        + 0.5 * sn(&rho_s, &dx)?
        + 0.5 * sn(sf, &(view.x_next - x_hat))?
        + 0.5 * sn(&sg, &(view.z_next - z_hat))?
        + (1.0 - tau + m_tt) * 0.5 * sigma * r_next.norm_squared();
    let rhs_potential = pot_cur - pot_next - decrease_pot;
    let two_sided = SlackRow::new(view.k, DESCENT_POTENTIAL, value_gap, rhs_potential, tol);

    // refined form: residual cross-terms rebalanced into s_τ, t_τ
    let refined_side = |x: &Vector, z: &Vector, y: &Vector, z_hist: &Vector| {
        Ok::<f64, AuditError>(
            0.5 * (y.norm_squared() / (tau * sigma)
                + sn(&rho_s, &(x - x_hat))?
                + sn(ctx.t_op, &(z - z_hat))?
                + sigma * (cc.b() * (z - z_hat)).norm_squared()
                + sn(ctx.t_op, &(z - z_hist))?
                + c.s_tau
                    * sigma
                    * (cc.a() * (x - x_hat) + cc.b() * (z - z_hat)).norm_squared()
                + sn(sf, &(x - x_hat))?
                + sn(&sg, &(z - z_hat))?),
        )
    };
    let side_cur = refined_side(view.x_k, view.z_k, view.y_k, view.z_lag)?;
    let side_next = refined_side(view.x_next, view.z_next, view.y_next, view.z_k)?;
    let decrease_ref = 0.5
        * (2.0 * c.t_tau * sigma * tau * (cc.b() * &dz).norm_squared()
            + sn(ctx.t_op, &dz)?
            + sn(&rho_s, &dx)?
            + 0.5 * sn(sf, &dx)?
            + 0.5 * sn(&sg, &dz)?
            + c.t_tau * sigma * r_next.norm_squared()
            + 0.25 * c.t_tau * sigma * (cc.a() * &dx + cc.b() * &dz).norm_squared());
    let rhs_refined = side_cur - side_next - decrease_ref;
    let refined = SlackRow::new(view.k, DESCENT_REFINED, value_gap, rhs_refined, tol);

    Ok(vec![combined, two_sided, refined])
}

/// Sampled certificate of the step-metric floor: for every `(x, z)`,
/// `‖(x,z)‖²_{H̄} ≥ ‖z‖²_{Σ_g+T} + ‖x‖²_Θ`. Returns the smallest observed
/// slack over `samples` random unit pairs.
pub fn check_step_metric_floor<R: Rng>(
    ctx: &AuditContext<'_>,
    bundle: &OperatorBundle,
    samples: usize,
    rng: &mut R,
) -> Result<f64, AuditError> {
    let n = ctx.cc.x_dim();
    let zdim = ctx.cc.z_dim();
    let sg_t = ctx.reg.curvature_op().add(ctx.t_op);
    let mut worst = f64::INFINITY;
    for _ in 0..samples {
        let u = Vector::from_fn(n + zdim, |_, _| rng.gen_range(-1.0..1.0));
        let norm = u.norm();
        if norm < 1e-9 {
            continue;
        }
        let u = u / norm;
        let x = u.rows(0, n).into_owned();
        let z = u.rows(n, zdim).into_owned();
        let lhs = seminorm_sq(&bundle.step_metric, &u)?;
        let rhs = seminorm_sq(&sg_t, &z)? + seminorm_sq(&bundle.x_step_floor, &x)?;
        worst = worst.min(lhs - rhs);
    }
    Ok(if worst.is_finite() { worst } else { 0.0 })
}

/// Measured assumption certificates of a completed run.
#[derive(Debug, Clone, serde::Serialize)]
pub struct AssumptionCertificates {
    /// Largest positive part of `f_k(x̂) + g(ẑ) − f_k(xᵏ) − g(zᵏ)`.
    pub gamma0: f64,
    /// `L² = (1/N) Σ ‖gᵏ‖²` with `gᵏ` the recorded subgradients.
    pub l_squared: f64,
    /// Whether `ρS_k + βσAᵀA ⪰ βσI` held at every round
    /// (`β = 2τ t_τ / (1+8τ)`), the geometry the rate bounds need.
    pub prox_geometry_ok: bool,
    /// Worst-round margin of that geometry check (scaled eigenvalue).
    pub prox_geometry_margin: f64,
    /// Whether the proximal schedule was non-increasing in the Loewner
    /// order over the rounds actually used.
    pub schedule_monotone: bool,
    /// Smallest eigenvalue of any used `S_k` (positive means the schedule
    /// stays above a definite floor).
    pub schedule_floor: f64,
}

/// Measure the run-level assumption certificates.
pub fn certify_assumptions(
    ctx: &AuditContext<'_>,
    run: &OnlineRun,
    costs: &[QuadCost],
    g: &Regularizer,
    anchor: (&Vector, &Vector),
) -> Result<AssumptionCertificates, AuditError> {
    let n_rounds = run.log.len();
    assert_eq!(costs.len(), n_rounds, "one cost per recorded round");
    let (x_hat, z_hat) = anchor;
    let g_hat = g.value(z_hat);
    let mut gamma0: f64 = 0.0;
    for (k, cost) in costs.iter().enumerate() {
        let anchored = cost.value(x_hat) + g_hat;
        let committed = run.log.rounds[k].loss;
        if committed.is_finite() {
            gamma0 = gamma0.max(anchored - committed);
        }
    }
    let l_squared = run
        .subgradients
        .iter()
        .map(|s| s.norm_squared())
        .sum::<f64>()
        / n_rounds as f64;

    let beta = 2.0 * ctx.consts.tau * ctx.consts.t_tau / (1.0 + 8.0 * ctx.consts.tau);
    let a_gram = PsdOperator::gram(ctx.cc.a());
    let mut prox_margin = f64::INFINITY;
    let mut schedule_monotone = true;
    let mut schedule_floor = f64::INFINITY;
    let mut prev_s: Option<PsdOperator> = None;
    for cost in costs {
        let s_k = ctx
            .s_schedule
            .operator(cost)
            .map_err(|e| AuditError::Schedule(e.to_string()))?;
        let geom = s_k.scale(ctx.prox_factor).add(&a_gram.scale(beta * ctx.sigma)).matrix()
            - Matrix::identity(ctx.cc.x_dim(), ctx.cc.x_dim()) * (beta * ctx.sigma);
        let eigs = crate::linalg::sym_eigenvalues(&geom);
        let scale = spectral_norm_sym(&geom).max(1.0);
        prox_margin = prox_margin.min(eigs.min() / scale);
        schedule_floor = schedule_floor.min(s_k.min_eigenvalue());
        if let Some(prev) = &prev_s {
            if !crate::linalg::loewner_geq(prev, &s_k, 1e-9)? {
                schedule_monotone = false;
            }
        }
        prev_s = Some(s_k);
    }
    if !prox_margin.is_finite() {
        prox_margin = 0.0;
    }
    if !schedule_floor.is_finite() {
        schedule_floor = 0.0;
    }
    Ok(AssumptionCertificates {
        gamma0,
        l_squared,
        prox_geometry_ok: prox_margin >= -1e-9,
        prox_geometry_margin: prox_margin,
        schedule_monotone,
        schedule_floor,
    })
}

/// Per-round contraction check against a certified stationary triple: the
/// metric distance plus the one-step history must shrink by at least the
/// step-metric cost. Also scans the distance-plus-history sequence for
/// monotonicity. Returns one contraction row per round plus a final summary
/// row for the scan.
pub fn check_fejer_recovery(
    ctx: &AuditContext<'_>,
    bundle: &OperatorBundle,
    traj: &Trajectory,
    kkt: &KktTriple,
    tol: f64,
) -> Result<Vec<SlackRow>, AuditError> {
    let scale = (kkt.x.norm() + kkt.z.norm() + kkt.y.norm()).max(1.0);
    let cert = kkt.dual_x_residual.max(kkt.dual_z_residual).max(kkt.primal_residual);
    if cert > 1e-9 * scale {
        return Err(AuditError::UncertifiedKkt(format!(
            "certificate residual {cert:.3e} exceeds tolerance"
        )));
    }
    let w_bar = crate::linalg::stack3(&kkt.x, &kkt.z, &kkt.y);
    let n_rounds = traj.rounds();
    let mut rows = Vec::with_capacity(n_rounds + 1);
    let mut potentials = Vec::with_capacity(n_rounds + 1);
    let w_of = |k: usize| {
        let s = traj.state(k);
        crate::linalg::stack3(&s.x, &s.z, &s.y)
    };
    for k in 1..=n_rounds + 1 {
        let dist = seminorm_sq(&bundle.full_anchor_metric, &(w_of(k) - &w_bar))?;
        let hist = seminorm_sq(ctx.t_op, &(&traj.state(k).z - traj.z_lag(k)))?;
        potentials.push(dist + hist);
    }
    for k in 1..=n_rounds {
        let dw = w_of(k + 1) - w_of(k);
        let cost = seminorm_sq(&bundle.full_step_metric, &dw)?;
        // potential(k) − potential(k+1) must cover the step-metric cost
        let lhs = potentials[k] + cost;
        let rhs = potentials[k - 1];
        rows.push(SlackRow::new(k, FEJER_CONTRACTION, lhs, rhs, tol));
    }
    // non-increasing scan of the distance-plus-history sequence
    let worst = potentials
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let scan_scale = potentials.iter().cloned().fold(1.0_f64, f64::max);
    rows.push(SlackRow {
        round: n_rounds,
        id: FEJER_MONOTONE,
        lhs: worst,
        rhs: 0.0,
        slack: -worst,
        pass: worst <= tol * scan_scale,
    });
    Ok(rows)
}

/// Arithmetic mean of the first `t` recorded iterate triples.
pub fn averaged_iterates(
    traj: &Trajectory,
    t: usize,
) -> Result<(Vector, Vector, Vector), AuditError> {
    if t == 0 || t > traj.states.len() {
        return Err(AuditError::RoundOutOfRange(t));
    }
    let first = traj.state(1);
    let mut x = Vector::zeros(first.x.len());
    let mut z = Vector::zeros(first.z.len());
    let mut y = Vector::zeros(first.y.len());
    for k in 1..=t {
        let s = traj.state(k);
        x += &s.x;
        z += &s.z;
        y += &s.y;
    }
    let w = 1.0 / t as f64;
    Ok((x * w, z * w, y * w))
}
