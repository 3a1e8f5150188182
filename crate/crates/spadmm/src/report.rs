//! Regret-bound evaluation over completed runs, and the machine-readable
//! audit report.
//!
//! Each bound row records the measured left-hand side, the evaluated
//! right-hand side with all constants computed from the run itself, the
//! slack, and a status. Rows whose hypotheses the run does not certify
//! (non-monotone proximal schedule, missing definite floor, penalty not
//! `√N`) are downgraded to report-only or skipped rather than asserted —
//! an inequality is only graded when its preconditions are measured true.

use crate::audit::{
    assemble_operators, certify_assumptions, check_descent_inequality, check_fejer_recovery,
    check_step_metric_floor, tau_constants, AssumptionCertificates, AuditContext, AuditError,
    RoundView, SlackRow, DESCENT_COMBINED,
};
use crate::linalg::{seminorm_sq, stack2, PsdOperator, Vector};
use crate::online::{OnlineParams, OnlineRun};
use crate::oracle::{KktTriple, OfflineOptimum};
use crate::problem::{CouplingConstraint, OfflineProblem, OnlineStream, QuadCost, Regularizer};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// Audit tolerances are relative: a row passes when its slack stays above
/// `−tol·max(1, |lhs|, |rhs|)`.
#[derive(Debug, Clone, Copy)]
pub struct AuditOptions {
    pub tol: f64,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self { tol: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundStatus {
    Pass,
    Fail,
    /// Evaluated for inspection; never graded (either the statement itself
    /// is conditional in a way the run cannot certify, or it is known to be
    /// informational only).
    ReportOnly,
    /// Preconditions absent (for instance `σ ≠ √N`), nothing evaluated.
    NotEvaluated,
}

/// One evaluated regret or complexity bound.
#[derive(Debug, Clone, serde::Serialize)]
pub struct BoundRow {
    pub id: &'static str,
    pub lhs: Option<f64>,
    pub rhs: Option<f64>,
    pub slack: Option<f64>,
    /// The same left-hand side under the other summation convention
    /// (committed rounds `1..N` versus post-update rounds `2..N+1`).
    pub alt_lhs: Option<f64>,
    pub status: BoundStatus,
    pub note: Option<String>,
}

impl BoundRow {
    fn evaluated(id: &'static str, lhs: f64, rhs: f64, assert: bool, tol: f64) -> Self {
        let slack = rhs - lhs;
        let status = if !assert {
            BoundStatus::ReportOnly
        } else if slack >= -tol * lhs.abs().max(rhs.abs()).max(1.0) {
            BoundStatus::Pass
        } else {
            BoundStatus::Fail
        };
        Self { id, lhs: Some(lhs), rhs: Some(rhs), slack: Some(slack), alt_lhs: None, status, note: None }
    }

    fn skipped(id: &'static str, reason: impl Into<String>) -> Self {
        Self {
            id,
            lhs: None,
            rhs: None,
            slack: None,
            alt_lhs: None,
            status: BoundStatus::NotEvaluated,
            note: Some(reason.into()),
        }
    }

    fn with_alt(mut self, alt: f64) -> Self {
        self.alt_lhs = Some(alt);
        self
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

pub const OBJ_RATE: &str = "obj_regret_rate";
pub const CTR_RATE: &str = "ctr_regret_rate";
pub const OBJ_SQRT_N: &str = "obj_regret_sqrt_n";
pub const CTR_SQRT_N: &str = "ctr_regret_sqrt_n";
pub const OBJ_PD_FLOOR: &str = "obj_regret_pd_floor";
pub const CTR_PD_FLOOR: &str = "ctr_regret_pd_floor";
pub const SOLUTION_FLOOR: &str = "solution_regret_floor";
pub const OFFLINE_OBJ_RATE: &str = "offline_obj_rate";
pub const OFFLINE_CTR_RATE: &str = "offline_ctr_rate";
pub const AVERAGED_OBJ_GAP: &str = "averaged_obj_gap";
pub const AVERAGED_CTR_GAP: &str = "averaged_ctr_gap";
pub const STEP_METRIC_FLOOR: &str = "step_metric_floor";

/// Scalar constants entering the bound right-hand sides, all computed from
/// the run and its instance data.
#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct BoundConstants {
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa3: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub eta1: Option<f64>,
    pub eta2: Option<f64>,
    pub eta3: Option<f64>,
    /// Euclidean distance squared from the start pair to the optimizer.
    pub start_dist_sq: f64,
    /// The same distance in the round-1 anchor metric.
    pub start_dist_anchor_sq: f64,
    /// The same distance in the round-1 alternate anchor metric.
    pub start_dist_alt_anchor_sq: f64,
    /// `ν*` — the per-round optimal value of the comparison problem.
    pub nu_star: f64,
}

/// The full certification summary of one run.
#[derive(Debug, Clone, serde::Serialize)]
pub struct AuditReport {
    pub rounds: usize,
    pub sigma: f64,
    pub tau: crate::audit::TauConstants,
    pub assumptions: AssumptionCertificates,
    pub constants: BoundConstants,
    pub bounds: Vec<BoundRow>,
    /// Smallest slack observed per per-round inequality id.
    pub min_slack: BTreeMap<String, f64>,
    /// All per-round rows; persisted as CSV, not in the JSON report.
    #[serde(skip)]
    pub per_round: Vec<SlackRow>,
    pub notes: Vec<String>,
    pub passed: bool,
}

impl AuditReport {
    pub fn failing_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .bounds
            .iter()
            .filter(|b| b.status == BoundStatus::Fail)
            .map(|b| b.id.to_string())
            .collect();
        let mut seen = std::collections::BTreeSet::new();
        for row in &self.per_round {
            if !row.pass && seen.insert(row.id) {
                ids.push(row.id.to_string());
            }
        }
        ids
    }

    /// The per-round slack table as CSV with header
    /// `round,ineq_id,lhs,rhs,slack,pass`.
    pub fn per_round_csv(&self) -> String {
        let mut out = String::from("round,ineq_id,lhs,rhs,slack,pass\n");
        for row in &self.per_round {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                row.round, row.id, row.lhs, row.rhs, row.slack, row.pass
            ));
        }
        out
    }
}

fn summarize(rows: &[SlackRow]) -> BTreeMap<String, f64> {
    let mut map: BTreeMap<String, f64> = BTreeMap::new();
    for row in rows {
        map.entry(row.id.to_string())
            .and_modify(|m| *m = m.min(row.slack))
            .or_insert(row.slack);
    }
    map
}

/// Deterministic generator for the sampled floor certificate, so reports
/// are byte-identical across invocations.
fn floor_probe_rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0x5EED_F10C)
}

fn sqrt_n_matches(sigma: f64, n_rounds: usize) -> bool {
    let root = (n_rounds as f64).sqrt();
    (sigma - root).abs() <= 1e-9 * root.max(1.0)
}

/// Certify an online run: per-round decrease rows for every round, measured
/// assumption certificates, and every applicable regret bound.
pub fn audit_online_run(
    stream: &OnlineStream,
    g: &Regularizer,
    cc: &CouplingConstraint,
    params: &OnlineParams,
    run: &OnlineRun,
    optimum: &OfflineOptimum,
    options: AuditOptions,
) -> Result<AuditReport, AuditError> {
    let n_rounds = run.trajectory.rounds();
    let sigma = run.sigma;
    let consts = tau_constants(params.tau)?;
    let ctx = AuditContext {
        cc,
        reg: g,
        t_op: &params.t_op,
        s_schedule: &params.s_schedule,
        sigma,
        consts,
        prox_factor: sigma,
    };
    let anchor = (&optimum.x, &optimum.z);
    let costs: Vec<QuadCost> = (1..=n_rounds)
        .map(|t| stream.cost(t))
        .collect::<Result<_, _>>()?;

    let mut per_round = Vec::with_capacity(3 * n_rounds);
    let mut solution_quad_sum = 0.0;
    let mut bundle1 = None;
    for k in 1..=n_rounds {
        let bundle = assemble_operators(&ctx, &costs[k - 1])?;
        let view = RoundView::from_trajectory(&run.trajectory, &costs[k - 1], k)?;
        per_round.extend(check_descent_inequality(&ctx, &bundle, &view, g, anchor, options.tol)?);
        let u_next = stack2(view.x_next, view.z_next);
        let u_hat = stack2(anchor.0, anchor.1);
        solution_quad_sum += seminorm_sq(&bundle.solution_metric, &(u_next - u_hat))?;
        if k == 1 {
            bundle1 = Some(bundle);
        }
    }
    let bundle1 = bundle1.expect("at least one round");
    let assumptions = certify_assumptions(&ctx, run, &costs, g, anchor)?;

    // sampled floor certificate on the round-1 operators
    let mut rng = floor_probe_rng();
    let floor_slack = check_step_metric_floor(&ctx, &bundle1, 500, &mut rng)?;

    let nu_star = optimum.value_per_round(n_rounds);
    let state1 = run.trajectory.state(1);
    let u1 = stack2(&state1.x, &state1.z);
    let u_hat = stack2(anchor.0, anchor.1);
    let start_dist_sq = (&u1 - &u_hat).norm_squared();
    let start_dist_anchor_sq = seminorm_sq(&bundle1.anchor_metric, &(&u1 - &u_hat))?;
    let start_dist_alt_anchor_sq = seminorm_sq(&bundle1.alt_anchor_metric, &(&u1 - &u_hat))?;
    let hist0 = seminorm_sq(&params.t_op, &(&state1.z - run.trajectory.z_lag(1)))?;
    let y1_sq = state1.y.norm_squared();
    let g_z1 = g.value(&state1.z);
    let g_zn1 = g.value(&run.trajectory.state(n_rounds + 1).z);
    let sg = g.curvature_op();
    let sf1 = costs[0].curvature().spectral_norm();
    let s1_norm = bundle1.s_k.spectral_norm();
    let t_plus_sg = params.t_op.add(&sg).spectral_norm();
    let bb_norm = PsdOperator::gram(cc.b()).spectral_norm();
    let ee_norm = PsdOperator::gram(&ctx.stacked_map()).spectral_norm();
    let t_norm = params.t_op.spectral_norm();
    let c = &consts;

    let constants = BoundConstants {
        kappa1: 0.5 * (sf1 + t_plus_sg + c.s_tau * ee_norm),
        kappa2: 0.5 * (s1_norm + bb_norm),
        kappa3: 0.5 * (y1_sq / c.tau + hist0) + g_z1,
        mu1: 0.5 * (s1_norm + bb_norm + (1.0 - c.min_tau_inv()) * ee_norm),
        mu2: 0.5 * (y1_sq / c.tau + hist0 + 2.0 * g_z1),
        eta1: None,
        eta2: None,
        eta3: None,
        start_dist_sq,
        start_dist_anchor_sq,
        start_dist_alt_anchor_sq,
        nu_star,
    };

    let n = n_rounds as f64;
    let gamma0 = assumptions.gamma0;
    let l2 = assumptions.l_squared;
    let lhs_obj = run.log.total_loss() / n - nu_star;
    let lhs_ctr_commit = run.log.total_residual_sq() / n;
    let lhs_ctr_shift: f64 = (2..=n_rounds + 1)
        .map(|k| {
            let s = run.trajectory.state(k);
            cc.residual(&s.x, &s.z).map(|r| r * r)
        })
        .sum::<Result<f64, _>>()?
        / n;
    let base = y1_sq / (c.tau * sigma) + hist0;
    let rate_hypotheses = assumptions.prox_geometry_ok && assumptions.schedule_monotone;
    let hyp_note = "hypotheses uncertified (requires a Loewner-monotone schedule and the proximal geometry margin)";

    let mut bounds = Vec::new();
    bounds.push(BoundRow {
        id: STEP_METRIC_FLOOR,
        lhs: Some(-floor_slack),
        rhs: Some(0.0),
        slack: Some(floor_slack),
        alt_lhs: None,
        status: if floor_slack >= -1e-9 { BoundStatus::Pass } else { BoundStatus::Fail },
        note: Some("sampled certificate: step metric dominates the auxiliary curvature plus the x-floor".into()),
    });

    // general-penalty rate bounds
    let rhs = 0.5 * base / n
        + 0.5 * start_dist_anchor_sq / n
        + c.eta_tau * l2 / sigma
        + (g_z1 - g_zn1) / n;
    let mut row = BoundRow::evaluated(OBJ_RATE, lhs_obj, rhs, rate_hypotheses, options.tol);
    if !rate_hypotheses {
        row = row.with_note(hyp_note);
    }
    bounds.push(row);

    let rhs = base / (n * c.t_tau * sigma)
        + start_dist_anchor_sq / (n * c.t_tau * sigma)
        + 2.0 * gamma0 / (c.t_tau * sigma)
        + 2.0 * c.eta_tau * l2 / sigma
        + 2.0 * (g_z1 - g_zn1) / (c.t_tau * sigma * n);
    let mut row = BoundRow::evaluated(CTR_RATE, lhs_ctr_shift, rhs, rate_hypotheses, options.tol)
        .with_alt(lhs_ctr_commit);
    if !rate_hypotheses {
        row = row.with_note(hyp_note);
    }
    bounds.push(row);

    // √N-penalty bounds
    if sqrt_n_matches(sigma, n_rounds) {
        let root = n.sqrt();
        let dist_term = (constants.kappa1 / n + constants.kappa2 / root) * start_dist_sq;
        let rhs = dist_term + c.eta_tau * l2 / root + (constants.kappa3 - g_zn1) / n;
        let mut row = BoundRow::evaluated(OBJ_SQRT_N, lhs_obj, rhs, rate_hypotheses, options.tol);
        if !rate_hypotheses {
            row = row.with_note(hyp_note);
        }
        bounds.push(row);
        let rhs = dist_term / (c.t_tau * root)
            + c.eta_tau * l2 / (c.t_tau * n)
            + (constants.kappa3 - g_zn1) / (n.powf(1.5) * c.t_tau)
            + 2.0 * gamma0 / (c.t_tau * root);
        let mut row = BoundRow::evaluated(CTR_SQRT_N, lhs_ctr_shift, rhs, rate_hypotheses, options.tol)
            .with_alt(lhs_ctr_commit);
        if !rate_hypotheses {
            row = row.with_note(hyp_note);
        }
        bounds.push(row);
    } else {
        bounds.push(BoundRow::skipped(OBJ_SQRT_N, "requires sigma = sqrt(N)"));
        bounds.push(BoundRow::skipped(CTR_SQRT_N, "requires sigma = sqrt(N)"));
    }

    // definite-floor bounds
    let floor = assumptions.schedule_floor;
    if floor > 0.0 {
        let rhs = 0.5 * base / n
            + 0.5 * start_dist_alt_anchor_sq / n
            + l2 / (sigma * floor)
            + (g_z1 - g_zn1) / n;
        let mut row = BoundRow::evaluated(
            OBJ_PD_FLOOR,
            lhs_obj,
            rhs,
            assumptions.schedule_monotone,
            options.tol,
        );
        if !assumptions.schedule_monotone {
            row = row.with_note(hyp_note);
        }
        bounds.push(row);
        let rhs = base / (n * c.t_tau * sigma)
            + start_dist_alt_anchor_sq / (n * c.t_tau * sigma)
            + 2.0 * gamma0 / (c.t_tau * sigma)
            + 2.0 * l2 / (c.t_tau * sigma * sigma * floor)
            + 2.0 * (g_z1 - g_zn1) / (c.t_tau * sigma * n);
        let mut row = BoundRow::evaluated(
            CTR_PD_FLOOR,
            lhs_ctr_shift,
            rhs,
            assumptions.schedule_monotone,
            options.tol,
        )
        .with_alt(lhs_ctr_commit);
        if !assumptions.schedule_monotone {
            row = row.with_note(hyp_note);
        }
        bounds.push(row);
        // solution regret: informational only, and only meaningful when the
        // measured objective regret is nonnegative
        if sqrt_n_matches(sigma, n_rounds) && lhs_obj >= 0.0 {
            let root = n.sqrt();
            let lhs_sol = solution_quad_sum / n;
            let rhs = (t_norm / n + 2.0 * constants.mu1 / root) * start_dist_sq
                + 2.0 * (constants.mu2 - g_zn1) / n
                + 2.0 * l2 / (floor * root)
                + 2.0 * gamma0 / (c.t_tau * root);
            bounds.push(
                BoundRow::evaluated(SOLUTION_FLOOR, lhs_sol, rhs, false, options.tol).with_note(
                    "report-only: solution-regret control is conditional on the measured sign of the objective regret",
                ),
            );
        } else {
            bounds.push(BoundRow::skipped(
                SOLUTION_FLOOR,
                "requires sigma = sqrt(N) and nonnegative measured objective regret",
            ));
        }
    } else {
        for id in [OBJ_PD_FLOOR, CTR_PD_FLOOR, SOLUTION_FLOOR] {
            bounds.push(BoundRow::skipped(id, "schedule has no positive definite floor"));
        }
    }

    let mut notes = vec![
        "constraint rows grade the post-update convention (rounds 2..N+1); alt_lhs carries the committed convention (rounds 1..N)".to_string(),
        "kappa3 and mu2 evaluate the starting history term in the T-seminorm; with the z0 = z1 convention it vanishes either way".to_string(),
        "alternate metrics read the auxiliary-block Gram as the input-space product (the only dimensionally consistent choice)".to_string(),
        "definite-floor rows instantiate the floor operator as the largest scalar matrix below every scheduled operator".to_string(),
    ];
    if sg.spectral_norm() > 0.0 {
        notes.push(
            "regularizer curvature is nonzero: the combined descent row subtracts the full auxiliary curvature of the step while the refined row subtracts half, so the combined row is informational here".to_string(),
        );
    }

    let min_slack = summarize(&per_round);
    let combined_informational = sg.spectral_norm() > 0.0;
    let per_round_pass = per_round
        .iter()
        .filter(|r| !(combined_informational && r.id == DESCENT_COMBINED))
        .all(|r| r.pass);
    let passed = per_round_pass && bounds.iter().all(|b| b.status != BoundStatus::Fail);

    Ok(AuditReport {
        rounds: n_rounds,
        sigma,
        tau: consts,
        assumptions,
        constants,
        bounds,
        min_slack,
        per_round,
        notes,
        passed,
    })
}

/// Certify an offline run: per-round decrease rows, the contraction rows
/// against a certified stationary triple when one is available, and the
/// averaged-iterate complexity bounds.
pub fn audit_offline_run(
    problem: &OfflineProblem,
    params: &OnlineParams,
    run: &OnlineRun,
    optimum: &OfflineOptimum,
    kkt: Option<&KktTriple>,
    options: AuditOptions,
) -> Result<AuditReport, AuditError> {
    let n_rounds = run.trajectory.rounds();
    let sigma = run.sigma;
    let consts = tau_constants(params.tau)?;
    let cc = &problem.cc;
    let g = &problem.reg;
    let ctx = AuditContext {
        cc,
        reg: g,
        t_op: &params.t_op,
        s_schedule: &params.s_schedule,
        sigma,
        consts,
        prox_factor: 1.0,
    };
    let anchor = (&optimum.x, &optimum.z);
    let bundle = assemble_operators(&ctx, &problem.cost)?;

    let mut per_round = Vec::with_capacity(4 * n_rounds);
    for k in 1..=n_rounds {
        let view = RoundView::from_trajectory(&run.trajectory, &problem.cost, k)?;
        per_round.extend(check_descent_inequality(&ctx, &bundle, &view, g, anchor, options.tol)?);
    }
    if let Some(kkt) = kkt {
        per_round.extend(check_fejer_recovery(&ctx, &bundle, &run.trajectory, kkt, options.tol)?);
    }

    let costs = vec![problem.cost.clone(); n_rounds];
    let assumptions = certify_assumptions(&ctx, run, &costs, g, anchor)?;
    let mut rng = floor_probe_rng();
    let floor_slack = check_step_metric_floor(&ctx, &bundle, 500, &mut rng)?;

    let nu_star = optimum.value;
    let state1 = run.trajectory.state(1);
    let u1 = stack2(&state1.x, &state1.z);
    let u_hat = stack2(anchor.0, anchor.1);
    let start_dist_sq = (&u1 - &u_hat).norm_squared();
    let start_dist_anchor_sq = seminorm_sq(&bundle.anchor_metric, &(&u1 - &u_hat))?;
    let hist0 = seminorm_sq(&params.t_op, &(&state1.z - run.trajectory.z_lag(1)))?;
    let y1_sq = state1.y.norm_squared();
    let value1 = problem.objective(&state1.x, &state1.z);
    let r1 = cc.residual(&state1.x, &state1.z)?;
    let c = &consts;

    let sg = g.curvature_op();
    let s_plus_sf = bundle.s_k.add(problem.cost.curvature()).spectral_norm();
    let t_plus_sg = params.t_op.add(&sg).spectral_norm();
    let bb_norm = PsdOperator::gram(cc.b()).spectral_norm();
    let ee_norm = PsdOperator::gram(&ctx.stacked_map()).spectral_norm();
    let eta1 = bb_norm / c.t_tau;
    let eta2 = (y1_sq / c.tau + hist0 + 2.0 * value1) / c.t_tau;
    let eta3 = (s_plus_sf + t_plus_sg + c.s_tau * ee_norm) / c.t_tau;

    let constants = BoundConstants {
        eta1: Some(eta1),
        eta2: Some(eta2),
        eta3: Some(eta3),
        start_dist_sq,
        start_dist_anchor_sq,
        nu_star,
        ..Default::default()
    };

    let n = n_rounds as f64;
    let gamma0 = assumptions.gamma0;
    // alternate index convention for the anchored-gap ceiling
    let gamma0_alt: f64 = (2..=n_rounds + 1)
        .map(|k| {
            let s = run.trajectory.state(k);
            nu_star - problem.objective(&s.x, &s.z)
        })
        .fold(0.0_f64, f64::max);
    let lhs_obj = run.log.total_loss() / n - nu_star;
    let lhs_ctr_commit = run.log.total_residual_sq() / n;
    let lhs_ctr_shift: f64 = (2..=n_rounds + 1)
        .map(|k| {
            let s = run.trajectory.state(k);
            cc.residual(&s.x, &s.z).map(|r| r * r)
        })
        .sum::<Result<f64, _>>()?
        / n;

    let mut bounds = Vec::new();
    bounds.push(BoundRow {
        id: STEP_METRIC_FLOOR,
        lhs: Some(-floor_slack),
        rhs: Some(0.0),
        slack: Some(floor_slack),
        alt_lhs: None,
        status: if floor_slack >= -1e-9 { BoundStatus::Pass } else { BoundStatus::Fail },
        note: Some("sampled certificate: step metric dominates the auxiliary curvature plus the x-floor".into()),
    });

    if sqrt_n_matches(sigma, n_rounds) {
        let root = n.sqrt();
        let head = r1 * r1 + eta1 * start_dist_sq;
        let tail = eta2 + eta3 * start_dist_sq;
        let rhs_obj = 0.5 * c.t_tau * head / root + 0.5 * c.t_tau * tail / n;
        let rhs_ctr = head / n + tail / n.powf(1.5) + 2.0 * gamma0 / (c.t_tau * root);
        bounds.push(
            BoundRow::evaluated(OFFLINE_OBJ_RATE, lhs_obj, rhs_obj, true, options.tol),
        );
        bounds.push(
            BoundRow::evaluated(OFFLINE_CTR_RATE, lhs_ctr_commit, rhs_ctr, true, options.tol)
                .with_alt(lhs_ctr_shift)
                .with_note(format!(
                    "anchored-gap ceiling under the post-update convention: {gamma0_alt:.6e} (tighter convention reported, graded with the committed one)"
                )),
        );
        let (avg_x, avg_z, _) = crate::audit::averaged_iterates(&run.trajectory, n_rounds)?;
        let avg_obj = problem.objective(&avg_x, &avg_z) - nu_star;
        let avg_res = cc.residual(&avg_x, &avg_z)?;
        bounds.push(BoundRow::evaluated(AVERAGED_OBJ_GAP, avg_obj, rhs_obj, true, options.tol));
        bounds.push(BoundRow::evaluated(
            AVERAGED_CTR_GAP,
            avg_res * avg_res,
            rhs_ctr,
            true,
            options.tol,
        ));
    } else {
        for id in [OFFLINE_OBJ_RATE, OFFLINE_CTR_RATE, AVERAGED_OBJ_GAP, AVERAGED_CTR_GAP] {
            bounds.push(BoundRow::skipped(id, "requires sigma = sqrt(N)"));
        }
    }

    let mut notes = vec![
        "offline constraint rows grade the committed convention (rounds 1..N); alt_lhs carries the post-update convention".to_string(),
    ];
    if kkt.is_none() {
        notes.push("no certified stationary triple available; contraction rows skipped".to_string());
    }
    if sg.spectral_norm() > 0.0 {
        notes.push(
            "regularizer curvature is nonzero: the combined descent row is informational (see the refined row for the graded form)".to_string(),
        );
    }

    let min_slack = summarize(&per_round);
    let combined_informational = sg.spectral_norm() > 0.0;
    let per_round_pass = per_round
        .iter()
        .filter(|r| !(combined_informational && r.id == DESCENT_COMBINED))
        .all(|r| r.pass);
    let passed = per_round_pass && bounds.iter().all(|b| b.status != BoundStatus::Fail);

    Ok(AuditReport {
        rounds: n_rounds,
        sigma,
        tau: consts,
        assumptions,
        constants,
        bounds,
        min_slack,
        per_round,
        notes,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{SSchedule, SolverState};
    use crate::linalg::Matrix;
    use crate::online::{run_offline, run_online};
    use crate::oracle::{kkt_triple, solve_offline, SolveMethod};
    use crate::problem::{aggregate_problem, QuadCost};
    use crate::qp::{QpInstance, QpStreamConfig, SimpleSetSpec};

    fn qp_setup(n_rounds: usize, seed: u64) -> (QpInstance, Regularizer, CouplingConstraint) {
        let config = QpStreamConfig {
            n: 3,
            m: 2,
            horizon: n_rounds,
            seed,
            g_scale: 1.0,
            c_scale: 1.0,
            set: SimpleSetSpec::UnitBox { dim: 3 },
            fixed_g: true,
        };
        let inst = QpInstance::build(&config).unwrap();
        let reg = inst.regularizer();
        let cc = inst.coupling();
        (inst, reg, cc)
    }

    #[test]
    fn online_qp_report_passes_and_bounds_hold() {
        let n_rounds = 64;
        let (inst, reg, cc) = qp_setup(n_rounds, 41);
        let params = OnlineParams {
            sigma: None,
            tau: 1.0,
            t_op: PsdOperator::zero(3),
            s_schedule: inst.schedule(),
        };
        let run = run_online(&inst.stream, &reg, &cc, &params, inst.default_init()).unwrap();
        let agg = aggregate_problem(&inst.stream, &reg, &cc).unwrap();
        let opt = solve_offline(&agg, SolveMethod::ConvergedSplitting).unwrap();
        let report = audit_online_run(
            &inst.stream,
            &reg,
            &cc,
            &params,
            &run,
            &opt,
            AuditOptions::default(),
        )
        .unwrap();
        assert!(report.passed, "failing: {:?}", report.failing_ids());
        assert!(report.assumptions.schedule_monotone);
        assert!(report.assumptions.prox_geometry_ok);
        let sqrt_rows: Vec<_> = report
            .bounds
            .iter()
            .filter(|b| b.id == OBJ_SQRT_N || b.id == CTR_SQRT_N)
            .collect();
        assert_eq!(sqrt_rows.len(), 2);
        for row in sqrt_rows {
            assert_eq!(row.status, BoundStatus::Pass, "{}: {:?}", row.id, row.slack);
        }
    }

    #[test]
    fn varying_curvature_downgrades_rate_rows() {
        let config = QpStreamConfig {
            n: 3,
            m: 2,
            horizon: 32,
            seed: 77,
            g_scale: 1.0,
            c_scale: 1.0,
            set: SimpleSetSpec::UnitBox { dim: 3 },
            fixed_g: false,
        };
        let inst = QpInstance::build(&config).unwrap();
        let reg = inst.regularizer();
        let cc = inst.coupling();
        let params = OnlineParams {
            sigma: None,
            tau: 1.0,
            t_op: PsdOperator::zero(3),
            s_schedule: inst.schedule(),
        };
        let run = run_online(&inst.stream, &reg, &cc, &params, inst.default_init()).unwrap();
        let agg = aggregate_problem(&inst.stream, &reg, &cc).unwrap();
        let opt = solve_offline(&agg, SolveMethod::ConvergedSplitting).unwrap();
        let report = audit_online_run(
            &inst.stream,
            &reg,
            &cc,
            &params,
            &run,
            &opt,
            AuditOptions::default(),
        )
        .unwrap();
        // per-round rows still graded
        assert!(report.per_round.iter().all(|r| r.pass));
        // time-varying curvature breaks schedule monotonicity, so the rate
        // rows must be informational rather than graded
        if !report.assumptions.schedule_monotone {
            for row in &report.bounds {
                if row.id == OBJ_SQRT_N || row.id == CTR_SQRT_N {
                    assert_eq!(row.status, BoundStatus::ReportOnly);
                }
            }
        }
    }

    fn offline_problem(seed: u64) -> OfflineProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let n = 3;
        let m = Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let curv = PsdOperator::new(m.transpose() * &m + Matrix::identity(n, n)).unwrap();
        let lin = Vector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let a = Matrix::from_fn(2, n, |_, _| rng.gen_range(-1.0..1.0));
        let b = Matrix::from_fn(2, 2, |i, j| if i == j { -1.0 } else { 0.1 });
        let cvec = Vector::from_fn(2, |_, _| rng.gen_range(-0.5..0.5));
        OfflineProblem::new(
            QuadCost::new(curv, lin).unwrap(),
            Regularizer::Zero { dim: 2 },
            CouplingConstraint::new(a, b, cvec).unwrap(),
        )
    }

    #[test]
    fn offline_report_certifies_contraction_and_averaging() {
        let problem = offline_problem(9);
        let n_rounds = 400;
        let params = OnlineParams {
            sigma: Some((n_rounds as f64).sqrt()),
            tau: 1.0,
            t_op: PsdOperator::scaled_identity(2, 1.0),
            s_schedule: SSchedule::Constant(PsdOperator::identity(3)),
        };
        let run =
            run_offline(&problem, &params, SolverState::zeros(&problem.cc), n_rounds).unwrap();
        let opt = solve_offline(&problem, SolveMethod::AnalyticKkt).unwrap();
        let kkt = kkt_triple(&problem).unwrap();
        let report = audit_offline_run(
            &problem,
            &params,
            &run,
            &opt,
            Some(&kkt),
            AuditOptions::default(),
        )
        .unwrap();
        assert!(report.passed, "failing: {:?}", report.failing_ids());
        assert!(report.min_slack.contains_key(crate::audit::FEJER_CONTRACTION));
        for row in &report.bounds {
            if matches!(row.id, OFFLINE_OBJ_RATE | OFFLINE_CTR_RATE | AVERAGED_OBJ_GAP | AVERAGED_CTR_GAP) {
                assert_eq!(row.status, BoundStatus::Pass, "{} slack {:?}", row.id, row.slack);
            }
        }
    }

    #[test]
    fn fejer_rows_vanish_when_started_at_the_stationary_triple() {
        let problem = offline_problem(11);
        let kkt = kkt_triple(&problem).unwrap();
        let params = OnlineParams {
            sigma: Some(2.0),
            tau: 1.0,
            t_op: PsdOperator::zero(2),
            s_schedule: SSchedule::zero(3),
        };
        let init = SolverState::new(kkt.x.clone(), kkt.z.clone(), kkt.y.clone());
        let run = run_offline(&problem, &params, init, 20).unwrap();
        let opt = solve_offline(&problem, SolveMethod::AnalyticKkt).unwrap();
        let report = audit_offline_run(
            &problem,
            &params,
            &run,
            &opt,
            Some(&kkt),
            AuditOptions::default(),
        )
        .unwrap();
        for row in &report.per_round {
            if row.id == crate::audit::FEJER_CONTRACTION {
                assert!(row.lhs.abs() < 1e-16 && row.rhs.abs() < 1e-16, "round {}", row.round);
            }
        }
        assert!(report.passed);
    }

    #[test]
    fn csv_table_shape() {
        let problem = offline_problem(13);
        let params = OnlineParams {
            sigma: Some(4.0),
            tau: 1.0,
            t_op: PsdOperator::zero(2),
            s_schedule: SSchedule::zero(3),
        };
        let run = run_offline(&problem, &params, SolverState::zeros(&problem.cc), 16).unwrap();
        let opt = solve_offline(&problem, SolveMethod::AnalyticKkt).unwrap();
        let report =
            audit_offline_run(&problem, &params, &run, &opt, None, AuditOptions::default())
                .unwrap();
        let csv = report.per_round_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "round,ineq_id,lhs,rhs,slack,pass");
        // three descent rows per round, no contraction rows without a triple
        assert_eq!(csv.lines().count(), 1 + 3 * 16);
    }
}
