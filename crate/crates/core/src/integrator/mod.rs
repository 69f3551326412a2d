//! Variable step IMEX-Peer integration with local error control.
//!
//! Stage `i` of block `n` approximates `u(t_n + c_i Δt_n)`; the next block
//! starts at `t_{n+1} = t_n + Δt_n`, so the last stage (`c_s = 1`) is the
//! solution at `t_{n+1}`.

mod control;
mod newton;
mod starter;

use std::time::Instant;

use thiserror::Error;

use crate::coeffs::{CoeffError, SigmaCoefficients, VandermondeSet};
use crate::problems::{f1_jacobian, SplitProblem};
use crate::tableau::PeerTableau;

pub use control::{
    endpoint_adjust, error_estimate, estimator_weights, step_factor, weighted_error, ControlDecision, ControllerState,
};
pub use newton::NewtonError;
pub use starter::{sdirk3_dense, DenseOutput, StarterWork};

use newton::{Newton, Tally};

/// Stage values of one block with their right-hand side evaluations.
#[derive(Debug, Clone, PartialEq)]
pub struct StageBlock {
    pub t: f64,
    pub dt: f64,
    pub stages: Vec<Vec<f64>>,
    pub f0: Vec<Vec<f64>>,
    pub f1: Vec<Vec<f64>>,
}

impl StageBlock {
    /// Evaluates both parts at the given stage values.
    pub fn from_stages(problem: &dyn SplitProblem, nodes: &[f64], t: f64, dt: f64, stages: Vec<Vec<f64>>) -> Self {
        let m = problem.dim();
        let mut f0 = vec![vec![0.0; m]; stages.len()];
        let mut f1 = vec![vec![0.0; m]; stages.len()];
        for (i, w) in stages.iter().enumerate() {
            let ti = t + nodes[i] * dt;
            problem.f0(ti, w, &mut f0[i]);
            problem.f1(ti, w, &mut f1[i]);
        }
        StageBlock { t, dt, stages, f0, f1 }
    }

    pub fn stage_count(&self) -> usize {
        self.stages.len()
    }

    pub fn last_stage(&self) -> &[f64] {
        self.stages.last().expect("block has stages")
    }

    pub fn end_time(&self) -> f64 {
        self.t + self.dt
    }

    /// Largest deviation between the caches and fresh evaluations.
    pub fn cache_mismatch(&self, problem: &dyn SplitProblem, nodes: &[f64]) -> f64 {
        let fresh = StageBlock::from_stages(problem, nodes, self.t, self.dt, self.stages.clone());
        let diff = |a: &Vec<Vec<f64>>, b: &Vec<Vec<f64>>| {
            a.iter()
                .flatten()
                .zip(b.iter().flatten())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        };
        diff(&self.f0, &fresh.f0).max(diff(&self.f1, &fresh.f1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepMode {
    /// Error-controlled steps after a start over `[t0, t0 + tau]`.
    Adaptive { tau: f64 },
    /// The given step sequence; block 0 ends at `t0` with step `dt0` and is
    /// taken from the exact solution.
    Prescribed { dt0: f64, steps: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartMode {
    /// SDIRK3 on the unsplit problem with Hermite interpolation.
    Starter,
    /// Initial stages from the problem's exact solution.
    Exact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationConfig {
    pub atol: f64,
    pub rtol: f64,
    pub delta: f64,
    /// Acceptance threshold on the weighted error.
    pub tol: f64,
    /// Overrides the end of the problem's time span.
    pub t_end: Option<f64>,
    pub dt_min: Option<f64>,
    pub dt_max: Option<f64>,
    /// Consecutive Newton failures tolerated before giving up. Error test
    /// rejections are bounded by `dt_min` instead.
    pub max_stage_failures: usize,
    pub newton_max_iter: usize,
    pub newton_tol_factor: f64,
    pub mode: StepMode,
    pub start: StartMode,
    pub starter_substeps: usize,
    pub record_steps: bool,
}

impl IntegrationConfig {
    pub fn adaptive(tol: f64, tau: f64) -> Self {
        IntegrationConfig {
            atol: tol,
            rtol: tol,
            delta: 0.0,
            tol: 1.0,
            t_end: None,
            dt_min: None,
            dt_max: None,
            max_stage_failures: 20,
            newton_max_iter: 10,
            newton_tol_factor: 0.01,
            mode: StepMode::Adaptive { tau },
            start: StartMode::Starter,
            starter_substeps: 8,
            record_steps: false,
        }
    }

    pub fn prescribed(dt0: f64, steps: Vec<f64>, newton_tol: f64) -> Self {
        IntegrationConfig {
            mode: StepMode::Prescribed { dt0, steps },
            start: StartMode::Exact,
            ..Self::adaptive(newton_tol, 1.0)
        }
    }

    fn validate(&self) -> Result<(), IntegrateError> {
        let bad = |msg: String| Err(IntegrateError::InvalidConfig(msg));
        if !(self.atol > 0.0 && self.rtol >= 0.0) {
            return bad(format!("need atol > 0 and rtol ≥ 0 (got {}, {})", self.atol, self.rtol));
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return bad(format!("delta must lie in [0, 1] (got {})", self.delta));
        }
        if !(self.tol > 0.0) {
            return bad(format!("TOL must be positive (got {})", self.tol));
        }
        if self.newton_max_iter == 0 || self.starter_substeps == 0 {
            return bad("iteration and substep counts must be positive".into());
        }
        match &self.mode {
            StepMode::Adaptive { tau } if !(*tau > 0.0 && tau.is_finite()) => bad(format!("tau must be positive (got {tau})")),
            StepMode::Prescribed { dt0, steps } if !(*dt0 > 0.0) || steps.iter().any(|h| !(*h > 0.0 && h.is_finite())) => {
                bad("prescribed steps must be positive".into())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum StepFailure {
    #[error("stage {stage}: {error}")]
    Newton { stage: usize, error: NewtonError },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrateError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Coeff(#[from] CoeffError),
    #[error("starting procedure failed ({0}); try a smaller tau")]
    Startup(NewtonError),
    #[error("problem '{0}' has no exact solution for the initial stages")]
    NoExactSolution(String),
    #[error("step size {dt:e} fell below the minimum at t = {t}")]
    StepUnderflow { t: f64, dt: f64 },
    #[error("{count} consecutive stage failures at t = {t}")]
    TooManyStageFailures { t: f64, count: usize },
    #[error("step failed at t = {t}: {failure}")]
    StepFailed { t: f64, failure: StepFailure },
}

/// Work counters of one integration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IntegrationStats {
    pub n_accept: usize,
    pub n_reject: usize,
    /// Rejections caused by Newton failures (included in `n_reject`).
    pub n_newton_fail: usize,
    pub n_f0: usize,
    pub n_f1: usize,
    pub n_newton: usize,
    pub n_jac: usize,
    pub n_lu: usize,
    pub starter_steps: usize,
    pub dt_min: f64,
    pub dt_max: f64,
    pub cpu_time: f64,
}

pub const STATS_CSV_HEADER: &str = "method,tol,error,cpu_time,n_accept,n_reject,n_f0,n_f1,n_newton,n_jac,n_lu";

impl IntegrationStats {
    pub fn csv_row(&self, method: &str, tol: f64, error: f64) -> String {
        format!(
            "{method},{tol:e},{error:e},{:.6},{},{},{},{},{},{},{}",
            self.cpu_time, self.n_accept, self.n_reject, self.n_f0, self.n_f1, self.n_newton, self.n_jac, self.n_lu
        )
    }

    fn add_tally(&mut self, t: &Tally) {
        self.n_newton += t.iters;
        self.n_jac += t.jacobians;
        self.n_lu += t.factorizations;
    }

    fn record_dt(&mut self, dt: f64) {
        if self.n_accept == 1 {
            self.dt_min = dt;
            self.dt_max = dt;
        } else {
            self.dt_min = self.dt_min.min(dt);
            self.dt_max = self.dt_max.max(dt);
        }
    }
}

#[derive(Debug, Clone)]
pub struct IntegrationResult {
    pub t: f64,
    pub y: Vec<f64>,
    pub stats: IntegrationStats,
    /// `(t_n, Δt_n)` of accepted steps, when recorded.
    pub steps: Vec<(f64, f64)>,
}

/// `(t1, Δt0)` of the start over `[t0, t0 + tau]`.
pub fn start_geometry(t: &PeerTableau, t0: f64, tau: f64) -> (f64, f64) {
    let span = t.c_max() - t.c_min();
    (t0 + (1.0 - t.c_min()) / span * tau, tau / span)
}

/// Executes single peer steps for one problem and tableau.
pub struct Stepper<'a> {
    problem: &'a dyn SplitProblem,
    tableau: &'a PeerTableau,
    vset: VandermondeSet,
    nodes: Vec<f64>,
    newton: Newton,
    atol: f64,
    rtol: f64,
    pub stats: IntegrationStats,
}

impl<'a> Stepper<'a> {
    pub fn new(problem: &'a dyn SplitProblem, tableau: &'a PeerTableau, config: &IntegrationConfig) -> Result<Self, IntegrateError> {
        config.validate()?;
        Ok(Stepper {
            problem,
            tableau,
            vset: VandermondeSet::for_tableau(tableau)?,
            nodes: tableau.nodes().iter().copied().collect(),
            newton: Newton::new(problem.dim(), config.newton_max_iter, config.newton_tol_factor, config.atol, config.rtol),
            atol: config.atol,
            rtol: config.rtol,
            stats: IntegrationStats::default(),
        })
    }

    pub fn vandermonde(&self) -> &VandermondeSet {
        &self.vset
    }

    pub fn coefficients(&self, sigma: f64) -> Result<SigmaCoefficients, CoeffError> {
        self.vset.assemble(self.tableau, sigma)
    }

    /// Block with the given stage values, counting the evaluations.
    pub fn block(&mut self, t: f64, dt: f64, stages: Vec<Vec<f64>>) -> StageBlock {
        self.stats.n_f0 += stages.len();
        self.stats.n_f1 += stages.len();
        StageBlock::from_stages(self.problem, &self.nodes, t, dt, stages)
    }

    /// Initial block ending at `t1` from the start over `[t0, t0 + tau]`.
    pub fn start(&mut self, tau: f64, mode: StartMode, substeps: usize) -> Result<StageBlock, IntegrateError> {
        let (t0, _) = self.problem.t_span();
        let u0 = self.problem.initial_state();
        let (t1, dt0) = start_geometry(self.tableau, t0, tau);
        let span = self.tableau.c_max() - self.tableau.c_min();
        let times: Vec<f64> = self
            .nodes
            .iter()
            .map(|&c| if c == self.tableau.c_min() { t0 } else { t0 + (c - self.tableau.c_min()) / span * tau })
            .collect();
        let stages = match mode {
            StartMode::Exact => self.exact_stages(&times)?,
            StartMode::Starter => {
                let mut breakpoints: Vec<f64> = times.iter().copied().filter(|&t| t > t0).collect();
                breakpoints.sort_by(f64::total_cmp);
                let mut sub = substeps;
                let dense = loop {
                    let mut work = StarterWork::default();
                    let run = sdirk3_dense(self.problem, t0, &u0, &breakpoints, sub, self.atol, self.rtol, &mut work);
                    self.stats.n_f0 += work.evals;
                    self.stats.n_f1 += work.evals;
                    self.stats.n_newton += work.newton;
                    self.stats.n_jac += work.jacobians;
                    self.stats.n_lu += work.factorizations;
                    self.stats.starter_steps += work.steps;
                    match run {
                        Ok(d) => break d,
                        Err(e) if sub >= 16 * substeps => return Err(IntegrateError::Startup(e)),
                        Err(_) => sub *= 2,
                    }
                };
                times
                    .iter()
                    .map(|&t| {
                        if t == t0 {
                            u0.clone()
                        } else {
                            let mut w = vec![0.0; u0.len()];
                            dense.eval(t, &mut w);
                            w
                        }
                    })
                    .collect()
            }
        };
        Ok(self.block(t1 - dt0, dt0, stages))
    }

    fn exact_stages(&self, times: &[f64]) -> Result<Vec<Vec<f64>>, IntegrateError> {
        times
            .iter()
            .map(|&t| self.problem.exact(t).ok_or_else(|| IntegrateError::NoExactSolution(self.problem.name().into())))
            .collect()
    }

    /// Block 0 from exact values, ending at `t0` with step `dt0`.
    pub fn exact_block(&mut self, t0: f64, dt0: f64) -> Result<StageBlock, IntegrateError> {
        let times: Vec<f64> = self.nodes.iter().map(|c| t0 + (c - 1.0) * dt0).collect();
        let stages = self.exact_stages(&times)?;
        Ok(self.block(t0 - dt0, dt0, stages))
    }

    /// One step of size `dt` following `prev`; `coef` must belong to
    /// `σ = dt / prev.dt`.
    pub fn step(&mut self, prev: &StageBlock, coef: &SigmaCoefficients, dt: f64) -> Result<StageBlock, StepFailure> {
        let s = self.tableau.stages();
        let m = self.problem.dim();
        let t_n = prev.end_time();
        let (p, r, e2) = (self.tableau.p(), self.tableau.r(), self.tableau.e2());
        let hg = dt * self.tableau.gamma();
        let problem = self.problem;
        self.newton.begin_step();
        let mut out = StageBlock {
            t: t_n,
            dt,
            stages: Vec::with_capacity(s),
            f0: Vec::with_capacity(s),
            f1: Vec::with_capacity(s),
        };
        let mut rhs = vec![0.0; m];
        let mut pred = vec![0.0; m];
        let mut tally = Tally::default();
        let mut result = Ok(());
        for i in 0..s {
            rhs.fill(0.0);
            pred.fill(0.0);
            for j in 0..s {
                let (pij, qh, q, e1) = (p[(i, j)], dt * coef.qhat[(i, j)], dt * coef.q[(i, j)], coef.e1[(i, j)]);
                let (w, g0, g1) = (&prev.stages[j], &prev.f0[j], &prev.f1[j]);
                for k in 0..m {
                    rhs[k] += pij * w[k] + qh * g0[k] + q * g1[k];
                    pred[k] += e1 * w[k];
                }
            }
            for j in 0..i {
                let (rh, rr, e) = (dt * coef.rhat[(i, j)], dt * r[(i, j)], e2[(i, j)]);
                let (w, g0, g1) = (&out.stages[j], &out.f0[j], &out.f1[j]);
                for k in 0..m {
                    rhs[k] += rh * g0[k] + rr * g1[k];
                    pred[k] += e * w[k];
                }
            }
            let ti = t_n + self.nodes[i] * dt;
            let mut w = vec![0.0; m];
            let mut f1 = vec![0.0; m];
            let solved = self.newton.solve(
                hg,
                &rhs,
                &pred,
                &mut w,
                &mut f1,
                |x, y| problem.f1(ti, x, y),
                |x| f1_jacobian(problem, ti, x),
                &mut tally,
            );
            if let Err(error) = solved {
                result = Err(StepFailure::Newton { stage: i, error });
                self.newton.invalidate();
                break;
            }
            let mut f0 = vec![0.0; m];
            problem.f0(ti, &w, &mut f0);
            self.stats.n_f0 += 1;
            out.stages.push(w);
            out.f0.push(f0);
            out.f1.push(f1);
        }
        self.stats.n_f1 += tally.evals;
        self.stats.add_tally(&tally);
        result.map(|_| out)
    }
}

/// Integrates `problem` with `tableau` over its time span (or up to
/// `config.t_end`).
pub fn integrate(problem: &dyn SplitProblem, tableau: &PeerTableau, config: &IntegrationConfig) -> Result<IntegrationResult, IntegrateError> {
    let clock = Instant::now();
    let mut stepper = Stepper::new(problem, tableau, config)?;
    let (t0, t_span_end) = problem.t_span();
    let mut steps = Vec::new();
    let result = match &config.mode {
        StepMode::Prescribed { dt0, steps: seq } => {
            let mut prev = stepper.exact_block(t0, *dt0)?;
            for &dt in seq {
                let coef = stepper.coefficients(dt / prev.dt)?;
                let t = prev.end_time();
                let curr = stepper.step(&prev, &coef, dt).map_err(|failure| IntegrateError::StepFailed { t, failure })?;
                stepper.stats.n_accept += 1;
                stepper.stats.record_dt(dt);
                if config.record_steps {
                    steps.push((t, dt));
                }
                prev = curr;
            }
            IntegrationResult {
                t: prev.end_time(),
                y: prev.last_stage().to_vec(),
                stats: IntegrationStats::default(),
                steps,
            }
        }
        StepMode::Adaptive { tau } => {
            let t_end = config.t_end.unwrap_or(t_span_end);
            let (t1, _) = start_geometry(tableau, t0, *tau);
            if !(t1 < t_end) {
                return Err(IntegrateError::InvalidConfig(format!("start interval ends at {t1}, beyond T = {t_end}")));
            }
            let span = t_end - t0;
            let mut ctrl = ControllerState::new(
                config.atol,
                config.rtol,
                config.delta,
                config.tol,
                config.dt_min.unwrap_or(1e-14 * span),
                config.dt_max.unwrap_or(span),
            );
            let mut prev = stepper.start(*tau, config.start, config.starter_substeps)?;
            let s = tableau.stages();
            let mut est = vec![0.0; problem.dim()];
            let mut t = prev.end_time();
            let mut dt = endpoint_adjust(prev.dt.min(ctrl.dt_max), t_end - t);
            let mut failures = 0;
            loop {
                if failures > config.max_stage_failures {
                    return Err(IntegrateError::TooManyStageFailures { t, count: failures });
                }
                if dt < ctrl.dt_min {
                    return Err(IntegrateError::StepUnderflow { t, dt });
                }
                let sigma = dt / prev.dt;
                let coef = stepper.coefficients(sigma)?;
                let curr = match stepper.step(&prev, &coef, dt) {
                    Ok(c) => {
                        failures = 0;
                        c
                    }
                    Err(_) => {
                        stepper.stats.n_reject += 1;
                        stepper.stats.n_newton_fail += 1;
                        failures += 1;
                        dt = endpoint_adjust(0.5 * dt, t_end - t);
                        continue;
                    }
                };
                let (alpha, beta) = estimator_weights(stepper.vandermonde(), sigma, config.delta);
                error_estimate(&prev, &curr, &alpha, &beta, &mut est);
                let err = ctrl.error(&est, &curr, &prev);
                match ctrl.decide(err, s, dt, t, t_end) {
                    ControlDecision::Accept { dt_next } => {
                        stepper.stats.n_accept += 1;
                        stepper.stats.record_dt(dt);
                        if config.record_steps {
                            steps.push((t, dt));
                        }
                        let last = dt_next <= 0.0 || t_end - (t + dt) <= 1e-13 * span;
                        t += dt;
                        prev = curr;
                        if last {
                            break;
                        }
                        dt = dt_next;
                    }
                    ControlDecision::Reject { dt_retry } => {
                        stepper.stats.n_reject += 1;
                        dt = dt_retry;
                    }
                }
            }
            IntegrationResult {
                t,
                y: prev.last_stage().to_vec(),
                stats: IntegrationStats::default(),
                steps,
            }
        }
    };
    let mut stats = stepper.stats;
    stats.cpu_time = clock.elapsed().as_secs_f64();
    Ok(IntegrationResult { stats, ..result })
}
