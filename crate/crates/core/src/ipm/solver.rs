use std::time::Instant;

use log::{debug, info};

use super::filter::{Acceptance, Filter};
use super::report::{
    AbortReason, Dimensions, IterationRecord, RegularizationEvent, Solution, SolveReport, Status, Timings,
};
use super::scaling::{compute_scaling, Scaling};
use super::state::{barrier_update, fraction_to_boundary, push_inside, Bounds, IpmState};
use super::{Algorithm, SolverOptions};
use crate::dense::Cholesky;
use crate::kkt::{
    refactorize_state_jacobian, AugmentedFactor, FullSpaceSolver, KktBlocks, KktError, ReducedSystem, Residuals, Step,
};
use crate::lu::SparseLu;
use crate::model::{DerivativeBundle, Evaluation, Multipliers, OpfModel, StateBounds};
use crate::network::PowerNetwork;
use crate::powerflow::{adjoint_solve, PowerFlowSolver};
use crate::sparse::KernelStats;

/// Scaled optimality measures at an iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceError {
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl ConvergenceError {
    pub fn overall(&self) -> f64 {
        self.primal.max(self.dual).max(self.complementarity)
    }
}

const MULTIPLIER_SCALE: f64 = 100.0;

/// Optimality error of the barrier problem with parameter `mu` (`mu = 0`
/// for the original problem).
///
/// `dual_residual` is the gradient of the Lagrangian with respect to
/// `(u, x, s)` including the bound multipliers, and `primal_residual`
/// stacks the violated equalities. The dual and complementarity parts are
/// divided by `max(100, mean |multiplier|) / 100`.
pub fn convergence_error(
    state: &IpmState,
    bounds: &Bounds,
    dual_residual: &[f64],
    primal_residual: &[f64],
    mu: f64,
) -> ConvergenceError {
    let n_z = bounds.n_finite();
    let z_sum: f64 = state.zl.iter().chain(&state.zu).map(|v| v.abs()).sum();
    let all_sum: f64 = z_sum + state.lambda.iter().chain(&state.y).map(|v| v.abs()).sum::<f64>();
    let count = n_z + state.lambda.len() + state.y.len();
    let s_d = if count == 0 { 1.0 } else { (all_sum / count as f64).max(MULTIPLIER_SCALE) / MULTIPLIER_SCALE };
    let s_c = if n_z == 0 { 1.0 } else { (z_sum / n_z as f64).max(MULTIPLIER_SCALE) / MULTIPLIER_SCALE };
    let v = state.primal();
    ConvergenceError {
        primal: inf_norm(primal_residual),
        dual: inf_norm(dual_residual) / s_d,
        complementarity: bounds.complementarity(&v, &state.zl, &state.zu, mu) / s_c,
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn one_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(x: &[f64], alpha: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(x, d)| x + alpha * d).collect()
}

fn concat(parts: &[&[f64]]) -> Vec<f64> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

fn seconds(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

/// Solves the optimal power flow of `net` with the chosen algorithm.
pub fn solve(net: &PowerNetwork, algorithm: Algorithm, opts: &SolverOptions) -> SolveReport {
    let start = Instant::now();
    let base = OpfModel::new(net.clone(), StateBounds::Variables);
    let (u0, x0) = base.initial_point();
    let scaling = compute_scaling(&base.derivatives(&u0, &x0, None));
    let (model, scaling) = match algorithm {
        Algorithm::RedLin => {
            let model = OpfModel::new(net.clone(), StateBounds::Constraints);
            let extra = model.n_constraints() - scaling.ineq_rows.len();
            (model, scaling.with_extra_rows(extra))
        }
        _ => (base, scaling),
    };
    let driver = Driver {
        algorithm,
        opts,
        prob: Problem::new(model, scaling),
        timings: Timings::default(),
        stats: KernelStats::default(),
        power_flow: PowerFlowSolver::new(),
        regularizations: Vec::new(),
        trace: Vec::new(),
    };
    driver.run(u0, x0, start)
}

/// The model together with its scaling and the bounds on `(u, x, s)`.
struct Problem {
    model: OpfModel,
    scaling: Scaling,
    bounds: Bounds,
}

impl Problem {
    fn new(model: OpfModel, scaling: Scaling) -> Self {
        let (mut lower, mut upper) = model.control_bounds();
        let (lx, ux) = model.state_bounds();
        let (lc, uc) = model.constraint_bounds();
        lower.extend(lx);
        upper.extend(ux);
        lower.extend(lc.iter().zip(&scaling.ineq_rows).map(|(b, d)| b * d));
        upper.extend(uc.iter().zip(&scaling.ineq_rows).map(|(b, d)| b * d));
        Self { model, scaling, bounds: Bounds { lower, upper } }
    }

    fn dims(&self) -> (usize, usize, usize) {
        (self.model.n_controls(), self.model.n_states(), self.model.n_constraints())
    }

    fn values(&self, u: &[f64], x: &[f64]) -> Evaluation {
        let mut e = self.model.evaluate(u, x);
        let sc = &self.scaling;
        e.objective *= sc.objective;
        e.state.iter_mut().zip(&sc.state_rows).for_each(|(v, d)| *v *= d);
        e.constraints.iter_mut().zip(&sc.ineq_rows).for_each(|(v, d)| *v *= d);
        e
    }

    /// Scaled derivatives; with multipliers, the Hessian is that of the
    /// scaled Lagrangian `σ f + λᵀ D_g g + yᵀ D_c c`.
    fn bundle(&self, u: &[f64], x: &[f64], multipliers: Option<(&[f64], &[f64])>) -> DerivativeBundle {
        let sc = &self.scaling;
        let mut b = match multipliers {
            None => self.model.derivatives(u, x, None),
            Some((lambda, y)) => {
                let state: Vec<f64> = lambda.iter().zip(&sc.state_rows).map(|(l, d)| l * d).collect();
                let constraints: Vec<f64> = y.iter().zip(&sc.ineq_rows).map(|(l, d)| l * d).collect();
                let w = Multipliers { objective: sc.objective, state: &state, constraints: &constraints };
                self.model.derivatives(u, x, Some(w))
            }
        };
        b.scale(sc.objective, &sc.state_rows, &sc.ineq_rows);
        b
    }
}

/// Factorized Newton system of one iteration.
enum Factored<'a> {
    Full(AugmentedFactor),
    Reduced(ReducedSystem<'a>, Cholesky),
}

impl Factored<'_> {
    fn solve(&self, r: &Residuals) -> Step {
        match self {
            Factored::Full(f) => f.solve(r),
            Factored::Reduced(sys, chol) => sys.solve(chol, r),
        }
    }
}

struct Trial {
    v: Vec<f64>,
    values: Evaluation,
    theta: f64,
    phi: f64,
}

struct Accepted {
    step: Step,
    alpha: f64,
    trial: Trial,
    kind: Option<Acceptance>,
}

struct Driver<'o> {
    algorithm: Algorithm,
    opts: &'o SolverOptions,
    prob: Problem,
    timings: Timings,
    stats: KernelStats,
    power_flow: PowerFlowSolver,
    regularizations: Vec<RegularizationEvent>,
    trace: Vec<IterationRecord>,
}

impl Driver<'_> {
    fn feasible_path(&self) -> bool {
        self.algorithm == Algorithm::RedLin
    }

    /// Constraint violation `‖g‖₁ + ‖c − s‖₁`; the feasible-path solver
    /// only counts `c − s`.
    fn theta(&self, values: &Evaluation, s: &[f64]) -> f64 {
        let cs: f64 = values.constraints.iter().zip(s).map(|(c, s)| (c - s).abs()).sum();
        if self.feasible_path() {
            cs
        } else {
            cs + one_norm(&values.state)
        }
    }

    fn project(&mut self, u: &[f64], x: &[f64]) -> Option<Vec<f64>> {
        let t = Instant::now();
        let out = self.power_flow.solve(&self.prob.model, u, x, self.opts.newton);
        self.timings.power_flow += seconds(t);
        match out {
            Ok(o) => Some(o.x),
            Err(e) => {
                debug!("power flow failed: {e}");
                None
            }
        }
    }

    fn trial(&mut self, st: &IpmState, step: &Step, alpha: f64) -> Option<Trial> {
        let u = axpy(&st.u, alpha, &step.pu);
        let s = axpy(&st.s, alpha, &step.ps);
        let mut x = axpy(&st.x, alpha, &step.px);
        if self.feasible_path() {
            x = self.project(&u, &x)?;
        }
        let values = self.prob.values(&u, &x);
        let v = concat(&[&u, &x, &s]);
        let theta = self.theta(&values, &s);
        let phi = values.objective + self.prob.bounds.barrier(&v, st.mu);
        Some(Trial { v, values, theta, phi })
    }

    /// Gradient of the Lagrangian over `(u, x, s)` without the bound
    /// multipliers: `(∇f + Gᵀλ + Aᵀy, −y)`.
    fn lagrangian_gradient(&self, b: &DerivativeBundle, st: &IpmState) -> Vec<f64> {
        let gu = b.state_jac_u.tr_mul_vec(&st.lambda);
        let gx = b.state_jac_x.tr_mul_vec(&st.lambda);
        let au = b.ineq_jac_u.tr_mul_vec(&st.y);
        let ax = b.ineq_jac_x.tr_mul_vec(&st.y);
        let mut out: Vec<f64> = (0..b.grad_u.len()).map(|i| b.grad_u[i] + gu[i] + au[i]).collect();
        if self.feasible_path() {
            out.extend(std::iter::repeat(0.0).take(b.grad_x.len()));
        } else {
            out.extend((0..b.grad_x.len()).map(|i| b.grad_x[i] + gx[i] + ax[i]));
        }
        out.extend(st.y.iter().map(|y| -y));
        out
    }

    fn record(&mut self, st: &IpmState, values: &Evaluation, err: ConvergenceError, alphas: (f64, f64)) {
        let sc = &self.prob.scaling;
        let state_residual = values.state.iter().zip(&sc.state_rows).fold(0.0_f64, |m, (g, d)| m.max((g / d).abs()));
        let rec = IterationRecord {
            iteration: st.iteration,
            objective: values.objective / sc.objective,
            primal_inf: err.primal,
            dual_inf: err.dual,
            complementarity: err.complementarity,
            mu: st.mu,
            alpha_primal: alphas.0,
            alpha_dual: alphas.1,
            delta: 0.0,
            state_residual,
            u: self.opts.record_iterates.then(|| st.u.clone()),
            x: self.opts.record_iterates.then(|| st.x.clone()),
        };
        debug!(
            "{} iter {:3} obj {:.8e} inf_pr {:.2e} inf_du {:.2e} compl {:.2e} mu {:.1e} alpha {:.2e}",
            self.algorithm,
            rec.iteration,
            rec.objective,
            rec.primal_inf,
            rec.dual_inf,
            rec.complementarity,
            rec.mu,
            rec.alpha_primal
        );
        self.trace.push(rec);
    }

    fn run(mut self, u0: Vec<f64>, x0: Vec<f64>, start: Instant) -> SolveReport {
        let (n_u, n_x, m) = self.prob.dims();
        let tol = self.opts.tol;
        let bounds = self.prob.bounds.clone();

        let mut u = u0;
        let mut x = x0;
        for (i, ui) in u.iter_mut().enumerate() {
            *ui = push_inside(*ui, bounds.lower[i], bounds.upper[i]);
        }
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = push_inside(*xi, bounds.lower[n_u + i], bounds.upper[n_u + i]);
        }
        let mut init_failed = false;
        if self.feasible_path() {
            match self.project(&u, &x) {
                Some(projected) => x = projected,
                None => init_failed = true,
            }
        }
        let c0 = self.prob.values(&u, &x).constraints;
        let mut st = IpmState::initialize(u, x, &c0, &bounds, self.opts.mu_init);
        let mut err = ConvergenceError { primal: f64::INFINITY, dual: f64::INFINITY, complementarity: f64::INFINITY };
        if init_failed {
            let msg = "power flow did not converge at the starting point".to_string();
            return self.finish(st, Status::Aborted(AbortReason::PowerFlowDiverged), Some(msg), err, start);
        }

        let mut gx_lu: Option<SparseLu> = None;
        let mut filter: Option<Filter> = None;
        let mut alphas = (0.0, 0.0);
        let (status, message) = loop {
            // linearization
            let t = Instant::now();
            let bundle = if self.feasible_path() {
                let first = self.prob.bundle(&st.u, &st.x, None);
                let lu = match refactorize_state_jacobian(&mut gx_lu, &first.state_jac_x) {
                    Ok(lu) => lu,
                    Err(e) => break (Status::Aborted(AbortReason::SingularJacobian), Some(e.to_string())),
                };
                let ax_y = first.ineq_jac_x.tr_mul_vec(&st.y);
                let rhs: Vec<f64> = first.grad_x.iter().zip(&ax_y).map(|(g, a)| g + a).collect();
                st.lambda = adjoint_solve(lu, &rhs);
                self.prob.bundle(&st.u, &st.x, Some((&st.lambda, &st.y)))
            } else {
                self.prob.bundle(&st.u, &st.x, Some((&st.lambda, &st.y)))
            };
            self.timings.derivatives += seconds(t);

            let v = st.primal();
            let lagr = self.lagrangian_gradient(&bundle, &st);
            let dual_res: Vec<f64> = (0..v.len()).map(|i| lagr[i] - st.zl[i] + st.zu[i]).collect();
            let cs: Vec<f64> = bundle.values.constraints.iter().zip(&st.s).map(|(c, s)| c - s).collect();
            let primal_res = if self.feasible_path() { cs.clone() } else { concat(&[&bundle.values.state, &cs]) };
            err = convergence_error(&st, &bounds, &dual_res, &primal_res, 0.0);
            let theta = self.theta(&bundle.values, &st.s);
            let filter = filter.get_or_insert_with(|| Filter::new(theta, self.opts.filter));
            self.record(&st, &bundle.values, err, alphas);

            if err.overall() <= tol {
                break (Status::Optimal, None);
            }
            if st.iteration >= self.opts.max_iter {
                break (Status::MaxIterations, None);
            }

            // barrier update
            let mu_floor = tol / 10.0;
            while st.mu > mu_floor {
                let e_mu = convergence_error(&st, &bounds, &dual_res, &primal_res, st.mu).overall();
                if e_mu > 10.0 * st.mu {
                    break;
                }
                st.mu = barrier_update(st.mu, tol);
                filter.reset();
            }

            // Newton system
            let sigma = bounds.sigma(&v, &st.zl, &st.zu);
            let bgrad = bounds.barrier_gradient(&v, st.mu);
            let rd: Vec<f64> = lagr.iter().zip(&bgrad).map(|(a, b)| a + b).collect();
            let r = Residuals {
                r1: rd[..n_u].to_vec(),
                r2: if self.feasible_path() { vec![0.0; n_x] } else { rd[n_u..n_u + n_x].to_vec() },
                r3: rd[n_u + n_x..].to_vec(),
                r4: if self.feasible_path() { vec![0.0; n_x] } else { bundle.values.state.clone() },
                r5: cs.clone(),
            };
            let blocks = KktBlocks {
                bundle: &bundle,
                sigma_u: &sigma[..n_u],
                sigma_x: &sigma[n_u..n_u + n_x],
                sigma_s: &sigma[n_u + n_x..],
            };
            let lu_ref: Option<&SparseLu> = match self.algorithm {
                Algorithm::FullSpace => None,
                Algorithm::LinRed => match refactorize_state_jacobian(&mut gx_lu, &bundle.state_jac_x) {
                    Ok(lu) => Some(lu),
                    Err(e) => break (Status::Aborted(AbortReason::SingularJacobian), Some(e.to_string())),
                },
                Algorithm::RedLin => gx_lu.as_ref(),
            };
            let factored = match self.factor(blocks, lu_ref, st.last_delta) {
                Ok((f, delta, attempts)) => {
                    if delta > 0.0 {
                        self.regularizations.push(RegularizationEvent { iteration: st.iteration, delta, attempts });
                    }
                    st.last_delta = delta;
                    self.trace.last_mut().unwrap().delta = delta;
                    f
                }
                Err(KktError::SingularJacobian(e)) => {
                    break (Status::Aborted(AbortReason::SingularJacobian), Some(e.to_string()))
                }
                Err(e @ KktError::MaxRegularization { .. }) => {
                    break (Status::Aborted(AbortReason::MaxRegularization), Some(e.to_string()))
                }
            };
            let step = factored.solve(&r);

            // filter line search
            let t = Instant::now();
            let tau = fraction_to_boundary(st.mu);
            let dv = concat(&[&step.pu, &step.px, &step.ps]);
            let alpha_max = bounds.max_step(&v, &dv, tau);
            let phi = bundle.values.objective + bounds.barrier(&v, st.mu);
            let grad_phi: Vec<f64> = concat(&[&bundle.grad_u, &bundle.grad_x, &vec![0.0; m]])
                .iter()
                .zip(&bgrad)
                .map(|(a, b)| a + b)
                .collect();
            let slope = dot(&grad_phi, &dv);
            let tiny = dv.iter().zip(&v).all(|(d, v)| d.abs() <= 10.0 * f64::EPSILON * (1.0 + v.abs()));
            let mut alpha = alpha_max;
            let mut soc_pending = self.opts.second_order_correction;
            let accepted = loop {
                let trial = self.trial(&st, &step, alpha);
                if let Some(tr) = &trial {
                    let kind = if tiny { None } else { filter.accepts(theta, phi, slope, alpha, tr.theta, tr.phi) };
                    if tiny || kind.is_some() {
                        break Some(Accepted { step: step.clone(), alpha, trial: trial.unwrap(), kind });
                    }
                }
                if soc_pending {
                    soc_pending = false;
                    if let Some(tr) = &trial {
                        let mut r_soc = r.clone();
                        if !self.feasible_path() {
                            r_soc.r4 = axpy(&tr.values.state, alpha, &bundle.values.state);
                        }
                        let s_trial = &tr.v[n_u + n_x..];
                        r_soc.r5 = (0..m).map(|i| alpha * cs[i] + tr.values.constraints[i] - s_trial[i]).collect();
                        let soc = factored.solve(&r_soc);
                        let dv_soc = concat(&[&soc.pu, &soc.px, &soc.ps]);
                        let alpha_soc = bounds.max_step(&v, &dv_soc, tau);
                        if let Some(ts) = self.trial(&st, &soc, alpha_soc) {
                            if let Some(kind) = filter.accepts(theta, phi, slope, alpha, ts.theta, ts.phi) {
                                debug!("second-order correction accepted");
                                break Some(Accepted { step: soc, alpha: alpha_soc, trial: ts, kind: Some(kind) });
                            }
                        }
                    }
                }
                alpha *= 0.5;
                if alpha < self.opts.filter.alpha_min {
                    break None;
                }
            };
            self.timings.line_search += seconds(t);
            let Some(acc) = accepted else {
                let msg = format!("line search failed at iteration {} (theta {theta:.3e})", st.iteration);
                break (Status::Aborted(AbortReason::LineSearchFailed), Some(msg));
            };

            // update
            let dv = concat(&[&acc.step.pu, &acc.step.px, &acc.step.ps]);
            let (dzl, dzu) = bounds.multiplier_step(&v, &dv, &st.zl, &st.zu, st.mu);
            let alpha_z = multiplier_max_step(&st.zl, &dzl, tau).min(multiplier_max_step(&st.zu, &dzu, tau));
            if acc.kind == Some(Acceptance::Filter) {
                filter.augment(theta, phi);
            }
            st.set_primal(&acc.trial.v);
            if !self.feasible_path() {
                st.lambda = axpy(&st.lambda, acc.alpha, &acc.step.plam);
            }
            st.y = axpy(&st.y, acc.alpha, &acc.step.py);
            st.zl = axpy(&st.zl, alpha_z, &dzl);
            st.zu = axpy(&st.zu, alpha_z, &dzu);
            bounds.safeguard(&acc.trial.v, &mut st.zl, &mut st.zu, st.mu);
            st.iteration += 1;
            alphas = (acc.alpha, alpha_z);
        };
        self.finish(st, status, message, err, start)
    }

    /// Factorizes the Newton system, regularizing until the inertia is
    /// correct. Returns the factor, `δ` and the number of attempts.
    fn factor<'a>(
        &mut self,
        blocks: KktBlocks<'a>,
        lu: Option<&'a SparseLu>,
        last_delta: f64,
    ) -> Result<(Factored<'a>, f64, usize), KktError> {
        let reg = self.opts.regularization;
        match self.algorithm {
            Algorithm::FullSpace => {
                let t = Instant::now();
                let solver = FullSpaceSolver {
                    dense_limit: self.opts.dense_limit,
                    regularization: reg,
                    batch_size: self.opts.batch_size,
                };
                let f = solver.factor(&blocks, last_delta, lu, &mut self.stats);
                self.timings.factorization += seconds(t);
                let f = f?;
                let (delta, attempts) = (f.delta, f.attempts);
                Ok((Factored::Full(f), delta, attempts))
            }
            Algorithm::LinRed | Algorithm::RedLin => {
                let lu = lu.expect("state Jacobian factors are available");
                let t = Instant::now();
                let sys = ReducedSystem::new(blocks, lu, self.opts.batch_size, &mut self.stats);
                self.timings.reduction += seconds(t);
                let t = Instant::now();
                let out = reg.cholesky(sys.reduced_matrix(), last_delta);
                self.timings.factorization += seconds(t);
                let (chol, delta, attempts) = out?;
                Ok((Factored::Reduced(sys, chol), delta, attempts))
            }
        }
    }

    fn finish(
        self,
        st: IpmState,
        status: Status,
        message: Option<String>,
        err: ConvergenceError,
        start: Instant,
    ) -> SolveReport {
        let model = &self.prob.model;
        let net = model.network();
        let objective = model.objective(&st.u, &st.x);
        let (vm, va) = model.voltages(&st.u, &st.x);
        let dispatch = model.dispatch(&st.u, &st.x);
        let (n_u, n_x) = (model.n_controls(), model.n_states());
        let mut timings = self.timings;
        timings.total = seconds(start);
        let report = SolveReport {
            algorithm: self.algorithm.name().to_string(),
            status,
            message,
            iterations: st.iteration,
            objective,
            primal_inf: err.primal,
            dual_inf: err.dual,
            complementarity: err.complementarity,
            timings,
            dims: Dimensions {
                n_buses: net.n_buses(),
                n_lines: net.n_branches(),
                n_generators: net.generators().len(),
                n_states: n_x,
                n_controls: n_u,
                n_constraints: model.n_constraints(),
                ratio: n_u as f64 / (n_x + n_u) as f64,
            },
            regularizations: self.regularizations,
            kernels: self.stats.into(),
            restoration_needed: status == Status::Aborted(AbortReason::LineSearchFailed),
            trace: self.trace,
            solution: Solution { u: st.u, x: st.x, vm, va, pg: dispatch.pg, qg: dispatch.qg },
        };
        info!(
            "{}: {} after {} iterations, objective {:.6}",
            report.algorithm, report.status, report.iterations, report.objective
        );
        report
    }
}

/// Largest `α ≤ 1` keeping each positive multiplier above `(1 − τ) z`.
fn multiplier_max_step(z: &[f64], dz: &[f64], tau: f64) -> f64 {
    z.iter().zip(dz).filter(|(z, d)| **z > 0.0 && **d < 0.0).fold(1.0_f64, |a, (z, d)| a.min(-tau * z / d))
}
