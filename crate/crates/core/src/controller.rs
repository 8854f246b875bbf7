//! One-step MFAC control laws.
//!
//! Every law minimizes the one-step cost
//! `J = ‖y*(k+1) - y(k+1)‖² + Δuᵀ(k) λ Δu(k)` with `y(k+1)` predicted by the
//! dynamic linearization. The controllers take the operating point `φ(k-1)`
//! as a [`RegressorWindow`] (newest entries `y(k-1)`, `u(k-1)`) and the fresh
//! measurement `y(k)` separately.

use nalgebra::{DMatrix, DVector};

use crate::edlm::{DifferentiableModel, Linearization, PseudoJacobian, RegressorWindow};
use crate::error::{Error, Result};
use crate::linalg::{condition_number, damped_least_squares};

/// Diagonal input weighting `λ = diag(λ₁, …, λ_Mu)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Weighting {
    diag: DVector<f64>,
}

impl Weighting {
    pub fn new(diag: DVector<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::InvalidDimensions("weighting needs at least one entry".into()));
        }
        if diag.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
            return Err(Error::Range("weights must be finite and non-negative".into()));
        }
        Ok(Self { diag })
    }

    /// `λ·I` of size `mu`.
    pub fn uniform(lambda: f64, mu: usize) -> Result<Self> {
        Self::new(DVector::from_element(mu, lambda))
    }

    pub fn diag(&self) -> &DVector<f64> {
        &self.diag
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// The common value when every entry is equal.
    pub fn uniform_value(&self) -> Option<f64> {
        let first = self.diag[0];
        self.diag.iter().all(|&l| l == first).then_some(first)
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform_value().is_some()
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.diag)
    }
}

/// Absolute bounds `lower ≤ u(k) ≤ upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxConstraints {
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl BoxConstraints {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Shape(format!(
                "box bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (lo, hi)) in lower.iter().zip(upper.iter()).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::InfeasibleBox(format!("component {i}: lower {lo} > upper {hi}")));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn contains(&self, u: &DVector<f64>) -> bool {
        u.iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }

    /// Number of components of `u` outside the box.
    pub fn violations(&self, u: &DVector<f64>) -> usize {
        u.iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .filter(|(v, (lo, hi))| v < lo || v > hi)
            .count()
    }

    pub fn project(&self, u: &DVector<f64>) -> DVector<f64> {
        u.zip_zip_map(&self.lower, &self.upper, |v, lo, hi| v.clamp(lo, hi))
    }
}

/// Outcome of one control decision.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlDecision {
    pub delta_u: DVector<f64>,
    /// `u(k) = u(k-1) + Δu(k)`.
    pub u: DVector<f64>,
    /// Value of `J` under the model the law optimized.
    pub cost: f64,
    /// Passes of the fixed-point or inner iteration; 0 for the direct laws.
    pub iterations: usize,
    /// Condition number of `Φ_{Ly+1}(k)` (of the last iterate for iterative laws).
    pub condition_number: f64,
    pub converged: bool,
}

/// `ΔH(k)` assembled from the operating point, `y(k)` and a candidate `Δu(k)`.
pub(crate) fn decision_regressor(
    ly: usize,
    lu: usize,
    window: &RegressorWindow,
    y_now: &DVector<f64>,
    delta_u: &DVector<f64>,
) -> Result<DVector<f64>> {
    let (my, mu) = (window.my(), window.mu());
    if y_now.len() != my || delta_u.len() != mu {
        return Err(Error::Shape("y(k) or Δu(k) does not match the window".into()));
    }
    if window.outputs().len() < ly || window.inputs().len() < lu.max(1) {
        return Err(Error::Shape(format!(
            "operating point holds {} outputs / {} inputs, the law needs {ly} / {}",
            window.outputs().len(),
            window.inputs().len(),
            lu.max(1)
        )));
    }
    let mut h = Vec::with_capacity(ly * my + lu * mu);
    for i in 0..ly {
        let d = if i == 0 {
            y_now - &window.outputs()[0]
        } else {
            window.delta_output(i - 1).expect("length checked")
        };
        h.extend(d.iter());
    }
    h.extend(delta_u.iter());
    for j in 1..lu {
        h.extend(window.delta_input(j - 1).expect("length checked").iter());
    }
    Ok(DVector::from_vec(h))
}

fn check_problem(pjm: &PseudoJacobian, window: &RegressorWindow, y_ref: &DVector<f64>, w: &Weighting) -> Result<()> {
    if pjm.my() != window.my() || pjm.mu() != window.mu() {
        return Err(Error::Shape(format!(
            "PJM is My={}, Mu={} but the window is My={}, Mu={}",
            pjm.my(),
            pjm.mu(),
            window.my(),
            window.mu()
        )));
    }
    if y_ref.len() != pjm.my() {
        return Err(Error::Shape(format!("reference has length {}, expected {}", y_ref.len(), pjm.my())));
    }
    if w.len() != pjm.mu() {
        return Err(Error::Shape(format!("weighting has {} entries, expected {}", w.len(), pjm.mu())));
    }
    Ok(())
}

/// The quadratic subproblem `min ‖r - BΔu‖² + ΔuᵀλΔu`.
struct Quadratic {
    b: DMatrix<f64>,
    r: DVector<f64>,
    lambda: DVector<f64>,
}

impl Quadratic {
    fn new(pjm: &PseudoJacobian, window: &RegressorWindow, y_now: &DVector<f64>, y_ref: &DVector<f64>, w: &Weighting) -> Result<Self> {
        check_problem(pjm, window, y_ref, w)?;
        let zero = DVector::zeros(pjm.mu());
        let dh = decision_regressor(pjm.ly(), pjm.lu(), window, y_now, &zero)?;
        let free = pjm.predict_delta_output(&dh)?;
        Ok(Self {
            b: pjm.leading_input_block().clone(),
            r: y_ref - y_now - free,
            lambda: w.diag().clone(),
        })
    }

    fn cost(&self, du: &DVector<f64>) -> f64 {
        let e = &self.r - &self.b * du;
        e.norm_squared() + du.component_mul(du).dot(&self.lambda)
    }

    fn solve(&self) -> Result<DVector<f64>> {
        damped_least_squares(&self.b, &self.lambda, &self.r)
    }
}

fn decision(u_prev: &DVector<f64>, delta_u: DVector<f64>, cost: f64, iterations: usize, cond: f64, converged: bool) -> ControlDecision {
    ControlDecision {
        u: u_prev + &delta_u,
        delta_u,
        cost,
        iterations,
        condition_number: cond,
        converged,
    }
}

/// Unconstrained MFAC law: solves
/// `[Φ_{Ly+1}ᵀΦ_{Ly+1} + λ]Δu = Φ_{Ly+1}ᵀ[(y* - y(k)) - ΣΦ_iΔy(k-i+1) - ΣΦ_{Ly+j}Δu(k-j+1)]`.
pub fn mfac_step(
    pjm: &PseudoJacobian,
    window: &RegressorWindow,
    y_now: &DVector<f64>,
    y_ref: &DVector<f64>,
    w: &Weighting,
) -> Result<ControlDecision> {
    let q = Quadratic::new(pjm, window, y_now, y_ref, w)?;
    let du = q.solve()?;
    let cost = q.cost(&du);
    Ok(decision(&window.inputs()[0], du, cost, 0, condition_number(&q.b), true))
}

const CD_TOL: f64 = 1e-10;
const CD_MAX_SWEEPS: usize = 500;

/// MFAC law under absolute input bounds, by projected coordinate descent on
/// the quadratic cost. Returns the unconstrained solution when it is feasible.
pub fn mfac_constrained_step(
    pjm: &PseudoJacobian,
    window: &RegressorWindow,
    y_now: &DVector<f64>,
    y_ref: &DVector<f64>,
    w: &Weighting,
    bounds: &BoxConstraints,
) -> Result<ControlDecision> {
    if bounds.lower.len() != pjm.mu() {
        return Err(Error::Shape(format!("box has {} components, expected {}", bounds.lower.len(), pjm.mu())));
    }
    let q = Quadratic::new(pjm, window, y_now, y_ref, w)?;
    let u_prev = &window.inputs()[0];
    let cond = condition_number(&q.b);

    // A singular unconstrained problem is fine here; the box keeps it bounded.
    if let Ok(du) = q.solve() {
        if bounds.contains(&(u_prev + &du)) {
            let cost = q.cost(&du);
            return Ok(decision(u_prev, du, cost, 0, cond, true));
        }
    }

    let lo = &bounds.lower - u_prev;
    let hi = &bounds.upper - u_prev;
    let h = q.b.transpose() * &q.b + DMatrix::from_diagonal(&q.lambda);
    let g = q.b.transpose() * &q.r;
    let mut du = DVector::zeros(pjm.mu()).zip_zip_map(&lo, &hi, |v: f64, l, u| v.clamp(l, u));
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < CD_MAX_SWEEPS {
        sweeps += 1;
        let mut change: f64 = 0.0;
        for j in 0..du.len() {
            let hjj = h[(j, j)];
            let old = du[j];
            let target = if hjj > 0.0 {
                let off = h.row(j).dot(&du.transpose()) - hjj * old;
                (g[j] - off) / hjj
            } else {
                // cost is flat in this coordinate
                0.0
            };
            du[j] = target.clamp(lo[j], hi[j]);
            change = change.max((du[j] - old).abs());
        }
        if change < CD_TOL {
            converged = true;
            break;
        }
    }
    let u = bounds.project(&(u_prev + &du));
    let du = &u - u_prev;
    let cost = q.cost(&du);
    Ok(ControlDecision {
        delta_u: du,
        u,
        cost,
        iterations: sweeps,
        condition_number: cond,
        converged,
    })
}

const QUARTIC_TOL: f64 = 1e-9;
const QUARTIC_MAX_PASSES: usize = 50;

/// Second-order MFAC law. Starts from the first-order solution and repeatedly
/// rebuilds the corrected PJM with the current `Δu(k)` estimate, re-solving
/// the quadratic each pass, until the estimate stops moving.
pub fn mfac_quartic_step<M: DifferentiableModel + ?Sized>(
    model: &M,
    window: &RegressorWindow,
    y_now: &DVector<f64>,
    y_ref: &DVector<f64>,
    w: &Weighting,
) -> Result<ControlDecision> {
    quartic_with_pjm(model, window, y_now, y_ref, w).map(|(d, _)| d)
}

/// As [`mfac_quartic_step`], also returning the corrected PJM of the result.
pub(crate) fn quartic_with_pjm<M: DifferentiableModel + ?Sized>(
    model: &M,
    window: &RegressorWindow,
    y_now: &DVector<f64>,
    y_ref: &DVector<f64>,
    w: &Weighting,
) -> Result<(ControlDecision, PseudoJacobian)> {
    let dims = model.dims();
    let lin = Linearization::second_order(model, window)?;
    let first = lin.pjm();
    check_problem(&first, window, y_ref, w)?;
    let u_prev = &window.inputs()[0];

    // J with the corrected PJM rebuilt at Δu: quartic in Δu
    let quartic_cost = |du: &DVector<f64>| -> Result<(f64, PseudoJacobian)> {
        let dh = decision_regressor(dims.ly(), dims.lu(), window, y_now, du)?;
        let pjm = lin.corrected_pjm(&dh)?;
        let e = y_ref - y_now - pjm.predict_delta_output(&dh)?;
        Ok((e.norm_squared() + du.component_mul(du).dot(w.diag()), pjm))
    };

    let mut du = mfac_step(&first, window, y_now, y_ref, w)?.delta_u;
    let (mut best_cost, mut best_pjm) = quartic_cost(&du)?;
    let mut best = du.clone();
    let mut passes = 0;
    let mut converged = false;
    while passes < QUARTIC_MAX_PASSES {
        passes += 1;
        let dh = decision_regressor(dims.ly(), dims.lu(), window, y_now, &du)?;
        let pjm = lin.corrected_pjm(&dh)?;
        let next = mfac_step(&pjm, window, y_now, y_ref, w)?.delta_u;
        let step = (&next - &du).amax();
        du = next;
        let (cost, pjm_now) = quartic_cost(&du)?;
        if cost <= best_cost {
            best_cost = cost;
            best = du.clone();
            best_pjm = pjm_now.clone();
        }
        if step < QUARTIC_TOL {
            converged = true;
            best_cost = cost;
            best = du.clone();
            best_pjm = pjm_now;
            break;
        }
    }
    let cond = condition_number(best_pjm.leading_input_block());
    Ok((decision(u_prev, best, best_cost, passes, cond, converged), best_pjm))
}

const INNER_TOL: f64 = 1e-10;

/// Iterative MFAC law with inner iterations before the input is applied.
///
/// Each iteration re-evaluates `∂f/∂u(k)` at the current virtual state
/// `φ(k)` (history with the candidate `u(k)`), takes a damped least-squares
/// step with `λ = schedule(cond)` and advances the virtual plant with
/// `model.evaluate`. Stops once `‖y* - y_virtual‖∞ < 1e-10` or after
/// `max_iter` iterations; hitting the cap is reported through `converged`.
pub fn iterative_mfac_step<M, S>(
    model: &M,
    window: &RegressorWindow,
    y_now: &DVector<f64>,
    y_ref: &DVector<f64>,
    schedule: S,
    max_iter: usize,
) -> Result<ControlDecision>
where
    M: DifferentiableModel + ?Sized,
    S: Fn(f64) -> Weighting,
{
    if max_iter == 0 {
        return Err(Error::Range("max_iter must be at least 1".into()));
    }
    let dims = model.dims();
    let ny = dims.ny().ok_or(Error::UnknownOrders)?;
    let nu = dims.nu().ok_or(Error::UnknownOrders)?;
    let (my, mu) = (dims.my(), dims.mu());
    if window.my() != my || window.mu() != mu || y_now.len() != my || y_ref.len() != my {
        return Err(Error::Shape("iterative law: vector sizes do not match the model".into()));
    }
    if window.inputs().is_empty() {
        return Err(Error::Shape("operating point holds no input".into()));
    }
    let u_prev = window.inputs()[0].clone();

    // φ(k) with u(k) = u(k-1): the newest input slot is the decision variable
    let mut outputs = Vec::with_capacity(ny + 1);
    outputs.push(y_now.clone());
    outputs.extend(window.outputs().iter().take(ny).cloned());
    let mut inputs = Vec::with_capacity(nu + 1);
    inputs.push(u_prev.clone());
    inputs.extend(window.inputs().iter().take(nu).cloned());
    let virtual_state = RegressorWindow::new(my, mu, outputs, inputs, window.k() + 1)?;
    let mut args = virtual_state.model_args(ny, nu)?;
    let u_slot = (ny + 1) * my;

    let evaluate = |args: &[f64]| -> Result<DVector<f64>> {
        let y = model.evaluate(args);
        if y.len() != my {
            return Err(Error::Shape(format!("model returned {} outputs, expected {my}", y.len())));
        }
        if y.iter().all(|v| v.is_finite()) {
            Ok(y)
        } else {
            Err(Error::Numeric("model returned a non-finite output".into()))
        }
    };

    let mut y_virtual = evaluate(&args)?;
    let mut e = y_ref - &y_virtual;
    let mut iterations = 0;
    let mut cond = f64::NAN;
    let mut last_lambda = DVector::zeros(mu);
    while e.amax() >= INNER_TOL && iterations < max_iter {
        iterations += 1;
        let b = crate::edlm::partials(model, &args, u_slot..u_slot + mu)?;
        cond = condition_number(&b);
        let w = schedule(cond);
        if w.len() != mu {
            return Err(Error::Shape("schedule returned a weighting of the wrong size".into()));
        }
        let step = damped_least_squares(&b, w.diag(), &e)?;
        for (slot, s) in args[u_slot..u_slot + mu].iter_mut().zip(step.iter()) {
            *slot += s;
        }
        last_lambda = w.diag().clone();
        y_virtual = evaluate(&args)?;
        e = y_ref - &y_virtual;
    }
    let u = DVector::from_column_slice(&args[u_slot..u_slot + mu]);
    let du = &u - &u_prev;
    if iterations == 0 {
        let b = crate::edlm::partials(model, &args, u_slot..u_slot + mu)?;
        cond = condition_number(&b);
    }
    let cost = e.norm_squared() + du.component_mul(&du).dot(&last_lambda);
    Ok(ControlDecision {
        delta_u: du,
        u,
        cost,
        iterations,
        condition_number: cond,
        converged: e.amax() < INNER_TOL,
    })
}

/// Scalar `λ` chosen from a condition number: 0 below 5000, 0.05 below
/// 20000, 0.1 otherwise (including non-finite values).
pub fn scheduled_lambda(cond: f64) -> f64 {
    if cond.is_finite() && cond < 5000.0 {
        0.0
    } else if cond.is_finite() && cond < 20000.0 {
        0.05
    } else {
        0.1
    }
}

/// [`scheduled_lambda`] as a uniform weighting of size `size`.
pub fn lambda_schedule(cond: f64, size: usize) -> Weighting {
    Weighting {
        diag: DVector::from_element(size.max(1), scheduled_lambda(cond)),
    }
}
