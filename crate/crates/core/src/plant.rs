//! Plant models, reference signals and the closed-loop simulation driver.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::controller::{
    mfac_constrained_step, mfac_step, quartic_with_pjm, BoxConstraints, ControlDecision, Weighting,
};
use crate::edlm::{pjm_first_order, DifferentiableModel, Dimensions, PseudoJacobian, RegressorWindow};
use crate::error::{Error, Result};

/// Outputs or inputs beyond this magnitude abort a simulation. Inputs are
/// checked too because an unstable input mode can hide behind an output that
/// stays on target.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// First line of every simulation CSV.
pub const SIMLOG_SCHEMA: &str = "# mfac simlog v1";

/// The 2×2 nonlinear benchmark plant
///
/// ```text
/// y1(k+1) = -0.1 y1³(k) + 0.2 y2²(k) + u1(k) + u2²(k) + u1³(k-1) + 2 u1⁴(k-1)
/// y2(k+1) = -0.1 y1²(k) + 0.2 y2³(k) + u1²(k) + 0.8 u2(k) + u1³(k-1) + u2³(k-1)
/// ```
#[derive(Debug, Clone, Copy, Default)]
pub struct Example1Plant;

impl DifferentiableModel for Example1Plant {
    fn dims(&self) -> Dimensions {
        Dimensions::preferred(2, 2, 0, 1).expect("static dimensions")
    }

    fn evaluate(&self, a: &[f64]) -> DVector<f64> {
        let (y1, y2, u1, u2, u1p, u2p) = (a[0], a[1], a[2], a[3], a[4], a[5]);
        DVector::from_vec(vec![
            -0.1 * y1.powi(3) + 0.2 * y2.powi(2) + u1 + u2.powi(2) + u1p.powi(3) + 2.0 * u1p.powi(4),
            -0.1 * y1.powi(2) + 0.2 * y2.powi(3) + u1.powi(2) + 0.8 * u2 + u1p.powi(3) + u2p.powi(3),
        ])
    }
}

/// Linear plant `y(k+1) = Σ A_i y(k-i) + Σ B_j u(k-j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiPlant {
    a: Vec<DMatrix<f64>>,
    b: Vec<DMatrix<f64>>,
    dims: Dimensions,
}

impl LtiPlant {
    pub fn new(a: Vec<DMatrix<f64>>, b: Vec<DMatrix<f64>>) -> Result<Self> {
        let (Some(a0), Some(b0)) = (a.first(), b.first()) else {
            return Err(Error::InvalidDimensions("an LTI plant needs at least one A and one B block".into()));
        };
        let my = a0.nrows();
        let mu = b0.ncols();
        if a.iter().any(|m| m.shape() != (my, my)) || b.iter().any(|m| m.shape() != (my, mu)) {
            return Err(Error::Shape("LTI coefficient blocks have inconsistent shapes".into()));
        }
        let dims = Dimensions::preferred(my, mu, a.len() - 1, b.len() - 1)?;
        Ok(Self { a, b, dims })
    }

    pub fn a(&self) -> &[DMatrix<f64>] {
        &self.a
    }

    pub fn b(&self) -> &[DMatrix<f64>] {
        &self.b
    }
}

impl DifferentiableModel for LtiPlant {
    fn dims(&self) -> Dimensions {
        self.dims
    }

    fn evaluate(&self, args: &[f64]) -> DVector<f64> {
        let (my, mu) = (self.dims.my(), self.dims.mu());
        let mut y = DVector::zeros(my);
        for (i, a) in self.a.iter().enumerate() {
            y += a * DVector::from_column_slice(&args[i * my..(i + 1) * my]);
        }
        let off = self.a.len() * my;
        for (j, b) in self.b.iter().enumerate() {
            y += b * DVector::from_column_slice(&args[off + j * mu..off + (j + 1) * mu]);
        }
        y
    }
}

/// Desired output trajectory `y*(k)`.
pub trait ReferenceSignal {
    fn dim(&self) -> usize;

    fn sample(&self, k: i64) -> DVector<f64>;
}

/// The benchmark trajectories: sinusoids for `k ≤ 400`, a ±0.2 square wave
/// with `y2* = -y1*` for `401 ≤ k ≤ 800`.
pub fn example1_reference(k: i64) -> Result<DVector<f64>> {
    if !(1..=800).contains(&k) {
        return Err(Error::Range(format!("reference defined for 1 ≤ k ≤ 800, got {k}")));
    }
    let kf = k as f64;
    if k <= 400 {
        Ok(DVector::from_vec(vec![
            0.3 * (kf / 40.0).sin() - 0.2 * (kf / 20.0).cos(),
            0.2 * (kf / 10.0).sin() + 0.3 * (kf / 30.0).sin(),
        ]))
    } else {
        // f64::round rounds half away from zero
        let level = if (kf / 50.0).round() as i64 % 2 == 0 { 0.2 } else { -0.2 };
        Ok(DVector::from_vec(vec![level, -level]))
    }
}

/// [`example1_reference`] as a signal; indices outside `[1, 800]` are held
/// at the nearest end so the last decision still has a target.
#[derive(Debug, Clone, Copy, Default)]
pub struct Example1Reference;

impl ReferenceSignal for Example1Reference {
    fn dim(&self) -> usize {
        2
    }

    fn sample(&self, k: i64) -> DVector<f64> {
        example1_reference(k.clamp(1, 800)).expect("clamped index")
    }
}

/// Unit ramp in time on every output: `y*(k) = k·Ts`.
#[derive(Debug, Clone, Copy)]
pub struct Ramp {
    pub dim: usize,
    pub ts: f64,
}

impl ReferenceSignal for Ramp {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, k: i64) -> DVector<f64> {
        DVector::from_element(self.dim, k.max(0) as f64 * self.ts)
    }
}

/// Step of height `level` on every output, switched on at `k = 1`.
#[derive(Debug, Clone, Copy)]
pub struct Step {
    pub dim: usize,
    pub level: f64,
}

impl ReferenceSignal for Step {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, k: i64) -> DVector<f64> {
        DVector::from_element(self.dim, if k >= 1 { self.level } else { 0.0 })
    }
}

/// Constant reference.
#[derive(Debug, Clone)]
pub struct Constant(pub DVector<f64>);

impl ReferenceSignal for Constant {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn sample(&self, _k: i64) -> DVector<f64> {
        self.0.clone()
    }
}

/// Which control law drives the simulated loop.
#[derive(Debug, Clone, PartialEq)]
pub enum ControllerVariant {
    /// Second-order PJM, fixed-point minimization of the quartic cost.
    Quartic,
    /// First-order PJM with absolute input bounds.
    Constrained(BoxConstraints),
    /// First-order PJM with the unconstrained law.
    FirstOrder,
}

impl ControllerVariant {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Quartic => "quartic",
            Self::Constrained(_) => "constrained",
            Self::FirstOrder => "first_order",
        }
    }
}

/// Initial conditions of a simulation.
///
/// `history` is the state at the first decision step `k0 = history.k()`:
/// `outputs[i] = y(k0-i)` and `inputs[i] = u(k0-1-i)`. Samples older than the
/// window are zero. Rows before `k0` are logged with `seed_pjm` and no
/// control action.
#[derive(Debug, Clone, PartialEq)]
pub struct SimInit {
    pub history: RegressorWindow,
    pub seed_pjm: PseudoJacobian,
}

impl SimInit {
    /// Zero history up to `k0` with every PJM entry seeded to `seed`.
    pub fn zeros(dims: &Dimensions, k0: i64, seed: f64) -> Self {
        Self {
            history: RegressorWindow::zeros(dims.my(), dims.mu(), (k0.max(1)) as usize, (k0 - 1).max(1) as usize, k0),
            seed_pjm: PseudoJacobian::filled(dims, seed),
        }
    }

    /// The benchmark start: `y(1) = y(2) = y(3) = u(1) = u(2) = 0` with
    /// `0.01·ones(2, 6)` as the seed PJM.
    pub fn example1() -> Self {
        Self::zeros(&Example1Plant.dims(), 3, 0.01)
    }
}

/// One logged step.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRecord {
    pub k: i64,
    pub y: DVector<f64>,
    pub y_ref: DVector<f64>,
    pub u: DVector<f64>,
    pub du: DVector<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub pjm: PseudoJacobian,
    pub condition_number: f64,
}

/// Write-once record of a closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimLog {
    my: usize,
    mu: usize,
    records: Vec<SimRecord>,
}

impl SimLog {
    fn new(my: usize, mu: usize) -> Self {
        Self {
            my,
            mu,
            records: Vec::new(),
        }
    }

    fn push(&mut self, rec: SimRecord) {
        debug_assert!(self.records.last().is_none_or(|r| r.k < rec.k));
        self.records.push(rec);
    }

    pub fn records(&self) -> &[SimRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["k".to_string()];
        for (prefix, n) in [("y", self.my), ("yref", self.my), ("u", self.mu), ("du", self.mu)] {
            h.extend((1..=n).map(|i| format!("{prefix}{i}")));
        }
        h.push("cost".into());
        h.push("iters".into());
        if let Some(r) = self.records.first() {
            h.extend(r.pjm.csv_header());
        }
        h.push("cond".into());
        h
    }

    /// Writes the CSV form: schema line, header, one row per step.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{SIMLOG_SCHEMA}")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header())?;
        for r in &self.records {
            let mut row = vec![r.k.to_string()];
            row.extend(r.y.iter().chain(r.y_ref.iter()).chain(r.u.iter()).chain(r.du.iter()).map(|v| v.to_string()));
            row.push(r.cost.to_string());
            row.push(r.iterations.to_string());
            row.extend(r.pjm.csv_row().iter().map(|v| v.to_string()));
            row.push(r.condition_number.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

fn zero_or<'a>(v: Option<&'a DVector<f64>>, zero: &'a DVector<f64>) -> &'a DVector<f64> {
    v.unwrap_or(zero)
}

/// Output and input histories indexed by absolute step, zero before the
/// first stored sample.
struct History {
    y: Vec<DVector<f64>>,
    u: Vec<DVector<f64>>,
    origin: i64,
    zero_y: DVector<f64>,
    zero_u: DVector<f64>,
}

impl History {
    fn from_init(init: &RegressorWindow, span: i64) -> Self {
        let k0 = init.k();
        let origin = k0 - span;
        let (my, mu) = (init.my(), init.mu());
        let mut h = Self {
            y: vec![DVector::zeros(my); span as usize + 1],
            u: vec![DVector::zeros(mu); span as usize],
            origin,
            zero_y: DVector::zeros(my),
            zero_u: DVector::zeros(mu),
        };
        for (i, y) in init.outputs().iter().enumerate() {
            h.set_y(k0 - i as i64, y.clone());
        }
        for (i, u) in init.inputs().iter().enumerate() {
            h.set_u(k0 - 1 - i as i64, u.clone());
        }
        h
    }

    fn idx(&self, k: i64) -> Option<usize> {
        (k >= self.origin).then(|| (k - self.origin) as usize)
    }

    fn y(&self, k: i64) -> &DVector<f64> {
        zero_or(self.idx(k).and_then(|i| self.y.get(i)), &self.zero_y)
    }

    fn u(&self, k: i64) -> &DVector<f64> {
        zero_or(self.idx(k).and_then(|i| self.u.get(i)), &self.zero_u)
    }

    fn set_y(&mut self, k: i64, v: DVector<f64>) {
        if let Some(i) = self.idx(k) {
            if i >= self.y.len() {
                self.y.resize(i + 1, self.zero_y.clone());
            }
            self.y[i] = v;
        }
    }

    fn set_u(&mut self, k: i64, v: DVector<f64>) {
        if let Some(i) = self.idx(k) {
            if i >= self.u.len() {
                self.u.resize(i + 1, self.zero_u.clone());
            }
            self.u[i] = v;
        }
    }

    /// `φ(k-1)` holding `n_out` outputs and `n_in` inputs.
    fn operating_point(&self, k: i64, n_out: usize, n_in: usize) -> RegressorWindow {
        let outputs = (0..n_out).map(|i| self.y(k - 1 - i as i64).clone()).collect();
        let inputs = (0..n_in).map(|i| self.u(k - 1 - i as i64).clone()).collect();
        RegressorWindow::new(self.zero_y.len(), self.zero_u.len(), outputs, inputs, k - 1).expect("consistent sizes")
    }
}

fn check_finite(k: i64, v: &DVector<f64>) -> Result<()> {
    let magnitude = v.iter().fold(0.0f64, |m, v| if v.is_finite() { m.max(v.abs()) } else { f64::INFINITY });
    if magnitude > DIVERGENCE_LIMIT {
        return Err(Error::Diverged { k, magnitude });
    }
    Ok(())
}

/// Runs the closed loop for rows `k = 1..=steps`.
///
/// From `k0` on, each step linearizes the plant at `φ(k-1)` according to the
/// variant, computes `u(k)` toward `y*(k+1)`, logs the row and advances the
/// plant. Fails with [`Error::Diverged`] when an output or input exceeds
/// [`DIVERGENCE_LIMIT`].
pub fn simulate<M, R>(
    plant: &M,
    variant: &ControllerVariant,
    reference: &R,
    steps: usize,
    init: &SimInit,
    w: &Weighting,
) -> Result<SimLog>
where
    M: DifferentiableModel + ?Sized,
    R: ReferenceSignal + ?Sized,
{
    let dims = plant.dims();
    let (ny, nu) = (dims.ny().ok_or(Error::UnknownOrders)?, dims.nu().ok_or(Error::UnknownOrders)?);
    let (my, mu) = (dims.my(), dims.mu());
    if init.history.my() != my || init.history.mu() != mu || reference.dim() != my {
        return Err(Error::Shape("initial window or reference does not match the plant".into()));
    }
    if init.seed_pjm.my() != my || init.seed_pjm.mu() != mu {
        return Err(Error::Shape("seed PJM does not match the plant".into()));
    }
    let n_out = dims.ly().max(ny + 1);
    let n_in = dims.lu().max(nu + 1);
    let k0 = init.history.k();
    let span = (n_out.max(n_in) as i64 + 1).max(k0);
    let mut hist = History::from_init(&init.history, span);
    let mut log = SimLog::new(my, mu);
    let steps = steps as i64;

    for k in 1..k0.min(steps + 1) {
        let u = hist.u(k).clone();
        let du = &u - hist.u(k - 1);
        log.push(SimRecord {
            k,
            y: hist.y(k).clone(),
            y_ref: reference.sample(k),
            u,
            du,
            cost: 0.0,
            iterations: 0,
            pjm: init.seed_pjm.clone(),
            condition_number: crate::linalg::condition_number(init.seed_pjm.leading_input_block()),
        });
    }

    for k in k0.max(1)..=steps {
        let op = hist.operating_point(k, n_out, n_in);
        let y_now = hist.y(k).clone();
        let y_target = reference.sample(k + 1);
        let (decision, pjm): (ControlDecision, PseudoJacobian) = match variant {
            ControllerVariant::FirstOrder => {
                let pjm = pjm_first_order(plant, &op)?;
                (mfac_step(&pjm, &op, &y_now, &y_target, w)?, pjm)
            }
            ControllerVariant::Constrained(bounds) => {
                let pjm = pjm_first_order(plant, &op)?;
                (mfac_constrained_step(&pjm, &op, &y_now, &y_target, w, bounds)?, pjm)
            }
            ControllerVariant::Quartic => quartic_with_pjm(plant, &op, &y_now, &y_target, w)?,
        };
        check_finite(k, &decision.u)?;
        hist.set_u(k, decision.u.clone());
        log.push(SimRecord {
            k,
            y: y_now,
            y_ref: reference.sample(k),
            u: decision.u.clone(),
            du: decision.delta_u.clone(),
            cost: decision.cost,
            iterations: decision.iterations,
            pjm,
            condition_number: decision.condition_number,
        });
        let args = hist.operating_point(k + 1, ny + 1, nu + 1).model_args(ny, nu)?;
        let y_next = plant.evaluate(&args);
        check_finite(k + 1, &y_next)?;
        hist.set_y(k + 1, y_next);
    }
    Ok(log)
}

/// Closed loop in which the plant *is* the frozen linearization:
/// `Δy(k+1) = φ_Lᵀ ΔH(k)` driven by the unconstrained law with the same PJM.
/// Zero initial conditions; rows `k = 1..=steps`.
pub fn simulate_frozen<R: ReferenceSignal + ?Sized>(
    pjm: &PseudoJacobian,
    w: &Weighting,
    reference: &R,
    steps: usize,
) -> Result<SimLog> {
    let (my, mu) = (pjm.my(), pjm.mu());
    if reference.dim() != my {
        return Err(Error::Shape("reference does not match the PJM".into()));
    }
    let n_out = pjm.ly();
    let n_in = pjm.lu();
    let init = RegressorWindow::zeros(my, mu, 1, 1, 1);
    let mut hist = History::from_init(&init, (n_out.max(n_in) + 2) as i64);
    let mut log = SimLog::new(my, mu);
    let cond = crate::linalg::condition_number(pjm.leading_input_block());
    for k in 1..=steps as i64 {
        let op = hist.operating_point(k, n_out, n_in.max(1));
        let y_now = hist.y(k).clone();
        let d = mfac_step(pjm, &op, &y_now, &reference.sample(k + 1), w)?;
        check_finite(k, &d.u)?;
        hist.set_u(k, d.u.clone());
        let dh = crate::controller::decision_regressor(n_out, n_in, &op, &y_now, &d.delta_u)?;
        let y_next = &y_now + pjm.predict_delta_output(&dh)?;
        log.push(SimRecord {
            k,
            y: y_now,
            y_ref: reference.sample(k),
            u: d.u,
            du: d.delta_u,
            cost: d.cost,
            iterations: 0,
            pjm: pjm.clone(),
            condition_number: cond,
        });
        check_finite(k + 1, &y_next)?;
        hist.set_y(k + 1, y_next);
    }
    Ok(log)
}

/// Tracking and constraint summary of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub rmse: DVector<f64>,
    pub max_abs_error: DVector<f64>,
    /// Logged inputs outside the box, counted per component over the whole run.
    pub constraint_violations: usize,
}

/// Error statistics over `k > cutoff`.
pub fn metrics(log: &SimLog, cutoff: i64, bounds: Option<&BoxConstraints>) -> Result<Metrics> {
    metrics_between(log, cutoff, i64::MAX, bounds)
}

/// Error statistics over `cutoff < k ≤ end`.
pub fn metrics_between(log: &SimLog, cutoff: i64, end: i64, bounds: Option<&BoxConstraints>) -> Result<Metrics> {
    let rows: Vec<&SimRecord> = log.records.iter().filter(|r| r.k > cutoff && r.k <= end).collect();
    if rows.is_empty() {
        return Err(Error::Range(format!("no logged steps in ({cutoff}, {end}]")));
    }
    let mut sq: DVector<f64> = DVector::zeros(log.my);
    let mut max: DVector<f64> = DVector::zeros(log.my);
    for r in &rows {
        let e = &r.y_ref - &r.y;
        for i in 0..log.my {
            sq[i] += e[i] * e[i];
            max[i] = f64::max(max[i], e[i].abs());
        }
    }
    let rmse = sq.map(|s| (s / rows.len() as f64).sqrt());
    let constraint_violations = bounds.map_or(0, |b| log.records.iter().map(|r| b.violations(&r.u)).sum());
    Ok(Metrics {
        rmse,
        max_abs_error: max,
        constraint_violations,
    })
}

/// The benchmark box: `-0.3 ≤ u1 ≤ 0.1`, `-0.5 ≤ u2 ≤ 0.5`.
pub fn example1_bounds() -> BoxConstraints {
    BoxConstraints::new(DVector::from_vec(vec![-0.3, -0.5]), DVector::from_vec(vec![0.1, 0.5]))
        .expect("static bounds")
}
