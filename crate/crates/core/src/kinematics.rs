//! Serial-arm kinematics: modified Denavit-Hartenberg chains, task-space
//! Jacobian, rotation conversions and damped least-squares inverse
//! kinematics with a condition-number lambda schedule.
//!
//! Lengths are millimetres, angles radians. Orientation is expressed with
//! the Euler triple `(α, β, γ)` of `R = Rz(γ)·Ry(β)·Rx(α)`.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, Vector3};

use crate::controller::scheduled_lambda;
use crate::error::{Error, Result};
use crate::linalg::damped_least_squares;
use crate::pathgen::CartesianPath;

pub use crate::linalg::condition_number;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JointKind {
    Revolute,
    Fixed,
}

/// One row of a modified-DH table: `α_{i-1}`, `a_{i-1}`, `d_i` and the joint
/// angle offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DhRow {
    pub alpha_prev: f64,
    pub a_prev: f64,
    pub d: f64,
    pub theta_offset: f64,
    pub kind: JointKind,
}

impl DhRow {
    pub fn revolute(alpha_prev: f64, a_prev: f64, d: f64) -> Self {
        Self {
            alpha_prev,
            a_prev,
            d,
            theta_offset: 0.0,
            kind: JointKind::Revolute,
        }
    }

    pub fn fixed(alpha_prev: f64, a_prev: f64, d: f64, theta: f64) -> Self {
        Self {
            alpha_prev,
            a_prev,
            d,
            theta_offset: theta,
            kind: JointKind::Fixed,
        }
    }
}

/// The six-axis arm used in the examples, as a plain-text table.
pub const TABLE_ONE: &str = "\
# name  alpha_prev[deg]  a_prev[mm]  d[mm]  theta
base    0     0    342  0
1       0     0    0    q1
2       -90   40   0    q2
3       0     275  0    q3
4       -90   25   280  q4
5       90    0    0    q5
6       -90   0    0    q6
tool    0     0    73   0
";

/// Ordered DH rows from base to tool.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicChain {
    rows: Vec<DhRow>,
}

impl KinematicChain {
    pub fn new(rows: Vec<DhRow>) -> Self {
        Self { rows }
    }

    /// The six-axis arm of [`TABLE_ONE`].
    pub fn table_one() -> Self {
        Self::from_table_str(TABLE_ONE).expect("built-in table parses")
    }

    /// Parses a whitespace-separated table with columns
    /// `name alpha_prev[deg] a_prev[mm] d[mm] theta`. `theta` is either a
    /// fixed angle in degrees or a joint token `qN`, optionally with a
    /// degree offset (`q2-90`, `q3+15`). `#` starts a comment.
    pub fn from_table_str(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        let mut joint_ids = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != 5 {
                return Err(Error::Parse(format!(
                    "line {}: expected 5 columns, found {}",
                    lineno + 1,
                    cols.len()
                )));
            }
            let num = |s: &str, what: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("line {}: bad {what} '{s}'", lineno + 1)))
            };
            let alpha = num(cols[1], "alpha")?.to_radians();
            let a = num(cols[2], "a")?;
            let d = num(cols[3], "d")?;
            let theta = cols[4];
            if let Some(rest) = theta.strip_prefix('q') {
                let split = rest.find(['+', '-']).unwrap_or(rest.len());
                let id: usize = rest[..split]
                    .parse()
                    .map_err(|_| Error::Parse(format!("line {}: bad joint token '{theta}'", lineno + 1)))?;
                let offset = if split < rest.len() { num(&rest[split..], "offset")? } else { 0.0 };
                joint_ids.push(id);
                let mut row = DhRow::revolute(alpha, a, d);
                row.theta_offset = offset.to_radians();
                rows.push(row);
            } else {
                rows.push(DhRow::fixed(alpha, a, d, num(theta, "theta")?.to_radians()));
            }
        }
        let expected: Vec<usize> = (1..=joint_ids.len()).collect();
        if joint_ids != expected {
            return Err(Error::Parse(format!("joints must be numbered q1..qN in order, found {joint_ids:?}")));
        }
        Ok(Self { rows })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_table_str(&std::fs::read_to_string(path)?)
    }

    pub fn rows(&self) -> &[DhRow] {
        &self.rows
    }

    pub fn dof(&self) -> usize {
        self.rows.iter().filter(|r| r.kind == JointKind::Revolute).count()
    }
}

/// Rigid frame: rotation and position (mm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub position: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            position: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, position: Vector3<f64>) -> Result<Self> {
        check_rotation(&rotation)?;
        Ok(Self { rotation, position })
    }

    pub fn homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.position);
        m
    }

    /// `self · other`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            position: self.rotation * other.position + self.position,
        }
    }

    pub fn task_vector(&self) -> Result<TaskVector> {
        let (alpha, beta, gamma) = euler_from_rotation(&self.rotation)?;
        Ok(TaskVector {
            x: self.position.x,
            y: self.position.y,
            z: self.position.z,
            alpha,
            beta,
            gamma,
        })
    }
}

/// `[x, y, z, α, β, γ]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TaskVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl TaskVector {
    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn pose(&self) -> Pose {
        Pose {
            rotation: rotation_from_euler(self.alpha, self.beta, self.gamma),
            position: self.position(),
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.x, self.y, self.z, self.alpha, self.beta, self.gamma]
    }
}

/// Orthonormality error `max|RᵀR - I|`, or `InvalidRotation` when it exceeds
/// `1e-6` or the determinant is not positive.
fn check_rotation(r: &Matrix3<f64>) -> Result<()> {
    let err = (r.transpose() * r - Matrix3::identity()).abs().max();
    if !err.is_finite() || err > 1e-6 || r.determinant() <= 0.0 {
        return Err(Error::InvalidRotation(err));
    }
    Ok(())
}

/// Modified-DH link transform `RotX(α_{i-1})·TransX(a_{i-1})·RotZ(θ)·TransZ(d)`
/// with `θ = q + offset` (the offset alone for fixed rows).
pub fn dh_transform(row: &DhRow, q: f64) -> Pose {
    let theta = match row.kind {
        JointKind::Revolute => q + row.theta_offset,
        JointKind::Fixed => row.theta_offset,
    };
    let (st, ct) = theta.sin_cos();
    let (sa, ca) = row.alpha_prev.sin_cos();
    Pose {
        rotation: Matrix3::new(ct, -st, 0.0, st * ca, ct * ca, -sa, st * sa, ct * sa, ca),
        position: Vector3::new(row.a_prev, -sa * row.d, ca * row.d),
    }
}

/// Base-to-tool pose for joint angles `q` (one per revolute row).
pub fn forward_kinematics(chain: &KinematicChain, q: &[f64]) -> Result<Pose> {
    if q.len() != chain.dof() {
        return Err(Error::Shape(format!("{} joint angles for a {}-joint chain", q.len(), chain.dof())));
    }
    let mut joints = q.iter();
    let mut pose = Pose::identity();
    for row in &chain.rows {
        let qi = match row.kind {
            JointKind::Revolute => *joints.next().expect("length checked"),
            JointKind::Fixed => 0.0,
        };
        pose = pose.compose(&dh_transform(row, qi));
    }
    Ok(pose)
}

/// `Rz(γ)·Ry(β)·Rx(α)` written out entry by entry.
pub fn rotation_from_euler(alpha: f64, beta: f64, gamma: f64) -> Matrix3<f64> {
    let (sa, ca) = alpha.sin_cos();
    let (sb, cb) = beta.sin_cos();
    let (sg, cg) = gamma.sin_cos();
    Matrix3::new(
        cb * cg,
        cg * sa * sb - ca * sg,
        sa * sg + ca * cg * sb,
        cb * sg,
        ca * cg + sa * sg * sb,
        ca * sb * sg - cg * sa,
        -sb,
        cb * sa,
        ca * cb,
    )
}

const GIMBAL_TOL: f64 = 1e-9;

/// Inverse of [`rotation_from_euler`] with `β ∈ [-π/2, π/2]`.
///
/// At gimbal lock (`|t31| ≥ 1 - 1e-9`) `γ` is set to zero and the free
/// rotation is carried by `α`.
pub fn euler_from_rotation(r: &Matrix3<f64>) -> Result<(f64, f64, f64)> {
    check_rotation(r)?;
    let t31 = r[(2, 0)].clamp(-1.0, 1.0);
    let beta = -t31.asin();
    if t31.abs() >= 1.0 - GIMBAL_TOL {
        let alpha = (-t31 * r[(0, 1)]).atan2(r[(1, 1)]);
        return Ok((alpha, beta, 0.0));
    }
    let alpha = r[(2, 1)].atan2(r[(2, 2)]);
    let gamma = r[(1, 0)].atan2(r[(0, 0)]);
    Ok((alpha, beta, gamma))
}

const ZERO_ANGLE: f64 = 1e-8;
const PI_BAND: f64 = 1e-6;

/// Orientation error `K̂θ` of `D = A_desired·A_currentᵀ`.
///
/// `θ` is evaluated as `atan2(‖v‖, tr D - 1)` with `v` the skew part of `D`,
/// which equals `arccos((tr D - 1)/2)` but keeps full precision for small
/// angles. Below `1e-8` the error is zero; within `1e-6` of `π` the axis
/// comes from the symmetric part `(D + Dᵀ)/2 + I`.
pub fn angle_axis_error(a_desired: &Matrix3<f64>, a_current: &Matrix3<f64>) -> Result<Vector3<f64>> {
    check_rotation(a_desired)?;
    check_rotation(a_current)?;
    let d = a_desired * a_current.transpose();
    let v = Vector3::new(d[(2, 1)] - d[(1, 2)], d[(0, 2)] - d[(2, 0)], d[(1, 0)] - d[(0, 1)]);
    let theta = v.norm().atan2(d.trace() - 1.0);
    if theta < ZERO_ANGLE {
        return Ok(Vector3::zeros());
    }
    if PI - theta < PI_BAND {
        let sym = (d + d.transpose()) * 0.5 + Matrix3::identity();
        let c = (0..3)
            .max_by(|&i, &j| sym[(i, i)].total_cmp(&sym[(j, j)]))
            .expect("three columns");
        let mut axis = sym.column(c).into_owned();
        axis /= axis.norm();
        if axis.dot(&v) < 0.0 {
            axis = -axis;
        }
        return Ok(axis * theta);
    }
    Ok(v / v.norm() * theta)
}

const JACOBIAN_STEP: f64 = 1e-6;

/// `6 × n` Jacobian of `q ↦ [position; orientation]` by central differences.
/// Orientation columns are `angle_axis_error(R(q+h), R(q-h)) / 2h`.
pub fn task_jacobian(chain: &KinematicChain, q: &[f64]) -> Result<DMatrix<f64>> {
    let n = chain.dof();
    if q.len() != n {
        return Err(Error::Shape(format!("{} joint angles for a {n}-joint chain", q.len())));
    }
    let h = JACOBIAN_STEP;
    let mut jac = DMatrix::zeros(6, n);
    let mut qp = q.to_vec();
    for j in 0..n {
        qp[j] = q[j] + h;
        let plus = forward_kinematics(chain, &qp)?;
        qp[j] = q[j] - h;
        let minus = forward_kinematics(chain, &qp)?;
        qp[j] = q[j];
        let dp = (plus.position - minus.position) / (2.0 * h);
        let dr = angle_axis_error(&plus.rotation, &minus.rotation)? / (2.0 * h);
        jac.fixed_view_mut::<3, 1>(0, j).copy_from(&dp);
        jac.fixed_view_mut::<3, 1>(3, j).copy_from(&dr);
    }
    Ok(jac)
}

/// Task error `[p* - p; K̂θ]` of `current` relative to `target`.
pub fn task_error(target: &Pose, current: &Pose) -> Result<DVector<f64>> {
    let dp = target.position - current.position;
    let dr = angle_axis_error(&target.rotation, &current.rotation)?;
    Ok(DVector::from_iterator(6, dp.iter().chain(dr.iter()).copied()))
}

/// One damped least-squares step toward `target`.
#[derive(Debug, Clone, PartialEq)]
pub struct IkStep {
    pub delta_q: DVector<f64>,
    pub condition_number: f64,
    pub lambda: f64,
    pub jacobian: DMatrix<f64>,
}

/// Solves `[ΦᵀΦ + λI]Δq = Φᵀe` with `λ` from the condition number of `Φ`.
pub fn ik_step(chain: &KinematicChain, q: &[f64], target: &Pose) -> Result<IkStep> {
    let current = forward_kinematics(chain, q)?;
    let e = task_error(target, &current)?;
    let jac = task_jacobian(chain, q)?;
    let cond = condition_number(&jac);
    let lambda = scheduled_lambda(cond);
    let delta_q = damped_least_squares(&jac, &DVector::from_element(q.len(), lambda), &e)?;
    Ok(IkStep {
        delta_q,
        condition_number: cond,
        lambda,
        jacobian: jac,
    })
}

/// Position tolerance of [`ik_solve`], mm.
pub const IK_POSITION_TOL: f64 = 1e-3;
/// Orientation tolerance of [`ik_solve`], rad.
pub const IK_ORIENTATION_TOL: f64 = 1e-6;
/// Iteration cap used by the examples.
pub const IK_DEFAULT_CAP: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct IkResult {
    pub q: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Largest condition number met; NaN when no step was taken.
    pub max_condition: f64,
    pub lambda_trace: Vec<f64>,
    pub position_error: f64,
    pub orientation_error: f64,
    /// Jacobian of the last step taken, if any.
    pub last_jacobian: Option<DMatrix<f64>>,
}

fn errors(chain: &KinematicChain, q: &[f64], target: &Pose) -> Result<(f64, f64)> {
    let e = task_error(target, &forward_kinematics(chain, q)?)?;
    Ok((e.rows(0, 3).norm(), e.rows(3, 3).norm()))
}

/// Iterates [`ik_step`] from `q_seed` until the position error is below
/// 1e-3 mm and the orientation error below 1e-6 rad, or `cap` steps.
pub fn ik_solve(chain: &KinematicChain, q_seed: &[f64], target: &Pose, cap: usize) -> Result<IkResult> {
    let mut q = DVector::from_column_slice(q_seed);
    let (mut pos_err, mut rot_err) = errors(chain, q.as_slice(), target)?;
    let mut iterations = 0;
    let mut max_condition = f64::NAN;
    let mut lambda_trace = Vec::new();
    let mut last_jacobian = None;
    while !(pos_err < IK_POSITION_TOL && rot_err < IK_ORIENTATION_TOL) && iterations < cap {
        let step = ik_step(chain, q.as_slice(), target)?;
        q += &step.delta_q;
        iterations += 1;
        max_condition = if max_condition.is_nan() {
            step.condition_number
        } else {
            max_condition.max(step.condition_number)
        };
        lambda_trace.push(step.lambda);
        last_jacobian = Some(step.jacobian);
        (pos_err, rot_err) = errors(chain, q.as_slice(), target)?;
    }
    Ok(IkResult {
        q,
        iterations,
        converged: pos_err < IK_POSITION_TOL && rot_err < IK_ORIENTATION_TOL,
        max_condition,
        lambda_trace,
        position_error: pos_err,
        orientation_error: rot_err,
        last_jacobian,
    })
}

/// Joint vector of frame A in the tracking example.
pub fn frame_a() -> [f64; 6] {
    [-PI / 2.0, 0.0, 0.0, 0.0, -PI / 2.0, 0.0]
}

/// Joint vector of frame C in the tracking example.
pub fn frame_c() -> [f64; 6] {
    [PI / 2.0, 0.0, 0.0, 0.0, PI / 2.0, 0.0]
}

/// First line of every tracking CSV.
pub const TRACKING_SCHEMA: &str = "# mfac tracking v1";

/// One path sample solved by [`ik_solve`], seeded with the previous solution.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingRow {
    pub t: f64,
    pub target: TaskVector,
    pub achieved: TaskVector,
    pub position_error: f64,
    pub orientation_error: f64,
    pub q: DVector<f64>,
    /// Condition number of the Jacobian at the solution.
    pub condition_number: f64,
    /// Last damping applied, or the scheduled value at the solution when no
    /// step was needed.
    pub lambda: f64,
    pub lambda_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub jacobian_diagonal: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrackingLog {
    pub rows: Vec<TrackingRow>,
}

/// Summary figures of a tracking run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingSummary {
    pub max_position_error: f64,
    pub max_orientation_error: f64,
    pub max_iterations: usize,
    pub max_condition: f64,
    pub unconverged: usize,
}

impl TrackingLog {
    pub fn summary(&self) -> TrackingSummary {
        let mut s = TrackingSummary {
            max_position_error: 0.0,
            max_orientation_error: 0.0,
            max_iterations: 0,
            max_condition: 0.0,
            unconverged: 0,
        };
        for r in &self.rows {
            s.max_position_error = s.max_position_error.max(r.position_error);
            s.max_orientation_error = s.max_orientation_error.max(r.orientation_error);
            s.max_iterations = s.max_iterations.max(r.iterations);
            s.max_condition = s.max_condition.max(r.condition_number);
            s.unconverged += usize::from(!r.converged);
        }
        s
    }

    /// Maximal runs of consecutive rows whose condition number exceeds
    /// `threshold`, as inclusive index ranges.
    pub fn ill_conditioned_intervals(&self, threshold: f64) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut start = None;
        for (i, r) in self.rows.iter().enumerate() {
            match (r.condition_number > threshold, start) {
                (true, None) => start = Some(i),
                (false, Some(s)) => {
                    out.push((s, i - 1));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            out.push((s, self.rows.len() - 1));
        }
        out
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{TRACKING_SCHEMA}")?;
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = ["t", "x_ref", "y_ref", "z_ref", "alpha_ref", "beta_ref", "gamma_ref"]
            .into_iter()
            .chain(["x", "y", "z", "alpha", "beta", "gamma", "pos_err", "orient_err"])
            .map(String::from)
            .collect();
        let dof = self.rows.first().map_or(0, |r| r.q.len());
        header.extend((1..=dof).map(|j| format!("q{j}")));
        header.extend(["cond", "lambda", "iters", "converged"].map(String::from));
        header.extend((1..=dof.min(6)).map(|j| format!("J{j}{j}")));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut row = vec![r.t.to_string()];
            row.extend(r.target.to_array().iter().map(|v| v.to_string()));
            row.extend(r.achieved.to_array().iter().map(|v| v.to_string()));
            row.push(r.position_error.to_string());
            row.push(r.orientation_error.to_string());
            row.extend(r.q.iter().map(|v| v.to_string()));
            row.push(r.condition_number.to_string());
            row.push(r.lambda.to_string());
            row.push(r.iterations.to_string());
            row.push(u8::from(r.converged).to_string());
            row.extend(r.jacobian_diagonal.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

/// Solves IK at every sample of `path`, each solve seeded with the previous
/// solution and the first with `q_seed`.
pub fn track_path(chain: &KinematicChain, q_seed: &[f64], path: &CartesianPath, cap: usize) -> Result<TrackingLog> {
    let mut q = DVector::from_column_slice(q_seed);
    let mut rows = Vec::with_capacity(path.len());
    for sample in &path.samples {
        let target = sample.task.pose();
        let res = ik_solve(chain, q.as_slice(), &target, cap)?;
        q = res.q.clone();
        let achieved = forward_kinematics(chain, q.as_slice())?;
        let jac = task_jacobian(chain, q.as_slice())?;
        let cond = condition_number(&jac);
        let lambda = res.lambda_trace.last().copied().unwrap_or_else(|| scheduled_lambda(cond));
        rows.push(TrackingRow {
            t: sample.t,
            target: sample.task,
            achieved: achieved.task_vector()?,
            position_error: res.position_error,
            orientation_error: res.orientation_error,
            q: res.q,
            condition_number: cond,
            lambda,
            lambda_trace: res.lambda_trace,
            iterations: res.iterations,
            converged: res.converged,
            jacobian_diagonal: (0..jac.nrows().min(jac.ncols())).map(|i| jac[(i, i)]).collect(),
        });
    }
    Ok(TrackingLog { rows })
}
