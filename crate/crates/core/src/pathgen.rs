//! Straight-line Cartesian paths with quintic timing.
//!
//! Position moves along the segment `p0 → pf` with arc length `S₁(t)`;
//! orientation follows the quaternion geodesic between the end frames with
//! arc `S₂(t)`. Both arcs are quintic polynomials matching position,
//! velocity and acceleration at `t = 0` and `t = tf`.

use std::io::Write;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::kinematics::TaskVector;

/// First line of every path CSV.
pub const PATH_SCHEMA: &str = "# mfac path v1";

/// `s(t) = a0 + a1 t + … + a5 t⁵` on `[0, tf]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuinticCoeffs {
    pub a: [f64; 6],
    pub tf: f64,
}

/// Quintic from `s(0) = 0`, `ṡ(0) = v0`, `s̈(0) = acc0` to `s(tf) = s_goal`,
/// `ṡ(tf) = vf`, `s̈(tf) = accf`.
pub fn quintic_solve(s_goal: f64, v0: f64, acc0: f64, vf: f64, accf: f64, tf: f64) -> Result<QuinticCoeffs> {
    if !(tf > 0.0) || !tf.is_finite() {
        return Err(Error::Range(format!("final time must be positive, got {tf}")));
    }
    let (t2, t3) = (tf * tf, tf * tf * tf);
    let t4 = t3 * tf;
    let t5 = t4 * tf;
    let a3 = (20.0 * s_goal - (8.0 * vf + 12.0 * v0) * tf - (3.0 * acc0 - accf) * t2) / (2.0 * t3);
    let a4 = (-30.0 * s_goal + (14.0 * vf + 16.0 * v0) * tf + (3.0 * acc0 - 2.0 * accf) * t2) / (2.0 * t4);
    let a5 = (12.0 * s_goal - 6.0 * (vf + v0) * tf - (acc0 - accf) * t2) / (2.0 * t5);
    Ok(QuinticCoeffs {
        a: [0.0, v0, acc0 / 2.0, a3, a4, a5],
        tf,
    })
}

/// `(s, ṡ, s̈)` at `t`, clamped to `[0, tf]`.
pub fn quintic_eval(c: &QuinticCoeffs, t: f64) -> (f64, f64, f64) {
    let t = t.clamp(0.0, c.tf);
    let a = &c.a;
    let s = a[0] + t * (a[1] + t * (a[2] + t * (a[3] + t * (a[4] + t * a[5]))));
    let sd = a[1] + t * (2.0 * a[2] + t * (3.0 * a[3] + t * (4.0 * a[4] + t * 5.0 * a[5])));
    let sdd = 2.0 * a[2] + t * (6.0 * a[3] + t * (12.0 * a[4] + t * 20.0 * a[5]));
    (s, sd, sdd)
}

/// `p0 + s·(pf - p0)/‖pf - p0‖`.
pub fn line_position(p0: &Vector3<f64>, pf: &Vector3<f64>, s: f64) -> Result<Vector3<f64>> {
    if s == 0.0 {
        return Ok(*p0);
    }
    let dir = pf - p0;
    let len = dir.norm();
    if len == 0.0 {
        return Err(Error::DegenerateDirection);
    }
    Ok(p0 + dir * (s / len))
}

/// Unit quaternion `(e1, e2, e3, e4)` with scalar part `e4 ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuaternion {
    e: [f64; 4],
}

impl UnitQuaternion {
    /// Normalizes and flips the sign so that `e4 ≥ 0`.
    pub fn new(e1: f64, e2: f64, e3: f64, e4: f64) -> Result<Self> {
        let n = (e1 * e1 + e2 * e2 + e3 * e3 + e4 * e4).sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::Numeric("quaternion of zero or non-finite norm".into()));
        }
        Ok(Self::canonical([e1 / n, e2 / n, e3 / n, e4 / n]))
    }

    pub fn identity() -> Self {
        Self { e: [0.0, 0.0, 0.0, 1.0] }
    }

    fn canonical(e: [f64; 4]) -> Self {
        if e[3] < 0.0 || (e[3] == 0.0 && e.iter().take(3).find(|v| **v != 0.0).is_some_and(|v| *v < 0.0)) {
            Self { e: e.map(|v| -v) }
        } else {
            Self { e }
        }
    }

    pub fn components(&self) -> [f64; 4] {
        self.e
    }

    pub fn vector(&self) -> Vector3<f64> {
        Vector3::new(self.e[0], self.e[1], self.e[2])
    }

    pub fn scalar(&self) -> f64 {
        self.e[3]
    }

    pub fn inverse(&self) -> Self {
        Self::canonical([-self.e[0], -self.e[1], -self.e[2], self.e[3]])
    }

    /// Hamilton product `self · other`.
    pub fn mul(&self, other: &Self) -> Self {
        let (v1, s1) = (self.vector(), self.scalar());
        let (v2, s2) = (other.vector(), other.scalar());
        let v = v2 * s1 + v1 * s2 + v1.cross(&v2);
        let s = s1 * s2 - v1.dot(&v2);
        let n = (v.norm_squared() + s * s).sqrt();
        Self::canonical([v.x / n, v.y / n, v.z / n, s / n])
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        let [x, y, z, w] = self.e;
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - z * w),
            2.0 * (x * z + y * w),
            2.0 * (x * y + z * w),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - x * w),
            2.0 * (x * z - y * w),
            2.0 * (y * z + x * w),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    /// Rotation angle `2·∠(e4, ‖e_vec‖)`, in `[0, π]`.
    pub fn angle(&self) -> f64 {
        2.0 * self.vector().norm().atan2(self.scalar())
    }
}

/// Quaternion of `Rz(γ)·Ry(β)·Rx(α)` from half-angle products.
pub fn euler_to_quat(alpha: f64, beta: f64, gamma: f64) -> UnitQuaternion {
    let (sa, ca) = (alpha / 2.0).sin_cos();
    let (sb, cb) = (beta / 2.0).sin_cos();
    let (sg, cg) = (gamma / 2.0).sin_cos();
    UnitQuaternion::new(
        sa * cb * cg - ca * sb * sg,
        ca * sb * cg + sa * cb * sg,
        ca * cb * sg - sa * sb * cg,
        ca * cb * cg + sa * sb * sg,
    )
    .expect("half-angle products have unit norm")
}

/// Euler triple `(α, β, γ)` of a unit quaternion.
pub fn quat_to_euler(q: &UnitQuaternion) -> (f64, f64, f64) {
    let [e1, e2, e3, e4] = q.e;
    let alpha = (2.0 * (e4 * e1 + e2 * e3)).atan2(1.0 - 2.0 * (e1 * e1 + e2 * e2));
    let beta = (2.0 * (e4 * e2 - e3 * e1)).clamp(-1.0, 1.0).asin();
    let gamma = (2.0 * (e4 * e3 + e1 * e2)).atan2(1.0 - 2.0 * (e2 * e2 + e3 * e3));
    (alpha, beta, gamma)
}

/// `q0·(q0⁻¹·qf)^τ` along the short arc.
pub fn quat_geodesic(q0: &UnitQuaternion, qf: &UnitQuaternion, tau: f64) -> UnitQuaternion {
    let r = q0.inverse().mul(qf);
    let a = r.vector().norm().atan2(r.scalar());
    if a < 1e-8 {
        return *q0;
    }
    let scale = (a * tau).sin() / a.sin();
    let v = r.vector() * scale;
    let power = UnitQuaternion::canonical([v.x, v.y, v.z, (a * tau).cos()]);
    q0.mul(&power)
}

/// Rotation angle between two frames, `2·arccos` of the scalar part of
/// `q0⁻¹·qf` on the short arc.
pub fn orientation_arc_length(q0: &UnitQuaternion, qf: &UnitQuaternion) -> f64 {
    q0.inverse().mul(qf).angle()
}

/// Speed and acceleration at both ends of one arc.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ArcBoundary {
    pub v0: f64,
    pub acc0: f64,
    pub vf: f64,
    pub accf: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSpec {
    pub start: TaskVector,
    pub goal: TaskVector,
    pub tf: f64,
    pub t0: f64,
    pub position: ArcBoundary,
    pub orientation: ArcBoundary,
}

impl PathSpec {
    /// Rest-to-rest path.
    pub fn rest_to_rest(start: TaskVector, goal: TaskVector, tf: f64, t0: f64) -> Self {
        Self {
            start,
            goal,
            tf,
            t0,
            position: ArcBoundary::default(),
            orientation: ArcBoundary::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    pub t: f64,
    pub task: TaskVector,
}

/// Time-stamped task vectors sampled every `T0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CartesianPath {
    pub samples: Vec<PathSample>,
    pub t0: f64,
}

impl CartesianPath {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{PATH_SCHEMA}")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "x", "y", "z", "alpha", "beta", "gamma"])?;
        for s in &self.samples {
            let mut row = vec![s.t.to_string()];
            row.extend(s.task.to_array().iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

/// Samples `k = 0..=⌈tf/T0⌉` of the straight-line path; the first and last
/// samples are the start and goal task vectors exactly.
pub fn generate_path(spec: &PathSpec) -> Result<CartesianPath> {
    if !(spec.t0 > 0.0) || spec.t0 > spec.tf {
        return Err(Error::Range(format!(
            "sample period must satisfy 0 < T0 ≤ tf (T0 = {}, tf = {})",
            spec.t0, spec.tf
        )));
    }
    let p0 = spec.start.position();
    let pf = spec.goal.position();
    let s1_goal = (pf - p0).norm();
    let q0 = euler_to_quat(spec.start.alpha, spec.start.beta, spec.start.gamma);
    let qf = euler_to_quat(spec.goal.alpha, spec.goal.beta, spec.goal.gamma);
    let s2_goal = orientation_arc_length(&q0, &qf);

    let b1 = spec.position;
    let b2 = spec.orientation;
    let s1 = quintic_solve(s1_goal, b1.v0, b1.acc0, b1.vf, b1.accf, spec.tf)?;
    let s2 = quintic_solve(s2_goal, b2.v0, b2.acc0, b2.vf, b2.accf, spec.tf)?;

    let n = (spec.tf / spec.t0 - 1e-9).ceil().max(1.0) as usize;
    let mut samples = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let t = (k as f64 * spec.t0).min(spec.tf);
        let task = if k == 0 {
            spec.start
        } else if k == n {
            spec.goal
        } else {
            let (s, _, _) = quintic_eval(&s1, t);
            let p = if s1_goal > 0.0 { line_position(&p0, &pf, s)? } else { p0 };
            let q = if s2_goal > 0.0 {
                quat_geodesic(&q0, &qf, quintic_eval(&s2, t).0 / s2_goal)
            } else {
                q0
            };
            let (alpha, beta, gamma) = quat_to_euler(&q);
            TaskVector {
                x: p.x,
                y: p.y,
                z: p.z,
                alpha,
                beta,
                gamma,
            }
        };
        samples.push(PathSample { t, task });
    }
    Ok(CartesianPath { samples, t0: spec.t0 })
}
