//! Instantaneous closed-loop analysis of the MFAC loop.
//!
//! With the PJM frozen at time `k` and a uniform weighting `λ·I`, the loop
//! formed by the linearized plant and the unconstrained law satisfies
//! `T(z⁻¹) y(k+1) = φ_Lu(z⁻¹) Φ_{Ly+1}ᵀ y*(k+1)` with
//! `T = λ(1 - z⁻¹)[I - z⁻¹φ_Ly(z⁻¹)] + φ_Lu(z⁻¹) Φ_{Ly+1}ᵀ`. Its determinant
//! gives the closed-loop poles and its value at `z = 1` the static errors.

use nalgebra::{Complex, DMatrix, DVector};

use crate::controller::Weighting;
use crate::edlm::PseudoJacobian;
use crate::error::{Error, Result};

/// Polynomial in `z⁻¹`; `coeffs[i]` multiplies `z⁻ⁱ`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Poly {
    coeffs: Vec<f64>,
}

impl Poly {
    /// Builds a polynomial, trimming exact trailing zeros.
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![c])
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    /// Value at `z⁻¹ = w`.
    pub fn eval(&self, w: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * w + c)
    }

    pub fn eval_complex(&self, w: Complex<f64>) -> Complex<f64> {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex::new(0.0, 0.0), |acc, &c| acc * w + c)
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let n = self.coeffs.len().max(other.coeffs.len());
        let c = (0..n)
            .map(|i| self.coeffs.get(i).unwrap_or(&0.0) + other.coeffs.get(i).unwrap_or(&0.0))
            .collect();
        Poly::new(c)
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Poly {
        Poly::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        if self.is_zero() || other.is_zero() {
            return Poly::zero();
        }
        let mut c = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                c[i + j] += a * b;
            }
        }
        Poly::new(c)
    }
}

/// Rectangular grid of [`Poly`] entries.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Poly>,
}

impl PolyMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![Poly::zero(); rows * cols],
        }
    }

    /// From row-major entries.
    pub fn from_entries(rows: usize, cols: usize, entries: Vec<Poly>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} entries for a {rows}x{cols} polynomial matrix",
                entries.len()
            )));
        }
        if entries.iter().any(|p| p.coeffs.iter().any(|c| !c.is_finite())) {
            return Err(Error::Numeric("polynomial matrix entries must be finite".into()));
        }
        Ok(Self { rows, cols, entries })
    }

    /// `Σ_i M_i z⁻ⁱ` from matrix coefficients of equal shape.
    pub fn from_matrix_coeffs(coeffs: &[DMatrix<f64>]) -> Result<Self> {
        let (rows, cols) = coeffs.first().map(|m| m.shape()).unwrap_or((0, 0));
        if coeffs.iter().any(|m| m.shape() != (rows, cols)) {
            return Err(Error::Shape("matrix coefficients differ in shape".into()));
        }
        let entries = (0..rows * cols)
            .map(|idx| Poly::new(coeffs.iter().map(|m| m[(idx / cols, idx % cols)]).collect()))
            .collect();
        Self::from_entries(rows, cols, entries)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> &Poly {
        &self.entries[r * self.cols + c]
    }

    fn set(&mut self, r: usize, c: usize, p: Poly) {
        self.entries[r * self.cols + c] = p;
    }

    pub fn eval(&self, w: f64) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |r, c| self.get(r, c).eval(w))
    }

    pub fn eval_complex(&self, w: Complex<f64>) -> DMatrix<Complex<f64>> {
        DMatrix::from_fn(self.rows, self.cols, |r, c| self.get(r, c).eval_complex(w))
    }

    pub fn add(&self, other: &PolyMatrix) -> Result<PolyMatrix> {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(Error::Shape("polynomial matrix sum of different shapes".into()));
        }
        let entries = self.entries.iter().zip(&other.entries).map(|(a, b)| a.add(b)).collect();
        Ok(PolyMatrix {
            rows: self.rows,
            cols: self.cols,
            entries,
        })
    }

    pub fn mul(&self, other: &PolyMatrix) -> Result<PolyMatrix> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = PolyMatrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for c in 0..other.cols {
                let mut acc = Poly::zero();
                for k in 0..self.cols {
                    acc = acc.add(&self.get(r, k).mul(other.get(k, c)));
                }
                out.set(r, c, acc);
            }
        }
        Ok(out)
    }

    pub fn scale_poly(&self, p: &Poly) -> PolyMatrix {
        PolyMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|e| e.mul(p)).collect(),
        }
    }

    fn max_row_degrees(&self) -> usize {
        (0..self.rows)
            .map(|r| (0..self.cols).filter_map(|c| self.get(r, c).degree()).max().unwrap_or(0))
            .sum()
    }
}

/// Closed-loop root locations for one frozen PJM.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    /// Roots of `det T` in the `z` variable.
    pub characteristic_roots: Vec<Complex<f64>>,
    pub stable: bool,
    /// `1 - max|root|`; 1 when there are no roots.
    pub margin: f64,
}

impl StabilityReport {
    pub fn max_root(&self) -> f64 {
        1.0 - self.margin
    }
}

const STABILITY_TOL: f64 = 1e-9;
const COFACTOR_LIMIT: usize = 8;

fn uniform_lambda(pjm: &PseudoJacobian, w: &Weighting) -> Result<f64> {
    if pjm.mu() != pjm.my() {
        return Err(Error::Shape(format!(
            "closed-loop analysis needs a square loop, got My={} and Mu={}",
            pjm.my(),
            pjm.mu()
        )));
    }
    if w.len() != pjm.mu() {
        return Err(Error::Shape(format!("weighting has {} entries, expected {}", w.len(), pjm.mu())));
    }
    w.uniform_value().ok_or(Error::NonUniformWeighting)
}

/// `φ_Ly(z⁻¹) = Φ₁ + Φ₂z⁻¹ + …`; the zero matrix when `Ly = 0`.
pub fn output_polynomial(pjm: &PseudoJacobian) -> Result<PolyMatrix> {
    if pjm.output_blocks().is_empty() {
        return Ok(PolyMatrix::zeros(pjm.my(), pjm.my()));
    }
    PolyMatrix::from_matrix_coeffs(pjm.output_blocks())
}

/// `φ_Lu(z⁻¹) = Φ_{Ly+1} + Φ_{Ly+2}z⁻¹ + …`.
pub fn input_polynomial(pjm: &PseudoJacobian) -> Result<PolyMatrix> {
    PolyMatrix::from_matrix_coeffs(pjm.input_blocks())
}

/// `T = λ(1 - z⁻¹)[I - z⁻¹φ_Ly(z⁻¹)] + φ_Lu(z⁻¹)Φ_{Ly+1}ᵀ`.
///
/// Requires `Mu = My` and a uniform weighting.
pub fn closed_loop_matrix(pjm: &PseudoJacobian, w: &Weighting) -> Result<PolyMatrix> {
    let lambda = uniform_lambda(pjm, w)?;
    let n = pjm.my();
    let shift = Poly::new(vec![0.0, 1.0]);
    let identity = PolyMatrix::from_matrix_coeffs(&[DMatrix::identity(n, n)])?;
    let feedback = identity.add(&output_polynomial(pjm)?.scale_poly(&shift.scale(-1.0)))?;
    let damping = feedback.scale_poly(&Poly::new(vec![lambda, -lambda]));
    let bt = PolyMatrix::from_matrix_coeffs(&[pjm.leading_input_block().transpose()])?;
    let forward = input_polynomial(pjm)?.mul(&bt)?;
    damping.add(&forward)
}

/// Determinant polynomial of a square polynomial matrix.
///
/// Exact cofactor expansion up to 8×8; larger matrices are evaluated at
/// roots of unity and interpolated.
pub fn determinant(pm: &PolyMatrix) -> Result<Poly> {
    if pm.rows != pm.cols {
        return Err(Error::Shape(format!("determinant of a {}x{} matrix", pm.rows, pm.cols)));
    }
    if pm.rows == 0 {
        return Ok(Poly::constant(1.0));
    }
    if pm.rows <= COFACTOR_LIMIT {
        let idx: Vec<usize> = (0..pm.rows).collect();
        Ok(cofactor(pm, 0, &idx))
    } else {
        Ok(interpolated_determinant(pm))
    }
}

fn cofactor(pm: &PolyMatrix, row: usize, cols: &[usize]) -> Poly {
    if cols.len() == 1 {
        return pm.get(row, cols[0]).clone();
    }
    let mut acc = Poly::zero();
    for (pos, &c) in cols.iter().enumerate() {
        let entry = pm.get(row, c);
        if entry.is_zero() {
            continue;
        }
        let rest: Vec<usize> = cols.iter().copied().filter(|&x| x != c).collect();
        let term = entry.mul(&cofactor(pm, row + 1, &rest));
        acc = if pos % 2 == 0 { acc.add(&term) } else { acc.sub(&term) };
    }
    acc
}

fn interpolated_determinant(pm: &PolyMatrix) -> Poly {
    let n = pm.max_row_degrees() + 1;
    let samples: Vec<Complex<f64>> = (0..n)
        .map(|j| {
            let w = Complex::from_polar(1.0, 2.0 * std::f64::consts::PI * j as f64 / n as f64);
            pm.eval_complex(w).determinant()
        })
        .collect();
    let coeffs = (0..n)
        .map(|i| {
            let s: Complex<f64> = samples
                .iter()
                .enumerate()
                .map(|(j, v)| v * Complex::from_polar(1.0, -2.0 * std::f64::consts::PI * (i * j) as f64 / n as f64))
                .sum();
            s.re / n as f64
        })
        .collect();
    Poly::new(coeffs)
}

/// Roots of `det T` in `z` and their classification.
///
/// `det T(z⁻¹)` of degree `d` is multiplied by `zᵈ` and solved through the
/// companion matrix. A vanishing constant coefficient means a root at
/// infinity and is reported as unstable.
pub fn stability_check(pm: &PolyMatrix) -> Result<StabilityReport> {
    let det = determinant(pm)?;
    let scale = det.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if det.is_zero() || scale == 0.0 {
        return Err(Error::DegenerateLoop);
    }
    let d = det.degree().unwrap_or(0);
    if d == 0 {
        return Ok(StabilityReport {
            characteristic_roots: Vec::new(),
            stable: true,
            margin: 1.0,
        });
    }
    let c = &det.coeffs;
    if c[0].abs() <= 1e-14 * scale {
        return Ok(StabilityReport {
            characteristic_roots: vec![Complex::new(f64::INFINITY, 0.0)],
            stable: false,
            margin: f64::NEG_INFINITY,
        });
    }
    // z-polynomial c0 zᵈ + c1 zᵈ⁻¹ + … + cd, made monic
    let mut companion = DMatrix::zeros(d, d);
    for j in 0..d {
        companion[(0, j)] = -c[j + 1] / c[0];
    }
    for i in 1..d {
        companion[(i, i - 1)] = 1.0;
    }
    let roots: Vec<Complex<f64>> = companion.complex_eigenvalues().iter().copied().collect();
    let max_root = roots.iter().map(|r| r.norm()).fold(0.0, f64::max);
    Ok(StabilityReport {
        characteristic_roots: roots,
        stable: max_root < 1.0 - STABILITY_TOL,
        margin: 1.0 - max_root,
    })
}

fn stable_loop(pjm: &PseudoJacobian, w: &Weighting) -> Result<(PolyMatrix, DMatrix<f64>)> {
    let t = closed_loop_matrix(pjm, w)?;
    let report = stability_check(&t)?;
    if !report.stable {
        return Err(Error::Unstable {
            max_root: report.max_root(),
        });
    }
    let t1 = t.eval(1.0);
    let inv = t1
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("T(1) is not invertible".into()))?;
    Ok((t, inv))
}

/// Static error of the unit-ramp response on every output,
/// `T(1)⁻¹ λ [I - φ_Ly(1)] Ts · 1`.
pub fn ramp_static_error(pjm: &PseudoJacobian, w: &Weighting, ts: f64) -> Result<DVector<f64>> {
    let lambda = uniform_lambda(pjm, w)?;
    let (_, t1_inv) = stable_loop(pjm, w)?;
    let n = pjm.my();
    let phi_y = output_polynomial(pjm)?.eval(1.0);
    let e = t1_inv * (DMatrix::identity(n, n) - phi_y) * (lambda * ts) * DVector::from_element(n, 1.0);
    Ok(e)
}

/// Static error of the unit-step response on every output,
/// `(I - T(1)⁻¹ φ_Lu(1) Φ_{Ly+1}ᵀ) · 1`.
pub fn step_static_error(pjm: &PseudoJacobian, w: &Weighting) -> Result<DVector<f64>> {
    let (_, t1_inv) = stable_loop(pjm, w)?;
    let n = pjm.my();
    let forward = input_polynomial(pjm)?.eval(1.0) * pjm.leading_input_block().transpose();
    Ok((DMatrix::identity(n, n) - t1_inv * forward) * DVector::from_element(n, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn scalar(out: &[f64], inp: &[f64]) -> PseudoJacobian {
        PseudoJacobian::new(
            1,
            1,
            out.iter().map(|&v| dmatrix![v]).collect(),
            inp.iter().map(|&v| dmatrix![v]).collect(),
        )
        .unwrap()
    }

    fn w(l: f64, n: usize) -> Weighting {
        Weighting::uniform(l, n).unwrap()
    }

    fn assert_poly(p: &Poly, expected: &[f64]) {
        assert_eq!(p.coeffs().len(), expected.len(), "{p:?} vs {expected:?}");
        for (a, b) in p.coeffs().iter().zip(expected) {
            assert!((a - b).abs() < 1e-14, "{p:?} vs {expected:?}");
        }
    }

    #[test]
    fn poly_trims_and_multiplies() {
        assert_eq!(Poly::new(vec![1.0, 0.0, 0.0]).degree(), Some(0));
        assert!(Poly::new(vec![0.0]).is_zero());
        let p = Poly::new(vec![1.0, -1.0]).mul(&Poly::new(vec![1.0, 1.0]));
        assert_poly(&p, &[1.0, 0.0, -1.0]);
        assert_eq!(p.eval(2.0), -3.0);
    }

    #[test]
    fn scalar_closed_loops() {
        let b = 1.3;
        let t = closed_loop_matrix(&scalar(&[], &[b]), &w(0.0, 1)).unwrap();
        assert_poly(t.get(0, 0), &[b * b]);

        let t = closed_loop_matrix(&scalar(&[], &[b]), &w(0.2, 1)).unwrap();
        assert_poly(t.get(0, 0), &[0.2 + b * b, -0.2]);

        // λ(1 - w)(1 - a w) + b²
        let (a, l) = (0.4, 0.3);
        let t = closed_loop_matrix(&scalar(&[a], &[b]), &w(l, 1)).unwrap();
        assert_poly(t.get(0, 0), &[l + b * b, -l * (1.0 + a), l * a]);
    }

    #[test]
    fn non_square_and_non_uniform_rejected() {
        let pjm = PseudoJacobian::new(1, 2, vec![], vec![dmatrix![1.0, 0.5]]).unwrap();
        assert!(matches!(closed_loop_matrix(&pjm, &w(0.1, 2)), Err(Error::Shape(_))));
        let pjm = PseudoJacobian::new(2, 2, vec![], vec![DMatrix::identity(2, 2)]).unwrap();
        let nw = Weighting::new(DVector::from_vec(vec![0.1, 0.2])).unwrap();
        assert!(matches!(closed_loop_matrix(&pjm, &nw), Err(Error::NonUniformWeighting)));
    }

    #[test]
    fn determinant_small_cases() {
        let one = PolyMatrix::from_entries(1, 1, vec![Poly::new(vec![2.0, 3.0])]).unwrap();
        assert_poly(&determinant(&one).unwrap(), &[2.0, 3.0]);
        let id = PolyMatrix::from_matrix_coeffs(&[DMatrix::identity(2, 2)]).unwrap();
        assert_poly(&determinant(&id).unwrap(), &[1.0]);
        assert!(determinant(&PolyMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn determinant_paths_agree() {
        // 3x3 with degree-2 entries, exact vs interpolated
        let coeffs = [
            dmatrix![1.0, 0.2, -0.3; 0.5, 2.0, 0.1; -0.4, 0.3, 1.5],
            dmatrix![0.1, -0.7, 0.2; 0.3, 0.4, -0.6; 0.9, 0.05, 0.2],
            dmatrix![-0.2, 0.3, 0.8; 0.0, -0.1, 0.4; 0.6, 0.2, -0.5],
        ];
        let pm = PolyMatrix::from_matrix_coeffs(&coeffs).unwrap();
        let exact = determinant(&pm).unwrap();
        let interp = interpolated_determinant(&pm);
        for i in 0..7 {
            let a = exact.coeffs().get(i).copied().unwrap_or(0.0);
            let b = interp.coeffs().get(i).copied().unwrap_or(0.0);
            assert!((a - b).abs() < 1e-10, "coefficient {i}: {a} vs {b}");
        }
    }

    #[test]
    fn stability_examples() {
        let r = stability_check(&closed_loop_matrix(&scalar(&[], &[1.0]), &w(0.0, 1)).unwrap()).unwrap();
        assert!(r.stable && r.characteristic_roots.is_empty() && r.margin == 1.0);

        let r = stability_check(&closed_loop_matrix(&scalar(&[], &[1.0]), &w(0.2, 1)).unwrap()).unwrap();
        assert!(r.stable);
        assert_eq!(r.characteristic_roots.len(), 1);
        assert!((r.characteristic_roots[0] - Complex::new(1.0 / 6.0, 0.0)).norm() < 1e-12);

        let t = PolyMatrix::from_entries(1, 1, vec![Poly::new(vec![1.0, -2.0])]).unwrap();
        let r = stability_check(&t).unwrap();
        assert!(!r.stable);
        assert!((r.characteristic_roots[0].re - 2.0).abs() < 1e-12);

        assert!(matches!(stability_check(&PolyMatrix::zeros(1, 1)), Err(Error::DegenerateLoop)));
    }

    #[test]
    fn unit_circle_root_is_unstable() {
        let t = PolyMatrix::from_entries(1, 1, vec![Poly::new(vec![1.0, -1.0])]).unwrap();
        assert!(!stability_check(&t).unwrap().stable);
    }

    #[test]
    fn ramp_error_scalar() {
        let e = ramp_static_error(&scalar(&[], &[1.0]), &w(0.0, 1), 1.0).unwrap();
        assert_eq!(e[0], 0.0);
        // T(1) = b² = 1, so e = λ
        let e = ramp_static_error(&scalar(&[], &[1.0]), &w(0.2, 1), 1.0).unwrap();
        assert!((e[0] - 0.2).abs() < 1e-14);
        let e2 = ramp_static_error(&scalar(&[], &[1.0]), &w(0.4, 1), 1.0).unwrap();
        assert!(e2[0] > e[0]);
        let e3 = ramp_static_error(&scalar(&[], &[1.0]), &w(0.2, 1), 0.5).unwrap();
        assert!((e3[0] - 0.1).abs() < 1e-14);
    }

    #[test]
    fn ramp_error_matches_direct_simulation() {
        // y(k+1) = y(k) + b Δu(k), Δu = b(y*(k+1) - y(k)) / (b² + λ), y* = k
        let (b, l) = (0.8, 0.3);
        let mut y = 0.0;
        let mut e = 0.0;
        for k in 0..2000 {
            let target = (k + 1) as f64;
            let du = b * (target - y) / (b * b + l);
            y += b * du;
            e = target - y;
        }
        let analytic = ramp_static_error(&scalar(&[], &[b]), &w(l, 1), 1.0).unwrap();
        assert!((analytic[0] - e).abs() < 1e-9, "{} vs {e}", analytic[0]);
    }

    #[test]
    fn step_error_vanishes() {
        for l in [0.0, 0.2] {
            let e = step_static_error(&scalar(&[], &[1.0]), &w(l, 1)).unwrap();
            assert!(e[0].abs() < 1e-15);
        }
        let pjm = PseudoJacobian::new(
            2,
            2,
            vec![dmatrix![0.2, 0.1; 0.0, 0.3]],
            vec![dmatrix![1.0, 0.3; 0.2, 0.9]],
        )
        .unwrap();
        assert!(step_static_error(&pjm, &w(0.1, 2)).unwrap().amax() < 1e-12);
    }

    #[test]
    fn unstable_loop_refused() {
        // root z = (λ - b c)/(λ + b²) = (0 + 1.5)/1 outside the circle
        let pjm = scalar(&[], &[1.0, -1.5]);
        assert!(matches!(ramp_static_error(&pjm, &w(0.0, 1), 1.0), Err(Error::Unstable { .. })));
    }
}
