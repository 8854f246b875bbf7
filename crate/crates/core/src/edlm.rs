//! Full-form equivalent dynamic linearization of a MIMO plant.
//!
//! A plant `y(k+1) = f(y(k), …, y(k-ny), u(k), …, u(k-nu))` is described
//! incrementally as `Δy(k+1) = φ_Lᵀ(k) ΔH(k)`, where `ΔH(k)` stacks the most
//! recent `Ly` output increments and `Lu` input increments and `φ_Lᵀ(k)` is
//! the pseudo-Jacobian matrix (PJM). For `Ly = ny+1`, `Lu = nu+1` the PJM is
//! the model Jacobian evaluated at `φ(k-1)` plus higher-order corrections
//! that vanish with the increments.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Sizes and pseudo orders of a linearized plant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dimensions {
    my: usize,
    mu: usize,
    ly: usize,
    lu: usize,
    ny: Option<usize>,
    nu: Option<usize>,
}

impl Dimensions {
    /// Pseudo orders only; the true plant orders are unknown.
    pub fn new(my: usize, mu: usize, ly: usize, lu: usize) -> Result<Self> {
        if my == 0 || mu == 0 {
            return Err(Error::InvalidDimensions(format!(
                "output and input counts must be positive (My={my}, Mu={mu})"
            )));
        }
        if lu == 0 {
            return Err(Error::InvalidDimensions("Lu must be at least 1".into()));
        }
        Ok(Self {
            my,
            mu,
            ly,
            lu,
            ny: None,
            nu: None,
        })
    }

    /// Pseudo orders together with the true orders `ny`, `nu`.
    pub fn with_orders(my: usize, mu: usize, ly: usize, lu: usize, ny: usize, nu: usize) -> Result<Self> {
        let mut d = Self::new(my, mu, ly, lu)?;
        d.ny = Some(ny);
        d.nu = Some(nu);
        Ok(d)
    }

    /// The preferred configuration `Ly = ny+1`, `Lu = nu+1`.
    pub fn preferred(my: usize, mu: usize, ny: usize, nu: usize) -> Result<Self> {
        Self::with_orders(my, mu, ny + 1, nu + 1, ny, nu)
    }

    pub fn my(&self) -> usize {
        self.my
    }

    pub fn mu(&self) -> usize {
        self.mu
    }

    pub fn ly(&self) -> usize {
        self.ly
    }

    pub fn lu(&self) -> usize {
        self.lu
    }

    pub fn ny(&self) -> Option<usize> {
        self.ny
    }

    pub fn nu(&self) -> Option<usize> {
        self.nu
    }

    /// Length of `ΔH(k)`: `Ly·My + Lu·Mu`.
    pub fn regressor_len(&self) -> usize {
        self.ly * self.my + self.lu * self.mu
    }

    /// Length of the flattened model argument list, when the orders are known.
    pub fn model_arg_len(&self) -> Option<usize> {
        Some((self.ny? + 1) * self.my + (self.nu? + 1) * self.mu)
    }

    fn known_orders(&self) -> Result<(usize, usize)> {
        match (self.ny, self.nu) {
            (Some(ny), Some(nu)) => Ok((ny, nu)),
            _ => Err(Error::UnknownOrders),
        }
    }
}

/// Rolling output/input history, newest first.
///
/// `outputs[i]` is `y(k-i)` and `inputs[i]` is `u(k-i)` relative to the
/// window's own time reference. A window used for `H(k)` starts at `y(k)`
/// and `u(k)`; the controllers instead take the operating point `φ(k-1)`,
/// whose newest entries are `y(k-1)` and `u(k-1)`, together with the fresh
/// measurement `y(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorWindow {
    my: usize,
    mu: usize,
    outputs: Vec<DVector<f64>>,
    inputs: Vec<DVector<f64>>,
    k: i64,
}

impl RegressorWindow {
    pub fn new(
        my: usize,
        mu: usize,
        outputs: Vec<DVector<f64>>,
        inputs: Vec<DVector<f64>>,
        k: i64,
    ) -> Result<Self> {
        if let Some(bad) = outputs.iter().find(|y| y.len() != my) {
            return Err(Error::Shape(format!("output vector of length {} in a window with My={my}", bad.len())));
        }
        if let Some(bad) = inputs.iter().find(|u| u.len() != mu) {
            return Err(Error::Shape(format!("input vector of length {} in a window with Mu={mu}", bad.len())));
        }
        Ok(Self {
            my,
            mu,
            outputs,
            inputs,
            k,
        })
    }

    /// All-zero history of the given depth.
    pub fn zeros(my: usize, mu: usize, n_outputs: usize, n_inputs: usize, k: i64) -> Self {
        Self {
            my,
            mu,
            outputs: vec![DVector::zeros(my); n_outputs],
            inputs: vec![DVector::zeros(mu); n_inputs],
            k,
        }
    }

    pub fn my(&self) -> usize {
        self.my
    }

    pub fn mu(&self) -> usize {
        self.mu
    }

    pub fn k(&self) -> i64 {
        self.k
    }

    pub fn outputs(&self) -> &[DVector<f64>] {
        &self.outputs
    }

    pub fn inputs(&self) -> &[DVector<f64>] {
        &self.inputs
    }

    /// `y(k-i)`.
    pub fn output(&self, i: usize) -> Option<&DVector<f64>> {
        self.outputs.get(i)
    }

    /// `u(k-i)`.
    pub fn input(&self, i: usize) -> Option<&DVector<f64>> {
        self.inputs.get(i)
    }

    /// `y(k-i) - y(k-i-1)` from consecutive entries of this window.
    pub fn delta_output(&self, i: usize) -> Option<DVector<f64>> {
        Some(self.outputs.get(i)? - self.outputs.get(i + 1)?)
    }

    /// `u(k-i) - u(k-i-1)` from consecutive entries of this window.
    pub fn delta_input(&self, i: usize) -> Option<DVector<f64>> {
        Some(self.inputs.get(i)? - self.inputs.get(i + 1)?)
    }

    /// Advance by one step: push the new samples in front and drop the oldest.
    pub fn shifted(&self, y_new: DVector<f64>, u_new: DVector<f64>) -> Result<Self> {
        if y_new.len() != self.my || u_new.len() != self.mu {
            return Err(Error::Shape("shifted window: sample length mismatch".into()));
        }
        let mut outputs = Vec::with_capacity(self.outputs.len());
        outputs.push(y_new);
        outputs.extend(self.outputs.iter().take(self.outputs.len().saturating_sub(1)).cloned());
        let mut inputs = Vec::with_capacity(self.inputs.len());
        inputs.push(u_new);
        inputs.extend(self.inputs.iter().take(self.inputs.len().saturating_sub(1)).cloned());
        Ok(Self {
            my: self.my,
            mu: self.mu,
            outputs,
            inputs,
            k: self.k + 1,
        })
    }

    /// `H(k) = [yᵀ(k), …, yᵀ(k-Ly+1), uᵀ(k), …, uᵀ(k-Lu+1)]ᵀ`.
    pub fn stacked(&self, dims: &Dimensions) -> Result<DVector<f64>> {
        self.check(dims, dims.ly, dims.lu)?;
        let mut h = Vec::with_capacity(dims.regressor_len());
        for y in &self.outputs[..dims.ly] {
            h.extend(y.iter());
        }
        for u in &self.inputs[..dims.lu] {
            h.extend(u.iter());
        }
        Ok(DVector::from_vec(h))
    }

    /// Treats this window as the model argument list
    /// `[y(k), …, y(k-ny), u(k), …, u(k-nu)]` and flattens it.
    pub fn model_args(&self, ny: usize, nu: usize) -> Result<Vec<f64>> {
        if self.outputs.len() < ny + 1 || self.inputs.len() < nu + 1 {
            return Err(Error::Shape(format!(
                "operating point holds {} outputs and {} inputs, model needs {} and {}",
                self.outputs.len(),
                self.inputs.len(),
                ny + 1,
                nu + 1
            )));
        }
        let mut args = Vec::with_capacity((ny + 1) * self.my + (nu + 1) * self.mu);
        for y in &self.outputs[..=ny] {
            args.extend(y.iter());
        }
        for u in &self.inputs[..=nu] {
            args.extend(u.iter());
        }
        Ok(args)
    }

    fn check(&self, dims: &Dimensions, n_out: usize, n_in: usize) -> Result<()> {
        if self.my != dims.my || self.mu != dims.mu {
            return Err(Error::Shape(format!(
                "window is My={}, Mu={} but dimensions are My={}, Mu={}",
                self.my, self.mu, dims.my, dims.mu
            )));
        }
        if self.outputs.len() < n_out || self.inputs.len() < n_in {
            return Err(Error::Shape(format!(
                "window holds {} outputs / {} inputs, need {n_out} / {n_in}",
                self.outputs.len(),
                self.inputs.len()
            )));
        }
        Ok(())
    }
}

impl std::ops::Add for &RegressorWindow {
    type Output = RegressorWindow;

    /// Elementwise sum of two windows of identical shape (keeps `self.k`).
    fn add(self, rhs: &RegressorWindow) -> RegressorWindow {
        assert_eq!(self.outputs.len(), rhs.outputs.len());
        assert_eq!(self.inputs.len(), rhs.inputs.len());
        RegressorWindow {
            my: self.my,
            mu: self.mu,
            outputs: self.outputs.iter().zip(&rhs.outputs).map(|(a, b)| a + b).collect(),
            inputs: self.inputs.iter().zip(&rhs.inputs).map(|(a, b)| a + b).collect(),
            k: self.k,
        }
    }
}

/// `ΔH(k) = H(k) - H(k-1)` from two consecutive windows.
pub fn build_delta_regressor(
    dims: &Dimensions,
    window_now: &RegressorWindow,
    window_prev: &RegressorWindow,
) -> Result<DVector<f64>> {
    window_now.check(dims, dims.ly, dims.lu)?;
    window_prev.check(dims, dims.ly, dims.lu)?;
    if window_now.k != window_prev.k + 1 {
        return Err(Error::Shape(format!(
            "previous window must be one step behind (k={} vs k={})",
            window_prev.k, window_now.k
        )));
    }
    Ok(window_now.stacked(dims)? - window_prev.stacked(dims)?)
}

/// Block-row pseudo-Jacobian `[Φ₁ … Φ_{Ly} Φ_{Ly+1} … Φ_{Ly+Lu}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoJacobian {
    my: usize,
    mu: usize,
    output_blocks: Vec<DMatrix<f64>>,
    input_blocks: Vec<DMatrix<f64>>,
}

impl PseudoJacobian {
    pub fn new(
        my: usize,
        mu: usize,
        output_blocks: Vec<DMatrix<f64>>,
        input_blocks: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        if input_blocks.is_empty() {
            return Err(Error::InvalidDimensions("a PJM needs at least one input block".into()));
        }
        for b in &output_blocks {
            if b.shape() != (my, my) {
                return Err(Error::Shape(format!("output block is {:?}, expected ({my}, {my})", b.shape())));
            }
        }
        for b in &input_blocks {
            if b.shape() != (my, mu) {
                return Err(Error::Shape(format!("input block is {:?}, expected ({my}, {mu})", b.shape())));
            }
        }
        if output_blocks.iter().chain(&input_blocks).any(|b| b.iter().any(|v| !v.is_finite())) {
            return Err(Error::Numeric("PJM blocks must be finite".into()));
        }
        Ok(Self {
            my,
            mu,
            output_blocks,
            input_blocks,
        })
    }

    /// Every entry set to `value`, e.g. the `0.01·ones` seed.
    pub fn filled(dims: &Dimensions, value: f64) -> Self {
        Self {
            my: dims.my,
            mu: dims.mu,
            output_blocks: vec![DMatrix::from_element(dims.my, dims.my, value); dims.ly],
            input_blocks: vec![DMatrix::from_element(dims.my, dims.mu, value); dims.lu],
        }
    }

    pub fn zeros(dims: &Dimensions) -> Self {
        Self::filled(dims, 0.0)
    }

    /// Splits a flattened `My × (Ly·My + Lu·Mu)` matrix into blocks.
    pub fn from_flat(dims: &Dimensions, flat: &DMatrix<f64>) -> Result<Self> {
        if flat.shape() != (dims.my, dims.regressor_len()) {
            return Err(Error::Shape(format!(
                "flattened PJM is {:?}, expected ({}, {})",
                flat.shape(),
                dims.my,
                dims.regressor_len()
            )));
        }
        let out = (0..dims.ly)
            .map(|i| flat.columns(i * dims.my, dims.my).into_owned())
            .collect();
        let off = dims.ly * dims.my;
        let inp = (0..dims.lu)
            .map(|j| flat.columns(off + j * dims.mu, dims.mu).into_owned())
            .collect();
        Self::new(dims.my, dims.mu, out, inp)
    }

    pub fn my(&self) -> usize {
        self.my
    }

    pub fn mu(&self) -> usize {
        self.mu
    }

    pub fn ly(&self) -> usize {
        self.output_blocks.len()
    }

    pub fn lu(&self) -> usize {
        self.input_blocks.len()
    }

    pub fn dims(&self) -> Dimensions {
        Dimensions {
            my: self.my,
            mu: self.mu,
            ly: self.ly(),
            lu: self.lu(),
            ny: None,
            nu: None,
        }
    }

    /// `Φ₁ … Φ_{Ly}`.
    pub fn output_blocks(&self) -> &[DMatrix<f64>] {
        &self.output_blocks
    }

    /// `Φ_{Ly+1} … Φ_{Ly+Lu}`.
    pub fn input_blocks(&self) -> &[DMatrix<f64>] {
        &self.input_blocks
    }

    /// `Φ_{Ly+1}`, the block multiplying the current input increment.
    pub fn leading_input_block(&self) -> &DMatrix<f64> {
        &self.input_blocks[0]
    }

    pub fn width(&self) -> usize {
        self.ly() * self.my + self.lu() * self.mu
    }

    pub fn flatten(&self) -> DMatrix<f64> {
        let mut flat = DMatrix::zeros(self.my, self.width());
        let mut col = 0;
        for b in self.output_blocks.iter().chain(&self.input_blocks) {
            flat.columns_mut(col, b.ncols()).copy_from(b);
            col += b.ncols();
        }
        flat
    }

    /// Column names of the CSV form, `Phi{block}[row,col]`, row-major over
    /// the flattened matrix. Blocks are numbered from 1.
    pub fn csv_header(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.my * self.width());
        for r in 0..self.my {
            for (b, block) in self.output_blocks.iter().chain(&self.input_blocks).enumerate() {
                for c in 0..block.ncols() {
                    names.push(format!("Phi{}[{r},{c}]", b + 1));
                }
            }
        }
        names
    }

    /// Values matching [`PseudoJacobian::csv_header`].
    pub fn csv_row(&self) -> Vec<f64> {
        let flat = self.flatten();
        let mut v = Vec::with_capacity(flat.len());
        for r in 0..flat.nrows() {
            v.extend(flat.row(r).iter());
        }
        v
    }

    /// `φ_Lᵀ ΔH`.
    pub fn predict_delta_output(&self, dh: &DVector<f64>) -> Result<DVector<f64>> {
        predict_delta_output(self, dh)
    }
}

/// `Δy(k+1) = φ_Lᵀ(k) ΔH(k)`.
pub fn predict_delta_output(pjm: &PseudoJacobian, dh: &DVector<f64>) -> Result<DVector<f64>> {
    if dh.len() != pjm.width() {
        return Err(Error::Shape(format!(
            "ΔH has length {}, PJM is {} wide",
            dh.len(),
            pjm.width()
        )));
    }
    Ok(pjm.flatten() * dh)
}

/// A plant model `y(k+1) = f(φ(k))` with known orders.
///
/// `evaluate` receives the flattened argument list
/// `[y(k); …; y(k-ny); u(k); …; u(k-nu)]` and must be deterministic.
pub trait DifferentiableModel {
    fn dims(&self) -> Dimensions;

    fn evaluate(&self, args: &[f64]) -> DVector<f64>;
}

impl<M: DifferentiableModel + ?Sized> DifferentiableModel for &M {
    fn dims(&self) -> Dimensions {
        (**self).dims()
    }

    fn evaluate(&self, args: &[f64]) -> DVector<f64> {
        (**self).evaluate(args)
    }
}

const HESSIAN_STEP: f64 = 1e-4;

fn jacobian_step(x: f64) -> f64 {
    (1e-6 * x.abs()).max(1e-6)
}

fn eval_checked<M: DifferentiableModel + ?Sized>(model: &M, args: &[f64], index: usize) -> Result<DVector<f64>> {
    let y = model.evaluate(args);
    if y.iter().all(|v| v.is_finite()) {
        Ok(y)
    } else {
        Err(Error::NonFinite { index })
    }
}

/// Central-difference Jacobian of `model` at `args` restricted to the
/// coordinates `cols`. Returns an `My × cols.len()` matrix.
pub(crate) fn partials<M: DifferentiableModel + ?Sized>(
    model: &M,
    args: &[f64],
    cols: std::ops::Range<usize>,
) -> Result<DMatrix<f64>> {
    let my = model.dims().my;
    let mut jac = DMatrix::zeros(my, cols.len());
    let mut x = args.to_vec();
    for (j, c) in cols.enumerate() {
        let x0 = args[c];
        let h = jacobian_step(x0);
        x[c] = x0 + h;
        let fp = eval_checked(model, &x, c)?;
        x[c] = x0 - h;
        let fm = eval_checked(model, &x, c)?;
        x[c] = x0;
        let span = (x0 + h) - (x0 - h);
        jac.set_column(j, &((fp - fm) / span));
    }
    Ok(jac)
}

/// Per-output Hessians of `model` over the coordinates `cols`, by nested
/// central differences. Element `r` is the `cols.len()`-square Hessian of
/// output `r`.
fn block_hessians<M: DifferentiableModel + ?Sized>(
    model: &M,
    args: &[f64],
    cols: std::ops::Range<usize>,
) -> Result<Vec<DMatrix<f64>>> {
    let my = model.dims().my;
    let n = cols.len();
    let h = HESSIAN_STEP;
    let mut hess = vec![DMatrix::zeros(n, n); my];
    let mut x = args.to_vec();
    let idx: Vec<usize> = cols.collect();
    for a in 0..n {
        for b in a..n {
            let (ca, cb) = (idx[a], idx[b]);
            let mut corner = |sa: f64, sb: f64| -> Result<DVector<f64>> {
                x.copy_from_slice(args);
                x[ca] += sa * h;
                x[cb] += sb * h;
                eval_checked(model, &x, ca)
            };
            let fpp = corner(1.0, 1.0)?;
            let fpm = corner(1.0, -1.0)?;
            let fmp = corner(-1.0, 1.0)?;
            let fmm = corner(-1.0, -1.0)?;
            let d = ((fpp - fpm) - (fmp - fmm)) / (4.0 * h * h);
            for r in 0..my {
                hess[r][(a, b)] = d[r];
                hess[r][(b, a)] = d[r];
            }
        }
    }
    Ok(hess)
}

/// First- and second-order derivative data of a model at one operating
/// point, from which the PJM of either order can be assembled.
#[derive(Debug, Clone)]
pub struct Linearization {
    dims: Dimensions,
    value: DVector<f64>,
    output_jacobians: Vec<DMatrix<f64>>,
    input_jacobians: Vec<DMatrix<f64>>,
    output_hessians: Option<Vec<Vec<DMatrix<f64>>>>,
    input_hessians: Option<Vec<Vec<DMatrix<f64>>>>,
}

impl Linearization {
    /// Jacobian blocks `∂f/∂yᵀ(k-i)`, `∂f/∂uᵀ(k-j)` at `operating_point`
    /// (interpreted as the model argument list `φ(k-1)`).
    pub fn first_order<M: DifferentiableModel + ?Sized>(model: &M, operating_point: &RegressorWindow) -> Result<Self> {
        let dims = model.dims();
        let (ny, nu) = dims.known_orders()?;
        if dims.ly < ny + 1 || dims.lu < nu + 1 {
            return Err(Error::UnsupportedOrders {
                ly: dims.ly,
                lu: dims.lu,
                ny1: ny + 1,
                nu1: nu + 1,
            });
        }
        if operating_point.my != dims.my || operating_point.mu != dims.mu {
            return Err(Error::Shape("operating point does not match the model dimensions".into()));
        }
        let args = operating_point.model_args(ny, nu)?;
        let value = eval_checked(model, &args, 0)?;
        if value.len() != dims.my {
            return Err(Error::Shape(format!("model returned {} outputs, expected {}", value.len(), dims.my)));
        }
        let n_args = args.len();
        let full = partials(model, &args, 0..n_args)?;
        let (my, mu) = (dims.my, dims.mu);
        let u_off = (ny + 1) * my;
        let output_jacobians = (0..=ny).map(|i| full.columns(i * my, my).into_owned()).collect();
        let input_jacobians = (0..=nu).map(|j| full.columns(u_off + j * mu, mu).into_owned()).collect();
        Ok(Self {
            dims,
            value,
            output_jacobians,
            input_jacobians,
            output_hessians: None,
            input_hessians: None,
        })
    }

    /// Adds the within-block Hessians needed for the second-order PJM.
    pub fn second_order<M: DifferentiableModel + ?Sized>(model: &M, operating_point: &RegressorWindow) -> Result<Self> {
        let mut lin = Self::first_order(model, operating_point)?;
        let (ny, nu) = lin.dims.known_orders()?;
        let args = operating_point.model_args(ny, nu)?;
        let (my, mu) = (lin.dims.my, lin.dims.mu);
        let u_off = (ny + 1) * my;
        lin.output_hessians = Some(
            (0..=ny)
                .map(|i| block_hessians(model, &args, i * my..(i + 1) * my))
                .collect::<Result<_>>()?,
        );
        lin.input_hessians = Some(
            (0..=nu)
                .map(|j| block_hessians(model, &args, u_off + j * mu..u_off + (j + 1) * mu))
                .collect::<Result<_>>()?,
        );
        Ok(lin)
    }

    pub fn dims(&self) -> Dimensions {
        self.dims
    }

    /// `f(φ(k-1))`.
    pub fn value(&self) -> &DVector<f64> {
        &self.value
    }

    /// Jacobian PJM; blocks beyond the model orders are zero.
    pub fn pjm(&self) -> PseudoJacobian {
        let d = &self.dims;
        let mut out = self.output_jacobians.clone();
        out.resize(d.ly, DMatrix::zeros(d.my, d.my));
        let mut inp = self.input_jacobians.clone();
        inp.resize(d.lu, DMatrix::zeros(d.my, d.mu));
        PseudoJacobian {
            my: d.my,
            mu: d.mu,
            output_blocks: out,
            input_blocks: inp,
        }
    }

    /// Jacobian PJM plus the Hessian corrections `ε` built from `deltas`
    /// (laid out like `ΔH(k)`). Requires [`Linearization::second_order`].
    pub fn corrected_pjm(&self, deltas: &DVector<f64>) -> Result<PseudoJacobian> {
        let d = &self.dims;
        if deltas.len() != d.regressor_len() {
            return Err(Error::Shape(format!(
                "deltas have length {}, ΔH is {} long",
                deltas.len(),
                d.regressor_len()
            )));
        }
        let (oh, ih) = match (&self.output_hessians, &self.input_hessians) {
            (Some(o), Some(i)) => (o, i),
            _ => return Err(Error::Numeric("Hessians were not computed for this linearization".into())),
        };
        let mut pjm = self.pjm();
        for (i, hess) in oh.iter().enumerate() {
            let delta = deltas.rows(i * d.my, d.my);
            add_correction(&mut pjm.output_blocks[i], hess, &delta.into_owned());
        }
        let off = d.ly * d.my;
        for (j, hess) in ih.iter().enumerate() {
            let delta = deltas.rows(off + j * d.mu, d.mu);
            add_correction(&mut pjm.input_blocks[j], hess, &delta.into_owned());
        }
        Ok(pjm)
    }
}

/// Row `r` of the block gains `½ δᵀ H_r`.
fn add_correction(block: &mut DMatrix<f64>, hessians: &[DMatrix<f64>], delta: &DVector<f64>) {
    if delta.iter().all(|&v| v == 0.0) {
        return;
    }
    for (r, h) in hessians.iter().enumerate() {
        let row = (h * delta).transpose() * 0.5;
        let mut target = block.row_mut(r);
        target += row;
    }
}

/// PJM from the model Jacobian at the operating point `φ(k-1)`.
pub fn pjm_first_order<M: DifferentiableModel + ?Sized>(
    model: &M,
    operating_point: &RegressorWindow,
) -> Result<PseudoJacobian> {
    Ok(Linearization::first_order(model, operating_point)?.pjm())
}

/// PJM with second-order corrections: row `r` of block `i` gains
/// `½ Δᵀ ∂²f_r/∂x_i∂x_iᵀ`, with `Δ` the matching section of `deltas`.
pub fn pjm_second_order<M: DifferentiableModel + ?Sized>(
    model: &M,
    operating_point: &RegressorWindow,
    deltas: &DVector<f64>,
) -> Result<PseudoJacobian> {
    Linearization::second_order(model, operating_point)?.corrected_pjm(deltas)
}
