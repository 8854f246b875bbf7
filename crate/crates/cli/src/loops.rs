//! Frozen test loops for the sweep and stability verbs.

use nalgebra::DMatrix;

use mfac::edlm::PseudoJacobian;

use crate::config::{ConfigError, LoopDef};

pub const PRESETS: [&str; 3] = ["scalar", "lag", "mimo"];

/// Built-in loops:
/// - `scalar`: `Δy(k+1) = Δu(k)`;
/// - `lag`: `Δy(k+1) = 1.5Δy(k) + Δu(k)`, stable only for `λ < 2`;
/// - `mimo`: a coupled 2×2 loop with one output lag.
pub fn preset(name: &str) -> Option<PseudoJacobian> {
    let m = |r: usize, v: &[f64]| DMatrix::from_row_slice(r, r, v);
    let pjm = match name {
        "scalar" => PseudoJacobian::new(1, 1, vec![], vec![m(1, &[1.0])]),
        "lag" => PseudoJacobian::new(1, 1, vec![m(1, &[1.5])], vec![m(1, &[1.0])]),
        "mimo" => PseudoJacobian::new(
            2,
            2,
            vec![m(2, &[0.3, 0.1, 0.0, 0.2])],
            vec![m(2, &[1.0, 0.2, 0.1, 0.8])],
        ),
        _ => return None,
    };
    Some(pjm.expect("preset blocks are consistent"))
}

pub fn from_def(def: &LoopDef) -> Result<PseudoJacobian, ConfigError> {
    if def.blocks.len() != def.ly + def.lu {
        return Err(ConfigError(format!(
            "loop has {} blocks, expected ly + lu = {}",
            def.blocks.len(),
            def.ly + def.lu
        )));
    }
    let n = def.blocks.first().map_or(0, Vec::len);
    let mut mats = Vec::with_capacity(def.blocks.len());
    for (i, b) in def.blocks.iter().enumerate() {
        if b.len() != n || b.iter().any(|row| row.len() != n) {
            return Err(ConfigError(format!("loop block {} is not {n}×{n}", i + 1)));
        }
        mats.push(DMatrix::from_fn(n, n, |r, c| b[r][c]));
    }
    let inputs = mats.split_off(def.ly);
    PseudoJacobian::new(n, n, mats, inputs).map_err(|e| ConfigError(format!("invalid loop: {e}")))
}
