use serde::{Deserialize, Serialize};

use super::neuron::{soft_reset_update, spike_count_step, MembraneState, ResetFn};
use super::{qcfs, spike_gen, ActivationLevel, QuantConfig};
use crate::par::{self, Exec};
use crate::sparse::{try_for_each_match, BitmapMatrix, BitmapVector, Layout};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Ann,
    Snn,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModeMask {
    pub modes: Vec<Mode>,
}

impl ModeMask {
    pub fn uniform(n: usize, mode: Mode) -> Self {
        ModeMask { modes: vec![mode; n] }
    }

    /// `true` routes the column to the SNN core.
    pub fn from_bools(to_snn: &[bool]) -> Self {
        ModeMask {
            modes: to_snn.iter().map(|&s| if s { Mode::Snn } else { Mode::Ann }).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }
}

fn check_pair(a_row: &BitmapVector, w_col: &BitmapVector, cfg: &QuantConfig) -> Result<()> {
    if a_row.len() != w_col.len() {
        return Err(Error::Dimension(format!(
            "activation fiber length {} vs weight fiber length {}",
            a_row.len(),
            w_col.len()
        )));
    }
    a_row.validate()?;
    w_col.validate()?;
    check_levels(a_row, cfg)
}

fn check_levels(a_row: &BitmapVector, cfg: &QuantConfig) -> Result<()> {
    if let Some(&v) = a_row.values.iter().find(|&&v| v < 0 || v as u32 > cfg.levels()) {
        return Err(Error::Domain(format!(
            "activation value {v} outside [0, {}]",
            cfg.levels()
        )));
    }
    Ok(())
}

fn ann_unchecked(a_row: &BitmapVector, w_col: &BitmapVector, cfg: &QuantConfig) -> Result<ActivationLevel> {
    let mut acc: i32 = 0;
    try_for_each_match(a_row, w_col, |a, w| {
        acc = acc
            .checked_add(i32::from(a) * i32::from(w))
            .ok_or(Error::Overflow("ANN accumulate"))?;
        Ok::<_, Error>(())
    })?;
    Ok(qcfs(i64::from(acc), cfg))
}

fn snn_unchecked(
    a_row: &BitmapVector,
    w_col: &BitmapVector,
    cfg: &QuantConfig,
    reset: ResetFn,
) -> Result<ActivationLevel> {
    let window = cfg.window();
    // per-timestep partial sums, O[0..T)
    let mut o = [0i32; 8];
    try_for_each_match(a_row, w_col, |a, w| {
        let spikes = spike_gen(ActivationLevel(a as u8), cfg)?;
        let w = i32::from(w);
        for (t, slot) in o.iter_mut().enumerate().take(window) {
            if spikes.fires_at(t) {
                *slot = slot.checked_add(w).ok_or(Error::Overflow("SNN timestep accumulate"))?;
            }
        }
        Ok::<_, Error>(())
    })?;
    let state = o[..window]
        .iter()
        .try_fold(MembraneState::default(), |s, &x| spike_count_step(s, x))?;
    Ok(reset(state, cfg))
}

/// Sparse MAC over matched positions followed by QCFS.
pub fn ann_column_eval(a_row: &BitmapVector, w_col: &BitmapVector, cfg: &QuantConfig) -> Result<ActivationLevel> {
    check_pair(a_row, w_col, cfg)?;
    ann_unchecked(a_row, w_col, cfg)
}

/// Spike regeneration at matched positions, per-timestep accumulation,
/// membrane integration and soft reset.
pub fn snn_column_eval(a_row: &BitmapVector, w_col: &BitmapVector, cfg: &QuantConfig) -> Result<ActivationLevel> {
    snn_column_eval_with_reset(a_row, w_col, cfg, soft_reset_update)
}

pub fn snn_column_eval_with_reset(
    a_row: &BitmapVector,
    w_col: &BitmapVector,
    cfg: &QuantConfig,
    reset: ResetFn,
) -> Result<ActivationLevel> {
    check_pair(a_row, w_col, cfg)?;
    snn_unchecked(a_row, w_col, cfg, reset)
}

/// Column-wise hybrid GEMM. `a` is `M x K` with row fibers, `b` is `K x N`
/// with column fibers; the output is `M x N` with row fibers holding levels.
pub fn hybrid_gemm(a: &BitmapMatrix, b: &BitmapMatrix, mask: &ModeMask, cfg: &QuantConfig) -> Result<BitmapMatrix> {
    hybrid_gemm_with(Exec::default(), a, b, mask, cfg)
}

pub fn hybrid_gemm_with(
    exec: Exec,
    a: &BitmapMatrix,
    b: &BitmapMatrix,
    mask: &ModeMask,
    cfg: &QuantConfig,
) -> Result<BitmapMatrix> {
    if a.layout != Layout::RowMajor || b.layout != Layout::ColMajor {
        return Err(Error::Dimension(
            "activations must be row-major and weights column-major".into(),
        ));
    }
    if a.cols != b.rows {
        return Err(Error::Dimension(format!(
            "inner dimensions differ: A is {}x{}, B is {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    if mask.len() != b.cols {
        return Err(Error::Dimension(format!(
            "mode mask has {} entries for {} columns",
            mask.len(),
            b.cols
        )));
    }
    a.validate()?;
    b.validate()?;
    for row in &a.fibers {
        check_levels(row, cfg)?;
    }

    let (m, n) = (a.rows, b.cols);
    let columns: Vec<Vec<u8>> = par::try_map_range(exec, n, |j| {
        let w = &b.fibers[j];
        a.fibers
            .iter()
            .map(|row| {
                let lvl = match mask.modes[j] {
                    Mode::Ann => ann_unchecked(row, w, cfg)?,
                    Mode::Snn => snn_unchecked(row, w, cfg, soft_reset_update)?,
                };
                Ok(lvl.level())
            })
            .collect::<Result<Vec<u8>>>()
    })?;
    let mut dense = vec![0i8; m * n];
    for (j, col) in columns.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            dense[i * n + j] = v as i8;
        }
    }
    BitmapMatrix::from_dense(m, n, &dense, Layout::RowMajor)
}
