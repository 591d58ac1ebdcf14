use serde::{Deserialize, Serialize};

use super::lpt::{core_lengths, makespan, pack_with};
use crate::cost::{per_column_cost, Assignment, ColumnStats, CostParams};
use crate::neuro::Mode;
use crate::par::{self, Exec};
use crate::{Error, Result};

/// Enumeration guard: 2^20 packed assignments.
pub const MAX_ORACLE_COLUMNS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Edp,
    Phi,
}

/// Exhaustive EDP minimum over all LPT-packed routings.
pub fn brute_force_min_edp(stats: &ColumnStats, params: &CostParams) -> Result<(Assignment, f64)> {
    brute_force_min(stats, params, Objective::Edp)
}

pub fn brute_force_min(stats: &ColumnStats, params: &CostParams, objective: Objective) -> Result<(Assignment, f64)> {
    brute_force_min_with(Exec::default(), stats, params, objective)
}

/// Ties go to the lexicographically smallest mask read from column 0
/// (ANN before SNN).
pub fn brute_force_min_with(
    exec: Exec,
    stats: &ColumnStats,
    params: &CostParams,
    objective: Objective,
) -> Result<(Assignment, f64)> {
    let n = stats.n();
    if n > MAX_ORACLE_COLUMNS {
        return Err(Error::Capacity(format!(
            "oracle enumerates at most {MAX_ORACLE_COLUMNS} columns, layer has {n}"
        )));
    }
    let ls = core_lengths(stats, params, Mode::Snn);
    let la = core_lengths(stats, params, Mode::Ann);
    let es: Vec<f64> = stats.r_hat.iter().map(|&r| per_column_cost(r, &params.snn).0).collect();
    let ea: Vec<f64> = stats.r_hat.iter().map(|&r| per_column_cost(r, &params.ann).0).collect();

    let total = 1u32 << n;
    // column 0 is the most significant position of the lexicographic key
    let key = |mask: u32| if n == 0 { 0 } else { mask.reverse_bits() >> (32 - n) };
    let eval = |mask: u32| -> Option<f64> {
        let to_snn: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
        let packing = pack_with(&to_snn, &ls, &la, params).ok()?;
        let energy: f64 = (0..n).map(|i| if to_snn[i] { es[i] } else { ea[i] }).sum();
        let delay =
            (params.snn.alpha + makespan(&packing.snn, &ls)).max(params.ann.alpha + makespan(&packing.ann, &la));
        Some(match objective {
            Objective::Edp => energy * delay,
            Objective::Phi => energy + params.lambda * delay,
        })
    };
    let better =
        |a: (f64, u32), b: Option<(f64, u32)>| b.is_none_or(|(bv, bm)| a.0 < bv || (a.0 == bv && key(a.1) < key(bm)));

    const BLOCK: u32 = 1 << 10;
    let blocks = total.div_ceil(BLOCK) as usize;
    let partial = par::map_range(exec, blocks, |b| {
        let lo = b as u32 * BLOCK;
        let mut best: Option<(f64, u32)> = None;
        for mask in lo..(lo + BLOCK).min(total) {
            if let Some(v) = eval(mask) {
                if better((v, mask), best) {
                    best = Some((v, mask));
                }
            }
        }
        best
    });
    let mut best: Option<(f64, u32)> = None;
    for cand in partial.into_iter().flatten() {
        if better(cand, best) {
            best = Some(cand);
        }
    }
    let (value, mask) = best.ok_or_else(|| Error::Capacity("no core has PEs for a nonempty layer".into()))?;
    let to_snn: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
    let packing = pack_with(&to_snn, &ls, &la, params)?;
    Ok((Assignment { to_snn, packing }, value))
}
