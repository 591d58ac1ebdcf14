use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::cost::{per_column_cost, Assignment, ColumnStats, CostParams, Packing};
use crate::neuro::Mode;
use crate::{Error, Result};

/// Min-heap key: lowest load first, then lowest PE id.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Slot {
    load: f64,
    pe: usize,
}

impl Eq for Slot {}

impl Ord for Slot {
    fn cmp(&self, other: &Self) -> Ordering {
        self.load.total_cmp(&other.load).then(self.pe.cmp(&other.pe))
    }
}

impl PartialOrd for Slot {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Longest-processing-time-first packing of `columns` (with per-column
/// latencies `lengths[i]`, indexed by column id) onto `pes` PEs.
///
/// Returns one issue list per PE; PEs that receive nothing are kept empty so
/// the result always has `pes` entries when any column is present.
pub fn lpt_pack(columns: &[usize], lengths: &[f64], pes: usize) -> Result<Vec<Vec<usize>>> {
    if columns.is_empty() {
        return Ok(Vec::new());
    }
    if pes == 0 {
        return Err(Error::Capacity(format!(
            "{} columns routed to a core with no PEs",
            columns.len()
        )));
    }
    let mut order = columns.to_vec();
    order.sort_by(|&a, &b| lengths[b].total_cmp(&lengths[a]).then(a.cmp(&b)));
    let mut out = vec![Vec::new(); pes];
    let mut heap: BinaryHeap<Reverse<Slot>> = (0..pes).map(|pe| Reverse(Slot { load: 0.0, pe })).collect();
    for i in order {
        let Reverse(mut slot) = heap.pop().expect("pes >= 1");
        out[slot.pe].push(i);
        slot.load += lengths[i];
        heap.push(Reverse(slot));
    }
    Ok(out)
}

pub(crate) fn core_lengths(stats: &ColumnStats, params: &CostParams, mode: Mode) -> Vec<f64> {
    let c = params.core(mode);
    stats.r_hat.iter().map(|&r| per_column_cost(r, c).1).collect()
}

/// LPT-packs both cores for a routing mask.
pub fn pack(to_snn: Vec<bool>, stats: &ColumnStats, params: &CostParams) -> Result<Assignment> {
    if to_snn.len() != stats.n() {
        return Err(Error::Integrity(format!(
            "mask covers {} of {} columns",
            to_snn.len(),
            stats.n()
        )));
    }
    let packing = pack_with(
        &to_snn,
        &core_lengths(stats, params, Mode::Snn),
        &core_lengths(stats, params, Mode::Ann),
        params,
    )?;
    Ok(Assignment { to_snn, packing })
}

pub(crate) fn pack_with(to_snn: &[bool], len_snn: &[f64], len_ann: &[f64], params: &CostParams) -> Result<Packing> {
    let (snn, ann): (Vec<usize>, Vec<usize>) = (0..to_snn.len()).partition(|&i| to_snn[i]);
    Ok(Packing {
        snn: lpt_pack(&snn, len_snn, params.snn.pes)?,
        ann: lpt_pack(&ann, len_ann, params.ann.pes)?,
    })
}

pub(crate) fn makespan(pes: &[Vec<usize>], lengths: &[f64]) -> f64 {
    pes.iter()
        .map(|pe| pe.iter().map(|&i| lengths[i]).sum::<f64>())
        .fold(0.0, f64::max)
}
