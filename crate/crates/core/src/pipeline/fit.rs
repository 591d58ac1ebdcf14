//! One-off fit of [`EnergyWeights`] to a target power breakdown.

use serde::{Deserialize, Serialize};

use super::{plan, prepare_network, run, Setup};
use crate::par::Exec;
use crate::sched::Strategy;
use crate::sim::{power_breakdown, EnergyWeights, EventCounts, PowerBreakdown};
use crate::workload::Network;
use crate::{Error, Result};

/// Target shares. System groups sum to 1; each intra-core group is
/// normalized to 1 before use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerTargets {
    pub memory: f64,
    pub ann: f64,
    pub snn: f64,
    /// Split of the memory group: cache lines, crossbar beats, HBM bytes.
    pub memory_split: [f64; 3],
    /// ANN core: prefix, MAC, QCFS, control.
    pub ann_split: [f64; 4],
    /// SNN core: fast prefix, laggy prefix, accumulate, spike generation,
    /// soft reset, control.
    pub snn_split: [f64; 6],
}

impl Default for PowerTargets {
    fn default() -> Self {
        PowerTargets {
            memory: 0.639,
            ann: 0.2888,
            snn: 0.0722,
            memory_split: [0.7, 0.2, 0.1],
            // control 19.9 less 2 points for the QCFS stage
            ann_split: [59.0, 23.1, 2.0, 17.9],
            snn_split: [44.4, 17.3, 3.9, 5.0, 5.0, 20.1],
        }
    }
}

fn normalized<const N: usize>(x: [f64; N]) -> [f64; N] {
    let s: f64 = x.iter().sum();
    x.map(|v| v / s)
}

/// Weights that reproduce `t` exactly on `c`, anchored at one MAC = 1.
pub fn weights_for_counts(c: &EventCounts, t: &PowerTargets) -> Result<EnergyWeights> {
    let need = |n: u64, what: &str| {
        if n == 0 {
            Err(Error::Calibration(format!("reference workload has no {what} events")))
        } else {
            Ok(n as f64)
        }
    };
    let [a_prefix, a_mac, a_qcfs, a_ctl] = normalized(t.ann_split);
    let [s_prefix, s_laggy, s_acc, s_spike, s_reset, s_ctl] = normalized(t.snn_split);
    let [m_cache, m_xbar, m_hbm] = normalized(t.memory_split);
    let ann = need(c.macs, "MAC")? / a_mac;
    let system = ann / t.ann;
    let snn = system * t.snn;
    let mem = system * t.memory;
    Ok(EnergyWeights {
        cache_access: mem * m_cache / need(c.cache_reads + c.cache_writes, "cache")?,
        crossbar_beat: mem * m_xbar / need(c.crossbar_beats, "crossbar")?,
        hbm_byte: mem * m_hbm / need(c.hbm_bytes, "HBM")?,
        ann_prefix: ann * a_prefix / need(c.ann_prefix_ops, "ANN prefix")?,
        mac: 1.0,
        qcfs: ann * a_qcfs / need(c.qcfs_evals, "QCFS")?,
        ann_control: ann * a_ctl / need(c.ann_control_cycles, "ANN control")?,
        snn_prefix: snn * s_prefix / need(c.snn_prefix_ops, "SNN prefix")?,
        laggy_prefix: snn * s_laggy / need(c.laggy_prefix_ops, "laggy prefix")?,
        gated_acc: snn * s_acc / need(c.gated_accs, "accumulate")?,
        spike_gen: snn * s_spike / need(c.spike_gens, "spike")?,
        reset_step: snn * s_reset / need(c.reset_steps, "reset")?,
        snn_control: snn * s_ctl / need(c.snn_control_cycles, "SNN control")?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightFit {
    pub weights: EnergyWeights,
    pub iterations: usize,
    /// Breakdown of the suite under the returned weights.
    pub breakdown: PowerBreakdown,
}

/// Event totals of the cost-scheduled suite under `setup`.
pub fn suite_counts(exec: Exec, suite: &[Network], setup: &Setup) -> Result<EventCounts> {
    let mut total = EventCounts::default();
    for net in suite {
        let p = prepare_network(exec, net, setup)?;
        let s = plan(exec, &p, Strategy::Cost, 0)?;
        total += run(exec, &p, &s, setup)?.events;
    }
    Ok(total)
}

fn rounded(w: EnergyWeights) -> Result<EnergyWeights> {
    // four significant digits keep the shipped constants readable
    let mut v = serde_json::to_value(w)?;
    for x in v.as_object_mut().into_iter().flat_map(|m| m.values_mut()) {
        if let Some(f) = x.as_f64().filter(|f| *f > 0.0) {
            let scale = 10f64.powi(3 - f.log10().floor() as i32);
            *x = serde_json::json!((f * scale).round() / scale);
        }
    }
    Ok(serde_json::from_value(v)?)
}

/// Geometric midpoint; plain substitution can overshoot and send every
/// column to one core.
fn damped(old: &EnergyWeights, target: &EnergyWeights) -> Result<EnergyWeights> {
    let (mut a, b) = (serde_json::to_value(old)?, serde_json::to_value(target)?);
    for (k, x) in a.as_object_mut().into_iter().flatten() {
        let (u, v) = (x.as_f64().unwrap_or(0.0), b[k.as_str()].as_f64().unwrap_or(0.0));
        let m = if u > 0.0 && v > 0.0 { (u * v).sqrt() } else { v };
        *x = serde_json::json!(m);
    }
    Ok(serde_json::from_value(a)?)
}

/// Fixed-point fit: weights change the calibrated costs, hence the
/// schedule, hence the event counts. The loop is only marginally stable (a
/// pricier SNN core gets fewer columns, which raises its per-event price
/// again), so it stops as soon as the system shares are within `tol` of the
/// targets instead of waiting for the weights to settle.
pub fn fit_energy_weights(
    exec: Exec,
    suite: &[Network],
    setup: &Setup,
    targets: &PowerTargets,
    max_iterations: usize,
    tol: f64,
) -> Result<WeightFit> {
    let mut weights = setup.energy;
    for it in 0..=max_iterations {
        let counts = suite_counts(
            exec,
            suite,
            &Setup {
                energy: weights,
                ..*setup
            },
        )?;
        let breakdown = power_breakdown(&counts.energy(&weights));
        let off = (breakdown.cache - targets.memory)
            .abs()
            .max((breakdown.ann - targets.ann).abs())
            .max((breakdown.snn - targets.snn).abs());
        log::debug!("weight fit iteration {it}: off by {off:.4}");
        if off <= tol {
            return Ok(WeightFit {
                weights,
                iterations: it,
                breakdown,
            });
        }
        weights = rounded(damped(&weights, &weights_for_counts(&counts, targets)?)?)?;
    }
    Err(Error::Calibration(format!(
        "energy weights did not reach the target shares within {max_iterations} iterations"
    )))
}
