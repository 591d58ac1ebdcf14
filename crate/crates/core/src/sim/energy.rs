use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Energy per event, in arbitrary units (one MAC is roughly 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyWeights {
    /// Per 64-byte FiberCache line read or written.
    pub cache_access: f64,
    pub hbm_byte: f64,
    /// Per 128-bit crossbar beat.
    pub crossbar_beat: f64,
    /// Fast prefix op on the ANN core (two operands per chunk).
    pub ann_prefix: f64,
    /// Fast prefix op on the SNN core (one per chunk).
    pub snn_prefix: f64,
    pub laggy_prefix: f64,
    pub mac: f64,
    /// Per spike accumulated into a timestep sum.
    pub gated_acc: f64,
    pub spike_gen: f64,
    pub qcfs: f64,
    pub reset_step: f64,
    /// Control and clocking, per PE per cycle.
    pub ann_control: f64,
    pub snn_control: f64,
}

impl EnergyWeights {
    pub fn validate(&self) -> Result<()> {
        let v = serde_json::to_value(self)?;
        for (k, x) in v.as_object().into_iter().flatten() {
            match x.as_f64() {
                Some(x) if x >= 0.0 && x.is_finite() => {}
                _ => return Err(Error::Config(format!("energy weight {k} = {x} must be >= 0"))),
            }
        }
        Ok(())
    }
}

impl Default for EnergyWeights {
    /// Fitted against the bundled reference workload so the cache, ANN and
    /// SNN groups draw roughly 64 / 29 / 7 percent of system energy.
    fn default() -> Self {
        EnergyWeights {
            cache_access: 46.17,
            hbm_byte: 5.003,
            crossbar_beat: 3.326,
            ann_prefix: 11.19,
            snn_prefix: 16.52,
            laggy_prefix: 6.435,
            mac: 1.0,
            gated_acc: 0.01057,
            spike_gen: 0.06075,
            qcfs: 2.918,
            reset_step: 0.8906,
            ann_control: 0.6253,
            snn_control: 0.1871,
        }
    }
}

/// Raw event tallies; energy is their dot product with [`EnergyWeights`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounts {
    pub cache_reads: u64,
    pub cache_writes: u64,
    pub hbm_bytes: u64,
    pub crossbar_beats: u64,
    pub ann_prefix_ops: u64,
    pub snn_prefix_ops: u64,
    pub laggy_prefix_ops: u64,
    pub macs: u64,
    pub gated_accs: u64,
    pub spike_gens: u64,
    pub qcfs_evals: u64,
    pub reset_steps: u64,
    pub ann_control_cycles: u64,
    pub snn_control_cycles: u64,
}

impl AddAssign for EventCounts {
    fn add_assign(&mut self, o: Self) {
        self.cache_reads += o.cache_reads;
        self.cache_writes += o.cache_writes;
        self.hbm_bytes += o.hbm_bytes;
        self.crossbar_beats += o.crossbar_beats;
        self.ann_prefix_ops += o.ann_prefix_ops;
        self.snn_prefix_ops += o.snn_prefix_ops;
        self.laggy_prefix_ops += o.laggy_prefix_ops;
        self.macs += o.macs;
        self.gated_accs += o.gated_accs;
        self.spike_gens += o.spike_gens;
        self.qcfs_evals += o.qcfs_evals;
        self.reset_steps += o.reset_steps;
        self.ann_control_cycles += o.ann_control_cycles;
        self.snn_control_cycles += o.snn_control_cycles;
    }
}

impl EventCounts {
    pub fn energy(&self, w: &EnergyWeights) -> EnergyBreakdown {
        let f = |n: u64, wt: f64| n as f64 * wt;
        EnergyBreakdown {
            cache: f(self.cache_reads + self.cache_writes, w.cache_access),
            crossbar: f(self.crossbar_beats, w.crossbar_beat),
            hbm: f(self.hbm_bytes, w.hbm_byte),
            ann_prefix: f(self.ann_prefix_ops, w.ann_prefix),
            ann_mac: f(self.macs, w.mac),
            ann_activation: f(self.qcfs_evals, w.qcfs),
            ann_other: f(self.ann_control_cycles, w.ann_control),
            snn_prefix: f(self.snn_prefix_ops, w.snn_prefix),
            snn_laggy: f(self.laggy_prefix_ops, w.laggy_prefix),
            snn_accumulate: f(self.gated_accs, w.gated_acc),
            snn_activation: f(self.spike_gens, w.spike_gen) + f(self.reset_steps, w.reset_step),
            snn_other: f(self.snn_control_cycles, w.snn_control),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub cache: f64,
    pub crossbar: f64,
    pub hbm: f64,
    pub ann_prefix: f64,
    pub ann_mac: f64,
    pub ann_activation: f64,
    pub ann_other: f64,
    pub snn_prefix: f64,
    pub snn_laggy: f64,
    pub snn_accumulate: f64,
    pub snn_activation: f64,
    pub snn_other: f64,
}

impl EnergyBreakdown {
    pub fn memory(&self) -> f64 {
        self.cache + self.crossbar + self.hbm
    }

    pub fn ann_core(&self) -> f64 {
        self.ann_prefix + self.ann_mac + self.ann_activation + self.ann_other
    }

    pub fn snn_core(&self) -> f64 {
        self.snn_prefix + self.snn_laggy + self.snn_accumulate + self.snn_activation + self.snn_other
    }

    pub fn total(&self) -> f64 {
        self.memory() + self.ann_core() + self.snn_core()
    }
}

/// Intra-core shares; each group sums to 1 unless the core drew nothing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CoreShares {
    pub prefix: f64,
    pub mac_acc: f64,
    pub activation: f64,
    pub other: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PowerBreakdown {
    pub cache: f64,
    pub ann: f64,
    pub snn: f64,
    pub ann_core: CoreShares,
    pub snn_core: CoreShares,
}

fn share(x: f64, total: f64) -> f64 {
    if total > 0.0 {
        x / total
    } else {
        0.0
    }
}

pub fn power_breakdown(e: &EnergyBreakdown) -> PowerBreakdown {
    let total = e.total();
    let (a, s) = (e.ann_core(), e.snn_core());
    PowerBreakdown {
        cache: share(e.memory(), total),
        ann: share(a, total),
        snn: share(s, total),
        ann_core: CoreShares {
            prefix: share(e.ann_prefix, a),
            mac_acc: share(e.ann_mac, a),
            activation: share(e.ann_activation, a),
            other: share(e.ann_other, a),
        },
        snn_core: CoreShares {
            prefix: share(e.snn_prefix + e.snn_laggy, s),
            mac_acc: share(e.snn_accumulate, s),
            activation: share(e.snn_activation, s),
            other: share(e.snn_other, s),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn components_sum_to_total() {
        let c = EventCounts {
            cache_reads: 10,
            cache_writes: 2,
            hbm_bytes: 640,
            crossbar_beats: 30,
            ann_prefix_ops: 8,
            snn_prefix_ops: 4,
            laggy_prefix_ops: 4,
            macs: 50,
            gated_accs: 120,
            spike_gens: 40,
            qcfs_evals: 3,
            reset_steps: 16,
            ann_control_cycles: 100,
            snn_control_cycles: 100,
        };
        let w = EnergyWeights::default();
        let e = c.energy(&w);
        let by_hand = 12.0 * w.cache_access
            + 640.0 * w.hbm_byte
            + 30.0 * w.crossbar_beat
            + 8.0 * w.ann_prefix
            + 4.0 * w.snn_prefix
            + 4.0 * w.laggy_prefix
            + 50.0 * w.mac
            + 120.0 * w.gated_acc
            + 40.0 * w.spike_gen
            + 3.0 * w.qcfs
            + 16.0 * w.reset_step
            + 100.0 * (w.ann_control + w.snn_control);
        assert!((e.total() - by_hand).abs() < 1e-9 * by_hand);
        let p = power_breakdown(&e);
        assert!((p.cache + p.ann + p.snn - 1.0).abs() < 1e-12);
        for s in [p.ann_core, p.snn_core] {
            assert!((s.prefix + s.mac_acc + s.activation + s.other - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn idle_snn_draws_only_static_share() {
        let c = EventCounts {
            macs: 100,
            ann_control_cycles: 10,
            snn_control_cycles: 10,
            ..Default::default()
        };
        let e = c.energy(&EnergyWeights::default());
        assert_eq!(e.snn_core(), e.snn_other);
        assert_eq!(power_breakdown(&e).snn_core.other, 1.0);
        assert_eq!(power_breakdown(&EnergyBreakdown::default()).cache, 0.0);
    }

    #[test]
    fn negative_weight_rejected() {
        let w = EnergyWeights {
            mac: -1.0,
            ..Default::default()
        };
        assert!(w.validate().is_err());
        EnergyWeights::default().validate().unwrap();
    }
}
