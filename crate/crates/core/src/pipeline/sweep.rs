//! One-axis design-space sweeps under the cost schedule.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{plan, prepare_network, run, Setup};
use crate::neuro::QuantConfig;
use crate::par::{self, Exec};
use crate::sched::Strategy;
use crate::sim::SimReport;
use crate::workload::Network;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// Activation sparsity 90%, 60%, 25% on every layer.
    Sparsity,
    /// `(L, T)` of (2, 5), (4, 11), (8, 23), threshold `2L`.
    QuantPair,
    /// SNN/ANN PEs (6, 10), (8, 8), (10, 6).
    CoreSplit,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::Sparsity, Axis::QuantPair, Axis::CoreSplit];

    /// Index of the point every other point is normalized against.
    pub fn baseline(self) -> usize {
        match self {
            Axis::Sparsity | Axis::QuantPair => 0,
            Axis::CoreSplit => 1,
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Sparsity => "sparsity",
            Axis::QuantPair => "quant_pair",
            Axis::CoreSplit => "core_split",
        })
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Axis::ALL
            .into_iter()
            .find(|a| a.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown sweep axis {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub label: String,
    pub networks: Vec<Network>,
    pub setup: Setup,
}

pub fn sweep_points(axis: Axis, networks: &[Network], base: &Setup) -> Result<Vec<SweepPoint>> {
    let point = |label: String, networks: Vec<Network>, setup: Setup| SweepPoint { label, networks, setup };
    Ok(match axis {
        Axis::Sparsity => [0.90, 0.60, 0.25]
            .into_iter()
            .map(|sparsity| {
                let mut nets = networks.to_vec();
                for l in nets.iter_mut().flat_map(|n| n.layers.iter_mut()) {
                    l.act_density = 1.0 - sparsity;
                }
                point(format!("{:.0}%", sparsity * 100.0), nets, *base)
            })
            .collect(),
        Axis::QuantPair => [2u32, 4, 8]
            .into_iter()
            .map(|l| {
                let quant = QuantConfig::new(l, 2 * l as i32)?;
                let label = format!("L{l}T{}", quant.total_timesteps());
                Ok(point(label, networks.to_vec(), Setup { quant, ..*base }))
            })
            .collect::<Result<_>>()?,
        Axis::CoreSplit => [(6, 10), (8, 8), (10, 6)]
            .into_iter()
            .map(|(snn_pes, ann_pes)| {
                let hardware = crate::sim::HardwareConfig {
                    snn_pes,
                    ann_pes,
                    ..base.hardware
                };
                point(
                    format!("S{snn_pes}A{ann_pes}"),
                    networks.to_vec(),
                    Setup { hardware, ..*base },
                )
            })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub point: String,
    /// Network name, or `suite` for the sum over networks.
    pub network: String,
    pub cycles: u64,
    pub energy: f64,
    pub edp: f64,
    pub utilization: f64,
    /// Baseline cycles over these cycles.
    pub speedup: f64,
    /// Baseline energy over this energy.
    pub efficiency: f64,
}

fn suite_total(reports: &[SimReport]) -> (u64, f64, f64) {
    let cycles: u64 = reports.iter().map(|r| r.total_cycles).sum();
    let energy: f64 = reports.iter().map(|r| r.energy_total()).sum();
    let busy: f64 = reports.iter().map(|r| r.utilization() * r.total_cycles as f64).sum();
    (cycles, energy, busy / cycles.max(1) as f64)
}

/// Cost-schedules and simulates every (point, network) pair. Rows come out
/// point-major in network order, then one `suite` row per point.
pub fn run_sweep(exec: Exec, axis: Axis, networks: &[Network], base: &Setup) -> Result<Vec<SweepRow>> {
    let points = sweep_points(axis, networks, base)?;
    let nn = networks.len();
    let reports = par::try_map_range(exec, points.len() * nn, |j| -> Result<SimReport> {
        let p = &points[j / nn];
        let prepared = prepare_network(Exec::Sequential, &p.networks[j % nn], &p.setup)?;
        let schedule = plan(Exec::Sequential, &prepared, Strategy::Cost, p.setup.seed)?;
        run(Exec::Sequential, &prepared, &schedule, &p.setup)
    })?;
    let by_point: Vec<&[SimReport]> = reports.chunks(nn.max(1)).collect();
    let base_idx = axis.baseline();
    let mut rows = Vec::new();
    for (pi, p) in points.iter().enumerate() {
        for (ni, net) in networks.iter().enumerate() {
            let r = &by_point[pi][ni];
            let b = &by_point[base_idx][ni];
            rows.push(SweepRow {
                point: p.label.clone(),
                network: net.name.clone(),
                cycles: r.total_cycles,
                energy: r.energy_total(),
                edp: r.edp(),
                utilization: r.utilization(),
                speedup: r.speedup_over(b),
                efficiency: r.efficiency_over(b),
            });
        }
    }
    if nn > 0 {
        let base = suite_total(by_point[base_idx]);
        for (pi, p) in points.iter().enumerate() {
            let (cycles, energy, utilization) = suite_total(by_point[pi]);
            rows.push(SweepRow {
                point: p.label.clone(),
                network: "suite".into(),
                cycles,
                energy,
                edp: energy * cycles as f64,
                utilization,
                speedup: base.0 as f64 / cycles as f64,
                efficiency: base.1 / energy,
            });
        }
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("point,network,cycles,energy,edp,utilization,speedup,efficiency\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{:.6},{:.6e},{:.6},{:.6},{:.6}",
            r.point, r.network, r.cycles, r.energy, r.edp, r.utilization, r.speedup, r.efficiency
        );
    }
    s
}
