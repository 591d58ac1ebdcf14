//! Experiment orchestration: prepare workloads, plan schedules, simulate.

mod fit;
mod stages;
mod sweep;
mod verify;

pub use fit::{fit_energy_weights, suite_counts, weights_for_counts, PowerTargets, WeightFit};
pub use stages::{
    cmd_calibrate, cmd_gen, cmd_profile, cmd_schedule, cmd_simulate, cmd_sweep, cmd_verify, load_trace, run_pipeline,
    summary_csv, Artifact, CostSource, Dirs, ExperimentConfig, GenLayer, GenNetwork, ProfileLayer, SummaryRow,
};
pub use sweep::{run_sweep, sweep_csv, sweep_points, Axis, SweepPoint, SweepRow};
pub use verify::{
    equivalence_suite, mask_invariance_suite, monotonicity_suite, oracle_gaps, oracle_suite, random_cost_instance,
    truncating_reset, verify, verify_with, SuiteResult, VerifyReport, ORACLE_REQUIRED, ORACLE_TOLERANCE,
};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cost::{Assignment, ColumnStats, CostParams};
use crate::neuro::{Mode, QuantConfig};
use crate::par::{self, Exec};
use crate::sched::{
    brute_force_min_edp, random_assignment, schedule_layerwise, tuned_cost_assignment, uniform_assignment,
    RefineReport, Schedule, Strategy, LAMBDA_STEPS,
};
use crate::sim::{calibrate_layer, simulate_network_with, EnergyWeights, HardwareConfig, LayerJob, SimReport};
use crate::workload::{gen_workload_with, mean_row_nnz, profile_with, LayerDescriptor, Network, Workload};
use crate::Result;

/// Everything that determines prepared layers besides the descriptors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Setup {
    pub quant: QuantConfig,
    pub hardware: HardwareConfig,
    pub energy: EnergyWeights,
    pub samples: usize,
    pub quantile: f64,
    pub seed: u64,
}

impl Default for Setup {
    fn default() -> Self {
        Setup {
            quant: QuantConfig::default(),
            hardware: HardwareConfig::default(),
            energy: EnergyWeights::default(),
            samples: 8,
            quantile: crate::cost::DEFAULT_QUANTILE,
            seed: 2024,
        }
    }
}

/// Stable per-item seed derived from a base seed and a label.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedLayer {
    pub desc: LayerDescriptor,
    pub workload: Workload,
    pub stats: ColumnStats,
    pub params: CostParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedNetwork {
    pub name: String,
    pub quant: QuantConfig,
    pub layers: Vec<PreparedLayer>,
}

impl PreparedNetwork {
    pub fn params(&self) -> Vec<CostParams> {
        self.layers.iter().map(|l| l.params).collect()
    }

    pub fn stats(&self) -> Vec<&ColumnStats> {
        self.layers.iter().map(|l| &l.stats).collect()
    }
}

/// Generates, profiles and calibrates every layer of `net`.
pub fn prepare_network(exec: Exec, net: &Network, setup: &Setup) -> Result<PreparedNetwork> {
    let layers = par::try_map_range(exec, net.layers.len(), |i| -> Result<PreparedLayer> {
        let desc = &net.layers[i];
        let seed = derive_seed(setup.seed, &format!("{}/{}/{i}", net.name, desc.name));
        let workload = gen_workload_with(Exec::Sequential, desc, &setup.quant, setup.samples, seed)?;
        let stats = profile_with(
            Exec::Sequential,
            &workload.validation,
            &workload.weights,
            setup.quantile,
        )?;
        let (m, k, _) = desc.gemm_dims()?;
        let params = calibrate_layer(
            &setup.hardware,
            &setup.energy,
            &setup.quant,
            k,
            m,
            mean_row_nnz(&workload.validation),
        )?;
        Ok(PreparedLayer {
            desc: desc.clone(),
            workload,
            stats,
            params,
        })
    })?;
    Ok(PreparedNetwork {
        name: net.name.clone(),
        quant: setup.quant,
        layers,
    })
}

/// Cost-schedule details kept for diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostTrace {
    pub factors: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub refine: Vec<RefineReport>,
}

/// Tunes lambda on each layer's validation statistics, then runs the
/// two-stage scheduler with it.
pub fn cost_schedule(exec: Exec, stats: &[ColumnStats], params: &[CostParams]) -> Result<(Vec<Assignment>, CostTrace)> {
    let planned = par::try_map_range(exec, stats.len(), |i| {
        tuned_cost_assignment(&stats[i], &params[i], LAMBDA_STEPS)
    })?;
    let mut trace = CostTrace {
        factors: Vec::new(),
        lambdas: Vec::new(),
        refine: Vec::new(),
    };
    let mut layers = Vec::new();
    for (a, choice, rep) in planned {
        layers.push(a);
        trace.factors.push(choice.factor);
        trace.lambdas.push(choice.lambda);
        trace.refine.push(rep);
    }
    Ok((layers, trace))
}

/// Plans one schedule for the whole network. `seed` feeds the random baseline.
pub fn plan(exec: Exec, net: &PreparedNetwork, strategy: Strategy, seed: u64) -> Result<Schedule> {
    let stats: Vec<ColumnStats> = net.layers.iter().map(|l| l.stats.clone()).collect();
    Ok(plan_layers(exec, &stats, &net.params(), strategy, seed)?.0)
}

/// Planning from statistics and calibrated parameters alone; the trace is
/// only produced for the cost strategy.
pub fn plan_layers(
    exec: Exec,
    stats: &[ColumnStats],
    params: &[CostParams],
    strategy: Strategy,
    seed: u64,
) -> Result<(Schedule, Option<CostTrace>)> {
    if stats.len() != params.len() {
        return Err(crate::Error::Dimension(format!(
            "{} layers of statistics, {} of parameters",
            stats.len(),
            params.len()
        )));
    }
    let mut trace = None;
    let layers = match strategy {
        Strategy::Cost => {
            let (layers, t) = cost_schedule(exec, stats, params)?;
            trace = Some(t);
            layers
        }
        Strategy::Random => par::try_map_range(exec, stats.len(), |i| {
            random_assignment(&stats[i], &params[i], derive_seed(seed, &format!("random/{i}")))
        })?,
        Strategy::LayerWise(k) => {
            let pairs: Vec<(ColumnStats, CostParams)> = stats.iter().cloned().zip(params.iter().copied()).collect();
            schedule_layerwise(&pairs, k)?
        }
        Strategy::AnnOnly | Strategy::SnnOnly => {
            let mode = if strategy == Strategy::AnnOnly {
                Mode::Ann
            } else {
                Mode::Snn
            };
            stats
                .iter()
                .zip(params)
                .map(|(s, p)| uniform_assignment(s, p, mode))
                .collect::<Result<_>>()?
        }
        Strategy::Oracle => stats
            .iter()
            .zip(params)
            .map(|(s, p)| brute_force_min_edp(s, p).map(|(a, _)| a))
            .collect::<Result<_>>()?,
    };
    let seed = matches!(strategy, Strategy::Random).then_some(seed);
    let stats_ref: Vec<&ColumnStats> = stats.iter().collect();
    Ok((Schedule::new(strategy, layers, params, &stats_ref, seed), trace))
}

/// Simulates the held-out test inputs under `schedule`.
pub fn run(exec: Exec, net: &PreparedNetwork, schedule: &Schedule, setup: &Setup) -> Result<SimReport> {
    if schedule.layers.len() != net.layers.len() {
        return Err(crate::Error::Integrity(format!(
            "schedule has {} layers, network has {}",
            schedule.layers.len(),
            net.layers.len()
        )));
    }
    let jobs: Vec<LayerJob<'_>> = net
        .layers
        .iter()
        .zip(&schedule.layers)
        .map(|(l, a)| LayerJob {
            a: &l.workload.test,
            b: &l.workload.weights,
            quant: net.quant,
            assignment: a,
        })
        .collect();
    simulate_network_with(exec, &jobs, &setup.hardware, &setup.energy)
}
