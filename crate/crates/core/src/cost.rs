//! Validation-driven workload statistics and the analytic cost model.
//!
//! For core `a` and column `i` with robust match estimate `r_i`:
//!
//! ```text
//! e_a(i) = eps_a * r_i + zeta_a            energy
//! l_a(i) = beta_a * r_i + delta_a          latency
//! E      = sum over SNN columns of e_S + sum over ANN columns of e_A
//! T_a    = alpha_a + max over PEs p of sum of l_a(i) for i packed on p
//! D      = max(T_S, T_A)
//! EDP    = E * D,   Phi = E + lambda * D
//! ```
//!
//! Energies and latencies are unitless model numbers; calibration against the
//! simulator fixes their scale.

use serde::{Deserialize, Serialize};

use crate::neuro::Mode;
use crate::{Error, Result};

/// Default quantile level for `r_hat`.
pub const DEFAULT_QUANTILE: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub q: f64,
    /// `samples[i][s]`: effective matches of column `i` on validation sample `s`.
    pub samples: Vec<Vec<u64>>,
    pub r_hat: Vec<f64>,
}

impl ColumnStats {
    /// One sample per column, `r_hat` equal to it.
    pub fn from_counts(counts: &[u64]) -> Self {
        ColumnStats {
            q: DEFAULT_QUANTILE,
            samples: counts.iter().map(|&c| vec![c]).collect(),
            r_hat: counts.iter().map(|&c| c as f64).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.r_hat.len()
    }
}

/// Lower order statistic at rank `ceil(q * S)` (1-based).
pub fn quantile_stats(samples: Vec<Vec<u64>>, q: f64) -> Result<ColumnStats> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Input(format!("quantile level {q} not in (0, 1)")));
    }
    let mut r_hat = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        if s.is_empty() {
            return Err(Error::Input(format!("column {i} has no samples")));
        }
        let mut sorted = s.clone();
        sorted.sort_unstable();
        // guard against q*S landing a hair above an integer
        let rank = ((q * sorted.len() as f64) - 1e-9).ceil().max(1.0) as usize;
        r_hat.push(sorted[rank.min(sorted.len()) - 1] as f64);
    }
    Ok(ColumnStats { q, samples, r_hat })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoreCost {
    /// Energy per match.
    pub eps: f64,
    /// Fixed energy per column.
    pub zeta: f64,
    /// Latency per match.
    pub beta: f64,
    /// Fixed latency per column.
    pub delta: f64,
    /// Core launch latency.
    pub alpha: f64,
    pub pes: usize,
}

impl CoreCost {
    fn validate(&self, name: &str) -> Result<()> {
        for (field, v) in [
            ("eps", self.eps),
            ("zeta", self.zeta),
            ("beta", self.beta),
            ("delta", self.delta),
            ("alpha", self.alpha),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!("{name}.{field} = {v} must be >= 0")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub snn: CoreCost,
    pub ann: CoreCost,
    pub lambda: f64,
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        self.snn.validate("snn")?;
        self.ann.validate("ann")?;
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Parameter(format!("lambda = {} must be > 0", self.lambda)));
        }
        Ok(())
    }

    pub fn core(&self, mode: Mode) -> &CoreCost {
        match mode {
            Mode::Snn => &self.snn,
            Mode::Ann => &self.ann,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }
}

/// `(e, l)` for one column on one core.
#[inline]
pub fn per_column_cost(r_hat: f64, core: &CoreCost) -> (f64, f64) {
    (core.eps * r_hat + core.zeta, core.beta * r_hat + core.delta)
}

/// Per-core PE packing: `snn[p]` lists the columns on SNN PE `p` in issue order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Packing {
    pub snn: Vec<Vec<usize>>,
    pub ann: Vec<Vec<usize>>,
}

impl Packing {
    pub fn core(&self, mode: Mode) -> &[Vec<usize>] {
        match mode {
            Mode::Snn => &self.snn,
            Mode::Ann => &self.ann,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment {
    /// Column set routed to the SNN core.
    pub to_snn: Vec<bool>,
    pub packing: Packing,
}

impl Assignment {
    pub fn mode(&self, i: usize) -> Mode {
        if self.to_snn[i] {
            Mode::Snn
        } else {
            Mode::Ann
        }
    }

    /// Checks that each core's packing partitions exactly its routed columns
    /// over at most `pes` PEs.
    pub fn validate(&self, n: usize, params: &CostParams) -> Result<()> {
        self.validate_pes(n, params.snn.pes, params.ann.pes)
    }

    pub fn validate_pes(&self, n: usize, snn_pes: usize, ann_pes: usize) -> Result<()> {
        if self.to_snn.len() != n {
            return Err(Error::Integrity(format!(
                "assignment covers {} of {n} columns",
                self.to_snn.len()
            )));
        }
        let mut seen = vec![false; n];
        for (mode, pes) in [(Mode::Snn, snn_pes), (Mode::Ann, ann_pes)] {
            self.validate_core(mode, pes, &mut seen)?;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Integrity(format!("column {i} is not packed on any PE")));
        }
        Ok(())
    }

    fn validate_core(&self, mode: Mode, available: usize, seen: &mut [bool]) -> Result<()> {
        let pes = self.packing.core(mode);
        if pes.len() > available {
            return Err(Error::Integrity(format!(
                "{mode:?} packing uses {} PEs, core has {available}",
                pes.len()
            )));
        }
        for &i in pes.iter().flatten() {
            if i >= seen.len() {
                return Err(Error::Integrity(format!("packing references unknown column {i}")));
            }
            if self.mode(i) != mode {
                return Err(Error::Integrity(format!("column {i} packed on the wrong core")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Integrity(format!("column {i} packed twice")));
            }
        }
        Ok(())
    }
}

fn check_cover(assign: &Assignment, stats: &ColumnStats) -> Result<()> {
    if assign.to_snn.len() != stats.n() {
        return Err(Error::Integrity(format!(
            "assignment covers {} of {} columns",
            assign.to_snn.len(),
            stats.n()
        )));
    }
    Ok(())
}

pub fn layer_energy(assign: &Assignment, stats: &ColumnStats, params: &CostParams) -> Result<f64> {
    check_cover(assign, stats)?;
    Ok(stats
        .r_hat
        .iter()
        .enumerate()
        .map(|(i, &r)| per_column_cost(r, params.core(assign.mode(i))).0)
        .sum())
}

pub fn core_makespan(assign: &Assignment, stats: &ColumnStats, core: Mode, params: &CostParams) -> Result<f64> {
    check_cover(assign, stats)?;
    let cost = params.core(core);
    let mut worst = 0.0f64;
    for pe in assign.packing.core(core) {
        let mut load = 0.0;
        for &i in pe {
            if i >= stats.n() {
                return Err(Error::Integrity(format!("packing references unknown column {i}")));
            }
            load += per_column_cost(stats.r_hat[i], cost).1;
        }
        worst = worst.max(load);
    }
    Ok(cost.alpha + worst)
}

pub fn layer_delay(assign: &Assignment, stats: &ColumnStats, params: &CostParams) -> Result<f64> {
    Ok(core_makespan(assign, stats, Mode::Snn, params)?.max(core_makespan(assign, stats, Mode::Ann, params)?))
}

pub fn edp(assign: &Assignment, stats: &ColumnStats, params: &CostParams) -> Result<f64> {
    Ok(layer_energy(assign, stats, params)? * layer_delay(assign, stats, params)?)
}

pub fn surrogate_phi(assign: &Assignment, stats: &ColumnStats, params: &CostParams) -> Result<f64> {
    Ok(layer_energy(assign, stats, params)? + params.lambda * layer_delay(assign, stats, params)?)
}

/// Energy and both core makespans of one packed assignment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub energy: f64,
    pub t_snn: f64,
    pub t_ann: f64,
}

impl Evaluation {
    pub fn of(assign: &Assignment, stats: &ColumnStats, params: &CostParams) -> Result<Self> {
        Ok(Evaluation {
            energy: layer_energy(assign, stats, params)?,
            t_snn: core_makespan(assign, stats, Mode::Snn, params)?,
            t_ann: core_makespan(assign, stats, Mode::Ann, params)?,
        })
    }

    pub fn delay(&self) -> f64 {
        self.t_snn.max(self.t_ann)
    }

    pub fn edp(&self) -> f64 {
        self.energy * self.delay()
    }

    pub fn phi(&self, lambda: f64) -> f64 {
        self.energy + lambda * self.delay()
    }
}
