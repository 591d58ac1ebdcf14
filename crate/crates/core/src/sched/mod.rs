//! Offline column-to-core assignment.
//!
//! The cost strategy scores every column on both cores, splits on the smaller
//! score, packs each core with LPT and then runs a few passes of single-flip
//! local search on the surrogate `Phi = E + lambda * D`. Baselines (random,
//! layer-wise, single-mode) and an exhaustive EDP oracle share the same LPT
//! packing so all strategies are compared on equal terms.

mod emit;
mod lpt;
mod oracle;
mod refine;

pub use emit::{check_provenance, emit_bitmask, load_schedule, mask_from_bytes, mask_to_bytes};
pub use lpt::{lpt_pack, pack};
pub use oracle::{brute_force_min, brute_force_min_edp, brute_force_min_with, Objective, MAX_ORACLE_COLUMNS};
pub use refine::{stage2_refine, stage2_refine_with, RefineMode, RefineReport, FULL_REPACK_LIMIT};

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::{per_column_cost, Assignment, ColumnStats, CostParams, Evaluation};
use crate::neuro::Mode;
use crate::{Error, Result};

/// Default Stage-2 pass budget.
pub const DEFAULT_PASSES: usize = 3;

/// Relative lambda grid; multiplied by [`lambda_scale`] of the layer.
pub const LAMBDA_GRID: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];

/// Points per octave of the fine lambda sweep.
pub const LAMBDA_STEPS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    Cost,
    Random,
    /// First `k` layers fully SNN, the rest fully ANN.
    LayerWise(usize),
    AnnOnly,
    SnnOnly,
    Oracle,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Cost => f.write_str("cost"),
            Strategy::Random => f.write_str("random"),
            Strategy::LayerWise(k) => write!(f, "layerwise-{k}"),
            Strategy::AnnOnly => f.write_str("ann-only"),
            Strategy::SnnOnly => f.write_str("snn-only"),
            Strategy::Oracle => f.write_str("oracle"),
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "cost" => Strategy::Cost,
            "random" => Strategy::Random,
            "ann-only" => Strategy::AnnOnly,
            "snn-only" => Strategy::SnnOnly,
            "oracle" => Strategy::Oracle,
            other => match other.strip_prefix("layerwise-") {
                Some(k) => Strategy::LayerWise(
                    k.parse()
                        .map_err(|_| Error::Config(format!("bad layer count in {other:?}")))?,
                ),
                None => return Err(Error::Config(format!("unknown strategy {other:?}"))),
            },
        })
    }
}

impl Serialize for Strategy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Strategy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub params_hash: String,
    pub stats_hash: String,
    pub seed: Option<u64>,
}

/// Deployable schedule: one packed assignment per layer.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Schedule {
    pub strategy: Strategy,
    pub layers: Vec<Assignment>,
    pub provenance: Provenance,
}

impl Schedule {
    pub fn new<P: Serialize + ?Sized, S: Serialize + ?Sized>(
        strategy: Strategy,
        layers: Vec<Assignment>,
        params: &P,
        stats: &S,
        seed: Option<u64>,
    ) -> Self {
        Schedule {
            strategy,
            layers,
            provenance: Provenance {
                params_hash: crate::hash::content_hash(params),
                stats_hash: crate::hash::content_hash(stats),
                seed,
            },
        }
    }
}

/// Stage-1 marginal score `(eps + lambda*beta) * r + (zeta + lambda*delta)`.
#[inline]
pub fn marginal_score(r_hat: f64, params: &CostParams, mode: Mode) -> f64 {
    let (e, l) = per_column_cost(r_hat, params.core(mode));
    e + params.lambda * l
}

/// Routes every column to the core with the smaller marginal score; ties go
/// to ANN. A core without PEs receives nothing.
pub fn stage1_split(stats: &ColumnStats, params: &CostParams) -> Vec<bool> {
    if params.snn.pes == 0 {
        if stats.n() > 0 {
            log::warn!("SNN core has no PEs; routing all columns to ANN");
        }
        return vec![false; stats.n()];
    }
    if params.ann.pes == 0 {
        if stats.n() > 0 {
            log::warn!("ANN core has no PEs; routing all columns to SNN");
        }
        return vec![true; stats.n()];
    }
    stats
        .r_hat
        .iter()
        .map(|&r| marginal_score(r, params, Mode::Snn) < marginal_score(r, params, Mode::Ann))
        .collect()
}

/// Stage 1, LPT packing, Stage 2.
pub fn cost_assignment(
    stats: &ColumnStats,
    params: &CostParams,
    mode: RefineMode,
) -> Result<(Assignment, RefineReport)> {
    params.validate()?;
    let split = stage1_split(stats, params);
    let packed = pack(split, stats, params)?;
    stage2_refine(packed, stats, params, DEFAULT_PASSES, mode)
}

/// End-to-end cost schedule for a single layer.
pub fn schedule_cost(stats: &ColumnStats, params: &CostParams) -> Result<Schedule> {
    let (a, _) = cost_assignment(stats, params, RefineMode::Auto)?;
    Ok(Schedule::new(Strategy::Cost, vec![a], params, stats, None))
}

/// Fair coin per column from a seeded ChaCha8 stream, then LPT.
pub fn random_assignment(stats: &ColumnStats, params: &CostParams, seed: u64) -> Result<Assignment> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let split: Vec<bool> = (0..stats.n())
        .map(|_| rng.random_bool(0.5))
        .map(|s| (s && params.snn.pes > 0) || params.ann.pes == 0)
        .collect();
    pack(split, stats, params)
}

pub fn schedule_random(stats: &ColumnStats, params: &CostParams, seed: u64) -> Result<Schedule> {
    let a = random_assignment(stats, params, seed)?;
    Ok(Schedule::new(Strategy::Random, vec![a], params, stats, Some(seed)))
}

pub fn uniform_assignment(stats: &ColumnStats, params: &CostParams, mode: Mode) -> Result<Assignment> {
    pack(vec![mode == Mode::Snn; stats.n()], stats, params)
}

/// First `k_snn` layers entirely on the SNN core, the rest on ANN.
pub fn schedule_layerwise(layers: &[(ColumnStats, CostParams)], k_snn: usize) -> Result<Vec<Assignment>> {
    layers
        .iter()
        .enumerate()
        .map(|(i, (s, p))| {
            let mode = if i < k_snn { Mode::Snn } else { Mode::Ann };
            uniform_assignment(s, p, mode)
        })
        .collect()
}

/// `sum(e) / sum(l)` over all columns on the ANN core (SNN if the ANN core is
/// empty); turns a relative lambda factor into an absolute trade-off weight.
pub fn lambda_scale(stats: &ColumnStats, params: &CostParams) -> Result<f64> {
    let core = if params.ann.pes > 0 { &params.ann } else { &params.snn };
    let (e, l) = stats
        .r_hat
        .iter()
        .map(|&r| per_column_cost(r, core))
        .fold((0.0, 0.0), |(se, sl), (e, l)| (se + e, sl + l));
    Ok(if e > 0.0 && l > 0.0 { e / l } else { 1.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaChoice {
    pub factor: f64,
    pub lambda: f64,
    pub edp: f64,
}

/// Span of the fine lambda sweep. Two octaves below the coarse grid: on
/// lightly loaded layers the balanced split sits under a quarter.
pub const LAMBDA_SPAN: (f64, f64) = (1.0 / 16.0, 4.0);

/// Geometric grid over [`LAMBDA_SPAN`] with `steps` points per octave;
/// contains every point of [`LAMBDA_GRID`].
pub fn lambda_grid(steps: usize) -> Vec<f64> {
    let steps = steps.max(1);
    let (lo, hi) = LAMBDA_SPAN;
    let octaves = (hi / lo).log2().round() as usize;
    (0..=octaves * steps)
        .map(|k| lo * 2f64.powf(k as f64 / steps as f64))
        .collect()
}

/// Sweeps `grid * lambda_scale` and keeps the factor whose cost schedule has
/// the lowest model EDP (ties to the smaller factor).
pub fn tune_lambda(stats: &ColumnStats, params: &CostParams, grid: &[f64]) -> Result<LambdaChoice> {
    tune_lambda_with(stats, params, grid, RefineMode::Auto)
}

pub fn tune_lambda_with(
    stats: &ColumnStats,
    params: &CostParams,
    grid: &[f64],
    mode: RefineMode,
) -> Result<LambdaChoice> {
    let scale = lambda_scale(stats, params)?;
    let mut best: Option<LambdaChoice> = None;
    for &factor in grid {
        let p = params.with_lambda(factor * scale);
        let (a, _) = cost_assignment(stats, &p, mode)?;
        let edp = Evaluation::of(&a, stats, &p)?.edp();
        if best.is_none_or(|b| edp < b.edp) {
            best = Some(LambdaChoice {
                factor,
                lambda: p.lambda,
                edp,
            });
        }
    }
    best.ok_or_else(|| Error::Parameter("empty lambda grid".into()))
}

/// Sweeps `lambda_grid(steps)` on the given statistics and keeps the
/// schedule with the lowest model EDP (ties to the smaller lambda).
pub fn tuned_cost_assignment(
    stats: &ColumnStats,
    params: &CostParams,
    steps: usize,
) -> Result<(Assignment, LambdaChoice, RefineReport)> {
    let scale = lambda_scale(stats, params)?;
    let mut best: Option<(Assignment, LambdaChoice, RefineReport)> = None;
    for factor in lambda_grid(steps) {
        let p = params.with_lambda(factor * scale);
        let (a, rep) = cost_assignment(stats, &p, RefineMode::Auto)?;
        let edp = Evaluation::of(&a, stats, &p)?.edp();
        if best.as_ref().is_none_or(|b| edp < b.1.edp) {
            let choice = LambdaChoice {
                factor,
                lambda: p.lambda,
                edp,
            };
            best = Some((a, choice, rep));
        }
    }
    best.ok_or_else(|| Error::Parameter("empty lambda grid".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::CoreCost;

    pub(crate) fn example_params() -> CostParams {
        CostParams {
            snn: CoreCost {
                eps: 1.0,
                zeta: 1.0,
                beta: 1.2,
                delta: 10.0,
                alpha: 0.0,
                pes: 2,
            },
            ann: CoreCost {
                eps: 4.0,
                zeta: 2.0,
                beta: 1.0,
                delta: 2.0,
                alpha: 0.0,
                pes: 2,
            },
            lambda: 1.0,
        }
    }

    #[test]
    fn stage1_examples() {
        let p = example_params();
        assert!((marginal_score(2.0, &p, Mode::Ann) - 14.0).abs() < 1e-12);
        assert!((marginal_score(2.0, &p, Mode::Snn) - 15.4).abs() < 1e-12);
        assert!((marginal_score(10.0, &p, Mode::Ann) - 54.0).abs() < 1e-12);
        assert!((marginal_score(10.0, &p, Mode::Snn) - 33.0).abs() < 1e-12);
        let stats = ColumnStats::from_counts(&[2, 10]);
        assert_eq!(stage1_split(&stats, &p), vec![false, true]);

        let same = CostParams { snn: p.ann, ..p };
        assert_eq!(stage1_split(&stats, &same), vec![false, false]);
    }

    #[test]
    fn degenerate_capacity() {
        let stats = ColumnStats::from_counts(&[2, 10, 30]);
        let mut p = example_params();
        p.snn.pes = 0;
        let (a, _) = cost_assignment(&stats, &p, RefineMode::Full).unwrap();
        assert_eq!(a.to_snn, vec![false; 3]);
        let mut p = example_params();
        p.ann.pes = 0;
        let (a, _) = cost_assignment(&stats, &p, RefineMode::Full).unwrap();
        assert_eq!(a.to_snn, vec![true; 3]);
        assert!(random_assignment(&stats, &p, 3).unwrap().to_snn.iter().all(|&s| s));
    }

    #[test]
    fn single_column_goes_to_cheaper_core() {
        let p = example_params();
        for (r, snn) in [(2u64, false), (10, true)] {
            let s = schedule_cost(&ColumnStats::from_counts(&[r]), &p).unwrap();
            assert_eq!(s.layers[0].to_snn, vec![snn]);
        }
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in [
            Strategy::Cost,
            Strategy::Random,
            Strategy::LayerWise(3),
            Strategy::AnnOnly,
            Strategy::SnnOnly,
            Strategy::Oracle,
        ] {
            assert_eq!(s.to_string().parse::<Strategy>().unwrap(), s);
            let j = serde_json::to_string(&s).unwrap();
            assert_eq!(serde_json::from_str::<Strategy>(&j).unwrap(), s);
        }
        assert!("layerwise-x".parse::<Strategy>().is_err());
        assert!("fastest".parse::<Strategy>().is_err());
    }

    #[test]
    fn random_baseline_properties() {
        let stats = ColumnStats::from_counts(&vec![5; 10_000]);
        let p = example_params();
        let a = random_assignment(&stats, &p, 42).unwrap();
        assert_eq!(a, random_assignment(&stats, &p, 42).unwrap());
        let frac = a.to_snn.iter().filter(|&&s| s).count() as f64 / 1e4;
        // 10 sigma of a fair binomial at n = 1e4 is 0.05
        assert!((0.4..=0.6).contains(&frac), "{frac}");
        let b = random_assignment(&stats, &p, 43).unwrap();
        assert_ne!(a.to_snn, b.to_snn);
        a.validate(stats.n(), &p).unwrap();
    }

    #[test]
    fn layerwise_masks() {
        let p = example_params();
        let layers: Vec<_> = (0..4).map(|i| (ColumnStats::from_counts(&[1 + i, 7, 3]), p)).collect();
        let masks = |k| {
            schedule_layerwise(&layers, k)
                .unwrap()
                .into_iter()
                .map(|a| a.to_snn)
                .collect::<Vec<_>>()
        };
        assert!(masks(0).iter().flatten().all(|&s| !s));
        assert!(masks(4).iter().flatten().all(|&s| s));
        assert_eq!(
            masks(2),
            vec![vec![true; 3], vec![true; 3], vec![false; 3], vec![false; 3]]
        );
    }

    #[test]
    fn tuned_lambda_is_on_grid() {
        let stats = ColumnStats::from_counts(&[12, 16, 44, 52, 57, 71, 114, 125, 140, 216]);
        let p = example_params();
        let choice = tune_lambda(&stats, &p, &LAMBDA_GRID).unwrap();
        assert!(LAMBDA_GRID.contains(&choice.factor));
        let scale = lambda_scale(&stats, &p).unwrap();
        assert!((choice.lambda - choice.factor * scale).abs() < 1e-9);
    }
}
