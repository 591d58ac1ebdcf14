use serde::{Deserialize, Serialize};

use super::lpt::{core_lengths, makespan, pack_with};
use crate::cost::{per_column_cost, Assignment, ColumnStats, CostParams, Packing};
use crate::neuro::Mode;
use crate::par::{self, Exec};
use crate::Result;

/// Largest layer for which [`RefineMode::Auto`] re-runs LPT per candidate.
pub const FULL_REPACK_LIMIT: usize = 512;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefineMode {
    /// Every candidate flip re-packs both cores with LPT.
    Full,
    /// Candidates are scored by moving one column between the owning PE and
    /// the least-loaded PE of the other core; O(1) per candidate.
    Incremental,
    #[default]
    Auto,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RefineReport {
    pub passes: usize,
    pub flips: Vec<usize>,
    /// `phi[0]` is the input; one entry per pass after that.
    pub phi: Vec<f64>,
}

struct Costs {
    e: [Vec<f64>; 2],
    l: [Vec<f64>; 2],
    alpha: [f64; 2],
    pes: [usize; 2],
    lambda: f64,
}

const SNN: usize = 0;
const ANN: usize = 1;

fn side(to_snn: bool) -> usize {
    if to_snn {
        SNN
    } else {
        ANN
    }
}

impl Costs {
    fn new(stats: &ColumnStats, params: &CostParams) -> Self {
        let e = |m: Mode| -> Vec<f64> {
            stats
                .r_hat
                .iter()
                .map(|&r| per_column_cost(r, params.core(m)).0)
                .collect()
        };
        Costs {
            e: [e(Mode::Snn), e(Mode::Ann)],
            l: [
                core_lengths(stats, params, Mode::Snn),
                core_lengths(stats, params, Mode::Ann),
            ],
            alpha: [params.snn.alpha, params.ann.alpha],
            pes: [params.snn.pes, params.ann.pes],
            lambda: params.lambda,
        }
    }

    fn energy(&self, to_snn: &[bool]) -> f64 {
        to_snn.iter().enumerate().map(|(i, &s)| self.e[side(s)][i]).sum()
    }

    fn phi(&self, to_snn: &[bool], packing: &Packing) -> f64 {
        let ts = self.alpha[SNN] + makespan(&packing.snn, &self.l[SNN]);
        let ta = self.alpha[ANN] + makespan(&packing.ann, &self.l[ANN]);
        self.energy(to_snn) + self.lambda * ts.max(ta)
    }
}

/// Local search on `Phi`: each pass scores every single-column flip and
/// commits the one with the most negative change (ties to the lower column),
/// stopping when no flip strictly improves or after `max_passes`.
pub fn stage2_refine(
    assign: Assignment,
    stats: &ColumnStats,
    params: &CostParams,
    max_passes: usize,
    mode: RefineMode,
) -> Result<(Assignment, RefineReport)> {
    stage2_refine_with(Exec::default(), assign, stats, params, max_passes, mode)
}

pub fn stage2_refine_with(
    exec: Exec,
    assign: Assignment,
    stats: &ColumnStats,
    params: &CostParams,
    max_passes: usize,
    mode: RefineMode,
) -> Result<(Assignment, RefineReport)> {
    assign.validate(stats.n(), params)?;
    let costs = Costs::new(stats, params);
    let full = match mode {
        RefineMode::Full => true,
        RefineMode::Incremental => false,
        RefineMode::Auto => stats.n() <= FULL_REPACK_LIMIT,
    };
    if full {
        refine_full(exec, assign, &costs, params, max_passes)
    } else {
        refine_incremental(exec, assign, &costs, max_passes)
    }
}

fn pick_best(scores: Vec<Option<f64>>, current: f64) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.into_iter().enumerate() {
        if let Some(phi) = s {
            if phi < current && best.is_none_or(|(_, b)| phi < b) {
                best = Some((i, phi));
            }
        }
    }
    best
}

fn refine_full(
    exec: Exec,
    mut assign: Assignment,
    costs: &Costs,
    params: &CostParams,
    max_passes: usize,
) -> Result<(Assignment, RefineReport)> {
    let mut phi = costs.phi(&assign.to_snn, &assign.packing);
    let mut report = RefineReport {
        phi: vec![phi],
        ..Default::default()
    };
    for _ in 0..max_passes {
        report.passes += 1;
        let cur = &assign.to_snn;
        let scores = par::map_range(exec, cur.len(), |i| {
            if costs.pes[side(!cur[i])] == 0 {
                return None;
            }
            let mut flipped = cur.clone();
            flipped[i] = !flipped[i];
            let packing = pack_with(&flipped, &costs.l[SNN], &costs.l[ANN], params).ok()?;
            Some(costs.phi(&flipped, &packing))
        });
        let Some((i, _)) = pick_best(scores, phi) else {
            report.flips.push(0);
            report.phi.push(phi);
            break;
        };
        let mut to_snn = std::mem::take(&mut assign.to_snn);
        to_snn[i] = !to_snn[i];
        let packing = pack_with(&to_snn, &costs.l[SNN], &costs.l[ANN], params)?;
        assign = Assignment { to_snn, packing };
        phi = costs.phi(&assign.to_snn, &assign.packing);
        report.flips.push(1);
        report.phi.push(phi);
    }
    Ok((assign, report))
}

/// Per-core PE loads with the two largest and the smallest tracked.
struct CoreLoads {
    loads: Vec<f64>,
    top: Option<usize>,
    second: f64,
    min: Option<usize>,
}

impl CoreLoads {
    fn new(pes: &[Vec<usize>], n_pes: usize, lengths: &[f64]) -> Self {
        let mut loads = vec![0.0; n_pes];
        for (p, pe) in pes.iter().enumerate() {
            loads[p] = pe.iter().map(|&i| lengths[i]).sum();
        }
        let mut top: Option<usize> = None;
        let mut min: Option<usize> = None;
        for (p, &l) in loads.iter().enumerate() {
            if top.is_none_or(|t| l > loads[t]) {
                top = Some(p);
            }
            if min.is_none_or(|m| l < loads[m]) {
                min = Some(p);
            }
        }
        let second = loads
            .iter()
            .enumerate()
            .filter(|&(p, _)| Some(p) != top)
            .map(|(_, &l)| l)
            .fold(0.0, f64::max);
        CoreLoads {
            loads,
            top,
            second,
            min,
        }
    }

    fn max(&self) -> f64 {
        self.top.map_or(0.0, |t| self.loads[t])
    }

    fn max_without(&self, pe: usize, removed: f64) -> f64 {
        match self.top {
            Some(t) if t == pe => self.second.max(self.loads[pe] - removed),
            _ => self.max(),
        }
    }
}

fn refine_incremental(
    exec: Exec,
    assign: Assignment,
    costs: &Costs,
    max_passes: usize,
) -> Result<(Assignment, RefineReport)> {
    let n = assign.to_snn.len();
    let mut to_snn = assign.to_snn;
    let mut pes: [Vec<Vec<usize>>; 2] = [assign.packing.snn, assign.packing.ann];
    for (c, lists) in pes.iter_mut().enumerate() {
        lists.resize(costs.pes[c], Vec::new());
    }
    let mut home = vec![0usize; n];
    for lists in &pes {
        for (p, pe) in lists.iter().enumerate() {
            for &i in pe {
                home[i] = p;
            }
        }
    }

    let t = |c: usize, span: f64| costs.alpha[c] + span;
    let state = |pes: &[Vec<Vec<usize>>; 2], energy: f64| {
        let loads = [
            CoreLoads::new(&pes[SNN], costs.pes[SNN], &costs.l[SNN]),
            CoreLoads::new(&pes[ANN], costs.pes[ANN], &costs.l[ANN]),
        ];
        let phi = energy + costs.lambda * t(SNN, loads[SNN].max()).max(t(ANN, loads[ANN].max()));
        (loads, phi)
    };
    let mut energy = costs.energy(&to_snn);
    let (mut loads, mut phi) = state(&pes, energy);
    let mut report = RefineReport {
        phi: vec![phi],
        ..Default::default()
    };
    for _ in 0..max_passes {
        report.passes += 1;
        let scores = par::map_range(exec, n, |i| {
            let from = side(to_snn[i]);
            let to = 1 - from;
            let q = loads[to].min?;
            let mut span = [0.0; 2];
            span[from] = loads[from].max_without(home[i], costs.l[from][i]);
            span[to] = loads[to].max().max(loads[to].loads[q] + costs.l[to][i]);
            let e = energy - costs.e[from][i] + costs.e[to][i];
            Some(e + costs.lambda * t(SNN, span[SNN]).max(t(ANN, span[ANN])))
        });
        let Some((i, _)) = pick_best(scores, phi) else {
            report.flips.push(0);
            report.phi.push(phi);
            break;
        };
        let from = side(to_snn[i]);
        let to = 1 - from;
        let q = loads[to].min.expect("scored candidates have a target PE");
        let list = &mut pes[from][home[i]];
        list.remove(list.iter().position(|&c| c == i).expect("column on its PE"));
        pes[to][q].push(i);
        home[i] = q;
        to_snn[i] = !to_snn[i];
        energy = costs.energy(&to_snn);
        (loads, phi) = state(&pes, energy);
        report.flips.push(1);
        report.phi.push(phi);
    }

    let [snn, ann] = pes;
    let packing = Packing {
        snn: if to_snn.iter().any(|&s| s) { snn } else { Vec::new() },
        ann: if to_snn.iter().any(|&s| !s) { ann } else { Vec::new() },
    };
    Ok((Assignment { to_snn, packing }, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{surrogate_phi, CoreCost};
    use crate::sched::{pack, stage1_split};
    use proptest::prelude::*;

    fn params(pes_s: usize, pes_a: usize) -> CostParams {
        CostParams {
            snn: CoreCost {
                eps: 1.0,
                zeta: 1.0,
                beta: 1.2,
                delta: 10.0,
                alpha: 0.0,
                pes: pes_s,
            },
            ann: CoreCost {
                eps: 4.0,
                zeta: 2.0,
                beta: 1.0,
                delta: 2.0,
                alpha: 0.0,
                pes: pes_a,
            },
            lambda: 1.0,
        }
    }

    fn enumerate_min_phi(stats: &ColumnStats, p: &CostParams) -> f64 {
        (0u32..1 << stats.n())
            .filter_map(|m| pack((0..stats.n()).map(|i| m >> i & 1 == 1).collect(), stats, p).ok())
            .map(|a| surrogate_phi(&a, stats, p).unwrap())
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn fixed_point_needs_no_flip() {
        let p = params(2, 2);
        let stats = ColumnStats::from_counts(&[2]);
        for mode in [RefineMode::Full, RefineMode::Incremental] {
            let a = pack(stage1_split(&stats, &p), &stats, &p).unwrap();
            let (b, rep) = stage2_refine(a.clone(), &stats, &p, 3, mode).unwrap();
            assert_eq!(b, a);
            assert_eq!(rep.passes, 1);
            assert_eq!(rep.flips, vec![0]);
        }
    }

    #[test]
    fn misrouted_column_is_flipped_once() {
        // r = 3 sits just past the score crossover (2.5), so stage 1 sends
        // all three to SNN and overloads its two PEs
        let p = params(2, 1);
        let stats = ColumnStats::from_counts(&[3, 3, 3]);
        let split = stage1_split(&stats, &p);
        assert_eq!(split, vec![true; 3]);
        let a = pack(split, &stats, &p).unwrap();
        let before = surrogate_phi(&a, &stats, &p).unwrap();
        assert!((before - 39.2).abs() < 1e-9);
        let oracle = enumerate_min_phi(&stats, &p);
        assert!((oracle - 35.6).abs() < 1e-9);
        for mode in [RefineMode::Full, RefineMode::Incremental] {
            let (b, rep) = stage2_refine(a.clone(), &stats, &p, 3, mode).unwrap();
            assert_eq!(rep.flips, vec![1, 0], "{mode:?}");
            assert_eq!(b.to_snn, vec![false, true, true]);
            let after = surrogate_phi(&b, &stats, &p).unwrap();
            assert!((after - oracle).abs() < 1e-9);
            assert!((rep.phi[1] - after).abs() < 1e-9);
        }
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let p = params(3, 4);
        let counts: Vec<u64> = (0..300).map(|i| (i * 37 % 101) as u64).collect();
        let stats = ColumnStats::from_counts(&counts);
        for mode in [RefineMode::Full, RefineMode::Incremental] {
            let a = pack(stage1_split(&stats, &p), &stats, &p).unwrap();
            let s = stage2_refine_with(Exec::Sequential, a.clone(), &stats, &p, 3, mode).unwrap();
            let q = stage2_refine_with(Exec::Parallel, a, &stats, &p, 3, mode).unwrap();
            assert_eq!(s, q);
        }
    }

    fn instance() -> impl Strategy<Value = (Vec<u64>, CostParams)> {
        (
            prop::collection::vec(0u64..300, 1..24),
            (0.1f64..5.0, 0.0f64..30.0, 0.1f64..3.0, 0.0f64..30.0, 1usize..4),
            (0.1f64..5.0, 0.0f64..30.0, 0.1f64..3.0, 0.0f64..30.0, 1usize..4),
            0.05f64..5.0,
        )
            .prop_map(|(c, s, a, lambda)| {
                let core = |(eps, zeta, beta, delta, pes): (f64, f64, f64, f64, usize)| CoreCost {
                    eps,
                    zeta,
                    beta,
                    delta,
                    alpha: 3.0,
                    pes,
                };
                (
                    c,
                    CostParams {
                        snn: core(s),
                        ann: core(a),
                        lambda,
                    },
                )
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn phi_never_increases((counts, p) in instance(), incremental in any::<bool>()) {
            let stats = ColumnStats::from_counts(&counts);
            let mode = if incremental { RefineMode::Incremental } else { RefineMode::Full };
            let a = pack(stage1_split(&stats, &p), &stats, &p).unwrap();
            let before = surrogate_phi(&a, &stats, &p).unwrap();
            let (b, rep) = stage2_refine(a, &stats, &p, 3, mode).unwrap();
            b.validate(stats.n(), &p).unwrap();
            let after = surrogate_phi(&b, &stats, &p).unwrap();
            prop_assert!(after <= before + 1e-9 * before.abs());
            prop_assert!((rep.phi[rep.phi.len() - 1] - after).abs() <= 1e-9 * after.abs().max(1.0));
            for w in rep.phi.windows(2) {
                prop_assert!(w[1] <= w[0]);
            }
            prop_assert_eq!(rep.flips.len(), rep.passes);
            prop_assert_eq!(rep.phi.len(), rep.passes + 1);
        }

        #[test]
        fn converged_full_refine_has_no_improving_flip((counts, p) in instance()) {
            let stats = ColumnStats::from_counts(&counts);
            let a = pack(stage1_split(&stats, &p), &stats, &p).unwrap();
            let (b, _) = stage2_refine(a, &stats, &p, usize::MAX, RefineMode::Full).unwrap();
            let phi = surrogate_phi(&b, &stats, &p).unwrap();
            for i in 0..stats.n() {
                let mut m = b.to_snn.clone();
                m[i] = !m[i];
                let flipped = pack(m, &stats, &p).unwrap();
                prop_assert!(surrogate_phi(&flipped, &stats, &p).unwrap() >= phi);
            }
        }
    }
}
