//! Cycle-level model of the dual-core accelerator.
//!
//! Each PE walks its packed column queue; a column is `M` dot products, each
//! costing the pipeline cycles below plus any FiberCache miss and bank
//! conflict stalls. PEs advance through a single event heap ordered by
//! `(time, core, pe)`, so results do not depend on host parallelism. Value
//! outputs come from [`crate::neuro::hybrid_gemm`] and are only hashed here.

mod cache;
mod calibrate;
mod energy;

pub use cache::{BankTracker, FiberCache};
pub use calibrate::{
    calibrate_cost_params, calibrate_for_shape, calibrate_layer, scale_rows, Calibration, FitLine, MicroShape,
    MICRO_FRACTIONS,
};
pub use energy::{power_breakdown, CoreShares, EnergyBreakdown, EnergyWeights, EventCounts, PowerBreakdown};

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cost::Assignment;
use crate::neuro::{hybrid_gemm_with, Mode, ModeMask, QuantConfig};
use crate::par::{self, Exec};
use crate::sparse::{match_count, BitmapMatrix, BitmapVector, Layout, CHUNK_BITS};
use crate::{Error, Result};

/// Pipeline fill before the first match streams.
pub const WARMUP_CYCLES: u64 = 2;
/// First-chunk laggy-prefix fill on the SNN core.
pub const LAGGY_FILL_CYCLES: u64 = 8;
/// Packed values carried per crossbar beat after the bitmap beat.
pub const VALUES_PER_BEAT: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HardwareConfig {
    pub snn_pes: usize,
    pub ann_pes: usize,
    pub cache_bytes: usize,
    pub cache_banks: usize,
    pub cache_assoc: usize,
    pub line_bytes: usize,
    pub chunk_bits: usize,
    /// 128 GB/s at the core clock.
    pub hbm_bytes_per_cycle: f64,
    pub hbm_latency: u64,
    pub clock_hz: f64,
    pub inner_join_units: usize,
    /// Core launch overhead added to every layer.
    pub launch_cycles: u64,
    /// Charge the two-cycle warm-up on every chunk instead of once per dot product.
    pub per_chunk_warmup: bool,
    /// Cycles of history kept per bank for conflict detection.
    pub bank_window: usize,
}

impl Default for HardwareConfig {
    fn default() -> Self {
        HardwareConfig {
            snn_pes: 16,
            ann_pes: 16,
            cache_bytes: 512 * 1024,
            cache_banks: 32,
            cache_assoc: 32,
            line_bytes: 64,
            chunk_bits: CHUNK_BITS,
            hbm_bytes_per_cycle: 128e9 / 560e6,
            hbm_latency: 100,
            clock_hz: 560e6,
            inner_join_units: 32,
            launch_cycles: 4,
            per_chunk_warmup: false,
            bank_window: 8192,
        }
    }
}

impl HardwareConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chunk_bits != CHUNK_BITS {
            return Err(Error::Config(format!("chunk_bits must be {CHUNK_BITS}")));
        }
        if self.snn_pes + self.ann_pes == 0 {
            return Err(Error::Config("at least one core needs PEs".into()));
        }
        for (name, v) in [
            ("cache_bytes", self.cache_bytes),
            ("cache_banks", self.cache_banks),
            ("cache_assoc", self.cache_assoc),
            ("line_bytes", self.line_bytes),
            ("inner_join_units", self.inner_join_units),
            ("bank_window", self.bank_window),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.cache_assoc < 2 || !self.cache_bytes.is_multiple_of(self.line_bytes * self.cache_assoc) {
            return Err(Error::Config(
                "cache_bytes must be a multiple of line_bytes * cache_assoc, assoc >= 2".into(),
            ));
        }
        if !(self.hbm_bytes_per_cycle > 0.0 && self.clock_hz > 0.0) {
            return Err(Error::Config("bandwidth and clock must be positive".into()));
        }
        Ok(())
    }

    pub fn pes(&self, mode: Mode) -> usize {
        match mode {
            Mode::Snn => self.snn_pes,
            Mode::Ann => self.ann_pes,
        }
    }

    pub fn total_pes(&self) -> usize {
        self.snn_pes + self.ann_pes
    }

    pub fn cache_sets(&self) -> usize {
        self.cache_bytes / (self.line_bytes * self.cache_assoc)
    }

    /// Ways available to one layer; the other half holds the next layer.
    pub fn usable_ways(&self) -> usize {
        self.cache_assoc / 2
    }

    pub fn miss_penalty(&self) -> u64 {
        self.hbm_latency + (self.line_bytes as f64 / self.hbm_bytes_per_cycle).ceil() as u64
    }

    /// Cycles to stream `bytes` from HBM including first-access latency.
    pub fn fill_cycles(&self, bytes: u64) -> u64 {
        self.hbm_latency + (bytes as f64 / self.hbm_bytes_per_cycle).ceil() as u64
    }
}

fn chunks_of(k: usize) -> u64 {
    k.div_ceil(CHUNK_BITS).max(1) as u64
}

fn dot_cycles(mode: Mode, matches: u64, chunks: u64, levels: u64, per_chunk_warmup: bool) -> u64 {
    let warm = if per_chunk_warmup {
        WARMUP_CYCLES * chunks
    } else {
        WARMUP_CYCLES
    };
    let stream = matches + chunks.saturating_sub(1);
    match mode {
        Mode::Ann => warm + stream + 1,
        Mode::Snn => warm + LAGGY_FILL_CYCLES + stream + (levels - 1) + levels,
    }
}

/// ANN PE cycles for one dot product: warm-up, one match per cycle, one
/// bubble between chunks, one QCFS stage.
pub fn ann_pe_cycles(chunk_matches: &[u32]) -> u64 {
    let total: u64 = chunk_matches.iter().map(|&c| c as u64).sum();
    dot_cycles(Mode::Ann, total, chunk_matches.len().max(1) as u64, 1, false)
}

/// SNN PE cycles for one dot product: warm-up, laggy-prefix fill, the
/// match stream with bubbles, then the spike-count and soft-reset epilogues.
pub fn snn_pe_cycles(chunk_matches: &[u32], cfg: &QuantConfig) -> u64 {
    let total: u64 = chunk_matches.iter().map(|&c| c as u64).sum();
    dot_cycles(
        Mode::Snn,
        total,
        chunk_matches.len().max(1) as u64,
        cfg.levels() as u64,
        false,
    )
}

/// One layer's operands and its packed column assignment.
#[derive(Debug, Clone, Copy)]
pub struct LayerJob<'a> {
    /// `M x K` activation levels, row fibers.
    pub a: &'a BitmapMatrix,
    /// `K x N` INT8 weights, column fibers.
    pub b: &'a BitmapMatrix,
    pub quant: QuantConfig,
    pub assignment: &'a Assignment,
}

impl LayerJob<'_> {
    fn validate(&self, hw: &HardwareConfig) -> Result<()> {
        if self.a.layout != Layout::RowMajor || self.b.layout != Layout::ColMajor {
            return Err(Error::Dimension(
                "activations must be row-major and weights column-major".into(),
            ));
        }
        if self.a.cols != self.b.rows {
            return Err(Error::Dimension(format!(
                "inner dimensions differ: {} vs {}",
                self.a.cols, self.b.rows
            )));
        }
        self.assignment
            .validate_pes(self.b.cols, hw.snn_pes, hw.ann_pes)
            .map_err(|e| Error::Integrity(format!("schedule does not match operands: {e}")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BusyCycles {
    pub snn: Vec<u64>,
    pub ann: Vec<u64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryStats {
    pub hits: u64,
    pub misses: u64,
    pub bank_conflicts: u64,
    pub miss_stall_cycles: u64,
    pub conflict_stall_cycles: u64,
    /// Operand bytes staged into the cache ahead of the layer.
    pub prefetched_bytes: u64,
}

impl std::ops::AddAssign for MemoryStats {
    fn add_assign(&mut self, o: Self) {
        self.hits += o.hits;
        self.misses += o.misses;
        self.bank_conflicts += o.bank_conflicts;
        self.miss_stall_cycles += o.miss_stall_cycles;
        self.conflict_stall_cycles += o.conflict_stall_cycles;
        self.prefetched_bytes += o.prefetched_bytes;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub total_cycles: u64,
    pub layer_cycles: Vec<u64>,
    /// Busy cycles per PE, stalls included.
    pub busy: BusyCycles,
    pub events: EventCounts,
    pub energy: EnergyBreakdown,
    pub memory: MemoryStats,
    /// sha256 of each layer's output levels.
    pub output_hashes: Vec<String>,
}

impl SimReport {
    pub fn energy_total(&self) -> f64 {
        self.energy.total()
    }

    pub fn edp(&self) -> f64 {
        self.energy_total() * self.total_cycles as f64
    }

    pub fn utilization(&self) -> f64 {
        utilization(self)
    }

    /// Latency ratio `baseline / self`.
    pub fn speedup_over(&self, baseline: &SimReport) -> f64 {
        baseline.total_cycles as f64 / self.total_cycles as f64
    }

    /// Energy ratio `baseline / self`.
    pub fn efficiency_over(&self, baseline: &SimReport) -> f64 {
        baseline.energy_total() / self.energy_total()
    }

    pub fn latency_seconds(&self, hw: &HardwareConfig) -> f64 {
        self.total_cycles as f64 / hw.clock_hz
    }

    /// Flat `metric,value` CSV.
    pub fn to_csv(&self) -> String {
        let p = power_breakdown(&self.energy);
        let mut s = String::from("metric,value\n");
        let mut row = |k: &str, v: String| {
            let _ = writeln!(s, "{k},{v}");
        };
        row("total_cycles", self.total_cycles.to_string());
        row("energy", format!("{:.6}", self.energy_total()));
        row("edp", format!("{:.6e}", self.edp()));
        row("utilization", format!("{:.6}", self.utilization()));
        row("cache_share", format!("{:.6}", p.cache));
        row("ann_share", format!("{:.6}", p.ann));
        row("snn_share", format!("{:.6}", p.snn));
        row("cache_hits", self.memory.hits.to_string());
        row("cache_misses", self.memory.misses.to_string());
        row("bank_conflicts", self.memory.bank_conflicts.to_string());
        for (i, c) in self.layer_cycles.iter().enumerate() {
            row(&format!("layer{i}_cycles"), c.to_string());
        }
        s
    }
}

/// `sum busy / (total cycles * PEs)`.
pub fn utilization(report: &SimReport) -> f64 {
    let pes = report.busy.snn.len() + report.busy.ann.len();
    if report.total_cycles == 0 || pes == 0 {
        return 0.0;
    }
    let busy: u64 = report.busy.snn.iter().chain(&report.busy.ann).sum();
    busy as f64 / (report.total_cycles as f64 * pes as f64)
}

/// Per-(row, column) work the PEs replay.
struct DotWork {
    matches: u32,
    levels: u32,
}

fn fiber_lines(f: &BitmapVector, line_bytes: usize) -> usize {
    (f.len().div_ceil(8) + f.nnz()).div_ceil(line_bytes).max(1)
}

fn fiber_beats(f: &BitmapVector) -> u64 {
    (0..f.bits.num_windows())
        .map(|s| 1 + (f.bits.window(s).count_ones() as usize).div_ceil(VALUES_PER_BEAT) as u64)
        .sum()
}

fn sum_levels(a: &BitmapVector, w: &BitmapVector) -> u32 {
    let mut s = 0u32;
    let _ = crate::sparse::try_for_each_match::<(), _>(a, w, |x, _| {
        s += x as u32;
        Ok(())
    });
    s
}

pub fn simulate_layer(job: &LayerJob<'_>, hw: &HardwareConfig, w: &EnergyWeights) -> Result<SimReport> {
    Ok(simulate_layer_output(Exec::default(), job, hw, w)?.0)
}

/// Simulates one layer and also returns its value output.
pub fn simulate_layer_output(
    exec: Exec,
    job: &LayerJob<'_>,
    hw: &HardwareConfig,
    w: &EnergyWeights,
) -> Result<(SimReport, BitmapMatrix)> {
    hw.validate()?;
    w.validate()?;
    job.validate(hw)?;
    let mask = ModeMask::from_bools(&job.assignment.to_snn);
    let output = hybrid_gemm_with(exec, job.a, job.b, &mask, &job.quant)?;

    let (m_rows, k, n_cols) = (job.a.rows, job.a.cols, job.b.cols);
    let chunks = chunks_of(k);
    let levels = job.quant.levels() as u64;
    let lb = hw.line_bytes;

    // line layout: A row fibers, then B column fibers
    let a_lines: Vec<usize> = job.a.fibers.iter().map(|f| fiber_lines(f, lb)).collect();
    let b_lines: Vec<usize> = job.b.fibers.iter().map(|f| fiber_lines(f, lb)).collect();
    let mut a_base = Vec::with_capacity(m_rows);
    let mut next = 0usize;
    for &l in &a_lines {
        a_base.push(next);
        next += l;
    }
    let mut b_base = Vec::with_capacity(n_cols);
    for &l in &b_lines {
        b_base.push(next);
        next += l;
    }
    let mut uses = vec![n_cols as u32; next];
    for u in &mut uses[a_base.last().map_or(0, |&b| b + a_lines[m_rows - 1])..] {
        *u = 1;
    }
    let a_beats: Vec<u64> = job.a.fibers.iter().map(fiber_beats).collect();
    let b_beats: Vec<u64> = job.b.fibers.iter().map(fiber_beats).collect();

    let work: Vec<Vec<DotWork>> = par::try_map_range(exec, n_cols, |n| {
        let col = &job.b.fibers[n];
        let snn = job.assignment.to_snn[n];
        job.a
            .fibers
            .iter()
            .map(|row| {
                Ok(DotWork {
                    matches: match_count(&row.bits, &col.bits)? as u32,
                    levels: if snn { sum_levels(row, col) } else { 0 },
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let queues: [&[Vec<usize>]; 2] = [&job.assignment.packing.snn, &job.assignment.packing.ann];
    let modes = [Mode::Snn, Mode::Ann];

    let mut cache = FiberCache::new(hw.cache_sets(), hw.usable_ways(), uses);
    let mut prefetched_lines = 0u64;
    for m in 0..m_rows {
        for l in a_base[m]..a_base[m] + a_lines[m] {
            prefetched_lines += cache.prefetch(l) as u64;
        }
    }
    let depth = queues.iter().flat_map(|q| q.iter().map(Vec::len)).max().unwrap_or(0);
    for r in 0..depth {
        for q in queues {
            for pe in q.iter().filter_map(|p| p.get(r)) {
                for l in b_base[*pe]..b_base[*pe] + b_lines[*pe] {
                    prefetched_lines += cache.prefetch(l) as u64;
                }
            }
        }
    }
    let mut banks = BankTracker::new(hw.cache_banks, hw.bank_window);
    let penalty = hw.miss_penalty();

    let mut ev = EventCounts::default();
    let mut mem = MemoryStats {
        prefetched_bytes: prefetched_lines * lb as u64,
        ..Default::default()
    };
    ev.hbm_bytes += mem.prefetched_bytes;

    struct Pe {
        col: usize,
        row: usize,
        time: u64,
        busy: u64,
    }
    let mut pes: [Vec<Pe>; 2] = [hw.snn_pes, hw.ann_pes].map(|p| {
        (0..p)
            .map(|_| Pe {
                col: 0,
                row: 0,
                time: 0,
                busy: 0,
            })
            .collect()
    });
    let mut heap = BinaryHeap::new();
    if m_rows > 0 {
        for (c, q) in queues.iter().enumerate() {
            for (p, list) in q.iter().enumerate() {
                if !list.is_empty() {
                    heap.push(Reverse((0u64, c, p)));
                }
            }
        }
    }

    let mut accesses: Vec<usize> = Vec::new();
    while let Some(Reverse((t, c, p))) = heap.pop() {
        let pe = &mut pes[c][p];
        let n = queues[c][p][pe.col];
        let m = pe.row;
        accesses.clear();
        if m == 0 {
            accesses.extend(b_base[n]..b_base[n] + b_lines[n]);
            ev.crossbar_beats += b_beats[n];
        }
        accesses.extend(a_base[m]..a_base[m] + a_lines[m]);
        ev.crossbar_beats += a_beats[m];
        ev.cache_reads += accesses.len() as u64;

        let mut cursor = t;
        let mut stall = 0u64;
        for &line in &accesses {
            let bank = cache.set_of(line) % hw.cache_banks;
            while !banks.claim(bank, cursor, line) {
                mem.bank_conflicts += 1;
                mem.conflict_stall_cycles += 1;
                stall += 1;
                cursor += 1;
            }
            if cache.access(line, cursor) {
                mem.hits += 1;
            } else {
                mem.misses += 1;
                mem.miss_stall_cycles += penalty;
                ev.hbm_bytes += lb as u64;
                stall += penalty;
                cursor += penalty;
            }
            cursor += 1;
        }

        let d = &work[n][m];
        let mode = modes[c];
        let cycles = dot_cycles(mode, d.matches as u64, chunks, levels, hw.per_chunk_warmup);
        match mode {
            Mode::Ann => {
                ev.ann_prefix_ops += 2 * chunks;
                ev.macs += d.matches as u64;
                ev.qcfs_evals += 1;
            }
            Mode::Snn => {
                ev.snn_prefix_ops += chunks;
                ev.laggy_prefix_ops += chunks;
                ev.spike_gens += d.matches as u64;
                ev.gated_accs += d.levels as u64;
                ev.reset_steps += levels;
            }
        }
        let dur = cycles + stall;
        pe.busy += dur;
        pe.time = t + dur;
        pe.row += 1;
        if pe.row == m_rows {
            pe.row = 0;
            pe.col += 1;
        }
        if pe.col < queues[c][p].len() {
            heap.push(Reverse((pe.time, c, p)));
        }
    }

    let finish = pes.iter().flatten().map(|p| p.time).max().unwrap_or(0);
    let total = hw.launch_cycles + finish;
    ev.cache_writes += output.compressed_bytes().div_ceil(lb) as u64;
    ev.snn_control_cycles = hw.snn_pes as u64 * total;
    ev.ann_control_cycles = hw.ann_pes as u64 * total;
    let [snn, ann] = pes.map(|v| v.into_iter().map(|p| p.busy).collect::<Vec<_>>());
    let report = SimReport {
        total_cycles: total,
        layer_cycles: vec![total],
        busy: BusyCycles { snn, ann },
        energy: ev.energy(w),
        events: ev,
        memory: mem,
        output_hashes: vec![output_hash(&output)],
    };
    Ok((report, output))
}

pub fn output_hash(output: &BitmapMatrix) -> String {
    let mut buf = Vec::new();
    crate::sparse::write_matrix(output, &mut buf).expect("writing to a Vec cannot fail");
    crate::hash::bytes_hash(&buf)
}

/// Runs layers in order with double-buffered operand fetch: layer `i+1`'s
/// operands stream from HBM while layer `i` computes, and a layer starts once
/// both its predecessor and its fetch are done.
pub fn simulate_network(jobs: &[LayerJob<'_>], hw: &HardwareConfig, w: &EnergyWeights) -> Result<SimReport> {
    simulate_network_with(Exec::default(), jobs, hw, w)
}

pub fn simulate_network_with(
    exec: Exec,
    jobs: &[LayerJob<'_>],
    hw: &HardwareConfig,
    w: &EnergyWeights,
) -> Result<SimReport> {
    hw.validate()?;
    // each layer owns a fresh half of the cache, so layers simulate independently
    let layers = par::try_map_range(exec, jobs.len(), |i| {
        simulate_layer_output(Exec::Sequential, &jobs[i], hw, w).map(|(r, _)| r)
    })?;
    let mut out = SimReport {
        busy: BusyCycles {
            snn: vec![0; hw.snn_pes],
            ann: vec![0; hw.ann_pes],
        },
        ..Default::default()
    };
    let mut prev_start = 0u64;
    let mut prev_end = 0u64;
    for (i, r) in layers.into_iter().enumerate() {
        let fetch = hw.fill_cycles(r.memory.prefetched_bytes);
        let start = if i == 0 {
            fetch
        } else {
            prev_end.max(prev_start + fetch)
        };
        prev_start = start;
        prev_end = start + r.total_cycles;
        out.layer_cycles.push(r.total_cycles);
        for (acc, b) in out.busy.snn.iter_mut().zip(&r.busy.snn) {
            *acc += b;
        }
        for (acc, b) in out.busy.ann.iter_mut().zip(&r.busy.ann) {
            *acc += b;
        }
        out.events += r.events;
        out.memory += r.memory;
        out.output_hashes.extend(r.output_hashes);
    }
    out.total_cycles = prev_end;
    out.events.snn_control_cycles = hw.snn_pes as u64 * out.total_cycles;
    out.events.ann_control_cycles = hw.ann_pes as u64 * out.total_cycles;
    out.energy = out.events.energy(w);
    Ok(out)
}
