//! Staged on-disk pipeline: gen, profile, calibrate, schedule, simulate.
//!
//! ```text
//! <out>/gen/manifest.json
//! <out>/gen/<net>/<layer>/{weights,test,val-<s>}.nfbm
//! <out>/profile/<net>.json
//! <out>/calibrate/<net>.json
//! <out>/schedule/<net>/<tag>.json      (+ cost.trace.json)
//! <out>/simulate/<net>/<tag>.{json,csv}, simulate/summary.csv
//! ```
//!
//! Every JSON artifact is an [`Artifact`] envelope whose `inputs` map holds
//! the hash of the config section it depends on and of each upstream file.
//! Loading re-derives those hashes and refuses stale inputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{derive_seed, plan_layers, CostTrace, Setup};
use crate::cost::{ColumnStats, CostParams};
use crate::hash::{bytes_hash, content_hash};
use crate::neuro::QuantConfig;
use crate::par::{self, Exec};
use crate::sched::{check_provenance, emit_bitmask, Strategy};
use crate::sim::{calibrate_layer, simulate_network_with, EnergyWeights, HardwareConfig, LayerJob, SimReport};
use crate::sparse::{read_matrix, write_matrix, BitmapMatrix};
use crate::workload::{
    gen_workload_with, mean_row_nnz, profile_with, reference_suite, LayerDescriptor, Network, SampleSet,
};
use crate::{Error, Result};

/// Where per-layer cost coefficients come from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CostWire", into = "CostWire")]
pub enum CostSource {
    /// Microbenchmark every layer on the configured hardware.
    #[default]
    Calibrate,
    /// Use these coefficients for every layer.
    Fixed(CostParams),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum CostWire {
    Keyword(String),
    Fixed(CostParams),
}

impl TryFrom<CostWire> for CostSource {
    type Error = String;

    fn try_from(w: CostWire) -> std::result::Result<Self, String> {
        match w {
            CostWire::Keyword(k) if k == "calibrate" => Ok(CostSource::Calibrate),
            CostWire::Keyword(k) => Err(format!("cost must be \"calibrate\" or a parameter object, got {k:?}")),
            CostWire::Fixed(p) => Ok(CostSource::Fixed(p)),
        }
    }
}

impl From<CostSource> for CostWire {
    fn from(c: CostSource) -> Self {
        match c {
            CostSource::Calibrate => CostWire::Keyword("calibrate".into()),
            CostSource::Fixed(p) => CostWire::Fixed(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Inline descriptor set; ignored when `descriptors` names a file.
    pub networks: Vec<Network>,
    /// JSON file holding a list of networks, relative to the config file.
    pub descriptors: Option<PathBuf>,
    pub quant: QuantConfig,
    pub hardware: HardwareConfig,
    pub energy: EnergyWeights,
    pub cost: CostSource,
    pub strategies: Vec<Strategy>,
    /// Seeds of the random baseline, one schedule each.
    pub seeds: Vec<u64>,
    pub samples: usize,
    pub quantile: f64,
    /// Base seed of workload generation.
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let setup = Setup::default();
        ExperimentConfig {
            networks: reference_suite(),
            descriptors: None,
            quant: setup.quant,
            hardware: setup.hardware,
            energy: setup.energy,
            cost: CostSource::Calibrate,
            strategies: vec![
                Strategy::Cost,
                Strategy::Random,
                Strategy::AnnOnly,
                Strategy::SnnOnly,
                Strategy::LayerWise(1),
            ],
            seeds: vec![1, 2, 3, 4, 5],
            samples: setup.samples,
            quantile: setup.quantile,
            seed: setup.seed,
            out: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    /// Parses a config file and resolves `descriptors` against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let Some(d) = cfg.descriptors.take() {
            let d = path.parent().map(|p| p.join(&d)).unwrap_or(d);
            let text = std::fs::read_to_string(&d)
                .map_err(|e| Error::Config(format!("descriptor file {}: {e}", d.display())))?;
            cfg.networks = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", d.display())))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.strategies.is_empty() {
            return bad("strategy list is empty".into());
        }
        if self.strategies.contains(&Strategy::Random) && self.seeds.is_empty() {
            return bad("random strategy needs at least one seed".into());
        }
        if self.samples == 0 {
            return bad("samples must be positive".into());
        }
        if !(self.quantile > 0.0 && self.quantile < 1.0) {
            return bad(format!("quantile {} not in (0, 1)", self.quantile));
        }
        if self.networks.is_empty() {
            return bad("no networks configured".into());
        }
        if self.descriptors.is_some() {
            return bad("descriptor file not resolved; use ExperimentConfig::load".into());
        }
        self.hardware.validate()?;
        self.energy.validate()?;
        let mut names = std::collections::BTreeSet::new();
        for net in &self.networks {
            if !safe_name(&net.name) || !names.insert(&net.name) {
                return bad(format!("network name {:?} is empty, unsafe or repeated", net.name));
            }
            let mut layers = std::collections::BTreeSet::new();
            for l in &net.layers {
                if !safe_name(&l.name) || !layers.insert(&l.name) {
                    return bad(format!(
                        "layer name {:?} in {} is empty, unsafe or repeated",
                        l.name, net.name
                    ));
                }
                l.validate()
                    .map_err(|e| Error::Config(format!("{}/{}: {e}", net.name, l.name)))?;
            }
        }
        if let CostSource::Fixed(p) = self.cost {
            p.validate()
                .map_err(|e| Error::Config(format!("fixed cost parameters: {e}")))?;
            if (p.snn.pes, p.ann.pes) != (self.hardware.snn_pes, self.hardware.ann_pes) {
                return bad("fixed cost parameters disagree with the hardware PE counts".into());
            }
        }
        Ok(())
    }

    pub fn setup(&self) -> Setup {
        Setup {
            quant: self.quant,
            hardware: self.hardware,
            energy: self.energy,
            samples: self.samples,
            quantile: self.quantile,
            seed: self.seed,
        }
    }

    /// Schedule tags in run order: one per strategy, one per seed for random.
    pub fn tags(&self) -> Vec<(String, Strategy, u64)> {
        let mut out = Vec::new();
        for &s in &self.strategies {
            if s == Strategy::Random {
                out.extend(self.seeds.iter().map(|&seed| (format!("random-{seed}"), s, seed)));
            } else {
                out.push((s.to_string(), s, 0));
            }
        }
        out
    }
}

fn safe_name(s: &str) -> bool {
    !s.is_empty() && s != "." && s != ".." && s.chars().all(|c| c.is_ascii_alphanumeric() || "._-".contains(c))
}

/// JSON envelope shared by every stage output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub stage: String,
    /// `config` plus one entry per upstream file (path relative to the
    /// output root), each a hex SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub data: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenLayer {
    pub desc: LayerDescriptor,
    pub seed: u64,
    /// Directory relative to the output root.
    pub dir: String,
    /// Matrix file names in `dir` with their hashes.
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenNetwork {
    pub name: String,
    pub layers: Vec<GenLayer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileLayer {
    pub name: String,
    pub rows: usize,
    pub k: usize,
    pub mean_row_nnz: f64,
    pub stats: ColumnStats,
}

pub const GEN: &str = "gen";
pub const PROFILE: &str = "profile";
pub const CALIBRATE: &str = "calibrate";
pub const SCHEDULE: &str = "schedule";
pub const SIMULATE: &str = "simulate";

/// Paths under one output root.
#[derive(Debug, Clone)]
pub struct Dirs {
    pub root: PathBuf,
}

impl Dirs {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Dirs { root: root.into() }
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("gen/manifest.json")
    }

    pub fn profile(&self, net: &str) -> PathBuf {
        self.root.join(format!("profile/{net}.json"))
    }

    pub fn calibrate(&self, net: &str) -> PathBuf {
        self.root.join(format!("calibrate/{net}.json"))
    }

    pub fn schedule(&self, net: &str, tag: &str) -> PathBuf {
        self.root.join(format!("schedule/{net}/{tag}.json"))
    }

    pub fn trace(&self, net: &str) -> PathBuf {
        self.root.join(format!("schedule/{net}/cost.trace.json"))
    }

    pub fn report(&self, net: &str, tag: &str) -> PathBuf {
        self.root.join(format!("simulate/{net}/{tag}.json"))
    }

    pub fn summary(&self) -> PathBuf {
        self.root.join("simulate/summary.csv")
    }

    pub fn sweep(&self, axis: &str) -> PathBuf {
        self.root.join(format!("sweep/{axis}.csv"))
    }

    pub fn verify(&self) -> PathBuf {
        self.root.join("verify/report.json")
    }

    fn rel(&self, p: &Path) -> String {
        p.strip_prefix(&self.root)
            .unwrap_or(p)
            .to_string_lossy()
            .replace('\\', "/")
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, (serde_json::to_string_pretty(value)? + "\n").as_bytes())
}

fn read_input(stage: &'static str, path: &Path) -> Result<Vec<u8>> {
    match std::fs::read(path) {
        Ok(b) => Ok(b),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::MissingStage {
            stage,
            path: path.to_path_buf(),
        }),
        Err(e) => Err(Error::io(path, e)),
    }
}

/// Reads an upstream artifact and checks its config hash.
fn load_artifact<T: DeserializeOwned>(stage: &'static str, path: &Path, config: &str) -> Result<(Artifact<T>, String)> {
    let bytes = read_input(stage, path)?;
    let art: Artifact<T> = serde_json::from_slice(&bytes)?;
    if art.stage != stage || art.inputs.get("config").map(String::as_str) != Some(config) {
        return Err(Error::Stale {
            stage,
            path: path.to_path_buf(),
        });
    }
    Ok((art, bytes_hash(&bytes)))
}

/// Fails unless every recorded upstream hash still matches.
fn check_inputs(
    dirs: &Dirs,
    stage: &'static str,
    path: &Path,
    inputs: &BTreeMap<String, String>,
    current: &BTreeMap<String, String>,
) -> Result<()> {
    for (k, v) in current {
        if inputs.get(k) != Some(v) {
            log::debug!("{} input {k} changed", dirs.rel(path));
            return Err(Error::Stale {
                stage,
                path: path.to_path_buf(),
            });
        }
    }
    Ok(())
}

fn gen_key(cfg: &ExperimentConfig) -> String {
    content_hash(&(&cfg.networks, cfg.quant, cfg.samples, cfg.seed))
}

fn profile_key(cfg: &ExperimentConfig) -> String {
    content_hash(&(gen_key(cfg), cfg.quantile))
}

fn calibrate_key(cfg: &ExperimentConfig) -> String {
    content_hash(&(cfg.hardware, cfg.energy, cfg.quant, cfg.cost))
}

fn schedule_key(cfg: &ExperimentConfig) -> String {
    content_hash(&(&cfg.strategies, &cfg.seeds))
}

fn simulate_key(cfg: &ExperimentConfig) -> String {
    content_hash(&(cfg.hardware, cfg.energy, cfg.quant))
}

fn inputs(config: String, files: impl IntoIterator<Item = (String, String)>) -> BTreeMap<String, String> {
    let mut m: BTreeMap<String, String> = files.into_iter().collect();
    m.insert("config".into(), config);
    m
}

fn matrix_bytes(m: &BitmapMatrix) -> Vec<u8> {
    let mut buf = Vec::new();
    write_matrix(m, &mut buf).expect("writing to memory cannot fail");
    buf
}

/// Generates every layer's weights, validation samples and test input.
pub fn cmd_gen(exec: Exec, cfg: &ExperimentConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let dirs = Dirs::new(&cfg.out);
    let setup = cfg.setup();
    let mut nets = Vec::new();
    for net in &cfg.networks {
        let layers = par::try_map_range(exec, net.layers.len(), |i| -> Result<GenLayer> {
            let desc = &net.layers[i];
            let seed = derive_seed(setup.seed, &format!("{}/{}/{i}", net.name, desc.name));
            let w = gen_workload_with(Exec::Sequential, desc, &setup.quant, setup.samples, seed)?;
            let dir = format!("{GEN}/{}/{}", net.name, desc.name);
            let mut files = BTreeMap::new();
            let named = [("weights".to_string(), &w.weights), ("test".to_string(), &w.test)]
                .into_iter()
                .chain(
                    w.validation
                        .samples
                        .iter()
                        .enumerate()
                        .map(|(s, m)| (format!("val-{s}"), m)),
                );
            for (name, m) in named {
                let file = format!("{name}.nfbm");
                let bytes = matrix_bytes(m);
                write_file(&dirs.root.join(&dir).join(&file), &bytes)?;
                files.insert(file, bytes_hash(&bytes));
            }
            Ok(GenLayer {
                desc: desc.clone(),
                seed,
                dir,
                files,
            })
        })?;
        nets.push(GenNetwork {
            name: net.name.clone(),
            layers,
        });
    }
    let path = dirs.manifest();
    write_json(
        &path,
        &Artifact {
            stage: GEN.into(),
            inputs: inputs(gen_key(cfg), []),
            data: nets,
        },
    )?;
    Ok(path)
}

fn load_manifest(dirs: &Dirs, cfg: &ExperimentConfig) -> Result<(Vec<GenNetwork>, String)> {
    let (art, hash) = load_artifact::<Vec<GenNetwork>>(GEN, &dirs.manifest(), &gen_key(cfg))?;
    Ok((art.data, hash))
}

fn gen_network<'a>(nets: &'a [GenNetwork], name: &str, dirs: &Dirs) -> Result<&'a GenNetwork> {
    nets.iter().find(|n| n.name == name).ok_or_else(|| Error::Stale {
        stage: GEN,
        path: dirs.manifest(),
    })
}

fn load_matrix(dirs: &Dirs, layer: &GenLayer, name: &str) -> Result<BitmapMatrix> {
    let file = format!("{name}.nfbm");
    let path = dirs.root.join(&layer.dir).join(&file);
    let bytes = read_input(GEN, &path)?;
    if layer.files.get(&file) != Some(&bytes_hash(&bytes)) {
        return Err(Error::Stale { stage: GEN, path });
    }
    read_matrix(bytes.as_slice())
}

/// Profiles validation samples into per-column statistics.
pub fn cmd_profile(exec: Exec, cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let dirs = Dirs::new(&cfg.out);
    let (manifest, mhash) = load_manifest(&dirs, cfg)?;
    let mut written = Vec::new();
    for net in &cfg.networks {
        let g = gen_network(&manifest, &net.name, &dirs)?;
        let layers = par::try_map_range(exec, g.layers.len(), |i| -> Result<ProfileLayer> {
            let l = &g.layers[i];
            let weights = load_matrix(&dirs, l, "weights")?;
            let samples = (0..cfg.samples)
                .map(|s| load_matrix(&dirs, l, &format!("val-{s}")))
                .collect::<Result<Vec<_>>>()?;
            let set = SampleSet { seed: l.seed, samples };
            let stats = profile_with(Exec::Sequential, &set, &weights, cfg.quantile)?;
            let (rows, k, _) = l.desc.gemm_dims()?;
            Ok(ProfileLayer {
                name: l.desc.name.clone(),
                rows,
                k,
                mean_row_nnz: mean_row_nnz(&set),
                stats,
            })
        })?;
        let path = dirs.profile(&net.name);
        write_json(
            &path,
            &Artifact {
                stage: PROFILE.into(),
                inputs: inputs(profile_key(cfg), [(dirs.rel(&dirs.manifest()), mhash.clone())]),
                data: layers,
            },
        )?;
        written.push(path);
    }
    Ok(written)
}

fn load_profile(dirs: &Dirs, cfg: &ExperimentConfig, net: &str) -> Result<(Vec<ProfileLayer>, String)> {
    let path = dirs.profile(net);
    let (art, hash) = load_artifact::<Vec<ProfileLayer>>(PROFILE, &path, &profile_key(cfg))?;
    let mhash = bytes_hash(&read_input(GEN, &dirs.manifest())?);
    check_inputs(
        dirs,
        PROFILE,
        &path,
        &art.inputs,
        &inputs(profile_key(cfg), [(dirs.rel(&dirs.manifest()), mhash)]),
    )?;
    Ok((art.data, hash))
}

/// Fits per-layer cost coefficients, or copies the fixed ones.
pub fn cmd_calibrate(exec: Exec, cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let dirs = Dirs::new(&cfg.out);
    let mut written = Vec::new();
    for net in &cfg.networks {
        let (layers, phash) = load_profile(&dirs, cfg, &net.name)?;
        let params = par::try_map_range(exec, layers.len(), |i| -> Result<CostParams> {
            let l = &layers[i];
            match cfg.cost {
                CostSource::Calibrate => {
                    calibrate_layer(&cfg.hardware, &cfg.energy, &cfg.quant, l.k, l.rows, l.mean_row_nnz)
                }
                CostSource::Fixed(p) => Ok(p),
            }
        })?;
        let path = dirs.calibrate(&net.name);
        write_json(
            &path,
            &Artifact {
                stage: CALIBRATE.into(),
                inputs: inputs(calibrate_key(cfg), [(dirs.rel(&dirs.profile(&net.name)), phash)]),
                data: params,
            },
        )?;
        written.push(path);
    }
    Ok(written)
}

fn load_calibration(dirs: &Dirs, cfg: &ExperimentConfig, net: &str, profile_hash: &str) -> Result<Vec<CostParams>> {
    let path = dirs.calibrate(net);
    let (art, _) = load_artifact::<Vec<CostParams>>(CALIBRATE, &path, &calibrate_key(cfg))?;
    let want = inputs(
        calibrate_key(cfg),
        [(dirs.rel(&dirs.profile(net)), profile_hash.to_string())],
    );
    check_inputs(dirs, CALIBRATE, &path, &art.inputs, &want)?;
    Ok(art.data)
}

fn scheduling_inputs(dirs: &Dirs, cfg: &ExperimentConfig, net: &str) -> Result<(Vec<ColumnStats>, Vec<CostParams>)> {
    let (layers, phash) = load_profile(dirs, cfg, net)?;
    let params = load_calibration(dirs, cfg, net, &phash)?;
    if params.len() != layers.len() {
        return Err(Error::Stale {
            stage: CALIBRATE,
            path: dirs.calibrate(net),
        });
    }
    Ok((layers.into_iter().map(|l| l.stats).collect(), params))
}

/// Plans every configured strategy; the cost strategy also writes its
/// lambda choices and Stage-2 traces.
pub fn cmd_schedule(exec: Exec, cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let dirs = Dirs::new(&cfg.out);
    let mut written = Vec::new();
    for net in &cfg.networks {
        let (stats, params) = scheduling_inputs(&dirs, cfg, &net.name)?;
        for (tag, strategy, seed) in cfg.tags() {
            let (schedule, trace) = plan_layers(exec, &stats, &params, strategy, seed)?;
            let path = dirs.schedule(&net.name, &tag);
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            emit_bitmask(&schedule, &path)?;
            written.push(path);
            if let Some(trace) = trace {
                let path = dirs.trace(&net.name);
                write_json(
                    &path,
                    &Artifact {
                        stage: SCHEDULE.into(),
                        inputs: inputs(schedule_key(cfg), []),
                        data: trace,
                    },
                )?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

/// Stage-2 traces written by the cost strategy.
pub fn load_trace(dirs: &Dirs, cfg: &ExperimentConfig, net: &str) -> Result<CostTrace> {
    Ok(
        load_artifact::<CostTrace>(SCHEDULE, &dirs.trace(net), &schedule_key(cfg))?
            .0
            .data,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub network: String,
    pub tag: String,
    pub report: SimReport,
}

/// Simulates the held-out test input of every network under every schedule.
pub fn cmd_simulate(exec: Exec, cfg: &ExperimentConfig) -> Result<Vec<SummaryRow>> {
    cfg.validate()?;
    let dirs = Dirs::new(&cfg.out);
    let (manifest, mhash) = load_manifest(&dirs, cfg)?;
    let mut rows = Vec::new();
    for net in &cfg.networks {
        let (stats, params) = scheduling_inputs(&dirs, cfg, &net.name)?;
        let g = gen_network(&manifest, &net.name, &dirs)?;
        let operands = par::try_map_range(exec, g.layers.len(), |i| -> Result<(BitmapMatrix, BitmapMatrix)> {
            Ok((
                load_matrix(&dirs, &g.layers[i], "test")?,
                load_matrix(&dirs, &g.layers[i], "weights")?,
            ))
        })?;
        let stats_ref: Vec<&ColumnStats> = stats.iter().collect();
        let tags = cfg.tags();
        let reports = par::try_map_range(exec, tags.len(), |t| -> Result<SummaryRow> {
            let tag = &tags[t].0;
            let spath = dirs.schedule(&net.name, tag);
            let bytes = read_input(SCHEDULE, &spath)?;
            let schedule: crate::sched::Schedule = serde_json::from_slice(&bytes)?;
            if !check_provenance(&schedule, &params, &stats_ref).is_empty() || schedule.layers.len() != operands.len() {
                return Err(Error::Stale {
                    stage: SCHEDULE,
                    path: spath,
                });
            }
            let jobs: Vec<LayerJob<'_>> = operands
                .iter()
                .zip(&schedule.layers)
                .map(|((a, b), assignment)| LayerJob {
                    a,
                    b,
                    quant: cfg.quant,
                    assignment,
                })
                .collect();
            let report = simulate_network_with(Exec::Sequential, &jobs, &cfg.hardware, &cfg.energy)?;
            let path = dirs.report(&net.name, tag);
            write_json(
                &path,
                &Artifact {
                    stage: SIMULATE.into(),
                    inputs: inputs(
                        simulate_key(cfg),
                        [
                            (dirs.rel(&spath), bytes_hash(&bytes)),
                            (dirs.rel(&dirs.manifest()), mhash.clone()),
                        ],
                    ),
                    data: &report,
                },
            )?;
            write_file(&path.with_extension("csv"), report.to_csv().as_bytes())?;
            Ok(SummaryRow {
                network: net.name.clone(),
                tag: tag.clone(),
                report,
            })
        })?;
        rows.extend(reports);
    }
    write_file(&dirs.summary(), summary_csv(&rows).as_bytes())?;
    Ok(rows)
}

/// One row per (network, schedule); ratios are against the network's
/// ann-only run when there is one.
pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from("network,schedule,cycles,energy,edp,utilization,speedup_vs_ann,efficiency_vs_ann\n");
    for r in rows {
        let base = rows
            .iter()
            .find(|b| b.network == r.network && b.tag == Strategy::AnnOnly.to_string());
        let ratio = |f: fn(&SimReport, &SimReport) -> f64| {
            base.map(|b| format!("{:.6}", f(&r.report, &b.report)))
                .unwrap_or_default()
        };
        let _ = writeln!(
            s,
            "{},{},{},{:.6},{:.6e},{:.6},{},{}",
            r.network,
            r.tag,
            r.report.total_cycles,
            r.report.energy_total(),
            r.report.edp(),
            r.report.utilization(),
            ratio(SimReport::speedup_over),
            ratio(SimReport::efficiency_over),
        );
    }
    s
}

/// All five stages in order.
pub fn run_pipeline(exec: Exec, cfg: &ExperimentConfig) -> Result<Vec<SummaryRow>> {
    cmd_gen(exec, cfg)?;
    cmd_profile(exec, cfg)?;
    cmd_calibrate(exec, cfg)?;
    cmd_schedule(exec, cfg)?;
    cmd_simulate(exec, cfg)
}

/// Runs one sweep axis and writes `sweep/<axis>.csv`.
pub fn cmd_sweep(exec: Exec, cfg: &ExperimentConfig, axis: super::Axis) -> Result<PathBuf> {
    cfg.validate()?;
    let rows = super::run_sweep(exec, axis, &cfg.networks, &cfg.setup())?;
    let path = Dirs::new(&cfg.out).sweep(&axis.to_string());
    write_file(&path, super::sweep_csv(&rows).as_bytes())?;
    Ok(path)
}

/// Runs every verification suite and writes `verify/report.json`.
pub fn cmd_verify(exec: Exec, cfg: &ExperimentConfig) -> Result<super::VerifyReport> {
    cfg.validate()?;
    let report = super::verify(exec, cfg.seed)?;
    write_json(&Dirs::new(&cfg.out).verify(), &report)?;
    Ok(report)
}
