//! Transient injection campaigns: golden runs, outcome classification,
//! seeded randomized campaigns, deterministic sweeps and the named
//! waveform scenarios.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, KeyValues};
use crate::kernel::Time;
use crate::netlist::SigId;
use crate::sim::{simulate, SetPulse, SimConfig, SimError, SimResult, TraceMode};
use crate::timing::{TimingConfig, TimingError};
use crate::variants::{build, Design, PipelineSpec, Variant, VariantError, RESET_RELEASE};
use crate::vcd::Trace;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskKind {
    /// The pulse never reached a storage data pin.
    Logical,
    /// A gate's inertia swallowed it.
    Electrical,
    /// It reached a data pin outside every sampling window.
    Temporal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Masked(MaskKind),
    Corrected(u32),
    SilentCorruption,
    Deadlock,
    FalseAlarm,
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Masked(MaskKind::Logical) => "masked_logical",
            Outcome::Masked(MaskKind::Electrical) => "masked_electrical",
            Outcome::Masked(MaskKind::Temporal) => "masked_temporal",
            Outcome::Corrected(_) => "corrected",
            Outcome::SilentCorruption => "silent_corruption",
            Outcome::Deadlock => "deadlock",
            Outcome::FalseAlarm => "false_alarm",
        }
    }

    pub fn is_failure(&self) -> bool {
        matches!(self, Outcome::SilentCorruption | Outcome::Deadlock)
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Corrected(n) => write!(f, "corrected({n})"),
            o => f.write_str(o.label()),
        }
    }
}

#[derive(Debug, Error)]
pub enum FaultlabError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Timing(#[from] TimingError),
    #[error(transparent)]
    Variant(#[from] VariantError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("golden run delivered {got} of {want} tokens")]
    GoldenIncomplete { got: usize, want: usize },
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("{0}")]
    Scenario(String),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// The fault-free reference run.
#[derive(Clone, Debug)]
pub struct Golden {
    pub words: Vec<Option<u64>>,
    pub end: Time,
    pub result: SimResult,
}

pub fn golden_run(
    design: &Design,
    stimulus: &[u64],
    trace: TraceMode,
) -> Result<Golden, FaultlabError> {
    let cfg = SimConfig {
        tokens_expected: stimulus.len(),
        trace,
        ..SimConfig::default()
    };
    let result = simulate(&design.netlist, stimulus, cfg, &[])?;
    let words = result.words(0);
    if words.len() < stimulus.len() {
        return Err(FaultlabError::GoldenIncomplete {
            got: words.len(),
            want: stimulus.len(),
        });
    }
    let end = result.sinks[0].last().map_or(Time::ZERO, |r| r.time);
    Ok(Golden { words, end, result })
}

/// Classifies one faulty run against the golden run. `in_edl` tells
/// whether the transient was injected inside error detecting logic.
pub fn classify(golden: &Golden, res: &SimResult, in_edl: bool) -> Outcome {
    let words = res.words(0);
    if words.len() < golden.words.len() {
        return Outcome::Deadlock;
    }
    if words[..golden.words.len()] != golden.words[..] {
        return Outcome::SilentCorruption;
    }
    let extra = res.err_rises.saturating_sub(golden.result.err_rises);
    if extra > 0 {
        return if in_edl {
            Outcome::FalseAlarm
        } else {
            Outcome::Corrected(extra)
        };
    }
    if res.dpin_hash != golden.result.dpin_hash {
        Outcome::Masked(MaskKind::Temporal)
    } else if res.swallowed > golden.result.swallowed {
        Outcome::Masked(MaskKind::Electrical)
    } else {
        Outcome::Masked(MaskKind::Logical)
    }
}

/// One injection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trial {
    pub node: SigId,
    pub start: u64,
    pub width: u64,
    /// Seed of the Q-flop resolution draws.
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: Trial,
    pub outcome: Outcome,
    /// Completion time of the last token minus the golden one, ps.
    pub penalty: i64,
    /// Whether the watched signals match the golden waveforms, when a
    /// watch list was given.
    pub watched_equal: Option<bool>,
    pub metastable: u32,
}

/// A design, its stimulus and its golden run, ready for injections.
pub struct Lab<'d> {
    pub design: &'d Design,
    pub stimulus: Vec<u64>,
    pub golden: Golden,
    watch: Option<Vec<SigId>>,
    edl_nodes: HashSet<SigId>,
}

impl<'d> Lab<'d> {
    pub fn new(
        design: &'d Design,
        stimulus: &[u64],
        watch: Option<Vec<SigId>>,
    ) -> Result<Self, FaultlabError> {
        let mode = watch.clone().map_or(TraceMode::Off, TraceMode::Watch);
        let golden = golden_run(design, stimulus, mode)?;
        let nl = &design.netlist;
        let edl_nodes = nl
            .stages
            .iter()
            .flat_map(|s| s.edl.iter().map(|&g| nl.gates[g].output))
            .collect();
        Ok(Lab {
            design,
            stimulus: stimulus.to_vec(),
            golden,
            watch,
            edl_nodes,
        })
    }

    pub fn run_trial(&self, t: &Trial) -> Result<TrialResult, FaultlabError> {
        let trace = self.watch.clone().map_or(TraceMode::Off, TraceMode::Watch);
        let cfg = SimConfig {
            tokens_expected: self.stimulus.len(),
            seed: t.seed,
            trace,
            ..SimConfig::default()
        };
        let pulse = SetPulse {
            node: t.node,
            start: Time(t.start),
            width: t.width,
        };
        let res = simulate(&self.design.netlist, &self.stimulus, cfg, &[pulse])?;
        Ok(self.judge(*t, &res))
    }

    fn judge(&self, trial: Trial, res: &SimResult) -> TrialResult {
        let outcome = classify(&self.golden, res, self.edl_nodes.contains(&trial.node));
        let end = res.sinks[0]
            .get(self.golden.words.len().saturating_sub(1))
            .map_or(self.golden.end, |r| r.time);
        let watched_equal = match (&self.golden.result.trace, &res.trace) {
            (Some(g), Some(f)) => Some(traces_agree(g, f, self.golden.end)),
            _ => None,
        };
        TrialResult {
            trial,
            outcome,
            penalty: end.0 as i64 - self.golden.end.0 as i64,
            watched_equal,
            metastable: res.metastable,
        }
    }

    /// Runs trials in parallel; results keep the order of `trials`.
    pub fn run_trials(&self, trials: &[Trial]) -> Result<Vec<TrialResult>, FaultlabError> {
        trials.par_iter().map(|t| self.run_trial(t)).collect()
    }

    pub fn is_edl_node(&self, s: SigId) -> bool {
        self.edl_nodes.contains(&s)
    }
}

/// Both traces show the same changes up to `until`.
pub fn traces_agree(a: &Trace, b: &Trace, until: Time) -> bool {
    let cut = |t: &Trace| -> Vec<_> {
        t.changes
            .iter()
            .filter(|c| c.time <= until)
            .cloned()
            .collect()
    };
    a.names == b.names && cut(a) == cut(b)
}

/// Which gate outputs a campaign may strike.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeFilter {
    #[default]
    Comb,
    Controller,
    Edl,
    All,
}

impl FromStr for NodeFilter {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "comb" => Ok(NodeFilter::Comb),
            "controller" => Ok(NodeFilter::Controller),
            "edl" => Ok(NodeFilter::Edl),
            "all" => Ok(NodeFilter::All),
            _ => Err(format!("unknown node filter `{s}`")),
        }
    }
}

impl fmt::Display for NodeFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeFilter::Comb => "comb",
            NodeFilter::Controller => "controller",
            NodeFilter::Edl => "edl",
            NodeFilter::All => "all",
        })
    }
}

/// Outputs of the selected gates, in gate order.
pub fn select_nodes(design: &Design, filter: NodeFilter) -> Vec<SigId> {
    let nl = &design.netlist;
    let mut gates: Vec<usize> = nl
        .stages
        .iter()
        .flat_map(|s| {
            let mut v = Vec::new();
            if matches!(filter, NodeFilter::Comb | NodeFilter::All) {
                v.extend(&s.cone);
            }
            if matches!(filter, NodeFilter::Controller | NodeFilter::All) {
                v.extend(&s.ctrl);
            }
            if matches!(filter, NodeFilter::Edl | NodeFilter::All) {
                v.extend(&s.edl);
            }
            v
        })
        .collect();
    gates.sort_unstable();
    gates.into_iter().map(|g| nl.gates[g].output).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConeChoice {
    Mixed,
    Identity,
}

/// Campaign configuration, read from `key = value` text.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub variant: Variant,
    pub stages: usize,
    pub cone: ConeChoice,
    pub tokens: usize,
    pub n_trials: usize,
    pub width_min: u64,
    pub width_max: u64,
    /// Permits widths above tau.
    pub allow_wide: bool,
    pub node_filter: NodeFilter,
    pub seed: u64,
    pub timing: TimingConfig,
}

const CAMPAIGN_KEYS: &[&str] = &[
    "variant",
    "stages",
    "cone",
    "tokens",
    "n_trials",
    "width_min",
    "width_max",
    "allow_wide",
    "node_filter",
    "seed",
    "timing",
];

impl CampaignConfig {
    pub fn new(variant: Variant, n_trials: usize, seed: u64) -> Self {
        let timing = TimingConfig::preset();
        CampaignConfig {
            variant,
            stages: 4,
            cone: ConeChoice::Mixed,
            tokens: 6,
            n_trials,
            width_min: 1,
            width_max: timing.tau,
            allow_wide: false,
            node_filter: NodeFilter::Comb,
            seed,
            timing,
        }
    }

    /// Parses a campaign file; a `timing` path is resolved against `dir`.
    pub fn from_kv(text: &str, dir: &Path) -> Result<Self, FaultlabError> {
        let kv = KeyValues::parse(text)?;
        kv.restrict(CAMPAIGN_KEYS)?;
        let bad = |k: &str, v: &str| ConfigError::BadValue {
            key: k.into(),
            value: v.into(),
        };
        let variant = kv
            .raw("variant")
            .ok_or_else(|| ConfigError::Missing("variant".into()))?;
        let variant: Variant = variant.parse().map_err(|_| bad("variant", variant))?;
        let timing = match kv.raw("timing") {
            None => TimingConfig::preset(),
            Some(p) => {
                let path = dir.join(p);
                let text = std::fs::read_to_string(&path).map_err(|source| FaultlabError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                TimingConfig::from_kv(&text)?
            }
        };
        let mut c = CampaignConfig::new(variant, kv.require("n_trials")?, kv.get_or("seed", 0)?);
        c.width_max = timing.tau;
        c.timing = timing;
        c.stages = kv.get_or("stages", c.stages)?;
        c.tokens = kv.get_or("tokens", c.tokens)?;
        c.width_min = kv.get_or("width_min", c.width_min)?;
        c.width_max = kv.get_or("width_max", c.width_max)?;
        c.allow_wide = kv.get_or("allow_wide", false)?;
        if let Some(f) = kv.raw("node_filter") {
            c.node_filter = f.parse().map_err(|_| bad("node_filter", f))?;
        }
        if let Some(s) = kv.raw("cone") {
            c.cone = match s {
                "mixed" => ConeChoice::Mixed,
                "identity" => ConeChoice::Identity,
                _ => return Err(bad("cone", s).into()),
            };
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: &str| Err(ConfigError::Invalid(m.into()));
        if self.width_min == 0 || self.width_min > self.width_max {
            return invalid("need 1 <= width_min <= width_max");
        }
        if self.width_max > self.timing.tau && !self.allow_wide {
            return invalid("width_max exceeds tau; set allow_wide = true to override");
        }
        if self.stages == 0 || self.tokens == 0 {
            return invalid("stages and tokens must be positive");
        }
        Ok(())
    }

    /// Canonical text form, the input of the report digest.
    pub fn canonical(&self) -> String {
        let cone = match self.cone {
            ConeChoice::Mixed => "mixed",
            ConeChoice::Identity => "identity",
        };
        format!(
            "variant={}\nstages={}\ncone={}\ntokens={}\nn_trials={}\nwidth_min={}\nwidth_max={}\nallow_wide={}\nnode_filter={}\nseed={}\n{}",
            self.variant,
            self.stages,
            cone,
            self.tokens,
            self.n_trials,
            self.width_min,
            self.width_max,
            self.allow_wide,
            self.node_filter,
            self.seed,
            self.timing.to_kv()
        )
    }

    pub fn spec(&self) -> PipelineSpec {
        match self.cone {
            ConeChoice::Mixed => PipelineSpec::mixed(self.stages),
            ConeChoice::Identity => PipelineSpec::identity(self.stages, 8),
        }
    }
}

/// FNV-1a, used for config digests.
pub fn fnv64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x100_0000_01b3)
    })
}

/// A reproducible token sequence for `width`-bit buses.
pub fn stimulus(tokens: usize, width: usize, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f70_6be5);
    let mask = if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    };
    (0..tokens).map(|_| rng.random::<u64>() & mask).collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PenaltyStats {
    pub count: u64,
    pub min: i64,
    pub max: i64,
    pub mean: f64,
}

impl PenaltyStats {
    fn from_values(v: &[i64]) -> Self {
        if v.is_empty() {
            return PenaltyStats::default();
        }
        let sum: i64 = v.iter().sum();
        let mean = sum as f64 / v.len() as f64;
        PenaltyStats {
            count: v.len() as u64,
            min: *v.iter().min().unwrap_or(&0),
            max: *v.iter().max().unwrap_or(&0),
            mean: (mean * 1000.0).round() / 1000.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub variant: Variant,
    pub n_trials: usize,
    pub seed: u64,
    pub config_digest: String,
    pub node_filter: NodeFilter,
    pub nodes: usize,
    pub counts: BTreeMap<String, u64>,
    /// Counts restricted to widths above tau, reported without a verdict.
    pub beyond_tau: BTreeMap<String, u64>,
    pub per_node: BTreeMap<String, BTreeMap<String, u64>>,
    /// Corrected trials by number of re-samples.
    pub resamples: BTreeMap<u32, u64>,
    /// Extra completion time of corrected trials per re-sample, ps.
    pub penalty: PenaltyStats,
    pub metastable_trials: u64,
}

impl CampaignReport {
    pub fn count(&self, label: &str) -> u64 {
        self.counts.get(label).copied().unwrap_or(0)
    }
}

/// Draws the trials of a campaign from `seed`.
pub fn draw_trials(
    nodes: &[SigId],
    n: usize,
    widths: (u64, u64),
    window: (u64, u64),
    seed: u64,
) -> Vec<Trial> {
    (0..n as u64)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i + 1);
            Trial {
                node: nodes[rng.random_range(0..nodes.len())],
                start: rng.random_range(window.0..=window.1),
                width: rng.random_range(widths.0..=widths.1),
                seed: rng.random(),
            }
        })
        .collect()
}

pub fn run_campaign(cfg: &CampaignConfig) -> Result<CampaignReport, FaultlabError> {
    cfg.validate()?;
    let design = build(cfg.variant, &cfg.spec(), &cfg.timing)?;
    let stim = stimulus(cfg.tokens, design.spec.width(), cfg.seed);
    let lab = Lab::new(&design, &stim, None)?;
    let nodes = select_nodes(&design, cfg.node_filter);
    if nodes.is_empty() {
        return Err(ConfigError::Invalid(format!(
            "no {} nodes to inject in {}",
            cfg.node_filter, cfg.variant
        ))
        .into());
    }
    let start = if cfg.variant == Variant::Serad {
        RESET_RELEASE
    } else {
        0
    };
    let trials = draw_trials(
        &nodes,
        cfg.n_trials,
        (cfg.width_min, cfg.width_max),
        (start, lab.golden.end.0),
        cfg.seed,
    );
    let results = lab.run_trials(&trials)?;
    Ok(summarize(cfg, &lab, nodes.len(), &results))
}

pub fn summarize(
    cfg: &CampaignConfig,
    lab: &Lab<'_>,
    nodes: usize,
    results: &[TrialResult],
) -> CampaignReport {
    let nl = &lab.design.netlist;
    let mut counts = BTreeMap::new();
    let mut beyond = BTreeMap::new();
    let mut per_node: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
    let mut resamples = BTreeMap::new();
    let mut penalties = Vec::new();
    let mut meta = 0;
    for r in results {
        let label = r.outcome.label().to_string();
        *counts.entry(label.clone()).or_insert(0) += 1;
        if r.trial.width > cfg.timing.tau {
            *beyond.entry(label.clone()).or_insert(0) += 1;
        }
        *per_node
            .entry(nl.name(r.trial.node).to_string())
            .or_default()
            .entry(label)
            .or_insert(0) += 1;
        if let Outcome::Corrected(n) = r.outcome {
            *resamples.entry(n).or_insert(0) += 1;
            penalties.push(r.penalty / n as i64);
        }
        if r.metastable > 0 {
            meta += 1;
        }
    }
    CampaignReport {
        variant: cfg.variant,
        n_trials: results.len(),
        seed: cfg.seed,
        config_digest: format!("{:016x}", fnv64(cfg.canonical().as_bytes())),
        node_filter: cfg.node_filter,
        nodes,
        counts,
        beyond_tau: beyond,
        per_node,
        resamples,
        penalty: PenaltyStats::from_values(&penalties),
        metastable_trials: meta,
    }
}

/// Outcome tally of a deterministic sweep.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub trials: usize,
    pub counts: BTreeMap<String, u64>,
    /// Trials whose watched waveforms differ from the golden run.
    pub waveform_mismatches: usize,
    /// First few failing trials, for diagnosis.
    pub failures: Vec<TrialResult>,
}

impl SweepReport {
    pub fn count(&self, label: &str) -> u64 {
        self.counts.get(label).copied().unwrap_or(0)
    }
}

/// Every node × start time × width.
pub fn sweep(
    lab: &Lab<'_>,
    nodes: &[SigId],
    times: &[u64],
    widths: &[u64],
) -> Result<SweepReport, FaultlabError> {
    let mut trials = Vec::with_capacity(nodes.len() * times.len() * widths.len());
    for &node in nodes {
        for &start in times {
            for &width in widths {
                trials.push(Trial {
                    node,
                    start,
                    width,
                    seed: start ^ (node as u64) << 20 ^ width << 48,
                });
            }
        }
    }
    let results = lab.run_trials(&trials)?;
    let mut rep = SweepReport {
        trials: results.len(),
        ..Default::default()
    };
    for r in results {
        *rep.counts.entry(r.outcome.label().to_string()).or_insert(0) += 1;
        let mismatch = r.watched_equal == Some(false);
        if mismatch {
            rep.waveform_mismatches += 1;
        }
        if (r.outcome.is_failure() || mismatch) && rep.failures.len() < 10 {
            rep.failures.push(r);
        }
    }
    Ok(rep)
}

/// A named deterministic reproduction of one waveform experiment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub name: String,
    pub description: String,
    pub pulses: Vec<(String, u64, u64)>,
    pub outcome: Outcome,
    /// Extra CLK pulses of the struck stage.
    pub resamples: u32,
    /// Delay of the token's completion at the sink, ps.
    pub penalty: i64,
    pub data_ok: bool,
    /// Guarded controller outputs match the golden waveforms.
    pub outputs_clean: bool,
    #[serde(skip)]
    pub trace: Option<Trace>,
}

pub const SCENARIOS: [&str; 4] = ["fig7c", "fig7d", "case1", "case2"];

/// Struck stage and token of the scenarios.
const STAGE: usize = 2;
const TOKEN: usize = 2;

pub fn run_scenario(name: &str, t: &TimingConfig) -> Result<ScenarioReport, FaultlabError> {
    if !SCENARIOS.contains(&name) {
        return Err(FaultlabError::UnknownScenario(name.into()));
    }
    let design = build(Variant::Serad, &PipelineSpec::mixed(4), t)?;
    let stim = stimulus(6, 8, 7);
    let nl = &design.netlist;
    let sig = |n: &str| {
        nl.sig(n)
            .ok_or_else(|| FaultlabError::Scenario(format!("missing signal {n}")))
    };
    let mut outputs = Vec::new();
    for i in 1..=design.spec.stages.len() {
        for o in ["CLK", "RREQ", "LACK"] {
            outputs.push(sig(&format!("s{i}_{o}"))?);
        }
    }
    let mut watch = outputs.clone();
    let extra = [
        format!("s{STAGE}_r1_clk"),
        format!("s{STAGE}_r1_in_Rack"),
        format!("s{STAGE}_Err"),
        format!("s{STAGE}_Corr"),
        format!("s{STAGE}_Sample"),
    ];
    for e in &extra {
        watch.push(sig(e)?);
    }
    let clk = sig(&format!("s{STAGE}_CLK"))?;
    // the cone output feeding the latch of the top bit
    let dpin = nl
        .latches
        .iter()
        .find(|l| l.id == format!("s{STAGE}_dice7"))
        .map(|l| l.d)
        .ok_or_else(|| FaultlabError::Scenario("no latch".into()))?;

    let golden = golden_run(&design, &stim, TraceMode::Watch(watch.clone()))?;
    let gtr = golden.result.trace.as_ref().expect("traced");
    let ci = gtr.var(nl.name(clk)).expect("watched");
    let rise = gtr
        .rises(ci)
        .get(TOKEN)
        .map(|t| t.0)
        .ok_or_else(|| FaultlabError::Scenario("too few clock pulses".into()))?;
    let sigma = t.sigma;
    let width = (t.tau / 5).max(1);
    let run = |pulses: &[SetPulse]| {
        simulate(
            nl,
            &stim,
            SimConfig {
                tokens_expected: stim.len(),
                trace: TraceMode::Watch(watch.clone()),
                ..SimConfig::default()
            },
            pulses,
        )
    };

    let (description, pulses) = match name {
        "fig7c" => (
            "single transient at a latch input inside its filtering window",
            vec![SetPulse {
                node: dpin,
                start: Time(rise + sigma / 3),
                width,
            }],
        ),
        "fig7d" => {
            let first = SetPulse {
                node: dpin,
                start: Time(rise + sigma / 3),
                width,
            };
            let r = run(&[first])?;
            let tr = r.trace.as_ref().expect("traced");
            let again = tr
                .rises(ci)
                .into_iter()
                .map(|t| t.0)
                .find(|&t| t > rise)
                .ok_or_else(|| FaultlabError::Scenario("no re-sample".into()))?;
            (
                "transients at a latch input in two consecutive sampling windows",
                vec![
                    first,
                    SetPulse {
                        node: dpin,
                        start: Time(again + sigma / 3),
                        width,
                    },
                ],
            )
        }
        "case1" => {
            // an internal node of one rail's clk logic while the stage idles
            let n = sig(&format!("s{STAGE}_r1_clk_sum"))?;
            (
                "transient on an internal node of one controller rail",
                vec![SetPulse {
                    node: n,
                    start: Time(rise + 3 * sigma),
                    width: sigma / 2,
                }],
            )
        }
        _ => {
            let n = sig(&format!("s{STAGE}_r1_in_Rack"))?;
            (
                "transient on one rail's copy of the right acknowledge",
                vec![SetPulse {
                    node: n,
                    start: Time(rise + 3 * sigma),
                    width: sigma,
                }],
            )
        }
    };
    let res = run(&pulses)?;
    let edl: HashSet<SigId> = nl
        .stages
        .iter()
        .flat_map(|s| s.edl.iter().map(|&g| nl.gates[g].output))
        .collect();
    let outcome = classify(&golden, &res, pulses.iter().any(|p| edl.contains(&p.node)));
    let ftr = res.trace.clone().expect("traced");
    let resamples = (ftr.rises(ci).len() as u32).saturating_sub(gtr.rises(ci).len() as u32);
    let penalty = res.sinks[0].get(TOKEN).map_or(0, |r| r.time.0 as i64)
        - golden.result.sinks[0][TOKEN].time.0 as i64;
    let pick = |tr: &Trace| -> Vec<_> {
        let idx: Vec<usize> = outputs
            .iter()
            .map(|&s| tr.var(nl.name(s)).expect("watched"))
            .collect();
        tr.changes
            .iter()
            .filter(|c| idx.contains(&c.var) && c.time <= golden.end)
            .cloned()
            .collect()
    };
    let outputs_clean = pick(gtr) == pick(&ftr);
    Ok(ScenarioReport {
        name: name.into(),
        description: description.into(),
        pulses: pulses
            .iter()
            .map(|p| (nl.name(p.node).to_string(), p.start.0, p.width))
            .collect(),
        outcome,
        resamples,
        penalty,
        data_ok: res.words(0) == golden.words,
        outputs_clean,
        trace: Some(ftr),
    })
}
