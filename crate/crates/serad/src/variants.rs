//! The four pipeline variants built from one stage-level specification:
//! unhardened synchronous, TMR, glitch-filtered, and SERAD. Also the unit
//! area and toggle-activity estimators used to compare them.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{build_gdmr, build_token_controller, CtrlDelays, Equations};
use crate::edl::{build_edl, TimingConstraintViolation};
use crate::logic::{eval_gate, GateKind, LogicValue};
use crate::netlist::{
    Clock, FlipFlop, Latch, Netlist, NetlistBuilder, Reset, SeqRef, SigId, Sink, SinkMode, Source,
    Stage, Trigger, ValidationError,
};
use crate::sim::SimResult;
use crate::timing::TimingConfig;

/// A node of a combinational cone: a cone input bit or an earlier gate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConeNode {
    In(usize),
    Gate(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConeGate {
    pub kind: GateKind,
    pub inputs: Vec<ConeNode>,
    pub delay: u64,
    pub inertial: u64,
}

/// A combinational cone in topological order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConeSpec {
    pub width: usize,
    pub gates: Vec<ConeGate>,
    pub outputs: Vec<ConeNode>,
}

impl ConeSpec {
    /// One buffer per bit.
    pub fn identity(width: usize, delay: u64) -> Self {
        let gates = (0..width)
            .map(|i| ConeGate {
                kind: GateKind::Buf,
                inputs: vec![ConeNode::In(i)],
                delay,
                inertial: delay.min(20),
            })
            .collect();
        ConeSpec {
            width,
            gates,
            outputs: (0..width).map(ConeNode::Gate).collect(),
        }
    }

    /// An 8-bit ripple-carry cone, `f(x) = (x + rotl(x, 1)) ^ (x & rotr(x, 2))`
    /// modulo 256, whose carry chain glitches freely.
    pub fn mixed8(delay: u64, inertial: u64) -> Self {
        let mut gates = Vec::new();
        let mut g = |kind, inputs: Vec<ConeNode>| {
            gates.push(ConeGate {
                kind,
                inputs,
                delay,
                inertial,
            });
            ConeNode::Gate(gates.len() - 1)
        };
        let a = |i: usize| ConeNode::In(i);
        let bb = |i: usize| ConeNode::In((i + 7) % 8);
        let mut outputs = Vec::new();
        let mut carry: Option<ConeNode> = None;
        for i in 0..8 {
            let p = g(GateKind::Xor2, vec![a(i), bb(i)]);
            let s = match carry {
                None => p,
                Some(c) => g(GateKind::Xor2, vec![p, c]),
            };
            if i < 7 {
                let gen = g(GateKind::And2, vec![a(i), bb(i)]);
                carry = Some(match carry {
                    None => gen,
                    Some(c) => {
                        let t = g(GateKind::And2, vec![p, c]);
                        g(GateKind::Or2, vec![gen, t])
                    }
                });
            }
            let m = g(GateKind::And2, vec![a(i), a((i + 2) % 8)]);
            outputs.push(g(GateKind::Xor2, vec![s, m]));
        }
        ConeSpec {
            width: 8,
            gates,
            outputs,
        }
    }

    /// Logical function of the cone.
    pub fn eval(&self, x: u64) -> u64 {
        let mut vals = Vec::with_capacity(self.gates.len());
        let get = |n: ConeNode, vals: &[LogicValue]| match n {
            ConeNode::In(i) => LogicValue::from_bool(x >> i & 1 == 1),
            ConeNode::Gate(g) => vals[g],
        };
        for gate in &self.gates {
            let ins: Vec<LogicValue> = gate.inputs.iter().map(|&n| get(n, &vals)).collect();
            vals.push(eval_gate(gate.kind, &ins, LogicValue::L0).unwrap_or(LogicValue::X));
        }
        self.outputs.iter().enumerate().fold(0, |w, (i, &n)| {
            w | (((get(n, &vals) == LogicValue::L1) as u64) << i)
        })
    }

    /// Longest input-to-output delay.
    pub fn worst_delay(&self) -> u64 {
        let mut arr = vec![0u64; self.gates.len()];
        let at = |n: ConeNode, arr: &[u64]| match n {
            ConeNode::In(_) => 0,
            ConeNode::Gate(g) => arr[g],
        };
        for (i, g) in self.gates.iter().enumerate() {
            arr[i] = g.inputs.iter().map(|&n| at(n, &arr)).max().unwrap_or(0) + g.delay;
        }
        self.outputs.iter().map(|&n| at(n, &arr)).max().unwrap_or(0)
    }

    /// Emits the cone reading `ins`; returns output signals and gate indices.
    pub fn build(
        &self,
        b: &mut NetlistBuilder,
        pre: &str,
        ins: &[SigId],
        hardened: bool,
    ) -> (Vec<SigId>, Vec<usize>) {
        let mut outs: Vec<SigId> = Vec::with_capacity(self.gates.len());
        let mut idx = Vec::with_capacity(self.gates.len());
        for (i, g) in self.gates.iter().enumerate() {
            let inputs: Vec<SigId> = g
                .inputs
                .iter()
                .map(|&n| match n {
                    ConeNode::In(k) => ins[k],
                    ConeNode::Gate(k) => outs[k],
                })
                .collect();
            let o = b.signal(&format!("{pre}n{i}"));
            idx.push(b.gate(
                &format!("{pre}g{i}"),
                g.kind,
                &inputs,
                o,
                g.delay,
                g.inertial,
                hardened,
            ));
            outs.push(o);
        }
        let sigs = self
            .outputs
            .iter()
            .map(|&n| match n {
                ConeNode::In(k) => ins[k],
                ConeNode::Gate(k) => outs[k],
            })
            .collect();
        (sigs, idx)
    }
}

/// One pipeline stage: a cone followed by a bank of storage elements.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSpec {
    pub cone: ConeSpec,
    pub width: usize,
    pub worst_delay: u64,
}

impl StageSpec {
    pub fn new(cone: ConeSpec) -> Self {
        StageSpec {
            width: cone.width,
            worst_delay: cone.worst_delay(),
            cone,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub stages: Vec<StageSpec>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VariantError {
    #[error(transparent)]
    Timing(#[from] TimingConstraintViolation),
    #[error(transparent)]
    Netlist(#[from] ValidationError),
    #[error("invalid pipeline: {0}")]
    Spec(String),
}

impl PipelineSpec {
    pub fn identity(stages: usize, width: usize) -> Self {
        PipelineSpec {
            stages: (0..stages)
                .map(|_| StageSpec::new(ConeSpec::identity(width, 50)))
                .collect(),
        }
    }

    /// `stages` copies of the 8-bit ripple cone with 50 ps gates.
    pub fn mixed(stages: usize) -> Self {
        PipelineSpec {
            stages: (0..stages)
                .map(|_| StageSpec::new(ConeSpec::mixed8(50, 20)))
                .collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.stages.first().map_or(0, |s| s.width)
    }

    /// Expected sink word for input token `x`.
    pub fn golden(&self, x: u64) -> u64 {
        self.stages.iter().fold(x, |w, s| s.cone.eval(w))
    }

    pub fn validate(&self, t: &TimingConfig) -> Result<(), VariantError> {
        let w = self.width();
        if self.stages.is_empty() || w == 0 || w > 64 {
            return Err(VariantError::Spec(
                "need at least one stage and 1..=64 bits".into(),
            ));
        }
        for (i, s) in self.stages.iter().enumerate() {
            if s.width != w || s.cone.width != w || s.cone.outputs.len() != w {
                return Err(VariantError::Spec(format!("stage {} width differs", i + 1)));
            }
            if s.worst_delay + t.latch_pd > t.big_delta {
                return Err(VariantError::Spec(format!(
                    "stage {} cone ({} ps) exceeds the matched delay",
                    i + 1,
                    s.worst_delay
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Sync,
    Tmr,
    Gf,
    Serad,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Sync, Variant::Tmr, Variant::Gf, Variant::Serad];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Sync => "sync",
            Variant::Tmr => "tmr",
            Variant::Gf => "gf",
            Variant::Serad => "serad",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown variant `{s}`"))
    }
}

/// Flip-flop parameters of the clocked variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncParams {
    pub setup: u64,
    pub hold: u64,
    pub pd: u64,
    /// Source launch delay after the clock edge.
    pub launch: u64,
    pub margin: u64,
    pub voter: u64,
}

impl Default for SyncParams {
    fn default() -> Self {
        SyncParams {
            setup: 20,
            hold: 5,
            pd: 10,
            launch: 10,
            margin: 10,
            voter: 10,
        }
    }
}

impl SyncParams {
    /// Clock period of the unhardened pipeline.
    pub fn period(&self, t: &TimingConfig) -> u64 {
        t.big_delta + self.pd + self.setup + self.margin
    }
}

/// A built variant with what the fault lab needs to drive it.
#[derive(Clone, Debug)]
pub struct Design {
    pub variant: Variant,
    pub spec: PipelineSpec,
    pub netlist: Netlist,
    /// Clock period for clocked variants; the forward stage interval for
    /// SERAD.
    pub period: u64,
    /// SERAD: delay of each request line between controllers.
    pub req_delay: u64,
}

impl Design {
    /// Sink words the fault-free design produces for `stimulus`.
    pub fn golden_words(&self, stimulus: &[u64]) -> Vec<u64> {
        stimulus.iter().map(|&x| self.spec.golden(x)).collect()
    }

    /// Cone gates of TMR copy `k` (all cone gates for other variants).
    pub fn copy_gates(&self, k: usize) -> Vec<usize> {
        let tag = format!("_k{k}_");
        self.netlist
            .stages
            .iter()
            .flat_map(|s| s.cone.iter().copied())
            .filter(|&g| self.variant != Variant::Tmr || self.netlist.gates[g].id.contains(&tag))
            .collect()
    }
}

pub fn build(
    variant: Variant,
    spec: &PipelineSpec,
    t: &TimingConfig,
) -> Result<Design, VariantError> {
    match variant {
        Variant::Sync => build_sync(spec, t),
        Variant::Tmr => build_tmr(spec, t),
        Variant::Gf => build_glitch_filter(spec, t),
        Variant::Serad => build_serad(spec, t),
    }
}

fn bus(b: &mut NetlistBuilder, w: usize) -> Vec<SigId> {
    (0..w).map(|i| b.signal(&format!("in{i}"))).collect()
}

fn out_bus(b: &mut NetlistBuilder, data: &[SigId]) {
    for &s in data {
        b.output(s);
    }
}

/// A clocked pipeline; `copies` cone/flip-flop copies are merged by
/// hardened majority voters when greater than one, and `filter` inserts a
/// pulse-rejecting hardened buffer before each (then hardened) flip-flop.
fn build_clocked(
    variant: Variant,
    spec: &PipelineSpec,
    t: &TimingConfig,
    copies: usize,
    filter: bool,
) -> Result<Design, VariantError> {
    spec.validate(t)?;
    let p = SyncParams::default();
    let w = spec.width();
    let n = spec.stages.len();
    let mut period = p.period(t);
    if copies > 1 {
        period += p.voter;
    }
    if filter {
        period += 2 * t.tau;
    }
    let mut b = NetlistBuilder::new();
    let clk = b.signal("clk");
    b.clock(Clock {
        sig: clk,
        period,
        high: period / 2,
        offset: 0,
    });
    let mut prev = bus(&mut b, w);
    b.source(Source {
        bus: prev.clone(),
        trigger: Trigger::Rise(clk),
        delay: p.launch,
    });
    for (si, st) in spec.stages.iter().enumerate() {
        let name = format!("s{}", si + 1);
        let mut cone_gates = Vec::new();
        let mut seq = Vec::new();
        let mut qs: Vec<Vec<SigId>> = Vec::new();
        for k in 0..copies {
            let pre = if copies > 1 {
                format!("{name}_k{k}_")
            } else {
                format!("{name}_")
            };
            let (d, gates) = st.cone.build(&mut b, &pre, &prev, false);
            cone_gates.extend(gates);
            let mut q = Vec::with_capacity(w);
            for (bit, &ds) in d.iter().enumerate() {
                let dpin = if filter {
                    let f = b.signal(&format!("{pre}filt{bit}"));
                    b.gate(
                        &format!("{pre}filter{bit}"),
                        GateKind::Buf,
                        &[ds],
                        f,
                        2 * t.tau,
                        t.tau + 1,
                        true,
                    );
                    f
                } else {
                    ds
                };
                let qs_ = b.signal(&format!("{pre}q{bit}"));
                let idx = b.ff(FlipFlop {
                    id: format!("{pre}ff{bit}"),
                    d: dpin,
                    q: qs_,
                    clk,
                    setup: p.setup,
                    hold: p.hold,
                    pd: p.pd,
                    hardened: filter,
                });
                seq.push(SeqRef::Ff(idx));
                q.push(qs_);
            }
            qs.push(q);
        }
        prev = if copies > 1 {
            (0..w)
                .map(|bit| {
                    let v = b.signal(&format!("{name}_v{bit}"));
                    let ins: Vec<SigId> = qs.iter().map(|q| q[bit]).collect();
                    b.gate(
                        &format!("{name}_vote{bit}"),
                        GateKind::Maj3,
                        &ins,
                        v,
                        p.voter,
                        0,
                        true,
                    );
                    v
                })
                .collect()
        } else {
            qs.pop().unwrap_or_default()
        };
        b.stage(Stage {
            name,
            seq,
            cone: cone_gates,
            ctrl: Vec::new(),
            edl: Vec::new(),
        });
    }
    out_bus(&mut b, &prev);
    b.sink(Sink {
        data: prev,
        mode: SinkMode::Clocked { clk, skip: n + 1 },
    });
    Ok(Design {
        variant,
        spec: spec.clone(),
        netlist: b.finish()?,
        period,
        req_delay: 0,
    })
}

pub fn build_sync(spec: &PipelineSpec, t: &TimingConfig) -> Result<Design, VariantError> {
    build_clocked(Variant::Sync, spec, t, 1, false)
}

pub fn build_tmr(spec: &PipelineSpec, t: &TimingConfig) -> Result<Design, VariantError> {
    build_clocked(Variant::Tmr, spec, t, 3, false)
}

/// Filters reject pulses up to `t.tau` and add `2 * t.tau` of latency.
pub fn build_glitch_filter(spec: &PipelineSpec, t: &TimingConfig) -> Result<Design, VariantError> {
    build_clocked(Variant::Gf, spec, t, 1, true)
}

/// Reset release time of SERAD pipelines.
pub const RESET_RELEASE: u64 = 50;
/// Source and sink response delays of SERAD pipelines.
pub const ENV_DELAY: u64 = 10;

/// Delay of the request line between adjacent controllers, chosen so the
/// forward interval between their clock rises is `min_cycle_time`.
pub fn request_delay(t: &TimingConfig, d: &CtrlDelays) -> u64 {
    let intrinsic = t.comp_f + t.su + t.q_pd.max(t.q_hold) + 2 * d.path() + d.input_buf;
    t.big_delta
        .saturating_sub(t.sigma)
        .max(t.no_overlap)
        .saturating_sub(intrinsic)
        .max(1)
}

pub fn build_serad(spec: &PipelineSpec, t: &TimingConfig) -> Result<Design, VariantError> {
    build_serad_with(spec, t, Equations::Corrected)
}

pub fn build_serad_with(
    spec: &PipelineSpec,
    t: &TimingConfig,
    eq: Equations,
) -> Result<Design, VariantError> {
    spec.validate(t)?;
    let fails = t.fails();
    if !fails.is_empty() {
        return Err(TimingConstraintViolation(fails).into());
    }
    let d = CtrlDelays::default();
    let w = spec.width();
    let n = spec.stages.len();
    let l = request_delay(t, &d);
    let mut b = NetlistBuilder::new();
    let rst = b.signal("rst");
    b.reset(Reset {
        sig: rst,
        release: RESET_RELEASE,
    });
    let ack = b.signal("ack");
    let mut prev = bus(&mut b, w);
    let mut prev_rreq = None;
    for (si, st) in spec.stages.iter().enumerate() {
        let name = format!("s{}", si + 1);
        let pre = format!("{name}_");
        let (dpins, cone) = st.cone.build(&mut b, &pre, &prev, false);
        let clk = b.signal(&format!("{pre}CLK"));
        let edl = build_edl(&mut b, &pre, &dpins, clk, t)?;
        let mut seq = Vec::with_capacity(w);
        let mut q = Vec::with_capacity(w);
        for (bit, &ds) in dpins.iter().enumerate() {
            let qs = b.signal(&format!("{pre}q{bit}"));
            seq.push(SeqRef::Latch(b.latch(Latch {
                id: format!("{pre}dice{bit}"),
                d: ds,
                q: qs,
                clk,
                hold: t.dice_hold,
                min_pulse: t.phi,
                pd: t.latch_pd,
            })));
            q.push(qs);
        }
        let rack = if si + 1 < n {
            b.signal(&format!("s{}_LACK", si + 2))
        } else {
            ack
        };
        let ports = match prev_rreq {
            None => {
                let loop_delay = ENV_DELAY + t.big_delta;
                build_token_controller(
                    &mut b, &pre, rack, edl.err, edl.corr, rst, loop_delay, t, eq, &d,
                )
            }
            Some(rr) => {
                let lreq = b.signal(&format!("{pre}LREQ"));
                b.dline(&format!("{pre}dreq"), rr, lreq, l, l, false);
                build_gdmr(&mut b, &pre, lreq, rack, edl.err, edl.corr, rst, t, eq, &d)
            }
        };
        if si == 0 {
            b.source(Source {
                bus: prev.clone(),
                trigger: Trigger::Toggle(ports.lack),
                delay: ENV_DELAY,
            });
        }
        prev_rreq = Some(ports.rreq);
        b.stage(Stage {
            name,
            seq,
            cone,
            ctrl: ports.gates,
            edl: edl.gates,
        });
        prev = q;
    }
    out_bus(&mut b, &prev);
    let req = prev_rreq.expect("at least one stage");
    b.sink(Sink {
        data: prev,
        mode: SinkMode::Handshake {
            req,
            ack,
            delay: ENV_DELAY,
        },
    });
    let period = crate::timing::min_cycle_time(t);
    Ok(Design {
        variant: Variant::Serad,
        spec: spec.clone(),
        netlist: b.finish()?,
        period,
        req_delay: l,
    })
}

/// Unit-cell area of a netlist.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AreaReport {
    pub comb_area: u64,
    pub seq_area: u64,
    pub total_area: u64,
}

/// Area units per cell; hardened gates cost ten times their plain size.
pub mod area {
    pub const INV: u64 = 1;
    pub const TWO_INPUT: u64 = 2;
    pub const THREE_INPUT: u64 = 3;
    pub const HARDEN: u64 = 10;
    pub const LATCH: u64 = 6;
    pub const DICE: u64 = 12;
    pub const FF: u64 = 10;
    /// A flip-flop built from two DICE latches.
    pub const HARDENED_FF: u64 = 2 * DICE;
    /// A flip-flop plus its metastability filter.
    pub const QFLOP: u64 = 14;
    /// Picoseconds of delay per unit of delay-line area.
    pub const DLINE_PS_PER_UNIT: u64 = 20;
}

pub fn estimate_area(nl: &Netlist) -> AreaReport {
    use GateKind::*;
    let mut comb = 0;
    for g in &nl.gates {
        let base = match g.kind {
            Inv | Buf => area::INV,
            And2 | Or2 | Nand2 | Nor2 | Xor2 => area::TWO_INPUT,
            Maj3 | Celem2 => area::THREE_INPUT,
        };
        comb += if g.hardened {
            base * area::HARDEN
        } else {
            base
        };
    }
    for d in &nl.dlines {
        comb += d.rise.max(d.fall).div_ceil(area::DLINE_PS_PER_UNIT).max(1);
    }
    // all latches in this model are DICE cells
    let mut seq = nl.latches.len() as u64 * area::DICE;
    seq += nl
        .ffs
        .iter()
        .map(|f| {
            if f.hardened {
                area::HARDENED_FF
            } else {
                area::FF
            }
        })
        .sum::<u64>();
    seq += nl.qflops.len() as u64 * area::QFLOP;
    AreaReport {
        comb_area: comb,
        seq_area: seq,
        total_area: comb + seq,
    }
}

/// One row of the cross-variant comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AreaRow {
    pub variant: Variant,
    pub area: AreaReport,
    /// Total-area increase over the first row, percent.
    pub increase_pct: f64,
    /// Cycle time in ps: clock period, or SERAD's forward interval.
    pub cycle_time: u64,
}

pub fn area_table(designs: &[Design]) -> Vec<AreaRow> {
    let base = designs
        .first()
        .map(|d| estimate_area(&d.netlist).total_area)
        .unwrap_or(0);
    designs
        .iter()
        .map(|d| {
            let a = estimate_area(&d.netlist);
            let pct = if base == 0 {
                0.0
            } else {
                (a.total_area as f64 - base as f64) * 100.0 / base as f64
            };
            AreaRow {
                variant: d.variant,
                area: a,
                increase_pct: (pct * 10.0).round() / 10.0,
                cycle_time: d.period,
            }
        })
        .collect()
}

/// Toggle counts of one run, by category.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PowerReport {
    /// Toggles on latch and flip-flop data pins.
    pub dpin_toggles: u64,
    pub dpins: usize,
    pub tokens: usize,
    /// Data-pin toggles per pin per token.
    pub dpin_activity: f64,
    pub comb_toggles: u64,
    pub seq_toggles: u64,
    pub clock_toggles: u64,
    /// Sum over signals of toggles times (1 + fanout).
    pub dynamic: u64,
    /// Per-cell constant leakage, proportional to area.
    pub leakage: u64,
    pub by_category: BTreeMap<String, u64>,
}

pub fn estimate_activity_power(res: &SimResult, nl: &Netlist) -> PowerReport {
    use crate::netlist::Driver;
    let dp = nl.data_pins();
    let mut is_clock = vec![false; nl.signals.len()];
    for c in &nl.clocks {
        is_clock[c.sig] = true;
    }
    for l in &nl.latches {
        is_clock[l.clk] = true;
    }
    for f in &nl.ffs {
        is_clock[f.clk] = true;
    }
    let mut r = PowerReport {
        dpins: dp.len(),
        tokens: res.sinks.first().map_or(0, Vec::len),
        ..Default::default()
    };
    r.dpin_toggles = dp.iter().map(|&s| res.toggles[s]).sum();
    for (s, &n) in res.toggles.iter().enumerate() {
        r.dynamic += n * (1 + nl.fanout(s).len() as u64);
        if is_clock[s] {
            r.clock_toggles += n;
            continue;
        }
        match nl.driver(s) {
            Some(Driver::Gate(_)) | Some(Driver::Dline(_)) => r.comb_toggles += n,
            Some(Driver::Latch(_))
            | Some(Driver::Ff(_))
            | Some(Driver::QFlopErr(_))
            | Some(Driver::QFlopCorr(_)) => r.seq_toggles += n,
            _ => {}
        }
    }
    for st in &nl.stages {
        for (cat, gates) in [("cone", &st.cone), ("ctrl", &st.ctrl), ("edl", &st.edl)] {
            let n: u64 = gates.iter().map(|&g| res.toggles[nl.gates[g].output]).sum();
            *r.by_category.entry(cat.to_string()).or_default() += n;
        }
    }
    if r.dpins > 0 && r.tokens > 0 {
        r.dpin_activity = r.dpin_toggles as f64 / (r.dpins * r.tokens) as f64;
    }
    r.leakage = estimate_area(nl).total_area;
    r
}
