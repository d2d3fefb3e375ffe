//! Circuit data model.
//!
//! A [`Netlist`] is immutable once built; [`NetlistBuilder::finish`] runs
//! the structural checks (single driver, acyclic gate graph, linear stage
//! chain) and precomputes fanout tables for the simulator.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logic::GateKind;

pub type SigId = usize;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gate {
    pub id: String,
    pub kind: GateKind,
    pub inputs: Vec<SigId>,
    pub output: SigId,
    pub delay: u64,
    pub inertial: u64,
    pub hardened: bool,
}

/// DICE latch: transparent while `clk` is high.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Latch {
    pub id: String,
    pub d: SigId,
    pub q: SigId,
    pub clk: SigId,
    pub hold: u64,
    pub min_pulse: u64,
    pub pd: u64,
}

/// Rising-edge flip-flop (behaviourally a master/slave latch pair).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlipFlop {
    pub id: String,
    pub d: SigId,
    pub q: SigId,
    pub clk: SigId,
    pub setup: u64,
    pub hold: u64,
    pub pd: u64,
    pub hardened: bool,
}

/// Transport delay. `rise`/`fall` apply to the output edge; `invert`
/// models an odd inverter chain.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayLine {
    pub id: String,
    pub input: SigId,
    pub output: SigId,
    pub rise: u64,
    pub fall: u64,
    pub invert: bool,
}

/// Sampling element with a metastability filter and dual-rail outputs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QFlop {
    pub id: String,
    pub d: SigId,
    pub sample: SigId,
    pub err: SigId,
    pub corr: SigId,
    pub setup: u64,
    pub hold: u64,
    pub pd: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SeqRef {
    Latch(usize),
    Ff(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub seq: Vec<SeqRef>,
    pub cone: Vec<usize>,
    pub ctrl: Vec<usize>,
    pub edl: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clock {
    pub sig: SigId,
    pub period: u64,
    pub high: u64,
    pub offset: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reset {
    pub sig: SigId,
    pub release: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Trigger {
    /// Fires on every transition of a handshake wire.
    Toggle(SigId),
    /// Fires on every rising edge of a clock.
    Rise(SigId),
}

/// Environment process that drives the stimulus bus.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Source {
    pub bus: Vec<SigId>,
    pub trigger: Trigger,
    pub delay: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SinkMode {
    /// Record on each request toggle and answer on `ack` after `delay`.
    Handshake { req: SigId, ack: SigId, delay: u64 },
    /// Record on each clock rise, discarding the first `skip` samples.
    Clocked { clk: SigId, skip: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sink {
    pub data: Vec<SigId>,
    pub mode: SinkMode,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Driver {
    Gate(usize),
    Latch(usize),
    Ff(usize),
    Dline(usize),
    QFlopErr(usize),
    QFlopCorr(usize),
    Clock(usize),
    Reset(usize),
    Source(usize),
    SinkAck(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Fan {
    Gate(usize),
    LatchD(usize),
    LatchClk(usize),
    FfD(usize),
    FfClk(usize),
    Dline(usize),
    QFlopD(usize),
    QFlopSample(usize),
    Source(usize),
    Sink(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rule {
    SingleDriver,
    Undriven,
    Acyclic,
    StageLinear,
    UnknownEntity,
    Duplicate,
    Arity,
    Delay,
}

impl std::fmt::Display for Rule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Rule::SingleDriver => "single-driver",
            Rule::Undriven => "undriven",
            Rule::Acyclic => "acyclic",
            Rule::StageLinear => "stage-linear",
            Rule::UnknownEntity => "unknown-entity",
            Rule::Duplicate => "duplicate",
            Rule::Arity => "arity",
            Rule::Delay => "delay",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("validation failed ({rule}): {entity}")]
pub struct ValidationError {
    pub rule: Rule,
    pub entity: String,
}

fn verr(rule: Rule, entity: impl Into<String>) -> ValidationError {
    ValidationError {
        rule,
        entity: entity.into(),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Netlist {
    pub signals: Vec<String>,
    pub gates: Vec<Gate>,
    pub latches: Vec<Latch>,
    pub ffs: Vec<FlipFlop>,
    pub dlines: Vec<DelayLine>,
    pub qflops: Vec<QFlop>,
    pub stages: Vec<Stage>,
    pub inputs: Vec<SigId>,
    pub outputs: Vec<SigId>,
    pub clocks: Vec<Clock>,
    pub resets: Vec<Reset>,
    pub sources: Vec<Source>,
    pub sinks: Vec<Sink>,
    #[serde(skip)]
    index: HashMap<String, SigId>,
    #[serde(skip)]
    drivers: Vec<Option<Driver>>,
    #[serde(skip)]
    fanout: Vec<Vec<Fan>>,
}

impl Netlist {
    pub fn sig(&self, name: &str) -> Option<SigId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, s: SigId) -> &str {
        &self.signals[s]
    }

    pub fn driver(&self, s: SigId) -> Option<Driver> {
        self.drivers[s]
    }

    pub fn fanout(&self, s: SigId) -> &[Fan] {
        &self.fanout[s]
    }

    pub fn gate_by_id(&self, id: &str) -> Option<usize> {
        self.gates.iter().position(|g| g.id == id)
    }

    pub fn stage_by_name(&self, name: &str) -> Option<usize> {
        self.stages.iter().position(|s| s.name == name)
    }

    /// Clock pin signals of a stage's sequential elements, deduplicated.
    pub fn stage_clocks(&self, stage: usize) -> Vec<SigId> {
        let mut v: Vec<SigId> = self.stages[stage]
            .seq
            .iter()
            .map(|r| match *r {
                SeqRef::Latch(i) => self.latches[i].clk,
                SeqRef::Ff(i) => self.ffs[i].clk,
            })
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Data-pin signals of all latches and flip-flops.
    pub fn data_pins(&self) -> Vec<SigId> {
        self.latches
            .iter()
            .map(|l| l.d)
            .chain(self.ffs.iter().map(|f| f.d))
            .collect()
    }

    /// True when an injected pulse of `width` on `s` is absorbed by a
    /// hardened driver.
    pub fn is_hardened_node(&self, s: SigId, width: u64, limit: u64) -> bool {
        match self.drivers[s] {
            Some(Driver::Gate(g)) => self.gates[g].hardened && width <= limit,
            Some(Driver::Latch(_)) | Some(Driver::QFlopErr(_)) | Some(Driver::QFlopCorr(_)) => true,
            Some(Driver::Ff(f)) => self.ffs[f].hardened,
            _ => false,
        }
    }
}

/// Incremental netlist construction with name-based signal interning.
#[derive(Default)]
pub struct NetlistBuilder {
    nl: Netlist,
}

impl NetlistBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn signal(&mut self, name: &str) -> SigId {
        if let Some(&s) = self.nl.index.get(name) {
            return s;
        }
        let s = self.nl.signals.len();
        self.nl.signals.push(name.to_string());
        self.nl.index.insert(name.to_string(), s);
        s
    }

    pub fn lookup(&self, name: &str) -> Option<SigId> {
        self.nl.index.get(name).copied()
    }

    pub fn gate_count(&self) -> usize {
        self.nl.gates.len()
    }

    pub fn input(&mut self, s: SigId) {
        if !self.nl.inputs.contains(&s) {
            self.nl.inputs.push(s);
        }
    }

    pub fn output(&mut self, s: SigId) {
        if !self.nl.outputs.contains(&s) {
            self.nl.outputs.push(s);
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn gate(
        &mut self,
        id: &str,
        kind: GateKind,
        inputs: &[SigId],
        output: SigId,
        delay: u64,
        inertial: u64,
        hardened: bool,
    ) -> usize {
        self.nl.gates.push(Gate {
            id: id.to_string(),
            kind,
            inputs: inputs.to_vec(),
            output,
            delay,
            inertial,
            hardened,
        });
        self.nl.gates.len() - 1
    }

    pub fn add_gate(&mut self, g: Gate) -> usize {
        self.nl.gates.push(g);
        self.nl.gates.len() - 1
    }

    pub fn latch(&mut self, l: Latch) -> usize {
        self.nl.latches.push(l);
        self.nl.latches.len() - 1
    }

    pub fn ff(&mut self, f: FlipFlop) -> usize {
        self.nl.ffs.push(f);
        self.nl.ffs.len() - 1
    }

    pub fn dline(
        &mut self,
        id: &str,
        input: SigId,
        output: SigId,
        rise: u64,
        fall: u64,
        invert: bool,
    ) -> usize {
        self.nl.dlines.push(DelayLine {
            id: id.to_string(),
            input,
            output,
            rise,
            fall,
            invert,
        });
        self.nl.dlines.len() - 1
    }

    pub fn qflop(&mut self, q: QFlop) -> usize {
        self.nl.qflops.push(q);
        self.nl.qflops.len() - 1
    }

    pub fn stage(&mut self, s: Stage) {
        self.nl.stages.push(s);
    }

    pub fn clock(&mut self, c: Clock) {
        self.nl.clocks.push(c);
    }

    pub fn reset(&mut self, r: Reset) {
        self.nl.resets.push(r);
    }

    pub fn source(&mut self, s: Source) {
        self.nl.sources.push(s);
    }

    pub fn sink(&mut self, s: Sink) {
        self.nl.sinks.push(s);
    }

    pub fn finish(self) -> Result<Netlist, ValidationError> {
        let mut nl = self.nl;
        nl.index = nl
            .signals
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        validate_and_index(&mut nl)?;
        Ok(nl)
    }
}

fn validate_and_index(nl: &mut Netlist) -> Result<(), ValidationError> {
    let n = nl.signals.len();
    let check = |s: SigId, what: &str| -> Result<(), ValidationError> {
        if s < n {
            Ok(())
        } else {
            Err(verr(Rule::UnknownEntity, what.to_string()))
        }
    };

    let mut ids = HashSet::new();
    let all_ids = nl
        .gates
        .iter()
        .map(|g| &g.id)
        .chain(nl.latches.iter().map(|l| &l.id))
        .chain(nl.ffs.iter().map(|f| &f.id))
        .chain(nl.dlines.iter().map(|d| &d.id))
        .chain(nl.qflops.iter().map(|q| &q.id));
    for id in all_ids {
        if !ids.insert(id.clone()) {
            return Err(verr(Rule::Duplicate, id.clone()));
        }
    }

    for g in &nl.gates {
        if g.inputs.len() != g.kind.arity() {
            return Err(verr(Rule::Arity, g.id.clone()));
        }
        if g.delay < 1 || g.inertial > g.delay {
            return Err(verr(Rule::Delay, g.id.clone()));
        }
        for &s in g.inputs.iter().chain(std::iter::once(&g.output)) {
            check(s, &g.id)?;
        }
    }

    let mut drivers: Vec<Option<Driver>> = vec![None; n];
    let mut claim = |s: SigId, d: Driver, names: &[String]| -> Result<(), ValidationError> {
        if drivers[s].is_some() {
            return Err(verr(Rule::SingleDriver, names[s].clone()));
        }
        drivers[s] = Some(d);
        Ok(())
    };
    let names = nl.signals.clone();
    for (i, g) in nl.gates.iter().enumerate() {
        claim(g.output, Driver::Gate(i), &names)?;
    }
    for (i, l) in nl.latches.iter().enumerate() {
        for s in [l.d, l.q, l.clk] {
            check(s, &l.id)?;
        }
        claim(l.q, Driver::Latch(i), &names)?;
    }
    for (i, f) in nl.ffs.iter().enumerate() {
        for s in [f.d, f.q, f.clk] {
            check(s, &f.id)?;
        }
        claim(f.q, Driver::Ff(i), &names)?;
    }
    for (i, d) in nl.dlines.iter().enumerate() {
        check(d.input, &d.id)?;
        check(d.output, &d.id)?;
        claim(d.output, Driver::Dline(i), &names)?;
    }
    for (i, q) in nl.qflops.iter().enumerate() {
        for s in [q.d, q.sample, q.err, q.corr] {
            check(s, &q.id)?;
        }
        claim(q.err, Driver::QFlopErr(i), &names)?;
        claim(q.corr, Driver::QFlopCorr(i), &names)?;
    }
    for (i, c) in nl.clocks.iter().enumerate() {
        check(c.sig, "clock")?;
        if c.period == 0 || c.high == 0 || c.high >= c.period {
            return Err(verr(Rule::Delay, format!("clock {}", names[c.sig])));
        }
        claim(c.sig, Driver::Clock(i), &names)?;
    }
    for (i, r) in nl.resets.iter().enumerate() {
        check(r.sig, "reset")?;
        claim(r.sig, Driver::Reset(i), &names)?;
    }
    for (i, s) in nl.sources.iter().enumerate() {
        for &b in &s.bus {
            check(b, "source")?;
            claim(b, Driver::Source(i), &names)?;
        }
    }
    for (i, s) in nl.sinks.iter().enumerate() {
        for &d in &s.data {
            check(d, "sink")?;
        }
        if let SinkMode::Handshake { ack, req, .. } = s.mode {
            check(req, "sink")?;
            check(ack, "sink")?;
            claim(ack, Driver::SinkAck(i), &names)?;
        }
    }
    for (s, d) in drivers.iter().enumerate() {
        if d.is_none() && !nl.inputs.contains(&s) {
            return Err(verr(Rule::Undriven, names[s].clone()));
        }
    }

    check_acyclic(nl)?;
    check_stages(nl, &drivers)?;

    let mut fanout: Vec<Vec<Fan>> = vec![Vec::new(); n];
    for (i, g) in nl.gates.iter().enumerate() {
        let mut seen = Vec::new();
        for &s in &g.inputs {
            if !seen.contains(&s) {
                fanout[s].push(Fan::Gate(i));
                seen.push(s);
            }
        }
    }
    for (i, l) in nl.latches.iter().enumerate() {
        fanout[l.d].push(Fan::LatchD(i));
        fanout[l.clk].push(Fan::LatchClk(i));
    }
    for (i, f) in nl.ffs.iter().enumerate() {
        fanout[f.d].push(Fan::FfD(i));
        fanout[f.clk].push(Fan::FfClk(i));
    }
    for (i, d) in nl.dlines.iter().enumerate() {
        fanout[d.input].push(Fan::Dline(i));
    }
    for (i, q) in nl.qflops.iter().enumerate() {
        fanout[q.d].push(Fan::QFlopD(i));
        fanout[q.sample].push(Fan::QFlopSample(i));
    }
    for (i, s) in nl.sources.iter().enumerate() {
        let (Trigger::Toggle(t) | Trigger::Rise(t)) = s.trigger;
        check(t, "source")?;
        fanout[t].push(Fan::Source(i));
    }
    for (i, s) in nl.sinks.iter().enumerate() {
        let t = match s.mode {
            SinkMode::Handshake { req, .. } => req,
            SinkMode::Clocked { clk, .. } => clk,
        };
        check(t, "sink")?;
        fanout[t].push(Fan::Sink(i));
    }
    nl.drivers = drivers;
    nl.fanout = fanout;
    Ok(())
}

/// Gate-to-gate edges must form a DAG; delay lines and storage elements
/// legitimately break feedback loops.
fn check_acyclic(nl: &Netlist) -> Result<(), ValidationError> {
    let mut gate_of: HashMap<SigId, usize> = HashMap::new();
    for (i, g) in nl.gates.iter().enumerate() {
        gate_of.insert(g.output, i);
    }
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut mark = vec![0u8; nl.gates.len()];
    for root in 0..nl.gates.len() {
        if mark[root] != 0 {
            continue;
        }
        let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
        mark[root] = 1;
        while let Some(&mut (g, ref mut next)) = stack.last_mut() {
            let ins = &nl.gates[g].inputs;
            if *next < ins.len() {
                let s = ins[*next];
                *next += 1;
                if let Some(&p) = gate_of.get(&s) {
                    match mark[p] {
                        0 => {
                            mark[p] = 1;
                            stack.push((p, 0));
                        }
                        1 => return Err(verr(Rule::Acyclic, nl.signals[s].clone())),
                        _ => {}
                    }
                }
            } else {
                mark[g] = 2;
                stack.pop();
            }
        }
    }
    Ok(())
}

/// Each stage's cone must draw only from the previous stage's storage
/// outputs (through any non-cone gates such as voters), or from primary
/// inputs for the first stage.
fn check_stages(nl: &Netlist, drivers: &[Option<Driver>]) -> Result<(), ValidationError> {
    let mut owner_seq: HashMap<SeqRef, usize> = HashMap::new();
    let mut owner_gate: HashMap<usize, usize> = HashMap::new();
    let mut names = HashSet::new();
    for (si, st) in nl.stages.iter().enumerate() {
        if !names.insert(st.name.clone()) {
            return Err(verr(Rule::Duplicate, st.name.clone()));
        }
        for r in &st.seq {
            let ok = match *r {
                SeqRef::Latch(i) => i < nl.latches.len(),
                SeqRef::Ff(i) => i < nl.ffs.len(),
            };
            if !ok || owner_seq.insert(*r, si).is_some() {
                return Err(verr(Rule::StageLinear, st.name.clone()));
            }
        }
        for &g in st.cone.iter().chain(&st.ctrl).chain(&st.edl) {
            if g >= nl.gates.len() || owner_gate.insert(g, si).is_some() {
                return Err(verr(Rule::StageLinear, st.name.clone()));
            }
        }
    }
    for (si, st) in nl.stages.iter().enumerate() {
        let cone: HashSet<usize> = st.cone.iter().copied().collect();
        let mut preds: HashSet<Option<usize>> = HashSet::new();
        let mut seen: HashSet<SigId> = HashSet::new();
        let mut work: Vec<SigId> = st
            .cone
            .iter()
            .flat_map(|&g| nl.gates[g].inputs.iter().copied())
            .collect();
        while let Some(s) = work.pop() {
            if !seen.insert(s) {
                continue;
            }
            match drivers[s] {
                Some(Driver::Gate(g)) if cone.contains(&g) => {}
                Some(Driver::Gate(g)) if !owner_gate.contains_key(&g) => {
                    work.extend(nl.gates[g].inputs.iter().copied())
                }
                Some(Driver::Latch(i)) => {
                    preds.insert(owner_seq.get(&SeqRef::Latch(i)).copied());
                }
                Some(Driver::Ff(i)) => {
                    preds.insert(owner_seq.get(&SeqRef::Ff(i)).copied());
                }
                Some(Driver::Gate(g)) => {
                    preds.insert(owner_gate.get(&g).copied());
                }
                _ => {
                    preds.insert(None);
                }
            }
        }
        let expected: Option<usize> = si.checked_sub(1);
        let bad = preds.iter().any(|p| match (p, expected) {
            (None, None) => false,
            (Some(p), Some(e)) => *p != e,
            (None, Some(_)) => false,
            (Some(_), None) => true,
        });
        if bad {
            return Err(verr(Rule::StageLinear, st.name.clone()));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inv_chain() -> NetlistBuilder {
        let mut b = NetlistBuilder::new();
        let a = b.signal("a");
        let x = b.signal("x");
        let y = b.signal("y");
        b.input(a);
        b.gate("g1", GateKind::Inv, &[a], x, 10, 5, false);
        b.gate("g2", GateKind::Inv, &[x], y, 10, 5, false);
        b
    }

    #[test]
    fn builds_and_indexes_fanout() {
        let nl = inv_chain().finish().unwrap();
        let x = nl.sig("x").unwrap();
        assert_eq!(nl.fanout(x), &[Fan::Gate(1)]);
        assert_eq!(nl.driver(x), Some(Driver::Gate(0)));
    }

    #[test]
    fn double_driver_rejected() {
        let mut b = inv_chain();
        let a = b.signal("a");
        let x = b.signal("x");
        b.gate("g3", GateKind::Buf, &[a], x, 10, 0, false);
        assert_eq!(b.finish().unwrap_err(), verr(Rule::SingleDriver, "x"));
    }

    #[test]
    fn cycle_rejected() {
        let mut b = NetlistBuilder::new();
        let a = b.signal("a");
        let c = b.signal("b");
        b.gate("g1", GateKind::Inv, &[c], a, 10, 0, false);
        b.gate("g2", GateKind::Inv, &[a], c, 10, 0, false);
        let e = b.finish().unwrap_err();
        assert_eq!(e.rule, Rule::Acyclic);
    }

    #[test]
    fn delay_line_breaks_loops() {
        let mut b = NetlistBuilder::new();
        let a = b.signal("a");
        let c = b.signal("b");
        b.gate("g1", GateKind::Inv, &[c], a, 10, 0, false);
        b.dline("d1", a, c, 5, 5, false);
        assert!(b.finish().is_ok());
    }

    #[test]
    fn undriven_signal_rejected() {
        let mut b = NetlistBuilder::new();
        let a = b.signal("a");
        let x = b.signal("x");
        b.gate("g1", GateKind::Inv, &[a], x, 10, 0, false);
        assert_eq!(b.finish().unwrap_err(), verr(Rule::Undriven, "a"));
    }

    #[test]
    fn inertial_above_delay_rejected() {
        let mut b = NetlistBuilder::new();
        let a = b.signal("a");
        let x = b.signal("x");
        b.input(a);
        b.gate("g1", GateKind::Inv, &[a], x, 10, 11, false);
        assert_eq!(b.finish().unwrap_err().rule, Rule::Delay);
    }
}
