//! Event-driven simulation of a [`Netlist`].
//!
//! Gates use inertial delay, delay lines transport delay. DICE latches,
//! flip-flops and Q-flops are behavioural processes. Every signal keeps the
//! value its driver last produced (`drv`) separately from the value seen by
//! readers (`val`), so an injected transient can be overlaid and later undone.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::edl::{qflop_sample, QFlopParams, QOut};
use crate::kernel::{EventId, Kernel, KernelError, SimStats, Step, Time};
use crate::logic::{eval_unchecked, LogicValue};
use crate::netlist::{Fan, Netlist, SigId, SinkMode, Trigger};
use crate::vcd::{Change, Trace};

use LogicValue::{L0, L1, X};

/// A single-event transient: `node` is inverted during `[start, start+width)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SetPulse {
    pub node: SigId,
    pub start: Time,
    pub width: u64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("pulse width must be at least 1 ps")]
    ZeroWidth,
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceMode {
    Off,
    Watch(Vec<SigId>),
    All,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub until: Time,
    pub watchdog: Time,
    pub seed: u64,
    /// Mean metastability resolution time of Q-flops, ps.
    pub meta_mean: f64,
    /// Widest transient a hardened gate absorbs (σ).
    pub harden_limit: u64,
    /// Stop once every sink has recorded this many tokens (0 = run to `until`).
    pub tokens_expected: usize,
    pub trace: TraceMode,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            until: Time(10_000_000),
            watchdog: Time(100_000),
            seed: 0,
            meta_mean: 50.0,
            harden_limit: 100,
            tokens_expected: 0,
            trace: TraceMode::Off,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SinkRecord {
    pub time: Time,
    pub bits: Vec<LogicValue>,
}

impl SinkRecord {
    /// Bit `i` of the word is `bits[i]`; `None` if any bit is unknown.
    pub fn word(&self) -> Option<u64> {
        self.bits.iter().enumerate().try_fold(0u64, |acc, (i, b)| {
            b.to_bool().map(|v| acc | (v as u64) << i)
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub stats: SimStats,
    /// Per sink, the recorded tokens in arrival order.
    pub sinks: Vec<Vec<SinkRecord>>,
    pub trace: Option<Trace>,
    /// Value changes seen by readers, per signal.
    pub toggles: Vec<u64>,
    /// Order-sensitive digest of every change on a latch/flip-flop data pin.
    pub dpin_hash: u64,
    /// Rising edges on Q-flop `err` outputs.
    pub err_rises: u32,
    /// Pulses swallowed by gate inertia.
    pub swallowed: u64,
    /// Q-flop samples whose input moved inside the setup/hold window.
    pub metastable: u32,
}

impl SimResult {
    pub fn words(&self, sink: usize) -> Vec<Option<u64>> {
        self.sinks[sink].iter().map(SinkRecord::word).collect()
    }
}

#[derive(Clone, Copy, Debug)]
enum Action {
    GateOut(LogicValue),
    DlineOut(LogicValue),
    Drive(LogicValue),
    Inject { width: u64 },
    Restore,
    ClockEdge(LogicValue),
    ResetRelease,
    QDecide { epoch: u32 },
    QAssert { epoch: u32, which: QOut },
    QClear { epoch: u32 },
}

#[derive(Clone, Debug, Default)]
struct LatchState {
    open_at: Time,
    closed_at: Option<Time>,
    dirty: bool,
}

#[derive(Clone, Debug, Default)]
struct FfState {
    last_d: Option<Time>,
    last_edge: Option<Time>,
}

#[derive(Clone, Debug)]
struct QState {
    history: Vec<(Time, LogicValue)>,
    epoch: u32,
    sample_rise: Time,
}

pub struct Simulator<'n> {
    nl: &'n Netlist,
    cfg: SimConfig,
    k: Kernel<Action>,
    rng: ChaCha8Rng,
    val: Vec<LogicValue>,
    drv: Vec<LogicValue>,
    forced: Vec<Option<EventId>>,
    gate_pending: Vec<VecDeque<(Time, LogicValue, EventId)>>,
    dline_pending: Vec<Vec<(Time, EventId)>>,
    latches: Vec<LatchState>,
    ffs: Vec<FfState>,
    qflops: Vec<QState>,
    src_next: Vec<usize>,
    stimulus: Vec<u64>,
    sinks: Vec<Vec<SinkRecord>>,
    sink_skipped: Vec<usize>,
    watch: Vec<Option<usize>>,
    trace: Option<Trace>,
    toggles: Vec<u64>,
    is_dpin: Vec<bool>,
    is_err: Vec<bool>,
    dpin_hash: u64,
    err_rises: u32,
    swallowed: u64,
    metastable: u32,
}

const FNV_PRIME: u64 = 0x100_0000_01b3;

impl<'n> Simulator<'n> {
    /// `stimulus` is the token sequence each source drives, bit `i` of a
    /// word onto `bus[i]`.
    pub fn new(nl: &'n Netlist, stimulus: &[u64], cfg: SimConfig) -> Self {
        let n = nl.signals.len();
        let mut is_dpin = vec![false; n];
        for s in nl.data_pins() {
            is_dpin[s] = true;
        }
        let mut is_err = vec![false; n];
        for q in &nl.qflops {
            is_err[q.err] = true;
        }
        let watched: Vec<SigId> = match &cfg.trace {
            TraceMode::Off => Vec::new(),
            TraceMode::Watch(v) => v.clone(),
            TraceMode::All => (0..n).collect(),
        };
        let mut watch = vec![None; n];
        for (i, &s) in watched.iter().enumerate() {
            watch[s] = Some(i);
        }
        let trace = (cfg.trace != TraceMode::Off).then(|| Trace {
            names: watched.iter().map(|&s| nl.name(s).to_string()).collect(),
            initial: vec![L0; watched.len()],
            changes: Vec::new(),
        });
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut sim = Simulator {
            nl,
            k: Kernel::new(),
            rng,
            val: vec![L0; n],
            drv: vec![L0; n],
            forced: vec![None; n],
            gate_pending: vec![VecDeque::new(); nl.gates.len()],
            dline_pending: vec![Vec::new(); nl.dlines.len()],
            latches: vec![LatchState::default(); nl.latches.len()],
            ffs: vec![FfState::default(); nl.ffs.len()],
            qflops: vec![
                QState {
                    history: vec![(Time::ZERO, L0)],
                    epoch: 0,
                    sample_rise: Time::ZERO
                };
                nl.qflops.len()
            ],
            src_next: vec![0; nl.sources.len()],
            stimulus: stimulus.to_vec(),
            sinks: vec![Vec::new(); nl.sinks.len()],
            sink_skipped: vec![0; nl.sinks.len()],
            watch,
            trace,
            toggles: vec![0; n],
            is_dpin,
            is_err,
            dpin_hash: 0xcbf2_9ce4_8422_2325,
            err_rises: 0,
            swallowed: 0,
            metastable: 0,
            cfg,
        };
        sim.initialise();
        sim
    }

    fn initialise(&mut self) {
        let nl = self.nl;
        for g in 0..nl.gates.len() {
            self.eval_gate(g);
        }
        for d in 0..nl.dlines.len() {
            self.eval_dline(d);
        }
        for (i, c) in nl.clocks.iter().enumerate() {
            self.at(Time(c.offset), i as u32, Action::ClockEdge(L1));
        }
        for (i, r) in nl.resets.iter().enumerate() {
            self.at(Time(r.release), i as u32, Action::ResetRelease);
        }
        if let Some(r) = nl.resets.iter().map(|r| r.release).max() {
            for s in &nl.sinks {
                if let SinkMode::Handshake { ack, delay, .. } = s.mode {
                    self.at(Time(r + delay), ack as u32, Action::Drive(L1));
                }
            }
        }
    }

    fn at(&mut self, t: Time, target: u32, a: Action) -> EventId {
        self.k
            .schedule(target, a, t)
            .expect("scheduling never goes backwards")
    }

    fn after(&mut self, d: u64, target: u32, a: Action) -> EventId {
        let t = self.k.now().after(d);
        self.at(t, target, a)
    }

    pub fn now(&self) -> Time {
        self.k.now()
    }

    pub fn value(&self, s: SigId) -> LogicValue {
        self.val[s]
    }

    /// Queues a transient. Pulses on hardened nodes are accepted and ignored.
    pub fn inject(&mut self, p: &SetPulse) -> Result<(), SimError> {
        if p.node >= self.val.len() {
            return Err(SimError::UnknownNode(p.node.to_string()));
        }
        if p.width == 0 {
            return Err(SimError::ZeroWidth);
        }
        if self
            .nl
            .is_hardened_node(p.node, p.width, self.cfg.harden_limit)
        {
            return Ok(());
        }
        self.k
            .schedule(p.node as u32, Action::Inject { width: p.width }, p.start)?;
        Ok(())
    }

    pub fn run(mut self) -> SimResult {
        let until = self.cfg.until;
        let watchdog = self.cfg.watchdog;
        let mut k = std::mem::take(&mut self.k);
        let stats = k.run(until, watchdog, |k, ev| {
            self.k = std::mem::take(k);
            let step = self.handle(ev.target, ev.action);
            *k = std::mem::take(&mut self.k);
            step
        });
        SimResult {
            stats,
            sinks: self.sinks,
            trace: self.trace,
            toggles: self.toggles,
            dpin_hash: self.dpin_hash,
            err_rises: self.err_rises,
            swallowed: self.swallowed,
            metastable: self.metastable,
        }
    }

    fn handle(&mut self, target: u32, a: Action) -> Step {
        let t = target as usize;
        match a {
            Action::GateOut(v) => {
                self.gate_pending[t].pop_front();
                let out = self.nl.gates[t].output;
                self.drive(out, v)
            }
            Action::DlineOut(v) => {
                let now = self.k.now();
                self.dline_pending[t].retain(|&(ft, _)| ft != now);
                let out = self.nl.dlines[t].output;
                self.drive(out, v)
            }
            Action::Drive(v) => self.drive(t, v),
            Action::Inject { width } => {
                let cur = self.val[t];
                if cur == X {
                    return Step::default();
                }
                if let Some(old) = self.forced[t].take() {
                    self.k.cancel(old);
                }
                let id = self.after(width, target, Action::Restore);
                self.forced[t] = Some(id);
                self.set_val(t, !cur)
            }
            Action::Restore => {
                self.forced[t] = None;
                let v = self.drv[t];
                self.set_val(t, v)
            }
            Action::ClockEdge(v) => {
                let c = &self.nl.clocks[t];
                let (sig, next) = (c.sig, if v == L1 { c.high } else { c.period - c.high });
                self.after(next, target, Action::ClockEdge(!v));
                self.drive(sig, v)
            }
            Action::ResetRelease => {
                let s = self.nl.resets[t].sig;
                self.drive(s, L1)
            }
            Action::QDecide { epoch } => {
                if epoch != self.qflops[t].epoch {
                    return Step::default();
                }
                let q = &self.nl.qflops[t];
                let params = QFlopParams {
                    setup: q.setup,
                    hold: q.hold,
                    pd: q.pd,
                    meta_mean: self.cfg.meta_mean,
                };
                let st = &self.qflops[t];
                let out = qflop_sample(&st.history, st.sample_rise, &params, &mut self.rng);
                if out.metastable {
                    self.metastable += 1;
                }
                let at = out.assert_at.max(self.k.now());
                self.at(
                    at,
                    target,
                    Action::QAssert {
                        epoch,
                        which: out.which,
                    },
                );
                Step::default()
            }
            Action::QAssert { epoch, which } => {
                if epoch != self.qflops[t].epoch {
                    return Step::default();
                }
                let q = &self.nl.qflops[t];
                let s = match which {
                    QOut::Err => q.err,
                    QOut::Corr => q.corr,
                };
                self.drive(s, L1)
            }
            Action::QClear { epoch } => {
                if epoch != self.qflops[t].epoch {
                    return Step::default();
                }
                let (e, c) = (self.nl.qflops[t].err, self.nl.qflops[t].corr);
                let a = self.drive(e, L0);
                let b = self.drive(c, L0);
                Step {
                    progress: a.progress || b.progress,
                    finished: a.finished || b.finished,
                }
            }
        }
    }

    /// A driver event: the driver wins over any transient still in force.
    fn drive(&mut self, s: SigId, v: LogicValue) -> Step {
        if self.drv[s] == v {
            return Step::default();
        }
        self.drv[s] = v;
        if let Some(id) = self.forced[s].take() {
            self.k.cancel(id);
        }
        self.set_val(s, v)
    }

    fn set_val(&mut self, s: SigId, v: LogicValue) -> Step {
        let old = self.val[s];
        if old == v {
            return Step::default();
        }
        self.val[s] = v;
        self.toggles[s] += 1;
        let now = self.k.now();
        if let (Some(i), Some(tr)) = (self.watch[s], self.trace.as_mut()) {
            tr.changes.push(Change {
                time: now,
                var: i,
                value: v,
            });
        }
        if self.is_dpin[s] {
            for x in [now.0, s as u64, v as u64] {
                self.dpin_hash = (self.dpin_hash ^ x).wrapping_mul(FNV_PRIME);
            }
        }
        if self.is_err[s] && v == L1 {
            self.err_rises += 1;
        }
        let mut step = Step::default();
        let nl = self.nl;
        for &f in nl.fanout(s) {
            let r = match f {
                Fan::Gate(g) => {
                    self.eval_gate(g);
                    Step::default()
                }
                Fan::Dline(d) => {
                    self.eval_dline(d);
                    Step::default()
                }
                Fan::LatchD(l) => {
                    self.latch_d(l);
                    Step::default()
                }
                Fan::LatchClk(l) => {
                    self.latch_clk(l, v);
                    Step::default()
                }
                Fan::FfD(i) => {
                    self.ff_d(i);
                    Step::default()
                }
                Fan::FfClk(i) => {
                    if v == L1 {
                        self.ff_edge(i);
                    } else if v == X {
                        let (q, pd) = (nl.ffs[i].q, nl.ffs[i].pd);
                        self.after(pd, q as u32, Action::Drive(X));
                    }
                    Step::default()
                }
                Fan::QFlopD(q) => {
                    self.qflops[q].history.push((now, v));
                    // only the recent past matters to the setup window
                    if self.qflops[q].history.len() > 64 {
                        self.qflops[q].history.drain(..32);
                    }
                    Step::default()
                }
                Fan::QFlopSample(q) => {
                    self.qflop_sample_edge(q, old, v);
                    Step::default()
                }
                Fan::Source(i) => {
                    self.source_trigger(i, old, v);
                    Step::default()
                }
                Fan::Sink(i) => self.sink_event(i, old, v),
            };
            step.progress |= r.progress;
            step.finished |= r.finished;
        }
        step
    }

    fn eval_gate(&mut self, g: usize) {
        let gate = &self.nl.gates[g];
        let mut ins = [L0; 3];
        for (i, &s) in gate.inputs.iter().enumerate() {
            ins[i] = self.val[s];
        }
        let pending = &self.gate_pending[g];
        let projected = pending.back().map(|p| p.1).unwrap_or(self.drv[gate.output]);
        let new = eval_unchecked(gate.kind, &ins[..gate.inputs.len()], projected);
        if new == projected {
            return;
        }
        let now = self.k.now();
        if let Some(&(t_last, _, id)) = pending.back() {
            let before = if pending.len() >= 2 {
                pending[pending.len() - 2].1
            } else {
                self.drv[gate.output]
            };
            let width = (now.0 + gate.delay).saturating_sub(t_last.0);
            if new == before && width < gate.inertial.max(1) {
                self.k.cancel(id);
                self.gate_pending[g].pop_back();
                if width > 0 {
                    self.swallowed += 1;
                }
                return;
            }
        }
        let delay = gate.delay;
        let id = self.after(delay, g as u32, Action::GateOut(new));
        self.gate_pending[g].push_back((now.after(delay), new, id));
    }

    fn eval_dline(&mut self, d: usize) {
        let dl = &self.nl.dlines[d];
        let v = self.val[dl.input];
        let out = if dl.invert { !v } else { v };
        let delay = match out {
            L1 => dl.rise,
            L0 => dl.fall,
            X => dl.rise.max(dl.fall),
        };
        let t = self.k.now().after(delay);
        // a later edge overtaking an earlier one swallows it
        let mut i = 0;
        while i < self.dline_pending[d].len() {
            let (ft, id) = self.dline_pending[d][i];
            if ft >= t {
                self.k.cancel(id);
                self.dline_pending[d].swap_remove(i);
            } else {
                i += 1;
            }
        }
        let id = self.at(t, d as u32, Action::DlineOut(out));
        self.dline_pending[d].push((t, id));
    }

    fn latch_d(&mut self, l: usize) {
        let la = &self.nl.latches[l];
        let now = self.k.now();
        match self.val[la.clk] {
            L1 => {
                if now > self.latches[l].open_at {
                    self.latches[l].dirty = true;
                }
                let v = self.val[la.d];
                self.after(la.pd, la.q as u32, Action::Drive(v));
            }
            L0 => {
                if let Some(c) = self.latches[l].closed_at {
                    if now.0 <= c.0 + la.hold {
                        self.after(la.pd, la.q as u32, Action::Drive(X));
                    }
                }
            }
            X => {
                self.after(la.pd, la.q as u32, Action::Drive(X));
            }
        }
    }

    fn latch_clk(&mut self, l: usize, v: LogicValue) {
        let la = &self.nl.latches[l];
        let now = self.k.now();
        let (q, pd) = (la.q as u32, la.pd);
        match v {
            L1 => {
                self.latches[l].open_at = now;
                self.latches[l].dirty = false;
                let d = self.val[la.d];
                self.after(pd, q, Action::Drive(d));
            }
            L0 => {
                let st = &mut self.latches[l];
                st.closed_at = Some(now);
                let short = now - st.open_at < la.min_pulse;
                let out = if st.dirty || short { X } else { self.val[la.d] };
                self.after(pd, q, Action::Drive(out));
            }
            X => {
                self.after(pd, q, Action::Drive(X));
            }
        }
    }

    fn ff_d(&mut self, i: usize) {
        let f = &self.nl.ffs[i];
        let now = self.k.now();
        self.ffs[i].last_d = Some(now);
        if let Some(e) = self.ffs[i].last_edge {
            if now.0 <= e.0 + f.hold {
                self.after(f.pd, f.q as u32, Action::Drive(X));
            }
        }
    }

    fn ff_edge(&mut self, i: usize) {
        let f = &self.nl.ffs[i];
        let now = self.k.now();
        self.ffs[i].last_edge = Some(now);
        let late = self.ffs[i].last_d.is_some_and(|t| t.0 + f.setup >= now.0);
        let v = if late { X } else { self.val[f.d] };
        self.after(f.pd, f.q as u32, Action::Drive(v));
    }

    fn qflop_sample_edge(&mut self, q: usize, old: LogicValue, v: LogicValue) {
        let (hold, pd) = (self.nl.qflops[q].hold, self.nl.qflops[q].pd);
        let st = &mut self.qflops[q];
        st.epoch = st.epoch.wrapping_add(1);
        let epoch = st.epoch;
        if v == L1 && old == L0 {
            st.sample_rise = self.k.now();
            self.after(hold, q as u32, Action::QDecide { epoch });
        } else {
            self.after(pd, q as u32, Action::QClear { epoch });
        }
    }

    fn source_trigger(&mut self, i: usize, old: LogicValue, v: LogicValue) {
        let src = &self.nl.sources[i];
        let fire = match src.trigger {
            Trigger::Toggle(_) => old.is_known() && v.is_known(),
            Trigger::Rise(_) => v == L1,
        };
        if !fire {
            return;
        }
        let k = self.src_next[i];
        self.src_next[i] += 1;
        let Some(&word) = self.stimulus.get(k) else {
            return;
        };
        for (b, &s) in src.bus.iter().enumerate() {
            let bit = LogicValue::from_bool(word >> b & 1 == 1);
            self.after(src.delay, s as u32, Action::Drive(bit));
        }
    }

    fn sink_event(&mut self, i: usize, old: LogicValue, v: LogicValue) -> Step {
        let sink = &self.nl.sinks[i];
        let record = match sink.mode {
            SinkMode::Handshake { ack, delay, .. } => {
                if !(old.is_known() && v.is_known()) {
                    return Step::default();
                }
                let a = !self.drv[ack];
                self.after(delay, ack as u32, Action::Drive(a));
                true
            }
            SinkMode::Clocked { skip, .. } => {
                if v != L1 {
                    return Step::default();
                }
                if self.sink_skipped[i] < skip {
                    self.sink_skipped[i] += 1;
                    false
                } else {
                    true
                }
            }
        };
        if !record {
            return Step::default();
        }
        let bits = sink.data.iter().map(|&s| self.val[s]).collect();
        self.sinks[i].push(SinkRecord {
            time: self.k.now(),
            bits,
        });
        let want = self.cfg.tokens_expected;
        let finished = want > 0 && self.sinks.iter().all(|s| s.len() >= want);
        Step {
            progress: true,
            finished,
        }
    }
}

/// Runs one simulation, optionally with transients.
pub fn simulate(
    nl: &Netlist,
    stimulus: &[u64],
    cfg: SimConfig,
    pulses: &[SetPulse],
) -> Result<SimResult, SimError> {
    let mut sim = Simulator::new(nl, stimulus, cfg);
    for p in pulses {
        sim.inject(p)?;
    }
    Ok(sim.run())
}
