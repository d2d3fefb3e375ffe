//! The SERAD stage controller.
//!
//! The single-rail burst-mode machine is given by four sum-of-products
//! equations over the inputs (rst, Lreq, Rack, Err, Corr, Done) and the fed
//! back outputs (Rreq, Lack, clk, z). [`ctrl_next`] evaluates them
//! behaviourally, [`check_conformance`] enumerates their reachable behaviour,
//! and [`build_gdmr`] emits the duplicated, guarded gate-level controller.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logic::{GateKind, LogicValue};
use crate::netlist::{NetlistBuilder, SigId};
use crate::timing::TimingConfig;

use LogicValue::{L0, L1};

/// Which form of the z equation to use. The published form's `¬z·Lack`
/// term makes z rise as soon as Lack does after reset; `Corrected` uses
/// `z·Lack` so z only holds, never sets, through Lack.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Equations {
    #[default]
    Corrected,
    Published,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CtrlKind {
    Normal,
    Token,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Var {
    Rreq,
    Lack,
    Clk,
    Z,
    Rst,
    Lreq,
    Rack,
    Err,
    Corr,
    Done,
}

impl Var {
    pub const OUTPUTS: [Var; 4] = [Var::Rreq, Var::Lack, Var::Clk, Var::Z];

    pub fn name(self) -> &'static str {
        match self {
            Var::Rreq => "Rreq",
            Var::Lack => "Lack",
            Var::Clk => "clk",
            Var::Z => "z",
            Var::Rst => "rst",
            Var::Lreq => "Lreq",
            Var::Rack => "Rack",
            Var::Err => "Err",
            Var::Corr => "Corr",
            Var::Done => "Done",
        }
    }
}

/// A literal: variable and required polarity.
pub type Lit = (Var, bool);

/// Product terms of each output, in `Var::OUTPUTS` order. The common `rst`
/// factor is implicit.
pub fn equations(eq: Equations) -> [Vec<Vec<Lit>>; 4] {
    use Var::*;
    let z_lack = match eq {
        Equations::Corrected => vec![(Z, true), (Lack, true)],
        Equations::Published => vec![(Z, false), (Lack, true)],
    };
    [
        vec![
            vec![(Corr, false), (Lack, false)],
            vec![(Done, true), (Lack, false)],
            vec![(Z, true), (Lack, false)],
            vec![(Z, true), (Corr, true), (Done, false)],
        ],
        vec![
            vec![(Corr, false), (Lack, true)],
            vec![(Done, true), (Lack, true)],
            vec![(Z, false), (Lack, true)],
            vec![(Z, false), (Corr, true), (Done, false)],
        ],
        vec![
            vec![(Err, true), (Done, false)],
            vec![(Clk, true), (Done, false)],
            vec![(Z, true), (Lreq, false), (Rack, false)],
            vec![(Lreq, true), (Rack, true), (Done, false), (Z, false)],
        ],
        vec![
            vec![(Done, true), (Lack, true)],
            vec![(Z, true), (Corr, true)],
            z_lack,
            vec![(Z, true), (Clk, false), (Err, false)],
        ],
    ]
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CtrlInputs {
    pub rst: LogicValue,
    pub lreq: LogicValue,
    pub rack: LogicValue,
    pub err: LogicValue,
    pub corr: LogicValue,
    pub done: LogicValue,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CtrlState {
    pub rreq: LogicValue,
    pub lack: LogicValue,
    pub clk: LogicValue,
    pub z: LogicValue,
    /// Diagnostic position in the burst-mode specification (0..=9).
    pub burst_state: u8,
    /// Inputs the outputs were last settled against.
    pub inputs: CtrlInputs,
}

impl CtrlState {
    fn out(&self, i: usize) -> LogicValue {
        [self.rreq, self.lack, self.clk, self.z][i]
    }

    fn set_out(&mut self, i: usize, v: LogicValue) {
        match i {
            0 => self.rreq = v,
            1 => self.lack = v,
            2 => self.clk = v,
            _ => self.z = v,
        }
    }
}

fn lookup(v: Var, s: &CtrlState, i: &CtrlInputs) -> LogicValue {
    match v {
        Var::Rreq => s.rreq,
        Var::Lack => s.lack,
        Var::Clk => s.clk,
        Var::Z => s.z,
        Var::Rst => i.rst,
        Var::Lreq => i.lreq,
        Var::Rack => i.rack,
        Var::Err => i.err,
        Var::Corr => i.corr,
        Var::Done => i.done,
    }
}

/// Next value of every output given the present outputs and inputs.
pub fn excitation(eq: Equations, s: &CtrlState, i: &CtrlInputs) -> [LogicValue; 4] {
    let eqs = equations(eq);
    let mut out = [L0; 4];
    for (k, terms) in eqs.iter().enumerate() {
        let sum = terms.iter().fold(L0, |acc, term| {
            let p = term.iter().fold(L1, |p, &(v, pol)| {
                let x = lookup(v, s, i);
                p.and(if pol { x } else { !x })
            });
            acc.or(p)
        });
        out[k] = i.rst.and(sum);
    }
    out
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CtrlError {
    #[error("outputs did not settle under inputs {0:?}")]
    FundamentalModeViolation(CtrlInputs),
}

/// Settles the machine under new inputs, firing one excited output at a
/// time, and advances the burst-state annotation.
pub fn ctrl_next(
    eq: Equations,
    kind: CtrlKind,
    state: &CtrlState,
    inputs: &CtrlInputs,
) -> Result<CtrlState, CtrlError> {
    let mut s = *state;
    for _ in 0..16 {
        let next = excitation(eq, &s, inputs);
        match (0..4).find(|&k| next[k] != s.out(k)) {
            Some(k) => s.set_out(k, next[k]),
            None => {
                let changes: Vec<(Var, bool)> = (0..4)
                    .filter(|&k| s.out(k) != state.out(k))
                    .map(|k| (Var::OUTPUTS[k], s.out(k) == L1))
                    .collect();
                let input = input_change(&state.inputs, inputs);
                s.burst_state = burst_step(kind, state.burst_state, input, &changes, inputs)
                    .unwrap_or(state.burst_state);
                s.inputs = *inputs;
                return Ok(s);
            }
        }
    }
    Err(CtrlError::FundamentalModeViolation(*inputs))
}

fn input_change(a: &CtrlInputs, b: &CtrlInputs) -> Option<(Var, bool)> {
    let pairs = [
        (Var::Rst, a.rst, b.rst),
        (Var::Lreq, a.lreq, b.lreq),
        (Var::Rack, a.rack, b.rack),
        (Var::Err, a.err, b.err),
        (Var::Corr, a.corr, b.corr),
        (Var::Done, a.done, b.done),
    ];
    pairs
        .into_iter()
        .find(|p| p.1 != p.2)
        .map(|(v, _, n)| (v, n == L1))
}

/// Burst-state annotation. `None` marks a step the specification does not
/// describe.
pub fn burst_step(
    kind: CtrlKind,
    bs: u8,
    input: Option<(Var, bool)>,
    outs: &[(Var, bool)],
    now: &CtrlInputs,
) -> Option<u8> {
    use Var::*;
    let has = |v: Var, up: bool| outs.contains(&(v, up));
    let only =
        |list: &[(Var, bool)]| outs.len() == list.len() && list.iter().all(|x| outs.contains(x));
    let Some((var, up)) = input else {
        return if outs.is_empty() { Some(bs) } else { None };
    };
    let quiet = outs.is_empty();
    let q_low = now.err == L0 && now.corr == L0;
    match bs {
        0 => match (var, up) {
            (Rst, true) if only(&[(Lack, true)]) => {
                Some(if kind == CtrlKind::Token { 5 } else { 1 })
            }
            (Corr, _) | (Err, _) if quiet => Some(0),
            _ => None,
        },
        1 | 5 => match var {
            Lreq | Rack if up && only(&[(Clk, true)]) => Some(2),
            Lreq | Rack if up && quiet => Some(bs),
            _ => None,
        },
        6 => match var {
            Lreq | Rack if !up && only(&[(Clk, true)]) => Some(7),
            Lreq | Rack if !up && quiet => Some(6),
            _ => None,
        },
        2 | 7 => match (var, up) {
            (Corr, false) | (Err, false) if q_low => {
                let z_drop = bs == 7 && only(&[(Z, false)]);
                (quiet || z_drop).then_some(bs + 1)
            }
            (Rack, _) | (Lreq, _) if quiet => Some(bs),
            _ => None,
        },
        3 | 8 => match (var, up) {
            (Done, true)
                if has(Clk, false)
                    && (only(&[(Clk, false)]) || (bs == 3 && only(&[(Clk, false), (Z, true)]))) =>
            {
                Some(bs + 1)
            }
            (Err, false) if quiet => Some(bs),
            (Rack, _) | (Lreq, _) if quiet => Some(bs),
            _ => None,
        },
        4 | 9 => match (var, up) {
            (Done, false) if quiet => Some(bs),
            (Err, true) if only(&[(Clk, true)]) => Some(bs - 1),
            (Corr, true) if bs == 4 && only(&[(Rreq, true), (Lack, false)]) => Some(6),
            (Corr, true) if bs == 9 && only(&[(Rreq, false), (Lack, true)]) => Some(1),
            (Rack, _) | (Lreq, _) if quiet => Some(bs),
            _ => None,
        },
        _ => None,
    }
}

/// One observed transition of the burst-mode machine.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Transition {
    pub from: u8,
    pub input: String,
    pub outputs: String,
    pub to: u8,
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} --{} / {}--> {}",
            self.from,
            self.input,
            if self.outputs.is_empty() {
                "-"
            } else {
                &self.outputs
            },
            self.to
        )
    }
}

fn edge(v: Var, up: bool) -> String {
    format!("{}{}", v.name(), if up { '+' } else { '-' })
}

fn edges(list: &[(Var, bool)]) -> String {
    let mut v: Vec<String> = list.iter().map(|&(x, u)| edge(x, u)).collect();
    v.sort();
    v.join(",")
}

/// The transitions listed in the state-machine description, plus their
/// two-phase mirrors.
pub fn specified_transitions(kind: CtrlKind) -> Vec<Transition> {
    let t = |from, input: &str, outputs: &str, to| Transition {
        from,
        input: input.into(),
        outputs: outputs.into(),
        to,
    };
    let start = if kind == CtrlKind::Token { 5 } else { 1 };
    vec![
        t(0, "rst+", "Lack+", start),
        t(start, "Lreq+|Rack+", "clk+", 2),
        t(2, "Corr-", "", 3),
        t(3, "Done+", "clk-,z+", 4),
        t(4, "Err+", "clk+", 3),
        t(4, "Corr+", "Lack-,Rreq+", 6),
        t(6, "Lreq-|Rack-", "clk+", 7),
        t(7, "Corr-", "z-", 8),
        t(8, "Done+", "clk-", 9),
        t(9, "Err+", "clk+", 8),
        t(9, "Corr+", "Lack+,Rreq-", 1),
    ]
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conformance {
    pub stable_states: usize,
    pub transitions: BTreeSet<Transition>,
    /// Specified transitions never observed.
    pub missing: Vec<Transition>,
    /// Steps the burst-state annotation cannot explain.
    pub unexplained: Vec<String>,
    /// An output changed twice, or lost its excitation without firing.
    pub glitches: Vec<String>,
    /// Different firing orders settled in different states.
    pub nondeterministic: Vec<String>,
    pub protocol_violations: Vec<String>,
    pub exclusivity_violations: usize,
    /// Behaviour from states k and k+5 differs beyond signal polarity.
    pub mirror_mismatches: Vec<String>,
}

impl Conformance {
    pub fn is_clean(&self) -> bool {
        self.missing.is_empty()
            && self.unexplained.is_empty()
            && self.glitches.is_empty()
            && self.nondeterministic.is_empty()
            && self.protocol_violations.is_empty()
            && self.exclusivity_violations == 0
            && self.mirror_mismatches.is_empty()
    }
}

/// Environment-plus-machine state used by the enumerator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct World {
    i: [bool; 6], // rst, lreq, rack, err, corr, done
    o: [bool; 4], // rreq, lack, clk, z
    bs: u8,
    decided: bool,
    first: bool,
}

const I_RST: usize = 0;
const I_LREQ: usize = 1;
const I_RACK: usize = 2;
const I_ERR: usize = 3;
const I_CORR: usize = 4;
const I_DONE: usize = 5;
const INPUT_VARS: [Var; 6] = [
    Var::Rst,
    Var::Lreq,
    Var::Rack,
    Var::Err,
    Var::Corr,
    Var::Done,
];

impl World {
    fn as_ctrl(&self) -> (CtrlState, CtrlInputs) {
        let b = LogicValue::from_bool;
        let i = CtrlInputs {
            rst: b(self.i[0]),
            lreq: b(self.i[1]),
            rack: b(self.i[2]),
            err: b(self.i[3]),
            corr: b(self.i[4]),
            done: b(self.i[5]),
        };
        let s = CtrlState {
            rreq: b(self.o[0]),
            lack: b(self.o[1]),
            clk: b(self.o[2]),
            z: b(self.o[3]),
            burst_state: self.bs,
            inputs: i,
        };
        (s, i)
    }

    fn excited(&self, eq: Equations) -> [bool; 4] {
        let (s, i) = self.as_ctrl();
        let n = excitation(eq, &s, &i);
        [0, 1, 2, 3].map(|k| (n[k] == L1) != self.o[k])
    }

    /// Input changes the environment may make from a stable state. The
    /// environment abstracts the neighbours (two-phase handshakes), the
    /// Done delay line and the Q-flop, with the orderings the delay budget
    /// guarantees: Err/Corr clear before Done rises, and Done falls before
    /// the next sample.
    fn env_moves(&self) -> Vec<(usize, bool, bool)> {
        let [rst, lreq, rack, err, corr, done] = self.i;
        let [rreq, lack, clk, _] = self.o;
        let mut m = Vec::new(); // (input, new value, sets decided)
        if !rst && corr {
            m.push((I_RST, true, self.decided));
        }
        if rst && lreq != lack {
            m.push((I_LREQ, !lreq, self.decided));
        }
        if rst && rack == rreq {
            m.push((I_RACK, !rack, self.decided));
        }
        if done != clk && (!clk || (!err && !corr)) {
            m.push((I_DONE, clk, self.decided));
        }
        if !clk && !done && !err && !corr && !self.decided {
            m.push((I_CORR, true, true));
            if !self.first {
                m.push((I_ERR, true, true));
            }
        }
        if clk && err {
            m.push((I_ERR, false, false));
        }
        if clk && corr {
            m.push((I_CORR, false, false));
        }
        m
    }
}

struct SettleResult {
    finals: HashSet<[bool; 4]>,
    glitch: Option<String>,
}

/// Explores every firing order of excited outputs from `w` (inputs fixed).
fn settle(eq: Equations, w: &World) -> SettleResult {
    let mut finals = HashSet::new();
    let mut glitch = None;
    let mut stack: Vec<(World, [u8; 4])> = vec![(*w, [0; 4])];
    let mut seen: HashSet<([bool; 4], [u8; 4])> = HashSet::new();
    while let Some((cur, fired)) = stack.pop() {
        if !seen.insert((cur.o, fired)) {
            continue;
        }
        let ex = cur.excited(eq);
        if !ex.iter().any(|&e| e) {
            finals.insert(cur.o);
            continue;
        }
        for k in 0..4 {
            if !ex[k] {
                continue;
            }
            let mut nxt = cur;
            nxt.o[k] = !nxt.o[k];
            let mut f = fired;
            f[k] += 1;
            if f[k] > 1 {
                glitch.get_or_insert_with(|| {
                    format!(
                        "{} toggles twice settling from {:?}",
                        Var::OUTPUTS[k].name(),
                        w.o
                    )
                });
                continue;
            }
            let ex2 = nxt.excited(eq);
            for j in 0..4 {
                if j != k && ex[j] && !ex2[j] {
                    glitch.get_or_insert_with(|| {
                        format!(
                            "{} loses excitation when {} fires (outputs {:?})",
                            Var::OUTPUTS[j].name(),
                            Var::OUTPUTS[k].name(),
                            cur.o
                        )
                    });
                }
            }
            stack.push((nxt, f));
        }
    }
    SettleResult { finals, glitch }
}

/// Enumerates every reachable stable state under single-input changes in
/// fundamental mode, with all output firing orders, and checks the observed
/// behaviour against the burst-mode description.
pub fn check_conformance(eq: Equations, kind: CtrlKind) -> Conformance {
    let mut rep = Conformance::default();
    let init = World {
        i: [false; 6],
        o: [false; 4],
        bs: 0,
        decided: false,
        first: true,
    };
    let mut seen: HashSet<World> = HashSet::new();
    let mut work = vec![init];
    let mut by_state: HashMap<u8, BTreeSet<(String, String, u8)>> = HashMap::new();
    while let Some(w) = work.pop() {
        if !seen.insert(w) {
            continue;
        }
        if w.i[I_ERR] && w.i[I_CORR] {
            rep.exclusivity_violations += 1;
        }
        for (idx, val, decided) in w.env_moves() {
            let mut n = w;
            n.i[idx] = val;
            n.decided = decided;
            if idx == I_CORR && !val || idx == I_ERR && !val {
                n.first = false;
            }
            let r = settle(eq, &n);
            if let Some(g) = r.glitch {
                rep.glitches.push(g);
            }
            if r.finals.len() != 1 {
                rep.nondeterministic.push(format!(
                    "{} from {:?} settles {} ways",
                    edge(INPUT_VARS[idx], val),
                    w.o,
                    r.finals.len()
                ));
            }
            let Some(&fin) = r.finals.iter().min() else {
                rep.glitches.push(format!(
                    "{} from {:?} never settles",
                    edge(INPUT_VARS[idx], val),
                    w.o
                ));
                continue;
            };
            let changes: Vec<(Var, bool)> = (0..4)
                .filter(|&k| fin[k] != w.o[k])
                .map(|k| (Var::OUTPUTS[k], fin[k]))
                .collect();
            // two-phase discipline on both channels
            if fin[1] != w.o[1] && w.o[1] != w.i[I_LREQ] && w.i[I_RST] {
                rep.protocol_violations.push(format!(
                    "Lack toggled without a pending Lreq in state {}",
                    w.bs
                ));
            }
            // Rack idles opposite to Rreq: the right neighbour acknowledges reset
            if fin[0] != w.o[0] && w.o[0] == w.i[I_RACK] {
                rep.protocol_violations
                    .push(format!("Rreq toggled before Rack in state {}", w.bs));
            }
            let (_, now) = n.as_ctrl();
            let input = Some((INPUT_VARS[idx], val));
            let to = burst_step(kind, w.bs, input, &changes, &now);
            let t = Transition {
                from: w.bs,
                input: edge(INPUT_VARS[idx], val),
                outputs: edges(&changes),
                to: to.unwrap_or(255),
            };
            match to {
                Some(to) => {
                    n.o = fin;
                    n.bs = to;
                    by_state.entry(w.bs).or_default().insert((
                        t.input.clone(),
                        t.outputs.clone(),
                        to,
                    ));
                    rep.transitions.insert(t);
                    work.push(n);
                }
                None => rep.unexplained.push(t.to_string()),
            }
        }
    }
    rep.stable_states = seen.len();
    for spec in specified_transitions(kind) {
        let found = rep.transitions.iter().any(|t| {
            t.from == spec.from
                && t.to == spec.to
                && t.outputs == spec.outputs
                && spec.input.split('|').any(|i| i == t.input)
        });
        if !found {
            rep.missing.push(spec);
        }
    }
    // states k and k+5 must behave alike once handshake polarities and the
    // internal z are ignored
    let norm = |s: &str| -> String {
        let mut v: Vec<String> = s
            .split(',')
            .filter(|e| !e.is_empty() && !e.starts_with('z'))
            .map(|e| {
                if ["Lreq", "Rack", "Rreq", "Lack"]
                    .iter()
                    .any(|p| e.starts_with(p))
                {
                    e[..e.len() - 1].to_string()
                } else {
                    e.to_string()
                }
            })
            .collect();
        v.sort();
        v.join(",")
    };
    for k in 1..=4u8 {
        let side = |st: u8| -> BTreeSet<(String, String, u8)> {
            by_state
                .get(&st)
                .map(|s| {
                    s.iter()
                        .map(|(i, o, to)| (norm(i), norm(o), to % 5))
                        .collect()
                })
                .unwrap_or_default()
        };
        let (a, b) = (side(k), side(k + 5));
        if kind == CtrlKind::Normal && a != b {
            rep.mirror_mismatches
                .push(format!("state {k} vs {}: {a:?} / {b:?}", k + 5));
        }
    }
    rep
}

/// Structural delays of the gate-level controller, in ps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CtrlDelays {
    /// Per-rail input buffers on Lreq/Rack.
    pub input_buf: u64,
    /// Literal (INV/BUF) gates.
    pub literal: u64,
    /// AND/OR/padding gates.
    pub gate: u64,
    /// Hardened guard C-elements.
    pub guard: u64,
    /// Done's falling delay.
    pub done_fall: u64,
}

impl Default for CtrlDelays {
    fn default() -> Self {
        CtrlDelays {
            input_buf: 1,
            literal: 1,
            gate: 2,
            guard: 2,
            done_fall: 5,
        }
    }
}

impl CtrlDelays {
    /// Delay from any literal input to a guarded output: literal, two AND
    /// levels, two OR levels, the reset AND and the guard.
    pub fn path(&self) -> u64 {
        self.literal + 5 * self.gate + self.guard
    }
}

/// Ports and bookkeeping of one emitted controller.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CtrlPorts {
    pub clk: SigId,
    pub rreq: SigId,
    pub lack: SigId,
    pub z: SigId,
    /// Gate indices of both rails and the guards.
    pub gates: Vec<usize>,
    /// Outputs of the rails before the guards, `[rail][output]`.
    pub rail_outputs: [[SigId; 4]; 2],
    pub done: [SigId; 2],
}

/// Emits a guarded dual-rail controller. `lreq`/`rack` are the incoming
/// handshake wires; they are buffered separately for each rail. Err, Corr
/// and rst are shared. Every guarded output is fed back to each rail
/// through its own `fb` transport delay.
#[allow(clippy::too_many_arguments)]
pub fn build_gdmr(
    b: &mut NetlistBuilder,
    pre: &str,
    lreq: SigId,
    rack: SigId,
    err: SigId,
    corr: SigId,
    rst: SigId,
    t: &TimingConfig,
    eq: Equations,
    d: &CtrlDelays,
) -> CtrlPorts {
    let outs = ["CLK", "RREQ", "LACK", "Z"].map(|n| b.signal(&format!("{pre}{n}")));
    // Var::OUTPUTS order is rreq, lack, clk, z
    let guarded = [outs[1], outs[2], outs[0], outs[3]];
    let k = d.path();
    let done_rise = t.sigma.saturating_sub(k).max(1);
    let mut gates = Vec::new();
    let mut rail_outputs = [[0; 4]; 2];
    let mut done = [0; 2];
    for r in 0..2 {
        let rp = format!("{pre}r{}_", r + 1);
        let mut src: HashMap<Var, SigId> = HashMap::new();
        for (vi, &v) in Var::OUTPUTS.iter().enumerate() {
            let fb = b.signal(&format!("{rp}fb_{}", v.name()));
            b.dline(
                &format!("{rp}dfb_{}", v.name()),
                guarded[vi],
                fb,
                t.fb.max(1),
                t.fb.max(1),
                false,
            );
            src.insert(v, fb);
        }
        let dn = b.signal(&format!("{rp}Done"));
        b.dline(
            &format!("{rp}ddone"),
            outs[0],
            dn,
            done_rise,
            d.done_fall,
            false,
        );
        src.insert(Var::Done, dn);
        done[r] = dn;
        for (v, s) in [(Var::Lreq, lreq), (Var::Rack, rack)] {
            let o = b.signal(&format!("{rp}in_{}", v.name()));
            gates.push(b.gate(
                &format!("{rp}in_{}", v.name()),
                GateKind::Buf,
                &[s],
                o,
                d.input_buf,
                0,
                false,
            ));
            src.insert(v, o);
        }
        src.insert(Var::Err, err);
        src.insert(Var::Corr, corr);

        let mut lits: HashMap<Lit, SigId> = HashMap::new();
        let mut lit = |b: &mut NetlistBuilder, gates: &mut Vec<usize>, l: Lit| -> SigId {
            *lits.entry(l).or_insert_with(|| {
                let name = format!("{rp}lit_{}{}", if l.1 { "" } else { "n" }, l.0.name());
                let o = b.signal(&name);
                let kind = if l.1 { GateKind::Buf } else { GateKind::Inv };
                gates.push(b.gate(&name, kind, &[src[&l.0]], o, d.literal, 0, false));
                o
            })
        };
        for (oi, terms) in equations(eq).iter().enumerate() {
            let on = Var::OUTPUTS[oi].name();
            let mut term_outs = Vec::new();
            for (ti, term) in terms.iter().enumerate() {
                let ls: Vec<SigId> = term.iter().map(|&l| lit(b, &mut gates, l)).collect();
                let tp = format!("{rp}{on}_t{ti}");
                term_outs.push(and_tree(b, &mut gates, &tp, &ls, d.gate));
            }
            let o1 = b.signal(&format!("{rp}{on}_or_a"));
            let o2 = b.signal(&format!("{rp}{on}_or_b"));
            let o3 = b.signal(&format!("{rp}{on}_sum"));
            gates.push(b.gate(
                &format!("{rp}{on}_or_a"),
                GateKind::Or2,
                &[term_outs[0], term_outs[1]],
                o1,
                d.gate,
                0,
                false,
            ));
            gates.push(b.gate(
                &format!("{rp}{on}_or_b"),
                GateKind::Or2,
                &[term_outs[2], term_outs[3]],
                o2,
                d.gate,
                0,
                false,
            ));
            gates.push(b.gate(
                &format!("{rp}{on}_sum"),
                GateKind::Or2,
                &[o1, o2],
                o3,
                d.gate,
                0,
                false,
            ));
            let ro = b.signal(&format!("{rp}{on}"));
            gates.push(b.gate(
                &format!("{rp}{on}"),
                GateKind::And2,
                &[o3, rst],
                ro,
                d.gate,
                0,
                false,
            ));
            rail_outputs[r][oi] = ro;
        }
    }
    for (oi, &g) in guarded.iter().enumerate() {
        let name = format!("{pre}guard_{}", Var::OUTPUTS[oi].name());
        gates.push(b.gate(
            &name,
            GateKind::Celem2,
            &[rail_outputs[0][oi], rail_outputs[1][oi]],
            g,
            d.guard,
            0,
            true,
        ));
    }
    CtrlPorts {
        clk: outs[0],
        rreq: outs[1],
        lack: outs[2],
        z: outs[3],
        gates,
        rail_outputs,
        done,
    }
}

/// A depth-two AND tree over up to four literals, padded with buffers so
/// every term has the same delay.
fn and_tree(
    b: &mut NetlistBuilder,
    gates: &mut Vec<usize>,
    pre: &str,
    ls: &[SigId],
    d: u64,
) -> SigId {
    assert!(
        (1..=4).contains(&ls.len()),
        "product terms have one to four literals"
    );
    let mut level = Vec::new();
    for (j, pair) in ls.chunks(2).enumerate() {
        let o = b.signal(&format!("{pre}_a{j}"));
        let g = match pair {
            [x, y] => b.gate(
                &format!("{pre}_a{j}"),
                GateKind::And2,
                &[*x, *y],
                o,
                d,
                0,
                false,
            ),
            [x] => b.gate(&format!("{pre}_a{j}"), GateKind::Buf, &[*x], o, d, 0, false),
            _ => unreachable!(),
        };
        gates.push(g);
        level.push(o);
    }
    let o = b.signal(pre);
    let g = match level[..] {
        [x, y] => b.gate(pre, GateKind::And2, &[x, y], o, d, 0, false),
        [x] => b.gate(pre, GateKind::Buf, &[x], o, d, 0, false),
        _ => unreachable!(),
    };
    gates.push(g);
    o
}

/// A token controller: a normal controller whose own acknowledge, delayed
/// by `loop_delay`, serves as its request. The environment answers each
/// acknowledge by presenting the next token, so the first request follows
/// reset without any external stimulus.
#[allow(clippy::too_many_arguments)]
pub fn build_token_controller(
    b: &mut NetlistBuilder,
    pre: &str,
    rack: SigId,
    err: SigId,
    corr: SigId,
    rst: SigId,
    loop_delay: u64,
    t: &TimingConfig,
    eq: Equations,
    d: &CtrlDelays,
) -> CtrlPorts {
    let lreq = b.signal(&format!("{pre}LREQ"));
    let ports = build_gdmr(b, pre, lreq, rack, err, corr, rst, t, eq, d);
    b.dline(
        &format!("{pre}dtoken"),
        ports.lack,
        lreq,
        loop_delay.max(1),
        loop_delay.max(1),
        false,
    );
    ports
}

#[cfg(test)]
mod tests {
    use super::*;
    use LogicValue::X;

    fn inputs(rst: bool, lreq: bool, rack: bool, err: bool, corr: bool, done: bool) -> CtrlInputs {
        let b = LogicValue::from_bool;
        CtrlInputs {
            rst: b(rst),
            lreq: b(lreq),
            rack: b(rack),
            err: b(err),
            corr: b(corr),
            done: b(done),
        }
    }

    fn step(s: &CtrlState, i: CtrlInputs) -> CtrlState {
        ctrl_next(Equations::Corrected, CtrlKind::Normal, s, &i).unwrap()
    }

    fn reset_state() -> CtrlState {
        let s = CtrlState {
            inputs: inputs(false, false, false, false, true, false),
            ..Default::default()
        };
        step(&s, inputs(true, false, false, false, true, false))
    }

    #[test]
    fn reset_release_acknowledges() {
        let s = reset_state();
        assert_eq!(
            (s.lack, s.rreq, s.clk, s.z, s.burst_state),
            (L1, L0, L0, L0, 1)
        );
    }

    // hand execution of the four equations through one error-free token
    #[test]
    fn no_error_cycle_reaches_state_four() {
        let s = reset_state();
        let s = step(&s, inputs(true, true, false, false, true, false));
        assert_eq!((s.clk, s.burst_state), (L0, 1));
        let s = step(&s, inputs(true, true, true, false, true, false));
        assert_eq!((s.clk, s.burst_state), (L1, 2));
        let s = step(&s, inputs(true, true, true, false, false, false));
        assert_eq!(s.burst_state, 3);
        let s = step(&s, inputs(true, true, true, false, false, true));
        assert_eq!((s.clk, s.z, s.burst_state), (L0, L1, 4));
        let s = step(&s, inputs(true, true, true, false, false, false));
        assert_eq!(s.burst_state, 4);
        let s4 = s;
        let e = step(&s4, inputs(true, true, true, true, false, false));
        assert_eq!((e.clk, e.burst_state), (L1, 3));
        let c = step(&s4, inputs(true, true, true, false, true, false));
        assert_eq!((c.rreq, c.lack, c.clk, c.burst_state), (L1, L0, L0, 6));
    }

    #[test]
    fn unknown_inputs_propagate() {
        let s = CtrlState::default();
        let n = excitation(
            Equations::Corrected,
            &s,
            &CtrlInputs {
                rst: X,
                corr: L1,
                ..Default::default()
            },
        );
        assert_eq!(n[1], X);
    }

    #[test]
    fn corrected_equations_conform() {
        let c = check_conformance(Equations::Corrected, CtrlKind::Normal);
        assert!(c.is_clean(), "{c:#?}");
        let t = check_conformance(Equations::Corrected, CtrlKind::Token);
        assert!(
            t.missing.is_empty() && t.glitches.is_empty() && t.unexplained.is_empty(),
            "{t:#?}"
        );
    }

    #[test]
    fn published_z_equation_does_not_conform() {
        let c = check_conformance(Equations::Published, CtrlKind::Normal);
        assert!(!c.is_clean());
    }

    #[test]
    fn gdmr_structure() {
        let mut b = NetlistBuilder::new();
        let [lreq, rack, err, corr, rst] = ["lreq", "rack", "err", "corr", "rst"].map(|n| {
            let s = b.signal(n);
            b.input(s);
            s
        });
        let p = build_gdmr(
            &mut b,
            "c_",
            lreq,
            rack,
            err,
            corr,
            rst,
            &TimingConfig::preset(),
            Equations::Corrected,
            &CtrlDelays::default(),
        );
        let nl = b.finish().unwrap();
        let guards: Vec<_> = nl
            .gates
            .iter()
            .filter(|g| g.kind == GateKind::Celem2)
            .collect();
        assert_eq!(guards.len(), 4);
        assert!(guards.iter().all(|g| g.hardened));
        assert_eq!(p.gates.len(), nl.gates.len());
        assert_eq!(CtrlDelays::default().path(), 13);
    }
}
