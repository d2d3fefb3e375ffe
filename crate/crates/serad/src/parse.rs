//! Line-oriented netlist text format.
//!
//! ```text
//! # comment
//! signal <name>
//! input <name>                      (declares the signal if needed)
//! output <name>
//! gate <id> kind=<KIND> in=<s1>[,<s2>,<s3>] out=<s> delay=<ps> inertial=<ps> [hardened]
//! latch <id> d=<s> q=<s> clk=<s> hold=<ps> minpulse=<ps> [pd=<ps>]
//! ff <id> d=<s> q=<s> clk=<s> setup=<ps> hold=<ps> [pd=<ps>] [hardened]
//! dline <id> in=<s> out=<s> rise=<ps> fall=<ps> [invert]
//! qflop <id> d=<s> sample=<s> err=<s> corr=<s> setup=<ps> hold=<ps> pd=<ps>
//! stage <name> latches=<id,...> cone=<gateid,...> [ctrl=<gateid,...>] [edl=<gateid,...>]
//! clock <s> period=<ps> high=<ps> [offset=<ps>]
//! reset <s> release=<ps>
//! source bus=<s,...> on=<s> edge=toggle|rise delay=<ps>
//! sink data=<s,...> req=<s> ack=<s> delay=<ps>
//! sink data=<s,...> clk=<s> skip=<n>
//! ```
//!
//! Signals must be declared before use. Unknown keys and flags are errors.
//! `latches=` accepts both latch and flip-flop ids.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::logic::GateKind;
use crate::netlist::*;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetlistError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

struct Fields<'a> {
    line: usize,
    kv: HashMap<&'a str, &'a str>,
    flags: Vec<&'a str>,
}

impl<'a> Fields<'a> {
    fn new(
        line: usize,
        toks: &[&'a str],
        keys: &[&str],
        flags: &[&str],
    ) -> Result<Self, NetlistError> {
        let mut kv = HashMap::new();
        let mut fl = Vec::new();
        for t in toks {
            if let Some((k, v)) = t.split_once('=') {
                if !keys.contains(&k) {
                    return Err(perr(line, format!("unknown key `{k}`")));
                }
                if kv.insert(k, v).is_some() {
                    return Err(perr(line, format!("repeated key `{k}`")));
                }
            } else if flags.contains(t) {
                fl.push(*t);
            } else {
                return Err(perr(line, format!("unknown flag `{t}`")));
            }
        }
        Ok(Fields {
            line,
            kv,
            flags: fl,
        })
    }

    fn str(&self, k: &str) -> Result<&'a str, NetlistError> {
        self.kv
            .get(k)
            .copied()
            .ok_or_else(|| perr(self.line, format!("missing `{k}=`")))
    }

    fn num(&self, k: &str) -> Result<u64, NetlistError> {
        let v = self.str(k)?;
        v.parse().map_err(|_| {
            perr(
                self.line,
                format!("`{k}={v}` is not a non-negative integer"),
            )
        })
    }

    fn num_or(&self, k: &str, d: u64) -> Result<u64, NetlistError> {
        if self.kv.contains_key(k) {
            self.num(k)
        } else {
            Ok(d)
        }
    }

    fn list(&self, k: &str) -> Result<Vec<&'a str>, NetlistError> {
        Ok(split_list(self.str(k)?))
    }

    fn opt_list(&self, k: &str) -> Vec<&'a str> {
        self.kv.get(k).map(|v| split_list(v)).unwrap_or_default()
    }

    fn flag(&self, f: &str) -> bool {
        self.flags.contains(&f)
    }
}

fn split_list(v: &str) -> Vec<&str> {
    v.split(',').filter(|s| !s.is_empty()).collect()
}

fn perr(line: usize, reason: impl Into<String>) -> NetlistError {
    NetlistError::Parse {
        line,
        reason: reason.into(),
    }
}

pub const DEFAULT_LATCH_PD: u64 = 10;

pub fn parse_netlist(text: &str) -> Result<Netlist, NetlistError> {
    let mut b = NetlistBuilder::new();
    let mut gate_ids: HashMap<String, usize> = HashMap::new();
    let mut seq_ids: HashMap<String, SeqRef> = HashMap::new();

    for (ix, raw) in text.lines().enumerate() {
        let line = ix + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let toks: Vec<&str> = body.split_whitespace().collect();
        let sig = |b: &NetlistBuilder, name: &str| -> Result<SigId, NetlistError> {
            b.lookup(name)
                .ok_or_else(|| perr(line, format!("undeclared signal `{name}`")))
        };
        let need_name = |what: &str| -> Result<&str, NetlistError> {
            toks.get(1)
                .copied()
                .filter(|t| !t.contains('='))
                .ok_or_else(|| perr(line, format!("{what} needs a name")))
        };
        match toks[0] {
            "signal" => {
                let name = need_name("signal")?;
                if toks.len() > 2 {
                    return Err(perr(line, "trailing tokens after signal name"));
                }
                if b.lookup(name).is_some() {
                    return Err(perr(line, format!("signal `{name}` declared twice")));
                }
                b.signal(name);
            }
            "input" | "output" => {
                let name = need_name(toks[0])?;
                if toks.len() > 2 {
                    return Err(perr(line, "trailing tokens"));
                }
                let s = b.signal(name);
                if toks[0] == "input" {
                    b.input(s)
                } else {
                    b.output(s)
                }
            }
            "gate" => {
                let id = need_name("gate")?;
                let f = Fields::new(
                    line,
                    &toks[2..],
                    &["kind", "in", "out", "delay", "inertial"],
                    &["hardened"],
                )?;
                let kind: GateKind = f.str("kind")?.parse().map_err(|e: String| perr(line, e))?;
                let inputs = f
                    .list("in")?
                    .into_iter()
                    .map(|s| sig(&b, s))
                    .collect::<Result<Vec<_>, _>>()?;
                if inputs.len() != kind.arity() {
                    return Err(perr(line, format!("{kind} takes {} inputs", kind.arity())));
                }
                let out = sig(&b, f.str("out")?)?;
                let g = b.gate(
                    id,
                    kind,
                    &inputs,
                    out,
                    f.num("delay")?,
                    f.num("inertial")?,
                    f.flag("hardened"),
                );
                gate_ids.insert(id.to_string(), g);
            }
            "latch" => {
                let id = need_name("latch")?;
                let f = Fields::new(
                    line,
                    &toks[2..],
                    &["d", "q", "clk", "hold", "minpulse", "pd"],
                    &[],
                )?;
                let l = b.latch(Latch {
                    id: id.to_string(),
                    d: sig(&b, f.str("d")?)?,
                    q: sig(&b, f.str("q")?)?,
                    clk: sig(&b, f.str("clk")?)?,
                    hold: f.num("hold")?,
                    min_pulse: f.num("minpulse")?,
                    pd: f.num_or("pd", DEFAULT_LATCH_PD)?,
                });
                seq_ids.insert(id.to_string(), SeqRef::Latch(l));
            }
            "ff" => {
                let id = need_name("ff")?;
                let f = Fields::new(
                    line,
                    &toks[2..],
                    &["d", "q", "clk", "setup", "hold", "pd"],
                    &["hardened"],
                )?;
                let i = b.ff(FlipFlop {
                    id: id.to_string(),
                    d: sig(&b, f.str("d")?)?,
                    q: sig(&b, f.str("q")?)?,
                    clk: sig(&b, f.str("clk")?)?,
                    setup: f.num("setup")?,
                    hold: f.num("hold")?,
                    pd: f.num_or("pd", DEFAULT_LATCH_PD)?,
                    hardened: f.flag("hardened"),
                });
                seq_ids.insert(id.to_string(), SeqRef::Ff(i));
            }
            "dline" => {
                let id = need_name("dline")?;
                let f = Fields::new(
                    line,
                    &toks[2..],
                    &["in", "out", "rise", "fall"],
                    &["invert"],
                )?;
                b.dline(
                    id,
                    sig(&b, f.str("in")?)?,
                    sig(&b, f.str("out")?)?,
                    f.num("rise")?,
                    f.num("fall")?,
                    f.flag("invert"),
                );
            }
            "qflop" => {
                let id = need_name("qflop")?;
                let f = Fields::new(
                    line,
                    &toks[2..],
                    &["d", "sample", "err", "corr", "setup", "hold", "pd"],
                    &[],
                )?;
                b.qflop(QFlop {
                    id: id.to_string(),
                    d: sig(&b, f.str("d")?)?,
                    sample: sig(&b, f.str("sample")?)?,
                    err: sig(&b, f.str("err")?)?,
                    corr: sig(&b, f.str("corr")?)?,
                    setup: f.num("setup")?,
                    hold: f.num("hold")?,
                    pd: f.num("pd")?,
                });
            }
            "stage" => {
                let name = need_name("stage")?;
                let f = Fields::new(line, &toks[2..], &["latches", "cone", "ctrl", "edl"], &[])?;
                let seq = f
                    .list("latches")?
                    .into_iter()
                    .map(|id| {
                        seq_ids
                            .get(id)
                            .copied()
                            .ok_or_else(|| perr(line, format!("unknown latch `{id}`")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let gates = |ids: Vec<&str>| -> Result<Vec<usize>, NetlistError> {
                    ids.into_iter()
                        .map(|id| {
                            gate_ids
                                .get(id)
                                .copied()
                                .ok_or_else(|| perr(line, format!("unknown gate `{id}`")))
                        })
                        .collect()
                };
                if !f.kv.contains_key("cone") {
                    return Err(perr(line, "missing `cone=`"));
                }
                b.stage(Stage {
                    name: name.to_string(),
                    seq,
                    cone: gates(f.opt_list("cone"))?,
                    ctrl: gates(f.opt_list("ctrl"))?,
                    edl: gates(f.opt_list("edl"))?,
                });
            }
            "clock" => {
                let name = need_name("clock")?;
                let f = Fields::new(line, &toks[2..], &["period", "high", "offset"], &[])?;
                b.clock(Clock {
                    sig: sig(&b, name)?,
                    period: f.num("period")?,
                    high: f.num("high")?,
                    offset: f.num_or("offset", 0)?,
                });
            }
            "reset" => {
                let name = need_name("reset")?;
                let f = Fields::new(line, &toks[2..], &["release"], &[])?;
                b.reset(Reset {
                    sig: sig(&b, name)?,
                    release: f.num("release")?,
                });
            }
            "source" => {
                let f = Fields::new(line, &toks[1..], &["bus", "on", "edge", "delay"], &[])?;
                let bus = f
                    .list("bus")?
                    .into_iter()
                    .map(|s| sig(&b, s))
                    .collect::<Result<Vec<_>, _>>()?;
                let on = sig(&b, f.str("on")?)?;
                let trigger = match f.str("edge")? {
                    "toggle" => Trigger::Toggle(on),
                    "rise" => Trigger::Rise(on),
                    e => return Err(perr(line, format!("unknown edge `{e}`"))),
                };
                b.source(Source {
                    bus,
                    trigger,
                    delay: f.num("delay")?,
                });
            }
            "sink" => {
                let f = Fields::new(
                    line,
                    &toks[1..],
                    &["data", "req", "ack", "delay", "clk", "skip"],
                    &[],
                )?;
                let data = f
                    .list("data")?
                    .into_iter()
                    .map(|s| sig(&b, s))
                    .collect::<Result<Vec<_>, _>>()?;
                let mode = if f.kv.contains_key("clk") {
                    SinkMode::Clocked {
                        clk: sig(&b, f.str("clk")?)?,
                        skip: f.num("skip")? as usize,
                    }
                } else {
                    SinkMode::Handshake {
                        req: sig(&b, f.str("req")?)?,
                        ack: sig(&b, f.str("ack")?)?,
                        delay: f.num("delay")?,
                    }
                };
                b.sink(Sink { data, mode });
            }
            other => return Err(perr(line, format!("unknown directive `{other}`"))),
        }
    }
    Ok(b.finish()?)
}

fn join(nl: &Netlist, v: &[SigId]) -> String {
    v.iter().map(|&s| nl.name(s)).collect::<Vec<_>>().join(",")
}

/// Serialises a netlist so that `parse_netlist(&write_netlist(n)) == n`.
pub fn write_netlist(nl: &Netlist) -> String {
    let mut o = String::new();
    let ins = &nl.inputs;
    // declared in id order so a re-read assigns identical ids
    for (i, s) in nl.signals.iter().enumerate() {
        if ins.contains(&i) {
            let _ = writeln!(o, "input {s}");
        } else {
            let _ = writeln!(o, "signal {s}");
        }
    }
    for &s in &nl.outputs {
        let _ = writeln!(o, "output {}", nl.name(s));
    }
    for g in &nl.gates {
        let _ = write!(
            o,
            "gate {} kind={} in={} out={} delay={} inertial={}",
            g.id,
            g.kind,
            join(nl, &g.inputs),
            nl.name(g.output),
            g.delay,
            g.inertial
        );
        o.push_str(if g.hardened { " hardened\n" } else { "\n" });
    }
    for l in &nl.latches {
        let _ = writeln!(
            o,
            "latch {} d={} q={} clk={} hold={} minpulse={} pd={}",
            l.id,
            nl.name(l.d),
            nl.name(l.q),
            nl.name(l.clk),
            l.hold,
            l.min_pulse,
            l.pd
        );
    }
    for f in &nl.ffs {
        let _ = write!(
            o,
            "ff {} d={} q={} clk={} setup={} hold={} pd={}",
            f.id,
            nl.name(f.d),
            nl.name(f.q),
            nl.name(f.clk),
            f.setup,
            f.hold,
            f.pd
        );
        o.push_str(if f.hardened { " hardened\n" } else { "\n" });
    }
    for d in &nl.dlines {
        let _ = write!(
            o,
            "dline {} in={} out={} rise={} fall={}",
            d.id,
            nl.name(d.input),
            nl.name(d.output),
            d.rise,
            d.fall
        );
        o.push_str(if d.invert { " invert\n" } else { "\n" });
    }
    for q in &nl.qflops {
        let _ = writeln!(
            o,
            "qflop {} d={} sample={} err={} corr={} setup={} hold={} pd={}",
            q.id,
            nl.name(q.d),
            nl.name(q.sample),
            nl.name(q.err),
            nl.name(q.corr),
            q.setup,
            q.hold,
            q.pd
        );
    }
    let gids = |v: &[usize]| {
        v.iter()
            .map(|&g| nl.gates[g].id.as_str())
            .collect::<Vec<_>>()
            .join(",")
    };
    for st in &nl.stages {
        let seq: Vec<&str> = st
            .seq
            .iter()
            .map(|r| match *r {
                SeqRef::Latch(i) => nl.latches[i].id.as_str(),
                SeqRef::Ff(i) => nl.ffs[i].id.as_str(),
            })
            .collect();
        let _ = write!(
            o,
            "stage {} latches={} cone={}",
            st.name,
            seq.join(","),
            gids(&st.cone)
        );
        if !st.ctrl.is_empty() {
            let _ = write!(o, " ctrl={}", gids(&st.ctrl));
        }
        if !st.edl.is_empty() {
            let _ = write!(o, " edl={}", gids(&st.edl));
        }
        o.push('\n');
    }
    for c in &nl.clocks {
        let _ = writeln!(
            o,
            "clock {} period={} high={} offset={}",
            nl.name(c.sig),
            c.period,
            c.high,
            c.offset
        );
    }
    for r in &nl.resets {
        let _ = writeln!(o, "reset {} release={}", nl.name(r.sig), r.release);
    }
    for s in &nl.sources {
        let (on, edge) = match s.trigger {
            Trigger::Toggle(t) => (t, "toggle"),
            Trigger::Rise(t) => (t, "rise"),
        };
        let _ = writeln!(
            o,
            "source bus={} on={} edge={} delay={}",
            join(nl, &s.bus),
            nl.name(on),
            edge,
            s.delay
        );
    }
    for s in &nl.sinks {
        match s.mode {
            SinkMode::Handshake { req, ack, delay } => {
                let _ = writeln!(
                    o,
                    "sink data={} req={} ack={} delay={}",
                    join(nl, &s.data),
                    nl.name(req),
                    nl.name(ack),
                    delay
                );
            }
            SinkMode::Clocked { clk, skip } => {
                let _ = writeln!(
                    o,
                    "sink data={} clk={} skip={}",
                    join(nl, &s.data),
                    nl.name(clk),
                    skip
                );
            }
        }
    }
    o
}
