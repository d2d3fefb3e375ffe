//! Value-change traces and VCD I/O.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::Time;
use crate::logic::LogicValue;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Change {
    pub time: Time,
    /// Index into [`Trace::names`].
    pub var: usize,
    pub value: LogicValue,
}

/// Ordered value changes for a set of named one-bit signals.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub names: Vec<String>,
    pub initial: Vec<LogicValue>,
    pub changes: Vec<Change>,
}

impl Trace {
    pub fn var(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Changes of one variable, in time order.
    pub fn changes_of(&self, var: usize) -> impl Iterator<Item = &Change> + '_ {
        self.changes.iter().filter(move |c| c.var == var)
    }

    pub fn rises(&self, var: usize) -> Vec<Time> {
        let mut prev = self.initial[var];
        let mut out = Vec::new();
        for c in self.changes_of(var) {
            if c.value == LogicValue::L1 && prev != LogicValue::L1 {
                out.push(c.time);
            }
            prev = c.value;
        }
        out
    }

    pub fn value_at(&self, var: usize, t: Time) -> LogicValue {
        let mut v = self.initial[var];
        for c in self.changes_of(var) {
            if c.time > t {
                break;
            }
            v = c.value;
        }
        v
    }

    /// The (time, value) sequence of one variable, for trace comparisons.
    pub fn waveform(&self, var: usize) -> Vec<(Time, LogicValue)> {
        self.changes_of(var).map(|c| (c.time, c.value)).collect()
    }
}

fn ident(i: usize) -> String {
    // printable ASCII identifiers '!'..'~', little-endian base 94
    let mut n = i;
    let mut s = String::new();
    loop {
        s.push((b'!' + (n % 94) as u8) as char);
        n /= 94;
        if n == 0 {
            break;
        }
        n -= 1;
    }
    s
}

pub fn to_vcd(trace: &Trace) -> String {
    let mut o = String::new();
    o.push_str("$timescale 1ps $end\n$scope module top $end\n");
    for (i, n) in trace.names.iter().enumerate() {
        let _ = writeln!(o, "$var wire 1 {} {} $end", ident(i), n);
    }
    o.push_str("$upscope $end\n$enddefinitions $end\n#0\n$dumpvars\n");
    for (i, v) in trace.initial.iter().enumerate() {
        let _ = writeln!(o, "{}{}", v.vcd_char(), ident(i));
    }
    o.push_str("$end\n");
    let mut last = None;
    for c in &trace.changes {
        if last != Some(c.time) {
            let _ = writeln!(o, "#{}", c.time.0);
            last = Some(c.time);
        }
        let _ = writeln!(o, "{}{}", c.value.vcd_char(), ident(c.var));
    }
    o
}

pub fn write_vcd(trace: &Trace, path: &Path) -> io::Result<()> {
    std::fs::write(path, to_vcd(trace))
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("vcd line {line}: {reason}")]
pub struct VcdError {
    pub line: usize,
    pub reason: String,
}

/// Reads back the subset of VCD that [`to_vcd`] emits (one-bit wires,
/// 1 ps timescale).
pub fn parse_vcd(text: &str) -> Result<Trace, VcdError> {
    let err = |line: usize, r: &str| VcdError {
        line,
        reason: r.to_string(),
    };
    let mut tr = Trace::default();
    let mut ids: Vec<String> = Vec::new();
    let mut now: Option<Time> = None;
    let mut in_dump = false;
    let mut defs_done = false;
    for (ix, raw) in text.lines().enumerate() {
        let line = ix + 1;
        let l = raw.trim();
        if l.is_empty() {
            continue;
        }
        if !defs_done {
            let toks: Vec<&str> = l.split_whitespace().collect();
            match toks[0] {
                "$timescale" => {
                    if toks.get(1) != Some(&"1ps") {
                        return Err(err(line, "unsupported timescale"));
                    }
                }
                "$var" => {
                    if toks.len() != 6 || toks[2] != "1" || toks[5] != "$end" {
                        return Err(err(line, "malformed $var"));
                    }
                    ids.push(toks[3].to_string());
                    tr.names.push(toks[4].to_string());
                    tr.initial.push(LogicValue::X);
                }
                "$enddefinitions" => defs_done = true,
                "$scope" | "$upscope" => {}
                _ => return Err(err(line, "unexpected header line")),
            }
            continue;
        }
        if let Some(t) = l.strip_prefix('#') {
            let t: u64 = t.parse().map_err(|_| err(line, "bad timestamp"))?;
            if now.is_some_and(|n| Time(t) < n) {
                return Err(err(line, "time goes backwards"));
            }
            now = Some(Time(t));
            continue;
        }
        match l {
            "$dumpvars" => {
                in_dump = true;
                continue;
            }
            "$end" => {
                in_dump = false;
                continue;
            }
            _ => {}
        }
        let mut chars = l.chars();
        let v = match chars.next() {
            Some('0') => LogicValue::L0,
            Some('1') => LogicValue::L1,
            Some('x') | Some('X') => LogicValue::X,
            _ => return Err(err(line, "unsupported value change")),
        };
        let id = chars.as_str();
        let var = ids
            .iter()
            .position(|i| i == id)
            .ok_or_else(|| err(line, "unknown identifier"))?;
        if in_dump {
            tr.initial[var] = v;
        } else {
            let time = now.ok_or_else(|| err(line, "change before timestamp"))?;
            tr.changes.push(Change {
                time,
                var,
                value: v,
            });
        }
    }
    if !defs_done {
        return Err(err(text.lines().count(), "missing $enddefinitions"));
    }
    Ok(tr)
}
