use std::fmt;
use std::ops::Not;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Ternary signal value. `X` stands for an unknown or metastable level.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LogicValue {
    #[default]
    L0,
    L1,
    X,
}

use LogicValue::{L0, L1, X};

impl LogicValue {
    pub fn from_bool(b: bool) -> Self {
        if b {
            L1
        } else {
            L0
        }
    }

    pub fn to_bool(self) -> Option<bool> {
        match self {
            L0 => Some(false),
            L1 => Some(true),
            X => None,
        }
    }

    pub fn is_known(self) -> bool {
        self != X
    }

    pub fn and(self, o: Self) -> Self {
        match (self, o) {
            (L0, _) | (_, L0) => L0,
            (L1, L1) => L1,
            _ => X,
        }
    }

    pub fn or(self, o: Self) -> Self {
        match (self, o) {
            (L1, _) | (_, L1) => L1,
            (L0, L0) => L0,
            _ => X,
        }
    }

    pub fn xor(self, o: Self) -> Self {
        match (self, o) {
            (X, _) | (_, X) => X,
            (a, b) => Self::from_bool(a != b),
        }
    }

    pub fn vcd_char(self) -> char {
        match self {
            L0 => '0',
            L1 => '1',
            X => 'x',
        }
    }
}

impl Not for LogicValue {
    type Output = LogicValue;
    fn not(self) -> LogicValue {
        match self {
            L0 => L1,
            L1 => L0,
            X => X,
        }
    }
}

impl fmt::Display for LogicValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.vcd_char())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GateKind {
    Inv,
    Buf,
    And2,
    Or2,
    Xor2,
    Nand2,
    Nor2,
    Maj3,
    Celem2,
}

impl GateKind {
    pub const ALL: [GateKind; 9] = [
        GateKind::Inv,
        GateKind::Buf,
        GateKind::And2,
        GateKind::Or2,
        GateKind::Xor2,
        GateKind::Nand2,
        GateKind::Nor2,
        GateKind::Maj3,
        GateKind::Celem2,
    ];

    pub fn arity(self) -> usize {
        match self {
            GateKind::Inv | GateKind::Buf => 1,
            GateKind::Maj3 => 3,
            _ => 2,
        }
    }

    pub fn is_stateful(self) -> bool {
        self == GateKind::Celem2
    }

    pub fn name(self) -> &'static str {
        match self {
            GateKind::Inv => "INV",
            GateKind::Buf => "BUF",
            GateKind::And2 => "AND2",
            GateKind::Or2 => "OR2",
            GateKind::Xor2 => "XOR2",
            GateKind::Nand2 => "NAND2",
            GateKind::Nor2 => "NOR2",
            GateKind::Maj3 => "MAJ3",
            GateKind::Celem2 => "CELEM2",
        }
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GateKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        GateKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown gate kind `{s}`"))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{kind} expects {expected} inputs, got {got}")]
pub struct ArityMismatch {
    pub kind: GateKind,
    pub expected: usize,
    pub got: usize,
}

/// Evaluates one gate with X-pessimism. `prev` is only read by CELEM2,
/// which holds its output while the inputs disagree.
pub fn eval_gate(
    kind: GateKind,
    inputs: &[LogicValue],
    prev: LogicValue,
) -> Result<LogicValue, ArityMismatch> {
    if inputs.len() != kind.arity() {
        return Err(ArityMismatch {
            kind,
            expected: kind.arity(),
            got: inputs.len(),
        });
    }
    Ok(eval_unchecked(kind, inputs, prev))
}

pub(crate) fn eval_unchecked(kind: GateKind, i: &[LogicValue], prev: LogicValue) -> LogicValue {
    match kind {
        GateKind::Inv => !i[0],
        GateKind::Buf => i[0],
        GateKind::And2 => i[0].and(i[1]),
        GateKind::Or2 => i[0].or(i[1]),
        GateKind::Xor2 => i[0].xor(i[1]),
        GateKind::Nand2 => !i[0].and(i[1]),
        GateKind::Nor2 => !i[0].or(i[1]),
        GateKind::Maj3 => i[0].and(i[1]).or(i[1].and(i[2])).or(i[0].and(i[2])),
        GateKind::Celem2 => match (i[0], i[1]) {
            (a, b) if a == b && a != X => a,
            (L0, L1) | (L1, L0) => prev,
            // one input unknown: the output can only move toward the other input
            (X, v) | (v, X) if v == prev => prev,
            _ => X,
        },
    }
}
