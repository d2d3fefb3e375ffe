//! Error detecting logic: per-bit transition detectors and asymmetric
//! C-elements, an OR tree, and a Q-flop that turns the tree output into a
//! dual-rail Err/Corr decision once Sample rises.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::Time;
use crate::logic::{GateKind, LogicValue};
use crate::netlist::{NetlistBuilder, QFlop, SigId};
use crate::timing::{TimingConfig, Violation};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QOut {
    Err,
    Corr,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QFlopParams {
    pub setup: u64,
    pub hold: u64,
    pub pd: u64,
    /// Mean of the exponential metastability resolution time, ps.
    pub meta_mean: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QOutcome {
    pub which: QOut,
    pub assert_at: Time,
    pub metastable: bool,
}

/// Decides one Q-flop sample. `history` lists `(time, new value)` input
/// changes in time order, starting with the initial value.
pub fn qflop_sample<R: Rng + ?Sized>(
    history: &[(Time, LogicValue)],
    sample_rise: Time,
    p: &QFlopParams,
    rng: &mut R,
) -> QOutcome {
    let lo = sample_rise.0.saturating_sub(p.setup);
    let hi = sample_rise.0 + p.hold;
    let mut before = LogicValue::X;
    let mut moved = false;
    for &(t, v) in history {
        if t.0 < lo {
            before = v;
        } else if t.0 <= hi {
            moved = true;
        } else {
            break;
        }
    }
    match before {
        LogicValue::L1 if !moved => QOutcome {
            which: QOut::Err,
            assert_at: sample_rise.after(p.pd.max(p.hold)),
            metastable: false,
        },
        LogicValue::L0 if !moved => QOutcome {
            which: QOut::Corr,
            assert_at: sample_rise.after(p.pd.max(p.hold)),
            metastable: false,
        },
        _ => {
            let which = if rng.random_bool(0.5) {
                QOut::Err
            } else {
                QOut::Corr
            };
            let r = Exp::new(1.0 / p.meta_mean.max(f64::MIN_POSITIVE))
                .map(|e| e.sample(rng))
                .unwrap_or(0.0);
            let r = (r.ceil() as u64).max(1);
            let at = sample_rise
                .after(p.pd + r)
                .max(sample_rise.after(p.hold + 1));
            QOutcome {
                which,
                assert_at: at,
                metastable: true,
            }
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("timing constraints violated: {0:?}")]
pub struct TimingConstraintViolation(pub Vec<Violation>);

/// Signals and gates of one stage's EDL.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdlPorts {
    pub err: SigId,
    pub corr: SigId,
    pub y: SigId,
    pub sample: SigId,
    pub sample_bar: SigId,
    pub tree_out: SigId,
    /// Gate indices (detectors, C-elements, OR tree) for the stage record.
    pub gates: Vec<usize>,
    pub detectors: usize,
    pub celements: usize,
    pub tree_depth: usize,
}

/// Emits the EDL watching `data` (the latch D pins) of a stage clocked by
/// `clk`. Signal and element names are prefixed with `pre`.
pub fn build_edl(
    b: &mut NetlistBuilder,
    pre: &str,
    data: &[SigId],
    clk: SigId,
    t: &TimingConfig,
) -> Result<EdlPorts, TimingConstraintViolation> {
    let fails = t.fails();
    if !fails.is_empty() {
        return Err(TimingConstraintViolation(fails));
    }
    let y = b.signal(&format!("{pre}Y"));
    let sample = b.signal(&format!("{pre}Sample"));
    let sb = b.signal(&format!("{pre}SampleB"));
    b.dline(&format!("{pre}dcomp"), clk, y, t.comp_r, t.comp_f, false);
    // Sample is an inverted, delayed Y; its fall on a new CLK rise only has
    // to come after the detectors are sensitised
    b.dline(&format!("{pre}dsu"), y, sample, t.su, SAMPLE_FALL, true);
    b.dline(&format!("{pre}dh"), sample, sb, SB_RISE, t.h, true);

    let mut gates = Vec::new();
    let mut flags = Vec::new();
    for (i, &d) in data.iter().enumerate() {
        let dd = b.signal(&format!("{pre}Dd{i}"));
        let x = b.signal(&format!("{pre}X{i}"));
        let set = b.signal(&format!("{pre}set{i}"));
        let keep = b.signal(&format!("{pre}keep{i}"));
        let flag = b.signal(&format!("{pre}flag{i}"));
        b.dline(&format!("{pre}dp{i}"), d, dd, t.dp, t.dp, false);
        gates.push(b.gate(
            &format!("{pre}xor{i}"),
            GateKind::Xor2,
            &[d, dd],
            x,
            t.xor_pd.max(1),
            0,
            false,
        ));
        gates.push(b.gate(
            &format!("{pre}set{i}"),
            GateKind::And2,
            &[x, y],
            set,
            1,
            0,
            false,
        ));
        gates.push(b.gate(
            &format!("{pre}keep{i}"),
            GateKind::Or2,
            &[y, sb],
            keep,
            1,
            0,
            false,
        ));
        if t.c_pullup == t.c_pulldown {
            gates.push(b.gate(
                &format!("{pre}c{i}"),
                GateKind::Celem2,
                &[set, keep],
                flag,
                t.c_pullup.max(1),
                0,
                false,
            ));
        } else {
            let raw = b.signal(&format!("{pre}craw{i}"));
            let base = t.c_pullup.min(t.c_pulldown).max(1);
            gates.push(b.gate(
                &format!("{pre}c{i}"),
                GateKind::Celem2,
                &[set, keep],
                raw,
                base,
                0,
                false,
            ));
            b.dline(
                &format!("{pre}casym{i}"),
                raw,
                flag,
                t.c_pullup.saturating_sub(base),
                t.c_pulldown.saturating_sub(base),
                false,
            );
        }
        flags.push(flag);
    }

    let depth = tree_depth(flags.len());
    let per = if depth == 0 {
        t.or_tree.max(1)
    } else {
        (t.or_tree / depth as u64).max(1)
    };
    let mut level = flags;
    let mut lvl = 0;
    if depth == 0 {
        let out = b.signal(&format!("{pre}or_0_0"));
        gates.push(b.gate(
            &format!("{pre}or_0_0"),
            GateKind::Buf,
            &[level[0]],
            out,
            per,
            0,
            false,
        ));
        level = vec![out];
    }
    while level.len() > 1 {
        let mut next = Vec::new();
        for (j, pair) in level.chunks(2).enumerate() {
            let out = b.signal(&format!("{pre}or_{lvl}_{j}"));
            let g = match pair {
                [a, c] => b.gate(
                    &format!("{pre}or_{lvl}_{j}"),
                    GateKind::Or2,
                    &[*a, *c],
                    out,
                    per,
                    0,
                    false,
                ),
                [a] => b.gate(
                    &format!("{pre}or_{lvl}_{j}"),
                    GateKind::Buf,
                    &[*a],
                    out,
                    per,
                    0,
                    false,
                ),
                _ => unreachable!(),
            };
            gates.push(g);
            next.push(out);
        }
        level = next;
        lvl += 1;
    }
    let tree_out = level[0];
    let err = b.signal(&format!("{pre}Err"));
    let corr = b.signal(&format!("{pre}Corr"));
    b.qflop(QFlop {
        id: format!("{pre}qflop"),
        d: tree_out,
        sample,
        err,
        corr,
        setup: t.q_setup,
        hold: t.q_hold,
        pd: t.q_pd,
    });
    Ok(EdlPorts {
        err,
        corr,
        y,
        sample,
        sample_bar: sb,
        tree_out,
        gates,
        detectors: data.len(),
        celements: data.len(),
        tree_depth: depth,
    })
}

/// Sample falls this long after Y rises.
pub const SAMPLE_FALL: u64 = 10;
/// Sample_bar rises this long after Sample falls.
pub const SB_RISE: u64 = 2;

fn tree_depth(n: usize) -> usize {
    let mut d = 0;
    while (1usize << d) < n {
        d += 1;
    }
    d
}
