//! Delay budget of a SERAD pipeline and its constraint checker.
//!
//! All values are integer picoseconds. `sigma` and `delta` are derived:
//! σ = max(φ, τ) and δ = Δ − σ.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, KeyValues};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimingConfig {
    /// Widest SET the design must tolerate.
    pub tau: u64,
    /// Minimum clock pulse width of the DICE latch.
    pub phi: u64,
    pub sigma: u64,
    /// Worst-case stage delay including one latch.
    #[serde(rename = "Delta")]
    pub big_delta: u64,
    pub delta: u64,
    /// Time to close and re-open the latches on a re-sample.
    pub y: u64,
    pub dice_hold: u64,
    pub xor_pd: u64,
    pub x_pw: u64,
    pub c_pullup: u64,
    pub c_pulldown: u64,
    pub or_tree: u64,
    pub q_setup: u64,
    pub q_hold: u64,
    pub comp_r: u64,
    pub comp_f: u64,
    pub su: u64,
    pub h: u64,
    pub no_overlap: u64,
    pub q_pd: u64,
    /// Bound on Corr → next-stage CLK↑.
    pub ctrl: u64,
    /// Transition-detector delay element.
    pub dp: u64,
    pub latch_pd: u64,
    /// Transport delay on controller feedback wires.
    pub fb: u64,
    /// Allowed slack on the matched-delay equalities.
    pub eq_tol: u64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TimingError {
    #[error("invalid timing: Delta ({big_delta}) must exceed sigma ({sigma})")]
    InvalidTiming { big_delta: u64, sigma: u64 },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Constraint {
    Eq1,
    Eq2,
    Eq3,
    Eq4,
    Eq5,
    Eq6,
    Sigma,
    Delta,
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Constraint::Eq1 => "EQ1",
            Constraint::Eq2 => "EQ2",
            Constraint::Eq3 => "EQ3",
            Constraint::Eq4 => "EQ4",
            Constraint::Eq5 => "EQ5",
            Constraint::Eq6 => "EQ6",
            Constraint::Sigma => "SIGMA",
            Constraint::Delta => "DELTA",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Severity {
    Fail,
    Warn,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub id: Constraint,
    pub lhs: u64,
    pub rhs: u64,
    pub severity: Severity,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Fail => "fail",
            Severity::Warn => "warn",
        };
        write!(
            f,
            "{} [{sev}]: {} (lhs={} rhs={})",
            self.id, self.message, self.lhs, self.rhs
        )
    }
}

const KEYS: &[&str] = &[
    "tau",
    "phi",
    "sigma",
    "Delta",
    "delta",
    "y",
    "dice_hold",
    "xor_pd",
    "x_pw",
    "c_pullup",
    "c_pulldown",
    "or_tree",
    "q_setup",
    "q_hold",
    "comp_r",
    "comp_f",
    "su",
    "h",
    "no_overlap",
    "q_pd",
    "ctrl",
    "dp",
    "latch_pd",
    "fb",
    "eq_tol",
];

impl TimingConfig {
    /// Implementation defaults: τ=100, φ=60, Δ=1000, y=30 and EDL/controller
    /// delays chosen so every constraint holds.
    pub fn preset() -> Self {
        TimingConfig {
            tau: 100,
            phi: 60,
            sigma: 100,
            big_delta: 1000,
            delta: 900,
            y: 30,
            dice_hold: 2,
            xor_pd: 2,
            x_pw: 3,
            c_pullup: 3,
            c_pulldown: 3,
            or_tree: 3,
            q_setup: 1,
            q_hold: 2,
            comp_r: 5,
            comp_f: 7,
            su: 8,
            h: 2,
            no_overlap: 115,
            q_pd: 2,
            ctrl: 40,
            dp: 3,
            latch_pd: 10,
            fb: 2,
            eq_tol: 0,
        }
    }

    /// Recomputes σ and δ from τ, φ and Δ.
    pub fn derive(mut self) -> Result<Self, TimingError> {
        self.sigma = self.tau.max(self.phi);
        if self.big_delta <= self.sigma {
            return Err(TimingError::InvalidTiming {
                big_delta: self.big_delta,
                sigma: self.sigma,
            });
        }
        self.delta = self.big_delta - self.sigma;
        Ok(self)
    }

    /// Preset with τ, φ, Δ replaced, then derived.
    pub fn with(tau: u64, phi: u64, big_delta: u64) -> Result<Self, TimingError> {
        TimingConfig {
            tau,
            phi,
            big_delta,
            ..Self::preset()
        }
        .derive()
    }

    /// Reads a key=value file. Missing keys take preset values; `sigma` and
    /// `delta` are derived unless given explicitly (and then checked).
    pub fn from_kv(text: &str) -> Result<Self, TimingError> {
        let kv = KeyValues::parse(text)?;
        kv.restrict(KEYS)?;
        let p = Self::preset();
        let mut c = TimingConfig {
            tau: kv.get_or("tau", p.tau)?,
            phi: kv.get_or("phi", p.phi)?,
            sigma: 0,
            big_delta: kv.get_or("Delta", p.big_delta)?,
            delta: 0,
            y: kv.get_or("y", p.y)?,
            dice_hold: kv.get_or("dice_hold", p.dice_hold)?,
            xor_pd: kv.get_or("xor_pd", p.xor_pd)?,
            x_pw: kv.get_or("x_pw", p.x_pw)?,
            c_pullup: kv.get_or("c_pullup", p.c_pullup)?,
            c_pulldown: kv.get_or("c_pulldown", p.c_pulldown)?,
            or_tree: kv.get_or("or_tree", p.or_tree)?,
            q_setup: kv.get_or("q_setup", p.q_setup)?,
            q_hold: kv.get_or("q_hold", p.q_hold)?,
            comp_r: kv.get_or("comp_r", p.comp_r)?,
            comp_f: kv.get_or("comp_f", p.comp_f)?,
            su: kv.get_or("su", p.su)?,
            h: kv.get_or("h", p.h)?,
            no_overlap: kv.get_or("no_overlap", p.no_overlap)?,
            q_pd: kv.get_or("q_pd", p.q_pd)?,
            ctrl: kv.get_or("ctrl", p.ctrl)?,
            dp: kv.get_or("dp", p.dp)?,
            latch_pd: kv.get_or("latch_pd", p.latch_pd)?,
            fb: kv.get_or("fb", p.fb)?,
            eq_tol: kv.get_or("eq_tol", p.eq_tol)?,
        }
        .derive()?;
        if let Some(s) = kv.get("sigma")? {
            c.sigma = s;
        }
        if let Some(d) = kv.get("delta")? {
            c.delta = d;
        }
        Ok(c)
    }

    pub fn to_kv(&self) -> String {
        let v = [
            self.tau,
            self.phi,
            self.sigma,
            self.big_delta,
            self.delta,
            self.y,
            self.dice_hold,
            self.xor_pd,
            self.x_pw,
            self.c_pullup,
            self.c_pulldown,
            self.or_tree,
            self.q_setup,
            self.q_hold,
            self.comp_r,
            self.comp_f,
            self.su,
            self.h,
            self.no_overlap,
            self.q_pd,
            self.ctrl,
            self.dp,
            self.latch_pd,
            self.fb,
            self.eq_tol,
        ];
        KEYS.iter()
            .zip(v)
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Every failed constraint; empty when the configuration is sound.
    pub fn check(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |id, lhs, rhs, severity, message: &str| {
            out.push(Violation {
                id,
                lhs,
                rhs,
                severity,
                message: message.to_string(),
            })
        };
        let sig = self.tau.max(self.phi);
        if self.sigma != sig {
            push(
                Constraint::Sigma,
                self.sigma,
                sig,
                Severity::Fail,
                "sigma must equal max(phi, tau)",
            );
        }
        let del = self.big_delta.saturating_sub(self.sigma);
        if self.big_delta <= self.sigma || self.delta != del {
            push(
                Constraint::Delta,
                self.delta,
                del,
                Severity::Fail,
                "delta must equal Delta - sigma with Delta > sigma",
            );
        }
        if self.x_pw < self.c_pullup {
            push(
                Constraint::Eq1,
                self.x_pw,
                self.c_pullup,
                Severity::Fail,
                "x_pw >= c_pullup",
            );
        }
        let r = self.xor_pd + self.x_pw;
        if self.comp_r.abs_diff(r) > self.eq_tol {
            push(
                Constraint::Eq2,
                self.comp_r,
                r,
                Severity::Fail,
                "comp_r == xor_pd + x_pw",
            );
        }
        let f = self.xor_pd + self.x_pw + self.dice_hold;
        if self.comp_f.abs_diff(f) > self.eq_tol {
            push(
                Constraint::Eq3,
                self.comp_f,
                f,
                Severity::Fail,
                "comp_f == xor_pd + x_pw + dice_hold",
            );
        }
        let su = self.c_pullup + self.or_tree + self.q_setup;
        if self.su < su {
            push(
                Constraint::Eq4,
                self.su,
                su,
                Severity::Fail,
                "su >= c_pullup + or_tree + q_setup",
            );
        }
        let hold = self.h + self.c_pulldown + self.or_tree;
        if self.q_hold > hold {
            push(
                Constraint::Eq5,
                self.q_hold,
                hold,
                Severity::Warn,
                "q_hold <= h + c_pulldown + or_tree",
            );
        }
        let no = min_no_overlap(self);
        if self.no_overlap < no {
            push(
                Constraint::Eq6,
                self.no_overlap,
                no,
                Severity::Fail,
                "no_overlap >= comp_r + su + q_pd + ctrl",
            );
        }
        out
    }

    pub fn fails(&self) -> Vec<Violation> {
        self.check()
            .into_iter()
            .filter(|v| v.severity == Severity::Fail)
            .collect()
    }
}

/// Lower bound on the non-overlap period between consecutive stage clocks.
pub fn min_no_overlap(c: &TimingConfig) -> u64 {
    c.comp_r + c.su + c.q_pd + c.ctrl
}

/// Steady-state interval between the clock rises of consecutive stages for
/// one token: Δ when the control overhead hides behind a shortened δ line,
/// δ_no + σ otherwise.
pub fn min_cycle_time(c: &TimingConfig) -> u64 {
    c.big_delta.max(c.no_overlap + c.sigma)
}

/// Extra latency charged to a token per re-sample.
pub fn error_penalty(c: &TimingConfig) -> u64 {
    2 * c.sigma + c.y
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(v: &[Violation]) -> Vec<Constraint> {
        v.iter().map(|v| v.id).collect()
    }

    #[test]
    fn derive_examples() {
        let a = TimingConfig::with(100, 60, 1000).unwrap();
        assert_eq!((a.sigma, a.delta), (100, 900));
        let b = TimingConfig::with(60, 100, 1000).unwrap();
        assert_eq!((b.sigma, b.delta), (100, 900));
        assert_eq!(
            TimingConfig::with(100, 60, 90),
            Err(TimingError::InvalidTiming {
                big_delta: 90,
                sigma: 100
            })
        );
    }

    #[test]
    fn preset_is_clean() {
        assert!(TimingConfig::preset().check().is_empty());
        assert_eq!(
            TimingConfig::preset().derive().unwrap(),
            TimingConfig::preset()
        );
    }

    #[test]
    fn eq1_boundary_holds() {
        let c = TimingConfig {
            x_pw: 3,
            c_pullup: 3,
            ..TimingConfig::preset()
        };
        assert!(!ids(&c.check()).contains(&Constraint::Eq1));
    }

    #[test]
    fn eq4_one_short() {
        let p = TimingConfig::preset();
        let c = TimingConfig {
            su: p.c_pullup + p.or_tree + p.q_setup - 1,
            ..p
        };
        assert_eq!(ids(&c.check()), vec![Constraint::Eq4]);
    }

    #[test]
    fn eq3_missing_hold_term() {
        let p = TimingConfig::preset();
        let c = TimingConfig {
            comp_f: p.xor_pd + p.x_pw,
            ..p
        };
        assert_eq!(ids(&c.check()), vec![Constraint::Eq3]);
    }

    #[test]
    fn eq5_is_warning() {
        let p = TimingConfig::preset();
        let c = TimingConfig {
            q_hold: p.h + p.c_pulldown + p.or_tree + 1,
            ..p
        };
        let v = c.check();
        assert_eq!(ids(&v), vec![Constraint::Eq5]);
        assert_eq!(v[0].severity, Severity::Warn);
        assert!(c.fails().is_empty());
    }

    #[test]
    fn no_overlap_examples() {
        let c = TimingConfig {
            comp_r: 30,
            su: 40,
            q_pd: 20,
            ctrl: 25,
            ..TimingConfig::preset()
        };
        assert_eq!(min_no_overlap(&c), 115);
        let z = TimingConfig {
            comp_r: 0,
            su: 0,
            q_pd: 0,
            ctrl: 0,
            ..TimingConfig::preset()
        };
        assert_eq!(min_no_overlap(&z), 0);
    }

    #[test]
    fn cycle_time_regimes() {
        let p = TimingConfig::preset();
        assert_eq!(min_cycle_time(&p), 1000);
        let short = TimingConfig::with(100, 60, 150).unwrap();
        assert_eq!(min_cycle_time(&short), 215);
        let degenerate = TimingConfig {
            sigma: 0,
            big_delta: 80,
            ..p
        };
        assert_eq!(min_cycle_time(&degenerate), 115);
    }

    #[test]
    fn penalty() {
        assert_eq!(error_penalty(&TimingConfig::preset()), 230);
        assert_eq!(
            error_penalty(&TimingConfig {
                sigma: 0,
                y: 0,
                ..TimingConfig::preset()
            }),
            0
        );
    }

    #[test]
    fn kv_round_trip() {
        let p = TimingConfig::preset();
        assert_eq!(TimingConfig::from_kv(&p.to_kv()).unwrap(), p);
        assert_eq!(TimingConfig::from_kv("").unwrap(), p);
        assert!(TimingConfig::from_kv("bogus = 1").is_err());
        let bad = TimingConfig::from_kv("sigma = 90").unwrap();
        assert_eq!(
            ids(&bad.check()),
            vec![Constraint::Sigma, Constraint::Delta]
        );
    }

    proptest! {
        #[test]
        fn derive_is_idempotent(tau in 0u64..500, phi in 0u64..500, extra in 1u64..2000) {
            let d = tau.max(phi) + extra;
            let c = TimingConfig::with(tau, phi, d).unwrap();
            prop_assert_eq!(c.clone().derive().unwrap(), c.clone());
            prop_assert_eq!(c.sigma, tau.max(phi));
            prop_assert_eq!(c.delta + c.sigma, d);
        }
    }
}
