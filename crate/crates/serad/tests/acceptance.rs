//! End-to-end acceptance checks. Each check prints one PASS/FAIL line; the
//! process exits non-zero if any failed.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use serad::control::{check_conformance, CtrlKind, Equations};
use serad::faultlab::{
    golden_run, run_campaign, run_scenario, select_nodes, stimulus, sweep, CampaignConfig, Lab,
    MaskKind, NodeFilter, Outcome, Trial,
};
use serad::kernel::Time;
use serad::logic::LogicValue;
use serad::report::to_canonical_json;
use serad::sim::{simulate, SimConfig, TraceMode};
use serad::timing::{error_penalty, min_cycle_time, Constraint, Severity, TimingConfig};
use serad::variants::{area_table, build, estimate_activity_power, Design, PipelineSpec, Variant};
use serad::vcd::{parse_vcd, to_vcd, Trace};

type Check = Result<String, String>;

const CAMPAIGN_TRIALS: usize = 10_000;
const CAMPAIGN_SEED: u64 = 2024;
const CAMPAIGN_BUDGET: Duration = Duration::from_secs(120);
/// Penalty and period comparisons, ps.
const PENALTY_TOL: i64 = 2;
const PERIOD_TOL: i64 = 2;
const SWEEP_STEP: u64 = 5;
const CTRL_SWEEP_STEP: u64 = 10;
const META_TRIALS: usize = 1000;

fn ensure(cond: bool, ok: String) -> Check {
    if cond {
        Ok(ok)
    } else {
        Err(ok)
    }
}

fn preset() -> TimingConfig {
    TimingConfig::preset()
}

fn design(v: Variant, spec: &PipelineSpec, t: &TimingConfig) -> Design {
    build(v, spec, t).expect("design builds")
}

fn sig(d: &Design, name: &str) -> usize {
    d.netlist
        .sig(name)
        .unwrap_or_else(|| panic!("no signal {name}"))
}

fn rises_of(tr: &Trace, name: &str) -> Vec<u64> {
    tr.rises(tr.var(name).expect("watched"))
        .into_iter()
        .map(|t| t.0)
        .collect()
}

fn grid(from: u64, to: u64, step: u64) -> Vec<u64> {
    (from..to).step_by(step as usize).collect()
}

fn campaign_serad() -> Check {
    let cfg = CampaignConfig::new(Variant::Serad, CAMPAIGN_TRIALS, CAMPAIGN_SEED);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .expect("pool");
    let t0 = Instant::now();
    let rep = pool
        .install(|| run_campaign(&cfg))
        .map_err(|e| e.to_string())?;
    let took = t0.elapsed();
    let (sdc, dl) = (rep.count("silent_corruption"), rep.count("deadlock"));
    ensure(
        sdc == 0 && dl == 0 && took < CAMPAIGN_BUDGET && rep.n_trials == CAMPAIGN_TRIALS,
        format!(
            "{} trials, sdc {sdc}, deadlock {dl}, corrected {}, {:.1}s single-threaded",
            rep.n_trials,
            rep.count("corrected"),
            took.as_secs_f64()
        ),
    )
}

fn sweep_two_stage() -> Check {
    let t = preset();
    let d = design(Variant::Serad, &PipelineSpec::mixed(2), &t);
    let stim = stimulus(4, 8, 11);
    let clk1 = sig(&d, "s1_CLK");
    let lab = Lab::new(&d, &stim, Some(vec![clk1])).map_err(|e| e.to_string())?;
    let tr = lab.golden.result.trace.as_ref().expect("traced");
    let r = rises_of(tr, "s1_CLK");
    // two full cycles starting at the second token's capture in stage 1
    let cycle = r[2] - r[1];
    let times = grid(r[1], r[1] + 2 * cycle, SWEEP_STEP);
    let nodes = select_nodes(&d, NodeFilter::Comb);
    let widths = [1, t.tau / 2, t.tau];
    let rep = sweep(&lab, &nodes, &times, &widths).map_err(|e| e.to_string())?;
    let (sdc, dl) = (rep.count("silent_corruption"), rep.count("deadlock"));
    ensure(
        sdc == 0 && dl == 0,
        format!(
            "{} trials ({} nodes x {} times x 3 widths), sdc {sdc}, deadlock {dl}, corrected {}",
            rep.trials,
            nodes.len(),
            times.len(),
            rep.count("corrected")
        ),
    )
}

fn campaign_sync() -> Check {
    let cfg = CampaignConfig::new(Variant::Sync, CAMPAIGN_TRIALS, CAMPAIGN_SEED);
    let rep = run_campaign(&cfg).map_err(|e| e.to_string())?;
    let sdc = rep.count("silent_corruption");
    ensure(sdc > 0, format!("{} trials, sdc {sdc}", rep.n_trials))
}

fn single_resample() -> Check {
    let t = preset();
    let r = run_scenario("fig7c", &t).map_err(|e| e.to_string())?;
    let want = error_penalty(&t) as i64;
    ensure(
        r.resamples == 1 && r.data_ok && (r.penalty - want).abs() <= PENALTY_TOL,
        format!(
            "re-samples {}, data {}, penalty {} ps vs 2*sigma+y = {want} ps",
            r.resamples,
            if r.data_ok { "ok" } else { "corrupt" },
            r.penalty
        ),
    )
}

fn double_resample() -> Check {
    let r = run_scenario("fig7d", &preset()).map_err(|e| e.to_string())?;
    ensure(
        r.resamples == 2 && r.data_ok && r.outcome == Outcome::Corrected(2),
        format!(
            "re-samples {}, outcome {}, data {}",
            r.resamples,
            r.outcome,
            if r.data_ok { "ok" } else { "corrupt" }
        ),
    )
}

/// Largest edge displacement between two traces whose per-signal edge
/// sequences match, or None when edges were added, lost or reordered.
fn edge_shift(a: &Trace, b: &Trace, until: Time) -> Option<u64> {
    let mut worst = 0;
    for v in 0..a.names.len() {
        let (x, y): (Vec<_>, Vec<_>) = (a.waveform(v), b.waveform(v));
        let x: Vec<_> = x.into_iter().filter(|c| c.0 <= until).collect();
        let y: Vec<_> = y.into_iter().take(x.len()).collect();
        if x.len() != y.len() || x.iter().zip(&y).any(|(p, q)| p.1 != q.1) {
            return None;
        }
        worst = x
            .iter()
            .zip(&y)
            .map(|(p, q)| p.0 .0.abs_diff(q.0 .0))
            .fold(worst, u64::max);
    }
    Some(worst)
}

fn controller_sweep() -> Check {
    let t = preset();
    let d = design(Variant::Serad, &PipelineSpec::mixed(3), &t);
    let mut watch = Vec::new();
    for i in 1..=3 {
        for o in ["CLK", "RREQ", "LACK"] {
            watch.push(sig(&d, &format!("s{i}_{o}")));
        }
    }
    let stim = stimulus(4, 8, 5);
    let lab = Lab::new(&d, &stim, Some(watch.clone())).map_err(|e| e.to_string())?;
    let gtr = lab.golden.result.trace.as_ref().expect("traced");
    let r = rises_of(gtr, "s2_CLK");
    // one full controller cycle of the middle stage
    let times = grid(r[1], r[2], CTRL_SWEEP_STEP);
    let nl = &d.netlist;
    let nodes: Vec<usize> = nl.stages[1]
        .ctrl
        .iter()
        .map(|&g| nl.gates[g].output)
        .collect();
    let mut trials = Vec::new();
    for &node in &nodes {
        for &start in &times {
            for width in [1, t.sigma / 2, t.sigma] {
                trials.push(Trial {
                    node,
                    start,
                    width,
                    seed: start,
                });
            }
        }
    }
    let res = lab.run_trials(&trials).map_err(|e| e.to_string())?;
    let bad = res.iter().filter(|r| r.outcome.is_failure()).count();
    let mism: Vec<_> = res
        .iter()
        .filter(|r| r.watched_equal == Some(false))
        .collect();
    // classify each waveform change: same edges shifted in time, or a changed edge sequence
    let (mut shifted, mut reshaped, mut worst) = (0, 0, 0);
    for m in &mism {
        let cfg = SimConfig {
            tokens_expected: stim.len(),
            seed: m.trial.seed,
            trace: TraceMode::Watch(watch.clone()),
            ..SimConfig::default()
        };
        let p = serad::sim::SetPulse {
            node: m.trial.node,
            start: Time(m.trial.start),
            width: m.trial.width,
        };
        let f = simulate(nl, &stim, cfg, &[p]).map_err(|e| e.to_string())?;
        match edge_shift(gtr, f.trace.as_ref().expect("traced"), lab.golden.end) {
            Some(dt) => {
                shifted += 1;
                worst = worst.max(dt);
            }
            None => reshaped += 1,
        }
    }
    let first = mism
        .first()
        .map(|f| {
            format!(
                "; first: {} at {} w {}",
                nl.name(f.trial.node),
                f.trial.start,
                f.trial.width
            )
        })
        .unwrap_or_default();
    ensure(
        mism.is_empty() && bad == 0,
        format!(
            "{} trials on {} controller nodes, failures {bad}, waveform changes {} ({shifted} same edges delayed by <= {worst} ps, {reshaped} altered){first}",
            res.len(),
            nodes.len(),
            mism.len()
        ),
    )
}

fn timing_checker() -> Check {
    let p = preset();
    if !p.check().is_empty() {
        return Err(format!("preset has violations: {:?}", p.check()));
    }
    let cases: [(Constraint, TimingConfig); 6] = [
        (
            Constraint::Eq1,
            TimingConfig {
                c_pullup: p.x_pw + 1,
                ..p.clone()
            },
        ),
        (
            Constraint::Eq2,
            TimingConfig {
                comp_r: p.xor_pd + p.x_pw - p.eq_tol - 1,
                ..p.clone()
            },
        ),
        (
            Constraint::Eq3,
            TimingConfig {
                comp_f: p.xor_pd + p.x_pw + p.dice_hold - p.eq_tol - 1,
                ..p.clone()
            },
        ),
        (
            Constraint::Eq4,
            TimingConfig {
                su: p.c_pullup + p.or_tree + p.q_setup - 1,
                ..p.clone()
            },
        ),
        (
            Constraint::Eq5,
            TimingConfig {
                q_hold: p.h + p.c_pulldown + p.or_tree + 1,
                ..p.clone()
            },
        ),
        (
            Constraint::Eq6,
            TimingConfig {
                no_overlap: p.comp_r + p.su + p.q_pd + p.ctrl - 1,
                ..p.clone()
            },
        ),
    ];
    let mut notes = Vec::new();
    let mut ok = true;
    for (want, c) in cases {
        let v = c.check();
        let sev = if want == Constraint::Eq5 {
            Severity::Warn
        } else {
            Severity::Fail
        };
        let hit = v.len() == 1 && v[0].id == want && v[0].severity == sev;
        ok &= hit;
        notes.push(format!("{want:?}:{}", if hit { "ok" } else { "wrong" }));
    }
    ensure(
        ok,
        format!("preset clean; single perturbations {}", notes.join(" ")),
    )
}

/// Mean interval between clock rises of consecutive stages for the middle tokens.
fn forward_period(d: &Design, tokens: usize) -> f64 {
    let n = d.spec.stages.len();
    let watch = (1..=n).map(|i| sig(d, &format!("s{i}_CLK"))).collect();
    let stim = stimulus(tokens, d.spec.width(), 3);
    let g = golden_run(d, &stim, TraceMode::Watch(watch)).expect("golden");
    let tr = g.result.trace.expect("traced");
    let clks: Vec<Vec<u64>> = (1..=n)
        .map(|i| rises_of(&tr, &format!("s{i}_CLK")))
        .collect();
    let mut gaps = Vec::new();
    for w in clks.windows(2) {
        gaps.extend((1..tokens - 1).map(|k| w[1][k] as f64 - w[0][k] as f64));
    }
    gaps.iter().sum::<f64>() / gaps.len() as f64
}

fn cycle_time() -> Check {
    let slow = preset();
    let d = design(Variant::Serad, &PipelineSpec::mixed(4), &slow);
    let a = forward_period(&d, 6);
    // small Delta: the non-overlap period plus sigma dominates
    let fast = TimingConfig::with(slow.tau, slow.phi, 150).expect("valid timing");
    let e = design(Variant::Serad, &PipelineSpec::identity(4, 8), &fast);
    let b = forward_period(&e, 6);
    let (wa, wb) = (min_cycle_time(&slow) as f64, min_cycle_time(&fast) as f64);
    let tol = PERIOD_TOL as f64;
    ensure(
        (a - wa).abs() <= tol
            && (b - wb).abs() <= tol
            && fast.no_overlap + fast.sigma > fast.big_delta,
        format!("Delta-bound {a:.1} ps (want {wa}), overlap-bound {b:.1} ps (want {wb})"),
    )
}

fn conformance() -> Check {
    let n = check_conformance(Equations::Corrected, CtrlKind::Normal);
    let k = check_conformance(Equations::Corrected, CtrlKind::Token);
    ensure(
        n.is_clean() && k.is_clean(),
        format!(
            "stage controller {} transitions, token controller {} transitions, clean {}/{}",
            n.transitions.len(),
            k.transitions.len(),
            n.is_clean(),
            k.is_clean()
        ),
    )
}

fn metastability() -> Check {
    let t = preset();
    let d = design(Variant::Serad, &PipelineSpec::mixed(4), &t);
    let names = ["s2_Sample", "s2_Err", "s2_Corr"];
    let watch: Vec<usize> = names.iter().map(|n| sig(&d, n)).collect();
    let stim = stimulus(6, 8, 9);
    let lab = Lab::new(&d, &stim, Some(watch.clone())).map_err(|e| e.to_string())?;
    let gtr = lab.golden.result.trace.as_ref().expect("traced");
    let ts = rises_of(gtr, "s2_Sample")[2];
    let node = sig(&d, "s2_or_2_0");
    let mut stats = BTreeMap::new();
    let mut fails = Vec::new();
    for i in 0..META_TRIALS as u64 {
        // the tree output rises inside the Q-flop's window [ts - setup, ts + hold]
        let start = ts - t.q_setup + i % (t.q_setup + t.q_hold + 1);
        let trial = Trial {
            node,
            start,
            width: 20,
            seed: 0xbeef ^ i,
        };
        let cfg = SimConfig {
            tokens_expected: stim.len(),
            seed: trial.seed,
            trace: TraceMode::Watch(watch.clone()),
            ..SimConfig::default()
        };
        let pulse = serad::sim::SetPulse {
            node,
            start: Time(start),
            width: trial.width,
        };
        let res = simulate(&d.netlist, &stim, cfg, &[pulse]).map_err(|e| e.to_string())?;
        let tr = res.trace.as_ref().expect("traced");
        let (s, e, c) = (
            tr.var(names[0]).unwrap(),
            tr.var(names[1]).unwrap(),
            tr.var(names[2]).unwrap(),
        );
        let both = tr.changes.iter().any(|ch| {
            tr.value_at(e, ch.time) == LogicValue::L1 && tr.value_at(c, ch.time) == LogicValue::L1
        });
        let one_each = tr.rises(s).len() == tr.rises(e).len() + tr.rises(c).len();
        let ok_data = res.words(0) == lab.golden.words;
        let deadlock = res.stats.deadlocked || res.sinks[0].len() < stim.len();
        if res.metastable > 0 {
            *stats.entry("metastable").or_insert(0) += 1;
        }
        *stats
            .entry(if tr.rises(e).len() > rises_of(gtr, names[1]).len() {
                "resolved_err"
            } else {
                "resolved_corr"
            })
            .or_insert(0) += 1;
        if both || !one_each || !ok_data || deadlock {
            fails.push(format!(
                "start {start}: both {both} one_each {one_each} data {ok_data} deadlock {deadlock}"
            ));
        }
    }
    let meta = stats.get("metastable").copied().unwrap_or(0);
    ensure(
        fails.is_empty() && meta == META_TRIALS,
        format!(
            "{META_TRIALS} trials, {stats:?}, violations {}{}",
            fails.len(),
            fails
                .first()
                .map(|f| format!("; first: {f}"))
                .unwrap_or_default()
        ),
    )
}

/// Launch edge to first change of a flip-flop D pin.
fn dpin_latency(d: &Design) -> u64 {
    let nl = &d.netlist;
    let clk = sig(d, "clk");
    let dpin = nl.ffs[0].d;
    let g = golden_run(d, &[0, 1, 0, 1], TraceMode::Watch(vec![clk, dpin])).expect("golden");
    let tr = g.result.trace.expect("traced");
    let arrive = tr.rises(1)[0].0;
    let launch = tr
        .rises(0)
        .into_iter()
        .map(|t| t.0)
        .filter(|&t| t <= arrive)
        .max()
        .expect("launch edge");
    arrive - launch
}

fn tmr_and_filter() -> Check {
    let t = preset();
    let d = design(Variant::Tmr, &PipelineSpec::mixed(2), &t);
    let stim = stimulus(4, 8, 13);
    let lab = Lab::new(&d, &stim, None).map_err(|e| e.to_string())?;
    let nodes: Vec<usize> = d
        .copy_gates(0)
        .into_iter()
        .map(|g| d.netlist.gates[g].output)
        .collect();
    let times = grid(d.period, 3 * d.period, 10);
    let rep = sweep(&lab, &nodes, &times, &[1, t.tau, 5 * t.tau]).map_err(|e| e.to_string())?;
    let tmr_sdc = rep.count("silent_corruption") + rep.count("deadlock");

    let id = PipelineSpec::identity(1, 8);
    let extra = dpin_latency(&design(Variant::Gf, &id, &t)) as i64
        - dpin_latency(&design(Variant::Sync, &id, &t)) as i64;

    let g = design(Variant::Gf, &PipelineSpec::mixed(2), &t);
    let glab = Lab::new(&g, &stim, None).map_err(|e| e.to_string())?;
    let outs: Vec<usize> = g
        .netlist
        .gates
        .iter()
        .filter(|x| x.id.contains("filter"))
        .map(|x| x.inputs[0])
        .collect();
    let gtimes = grid(g.period, 3 * g.period, 20);
    let widths: Vec<u64> = vec![1, t.tau / 4, t.tau / 2, t.tau];
    let grep = sweep(&glab, &outs, &gtimes, &widths).map_err(|e| e.to_string())?;
    let leaked = grep.count("silent_corruption") + grep.count("deadlock");
    let swallowed = grep.count(Outcome::Masked(MaskKind::Electrical).label());
    // one picosecond wider than the filter's rejection limit gets through
    let wide = sweep(&glab, &outs, &gtimes, &[t.tau + 1]).map_err(|e| e.to_string())?;
    ensure(
        tmr_sdc == 0 && extra == 2 * t.tau as i64 && leaked == 0,
        format!(
            "tmr copy-0 sweep {} trials, failures {tmr_sdc}; gf extra latency {extra} ps (want {}); filter sweep {} trials, corrupted {leaked}, swallowed {swallowed}; width tau+1 corrupts {}",
            rep.trials,
            2 * t.tau,
            grep.trials,
            wide.count("silent_corruption")
        ),
    )
}

fn area_and_activity() -> Check {
    let t = preset();
    let spec = PipelineSpec::mixed(4);
    let designs: Vec<Design> = Variant::ALL.iter().map(|&v| design(v, &spec, &t)).collect();
    let rows = area_table(&designs);
    let a = |v: Variant| rows.iter().find(|r| r.variant == v).expect("row").area;
    let (s, m, g, r) = (
        a(Variant::Sync),
        a(Variant::Tmr),
        a(Variant::Gf),
        a(Variant::Serad),
    );
    let order =
        s.total_area < g.total_area && g.total_area < r.total_area && r.total_area < m.total_area;
    let tmr3 = m.comb_area >= 3 * s.comb_area;
    let stim = stimulus(8, 8, 21);
    let act = |d: &Design| {
        let cfg = SimConfig {
            tokens_expected: stim.len(),
            ..SimConfig::default()
        };
        let res = simulate(&d.netlist, &stim, cfg, &[]).expect("sim");
        estimate_activity_power(&res, &d.netlist).dpin_activity
    };
    let (as_, ar) = (act(&designs[0]), act(&designs[3]));
    ensure(
        order && tmr3 && ar < as_,
        format!(
            "area sync {} < gf {} < serad {} < tmr {}: {order}; tmr comb {} >= 3x{}: {tmr3}; D-pin activity serad {ar:.3} < sync {as_:.3}: {}",
            s.total_area,
            g.total_area,
            r.total_area,
            m.total_area,
            m.comb_area,
            s.comb_area,
            ar < as_
        ),
    )
}

fn reproducibility() -> Check {
    let cfg = CampaignConfig {
        n_trials: 300,
        ..CampaignConfig::new(Variant::Serad, 300, 77)
    };
    let a = to_canonical_json(&run_campaign(&cfg).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let b = to_canonical_json(&run_campaign(&cfg).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let r = run_scenario("fig7d", &preset()).map_err(|e| e.to_string())?;
    let tr = r.trace.expect("traced");
    let text = to_vcd(&tr);
    let back = parse_vcd(&text).map_err(|e| e.to_string())?;
    let d = design(Variant::Serad, &PipelineSpec::mixed(2), &preset());
    let full = simulate(
        &d.netlist,
        &[1, 2, 3],
        SimConfig {
            tokens_expected: 3,
            trace: TraceMode::All,
            ..SimConfig::default()
        },
        &[],
    )
    .map_err(|e| e.to_string())?;
    let ftr = full.trace.expect("traced");
    let fback = parse_vcd(&to_vcd(&ftr)).map_err(|e| e.to_string())?;
    ensure(
        a == b && back == tr && fback == ftr,
        format!(
            "campaign json {} bytes identical {}; vcd round trip {} + {} signals lossless {}",
            a.len(),
            a == b,
            tr.names.len(),
            ftr.names.len(),
            back == tr && fback == ftr
        ),
    )
}

type CheckFn = fn() -> Check;

fn main() -> ExitCode {
    let checks: [(&str, CheckFn); 13] = [
        (
            "SERAD campaign has no silent corruption or deadlock",
            campaign_serad,
        ),
        ("exhaustive two-stage sweep within tau", sweep_two_stage),
        ("unhardened pipeline corrupts silently", campaign_sync),
        ("single re-sample costs 2*sigma+y", single_resample),
        ("double re-sample recovers", double_resample),
        (
            "controller transients leave outputs unchanged",
            controller_sweep,
        ),
        ("timing checker flags each constraint", timing_checker),
        ("forward period matches cycle-time formula", cycle_time),
        (
            "controller conforms to its burst-mode specification",
            conformance,
        ),
        ("Q-flop metastability is benign", metastability),
        ("TMR and glitch-filter baselines", tmr_and_filter),
        ("area and activity ordering", area_and_activity),
        ("reports and traces are reproducible", reproducibility),
    ];
    let mut failed = 0;
    for (i, (name, f)) in checks.iter().enumerate() {
        let t0 = Instant::now();
        let (tag, detail) = match f() {
            Ok(s) => ("PASS", s),
            Err(s) => {
                failed += 1;
                ("FAIL", s)
            }
        };
        println!(
            "{tag} [{:>2}] {name}: {detail} ({:.1}s)",
            i + 1,
            t0.elapsed().as_secs_f64()
        );
    }
    println!(
        "{} of {} acceptance checks passed",
        checks.len() - failed,
        checks.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
