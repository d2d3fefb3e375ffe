use proptest::prelude::*;

use serad::faultlab::{run_campaign, select_nodes, CampaignConfig, NodeFilter};
use serad::kernel::Time;
use serad::logic::LogicValue;
use serad::netlist::Driver;
use serad::parse::{parse_netlist, write_netlist};
use serad::sim::{simulate, SetPulse, SimConfig, SimResult, TraceMode};
use serad::timing::{min_cycle_time, Constraint, TimingConfig};
use serad::variants::{build, Design, PipelineSpec, Variant};
use serad::vcd::Trace;

fn design(v: Variant, stages: usize) -> Design {
    build(v, &PipelineSpec::mixed(stages), &TimingConfig::preset()).unwrap()
}

fn sim(d: &Design, stim: &[u64], pulses: &[SetPulse]) -> SimResult {
    let cfg = SimConfig {
        tokens_expected: stim.len(),
        trace: TraceMode::All,
        seed: 5,
        ..SimConfig::default()
    };
    simulate(&d.netlist, stim, cfg, pulses).unwrap()
}

fn var(tr: &Trace, name: &str) -> usize {
    tr.var(name).unwrap()
}

/// (time, value) changes of one signal, dropping repeats of the same value.
fn edges(tr: &Trace, v: usize) -> Vec<(u64, LogicValue)> {
    let mut prev = tr.initial[v];
    let mut out = Vec::new();
    for c in tr.changes_of(v) {
        if c.value != prev {
            out.push((c.time.0, c.value));
            prev = c.value;
        }
    }
    out
}

fn stim_strategy() -> impl Strategy<Value = Vec<u64>> {
    prop::collection::vec(0u64..256, 2..5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fault_free_serad_matches_the_function(stim in stim_strategy()) {
        let d = design(Variant::Serad, 2);
        let res = sim(&d, &stim, &[]);
        let want: Vec<Option<u64>> = stim.iter().map(|&x| Some(d.spec.golden(x))).collect();
        prop_assert_eq!(res.words(0), want);
        prop_assert!(!res.stats.deadlocked);
    }

    #[test]
    fn runs_are_deterministic(stim in stim_strategy(), pick in any::<prop::sample::Index>(), start in 100u64..4000, width in 1u64..=100) {
        let d = design(Variant::Serad, 2);
        let nodes = select_nodes(&d, NodeFilter::All);
        let p = SetPulse { node: nodes[pick.index(nodes.len())], start: Time(start), width };
        let a = sim(&d, &stim, &[p]);
        let b = sim(&d, &stim, &[p]);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn trace_time_never_goes_back(stim in stim_strategy(), pick in any::<prop::sample::Index>(), start in 100u64..4000, width in 1u64..=100) {
        let d = design(Variant::Serad, 2);
        let nodes = select_nodes(&d, NodeFilter::Comb);
        let p = SetPulse { node: nodes[pick.index(nodes.len())], start: Time(start), width };
        let tr = sim(&d, &stim, &[p]).trace.unwrap();
        prop_assert!(tr.changes.windows(2).all(|w| w[0].time <= w[1].time));
    }

    // requests and acknowledges strictly alternate on every channel, and the
    // dual-rail error outputs are never both high, despite a transient
    #[test]
    fn handshake_and_dual_rail_hold_under_transients(stim in stim_strategy(), pick in any::<prop::sample::Index>(), start in 100u64..4000, width in 1u64..=100) {
        let d = design(Variant::Serad, 3);
        let mut nodes = select_nodes(&d, NodeFilter::Comb);
        nodes.extend(select_nodes(&d, NodeFilter::Edl));
        let p = SetPulse { node: nodes[pick.index(nodes.len())], start: Time(start), width };
        let tr = sim(&d, &stim, &[p]).trace.unwrap();
        for i in 1..3 {
            let req = edges(&tr, var(&tr, &format!("s{i}_RREQ")));
            let ack = edges(&tr, var(&tr, &format!("s{}_LACK", i + 1)));
            // every request is answered before the next one
            let mut all: Vec<(u64, u8)> = req.iter().map(|e| (e.0, 0)).chain(ack.iter().map(|e| (e.0, 1))).collect();
            all.sort();
            for w in all.windows(2) {
                prop_assert!(w[0].1 != w[1].1, "channel {}: {:?}", i, all);
            }
        }
        for i in 1..=3 {
            let (e, c) = (var(&tr, &format!("s{i}_Err")), var(&tr, &format!("s{i}_Corr")));
            for ch in &tr.changes {
                prop_assert!(!(tr.value_at(e, ch.time) == LogicValue::L1 && tr.value_at(c, ch.time) == LogicValue::L1));
            }
        }
    }

    #[test]
    fn no_pulse_beats_inertia(stim in stim_strategy(), pick in any::<prop::sample::Index>(), start in 100u64..4000, width in 1u64..=100) {
        let d = design(Variant::Serad, 2);
        let nodes = select_nodes(&d, NodeFilter::Comb);
        let struck = nodes[pick.index(nodes.len())];
        let p = SetPulse { node: struck, start: Time(start), width };
        let tr = sim(&d, &stim, &[p]).trace.unwrap();
        let nl = &d.netlist;
        for g in nl.gates.iter().filter(|g| g.inertial > 0 && g.output != struck) {
            let v = var(&tr, nl.name(g.output));
            let mut e = vec![(0, tr.initial[v])];
            e.extend(edges(&tr, v));
            // a pulse leaves a value and returns to it
            for w in e.windows(3).filter(|w| w[0].1 == w[2].1) {
                prop_assert!(w[2].0 - w[1].0 >= g.inertial, "{} pulse {:?}", g.id, w);
            }
        }
    }

    #[test]
    fn hardened_gates_absorb_narrow_transients(stim in stim_strategy(), pick in any::<prop::sample::Index>(), start in 100u64..4000, width in 1u64..=100) {
        let d = design(Variant::Serad, 2);
        let nl = &d.netlist;
        let hard: Vec<usize> = nl.gates.iter().filter(|g| g.hardened).map(|g| g.output).collect();
        let node = hard[pick.index(hard.len())];
        prop_assert!(matches!(nl.driver(node), Some(Driver::Gate(_))));
        let a = sim(&d, &stim, &[]);
        let b = sim(&d, &stim, &[SetPulse { node, start: Time(start), width }]);
        prop_assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn false_alarms_cost_only_time(stim in stim_strategy(), pick in any::<prop::sample::Index>(), start in 100u64..4000, width in 1u64..=100) {
        let d = design(Variant::Serad, 2);
        let nodes = select_nodes(&d, NodeFilter::Edl);
        let p = SetPulse { node: nodes[pick.index(nodes.len())], start: Time(start), width };
        let a = sim(&d, &stim, &[]);
        let b = sim(&d, &stim, &[p]);
        prop_assert_eq!(a.words(0), b.words(0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn campaign_counts_cover_every_trial(n in 1usize..40, seed in any::<u64>(), v in prop::sample::select(Variant::ALL.to_vec())) {
        let cfg = CampaignConfig { stages: 2, tokens: 3, ..CampaignConfig::new(v, n, seed) };
        let rep = run_campaign(&cfg).unwrap();
        prop_assert_eq!(rep.counts.values().sum::<u64>(), n as u64);
        prop_assert_eq!(rep.per_node.values().flat_map(|m| m.values()).sum::<u64>(), n as u64);
    }

    #[test]
    fn netlist_text_round_trips(v in prop::sample::select(Variant::ALL.to_vec()), stages in 1usize..4, identity in any::<bool>()) {
        let spec = if identity { PipelineSpec::identity(stages, 4) } else { PipelineSpec::mixed(stages) };
        let d = build(v, &spec, &TimingConfig::preset()).unwrap();
        let text = write_netlist(&d.netlist);
        let back = parse_netlist(&text).unwrap();
        prop_assert_eq!(write_netlist(&back), text);
    }
}

proptest! {
    #[test]
    fn cycle_time_bounds(tau in 1u64..300, phi in 1u64..300, extra in 1u64..3000, no in 0u64..500) {
        let c = TimingConfig { no_overlap: no, ..TimingConfig::with(tau, phi, tau.max(phi) + extra).unwrap() };
        let p = min_cycle_time(&c);
        prop_assert!(p >= c.big_delta && p >= c.no_overlap + c.sigma);
        prop_assert!(p == c.big_delta || p == c.no_overlap + c.sigma);
    }

    #[test]
    fn setup_constraint_reported_iff_violated(su in 0u64..30) {
        let p = TimingConfig::preset();
        let c = TimingConfig { su, ..p.clone() };
        let hit = c.check().iter().any(|v| v.id == Constraint::Eq4);
        prop_assert_eq!(hit, su < p.c_pullup + p.or_tree + p.q_setup);
    }
}
