use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use serad::faultlab::{run_campaign, run_scenario, stimulus, CampaignConfig, SCENARIOS};
use serad::kernel::Time;
use serad::netlist::Netlist;
use serad::parse::{parse_netlist, write_netlist};
use serad::report::{area_csv, area_table_text, write_report};
use serad::sim::{simulate, SetPulse, SimConfig, TraceMode};
use serad::timing::{Severity, TimingConfig};
use serad::variants::{area_table, build, estimate_area, PipelineSpec, Variant};
use serad::vcd::write_vcd;

#[derive(Parser)]
#[command(
    name = "serad",
    version,
    about = "Simulate and fault-inject soft-error-resilient asynchronous pipelines"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Cone {
    Mixed,
    Identity,
}

#[derive(clap::Args)]
struct SpecArgs {
    /// Number of pipeline stages.
    #[arg(long, default_value_t = 4)]
    stages: usize,
    /// Stage logic: 8-bit ripple-carry cone or one buffer per bit.
    #[arg(long, value_enum, default_value = "mixed")]
    cone: Cone,
    /// Bus width of the identity cone.
    #[arg(long, default_value_t = 8)]
    width: usize,
    /// Timing file (key = value); the built-in preset otherwise.
    #[arg(long)]
    timing: Option<PathBuf>,
}

impl SpecArgs {
    fn spec(&self) -> PipelineSpec {
        match self.cone {
            Cone::Mixed => PipelineSpec::mixed(self.stages),
            Cone::Identity => PipelineSpec::identity(self.stages, self.width),
        }
    }

    fn timing(&self) -> Result<TimingConfig> {
        load_timing(self.timing.as_deref())
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one simulation of a netlist file.
    Sim {
        netlist: PathBuf,
        /// Comma-separated tokens.
        #[arg(long, value_delimiter = ',')]
        stimulus: Vec<u64>,
        /// Random tokens to drive when no stimulus is given.
        #[arg(long, default_value_t = 4)]
        tokens: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Transient as node:start:width (ps); repeatable.
        #[arg(long)]
        inject: Vec<String>,
        /// Write every signal to a VCD file.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Stop time, ps.
        #[arg(long, default_value_t = 10_000_000)]
        until: u64,
    },
    /// Run a fault-injection campaign file.
    Campaign {
        config: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Exit 1 if any trial silently corrupted data or deadlocked.
        #[arg(long)]
        assert_clean: bool,
    },
    /// Check a timing file against the timing constraints.
    Check { timing: PathBuf },
    /// Emit the netlist text of a variant.
    Build {
        #[arg(long, value_parser = parse_variant)]
        variant: Variant,
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Estimate area of netlist files, or compare all variants.
    Area {
        netlists: Vec<PathBuf>,
        /// Build and compare the four variants instead.
        #[arg(long)]
        compare: bool,
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        csv: bool,
    },
    /// Run a named waveform scenario.
    Scenario {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(SCENARIOS))]
        name: String,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        timing: Option<PathBuf>,
    },
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse()
}

fn load_timing(path: Option<&Path>) -> Result<TimingConfig> {
    match path {
        None => Ok(TimingConfig::preset()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            TimingConfig::from_kv(&text).with_context(|| format!("in {}", p.display()))
        }
    }
}

fn load_netlist(path: &Path) -> Result<Netlist> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_netlist(&text).with_context(|| format!("in {}", path.display()))
}

fn parse_pulse(nl: &Netlist, s: &str) -> Result<SetPulse> {
    let parts: Vec<&str> = s.split(':').collect();
    let [node, start, width] = parts[..] else {
        bail!("transient `{s}` is not node:start:width");
    };
    let sig = nl
        .sig(node)
        .ok_or_else(|| anyhow!("unknown node `{node}`"))?;
    Ok(SetPulse {
        node: sig,
        start: Time(start.parse().context("start")?),
        width: width.parse().context("width")?,
    })
}

/// Ok(true) means the command's verdict failed.
fn run(cli: Cli) -> Result<bool> {
    match cli.cmd {
        Cmd::Sim {
            netlist,
            stimulus: stim,
            tokens,
            seed,
            inject,
            trace,
            until,
        } => {
            let nl = load_netlist(&netlist)?;
            let width = nl.sources.first().map_or(0, |s| s.bus.len());
            let stim = if stim.is_empty() {
                stimulus(tokens, width, seed)
            } else {
                stim
            };
            let pulses = inject
                .iter()
                .map(|s| parse_pulse(&nl, s))
                .collect::<Result<Vec<_>>>()?;
            let cfg = SimConfig {
                until: Time(until),
                seed,
                tokens_expected: stim.len(),
                trace: if trace.is_some() {
                    TraceMode::All
                } else {
                    TraceMode::Off
                },
                ..SimConfig::default()
            };
            let res = simulate(&nl, &stim, cfg, &pulses)?;
            for (i, sink) in res.sinks.iter().enumerate() {
                for r in sink {
                    let w = r.word().map_or("x".to_string(), |w| w.to_string());
                    println!("sink{i} t={} word={w}", r.time.0);
                }
            }
            println!(
                "events={} end={}ps err_rises={} metastable={} swallowed={}{}",
                res.stats.events_processed,
                res.stats.final_time.0,
                res.err_rises,
                res.metastable,
                res.swallowed,
                if res.stats.deadlocked {
                    " deadlock"
                } else {
                    ""
                }
            );
            if let (Some(path), Some(tr)) = (trace, res.trace.as_ref()) {
                write_vcd(tr, &path).with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(false)
        }
        Cmd::Campaign {
            config,
            report,
            assert_clean,
        } => {
            let text = fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let dir = config.parent().unwrap_or(Path::new("."));
            let cfg = CampaignConfig::from_kv(&text, dir)?;
            let rep = run_campaign(&cfg)?;
            println!(
                "{} trials on {} ({} nodes, seed {})",
                rep.n_trials, rep.variant, rep.nodes, rep.seed
            );
            for (k, v) in &rep.counts {
                println!("  {k:<18} {v}");
            }
            if rep.penalty.count > 0 {
                println!(
                    "  penalty per re-sample: mean {} ps, max {} ps",
                    rep.penalty.mean, rep.penalty.max
                );
            }
            if let Some(p) = report {
                write_report(&rep, &p)?;
            }
            let bad = rep.count("silent_corruption") + rep.count("deadlock");
            Ok(assert_clean && bad > 0)
        }
        Cmd::Check { timing } => {
            let t = load_timing(Some(&timing))?;
            let v = t.check();
            for x in &v {
                println!("{x}");
            }
            let fails = v.iter().filter(|x| x.severity == Severity::Fail).count();
            println!(
                "{} violations ({fails} fail, {} warn)",
                v.len(),
                v.len() - fails
            );
            Ok(fails > 0)
        }
        Cmd::Build {
            variant,
            spec,
            output,
        } => {
            let d = build(variant, &spec.spec(), &spec.timing()?)?;
            let text = write_netlist(&d.netlist);
            match output {
                Some(p) => {
                    fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?
                }
                None => print!("{text}"),
            }
            Ok(false)
        }
        Cmd::Area {
            netlists,
            compare,
            spec,
            csv,
        } => {
            if compare {
                let t = spec.timing()?;
                let designs = Variant::ALL
                    .iter()
                    .map(|&v| build(v, &spec.spec(), &t))
                    .collect::<Result<Vec<_>, _>>()?;
                let rows = area_table(&designs);
                print!(
                    "{}",
                    if csv {
                        area_csv(&rows)
                    } else {
                        area_table_text(&rows)
                    }
                );
                return Ok(false);
            }
            if netlists.is_empty() {
                bail!("give netlist files or --compare");
            }
            if csv {
                println!("netlist,comb_area,seq_area,total_area");
            }
            for p in &netlists {
                let a = estimate_area(&load_netlist(p)?);
                if csv {
                    println!(
                        "{},{},{},{}",
                        p.display(),
                        a.comb_area,
                        a.seq_area,
                        a.total_area
                    );
                } else {
                    println!(
                        "{}: comb {} seq {} total {}",
                        p.display(),
                        a.comb_area,
                        a.seq_area,
                        a.total_area
                    );
                }
            }
            Ok(false)
        }
        Cmd::Scenario {
            name,
            trace,
            report,
            timing,
        } => {
            let t = load_timing(timing.as_deref())?;
            let r = run_scenario(&name, &t)?;
            println!("{}: {}", r.name, r.description);
            for (node, start, width) in &r.pulses {
                println!("  transient {node} at {start} ps, {width} ps wide");
            }
            println!(
                "  outcome {} | re-samples {} | penalty {} ps | data {} | controller outputs {}",
                r.outcome,
                r.resamples,
                r.penalty,
                if r.data_ok { "ok" } else { "CORRUPT" },
                if r.outputs_clean { "clean" } else { "changed" }
            );
            if let (Some(p), Some(tr)) = (trace, r.trace.as_ref()) {
                write_vcd(tr, &p).with_context(|| format!("writing {}", p.display()))?;
            }
            if let Some(p) = report {
                write_report(&r, &p)?;
            }
            Ok(!r.data_ok)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
