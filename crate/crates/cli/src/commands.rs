use std::fs;
use std::io::{self, Write};
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use pmmg_core::batch::sweep;
use pmmg_core::cost_model::{calibrate, pmmg_daily_closed, pmmg_daily_composed, CostParams};
use pmmg_core::workload::{generate_default_plan, simulate_day, SessionStatus};
use pmmg_core::{
    build_profiles, DayMetrics, DayPlan, DecisionScript, PermissionStatus, RealFixture, ResourceClass, ResourceOp,
    Rule, RuleOrigin, RuleStore, UnitCosts,
};
use serde::Serialize;

use crate::config::{Config, CONFIG_ENV};
use crate::serve::{self, ServeOptions};

/// Permission broker simulator: rules, virtual profiles, day runs and the
/// overhead model.
#[derive(Debug, Parser)]
#[command(name = "pmmg", version, about)]
pub struct Cli {
    /// Config file (JSON). Overrides the environment variable.
    #[arg(long, global = true, env = CONFIG_ENV, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build profiles and write the initial rules, profile manifest and fixture.
    Setup {
        #[arg(long)]
        seed: Option<u64>,
        /// Replace an existing rules file.
        #[arg(long)]
        force: bool,
    },
    /// Run one simulated day and write its metrics.
    Simulate(SimulateArgs),
    /// Inspect or edit the rule store.
    #[command(subcommand)]
    Rules(RulesCommand),
    /// Evaluate, sweep or calibrate the overhead model.
    #[command(subcommand)]
    Cost(CostCommand),
    /// Inspect virtual profiles.
    #[command(subcommand)]
    Profiles(ProfilesCommand),
    /// Start the HTTP bridge with interactive prompts.
    Serve {
        /// Day plan (JSON). Defaults to the generated plan for the seed.
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Decisions for previously installed apps (JSON). Defaults to all-grant.
        #[arg(long)]
        warmup: Option<PathBuf>,
        /// Advance the simulation without waiting for /step.
        #[arg(long)]
        auto: bool,
        /// Wall-clock milliseconds between automatic steps.
        #[arg(long, default_value_t = 1000, requires = "auto")]
        pace_ms: u64,
    },
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Day plan (JSON). Defaults to the generated plan for the seed.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Decision script (JSON). Defaults to the configured default decision.
    #[arg(long)]
    decisions: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "metrics.json")]
    out: PathBuf,
    /// Also write the run's side-effect trace.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Start from an empty store and do not write the rules file back.
    #[arg(long)]
    fresh: bool,
    #[command(flatten)]
    costs: UnitCostArgs,
}

#[derive(Debug, Args)]
pub struct UnitCostArgs {
    /// Seconds per user prompt.
    #[arg(long, default_value_t = 2.0)]
    ui: f64,
    /// Seconds per permission-granter invocation.
    #[arg(long, default_value_t = 0.01)]
    pg: f64,
    /// Seconds per rule lookup.
    #[arg(long, default_value_t = 0.05)]
    dba: f64,
}

#[derive(Debug, Subcommand)]
pub enum RulesCommand {
    /// Print rules, optionally for one app.
    List {
        app: Option<String>,
        #[arg(long)]
        json: bool,
    },
    /// Create or replace a rule.
    Set {
        app: String,
        resource: ResourceClass,
        status: PermissionStatus,
    },
    /// Delete a rule.
    Rm { app: String, resource: ResourceClass },
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 2.0)]
    ui: f64,
    #[arg(long, default_value_t = 0.01)]
    pg: f64,
    #[arg(long, default_value_t = 0.05)]
    dba: f64,
    /// Mean session length in seconds.
    #[arg(long, default_value_t = 1200.0)]
    app_time: f64,
}

impl ModelArgs {
    fn params(&self, n: u64) -> Result<CostParams> {
        let p = CostParams {
            ui: self.ui,
            pg: self.pg,
            dba: self.dba,
            app_time: self.app_time,
            n,
        };
        if !p.is_valid() {
            bail!("cost parameters must be finite and non-negative");
        }
        Ok(p)
    }
}

#[derive(Debug, Subcommand)]
pub enum CostCommand {
    /// Daily overhead for one parameter set.
    Eval {
        #[command(flatten)]
        model: ModelArgs,
        /// Previously installed apps used per day.
        #[arg(long, default_value_t = 9)]
        n: u64,
        #[arg(long)]
        json: bool,
    },
    /// Overhead over a range of n, as CSV.
    Sweep {
        #[command(flatten)]
        model: ModelArgs,
        /// Inclusive range, `a..b`, `a..=b` or a single value.
        #[arg(long, value_parser = parse_range, default_value = "0..100")]
        n: RangeInclusive<u64>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Fit unit costs to measured metrics files.
    Calibrate {
        #[arg(long, num_args = 1.., required = true)]
        metrics: Vec<PathBuf>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum ProfilesCommand {
    /// Print the first N responses of a virtual profile, one JSON per line.
    Dump {
        resource: ResourceClass,
        #[arg(short, long, default_value_t = 5)]
        n: u64,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn parse_range(s: &str) -> Result<RangeInclusive<u64>, String> {
    let parse = |v: &str| v.trim().parse::<u64>().map_err(|e| format!("`{v}`: {e}"));
    let (a, b) = match s.split_once("..=").or_else(|| s.split_once("..")) {
        Some((a, b)) => (parse(a)?, parse(b)?),
        None => {
            let v = parse(s)?;
            (v, v)
        }
    };
    if a > b {
        return Err(format!("empty range {s}"));
    }
    Ok(a..=b)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {what} {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid {what} {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn load_store(config: &Config) -> Result<RuleStore> {
    if config.rules_path.exists() {
        Ok(RuleStore::load(&config.rules_path)?)
    } else {
        Ok(RuleStore::new())
    }
}

fn load_fixture(config: &Config) -> Result<RealFixture> {
    if config.fixture_path.exists() {
        Ok(RealFixture::load(&config.fixture_path)?)
    } else {
        Ok(RealFixture::default_fixture())
    }
}

fn load_plan(path: Option<&Path>, seed: u64) -> Result<DayPlan> {
    match path {
        Some(p) => read_json(p, "plan"),
        None => Ok(generate_default_plan(seed)),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let config = Config::resolve(cli.config.as_deref())?;
    let mut out = io::stdout().lock();
    match cli.command {
        Command::Setup { seed, force } => setup(&config, seed.unwrap_or(config.seed), force, &mut out),
        Command::Simulate(args) => simulate(&config, args, &mut out),
        Command::Rules(cmd) => rules(&config, cmd, &mut out),
        Command::Cost(cmd) => cost(cmd, &mut out),
        Command::Profiles(ProfilesCommand::Dump { resource, n, seed }) => {
            let fixture = load_fixture(&config)?;
            let registry = build_profiles(seed.unwrap_or(config.seed)).with_exclusions(vec![fixture.location]);
            let mut session = registry.open_session(resource);
            let op = ResourceOp::sample(resource);
            for _ in 0..n {
                let response = registry.invoke(&mut session, &op)?;
                writeln!(out, "{}", serde_json::to_string(&response)?)?;
            }
            Ok(())
        }
        Command::Serve {
            plan,
            warmup,
            auto,
            pace_ms,
        } => {
            let plan = load_plan(plan.as_deref(), config.seed)?;
            let warmup = match warmup {
                Some(p) => read_json(&p, "decisions")?,
                None => DecisionScript::uniform(PermissionStatus::Grant),
            };
            serve::run(ServeOptions {
                config,
                plan,
                warmup,
                auto: auto.then(|| Duration::from_millis(pace_ms)),
            })
        }
    }
}

fn setup(config: &Config, seed: u64, force: bool, out: &mut impl Write) -> Result<()> {
    if config.rules_path.exists() && !force {
        bail!("{} already exists (use --force to replace it)", config.rules_path.display());
    }
    if let Some(dir) = config.rules_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    RuleStore::new().save(&config.rules_path)?;

    let fixture = load_fixture(config)?;
    if !config.fixture_path.exists() {
        fixture.save(&config.fixture_path)?;
    }
    let registry = build_profiles(seed).with_exclusions(vec![fixture.location]);
    let profiles: Vec<_> = registry.profiles().collect();
    write_json(
        &config.profiles_path(),
        &serde_json::json!({
            "seed": seed,
            "exclusions": registry.exclusions(),
            "profiles": profiles,
        }),
    )?;
    writeln!(out, "rules:    {}", config.rules_path.display())?;
    writeln!(out, "profiles: {} ({} resource classes, seed {seed})", config.profiles_path().display(), profiles.len())?;
    writeln!(out, "fixture:  {}", config.fixture_path.display())?;
    Ok(())
}

fn simulate(config: &Config, args: SimulateArgs, out: &mut impl Write) -> Result<()> {
    let seed = args.seed.unwrap_or(config.seed);
    let plan = load_plan(args.plan.as_deref(), seed)?;
    let decisions = match &args.decisions {
        Some(p) => read_json(p, "decisions")?,
        None => DecisionScript::uniform(config.default_decision),
    };
    let unit_costs = UnitCosts {
        ui: args.costs.ui,
        pg: args.costs.pg,
        dba: args.costs.dba,
    };
    let store = if args.fresh { RuleStore::new() } else { load_store(config)? };
    let fixture = load_fixture(config)?;
    let output = simulate_day(&plan, &decisions, seed, unit_costs, store, &fixture)?;

    fs::write(&args.out, output.metrics.to_json()).with_context(|| format!("cannot write {}", args.out.display()))?;
    if !args.fresh {
        output.store.save(&config.rules_path)?;
    }
    if let Some(path) = &args.trace {
        write_json(path, &output.trace)?;
    }

    let m = &output.metrics;
    let completed = m.sessions.iter().filter(|s| s.status == SessionStatus::Completed).count();
    writeln!(
        out,
        "{} sessions: {completed} completed, {} aborted",
        m.sessions.len(),
        m.sessions.len() - completed
    )?;
    writeln!(
        out,
        "ui={} pg={} dba={} vp_sessions={} vp_active={}s",
        m.metering.ui_prompts, m.metering.pg_invocations, m.metering.dba_lookups, m.metering.vp_sessions, m.vp_active_time_s
    )?;
    writeln!(out, "observed overhead {:.3} s -> {}", m.observed_cost_s(), args.out.display())?;
    Ok(())
}

fn origin_name(origin: RuleOrigin) -> String {
    serde_json::to_value(origin)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

fn rules(config: &Config, cmd: RulesCommand, out: &mut impl Write) -> Result<()> {
    let mut store = load_store(config)?;
    match cmd {
        RulesCommand::List { app, json } => {
            let rules = store.list_rules(app.as_deref());
            if json {
                writeln!(out, "{}", serde_json::to_string_pretty(&rules)?)?;
            } else {
                for r in rules {
                    writeln!(
                        out,
                        "{}\t{}\t{}\t{}\t{}",
                        r.app_id,
                        r.resource,
                        r.status,
                        r.decided_at,
                        origin_name(r.origin)
                    )?;
                }
            }
        }
        RulesCommand::Set { app, resource, status } => {
            let at = store.last_tick() + 1;
            store.upsert(Rule::new(app.clone(), resource, status, at, RuleOrigin::UserEdit))?;
            store.save(&config.rules_path)?;
            writeln!(out, "{app}\t{resource}\t{status}")?;
        }
        RulesCommand::Rm { app, resource } => {
            let at = store.last_tick() + 1;
            if store.delete(&app, resource, at).is_none() {
                bail!("no rule for {app}/{resource}");
            }
            store.save(&config.rules_path)?;
        }
    }
    Ok(())
}

fn cost(cmd: CostCommand, out: &mut impl Write) -> Result<()> {
    match cmd {
        CostCommand::Eval { model, n, json } => {
            let p = model.params(n)?;
            let b = pmmg_daily_composed(&p.to_exact()).to_f64();
            if json {
                writeln!(out, "{}", serde_json::to_string_pretty(&b)?)?;
            } else {
                writeln!(out, "new_app {:.6}", b.new_app)?;
                writeln!(out, "old_app {:.6}", b.old_app)?;
                writeln!(out, "vp      {:.6}", b.vp)?;
                writeln!(out, "daily   {:.6}", b.daily)?;
                debug_assert!((pmmg_daily_closed(&p) - b.daily).abs() <= 1e-6 * b.daily.max(1.0));
            }
        }
        CostCommand::Sweep { model, n, csv } => {
            let rows = sweep(&model.params(*n.start())?, n);
            let sink: Box<dyn Write> = match &csv {
                Some(path) => Box::new(fs::File::create(path).with_context(|| format!("cannot write {}", path.display()))?),
                None => Box::new(&mut *out),
            };
            let mut w = csv::Writer::from_writer(sink);
            for row in &rows {
                w.serialize(row)?;
            }
            w.flush()?;
            drop(w);
            if let Some(path) = csv {
                writeln!(out, "{} rows -> {}", rows.len(), path.display())?;
            }
        }
        CostCommand::Calibrate { metrics, json } => {
            let runs = metrics
                .iter()
                .map(|p| read_json::<DayMetrics>(p, "metrics"))
                .collect::<Result<Vec<_>>>()?;
            let cal = calibrate(&runs)?;
            if json {
                writeln!(out, "{}", serde_json::to_string_pretty(&cal)?)?;
            } else {
                let p = &cal.params;
                writeln!(out, "ui       {:.6} s", p.ui)?;
                writeln!(out, "pg       {:.6} s", p.pg)?;
                writeln!(out, "dba      {:.6} s", p.dba)?;
                writeln!(out, "app_time {:.3} s", p.app_time)?;
                writeln!(out, "n        {}", p.n)?;
                writeln!(out, "residual {:.3e} s over {} runs", cal.residual_s, cal.runs)?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(parse_range("0..100"), Ok(0..=100));
        assert_eq!(parse_range("3..=7"), Ok(3..=7));
        assert_eq!(parse_range("9"), Ok(9..=9));
        assert!(parse_range("5..2").is_err());
        assert!(parse_range("a..b").is_err());
    }

    #[test]
    fn cli_shape() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
