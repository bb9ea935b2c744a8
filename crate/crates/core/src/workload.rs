//! Discrete-event simulation of a day of app usage driving the broker.
//!
//! A [`DayPlan`] brings previously installed apps up (outside the day's
//! metering), installs the day's new apps, then replays each session's
//! script against the broker on a virtual clock. [`DayRunner`] exposes the
//! run one event at a time so an operator can pause between steps;
//! [`run_day`] drives it to completion.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::broker::{Broker, BrokerError, DecisionProvider, DecisionScript, InstallReport, Metering, ScriptedDecision, UnitCosts};
use crate::cost_model::CostParams;
use crate::permission::{
    validate_manifest, AccessHandle, AppManifest, Criticality, PermissionRequirement, PermissionStatus, ResourceClass,
    Rule, SessionId, Tick,
};
use crate::rule_store::RuleStore;
use crate::virtual_profiles::{build_profiles, ProfileError, RealFixture, RealProvider, ResourceOp, ResourceResponse};

#[derive(Debug, thiserror::Error)]
pub enum WorkloadError {
    #[error("invalid plan: {}", .0.join("; "))]
    InvalidPlan(Vec<String>),
    #[error(transparent)]
    Broker(#[from] BrokerError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

/// One timed resource operation in a session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptStep {
    pub resource: ResourceClass,
    pub op: ResourceOp,
    pub at_offset_s: u64,
}

impl ScriptStep {
    pub fn new(at_offset_s: u64, op: ResourceOp) -> Self {
        ScriptStep {
            resource: op.resource(),
            op,
            at_offset_s,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionScript {
    pub steps: Vec<ScriptStep>,
    pub duration_s: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedSession {
    pub app_id: String,
    pub start_tick: Tick,
}

/// A simulated day (`dayplan.json`).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayPlan {
    /// Apps installed on an earlier day. Their permissions are settled
    /// before the day's metering starts.
    pub installed_apps: Vec<AppManifest>,
    /// Installed at plan start, inside the day's metering.
    pub new_installs: Vec<AppManifest>,
    pub sessions: Vec<PlannedSession>,
    /// Rules carried over from earlier days; fill gaps in the store only.
    #[serde(default)]
    pub prior_rules: Vec<Rule>,
}

impl DayPlan {
    pub fn manifest(&self, app_id: &str) -> Option<&AppManifest> {
        self.installed_apps
            .iter()
            .chain(&self.new_installs)
            .find(|m| m.app_id == app_id)
    }

    pub fn is_new(&self, app_id: &str) -> bool {
        self.new_installs.iter().any(|m| m.app_id == app_id)
    }

    pub fn total_session_s(&self) -> u64 {
        self.sessions
            .iter()
            .filter_map(|s| self.manifest(&s.app_id))
            .map(|m| m.script.duration_s)
            .sum()
    }
}

pub fn validate_plan(plan: &DayPlan) -> Result<(), WorkloadError> {
    let mut problems = Vec::new();
    let mut ids = BTreeSet::new();
    for m in plan.installed_apps.iter().chain(&plan.new_installs) {
        if !ids.insert(m.app_id.as_str()) {
            problems.push(format!("duplicate app_id `{}`", m.app_id));
        }
        for v in validate_manifest(m) {
            problems.push(format!("app `{}`: {v}", m.app_id));
        }
    }
    for s in &plan.sessions {
        if !ids.contains(s.app_id.as_str()) {
            problems.push(format!("session references unknown app `{}`", s.app_id));
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(WorkloadError::InvalidPlan(problems))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SessionStatus {
    Completed,
    AbortedOnDenial { resource: ResourceClass },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandleCounts {
    pub real: u64,
    #[serde(rename = "virtual")]
    pub virtual_: u64,
    pub refused: u64,
}

impl HandleCounts {
    pub fn total(&self) -> u64 {
        self.real + self.virtual_ + self.refused
    }

    fn record(&mut self, handle: &AccessHandle) {
        match handle {
            AccessHandle::RealAccess { .. } => self.real += 1,
            AccessHandle::VirtualAccess { .. } => self.virtual_ += 1,
            AccessHandle::Refused { .. } => self.refused += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionOutcome {
    pub app_id: String,
    pub start_tick: Tick,
    pub status: SessionStatus,
    pub handles_used: HandleCounts,
    pub simulated_duration_s: u64,
    /// Seconds a virtual profile was live in this session.
    pub virtual_active_s: u64,
}

/// Everything measured over one simulated day (`metrics.json`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DayMetrics {
    pub metering: Metering,
    pub sessions: Vec<SessionOutcome>,
    pub vp_active_time_s: u64,
    /// Sessions of apps installed before the day, i.e. `n`.
    pub old_app_sessions: u64,
    pub new_installs: u64,
}

impl DayMetrics {
    pub fn total_session_s(&self) -> u64 {
        self.sessions.iter().map(|s| s.simulated_duration_s).sum()
    }

    /// Canonical pretty-printed encoding, newline terminated.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("metrics serialize");
        s.push('\n');
        s
    }

    /// Measured overhead using the unit costs charged during the run.
    pub fn observed_cost_s(&self) -> f64 {
        self.metering.fixed_time_s() + self.vp_active_time_s as f64
    }
}

/// Recorded side effects of a run, for auditing privacy and abort behaviour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceEvent {
    Request {
        at: Tick,
        app_id: String,
        handle: AccessHandle,
    },
    RealOp {
        at: Tick,
        app_id: String,
        session_id: SessionId,
        op: ResourceOp,
        response: ResourceResponse,
    },
    VirtualOp {
        at: Tick,
        app_id: String,
        session_id: SessionId,
        op: ResourceOp,
        response: ResourceResponse,
    },
    Skipped {
        at: Tick,
        app_id: String,
        resource: ResourceClass,
    },
    Aborted {
        at: Tick,
        app_id: String,
        resource: ResourceClass,
    },
}

/// Simulated wall clock, in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VirtualClock {
    now: Tick,
}

impl VirtualClock {
    pub fn new(now: Tick) -> Self {
        VirtualClock { now }
    }

    pub fn now(&self) -> Tick {
        self.now
    }

    pub fn advance_to(&mut self, t: Tick) {
        self.now = self.now.max(t);
    }
}

/// What happened on one step of an in-progress session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub at: Tick,
    pub resource: ResourceClass,
    pub handle: AccessHandle,
    /// Whether this step issued a broker request (first use in the session).
    pub requested: bool,
    /// Whether the op ran (real or virtual).
    pub executed: bool,
}

/// A session being executed step by step.
#[derive(Debug, Clone)]
pub struct SessionRun {
    app: AppManifest,
    start: Tick,
    next: usize,
    handles: BTreeMap<ResourceClass, AccessHandle>,
    counts: HandleCounts,
    first_virtual_offset: Option<u64>,
    aborted: Option<(ResourceClass, u64)>,
}

impl SessionRun {
    pub fn new(app: AppManifest, start: Tick) -> Self {
        SessionRun {
            app,
            start,
            next: 0,
            handles: BTreeMap::new(),
            counts: HandleCounts::default(),
            first_virtual_offset: None,
            aborted: None,
        }
    }

    pub fn app_id(&self) -> &str {
        &self.app.app_id
    }

    pub fn is_done(&self) -> bool {
        self.aborted.is_some() || self.next >= self.app.script.steps.len()
    }

    /// Executes the next script step. Returns `None` once the script is
    /// exhausted or the session aborted.
    pub fn step<P, R>(
        &mut self,
        broker: &mut Broker,
        provider: &mut P,
        real: &mut R,
        clock: &mut VirtualClock,
        mut trace: Option<&mut Vec<TraceEvent>>,
    ) -> Result<Option<StepReport>, WorkloadError>
    where
        P: DecisionProvider + ?Sized,
        R: RealProvider + ?Sized,
    {
        if self.is_done() {
            return Ok(None);
        }
        let step = self.app.script.steps[self.next].clone();
        self.next += 1;
        let at = self.start + step.at_offset_s;
        clock.advance_to(at);
        broker.advance_clock(at);
        let app_id = self.app.app_id.clone();

        let (handle, requested) = match self.handles.get(&step.resource) {
            Some(h) => (*h, false),
            None => {
                let h = broker.request_access(&app_id, step.resource, provider)?;
                self.counts.record(&h);
                if matches!(h, AccessHandle::VirtualAccess { .. }) && self.first_virtual_offset.is_none() {
                    self.first_virtual_offset = Some(step.at_offset_s);
                }
                self.handles.insert(step.resource, h);
                if let Some(t) = trace.as_deref_mut() {
                    t.push(TraceEvent::Request {
                        at,
                        app_id: app_id.clone(),
                        handle: h,
                    });
                }
                (h, true)
            }
        };

        let executed = match handle {
            AccessHandle::Refused { resource } => {
                let required = self
                    .app
                    .requirement(resource)
                    .is_some_and(|r| r.criticality == Criticality::Required);
                if required {
                    self.aborted = Some((resource, step.at_offset_s));
                }
                if let Some(t) = trace.as_deref_mut() {
                    t.push(if required {
                        TraceEvent::Aborted { at, app_id, resource }
                    } else {
                        TraceEvent::Skipped { at, app_id, resource }
                    });
                }
                false
            }
            AccessHandle::RealAccess { session_id, .. } => {
                let session = broker
                    .real_session(session_id)
                    .ok_or(BrokerError::UnknownSession(session_id))?;
                let response = real.invoke(&session, &step.op)?;
                if let Some(t) = trace.as_deref_mut() {
                    t.push(TraceEvent::RealOp {
                        at,
                        app_id,
                        session_id,
                        op: step.op.clone(),
                        response,
                    });
                }
                true
            }
            AccessHandle::VirtualAccess { session_id, .. } => {
                let response = broker.invoke_virtual(session_id, &step.op)?;
                if let Some(t) = trace {
                    t.push(TraceEvent::VirtualOp {
                        at,
                        app_id,
                        session_id,
                        op: step.op.clone(),
                        response,
                    });
                }
                true
            }
        };

        Ok(Some(StepReport {
            at,
            resource: step.resource,
            handle,
            requested,
            executed,
        }))
    }

    /// Closes the session's handles and reports the outcome.
    pub fn finish(self, broker: &mut Broker, clock: &mut VirtualClock) -> SessionOutcome {
        for handle in self.handles.values() {
            match handle {
                AccessHandle::RealAccess { session_id, .. } | AccessHandle::VirtualAccess { session_id, .. } => {
                    broker.close_session(*session_id);
                }
                AccessHandle::Refused { .. } => {}
            }
        }
        let (status, duration) = match self.aborted {
            Some((resource, offset)) => (SessionStatus::AbortedOnDenial { resource }, offset),
            None => (SessionStatus::Completed, self.app.script.duration_s),
        };
        // A virtual profile stays up from its first grant to session end.
        let virtual_active_s = self
            .first_virtual_offset
            .map_or(0, |first| duration.saturating_sub(first));
        clock.advance_to(self.start + duration);
        broker.advance_clock(self.start + duration);
        SessionOutcome {
            app_id: self.app.app_id,
            start_tick: self.start,
            status,
            handles_used: self.counts,
            simulated_duration_s: duration,
            virtual_active_s,
        }
    }
}

/// Runs one app session from open to close.
pub fn run_session<P, R>(
    app: &AppManifest,
    broker: &mut Broker,
    provider: &mut P,
    real: &mut R,
    clock: &mut VirtualClock,
    mut trace: Option<&mut Vec<TraceEvent>>,
) -> Result<SessionOutcome, WorkloadError>
where
    P: DecisionProvider + ?Sized,
    R: RealProvider + ?Sized,
{
    if !broker.is_installed(&app.app_id) {
        return Err(BrokerError::UnknownApp(app.app_id.clone()).into());
    }
    let mut run = SessionRun::new(app.clone(), clock.now());
    while run
        .step(broker, provider, real, clock, trace.as_deref_mut())?
        .is_some()
    {}
    Ok(run.finish(broker, clock))
}

/// Something that happened while advancing a day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DayEvent {
    Setup {
        imported_rules: u64,
        installed_apps: u64,
    },
    Installed {
        report: InstallReport,
    },
    SessionStarted {
        app_id: String,
        at: Tick,
    },
    SessionStep {
        app_id: String,
        step: StepReport,
    },
    SessionEnded {
        outcome: SessionOutcome,
    },
    Finished,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Setup,
    Install(usize),
    Sessions(usize),
    Done,
}

/// Step-wise executor of a [`DayPlan`].
pub struct DayRunner {
    plan: DayPlan,
    order: Vec<usize>,
    phase: Phase,
    current: Option<SessionRun>,
    outcomes: Vec<SessionOutcome>,
    clock: VirtualClock,
    trace: Option<Vec<TraceEvent>>,
}

impl DayRunner {
    pub fn new(plan: DayPlan) -> Result<Self, WorkloadError> {
        validate_plan(&plan)?;
        let mut order: Vec<usize> = (0..plan.sessions.len()).collect();
        order.sort_by_key(|&i| plan.sessions[i].start_tick);
        Ok(DayRunner {
            plan,
            order,
            phase: Phase::Setup,
            current: None,
            outcomes: Vec::new(),
            clock: VirtualClock::default(),
            trace: None,
        })
    }

    /// Keep a [`TraceEvent`] log of the run.
    pub fn traced(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn plan(&self) -> &DayPlan {
        &self.plan
    }

    pub fn now(&self) -> Tick {
        self.clock.now()
    }

    pub fn is_finished(&self) -> bool {
        self.phase == Phase::Done
    }

    pub fn outcomes(&self) -> &[SessionOutcome] {
        &self.outcomes
    }

    pub fn trace(&self) -> Option<&[TraceEvent]> {
        self.trace.as_deref()
    }

    pub fn take_trace(&mut self) -> Vec<TraceEvent> {
        self.trace.take().unwrap_or_default()
    }

    /// Advances to the next event. Returns `None` after [`DayEvent::Finished`].
    pub fn step<P, R>(&mut self, broker: &mut Broker, provider: &mut P, real: &mut R) -> Result<Option<DayEvent>, WorkloadError>
    where
        P: DecisionProvider + ?Sized,
        R: RealProvider + ?Sized,
    {
        match self.phase {
            Phase::Setup => {
                broker.advance_clock(self.clock.now());
                let mut imported = 0;
                for rule in &self.plan.prior_rules {
                    if broker.store().lookup(&rule.app_id, rule.resource).is_none() {
                        broker.import_rule(rule.clone())?;
                        imported += 1;
                    }
                }
                let mut installed = 0;
                for m in &self.plan.installed_apps {
                    if !broker.is_installed(&m.app_id) {
                        broker.install_app(m.clone(), provider)?;
                        installed += 1;
                    }
                }
                broker.begin_metering_epoch();
                self.phase = Phase::Install(0);
                Ok(Some(DayEvent::Setup {
                    imported_rules: imported,
                    installed_apps: installed,
                }))
            }
            Phase::Install(i) if i < self.plan.new_installs.len() => {
                let report = broker.install_app(self.plan.new_installs[i].clone(), provider)?;
                self.phase = Phase::Install(i + 1);
                Ok(Some(DayEvent::Installed { report }))
            }
            Phase::Install(_) => {
                self.phase = Phase::Sessions(0);
                self.step(broker, provider, real)
            }
            Phase::Sessions(k) => {
                if let Some(run) = self.current.as_mut() {
                    let app_id = run.app_id().to_owned();
                    let stepped = run.step(broker, provider, real, &mut self.clock, self.trace.as_mut())?;
                    if let Some(step) = stepped {
                        return Ok(Some(DayEvent::SessionStep { app_id, step }));
                    }
                    let run = self.current.take().expect("session in progress");
                    let outcome = run.finish(broker, &mut self.clock);
                    self.outcomes.push(outcome.clone());
                    self.phase = Phase::Sessions(k + 1);
                    return Ok(Some(DayEvent::SessionEnded { outcome }));
                }
                match self.order.get(k) {
                    Some(&idx) => {
                        let planned = &self.plan.sessions[idx];
                        let manifest = self
                            .plan
                            .manifest(&planned.app_id)
                            .expect("validated plan")
                            .clone();
                        if !broker.is_installed(&manifest.app_id) {
                            return Err(BrokerError::UnknownApp(manifest.app_id).into());
                        }
                        let at = self.clock.now().max(planned.start_tick);
                        self.clock.advance_to(at);
                        broker.advance_clock(at);
                        let app_id = manifest.app_id.clone();
                        self.current = Some(SessionRun::new(manifest, at));
                        Ok(Some(DayEvent::SessionStarted { app_id, at }))
                    }
                    None => {
                        self.phase = Phase::Done;
                        Ok(Some(DayEvent::Finished))
                    }
                }
            }
            Phase::Done => Ok(None),
        }
    }

    /// Metrics for everything run so far.
    pub fn metrics(&self, broker: &Broker) -> DayMetrics {
        let old_app_sessions = self
            .outcomes
            .iter()
            .filter(|o| !self.plan.is_new(&o.app_id))
            .count() as u64;
        DayMetrics {
            metering: *broker.metering(),
            sessions: self.outcomes.clone(),
            vp_active_time_s: self.outcomes.iter().map(|o| o.virtual_active_s).sum(),
            old_app_sessions,
            new_installs: self.plan.new_installs.len() as u64,
        }
    }
}

/// Runs a whole day on an existing broker.
pub fn run_day<P, R>(plan: &DayPlan, broker: &mut Broker, provider: &mut P, real: &mut R) -> Result<DayMetrics, WorkloadError>
where
    P: DecisionProvider + ?Sized,
    R: RealProvider + ?Sized,
{
    run_day_traced(plan, broker, provider, real).map(|(m, _)| m)
}

pub fn run_day_traced<P, R>(
    plan: &DayPlan,
    broker: &mut Broker,
    provider: &mut P,
    real: &mut R,
) -> Result<(DayMetrics, Vec<TraceEvent>), WorkloadError>
where
    P: DecisionProvider + ?Sized,
    R: RealProvider + ?Sized,
{
    let mut runner = DayRunner::new(plan.clone())?.traced();
    while runner.step(broker, provider, real)?.is_some() {}
    Ok((runner.metrics(broker), runner.take_trace()))
}

/// Result of a self-contained day simulation.
#[derive(Debug, Clone)]
pub struct DayOutput {
    pub metrics: DayMetrics,
    pub store: RuleStore,
    pub trace: Vec<TraceEvent>,
}

/// Builds a fresh broker (profiles from `seed`, the given starting store and
/// fixture) and runs `plan` with the scripted decisions.
pub fn simulate_day(
    plan: &DayPlan,
    decisions: &DecisionScript,
    seed: u64,
    unit_costs: UnitCosts,
    store: RuleStore,
    fixture: &RealFixture,
) -> Result<DayOutput, WorkloadError> {
    let registry = build_profiles(seed).with_exclusions(vec![fixture.location]);
    let mut broker = Broker::new(store, registry, unit_costs);
    let mut provider = decisions.provider();
    let mut real = fixture.clone();
    let (metrics, trace) = run_day_traced(plan, &mut broker, &mut provider, &mut real)?;
    Ok(DayOutput {
        metrics,
        store: broker.into_store(),
        trace,
    })
}

/// ui·UI + pg·PG + dba·DBA + live virtual-profile seconds.
pub fn measure_components(metrics: &DayMetrics, unit_costs: &CostParams<f64>) -> f64 {
    let m = &metrics.metering;
    m.ui_prompts as f64 * unit_costs.ui
        + m.pg_invocations as f64 * unit_costs.pg
        + m.dba_lookups as f64 * unit_costs.dba
        + metrics.vp_active_time_s as f64
}

/// Shape of a generated day. Defaults are the published usage figures:
/// nine apps a day out of thirty a month, one new install, twenty-minute
/// sessions adding up to three hours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanConfig {
    pub daily_apps: usize,
    pub monthly_apps: usize,
    pub new_installs: usize,
    pub session_duration_s: u64,
    pub day_length_s: u64,
    pub max_requirements: usize,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            daily_apps: 9,
            monthly_apps: 30,
            new_installs: 1,
            session_duration_s: 1200,
            day_length_s: 86_400,
            max_requirements: 3,
        }
    }
}

pub fn generate_default_plan(seed: u64) -> DayPlan {
    generate_plan(&PlanConfig::default(), seed)
}

/// Generates a plan with one session per daily app, evenly spaced over the
/// day. Exactly `daily_apps / 2` (rounded down) of the day's apps declare a
/// Required permission; the rest only declare Optional ones.
pub fn generate_plan(config: &PlanConfig, seed: u64) -> DayPlan {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let new_count = config.new_installs.min(config.daily_apps);
    let old_total = config.monthly_apps.saturating_sub(new_count).max(config.daily_apps - new_count);
    let old_today = config.daily_apps - new_count;

    let mut today: Vec<(String, bool)> = index::sample(&mut rng, old_total, old_today)
        .into_iter()
        .map(|i| (format!("app-{i:02}"), false))
        .chain((0..new_count).map(|i| (format!("new-{i:02}"), true)))
        .collect();
    today.sort();
    today.shuffle(&mut rng);

    let mut destined = vec![false; today.len()];
    for i in index::sample(&mut rng, today.len(), today.len() / 2) {
        destined[i] = true;
    }
    let today_idx: BTreeMap<String, usize> = today.iter().enumerate().map(|(i, (id, _))| (id.clone(), i)).collect();

    let mut make = |app_id: String, needs_required: Option<bool>| -> AppManifest {
        random_manifest(&mut rng, config, app_id, needs_required)
    };

    let installed_apps = (0..old_total)
        .map(|i| {
            let id = format!("app-{i:02}");
            let needs = today_idx.get(&id).map(|&k| destined[k]);
            make(id, needs)
        })
        .collect();
    let new_installs = (0..new_count)
        .map(|i| {
            let id = format!("new-{i:02}");
            let needs = today_idx.get(&id).map(|&k| destined[k]);
            make(id, needs)
        })
        .collect();

    let spacing = config.day_length_s / config.daily_apps.max(1) as u64;
    let sessions = today
        .iter()
        .enumerate()
        .map(|(i, (id, _))| PlannedSession {
            app_id: id.clone(),
            start_tick: i as u64 * spacing,
        })
        .collect();

    DayPlan {
        installed_apps,
        new_installs,
        sessions,
        prior_rules: Vec::new(),
    }
}

const STORAGE_PATHS: [&str; 3] = ["/sdcard/notes.txt", "/sdcard/DCIM/last.jpg", "/sdcard/Download/report.pdf"];

fn random_op(rng: &mut ChaCha8Rng, resource: ResourceClass) -> ResourceOp {
    match resource {
        ResourceClass::Camera => ResourceOp::CameraCapture {
            width: rng.random_range(2..=16),
            height: rng.random_range(2..=16),
        },
        ResourceClass::Microphone => ResourceOp::MicrophoneRead {
            duration_ms: rng.random_range(0..=250),
        },
        ResourceClass::Contacts => {
            let prefix = if rng.random_bool(0.5) {
                String::new()
            } else {
                char::from(b'A' + rng.random_range(0..26u8)).to_string()
            };
            ResourceOp::ContactsQuery { prefix }
        }
        ResourceClass::Messages => ResourceOp::MessagesQuery {
            since_tick: rng.random_range(0..86_400),
        },
        ResourceClass::CallLog => ResourceOp::CallLogQuery {
            since_tick: rng.random_range(0..86_400),
        },
        ResourceClass::Location => ResourceOp::LocationRead,
        ResourceClass::WifiState => ResourceOp::WifiScan,
        ResourceClass::Storage => ResourceOp::StorageRead {
            path: STORAGE_PATHS[rng.random_range(0..STORAGE_PATHS.len())].into(),
        },
    }
}

/// `needs_required`: `Some(true)` forces at least one Required permission,
/// `Some(false)` forbids any, `None` leaves it to chance.
fn random_manifest(rng: &mut ChaCha8Rng, config: &PlanConfig, app_id: String, needs_required: Option<bool>) -> AppManifest {
    let count = rng.random_range(1..=config.max_requirements.clamp(1, ResourceClass::ALL.len()));
    let mut requirements: Vec<PermissionRequirement> = index::sample(rng, ResourceClass::ALL.len(), count)
        .into_iter()
        .map(|i| PermissionRequirement {
            resource: ResourceClass::ALL[i],
            criticality: match needs_required {
                Some(false) => Criticality::Optional,
                _ if rng.random_bool(0.5) => Criticality::Required,
                _ => Criticality::Optional,
            },
        })
        .collect();
    if needs_required == Some(true) && requirements.iter().all(|r| r.criticality == Criticality::Optional) {
        let k = rng.random_range(0..requirements.len());
        requirements[k].criticality = Criticality::Required;
    }

    let duration_s = config.session_duration_s;
    let mut steps = Vec::new();
    for req in &requirements {
        for _ in 0..rng.random_range(1..=2) {
            steps.push(ScriptStep::new(rng.random_range(0..=duration_s), random_op(rng, req.resource)));
        }
    }
    // The app touches something as soon as it opens.
    steps[0].at_offset_s = 0;
    steps.sort_by_key(|s| s.at_offset_s);

    AppManifest {
        display_name: format!("App {}", app_id.to_uppercase()),
        app_id,
        requirements,
        script: SessionScript { steps, duration_s },
    }
}

/// Decisions of a user who fakes what an app cannot live without and
/// refuses everything else.
pub fn privacy_first_script(plan: &DayPlan) -> DecisionScript {
    let decisions = plan
        .installed_apps
        .iter()
        .chain(&plan.new_installs)
        .flat_map(|m| {
            m.requirements.iter().map(move |r| ScriptedDecision {
                app_id: m.app_id.clone(),
                resource: r.resource,
                status: match r.criticality {
                    Criticality::Required => PermissionStatus::VirtualGrant,
                    Criticality::Optional => PermissionStatus::Deny,
                },
            })
        })
        .collect();
    DecisionScript::Scripted {
        default: PermissionStatus::Deny,
        decisions,
    }
}
