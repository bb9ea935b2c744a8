//! HTTP + server-sent-event bridge.
//!
//! One std thread owns the broker and the day runner and applies commands
//! in arrival order. Reads are served from a snapshot it refreshes after
//! every command, so they never wait behind a step blocked on a prompt.
//! Prompt answers go straight to the [`PromptHub`].

use std::convert::Infallible;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{mpsc, Arc, RwLock};
use std::thread;
use std::time::Duration;

use anyhow::Context;
use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use futures::{Stream, StreamExt};
use pmmg_core::broker::{DecisionProvider, PromptContext, UserDecision};
use pmmg_core::cost_model::{pmmg_daily_closed, CostParams};
use pmmg_core::workload::{DayEvent, DayRunner};
use pmmg_core::{
    build_profiles, Broker, BrokerError, DayPlan, DecisionScript, Metering, PermissionStatus, RealFixture,
    ResourceClass, Rule, RuleStore, SessionOutcome, Tick, UnitCosts,
};
use serde::{Deserialize, Serialize};
use tokio::sync::{broadcast, oneshot, watch};

use crate::config::Config;
use crate::prompt::{AnswerError, HubEvent, InteractiveProvider, PendingPrompt, PromptHub};

pub struct ServeOptions {
    pub config: Config,
    pub plan: DayPlan,
    /// Answers prompts raised while installing the plan's previously
    /// installed apps, before the day starts.
    pub warmup: DecisionScript,
    /// Step automatically at this wall-clock interval.
    pub auto: Option<Duration>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResponse {
    pub event: Option<DayEvent>,
    pub tick: Tick,
    pub finished: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationState {
    pub tick: Tick,
    pub finished: bool,
    pub steps: u64,
    pub metering: Metering,
    pub sessions: Vec<SessionOutcome>,
    pub vp_active_time_s: u64,
    pub observed_cost_s: f64,
    /// Closed-form daily cost for the plan with the service's unit costs.
    pub analytic_daily_s: f64,
    pub last_event: Option<DayEvent>,
    pub pending_prompt: Option<PendingPrompt>,
}

enum Command {
    Step(oneshot::Sender<Result<StepResponse, String>>),
    EditRule {
        app_id: String,
        resource: ResourceClass,
        status: PermissionStatus,
        reply: oneshot::Sender<Result<Rule, BrokerError>>,
    },
    Shutdown,
}

struct Snapshot {
    rules: Vec<Rule>,
    state: SimulationState,
}

#[derive(Clone)]
struct AppState {
    commands: mpsc::Sender<Command>,
    hub: Arc<PromptHub>,
    snapshot: Arc<RwLock<Snapshot>>,
    shutdown: watch::Receiver<bool>,
}

struct ServeProvider {
    interactive: InteractiveProvider,
    warmup: Box<dyn DecisionProvider + Send>,
    in_setup: bool,
}

impl DecisionProvider for ServeProvider {
    fn prompt(&mut self, ctx: &PromptContext) -> UserDecision {
        if self.in_setup {
            self.warmup.prompt(ctx)
        } else {
            self.interactive.prompt(ctx)
        }
    }
}

struct Simulation {
    broker: Broker,
    runner: DayRunner,
    provider: ServeProvider,
    real: RealFixture,
    rules_path: PathBuf,
    analytic_daily_s: f64,
    steps: u64,
    last_event: Option<DayEvent>,
}

impl Simulation {
    fn step(&mut self) -> Result<StepResponse, String> {
        let event = self
            .runner
            .step(&mut self.broker, &mut self.provider, &mut self.real)
            .map_err(|e| e.to_string())?;
        self.provider.in_setup = false;
        if event.is_some() {
            self.steps += 1;
            self.last_event = event.clone();
            self.persist();
        }
        Ok(StepResponse {
            event,
            tick: self.runner.now(),
            finished: self.runner.is_finished(),
        })
    }

    fn edit(&mut self, app_id: &str, resource: ResourceClass, status: PermissionStatus) -> Result<Rule, BrokerError> {
        let at = self.broker.now().max(self.broker.store().last_tick());
        let rule = self.broker.edit_rule(app_id, resource, status, at)?;
        self.persist();
        Ok(rule)
    }

    fn persist(&self) {
        if let Err(e) = self.broker.store().save(&self.rules_path) {
            eprintln!("warning: {e}");
        }
    }

    fn snapshot(&self) -> Snapshot {
        let metrics = self.runner.metrics(&self.broker);
        Snapshot {
            rules: self.broker.store().list_rules(None),
            state: SimulationState {
                tick: self.runner.now(),
                finished: self.runner.is_finished(),
                steps: self.steps,
                metering: metrics.metering,
                vp_active_time_s: metrics.vp_active_time_s,
                observed_cost_s: metrics.observed_cost_s(),
                sessions: metrics.sessions,
                analytic_daily_s: self.analytic_daily_s,
                last_event: self.last_event.clone(),
                pending_prompt: None,
            },
        }
    }
}

fn build_simulation(opts: &ServeOptions, hub: Arc<PromptHub>) -> anyhow::Result<Simulation> {
    let config = &opts.config;
    let store = if config.rules_path.exists() {
        RuleStore::load(&config.rules_path)?
    } else {
        RuleStore::new()
    };
    let real = if config.fixture_path.exists() {
        RealFixture::load(&config.fixture_path)?
    } else {
        RealFixture::default_fixture()
    };
    let registry = build_profiles(config.seed).with_exclusions(vec![real.location]);
    let unit_costs = UnitCosts::default();
    let broker = Broker::new(store, registry, unit_costs);
    let runner = DayRunner::new(opts.plan.clone())?;

    let plan = &opts.plan;
    let old_sessions = plan.sessions.iter().filter(|s| !plan.is_new(&s.app_id)).count() as u64;
    let app_time = if plan.sessions.is_empty() {
        0.0
    } else {
        plan.total_session_s() as f64 / plan.sessions.len() as f64
    };
    let analytic_daily_s = pmmg_daily_closed(&CostParams {
        ui: unit_costs.ui,
        pg: unit_costs.pg,
        dba: unit_costs.dba,
        app_time,
        n: old_sessions,
    });

    Ok(Simulation {
        broker,
        runner,
        provider: ServeProvider {
            interactive: InteractiveProvider::new(
                hub,
                Duration::from_secs_f64(config.prompt_timeout_s),
                config.default_decision,
            ),
            warmup: opts.warmup.provider(),
            in_setup: true,
        },
        real,
        rules_path: config.rules_path.clone(),
        analytic_daily_s,
        steps: 0,
        last_event: None,
    })
}

fn command_loop(
    mut sim: Simulation,
    commands: mpsc::Receiver<Command>,
    hub: Arc<PromptHub>,
    snapshot: Arc<RwLock<Snapshot>>,
    auto: Option<Duration>,
) {
    loop {
        let command = match auto {
            Some(pace) => match commands.recv_timeout(pace) {
                Ok(c) => Some(c),
                Err(mpsc::RecvTimeoutError::Timeout) => None,
                Err(mpsc::RecvTimeoutError::Disconnected) => break,
            },
            None => match commands.recv() {
                Ok(c) => Some(c),
                Err(_) => break,
            },
        };
        let refresh = |sim: &Simulation| *snapshot.write().unwrap_or_else(|e| e.into_inner()) = sim.snapshot();
        match command {
            None if sim.runner.is_finished() => continue,
            None => {
                let r = sim.step();
                refresh(&sim);
                publish_step(&hub, &r);
            }
            Some(Command::Step(reply)) => {
                let r = sim.step();
                refresh(&sim);
                publish_step(&hub, &r);
                let _ = reply.send(r);
            }
            Some(Command::EditRule {
                app_id,
                resource,
                status,
                reply,
            }) => {
                let r = sim.edit(&app_id, resource, status);
                refresh(&sim);
                let _ = reply.send(r);
            }
            Some(Command::Shutdown) => break,
        }
    }
}

fn publish_step(hub: &PromptHub, r: &Result<StepResponse, String>) {
    if let Ok(step) = r {
        if step.event.is_some() {
            hub.publish(HubEvent::Step(serde_json::to_value(step).expect("step serializes")));
        }
    }
}

/// A running service.
pub struct Service {
    pub addr: SocketAddr,
    commands: mpsc::Sender<Command>,
    shutdown: watch::Sender<bool>,
    server: tokio::task::JoinHandle<std::io::Result<()>>,
}

impl Service {
    /// Stops accepting requests, closes event streams and ends the command
    /// loop once it is idle.
    pub async fn shutdown(self) -> anyhow::Result<()> {
        let _ = self.shutdown.send(true);
        let _ = self.commands.send(Command::Shutdown);
        self.server.await??;
        Ok(())
    }
}

pub async fn start(opts: ServeOptions) -> anyhow::Result<Service> {
    let hub = PromptHub::new();
    let sim = build_simulation(&opts, hub.clone())?;
    let snapshot = Arc::new(RwLock::new(sim.snapshot()));
    let (tx, rx) = mpsc::channel();
    {
        let (hub, snapshot, auto) = (hub.clone(), snapshot.clone(), opts.auto);
        thread::Builder::new()
            .name("pmmg-sim".into())
            .spawn(move || command_loop(sim, rx, hub, snapshot, auto))?;
    }

    let listener = tokio::net::TcpListener::bind(&opts.config.listen_address)
        .await
        .with_context(|| format!("cannot listen on {}", opts.config.listen_address))?;
    let addr = listener.local_addr()?;
    let (shutdown_tx, shutdown_rx) = watch::channel(false);
    let state = AppState {
        commands: tx.clone(),
        hub,
        snapshot,
        shutdown: shutdown_rx.clone(),
    };
    let mut stop = shutdown_rx;
    let server = tokio::spawn(async move {
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async move {
                let _ = stop.wait_for(|v| *v).await;
            })
            .await
    });
    Ok(Service {
        addr,
        commands: tx,
        shutdown: shutdown_tx,
        server,
    })
}

/// Serves until interrupted.
pub fn run(opts: ServeOptions) -> anyhow::Result<()> {
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let service = start(opts).await?;
        eprintln!("listening on http://{}", service.addr);
        tokio::signal::ctrl_c().await?;
        service.shutdown().await
    })
}

fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/rules", get(list_rules))
        .route("/api/rules/{app}/{resource}", put(put_rule))
        .route("/api/prompts/stream", get(prompt_stream))
        .route("/api/prompts/{id}/answer", post(answer_prompt))
        .route("/api/simulation/state", get(simulation_state))
        .route("/api/simulation/step", post(simulation_step))
        .with_state(state)
}

fn error(code: StatusCode, message: impl ToString) -> Response {
    (code, Json(serde_json::json!({ "error": message.to_string() }))).into_response()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StatusBody {
    status: PermissionStatus,
}

fn parse_status(body: &Bytes) -> Result<PermissionStatus, serde_json::Error> {
    serde_json::from_slice::<StatusBody>(body).map(|b| b.status)
}

#[derive(Deserialize)]
struct RulesQuery {
    app: Option<String>,
}

async fn list_rules(State(s): State<AppState>, Query(q): Query<RulesQuery>) -> Json<Vec<Rule>> {
    let snap = s.snapshot.read().unwrap_or_else(|e| e.into_inner());
    Json(
        snap.rules
            .iter()
            .filter(|r| q.app.as_deref().is_none_or(|a| r.app_id == a))
            .cloned()
            .collect(),
    )
}

async fn put_rule(State(s): State<AppState>, Path((app_id, resource)): Path<(String, String)>, body: Bytes) -> Response {
    let status = match parse_status(&body) {
        Ok(status) => status,
        Err(e) => return error(StatusCode::BAD_REQUEST, e),
    };
    let Ok(resource) = resource.parse::<ResourceClass>() else {
        return error(StatusCode::NOT_FOUND, format!("unknown resource {resource}"));
    };
    let (reply, rx) = oneshot::channel();
    if s.commands
        .send(Command::EditRule {
            app_id,
            resource,
            status,
            reply,
        })
        .is_err()
    {
        return error(StatusCode::SERVICE_UNAVAILABLE, "simulation stopped");
    }
    match rx.await {
        Ok(Ok(rule)) => Json(rule).into_response(),
        Ok(Err(e @ BrokerError::NoRule { .. })) => error(StatusCode::NOT_FOUND, e),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
        Err(_) => error(StatusCode::SERVICE_UNAVAILABLE, "simulation stopped"),
    }
}

async fn answer_prompt(State(s): State<AppState>, Path(id): Path<String>, body: Bytes) -> Response {
    let status = match parse_status(&body) {
        Ok(status) => status,
        Err(e) => return error(StatusCode::BAD_REQUEST, e),
    };
    match s.hub.answer(&id, status) {
        Ok(()) => Json(serde_json::json!({ "prompt_id": id, "status": status })).into_response(),
        Err(e @ AnswerError::NotFound(_)) => error(StatusCode::NOT_FOUND, e),
        Err(e @ AnswerError::Closed(..)) => error(StatusCode::CONFLICT, e),
    }
}

async fn simulation_state(State(s): State<AppState>) -> Json<SimulationState> {
    let mut state = s.snapshot.read().unwrap_or_else(|e| e.into_inner()).state.clone();
    state.pending_prompt = s.hub.pending();
    Json(state)
}

async fn simulation_step(State(s): State<AppState>) -> Response {
    let (reply, rx) = oneshot::channel();
    if s.commands.send(Command::Step(reply)).is_err() {
        return error(StatusCode::SERVICE_UNAVAILABLE, "simulation stopped");
    }
    match rx.await {
        Ok(Ok(step)) => Json(step).into_response(),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
        Err(_) => error(StatusCode::SERVICE_UNAVAILABLE, "simulation stopped"),
    }
}

fn sse_event(event: HubEvent) -> Result<Event, Infallible> {
    Ok(Event::default()
        .event(event.name())
        .json_data(&event)
        .expect("hub events serialize"))
}

async fn prompt_stream(State(s): State<AppState>) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let (pending, events) = s.hub.subscribe();
    let initial = futures::stream::iter(pending.map(HubEvent::Prompt)).map(sse_event);
    let live = futures::stream::unfold((events, s.shutdown), |(mut events, mut stop)| async move {
        loop {
            let received = tokio::select! {
                r = events.recv() => r,
                _ = stop.wait_for(|v| *v) => return None,
            };
            match received {
                Ok(ev) => return Some((sse_event(ev), (events, stop))),
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    Sse::new(initial.chain(live)).keep_alive(KeepAlive::default())
}
