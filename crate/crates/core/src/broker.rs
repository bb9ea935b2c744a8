//! The mediation front end and permit granter.
//!
//! Apps talk only to [`Broker`]. On install every declared permission is
//! resolved (stored rule, or a prompt to the [`DecisionProvider`]). At
//! runtime each request consults the rule store; a miss prompts once and the
//! answer is stored. The stored status maps one-to-one onto the handle:
//! `Grant` → real access, `Deny` → refused, `VirtualGrant` → a fresh virtual
//! session.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::permission::{
    validate_manifest, AccessHandle, AppManifest, Criticality, ManifestViolation, PermissionStatus, ResourceClass,
    Rule, RuleOrigin, SessionId, Tick,
};
use crate::rule_store::{RuleStore, RuleStoreError};
use crate::virtual_profiles::{ProfileError, ProfileRegistry, RealSession, ResourceOp, ResourceResponse, VirtualSession};

#[derive(Debug, thiserror::Error)]
pub enum BrokerError {
    #[error("app `{0}` is already installed")]
    DuplicateApp(String),
    #[error("app `{0}` is not installed")]
    UnknownApp(String),
    #[error("invalid manifest: {}", format_violations(.0))]
    InvalidManifest(Vec<ManifestViolation>),
    #[error("app `{app_id}` did not declare {resource}")]
    UndeclaredResource { app_id: String, resource: ResourceClass },
    #[error("no rule for ({app_id}, {resource})")]
    NoRule { app_id: String, resource: ResourceClass },
    #[error("unknown session {0}")]
    UnknownSession(SessionId),
    #[error(transparent)]
    Store(#[from] RuleStoreError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

fn format_violations(v: &[ManifestViolation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptOccasion {
    Install,
    FirstUse,
}

/// What the user is shown when asked about a permission.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptContext {
    pub app_id: String,
    pub display_name: String,
    pub resource: ResourceClass,
    pub criticality: Criticality,
    pub occasion: PromptOccasion,
    /// Simulation tick the prompt was raised at.
    pub at: Tick,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserDecision {
    pub status: PermissionStatus,
}

impl From<PermissionStatus> for UserDecision {
    fn from(status: PermissionStatus) -> Self {
        UserDecision { status }
    }
}

/// Stand-in for the human answering permission prompts.
///
/// Implementations must always return; interactive ones enforce a timeout
/// and fall back to a default decision.
pub trait DecisionProvider {
    fn prompt(&mut self, ctx: &PromptContext) -> UserDecision;
}

impl<P: DecisionProvider + ?Sized> DecisionProvider for &mut P {
    fn prompt(&mut self, ctx: &PromptContext) -> UserDecision {
        (**self).prompt(ctx)
    }
}

impl<P: DecisionProvider + ?Sized> DecisionProvider for Box<P> {
    fn prompt(&mut self, ctx: &PromptContext) -> UserDecision {
        (**self).prompt(ctx)
    }
}

/// Answers from a fixed (app, resource) table with a default.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptedProvider {
    default: PermissionStatus,
    table: BTreeMap<(String, ResourceClass), PermissionStatus>,
}

impl ScriptedProvider {
    pub fn new(default: PermissionStatus) -> Self {
        ScriptedProvider {
            default,
            table: BTreeMap::new(),
        }
    }

    pub fn with(mut self, app_id: impl Into<String>, resource: ResourceClass, status: PermissionStatus) -> Self {
        self.set(app_id, resource, status);
        self
    }

    pub fn set(&mut self, app_id: impl Into<String>, resource: ResourceClass, status: PermissionStatus) {
        self.table.insert((app_id.into(), resource), status);
    }

    pub fn decision_for(&self, app_id: &str, resource: ResourceClass) -> PermissionStatus {
        self.table
            .get(&(app_id.to_owned(), resource))
            .copied()
            .unwrap_or(self.default)
    }
}

impl DecisionProvider for ScriptedProvider {
    fn prompt(&mut self, ctx: &PromptContext) -> UserDecision {
        self.decision_for(&ctx.app_id, ctx.resource).into()
    }
}

/// Plays back a recorded list of answers in prompt order, then the default.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayProvider {
    queue: VecDeque<PermissionStatus>,
    default: PermissionStatus,
}

impl ReplayProvider {
    pub fn new(decisions: impl IntoIterator<Item = PermissionStatus>, default: PermissionStatus) -> Self {
        ReplayProvider {
            queue: decisions.into_iter().collect(),
            default,
        }
    }

    pub fn remaining(&self) -> usize {
        self.queue.len()
    }
}

impl DecisionProvider for ReplayProvider {
    fn prompt(&mut self, _ctx: &PromptContext) -> UserDecision {
        self.queue.pop_front().unwrap_or(self.default).into()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedDecision {
    pub app_id: String,
    pub resource: ResourceClass,
    pub status: PermissionStatus,
}

fn fail_closed() -> PermissionStatus {
    PermissionStatus::Deny
}

/// On-disk form of a non-interactive decision provider (`decisions.json`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DecisionScript {
    Scripted {
        default: PermissionStatus,
        #[serde(default)]
        decisions: Vec<ScriptedDecision>,
    },
    Replay {
        decisions: Vec<PermissionStatus>,
        #[serde(default = "fail_closed")]
        default: PermissionStatus,
    },
}

impl DecisionScript {
    pub fn uniform(status: PermissionStatus) -> Self {
        DecisionScript::Scripted {
            default: status,
            decisions: Vec::new(),
        }
    }

    pub fn provider(&self) -> Box<dyn DecisionProvider + Send> {
        match self {
            DecisionScript::Scripted { default, decisions } => {
                let mut p = ScriptedProvider::new(*default);
                for d in decisions {
                    p.set(d.app_id.clone(), d.resource, d.status);
                }
                Box::new(p)
            }
            DecisionScript::Replay { decisions, default } => Box::new(ReplayProvider::new(decisions.clone(), *default)),
        }
    }
}

/// Simulated seconds charged per component invocation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitCosts {
    pub ui: f64,
    pub pg: f64,
    pub dba: f64,
}

impl Default for UnitCosts {
    /// Placeholder device costs (2 s per prompt, 10 ms granter, 50 ms lookup).
    fn default() -> Self {
        UnitCosts {
            ui: 2.0,
            pg: 0.01,
            dba: 0.05,
        }
    }
}

/// Per-component invocation counters and the simulated time they cost.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metering {
    pub ui_prompts: u64,
    pub pg_invocations: u64,
    pub dba_lookups: u64,
    pub vp_sessions: u64,
    pub ui_time_s: f64,
    pub pg_time_s: f64,
    pub dba_time_s: f64,
}

impl Metering {
    /// Total simulated time of the fixed-cost components.
    pub fn fixed_time_s(&self) -> f64 {
        self.ui_time_s + self.pg_time_s + self.dba_time_s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstallReport {
    pub app_id: String,
    pub decisions: Vec<(ResourceClass, PermissionStatus)>,
    pub prompts_issued: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum SessionKind {
    Real,
    Virtual(VirtualSession),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct LiveSession {
    app_id: String,
    resource: ResourceClass,
    kind: SessionKind,
}

pub struct Broker {
    store: RuleStore,
    registry: ProfileRegistry,
    unit_costs: UnitCosts,
    apps: BTreeMap<String, AppManifest>,
    metering: Metering,
    prompted: BTreeSet<(String, ResourceClass)>,
    sessions: BTreeMap<SessionId, LiveSession>,
    clock: Tick,
}

impl Broker {
    pub fn new(store: RuleStore, registry: ProfileRegistry, unit_costs: UnitCosts) -> Self {
        Broker {
            store,
            registry,
            unit_costs,
            apps: BTreeMap::new(),
            metering: Metering::default(),
            prompted: BTreeSet::new(),
            sessions: BTreeMap::new(),
            clock: 0,
        }
    }

    pub fn store(&self) -> &RuleStore {
        &self.store
    }

    pub fn into_store(self) -> RuleStore {
        self.store
    }

    pub fn registry(&self) -> &ProfileRegistry {
        &self.registry
    }

    pub fn metering(&self) -> &Metering {
        &self.metering
    }

    pub fn unit_costs(&self) -> UnitCosts {
        self.unit_costs
    }

    /// Distinct (app, resource) pairs prompted since the last epoch start.
    pub fn prompted_pairs(&self) -> &BTreeSet<(String, ResourceClass)> {
        &self.prompted
    }

    /// Zeroes metering, e.g. after bringing previously installed apps up.
    pub fn begin_metering_epoch(&mut self) {
        self.metering = Metering::default();
        self.prompted.clear();
    }

    pub fn now(&self) -> Tick {
        self.clock
    }

    /// Moves the clock forward; never backward.
    pub fn advance_clock(&mut self, to: Tick) {
        self.clock = self.clock.max(to);
    }

    pub fn is_installed(&self, app_id: &str) -> bool {
        self.apps.contains_key(app_id)
    }

    pub fn manifest(&self, app_id: &str) -> Option<&AppManifest> {
        self.apps.get(app_id)
    }

    pub fn installed_apps(&self) -> impl Iterator<Item = &AppManifest> {
        self.apps.values()
    }

    /// Stores a rule that did not come from a prompt (e.g. a prior rule base).
    pub fn import_rule(&mut self, mut rule: Rule) -> Result<Option<Rule>, BrokerError> {
        rule.origin = RuleOrigin::Import;
        Ok(self.store.upsert(rule)?)
    }

    fn charge_granter(&mut self) {
        let m = &mut self.metering;
        m.pg_invocations += 1;
        m.pg_time_s = m.pg_invocations as f64 * self.unit_costs.pg;
        m.dba_lookups += 1;
        m.dba_time_s = m.dba_lookups as f64 * self.unit_costs.dba;
    }

    fn ask<P: DecisionProvider + ?Sized>(
        &mut self,
        provider: &mut P,
        manifest_app: (&str, &str),
        resource: ResourceClass,
        criticality: Criticality,
        occasion: PromptOccasion,
    ) -> Result<PermissionStatus, BrokerError> {
        let (app_id, display_name) = manifest_app;
        let ctx = PromptContext {
            app_id: app_id.to_owned(),
            display_name: display_name.to_owned(),
            resource,
            criticality,
            occasion,
            at: self.clock,
        };
        let decision = provider.prompt(&ctx);
        self.metering.ui_prompts += 1;
        self.metering.ui_time_s = self.metering.ui_prompts as f64 * self.unit_costs.ui;
        self.prompted.insert((app_id.to_owned(), resource));
        // Deny on a Required permission is stored as-is; the app aborts later.
        let rule = Rule::new(app_id, resource, decision.status, self.clock, RuleOrigin::UserPrompt);
        self.store.upsert(rule)?;
        Ok(decision.status)
    }

    /// Registers an app, resolving each declared permission from the store
    /// or by prompting.
    pub fn install_app<P: DecisionProvider + ?Sized>(
        &mut self,
        manifest: AppManifest,
        provider: &mut P,
    ) -> Result<InstallReport, BrokerError> {
        let violations = validate_manifest(&manifest);
        if !violations.is_empty() {
            return Err(BrokerError::InvalidManifest(violations));
        }
        if self.apps.contains_key(&manifest.app_id) {
            return Err(BrokerError::DuplicateApp(manifest.app_id));
        }

        let mut decisions = Vec::with_capacity(manifest.requirements.len());
        let mut prompts_issued = 0;
        for req in &manifest.requirements {
            self.charge_granter();
            let status = match self.store.lookup(&manifest.app_id, req.resource) {
                Some(rule) => rule.status,
                None => {
                    prompts_issued += 1;
                    self.ask(
                        provider,
                        (&manifest.app_id, &manifest.display_name),
                        req.resource,
                        req.criticality,
                        PromptOccasion::Install,
                    )?
                }
            };
            decisions.push((req.resource, status));
        }

        let report = InstallReport {
            app_id: manifest.app_id.clone(),
            decisions,
            prompts_issued,
        };
        self.apps.insert(manifest.app_id.clone(), manifest);
        Ok(report)
    }

    /// Resolves one runtime request into an access handle.
    pub fn request_access<P: DecisionProvider + ?Sized>(
        &mut self,
        app_id: &str,
        resource: ResourceClass,
        provider: &mut P,
    ) -> Result<AccessHandle, BrokerError> {
        let manifest = self
            .apps
            .get(app_id)
            .ok_or_else(|| BrokerError::UnknownApp(app_id.to_owned()))?;
        let req = *manifest
            .requirement(resource)
            .ok_or_else(|| BrokerError::UndeclaredResource {
                app_id: app_id.to_owned(),
                resource,
            })?;
        let display_name = manifest.display_name.clone();

        self.charge_granter();
        let status = match self.store.lookup(app_id, resource) {
            Some(rule) => rule.status,
            None => self.ask(
                provider,
                (app_id, &display_name),
                resource,
                req.criticality,
                PromptOccasion::FirstUse,
            )?,
        };

        Ok(match status {
            PermissionStatus::Grant => {
                let session_id = self.registry.allocate_session_id();
                self.sessions.insert(
                    session_id,
                    LiveSession {
                        app_id: app_id.to_owned(),
                        resource,
                        kind: SessionKind::Real,
                    },
                );
                AccessHandle::RealAccess { resource, session_id }
            }
            PermissionStatus::Deny => AccessHandle::Refused { resource },
            PermissionStatus::VirtualGrant => {
                let session = self.registry.open_session(resource);
                let session_id = session.session_id;
                self.metering.vp_sessions += 1;
                self.sessions.insert(
                    session_id,
                    LiveSession {
                        app_id: app_id.to_owned(),
                        resource,
                        kind: SessionKind::Virtual(session),
                    },
                );
                AccessHandle::VirtualAccess { resource, session_id }
            }
        })
    }

    /// Replaces an existing rule with a user edit.
    pub fn edit_rule(
        &mut self,
        app_id: &str,
        resource: ResourceClass,
        new_status: PermissionStatus,
        at: Tick,
    ) -> Result<Rule, BrokerError> {
        if self.store.lookup(app_id, resource).is_none() {
            return Err(BrokerError::NoRule {
                app_id: app_id.to_owned(),
                resource,
            });
        }
        let rule = Rule::new(app_id, resource, new_status, at, RuleOrigin::UserEdit);
        self.store.upsert(rule.clone())?;
        Ok(rule)
    }

    /// Removes an app and closes its sessions. Rules survive unless purged.
    pub fn uninstall_app(&mut self, app_id: &str, purge_rules: bool) -> Result<(), BrokerError> {
        if self.apps.remove(app_id).is_none() {
            return Err(BrokerError::UnknownApp(app_id.to_owned()));
        }
        self.sessions.retain(|_, s| s.app_id != app_id);
        if purge_rules {
            for rule in self.store.list_rules(Some(app_id)) {
                self.store.delete(app_id, rule.resource, self.clock);
            }
        }
        Ok(())
    }

    /// Runs `op` on the virtual session behind a `VirtualAccess` handle.
    pub fn invoke_virtual(&mut self, session_id: SessionId, op: &ResourceOp) -> Result<ResourceResponse, BrokerError> {
        let live = self
            .sessions
            .get_mut(&session_id)
            .ok_or(BrokerError::UnknownSession(session_id))?;
        match &mut live.kind {
            SessionKind::Virtual(session) => Ok(self.registry.invoke(session, op)?),
            SessionKind::Real => Err(BrokerError::UnknownSession(session_id)),
        }
    }

    pub fn virtual_session(&self, session_id: SessionId) -> Option<&VirtualSession> {
        match &self.sessions.get(&session_id)?.kind {
            SessionKind::Virtual(s) => Some(s),
            SessionKind::Real => None,
        }
    }

    pub fn real_session(&self, session_id: SessionId) -> Option<RealSession> {
        let live = self.sessions.get(&session_id)?;
        match live.kind {
            SessionKind::Real => Some(RealSession {
                session_id,
                app_id: live.app_id.clone(),
                resource: live.resource,
            }),
            SessionKind::Virtual(_) => None,
        }
    }

    pub fn close_session(&mut self, session_id: SessionId) -> bool {
        self.sessions.remove(&session_id).is_some()
    }

    pub fn open_sessions(&self) -> usize {
        self.sessions.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::permission::PermissionRequirement;
    use crate::virtual_profiles::build_profiles;
    use crate::workload::SessionScript;

    fn broker() -> Broker {
        Broker::new(RuleStore::new(), build_profiles(7), UnitCosts::default())
    }

    fn app(id: &str, reqs: Vec<PermissionRequirement>) -> AppManifest {
        AppManifest {
            app_id: id.into(),
            display_name: id.to_uppercase(),
            requirements: reqs,
            script: SessionScript::default(),
        }
    }

    /// Records every prompt it sees.
    struct Recording<P> {
        inner: P,
        seen: Vec<PromptContext>,
    }

    impl<P: DecisionProvider> DecisionProvider for Recording<P> {
        fn prompt(&mut self, ctx: &PromptContext) -> UserDecision {
            self.seen.push(ctx.clone());
            self.inner.prompt(ctx)
        }
    }

    fn recording(default: PermissionStatus) -> Recording<ScriptedProvider> {
        Recording {
            inner: ScriptedProvider::new(default),
            seen: vec![],
        }
    }

    #[test]
    fn install_prompts_for_each_requirement() {
        let mut b = broker();
        let mut p = ScriptedProvider::new(PermissionStatus::Deny)
            .with("cam", ResourceClass::Camera, PermissionStatus::Grant)
            .with("cam", ResourceClass::Location, PermissionStatus::VirtualGrant);
        let report = b
            .install_app(
                app(
                    "cam",
                    vec![
                        PermissionRequirement::required(ResourceClass::Camera),
                        PermissionRequirement::optional(ResourceClass::Location),
                    ],
                ),
                &mut p,
            )
            .unwrap();
        assert_eq!(report.prompts_issued, 2);
        assert_eq!(
            report.decisions,
            vec![
                (ResourceClass::Camera, PermissionStatus::Grant),
                (ResourceClass::Location, PermissionStatus::VirtualGrant)
            ]
        );
        assert_eq!(b.store().len(), 2);
        let m = b.metering();
        assert_eq!((m.ui_prompts, m.pg_invocations, m.dba_lookups), (2, 2, 2));
    }

    #[test]
    fn install_reuses_imported_rule() {
        let mut b = broker();
        b.import_rule(Rule::new("maps", ResourceClass::Location, PermissionStatus::VirtualGrant, 0, RuleOrigin::Import))
            .unwrap();
        let mut p = recording(PermissionStatus::Grant);
        let report = b
            .install_app(app("maps", vec![PermissionRequirement::required(ResourceClass::Location)]), &mut p)
            .unwrap();
        assert_eq!(report.prompts_issued, 0);
        assert_eq!(report.decisions, vec![(ResourceClass::Location, PermissionStatus::VirtualGrant)]);
        assert!(p.seen.is_empty());
        assert_eq!(b.store().lookup("maps", ResourceClass::Location).unwrap().origin, RuleOrigin::Import);
    }

    #[test]
    fn install_empty_and_errors() {
        let mut b = broker();
        let mut p = recording(PermissionStatus::Grant);
        let r = b.install_app(app("empty", vec![]), &mut p).unwrap();
        assert_eq!(r.prompts_issued, 0);
        assert!(r.decisions.is_empty());
        assert!(matches!(
            b.install_app(app("empty", vec![]), &mut p),
            Err(BrokerError::DuplicateApp(_))
        ));
        assert!(matches!(
            b.install_app(app("", vec![]), &mut p),
            Err(BrokerError::InvalidManifest(_))
        ));
    }

    #[test]
    fn handles_follow_stored_status() {
        let mut b = broker();
        let mut p = ScriptedProvider::new(PermissionStatus::Grant)
            .with("a", ResourceClass::Camera, PermissionStatus::VirtualGrant)
            .with("a", ResourceClass::Contacts, PermissionStatus::Deny);
        b.install_app(
            app(
                "a",
                vec![
                    PermissionRequirement::optional(ResourceClass::Camera),
                    PermissionRequirement::optional(ResourceClass::Contacts),
                    PermissionRequirement::optional(ResourceClass::Location),
                ],
            ),
            &mut p,
        )
        .unwrap();
        let mut silent = recording(PermissionStatus::Deny);

        let real = b.request_access("a", ResourceClass::Location, &mut silent).unwrap();
        assert!(matches!(real, AccessHandle::RealAccess { .. }));

        let refused = b.request_access("a", ResourceClass::Contacts, &mut silent).unwrap();
        assert_eq!(refused, AccessHandle::Refused { resource: ResourceClass::Contacts });

        let virt = b.request_access("a", ResourceClass::Camera, &mut silent).unwrap();
        let AccessHandle::VirtualAccess { session_id, .. } = virt else {
            panic!("expected virtual access, got {virt:?}");
        };
        assert!(b.virtual_session(session_id).is_some());
        let op = ResourceOp::CameraCapture { width: 3, height: 2 };
        let frame = b.invoke_virtual(session_id, &op).unwrap();
        assert!(frame.conforms_to(&op));
        assert!(silent.seen.is_empty());
        assert_eq!(b.metering().vp_sessions, 1);
    }

    #[test]
    fn miss_prompts_once_then_hits() {
        let mut b = broker();
        b.install_app(
            app("a", vec![PermissionRequirement::required(ResourceClass::Contacts)]),
            &mut ScriptedProvider::new(PermissionStatus::Grant),
        )
        .unwrap();
        b.store.delete("a", ResourceClass::Contacts, 0);
        b.begin_metering_epoch();

        let mut p = recording(PermissionStatus::Deny);
        let h1 = b.request_access("a", ResourceClass::Contacts, &mut p).unwrap();
        assert_eq!(h1, AccessHandle::Refused { resource: ResourceClass::Contacts });
        assert_eq!(p.seen.len(), 1);
        assert_eq!(p.seen[0].occasion, PromptOccasion::FirstUse);
        assert_eq!(p.seen[0].criticality, Criticality::Required);
        assert_eq!(b.store().lookup("a", ResourceClass::Contacts).unwrap().status, PermissionStatus::Deny);

        let h2 = b.request_access("a", ResourceClass::Contacts, &mut p).unwrap();
        assert_eq!(h2, h1);
        assert_eq!(p.seen.len(), 1);
        let m = b.metering();
        assert_eq!((m.ui_prompts, m.pg_invocations, m.dba_lookups), (1, 2, 2));
    }

    #[test]
    fn request_errors() {
        let mut b = broker();
        let mut p = recording(PermissionStatus::Grant);
        assert!(matches!(
            b.request_access("ghost", ResourceClass::Camera, &mut p),
            Err(BrokerError::UnknownApp(_))
        ));
        b.install_app(app("a", vec![]), &mut p).unwrap();
        assert!(matches!(
            b.request_access("a", ResourceClass::Camera, &mut p),
            Err(BrokerError::UndeclaredResource { .. })
        ));
        assert!(p.seen.is_empty());
    }

    #[test]
    fn edits_apply_to_next_request() {
        let mut b = broker();
        let mut p = ScriptedProvider::new(PermissionStatus::Grant);
        b.install_app(app("a", vec![PermissionRequirement::optional(ResourceClass::Storage)]), &mut p)
            .unwrap();
        let r = b.edit_rule("a", ResourceClass::Storage, PermissionStatus::Deny, 5).unwrap();
        assert_eq!(r.origin, RuleOrigin::UserEdit);
        assert_eq!(
            b.request_access("a", ResourceClass::Storage, &mut p).unwrap(),
            AccessHandle::Refused { resource: ResourceClass::Storage }
        );
        b.edit_rule("a", ResourceClass::Storage, PermissionStatus::VirtualGrant, 6).unwrap();
        assert!(matches!(
            b.request_access("a", ResourceClass::Storage, &mut p).unwrap(),
            AccessHandle::VirtualAccess { .. }
        ));
        assert!(matches!(
            b.edit_rule("a", ResourceClass::Camera, PermissionStatus::Grant, 7),
            Err(BrokerError::NoRule { .. })
        ));
        assert!(matches!(
            b.edit_rule("a", ResourceClass::Storage, PermissionStatus::Grant, 1),
            Err(BrokerError::Store(RuleStoreError::StaleWrite { .. }))
        ));
    }

    #[test]
    fn uninstall_purge_and_reinstall() {
        let reqs = vec![
            PermissionRequirement::optional(ResourceClass::Camera),
            PermissionRequirement::optional(ResourceClass::Microphone),
        ];
        let mut b = broker();
        let mut p = recording(PermissionStatus::Grant);
        b.install_app(app("a", reqs.clone()), &mut p).unwrap();
        b.uninstall_app("a", true).unwrap();
        assert!(b.store().list_rules(Some("a")).is_empty());
        assert!(matches!(b.uninstall_app("a", true), Err(BrokerError::UnknownApp(_))));

        b.install_app(app("a", reqs.clone()), &mut p).unwrap();
        b.uninstall_app("a", false).unwrap();
        assert_eq!(b.store().list_rules(Some("a")).len(), 2);

        // One rule removed by hand; reinstall only asks about that one.
        b.store.delete("a", ResourceClass::Microphone, 0);
        p.seen.clear();
        let report = b.install_app(app("a", reqs), &mut p).unwrap();
        assert_eq!(report.prompts_issued, 1);
        assert_eq!(p.seen.len(), 1);
        assert_eq!(p.seen[0].resource, ResourceClass::Microphone);
    }

    #[test]
    fn required_deny_is_not_upgraded() {
        let mut b = broker();
        let mut p = ScriptedProvider::new(PermissionStatus::Deny);
        let r = b
            .install_app(app("a", vec![PermissionRequirement::required(ResourceClass::Camera)]), &mut p)
            .unwrap();
        assert_eq!(r.decisions, vec![(ResourceClass::Camera, PermissionStatus::Deny)]);
    }

    #[test]
    fn replay_provider_falls_back_to_default() {
        let mut p = ReplayProvider::new([PermissionStatus::Grant], PermissionStatus::Deny);
        let ctx = PromptContext {
            app_id: "a".into(),
            display_name: "A".into(),
            resource: ResourceClass::Camera,
            criticality: Criticality::Optional,
            occasion: PromptOccasion::Install,
            at: 0,
        };
        assert_eq!(p.prompt(&ctx).status, PermissionStatus::Grant);
        assert_eq!(p.prompt(&ctx).status, PermissionStatus::Deny);
        assert_eq!(p.remaining(), 0);
    }

    #[test]
    fn decision_script_parses() {
        let s: DecisionScript = serde_json::from_str(
            r#"{"mode":"scripted","default":"grant","decisions":[{"app_id":"maps","resource":"location","status":"virtual_grant"}]}"#,
        )
        .unwrap();
        let mut p = s.provider();
        let mut ctx = PromptContext {
            app_id: "maps".into(),
            display_name: "Maps".into(),
            resource: ResourceClass::Location,
            criticality: Criticality::Optional,
            occasion: PromptOccasion::Install,
            at: 0,
        };
        assert_eq!(p.prompt(&ctx).status, PermissionStatus::VirtualGrant);
        ctx.resource = ResourceClass::Camera;
        assert_eq!(p.prompt(&ctx).status, PermissionStatus::Grant);

        let r: DecisionScript = serde_json::from_str(r#"{"mode":"replay","decisions":["grant"]}"#).unwrap();
        assert_eq!(
            r,
            DecisionScript::Replay {
                decisions: vec![PermissionStatus::Grant],
                default: PermissionStatus::Deny
            }
        );
    }
}
