//! Permission mediation driven by learned user preferences.
//!
//! Apps ask the [`broker::Broker`] for sensitive resources. Each
//! (app, resource) pair is decided once by the user, stored in the
//! [`rule_store::RuleStore`], and from then on answered from the store with
//! real access, a refusal, or a deterministic fake resource from
//! [`virtual_profiles`]. [`workload`] simulates days of app usage against the
//! broker and [`cost_model`] holds the analytic overhead model the
//! measurements are compared with.

pub mod batch;
pub mod broker;
pub mod cost_model;
pub mod permission;
pub mod rule_store;
pub mod virtual_profiles;
pub mod workload;

pub use broker::{Broker, BrokerError, DecisionProvider, DecisionScript, Metering, UnitCosts};
pub use cost_model::{CostBreakdown, CostParams, Exact};
pub use permission::{
    AccessHandle, AppManifest, Criticality, PermissionRequirement, PermissionStatus, ResourceClass, Rule, RuleOrigin,
    SessionId, Tick,
};
pub use rule_store::{RuleStore, RuleStoreError};
pub use virtual_profiles::{build_profiles, ProfileRegistry, RealFixture, ResourceOp, ResourceResponse};
pub use workload::{DayMetrics, DayPlan, SessionOutcome, WorkloadError};
