#![allow(dead_code)]

use std::collections::BTreeMap;

use pmmg_core::broker::{DecisionProvider, PromptContext, ScriptedDecision, UserDecision};
use pmmg_core::virtual_profiles::{ProfileError, RealProvider, RealSession};
use pmmg_core::workload::{generate_plan, PlanConfig};
use pmmg_core::{DayPlan, DecisionScript, PermissionStatus, RealFixture, ResourceClass, ResourceOp, ResourceResponse};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Real provider that counts invocations per (app, resource).
pub struct CountingReal {
    pub inner: RealFixture,
    pub calls: BTreeMap<(String, ResourceClass), u64>,
}

impl CountingReal {
    pub fn new(inner: RealFixture) -> Self {
        CountingReal {
            inner,
            calls: BTreeMap::new(),
        }
    }
}

impl RealProvider for CountingReal {
    fn invoke(&mut self, session: &RealSession, op: &ResourceOp) -> Result<ResourceResponse, ProfileError> {
        *self
            .calls
            .entry((session.app_id.clone(), session.resource))
            .or_default() += 1;
        self.inner.invoke(session, op)
    }
}

/// Decision provider wrapper that counts prompts per (app, resource).
pub struct CountingProvider<P> {
    pub inner: P,
    pub prompts: BTreeMap<(String, ResourceClass), u64>,
}

impl<P> CountingProvider<P> {
    pub fn new(inner: P) -> Self {
        CountingProvider {
            inner,
            prompts: BTreeMap::new(),
        }
    }

    pub fn total(&self) -> u64 {
        self.prompts.values().sum()
    }
}

impl<P: DecisionProvider> DecisionProvider for CountingProvider<P> {
    fn prompt(&mut self, ctx: &PromptContext) -> UserDecision {
        *self.prompts.entry((ctx.app_id.clone(), ctx.resource)).or_default() += 1;
        self.inner.prompt(ctx)
    }
}

fn random_status(rng: &mut ChaCha8Rng) -> PermissionStatus {
    PermissionStatus::ALL[rng.random_range(0..3)]
}

/// A random (plan, decision script, profile seed) triple.
pub fn random_case(case_seed: u64) -> (DayPlan, DecisionScript, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(case_seed);
    let daily_apps = rng.random_range(1..=12);
    let config = PlanConfig {
        daily_apps,
        monthly_apps: rng.random_range(daily_apps..=30),
        new_installs: rng.random_range(0..=2.min(daily_apps)),
        session_duration_s: rng.random_range(60..=1800),
        day_length_s: 86_400,
        max_requirements: rng.random_range(1..=5),
    };
    let plan = generate_plan(&config, rng.random());

    let script = if rng.random_bool(0.7) {
        let mut decisions = Vec::new();
        for m in plan.installed_apps.iter().chain(&plan.new_installs) {
            for r in &m.requirements {
                if rng.random_bool(0.8) {
                    decisions.push(ScriptedDecision {
                        app_id: m.app_id.clone(),
                        resource: r.resource,
                        status: random_status(&mut rng),
                    });
                }
            }
        }
        DecisionScript::Scripted {
            default: random_status(&mut rng),
            decisions,
        }
    } else {
        let len = rng.random_range(0..80);
        DecisionScript::Replay {
            decisions: (0..len).map(|_| random_status(&mut rng)).collect(),
            default: random_status(&mut rng),
        }
    };
    (plan, script, rng.random())
}

/// Splits `0..n` over the available cores and collects `f(i)` in order.
pub fn par_map<T: Send>(n: u64, f: impl Fn(u64) -> T + Sync) -> Vec<T> {
    let workers = std::thread::available_parallelism().map_or(4, |p| p.get()) as u64;
    let chunk = n.div_ceil(workers).max(1);
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..n)
            .step_by(chunk as usize)
            .map(|start| {
                let f = &f;
                scope.spawn(move || (start..(start + chunk).min(n)).map(f).collect::<Vec<_>>())
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().unwrap()).collect()
    })
}
