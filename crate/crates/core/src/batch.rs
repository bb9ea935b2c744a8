//! Batch evaluation over independent inputs.
//!
//! Day simulations and model sweeps share no state, so each entry point maps
//! over its inputs on the rayon pool when the `parallel` feature is on and
//! sequentially otherwise. The `_seq` variants are always available; the
//! `_par` variants only with the feature.

use std::ops::RangeInclusive;

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::broker::{DecisionScript, UnitCosts};
use crate::cost_model::{pmmg_daily_closed, pmmg_daily_composed, CostBreakdown, CostParams, Exact};
use crate::rule_store::RuleStore;
use crate::virtual_profiles::RealFixture;
use crate::workload::{simulate_day, DayOutput, DayPlan, WorkloadError};

macro_rules! if_parallel {
    ($par:expr, $seq:expr) => {{
        #[cfg(feature = "parallel")]
        {
            $par
        }
        #[cfg(not(feature = "parallel"))]
        {
            $seq
        }
    }};
}

/// One self-contained day simulation.
#[derive(Debug, Clone)]
pub struct DayJob {
    pub plan: DayPlan,
    pub decisions: DecisionScript,
    pub seed: u64,
    pub unit_costs: UnitCosts,
    pub store: RuleStore,
}

impl DayJob {
    pub fn new(plan: DayPlan, decisions: DecisionScript, seed: u64) -> Self {
        DayJob {
            plan,
            decisions,
            seed,
            unit_costs: UnitCosts::default(),
            store: RuleStore::new(),
        }
    }

    pub fn run(&self, fixture: &RealFixture) -> Result<DayOutput, WorkloadError> {
        simulate_day(
            &self.plan,
            &self.decisions,
            self.seed,
            self.unit_costs,
            self.store.clone(),
            fixture,
        )
    }
}

pub fn run_days_seq(jobs: &[DayJob], fixture: &RealFixture) -> Vec<Result<DayOutput, WorkloadError>> {
    jobs.iter().map(|j| j.run(fixture)).collect()
}

#[cfg(feature = "parallel")]
pub fn run_days_par(jobs: &[DayJob], fixture: &RealFixture) -> Vec<Result<DayOutput, WorkloadError>> {
    jobs.par_iter().map(|j| j.run(fixture)).collect()
}

/// Runs every job; output order matches input order.
pub fn run_days(jobs: &[DayJob], fixture: &RealFixture) -> Vec<Result<DayOutput, WorkloadError>> {
    if_parallel!(run_days_par(jobs, fixture), run_days_seq(jobs, fixture))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: u64,
    pub new_app: f64,
    pub old_app: f64,
    pub vp: f64,
    pub daily: f64,
}

// Evaluated exactly and rounded once, so rows carry no accumulated error.
fn sweep_row(base: &CostParams<f64>, n: u64) -> SweepRow {
    let CostBreakdown {
        new_app,
        old_app,
        vp,
        daily,
    } = pmmg_daily_composed(&base.to_exact().with_n_exact(n)).to_f64();
    SweepRow {
        n,
        new_app,
        old_app,
        vp,
        daily,
    }
}

pub fn sweep_seq(base: &CostParams<f64>, ns: RangeInclusive<u64>) -> Vec<SweepRow> {
    ns.map(|n| sweep_row(base, n)).collect()
}

#[cfg(feature = "parallel")]
pub fn sweep_par(base: &CostParams<f64>, ns: RangeInclusive<u64>) -> Vec<SweepRow> {
    ns.into_par_iter().map(|n| sweep_row(base, n)).collect()
}

/// Model breakdown for every `n` in the range, with the other inputs fixed.
pub fn sweep(base: &CostParams<f64>, ns: RangeInclusive<u64>) -> Vec<SweepRow> {
    if_parallel!(sweep_par(base, ns), sweep_seq(base, ns))
}

fn identity_holds(p: &CostParams<Exact>) -> bool {
    pmmg_daily_composed(p).daily == pmmg_daily_closed(p)
}

pub fn identity_mismatches_seq(params: &[CostParams<Exact>]) -> Vec<usize> {
    params
        .iter()
        .enumerate()
        .filter(|(_, p)| !identity_holds(p))
        .map(|(i, _)| i)
        .collect()
}

#[cfg(feature = "parallel")]
pub fn identity_mismatches_par(params: &[CostParams<Exact>]) -> Vec<usize> {
    params
        .par_iter()
        .enumerate()
        .filter(|(_, p)| !identity_holds(p))
        .map(|(i, _)| i)
        .collect()
}

/// Indices whose composed and closed daily costs differ (exactly).
pub fn identity_mismatches(params: &[CostParams<Exact>]) -> Vec<usize> {
    if_parallel!(identity_mismatches_par(params), identity_mismatches_seq(params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::permission::PermissionStatus;
    use crate::workload::generate_default_plan;

    #[test]
    fn sweep_matches_direct_evaluation() {
        let base = CostParams::placeholder();
        let rows = sweep(&base, 0..=20);
        assert_eq!(rows.len(), 21);
        assert_eq!(rows, sweep_seq(&base, 0..=20));
        assert_eq!(rows[9].vp, 5400.0);
        assert_eq!(rows[0].daily, 2.06);
    }

    #[test]
    fn batch_matches_sequential() {
        let fixture = RealFixture::default_fixture();
        let jobs: Vec<_> = (0..6)
            .map(|s| DayJob::new(generate_default_plan(s), DecisionScript::uniform(PermissionStatus::VirtualGrant), s))
            .collect();
        let a: Vec<_> = run_days(&jobs, &fixture).into_iter().map(|r| r.unwrap().metrics).collect();
        let b: Vec<_> = run_days_seq(&jobs, &fixture).into_iter().map(|r| r.unwrap().metrics).collect();
        assert_eq!(a, b);
    }
}
