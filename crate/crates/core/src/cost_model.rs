//! Analytic per-day overhead model.
//!
//! A newly installed app costs one user interaction on top of what every
//! previously installed app costs (granter, database access, virtual profile
//! time):
//!
//! ```text
//! new_app = UI + PG + DBA + VP
//! old_app =      PG + DBA + VP
//! VP      = n/2 · appTime
//! daily   = new_app + n · old_app
//!         = UI + (n + 1) · (PG + DBA + n/2 · appTime)
//! ```
//!
//! The functions are generic over the scalar so the composed and closed
//! forms can be compared exactly over [`Exact`] rationals; `f64` is for
//! reporting.

use std::ops::RangeInclusive;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::workload::DayMetrics;

/// Arbitrary-precision rational.
pub type Exact = BigRational;

pub trait Scalar: Clone + Num + FromPrimitive + PartialOrd {}

impl<T: Clone + Num + FromPrimitive + PartialOrd> Scalar for T {}

fn from_count<T: Scalar>(n: u64) -> T {
    T::from_u64(n).expect("count is representable")
}

fn two<T: Scalar>() -> T {
    T::one() + T::one()
}

/// Model inputs, in seconds. `n` counts previously installed apps used per day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostParams<T = f64> {
    pub ui: T,
    pub pg: T,
    pub dba: T,
    pub app_time: T,
    pub n: u64,
}

impl CostParams<f64> {
    /// Placeholder device costs with a nine-app, twenty-minute day.
    pub fn placeholder() -> Self {
        CostParams {
            ui: 2.0,
            pg: 0.01,
            dba: 0.05,
            app_time: 1200.0,
            n: 9,
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.ui, self.pg, self.dba, self.app_time]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
    }

    /// Exact value of each input's shortest decimal form, so `0.01` becomes
    /// exactly 1/100.
    ///
    /// # Panics
    /// If an input is not finite.
    pub fn to_exact(&self) -> CostParams<Exact> {
        let conv = decimal_exact;
        CostParams {
            ui: conv(self.ui),
            pg: conv(self.pg),
            dba: conv(self.dba),
            app_time: conv(self.app_time),
            n: self.n,
        }
    }

    pub fn with_n(&self, n: u64) -> Self {
        CostParams { n, ..self.clone() }
    }
}

impl<T: Scalar> CostParams<T> {
    pub fn with_n_exact(&self, n: u64) -> Self {
        CostParams {
            ui: self.ui.clone(),
            pg: self.pg.clone(),
            dba: self.dba.clone(),
            app_time: self.app_time.clone(),
            n,
        }
    }
}

fn decimal_exact(v: f64) -> Exact {
    assert!(v.is_finite(), "cost inputs must be finite, got {v}");
    let text = format!("{v:e}");
    let (mantissa, exp) = text.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let decimals = mantissa.split_once('.').map_or(0, |(_, f)| f.len()) as i32;
    let digits: BigInt = mantissa.replace('.', "").parse().expect("decimal digits");
    let shift = exp - decimals;
    let ten = BigInt::from(10u32);
    if shift >= 0 {
        Exact::from_integer(digits * num_traits::pow(ten, shift as usize))
    } else {
        Exact::new(digits, num_traits::pow(ten, (-shift) as usize))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown<T = f64> {
    pub new_app: T,
    pub old_app: T,
    pub vp: T,
    pub daily: T,
}

impl CostBreakdown<Exact> {
    pub fn to_f64(&self) -> CostBreakdown<f64> {
        let f = |v: &Exact| v.to_f64().unwrap_or(f64::NAN);
        CostBreakdown {
            new_app: f(&self.new_app),
            old_app: f(&self.old_app),
            vp: f(&self.vp),
            daily: f(&self.daily),
        }
    }
}

/// Virtual-profile time: half of the `n` apps run a profile for `app_time`.
pub fn vp_time<T: Scalar>(n: u64, app_time: &T) -> T {
    from_count::<T>(n) * app_time.clone() / two()
}

pub fn cost_new_app<T: Scalar>(p: &CostParams<T>, vp: &T) -> T {
    p.ui.clone() + p.pg.clone() + p.dba.clone() + vp.clone()
}

pub fn cost_old_app<T: Scalar>(p: &CostParams<T>, vp: &T) -> T {
    p.pg.clone() + p.dba.clone() + vp.clone()
}

/// Builds the daily figure from its parts: VP, then the per-app costs, then
/// `new_app + n · old_app`.
pub fn pmmg_daily_composed<T: Scalar>(p: &CostParams<T>) -> CostBreakdown<T> {
    let vp = vp_time(p.n, &p.app_time);
    let new_app = cost_new_app(p, &vp);
    let old_app = cost_old_app(p, &vp);
    let daily = new_app.clone() + from_count::<T>(p.n) * old_app.clone();
    CostBreakdown {
        new_app,
        old_app,
        vp,
        daily,
    }
}

/// `UI + (n + 1) · (PG + DBA + n/2 · appTime)`, evaluated directly.
pub fn pmmg_daily_closed<T: Scalar>(p: &CostParams<T>) -> T {
    let n: T = from_count(p.n);
    let half_n = n.clone() / two();
    p.ui.clone() + (n + T::one()) * (p.pg.clone() + p.dba.clone() + half_n * p.app_time.clone())
}

/// Growth of the closed form in `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticReport {
    pub n_min: u64,
    pub n_max: u64,
    /// Every second difference over unit steps of `n` is the same value.
    pub second_difference_constant: bool,
    /// That common value (the first one observed), or 0 for short ranges.
    pub second_difference: f64,
    /// `second_difference == app_time`, checked exactly.
    pub second_difference_matches_app_time: bool,
    pub strictly_increasing: bool,
    /// `daily(n_max) / n_max²`.
    pub leading_ratio: f64,
    /// `app_time / 2`.
    pub expected_leading: f64,
    /// `|leading_ratio − expected| / expected`; absolute when expected is 0.
    pub relative_deviation: f64,
}

impl AsymptoticReport {
    pub fn is_quadratic(&self, tolerance: f64) -> bool {
        self.second_difference_constant
            && self.second_difference_matches_app_time
            && self.relative_deviation < tolerance
    }
}

/// Evaluates the closed form for every `n` in the range (exactly) and
/// reports finite differences and the leading coefficient.
///
/// # Panics
/// If `n_range` is empty.
pub fn asymptotic_check(p_base: &CostParams<f64>, n_range: RangeInclusive<u64>) -> AsymptoticReport {
    assert!(!n_range.is_empty(), "n_range must be non-empty");
    let (n_min, n_max) = (*n_range.start(), *n_range.end());
    let exact = p_base.to_exact();
    let values: Vec<Exact> = n_range
        .map(|n| pmmg_daily_closed(&exact.with_n_exact(n)))
        .collect();

    let strictly_increasing = values.windows(2).all(|w| w[1] > w[0]);
    let second: Vec<Exact> = values
        .windows(3)
        .map(|w| w[2].clone() - w[1].clone() - w[1].clone() + w[0].clone())
        .collect();
    let first_second = second.first().cloned().unwrap_or_else(Exact::zero);
    let second_difference_constant = second.iter().all(|d| *d == first_second);
    let second_difference_matches_app_time = second.iter().all(|d| *d == exact.app_time);

    let last = values.last().expect("non-empty");
    let leading_ratio = if n_max == 0 {
        0.0
    } else {
        let n2: Exact = from_count::<Exact>(n_max) * from_count::<Exact>(n_max);
        (last.clone() / n2).to_f64().unwrap_or(f64::NAN)
    };
    let expected_leading = p_base.app_time / 2.0;
    let relative_deviation = if expected_leading > 0.0 {
        (leading_ratio - expected_leading).abs() / expected_leading
    } else {
        leading_ratio.abs()
    };

    AsymptoticReport {
        n_min,
        n_max,
        second_difference_constant,
        second_difference: first_second.to_f64().unwrap_or(f64::NAN),
        second_difference_matches_app_time,
        strictly_increasing,
        leading_ratio,
        expected_leading,
        relative_deviation,
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CalibrationError {
    #[error("need at least two runs, got {0}")]
    TooFewRuns(usize),
    #[error("degenerate input: every run has the same n and invocation counts")]
    Degenerate,
    #[error("no run exercised `{0}`, its unit cost cannot be identified")]
    Unidentifiable(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub params: CostParams<f64>,
    /// Root-mean-square difference between observed and refitted daily cost.
    pub residual_s: f64,
    pub runs: usize,
}

/// Least-squares estimate of the unit costs from measured runs.
///
/// Each component's time is proportional to its invocation count, so UI, PG
/// and DBA are fitted independently as slopes through the origin over all
/// runs (granter and lookup counts are equal in every run, so a joint fit on
/// totals would be rank deficient). `app_time` is the mean session length and
/// `n` the rounded mean number of previously installed app sessions.
pub fn calibrate(metrics_list: &[DayMetrics]) -> Result<Calibration, CalibrationError> {
    if metrics_list.len() < 2 {
        return Err(CalibrationError::TooFewRuns(metrics_list.len()));
    }
    let signature = |m: &DayMetrics| {
        (
            m.old_app_sessions,
            m.metering.ui_prompts,
            m.metering.pg_invocations,
            m.metering.dba_lookups,
        )
    };
    let first = signature(&metrics_list[0]);
    if metrics_list.iter().all(|m| signature(m) == first) {
        return Err(CalibrationError::Degenerate);
    }

    let slope = |name: &'static str, count: fn(&DayMetrics) -> u64, time: fn(&DayMetrics) -> f64| {
        let (sxy, sxx) = metrics_list.iter().fold((0.0, 0.0), |(sxy, sxx), m| {
            let c = count(m) as f64;
            (sxy + c * time(m), sxx + c * c)
        });
        if sxx == 0.0 {
            Err(CalibrationError::Unidentifiable(name))
        } else {
            Ok(sxy / sxx)
        }
    };
    let ui = slope("ui", |m| m.metering.ui_prompts, |m| m.metering.ui_time_s)?;
    let pg = slope("pg", |m| m.metering.pg_invocations, |m| m.metering.pg_time_s)?;
    let dba = slope("dba", |m| m.metering.dba_lookups, |m| m.metering.dba_time_s)?;

    let sessions: Vec<u64> = metrics_list
        .iter()
        .flat_map(|m| m.sessions.iter().map(|s| s.simulated_duration_s))
        .collect();
    let app_time = if sessions.is_empty() {
        0.0
    } else {
        sessions.iter().sum::<u64>() as f64 / sessions.len() as f64
    };
    let n = (metrics_list.iter().map(|m| m.old_app_sessions).sum::<u64>() as f64 / metrics_list.len() as f64).round() as u64;

    let params = CostParams {
        ui,
        pg,
        dba,
        app_time,
        n,
    };
    let sq: f64 = metrics_list
        .iter()
        .map(|m| {
            let predicted = crate::workload::measure_components(m, &params);
            (predicted - m.observed_cost_s()).powi(2)
        })
        .sum();
    Ok(Calibration {
        params,
        residual_s: (sq / metrics_list.len() as f64).sqrt(),
        runs: metrics_list.len(),
    })
}
