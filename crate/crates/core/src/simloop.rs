//! Closed-loop simulation of controller and patient, with tracking metrics.
//!
//! Each sampling period the loop measures BIS from the plant (adding the
//! optional disturbance), asks the controller for an infusion rate, holds
//! that rate over the period and integrates the plant with one RK4 step.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{Controller, ControllerConfig};
use crate::error::{Error, Result};
use crate::pkpd::{bis_of, compute_pk, step_plant, PatientProfile, PlantState};

/// Additive step on the measured BIS, active on `[onset, onset + duration)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disturbance {
    pub onset: f64,
    pub magnitude: f64,
    pub duration: f64,
}

impl Disturbance {
    pub fn offset_at(&self, t: f64) -> f64 {
        if t >= self.onset && t < self.onset + self.duration {
            self.magnitude
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// min
    pub horizon: f64,
    /// min
    pub dt: f64,
    pub bis_target: f64,
    pub band_low: f64,
    pub band_high: f64,
    /// Half-width of the settling band around the target, BIS units.
    pub settle_tol: f64,
    #[serde(default)]
    pub disturbance: Option<Disturbance>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            horizon: 30.0,
            dt: 0.01,
            bis_target: 50.0,
            band_low: 40.0,
            band_high: 60.0,
            settle_tol: 5.0,
            disturbance: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::invalid(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(self.dt > 0.0) || self.dt > self.horizon {
            return Err(Error::invalid(format!("dt must lie in (0, horizon], got {}", self.dt)));
        }
        if !(self.band_low < self.bis_target && self.bis_target < self.band_high) {
            return Err(Error::invalid(format!(
                "band must bracket the target: {} < {} < {}",
                self.band_low, self.bis_target, self.band_high
            )));
        }
        if !(self.settle_tol > 0.0) {
            return Err(Error::invalid("settle_tol must be positive"));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    /// Measured BIS, including any disturbance.
    pub bis: f64,
    /// mg/min
    pub u: f64,
    /// mg/L
    pub ce: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `None` when the response never stays inside the settling band.
    pub settling_time: Option<f64>,
    pub steady_state_error: f64,
    pub iae: f64,
    pub itae: f64,
    pub cost: f64,
    /// Lowest BIS reached (deepest point).
    pub bis_min: f64,
    pub bis_max: f64,
    /// Every sample from the settling instant on lies inside the band.
    pub in_band_after_settling: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub patient_id: u32,
    pub series: Vec<Sample>,
    pub metrics: Metrics,
    /// Largest amount removed by the plant's non-negativity clamp in one step.
    pub max_clamp: f64,
}

/// Metrics of a uniformly sampled series with spacing `sim.dt`.
///
/// IAE and ITAE use the left rectangle rule. Settling time is the first
/// instant after which `|bis - target| <= settle_tol` for the rest of the
/// series. Steady-state error is the mean absolute error over the final 10%
/// of the series.
pub fn compute_metrics(series: &[Sample], sim: &SimConfig) -> Result<Metrics> {
    let (first, last) = match (series.first(), series.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::invalid("cannot compute metrics of an empty series")),
    };
    let target = sim.bis_target;
    let err = |s: &Sample| (s.bis - target).abs();

    let n = series.len();
    let (mut iae, mut itae) = (0.0, 0.0);
    for s in &series[..n - 1] {
        iae += err(s);
        itae += s.t * err(s);
    }
    iae *= sim.dt;
    itae *= sim.dt;

    let settling_time = match series.iter().rposition(|s| err(s) > sim.settle_tol) {
        None => Some(first.t),
        Some(i) if i + 1 == n => None,
        Some(i) => Some(series[i + 1].t),
    };

    let tail_start = last.t - 0.1 * (last.t - first.t) - 1e-9 * sim.dt;
    let (tail_sum, tail_n) = series
        .iter()
        .filter(|s| s.t >= tail_start)
        .fold((0.0, 0usize), |(a, c), s| (a + err(s), c + 1));
    let steady_state_error = tail_sum / tail_n as f64;

    let bis_min = series.iter().map(|s| s.bis).fold(f64::INFINITY, f64::min);
    let bis_max = series.iter().map(|s| s.bis).fold(f64::NEG_INFINITY, f64::max);
    let in_band_after_settling = match settling_time {
        Some(ts) => series
            .iter()
            .filter(|s| s.t >= ts)
            .all(|s| s.bis >= sim.band_low && s.bis <= sim.band_high),
        None => false,
    };

    Ok(Metrics {
        settling_time,
        steady_state_error,
        iae,
        itae,
        cost: iae + itae,
        bis_min,
        bis_max,
        in_band_after_settling,
    })
}

/// Runs the loop with an arbitrary infusion policy `(measured_bis, t) -> u`.
pub fn run_with_policy(
    patient: &PatientProfile,
    sim: &SimConfig,
    mut policy: impl FnMut(f64, f64) -> Result<f64>,
) -> Result<SimReport> {
    sim.validate()?;
    patient.validate()?;
    let coeffs = compute_pk(patient)?;
    let pd = patient.pd;
    let n = sim.steps();

    let mut state = PlantState::default();
    let mut series = Vec::with_capacity(n + 1);
    let mut max_clamp = 0.0f64;
    for k in 0..=n {
        let t = k as f64 * sim.dt;
        let mut bis = bis_of(state.ce, &pd);
        if let Some(d) = &sim.disturbance {
            bis += d.offset_at(t);
        }
        let u = policy(bis, t).map_err(|e| e.at(t, k))?;
        series.push(Sample { t, bis, u, ce: state.ce });
        if k < n {
            let next = step_plant(&state, &coeffs, &pd, u, sim.dt).map_err(|e| e.at(t + sim.dt, k))?;
            max_clamp = max_clamp.max(next.clamped);
            state = next.state;
            state.t = (k + 1) as f64 * sim.dt;
        }
    }
    let metrics = compute_metrics(&series, sim)?;
    Ok(SimReport {
        patient_id: patient.id,
        series,
        metrics,
        max_clamp,
    })
}

pub fn run_sim(patient: &PatientProfile, ctrl: &ControllerConfig, sim: &SimConfig) -> Result<SimReport> {
    if (ctrl.settings.dt - sim.dt).abs() > 1e-12 * sim.dt {
        return Err(Error::invalid(format!(
            "controller dt {} differs from simulation dt {}",
            ctrl.settings.dt, sim.dt
        )));
    }
    let mut controller = Controller::new(ctrl.clone())?;
    let target = sim.bis_target;
    run_with_policy(patient, sim, |bis, _| controller.step(bis, target))
}

/// Constant-rate infusion, no feedback.
pub fn run_open_loop(patient: &PatientProfile, u: f64, sim: &SimConfig) -> Result<SimReport> {
    run_with_policy(patient, sim, |_, _| Ok(u))
}

/// Arithmetic means of the per-patient metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    /// `None` if any patient is unsettled.
    pub settling_time: Option<f64>,
    pub steady_state_error: f64,
    pub iae: f64,
    pub itae: f64,
    /// Equal to `iae + itae` of the means.
    pub cost: f64,
    pub patients: usize,
}

impl AggregateMetrics {
    pub fn from_metrics<'a>(metrics: impl IntoIterator<Item = &'a Metrics>) -> Option<Self> {
        let all: Vec<&Metrics> = metrics.into_iter().collect();
        if all.is_empty() {
            return None;
        }
        let n = all.len() as f64;
        let mean = |f: fn(&Metrics) -> f64| all.iter().map(|m| f(m)).sum::<f64>() / n;
        let settling_time = all
            .iter()
            .map(|m| m.settling_time)
            .collect::<Option<Vec<f64>>>()
            .map(|v| v.iter().sum::<f64>() / n);
        let iae = mean(|m| m.iae);
        let itae = mean(|m| m.itae);
        Some(Self {
            settling_time,
            steady_state_error: mean(|m| m.steady_state_error),
            iae,
            itae,
            cost: iae + itae,
            patients: all.len(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct PatientOutcome {
    pub patient_id: u32,
    pub result: Result<SimReport>,
}

#[derive(Debug, Clone)]
pub struct CohortReport {
    pub outcomes: Vec<PatientOutcome>,
    /// Means over the patients that simulated successfully.
    pub aggregate: Option<AggregateMetrics>,
}

impl CohortReport {
    pub fn reports(&self) -> impl Iterator<Item = &SimReport> {
        self.outcomes.iter().filter_map(|o| o.result.as_ref().ok())
    }

    pub fn failures(&self) -> impl Iterator<Item = (u32, &Error)> {
        self.outcomes
            .iter()
            .filter_map(|o| o.result.as_ref().err().map(|e| (o.patient_id, e)))
    }
}

pub fn run_cohort(patients: &[PatientProfile], ctrl: &ControllerConfig, sim: &SimConfig) -> Result<CohortReport> {
    if patients.is_empty() {
        return Err(Error::invalid("cohort must contain at least one patient"));
    }
    let outcomes: Vec<PatientOutcome> = patients
        .par_iter()
        .map(|p| PatientOutcome {
            patient_id: p.id,
            result: run_sim(p, ctrl, sim),
        })
        .collect();
    let aggregate = AggregateMetrics::from_metrics(
        outcomes
            .iter()
            .filter_map(|o| o.result.as_ref().ok())
            .map(|r| &r.metrics),
    );
    Ok(CohortReport { outcomes, aggregate })
}
