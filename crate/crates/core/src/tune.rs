//! Controller tuning: WOA over the decoded parameter space, scored by the
//! cohort-mean IAE + ITAE of closed-loop simulations.

use serde::{Deserialize, Serialize};

use crate::control::{decode_agent, ControllerConfig, LoopSettings, SearchBounds, Variant};
use crate::error::{Error, Result};
use crate::fuzzy::RuleBase;
use crate::pkpd::PatientProfile;
use crate::simloop::{run_sim, SimConfig};
use crate::woa::{optimize, BranchCounts, WoaConfig};

/// Everything needed to reproduce a tuning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneAudit {
    pub variant: Variant,
    pub status: TuneStatus,
    pub woa: WoaConfig,
    pub bounds: SearchBounds,
    /// Always "clamp": out-of-box positions are clamped to the box.
    pub bound_handling: String,
    pub patients: Vec<u32>,
    pub best_cost: f64,
    /// Best agent in `[0, 1]` coordinates over the free (unpinned) dimensions.
    pub best_position: Vec<f64>,
    pub evaluations: usize,
    pub branches: BranchCounts,
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TuneStatus {
    /// The full iteration budget ran.
    Completed,
    /// No WOA iterations ran; the result is the best random initial agent.
    Unconverged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneOutcome {
    pub config: ControllerConfig,
    pub audit: TuneAudit,
}

/// Mean `iae + itae` over `patients`, or `+inf` if any simulation fails.
pub fn cohort_cost(cfg: &ControllerConfig, patients: &[PatientProfile], sim: &SimConfig) -> f64 {
    let mut total = 0.0;
    for p in patients {
        match run_sim(p, cfg, sim) {
            Ok(r) => total += r.metrics.cost,
            Err(_) => return f64::INFINITY,
        }
    }
    total / patients.len() as f64
}

pub struct TuneRequest<'a> {
    pub variant: Variant,
    pub patients: &'a [PatientProfile],
    pub sim: &'a SimConfig,
    pub woa: &'a WoaConfig,
    pub bounds: &'a SearchBounds,
    pub rules: &'a RuleBase,
    pub settings: LoopSettings,
}

pub fn tune_controller(req: &TuneRequest<'_>) -> Result<TuneOutcome> {
    if req.patients.is_empty() {
        return Err(Error::invalid("tuning needs at least one patient"));
    }
    req.sim.validate()?;
    req.bounds.validate()?;
    for p in req.patients {
        p.validate()?;
    }
    let settings = LoopSettings {
        dt: req.sim.dt,
        ..req.settings
    };

    let param_bounds = req.bounds.for_variant(req.variant);
    let free: Vec<usize> = (0..param_bounds.len()).filter(|i| !param_bounds[*i].is_pinned()).collect();
    if free.is_empty() {
        return Err(Error::invalid("every tunable parameter is pinned"));
    }
    let expand = |x: &[f64]| -> Vec<f64> {
        let mut full = vec![0.0; param_bounds.len()];
        for (k, i) in free.iter().enumerate() {
            full[*i] = x[k];
        }
        full
    };
    let decode = |x: &[f64]| decode_agent(&expand(x), req.variant, req.bounds, req.rules, settings);

    let objective = |x: &[f64]| match decode(x) {
        Ok(cfg) => cohort_cost(&cfg, req.patients, req.sim),
        Err(_) => f64::INFINITY,
    };
    let result = optimize(req.woa, &vec![(0.0, 1.0); free.len()], objective)?;
    let config = decode(&result.best_position)?;

    let audit = TuneAudit {
        variant: req.variant,
        status: if req.woa.max_iter == 0 {
            TuneStatus::Unconverged
        } else {
            TuneStatus::Completed
        },
        woa: *req.woa,
        bounds: *req.bounds,
        bound_handling: "clamp".to_string(),
        patients: req.patients.iter().map(|p| p.id).collect(),
        best_cost: result.best_fitness,
        best_position: result.best_position,
        evaluations: result.evaluations,
        branches: result.branches,
        trace: result.trace,
    };
    Ok(TuneOutcome { config, audit })
}
