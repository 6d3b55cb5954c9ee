use std::sync::atomic::{AtomicUsize, Ordering};

use doa_core::control::{ControlLaw, LoopSettings, ParamBounds, SearchBounds, Variant};
use doa_core::fuzzy::RuleBase;
use doa_core::pkpd::{reference_cohort, PdParams};
use doa_core::simloop::SimConfig;
use doa_core::tune::{cohort_cost, tune_controller, TuneRequest, TuneStatus};
use doa_core::woa::{optimize, ExplorationAnchor, WoaConfig};

fn sphere(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn cfg(pop_size: usize, max_iter: usize, seed: u64) -> WoaConfig {
    WoaConfig {
        pop_size,
        max_iter,
        seed,
        ..WoaConfig::default()
    }
}

#[test]
fn sphere_converges() {
    let bounds = vec![(-10.0, 10.0); 5];
    for seed in [1, 42, 2024] {
        let r = optimize(&cfg(30, 200, seed), &bounds, sphere).unwrap();
        assert!(r.best_fitness < 1e-3, "seed {seed}: {}", r.best_fitness);
        assert_eq!(r.trace.len(), 201);
        assert_eq!(r.evaluations, 30 * 201);
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(*r.trace.last().unwrap(), r.best_fitness);
        assert_eq!(sphere(&r.best_position), r.best_fitness);
    }
}

#[test]
fn every_branch_is_used() {
    let r = optimize(&cfg(30, 100, 42), &vec![(-5.0, 5.0); 5], sphere).unwrap();
    let b = r.branches;
    assert!(b.exploration > 0 && b.encircling > 0 && b.spiral > 0, "{b:?}");
    assert_eq!(b.exploration + b.encircling + b.spiral, 30 * 100);
}

#[test]
fn positions_stay_in_the_box() {
    let outside = AtomicUsize::new(0);
    let bounds = [(-1.0, 2.0), (0.0, 0.5), (3.0, 3.001), (-7.0, -6.0)];
    let objective = |x: &[f64]| {
        if x.iter().zip(&bounds).any(|(v, (lo, hi))| v < lo || v > hi) {
            outside.fetch_add(1, Ordering::Relaxed);
        }
        // pulls agents towards the walls
        x.iter().map(|v| -(v - 100.0).abs()).sum()
    };
    optimize(&cfg(20, 50, 3), &bounds, objective).unwrap();
    assert_eq!(outside.load(Ordering::Relaxed), 0);
}

#[test]
fn identical_seed_identical_result() {
    let bounds = vec![(-3.0, 3.0); 4];
    let rastrigin = |x: &[f64]| {
        x.iter()
            .map(|v| v * v - 10.0 * (2.0 * std::f64::consts::PI * v).cos() + 10.0)
            .sum::<f64>()
    };
    for anchor in [ExplorationAnchor::RandomAgent, ExplorationAnchor::Best] {
        let c = WoaConfig {
            exploration_anchor: anchor,
            ..cfg(15, 40, 99)
        };
        let a = optimize(&c, &bounds, rastrigin).unwrap();
        let b = optimize(&c, &bounds, rastrigin).unwrap();
        assert_eq!(a, b);
    }
    let other = optimize(&cfg(15, 40, 100), &bounds, rastrigin).unwrap();
    assert_ne!(other.trace, optimize(&cfg(15, 40, 99), &bounds, rastrigin).unwrap().trace);
}

fn pinned_pid_bounds() -> SearchBounds {
    SearchBounds {
        ki: ParamBounds { low: 0.2, high: 0.2 },
        kd: ParamBounds { low: 0.0, high: 0.0 },
        ..SearchBounds::default()
    }
}

#[test]
fn pinned_pid_tuning_agrees_with_grid_search() {
    let patients = reference_cohort(PdParams::default());
    let sim = SimConfig::default();
    let bounds = pinned_pid_bounds();
    let settings = LoopSettings::default();

    let grid_cost = (0..=100)
        .map(|i| {
            let kp = bounds.kp.low + (bounds.kp.high - bounds.kp.low) * i as f64 / 100.0;
            let law = ControlLaw::Pid { kp, ki: 0.2, kd: 0.0 };
            cohort_cost(&doa_core::control::ControllerConfig::new(law, settings).unwrap(), &patients, &sim)
        })
        .fold(f64::INFINITY, f64::min);

    let woa = cfg(8, 15, 5);
    let out = tune_controller(&TuneRequest {
        variant: Variant::Pid,
        patients: &patients,
        sim: &sim,
        woa: &woa,
        bounds: &bounds,
        rules: &RuleBase::default(),
        settings,
    })
    .unwrap();
    assert_eq!(out.audit.best_position.len(), 1);
    assert_eq!(out.audit.status, TuneStatus::Completed);
    match out.config.law {
        ControlLaw::Pid { ki, kd, .. } => assert_eq!((ki, kd), (0.2, 0.0)),
        ref other => panic!("unexpected law {other:?}"),
    }
    let cost = out.audit.best_cost;
    assert!((cost - grid_cost).abs() <= 0.05 * grid_cost, "woa {cost} vs grid {grid_cost}");
}

#[test]
fn duplicated_patients_give_the_same_optimum() {
    let cohort = reference_cohort(PdParams::default());
    let single = [cohort[3].clone()];
    let doubled = [cohort[3].clone(), cohort[3].clone()];
    let sim = SimConfig {
        horizon: 10.0,
        ..SimConfig::default()
    };
    let woa = cfg(6, 4, 11);
    let tune = |patients: &[doa_core::pkpd::PatientProfile]| {
        tune_controller(&TuneRequest {
            variant: Variant::Fopid,
            patients,
            sim: &sim,
            woa: &woa,
            bounds: &SearchBounds::default(),
            rules: &RuleBase::default(),
            settings: LoopSettings::default(),
        })
        .unwrap()
    };
    let (a, b) = (tune(&single), tune(&doubled));
    assert_eq!(a.config, b.config);
    assert_eq!(a.audit.trace, b.audit.trace);
}

#[test]
fn zero_iterations_is_flagged_unconverged() {
    let patients = &reference_cohort(PdParams::default())[..1];
    let sim = SimConfig {
        horizon: 5.0,
        ..SimConfig::default()
    };
    let woa = cfg(5, 0, 1);
    let out = tune_controller(&TuneRequest {
        variant: Variant::Pid,
        patients,
        sim: &sim,
        woa: &woa,
        bounds: &SearchBounds::default(),
        rules: &RuleBase::default(),
        settings: LoopSettings::default(),
    })
    .unwrap();
    assert_eq!(out.audit.status, TuneStatus::Unconverged);
    assert_eq!(out.audit.trace.len(), 1);
    assert_eq!(out.audit.evaluations, 5);
    assert_eq!(cohort_cost(&out.config, patients, &sim), out.audit.best_cost);
}
