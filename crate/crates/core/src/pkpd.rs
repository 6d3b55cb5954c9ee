//! Propofol pharmacokinetics and pharmacodynamics.
//!
//! Three-compartment mass balance (central, muscle, fat) with patient-specific
//! volumes and clearances, a first-order effect-site compartment and a Hill
//! sigmoid mapping effect-site concentration to BIS. Time is in minutes,
//! masses in mg, concentrations in mg/L.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Male,
    Female,
}

/// Effect-site and Hill parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdParams {
    /// Plasma to effect-site equilibration rate, 1/min.
    pub ke0: f64,
    /// Effect-site concentration at half-maximal effect, mg/L.
    pub ec50: f64,
    /// Hill exponent.
    pub gamma: f64,
    /// Awake baseline BIS.
    pub bis0: f64,
}

impl Default for PdParams {
    /// Literature-style nominal values. No per-patient PD values are
    /// published for the reference cohort, so these are engineering
    /// defaults rather than fitted ground truth.
    fn default() -> Self {
        Self {
            ke0: 0.456,
            ec50: 2.65,
            gamma: 2.0,
            bis0: 100.0,
        }
    }
}

impl PdParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.ke0, self.ec50, self.gamma, self.bis0];
        if all.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::invalid(format!("PD parameters must be positive: {self:?}")));
        }
        if self.gamma < 1.0 {
            return Err(Error::invalid(format!("Hill exponent must be >= 1, got {}", self.gamma)));
        }
        if self.bis0 > 100.0 {
            return Err(Error::invalid(format!("baseline BIS must be <= 100, got {}", self.bis0)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatientProfile {
    pub id: u32,
    /// Years.
    pub age: f64,
    /// kg.
    pub weight: f64,
    /// cm.
    pub height: f64,
    pub sex: Sex,
    pub pd: PdParams,
}

impl PatientProfile {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("age", self.age), ("weight", self.weight), ("height", self.height)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::invalid(format!("patient {}: {name} must be positive, got {v}", self.id)));
            }
        }
        self.pd.validate()?;
        compute_pk(self).map(|_| ())
    }
}

/// The eight demographic profiles of the reference cohort, all sharing `pd`.
pub fn reference_cohort(pd: PdParams) -> Vec<PatientProfile> {
    use Sex::*;
    [
        (30.0, 70.0, 170.0, Male),
        (45.0, 80.0, 175.0, Male),
        (60.0, 65.0, 165.0, Female),
        (25.0, 55.0, 160.0, Female),
        (50.0, 90.0, 180.0, Male),
        (35.0, 60.0, 168.0, Female),
        (55.0, 75.0, 172.0, Male),
        (40.0, 68.0, 170.0, Female),
    ]
    .into_iter()
    .enumerate()
    .map(|(i, (age, weight, height, sex))| PatientProfile {
        id: i as u32 + 1,
        age,
        weight,
        height,
        sex,
        pd,
    })
    .collect()
}

/// Compartment volumes (L), clearances (L/min), rate constants (1/min) and
/// lean body mass (kg).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PkCoefficients {
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
    pub cl1: f64,
    pub cl2: f64,
    pub cl3: f64,
    pub k10: f64,
    pub k12: f64,
    pub k13: f64,
    pub k21: f64,
    pub k31: f64,
    pub lbm: f64,
}

pub fn compute_lbm(weight: f64, height: f64, sex: Sex) -> Result<f64> {
    if !(weight > 0.0 && height > 0.0) || !weight.is_finite() || !height.is_finite() {
        return Err(Error::invalid(format!(
            "weight and height must be positive, got {weight} kg, {height} cm"
        )));
    }
    let ratio = (weight * weight) / (height * height);
    let lbm = match sex {
        Sex::Male => 1.1 * weight - 128.0 * ratio,
        Sex::Female => 1.07 * weight - 148.0 * ratio,
    };
    if lbm <= 0.0 {
        return Err(Error::DegenerateProfile { field: "lbm", value: lbm });
    }
    Ok(lbm)
}

pub fn compute_pk(profile: &PatientProfile) -> Result<PkCoefficients> {
    let age = profile.age;
    if !(age > 0.0) || !age.is_finite() {
        return Err(Error::invalid(format!("age must be positive, got {age}")));
    }
    let lbm = compute_lbm(profile.weight, profile.height, profile.sex)?;

    let v1 = 4.27;
    let v2 = 18.9 - 0.391 * (age - 53.0);
    let v3 = 238.0;
    let cl1 = 1.89 + 0.0456 * (profile.weight - 77.0) + 0.0264 * (profile.height - 177.0)
        - 0.0681 * (lbm - 59.0);
    let cl2 = 1.29 - 0.024 * (age - 53.0);
    let cl3 = 0.836;

    for (field, value) in [("v2", v2), ("cl1", cl1), ("cl2", cl2)] {
        if value <= 0.0 {
            return Err(Error::DegenerateProfile { field, value });
        }
    }

    Ok(PkCoefficients {
        v1,
        v2,
        v3,
        cl1,
        cl2,
        cl3,
        k10: cl1 / v1,
        k12: cl2 / v1,
        k13: cl3 / v1,
        k21: cl2 / v2,
        k31: cl3 / v3,
        lbm,
    })
}

/// Integrated plant state: compartment masses (mg), effect-site
/// concentration (mg/L) and simulation clock (min).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlantState {
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
    pub ce: f64,
    pub t: f64,
}

impl PlantState {
    fn as_array(&self) -> [f64; 4] {
        [self.x1, self.x2, self.x3, self.ce]
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite()) && self.t.is_finite()
    }
}

/// Time derivatives of `(x1, x2, x3, ce)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivatives {
    pub dx1: f64,
    pub dx2: f64,
    pub dx3: f64,
    pub dce: f64,
}

fn rhs(y: &[f64; 4], k: &PkCoefficients, ke0: f64, u: f64) -> [f64; 4] {
    let [x1, x2, x3, ce] = *y;
    [
        -(k.k10 + k.k12 + k.k13) * x1 + k.k21 * x2 + k.k31 * x3 + u,
        k.k12 * x1 - k.k21 * x2,
        k.k13 * x1 - k.k31 * x3,
        ke0 * (x1 / k.v1 - ce),
    ]
}

pub fn plant_derivatives(state: &PlantState, coeffs: &PkCoefficients, pd: &PdParams, u: f64) -> Derivatives {
    let [dx1, dx2, dx3, dce] = rhs(&state.as_array(), coeffs, pd.ke0, u);
    Derivatives { dx1, dx2, dx3, dce }
}

/// Result of one integration step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantStep {
    pub state: PlantState,
    /// Total mass/concentration removed by the non-negativity clamp.
    pub clamped: f64,
}

/// Advances the plant by `dt` minutes with classical RK4, holding the
/// infusion rate `u` constant over the step.
pub fn step_plant(
    state: &PlantState,
    coeffs: &PkCoefficients,
    pd: &PdParams,
    u: f64,
    dt: f64,
) -> Result<PlantStep> {
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    if !(u >= 0.0) {
        return Err(Error::invalid(format!("infusion rate must be non-negative, got {u}")));
    }
    let y = state.as_array();
    let f = |y: &[f64; 4]| rhs(y, coeffs, pd.ke0, u);
    let axpy = |h: f64, d: &[f64; 4]| -> [f64; 4] { std::array::from_fn(|i| y[i] + h * d[i]) };

    let k1 = f(&y);
    let k2 = f(&axpy(0.5 * dt, &k1));
    let k3 = f(&axpy(0.5 * dt, &k2));
    let k4 = f(&axpy(dt, &k3));
    let mut next: [f64; 4] =
        std::array::from_fn(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));

    let t = state.t + dt;
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericBlowup {
            t,
            step: 0,
            detail: format!("plant state {next:?}"),
        });
    }

    let mut clamped = 0.0;
    for v in next.iter_mut() {
        if *v < 0.0 {
            clamped += -*v;
            *v = 0.0;
        }
    }
    let [x1, x2, x3, ce] = next;
    Ok(PlantStep {
        state: PlantState { x1, x2, x3, ce, t },
        clamped,
    })
}

/// Hill sigmoid BIS response to effect-site concentration `ce` (mg/L).
pub fn bis_of(ce: f64, pd: &PdParams) -> f64 {
    let ce = ce.max(0.0);
    let a = ce.powf(pd.gamma);
    let b = pd.ec50.powf(pd.gamma);
    // bis0 * (1 - a/(a+b)) without the cancellation near ce = 0
    pd.bis0 * b / (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn patient1() -> PatientProfile {
        reference_cohort(PdParams::default())[0]
    }

    #[test]
    fn lbm_examples() {
        assert!((compute_lbm(70.0, 170.0, Sex::Male).unwrap() - 55.297_577_854_671).abs() < 1e-9);
        assert!((compute_lbm(65.0, 165.0, Sex::Female).unwrap() - 46.582_139_577_594).abs() < 1e-9);
        let tall = compute_lbm(70.0, 1e6, Sex::Male).unwrap();
        assert!((tall - 77.0).abs() < 1e-3);
    }

    #[test]
    fn lbm_rejects_bad_inputs() {
        assert!(matches!(compute_lbm(0.0, 170.0, Sex::Male), Err(Error::InvalidArgument(_))));
        assert!(matches!(compute_lbm(70.0, -1.0, Sex::Female), Err(Error::InvalidArgument(_))));
        // very heavy for the height: quadratic term dominates
        assert!(matches!(
            compute_lbm(200.0, 100.0, Sex::Male),
            Err(Error::DegenerateProfile { field: "lbm", .. })
        ));
    }

    #[test]
    fn pk_patient1() {
        let k = compute_pk(&patient1()).unwrap();
        assert!((k.v2 - 27.893).abs() < 1e-12);
        assert!((k.cl1 - 1.638_134_948).abs() < 1e-8);
        assert!((k.k10 - 0.383_638_161_1).abs() < 1e-9);
        assert!((k.k21 - 0.066_038_074_07).abs() < 1e-10);
        assert!((k.k31 - 0.003_512_605_042).abs() < 1e-11);
    }

    #[test]
    fn age_53_removes_corrections() {
        let mut p = patient1();
        p.age = 53.0;
        let k = compute_pk(&p).unwrap();
        assert_eq!(k.v2, 18.9);
        assert_eq!(k.cl2, 1.29);
        for p in reference_cohort(PdParams::default()) {
            let k = compute_pk(&p).unwrap();
            assert_eq!((k.v1, k.v3), (4.27, 238.0));
        }
    }

    #[test]
    fn old_age_is_degenerate() {
        let mut p = patient1();
        p.age = 110.0;
        assert!(matches!(compute_pk(&p), Err(Error::DegenerateProfile { field: "v2", .. })));
    }

    #[test]
    fn rate_constant_identities() {
        for p in reference_cohort(PdParams::default()) {
            let k = compute_pk(&p).unwrap();
            assert_eq!(k.k10, k.cl1 / k.v1);
            assert_eq!(k.k12, k.cl2 / k.v1);
            assert_eq!(k.k13, k.cl3 / k.v1);
            assert_eq!(k.k21, k.cl2 / k.v2);
            assert_eq!(k.k31, k.cl3 / k.v3);
            assert_eq!(compute_pk(&p).unwrap(), k);
        }
    }

    #[test]
    fn derivative_examples() {
        let p = patient1();
        let k = compute_pk(&p).unwrap();
        let zero = PlantState::default();
        let d = plant_derivatives(&zero, &k, &p.pd, 0.0);
        assert_eq!((d.dx1, d.dx2, d.dx3, d.dce), (0.0, 0.0, 0.0, 0.0));
        let d = plant_derivatives(&zero, &k, &p.pd, 10.0);
        assert_eq!((d.dx1, d.dx2, d.dx3, d.dce), (10.0, 0.0, 0.0, 0.0));

        let s = PlantState { x1: 4.27, ..Default::default() };
        let d = plant_derivatives(&s, &k, &p.pd, 0.0);
        assert!((d.dx1 - -4.316_134_948).abs() < 1e-8);
        assert!((d.dx2 - k.k12 * 4.27).abs() < 1e-12);
        assert!((d.dx3 - k.k13 * 4.27).abs() < 1e-12);
        assert!((d.dce - p.pd.ke0).abs() < 1e-12);
    }

    #[test]
    fn zero_state_is_fixed_point() {
        let p = patient1();
        let k = compute_pk(&p).unwrap();
        let s = step_plant(&PlantState::default(), &k, &p.pd, 0.0, 0.25).unwrap();
        assert_eq!(s.state, PlantState { t: 0.25, ..Default::default() });
        assert_eq!(s.clamped, 0.0);
    }

    #[test]
    fn step_rejects_bad_arguments() {
        let p = patient1();
        let k = compute_pk(&p).unwrap();
        let s = PlantState::default();
        assert!(step_plant(&s, &k, &p.pd, -1.0, 0.01).is_err());
        assert!(step_plant(&s, &k, &p.pd, 1.0, 0.0).is_err());
    }

    #[test]
    fn single_step_matches_fine_euler() {
        let p = patient1();
        let k = compute_pk(&p).unwrap();
        let rk = step_plant(&PlantState::default(), &k, &p.pd, 10.0, 0.01).unwrap().state;

        let mut y = [0.0f64; 4];
        let h = 1e-5;
        for _ in 0..1000 {
            let d = rhs(&y, &k, p.pd.ke0, 10.0);
            for i in 0..4 {
                y[i] += h * d[i];
            }
        }
        assert!((rk.x1 - y[0]).abs() < 1e-6, "{} vs {}", rk.x1, y[0]);
    }

    #[test]
    fn bis_examples() {
        let pd = PdParams::default();
        assert_eq!(bis_of(0.0, &pd), 100.0);
        assert!((bis_of(pd.ec50, &pd) - 50.0).abs() < 1e-12);
        assert!((bis_of(2.0 * pd.ec50, &pd) - 20.0).abs() < 1e-12);
    }

    #[test]
    fn bis_strictly_decreasing() {
        let pd = PdParams::default();
        let grid: Vec<f64> = (0..1000).map(|i| i as f64 * 0.01).collect();
        for w in grid.windows(2) {
            assert!(bis_of(w[1], &pd) < bis_of(w[0], &pd));
        }
    }

    #[test]
    fn pd_validation() {
        assert!(PdParams::default().validate().is_ok());
        let bad = PdParams { gamma: 0.5, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = PdParams { bis0: 120.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
