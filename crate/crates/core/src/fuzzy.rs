//! Two-input, three-output Mamdani inference used to schedule PID gains.
//!
//! Inputs are the normalized error and error rate; outputs are normalized
//! gain multipliers in `[0, 1]` for K_P, K_I and K_D. Each variable carries
//! five triangular sets (NL, NS, Z, PS, PL) whose feet sit on the
//! neighbouring apexes, with shoulder ramps at both ends. Rules fire with
//! `min`, consequents aggregate with `max`, and the result is the centroid
//! over a 201-point grid on `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_LABELS: usize = 5;
pub const CENTROID_POINTS: usize = 201;
pub const MIN_CENTER_GAP: f64 = 0.02;
/// Free interior centres: three per set for error, error rate and output.
pub const MF_VECTOR_LEN: usize = 9;

const INPUT_SPACING: f64 = 0.5;
const OUTPUT_SPACING: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    NL,
    NS,
    Z,
    PS,
    PL,
}

impl Label {
    pub const ALL: [Label; N_LABELS] = [Label::NL, Label::NS, Label::Z, Label::PS, Label::PL];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Label {
        Self::ALL[i]
    }

    /// Label mirrored about Z.
    pub fn mirror(self) -> Label {
        Self::ALL[N_LABELS - 1 - self.index()]
    }
}

/// Five triangular sets given by their apexes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MembershipSet {
    centers: [f64; N_LABELS],
}

impl MembershipSet {
    pub fn new(centers: [f64; N_LABELS]) -> Result<Self> {
        if centers.iter().any(|c| !c.is_finite()) || centers.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!("membership centres must be strictly increasing: {centers:?}")));
        }
        Ok(Self { centers })
    }

    /// Evenly spaced apexes on `[-1, 1]`.
    pub fn uniform_input() -> Self {
        Self {
            centers: [-1.0, -0.5, 0.0, 0.5, 1.0],
        }
    }

    /// Evenly spaced apexes on `[0, 1]`.
    pub fn uniform_output() -> Self {
        Self {
            centers: [0.0, 0.25, 0.5, 0.75, 1.0],
        }
    }

    pub fn centers(&self) -> &[f64; N_LABELS] {
        &self.centers
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.centers[0], self.centers[N_LABELS - 1])
    }

    pub fn membership(&self, x: f64) -> [f64; N_LABELS] {
        let c = &self.centers;
        let (lo, hi) = self.domain();
        let x = x.clamp(lo, hi);
        let mut mu = [0.0; N_LABELS];
        for (i, m) in mu.iter_mut().enumerate() {
            *m = if (i == 0 && x <= c[0]) || (i == N_LABELS - 1 && x >= c[i]) {
                1.0
            } else if i > 0 && x >= c[i - 1] && x <= c[i] {
                (x - c[i - 1]) / (c[i] - c[i - 1])
            } else if i < N_LABELS - 1 && x >= c[i] && x <= c[i + 1] {
                (c[i + 1] - x) / (c[i + 1] - c[i])
            } else {
                0.0
            };
        }
        mu
    }
}

/// One consequent label per (error label, error-rate label) pair.
/// Rows index the error label, columns the error-rate label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RuleTable(pub [[Label; N_LABELS]; N_LABELS]);

impl RuleTable {
    pub fn from_fn(f: impl Fn(usize, usize) -> usize) -> Self {
        RuleTable(std::array::from_fn(|i| std::array::from_fn(|j| Label::from_index(f(i, j)))))
    }

    pub fn consequent(&self, e: usize, de: usize) -> Label {
        self.0[e][de]
    }

    /// `table(-e, -de) = -table(e, de)` cell by cell.
    pub fn is_antisymmetric(&self) -> bool {
        (0..N_LABELS).all(|i| {
            (0..N_LABELS).all(|j| self.0[N_LABELS - 1 - i][N_LABELS - 1 - j] == self.0[i][j].mirror())
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleBase {
    pub kp: RuleTable,
    pub ki: RuleTable,
    pub kd: RuleTable,
}

impl Default for RuleBase {
    /// Antisymmetric tables: K_P follows the MacVicar-Whelan diagonal
    /// `clamp(e + de)`, K_I falls as the error label rises and K_D falls as
    /// the error-rate label rises. All three map (Z, Z) to Z.
    fn default() -> Self {
        let clamp = |v: isize| v.clamp(0, N_LABELS as isize - 1) as usize;
        Self {
            kp: RuleTable::from_fn(|i, j| clamp(i as isize + j as isize - 2)),
            ki: RuleTable::from_fn(|i, _| N_LABELS - 1 - i),
            kd: RuleTable::from_fn(|_, j| N_LABELS - 1 - j),
        }
    }
}

impl RuleBase {
    /// Every consequent is Z; the engine then returns 0.5 everywhere.
    pub fn constant_middle() -> Self {
        let t = RuleTable::from_fn(|_, _| 2);
        Self { kp: t, ki: t, kd: t }
    }
}

/// Normalized gain multipliers in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FuzzyGains {
    pub kp_norm: f64,
    pub ki_norm: f64,
    pub kd_norm: f64,
}

/// Membership geometry for both inputs and the shared output variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MfGeometry {
    pub error: MembershipSet,
    pub derivative: MembershipSet,
    pub output: MembershipSet,
}

impl Default for MfGeometry {
    fn default() -> Self {
        Self {
            error: MembershipSet::uniform_input(),
            derivative: MembershipSet::uniform_input(),
            output: MembershipSet::uniform_output(),
        }
    }
}

/// Sorts the interior centres and enforces `MIN_CENTER_GAP` between all
/// neighbours. Indices in `pinned` are never moved.
fn enforce_gaps(c: &mut [f64; N_LABELS], pinned: &[usize]) {
    let free = |i: usize| !pinned.contains(&i);
    for i in 1..N_LABELS {
        if free(i) {
            c[i] = c[i].max(c[i - 1] + MIN_CENTER_GAP);
        }
    }
    for i in (0..N_LABELS - 1).rev() {
        if free(i) {
            c[i] = c[i].min(c[i + 1] - MIN_CENTER_GAP);
        }
    }
}

fn sorted_interior(uniform: &[f64; N_LABELS], spacing: f64, offsets: &[f64]) -> [f64; 3] {
    let mut inner: [f64; 3] = std::array::from_fn(|k| {
        let v = uniform[k + 1] + offsets[k] * spacing;
        if v.is_finite() {
            v
        } else {
            uniform[k + 1]
        }
    });
    inner.sort_by(f64::total_cmp);
    inner
}

fn repair_input(offsets: &[f64]) -> MembershipSet {
    let uniform = MembershipSet::uniform_input().centers;
    let [a, m, b] = sorted_interior(&uniform, INPUT_SPACING, offsets).map(|v| v.clamp(-1.0, 1.0));
    // Piecewise-linear renormalization that moves the middle apex to 0 while
    // keeping -1 and 1 fixed.
    let m = m.clamp(-1.0 + 2.0 * MIN_CENTER_GAP, 1.0 - 2.0 * MIN_CENTER_GAP);
    let renorm = |x: f64| {
        if x <= m {
            -1.0 + (x + 1.0) / (m + 1.0)
        } else {
            (x - m) / (1.0 - m)
        }
    };
    let mut c = [-1.0, renorm(a), 0.0, renorm(b), 1.0];
    enforce_gaps(&mut c, &[0, 2, 4]);
    MembershipSet { centers: c }
}

fn repair_output(offsets: &[f64]) -> MembershipSet {
    let uniform = MembershipSet::uniform_output().centers;
    let [a, m, b] = sorted_interior(&uniform, OUTPUT_SPACING, offsets).map(|v| v.clamp(0.0, 1.0));
    let mut c = [0.0, a, m, b, 1.0];
    enforce_gaps(&mut c, &[0, 4]);
    MembershipSet { centers: c }
}

/// Builds the three membership sets from nine interior-centre offsets.
///
/// Offsets are in units of the uniform spacing (0.5 on the inputs, 0.25 on
/// the output), so the zero vector gives evenly spaced sets. Any vector is
/// accepted: centres are sorted, the input Z apex is renormalized to 0 and
/// neighbours are pushed at least `MIN_CENTER_GAP` apart.
pub fn encode_mf(vector: &[f64]) -> Result<MfGeometry> {
    if vector.len() != MF_VECTOR_LEN {
        return Err(Error::invalid(format!(
            "membership vector needs {MF_VECTOR_LEN} entries, got {}",
            vector.len()
        )));
    }
    Ok(MfGeometry {
        error: repair_input(&vector[0..3]),
        derivative: repair_input(&vector[3..6]),
        output: repair_output(&vector[6..9]),
    })
}

/// Inverse of [`encode_mf`] on repaired geometries.
pub fn decode_mf(geometry: &MfGeometry) -> [f64; MF_VECTOR_LEN] {
    let mut v = [0.0; MF_VECTOR_LEN];
    let sets = [
        (&geometry.error, MembershipSet::uniform_input(), INPUT_SPACING),
        (&geometry.derivative, MembershipSet::uniform_input(), INPUT_SPACING),
        (&geometry.output, MembershipSet::uniform_output(), OUTPUT_SPACING),
    ];
    for (s, (set, uniform, spacing)) in sets.iter().enumerate() {
        for k in 0..3 {
            v[3 * s + k] = (set.centers[k + 1] - uniform.centers[k + 1]) / spacing;
        }
    }
    v
}

/// Inference engine with the output membership grid precomputed.
#[derive(Debug, Clone)]
pub struct FuzzyEngine {
    geometry: MfGeometry,
    rules: RuleBase,
    grid: [f64; CENTROID_POINTS],
    // output membership of each label at each grid point
    out_mu: [[f64; CENTROID_POINTS]; N_LABELS],
}

impl FuzzyEngine {
    pub fn new(geometry: MfGeometry, rules: RuleBase) -> Self {
        let grid: [f64; CENTROID_POINTS] = std::array::from_fn(|k| k as f64 / (CENTROID_POINTS - 1) as f64);
        let mut out_mu = [[0.0; CENTROID_POINTS]; N_LABELS];
        for (k, y) in grid.iter().enumerate() {
            let mu = geometry.output.membership(*y);
            for l in 0..N_LABELS {
                out_mu[l][k] = mu[l];
            }
        }
        Self {
            geometry,
            rules,
            grid,
            out_mu,
        }
    }

    pub fn geometry(&self) -> &MfGeometry {
        &self.geometry
    }

    pub fn rules(&self) -> &RuleBase {
        &self.rules
    }

    fn defuzzify(&self, table: &RuleTable, mu_e: &[f64; N_LABELS], mu_de: &[f64; N_LABELS]) -> f64 {
        let mut strength = [0.0f64; N_LABELS];
        for (i, me) in mu_e.iter().enumerate() {
            if *me == 0.0 {
                continue;
            }
            for (j, md) in mu_de.iter().enumerate() {
                let w = me.min(*md);
                let l = table.consequent(i, j).index();
                strength[l] = strength[l].max(w);
            }
        }
        let mut agg = [0.0f64; CENTROID_POINTS];
        for (k, a) in agg.iter_mut().enumerate() {
            for l in 0..N_LABELS {
                if strength[l] > 0.0 {
                    *a = a.max(strength[l].min(self.out_mu[l][k]));
                }
            }
        }
        // Moments about the midpoint, summed in mirrored pairs, so a
        // symmetric aggregate lands exactly on 0.5.
        let (mut num, mut den) = (0.0, 0.0);
        let last = CENTROID_POINTS - 1;
        for k in 0..CENTROID_POINTS / 2 {
            let (lo, hi) = (agg[k], agg[last - k]);
            num += hi * (self.grid[last - k] - 0.5) + lo * (self.grid[k] - 0.5);
            den += lo + hi;
        }
        den += agg[last / 2];
        if den > 0.0 {
            0.5 + num / den
        } else {
            0.5
        }
    }

    pub fn infer(&self, e_norm: f64, de_norm: f64) -> FuzzyGains {
        let mu_e = self.geometry.error.membership(e_norm);
        let mu_de = self.geometry.derivative.membership(de_norm);
        FuzzyGains {
            kp_norm: self.defuzzify(&self.rules.kp, &mu_e, &mu_de),
            ki_norm: self.defuzzify(&self.rules.ki, &mu_e, &mu_de),
            kd_norm: self.defuzzify(&self.rules.kd, &mu_e, &mu_de),
        }
    }
}

/// One-shot inference. Build a [`FuzzyEngine`] when calling repeatedly.
pub fn infer(
    e_norm: f64,
    de_norm: f64,
    rules: &RuleBase,
    error_set: &MembershipSet,
    derivative_set: &MembershipSet,
    output_set: &MembershipSet,
) -> FuzzyGains {
    let geometry = MfGeometry {
        error: *error_set,
        derivative: *derivative_set,
        output: *output_set,
    };
    FuzzyEngine::new(geometry, *rules).infer(e_norm, de_norm)
}
