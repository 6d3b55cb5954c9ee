//! PID, fractional-order PID and fuzzy-scheduled fractional PID laws.
//!
//! Controllers regulate the measured BIS towards a target by commanding a
//! propofol infusion rate. The error is taken as `measured - target`, so a
//! patient who is too light (BIS above target) produces a positive error and
//! a positive infusion command. The command is clamped to `[0, u_max]`.
//! While the clamp is active against the error sign the integral history is
//! fed zeros instead of the error (conditional integration).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fracops::{FracKind, FracOperator, DEFAULT_MEMORY_LEN};
use crate::fuzzy::{decode_mf, encode_mf, FuzzyEngine, RuleBase, MF_VECTOR_LEN};

/// BIS error corresponding to a normalized fuzzy input of 1.
pub const ERROR_SCALE: f64 = 50.0;
/// BIS error rate (per minute) corresponding to a normalized input of 1.
pub const ERROR_RATE_SCALE: f64 = 25.0;
pub const DEFAULT_U_MAX: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Pid,
    Fopid,
    Fofpid,
}

impl Variant {
    /// Length of the agent vector this variant decodes from.
    pub fn dim(self) -> usize {
        match self {
            Variant::Pid => 3,
            Variant::Fopid => 5,
            Variant::Fofpid => 5 + MF_VECTOR_LEN,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Pid => "pid",
            Variant::Fopid => "fopid",
            Variant::Fofpid => "fofpid",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pid" => Ok(Variant::Pid),
            "fopid" => Ok(Variant::Fopid),
            "fofpid" => Ok(Variant::Fofpid),
            other => Err(Error::invalid(format!("unknown controller variant '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase", deny_unknown_fields)]
pub enum ControlLaw {
    Pid {
        kp: f64,
        ki: f64,
        kd: f64,
    },
    Fopid {
        kp: f64,
        ki: f64,
        kd: f64,
        alpha: f64,
        beta: f64,
    },
    /// Gains are `kp_max * kp_norm` etc. with the normalized multipliers
    /// produced by the fuzzy engine; `mf_vector` feeds [`encode_mf`].
    Fofpid {
        kp_max: f64,
        ki_max: f64,
        kd_max: f64,
        alpha: f64,
        beta: f64,
        mf_vector: Vec<f64>,
        rules: RuleBase,
    },
}

impl ControlLaw {
    pub fn variant(&self) -> Variant {
        match self {
            ControlLaw::Pid { .. } => Variant::Pid,
            ControlLaw::Fopid { .. } => Variant::Fopid,
            ControlLaw::Fofpid { .. } => Variant::Fofpid,
        }
    }
}

/// Actuator and discretization settings shared by all laws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopSettings {
    /// Infusion ceiling, mg/min.
    pub u_max: f64,
    /// Sampling period, min.
    pub dt: f64,
    /// Grünwald–Letnikov window length, samples.
    #[serde(default = "default_memory_len")]
    pub memory_len: usize,
    #[serde(default = "default_true")]
    pub anti_windup: bool,
}

fn default_memory_len() -> usize {
    DEFAULT_MEMORY_LEN
}

fn default_true() -> bool {
    true
}

impl LoopSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.u_max > 0.0) || !self.u_max.is_finite() {
            return Err(Error::invalid(format!("u_max must be positive, got {}", self.u_max)));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if self.memory_len == 0 {
            return Err(Error::invalid("memory_len must be at least 1"));
        }
        Ok(())
    }
}

impl Default for LoopSettings {
    fn default() -> Self {
        Self {
            u_max: DEFAULT_U_MAX,
            dt: 0.01,
            memory_len: DEFAULT_MEMORY_LEN,
            anti_windup: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub law: ControlLaw,
    pub settings: LoopSettings,
}

impl ControllerConfig {
    pub fn new(law: ControlLaw, settings: LoopSettings) -> Result<Self> {
        let cfg = Self { law, settings };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn variant(&self) -> Variant {
        self.law.variant()
    }

    pub fn validate(&self) -> Result<()> {
        self.settings.validate()?;
        let gain = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be a non-negative finite number, got {v}")))
            }
        };
        let order = |name: &str, v: f64| {
            if v > 0.0 && v < 2.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must lie in (0, 2), got {v}")))
            }
        };
        match &self.law {
            ControlLaw::Pid { kp, ki, kd } => {
                gain("kp", *kp)?;
                gain("ki", *ki)?;
                gain("kd", *kd)
            }
            ControlLaw::Fopid { kp, ki, kd, alpha, beta } => {
                gain("kp", *kp)?;
                gain("ki", *ki)?;
                gain("kd", *kd)?;
                order("alpha", *alpha)?;
                order("beta", *beta)
            }
            ControlLaw::Fofpid {
                kp_max,
                ki_max,
                kd_max,
                alpha,
                beta,
                mf_vector,
                ..
            } => {
                gain("kp_max", *kp_max)?;
                gain("ki_max", *ki_max)?;
                gain("kd_max", *kd_max)?;
                order("alpha", *alpha)?;
                order("beta", *beta)?;
                encode_mf(mf_vector).map(|_| ())
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Terms {
    Integer { integral: f64 },
    Fractional { integral: FracOperator, derivative: FracOperator },
}

/// Mutable part of a controller.
#[derive(Debug, Clone)]
pub struct ControllerState {
    terms: Terms,
    pub prev_error: f64,
    pub prev_u: f64,
}

/// Fresh state for `cfg`: empty operator histories, zero previous error
/// and command.
pub fn reset_controller(cfg: &ControllerConfig) -> Result<ControllerState> {
    let s = &cfg.settings;
    let terms = match &cfg.law {
        ControlLaw::Pid { .. } => Terms::Integer { integral: 0.0 },
        ControlLaw::Fopid { alpha, beta, .. } | ControlLaw::Fofpid { alpha, beta, .. } => Terms::Fractional {
            integral: FracOperator::new(FracKind::Integral, *alpha, s.dt, s.memory_len)?,
            derivative: FracOperator::new(FracKind::Derivative, *beta, s.dt, s.memory_len)?,
        },
    };
    Ok(ControllerState {
        terms,
        prev_error: 0.0,
        prev_u: 0.0,
    })
}

/// A configured controller together with its running state.
#[derive(Debug, Clone)]
pub struct Controller {
    cfg: ControllerConfig,
    state: ControllerState,
    engine: Option<FuzzyEngine>,
}

impl Controller {
    pub fn new(cfg: ControllerConfig) -> Result<Self> {
        cfg.validate()?;
        let engine = match &cfg.law {
            ControlLaw::Fofpid { mf_vector, rules, .. } => Some(FuzzyEngine::new(encode_mf(mf_vector)?, *rules)),
            _ => None,
        };
        let state = reset_controller(&cfg)?;
        Ok(Self { cfg, state, engine })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn state(&self) -> &ControllerState {
        &self.state
    }

    pub fn reset(&mut self) {
        // config was validated in new(), so rebuilding cannot fail
        self.state = reset_controller(&self.cfg).expect("validated controller config");
    }

    fn gains(&self, e: f64) -> (f64, f64, f64) {
        match &self.cfg.law {
            ControlLaw::Pid { kp, ki, kd } | ControlLaw::Fopid { kp, ki, kd, .. } => (*kp, *ki, *kd),
            ControlLaw::Fofpid {
                kp_max, ki_max, kd_max, ..
            } => {
                let engine = self.engine.as_ref().expect("fuzzy engine for fofpid");
                let de = (e - self.state.prev_error) / self.cfg.settings.dt;
                let g = engine.infer(e / ERROR_SCALE, de / ERROR_RATE_SCALE);
                (g.kp_norm * kp_max, g.ki_norm * ki_max, g.kd_norm * kd_max)
            }
        }
    }

    /// One sampling period: returns the clamped infusion rate in mg/min.
    pub fn step(&mut self, bis_measured: f64, bis_target: f64) -> Result<f64> {
        let e = bis_measured - bis_target;
        if !e.is_finite() {
            return Err(Error::NumericBlowup {
                t: 0.0,
                step: 0,
                detail: format!("non-finite BIS error from measured {bis_measured}, target {bis_target}"),
            });
        }
        let (kp, ki, kd) = self.gains(e);
        let LoopSettings {
            u_max, dt, anti_windup, ..
        } = self.cfg.settings;

        let (i_grow, i_hold, d) = match &mut self.state.terms {
            Terms::Integer { integral } => (*integral + e * dt, *integral, (e - self.state.prev_error) / dt),
            Terms::Fractional { integral, derivative } => (integral.peek(e), integral.peek(0.0), derivative.apply(e)),
        };

        let mut u_raw = kp * e + ki * i_grow + kd * d;
        let frozen = anti_windup && ((u_raw > u_max && e > 0.0) || (u_raw < 0.0 && e < 0.0));
        if frozen {
            u_raw = kp * e + ki * i_hold + kd * d;
        }
        match &mut self.state.terms {
            Terms::Integer { integral } => *integral = if frozen { i_hold } else { i_grow },
            Terms::Fractional { integral, .. } => integral.push(if frozen { 0.0 } else { e }),
        }

        if !u_raw.is_finite() {
            return Err(Error::NumericBlowup {
                t: 0.0,
                step: 0,
                detail: format!("non-finite control output (kp={kp}, ki={ki}, kd={kd}, e={e})"),
            });
        }
        let u = u_raw.clamp(0.0, u_max);
        self.state.prev_error = e;
        self.state.prev_u = u;
        Ok(u)
    }
}

/// Closed interval for one tunable parameter. `low == high` pins it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamBounds {
    pub low: f64,
    pub high: f64,
}

impl ParamBounds {
    pub const fn new(low: f64, high: f64) -> Self {
        Self { low, high }
    }

    pub fn is_pinned(&self) -> bool {
        self.low == self.high
    }

    /// Affine image of `x ∈ [0, 1]`.
    pub fn map(&self, x: f64) -> f64 {
        let x = if x.is_finite() { x.clamp(0.0, 1.0) } else { 0.0 };
        if self.is_pinned() {
            self.low
        } else {
            (self.low + x * (self.high - self.low)).clamp(self.low, self.high)
        }
    }
}

/// Parameter boxes the tuner searches over. Agent coordinates live in
/// `[0, 1]` and are mapped affinely into these bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchBounds {
    pub kp: ParamBounds,
    pub ki: ParamBounds,
    pub kd: ParamBounds,
    pub alpha: ParamBounds,
    pub beta: ParamBounds,
    pub kp_max: ParamBounds,
    pub ki_max: ParamBounds,
    pub kd_max: ParamBounds,
    /// Bounds shared by all nine membership-centre offsets.
    pub mf_offset: ParamBounds,
}

impl Default for SearchBounds {
    fn default() -> Self {
        Self {
            kp: ParamBounds::new(0.0, 5.0),
            ki: ParamBounds::new(0.0, 2.0),
            kd: ParamBounds::new(0.0, 2.0),
            alpha: ParamBounds::new(0.1, 1.5),
            beta: ParamBounds::new(0.1, 1.5),
            kp_max: ParamBounds::new(0.0, 20.0),
            ki_max: ParamBounds::new(0.0, 8.0),
            kd_max: ParamBounds::new(0.0, 8.0),
            mf_offset: ParamBounds::new(-1.0, 1.0),
        }
    }
}

impl SearchBounds {
    /// Bounds for each agent coordinate of `variant`, in decode order.
    pub fn for_variant(&self, variant: Variant) -> Vec<ParamBounds> {
        match variant {
            Variant::Pid => vec![self.kp, self.ki, self.kd],
            Variant::Fopid => vec![self.kp, self.ki, self.kd, self.alpha, self.beta],
            Variant::Fofpid => {
                let mut b = vec![self.kp_max, self.ki_max, self.kd_max, self.alpha, self.beta];
                b.extend(std::iter::repeat(self.mf_offset).take(MF_VECTOR_LEN));
                b
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, b) in [
            ("kp", self.kp),
            ("ki", self.ki),
            ("kd", self.kd),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("kp_max", self.kp_max),
            ("ki_max", self.ki_max),
            ("kd_max", self.kd_max),
            ("mf_offset", self.mf_offset),
        ] {
            if !(b.low <= b.high) || !b.low.is_finite() || !b.high.is_finite() {
                return Err(Error::invalid(format!("bounds for {name} must satisfy low <= high: {b:?}")));
            }
        }
        for (name, b) in [
            ("kp", self.kp),
            ("ki", self.ki),
            ("kd", self.kd),
            ("kp_max", self.kp_max),
            ("ki_max", self.ki_max),
            ("kd_max", self.kd_max),
        ] {
            if b.low < 0.0 {
                return Err(Error::invalid(format!("gain bounds for {name} must be non-negative")));
            }
        }
        for (name, b) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(b.low > 0.0 && b.high < 2.0) {
                return Err(Error::invalid(format!("order bounds for {name} must lie inside (0, 2)")));
            }
        }
        Ok(())
    }
}

/// Maps an agent vector in `[0, 1]^n` to a controller configuration.
pub fn decode_agent(
    vector: &[f64],
    variant: Variant,
    bounds: &SearchBounds,
    rules: &RuleBase,
    settings: LoopSettings,
) -> Result<ControllerConfig> {
    if vector.len() != variant.dim() {
        return Err(Error::invalid(format!(
            "{variant} agent vector needs {} entries, got {}",
            variant.dim(),
            vector.len()
        )));
    }
    let p: Vec<f64> = bounds
        .for_variant(variant)
        .iter()
        .zip(vector)
        .map(|(b, x)| b.map(*x))
        .collect();
    let law = match variant {
        Variant::Pid => ControlLaw::Pid {
            kp: p[0],
            ki: p[1],
            kd: p[2],
        },
        Variant::Fopid => ControlLaw::Fopid {
            kp: p[0],
            ki: p[1],
            kd: p[2],
            alpha: p[3],
            beta: p[4],
        },
        Variant::Fofpid => ControlLaw::Fofpid {
            kp_max: p[0],
            ki_max: p[1],
            kd_max: p[2],
            alpha: p[3],
            beta: p[4],
            mf_vector: decode_mf(&encode_mf(&p[5..])?).to_vec(),
            rules: *rules,
        },
    };
    ControllerConfig::new(law, settings)
}
