//! State-transition models for the agent and the map features.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::geometry::{orientation_from_velocity, Point2, Vector2};
use crate::measurement_model::{sigma_amp, RadioParams};
use crate::{Error, Result};

/// Lower bound on feature amplitudes after prediction.
pub const AMPLITUDE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AgentState {
    pub pos: Point2,
    pub vel: Vector2,
}

impl AgentState {
    pub fn new(pos: Point2, vel: Vector2) -> Self {
        Self { pos, vel }
    }

    /// Array orientation, i.e. the heading of the velocity vector.
    pub fn orientation(&self) -> Result<f64> {
        orientation_from_velocity(self.vel)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionParams {
    /// Sampling period.
    pub dt: f64,
    /// Standard deviation of the driving acceleration per axis.
    pub sigma_nu: f64,
    /// Standard deviation of the feature position random walk.
    pub sigma_p_feat: f64,
    /// Feature survival probability.
    pub p_s: f64,
}

impl Default for MotionParams {
    fn default() -> Self {
        Self {
            dt: 1.0,
            sigma_nu: 0.0025f64.sqrt(),
            sigma_p_feat: 1e-5,
            p_s: 0.999,
        }
    }
}

impl MotionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::param("dt", "must be > 0"));
        }
        if !(self.sigma_nu >= 0.0) || !(self.sigma_p_feat >= 0.0) {
            return Err(Error::param("sigma_nu/sigma_p_feat", "must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.p_s) {
            return Err(Error::param("p_s", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Markov chain over feature types. `matrix[from][to]` is the probability of
/// moving from type `from` to type `to`; each row sums to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeTransition {
    pub matrix: [[f64; 2]; 2],
}

impl Default for TypeTransition {
    fn default() -> Self {
        Self {
            matrix: [[0.96, 0.04], [0.04, 0.96]],
        }
    }
}

impl TypeTransition {
    pub const IDENTITY: TypeTransition = TypeTransition {
        matrix: [[1.0, 0.0], [0.0, 1.0]],
    };

    pub fn new(matrix: [[f64; 2]; 2]) -> Result<Self> {
        let t = Self { matrix };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        for row in &self.matrix {
            if row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::param("q_matrix", "entries must lie in [0, 1]"));
            }
            let s = row[0] + row[1];
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::param(
                    "q_matrix",
                    format!("rows must sum to 1, got {s}"),
                ));
            }
        }
        Ok(())
    }
}

/// Near constant-velocity prediction:
/// `p' = p + v dt + dt²/2 ν`, `v' = v + dt ν`, `ν ~ N(0, σ_ν² I)`.
pub fn predict_agent<R: Rng + ?Sized>(
    x: &AgentState,
    params: &MotionParams,
    rng: &mut R,
) -> AgentState {
    let dt = params.dt;
    let nx: f64 = rng.sample::<f64, _>(StandardNormal) * params.sigma_nu;
    let ny: f64 = rng.sample::<f64, _>(StandardNormal) * params.sigma_nu;
    let nu = Vector2::new(nx, ny);
    AgentState {
        pos: x.pos + x.vel * dt + nu * (0.5 * dt * dt),
        vel: x.vel + nu * dt,
    }
}

/// Random walk of a legacy feature's position and normalized amplitude.
pub fn predict_feature<R: Rng + ?Sized>(
    pos: Point2,
    amp: f64,
    params: &MotionParams,
    radio: &RadioParams,
    rng: &mut R,
) -> (Point2, f64) {
    let ex: f64 = rng.sample(StandardNormal);
    let ey: f64 = rng.sample(StandardNormal);
    let eu: f64 = rng.sample(StandardNormal);
    let pos = pos + Point2::new(ex, ey) * params.sigma_p_feat;
    let amp = (amp + eu * sigma_amp(amp, radio)).max(AMPLITUDE_FLOOR);
    (pos, amp)
}

/// Type PMF after one Markov transition.
pub fn predict_type(pmf: [f64; 2], transition: &TypeTransition) -> Result<[f64; 2]> {
    let sum = pmf[0] + pmf[1];
    if (sum - 1.0).abs() > 1e-9 || pmf.iter().any(|p| *p < 0.0) {
        return Err(Error::NotNormalized { sum });
    }
    let q = &transition.matrix;
    let va = q[0][0] * pmf[0] + q[1][0] * pmf[1];
    let ps = q[0][1] * pmf[0] + q[1][1] * pmf[1];
    let s = va + ps;
    Ok([va / s, ps / s])
}

pub fn predict_existence(p_exist: f64, p_s: f64) -> f64 {
    p_s * p_exist
}
