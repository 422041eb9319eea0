//! Synthetic ground truth and measurement generation.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dynamics::AgentState;
use crate::geometry::{
    bearing, dist_ps, reflection_points, virtual_anchor, wrap_angle, Environment, Point2,
    WallSegment,
};
use crate::measurement_model::{
    fisher_stddevs, ClutterParams, FeatureType, Measurement, RadioParams,
};
use crate::{Error, Result};

/// Propagation path that a true feature produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    /// Direct anchor → agent path.
    Los,
    /// Specular reflection at the listed walls, in anchor-to-agent order.
    Va { walls: Vec<usize> },
    /// Single bounce at a point scatterer.
    Ps { scatterer: usize },
}

/// A true feature and its nominal amplitude law `u(d) = u_ref · d_ref / d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueFeature {
    pub kind: PathKind,
    pub u_ref: f64,
    pub d_ref: f64,
}

impl TrueFeature {
    pub fn feature_type(&self) -> FeatureType {
        match self.kind {
            PathKind::Ps { .. } => FeatureType::Ps,
            _ => FeatureType::Va,
        }
    }

    pub fn is_los(&self) -> bool {
        self.kind == PathKind::Los
    }

    /// Map position: anchor, virtual anchor or scatterer.
    pub fn position(&self, env: &Environment) -> Result<Point2> {
        match &self.kind {
            PathKind::Los => Ok(env.anchor),
            PathKind::Va { walls } => virtual_anchor(env.anchor, &select_walls(env, walls)?),
            PathKind::Ps { scatterer } => {
                env.scatterers.get(*scatterer).copied().ok_or_else(|| {
                    Error::InvalidScenario(format!("no scatterer with index {scatterer}"))
                })
            }
        }
    }
}

fn select_walls(env: &Environment, idx: &[usize]) -> Result<Vec<WallSegment>> {
    idx.iter()
        .map(|&i| {
            env.walls
                .get(i)
                .copied()
                .ok_or_else(|| Error::InvalidScenario(format!("no wall with index {i}")))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Gaussian noise at the Fisher deviations, Rician amplitudes.
    #[default]
    Fisher,
    /// Exact geometric values; amplitude equals the nominal amplitude.
    Noiseless,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub env: Environment,
    pub trajectory: Vec<AgentState>,
    pub features: Vec<TrueFeature>,
    pub radio: RadioParams,
    pub clutter: ClutterParams,
    pub noise: NoiseMode,
    pub seed: u64,
}

/// Geometric path parameters without noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathValues {
    pub dist: f64,
    pub aod: f64,
    pub aoa: f64,
    pub amp: f64,
}

impl Scenario {
    /// Anchor at (0, 6) m, walls at y = -3 m and x = 15 m, a scatterer at
    /// (6, 3) m, and a 10 m straight track along the x axis. The true
    /// features are the scatterer and the two first-order virtual anchors;
    /// the line-of-sight path is observed as well.
    pub fn default_scenario() -> Self {
        let env = Environment {
            anchor: Point2::new(0.0, 6.0),
            anchor_aod_orientation: 0.0,
            walls: vec![
                WallSegment {
                    endpoint_a: Point2::new(-10.0, -3.0),
                    endpoint_b: Point2::new(20.0, -3.0),
                },
                WallSegment {
                    endpoint_a: Point2::new(15.0, -10.0),
                    endpoint_b: Point2::new(15.0, 20.0),
                },
            ],
            scatterers: vec![Point2::new(6.0, 3.0)],
        };
        let trajectory =
            generate_trajectory(&[Point2::new(0.0, 0.0), Point2::new(10.0, 0.0)], 0.1, 1.0)
                .expect("default track is valid");
        Self {
            env,
            trajectory,
            features: default_features(),
            radio: RadioParams::default(),
            clutter: ClutterParams::default(),
            noise: NoiseMode::Fisher,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trajectory.is_empty() {
            return Err(Error::InvalidScenario("trajectory is empty".into()));
        }
        self.radio.validate()?;
        self.clutter.validate()?;
        for f in &self.features {
            f.position(&self.env)?;
            if !(f.u_ref > 0.0 && f.d_ref > 0.0) {
                return Err(Error::InvalidScenario(
                    "amplitude law needs u_ref, d_ref > 0".into(),
                ));
            }
        }
        Ok(())
    }

    /// True map features with their types, excluding the line-of-sight
    /// path.
    pub fn true_map(&self) -> Result<Vec<(Point2, FeatureType)>> {
        self.features
            .iter()
            .filter(|f| !f.is_los())
            .map(|f| Ok((f.position(&self.env)?, f.feature_type())))
            .collect()
    }

    /// Noise-free path parameters of `feature` for agent state `x`.
    pub fn path_values(&self, feature: &TrueFeature, x: &AgentState) -> Result<PathValues> {
        let env = &self.env;
        let heading = x.orientation()?;
        let (dist, aod, target) = match &feature.kind {
            PathKind::Los => (
                x.pos.distance(env.anchor),
                bearing(env.anchor, x.pos, env.anchor_aod_orientation)?,
                env.anchor,
            ),
            PathKind::Va { walls } => {
                let walls = select_walls(env, walls)?;
                let va = virtual_anchor(env.anchor, &walls)?;
                let r = reflection_points(env.anchor, &walls, x.pos)?;
                let first = r.first().copied().unwrap_or(x.pos);
                (
                    x.pos.distance(va),
                    bearing(env.anchor, first, env.anchor_aod_orientation)?,
                    va,
                )
            }
            PathKind::Ps { .. } => {
                let ps = feature.position(env)?;
                (
                    dist_ps(x.pos, ps, env.anchor),
                    bearing(env.anchor, ps, env.anchor_aod_orientation)?,
                    ps,
                )
            }
        };
        let aoa = bearing(x.pos, target, heading)?;
        let amp = feature.u_ref * feature.d_ref / dist;
        Ok(PathValues {
            dist,
            aod,
            aoa,
            amp,
        })
    }
}

/// PS, first-order VA at y = -3 m, first-order VA at x = 15 m, plus the
/// line-of-sight path.
pub fn default_features() -> Vec<TrueFeature> {
    vec![
        TrueFeature {
            kind: PathKind::Los,
            u_ref: 180.0,
            d_ref: 1.0,
        },
        TrueFeature {
            kind: PathKind::Ps { scatterer: 0 },
            u_ref: 180.0,
            d_ref: 1.0,
        },
        TrueFeature {
            kind: PathKind::Va { walls: vec![0] },
            u_ref: 240.0,
            d_ref: 1.0,
        },
        TrueFeature {
            kind: PathKind::Va { walls: vec![1] },
            u_ref: 400.0,
            d_ref: 1.0,
        },
    ]
}

/// Piecewise-linear track through `waypoints` sampled every `speed · dt`
/// meters of arc length. Velocities point along the current segment.
pub fn generate_trajectory(waypoints: &[Point2], speed: f64, dt: f64) -> Result<Vec<AgentState>> {
    if waypoints.len() < 2 {
        return Err(Error::param("waypoints", "need at least two"));
    }
    if !(speed > 0.0) || !(dt > 0.0) {
        return Err(Error::param("speed", "speed and dt must be > 0"));
    }
    let seg_len: Vec<f64> = waypoints.windows(2).map(|w| w[0].distance(w[1])).collect();
    if seg_len.iter().any(|l| *l == 0.0) {
        return Err(Error::param(
            "waypoints",
            "consecutive waypoints must differ",
        ));
    }
    let total: f64 = seg_len.iter().sum();
    let ds = speed * dt;
    let n = (total / ds + 1e-9).floor() as usize;
    let mut out = Vec::with_capacity(n + 1);
    let mut seg = 0;
    let mut seg_start = 0.0;
    for i in 0..=n {
        let s = (i as f64 * ds).min(total);
        while seg + 1 < seg_len.len() && s > seg_start + seg_len[seg] + 1e-12 {
            seg_start += seg_len[seg];
            seg += 1;
        }
        let dir = (waypoints[seg + 1] - waypoints[seg]) * (1.0 / seg_len[seg]);
        let pos = waypoints[seg] + dir * (s - seg_start);
        out.push(AgentState::new(pos, dir * speed));
    }
    Ok(out)
}

/// Draws a Rician variate with location `nu` and scale `sigma`.
fn sample_rician<R: Rng + ?Sized>(nu: f64, sigma: f64, rng: &mut R) -> f64 {
    let a: f64 = rng.sample(StandardNormal);
    let b: f64 = rng.sample(StandardNormal);
    ((nu + sigma * a).powi(2) + (sigma * b).powi(2)).sqrt()
}

/// Measurements of time index `step`: detections of every true feature, then
/// Poisson clutter, in random order.
pub fn generate_measurements<R: Rng + ?Sized>(
    scenario: &Scenario,
    step: usize,
    rng: &mut R,
) -> Result<Vec<Measurement>> {
    let x = scenario
        .trajectory
        .get(step)
        .ok_or_else(|| Error::param("step", format!("{step} is past the trajectory end")))?;
    let radio = &scenario.radio;
    let mut out = Vec::new();
    for f in &scenario.features {
        let v = scenario.path_values(f, x)?;
        match scenario.noise {
            NoiseMode::Noiseless => {
                if v.amp >= radio.u_de {
                    out.push(Measurement {
                        dist: v.dist,
                        aod: v.aod,
                        aoa: v.aoa,
                        amp: v.amp,
                    });
                }
            }
            NoiseMode::Fisher => {
                let s = fisher_stddevs(v.amp, radio, v.aod, v.aoa)?;
                let amp = sample_rician(v.amp, s.amp, rng);
                let nd: f64 = rng.sample(StandardNormal);
                let nt: f64 = rng.sample(StandardNormal);
                let nr: f64 = rng.sample(StandardNormal);
                // Sampling the Rician and thresholding is the same as a
                // p_d(u) detection followed by a truncated-Rician amplitude.
                if amp >= radio.u_de {
                    out.push(Measurement {
                        dist: (v.dist + s.dist * nd).max(0.0),
                        aod: wrap_angle(v.aod + s.aod * nt),
                        aoa: wrap_angle(v.aoa + s.aoa * nr),
                        amp,
                    });
                }
            }
        }
    }
    let mu = scenario.clutter.mu_fa;
    let n_fa = if mu > 0.0 {
        Poisson::new(mu)
            .map_err(|e| Error::param("mu_fa", e.to_string()))?
            .sample(rng) as usize
    } else {
        0
    };
    let u_de = radio.u_de;
    for _ in 0..n_fa {
        let dist = rng.random::<f64>() * scenario.clutter.d_max;
        let aod = -PI + rng.random::<f64>() * 2.0 * PI;
        let aoa = -PI + rng.random::<f64>() * 2.0 * PI;
        // Inverse CDF of the unit-scale Rayleigh truncated to [u_de, ∞).
        let u: f64 = 1.0 - rng.random::<f64>();
        let amp = (u_de * u_de - 2.0 * u.ln()).sqrt();
        out.push(Measurement {
            dist,
            aod: wrap_angle(aod),
            aoa: wrap_angle(aoa),
            amp,
        });
    }
    out.shuffle(rng);
    Ok(out)
}
