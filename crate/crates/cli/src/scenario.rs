//! Scenario file format and its conversion into simulator and filter
//! configurations.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use mpslam::engine::{AnchorConfig, InitConfig};
use mpslam::measurement_model::{ArrayElement, ArrayGeometry};
use mpslam::synth::{generate_trajectory, NoiseMode, PathKind, Scenario, TrueFeature};
use mpslam::{
    ClutterParams, Environment, MotionParams, Point2, RadioParams, SlamConfig, TypeTransition,
    Vector2, WallSegment,
};

use crate::CliError;

/// Particle count used when the file does not set one.
pub const DEFAULT_PARTICLES: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioFile {
    pub environment: EnvironmentSection,
    pub trajectory: TrajectorySection,
    pub radio: RadioSection,
    pub clutter: ClutterSection,
    pub filter: FilterSection,
    pub synth: SynthSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvironmentSection {
    pub anchor: [f64; 2],
    pub anchor_aod_orientation: f64,
    /// Each wall as a pair of endpoints.
    pub walls: Vec<[[f64; 2]; 2]>,
    pub scatterers: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectorySection {
    pub waypoints: Vec<[f64; 2]>,
    /// m/s
    pub speed: f64,
    /// s
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioSection {
    pub beta_bw_hz: f64,
    pub f_c_hz: f64,
    pub n_rx: u32,
    pub n_tx: u32,
    pub n_f: u32,
    pub u_de: f64,
    /// Elements as `[distance_m, azimuth_rad, elevation_rad]`.
    pub tx_array: Vec<[f64; 3]>,
    pub rx_array: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClutterSection {
    pub mu_fa: f64,
    pub d_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSection {
    pub mu_n: f64,
    pub p_s: f64,
    pub p_de: f64,
    pub p_pr: f64,
    pub n_particles: usize,
    /// Row-stochastic, `q_matrix[from][to]` with VA = 0 and PS = 1.
    pub q_matrix: [[f64; 2]; 2],
    pub sigma_nu2: f64,
    pub sigma_p_feat: f64,
    pub init_pos_halfwidth_m: f64,
    pub init_vel_halfwidth_mps: f64,
    pub u_max: f64,
    /// Shrinkage-kernel bandwidth for resampled feature clouds.
    pub feature_kernel_h: f64,
    pub feature_roughening: f64,
}

/// How measurements are synthesized when no measurement file is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub noise: NoiseMode,
    /// Propagation paths to simulate. When absent: the line-of-sight path,
    /// every scatterer and the first-order reflection at every wall.
    pub features: Option<Vec<TrueFeature>>,
}

fn xy(p: Point2) -> [f64; 2] {
    [p.x, p.y]
}

fn pt(p: [f64; 2]) -> Point2 {
    Point2::new(p[0], p[1])
}

fn elements(a: &ArrayGeometry) -> Vec<[f64; 3]> {
    a.elements
        .iter()
        .map(|e| [e.dist, e.azimuth, e.elevation])
        .collect()
}

fn array(e: &[[f64; 3]]) -> ArrayGeometry {
    ArrayGeometry {
        elements: e
            .iter()
            .map(|e| ArrayElement {
                dist: e[0],
                azimuth: e[1],
                elevation: e[2],
            })
            .collect(),
    }
}

impl Default for EnvironmentSection {
    fn default() -> Self {
        let env = Scenario::default_scenario().env;
        Self {
            anchor: xy(env.anchor),
            anchor_aod_orientation: env.anchor_aod_orientation,
            walls: env
                .walls
                .iter()
                .map(|w| [xy(w.endpoint_a), xy(w.endpoint_b)])
                .collect(),
            scatterers: env.scatterers.iter().copied().map(xy).collect(),
        }
    }
}

impl Default for TrajectorySection {
    fn default() -> Self {
        Self {
            waypoints: vec![[0.0, 0.0], [10.0, 0.0]],
            speed: 0.1,
            dt: 1.0,
        }
    }
}

impl Default for RadioSection {
    fn default() -> Self {
        let r = RadioParams::default();
        Self {
            beta_bw_hz: r.beta_bw,
            f_c_hz: r.f_c,
            n_rx: r.n_rx,
            n_tx: r.n_tx,
            n_f: r.n_f,
            u_de: r.u_de,
            tx_array: elements(&r.tx_array),
            rx_array: elements(&r.rx_array),
        }
    }
}

impl Default for ClutterSection {
    fn default() -> Self {
        let c = ClutterParams::default();
        Self {
            mu_fa: c.mu_fa,
            d_max: c.d_max,
        }
    }
}

impl Default for FilterSection {
    fn default() -> Self {
        let c = SlamConfig::default();
        Self {
            mu_n: c.mu_n,
            p_s: c.motion.p_s,
            p_de: c.p_de,
            p_pr: c.p_pr,
            n_particles: DEFAULT_PARTICLES,
            q_matrix: c.type_transition.matrix,
            sigma_nu2: c.motion.sigma_nu * c.motion.sigma_nu,
            sigma_p_feat: c.motion.sigma_p_feat,
            init_pos_halfwidth_m: c.init.pos_halfwidth,
            init_vel_halfwidth_mps: c.init.vel_halfwidth,
            u_max: c.u_max,
            feature_kernel_h: c.feature_kernel_h,
            feature_roughening: c.feature_roughening,
        }
    }
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            noise: NoiseMode::Fisher,
            features: Some(mpslam::synth::default_features()),
        }
    }
}

impl Default for ScenarioFile {
    fn default() -> Self {
        Self {
            environment: EnvironmentSection::default(),
            trajectory: TrajectorySection::default(),
            radio: RadioSection::default(),
            clutter: ClutterSection::default(),
            filter: FilterSection::default(),
            synth: SynthSection::default(),
        }
    }
}

/// Sets `key` (dot-separated) in a JSON document. The value is parsed as
/// JSON and taken as a string if that fails.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment.split_once('=').ok_or_else(|| {
        CliError::BadOverride(format!("`{assignment}` is not of the form key=value"))
    })?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(CliError::BadOverride(format!(
                "empty path segment in `{key}`"
            )));
        }
        let obj = match node {
            Value::Object(m) => m,
            _ => {
                return Err(CliError::BadOverride(format!(
                    "`{}` is not an object",
                    parts[..i].join(".")
                )))
            }
        };
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split always yields at least one segment")
}

/// Reads a scenario file, applies overrides, and checks it against the
/// schema; errors carry the offending JSON path.
pub fn load(path: &Path, overrides: &[String]) -> Result<ScenarioFile, CliError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(CliError::MissingScenario(path.to_path_buf()))
        }
        Err(e) => {
            return Err(CliError::Io {
                path: path.to_path_buf(),
                source: e,
            })
        }
    };
    let de = &mut serde_json::Deserializer::from_str(&text);
    let mut doc: Value = serde_path_to_error::deserialize(de).map_err(|e| CliError::Malformed {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    let file: ScenarioFile =
        serde_path_to_error::deserialize(doc).map_err(|e| CliError::Malformed {
            path: path.to_path_buf(),
            detail: format!("at `{}`: {}", e.path(), e.inner()),
        })?;
    file.resolve().map_err(|e| CliError::Malformed {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    Ok(file)
}

impl ScenarioFile {
    fn derived_features(&self) -> Vec<TrueFeature> {
        let mut out = vec![TrueFeature {
            kind: PathKind::Los,
            u_ref: 180.0,
            d_ref: 1.0,
        }];
        for s in 0..self.environment.scatterers.len() {
            out.push(TrueFeature {
                kind: PathKind::Ps { scatterer: s },
                u_ref: 180.0,
                d_ref: 1.0,
            });
        }
        for w in 0..self.environment.walls.len() {
            out.push(TrueFeature {
                kind: PathKind::Va { walls: vec![w] },
                u_ref: 240.0,
                d_ref: 1.0,
            });
        }
        out
    }

    /// Simulator scenario and filter configuration (seed 0).
    pub fn resolve(&self) -> mpslam::Result<(Scenario, SlamConfig)> {
        let e = &self.environment;
        let walls = e
            .walls
            .iter()
            .map(|w| WallSegment::new(pt(w[0]), pt(w[1])))
            .collect::<mpslam::Result<Vec<_>>>()?;
        let env = Environment {
            anchor: pt(e.anchor),
            anchor_aod_orientation: e.anchor_aod_orientation,
            walls,
            scatterers: e.scatterers.iter().copied().map(pt).collect(),
        };
        let t = &self.trajectory;
        let waypoints: Vec<Point2> = t.waypoints.iter().copied().map(pt).collect();
        let trajectory = generate_trajectory(&waypoints, t.speed, t.dt)?;
        let r = &self.radio;
        let radio = RadioParams {
            beta_bw: r.beta_bw_hz,
            f_c: r.f_c_hz,
            n_rx: r.n_rx,
            n_tx: r.n_tx,
            n_f: r.n_f,
            u_de: r.u_de,
            tx_array: array(&r.tx_array),
            rx_array: array(&r.rx_array),
            ..RadioParams::default()
        };
        let clutter = ClutterParams {
            mu_fa: self.clutter.mu_fa,
            d_max: self.clutter.d_max,
        };
        let features = self
            .synth
            .features
            .clone()
            .unwrap_or_else(|| self.derived_features());
        let scenario = Scenario {
            env,
            trajectory,
            features,
            radio: radio.clone(),
            clutter,
            noise: self.synth.noise,
            seed: 0,
        };
        scenario.validate()?;
        let f = &self.filter;
        if !(f.sigma_nu2 >= 0.0) {
            return Err(mpslam::Error::InvalidParameter {
                name: "sigma_nu2",
                reason: "must be >= 0".into(),
            });
        }
        let start = scenario.trajectory[0].pos;
        let cfg = SlamConfig {
            motion: MotionParams {
                dt: t.dt,
                sigma_nu: f.sigma_nu2.sqrt(),
                sigma_p_feat: f.sigma_p_feat,
                p_s: f.p_s,
            },
            radio,
            clutter,
            type_transition: TypeTransition::new(f.q_matrix)?,
            mu_n: f.mu_n,
            p_de: f.p_de,
            p_pr: f.p_pr,
            n_particles: f.n_particles,
            seed: 0,
            anchor: AnchorConfig {
                pos: scenario.env.anchor,
                aod_orientation: scenario.env.anchor_aod_orientation,
                ..AnchorConfig::default()
            },
            init: InitConfig {
                pos: start,
                vel: Vector2::ORIGIN,
                pos_halfwidth: f.init_pos_halfwidth_m,
                vel_halfwidth: f.init_vel_halfwidth_mps,
            },
            u_max: f.u_max,
            feature_kernel_h: f.feature_kernel_h,
            feature_roughening: f.feature_roughening,
            ..SlamConfig::default()
        };
        cfg.validate()?;
        Ok((scenario, cfg))
    }
}
