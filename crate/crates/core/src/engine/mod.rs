//! Particle-based belief propagation filter.
//!
//! The agent belief is a weighted particle set. Every potential feature
//! carries an existence probability, a type PMF and one particle cloud per
//! type hypothesis (the same measurement implies a different position for a
//! VA than for a PS). Agent particle `j` is paired with particle `j` of each
//! feature cloud when particle-marginalized weights are formed, so the cost
//! per step is linear in the particle count.
//!
//! Feature 1 is the physical anchor. It always exists, is always of VA type
//! and explains the line-of-sight path, whose likelihood includes the
//! departure angle.

mod birth;
mod resample;
mod weights;

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::association::{bp_messages, marginals_from_messages, AssociationWeights};
use crate::dynamics::{
    predict_agent, predict_feature, predict_type, AgentState, MotionParams, TypeTransition,
    AMPLITUDE_FLOOR,
};
use crate::geometry::{Point2, Vector2};
use crate::measurement_model::{
    ln_rician_pdf, sigma_amp, sigma_dist, ClutterParams, DetectionTable, FaContext, FeatureType,
    Measurement, RadioParams,
};
use crate::rng::{stream, tag};
use crate::{Error, Result};

pub use birth::{birth_proposal, ln_birth_density, BirthProposal, BirthSample};
pub use resample::{
    effective_sample_size, resample, shrinkage_move, systematic_indices, weighted_moments,
};
pub use weights::{weight_legacy, weight_new};

use weights::{predicted_dist, PredictedPath, Radio, GATE_SIGMAS};

/// Id of the anchor feature.
pub const ANCHOR_ID: u64 = 1;

/// Floor for the false-alarm log density, so that measurements outside the
/// clutter support get a large but finite likelihood ratio.
const LN_FA_FLOOR: f64 = -700.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorConfig {
    pub pos: Point2,
    /// Reference orientation of the anchor array, radians.
    pub aod_orientation: f64,
    /// Estimate the anchor position instead of treating it as known.
    pub estimate: bool,
    /// Prior standard deviation of the anchor position when estimated.
    pub prior_sigma: f64,
}

impl Default for AnchorConfig {
    fn default() -> Self {
        Self {
            pos: Point2::new(0.0, 6.0),
            aod_orientation: 0.0,
            estimate: false,
            prior_sigma: 0.05,
        }
    }
}

/// Box prior on the initial agent state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitConfig {
    pub pos: Point2,
    pub vel: Vector2,
    pub pos_halfwidth: f64,
    pub vel_halfwidth: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            pos: Point2::ORIGIN,
            vel: Vector2::ORIGIN,
            pos_halfwidth: 0.2,
            vel_halfwidth: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlamConfig {
    pub motion: MotionParams,
    pub radio: RadioParams,
    pub clutter: ClutterParams,
    pub type_transition: TypeTransition,
    /// Mean number of new features per step.
    pub mu_n: f64,
    /// Existence threshold for reporting a feature.
    pub p_de: f64,
    /// Existence threshold below which a feature is dropped.
    pub p_pr: f64,
    pub n_particles: usize,
    pub seed: u64,
    pub anchor: AnchorConfig,
    pub init: InitConfig,
    /// Upper end of the amplitude support of new features and of the anchor
    /// amplitude prior.
    pub u_max: f64,
    pub bp_tol: f64,
    pub bp_max_iter: usize,
    /// A particle set is resampled when its effective sample size falls
    /// below this fraction of its size.
    pub resample_threshold: f64,
    /// Bandwidth `h` of the shrinkage kernel applied to feature clouds after
    /// resampling; 0 disables it.
    pub feature_kernel_h: f64,
    /// Stddev (m) of an extra position jitter applied when a feature cloud
    /// is resampled. Unlike the kernel it does not vanish once a cloud has
    /// collapsed onto a single point; 0 disables it.
    pub feature_roughening: f64,
}

impl Default for SlamConfig {
    fn default() -> Self {
        Self {
            motion: MotionParams::default(),
            radio: RadioParams::default(),
            clutter: ClutterParams::default(),
            type_transition: TypeTransition::default(),
            mu_n: 0.1,
            p_de: 0.5,
            p_pr: 1e-3,
            n_particles: 200_000,
            seed: 0,
            anchor: AnchorConfig::default(),
            init: InitConfig::default(),
            u_max: 100.0,
            bp_tol: 1e-6,
            bp_max_iter: 50,
            resample_threshold: 0.5,
            feature_kernel_h: 0.2,
            feature_roughening: 1e-3,
        }
    }
}

impl SlamConfig {
    pub fn validate(&self) -> Result<()> {
        self.motion.validate()?;
        self.radio.validate()?;
        self.clutter.validate()?;
        self.type_transition.validate()?;
        if !(self.clutter.mu_fa > 0.0) {
            return Err(Error::param(
                "mu_fa",
                "the filter needs a positive clutter rate",
            ));
        }
        if !(self.mu_n >= 0.0 && self.mu_n.is_finite()) {
            return Err(Error::param("mu_n", "must be >= 0"));
        }
        for (name, v) in [("p_de", self.p_de), ("p_pr", self.p_pr)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::param(name, format!("must lie in [0, 1], got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.resample_threshold) {
            return Err(Error::param("resample_threshold", "must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.feature_kernel_h) {
            return Err(Error::param("feature_kernel_h", "must lie in [0, 1)"));
        }
        if !(self.feature_roughening >= 0.0 && self.feature_roughening.is_finite()) {
            return Err(Error::param("feature_roughening", "must be >= 0"));
        }
        if self.n_particles == 0 {
            return Err(Error::param("n_particles", "must be > 0"));
        }
        if !(self.u_max > self.radio.u_de) || !self.u_max.is_finite() {
            return Err(Error::param("u_max", "must exceed u_de"));
        }
        if !(self.init.pos_halfwidth >= 0.0) || !(self.init.vel_halfwidth >= 0.0) {
            return Err(Error::param("init", "half-widths must be >= 0"));
        }
        if self.anchor.estimate && !(self.anchor.prior_sigma > 0.0) {
            return Err(Error::param(
                "anchor.prior_sigma",
                "must be > 0 for an estimated anchor",
            ));
        }
        Ok(())
    }
}

/// Quantities derived from the configuration once per filter.
#[derive(Debug)]
pub struct ModelCache {
    pub(crate) radio: Radio,
    pub(crate) table: DetectionTable,
}

impl ModelCache {
    pub fn new(cfg: &SlamConfig) -> Self {
        Self {
            radio: Radio::new(&cfg.radio),
            table: DetectionTable::new(&cfg.radio, cfg.u_max.max(60.0)),
        }
    }

    pub(crate) fn ln_fa(&self, z: &Measurement, ctx: FaContext, cfg: &SlamConfig) -> f64 {
        crate::measurement_model::ln_pdf_fa(z, ctx, &cfg.clutter, &cfg.radio).max(LN_FA_FLOOR)
    }
}

impl std::fmt::Debug for Radio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Radio")
            .field("rx", &self.rx)
            .field("tx", &self.tx)
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub agent: AgentState,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureParticle {
    pub pos: Point2,
    pub amp: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBelief {
    pub id: u64,
    /// Particle clouds conditioned on the VA and PS hypotheses; an empty
    /// cloud means the hypothesis is infeasible and its PMF entry is zero.
    pub clouds: [Vec<FeatureParticle>; 2],
    pub p_exist: f64,
    pub type_pmf: [f64; 2],
    pub birth_time: usize,
}

impl FeatureBelief {
    pub fn is_anchor(&self) -> bool {
        self.id == ANCHOR_ID
    }

    pub fn cloud(&self, ty: FeatureType) -> &[FeatureParticle] {
        &self.clouds[ty.index()]
    }

    /// Weighted mean position of one type hypothesis.
    pub fn mean_position(&self, ty: FeatureType) -> Option<Point2> {
        let cloud = self.cloud(ty);
        if cloud.is_empty() {
            return None;
        }
        let s: f64 = cloud.iter().map(|p| p.weight).sum();
        Some(
            cloud
                .iter()
                .fold(Point2::ORIGIN, |acc, p| acc + p.pos * (p.weight / s)),
        )
    }

    pub fn mean_amplitude(&self, ty: FeatureType) -> Option<f64> {
        let cloud = self.cloud(ty);
        if cloud.is_empty() {
            return None;
        }
        let s: f64 = cloud.iter().map(|p| p.weight).sum();
        Some(cloud.iter().map(|p| p.amp * p.weight).sum::<f64>() / s)
    }

    pub fn dominant_type(&self) -> FeatureType {
        if self.type_pmf[1] > self.type_pmf[0] {
            FeatureType::Ps
        } else {
            FeatureType::Va
        }
    }
}

/// Bookkeeping of one filter step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: usize,
    pub measurements: usize,
    /// Features carried into the step (`K_{n-1}`).
    pub legacy: usize,
    pub born: usize,
    /// Features after births, before pruning (`K_n`).
    pub before_prune: usize,
    pub pruned: usize,
    pub after: usize,
    pub bp_converged: bool,
    pub bp_iterations: usize,
    pub agent_resampled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapFeature {
    pub id: u64,
    /// Position under the more probable type.
    pub pos: Point2,
    pub type_pmf: [f64; 2],
    pub p_exist: f64,
    /// Mean position under each type hypothesis.
    pub mode_pos: [Option<Point2>; 2],
    pub birth_time: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub agent: AgentState,
    pub orientation: f64,
    pub map: Vec<MapFeature>,
}

#[derive(Debug, Clone)]
pub struct SlamState {
    pub step: usize,
    pub agent_particles: Vec<Particle>,
    pub features: Vec<FeatureBelief>,
    /// Number of feature ids issued so far (ids run 1..=k_count).
    pub k_count: u64,
    cache: Arc<ModelCache>,
}

/// `ln Σ exp(x_i)`, `-inf` for an empty or all `-inf` input.
pub(crate) fn ln_sum_exp(xs: &[f64]) -> f64 {
    let mut m = f64::NEG_INFINITY;
    let mut finite = 0usize;
    for &x in xs {
        if x > f64::NEG_INFINITY {
            finite += 1;
            if x > m {
                m = x;
            }
        }
    }
    // Most particle terms are gated out; skipping them saves the exp calls.
    if finite <= 1 || m == f64::INFINITY {
        return m;
    }
    let mut s = 0.0;
    for &x in xs {
        if x > f64::NEG_INFINITY {
            s += (x - m).exp();
        }
    }
    m + s.ln()
}

fn ln_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Normalized linear weights from log weights; `None` if all are `-inf`.
fn normalize_ln(ln_w: &[f64]) -> Option<Vec<f64>> {
    let m = ln_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return None;
    }
    let mut w: Vec<f64> = ln_w.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    Some(w)
}

/// Zeroes PMF entries of empty clouds and renormalizes.
fn mask_empty_modes(pmf: [f64; 2], clouds: &[Vec<FeatureParticle>; 2]) -> [f64; 2] {
    let mut p = pmf;
    for q in 0..2 {
        if clouds[q].is_empty() {
            p[q] = 0.0;
        }
    }
    let s = p[0] + p[1];
    if s > 0.0 {
        [p[0] / s, p[1] / s]
    } else if clouds[0].is_empty() {
        [0.0, 1.0]
    } else {
        [1.0, 0.0]
    }
}

/// Per feature and type hypothesis: everything the update needs about the
/// paired particles.
struct ModeEval {
    q: usize,
    ln_pi: f64,
    /// `ln` of the normalized paired weight `w_x w_y`.
    ln_omega: Vec<f64>,
    /// `ln(J w_y)`.
    ln_jwy: Vec<f64>,
    ln_miss: Vec<f64>,
    /// `ln(f p_d / (μ_fa f_fa))`, measurement-major.
    ln_g: Vec<f64>,
    /// Set for a fixed anchor, whose amplitude is marginalized instead of
    /// paired with the agent particles.
    amp_marginal: Option<AmpMarginal>,
}

/// The fixed anchor's state is its amplitude alone, which is a priori
/// independent of the agent. Pairing agent particle `j` with amplitude
/// particle `j` would need both to be right at once; under a diffuse
/// initial heading that almost never happens. Instead the geometric factor
/// is evaluated with noise levels at the measured amplitude and summed over
/// the agent cloud, and the amplitude factor is summed over the amplitude
/// cloud.
struct AmpMarginal {
    /// Geometric factor per measurement and agent particle, measurement-major.
    ln_geo: Vec<f64>,
    /// Rician factor per measurement and amplitude particle, measurement-major.
    ln_rice: Vec<f64>,
    /// Missed-detection log probability per amplitude particle.
    ln_missed: Vec<f64>,
}

struct FeatureEval {
    ln_r: f64,
    ln_one_minus_r: f64,
    modes: Vec<ModeEval>,
}

impl SlamState {
    pub fn new(cfg: &SlamConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.n_particles;
        let mut rng = stream(cfg.seed, tag::AGENT_INIT, 0, 0);
        let w = 1.0 / n as f64;
        let init = &cfg.init;
        let box_draw = |rng: &mut crate::rng::StreamRng, h: f64| {
            if h > 0.0 {
                rng.random_range(-h..=h)
            } else {
                0.0
            }
        };
        let agent_particles = (0..n)
            .map(|_| {
                let pos = init.pos
                    + Point2::new(
                        box_draw(&mut rng, init.pos_halfwidth),
                        box_draw(&mut rng, init.pos_halfwidth),
                    );
                let vel = init.vel
                    + Vector2::new(
                        box_draw(&mut rng, init.vel_halfwidth),
                        box_draw(&mut rng, init.vel_halfwidth),
                    );
                Particle {
                    agent: AgentState::new(pos, vel),
                    weight: w,
                }
            })
            .collect();
        let mut rng = stream(cfg.seed, tag::ANCHOR_INIT, 0, 0);
        let anchor_cloud = (0..n)
            .map(|_| {
                let pos = if cfg.anchor.estimate {
                    let ex: f64 = rng.sample(rand_distr::StandardNormal);
                    let ey: f64 = rng.sample(rand_distr::StandardNormal);
                    cfg.anchor.pos + Point2::new(ex, ey) * cfg.anchor.prior_sigma
                } else {
                    cfg.anchor.pos
                };
                // Uniform on (0, u_max].
                let amp = cfg.u_max * (1.0 - rng.random::<f64>());
                FeatureParticle {
                    pos,
                    amp,
                    weight: w,
                }
            })
            .collect();
        let anchor = FeatureBelief {
            id: ANCHOR_ID,
            clouds: [anchor_cloud, Vec::new()],
            p_exist: 1.0,
            type_pmf: [1.0, 0.0],
            birth_time: 0,
        };
        Ok(Self {
            step: 0,
            agent_particles,
            features: vec![anchor],
            k_count: 1,
            cache: Arc::new(ModelCache::new(cfg)),
        })
    }

    pub fn cache(&self) -> &ModelCache {
        &self.cache
    }

    fn anchor_positions(&self, cfg: &SlamConfig) -> Vec<Point2> {
        match self.features.iter().find(|f| f.is_anchor()) {
            Some(a) if cfg.anchor.estimate => a.clouds[0].iter().map(|p| p.pos).collect(),
            _ => vec![cfg.anchor.pos],
        }
    }

    fn predict(&mut self, cfg: &SlamConfig, n: u64) {
        let mut rng = stream(cfg.seed, tag::AGENT_PREDICT, n, 0);
        for p in self.agent_particles.iter_mut() {
            p.agent = predict_agent(&p.agent, &cfg.motion, &mut rng);
        }
        for f in self.features.iter_mut() {
            let anchor = f.is_anchor();
            for q in 0..2 {
                let mut rng = stream(cfg.seed, tag::FEATURE_PREDICT, n, f.id * 2 + q as u64);
                for p in f.clouds[q].iter_mut() {
                    let (pos, amp) =
                        predict_feature(p.pos, p.amp, &cfg.motion, &cfg.radio, &mut rng);
                    if !anchor || cfg.anchor.estimate {
                        p.pos = pos;
                    }
                    p.amp = amp;
                }
            }
            if !anchor {
                f.p_exist *= cfg.motion.p_s;
                // The PMF is a valid distribution by construction.
                let pmf = predict_type(f.type_pmf, &cfg.type_transition).unwrap_or(f.type_pmf);
                f.type_pmf = mask_empty_modes(pmf, &f.clouds);
            }
        }
    }

    fn evaluate_feature(
        &self,
        f: &FeatureBelief,
        z: &[Measurement],
        ln_fa: &[[f64; 2]],
        headings: &[f64],
        ln_wx: &[f64],
        anchors: &[Point2],
        cfg: &SlamConfig,
    ) -> FeatureEval {
        let j_count = self.agent_particles.len();
        let cache = &self.cache;
        let ln_mu_fa = cfg.clutter.mu_fa.ln();
        let is_los = f.is_anchor();
        let mut modes = Vec::new();
        for ty in FeatureType::ALL {
            let q = ty.index();
            let cloud = &f.clouds[q];
            if cloud.is_empty() || f.type_pmf[q] <= 0.0 {
                continue;
            }
            if is_los && !cfg.anchor.estimate {
                let mut me = self.evaluate_fixed_anchor(cloud, z, ln_fa, headings, ln_wx, cfg);
                me.q = q;
                me.ln_pi = f.type_pmf[q].ln();
                modes.push(me);
                continue;
            }
            let ctx = FaContext::for_path(ty, is_los);
            let ctx_i = match ctx {
                FaContext::VaPath => 0,
                FaContext::PsOrLosPath => 1,
            };
            let mut ln_omega = Vec::with_capacity(j_count);
            let mut ln_jwy = Vec::with_capacity(j_count);
            let mut ln_miss = Vec::with_capacity(j_count);
            let mut ln_g = vec![f64::NEG_INFINITY; z.len() * j_count];
            for j in 0..j_count {
                let x = &self.agent_particles[j].agent;
                let y = &cloud[j];
                let ln_wy = y.weight.ln();
                ln_omega.push(ln_wx[j] + ln_wy);
                ln_jwy.push((j_count as f64).ln() + ln_wy);
                let anchor = anchors[if anchors.len() == 1 { 0 } else { j }];
                let d = predicted_dist(ty, x.pos, y.pos, anchor);
                let gate = GATE_SIGMAS * sigma_dist(y.amp, &cfg.radio);
                if !z
                    .iter()
                    .any(|zm| (zm.dist - d).abs() <= gate && zm.amp >= cfg.radio.u_de)
                {
                    ln_miss.push(if y.amp > 0.0 {
                        cache.table.ln_missed(y.amp)
                    } else {
                        0.0
                    });
                    continue;
                }
                let path = PredictedPath::new(
                    ty,
                    is_los,
                    x.pos,
                    headings[j],
                    y.pos,
                    y.amp,
                    anchor,
                    cfg.anchor.aod_orientation,
                    &cache.radio,
                );
                match path {
                    Some(path) => {
                        ln_miss.push(cache.table.ln_missed(y.amp));
                        for (m, zm) in z.iter().enumerate() {
                            let l = path.ln_lhf_detected(zm, cfg.radio.u_de);
                            if l > f64::NEG_INFINITY {
                                ln_g[m * j_count + j] = l - ln_mu_fa - ln_fa[m][ctx_i];
                            }
                        }
                    }
                    None => ln_miss.push(0.0),
                }
            }
            let norm = ln_sum_exp(&ln_omega);
            ln_omega.iter_mut().for_each(|v| *v -= norm);
            modes.push(ModeEval {
                q,
                ln_pi: f.type_pmf[q].ln(),
                ln_omega,
                ln_jwy,
                ln_miss,
                ln_g,
                amp_marginal: None,
            });
        }
        let r = f.p_exist.clamp(0.0, 1.0);
        FeatureEval {
            ln_r: r.ln(),
            ln_one_minus_r: (1.0 - r).ln(),
            modes,
        }
    }

    fn evaluate_fixed_anchor(
        &self,
        cloud: &[FeatureParticle],
        z: &[Measurement],
        ln_fa: &[[f64; 2]],
        headings: &[f64],
        ln_wx: &[f64],
        cfg: &SlamConfig,
    ) -> ModeEval {
        let j_count = self.agent_particles.len();
        let cache = &self.cache;
        let u_de = cfg.radio.u_de;
        let ln_vy: Vec<f64> = cloud.iter().map(|p| p.weight.ln()).collect();
        let ln_missed: Vec<f64> = cloud.iter().map(|p| cache.table.ln_missed(p.amp)).collect();
        let scratch: Vec<f64> = ln_vy.iter().zip(&ln_missed).map(|(a, b)| a + b).collect();
        let ln_miss_mean = ln_sum_exp(&scratch);
        let mut ln_rice = vec![f64::NEG_INFINITY; z.len() * j_count];
        let mut ln_geo = vec![f64::NEG_INFINITY; z.len() * j_count];
        let mut ln_g = vec![f64::NEG_INFINITY; z.len() * j_count];
        let anchor = cfg.anchor.pos;
        for (m, zm) in z.iter().enumerate() {
            if zm.amp < u_de {
                continue;
            }
            let rice = &mut ln_rice[m * j_count..(m + 1) * j_count];
            for (i, p) in cloud.iter().enumerate() {
                rice[i] = ln_rician_pdf(zm.amp, p.amp, sigma_amp(p.amp, &cfg.radio));
            }
            let weighted: Vec<f64> = rice.iter().zip(&ln_vy).map(|(a, b)| a + b).collect();
            let ln_amp_mean = ln_sum_exp(&weighted);
            let ln_ratio = ln_amp_mean - cfg.clutter.mu_fa.ln() - ln_fa[m][1];
            let gate = GATE_SIGMAS * sigma_dist(zm.amp, &cfg.radio);
            for j in 0..j_count {
                let x = &self.agent_particles[j].agent;
                if (zm.dist - x.pos.distance(anchor)).abs() > gate {
                    continue;
                }
                let path = PredictedPath::new(
                    FeatureType::Va,
                    true,
                    x.pos,
                    headings[j],
                    anchor,
                    zm.amp,
                    anchor,
                    cfg.anchor.aod_orientation,
                    &cache.radio,
                );
                if let Some(path) = path {
                    let l = path.ln_geometry(zm, u_de);
                    ln_geo[m * j_count + j] = l;
                    ln_g[m * j_count + j] = l + ln_ratio;
                }
            }
        }
        let norm = ln_sum_exp(ln_wx);
        ModeEval {
            q: 0,
            ln_pi: 0.0,
            ln_omega: ln_wx.iter().map(|w| w - norm).collect(),
            ln_jwy: vec![0.0; j_count],
            ln_miss: vec![ln_miss_mean; j_count],
            ln_g,
            amp_marginal: Some(AmpMarginal {
                ln_geo,
                ln_rice,
                ln_missed,
            }),
        }
    }

    /// One filter step with the measurements of the next time instant.
    pub fn step(&mut self, z: &[Measurement], cfg: &SlamConfig) -> Result<StepReport> {
        let n = (self.step + 1) as u64;
        let j_count = self.agent_particles.len();
        let legacy = self.features.len();
        let m_count = z.len();

        // (1) prediction
        self.predict(cfg, n);

        let headings: Vec<f64> = self
            .agent_particles
            .iter()
            .map(|p| p.agent.vel.y.atan2(p.agent.vel.x))
            .collect();
        let ln_wx: Vec<f64> = {
            let s: f64 = self.agent_particles.iter().map(|p| p.weight).sum();
            self.agent_particles
                .iter()
                .map(|p| (p.weight / s).ln())
                .collect()
        };
        let anchors = self.anchor_positions(cfg);
        let ln_fa: Vec<[f64; 2]> = z
            .iter()
            .map(|m| {
                [
                    self.cache.ln_fa(m, FaContext::VaPath, cfg),
                    self.cache.ln_fa(m, FaContext::PsOrLosPath, cfg),
                ]
            })
            .collect();

        // (2) legacy weights
        let evals: Vec<FeatureEval> = self
            .features
            .iter()
            .map(|f| self.evaluate_feature(f, z, &ln_fa, &headings, &ln_wx, &anchors, cfg))
            .collect();
        let mut ln_beta = vec![vec![f64::NEG_INFINITY; m_count]; legacy];
        let mut ln_beta0 = vec![0.0; legacy];
        let mut scratch = vec![0.0; j_count];
        for (k, e) in evals.iter().enumerate() {
            let mut missed_terms = Vec::with_capacity(e.modes.len());
            for me in &e.modes {
                for j in 0..j_count {
                    scratch[j] = me.ln_omega[j] + me.ln_miss[j];
                }
                missed_terms.push(me.ln_pi + ln_sum_exp(&scratch));
            }
            ln_beta0[k] = ln_add(e.ln_one_minus_r, e.ln_r + ln_sum_exp(&missed_terms));
            for m in 0..m_count {
                let mut terms = Vec::with_capacity(e.modes.len());
                for me in &e.modes {
                    let g = &me.ln_g[m * j_count..(m + 1) * j_count];
                    for j in 0..j_count {
                        scratch[j] = me.ln_omega[j] + g[j];
                    }
                    terms.push(me.ln_pi + ln_sum_exp(&scratch));
                }
                ln_beta[k][m] = e.ln_r + ln_sum_exp(&terms);
            }
        }

        // (3) new-feature weights
        let births: Vec<BirthProposal> = z
            .iter()
            .enumerate()
            .map(|(m, zm)| {
                let mut rng = stream(cfg.seed, tag::BIRTH, n, m as u64);
                birth_proposal(
                    zm,
                    &self.agent_particles,
                    &anchors,
                    cfg,
                    &self.cache,
                    &mut rng,
                )
            })
            .collect::<Result<_>>()?;
        let ln_half = 0.5f64.ln();
        let ln_xi: Vec<f64> = births
            .iter()
            .map(|b| ln_add(ln_half + b.ln_xi[0], ln_half + b.ln_xi[1]))
            .collect();

        // (4) data association on rescaled weights
        let (nu_ln, p_new) = self.associate(&ln_beta, &ln_beta0, &ln_xi, cfg)?;
        let (bp_converged, bp_iterations) = (nu_ln.converged, nu_ln.iterations);

        // (5) agent reweighting
        let mut ln_x_all: Vec<Vec<Vec<f64>>> = Vec::with_capacity(legacy);
        let mut ln_gamma = vec![vec![0.0; j_count]; legacy];
        let mut ln_post: Vec<f64> = ln_wx.clone();
        let mut mterms = vec![0.0; m_count + 1];
        for (k, e) in evals.iter().enumerate() {
            let mut per_mode = Vec::with_capacity(e.modes.len());
            for me in &e.modes {
                let mut ln_x = Vec::with_capacity(j_count);
                for j in 0..j_count {
                    mterms[0] = me.ln_miss[j];
                    for m in 0..m_count {
                        mterms[m + 1] = me.ln_g[m * j_count + j] + nu_ln.ln_nu[k][m];
                    }
                    ln_x.push(ln_sum_exp(&mterms));
                }
                per_mode.push(ln_x);
            }
            let mut qterms = vec![0.0; e.modes.len()];
            for j in 0..j_count {
                for (i, me) in e.modes.iter().enumerate() {
                    qterms[i] = me.ln_pi + me.ln_jwy[j] + per_mode[i][j];
                }
                let g = ln_add(e.ln_one_minus_r, e.ln_r + ln_sum_exp(&qterms));
                ln_gamma[k][j] = g;
                ln_post[j] += g;
            }
            ln_x_all.push(per_mode);
        }
        let post_w = normalize_ln(&ln_post).ok_or(Error::FilterDivergence {
            step: n as usize,
            features: legacy,
            measurements: m_count,
        })?;
        let ln_post_norm: Vec<f64> = post_w.iter().map(|w| w.ln()).collect();

        // (6) feature update
        for (k, e) in evals.iter().enumerate() {
            let f = &mut self.features[k];
            let mut ln_pi_rho = [f64::NEG_INFINITY; 2];
            for (i, me) in e.modes.iter().enumerate() {
                let q = me.q;
                if let Some(am) = &me.amp_marginal {
                    let excl: Vec<f64> = (0..j_count)
                        .map(|j| {
                            if ln_post_norm[j] == f64::NEG_INFINITY {
                                f64::NEG_INFINITY
                            } else {
                                ln_post_norm[j] - ln_gamma[k][j]
                            }
                        })
                        .collect();
                    let ln_excl = ln_sum_exp(&excl);
                    // Per measurement: agent-averaged geometric factor over
                    // clutter, times the association message.
                    let h: Vec<f64> = (0..m_count)
                        .map(|m| {
                            let geo = &am.ln_geo[m * j_count..(m + 1) * j_count];
                            for j in 0..j_count {
                                scratch[j] = excl[j] + geo[j];
                            }
                            ln_sum_exp(&scratch) - ln_excl - cfg.clutter.mu_fa.ln() - ln_fa[m][1]
                                + nu_ln.ln_nu[k][m]
                        })
                        .collect();
                    let mut b = Vec::with_capacity(j_count);
                    for (i_p, p) in f.clouds[q].iter().enumerate() {
                        mterms[0] = am.ln_missed[i_p];
                        for m in 0..m_count {
                            mterms[m + 1] = am.ln_rice[m * j_count + i_p] + h[m];
                        }
                        b.push(p.weight.ln() + ln_sum_exp(&mterms));
                    }
                    let w = normalize_ln(&b).unwrap_or_else(|| vec![1.0 / j_count as f64; j_count]);
                    for (p, wj) in f.clouds[q].iter_mut().zip(w) {
                        p.weight = wj;
                    }
                    continue;
                }
                let ln_x = &ln_x_all[k][i];
                let mut a = Vec::with_capacity(j_count);
                let mut b = Vec::with_capacity(j_count);
                for j in 0..j_count {
                    let excl = if ln_post_norm[j] == f64::NEG_INFINITY {
                        f64::NEG_INFINITY
                    } else {
                        ln_post_norm[j] - ln_gamma[k][j]
                    };
                    let prior = f.clouds[q][j].weight.ln() + excl;
                    a.push(prior);
                    b.push(prior + ln_x[j]);
                }
                let ln_rho = ln_sum_exp(&b) - ln_sum_exp(&a);
                ln_pi_rho[q] = if ln_rho.is_nan() {
                    f64::NEG_INFINITY
                } else {
                    me.ln_pi + ln_rho
                };
                let w = normalize_ln(&b).unwrap_or_else(|| vec![1.0 / j_count as f64; j_count]);
                for (p, wj) in f.clouds[q].iter_mut().zip(w) {
                    p.weight = wj;
                }
            }
            if f.is_anchor() {
                continue;
            }
            let ln_a = e.ln_r + ln_add(ln_pi_rho[0], ln_pi_rho[1]);
            if ln_a.is_finite() {
                let r_pred = f.p_exist;
                f.p_exist = if r_pred >= 1.0 {
                    1.0
                } else {
                    1.0 / (1.0 + (1.0 - r_pred) * (-ln_a).exp())
                };
                let mx = ln_pi_rho[0].max(ln_pi_rho[1]);
                let p0 = (ln_pi_rho[0] - mx).exp();
                let p1 = (ln_pi_rho[1] - mx).exp();
                f.type_pmf = [p0 / (p0 + p1), p1 / (p0 + p1)];
            } else {
                f.p_exist = 0.0;
            }
        }
        for (p, w) in self.agent_particles.iter_mut().zip(post_w.iter()) {
            p.weight = *w;
        }

        // (7) births
        let mut born = 0;
        for (m, b) in births.into_iter().enumerate() {
            let mut clouds: [Vec<FeatureParticle>; 2] = [Vec::new(), Vec::new()];
            for q in 0..2 {
                let ln_w: Vec<f64> = b.samples[q]
                    .iter()
                    .zip(ln_post_norm.iter())
                    .map(|(s, lp)| s.ln_ratio + lp)
                    .collect();
                if let Some(w) = normalize_ln(&ln_w) {
                    clouds[q] = b.samples[q]
                        .iter()
                        .zip(w)
                        .map(|(s, w)| FeatureParticle {
                            pos: s.pos,
                            amp: s.amp,
                            weight: w,
                        })
                        .collect();
                }
            }
            if clouds[0].is_empty() && clouds[1].is_empty() {
                continue;
            }
            self.k_count += 1;
            born += 1;
            let type_pmf = mask_empty_modes([0.5, 0.5], &clouds);
            self.features.push(FeatureBelief {
                id: self.k_count,
                clouds,
                p_exist: p_new[m].clamp(0.0, 1.0),
                type_pmf,
                birth_time: n as usize,
            });
        }
        let before_prune = self.features.len();

        // (8) resampling
        let half = j_count as f64 * cfg.resample_threshold;
        let agent_w: Vec<f64> = self.agent_particles.iter().map(|p| p.weight).collect();
        let agent_resampled = effective_sample_size(&agent_w) < half;
        if agent_resampled {
            let mut rng = stream(cfg.seed, tag::RESAMPLE_AGENT, n, 0);
            let mut idx = systematic_indices(&agent_w, j_count, &mut rng)?;
            idx.shuffle(&mut rng);
            self.agent_particles = idx
                .iter()
                .map(|&a| self.agent_particles[a].clone())
                .collect();
            let w = 1.0 / j_count as f64;
            self.agent_particles.iter_mut().for_each(|p| p.weight = w);
            // A new feature particle was drawn given its agent particle and
            // is strongly correlated with it (a VA moves rigidly with the
            // agent). Carry the pairs along so that correlation survives
            // until the next update.
            for f in self.features[before_prune - born..].iter_mut() {
                for cloud in f.clouds.iter_mut().filter(|c| !c.is_empty()) {
                    let mut next: Vec<FeatureParticle> = idx
                        .iter()
                        .map(|&a| FeatureParticle {
                            weight: cloud[a].weight / agent_w[a],
                            ..cloud[a]
                        })
                        .collect();
                    let s: f64 = next.iter().map(|p| p.weight).sum();
                    if s > 0.0 && s.is_finite() {
                        next.iter_mut().for_each(|p| p.weight /= s);
                        *cloud = next;
                    }
                }
            }
        }
        for f in self.features.iter_mut() {
            let fixed_pos = f.is_anchor() && !cfg.anchor.estimate;
            // Newborn clouds stay paired with the agent until the next step.
            if agent_resampled && f.birth_time == n as usize {
                continue;
            }
            for q in 0..2 {
                let cloud = &mut f.clouds[q];
                if cloud.is_empty() {
                    continue;
                }
                let w: Vec<f64> = cloud.iter().map(|p| p.weight).collect();
                if effective_sample_size(&w) < half {
                    let mut rng = stream(cfg.seed, tag::RESAMPLE_FEATURE, n, f.id * 2 + q as u64);
                    let xs: Vec<[f64; 3]> =
                        cloud.iter().map(|p| [p.pos.x, p.pos.y, p.amp]).collect();
                    resample(cloud, &w, &mut rng)?;
                    let u = 1.0 / cloud.len() as f64;
                    cloud.iter_mut().for_each(|p| p.weight = u);
                    if cfg.feature_kernel_h > 0.0 {
                        let (mean, chol) = weighted_moments(&xs, &w);
                        for p in cloud.iter_mut() {
                            let mut x = [p.pos.x, p.pos.y, p.amp];
                            shrinkage_move(&mut x, &mean, &chol, cfg.feature_kernel_h, &mut rng);
                            if !fixed_pos {
                                p.pos = Point2::new(x[0], x[1]);
                            }
                            p.amp = x[2].max(AMPLITUDE_FLOOR);
                        }
                    }
                    if cfg.feature_roughening > 0.0 && !fixed_pos {
                        let s = cfg.feature_roughening;
                        for p in cloud.iter_mut() {
                            let dx: f64 = rng.sample(rand_distr::StandardNormal);
                            let dy: f64 = rng.sample(rand_distr::StandardNormal);
                            p.pos = Point2::new(p.pos.x + s * dx, p.pos.y + s * dy);
                        }
                    }
                }
            }
        }

        // (9) pruning
        self.features
            .retain(|f| f.is_anchor() || f.p_exist >= cfg.p_pr);
        let after = self.features.len();
        self.step += 1;
        Ok(StepReport {
            step: self.step,
            measurements: m_count,
            legacy,
            born,
            before_prune,
            pruned: before_prune - after,
            after,
            bp_converged,
            bp_iterations,
            agent_resampled,
        })
    }

    /// Runs BP on weights rescaled per measurement column and per feature
    /// row (both leave the marginals unchanged). Returns the log messages
    /// `ln ν_{m→k}` in the original scale and the existence probability of
    /// each new feature.
    fn associate(
        &self,
        ln_beta: &[Vec<f64>],
        ln_beta0: &[f64],
        ln_xi: &[f64],
        cfg: &SlamConfig,
    ) -> Result<(LnMessages, Vec<f64>)> {
        let k_count = ln_beta0.len();
        let m_count = ln_xi.len();
        let ln_u: Vec<f64> = ln_xi.iter().map(|&x| ln_add(0.0, x)).collect();
        let c: Vec<f64> = (0..m_count)
            .map(|m| (0..k_count).map(|k| ln_beta[k][m]).fold(ln_u[m], f64::max))
            .collect();
        let mut beta = vec![vec![0.0; m_count]; k_count];
        let mut beta0 = vec![0.0; k_count];
        for k in 0..k_count {
            let scaled: Vec<f64> = (0..m_count).map(|m| ln_beta[k][m] - c[m]).collect();
            let s = scaled.iter().copied().fold(ln_beta0[k], f64::max);
            beta0[k] = (ln_beta0[k] - s).exp();
            for m in 0..m_count {
                beta[k][m] = (scaled[m] - s).exp();
            }
        }
        let base: Vec<f64> = (0..m_count)
            .map(|m| (-c[m]).exp().max(f64::MIN_POSITIVE))
            .collect();
        let xi: Vec<f64> = (0..m_count).map(|m| (ln_xi[m] - c[m]).exp()).collect();
        let w = AssociationWeights::with_base(beta, beta0, xi, base)?;
        let msg = bp_messages(&w, cfg.bp_tol, cfg.bp_max_iter)?;
        let marg = marginals_from_messages(&w, &msg);
        let ln_nu = (0..k_count)
            .map(|k| (0..m_count).map(|m| msg.nu[k][m].ln() - c[m]).collect())
            .collect();
        let p_new = (0..m_count)
            .map(|m| {
                let u = w.base[m] + w.xi[m];
                if u > 0.0 {
                    marg.p_meas[m][0] * w.xi[m] / u
                } else {
                    0.0
                }
            })
            .collect();
        Ok((
            LnMessages {
                ln_nu,
                converged: msg.converged,
                iterations: msg.iterations,
            },
            p_new,
        ))
    }

    /// MMSE agent estimate and the detected map.
    pub fn estimate(&self, cfg: &SlamConfig) -> Estimate {
        let s: f64 = self.agent_particles.iter().map(|p| p.weight).sum();
        let (mut pos, mut vel) = (Point2::ORIGIN, Vector2::ORIGIN);
        for p in &self.agent_particles {
            pos += p.agent.pos * (p.weight / s);
            vel += p.agent.vel * (p.weight / s);
        }
        let agent = AgentState::new(pos, vel);
        let orientation = agent.orientation().unwrap_or(0.0);
        let map = self
            .features
            .iter()
            .filter(|f| f.p_exist >= cfg.p_de)
            .map(|f| {
                let mode_pos = [
                    f.mean_position(FeatureType::Va),
                    f.mean_position(FeatureType::Ps),
                ];
                let dom = f.dominant_type().index();
                let pos = mode_pos[dom]
                    .or(mode_pos[1 - dom])
                    .unwrap_or(Point2::ORIGIN);
                MapFeature {
                    id: f.id,
                    pos,
                    type_pmf: f.type_pmf,
                    p_exist: f.p_exist,
                    mode_pos,
                    birth_time: f.birth_time,
                }
            })
            .collect();
        Estimate {
            agent,
            orientation,
            map,
        }
    }

    /// Structural invariants that must hold between steps.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let s: f64 = self.agent_particles.iter().map(|p| p.weight).sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(format!("agent weights sum to {s}"));
        }
        let mut last_id = 0;
        for f in &self.features {
            if f.id <= last_id || f.id > self.k_count {
                return Err(format!("feature id {} out of order", f.id));
            }
            last_id = f.id;
            if !(0.0..=1.0).contains(&f.p_exist) {
                return Err(format!("feature {}: p_exist {}", f.id, f.p_exist));
            }
            let ps = f.type_pmf[0] + f.type_pmf[1];
            if (ps - 1.0).abs() > 1e-9 || f.type_pmf.iter().any(|p| *p < 0.0) {
                return Err(format!("feature {}: type PMF sums to {ps}", f.id));
            }
            for cloud in &f.clouds {
                if cloud.is_empty() {
                    continue;
                }
                let cs: f64 = cloud.iter().map(|p| p.weight).sum();
                if (cs - 1.0).abs() > 1e-9 {
                    return Err(format!("feature {}: cloud weights sum to {cs}", f.id));
                }
            }
        }
        Ok(())
    }
}

struct LnMessages {
    ln_nu: Vec<Vec<f64>>,
    converged: bool,
    iterations: usize,
}
