use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::geometry::{invert_ps, invert_va, Point2};
use crate::measurement_model::{
    ln_gaussian, sigma_amp, sigma_angle, sigma_dist, FaContext, FeatureType, Measurement,
};
use crate::{Error, Result};

use super::weights::PredictedPath;
use super::{ln_sum_exp, ModelCache, Particle, SlamConfig};

/// One proposal sample of a new feature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BirthSample {
    pub pos: Point2,
    pub amp: f64,
    /// `ln(h / q)`: new-feature weight over proposal density. `-inf` when
    /// the sample is outside the birth support or the geometry has no
    /// solution.
    pub ln_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BirthProposal {
    /// Samples per feature type, one per agent particle (same index).
    pub samples: [Vec<BirthSample>; 2],
    /// `ln ξ_q`: agent-weighted importance estimate of the integrated
    /// new-feature weight for each type.
    pub ln_xi: [f64; 2],
}

/// Log of the birth density. New features are uniform in the
/// agent-relative measurement coordinates: distance on `[0, d_max]`,
/// arrival angle on the circle, amplitude on `(0, u_max]`.
pub fn ln_birth_density(cfg: &SlamConfig) -> f64 {
    -(cfg.clutter.d_max * TAU * cfg.u_max).ln()
}

/// Draws new-feature samples from a measurement.
///
/// For every agent particle, distance, arrival angle and amplitude are drawn
/// from Gaussians centered on the measurement with the Fisher deviations at
/// the measured amplitude, and converted to a VA position (straight ray) and
/// a PS position (anchor → scatterer → agent ellipse). `anchors` is either a
/// single anchor position or one per agent particle.
pub fn birth_proposal<R: Rng + ?Sized>(
    z: &Measurement,
    agents: &[Particle],
    anchors: &[Point2],
    cfg: &SlamConfig,
    cache: &ModelCache,
    rng: &mut R,
) -> Result<BirthProposal> {
    if !(z.amp > 0.0) || !z.dist.is_finite() || !z.aoa.is_finite() {
        return Err(Error::param("measurement", "invalid birth measurement"));
    }
    if anchors.is_empty() {
        return Err(Error::param("anchors", "need at least one anchor position"));
    }
    let p = &cfg.radio;
    let s_d = sigma_dist(z.amp, p);
    let s_a = sigma_angle(z.amp, cache.radio.rx.at(z.aoa).max(f64::MIN_POSITIVE), p);
    let s_u = sigma_amp(z.amp, p);
    let ln_fn = ln_birth_density(cfg);
    let ln_fa = [
        cache.ln_fa(z, FaContext::VaPath, cfg),
        cache.ln_fa(z, FaContext::PsOrLosPath, cfg),
    ];
    let ln_const = cfg.mu_n.ln() + ln_fn - cfg.clutter.mu_fa.ln();

    let mut samples: [Vec<BirthSample>; 2] = [
        Vec::with_capacity(agents.len()),
        Vec::with_capacity(agents.len()),
    ];
    let mut terms: [Vec<f64>; 2] = [
        Vec::with_capacity(agents.len()),
        Vec::with_capacity(agents.len()),
    ];
    for (j, x) in agents.iter().enumerate() {
        let e: [f64; 3] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        let d = z.dist + s_d * e[0];
        let aoa = z.aoa + s_a * e[1];
        let u = z.amp + s_u * e[2];
        let ln_q = ln_gaussian(d - z.dist, s_d)
            + ln_gaussian(aoa - z.aoa, s_a)
            + ln_gaussian(u - z.amp, s_u);
        let heading = x.agent.vel.y.atan2(x.agent.vel.x);
        let anchor = anchors[if anchors.len() == 1 { 0 } else { j }];
        let in_support = d > 0.0 && d <= cfg.clutter.d_max && u > 0.0 && u <= cfg.u_max;
        for ty in FeatureType::ALL {
            let pos = match ty {
                FeatureType::Va => Some(invert_va(x.agent.pos, heading, d, aoa)),
                FeatureType::Ps => invert_ps(x.agent.pos, heading, anchor, d, aoa),
            };
            let ln_ratio = match pos {
                Some(pos) if in_support && cfg.mu_n > 0.0 => PredictedPath::new(
                    ty,
                    false,
                    x.agent.pos,
                    heading,
                    pos,
                    u,
                    anchor,
                    cfg.anchor.aod_orientation,
                    &cache.radio,
                )
                .map(|path| {
                    let ln_f = path.ln_lhf_detected(z, p.u_de) - cache.table.ln_detect(u);
                    ln_const + ln_f - ln_fa[ty.index()] - ln_q
                })
                .filter(|v| !v.is_nan())
                .unwrap_or(f64::NEG_INFINITY),
                _ => f64::NEG_INFINITY,
            };
            // Infeasible samples keep a placeholder position and zero weight.
            let pos = pos.unwrap_or(x.agent.pos);
            samples[ty.index()].push(BirthSample {
                pos,
                amp: u,
                ln_ratio,
            });
            terms[ty.index()].push(x.weight.ln() + ln_ratio);
        }
    }
    let ln_xi = [ln_sum_exp(&terms[0]), ln_sum_exp(&terms[1])];
    Ok(BirthProposal { samples, ln_xi })
}
