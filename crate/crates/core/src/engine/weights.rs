//! Legacy-feature and new-feature association weights.

use crate::dynamics::AgentState;
use crate::geometry::{wrap_angle, Point2};
use crate::measurement_model::{
    detection_prob, joint_lhf, ln_i0_scaled, pdf_fa, sigma_amp, ApertureProfile, FaContext,
    FeatureType, Measurement, RadioParams,
};
use std::f64::consts::PI;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;
use crate::Result;

use super::SlamConfig;

/// Weight of legacy feature hypothesis `a_k` for one agent/feature state.
///
/// `assigned` is the measurement for `a_k = m` and `None` for `a_k = 0`. A
/// nonexistent feature contributes the indicator of `a_k = 0`.
#[allow(clippy::too_many_arguments)]
pub fn weight_legacy(
    ty: FeatureType,
    is_los: bool,
    exists: bool,
    assigned: Option<&Measurement>,
    agent: &AgentState,
    feat_pos: Point2,
    feat_amp: f64,
    cfg: &SlamConfig,
) -> Result<f64> {
    if !exists {
        return Ok(if assigned.is_none() { 1.0 } else { 0.0 });
    }
    let pd = detection_prob(feat_amp, &cfg.radio);
    match assigned {
        None => Ok(1.0 - pd),
        Some(z) => {
            let f = joint_lhf(
                ty,
                is_los,
                z,
                agent,
                feat_pos,
                feat_amp,
                cfg.anchor.pos,
                cfg.anchor.aod_orientation,
                &cfg.radio,
            )?;
            let fa = pdf_fa(z, FaContext::for_path(ty, is_los), &cfg.clutter, &cfg.radio);
            Ok(f * pd / (cfg.clutter.mu_fa * fa))
        }
    }
}

/// Weight of a new feature born from `z` under hypothesis `ā_m`: zero when
/// the measurement is claimed by legacy feature `abar_m ≥ 1`. `f_n` is the
/// birth density evaluated at the feature state.
#[allow(clippy::too_many_arguments)]
pub fn weight_new(
    z: &Measurement,
    abar_m: usize,
    ty: FeatureType,
    agent: &AgentState,
    feat_pos: Point2,
    feat_amp: f64,
    f_n: f64,
    cfg: &SlamConfig,
) -> Result<f64> {
    if abar_m != 0 || cfg.mu_n == 0.0 {
        return Ok(0.0);
    }
    let f = joint_lhf(
        ty,
        false,
        z,
        agent,
        feat_pos,
        feat_amp,
        cfg.anchor.pos,
        cfg.anchor.aod_orientation,
        &cfg.radio,
    )?;
    let fa = pdf_fa(z, FaContext::for_path(ty, false), &cfg.clutter, &cfg.radio);
    Ok(cfg.mu_n * f_n * f / (cfg.clutter.mu_fa * fa))
}

/// Distance residuals beyond this many standard deviations are treated as
/// impossible; the Gaussian factor alone is then below e^-1000.
pub(crate) const GATE_SIGMAS: f64 = 45.0;

/// Radio parameters with the array profiles and the log-constants of the
/// noise laws precomputed.
pub(crate) struct Radio {
    pub params: RadioParams,
    pub rx: ApertureProfile,
    pub tx: ApertureProfile,
    kd: f64,
    ka: f64,
    ln_kd: f64,
    ln_ka: f64,
    // (D², ln D²) of arrays whose aperture does not depend on the angle.
    rx_iso: Option<(f64, f64)>,
    tx_iso: Option<(f64, f64)>,
}

impl Radio {
    pub fn new(params: &RadioParams) -> Self {
        let rx = ApertureProfile::new(&params.rx_array);
        let tx = ApertureProfile::new(&params.tx_array);
        let k = (8.0 * PI * PI).sqrt();
        let iso = |a: &ApertureProfile| a.is_isotropic().then(|| (a.at(0.0), a.at(0.0).ln()));
        let kd = params.c / (k * params.beta_bw);
        let ka = params.c / (k * params.f_c);
        Self {
            params: params.clone(),
            kd,
            ka,
            ln_kd: kd.ln(),
            ln_ka: ka.ln(),
            rx_iso: iso(&rx),
            tx_iso: iso(&tx),
            rx,
            tx,
        }
    }

    fn rx_at(&self, angle: f64) -> f64 {
        self.rx_iso.map_or_else(|| self.rx.at(angle), |(d, _)| d)
    }

    fn tx_at(&self, angle: f64) -> f64 {
        self.tx_iso.map_or_else(|| self.tx.at(angle), |(d, _)| d)
    }

    fn rx_ln(&self, d2: f64) -> f64 {
        self.rx_iso.map_or_else(|| d2.ln(), |(_, l)| l)
    }

    fn tx_ln(&self, d2: f64) -> f64 {
        self.tx_iso.map_or_else(|| d2.ln(), |(_, l)| l)
    }
}

/// Predicted path length, the cheap first stage of [`PredictedPath::new`].
pub(crate) fn predicted_dist(ty: FeatureType, agent: Point2, feat: Point2, anchor: Point2) -> f64 {
    match ty {
        FeatureType::Va => (feat - agent).norm(),
        FeatureType::Ps => (feat - anchor).norm() + (feat - agent).norm(),
    }
}

/// Predicted path parameters and noise levels for one (agent, feature)
/// particle pair.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PredictedPath {
    pub dist: f64,
    pub aoa: f64,
    pub aod: Option<f64>,
    pub amp: f64,
    pub s_dist: f64,
    pub s_aoa: f64,
    pub s_aod: f64,
    pub s_amp: f64,
    // Sum of the log normalizers of all Gaussian factors.
    ln_norm: f64,
}

impl PredictedPath {
    /// `None` if the geometry is degenerate (coincident points or zero
    /// aperture), in which case the pair carries no likelihood.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        ty: FeatureType,
        is_los: bool,
        agent: Point2,
        heading: f64,
        feat: Point2,
        amp: f64,
        anchor: Point2,
        delta_phi: f64,
        radio: &Radio,
    ) -> Option<Self> {
        let to_feat = feat - agent;
        if to_feat.x == 0.0 && to_feat.y == 0.0 || !(amp > 0.0) {
            return None;
        }
        let aoa = wrap_angle(to_feat.angle() - heading);
        let (dist, aod) = match (ty, is_los) {
            (FeatureType::Va, false) => (to_feat.norm(), None),
            (FeatureType::Va, true) => (
                to_feat.norm(),
                Some(wrap_angle((-to_feat).angle() - delta_phi)),
            ),
            (FeatureType::Ps, _) => {
                let leg = feat - anchor;
                if leg.x == 0.0 && leg.y == 0.0 {
                    return None;
                }
                (
                    leg.norm() + to_feat.norm(),
                    Some(wrap_angle(leg.angle() - delta_phi)),
                )
            }
        };
        let p = &radio.params;
        let d_rx = radio.rx_at(aoa);
        if !(d_rx > 0.0) {
            return None;
        }
        let ln_u = amp.ln();
        let s2_amp = sigma_amp(amp, p).powi(2);
        let ln_s_dist = radio.ln_kd - ln_u;
        let ln_s_aoa = radio.ln_ka - ln_u - 0.5 * radio.rx_ln(d_rx);
        let mut ln_norm = -ln_s_dist - ln_s_aoa - 2.0 * LN_SQRT_2PI;
        let s_aod = match aod {
            Some(a) => {
                let d_tx = radio.tx_at(a);
                if !(d_tx > 0.0) {
                    return None;
                }
                let ln_s = radio.ln_ka - ln_u - 0.5 * radio.tx_ln(d_tx);
                ln_norm -= ln_s + LN_SQRT_2PI;
                radio.ka / (amp * d_tx.sqrt())
            }
            None => 0.0,
        };
        Some(Self {
            dist,
            aoa,
            aod,
            amp,
            s_dist: radio.kd / amp,
            s_aoa: radio.ka / (amp * d_rx.sqrt()),
            s_aod,
            s_amp: s2_amp.sqrt(),
            ln_norm,
        })
    }

    /// `ln(f(z) p_d)`: the joint likelihood times the detection probability,
    /// which for the truncated amplitude density is the plain Rician.
    /// Returns `-inf` outside the distance gate.
    pub fn ln_lhf_detected(&self, z: &Measurement, u_de: f64) -> f64 {
        let geo = self.ln_geometry(z, u_de);
        if geo == f64::NEG_INFINITY {
            return geo;
        }
        let s2 = self.s_amp * self.s_amp;
        let du = z.amp - self.amp;
        geo - s2.ln() + z.amp.ln() - 0.5 * du * du / s2 + ln_i0_scaled(z.amp * self.amp / s2)
    }

    /// Log density of the distance and angle components alone, `-inf`
    /// outside the distance gate or below the detection threshold.
    pub fn ln_geometry(&self, z: &Measurement, u_de: f64) -> f64 {
        let rd = (z.dist - self.dist) / self.s_dist;
        if rd.abs() > GATE_SIGMAS || z.amp < u_de {
            return f64::NEG_INFINITY;
        }
        let ra = wrap_angle(z.aoa - self.aoa) / self.s_aoa;
        let mut q = rd * rd + ra * ra;
        if let Some(aod) = self.aod {
            let r = wrap_angle(z.aod - aod) / self.s_aod;
            q += r * r;
        }
        self.ln_norm - 0.5 * q
    }
}
