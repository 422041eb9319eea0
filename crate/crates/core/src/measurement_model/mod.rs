//! Measurement likelihoods for multipath components.
//!
//! A measurement is the 4-vector (distance, AOD, AOA, normalized amplitude)
//! produced by a snapshot channel estimator. Noise standard deviations follow
//! from the Fisher information at the component's normalized amplitude, the
//! amplitude itself is truncated-Rician at the detection threshold, and false
//! alarms are uniform in the geometric components with a truncated-Rayleigh
//! amplitude.

mod special;
mod table;

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::dynamics::AgentState;
use crate::geometry::{bearing, dist_ps, dist_va, wrap_angle, Point2};
use crate::{Error, Result};

pub use special::{
    ln_i0, ln_i0_scaled, ln_ik_scaled_sequence, ln_marcum_q1, ln_marcum_q1_complement, marcum_q1,
};
pub use table::DetectionTable;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub(crate) const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Map-feature type. VA features explain specular reflections (and the
/// line-of-sight path), PS features explain anchor → scatterer → agent paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureType {
    Va,
    Ps,
}

impl FeatureType {
    pub const ALL: [FeatureType; 2] = [FeatureType::Va, FeatureType::Ps];

    pub fn index(self) -> usize {
        match self {
            FeatureType::Va => 0,
            FeatureType::Ps => 1,
        }
    }
}

/// False-alarm density context; VA paths carry no departure-angle factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaContext {
    VaPath,
    PsOrLosPath,
}

impl FaContext {
    pub fn for_path(ty: FeatureType, is_los: bool) -> Self {
        match (ty, is_los) {
            (FeatureType::Va, false) => FaContext::VaPath,
            _ => FaContext::PsOrLosPath,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    /// Path length in meters.
    pub dist: f64,
    /// Angle of departure at the anchor, radians.
    pub aod: f64,
    /// Angle of arrival at the agent, radians.
    pub aoa: f64,
    /// Normalized amplitude (square root of the component SNR).
    pub amp: f64,
}

/// One antenna element relative to the array center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayElement {
    pub dist: f64,
    pub azimuth: f64,
    pub elevation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub elements: Vec<ArrayElement>,
}

impl ArrayGeometry {
    /// Horizontal uniform circular array; its aperture is isotropic in azimuth.
    pub fn uniform_circular(n: usize, radius: f64) -> Self {
        let elements = (0..n)
            .map(|i| ArrayElement {
                dist: radius,
                azimuth: TAU * i as f64 / n as f64,
                elevation: PI / 2.0,
            })
            .collect();
        Self { elements }
    }
}

/// Squared array aperture `D²(angle)` in m².
pub fn squared_aperture(array: &ArrayGeometry, angle: f64) -> f64 {
    let n = array.elements.len();
    if n == 0 {
        return 0.0;
    }
    let sum: f64 = array
        .elements
        .iter()
        .map(|e| {
            let v = e.dist * e.elevation.sin() * (e.azimuth - angle).sin();
            v * v
        })
        .sum();
    sum / n as f64
}

/// `D²(angle)` in closed form: the element sum reduces to
/// `a0 - ac cos 2α - as sin 2α`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApertureProfile {
    a0: f64,
    ac: f64,
    as_: f64,
}

impl ApertureProfile {
    pub fn new(array: &ArrayGeometry) -> Self {
        let n = array.elements.len().max(1) as f64;
        let (mut a0, mut ac, mut as_) = (0.0, 0.0, 0.0);
        for e in &array.elements {
            let c = (e.dist * e.elevation.sin()).powi(2);
            a0 += c;
            ac += c * (2.0 * e.azimuth).cos();
            as_ += c * (2.0 * e.azimuth).sin();
        }
        Self {
            a0: 0.5 * a0 / n,
            ac: 0.5 * ac / n,
            as_: 0.5 * as_ / n,
        }
    }

    pub fn at(&self, angle: f64) -> f64 {
        let (s, c) = (2.0 * angle).sin_cos();
        (self.a0 - self.ac * c - self.as_ * s).max(0.0)
    }

    /// True when the aperture does not depend on the angle.
    pub fn is_isotropic(&self) -> bool {
        self.ac.abs() <= 1e-12 * self.a0 && self.as_.abs() <= 1e-12 * self.a0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioParams {
    /// Root-mean-square bandwidth of the transmit pulse, Hz.
    pub beta_bw: f64,
    /// Carrier frequency, Hz.
    pub f_c: f64,
    /// Propagation speed, m/s.
    pub c: f64,
    pub n_rx: u32,
    pub n_tx: u32,
    pub n_f: u32,
    /// Detection threshold on the normalized amplitude.
    pub u_de: f64,
    pub tx_array: ArrayGeometry,
    pub rx_array: ArrayGeometry,
}

impl Default for RadioParams {
    /// 768 MHz flat spectrum at 28 GHz, 16-element circular arrays of 2 cm
    /// radius at both ends.
    fn default() -> Self {
        Self {
            beta_bw: 2.217e8,
            f_c: 28e9,
            c: SPEED_OF_LIGHT,
            n_rx: 16,
            n_tx: 16,
            n_f: 128,
            u_de: 3.0,
            tx_array: ArrayGeometry::uniform_circular(16, 0.02),
            rx_array: ArrayGeometry::uniform_circular(16, 0.02),
        }
    }
}

impl RadioParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [("beta_bw", self.beta_bw), ("f_c", self.f_c), ("c", self.c)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        if self.n_rx == 0 || self.n_tx == 0 || self.n_f == 0 {
            return Err(Error::param("n_rx/n_tx/n_f", "counts must be positive"));
        }
        if !(self.u_de >= 0.0 && self.u_de.is_finite()) {
            return Err(Error::param(
                "u_de",
                format!("must be >= 0, got {}", self.u_de),
            ));
        }
        if self.tx_array.elements.is_empty() || self.rx_array.elements.is_empty() {
            return Err(Error::param("tx_array/rx_array", "arrays must be nonempty"));
        }
        Ok(())
    }

    fn signal_samples(&self) -> f64 {
        self.n_rx as f64 * self.n_tx as f64 * self.n_f as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClutterParams {
    /// Mean number of false alarms per scan.
    pub mu_fa: f64,
    /// Upper end of the false-alarm distance support, meters.
    pub d_max: f64,
}

impl Default for ClutterParams {
    fn default() -> Self {
        Self {
            mu_fa: 1.0,
            d_max: 40.0,
        }
    }
}

impl ClutterParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu_fa >= 0.0 && self.mu_fa.is_finite()) {
            return Err(Error::param("mu_fa", "must be >= 0"));
        }
        if !(self.d_max > 0.0 && self.d_max.is_finite()) {
            return Err(Error::param("d_max", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherStddevs {
    pub dist: f64,
    pub aod: f64,
    pub aoa: f64,
    pub amp: f64,
}

/// Distance standard deviation `c / (√(8π²) β_bw u)`.
pub fn sigma_dist(u: f64, params: &RadioParams) -> f64 {
    params.c / ((8.0 * PI * PI).sqrt() * params.beta_bw * u)
}

/// Angle standard deviation for a squared aperture `aperture2` (m²).
pub fn sigma_angle(u: f64, aperture2: f64, params: &RadioParams) -> f64 {
    params.c / ((8.0 * PI * PI).sqrt() * params.f_c * u * aperture2.sqrt())
}

/// Amplitude scale `√(1/2 + u² / (4 N_rx N_tx N_f))`.
pub fn sigma_amp(u: f64, params: &RadioParams) -> f64 {
    (0.5 + u * u / (4.0 * params.signal_samples())).sqrt()
}

/// Squared apertures below this (m²) are treated as zero; it absorbs the
/// rounding of `sin` at multiples of π.
const MIN_APERTURE2: f64 = 1e-20;

pub fn fisher_stddevs(u: f64, params: &RadioParams, aod: f64, aoa: f64) -> Result<FisherStddevs> {
    if !(u > 0.0) {
        return Err(Error::param(
            "u",
            format!("normalized amplitude must be > 0, got {u}"),
        ));
    }
    let d_tx = squared_aperture(&params.tx_array, aod);
    if !(d_tx > MIN_APERTURE2) {
        return Err(Error::DegenerateAperture { angle: aod });
    }
    let d_rx = squared_aperture(&params.rx_array, aoa);
    if !(d_rx > MIN_APERTURE2) {
        return Err(Error::DegenerateAperture { angle: aoa });
    }
    Ok(FisherStddevs {
        dist: sigma_dist(u, params),
        aod: sigma_angle(u, d_tx, params),
        aoa: sigma_angle(u, d_rx, params),
        amp: sigma_amp(u, params),
    })
}

pub fn ln_gaussian(residual: f64, sigma: f64) -> f64 {
    let r = residual / sigma;
    -0.5 * r * r - sigma.ln() - LN_SQRT_2PI
}

pub fn gaussian_pdf(x: f64, mean: f64, sigma: f64) -> f64 {
    ln_gaussian(x - mean, sigma).exp()
}

/// Distance likelihood with the path length chosen by feature type. For VA
/// features `p_anchor` is unused.
pub fn pdf_dist(
    ty: FeatureType,
    z_d: f64,
    p_agent: Point2,
    p_feat: Point2,
    p_anchor: Point2,
    sigma_d: f64,
) -> f64 {
    let mean = match ty {
        FeatureType::Va => dist_va(p_agent, p_feat),
        FeatureType::Ps => dist_ps(p_agent, p_feat, p_anchor),
    };
    gaussian_pdf(z_d, mean, sigma_d)
}

/// Departure-angle likelihood. `target` is the agent for the line-of-sight
/// path and the scatterer for PS paths.
pub fn pdf_aod(
    z_aod: f64,
    p_anchor: Point2,
    target: Point2,
    delta_phi: f64,
    sigma: f64,
) -> Result<f64> {
    let mean = bearing(p_anchor, target, delta_phi)?;
    Ok(ln_gaussian(wrap_angle(z_aod - mean), sigma).exp())
}

/// Arrival-angle likelihood relative to the velocity-derived array
/// orientation.
pub fn pdf_aoa(z_aoa: f64, agent: &AgentState, p_feat: Point2, sigma: f64) -> Result<f64> {
    let orientation = agent.orientation()?;
    let mean = bearing(agent.pos, p_feat, orientation)?;
    Ok(ln_gaussian(wrap_angle(z_aoa - mean), sigma).exp())
}

/// Log-density of the (untruncated) Rician distribution.
pub fn ln_rician_pdf(z: f64, nu: f64, sigma: f64) -> f64 {
    if !(z > 0.0) {
        return f64::NEG_INFINITY;
    }
    let s2 = sigma * sigma;
    let x = z * nu / s2;
    z.ln() - s2.ln() - 0.5 * (z - nu) * (z - nu) / s2 + ln_i0_scaled(x)
}

/// Detection probability `Q_1(u/σ_u, u_de/σ_u)`.
pub fn detection_prob(u: f64, params: &RadioParams) -> f64 {
    let u = u.max(0.0);
    let s = sigma_amp(u, params);
    marcum_q1(u / s, params.u_de / s)
}

/// `ln p_d(u)`, accurate deep into the low-SNR tail.
pub fn ln_detection_prob(u: f64, params: &RadioParams) -> f64 {
    let u = u.max(0.0);
    let s = sigma_amp(u, params);
    ln_marcum_q1(u / s, params.u_de / s)
}

/// `ln(1 - p_d(u))`, accurate deep into the high-SNR tail.
pub fn ln_missed_detection_prob(u: f64, params: &RadioParams) -> f64 {
    let u = u.max(0.0);
    let s = sigma_amp(u, params);
    ln_marcum_q1_complement(u / s, params.u_de / s)
}

/// Log of the amplitude likelihood: Rician at location `u` truncated to
/// `[u_de, ∞)` and renormalized by the detection probability.
pub fn ln_pdf_amp(z_u: f64, u: f64, params: &RadioParams) -> Result<f64> {
    if !(u > 0.0) {
        return Err(Error::param(
            "u",
            format!("normalized amplitude must be > 0, got {u}"),
        ));
    }
    if z_u < params.u_de {
        return Ok(f64::NEG_INFINITY);
    }
    let s = sigma_amp(u, params);
    let ln_pd = if params.u_de > 0.0 {
        ln_detection_prob(u, params)
    } else {
        0.0
    };
    Ok(ln_rician_pdf(z_u, u, s) - ln_pd)
}

pub fn pdf_amp(z_u: f64, u: f64, params: &RadioParams) -> Result<f64> {
    Ok(ln_pdf_amp(z_u, u, params)?.exp())
}

/// Log of the unit-scale Rayleigh density truncated to `[u_de, ∞)`.
pub fn ln_truncated_rayleigh(z_u: f64, u_de: f64) -> f64 {
    if z_u < u_de || !(z_u > 0.0) {
        return f64::NEG_INFINITY;
    }
    z_u.ln() - 0.5 * (z_u * z_u - u_de * u_de)
}

/// Log false-alarm density of a measurement.
pub fn ln_pdf_fa(
    z: &Measurement,
    ctx: FaContext,
    clutter: &ClutterParams,
    params: &RadioParams,
) -> f64 {
    let angle_ok = |a: f64| (-PI..PI).contains(&a);
    if !(0.0..=clutter.d_max).contains(&z.dist) || !angle_ok(z.aoa) {
        return f64::NEG_INFINITY;
    }
    let mut ln = -clutter.d_max.ln() - TAU.ln() + ln_truncated_rayleigh(z.amp, params.u_de);
    if ctx == FaContext::PsOrLosPath {
        if !angle_ok(z.aod) {
            return f64::NEG_INFINITY;
        }
        ln -= TAU.ln();
    }
    ln
}

pub fn pdf_fa(
    z: &Measurement,
    ctx: FaContext,
    clutter: &ClutterParams,
    params: &RadioParams,
) -> f64 {
    ln_pdf_fa(z, ctx, clutter, params).exp()
}

/// Joint likelihood of one measurement given the agent and one feature.
///
/// * VA, not LOS: distance × AOA × amplitude.
/// * VA, LOS (`feat_pos` is the anchor): adds the AOD factor toward the agent.
/// * PS: PS distance × AOD toward the scatterer × AOA × amplitude.
///
/// Noise levels are evaluated at `feat_amp` and at the angles predicted by
/// the state.
#[allow(clippy::too_many_arguments)]
pub fn joint_lhf(
    ty: FeatureType,
    is_los: bool,
    z: &Measurement,
    agent: &AgentState,
    feat_pos: Point2,
    feat_amp: f64,
    anchor: Point2,
    delta_phi: f64,
    params: &RadioParams,
) -> Result<f64> {
    if !(feat_amp > 0.0) {
        return Err(Error::param("feat_amp", "must be > 0"));
    }
    let orientation = agent.orientation()?;
    let aoa_mean = bearing(agent.pos, feat_pos, orientation)?;
    let sd = sigma_dist(feat_amp, params);
    let s_aoa = angle_sigma_checked(feat_amp, &params.rx_array, aoa_mean, params)?;
    let f_d = pdf_dist(ty, z.dist, agent.pos, feat_pos, anchor, sd);
    let f_aoa = pdf_aoa(z.aoa, agent, feat_pos, s_aoa)?;
    let f_u = pdf_amp(z.amp, feat_amp, params)?;
    match (ty, is_los) {
        (FeatureType::Va, false) => Ok(f_d * f_aoa * f_u),
        (FeatureType::Va, true) => {
            let aod_mean = bearing(anchor, agent.pos, delta_phi)?;
            let s_aod = angle_sigma_checked(feat_amp, &params.tx_array, aod_mean, params)?;
            let f_aod = pdf_aod(z.aod, anchor, agent.pos, delta_phi, s_aod)?;
            Ok(f_d * f_aod * f_aoa * f_u)
        }
        (FeatureType::Ps, _) => {
            let aod_mean = bearing(anchor, feat_pos, delta_phi)?;
            let s_aod = angle_sigma_checked(feat_amp, &params.tx_array, aod_mean, params)?;
            let f_aod = pdf_aod(z.aod, anchor, feat_pos, delta_phi, s_aod)?;
            Ok(f_d * f_aod * f_aoa * f_u)
        }
    }
}

fn angle_sigma_checked(
    u: f64,
    array: &ArrayGeometry,
    angle: f64,
    params: &RadioParams,
) -> Result<f64> {
    let d2 = squared_aperture(array, angle);
    if !(d2 > 0.0) {
        return Err(Error::DegenerateAperture { angle });
    }
    Ok(sigma_angle(u, d2, params))
}

#[cfg(test)]
mod tests;
