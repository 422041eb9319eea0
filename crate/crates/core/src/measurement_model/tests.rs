use super::*;
use crate::geometry::Vector2;
use approx::{assert_abs_diff_eq, assert_relative_eq};

fn agent(x: f64, y: f64, vx: f64, vy: f64) -> AgentState {
    AgentState {
        pos: Point2::new(x, y),
        vel: Vector2::new(vx, vy),
    }
}

#[test]
fn sigma_scaling_laws() {
    let p = RadioParams::default();
    let a = fisher_stddevs(10.0, &p, 0.3, -1.2).unwrap();
    let b = fisher_stddevs(20.0, &p, 0.3, -1.2).unwrap();
    assert_relative_eq!(b.dist, a.dist / 2.0, max_relative = 1e-14);
    assert_relative_eq!(b.aod, a.aod / 2.0, max_relative = 1e-14);
    assert_relative_eq!(b.aoa, a.aoa / 2.0, max_relative = 1e-14);
    assert!(b.amp > a.amp);
}

#[test]
fn sigma_amp_closed_form() {
    let p = RadioParams {
        n_rx: 16,
        n_tx: 16,
        n_f: 128,
        ..RadioParams::default()
    };
    let s = sigma_amp(10.0, &p);
    assert_relative_eq!(s * s, 0.5 + 100.0 / 131_072.0, max_relative = 1e-15);
    assert_abs_diff_eq!(s * s, 0.500763, epsilon = 1e-6);
}

#[test]
fn fisher_rejects_bad_inputs() {
    let p = RadioParams::default();
    assert!(fisher_stddevs(0.0, &p, 0.0, 0.0).is_err());
    let line = ArrayGeometry {
        elements: vec![
            ArrayElement {
                dist: 0.01,
                azimuth: 0.0,
                elevation: PI / 2.0,
            },
            ArrayElement {
                dist: 0.01,
                azimuth: PI,
                elevation: PI / 2.0,
            },
        ],
    };
    let p = RadioParams {
        tx_array: line,
        ..RadioParams::default()
    };
    // Endfire of a linear array along the x axis.
    assert_eq!(
        fisher_stddevs(10.0, &p, 0.0, 0.0),
        Err(Error::DegenerateAperture { angle: 0.0 })
    );
}

#[test]
fn aperture_examples() {
    let point = ArrayGeometry {
        elements: vec![ArrayElement {
            dist: 0.0,
            azimuth: 0.4,
            elevation: 1.0,
        }],
    };
    assert_eq!(squared_aperture(&point, 0.7), 0.0);
    let pair = ArrayGeometry {
        elements: vec![
            ArrayElement {
                dist: 1.0,
                azimuth: 0.0,
                elevation: PI / 2.0,
            },
            ArrayElement {
                dist: 1.0,
                azimuth: PI,
                elevation: PI / 2.0,
            },
        ],
    };
    assert_relative_eq!(squared_aperture(&pair, PI / 2.0), 1.0, max_relative = 1e-15);
}

#[test]
fn aperture_closed_form_matches_element_sum() {
    let arrays = [
        ArrayGeometry::uniform_circular(16, 0.02),
        ArrayGeometry {
            elements: (0..7)
                .map(|i| ArrayElement {
                    dist: 0.01 * (i as f64 + 0.5),
                    azimuth: 0.3 + 0.9 * i as f64,
                    elevation: 0.6 + 0.1 * i as f64,
                })
                .collect(),
        },
    ];
    for array in &arrays {
        let profile = ApertureProfile::new(array);
        for k in 0..50 {
            let angle = -PI + k as f64 * 0.13;
            let direct = squared_aperture(array, angle);
            assert_relative_eq!(
                profile.at(angle),
                direct,
                max_relative = 1e-12,
                epsilon = 1e-18
            );
            // π-periodic
            assert_relative_eq!(
                squared_aperture(array, angle + PI),
                direct,
                max_relative = 1e-10
            );
        }
    }
    assert!(ApertureProfile::new(&arrays[0]).is_isotropic());
}

#[test]
fn gaussian_factor_examples() {
    let sd = 0.05;
    let a = Point2::new(0.0, 0.0);
    let f = Point2::new(3.0, 4.0);
    let peak = pdf_dist(FeatureType::Va, 5.0, a, f, a, sd);
    assert_relative_eq!(peak, 1.0 / (sd * (2.0 * PI).sqrt()), max_relative = 1e-14);
    let up = pdf_dist(FeatureType::Va, 5.03, a, f, a, sd);
    let down = pdf_dist(FeatureType::Va, 4.97, a, f, a, sd);
    assert_relative_eq!(up, down, max_relative = 1e-12);
}

#[test]
fn aod_wraps_across_pi() {
    let anchor = Point2::new(0.0, 0.0);
    // Mean direction exactly -π (= π).
    let target = Point2::new(-1.0, 0.0);
    let s = 0.01;
    let eps = 1e-9;
    let a = pdf_aod(PI - eps, anchor, target, 0.0, s).unwrap();
    let b = pdf_aod(-PI + eps, anchor, target, 0.0, s).unwrap();
    assert_relative_eq!(a, b, max_relative = 1e-9);
    assert_relative_eq!(a, 1.0 / (s * (2.0 * PI).sqrt()), max_relative = 1e-6);
    assert!(pdf_aod(0.0, anchor, anchor, 0.0, s).is_err());
}

#[test]
fn aoa_uses_velocity_orientation() {
    let ag = agent(0.0, 0.0, 0.0, 2.0);
    let s = 0.02;
    // Feature straight ahead along +y: zero relative bearing.
    let peak = pdf_aoa(0.0, &ag, Point2::new(0.0, 5.0), s).unwrap();
    assert_relative_eq!(peak, 1.0 / (s * (2.0 * PI).sqrt()), max_relative = 1e-14);
    assert!(pdf_aoa(0.0, &agent(0.0, 0.0, 0.0, 0.0), Point2::new(1.0, 0.0), s).is_err());
}

#[test]
fn amplitude_density_below_threshold_is_zero() {
    let p = RadioParams::default();
    assert_eq!(pdf_amp(p.u_de - 1e-9, 10.0, &p).unwrap(), 0.0);
    assert!(pdf_amp(5.0, 0.0, &p).is_err());
}

#[test]
fn detection_prob_edges() {
    let p = RadioParams {
        u_de: 0.0,
        ..RadioParams::default()
    };
    assert_eq!(detection_prob(4.0, &p), 1.0);
    let p = RadioParams::default();
    let mut last = 0.0;
    for i in 1..400 {
        let pd = detection_prob(i as f64 * 0.05, &p);
        assert!((0.0..=1.0).contains(&pd));
        assert!(pd >= last - 1e-15);
        last = pd;
    }
}

#[test]
fn detection_table_tracks_direct_evaluation() {
    let p = RadioParams::default();
    let table = DetectionTable::new(&p, 60.0);
    for i in 0..300 {
        let u = 0.2 + i as f64 * 0.2137;
        let direct = ln_missed_detection_prob(u, &p);
        assert_abs_diff_eq!(
            table.ln_missed(u),
            direct,
            epsilon = 1e-3 * direct.abs().max(1.0)
        );
        let pd = detection_prob(u, &p);
        assert_abs_diff_eq!(table.ln_detect(u).exp(), pd, epsilon = 1e-4);
    }
    // Past the table end.
    let u = 75.0;
    assert_eq!(table.ln_missed(u), ln_missed_detection_prob(u, &p));
}

#[test]
fn false_alarm_factor_structure() {
    let p = RadioParams::default();
    let c = ClutterParams {
        mu_fa: 1.0,
        d_max: 40.0,
    };
    let z = Measurement {
        dist: 12.0,
        aod: 0.5,
        aoa: -2.0,
        amp: 3.5,
    };
    let rayl = ln_truncated_rayleigh(3.5, p.u_de).exp();
    let va = pdf_fa(&z, FaContext::VaPath, &c, &p);
    let ps = pdf_fa(&z, FaContext::PsOrLosPath, &c, &p);
    assert_relative_eq!(va, rayl / (40.0 * TAU), max_relative = 1e-14);
    assert_relative_eq!(ps, va / TAU, max_relative = 1e-14);
    let far = Measurement { dist: 40.5, ..z };
    assert_eq!(pdf_fa(&far, FaContext::VaPath, &c, &p), 0.0);
    let low = Measurement { amp: 2.0, ..z };
    assert_eq!(pdf_fa(&low, FaContext::PsOrLosPath, &c, &p), 0.0);
}

#[test]
fn joint_lhf_peaks_and_factor_absence() {
    let p = RadioParams::default();
    let ag = agent(1.0, 0.0, 0.1, 0.0);
    let va = Point2::new(0.0, -12.0);
    let u = 15.0;
    let d = dist_va(ag.pos, va);
    let aoa = bearing(ag.pos, va, 0.0).unwrap();
    let z = Measurement {
        dist: d,
        aod: 0.3,
        aoa,
        amp: u,
    };
    let lhf = joint_lhf(
        FeatureType::Va,
        false,
        &z,
        &ag,
        va,
        u,
        Point2::ORIGIN,
        0.0,
        &p,
    )
    .unwrap();
    let s = fisher_stddevs(u, &p, 0.0, aoa).unwrap();
    let modes = 1.0 / (s.dist * (2.0 * PI).sqrt()) / (s.aoa * (2.0 * PI).sqrt());
    let peak = pdf_amp(u, u, &p).unwrap();
    assert_relative_eq!(lhf, modes * peak, max_relative = 1e-12);
    let z2 = Measurement { aod: -2.9, ..z };
    let lhf2 = joint_lhf(
        FeatureType::Va,
        false,
        &z2,
        &ag,
        va,
        u,
        Point2::ORIGIN,
        0.0,
        &p,
    )
    .unwrap();
    assert_eq!(lhf, lhf2);
}

#[test]
fn joint_lhf_is_product_of_components() {
    let p = RadioParams::default();
    let ag = agent(2.0, 0.5, 0.08, 0.03);
    let anchor = Point2::new(0.0, 6.0);
    let feat = Point2::new(6.0, 3.0);
    let dphi = 0.2;
    let u = 12.5;
    let z = Measurement {
        dist: 10.3,
        aod: -0.4,
        aoa: 0.9,
        amp: 13.1,
    };
    let orient = ag.orientation().unwrap();
    let aoa_m = bearing(ag.pos, feat, orient).unwrap();
    let aod_m = bearing(anchor, feat, dphi).unwrap();
    let s = fisher_stddevs(u, &p, aod_m, aoa_m).unwrap();
    let expected = pdf_dist(FeatureType::Ps, z.dist, ag.pos, feat, anchor, s.dist)
        * pdf_aod(z.aod, anchor, feat, dphi, s.aod).unwrap()
        * pdf_aoa(z.aoa, &ag, feat, s.aoa).unwrap()
        * pdf_amp(z.amp, u, &p).unwrap();
    let got = joint_lhf(FeatureType::Ps, false, &z, &ag, feat, u, anchor, dphi, &p).unwrap();
    assert_eq!(got, expected);
}
