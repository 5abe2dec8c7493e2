//! Logs with planted coefficients, passed through the same filters and
//! sensor noise as a closed-loop run. Excitation starts from rest so that
//! the filtered relations hold exactly in the noiseless case.

use std::f64::consts::TAU;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::attitude::AngularAccelEstimator;
use crate::filters::Butter2Lowpass;
use crate::log::LogRecord;
use crate::sim::SensorConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseLevels {
    pub gyro_sigma: f64,
    pub accel_sigma: f64,
    pub pitot_sigma: f64,
}

impl NoiseLevels {
    pub fn none() -> Self {
        Self {
            gyro_sigma: 0.0,
            accel_sigma: 0.0,
            pitot_sigma: 0.0,
        }
    }

    /// The default sensor suite's noise.
    pub fn sensors() -> Self {
        let s = SensorConfig::default();
        Self {
            gyro_sigma: s.gyro_sigma,
            accel_sigma: s.accel_sigma,
            pitot_sigma: s.pitot_sigma,
        }
    }
}

struct Noise {
    rng: ChaCha8Rng,
}

impl Noise {
    fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn sample(&mut self, sigma: f64) -> f64 {
        if sigma == 0.0 {
            0.0
        } else {
            sigma * self.rng.sample::<f64, _>(StandardNormal)
        }
    }
}

fn multisine(t: f64, terms: &[(f64, f64, f64)]) -> f64 {
    terms
        .iter()
        .map(|&(a, f, ph)| a * (TAU * f * t + ph).sin())
        .sum()
}

/// Constant-θ, constant-V segments with flap excitation; pitch
/// effectiveness follows a + b·V².
#[derive(Debug, Clone, PartialEq)]
pub struct EffectivenessSpec {
    pub g21_a: f64,
    pub g21_b: f64,
    pub g31: f64,
    /// (θ rad, airspeed m/s) per segment.
    pub segments: Vec<(f64, f64)>,
    pub segment_len: f64,
    /// Peak flap command of the excitation.
    pub amplitude: f64,
    pub sample_hz: f64,
    pub inner_cutoff_hz: f64,
}

impl Default for EffectivenessSpec {
    fn default() -> Self {
        Self {
            g21_a: -2.4e-3,
            g21_b: -3.1e-5,
            g31: -8.0e-3,
            segments: [
                (-60.0, 8.0),
                (-70.0, 11.0),
                (-75.0, 14.0),
                (-80.0, 17.0),
                (-85.0, 20.0),
            ]
            .iter()
            .map(|&(th, v): &(f64, f64)| (th.to_radians(), v))
            .collect(),
            segment_len: 10.0,
            amplitude: 1500.0,
            sample_hz: 500.0,
            inner_cutoff_hz: 8.0,
        }
    }
}

impl EffectivenessSpec {
    pub fn pitch_effectiveness(&self, v: f64) -> f64 {
        self.g21_a + self.g21_b * v * v
    }
}

/// Quiet first and last second of each segment, smooth in between.
fn envelope(tau: f64, len: f64) -> f64 {
    let quiet = 1.0;
    if tau < quiet || tau > len - quiet {
        0.0
    } else {
        (std::f64::consts::PI * (tau - quiet) / (len - 2.0 * quiet))
            .sin()
            .powi(2)
    }
}

pub fn effectiveness_log(
    spec: &EffectivenessSpec,
    noise: &NoiseLevels,
    seed: u64,
) -> Vec<LogRecord> {
    let fs = spec.sample_hz;
    let dt = 1.0 / fs;
    let per_seg = (spec.segment_len * fs).round() as usize;
    let mut rng = Noise::new(seed);
    let mut est = AngularAccelEstimator::new(spec.inner_cutoff_hz, fs);
    let mut uf: [Butter2Lowpass; 2] =
        std::array::from_fn(|_| Butter2Lowpass::new(spec.inner_cutoff_hz, fs));
    let mut omega = Vector3::zeros();
    let mut out = Vec::with_capacity(per_seg * spec.segments.len());
    for (s, &(theta, v)) in spec.segments.iter().enumerate() {
        let g21 = spec.pitch_effectiveness(v);
        for k in 0..per_seg {
            let tau = k as f64 * dt;
            let t = (s * per_seg + k) as f64 * dt;
            let e = spec.amplitude * envelope(tau, spec.segment_len);
            let u0 = e * multisine(tau, &[(0.6, 1.3, 0.0), (0.4, 3.1, 0.5)]);
            let u1 = e * multisine(tau, &[(0.5, 0.9, 0.2), (0.5, 2.3, 1.1)]);
            let omega_dot = Vector3::new(0.0, g21 * (u0 - u1), spec.g31 * (u0 + u1));
            omega += omega_dot * dt;
            let gyro = omega
                + Vector3::new(
                    0.0,
                    rng.sample(noise.gyro_sigma),
                    rng.sample(noise.gyro_sigma),
                );
            let (_, omega_dot_f) = est.step(gyro).expect("finite");
            let airspeed = v + rng.sample(noise.pitot_sigma);
            out.push(LogRecord {
                t,
                theta,
                p: gyro.x,
                q: gyro.y,
                r: gyro.z,
                p_dot_f: omega_dot_f.x,
                q_dot_f: omega_dot_f.y,
                r_dot_f: omega_dot_f.z,
                u_flap_l: u0,
                u_flap_r: u1,
                uf_flap_l: uf[0].step(u0).expect("finite"),
                uf_flap_r: uf[1].step(u1).expect("finite"),
                airspeed,
                airspeed_valid: (v >= 6.0) as u8,
                airspeed_true: v,
                ..LogRecord::default()
            });
        }
    }
    out
}

/// Lateral specific force generated from sideslip by β = c2·f_y + b2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SideslipSpec {
    pub c2: f64,
    pub b2: f64,
    pub duration: f64,
    pub airspeed_mean: f64,
    pub airspeed_amplitude: f64,
    pub beta_amplitude: f64,
    pub sample_hz: f64,
    pub lateral_cutoff_hz: f64,
}

impl Default for SideslipSpec {
    fn default() -> Self {
        Self {
            c2: 0.05,
            b2: 0.01,
            duration: 60.0,
            airspeed_mean: 14.0,
            airspeed_amplitude: 3.0,
            beta_amplitude: 0.15,
            sample_hz: 500.0,
            lateral_cutoff_hz: 5.0,
        }
    }
}

pub fn sideslip_log(spec: &SideslipSpec, noise: &NoiseLevels, seed: u64) -> Vec<LogRecord> {
    let fs = spec.sample_hz;
    let n = (spec.duration * fs).round() as usize;
    let mut rng = Noise::new(seed);
    let mut fy_lp = Butter2Lowpass::new(spec.lateral_cutoff_hz, fs);
    (0..n)
        .map(|k| {
            let t = k as f64 / fs;
            let beta = spec.beta_amplitude * multisine(t, &[(0.6, 0.23, 0.0), (0.4, 0.71, 1.0)]);
            let v = spec.airspeed_mean + spec.airspeed_amplitude * (TAU * 0.05 * t).sin();
            let f_y = (beta - spec.b2) / spec.c2;
            LogRecord {
                t,
                fy_f: fy_lp
                    .step(f_y + rng.sample(noise.accel_sigma))
                    .expect("finite"),
                beta_true: beta,
                airspeed: v + rng.sample(noise.pitot_sigma),
                airspeed_valid: 1,
                airspeed_true: v,
                ..LogRecord::default()
            }
        })
        .collect()
}

/// Body-X specific force = b0 + bq·q + bθ·θ + G_flap·(−u_f0 + u_f1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlapLiftSpec {
    pub b0: f64,
    pub bq: f64,
    pub btheta: f64,
    pub g_flap: f64,
    pub duration: f64,
    pub theta_amplitude: f64,
    pub flap_amplitude: f64,
    pub sample_hz: f64,
    pub outer_cutoff_hz: f64,
}

impl Default for FlapLiftSpec {
    fn default() -> Self {
        Self {
            b0: 0.2,
            bq: 0.4,
            btheta: -9.81,
            g_flap: 3.0e-4,
            duration: 40.0,
            theta_amplitude: 4f64.to_radians(),
            flap_amplitude: 3000.0,
            sample_hz: 500.0,
            outer_cutoff_hz: 3.0,
        }
    }
}

impl FlapLiftSpec {
    /// Planted coefficients on [1, q, θ, u_f0, u_f1].
    pub fn coefficients(&self) -> [f64; 5] {
        [self.b0, self.bq, self.btheta, -self.g_flap, self.g_flap]
    }
}

pub fn flap_lift_log(spec: &FlapLiftSpec, noise: &NoiseLevels, seed: u64) -> Vec<LogRecord> {
    let fs = spec.sample_hz;
    let n = (spec.duration * fs).round() as usize;
    let mut rng = Noise::new(seed);
    let mut fx_lp = Butter2Lowpass::new(spec.outer_cutoff_hz, fs);
    let c = spec.coefficients();
    let theta_terms = [(1.0, 0.4, 0.0), (0.5, 1.1, 0.3)];
    (0..n)
        .map(|k| {
            let t = k as f64 / fs;
            let a = spec.theta_amplitude;
            let theta = a * multisine(t, &theta_terms);
            let q = a * theta_terms
                .iter()
                .map(|&(amp, f, ph)| amp * TAU * f * (TAU * f * t + ph).cos())
                .sum::<f64>();
            let u0 = spec.flap_amplitude * multisine(t, &[(0.6, 0.9, 0.2), (0.4, 2.7, 0.0)]);
            let u1 = spec.flap_amplitude * multisine(t, &[(0.5, 1.7, 0.0), (0.5, 0.37, 0.9)]);
            let fx = c[0] + c[1] * q + c[2] * theta + c[3] * u0 + c[4] * u1;
            LogRecord {
                t,
                theta,
                q: q + rng.sample(noise.gyro_sigma),
                fx_f: fx_lp
                    .step(fx + rng.sample(noise.accel_sigma))
                    .expect("finite"),
                u_flap_l: u0,
                u_flap_r: u1,
                ..LogRecord::default()
            }
        })
        .collect()
}
