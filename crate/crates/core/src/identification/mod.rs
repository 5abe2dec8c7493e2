//! Offline least-squares fits on flight logs: flap effectiveness per
//! segment and its airspeed law, the sideslip models, and the body-X
//! acceleration model with and without the flap terms.

pub mod report;
pub mod synthetic;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::FitError;
use crate::filters::Butter2Lowpass;
use crate::log::LogRecord;

/// Conditioning limit of the scaled normal matrix; above it the rank comes
/// from an SVD of the regressor and the solve from its QR factorization.
const NORMAL_CONDITION_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentConfig {
    pub window: f64,
    pub theta_std_max_deg: f64,
    pub airspeed_std_max: f64,
    /// Leading fraction of the samples used for fitting; the rest is held out.
    pub train_fraction: f64,
    /// Must match the controller's lateral specific-force filter.
    pub lateral_cutoff_hz: f64,
    /// Must match the controller's outer-loop filter.
    pub outer_cutoff_hz: f64,
}

impl Default for IdentConfig {
    fn default() -> Self {
        Self {
            window: 10.0,
            theta_std_max_deg: 5.0,
            airspeed_std_max: 1.0,
            train_fraction: 0.8,
            lateral_cutoff_hz: 5.0,
            outer_cutoff_hz: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub coefficients: Vec<f64>,
    pub train_rms: f64,
    pub test_rms: f64,
    pub n_train: usize,
    pub n_test: usize,
    /// Condition number of the column-scaled regressor.
    pub condition: f64,
}

impl LinearFit {
    pub fn predict(&self, row: &[f64]) -> f64 {
        row.iter().zip(&self.coefficients).map(|(x, c)| x * c).sum()
    }
}

/// Least-squares solution of `a·x ≈ y` and the condition number of the
/// column-scaled `a`.
pub fn least_squares(a: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, f64), FitError> {
    let (n, m) = a.shape();
    if m == 0 || n < m {
        return Err(FitError::TooFewSamples { needed: m, have: n });
    }
    let scale: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();
    if let Some(j) = scale.iter().position(|&s| s == 0.0 || !s.is_finite()) {
        return Err(FitError::InsufficientExcitation(format!(
            "regressor column {j} is zero"
        )));
    }
    let mut s = a.clone();
    for (j, &sc) in scale.iter().enumerate() {
        s.column_mut(j).unscale_mut(sc);
    }
    let unscale =
        |x: DVector<f64>| DVector::from_iterator(m, x.iter().zip(&scale).map(|(v, sc)| v / sc));

    let normal = s.transpose() * &s;
    let eig = normal.clone().symmetric_eigenvalues();
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| {
        (lo.min(e), hi.max(e))
    });
    if lo > 0.0 && hi / lo < NORMAL_CONDITION_LIMIT {
        if let Some(chol) = normal.cholesky() {
            let x = chol.solve(&(s.transpose() * y));
            return Ok((unscale(x), (hi / lo).sqrt()));
        }
    }

    let svd = s.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let tol = n.max(m) as f64 * f64::EPSILON * smax;
    let rank = svd.rank(tol);
    if rank < m {
        return Err(FitError::RankDeficient { rank, cols: m });
    }
    let condition = smax / svd.singular_values.min();
    let qr = s.qr();
    let qty = qr.q().transpose() * y;
    let x = qr
        .r()
        .solve_upper_triangular(&qty)
        .ok_or(FitError::RankDeficient { rank, cols: m })?;
    Ok((unscale(x), condition))
}

fn rms_residual(a: &DMatrix<f64>, y: &DVector<f64>, x: &DVector<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    let r = a * x - y;
    (r.norm_squared() / a.nrows() as f64).sqrt()
}

/// Fit on the leading `train_fraction` of the rows and score both parts.
pub fn fit_split(rows: &[Vec<f64>], y: &[f64], train_fraction: f64) -> Result<LinearFit, FitError> {
    let Some(m) = rows.first().map(Vec::len) else {
        return Err(FitError::TooFewSamples { needed: 1, have: 0 });
    };
    let n_train = ((rows.len() as f64) * train_fraction).floor() as usize;
    let to_matrix = |r: &[Vec<f64>]| DMatrix::from_fn(r.len(), m, |i, j| r[i][j]);
    let a_train = to_matrix(&rows[..n_train]);
    let y_train = DVector::from_column_slice(&y[..n_train]);
    let (x, condition) = least_squares(&a_train, &y_train)?;
    let a_test = to_matrix(&rows[n_train..]);
    let y_test = DVector::from_column_slice(&y[n_train..]);
    Ok(LinearFit {
        coefficients: x.iter().copied().collect(),
        train_rms: rms_residual(&a_train, &y_train, &x),
        test_rms: rms_residual(&a_test, &y_test, &x),
        n_train,
        n_test: rows.len() - n_train,
        condition,
    })
}

fn sample_hz(records: &[LogRecord]) -> Result<f64, FitError> {
    if records.len() < 2 {
        return Err(FitError::TooFewSamples {
            needed: 2,
            have: records.len(),
        });
    }
    Ok(1.0 / (records[1].t - records[0].t))
}

fn lowpass(xs: impl Iterator<Item = f64>, cutoff_hz: f64, fs: f64) -> Result<Vec<f64>, FitError> {
    let mut f = Butter2Lowpass::new(cutoff_hz, fs);
    xs.map(|x| {
        f.step(x)
            .map_err(|e| FitError::InsufficientExcitation(e.to_string()))
    })
    .collect()
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count().max(1) as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// A window of the log with nearly constant pitch and airspeed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub theta_mean: f64,
    pub airspeed_mean: f64,
    /// Airspeed was measurable for the whole window.
    pub airspeed_valid: bool,
}

/// Consecutive `window`-second windows passing the constancy thresholds.
pub fn select_segments(records: &[LogRecord], cfg: &IdentConfig) -> Result<Vec<Segment>, FitError> {
    let fs = sample_hz(records)?;
    let len = (cfg.window * fs).round() as usize;
    let mut out = Vec::new();
    let mut start = 0;
    while len > 1 && start + len <= records.len() {
        let w = &records[start..start + len];
        let (theta_mean, theta_std) = mean_std(w.iter().map(|r| r.theta));
        let (airspeed_mean, airspeed_std) = mean_std(w.iter().map(|r| r.airspeed));
        let airspeed_valid = w.iter().all(|r| r.airspeed_valid != 0);
        if theta_std < cfg.theta_std_max_deg.to_radians()
            && (!airspeed_valid || airspeed_std < cfg.airspeed_std_max)
        {
            out.push(Segment {
                start,
                end: start + len,
                theta_mean,
                airspeed_mean,
                airspeed_valid,
            });
        }
        start += len;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// Left-flap column of the pitch row; the right flap is its negative.
    Pitch,
    /// Left-flap column of the yaw row; the right flap is equal.
    Yaw,
}

/// Slope of Δ(angular acceleration) against Δ(flap input) over `records`.
pub fn fit_effectiveness(records: &[LogRecord], axis: Axis) -> Result<f64, FitError> {
    let (acc, input): (Vec<f64>, Vec<f64>) = records
        .iter()
        .map(|r| match axis {
            Axis::Pitch => (r.q_dot_f, r.uf_flap_l - r.uf_flap_r),
            Axis::Yaw => (r.r_dot_f, r.uf_flap_l + r.uf_flap_r),
        })
        .unzip();
    let rows: Vec<Vec<f64>> = input.windows(2).map(|w| vec![w[1] - w[0], 1.0]).collect();
    if rows.iter().all(|r| r[0] == 0.0) {
        return Err(FitError::InsufficientExcitation(
            "flap inputs do not change".into(),
        ));
    }
    let y: Vec<f64> = acc.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(fit_split(&rows, &y, 1.0)?.coefficients[0])
}

/// G = a + b·V², returned as `[a, b]`.
pub fn fit_airspeed_law(points: &[(f64, f64)]) -> Result<[f64; 2], FitError> {
    let rows: Vec<Vec<f64>> = points.iter().map(|&(v, _)| vec![1.0, v * v]).collect();
    let y: Vec<f64> = points.iter().map(|&(_, g)| g).collect();
    let c = fit_split(&rows, &y, 1.0)?.coefficients;
    Ok([c[0], c[1]])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentEffectiveness {
    pub segment: Segment,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectivenessReport {
    pub axis: Axis,
    pub segments: Vec<SegmentEffectiveness>,
    /// `[a, b]` of a + b·V² over the segments with measurable airspeed.
    pub airspeed_law: Option<[f64; 2]>,
    /// `[c, d]` of c + d·θ over the remaining segments.
    pub pitch_law: Option<[f64; 2]>,
}

pub fn fit_effectiveness_schedule(
    records: &[LogRecord],
    axis: Axis,
    cfg: &IdentConfig,
) -> Result<EffectivenessReport, FitError> {
    let mut segments = Vec::new();
    for seg in select_segments(records, cfg)? {
        match fit_effectiveness(&records[seg.start..seg.end], axis) {
            Ok(value) => segments.push(SegmentEffectiveness {
                segment: seg,
                value,
            }),
            Err(FitError::InsufficientExcitation(_) | FitError::RankDeficient { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    if segments.is_empty() {
        return Err(FitError::InsufficientExcitation("no usable segment".into()));
    }
    let valid: Vec<(f64, f64)> = segments
        .iter()
        .filter(|s| s.segment.airspeed_valid)
        .map(|s| (s.segment.airspeed_mean, s.value))
        .collect();
    let low: Vec<Vec<f64>> = segments
        .iter()
        .filter(|s| !s.segment.airspeed_valid)
        .map(|s| vec![1.0, s.segment.theta_mean])
        .collect();
    let low_y: Vec<f64> = segments
        .iter()
        .filter(|s| !s.segment.airspeed_valid)
        .map(|s| s.value)
        .collect();
    Ok(EffectivenessReport {
        axis,
        airspeed_law: fit_airspeed_law(&valid).ok(),
        pitch_law: fit_split(&low, &low_y, 1.0)
            .ok()
            .map(|f| [f.coefficients[0], f.coefficients[1]]),
        segments,
    })
}

/// The three sideslip models, each `[c, b]` in β = c·x + b.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideslipReport {
    /// x = f_y / V².
    pub over_v2: LinearFit,
    /// x = f_y.
    pub affine: LinearFit,
    /// x = f_y / V.
    pub over_v: LinearFit,
}

/// `(f_y, V)` samples with measurable airspeed and the logged true
/// sideslip, filtered like `fy_f` so both sides carry the same lag.
type SideslipSamples = (Vec<(f64, f64)>, Vec<f64>);

fn sideslip_regression(
    records: &[LogRecord],
    cfg: &IdentConfig,
) -> Result<SideslipSamples, FitError> {
    let fs = sample_hz(records)?;
    let beta = lowpass(
        records.iter().map(|r| r.beta_true),
        cfg.lateral_cutoff_hz,
        fs,
    )?;
    Ok(records
        .iter()
        .zip(&beta)
        .filter(|(r, _)| r.airspeed_valid != 0 && r.airspeed > 0.0)
        .map(|(r, &b)| ((r.fy_f, r.airspeed), b))
        .unzip())
}

pub fn fit_sideslip(records: &[LogRecord], cfg: &IdentConfig) -> Result<SideslipReport, FitError> {
    let (used, y) = sideslip_regression(records, cfg)?;
    if used.is_empty() {
        return Err(FitError::InsufficientExcitation(
            "no samples with measurable airspeed".into(),
        ));
    }
    let model = |x: &dyn Fn(f64, f64) -> f64| {
        let rows: Vec<Vec<f64>> = used.iter().map(|&(f, v)| vec![x(f, v), 1.0]).collect();
        fit_split(&rows, &y, cfg.train_fraction)
    };
    Ok(SideslipReport {
        over_v2: model(&|f, v| f / (v * v))?,
        affine: model(&|f, _| f)?,
        over_v: model(&|f, v| f / v)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlapLiftReport {
    /// Coefficients on [1, q, θ].
    pub simple: LinearFit,
    /// Coefficients on [1, q, θ, u_f0, u_f1].
    pub full: LinearFit,
    /// Body-X acceleration per unit of (−u_f0 + u_f1).
    pub g_flap: f64,
}

/// Regressor rows `[1, q, θ, u_f0, u_f1]` and the body-X specific force.
/// The regressors pass through the same low-pass as `fx_f`.
fn flap_lift_regression(
    records: &[LogRecord],
    cfg: &IdentConfig,
) -> Result<(Vec<Vec<f64>>, Vec<f64>), FitError> {
    let fs = sample_hz(records)?;
    let lp = |f: fn(&LogRecord) -> f64| lowpass(records.iter().map(f), cfg.outer_cutoff_hz, fs);
    let q = lp(|r| r.q)?;
    let theta = lp(|r| r.theta)?;
    let u0 = lp(|r| r.u_flap_l)?;
    let u1 = lp(|r| r.u_flap_r)?;
    let rows = (0..records.len())
        .map(|k| vec![1.0, q[k], theta[k], u0[k], u1[k]])
        .collect();
    Ok((rows, records.iter().map(|r| r.fx_f).collect()))
}

/// Body-X specific force against pitch rate, pitch and flap inputs.
pub fn fit_flap_lift(records: &[LogRecord], cfg: &IdentConfig) -> Result<FlapLiftReport, FitError> {
    let (full_rows, y) = flap_lift_regression(records, cfg)?;
    let simple_rows: Vec<Vec<f64>> = full_rows.iter().map(|r| r[..3].to_vec()).collect();
    let simple = fit_split(&simple_rows, &y, cfg.train_fraction)?;
    let full = fit_split(&full_rows, &y, cfg.train_fraction)?;
    let g_flap = 0.5 * (full.coefficients[4] - full.coefficients[3]);
    Ok(FlapLiftReport {
        simple,
        full,
        g_flap,
    })
}

#[cfg(test)]
mod tests {
    use super::synthetic::*;
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn least_squares_exact_line() {
        let a = DMatrix::from_fn(50, 2, |i, j| if j == 0 { 1.0 } else { i as f64 * 0.1 });
        let y = DVector::from_fn(50, |i, _| 2.0 - 0.5 * (i as f64 * 0.1));
        let (x, cond) = least_squares(&a, &y).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-13 && (x[1] + 0.5).abs() < 1e-13);
        assert!(cond >= 1.0);
    }

    #[test]
    fn collinear_columns_are_rank_deficient() {
        let a = DMatrix::from_fn(20, 2, |i, _| i as f64 + 1.0);
        let y = DVector::from_element(20, 1.0);
        assert!(matches!(
            least_squares(&a, &y),
            Err(FitError::RankDeficient { rank: 1, cols: 2 })
        ));
    }

    #[test]
    fn ill_conditioned_goes_through_svd() {
        // columns nearly parallel: scaled normal matrix cond ~ 1e10
        let a = DMatrix::from_fn(40, 2, |i, j| {
            let x = i as f64;
            if j == 0 {
                1.0 + x
            } else {
                1.0 + x + 1e-5 * (x * 0.7).sin()
            }
        });
        let truth = DVector::from_vec(vec![0.3, -0.2]);
        let y = &a * &truth;
        let (x, cond) = least_squares(&a, &y).unwrap();
        assert!(cond > NORMAL_CONDITION_LIMIT.sqrt());
        assert!((x - truth).norm() < 1e-6);
    }

    #[test]
    fn zero_excitation_is_reported() {
        let recs: Vec<LogRecord> = (0..100)
            .map(|k| LogRecord {
                t: k as f64 * 0.002,
                ..LogRecord::default()
            })
            .collect();
        assert!(matches!(
            fit_effectiveness(&recs, Axis::Pitch),
            Err(FitError::InsufficientExcitation(_))
        ));
    }

    #[test]
    fn split_is_deterministic_and_held_out() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![1.0, i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let f = fit_split(&rows, &y, 0.8).unwrap();
        assert_eq!((f.n_train, f.n_test), (8, 2));
        assert_eq!(f, fit_split(&rows, &y, 0.8).unwrap());
    }

    #[test]
    fn airspeed_law_exact() {
        let pts: Vec<(f64, f64)> = [6.0, 9.0, 12.0, 16.0]
            .iter()
            .map(|&v| (v, -2.4e-3 - 3.1e-5 * v * v))
            .collect();
        let [a, b] = fit_airspeed_law(&pts).unwrap();
        assert!(rel(a, -2.4e-3) < 1e-12 && rel(b, -3.1e-5) < 1e-12);
    }

    #[test]
    fn segments_follow_constancy_thresholds() {
        let spec = EffectivenessSpec::default();
        let recs = effectiveness_log(&spec, &NoiseLevels::none(), 1);
        let segs = select_segments(&recs, &IdentConfig::default()).unwrap();
        assert_eq!(segs.len(), spec.segments.len());
        let mut wobbly = recs.clone();
        for (k, r) in wobbly.iter_mut().enumerate() {
            r.theta += 0.3 * (k as f64 * 0.01).sin();
        }
        assert!(select_segments(&wobbly, &IdentConfig::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn noiseless_effectiveness_is_exact() {
        let spec = EffectivenessSpec::default();
        let recs = effectiveness_log(&spec, &NoiseLevels::none(), 1);
        let rep = fit_effectiveness_schedule(&recs, Axis::Pitch, &IdentConfig::default()).unwrap();
        for s in &rep.segments {
            let g = spec.pitch_effectiveness(s.segment.airspeed_mean);
            assert!(rel(s.value, g) < 1e-9, "{} vs {g}", s.value);
        }
        let [a, b] = rep.airspeed_law.unwrap();
        assert!(rel(a, spec.g21_a) < 1e-9 && rel(b, spec.g21_b) < 1e-9);
    }

    #[test]
    fn noiseless_sideslip_is_exact() {
        let spec = SideslipSpec::default();
        let recs = sideslip_log(&spec, &NoiseLevels::none(), 1);
        let rep = fit_sideslip(&recs, &IdentConfig::default()).unwrap();
        assert!(rel(rep.affine.coefficients[0], spec.c2) < 1e-10);
        assert!(rel(rep.affine.coefficients[1], spec.b2) < 1e-10);
        assert!(rep.affine.test_rms < 1e-12);
        assert!(rep.over_v2.test_rms > rep.affine.test_rms);
    }

    #[test]
    fn noiseless_flap_lift_is_exact() {
        let spec = FlapLiftSpec::default();
        let recs = flap_lift_log(&spec, &NoiseLevels::none(), 1);
        let rep = fit_flap_lift(&recs, &IdentConfig::default()).unwrap();
        assert!(rel(rep.g_flap, spec.g_flap) < 1e-9);
        for (c, t) in rep.full.coefficients.iter().zip(spec.coefficients()) {
            assert!((c - t).abs() < 1e-9 * t.abs().max(1.0));
        }
        assert!(rep.full.test_rms < rep.simple.test_rms);
    }

    #[test]
    fn flap_terms_add_nothing_without_flap_lift() {
        let spec = FlapLiftSpec {
            g_flap: 0.0,
            ..FlapLiftSpec::default()
        };
        let recs = flap_lift_log(&spec, &NoiseLevels::sensors(), 3);
        let rep = fit_flap_lift(&recs, &IdentConfig::default()).unwrap();
        let ratio = rep.simple.test_rms / rep.full.test_rms;
        assert!((ratio - 1.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn noisy_fits_stay_close() {
        let ident = IdentConfig::default();
        for seed in 1..=3 {
            let noise = NoiseLevels::sensors();
            let eff = EffectivenessSpec::default();
            let rep = fit_effectiveness_schedule(
                &effectiveness_log(&eff, &noise, seed),
                Axis::Pitch,
                &ident,
            )
            .unwrap();
            for s in &rep.segments {
                let e = rel(s.value, eff.pitch_effectiveness(s.segment.airspeed_mean));
                assert!(e < 0.05, "seed {seed}: G21 error {e}");
            }

            let ss = SideslipSpec::default();
            let rep = fit_sideslip(&sideslip_log(&ss, &noise, seed), &ident).unwrap();
            let [c, b] = [rep.affine.coefficients[0], rep.affine.coefficients[1]];
            assert!(
                rel(c, ss.c2) < 0.02 && rel(b, ss.b2) < 0.02,
                "seed {seed}: c2 {c} b2 {b}"
            );

            let fl = FlapLiftSpec::default();
            let rep = fit_flap_lift(&flap_lift_log(&fl, &noise, seed), &ident).unwrap();
            assert!(
                rel(rep.g_flap, fl.g_flap) < 0.10,
                "seed {seed}: G_flap {}",
                rep.g_flap
            );
            assert!(rep.full.test_rms < rep.simple.test_rms);
        }
    }
}
