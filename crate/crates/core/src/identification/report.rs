//! All fits on one log, with a plot per fit. A fit the log cannot support
//! is reported with its reason instead of failing the others.

use serde::{Deserialize, Serialize};

use super::{
    fit_effectiveness_schedule, fit_flap_lift, fit_sideslip, flap_lift_regression,
    sideslip_regression, Axis, EffectivenessReport, FlapLiftReport, IdentConfig, SideslipReport,
};
use crate::error::FitError;
use crate::log::LogRecord;
use crate::plot::{fit_plot, line_plot, Series};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fitted<T> {
    Ok(T),
    Failed(String),
}

impl<T> Fitted<T> {
    fn from(r: Result<T, FitError>) -> Self {
        match r {
            Ok(v) => Fitted::Ok(v),
            Err(e) => Fitted::Failed(e.to_string()),
        }
    }

    pub fn ok(&self) -> Option<&T> {
        match self {
            Fitted::Ok(v) => Some(v),
            Fitted::Failed(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub samples: usize,
    pub config: IdentConfig,
    pub pitch_effectiveness: Fitted<EffectivenessReport>,
    pub yaw_effectiveness: Fitted<EffectivenessReport>,
    pub sideslip: Fitted<SideslipReport>,
    pub flap_lift: Fitted<FlapLiftReport>,
}

impl FitReport {
    /// True when at least one fit succeeded.
    pub fn any_ok(&self) -> bool {
        self.pitch_effectiveness.ok().is_some()
            || self.yaw_effectiveness.ok().is_some()
            || self.sideslip.ok().is_some()
            || self.flap_lift.ok().is_some()
    }
}

pub fn identify(records: &[LogRecord], cfg: &IdentConfig) -> FitReport {
    FitReport {
        samples: records.len(),
        config: *cfg,
        pitch_effectiveness: Fitted::from(fit_effectiveness_schedule(records, Axis::Pitch, cfg)),
        yaw_effectiveness: Fitted::from(fit_effectiveness_schedule(records, Axis::Yaw, cfg)),
        sideslip: Fitted::from(fit_sideslip(records, cfg)),
        flap_lift: Fitted::from(fit_flap_lift(records, cfg)),
    }
}

fn effectiveness_plot(rep: &EffectivenessReport) -> String {
    let label = match rep.axis {
        Axis::Pitch => "G21",
        Axis::Yaw => "G31",
    };
    let law = |s: &super::SegmentEffectiveness| {
        if s.segment.airspeed_valid {
            rep.airspeed_law
                .map(|[a, b]| a + b * s.segment.airspeed_mean.powi(2))
        } else {
            rep.pitch_law.map(|[c, d]| c + d * s.segment.theta_mean)
        }
    };
    let pts: Vec<(f64, f64, f64)> = rep
        .segments
        .iter()
        .filter_map(|s| law(s).map(|g| (s.segment.airspeed_mean, s.value, g)))
        .collect();
    let measured: Vec<(f64, f64)> = pts.iter().map(|p| (p.0, p.1)).collect();
    let fitted: Vec<(f64, f64)> = pts.iter().map(|p| (p.0, p.2)).collect();
    let series = |name, pts: &[(f64, f64)], dashed| Series {
        name,
        xs: pts.iter().map(|p| p.0).collect(),
        ys: pts.iter().map(|p| p.1).collect(),
        dashed,
    };
    line_plot(
        &format!("{label} per segment"),
        "airspeed [m/s]",
        label,
        &[
            series("segments", &measured, false),
            series("schedule fit", &fitted, true),
        ],
    )
}

/// One SVG per successful fit, named for the output directory.
pub fn fit_plots(records: &[LogRecord], report: &FitReport) -> Vec<(&'static str, String)> {
    let cfg = &report.config;
    let mut out = Vec::new();
    if let Some(r) = report.pitch_effectiveness.ok() {
        out.push(("fit_pitch_effectiveness.svg", effectiveness_plot(r)));
    }
    if let Some(r) = report.yaw_effectiveness.ok() {
        out.push(("fit_yaw_effectiveness.svg", effectiveness_plot(r)));
    }
    if let (Some(r), Ok((used, beta))) = (report.sideslip.ok(), sideslip_regression(records, cfg)) {
        let fitted: Vec<f64> = used
            .iter()
            .map(|&(f, _)| r.affine.predict(&[f, 1.0]))
            .collect();
        out.push((
            "fit_sideslip.svg",
            fit_plot("sideslip, affine in f_y", "beta [rad]", &beta, &fitted),
        ));
    }
    if let (Some(r), Ok((rows, fx))) = (report.flap_lift.ok(), flap_lift_regression(records, cfg)) {
        let fitted: Vec<f64> = rows.iter().map(|row| r.full.predict(row)).collect();
        out.push((
            "fit_flap_lift.svg",
            fit_plot(
                "body-X specific force with flap term",
                "f_x [m/s²]",
                &fx,
                &fitted,
            ),
        ));
    }
    out
}
