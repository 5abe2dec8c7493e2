//! Static SVG plots of a flight log.

use std::fmt::Write;

use crate::log::LogRecord;

const W: f64 = 800.0;
const H: f64 = 360.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

pub struct Series<'a> {
    pub name: &'a str,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub dashed: bool,
}

/// Round step close to `span / 6`.
fn tick_step(span: f64) -> f64 {
    let raw = (span / 6.0).max(f64::MIN_POSITIVE);
    let mag = 10f64.powf(raw.log10().floor());
    let n = raw / mag;
    mag * if n < 1.5 {
        1.0
    } else if n < 3.5 {
        2.0
    } else if n < 7.5 {
        5.0
    } else {
        10.0
    }
}

fn bounds<'a>(vals: impl Iterator<Item = &'a f64>) -> (f64, f64) {
    let (lo, hi) = vals
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-9 {
        (lo - 1.0, hi + 1.0)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

struct Axes {
    x: (f64, f64),
    y: (f64, f64),
    w: f64,
    h: f64,
}

impl Axes {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (self.w - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        self.h - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (self.h - TOP - BOTTOM)
    }

    fn frame(&self, out: &mut String, title: &str, x_label: &str, y_label: &str) {
        let (w, h) = (self.w, self.h);
        let _ = write!(
            out,
            r##"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>
<text x="{}" y="{}" text-anchor="middle">{}</text>
<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>
"##,
            w / 2.0,
            escape(title),
            (LEFT + w - RIGHT) / 2.0,
            h - 10.0,
            escape(x_label),
            (TOP + h - BOTTOM) / 2.0,
            (TOP + h - BOTTOM) / 2.0,
            escape(y_label),
        );
        let step = tick_step(self.x.1 - self.x.0);
        let mut t = (self.x.0 / step).ceil() * step;
        while t <= self.x.1 {
            let x = self.px(t);
            let _ = writeln!(
                out,
                r##"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="#ddd"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
                TOP,
                h - BOTTOM,
                h - BOTTOM + 16.0,
                fmt_tick(t, step)
            );
            t += step;
        }
        let step = tick_step(self.y.1 - self.y.0);
        let mut t = (self.y.0 / step).ceil() * step;
        while t <= self.y.1 {
            let y = self.py(t);
            let _ = writeln!(
                out,
                r##"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
                w - RIGHT,
                LEFT - 6.0,
                y + 4.0,
                fmt_tick(t, step)
            );
            t += step;
        }
        let _ = writeln!(
            out,
            r##"<rect x="{LEFT}" y="{TOP}" width="{:.1}" height="{:.1}" fill="none" stroke="#333"/>"##,
            w - LEFT - RIGHT,
            h - TOP - BOTTOM
        );
    }
}

fn fmt_tick(v: f64, step: f64) -> String {
    let v = if v.abs() < step * 1e-6 { 0.0 } else { v };
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    format!("{v:.decimals$}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Decimate to at most `max` points per series; plots stay small.
fn decimate(xs: &[f64], ys: &[f64], max: usize) -> Vec<(f64, f64)> {
    let step = xs.len().div_ceil(max.max(1)).max(1);
    xs.iter()
        .zip(ys)
        .step_by(step)
        .map(|(&x, &y)| (x, y))
        .collect()
}

pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let ax = Axes {
        x: bounds(series.iter().flat_map(|s| s.xs.iter())),
        y: bounds(series.iter().flat_map(|s| s.ys.iter())),
        w: W,
        h: H,
    };
    let mut out = String::new();
    ax.frame(&mut out, title, x_label, y_label);
    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: String = decimate(&s.xs, &s.ys, 2000)
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.1},{:.1} ", ax.px(x), ax.py(y)))
            .collect();
        let dash = if s.dashed {
            r#" stroke-dasharray="6 4""#
        } else {
            ""
        };
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.4"{dash}/>"#,
            pts.trim_end()
        );
        let ly = TOP + 14.0 + 16.0 * k as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"{dash}/><text x="{:.1}" y="{:.1}">{}</text>"#,
            W - RIGHT - 150.0,
            W - RIGHT - 125.0,
            W - RIGHT - 120.0,
            ly + 4.0,
            escape(s.name)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn column(records: &[LogRecord], f: impl Fn(&LogRecord) -> f64) -> Vec<f64> {
    records.iter().map(f).collect()
}

fn series<'a>(
    name: &'a str,
    records: &[LogRecord],
    f: impl Fn(&LogRecord) -> f64,
    dashed: bool,
) -> Series<'a> {
    Series {
        name,
        xs: column(records, |r| r.t),
        ys: column(records, f),
        dashed,
    }
}

/// Top view, East right and North up, with airspeed arrows every `arrow_every` seconds.
pub fn track_plot(records: &[LogRecord], arrow_every: f64) -> String {
    let mut x = bounds(records.iter().map(|r| &r.pos_e));
    let mut y = bounds(records.iter().map(|r| &r.pos_n));
    // equal scale on both axes
    let sx = (x.1 - x.0) / (W - LEFT - RIGHT);
    let side = W - LEFT - RIGHT;
    let h = TOP + BOTTOM + side;
    let sy = (y.1 - y.0) / side;
    let s = sx.max(sy);
    let (cx, cy) = (0.5 * (x.0 + x.1), 0.5 * (y.0 + y.1));
    x = (cx - 0.5 * s * side, cx + 0.5 * s * side);
    y = (cy - 0.5 * s * side, cy + 0.5 * s * side);
    let ax = Axes { x, y, w: W, h };
    let mut out = String::new();
    ax.frame(
        &mut out,
        "Track (top view) with airspeed",
        "East [m]",
        "North [m]",
    );
    let pts: String = decimate(
        &column(records, |r| r.pos_e),
        &column(records, |r| r.pos_n),
        4000,
    )
    .iter()
    .map(|&(e, n)| format!("{:.1},{:.1} ", ax.px(e), ax.py(n)))
    .collect();
    let _ = writeln!(
        out,
        r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
        pts.trim_end(),
        COLORS[0]
    );
    // 20 m/s of airspeed spans 6% of the plot
    let arrow_scale = 0.06 * s * side / 20.0;
    let mut next = 0.0;
    for r in records {
        if r.t + 1e-9 < next {
            continue;
        }
        next = r.t + arrow_every;
        // air-relative velocity
        let (an, ae) = (r.vel_n - r.wind_n, r.vel_e - r.wind_e);
        let (x0, y0) = (ax.px(r.pos_e), ax.py(r.pos_n));
        let (x1, y1) = (
            ax.px(r.pos_e + ae * arrow_scale),
            ax.py(r.pos_n + an * arrow_scale),
        );
        let _ = writeln!(
            out,
            r#"<line x1="{x0:.1}" y1="{y0:.1}" x2="{x1:.1}" y2="{y1:.1}" stroke="{}" stroke-width="1.2"/><circle cx="{x1:.1}" cy="{y1:.1}" r="2" fill="{}"/>"#,
            COLORS[1], COLORS[1]
        );
    }
    out.push_str("</svg>\n");
    out
}

/// The standard set: pitch, roll, inputs, NED acceleration and track.
pub fn standard_plots(records: &[LogRecord]) -> Vec<(&'static str, String)> {
    let deg = f64::to_degrees;
    vec![
        (
            "pitch.svg",
            line_plot(
                "Pitch angle and reference",
                "time [s]",
                "θ [deg]",
                &[
                    series("θ", records, |r| deg(r.theta), false),
                    series("θ_ref", records, |r| deg(r.theta_ref), true),
                ],
            ),
        ),
        (
            "roll.svg",
            line_plot(
                "Roll angle and reference",
                "time [s]",
                "φ [deg]",
                &[
                    series("φ", records, |r| deg(r.phi), false),
                    series("φ_ref", records, |r| deg(r.phi_ref), true),
                ],
            ),
        ),
        (
            "inputs.svg",
            line_plot(
                "Actuator states",
                "time [s]",
                "command units",
                &[
                    series("flap left", records, |r| r.u_flap_l, false),
                    series("flap right", records, |r| r.u_flap_r, false),
                    series("motor left", records, |r| r.u_motor_l, false),
                    series("motor right", records, |r| r.u_motor_r, false),
                ],
            ),
        ),
        (
            "accel.svg",
            line_plot(
                "NED acceleration and reference",
                "time [s]",
                "m/s²",
                &[
                    series("N", records, |r| r.accel_f_n, false),
                    series("N ref", records, |r| r.accel_ref_n, true),
                    series("E", records, |r| r.accel_f_e, false),
                    series("E ref", records, |r| r.accel_ref_e, true),
                    series("D", records, |r| r.accel_f_d, false),
                    series("D ref", records, |r| r.accel_ref_d, true),
                ],
            ),
        ),
        ("track.svg", track_plot(records, 2.0)),
    ]
}

/// Measured against fitted values over sample index.
pub fn fit_plot(title: &str, y_label: &str, measured: &[f64], fitted: &[f64]) -> String {
    let idx: Vec<f64> = (0..measured.len()).map(|k| k as f64).collect();
    line_plot(
        title,
        "sample",
        y_label,
        &[
            Series {
                name: "measured",
                xs: idx.clone(),
                ys: measured.to_vec(),
                dashed: false,
            },
            Series {
                name: "fit",
                xs: idx,
                ys: fitted.to_vec(),
                dashed: true,
            },
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn recs() -> Vec<LogRecord> {
        (0..500)
            .map(|k| {
                let t = k as f64 * 0.01;
                LogRecord {
                    t,
                    theta: -t * 0.2,
                    pos_n: 3.0 * t,
                    pos_e: t * t,
                    vel_n: 3.0,
                    vel_e: 2.0 * t,
                    ..LogRecord::default()
                }
            })
            .collect()
    }

    #[test]
    fn standard_set_is_well_formed() {
        let plots = standard_plots(&recs());
        let names: Vec<_> = plots.iter().map(|p| p.0).collect();
        assert_eq!(
            names,
            [
                "pitch.svg",
                "roll.svg",
                "inputs.svg",
                "accel.svg",
                "track.svg"
            ]
        );
        for (_, svg) in &plots {
            assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
            assert!(!svg.contains("NaN") && !svg.contains("inf"));
        }
    }

    #[test]
    fn empty_and_constant_series_do_not_break_axes() {
        let svg = line_plot(
            "t",
            "x",
            "y",
            &[Series {
                name: "c",
                xs: vec![0.0, 1.0],
                ys: vec![2.0, 2.0],
                dashed: false,
            }],
        );
        assert!(!svg.contains("NaN"));
        let svg = track_plot(&[], 1.0);
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn ticks_are_round() {
        assert_eq!(tick_step(10.0), 2.0);
        assert_eq!(tick_step(600.0), 100.0);
        assert_eq!(tick_step(0.3), 0.05);
    }
}
