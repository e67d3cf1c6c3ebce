//! Trajectory and Nyquist exports: CSV, JSON and SVG.

use std::fmt::Write as _;
use std::path::Path;

use cfsync::freq::NyquistCurve;
use cfsync::sim::Trajectory;
use cfsync::C64;
use plotters::prelude::*;
use serde_json::{json, Value};

use crate::CliError;

pub const TRAJECTORY_HEADER: &str = "t,node,v_re,v_im,v_abs,theta,u_f,eps,omega,p,q";

const CANVAS: (u32, u32) = (900, 640);
const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(148, 103, 189),
    RGBColor(255, 127, 14),
    RGBColor(23, 190, 207),
];

pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::with_capacity(64 + traj.records.len() * traj.num_nodes() * 200);
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for r in &traj.records {
        for k in 0..r.v.len() {
            let pq = r.power(k);
            let _ = writeln!(
                out,
                "{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.t,
                k + 1,
                r.v[k].re,
                r.v[k].im,
                r.v[k].norm(),
                r.theta[k],
                r.u_f[k],
                r.varpi[k].re,
                r.varpi[k].im,
                pq.re,
                pq.im
            );
        }
    }
    out
}

pub fn trajectory_json(traj: &Trajectory) -> Value {
    let rows: Vec<Value> = traj
        .records
        .iter()
        .flat_map(|r| {
            (0..r.v.len()).map(move |k| {
                let pq = r.power(k);
                json!({
                    "t": r.t, "node": k + 1, "v_re": r.v[k].re, "v_im": r.v[k].im, "v_abs": r.v[k].norm(),
                    "theta": r.theta[k], "u_f": r.u_f[k], "eps": r.varpi[k].re, "omega": r.varpi[k].im,
                    "p": pq.re, "q": pq.im,
                })
            })
        })
        .collect();
    Value::Array(rows)
}

pub fn curve_json(curve: &NyquistCurve) -> Value {
    Value::Array(
        curve
            .s
            .iter()
            .zip(&curve.image)
            .map(|(s, f)| json!({"omega": s.im, "re": f.re, "im": f.im}))
            .collect(),
    )
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn plot_err<E: std::fmt::Display>(path: &Path) -> impl Fn(E) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn padded_range(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (-1.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-9 * hi.abs().max(lo.abs()).max(1.0));
    (lo - pad, hi + pad)
}

/// Rocov and frequency panels, one trace per node.
pub fn plot_trajectory(traj: &Trajectory, path: &Path) -> Result<(), CliError> {
    if traj.records.is_empty() {
        return Err(CliError::Input("cannot plot an empty trajectory".into()));
    }
    let err = plot_err(path);
    let root = SVGBackend::new(path, CANVAS).into_drawing_area();
    root.fill(&WHITE).map_err(&err)?;
    let panels = root.split_evenly((2, 1));
    let t0 = traj.records[0].t;
    let t1 = traj.records.last().map_or(t0 + 1.0, |r| r.t).max(t0 + 1e-12);
    let n = traj.num_nodes();
    type Signal = (&'static str, fn(C64) -> f64);
    let signals: [Signal; 2] = [("rocov eps [1/s]", |w| w.re), ("frequency omega [rad/s]", |w| w.im)];
    for (area, (label, f)) in panels.iter().zip(signals) {
        let values = traj.records.iter().flat_map(|r| r.varpi.iter().map(|&w| f(w)));
        let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let (lo, hi) = padded_range(lo, hi);
        let mut chart = ChartBuilder::on(area)
            .margin(12)
            .x_label_area_size(36)
            .y_label_area_size(80)
            .build_cartesian_2d(t0..t1, lo..hi)
            .map_err(&err)?;
        chart
            .configure_mesh()
            .x_desc("t [s]")
            .y_desc(label)
            .disable_mesh()
            .draw()
            .map_err(&err)?;
        for k in 0..n {
            let color = PALETTE[k % PALETTE.len()];
            chart
                .draw_series(LineSeries::new(
                    traj.records.iter().map(|r| (r.t, f(r.varpi[k]))),
                    color,
                ))
                .map_err(&err)?
                .label(format!("node {}", k + 1))
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(&err)?;
    }
    root.present().map_err(&err)?;
    Ok(())
}

/// Nyquist plot with the unit circle and a marker at the critical point.
///
/// The view is clipped to a square around the origin; samples outside it are
/// dropped and the curve is split there.
pub fn plot_nyquist(curve: &NyquistCurve, title: &str, path: &Path) -> Result<(), CliError> {
    if curve.is_empty() {
        return Err(CliError::Input("cannot plot an empty curve".into()));
    }
    let err = plot_err(path);
    let mut mags: Vec<f64> = curve.image.iter().map(|z| z.norm()).filter(|m| m.is_finite()).collect();
    mags.sort_by(f64::total_cmp);
    let typical = mags.get(mags.len() * 9 / 10).copied().unwrap_or(1.0);
    let half = (1.2 * typical).clamp(2.0 * curve.point.norm().max(1.0), 50.0);

    let root = SVGBackend::new(path, (CANVAS.1, CANVAS.1)).into_drawing_area();
    root.fill(&WHITE).map_err(&err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(56)
        .build_cartesian_2d(-half..half, -half..half)
        .map_err(&err)?;
    chart
        .configure_mesh()
        .x_desc("Re")
        .y_desc("Im")
        .disable_mesh()
        .draw()
        .map_err(&err)?;
    let circle: Vec<(f64, f64)> = (0..=360)
        .map(|i| {
            let a = (i as f64).to_radians();
            (a.cos(), a.sin())
        })
        .collect();
    chart
        .draw_series(LineSeries::new(circle, BLACK.mix(0.3)))
        .map_err(&err)?;

    let inside = |z: &C64| z.re.abs() <= half && z.im.abs() <= half;
    let mut segments: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
    for z in &curve.image {
        if inside(z) {
            segments.last_mut().expect("nonempty").push((z.re, z.im));
        } else if !segments.last().expect("nonempty").is_empty() {
            segments.push(Vec::new());
        }
    }
    for seg in segments.into_iter().filter(|s| s.len() > 1) {
        chart.draw_series(LineSeries::new(seg, PALETTE[0])).map_err(&err)?;
    }
    let p = curve.point;
    chart
        .draw_series(std::iter::once(Cross::new((p.re, p.im), 6, PALETTE[1].stroke_width(2))))
        .map_err(&err)?;
    root.present().map_err(&err)?;
    Ok(())
}
