//! The `plot` command: group sparsity and validation error against epoch as
//! a static two-panel SVG.

use std::fmt::Write as _;
use std::path::Path;

use wgsef_train::EpochRecord;

use crate::error::{CliError, Result};
use crate::run::read_metrics;

const PANEL_W: f64 = 360.0;
const PANEL_H: f64 = 260.0;
const MARGIN: f64 = 48.0;

struct Series<'a> {
    label: &'a str,
    color: &'a str,
    points: Vec<(f64, f64)>,
}

fn nice_max(v: f64) -> f64 {
    if !(v > 0.0) {
        return 1.0;
    }
    let mag = 10f64.powf(v.log10().floor());
    [1.0, 2.0, 2.5, 5.0, 10.0].iter().map(|s| s * mag).find(|&c| c >= v).unwrap_or(10.0 * mag)
}

fn panel(svg: &mut String, x0: f64, title: &str, y_label: &str, series: &[Series], y_max: f64, epochs: f64) {
    let (left, top) = (x0 + MARGIN, MARGIN);
    let (w, h) = (PANEL_W - 1.5 * MARGIN, PANEL_H - 2.0 * MARGIN);
    let sx = |e: f64| left + w * e / epochs.max(1.0);
    let sy = |v: f64| top + h * (1.0 - v / y_max);
    let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="14">{title}</text>"#, left + w / 2.0, top - 18.0);
    let _ = writeln!(svg, r#"<rect x="{left:.1}" y="{top:.1}" width="{w:.1}" height="{h:.1}" fill="none" stroke="dimgray"/>"#);
    for i in 0..=4 {
        let v = y_max * i as f64 / 4.0;
        let y = sy(v);
        let _ = writeln!(svg, r#"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="gainsboro"/>"#, left, left + w);
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-size="10">{v}</text>"#, left - 4.0, y + 3.0);
    }
    let step = (epochs / 5.0).ceil().max(1.0);
    let mut e = 0.0;
    while e <= epochs {
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="10">{e}</text>"#, sx(e), top + h + 14.0);
        e += step;
    }
    let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="11">epoch</text>"#, left + w / 2.0, top + h + 30.0);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="11" transform="rotate(-90 {:.1} {:.1})">{y_label}</text>"#,
        x0 + 12.0,
        top + h / 2.0,
        x0 + 12.0,
        top + h / 2.0
    );
    for (i, s) in series.iter().enumerate() {
        let pts: Vec<String> = s.points.iter().map(|&(e, v)| format!("{:.1},{:.1}", sx(e), sy(v))).collect();
        let _ = writeln!(svg, r#"<polyline fill="none" stroke="{}" stroke-width="2" points="{}"/>"#, s.color, pts.join(" "));
        for &(e, v) in &s.points {
            let _ = writeln!(svg, r#"<circle cx="{:.1}" cy="{:.1}" r="2.5" fill="{}"/>"#, sx(e), sy(v), s.color);
        }
        let ly = top + 14.0 + 14.0 * i as f64;
        let _ = writeln!(svg, r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{}" stroke-width="2"/>"#, left + 8.0, ly - 4.0, left + 24.0, ly - 4.0, s.color);
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{ly:.1}" font-size="10">{}</text>"#, left + 28.0, s.label);
    }
}

pub fn render_svg(records: &[EpochRecord]) -> String {
    let epochs = records.iter().map(|r| r.epoch).max().unwrap_or(1) as f64;
    let pts = |f: fn(&EpochRecord) -> f64| records.iter().map(|r| (r.epoch as f64, f(r))).collect::<Vec<_>>();
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{PANEL_H}" font-family="sans-serif">"#,
        2.0 * PANEL_W
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let sparsity = [
        Series { label: "group sparsity", color: "#1f77b4", points: pts(|r| r.group_sparsity) },
        Series { label: "FLOPs ratio", color: "#ff7f0e", points: pts(|r| r.flops_ratio) },
    ];
    panel(&mut svg, 0.0, "Sparsity", "percent", &sparsity, 100.0, epochs);
    let err = pts(|r| r.val_error);
    let top = nice_max(err.iter().map(|p| p.1).fold(0.0, f64::max));
    let error = [Series { label: "validation error", color: "#d62728", points: err }];
    panel(&mut svg, PANEL_W, "Error", "percent", &error, top, epochs);
    svg.push_str("</svg>\n");
    svg
}

pub fn cmd_plot(metrics: &Path, out: &Path) -> Result<()> {
    let records = read_metrics(metrics)?;
    if records.is_empty() {
        return Err(CliError::Config(format!("{} has no rows", metrics.display())));
    }
    std::fs::write(out, render_svg(&records))?;
    Ok(())
}
