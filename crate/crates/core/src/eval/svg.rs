use std::fmt::Write as _;
use std::path::Path;

use super::EvalReport;
use crate::error::{Error, Result};
use crate::signal::SNR_GRID;

const PANEL_W: f64 = 300.0;
const PANEL_H: f64 = 220.0;
const MARGIN_L: f64 = 48.0;
const MARGIN_R: f64 = 14.0;
const MARGIN_T: f64 = 26.0;
const MARGIN_B: f64 = 38.0;
const COLS: usize = 3;
const LEGEND_H: f64 = 34.0;

const CLEAN_COLOR: &str = "#1f4e9c";
const ADV_COLOR: &str = "#c0392b";

/// Small-multiples accuracy-vs-SNR chart: one panel per classifier, clean
/// accuracy solid, adversarial dashed.
pub fn render_svg(report: &EvalReport) -> Result<String> {
    let kinds = report.classifiers();
    if kinds.is_empty() {
        return Err(Error::invalid("report has no rows"));
    }
    let rows = kinds.len().div_ceil(COLS);
    let width = PANEL_W * COLS.min(kinds.len()) as f64;
    let height = LEGEND_H + PANEL_H * rows as f64;
    let (snr_lo, snr_hi) = (f64::from(SNR_GRID[0]), f64::from(SNR_GRID[SNR_GRID.len() - 1]));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<g id="legend"><line x1="12" y1="17" x2="42" y2="17" stroke="{CLEAN_COLOR}" stroke-width="2"/><text x="48" y="21">clean</text><line x1="100" y1="17" x2="130" y2="17" stroke="{ADV_COLOR}" stroke-width="2" stroke-dasharray="6 4"/><text x="136" y="21">adversarial (C-W on MLP)</text></g>"#
    );

    for (i, &kind) in kinds.iter().enumerate() {
        let ox = PANEL_W * (i % COLS) as f64;
        let oy = LEGEND_H + PANEL_H * (i / COLS) as f64;
        let (x0, x1) = (ox + MARGIN_L, ox + PANEL_W - MARGIN_R);
        let (y0, y1) = (oy + MARGIN_T, oy + PANEL_H - MARGIN_B);
        let px = |snr: f64| x0 + (snr - snr_lo) / (snr_hi - snr_lo) * (x1 - x0);
        let py = |acc: f64| y1 - acc * (y1 - y0);

        let _ = writeln!(s, r#"<g id="panel-{}">"#, kind.slug());
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-weight="bold">{}</text>"#,
            (x0 + x1) / 2.0,
            oy + 16.0,
            kind.display_name()
        );
        let _ = writeln!(
            s,
            r##"<rect x="{x0:.1}" y="{y0:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#555"/>"##,
            x1 - x0,
            y1 - y0
        );
        for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let y = py(tick);
            let _ = writeln!(
                s,
                r##"<line x1="{:.1}" y1="{y:.1}" x2="{x1:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{tick}</text>"##,
                x0,
                x0 - 4.0,
                y + 4.0
            );
        }
        for tick in [-20, -10, 0, 10, 18] {
            let x = px(f64::from(tick));
            let _ = writeln!(
                s,
                r##"<line x1="{x:.1}" y1="{y1:.1}" x2="{x:.1}" y2="{:.1}" stroke="#555"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{tick}</text>"##,
                y1 + 4.0,
                y1 + 15.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">SNR (dB)</text>"#,
            (x0 + x1) / 2.0,
            y1 + 30.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" transform="rotate(-90 {:.1} {:.1})">accuracy</text>"#,
            ox + 12.0,
            (y0 + y1) / 2.0,
            ox + 12.0,
            (y0 + y1) / 2.0
        );

        let points = |adv: bool| {
            report
                .rows_for(kind)
                .map(|r| {
                    let acc = if adv { r.accuracy_adv() } else { r.accuracy_clean() };
                    format!("{:.2},{:.2}", px(f64::from(r.snr_db)), py(acc))
                })
                .collect::<Vec<_>>()
                .join(" ")
        };
        let _ = writeln!(
            s,
            r#"<polyline class="clean" fill="none" stroke="{CLEAN_COLOR}" stroke-width="1.8" points="{}"/>"#,
            points(false)
        );
        let _ = writeln!(
            s,
            r#"<polyline class="adversarial" fill="none" stroke="{ADV_COLOR}" stroke-width="1.8" stroke-dasharray="6 4" points="{}"/>"#,
            points(true)
        );
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_svg(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, render_svg(report)?).map_err(|e| Error::io(path, e))
}
