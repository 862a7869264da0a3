//! Static SVG rendering of a timeline: RTT on top, per-node CPU below,
//! with markers at the ticks where the orchestrator acted.
//!
//! The output is deterministic (fixed palette, fixed float formatting) so
//! report files can be diffed across runs.

use std::fmt::Write;

use crate::scenario::Timeline;

const WIDTH: f64 = 900.0;
const PANEL_HEIGHT: f64 = 220.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 30.0;
const PANEL_GAP: f64 = 50.0;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
];

#[derive(Debug, thiserror::Error)]
#[error("timeline has no ticks to plot")]
pub struct EmptyTimeline;

struct Panel {
    top: f64,
    t_max: f64,
    y_max: f64,
}

impl Panel {
    fn x(&self, t_ms: u64) -> f64 {
        let usable = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        MARGIN_LEFT + (t_ms as f64 / self.t_max) * usable
    }

    fn y(&self, value: f64) -> f64 {
        self.top + PANEL_HEIGHT - (value / self.y_max) * PANEL_HEIGHT
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

fn polyline(points: &[(f64, f64)], color: &str) -> String {
    let mut path = String::new();
    for (i, (x, y)) in points.iter().enumerate() {
        if i > 0 {
            path.push(' ');
        }
        let _ = write!(path, "{},{}", fmt(*x), fmt(*y));
    }
    format!(r#"<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>"#)
}

fn axis(out: &mut String, panel: &Panel, title: &str, unit: &str) {
    let bottom = panel.top + PANEL_HEIGHT;
    let _ = write!(
        out,
        r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#cccccc"/>"##,
        fmt(MARGIN_LEFT),
        fmt(panel.top),
        fmt(WIDTH - MARGIN_LEFT - MARGIN_RIGHT),
        fmt(PANEL_HEIGHT)
    );
    let _ = write!(
        out,
        r#"<text x="{}" y="{}" font-size="13" font-family="sans-serif">{title}</text>"#,
        fmt(MARGIN_LEFT),
        fmt(panel.top - 8.0)
    );
    // Four horizontal gridlines with value labels.
    for i in 0..=4 {
        let value = panel.y_max * (i as f64) / 4.0;
        let y = panel.y(value);
        if i > 0 && i < 4 {
            let _ = write!(
                out,
                r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#eeeeee"/>"##,
                fmt(MARGIN_LEFT),
                fmt(y),
                fmt(WIDTH - MARGIN_RIGHT),
                fmt(y)
            );
        }
        let _ = write!(
            out,
            r#"<text x="{}" y="{}" font-size="10" font-family="sans-serif" text-anchor="end">{}</text>"#,
            fmt(MARGIN_LEFT - 6.0),
            fmt(y + 3.0),
            fmt(value)
        );
    }
    // Time labels every quarter.
    for i in 0..=4 {
        let t = panel.t_max * (i as f64) / 4.0;
        let x = MARGIN_LEFT + (WIDTH - MARGIN_LEFT - MARGIN_RIGHT) * (i as f64) / 4.0;
        let _ = write!(
            out,
            r#"<text x="{}" y="{}" font-size="10" font-family="sans-serif" text-anchor="middle">{} s</text>"#,
            fmt(x),
            fmt(bottom + 14.0),
            fmt(t / 1000.0)
        );
    }
    let _ = write!(
        out,
        r#"<text x="{}" y="{}" font-size="10" font-family="sans-serif" transform="rotate(-90 {} {})">{unit}</text>"#,
        fmt(MARGIN_LEFT - 40.0),
        fmt(panel.top + PANEL_HEIGHT / 2.0),
        fmt(MARGIN_LEFT - 40.0),
        fmt(panel.top + PANEL_HEIGHT / 2.0)
    );
}

/// Render the timeline as a standalone SVG document.
pub fn render_svg(timeline: &Timeline) -> Result<String, EmptyTimeline> {
    if timeline.ticks.is_empty() {
        return Err(EmptyTimeline);
    }
    let t_max = timeline.ticks.last().unwrap().t_ms.max(1) as f64;
    let rtt_max = timeline
        .ticks
        .iter()
        .filter_map(|t| t.rtt_ms)
        .fold(1.0f64, f64::max)
        * 1.2;
    let height = MARGIN_TOP + 2.0 * PANEL_HEIGHT + PANEL_GAP + 40.0;

    let mut out = String::new();
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        fmt(WIDTH),
        fmt(height),
        fmt(WIDTH),
        fmt(height)
    );
    out.push_str(r#"<rect width="100%" height="100%" fill="white"/>"#);

    let rtt_panel = Panel {
        top: MARGIN_TOP,
        t_max,
        y_max: rtt_max,
    };
    axis(&mut out, &rtt_panel, "UE to APP round-trip time", "ms");
    let rtt_points: Vec<(f64, f64)> = timeline
        .ticks
        .iter()
        .filter_map(|t| t.rtt_ms.map(|rtt| (rtt_panel.x(t.t_ms), rtt_panel.y(rtt))))
        .collect();
    if !rtt_points.is_empty() {
        out.push_str(&polyline(&rtt_points, "#111111"));
    }

    let cpu_panel = Panel {
        top: MARGIN_TOP + PANEL_HEIGHT + PANEL_GAP,
        t_max,
        y_max: 100.0,
    };
    axis(&mut out, &cpu_panel, "Node CPU usage", "percent");
    for (i, node) in timeline.node_ids.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<(f64, f64)> = timeline
            .ticks
            .iter()
            .map(|t| (cpu_panel.x(t.t_ms), cpu_panel.y(t.cpu_percent[i])))
            .collect();
        out.push_str(&polyline(&points, color));
        // Legend entry.
        let lx = MARGIN_LEFT + 10.0 + (i as f64) * 140.0;
        let ly = cpu_panel.top + 14.0;
        let _ = write!(
            out,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/><text x="{}" y="{}" font-size="11" font-family="sans-serif">{node}</text>"#,
            fmt(lx),
            fmt(ly - 9.0),
            fmt(lx + 14.0),
            fmt(ly)
        );
    }

    // Vertical markers where the orchestrator acted (relocations and the
    // initial placement).
    for tick in &timeline.ticks {
        if let Some(action) = &tick.action {
            if action == "keep" {
                continue;
            }
            let x = rtt_panel.x(tick.t_ms);
            let _ = write!(
                out,
                r##"<line x1="{x}" y1="{top}" x2="{x}" y2="{bottom}" stroke="#9467bd" stroke-dasharray="4 3"/><text x="{tx}" y="{ty}" font-size="9" font-family="sans-serif" fill="#9467bd">{action}</text>"##,
                x = fmt(x),
                top = fmt(MARGIN_TOP),
                bottom = fmt(cpu_panel.top + PANEL_HEIGHT),
                tx = fmt(x + 3.0),
                ty = fmt(MARGIN_TOP + 10.0),
            );
        }
    }

    out.push_str("</svg>\n");
    Ok(out)
}
