//! Activation bar chart as a standalone SVG.

use std::fmt::Write;

use decstack_core::{ActivationTrace, AblationMask, NodeRegistry};

const BAR_WIDTH: f64 = 18.0;
const GAP: f64 = 4.0;
const HEIGHT: f64 = 240.0;
const MARGIN: f64 = 40.0;

/// One bar per ablatable node, engram members in red, others in grey.
/// Bars grow up for positive and down for negative activations.
pub fn activation_svg(trace: &ActivationTrace, registry: &NodeRegistry, engram: &AblationMask) -> String {
    let bars: Vec<(String, f64, bool)> = registry
        .ablatable()
        .map(|id| (id.to_string(), trace.activation(&id).unwrap_or(0.0), engram.contains(&id)))
        .collect();
    let peak = bars.iter().map(|b| b.1.abs()).fold(0.0, f64::max).max(1e-12);
    let width = 2.0 * MARGIN + bars.len() as f64 * (BAR_WIDTH + GAP);
    let total_height = HEIGHT + 2.0 * MARGIN + 90.0;
    let axis = MARGIN + HEIGHT / 2.0;
    let half = HEIGHT / 2.0;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{total_height}" font-family="monospace" font-size="10">"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{MARGIN}" y="20">decision {} label {}</text>"#,
        escape(&trace.decision_id),
        trace.decision.label
    );
    let _ = writeln!(
        svg,
        r##"<line x1="{MARGIN}" y1="{axis}" x2="{}" y2="{axis}" stroke="#333"/>"##,
        width - MARGIN
    );
    for (i, (name, value, in_engram)) in bars.iter().enumerate() {
        let x = MARGIN + i as f64 * (BAR_WIDTH + GAP);
        let h = value.abs() / peak * half;
        let y = if *value >= 0.0 { axis - h } else { axis };
        let fill = if *in_engram { "#d62728" } else { "#999999" };
        let _ = writeln!(
            svg,
            r#"<rect x="{x:.1}" y="{y:.1}" width="{BAR_WIDTH}" height="{h:.1}" fill="{fill}"><title>{} = {value}</title></rect>"#,
            escape(name)
        );
        let lx = x + BAR_WIDTH / 2.0;
        let ly = MARGIN + HEIGHT + 8.0;
        let _ = writeln!(
            svg,
            r#"<text x="{lx:.1}" y="{ly:.1}" transform="rotate(60 {lx:.1} {ly:.1})">{}</text>"#,
            escape(name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
