//! Self-contained SVG line plots of trajectories. No display or font
//! dependencies; the output embeds everything it needs.

use std::fmt::Write as _;

/// One polyline: `values[k]` is plotted against step `k`.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub values: Vec<f64>,
}

/// Horizontal guide (e.g. a target level or a budget bound), drawn
/// dashed across the full width.
#[derive(Debug, Clone)]
pub struct Guide {
    pub label: String,
    pub level: f64,
}

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

/// Render series against the step index as a standalone SVG document.
pub fn line_plot_svg(title: &str, y_label: &str, series: &[Series], guides: &[Guide]) -> String {
    let max_len = series.iter().map(|s| s.values.len()).max().unwrap_or(0);
    let x_max = (max_len.saturating_sub(1)).max(1) as f64;

    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for s in series {
        for &v in &s.values {
            if v.is_finite() {
                y_min = y_min.min(v);
                y_max = y_max.max(v);
            }
        }
    }
    for g in guides {
        y_min = y_min.min(g.level);
        y_max = y_max.max(g.level);
    }
    if !y_min.is_finite() || !y_max.is_finite() {
        y_min = 0.0;
        y_max = 1.0;
    }
    if y_max - y_min < 1e-12 {
        y_min -= 0.5;
        y_max += 0.5;
    }
    let pad = 0.05 * (y_max - y_min);
    y_min -= pad;
    y_max += pad;

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |k: f64| MARGIN_LEFT + k / x_max * plot_w;
    let sy = |v: f64| MARGIN_TOP + (y_max - v) / (y_max - y_min) * plot_h;

    let mut svg = String::new();
    writeln!(
        svg,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"##
    )
    .unwrap();
    writeln!(
        svg,
        r##"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"##
    )
    .unwrap();
    writeln!(
        svg,
        r##"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"##,
        MARGIN_LEFT + plot_w / 2.0,
        escape(title)
    )
    .unwrap();

    // Axes box and ticks.
    writeln!(
        svg,
        r##"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#333" stroke-width="1"/>"##
    )
    .unwrap();
    for tick in 0..=5 {
        let frac = tick as f64 / 5.0;
        let y_val = y_max - frac * (y_max - y_min);
        let y_pix = MARGIN_TOP + frac * plot_h;
        writeln!(
            svg,
            r##"<line x1="{MARGIN_LEFT}" y1="{y_pix:.1}" x2="{:.1}" y2="{y_pix:.1}" stroke="#ddd" stroke-width="1"/>"##,
            MARGIN_LEFT + plot_w
        )
        .unwrap();
        writeln!(
            svg,
            r##"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"##,
            MARGIN_LEFT - 6.0,
            y_pix + 4.0,
            format_tick(y_val)
        )
        .unwrap();
        let x_val = frac * x_max;
        let x_pix = MARGIN_LEFT + frac * plot_w;
        writeln!(
            svg,
            r##"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"##,
            x_pix,
            MARGIN_TOP + plot_h + 18.0,
            format_tick(x_val)
        )
        .unwrap();
    }
    writeln!(
        svg,
        r##"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle">step k</text>"##,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    )
    .unwrap();
    writeln!(
        svg,
        r##"<text x="16" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"##,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0,
        escape(y_label)
    )
    .unwrap();

    for g in guides {
        let y_pix = sy(g.level);
        writeln!(
            svg,
            r##"<line x1="{MARGIN_LEFT}" y1="{y_pix:.1}" x2="{:.1}" y2="{y_pix:.1}" stroke="#666" stroke-width="1" stroke-dasharray="6,4"/>"##,
            MARGIN_LEFT + plot_w
        )
        .unwrap();
    }

    for (idx, s) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let points: Vec<String> = s
            .values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(k, &v)| format!("{:.2},{:.2}", sx(k as f64), sy(v)))
            .collect();
        writeln!(
            svg,
            r##"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.6"/>"##,
            points.join(" ")
        )
        .unwrap();
        // Legend entry.
        let ly = MARGIN_TOP + 16.0 * idx as f64 + 8.0;
        let lx = WIDTH - MARGIN_RIGHT + 12.0;
        writeln!(
            svg,
            r##"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"##,
            lx + 18.0
        )
        .unwrap();
        writeln!(
            svg,
            r##"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11">{}</text>"##,
            lx + 24.0,
            ly + 4.0,
            escape(&s.label)
        )
        .unwrap();
    }
    for (idx, g) in guides.iter().enumerate() {
        let ly = MARGIN_TOP + 16.0 * (series.len() + idx) as f64 + 8.0;
        let lx = WIDTH - MARGIN_RIGHT + 12.0;
        writeln!(
            svg,
            r##"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="#666" stroke-width="1" stroke-dasharray="6,4"/>"##,
            lx + 18.0
        )
        .unwrap();
        writeln!(
            svg,
            r##"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11">{}</text>"##,
            lx + 24.0,
            ly + 4.0,
            escape(&g.label)
        )
        .unwrap();
    }

    writeln!(svg, "</svg>").unwrap();
    svg
}

fn format_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let abs = v.abs();
    if (1e-3..1e5).contains(&abs) {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.2e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn produces_wellformed_svg() {
        let series = [
            Series {
                label: "x_1".to_string(),
                values: vec![0.0, 1.0, 1.5, 1.8, 2.0],
            },
            Series {
                label: "x_2".to_string(),
                values: vec![0.0, -1.0, -0.5, 0.2, 0.4],
            },
        ];
        let guides = [Guide {
            label: "target".to_string(),
            level: 2.0,
        }];
        let svg = line_plot_svg("actions", "x", &series, &guides);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("stroke-dasharray"));
        assert!(svg.contains("target"));
    }

    #[test]
    fn degenerate_input_still_renders() {
        let svg = line_plot_svg(
            "flat",
            "y",
            &[Series {
                label: "c".to_string(),
                values: vec![3.0; 4],
            }],
            &[],
        );
        assert!(svg.contains("<polyline"));
    }
}
