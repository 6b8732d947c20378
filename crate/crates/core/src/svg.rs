//! Self-contained SVG heatmaps for slices and admissibility surfaces.
//! Inline styles only, no external assets, so reports travel with datasets.

use crate::limits::HeadroomSurface;
use crate::slice::SliceTable;

const CELL: f64 = 46.0;
const MARGIN_LEFT: f64 = 110.0;
const MARGIN_TOP: f64 = 50.0;
const MARGIN_BOTTOM: f64 = 70.0;
const COLORBAR_W: f64 = 70.0;

/// Five-stop linear color scale (dark blue to yellow).
fn color(t: f64) -> String {
    let stops: [(f64, [f64; 3]); 5] = [
        (0.00, [13.0, 8.0, 135.0]),
        (0.25, [126.0, 3.0, 168.0]),
        (0.50, [204.0, 71.0, 120.0]),
        (0.75, [248.0, 149.0, 64.0]),
        (1.00, [240.0, 249.0, 33.0]),
    ];
    let t = t.clamp(0.0, 1.0);
    let mut rgb = stops[0].1;
    for w in stops.windows(2) {
        let (t0, c0) = w[0];
        let (t1, c1) = w[1];
        if t >= t0 && t <= t1 {
            let f = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
            rgb = [
                c0[0] + f * (c1[0] - c0[0]),
                c0[1] + f * (c1[1] - c0[1]),
                c0[2] + f * (c1[2] - c0[2]),
            ];
            break;
        }
    }
    format!(
        "rgb({},{},{})",
        rgb[0].round() as u8,
        rgb[1].round() as u8,
        rgb[2].round() as u8
    )
}

/// Engineering-notation power label.
fn power_label(w: f64) -> String {
    let a = w.abs();
    if a == 0.0 {
        "0".to_string()
    } else if a >= 1.0 {
        format!("{w:.3} W")
    } else if a >= 1e-3 {
        format!("{:.3} mW", w * 1e3)
    } else if a >= 1e-6 {
        format!("{:.3} uW", w * 1e6)
    } else {
        format!("{:.3} nW", w * 1e9)
    }
}

fn header(width: f64, height: f64, title: &str) -> String {
    format!(
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">
<rect width="100%" height="100%" fill="white"/>
<text x="{tx:.0}" y="24" font-family="monospace" font-size="15" fill="#222">{title}</text>
"##,
        tx = MARGIN_LEFT
    )
}

fn axis_labels(x_axis: &[f64], y_axis: &[f64], x_name: &str, y_name: &str, height: f64) -> String {
    let mut out = String::new();
    for (i, &x) in x_axis.iter().enumerate() {
        let px = MARGIN_LEFT + (i as f64 + 0.5) * CELL;
        out.push_str(&format!(
            "<text x=\"{px:.1}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"10\" fill=\"#333\" text-anchor=\"end\" transform=\"rotate(-45 {px:.1} {:.1})\">{}</text>\n",
            height - MARGIN_BOTTOM + 14.0,
            height - MARGIN_BOTTOM + 14.0,
            power_label(x)
        ));
    }
    for (j, &y) in y_axis.iter().enumerate() {
        let py = height - MARGIN_BOTTOM - (j as f64 + 0.5) * CELL;
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{py:.1}\" font-family=\"monospace\" font-size=\"10\" fill=\"#333\" text-anchor=\"end\" dominant-baseline=\"middle\">{}</text>\n",
            MARGIN_LEFT - 6.0,
            power_label(y)
        ));
    }
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"12\" fill=\"#222\">{x_name}</text>\n",
        MARGIN_LEFT,
        height - 8.0
    ));
    out.push_str(&format!(
        "<text x=\"16\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"12\" fill=\"#222\" transform=\"rotate(-90 16 {:.1})\">{y_name}</text>\n",
        MARGIN_TOP + 40.0,
        MARGIN_TOP + 40.0
    ));
    out
}

/// Render a slice as a heatmap. Gap cells (invalid interpolation) are drawn
/// hatched gray so missing coverage is visible, never interpolated over.
pub fn render_slice_heatmap(t: &SliceTable) -> String {
    let nx = t.x_axis_w.len();
    let ny = t.y_axis_w.len();
    let width = MARGIN_LEFT + nx as f64 * CELL + COLORBAR_W + 60.0;
    let height = MARGIN_TOP + ny as f64 * CELL + MARGIN_BOTTOM;
    let (lo, hi) = t.value_range().unwrap_or((0.0, 1.0));
    let span = if hi > lo { hi - lo } else { 1.0 };

    let mut svg = header(
        width,
        height,
        &format!("{} over {} x {}", t.field, t.x_stage, t.y_stage),
    );
    svg.push_str(
        "<defs><pattern id=\"gap\" width=\"6\" height=\"6\" patternUnits=\"userSpaceOnUse\" patternTransform=\"rotate(45)\"><rect width=\"6\" height=\"6\" fill=\"#e8e8e8\"/><line x1=\"0\" y1=\"0\" x2=\"0\" y2=\"6\" stroke=\"#b0b0b0\" stroke-width=\"2\"/></pattern></defs>\n",
    );

    for iy in 0..ny {
        for ix in 0..nx {
            let px = MARGIN_LEFT + ix as f64 * CELL;
            let py = height - MARGIN_BOTTOM - (iy as f64 + 1.0) * CELL;
            match t.value_at(ix, iy) {
                Some(v) => {
                    let fill = color((v - lo) / span);
                    svg.push_str(&format!(
                        "<rect x=\"{px:.1}\" y=\"{py:.1}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"{fill}\" stroke=\"#fff\" stroke-width=\"0.5\"><title>{} = {v:.6e} at x={}, y={}</title></rect>\n",
                        t.field,
                        power_label(t.x_axis_w[ix]),
                        power_label(t.y_axis_w[iy]),
                    ));
                }
                None => {
                    svg.push_str(&format!(
                        "<rect x=\"{px:.1}\" y=\"{py:.1}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"url(#gap)\" stroke=\"#fff\" stroke-width=\"0.5\"><title>no data</title></rect>\n",
                    ));
                }
            }
        }
    }

    // Colorbar, linear scale.
    let bar_x = MARGIN_LEFT + nx as f64 * CELL + 24.0;
    let bar_h = ny as f64 * CELL;
    let steps = 32;
    for i in 0..steps {
        let f = i as f64 / (steps - 1) as f64;
        let y = height - MARGIN_BOTTOM - (f * bar_h) - bar_h / steps as f64;
        svg.push_str(&format!(
            "<rect x=\"{bar_x:.1}\" y=\"{y:.1}\" width=\"16\" height=\"{:.1}\" fill=\"{}\"/>\n",
            bar_h / steps as f64 + 1.0,
            color(f)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"10\" fill=\"#333\">{hi:.4e}</text>\n",
        bar_x + 20.0,
        MARGIN_TOP + 10.0
    ));
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"10\" fill=\"#333\">{lo:.4e}</text>\n",
        bar_x + 20.0,
        height - MARGIN_BOTTOM
    ));

    svg.push_str(&axis_labels(
        &t.x_axis_w,
        &t.y_axis_w,
        &format!("{} power", t.x_stage),
        &format!("{} power", t.y_stage),
        height,
    ));
    svg.push_str("</svg>\n");
    svg
}

/// Render an admissibility surface: green admissible, red/labelled binding
/// constraints, hatched for unmeasured cells.
pub fn render_headroom_map(s: &HeadroomSurface) -> String {
    let nx = s.x_axis.len();
    let ny = s.y_axis.len();
    let width = MARGIN_LEFT + nx as f64 * CELL + 210.0;
    let height = MARGIN_TOP + ny as f64 * CELL + MARGIN_BOTTOM;

    let mut svg = header(
        width,
        height,
        &format!("admissible loads over {} x {}", s.x_stage, s.y_stage),
    );
    svg.push_str(
        "<defs><pattern id=\"gap\" width=\"6\" height=\"6\" patternUnits=\"userSpaceOnUse\" patternTransform=\"rotate(45)\"><rect width=\"6\" height=\"6\" fill=\"#e8e8e8\"/><line x1=\"0\" y1=\"0\" x2=\"0\" y2=\"6\" stroke=\"#b0b0b0\" stroke-width=\"2\"/></pattern></defs>\n",
    );

    // Stable legend: collect binding labels in first-seen order.
    let mut labels: Vec<String> = Vec::new();
    for p in &s.points {
        if let Some(b) = &p.binding {
            if b != "INVALID_CELL" && !labels.contains(b) {
                labels.push(b.clone());
            }
        }
    }
    let binding_colors = ["#c0392b", "#8e44ad", "#d35400", "#2c3e50"];

    for (i, p) in s.points.iter().enumerate() {
        let ix = i % nx;
        let iy = i / nx;
        let px = MARGIN_LEFT + ix as f64 * CELL;
        let py = height - MARGIN_BOTTOM - (iy as f64 + 1.0) * CELL;
        let (fill, title) = if p.admissible {
            ("#27ae60".to_string(), "admissible".to_string())
        } else {
            match p.binding.as_deref() {
                Some("INVALID_CELL") | None => ("url(#gap)".to_string(), "no data".to_string()),
                Some(b) => {
                    let idx = labels.iter().position(|l| l == b).unwrap_or(0);
                    (
                        binding_colors[idx % binding_colors.len()].to_string(),
                        format!("binding: {b}"),
                    )
                }
            }
        };
        svg.push_str(&format!(
            "<rect x=\"{px:.1}\" y=\"{py:.1}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"{fill}\" stroke=\"#fff\" stroke-width=\"0.5\"><title>{title} at x={}, y={}</title></rect>\n",
            power_label(p.x_w),
            power_label(p.y_w),
        ));
    }

    // Legend.
    let legend_x = MARGIN_LEFT + nx as f64 * CELL + 24.0;
    let mut legend_y = MARGIN_TOP + 10.0;
    let legend_entry = |color: &str, text: &str, y: f64| {
        format!(
            "<rect x=\"{legend_x:.1}\" y=\"{:.1}\" width=\"14\" height=\"14\" fill=\"{color}\"/>\n<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"11\" fill=\"#222\">{text}</text>\n",
            y - 11.0,
            legend_x + 20.0,
            y
        )
    };
    svg.push_str(&legend_entry("#27ae60", "admissible", legend_y));
    for (idx, label) in labels.iter().enumerate() {
        legend_y += 22.0;
        svg.push_str(&legend_entry(
            binding_colors[idx % binding_colors.len()],
            label,
            legend_y,
        ));
    }
    legend_y += 22.0;
    svg.push_str(&legend_entry("url(#gap)", "no data", legend_y));

    svg.push_str(&axis_labels(
        &s.x_axis,
        &s.y_axis,
        &format!("{} power", s.x_stage),
        &format!("{} power", s.y_stage),
        height,
    ));
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stage::StageId;

    #[test]
    fn slice_heatmap_is_self_contained_svg() {
        let t = SliceTable {
            x_stage: StageId::Stl,
            y_stage: StageId::Mxc,
            field: "t_mxc".to_string(),
            x_axis_w: vec![0.0, 0.01],
            y_axis_w: vec![0.0, 1e-5],
            values: vec![Some(0.007), Some(0.008), None, Some(0.02)],
        };
        let svg = render_slice_heatmap(&t);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("url(#gap)")); // explicit gap cell
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(!svg.contains("href")); // no external assets
    }
}
