//! Minimal hand-written SVG charts: line panels and annotated heatmaps.

use std::fmt::Write as _;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// One subplot: solid series plus an optional dashed horizontal reference.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub title: String,
    pub series: Vec<Series>,
    pub reference: Option<(String, f64)>,
}

/// Side-by-side line panels sharing the y range; x uses a log scale when
/// every x is positive and they span more than one decade.
pub fn line_panels(title: &str, x_label: &str, y_label: &str, panels: &[Panel]) -> String {
    let (pw, ph, margin) = (260.0, 200.0, 50.0);
    let cols = panels.len().clamp(1, 3);
    let rows = panels.len().div_ceil(cols).max(1);
    let width = cols as f64 * (pw + margin) + margin;
    let height = rows as f64 * (ph + margin + 20.0) + 80.0;

    let ys = panels.iter().flat_map(|p| {
        p.series
            .iter()
            .flat_map(|s| s.points.iter().map(|q| q.1))
            .chain(p.reference.as_ref().map(|r| r.1))
    });
    let (mut y0, mut y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    if !y0.is_finite() {
        (y0, y1) = (0.0, 1.0);
    }
    if (y1 - y0).abs() < 1e-9 {
        y0 -= 0.05;
        y1 += 0.05;
    }
    let pad = (y1 - y0) * 0.08;
    let (y0, y1) = (y0 - pad, y1 + pad);

    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        out,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        width / 2.0,
        esc(title)
    )
    .unwrap();

    let mut legend: Vec<String> = Vec::new();
    for (n, panel) in panels.iter().enumerate() {
        let ox = margin + (n % cols) as f64 * (pw + margin);
        let oy = 50.0 + (n / cols) as f64 * (ph + margin + 20.0);
        let xs: Vec<f64> = panel.series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
        let (x0, x1) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        let log = x0 > 0.0 && x1 / x0 > 10.0;
        let tx = |x: f64| if log { x.ln() } else { x };
        let (lx0, lx1) = if x0.is_finite() { (tx(x0), tx(x1)) } else { (0.0, 1.0) };
        let span = if (lx1 - lx0).abs() < 1e-12 { 1.0 } else { lx1 - lx0 };
        let px = |x: f64| ox + 10.0 + (tx(x) - lx0) / span * (pw - 20.0);
        let py = |y: f64| oy + ph - (y - y0) / (y1 - y0) * ph;

        writeln!(
            out,
            r##"<rect x="{ox:.1}" y="{oy:.1}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##
        )
        .unwrap();
        writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="12">{}</text>"#,
            ox + pw / 2.0,
            oy - 6.0,
            esc(&panel.title)
        )
        .unwrap();
        for i in 0..=4 {
            let y = y0 + (y1 - y0) * i as f64 / 4.0;
            writeln!(
                out,
                r##"<text x="{:.1}" y="{:.1}" text-anchor="end" fill="#444">{y:.2}</text>"##,
                ox - 4.0,
                py(y) + 4.0
            )
            .unwrap();
        }
        let mut ticks: Vec<f64> = xs.clone();
        ticks.sort_by(f64::total_cmp);
        ticks.dedup();
        for x in ticks {
            writeln!(
                out,
                r##"<text x="{:.1}" y="{:.1}" text-anchor="middle" fill="#444">{x}</text>"##,
                px(x),
                oy + ph + 14.0
            )
            .unwrap();
        }
        if let Some((label, y)) = &panel.reference {
            writeln!(
                out,
                r##"<line x1="{ox:.1}" y1="{0:.1}" x2="{1:.1}" y2="{0:.1}" stroke="#555" stroke-dasharray="5,4"/>"##,
                py(*y),
                ox + pw
            )
            .unwrap();
            if !legend.contains(label) {
                legend.push(label.clone());
            }
        }
        for s in &panel.series {
            let idx = match legend.iter().position(|l| l == &s.label) {
                Some(i) => i,
                None => {
                    legend.push(s.label.clone());
                    legend.len() - 1
                }
            };
            let color = PALETTE[idx % PALETTE.len()];
            let mut pts = s.points.clone();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y))).collect();
            writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                path.join(" ")
            )
            .unwrap();
            for (x, y) in pts {
                writeln!(
                    out,
                    r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#,
                    px(x),
                    py(y)
                )
                .unwrap();
            }
        }
    }
    let ly = height - 18.0;
    writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        width / 2.0,
        ly - 16.0,
        esc(x_label)
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="14" y="{:.1}" transform="rotate(-90 14 {:.1})" text-anchor="middle">{}</text>"#,
        height / 2.0,
        height / 2.0,
        esc(y_label)
    )
    .unwrap();
    for (i, label) in legend.iter().enumerate() {
        let x = margin + i as f64 * 110.0;
        let dashed = panels.iter().any(|p| p.reference.as_ref().is_some_and(|r| &r.0 == label))
            && !panels.iter().any(|p| p.series.iter().any(|s| &s.label == label));
        let style = if dashed {
            r##"stroke="#555" stroke-dasharray="5,4""##.to_string()
        } else {
            format!(r#"stroke="{}" stroke-width="2""#, PALETTE[i % PALETTE.len()])
        };
        writeln!(
            out,
            r#"<line x1="{x:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" {style}/><text x="{:.1}" y="{:.1}">{}</text>"#,
            x + 20.0,
            x + 24.0,
            ly + 4.0,
            esc(label)
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}

/// Diverging heatmap; `None` cells are drawn grey and labelled "n/a".
pub fn heatmap(
    title: &str,
    row_labels: &[String],
    col_labels: &[String],
    values: &[Vec<Option<f64>>],
    fmt: impl Fn(f64) -> String,
) -> String {
    let cell = 56.0;
    let (left, top) = (90.0, 60.0);
    let width = left + cell * col_labels.len() as f64 + 20.0;
    let height = top + cell * row_labels.len() as f64 + 20.0;
    let max_abs = values
        .iter()
        .flatten()
        .flatten()
        .fold(0.0_f64, |m, v| m.max(v.abs()))
        .max(1e-12);
    let all_nonneg = values.iter().flatten().flatten().all(|&v| v >= 0.0);

    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        out,
        r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        width / 2.0,
        esc(title)
    )
    .unwrap();
    for (j, c) in col_labels.iter().enumerate() {
        writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            left + cell * (j as f64 + 0.5),
            top - 8.0,
            esc(c)
        )
        .unwrap();
    }
    for (i, r) in row_labels.iter().enumerate() {
        let y = top + cell * i as f64;
        writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            left - 6.0,
            y + cell / 2.0 + 4.0,
            esc(r)
        )
        .unwrap();
        for j in 0..col_labels.len() {
            let x = left + cell * j as f64;
            let v = values.get(i).and_then(|row| row.get(j)).copied().flatten();
            let (fill, text) = match v {
                None => ("#dddddd".to_string(), "n/a".to_string()),
                Some(v) => {
                    let t = (v.abs() / max_abs).clamp(0.0, 1.0);
                    let fade = (255.0 * (1.0 - t)).round() as u8;
                    let fill = if all_nonneg || v >= 0.0 {
                        format!("#{fade:02x}{fade:02x}ff")
                    } else {
                        format!("#ff{fade:02x}{fade:02x}")
                    };
                    (fill, fmt(v))
                }
            };
            writeln!(
                out,
                r##"<rect x="{x:.1}" y="{y:.1}" width="{cell}" height="{cell}" fill="{fill}" stroke="#fff"/><text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
                x + cell / 2.0,
                y + cell / 2.0 + 4.0,
                esc(&text)
            )
            .unwrap();
        }
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panels_render_series_and_dashed_reference() {
        let svg = line_panels(
            "t",
            "size",
            "nDCG@10",
            &[Panel {
                title: "fi".into(),
                series: vec![Series {
                    label: "tau=1".into(),
                    points: vec![(100.0, 0.3), (1000.0, 0.5)],
                }],
                reference: Some(("baseline".into(), 0.1)),
            }],
        );
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("polyline"));
        assert!(svg.contains("stroke-dasharray"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn heatmap_marks_missing() {
        let svg = heatmap(
            "h",
            &["a".into()],
            &["x".into(), "y".into()],
            &[vec![Some(-1.5), None]],
            |v| format!("{v:+.1}%"),
        );
        assert!(svg.contains("n/a"));
        assert!(svg.contains("-1.5%"));
    }

    #[test]
    fn labels_are_escaped() {
        let svg = heatmap("<&>", &[], &[], &[], |v| v.to_string());
        assert!(svg.contains("&lt;&amp;&gt;"));
    }
}
