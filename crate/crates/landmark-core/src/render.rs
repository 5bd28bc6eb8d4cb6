//! Deterministic SVG rendering of a landmark map, optionally overlaid on
//! ground truth. Map landmarks are orange labeled circles; ground truth shows
//! as small dark markers; a 1 m grid gives scale. When truth is supplied the
//! map is first brought into the truth frame with the evaluation similarity,
//! so corresponding markers coincide to the eye.

use std::fmt::Write as _;

use crate::aggregate::SemanticLandmarkMap;
use crate::evaluate::{apply_similarity, positional_error, GroundTruth};
use crate::model::Point2;
use crate::Result;

const PX_PER_M: f64 = 60.0;
const MARGIN_M: f64 = 1.0;

/// Fixed-precision coordinate formatting keeps the output byte-stable.
fn fmt(v: f64) -> String {
    format!("{v:.3}")
}

pub fn render_svg(map: &SemanticLandmarkMap, truth: Option<&GroundTruth>) -> Result<String> {
    // Bring the map into the truth frame when an alignment is computable.
    let mut aligned_note: Option<String> = None;
    let map_points: Vec<(String, Point2)> = {
        let raw: Vec<(String, Point2)> =
            map.clusters.iter().map(|c| (c.label.clone(), c.position)).collect();
        match truth {
            Some(truth) => match positional_error(map, truth) {
                Ok(report) => raw
                    .into_iter()
                    .map(|(label, p)| {
                        (label, apply_similarity(report.scale, &report.applied_transform, p))
                    })
                    .collect(),
                Err(e) => {
                    aligned_note = Some(format!("overlay drawn unaligned: {e}"));
                    raw
                }
            },
            None => raw,
        }
    };
    let truth_points: Vec<(&str, Point2)> = truth
        .map(|t| t.landmarks.iter().map(|l| (l.id.as_str(), l.position)).collect())
        .unwrap_or_default();

    // Viewport: everything drawn plus a margin; an empty scene shows a 10 m
    // grid so the output is still a valid, scaled canvas.
    let all: Vec<Point2> = map_points
        .iter()
        .map(|(_, p)| *p)
        .chain(truth_points.iter().map(|(_, p)| *p))
        .collect();
    let (min_x, max_x, min_y, max_y) = if all.is_empty() {
        (0.0, 10.0, 0.0, 10.0)
    } else {
        let min_x = all.iter().map(|p| p.x).fold(f64::INFINITY, f64::min) - MARGIN_M;
        let max_x = all.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max) + MARGIN_M;
        let min_y = all.iter().map(|p| p.y).fold(f64::INFINITY, f64::min) - MARGIN_M;
        let max_y = all.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max) + MARGIN_M;
        (min_x, max_x, min_y, max_y)
    };
    let width = max_x - min_x;
    let height = max_y - min_y;
    // SVG y grows downward; map meters to canvas with a flipped y.
    let cx = |x: f64| fmt(x - min_x);
    let cy = |y: f64| fmt(max_y - y);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"{:.0}\" viewBox=\"0 0 {} {}\">",
        width * PX_PER_M,
        height * PX_PER_M,
        fmt(width),
        fmt(height)
    );
    if let Some(note) = &aligned_note {
        let _ = writeln!(svg, "<!-- {} -->", note.replace("--", "__"));
    }
    let _ = writeln!(
        svg,
        "<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"#ffffff\"/>",
        fmt(width),
        fmt(height)
    );

    // 1 m grid on integer coordinates.
    let _ = writeln!(svg, "<g stroke=\"#d7d7d7\" stroke-width=\"0.02\">");
    let mut gx = min_x.ceil();
    while gx <= max_x {
        let _ = writeln!(
            svg,
            "<line x1=\"{x}\" y1=\"0\" x2=\"{x}\" y2=\"{h}\"/>",
            x = cx(gx),
            h = fmt(height)
        );
        gx += 1.0;
    }
    let mut gy = min_y.ceil();
    while gy <= max_y {
        let _ = writeln!(
            svg,
            "<line x1=\"0\" y1=\"{y}\" x2=\"{w}\" y2=\"{y}\"/>",
            y = cy(gy),
            w = fmt(width)
        );
        gy += 1.0;
    }
    let _ = writeln!(svg, "</g>");

    for (id, p) in &truth_points {
        let _ = writeln!(
            svg,
            "<circle class=\"truth\" cx=\"{}\" cy=\"{}\" r=\"0.08\" fill=\"#1a1a1a\"><title>{}</title></circle>",
            cx(p.x),
            cy(p.y),
            escape(id)
        );
    }
    for (label, p) in &map_points {
        let _ = writeln!(
            svg,
            "<circle class=\"landmark\" cx=\"{}\" cy=\"{}\" r=\"0.18\" fill=\"#e8801a\" fill-opacity=\"0.85\"/>",
            cx(p.x),
            cy(p.y)
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"0.35\" font-family=\"sans-serif\" fill=\"#333333\">{}</text>",
            fmt(p.x - min_x + 0.25),
            fmt(max_y - p.y + 0.12),
            escape(label)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
