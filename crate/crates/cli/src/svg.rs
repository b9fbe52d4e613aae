//! SVG scatter of ground truth (green) and predictions (red).

use std::fmt::Write as _;

use crowdpoint::{Point, Prediction};

use crate::format::sig6;

pub fn scatter(width: f64, height: f64, ground_truth: &[Point], predictions: &[Prediction]) -> String {
    let mut svg = String::new();
    let (w, h) = (sig6(width), sig6(height));
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    );
    let _ = writeln!(
        svg,
        "<rect width=\"{w}\" height=\"{h}\" fill=\"white\" stroke=\"black\"/>"
    );
    let _ = writeln!(svg, "<g fill=\"green\">");
    for p in ground_truth {
        let _ = writeln!(svg, "<circle cx=\"{}\" cy=\"{}\" r=\"2\"/>", sig6(p.x), sig6(p.y));
    }
    let _ = writeln!(svg, "</g>\n<g fill=\"none\" stroke=\"red\">");
    for p in predictions {
        let _ = writeln!(
            svg,
            "<circle cx=\"{}\" cy=\"{}\" r=\"3\" stroke-opacity=\"{}\"/>",
            sig6(p.point.x),
            sig6(p.point.y),
            sig6(p.confidence)
        );
    }
    svg.push_str("</g>\n</svg>\n");
    svg
}
