//! Deterministic SVG plot of the residual infinity norm against time on a
//! log scale. The output is a pure function of the trace, so identical
//! traces produce byte-identical files.

use anyhow::{bail, Result};
use cpflow::flow::FlowTrace;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 20.0;
const MARGIN_BOTTOM: f64 = 50.0;
/// Display floor: exact zeros (fixed-point runs) plot at this level.
const RESIDUAL_FLOOR: f64 = 1e-16;

pub fn emit_plot(trace: &FlowTrace) -> Result<String> {
    if trace.is_empty() {
        bail!("cannot plot an empty trace");
    }
    let times = trace.times();
    let logs: Vec<f64> = trace
        .residual_inf()
        .iter()
        .map(|&r| r.max(RESIDUAL_FLOOR).log10())
        .collect();

    let (t_min, t_max) = (times[0], *times.last().unwrap());
    let mut y_min = logs.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut y_max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if (y_max - y_min).abs() < 1e-9 {
        y_min -= 1.0;
        y_max += 1.0;
    }
    let t_span = if t_max > t_min { t_max - t_min } else { 1.0 };

    let x_of = |t: f64| MARGIN_LEFT + (t - t_min) / t_span * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT);
    let y_of = |y: f64| {
        HEIGHT
            - MARGIN_BOTTOM
            - (y - y_min) / (y_max - y_min) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    };

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{:.3}\" y1=\"{:.3}\" x2=\"{:.3}\" y2=\"{:.3}\" stroke=\"black\"/>\n",
        MARGIN_LEFT,
        MARGIN_TOP,
        MARGIN_LEFT,
        HEIGHT - MARGIN_BOTTOM
    ));
    svg.push_str(&format!(
        "<line x1=\"{:.3}\" y1=\"{:.3}\" x2=\"{:.3}\" y2=\"{:.3}\" stroke=\"black\"/>\n",
        MARGIN_LEFT,
        HEIGHT - MARGIN_BOTTOM,
        WIDTH - MARGIN_RIGHT,
        HEIGHT - MARGIN_BOTTOM
    ));
    // Labels.
    svg.push_str(&format!(
        "<text x=\"{:.3}\" y=\"{:.3}\" font-size=\"12\" text-anchor=\"middle\">time</text>\n",
        (MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0,
        HEIGHT - 12.0
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{:.3}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.3})\">log10 residual</text>\n",
        (MARGIN_TOP + HEIGHT - MARGIN_BOTTOM) / 2.0,
        (MARGIN_TOP + HEIGHT - MARGIN_BOTTOM) / 2.0
    ));
    for (value, t) in [(t_min, t_min), (t_max, t_max)] {
        svg.push_str(&format!(
            "<text x=\"{:.3}\" y=\"{:.3}\" font-size=\"11\" text-anchor=\"middle\">{value:.4}</text>\n",
            x_of(t),
            HEIGHT - MARGIN_BOTTOM + 18.0
        ));
    }
    for y in [y_min, y_max] {
        svg.push_str(&format!(
            "<text x=\"{:.3}\" y=\"{:.3}\" font-size=\"11\" text-anchor=\"end\">{y:.2}</text>\n",
            MARGIN_LEFT - 6.0,
            y_of(y) + 4.0
        ));
    }

    if times.len() == 1 {
        svg.push_str(&format!(
            "<circle cx=\"{:.3}\" cy=\"{:.3}\" r=\"4\" fill=\"steelblue\"/>\n",
            x_of(times[0]),
            y_of(logs[0])
        ));
    } else {
        let points: Vec<String> = times
            .iter()
            .zip(&logs)
            .map(|(&t, &y)| format!("{:.3},{:.3}", x_of(t), y_of(y)))
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\"/>\n",
            points.join(" ")
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
