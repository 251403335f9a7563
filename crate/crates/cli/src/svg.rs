//! Minimal hand-written SVG time-series plots.

use std::fmt::Write;

use neurospike_core::{Guard, HybridTrace, NeuronParams};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 300.0;
const MARGIN: f64 = 50.0;
/// Polylines are decimated to roughly this many points per component.
const MAX_POINTS: usize = 4000;

const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

struct Frame {
    t0: f64,
    t1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(t1: f64, y0: f64, y1: f64) -> Self {
        let (y0, y1) = if y1 - y0 > 0.0 {
            (y0, y1)
        } else {
            (y0 - 1.0, y1 + 1.0)
        };
        let pad = 0.05 * (y1 - y0);
        Self {
            t0: 0.0,
            t1: if t1 > 0.0 { t1 } else { 1.0 },
            y0: y0 - pad,
            y1: y1 + pad,
        }
    }

    fn px(&self, t: f64) -> f64 {
        MARGIN + (t - self.t0) / (self.t1 - self.t0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn open(title: &str, frame: &Frame, y_label: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, "<title>{title}</title>");
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (l, r) = (MARGIN, WIDTH - MARGIN);
    let (top, bottom) = (MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        s,
        r#"<rect x="{l}" y="{top}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        r - l,
        bottom - top
    );
    if frame.y0 < 0.0 && frame.y1 > 0.0 {
        let z = frame.py(0.0);
        let _ = writeln!(
            s,
            r##"<line x1="{l}" y1="{z:.2}" x2="{r}" y2="{z:.2}" stroke="#999" stroke-dasharray="4 3"/>"##
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{title}</text>"#,
        WIDTH / 2.0,
        MARGIN - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">t [s]</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{y_label}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    for (v, anchor, x) in [(frame.y0, "end", l - 4.0), (frame.y1, "end", l - 4.0)] {
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{:.2}" text-anchor="{anchor}">{v:.3}</text>"#,
            frame.py(v) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{l}" y="{}" text-anchor="start">{:.3}</text>"#,
        bottom + 16.0,
        frame.t0
    );
    let _ = writeln!(
        s,
        r#"<text x="{r}" y="{}" text-anchor="end">{:.3}</text>"#,
        bottom + 16.0,
        frame.t1
    );
    s
}

/// State components against continuous time. Jumps appear as vertical
/// segments because consecutive arcs share the jump time.
pub fn state_plot(trace: &HybridTrace, title: &str) -> String {
    let n_x = trace.n_x();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (_, q) in trace.samples() {
        for v in &q.x {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
    }
    let frame = Frame::new(trace.t_end(), lo, hi);
    let mut s = open(title, &frame, "x");
    let stride = trace.sample_count().div_ceil(MAX_POINTS).max(1);
    for i in 0..n_x {
        let mut points = String::new();
        for arc in &trace.arcs {
            let last = arc.samples.len() - 1;
            for (k, sample) in arc.samples.iter().enumerate() {
                if k == 0 || k == last || k % stride == 0 {
                    let _ = write!(
                        points,
                        "{:.2},{:.2} ",
                        frame.px(sample.t),
                        frame.py(sample.state.x[i])
                    );
                }
            }
        }
        let _ = writeln!(
            s,
            r#"<polyline class="state" fill="none" stroke="{}" stroke-width="1" points="{}"/>"#,
            COLORS[i % COLORS.len()],
            points.trim_end()
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Signed impulse amplitude of a spike: neuron one pushes the state down.
pub fn impulse_height(guard: Guard, neurons: &NeuronParams) -> f64 {
    match guard {
        Guard::One => -neurons.alpha(Guard::One),
        Guard::Two => neurons.alpha(Guard::Two),
    }
}

/// The impulse train as one stem per jump, height equal to the signed amplitude.
pub fn input_plot(trace: &HybridTrace, neurons: &NeuronParams, title: &str) -> String {
    let a1 = neurons.alpha(Guard::One);
    let a2 = neurons.alpha(Guard::Two);
    let frame = Frame::new(trace.t_end(), -a1, a2);
    let mut s = open(title, &frame, "u");
    let base = frame.py(0.0);
    for jr in &trace.jumps {
        let height = impulse_height(jr.guard, neurons);
        let (x, y) = (frame.px(jr.t), frame.py(height));
        let color = COLORS[jr.guard.index() % 2];
        let _ = writeln!(
            s,
            r#"<g class="jump" data-t="{:e}" data-guard="{}"><line x1="{x:.2}" y1="{base:.2}" x2="{x:.2}" y2="{y:.2}" stroke="{color}"/><circle cx="{x:.2}" cy="{y:.2}" r="2" fill="{color}"/></g>"#,
            jr.t, jr.guard
        );
    }
    s.push_str("</svg>\n");
    s
}
