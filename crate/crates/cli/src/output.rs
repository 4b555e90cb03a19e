//! Artifact writers: JSON reports with a stable field order, CSV passthrough
//! from the core serializers, and small self-contained SVG charts. Nothing
//! here records wall-clock data, so identical runs produce identical bytes.

use std::path::Path;

use anyhow::Context;
use kamfg::grid::{GridFunction, GridMeasure};
use kamfg::mather::KSet;
use kamfg::mfg::EquilibriumResult;
use serde::{Deserialize, Serialize};

pub fn write_text(path: &Path, content: &str) -> anyhow::Result<()> {
    std::fs::write(path, content).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

#[derive(Serialize, Deserialize)]
pub struct SolveStats {
    pub converged: bool,
    pub steps: usize,
    pub residual: f64,
}

#[derive(Serialize, Deserialize)]
pub struct ResidualsReport {
    pub grid_n: usize,
    pub u_minus: SolveStats,
    /// Kink-aware max-node defect of the stationary equation for u_minus.
    pub hj_residual: f64,
    /// max over nodes of u_plus - u_minus; the forward solution never
    /// exceeds the backward one beyond roundoff.
    pub forward_excess: f64,
}

#[derive(Serialize, Deserialize)]
pub struct KsetNode {
    pub index: usize,
    pub x: f64,
    pub u: f64,
    pub h_residual: f64,
    pub g_residual: f64,
}

#[derive(Serialize, Deserialize)]
pub struct KsetReport {
    pub grid_n: usize,
    pub tol_h: f64,
    pub tol_g: f64,
    pub nodes: Vec<KsetNode>,
}

impl KsetReport {
    pub fn new(grid_n: usize, tol_h: f64, tol_g: f64, kset: &KSet, u: &GridFunction) -> Self {
        let nodes = kset
            .nodes
            .iter()
            .enumerate()
            .map(|(k, &i)| KsetNode {
                index: i,
                x: u.grid().node(i),
                u: u.value(i),
                h_residual: kset.h_residuals[k],
                g_residual: kset.g_residuals[k],
            })
            .collect();
        KsetReport { grid_n, tol_h, tol_g, nodes }
    }
}

#[derive(Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub d1_gap: f64,
    pub support_size: usize,
}

#[derive(Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub grid_n: usize,
    pub seed: u64,
    pub converged: bool,
    pub iterations: usize,
    pub d1_gap: f64,
    pub support_leak: f64,
    pub hj_residual: f64,
    pub continuity_residual: f64,
    pub continuity_modes: usize,
    pub support: Vec<usize>,
    pub trace: Vec<TraceRow>,
}

impl EquilibriumReport {
    pub fn new(grid_n: usize, seed: u64, modes: usize, r: &EquilibriumResult) -> Self {
        EquilibriumReport {
            grid_n,
            seed,
            converged: r.converged,
            iterations: r.iterations,
            d1_gap: r.d1_gap,
            support_leak: r.support_leak,
            hj_residual: r.hj_residual,
            continuity_residual: r.continuity_residual,
            continuity_modes: modes,
            support: r.m.support(),
            trace: r
                .trace
                .iter()
                .map(|t| TraceRow {
                    iteration: t.iteration,
                    d1_gap: t.d1_gap,
                    support_size: t.support_size,
                })
                .collect(),
        }
    }
}

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 400.0;
const MARGIN: f64 = 52.0;

struct Frame {
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn new(values: &[f64]) -> Frame {
        let mut lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() || !hi.is_finite() {
            lo = 0.0;
            hi = 1.0;
        }
        if hi - lo < 1e-12 {
            // flat data still gets a visible band
            lo -= 0.5;
            hi += 0.5;
        }
        let pad = 0.05 * (hi - lo);
        Frame { y_min: lo - pad, y_max: hi + pad }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + x * (SVG_W - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        SVG_H - MARGIN - (y - self.y_min) / (self.y_max - self.y_min) * (SVG_H - 2.0 * MARGIN)
    }

    fn chrome(&self, title: &str, out: &mut String) {
        out.push_str(&format!(
            "<rect width=\"{SVG_W}\" height=\"{SVG_H}\" fill=\"white\"/>\n\
             <text x=\"{:.1}\" y=\"24\" font-family=\"monospace\" font-size=\"14\" text-anchor=\"middle\">{title}</text>\n",
            SVG_W / 2.0
        ));
        let (x0, x1) = (self.px(0.0), self.px(1.0));
        let (y0, y1) = (self.py(self.y_min), self.py(self.y_max));
        out.push_str(&format!(
            "<line x1=\"{x0:.1}\" y1=\"{y0:.1}\" x2=\"{x1:.1}\" y2=\"{y0:.1}\" stroke=\"black\"/>\n\
             <line x1=\"{x0:.1}\" y1=\"{y0:.1}\" x2=\"{x0:.1}\" y2=\"{y1:.1}\" stroke=\"black\"/>\n"
        ));
        for (x, label) in [(0.0, "0"), (0.5, "0.5"), (1.0, "1")] {
            let px = self.px(x);
            out.push_str(&format!(
                "<line x1=\"{px:.1}\" y1=\"{y0:.1}\" x2=\"{px:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n\
                 <text x=\"{px:.1}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"middle\">{label}</text>\n",
                y0 + 5.0,
                y0 + 18.0
            ));
        }
        for y in [self.y_min, self.y_max] {
            let py = self.py(y);
            out.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{py:.1}\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"end\">{y:.4}</text>\n",
                x0 - 6.0
            ));
        }
    }
}

fn svg_open() -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_W}\" height=\"{SVG_H}\" viewBox=\"0 0 {SVG_W} {SVG_H}\">\n"
    )
}

/// Line chart of a grid function over one period.
pub fn line_plot(title: &str, f: &GridFunction) -> String {
    let frame = Frame::new(f.values());
    let mut out = svg_open();
    frame.chrome(title, &mut out);
    let mut points = String::new();
    for i in 0..f.grid().n() {
        points.push_str(&format!("{:.2},{:.2} ", frame.px(f.grid().node(i)), frame.py(f.value(i))));
    }
    // close the period so the seam is visible as one curve
    points.push_str(&format!("{:.2},{:.2}", frame.px(1.0), frame.py(f.value(0))));
    out.push_str(&format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\"/>\n</svg>\n",
        points.trim_end()
    ));
    out
}

/// Stem chart of an atomic measure: one vertical line per carrying node.
pub fn stem_plot(title: &str, m: &GridMeasure) -> String {
    let frame = Frame::new(&[0.0, m.weights().iter().cloned().fold(0.0, f64::max)]);
    let mut out = svg_open();
    frame.chrome(title, &mut out);
    let base = frame.py(0.0);
    for (i, &w) in m.weights().iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let px = frame.px(m.grid().node(i));
        let py = frame.py(w);
        out.push_str(&format!(
            "<line x1=\"{px:.2}\" y1=\"{base:.2}\" x2=\"{px:.2}\" y2=\"{py:.2}\" stroke=\"firebrick\" stroke-width=\"2\"/>\n\
             <circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"2.5\" fill=\"firebrick\"/>\n"
        ));
    }
    out.push_str("</svg>\n");
    out
}
