//! Figures as CSV tables plus SVG renderings of those tables.
//!
//! Every SVG is drawn only from its CSV twin, so `report` can regenerate the
//! images from a finished run directory.

use std::fmt::Write as _;
use std::path::Path;

use raresub_core::clustering::KScanEntry;
use raresub_core::diffexpr::{HeatmapData, VolcanoPoint};
use raresub_core::projection::Projection;
use raresub_core::stability::StabilityAtK;

use crate::error::{Result, RunError};
use crate::io::write_csv;

pub const SILHOUETTE: &str = "silhouette";
pub const DBI: &str = "dbi";
pub const CLUSTER_SIZES: &str = "cluster_sizes";
pub const STABILITY: &str = "stability_bars";
pub const VOLCANO: &str = "volcano";
pub const HEATMAP: &str = "heatmap";
pub const LATENT: &str = "latent_pca";

pub const ALL: [&str; 7] = [
    SILHOUETTE,
    DBI,
    CLUSTER_SIZES,
    STABILITY,
    VOLCANO,
    HEATMAP,
    LATENT,
];

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const RED: &str = "#d62728";
const GREY: &str = "#7f7f7f";
const BLUE: &str = "#1f77b4";

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn col(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    fn floats(&self, name: &str) -> Vec<f64> {
        let Some(j) = self.col(name) else {
            return Vec::new();
        };
        self.rows
            .iter()
            .map(|r| r[j].parse().unwrap_or(f64::NAN))
            .collect()
    }

    fn strings(&self, name: &str) -> Vec<&str> {
        let Some(j) = self.col(name) else {
            return Vec::new();
        };
        self.rows.iter().map(|r| r[j].as_str()).collect()
    }

    fn flags(&self, name: &str) -> Vec<bool> {
        self.strings(name)
            .into_iter()
            .map(|s| s == "true")
            .collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let header: Vec<&str> = self.header.iter().map(String::as_str).collect();
        write_csv(path, &header, &self.rows)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| RunError::input(path, e))?;
        let header = rdr
            .headers()
            .map_err(|e| RunError::input(path, e))?
            .iter()
            .map(str::to_owned)
            .collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| RunError::input(path, e))?;
            rows.push(rec.iter().map(str::to_owned).collect());
        }
        Ok(Self { header, rows })
    }
}

pub fn silhouette_table(entries: &[KScanEntry]) -> Table {
    let mut t = Table::new(&["k", "silhouette"]);
    for e in entries {
        t.push(vec![e.k.to_string(), e.silhouette.to_string()]);
    }
    t
}

pub fn dbi_table(entries: &[KScanEntry]) -> Table {
    let mut t = Table::new(&["k", "dbi"]);
    for e in entries {
        t.push(vec![e.k.to_string(), e.dbi.to_string()]);
    }
    t
}

/// Cluster sizes at one k; `highlight` marks the cluster drawn in red.
pub fn sizes_table(at_k: &StabilityAtK, highlight: Option<usize>) -> Table {
    let mut t = Table::new(&["cluster", "size", "prevalence", "highlight"]);
    for c in &at_k.clusters {
        t.push(vec![
            c.cluster.to_string(),
            c.size.to_string(),
            c.prevalence.to_string(),
            (Some(c.cluster) == highlight).to_string(),
        ]);
    }
    t
}

pub fn stability_table(at_k: &StabilityAtK, threshold: f64, highlight: Option<usize>) -> Table {
    let mut t = Table::new(&["cluster", "size", "jaccard", "threshold", "highlight"]);
    for c in &at_k.clusters {
        t.push(vec![
            c.cluster.to_string(),
            c.size.to_string(),
            c.jaccard.to_string(),
            threshold.to_string(),
            (Some(c.cluster) == highlight).to_string(),
        ]);
    }
    t
}

pub fn volcano_table(points: &[VolcanoPoint]) -> Table {
    let mut t = Table::new(&["gene_id", "effect", "neg_log10_fdr", "highlighted", "label"]);
    for p in points {
        t.push(vec![
            p.gene_id.clone(),
            p.effect.to_string(),
            p.neg_log10_fdr.to_string(),
            p.highlighted.to_string(),
            p.label.clone().unwrap_or_default(),
        ]);
    }
    t
}

/// Long format, genes then samples in display order.
pub fn heatmap_table(h: &HeatmapData) -> Table {
    let mut t = Table::new(&["gene_id", "sample_id", "in_cluster", "z"]);
    for (g, gene) in h.gene_ids.iter().enumerate() {
        for (s, sample) in h.sample_ids.iter().enumerate() {
            t.push(vec![
                gene.clone(),
                sample.clone(),
                (s < h.n_in).to_string(),
                h.values[(g, s)].to_string(),
            ]);
        }
    }
    t
}

pub fn latent_table(
    ids: &[String],
    p: &Projection,
    labels: &[usize],
    highlight: Option<usize>,
) -> Table {
    let mut t = Table::new(&["sample_id", "pc1", "pc2", "cluster", "highlight"]);
    for (i, id) in ids.iter().enumerate() {
        t.push(vec![
            id.clone(),
            p.coords[(i, 0)].to_string(),
            p.coords[(i, 1)].to_string(),
            labels[i].to_string(),
            (Some(labels[i]) == highlight).to_string(),
        ]);
    }
    t
}

/// Writes `<name>.csv` and `<name>.svg` into `dir`.
pub fn emit(dir: &Path, name: &str, table: &Table) -> Result<()> {
    table.write(&dir.join(format!("{name}.csv")))?;
    let svg = render(name, table);
    crate::io::write_text(&dir.join(format!("{name}.svg")), &svg)
}

/// Re-renders every known figure whose CSV twin exists in `dir`.
pub fn rerender(dir: &Path) -> Result<Vec<String>> {
    let mut done = Vec::new();
    for name in ALL {
        let csv = dir.join(format!("{name}.csv"));
        if csv.exists() {
            let t = Table::read(&csv)?;
            crate::io::write_text(&dir.join(format!("{name}.svg")), &render(name, &t))?;
            done.push(name.to_string());
        }
    }
    Ok(done)
}

pub fn render(name: &str, t: &Table) -> String {
    match name {
        SILHOUETTE => line_plot(t, "k", "silhouette", "Silhouette by k"),
        DBI => line_plot(t, "k", "dbi", "Davies-Bouldin index by k"),
        CLUSTER_SIZES => bar_plot(t, "size", None, "Cluster sizes"),
        STABILITY => {
            let thr = t.floats("threshold").first().copied();
            bar_plot(t, "jaccard", thr, "Cluster stability (mean Jaccard)")
        }
        VOLCANO => scatter(
            t,
            "effect",
            "neg_log10_fdr",
            "highlighted",
            Some("label"),
            "Volcano",
        ),
        LATENT => scatter(
            t,
            "pc1",
            "pc2",
            "highlight",
            None,
            "Latent codes, first two principal components",
        ),
        HEATMAP => heatmap(t),
        _ => Canvas::new(name).finish(),
    }
}

struct Canvas {
    out: String,
}

struct Scale {
    lo: f64,
    hi: f64,
    a: f64,
    b: f64,
}

impl Scale {
    fn new(values: impl Iterator<Item = f64>, a: f64, b: f64) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        let pad = (hi - lo) * 0.05;
        Self {
            lo: lo - pad,
            hi: hi + pad,
            a,
            b,
        }
    }

    fn with_zero(mut self) -> Self {
        self.lo = self.lo.min(0.0);
        self
    }

    fn map(&self, v: f64) -> f64 {
        self.a + (v - self.lo) / (self.hi - self.lo) * (self.b - self.a)
    }

    fn ticks(&self) -> Vec<f64> {
        (0..=4)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / 4.0)
            .collect()
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

impl Canvas {
    fn new(title: &str) -> Self {
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            W / 2.0,
            esc(title)
        );
        Self { out }
    }

    fn axes(&mut self, x: &Scale, y: &Scale, xlabel: &str, ylabel: &str, x_ticks: bool) {
        let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
        let _ = writeln!(
            self.out,
            r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#
        );
        let _ = writeln!(
            self.out,
            r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#
        );
        for v in y.ticks() {
            let py = y.map(v);
            let _ = writeln!(
                self.out,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.3}</text>"#,
                x0 - 6.0,
                py + 4.0
            );
        }
        if x_ticks {
            for v in x.ticks() {
                let px = x.map(v);
                let _ = writeln!(
                    self.out,
                    r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle">{v:.2}</text>"#,
                    y0 + 16.0
                );
            }
        }
        let _ = writeln!(
            self.out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            H - 16.0,
            esc(xlabel)
        );
        let _ = writeln!(
            self.out,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            esc(ylabel)
        );
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

fn line_plot(t: &Table, xcol: &str, ycol: &str, title: &str) -> String {
    let xs = t.floats(xcol);
    let ys = t.floats(ycol);
    let mut c = Canvas::new(title);
    let x = Scale::new(xs.iter().copied(), LEFT, W - RIGHT);
    let y = Scale::new(ys.iter().copied(), H - BOTTOM, TOP);
    c.axes(&x, &y, xcol, ycol, false);
    let pts: Vec<String> = xs
        .iter()
        .zip(&ys)
        .map(|(a, b)| format!("{:.1},{:.1}", x.map(*a), y.map(*b)))
        .collect();
    let _ = writeln!(
        c.out,
        r#"<polyline points="{}" fill="none" stroke="{BLUE}" stroke-width="2"/>"#,
        pts.join(" ")
    );
    for (a, b) in xs.iter().zip(&ys) {
        let (px, py) = (x.map(*a), y.map(*b));
        let _ = writeln!(
            c.out,
            r#"<circle cx="{px:.1}" cy="{py:.1}" r="3.5" fill="{BLUE}"/>"#
        );
        let _ = writeln!(
            c.out,
            r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle">{a}</text>"#,
            H - BOTTOM + 16.0
        );
    }
    c.finish()
}

fn bar_plot(t: &Table, ycol: &str, threshold: Option<f64>, title: &str) -> String {
    let labels = t.strings("cluster");
    let ys = t.floats(ycol);
    let hl = t.flags("highlight");
    let mut c = Canvas::new(title);
    let x = Scale::new([0.0, 1.0].into_iter(), LEFT, W - RIGHT);
    let y = Scale::new(ys.iter().copied().chain(threshold), H - BOTTOM, TOP).with_zero();
    c.axes(&x, &y, "cluster", ycol, false);
    let n = ys.len().max(1) as f64;
    let slot = (W - RIGHT - LEFT) / n;
    for (i, v) in ys.iter().enumerate() {
        let x0 = LEFT + slot * i as f64 + slot * 0.15;
        let top = y.map(*v);
        let base = y.map(0.0);
        let fill = if hl.get(i).copied().unwrap_or(false) {
            RED
        } else {
            GREY
        };
        let _ = writeln!(
            c.out,
            r#"<rect x="{x0:.1}" y="{top:.1}" width="{:.1}" height="{:.1}" fill="{fill}"/>"#,
            slot * 0.7,
            (base - top).max(0.0)
        );
        let _ = writeln!(
            c.out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">C{}</text>"#,
            x0 + slot * 0.35,
            H - BOTTOM + 16.0,
            esc(labels[i])
        );
    }
    if let Some(thr) = threshold {
        let py = y.map(thr);
        let _ = writeln!(
            c.out,
            r#"<line x1="{LEFT}" y1="{py:.1}" x2="{}" y2="{py:.1}" stroke="black" stroke-dasharray="6,4"/>"#,
            W - RIGHT
        );
    }
    c.finish()
}

fn scatter(
    t: &Table,
    xcol: &str,
    ycol: &str,
    hlcol: &str,
    labelcol: Option<&str>,
    title: &str,
) -> String {
    let xs = t.floats(xcol);
    let ys = t.floats(ycol);
    let hl = t.flags(hlcol);
    let labels = labelcol.map(|l| t.strings(l)).unwrap_or_default();
    let mut c = Canvas::new(title);
    let x = Scale::new(xs.iter().copied(), LEFT, W - RIGHT);
    let y = Scale::new(ys.iter().copied(), H - BOTTOM, TOP);
    c.axes(&x, &y, xcol, ycol, true);
    // highlighted points last so they sit on top
    for pass in [false, true] {
        for i in (0..xs.len()).filter(|&i| hl.get(i).copied().unwrap_or(false) == pass) {
            let (px, py) = (x.map(xs[i]), y.map(ys[i]));
            let fill = if pass { RED } else { GREY };
            let _ = writeln!(
                c.out,
                r#"<circle cx="{px:.1}" cy="{py:.1}" r="2.5" fill="{fill}" fill-opacity="0.8"/>"#
            );
            if let Some(l) = labels.get(i).filter(|l| pass && !l.is_empty()) {
                let _ = writeln!(
                    c.out,
                    r#"<text x="{:.1}" y="{:.1}" font-size="9">{}</text>"#,
                    px + 4.0,
                    py - 4.0,
                    esc(l)
                );
            }
        }
    }
    c.finish()
}

fn diverging(z: f64) -> String {
    let v = (z / 3.0).clamp(-1.0, 1.0);
    let (r, g, b) = if v >= 0.0 {
        (255.0, 255.0 * (1.0 - v), 255.0 * (1.0 - v))
    } else {
        (255.0 * (1.0 + v), 255.0 * (1.0 + v), 255.0)
    };
    format!(
        "#{:02x}{:02x}{:02x}",
        r.round() as u8,
        g.round() as u8,
        b.round() as u8
    )
}

fn heatmap(t: &Table) -> String {
    let genes = t.strings("gene_id");
    let samples = t.strings("sample_id");
    let inside = t.flags("in_cluster");
    let zs = t.floats("z");
    let mut gene_order: Vec<&str> = Vec::new();
    let mut sample_order: Vec<(&str, bool)> = Vec::new();
    for (i, g) in genes.iter().enumerate() {
        if gene_order.last() != Some(g) {
            gene_order.push(g);
        }
        if gene_order.len() == 1 {
            sample_order.push((samples[i], inside[i]));
        }
    }
    let mut c = Canvas::new("Marker z-scores (cluster members left)");
    let (ng, ns) = (
        gene_order.len().max(1) as f64,
        sample_order.len().max(1) as f64,
    );
    let (cw, ch) = ((W - LEFT - RIGHT) / ns, (H - TOP - BOTTOM) / ng);
    for (i, z) in zs.iter().enumerate() {
        let (g, s) = (i / sample_order.len().max(1), i % sample_order.len().max(1));
        let _ = writeln!(
            c.out,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
            LEFT + s as f64 * cw,
            TOP + g as f64 * ch,
            cw + 0.05,
            ch + 0.05,
            diverging(*z)
        );
    }
    let n_in = sample_order.iter().filter(|s| s.1).count() as f64;
    let bx = LEFT + n_in * cw;
    let _ = writeln!(
        c.out,
        r#"<line x1="{bx:.2}" y1="{TOP}" x2="{bx:.2}" y2="{}" stroke="black"/>"#,
        H - BOTTOM
    );
    if ng <= 60.0 {
        for (g, name) in gene_order.iter().enumerate() {
            let _ = writeln!(
                c.out,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-size="7">{}</text>"#,
                LEFT - 3.0,
                TOP + (g as f64 + 0.75) * ch,
                esc(name)
            );
        }
    }
    c.finish()
}
