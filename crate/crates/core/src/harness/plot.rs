//! Standalone SVG plots of sweep tables.
//!
//! Three kinds are supported: `line` (mean of `y` per `x` for every group,
//! which averages over seeds), `histogram` (overlaid per group, shared bin
//! edges) and `scatter3d-projection` (columns `x0`, `x1`, `x2` projected
//! obliquely, colored by a value column).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

use super::sweep::create;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Line,
    Histogram,
    Scatter3dProjection,
}

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "line" => Ok(PlotKind::Line),
            "histogram" => Ok(PlotKind::Histogram),
            "scatter3d-projection" | "scatter3d" => Ok(PlotKind::Scatter3dProjection),
            _ => Err(Error::InvalidParams(format!(
                "unknown plot kind {s:?} (line, histogram, scatter3d-projection)"
            ))),
        }
    }
}

/// What to draw. `x`/`y` are used by line plots, `value` by histograms and
/// as the color of scatter plots.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub kind: PlotKind,
    pub x: Option<String>,
    pub y: Option<String>,
    pub value: Option<String>,
    pub group: Option<String>,
    /// Keep only rows where `column == value` (numeric comparison when both
    /// sides parse as numbers).
    pub filters: Vec<(String, String)>,
    pub bins: usize,
    pub log_x: bool,
    pub log_y: bool,
    pub title: Option<String>,
}

impl PlotSpec {
    pub fn new(kind: PlotKind) -> Self {
        Self {
            kind,
            x: None,
            y: None,
            value: None,
            group: None,
            filters: Vec::new(),
            bins: 20,
            log_x: false,
            log_y: false,
            title: None,
        }
    }
}

/// Parses `column=value`.
pub fn parse_filter(s: &str) -> Result<(String, String)> {
    s.split_once('=')
        .map(|(a, b)| (a.trim().to_string(), b.trim().to_string()))
        .filter(|(a, _)| !a.is_empty())
        .ok_or_else(|| Error::InvalidParams(format!("filter must look like column=value, got {s:?}")))
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self { header, rows })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }
}

fn matches(cell: &str, want: &str) -> bool {
    match (cell.parse::<f64>(), want.parse::<f64>()) {
        (Ok(a), Ok(b)) => a == b,
        _ => cell == want,
    }
}

fn required<'a>(v: &'a Option<String>, what: &str, kind: PlotKind) -> Result<&'a str> {
    v.as_deref()
        .ok_or_else(|| Error::InvalidParams(format!("{kind:?} plot needs a {what} column")))
}

/// Reads `results` and writes an SVG to `output`.
pub fn plot(results: impl AsRef<Path>, spec: &PlotSpec, output: impl AsRef<Path>) -> Result<()> {
    let table = Table::read(results.as_ref())?;
    let svg = render(&table, spec)?;
    let mut f = create(output.as_ref())?;
    f.write_all(svg.as_bytes())?;
    Ok(())
}

/// Renders a CSV file to an SVG string.
pub fn render_file(results: impl AsRef<Path>, spec: &PlotSpec) -> Result<String> {
    render(&Table::read(results.as_ref())?, spec)
}

fn render(table: &Table, spec: &PlotSpec) -> Result<String> {
    let filters = spec
        .filters
        .iter()
        .map(|(c, v)| Ok((table.column(c)?, v.as_str())))
        .collect::<Result<Vec<_>>>()?;
    let group = spec.group.as_deref().map(|g| table.column(g)).transpose()?;
    let rows: Vec<&Vec<String>> = table
        .rows
        .iter()
        .filter(|r| filters.iter().all(|&(c, v)| matches(&r[c], v)))
        .collect();
    let group_of = |r: &Vec<String>| group.map(|g| r[g].clone()).unwrap_or_default();

    match spec.kind {
        PlotKind::Line => {
            let xc = table.column(required(&spec.x, "x", spec.kind)?)?;
            let yc = table.column(required(&spec.y, "y", spec.kind)?)?;
            let mut series: Vec<(String, BTreeMap<OrdF64, (f64, usize)>)> = Vec::new();
            for r in &rows {
                let (Ok(x), Ok(y)) = (r[xc].parse::<f64>(), r[yc].parse::<f64>()) else { continue };
                if !x.is_finite() || !y.is_finite() {
                    continue;
                }
                let g = group_of(r);
                let pos = match series.iter().position(|(name, _)| *name == g) {
                    Some(p) => p,
                    None => {
                        series.push((g, BTreeMap::new()));
                        series.len() - 1
                    }
                };
                let e = series[pos].1.entry(OrdF64(x)).or_insert((0.0, 0));
                e.0 += y;
                e.1 += 1;
            }
            let series = series
                .into_iter()
                .map(|(g, m)| (g, m.into_iter().map(|(x, (s, c))| (x.0, s / c as f64)).collect()))
                .collect();
            Ok(line_svg(spec, series))
        }
        PlotKind::Histogram => {
            let vc = table.column(required(&spec.value, "value", spec.kind)?)?;
            let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
            for r in &rows {
                let Ok(v) = r[vc].parse::<f64>() else { continue };
                if !v.is_finite() {
                    continue;
                }
                let g = group_of(r);
                match groups.iter_mut().find(|(name, _)| *name == g) {
                    Some((_, vals)) => vals.push(v),
                    None => groups.push((g, vec![v])),
                }
            }
            Ok(histogram_svg(spec, groups))
        }
        PlotKind::Scatter3dProjection => {
            let cols = [table.column("x0")?, table.column("x1")?, table.column("x2")?];
            let vc = table.column(required(&spec.value, "value", spec.kind)?)?;
            let mut pts = Vec::new();
            for r in &rows {
                let p: Option<Vec<f64>> = cols.iter().map(|&c| r[c].parse::<f64>().ok()).collect();
                let (Some(p), Ok(v)) = (p, r[vc].parse::<f64>()) else { continue };
                if p.iter().all(|x| x.is_finite()) && v.is_finite() {
                    pts.push(([p[0], p[1], p[2]], v));
                }
            }
            Ok(scatter_svg(spec, pts))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
struct OrdF64(f64);
impl Eq for OrdF64 {}
#[allow(clippy::derive_ord_xor_partial_ord)]
impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Maps data coordinates into the plot area.
struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let pad = |(a, b): (f64, f64)| {
            if (b - a).abs() > 0.0 {
                (a, b)
            } else {
                let d = if a == 0.0 { 1.0 } else { a.abs() * 0.1 };
                (a - d, b + d)
            }
        };
        Self { x: pad(x), y: pad(y) }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_L + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_B - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn ticks((lo, hi): (f64, f64), target: usize) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= target as f64)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn label(v: f64, log: bool) -> String {
    if log {
        return format!("1e{}", v.round() as i64);
    }
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-3 {
        format!("{v:.1e}")
    } else {
        format!("{}", (v * 1e6).round() / 1e6)
    }
}

fn open(spec: &PlotSpec, default_title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let title = spec.title.as_deref().unwrap_or(default_title);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        (WIDTH - MARGIN_R + MARGIN_L) / 2.0,
        escape(title)
    );
    s
}

fn axes(s: &mut String, f: &Frame, xlabel: &str, ylabel: &str, log_x: bool, log_y: bool) {
    let (x0, x1) = (f.px(f.x.0), f.px(f.x.1));
    let (y0, y1) = (f.py(f.y.0), f.py(f.y.1));
    let _ = writeln!(s, r#"<g stroke="black" stroke-width="1">"#);
    let _ = writeln!(s, r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y0:.2}"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{y1:.2}"/>"#);
    let _ = writeln!(s, "</g>");
    for t in ticks(f.x, 6) {
        let x = f.px(t);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            y0 + 4.0,
            y0 + 18.0,
            label(t, log_x)
        );
    }
    for t in ticks(f.y, 6) {
        let y = f.py(t);
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{x0:.2}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            x0 - 4.0,
            x0 - 6.0,
            y + 4.0,
            label(t, log_y)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 12.0,
        escape(xlabel)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(ylabel)
    );
}

fn legend(s: &mut String, names: &[String]) {
    if names.len() < 2 && names.iter().all(String::is_empty) {
        return;
    }
    for (i, name) in names.iter().enumerate() {
        let y = MARGIN_T + 10.0 + 18.0 * i as f64;
        let x = WIDTH - MARGIN_R + 15.0;
        let _ = writeln!(
            s,
            r#"<rect x="{x:.2}" y="{:.2}" width="12" height="12" fill="{}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            y - 10.0,
            PALETTE[i % PALETTE.len()],
            x + 18.0,
            y,
            escape(name)
        );
    }
}

fn transform(v: f64, log: bool) -> Option<f64> {
    match log {
        true if v > 0.0 => Some(v.log10()),
        true => None,
        false => Some(v),
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
}

fn empty_note(s: &mut String) {
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">no data</text>"#,
        WIDTH / 2.0,
        HEIGHT / 2.0
    );
}

fn line_svg(spec: &PlotSpec, series: Vec<(String, Vec<(f64, f64)>)>) -> String {
    let xl = spec.x.clone().unwrap_or_default();
    let yl = spec.y.clone().unwrap_or_default();
    let mut s = open(spec, &format!("{yl} vs {xl}"));
    let series: Vec<(String, Vec<(f64, f64)>)> = series
        .into_iter()
        .map(|(g, pts)| {
            let pts = pts
                .into_iter()
                .filter_map(|(x, y)| Some((transform(x, spec.log_x)?, transform(y, spec.log_y)?)))
                .collect::<Vec<_>>();
            (g, pts)
        })
        .filter(|(_, p)| !p.is_empty())
        .collect();
    if series.is_empty() {
        empty_note(&mut s);
        s.push_str("</svg>\n");
        return s;
    }
    let all = || series.iter().flat_map(|(_, p)| p.iter());
    let f = Frame::new(bounds(all().map(|p| p.0)), bounds(all().map(|p| p.1)));
    axes(&mut s, &f, &xl, &yl, spec.log_x, spec.log_y);
    for (i, (_, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            coords.join(" ")
        );
        for &(x, y) in pts {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, f.px(x), f.py(y));
        }
    }
    legend(&mut s, &series.iter().map(|(g, _)| g.clone()).collect::<Vec<_>>());
    s.push_str("</svg>\n");
    s
}

fn histogram_svg(spec: &PlotSpec, groups: Vec<(String, Vec<f64>)>) -> String {
    let vl = spec.value.clone().unwrap_or_default();
    let mut s = open(spec, &format!("histogram of {vl}"));
    if groups.is_empty() {
        empty_note(&mut s);
        s.push_str("</svg>\n");
        return s;
    }
    let (lo, hi) = bounds(groups.iter().flat_map(|(_, v)| v.iter().copied()));
    let bins = if hi > lo { spec.bins.max(1) } else { 1 };
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let edges: Vec<f64> = if hi > lo {
        (0..=bins).map(|b| lo + width * b as f64).collect()
    } else {
        vec![lo - 0.5, lo + 0.5]
    };
    let counts: Vec<Vec<usize>> = groups
        .iter()
        .map(|(_, vals)| {
            let mut c = vec![0usize; bins];
            for &v in vals {
                let b = if hi > lo { (((v - lo) / width) as usize).min(bins - 1) } else { 0 };
                c[b] += 1;
            }
            c
        })
        .collect();
    let top = counts.iter().flatten().copied().max().unwrap_or(1) as f64;
    let f = Frame::new((edges[0], edges[bins]), (0.0, top));
    axes(&mut s, &f, &vl, "count", false, false);
    let opacity = if groups.len() > 1 { 0.5 } else { 0.8 };
    for (gi, c) in counts.iter().enumerate() {
        let color = PALETTE[gi % PALETTE.len()];
        for (b, &n) in c.iter().enumerate() {
            if n == 0 {
                continue;
            }
            let (x0, x1) = (f.px(edges[b]), f.px(edges[b + 1]));
            let (y0, y1) = (f.py(n as f64), f.py(0.0));
            let _ = writeln!(
                s,
                r#"<rect class="bar" x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="{opacity}" stroke="{color}"/>"#,
                x1 - x0,
                y1 - y0
            );
        }
    }
    legend(&mut s, &groups.iter().map(|(g, _)| g.clone()).collect::<Vec<_>>());
    s.push_str("</svg>\n");
    s
}

/// Blue to yellow through green.
fn ramp(t: f64) -> String {
    let stops = [(0.267, 0.005, 0.329), (0.128, 0.567, 0.551), (0.993, 0.906, 0.144)];
    let t = t.clamp(0.0, 1.0) * 2.0;
    let i = (t as usize).min(1);
    let u = t - i as f64;
    let mix = |a: f64, b: f64| ((a + (b - a) * u) * 255.0).round() as u8;
    let (a, b) = (stops[i], stops[i + 1]);
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

fn scatter_svg(spec: &PlotSpec, pts: Vec<([f64; 3], f64)>) -> String {
    let vl = spec.value.clone().unwrap_or_default();
    let mut s = open(spec, &format!("{vl} (oblique projection)"));
    if pts.is_empty() {
        empty_note(&mut s);
        s.push_str("</svg>\n");
        return s;
    }
    // Azimuth 35 degrees, elevation 25 degrees.
    let (sa, ca) = 35f64.to_radians().sin_cos();
    let (se, ce) = 25f64.to_radians().sin_cos();
    let proj: Vec<(f64, f64, f64, f64)> = pts
        .iter()
        .map(|&([x, y, z], v)| {
            let u = ca * x - sa * y;
            let w = sa * x + ca * y;
            let h = ce * z - se * w;
            let depth = se * z + ce * w;
            (u, h, depth, v)
        })
        .collect();
    let (ulo, uhi) = bounds(proj.iter().map(|p| p.0));
    let (hlo, hhi) = bounds(proj.iter().map(|p| p.1));
    // Equal aspect ratio.
    let span = (uhi - ulo).max(hhi - hlo).max(f64::MIN_POSITIVE);
    let aspect = (WIDTH - MARGIN_L - MARGIN_R) / (HEIGHT - MARGIN_T - MARGIN_B);
    let (uc, hc) = ((ulo + uhi) / 2.0, (hlo + hhi) / 2.0);
    let f = Frame::new(
        (uc - span * aspect / 2.0, uc + span * aspect / 2.0),
        (hc - span / 2.0, hc + span / 2.0),
    );
    let (vlo, vhi) = bounds(proj.iter().map(|p| p.3));
    let mut order: Vec<usize> = (0..proj.len()).collect();
    // Far points first.
    order.sort_by(|&a, &b| proj[b].2.total_cmp(&proj[a].2).then(a.cmp(&b)));
    for i in order {
        let (u, h, _, v) = proj[i];
        let t = if vhi > vlo { (v - vlo) / (vhi - vlo) } else { 0.5 };
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{}"/>"#,
            f.px(u),
            f.py(h),
            ramp(t)
        );
    }
    let x = WIDTH - MARGIN_R + 30.0;
    let (top, bottom) = (MARGIN_T + 10.0, HEIGHT - MARGIN_B - 10.0);
    let steps = 32;
    for k in 0..steps {
        let t = 1.0 - k as f64 / steps as f64;
        let y = top + (bottom - top) * k as f64 / steps as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{x:.2}" y="{y:.2}" width="16" height="{:.2}" fill="{}"/>"#,
            (bottom - top) / steps as f64 + 0.5,
            ramp(t)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{top:.2}">{}</text><text x="{:.2}" y="{bottom:.2}">{}</text><text x="{x:.2}" y="{:.2}">{}</text>"#,
        x + 22.0,
        label(vhi, false),
        x + 22.0,
        label(vlo, false),
        top - 14.0,
        escape(&vl)
    );
    s.push_str("</svg>\n");
    s
}
