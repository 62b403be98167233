//! Performance-curve figures: median over seeds with an interquartile band,
//! one series per algorithm.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};

/// Linear-interpolation quantile of unsorted values; NaN when empty.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// One curve file: `algorithm,seed,t,performance`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveFile {
    pub algorithm: String,
    pub seed: u64,
    pub points: Vec<(usize, f64)>,
}

pub fn read_curve(path: &Path) -> anyhow::Result<CurveFile> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header != ["algorithm", "seed", "t", "performance"] {
        bail!("{}: unexpected curve header {header:?}", path.display());
    }
    let mut curve: Option<CurveFile> = None;
    for rec in r.records() {
        let rec = rec?;
        let seed: u64 = rec[1].parse().with_context(|| format!("{}: seed", path.display()))?;
        let t: usize = rec[2].parse().with_context(|| format!("{}: t", path.display()))?;
        let p: f64 = rec[3].parse().with_context(|| format!("{}: performance", path.display()))?;
        let c = curve.get_or_insert_with(|| CurveFile {
            algorithm: rec[0].to_string(),
            seed,
            points: Vec::new(),
        });
        if c.algorithm != rec[0] || c.seed != seed {
            bail!("{}: one curve per file expected", path.display());
        }
        c.points.push((t, p));
    }
    curve.with_context(|| format!("{}: empty curve", path.display()))
}

/// Curve files named by `inputs`: files as given, directories searched (and
/// their `runs/` subdirectory) for `*_curve.csv`, sorted by name.
pub fn collect_curve_paths(inputs: &[PathBuf]) -> anyhow::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found = Vec::new();
            for dir in [p.clone(), p.join("runs")] {
                if !dir.is_dir() {
                    continue;
                }
                for e in fs::read_dir(&dir)? {
                    let path = e?.path();
                    if path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with("_curve.csv")) {
                        found.push(path);
                    }
                }
            }
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        bail!("no curve files found");
    }
    Ok(out)
}

/// Median and quartiles at each checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub algorithm: String,
    pub seeds: usize,
    pub t: Vec<usize>,
    pub median: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Groups curves by algorithm (first-appearance order). All curves must share
/// one checkpoint grid.
pub fn summarize(curves: &[CurveFile]) -> anyhow::Result<Vec<Series>> {
    let Some(first) = curves.first() else {
        bail!("no curves to summarize");
    };
    let grid: Vec<usize> = first.points.iter().map(|p| p.0).collect();
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<&CurveFile>> = BTreeMap::new();
    for c in curves {
        let g: Vec<usize> = c.points.iter().map(|p| p.0).collect();
        if g != grid {
            bail!(
                "checkpoint grids differ: {} seed {} has {} checkpoints {:?}..., expected {:?}...",
                c.algorithm,
                c.seed,
                g.len(),
                &g[..g.len().min(3)],
                &grid[..grid.len().min(3)]
            );
        }
        if !groups.contains_key(&c.algorithm) {
            order.push(c.algorithm.clone());
        }
        groups.entry(c.algorithm.clone()).or_default().push(c);
    }
    Ok(order
        .into_iter()
        .map(|a| {
            let members = &groups[&a];
            let column = |k: usize| members.iter().map(|c| c.points[k].1).collect::<Vec<f64>>();
            let n = grid.len();
            Series {
                seeds: members.len(),
                t: grid.clone(),
                median: (0..n).map(|k| quantile(&column(k), 0.5)).collect(),
                lower: (0..n).map(|k| quantile(&column(k), 0.25)).collect(),
                upper: (0..n).map(|k| quantile(&column(k), 0.75)).collect(),
                algorithm: a,
            }
        })
        .collect())
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// SVG with one median polyline per series, plus an interquartile band when
/// a series has more than one seed.
pub fn render_svg(series: &[Series], title: &str) -> String {
    let (w, h) = (720.0, 440.0);
    let (left, right, top, bottom) = (64.0, 190.0, 36.0, 48.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let t_min = series.iter().flat_map(|s| s.t.first()).copied().min().unwrap_or(0) as f64;
    let t_max = series.iter().flat_map(|s| s.t.last()).copied().max().unwrap_or(1) as f64;
    let finite = |v: &f64| v.is_finite();
    let y_lo = series.iter().flat_map(|s| s.lower.iter().chain(&s.median)).copied().filter(finite).fold(f64::INFINITY, f64::min);
    let y_hi = series.iter().flat_map(|s| s.upper.iter().chain(&s.median)).copied().filter(finite).fold(f64::NEG_INFINITY, f64::max);
    let (y_lo, y_hi) = if y_lo.is_finite() && y_hi > y_lo {
        let pad = 0.05 * (y_hi - y_lo);
        (y_lo - pad, y_hi + pad)
    } else if y_lo.is_finite() {
        (y_lo - 0.5, y_lo + 0.5)
    } else {
        (0.0, 1.0)
    };
    let t_span = if t_max > t_min { t_max - t_min } else { 1.0 };
    let sx = |t: f64| left + (t - t_min) / t_span * pw;
    let sy = |v: f64| top + (y_hi - v) / (y_hi - y_lo) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, left + pw / 2.0, escape(title));
    for k in 0..=4 {
        let v = y_lo + (y_hi - y_lo) * k as f64 / 4.0;
        let y = sy(v);
        let _ = writeln!(s, r##"<line x1="{left}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##, left + pw);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.3}</text>"#, left - 6.0, y + 4.0);
        let t = t_min + t_span * k as f64 / 4.0;
        let x = sx(t);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, top + ph + 18.0, t.round());
    }
    let _ = writeln!(s, r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">iteration</text>"#, left + pw / 2.0, h - 10.0);
    let _ = writeln!(s, r#"<text transform="translate(16 {:.2}) rotate(-90)" text-anchor="middle">performance</text>"#, top + ph / 2.0);
    for (k, ser) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts = |vals: &[f64]| -> Vec<String> { ser.t.iter().zip(vals).map(|(&t, &v)| format!("{:.2},{:.2}", sx(t as f64), sy(v))).collect() };
        if ser.seeds > 1 {
            let mut band = pts(&ser.upper);
            band.extend(pts(&ser.lower).into_iter().rev());
            let _ = writeln!(s, r#"<polygon class="band" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, band.join(" "));
        }
        let _ = writeln!(s, r#"<polyline class="median" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, pts(&ser.median).join(" "));
        let ly = top + 14.0 + 20.0 * k as f64;
        let lx = left + pw + 14.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 22.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{} (n={})</text>"#, lx + 28.0, ly + 4.0, escape(&ser.algorithm), ser.seeds);
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Reads the curves, summarizes and writes the SVG.
pub fn plot(inputs: &[PathBuf], out: &Path, title: &str) -> anyhow::Result<Vec<Series>> {
    let paths = collect_curve_paths(inputs)?;
    let curves = paths.iter().map(|p| read_curve(p)).collect::<anyhow::Result<Vec<_>>>()?;
    let series = summarize(&curves)?;
    if let Some(dir) = out.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(out, render_svg(&series, title)).with_context(|| format!("writing {}", out.display()))?;
    Ok(series)
}
