//! FVU-vs-active-neurons plots of sweep results as standalone SVG.
//!
//! One series per (family, dataset). For each budget the best spec is taken
//! per seed (the CSV has no spec column, so specs sharing a family and a
//! budget are only told apart by being different rows), and the series
//! point is the mean of those per-seed minima. Infinite (diverged) values
//! drop out of the minimum; a budget where every seed diverged is omitted.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;

use crate::cli::PlotArgs;
use crate::error::{CliError, CliResult, PathContext};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 200.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
/// Smallest FVU drawn; exact fits are clamped here so the log axis holds them.
const MIN_FVU: f64 = 1e-12;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Series name to (active neurons, mean FVU) points sorted by budget.
pub type Series = BTreeMap<String, Vec<(usize, f64)>>;

/// Aggregates sweep CSV text (`family,active_neurons,dataset,seed,best_lr,final_fvu`).
pub fn aggregate(csv: &str) -> CliResult<Series> {
    let mut lines = csv.lines();
    let header = lines.next().ok_or_else(|| CliError::io("empty CSV"))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let col = |name: &str| {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| CliError::io(format!("CSV has no `{name}` column")))
    };
    let (fam, act, ds, seed, fvu) = (
        col("family")?,
        col("active_neurons")?,
        col("dataset")?,
        col("seed")?,
        col("final_fvu")?,
    );
    // (series, budget) -> seed -> best fvu
    let mut best: BTreeMap<(String, usize), BTreeMap<String, f64>> = BTreeMap::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = || CliError::io(format!("CSV line {}: malformed row `{line}`", i + 2));
        if f.len() != cols.len() {
            return Err(bad());
        }
        let budget: usize = f[act].parse().map_err(|_| bad())?;
        let value: f64 = f[fvu].parse().map_err(|_| bad())?;
        let slot = best
            .entry((format!("{} / {}", f[fam], f[ds]), budget))
            .or_default()
            .entry(f[seed].to_string())
            .or_insert(f64::INFINITY);
        *slot = slot.min(value);
    }
    let mut series = Series::new();
    for ((name, budget), per_seed) in best {
        let finite: Vec<f64> = per_seed
            .values()
            .copied()
            .filter(|v| v.is_finite())
            .collect();
        let points = series.entry(name).or_default();
        if !finite.is_empty() && finite.len() == per_seed.len() {
            points.push((budget, finite.iter().sum::<f64>() / finite.len() as f64));
        }
    }
    series.retain(|_, p| !p.is_empty());
    Ok(series)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Renders aggregated series; x is log2 of active neurons, y is log10 FVU.
pub fn render(series: &Series, title: &str) -> String {
    let points = series.values().flatten();
    let xs: Vec<f64> = points
        .clone()
        .map(|&(a, _)| (a.max(1) as f64).log2())
        .collect();
    let ys: Vec<f64> = points.map(|&(_, f)| f.max(MIN_FVU).log10()).collect();
    let range = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if lo.is_finite() {
            (lo.floor(), hi.ceil().max(lo.floor() + 1.0))
        } else {
            (0.0, 1.0)
        }
    };
    let (x0, x1) = range(&xs);
    let (y0, y1) = range(&ys);
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + pw / 2.0,
        escape(title)
    );
    for e in x0 as i64..=x1 as i64 {
        let x = sx(e as f64);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.1}" y1="{TOP}" x2="{x:.1}" y2="{:.1}" stroke="#e5e5e5"/>"##,
            TOP + ph
        );
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            TOP + ph + 18.0,
            2f64.powi(e as i32)
        );
    }
    for e in y0 as i64..=y1 as i64 {
        let y = sy(e as f64);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#e5e5e5"/>"##,
            LEFT + pw
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">1e{e}</text>"#,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">active neurons</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">test FVU</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let coords: Vec<(f64, f64)> = pts
            .iter()
            .map(|&(a, f)| (sx((a.max(1) as f64).log2()), sy(f.max(MIN_FVU).log10())))
            .collect();
        let path: Vec<String> = coords
            .iter()
            .map(|(x, y)| format!("{x:.1},{y:.1}"))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            path.join(" ")
        );
        for (x, y) in &coords {
            let _ = writeln!(
                s,
                r#"<circle cx="{x:.1}" cy="{y:.1}" r="3.5" fill="{color}"/>"#
            );
        }
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}">{}</text>"#,
            lx + 26.0,
            ly + 4.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn render_csv(csv: &str, title: &str) -> CliResult<String> {
    Ok(render(&aggregate(csv)?, title))
}

pub fn plot_command(a: PlotArgs) -> CliResult<()> {
    let csv = fs::read_to_string(&a.csv).at(&a.csv)?;
    let series = aggregate(&csv).map_err(|e| CliError::io(format!("{}: {e}", a.csv.display())))?;
    let title = a.title.as_deref().unwrap_or("FVU vs active neurons");
    fs::write(&a.out, render(&series, title)).at(&a.out)?;
    println!("wrote {} ({} series)", a.out.display(), series.len());
    Ok(())
}
