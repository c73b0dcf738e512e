//! Static SVG convergence plot: mean error per algorithm on a log axis with a
//! translucent band of one standard deviation.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context};
use cvar_nash::AggregateTrace;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
/// Curves are thinned to about this many points.
const MAX_POINTS: usize = 800;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn thinned(len: usize) -> Vec<usize> {
    let stride = len.div_ceil(MAX_POINTS).max(1);
    let mut idx: Vec<usize> = (0..len).step_by(stride).collect();
    if idx.last() != Some(&(len - 1)) {
        idx.push(len - 1);
    }
    idx
}

/// Renders the plot as SVG text.
pub fn render_plot(
    series: &[(String, AggregateTrace<f64>)],
    title: &str,
) -> anyhow::Result<String> {
    if series.is_empty() || series.iter().any(|(_, a)| a.is_empty()) {
        bail!("nothing to plot: need at least one nonempty series");
    }
    let len = series.iter().map(|(_, a)| a.len()).max().unwrap_or(1);
    let positive = series
        .iter()
        .flat_map(|(_, a)| {
            a.mean
                .iter()
                .zip(&a.std)
                .flat_map(|(&m, &s)| [m, m + s, m - s])
        })
        .filter(|v| *v > 0.0 && v.is_finite());
    let (mut lo, mut hi) = positive.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if !lo.is_finite() {
        lo = 1e-3;
        hi = 1.0;
    }
    let (mut dlo, mut dhi) = (lo.log10().floor(), hi.log10().ceil());
    if dhi <= dlo {
        dlo -= 1.0;
        dhi += 1.0;
    }
    let floor = 10f64.powf(dlo);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |t: usize| {
        LEFT + if len > 1 {
            (t - 1) as f64 / (len - 1) as f64 * plot_w
        } else {
            plot_w / 2.0
        }
    };
    let py = |v: f64| TOP + (dhi - v.max(floor).log10()) / (dhi - dlo) * plot_h;

    let mut svg = String::new();
    let w = &mut svg;
    writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )?;
    writeln!(
        w,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    )?;
    writeln!(
        w,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(title)
    )?;

    for d in dlo as i32..=dhi as i32 {
        let y = py(10f64.powi(d));
        writeln!(
            w,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
            LEFT + plot_w
        )?;
        writeln!(
            w,
            r#"<text x="{}" y="{:.2}" text-anchor="end">1e{d}</text>"#,
            LEFT - 6.0,
            y + 4.0
        )?;
    }
    for k in 0..=4 {
        let t = 1 + (len - 1) * k / 4;
        let x = px(t);
        writeln!(
            w,
            r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#eeeeee"/>"##,
            TOP + plot_h
        )?;
        writeln!(
            w,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{t}</text>"#,
            TOP + plot_h + 18.0
        )?;
    }
    writeln!(
        w,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    )?;
    writeln!(
        w,
        r#"<text x="{}" y="{}" text-anchor="middle">episode t</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0
    )?;
    writeln!(
        w,
        r#"<text x="20" y="{0}" text-anchor="middle" transform="rotate(-90 20 {0})">squared error to equilibrium</text>"#,
        TOP + plot_h / 2.0
    )?;

    for (k, (label, agg)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let idx = thinned(agg.len());
        let upper: Vec<String> = idx
            .iter()
            .map(|&i| format!("{:.2},{:.2}", px(i + 1), py(agg.mean[i] + agg.std[i])))
            .collect();
        let lower: Vec<String> = idx
            .iter()
            .rev()
            .map(|&i| format!("{:.2},{:.2}", px(i + 1), py(agg.mean[i] - agg.std[i])))
            .collect();
        writeln!(
            w,
            r#"<polygon class="band" points="{} {}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            upper.join(" "),
            lower.join(" ")
        )?;
        let mean: Vec<String> = idx
            .iter()
            .map(|&i| format!("{:.2},{:.2}", px(i + 1), py(agg.mean[i])))
            .collect();
        writeln!(
            w,
            r#"<polyline class="mean" data-label="{}" points="{}" fill="none" stroke="{color}" stroke-width="1.8"/>"#,
            escape(label),
            mean.join(" ")
        )?;
        let ly = TOP + 10.0 + 20.0 * k as f64;
        let lx = LEFT + plot_w + 14.0;
        writeln!(
            w,
            r#"<g class="legend"><line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/><text x="{}" y="{}">{}</text></g>"#,
            lx + 22.0,
            lx + 28.0,
            ly + 4.0,
            escape(label)
        )?;
    }
    writeln!(w, "</svg>")?;
    Ok(svg)
}

/// Writes [`render_plot`] output to `path`.
pub fn emit_plot(series: &[(String, AggregateTrace<f64>)], path: &Path) -> anyhow::Result<()> {
    let svg = render_plot(series, "Error to the Nash equilibrium")?;
    std::fs::write(path, svg).with_context(|| format!("cannot write {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agg(v: Vec<Vec<f64>>) -> AggregateTrace<f64> {
        AggregateTrace::from_series(&v).unwrap()
    }

    fn points(svg: &str, class: &str) -> Vec<Vec<(f64, f64)>> {
        svg.lines()
            .filter(|l| l.contains(&format!("class=\"{class}\"")))
            .map(|l| {
                let start = l.find("points=\"").unwrap() + 8;
                let end = start + l[start..].find('"').unwrap();
                l[start..end]
                    .split(' ')
                    .map(|p| {
                        let (x, y) = p.split_once(',').unwrap();
                        (x.parse().unwrap(), y.parse().unwrap())
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn constant_series_is_flat_with_empty_band() {
        let svg = render_plot(&[("flat".into(), agg(vec![vec![0.3; 50]]))], "t").unwrap();
        let mean = &points(&svg, "mean")[0];
        assert!(mean.iter().all(|p| p.1 == mean[0].1));
        let band = &points(&svg, "band")[0];
        assert!(band.iter().all(|p| p.1 == mean[0].1));
        assert!(!svg.contains("<script"));
    }

    #[test]
    fn two_series_have_labels_and_legend() {
        let a = agg(vec![(1..=100).map(|t| 1.0 / t as f64).collect()]);
        let b = agg(vec![
            (1..=100).map(|t| 2.0 / t as f64).collect(),
            (1..=100).map(|t| 1.0 / t as f64).collect(),
        ]);
        let svg = render_plot(&[("algorithm1".into(), a), ("unbiased-fo".into(), b)], "t").unwrap();
        assert_eq!(points(&svg, "mean").len(), 2);
        assert_eq!(svg.matches("class=\"legend\"").count(), 2);
        assert!(svg.contains(">algorithm1</text>") && svg.contains(">unbiased-fo</text>"));
        let mean = &points(&svg, "mean")[0];
        assert!(
            mean.windows(2).all(|w| w[1].1 >= w[0].1),
            "decreasing error plots downward"
        );
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(render_plot(&[], "t").is_err());
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_plot(&[], &dir.path().join("p.svg")).is_err());
    }

    #[test]
    fn long_series_are_thinned() {
        let svg = render_plot(&[("x".into(), agg(vec![vec![1.0; 10_000]]))], "t").unwrap();
        let n = points(&svg, "mean")[0].len();
        assert!(n <= MAX_POINTS + 1 && n > 100);
    }
}
