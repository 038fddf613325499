//! Static SVG regret plots generated directly — no renderer
//! dependency, so the experiment binary stays self-contained.

use std::fmt::Write as _;

use crate::csvio::{parse_aggregated_csv, AggSeries};
use crate::error::HarnessError;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 20.0;
const MARGIN_BOTTOM: f64 = 50.0;
const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// The resolved geometry of a plot: data, plus axis bounds computed as
/// the data bounds padded by 5% on each side.
#[derive(Debug, Clone)]
pub struct PlotModel {
    pub episodes: Vec<f64>,
    pub series: Vec<AggSeries>,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    let span = hi - lo;
    let pad = if span > 0.0 {
        0.05 * span
    } else {
        0.05 * lo.abs().max(1.0)
    };
    (lo - pad, hi + pad)
}

pub fn plot_model(episodes: Vec<f64>, series: Vec<AggSeries>) -> Result<PlotModel, HarnessError> {
    if episodes.is_empty() || series.is_empty() {
        return Err(HarnessError::Config("nothing to plot: empty series".into()));
    }
    for s in &series {
        if s.mean.len() != episodes.len() {
            return Err(HarnessError::Config(format!(
                "series '{}' has {} points but there are {} episodes",
                s.name,
                s.mean.len(),
                episodes.len()
            )));
        }
    }
    let x_lo = episodes.iter().copied().fold(f64::INFINITY, f64::min);
    let x_hi = episodes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut y_lo = f64::INFINITY;
    let mut y_hi = f64::NEG_INFINITY;
    for s in &series {
        for (m, sd) in s.mean.iter().zip(&s.std) {
            y_lo = y_lo.min(m - sd);
            y_hi = y_hi.max(m + sd);
        }
    }
    Ok(PlotModel {
        episodes,
        series,
        x_range: padded(x_lo, x_hi),
        y_range: padded(y_lo, y_hi),
    })
}

pub fn plot_model_from_csv(text: &str, path: &str) -> Result<PlotModel, HarnessError> {
    let (episodes, series) = parse_aggregated_csv(text, path)?;
    plot_model(episodes, series)
}

/// Renders the model as a line chart with a shaded ±1 std band per
/// series.
pub fn render_svg(model: &PlotModel) -> String {
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let (x0, x1) = model.x_range;
    let (y0, y1) = model.y_range;
    let to_x = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * plot_w;
    let to_y = |y: f64| MARGIN_TOP + (y1 - y) / (y1 - y0) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );

    // axes
    let _ = writeln!(
        svg,
        r#"<line x1="{l}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>"#,
        l = MARGIN_LEFT,
        r = WIDTH - MARGIN_RIGHT,
        b = HEIGHT - MARGIN_BOTTOM
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{l}" y1="{t}" x2="{l}" y2="{b}" stroke="black"/>"#,
        l = MARGIN_LEFT,
        t = MARGIN_TOP,
        b = HEIGHT - MARGIN_BOTTOM
    );
    for k in 0..=5 {
        let fx = x0 + (x1 - x0) * k as f64 / 5.0;
        let px = to_x(fx);
        let _ = writeln!(
            svg,
            r#"<line x1="{px}" y1="{b}" x2="{px}" y2="{b2}" stroke="black"/><text x="{px}" y="{ty}" text-anchor="middle">{label}</text>"#,
            b = HEIGHT - MARGIN_BOTTOM,
            b2 = HEIGHT - MARGIN_BOTTOM + 5.0,
            ty = HEIGHT - MARGIN_BOTTOM + 18.0,
            label = tick_label(fx),
        );
        let fy = y0 + (y1 - y0) * k as f64 / 5.0;
        let py = to_y(fy);
        let _ = writeln!(
            svg,
            r#"<line x1="{l2}" y1="{py}" x2="{l}" y2="{py}" stroke="black"/><text x="{tx}" y="{ty}" text-anchor="end">{label}</text>"#,
            l = MARGIN_LEFT,
            l2 = MARGIN_LEFT - 5.0,
            tx = MARGIN_LEFT - 8.0,
            ty = py + 4.0,
            label = tick_label(fy),
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{x}" y="{y}" text-anchor="middle">episode</text>"#,
        x = MARGIN_LEFT + plot_w / 2.0,
        y = HEIGHT - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{y}" text-anchor="middle" transform="rotate(-90 16 {y})">cumulative regret</text>"#,
        y = MARGIN_TOP + plot_h / 2.0
    );

    for (idx, s) in model.series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        // ±1 std band
        let mut band = String::new();
        for (x, (m, sd)) in model.episodes.iter().zip(s.mean.iter().zip(&s.std)) {
            let _ = write!(band, "{:.2},{:.2} ", to_x(*x), to_y(m + sd));
        }
        for (x, (m, sd)) in model
            .episodes
            .iter()
            .zip(s.mean.iter().zip(&s.std))
            .rev()
        {
            let _ = write!(band, "{:.2},{:.2} ", to_x(*x), to_y(m - sd));
        }
        let _ = writeln!(
            svg,
            r#"<polygon points="{}" fill="{color}" fill-opacity="0.18" stroke="none"/>"#,
            band.trim_end()
        );
        let mut line = String::new();
        for (x, m) in model.episodes.iter().zip(&s.mean) {
            let _ = write!(line, "{:.2},{:.2} ", to_x(*x), to_y(*m));
        }
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"/>"#,
            line.trim_end()
        );
        // legend entry
        let ly = MARGIN_TOP + 16.0 * idx as f64 + 8.0;
        let _ = writeln!(
            svg,
            r#"<rect x="{lx}" y="{ry}" width="12" height="12" fill="{color}"/><text x="{tx}" y="{ty}">{name}</text>"#,
            lx = WIDTH - MARGIN_RIGHT - 150.0,
            ry = ly - 10.0,
            tx = WIDTH - MARGIN_RIGHT - 132.0,
            ty = ly,
            name = s.name,
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if (0.01..10_000.0).contains(&a) {
        format!("{v:.3}")
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    } else {
        format!("{v:.2e}")
    }
}
