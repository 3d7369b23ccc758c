//! Box plots of Monte Carlo MSE distributions, one file per signal.
//!
//! The plots are drawn from the summary statistics only; the CSV tables stay
//! the source of truth.

use std::fmt::Write as _;

use qsise_core::sim::MonteCarloTable;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// `1, 2, 5` times a power of ten, giving about five intervals over `[0, max]`.
fn tick_step(max: f64) -> f64 {
    let raw = max / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let nice = if norm <= 1.0 {
        1.0
    } else if norm <= 2.0 {
        2.0
    } else if norm <= 5.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn label(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// SVG document for `signal`, or `None` if the table has no summary for it.
pub fn box_plot(table: &MonteCarloTable, signal: &str) -> Option<String> {
    let cells: Vec<_> = table
        .summary
        .iter()
        .filter(|c| c.signal == signal)
        .collect();
    if cells.is_empty() {
        return None;
    }
    let mut deltas: Vec<f64> = Vec::new();
    let mut estimators: Vec<&str> = Vec::new();
    for c in &cells {
        if !deltas.contains(&c.delta) {
            deltas.push(c.delta);
        }
        if !estimators.contains(&c.estimator) {
            estimators.push(c.estimator);
        }
    }
    let top = cells.iter().map(|c| c.stats.max).fold(0.0_f64, f64::max);
    let step = if top > 0.0 && top.is_finite() {
        tick_step(top)
    } else {
        1.0
    };
    let y_max = (top / step).ceil().max(1.0) * step;
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let y = |v: f64| TOP + plot_h * (1.0 - v / y_max);
    let group_w = plot_w / deltas.len() as f64;
    let box_w = (group_w * 0.7 / estimators.len() as f64).min(40.0);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">MSE of {signal}</text>"#,
        WIDTH / 2.0
    );
    let mut tick = 0.0;
    while tick <= y_max + step * 1e-9 {
        let ty = y(tick);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{ty:.2}" x2="{:.2}" y2="{ty:.2}" stroke="#dddddd"/>"##,
            WIDTH - RIGHT
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            ty + 4.0,
            label(tick)
        );
        tick += step;
    }
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.2}" stroke="black"/>"#,
        TOP + plot_h
    );
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
        TOP + plot_h,
        WIDTH - RIGHT,
        TOP + plot_h
    );
    for (g, delta) in deltas.iter().enumerate() {
        let center = LEFT + group_w * (g as f64 + 0.5);
        let _ = writeln!(
            s,
            r#"<text x="{center:.2}" y="{:.2}" text-anchor="middle">Δ = {}</text>"#,
            TOP + plot_h + 18.0,
            label(*delta)
        );
        for (e, est) in estimators.iter().enumerate() {
            let Some(c) = cells
                .iter()
                .find(|c| c.delta == *delta && c.estimator == *est)
            else {
                continue;
            };
            let colour = PALETTE[e % PALETTE.len()];
            let x0 = center + box_w * (e as f64 - estimators.len() as f64 / 2.0);
            let mid = x0 + box_w / 2.0;
            let st = &c.stats;
            let _ = writeln!(
                s,
                r#"<line x1="{mid:.2}" y1="{:.2}" x2="{mid:.2}" y2="{:.2}" stroke="{colour}"/>"#,
                y(st.min),
                y(st.max)
            );
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{colour}" fill-opacity="0.3" stroke="{colour}"/>"#,
                x0 + 2.0,
                y(st.q75),
                box_w - 4.0,
                (y(st.q25) - y(st.q75)).max(0.0)
            );
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{colour}" stroke-width="2"/>"#,
                x0 + 2.0,
                y(st.median),
                x0 + box_w - 2.0,
                y(st.median)
            );
        }
    }
    for (e, est) in estimators.iter().enumerate() {
        let colour = PALETTE[e % PALETTE.len()];
        let lx = LEFT + 10.0 + 120.0 * e as f64;
        let ly = HEIGHT - 18.0;
        let _ = writeln!(
            s,
            r#"<rect x="{lx:.1}" y="{:.1}" width="12" height="12" fill="{colour}" fill-opacity="0.3" stroke="{colour}"/>"#,
            ly - 10.0
        );
        let _ = writeln!(s, r#"<text x="{:.1}" y="{ly:.1}">{est}</text>"#, lx + 18.0);
    }
    s.push_str("</svg>\n");
    Some(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use qsise_core::sim::{CellSummary, Summary};

    fn table() -> MonteCarloTable {
        let stats = Summary {
            min: 0.1,
            q25: 0.2,
            median: 0.3,
            q75: 0.4,
            max: 0.9,
        };
        let summary = ["gsf-limit", "lti"]
            .iter()
            .flat_map(|e| {
                [1.0, 5.0].map(|delta| CellSummary {
                    estimator: e,
                    delta,
                    signal: "d".into(),
                    stats,
                })
            })
            .collect();
        MonteCarloTable {
            state_dim: 0,
            input_dim: 1,
            rows: vec![],
            failures: vec![],
            summary,
        }
    }

    #[test]
    fn draws_one_box_per_cell() {
        let svg = box_plot(&table(), "d").unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("fill-opacity=\"0.3\" stroke").count(), 4 + 2);
        assert!(svg.contains("Δ = 5"));
        assert!(box_plot(&table(), "x1").is_none());
    }

    #[test]
    fn ticks() {
        assert_eq!(tick_step(0.9), 0.2);
        assert_eq!(tick_step(6.5), 2.0);
        assert_eq!(label(0.30000000000000004), "0.3");
        assert_eq!(label(10.0), "10");
    }
}
