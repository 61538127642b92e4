//! Static SVG comparison chart: test accuracy against training time for both
//! methods, with least-squares fit lines. Byte output is deterministic for
//! fixed inputs.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{io_err, Error, Result};
use crate::metrics::RunMetrics;
use crate::stats::linfit;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 32.0;
const MARGIN_B: f64 = 56.0;

/// Render the comparison chart. Either series may be absent (partial runs),
/// but not both.
pub fn plot_svg(
    dqn: Option<&RunMetrics>,
    baseline: Option<&RunMetrics>,
    out: &Path,
) -> Result<()> {
    let svg = render_svg(dqn, baseline)?;
    std::fs::write(out, svg).map_err(io_err(out))
}

pub fn render_svg(dqn: Option<&RunMetrics>, baseline: Option<&RunMetrics>) -> Result<String> {
    let series = [&dqn, &baseline];
    if series.iter().all(|s| s.is_none()) {
        return Err(Error::Config("plot needs at least one metrics series".into()));
    }
    let max_step = series
        .iter()
        .filter_map(|s| s.map(|m| m.rows.last().map(|r| r.step).unwrap_or(0)))
        .max()
        .unwrap_or(0)
        .max(1) as f64;

    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let x_of = |step: f64| MARGIN_L + (step - 1.0) / (max_step - 1.0).max(1.0) * plot_w;
    let y_of = |acc: f64| MARGIN_T + (1.0 - acc) * plot_h;

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();

    // axes
    writeln!(
        s,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="1.5"/>"#,
        MARGIN_L,
        MARGIN_T + plot_h,
        MARGIN_L + plot_w,
        MARGIN_T + plot_h
    )
    .unwrap();
    writeln!(
        s,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="1.5"/>"#,
        MARGIN_L,
        MARGIN_T,
        MARGIN_L,
        MARGIN_T + plot_h
    )
    .unwrap();

    // y ticks at 0, 0.25, .., 1.0
    for i in 0..=4 {
        let acc = i as f64 * 0.25;
        let y = y_of(acc);
        writeln!(
            s,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black"/>"#,
            MARGIN_L - 5.0,
            MARGIN_L
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="end">{acc:.2}</text>"#,
            MARGIN_L - 9.0,
            y + 4.0
        )
        .unwrap();
    }
    // x ticks at multiples of 10
    let mut step = 10u32;
    while (step as f64) < max_step {
        let x = x_of(step as f64);
        writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#,
            MARGIN_T + plot_h,
            MARGIN_T + plot_h + 5.0
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" font-size="12" text-anchor="middle">{step}</text>"#,
            MARGIN_T + plot_h + 20.0
        )
        .unwrap();
        step += 10;
    }

    writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-size="14" text-anchor="middle">training time</text>"#,
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 12.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="18" y="{:.2}" font-size="14" text-anchor="middle" transform="rotate(-90 18 {:.2})">test accuracy</text>"#,
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0
    )
    .unwrap();

    // DQN: blue circles, red fit line
    if let Some(run) = dqn {
        for r in &run.rows {
            writeln!(
                s,
                r##"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="#2b6cb8" fill-opacity="0.85"/>"##,
                x_of(r.step as f64),
                y_of(r.test_accuracy)
            )
            .unwrap();
        }
        fit_line(&mut s, run, "#d62728", max_step, &x_of, &y_of)?;
    }
    // baseline: yellow diamonds, green fit line
    if let Some(run) = baseline {
        for r in &run.rows {
            let (x, y) = (x_of(r.step as f64), y_of(r.test_accuracy));
            writeln!(
                s,
                r##"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="#e0b810" fill-opacity="0.9"/>"##,
                x, y - 4.5, x + 4.5, y, x, y + 4.5, x - 4.5, y
            )
            .unwrap();
        }
        fit_line(&mut s, run, "#2ca02c", max_step, &x_of, &y_of)?;
    }
    writeln!(s, "</svg>").unwrap();
    Ok(s)
}

fn fit_line(
    s: &mut String,
    run: &RunMetrics,
    color: &str,
    max_step: f64,
    x_of: &impl Fn(f64) -> f64,
    y_of: &impl Fn(f64) -> f64,
) -> Result<()> {
    if run.rows.len() < 2 {
        return Ok(());
    }
    let points: Vec<(f64, f64)> = run
        .rows
        .iter()
        .map(|r| (r.step as f64, r.test_accuracy))
        .collect();
    let (slope, intercept) = linfit(&points)?;
    let (x1, x2) = (1.0, max_step);
    let (y1, y2) = (slope * x1 + intercept, slope * x2 + intercept);
    writeln!(
        s,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/>"#,
        x_of(x1),
        y_of(y1.clamp(0.0, 1.0)),
        x_of(x2),
        y_of(y2.clamp(0.0, 1.0))
    )
    .unwrap();
    Ok(())
}
