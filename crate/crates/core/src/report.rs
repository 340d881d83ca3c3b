//! CSV and SVG emitters for traces and sweeps.

use std::fmt::Write as _;

use thiserror::Error;

use crate::engine::{RunSummary, SimulationTrace, SweepResult, TraceRow};

pub const TRACE_HEADER: &str =
    "t,e,t_difficulty,u,r_signal,d_signal,action,action_reward,skill,epsilon,feedback_id";

const SUMMARY_COLUMNS: [&str; 7] = [
    "final_e",
    "mean_e",
    "min_e",
    "max_e",
    "steps_to_difficulty_stable",
    "mean_t_difficulty",
    "total_agent_reward",
];

pub const PANEL_WIDTH: f64 = 800.0;
pub const PANEL_HEIGHT: f64 = 400.0;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("malformed trace CSV at line {line}: {message}")]
    Malformed { line: u64, message: String },
}

/// Formats with six significant digits, `%g` style: trailing zeros trimmed,
/// exponent notation outside `[1e-4, 1e6)`.
pub fn sig6(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    // the exponent must come from the rounded value: 999999.7 rounds to 1e6
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 csv")
}

pub fn write_trace_csv(trace: &SimulationTrace) -> String {
    let mut w = csv_writer();
    w.write_record(TRACE_HEADER.split(','))
        .expect("in-memory write");
    for r in &trace.rows {
        w.write_record([
            r.t.to_string(),
            sig6(r.e),
            sig6(r.t_difficulty),
            sig6(r.u),
            sig6(r.r_signal),
            sig6(r.d_signal),
            r.action.map(|a| a.to_string()).unwrap_or_default(),
            sig6(r.action_reward),
            sig6(r.skill),
            sig6(r.epsilon),
            r.feedback_id.clone().unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

/// Parses a document produced by [`write_trace_csv`]. Bounds are not stored
/// in the CSV and must be supplied.
pub fn read_trace_csv(
    text: &str,
    name: &str,
    t_bounds: (f64, f64),
) -> Result<SimulationTrace, ReportError> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| ReportError::Malformed {
            line: 1,
            message: e.to_string(),
        })?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != TRACE_HEADER {
        return Err(ReportError::Malformed {
            line: 1,
            message: format!("unexpected header {header:?}"),
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| ReportError::Malformed {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |field: &str| ReportError::Malformed {
            line,
            message: format!("bad {field}"),
        };
        let num = |i: usize, field: &str| -> Result<f64, ReportError> {
            rec[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(field))
        };
        let opt = |i: usize| (!rec[i].is_empty()).then(|| rec[i].to_string());
        rows.push(TraceRow {
            t: rec[0].parse().map_err(|_| bad("t"))?,
            e: num(1, "e")?,
            t_difficulty: num(2, "t_difficulty")?,
            u: num(3, "u")?,
            r_signal: num(4, "r_signal")?,
            d_signal: num(5, "d_signal")?,
            action: opt(6)
                .map(|s| s.parse::<usize>().map_err(|_| bad("action")))
                .transpose()?,
            action_reward: num(7, "action_reward")?,
            skill: num(8, "skill")?,
            epsilon: num(9, "epsilon")?,
            feedback_id: opt(10),
        });
    }
    Ok(SimulationTrace {
        name: name.to_string(),
        seed: 0,
        t_bounds,
        rows,
        warnings: Vec::new(),
    })
}

fn summary_fields(s: &RunSummary) -> [String; 7] {
    [
        sig6(s.final_e),
        sig6(s.mean_e),
        sig6(s.min_e),
        sig6(s.max_e),
        s.steps_to_difficulty_stable
            .map(|k| k.to_string())
            .unwrap_or_default(),
        sig6(s.mean_t_difficulty),
        sig6(s.total_agent_reward),
    ]
}

/// One row per run: axis values, seed, then the summary. Failed runs leave
/// the summary columns empty and carry the error in a trailing `error`
/// column.
pub fn write_sweep_csv(
    axis_paths: &[String],
    results: &[SweepResult],
) -> Result<String, ReportError> {
    if results.is_empty() {
        return Err(ReportError::Precondition(
            "no sweep results to write".into(),
        ));
    }
    let mut w = csv_writer();
    let mut header: Vec<&str> = axis_paths.iter().map(String::as_str).collect();
    header.push("seed");
    header.extend(SUMMARY_COLUMNS);
    header.push("error");
    w.write_record(&header).expect("in-memory write");
    for r in results {
        let mut rec: Vec<String> = r.axis_values.iter().map(|v| sig6(*v)).collect();
        rec.push(r.seed.to_string());
        match &r.summary {
            Ok(s) => {
                rec.extend(summary_fields(s));
                rec.push(String::new());
            }
            Err(e) => {
                rec.extend(std::iter::repeat_n(String::new(), SUMMARY_COLUMNS.len()));
                rec.push(e.to_string().replace('\n', " "));
            }
        }
        w.write_record(&rec).expect("in-memory write");
    }
    Ok(finish(w))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChartKind {
    Engagement,
    Difficulty,
    Both,
}

impl std::str::FromStr for ChartKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "engagement" => Ok(ChartKind::Engagement),
            "difficulty" => Ok(ChartKind::Difficulty),
            "both" => Ok(ChartKind::Both),
            _ => Err(format!(
                "unknown chart kind {s:?}; expected engagement, difficulty or both"
            )),
        }
    }
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

// plot area inside each panel
const LEFT: f64 = 70.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn coord(v: f64) -> String {
    format!("{v:.2}")
}

struct Panel<'a> {
    title: &'a str,
    y_label: &'a str,
    y_range: (f64, f64),
    value: fn(&TraceRow) -> f64,
}

/// Renders one 800x400 panel per requested series (two stacked for
/// [`ChartKind::Both`]), one polyline per trace per panel.
pub fn render_chart(traces: &[SimulationTrace], kind: ChartKind) -> Result<String, ReportError> {
    if traces.is_empty() {
        return Err(ReportError::Precondition("no traces to chart".into()));
    }
    if let Some(t) = traces.iter().find(|t| t.rows.is_empty()) {
        return Err(ReportError::Precondition(format!(
            "trace {:?} is empty",
            t.name
        )));
    }

    let t_lo = traces
        .iter()
        .map(|t| t.t_bounds.0)
        .fold(f64::INFINITY, f64::min);
    let t_hi = traces
        .iter()
        .map(|t| t.t_bounds.1)
        .fold(f64::NEG_INFINITY, f64::max);
    let engagement = Panel {
        title: "Engagement over time",
        y_label: "engagement E(t)",
        y_range: (0.0, 1.0),
        value: |r| r.e,
    };
    let difficulty = Panel {
        title: "Task difficulty over time",
        y_label: "difficulty T(t)",
        y_range: (t_lo, t_hi),
        value: |r| r.t_difficulty,
    };
    let panels = match kind {
        ChartKind::Engagement => vec![engagement],
        ChartKind::Difficulty => vec![difficulty],
        ChartKind::Both => vec![engagement, difficulty],
    };

    let max_step = traces
        .iter()
        .flat_map(|t| t.rows.iter().map(|r| r.t))
        .max()
        .unwrap_or(0)
        .max(1) as f64;

    let height = PANEL_HEIGHT * panels.len() as f64;
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = PANEL_WIDTH,
        h = height
    );
    let _ = writeln!(
        svg,
        r#"<rect x="0" y="0" width="{PANEL_WIDTH}" height="{height}" fill="white"/>"#
    );

    for (p, panel) in panels.iter().enumerate() {
        let y0 = PANEL_HEIGHT * p as f64;
        let plot_w = PANEL_WIDTH - LEFT - RIGHT;
        let plot_h = PANEL_HEIGHT - TOP - BOTTOM;
        let x_of = |step: f64| LEFT + step / max_step * plot_w;
        let (lo, hi) = panel.y_range;
        let y_of = |v: f64| y0 + TOP + (1.0 - (v - lo) / (hi - lo)) * plot_h;

        let _ = writeln!(svg, r#"<g class="panel" id="panel-{p}">"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
            coord(LEFT + plot_w / 2.0),
            coord(y0 + 24.0),
            panel.title
        );
        // axes
        let _ = writeln!(
            svg,
            r#"<line class="axis" x1="{x0}" y1="{yb}" x2="{x1}" y2="{yb}" stroke="black"/>"#,
            x0 = coord(LEFT),
            x1 = coord(LEFT + plot_w),
            yb = coord(y0 + TOP + plot_h)
        );
        let _ = writeln!(
            svg,
            r#"<line class="axis" x1="{x}" y1="{yt}" x2="{x}" y2="{yb}" stroke="black"/>"#,
            x = coord(LEFT),
            yt = coord(y0 + TOP),
            yb = coord(y0 + TOP + plot_h)
        );
        for i in 0..=5 {
            let frac = i as f64 / 5.0;
            let step = frac * max_step;
            let v = lo + frac * (hi - lo);
            let _ = writeln!(
                svg,
                r#"<text class="tick" x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
                coord(x_of(step)),
                coord(y0 + TOP + plot_h + 16.0),
                sig6(step.round())
            );
            let _ = writeln!(
                svg,
                r#"<text class="tick" x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
                coord(LEFT - 6.0),
                coord(y_of(v) + 4.0),
                sig6(v)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text class="axis-label" x="{}" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle">step</text>"#,
            coord(LEFT + plot_w / 2.0),
            coord(y0 + PANEL_HEIGHT - 12.0)
        );
        let _ = writeln!(
            svg,
            r#"<text class="axis-label" x="18" y="{y}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 18 {y})">{}</text>"#,
            panel.y_label,
            y = coord(y0 + TOP + plot_h / 2.0)
        );

        for (i, trace) in traces.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let points: Vec<String> = trace
                .rows
                .iter()
                .map(|r| {
                    let v = (panel.value)(r).clamp(lo, hi);
                    format!("{},{}", coord(x_of(r.t as f64)), coord(y_of(v)))
                })
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline class="series" data-series="{}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                escape(&trace.name),
                points.join(" ")
            );
        }

        // legend on the first panel only
        if p == 0 {
            let lx = LEFT + plot_w + 20.0;
            let _ = writeln!(svg, r#"<g class="legend">"#);
            for (i, trace) in traces.iter().enumerate() {
                let ly = y0 + TOP + 10.0 + 20.0 * i as f64;
                let color = PALETTE[i % PALETTE.len()];
                let _ = writeln!(
                    svg,
                    r#"<g class="legend-entry"><line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="3"/><text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text></g>"#,
                    coord(lx),
                    coord(lx + 20.0),
                    coord(lx + 26.0),
                    coord(ly + 4.0),
                    escape(&trace.name),
                    y = coord(ly)
                );
            }
            let _ = writeln!(svg, "</g>");
        }
        let _ = writeln!(svg, "</g>");
    }
    let _ = writeln!(svg, "</svg>");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::content::StubProvider;
    use crate::engine::run_simulation;
    use crate::scenario::{PolicyMode, ScenarioConfig};
    use proptest::prelude::*;

    fn sample_trace(name: &str, alpha: f64) -> SimulationTrace {
        let mut cfg = ScenarioConfig {
            name: name.to_string(),
            ..ScenarioConfig::default()
        };
        cfg.engagement.alpha = alpha;
        run_simulation(&cfg, &StubProvider).unwrap()
    }

    #[test]
    fn sig6_formatting() {
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(-0.0), "0");
        assert_eq!(sig6(0.5), "0.5");
        assert_eq!(sig6(1.0), "1");
        assert_eq!(sig6(4.15271225), "4.15271");
        assert_eq!(sig6(0.30000000000000004), "0.3");
        assert_eq!(sig6(-1.25), "-1.25");
        assert_eq!(sig6(123456789.0), "1.23457e8");
        assert_eq!(sig6(0.0000123456), "1.23456e-5");
        assert_eq!(sig6(999999.7), "1e6");
        assert_eq!(sig6(100.0), "100");
    }

    #[test]
    fn trace_csv_shape() {
        let tr = sample_trace("a", 0.03);
        let csv = write_trace_csv(&tr);
        let lines: Vec<&str> = csv.split_terminator('\n').collect();
        assert_eq!(lines.len(), 102);
        assert_eq!(lines[0], TRACE_HEADER);
        assert!(!csv.contains('\r'));
        // row 0 has no action and no feedback
        assert!(lines[1].contains(",,0,"), "{}", lines[1]);
        assert!(lines[1].ends_with(','), "{}", lines[1]);
    }

    #[test]
    fn sweep_csv_requires_results() {
        assert!(matches!(
            write_sweep_csv(&[], &[]),
            Err(ReportError::Precondition(_))
        ));
    }

    #[test]
    fn chart_counts() {
        let one = vec![sample_trace("only", 0.03)];
        let svg = render_chart(&one, ChartKind::Both).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains(r#"height="800""#));

        let three: Vec<_> = [0.1, 0.2, 0.4]
            .iter()
            .map(|a| sample_trace(&format!("alpha={a}"), *a))
            .collect();
        let svg = render_chart(&three, ChartKind::Engagement).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert_eq!(svg.matches(r#"class="legend-entry""#).count(), 3);
        assert!(svg.contains("alpha=0.4"));
    }

    #[test]
    fn polyline_points_match_rows() {
        let tr = sample_trace("p", 0.03);
        let svg = render_chart(std::slice::from_ref(&tr), ChartKind::Difficulty).unwrap();
        let pts = svg
            .split("points=\"")
            .nth(1)
            .unwrap()
            .split('"')
            .next()
            .unwrap();
        assert_eq!(pts.split(' ').count(), tr.rows.len());
    }

    #[test]
    fn chart_rejects_empty_input() {
        assert!(render_chart(&[], ChartKind::Both).is_err());
        let mut tr = sample_trace("x", 0.03);
        tr.rows.clear();
        assert!(render_chart(&[tr], ChartKind::Both).is_err());
    }

    #[test]
    fn names_are_escaped() {
        let tr = sample_trace("a<b & \"c\"", 0.03);
        let svg = render_chart(&[tr], ChartKind::Engagement).unwrap();
        assert!(svg.contains("a&lt;b &amp; &quot;c&quot;"));
    }

    #[test]
    fn scripted_trace_round_trips() {
        let cfg = ScenarioConfig {
            horizon: 20,
            policy_mode: PolicyMode::Scripted((0..20).map(|i| i % 5).collect()),
            ..ScenarioConfig::default()
        };
        let tr = run_simulation(&cfg, &StubProvider).unwrap();
        let back = read_trace_csv(&write_trace_csv(&tr), "x", (0.0, 10.0)).unwrap();
        assert_eq!(back.rows.len(), tr.rows.len());
        for (a, b) in tr.rows.iter().zip(&back.rows) {
            assert_eq!(a.action, b.action);
            assert_eq!(a.feedback_id, b.feedback_id);
        }
    }

    #[test]
    fn reader_rejects_wrong_header() {
        assert!(read_trace_csv("a,b\n1,2\n", "x", (0.0, 1.0)).is_err());
    }

    proptest! {
        #[test]
        fn sig6_keeps_six_digits(v in -1e9f64..1e9) {
            let back: f64 = sig6(v).parse().unwrap();
            let tol = v.abs() * 5e-6 + 1e-300;
            prop_assert!((back - v).abs() <= tol, "{} -> {}", v, sig6(v));
        }
    }
}
