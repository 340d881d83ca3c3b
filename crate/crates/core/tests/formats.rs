use gamedyn::content::StubProvider;
use gamedyn::engine::{run_simulation, run_sweep};
use gamedyn::report::{read_trace_csv, render_chart, write_sweep_csv, write_trace_csv, ChartKind};
use gamedyn::scenario::{load_scenario, parse_sweep_axis, PolicyMode, ScenarioConfig, SweepSpec};
use proptest::prelude::*;
use quick_xml::events::Event;
use quick_xml::Reader;

/// Walks the whole document, failing on any well-formedness error. Returns
/// the root's `version` attribute and the element names in document order.
fn check_xml(doc: &str) -> (String, Vec<String>) {
    let mut reader = Reader::from_str(doc);
    reader.config_mut().check_end_names = true;
    let mut version = String::new();
    let mut names = Vec::new();
    loop {
        match reader.read_event().expect("well-formed XML") {
            Event::Start(e) | Event::Empty(e) => {
                let name = String::from_utf8(e.name().as_ref().to_vec()).unwrap();
                if name == "svg" {
                    for a in e.attributes() {
                        let a = a.unwrap();
                        if a.key.as_ref() == b"version" {
                            version = a.unescape_value().unwrap().to_string();
                        }
                    }
                }
                names.push(name);
            }
            Event::Eof => break,
            _ => {}
        }
    }
    (version, names)
}

#[test]
fn chart_is_well_formed_svg_1_1() {
    let traces: Vec<_> = [0.1, 0.2]
        .iter()
        .map(|a| {
            let mut cfg = ScenarioConfig {
                name: format!("α={a} <run>"),
                ..ScenarioConfig::default()
            };
            cfg.engagement.alpha = *a;
            run_simulation(&cfg, &StubProvider).unwrap()
        })
        .collect();
    for kind in [
        ChartKind::Engagement,
        ChartKind::Difficulty,
        ChartKind::Both,
    ] {
        let svg = render_chart(&traces, kind).unwrap();
        let (version, names) = check_xml(&svg);
        assert_eq!(version, "1.1");
        assert_eq!(names[0], "svg");
        let panels = if kind == ChartKind::Both { 2 } else { 1 };
        assert_eq!(
            names.iter().filter(|n| *n == "polyline").count(),
            2 * panels
        );
    }
}

#[test]
fn sweep_csv_columns_and_determinism() {
    let spec = SweepSpec {
        base: ScenarioConfig {
            horizon: 15,
            ..ScenarioConfig::default()
        },
        axes: vec![
            parse_sweep_axis("adaptation.gamma=0.5,1").unwrap(),
            parse_sweep_axis("engagement.alpha=0.1:0.3:0.1").unwrap(),
        ],
        replicate_seeds: vec![3, 4],
    };
    let paths: Vec<String> = spec.axes.iter().map(|a| a.path.clone()).collect();
    let first = write_sweep_csv(&paths, &run_sweep(&spec, &StubProvider, 4).unwrap()).unwrap();
    let again = write_sweep_csv(&paths, &run_sweep(&spec, &StubProvider, 1).unwrap()).unwrap();
    assert_eq!(first, again);
    let lines: Vec<&str> = first.lines().collect();
    assert_eq!(lines.len(), 13);
    assert!(lines[0].starts_with("adaptation.gamma,engagement.alpha,seed,final_e,"));
    assert!(lines[1].starts_with("0.5,0.1,3,"));
    assert!(lines[2].starts_with("0.5,0.1,4,"));
    assert!(lines[12].starts_with("1,0.3,4,"));
}

fn close6(a: f64, b: f64) -> bool {
    (a - b).abs() <= a.abs().max(b.abs()) * 5e-6 + 1e-12
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn trace_csv_round_trips_to_six_digits(
        seed in any::<u64>(), stochastic in any::<bool>(), alpha in 0.0f64..0.5, horizon in 1u64..60,
    ) {
        let mut cfg = ScenarioConfig { seed, horizon, ..ScenarioConfig::default() };
        cfg.profile.stochastic = stochastic;
        cfg.engagement.alpha = alpha;
        cfg.policy_mode = PolicyMode::EpsilonGreedy;
        let tr = run_simulation(&cfg, &StubProvider).unwrap();
        let text = write_trace_csv(&tr);
        prop_assert_eq!(text.lines().count(), tr.rows.len() + 1);
        let back = read_trace_csv(&text, "x", (0.0, 10.0)).unwrap();
        for (a, b) in tr.rows.iter().zip(&back.rows) {
            prop_assert_eq!(a.t, b.t);
            prop_assert_eq!(a.action, b.action);
            prop_assert_eq!(&a.feedback_id, &b.feedback_id);
            for (x, y) in [
                (a.e, b.e), (a.t_difficulty, b.t_difficulty), (a.u, b.u),
                (a.r_signal, b.r_signal), (a.d_signal, b.d_signal),
                (a.action_reward, b.action_reward), (a.skill, b.skill), (a.epsilon, b.epsilon),
            ] {
                prop_assert!(close6(x, y), "{} vs {}", x, y);
            }
        }
    }

    #[test]
    fn loading_never_panics(doc in ".{0,200}") {
        let _ = load_scenario(&doc);
    }

    #[test]
    fn loading_structured_garbage_never_panics(
        alpha in prop_oneof![Just("-1".to_string()), Just("1e400".to_string()), Just("\"x\"".to_string()), any::<f64>().prop_map(|v| v.to_string())],
        horizon in prop_oneof![Just("0".to_string()), Just("-3".to_string()), Just("1.5".to_string()), any::<u32>().prop_map(|v| v.to_string())],
    ) {
        let doc = format!(r#"{{"horizon": {horizon}, "engagement": {{"alpha": {alpha}}}}}"#);
        let _ = load_scenario(&doc);
    }
}
