use std::fs;

use crlbench_core::exp::*;
use proptest::prelude::*;

/// Student t quantile for 2 degrees of freedom in closed form:
/// `t = (2p − 1) / √(2p(1 − p))`.
fn t_quantile_df2(p: f64) -> f64 {
    (2.0 * p - 1.0) / (2.0 * p * (1.0 - p)).sqrt()
}

#[test]
fn aggregate_examples() {
    let a = aggregate(&[2.0, 2.0, 2.0]).unwrap();
    assert_eq!((a.n, a.mean, a.ci95), (3, 2.0, Some(0.0)));

    let a = aggregate(&[1.0, 2.0, 3.0]).unwrap();
    let want = t_quantile_df2(0.975) * 1.0 / 3f64.sqrt();
    assert!((a.mean - 2.0).abs() < 1e-12);
    assert!((a.ci95.unwrap() - want).abs() < 1e-9, "{:?} vs {want}", a.ci95);
    assert!((a.ci95.unwrap() - 2.484).abs() < 1e-3);

    let a = aggregate(&[7.5]).unwrap();
    assert_eq!((a.mean, a.ci95), (7.5, None));
    assert!(aggregate(&[]).is_err());
}

#[test]
fn gap_reduction_reproduces_reference_rows() {
    // Causal OOD values carry the reported signed gap.
    let rows = [((500.0, 500.0, 416.0, 15.0), 100.0), ((487.0, 486.7, 460.0, 23.0), 99.9), ((346.0, 346.8, 490.0, 14.0), 99.8)];
    for ((ic, oc, is, os), reported) in rows {
        let g = gap_reduction(ic, oc, is, os).unwrap();
        assert!(((g * 10.0).round() / 10.0 - reported).abs() < 1e-9, "{g} vs {reported}");
    }
    assert_eq!(gap_reduction(400.0, 100.0, 450.0, 150.0).unwrap(), 0.0);
    assert!(matches!(gap_reduction(500.0, 500.0, 300.0, 300.0), Err(ExpError::Undefined(_))));
}

#[test]
fn gap_closed_examples() {
    let g = gap_closed(86.7, 98.9, 99.4).unwrap();
    assert!((g - 104.098).abs() < 1e-3 && g.round() == 104.0);
    let g = gap_closed(73.5, 98.3, 96.6).unwrap();
    assert!((g - 93.145).abs() < 1e-3 && g.round() == 93.0);
    assert_eq!(gap_closed(60.0, 98.0, 60.0).unwrap(), 0.0);
    assert!(gap_closed(60.0, 60.0, 70.0).is_err());
}

#[test]
fn aggregate_intervals() {
    let a = aggregate(&[1.0, 2.0, 3.0]).unwrap();
    let b = aggregate(&[10.0, 11.0, 12.0]).unwrap();
    assert!(a.disjoint_from(&b) && b.disjoint_from(&a));
    let c = aggregate(&[2.0, 3.0, 4.0]).unwrap();
    assert!(!a.disjoint_from(&c));
    assert!((a.upper() - (2.0 + a.ci95.unwrap())).abs() < 1e-12);
}

#[test]
fn study_names_parse() {
    assert_eq!("a".parse::<Study>().unwrap(), Study::A);
    assert_eq!("study-b".parse::<Study>().unwrap(), Study::B);
    assert_eq!("causal-core".parse::<Study>().unwrap(), Study::CausalCore);
    assert!(matches!("d".parse::<Study>(), Err(ExpError::Config(_))));
}

#[test]
fn config_validation() {
    let ok = RunConfig::new(Study::A);
    assert!(ok.validate().is_ok());
    assert!(ok.validate_acceptance().is_ok());
    let bad = [
        RunConfig { seeds: vec![], ..ok.clone() },
        RunConfig { seeds: vec![1, 1], ..ok.clone() },
        RunConfig { env: Some("mountaincar".into()), ..ok.clone() },
        RunConfig { algo: Some("cae".into()), ..ok.clone() },
        RunConfig { total_steps: Some(0), ..ok.clone() },
        RunConfig { study: Study::C, total_steps: Some(10), ..ok.clone() },
        RunConfig { strengths: vec![1.5], ..ok.clone() },
    ];
    for cfg in bad {
        assert!(matches!(cfg.validate(), Err(ExpError::Config(_))), "{cfg:?}");
    }
    let two = RunConfig { seeds: vec![0, 1], ..ok.clone() };
    assert!(two.validate().is_ok() && two.validate_acceptance().is_err());
    assert_eq!(RunConfig { env: Some("longpole".into()), ..ok.clone() }.envs().unwrap(), vec!["cartpole-spurious:longpole"]);
    let b = RunConfig::new(Study::B);
    assert_eq!(b.algos().unwrap(), vec!["standard", "cae", "oracle"]);
    assert!(RunConfig { algo: Some("frozen".into()), ..b }.validate().is_ok());
}

#[test]
fn config_json_round_trips_and_fills_defaults() {
    let cfg = RunConfig::from_json(r#"{"study": "b", "seeds": [4, 5, 6], "total_steps": 1000}"#).unwrap();
    assert_eq!(cfg.study, Study::B);
    assert_eq!(cfg.seeds, vec![4, 5, 6]);
    assert_eq!(cfg.cae, crlbench_core::cae::CaeConfig::default());
    assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    assert!(matches!(RunConfig::from_json(r#"{"study": "z"}"#), Err(ExpError::Config(_))));
}

fn tiny_study_a(dir: &std::path::Path) -> RunConfig {
    let mut cfg = RunConfig::new(Study::A);
    cfg.total_steps = Some(512);
    cfg.ppo.rollout_steps = 256;
    cfg.eval_episodes = Some(2);
    cfg.out_dir = Some(dir.to_path_buf());
    cfg
}

#[test]
fn study_a_bookkeeping_determinism_and_recomputation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_study_a(dir.path());
    let out = run_study(&cfg).unwrap();
    assert!(!out.is_partial());

    let mut runs: Vec<(String, u64)> = out.records.iter().map(|r| (r.algo.clone(), r.seed)).collect();
    runs.sort();
    runs.dedup();
    assert_eq!(runs.len(), 6);
    for algo in ["causal", "standard"] {
        for metric in ["id_return", "ood_return", "train_return", "shortcut_agreement"] {
            let rows: Vec<_> = out.summary.iter().filter(|r| r.algo == algo && r.metric == metric).collect();
            assert_eq!(rows.len(), 1, "{algo}/{metric}");
            assert_eq!(rows[0].n, 3);
        }
    }

    let metrics = fs::read(dir.path().join("metrics.jsonl")).unwrap();
    for f in ["summary.csv", "timings.jsonl", "config.json", "learning_curves.svg", "final_returns.svg"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }

    // Summary statistics come from metrics.jsonl alone.
    let records = read_jsonl(&metrics[..]).unwrap();
    assert_eq!(records, out.records);
    let csv_rows = read_summary_csv(fs::File::open(dir.path().join("summary.csv")).unwrap()).unwrap();
    let recomputed = summarize(&records, 3).unwrap();
    let measured: Vec<_> = csv_rows.iter().filter(|r| r.algo != "derived").cloned().collect();
    assert_eq!(measured, recomputed);

    // Derived percentages recompute by hand from the CSV.
    let env = "cartpole-spurious:standard";
    let get = |algo, metric| lookup(&csv_rows, env, algo, None, metric).unwrap().mean;
    if let Some(row) = lookup(&csv_rows, env, "derived", None, "gap_reduction_pct") {
        let (ic, oc) = (get("causal", "id_return"), get("causal", "ood_return"));
        let (is, os) = (get("standard", "id_return"), get("standard", "ood_return"));
        let hand = 100.0 * (1.0 - (ic - oc).abs() / (is - os).abs());
        assert!((row.mean - hand).abs() < 1e-9);
    }
    let ratio = lookup(&csv_rows, env, "derived", None, "standard_ood_over_id").unwrap();
    assert!((ratio.mean - get("standard", "ood_return") / get("standard", "id_return")).abs() < 1e-12);

    // Identical config, byte-identical metrics.
    let again = tempfile::tempdir().unwrap();
    run_study(&tiny_study_a(again.path())).unwrap();
    assert_eq!(fs::read(again.path().join("metrics.jsonl")).unwrap(), metrics);
    let no_time = String::from_utf8(metrics).unwrap();
    assert!(!no_time.contains("wall_time"));
}

#[test]
fn summary_marks_missing_seeds_partial() {
    let recs: Vec<MetricRecord> =
        [0, 1].iter().map(|&s| MetricRecord::new("a", "e", "x", s, 0, "m", s as f64).unwrap()).collect();
    let rows = summarize(&recs, 3).unwrap();
    assert!(rows[0].partial && rows[0].n == 2);
    assert!(!summarize(&recs, 2).unwrap()[0].partial);
    assert!(MetricRecord::new("a", "e", "x", 0, 0, "m", f64::NAN).is_err());
}

#[test]
fn final_values_take_the_last_step() {
    let recs: Vec<MetricRecord> = [(0, 3.0), (10, 5.0), (5, 4.0)]
        .iter()
        .map(|&(step, v)| MetricRecord::new("a", "e", "x", 0, step, "curve", v).unwrap())
        .collect();
    assert_eq!(summarize(&recs, 1).unwrap()[0].mean, 5.0);
}

#[test]
fn plots_are_well_formed_svg() {
    let mut recs = Vec::new();
    for seed in 0..3 {
        for step in 0..4 {
            recs.push(MetricRecord::new("a", "e", "causal", seed, step * 100, "train_return", (step * 10) as f64 + seed as f64).unwrap());
        }
        recs.push(MetricRecord::new("a", "e", "causal", seed, 400, "id_return", 50.0 + seed as f64).unwrap());
    }
    let svg = plot::plot_records(&recs).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert!(svg.contains("<polyline") && svg.contains("<polygon"));
    assert_eq!(svg.matches("<svg").count(), svg.matches("</svg>").count());

    let finals: Vec<MetricRecord> = recs.into_iter().filter(|r| r.metric_name == "id_return").collect();
    let bars = plot::plot_records(&finals).unwrap();
    assert!(bars.contains("<rect") && !bars.contains("<polyline"));
    assert!(plot::plot_records(&[]).is_err());
    let escaped = plot::bar_chart("a < b & c", "y", &[]);
    assert!(escaped.contains("a &lt; b &amp; c"));
}

#[test]
fn derived_study_b_and_e_rows() {
    let row = |algo: &str, metric: &str, mean: f64| SummaryRow {
        study: "b".into(),
        env: "confounded-bandit".into(),
        algo: algo.into(),
        strength: None,
        metric: metric.into(),
        n: 3,
        mean,
        ci95: Some(1.0),
        partial: false,
    };
    let rows = vec![row("standard", "score", 86.7), row("oracle", "score", 98.9), row("cae", "score", 99.4)];
    let d = derived_metrics(Study::B, &rows);
    assert_eq!(d.len(), 1);
    assert_eq!(d[0].metric, "gap_closed_pct");
    assert_eq!(d[0].mean, gap_closed(86.7, 98.9, 99.4).unwrap());

    let rows = vec![row("scm", "stability_causal", 0.01), row("scm", "stability_random", 0.2)];
    let d = derived_metrics(Study::E, &rows);
    assert!((d[0].mean - 95.0).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// With two seeds the quantile is the Cauchy one, `tan(0.475π)`.
    #[test]
    fn two_seed_interval_matches_cauchy_quantile(a in -1e3f64..1e3, b in -1e3f64..1e3) {
        let agg = aggregate(&[a, b]).unwrap();
        let want = (0.475 * std::f64::consts::PI).tan() * (a - b).abs() / 2.0;
        prop_assert!((agg.ci95.unwrap() - want).abs() <= 1e-7 * (1.0 + want));
        prop_assert!((agg.mean - (a + b) / 2.0).abs() < 1e-9);
    }

    #[test]
    fn gap_reduction_is_bounded_by_100(ic in 0.0f64..500.0, oc in 0.0f64..500.0, is in 0.0f64..500.0, os in 0.0f64..500.0) {
        prop_assume!((is - os).abs() > 1e-6);
        let g = gap_reduction(ic, oc, is, os).unwrap();
        prop_assert!(g <= 100.0);
        prop_assert_eq!(g == 100.0, ic == oc);
    }

    #[test]
    fn jsonl_round_trips(values in prop::collection::vec(-1e6f64..1e6, 1..20)) {
        let recs: Vec<MetricRecord> = values
            .iter()
            .enumerate()
            .map(|(i, &v)| MetricRecord::new("c", "dosage", "standard", i as u64, i, "true_value", v).unwrap().with_strength(0.4))
            .collect();
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &recs).unwrap();
        prop_assert_eq!(read_jsonl(&buf[..]).unwrap(), recs);
    }
}
