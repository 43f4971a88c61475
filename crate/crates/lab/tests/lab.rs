use std::process::Command;

use freesym::check::CheckRow;
use freesym_lab::config::{ExperimentConfig, Suite};
use freesym_lab::report::{self, Format, ReportRow, CSV_HEADER, PLOT_HEADER};
use freesym_lab::run_experiment;

fn csv_for(cfg: &ExperimentConfig) -> String {
    report::to_csv(&run_experiment(cfg).unwrap()).unwrap()
}

#[test]
fn same_seed_gives_identical_csv() {
    let cfg = ExperimentConfig::smoke(Suite::Norm).with_seed(7);
    assert_eq!(csv_for(&cfg), csv_for(&cfg));
    let other = ExperimentConfig::smoke(Suite::Norm).with_seed(8);
    assert_ne!(csv_for(&cfg), csv_for(&other));
}

#[test]
fn empty_space_grid_is_rejected() {
    let mut cfg = ExperimentConfig::smoke(Suite::Maincor);
    cfg.spaces.clear();
    assert!(cfg.validate().is_err());
    assert!(run_experiment(&cfg).is_err());
    assert!(ExperimentConfig::from_toml("experiment = \"maincor\"\nspaces = []\n").and_then(|c| c.validate()).is_err());
}

#[test]
fn toml_config_parses_dotted_keys() {
    let cfg = ExperimentConfig::from_toml(
        "experiment = \"js\"\nspaces = [\"lp:1\", \"l1+tlinf:2\"]\ninstance.k = 3\nmodel.n = 16\nmodel.trials = 2\n",
    )
    .unwrap();
    assert_eq!(cfg.experiment, Suite::Js);
    assert_eq!(cfg.instance.k, 3);
    assert_eq!(cfg.model_config().n, 16);
    assert_eq!(cfg.parsed_spaces().unwrap().len(), 2);
    assert!(ExperimentConfig::from_toml("experiment = \"js\"\nbogus = 1\n").is_err());
    assert!(ExperimentConfig::from_toml("experiment = \"js\"\nspaces = [\"lq:2\"]\n").and_then(|c| c.validate()).is_err());
}

#[test]
fn zero_rows_give_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested/empty.csv");
    report::emit_report(&[], Format::Csv, &path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), format!("{CSV_HEADER}\n"));
    report::emit_report(&[], Format::Plotdata, &path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), format!("{PLOT_HEADER}\n"));
}

#[test]
fn failing_row_is_written_as_false() {
    let row = ReportRow::from_check("norm", 0, 1, CheckRow::new("q", 2.0, 1.0, 1.0, 0.0), 32, 0);
    let nan = ReportRow::from_check("norm", 0, 1, CheckRow::new("q", f64::NAN, 1.0, 1.0, 0.0), 32, 0);
    let text = report::to_csv(&[row, nan, ReportRow::failure("norm", 1, 2, "bad input", 0)]).unwrap();
    let lines: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(lines.len(), 3);
    assert!(lines.iter().all(|l| l.split(',').nth(8) == Some("false")), "{text}");
    let back = report::from_csv(&text).unwrap();
    assert!(back.iter().all(|r| !r.pass));
    assert!(back[2].quantity.starts_with("failed: bad input"));
}

#[test]
fn csv_round_trips() {
    let rows = run_experiment(&ExperimentConfig::smoke(Suite::Js)).unwrap();
    let text = report::to_csv(&rows).unwrap();
    let back = report::from_csv(&text).unwrap();
    assert_eq!(report::to_csv(&back).unwrap(), text);
    assert_eq!(back.iter().map(|r| &r.quantity).collect::<Vec<_>>(), rows.iter().map(|r| &r.quantity).collect::<Vec<_>>());
}

#[test]
fn voiculescu_bernoulli_pair_gives_three_rows_per_seed() {
    let cfg = ExperimentConfig::smoke(Suite::Voiculescu);
    assert_eq!(cfg.instance.k, 2);
    let rows = run_experiment(&cfg).unwrap();
    assert_eq!(rows.len(), 3 * cfg.model.trials);
    let mut seeds: Vec<u64> = rows.iter().map(|r| r.seed).collect();
    seeds.dedup();
    assert_eq!(seeds.len(), cfg.model.trials);
    assert!(rows.iter().all(|r| r.pass), "{rows:?}");
}

#[test]
fn maincor_plotdata_has_both_sides_over_t() {
    let cfg = ExperimentConfig::smoke(Suite::Maincor);
    let rows = run_experiment(&cfg).unwrap();
    assert!(rows.iter().all(|r| r.pass));
    let series = report::plot_series(&rows);
    let ts: Vec<f64> = vec![0.1, 1.0, 10.0];
    let t_series: Vec<&String> = series.keys().filter(|k| !k.contains('@')).collect();
    assert!(!t_series.is_empty());
    for key in t_series {
        let other = if let Some(base) = key.strip_suffix(":lhs") { format!("{base}:rhs") } else { key.replace(":rhs", ":lhs") };
        assert!(series.contains_key(&other), "{key} without {other}");
        for t in &ts {
            assert!(series[key].iter().any(|(x, _)| x == t), "{key} misses t = {t}");
        }
    }
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_freesym-lab");
    let status = Command::new(bin).args(["burkholder", "--out"]).arg(dir.path()).status().unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(dir.path().join("burkholder.csv").exists());
    assert!(dir.path().join("burkholder.plot.csv").exists());
    let status = Command::new(bin).args(["report", "--out"]).arg(dir.path()).status().unwrap();
    assert_eq!(status.code(), Some(0));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "experiment = \"burkholder\"\nspaces = []\n").unwrap();
    let status = Command::new(bin).args(["burkholder", "--out"]).arg(dir.path()).arg("--config").arg(&bad).status().unwrap();
    assert_eq!(status.code(), Some(2));
    let status = Command::new(bin).args(["norm", "--suite", "nightly"]).status().unwrap();
    assert_eq!(status.code(), Some(2));

    std::fs::write(dir.path().join("burkholder.csv"), format!("{CSV_HEADER}\nburkholder,0,1,q,2.0,1.0,1.0,0.0,false,0\n")).unwrap();
    let status = Command::new(bin).args(["report", "--out"]).arg(dir.path()).status().unwrap();
    assert_eq!(status.code(), Some(1));
}
