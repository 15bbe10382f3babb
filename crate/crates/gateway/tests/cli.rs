mod common;

use std::io::Write;
use std::process::{Command, Output, Stdio};

use semfarm_core::interop::Format;
use serde_json::Value;

use common::*;

fn semfarm(args: &[&str], stdin: &[u8]) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_semfarm"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(stdin).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// A failed command prints exactly one JSON object on stderr.
fn assert_one_line_error(o: &Output) -> Value {
    assert!(!o.status.success());
    let err = String::from_utf8(o.stderr.clone()).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    let v: Value = serde_json::from_str(err.trim()).unwrap();
    assert!(v["error"].is_string());
    v
}

#[test]
fn convert_round_trips_through_every_format() {
    for f in Format::ALL {
        let there = semfarm(
            &["convert", "--from", "json", "--to", f.as_str()],
            TEMP_WIRE.as_bytes(),
        );
        assert!(there.status.success(), "{f}");
        let back = semfarm(
            &["convert", "--from", f.as_str(), "--to", "json"],
            &there.stdout,
        );
        assert!(back.status.success(), "{f}");
        assert_eq!(
            stdout(&back).trim(),
            semfarm_core::CanonicalRecord::from_wire(TEMP_WIRE)
                .unwrap()
                .to_wire(),
            "{f}"
        );
    }
}

#[test]
fn convert_rejects_invalid_payloads_with_one_error_line() {
    let out = semfarm(
        &["convert", "--from", "json", "--to", "csv"],
        b"{\"sensor_id\": 1}",
    );
    let v = assert_one_line_error(&out);
    assert_eq!(v["kind"], "error");
    assert!(out.stdout.is_empty());
    let usage = semfarm(&["convert", "--from", "yaml", "--to", "csv"], b"");
    assert_eq!(usage.status.code(), Some(2));
    assert_eq!(assert_one_line_error(&usage)["kind"], "usage");
}

#[test]
fn reason_on_the_plot_prints_the_four_actions() {
    let dir = tempfile::tempdir().unwrap();
    let scn = plot_scenario();
    let sim = semfarm(
        &[
            "sim",
            "run",
            "--scenario",
            scn.to_str().unwrap(),
            "--seed",
            "7",
            "--canonical",
        ],
        b"",
    );
    assert!(sim.status.success());
    let input = dir.path().join("plot.ndjson");
    std::fs::write(&input, &sim.stdout).unwrap();
    let d = core_data();
    let out = semfarm(
        &[
            "reason",
            "--input",
            input.to_str().unwrap(),
            "--rules",
            d.join("rules.json").to_str().unwrap(),
            "--fuzzy",
            d.join("fuzzy.json").to_str().unwrap(),
            "--bayes",
            d.join("bayes.json").to_str().unwrap(),
        ],
        b"",
    );
    assert!(out.status.success());
    let recs: Vec<Value> = stdout(&out)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let mut actions: Vec<&str> = recs
        .iter()
        .map(|r| r["action_id"].as_str().unwrap())
        .collect();
    actions.sort();
    assert_eq!(
        actions,
        [
            "activate_cooling",
            "adjust_ph",
            "grow_lights_on",
            "irrigate"
        ]
    );
    let irrigate = recs.iter().find(|r| r["action_id"] == "irrigate").unwrap();
    assert!(irrigate["explanation"]
        .as_str()
        .unwrap()
        .starts_with("Soil moisture less than 30%: Soil moisture is 23.45%"));
}

#[test]
fn reason_reports_bad_input_lines() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.ndjson");
    std::fs::write(&input, format!("{TEMP_WIRE}\nnot a record\n")).unwrap();
    let out = semfarm(&["reason", "--input", input.to_str().unwrap()], b"");
    let v = assert_one_line_error(&out);
    assert!(v["error"].as_str().unwrap().contains("line 2"), "{v}");
}

#[test]
fn syn_prints_the_lexicon_entry() {
    let lexicon_path = core_data().join("lexicon.json");
    let lexicon: Value =
        serde_json::from_str(&std::fs::read_to_string(&lexicon_path).unwrap()).unwrap();
    let soil: Vec<&str> = lexicon["synonyms"]["soil"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    let out = semfarm(
        &["syn", "soil", "--lexicon", lexicon_path.to_str().unwrap()],
        b"",
    );
    assert!(out.status.success());
    assert_eq!(stdout(&out), format!("soil: {}\n", soil.join(", ")));

    let json = semfarm(&["syn", "the", "soil", "is", "dry", "--json"], b"");
    let m: Value = serde_json::from_slice(&json.stdout).unwrap();
    let keywords: Vec<&str> = m["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["keyword"].as_str().unwrap())
        .collect();
    assert_eq!(keywords, ["soil", "dry"]);
    let stop = semfarm(&["syn", "the", "is", "a"], b"");
    assert!(stop.status.success() && stop.stdout.is_empty());
}

#[test]
fn sim_run_is_seed_deterministic() {
    let scn = core_data().join("scenarios/diurnal.scn");
    let run = |seed: &str| {
        semfarm(
            &[
                "sim",
                "run",
                "--scenario",
                scn.to_str().unwrap(),
                "--seed",
                seed,
            ],
            b"",
        )
    };
    let a = run("3");
    assert!(a.status.success());
    assert!(!a.stdout.is_empty());
    assert_eq!(a.stdout, run("3").stdout);
    assert_ne!(a.stdout, run("4").stdout);
    let missing = semfarm(&["sim", "run", "--scenario", "/no/such.scn"], b"");
    assert_one_line_error(&missing);
}

#[test]
fn gateway_with_missing_config_fails_with_one_line() {
    let out = semfarm(&["gateway", "--config", "/no/such/gateway.json"], b"");
    assert_one_line_error(&out);
}
