mod common;

use std::fs::OpenOptions;
use std::io::Write;
use std::time::{Duration, Instant};

use semfarm_core::CanonicalRecord;
use semfarm_gateway::tickets::replay_lines;
use semfarm_gateway::{Decision, Gateway, StartError};
use serde_json::json;

use common::*;

const SETTLE: Duration = Duration::from_secs(10);

fn log_lines(dir: &std::path::Path, name: &str) -> Vec<String> {
    std::fs::read_to_string(dir.join("var").join(name))
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect()
}

#[test]
fn restart_reconstructs_readings_and_tickets_from_the_logs() {
    let dir = tempfile::tempdir().unwrap();
    let (readings_before, tickets_before) = {
        let g = Gateway::start(plot_config(dir.path())).unwrap();
        assert!(g.settle(SETTLE));
        let first = g.tickets().list(None)[0].ticket_id.clone();
        g.decide(&first, Decision::Approve, "ok").unwrap();
        assert!(g.settle(SETTLE));
        (g.readings().all(), g.tickets().list(None))
    };
    assert_eq!(readings_before.len(), 6, "five readings and one actuation");

    let readings_log = log_lines(dir.path(), "readings.log");
    let tickets_log = log_lines(dir.path(), "tickets.log");
    let wire: Vec<String> = readings_before
        .iter()
        .map(CanonicalRecord::to_wire)
        .collect();
    assert_eq!(
        wire, readings_log,
        "in-memory readings equal the log byte for byte"
    );
    assert_eq!(
        replay_lines(tickets_log.iter().map(String::as_str)).unwrap(),
        tickets_before
    );

    let g = Gateway::start(config(dir.path(), json!({}))).unwrap();
    assert_eq!(g.readings().all(), readings_before);
    assert_eq!(g.tickets().list(None), tickets_before);
    assert_eq!(g.case_count(), 7, "six bundled cases plus the approval");
    assert_eq!(log_lines(dir.path(), "readings.log"), readings_log);
    assert_eq!(log_lines(dir.path(), "tickets.log"), tickets_log);
}

#[test]
fn replay_resumes_after_the_last_persisted_reading() {
    let dir = tempfile::tempdir().unwrap();
    let paced = || {
        let mut c = plot_config(dir.path());
        // 1 simulated second per 100 ms of wall time.
        c.replay_rate = Some(10.0);
        c
    };
    {
        let g = Gateway::start(paced()).unwrap();
        let deadline = Instant::now() + SETTLE;
        while g.readings().len() < 2 {
            assert!(Instant::now() < deadline);
            std::thread::sleep(Duration::from_millis(5));
        }
    }
    let partial = log_lines(dir.path(), "readings.log").len();
    assert!(
        (2..5).contains(&partial),
        "stopped mid-scenario, got {partial}"
    );

    let g = Gateway::start(paced()).unwrap();
    assert!(g.settle(SETTLE));
    let ts: Vec<u64> = g.readings().all().iter().map(|r| r.timestamp()).collect();
    assert_eq!(ts, vec![1000, 2000, 3000, 4000, 5000]);
    assert_eq!(g.tickets().list(None).len(), 4);
}

#[test]
fn torn_last_line_is_dropped_on_restart() {
    let dir = tempfile::tempdir().unwrap();
    {
        let g = Gateway::start(plot_config(dir.path())).unwrap();
        assert!(g.settle(SETTLE));
    }
    let intact = log_lines(dir.path(), "readings.log");
    let mut f = OpenOptions::new()
        .append(true)
        .open(dir.path().join("var/readings.log"))
        .unwrap();
    f.write_all(br#"{"sensor_id":"TEMP102AGR","quan"#).unwrap();
    drop(f);

    let g = Gateway::start(config(dir.path(), json!({}))).unwrap();
    assert_eq!(g.readings().len(), intact.len());
    let text = std::fs::read_to_string(dir.path().join("var/readings.log")).unwrap();
    assert!(text.ends_with('\n'));
    assert_eq!(text.lines().count(), intact.len());
}

#[test]
fn corruption_inside_a_log_fails_startup() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(dir.path().join("var")).unwrap();
    std::fs::write(
        dir.path().join("var/tickets.log"),
        "garbage\n{\"also\":\"bad\"}\n",
    )
    .unwrap();
    let err = Gateway::start(config(dir.path(), json!({}))).err().unwrap();
    assert!(matches!(err, StartError::Log(_)), "{err}");
}

#[test]
fn missing_data_files_fail_fast() {
    let dir = tempfile::tempdir().unwrap();
    let text = config_json(
        dir.path(),
        json!({ "rules_path": dir.path().join("nope.json") }),
    );
    let err =
        semfarm_gateway::GatewayConfig::parse(&text.to_string(), dir.path(), |_| None).unwrap_err();
    assert!(err.to_string().contains("rules_path"), "{err}");

    let bad_rules = dir.path().join("rules.json");
    std::fs::write(&bad_rules, "{\"rules\": 3}").unwrap();
    let cfg = config(dir.path(), json!({ "rules_path": bad_rules }));
    assert!(matches!(Gateway::start(cfg), Err(StartError::Data(_))));
    assert!(
        !dir.path().join("var").exists(),
        "nothing created before data loads"
    );
}

#[test]
fn tcp_frames_are_persisted_and_reasoned_over() {
    let dir = tempfile::tempdir().unwrap();
    let g = Gateway::start(config(dir.path(), json!({ "tcp_port": 0 }))).unwrap();
    let addr = g.tcp_addr().expect("tcp ingress enabled");
    let record = CanonicalRecord::from_wire(TEMP_WIRE).unwrap();
    let mut stream = std::net::TcpStream::connect(addr).unwrap();
    stream
        .write_all(&semfarm_broker::frame_encode(&record).unwrap())
        .unwrap();
    drop(stream);
    let deadline = Instant::now() + SETTLE;
    while g.readings().is_empty() {
        assert!(Instant::now() < deadline);
        std::thread::sleep(Duration::from_millis(5));
    }
    assert!(g.settle(SETTLE));
    assert_eq!(g.readings().all()[0].value(), 36.78);
    assert_eq!(log_lines(dir.path(), "readings.log").len(), 1);
    let tickets = g.tickets().list(None);
    assert!(
        tickets
            .iter()
            .any(|t| t.recommendation.action_id.as_str() == "activate_cooling"),
        "{tickets:?}"
    );
}
