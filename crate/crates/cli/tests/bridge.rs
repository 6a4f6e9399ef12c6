use std::io::{BufRead, BufReader, Write};
use std::process::{Command, Stdio};

use arl::data::ingest_reader;
use arl::learner::extract_rules_single_target;
use arl::model::{BridgeBackend, ContextTable, ModelBackend, ModelError};
use arl::{EmpiricalBackend, Exec, Thresholds};
use serde_json::Value;

const T1: &str = "A,B,C\na1,b1,c1\na1,b1,c1\na1,b2,c1\na2,b2,c2\na2,b2,c2\na2,b1,c2\n";

fn server(extra: &str) -> String {
    format!("{} {extra}", env!("CARGO_BIN_EXE_arl-mock-server"))
}

/// Sends raw lines to a fresh server and returns its replies.
fn exchange(lines: &[&str]) -> Vec<Value> {
    let mut child = Command::new(env!("CARGO_BIN_EXE_arl-mock-server"))
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    let mut stdout = BufReader::new(child.stdout.take().unwrap());
    let mut replies = Vec::new();
    for line in lines {
        writeln!(stdin, "{line}").unwrap();
        stdin.flush().unwrap();
        let mut reply = String::new();
        stdout.read_line(&mut reply).unwrap();
        replies.push(serde_json::from_str(&reply).unwrap());
    }
    drop(stdin);
    assert!(child.wait().unwrap().success());
    replies
}

#[test]
fn server_survives_bad_input() {
    let replies = exchange(&[
        "{not json",
        r#"{"op":"predict","rows":[[1,0]]}"#,
        r#"{"op":"teleport"}"#,
        r#"{"op":"hello","version":99}"#,
        r#"{"op":"hello","version":1}"#,
        r#"{"op":"fit","columns":[{"name":"A","categories":["x","y"]}],"rows":[["x"],["y"]],"target_classes":["p","q"],"labels":["p","r"]}"#,
        r#"{"op":"fit","columns":[{"name":"A","categories":["x","y"]}],"rows":[["x"],["y"]],"target_classes":["p","q"],"labels":["p","q"]}"#,
        r#"{"op":"predict","rows":[[1,0],[0,1],[0.5,0.5]]}"#,
        r#"{"op":"predict","rows":[[1,0,0]]}"#,
        r#"{"op":"shutdown"}"#,
    ]);
    for r in &replies[..4] {
        assert_eq!(r["ok"], false, "{r}");
        assert!(r["error"].is_string());
    }
    assert_eq!(replies[4], serde_json::json!({"ok": true, "name": "empirical"}));
    assert_eq!(replies[5]["ok"], false);
    assert_eq!(replies[6], serde_json::json!({"ok": true}));
    assert_eq!(
        replies[7]["probs"],
        serde_json::json!([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]])
    );
    assert_eq!(replies[8]["ok"], false);
    assert_eq!(replies[9]["ok"], true);
}

#[test]
fn bridge_matches_in_process_rules() {
    let d = ingest_reader(T1.as_bytes(), true).unwrap();
    let t = Thresholds::new(0.3, 0.6, 2).unwrap();
    let local = extract_rules_single_target(&d, &EmpiricalBackend::exact(), &t, Exec::Sequential).unwrap();
    let bridge = BridgeBackend::connect(server("")).unwrap();
    assert_eq!(bridge.server_name(), "empirical");
    for exec in [Exec::Sequential, Exec::Parallel] {
        let remote = extract_rules_single_target(&d, &bridge, &t, exec).unwrap();
        assert_eq!(local.rules, remote.rules);
        assert_eq!(local.report, remote.report);
    }
    assert!(bridge.pool_size() >= 1);
}

#[test]
fn pooled_connections_refit_when_contexts_interleave() {
    let d = ingest_reader(T1.as_bytes(), true).unwrap();
    let bridge = BridgeBackend::connect(server("")).unwrap();
    let exact = EmpiricalBackend::exact();
    let contexts: Vec<ContextTable> = (0..3).map(|j| ContextTable::for_target(&d, j).unwrap()).collect();
    let fitted: Vec<_> = contexts.iter().map(|c| bridge.fit_context(c).unwrap()).collect();
    assert_eq!(bridge.fits_sent(), 3);
    // One process, three contexts: predicting on the first forces a re-fit.
    let probe = arl::data::Matrix::from_rows(&[vec![1.0, 0.0, 0.5, 0.5]], 4).unwrap();
    for (c, f) in contexts.iter().zip(&fitted) {
        let want = exact.fit_context(c).unwrap().predict_proba(&probe).unwrap();
        assert_eq!(f.predict_proba(&probe).unwrap(), want);
    }
    assert!(bridge.fits_sent() > 3);
}

#[test]
fn server_name_becomes_the_backend_id() {
    let bridge = BridgeBackend::connect(server("--name forest")).unwrap();
    assert_eq!(bridge.id(), "forest");
}

#[test]
fn failures_surface_as_transport_errors() {
    let d = ingest_reader(T1.as_bytes(), true).unwrap();
    let ctx = ContextTable::for_target(&d, 2).unwrap();

    let err = BridgeBackend::connect("/nonexistent/server").err().unwrap();
    assert!(err.is_transport(), "{err}");

    let bridge = BridgeBackend::connect(server("--exit-on fit")).unwrap();
    let err = bridge.fit_context(&ctx).err().unwrap();
    assert!(err.is_transport(), "{err}");

    let bridge = BridgeBackend::connect(server("--fail-on predict")).unwrap();
    let fitted = bridge.fit_context(&ctx).unwrap();
    let probe = arl::data::Matrix::from_rows(&[vec![1.0, 0.0, 0.5, 0.5]], 4).unwrap();
    let err = fitted.predict_proba(&probe).unwrap_err();
    assert!(matches!(err, ModelError::Remote(_)), "{err}");
    assert!(err.is_transport());
}
