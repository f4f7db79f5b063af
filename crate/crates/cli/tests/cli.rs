use std::process::Command;

use watn_cli::cli::{exit_code, EXIT_AUTH, EXIT_NETWORK, EXIT_PARTIAL, EXIT_REJECTED, EXIT_USAGE};
use watn_cli::scenario::{self, Harness, CLOCK_START};
use watn_client::ClientError;
use watn_core::invite::{InviteToken, Nonce};
use watn_core::ParticipantId;

fn args(s: &[&str]) -> Vec<String> {
    s.iter().map(|a| a.to_string()).collect()
}

fn scenario_main(a: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = scenario::main_with(a, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

#[test]
fn feed_json_without_sharers_is_empty_array() {
    let h = Harness::start(1).unwrap();
    let (code, out, _) = h.watn("A", &args(&["--json", "feed"]));
    assert_eq!(code, 0);
    assert_eq!(out, "[]\n");
}

#[test]
fn expired_invite_exits_rejected_and_leaves_legend() {
    let h = Harness::start(2).unwrap();
    let (_, a, _) = h.watn("A", &args(&["init"]));
    let sharer = ParticipantId::parse(a.trim()).unwrap();
    let token = InviteToken {
        sharer,
        nonce: Nonce::from_b64("AAAAAAAAAAAAAAAA").unwrap(),
        expiry: CLOCK_START - 1,
    }
    .encode(h.api().key());
    h.watn("B", &args(&["init"]));
    let (code, _, err) = h.watn("B", &args(&["accept", &token, "--name", "alice"]));
    assert_eq!(code, EXIT_REJECTED);
    assert!(err.contains("expired_token"), "{err}");
    let (_, legend, _) = h.watn("B", &args(&["--json", "legend"]));
    assert_eq!(legend, "{}\n");
    let (_, sharers, _) = h.watn("B", &args(&["sharers"]));
    assert_eq!(sharers, "");
}

#[test]
fn bundled_scenario_passes() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/basic_share.scn");
    let (code, out, err) = scenario_main(&["watn-scenario", "run", path]);
    assert_eq!(code, 0, "{out}{err}");
    assert!(out.contains("0 found"));
    assert!(!out.contains("FAIL"));
}

#[test]
fn scenario_with_undefined_label_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.scn");
    std::fs::write(&path, "clients A\nA: init\nB: feed => ok\n").unwrap();
    let (code, out, err) = scenario_main(&["watn-scenario", "run", path.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("line 3") && err.contains("\"B\""), "{err}");
    assert!(out.is_empty(), "nothing runs: {out}");
}

#[test]
fn scenario_parse_rejects_malformed_lines() {
    let cases = [
        ("A: init\n", "undefined client label"),
        (
            "clients A\nA: init => maybe\n",
            "must start with ok or exit",
        ),
        ("clients A\nA: init => exit\n", "needs a number"),
        (
            "clients A\nA: accept $tok --name x\n",
            "before it is captured",
        ),
        ("clients A\nserver: reboot\n", "stop or start"),
        ("clients A\nA: init => ok frobnicate 3\n", "unknown check"),
        ("clients A A\n", "declared twice"),
        ("clients A\njust words\n", "label: command"),
    ];
    for (text, want) in cases {
        let e = scenario::parse(text).unwrap_err();
        assert!(e.msg.contains(want), "{text:?}: {e}");
    }
}

#[test]
fn failed_expectation_fails_the_run() {
    let script = scenario::parse("clients A\nA: feed => ok contains \"somebody\"\n").unwrap();
    let mut out = Vec::new();
    let outcome = scenario::run(&script, 0, &mut out).unwrap();
    assert_eq!((outcome.passed, outcome.failed), (0, 1));
    assert!(!outcome.success());
    let text = String::from_utf8(out).unwrap();
    assert!(
        text.contains("FAIL   2") && text.ends_with("FAIL: 0 passed, 1 failed\n"),
        "{text}"
    );
}

#[test]
fn fuzz_seed_7_agrees_with_oracle() {
    let (code, out, _) = scenario_main(&["watn-scenario", "fuzz", "--seed", "7"]);
    assert_eq!(code, 0, "{out}");
    assert!(
        out.contains("1000 ops") && out.contains("0 mismatches"),
        "{out}"
    );
}

#[test]
fn usage_errors_exit_1() {
    let h = Harness::start(3).unwrap();
    for a in [
        vec!["checkin", "north", "3"],
        vec!["revoke", "someone"],
        vec!["accept", "tok"],
        vec!["name", "not-an-id", "x"],
        vec!["frobnicate"],
        vec!["whoami"],
    ] {
        let (code, _, err) = h.watn("A", &args(&a));
        assert_eq!(code, EXIT_USAGE, "{a:?}: {err}");
    }
}

#[test]
fn local_commands_work_without_server() {
    let mut h = Harness::start(4).unwrap();
    let (_, a, _) = h.watn("A", &args(&["init"]));
    let a = a.trim().to_owned();
    h.stop_server();
    assert_eq!(
        h.watn("A", &args(&["whoami"])),
        (0, format!("{a}\n"), String::new())
    );
    assert_eq!(h.watn("A", &args(&["name", &a, "me myself"])).0, 0);
    assert_eq!(
        h.watn("A", &args(&["legend"])).1,
        format!("{a} me myself\n")
    );
    assert_eq!(h.watn("A", &args(&["unname", "me myself"])).0, 0);
    let (code, _, err) = h.watn("A", &args(&["feed", "--offline"]));
    assert_eq!(code, EXIT_NETWORK, "no cache yet: {err}");
    let (code, _, _) = h.watn("A", &args(&["checkin", "1", "2"]));
    assert_eq!(code, EXIT_NETWORK);
}

#[test]
fn negative_coordinates_and_range_errors() {
    let h = Harness::start(5).unwrap();
    let (code, out, err) = h.watn("A", &args(&["--json", "checkin", "-33.9", "-70.6"]));
    assert_eq!(code, 0, "{err}");
    assert!(out.starts_with("{\"ts\":"));
    let (code, _, err) = h.watn("A", &args(&["checkin", "91", "0"]));
    assert_eq!(code, EXIT_REJECTED);
    assert!(err.contains("out_of_range"));
    let (_, hist, _) = h.watn("A", &args(&["--json", "history", "me"]));
    let v: serde_json::Value = serde_json::from_str(&hist).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 1);
    assert_eq!(v[0]["lat"], -33.9);
}

#[test]
fn wrong_secret_exits_auth() {
    let h = Harness::start(6).unwrap();
    h.watn("A", &args(&["init"]));
    let path = h.state_path("A");
    let mut state: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    state["own"]["secret"] = "AAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAA".into();
    std::fs::write(&path, serde_json::to_vec(&state).unwrap()).unwrap();
    let (code, _, _) = h.watn("A", &args(&["feed"]));
    assert_eq!(code, EXIT_AUTH);
}

#[test]
fn json_output_is_stable_across_seeded_runs() {
    let run = || {
        let h = Harness::start(9).unwrap();
        let (_, inv, _) = h.watn("A", &args(&["--json", "invite"]));
        let link: serde_json::Value = serde_json::from_str(&inv).unwrap();
        let link = link["link"].as_str().unwrap().to_owned();
        h.watn("B", &args(&["accept", &link, "--name", "ann"]));
        h.watn("A", &args(&["checkin", "10.5", "20.25", "-m", "hi"]));
        let outs: Vec<String> = [
            &["--json", "feed"][..],
            &["--json", "sharers"],
            &["--json", "history", "ann"],
        ]
        .iter()
        .map(|a| h.watn("B", &args(a)).1)
        .collect();
        (inv, outs)
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    let feed: serde_json::Value = serde_json::from_str(&a.1[0]).unwrap();
    assert_eq!(feed[0]["display"], "ann");
    assert_eq!(feed[0]["msg"], "hi");
}

#[test]
fn wipe_forgets_everything_and_next_init_is_new() {
    let h = Harness::start(10).unwrap();
    let (_, first, _) = h.watn("A", &args(&["init"]));
    h.watn("A", &args(&["name", first.trim(), "self"]));
    assert_eq!(h.watn("A", &args(&["wipe"])).0, 0);
    assert!(!h.state_path("A").exists());
    let (_, second, _) = h.watn("A", &args(&["init"]));
    assert_ne!(first, second);
    assert!(h
        .api()
        .store()
        .is_retired(&ParticipantId::parse(first.trim()).unwrap()));
}

#[test]
fn exit_code_classes() {
    let io = || std::io::Error::other("disk full");
    assert_eq!(exit_code(&ClientError::AuthFailed), EXIT_AUTH);
    assert_eq!(
        exit_code(&ClientError::ServerUnreachable("x".into())),
        EXIT_NETWORK
    );
    assert_eq!(
        exit_code(&ClientError::Rejected {
            status: 400,
            code: "bad_token".into()
        }),
        EXIT_REJECTED
    );
    let sharer = ParticipantId::parse("AAAAAAAAAAAAAAAAAAAAAA").unwrap();
    assert_eq!(
        exit_code(&ClientError::PartialCommit {
            sharer,
            name: "n".into(),
            source: io()
        }),
        EXIT_PARTIAL
    );
    assert_eq!(exit_code(&ClientError::EmptyName), EXIT_USAGE);
    assert_eq!(exit_code(&ClientError::Persist(io())), EXIT_USAGE);
}

#[test]
fn binary_reads_environment() {
    let h = Harness::start(11).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let state = dir.path().join("s.json");
    let watn = |a: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_watn"))
            .args(a)
            .env("WATN_SERVER", h.base_url())
            .env("WATN_STATE", &state)
            .env("WATN_TEST_CLOCK", "5000:0")
            .output()
            .unwrap()
    };
    let init = watn(&["init"]);
    assert!(init.status.success());
    assert!(state.exists());
    assert!(watn(&["feed"]).status.success());
    let cached: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&state).unwrap()).unwrap();
    assert_eq!(cached["fetched_ts"], 5000);
    let bad = Command::new(env!("CARGO_BIN_EXE_watn"))
        .arg("whoami")
        .env("WATN_STATE", &state)
        .env("WATN_TEST_CLOCK", "soon")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(EXIT_USAGE));
    let offline = Command::new(env!("CARGO_BIN_EXE_watn"))
        .args(["--server", "http://127.0.0.1:9", "--state"])
        .arg(&state)
        .arg("readers")
        .output()
        .unwrap();
    assert_eq!(offline.status.code(), Some(EXIT_NETWORK));
}

struct ClosedPipe;

impl std::io::Write for ClosedPipe {
    fn write(&mut self, _: &[u8]) -> std::io::Result<usize> {
        Err(std::io::ErrorKind::BrokenPipe.into())
    }
    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

#[test]
fn closed_stdout_is_not_an_error() {
    let h = Harness::start(12).unwrap();
    let state = h.state_path("A");
    let mut err = Vec::new();
    let code = watn_cli::cli::run_with(
        [
            "watn",
            "--server",
            &h.base_url(),
            "--state",
            state.to_str().unwrap(),
            "init",
        ],
        std::sync::Arc::new(watn_core::TestClock::new(0, 0)),
        &mut ClosedPipe,
        &mut err,
    );
    assert_eq!(code, 0);
    assert!(err.is_empty());
    let (code, _, err) = h.watn("B", &args(&["whoami"]));
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("watn init"), "{err}");
}
