use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ledgerair"))
}

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.json"))
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn run_smoke(dir: &Path) -> (Output, PathBuf) {
    let log = dir.join("smoke.alrb");
    let out = bin()
        .args([
            "run",
            scenario("smoke").to_str().unwrap(),
            "--log",
            log.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    (out, log)
}

#[test]
fn run_prints_a_passing_report_and_writes_the_log() {
    let dir = tempfile::tempdir().unwrap();
    let (out, log) = run_smoke(dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["committed_fraction"], 1.0);
    assert_eq!(report["divergence"], 0);
    assert!(log.exists());

    let report_path = dir.path().join("report.json");
    let again = bin()
        .args([
            "run",
            scenario("smoke").to_str().unwrap(),
            "--log",
            log.to_str().unwrap(),
        ])
        .args(["--out", report_path.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(again.status.success());
    assert_eq!(
        std::fs::read_to_string(report_path).unwrap().trim_end(),
        stdout(&out).trim_end()
    );
}

#[test]
fn verify_and_tamper_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (_, log) = run_smoke(dir.path());
    let log = log.to_str().unwrap();
    let ok = bin().args(["verify", log]).output().unwrap();
    assert_eq!((ok.status.code(), stdout(&ok).trim()), (Some(0), "Ok"));

    let tampered = bin()
        .args(["tamper", log, "--height", "3", "--offset", "40"])
        .output()
        .unwrap();
    assert!(tampered.status.success());
    assert!(
        stdout(&tampered).contains("verdict: Invalid(3,"),
        "{}",
        stdout(&tampered)
    );
    let bad = bin().args(["verify", log]).output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
    assert!(stdout(&bad).starts_with("Invalid(3,"));

    bin()
        .args(["tamper", log, "--height", "3", "--offset", "40"])
        .output()
        .unwrap();
    assert!(bin()
        .args(["verify", log])
        .output()
        .unwrap()
        .status
        .success());

    let out_of_range = bin()
        .args(["tamper", log, "--height", "3", "--offset", "999999"])
        .output()
        .unwrap();
    assert_eq!(out_of_range.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out_of_range.stderr).contains("outside block 3"));
}

#[test]
fn compare_prints_divergence_and_reduction() {
    let out = bin()
        .args(["compare", scenario("compare").to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("ledger divergence: 0"));
    assert!(text.contains("reduction: 100.0%"));

    let dir = tempfile::tempdir().unwrap();
    let mut s: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(scenario("compare")).unwrap()).unwrap();
    s["baseline"]["drop_rate"] = 0.0.into();
    s["workload"]["bookings"] = 20.into();
    let lossless = dir.path().join("lossless.json");
    std::fs::write(&lossless, s.to_string()).unwrap();
    let out = bin()
        .args(["compare", lossless.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(stdout(&out).contains("reduction: n/a"));
}

#[test]
fn unparsable_scenario_exits_with_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    std::fs::write(&path, "not json").unwrap();
    let out = bin()
        .args(["run", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot parse scenario"));
}

fn http(addr: &str, request: &str) -> (u16, String, String) {
    let mut stream = TcpStream::connect(addr).unwrap();
    stream.write_all(request.as_bytes()).unwrap();
    let mut raw = String::new();
    stream.read_to_string(&mut raw).unwrap();
    let (head, body) = raw.split_once("\r\n\r\n").unwrap();
    let status = head.split_whitespace().nth(1).unwrap().parse().unwrap();
    (status, head.to_string(), body.to_string())
}

fn post(addr: &str, path: &str, token: &str, body: &str) -> (u16, String, String) {
    http(
        addr,
        &format!(
            "POST {path} HTTP/1.1\r\nHost: x\r\nAuthorization: Bearer {token}\r\nContent-Type: application/json\r\n\
             Content-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        ),
    )
}

fn get(addr: &str, path: &str, token: &str) -> (u16, String, String) {
    http(addr, &format!("GET {path} HTTP/1.1\r\nHost: x\r\nAuthorization: Bearer {token}\r\nConnection: close\r\n\r\n"))
}

#[test]
fn serve_exposes_the_api_over_http() {
    let mut child = bin()
        .args([
            "serve",
            scenario("smoke").to_str().unwrap(),
            "--listen",
            "127.0.0.1:0",
        ])
        .env("LEDGERAIR_TOKEN_CUSTOMER", "cust")
        .env("LEDGERAIR_TOKEN_ADMIN", "admin")
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let addr = line
        .trim()
        .strip_prefix("listening on http://")
        .unwrap()
        .to_string();

    let (status, head, _) = http(
        &addr,
        "OPTIONS /v1/bookings HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n",
    );
    assert_eq!(status, 204);
    assert!(head.contains("Access-Control-Allow-Origin: *"));

    let (status, _, body) = get(&addr, "/v1/flights?route=DAC%20to%20CGP", "cust");
    assert_eq!(status, 200);
    assert!(body.contains("BG147"));
    let (status, _, _) = get(&addr, "/v1/flights", "wrong");
    assert_eq!(status, 401);

    let (status, _, body) = post(
        &addr,
        "/v1/bookings",
        "cust",
        r#"{"customer":"Rafi","flight":"BG147","payment_method":"Credit Card"}"#,
    );
    assert_eq!(status, 201, "{body}");
    let booked: serde_json::Value = serde_json::from_str(&body).unwrap();
    let pnr = booked["data"]["pnr"].as_str().unwrap();
    let (_, _, body) = get(&addr, &format!("/v1/bookings/{pnr}/history"), "cust");
    assert!(body.contains("TicketIssued"));

    let (status, _, body) = post(&addr, "/v1/bookings", "cust", "{oops");
    assert_eq!(status, 400);
    assert!(body.contains("VALIDATION"));
    let (status, _, body) = get(&addr, "/v1/admin/nodes", "admin");
    assert_eq!(status, 200);
    assert!(body.contains("\"nodes\""));
    child.kill().unwrap();
    child.wait().unwrap();
}
