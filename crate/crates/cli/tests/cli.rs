use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

use vawt_core::{Event, EventLog, Genome};

fn vawt(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vawt")).args(args).current_dir(cwd).env_remove("VAWT_DATA_DIR").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn export_stl_reports_volume_and_rejects_bad_alleles() {
    let dir = tempfile::tempdir().unwrap();
    let raw = vawt(&["export-stl", "[2,2,3,4,5,8,13,20,34,40]", "--smooth", "0", "--out", "raw.stl"], dir.path());
    assert!(raw.status.success());
    assert!(stdout(&raw).contains("volume: 3240.000 mm3"), "{}", stdout(&raw));
    let smooth = vawt(&["export-stl", "2,2,3,4,5,8,13,20,34,40", "--out", "smooth.stl"], dir.path());
    assert!(smooth.status.success());
    let (a, b) =
        (std::fs::read(dir.path().join("raw.stl")).unwrap(), std::fs::read(dir.path().join("smooth.stl")).unwrap());
    assert_eq!(a.len(), b.len());
    assert_ne!(a, b);

    let bad = vawt(&["export-stl", "[2,2,3,4,5,8,13,20,34,43]"], dir.path());
    assert_eq!(bad.status.code(), Some(2));
    assert!(!dir.path().join("design.stl").exists());
}

#[test]
fn export_stl_by_hash() {
    let dir = tempfile::tempdir().unwrap();
    let genome: Genome = "[7,7,7,7,7,7,7,7,7,7]".parse().unwrap();
    let campaign = dir.path().join("data/campaigns/abc");
    std::fs::create_dir_all(&campaign).unwrap();
    let mut log = EventLog::create(campaign.join("events.jsonl")).unwrap();
    log.append(Event::IndividualEvaluated { genome: genome.clone(), fitness: 0.5, index: 1 }, None).unwrap();
    drop(log);

    let hash = genome.hash_hex();
    let ok = vawt(&["export-stl", &hash, "--data-dir", "data", "--smooth", "0", "--out", "h.stl"], dir.path());
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    let missing = vawt(&["export-stl", &"ab".repeat(32), "--data-dir", "data"], dir.path());
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn run_writes_history_and_deterministic_log() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.json"), r#"{"mode":"surrogate","seed":4,"evaluationBudget":120}"#).unwrap();
    for out in ["a", "b"] {
        let o = vawt(&["run", "--config", "cfg.json", "--oracle", "proxy", "--out", out], dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let history = std::fs::read_to_string(dir.path().join("a/history.csv")).unwrap();
    let lines: Vec<&str> = history.lines().collect();
    assert_eq!(lines[0], "evaluation,fitness,bestFitness,genomeHash,genome");
    assert_eq!(lines.len(), 121);
    let read = |p: &str| std::fs::read(dir.path().join(p)).unwrap();
    assert_eq!(read("a/events.jsonl"), read("b/events.jsonl"));

    let z = vawt(&["run", "--oracle", "target", "--z-mode", "--budget", "40", "--out", "z"], dir.path());
    assert!(z.status.success());
    let z_history = std::fs::read_to_string(dir.path().join("z/history.csv")).unwrap();
    let genome = z_history.lines().nth(1).unwrap().rsplit_once(",\"").unwrap().1.trim_end_matches('"');
    assert_eq!(genome.parse::<Genome>().unwrap().len(), 15);
}

#[test]
fn run_rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), r#"{"populationSize":1}"#).unwrap();
    assert_eq!(vawt(&["run", "--config", "bad.json"], dir.path()).status.code(), Some(2));
    std::fs::write(dir.path().join("junk.json"), "{").unwrap();
    assert_eq!(vawt(&["run", "--config", "junk.json"], dir.path()).status.code(), Some(2));
    assert_eq!(vawt(&["run", "--config", "missing.json"], dir.path()).status.code(), Some(2));
}

#[test]
fn reproduce_target_small_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = vawt(&["reproduce-target", "--runs", "2", "--budget", "200", "--out", "rep/r.json"], dir.path());
    // Two short runs cannot meet the acceptance thresholds.
    assert_eq!(o.status.code(), Some(1));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("rep/r.json")).unwrap()).unwrap();
    assert_eq!(report["runs"].as_array().unwrap().len(), 4);
    assert!((report["referenceWelch"]["t"].as_f64().unwrap() - 3.376).abs() <= 0.005);
    let csv = std::fs::read_to_string(dir.path().join("rep/r.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);

    let blocked = dir.path().join("file");
    std::fs::write(&blocked, "").unwrap();
    let o = vawt(&["reproduce-target", "--runs", "2", "--out", "file/r.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn http(port: u16, method: &str, path: &str, body: &str) -> Option<(u16, String)> {
    let mut stream = TcpStream::connect(("127.0.0.1", port)).ok()?;
    stream.set_read_timeout(Some(Duration::from_secs(10))).ok()?;
    let request = format!(
        "{method} {path} HTTP/1.1\r\nHost: localhost\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    stream.write_all(request.as_bytes()).ok()?;
    let mut response = String::new();
    stream.read_to_string(&mut response).ok()?;
    let status = response.split_whitespace().nth(1)?.parse().ok()?;
    let body = response.split_once("\r\n\r\n").map(|(_, b)| b.to_string()).unwrap_or_default();
    Some((status, body))
}

fn start_server(port: u16, data: &Path) -> Child {
    let child = Command::new(env!("CARGO_BIN_EXE_vawt"))
        .args(["serve", "--port", &port.to_string(), "--data-dir"])
        .arg(data)
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(20);
    while http(port, "GET", "/campaigns", "").is_none() {
        assert!(Instant::now() < deadline, "server did not come up");
        std::thread::sleep(Duration::from_millis(50));
    }
    child
}

fn interrupt(mut child: Child) -> std::process::ExitStatus {
    let killed = Command::new("kill").args(["-INT", &child.id().to_string()]).status().unwrap();
    assert!(killed.success());
    child.wait().unwrap()
}

#[test]
fn serve_lists_persists_and_stops_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let port = free_port();
    let server = start_server(port, &data);
    assert_eq!(http(port, "GET", "/campaigns", ""), Some((200, "[]".into())));
    let (status, body) = http(port, "POST", "/campaigns", r#"{"oracle":"manual","seed":1}"#).unwrap();
    assert_eq!(status, 201, "{body}");
    let (_, pending) = http(port, "GET", &format!("/campaigns/{}/pending", id_of(&body)), "").unwrap();
    assert_eq!(serde_json::from_str::<serde_json::Value>(&pending).unwrap().as_array().unwrap().len(), 20);

    // A second server on the same port must refuse to start.
    let busy = vawt(&["serve", "--port", &port.to_string(), "--data-dir", data.to_str().unwrap()], dir.path());
    assert_eq!(busy.status.code(), Some(2));

    assert!(interrupt(server).success());
    let snapshot = data.join("campaigns").join(id_of(&body)).join("snapshot.json");
    assert!(snapshot.is_file());

    let port = free_port();
    let server = start_server(port, &data);
    let (_, list) = http(port, "GET", "/campaigns", "").unwrap();
    let list: serde_json::Value = serde_json::from_str(&list).unwrap();
    assert_eq!(list.as_array().unwrap().len(), 1);
    assert!(interrupt(server).success());
}

fn id_of(body: &str) -> String {
    serde_json::from_str::<serde_json::Value>(body).unwrap()["id"].as_str().unwrap().to_string()
}
