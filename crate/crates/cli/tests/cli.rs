use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde_json::{json, Value};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/grid60.json")
}

fn osmnav(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_osmnav"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn run(policy: &str, dir: &Path, extra: &[&str]) -> String {
    let data = fixture();
    let mut args = vec![
        "run",
        "--data",
        data.to_str().unwrap(),
        "--policy",
        policy,
        "--out",
        dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    ok(osmnav(&args))
}

#[test]
fn oracle_summary_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("oracle", dir.path(), &["--limit", "10"]);
    let row = out.lines().nth(1).unwrap();
    let cols: Vec<&str> = row.split_whitespace().collect();
    assert_eq!(cols[..4], ["oracle", "10", "0.0", "100.0"], "{out}");
    for f in [
        "results.jsonl",
        "steps.jsonl",
        "timings.jsonl",
        "config.json",
        "summary.txt",
        "summary.json",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    assert_eq!(
        fs::read_to_string(dir.path().join("results.jsonl"))
            .unwrap()
            .lines()
            .count(),
        10
    );
}

#[test]
fn random_runs_repeat_exactly() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run("random", a.path(), &["--seed", "7", "--jobs", "4"]);
    run("random", b.path(), &["--seed", "7", "--jobs", "1"]);
    for f in ["results.jsonl", "steps.jsonl", "summary.txt"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn score_reproduces_the_run_summary() {
    let dir = tempfile::tempdir().unwrap();
    let printed = run("heuristic", dir.path(), &["--columns", "sdtw"]);
    let scored = ok(osmnav(&[
        "score",
        "--run",
        dir.path().to_str().unwrap(),
        "--columns",
        "sdtw",
    ]));
    assert_eq!(printed, scored);
    assert_eq!(printed, fs::read_to_string(dir.path().join("summary.txt")).unwrap());
    assert!(!printed.contains("nDTW"));
}

#[test]
fn existing_results_need_resume() {
    let dir = tempfile::tempdir().unwrap();
    run("oracle", dir.path(), &["--limit", "5"]);
    let again = osmnav(&[
        "run",
        "--data",
        fixture().to_str().unwrap(),
        "--policy",
        "oracle",
        "--limit",
        "5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!again.status.success());
    assert!(String::from_utf8_lossy(&again.stderr).contains("--resume"));
}

#[test]
fn resume_finishes_an_interrupted_batch() {
    let full = tempfile::tempdir().unwrap();
    run("random", full.path(), &["--seed", "3"]);
    let expected = fs::read_to_string(full.path().join("results.jsonl")).unwrap();

    let cut = tempfile::tempdir().unwrap();
    run("random", cut.path(), &["--seed", "3"]);
    // keep 20 records plus half of the next one
    let lines: Vec<&str> = expected.lines().collect();
    let torn = format!("{}\n{}", lines[..20].join("\n"), &lines[20][..lines[20].len() / 2]);
    fs::write(cut.path().join("results.jsonl"), torn).unwrap();
    run("random", cut.path(), &["--seed", "3", "--resume"]);
    assert_eq!(fs::read_to_string(cut.path().join("results.jsonl")).unwrap(), expected);

    let changed = osmnav(&[
        "run",
        "--data",
        fixture().to_str().unwrap(),
        "--policy",
        "random",
        "--seed",
        "4",
        "--resume",
        "--out",
        cut.path().to_str().unwrap(),
    ]);
    assert!(!changed.status.success());
}

fn ids(dir: &Path) -> Vec<String> {
    fs::read_to_string(dir.join("results.jsonl"))
        .unwrap()
        .lines()
        .map(|l| {
            serde_json::from_str::<Value>(l).unwrap()["instance_id"]
                .as_str()
                .unwrap()
                .to_string()
        })
        .collect()
}

#[test]
fn ratings_produce_a_correlation_table() {
    let dir = tempfile::tempdir().unwrap();
    run("random", dir.path(), &["--seed", "1"]);
    let ratings = dir.path().join("ratings.csv");
    let mut csv = String::from("instance_id,rating\n");
    for (i, id) in ids(dir.path()).iter().enumerate() {
        csv.push_str(&format!("{id},{}\n", (i * 7 % 5) + 1));
    }
    fs::write(&ratings, csv).unwrap();
    let json_out = dir.path().join("score.json");
    let out = ok(osmnav(&[
        "score",
        "--run",
        dir.path().to_str().unwrap(),
        "--ratings",
        ratings.to_str().unwrap(),
        "--json",
        json_out.to_str().unwrap(),
    ]));
    assert!(out.contains("pearson") && out.contains("spearman"), "{out}");
    for m in ["NE", "SR", "OSR", "nDTW", "SDTW"] {
        assert!(
            out.lines().any(|l| l.starts_with(&format!("{m} "))),
            "{m} missing:\n{out}"
        );
    }
    let report: Value = serde_json::from_str(&fs::read_to_string(json_out).unwrap()).unwrap();
    assert_eq!(report["correlation"].as_array().unwrap().len(), 5);
    assert!(report["correlation"][0]["pearson_r"].is_number());
}

#[test]
fn results_only_score_has_no_correlation() {
    let dir = tempfile::tempdir().unwrap();
    run("oracle", dir.path(), &["--limit", "4"]);
    let out = ok(osmnav(&["score", "--run", dir.path().to_str().unwrap()]));
    assert!(!out.contains("pearson"));
}

#[test]
fn unknown_rating_id_is_named() {
    let dir = tempfile::tempdir().unwrap();
    run("oracle", dir.path(), &["--limit", "4"]);
    let ratings = dir.path().join("ratings.jsonl");
    let mut lines: Vec<String> = ids(dir.path())
        .iter()
        .map(|id| json!({"instance_id": id, "rating": 3.0}).to_string())
        .collect();
    lines.push(json!({"instance_id": "nope-17", "rating": 1.0}).to_string());
    fs::write(&ratings, lines.join("\n")).unwrap();
    let out = osmnav(&[
        "score",
        "--run",
        dir.path().to_str().unwrap(),
        "--ratings",
        ratings.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope-17"));
}

#[test]
fn difficulty_sidecar_overrides_dataset_tags() {
    let dir = tempfile::tempdir().unwrap();
    let side = dir.path().join("tags.json");
    fs::write(&side, json!({"syn0000": "tricky", "syn0001": "tricky"}).to_string()).unwrap();
    let out = run(
        "oracle",
        dir.path(),
        &["--limit", "3", "--difficulty", side.to_str().unwrap()],
    );
    assert!(out.contains("  tricky") && !out.contains("easy"), "{out}");
}

fn encode(instance: &str, kind: &str, extra: &[&str]) -> String {
    let data = fixture();
    let mut args = vec![
        "encode",
        "--data",
        data.to_str().unwrap(),
        "--instance",
        instance,
        "--kind",
        kind,
    ];
    args.extend_from_slice(extra);
    ok(osmnav(&args))
}

#[test]
fn encode_is_deterministic_and_hides_coordinates() {
    let a = encode("syn0001", "optimized-json", &["--step", "3"]);
    assert_eq!(a, encode("syn0001", "optimized-json", &["--step", "3"]));
    assert!(a.contains("Sub-Goal State: IN_PROGRESS, Iteration 3"));
    // the template itself talks about coordinates, so check the map text
    let a = encode("syn0001", "optimized-json", &["--step", "3", "--raw"]);
    for word in ["\"lat\"", "\"lng\"", "latitude", "longitude", "coordinates"] {
        assert!(!a.contains(word), "{word}");
    }
}

#[test]
fn grid_legend_lists_each_letter_once() {
    // walk until some landmark is in view
    let text = (1..7)
        .map(|s| encode("syn0004", "grid", &["--raw", "--step", &s.to_string()]))
        .find(|t| t.contains("Landmarks:"))
        .expect("a landmark comes into view");
    let legend: Vec<&str> = text
        .lines()
        .skip_while(|l| !l.starts_with("Landmarks:"))
        .skip(1)
        .take_while(|l| l.starts_with("  "))
        .collect();
    let letters: Vec<char> = legend.iter().map(|l| l.trim().chars().next().unwrap()).collect();
    let mut uniq = letters.clone();
    uniq.dedup();
    assert_eq!(letters, uniq, "{text}");
    assert!(!letters.is_empty());
}

#[test]
fn encode_errors() {
    let data = fixture();
    let d = data.to_str().unwrap();
    let unknown = osmnav(&["encode", "--data", d, "--instance", "missing", "--kind", "grid"]);
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("unknown instance missing"));
    let late = osmnav(&["encode", "--data", d, "--instance", "syn0000", "--step", "999"]);
    assert!(String::from_utf8_lossy(&late.stderr).contains("only"));
}

#[test]
fn llm_flags_are_checked() {
    let data = fixture();
    let d = data.to_str().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().to_str().unwrap();
    let missing = osmnav(&["run", "--data", d, "--policy", "llm", "--out", o]);
    assert!(String::from_utf8_lossy(&missing.stderr).contains("--endpoint"));
    let stray = osmnav(&[
        "run",
        "--data",
        d,
        "--policy",
        "oracle",
        "--endpoint",
        "http://x",
        "--out",
        o,
    ]);
    assert!(!stray.status.success());
}

/// Chat-completions stand-in: first decision of an episode walks to the
/// first listed connection, later ones complete in place, and every fifth
/// reply is garbage.
fn serve(listener: TcpListener, calls: Arc<AtomicUsize>) {
    for stream in listener.incoming() {
        let Ok(mut stream) = stream else { break };
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut len = 0;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            if line == "\r\n" || line.is_empty() {
                break;
            }
            if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                len = v.trim().parse().unwrap();
            }
        }
        let mut body = vec![0; len];
        reader.read_exact(&mut body).unwrap();
        let req: Value = serde_json::from_slice(&body).unwrap();
        let prompt = req["messages"][0]["content"].as_str().unwrap();
        let n = calls.fetch_add(1, Ordering::SeqCst);
        let after = |key: &str| {
            let i = prompt.find(key).unwrap() + key.len();
            prompt[i..].split('"').next().unwrap().to_string()
        };
        let content = if n % 5 == 4 {
            "I am not sure.".to_string()
        } else if prompt.contains("\"previous_path\": []") {
            json!({"SubPlan_Status": "IN_PROGRESS", "Next_Place": after("\"target_node_id\": \"")}).to_string()
        } else {
            let current = after("\"current_position\": {\n      \"node_id\": \"");
            json!({"SubPlan_Status": "COMPLETED", "Next_Place": current}).to_string()
        };
        let reply = json!({
            "choices": [{"message": {"role": "assistant", "content": content}}],
            "usage": {"prompt_tokens": 100, "completion_tokens": 10, "total_tokens": 110},
        })
        .to_string();
        let _ = write!(
            stream,
            "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
            reply.len(),
            reply
        );
    }
}

#[test]
fn recorded_llm_run_replays_offline() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let calls = Arc::new(AtomicUsize::new(0));
    let c = calls.clone();
    std::thread::spawn(move || serve(listener, c));

    let data = fixture();
    let d = data.to_str().unwrap();
    let live = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_osmnav"))
        .args([
            "run",
            "--data",
            d,
            "--limit",
            "10",
            "--policy",
            "llm",
            "--model",
            "m1",
            "--endpoint",
            &url,
        ])
        .args(["--jobs", "1", "--out", live.path().to_str().unwrap()])
        .env("OPENAI_API_KEY", "test-key")
        .output()
        .unwrap();
    let printed = ok(out);
    let made = calls.load(Ordering::SeqCst);
    assert!(made > 10, "{made} calls");
    let transcript = live.path().join("transcript.jsonl");
    assert_eq!(fs::read_to_string(&transcript).unwrap().lines().count(), made);

    let replay = tempfile::tempdir().unwrap();
    let replayed = ok(osmnav(&[
        "run",
        "--data",
        d,
        "--limit",
        "10",
        "--policy",
        "replay",
        "--model",
        "m1",
        "--transcript",
        transcript.to_str().unwrap(),
        "--jobs",
        "3",
        "--out",
        replay.path().to_str().unwrap(),
    ]));
    assert_eq!(calls.load(Ordering::SeqCst), made, "replay went to the network");
    assert_eq!(
        fs::read(live.path().join("results.jsonl")).unwrap(),
        fs::read(replay.path().join("results.jsonl")).unwrap()
    );
    assert_eq!(
        fs::read(live.path().join("steps.jsonl")).unwrap(),
        fs::read(replay.path().join("steps.jsonl")).unwrap()
    );
    // same table apart from the label
    assert_eq!(
        printed.lines().nth(1).unwrap()[24..],
        replayed.lines().nth(1).unwrap()[24..]
    );

    // a different model name changes the request, which replay refuses
    let other = tempfile::tempdir().unwrap();
    ok(osmnav(&[
        "run",
        "--data",
        d,
        "--limit",
        "2",
        "--policy",
        "replay",
        "--model",
        "m2",
        "--transcript",
        transcript.to_str().unwrap(),
        "--out",
        other.path().to_str().unwrap(),
    ]));
    let results = fs::read_to_string(other.path().join("results.jsonl")).unwrap();
    assert!(results.lines().all(|l| l.contains("PolicyFailure")), "{results}");
}
