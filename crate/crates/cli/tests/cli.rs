use std::path::PathBuf;
use std::process::{Command, Output};

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("kochheat-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn kochheat(dir: &PathBuf, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kochheat"))
        .args(args)
        .current_dir(dir)
        .env("KOCH_HEAT_CACHE", dir.join("cache"))
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn generate_writes_svg() {
    let d = scratch("generate");
    let o = kochheat(&d, &["generate", "--seq", "1,3,2,1", "--level", "3", "--svg", "out.svg"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("280 segments"));
    let svg = std::fs::read_to_string(d.join("out.svg")).unwrap();
    assert!(svg.starts_with("<?xml") && svg.contains("<path"));
}

#[test]
fn doubling_rule_dims_json() {
    let d = scratch("dims");
    let o = kochheat(&d, &["dims", "--rule", "example33", "--n", "65536", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert!((v["lower"].as_f64().unwrap() - 1.2225).abs() < 5e-3);
    assert!((v["upper"].as_f64().unwrap() - 1.2395).abs() < 5e-3);
}

#[test]
fn exit_codes() {
    let d = scratch("exit");
    assert_eq!(kochheat(&d, &["generate", "--level", "2", "--frobnicate"]).status.code(), Some(2));
    assert_eq!(kochheat(&d, &["nonsense"]).status.code(), Some(2));
    assert_eq!(kochheat(&d, &["report", "--out-dir", "r"]).status.code(), Some(2));
    assert_eq!(kochheat(&d, &["generate", "--seq", "0", "--level", "2"]).status.code(), Some(2));
    assert_eq!(kochheat(&d, &["generate", "--seq", "3", "--level", "12"]).status.code(), Some(3));
    assert_eq!(kochheat(&d, &["--help"]).status.code(), Some(0));
}

#[test]
fn tube_is_cached() {
    let d = scratch("tube");
    let args = ["tube", "--seq", "1", "--eps-from", "0.01", "--eps-to", "0.1", "--count", "4", "--csv", "mu.csv"];
    let first = kochheat(&d, &args);
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    assert!(stdout(&first).contains("cache hits 0"));
    let second = kochheat(&d, &args);
    assert!(stdout(&second).contains("cache hits 1"));
    let csv = std::fs::read_to_string(d.join("mu.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn heat_fd_csv() {
    let d = scratch("heat");
    let o = kochheat(
        &d,
        &["heat", "--seq", "1", "--level", "4", "--method", "fd", "--s-from", "1e-6", "--s-to", "1e-5", "--count", "3"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert!(lines.next().unwrap().starts_with("s,"));
    let e: Vec<f64> = lines
        .take(3)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(e.windows(2).all(|w| w[1] > w[0]), "{e:?}");
}

#[test]
fn report_slopes_from_documents() {
    let d = scratch("report");
    let o = kochheat(
        &d,
        &["tube", "--seq", "1", "--eps-from", "0.003", "--eps-to", "0.1", "--count", "10", "--json", "tube.json"],
    );
    assert_eq!(o.status.code(), Some(0));
    let o = kochheat(&d, &["report", "--inputs", "tube.json", "--out-dir", "rep", "--svg"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("rep/report.json")).unwrap()).unwrap();
    let slope = doc["data"]["panels"][0]["slope"].as_f64().unwrap();
    let want = 2.0 - 4f64.ln() / 3f64.ln();
    assert!((slope - want).abs() < 0.03, "{slope}");
    assert!(d.join("rep/tube-mu.svg").exists() && d.join("rep/tube-mu.csv").exists());
}

#[test]
fn report_rejects_bad_schema() {
    let d = scratch("schema");
    std::fs::write(d.join("bad.json"), r#"{"version":1,"kind":"tube","data":{"x":1}}"#).unwrap();
    let o = kochheat(&d, &["report", "--inputs", "bad.json", "--out-dir", "rep"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.json"));
}

#[test]
fn selfsim_is_reproducible_single_threaded() {
    let d = scratch("selfsim");
    let args = [
        "--threads", "1", "selfsim", "--eps-min", "0.004", "--seeds", "3", "--heat-seeds", "2", "--eps-count", "4",
        "--s-count", "3",
    ];
    let mut a = args.to_vec();
    a.extend(["--out-dir", "a"]);
    let mut b = args.to_vec();
    b.extend(["--out-dir", "b"]);
    let oa = kochheat(&d, &a);
    assert_eq!(oa.status.code(), Some(0), "{}", String::from_utf8_lossy(&oa.stderr));
    assert!(stdout(&oa).contains("MHat"));
    kochheat(&d, &b);
    for f in ["selfsim-tube.csv", "selfsim-heat.csv", "selfsim-summary.json"] {
        assert_eq!(
            std::fs::read(d.join("a").join(f)).unwrap(),
            std::fs::read(d.join("b").join(f)).unwrap(),
            "{f}"
        );
    }
    let o = kochheat(&d, &["report", "--inputs", "a/selfsim-summary.json", "--out-dir", "rep"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn gbp_ensemble_csv() {
    let d = scratch("gbp");
    let o = kochheat(&d, &["gbp", "--t", "2,4", "--seeds", "8", "--csv", "g.csv", "--tree-json", "tree.json"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(d.join("g.csv")).unwrap();
    assert!(csv.starts_with("t,meanM,stderrM,meanZnorm"));
    assert_eq!(csv.lines().count(), 3);
    assert!(d.join("tree.json").exists());
}

#[test]
fn carpet_dims_and_tube() {
    let d = scratch("carpet");
    let o = kochheat(
        &d,
        &["carpet", "--pattern", "0111;1000", "--level", "3", "--eps-from", "0.004", "--eps-to", "0.03", "--count", "9"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("minkowski 1.500000000000"));
}
