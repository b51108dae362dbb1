use std::path::Path;
use std::process::{Command, Output};

fn tailfit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tailfit"))
        .args(args)
        .env_remove("TAILFIT_THREADS")
        .output()
        .expect("run tailfit")
}

fn ok(args: &[&str]) -> Vec<u8> {
    let out = tailfit(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(bytes: &[u8]) -> serde_json::Value {
    serde_json::from_slice(bytes).expect("JSON output")
}

#[test]
fn fit_with_fixed_xmin_recovers_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("pl.txt");
    ok(&["simulate", "powerlaw", "--gamma", "1.53", "--tau", "59", "-n", "100000", "--seed", "5", "-o", p(&data)]);
    let v = json(&ok(&["fit", "--input", p(&data), "--dist", "powerlaw", "--xmin", "59"]));
    let gamma = v["gamma"].as_f64().unwrap();
    assert!((gamma - 1.53).abs() < 0.01, "{v}");
    assert_eq!(v["xmin"].as_f64(), Some(59.0));
    assert_eq!(v["n"].as_u64(), Some(100_000));
    assert!(v["mu"].is_null() && v["LR"].is_null());
}

#[test]
fn seeded_fit_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("ln.txt");
    ok(&["simulate", "lognormal", "--mu", "3", "--sigma", "1.2", "-n", "3000", "--seed", "2", "-o", p(&data)]);
    let args = ["fit", "--input", p(&data), "--dist", "both", "--bootstrap", "100", "--seed", "7"];
    let a = ok(&args);
    let b = ok(&args);
    assert_eq!(a, b);
    let v = json(&a);
    assert_eq!(v.as_object().unwrap().len(), 9);
    let text = String::from_utf8(a.clone()).unwrap();
    let at: Vec<usize> = ["dist", "gamma", "p", "xmin", "mu", "sigma", "loglik_p", "LR", "n"]
        .iter()
        .map(|k| text.find(&format!("\"{k}\":")).expect(k))
        .collect();
    assert!(at.windows(2).all(|w| w[0] < w[1]), "{text}");
    assert_eq!(v["dist"], "both");
    for k in ["gamma", "p", "xmin", "mu", "sigma", "loglik_p", "LR"] {
        assert!(v[k].is_f64(), "{k} missing in {v}");
    }
    // thread count does not change the result
    let mut one = args.to_vec();
    one.extend(["--threads", "1"]);
    assert_eq!(ok(&one), a);
}

#[test]
fn simulation_is_seeded_in_every_format() {
    for fmt in ["csv", "jsonl", "bin"] {
        let args = ["simulate", "exp-exp", "--gamma", "2", "--tau", "1", "-n", "500", "--seed", "9", "--format", fmt];
        assert_eq!(ok(&args), ok(&args));
    }
    let bin = ok(&["simulate", "powerlaw", "--gamma", "2", "--tau", "1", "-n", "10", "--format", "bin"]);
    assert_eq!(&bin[..4], b"TFD1");
    assert_eq!(u64::from_le_bytes(bin[4..12].try_into().unwrap()), 10);
    assert_eq!(bin.len(), 12 + 80);
}

#[test]
fn binary_and_text_inputs_fit_alike() {
    let dir = tempfile::tempdir().unwrap();
    let (txt, bin) = (dir.path().join("d.txt"), dir.path().join("d.bin"));
    let sim = ["simulate", "lognormal", "--mu", "2", "--sigma", "1", "-n", "2000", "--seed", "4"];
    let mut a = sim.to_vec();
    a.extend(["-o", p(&txt)]);
    ok(&a);
    let mut b = sim.to_vec();
    b.extend(["-o", p(&bin), "--format", "bin"]);
    ok(&b);
    let x = ok(&["fit", "-i", p(&txt), "--dist", "lognormal"]);
    let y = ok(&["fit", "-i", p(&bin), "--dist", "lognormal"]);
    assert_eq!(x, y);
}

#[test]
fn bin_writes_histogram_csv() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.txt");
    std::fs::write(&data, "1\n2\n3\n4\n").unwrap();
    let out = String::from_utf8(ok(&["bin", "-i", p(&data), "--bins", "2"])).unwrap();
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "bin_left,bin_right,count,density");
    assert_eq!(lines[1], "1,2.5,2,0.3333333333333333");
    assert_eq!(lines[2], "2.5,4,2,0.3333333333333333");

    let out = String::from_utf8(ok(&["bin", "-i", p(&data), "--quantize", "2"])).unwrap();
    // 1 is erased; 2,3 → 2 and 4 → 4
    assert_eq!(out.lines().skip(1).collect::<Vec<_>>(), ["2,4,2,0.3333333333333333", "4,6,1,0.16666666666666666"]);
}

#[test]
fn wide_range_falls_back_to_sparse_bins() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.txt");
    std::fs::write(&data, "0.5\n1e9\n1e9\n").unwrap();
    let out = String::from_utf8(ok(&["bin", "-i", p(&data), "--width", "1"])).unwrap();
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[1], "0,1,1,0.3333333333333333");
    assert!(lines[2].starts_with("1000000000,1000000001,2,"));
}

#[test]
fn log_bins_follow_a_parabola() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("ln.txt");
    ok(&["simulate", "lognormal", "--mu", "10", "--sigma", "2", "-n", "200000", "--seed", "1", "-o", p(&data)]);
    let out = String::from_utf8(ok(&["bin", "-i", p(&data), "--log-bins", "10"])).unwrap();
    // least-squares quadratic of ln density against ln t over well-populated bins
    let pts: Vec<(f64, f64)> = out
        .lines()
        .skip(1)
        .filter_map(|l| {
            let f: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            (f[2] >= 100.0).then(|| (((f[0] * f[1]).sqrt()).ln(), f[3].ln()))
        })
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mut s = [[0.0f64; 3]; 3];
    let mut r = [0.0f64; 3];
    for &(x, y) in &pts {
        let u = [1.0, x - mx, (x - mx) * (x - mx)];
        for i in 0..3 {
            r[i] += u[i] * y;
            for j in 0..3 {
                s[i][j] += u[i] * u[j];
            }
        }
    }
    let c = solve3(s, r);
    let want = -1.0 / (2.0 * 4.0);
    assert!((c[2] - want).abs() < 0.1 * want.abs(), "{c:?}");
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> [f64; 3] {
    for k in 0..3 {
        for i in k + 1..3 {
            let f = a[i][k] / a[k][k];
            for j in k..3 {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = [0.0; 3];
    for i in (0..3).rev() {
        x[i] = (b[i] - (i + 1..3).map(|j| a[i][j] * x[j]).sum::<f64>()) / a[i][i];
    }
    x
}

#[test]
fn ingest_writes_durations_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let events = dir.path().join("e.csv");
    std::fs::write(&events, "actor,timestamp\na,0\na,60\na,120\nb,5\nb,7\nb,7\nc,abc\n").unwrap();
    let summary = dir.path().join("s.json");
    let out = ok(&["ingest", "--events", p(&events), "--summary", p(&summary)]);
    assert_eq!(String::from_utf8(out).unwrap(), "2\n60\n60\n");
    let s = json(&std::fs::read(&summary).unwrap());
    assert_eq!(s["events_read"], 6);
    assert_eq!(s["events_dropped"], 1);
    assert_eq!(s["actors"], 2);
    assert_eq!(s["durations_emitted"], 3);
    assert_eq!(s["zero_gaps_dropped"], 1);

    let per = String::from_utf8(ok(&["ingest", "--events", p(&events), "--per-actor", "--summary", p(&summary)])).unwrap();
    assert_eq!(per, "actor,duration\na,60\na,60\nb,2\n");
}

#[test]
fn ingest_direction_filter() {
    let dir = tempfile::tempdir().unwrap();
    let events = dir.path().join("e.csv");
    std::fs::write(&events, "a,0,out\na,10,in\na,30,out\na,35,in\n").unwrap();
    let out = ok(&["ingest", "--events", p(&events), "--direction", "inbound", "--summary", p(&dir.path().join("s"))]);
    assert_eq!(String::from_utf8(out).unwrap(), "25\n");
}

#[test]
fn report_renders_rows_in_input_order() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.jsonl");
    std::fs::write(
        &a,
        r#"{"dist":"both","gamma":2.45,"p":0.0,"xmin":2700,"mu":8.14,"sigma":3.07,"loglik_p":0.0,"LR":-1327.5,"n":12345}"#,
    )
    .unwrap();
    std::fs::write(
        &b,
        concat!(
            r#"{"dist":"powerlaw","gamma":1.53,"p":0.08,"xmin":59,"mu":null,"sigma":null,"loglik_p":null,"LR":null,"n":10}"#,
            "\n",
            r#"{"dist":"powerlaw","gamma":1.5}"#,
            "\n"
        ),
    )
    .unwrap();
    let out = tailfit(&["report", p(&a), p(&b)]);
    assert!(out.status.success());
    let md = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = md.lines().collect();
    assert_eq!(lines.len(), 4, "{md}");
    assert_eq!(lines[0], "| dist | gamma(pl) | p(pl) | xmin | mu | sigma | p(ln) | LR | n |");
    assert_eq!(lines[2], "| both | 2.45 | 0.00 | 2700 | 8.14 | 3.07 | 0.00 | -1327.50 (lognormal) | 12345 |");
    assert_eq!(lines[3], "| powerlaw | 1.53 | 0.08 | 59 | - | - | - | - | 10 |");
    // the malformed row is listed on stderr
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("schema mismatch"), "{err}");

    let csv = String::from_utf8(ok(&["report", "--format", "csv", p(&a)])).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "dist,gamma(pl),p(pl),xmin,mu,sigma,p(ln),LR,n");
}

#[test]
fn gibrat_trajectory_csv() {
    let out = String::from_utf8(ok(&[
        "simulate", "gibrat", "--s0", "2", "--steps", "3", "--agents", "2", "--xi-std", "0",
    ]))
    .unwrap();
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "agent,step,size");
    assert_eq!(lines.len(), 1 + 2 * 4);
    assert!(lines[1..].iter().all(|l| l.ends_with(",2")), "{out}");
}

#[test]
fn errors_exit_with_kind_line() {
    let out = tailfit(&["fit", "--input", "/definitely/not/here.txt"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error kind=io: "), "{err}");
    assert_eq!(err.lines().count(), 1);

    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.txt");
    std::fs::write(&data, "1\n2\n").unwrap();
    let out = tailfit(&["fit", "--input", p(&data)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error kind=too_few_points"));

    let out = tailfit(&["simulate", "powerlaw", "--gamma", "0.5", "--tau", "1", "-n", "5"]);
    assert_eq!(out.status.code(), Some(2));

    let out = tailfit(&["fit", "--input", p(&data), "--bootstrap", "10"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error kind=invalid_parameter"));
}

#[test]
fn quantized_binned_fit_runs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("ln.txt");
    ok(&["simulate", "lognormal", "--mu", "10", "--sigma", "2", "-n", "20000", "--seed", "3", "-o", p(&data)]);
    let v = json(&ok(&["fit", "-i", p(&data), "--quantize", "3600", "--binned", "--bootstrap", "100", "--seed", "1"]));
    assert_eq!(v["dist"], "powerlaw");
    let x = v["xmin"].as_f64().unwrap();
    assert_eq!(x % 3600.0, 0.0);
    assert!(v["p"].as_f64().is_some());
}
