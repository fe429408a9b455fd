use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cldp::rng::stream;
use cldp::simdata::{write_csv, HolderDensity, ParetoFactor};
use serde_json::Value;

struct Workdir(tempfile::TempDir);

impl Workdir {
    fn new() -> Self {
        Self(tempfile::tempdir().unwrap())
    }

    fn file(&self, name: &str, body: &str) -> PathBuf {
        let p = self.0.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.path().join(name)
    }
}

fn cldp(args: &[&str], config: Option<&Path>, out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cldp"));
    cmd.args(args);
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    if let Some(o) = out {
        cmd.arg("--out").arg(o);
    }
    cmd.output().unwrap()
}

fn json_out(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const RR2: &str = r#"{"alpha": 1.0, "variant": "randomized_response", "input_support": [0, 1], "output_alphabet": [0, 1], "transition_table": [[0.7310585786300049, 0.2689414213699951], [0.2689414213699951, 0.7310585786300049]]}"#;

#[test]
fn audit_accepts_valid_channels_and_rejects_bad_ones() {
    let w = Workdir::new();
    w.file(
        "ch.json",
        &format!(r#"[{{"alpha": 0.8, "variant": "laplace_trunc", "T": 3.0}}, {RR2}]"#),
    );
    let cfg = w.file("audit.txt", "channel = ch.json\n");
    let out = w.path("audit.json");
    let r = cldp(&["audit"], Some(&cfg), Some(&out));
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let v = json_out(&out);
    assert_eq!(v.as_array().unwrap().len(), 2);
    assert!(v.as_array().unwrap().iter().all(|row| row["ok"] == true));

    // A table whose ratio exceeds the declared level is refused on load.
    w.file(
        "bad.json",
        r#"{"alpha": 0.1, "variant": "randomized_response", "input_support": [0, 1], "output_alphabet": [0, 1], "transition_table": [[0.9, 0.1], [0.1, 0.9]]}"#,
    );
    let bad = w.file("bad.txt", "channel = bad.json\n");
    let r = cldp(&["audit"], Some(&bad), None);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("error"));
}

#[test]
fn contract_verify_on_given_priors_and_random_suite() {
    let w = Workdir::new();
    w.file("p.json", r#"{"supports": [[0, 1], [0, 1]], "probs": [{"idx": [0, 0], "p": 0.4}, {"idx": [0, 1], "p": 0.1}, {"idx": [1, 0], "p": 0.1}, {"idx": [1, 1], "p": 0.4}]}"#);
    w.file("q.json", r#"{"supports": [[0, 1], [0, 1]], "probs": [{"idx": [0, 0], "p": 0.25}, {"idx": [0, 1], "p": 0.25}, {"idx": [1, 0], "p": 0.25}, {"idx": [1, 1], "p": 0.25}]}"#);
    w.file("chs.json", &format!("[{RR2}, {RR2}]"));
    let cfg = w.file("c.txt", "p = p.json\nq = q.json\nchannels = chs.json\n");
    let out = w.path("c.json");
    let r = cldp(&["contract-verify"], Some(&cfg), Some(&out));
    assert_eq!(r.status.code(), Some(0));
    let v = json_out(&out);
    assert!(v["lhs_jeffreys"].as_f64().unwrap() <= v["rhs"].as_f64().unwrap());

    let half = w.file("half.txt", "p = p.json\n");
    assert_eq!(cldp(&["contract-verify"], Some(&half), None).status.code(), Some(2));

    let r = cldp(&["contract-verify"], None, None);
    assert_eq!(r.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&r.stdout).unwrap();
    assert_eq!(v["violations"], 0);
}

#[test]
fn leakage_flags_strong_dependence_at_high_levels() {
    let w = Workdir::new();
    // X2 is rarely 1 unless X1 = 1; the second channel is nearly noiseless.
    w.file("dep.json", r#"{"supports": [[0, 1], [0, 1]], "probs": [{"idx": [0, 0], "p": 0.5}, {"idx": [1, 0], "p": 0.45}, {"idx": [1, 1], "p": 0.05}]}"#);
    let e4 = 4f64.exp();
    let rr = |a: f64, hi: f64| {
        format!(
            r#"{{"alpha": {a}, "variant": "randomized_response", "input_support": [0, 1], "output_alphabet": [0, 1], "transition_table": [[{hi}, {lo}], [{lo}, {hi}]]}}"#,
            hi = hi,
            lo = 1.0 - hi
        )
    };
    w.file("chs.json", &format!("[{}, {}]", rr(0.1, 0.1f64.exp() / (1.0 + 0.1f64.exp())), rr(4.0, e4 / (1.0 + e4))));
    let cfg = w.file("l.txt", "dist = dep.json\nchannels = chs.json\n");
    let out = w.path("l.json");
    let r = cldp(&["leakage"], Some(&cfg), Some(&out));
    assert_eq!(r.status.code(), Some(1), "{}", String::from_utf8_lossy(&r.stderr));
    let v = json_out(&out);
    assert_eq!(v["violation"], true);
    let sup = v["audited_sup"].as_f64().unwrap().ln();
    assert!(sup <= v["sound_alpha"].as_f64().unwrap() + 1e-9);

    assert_eq!(cldp(&["leakage"], None, None).status.code(), Some(0));
}

fn pareto_csv(w: &Workdir, n: usize) -> PathBuf {
    let m = ParetoFactor::with_default_tails(vec![4.0, 4.0], 0.5).unwrap();
    let rows = m.sample(n, &mut stream(3, 0));
    let mut buf = Vec::new();
    write_csv(&mut buf, &rows, 2).unwrap();
    let p = w.path("data.csv");
    std::fs::write(&p, buf).unwrap();
    p
}

#[test]
fn estimate_every_mode() {
    let w = Workdir::new();
    pareto_csv(&w, 4096);
    for mode in ["mean", "moment", "cov", "corr"] {
        let cfg = w.file(&format!("{mode}.txt"), &format!("mode = {mode}\ndata = data.csv\nalphas = 1,1\nks = 4,4\n"));
        let out = w.path(&format!("{mode}.json"));
        let r = cldp(&["estimate"], Some(&cfg), Some(&out));
        assert_eq!(r.status.code(), Some(0), "{mode}: {}", String::from_utf8_lossy(&r.stderr));
        assert_eq!(json_out(&out)["mode"], mode);
    }
    let dens = HolderDensity::standard(1, 2.0).unwrap();
    let rows = dens.sample(4096, &mut stream(3, 1));
    let mut buf = Vec::new();
    write_csv(&mut buf, &rows, 1).unwrap();
    std::fs::write(w.path("d1.csv"), buf).unwrap();
    let cfg = w.file("kde.txt", "mode = kde\ndata = d1.csv\nalphas = 1\nbeta = 2\nx0 = 0\n");
    let out = w.path("kde.json");
    assert_eq!(cldp(&["estimate"], Some(&cfg), Some(&out)).status.code(), Some(0));
    assert_eq!(json_out(&out)["bandwidth"]["regime"], "private");

    let bad = w.file("bad.txt", "mode = median\ndata = data.csv\nalphas = 1,1\n");
    assert_eq!(cldp(&["estimate"], Some(&bad), None).status.code(), Some(2));
    let wrong = w.file("wrong.txt", "mode = mean\ndata = data.csv\nalphas = 1\nks = 4\n");
    assert_eq!(cldp(&["estimate"], Some(&wrong), None).status.code(), Some(2));
}

#[test]
fn adaptive_both_modes() {
    let w = Workdir::new();
    pareto_csv(&w, 1024);
    let cfg = w.file("m.txt", "data = data.csv\nalphas = 1,1\n");
    let out = w.path("m.json");
    assert_eq!(cldp(&["adaptive", "--mode", "moment"], Some(&cfg), Some(&out)).status.code(), Some(0));
    let v = json_out(&out);
    assert_eq!(v["selected"].as_array().unwrap().len(), 2);
    assert_eq!(v["bv_table"].as_array().unwrap().len(), 100);

    let dens = HolderDensity::standard(1, 2.0).unwrap();
    let mut buf = Vec::new();
    write_csv(&mut buf, &dens.sample(1024, &mut stream(3, 2)), 1).unwrap();
    std::fs::write(w.path("d1.csv"), buf).unwrap();
    let cfg = w.file("d.txt", "data = d1.csv\nalphas = 1\nx0 = 0\n");
    let out = w.path("d.json");
    assert_eq!(cldp(&["adaptive", "--mode", "density"], Some(&cfg), Some(&out)).status.code(), Some(0));
    let h = json_out(&out)["selected"].as_f64().unwrap();
    assert!(h > 0.0 && h <= 1.0);

    let typo = w.file("t.txt", "data = d1.csv\nalphas = 1\nc = 3\n");
    assert_eq!(cldp(&["adaptive", "--mode", "density"], Some(&typo), None).status.code(), Some(2));
}

#[test]
fn rates_writes_csv_and_sidecar() {
    let w = Workdir::new();
    let cfg = w.file(
        "r.txt",
        "mode = moment\nmodel = pareto_factor\nks = 4,4\nalphas = 0.5,0.5\nns = 2^8..2^11\nreplications = 10\nseed = 2\n",
    );
    let out = w.path("r.csv");
    let r = cldp(&["rates"], Some(&cfg), Some(&out));
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("n,n_eff,mse,stderr,replications,seed\n"));
    assert_eq!(text.lines().count(), 5);
    assert!(w.path("r.csv.meta.json").exists());
    assert_eq!(cldp(&["rates"], Some(&cfg), None).status.code(), Some(2));
}

#[test]
fn lowerbound_both_kinds() {
    let w = Workdir::new();
    let cfg = w.file("m.txt", "ks = 4,4\nalphas = 0.5,0.5\nn = 6\n");
    let out = w.path("m.json");
    assert_eq!(cldp(&["lowerbound", "--kind", "moment"], Some(&cfg), Some(&out)).status.code(), Some(0));
    let v = json_out(&out);
    assert_eq!(v["report"]["condition3_ok"], true);
    assert_eq!(v["instance"]["n"], 6);

    let small = w.file("s.txt", "ks = 4,4\nalphas = 0.5,0.5\nn = 2\n");
    assert_eq!(cldp(&["lowerbound", "--kind", "moment"], Some(&small), None).status.code(), Some(2));

    let cfg = w.file("d.txt", "alphas = 1\nn = 100000\nbeta = 2\npanels = 100\n");
    let out = w.path("d.json");
    let r = cldp(&["lowerbound", "--kind", "density"], Some(&cfg), Some(&out));
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let v = json_out(&out);
    assert!((v["quadrature"]["mass_pi_star"].as_f64().unwrap() - 1.0).abs() < 1e-6);
}

#[test]
fn report_runs_every_suite() {
    let r = cldp(&["report"], None, None);
    assert_eq!(r.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&r.stdout).unwrap();
    assert_eq!(v["suites"].as_array().unwrap().len(), 4);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(cldp(&["nonsense"], None, None).status.code(), Some(2));
    let w = Workdir::new();
    let cfg = w.file("x.txt", "this line has no separator\n");
    assert_eq!(cldp(&["report"], Some(&cfg), None).status.code(), Some(2));
    assert_eq!(cldp(&["report"], Some(&w.path("missing.txt")), None).status.code(), Some(2));
}
