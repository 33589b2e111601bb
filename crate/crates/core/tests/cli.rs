use std::path::Path;
use std::process::{Command, Output};

use sup_core::baselines::classic_procedure;
use sup_core::cli::read_pvalue_csv;
use sup_core::methods::{run_method, Method, MethodSettings};
use sup_core::thresholds::FamilyKind;
use sup_core::{PValueSet, RandomStream};

fn sup(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sup")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn key(text: &str, k: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{k}=")))
        .unwrap_or_else(|| panic!("no `{k}` in {text}"))
        .parse()
        .unwrap()
}

fn write_pvalues(path: &Path, n: usize, seed: u64) -> Vec<f64> {
    let mut s = RandomStream::new(seed, 0);
    let p: Vec<f64> = (0..n)
        .map(|j| sup_core::num::std_normal_cdf(s.normal() - if j % 20 == 0 { 4.0 } else { 0.0 }))
        .collect();
    let body: String = p.iter().enumerate().map(|(j, v)| format!("h{j},{v}\n")).collect();
    std::fs::write(path, format!("id,p\n{body}")).unwrap();
    p
}

#[derive(Debug, PartialEq)]
struct OutRow {
    id: String,
    p: f64,
    noisy: Option<f64>,
    rejected: bool,
}

fn read_output(path: &Path) -> Vec<OutRow> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["id", "p", "noisy_p", "rejected"]);
    rdr.records()
        .map(|r| {
            let r = r.unwrap();
            OutRow {
                id: r[0].to_string(),
                p: r[1].parse().unwrap(),
                noisy: if r[2].is_empty() { None } else { Some(r[2].parse().unwrap()) },
                rejected: &r[3] == "1",
            }
        })
        .collect()
}

#[test]
fn three_row_bh_matches_classic() {
    let dir = tempfile::tempdir().unwrap();
    let (input, output) = (dir.path().join("in.csv"), dir.path().join("out.csv"));
    std::fs::write(&input, "id,p\na,0.001\nb,0.04\nc,0.3\n").unwrap();
    let o = sup(&["run", "--input", input.to_str().unwrap(), "--output", output.to_str().unwrap(), "--method", "bh", "--alpha", "0.05"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_output(&output);
    let got: Vec<&str> = rows.iter().filter(|r| r.rejected).map(|r| r.id.as_str()).collect();
    let expect = classic_procedure(&PValueSet::new(vec![0.001, 0.04, 0.3]).unwrap(), FamilyKind::Bh, 0.05).unwrap();
    assert_eq!(expect, vec![0]);
    assert_eq!(got, vec!["a"]);
    assert!(rows.iter().all(|r| r.noisy.is_none()));
    assert_eq!(key(&stdout(&o), "rejections"), 1.0);
}

#[test]
fn output_reparses_to_the_in_memory_result() {
    let dir = tempfile::tempdir().unwrap();
    let (input, output) = (dir.path().join("in.csv"), dir.path().join("out.csv"));
    let p = write_pvalues(&input, 2000, 4);
    let pvals = PValueSet::new(p.clone()).unwrap();
    let mut settings = MethodSettings::new(0.1);
    settings.m_peel = 150;
    for method in [Method::SupBh, Method::AsupBonf, Method::DpBh, Method::Holm] {
        let o = sup(&[
            "--seed", "9", "run", "--input", input.to_str().unwrap(), "--output", output.to_str().unwrap(),
            "--method", method.name(), "--m-peel", "150",
        ]);
        assert!(o.status.success(), "{method}: {}", stderr(&o));
        let expect = run_method(method, &pvals, &settings, &RandomStream::new(9, 0)).unwrap();
        let rows = read_output(&output);
        assert_eq!(rows.iter().map(|r| r.p).collect::<Vec<_>>(), p);
        let rejected: Vec<usize> = (0..rows.len()).filter(|&j| rows[j].rejected).collect();
        assert_eq!(rejected, expect.rejected, "{method}");
        let mut released: Vec<(usize, f64)> = expect.released.clone();
        released.sort_by_key(|x| x.0);
        let parsed: Vec<(usize, f64)> = rows.iter().enumerate().filter_map(|(j, r)| r.noisy.map(|v| (j, v))).collect();
        assert_eq!(parsed, released, "{method}");
        let text = stdout(&o);
        assert_eq!(key(&text, "j_star") as usize, expect.j_star.unwrap());
        if method.is_adaptive() {
            assert_eq!(key(&text, "pi0_hat"), expect.pi0_hat.unwrap());
        }
        if method.is_private() {
            assert_eq!(key(&text, "m_peel") as usize, expect.m_peel.unwrap());
        }
    }
}

#[test]
fn seeds_control_all_randomness() {
    let dir = tempfile::tempdir().unwrap();
    let (input, output) = (dir.path().join("in.csv"), dir.path().join("out.csv"));
    write_pvalues(&input, 1500, 5);
    let run = |seed: &str| {
        let o = sup(&["--seed", seed, "run", "--input", input.to_str().unwrap(), "--output", output.to_str().unwrap(), "--method", "sup-bh", "--m-peel", "80"]);
        assert!(o.status.success());
        (o.stdout, std::fs::read(&output).unwrap())
    };
    assert_eq!(run("3"), run("3"));
    assert_ne!(run("3").1, run("4").1);
}

#[test]
fn data_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let output = dir.path().join("out.csv");
    for (body, needle) in [
        ("", "no p-values"),
        ("id,p\n", "no p-values"),
        ("id,p\na,0.1\nb,1.2\n", "line 3"),
        ("id,p\na,0.1\nb,x\n", "line 3"),
        ("0.1\n0.2\n-0.1\n", "line 3"),
    ] {
        let input = dir.path().join("bad.csv");
        std::fs::write(&input, body).unwrap();
        let o = sup(&["run", "--input", input.to_str().unwrap(), "--output", output.to_str().unwrap(), "--method", "bh"]);
        assert_eq!(o.status.code(), Some(2), "{body:?}");
        assert!(stderr(&o).contains(needle), "{body:?}: {}", stderr(&o));
    }
    let input = dir.path().join("ok.csv");
    std::fs::write(&input, "0.1\n0.2\n").unwrap();
    let o = sup(&["run", "--input", input.to_str().unwrap(), "--output", output.to_str().unwrap(), "--method", "sup-zz"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown method"));
    let o = sup(&["run", "--input", "/nonexistent/p.csv", "--output", output.to_str().unwrap(), "--method", "bh"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(sup(&["run", "--method", "bh"]).status.code(), Some(2));
}

#[test]
fn headerless_input_round_trips() {
    let t = read_pvalue_csv("0.5\n0.01\n".as_bytes()).unwrap();
    assert_eq!(t.p, vec![0.5, 0.01]);
}

#[test]
fn simulate_writes_metrics_and_rejects_bad_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let (scen, output) = (dir.path().join("s.toml"), dir.path().join("m.csv"));
    std::fs::write(&scen, "m = 600\nm1 = 12\nreps = 4\nmethods = [\"bh\", \"sup-bonf\"]\nm_peel = 30\nfull_m = 1200\nfull_m1 = 30\n").unwrap();
    let o = sup(&["simulate", "--scenario", scen.to_str().unwrap(), "--output", output.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&output).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "method,metric,mean,stderr,reps");
    assert_eq!(lines.len(), 1 + 2 * 6);
    assert!(lines.iter().skip(1).all(|l| l.ends_with(",4")));

    let o = sup(&["simulate", "--full", "--scenario", scen.to_str().unwrap(), "--output", output.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(key(&stdout(&o), "m"), 1200.0);
    assert_eq!(std::fs::read_to_string(&output).unwrap().lines().next(), Some(lines[0]));

    std::fs::write(&scen, "m = 600\nm1 = 900\nreps = 0\nmethods = [\"bh\"]\ndependence = \"block\"\nblock_size = 7\n").unwrap();
    let o = sup(&["simulate", "--scenario", scen.to_str().unwrap(), "--output", output.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for needle in ["reps", "m1 = 900", "block_size"] {
        assert!(err.contains(needle), "{err}");
    }
}

#[test]
fn packaged_scenarios_are_valid() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        sup_core::simulate::SimScenario::from_path(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert!(n >= 4);
}

#[test]
fn privacy_conversions() {
    let o = sup(&["privacy", "mu-to-delta", "--mu", "1", "--eps", "1"]);
    assert!((key(&stdout(&o), "delta") - 0.126936).abs() < 1e-4);
    let o = sup(&["privacy", "eps-to-mu", "--eps", "0.5", "--delta", "0.001"]);
    assert!((key(&stdout(&o), "mu") - 0.240637).abs() < 1e-6);
    let o = sup(&["privacy", "calibrate", "--mu", "0.240637", "--gs", "1e-4", "--m-peel", "200"]);
    let text = stdout(&o);
    assert!((key(&text, "sigma0") - 0.0083113).abs() < 1e-7);
    assert!((key(&text, "sigma1") - 0.0166226).abs() < 2e-7);
    let o = sup(&["privacy", "calibrate", "--noise", "laplace", "--eps", "0.5", "--delta", "0.001", "--gs", "1e-4", "--m-peel", "200"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(key(&text, "sigma1"), 2.0 * key(&text, "sigma0"));
    assert_eq!(sup(&["privacy", "eps-to-mu", "--eps", "0", "--delta", "0.001"]).status.code(), Some(2));
    assert_eq!(sup(&["--threads", "0", "privacy", "eps-to-mu", "--eps", "1", "--delta", "0.1"]).status.code(), Some(2));
}
