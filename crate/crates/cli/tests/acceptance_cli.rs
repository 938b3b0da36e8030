//! Acceptance suite for the CLI-facing criteria: the directional curve
//! reproduction and the desk-scale certificate table.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dpcert"))
}

fn workspace_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn pass(name: &str) {
    println!("acceptance: {name} ... PASS");
}

#[derive(Debug)]
struct FigureRow {
    n: f64,
    ratio: f64,
    kappa_optimized: f64,
    kappa_explicit: f64,
    kappa_optimized_over_n: f64,
    log_term_over_n: f64,
    delta: f64,
}

fn parse_figure_csv(text: &str) -> Vec<FigureRow> {
    let mut lines = text.trim_end().lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let (c_n, c_ratio, c_opt, c_exp, c_opt_n, c_log, c_delta) = (
        col("n"),
        col("ratio"),
        col("kappa_optimized"),
        col("kappa_explicit"),
        col("kappa_optimized_over_n"),
        col("log_term_over_n"),
        col("delta"),
    );
    lines
        .map(|line| {
            let f: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
            FigureRow {
                n: f[c_n],
                ratio: f[c_ratio],
                kappa_optimized: f[c_opt],
                kappa_explicit: f[c_exp],
                kappa_optimized_over_n: f[c_opt_n],
                log_term_over_n: f[c_log],
                delta: f[c_delta],
            }
        })
        .collect()
}

#[test]
fn figure_directional_reproduction() {
    let out = bin()
        .args([
            "figure-data",
            "--n-grid",
            "1000,4000,16000,64000",
            "--zeta-grid",
            "0.005,0.01,0.02,0.04",
            "--delta-grid",
            "0.025,0.05",
            "--T",
            "12",
            "--m",
            "80",
            "--sigma",
            "1",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let rows = parse_figure_csv(&String::from_utf8_lossy(&out.stdout));
    assert_eq!(rows.len(), 4 * 4 * 2);

    for row in &rows {
        // tighter-than-explicit at every grid point
        assert!(
            row.kappa_optimized < row.kappa_explicit,
            "acceptance: figure_directional_reproduction ... FAIL (kappa_opt {} >= kappa_explicit {} at ratio {})",
            row.kappa_optimized,
            row.kappa_explicit,
            row.ratio
        );
        assert!(row.log_term_over_n > 0.0);
    }

    // kappa/n strictly decreasing in n at a fixed recipe
    for ratio_bits in [0.005f64, 0.01, 0.02, 0.04] {
        for delta in [0.025f64, 0.05] {
            let mut curve: Vec<&FigureRow> = rows
                .iter()
                .filter(|r| (r.ratio - ratio_bits).abs() < 1e-12 && (r.delta - delta).abs() < 1e-12)
                .collect();
            curve.sort_by(|a, b| a.n.total_cmp(&b.n));
            for pair in curve.windows(2) {
                assert!(
                    pair[1].kappa_optimized_over_n < pair[0].kappa_optimized_over_n,
                    "acceptance: figure_directional_reproduction ... FAIL (kappa/n not decreasing in n)"
                );
            }
        }
    }

    // kappa strictly increasing in the signal-to-noise ratio zeta/sigma
    for n in [1000f64, 4000.0, 16000.0, 64000.0] {
        for delta in [0.025f64, 0.05] {
            let mut curve: Vec<&FigureRow> = rows
                .iter()
                .filter(|r| (r.n - n).abs() < 1e-9 && (r.delta - delta).abs() < 1e-12)
                .collect();
            curve.sort_by(|a, b| a.ratio.total_cmp(&b.ratio));
            for pair in curve.windows(2) {
                assert!(
                    pair[1].kappa_optimized > pair[0].kappa_optimized,
                    "acceptance: figure_directional_reproduction ... FAIL (kappa not increasing in zeta/sigma)"
                );
            }
        }
    }
    pass("figure_directional_reproduction");
}

#[test]
fn certify_table_analogue() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("report.json");
    let res = bin()
        .args(["certify", "--config"])
        .arg(workspace_file("configs/certify_demo.json"))
        .arg("--out")
        .arg(&out_path)
        .output()
        .unwrap();
    assert_eq!(
        res.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&res.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();

    // paper's confidence split accepted and preserved
    let split = &report["config"]["pipeline"]["split"];
    assert_eq!(split["delta"].as_f64().unwrap(), 0.05);
    assert_eq!(split["delta_prime"].as_f64().unwrap(), 0.0125);
    assert_eq!(split["beta"].as_f64().unwrap(), 0.025);

    // every kappa in the sweep was computed at the beta/K1-adjusted budget
    let k1 = report["outputs"]["k1"].as_f64().unwrap();
    for cell in report["outputs"]["cells"].as_array().unwrap() {
        assert!(cell["error"].is_null() || cell["error"].as_str().is_none());
        let kappa_beta = cell["kappa"]["beta"].as_f64().unwrap();
        assert!(
            (kappa_beta - 0.025 / k1).abs() < 1e-15,
            "kappa budget {kappa_beta} != beta/K1 {}",
            0.025 / k1
        );
    }

    // table schema: prior | erisk(prior) | B(prior) | erisk(post) | kappa | KL | B(post)
    let table = report["outputs"]["table"].as_array().unwrap();
    assert_eq!(table.len(), 2);
    for row in table {
        for key in [
            "prior",
            "erisk_prior",
            "bound_prior",
            "erisk_posterior",
            "kappa",
            "kl",
            "bound_posterior",
        ] {
            assert!(!row[key].is_null(), "missing table column {key}");
        }
    }
    let bound_of = |kind: &str| {
        table
            .iter()
            .find(|r| r["prior"] == kind)
            .unwrap_or_else(|| panic!("missing {kind} row"))["bound_posterior"]
            .as_f64()
            .unwrap()
    };
    let b_indep = bound_of("data-independent");
    let b_dpsgd = bound_of("dp-sgd");

    // non-vacuous certificates, and the DP-SGD prior at least as good
    assert!(
        b_indep < 1.0 && b_dpsgd < 1.0,
        "acceptance: certify_table_analogue ... FAIL (vacuous: indep {b_indep}, dpsgd {b_dpsgd})"
    );
    assert!(
        b_dpsgd <= b_indep,
        "acceptance: certify_table_analogue ... FAIL (dp-sgd bound {b_dpsgd} worse than data-independent {b_indep})"
    );

    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 600.0, "pipeline took {elapsed:.0} s, budget 600 s");
    println!(
        "acceptance: certify_table_analogue ... PASS (B dp-sgd {b_dpsgd:.4} <= B data-indep {b_indep:.4}, {elapsed:.0} s)"
    );
}
