use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use num_complex::Complex64;
use parabolic_cli::args::{Rect, Resolution};
use parabolic_cli::render::{self, Fate};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_parabolic"))
}

fn map(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../maps")
        .join(name)
}

/// Runs one command with `--out dir`; returns the exit code.
fn run(dir: &Path, args: &[&str]) -> i32 {
    let out = bin()
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("binary runs");
    out.status.code().expect("exit code")
}

fn report(dir: &Path, name: &str) -> Value {
    serde_json::from_slice(&fs::read(dir.join(name)).unwrap()).unwrap()
}

fn c(v: &Value) -> Complex64 {
    Complex64::new(v[0].as_f64().unwrap(), v[1].as_f64().unwrap())
}

#[test]
fn check_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let fam = map("example_family.json");
    assert_eq!(
        run(d, &["check", "--map", fam.to_str().unwrap(), "--x0=-1"]),
        0
    );
    let rep = report(d, "check.json");
    assert_eq!(rep["passed"], true);
    assert_eq!(rep["result"]["x0_certificate"]["passed"], true);
    assert_eq!(rep["map"]["sha256"].as_str().unwrap().len(), 64);

    assert_eq!(
        run(
            d,
            &["check", "--map", map("not_special.json").to_str().unwrap()]
        ),
        1
    );
    let rep = report(d, "check.json");
    assert_eq!(
        rep["result"]["special"]["violations"][0]["coefficient"],
        "a2"
    );

    let bad = d.join("bad.json");
    fs::write(&bad, "{\"kind\": ").unwrap();
    assert_eq!(run(d, &["check", "--map", bad.to_str().unwrap()]), 2);
    assert_eq!(
        run(
            d,
            &["check", "--map", d.join("missing.json").to_str().unwrap()]
        ),
        2
    );
    // A wrong marked point fails the certificate.
    assert_eq!(
        run(d, &["check", "--map", fam.to_str().unwrap(), "--x0=1"]),
        1
    );
}

#[test]
fn param_examples() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(
        run(
            d,
            &[
                "param",
                "--map",
                map("mobius.json").to_str().unwrap(),
                "--t",
                "0.05"
            ]
        ),
        0
    );
    let rep = report(d, "param.json");
    assert!((c(&rep["result"]["phi"]) - Complex64::new(0.05, 0.0)).norm() < 1e-15);

    let cubic = map("cubic.json");
    assert_eq!(
        run(
            d,
            &[
                "param",
                "--map",
                cubic.to_str().unwrap(),
                "--t",
                "0.05",
                "--tol",
                "1e-8"
            ]
        ),
        0
    );
    let rep = report(d, "param.json");
    assert!(rep["result"]["feq_residual"].as_f64().unwrap() < 1e-7);
    assert_eq!(rep["result"]["N"], 0);
    assert_eq!(rep["config"]["tol"], 1e-8);

    assert_eq!(
        run(d, &["param", "--map", cubic.to_str().unwrap(), "--t", "0"]),
        0
    );
    let rep = report(d, "param.json");
    assert_eq!(c(&rep["result"]["phi"]), Complex64::new(0.0, 0.0));
    assert_eq!(rep["result"]["n_used"], 0);

    // Outside the domain the extension takes over.
    assert_eq!(
        run(d, &["param", "--map", cubic.to_str().unwrap(), "--t=-0.5"]),
        0
    );
    let rep = report(d, "param.json");
    assert!(rep["result"]["N"].as_u64().unwrap() > 0);
    assert!(rep["result"]["feq_residual"].as_f64().unwrap() < 1e-7);

    assert_eq!(
        run(
            d,
            &[
                "param",
                "--map",
                cubic.to_str().unwrap(),
                "--t",
                "0.05",
                "--tol",
                "0"
            ]
        ),
        2
    );
    assert_eq!(
        run(
            d,
            &[
                "param",
                "--map",
                map("not_special.json").to_str().unwrap(),
                "--t",
                "0.05"
            ]
        ),
        2
    );
}

#[test]
fn verify_suites() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cubic = map("cubic.json");
    let fam = map("example_family.json");
    assert_eq!(
        run(
            d,
            &[
                "verify",
                "feq",
                "--map",
                cubic.to_str().unwrap(),
                "--samples",
                "100"
            ]
        ),
        0
    );
    assert_eq!(
        report(d, "verify-feq.json")["result"]["samples"]
            .as_array()
            .unwrap()
            .len(),
        100
    );

    assert_eq!(
        run(d, &["verify", "lemmas", "--map", fam.to_str().unwrap()]),
        0
    );
    let rep = report(d, "verify-lemmas.json");
    assert_eq!(rep["result"]["violations"], 0);
    assert_eq!(rep["result"]["orbits"].as_array().unwrap().len(), 16);
    let csv = fs::read_to_string(d.join("verify-lemmas.csv")).unwrap();
    assert!(csv.starts_with("u_re,u_im,i,re_margin,gap,bound,sandwich_ok\n"));
    assert_eq!(csv.lines().count(), 1 + 16 * 201);

    assert_eq!(
        run(
            d,
            &[
                "verify",
                "abel",
                "--map",
                cubic.to_str().unwrap(),
                "--samples",
                "8",
                "--n-max",
                "1000"
            ]
        ),
        0
    );

    assert_eq!(
        run(
            d,
            &[
                "verify",
                "decay",
                "--map",
                map("mobius.json").to_str().unwrap()
            ]
        ),
        0
    );
    let rep = report(d, "verify-decay.json");
    assert!(rep["result"]["status"]
        .as_str()
        .unwrap()
        .starts_with("degenerate: differences ≈ 0"));

    assert_eq!(
        run(d, &["verify", "decay", "--map", cubic.to_str().unwrap()]),
        0
    );
    let csv = fs::read_to_string(d.join("verify-decay.csv")).unwrap();
    assert!(csv.starts_with("n,diff\n"));

    // An impossible threshold is a verification failure with the samples kept.
    assert_eq!(
        run(
            d,
            &[
                "verify",
                "feq",
                "--map",
                cubic.to_str().unwrap(),
                "--samples",
                "4",
                "--tol",
                "1e-30"
            ]
        ),
        1
    );
    assert_eq!(
        report(d, "verify-feq.json")["result"]["samples"]
            .as_array()
            .unwrap()
            .len(),
        4
    );
    assert_eq!(
        run(d, &["verify", "bogus", "--map", cubic.to_str().unwrap()]),
        2
    );
}

#[test]
fn disks_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let fam = map("example_family.json");
    let f = fam.to_str().unwrap();
    // No root in this box.
    assert_eq!(
        run(
            d,
            &[
                "disks",
                "--map",
                f,
                "--box",
                "0.1,0.1,0.2,0.2",
                "--n-max",
                "8"
            ]
        ),
        3
    );
    let rep = report(d, "disks.json");
    assert!(rep["result"]["root_error"]
        .as_str()
        .unwrap()
        .contains("best residual"));

    // A root exists but all tested n are below the nesting threshold.
    assert_eq!(
        run(
            d,
            &[
                "disks",
                "--map",
                f,
                "--box=0,-1,0.2,-0.7",
                "--n-min",
                "4",
                "--n-max",
                "16"
            ]
        ),
        1
    );
    let rep = report(d, "disks.json");
    assert!(rep["result"]["root"]["residual"].as_f64().unwrap() < 1e-8);
    let entries = rep["result"]["nesting"]["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 13);
    assert!(rep["result"]["nesting"]["threshold_n0"].is_null());
    let csv = fs::read_to_string(d.join("disks.csv")).unwrap();
    assert!(csv.starts_with("n,max_image_distance,target_radius,margin\n"));
    assert_eq!(csv.lines().count(), 14);

    assert_eq!(
        run(d, &["disks", "--map", f, "--n-min", "9", "--n-max", "4"]),
        2
    );
    assert_eq!(
        run(d, &["disks", "--map", map("cubic.json").to_str().unwrap()]),
        2
    );
}

#[test]
fn render_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cubic = map("cubic.json");
    assert_eq!(
        run(
            d,
            &["render", "--map", cubic.to_str().unwrap(), "--res", "1x1"]
        ),
        0
    );
    let ppm = fs::read(d.join("render.ppm")).unwrap();
    assert_eq!(
        ppm,
        [
            b"P6\n1 1\n255\n".as_slice(),
            &render::color(Fate::Attracted(0))
        ]
        .concat()
    );
    assert_eq!(report(d, "render.json")["result"]["petals"]["min_count"], 0);

    assert_eq!(
        run(
            d,
            &[
                "render",
                "--map",
                cubic.to_str().unwrap(),
                "--mode",
                "param",
                "--res",
                "64x48",
                "--viewport=-0.5,-0.3,0.5,0.3"
            ]
        ),
        0
    );
    let ppm = fs::read(d.join("render.ppm")).unwrap();
    assert!(ppm.starts_with(b"P6\n64 48\n255\n"));
    assert_eq!(ppm.len(), 13 + 64 * 48 * 3);
    assert!(
        report(d, "render.json")["result"]["curve_drawn"]
            .as_u64()
            .unwrap()
            > 0
    );

    assert_eq!(
        run(
            d,
            &[
                "render",
                "--map",
                cubic.to_str().unwrap(),
                "--viewport",
                "1,1,1,2"
            ]
        ),
        2
    );
}

fn square() -> Rect {
    Rect {
        x0: -1.0,
        y0: -1.0,
        x1: 1.0,
        y1: 1.0,
    }
}

#[test]
fn petal_attracts_negative_axis() {
    let res = Resolution {
        width: 64,
        height: 63,
    };
    let f = |z: Complex64| Some(z + z * z + z * z * z);
    let fates = render::petal_fates(&f, &square(), res);
    // Row 31 is the real axis; columns left of the centre are negative.
    let row = &fates[31 * 64..32 * 64];
    let counts: Vec<u32> = row[..32]
        .iter()
        .map(|f| match f {
            Fate::Attracted(k) => *k,
            other => panic!("negative axis not attracted: {other:?}"),
        })
        .collect();
    assert!(counts.windows(2).all(|w| w[0] >= w[1]), "{counts:?}");
    assert!(row[33..].iter().all(|f| matches!(f, Fate::Escaped(_))));
}

#[test]
fn mobius_petal_matches_closed_form() {
    let res = Resolution {
        width: 40,
        height: 40,
    };
    let f = |z: Complex64| {
        let d = Complex64::new(1.0, 0.0) - z;
        (d.norm() > 0.0).then(|| z / d)
    };
    let fates = render::petal_fates(&f, &square(), res);
    let mut mismatches = 0;
    for (i, fate) in fates.iter().enumerate() {
        let z = render::RasterImage::point(&square(), res, i / 40, i % 40);
        // f^k(z) = 1 / (1/z - k); the first k with |1/z - k| > 1e3 enters.
        let w = 1.0 / z;
        let expected = (0..=render::MAX_COUNT)
            .find(|&k| (w - k as f64).norm() > 1.0 / render::ENTER_RADIUS)
            .map_or(Fate::Undecided, Fate::Attracted);
        if *fate != expected {
            mismatches += 1;
        }
    }
    assert!(
        mismatches <= 2,
        "{mismatches} pixels differ from the closed form"
    );
}
