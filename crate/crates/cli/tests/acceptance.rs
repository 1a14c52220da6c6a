//! Acceptance suite: one PASS / FAIL / SKIP line per criterion.
//!
//! Runs as its own test binary (no libtest harness) so the lines always show.
//! Criterion 8 needs the ETH-80 image sets laid out as `root/<class>/<set>/`
//! and is skipped unless `SPDKIT_ETH80_ROOT` points at them.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use spdkit::classifiers::{train, HyperParams, LabeledDescriptors, Variant};
use spdkit::descriptors::{cspd_descriptor, describe, descriptor_dim, partition, BlockGrid};
use spdkit::harness::{strip_timing, ReportFormat};
use spdkit::kernels::{gram_matrix, median_beta, KernelSpec};
use spdkit::metrics::{airm_distance, lem_distance};
use spdkit::nalgebra::{DMatrix, DVector, SymmetricEigen};
use spdkit::random::{random_invertible, random_spd};
use spdkit::{DescriptorConfig, ImageSet, SpdMatrix, SymMatrix};

// Pinned tolerances and budgets.
const MERCER_REL_TOL: f64 = 1e-8;
const MERCER_BUDGET: Duration = Duration::from_secs(30);
const SYMMETRY_TOL: f64 = 1e-10;
const INDISCERNIBLE_TOL: f64 = 1e-8;
const TRIANGLE_SLACK: f64 = 1e-10;
const CONGRUENCE_REL_TOL: f64 = 1e-8;
const METRIC_BUDGET: Duration = Duration::from_secs(30);
const ORACLE_TOL: f64 = 1e-10;
const RESIDUAL_TOL: f64 = 1e-8;
const SEPARABILITY_BUDGET: Duration = Duration::from_secs(300);
const ETH80_REFERENCE_MEAN: f64 = 87.52;
const ETH80_WINDOW: f64 = 8.0;

type Outcome = Result<String, String>;

enum Status {
    Pass(String),
    Fail(String),
    Skip(String),
    Advisory(String),
}

fn rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn c1_mercer() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    let mut worst: f64 = 0.0;
    for trial in 0..200 {
        let m = r.random_range(1..=20);
        let dim = r.random_range(1..=8);
        let pts: Vec<SpdMatrix> = (0..m).map(|_| random_spd(&mut r, dim, 100.0)).collect();
        let ids: Vec<String> = (0..m).map(|i| format!("p{i}")).collect();
        let beta = if m > 1 { median_beta(&pts).map_err(e2s)? } else { 1.0 };
        let kernels = [
            KernelSpec::LogeLinear,
            KernelSpec::default_poly(),
            KernelSpec::exp(vec![0.05]).map_err(e2s)?,
            KernelSpec::gauss(beta).map_err(e2s)?,
        ];
        for k in &kernels {
            let g = gram_matrix(k, &pts, &ids).map_err(|e| format!("trial {trial} {k}: {e}"))?;
            // Independent spectrum, not the certifier's.
            let eig = SymmetricEigen::new(g.entries().clone()).eigenvalues;
            let max_abs = eig.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let min = eig.min();
            if max_abs > 0.0 {
                worst = worst.min(min / max_abs);
            }
            ensure(min >= -MERCER_REL_TOL * max_abs, || {
                format!("trial {trial} {k}: min eig {min:e} vs max |eig| {max_abs:e}")
            })?;
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < MERCER_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "800 Grams PSD, worst min/max eig ratio {worst:.1e}, {:.1}s",
        elapsed.as_secs_f64()
    ))
}

fn c2_metric_axioms() -> Outcome {
    let start = Instant::now();
    let mut r = rng(2);
    let mut worst_sym: f64 = 0.0;
    for i in 0..500 {
        let dim = r.random_range(1..=8);
        let x = random_spd(&mut r, dim, 1e3);
        let y = random_spd(&mut r, dim, 1e3);
        let z = random_spd(&mut r, dim, 1e3);
        for (name, d) in [
            ("airm", airm_distance as fn(&SpdMatrix, &SpdMatrix) -> spdkit::Result<f64>),
            ("lem", lem_distance),
        ] {
            let (dxy, dyx) = (d(&x, &y).map_err(e2s)?, d(&y, &x).map_err(e2s)?);
            let asym = (dxy - dyx).abs() / dxy.max(1.0);
            worst_sym = worst_sym.max(asym);
            ensure(asym <= SYMMETRY_TOL, || format!("{name} asymmetric on pair {i}: {dxy} vs {dyx}"))?;
            let dxx = d(&x, &x).map_err(e2s)?;
            ensure(dxx <= INDISCERNIBLE_TOL, || format!("{name} d(x,x) = {dxx:e} on pair {i}"))?;
            ensure(dxy > INDISCERNIBLE_TOL, || format!("{name} d(x,y) = {dxy:e} for distinct points"))?;
        }
        let (xy, yz, xz) = (
            lem_distance(&x, &y).map_err(e2s)?,
            lem_distance(&y, &z).map_err(e2s)?,
            lem_distance(&x, &z).map_err(e2s)?,
        );
        ensure(xz <= xy + yz + TRIANGLE_SLACK, || {
            format!("lem triangle violated on triple {i}: {xz} > {xy} + {yz}")
        })?;
    }
    let mut worst_cong: f64 = 0.0;
    for i in 0..100 {
        let dim = r.random_range(1..=8);
        let x = random_spd(&mut r, dim, 100.0);
        let y = random_spd(&mut r, dim, 100.0);
        let a = random_invertible(&mut r, dim, 3.0);
        let congr = |p: &SpdMatrix| -> spdkit::Result<SpdMatrix> {
            SpdMatrix::new(SymMatrix::from_matrix(&a * p.as_matrix() * a.transpose())?)
        };
        let before = airm_distance(&x, &y).map_err(e2s)?;
        let after = airm_distance(&congr(&x).map_err(e2s)?, &congr(&y).map_err(e2s)?).map_err(e2s)?;
        let rel = (before - after).abs() / before.max(1.0);
        worst_cong = worst_cong.max(rel);
        ensure(rel <= CONGRUENCE_REL_TOL, || format!("congruence {i}: {before} vs {after}"))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < METRIC_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "500 pairs/triples, 100 congruences; worst asymmetry {worst_sym:.1e}, worst congruence drift {worst_cong:.1e}"
    ))
}

/// `log` of a symmetric positive definite matrix through nalgebra directly.
/// Textbook cyclic Jacobi; returns eigenvalues and eigenvectors as columns.
/// Slow but accurate for clustered spectra, and independent of the library solver.
fn jacobi_eig(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let mut a = m.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let rotate = |x: &mut DMatrix<f64>, cols: bool, p: usize, q: usize, c: f64, s: f64| {
        for k in 0..n {
            let (ip, iq) = if cols { ((k, p), (k, q)) } else { ((p, k), (q, k)) };
            let (xp, xq) = (x[ip], x[iq]);
            x[ip] = c * xp - s * xq;
            x[iq] = s * xp + c * xq;
        }
    };
    for _ in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() <= 1e-3 * f64::EPSILON * (a[(p, p)].abs() + a[(q, q)].abs()) {
                    continue;
                }
                rotated = true;
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + theta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = t * c;
                rotate(&mut a, true, p, q, c, s);
                rotate(&mut a, false, p, q, c, s);
                rotate(&mut v, true, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    ((0..n).map(|i| a[(i, i)]).collect(), v)
}

fn oracle_log(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (values, v) = jacobi_eig(m);
    let l = DVector::from_iterator(values.len(), values.iter().map(|x| x.ln()));
    &v * DMatrix::from_diagonal(&l) * v.transpose()
}

fn oracle_regularize(c: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let n = c.nrows();
    c + DMatrix::identity(n, n) * (lambda * c.trace())
}

/// Two-pass covariance of pixels `idx` over the images of `set`.
fn oracle_cov(images: &[Vec<f64>], idx: &[usize]) -> DMatrix<f64> {
    let n = images.len() as f64;
    let mean: Vec<f64> = idx.iter().map(|&p| images.iter().map(|im| im[p]).sum::<f64>() / n).collect();
    DMatrix::from_fn(idx.len(), idx.len(), |a, b| {
        images
            .iter()
            .map(|im| (im[idx[a]] - mean[a]) * (im[idx[b]] - mean[b]))
            .sum::<f64>()
            / n
    })
}

fn c3_feature_oracle() -> Outcome {
    let mut r = rng(3);
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let d = r.random_range(2..=3);
        let (bh, bw) = (r.random_range(1..=2), r.random_range(1..=2));
        let (h, w) = (d * bh, d * bw);
        let n = r.random_range(2..=8);
        let images: Vec<Vec<f64>> = (0..n).map(|_| (0..h * w).map(|_| r.random::<f64>()).collect()).collect();
        let set = ImageSet::new("s", None, h, w, &images).map_err(e2s)?;
        let cfg = DescriptorConfig::with_grid(d);
        let got = cspd_descriptor(&set, &cfg).map_err(e2s)?;

        let mut features: Vec<DVector<f64>> = Vec::new();
        for row in 0..d {
            for col in 0..d {
                let idx: Vec<usize> = (0..bh * bw)
                    .map(|k| (row * bh + k / bw) * w + col * bw + k % bw)
                    .collect();
                let log = oracle_log(&oracle_regularize(&oracle_cov(&images, &idx), cfg.lambda));
                features.push(DVector::from_column_slice(log.as_slice()));
            }
        }
        let m = features.len();
        let gram = DMatrix::from_fn(m, m, |a, b| features[a].dot(&features[b]));
        let expect = oracle_regularize(&gram, cfg.lambda);
        let diff = (got.as_matrix() - &expect).abs().max();
        worst = worst.max(diff);
        ensure(diff <= ORACLE_TOL, || format!("cspd instance {i}: max-abs diff {diff:e}"))?;

        // loge_linear Gram over random points against Lᵀ L.
        let k = r.random_range(1..=6);
        let dim = r.random_range(1..=4);
        let pts: Vec<SpdMatrix> = (0..k).map(|_| random_spd(&mut r, dim, 50.0)).collect();
        let ids: Vec<String> = (0..k).map(|j| format!("p{j}")).collect();
        let g = gram_matrix(&KernelSpec::LogeLinear, &pts, &ids).map_err(e2s)?;
        let l = DMatrix::from_fn(dim * dim, k, |row, col| oracle_log(pts[col].as_matrix()).as_slice()[row]);
        let diff = (g.entries() - l.transpose() * &l).abs().max();
        worst = worst.max(diff);
        ensure(diff <= ORACLE_TOL, || format!("gram instance {i}: max-abs diff {diff:e}"))?;
    }
    Ok(format!("50 CSPD + 50 Gram instances, worst max-abs diff {worst:.1e}"))
}

fn c4_dimension_ladder() -> Outcome {
    let mut r = rng(4);
    let images: Vec<Vec<f64>> = (0..10).map(|_| (0..576).map(|_| r.random::<f64>()).collect()).collect();
    let set = ImageSet::new("ladder", None, 24, 24, &images).map_err(e2s)?;
    let mut got = Vec::new();
    for d in [2usize, 3, 4, 6, 8, 12] {
        let blocks = partition(&set, &BlockGrid::new(d, 24, 24).map_err(e2s)?).map_err(e2s)?;
        ensure(blocks.len() == d * d, || format!("{} blocks for d={d}", blocks.len()))?;
        let dim = describe(&set, &DescriptorConfig::with_grid(d)).map_err(e2s)?.dim();
        ensure(dim == descriptor_dim(24, 24, Some(d)), || format!("d={d}: dim {dim}"))?;
        got.push(dim);
    }
    ensure(got == [4, 9, 16, 36, 64, 144], || format!("ladder {got:?}"))?;
    let base = describe(&set, &DescriptorConfig::default()).map_err(e2s)?.dim();
    ensure(base == 576, || format!("baseline dim {base}"))?;
    Ok(format!("CSPD dims {got:?}, SPD dim {base}"))
}

fn brute_nn(train: &LabeledDescriptors, q: &SpdMatrix, d: fn(&SpdMatrix, &SpdMatrix) -> spdkit::Result<f64>) -> String {
    let mut best = (f64::INFINITY, 0);
    for (i, p) in train.points.iter().enumerate() {
        let v = d(p, q).unwrap();
        if v < best.0 {
            best = (v, i);
        }
    }
    train.labels[best.1].clone()
}

fn c5_classifier_oracles() -> Outcome {
    let mut r = rng(5);
    let mut queries_checked = 0;
    for i in 0..100 {
        let n = r.random_range(2..=30);
        let dim = r.random_range(1..=6);
        let classes = r.random_range(2..=4.min(n));
        let pts: Vec<SpdMatrix> = (0..n).map(|_| random_spd(&mut r, dim, 50.0)).collect();
        let labels: Vec<String> = (0..n).map(|j| format!("c{}", j % classes)).collect();
        let ids: Vec<String> = (0..n).map(|j| format!("p{j}")).collect();
        let data = LabeledDescriptors::new(pts, labels, ids).map_err(e2s)?;
        let airm = train(Variant::NnAirm, &data, None, &HyperParams::default()).map_err(e2s)?;
        let lem = train(Variant::NnLoged, &data, None, &HyperParams::default()).map_err(e2s)?;
        for _ in 0..5 {
            let q = random_spd(&mut r, dim, 50.0);
            ensure(airm.predict(&q).map_err(e2s)? == brute_nn(&data, &q, airm_distance), || {
                format!("nn-airm disagrees on dataset {i}")
            })?;
            ensure(lem.predict(&q).map_err(e2s)? == brute_nn(&data, &q, lem_distance), || {
                format!("nn-loged disagrees on dataset {i}")
            })?;
            queries_checked += 1;
        }
    }

    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let n = r.random_range(2..=10);
        let dim = r.random_range(1..=4);
        let pts: Vec<SpdMatrix> = (0..n).map(|_| random_spd(&mut r, dim, 50.0)).collect();
        let labels: Vec<String> = (0..n).map(|j| format!("c{}", j % 2)).collect();
        let ids: Vec<String> = (0..n).map(|j| format!("p{j}")).collect();
        let data = LabeledDescriptors::new(pts.clone(), labels, ids).map_err(e2s)?;
        let model = train(Variant::LogeKsr, &data, Some(&KernelSpec::LogeLinear), &HyperParams::default())
            .map_err(e2s)?;
        let q = random_spd(&mut r, dim, 50.0);
        let code = model.sparse_code(&q).map_err(e2s)?;
        let mut resid = oracle_log(q.as_matrix());
        for (&j, &a) in code.support.iter().zip(&code.coeffs) {
            resid -= oracle_log(pts[j].as_matrix()) * a;
        }
        let explicit = resid.norm_squared();
        let got = model.rkhs_residual(&q, &code.support, &code.coeffs).map_err(e2s)?;
        let diff = (got - explicit).abs();
        worst = worst.max(diff);
        ensure(diff <= RESIDUAL_TOL, || format!("residual instance {i}: {got} vs {explicit}"))?;
    }
    Ok(format!(
        "NN agrees with exhaustive search on 100 datasets ({queries_checked} queries); worst KSR residual diff {worst:.1e}"
    ))
}

fn spdkit(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_spdkit"))
        .args(args)
        .output()
        .map_err(e2s)?;
    if !out.status.success() {
        return Err(format!(
            "spdkit {} failed: {}",
            args.first().unwrap_or(&""),
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

/// `(descriptor, classifier, mean, folds, classify_ms)`.
type ReportRow = (String, String, String, Vec<f64>, Option<f64>);

/// Data rows of a CSV report.
fn parse_report(text: &str) -> Vec<ReportRow> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("descriptor,"))
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let folds = f[5].split(';').filter_map(|v| v.parse().ok()).collect();
            (f[0].to_string(), f[2].to_string(), f[3].to_string(), folds, f[7].parse().ok())
        })
        .collect()
}

const BENCH_FLAGS: [&str; 14] = [
    "--grids",
    "0,6",
    "--classifiers",
    "nn-airm,nn-loged,cdl,logeksr",
    "--train-per-class",
    "2",
    "--folds",
    "5",
    "--seed",
    "11",
    "--format",
    "csv",
    "--size",
    "24",
];

fn bench(root: &Path, out: &Path) -> Result<String, String> {
    let mut args = vec!["bench", "--root", root.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(&BENCH_FLAGS);
    spdkit(&args)?;
    fs::read_to_string(out.join("report.csv")).map_err(e2s)
}

struct SynthRun {
    root: tempfile::TempDir,
    report: String,
}

fn c6_separability(run: &mut Option<SynthRun>) -> Outcome {
    let start = Instant::now();
    let root = tempfile::tempdir().map_err(e2s)?;
    let data = root.path().join("data");
    spdkit(&[
        "synth",
        "--classes",
        "3",
        "--sets-per-class",
        "5",
        "--images-per-set",
        "20",
        "--size",
        "24",
        "--seed",
        "2024",
        "--out",
        data.to_str().unwrap(),
    ])?;
    let report = bench(&data, &root.path().join("run1"))?;
    let elapsed = start.elapsed();
    let rows = parse_report(&report);
    ensure(rows.len() == 8, || format!("expected 8 report rows, got {}", rows.len()))?;
    for (desc, clf, mean, folds, _) in &rows {
        ensure(folds.len() == 5 && folds.iter().all(|&a| a == 100.0), || {
            format!("{desc} / {clf}: mean {mean}, folds {folds:?}")
        })?;
    }
    ensure(elapsed < SEPARABILITY_BUDGET, || format!("took {elapsed:?}"))?;
    *run = Some(SynthRun { root, report });
    Ok(format!(
        "4 classifiers x {{SPD^OR, CSPD^{{6x6}}}} at 100% on all 5 folds, {:.0}s",
        elapsed.as_secs_f64()
    ))
}

fn c7_timing(run: &Option<SynthRun>) -> Outcome {
    let run = run.as_ref().ok_or("needs the criterion 6 run")?;
    let rows = parse_report(&run.report);
    let ms = |desc: &str| {
        rows.iter()
            .find(|r| r.0 == desc && r.1 == "nn_airm")
            .and_then(|r| r.4)
            .ok_or_else(|| format!("no nn_airm timing for {desc}"))
    };
    let (spd, cspd) = (ms("SPD^OR")?, ms("CSPD^{6x6}")?);
    ensure(cspd < spd, || format!("CSPD^{{6x6}} {cspd} ms is not below SPD^OR {spd} ms"))?;
    Ok(format!("NN-AIRM per fold: CSPD^{{6x6}} {cspd:.1} ms < SPD^OR {spd:.1} ms"))
}

fn c8_eth80() -> Status {
    let Ok(root) = std::env::var("SPDKIT_ETH80_ROOT") else {
        return Status::Skip("set SPDKIT_ETH80_ROOT to an ETH-80 root/<class>/<set>/ tree to run".into());
    };
    let out = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return Status::Fail(e.to_string()),
    };
    let args = [
        "bench",
        "--root",
        &root,
        "--grids",
        "6",
        "--classifiers",
        "nn-loged",
        "--train-per-class",
        "2",
        "--folds",
        "10",
        "--seed",
        "0",
        "--format",
        "csv",
        "--size",
        "24",
        "--out",
        out.path().to_str().unwrap(),
    ];
    let report = match spdkit(&args) {
        Ok(r) => r,
        Err(e) => return Status::Fail(e),
    };
    let mean = parse_report(&report)
        .first()
        .and_then(|r| r.2.parse::<f64>().ok());
    match mean {
        Some(m) if (m - ETH80_REFERENCE_MEAN).abs() <= ETH80_WINDOW => Status::Pass(format!(
            "NN-LogED on CSPD^{{6x6}}: {m:.2}% (reference {ETH80_REFERENCE_MEAN} ± {ETH80_WINDOW})"
        )),
        Some(m) => Status::Advisory(format!(
            "NN-LogED on CSPD^{{6x6}}: {m:.2}% outside {ETH80_REFERENCE_MEAN} ± {ETH80_WINDOW}; investigate"
        )),
        None => Status::Fail("could not read the NN-LogED mean".into()),
    }
}

fn c9_reproducible(run: &Option<SynthRun>) -> Outcome {
    let run = run.as_ref().ok_or("needs the criterion 6 run")?;
    let data = run.root.path().join("data");
    let second = bench(&data, &run.root.path().join("run2"))?;
    let (a, b) = (
        strip_timing(&run.report, ReportFormat::Csv),
        strip_timing(&second, ReportFormat::Csv),
    );
    ensure(a == b, || "reports differ outside the timing columns".into())?;
    let splits = |d: &str| fs::read(run.root.path().join(d).join("splits.csv")).map_err(e2s);
    ensure(splits("run1")? == splits("run2")?, || "splits.csv differs".into())?;
    Ok(format!("{} bytes identical after stripping timing; splits.csv identical", a.len()))
}

fn status(o: Outcome) -> Status {
    match o {
        Ok(m) => Status::Pass(m),
        Err(m) => Status::Fail(m),
    }
}

fn main() -> ExitCode {
    // libtest flags such as --nocapture or a name filter are accepted and ignored.
    let mut failed = 0;
    let mut report = |n: u32, name: &str, s: Status| {
        let (tag, msg) = match s {
            Status::Pass(m) => ("PASS", m),
            Status::Fail(m) => {
                failed += 1;
                ("FAIL", m)
            }
            Status::Skip(m) => ("SKIP", m),
            Status::Advisory(m) => ("MISS", m),
        };
        println!("{tag} criterion {n} ({name}): {msg}");
    };
    report(1, "Mercer / PSD", status(c1_mercer()));
    report(2, "metric axioms", status(c2_metric_axioms()));
    report(3, "explicit-feature oracle", status(c3_feature_oracle()));
    report(4, "dimensionality ladder", status(c4_dimension_ladder()));
    report(5, "classifier oracles", status(c5_classifier_oracles()));
    let mut run = None;
    report(6, "synthetic separability", status(c6_separability(&mut run)));
    report(7, "timing direction", status(c7_timing(&run)));
    report(8, "ETH-80 reference", c8_eth80());
    report(9, "reproducibility", status(c9_reproducible(&run)));
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
