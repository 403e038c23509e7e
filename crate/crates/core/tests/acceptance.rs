//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL` line.
//!
//! Run with `cargo test -p trace-pursuit --test acceptance -- --nocapture`
//! to see the report lines.

mod common;

use std::time::{Duration, Instant};

use common::*;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use trace_pursuit::{
    bic_score, default_k_max, evaluate, ftp_run, run_experiment, slice_response, stp_run,
    trace_diff, trace_kernel, trace_test, weighted_chisq_upper_quantile, Algorithm, CenteredSample,
    Dataset, Generator, Method, Model, SimDesign, StpConfig, WorkingSet,
};

fn report(id: u32, pass: bool, detail: &str, elapsed: Duration, budget: Duration) {
    let ok = pass && elapsed <= budget;
    println!(
        "criterion {id}: {} ({detail}; {:.1}s of {:.0}s)",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs_f64()
    );
    assert!(pass, "criterion {id}: {detail}");
    assert!(elapsed <= budget, "criterion {id}: over time budget");
}

#[test]
fn criterion_1_trace_identity_oracle() {
    let start = Instant::now();
    let mut r = rng(101);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = r.random_range(30..=100);
        let p = r.random_range(2..=8);
        let size = r.random_range(0..=4usize).min(p - 1);
        let h = if r.random_bool(0.5) { 2 } else { 4 };
        let uniform = r.random_bool(0.5);
        let c = random_sample(&mut r, n, p, h, uniform);
        let (f, j) = random_set(&mut r, p, size);
        let ws = WorkingSet::new(&c, &f).unwrap();
        let res = ws.residualize(j).unwrap();
        let aux = ws.auxiliary(&res);
        let mut fj = f.clone();
        fj.push(j);
        for method in Method::ALL {
            let big = trace_kernel(method, &c.moments(&fj).unwrap()).unwrap();
            let small = trace_kernel(method, &c.moments(&f).unwrap()).unwrap();
            let err = (trace_diff(method, &res, &aux) - (big - small)).abs() / big.max(1.0);
            worst = worst.max(err);
        }
    }
    report(
        1,
        worst <= 1e-8,
        &format!("worst scaled error {worst:.2e} over 200 instances x 3 methods"),
        start.elapsed(),
        Duration::from_secs(30),
    );
}

#[test]
fn criterion_2_explicit_matrix_oracle() {
    let start = Instant::now();
    let mut r = rng(102);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = r.random_range(30..=100);
        let p = r.random_range(1..=8);
        let size = r.random_range(1..=p.min(5));
        let h = if r.random_bool(0.5) { 2 } else { 4 };
        let uniform = r.random_bool(0.5);
        let c = random_sample(&mut r, n, p, h, uniform);
        let (f, _) = random_set_any(&mut r, p, size);
        let m = c.moments(&f).unwrap();
        let nm = naive_moments(c.x(), c.slices().membership(), h, &f);
        for method in Method::ALL {
            let got = trace_kernel(method, &m).unwrap();
            let want = oracle_trace(method, &nm);
            worst = worst.max((got - want).abs() / want.abs().max(1.0));
        }
    }
    report(
        2,
        worst <= 1e-9,
        &format!("worst relative error {worst:.2e} over 100 instances x 3 methods"),
        start.elapsed(),
        Duration::from_secs(30),
    );
}

fn random_set_any(r: &mut rand_chacha::ChaCha8Rng, p: usize, size: usize) -> (Vec<usize>, ()) {
    let mut idx: Vec<usize> = (0..p).collect();
    for i in (1..p).rev() {
        let k = r.random_range(0..=i);
        idx.swap(i, k);
    }
    (idx[..size].to_vec(), ())
}

/// Normal predictors; the response depends on the first `|F|` predictors
/// (or on an unrelated one when `F = ∅`), and the candidate is independent.
fn null_instance(
    r: &mut rand_chacha::ChaCha8Rng,
    n: usize,
    set_size: usize,
) -> (CenteredSample, Vec<usize>, usize) {
    let p = 4;
    let x = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(r));
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let e: f64 = StandardNormal.sample(r);
            let (a, b) = if set_size == 0 {
                (x[(i, 3)], x[(i, 1)])
            } else {
                (x[(i, 0)], x[(i, 1)])
            };
            a + 0.5 * b * b + 0.5 * e
        })
        .collect();
    let d = Dataset::new(x, y).unwrap();
    let s = slice_response(d.y(), 4, false).unwrap();
    let f: Vec<usize> = (0..set_size).collect();
    (CenteredSample::new(&d, s).unwrap(), f, 2)
}

#[test]
fn criterion_3_null_calibration() {
    let start = Instant::now();
    let reps = 500;
    let mut lines = Vec::new();
    let mut pass = true;
    for set_size in [0usize, 2] {
        let mut rejections = [0usize; 3];
        let mut r = rng(103 + set_size as u64);
        for _ in 0..reps {
            let (c, f, j) = null_instance(&mut r, 300, set_size);
            for (k, method) in Method::ALL.into_iter().enumerate() {
                if trace_test(method, &c, &f, j, 0.05).unwrap().reject {
                    rejections[k] += 1;
                }
            }
        }
        for (k, method) in Method::ALL.into_iter().enumerate() {
            let rate = rejections[k] as f64 / reps as f64;
            let (lo, hi) = if method == Method::Sir {
                (0.02, 0.09)
            } else {
                (0.01, 0.12)
            };
            pass &= rate >= lo && rate <= hi;
            lines.push(format!("{method}|F|={set_size}: {rate:.3}"));
        }
    }
    report(
        3,
        pass,
        &lines.join(", "),
        start.elapsed(),
        Duration::from_secs(300),
    );
}

#[test]
fn criterion_4_quantile_approximation() {
    let start = Instant::now();
    let mut r = rng(104);
    let draws = 1_000_000;
    let mut worst: f64 = 0.0;
    let mut samples = vec![0.0; draws];
    for _ in 0..20 {
        let dim = r.random_range(1..=20);
        let w: Vec<f64> = (0..dim).map(|_| r.random_range(0.01..1.0)).collect();
        for s in samples.iter_mut() {
            *s = w
                .iter()
                .map(|wk| {
                    let g: f64 = StandardNormal.sample(&mut r);
                    wk * g * g
                })
                .sum();
        }
        samples.sort_unstable_by(f64::total_cmp);
        for alpha in [0.01, 0.05, 0.1] {
            let mc = samples[((1.0 - alpha) * draws as f64) as usize];
            let q = weighted_chisq_upper_quantile(&w, alpha).unwrap();
            worst = worst.max((q - mc).abs() / mc);
        }
    }
    report(
        4,
        worst <= 0.08,
        &format!(
            "worst relative error {:.2}% over 20 weight vectors x 3 levels",
            100.0 * worst
        ),
        start.elapsed(),
        Duration::from_secs(120),
    );
}

fn bench(
    model: Model,
    p: usize,
    algorithm: Algorithm,
    method: Method,
    reps: usize,
    seed: u64,
) -> trace_pursuit::SelectionMetrics {
    let design = SimDesign::new(model, 300, p).with_seed(seed);
    let out = run_experiment(&design, algorithm, method, reps, None).unwrap();
    assert_eq!(
        out.failures, 0,
        "{model:?} {algorithm}-{method}: failed replications"
    );
    out.metrics
}

#[test]
fn criterion_5_model_one() {
    let start = Instant::now();
    let sir = bench(Model::I, 10, Algorithm::Htp, Method::Sir, 100, 501);
    let dr = bench(Model::I, 10, Algorithm::Htp, Method::Dr, 100, 502);
    let pass = sir.cf >= 95 && (3.95..=4.05).contains(&sir.ms) && dr.cf >= 90;
    report(
        5,
        pass,
        &format!(
            "HTP-SIR CF={} MS={:.2}; HTP-DR CF={}",
            sir.cf, sir.ms, dr.cf
        ),
        start.elapsed(),
        Duration::from_secs(600),
    );
}

#[test]
fn criterion_6_model_two() {
    let start = Instant::now();
    let save = bench(Model::II, 10, Algorithm::Htp, Method::Save, 100, 601);
    let sir = bench(Model::II, 10, Algorithm::Htp, Method::Sir, 100, 602);
    let pass = save.cf >= 85 && sir.ms <= 1.0 && sir.uf == 100;
    report(
        6,
        pass,
        &format!(
            "HTP-SAVE CF={}; HTP-SIR UF={} MS={:.2}",
            save.cf, sir.uf, sir.ms
        ),
        start.elapsed(),
        Duration::from_secs(600),
    );
}

#[test]
fn criterion_7_model_three() {
    let start = Instant::now();
    let dr = bench(Model::III, 10, Algorithm::Htp, Method::Dr, 100, 701);
    let sir = bench(Model::III, 10, Algorithm::Htp, Method::Sir, 100, 702);
    let pass = dr.cf >= 80 && sir.uf == 100 && sir.ms <= 3.5;
    report(
        7,
        pass,
        &format!(
            "HTP-DR CF={}; HTP-SIR UF={} MS={:.2}",
            dr.cf, sir.uf, sir.ms
        ),
        start.elapsed(),
        Duration::from_secs(600),
    );
}

#[test]
fn criterion_8_screening() {
    let start = Instant::now();
    let reps = 50;
    let design = SimDesign::new(Model::I, 300, 200).with_seed(801);
    let active = design.active();
    let gen = Generator::new(design).unwrap();
    let mut retained = 0;
    let mut total_size = 0;
    for rep in 0..reps {
        let d = gen.replicate(rep);
        let c = CenteredSample::new(&d, slice_response(d.y(), 4, false).unwrap()).unwrap();
        let path = ftp_run(&c, Method::Sir, default_k_max(300, 200, 4)).unwrap();
        let k = path.bic_choice().unwrap_or(0);
        let prefix = path.prefix(k);
        if active.iter().all(|a| prefix.contains(a)) {
            retained += 1;
        }
        total_size += k;
    }
    let avg = total_size as f64 / reps as f64;
    report(
        8,
        retained as f64 >= 0.95 * reps as f64 && avg <= 30.0,
        &format!("active set retained in {retained}/{reps}; mean BIC size {avg:.2}"),
        start.elapsed(),
        Duration::from_secs(900),
    );
}

#[test]
fn criterion_9_structural_properties() {
    let start = Instant::now();
    let mut r = rng(109);
    let mut failures: Vec<&str> = Vec::new();

    // FTP nesting and SIR path monotonicity
    for _ in 0..5 {
        let c = random_sample(&mut r, 80, 12, 4, false);
        for method in Method::ALL {
            let path = ftp_run(&c, method, 12).unwrap();
            let idx: Vec<usize> = path.steps.iter().map(|s| s.added_index).collect();
            let mut seen = idx.clone();
            seen.sort_unstable();
            seen.dedup();
            if seen.len() != idx.len() || idx.len() != 12 {
                failures.push("ftp nesting");
            }
            for (k, s) in path.steps.iter().enumerate() {
                if s.bic_value != bic_score(s.trace_value, k + 1, 80, 12) {
                    failures.push("bic recomputation");
                }
                let direct =
                    trace_kernel(method, &c.moments(&path.prefix(k + 1)).unwrap()).unwrap();
                if (direct - s.trace_value).abs() > 1e-8 * direct.abs().max(1.0) {
                    failures.push("path trace");
                }
            }
            if method == Method::Sir
                && path
                    .steps
                    .windows(2)
                    .any(|w| w[1].trace_value < w[0].trace_value - 1e-12)
            {
                failures.push("sir monotonicity");
            }
        }
    }

    // STP trail replay and determinism
    for _ in 0..3 {
        let c = random_sample(&mut r, 120, 6, 4, false);
        let cfg = StpConfig::new(Method::Sir, 120, 6, 4).with_alpha(0.05);
        let universe: Vec<usize> = (0..6).collect();
        let a = stp_run(&c, &cfg, &universe).unwrap();
        let b = stp_run(&c, &cfg, &universe).unwrap();
        if a != b || a.replay() != a.selected {
            failures.push("stp replay");
        }
    }

    // BIC penalty difference
    for (n, p) in [(100usize, 10usize), (300, 200), (57, 3)] {
        let step = bic_score(0.7, 3, n, p) - bic_score(0.7, 2, n, p);
        let want = ((n as f64).ln() + 2.0 * (p as f64).ln()) / n as f64;
        if (step - want).abs() > 1e-14 {
            failures.push("bic penalty");
        }
    }

    // metrics partition
    for _ in 0..20 {
        let reps = r.random_range(1..30);
        let sets: Vec<Vec<usize>> = (0..reps)
            .map(|_| (0..8).filter(|_| r.random_bool(0.6)).collect())
            .collect();
        let m = evaluate(&sets, &[0, 1, 6, 7]).unwrap();
        if m.uf + m.cf + m.of != reps {
            failures.push("metrics partition");
        }
    }

    // affine invariance of kernel traces
    for _ in 0..5 {
        let c = random_sample(&mut r, 60, 3, 4, false);
        let a = DMatrix::from_fn(3, 3, |i, k| {
            if i == k {
                1.5
            } else {
                r.random_range(-0.5..0.5)
            }
        });
        let shift = DVector::from_fn(3, |_, _| r.random_range(-3.0..3.0));
        let xa = c.x() * a.transpose();
        let x2 = DMatrix::from_fn(60, 3, |i, k| xa[(i, k)] + shift[k]);
        let y: Vec<f64> = c.slices().membership().iter().map(|&h| h as f64).collect();
        let c2 = CenteredSample::new(&Dataset::new(x2, y).unwrap(), c.slices().clone()).unwrap();
        for method in Method::ALL {
            let t1 = trace_kernel(method, &c.moments(&[0, 1, 2]).unwrap()).unwrap();
            let t2 = trace_kernel(method, &c2.moments(&[0, 1, 2]).unwrap()).unwrap();
            if (t1 - t2).abs() > 1e-8 * t1.abs().max(1.0) {
                failures.push("affine invariance");
            }
        }
    }

    // quantile scale equivariance
    for _ in 0..20 {
        let w: Vec<f64> = (0..r.random_range(1..10))
            .map(|_| r.random_range(0.01..2.0))
            .collect();
        let scale = r.random_range(0.1..20.0);
        let ws: Vec<f64> = w.iter().map(|v| v * scale).collect();
        let q = weighted_chisq_upper_quantile(&w, 0.05).unwrap();
        let qs = weighted_chisq_upper_quantile(&ws, 0.05).unwrap();
        if (qs - scale * q).abs() > 1e-9 * qs {
            failures.push("quantile scale");
        }
    }

    failures.dedup();
    report(
        9,
        failures.is_empty(),
        &if failures.is_empty() {
            "all structural properties hold".to_string()
        } else {
            failures.join(", ")
        },
        start.elapsed(),
        Duration::from_secs(60),
    );
}

#[test]
fn smoke_full_scale_path() {
    let start = Instant::now();
    let design = SimDesign::new(Model::I, 300, 500).with_seed(900);
    let out = run_experiment(&design, Algorithm::Htp, Method::Sir, 5, None).unwrap();
    println!(
        "smoke p=500 N=5: HTP-SIR UF={} CF={} OF={} MS={:.2} failures={} ({:.1}s)",
        out.metrics.uf,
        out.metrics.cf,
        out.metrics.of,
        out.metrics.ms,
        out.failures,
        start.elapsed().as_secs_f64()
    );
    assert_eq!(out.metrics.n_reps + out.failures, 5);
}
