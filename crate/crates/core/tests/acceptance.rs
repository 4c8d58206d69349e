//! Acceptance suite: one pass/fail line per criterion, non-zero exit if any
//! criterion fails.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use aligned_mtl::aggregate::{align, align_ub, Method, SharedRepGradients, TaskWeights};
use aligned_mtl::diagnostics::stability_report;
use aligned_mtl::linalg::{condition_number, dot, gram, sym_eigh, Matrix};
use aligned_mtl::optim::OptimizerConfig;
use aligned_mtl::synthetic::{
    build_oracle, run_benchmark, BenchmarkConfig, Bounds, SyntheticObjective, Theta2, INIT_POINTS,
};
use aligned_mtl::toy::model::{forward_backward, losses_from_representation, representation};
use aligned_mtl::toy::{descent_bound_violations, train, MultiTaskProblem, QuadraticSuite, RegressionProblem, TrainConfig};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        ("alignment invariants on 1000 full-rank systems", c1_alignment_invariants),
        ("non-negative alignment on 1e5 random systems", c2_nonnegative_alignment),
        ("Procrustes optimality of the polar factor", c3_procrustes),
        ("closed-form condition numbers", c4_closed_form_kappa),
        ("synthetic benchmark reaches the grid optimum", c5_synthetic_convergence),
        ("uniform baseline misses the optimum", c6_baseline_contrast),
        ("convergence to the weighted minimiser", c7_weighted_optimum),
        ("per-step descent bound with step 1/Λ", c8_descent_bound),
        ("representation-space upper bound", c9_upper_bound),
        ("analytic gradients match finite differences", c10_gradients),
        ("byte-identical CLI output", c11_determinism),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] criterion {:>2}: {name} ({detail}; {secs:.1}s)", k + 1),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] criterion {:>2}: {name} ({detail}; {secs:.1}s)", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn c1_alignment_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        let t = rng.random_range(2..=8);
        let n = rng.random_range(t..=64);
        let kappa = 10f64.powf(rng.random_range(0.0..=6.0));
        let scale = 10f64.powf(rng.random_range(-3.0..=3.0));
        let g = with_condition(&mut rng, n, t, kappa, scale);
        let w = random_weights(&mut rng, t);
        let res = align(&g, &w).map_err(|e| format!("case {case}: {e}"))?;
        ensure(res.rank == t, || format!("case {case}: rank {} < {t} at κ = {kappa:.3e}", res.rank))?;
        let gh = res.aligned_matrix(&g).map_err(|e| e.to_string())?;
        let sigma = res.sigma;
        let kappa_hat = condition_number(&gh).map_err(|e| e.to_string())?;
        let mut err = (kappa_hat - 1.0).abs();
        for j in 0..t {
            err = err.max((gh.column_norm(j) - sigma).abs() / sigma);
        }
        let m = gram(&gh);
        for i in 0..t {
            for j in 0..t {
                let target = if i == j { sigma * sigma } else { 0.0 };
                err = err.max((m[(i, j)] - target).abs() / (sigma * sigma));
            }
        }
        let report = stability_report(&gh).map_err(|e| e.to_string())?;
        err = err.max(1.0 - report.gms_min).max(report.cos_min.abs());
        ensure(err <= 1e-6, || format!("case {case}: relative error {err:.3e} at κ = {kappa:.3e}"))?;
        worst = worst.max(err);
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!("worst relative error {worst:.2e}"))
}

fn c2_nonnegative_alignment() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut min_ip = f64::INFINITY;
    let mut deficient = 0;
    for case in 0..100_000 {
        let t = rng.random_range(1..=6);
        let n = rng.random_range(1..=12);
        let g = if rng.random_bool(0.5) {
            deficient += 1;
            let r = rng.random_range(1..=t);
            low_rank(&mut rng, n, t, r)
        } else {
            gaussian(&mut rng, n, t)
        };
        let w = random_weights(&mut rng, t);
        let res = align(&g, &w).map_err(|e| format!("case {case}: {e}"))?;
        let g0 = g.matvec(w.as_slice()).unwrap();
        let ip = dot(&g0, &res.g_hat0);
        ensure(ip >= -1e-12, || format!("case {case}: ⟨Gw, ĝ₀⟩ = {ip:e}"))?;
        min_ip = min_ip.min(ip);
    }
    Ok(format!("min inner product {min_ip:.2e}, {deficient} low-rank draws"))
}

fn c3_procrustes() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut violations = 0;
    let mut closest_margin = f64::INFINITY;
    for case in 0..100 {
        let t = rng.random_range(2..=6);
        let n = rng.random_range(t..=16);
        let g = gaussian(&mut rng, n, t);
        let res = align(&g, &TaskWeights::uniform(t)).map_err(|e| e.to_string())?;
        let uv = res.aligned_matrix(&g).unwrap().scale(1.0 / res.sigma);
        let d_star = fro_dist(&g, &uv);
        let uv_na = to_na(&uv);
        for k in 0..200 {
            let eps = 10f64.powf(-(k % 8) as f64);
            let q = match k % 3 {
                0 => near_identity(&mut rng, n, eps) * &uv_na,
                1 => &uv_na * near_identity(&mut rng, t, eps),
                _ => orthonormal(&mut rng, n, t),
            };
            let d = fro_dist(&g, &from_na(&q));
            if d < d_star - 1e-12 * d_star {
                violations += 1;
            }
            closest_margin = closest_margin.min(d - d_star);
        }
        let _ = case;
    }
    ensure(violations == 0, || format!("{violations} violations"))?;
    Ok(format!("20000 comparisons, smallest margin {closest_margin:.2e}"))
}

fn c4_closed_form_kappa() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    // orthogonal columns: κ is the norm ratio
    for k in 0..=200 {
        let ratio = 10f64.powf(4.0 * k as f64 / 200.0);
        let n = rng.random_range(2..=8);
        let basis = orthonormal(&mut rng, n, 2);
        let a: Vec<f64> = basis.column(0).iter().map(|x| x * 3.0).collect();
        let b: Vec<f64> = basis.column(1).iter().map(|x| x * 3.0 * ratio).collect();
        for g in [Matrix::from_columns(&[a.clone(), b.clone()]), Matrix::from_columns(&[b, a])] {
            let g = g.unwrap();
            let kappa = condition_number(&g).map_err(|e| e.to_string())?;
            let err = (kappa - ratio).abs() / ratio;
            ensure(err <= 1e-9, || format!("orthogonal, ratio {ratio:e}: κ = {kappa}"))?;
            worst = worst.max(err);
        }
    }
    // exactly orthogonal axes: the Gram route is exact too
    for ratio in [1.0, 7.5, 1e2, 1e4] {
        let g = Matrix::from_columns(&[vec![ratio, 0.0], vec![0.0, 1.0]]).unwrap();
        let s = sym_eigh(&gram(&g)).map_err(|e| e.to_string())?;
        let via_gram = (s.eigenvalues[0] / s.eigenvalues[1]).sqrt();
        ensure((via_gram - ratio).abs() <= 1e-9 * ratio, || format!("Gram route, ratio {ratio}"))?;
    }
    // equal norms at angle α
    let steps = 2000;
    for k in 0..=steps {
        let alpha = 0.01 + (std::f64::consts::PI - 0.02) * k as f64 / steps as f64;
        let half = alpha / 2.0;
        let expected = if half > std::f64::consts::FRAC_PI_4 {
            half.tan()
        } else {
            1.0 / half.tan()
        };
        let n = rng.random_range(2..=8);
        let basis = orthonormal(&mut rng, n, 2);
        let norm = 10f64.powf(rng.random_range(-3.0..=3.0));
        let e1: Vec<f64> = basis.column(0).iter().copied().collect();
        let e2: Vec<f64> = basis.column(1).iter().copied().collect();
        let a: Vec<f64> = e1.iter().map(|x| norm * x).collect();
        let b: Vec<f64> = e1
            .iter()
            .zip(&e2)
            .map(|(x, y)| norm * (alpha.cos() * x + alpha.sin() * y))
            .collect();
        let g = Matrix::from_columns(&[a, b]).unwrap();
        let kappa = condition_number(&g).map_err(|e| e.to_string())?;
        let err = (kappa - expected).abs() / expected;
        ensure(err <= 1e-9, || format!("angle {alpha}: κ = {kappa}, expected {expected}"))?;
        worst = worst.max(err);
        let s = sym_eigh(&gram(&g)).map_err(|e| e.to_string())?;
        let via_gram = (s.eigenvalues[0] / s.eigenvalues[1]).sqrt();
        let gerr = (via_gram - kappa).abs() / kappa;
        ensure(gerr <= 1e-9, || format!("angle {alpha}: Gram route {via_gram} vs {kappa}"))?;
    }
    Ok(format!("worst relative error {worst:.2e}"))
}

struct SyntheticRuns {
    oracle_l0: f64,
    tol: f64,
    aligned: Vec<f64>,
    uniform: Vec<f64>,
    elapsed: Duration,
}

fn synthetic_runs() -> Result<&'static SyntheticRuns, String> {
    use std::sync::OnceLock;
    static RUNS: OnceLock<Result<SyntheticRuns, String>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let start = Instant::now();
        let w = TaskWeights::uniform(2);
        let objective = SyntheticObjective::default();
        let oracle = build_oracle(&objective, Bounds::default(), 1000, &w).map_err(|e| e.to_string())?;
        let final_l0 = |method| -> Result<Vec<f64>, String> {
            INIT_POINTS
                .iter()
                .map(|&init| {
                    let mut cfg = BenchmarkConfig::new(method, init);
                    cfg.record_stride = 0;
                    Ok(run_benchmark(&cfg).map_err(|e| e.to_string())?.last().l0)
                })
                .collect()
        };
        let aligned = final_l0(Method::AlignedMtl)?;
        let elapsed = start.elapsed();
        let uniform = final_l0(Method::Uniform)?;
        Ok(SyntheticRuns {
            oracle_l0: oracle.optimum_cell().l0,
            tol: oracle.tolerance(1e-2),
            aligned,
            uniform,
            elapsed,
        })
    })
    .as_ref()
    .map_err(Clone::clone)
}

fn c5_synthetic_convergence() -> Outcome {
    let runs = synthetic_runs()?;
    let gaps: Vec<f64> = runs.aligned.iter().map(|l| l - runs.oracle_l0).collect();
    let fmt = gaps.iter().map(|g| format!("{g:.1e}")).collect::<Vec<_>>().join(", ");
    ensure(gaps.iter().all(|&g| g <= runs.tol), || {
        format!("gaps to oracle L0 {:.4}: [{fmt}], tolerance {:.1e}", runs.oracle_l0, runs.tol)
    })?;
    ensure(runs.elapsed < Duration::from_secs(300), || format!("took {:?}", runs.elapsed))?;
    Ok(format!("oracle L0 {:.4}, gaps [{fmt}]", runs.oracle_l0))
}

fn c6_baseline_contrast() -> Outcome {
    let runs = synthetic_runs()?;
    let excess: Vec<f64> = runs.uniform.iter().zip(&runs.aligned).map(|(u, a)| u - a).collect();
    let failing: Vec<String> = INIT_POINTS
        .iter()
        .zip(&excess)
        .filter(|(_, &e)| e > 0.1)
        .map(|(p, e)| format!("({}, {}) +{e:.2}", p.t1, p.t2))
        .collect();
    ensure(!failing.is_empty(), || format!("uniform excess over aligned: {excess:?}"))?;
    Ok(format!("uniform stalls from {}", failing.join(", ")))
}

fn sgd_run(
    problem: &dyn MultiTaskProblem,
    method: Method,
    lr: f64,
    steps: usize,
    w: &TaskWeights,
    stride: usize,
) -> Result<aligned_mtl::toy::TrainRun, String> {
    let cfg = TrainConfig {
        method,
        optimizer: OptimizerConfig::sgd(lr),
        steps,
        weights: w.clone(),
        seed: 0,
        record_stride: stride,
    };
    train(problem, &cfg).map_err(|e| e.to_string())
}

fn c7_weighted_optimum() -> Outcome {
    let w = TaskWeights::new(vec![0.7, 0.3]).unwrap();
    let mut worst: f64 = 0.0;
    let mut runs = 0;
    for angle_deg in [30.0, 90.0, 135.0, 170.0] {
        for dominance in [1.0, 10.0, 100.0] {
            let suite = QuadraticSuite::conflict(f64::to_radians(angle_deg), dominance).map_err(|e| e.to_string())?;
            let lambda = suite.lipschitz(&w).map_err(|e| e.to_string())?;
            let target = suite.weighted_minimizer(&w).map_err(|e| e.to_string())?;
            let run = sgd_run(&suite, Method::AlignedMtl, 1.0 / lambda, 20_000, &w, 0)?;
            let dist = rel_err(&run.params.shared, &target) * aligned_mtl::linalg::norm(&target);
            ensure(dist <= 1e-4, || format!("angle {angle_deg}°, dominance {dominance}: distance {dist:e}"))?;
            worst = worst.max(dist);
            runs += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..5 {
        let dim = rng.random_range(2..=4);
        let suite = QuadraticSuite::random(dim, 2, &mut rng);
        let lambda = suite.lipschitz(&w).map_err(|e| e.to_string())?;
        let target = suite.weighted_minimizer(&w).map_err(|e| e.to_string())?;
        let run = sgd_run(&suite, Method::AlignedMtl, 1.0 / lambda, 50_000, &w, 0)?;
        let dist = rel_err(&run.params.shared, &target) * aligned_mtl::linalg::norm(&target);
        ensure(dist <= 1e-4, || format!("random suite, dim {dim}: distance {dist:e}"))?;
        worst = worst.max(dist);
        runs += 1;
    }
    Ok(format!("{runs} runs, largest distance {worst:.2e}"))
}

fn c8_descent_bound() -> Outcome {
    let mut steps_checked = 0;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(800 + seed);
        let dim = rng.random_range(2..=6);
        let tasks = rng.random_range(2..=4);
        let suite = QuadraticSuite::random(dim, tasks, &mut rng);
        let w = random_weights(&mut rng, tasks);
        let lambda = suite.lipschitz(&w).map_err(|e| e.to_string())?;
        let lr = rng.random_range(0.25..=1.0) / lambda;
        for method in [Method::AlignedMtl, Method::AlignedMtlUb] {
            let run = sgd_run(&suite, method, lr, 300, &w, 1)?;
            let traj = &run.trajectory;
            let scale = traj.records.iter().map(|r| r.l0.abs()).fold(1.0, f64::max);
            let bad = descent_bound_violations(traj, lr, lambda, 1e-12 * scale);
            ensure(bad.is_empty(), || format!("seed {seed}, {method}: violated at steps {bad:?}"))?;
            steps_checked += traj.records.len() - 1;
        }
    }
    Ok(format!("{steps_checked} steps over 100 runs"))
}

fn c9_upper_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut min_margin = f64::INFINITY;
    for case in 0..1000 {
        let t = rng.random_range(1..=6);
        let h = rng.random_range(t..=12);
        let p = rng.random_range(1..=16);
        let z = if rng.random_bool(0.3) {
            let kappa = 10f64.powf(rng.random_range(0.0..=5.0));
            with_condition(&mut rng, h, t, kappa, 1.0)
        } else {
            gaussian(&mut rng, h, t)
        };
        let j = gaussian(&mut rng, p, h);
        let rep = SharedRepGradients::new(z.clone(), j.clone()).unwrap();
        let w = random_weights(&mut rng, t);
        let res = align_ub(&rep, &w).map_err(|e| format!("case {case}: {e}"))?;
        let g = rep.full_gradient().unwrap();
        // σ-scaled alignment Ẑ = Z B, and the unit-scale polar factor
        let z_hat = res.aligned_matrix(&z).unwrap();
        for zh in [z_hat.clone(), z_hat.scale(1.0 / res.sigma)] {
            let g_hat = j.matmul(&zh).unwrap();
            let lhs = fro_dist(&g, &g_hat);
            let rhs = j.frobenius_norm() * fro_dist(&z, &zh);
            ensure(lhs <= rhs + 1e-10, || format!("case {case}: {lhs} > {rhs}"))?;
            min_margin = min_margin.min(rhs - lhs);
        }
        // the returned direction is J Ẑ w
        let direct = j.matvec(&z_hat.matvec(w.as_slice()).unwrap()).unwrap();
        let err = rel_err(&res.g_hat0, &direct);
        ensure(err <= 1e-9 || aligned_mtl::linalg::norm(&direct) < 1e-12, || {
            format!("case {case}: ĝ₀ differs from JẐw by {err:e}")
        })?;
    }
    Ok(format!("2000 checks, smallest margin {min_margin:.2e}"))
}

fn c10_gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let objective = SyntheticObjective::default();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for _ in 0..1000 {
        let th = Theta2::new(rng.random_range(-10.0..=10.0), rng.random_range(-10.0..=10.0));
        if objective.nonsmooth_margin(th) < 1e-4 {
            continue;
        }
        let ev = objective.eval(th);
        for t in 0..2 {
            let fd = central_diff(|x| objective.losses(Theta2::new(x[0], x[1]))[t], &[th.t1, th.t2]);
            let err = grad_err(&ev.grads[t], &fd);
            ensure(err < 1e-5, || format!("synthetic at {th:?}, task {t}: relative error {err:e}"))?;
            worst = worst.max(err);
        }
        checked += 1;
    }
    let synthetic_worst = worst;

    let mut toy_worst: f64 = 0.0;
    for seed in 0..4 {
        for problem in [RegressionProblem::linear_two_heads(seed), RegressionProblem::tanh_three_heads(seed)] {
            let arch = &problem.model.arch;
            let params = problem.initial_params();
            let fb = forward_backward(arch, &params, &problem.data).map_err(|e| e.to_string())?;
            for t in 0..arch.num_tasks() {
                let loss_at = |shared: &[f64], task: Option<&[f64]>| {
                    let mut p = params.clone();
                    p.shared = shared.to_vec();
                    if let Some(v) = task {
                        p.task[t] = v.to_vec();
                    }
                    forward_backward(arch, &p, &problem.data).unwrap().losses[t]
                };
                let fd_g = central_diff(|x| loss_at(x, None), &params.shared);
                let fd_head = central_diff(|x| loss_at(&params.shared, Some(x)), &params.task[t]);
                let h = representation(arch, &params, &problem.data).unwrap();
                let fd_z = central_diff(
                    |x| losses_from_representation(arch, &params, &problem.data, x).unwrap()[t],
                    &h,
                );
                for (what, an, fd) in [
                    ("G", fb.g.column(t), fd_g),
                    ("head", fb.task_grads[t].clone(), fd_head),
                    ("Z", fb.rep.z.column(t), fd_z),
                ] {
                    let err = grad_err(&an, &fd);
                    ensure(err < 1e-5, || format!("{:?} seed {seed}, task {t}, {what}: {err:e}", arch.activation))?;
                    toy_worst = toy_worst.max(err);
                }
            }
            let jz = fb.rep.full_gradient().unwrap();
            let chain = fro_dist(&jz, &fb.g) / fb.g.frobenius_norm();
            ensure(chain <= 1e-8, || format!("G = JZ off by {chain:e}"))?;
        }
        let mut qrng = ChaCha8Rng::seed_from_u64(100 + seed);
        let suite = QuadraticSuite::random(4, 3, &mut qrng);
        let params = suite.initial_params();
        let ev = suite.evaluate(&params).map_err(|e| e.to_string())?;
        for t in 0..3 {
            let fd = central_diff(|x| suite.evaluate_at(x).unwrap().0[t], &params.shared);
            let err = grad_err(&ev.g.column(t), &fd);
            ensure(err < 1e-5, || format!("quadratic seed {seed}, task {t}: {err:e}"))?;
            toy_worst = toy_worst.max(err);
        }
    }
    Ok(format!(
        "synthetic: {checked} points, worst {synthetic_worst:.1e}; toy models worst {toy_worst:.1e}"
    ))
}

/// `‖a − b‖ / max(‖a‖, 1e-6)`.
fn grad_err(analytic: &[f64], fd: &[f64]) -> f64 {
    let diff = analytic.iter().zip(fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    diff / aligned_mtl::linalg::norm(analytic).max(1e-6)
}

fn c11_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    std::fs::write(root.join("g.csv"), "seg,depth\n2,0\n0,1\n").unwrap();
    std::fs::write(root.join("opp.csv"), "a,b\n1,-1\n0,0\n").unwrap();
    std::fs::write(
        root.join("metrics.csv"),
        "task,metric,direction,baseline,model\nseg,miou,higher,0.4,0.42\ndepth,abs_err,lower,0.6,0.55\n",
    )
    .unwrap();
    let g = root.join("g.csv").display().to_string();
    let opp = root.join("opp.csv").display().to_string();
    let metrics = root.join("metrics.csv").display().to_string();
    let commands: Vec<(&str, Vec<String>)> = vec![
        ("align", vec!["align".into(), g.clone(), "--weights".into(), "0.3,0.7".into(), "--out".into(), "OUT/a.json".into()]),
        ("diagnose", vec!["diagnose".into(), g, opp, "--out".into(), "OUT/d.jsonl".into()]),
        (
            "synthetic",
            [
                "synthetic", "--method", "aligned-mtl", "--method", "pcgrad", "--method", "cagrad", "--steps", "2000",
                "--alpha-grid", "0.3,0.5", "--oracle-resolution", "120", "--out", "OUT",
            ]
            .map(String::from)
            .to_vec(),
        ),
        ("oracle", ["oracle", "--resolution", "60", "--out", "OUT"].map(String::from).to_vec()),
        (
            "train-toy quadratic",
            ["train-toy", "--suite", "quadratic", "--tasks", "3", "--steps", "200", "--out", "OUT"].map(String::from).to_vec(),
        ),
        (
            "train-toy tanh",
            ["train-toy", "--suite", "tanh", "--method", "aligned-mtl-ub", "--optimizer", "adam", "--steps", "200", "--out", "OUT"]
                .map(String::from)
                .to_vec(),
        ),
        (
            "train-toy linear",
            ["train-toy", "--suite", "linear", "--method", "pcgrad", "--steps", "100", "--seed", "3", "--out", "OUT"]
                .map(String::from)
                .to_vec(),
        ),
        ("delta-m", vec!["delta-m".into(), metrics, "--out".into(), "OUT/m.json".into()]),
    ];
    for (name, args) in &commands {
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let out = root.join(format!("{}-{rep}", name.replace(' ', "_")));
            std::fs::create_dir_all(&out).unwrap();
            let args: Vec<String> = args.iter().map(|a| a.replace("OUT", &out.display().to_string())).collect();
            let status = Command::new(env!("CARGO_BIN_EXE_amtl"))
                .args(&args)
                .output()
                .map_err(|e| e.to_string())?;
            ensure(status.status.success(), || {
                format!("{name} failed: {}", String::from_utf8_lossy(&status.stderr))
            })?;
            outputs.push(read_tree(&out));
        }
        ensure(!outputs[0].is_empty(), || format!("{name} wrote nothing"))?;
        ensure(outputs[0] == outputs[1], || format!("{name}: outputs differ"))?;
    }
    Ok(format!("{} commands", commands.len()))
}

/// File names and contents under `dir`, sorted by name.
fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}
