//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use exot::definetti::{parse_mixture, ExchangeableMixture};
use exot::dist1d::{Dist1D, GridPotential, QuantileGrid};
use exot::findim_approx::{
    assumption_a_monitor, convergence_experiment, gaussian_brenier_lipschitz, ExchangeableGaussian,
    ExperimentConfig, Marginal, MonitorMode,
};
use exot::logconcave_audit::{
    audit, counterexample_projection, numeric_modulus, UniformityVerdict,
};
use exot::outer_ot::{
    exchangeable_value, monge_solvability, solve_exact, Backend, CostMatrix, Obstruction,
    SolvabilityVerdict,
};
use exot::rng;
use exot::rng::Rng as Stream;
use exot::wasserstein1d::{caffarelli_check, w2_squared};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

fn mixture_fixture(name: &str) -> ExchangeableMixture {
    parse_mixture(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap()
}

fn normalized(rng: &mut Stream, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|x| x / total).collect();
    let rest: f64 = w[1..].iter().sum();
    w[0] = 1.0 - rest;
    w
}

fn random_dist(rng: &mut Stream) -> Dist1D {
    match rng.random_range(0..3) {
        0 => Dist1D::gaussian(rng.random_range(-3.0..3.0), rng.random_range(0.2..2.5)).unwrap(),
        1 => {
            let lo = rng.random_range(-3.0..3.0);
            Dist1D::uniform(lo, lo + rng.random_range(0.1..4.0)).unwrap()
        }
        _ => {
            let k = rng.random_range(1..=8);
            let mut atoms: Vec<f64> = (0..k).map(|_| rng.random_range(-4.0..4.0)).collect();
            atoms.sort_by(f64::total_cmp);
            Dist1D::empirical(atoms, normalized(rng, k)).unwrap()
        }
    }
}

/// Minimum of `<gamma, c>` over all basic feasible solutions of the
/// transportation polytope, found by enumerating every spanning tree of the
/// bipartite support graph.
fn enumerate_extreme_points(c: &[Vec<f64>], a: &[f64], b: &[f64]) -> f64 {
    let (k, l) = (a.len(), b.len());
    let cells = k * l;
    let edges_needed = k + l - 1;
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << cells) {
        if mask.count_ones() as usize != edges_needed {
            continue;
        }
        let edges: Vec<(usize, usize)> = (0..cells)
            .filter(|e| mask >> e & 1 == 1)
            .map(|e| (e / l, e % l))
            .collect();
        // acyclic with k + l - 1 edges on k + l nodes means spanning tree
        let mut parent: Vec<usize> = (0..k + l).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            p[x] = r;
            r
        }
        let mut acyclic = true;
        for &(i, j) in &edges {
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, k + j));
            if ri == rj {
                acyclic = false;
                break;
            }
            parent[ri] = rj;
        }
        if !acyclic {
            continue;
        }
        // peel leaves: the single edge at a degree-one node carries its residual supply
        let mut supply: Vec<f64> = a.iter().chain(b).copied().collect();
        let mut live = edges;
        let mut flow = Vec::with_capacity(edges_needed);
        while !live.is_empty() {
            let touches = |node: usize, &(i, j): &(usize, usize)| i == node || k + j == node;
            let leaf = (0..k + l)
                .find(|&v| live.iter().filter(|e| touches(v, e)).count() == 1)
                .unwrap();
            let pos = live.iter().position(|e| touches(leaf, e)).unwrap();
            let (i, j) = live.swap_remove(pos);
            let other = if leaf == i { k + j } else { i };
            let f = supply[leaf];
            supply[leaf] = 0.0;
            supply[other] -= f;
            flow.push(((i, j), f));
        }
        if flow.iter().any(|&(_, f)| f < -1e-12) {
            continue;
        }
        let value: f64 = flow.iter().map(|&((i, j), f)| f.max(0.0) * c[i][j]).sum();
        best = best.min(value);
    }
    best
}

fn criterion_1() -> Outcome {
    let grid = QuantileGrid::new(10_000).unwrap();
    let mut rng = rng::stream(101, 0);
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let (k, l) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let mu = ExchangeableMixture::new(
            (0..k).map(|_| random_dist(&mut rng)).collect(),
            normalized(&mut rng, k),
        )
        .unwrap();
        let nu = ExchangeableMixture::new(
            (0..l).map(|_| random_dist(&mut rng)).collect(),
            normalized(&mut rng, l),
        )
        .unwrap();
        let cost: Vec<Vec<f64>> = mu
            .components()
            .iter()
            .map(|p| {
                nu.components()
                    .iter()
                    .map(|q| w2_squared(p, q, &grid).unwrap())
                    .collect()
            })
            .collect();
        let oracle = enumerate_extreme_points(&cost, mu.weights(), nu.weights());
        let value = exchangeable_value(&mu, &nu, &grid, Backend::Exact)
            .map_err(|e| e.to_string())?
            .value;
        let gap = (value - oracle).abs();
        check(gap <= 1e-9, || {
            format!("case {case}: {value} vs enumeration {oracle}")
        })?;
        worst = worst.max(gap);
    }
    Ok(format!("50 pairs, max gap {worst:.1e}"))
}

fn criterion_2() -> Outcome {
    let grid = QuantileGrid::new(840).unwrap();
    let mut rng = rng::stream(102, 0);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let (k, l) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let mut xs: Vec<f64> = (0..k).map(|_| rng.random_range(-5.0..5.0)).collect();
        let mut ys: Vec<f64> = (0..l).map(|_| rng.random_range(-5.0..5.0)).collect();
        xs.sort_by(f64::total_cmp);
        ys.sort_by(f64::total_cmp);
        let equal = |k: usize| {
            let mut w = vec![1.0 / k as f64; k];
            let rest: f64 = w[1..].iter().sum();
            w[0] = 1.0 - rest;
            w
        };
        let (a, b) = (equal(k), equal(l));
        let p = Dist1D::empirical(xs.clone(), a.clone()).unwrap();
        let q = Dist1D::empirical(ys.clone(), b.clone()).unwrap();
        let quad = w2_squared(&p, &q, &grid).map_err(|e| e.to_string())?;
        let rows = xs
            .iter()
            .map(|x| ys.iter().map(|y| (x - y) * (x - y)).collect())
            .collect();
        let exact = solve_exact(&CostMatrix::new(rows).unwrap(), &a, &b)
            .map_err(|e| e.to_string())?
            .value();
        let gap = (quad - exact).abs();
        check(gap <= 1e-12, || {
            format!("case {case}: quadrature {quad} vs discrete {exact}")
        })?;
        worst = worst.max(gap);
    }
    Ok(format!("100 pairs, max gap {worst:.1e}"))
}

fn criterion_3() -> Outcome {
    let grid = QuantileGrid::new(100_000).unwrap();
    let std = Dist1D::gaussian(0.0, 1.0).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..10 {
        for j in 0..10 {
            let m = -3.0 + 6.0 * i as f64 / 9.0;
            let s = 0.2 + 2.8 * j as f64 / 9.0;
            let v = w2_squared(&std, &Dist1D::gaussian(m, s).unwrap(), &grid)
                .map_err(|e| e.to_string())?;
            let exact = m * m + (1.0 - s) * (1.0 - s);
            let gap = (v - exact).abs();
            check(gap <= 1e-6, || format!("m={m} s={s}: {v} vs {exact}"))?;
            worst = worst.max(gap);
        }
    }
    Ok(format!("10x10 grid, max error {worst:.1e}"))
}

fn run(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_exot"));
    cmd.args(args);
    if let Some(t) = threads {
        cmd.env("EXOT_THREADS", t);
    }
    cmd.output().expect("spawn exot")
}

fn criterion_4() -> Outcome {
    let (mu, nu) = (
        mixture_fixture("std_normal.json"),
        mixture_fixture("mix_pm1.json"),
    );
    let grid = QuantileGrid::new(20_000).unwrap();
    let mut witnesses = Vec::new();
    for _ in 0..2 {
        let v = exchangeable_value(&mu, &nu, &grid, Backend::Exact).map_err(|e| e.to_string())?;
        match monge_solvability(&mu, &nu, &v.coupling) {
            SolvabilityVerdict::NotSolvable(Obstruction::SplitRow { row: 0, masses })
                if masses == [0.5, 0.5] =>
            {
                witnesses.push(masses)
            }
            other => return Err(format!("unexpected verdict {other:?}")),
        }
    }
    let (m, n) = (fixture("std_normal.json"), fixture("mix_pm1.json"));
    let args = [
        &*m.to_string_lossy(),
        &*n.to_string_lossy(),
        "--grid",
        "20000",
    ];
    let first = run(&[&["map"][..], &args].concat(), None);
    let second = run(&[&["map"][..], &args].concat(), None);
    check(first.status.code() == Some(4), || {
        format!("exit code {:?}", first.status.code())
    })?;
    check(
        first.stdout == second.stdout
            && first.stderr == second.stderr
            && second.status.code() == Some(4),
        || "repeated runs differ".into(),
    )?;
    let err: serde_json::Value =
        serde_json::from_slice(&first.stderr).map_err(|e| e.to_string())?;
    check(
        err["error"] == "monge_infeasible"
            && err["witness"]["masses"] == serde_json::json!([0.5, 0.5]),
        || format!("stderr {err}"),
    )?;
    Ok("split row 0 with masses [0.5, 0.5]; CLI exit 4, repeatable".into())
}

fn convergence(
    mu: &str,
    nu: &str,
) -> Result<(exot::findim_approx::ConvergenceTable, Duration), String> {
    let start = Instant::now();
    let cfg = ExperimentConfig::new(vec![1, 2, 4, 8], 500, 2024);
    let table = convergence_experiment(&mixture_fixture(mu), &mixture_fixture(nu), &cfg)
        .map_err(|e| e.to_string())?;
    Ok((table, start.elapsed()))
}

fn criterion_5() -> Outcome {
    let (table, elapsed) = convergence("std_normal.json", "shifted_normal.json")?;
    check((table.reference - 1.0).abs() < 1e-9, || {
        format!("reference {}", table.reference)
    })?;
    for r in &table.rows {
        check((r.mean - 1.0).abs() <= 3.0 * r.half_width, || {
            format!(
                "n={}: mean {} outside 1 +- 3 x {}",
                r.n, r.mean, r.half_width
            )
        })?;
    }
    check(elapsed < Duration::from_secs(120), || {
        format!("took {elapsed:?}")
    })?;
    let means: Vec<String> = table
        .rows
        .iter()
        .map(|r| format!("{:.3}", r.mean))
        .collect();
    Ok(format!(
        "means [{}] in {:.1}s",
        means.join(", "),
        elapsed.as_secs_f64()
    ))
}

fn criterion_6() -> Outcome {
    let (table, elapsed) = convergence("mix_pm1.json", "mix_pm2.json")?;
    check((table.reference - 1.0).abs() < 1e-6, || {
        format!("reference {}", table.reference)
    })?;
    check(table.trend >= 0.8, || format!("Spearman {}", table.trend))?;
    // sampled means: any decrease must stay inside the combined intervals
    for w in table.rows.windows(2) {
        check(
            w[1].mean >= w[0].mean - (w[0].half_width + w[1].half_width),
            || {
                format!(
                    "mean drops from {} at n={} to {} at n={}",
                    w[0].mean, w[0].n, w[1].mean, w[1].n
                )
            },
        )?;
    }
    let last = table.rows.last().unwrap();
    check(
        (last.mean - table.reference).abs() <= 3.0 * last.half_width,
        || {
            format!(
                "final mean {} outside {} +- 3 x {}",
                last.mean, table.reference, last.half_width
            )
        },
    )?;
    let means: Vec<String> = table
        .rows
        .iter()
        .map(|r| format!("{:.3}", r.mean))
        .collect();
    Ok(format!(
        "means [{}], Spearman {:.2}, {:.1}s",
        means.join(", "),
        table.trend,
        elapsed.as_secs_f64()
    ))
}

/// Principal square root by the Denman-Beavers iteration.
fn denman_beavers(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut y = a.clone();
    let mut z = DMatrix::identity(a.nrows(), a.ncols());
    for _ in 0..100 {
        let yi = y.clone().try_inverse().unwrap();
        let zi = z.clone().try_inverse().unwrap();
        let next = (&y + zi) * 0.5;
        z = (&z + yi) * 0.5;
        let delta = (&next - &y).norm();
        y = next;
        if delta <= 1e-15 * y.norm() {
            break;
        }
    }
    y
}

/// Spectral norm of a symmetric positive matrix by power iteration.
fn power_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.1 * i as f64).normalize();
    let mut lambda = 0.0;
    for _ in 0..10_000 {
        let w = a * &v;
        let next = v.dot(&w);
        v = w.normalize();
        if (next - lambda).abs() <= 1e-16 * next {
            return next;
        }
        lambda = next;
    }
    lambda
}

fn criterion_7() -> Outcome {
    let source = ExchangeableGaussian::standard();
    let mut worst: f64 = 0.0;
    for sigma2 in [1.0, 2.0] {
        for rho in [0.0, 0.25, 0.5] {
            let target = ExchangeableGaussian::new(sigma2, rho, 0.0).map_err(|e| e.to_string())?;
            for n in 1..=64 {
                let (lip, _) =
                    gaussian_brenier_lipschitz(&source, &target, n).map_err(|e| e.to_string())?;
                let closed = (sigma2 * (1.0 - rho + n as f64 * rho)).sqrt();
                let dense = power_norm(&denman_beavers(&target.covariance(n)));
                let gap = (lip - closed).abs().max((lip - dense).abs());
                check(gap <= 1e-8, || {
                    format!("sigma2={sigma2} rho={rho} n={n}: {lip} vs {closed} / {dense}")
                })?;
                worst = worst.max(gap);
            }
            let report = assumption_a_monitor(
                &Marginal::Gaussian(source),
                &Marginal::Gaussian(target),
                &[1, 2, 4, 8, 16, 32, 64],
                MonitorMode::Gaussian,
                0,
            )
            .map_err(|e| e.to_string())?;
            check(report.diverging == (rho > 0.0), || {
                format!("rho={rho}: diverging={}", report.diverging)
            })?;
        }
    }
    Ok(format!(
        "n = 1..64, max gap {worst:.1e}; divergence iff rho > 0"
    ))
}

fn criterion_8() -> Outcome {
    let mut rng = rng::stream(108, 0);
    let mut worst_equality: f64 = 0.0;
    let mut slack = f64::INFINITY;
    for case in 0..10 {
        let (ss, st) = (rng.random_range(0.3..3.0), rng.random_range(0.3..3.0));
        let source = Dist1D::gaussian(rng.random_range(-2.0..2.0), ss).unwrap();
        let target = Dist1D::gaussian(rng.random_range(-2.0..2.0), st).unwrap();
        let (c_upper, c_lower) = (1.0 / (ss * ss), 1.0 / (st * st));
        let r = caffarelli_check(&source, &target, c_upper, c_lower, 2000, case)
            .map_err(|e| e.to_string())?;
        let bound = (c_upper / c_lower).sqrt();
        check(
            r.estimate <= bound + 1e-9 && (r.estimate - bound).abs() <= 1e-9,
            || format!("gaussian case {case}: {} vs {bound}", r.estimate),
        )?;
        worst_equality = worst_equality.max((r.estimate - bound).abs());
    }
    for case in 0..10 {
        let st = rng.random_range(0.5..2.0);
        let base = 1.0 / (st * st);
        let freq = rng.random_range(0.5..2.0);
        let amp = rng.random_range(0.1..0.5) * base / (freq * freq);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let target = GridPotential::from_fn(-10.0 * st, 10.0 * st, 4001, |x| {
            0.5 * base * x * x + amp * (freq * x + phase).sin()
        })
        .map(Dist1D::Grid)
        .map_err(|e| e.to_string())?;
        let ss = rng.random_range(0.5..2.0);
        let source = if case % 2 == 0 {
            Dist1D::gaussian(0.0, ss).unwrap()
        } else {
            let b = 1.0 / (ss * ss);
            let a = 0.2 * b;
            GridPotential::from_fn(-10.0 * ss, 10.0 * ss, 4001, |x| {
                0.5 * b * x * x + a * x.cos()
            })
            .map(Dist1D::Grid)
            .map_err(|e| e.to_string())?
        };
        let (src, tgt) = (
            source.curvature_bounds().unwrap(),
            target.curvature_bounds().unwrap(),
        );
        // measured second differences must sit inside the analytic curvature band
        let spread = amp * freq * freq;
        check(
            tgt.lower >= base - spread - 1e-9 && tgt.upper <= base + spread + 1e-9,
            || {
                format!(
                    "perturbed case {case}: target curvature [{}, {}]",
                    tgt.lower, tgt.upper
                )
            },
        )?;
        let r = caffarelli_check(&source, &target, src.upper, tgt.lower, 2000, 100 + case)
            .map_err(|e| e.to_string())?;
        let bound = (src.upper / tgt.lower).sqrt();
        check(r.estimate <= bound + 1e-9, || {
            format!("perturbed case {case}: {} > {bound}", r.estimate)
        })?;
        slack = slack.min(bound - r.estimate);
    }
    Ok(format!(
        "gaussian equality gap {worst_equality:.1e}; perturbed min slack {slack:.2e}"
    ))
}

fn criterion_9() -> Outcome {
    let mut worst: f64 = 0.0;
    for (sigma2, rho) in [(1.0, 0.0), (1.0, 0.25), (2.0, 0.5), (0.5, 0.1)] {
        let g = ExchangeableGaussian::new(sigma2, rho, 0.0).map_err(|e| e.to_string())?;
        for n in 1..=64 {
            let closed = 1.0 / (sigma2 * (1.0 - rho + n as f64 * rho));
            let library = numeric_modulus(&g, n).map_err(|e| e.to_string())?;
            // independent route: largest covariance eigenvalue
            let oracle = 1.0 / SymmetricEigen::new(g.covariance(n)).eigenvalues.max();
            let gap = (library - closed).abs().max((oracle - closed).abs());
            check(gap <= 1e-10, || {
                format!("sigma2={sigma2} rho={rho} n={n}: {library} / {oracle} vs {closed}")
            })?;
            worst = worst.max(gap);
        }
        let report = audit(&g, &[1, 2, 4, 8, 16, 32, 64]).map_err(|e| e.to_string())?;
        let uniform = report.verdict == UniformityVerdict::Uniform;
        check(uniform == (rho == 0.0), || {
            format!("rho={rho}: verdict {:?}", report.verdict)
        })?;
    }
    let potential = Dist1D::gaussian(0.0, 1.0).unwrap();
    for n in 1..=16 {
        let g = counterexample_projection(&potential, n).map_err(|e| e.to_string())?;
        let kappa = numeric_modulus(&g, n).map_err(|e| e.to_string())?;
        let want = 1.0 / (n as f64 + 1.0);
        check((kappa - want).abs() <= 1e-10, || {
            format!("counterexample n={n}: {kappa} vs {want}")
        })?;
    }
    Ok(format!(
        "max eigen gap {worst:.1e}; counterexample 1/(n+1) for n = 1..16"
    ))
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (pm1, pm2) = (fixture("mix_pm1.json"), fixture("mix_pm2.json"));
    let (pm1, pm2) = (
        pm1.to_string_lossy().into_owned(),
        pm2.to_string_lossy().into_owned(),
    );
    let runs: Vec<(&str, Vec<&str>, Vec<&str>)> = vec![
        (
            "approx",
            vec![
                "approx",
                &pm1,
                &pm2,
                "--grid",
                "20000",
                "--n-list",
                "1,2,4",
                "--samples",
                "60",
                "--reps",
                "4",
                "--seed",
                "7",
            ],
            vec!["convergence.csv", "convergence.svg", "convergence.json"],
        ),
        (
            "value",
            vec!["value", &pm1, &pm2, "--grid", "20000"],
            vec!["coupling.csv"],
        ),
        (
            "audit",
            vec!["audit", "--counterexample"],
            vec!["modulus.csv", "modulus.svg", "audit.json"],
        ),
    ];
    let mut compared = 0;
    for (name, args, files) in &runs {
        let mut outputs = Vec::new();
        for (k, threads) in ["1", "3", "1"].iter().enumerate() {
            let out = dir.path().join(format!("{name}_{k}"));
            let out_str = out.to_string_lossy().into_owned();
            let full: Vec<&str> = args.iter().copied().chain(["--out", &out_str]).collect();
            let o = run(&full, Some(threads));
            check(o.status.success(), || {
                format!("{name} failed: {}", String::from_utf8_lossy(&o.stderr))
            })?;
            let contents: Vec<Vec<u8>> = files
                .iter()
                .map(|f| std::fs::read(out.join(f)).unwrap_or_default())
                .collect();
            check(contents.iter().all(|c| !c.is_empty()), || {
                format!("{name}: missing output files")
            })?;
            outputs.push((o.stdout, contents));
        }
        check(outputs.windows(2).all(|w| w[0] == w[1]), || {
            format!("{name}: outputs differ between runs")
        })?;
        compared += files.len();
    }
    Ok(format!(
        "{compared} files byte-identical across 3 runs each (EXOT_THREADS 1 and 3)"
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("nested value vs extreme-point enumeration", criterion_1),
        ("1D isometry on empirical laws", criterion_2),
        ("Gaussian W2 closed form", criterion_3),
        ("Monge non-existence witness", criterion_4),
        ("value convergence, product case", criterion_5),
        ("value convergence, mixture case", criterion_6),
        ("Gaussian Brenier Lipschitz monitor", criterion_7),
        ("contraction bound", criterion_8),
        ("log-concavity modulus", criterion_9),
        ("CLI determinism", criterion_10),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.1}s]", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} [{secs:.1}s]", k + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
