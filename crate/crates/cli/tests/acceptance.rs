//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any criterion fails.
//!
//! `ACCEPTANCE_ONLY=5,6` restricts the run to the listed criteria.

use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use rpca_cli::args::{FacesArgs, Method, NetworkArgs, SolverArgs};
use rpca_cli::commands;
use rpca_core::io::{self, GrayImage};
use rpca_core::linalg::{self, RankRBasis};
use rpca_core::metrics;
use rpca_core::shrinkage::{self, McpParams};
use rpca_core::solver::{self, SolverConfig};
use rpca_core::synth::{self, SynthCase, SynthTriple};
use rpca_core::trainer::{self, TrainConfig, TrainReport, TrainSample};
use rpca_core::unrolled::{self, UnrolledParams};
use rpca_core::{DenseMatrix, Shrinkage};

struct Verdict {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
}

fn report(v: &Verdict) {
    println!(
        "[{}] criterion {} ({}): {} [{:.1}s]",
        if v.pass { "PASS" } else { "FAIL" },
        v.id,
        v.name,
        v.detail,
        v.elapsed.as_secs_f64()
    );
}

fn timed(id: u32, name: &'static str, f: impl FnOnce() -> (bool, String)) -> Verdict {
    let start = Instant::now();
    let (pass, detail) = f();
    let v = Verdict {
        id,
        name,
        pass,
        detail,
        elapsed: start.elapsed(),
    };
    report(&v);
    v
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

// ---------------------------------------------------------------- 1

fn classical_convergence() -> (bool, String) {
    const SEEDS: u64 = 20;
    let results: Vec<(bool, usize, f64)> = (0..SEEDS)
        .into_par_iter()
        .map(|seed| {
            let t = synth::gen_case(&SynthCase::preset(1, seed).unwrap()).unwrap();
            let start = Instant::now();
            let out = solver::solve(&t.m_star, &SolverConfig::with_defaults(250, 250, 2)).unwrap();
            let secs = start.elapsed().as_secs_f64();
            let eps_m = metrics::eps_m(&t.m_star, &out.state.l, &out.state.s).unwrap();
            (eps_m < 1e-6 && out.state.k <= 50, out.state.k, secs)
        })
        .collect();
    let ok = results.iter().filter(|r| r.0).count();
    let max_k = results.iter().map(|r| r.1).max().unwrap_or(0);
    let worst = results.iter().map(|r| r.2).fold(0.0, f64::max);
    (
        ok >= 18 && worst < 5.0,
        format!("{ok}/20 seeds reach eps_M < 1e-6 within 50 iterations (need >= 18); max iterations {max_k}; slowest solve {worst:.3}s (limit 5s)"),
    )
}

// ---------------------------------------------------------------- 2, 3, 4

struct Trained {
    report: TrainReport,
    secs: f64,
}

fn train_on(train: &[SynthTriple], shrinkage: Shrinkage) -> Trained {
    let d = train[0].m_star.nrows();
    let r = 2;
    let data: Vec<TrainSample> = train
        .iter()
        .map(|t| TrainSample::new(t.m_star.clone(), t.l_star.clone(), t.s_star.clone()).unwrap())
        .collect();
    let init = UnrolledParams {
        shrinkage,
        ..UnrolledParams::with_defaults(d, d)
    };
    let start = Instant::now();
    let report = trainer::train(&data, &TrainConfig::with_defaults(r), &init).unwrap();
    Trained {
        report,
        secs: start.elapsed().as_secs_f64(),
    }
}

#[derive(Default)]
struct Means {
    eps_l: f64,
    eps_s: f64,
    eps_supp: f64,
}

fn test_means(
    test: &[SynthTriple],
    run: impl Fn(&DenseMatrix) -> (DenseMatrix, DenseMatrix) + Sync,
) -> Means {
    let rows: Vec<[f64; 3]> = test
        .par_iter()
        .map(|t| {
            let (l, s) = run(&t.m_star);
            [
                metrics::eps_l(&t.l_star, &l).unwrap(),
                metrics::eps_s(&t.s_star, &s).unwrap(),
                metrics::eps_supp(&t.s_star, &s).unwrap(),
            ]
        })
        .collect();
    let col = |i: usize| mean(&rows.iter().map(|r| r[i]).collect::<Vec<_>>());
    Means {
        eps_l: col(0),
        eps_s: col(1),
        eps_supp: col(2),
    }
}

fn accaltproj_means(test: &[SynthTriple]) -> Means {
    let d = test[0].m_star.nrows();
    test_means(test, |m| {
        let out = solver::solve(m, &SolverConfig::with_defaults(d, d, 2)).unwrap();
        (out.state.l, out.state.s)
    })
}

fn unrolled_means(test: &[SynthTriple], p: &UnrolledParams) -> Means {
    test_means(test, |m| {
        let out = unrolled::forward(m, 2, p).unwrap();
        (out.l, out.s)
    })
}

fn unrolled_beats_classical(firm: &Trained, test: &[SynthTriple]) -> (bool, String) {
    let base = accaltproj_means(test);
    let net = unrolled_means(test, &firm.report.final_params);
    (
        net.eps_l < base.eps_l && net.eps_s < base.eps_s,
        format!(
            "mean eps_L unrolled {:.3e} vs accaltproj {:.3e} ({:.2}x); mean eps_S {:.3e} vs {:.3e} ({:.2}x); trained beta {:.4e}, gamma {:.4}",
            net.eps_l,
            base.eps_l,
            base.eps_l / net.eps_l,
            net.eps_s,
            base.eps_s,
            base.eps_s / net.eps_s,
            firm.report.final_params.beta,
            firm.report.final_params.gamma
        ),
    )
}

fn soft_ablation(firm: &Trained, soft: &Trained, test: &[SynthTriple]) -> (bool, String) {
    let f = unrolled_means(test, &firm.report.final_params);
    let s = unrolled_means(test, &soft.report.final_params);
    let ratio = if f.eps_supp > 0.0 {
        s.eps_supp / f.eps_supp
    } else if s.eps_supp > 0.0 {
        f64::INFINITY
    } else {
        f64::NAN
    };
    (
        s.eps_supp > 0.0 && s.eps_supp >= 10.0 * f.eps_supp,
        format!(
            "mean eps_supp soft {:.3e} vs firm {:.3e} (ratio {ratio:.3}, need >= 10); soft trained beta {:.4e}, gamma {:.4}; soft mean eps_L {:.3e}",
            s.eps_supp, f.eps_supp, soft.report.final_params.beta, soft.report.final_params.gamma, s.eps_l
        ),
    )
}

fn in_ranges(t: &Trained) -> (bool, bool, f64) {
    let p = &t.report.final_params;
    let ratio = p.beta / t.report.initial.beta;
    (
        (0.70..=0.85).contains(&p.gamma),
        (1.2..=3.0).contains(&ratio),
        ratio,
    )
}

fn learned_ranges(full: &[(u32, Trained)]) -> (bool, String) {
    let mut pass = true;
    let mut parts = Vec::new();
    for (case, t) in full {
        let (g_ok, b_ok, ratio) = in_ranges(t);
        let time_ok = t.secs <= 15.0 * 60.0;
        pass &= g_ok && b_ok && time_ok;
        parts.push(format!(
            "case {case}: gamma {:.4} [{}], beta {:.2}x init [{}], {:.0}s",
            t.report.final_params.gamma,
            if g_ok { "in" } else { "out" },
            ratio,
            if b_ok { "in" } else { "out" },
            t.secs
        ));
    }
    // fast mode: d = 64, 40 samples
    let case = SynthCase::new(64, 2, 0.1, 1.0, 64);
    let (train, _) = synth::gen_dataset(&case, 40, 40).unwrap();
    let fast = train_on(&train, Shrinkage::Firm);
    let (g_ok, _, ratio) = in_ranges(&fast);
    let fast_ok = g_ok && fast.secs < 120.0;
    pass &= fast_ok;
    parts.push(format!(
        "fast d=64: gamma {:.4} [{}], beta {:.2}x, {:.1}s (limit 120s)",
        fast.report.final_params.gamma,
        if g_ok { "in" } else { "out" },
        ratio,
        fast.secs
    ));
    (
        pass,
        format!(
            "need gamma in [0.70, 0.85], beta in [1.2, 3.0]x init; {}",
            parts.join("; ")
        ),
    )
}

// ---------------------------------------------------------------- 5

fn mcp_oracle(t: f64, zeta: f64, upsilon: f64) -> f64 {
    if t.abs() > upsilon * zeta {
        upsilon * zeta * zeta / 2.0
    } else {
        zeta * t.abs() - t * t / (2.0 * upsilon)
    }
}

fn grid_prox(x: f64, zeta: f64, upsilon: f64) -> f64 {
    const STEP: f64 = 1e-4;
    let lo = x.min(0.0) - 0.5;
    let n = ((x.abs() + 1.0) / STEP).ceil() as usize;
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..=n {
        let t = lo + i as f64 * STEP;
        let v = 0.5 * (t - x) * (t - x) + mcp_oracle(t, zeta, upsilon);
        if v < best.0 {
            best = (v, t);
        }
    }
    // 0 is not on the grid in general; the penalty has a kink there
    let at_zero = 0.5 * x * x;
    if at_zero <= best.0 {
        0.0
    } else {
        best.1
    }
}

fn prox_oracle() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let draws: Vec<(f64, f64, f64)> = (0..10_000)
        .map(|_| {
            (
                rng.random_range(-5.0..=5.0),
                rng.random_range(0.1..=2.0),
                rng.random_range(1.01..=5.0),
            )
        })
        .collect();
    let worst_grid = draws
        .par_iter()
        .map(|&(x, zeta, upsilon)| {
            let p = McpParams::new(zeta, upsilon).unwrap();
            (shrinkage::firm_threshold(x, p) - grid_prox(x, zeta, upsilon)).abs()
        })
        .reduce(|| 0.0, f64::max);
    let mut worst_soft: f64 = 0.0;
    let mut worst_hard: f64 = 0.0;
    let mut hard_checked = 0;
    for &(x, zeta, _) in &draws {
        let soft = McpParams::new(zeta, 1e6).unwrap();
        worst_soft = worst_soft
            .max((shrinkage::firm_threshold(x, soft) - shrinkage::soft_threshold(x, zeta)).abs());
        let near = 1.0 + 1e-6;
        let a = x.abs();
        if a < zeta || a > near * zeta {
            let hard = McpParams::new(zeta, near).unwrap();
            worst_hard = worst_hard.max(
                (shrinkage::firm_threshold(x, hard) - shrinkage::hard_threshold(x, zeta)).abs(),
            );
            hard_checked += 1;
        }
    }
    (
        worst_grid <= 1e-3 && worst_soft <= 1e-4 && worst_hard <= 1e-4,
        format!(
            "grid argmin max deviation {worst_grid:.2e} over 10^4 draws (tol 1e-3); soft limit {worst_soft:.2e}, hard limit {worst_hard:.2e} on {hard_checked} off-band draws (tol 1e-4)"
        ),
    )
}

// ---------------------------------------------------------------- 6

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn dense_projector(a: &DenseMatrix, b: &RankRBasis) -> DenseMatrix {
    let pu = &b.u * b.u.transpose();
    let pv = &b.v * b.v.transpose();
    &pu * a + a * &pv - &pu * a * &pv
}

fn tangent_oracle() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut worst_p, mut worst_r): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let r = rng.random_range(1..=4);
        let d1 = rng.random_range(r..=20);
        let d2 = rng.random_range(r..=20);
        let low = gaussian(&mut rng, d1, r) * gaussian(&mut rng, r, d2);
        let basis = linalg::truncated_svd(&low, r).unwrap();
        let a = gaussian(&mut rng, d1, d2);
        let (p, factors) = linalg::tangent_projection(&a, &basis).unwrap();
        worst_p = worst_p.max((&p - dense_projector(&a, &basis)).norm());
        let structured = linalg::structured_rank_projection(&factors, &basis, r).unwrap();
        let dense = linalg::rank_projection(&dense_projector(&a, &basis), r).unwrap();
        worst_r = worst_r.max((structured.reconstruct() - dense).norm());
    }
    (
        worst_p <= 1e-10 && worst_r <= 1e-9,
        format!("projector max Frobenius gap {worst_p:.2e} (tol 1e-10); rank-r projection gap {worst_r:.2e} (tol 1e-9); 100 instances, d <= 20, r <= 4"),
    )
}

// ---------------------------------------------------------------- 7

/// Rank-2 Gaussian L plus at most 2 sparse entries per row and column with
/// magnitudes in [8, 12], far from the low-rank entry scale.
fn separated_instance(seed: u64) -> DenseMatrix {
    const D: usize = 20;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = gaussian(&mut rng, D, 2) * gaussian(&mut rng, 2, D);
    let mut s = DenseMatrix::zeros(D, D);
    for shift in [3, 11] {
        let offset = rng.random_range(0..D);
        for i in 0..D {
            if rng.random_bool(0.5) {
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                s[(i, (i * 7 + offset + shift) % D)] = sign * rng.random_range(8.0..12.0);
            }
        }
    }
    l + s
}

fn equivalence() -> (bool, String) {
    let mut matched = 0;
    let mut worst: f64 = 0.0;
    let mut other = Vec::new();
    for seed in 0..20 {
        let m = separated_instance(seed);
        let p = UnrolledParams::with_defaults(20, 20);
        match unrolled::forward_equivalence_check(&m, 2, &p).unwrap() {
            unrolled::Equivalence::Match { max_diff } => {
                matched += 1;
                worst = worst.max(max_diff);
            }
            e => other.push(format!("seed {seed}: {e:?}")),
        }
    }
    (
        matched == 20,
        format!(
            "{matched}/20 instances reproduce the hard-threshold iterates (max entry gap {worst:.2e}, tol 1e-6){}",
            if other.is_empty() { String::new() } else { format!("; {}", other.join(", ")) }
        ),
    )
}

// ---------------------------------------------------------------- 8

fn write_stack(dir: &Path, images: &[GrayImage]) {
    for (k, img) in images.iter().enumerate() {
        io::write_pgm(img, dir.join(format!("img{k:02}.pgm"))).unwrap();
    }
}

fn face_like(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Vec<GrayImage> {
    let base: Vec<f64> = (0..h * w)
        .map(|i| {
            let (r, c) = ((i / w) as f64 / h as f64, (i % w) as f64 / w as f64);
            let oval = ((r - 0.5).powi(2) / 0.16 + (c - 0.5).powi(2) / 0.1).min(1.0);
            170.0 * (1.0 - oval) + 40.0
        })
        .collect();
    (0..11)
        .map(|_| {
            let light = rng.random_range(0.6..1.1);
            let mut pixels: Vec<f64> = base.iter().map(|v| v * light).collect();
            // a small "expression" patch
            let (r0, c0) = (rng.random_range(0..h - 4), rng.random_range(0..w - 4));
            for r in r0..r0 + 4 {
                for c in c0..c0 + 4 {
                    pixels[r * w + c] = rng.random_range(0.0..255.0);
                }
            }
            GrayImage {
                height: h,
                width: w,
                pixels,
            }
        })
        .collect()
}

fn noise_images(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Vec<GrayImage> {
    (0..11)
        .map(|_| GrayImage {
            height: h,
            width: w,
            pixels: (0..h * w)
                .map(|_| rng.random_range(0.0..256.0f64).floor())
                .collect(),
        })
        .collect()
}

fn faces() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let stacks = [
        ("face-like 60x48", face_like(&mut rng, 60, 48)),
        ("uniform noise 32x40", noise_images(&mut rng, 32, 40)),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, images) in stacks {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("in");
        std::fs::create_dir(&src).unwrap();
        write_stack(&src, &images);
        let args = FacesArgs {
            images: src,
            method: Method::Accaltproj,
            network: NetworkArgs {
                params: None,
                beta: None,
                gamma: None,
                layers: None,
                upsilon: None,
                shrinkage: None,
            },
            solver: SolverArgs {
                epsilon: solver::DEFAULT_EPSILON,
                max_iters: solver::DEFAULT_MAX_ITERS,
            },
            out: dir.path().join("out"),
        };
        commands::faces(&args).unwrap();
        let l = io::load_matrix(args.out.join("L.bin"), io::MatrixFormat::Binary).unwrap();
        let sv = linalg::singular_values(&l, 2).unwrap();
        let ok_rank = sv[1] <= 1e-8 * sv[0];
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(args.out.join("faces.json")).unwrap())
                .unwrap();
        let eps_m = report["eps_m"].as_f64().unwrap();
        let previews = std::fs::read_dir(args.out.join("low_rank"))
            .unwrap()
            .count();
        let ok = ok_rank && eps_m <= 1e-3 && previews == 11 && l.shape().1 == 11;
        pass &= ok;
        parts.push(format!(
            "{name}: L {}x{}, sigma2/sigma1 {:.1e} (tol 1e-8), eps_M {eps_m:.2e} (tol 1e-3), {previews} previews",
            l.nrows(),
            l.ncols(),
            sv[1] / sv[0]
        ));
    }
    (pass, parts.join("; "))
}

// ---------------------------------------------------------------- main

fn main() {
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |id: u32| only.as_ref().is_none_or(|o| o.contains(&id));
    let mut verdicts = Vec::new();

    if wanted(5) {
        verdicts.push(timed(5, "prox oracle", prox_oracle));
    }
    if wanted(6) {
        verdicts.push(timed(6, "tangent projection oracle", tangent_oracle));
    }
    if wanted(7) {
        verdicts.push(timed(7, "equivalence to the classical path", equivalence));
    }
    if wanted(8) {
        verdicts.push(timed(8, "face pipeline invariants", faces));
    }
    if wanted(1) {
        verdicts.push(timed(
            1,
            "classical solver convergence",
            classical_convergence,
        ));
    }
    if wanted(2) || wanted(3) || wanted(4) {
        let case1 = SynthCase::preset(1, 2024).unwrap();
        let (train, test) = synth::gen_dataset(&case1, 300, 180).unwrap();
        let firm = train_on(&train, Shrinkage::Firm);
        if wanted(2) {
            verdicts.push(timed(2, "trained unrolled beats AccAltProj", || {
                unrolled_beats_classical(&firm, &test)
            }));
        }
        if wanted(4) {
            verdicts.push(timed(4, "soft-threshold ablation", || {
                let soft = train_on(&train, Shrinkage::Soft);
                soft_ablation(&firm, &soft, &test)
            }));
        }
        if wanted(3) {
            let mut full = vec![(1, firm)];
            verdicts.push(timed(3, "learned parameter ranges", || {
                for (case, seed) in [(2, 2025), (3, 2026), (4, 2027)] {
                    let c = SynthCase::preset(case, seed).unwrap();
                    let (train, _) = synth::gen_dataset(&c, 180, 180).unwrap();
                    full.push((case, train_on(&train, Shrinkage::Firm)));
                }
                learned_ranges(&full)
            }));
        }
    }

    verdicts.sort_by_key(|v| v.id);
    println!("\nacceptance summary:");
    for v in &verdicts {
        println!(
            "  criterion {}: {}",
            v.id,
            if v.pass { "PASS" } else { "FAIL" }
        );
    }
    let failed = verdicts.iter().filter(|v| !v.pass).count();
    println!("{} passed, {failed} failed", verdicts.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
