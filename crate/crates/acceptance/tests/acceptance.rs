//! Acceptance criteria 1–10. Run with `cargo test --test acceptance`; pass
//! criterion numbers after `--` to run a subset.

use diamond_polymer::disorder::{DisorderField, DisorderSpec, Placement};
use diamond_polymer::fluctuation::{self, PoolPlan};
use diamond_polymer::lattice::SubgraphAddress;
use diamond_polymer::limitlaw::{self, LeafLaw, LeafVariance, LimitLawSampler, SamplingMethod};
use diamond_polymer::polymer::{self, WEdgeStream, WStream};
use diamond_polymer::rgflow::{self, BeqVariant, Precision};
use diamond_polymer::stats::{self, Moments};
use diamond_polymer::{population, rng, LatticeParams};
use diamond_polymer_acceptance::{selected, Criterion};
use rand::Rng;
use rayon::prelude::*;
use std::time::Duration;

const MASTER: u64 = 0x5eed_2026;
const SHAPES: [(u32, u32); 3] = [(2, 2), (2, 3), (3, 2)];

fn p(b: u32, s: u32) -> LatticeParams {
    LatticeParams::new(b, s).unwrap()
}

fn gauss() -> DisorderSpec {
    DisorderSpec::StandardGaussian
}

fn seed(id: u64, sub: u64) -> u64 {
    rng::derive_seed(rng::derive_seed(MASTER, id), sub)
}

fn secs(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

fn sci(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn nonincreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] <= w[0])
}

fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

fn c1() -> Criterion {
    let mut c = Criterion::start(1, "oracle equivalence: recursion vs enumeration", secs(10));
    for (b, s) in SHAPES {
        let params = p(b, s);
        let mut g = rng::replicate(seed(1, (b * 10 + s) as u64), 0);
        let mut worst = 0.0f64;
        for i in 0..200u64 {
            let n = 1 + (i % 2) as usize;
            let beta = g.random_range(0.0..1.5);
            let f = DisorderField::new(params, n, g.random(), Placement::Vertices, gauss()).unwrap();
            let r = polymer::w_recursive(&f, beta, &SubgraphAddress::root(n)).unwrap();
            let e = polymer::w_enumerate(&f, beta, diamond_polymer::lattice::DEFAULT_PATH_CAP).unwrap();
            worst = worst.max((r - e).abs());
        }
        c.check(format!("({b},{s}) 200 instances"), worst <= 1e-12, format!("max |recursive − enumerated| = {worst:.2e}"));
    }
    c.finish()
}

fn c2() -> Criterion {
    let mut c = Criterion::start(2, "variance recursion vs Monte Carlo", None);
    let betas = [0.2, 0.5];
    let reps = 100_000u64;
    for (b, s) in SHAPES {
        let params = p(b, s);
        let stream = WStream::new(params, gauss(), betas).unwrap();
        for n in [4usize, 6, 8] {
            let base = seed(2, (b * 1000 + s * 100) as u64 + n as u64);
            let samples: Vec<[f64; 2]> = (0..reps).into_par_iter().map(|i| stream.sample_exact(n, &mut rng::replicate(base, i))).collect();
            for (k, &beta) in betas.iter().enumerate() {
                let m = Moments::from_slice(&samples.iter().map(|x| x[k]).collect::<Vec<_>>());
                let sigma = rgflow::sigma_recursion(&params, &gauss(), beta, n).unwrap().values.get(n).copied().unwrap_or(f64::INFINITY);
                let z = (m.variance() - sigma) / m.se_variance();
                c.check(
                    format!("({b},{s}) β={beta} n={n}"),
                    z.abs() <= 4.0,
                    format!("MC var {:.6e} ± {:.2e} vs σ_n {:.6e} (z = {z:.2})", m.variance(), m.se_variance(), sigma),
                );
            }
        }
    }
    c.finish()
}

fn c3() -> Criterion {
    let mut c = Criterion::start(3, "b<s variance limit (2,3), β̂=0.8", secs(1));
    let params = p(2, 3);
    let beta_hat = 0.8;
    let target = rgflow::variance_limit_bls_target(&params, beta_hat, 1e-15).unwrap();
    let grid = [8usize, 12, 16, 20];
    let gaps: Vec<f64> = grid.iter().map(|&n| (rgflow::variance_limit_bls(&params, &gauss(), beta_hat, n).unwrap() - target).abs()).collect();
    c.note(format!("𝔳(β̂²(s−1)/(s−b)) = {target:.6e}"));
    c.check("gap decreases over n = 8,12,16,20", strictly_decreasing(&gaps), format!("gaps {}", sci(&gaps)));
    c.check("gap < 1e-3 at n = 20", gaps[3] < 1e-3, format!("{:.4e}", gaps[3]));
    let mut worst = 0.0f64;
    for i in 0..=190 {
        let x = 0.1 + 0.01 * i as f64;
        let lhs = rgflow::limiting_variance(&params, 1.5 * x, 1e-15).unwrap();
        let rhs = rgflow::mhat(&params, rgflow::limiting_variance(&params, x, 1e-15).unwrap());
        worst = worst.max((lhs - rhs).abs() / rhs.abs().max(1.0));
    }
    c.check("𝔳((s/b)x) = M̂(𝔳(x)) on [0.1, 2]", worst <= 1e-8, format!("max relative deviation {worst:.2e}"));
    c.finish()
}

fn c4() -> Criterion {
    let mut c = Criterion::start(4, "limit-law properties (2,3)", secs(600));
    let params = p(2, 3);
    let samples = 100_000u64;
    for (t, r) in [0.5, 1.0].into_iter().enumerate() {
        let sampler = LimitLawSampler::new(params, r, 5, LeafLaw::ExpGaussian, LeafVariance::Matched).unwrap();
        let base = seed(4, t as u64);
        let xs: Vec<f64> = (0..samples).into_par_iter().map(|i| sampler.sample(&mut rng::replicate(base, i))).collect();
        let m = Moments::from_slice(&xs);
        let v = rgflow::limiting_variance(&params, r, 1e-15).unwrap();
        let zm = (m.mean() - 1.0) / m.se_mean();
        let zv = (m.variance() - v) / m.se_variance();
        c.check(format!("mean of L_{r}"), zm.abs() <= 4.0, format!("{:.5} ± {:.2e} (z = {zm:.2})", m.mean(), m.se_mean()));
        c.check(format!("variance of L_{r}"), zv.abs() <= 4.0, format!("{:.5} ± {:.2e} vs 𝔳(r) = {v:.5} (z = {zv:.2})", m.variance(), m.se_variance()));
    }
    let fixed_point = |r: f64, depth: usize, label: u64, runs: u64| -> Vec<limitlaw::FixedPointReport> {
        (0..runs)
            .into_par_iter()
            .map(|i| {
                let mut g = rng::replicate(seed(4, label), i);
                limitlaw::fixed_point_test(&params, r, depth, samples as usize, LeafLaw::ExpGaussian, LeafVariance::Matched, SamplingMethod::Direct, 0.01, 0, &mut g).unwrap()
            })
            .collect()
    };
    let describe = |runs: &[limitlaw::FixedPointReport]| runs.iter().map(|r| format!("{:.4}/{:.4}", r.ks.statistic, r.ks.critical)).collect::<Vec<_>>().join(", ");
    let runs = fixed_point(0.5, 5, 10, 5);
    let passed = runs.iter().filter(|r| r.ks.passes()).count();
    c.check("fixed-point KS at 1%, r = 0.5, depth 5", passed >= 4, format!("{passed}/5 pass (D/critical: {})", describe(&runs)));
    c.note(format!("r = 1, depth 4 (not required): D/critical {}", describe(&fixed_point(1.0, 4, 11, 1))));
    let r = 1e-4;
    let mut g = rng::replicate(seed(4, 20), 0);
    let norm = limitlaw::small_r_normality(&params, r, limitlaw::default_depth(&params, r), samples as usize, 0.01, &mut g).unwrap();
    c.check(
        "(X_r − 1)/√r ≈ 𝒩(0,1) at r = 1e-4",
        norm.ks.passes(),
        format!("D = {:.4} (critical {:.4}), skewness {:.3}", norm.ks.statistic, norm.ks.critical, norm.skewness),
    );
    let mut g = rng::replicate(seed(4, 30), 0);
    for row in limitlaw::strong_disorder_decay(&params, &[4.0, 9.0], 6, 20_000, &mut g).unwrap() {
        c.check(
            format!("𝔼[X_r^(1/2)] bound at r = {}", row.r),
            row.mean_sqrt <= row.bound + 4.0 * row.se,
            format!("{:.4} ± {:.4} vs e^((1−√r)/2) = {:.4}", row.mean_sqrt, row.se, row.bound),
        );
    }
    c.finish()
}

fn c5() -> Criterion {
    let mut c = Criterion::start(5, "b=s subcritical CLT, b=2, β̂=2", secs(1800));
    let params = p(2, 2);
    let beta_hat = 2.0;
    let target = 2.0 * 1f64.tan();
    let m3 = rgflow::beq_final(&params, &gauss(), beta_hat, 1000, BeqVariant::Exact, Precision::DoubleDouble).unwrap();
    let m4 = rgflow::beq_final(&params, &gauss(), beta_hat, 10_000, BeqVariant::Exact, Precision::DoubleDouble).unwrap();
    let rel = (m4 - target).abs() / target;
    c.check("M_n^n(0) within 1% of 2 tan 1 at n = 1e4", rel < 0.01, format!("{m4:.6} vs {target:.6} (relative {rel:.2e})"));
    let ratio = (m3 - target).abs() / (m4 - target).abs();
    c.check("gap shrinks ≈ ×10 from n = 1e3 to 1e4", (8.0..=12.5).contains(&ratio), format!("ratio {ratio:.3}"));
    let plan = PoolPlan { pool_size: 1_000_000, batches: 5 };
    let rep = fluctuation::clt_experiment_beq(&params, &gauss(), beta_hat, 512, plan, 10_000, 0.01, seed(5, 0)).unwrap();
    c.check(
        "MC variance at n = 512 vs finite-n flow",
        rep.variance.within(rep.flow_variance, 4.0),
        format!("{:.5} ± {:.5} vs M_n^n(0) = {:.5}", rep.variance.value, rep.variance.se, rep.flow_variance),
    );
    c.note(format!("skewness {:.4} ± {:.4}, kurtosis {:.4} ± {:.4}", rep.skewness.value, rep.skewness.se, rep.kurtosis.value, rep.kurtosis.se));
    let passed = rep.ks.iter().filter(|k| k.passes()).count();
    let ds: Vec<String> = rep.ks.iter().map(|k| format!("{:.4}/{:.4}", k.statistic, k.critical)).collect();
    c.check("KS to 𝒩(0, υ) at 1%, 1e4 samples", passed >= 4, format!("{passed}/5 pass (D/critical: {})", ds.join(", ")));
    c.finish()
}

fn c6() -> Criterion {
    let mut c = Criterion::start(6, "critical point, b=2, β̂=π", secs(3600));
    let params = p(2, 2);
    let grid = [10_000usize, 100_000, 1_000_000];
    let vals: Vec<f64> = grid.iter().map(|&n| fluctuation::critical_scaled_flow(&params, &gauss(), n, BeqVariant::Cubic).unwrap()).collect();
    let errs: Vec<f64> = vals.iter().map(|v| (v - 2.0).abs() / 2.0).collect();
    c.check("(log n / n)·M̃_n^n(0) within 20% of 2 at n = 1e6", errs[2] <= 0.2, format!("values {vals:.4?}"));
    c.check("monotone improvement over 1e4, 1e5, 1e6", strictly_decreasing(&errs), format!("relative errors {errs:.4?}"));
    let plan = PoolPlan { pool_size: 100_000, batches: 5 };
    let rep = fluctuation::critical_experiment(&params, &gauss(), &[256, 1024, 4096], plan, seed(6, 0)).unwrap();
    let mc: Vec<f64> = rep.rows.iter().map(|r| r.variance.value).collect();
    for row in &rep.rows {
        c.check(
            format!("n = {} within 4 SE of the finite-n flow", row.n),
            row.variance.within(row.reference, 4.0),
            format!("{:.4} ± {:.4} vs {:.4}", row.variance.value, row.variance.se, row.reference),
        );
    }
    c.check("MC variance increasing toward 2", mc.windows(2).all(|w| w[1] > w[0]) && mc.iter().all(|&v| v <= 2.0), format!("{mc:.4?}"));
    c.note(format!("distance to 2 nonincreasing: {}", nonincreasing(&mc.iter().map(|v| (v - 2.0).abs()).collect::<Vec<_>>())));
    c.finish()
}

fn c7() -> Criterion {
    let mut c = Criterion::start(7, "trichotomy and explosion, b=2", secs(60));
    let params = p(2, 2);
    let grid = [1000usize, 10_000, 100_000];
    for beta_hat in [1.0, 2.0, 3.0] {
        let ms: Vec<f64> = grid.iter().map(|&n| rgflow::beq_final(&params, &gauss(), beta_hat, n, BeqVariant::Exact, Precision::Double).unwrap()).collect();
        let vars: Vec<f64> = ms.iter().zip(&grid).map(|(m, &n)| m / n as f64).collect();
        let limit = rgflow::upsilon(2, beta_hat).unwrap();
        let bounded = ms.iter().all(|&m| m.is_finite() && m <= 1.05 * limit);
        c.check(
            format!("β̂ = {beta_hat}: bounded, Var → 0"),
            bounded && strictly_decreasing(&vars),
            format!("n·Var {ms:.4?} (υ = {limit:.4}), Var {}", sci(&vars)),
        );
    }
    let kappa = rgflow::kappa(2);
    let beta_hat = 1.2 * kappa;
    for n in grid {
        let w = rgflow::explosion_window(&params, &gauss(), beta_hat, n, 1e-2, 1e2).unwrap();
        let ratio = w.blow_up_index as f64 / n as f64;
        let rel = (ratio - kappa / beta_hat).abs() / (kappa / beta_hat);
        c.check(format!("blow-up index / n at n = {n}"), rel <= 0.02, format!("{ratio:.5} vs κ/β̂ = {:.5} (relative {rel:.2e})", kappa / beta_hat));
    }
    let wgrid = [1000usize, 3000, 10_000, 30_000, 100_000];
    let windows: Vec<_> = wgrid.iter().map(|&n| rgflow::explosion_window(&params, &gauss(), beta_hat, n, 1e-2, 1e2).unwrap()).collect();
    let logs: Vec<f64> = wgrid.iter().map(|&n| (n as f64).ln()).collect();
    let up: Vec<f64> = windows.iter().map(|w| w.offsets().1).collect();
    let blow: Vec<f64> = windows.iter().map(|w| w.offsets().2).collect();
    let down: Vec<f64> = windows.iter().map(|w| w.offsets().0).collect();
    for (name, ys) in [("upper window edge", &up), ("blow-up index", &blow)] {
        let fit = stats::linear_fit(&logs, ys);
        c.check(
            format!("{name} offset vs log n"),
            fit.slope > 0.0 && fit.r_squared > 0.9,
            format!("offsets {ys:.2?}, slope {:.3}, R² {:.3}", fit.slope, fit.r_squared),
        );
    }
    c.note(format!("lower window edge offsets {down:.2?}"));
    c.finish()
}

fn c8() -> Criterion {
    let mut c = Criterion::start(8, "b>s limit (3,2), β_n = 1/n", secs(300));
    let params = p(3, 2);
    let sums: Vec<f64> = (1..=30).map(|m| rgflow::noise_sum_variance(&params, m)).collect();
    let gap30 = (sums[29] - rgflow::affine_fixed_point(&params)).abs();
    c.check("noise-sum variance increasing in m", sums.windows(2).all(|w| w[1] > w[0]), format!("m=10: {:.8}, m=20: {:.8}, m=30: {:.8}", sums[9], sums[19], sums[29]));
    c.check("noise-sum variance within 1e-6 of (s−1)/(b−s) at m ≤ 30", gap30 <= 1e-6, format!("|S_30 − 1| = {gap30:.3e}"));
    let n = 10;
    let rep = fluctuation::bgs_limit_experiment(&params, &DisorderSpec::Rademacher, 1.0 / n as f64, n, 1000, 5, seed(8, 0)).unwrap();
    let frac = rep.mean_square_difference.value / rep.noise_variance_exact;
    c.check(
        "coupled mean-square difference < 5% of the variance at n = 10",
        frac < 0.05,
        format!(
            "E[(F − L)²] = {:.4e} ± {:.1e}, noise variance {:.4} (sample {:.4}), fraction {frac:.4}",
            rep.mean_square_difference.value, rep.mean_square_difference.se, rep.noise_variance_exact, rep.noise_variance
        ),
    );
    let ngrid = [100usize, 1000, 10_000];
    let betas: Vec<f64> = ngrid.iter().map(|&n| 1.0 / n as f64).collect();
    let gaps: Vec<f64> = ngrid.iter().zip(&betas).map(|(&n, &b)| rgflow::variance_flow_bgs(&params, &gauss(), b, n).unwrap().gap).collect();
    let fitted = gaps[0] / betas[0];
    let fit = stats::linear_fit(&betas.iter().map(|b| b.ln()).collect::<Vec<_>>(), &gaps.iter().map(|g| g.ln()).collect::<Vec<_>>());
    c.check(
        "|M_n^n(0) − M̂_n^n(0)| ≤ 2C·β_n, C fitted at n = 100",
        gaps.iter().zip(&betas).all(|(g, b)| *g <= 2.0 * fitted * b),
        format!("gaps {}, C = {fitted:.4}, log-log slope {:.3}", sci(&gaps), fit.slope),
    );
    c.finish()
}

fn c9() -> Criterion {
    let mut c = Criterion::start(9, "edge model, b=s=2", secs(600));
    let params = p(2, 2);
    for beta in [0.1, 0.25, 0.5, 1.0] {
        let t = rgflow::edge_second_moment_flow(&params, &gauss(), beta, 100_000).unwrap();
        c.check(
            format!("second moment diverges at β = {beta}"),
            t.values[0] > 1.0 && t.blow_up_index.is_some(),
            format!("m_0 = {:.5}, blow-up at step {:?}", t.values[0], t.blow_up_index),
        );
    }
    let beta = 0.3;
    let stream = WEdgeStream::new(params, gauss(), beta).unwrap();
    let flow = rgflow::edge_second_moment_flow(&params, &gauss(), beta, 6).unwrap();
    for n in 1..=6usize {
        let base = seed(9, n as u64);
        let sq: Vec<f64> = (0..100_000u64)
            .into_par_iter()
            .map(|i| population::sample_tree(&stream, &params, n, &mut rng::replicate(base, i)).powi(2))
            .collect();
        let m = Moments::from_slice(&sq);
        let z = (m.mean() - flow.values[n]) / m.se_mean();
        c.check(format!("MC 𝔼[W²] at n = {n}"), z.abs() <= 4.0, format!("{:.5} ± {:.1e} vs {:.5} (z = {z:.2})", m.mean(), m.se_mean(), flow.values[n]));
    }
    let target = 1.0 / (0.25 - 1.0 / std::f64::consts::PI.powi(2));
    let (v, blow) = rgflow::edge_scaled_variance(&params, &gauss(), 2.0, 10_000, Precision::DoubleDouble).unwrap();
    let rel = (v - target).abs() / target;
    c.check(
        "n·Var at β̂ = 2, n = 1e4 within 5% of (1/4 − 1/π²)^(−1)",
        blow.is_none() && rel <= 0.05,
        format!("{v:.4e} vs {target:.4} (blow-up at step {blow:?})"),
    );
    c.finish()
}

fn c10() -> Criterion {
    let mut c = Criterion::start(10, "universality: gaussian vs shifted-rademacher leaves", secs(600));
    let params = p(2, 3);
    let depth = 10;
    let pool = 4_000_000;
    let take = 100_000;
    let gauss_leaf = LimitLawSampler::new(params, 1.0, depth, LeafLaw::Gaussian, LeafVariance::Nominal).unwrap();
    let rad_leaf = LimitLawSampler::new(params, 1.0, depth, LeafLaw::ShiftedRademacher, LeafVariance::Nominal).unwrap();
    let mut passed = 0;
    let mut ds = Vec::new();
    for run in 0..5u64 {
        let mut g = rng::replicate(seed(10, run), 0);
        let mut a = gauss_leaf.sample_pool(pool, &mut g);
        let mut b = rad_leaf.sample_pool(pool, &mut g);
        a.truncate(take);
        b.truncate(take);
        let ks = stats::ks_two_sample(&a, &b, 0.01);
        passed += ks.passes() as usize;
        ds.push(format!("{:.4}/{:.4}", ks.statistic, ks.critical));
    }
    c.check("two-sample KS at 1%, depth 10, x = 1", passed >= 4, format!("{passed}/5 pass (D/critical: {})", ds.join(", ")));
    c.finish()
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let table: [fn() -> Criterion; 10] = [c1, c2, c3, c4, c5, c6, c7, c8, c9, c10];
    let reports: Vec<Criterion> = selected(&args, 10).into_iter().map(|i| table[i as usize - 1]()).collect();
    println!("\nacceptance summary");
    for r in &reports {
        println!("{}", r.verdict());
    }
    let failed = reports.iter().filter(|r| !r.passed()).count();
    println!("{} of {} criteria passed", reports.len() - failed, reports.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
