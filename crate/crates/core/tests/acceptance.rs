//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hklab::config::ExperimentConfig;
use hklab::counterexample::{
    build_counterexample_field, cross_jump_exponent, due_violation_diagnostic, exponent_report,
    regime_gap_label, synthesize_config, synthesize_config_with_xi,
};
use hklab::form::{fk_nash_consistency, BallSpec, FkParams};
use hklab::kernel::{tj_check, Triplet};
use hklab::runner::{run_config, RunOptions};
use hklab::semigroup::{
    heat_kernel, log_grid, meyer_check, meyer_decomposition, recursion_limit, se_from_lre_check,
    survival, truncation_l2_check,
};
use hklab::space::{cantor_dimension, dyadic_radii, fit_vd_exponent};
use hklab::{FiniteMMSpace, JumpKernel, ScaleField, SpectralForm, SupportPattern, Verdict};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

struct Setup {
    label: String,
    space: FiniteMMSpace,
    scale: ScaleField,
    kernel: JumpKernel,
}

/// Random space, exponent table and kernel; at most `max_points` atoms.
fn random_setup(rng: &mut ChaCha8Rng, kind: usize, max_points: usize) -> Setup {
    let table = |rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64| {
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
        ScaleField::from_table(values, lo, hi, 1.0).unwrap()
    };
    match kind % 5 {
        0 => {
            let n = rng.gen_range(5..=40.min(max_points));
            let coords: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen(), rng.gen()]).collect();
            let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
            let space = FiniteMMSpace::custom(coords, weights).unwrap();
            let mut entries = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    if rng.gen_bool(0.6) {
                        entries.push(Triplet {
                            i,
                            j,
                            value: rng.gen_range(0.0..2.0),
                        });
                    }
                }
            }
            let kernel = JumpKernel::from_triplets(n, &entries, SupportPattern::Full).unwrap();
            let scale = table(rng, n, 0.5, 1.8);
            Setup {
                label: format!("custom n={n}"),
                space,
                scale,
                kernel,
            }
        }
        1 => {
            let side = rng.gen_range(10..=60.min(max_points));
            let space = FiniteMMSpace::grid(1, side, max_points).unwrap();
            let scale = ScaleField::constant(side, rng.gen_range(0.4..1.9), 1.0).unwrap();
            let kernel = JumpKernel::stable_like(&space, &scale, rng.gen_range(0.5..2.0)).unwrap();
            Setup {
                label: format!("grid 1x{side} stable-like"),
                space,
                scale,
                kernel,
            }
        }
        2 => {
            let side = rng.gen_range(4..=(max_points as f64).sqrt().min(14.0) as usize);
            let space = FiniteMMSpace::grid(2, side, max_points).unwrap();
            let scale = table(rng, space.len(), 0.6, 1.6);
            let kernel = JumpKernel::stable_like(&space, &scale, rng.gen_range(0.5..2.0)).unwrap();
            Setup {
                label: format!("grid {side}^2 stable-like"),
                space,
                scale,
                kernel,
            }
        }
        3 => {
            let xi = [1.0 / 3.0, 0.5, 0.25][rng.gen_range(0..3)];
            let axes = rng.gen_range(1..=2);
            let level = ((max_points as f64).log2() / axes as f64).floor().min(6.0) as u32;
            let level = rng.gen_range(2..=level.max(2));
            let space = FiniteMMSpace::cantor_product(xi, axes, level, max_points).unwrap();
            let scale = table(rng, space.len(), 0.5, 1.9);
            let kernel = JumpKernel::cantor_axis(&space, &scale).unwrap();
            Setup {
                label: format!("cantor xi={xi:.3} n={axes} level {level}"),
                space,
                scale,
                kernel,
            }
        }
        _ => {
            let side = rng.gen_range(4..=(max_points as f64).sqrt().min(12.0) as usize);
            let space = FiniteMMSpace::grid(2, side, max_points).unwrap();
            let scale = table(rng, space.len(), 0.7, 1.5);
            let kernel = JumpKernel::cylindrical(&space, &scale).unwrap();
            Setup {
                label: format!("grid {side}^2 cylindrical"),
                space,
                scale,
                kernel,
            }
        }
    }
}

/// `exp(-t L)` by scaling and squaring of a Taylor series, independent of
/// the spectral route.
fn expm_neg(l: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let n = l.nrows();
    let a = l * (-t);
    let norm = a.abs().row_sum().max();
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let a = a / 2f64.powi(squarings);
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..=24 {
        term = &term * &a / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

fn within(budget: Duration, start: Instant) -> Result<Duration, String> {
    let elapsed = start.elapsed();
    if elapsed <= budget {
        Ok(elapsed)
    } else {
        Err(format!("runtime {elapsed:.2?} exceeds {budget:?}"))
    }
}

fn two_point_oracle() -> Outcome {
    let start = Instant::now();
    let space = FiniteMMSpace::two_point(1.0).map_err(|e| e.to_string())?;
    let kernel = JumpKernel::constant(2, 1.0).map_err(|e| e.to_string())?;
    let form = SpectralForm::assemble(&space, &kernel).map_err(|e| e.to_string())?;
    let part = form.part_on(&space, &[0]).map_err(|e| e.to_string())?;
    let mut worst = 0.0_f64;
    for t in [0.1, 1.0, 10.0] {
        let p = heat_kernel(&form, t).map_err(|e| e.to_string())?;
        let e = (-2.0 * t).exp();
        worst = worst
            .max((p[(0, 0)] - (1.0 + e)).abs())
            .max((p[(0, 1)] - (1.0 - e)).abs())
            .max((p[(1, 1)] - (1.0 + e)).abs());
        worst = worst.max((survival(&part, t)[0] - (-t).exp()).abs());
    }
    let elapsed = within(Duration::from_secs(1), start)?;
    if worst <= 1e-12 {
        Ok(format!("max error {worst:.2e} in {elapsed:.2?}"))
    } else {
        Err(format!("max error {worst:.2e}"))
    }
}

fn semigroup_invariants() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = [0.0_f64; 6];
    for i in 0..10 {
        let s = random_setup(&mut rng, i, 400);
        let form = SpectralForm::assemble(&s.space, &s.kernel).map_err(|e| e.to_string())?;
        let w = s.space.weights();
        let n = w.len();
        let lambda = form.eigenvalues()[n - 1].max(1e-12);
        for (k, t) in [0.1 / lambda, 0.01, 0.5, 5.0].into_iter().enumerate() {
            let p = heat_kernel(&form, t).map_err(|e| e.to_string())?;
            let q = heat_kernel(&form, 0.5 * t).map_err(|e| e.to_string())?;
            let pq = heat_kernel(&form, 1.5 * t).map_err(|e| e.to_string())?;
            let scale = p.amax().max(1.0);
            let pm = DMatrix::from_fn(n, n, |x, y| p[(x, y)] * w[y]);
            let ck = (&pm * &q - &pq).amax() / pq.amax().max(1.0);
            let mut asym = 0.0_f64;
            let mut excess = f64::NEG_INFINITY;
            let mut min_prob = f64::INFINITY;
            for x in 0..n {
                excess = excess.max(pm.row(x).sum() - 1.0);
                for y in 0..n {
                    asym = asym.max((p[(x, y)] - p[(y, x)]).abs() / scale);
                    min_prob = min_prob.min(pm[(x, y)]);
                }
            }
            let p0 = heat_kernel(&form, 0.0).map_err(|e| e.to_string())?;
            let identity = (0..n)
                .flat_map(|x| (0..n).map(move |y| (x, y)))
                .map(|(x, y)| (p0[(x, y)] * w[y] - if x == y { 1.0 } else { 0.0 }).abs())
                .fold(0.0, f64::max);
            worst[0] = worst[0].max(asym);
            worst[1] = worst[1].max(excess);
            worst[2] = worst[2].max(ck);
            worst[3] = worst[3].max(-min_prob);
            worst[4] = worst[4].max(identity);
            if k == 2 {
                let l = form.generator();
                let reference = expm_neg(l, t);
                worst[5] = worst[5].max((&pm - reference).amax());
            }
        }
    }
    let elapsed = within(Duration::from_secs(60), start)?;
    let detail = format!(
        "asymmetry {:.1e}, mass excess {:.1e}, CK {:.1e}, negativity {:.1e}, t=0 {:.1e}, vs expm {:.1e} in {elapsed:.2?}",
        worst[0], worst[1], worst[2], worst[3], worst[4], worst[5]
    );
    let ok = worst[0] <= 1e-10
        && worst[1] <= 1e-10
        && worst[2] <= 1e-8
        && worst[3] <= 1e-10
        && worst[4] <= 1e-10
        && worst[5] <= 1e-8;
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn cantor_volume_exponent() -> Outcome {
    let start = Instant::now();
    let c = FiniteMMSpace::cantor_product(1.0 / 3.0, 1, 8, 1 << 12).map_err(|e| e.to_string())?;
    let a = fit_vd_exponent(&c, &dyadic_radii(1, 10))
        .map_err(|e| e.to_string())?
        .alpha_hat;
    let target = 2f64.ln() / 3f64.ln();
    let p = FiniteMMSpace::cantor_product(0.5, 2, 6, 1 << 12).map_err(|e| e.to_string())?;
    let b = fit_vd_exponent(&p, &dyadic_radii(1, 10))
        .map_err(|e| e.to_string())?
        .alpha_hat;
    let elapsed = within(Duration::from_secs(30), start)?;
    let (ea, eb) = ((a - target).abs() / target, (b - 1.0).abs());
    let detail = format!(
        "xi=1/3: {a:.5} vs {target:.5} ({:.2}%), xi=1/2 n=2: {b:.5} vs 1 ({:.2}%) in {elapsed:.2?}",
        100.0 * ea,
        100.0 * eb
    );
    if ea < 0.05 && eb < 0.05 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn tj_stability() -> Outcome {
    let start = Instant::now();
    let radii = dyadic_radii(1, 7);
    let mut constants = Vec::new();
    for level in 5..=8 {
        let space = FiniteMMSpace::cantor_product(1.0 / 3.0, 1, level, 1 << 12)
            .map_err(|e| e.to_string())?;
        let scale = ScaleField::constant(space.len(), 0.8, 1.0).map_err(|e| e.to_string())?;
        let kernel = JumpKernel::cantor_axis(&space, &scale).map_err(|e| e.to_string())?;
        let rep =
            tj_check(&kernel, &space, &scale, &radii, f64::INFINITY).map_err(|e| e.to_string())?;
        constants.push(rep.best_constant);
    }
    let elapsed = within(Duration::from_secs(120), start)?;
    let lo = constants.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = constants.iter().copied().fold(0.0, f64::max);
    let variation = (hi - lo) / lo;
    let detail = format!(
        "constants {constants:.4?}, variation {:.2}% in {elapsed:.2?}",
        100.0 * variation
    );
    if hi.is_finite() && variation < 0.2 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn truncation_l2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = f64::INFINITY;
    let mut samples = 0;
    for i in 0..10 {
        let s = random_setup(&mut rng, i, 300);
        let full = SpectralForm::assemble(&s.space, &s.kernel).map_err(|e| e.to_string())?;
        for frac in [0.15, 0.3, 0.6] {
            let rho = frac * s.space.diameter();
            let (near, far) = s
                .kernel
                .truncate(&s.space, rho)
                .map_err(|e| e.to_string())?;
            let near_form = SpectralForm::assemble(&s.space, &near).map_err(|e| e.to_string())?;
            let rep = truncation_l2_check(&full, &near_form, &far, &s.space)
                .map_err(|e| e.to_string())?;
            worst = worst.min(rep.extra("margin").unwrap());
            samples += 1;
        }
    }
    let detail = format!("{samples} (config, radius) pairs, min margin {worst:.3e}");
    if worst >= -1e-9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn truncation_semigroup() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let configs = [
        r#""space": {"kind": "grid", "dim": 1, "side": 40},
           "scale": {"beta": {"kind": "constant", "value": 1.2}},
           "kernel": {"builder": {"kind": "stable_like", "c": 1.0}, "rho": 0.2}"#,
        r#""space": {"kind": "grid", "dim": 2, "side": 8},
           "scale": {"beta": {"kind": "constant", "value": 0.9}},
           "kernel": {"builder": {"kind": "cylindrical"}, "rho": 0.3}"#,
        r#""space": {"kind": "cantor", "xi": 0.3333333333333333, "axes": 2, "level": 3},
           "scale": {"beta": {"kind": "counterexample", "epsilon": 4.0, "xi": 0.3333333333333333}, "t0": 10.0},
           "kernel": {"builder": {"kind": "cantor_axis"}, "rho": 0.25}"#,
        r#""space": {"kind": "cantor", "xi": 0.5, "axes": 1, "level": 6},
           "scale": {"beta": {"kind": "constant", "value": 0.7}},
           "kernel": {"builder": {"kind": "cantor_axis"}, "rho": 0.1}"#,
        r#""space": {"kind": "custom", "coords": [[0.0], [0.1], [0.35], [0.5], [0.8], [1.0]],
                     "weights": [1.0, 0.5, 2.0, 1.0, 0.25, 1.5]},
           "scale": {"beta": {"kind": "constant", "value": 1.0}},
           "kernel": {"builder": {"kind": "constant", "value": 1.0}, "rho": 0.3}"#,
    ];
    let mut worst = (f64::INFINITY, f64::INFINITY);
    for (i, body) in configs.iter().enumerate() {
        let text = format!(
            r#"{{{body}, "checks": [{{"name": "truncation_semigroup_check", "params": {{"centers": 3}}}}],
                 "output": {{"dir": "{}"}}, "seed": {i}}}"#,
            dir.path().join(i.to_string()).display()
        );
        let config = ExperimentConfig::from_json(&text).map_err(|e| e.to_string())?;
        let outcome = run_config(config, &RunOptions::default()).map_err(|e| e.to_string())?;
        let rep = &outcome.reports[0];
        worst.0 = worst.0.min(rep.extra("margin").unwrap());
        worst.1 = worst.1.min(rep.extra("nested_margin").unwrap());
    }
    let detail = format!(
        "5 configs, min margin {:.3e}, nested {:.3e}",
        worst.0, worst.1
    );
    if worst.0 >= -1e-9 && worst.1 >= -1e-9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn meyer() -> Outcome {
    let times = [0.2, 0.5, 1.0];
    let mut lines = Vec::new();
    let cantor =
        FiniteMMSpace::cantor_product(1.0 / 3.0, 2, 3, 1 << 12).map_err(|e| e.to_string())?;
    let cantor_scale = ScaleField::constant(cantor.len(), 0.9, 1.0).map_err(|e| e.to_string())?;
    let grid = FiniteMMSpace::grid(1, 150, 1 << 12).map_err(|e| e.to_string())?;
    let grid_scale = ScaleField::constant(grid.len(), 1.3, 1.0).map_err(|e| e.to_string())?;
    let cases = [
        (
            "cantor 64",
            JumpKernel::cantor_axis(&cantor, &cantor_scale).map_err(|e| e.to_string())?,
            &cantor,
            0.25,
        ),
        (
            "grid 150",
            JumpKernel::stable_like(&grid, &grid_scale, 1.0).map_err(|e| e.to_string())?,
            &grid,
            0.1,
        ),
    ];
    for (label, kernel, space, rho) in &cases {
        let full = SpectralForm::assemble(space, kernel).map_err(|e| e.to_string())?;
        let (near, far) = kernel.truncate(space, *rho).map_err(|e| e.to_string())?;
        let near_form = SpectralForm::assemble(space, &near).map_err(|e| e.to_string())?;
        let n = space.len();
        let domains: Vec<Vec<usize>> = [0, n / 2, n - 1]
            .iter()
            .map(|&c| space.ball_members(c, space.diameter() / 2.0))
            .collect();
        let rep = meyer_check(
            &full,
            &near_form,
            &far,
            space,
            &domains,
            &times,
            1e-6,
            1 << 14,
        )
        .map_err(|e| e.to_string())?;
        if rep.verdict != Verdict::Pass {
            return Err(format!(
                "{label}: verdict {:?}, worst {:.3e}",
                rep.verdict, rep.best_constant
            ));
        }
        lines.push(format!("{label} worst {:.1e}", rep.best_constant));

        let (near_all, far_none) = kernel
            .truncate(space, 2.0 * space.diameter())
            .map_err(|e| e.to_string())?;
        if !far_none.is_zero() {
            return Err(format!(
                "{label}: far kernel beyond the diameter is not zero"
            ));
        }
        let near_all_form = SpectralForm::assemble(space, &near_all).map_err(|e| e.to_string())?;
        let mut control = 0.0_f64;
        for d in &domains {
            for &t in &times {
                let a = full
                    .part_on(space, d)
                    .map_err(|e| e.to_string())?
                    .heat_matrix(t);
                let b = near_all_form
                    .part_on(space, d)
                    .map_err(|e| e.to_string())?
                    .heat_matrix(t);
                control = control.max((a - b).amax());
                let o = meyer_decomposition(
                    &full,
                    &near_all_form,
                    &far_none,
                    space,
                    d,
                    t,
                    1e-6,
                    1 << 14,
                )
                .map_err(|e| e.to_string())?;
                control = control.max(o.identity_residual);
            }
        }
        if control > 1e-12 {
            return Err(format!(
                "{label}: zero far kernel control differs by {control:.3e}"
            ));
        }
        lines.push(format!("control {control:.1e}"));
    }
    Ok(format!(
        "3 domains x t in {{0.2, 0.5, 1}}: {}",
        lines.join(", ")
    ))
}

fn fk_nash() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = (f64::INFINITY, f64::INFINITY);
    for i in 0..5 {
        let s = random_setup(&mut rng, i, 200);
        let form = SpectralForm::assemble(&s.space, &s.kernel).map_err(|e| e.to_string())?;
        let n = s.space.len();
        let balls: Vec<BallSpec> = [0, n / 3, n - 1]
            .iter()
            .map(|&c| BallSpec {
                center: c,
                radius: 0.6 * s.space.diameter(),
            })
            .collect();
        let rep = fk_nash_consistency(
            &form,
            &s.space,
            &s.scale,
            FkParams::new(0.5),
            &balls,
            &mut rng,
        )
        .map_err(|e| format!("{}: {e}", s.label))?;
        worst.0 = worst.0.min(rep.extra("forward_margin").unwrap());
        worst.1 = worst.1.min(rep.extra("backward_margin").unwrap());
        if rep.verdict != Verdict::Pass {
            return Err(format!("{}: verdict {:?}", s.label, rep.verdict));
        }
    }
    Ok(format!(
        "5 configs, GFK to Nash margin {:.3e}, Nash to GFK margin {:.3e}",
        worst.0, worst.1
    ))
}

fn se_from_lre() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = f64::INFINITY;
    let mut balls_seen = 0;
    for i in 0..5 {
        let s = random_setup(&mut rng, i, 200);
        let form = SpectralForm::assemble(&s.space, &s.kernel).map_err(|e| e.to_string())?;
        let n = s.space.len();
        let d = s.space.diameter();
        let balls: Vec<BallSpec> = [0, n / 2]
            .iter()
            .flat_map(|&c| {
                [0.3, 0.6, 1.1].map(|f| BallSpec {
                    center: c,
                    radius: f * d,
                })
            })
            .collect();
        balls_seen += balls.len();
        let rep = se_from_lre_check(&form, &s.space, &s.scale, 1.0, &balls, &[0.05, 0.25, 0.5])
            .map_err(|e| format!("{}: {e}", s.label))?;
        worst = worst.min(rep.extra("margin").unwrap_or(f64::INFINITY));
    }
    let detail = format!("{balls_seen} balls x 3 times, min margin {worst:.3e}");
    if worst >= -1e-9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn counterexample_arithmetic() -> Outcome {
    let start = Instant::now();
    let mut identity = 0.0_f64;
    let mut min_gap = f64::INFINITY;
    for eps in [0.5, 1.0, 2.0, 4.0, 8.0] {
        let c = synthesize_config(eps).map_err(|e| e.to_string())?;
        let na = c.n as f64 * c.alpha_xi;
        identity = identity.max((na / 2.0 - na / (2.0 * c.beta2) - (1.0 + eps)).abs());
        let gap = 1.0 + eps - c.alpha_xi - c.beta2;
        let report = exponent_report(&c).map_err(|e| e.to_string())?;
        if (report.gap - gap).abs() > 1e-12 {
            return Err(format!("eps={eps}: reported gap {} vs {gap}", report.gap));
        }
        min_gap = min_gap.min(gap);
    }
    let c = synthesize_config_with_xi(4.0, 1.0 / 3.0).map_err(|e| e.to_string())?;
    let alpha = 2f64.ln() / 3f64.ln();
    let beta2 = 1.0 / (1.0 - 10.0 / (32.0 * alpha));
    let gap = 5.0 - alpha - beta2;
    let elapsed = within(Duration::from_secs(1), start)?;
    let detail = format!(
        "identity {identity:.1e}, min gap {min_gap:.4}; eps=4 xi=1/3: n={}, beta2={:.4}, gap={:.3} in {elapsed:.2?}",
        c.n,
        c.beta2,
        1.0 + c.epsilon - c.alpha_xi - c.beta2
    );
    let ok = identity <= 1e-12
        && min_gap > 0.0
        && c.n == 32
        && (c.beta2 - beta2).abs() < 1e-12
        && (c.beta2 - 1.9814).abs() < 5e-5
        && ((1.0 + c.epsilon - c.alpha_xi - c.beta2) - gap).abs() < 1e-12
        && (gap - 2.388).abs() < 5e-4;
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn cross_jump() -> Outcome {
    let start = Instant::now();
    let config = synthesize_config_with_xi(4.0, 1.0 / 3.0).map_err(|e| e.to_string())?;
    let space =
        FiniteMMSpace::cantor_product(1.0 / 3.0, 2, 7, 1 << 14).map_err(|e| e.to_string())?;
    let field = build_counterexample_field(&config, &space, 1.0).map_err(|e| e.to_string())?;
    let kernel = JumpKernel::cantor_axis(&space, &field.scale).map_err(|e| e.to_string())?;
    let (slope, _) = cross_jump_exponent(&kernel, &space, &dyadic_radii(2, 10), 1.0)
        .map_err(|e| e.to_string())?;
    let target = 3.0 * cantor_dimension(1.0 / 3.0);
    let elapsed = within(Duration::from_secs(120), start)?;
    let rel = (slope - target).abs() / target;
    let detail = format!(
        "slope {slope:.4} vs {target:.4} ({:.2}%) in {elapsed:.2?}",
        100.0 * rel
    );
    if rel <= 0.1 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn recursion() -> Outcome {
    let mut worst = 0.0_f64;
    for p0 in [0.0, 10.0] {
        let p = recursion_limit(1.0, 0.5, 0.5, p0, 1e-14).map_err(|e| e.to_string())?;
        worst = worst.max((p - 4.0).abs());
    }
    if worst <= 1e-10 {
        Ok(format!(
            "limit 4 from p0 in {{0, 10}}, max error {worst:.1e}"
        ))
    } else {
        Err(format!("max error {worst:.3e}"))
    }
}

fn regime_gap() -> Outcome {
    let config = synthesize_config_with_xi(4.0, 1.0 / 3.0).map_err(|e| e.to_string())?;
    let label = regime_gap_label(&config, 2);
    if !label.contains("not desk-reproducible") || !label.contains(&config.n.to_string()) {
        return Err(format!("label lacks the regime gap statement: {label}"));
    }
    let space =
        FiniteMMSpace::cantor_product(1.0 / 3.0, 2, 4, 1 << 12).map_err(|e| e.to_string())?;
    let diag = due_violation_diagnostic(&config, &space, &log_grid(1e-4, 1e2, 25))
        .map_err(|e| e.to_string())?;
    if !matches!(
        diag.report.verdict,
        Verdict::Diagnostic | Verdict::Inconclusive
    ) {
        return Err(format!(
            "diagnostic claims a verdict: {:?}",
            diag.report.verdict
        ));
    }
    Ok(format!(
        "n = {} axes needs >= 2^({} * level) atoms; diagnostic verdict {:?} over {} times; label: {label}",
        config.n,
        config.n,
        diag.report.verdict,
        diag.series.rows.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 13] = [
        ("two-point heat kernel oracle", two_point_oracle),
        (
            "semigroup invariants on random configs",
            semigroup_invariants,
        ),
        ("Cantor volume exponent", cantor_volume_exponent),
        ("jump tail stability across levels", tj_stability),
        ("truncation L2 bound", truncation_l2),
        ("semigroup truncation bound", truncation_semigroup),
        ("Meyer comparison", meyer),
        ("Faber-Krahn and Nash consistency", fk_nash),
        ("survival from resolvent", se_from_lre),
        ("counterexample arithmetic", counterexample_arithmetic),
        ("cross-jump mass exponent", cross_jump),
        ("recursion fixed point", recursion),
        ("regime gap statement", regime_gap),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("criterion {:>2} PASS {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria pass",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
