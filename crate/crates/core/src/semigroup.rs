//! Heat kernels by spectral calculus and the semigroup-level checkers.
//!
//! `p(t,x,y) = sum_k exp(-t lambda_k) psi_k(x) psi_k(y)` is a density with
//! respect to `mu(y)`, so `P_t f(x) = sum_y p(t,x,y) f(y) mu(y)`.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{param, LabError, Result};
use crate::form::{ball_resolvent, BallSpec, SpectralForm};
use crate::kernel::JumpKernel;
use crate::report::{ConditionReport, Table, Verdict, Worst};
use crate::scale::ScaleField;
use crate::space::FiniteMMSpace;

/// `p(t, ., .)` over the form's domain (domain-local indices).
pub fn heat_kernel(form: &SpectralForm, t: f64) -> Result<DMatrix<f64>> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(param(format!(
            "time must be finite and nonnegative, got {t}"
        )));
    }
    Ok(form.heat_matrix(t))
}

/// `P_t 1_D` on the domain of a (part) form.
pub fn survival(form: &SpectralForm, t: f64) -> Vec<f64> {
    form.semigroup_apply(t, &vec![1.0; form.size()])
}

/// `count` log-spaced times over `[1e-3, 10]` times the relaxation time
/// `1/lambda`, where `lambda` is the first positive eigenvalue.
pub fn default_time_grid(form: &SpectralForm, count: usize) -> Vec<f64> {
    let gap = form
        .eigenvalues()
        .iter()
        .copied()
        .find(|&l| l > 1e-9)
        .unwrap_or(1.0);
    log_grid(1e-3 / gap, 10.0 / gap, count)
}

/// `count` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi / lo).ln() / (count - 1) as f64;
            (0..count).map(|i| lo * (step * i as f64).exp()).collect()
        }
    }
}

/// Largest deviations of the heat-kernel axioms at time `t`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HeatKernelAudit {
    pub asymmetry: f64,
    /// `max_x (sum_y p mu - 1)`: positive values break sub-Markov.
    pub mass_excess: f64,
    /// `max_x |sum_y p mu - 1|`: zero for conservative forms.
    pub mass_defect: f64,
    pub min_value: f64,
    pub chapman_kolmogorov: f64,
    /// `max |p(0,x,y) - delta_xy / mu(y)|` relative to `max 1/mu`.
    pub initial_identity: f64,
}

/// Audits symmetry, mass, positivity, Chapman-Kolmogorov (`p(t+s) = p(t) M p(s)`
/// relative to the largest entry) and the `t = 0` identity.
pub fn audit_heat_kernel(form: &SpectralForm, t: f64, s: f64) -> HeatKernelAudit {
    let n = form.size();
    let w = form.weights();
    let p = form.heat_matrix(t);
    let q = form.heat_matrix(s);
    let pq = form.heat_matrix(t + s);
    let mut audit = HeatKernelAudit {
        min_value: f64::INFINITY,
        ..Default::default()
    };
    let scale = pq.amax().max(1.0);
    let pm = DMatrix::from_fn(n, n, |i, j| p[(i, j)] * w[j]);
    let ck = &pm * &q;
    for i in 0..n {
        let mut mass = 0.0;
        for j in 0..n {
            audit.asymmetry = audit.asymmetry.max((p[(i, j)] - p[(j, i)]).abs());
            audit.min_value = audit.min_value.min(p[(i, j)]);
            audit.chapman_kolmogorov = audit
                .chapman_kolmogorov
                .max((ck[(i, j)] - pq[(i, j)]).abs() / scale);
            mass += p[(i, j)] * w[j];
        }
        audit.mass_excess = audit.mass_excess.max(mass - 1.0);
        audit.mass_defect = audit.mass_defect.max((mass - 1.0).abs());
    }
    let p0 = form.heat_matrix(0.0);
    let inv_max = w.iter().map(|v| 1.0 / v).fold(0.0, f64::max);
    for i in 0..n {
        for j in 0..n {
            let want = if i == j { 1.0 / w[j] } else { 0.0 };
            audit.initial_identity = audit
                .initial_identity
                .max((p0[(i, j)] - want).abs() / inv_max);
        }
    }
    audit
}

/// Survival estimate: for each `a0` in `a0_grid`,
/// `eps0(a0) = min over balls of min_{B(x0,r/4)} P^B_{a0 phi(x0,r)} 1_B`
/// (survival is nonincreasing in `t`, so the endpoint is the minimum).
/// The best constant is `max over a0 of min(a0, eps0(a0))`, the largest `c`
/// for which SE holds with `eps0 >= c` and `a0 >= c` on the sample.
pub fn se_check(
    form: &SpectralForm,
    space: &FiniteMMSpace,
    scale: &ScaleField,
    balls: &[BallSpec],
    a0_grid: &[f64],
) -> Result<ConditionReport> {
    if a0_grid.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
        return Err(param("a0 values must lie in (0,1)"));
    }
    let mut eps = vec![f64::INFINITY; a0_grid.len()];
    let mut skipped = 0usize;
    for b in balls {
        if b.radius >= scale.phi_inverse(b.center, scale.t0()) {
            skipped += 1;
            continue;
        }
        let members = space.ball(b.center, b.radius)?.members;
        let part = form.part_on(space, &members)?;
        let quarter: Vec<usize> = space
            .ball_members(b.center, b.radius / 4.0)
            .into_iter()
            .map(|g| part.local_index(g).unwrap())
            .collect();
        let phi = scale.phi(b.center, b.radius);
        for (e, &a0) in eps.iter_mut().zip(a0_grid) {
            let surv = survival(&part, a0 * phi);
            let m = quarter
                .iter()
                .map(|&i| surv[i])
                .fold(f64::INFINITY, f64::min);
            *e = e.min(m);
        }
    }
    let mut table = Table::new(&["a0", "eps0"]);
    let mut best: Worst<(f64, f64)> = Worst::new(f64::NEG_INFINITY);
    for (&a0, &e) in a0_grid.iter().zip(&eps) {
        table.push(vec![a0, e]);
        if e.is_finite() {
            best.offer(a0.min(e), (a0, e));
        }
    }
    let mut report = ConditionReport::new("se");
    report.family = format!("{} balls x {} values of a0", balls.len(), a0_grid.len());
    report.table = table;
    report.set_extra("skipped_balls", skipped as f64);
    match best.witness {
        Some((a0, e)) => {
            report.best_constant = best.value;
            report.set_witness(&[("a0", a0), ("eps0", e)]);
            report.verdict = Verdict::from_bool(best.value > 0.0);
        }
        None => report.verdict = Verdict::Inconclusive,
    }
    Ok(report)
}

/// Tail estimate: `C = max over (ball, t) of
/// max_{B(x0,r/4)} P_t 1_{B^c} (phi(x0,r) ^ T0) / t`.
pub fn te_check(
    form: &SpectralForm,
    space: &FiniteMMSpace,
    scale: &ScaleField,
    balls: &[BallSpec],
    times: &[f64],
) -> Result<ConditionReport> {
    if times.iter().any(|t| !(*t > 0.0)) {
        return Err(param("times must be positive"));
    }
    let mut worst: Worst<(usize, f64, f64)> = Worst::new(0.0);
    for b in balls {
        let inside = space.ball(b.center, b.radius)?.members;
        let mut outside = vec![1.0; space.len()];
        for &g in &inside {
            outside[g] = 0.0;
        }
        let f = form.restrict(&outside);
        let quarter: Vec<usize> = space
            .ball_members(b.center, b.radius / 4.0)
            .into_iter()
            .filter_map(|g| form.local_index(g))
            .collect();
        let horizon = scale.phi(b.center, b.radius).min(scale.t0());
        for &t in times {
            let pt = form.semigroup_apply(t, &f);
            let m = quarter.iter().map(|&i| pt[i]).fold(0.0, f64::max);
            worst.offer(m * horizon / t, (b.center, b.radius, t));
        }
    }
    let mut report = ConditionReport::new("te");
    report.family = format!("{} balls x {} times", balls.len(), times.len());
    report.best_constant = worst.value;
    if let Some((x, r, t)) = worst.witness {
        report.set_witness(&[("x", x as f64), ("r", r), ("t", t)]);
    }
    report.verdict = Verdict::from_bool(worst.value.is_finite());
    Ok(report)
}

/// On-diagonal upper estimate: `C = max over x and t < horizon of
/// p(t,x,x) V(x, phi^-1(x,t))`, plus the Cauchy-Schwarz corollary
/// `p(t,x,y) <= sqrt(p(t,x,x) p(t,y,y))`. Plot rows are emitted for up to
/// eight probe points.
pub fn due_check(
    form: &SpectralForm,
    space: &FiniteMMSpace,
    scale: &ScaleField,
    times: &[f64],
    horizon: f64,
) -> Result<ConditionReport> {
    if times.iter().any(|t| !(*t > 0.0)) {
        return Err(param("times must be positive"));
    }
    let n = form.size();
    let probes: Vec<usize> = (0..n).step_by(n.div_ceil(8).max(1)).collect();
    let mut table = Table::new(&["point", "t", "p_diag", "due_bound", "ratio"]);
    let mut worst: Worst<(usize, f64)> = Worst::new(0.0);
    let mut cs_excess = f64::NEG_INFINITY;
    for &t in times.iter().filter(|&&t| t < horizon) {
        let p = form.heat_matrix(t);
        for i in 0..n {
            let x = form.domain()[i];
            let vol = space.volume(x, scale.phi_inverse(x, t));
            let ratio = p[(i, i)] * vol;
            worst.offer(ratio, (x, t));
            if probes.contains(&i) {
                table.push(vec![x as f64, t, p[(i, i)], 1.0 / vol, ratio]);
            }
            for j in 0..n {
                let bound = (p[(i, i)] * p[(j, j)]).max(0.0).sqrt();
                cs_excess = cs_excess.max((p[(i, j)] - bound) / bound.max(1.0));
            }
        }
    }
    let mut report = ConditionReport::new("due").param("horizon", horizon);
    report.family = format!("all points x {} times", times.len());
    report.best_constant = worst.value;
    if let Some((x, t)) = worst.witness {
        report.set_witness(&[("x", x as f64), ("t", t)]);
    }
    report.set_extra("cauchy_schwarz_excess", cs_excess);
    report.table = table;
    let ok = worst.value.is_finite() && cs_excess <= 1e-10;
    report.verdict = if worst.witness.is_none() {
        Verdict::Inconclusive
    } else {
        Verdict::from_bool(ok)
    };
    Ok(report)
}

/// `max_t max_x |P_t 1(x) - 1|`; passes iff at most `1e-9`.
pub fn conservativeness_check(form: &SpectralForm, times: &[f64]) -> ConditionReport {
    let mut worst: Worst<(usize, f64)> = Worst::new(0.0);
    for &t in times {
        for (i, v) in survival(form, t).into_iter().enumerate() {
            worst.offer((v - 1.0).abs(), (form.domain()[i], t));
        }
    }
    let mut report = ConditionReport::new("conservativeness");
    report.family = format!("all points x {} times", times.len());
    report.best_constant = worst.value;
    if let Some((x, t)) = worst.witness {
        report.set_witness(&[("x", x as f64), ("t", t)]);
    }
    report.verdict = Verdict::from_bool(worst.value <= 1e-9);
    report
}

/// Largest eigenvalue of `L - L_near` in `L^2(mu)` against
/// `4 sup_x J_far(x, M)`.
pub fn truncation_l2_check(
    form_full: &SpectralForm,
    form_near: &SpectralForm,
    kernel_far: &JumpKernel,
    space: &FiniteMMSpace,
) -> Result<ConditionReport> {
    if form_full.domain() != form_near.domain() {
        return Err(param("full and truncated forms live on different domains"));
    }
    let n = form_full.size();
    let sw: Vec<f64> = form_full.weights().iter().map(|w| w.sqrt()).collect();
    let diff = form_full.generator() - form_near.generator();
    let mut s = DMatrix::from_fn(n, n, |i, j| diff[(i, j)] * sw[i] / sw[j]);
    let st = s.transpose();
    s = (s + st) * 0.5;
    let top = s
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(0.0, f64::max);
    let jcal = kernel_far.max_jump_rate(space);
    let rhs = 4.0 * jcal;
    let mut report = ConditionReport::new("truncation_l2");
    report.family = "exact spectrum".into();
    report.best_constant = top;
    report.set_extra("lhs", top);
    report.set_extra("rhs", rhs);
    report.set_extra("jcal", jcal);
    report.set_extra("margin", rhs - top);
    report.verdict = Verdict::from_bool(rhs - top >= -1e-9 * rhs.max(1.0));
    Ok(report)
}

/// Semigroup comparison `|P_t f - P'_t f| <= 2 t ||f||_inf jcal` over the
/// time grid, where the two forms differ by jumps of total rate at most `jcal`.
pub fn truncation_semigroup_check(
    form_a: &SpectralForm,
    form_b: &SpectralForm,
    f: &[f64],
    times: &[f64],
    jcal: f64,
) -> Result<ConditionReport> {
    if form_a.domain() != form_b.domain() {
        return Err(param("the two forms live on different domains"));
    }
    if f.len() != form_a.size() {
        return Err(param("f must be given on the form's domain"));
    }
    if f.iter().any(|v| *v < 0.0) {
        return Err(param("f must be nonnegative"));
    }
    let sup = f.iter().copied().fold(0.0, f64::max);
    let mut table = Table::new(&["t", "max_difference", "bound"]);
    let mut worst: Worst<(usize, f64)> = Worst::new(f64::NEG_INFINITY);
    for &t in times {
        let a = form_a.semigroup_apply(t, f);
        let b = form_b.semigroup_apply(t, f);
        let bound = 2.0 * t * sup * jcal;
        let mut max_diff = 0.0_f64;
        for (i, (u, v)) in a.iter().zip(&b).enumerate() {
            let d = (u - v).abs();
            max_diff = max_diff.max(d);
            worst.offer(d - bound, (form_a.domain()[i], t));
        }
        table.push(vec![t, max_diff, bound]);
    }
    let mut report = ConditionReport::new("truncation_semigroup").param("jcal", jcal);
    report.family = format!("all points x {} times", times.len());
    report.table = table;
    match worst.witness {
        Some((x, t)) => {
            report.best_constant = worst.value;
            report.set_extra("margin", -worst.value);
            report.set_witness(&[("x", x as f64), ("t", t)]);
            report.verdict = Verdict::from_bool(worst.value <= 1e-9);
        }
        None => report.verdict = Verdict::Inconclusive,
    }
    Ok(report)
}

/// Composite Simpson approximation of
/// `F_kl = int_0^t exp(-s a_k) exp(-(t-s) b_l) ds` with `intervals` (even) steps.
pub fn simpson_exponential_pairs(a: &[f64], b: &[f64], t: f64, intervals: usize) -> DMatrix<f64> {
    let m = intervals + intervals % 2;
    let h = t / m as f64;
    let nodes = m + 1;
    let weight = |i: usize| {
        let w = if i == 0 || i == m {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        w * h / 3.0
    };
    let ea = DMatrix::from_fn(nodes, a.len(), |i, k| {
        weight(i) * (-(i as f64 * h) * a[k]).exp()
    });
    let eb = DMatrix::from_fn(nodes, b.len(), |i, l| (-(t - i as f64 * h) * b[l]).exp());
    ea.tr_mul(&eb)
}

/// Exact `int_0^t exp(-s a) exp(-(t-s) b) ds`.
pub fn exponential_pair_integral(a: f64, b: f64, t: f64) -> f64 {
    let d = a - b;
    if d.abs() * t < 1e-8 {
        // Second-order expansion around a = b.
        let m = 0.5 * (a + b);
        t * (-t * m).exp() * (1.0 + (d * t).powi(2) / 24.0)
    } else {
        ((-t * b).exp() - (-t * a).exp()) / d
    }
}

/// Duhamel integral `int_0^t Q_s N P_{t-s} ds` as a kernel density, where
/// `Q` and `P` are the semigroups of `q_form` and `p_form` (same domain) and
/// `N` is the operator with matrix `n_op` (already including `mu(w)`).
/// Simpson with step halving until successive estimates agree to `tol` or
/// `max_intervals` is reached; the Richardson extrapolation of the last two is
/// returned. Returns `(integral, residual, intervals)`.
pub fn duhamel_integral(
    q_form: &SpectralForm,
    p_form: &SpectralForm,
    n_op: &DMatrix<f64>,
    t: f64,
    tol: f64,
    max_intervals: usize,
) -> (DMatrix<f64>, f64, usize) {
    let w = q_form.weights();
    let n = q_form.size();
    let mw = DMatrix::from_fn(n, n, |i, j| w[i] * n_op[(i, j)]);
    let coupling = q_form.eigenvectors().tr_mul(&(mw * p_form.eigenvectors()));
    let assemble = |f: &DMatrix<f64>| -> DMatrix<f64> {
        let inner = coupling.component_mul(f);
        q_form.eigenvectors() * inner * p_form.eigenvectors().transpose()
    };
    let mut m = 16usize;
    let mut prev = assemble(&simpson_exponential_pairs(
        q_form.eigenvalues(),
        p_form.eigenvalues(),
        t,
        m,
    ));
    loop {
        let next_m = 2 * m;
        let next = assemble(&simpson_exponential_pairs(
            q_form.eigenvalues(),
            p_form.eigenvalues(),
            t,
            next_m,
        ));
        let diff = &next - &prev;
        // The full step difference, not diff/15: with stiff eigenvalues the
        // asymptotic error ratio is only reached at fine steps.
        let residual = diff.amax();
        let extrapolated = &next + diff / 15.0;
        if residual <= tol || next_m >= max_intervals {
            return (extrapolated, residual, next_m);
        }
        prev = next;
        m = next_m;
    }
}

/// Result of a Meyer-type decomposition check on one domain and time.
#[derive(Clone, Debug)]
pub struct MeyerOutcome {
    /// `min (q + I_n - p)` for the upper bound with jump rate `2 j_far`.
    pub upper_margin: f64,
    /// `min (p - I~_n)` for the lower bound with the far-killed kernel.
    pub lower_margin: f64,
    /// `max |p - (q~ + I~_n)|`, the exact Duhamel identity.
    pub identity_residual: f64,
    /// `min (q + I_J - p)` with intensity `j_far` (one half of `I_n`).
    pub literal_upper_margin: f64,
    /// `min (p - I_J)`.
    pub literal_lower_margin: f64,
    /// `min (q + I_n - I~_n)`: the lower reconstruction never exceeds the upper one.
    pub ordering_margin: f64,
    /// Difference of the last two Simpson levels (absolute).
    pub quadrature_residual: f64,
    pub intervals: usize,
    /// Whether the residual reached `tol max(1, max p^D)`.
    pub converged: bool,
}

/// Compares the Dirichlet heat kernel `p^D` with the truncated one `q^D`
/// through the Duhamel integral of the far jumps at time `t`.
///
/// With the generator `(Lf)(x) = 2 sum_y (f(x) - f(y)) j(x,y) mu(y)`, far
/// jumps occur at rate `n(z,w) = 2 j_far(z,w)`. Write `q~` for the kernel of
/// the truncated part killed at rate `2 J_far(z, M)`. Then exactly
/// `p^D = q~ + I~_n`, and `p^D <= q^D + I_n`, `p^D >= I~_n`, where
/// `I_n = int_0^t q^D(s) n p^D(t-s) ds` and `I~_n` uses `q~`. The margins
/// with intensity `j_far` in place of `n` are reported as diagnostics.
#[allow(clippy::too_many_arguments)]
pub fn meyer_decomposition(
    form_full: &SpectralForm,
    form_near: &SpectralForm,
    kernel_far: &JumpKernel,
    space: &FiniteMMSpace,
    domain: &[usize],
    t: f64,
    tol: f64,
    max_intervals: usize,
) -> Result<MeyerOutcome> {
    if !(t > 0.0) {
        return Err(param("meyer check needs t > 0"));
    }
    let p_form = form_full.part_on(space, domain)?;
    let q_form = form_near.part_on(space, domain)?;
    let ids = p_form.domain().to_vec();
    let k = ids.len();
    let mut killed = q_form.generator().clone();
    for (i, &z) in ids.iter().enumerate() {
        killed[(i, i)] += 2.0 * kernel_far.jump_rate(space, z);
    }
    let qk_form = SpectralForm::from_generator(space, ids.clone(), killed)?;
    let n_op = DMatrix::from_fn(k, k, |i, j| {
        2.0 * kernel_far.j(ids[i], ids[j]) * space.weight(ids[j])
    });

    let p = p_form.heat_matrix(t);
    let tol = tol * p.amax().max(1.0);
    let (i_n, res_a, steps_a) = duhamel_integral(&q_form, &p_form, &n_op, t, tol, max_intervals);
    let (it_n, res_b, steps_b) = duhamel_integral(&qk_form, &p_form, &n_op, t, tol, max_intervals);
    let q = q_form.heat_matrix(t);
    let qk = qk_form.heat_matrix(t);

    let min_of = |m: DMatrix<f64>| m.iter().copied().fold(f64::INFINITY, f64::min);
    let residual = res_a.max(res_b);
    Ok(MeyerOutcome {
        upper_margin: min_of(&q + &i_n - &p),
        lower_margin: min_of(&p - &it_n),
        identity_residual: (&p - &qk - &it_n).amax(),
        literal_upper_margin: min_of(&q + &i_n * 0.5 - &p),
        literal_lower_margin: min_of(&p - &i_n * 0.5),
        ordering_margin: min_of(&q + &i_n - &it_n),
        quadrature_residual: residual,
        intervals: steps_a.max(steps_b),
        converged: residual <= tol,
    })
}

/// Runs [`meyer_decomposition`] over domains and times. Pass requires the
/// upper and lower bounds and the Duhamel identity to hold within the
/// quadrature tolerance (scaled by `max(1, max p^D)`); a quadrature that
/// does not reach `tol` makes the verdict inconclusive.
#[allow(clippy::too_many_arguments)]
pub fn meyer_check(
    form_full: &SpectralForm,
    form_near: &SpectralForm,
    kernel_far: &JumpKernel,
    space: &FiniteMMSpace,
    domains: &[Vec<usize>],
    times: &[f64],
    tol: f64,
    max_intervals: usize,
) -> Result<ConditionReport> {
    let mut table = Table::new(&[
        "domain",
        "t",
        "upper_margin",
        "lower_margin",
        "identity_residual",
        "literal_upper_margin",
        "literal_lower_margin",
        "quadrature_residual",
    ]);
    let mut verdict = Verdict::Pass;
    let mut worst: Worst<(usize, f64)> = Worst::new(f64::NEG_INFINITY);
    let mut literal = (f64::INFINITY, f64::INFINITY);
    let jobs: Vec<(usize, f64)> = (0..domains.len())
        .flat_map(|d| times.iter().map(move |&t| (d, t)))
        .collect();
    let outcomes: Vec<MeyerOutcome> = jobs
        .par_iter()
        .map(|&(d, t)| {
            meyer_decomposition(
                form_full,
                form_near,
                kernel_far,
                space,
                &domains[d],
                t,
                tol,
                max_intervals,
            )
        })
        .collect::<Result<_>>()?;
    for (&(d, t), o) in jobs.iter().zip(&outcomes) {
        let scale = form_full
            .part_on(space, &domains[d])?
            .heat_matrix(t)
            .amax()
            .max(1.0);
        let allowed = tol * scale;
        let violation = (-o.upper_margin)
            .max(-o.lower_margin)
            .max(o.identity_residual)
            .max(-o.ordering_margin);
        worst.offer(violation / scale, (d, t));
        if !o.converged {
            if verdict == Verdict::Pass {
                verdict = Verdict::Inconclusive;
            }
        } else if violation > allowed {
            verdict = Verdict::Fail;
        }
        literal.0 = literal.0.min(o.literal_upper_margin);
        literal.1 = literal.1.min(o.literal_lower_margin);
        table.push(vec![
            d as f64,
            t,
            o.upper_margin,
            o.lower_margin,
            o.identity_residual,
            o.literal_upper_margin,
            o.literal_lower_margin,
            o.quadrature_residual,
        ]);
    }
    let mut report = ConditionReport::new("meyer")
        .param("tol", tol)
        .param("max_intervals", max_intervals as f64);
    report.family = format!(
        "{} domains x {} times, all (x, y) pairs",
        domains.len(),
        times.len()
    );
    report.table = table;
    if let Some((d, t)) = worst.witness {
        report.best_constant = worst.value;
        report.set_witness(&[("domain", d as f64), ("t", t)]);
    }
    report.set_extra("literal_upper_margin", literal.0);
    report.set_extra("literal_lower_margin", literal.1);
    report.note(
        "bounds use the jump rate 2 j_far of the generator convention; \
         literal_* margins use intensity j_far and are diagnostics only",
    );
    report.verdict = if jobs.is_empty() {
        Verdict::Inconclusive
    } else {
        verdict
    };
    Ok(report)
}

/// Dirichlet domination `p^D <= p` on the domain of `D`; returns the largest
/// excess `p^D - p` relative to `max(1, max p)`.
pub fn dirichlet_domination_excess(
    form: &SpectralForm,
    space: &FiniteMMSpace,
    domain: &[usize],
    t: f64,
) -> Result<f64> {
    let part = form.part_on(space, domain)?;
    let pd = part.heat_matrix(t);
    let p = form.heat_matrix(t);
    let mut excess = f64::NEG_INFINITY;
    for (i, &x) in part.domain().iter().enumerate() {
        for (j, &y) in part.domain().iter().enumerate() {
            let (gx, gy) = (form.local_index(x).unwrap(), form.local_index(y).unwrap());
            excess = excess.max(pd[(i, j)] - p[(gx, gy)]);
        }
    }
    Ok(excess / p.amax().max(1.0))
}

/// Survival lower bound from the resolvent: at each quarter-ball point `y`,
/// `P^B_t 1_B(y) >= (G^B_lam 1_B(y) - t) / max_B G^B_lam 1_B` with
/// `lam = kappa/phi(x0,r)`, checked at `t = frac * min_{B/4} G` for each
/// `frac` in `fractions` (each at most 1/2).
pub fn se_from_lre_check(
    form: &SpectralForm,
    space: &FiniteMMSpace,
    scale: &ScaleField,
    kappa: f64,
    balls: &[BallSpec],
    fractions: &[f64],
) -> Result<ConditionReport> {
    if fractions.iter().any(|f| !(*f > 0.0 && *f <= 0.5)) {
        return Err(param("time fractions must lie in (0, 1/2]"));
    }
    let mut worst: Worst<(usize, f64, f64)> = Worst::new(f64::NEG_INFINITY);
    let mut table = Table::new(&["center", "radius", "t", "min_survival", "lower_bound"]);
    for b in balls {
        let g = ball_resolvent(form, space, scale, kappa, *b)?;
        let part = form.part_on(space, &g.members)?;
        for &frac in fractions {
            let t = frac * g.min_quarter;
            let surv = survival(&part, t);
            let mut min_surv = f64::INFINITY;
            let mut min_bound = f64::INFINITY;
            for &y in &g.quarter {
                let i = part.local_index(y).unwrap();
                let bound = (g.values[i] - t) / g.max;
                worst.offer(bound - surv[i], (b.center, b.radius, t));
                min_surv = min_surv.min(surv[i]);
                min_bound = min_bound.min(bound);
            }
            table.push(vec![b.center as f64, b.radius, t, min_surv, min_bound]);
        }
    }
    let mut report = ConditionReport::new("se_from_lre").param("kappa", kappa);
    report.family = format!("{} balls x {} times", balls.len(), fractions.len());
    report.table = table;
    match worst.witness {
        Some((x, r, t)) => {
            report.best_constant = worst.value;
            report.set_extra("margin", -worst.value);
            report.set_witness(&[("x", x as f64), ("r", r), ("t", t)]);
            report.verdict = Verdict::from_bool(worst.value <= 1e-9);
        }
        None => report.verdict = Verdict::Inconclusive,
    }
    Ok(report)
}

/// Reference profile
/// `F(t) = rho^(beta/nu) / (V(x,rho) (t ^ rho^beta)^(1/nu)) (1 + t/rho^beta)`.
pub fn f_profile(
    space: &FiniteMMSpace,
    beta: f64,
    nu: f64,
    x: usize,
    rho: f64,
    t: f64,
) -> Result<f64> {
    space.check_point(x)?;
    if !(rho > 0.0 && t > 0.0 && beta > 0.0 && nu > 0.0) {
        return Err(param("f_profile needs positive beta, nu, rho and t"));
    }
    Ok(profile_value(space.volume(x, rho), beta, nu, rho, t))
}

/// [`f_profile`] with the ball volume supplied directly.
pub fn profile_value(volume: f64, beta: f64, nu: f64, rho: f64, t: f64) -> f64 {
    let scale = rho.powf(beta);
    rho.powf(beta / nu) / (volume * t.min(scale).powf(1.0 / nu)) * (1.0 + t / scale)
}

/// Limit of `p_{n+1} = q + a (q p_n)^(1/2) + b p_n` from `p0`.
pub fn recursion_limit(q: f64, a: f64, b: f64, p0: f64, tol: f64) -> Result<f64> {
    if !(q >= 0.0 && p0 >= 0.0) {
        return Err(param("q and p0 must be nonnegative"));
    }
    if !(a > 0.0 && a < 1.0 && b > 0.0 && b < 1.0) {
        return Err(param("a and b must lie in (0,1)"));
    }
    if !(tol > 0.0) {
        return Err(param("tolerance must be positive"));
    }
    const MAX_ITERATIONS: usize = 100_000;
    let mut p = p0;
    for _ in 0..MAX_ITERATIONS {
        let next = q + a * (q * p).sqrt() + b * p;
        if (next - p).abs() <= tol * p.max(1.0) {
            return Ok(next);
        }
        p = next;
    }
    Err(LabError::NoConvergence {
        iterations: MAX_ITERATIONS,
    })
}
