//! Check catalog and experiment orchestration behind `hk-lab run`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{CheckMode, CheckSpec, ExperimentConfig, OutputFormat, ParamValue};
use crate::counterexample::{
    cross_jump_exponent, due_violation_diagnostic, exponent_report, synthesize_config,
    synthesize_config_with_xi,
};
use crate::error::{LabError, Result};
use crate::form::{
    capacity_check, cs_check, default_nash_family, default_subsets, fk_family_check,
    fk_nash_consistency, lre_check, nash_check, BallSpec, CutoffSpec, FkParams, FkVariant,
    SpectralForm,
};
use crate::kernel::{ij_check, tj_check, tjq_check, JumpKernel};
use crate::report::{ConditionReport, Table, Verdict};
use crate::scale::{induced_quasi_metric, matrix_is_metric, verify_scale_axioms, ScaleField};
use crate::semigroup::{
    audit_heat_kernel, conservativeness_check, default_time_grid, dirichlet_domination_excess,
    due_check, log_grid, meyer_check, recursion_limit, se_check, se_from_lre_check, te_check,
    truncation_l2_check, truncation_semigroup_check,
};
use crate::space::{
    cantor_dimension, dyadic_radii, fit_rvd_exponent, fit_vd_exponent, metric_axiom_scan,
    FiniteMMSpace, SpaceKind,
};

/// Default value of a check parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ParamDefault {
    Number(f64),
    Text(&'static str),
    /// Optional; the check derives a value when absent.
    Derived,
}

#[derive(Clone, Copy, Debug)]
pub struct ParamInfo {
    pub name: &'static str,
    pub default: ParamDefault,
    pub doc: &'static str,
}

#[derive(Clone, Copy, Debug)]
pub struct CheckInfo {
    pub name: &'static str,
    /// The statement the check samples.
    pub anchor: &'static str,
    pub mode: CheckMode,
    /// Which of `radius_grid` and `time_grid` the check reads.
    pub grids: &'static str,
    pub params: &'static [ParamInfo],
}

const fn p(name: &'static str, default: ParamDefault, doc: &'static str) -> ParamInfo {
    ParamInfo { name, default, doc }
}

use CheckMode::{Diagnostic, Pass};
use ParamDefault::{Derived, Number, Text};

const CENTERS: ParamInfo = p(
    "centers",
    Number(3.0),
    "ball centers: point 0 plus seeded random points",
);
const RHO: ParamInfo = p("rho", Derived, "truncation radius (defaults to kernel.rho)");
const KAPPA: ParamInfo = p(
    "kappa",
    Number(1.0),
    "resolvent rate lambda = kappa / phi(x0,r)",
);
const NU: ParamInfo = p("nu", Number(0.5), "Faber-Krahn exponent");
const B: ParamInfo = p("b", Number(0.0), "localization exponent of GFK");
const C_PRIME: ParamInfo = p(
    "c_prime",
    Number(0.5),
    "additive constant C' of WFK and GFK",
);
const DELTA: ParamInfo = p(
    "delta",
    Number(0.5),
    "FK and WFK only sample phi < delta T0",
);
const EPSILON: ParamInfo = p("epsilon", Number(4.0), "counterexample epsilon");
const XI: ParamInfo = p(
    "xi",
    Derived,
    "Cantor ratio (default: the space's ratio, else the 1 - 2^-k rule)",
);

static CATALOG: &[CheckInfo] = &[
    CheckInfo {
        name: "metric_check",
        anchor: "metric axioms: d(x,x) = 0, symmetry and the triangle inequality",
        mode: Pass,
        grids: "none",
        params: &[p("exhaustive_limit", Number(64.0), "all triples below this size, sampled above")],
    },
    CheckInfo {
        name: "vd_check",
        anchor: "VD(alpha): V(x,R)/V(x,r) <= C (R/r)^alpha",
        mode: Diagnostic,
        grids: "radius_grid",
        params: &[
            p("alpha", Derived, "target exponent; pass mode compares against it"),
            p("rel_tol", Number(0.05), "relative tolerance on alpha"),
        ],
    },
    CheckInfo {
        name: "rvd_check",
        anchor: "RVD(alpha0): V(x,R)/V(x,r) >= c (R/r)^alpha0",
        mode: Diagnostic,
        grids: "radius_grid",
        params: &[],
    },
    CheckInfo {
        name: "scale_axioms_check",
        anchor: "scale function: C1^-1 (R/r)^beta1 <= phi(x,R)/phi(x,r) <= C1 (R/r)^beta2 and the two-point bound",
        mode: Pass,
        grids: "radius_grid",
        params: &[],
    },
    CheckInfo {
        name: "quasi_metric_check",
        anchor: "metric transform: d_* comparable to phi^(1/beta_*) along chains",
        mode: Diagnostic,
        grids: "none",
        params: &[p("beta_star", Derived, "exponent beta_* (defaults to beta2)")],
    },
    CheckInfo {
        name: "tj_check",
        anchor: "TJ(phi): J(x, B(x,r)^c) <= C / phi(x,r)",
        mode: Diagnostic,
        grids: "radius_grid",
        params: &[p("threshold", Number(f64::INFINITY), "pass iff C <= threshold")],
    },
    CheckInfo {
        name: "tjq_check",
        anchor: "TJ_q(phi): ||j(x,.) 1_{B(x,r)^c}||_q <= C / (V(x,r)^((q-1)/q) phi(x,r))",
        mode: Diagnostic,
        grids: "radius_grid",
        params: &[
            p("q", Number(2.0), "exponent q >= 1"),
            p("threshold", Number(f64::INFINITY), "pass iff C <= threshold"),
        ],
    },
    CheckInfo {
        name: "ij_check",
        anchor: "IJ_{2,gamma}(phi): annulus jumps weighted by V^(-1/2) <= C (R/r)^gamma / (R V^(1/2))",
        mode: Diagnostic,
        grids: "radius_grid (all pairs r <= R)",
        params: &[
            p("gamma", Number(1.0), "inhomogeneity exponent"),
            p("threshold", Number(f64::INFINITY), "pass iff C <= threshold"),
        ],
    },
    CheckInfo {
        name: "cross_jump_check",
        anchor: "cross-jump mass between B(0, eta r) and B(e1, eta r) scales as r^((n+1) alpha_xi)",
        mode: Pass,
        grids: "radius_grid",
        params: &[
            p("eta", Number(1.0), "ball radius factor"),
            p("rel_tol", Number(0.1), "relative tolerance on the exponent"),
        ],
    },
    CheckInfo {
        name: "lre_check",
        anchor: "LRE_kappa: G^B_{kappa/phi} 1_B >= c phi(x0,r) on B(x0,r/4)",
        mode: Diagnostic,
        grids: "radius_grid",
        params: &[CENTERS, KAPPA],
    },
    CheckInfo {
        name: "cs_check",
        anchor: "CS(phi): jump energy of the cutoff of B(x0,R) in B(x0,R+r) <= C / phi(x,r)",
        mode: Diagnostic,
        grids: "radius_grid",
        params: &[CENTERS],
    },
    CheckInfo {
        name: "capacity_check",
        anchor: "capacity: E(cut, cut) <= C V(x0,r) / phi(x0,r)",
        mode: Diagnostic,
        grids: "radius_grid",
        params: &[CENTERS],
    },
    CheckInfo {
        name: "fk_family_check",
        anchor: "FK/WFK/GFK(phi): lambda1(D) >= C/phi(x0,r) [loc^b (V(x0,r)/mu(D))^nu - C']",
        mode: Diagnostic,
        grids: "radius_grid",
        params: &[
            CENTERS,
            p("variant", Text("wfk"), "fk, wfk or gfk"),
            NU,
            B,
            C_PRIME,
            DELTA,
            p("random_per_density", Number(2.0), "random subsets per density"),
        ],
    },
    CheckInfo {
        name: "nash_check",
        anchor: "Nash(phi): ||f||_2^(2+2nu) <= C (E(f,f) + C'/phi ||f||_2^2) ||f||_1^(2nu) V^(-nu) phi",
        mode: Diagnostic,
        grids: "radius_grid",
        params: &[
            CENTERS,
            NU,
            B,
            C_PRIME,
            DELTA,
            p("eigen_count", Number(4.0), "Dirichlet eigenfunctions per ball"),
            p("random_signs", Number(4.0), "random sign patterns per ball"),
        ],
    },
    CheckInfo {
        name: "fk_nash_check",
        anchor: "GFK <=> Nash: each constant bounds the other through the level set a = ||f||_2^2/(4 ||f||_1)",
        mode: Pass,
        grids: "radius_grid",
        params: &[CENTERS, NU, B, C_PRIME, DELTA],
    },
    CheckInfo {
        name: "heat_kernel_check",
        anchor: "heat kernel: symmetric, sub-Markov, Chapman-Kolmogorov, nonnegative, p(0) = delta/mu",
        mode: Pass,
        grids: "time_grid",
        params: &[],
    },
    CheckInfo {
        name: "se_check",
        anchor: "SE(phi): min_{B(x0,r/4)} P^B_t 1_B >= eps0 for t <= a0 phi(x0,r)",
        mode: Diagnostic,
        grids: "radius_grid",
        params: &[CENTERS, p("a0_count", Number(8.0), "log-spaced a0 values in [0.01, 0.9]")],
    },
    CheckInfo {
        name: "te_check",
        anchor: "TE(phi): max_{B(x0,r/4)} P_t 1_{B^c} <= C t / (phi(x0,r) ^ T0)",
        mode: Diagnostic,
        grids: "radius_grid, time_grid",
        params: &[CENTERS],
    },
    CheckInfo {
        name: "due_check",
        anchor: "DUE(phi): p(t,x,x) <= C / V(x, phi^-1(x,t)); p(t,x,y) <= sqrt(p(t,x,x) p(t,y,y))",
        mode: Diagnostic,
        grids: "time_grid",
        params: &[p("horizon_factor", Number(1.0), "only t < horizon_factor T0")],
    },
    CheckInfo {
        name: "conservativeness_check",
        anchor: "conservativeness: P_t 1 = 1",
        mode: Pass,
        grids: "time_grid",
        params: &[],
    },
    CheckInfo {
        name: "truncation_l2_check",
        anchor: "truncation in L2: E(f,f) - E_rho(f,f) <= 4 J(rho) ||f||_2^2",
        mode: Pass,
        grids: "none",
        params: &[RHO],
    },
    CheckInfo {
        name: "truncation_semigroup_check",
        anchor: "truncation of semigroups: |P^D_t f - P^{rho,D}_t f| <= 2 t ||f||_inf J(rho), also between rho < rho'",
        mode: Pass,
        grids: "radius_grid, time_grid",
        params: &[
            CENTERS,
            RHO,
            p("rho_outer", Derived, "second radius rho' > rho (default 2 rho)"),
            p("domain_radius", Derived, "D = B(0, domain_radius); whole space when absent"),
        ],
    },
    CheckInfo {
        name: "meyer_check",
        anchor: "Meyer decomposition: q^{rho,D} + I >= p^D >= I with I the Duhamel integral of far jumps",
        mode: Pass,
        grids: "radius_grid (domains), time_grid",
        params: &[
            CENTERS,
            RHO,
            p("max_intervals", Number(16384.0), "Simpson interval budget"),
        ],
    },
    CheckInfo {
        name: "se_from_lre_check",
        anchor: "survival from resolvent: P^B_t 1_B >= (G^B_lambda 1_B - t) / max_B G^B_lambda 1_B",
        mode: Pass,
        grids: "radius_grid",
        params: &[CENTERS, KAPPA],
    },
    CheckInfo {
        name: "dirichlet_domination_check",
        anchor: "domain monotonicity: p^D <= p",
        mode: Pass,
        grids: "radius_grid (domains), time_grid",
        params: &[CENTERS],
    },
    CheckInfo {
        name: "recursion_check",
        anchor: "recursion p_{n+1} = q + a sqrt(q p_n) + b p_n converges to C q",
        mode: Pass,
        grids: "none",
        params: &[
            p("q", Number(1.0), "q >= 0"),
            p("a", Number(0.5), "a in (0,1)"),
            p("b", Number(0.5), "b in (0,1)"),
            p("p0", Number(0.0), "starting value"),
            p("expected", Derived, "expected limit"),
        ],
    },
    CheckInfo {
        name: "counterexample_check",
        anchor: "counterexample parameters: n alpha/2 - n alpha/(2 beta2) = 1 + eps and gap 1 + eps - alpha - beta2 > 0",
        mode: Pass,
        grids: "none",
        params: &[EPSILON, XI],
    },
    CheckInfo {
        name: "due_violation_diagnostic",
        anchor: "corner heat kernel profile p(t, 0, e1) t^((1 + 1/beta2) n alpha / 2) under the counterexample field",
        mode: Diagnostic,
        grids: "time_grid",
        params: &[EPSILON, XI],
    },
];

pub fn catalog() -> &'static [CheckInfo] {
    CATALOG
}

pub fn find_check(name: &str) -> Option<&'static CheckInfo> {
    CATALOG.iter().find(|c| c.name == name)
}

/// Human-readable catalog, one block per check.
pub fn render_catalog() -> String {
    let mut out = String::new();
    for c in CATALOG {
        let mode = match c.mode {
            Pass => "pass",
            Diagnostic => "diagnostic",
        };
        let _ = writeln!(out, "{}  [{mode}]", c.name);
        let _ = writeln!(out, "  anchor: {}", c.anchor);
        let _ = writeln!(out, "  grids:  {}", c.grids);
        for prm in c.params {
            let default = match prm.default {
                Number(v) => format!("{v}"),
                Text(t) => t.to_string(),
                Derived => "derived".to_string(),
            };
            let _ = writeln!(out, "  {} = {default}: {}", prm.name, prm.doc);
        }
    }
    out
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SummaryEntry {
    pub name: String,
    pub mode: CheckMode,
    pub verdict: Verdict,
    pub best_constant: f64,
    pub witness: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub config_hash: String,
    pub seed: u64,
    /// Conjunction of the pass-mode verdicts.
    pub passed: bool,
    pub checks: Vec<SummaryEntry>,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub summary: Summary,
    pub reports: Vec<ConditionReport>,
    pub out_dir: PathBuf,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.summary.passed {
            0
        } else {
            1
        }
    }
}

/// Exit code for a run that stopped with `err`: 3 for the point cap, 2 for
/// configuration problems, 1 otherwise.
pub fn exit_code_for(err: &LabError) -> i32 {
    match err {
        LabError::PointCap { .. } => 3,
        LabError::Io(_) => 1,
        _ => 2,
    }
}

fn config_error(path: impl Into<String>, message: impl Into<String>) -> LabError {
    LabError::Config {
        path: path.into(),
        message: message.into(),
    }
}

/// Parameters of one check after defaults are applied.
struct Params<'a> {
    path: String,
    given: &'a BTreeMap<String, ParamValue>,
    info: &'static CheckInfo,
}

impl Params<'_> {
    fn opt_num(&self, name: &str) -> Option<f64> {
        match self.given.get(name) {
            Some(ParamValue::Number(v)) => Some(*v),
            _ => match self
                .info
                .params
                .iter()
                .find(|p| p.name == name)
                .map(|p| p.default)
            {
                Some(Number(v)) => Some(v),
                _ => None,
            },
        }
    }

    fn num(&self, name: &str) -> f64 {
        self.opt_num(name).expect("catalog default exists")
    }

    fn count(&self, name: &str) -> usize {
        self.num(name).max(0.0) as usize
    }

    fn text(&self, name: &str) -> &str {
        match self.given.get(name) {
            Some(ParamValue::Text(t)) => t,
            _ => match self
                .info
                .params
                .iter()
                .find(|p| p.name == name)
                .map(|p| p.default)
            {
                Some(Text(t)) => t,
                _ => "",
            },
        }
    }

    fn error(&self, name: &str, message: impl Into<String>) -> LabError {
        config_error(format!("{}.params.{name}", self.path), message)
    }
}

/// Name, parameter-name and parameter-type validation (no space needed).
fn validate_checks(checks: &[CheckSpec]) -> Result<()> {
    for (i, c) in checks.iter().enumerate() {
        let path = format!("checks[{i}]");
        let info = find_check(&c.name).ok_or_else(|| {
            config_error(
                format!("{path}.name"),
                format!("unknown check `{}`", c.name),
            )
        })?;
        for (name, value) in &c.params {
            let prm = info.params.iter().find(|p| p.name == name).ok_or_else(|| {
                config_error(
                    format!("{path}.params.{name}"),
                    format!("check `{}` has no parameter `{name}`", c.name),
                )
            })?;
            let ok = match (prm.default, value) {
                (Text(_), ParamValue::Text(_)) => true,
                (Number(_) | Derived, ParamValue::Number(v)) => v.is_finite(),
                _ => false,
            };
            if !ok {
                return Err(config_error(
                    format!("{path}.params.{name}"),
                    "wrong type or non-finite value",
                ));
            }
        }
        if let Some(t) = c.tolerance {
            if !(t > 0.0) {
                return Err(config_error(
                    format!("{path}.tolerance"),
                    "must be positive",
                ));
            }
        }
    }
    Ok(())
}

fn validate_grids(checks: &[CheckSpec], space: &FiniteMMSpace) -> Result<()> {
    for (i, c) in checks.iter().enumerate() {
        if let Some(radii) = &c.radius_grid {
            let bad = radii.is_empty()
                || radii.iter().any(|r| !(*r > 0.0 && *r <= space.diameter()))
                || radii.windows(2).any(|w| w[1] <= w[0]);
            if bad {
                return Err(config_error(
                    format!("checks[{i}].radius_grid"),
                    format!(
                        "radii must be nonempty, increasing and in (0, {}]",
                        space.diameter()
                    ),
                ));
            }
        }
        if let Some(times) = &c.time_grid {
            if times.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
                return Err(config_error(
                    format!("checks[{i}].time_grid"),
                    "times must be positive and finite",
                ));
            }
        }
    }
    Ok(())
}

struct Context<'a> {
    space: &'a FiniteMMSpace,
    scale: &'a ScaleField,
    kernel: &'a JumpKernel,
    rho: Option<f64>,
    form: Option<SpectralForm>,
}

impl Context<'_> {
    fn form(&mut self) -> Result<&SpectralForm> {
        if self.form.is_none() {
            self.form = Some(SpectralForm::assemble(self.space, self.kernel)?);
        }
        Ok(self.form.as_ref().unwrap())
    }

    fn default_radii(&self) -> Vec<f64> {
        let d = self.space.diameter();
        let r: Vec<f64> = dyadic_radii(1, 4).into_iter().filter(|r| *r < d).collect();
        if r.is_empty() {
            vec![d / 2.0]
        } else {
            r
        }
    }

    fn radii(&self, spec: &CheckSpec) -> Vec<f64> {
        spec.radius_grid
            .clone()
            .unwrap_or_else(|| self.default_radii())
    }

    fn centers(&self, count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let n = self.space.len();
        let mut out = vec![0];
        while out.len() < count.min(n) {
            let c = rng.gen_range(0..n);
            if !out.contains(&c) {
                out.push(c);
            }
        }
        out
    }

    fn balls(&self, spec: &CheckSpec, prm: &Params, rng: &mut ChaCha8Rng) -> Vec<BallSpec> {
        let centers = self.centers(prm.count("centers"), rng);
        let radii = self.radii(spec);
        centers
            .iter()
            .flat_map(|&c| {
                radii.iter().map(move |&r| BallSpec {
                    center: c,
                    radius: r,
                })
            })
            .collect()
    }

    fn times(&mut self, spec: &CheckSpec) -> Result<Vec<f64>> {
        match &spec.time_grid {
            Some(t) => Ok(t.clone()),
            None => Ok(default_time_grid(self.form()?, 20)),
        }
    }

    fn rho(&self, prm: &Params) -> Result<f64> {
        let rho = prm.opt_num("rho").or(self.rho).ok_or_else(|| {
            prm.error(
                "rho",
                "needs a truncation radius (params.rho or kernel.rho)",
            )
        })?;
        if !(rho > 0.0) {
            return Err(prm.error("rho", "must be positive"));
        }
        Ok(rho)
    }
}

fn fk_params(prm: &Params) -> FkParams {
    FkParams {
        nu: prm.num("nu"),
        b: prm.num("b"),
        c_prime: prm.num("c_prime"),
        delta: prm.num("delta"),
    }
}

fn counterexample_config(prm: &Params) -> Result<crate::counterexample::CounterexampleConfig> {
    let eps = prm.num("epsilon");
    match prm.opt_num("xi") {
        Some(xi) => synthesize_config_with_xi(eps, xi),
        None => synthesize_config(eps),
    }
    .map_err(|e| prm.error("epsilon", e.to_string()))
}

fn cantor_params(space: &FiniteMMSpace) -> Option<(f64, usize)> {
    match space.kind() {
        SpaceKind::Cantor { xi, axes, .. } => Some((*xi, *axes)),
        _ => None,
    }
}

fn run_check(
    ctx: &mut Context,
    spec: &CheckSpec,
    prm: &Params,
    rng: &mut ChaCha8Rng,
) -> Result<ConditionReport> {
    let space = ctx.space;
    let scale = ctx.scale;
    let kernel = ctx.kernel;
    let report = match spec.name.as_str() {
        "metric_check" => {
            let scan = metric_axiom_scan(
                space.len(),
                |x, y| space.dist(x, y),
                prm.count("exhaustive_limit"),
            );
            let tol = spec.tolerance.unwrap_or(1e-12);
            let mut r = ConditionReport::new("metric");
            r.best_constant = scan
                .max_identity
                .max(scan.max_asymmetry)
                .max(scan.max_triangle_excess);
            r.set_extra("max_identity", scan.max_identity);
            r.set_extra("max_asymmetry", scan.max_asymmetry);
            r.set_extra("max_triangle_excess", scan.max_triangle_excess);
            r.set_extra("triples", scan.triples as f64);
            r.family = format!("{} triples", scan.triples);
            r.verdict = Verdict::from_bool(scan.holds(tol));
            r
        }
        "vd_check" => {
            let radii = spec.radius_grid.clone().unwrap_or_else(|| {
                let d = space.diameter();
                dyadic_radii(1, 5).into_iter().filter(|r| *r < d).collect()
            });
            let fit = fit_vd_exponent(space, &radii)?;
            let mut r = ConditionReport::new("vd");
            r.best_constant = fit.alpha_hat;
            r.set_extra("max_ratio", fit.max_ratio);
            r.family = format!("all points x {} radii", radii.len());
            let target = prm.opt_num("alpha").or_else(|| {
                cantor_params(space).map(|(xi, axes)| axes as f64 * cantor_dimension(xi))
            });
            r.verdict = match target {
                Some(a) => {
                    r.set_extra("target", a);
                    Verdict::from_bool((fit.alpha_hat - a).abs() <= prm.num("rel_tol") * a)
                }
                None => Verdict::from_bool(fit.alpha_hat.is_finite()),
            };
            r
        }
        "rvd_check" => {
            let radii = spec.radius_grid.clone().unwrap_or_else(|| {
                let d = space.diameter();
                dyadic_radii(1, 5).into_iter().filter(|r| *r < d).collect()
            });
            let a0 = fit_rvd_exponent(space, &radii)?;
            let mut r = ConditionReport::new("rvd");
            r.best_constant = a0;
            r.family = format!("all points x {} radii", radii.len());
            r.verdict = Verdict::from_bool(a0 > 0.0);
            r
        }
        "scale_axioms_check" => verify_scale_axioms(scale, space, &ctx.radii(spec))?,
        "quasi_metric_check" => {
            let beta_star = prm.opt_num("beta_star").unwrap_or(scale.beta2());
            let (m, comparability) = induced_quasi_metric(scale, space, beta_star)?;
            let mut r = ConditionReport::new("quasi_metric").param("beta_star", beta_star);
            r.best_constant = comparability;
            let is_metric = matrix_is_metric(&m, 1e-12);
            r.set_extra("is_metric", if is_metric { 1.0 } else { 0.0 });
            r.family = "all pairs".into();
            r.verdict = Verdict::from_bool(comparability.is_finite() && is_metric);
            r
        }
        "tj_check" => tj_check(kernel, space, scale, &ctx.radii(spec), prm.num("threshold"))?,
        "tjq_check" => tjq_check(
            kernel,
            space,
            scale,
            prm.num("q"),
            &ctx.radii(spec),
            prm.num("threshold"),
        )?,
        "ij_check" => {
            let radii = ctx.radii(spec);
            let pairs: Vec<(f64, f64)> = radii
                .iter()
                .flat_map(|&r| {
                    radii
                        .iter()
                        .filter(move |&&big| big >= r)
                        .map(move |&big| (r, big))
                })
                .collect();
            ij_check(
                kernel,
                space,
                scale,
                prm.num("gamma"),
                &pairs,
                prm.num("threshold"),
            )?
        }
        "cross_jump_check" => {
            let (xi, axes) = cantor_params(space)
                .ok_or_else(|| config_error("space", "cross_jump_check needs a Cantor product"))?;
            let radii = spec
                .radius_grid
                .clone()
                .unwrap_or_else(|| dyadic_radii(2, 10));
            let (slope, table) = cross_jump_exponent(kernel, space, &radii, prm.num("eta"))?;
            let target = (axes as f64 + 1.0) * cantor_dimension(xi);
            let mut r = ConditionReport::new("cross_jump_exponent").param("target", target);
            r.best_constant = slope;
            r.set_extra("relative_error", (slope - target).abs() / target);
            r.table = table;
            r.family = format!("{} radii", radii.len());
            r.verdict = Verdict::from_bool((slope - target).abs() <= prm.num("rel_tol") * target);
            r
        }
        "lre_check" => {
            let balls = ctx.balls(spec, prm, rng);
            lre_check(ctx.form()?, space, scale, prm.num("kappa"), &balls)?
        }
        "cs_check" => {
            let samples: Vec<CutoffSpec> = ctx
                .balls(spec, prm, rng)
                .iter()
                .map(|b| CutoffSpec {
                    center: b.center,
                    big_r: b.radius,
                    r: b.radius / 2.0,
                })
                .collect();
            cs_check(space, scale, kernel, &samples)?
        }
        "capacity_check" => capacity_check(space, scale, kernel, &ctx.balls(spec, prm, rng))?,
        "fk_family_check" => {
            let variant = match prm.text("variant") {
                "fk" => FkVariant::Fk,
                "wfk" => FkVariant::Wfk,
                "gfk" => FkVariant::Gfk,
                other => return Err(prm.error("variant", format!("unknown variant `{other}`"))),
            };
            let balls = ctx.balls(spec, prm, rng);
            let per = prm.count("random_per_density");
            let form = ctx.form()?;
            let family = balls
                .iter()
                .map(|b| default_subsets(form, space, *b, per, rng))
                .collect::<Result<Vec<_>>>()?;
            fk_family_check(form, space, scale, variant, fk_params(prm), &family)?
        }
        "nash_check" => {
            let balls = ctx.balls(spec, prm, rng);
            let (ec, rs) = (prm.count("eigen_count"), prm.count("random_signs"));
            let form = ctx.form()?;
            let family = balls
                .iter()
                .map(|b| default_nash_family(form, space, *b, ec, rs, rng))
                .collect::<Result<Vec<_>>>()?;
            nash_check(form, space, scale, fk_params(prm), &family)?
        }
        "fk_nash_check" => {
            let balls = ctx.balls(spec, prm, rng);
            fk_nash_consistency(ctx.form()?, space, scale, fk_params(prm), &balls, rng)?
        }
        "heat_kernel_check" => {
            let times = ctx.times(spec)?;
            let form = ctx.form()?;
            let inv_mu = space.weights().iter().map(|w| 1.0 / w).fold(1.0, f64::max);
            let mut r = ConditionReport::new("heat_kernel");
            let mut table = Table::new(&[
                "t",
                "asymmetry",
                "mass_defect",
                "min_value",
                "chapman_kolmogorov",
            ]);
            let mut ok = true;
            let mut worst = 0.0_f64;
            let mut identity = 0.0_f64;
            for &t in &times {
                let a = audit_heat_kernel(form, t, 0.5 * t);
                table.push(vec![
                    t,
                    a.asymmetry,
                    a.mass_defect,
                    a.min_value,
                    a.chapman_kolmogorov,
                ]);
                ok &= a.asymmetry <= 1e-10 * inv_mu
                    && a.mass_excess <= 1e-10
                    && a.mass_defect <= 1e-10
                    && a.min_value >= -1e-10 * inv_mu
                    && a.chapman_kolmogorov <= 1e-8
                    && a.initial_identity <= 1e-10;
                worst = worst.max(a.mass_defect).max(a.chapman_kolmogorov);
                identity = identity.max(a.initial_identity);
            }
            r.best_constant = worst;
            r.set_extra("initial_identity", identity);
            r.table = table;
            r.family = format!("{} times", times.len());
            r.verdict = Verdict::from_bool(ok);
            r
        }
        "se_check" => {
            let balls = ctx.balls(spec, prm, rng);
            let a0 = log_grid(0.01, 0.9, prm.count("a0_count").max(1));
            se_check(ctx.form()?, space, scale, &balls, &a0)?
        }
        "te_check" => {
            let balls = ctx.balls(spec, prm, rng);
            let times = ctx.times(spec)?;
            te_check(ctx.form()?, space, scale, &balls, &times)?
        }
        "due_check" => {
            let times = ctx.times(spec)?;
            let horizon = prm.num("horizon_factor") * scale.t0();
            due_check(ctx.form()?, space, scale, &times, horizon)?
        }
        "conservativeness_check" => {
            let times = ctx.times(spec)?;
            conservativeness_check(ctx.form()?, &times)
        }
        "truncation_l2_check" => {
            let rho = ctx.rho(prm)?;
            let (near, far) = kernel.truncate(space, rho)?;
            let near_form = SpectralForm::assemble(space, &near)?;
            truncation_l2_check(ctx.form()?, &near_form, &far, space)?.param("rho", rho)
        }
        "truncation_semigroup_check" => truncation_semigroup(ctx, spec, prm, rng)?,
        "meyer_check" => {
            let rho = ctx.rho(prm)?;
            let radii = spec
                .radius_grid
                .clone()
                .unwrap_or_else(|| vec![space.diameter() / 2.0]);
            let centers = ctx.centers(prm.count("centers"), rng);
            let domains: Vec<Vec<usize>> = centers
                .iter()
                .flat_map(|&c| radii.iter().map(move |&r| (c, r)))
                .map(|(c, r)| space.ball_members(c, r))
                .collect();
            let times = spec
                .time_grid
                .clone()
                .unwrap_or_else(|| vec![0.2, 0.5, 1.0]);
            let (near, far) = kernel.truncate(space, rho)?;
            let near_form = SpectralForm::assemble(space, &near)?;
            let tol = spec.tolerance.unwrap_or(1e-6);
            meyer_check(
                ctx.form()?,
                &near_form,
                &far,
                space,
                &domains,
                &times,
                tol,
                prm.count("max_intervals"),
            )?
            .param("rho", rho)
        }
        "se_from_lre_check" => {
            let balls = ctx.balls(spec, prm, rng);
            se_from_lre_check(
                ctx.form()?,
                space,
                scale,
                prm.num("kappa"),
                &balls,
                &[0.05, 0.25, 0.5],
            )?
        }
        "dirichlet_domination_check" => {
            let balls = ctx.balls(spec, prm, rng);
            let times = ctx.times(spec)?;
            let form = ctx.form()?;
            let mut worst = f64::NEG_INFINITY;
            for b in &balls {
                let d = space.ball_members(b.center, b.radius);
                for &t in &times {
                    worst = worst.max(dirichlet_domination_excess(form, space, &d, t)?);
                }
            }
            let mut r = ConditionReport::new("dirichlet_domination");
            r.best_constant = worst;
            r.family = format!("{} domains x {} times", balls.len(), times.len());
            r.verdict = Verdict::from_bool(worst <= spec.tolerance.unwrap_or(1e-9));
            r
        }
        "recursion_check" => {
            let (q, a, b) = (prm.num("q"), prm.num("a"), prm.num("b"));
            let tol = spec.tolerance.unwrap_or(1e-12);
            let limit = recursion_limit(q, a, b, prm.num("p0"), tol)
                .map_err(|e| prm.error("a", e.to_string()))?;
            let other = recursion_limit(q, a, b, 10.0 * (q + 1.0), tol)
                .map_err(|e| prm.error("a", e.to_string()))?;
            let mut r = ConditionReport::new("recursion");
            r.best_constant = limit;
            r.set_extra("start_spread", (limit - other).abs());
            let mut ok = (limit - other).abs() <= 1e-8 * limit.max(1.0);
            if let Some(e) = prm.opt_num("expected") {
                r.set_extra("expected", e);
                ok &= (limit - e).abs() <= 1e-8 * e.abs().max(1.0);
            }
            r.verdict = Verdict::from_bool(ok);
            r
        }
        "counterexample_check" => {
            let config = counterexample_config(prm)?;
            let mut r = config.audit();
            let e = exponent_report(&config).map_err(|e| prm.error("epsilon", e.to_string()))?;
            r.set_extra("lower_exponent", e.lower_exponent);
            r.set_extra("due_exponent", e.due_exponent);
            r.set_extra("gap", e.gap);
            r.set_extra("gap_residual", (e.gap - e.closed_form_gap).abs());
            r.set_extra("beta2", config.beta2);
            r.set_extra("alpha_xi", config.alpha_xi);
            r.verdict = Verdict::from_bool(r.passed() && e.gap > 0.0);
            r
        }
        "due_violation_diagnostic" => {
            let (xi, _) = cantor_params(space).ok_or_else(|| {
                config_error("space", "due_violation_diagnostic needs a Cantor product")
            })?;
            let eps = prm.num("epsilon");
            let config = synthesize_config_with_xi(eps, prm.opt_num("xi").unwrap_or(xi))
                .map_err(|e| prm.error("epsilon", e.to_string()))?;
            let times = spec
                .time_grid
                .clone()
                .unwrap_or_else(|| log_grid(1e-4, 1e2, 25));
            let d = due_violation_diagnostic(&config, space, &times)?;
            let mut r = d.report;
            r.table = d.series;
            r
        }
        other => unreachable!("validated check name {other}"),
    };
    Ok(report)
}

fn truncation_semigroup(
    ctx: &mut Context,
    spec: &CheckSpec,
    prm: &Params,
    rng: &mut ChaCha8Rng,
) -> Result<ConditionReport> {
    let space = ctx.space;
    let rho = ctx.rho(prm)?;
    let rho_outer = prm.opt_num("rho_outer").unwrap_or(2.0 * rho);
    if !(rho_outer > rho) {
        return Err(prm.error("rho_outer", "must exceed rho"));
    }
    let balls = ctx.balls(spec, prm, rng);
    let times = ctx.times(spec)?;
    let domain: Vec<usize> = match prm.opt_num("domain_radius") {
        Some(r) => space.ball_members(0, r),
        None => (0..space.len()).collect(),
    };
    let (near, far) = ctx.kernel.truncate(space, rho)?;
    let (near_outer, far_outer) = ctx.kernel.truncate(space, rho_outer)?;
    let full = ctx.form()?.part_on(space, &domain)?;
    let near_part = SpectralForm::assemble(space, &near)?.part_on(space, &domain)?;
    let outer_part = SpectralForm::assemble(space, &near_outer)?.part_on(space, &domain)?;
    let jcal = far.max_jump_rate(space);
    let jcal_nested = (0..space.len())
        .map(|z| far.jump_rate(space, z) - far_outer.jump_rate(space, z))
        .fold(0.0, f64::max);
    let mut worst = f64::NEG_INFINITY;
    let mut worst_nested = f64::NEG_INFINITY;
    let mut table = Table::new(&[
        "ball",
        "t",
        "max_difference",
        "bound",
        "nested_difference",
        "nested_bound",
    ]);
    for (i, b) in balls.iter().enumerate() {
        let ind: Vec<f64> = (0..space.len())
            .map(|y| {
                if space.dist(b.center, y) < b.radius {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let f = full.restrict(&ind);
        let a = truncation_semigroup_check(&full, &near_part, &f, &times, jcal)?;
        let n = truncation_semigroup_check(&outer_part, &near_part, &f, &times, jcal_nested)?;
        worst = worst.max(a.best_constant);
        worst_nested = worst_nested.max(n.best_constant);
        let (ta, tn) = (&a.table, &n.table);
        for (ra, rn) in ta.rows.iter().zip(&tn.rows) {
            table.push(vec![i as f64, ra[0], ra[1], ra[2], rn[1], rn[2]]);
        }
    }
    let mut r = ConditionReport::new("truncation_semigroup")
        .param("rho", rho)
        .param("rho_outer", rho_outer);
    r.best_constant = worst.max(worst_nested);
    r.set_extra("margin", -worst);
    r.set_extra("nested_margin", -worst_nested);
    r.set_extra("jcal", jcal);
    r.set_extra("jcal_nested", jcal_nested);
    r.family = format!(
        "{} indicator functions x {} times on a {}-point domain",
        balls.len(),
        times.len(),
        domain.len()
    );
    r.table = table;
    r.verdict = if balls.is_empty() || times.is_empty() {
        Verdict::Inconclusive
    } else {
        Verdict::from_bool(worst <= 1e-9 && worst_nested <= 1e-9)
    };
    Ok(r)
}

/// Loads, validates and runs a config file.
pub fn run_path(path: &Path, options: &RunOptions) -> Result<RunOutcome> {
    run_config(ExperimentConfig::load(path)?, options)
}

pub fn run_config(mut config: ExperimentConfig, options: &RunOptions) -> Result<RunOutcome> {
    if let Some(seed) = options.seed {
        config.seed = seed;
    }
    validate_checks(&config.checks)?;
    let space = config.build_space()?;
    validate_grids(&config.checks, &space)?;
    let scale = config.build_scale(&space)?;
    let kernel = config.build_kernel(&space, &scale)?;
    let mut ctx = Context {
        space: &space,
        scale: &scale,
        kernel: &kernel,
        rho: config.kernel.rho,
        form: None,
    };

    let mut reports = Vec::with_capacity(config.checks.len());
    let mut entries = Vec::with_capacity(config.checks.len());
    for (i, spec) in config.checks.iter().enumerate() {
        let info = find_check(&spec.name).expect("validated");
        let prm = Params {
            path: format!("checks[{i}]"),
            given: &spec.params,
            info,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(i as u64);
        let mut report = run_check(&mut ctx, spec, &prm, &mut rng).map_err(|e| match e {
            LabError::PointCap { .. } | LabError::Config { .. } | LabError::Io(_) => e,
            other => config_error(prm.path.clone(), other.to_string()),
        })?;
        let mode = spec.mode.unwrap_or(info.mode);
        if mode == Diagnostic && report.verdict != Verdict::Diagnostic {
            report.note(format!("sampled verdict: {:?}", report.verdict).to_lowercase());
            report.verdict = Verdict::Diagnostic;
        }
        entries.push(SummaryEntry {
            name: spec.name.clone(),
            mode,
            verdict: report.verdict,
            best_constant: report.best_constant,
            witness: report.witness.clone(),
        });
        reports.push(report);
    }
    let passed = entries
        .iter()
        .all(|e| e.mode == Diagnostic || e.verdict == Verdict::Pass);
    let summary = Summary {
        config_hash: config.hash(),
        seed: config.seed,
        passed,
        checks: entries,
    };
    let out_dir = options
        .out
        .clone()
        .unwrap_or_else(|| config.output.dir.clone());
    write_outputs(&out_dir, &config.output.formats, &summary, &reports)?;
    Ok(RunOutcome {
        summary,
        reports,
        out_dir,
    })
}

fn write_outputs(
    dir: &Path,
    formats: &[OutputFormat],
    summary: &Summary,
    reports: &[ConditionReport],
) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, (entry, report)) in summary.checks.iter().zip(reports).enumerate() {
        let stem = format!("{i:02}_{}", entry.name);
        if formats.contains(&OutputFormat::Json) {
            fs::write(dir.join(format!("{stem}.json")), report.to_json()? + "\n")?;
        }
        if formats.contains(&OutputFormat::Csv) {
            let mut columns = vec!["best_constant".to_string()];
            let mut row = vec![report.best_constant];
            for (k, v) in &report.witness {
                columns.push(format!("witness_{k}"));
                row.push(*v);
            }
            let refs: Vec<&str> = columns.iter().map(String::as_str).collect();
            let mut t = Table::new(&refs);
            t.push(row);
            t.write_csv(fs::File::create(dir.join(format!("{stem}.csv")))?)?;
        }
        if formats.contains(&OutputFormat::Plotdata) && !report.table.is_empty() {
            report
                .table
                .write_csv(fs::File::create(dir.join(format!("{stem}.plot.csv")))?)?;
        }
    }
    fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(summary)? + "\n",
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_names_are_unique_and_contain_core_checks() {
        let mut names: Vec<&str> = catalog().iter().map(|c| c.name).collect();
        for want in ["due_check", "meyer_check", "fk_family_check"] {
            assert!(names.contains(&want));
        }
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), catalog().len());
        assert_eq!(render_catalog(), render_catalog());
    }

    #[test]
    fn unknown_check_and_param_paths() {
        let bad = vec![CheckSpec {
            name: "foo".into(),
            mode: None,
            params: BTreeMap::new(),
            radius_grid: None,
            time_grid: None,
            tolerance: None,
        }];
        match validate_checks(&bad) {
            Err(LabError::Config { path, .. }) => assert_eq!(path, "checks[0].name"),
            other => panic!("{other:?}"),
        }
        let mut params = BTreeMap::new();
        params.insert("kapa".to_string(), ParamValue::Number(1.0));
        let bad = vec![CheckSpec {
            name: "lre_check".into(),
            params,
            ..bad[0].clone()
        }];
        match validate_checks(&bad) {
            Err(LabError::Config { path, .. }) => assert_eq!(path, "checks[0].params.kapa"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!(
            exit_code_for(&LabError::PointCap {
                required: 10,
                cap: 1
            }),
            3
        );
        assert_eq!(
            exit_code_for(&LabError::Config {
                path: "x".into(),
                message: "y".into()
            }),
            2
        );
    }
}
