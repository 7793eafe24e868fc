//! Variable-order scale functions `phi(x,r) = r^beta(x)` for `r <= 1` and
//! `r^beta1` for `r > 1`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::report::{ConditionReport, Verdict, Worst};
use crate::space::{metric_axiom_scan, FiniteMMSpace};

/// Largest space accepted by [`induced_quasi_metric`].
pub const QUASI_METRIC_POINT_LIMIT: usize = 512;

/// Points sampled per side when scanning the two-point scale bound.
const SCALE2_SAMPLE: usize = 256;

/// A per-point order `beta(x)` in `[beta1, beta2]` and a localizing time `t0`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaleField {
    beta: Vec<f64>,
    beta1: f64,
    beta2: f64,
    t0: f64,
    lipschitz: Option<f64>,
}

/// A ball on which a piecewise field takes a prescribed value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallPiece {
    pub center: Vec<f64>,
    pub radius: f64,
    pub value: f64,
}

impl ScaleField {
    /// The same order at every point of an `n`-point space.
    pub fn constant(n: usize, beta: f64, t0: f64) -> Result<Self> {
        Self::from_table(vec![beta; n], beta, beta, t0)
    }

    /// Explicit per-point orders with declared bounds `beta1 <= beta(x) <= beta2`.
    pub fn from_table(beta: Vec<f64>, beta1: f64, beta2: f64, t0: f64) -> Result<Self> {
        if !(beta1 > 0.0 && beta1 <= beta2 && beta2.is_finite()) {
            return Err(param(format!(
                "need 0 < beta1 <= beta2 < inf, got beta1={beta1}, beta2={beta2}"
            )));
        }
        if !(t0 > 0.0) {
            return Err(param(format!("T0 must be positive, got {t0}")));
        }
        if let Some(b) = beta.iter().find(|b| !(**b >= beta1 && **b <= beta2)) {
            return Err(param(format!(
                "beta value {b} lies outside [{beta1}, {beta2}]"
            )));
        }
        Ok(Self {
            beta,
            beta1,
            beta2,
            t0,
            lipschitz: None,
        })
    }

    /// A field equal to `default` away from the pieces and to each piece's
    /// value on its ball, bridged with slope `slope`:
    /// `beta = min(max(default, max_up(v_i - slope d_i)), min_down(v_i + slope d_i))`
    /// where `d_i` is the distance to the atoms of piece `i`'s ball. The result
    /// is `slope`-Lipschitz; pieces that are too close for the slope may not
    /// attain their value everywhere on their ball.
    pub fn piecewise_by_ball(
        space: &FiniteMMSpace,
        pieces: &[BallPiece],
        default: f64,
        slope: f64,
        t0: f64,
    ) -> Result<Self> {
        if !(slope > 0.0 && slope.is_finite()) {
            return Err(param(format!("bridge slope must be positive, got {slope}")));
        }
        let mut members = Vec::with_capacity(pieces.len());
        for p in pieces {
            if p.center.len() != space.axes() {
                return Err(param(format!(
                    "piece center has {} coordinates, space has {} axes",
                    p.center.len(),
                    space.axes()
                )));
            }
            let c = space.nearest_point(&p.center);
            let ball = space.ball(c, p.radius)?;
            members.push(ball.members);
        }
        let beta: Vec<f64> = (0..space.len())
            .into_par_iter()
            .map(|x| {
                let mut up = default;
                let mut down = f64::INFINITY;
                for (p, m) in pieces.iter().zip(&members) {
                    let d = space.dist_to_set(x, m);
                    if p.value >= default {
                        up = up.max(p.value - slope * d);
                    } else {
                        down = down.min(p.value + slope * d);
                    }
                }
                up.min(down)
            })
            .collect();
        let beta1 = beta.iter().copied().fold(default, f64::min);
        let beta2 = beta.iter().copied().fold(default, f64::max);
        Ok(Self::from_table(beta, beta1, beta2, t0)?.declare_lipschitz(slope))
    }

    /// Declares that `beta` is `constant`-Lipschitz; `verify_scale_axioms`
    /// then scans for violations.
    pub fn declare_lipschitz(mut self, constant: f64) -> Self {
        self.lipschitz = Some(constant);
        self
    }

    pub fn declared_lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    pub fn beta_of(&self, x: usize) -> f64 {
        self.beta[x]
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    pub fn beta1(&self) -> f64 {
        self.beta1
    }

    pub fn beta2(&self) -> f64 {
        self.beta2
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn with_t0(mut self, t0: f64) -> Self {
        self.t0 = t0;
        self
    }

    /// `phi(x,r)` for `r > 0`. Callers must pass a positive radius; see
    /// [`ScaleField::checked_phi`] for the validating form.
    pub fn phi(&self, x: usize, r: f64) -> f64 {
        debug_assert!(r > 0.0);
        if r <= 1.0 {
            r.powf(self.beta[x])
        } else {
            r.powf(self.beta1)
        }
    }

    pub fn checked_phi(&self, x: usize, r: f64) -> Result<f64> {
        self.check_index(x)?;
        if !(r > 0.0) {
            return Err(param(format!("phi needs r > 0, got {r}")));
        }
        Ok(self.phi(x, r))
    }

    /// Inverse of `r -> phi(x,r)` for `t > 0`.
    pub fn phi_inverse(&self, x: usize, t: f64) -> f64 {
        debug_assert!(t > 0.0);
        if t <= 1.0 {
            t.powf(1.0 / self.beta[x])
        } else {
            t.powf(1.0 / self.beta1)
        }
    }

    pub fn checked_phi_inverse(&self, x: usize, t: f64) -> Result<f64> {
        self.check_index(x)?;
        if !(t > 0.0) {
            return Err(param(format!("phi_inverse needs t > 0, got {t}")));
        }
        Ok(self.phi_inverse(x, t))
    }

    fn check_index(&self, x: usize) -> Result<()> {
        if x < self.beta.len() {
            Ok(())
        } else {
            Err(crate::error::LabError::UnknownPoint {
                id: x,
                len: self.beta.len(),
            })
        }
    }

    /// Largest `|beta(x) - beta(y)| / d(x,y)` over all pairs.
    pub fn lipschitz_constant(&self, space: &FiniteMMSpace) -> (f64, usize, usize) {
        (0..space.len())
            .into_par_iter()
            .map(|x| {
                let mut best = (0.0, x, x);
                for y in 0..space.len() {
                    let d = space.dist(x, y);
                    if d > 0.0 {
                        let s = (self.beta[x] - self.beta[y]).abs() / d;
                        if s > best.0 {
                            best = (s, x, y);
                        }
                    }
                }
                best
            })
            .reduce(|| (0.0, 0, 0), |a, b| if b.0 > a.0 { b } else { a })
    }
}

fn sample_indices(n: usize, limit: usize) -> Vec<usize> {
    if n <= limit {
        (0..n).collect()
    } else {
        (0..n).step_by(n.div_ceil(limit)).collect()
    }
}

/// Best constants `C1` (comparability across points), `C2` (two-sided power
/// bounds in `r`), the constant of the derived bound
/// `phi(y,R)/phi(x,r) <= C ((R + d(x,y))/r)^beta2`, and a Lipschitz scan when
/// the field declares one.
pub fn verify_scale_axioms(
    scale: &ScaleField,
    space: &FiniteMMSpace,
    radii: &[f64],
) -> Result<ConditionReport> {
    if scale.len() != space.len() {
        return Err(param("scale field and space differ in size"));
    }
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0 && *r <= space.diameter())) {
        return Err(param("radii must be nonempty and lie in (0, diameter]"));
    }
    let n = space.len();

    // C1: phi(y,r) <= C1 phi(x,r) for r >= d(x,y); r = d(x,y) is always probed.
    let c1 = (0..n)
        .into_par_iter()
        .map(|x| {
            let mut w = Worst::new(1.0);
            for y in 0..n {
                let d = space.dist(x, y);
                let probes = radii.iter().copied().filter(|&r| r >= d);
                for r in probes.chain((d > 0.0).then_some(d)) {
                    w.offer(scale.phi(y, r) / scale.phi(x, r), (x, y, r));
                }
            }
            w
        })
        .reduce(|| Worst::new(1.0), Worst::merge);

    let mut c2: Worst<(usize, f64, f64)> = Worst::new(1.0);
    for x in 0..n {
        for (i, &r) in radii.iter().enumerate() {
            for &big in &radii[i..] {
                let ratio = scale.phi(x, big) / scale.phi(x, r);
                let q = big / r;
                c2.offer(q.powf(scale.beta1) / ratio, (x, r, big));
                c2.offer(ratio / q.powf(scale.beta2), (x, r, big));
            }
        }
    }

    let picks = sample_indices(n, SCALE2_SAMPLE);
    let c3 = picks
        .par_iter()
        .map(|&x| {
            let mut best = 0.0_f64;
            for &y in &picks {
                let d = space.dist(x, y);
                for (i, &r) in radii.iter().enumerate() {
                    for &big in &radii[i..] {
                        let lhs = scale.phi(y, big) / scale.phi(x, r);
                        best = best.max(lhs / ((big + d) / r).powf(scale.beta2));
                    }
                }
            }
            best
        })
        .reduce(|| 0.0, f64::max);

    let mut report = ConditionReport::new("scale_axioms")
        .param("beta1", scale.beta1)
        .param("beta2", scale.beta2);
    report.family = format!("all pairs x {} radii", radii.len());
    report.best_constant = c1.value;
    if let Some((x, y, r)) = c1.witness {
        report.set_witness(&[("x", x as f64), ("y", y as f64), ("r", r)]);
    }
    report.set_extra("c1", c1.value);
    report.set_extra("c2", c2.value);
    report.set_extra("c_phi_scale2", c3);
    let mut ok = c1.value.is_finite() && c2.value.is_finite() && c3.is_finite();

    if let Some(declared) = scale.lipschitz {
        let (lip, x, y) = scale.lipschitz_constant(space);
        report.set_extra("lipschitz_declared", declared);
        report.set_extra("lipschitz_measured", lip);
        if lip > declared * (1.0 + 1e-12) {
            ok = false;
            report.note(format!(
                "declared {declared}-Lipschitz field violates the bound: \
                 |beta({x}) - beta({y})| / d = {lip}"
            ));
        }
    }
    report.verdict = Verdict::from_bool(ok);
    Ok(report)
}

/// Shortest-chain metric generated by the link length
/// `rho(x,y) = max(phi(x,d), phi(y,d))^(1/beta_star)`, together with the
/// comparability constant `max(dstar^beta_star / phi(x,d), phi(x,d) / dstar^beta_star)`.
pub fn induced_quasi_metric(
    scale: &ScaleField,
    space: &FiniteMMSpace,
    beta_star: f64,
) -> Result<(Vec<Vec<f64>>, f64)> {
    if !(beta_star > 0.0) {
        return Err(param(format!(
            "beta_star must be positive, got {beta_star}"
        )));
    }
    let n = space.len();
    if n > QUASI_METRIC_POINT_LIMIT {
        return Err(crate::error::LabError::PointCap {
            required: n,
            cap: QUASI_METRIC_POINT_LIMIT,
        });
    }
    if scale.len() != n {
        return Err(param("scale field and space differ in size"));
    }
    let mut dstar: Vec<Vec<f64>> = (0..n)
        .map(|x| {
            (0..n)
                .map(|y| {
                    let d = space.dist(x, y);
                    if d == 0.0 {
                        0.0
                    } else {
                        scale.phi(x, d).max(scale.phi(y, d)).powf(1.0 / beta_star)
                    }
                })
                .collect()
        })
        .collect();
    for k in 0..n {
        let row_k = dstar[k].clone();
        dstar.par_iter_mut().for_each(|row| {
            let via = row[k];
            for (cell, &tail) in row.iter_mut().zip(&row_k) {
                let cand = via + tail;
                if cand < *cell {
                    *cell = cand;
                }
            }
        });
    }
    let mut comparability = 1.0_f64;
    for (x, row) in dstar.iter().enumerate() {
        for (y, &link) in row.iter().enumerate() {
            let d = space.dist(x, y);
            if d > 0.0 {
                let a = link.powf(beta_star);
                let b = scale.phi(x, d);
                comparability = comparability.max(a / b).max(b / a);
            }
        }
    }
    Ok((dstar, comparability))
}

/// Exhaustive metric-axiom scan of a distance matrix.
pub fn matrix_is_metric(m: &[Vec<f64>], tol: f64) -> bool {
    metric_axiom_scan(m.len(), |x, y| m[x][y], usize::MAX).holds(tol)
}
