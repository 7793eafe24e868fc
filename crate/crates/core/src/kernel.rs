//! Symmetric jump kernels on finite spaces and the jump-tail checkers.
//!
//! A kernel stores the density `j(x,y)` of `J({x} x {y}) = j(x,y) mu(x) mu(y)`
//! as sorted sparse rows holding both symmetric halves, so `J(x,{y}) = j(x,y) mu(y)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, LabError, Result};
use crate::report::{ConditionReport, Table, Verdict, Worst};
use crate::scale::ScaleField;
use crate::space::{cantor_dimension, least_squares_slope, FiniteMMSpace, SpaceKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportPattern {
    Full,
    /// Nonzero only between atoms that differ in exactly one coordinate.
    AxisAligned,
    NearestNeighbor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct JumpKernel {
    rows: Vec<Vec<(usize, f64)>>,
    pattern: SupportPattern,
    rho: Option<f64>,
}

/// One stored entry of a kernel dump.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

impl JumpKernel {
    /// Kernel with no jumps on `n` points.
    pub fn zero(n: usize) -> Self {
        Self {
            rows: vec![Vec::new(); n],
            pattern: SupportPattern::Full,
            rho: None,
        }
    }

    /// Kernel from explicit directed entries, stored as given. Duplicate
    /// entries are summed and zeros dropped.
    pub fn from_entries(
        n: usize,
        entries: impl IntoIterator<Item = (usize, usize, f64)>,
        pattern: SupportPattern,
    ) -> Result<Self> {
        let mut rows = vec![Vec::new(); n];
        for (i, j, v) in entries {
            if i >= n || j >= n {
                return Err(LabError::UnknownPoint {
                    id: i.max(j),
                    len: n,
                });
            }
            if !(v >= 0.0 && v.is_finite()) {
                return Err(param(format!(
                    "kernel value at ({i},{j}) must be finite and nonnegative, got {v}"
                )));
            }
            if i == j {
                return Err(param(format!("kernel has diagonal mass at {i}")));
            }
            if v > 0.0 {
                rows[i].push((j, v));
            }
        }
        Ok(Self::from_rows(rows, pattern))
    }

    /// Kernel from the upper half `i < j`; each value is mirrored.
    pub fn from_triplets(n: usize, triplets: &[Triplet], pattern: SupportPattern) -> Result<Self> {
        if let Some(t) = triplets.iter().find(|t| t.i >= t.j) {
            return Err(param(format!(
                "triplets must satisfy i < j, found ({}, {})",
                t.i, t.j
            )));
        }
        Self::from_entries(
            n,
            triplets
                .iter()
                .flat_map(|t| [(t.i, t.j, t.value), (t.j, t.i, t.value)]),
            pattern,
        )
    }

    fn from_rows(mut rows: Vec<Vec<(usize, f64)>>, pattern: SupportPattern) -> Self {
        for row in &mut rows {
            row.sort_by_key(|e| e.0);
            row.dedup_by(|b, a| {
                if a.0 == b.0 {
                    a.1 += b.1;
                    true
                } else {
                    false
                }
            });
            row.retain(|e| e.1 > 0.0);
        }
        Self {
            rows,
            pattern,
            rho: None,
        }
    }

    /// `j(x,y) = c` for every pair `x != y`.
    pub fn constant(n: usize, c: f64) -> Result<Self> {
        if !(c >= 0.0 && c.is_finite()) {
            return Err(param(format!(
                "kernel constant must be nonnegative, got {c}"
            )));
        }
        let rows = (0..n)
            .map(|x| (0..n).filter(|&y| y != x).map(|y| (y, c)).collect())
            .collect();
        Ok(Self::from_rows(rows, SupportPattern::Full))
    }

    /// `j = c` between atoms at the smallest positive distance of the space.
    pub fn nearest_neighbor(space: &FiniteMMSpace, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(param(format!("kernel constant must be positive, got {c}")));
        }
        let h = space.min_spacing() * (1.0 + 1e-9);
        let rows = (0..space.len())
            .into_par_iter()
            .map(|x| {
                (0..space.len())
                    .filter(|&y| y != x && space.dist(x, y) <= h)
                    .map(|y| (y, c))
                    .collect()
            })
            .collect();
        Ok(Self::from_rows(rows, SupportPattern::NearestNeighbor))
    }

    /// Atomized singular kernel of a Cantor product: jumps move one
    /// coordinate at a time with intensity
    /// `|x_i - y_i|^(-alpha_xi - beta(x) ^ beta(y))`, and the density carries
    /// the factor `m^(n-1)` (`m` atoms per axis) so that `J({x} x {y})`
    /// equals the axis intensity times `mu(x)` times the one-axis mass of `y_i`.
    pub fn cantor_axis(space: &FiniteMMSpace, scale: &ScaleField) -> Result<Self> {
        let (xi, axes) = match space.kind() {
            SpaceKind::Cantor { xi, axes, .. } => (*xi, *axes),
            _ => {
                return Err(LabError::WrongSpace {
                    expected: "Cantor product",
                })
            }
        };
        Self::axis_kernel(space, scale, cantor_dimension(xi), axes)
    }

    /// Cylindrical kernel on a grid: a sum over axes of one-dimensional
    /// stable-like kernels `|x_i - y_i|^(-1 - beta(x) ^ beta(y))`.
    pub fn cylindrical(space: &FiniteMMSpace, scale: &ScaleField) -> Result<Self> {
        let dim = match space.kind() {
            SpaceKind::Grid { dim, .. } => *dim,
            _ => return Err(LabError::WrongSpace { expected: "grid" }),
        };
        Self::axis_kernel(space, scale, 1.0, dim)
    }

    fn axis_kernel(
        space: &FiniteMMSpace,
        scale: &ScaleField,
        alpha: f64,
        axes: usize,
    ) -> Result<Self> {
        if scale.len() != space.len() {
            return Err(param("scale field and space differ in size"));
        }
        let (values, _) = space.factor().ok_or(LabError::WrongSpace {
            expected: "product space",
        })?;
        let m = values.len();
        let off_axis = (m as f64).powi(axes as i32 - 1);
        let rows = (0..space.len())
            .into_par_iter()
            .map(|x| {
                let mut row = Vec::with_capacity(axes * (m - 1));
                for axis in 0..axes {
                    let a = space.factor_index(x, axis).unwrap();
                    for k in 0..m {
                        if k == a {
                            continue;
                        }
                        let y = space.along_axis(x, axis, k).unwrap();
                        let gap = (values[a] - values[k]).abs();
                        let order = alpha + scale.beta_of(x).min(scale.beta_of(y));
                        row.push((y, gap.powf(-order) * off_axis));
                    }
                }
                row
            })
            .collect();
        Ok(Self::from_rows(rows, SupportPattern::AxisAligned))
    }

    /// Variable-order stable-like kernel on a grid:
    /// `j(x,y) = c/2 (1/(V(x,d) phi(x,d)) + 1/(V(y,d) phi(y,d)))`, `d = d(x,y)`.
    pub fn stable_like(space: &FiniteMMSpace, scale: &ScaleField, c: f64) -> Result<Self> {
        if !matches!(space.kind(), SpaceKind::Grid { .. }) {
            return Err(LabError::WrongSpace { expected: "grid" });
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(param(format!("kernel constant must be positive, got {c}")));
        }
        if scale.len() != space.len() {
            return Err(param("scale field and space differ in size"));
        }
        let n = space.len();
        let rows = (0..n)
            .into_par_iter()
            .map(|x| {
                (0..n)
                    .filter(|&y| y != x)
                    .map(|y| {
                        let d = space.dist(x, y);
                        let ax = 1.0 / (space.volume(x, d) * scale.phi(x, d));
                        let ay = 1.0 / (space.volume(y, d) * scale.phi(y, d));
                        (y, 0.5 * c * (ax + ay))
                    })
                    .collect()
            })
            .collect();
        Ok(Self::from_rows(rows, SupportPattern::Full))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn pattern(&self) -> SupportPattern {
        self.pattern
    }

    /// Truncation radius this kernel was cut at, if any.
    pub fn rho(&self) -> Option<f64> {
        self.rho
    }

    /// Stored entries leaving `x`, sorted by target.
    pub fn row(&self, x: usize) -> &[(usize, f64)] {
        &self.rows[x]
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.rows.iter().all(Vec::is_empty)
    }

    pub fn j(&self, x: usize, y: usize) -> f64 {
        let row = &self.rows[x];
        row.binary_search_by_key(&y, |e| e.0)
            .map_or(0.0, |i| row[i].1)
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut k = self.clone();
        for row in &mut k.rows {
            for e in row.iter_mut() {
                e.1 *= s;
            }
            row.retain(|e| e.1 > 0.0);
        }
        k
    }

    /// Errors with the first pair whose two directions disagree.
    pub fn check_symmetry(&self) -> Result<()> {
        for (x, row) in self.rows.iter().enumerate() {
            for &(y, v) in row {
                let back = self.j(y, x);
                if back != v {
                    return Err(LabError::AsymmetricKernel {
                        x,
                        y,
                        forward: v,
                        backward: back,
                    });
                }
            }
        }
        Ok(())
    }

    /// Splits into `near` (pairs with `d < rho`) and `far` (the rest).
    pub fn truncate(&self, space: &FiniteMMSpace, rho: f64) -> Result<(Self, Self)> {
        if !(rho > 0.0) {
            return Err(param(format!(
                "truncation radius must be positive, got {rho}"
            )));
        }
        let mut near = Vec::with_capacity(self.len());
        let mut far = Vec::with_capacity(self.len());
        for (x, row) in self.rows.iter().enumerate() {
            let (a, b): (Vec<_>, Vec<_>) = row.iter().partition(|e| space.dist(x, e.0) < rho);
            near.push(a);
            far.push(b);
        }
        let make = |rows| Self {
            rows,
            pattern: self.pattern,
            rho: Some(rho),
        };
        Ok((make(near), make(far)))
    }

    /// `J(x, M) = sum_y j(x,y) mu(y)`.
    pub fn jump_rate(&self, space: &FiniteMMSpace, x: usize) -> f64 {
        self.rows[x].iter().map(|&(y, v)| v * space.weight(y)).sum()
    }

    /// `J(x, B(x,r)^c) = sum over d(x,y) >= r of j(x,y) mu(y)`.
    pub fn tail_mass(&self, space: &FiniteMMSpace, x: usize, r: f64) -> f64 {
        self.rows[x]
            .iter()
            .filter(|e| space.dist(x, e.0) >= r)
            .map(|&(y, v)| v * space.weight(y))
            .sum()
    }

    /// `sup_x J(x, M)`: for a far part this is the truncation tail constant.
    pub fn max_jump_rate(&self, space: &FiniteMMSpace) -> f64 {
        (0..self.len())
            .map(|x| self.jump_rate(space, x))
            .fold(0.0, f64::max)
    }

    /// `E(f,f) = sum_{x,y} (f(x) - f(y))^2 j(x,y) mu(x) mu(y)`.
    pub fn energy(&self, space: &FiniteMMSpace, f: &[f64]) -> f64 {
        self.rows
            .iter()
            .enumerate()
            .map(|(x, row)| {
                let inner: f64 = row
                    .iter()
                    .map(|&(y, v)| (f[x] - f[y]).powi(2) * v * space.weight(y))
                    .sum();
                inner * space.weight(x)
            })
            .sum()
    }

    /// Upper-half entries `i < j`.
    pub fn to_triplets(&self) -> Vec<Triplet> {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| {
                row.iter()
                    .filter(move |e| e.0 > i)
                    .map(move |&(j, value)| Triplet { i, j, value })
            })
            .collect()
    }

    /// Largest `c` with `j(x,y) >= c d(x,y)^(-dim - beta1)` over stored pairs.
    pub fn power_lower_constant(&self, space: &FiniteMMSpace, exponent: f64) -> f64 {
        let mut c = f64::INFINITY;
        for (x, row) in self.rows.iter().enumerate() {
            for &(y, v) in row {
                c = c.min(v * space.dist(x, y).powf(exponent));
            }
        }
        c
    }
}

/// `C = max over (x, r) of phi(x,r) J(x, B(x,r)^c)`; pass iff `C <= threshold`.
pub fn tj_check(
    kernel: &JumpKernel,
    space: &FiniteMMSpace,
    scale: &ScaleField,
    radii: &[f64],
    threshold: f64,
) -> Result<ConditionReport> {
    check_radii(space, radii)?;
    let worst = (0..space.len())
        .into_par_iter()
        .map(|x| {
            let mut w = Worst::new(0.0);
            for &r in radii {
                w.offer(scale.phi(x, r) * kernel.tail_mass(space, x, r), (x, r));
            }
            w
        })
        .reduce(|| Worst::new(0.0), Worst::merge);
    let mut report = ConditionReport::new("tj").param("threshold", threshold);
    report.family = format!("all points x {} radii", radii.len());
    finish_max_report(&mut report, worst, threshold);
    Ok(report)
}

/// `L^q` jump tail: `(sum_{d >= r} j^q mu)^(1/q) <= C / (V(x,r)^((q-1)/q) phi(x,r))`.
pub fn tjq_check(
    kernel: &JumpKernel,
    space: &FiniteMMSpace,
    scale: &ScaleField,
    q: f64,
    radii: &[f64],
    threshold: f64,
) -> Result<ConditionReport> {
    if kernel.pattern() == SupportPattern::AxisAligned {
        return Err(LabError::NoDensity(
            "axis-aligned kernels are singular with respect to the product measure; \
             the L^q tail needs a density"
                .into(),
        ));
    }
    if !(q >= 1.0 && q.is_finite()) {
        return Err(param(format!("q must be at least 1, got {q}")));
    }
    check_radii(space, radii)?;
    let worst = (0..space.len())
        .into_par_iter()
        .map(|x| {
            let mut w = Worst::new(0.0);
            for &r in radii {
                let sum: f64 = kernel
                    .row(x)
                    .iter()
                    .filter(|e| space.dist(x, e.0) >= r)
                    .map(|&(y, v)| v.powf(q) * space.weight(y))
                    .sum();
                let vol = space.volume(x, r);
                let c = sum.powf(1.0 / q) * vol.powf((q - 1.0) / q) * scale.phi(x, r);
                w.offer(c, (x, r));
            }
            w
        })
        .reduce(|| Worst::new(0.0), Worst::merge);
    let mut report = ConditionReport::new("tj_q")
        .param("q", q)
        .param("threshold", threshold);
    report.family = format!("all points x {} radii", radii.len());
    finish_max_report(&mut report, worst, threshold);
    Ok(report)
}

fn finish_max_report(report: &mut ConditionReport, worst: Worst<(usize, f64)>, threshold: f64) {
    report.best_constant = worst.value;
    if let Some((x, r)) = worst.witness {
        report.set_witness(&[("x", x as f64), ("r", r)]);
    }
    report.verdict = Verdict::from_bool(worst.value.is_finite() && worst.value <= threshold);
}

fn check_radii(space: &FiniteMMSpace, radii: &[f64]) -> Result<()> {
    if radii.is_empty() {
        return Err(LabError::DegenerateGrid("radius grid is empty".into()));
    }
    if let Some(r) = radii
        .iter()
        .find(|r| !(**r > 0.0 && **r <= space.diameter()))
    {
        return Err(LabError::DegenerateGrid(format!(
            "radius {r} is outside (0, diameter]"
        )));
    }
    Ok(())
}

/// Annulus sum `sum over phi^-1(x,R) <= d(x,y) < 2 phi^-1(x,R)` of
/// `j(x,y) mu(y) / sqrt(V(y, phi^-1(y,r)))`.
pub fn ij_lhs(
    kernel: &JumpKernel,
    space: &FiniteMMSpace,
    scale: &ScaleField,
    x: usize,
    r: f64,
    big_r: f64,
) -> f64 {
    let inner = scale.phi_inverse(x, big_r);
    kernel
        .row(x)
        .iter()
        .filter(|e| {
            let d = space.dist(x, e.0);
            d >= inner && d < 2.0 * inner
        })
        .map(|&(y, v)| v * space.weight(y) / space.volume(y, scale.phi_inverse(y, r)).sqrt())
        .sum()
}

/// Checks the integrated jump bound
/// `LHS(x,r,R) <= C / (R sqrt(V(x, phi^-1(x,r)))) (R/r)^gamma` on the given
/// `(r, R)` pairs and fits the minimal exponent `gamma_hat` as the log-log
/// slope of `max_x LHS R sqrt(V(x, phi^-1(x,r)))` against `R/r`.
pub fn ij_check(
    kernel: &JumpKernel,
    space: &FiniteMMSpace,
    scale: &ScaleField,
    gamma: f64,
    pairs: &[(f64, f64)],
    threshold: f64,
) -> Result<ConditionReport> {
    if pairs.is_empty() {
        return Err(LabError::DegenerateGrid("no (r, R) pairs".into()));
    }
    if let Some(p) = pairs.iter().find(|p| !(p.0 > 0.0 && p.0 <= p.1)) {
        return Err(param(format!("pairs need 0 < r <= R, got {p:?}")));
    }
    let mut table = Table::new(&["r", "R", "max_normalized_lhs"]);
    let mut worst: Worst<(usize, f64, f64)> = Worst::new(0.0);
    let mut fit = (Vec::new(), Vec::new());
    for &(r, big_r) in pairs {
        let per_pair = (0..space.len())
            .into_par_iter()
            .map(|x| {
                let lhs = ij_lhs(kernel, space, scale, x, r, big_r);
                let q = lhs * big_r * space.volume(x, scale.phi_inverse(x, r)).sqrt();
                let mut w = Worst::new(0.0);
                w.offer(q, (x, r, big_r));
                w
            })
            .reduce(|| Worst::new(0.0), Worst::merge);
        let q = per_pair.value;
        table.push(vec![r, big_r, q]);
        if q > 0.0 {
            fit.0.push((big_r / r).ln());
            fit.1.push(q.ln());
        }
        if let Some(w) = per_pair.witness {
            worst.offer(q * (r / big_r).powf(gamma), w);
        }
    }
    let distinct = {
        let mut xs = fit.0.clone();
        xs.sort_by(f64::total_cmp);
        xs.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        xs.len()
    };
    let gamma_hat = if distinct >= 2 {
        least_squares_slope(&fit.0, &fit.1)
    } else {
        f64::NAN
    };
    let mut report = ConditionReport::new("ij")
        .param("gamma", gamma)
        .param("threshold", threshold);
    report.family = format!("all points x {} (r, R) pairs", pairs.len());
    report.best_constant = worst.value;
    if let Some((x, r, big_r)) = worst.witness {
        report.set_witness(&[("x", x as f64), ("r", r), ("R", big_r)]);
    }
    report.set_extra("gamma_hat", gamma_hat);
    report.table = table;
    report.verdict = Verdict::from_bool(worst.value.is_finite() && worst.value <= threshold);
    Ok(report)
}

/// `sum over z in B(0, eta r), w in B(e1, eta r), d(z,w) >= 1/4` of
/// `j(z,w) mu(z) mu(w)` on a Cantor product.
pub fn cross_jump_mass(
    kernel: &JumpKernel,
    space: &FiniteMMSpace,
    r: f64,
    eta: f64,
) -> Result<f64> {
    let origin = space.corner_zero()?;
    let corner = space.corner_e1()?;
    if !(r > 0.0 && eta > 0.0) {
        return Err(param("cross_jump_mass needs r > 0 and eta > 0"));
    }
    let radius = eta * r;
    let mut target = vec![false; space.len()];
    for w in space.ball_members(corner, radius) {
        target[w] = true;
    }
    let sources = space.ball_members(origin, radius);
    // Per-source sums are collected first so the total is order-independent.
    let per_source: Vec<f64> = sources
        .par_iter()
        .map(|&z| {
            kernel
                .row(z)
                .iter()
                .filter(|e| target[e.0] && space.dist(z, e.0) >= 0.25)
                .map(|&(w, v)| v * space.weight(z) * space.weight(w))
                .sum::<f64>()
        })
        .collect();
    Ok(per_source.iter().sum())
}
