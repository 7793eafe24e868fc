//! Finite metric measure spaces.
//!
//! Every builder produces a [`FiniteMMSpace`]: a list of atoms with
//! coordinates, positive masses and a metric. Product builders (Cantor
//! products and uniform grids) use the sup metric over their axes and keep
//! the one-dimensional factor around so that ball volumes can be computed
//! axis by axis.

use serde::{Deserialize, Serialize};

use crate::error::{param, LabError, Result};

/// Default upper bound on the number of atoms a builder may create.
pub const DEFAULT_POINT_CAP: usize = 4096;

/// Largest per-axis Cantor depth accepted by the builder.
pub const MAX_CANTOR_LEVEL: u32 = 16;

/// `log 2 / log(2 / (1 - xi))`, the volume exponent of the middle-`xi` Cantor set.
pub fn cantor_dimension(xi: f64) -> f64 {
    std::f64::consts::LN_2 / (2.0 / (1.0 - xi)).ln()
}

/// How a space was built. Only product spaces support axis-aware operations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SpaceKind {
    Cantor { xi: f64, axes: usize, level: u32 },
    Grid { dim: usize, side: usize },
    TwoPoint { gap: f64 },
    Custom,
}

#[derive(Clone, Debug)]
enum Metric {
    Sup,
    /// Row-major `n x n` distance matrix.
    Explicit(Vec<f64>),
}

/// The one-dimensional factor shared by every axis of a product space.
#[derive(Clone, Debug)]
struct AxisFactor {
    values: Vec<f64>,
    weight: f64,
}

impl AxisFactor {
    /// Number of factor atoms strictly within `r` of `x`.
    fn count_within(&self, x: f64, r: f64) -> usize {
        let lo = self.values.partition_point(|&v| v < x && (x - v) >= r);
        let hi = self.values.partition_point(|&v| v < x || (v - x) < r);
        hi - lo
    }
}

/// A finite point set with positive weights and a metric.
#[derive(Clone, Debug)]
pub struct FiniteMMSpace {
    kind: SpaceKind,
    coords: Vec<Vec<f64>>,
    weights: Vec<f64>,
    metric: Metric,
    diameter: f64,
    min_spacing: f64,
    factor: Option<AxisFactor>,
}

/// Result of an open-ball query `B(center, radius)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BallQuery {
    pub center: usize,
    pub radius: f64,
    pub members: Vec<usize>,
    pub volume: f64,
}

impl FiniteMMSpace {
    /// Product of `axes` copies of the level-`level` approximation of the
    /// middle-`xi` Cantor set. Atoms sit at the left endpoints of the
    /// surviving intervals and carry equal mass.
    pub fn cantor_product(xi: f64, axes: usize, level: u32, cap: usize) -> Result<Self> {
        if !(xi > 0.0 && xi < 1.0) {
            return Err(param(format!("xi must lie in (0,1), got {xi}")));
        }
        if axes == 0 {
            return Err(param("number of axes must be positive"));
        }
        if level == 0 || level > MAX_CANTOR_LEVEL {
            return Err(param(format!(
                "level must lie in 1..={MAX_CANTOR_LEVEL}, got {level}"
            )));
        }
        let per_axis = 1usize << level;
        let required = checked_pow(per_axis, axes).ok_or(LabError::PointCap {
            required: usize::MAX,
            cap,
        })?;
        if required > cap {
            return Err(LabError::PointCap { required, cap });
        }

        let mut left = vec![0.0_f64];
        let mut length = 1.0_f64;
        for _ in 0..level {
            let child = length * (1.0 - xi) / 2.0;
            left = left.iter().flat_map(|&a| [a, a + length - child]).collect();
            length = child;
        }
        let spacing = left
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        let factor = AxisFactor {
            values: left,
            weight: 1.0 / per_axis as f64,
        };
        Ok(Self::from_factor(
            SpaceKind::Cantor { xi, axes, level },
            factor,
            axes,
            1.0,
            spacing,
        ))
    }

    /// Uniform `side^dim` grid on `[0,1]^dim` with the sup metric.
    pub fn grid(dim: usize, side: usize, cap: usize) -> Result<Self> {
        if dim == 0 {
            return Err(param("grid dimension must be positive"));
        }
        if side < 2 {
            return Err(param(format!("grid side must be at least 2, got {side}")));
        }
        let required = checked_pow(side, dim).ok_or(LabError::PointCap {
            required: usize::MAX,
            cap,
        })?;
        if required > cap {
            return Err(LabError::PointCap { required, cap });
        }
        let h = 1.0 / (side - 1) as f64;
        let factor = AxisFactor {
            values: (0..side).map(|i| i as f64 * h).collect(),
            weight: 1.0 / side as f64,
        };
        Ok(Self::from_factor(
            SpaceKind::Grid { dim, side },
            factor,
            dim,
            1.0,
            h,
        ))
    }

    /// Two atoms at distance `gap` with masses `(1/2, 1/2)`.
    pub fn two_point(gap: f64) -> Result<Self> {
        if !(gap > 0.0 && gap.is_finite()) {
            return Err(param(format!("gap must be positive, got {gap}")));
        }
        Ok(Self {
            kind: SpaceKind::TwoPoint { gap },
            coords: vec![vec![0.0], vec![gap]],
            weights: vec![0.5, 0.5],
            metric: Metric::Sup,
            diameter: gap,
            min_spacing: gap,
            factor: None,
        })
    }

    /// Arbitrary atoms with the sup metric over their coordinates.
    pub fn custom(coords: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        Self::validate_atoms(&coords, &weights)?;
        let mut space = Self {
            kind: SpaceKind::Custom,
            coords,
            weights,
            metric: Metric::Sup,
            diameter: 0.0,
            min_spacing: 0.0,
            factor: None,
        };
        space.measure_extent();
        Ok(space)
    }

    /// Arbitrary atoms with an explicit distance matrix.
    pub fn with_metric_matrix(
        coords: Vec<Vec<f64>>,
        weights: Vec<f64>,
        matrix: Vec<Vec<f64>>,
    ) -> Result<Self> {
        Self::validate_atoms(&coords, &weights)?;
        let n = weights.len();
        if matrix.len() != n || matrix.iter().any(|row| row.len() != n) {
            return Err(param(format!("metric matrix must be {n} x {n}")));
        }
        if matrix
            .iter()
            .flatten()
            .any(|d| !(d.is_finite() && *d >= 0.0))
        {
            return Err(param(
                "metric matrix entries must be finite and nonnegative",
            ));
        }
        let mut space = Self {
            kind: SpaceKind::Custom,
            coords,
            weights,
            metric: Metric::Explicit(matrix.into_iter().flatten().collect()),
            diameter: 0.0,
            min_spacing: 0.0,
            factor: None,
        };
        space.measure_extent();
        Ok(space)
    }

    fn validate_atoms(coords: &[Vec<f64>], weights: &[f64]) -> Result<()> {
        if weights.is_empty() {
            return Err(param("space needs at least one point"));
        }
        if coords.len() != weights.len() {
            return Err(param(format!(
                "{} coordinate rows but {} weights",
                coords.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(param(format!("weights must be positive, found {w}")));
        }
        let dim = coords[0].len();
        if coords.iter().any(|c| c.len() != dim) {
            return Err(param("all coordinate rows must have the same length"));
        }
        Ok(())
    }

    fn from_factor(
        kind: SpaceKind,
        factor: AxisFactor,
        axes: usize,
        diameter: f64,
        min_spacing: f64,
    ) -> Self {
        let m = factor.values.len();
        let total = m.pow(axes as u32);
        let mut coords = Vec::with_capacity(total);
        for p in 0..total {
            let mut rest = p;
            let mut c = Vec::with_capacity(axes);
            for _ in 0..axes {
                c.push(factor.values[rest % m]);
                rest /= m;
            }
            coords.push(c);
        }
        let w = factor.weight.powi(axes as i32);
        Self {
            kind,
            coords,
            weights: vec![w; total],
            metric: Metric::Sup,
            diameter,
            min_spacing,
            factor: Some(factor),
        }
    }

    fn measure_extent(&mut self) {
        let n = self.len();
        let mut diam = 0.0_f64;
        let mut spacing = f64::INFINITY;
        for x in 0..n {
            for y in (x + 1)..n {
                let d = self.dist(x, y);
                diam = diam.max(d);
                if d > 0.0 {
                    spacing = spacing.min(d);
                }
            }
        }
        self.diameter = diam;
        self.min_spacing = if spacing.is_finite() { spacing } else { 0.0 };
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn kind(&self) -> &SpaceKind {
        &self.kind
    }

    /// Number of coordinate axes.
    pub fn axes(&self) -> usize {
        self.coords.first().map_or(0, Vec::len)
    }

    pub fn coords(&self, x: usize) -> &[f64] {
        &self.coords[x]
    }

    pub fn weight(&self, x: usize) -> f64 {
        self.weights[x]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Analytic diameter of the builder (1 for Cantor products and grids).
    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// Smallest positive distance between two atoms.
    pub fn min_spacing(&self) -> f64 {
        self.min_spacing
    }

    pub fn is_product(&self) -> bool {
        self.factor.is_some()
    }

    pub fn check_point(&self, x: usize) -> Result<()> {
        if x < self.len() {
            Ok(())
        } else {
            Err(LabError::UnknownPoint {
                id: x,
                len: self.len(),
            })
        }
    }

    pub fn dist(&self, x: usize, y: usize) -> f64 {
        match &self.metric {
            Metric::Sup => self.coords[x]
                .iter()
                .zip(&self.coords[y])
                .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs())),
            Metric::Explicit(m) => m[x * self.len() + y],
        }
    }

    /// The open ball `{y : d(x,y) < r}`.
    pub fn ball(&self, x: usize, r: f64) -> Result<BallQuery> {
        self.check_point(x)?;
        if !(r > 0.0) {
            return Err(param(format!("ball radius must be positive, got {r}")));
        }
        let members: Vec<usize> = (0..self.len()).filter(|&y| self.dist(x, y) < r).collect();
        let volume = members.iter().map(|&y| self.weights[y]).sum();
        Ok(BallQuery {
            center: x,
            radius: r,
            members,
            volume,
        })
    }

    /// Members of `B(x, r)` without the volume bookkeeping.
    pub fn ball_members(&self, x: usize, r: f64) -> Vec<usize> {
        (0..self.len()).filter(|&y| self.dist(x, y) < r).collect()
    }

    /// `V(x,r) = mu(B(x,r))`; product spaces multiply per-axis counts.
    pub fn volume(&self, x: usize, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        match &self.factor {
            Some(f) => self.coords[x]
                .iter()
                .map(|&c| f.count_within(c, r) as f64 * f.weight)
                .product(),
            None => self.volume_scan(x, r),
        }
    }

    /// `V(x,r)` by a direct scan over all atoms.
    pub fn volume_scan(&self, x: usize, r: f64) -> f64 {
        (0..self.len())
            .filter(|&y| self.dist(x, y) < r)
            .map(|y| self.weights[y])
            .sum()
    }

    /// Distance from `x` to the nearest member of `set`.
    pub fn dist_to_set(&self, x: usize, set: &[usize]) -> f64 {
        set.iter()
            .map(|&y| self.dist(x, y))
            .fold(f64::INFINITY, f64::min)
    }

    /// Atom closest (in coordinates, sup norm) to the given location.
    pub fn nearest_point(&self, location: &[f64]) -> usize {
        let mut best = (0, f64::INFINITY);
        for (p, c) in self.coords.iter().enumerate() {
            let d = c
                .iter()
                .zip(location)
                .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()));
            if d < best.1 {
                best = (p, d);
            }
        }
        best.0
    }

    /// Per-axis factor index of atom `p` on `axis` (product spaces only).
    pub fn factor_index(&self, p: usize, axis: usize) -> Option<usize> {
        let f = self.factor.as_ref()?;
        let m = f.values.len();
        Some((p / m.pow(axis as u32)) % m)
    }

    /// Atom obtained from `p` by moving its `axis` coordinate to factor index `k`.
    pub fn along_axis(&self, p: usize, axis: usize, k: usize) -> Option<usize> {
        let f = self.factor.as_ref()?;
        let m = f.values.len();
        let stride = m.pow(axis as u32);
        let current = (p / stride) % m;
        Some(p - current * stride + k * stride)
    }

    /// The one-dimensional factor coordinates and per-atom factor mass.
    pub fn factor(&self) -> Option<(&[f64], f64)> {
        self.factor
            .as_ref()
            .map(|f| (f.values.as_slice(), f.weight))
    }

    /// The corner `0 = (0,...,0)` of a Cantor product.
    pub fn corner_zero(&self) -> Result<usize> {
        match self.kind {
            SpaceKind::Cantor { .. } => Ok(0),
            _ => Err(LabError::WrongSpace {
                expected: "Cantor product",
            }),
        }
    }

    /// The atom nearest to `e1 = (1,0,...,0)` on a Cantor product.
    pub fn corner_e1(&self) -> Result<usize> {
        match self.kind {
            SpaceKind::Cantor { axes, .. } => {
                let mut target = vec![0.0; axes];
                target[0] = 1.0;
                Ok(self.nearest_point(&target))
            }
            _ => Err(LabError::WrongSpace {
                expected: "Cantor product",
            }),
        }
    }

    pub fn to_document(&self) -> SpaceDocument {
        let (metric, metric_matrix) = match &self.metric {
            Metric::Sup => (MetricKind::Sup, None),
            Metric::Explicit(m) => (
                MetricKind::Explicit,
                Some(m.chunks(self.len()).map(<[f64]>::to_vec).collect()),
            ),
        };
        SpaceDocument {
            points: (0..self.len()).collect(),
            coords: self.coords.clone(),
            weights: self.weights.clone(),
            metric,
            metric_matrix,
        }
    }

    pub fn from_document(doc: SpaceDocument) -> Result<Self> {
        if doc.points.len() != doc.weights.len() {
            return Err(param("`points` and `weights` differ in length"));
        }
        if doc.points.iter().enumerate().any(|(i, &p)| i != p) {
            return Err(param("point ids must be 0..n in order"));
        }
        match doc.metric {
            MetricKind::Sup => Self::custom(doc.coords, doc.weights),
            MetricKind::Explicit => {
                let matrix = doc
                    .metric_matrix
                    .ok_or_else(|| param("explicit metric requires `metric_matrix`"))?;
                Self::with_metric_matrix(doc.coords, doc.weights, matrix)
            }
        }
    }
}

fn checked_pow(base: usize, exp: usize) -> Option<usize> {
    (0..exp).try_fold(1usize, |acc, _| acc.checked_mul(base))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Sup,
    Explicit,
}

/// JSON form of a space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceDocument {
    pub points: Vec<usize>,
    pub coords: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub metric: MetricKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric_matrix: Option<Vec<Vec<f64>>>,
}

/// Largest violation found by a metric-axiom scan.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricScan {
    pub max_identity: f64,
    pub max_asymmetry: f64,
    pub max_triangle_excess: f64,
    pub triples: usize,
}

impl MetricScan {
    pub fn holds(&self, tol: f64) -> bool {
        self.max_identity <= tol && self.max_asymmetry <= tol && self.max_triangle_excess <= tol
    }
}

/// Checks the metric axioms on all triples when `n <= exhaustive_limit`,
/// otherwise on a deterministic stride sample of triples.
pub fn metric_axiom_scan(
    n: usize,
    dist: impl Fn(usize, usize) -> f64,
    exhaustive_limit: usize,
) -> MetricScan {
    let mut scan = MetricScan::default();
    let picks: Vec<usize> = if n <= exhaustive_limit {
        (0..n).collect()
    } else {
        let stride = n.div_ceil(exhaustive_limit);
        (0..n).step_by(stride).collect()
    };
    for &x in &picks {
        scan.max_identity = scan.max_identity.max(dist(x, x).abs());
        for &y in &picks {
            let dxy = dist(x, y);
            scan.max_asymmetry = scan.max_asymmetry.max((dxy - dist(y, x)).abs());
            for &z in &picks {
                let excess = dxy - dist(x, z) - dist(z, y);
                scan.max_triangle_excess = scan.max_triangle_excess.max(excess);
                scan.triples += 1;
            }
        }
    }
    scan
}

/// Two-sided power-law summary of ball volumes.
#[derive(Clone, Debug, PartialEq)]
pub struct VolumeFit {
    /// Least-squares slope of `log V(x,r)` against `log r`, averaged over `x`.
    pub alpha_hat: f64,
    /// Smallest `C` with `V(x,R)/V(x,r) <= C (R/r)^alpha_hat` on the grid.
    pub max_ratio: f64,
    pub per_point_slopes: Vec<f64>,
}

fn validate_radius_grid(space: &FiniteMMSpace, radii: &[f64]) -> Result<()> {
    if radii.len() < 4 {
        return Err(LabError::DegenerateGrid(format!(
            "need at least 4 radii, got {}",
            radii.len()
        )));
    }
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LabError::DegenerateGrid(
            "radii must be strictly increasing".into(),
        ));
    }
    if radii[0] <= 0.0 {
        return Err(LabError::DegenerateGrid(format!(
            "radius {} captures no points",
            radii[0]
        )));
    }
    if radii[radii.len() - 1] >= space.diameter() {
        return Err(LabError::DegenerateGrid(format!(
            "radius {} is not below the diameter {}",
            radii[radii.len() - 1],
            space.diameter()
        )));
    }
    Ok(())
}

pub(crate) fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}

fn per_point_slopes(space: &FiniteMMSpace, radii: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    use rayon::prelude::*;
    let log_r: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let volumes: Vec<Vec<f64>> = (0..space.len())
        .into_par_iter()
        .map(|x| radii.iter().map(|&r| space.volume(x, r)).collect())
        .collect();
    let slopes = volumes
        .iter()
        .map(|v| {
            let log_v: Vec<f64> = v.iter().map(|v| v.ln()).collect();
            least_squares_slope(&log_r, &log_v)
        })
        .collect();
    (slopes, volumes)
}

/// Fits the volume doubling exponent over a radius grid.
pub fn fit_vd_exponent(space: &FiniteMMSpace, radii: &[f64]) -> Result<VolumeFit> {
    validate_radius_grid(space, radii)?;
    let (slopes, volumes) = per_point_slopes(space, radii);
    let alpha_hat = slopes.iter().sum::<f64>() / slopes.len() as f64;
    let mut max_ratio = 1.0_f64;
    for v in &volumes {
        for i in 0..radii.len() {
            for j in i..radii.len() {
                let ratio = (v[j] / v[i]) / (radii[j] / radii[i]).powf(alpha_hat);
                max_ratio = max_ratio.max(ratio);
            }
        }
    }
    Ok(VolumeFit {
        alpha_hat,
        max_ratio,
        per_point_slopes: slopes,
    })
}

/// Fits the reverse doubling exponent: the smallest per-point slope.
pub fn fit_rvd_exponent(space: &FiniteMMSpace, radii: &[f64]) -> Result<f64> {
    validate_radius_grid(space, radii)?;
    let (slopes, _) = per_point_slopes(space, radii);
    Ok(slopes.into_iter().fold(f64::INFINITY, f64::min))
}

/// `count` radii `2^-k` for `k = k_max, ..., k_min`, increasing.
pub fn dyadic_radii(k_min: i32, k_max: i32) -> Vec<f64> {
    (k_min..=k_max).rev().map(|k| 2f64.powi(-k)).collect()
}
