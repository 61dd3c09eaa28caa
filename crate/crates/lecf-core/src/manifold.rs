//! Lorentz-model geometry kernels.
//!
//! Points live on the upper sheet of the hyperboloid
//! `{x : <x,x>_L = -C, x_0 > 0}` in Minkowski space with metric
//! `g_L = diag(-1, 1, ..., 1)`. Coordinate 0 is the time axis, coordinates
//! `1..=n` are the space axes. All functions here are pure.

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::rng;

/// Absolute tolerance for hyperboloid membership near the origin.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// Hyperbolic space of curvature `-1/C`, `C > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Curvature {
    c: f64,
}

impl Curvature {
    pub fn new(c: f64) -> Result<Self> {
        if c.is_finite() && c > 0.0 {
            Ok(Curvature { c })
        } else {
            Err(Error::InvalidConfig { what: "curvature constant C must be finite and > 0" })
        }
    }

    /// Curvature -1, the value used throughout.
    pub fn unit() -> Self {
        Curvature { c: 1.0 }
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn sqrt_c(&self) -> f64 {
        math::sqrt(self.c)
    }
}

impl Default for Curvature {
    fn default() -> Self {
        Curvature::unit()
    }
}

/// A point on the hyperboloid, stored as `n + 1` ambient coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HPoint {
    coords: Vec<f64>,
}

impl HPoint {
    /// Wrap raw coordinates, checking membership within `MEMBERSHIP_TOL`.
    pub fn new(coords: Vec<f64>, curvature: Curvature) -> Result<Self> {
        let dev = manifold_deviation(&coords, curvature);
        if dev > MEMBERSHIP_TOL || coords[0] <= 0.0 {
            return Err(Error::OffManifold { deviation: dev });
        }
        Ok(HPoint { coords })
    }

    /// Wrap coordinates assumed valid (e.g. produced by a closed form that
    /// lands on the hyperboloid by construction).
    pub fn from_unchecked(coords: Vec<f64>) -> Self {
        HPoint { coords }
    }

    /// The origin `(sqrt(C), 0, ..., 0)` of an `n`-dimensional space.
    pub fn origin(n: usize, curvature: Curvature) -> Self {
        let mut coords = vec![0.0; n + 1];
        coords[0] = curvature.sqrt_c();
        HPoint { coords }
    }

    /// Number of space axes (`n`, one less than the coordinate count).
    pub fn space_dim(&self) -> usize {
        self.coords.len() - 1
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn time(&self) -> f64 {
        self.coords[0]
    }

    pub fn spatial(&self) -> &[f64] {
        &self.coords[1..]
    }

    /// Rescale so that `<x,x>_L = -C` exactly (up to rounding), fixing the
    /// drift accumulated by repeated updates.
    pub fn renormalize(&mut self, curvature: Curvature) -> Result<()> {
        let inner = lorentz_inner(&self.coords, &self.coords)?;
        if inner >= 0.0 {
            return Err(Error::OffManifold { deviation: inner + curvature.c() });
        }
        let scale = math::sqrt(curvature.c() / -inner);
        for x in &mut self.coords {
            *x *= scale;
        }
        if self.coords[0] < 0.0 {
            for x in &mut self.coords {
                *x = -*x;
            }
        }
        Ok(())
    }
}

/// `<x,y>_L = -x_0 y_0 + sum_{i>=1} x_i y_i`.
pub fn lorentz_inner(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
    }
    Ok(lorentz_inner_unchecked(x, y))
}

pub(crate) fn lorentz_inner_unchecked(x: &[f64], y: &[f64]) -> f64 {
    -x[0] * y[0] + math::dot(&x[1..], &y[1..])
}

/// `sqrt(|<v,v>_L|)`. The absolute value keeps the norm real for time-like
/// vectors; normalization formulas downstream rely on that convention.
pub fn lorentz_norm(v: &[f64]) -> f64 {
    math::sqrt(lorentz_inner_unchecked(v, v).abs())
}

/// `|<x,x>_L + C|`, the absolute hyperboloid membership defect.
pub fn manifold_deviation(coords: &[f64], curvature: Curvature) -> f64 {
    (lorentz_inner_unchecked(coords, coords) + curvature.c()).abs()
}

/// Membership defect scaled by the coordinate magnitude, for points far from
/// the origin where the inner product itself carries rounding of order
/// `eps * |x|^2`.
pub fn relative_manifold_deviation(coords: &[f64], curvature: Curvature) -> f64 {
    manifold_deviation(coords, curvature) / math::sq_norm(coords).max(1.0)
}

/// Geodesic distance `sqrt(C) * arcosh(-<x,y>_L / C)`.
///
/// The arcosh argument is clamped to `[1, 1e15]` before evaluation. Inputs
/// are rejected when their relative membership defect exceeds `1e-6`.
pub fn lorentz_distance(x: &HPoint, y: &HPoint, curvature: Curvature) -> Result<f64> {
    const DOMAIN_TOL: f64 = 1e-6;
    for p in [x, y] {
        let dev = relative_manifold_deviation(p.coords(), curvature);
        if dev > DOMAIN_TOL {
            return Err(Error::OffManifold { deviation: dev });
        }
    }
    let inner = lorentz_inner(x.coords(), y.coords())?;
    Ok(curvature.sqrt_c() * math::acosh_clamped(-inner / curvature.c()))
}

/// Distance on raw coordinate slices without a membership check; used inside
/// hot loops where the caller maintains the invariant.
pub(crate) fn distance_unchecked(x: &[f64], y: &[f64], curvature: Curvature) -> f64 {
    let inner = lorentz_inner_unchecked(x, y);
    curvature.sqrt_c() * math::acosh_clamped(-inner / curvature.c())
}

/// Lift spatial coordinates onto the hyperboloid:
/// `(sqrt(C + |spatial|^2), spatial)`.
pub fn project_to_hyperboloid(spatial: &[f64], curvature: Curvature) -> HPoint {
    let mut coords = Vec::with_capacity(spatial.len() + 1);
    coords.push(math::sqrt(curvature.c() + math::sq_norm(spatial)));
    coords.extend_from_slice(spatial);
    HPoint { coords }
}

/// What a Lorentz map was built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MapKind {
    Boost,
    Rotation,
    Composite,
    /// Built from a learned message (no metric-compatibility guarantee).
    Learned,
}

/// An `(n+1) x (n+1)` real matrix acting on hyperboloid points.
///
/// For `Boost` / `Rotation` / `Composite` kinds the matrix is
/// metric-compatible (`A g_L A^T = g_L`) within `1e-9`; `Learned` maps carry
/// no such constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorentzMap {
    entries: Vec<f64>,
    dim: usize, // n; the matrix is (n+1) x (n+1)
    kind: MapKind,
}

impl LorentzMap {
    pub fn identity(n: usize) -> Self {
        let mut m = LorentzMap { entries: vec![0.0; (n + 1) * (n + 1)], dim: n, kind: MapKind::Composite };
        for i in 0..=n {
            *m.at_mut(i, i) = 1.0;
        }
        m
    }

    pub(crate) fn from_rows(entries: Vec<f64>, dim: usize, kind: MapKind) -> Self {
        debug_assert_eq!(entries.len(), (dim + 1) * (dim + 1));
        LorentzMap { entries, dim, kind }
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    /// Number of space axes `n`.
    pub fn space_dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.entries[row * (self.dim + 1) + col]
    }

    fn at_mut(&mut self, row: usize, col: usize) -> &mut f64 {
        &mut self.entries[row * (self.dim + 1) + col]
    }

    /// Matrix-vector product on raw coordinates.
    pub fn apply_coords(&self, x: &[f64]) -> Result<Vec<f64>> {
        let m = self.dim + 1;
        if x.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: x.len() });
        }
        let mut out = vec![0.0; m];
        for (r, o) in out.iter_mut().enumerate() {
            *o = math::dot(&self.entries[r * m..(r + 1) * m], x);
        }
        Ok(out)
    }

    /// Apply to a point. Metric-compatible maps return the image unchecked
    /// (it stays on the hyperboloid up to rounding).
    pub fn apply(&self, x: &HPoint) -> Result<HPoint> {
        Ok(HPoint::from_unchecked(self.apply_coords(x.coords())?))
    }

    /// `self . other` (apply `other` first).
    pub fn compose(&self, other: &LorentzMap) -> Result<LorentzMap> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        let m = self.dim + 1;
        let mut entries = vec![0.0; m * m];
        for r in 0..m {
            for k in 0..m {
                let a = self.entry(r, k);
                if a == 0.0 {
                    continue;
                }
                for c in 0..m {
                    entries[r * m + c] += a * other.entry(k, c);
                }
            }
        }
        Ok(LorentzMap { entries, dim: self.dim, kind: MapKind::Composite })
    }

    /// `max |(A g_L A^T - g_L)_{rc}|`.
    pub fn metric_deviation(&self) -> f64 {
        let m = self.dim + 1;
        let mut worst = 0.0f64;
        for r in 0..m {
            for c in 0..m {
                // (A g_L A^T)_{rc} = -A_{r0} A_{c0} + sum_{k>=1} A_{rk} A_{ck}
                let mut v = -self.entry(r, 0) * self.entry(c, 0);
                for k in 1..m {
                    v += self.entry(r, k) * self.entry(c, k);
                }
                let target = if r != c {
                    0.0
                } else if r == 0 {
                    -1.0
                } else {
                    1.0
                };
                worst = worst.max((v - target).abs());
            }
        }
        worst
    }
}

/// Lorentz boost of hyperbolic angle `alpha` mixing the time axis with one
/// space axis; identity on all other axes.
pub fn make_boost(alpha: f64, space_axis: usize, n: usize) -> Result<LorentzMap> {
    if space_axis < 1 || space_axis > n {
        return Err(Error::AxisOutOfRange { axis: space_axis, dim: n });
    }
    let mut m = LorentzMap::identity(n);
    let (ch, sh) = (math::cosh(alpha), math::sinh(alpha));
    *m.at_mut(0, 0) = ch;
    *m.at_mut(0, space_axis) = sh;
    *m.at_mut(space_axis, 0) = sh;
    *m.at_mut(space_axis, space_axis) = ch;
    m.kind = MapKind::Boost;
    Ok(m)
}

/// Block map `[[1, 0], [0, R]]` from an `n x n` orthogonal matrix `R`
/// (row-major). Fixes the time coordinate of every point.
pub fn make_rotation(r: &[f64], n: usize) -> Result<LorentzMap> {
    if r.len() != n * n {
        return Err(Error::DimensionMismatch { expected: n * n, got: r.len() });
    }
    // check R^T R = I
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let mut v = 0.0;
            for k in 0..n {
                v += r[k * n + i] * r[k * n + j];
            }
            let target = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((v - target).abs());
        }
    }
    if dev > 1e-9 {
        return Err(Error::NotOrthogonal { deviation: dev });
    }
    let mut m = LorentzMap::identity(n);
    for i in 0..n {
        for j in 0..n {
            *m.at_mut(i + 1, j + 1) = r[i * n + j];
        }
    }
    m.kind = MapKind::Rotation;
    Ok(m)
}

/// Planar rotation by angle `beta` acting on space axes `(axis_a, axis_b)`,
/// as used by the transformation probes.
pub fn make_planar_rotation(beta: f64, axis_a: usize, axis_b: usize, n: usize) -> Result<LorentzMap> {
    for axis in [axis_a, axis_b] {
        if axis < 1 || axis > n {
            return Err(Error::AxisOutOfRange { axis, dim: n });
        }
    }
    if axis_a == axis_b {
        return Err(Error::InvalidConfig { what: "rotation plane needs two distinct axes" });
    }
    let mut r = vec![0.0; n * n];
    for i in 0..n {
        r[i * n + i] = 1.0;
    }
    let (a, b) = (axis_a - 1, axis_b - 1);
    let (c, s) = (math::cos(beta), math::sin(beta));
    r[a * n + a] = c;
    r[a * n + b] = -s;
    r[b * n + a] = s;
    r[b * n + b] = c;
    make_rotation(&r, n)
}

/// Random orthogonal `n x n` matrix with determinant +1, by Gram-Schmidt on
/// a seeded Gaussian matrix.
fn random_special_orthogonal(rng: &mut rand_chacha::ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut rows: Vec<Vec<f64>> = (0..n).map(|_| rng::normal_vec(rng, n, 1.0)).collect();
    for i in 0..n {
        for j in 0..i {
            let proj = math::dot(&rows[i], &rows[j]);
            for k in 0..n {
                rows[i][k] -= proj * rows[j][k];
            }
        }
        let norm = math::sqrt(math::sq_norm(&rows[i]));
        // Degenerate draws are measure-zero; resample deterministically.
        if norm < 1e-12 {
            rows[i] = rng::normal_vec(rng, n, 1.0);
            for j in 0..i {
                let proj = math::dot(&rows[i], &rows[j]);
                for k in 0..n {
                    rows[i][k] -= proj * rows[j][k];
                }
            }
        }
        let norm = math::sqrt(math::sq_norm(&rows[i]));
        for k in 0..n {
            rows[i][k] /= norm;
        }
    }
    let mut flat: Vec<f64> = rows.into_iter().flatten().collect();
    if determinant(&flat, n) < 0.0 {
        // Flip one row to land in SO(n).
        for k in 0..n {
            flat[k] = -flat[k];
        }
    }
    flat
}

fn determinant(matrix: &[f64], n: usize) -> f64 {
    let mut m = matrix.to_vec();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&a, &b| m[a * n + col].abs().partial_cmp(&m[b * n + col].abs()).unwrap())
            .unwrap();
        if m[pivot * n + col].abs() < 1e-300 {
            return 0.0;
        }
        if pivot != col {
            for k in 0..n {
                m.swap(col * n + k, pivot * n + k);
            }
            det = -det;
        }
        det *= m[col * n + col];
        for row in col + 1..n {
            let f = m[row * n + col] / m[col * n + col];
            for k in col..n {
                m[row * n + k] -= f * m[col * n + k];
            }
        }
    }
    det
}

/// Seeded random Lorentz transformation `rotation . boost(alpha, axis 1)`
/// with `alpha` uniform in `alpha_range`.
pub fn random_transform(seed: u64, alpha_range: (f64, f64), n: usize) -> LorentzMap {
    let mut rng = rng::seeded(seed);
    let alpha = if alpha_range.0 == alpha_range.1 {
        alpha_range.0
    } else {
        rng.gen_range(alpha_range.0..alpha_range.1)
    };
    let r = random_special_orthogonal(&mut rng, n);
    let rotation = make_rotation(&r, n).expect("Gram-Schmidt output is orthogonal");
    let boost = make_boost(alpha, 1, n).expect("axis 1 valid for n >= 1");
    rotation.compose(&boost).expect("matching dimensions")
}
