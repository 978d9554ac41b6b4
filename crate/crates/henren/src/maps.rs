//! Planar maps with exact derivatives, orbits and derivative cocycles.

use std::sync::Arc;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::charts::GridChart;
use crate::error::{Error, Result};
use crate::jet::{Jet, Scalar};
use crate::numeric::{linspace, solve_monotone};
use crate::unimodal::{Map1D, UnimodalMap};

const ESCAPE: f64 = 1e12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn dist(&self, o: &Point2) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Projective tangent direction, stored as a unit vector with a canonical sign.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Direction {
    pub ux: f64,
    pub uy: f64,
}

impl Direction {
    pub fn new(x: f64, y: f64) -> Self {
        let n = x.hypot(y);
        assert!(n > 0.0 && n.is_finite(), "direction needs a nonzero finite representative");
        let (mut ux, mut uy) = (x / n, y / n);
        if uy < 0.0 || (uy == 0.0 && ux < 0.0) {
            ux = -ux;
            uy = -uy;
        }
        Direction { ux, uy }
    }

    pub fn horizontal() -> Self {
        Direction { ux: 1.0, uy: 0.0 }
    }

    pub fn vertical() -> Self {
        Direction { ux: 0.0, uy: 1.0 }
    }

    pub fn from_angle(theta: f64) -> Self {
        Direction::new(theta.cos(), theta.sin())
    }

    pub fn vector(&self) -> Vector2<f64> {
        Vector2::new(self.ux, self.uy)
    }

    /// Unoriented angle between two directions, in `[0, π/2]`.
    pub fn angle_to(&self, o: &Direction) -> f64 {
        let c = (self.ux * o.ux + self.uy * o.uy).abs().min(1.0);
        let s = (self.ux * o.uy - self.uy * o.ux).abs();
        s.atan2(c)
    }

    /// Signed angle from the vertical, in `(-π/2, π/2]`.
    pub fn angle_from_vertical(&self) -> f64 {
        self.ux.atan2(self.uy)
    }
}

impl PartialEq for Direction {
    fn eq(&self, o: &Direction) -> bool {
        self.angle_to(o) < 1e-12
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Self {
        Interval { lo: a.min(b), hi: a.max(b) }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn padded(&self, pad: f64) -> Self {
        Interval { lo: self.lo - pad, hi: self.hi + pad }
    }

    pub fn hull(&self, x: f64) -> Self {
        Interval { lo: self.lo.min(x), hi: self.hi.max(x) }
    }

    pub fn overlap(&self, o: &Interval) -> f64 {
        (self.hi.min(o.hi) - self.lo.max(o.lo)).max(0.0)
    }

    pub fn intersects(&self, o: &Interval) -> bool {
        self.lo <= o.hi && o.lo <= self.hi
    }
}

impl From<[f64; 2]> for Interval {
    fn from(a: [f64; 2]) -> Self {
        Interval::new(a[0], a[1])
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.lo, i.hi]
    }
}

/// Axis-aligned rectangle, serialized as `[[x0, x1], [y0, y1]]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[[f64; 2]; 2]", into = "[[f64; 2]; 2]")]
pub struct Rect {
    pub x: Interval,
    pub y: Interval,
}

impl Rect {
    pub fn new(x: Interval, y: Interval) -> Self {
        Rect { x, y }
    }

    pub fn square(i: Interval) -> Self {
        Rect { x: i, y: i }
    }

    pub fn contains(&self, p: Point2) -> bool {
        let tol = 1e-9 * self.x.width().max(self.y.width()).max(1e-300);
        p.x >= self.x.lo - tol && p.x <= self.x.hi + tol && p.y >= self.y.lo - tol && p.y <= self.y.hi + tol
    }

    pub fn padded(&self, fraction: f64) -> Self {
        Rect {
            x: self.x.padded(fraction * self.x.width()),
            y: self.y.padded(fraction * self.y.width()),
        }
    }

    /// `n × n` grid of points, row-major in `y`.
    pub fn grid(&self, nx: usize, ny: usize) -> Vec<Point2> {
        let xs = linspace(self.x.lo, self.x.hi, nx);
        let ys = linspace(self.y.lo, self.y.hi, ny);
        ys.iter().flat_map(|&y| xs.iter().map(move |&x| Point2::new(x, y))).collect()
    }
}

impl From<[[f64; 2]; 2]> for Rect {
    fn from(a: [[f64; 2]; 2]) -> Self {
        Rect { x: a[0].into(), y: a[1].into() }
    }
}

impl From<Rect> for [[f64; 2]; 2] {
    fn from(r: Rect) -> Self {
        [r.x.into(), r.y.into()]
    }
}

/// Affine map `S(x) = scale * x + shift` used to normalize renormalizations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationAffine {
    pub scale: f64,
    pub shift: f64,
}

impl NormalizationAffine {
    pub const IDENTITY: NormalizationAffine = NormalizationAffine { scale: 1.0, shift: 0.0 };

    /// The affine map sending `c` to 0 with the given scale.
    pub fn centered(scale: f64, c: f64) -> Self {
        NormalizationAffine { scale, shift: -scale * c }
    }

    pub fn apply(&self, x: f64) -> f64 {
        self.scale * x + self.shift
    }

    pub fn invert(&self, u: f64) -> f64 {
        (u - self.shift) / self.scale
    }

    fn fwd<S: Scalar>(&self, x: S) -> S {
        x * self.scale + self.shift
    }

    fn inv<S: Scalar>(&self, u: S) -> S {
        (u - self.shift) * (1.0 / self.scale)
    }

    pub fn then(&self, next: &NormalizationAffine) -> NormalizationAffine {
        NormalizationAffine { scale: next.scale * self.scale, shift: next.scale * self.shift + next.shift }
    }

    pub fn image(&self, i: Interval) -> Interval {
        Interval::new(self.apply(i.lo), self.apply(i.hi))
    }
}

/// Genuinely horizontal straightening chart of a return `G^R`.
///
/// Vertical leaves are the level sets of `ℓ(x, y) = π_h G^{R-1}(x, y)` and
/// horizontal lines are kept. Both coordinates are relabelled through the
/// inverse of `k(x) = ℓ(x, ystar)` restricted to `leaf_range`, which makes the
/// conjugated return exactly of the form `(f(x, y), x)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Straightening {
    pub ystar: f64,
    pub leaf_range: Interval,
    /// Interval around the leaf range on which the leaf label is monotone.
    pub monotone: Interval,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChartRef {
    Identity,
    Straightening(Straightening),
    /// Path of a stored grid chart artifact, resolved by [`MapSpec::resolve_artifacts`].
    Artifact { path: String },
    #[serde(skip)]
    Grid(Arc<GridChart>),
}

impl PartialEq for ChartRef {
    fn eq(&self, o: &ChartRef) -> bool {
        match (self, o) {
            (ChartRef::Identity, ChartRef::Identity) => true,
            (ChartRef::Straightening(a), ChartRef::Straightening(b)) => a == b,
            (ChartRef::Artifact { path: a }, ChartRef::Artifact { path: b }) => a == b,
            (ChartRef::Grid(a), ChartRef::Grid(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum MapSpec {
    Henon {
        a: f64,
        b: f64,
        domain: Rect,
    },
    #[serde(rename = "quadratic_1d_embedding")]
    Quadratic1DEmbedding {
        a: f64,
        domain: Rect,
    },
    /// Linear map `p ↦ M p`, used for closed-form checks.
    Linear {
        m: [[f64; 2]; 2],
        domain: Rect,
    },
    /// `rescale ∘ chart ∘ inner^iterates ∘ chart⁻¹ ∘ rescale⁻¹`, rescale acting
    /// on both coordinates.
    ChartConjugated {
        inner: Box<MapSpec>,
        iterates: usize,
        chart: ChartRef,
        rescale: NormalizationAffine,
        domain: Rect,
    },
}

/// Invariant interval radius for `x² + a` thickened by the Jacobian.
fn quadratic_radius(a: f64, b: f64) -> f64 {
    let s = 1.0 + b.abs();
    let disc = (s * s - 4.0 * a).max(0.0);
    ((s + disc.sqrt()) / 2.0).max(1.0)
}

impl MapSpec {
    pub fn henon(a: f64, b: f64) -> Self {
        let r = quadratic_radius(a, b) * if b == 0.0 { 1.0 } else { 1.05 };
        MapSpec::Henon { a, b, domain: Rect::square(Interval::new(-r, r)) }
    }

    pub fn quadratic_embedding(a: f64) -> Self {
        let r = quadratic_radius(a, 0.0);
        MapSpec::Quadratic1DEmbedding { a, domain: Rect::square(Interval::new(-r, r)) }
    }

    pub fn linear(m: [[f64; 2]; 2], domain: Rect) -> Self {
        MapSpec::Linear { m, domain }
    }

    pub fn diagonal(d0: f64, d1: f64) -> Self {
        MapSpec::Linear { m: [[d0, 0.0], [0.0, d1]], domain: Rect::square(Interval::new(-1e6, 1e6)) }
    }

    pub fn domain(&self) -> Rect {
        match self {
            MapSpec::Henon { domain, .. }
            | MapSpec::Quadratic1DEmbedding { domain, .. }
            | MapSpec::Linear { domain, .. }
            | MapSpec::ChartConjugated { domain, .. } => *domain,
        }
    }

    pub fn with_domain(mut self, d: Rect) -> Self {
        match &mut self {
            MapSpec::Henon { domain, .. }
            | MapSpec::Quadratic1DEmbedding { domain, .. }
            | MapSpec::Linear { domain, .. }
            | MapSpec::ChartConjugated { domain, .. } => *domain = d,
        }
        self
    }

    /// Constant Jacobian determinant, when the variant has one.
    pub fn constant_jacobian(&self) -> Option<f64> {
        match self {
            MapSpec::Henon { b, .. } => Some(*b),
            MapSpec::Quadratic1DEmbedding { .. } => Some(0.0),
            MapSpec::Linear { m, .. } => Some(m[0][0] * m[1][1] - m[0][1] * m[1][0]),
            MapSpec::ChartConjugated { .. } => None,
        }
    }

    /// The map underlying all chart conjugations.
    pub fn base(&self) -> &MapSpec {
        match self {
            MapSpec::ChartConjugated { inner, .. } => inner.base(),
            m => m,
        }
    }

    fn check(&self, p: Point2) -> Result<()> {
        if !p.is_finite() || !self.domain().contains(p) {
            return Err(Error::OutOfDomain { x: p.x, y: p.y });
        }
        Ok(())
    }

    pub fn eval(&self, p: Point2) -> Result<Point2> {
        self.check(p)?;
        let (x, y) = self.apply(p.x, p.y)?;
        Ok(Point2::new(x, y))
    }

    /// Value and all partial derivatives up to order two of both components.
    pub fn jet(&self, p: Point2) -> Result<(Jet, Jet)> {
        self.check(p)?;
        self.apply(Jet::var_x(p.x), Jet::var_y(p.y))
    }

    pub fn jacobian(&self, p: Point2) -> Result<Matrix2<f64>> {
        let (f, g) = self.jet(p)?;
        Ok(jacobian_of(&f, &g))
    }

    /// Evaluation without the domain check, on any scalar type.
    pub fn apply<S: Scalar>(&self, x: S, y: S) -> Result<(S, S)> {
        let out = match self {
            MapSpec::Henon { a, b, .. } => (x * x - y * *b + *a, x),
            MapSpec::Quadratic1DEmbedding { a, .. } => (x * x + *a, x),
            MapSpec::Linear { m, .. } => (x * m[0][0] + y * m[0][1], x * m[1][0] + y * m[1][1]),
            MapSpec::ChartConjugated { inner, iterates, chart, rescale, .. } => {
                conjugated_apply(inner, *iterates, chart, rescale, x, y)?
            }
        };
        if !(out.0.val().abs() < ESCAPE && out.1.val().abs() < ESCAPE) {
            return Err(Error::OrbitEscaped { step: 0 });
        }
        Ok(out)
    }

    /// `n` unchecked iterates.
    pub fn iterate<S: Scalar>(&self, mut x: S, mut y: S, n: usize) -> Result<(S, S)> {
        for step in 0..n {
            (x, y) = self.apply(x, y).map_err(|e| match e {
                Error::OrbitEscaped { .. } => Error::OrbitEscaped { step },
                e => e,
            })?;
        }
        Ok((x, y))
    }

    pub fn iterate_point(&self, p: Point2, n: usize) -> Result<Point2> {
        let (x, y) = self.iterate(p.x, p.y, n)?;
        Ok(Point2::new(x, y))
    }

    /// Exact inverse, when the map is invertible at `p`.
    pub fn inverse(&self, p: Point2) -> Result<Point2> {
        match self {
            MapSpec::Henon { a, b, .. } => {
                if *b == 0.0 {
                    return Err(Error::SingularJacobian { step: 0 });
                }
                Ok(Point2::new(p.y, (p.y * p.y + a - p.x) / b))
            }
            MapSpec::Quadratic1DEmbedding { .. } => Err(Error::SingularJacobian { step: 0 }),
            MapSpec::Linear { m, .. } => {
                let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
                if det == 0.0 {
                    return Err(Error::SingularJacobian { step: 0 });
                }
                Ok(Point2::new((m[1][1] * p.x - m[0][1] * p.y) / det, (m[0][0] * p.y - m[1][0] * p.x) / det))
            }
            MapSpec::ChartConjugated { inner, iterates, chart, rescale, .. } => {
                let q = Point2::new(rescale.invert(p.x), rescale.invert(p.y));
                let mut z = chart_inverse(inner, *iterates, chart, q)?;
                for _ in 0..*iterates {
                    z = inner.inverse(z)?;
                }
                let w = chart_forward(inner, *iterates, chart, z)?;
                Ok(Point2::new(rescale.apply(w.x), rescale.apply(w.y)))
            }
        }
    }

    /// For a chart-conjugated map: the point of the inner coordinates that
    /// corresponds to normalized coordinates `(u, w)`.
    pub fn to_inner(&self, p: Point2) -> Result<Point2> {
        match self {
            MapSpec::ChartConjugated { inner, iterates, chart, rescale, .. } => {
                chart_inverse(inner, *iterates, chart, Point2::new(rescale.invert(p.x), rescale.invert(p.y)))
            }
            _ => Ok(p),
        }
    }

    /// Inverse of [`MapSpec::to_inner`].
    pub fn from_inner(&self, p: Point2) -> Result<Point2> {
        match self {
            MapSpec::ChartConjugated { inner, iterates, chart, rescale, .. } => {
                let q = chart_forward(inner, *iterates, chart, p)?;
                Ok(Point2::new(rescale.apply(q.x), rescale.apply(q.y)))
            }
            _ => Ok(p),
        }
    }

    /// Sup over the domain sample of `|π_v F(u, w) − u|`.
    pub fn henon_like_residual(&self, n: usize) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for p in self.domain().grid(n, n) {
            let q = self.apply(p.x, p.y)?;
            worst = worst.max((q.1 - p.x).abs());
        }
        Ok(worst)
    }

    /// Replace artifact references by loaded grid charts, resolving relative
    /// paths against `dir`.
    pub fn resolve_artifacts(&mut self, dir: &std::path::Path) -> Result<()> {
        if let MapSpec::ChartConjugated { inner, chart, .. } = self {
            inner.resolve_artifacts(dir)?;
            if let ChartRef::Artifact { path } = chart {
                let full = dir.join(&*path);
                let g = GridChart::load(&full)?;
                *chart = ChartRef::Grid(Arc::new(g));
            }
        }
        Ok(())
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<MapSpec> {
        let text = std::fs::read_to_string(path)?;
        let mut spec: MapSpec = serde_json::from_str(&text)?;
        spec.resolve_artifacts(path.parent().unwrap_or(std::path::Path::new(".")))?;
        Ok(spec)
    }
}

pub fn jacobian_of(f: &Jet, g: &Jet) -> Matrix2<f64> {
    Matrix2::new(f.dx, f.dy, g.dx, g.dy)
}

/// `π_h G^{R-1}(x, y)`: its level sets are the vertical leaves of the return.
pub(crate) fn leaf_label<S: Scalar>(inner: &MapSpec, r: usize, x: S, y: S) -> Result<S> {
    Ok(inner.iterate(x, y, r - 1)?.0)
}

impl Straightening {
    pub(crate) fn k<S: Scalar>(&self, inner: &MapSpec, r: usize, x: S) -> Result<S> {
        leaf_label(inner, r, x, S::cst(self.ystar))
    }

    fn bracket(&self) -> (f64, f64) {
        (self.monotone.lo, self.monotone.hi)
    }

    /// Solve `ℓ(x, y) = t` for `x`.
    fn solve_leaf<S: Scalar>(&self, inner: &MapSpec, r: usize, y: S, t: S, guess: f64) -> Result<S> {
        let (lo, hi) = self.bracket();
        let y0 = y.val();
        let x0 = solve_monotone(
            |x| {
                let l = leaf_label(inner, r, Jet::var_x(x), Jet::constant(y0))?;
                Ok((l.v, l.dx))
            },
            t.val(),
            lo,
            hi,
            guess,
        )
        .map_err(|e| Error::ChartFailure(format!("leaf solve: {e}")))?;
        if !S::DIFF {
            return Ok(S::cst(x0));
        }
        let l = leaf_label(inner, r, Jet::var_x(x0), Jet::var_y(y0))?;
        if l.dx == 0.0 {
            return Err(Error::ChartFailure("leaf function has a critical point".into()));
        }
        let x_t = 1.0 / l.dx;
        let x_y = -l.dy / l.dx;
        let outer = Jet {
            v: x0,
            dx: x_y,
            dy: x_t,
            dxx: -(l.dxx * x_y * x_y + 2.0 * l.dxy * x_y + l.dyy) / l.dx,
            dxy: -(l.dxx * x_y * x_t + l.dxy * x_t) / l.dx,
            dyy: -l.dxx * x_t * x_t / l.dx,
        };
        Ok(S::compose(&outer, y, t))
    }

    /// `k⁻¹(t)` on the leaf range.
    pub(crate) fn k_inverse<S: Scalar>(&self, inner: &MapSpec, r: usize, t: S, guess: f64) -> Result<S> {
        let (lo, hi) = self.bracket();
        let z0 = solve_monotone(
            |z| {
                let k = self.k(inner, r, Jet::var_x(z))?;
                Ok((k.v, k.dx))
            },
            t.val(),
            lo,
            hi,
            guess,
        )
        .map_err(|e| Error::ChartFailure(format!("label inversion: {e}")))?;
        if !S::DIFF {
            return Ok(S::cst(z0));
        }
        let k = self.k(inner, r, Jet::var_x(z0))?;
        if k.dx == 0.0 {
            return Err(Error::ChartFailure("leaf labels are not monotone".into()));
        }
        Ok(t.apply(z0, 1.0 / k.dx, -k.dxx / (k.dx * k.dx * k.dx)))
    }
}

fn conjugated_apply<S: Scalar>(
    inner: &MapSpec,
    r: usize,
    chart: &ChartRef,
    rescale: &NormalizationAffine,
    u: S,
    w: S,
) -> Result<(S, S)> {
    let xu = rescale.inv(u);
    let xw = rescale.inv(w);
    match chart {
        ChartRef::Identity => {
            let (x, y) = inner.iterate(xu, xw, r)?;
            Ok((rescale.fwd(x), rescale.fwd(y)))
        }
        ChartRef::Straightening(st) => {
            let y = st.k(inner, r, xw)?;
            let t = st.k(inner, r, xu)?;
            let x = st.solve_leaf(inner, r, y, t, xu.val())?;
            let (fx, fy) = inner.iterate(x, y, r)?;
            let lq = leaf_label(inner, r, fx, fy)?;
            let first = st.k_inverse(inner, r, lq, fx.val())?;
            let second = st.k_inverse(inner, r, fy, xu.val())?;
            Ok((rescale.fwd(first), rescale.fwd(second)))
        }
        ChartRef::Grid(g) => {
            let p = g.inverse_scalar(xu, xw)?;
            let (fx, fy) = inner.iterate(p.0, p.1, r)?;
            let q = g.forward_scalar(fx, fy)?;
            Ok((rescale.fwd(q.0), rescale.fwd(q.1)))
        }
        ChartRef::Artifact { path } => Err(Error::ChartFailure(format!("unresolved chart artifact {path}"))),
    }
}

fn chart_inverse(inner: &MapSpec, r: usize, chart: &ChartRef, q: Point2) -> Result<Point2> {
    match chart {
        ChartRef::Identity => Ok(q),
        ChartRef::Straightening(st) => {
            let y = st.k(inner, r, q.y)?;
            let t = st.k(inner, r, q.x)?;
            let x = st.solve_leaf(inner, r, y, t, q.x)?;
            Ok(Point2::new(x, y))
        }
        ChartRef::Grid(g) => {
            let p = g.inverse_scalar(q.x, q.y)?;
            Ok(Point2::new(p.0, p.1))
        }
        ChartRef::Artifact { path } => Err(Error::ChartFailure(format!("unresolved chart artifact {path}"))),
    }
}

fn chart_forward(inner: &MapSpec, r: usize, chart: &ChartRef, p: Point2) -> Result<Point2> {
    match chart {
        ChartRef::Identity => Ok(p),
        ChartRef::Straightening(st) => {
            let l = leaf_label(inner, r, p.x, p.y)?;
            let u = st.k_inverse(inner, r, l, p.x)?;
            let w = st.k_inverse(inner, r, p.y, p.x)?;
            Ok(Point2::new(u, w))
        }
        ChartRef::Grid(g) => {
            let q = g.forward_scalar(p.x, p.y)?;
            Ok(Point2::new(q.0, q.1))
        }
        ChartRef::Artifact { path } => Err(Error::ChartFailure(format!("unresolved chart artifact {path}"))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Time {
    Forward,
    Backward,
}

/// Orbit together with the derivative cocycle along a tracked direction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrbitCocycle {
    pub time: Time,
    /// `M + 1` orbit points, starting at the base point.
    pub points: Vec<Point2>,
    /// Derivative of one step of the orbit (of `F` forward, of `F⁻¹` backward) at `points[m]`.
    pub jacobians: Vec<[[f64; 2]; 2]>,
    /// Tracked direction at each orbit point.
    pub directions: Vec<Direction>,
    /// `log ‖DF^{±m}|_E‖` for `m = 0..=M`.
    pub log_stretch: Vec<f64>,
    /// `log |Jac F^{±m}|` for `m = 0..=M`.
    pub log_jac: Vec<f64>,
}

impl OrbitCocycle {
    pub fn len(&self) -> usize {
        self.log_stretch.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stretch(&self, m: usize) -> f64 {
        self.log_stretch[m].exp()
    }

    pub fn jac(&self, m: usize) -> f64 {
        self.log_jac[m].exp()
    }
}

fn to_array(m: &Matrix2<f64>) -> [[f64; 2]; 2] {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

/// Propagate the direction `e0` along the orbit of `p0` for `m` steps.
pub fn orbit_cocycle(map: &MapSpec, p0: Point2, e0: Direction, m: usize, time: Time) -> Result<OrbitCocycle> {
    let domain = map.domain();
    if !p0.is_finite() || !domain.contains(p0) {
        return Err(Error::OrbitEscaped { step: 0 });
    }
    let mut out = OrbitCocycle {
        time,
        points: vec![p0],
        jacobians: Vec::with_capacity(m),
        directions: vec![e0],
        log_stretch: vec![0.0],
        log_jac: vec![0.0],
    };
    let mut p = p0;
    let mut e = e0.vector();
    for step in 0..m {
        let (next, d) = match time {
            Time::Forward => {
                let (f, g) = map.apply(Jet::var_x(p.x), Jet::var_y(p.y)).map_err(|err| step_error(err, step))?;
                (Point2::new(f.v, g.v), jacobian_of(&f, &g))
            }
            Time::Backward => {
                let q = map.inverse(p).map_err(|err| step_error(err, step))?;
                let (f, g) = map.apply(Jet::var_x(q.x), Jet::var_y(q.y)).map_err(|err| step_error(err, step))?;
                let j = jacobian_of(&f, &g);
                let inv = j.try_inverse().filter(|_| j.determinant() != 0.0);
                match inv {
                    Some(inv) => (q, inv),
                    None => return Err(Error::SingularJacobian { step }),
                }
            }
        };
        let det = d.determinant();
        if !next.is_finite() || !domain.contains(next) {
            return Err(Error::OrbitEscaped { step: step + 1 });
        }
        let w = d * e;
        let s = w.norm();
        let lj = out.log_jac[step] + det.abs().ln();
        if s == 0.0 {
            return Err(Error::SingularJacobian { step });
        }
        e = w / s;
        out.log_stretch.push(out.log_stretch[step] + s.ln());
        out.log_jac.push(lj);
        out.jacobians.push(to_array(&d));
        out.directions.push(Direction::new(e.x, e.y));
        out.points.push(next);
        p = next;
    }
    Ok(out)
}

fn step_error(e: Error, step: usize) -> Error {
    match e {
        Error::OrbitEscaped { .. } => Error::OrbitEscaped { step },
        Error::SingularJacobian { .. } => Error::SingularJacobian { step },
        e => e,
    }
}

/// The unimodal map `x ↦ π_h F(x, 0)` on the horizontal extent of the domain.
pub fn profile_1d(map: &MapSpec) -> Result<UnimodalMap> {
    let domain = map.domain();
    if !domain.y.contains(0.0) {
        return Err(Error::OutOfDomain { x: domain.x.mid(), y: 0.0 });
    }
    UnimodalMap::new(Map1D::Section { map: Box::new(map.clone()), y: 0.0 }, domain.x)
}

/// The embedding `ι(g)(x, y) = (g(x), x)` as a chart-free planar map.
pub fn embed_1d(f: &UnimodalMap) -> Embedded1D {
    Embedded1D { f: f.clone() }
}

/// `ι(g)` for an arbitrary unimodal map.
#[derive(Clone, Debug)]
pub struct Embedded1D {
    pub f: UnimodalMap,
}

impl Embedded1D {
    pub fn eval(&self, p: Point2) -> Result<Point2> {
        Ok(Point2::new(self.f.eval(p.x)?, p.x))
    }

    /// Profile of the embedding: the section `x ↦ π_h ι(g)(x, 0)`.
    pub fn profile(&self) -> Result<UnimodalMap> {
        UnimodalMap::new(self.f.map.clone(), self.f.domain)
    }
}

/// Grid sup of `|∂_y f|`, and for `order = 2` also of `|∂_xy f|` and `|∂_yy f|`.
pub fn thinness(map: &MapSpec, order: usize, grid: usize) -> Result<f64> {
    if !(1..=2).contains(&order) {
        return Err(Error::Invalid(format!("thinness order {order} not in 1..=2")));
    }
    let mut beta: f64 = 0.0;
    for p in map.domain().grid(grid, grid) {
        let (f, _) = map.jet(p)?;
        beta = beta.max(f.dy.abs());
        if order == 2 {
            beta = beta.max(f.dxy.abs()).max(f.dyy.abs());
        }
    }
    Ok(beta)
}
