//! Straightening charts: pulled-back vertical fields, leaves, centered
//! charts, chart distances and vertical-quadratic curvature.

use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::{Jet, Scalar};
use crate::maps::{orbit_cocycle, Direction, Interval, MapSpec, Point2, Rect, Time};
use crate::numeric::{linspace, solve_monotone};

/// Default number of RK4 steps across the full field height.
pub const LEAF_STEPS: usize = 256;
/// Default number of samples used by the curvature fit.
pub const FIT_STENCIL: usize = 9;

/// Near-vertical direction field sampled on a grid.
///
/// Directions are stored as signed angles from the vertical and interpolated
/// bilinearly in that representative.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerticalField {
    pub rect: Rect,
    pub nx: usize,
    pub ny: usize,
    /// Row-major in `y`.
    pub angles: Vec<f64>,
}

fn cell(lo: f64, hi: f64, n: usize, t: f64) -> (usize, f64) {
    let s = ((t - lo) / (hi - lo) * (n - 1) as f64).clamp(0.0, (n - 1) as f64);
    let i = (s.floor() as usize).min(n - 2);
    (i, s - i as f64)
}

impl VerticalField {
    pub fn constant(rect: Rect, d: Direction) -> Self {
        VerticalField { rect, nx: 2, ny: 2, angles: vec![d.angle_from_vertical(); 4] }
    }

    pub fn from_fn<F: Fn(Point2) -> Direction>(rect: Rect, nx: usize, ny: usize, f: F) -> Self {
        let angles = rect.grid(nx, ny).into_iter().map(|p| f(p).angle_from_vertical()).collect();
        VerticalField { rect, nx, ny, angles }
    }

    pub fn angle_at(&self, p: Point2) -> f64 {
        let (i, fx) = cell(self.rect.x.lo, self.rect.x.hi, self.nx, p.x);
        let (j, fy) = cell(self.rect.y.lo, self.rect.y.hi, self.ny, p.y);
        let a = |i: usize, j: usize| self.angles[j * self.nx + i];
        (1.0 - fy) * ((1.0 - fx) * a(i, j) + fx * a(i + 1, j)) + fy * ((1.0 - fx) * a(i, j + 1) + fx * a(i + 1, j + 1))
    }

    pub fn direction_at(&self, p: Point2) -> Direction {
        let t = self.angle_at(p);
        Direction::new(t.sin(), t.cos())
    }

    /// `dx/dy` of the leaves.
    pub fn slope(&self, p: Point2) -> f64 {
        self.angle_at(p).tan()
    }

    pub fn max_angle(&self) -> f64 {
        self.angles.iter().fold(0.0, |m: f64, a| m.max(a.abs()))
    }

    pub fn constant_angle(&self) -> Option<f64> {
        let a0 = self.angles[0];
        self.angles.iter().all(|a| (a - a0).abs() <= 1e-14).then_some(a0)
    }

    pub fn check_near_vertical(&self) -> Result<()> {
        let m = self.max_angle();
        if m >= std::f64::consts::FRAC_PI_4 {
            return Err(Error::ChartFailure(format!("field deviates {m:.3} rad from vertical")));
        }
        Ok(())
    }
}

/// `DF^{-R}` of the horizontal direction at `F^R(p)`, for `p` on a grid.
pub fn pullback_vertical_field(map: &MapSpec, r: usize, rect: Rect, nx: usize, ny: usize) -> Result<VerticalField> {
    let pts = rect.grid(nx, ny);
    let angles: Result<Vec<f64>> = pts
        .par_iter()
        .map(|&p| {
            let q = map.iterate_point(p, r)?;
            let c = orbit_cocycle(map, q, Direction::horizontal(), r, Time::Backward)?;
            Ok(c.directions[r].angle_from_vertical())
        })
        .collect();
    Ok(VerticalField { rect, nx, ny, angles: angles? })
}

/// Leaf `x = g(y)` sampled at `ys`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Leaf {
    pub seed: f64,
    pub ys: Vec<f64>,
    pub xs: Vec<f64>,
}

impl Leaf {
    pub fn x_at(&self, y: f64) -> f64 {
        let n = self.ys.len();
        let (i, t) = cell(self.ys[0], self.ys[n - 1], n, y);
        (1.0 - t) * self.xs[i] + t * self.xs[i + 1]
    }
}

fn rk4_step(field: &VerticalField, x: f64, y: f64, h: f64) -> f64 {
    let k1 = field.slope(Point2::new(x, y));
    let k2 = field.slope(Point2::new(x + 0.5 * h * k1, y + 0.5 * h));
    let k3 = field.slope(Point2::new(x + 0.5 * h * k2, y + 0.5 * h));
    let k4 = field.slope(Point2::new(x + h * k3, y + h));
    x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// Follow the leaf through `(x, y0)` to height `y1`.
pub fn transport_along_leaf(field: &VerticalField, x: f64, y0: f64, y1: f64, steps: usize) -> Result<f64> {
    transport_padded(field, x, y0, y1, steps, 1e-12)
}

/// As [`transport_along_leaf`], tolerating excursions of `pad` widths past the sides.
fn transport_padded(field: &VerticalField, x: f64, y0: f64, y1: f64, steps: usize, pad: f64) -> Result<f64> {
    let full = field.rect.y.width();
    let n = (((y1 - y0).abs() / full * steps as f64).ceil() as usize).max(1);
    let h = (y1 - y0) / n as f64;
    let mut xc = x;
    let mut y = y0;
    for _ in 0..n {
        xc = rk4_step(field, xc, y, h);
        y += h;
        if !field.rect.x.padded(pad * field.rect.x.width()).contains(xc) {
            return Err(Error::LeafEscaped { seed: x });
        }
    }
    Ok(xc)
}

/// Leaves through the seeds on the level `y_base`, sampled on the field's
/// full height with `LEAF_STEPS` RK4 steps.
pub fn integrate_leaves(field: &VerticalField, y_base: f64, seeds: &[f64]) -> Result<Vec<Leaf>> {
    field.check_near_vertical()?;
    let ys = linspace(field.rect.y.lo, field.rect.y.hi, LEAF_STEPS + 1);
    seeds
        .par_iter()
        .map(|&seed| {
            let xs: Result<Vec<f64>> =
                ys.iter().map(|&y| transport_along_leaf(field, seed, y_base, y, LEAF_STEPS)).collect();
            Ok(Leaf { seed, ys: ys.clone(), xs: xs.map_err(|_| Error::LeafEscaped { seed })? })
        })
        .collect()
}

/// Planar chart with an explicit inverse.
pub trait ChartMap: Sync {
    fn forward(&self, p: Point2) -> Result<Point2>;
    fn inverse(&self, z: Point2) -> Result<Point2>;
    /// Point sent to the origin.
    fn base(&self) -> Point2;
}

/// `Ψ(p) = M (p − base)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AffineChart {
    pub m: [[f64; 2]; 2],
    pub base: Point2,
}

impl AffineChart {
    pub fn identity() -> Self {
        AffineChart { m: [[1.0, 0.0], [0.0, 1.0]], base: Point2::new(0.0, 0.0) }
    }

    pub fn translation(base: Point2) -> Self {
        AffineChart { m: [[1.0, 0.0], [0.0, 1.0]], base }
    }

    /// `(x, y) ↦ (x − s y, y)`.
    pub fn shear(s: f64) -> Self {
        AffineChart { m: [[1.0, -s], [0.0, 1.0]], base: Point2::new(0.0, 0.0) }
    }

    fn matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.m[0][0], self.m[0][1], self.m[1][0], self.m[1][1])
    }
}

impl ChartMap for AffineChart {
    fn forward(&self, p: Point2) -> Result<Point2> {
        let v = self.matrix() * nalgebra::Vector2::new(p.x - self.base.x, p.y - self.base.y);
        Ok(Point2::new(v.x, v.y))
    }

    fn inverse(&self, z: Point2) -> Result<Point2> {
        let inv = self.matrix().try_inverse().ok_or_else(|| Error::ChartFailure("singular affine chart".into()))?;
        let v = inv * nalgebra::Vector2::new(z.x, z.y);
        Ok(Point2::new(v.x + self.base.x, v.y + self.base.y))
    }

    fn base(&self) -> Point2 {
        self.base
    }
}

/// Genuinely horizontal chart sampled on a grid.
///
/// The first coordinate is the horizontal offset, at the level of `v0`, of
/// the leaf through the point; the second is the signed arclength along the
/// central leaf. Both are stored on the grid and interpolated bilinearly; the
/// inverse inverts the same interpolant row by row, so `Ψ⁻¹∘Ψ` is exact up to
/// rounding.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridChart {
    pub rect: Rect,
    pub nx: usize,
    pub ny: usize,
    pub v0: Point2,
    pub centered: bool,
    pub genuinely_horizontal: bool,
    /// Leaf offsets, row-major in `y`.
    pub u: Vec<f64>,
    /// Arclength coordinate per row.
    pub t: Vec<f64>,
    pub image: Rect,
    #[serde(default)]
    pub meta: ChartMeta,
    /// Samples of `Ψ⁻¹` on a grid of `image`, as `[u, w, x, y]`.
    #[serde(default)]
    pub inverse_samples: Vec<[f64; 4]>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ChartMeta {
    pub return_time: Option<usize>,
    pub leaf_steps: usize,
    pub closed_form: bool,
    pub note: String,
}

/// Straightening chart of the field, centered at `v0`.
pub fn build_straightening_chart(field: &VerticalField, v0: Point2) -> Result<GridChart> {
    if !field.rect.contains(v0) {
        return Err(Error::OutOfDomain { x: v0.x, y: v0.y });
    }
    field.check_near_vertical()?;
    let (nx, ny) = (field.nx.max(2), field.ny.max(2));
    let rect = field.rect;
    let xs = linspace(rect.x.lo, rect.x.hi, nx);
    let ys = linspace(rect.y.lo, rect.y.hi, ny);
    let closed = field.constant_angle();
    let (u, t) = if let Some(a) = closed {
        let s = a.tan();
        let speed = (1.0 + s * s).sqrt();
        let u = ys.iter().flat_map(|&y| xs.iter().map(move |&x| (x - v0.x) - s * (y - v0.y))).collect();
        let t = ys.iter().map(|&y| (y - v0.y) * speed).collect();
        (u, t)
    } else {
        let rows: Result<Vec<Vec<f64>>> = ys
            .par_iter()
            .map(|&y| {
                xs.iter().map(|&x| Ok(transport_padded(field, x, y, v0.y, LEAF_STEPS, 0.5)? - v0.x)).collect()
            })
            .collect();
        let u: Vec<f64> = rows?.concat();
        let central = integrate_leaves(field, v0.y, &[v0.x])?.remove(0);
        let t = arclength_table(&central, v0.y, &ys);
        (u, t)
    };
    let mut chart = GridChart {
        rect,
        nx,
        ny,
        v0,
        centered: true,
        genuinely_horizontal: true,
        u,
        t,
        image: rect,
        meta: ChartMeta {
            return_time: None,
            leaf_steps: LEAF_STEPS,
            closed_form: closed.is_some(),
            note: "C0 and first-difference chart distances only".into(),
        },
        inverse_samples: Vec::new(),
    };
    let du = chart.u_jet(v0.x, v0.y).0;
    let dt = chart.t_jet(v0.y).0;
    chart.u.iter_mut().for_each(|u| *u -= du);
    chart.t.iter_mut().for_each(|t| *t -= dt);
    let umin = chart.u.iter().cloned().fold(f64::INFINITY, f64::min);
    let umax = chart.u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (t0, t1) = (chart.t[0], chart.t[ny - 1]);
    chart.image = Rect::new(Interval::new(umin, umax), Interval::new(t0, t1));
    chart.check_monotone()?;
    Ok(chart)
}

/// Signed arclength from `y0` along the sampled leaf, evaluated at `ys`.
fn arclength_table(leaf: &Leaf, y0: f64, ys: &[f64]) -> Vec<f64> {
    let n = leaf.ys.len();
    let mut cum = vec![0.0; n];
    for k in 1..n {
        let dx = leaf.xs[k] - leaf.xs[k - 1];
        let dy = leaf.ys[k] - leaf.ys[k - 1];
        cum[k] = cum[k - 1] + dx.hypot(dy);
    }
    let at = |y: f64| {
        let (i, f) = cell(leaf.ys[0], leaf.ys[n - 1], n, y);
        (1.0 - f) * cum[i] + f * cum[i + 1]
    };
    let base = at(y0);
    ys.iter().map(|&y| at(y) - base).collect()
}

impl GridChart {
    fn uv(&self, i: usize, j: usize) -> f64 {
        self.u[j * self.nx + i]
    }

    fn check_monotone(&self) -> Result<()> {
        for j in 0..self.ny {
            for i in 0..self.nx - 1 {
                if self.uv(i + 1, j) <= self.uv(i, j) {
                    return Err(Error::ChartFailure(format!("leaf labels not monotone in row {j}")));
                }
            }
        }
        for j in 0..self.ny - 1 {
            if self.t[j + 1] <= self.t[j] {
                return Err(Error::ChartFailure("arclength not monotone".into()));
            }
        }
        Ok(())
    }

    fn xs(&self) -> Vec<f64> {
        linspace(self.rect.x.lo, self.rect.x.hi, self.nx)
    }

    fn ys(&self) -> Vec<f64> {
        linspace(self.rect.y.lo, self.rect.y.hi, self.ny)
    }

    /// Value and partials `(u, u_x, u_y, u_xy)` of the bilinear interpolant.
    fn u_jet(&self, x: f64, y: f64) -> (f64, f64, f64, f64) {
        let (i, fx) = cell(self.rect.x.lo, self.rect.x.hi, self.nx, x);
        let (j, fy) = cell(self.rect.y.lo, self.rect.y.hi, self.ny, y);
        let hx = self.rect.x.width() / (self.nx - 1) as f64;
        let hy = self.rect.y.width() / (self.ny - 1) as f64;
        let (a, b, c, d) = (self.uv(i, j), self.uv(i + 1, j), self.uv(i, j + 1), self.uv(i + 1, j + 1));
        let v = (1.0 - fy) * ((1.0 - fx) * a + fx * b) + fy * ((1.0 - fx) * c + fx * d);
        let ux = ((1.0 - fy) * (b - a) + fy * (d - c)) / hx;
        let uy = ((1.0 - fx) * (c - a) + fx * (d - b)) / hy;
        let uxy = (d - c - b + a) / (hx * hy);
        (v, ux, uy, uxy)
    }

    fn t_jet(&self, y: f64) -> (f64, f64) {
        let (j, fy) = cell(self.rect.y.lo, self.rect.y.hi, self.ny, y);
        let hy = self.rect.y.width() / (self.ny - 1) as f64;
        ((1.0 - fy) * self.t[j] + fy * self.t[j + 1], (self.t[j + 1] - self.t[j]) / hy)
    }

    fn t_inverse(&self, w: f64) -> f64 {
        let ys = self.ys();
        let k = match self.t.iter().position(|&t| t >= w) {
            Some(0) => 0,
            Some(k) => k - 1,
            None => self.ny - 2,
        };
        let f = (w - self.t[k]) / (self.t[k + 1] - self.t[k]);
        ys[k] + f * (ys[k + 1] - ys[k])
    }

    /// Row inversion of the piecewise-linear `x ↦ u(x, y)`.
    fn u_inverse(&self, u: f64, y: f64) -> f64 {
        let xs = self.xs();
        let row = |i: usize| self.u_jet(xs[i], y).0;
        let lo = if u <= row(0) {
            0
        } else if u >= row(self.nx - 1) {
            self.nx - 2
        } else {
            let (mut lo, mut hi) = (0usize, self.nx - 1);
            while hi - lo > 1 {
                let m = (lo + hi) / 2;
                if row(m) <= u {
                    lo = m;
                } else {
                    hi = m;
                }
            }
            lo
        };
        let hi = lo + 1;
        let (a, b) = (row(lo), row(hi));
        xs[lo] + (u - a) / (b - a) * (xs[hi] - xs[lo])
    }

    pub fn forward_scalar<S: Scalar>(&self, x: S, y: S) -> Result<(S, S)> {
        let (xv, yv) = (x.val(), y.val());
        if !self.rect.padded(0.05).contains(Point2::new(xv, yv)) {
            return Err(Error::OutOfDomain { x: xv, y: yv });
        }
        let (u, ux, uy, uxy) = self.u_jet(xv, yv);
        let (t, ty) = self.t_jet(yv);
        let ju = Jet { v: u, dx: ux, dy: uy, dxx: 0.0, dxy: uxy, dyy: 0.0 };
        let jt = Jet { v: t, dx: 0.0, dy: ty, dxx: 0.0, dxy: 0.0, dyy: 0.0 };
        Ok((S::compose(&ju, x, y), S::compose(&jt, x, y)))
    }

    pub fn inverse_scalar<S: Scalar>(&self, u: S, w: S) -> Result<(S, S)> {
        let y = self.t_inverse(w.val());
        let x = self.u_inverse(u.val(), y);
        if !self.rect.padded(0.05).contains(Point2::new(x, y)) {
            return Err(Error::OutOfDomain { x, y });
        }
        let (_, ux, uy, _) = self.u_jet(x, y);
        let (_, ty) = self.t_jet(y);
        let jx = Jet { v: x, dx: 1.0 / ux, dy: -uy / (ux * ty), dxx: 0.0, dxy: 0.0, dyy: 0.0 };
        let jy = Jet { v: y, dx: 0.0, dy: 1.0 / ty, dxx: 0.0, dxy: 0.0, dyy: 0.0 };
        Ok((S::compose(&jx, u, w), S::compose(&jy, u, w)))
    }

    /// Fill `inverse_samples` on an `n × n` grid of the image.
    pub fn sample_inverse(&mut self, n: usize) -> Result<()> {
        let mut out = Vec::with_capacity(n * n);
        for z in self.image.grid(n, n) {
            let p = self.inverse(z)?;
            out.push([z.x, z.y, p.x, p.y]);
        }
        self.inverse_samples = out;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<GridChart> {
        let g: GridChart = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if g.u.len() != g.nx * g.ny || g.t.len() != g.ny || g.nx < 2 || g.ny < 2 {
            return Err(Error::Invalid(format!("chart artifact {} has inconsistent sizes", path.display())));
        }
        Ok(g)
    }
}

impl ChartMap for GridChart {
    fn forward(&self, p: Point2) -> Result<Point2> {
        let (u, w) = self.forward_scalar(p.x, p.y)?;
        Ok(Point2::new(u, w))
    }

    fn inverse(&self, z: Point2) -> Result<Point2> {
        let (x, y) = self.inverse_scalar(z.x, z.y)?;
        Ok(Point2::new(x, y))
    }

    fn base(&self) -> Point2 {
        self.v0
    }
}

const GL8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
];

/// Centered chart of the foliation by level sets of `π_h F^{R-1}`.
///
/// The first coordinate is the horizontal offset, at the level of `base`, of
/// the leaf through a point; the second the signed arclength along the leaf
/// through `base`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LeafChart {
    pub map: MapSpec,
    pub r: usize,
    pub center: Point2,
    /// Horizontal range on which leaf labels are solved.
    pub range: Interval,
}

impl LeafChart {
    pub fn new(map: MapSpec, r: usize, center: Point2, range: Interval) -> Self {
        LeafChart { map, r, center, range }
    }

    fn label(&self, x: f64, y: f64) -> Result<Jet> {
        Ok(self.map.iterate(Jet::var_x(x), Jet::var_y(y), self.r - 1)?.0)
    }

    fn solve_x(&self, target: f64, y: f64, guess: f64) -> Result<f64> {
        let pad = 0.5 * self.range.width();
        solve_monotone(
            |x| {
                let l = self.label(x, y)?;
                Ok((l.v, l.dx))
            },
            target,
            self.range.lo - pad,
            self.range.hi + pad,
            guess,
        )
    }

    /// `dx/dy` of the central leaf at height `y`.
    fn central_speed(&self, y: f64, guess: f64) -> Result<(f64, f64)> {
        let target = self.label(self.center.x, self.center.y)?.v;
        let x = self.solve_x(target, y, guess)?;
        let l = self.label(x, y)?;
        let s = -l.dy / l.dx;
        Ok(((1.0 + s * s).sqrt(), x))
    }

    fn arclength(&self, y: f64) -> Result<f64> {
        let (a, b) = (self.center.y, y);
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        let mut sum = 0.0;
        let mut guess = self.center.x;
        for (node, w) in GL8 {
            let (speed, x) = self.central_speed(mid + half * node, guess)?;
            guess = x;
            sum += w * speed;
        }
        Ok(sum * half)
    }
}

impl ChartMap for LeafChart {
    fn forward(&self, p: Point2) -> Result<Point2> {
        let l = self.label(p.x, p.y)?.v;
        let x0 = self.solve_x(l, self.center.y, p.x)?;
        Ok(Point2::new(x0 - self.center.x, self.arclength(p.y)?))
    }

    fn inverse(&self, z: Point2) -> Result<Point2> {
        let mut y = self.center.y + z.y;
        for _ in 0..60 {
            let t = self.arclength(y)?;
            let (speed, _) = self.central_speed(y, self.center.x)?;
            let step = (t - z.y) / speed;
            y -= step;
            if step.abs() <= 1e-15 * (1.0 + y.abs()) {
                break;
            }
        }
        let l = self.label(self.center.x + z.x, self.center.y)?.v;
        let x = self.solve_x(l, y, self.center.x + z.x)?;
        Ok(Point2::new(x, y))
    }

    fn base(&self) -> Point2 {
        self.center
    }
}

/// `Ψ⁻¹(π_h Ψ(p), 0)`.
pub fn project_valuable(chart: &dyn ChartMap, p: Point2) -> Result<Point2> {
    let z = chart.forward(p)?;
    chart.inverse(Point2::new(z.x, 0.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartDistance {
    pub c0: f64,
    /// Largest first finite difference of `Ψa∘Ψb⁻¹ − Id`.
    pub c1: f64,
}

/// Deviation of `Ψa∘Ψb⁻¹` from the identity on an `n × n` grid of `domain`.
pub fn chart_distance(a: &dyn ChartMap, b: &dyn ChartMap, domain: Rect, n: usize) -> Result<ChartDistance> {
    let grid = domain.grid(n, n);
    let dev: Result<Vec<Point2>> = grid
        .par_iter()
        .map(|&z| {
            let w = a.forward(b.inverse(z)?)?;
            Ok(Point2::new(w.x - z.x, w.y - z.y))
        })
        .collect();
    let dev = dev?;
    let c0 = dev.iter().fold(0.0f64, |m, d| m.max(d.x.hypot(d.y)));
    let hx = domain.x.width() / (n - 1) as f64;
    let hy = domain.y.width() / (n - 1) as f64;
    let mut c1: f64 = 0.0;
    for j in 0..n {
        for i in 0..n {
            let d = dev[j * n + i];
            if i + 1 < n {
                let e = dev[j * n + i + 1];
                c1 = c1.max((e.x - d.x).abs() / hx).max((e.y - d.y).abs() / hx);
            }
            if j + 1 < n {
                let e = dev[(j + 1) * n + i];
                c1 = c1.max((e.x - d.x).abs() / hy).max((e.y - d.y).abs() / hy);
            }
        }
    }
    Ok(ChartDistance { c0, c1 })
}

/// Second derivative of `x = g(y)` at the turning point of a sampled curve,
/// in chart coordinates.
pub fn vertical_quadratic_curvature(curve: &[Point2], chart: &dyn ChartMap) -> Result<f64> {
    let pts: Result<Vec<Point2>> = curve.iter().map(|&p| chart.forward(p)).collect();
    let pts = pts?;
    curvature_of_samples(&pts)
}

pub fn curvature_of_samples(pts: &[Point2]) -> Result<f64> {
    let n = pts.len();
    if n < FIT_STENCIL {
        return Err(Error::Invalid(format!("curvature fit needs {FIT_STENCIL} samples, got {n}")));
    }
    let (mut imax, mut imin) = (0, 0);
    for (i, p) in pts.iter().enumerate() {
        if p.x > pts[imax].x {
            imax = i;
        }
        if p.x < pts[imin].x {
            imin = i;
        }
    }
    let k = [imin, imax].into_iter().find(|&i| i > 0 && i + 1 < n).ok_or(Error::NoTangency)?;
    let half = FIT_STENCIL / 2;
    let start = k.saturating_sub(half).min(n - FIT_STENCIL);
    let sample = &pts[start..start + FIT_STENCIL];
    let y0 = pts[k].y;
    let scale = sample.iter().fold(0.0f64, |m, p| m.max((p.y - y0).abs())).max(f64::MIN_POSITIVE);
    let a = DMatrix::from_fn(FIT_STENCIL, 5, |r, c| ((sample[r].y - y0) / scale).powi(c as i32));
    let b = DVector::from_iterator(FIT_STENCIL, sample.iter().map(|p| p.x));
    let coef = a
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| Error::ChartFailure(format!("curvature fit: {e}")))?;
    let d1 = |s: f64| coef[1] + 2.0 * coef[2] * s + 3.0 * coef[3] * s * s + 4.0 * coef[4] * s * s * s;
    let d2 = |s: f64| 2.0 * coef[2] + 6.0 * coef[3] * s + 12.0 * coef[4] * s * s;
    let mut s = 0.0;
    for _ in 0..50 {
        let h = d2(s);
        if h == 0.0 {
            break;
        }
        let step = d1(s) / h;
        s -= step;
        if step.abs() < 1e-15 {
            break;
        }
    }
    if !(s.abs() <= 1.0) {
        return Err(Error::NoTangency);
    }
    let g2 = d2(s) / (scale * scale);
    if g2.abs() < 1e-8 {
        return Err(Error::Degenerate(g2.abs()));
    }
    Ok(g2)
}

/// Quadrilateral bounded by two vertical leaves and two horizontal segments.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Quadrilateral {
    pub left: Leaf,
    pub right: Leaf,
    pub y: Interval,
}

impl Quadrilateral {
    pub fn from_rect(r: Rect) -> Self {
        let ys = vec![r.y.lo, r.y.hi];
        Quadrilateral {
            left: Leaf { seed: r.x.lo, ys: ys.clone(), xs: vec![r.x.lo, r.x.lo] },
            right: Leaf { seed: r.x.hi, ys, xs: vec![r.x.hi, r.x.hi] },
            y: r.y,
        }
    }

    pub fn contains(&self, p: Point2) -> bool {
        self.y.contains(p.y) && p.x >= self.left.x_at(p.y) && p.x <= self.right.x_at(p.y)
    }

    pub fn bounding_rect(&self) -> Rect {
        let lo = self.left.xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.right.xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Rect::new(Interval::new(lo, hi), self.y)
    }

    /// Points on the boundary, `n` per side.
    pub fn boundary(&self, n: usize) -> Vec<Point2> {
        let ys = linspace(self.y.lo, self.y.hi, n);
        let mut out = Vec::with_capacity(4 * n);
        for &y in &ys {
            out.push(Point2::new(self.left.x_at(y), y));
            out.push(Point2::new(self.right.x_at(y), y));
        }
        for y in [self.y.lo, self.y.hi] {
            let (a, b) = (self.left.x_at(y), self.right.x_at(y));
            out.extend(linspace(a, b, n).into_iter().map(|x| Point2::new(x, y)));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> Rect {
        Rect::square(Interval::new(-1.0, 1.0))
    }

    #[test]
    fn henon_single_step_pullback_is_vertical() {
        let m = MapSpec::henon(-1.3, 0.2);
        let rect = Rect::square(Interval::new(-0.5, 0.5));
        let f = pullback_vertical_field(&m, 1, rect, 9, 9).unwrap();
        assert!(f.max_angle() < 1e-15);
    }

    #[test]
    fn linear_pullback_is_constant() {
        let s = 0.3;
        let m = MapSpec::linear([[0.0, 1.0], [1.0, s]], Rect::square(Interval::new(-100.0, 100.0)));
        let f = pullback_vertical_field(&m, 1, unit(), 5, 5).unwrap();
        let want = Direction::new(-s, 1.0).angle_from_vertical();
        for a in &f.angles {
            assert!((a - want).abs() < 1e-14);
        }
    }

    #[test]
    fn shear_pullback_keeps_horizontal() {
        let m = MapSpec::linear([[1.0, 0.4], [0.0, 1.0]], Rect::square(Interval::new(-100.0, 100.0)));
        let f = pullback_vertical_field(&m, 3, unit(), 5, 5).unwrap();
        assert!(f.constant_angle().is_some());
        assert!(integrate_leaves(&f, 0.0, &[0.0]).is_err());
    }

    #[test]
    fn vertical_leaves_are_lines() {
        let f = VerticalField::constant(unit(), Direction::vertical());
        for l in integrate_leaves(&f, 0.0, &[-0.5, 0.2]).unwrap() {
            assert!(l.xs.iter().all(|&x| (x - l.seed).abs() < 1e-15));
        }
    }

    #[test]
    fn constant_slope_leaves() {
        let s = 0.25;
        let f = VerticalField::constant(unit(), Direction::new(s, 1.0));
        for l in integrate_leaves(&f, 0.1, &[-0.3, 0.0, 0.4]).unwrap() {
            for (x, y) in l.xs.iter().zip(&l.ys) {
                assert!((x - (l.seed + s * (y - 0.1))).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn translation_chart() {
        let f = VerticalField::constant(unit(), Direction::vertical());
        let c = build_straightening_chart(&f, Point2::new(0.3, 0.1)).unwrap();
        let z = c.forward(Point2::new(0.5, -0.2)).unwrap();
        assert!((z.x - 0.2).abs() < 1e-14 && (z.y + 0.3).abs() < 1e-14);
        let p = project_valuable(&c, Point2::new(0.5, -0.2)).unwrap();
        assert!((p.x - 0.5).abs() < 1e-14 && (p.y - 0.1).abs() < 1e-14);
    }

    #[test]
    fn shear_chart_with_arclength_axis() {
        let s = 0.2;
        let f = VerticalField::constant(unit(), Direction::new(s, 1.0));
        let c = build_straightening_chart(&f, Point2::new(0.0, 0.0)).unwrap();
        let speed = (1.0 + s * s).sqrt();
        for p in unit().padded(-0.1).grid(7, 7) {
            let z = c.forward(p).unwrap();
            assert!((z.x - (p.x - s * p.y)).abs() < 1e-13);
            assert!((z.y - p.y * speed).abs() < 1e-13);
        }
    }

    #[test]
    fn grid_chart_round_trip_on_curved_field() {
        let rect = unit();
        let f = VerticalField::from_fn(rect, 33, 33, |p| Direction::new(0.2 * p.x * p.y + 0.1 * p.y, 1.0));
        let c = build_straightening_chart(&f, Point2::new(0.05, -0.1)).unwrap();
        let z0 = c.forward(Point2::new(0.05, -0.1)).unwrap();
        assert!(z0.x.abs() < 1e-12 && z0.y.abs() < 1e-12);
        let inner = rect.padded(-0.2);
        for p in inner.grid(64, 64) {
            let q = c.inverse(c.forward(p).unwrap()).unwrap();
            assert!(q.dist(&p) < 1e-6);
        }
    }

    #[test]
    fn chart_distances() {
        let id = AffineChart::identity();
        let d = chart_distance(&id, &id, unit(), 11).unwrap();
        assert_eq!(d.c0, 0.0);
        let sh = AffineChart::shear(0.3);
        let d = chart_distance(&sh, &id, unit(), 11).unwrap();
        assert!((d.c0 - 0.3).abs() < 1e-15);
        assert!((d.c1 - 0.3).abs() < 1e-12);
    }

    #[test]
    fn parabola_curvature() {
        let curve: Vec<Point2> = linspace(-1.0, 1.0, 41).into_iter().map(|y| Point2::new(y * y, y)).collect();
        let k = vertical_quadratic_curvature(&curve, &AffineChart::identity()).unwrap();
        assert!((k - 2.0).abs() < 1e-10);
    }

    #[test]
    fn straight_line_has_no_tangency() {
        let curve: Vec<Point2> = linspace(-1.0, 1.0, 41).into_iter().map(|y| Point2::new(0.3, y)).collect();
        assert!(matches!(vertical_quadratic_curvature(&curve, &AffineChart::identity()), Err(Error::NoTangency)));
    }

    #[test]
    fn artifact_round_trip() {
        let f = VerticalField::from_fn(unit(), 9, 9, |p| Direction::new(0.1 * p.y, 1.0));
        let mut c = build_straightening_chart(&f, Point2::new(0.0, 0.0)).unwrap();
        c.sample_inverse(4).unwrap();
        let dir = std::env::temp_dir().join(format!("henren-chart-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("chart.json");
        c.save(&path).unwrap();
        let back = GridChart::load(&path).unwrap();
        let p = Point2::new(0.3, 0.4);
        assert_eq!(c.forward(p).unwrap(), back.forward(p).unwrap());
        std::fs::remove_dir_all(&dir).ok();
    }
}
