//! The Hénon-like renormalization operator and the nested-return driver.
//!
//! Every level is represented directly over the base map: level `n` is the
//! chart conjugation of `F^{R_n}` by a genuinely horizontal straightening
//! chart, so evaluating it costs `O(R_n)` base iterates regardless of depth.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charts::{curvature_of_samples, ChartMap, Leaf, LeafChart, Quadrilateral};
use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::maps::{
    leaf_label, profile_1d, thinness, ChartRef, Interval, MapSpec, NormalizationAffine, Point2, Rect, Straightening,
};
use crate::numeric::{bisect, linspace};
use crate::regularity::{certify_return, RegularityReport, ReturnCandidate};
use crate::unimodal::{CombinatoricsWord, RenType, UnimodalMap, ACCEPT_MARGIN, UNDECIDED_MARGIN};

/// Sup-norm tolerance of the Hénon-like predicate after conjugation.
pub const HENON_LIKE_TOL: f64 = 1e-3;
/// Largest return time accepted in double precision.
pub const DEPTH_GUARD: usize = 256;
const ROOT_GRID: usize = 1025;
const FIXED_POINT_GRID: usize = 2049;
const MONOTONE_STEPS: usize = 4096;
const STRIP_SAMPLES: usize = 129;

/// A return of time `r` whose straightened and normalized profile has a
/// valuable invariant interval.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValuableReturn {
    pub r: usize,
    /// Return time over the base map.
    pub base_r: usize,
    /// `(c̃, y*)` in base coordinates: the fold point sent to the origin.
    pub base_point: Point2,
    pub straightening: Straightening,
    pub rescale: NormalizationAffine,
    /// Valuable interval in the map's own horizontal coordinate.
    pub i1: Interval,
    /// Critical value of the normalized return.
    pub critical_value: f64,
    /// Boundary fixed point of the normalized return.
    pub fixed_point: f64,
    /// Largest relative violation of the valuable-interval conditions.
    pub violation: f64,
}

#[derive(Clone, Debug)]
pub enum ReturnSearch {
    Found(ValuableReturn),
    Undecided { r: usize },
    NotRenormalizable,
}

/// Base map and return time of a level map; `(map, 1)` for plain maps.
fn flatten(map: &MapSpec) -> (&MapSpec, usize) {
    match map {
        MapSpec::ChartConjugated { inner, iterates, chart: ChartRef::Straightening(_), .. } => (inner, *iterates),
        m => (m, 1),
    }
}

/// Affine map from the map's horizontal coordinate to the base `x` on the section.
fn to_base(map: &MapSpec) -> NormalizationAffine {
    match map {
        MapSpec::ChartConjugated { chart: ChartRef::Straightening(_), rescale, .. } => {
            NormalizationAffine { scale: 1.0 / rescale.scale, shift: -rescale.shift / rescale.scale }
        }
        _ => NormalizationAffine::IDENTITY,
    }
}

fn inverse_image(t: &NormalizationAffine, i: Interval) -> Interval {
    Interval::new(t.invert(i.lo), t.invert(i.hi))
}

/// Solve `∂_x π_h F^{2R-1}(x, y) = 0`, `y = π_h F^{R-1}(x, y)` by Newton.
fn section_point(base: &MapSpec, r: usize, x0: f64, y0: f64, scale: f64) -> Result<Point2> {
    let (mut x, mut y) = (x0, y0);
    let residual = |x: f64, y: f64| -> Result<(Jet, Jet)> {
        let l = leaf_label(base, r, Jet::var_x(x), Jet::var_y(y))?;
        let p = base.iterate(Jet::var_x(x), Jet::var_y(y), 2 * r - 1)?.0;
        Ok((l, p))
    };
    for _ in 0..60 {
        let (l, p) = residual(x, y)?;
        let (g1, g2) = (p.dx, l.v - y);
        let (a, b, c, d) = (p.dxx, p.dxy, l.dx, l.dy - 1.0);
        let det = a * d - b * c;
        if det == 0.0 || !det.is_finite() {
            return Err(Error::ChartFailure("singular section system".into()));
        }
        let dx = (d * g1 - b * g2) / det;
        let dy = (a * g2 - c * g1) / det;
        if !(dx.abs().max(dy.abs()) < scale) {
            return Err(Error::ChartFailure("section Newton step left the level".into()));
        }
        x -= dx;
        y -= dy;
        if dx.abs().max(dy.abs()) <= 1e-15 * scale {
            return Ok(Point2::new(x, y));
        }
    }
    let (l, p) = residual(x, y)?;
    if p.dx.abs() <= 1e-9 * p.dxx.abs() * scale && (l.v - y).abs() <= 1e-12 * scale {
        return Ok(Point2::new(x, y));
    }
    Err(Error::ChartFailure("section point did not converge".into()))
}

/// Largest interval around `p.x` on the line `y = p.y` where `x ↦ ℓ(x, y)` is monotone.
fn monotone_interval(base: &MapSpec, r: usize, p: Point2, reach: f64) -> Result<Interval> {
    let slope = |x: f64| leaf_label(base, r, Jet::var_x(x), Jet::constant(p.y)).map(|l| l.dx);
    let s0 = slope(p.x)?.signum();
    if s0 == 0.0 {
        return Err(Error::ChartFailure("leaf label is critical at the fold point".into()));
    }
    let h = reach / MONOTONE_STEPS as f64;
    let walk = |dir: f64| {
        let mut last = p.x;
        for k in 1..=MONOTONE_STEPS {
            let x = p.x + dir * h * k as f64;
            match slope(x) {
                Ok(d) if d.signum() == s0 && base.domain().x.contains(x) => last = x,
                _ => break,
            }
        }
        last
    };
    let (lo, hi) = (walk(-1.0), walk(1.0));
    // stay a step clear of the turning points
    Ok(Interval::new((lo + h).min(p.x), (hi - h).max(p.x)))
}

/// First root of `h` on the grid `us`, refined by bisection.
fn first_root<H: Fn(f64) -> Result<f64>>(h: H, us: &[f64]) -> Option<f64> {
    let vals: Vec<Option<f64>> = us.iter().map(|&u| h(u).ok()).collect();
    for k in 0..us.len() - 1 {
        let (Some(a), Some(b)) = (vals[k], vals[k + 1]) else { continue };
        if a == 0.0 {
            return Some(us[k]);
        }
        if a.signum() != b.signum() {
            return bisect(&h, us[k], us[k + 1]).ok();
        }
    }
    None
}

/// Try the return of time `r` of `map`, in the map's own coordinates.
fn try_return(map: &MapSpec, f: &UnimodalMap, r: usize) -> Result<Option<ValuableReturn>> {
    let (base, r_prev) = flatten(map);
    let tb = to_base(map);
    let big_r = r_prev * r;
    let width = map.domain().x.width();
    let reach = tb.scale.abs() * width;

    // the fold point: preimage of the critical point nearest the critical value
    let start = f.v - 1e-3 * (f.c - f.v);
    let us = linspace(start, f.c, ROOT_GRID);
    let h = |u: f64| map.iterate(u, 0.0, r - 1).map(|(x, _)| x - f.c);
    let Some(u0) = first_root(h, &us) else { return Ok(None) };
    let p0 = map.to_inner(Point2::new(u0, 0.0))?;
    let bp = section_point(base, big_r, p0.x, p0.y, reach)?;
    let mono = monotone_interval(base, big_r, bp, reach)?;

    let trial = Straightening { ystar: bp.y, leaf_range: mono, monotone: mono };
    let p = base.iterate(Jet::var_x(bp.x), Jet::constant(bp.y), 2 * big_r - 1)?.0;
    let img = base.iterate_point(bp, big_r)?;
    let lq = leaf_label(base, big_r, img.x, img.y)?;
    let z: f64 = trial.k_inverse(base, big_r, lq, img.x)?;
    let kz = trial.k(base, big_r, Jet::var_x(z))?.dx;
    let s = p.dxx / (2.0 * kz);
    if !s.is_finite() || p.dxx.abs() <= 1e-8 * kz.abs() {
        return Err(Error::NormalizationFailed { second_derivative: p.dxx });
    }
    let rescale = NormalizationAffine::centered(s, bp.x);
    let reach_u = rescale.image(mono);
    let g_map = MapSpec::ChartConjugated {
        inner: Box::new(base.clone()),
        iterates: big_r,
        chart: ChartRef::Straightening(trial),
        rescale,
        domain: Rect::square(reach_u),
    };
    let g = |u: f64| g_map.apply(u, 0.0).map(|(x, _)| x);
    let a1 = g(0.0)?;
    if a1 < reach_u.lo {
        return Ok(None);
    }
    let us = linspace(0.0, reach_u.hi, FIXED_POINT_GRID);
    let Some(beta) = first_root(|u| g(u).map(|x| x - u), &us[1..]) else { return Ok(None) };
    if beta <= 0.0 {
        return Ok(None);
    }
    let u_int = Interval::new(a1.min(beta), beta);
    let to_map = |d: f64| d / s.abs() / tb.scale.abs() / width;
    let mut violation = to_map(a1.max(0.0));
    violation = violation.max(to_map((g(a1)? - beta).max(0.0)));

    let i1_base = inverse_image(&rescale, u_int);
    let slide = |xb: f64| -> Result<f64> {
        let q = map.from_inner(Point2::new(xb, bp.y))?;
        let guess = tb.invert(xb);
        let t = map.iterate(q.x, q.y, r - 1)?.0;
        let h = |u: f64| map.iterate(u, 0.0, r - 1).map(|(x, _)| x - t);
        let d = 1e-3 * width;
        let us = linspace(guess - d, guess + d, 65);
        Ok(first_root(h, &us).unwrap_or(guess))
    };
    let i1 = Interval::new(slide(i1_base.lo)?, slide(i1_base.hi)?);
    let dom = map.domain().x;
    violation = violation.max(((dom.lo - i1.lo).max(0.0) + (i1.hi - dom.hi).max(0.0)) / width);
    for i in 1..r {
        let xs: Result<Vec<f64>> =
            linspace(i1.lo, i1.hi, STRIP_SAMPLES).into_iter().map(|u| Ok(map.iterate(u, 0.0, i)?.0)).collect();
        let Ok(xs) = xs else { return Ok(None) };
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        violation = violation.max(Interval::new(lo, hi).overlap(&i1) / width);
    }
    let straightening = Straightening { ystar: bp.y, leaf_range: i1_base, monotone: mono };
    Ok(Some(ValuableReturn {
        r,
        base_r: big_r,
        base_point: bp,
        straightening,
        rescale,
        i1,
        critical_value: a1,
        fixed_point: beta,
        violation,
    }))
}

/// Smallest return time `2 ≤ r ≤ b_max` with a valuable straightened return.
pub fn locate_return(map: &MapSpec, b_max: usize) -> Result<ReturnSearch> {
    let f = profile_1d(map)?;
    for r in 2..=b_max {
        match try_return(map, &f, r) {
            Ok(Some(ret)) if ret.violation <= ACCEPT_MARGIN => return Ok(ReturnSearch::Found(ret)),
            Ok(Some(ret)) if ret.violation <= UNDECIDED_MARGIN => return Ok(ReturnSearch::Undecided { r }),
            _ => {}
        }
    }
    Ok(ReturnSearch::NotRenormalizable)
}

/// Strips `W_i = J_i × π_v(D)` around the periodic intervals of the return.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PeriodicDomain {
    pub r: usize,
    pub ret: ValuableReturn,
    /// `W_0` contains the critical value.
    pub strips: Vec<Rect>,
    /// Signed containment margin of `F(W_i)` in `W_{i+1}`; the last entry is the return.
    pub margins: Vec<f64>,
    pub domain: Quadrilateral,
}

impl PeriodicDomain {
    pub fn build(map: &MapSpec, ret: ValuableReturn) -> Result<PeriodicDomain> {
        let r = ret.r;
        let ys = map.domain().y;
        let width = map.domain().x.width();
        let beta = thinness(map, 1, 16)?;
        let mut js = vec![ret.i1];
        let mut lips = Vec::with_capacity(r);
        let mut pts: Vec<Point2> =
            linspace(ret.i1.lo, ret.i1.hi, STRIP_SAMPLES).into_iter().map(|u| Point2::new(u, 0.0)).collect();
        for i in 0..r {
            let lip = pts
                .iter()
                .map(|&p| map.jacobian(p).map(|j| j[(0, 0)].abs()))
                .collect::<Result<Vec<f64>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            lips.push(lip);
            if i + 1 < r {
                pts = pts
                    .iter()
                    .map(|&p| map.apply(p.x, p.y).map(|(x, y)| Point2::new(x, y)))
                    .collect::<Result<Vec<_>>>()?;
                let lo = pts.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
                let hi = pts.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
                js.push(Interval::new(lo, hi));
            }
        }
        for i in 0..r {
            for k in i + 1..r {
                if js[i].overlap(&js[k]) > ACCEPT_MARGIN * width {
                    return Err(Error::StripOverlap);
                }
            }
        }
        let mut pads = vec![0.0; r];
        for i in 1..r {
            pads[i] = lips[i - 1] * pads[i - 1] + beta * ys.width() + 1e-12 * width;
        }
        let strips: Vec<Rect> = js.iter().zip(&pads).map(|(j, &p)| Rect::new(j.padded(p), ys)).collect();
        let mut margins = Vec::with_capacity(r);
        for i in 0..r {
            let target = strips[(i + 1) % r];
            let mut m = f64::INFINITY;
            for p in Quadrilateral::from_rect(strips[i]).boundary(33) {
                let Ok((x, _)) = map.apply(p.x, p.y) else {
                    m = f64::NEG_INFINITY;
                    break;
                };
                m = m.min(x - target.x.lo).min(target.x.hi - x);
            }
            margins.push(m);
            if i + 1 < r && m < -1e-9 * width {
                return Err(Error::MappingViolation(i));
            }
        }
        let domain = Quadrilateral::from_rect(strips[0]);
        Ok(PeriodicDomain { r, ret, strips, margins, domain })
    }
}

/// Periodic strips of a Hénon-like map with a valuable return.
pub fn find_periodic_domain(map: &MapSpec, b_max: usize) -> Result<Option<PeriodicDomain>> {
    match locate_return(map, b_max)? {
        ReturnSearch::Found(ret) => PeriodicDomain::build(map, ret).map(Some),
        _ => Ok(None),
    }
}

/// Per-depth record of a renormalization sequence.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RenormLevel {
    pub n: usize,
    #[serde(rename = "R")]
    pub return_time: usize,
    /// `R_n / R_{n-1}`.
    pub ratio: usize,
    /// The renormalized map `F_n` in normalized coordinates.
    pub map: MapSpec,
    pub straightening: Straightening,
    pub rescale: NormalizationAffine,
    /// `(c̃, y*)`: the point of the base coordinates sent to the origin.
    pub base_point: Point2,
    /// Domain `𝓑ⁿ` in base coordinates.
    pub domain: Quadrilateral,
    /// `|π_h 𝓑ⁿ|` relative to the base domain width.
    pub sigma: f64,
    pub tau: f64,
    /// Type of the previous level's return that produced this level.
    pub ren_type: RenType,
    pub thinness: f64,
    /// Valuable curvature in normalized coordinates.
    pub curvature: f64,
    /// Valuable curvature in the centered chart of the base coordinates.
    pub curvature_centered: Option<f64>,
    /// Range of `|Jac F_n|` on a grid of the normalized domain.
    pub jacobian: [f64; 2],
    pub henon_like_residual: f64,
    pub regularity: Option<RegularityReport>,
    pub regularity_error: Option<String>,
}

impl RenormLevel {
    pub fn profile(&self) -> Result<UnimodalMap> {
        profile_1d(&self.map)
    }

    /// Centered leaf chart of this level in base coordinates.
    pub fn centered_chart(&self) -> Result<LeafChart> {
        let (base, _) = flatten(&self.map);
        Ok(LeafChart::new(base.clone(), self.return_time, self.base_point, self.straightening.leaf_range))
    }

    /// Points of `𝓑ⁿ` in base coordinates, images of an `n × n` grid.
    pub fn domain_sample(&self, n: usize) -> Result<Vec<Point2>> {
        let pts = self.map.domain().grid(n, n);
        pts.par_iter().map(|&z| self.map.to_inner(z)).collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RenormOptions {
    pub grid: usize,
    pub henon_like_tol: f64,
}

impl Default for RenormOptions {
    fn default() -> Self {
        RenormOptions { grid: 32, henon_like_tol: HENON_LIKE_TOL }
    }
}

/// `𝓡(F) = 𝓢 ∘ Φ ∘ F^R ∘ (𝓢 ∘ Φ)⁻¹` on the periodic domain.
pub fn renormalize_once(map: &MapSpec, ret: &ValuableReturn, opts: &RenormOptions) -> Result<(MapSpec, RenormLevel)> {
    let (base, _) = flatten(map);
    let st = ret.straightening;
    let rescale = ret.rescale;
    let u = rescale.image(st.leaf_range);
    let out = MapSpec::ChartConjugated {
        inner: Box::new(base.clone()),
        iterates: ret.base_r,
        chart: ChartRef::Straightening(st),
        rescale,
        domain: Rect::square(u),
    };

    let g = profile_1d(&out)?;
    let (_, d1, d2) = g.deriv(0.0)?;
    if g.c.abs() > 1e-8 * u.width().max(1.0) || d1.abs() > 1e-8 || (d2 - 2.0).abs() > 1e-8 {
        return Err(Error::NormalizationFailed { second_derivative: d2 });
    }
    let residual = out.henon_like_residual(16)?;
    if residual > opts.henon_like_tol {
        return Err(Error::NotHenonLikeAfterChart(residual));
    }
    let beta = thinness(&out, 1, opts.grid)?;
    let jac = out
        .domain()
        .grid(16, 16)
        .par_iter()
        .map(|&q| out.jacobian(q).map(|j| j.determinant().abs()))
        .collect::<Result<Vec<f64>>>()?;
    let jacobian = [jac.iter().cloned().fold(f64::INFINITY, f64::min), jac.iter().cloned().fold(0.0, f64::max)];
    let curvature = normalized_curvature(&out)?;
    let ren_type = map_type(map, ret.r)?;
    let domain = level_quadrilateral(&out, 33)?;
    let mut level = RenormLevel {
        n: 0,
        return_time: ret.base_r,
        ratio: ret.r,
        map: out.clone(),
        straightening: st,
        rescale,
        base_point: ret.base_point,
        domain,
        sigma: st.leaf_range.width() / base.domain().x.width(),
        tau: rescale.shift,
        ren_type,
        thinness: beta,
        curvature,
        curvature_centered: None,
        jacobian,
        henon_like_residual: residual,
        regularity: None,
        regularity_error: None,
    };
    level.curvature_centered = centered_curvature(&level).ok();
    Ok((out, level))
}

/// Curvature of `u ↦ F_n(u, 0)` at its vertical tangency.
fn normalized_curvature(map: &MapSpec) -> Result<f64> {
    let curve = image_of_central_leaf(map, 41, 0.05)?;
    curvature_of_samples(&curve)
}

fn image_of_central_leaf(map: &MapSpec, n: usize, half_width: f64) -> Result<Vec<Point2>> {
    let u = map.domain().x;
    let h = half_width * u.width();
    linspace(-h, h, n)
        .into_iter()
        .map(|s| {
            let (x, y) = map.apply(s, 0.0)?;
            Ok(Point2::new(x, y))
        })
        .collect()
}

/// Curvature of `F^{R_n}` of the central horizontal leaf in the centered chart.
pub fn centered_curvature(level: &RenormLevel) -> Result<f64> {
    let (base, _) = flatten(&level.map);
    let chart = level.centered_chart()?;
    let i = level.straightening.leaf_range;
    let h = 0.05 * i.width();
    let bp = level.base_point;
    let pts: Result<Vec<Point2>> = linspace(bp.x - h, bp.x + h, 41)
        .into_iter()
        .map(|x| chart.forward(base.iterate_point(Point2::new(x, bp.y), level.return_time)?))
        .collect();
    curvature_of_samples(&pts?)
}

fn level_quadrilateral(map: &MapSpec, n: usize) -> Result<Quadrilateral> {
    let d = map.domain();
    let ws = linspace(d.y.lo, d.y.hi, n);
    let side = |u: f64| -> Result<Leaf> {
        let pts: Result<Vec<Point2>> = ws.iter().map(|&w| map.to_inner(Point2::new(u, w))).collect();
        let pts = pts?;
        let mut pairs: Vec<(f64, f64)> = pts.iter().map(|p| (p.y, p.x)).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Leaf { seed: u, ys: pairs.iter().map(|p| p.0).collect(), xs: pairs.iter().map(|p| p.1).collect() })
    };
    let a = side(d.x.lo)?;
    let b = side(d.x.hi)?;
    let (left, right) = if a.xs[0] <= b.xs[0] { (a, b) } else { (b, a) };
    let y = Interval::new(left.ys[0], left.ys[left.ys.len() - 1]);
    Ok(Quadrilateral { left, right, y })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum StopReason {
    DepthReached,
    NotRenormalizable { depth: usize },
    Undecided { depth: usize, r: usize },
    DepthLimited { return_time: usize, limit: usize },
    Failed { depth: usize, message: String },
    WordMismatch { depth: usize },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SequenceOptions {
    pub b_max: usize,
    pub eps: f64,
    pub lambda: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub certify: bool,
    pub certify_grid: usize,
    pub depth_guard: usize,
    pub renorm: RenormOptions,
}

impl Default for SequenceOptions {
    fn default() -> Self {
        SequenceOptions {
            b_max: crate::unimodal::DEFAULT_BMAX,
            eps: 0.2,
            lambda: 0.5,
            l: 3.0,
            certify: true,
            certify_grid: 32,
            depth_guard: DEPTH_GUARD,
            renorm: RenormOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RenormSequence {
    pub base: MapSpec,
    pub levels: Vec<RenormLevel>,
    pub word: CombinatoricsWord,
    pub stop: StopReason,
    pub options: SequenceOptions,
}

impl RenormSequence {
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Level `n ≥ 1`.
    pub fn level(&self, n: usize) -> Result<&RenormLevel> {
        if n == 0 || n > self.levels.len() {
            return Err(Error::InsufficientDepth { need: n, have: self.levels.len() });
        }
        Ok(&self.levels[n - 1])
    }

    /// Map at depth `n`, the base map for `n = 0`.
    pub fn map_at(&self, n: usize) -> Result<&MapSpec> {
        if n == 0 {
            Ok(&self.base)
        } else {
            Ok(&self.level(n)?.map)
        }
    }

    pub fn return_time(&self, n: usize) -> Result<usize> {
        if n == 0 {
            Ok(1)
        } else {
            Ok(self.level(n)?.return_time)
        }
    }
}

/// Certify the return `F^{R_n}` of a level on a sample of its domain.
pub fn certify_level(base: &MapSpec, level: &RenormLevel, opts: &SequenceOptions) -> Result<RegularityReport> {
    let points = level.domain_sample(opts.certify_grid)?;
    let cand = ReturnCandidate { map: base.clone(), r: level.return_time, points, refined_points: None, vertical: None };
    certify_return(&cand, opts.eps, opts.lambda, opts.l)
}

/// Iterate the operator up to `depth` levels, optionally following a word.
pub fn renorm_sequence(
    map: &MapSpec,
    depth: usize,
    word: Option<&CombinatoricsWord>,
    opts: &SequenceOptions,
) -> RenormSequence {
    let mut seq = RenormSequence {
        base: map.clone(),
        levels: Vec::new(),
        word: Vec::new(),
        stop: StopReason::DepthReached,
        options: opts.clone(),
    };
    let mut current = map.clone();
    let mut r_total = 1usize;
    for n in 0..depth {
        let step = (|| -> Result<std::result::Result<(MapSpec, RenormLevel), StopReason>> {
            let cap = opts.depth_guard / r_total;
            let limited = StopReason::DepthLimited { return_time: r_total * (cap + 1).max(2), limit: opts.depth_guard };
            if cap < 2 {
                return Ok(Err(limited));
            }
            let ret = match locate_return(&current, opts.b_max.min(cap))? {
                ReturnSearch::Found(ret) => ret,
                ReturnSearch::Undecided { r } => return Ok(Err(StopReason::Undecided { depth: n, r })),
                ReturnSearch::NotRenormalizable if cap < opts.b_max => return Ok(Err(limited)),
                ReturnSearch::NotRenormalizable => return Ok(Err(StopReason::NotRenormalizable { depth: n })),
            };
            let (next, mut level) = renormalize_once(&current, &ret, &opts.renorm)?;
            level.n = n + 1;
            if let Some(w) = word {
                if w.get(n) != Some(&level.ren_type) {
                    return Ok(Err(StopReason::WordMismatch { depth: n }));
                }
            }
            Ok(Ok((next, level)))
        })();
        match step {
            Ok(Ok((next, mut level))) => {
                if opts.certify {
                    match certify_level(map, &level, opts) {
                        Ok(rep) => level.regularity = Some(rep),
                        Err(e) => level.regularity_error = Some(e.to_string()),
                    }
                }
                r_total = level.return_time;
                seq.word.push(level.ren_type.clone());
                seq.levels.push(level);
                current = next;
            }
            Ok(Err(reason)) => {
                seq.stop = reason;
                return seq;
            }
            Err(e) => {
                seq.stop = StopReason::Failed { depth: n, message: e.to_string() };
                return seq;
            }
        }
    }
    seq
}

/// Vertical tangency of the image of the central horizontal leaf at `F_n`,
/// in normalized coordinates.
fn tangency_normalized(map: &MapSpec) -> Result<Point2> {
    let f = profile_1d(map).map_err(|e| match e {
        Error::NotUnimodal { .. } => Error::NoTangency,
        e => e,
    })?;
    let (x, y) = map.apply(f.c, 0.0)?;
    Ok(Point2::new(x, y))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriticalValue {
    pub v0: Point2,
    /// Tangency point per depth `1..=N`, in base coordinates.
    pub per_depth: Vec<Point2>,
    /// Distances between consecutive per-depth points.
    pub residuals: Vec<f64>,
}

pub fn critical_value(seq: &RenormSequence) -> Result<CriticalValue> {
    if seq.levels.is_empty() {
        return Err(Error::InsufficientDepth { need: 1, have: 0 });
    }
    let per_depth: Result<Vec<Point2>> = seq
        .levels
        .iter()
        .map(|l| {
            let z = tangency_normalized(&l.map)?;
            l.map.to_inner(z)
        })
        .collect();
    let per_depth = per_depth?;
    let residuals = per_depth.windows(2).map(|w| w[0].dist(&w[1])).collect();
    Ok(CriticalValue { v0: *per_depth.last().expect("nonempty"), per_depth, residuals })
}

/// Type at depth `n` from the projected orbit `π_h F_n^k(v)` of the critical
/// value in normalized coordinates, `0 ≤ k < r`.
pub fn type_2d(seq: &RenormSequence, n: usize, r: usize) -> Result<RenType> {
    map_type(seq.map_at(n)?, r)
}

/// Order of `π_h F^k(v)`, `0 ≤ k < r`, for the tangency point `v` of `F`.
pub fn map_type(map: &MapSpec, r: usize) -> Result<RenType> {
    let f = profile_1d(map)?;
    let mut p = tangency_normalized(map)?;
    let mut pts = Vec::with_capacity(r);
    for _ in 0..r {
        pts.push(p.x * f.sign);
        let (x, y) = map.apply(p.x, p.y)?;
        p = Point2::new(x, y);
    }
    RenType::from_points(&pts, r)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PieceDiameters {
    pub diameters: Vec<f64>,
    pub total: f64,
}

fn diameter(pts: &[Point2]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            d = d.max(pts[i].dist(&pts[j]));
        }
    }
    d
}

/// Diameters of `F^i(𝓑ⁿ)`, `0 ≤ i < R_n`, from propagated boundary samples.
pub fn piece_diameters(seq: &RenormSequence, n: usize) -> Result<PieceDiameters> {
    if n == 0 {
        let d = seq.base.domain();
        let dia = d.x.width().hypot(d.y.width());
        return Ok(PieceDiameters { diameters: vec![dia], total: dia });
    }
    let level = seq.level(n)?;
    let (base, _) = flatten(&level.map);
    let d = level.map.domain();
    let bd = Quadrilateral::from_rect(d).boundary(48);
    let pts: Result<Vec<Point2>> = bd.par_iter().map(|&z| level.map.to_inner(z)).collect();
    let mut pts = pts?;
    let mut diameters = Vec::with_capacity(level.return_time);
    for i in 0..level.return_time {
        if i > 0 {
            pts = pts
                .iter()
                .map(|&p| {
                    let (x, y) = base.apply(p.x, p.y).map_err(|_| Error::OrbitEscaped { step: i })?;
                    Ok(Point2::new(x, y))
                })
                .collect::<Result<Vec<_>>>()?;
        }
        diameters.push(diameter(&pts));
    }
    let total = diameters.iter().sum();
    Ok(PieceDiameters { diameters, total })
}

/// Smallest signed margin of `∂𝓑^{n+1}` inside the normalized domain of level `n`.
pub fn nesting_margin(seq: &RenormSequence, n: usize) -> Result<f64> {
    let inner = seq.level(n + 1)?;
    let outer_map = seq.map_at(n)?;
    let d = outer_map.domain();
    let bd = Quadrilateral::from_rect(inner.map.domain()).boundary(17);
    let mut m = f64::INFINITY;
    for z in bd {
        let p = inner.map.to_inner(z)?;
        let q = outer_map.from_inner(p)?;
        m = m.min(q.x - d.x.lo).min(d.x.hi - q.x).min(q.y - d.y.lo).min(d.y.hi - q.y);
    }
    Ok(m)
}
