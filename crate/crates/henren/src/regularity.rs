//! Forward, backward and horizontal `(L, ε, λ)`-regularity of derivative
//! cocycles, regular-return certification and Lyapunov exponents.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charts::VerticalField;
use crate::error::{Error, Result};
use crate::maps::{jacobian_of, orbit_cocycle, Direction, MapSpec, OrbitCocycle, Point2, Time};
use crate::jet::Jet;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityParams {
    #[serde(rename = "L")]
    pub l: f64,
    pub eps: f64,
    pub lambda: f64,
}

impl RegularityParams {
    pub fn new(l: f64, eps: f64, lambda: f64) -> Result<Self> {
        if !(l >= 1.0) || !(eps > 0.0 && eps < 1.0) || !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::Invalid(format!("need L ≥ 1, ε ∈ (0,1), λ ∈ (0,1); got {l}, {eps}, {lambda}")));
        }
        Ok(RegularityParams { l, eps, lambda })
    }
}

/// Per-step log-space requirement on `L`, for each exponent `s`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    pub s: Vec<usize>,
    /// `margins[k][m-1]`: smallest `log L` making step `m` hold for `s[k]`.
    pub log_l: Vec<Vec<f64>>,
}

impl Margins {
    fn max(&self) -> (f64, usize) {
        let mut best = (0.0f64, 0usize);
        for row in &self.log_l {
            for (m, &v) in row.iter().enumerate() {
                if v > best.0 {
                    best = (v, m + 1);
                }
            }
        }
        best
    }
}

/// `log L` needed for `L⁻¹λ^{(1+ε)m} ≤ exp(q) ≤ Lλ^{(1−ε)m}`.
fn requirement(q: f64, m: usize, eps: f64, lambda: f64) -> f64 {
    let ll = lambda.ln();
    let lower = (1.0 + eps) * m as f64 * ll - q;
    let upper = q - (1.0 - eps) * m as f64 * ll;
    lower.max(upper)
}

fn singular_step(c: &OrbitCocycle) -> Option<usize> {
    c.log_jac.iter().position(|v| !v.is_finite()).map(|m| m.saturating_sub(1))
}

/// Margins from a forward cocycle, quotient `‖DF^m|E‖^{s+1} / Jac^s`.
pub fn forward_margins(c: &OrbitCocycle, eps: f64, lambda: f64) -> Result<Margins> {
    if let Some(step) = singular_step(c) {
        return Err(Error::SingularJacobian { step });
    }
    let rows = [0usize, 1]
        .iter()
        .map(|&s| {
            (1..=c.len())
                .map(|m| {
                    let q = (s + 1) as f64 * c.log_stretch[m] - s as f64 * c.log_jac[m];
                    requirement(q, m, eps, lambda)
                })
                .collect()
        })
        .collect();
    Ok(Margins { s: vec![0, 1], log_l: rows })
}

/// Margins from a backward cocycle, quotient `Jac^s / ‖DF^{-m}|E‖^{s+1}`.
pub fn backward_margins(c: &OrbitCocycle, eps: f64, lambda: f64) -> Result<Margins> {
    if let Some(step) = singular_step(c) {
        return Err(Error::SingularJacobian { step });
    }
    let rows = [0usize, 1]
        .iter()
        .map(|&s| {
            (1..=c.len())
                .map(|m| {
                    let q = s as f64 * c.log_jac[m] - (s + 1) as f64 * c.log_stretch[m];
                    requirement(q, m, eps, lambda)
                })
                .collect()
        })
        .collect();
    Ok(Margins { s: vec![0, 1], log_l: rows })
}

/// Margins for horizontal regularity, quotient `Jac / ‖DF^n|E‖^s`, `s ∈ {1, 2}`.
pub fn horizontal_margins(c: &OrbitCocycle, eps: f64, lambda: f64) -> Result<Margins> {
    if let Some(step) = singular_step(c) {
        return Err(Error::SingularJacobian { step });
    }
    let rows = [1usize, 2]
        .iter()
        .map(|&s| {
            (1..=c.len())
                .map(|m| {
                    let q = c.log_jac[m] - s as f64 * c.log_stretch[m];
                    requirement(q, m, eps, lambda)
                })
                .collect()
        })
        .collect();
    Ok(Margins { s: vec![1, 2], log_l: rows })
}

fn l_of(m: &Margins) -> f64 {
    m.max().0.exp()
}

/// Smallest `L` for which `p` is `M`-times forward `(L, ε, λ)`-regular along `e`.
pub fn forward_regular(map: &MapSpec, p: Point2, e: Direction, m: usize, eps: f64, lambda: f64) -> Result<f64> {
    let c = orbit_cocycle(map, p, e, m, Time::Forward)?;
    Ok(l_of(&forward_margins(&c, eps, lambda)?))
}

/// Smallest `L` for which `q` is `M`-times backward `(L, ε, λ)`-regular along `e`.
pub fn backward_regular(map: &MapSpec, q: Point2, e: Direction, m: usize, eps: f64, lambda: f64) -> Result<f64> {
    let c = orbit_cocycle(map, q, e, m, Time::Backward)?;
    Ok(l_of(&backward_margins(&c, eps, lambda)?))
}

pub fn horizontal_forward_regular(
    map: &MapSpec,
    p: Point2,
    e: Direction,
    m: usize,
    eps: f64,
    lambda: f64,
) -> Result<f64> {
    let c = orbit_cocycle(map, p, e, m, Time::Forward)?;
    Ok(l_of(&horizontal_margins(&c, eps, lambda)?))
}

/// `DF^{-R}` of the horizontal at `F^R(p)`, via the adjugate of `DF^R(p)`.
pub fn return_vertical(map: &MapSpec, p: Point2, r: usize) -> Result<Direction> {
    let (f, g) = map.iterate(Jet::var_x(p.x), Jet::var_y(p.y), r)?;
    let d = jacobian_of(&f, &g);
    let (a, b) = (d[(1, 1)], -d[(1, 0)]);
    if a == 0.0 && b == 0.0 {
        return Err(Error::SingularJacobian { step: r });
    }
    Ok(Direction::new(a, b))
}

/// Sampled data of a candidate regular return `F^R` on a domain.
#[derive(Clone, Debug)]
pub struct ReturnCandidate {
    pub map: MapSpec,
    pub r: usize,
    /// Sample points of the return domain.
    pub points: Vec<Point2>,
    /// Denser sample used for the refinement check.
    pub refined_points: Option<Vec<Point2>>,
    /// Vertical field on the domain; the exact pulled-back direction when absent.
    pub vertical: Option<VerticalField>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegularityReport {
    #[serde(rename = "L_min_forward")]
    pub l_min_forward: f64,
    #[serde(rename = "L_min_backward")]
    pub l_min_backward: f64,
    pub angle_min: f64,
    /// Step of the worst forward or backward requirement.
    pub worst_step: usize,
    pub worst_point: Point2,
    pub forward_margins: Margins,
    pub backward_margins: Margins,
    #[serde(rename = "L_required")]
    pub l_required: f64,
    pub eps: f64,
    pub lambda: f64,
    pub pass: bool,
    /// Jacobian bounds with `L̄ = L²` and `ε̄ = 2ε` hold along all sampled returns.
    pub jacobian_bound_ok: bool,
    /// `L_min(F^m p) ≤ C L^D λ^{-ε̄ m}` at the worst point, `C = 10`, `D = 2`.
    pub growth_bound_ok: bool,
    /// Relative change of the overall `L` between the sample and the refined sample.
    pub refinement_change: Option<f64>,
    pub conventions: String,
}

impl RegularityReport {
    pub fn l_min(&self) -> f64 {
        self.l_min_forward.max(self.l_min_backward).max(1.0 / self.angle_min)
    }
}

struct PointResult {
    p: Point2,
    lf: f64,
    lb: f64,
    angle: f64,
    fwd: Margins,
    bwd: Margins,
    log_jac: Vec<f64>,
    stepf: usize,
    stepb: usize,
}

fn certify_point(c: &ReturnCandidate, p: Point2, eps: f64, lambda: f64) -> Result<PointResult> {
    let ev = match &c.vertical {
        Some(f) => f.direction_at(p),
        None => return_vertical(&c.map, p, c.r)?,
    };
    let fc = orbit_cocycle(&c.map, p, ev, c.r, Time::Forward)?;
    let fwd = forward_margins(&fc, eps, lambda)?;
    let q = fc.points[c.r];
    let bc = orbit_cocycle(&c.map, q, Direction::horizontal(), c.r, Time::Backward)?;
    let bwd = backward_margins(&bc, eps, lambda)?;
    let angle = ev.angle_to(&Direction::horizontal());
    let (lf, stepf) = fwd.max();
    let (lb, stepb) = bwd.max();
    Ok(PointResult { p, lf: lf.exp(), lb: lb.exp(), angle, fwd, bwd, log_jac: fc.log_jac, stepf, stepb })
}

fn sweep(c: &ReturnCandidate, pts: &[Point2], eps: f64, lambda: f64) -> Result<Vec<PointResult>> {
    pts.par_iter().map(|&p| certify_point(c, p, eps, lambda).map_err(|e| e.at(p.x, p.y))).collect()
}

pub const GROWTH_C: f64 = 10.0;
pub const GROWTH_D: f64 = 2.0;

pub fn certify_return(c: &ReturnCandidate, eps: f64, lambda: f64, l_required: f64) -> Result<RegularityReport> {
    if c.points.is_empty() {
        return Err(Error::Invalid("empty sample".into()));
    }
    let res = sweep(c, &c.points, eps, lambda)?;
    let lf = res.iter().map(|r| r.lf).fold(1.0, f64::max);
    let lb = res.iter().map(|r| r.lb).fold(1.0, f64::max);
    let angle = res.iter().map(|r| r.angle).fold(f64::INFINITY, f64::min);
    let worst = res
        .iter()
        .max_by(|a, b| a.lf.max(a.lb).total_cmp(&b.lf.max(b.lb)))
        .expect("nonempty");
    let worst_step = if worst.lf >= worst.lb { worst.stepf } else { worst.stepb };
    let overall = lf.max(lb).max(1.0 / angle);
    let pass = overall <= l_required;

    let (lbar, ebar, ll) = (l_required * l_required, 2.0 * eps, lambda.ln());
    let jacobian_bound_ok = !pass
        || res.iter().all(|r| {
            (1..=c.r).all(|n| {
                let j = r.log_jac[n];
                j >= -lbar.ln() + (1.0 + ebar) * n as f64 * ll && j <= lbar.ln() + (1.0 - ebar) * n as f64 * ll
            })
        });

    let growth_bound_ok = growth_check(c, worst.p, eps, lambda, l_required).unwrap_or(false);

    let refinement_change = match &c.refined_points {
        Some(pts) => {
            let r2 = sweep(c, pts, eps, lambda)?;
            let lf2 = r2.iter().map(|r| r.lf).fold(1.0, f64::max);
            let lb2 = r2.iter().map(|r| r.lb).fold(1.0, f64::max);
            let a2 = r2.iter().map(|r| r.angle).fold(f64::INFINITY, f64::min);
            let o2 = lf2.max(lb2).max(1.0 / a2);
            Some((o2 - overall).abs() / overall)
        }
        None => None,
    };

    Ok(RegularityReport {
        l_min_forward: lf,
        l_min_backward: lb,
        angle_min: angle,
        worst_step,
        worst_point: worst.p,
        forward_margins: worst.fwd.clone(),
        backward_margins: worst.bwd.clone(),
        l_required,
        eps,
        lambda,
        pass,
        jacobian_bound_ok,
        growth_bound_ok,
        refinement_change,
        conventions: "bar-L = L^2, bar-eps = 2 eps, growth bound C = 10, D = 2".into(),
    })
}

/// `L_min` at the shifted base points `F^m(p)` against `C L^D λ^{-ε̄ m}`.
fn growth_check(c: &ReturnCandidate, p: Point2, eps: f64, lambda: f64, l: f64) -> Result<bool> {
    let ev = match &c.vertical {
        Some(f) => f.direction_at(p),
        None => return_vertical(&c.map, p, c.r)?,
    };
    let fc = orbit_cocycle(&c.map, p, ev, c.r, Time::Forward)?;
    let bound = |m: usize| GROWTH_C * l.powf(GROWTH_D) * lambda.powf(-2.0 * eps * m as f64);
    for m in 0..c.r {
        let lm = forward_regular(&c.map, fc.points[m], fc.directions[m], c.r, eps, lambda)?;
        if lm > bound(m) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub lambda_mu: f64,
    /// Largest deviation of a per-seed estimate from `lambda_mu`.
    pub spread: f64,
    pub per_seed: Vec<f64>,
    pub horizon: usize,
}

/// `exp` of the Birkhoff average of `log Jac F` over orbits of the seeds.
pub fn lyapunov_exponent(map: &MapSpec, seeds: &[Point2], horizon: usize) -> Result<LyapunovEstimate> {
    if seeds.is_empty() || horizon == 0 {
        return Err(Error::Invalid("need at least one seed and a positive horizon".into()));
    }
    let logs: Result<Vec<f64>> = seeds
        .par_iter()
        .map(|&p| {
            let c = orbit_cocycle(map, p, Direction::horizontal(), horizon, Time::Forward)?;
            if let Some(step) = singular_step(&c) {
                return Err(Error::SingularJacobian { step });
            }
            Ok(c.log_jac[horizon] / horizon as f64)
        })
        .collect();
    let logs = logs?;
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    let lambda_mu = mean.exp();
    let per_seed: Vec<f64> = logs.iter().map(|l| l.exp()).collect();
    let spread = per_seed.iter().map(|v| (v - lambda_mu).abs()).fold(0.0, f64::max);
    Ok(LyapunovEstimate { lambda_mu, spread, per_seed, horizon })
}

/// Points on the attractor: the orbit of `start` after a transient.
pub fn attractor_seeds(map: &MapSpec, start: Point2, transient: usize, count: usize, stride: usize) -> Result<Vec<Point2>> {
    let mut p = map.iterate_point(start, transient)?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        out.push(p);
        p = map.iterate_point(p, stride.max(1))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(a: f64, b: f64) -> MapSpec {
        MapSpec::diagonal(a, b)
    }

    #[test]
    fn diagonal_forward() {
        let p = Point2::new(0.1, 0.2);
        let l = forward_regular(&diag(1.0, 0.5), p, Direction::vertical(), 10, 0.1, 0.5).unwrap();
        assert_eq!(l, 1.0);
        let l = forward_regular(&diag(1.0, 0.7), p, Direction::vertical(), 10, 0.1, 0.5).unwrap();
        let want = (0.7 / 0.5f64.powf(0.9)).powi(10);
        assert!((l - want).abs() / want < 1e-12, "{l} vs {want}");
    }

    #[test]
    fn embedding_forward_is_singular() {
        let m = MapSpec::quadratic_embedding(-1.3);
        let r = forward_regular(&m, Point2::new(0.1, 0.0), Direction::vertical(), 2, 0.1, 0.5);
        assert!(matches!(r, Err(Error::SingularJacobian { .. })));
    }

    #[test]
    fn diagonal_backward() {
        let l = backward_regular(&diag(2.0, 1.0), Point2::new(0.3, 0.1), Direction::horizontal(), 8, 0.1, 0.5).unwrap();
        let want = (1.9 * 8.0 * 2f64.ln()).exp();
        assert!((l - want).abs() / want < 1e-12);
    }

    #[test]
    fn diagonal_horizontal() {
        let p = Point2::new(0.1, 0.1);
        let l = horizontal_forward_regular(&diag(1.0, 0.5), p, Direction::horizontal(), 10, 0.1, 0.5).unwrap();
        assert_eq!(l, 1.0);
        let l = horizontal_forward_regular(&diag(1.2, 0.5), p, Direction::horizontal(), 6, 0.2, 0.5).unwrap();
        let want = (6.0 * (1.2 * 0.5f64.ln() - (0.6f64 / 1.44).ln())).exp();
        assert!((l - want).abs() / want < 1e-12);
    }

    #[test]
    fn henon_backward_matches_matrix_product() {
        let (a, b) = (-1.3, 0.2);
        let m = MapSpec::henon(a, b);
        // period-2 point of the Hénon map
        let s = 1.0 + b;
        let x = (-s + (s * s - 4.0 * (a + s * s)).sqrt()) / 2.0;
        let p = Point2::new(x, -s - x);
        let q = m.iterate_point(p, 2).unwrap();
        assert!(q.dist(&p) < 1e-12);
        let e = Direction::horizontal();
        let l = backward_regular(&m, p, e, 2, 0.1, 0.5).unwrap();
        let jac = |p: Point2| nalgebra::Matrix2::new(2.0 * p.x, -b, 1.0, 0.0);
        let p1 = m.inverse(p).unwrap();
        let p2 = m.inverse(p1).unwrap();
        let d1 = jac(p1).try_inverse().unwrap();
        let d2 = jac(p2).try_inverse().unwrap();
        let v1 = d1 * nalgebra::Vector2::new(1.0, 0.0);
        let v2 = d2 * d1 * nalgebra::Vector2::new(1.0, 0.0);
        let mut want: f64 = 0.0;
        for (m, v) in [(1usize, v1.norm()), (2, v2.norm())] {
            for s in 0..2 {
                let q = s as f64 * -(m as f64) * b.ln() - (s + 1) as f64 * v.ln();
                want = want.max(requirement(q, m, 0.1, 0.5));
            }
        }
        assert!((l - want.exp()).abs() / l < 1e-9);
    }

    #[test]
    fn lyapunov_constant_jacobian() {
        let m = MapSpec::henon(-1.4, 0.3);
        let seeds = attractor_seeds(&m, Point2::new(0.0, 0.0), 500, 8, 37).unwrap();
        let est = lyapunov_exponent(&m, &seeds, 256).unwrap();
        assert!((est.lambda_mu - 0.3).abs() < 1e-12);
        let e = lyapunov_exponent(&MapSpec::quadratic_embedding(-1.3), &[Point2::new(0.0, 0.0)], 10);
        assert!(e.is_err());
    }
}
