//! Diagnostics along renormalization sequences: convergence report, shadowing
//! defects, a priori distortion, the finite-time check and the unicriticality
//! probe.
//!
//! Higher `C^r` norms are reported through `C⁰` values and first
//! finite-difference surrogates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charts::{chart_distance, ChartDistance, ChartMap};
use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::maps::{MapSpec, Point2, Rect};
use crate::numeric::{linear_fit, linspace};
use crate::regularity::{attractor_seeds, forward_regular, lyapunov_exponent, return_vertical};
use crate::renorm2d::{certify_level, critical_value, RenormSequence, SequenceOptions};
use crate::unimodal::{renorm_1d, renormalizable, UnimodalMap};

const CHART_GRID: usize = 9;
const DISTORTION_SAMPLES: usize = 129;
const PROFILE_SAMPLES: usize = 201;
const NORM_GRID: usize = 16;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub depths: Vec<usize>,
    #[serde(rename = "R")]
    pub return_times: Vec<usize>,
    /// `Ψⁿ` against `Ψ^{n+1}` on the domain of the deeper chart; absent at the last depth.
    pub chart_distances: Vec<Option<ChartDistance>>,
    pub thinness: Vec<f64>,
    /// `|π_h 𝓑ⁿ|` in base coordinates.
    pub widths: Vec<f64>,
    /// `(σ₁, σ₂)` with `σ₁ⁿ ≤ |π_h 𝓑ⁿ| ≤ σ₂ⁿ` on the achieved depths.
    pub sigma: (f64, f64),
    /// `|π_v F^{R_n}(𝓑ⁿ)|² / |π_h 𝓑ⁿ|`.
    pub aspect: Vec<f64>,
    /// Sup of `|𝓡ⁿ(F)|` on its domain.
    pub c0_norm: Vec<f64>,
    /// Sup of the entries of `D𝓡ⁿ(F)` on its domain.
    pub c1_norm: Vec<f64>,
    pub profile_distances: Option<Vec<f64>>,
    /// Decay rate fitted to the profile distances.
    pub rho: Option<f64>,
    pub norm_surrogate: String,
}

fn extent(vals: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    hi - lo
}

fn norms(map: &MapSpec) -> Result<(f64, f64)> {
    let pts = map.domain().grid(NORM_GRID, NORM_GRID);
    let vals: Result<Vec<(f64, f64)>> = pts
        .par_iter()
        .map(|&p| {
            let q = map.eval(p)?;
            let j = map.jacobian(p)?;
            Ok((q.x.abs().max(q.y.abs()), j.iter().fold(0.0f64, |m, v| m.max(v.abs()))))
        })
        .collect();
    Ok(vals?.into_iter().fold((0.0f64, 0.0f64), |(a, b), (c, d)| (a.max(c), b.max(d))))
}

/// Distance between the centered charts of levels `n` and `n + 1`.
pub fn level_chart_distance(seq: &RenormSequence, n: usize) -> Result<ChartDistance> {
    let outer = seq.level(n)?.centered_chart()?;
    let deep = seq.level(n + 1)?;
    let inner = deep.centered_chart()?;
    let zs: Result<Vec<Point2>> =
        deep.domain_sample(CHART_GRID)?.into_iter().map(|p| inner.forward(p)).collect();
    let zs = zs?;
    let x = extent(zs.iter().map(|z| z.x));
    let y = extent(zs.iter().map(|z| z.y));
    let lo = |v: fn(&Point2) -> f64| zs.iter().map(v).fold(f64::INFINITY, f64::min);
    let rect = Rect::new(
        crate::maps::Interval::new(lo(|z| z.x), lo(|z| z.x) + x),
        crate::maps::Interval::new(lo(|z| z.y), lo(|z| z.y) + y),
    );
    chart_distance(&outer, &inner, rect, CHART_GRID)
}

/// Convergence quantities, one entry per achieved depth.
pub fn theorem_a_report(seq: &RenormSequence, reference: Option<&[UnimodalMap]>) -> Result<ConvergenceReport> {
    let n = seq.depth();
    if n < 2 {
        return Err(Error::InsufficientDepth { need: 2, have: n });
    }
    let base = &seq.base;
    let mut rep = ConvergenceReport {
        depths: (1..=n).collect(),
        return_times: seq.levels.iter().map(|l| l.return_time).collect(),
        chart_distances: Vec::with_capacity(n),
        thinness: seq.levels.iter().map(|l| l.thinness).collect(),
        widths: Vec::with_capacity(n),
        sigma: (f64::INFINITY, 0.0),
        aspect: Vec::with_capacity(n),
        c0_norm: Vec::with_capacity(n),
        c1_norm: Vec::with_capacity(n),
        profile_distances: None,
        rho: None,
        norm_surrogate: "C0 and first finite differences".into(),
    };
    for (k, level) in seq.levels.iter().enumerate() {
        let depth = k + 1;
        rep.chart_distances.push(if depth < n { Some(level_chart_distance(seq, depth)?) } else { None });
        let width = level.domain.bounding_rect().x.width();
        rep.widths.push(width);
        let s = width.powf(1.0 / depth as f64);
        rep.sigma = (rep.sigma.0.min(s), rep.sigma.1.max(s));
        let pts = level.domain_sample(NORM_GRID)?;
        let img: Result<Vec<Point2>> = pts.par_iter().map(|&p| base.iterate_point(p, level.return_time)).collect();
        let h = extent(img?.iter().map(|p| p.y));
        rep.aspect.push(h * h / width);
        let (c0, c1) = norms(&level.map)?;
        rep.c0_norm.push(c0);
        rep.c1_norm.push(c1);
    }
    if let Some(refs) = reference {
        let d: Result<Vec<f64>> = seq
            .levels
            .iter()
            .zip(refs)
            .map(|(l, g)| l.profile()?.sup_distance(g, PROFILE_SAMPLES))
            .collect();
        let d = d?;
        rep.rho = fit_rate(&d);
        rep.profile_distances = Some(d);
    }
    Ok(rep)
}

/// `exp` of the slope of `log d_n` against `n`, from at least three positive values.
pub fn fit_rate(d: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        d.iter().enumerate().filter(|(_, v)| **v > 0.0).map(|(i, v)| ((i + 1) as f64, v.ln())).collect();
    if pts.len() < 3 {
        return None;
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    Some(linear_fit(&xs, &ys).0.exp())
}

/// Profile of the map at depth `n`, the base profile for `n = 0`.
pub fn profile_at(seq: &RenormSequence, n: usize) -> Result<UnimodalMap> {
    crate::maps::profile_1d(seq.map_at(n)?)
}

/// `k`-fold 1D renormalization of `f`.
pub fn renorm_1d_iter(f: &UnimodalMap, k: usize, b_max: usize) -> Result<UnimodalMap> {
    let mut g = f.clone();
    for i in 0..k {
        let ren = renormalizable(&g, b_max).ok_or(Error::Not1DRenormalizable(i))?;
        g = renorm_1d(&g, &ren)?.0;
    }
    Ok(g)
}

/// Sup distance between the profile at depth `n + k` and the `k`-fold 1D
/// renormalization of the profile at depth `n`.
pub fn shadowing_defect(seq: &RenormSequence, n: usize, k: usize) -> Result<f64> {
    let deep = profile_at(seq, n + k)?;
    let f = profile_at(seq, n)?;
    let g = renorm_1d_iter(&f, k, seq.options.b_max)?;
    g.sup_distance(&deep, PROFILE_SAMPLES)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Distortion {
    pub n: usize,
    /// `sup|h_n'| / inf|h_n'|` on the leaf range.
    pub distortion: f64,
    /// Sup of `|e_n|` on the same samples.
    pub e_sup: f64,
}

/// Distortion of the first-entry map `h_n(x) = π_h F^{R_n-1}(x, y*_n)` on the
/// central leaf range of level `n`.
pub fn apriori_distortion(seq: &RenormSequence, n: usize) -> Result<Distortion> {
    if n == 0 {
        return Ok(Distortion { n, distortion: 1.0, e_sup: 0.0 });
    }
    let level = seq.level(n)?;
    let r = level.return_time;
    let base = &seq.base;
    let st = level.straightening;
    let vals: Result<Vec<(f64, f64)>> = linspace(st.leaf_range.lo, st.leaf_range.hi, DISTORTION_SAMPLES)
        .par_iter()
        .map(|&x| {
            let (h, e) = base.iterate(Jet::var_x(x), Jet::constant(st.ystar), r - 1)?;
            Ok((h.dx.abs(), e.v.abs()))
        })
        .collect();
    let vals = vals?;
    let lo = vals.iter().map(|v| v.0).fold(f64::INFINITY, f64::min);
    let hi = vals.iter().map(|v| v.0).fold(0.0, f64::max);
    if lo == 0.0 {
        return Err(Error::Degenerate(0.0));
    }
    let e_sup = vals.iter().map(|v| v.1).fold(0.0, f64::max);
    Ok(Distortion { n, distortion: hi / lo, e_sup })
}

/// Least-squares slope of `log Dis(h_n)` against `n`.
pub fn distortion_slope(d: &[Distortion]) -> f64 {
    let xs: Vec<f64> = d.iter().map(|d| d.n as f64).collect();
    let ys: Vec<f64> = d.iter().map(|d| d.distortion.ln()).collect();
    linear_fit(&xs, &ys).0
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TheoremBConstants {
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub d: f64,
    /// Bound `𝐛` on the return-time ratios; the largest achieved ratio when absent.
    pub b: Option<f64>,
}

impl Default for TheoremBConstants {
    fn default() -> Self {
        TheoremBConstants { c: 10.0, k: 100.0, d: 0.5, b: None }
    }
}

/// `𝐛 ε₀^d`.
pub fn small_margin(b: f64, eps0: f64, d: f64) -> f64 {
    b * eps0.powf(d)
}

/// `C λ^{ε₀ R}`.
pub fn large_depth(c: f64, lambda: f64, eps0: f64, r: usize) -> f64 {
    c * lambda.powf(eps0 * r as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inequality {
    pub name: String,
    /// Value at the selected depth, or at the deepest level when none qualifies.
    pub value: f64,
    pub holds: bool,
    pub depth: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FiniteCheckInputs {
    pub b: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub lambda: f64,
    pub eps0: f64,
    pub d: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "K")]
    pub k: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FiniteCheckReport {
    pub inputs: FiniteCheckInputs,
    pub inequalities: Vec<Inequality>,
    pub n0: Option<usize>,
    pub n1: Option<usize>,
    pub overall: bool,
    /// Verdicts of levels beyond `n₁` re-certified at `(L², 2ε₀)`.
    pub relaxed: Vec<(usize, Option<bool>)>,
    pub conclusion_holds: Option<bool>,
    /// First-derivative surrogate of `‖F^{R_{n₀}}‖` on the level-`n₀` domain.
    pub norm_n0: Option<f64>,
    pub kappa_n0: Option<f64>,
    pub note: String,
}

fn first_depth(rs: &[usize], coeff: f64, lambda: f64, eps0: f64, name: &str) -> Inequality {
    let found = rs.iter().position(|&r| large_depth(coeff, lambda, eps0, r) < 1.0);
    let at = found.unwrap_or(rs.len() - 1);
    let value = large_depth(coeff, lambda, eps0, rs[at]);
    Inequality { name: name.into(), value, holds: found.is_some(), depth: found }
}

/// Evaluate the inequalities on the return times `R_0 = 1, R_1, …` of the
/// sequence and re-certify the levels beyond `n₁`.
pub fn theorem_b_check(seq: &RenormSequence, constants: &TheoremBConstants, eps0: f64) -> FiniteCheckReport {
    let opts = &seq.options;
    let rs: Vec<usize> = std::iter::once(1).chain(seq.levels.iter().map(|l| l.return_time)).collect();
    let b = constants.b.unwrap_or_else(|| seq.levels.iter().map(|l| l.ratio).max().unwrap_or(1) as f64);
    let margin = small_margin(b, eps0, constants.d);
    let ineq0 = Inequality { name: "small_margin".into(), value: margin, holds: margin < 1.0, depth: None };
    let ineq1 = first_depth(&rs, constants.c, opts.lambda, eps0, "large_depth_0");
    let ineq2 = first_depth(&rs, constants.k, opts.lambda, eps0, "large_depth_1");
    let (n0, n1) = (ineq1.depth, ineq2.depth);
    let overall = ineq0.holds && ineq1.holds && ineq2.holds;

    let mut relaxed = Vec::new();
    if let Some(n1) = n1 {
        let ro = SequenceOptions { l: opts.l * opts.l, eps: 2.0 * eps0, ..opts.clone() };
        for level in seq.levels.iter().filter(|l| l.n > n1) {
            let pass = certify_level(&seq.base, level, &ro).ok().map(|r| r.pass);
            relaxed.push((level.n, pass));
        }
    }
    let conclusion_holds = if relaxed.is_empty() { None } else { Some(relaxed.iter().all(|r| r.1 == Some(true))) };
    let (norm_n0, kappa_n0) = match n0.filter(|&n| n > 0).and_then(|n| seq.level(n).ok()) {
        Some(l) => (norms(&l.map).ok().map(|v| v.1), Some(l.curvature)),
        None => (None, None),
    };
    FiniteCheckReport {
        inputs: FiniteCheckInputs { b, l: opts.l, lambda: opts.lambda, eps0, d: constants.d, c: constants.c, k: constants.k },
        inequalities: vec![ineq0, ineq1, ineq2],
        n0,
        n1,
        overall,
        relaxed,
        conclusion_holds,
        norm_n0,
        kappa_n0,
        note: "C, K, d are illustrative, not derived".into(),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProbeOptions {
    pub t: f64,
    pub eps: f64,
    pub samples: usize,
    /// Forward steps certified at each admitted point.
    pub steps: usize,
    /// Length of the backward critical orbit.
    pub backward: usize,
    pub lambda: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions { t: 0.1, eps: 0.1, samples: 64, steps: 8, backward: 16, lambda: 0.5 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProbeRow {
    pub point: Point2,
    /// Smallest ratio `|p − v_{-n}| / (t λ_μ^{εn})`.
    pub clearance: f64,
    pub excluded: bool,
    #[serde(rename = "L_min")]
    pub l_min: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProbeTable {
    pub lambda_mu: f64,
    pub backward_orbit: Vec<Point2>,
    pub rows: Vec<ProbeRow>,
    #[serde(rename = "max_L_min")]
    pub max_l_min: Option<f64>,
    /// Every sample fell inside an excluded disk.
    pub all_excluded: bool,
}

/// Sample the pieces of the deepest level and certify the points outside the
/// disks `𝔻_{v_{-n}}(t λ_μ^{εn})`.
pub fn unicritical_probe(seq: &RenormSequence, opts: &ProbeOptions) -> Result<ProbeTable> {
    let base = &seq.base;
    let cv = critical_value(seq)?;
    let seeds = attractor_seeds(base, cv.v0, 64, 8, 17)?;
    let lambda_mu = lyapunov_exponent(base, &seeds, 256)?.lambda_mu;
    let mut orbit = vec![cv.v0];
    for _ in 0..opts.backward {
        match base.inverse(*orbit.last().expect("nonempty")) {
            Ok(p) if base.domain().contains(p) => orbit.push(p),
            _ => break,
        }
    }
    let level = seq.levels.last().ok_or(Error::InsufficientDepth { need: 1, have: 0 })?;
    let side = (opts.samples as f64).sqrt().ceil() as usize;
    let grid = level.domain_sample(side.max(2))?;
    let pts: Result<Vec<Point2>> = grid
        .iter()
        .take(opts.samples)
        .enumerate()
        .map(|(i, &p)| base.iterate_point(p, i % level.return_time))
        .collect();
    let rows: Vec<ProbeRow> = pts?
        .par_iter()
        .map(|&p| {
            let clearance = orbit
                .iter()
                .enumerate()
                .map(|(n, v)| p.dist(v) / (opts.t * lambda_mu.powf(opts.eps * n as f64)))
                .fold(f64::INFINITY, f64::min);
            let excluded = clearance < 1.0;
            let l_min = if excluded {
                None
            } else {
                return_vertical(base, p, opts.steps)
                    .and_then(|e| forward_regular(base, p, e, opts.steps, opts.eps, opts.lambda))
                    .ok()
            };
            ProbeRow { point: p, clearance, excluded, l_min }
        })
        .collect();
    let max_l_min = rows.iter().filter_map(|r| r.l_min).reduce(f64::max);
    let all_excluded = rows.iter().all(|r| r.excluded);
    Ok(ProbeTable { lambda_mu, backward_orbit: orbit, rows, max_l_min, all_excluded })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::renorm2d::renorm_sequence;

    fn seq(m: &MapSpec, depth: usize) -> RenormSequence {
        renorm_sequence(m, depth, None, &SequenceOptions { certify: false, ..Default::default() })
    }

    #[test]
    fn theorem_b_arithmetic_is_deterministic() {
        let a = large_depth(10.0, 0.3, 0.2, 16);
        assert_eq!(a.to_bits(), large_depth(10.0, 0.3, 0.2, 16).to_bits());
        assert!((small_margin(2.0, 0.01, 0.5) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn one_level_is_insufficient() {
        let s = seq(&MapSpec::quadratic_embedding(-1.3), 1);
        assert_eq!(s.depth(), 1);
        assert!(matches!(theorem_a_report(&s, None), Err(Error::InsufficientDepth { .. })));
    }

    #[test]
    fn degenerate_shadowing_vanishes() {
        let s = seq(&MapSpec::quadratic_embedding(-1.4), 2);
        assert_eq!(s.depth(), 2);
        for (n, k) in [(0, 1), (1, 1), (0, 2)] {
            assert!(shadowing_defect(&s, n, k).unwrap() < 1e-8, "n={n} k={k}");
        }
    }

    #[test]
    fn shadowing_beyond_1d_renormalizability() {
        let s = seq(&MapSpec::quadratic_embedding(-1.3), 1);
        let f = profile_at(&s, 1).unwrap();
        assert!(matches!(renorm_1d_iter(&f, 1, 9), Err(Error::Not1DRenormalizable(0))));
    }

    #[test]
    fn identity_return_has_unit_distortion() {
        let s = seq(&MapSpec::quadratic_embedding(-1.4), 1);
        assert_eq!(apriori_distortion(&s, 0).unwrap().distortion, 1.0);
        assert!(apriori_distortion(&s, 1).unwrap().distortion >= 1.0);
    }

    #[test]
    fn probe_with_huge_disks_excludes_everything() {
        let s = seq(&MapSpec::henon(-1.3, 0.1), 1);
        let t = unicritical_probe(&s, &ProbeOptions { t: 1e6, samples: 16, ..Default::default() }).unwrap();
        assert!(t.all_excluded && t.max_l_min.is_none());
    }
}
