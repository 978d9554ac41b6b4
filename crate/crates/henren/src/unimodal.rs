//! Unimodal interval maps: renormalization, kneading flags, types and
//! full-family bisection.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::maps::{Interval, MapSpec, NormalizationAffine};
use crate::numeric::{bisect, linspace, solve_monotone};

const ESCAPE: f64 = 1e12;
/// Relative violation of the periodic-interval conditions still accepted.
pub const ACCEPT_MARGIN: f64 = 1e-9;
/// Relative violation up to which the answer is declared undecided.
pub const UNDECIDED_MARGIN: f64 = 1e-6;
pub const DEFAULT_BMAX: usize = 9;
const CRITICAL_GRID: usize = 2048;
const PERIODIC_GRID: usize = 4096;

/// One-dimensional map description, evaluated with exact first and second
/// derivatives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Map1D {
    Quadratic { a: f64 },
    /// Polynomial with coefficients in ascending degree.
    Polynomial { coeffs: Vec<f64> },
    /// `x ↦ π_h F(x, y)`.
    Section { map: Box<MapSpec>, y: f64 },
    Iterate { inner: Box<Map1D>, n: usize },
    /// `T ∘ g ∘ T⁻¹` with `T(x) = scale * x + shift`.
    Conjugate { inner: Box<Map1D>, scale: f64, shift: f64 },
}

impl Map1D {
    pub fn apply(&self, x: Jet) -> Result<Jet> {
        let out = match self {
            Map1D::Quadratic { a } => x * x + *a,
            Map1D::Polynomial { coeffs } => {
                let mut acc = Jet::constant(0.0);
                for c in coeffs.iter().rev() {
                    acc = acc * x + *c;
                }
                acc
            }
            Map1D::Section { map, y } => map.apply(x, Jet::constant(*y))?.0,
            Map1D::Iterate { inner, n } => {
                let mut z = x;
                for step in 0..*n {
                    z = inner.apply(z).map_err(|e| match e {
                        Error::OrbitEscaped { .. } => Error::OrbitEscaped { step },
                        e => e,
                    })?;
                }
                z
            }
            Map1D::Conjugate { inner, scale, shift } => {
                inner.apply((x - *shift) * (1.0 / scale))? * *scale + *shift
            }
        };
        if !(out.v.abs() < ESCAPE) {
            return Err(Error::OrbitEscaped { step: 0 });
        }
        Ok(out)
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        Ok(self.apply(Jet::constant(x))?.v)
    }

    /// Value, first and second derivative.
    pub fn deriv(&self, x: f64) -> Result<(f64, f64, f64)> {
        let j = self.apply(Jet::var_x(x))?;
        Ok((j.v, j.dx, j.dxx))
    }
}

/// Interval map with a located quadratic critical point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UnimodalMap {
    pub map: Map1D,
    pub domain: Interval,
    pub c: f64,
    pub v: f64,
    /// Sign of `f''(c)`.
    pub sign: f64,
}

impl UnimodalMap {
    pub fn new(map: Map1D, domain: Interval) -> Result<Self> {
        let (c, v, sign) = critical_point(&map, domain)?;
        Ok(UnimodalMap { map, domain, c, v, sign })
    }

    pub fn quadratic(a: f64) -> Self {
        let r = (0.5 + (0.25 - a).max(0.0).sqrt()).max(1.0);
        UnimodalMap { map: Map1D::Quadratic { a }, domain: Interval::new(-r, r), c: 0.0, v: a, sign: 1.0 }
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        self.map.eval(x)
    }

    pub fn deriv(&self, x: f64) -> Result<(f64, f64, f64)> {
        self.map.deriv(x)
    }

    pub fn iterate(&self, mut x: f64, n: usize) -> Result<f64> {
        for step in 0..n {
            x = self.map.eval(x).map_err(|e| match e {
                Error::OrbitEscaped { .. } => Error::OrbitEscaped { step },
                e => e,
            })?;
        }
        Ok(x)
    }

    /// Exact image of an interval.
    pub fn image(&self, i: Interval) -> Result<Interval> {
        let a = self.eval(i.lo)?;
        let b = self.eval(i.hi)?;
        let mut out = Interval::new(a, b);
        if i.contains(self.c) {
            out = out.hull(self.v);
        }
        Ok(out)
    }

    /// `T ∘ f ∘ T⁻¹` for the affine map `T`.
    pub fn conjugate(&self, t: NormalizationAffine) -> Result<UnimodalMap> {
        let map = Map1D::Conjugate { inner: Box::new(self.map.clone()), scale: t.scale, shift: t.shift };
        UnimodalMap::new(map, t.image(self.domain))
    }

    /// Whether `f(I) ⊆ I`, up to a relative slack.
    pub fn maps_into_self(&self, slack: f64) -> bool {
        match self.image(self.domain) {
            Ok(img) => {
                let pad = slack * self.domain.width();
                img.lo >= self.domain.lo - pad && img.hi <= self.domain.hi + pad
            }
            Err(_) => false,
        }
    }

    /// Critical orbit `f^i(c)` for `i = 0..=n`, in the orientation with `f''(c) > 0`.
    fn oriented_orbit(&self, n: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(n + 1);
        let mut x = self.c;
        out.push(x * self.sign);
        for _ in 0..n {
            x = self.eval(x)?;
            out.push(x * self.sign);
        }
        Ok(out)
    }

    /// Sup distance to `g` on a grid of the common domain.
    pub fn sup_distance(&self, g: &UnimodalMap, n: usize) -> Result<f64> {
        let lo = self.domain.lo.max(g.domain.lo);
        let hi = self.domain.hi.min(g.domain.hi);
        if lo >= hi {
            return Err(Error::Invalid("domains do not overlap".into()));
        }
        let mut d: f64 = 0.0;
        for x in linspace(lo, hi, n) {
            d = d.max((self.eval(x)? - g.eval(x)?).abs());
        }
        Ok(d)
    }
}

fn derivative_sign(map: &Map1D, x: f64) -> Option<f64> {
    match map.deriv(x) {
        Ok((_, d, _)) if d != 0.0 && d.is_finite() => Some(d.signum()),
        _ => None,
    }
}

/// Critical point sitting on an endpoint, as for superstable returns.
fn boundary_critical_point(map: &Map1D, domain: Interval) -> Result<Option<f64>> {
    let tol = 1e-6 * domain.width();
    for end in [domain.lo, domain.hi] {
        let mut c = end;
        for _ in 0..8 {
            let (_, d1, d2) = map.deriv(c)?;
            if d2 == 0.0 {
                break;
            }
            c -= d1 / d2;
        }
        let (_, d1, d2) = map.deriv(c)?;
        if (c - end).abs() <= tol && d1.abs() <= 1e-10 * d2.abs().max(1.0) && d2 != 0.0 {
            return Ok(Some(c));
        }
    }
    Ok(None)
}

/// Locate the unique critical point on `domain`.
pub fn critical_point(map: &Map1D, domain: Interval) -> Result<(f64, f64, f64)> {
    let xs = linspace(domain.lo, domain.hi, CRITICAL_GRID);
    let signs: Vec<Option<f64>> = xs.iter().map(|&x| derivative_sign(map, x)).collect();
    let mut changes = Vec::new();
    let mut last: Option<(usize, f64)> = None;
    for (i, s) in signs.iter().enumerate() {
        if let Some(s) = *s {
            if let Some((j, t)) = last {
                if s != t {
                    changes.push((j, i));
                }
            }
            last = Some((i, s));
        }
    }
    if changes.is_empty() {
        if let Some(c) = boundary_critical_point(map, domain)? {
            let (v, _, d2) = map.deriv(c)?;
            return Ok((c, v, d2.signum()));
        }
    }
    if changes.len() != 1 {
        return Err(Error::NotUnimodal { sign_changes: changes.len() });
    }
    let (i, j) = changes[0];
    let c0 = bisect(|x| Ok(map.deriv(x)?.1), xs[i], xs[j])?;
    let mut c = c0;
    for _ in 0..8 {
        let (_, d1, d2) = map.deriv(c)?;
        if d1 == 0.0 || d2 == 0.0 {
            break;
        }
        let next = c - d1 / d2;
        if !(next >= xs[i] && next <= xs[j]) {
            break;
        }
        if map.deriv(next)?.1.abs() > d1.abs() {
            break;
        }
        c = next;
    }
    let (v, _, d2) = map.deriv(c)?;
    if d2 == 0.0 {
        return Err(Error::NormalizationFailed { second_derivative: d2 });
    }
    Ok((c, v, d2.signum()))
}

/// A periodic interval found by [`renormalizable`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Renormalization {
    pub r: usize,
    /// Periodic interval around the critical point.
    pub j: Interval,
    /// Valuable interval `f(J)`, containing the critical value.
    pub i1: Interval,
    /// Boundary point of `J` fixed by `f^R`.
    pub q: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Renormalizability {
    Renormalizable(Renormalization),
    /// Conditions hold only up to the safety margin at this return time.
    Undecided { r: usize },
    NotRenormalizable,
}

fn fixed_points(f: &UnimodalMap, r: usize) -> Vec<f64> {
    let g = |x: f64| -> Option<f64> { f.iterate(x, r).ok().map(|y| y - x) };
    let xs = linspace(f.domain.lo, f.domain.hi, PERIODIC_GRID);
    let vals: Vec<Option<f64>> = xs.iter().map(|&x| g(x)).collect();
    let mut out = Vec::new();
    for k in 0..xs.len() - 1 {
        let (Some(a), Some(b)) = (vals[k], vals[k + 1]) else { continue };
        if a == 0.0 {
            out.push(xs[k]);
            continue;
        }
        if a.signum() == b.signum() {
            continue;
        }
        let it = Map1D::Iterate { inner: Box::new(f.map.clone()), n: r };
        if let Ok(q) = solve_monotone(
            |x| {
                let (v, d, _) = it.deriv(x)?;
                Ok((v - x, d - 1.0))
            },
            0.0,
            xs[k],
            xs[k + 1],
            0.5 * (xs[k] + xs[k + 1]),
        ) {
            if q >= xs[k] && q <= xs[k + 1] {
                out.push(q);
            }
        }
    }
    out
}

/// Point on the other branch with the same image as `q`.
fn partner(f: &UnimodalMap, q: f64) -> Option<f64> {
    let target = f.eval(q).ok()?;
    let (lo, hi) = if q < f.c { (f.c, f.domain.hi) } else { (f.domain.lo, f.c) };
    let guess = 2.0 * f.c - q;
    let x = solve_monotone(
        |x| {
            let (v, d, _) = f.deriv(x)?;
            Ok((v, d))
        },
        target,
        lo,
        hi,
        guess.clamp(lo, hi),
    )
    .ok()?;
    (x >= lo - 1e-12 && x <= hi + 1e-12 && (f.eval(x).ok()? - target).abs() <= 1e-9 * (1.0 + target.abs()))
        .then_some(x)
}

/// Largest violation of the periodic-interval conditions for `J`, relative
/// to the domain width.
fn periodic_violation(f: &UnimodalMap, j: Interval, r: usize) -> Result<f64> {
    let mut img = j;
    let mut worst: f64 = 0.0;
    for i in 1..=r {
        img = f.image(img)?;
        if i < r {
            worst = worst.max(img.overlap(&j));
        }
    }
    let excess = (j.lo - img.lo).max(0.0) + (img.hi - j.hi).max(0.0);
    let deficit = if img.contains(f.c) { 0.0 } else { (img.lo - f.c).max(f.c - img.hi) };
    worst = worst.max(excess).max(deficit);
    Ok(worst / f.domain.width())
}

pub fn classify(f: &UnimodalMap, b_max: usize) -> Renormalizability {
    for r in 2..=b_max {
        let mut best: Option<Renormalization> = None;
        let mut undecided = false;
        for q in fixed_points(f, r) {
            let Some(qp) = partner(f, q) else { continue };
            let j = Interval::new(q, qp);
            if j.width() <= ACCEPT_MARGIN * f.domain.width() || !j.contains(f.c) {
                continue;
            }
            let Ok(worst) = periodic_violation(f, j, r) else { continue };
            if worst <= ACCEPT_MARGIN {
                let Ok(i1) = f.image(j) else { continue };
                if best.is_none_or(|b| j.width() < b.j.width()) {
                    best = Some(Renormalization { r, j, i1, q });
                }
            } else if worst <= UNDECIDED_MARGIN {
                undecided = true;
            }
        }
        if let Some(b) = best {
            return Renormalizability::Renormalizable(b);
        }
        if undecided {
            return Renormalizability::Undecided { r };
        }
    }
    Renormalizability::NotRenormalizable
}

/// Smallest return time `2 ≤ R ≤ b_max` with a valuable periodic interval.
pub fn renormalizable(f: &UnimodalMap, b_max: usize) -> Option<Renormalization> {
    match classify(f, b_max) {
        Renormalizability::Renormalizable(r) => Some(r),
        _ => None,
    }
}

/// Normalized first return to the valuable interval.
pub fn renorm_1d(f: &UnimodalMap, ren: &Renormalization) -> Result<(UnimodalMap, NormalizationAffine)> {
    let r = ren.r;
    let before = Map1D::Iterate { inner: Box::new(f.map.clone()), n: r - 1 };
    let i1 = ren.i1;
    let c1 = solve_monotone(
        |x| {
            let (v, d, _) = before.deriv(x)?;
            Ok((v, d))
        },
        f.c,
        i1.lo,
        i1.hi,
        i1.mid(),
    )?;
    let ret = Map1D::Iterate { inner: Box::new(f.map.clone()), n: r };
    let (_, _, d2) = ret.deriv(c1)?;
    if d2.abs() < 1e-8 || !d2.is_finite() {
        return Err(Error::NormalizationFailed { second_derivative: d2 });
    }
    let s = NormalizationAffine::centered(d2 / 2.0, c1);
    let map = Map1D::Conjugate { inner: Box::new(ret), scale: s.scale, shift: s.shift };
    let out = UnimodalMap::new(map, s.image(i1))?;
    Ok((out, s))
}

/// Spatial order of the first `R` points of the critical value orbit.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RenType {
    #[serde(rename = "R")]
    pub r: usize,
    pub ranks: Vec<usize>,
}

impl RenType {
    pub fn new(r: usize, ranks: Vec<usize>) -> Result<Self> {
        let t = RenType { r, ranks };
        t.validate()?;
        Ok(t)
    }

    pub fn doubling() -> Self {
        RenType { r: 2, ranks: vec![0, 1] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r < 2 || self.ranks.len() != self.r {
            return Err(Error::Invalid(format!("type needs R ≥ 2 and R ranks, got R = {}", self.r)));
        }
        let mut seen = vec![false; self.r];
        for &k in &self.ranks {
            if k >= self.r || seen[k] {
                return Err(Error::Invalid(format!("ranks {:?} are not a permutation", self.ranks)));
            }
            seen[k] = true;
        }
        Ok(())
    }

    /// Ranks of `points[0..R]`, failing on coincidences among all given points.
    pub fn from_points(points: &[f64], r: usize) -> Result<Self> {
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                if (points[i] - points[j]).abs() <= 1e-12 {
                    return Err(Error::TieBreak { i, j });
                }
            }
        }
        let mut idx: Vec<usize> = (0..r).collect();
        idx.sort_by(|&a, &b| points[a].total_cmp(&points[b]));
        let mut ranks = vec![0; r];
        for (rank, &i) in idx.iter().enumerate() {
            ranks[i] = rank;
        }
        Ok(RenType { r, ranks })
    }
}

/// A prescribed sequence of renormalization types.
pub type CombinatoricsWord = Vec<RenType>;

/// Type of the return of time `r`, from the order of `f^i(v)`, `0 ≤ i < R`.
pub fn ren_type(f: &UnimodalMap, r: usize) -> Result<RenType> {
    if r < 2 {
        return Err(Error::Invalid(format!("return time {r} < 2")));
    }
    let orbit = f.oriented_orbit(r)?;
    RenType::from_points(&orbit[1..], r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KneadingFlags {
    pub eta_gap: bool,
    pub double_eta_gap: bool,
    pub theta_bounded: Option<usize>,
    pub eta_chi_kneading: bool,
    pub eta: f64,
    pub chi: usize,
}

pub const THETA_CAP: usize = 256;

pub fn kneading_flags(f: &UnimodalMap, eta: f64, chi: usize) -> Result<KneadingFlags> {
    let n = (chi + 1).max(THETA_CAP + 1);
    let o = f.oriented_orbit(n)?;
    let c = o[0];
    let eta_gap = o[1] < c - eta;
    let double_eta_gap = o[1] < o[2] && o[2] < c - eta;
    let theta_bounded = if o[1] < c { (1..=THETA_CAP).find(|&t| o[1 + t] < c) } else { None };
    let eta_chi_kneading = chi >= 1 && o[1 + chi] + eta < c && (1..chi).all(|i| c < o[1 + i] - eta);
    Ok(KneadingFlags { eta_gap, double_eta_gap, theta_bounded, eta_chi_kneading, eta, chi })
}

/// `f(x) - f(c)` as the integral of `f'`, free of cancellation near `c`.
fn rise_from_critical(f: &UnimodalMap, x: f64) -> Result<f64> {
    const NODES: [(f64, f64); 4] = [
        (-0.8611363115940526, 0.3478548451374538),
        (-0.3399810435848563, 0.6521451548625461),
        (0.3399810435848563, 0.6521451548625461),
        (0.8611363115940526, 0.3478548451374538),
    ];
    let (m, h) = (0.5 * (x + f.c), 0.5 * (x - f.c));
    let mut acc = 0.0;
    for (t, w) in NODES {
        acc += w * f.deriv(m + h * t)?.1;
    }
    Ok(acc * h)
}

/// Distortion bound of the quadratic factorization `f = v + κ ψ²`.
pub fn nonlinearity_k(f: &UnimodalMap) -> Result<f64> {
    let (_, _, d2) = f.deriv(f.c)?;
    let kappa = d2 / 2.0;
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    let mut q_sign = 0.0;
    for x in linspace(f.domain.lo, f.domain.hi, 1025) {
        let dx = x - f.c;
        let dpsi = if dx.abs() < 1e-4 {
            1.0
        } else {
            let (_, d1, _) = f.deriv(x)?;
            let rise = rise_from_critical(f, x)?;
            let q = rise / (dx * dx);
            if q != 0.0 {
                if q_sign != 0.0 && q.signum() != q_sign {
                    return Err(Error::NonQuadratic);
                }
                q_sign = q.signum();
            }
            let psi = dx.signum() * (rise / kappa).max(0.0).sqrt();
            if psi == 0.0 {
                return Err(Error::NonQuadratic);
            }
            d1 / (2.0 * kappa * psi)
        };
        lo = lo.min(dpsi);
        hi = hi.max(dpsi);
    }
    if q_sign != 0.0 && q_sign != kappa.signum() {
        return Err(Error::NonQuadratic);
    }
    if lo <= 0.0 {
        return Err(Error::NonQuadratic);
    }
    Ok(hi / lo)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FamilyOptions {
    pub b_max: usize,
    pub eta: f64,
    pub tol: f64,
    pub scan: usize,
    pub fullness_samples: usize,
}

impl Default for FamilyOptions {
    fn default() -> Self {
        FamilyOptions { b_max: DEFAULT_BMAX, eta: 1e-3, tol: 1e-10, scan: 257, fullness_samples: 65 }
    }
}

/// Whether `f` has smallest return time `target.r` with exactly this type.
pub fn realizes(f: &UnimodalMap, target: &RenType) -> bool {
    match classify(f, target.r) {
        Renormalizability::Renormalizable(ren) if ren.r == target.r => {
            matches!(ren_type(f, ren.r), Ok(t) if t == *target)
        }
        _ => false,
    }
}

/// Edges of the leftmost run of `pred` on a grid, refined by bisection.
pub fn bracket_run<P>(pred: P, params: Interval, scan: usize, tol: f64) -> Option<(Interval, usize)>
where
    P: Fn(f64) -> bool + Sync,
{
    let grid = linspace(params.lo, params.hi, scan);
    let flags: Vec<bool> = grid.par_iter().map(|&a| pred(a)).collect();
    let i0 = flags.iter().position(|&b| b)?;
    let i1 = i0 + flags[i0..].iter().take_while(|&&b| b).count() - 1;
    let mut steps = 0;
    let mut refine = |mut yes: f64, mut no: f64| {
        while (yes - no).abs() > tol {
            let m = 0.5 * (yes + no);
            if m == yes || m == no {
                break;
            }
            steps += 1;
            if pred(m) {
                yes = m;
            } else {
                no = m;
            }
        }
        yes
    };
    let lo = if i0 > 0 { refine(grid[i0], grid[i0 - 1]) } else { grid[i0] };
    let hi = if i1 + 1 < grid.len() { refine(grid[i1], grid[i1 + 1]) } else { grid[i1] };
    Some((Interval::new(lo, hi), steps))
}

/// Parameter subinterval on which the family realizes `target`.
pub fn full_family_bisect<F>(family: F, params: Interval, target: &RenType, opts: &FamilyOptions) -> Result<Interval>
where
    F: Fn(f64) -> Result<UnimodalMap> + Sync,
{
    target.validate()?;
    if target.r > opts.b_max {
        return Err(Error::TargetUnrealizable(format!("return time {} exceeds b_max {}", target.r, opts.b_max)));
    }
    let samples = linspace(params.lo, params.hi, opts.fullness_samples);
    let flags: Vec<Option<KneadingFlags>> = samples
        .par_iter()
        .map(|&a| family(a).ok().and_then(|f| kneading_flags(&f, opts.eta, target.r).ok()))
        .collect();
    let has_gap = flags.iter().flatten().any(|k| k.double_eta_gap);
    let has_kneading = flags.iter().flatten().any(|k| k.eta_chi_kneading);
    if !has_gap || !has_kneading {
        return Err(Error::FullnessViolation(format!(
            "on [{}, {}]: double gap seen {has_gap}, kneading seen {has_kneading}",
            params.lo, params.hi
        )));
    }
    let pred = |a: f64| family(a).map(|f| realizes(&f, target)).unwrap_or(false);
    bracket_run(pred, params, opts.scan, opts.tol).map(|(i, _)| i).ok_or_else(|| {
        Error::TargetUnrealizable(format!("no parameter in [{}, {}] realizes {:?}", params.lo, params.hi, target.ranks))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const A3: f64 = -1.7548776662;

    #[test]
    fn quadratic_critical_point() {
        let f = UnimodalMap::new(Map1D::Quadratic { a: -1.3 }, Interval::new(-2.0, 2.0)).unwrap();
        assert!(f.c.abs() < 1e-15);
        assert_eq!(f.v, -1.3);
        assert_eq!(f.sign, 1.0);
    }

    #[test]
    fn second_iterate_on_periodic_interval() {
        let f = UnimodalMap::quadratic(-1.3);
        let ren = renormalizable(&f, 9).unwrap();
        let g = UnimodalMap::new(Map1D::Iterate { inner: Box::new(f.map.clone()), n: 2 }, ren.i1).unwrap();
        let (_, d, _) = g.deriv(g.c).unwrap();
        assert!(d.abs() < 1e-10);
        // interior critical point solves f(c) = 0 on the left branch
        assert!((g.c + 1.3f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn monotone_is_not_unimodal() {
        let r = UnimodalMap::new(Map1D::Polynomial { coeffs: vec![0.0, 1.0, 0.0, 1.0] }, Interval::new(-1.0, 1.0));
        assert!(matches!(r, Err(Error::NotUnimodal { sign_changes: 0 })));
    }

    #[test]
    fn doubling_window() {
        let f = UnimodalMap::quadratic(-1.3);
        let ren = renormalizable(&f, 9).unwrap();
        assert_eq!(ren.r, 2);
        let p = (1.0 - (1.0f64 + 5.2).sqrt()) / 2.0;
        assert!((ren.i1.lo + 1.3).abs() < 1e-12);
        assert!((ren.i1.hi - p).abs() < 1e-12);
    }

    #[test]
    fn period_three_window() {
        let f = UnimodalMap::quadratic(A3);
        assert_eq!(renormalizable(&f, 9).unwrap().r, 3);
    }

    #[test]
    fn sink_is_not_renormalizable() {
        assert!(renormalizable(&UnimodalMap::quadratic(-0.5), 9).is_none());
    }

    #[test]
    fn renormalization_is_normalized() {
        for a in [-1.3, -1.4, A3] {
            let f = UnimodalMap::quadratic(a);
            let ren = renormalizable(&f, 9).unwrap();
            let (g, _) = renorm_1d(&f, &ren).unwrap();
            let (_, d1, d2) = g.deriv(0.0).unwrap();
            assert!(g.c.abs() < 1e-8 && d1.abs() < 1e-8 && (d2 - 2.0).abs() < 1e-8);
            assert!(g.maps_into_self(1e-9));
        }
    }

    #[test]
    fn superstable_three_renormalizes_to_superstable_fixed_point() {
        let f = UnimodalMap::quadratic(A3);
        let (g, _) = renorm_1d(&f, &renormalizable(&f, 9).unwrap()).unwrap();
        assert!(g.eval(0.0).unwrap().abs() < 1e-6);
    }

    #[test]
    fn renormalization_is_affine_invariant() {
        let f = UnimodalMap::quadratic(-1.35);
        let g = f.conjugate(NormalizationAffine { scale: -0.7, shift: 0.4 }).unwrap();
        let (rf, _) = renorm_1d(&f, &renormalizable(&f, 9).unwrap()).unwrap();
        let (rg, _) = renorm_1d(&g, &renormalizable(&g, 9).unwrap()).unwrap();
        assert!(rf.sup_distance(&rg, 101).unwrap() < 1e-9);
        assert_eq!(ren_type(&f, 2).unwrap(), ren_type(&g, 2).unwrap());
    }

    #[test]
    fn types() {
        assert_eq!(ren_type(&UnimodalMap::quadratic(-1.3), 2).unwrap().ranks, vec![0, 1]);
        assert_eq!(ren_type(&UnimodalMap::quadratic(A3), 3).unwrap().ranks, vec![0, 2, 1]);
        assert!(matches!(RenType::from_points(&[-1.0, 0.0, -1.0], 3), Err(Error::TieBreak { i: 0, j: 2 })));
    }

    #[test]
    fn kneading_examples() {
        let k = kneading_flags(&UnimodalMap::quadratic(-2.0), 0.1, 2).unwrap();
        assert!(k.eta_gap && k.theta_bounded.is_none());
        let k = kneading_flags(&UnimodalMap::quadratic(-1.0), 0.5, 2).unwrap();
        assert!(k.eta_gap && !k.double_eta_gap);
        let k = kneading_flags(&UnimodalMap::quadratic(-1.3), 0.05, 2).unwrap();
        assert_eq!(k.theta_bounded, Some(2));
    }

    #[test]
    fn quadratic_has_unit_nonlinearity() {
        let k = nonlinearity_k(&UnimodalMap::quadratic(-1.3)).unwrap();
        assert!((k - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cubic_perturbation_has_finite_nonlinearity() {
        let f = UnimodalMap::new(Map1D::Polynomial { coeffs: vec![-1.0, 0.0, 1.0, 0.3] }, Interval::new(-1.5, 1.5))
            .unwrap();
        let k = nonlinearity_k(&f).unwrap();
        assert!(k > 1.0 && k.is_finite());
    }

    #[test]
    fn family_bisection() {
        let fam = |a: f64| Ok(UnimodalMap::quadratic(a));
        let opts = FamilyOptions::default();
        let i = full_family_bisect(fam, Interval::new(-2.0, -0.75), &RenType::doubling(), &opts).unwrap();
        assert!(i.contains(-1.3));
        assert!((i.hi + 1.0).abs() < 1e-8);
        let t3 = RenType::new(3, vec![0, 2, 1]).unwrap();
        let i = full_family_bisect(fam, Interval::new(-2.0, -0.75), &t3, &opts).unwrap();
        assert!(i.contains(A3));
        let t11 = RenType::new(11, (0..11).collect()).unwrap();
        assert!(matches!(
            full_family_bisect(fam, Interval::new(-2.0, -0.75), &t11, &opts),
            Err(Error::TargetUnrealizable(_))
        ));
    }

    #[test]
    fn ren_type_json() {
        let t: RenType = serde_json::from_str(r#"{"R": 3, "ranks": [0, 2, 1]}"#).unwrap();
        assert_eq!(t.r, 3);
        assert_eq!(serde_json::to_string(&RenType::doubling()).unwrap(), r#"{"R":2,"ranks":[0,1]}"#);
    }
}
