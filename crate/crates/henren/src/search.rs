//! Realization of prescribed combinatorics in one-parameter Hénon families by
//! nested bisection, and the period-doubling cascade of the quadratic family.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maps::{profile_1d, Interval, MapSpec};
use crate::numeric::{bisect, linspace};
use crate::regularity::RegularityReport;
use crate::renorm2d::{renorm_sequence, RenormSequence, SequenceOptions, DEPTH_GUARD};
use crate::unimodal::{bracket_run, kneading_flags, realizes, CombinatoricsWord, DEFAULT_BMAX};

/// The slice `a ↦ F_{a,b}` of the Hénon family, or the quadratic family for `b = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilySlice {
    pub params: Interval,
    pub b: f64,
}

impl FamilySlice {
    pub fn henon(b: f64) -> Self {
        FamilySlice { params: Interval::new(-2.0, -0.5), b }
    }

    pub fn map(&self, a: f64) -> MapSpec {
        if self.b == 0.0 {
            MapSpec::quadratic_embedding(a)
        } else {
            MapSpec::henon(a, self.b)
        }
    }

    /// Largest sup distance between maps at neighboring parameters of an
    /// `n`-point grid, divided by the grid step.
    pub fn continuity_modulus(&self, n: usize) -> Result<f64> {
        let ps = linspace(self.params.lo, self.params.hi, n);
        let h = ps[1] - ps[0];
        let mut worst: f64 = 0.0;
        for w in ps.windows(2) {
            let (f, g) = (self.map(w[0]), self.map(w[1]));
            let dom = f.domain().padded(-0.1);
            for p in dom.grid(9, 9) {
                let (q0, q1) = (f.eval(p)?, g.eval(p)?);
                worst = worst.max(q0.dist(&q1) / h);
            }
        }
        Ok(worst)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SearchOptions {
    pub b_max: usize,
    /// Gap parameter of the fullness flags.
    pub eta: f64,
    pub scan: usize,
    pub tol: f64,
    pub fullness_samples: usize,
    pub depth_guard: usize,
    /// Certify the levels of the midpoint of the final interval.
    pub certify: bool,
    pub sequence: SequenceOptions,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            b_max: DEFAULT_BMAX,
            eta: 1e-3,
            scan: 257,
            tol: 1e-10,
            fullness_samples: 65,
            depth_guard: DEPTH_GUARD,
            certify: true,
            sequence: SequenceOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BisectionTrace {
    pub depth: usize,
    pub interval: Interval,
    /// Bisection steps spent on the two edges.
    pub steps: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RealizationResult {
    pub slice: FamilySlice,
    pub target: CombinatoricsWord,
    /// Parameter interval per depth, strictly nested.
    pub intervals: Vec<Interval>,
    pub achieved: CombinatoricsWord,
    pub traces: Vec<BisectionTrace>,
    /// Parameter at which the achieved levels were certified.
    pub parameter: Option<f64>,
    pub reports: Vec<Option<RegularityReport>>,
    pub failure: Option<String>,
}

impl RealizationResult {
    pub fn complete(&self) -> bool {
        self.failure.is_none() && self.achieved == self.target
    }
}

fn sequence_opts(opts: &SearchOptions, certify: bool) -> SequenceOptions {
    SequenceOptions { b_max: opts.b_max, depth_guard: opts.depth_guard, certify, ..opts.sequence.clone() }
}

/// Whether the level-`n` type of the map at `a` is `word[n]`, with the types
/// of the shallower levels matching as well.
fn realizes_prefix(slice: &FamilySlice, a: f64, word: &CombinatoricsWord, n: usize, opts: &SearchOptions) -> bool {
    let prefix: CombinatoricsWord = word[..=n].to_vec();
    let seq = renorm_sequence(&slice.map(a), n + 1, Some(&prefix), &sequence_opts(opts, false));
    if seq.depth() > n {
        return true;
    }
    // the 2D level is unavailable: fall back to the profile type
    use crate::renorm2d::StopReason;
    if seq.depth() == n && matches!(seq.stop, StopReason::Failed { .. }) {
        if let Ok(f) = seq.map_at(n).and_then(profile_1d) {
            return realizes(&f, &word[n]);
        }
    }
    false
}

/// Check the endpoint fullness flags of the slice on its depth-0 profiles.
fn check_fullness(slice: &FamilySlice, word: &CombinatoricsWord, opts: &SearchOptions) -> Result<()> {
    let chi = word[0].r;
    let flags: Vec<_> = linspace(slice.params.lo, slice.params.hi, opts.fullness_samples)
        .into_iter()
        .filter_map(|a| profile_1d(&slice.map(a)).ok().and_then(|f| kneading_flags(&f, opts.eta, chi).ok()))
        .collect();
    let gap = flags.iter().any(|k| k.double_eta_gap);
    let kneading = flags.iter().any(|k| k.eta_chi_kneading);
    if !gap || !kneading {
        return Err(Error::FullnessViolation(format!(
            "on [{}, {}]: double gap seen {gap}, kneading seen {kneading}",
            slice.params.lo, slice.params.hi
        )));
    }
    Ok(())
}

/// Nested parameter intervals on which the slice realizes `word` to depth `depth`.
pub fn realize_combinatorics(
    slice: &FamilySlice,
    word: &CombinatoricsWord,
    depth: usize,
    opts: &SearchOptions,
) -> Result<RealizationResult> {
    if depth == 0 || word.len() < depth {
        return Err(Error::Invalid(format!("word of length {} for depth {depth}", word.len())));
    }
    let word: CombinatoricsWord = word[..depth].to_vec();
    let mut total = 1usize;
    for t in &word {
        t.validate()?;
        if t.r > opts.b_max {
            return Err(Error::TargetUnrealizable(format!("return time {} exceeds b_max {}", t.r, opts.b_max)));
        }
        total = total.saturating_mul(t.r);
        if total > opts.depth_guard {
            return Err(Error::DepthLimited { return_time: total, limit: opts.depth_guard });
        }
    }
    check_fullness(slice, &word, opts)?;

    let mut res = RealizationResult {
        slice: *slice,
        target: word.clone(),
        intervals: Vec::new(),
        achieved: Vec::new(),
        traces: Vec::new(),
        parameter: None,
        reports: Vec::new(),
        failure: None,
    };
    let mut current = slice.params;
    for n in 0..depth {
        let pred = |a: f64| realizes_prefix(slice, a, &word, n, opts);
        let Some((found, steps)) = bracket_run(pred, current, opts.scan, opts.tol) else {
            if n == 0 {
                return Err(Error::TargetUnrealizable(format!("no parameter of [{}, {}] realizes the first type", current.lo, current.hi)));
            }
            res.failure = Some(format!("target unrealizable at depth {n}"));
            break;
        };
        res.traces.push(BisectionTrace { depth: n, interval: found, steps });
        if n > 0 && (found.lo < current.lo || found.hi > current.hi || found == current) {
            res.failure = Some(format!("interval at depth {n} is not strictly nested"));
            break;
        }
        res.intervals.push(found);
        current = found;
    }
    if let Some(last) = res.intervals.last() {
        let a = last.mid();
        let seq = renorm_sequence(&slice.map(a), res.intervals.len(), None, &sequence_opts(opts, opts.certify));
        res.achieved = seq.word.clone();
        res.reports = seq.levels.iter().map(|l| l.regularity.clone()).collect();
        res.parameter = Some(a);
        if res.failure.is_none() && res.achieved != res.target {
            res.failure = Some(format!("re-run at {a} achieved {} of {} types", res.achieved.len(), depth));
        }
    }
    Ok(res)
}

/// The sequence at the parameter returned by a realization.
pub fn realized_sequence(res: &RealizationResult, opts: &SearchOptions) -> Option<RenormSequence> {
    let a = res.parameter?;
    Some(renorm_sequence(&res.slice.map(a), res.intervals.len(), None, &sequence_opts(opts, opts.certify)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cascade {
    /// Superstable parameter of period `2^k` of `x² + a`, `k = 0..=k_max`.
    pub params: Vec<f64>,
    /// `δ_k = (a_{k-1} − a_{k-2}) / (a_k − a_{k-1})` for `k ≥ 2`.
    pub ratios: Vec<f64>,
}

/// `f_a^{n}(0)` and its parameter derivative for `f_a(x) = x² + a`.
fn critical_orbit(a: f64, n: usize) -> (f64, f64) {
    let (mut x, mut dx) = (0.0f64, 0.0f64);
    for _ in 0..n {
        dx = 2.0 * x * dx + 1.0;
        x = x * x + a;
    }
    (x, dx)
}

fn superstable(period: usize, guess: f64, lo: f64, hi: f64) -> Result<f64> {
    let mut a = guess;
    for _ in 0..50 {
        let (g, dg) = critical_orbit(a, period);
        if dg == 0.0 || !dg.is_finite() {
            break;
        }
        let step = g / dg;
        a -= step;
        if !(lo..=hi).contains(&a) {
            break;
        }
        if step.abs() <= 1e-15 * a.abs().max(1.0) {
            return Ok(a);
        }
    }
    let g = |a: f64| Ok(critical_orbit(a, period).0);
    let xs = linspace(lo, hi, 65);
    for w in xs.windows(2) {
        if g(w[0])?.signum() != g(w[1])?.signum() {
            return bisect(g, w[0], w[1]);
        }
    }
    Err(Error::RootNotBracketed(format!("period {period} on [{lo}, {hi}]")))
}

/// Superstable parameters of the period-doubling cascade of `x² + a`.
pub fn cascade_points(k_max: usize) -> Result<Cascade> {
    let mut params = vec![0.0];
    if k_max >= 1 {
        params.push(-1.0);
    }
    for k in 2..=k_max {
        let (a1, a2) = (params[k - 1], params[k - 2]);
        let gap = a2 - a1;
        let ratio = if k >= 3 { (params[k - 3] - a2) / gap } else { 4.0 };
        let guess = a1 - gap / ratio;
        // δ stays within (2, 8) along the cascade
        let a = superstable(1 << k, guess, a1 - gap / 2.0, a1 - gap / 8.0)?;
        params.push(a);
    }
    let ratios = (2..params.len()).map(|k| (params[k - 1] - params[k - 2]) / (params[k] - params[k - 1])).collect();
    Ok(Cascade { params, ratios })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::unimodal::RenType;

    #[test]
    fn cascade_start() {
        let c = cascade_points(3).unwrap();
        assert_eq!(c.params[0], 0.0);
        assert_eq!(c.params[1], -1.0);
        assert!((c.params[2] + 1.310_702_641_336_832_9).abs() < 1e-12);
        assert!(c.params.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn long_return_is_unrealizable() {
        let w = vec![RenType { r: 11, ranks: (0..11).collect() }];
        let r = realize_combinatorics(&FamilySlice::henon(0.0), &w, 1, &SearchOptions::default());
        assert!(matches!(r, Err(Error::TargetUnrealizable(_))));
    }

    #[test]
    fn depth_guard() {
        let w = vec![RenType::doubling(); 9];
        let r = realize_combinatorics(&FamilySlice::henon(0.0), &w, 9, &SearchOptions::default());
        assert!(matches!(r, Err(Error::DepthLimited { return_time: 512, .. })));
    }

    #[test]
    fn continuity_of_slice() {
        let m = FamilySlice::henon(0.1).continuity_modulus(9).unwrap();
        assert!(m > 0.0 && m < 1.0 + 1e-9);
    }
}
