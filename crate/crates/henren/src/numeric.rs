//! Small root-finding and fitting helpers shared by the modules.

use crate::error::{Error, Result};

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Solve `g(x) = target` for a function that is monotone on `[lo, hi]`.
///
/// `g` returns the value and the derivative. Newton iteration from `guess`
/// is tried first; bisection on the bracket is the fallback.
pub fn solve_monotone<G>(mut g: G, target: f64, lo: f64, hi: f64, guess: f64) -> Result<f64>
where
    G: FnMut(f64) -> Result<(f64, f64)>,
{
    let scale = 1.0 + lo.abs().max(hi.abs());
    let width = (hi - lo).abs();
    let mut x = guess;
    let mut converged = false;
    for _ in 0..50 {
        let (v, d) = match g(x) {
            Ok(vd) => vd,
            Err(_) => break,
        };
        let r = v - target;
        if r == 0.0 {
            converged = true;
            break;
        }
        if d == 0.0 || !d.is_finite() {
            break;
        }
        let step = r / d;
        x -= step;
        if !x.is_finite() || x < lo - width || x > hi + width {
            break;
        }
        if step.abs() <= 4.0 * f64::EPSILON * scale {
            converged = true;
            break;
        }
    }
    if converged {
        return Ok(x);
    }
    bisect(|t| g(t).map(|(v, _)| v - target), lo, hi)
}

/// Bisection for a sign change of `h` on `[lo, hi]`.
pub fn bisect<H>(mut h: H, lo: f64, hi: f64) -> Result<f64>
where
    H: FnMut(f64) -> Result<f64>,
{
    let (mut a, mut b) = (lo.min(hi), lo.max(hi));
    let mut ha = h(a)?;
    let hb = h(b)?;
    if ha == 0.0 {
        return Ok(a);
    }
    if hb == 0.0 {
        return Ok(b);
    }
    if ha.signum() == hb.signum() {
        return Err(Error::RootNotBracketed(format!("no sign change on [{a}, {b}]")));
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let hm = h(m)?;
        if hm == 0.0 {
            return Ok(m);
        }
        if hm.signum() == ha.signum() {
            a = m;
            ha = hm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// Least-squares line `y = slope * x + intercept`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monotone_solve_cubic() {
        let x = solve_monotone(|x| Ok((x * x * x + x, 3.0 * x * x + 1.0)), 2.0, -5.0, 5.0, 0.0).unwrap();
        assert!((x - 1.0).abs() < 1e-14);
    }

    #[test]
    fn bisect_requires_bracket() {
        assert!(bisect(|x| Ok(x * x + 1.0), -1.0, 1.0).is_err());
        let r = bisect(|x| Ok(x - 0.25), 0.0, 1.0).unwrap();
        assert!((r - 0.25).abs() < 1e-15);
    }

    #[test]
    fn fit_exact_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 0.5 * x - 2.0).collect();
        let (m, b) = linear_fit(&xs, &ys);
        assert!((m - 0.5).abs() < 1e-14 && (b + 2.0).abs() < 1e-14);
    }
}
