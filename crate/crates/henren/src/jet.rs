//! Second-order forward-mode differentiation in two variables.
//!
//! Every planar map in the crate is written once, generically over [`Scalar`],
//! and evaluated either on plain `f64` or on [`Jet`] to obtain exact first and
//! second partial derivatives.

use std::ops::{Add, Mul, Neg, Sub};

/// Value together with all partial derivatives up to order two in `(x, y)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub dx: f64,
    pub dy: f64,
    pub dxx: f64,
    pub dxy: f64,
    pub dyy: f64,
}

impl Jet {
    pub const fn constant(v: f64) -> Self {
        Jet { v, dx: 0.0, dy: 0.0, dxx: 0.0, dxy: 0.0, dyy: 0.0 }
    }

    pub const fn var_x(v: f64) -> Self {
        Jet { v, dx: 1.0, dy: 0.0, dxx: 0.0, dxy: 0.0, dyy: 0.0 }
    }

    pub const fn var_y(v: f64) -> Self {
        Jet { v, dx: 0.0, dy: 1.0, dxx: 0.0, dxy: 0.0, dyy: 0.0 }
    }

    /// Compose a scalar function `g` with value `g0`, `g'` = `g1`, `g''` = `g2`.
    pub fn apply(self, g0: f64, g1: f64, g2: f64) -> Self {
        Jet {
            v: g0,
            dx: g1 * self.dx,
            dy: g1 * self.dy,
            dxx: g2 * self.dx * self.dx + g1 * self.dxx,
            dxy: g2 * self.dx * self.dy + g1 * self.dxy,
            dyy: g2 * self.dy * self.dy + g1 * self.dyy,
        }
    }

    /// Compose a function of two variables, given by its second-order Taylor
    /// data `outer` at `(a.v, b.v)`, with the jets `a` and `b`.
    pub fn compose(outer: &Jet, a: Jet, b: Jet) -> Self {
        let da = a - a.v;
        let db = b - b.v;
        let quad = da * da * outer.dxx + da * db * (2.0 * outer.dxy) + db * db * outer.dyy;
        da * outer.dx + db * outer.dy + quad * 0.5 + outer.v
    }

    pub fn recip(self) -> Self {
        let r = 1.0 / self.v;
        self.apply(r, -r * r, 2.0 * r * r * r)
    }

    pub fn gradient(&self) -> [f64; 2] {
        [self.dx, self.dy]
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet {
            v: self.v + o.v,
            dx: self.dx + o.dx,
            dy: self.dy + o.dy,
            dxx: self.dxx + o.dxx,
            dxy: self.dxy + o.dxy,
            dyy: self.dyy + o.dyy,
        }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self * -1.0
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        Jet {
            v: self.v * o.v,
            dx: self.dx * o.v + self.v * o.dx,
            dy: self.dy * o.v + self.v * o.dy,
            dxx: self.dxx * o.v + 2.0 * self.dx * o.dx + self.v * o.dxx,
            dxy: self.dxy * o.v + self.dx * o.dy + self.dy * o.dx + self.v * o.dxy,
            dyy: self.dyy * o.v + 2.0 * self.dy * o.dy + self.v * o.dyy,
        }
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, c: f64) -> Jet {
        self.v += c;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, c: f64) -> Jet {
        self.v -= c;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, c: f64) -> Jet {
        Jet {
            v: self.v * c,
            dx: self.dx * c,
            dy: self.dy * c,
            dxx: self.dxx * c,
            dxy: self.dxy * c,
            dyy: self.dyy * c,
        }
    }
}

/// Number type a map can be evaluated on.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
{
    /// Whether derivative information is carried (and must be propagated
    /// through implicit solves).
    const DIFF: bool;

    fn cst(v: f64) -> Self;
    fn val(self) -> f64;
    fn apply(self, g0: f64, g1: f64, g2: f64) -> Self;
    fn compose(outer: &Jet, a: Self, b: Self) -> Self;
}

impl Scalar for f64 {
    const DIFF: bool = false;

    fn cst(v: f64) -> Self {
        v
    }
    fn val(self) -> f64 {
        self
    }
    fn apply(self, g0: f64, _g1: f64, _g2: f64) -> Self {
        g0
    }
    fn compose(outer: &Jet, _a: Self, _b: Self) -> Self {
        outer.v
    }
}

impl Scalar for Jet {
    const DIFF: bool = true;

    fn cst(v: f64) -> Self {
        Jet::constant(v)
    }
    fn val(self) -> f64 {
        self.v
    }
    fn apply(self, g0: f64, g1: f64, g2: f64) -> Self {
        Jet::apply(self, g0, g1, g2)
    }
    fn compose(outer: &Jet, a: Self, b: Self) -> Self {
        Jet::compose(outer, a, b)
    }
}
