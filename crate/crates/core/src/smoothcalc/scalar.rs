//! Forward-mode dual numbers.
//!
//! A `Dual<T>` carries a value and one directional derivative. Nesting duals
//! (`Dual<Dual<f64>>`) differentiates through code that itself takes
//! derivatives, which is what the exterior-derivative operators need: `d∘d`
//! evaluates second derivatives of model data even though every formula in
//! the library is written with first derivatives only.
//!
//! The nesting depth is capped at three levels. Lifting a [`D3`] panics with
//! a clear message instead of silently producing wrong derivatives.

use core::fmt::Debug;
use core::ops::{Add, Div, Mul, Neg, Sub};

/// One derivative level.
pub type D1 = Dual<f64>;
/// Two derivative levels (derivatives of derivative-taking code).
pub type D2 = Dual<D1>;
/// Three derivative levels. Supported for evaluation; cannot be lifted further.
pub type D3 = Dual<D2>;

/// Scalar types the evaluators are generic over: `f64` and nested duals.
///
/// `Lift` is the type with one more derivative slot; `lift`/`lift_var` embed a
/// value as a constant (zero derivative) or as the active variable (unit
/// derivative), and `split` projects a lifted value back to (value, derivative).
pub trait Real:
    Copy
    + Debug
    + PartialEq
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    type Lift: Real;

    fn from_f64(v: f64) -> Self;
    /// Innermost value, all derivative slots dropped.
    fn re(self) -> f64;
    /// Embed as a constant: derivative slot zero.
    fn lift(self) -> Self::Lift;
    /// Embed as the differentiation variable: derivative slot one.
    fn lift_var(self) -> Self::Lift;
    /// Project a lifted value to (value, directional derivative).
    fn split(v: Self::Lift) -> (Self, Self);

    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn sqrt(self) -> Self;

    /// Dispatch a type-erased evaluator body at this scalar's derivative depth.
    fn eval_body(f: &dyn DynSmoothFn, x: &[Self], out: &mut Vec<Self>);

    /// All components finite.
    fn is_finite(self) -> bool;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn one() -> Self {
        Self::from_f64(1.0)
    }

    /// Integer power by repeated squaring; negative exponents via reciprocal.
    fn powi(self, n: i32) -> Self {
        if n < 0 {
            return Self::one() / self.powi(-n);
        }
        let mut acc = Self::one();
        let mut base = self;
        let mut k = n as u32;
        while k > 0 {
            if k & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            k >>= 1;
        }
        acc
    }
}

/// Object-safe evaluator interface: one method per supported derivative depth.
///
/// Implemented automatically for every [`SmoothFn`](super::map::SmoothFn) via
/// a blanket impl; code should not implement this trait directly.
pub trait DynSmoothFn: Send + Sync {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn eval_f64(&self, x: &[f64], out: &mut Vec<f64>);
    fn eval_d1(&self, x: &[D1], out: &mut Vec<D1>);
    fn eval_d2(&self, x: &[D2], out: &mut Vec<D2>);
    fn eval_d3(&self, x: &[D3], out: &mut Vec<D3>);
}

/// Value plus one directional derivative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<T> {
    pub re: T,
    pub eps: T,
}

impl<T> Dual<T> {
    pub fn new(re: T, eps: T) -> Self {
        Dual { re, eps }
    }
}

impl<T: Real> Add for Dual<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Dual::new(self.re + rhs.re, self.eps + rhs.eps)
    }
}

impl<T: Real> Sub for Dual<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Dual::new(self.re - rhs.re, self.eps - rhs.eps)
    }
}

impl<T: Real> Mul for Dual<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Dual::new(
            self.re * rhs.re,
            self.re * rhs.eps + self.eps * rhs.re,
        )
    }
}

impl<T: Real> Div for Dual<T> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        Dual::new(
            self.re / rhs.re,
            (self.eps * rhs.re - self.re * rhs.eps) / (rhs.re * rhs.re),
        )
    }
}

impl<T: Real> Neg for Dual<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual::new(-self.re, -self.eps)
    }
}

fn dual_from_f64<T: Real>(v: f64) -> Dual<T> {
    Dual::new(T::from_f64(v), T::zero())
}

fn dual_sin<T: Real>(d: Dual<T>) -> Dual<T> {
    Dual::new(d.re.sin(), d.eps * d.re.cos())
}

fn dual_cos<T: Real>(d: Dual<T>) -> Dual<T> {
    Dual::new(d.re.cos(), -(d.eps * d.re.sin()))
}

fn dual_exp<T: Real>(d: Dual<T>) -> Dual<T> {
    let e = d.re.exp();
    Dual::new(e, d.eps * e)
}

fn dual_sqrt<T: Real>(d: Dual<T>) -> Dual<T> {
    let s = d.re.sqrt();
    Dual::new(s, d.eps / (s + s))
}

impl Real for f64 {
    type Lift = D1;

    fn from_f64(v: f64) -> Self {
        v
    }
    fn re(self) -> f64 {
        self
    }
    fn lift(self) -> D1 {
        Dual::new(self, 0.0)
    }
    fn lift_var(self) -> D1 {
        Dual::new(self, 1.0)
    }
    fn split(v: D1) -> (f64, f64) {
        (v.re, v.eps)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn eval_body(f: &dyn DynSmoothFn, x: &[Self], out: &mut Vec<Self>) {
        f.eval_f64(x, out)
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

macro_rules! impl_real_for_dual {
    ($inner:ty, $lift:ty, $eval:ident) => {
        impl Real for Dual<$inner> {
            type Lift = $lift;

            fn from_f64(v: f64) -> Self {
                dual_from_f64(v)
            }
            fn re(self) -> f64 {
                self.re.re()
            }
            fn lift(self) -> Self::Lift {
                Dual::new(self, Self::zero())
            }
            fn lift_var(self) -> Self::Lift {
                Dual::new(self, Self::one())
            }
            fn split(v: Self::Lift) -> (Self, Self) {
                (v.re, v.eps)
            }
            fn sin(self) -> Self {
                dual_sin(self)
            }
            fn cos(self) -> Self {
                dual_cos(self)
            }
            fn exp(self) -> Self {
                dual_exp(self)
            }
            fn sqrt(self) -> Self {
                dual_sqrt(self)
            }
            fn eval_body(f: &dyn DynSmoothFn, x: &[Self], out: &mut Vec<Self>) {
                f.$eval(x, out)
            }
            fn is_finite(self) -> bool {
                self.re.is_finite() && self.eps.is_finite()
            }
        }
    };
}

impl_real_for_dual!(f64, D2, eval_d1);
impl_real_for_dual!(D1, D3, eval_d2);

impl Real for D3 {
    type Lift = D3;

    fn from_f64(v: f64) -> Self {
        dual_from_f64(v)
    }
    fn re(self) -> f64 {
        self.re.re()
    }
    fn lift(self) -> Self::Lift {
        panic!("dual-number nesting depth exceeded (at most 3 derivative levels)")
    }
    fn lift_var(self) -> Self::Lift {
        panic!("dual-number nesting depth exceeded (at most 3 derivative levels)")
    }
    fn split(_: Self::Lift) -> (Self, Self) {
        panic!("dual-number nesting depth exceeded (at most 3 derivative levels)")
    }
    fn sin(self) -> Self {
        dual_sin(self)
    }
    fn cos(self) -> Self {
        dual_cos(self)
    }
    fn exp(self) -> Self {
        dual_exp(self)
    }
    fn sqrt(self) -> Self {
        dual_sqrt(self)
    }
    fn eval_body(f: &dyn DynSmoothFn, x: &[Self], out: &mut Vec<Self>) {
        f.eval_d3(x, out)
    }
    fn is_finite(self) -> bool {
        self.re.is_finite() && self.eps.is_finite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn product_rule() {
        // d/dx [x * sin(x)] = sin(x) + x cos(x) at x = 0.7
        let x = 0.7f64.lift_var();
        let y = x * x.sin();
        let (_, dy) = f64::split(y);
        assert_relative_eq!(dy, 0.7f64.sin() + 0.7 * 0.7f64.cos(), epsilon = 1e-15);
    }

    #[test]
    fn chain_rule_through_exp() {
        // d/dx exp(sin(x)) = cos(x) exp(sin(x))
        let x = 1.3f64.lift_var();
        let y = x.sin().exp();
        let (_, dy) = f64::split(y);
        assert_relative_eq!(dy, 1.3f64.cos() * 1.3f64.sin().exp(), epsilon = 1e-15);
    }

    #[test]
    fn second_derivative_via_nesting() {
        // d²/dx² sin(x) = -sin(x) at x = 0.4
        let x0 = 0.4f64;
        let inner = x0.lift_var(); // D1
        let outer = inner.lift_var(); // D2, both slots active
        let y = outer.sin();
        let (_, dy) = D1::split(y);
        let (_, d2y) = f64::split(dy);
        assert_relative_eq!(d2y, -x0.sin(), epsilon = 1e-15);
    }

    #[test]
    fn powi_matches_repeated_multiplication() {
        let x = 1.2f64.lift_var();
        let y = x.powi(5);
        let (v, dv) = f64::split(y);
        assert_relative_eq!(v, 1.2f64.powi(5), epsilon = 1e-14);
        assert_relative_eq!(dv, 5.0 * 1.2f64.powi(4), epsilon = 1e-14);
        let z = x.powi(-2);
        let (v, dv) = f64::split(z);
        assert_relative_eq!(v, 1.2f64.powi(-2), epsilon = 1e-14);
        assert_relative_eq!(dv, -2.0 * 1.2f64.powi(-3), epsilon = 1e-14);
    }

    #[test]
    fn sqrt_derivative() {
        let x = 2.0f64.lift_var();
        let (v, dv) = f64::split(x.sqrt());
        assert_relative_eq!(v, 2.0f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(dv, 0.5 / 2.0f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    #[should_panic(expected = "nesting depth exceeded")]
    fn depth_cap_is_loud() {
        let x: D3 = D3::from_f64(1.0);
        let _ = x.lift_var();
    }
}
