//! Smooth maps between charts: evaluation, exact jacobians via dual numbers,
//! and a central-difference oracle.
//!
//! A [`SmoothMap`] owns a type-erased evaluator body. Bodies implement the
//! generic [`SmoothFn`] trait once and get every derivative depth for free; a
//! body may itself take jacobians of other maps internally (the exterior
//! derivative operators do), which simply consumes one more dual level.

use super::chart::Chart;
use super::expr::Expr;
use super::scalar::{DynSmoothFn, Real, D1, D2, D3};
use crate::linalg::Mat;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error("evaluator reports {body_in} inputs but the chart has dimension {chart_dim}")]
    DomainMismatch { body_in: usize, chart_dim: usize },
    #[error("expression {index} uses coordinate index {coord} outside the {dim}-dimensional chart")]
    ExprOutOfChart {
        index: usize,
        coord: usize,
        dim: usize,
    },
    #[error("cannot compose: inner map has {inner_out} outputs, outer map expects {outer_in}")]
    ComposeMismatch { inner_out: usize, outer_in: usize },
    #[error("linear combination needs at least one term with equal shapes")]
    BadLinComb,
}

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("point has {got} coordinates, map domain has {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("non-finite value in component {component} at point {point:?}")]
    NonFinite { component: usize, point: Vec<f64> },
}

/// Evaluator body, generic over the scalar so dual numbers flow through.
pub trait SmoothFn: Send + Sync + 'static {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    /// Append exactly `dim_out()` values to `out`.
    fn eval<T: Real>(&self, x: &[T], out: &mut Vec<T>);
}

impl<F: SmoothFn> DynSmoothFn for F {
    fn dim_in(&self) -> usize {
        SmoothFn::dim_in(self)
    }
    fn dim_out(&self) -> usize {
        SmoothFn::dim_out(self)
    }
    fn eval_f64(&self, x: &[f64], out: &mut Vec<f64>) {
        self.eval(x, out)
    }
    fn eval_d1(&self, x: &[D1], out: &mut Vec<D1>) {
        self.eval(x, out)
    }
    fn eval_d2(&self, x: &[D2], out: &mut Vec<D2>) {
        self.eval(x, out)
    }
    fn eval_d3(&self, x: &[D3], out: &mut Vec<D3>) {
        self.eval(x, out)
    }
}

/// A smooth map `chart -> R^codim`, immutable and cheap to clone.
#[derive(Clone)]
pub struct SmoothMap {
    domain: Chart,
    codim: usize,
    body: Arc<dyn DynSmoothFn>,
}

impl std::fmt::Debug for SmoothMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SmoothMap")
            .field("domain", &self.domain.labels())
            .field("codim", &self.codim)
            .finish()
    }
}

impl SmoothMap {
    pub fn new(domain: Chart, body: impl SmoothFn) -> Result<Self, MapError> {
        if body.dim_in() != domain.dim() {
            return Err(MapError::DomainMismatch {
                body_in: body.dim_in(),
                chart_dim: domain.dim(),
            });
        }
        let codim = body.dim_out();
        Ok(SmoothMap {
            domain,
            codim,
            body: Arc::new(body),
        })
    }

    /// One expression per output component.
    pub fn from_exprs(domain: Chart, exprs: Vec<Expr>) -> Result<Self, MapError> {
        let dim = domain.dim();
        for (index, e) in exprs.iter().enumerate() {
            if let Some(coord) = e.max_coord() {
                if coord >= dim {
                    return Err(MapError::ExprOutOfChart { index, coord, dim });
                }
            }
        }
        SmoothMap::new(
            domain.clone(),
            ExprsFn {
                dim,
                exprs: Arc::from(exprs),
            },
        )
    }

    pub fn constant(domain: Chart, values: Vec<f64>) -> Self {
        let dim = domain.dim();
        SmoothMap::new(domain, ConstFn { dim, values }).expect("constant map is well-formed")
    }

    pub fn identity(domain: Chart) -> Self {
        let n = domain.dim();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = 1.0;
        }
        Self::linear(domain, n, a)
    }

    /// `x -> A x` with `A` given row-major as `rows x domain.dim()`.
    pub fn linear(domain: Chart, rows: usize, a: Vec<f64>) -> Self {
        let cols = domain.dim();
        assert_eq!(a.len(), rows * cols, "matrix shape mismatch");
        SmoothMap::new(domain, LinearFn { rows, cols, a }).expect("linear map is well-formed")
    }

    /// `outer(inner(x))`; the result lives on `inner`'s domain.
    pub fn compose(outer: &SmoothMap, inner: &SmoothMap) -> Result<Self, MapError> {
        if inner.codim() != outer.domain().dim() {
            return Err(MapError::ComposeMismatch {
                inner_out: inner.codim(),
                outer_in: outer.domain().dim(),
            });
        }
        SmoothMap::new(
            inner.domain.clone(),
            ComposeFn {
                outer: outer.clone(),
                inner: inner.clone(),
            },
        )
    }

    /// Pointwise linear combination `sum_k c_k m_k` of maps with equal shapes.
    pub fn lin_comb(terms: Vec<(f64, SmoothMap)>) -> Result<Self, MapError> {
        let Some((_, first)) = terms.first() else {
            return Err(MapError::BadLinComb);
        };
        let domain = first.domain.clone();
        let codim = first.codim;
        if terms
            .iter()
            .any(|(_, m)| m.domain != domain || m.codim != codim)
        {
            return Err(MapError::BadLinComb);
        }
        SmoothMap::new(domain, LinCombFn { codim, terms })
    }

    pub fn domain(&self) -> &Chart {
        &self.domain
    }

    pub fn codim(&self) -> usize {
        self.codim
    }

    /// Evaluate at a real point, checking shape and finiteness.
    pub fn eval(&self, point: &[f64]) -> Result<Vec<f64>, EvalError> {
        if point.len() != self.domain.dim() {
            return Err(EvalError::DimMismatch {
                expected: self.domain.dim(),
                got: point.len(),
            });
        }
        let y = self.eval_t(point);
        if let Some(component) = y.iter().position(|v| !v.is_finite()) {
            return Err(EvalError::NonFinite {
                component,
                point: point.to_vec(),
            });
        }
        Ok(y)
    }

    /// Evaluate generically (plain or dual scalars). Panics on shape misuse;
    /// the checked entry points are [`eval`](Self::eval) and
    /// [`jacobian`](Self::jacobian).
    pub fn eval_t<T: Real>(&self, point: &[T]) -> Vec<T> {
        debug_assert_eq!(point.len(), self.domain.dim());
        let mut out = Vec::with_capacity(self.codim);
        T::eval_body(&*self.body, point, &mut out);
        debug_assert_eq!(out.len(), self.codim);
        out
    }

    /// Exact jacobian (dual numbers), entry `(i, mu) = d map^i / d x^mu`.
    pub fn jacobian(&self, point: &[f64]) -> Result<Mat, EvalError> {
        if point.len() != self.domain.dim() {
            return Err(EvalError::DimMismatch {
                expected: self.domain.dim(),
                got: point.len(),
            });
        }
        let data = jacobian_t(self, point);
        if let Some(component) = data.iter().position(|v| !v.is_finite()) {
            return Err(EvalError::NonFinite {
                component,
                point: point.to_vec(),
            });
        }
        Ok(Mat::from_vec(self.codim, self.domain.dim(), data))
    }

    /// Central-difference jacobian, the independent oracle for
    /// [`jacobian`](Self::jacobian).
    pub fn fd_jacobian(&self, point: &[f64], h: f64) -> Result<Mat, EvalError> {
        assert!(h > 0.0, "step size must be positive");
        if point.len() != self.domain.dim() {
            return Err(EvalError::DimMismatch {
                expected: self.domain.dim(),
                got: point.len(),
            });
        }
        let dim = self.domain.dim();
        let mut data = vec![0.0; self.codim * dim];
        let mut xp = point.to_vec();
        let mut xm = point.to_vec();
        for mu in 0..dim {
            xp[mu] = point[mu] + h;
            xm[mu] = point[mu] - h;
            let fp = self.eval(&xp)?;
            let fm = self.eval(&xm)?;
            for i in 0..self.codim {
                data[i * dim + mu] = (fp[i] - fm[i]) / (2.0 * h);
            }
            xp[mu] = point[mu];
            xm[mu] = point[mu];
        }
        Ok(Mat::from_vec(self.codim, dim, data))
    }
}

/// Jacobian at a (possibly dual) point, row-major `codim x dim`, computed by
/// seeding one dual level above `T`.
pub fn jacobian_t<T: Real>(map: &SmoothMap, point: &[T]) -> Vec<T> {
    let dim = map.domain().dim();
    let codim = map.codim();
    debug_assert_eq!(point.len(), dim);
    let mut out = vec![T::zero(); codim * dim];
    let mut lifted: Vec<T::Lift> = point.iter().map(|&v| v.lift()).collect();
    for mu in 0..dim {
        lifted[mu] = point[mu].lift_var();
        let y = map.eval_t::<T::Lift>(&lifted);
        for i in 0..codim {
            out[i * dim + mu] = T::split(y[i]).1;
        }
        lifted[mu] = point[mu].lift();
    }
    out
}

struct ExprsFn {
    dim: usize,
    exprs: Arc<[Expr]>,
}

impl SmoothFn for ExprsFn {
    fn dim_in(&self) -> usize {
        self.dim
    }
    fn dim_out(&self) -> usize {
        self.exprs.len()
    }
    fn eval<T: Real>(&self, x: &[T], out: &mut Vec<T>) {
        out.extend(self.exprs.iter().map(|e| e.eval(x)));
    }
}

struct ConstFn {
    dim: usize,
    values: Vec<f64>,
}

impl SmoothFn for ConstFn {
    fn dim_in(&self) -> usize {
        self.dim
    }
    fn dim_out(&self) -> usize {
        self.values.len()
    }
    fn eval<T: Real>(&self, _x: &[T], out: &mut Vec<T>) {
        out.extend(self.values.iter().map(|&v| T::from_f64(v)));
    }
}

struct LinearFn {
    rows: usize,
    cols: usize,
    a: Vec<f64>,
}

impl SmoothFn for LinearFn {
    fn dim_in(&self) -> usize {
        self.cols
    }
    fn dim_out(&self) -> usize {
        self.rows
    }
    fn eval<T: Real>(&self, x: &[T], out: &mut Vec<T>) {
        for i in 0..self.rows {
            let mut acc = T::zero();
            for j in 0..self.cols {
                acc = acc + T::from_f64(self.a[i * self.cols + j]) * x[j];
            }
            out.push(acc);
        }
    }
}

struct ComposeFn {
    outer: SmoothMap,
    inner: SmoothMap,
}

impl SmoothFn for ComposeFn {
    fn dim_in(&self) -> usize {
        self.inner.domain().dim()
    }
    fn dim_out(&self) -> usize {
        self.outer.codim()
    }
    fn eval<T: Real>(&self, x: &[T], out: &mut Vec<T>) {
        let mid = self.inner.eval_t(x);
        out.extend(self.outer.eval_t(&mid));
    }
}

struct LinCombFn {
    codim: usize,
    terms: Vec<(f64, SmoothMap)>,
}

impl SmoothFn for LinCombFn {
    fn dim_in(&self) -> usize {
        self.terms[0].1.domain().dim()
    }
    fn dim_out(&self) -> usize {
        self.codim
    }
    fn eval<T: Real>(&self, x: &[T], out: &mut Vec<T>) {
        let mut acc = vec![T::zero(); self.codim];
        for (c, m) in &self.terms {
            let y = m.eval_t(x);
            for (a, v) in acc.iter_mut().zip(y) {
                *a = *a + T::from_f64(*c) * v;
            }
        }
        out.extend(acc);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smoothcalc::expr::parse_expr;
    use approx::assert_relative_eq;

    fn expr_map(chart: &Chart, sources: &[&str]) -> SmoothMap {
        let exprs = sources
            .iter()
            .map(|s| parse_expr(s, chart).unwrap())
            .collect();
        SmoothMap::from_exprs(chart.clone(), exprs).unwrap()
    }

    #[test]
    fn identity_and_product_eval() {
        let chart = Chart::cube(2, -2.0, 2.0);
        let id = SmoothMap::identity(chart.clone());
        assert_eq!(id.eval(&[0.3, -1.0]).unwrap(), vec![0.3, -1.0]);

        let prod = expr_map(&chart, &["x1*x2"]);
        assert_relative_eq!(prod.eval(&[2.0, 3.0]).unwrap()[0], 6.0);

        let e = expr_map(&Chart::cube(1, 0.0, 2.0), &["exp(x1)"]);
        assert_relative_eq!(e.eval(&[1.0]).unwrap()[0], std::f64::consts::E, epsilon = 1e-12);
    }

    #[test]
    fn eval_rejects_bad_points() {
        let chart = Chart::cube(2, -1.0, 1.0);
        let m = expr_map(&chart, &["x1"]);
        assert!(matches!(
            m.eval(&[1.0]).unwrap_err(),
            EvalError::DimMismatch { expected: 2, got: 1 }
        ));
        let div = expr_map(&chart, &["x1/x2"]);
        assert!(matches!(
            div.eval(&[1.0, 0.0]).unwrap_err(),
            EvalError::NonFinite { component: 0, .. }
        ));
    }

    #[test]
    fn jacobian_of_linear_map_is_exact() {
        let chart = Chart::cube(3, -1.0, 1.0);
        let a = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let m = SmoothMap::linear(chart, 2, a.clone());
        let j = m.jacobian(&[0.1, 0.2, 0.3]).unwrap();
        for i in 0..2 {
            for mu in 0..3 {
                assert_eq!(j.get(i, mu), a[i * 3 + mu]);
            }
        }
    }

    #[test]
    fn jacobian_of_sin_at_zero() {
        let chart = Chart::cube(1, -1.0, 1.0);
        let m = expr_map(&chart, &["sin(x1)"]);
        let j = m.jacobian(&[0.0]).unwrap();
        assert_relative_eq!(j.get(0, 0), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn fd_jacobian_basics() {
        let chart = Chart::cube(1, -2.0, 2.0);
        let sq = expr_map(&chart, &["x1^2"]);
        let j = sq.fd_jacobian(&[1.0], 1e-4).unwrap();
        assert_relative_eq!(j.get(0, 0), 2.0, epsilon = 1e-7);

        let c = SmoothMap::constant(chart, vec![5.0, -1.0]);
        let j = c.fd_jacobian(&[0.5], 1e-4).unwrap();
        assert!(j.max_abs() <= 1e-12);
    }

    #[test]
    fn dual_lift_agrees_with_real_part() {
        let chart = Chart::cube(2, -1.0, 1.0);
        let m = expr_map(&chart, &["exp(x1)*sin(x2)", "x1/(x2 + 2)"]);
        for p in chart.sample_points(25, 3) {
            let plain = m.eval(&p).unwrap();
            let lifted: Vec<crate::smoothcalc::scalar::D1> =
                p.iter().map(|&v| v.lift()).collect();
            let dual = m.eval_t(&lifted);
            for (a, b) in plain.iter().zip(dual) {
                assert_relative_eq!(*a, b.re, epsilon = 0.0);
            }
        }
    }

    #[test]
    fn jacobian_matches_fd_on_random_points() {
        let chart = Chart::cube(2, -1.0, 1.0);
        let m = expr_map(
            &chart,
            &["sin(x1*x2) + x1^3", "exp(x2)/(2 + cos(x1))", "x1 - 0.5*x2^2"],
        );
        for p in chart.sample_points(100, 11) {
            let j = m.jacobian(&p).unwrap();
            let jfd = m.fd_jacobian(&p, 1e-5).unwrap();
            for i in 0..m.codim() {
                for mu in 0..2 {
                    let exact = j.get(i, mu);
                    let err = (exact - jfd.get(i, mu)).abs();
                    assert!(
                        err <= 1e-6 * (1.0 + exact.abs()),
                        "component ({i},{mu}) at {p:?}: dual {exact}, fd {}",
                        jfd.get(i, mu)
                    );
                }
            }
        }
    }

    #[test]
    fn composition_chain_rule_is_exact() {
        // jacobian(outer(inner(x))) == J_outer(inner(x)) * J_inner(x)
        let inner_chart = Chart::cube(2, -1.0, 1.0);
        let outer_chart = Chart::prefixed("y", 2, -5.0, 5.0);
        let inner = expr_map(&inner_chart, &["x1*x2", "sin(x1) + x2"]);
        let outer = expr_map(&outer_chart, &["exp(y1)*y2", "y1 - y2^2", "cos(y1*y2)"]);
        let comp = SmoothMap::compose(&outer, &inner).unwrap();
        for p in inner_chart.sample_points(40, 5) {
            let j_comp = comp.jacobian(&p).unwrap();
            let mid = inner.eval(&p).unwrap();
            let j_out = outer.jacobian(&mid).unwrap();
            let j_in = inner.jacobian(&p).unwrap();
            let j_mul = j_out.mul(&j_in);
            for i in 0..3 {
                for mu in 0..2 {
                    assert_relative_eq!(
                        j_comp.get(i, mu),
                        j_mul.get(i, mu),
                        epsilon = 1e-13,
                        max_relative = 1e-13
                    );
                }
            }
        }
    }

    #[test]
    fn maps_evaluate_concurrently() {
        let chart = Chart::cube(2, -1.0, 1.0);
        let m = std::sync::Arc::new(expr_map(&chart, &["sin(x1*x2)", "x1 + x2"]));
        let mut handles = Vec::new();
        for k in 0..8 {
            let m = m.clone();
            handles.push(std::thread::spawn(move || {
                let p = vec![0.1 * k as f64, -0.05 * k as f64];
                m.eval(&p).unwrap()
            }));
        }
        for h in handles {
            h.join().unwrap();
        }
    }
}
