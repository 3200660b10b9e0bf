//! Flat gauge fields over the interval: A-paths, their holonomy, and
//! homotopy flows.
//!
//! An A-path is a pair `(x(t), a(t))` with `dx/dt = rho(x) a`; over the
//! one-dimensional interval the field strength vanishes identically, so the
//! anchor condition is the whole flatness story. Homotopies are gauge flows
//! whose parameter vanishes at both endpoints; they preserve the base
//! endpoints and, for action algebroids, the holonomy matrix - the desk-scale
//! model of the moduli space of flat connections on the interval.

use crate::algebroid::LieAlgebroid;
use crate::linalg::{mat3_mul, mat3_vec, orthogonality_defect, Mat3};
use crate::smoothcalc::chart::{Chart, SampleRng};
use crate::smoothcalc::expr::Expr;
use crate::smoothcalc::map::{jacobian_t, SmoothMap};
use serde::Serialize;
use thiserror::Error;

const BOX_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum PathError {
    #[error("a path needs at least 8 segments, got {0}")]
    TooFewSegments(usize),
    #[error("sample arrays must hold N+1 points of the right dimensions")]
    ShapeMismatch,
    #[error("base path leaves the chart box at step {step} (point {point:?})")]
    BoxExit { step: usize, point: Vec<f64> },
    #[error("algebroid anchor is not the matrix action of the given generators: {0}")]
    NotMatrixAction(String),
    #[error("path is not flat enough to flow: residual {residual} > tol {tol}")]
    NotFlat { residual: f64, tol: f64 },
    #[error("homotopy parameter violates the endpoint condition: |eps| = {0} at t in {{0, 1}}")]
    BoundaryViolated(f64),
    #[error("homotopy parameter must have rank components on the (t, s) chart")]
    BadParameter,
}

/// An A-path on the uniform grid `t_k = k/N`: base samples `x(t_k)` and
/// fiber samples `a(t_k)`.
#[derive(Clone, Debug)]
pub struct APath {
    algebroid: LieAlgebroid,
    x: Vec<Vec<f64>>,
    a: Vec<Vec<f64>>,
}

impl APath {
    pub fn new(
        algebroid: LieAlgebroid,
        x: Vec<Vec<f64>>,
        a: Vec<Vec<f64>>,
    ) -> Result<Self, PathError> {
        if x.len() < 9 {
            return Err(PathError::TooFewSegments(x.len().saturating_sub(1)));
        }
        if x.len() != a.len() {
            return Err(PathError::ShapeMismatch);
        }
        let n = algebroid.base().dim();
        let r = algebroid.rank();
        if x.iter().any(|p| p.len() != n) || a.iter().any(|v| v.len() != r) {
            return Err(PathError::ShapeMismatch);
        }
        for (step, p) in x.iter().enumerate() {
            if !algebroid.base().contains(p, BOX_SLACK) {
                return Err(PathError::BoxExit {
                    step,
                    point: p.clone(),
                });
            }
        }
        Ok(APath { algebroid, x, a })
    }

    pub fn algebroid(&self) -> &LieAlgebroid {
        &self.algebroid
    }

    /// Number of grid segments `N`.
    pub fn segments(&self) -> usize {
        self.x.len() - 1
    }

    pub fn x_samples(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn a_samples(&self) -> &[Vec<f64>] {
        &self.a
    }

    pub fn start(&self) -> &[f64] {
        &self.x[0]
    }

    pub fn end(&self) -> &[f64] {
        &self.x[self.x.len() - 1]
    }

    /// Flatness residual `max_k |dx/dt(t_k) - rho(x(t_k)) a(t_k)|`, the time
    /// derivative taken with fourth-order stencils.
    pub fn residual(&self) -> f64 {
        let n = self.algebroid.base().dim();
        let r = self.algebroid.rank();
        let h = 1.0 / self.segments() as f64;
        let xdot = stencil_derivative(&self.x, h);
        let mut worst = 0.0f64;
        for k in 0..self.x.len() {
            let rho = self.algebroid.anchor_t(&self.x[k]);
            for i in 0..n {
                let mut v = xdot[k][i];
                for a in 0..r {
                    v -= rho[i * r + a] * self.a[k][a];
                }
                worst = worst.max(v.abs());
            }
        }
        worst
    }
}

/// Solve `dx/dt = rho(x) a(t)` on `[0, 1]` by classic fourth-order
/// Runge-Kutta with `segments` uniform steps, sampling the driving curve
/// from the closure.
pub fn integrate_base(
    algebroid: &LieAlgebroid,
    a_curve: &dyn Fn(f64) -> Vec<f64>,
    x0: &[f64],
    segments: usize,
) -> Result<APath, PathError> {
    if segments < 8 {
        return Err(PathError::TooFewSegments(segments));
    }
    let n = algebroid.base().dim();
    let r = algebroid.rank();
    if x0.len() != n {
        return Err(PathError::ShapeMismatch);
    }
    let h = 1.0 / segments as f64;
    let rhs = |t: f64, x: &[f64]| -> Vec<f64> {
        let rho = algebroid.anchor_t(x);
        let av = a_curve(t);
        debug_assert_eq!(av.len(), r);
        (0..n)
            .map(|i| (0..r).map(|a| rho[i * r + a] * av[a]).sum())
            .collect()
    };
    let mut x = vec![x0.to_vec()];
    let mut a = vec![a_curve(0.0)];
    let mut cur = x0.to_vec();
    for k in 0..segments {
        let t = k as f64 * h;
        let k1 = rhs(t, &cur);
        let s2: Vec<f64> = cur.iter().zip(&k1).map(|(x, k)| x + 0.5 * h * k).collect();
        let k2 = rhs(t + 0.5 * h, &s2);
        let s3: Vec<f64> = cur.iter().zip(&k2).map(|(x, k)| x + 0.5 * h * k).collect();
        let k3 = rhs(t + 0.5 * h, &s3);
        let s4: Vec<f64> = cur.iter().zip(&k3).map(|(x, k)| x + h * k).collect();
        let k4 = rhs(t + h, &s4);
        cur = cur
            .iter()
            .enumerate()
            .map(|(i, x)| x + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect();
        if !algebroid.base().contains(&cur, 1e-6) {
            return Err(PathError::BoxExit {
                step: k + 1,
                point: cur,
            });
        }
        x.push(cur.clone());
        a.push(a_curve((k + 1) as f64 * h));
    }
    APath::new(algebroid.clone(), x, a)
}

/// The group element an A-path of a matrix action algebroid integrates to.
#[derive(Clone, Debug, Serialize)]
pub struct Holonomy {
    /// Row-major 3x3 group element `R(1)`.
    pub matrix: [f64; 9],
    /// Base endpoint `x(1)`.
    pub endpoint: Vec<f64>,
    /// Base start point `x(0)`.
    pub start: Vec<f64>,
}

impl Holonomy {
    pub fn orthogonality_defect(&self) -> f64 {
        orthogonality_defect(&self.matrix)
    }

    /// `|x(1) - R(1) x(0)|`, the consistency of the holonomy with the base
    /// flow; the ordering of the path-ordered exponential is pinned by
    /// requiring this to vanish.
    pub fn consistency_defect(&self) -> f64 {
        let moved = mat3_vec(&self.matrix, &self.start);
        self.endpoint
            .iter()
            .zip(&moved)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Frobenius distance to another holonomy matrix.
    pub fn distance(&self, other: &Holonomy) -> f64 {
        self.matrix
            .iter()
            .zip(&other.matrix)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Path-ordered exponential of an A-path for an algebroid whose anchor is
/// the linear matrix action `x -> sum_a a^a G_a x`: solves
/// `dR/dt = (a^a(t) G_a) R`, `R(0) = I` by fourth-order Runge-Kutta, fiber
/// values interpolated to half steps.
pub fn holonomy(path: &APath, generators: &[Mat3<f64>; 3]) -> Result<Holonomy, PathError> {
    let alg = path.algebroid();
    if alg.rank() != 3 || alg.base().dim() != 3 {
        return Err(PathError::NotMatrixAction(
            "need a rank-3 algebroid over a 3-dimensional chart".into(),
        ));
    }
    // the anchor must be the generator action on sampled points
    for x in alg.base().sample_points(20, 0x686f_6c6f) {
        let rho = alg.anchor_t(&x);
        for a in 0..3 {
            let gx = mat3_vec(&generators[a], &x);
            for i in 0..3 {
                if (rho[i * 3 + a] - gx[i]).abs() > 1e-9 {
                    return Err(PathError::NotMatrixAction(format!(
                        "anchor column {a} differs from G_{a} x at {x:?}"
                    )));
                }
            }
        }
    }
    let segments = path.segments();
    let h = 1.0 / segments as f64;
    let a_at = |t: f64| interp4(path.a_samples(), t);
    let hat = |av: &[f64]| -> Mat3<f64> {
        let mut m = [0.0; 9];
        for a in 0..3 {
            for k in 0..9 {
                m[k] += av[a] * generators[a][k];
            }
        }
        m
    };
    let rhs = |t: f64, r: &Mat3<f64>| -> Mat3<f64> { mat3_mul(&hat(&a_at(t)), r) };
    let mut r: Mat3<f64> = crate::linalg::mat3_identity();
    for k in 0..segments {
        let t = k as f64 * h;
        let k1 = rhs(t, &r);
        let s2 = add_scaled(&r, &k1, 0.5 * h);
        let k2 = rhs(t + 0.5 * h, &s2);
        let s3 = add_scaled(&r, &k2, 0.5 * h);
        let k3 = rhs(t + 0.5 * h, &s3);
        let s4 = add_scaled(&r, &k3, h);
        let k4 = rhs(t + h, &s4);
        for idx in 0..9 {
            r[idx] += h / 6.0 * (k1[idx] + 2.0 * k2[idx] + 2.0 * k3[idx] + k4[idx]);
        }
    }
    Ok(Holonomy {
        matrix: r,
        endpoint: path.end().to_vec(),
        start: path.start().to_vec(),
    })
}

fn add_scaled(base: &Mat3<f64>, dir: &Mat3<f64>, c: f64) -> Mat3<f64> {
    core::array::from_fn(|k| base[k] + c * dir[k])
}

/// A homotopy parameter `eps^a(t, s)` on the unit square, vanishing at
/// `t = 0` and `t = 1` for every `s`.
#[derive(Clone, Debug)]
pub struct Homotopy {
    eps: SmoothMap,
    s_steps: usize,
}

impl Homotopy {
    /// `eps` lives on a 2-chart `(t, s)`. The endpoint condition is checked
    /// on an `s` grid to 1e-14.
    pub fn new(eps: SmoothMap, s_steps: usize) -> Result<Self, PathError> {
        if eps.domain().dim() != 2 || s_steps == 0 {
            return Err(PathError::BadParameter);
        }
        let mut worst = 0.0f64;
        for k in 0..=32 {
            let s = k as f64 / 32.0;
            for t in [0.0, 1.0] {
                for v in eps.eval_t(&[t, s]) {
                    worst = worst.max(v.abs());
                }
            }
        }
        if worst > 1e-14 {
            return Err(PathError::BoundaryViolated(worst));
        }
        Ok(Homotopy { eps, s_steps })
    }

    pub fn eps(&self) -> &SmoothMap {
        &self.eps
    }

    pub fn s_steps(&self) -> usize {
        self.s_steps
    }

    fn value(&self, t: f64, s: f64) -> Vec<f64> {
        self.eps.eval_t(&[t, s])
    }

    /// `d eps / dt (t, s)` through dual numbers.
    fn t_derivative(&self, t: f64, s: f64) -> Vec<f64> {
        let jac = jacobian_t(&self.eps, &[t, s]); // [a*2 + col], col 0 = t
        (0..self.eps.codim()).map(|a| jac[a * 2]).collect()
    }
}

/// The chart homotopy parameters live on.
pub fn homotopy_chart() -> Chart {
    Chart::new(vec!["t", "s"], vec![(0.0, 1.0), (0.0, 1.0)]).expect("unit square chart")
}

/// A seeded bump-modulated random Fourier homotopy: components
/// `4 t (1 - t) sum_k (c_k + d_k s) sin(k pi t)`.
pub fn random_homotopy(
    rank: usize,
    rng: &mut SampleRng,
    amplitude: f64,
    s_steps: usize,
) -> Homotopy {
    let chart = homotopy_chart();
    let t = Expr::coord(0);
    let s = Expr::coord(1);
    let bump = Expr::num(4.0)
        .mul(t.clone())
        .mul(Expr::num(1.0).sub(t.clone()));
    let mut comps = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut sum = Expr::num(0.0);
        for k in 1..=3 {
            let c = rng.symmetric(amplitude / 3.0);
            let d = rng.symmetric(amplitude / 6.0);
            let coef = Expr::num(c).add(Expr::num(d).mul(s.clone()));
            let phase = Expr::num(k as f64 * std::f64::consts::PI).mul(t.clone());
            sum = sum.add(coef.mul(phase.sin()));
        }
        comps.push(bump.clone().mul(sum));
    }
    let eps = SmoothMap::from_exprs(chart, comps).expect("homotopy expressions fit the chart");
    Homotopy::new(eps, s_steps).expect("bump factor enforces the endpoint condition")
}

/// Result of a homotopy flow: the flowed (projected) path plus drift
/// diagnostics.
#[derive(Clone, Debug)]
pub struct HomotopyOutcome {
    pub path: APath,
    /// Worst distance between the projected base path and the directly
    /// flowed (unprojected) one.
    pub unprojected_drift: f64,
}

/// Flow an A-path by the gauge homotopy:
/// `da^c/ds = d_t eps^c + C^c_{ab}(x) a^a eps^b`, with the base path
/// re-solved from `a` at every stage (projection onto the flat set). The
/// directly flowed base path `dx/ds = rho(x) eps` is carried along and its
/// drift from the projected one reported.
pub fn homotopy_flow(
    path: &APath,
    homotopy: &Homotopy,
    tol: f64,
) -> Result<HomotopyOutcome, PathError> {
    if homotopy.eps.codim() != path.algebroid().rank() {
        return Err(PathError::BadParameter);
    }
    let residual = path.residual();
    if residual > tol {
        return Err(PathError::NotFlat { residual, tol });
    }
    let alg = path.algebroid().clone();
    let n = alg.base().dim();
    let r = alg.rank();
    let segments = path.segments();
    let ht = 1.0 / segments as f64;
    let hs = 1.0 / homotopy.s_steps as f64;
    let x0 = path.start().to_vec();

    // d a / d s at fixed s, the base re-solved from the fiber samples
    let rhs_a = |a: &[Vec<f64>], s: f64| -> Result<Vec<Vec<f64>>, PathError> {
        let x = integrate_base(&alg, &|t| interp4(a, t), &x0, segments)?;
        let mut out = Vec::with_capacity(a.len());
        for k in 0..a.len() {
            let t = k as f64 * ht;
            let c = alg.structure_t(&x.x_samples()[k]);
            let eps = homotopy.value(t, s);
            let deps = homotopy.t_derivative(t, s);
            let mut row = vec![0.0; r];
            for cc in 0..r {
                let mut v = deps[cc];
                for aa in 0..r {
                    for b in 0..r {
                        v += c[(cc * r + aa) * r + b] * a[k][aa] * eps[b];
                    }
                }
                row[cc] = v;
            }
            out.push(row);
        }
        Ok(out)
    };
    // unprojected base flow d x / d s = rho(x) eps
    let rhs_x = |x: &[Vec<f64>], s: f64| -> Vec<Vec<f64>> {
        (0..x.len())
            .map(|k| {
                let t = k as f64 * ht;
                let rho = alg.anchor_t(&x[k]);
                let eps = homotopy.value(t, s);
                (0..n)
                    .map(|i| (0..r).map(|a| rho[i * r + a] * eps[a]).sum())
                    .collect()
            })
            .collect()
    };

    let add = |base: &[Vec<f64>], dir: &[Vec<f64>], c: f64| -> Vec<Vec<f64>> {
        base.iter()
            .zip(dir)
            .map(|(b, d)| b.iter().zip(d).map(|(x, y)| x + c * y).collect())
            .collect()
    };

    let mut a = path.a_samples().to_vec();
    let mut x_free = path.x_samples().to_vec();
    for step in 0..homotopy.s_steps {
        let s = step as f64 * hs;
        let k1 = rhs_a(&a, s)?;
        let k2 = rhs_a(&add(&a, &k1, 0.5 * hs), s + 0.5 * hs)?;
        let k3 = rhs_a(&add(&a, &k2, 0.5 * hs), s + 0.5 * hs)?;
        let k4 = rhs_a(&add(&a, &k3, hs), s + hs)?;
        let l1 = rhs_x(&x_free, s);
        let l2 = rhs_x(&add(&x_free, &l1, 0.5 * hs), s + 0.5 * hs);
        let l3 = rhs_x(&add(&x_free, &l2, 0.5 * hs), s + 0.5 * hs);
        let l4 = rhs_x(&add(&x_free, &l3, hs), s + hs);
        for k in 0..a.len() {
            for c in 0..r {
                a[k][c] += hs / 6.0 * (k1[k][c] + 2.0 * k2[k][c] + 2.0 * k3[k][c] + k4[k][c]);
            }
            for i in 0..n {
                x_free[k][i] += hs / 6.0 * (l1[k][i] + 2.0 * l2[k][i] + 2.0 * l3[k][i] + l4[k][i]);
            }
        }
    }
    let projected = integrate_base(&alg, &|t| interp4(&a, t), &x0, segments)?;
    let mut drift = 0.0f64;
    for (p, q) in projected.x_samples().iter().zip(&x_free) {
        for (u, v) in p.iter().zip(q) {
            drift = drift.max((u - v).abs());
        }
    }
    Ok(HomotopyOutcome {
        path: projected,
        unprojected_drift: drift,
    })
}

/// One homotopy flow of the Weinstein experiment.
#[derive(Clone, Debug, Serialize)]
pub struct WeinsteinTrial {
    pub holonomy_drift: f64,
    pub endpoint_drift: f64,
    pub residual_after: f64,
    pub unprojected_drift: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct WeinsteinReport {
    pub trials: Vec<WeinsteinTrial>,
    pub max_holonomy_drift: f64,
    pub max_endpoint_drift: f64,
    pub max_residual: f64,
    /// Worst `|x(1) - R(1) x(0)|` over every holonomy computed.
    pub max_consistency_defect: f64,
    /// Worst orthogonality defect over every holonomy computed.
    pub max_orthogonality_defect: f64,
}

/// Random flat A-paths of a matrix action algebroid, flowed by random
/// homotopies: reports how far the holonomy and base endpoint move. Both are
/// homotopy invariants, so the drifts measure only the numerical error of
/// the flow.
pub fn weinstein_experiment(
    algebroid: &LieAlgebroid,
    generators: &[Mat3<f64>; 3],
    trials: usize,
    flows_per_trial: usize,
    segments: usize,
    seed: u64,
) -> Result<WeinsteinReport, PathError> {
    let mut rng = SampleRng::new(seed);
    let mut report = WeinsteinReport {
        trials: Vec::new(),
        max_holonomy_drift: 0.0,
        max_endpoint_drift: 0.0,
        max_residual: 0.0,
        max_consistency_defect: 0.0,
        max_orthogonality_defect: 0.0,
    };
    for _ in 0..trials {
        let path = random_action_path(algebroid, &mut rng, segments)?;
        let h0 = holonomy(&path, generators)?;
        report.max_consistency_defect = report.max_consistency_defect.max(h0.consistency_defect());
        report.max_orthogonality_defect =
            report.max_orthogonality_defect.max(h0.orthogonality_defect());
        for _ in 0..flows_per_trial {
            let homotopy = random_homotopy(algebroid.rank(), &mut rng, 0.5, 10);
            let outcome = homotopy_flow(&path, &homotopy, 1e-6)?;
            let h1 = holonomy(&outcome.path, generators)?;
            report.max_consistency_defect =
                report.max_consistency_defect.max(h1.consistency_defect());
            report.max_orthogonality_defect =
                report.max_orthogonality_defect.max(h1.orthogonality_defect());
            let endpoint_drift = path
                .end()
                .iter()
                .zip(outcome.path.end())
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            let trial = WeinsteinTrial {
                holonomy_drift: h0.distance(&h1),
                endpoint_drift,
                residual_after: outcome.path.residual(),
                unprojected_drift: outcome.unprojected_drift,
            };
            report.max_holonomy_drift = report.max_holonomy_drift.max(trial.holonomy_drift);
            report.max_endpoint_drift = report.max_endpoint_drift.max(trial.endpoint_drift);
            report.max_residual = report.max_residual.max(trial.residual_after);
            report.trials.push(trial);
        }
    }
    Ok(report)
}

/// A random flat A-path: a seeded Fourier fiber curve integrated from a
/// start point placed safely inside the box.
pub fn random_action_path(
    algebroid: &LieAlgebroid,
    rng: &mut SampleRng,
    segments: usize,
) -> Result<APath, PathError> {
    let r = algebroid.rank();
    let mut coeffs = Vec::new();
    for _ in 0..r {
        coeffs.push((rng.symmetric(0.8), rng.symmetric(0.8), rng.symmetric(0.8)));
    }
    let a_curve = move |t: f64| -> Vec<f64> {
        coeffs
            .iter()
            .map(|(c0, c1, c2)| {
                c0 + c1 * (std::f64::consts::PI * t).sin()
                    + c2 * (2.0 * std::f64::consts::PI * t).cos()
            })
            .collect()
    };
    // rotations preserve the norm, so starting inside the inscribed ball
    // keeps the whole path inside the box
    let bounds = algebroid.base().bounds();
    let radius = bounds
        .iter()
        .map(|&(lo, hi)| (hi - lo) * 0.5)
        .fold(f64::INFINITY, f64::min);
    let dir: Vec<f64> = (0..algebroid.base().dim())
        .map(|_| rng.symmetric(1.0))
        .collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-9);
    let scale = radius * rng.uniform(0.3, 0.9) / norm;
    let x0: Vec<f64> = dir.iter().map(|v| v * scale).collect();
    integrate_base(algebroid, &a_curve, &x0, segments)
}

/// Fourth-order centered time derivative on a uniform grid, with one-sided
/// closures at the ends.
pub fn stencil_derivative(samples: &[Vec<f64>], h: f64) -> Vec<Vec<f64>> {
    let n = samples.len();
    assert!(n >= 5, "stencils need at least five samples");
    let dim = samples[0].len();
    let mut out = vec![vec![0.0; dim]; n];
    for i in 0..dim {
        out[0][i] = (-25.0 * samples[0][i] + 48.0 * samples[1][i] - 36.0 * samples[2][i]
            + 16.0 * samples[3][i]
            - 3.0 * samples[4][i])
            / (12.0 * h);
        out[1][i] = (-3.0 * samples[0][i] - 10.0 * samples[1][i] + 18.0 * samples[2][i]
            - 6.0 * samples[3][i]
            + samples[4][i])
            / (12.0 * h);
        out[n - 2][i] = (3.0 * samples[n - 1][i] + 10.0 * samples[n - 2][i]
            - 18.0 * samples[n - 3][i]
            + 6.0 * samples[n - 4][i]
            - samples[n - 5][i])
            / (12.0 * h);
        out[n - 1][i] = (25.0 * samples[n - 1][i] - 48.0 * samples[n - 2][i]
            + 36.0 * samples[n - 3][i]
            - 16.0 * samples[n - 4][i]
            + 3.0 * samples[n - 5][i])
            / (12.0 * h);
    }
    for k in 2..n - 2 {
        for i in 0..dim {
            out[k][i] = (samples[k - 2][i] - 8.0 * samples[k - 1][i] + 8.0 * samples[k + 1][i]
                - samples[k + 2][i])
                / (12.0 * h);
        }
    }
    out
}

/// Cubic (four-point Lagrange) interpolation of grid samples on `[0, 1]`.
pub fn interp4(samples: &[Vec<f64>], t: f64) -> Vec<f64> {
    let n = samples.len() - 1;
    let h = 1.0 / n as f64;
    let pos = (t / h).floor() as isize;
    let base = pos.clamp(1, n as isize - 2) as usize - 1;
    let dim = samples[0].len();
    let mut out = vec![0.0; dim];
    for j in 0..4 {
        let tj = (base + j) as f64 * h;
        let mut w = 1.0;
        for k in 0..4 {
            if k != j {
                let tk = (base + k) as f64 * h;
                w *= (t - tk) / (tj - tk);
            }
        }
        for i in 0..dim {
            out[i] += w * samples[base + j][i];
        }
    }
    out
}

/// Composite Simpson integral of scalar grid samples over `[0, 1]`;
/// needs an even segment count.
pub fn simpson(values: &[f64]) -> f64 {
    let n = values.len() - 1;
    assert!(n >= 2 && n % 2 == 0, "Simpson needs an even segment count");
    let h = 1.0 / n as f64;
    let mut acc = values[0] + values[n];
    for k in 1..n {
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * values[k];
    }
    acc * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::so3_generators;
    use crate::psm::builtin;
    use approx::assert_relative_eq;

    fn so3_action() -> (LieAlgebroid, [Mat3<f64>; 3]) {
        (LieAlgebroid::action_so3_r3(2.0), so3_generators())
    }

    #[test]
    fn zero_curve_keeps_base_constant() {
        let (alg, _) = so3_action();
        let path = integrate_base(&alg, &|_| vec![0.0; 3], &[0.5, -0.2, 0.3], 64).unwrap();
        assert_eq!(path.end(), path.start());
        assert!(path.residual() <= 1e-14);
        // Lie algebra (zero anchor): constant base exactly
        let so3 = LieAlgebroid::so3();
        let p = integrate_base(&so3, &|t| vec![t, 1.0, -t], &[0.1], 64).unwrap();
        assert_eq!(p.end(), &[0.1]);
    }

    #[test]
    fn constant_rotation_curve_matches_closed_form() {
        let (alg, _) = so3_action();
        let omega = std::f64::consts::PI;
        let path =
            integrate_base(&alg, &|_| vec![omega, 0.0, 0.0], &[0.0, 1.0, 0.0], 2048).unwrap();
        // rotation about axis 1 by pi sends (0, 1, 0) to (0, -1, 0)
        assert!((path.end()[0] - 0.0).abs() <= 1e-10);
        assert!((path.end()[1] + 1.0).abs() <= 1e-10);
        assert!((path.end()[2] - 0.0).abs() <= 1e-10);
    }

    #[test]
    fn rk4_order_is_four() {
        let (alg, _) = so3_action();
        let omega = 2.0;
        let exact = {
            let r = crate::linalg::so3_exp(&[omega, 0.0, 0.0]);
            mat3_vec(&r, &[0.0, 1.0, 0.0])
        };
        let err_at = |n: usize| -> f64 {
            let p =
                integrate_base(&alg, &|_| vec![omega, 0.0, 0.0], &[0.0, 1.0, 0.0], n).unwrap();
            p.end()
                .iter()
                .zip(&exact)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        };
        let e1 = err_at(16);
        let e2 = err_at(32);
        let e3 = err_at(64);
        let order1 = (e1 / e2).log2();
        let order2 = (e2 / e3).log2();
        assert!(
            (3.5..=4.5).contains(&order1) && (3.5..=4.5).contains(&order2),
            "measured orders {order1}, {order2}"
        );
    }

    #[test]
    fn residual_floor_for_tangent_paths() {
        // tangent algebroid: a = dx/dt sampled from a smooth x
        let alg = LieAlgebroid::tangent(Chart::cube(1, -2.0, 2.0));
        let n = 512;
        let x: Vec<Vec<f64>> = (0..=n)
            .map(|k| vec![(2.0 * std::f64::consts::PI * k as f64 / n as f64).sin() * 0.5])
            .collect();
        let a: Vec<Vec<f64>> = (0..=n)
            .map(|k| {
                vec![
                    (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos()
                        * std::f64::consts::PI,
                ]
            })
            .collect();
        let path = APath::new(alg, x, a).unwrap();
        assert!(path.residual() <= 1e-6, "residual {}", path.residual());
    }

    #[test]
    fn self_consistency_of_integrated_paths() {
        let (alg, _) = so3_action();
        let mut rng = SampleRng::new(4);
        let path = random_action_path(&alg, &mut rng, 512).unwrap();
        assert!(path.residual() <= 1e-8, "residual {}", path.residual());
    }

    #[test]
    fn casimir_is_conserved_on_su2_cotangent() {
        let ps = builtin("su2").unwrap();
        let alg = ps.cotangent_algebroid();
        let a_curve = |t: f64| vec![0.6 * (3.0 * t).sin(), -0.4, 0.5 * t];
        let x0 = [0.4, -0.3, 0.2];
        let path = integrate_base(&alg, &a_curve, &x0, 512).unwrap();
        let norm0: f64 = x0.iter().map(|v| v * v).sum::<f64>();
        for x in path.x_samples() {
            let norm: f64 = x.iter().map(|v| v * v).sum::<f64>();
            assert!(
                (norm - norm0).abs() <= 1e-9,
                "Casimir drift {}",
                (norm - norm0).abs()
            );
        }
    }

    #[test]
    fn holonomy_examples() {
        let (alg, gens) = so3_action();
        // zero curve: identity
        let p = integrate_base(&alg, &|_| vec![0.0; 3], &[0.3, 0.1, -0.2], 64).unwrap();
        let h = holonomy(&p, &gens).unwrap();
        for (k, v) in h.matrix.iter().enumerate() {
            let expect = if k % 4 == 0 { 1.0 } else { 0.0 };
            assert_relative_eq!(*v, expect, epsilon = 1e-12);
        }
        // constant a = (pi, 0, 0): rotation by pi about axis 1
        let p = integrate_base(
            &alg,
            &|_| vec![std::f64::consts::PI, 0.0, 0.0],
            &[0.0, 0.5, 0.0],
            256,
        )
        .unwrap();
        let h = holonomy(&p, &gens).unwrap();
        let expect = [1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0];
        for k in 0..9 {
            assert!((h.matrix[k] - expect[k]).abs() <= 1e-9);
        }
        assert!(h.orthogonality_defect() <= 1e-9);
        assert!(h.consistency_defect() <= 1e-8);
    }

    #[test]
    fn holonomy_of_concatenation_composes_in_evolution_order() {
        // a1-window on the first half then a2-window on the second: the base
        // point moves by R1 then R2, so R = R2 R1 as matrices; the
        // consistency defect pins this ordering.
        let (alg, gens) = so3_action();
        let a1 = [0.9, -0.3, 0.4];
        let a2 = [-0.2, 0.7, 0.1];
        // windows 2(1 - cos(4 pi t)) have unit integral over their half
        let blend = move |t: f64| -> Vec<f64> {
            let w = 2.0 * (1.0 - (4.0 * std::f64::consts::PI * t).cos());
            let dir = if t < 0.5 { &a1 } else { &a2 };
            dir.iter().map(|c| c * w).collect()
        };
        let x0 = [0.4, 0.2, -0.1];
        let path = integrate_base(&alg, &blend, &x0, 512).unwrap();
        let h = holonomy(&path, &gens).unwrap();
        let r1 = crate::linalg::so3_exp(&a1);
        let r2 = crate::linalg::so3_exp(&a2);
        let expect = mat3_mul(&r2, &r1);
        for k in 0..9 {
            assert!(
                (h.matrix[k] - expect[k]).abs() <= 1e-6,
                "concatenation holonomy defect {}",
                (h.matrix[k] - expect[k]).abs()
            );
        }
        assert!(h.consistency_defect() <= 1e-7);
    }

    #[test]
    fn holonomy_rejects_non_action_algebroids() {
        let ps = builtin("su2").unwrap();
        let alg = ps.cotangent_algebroid();
        let path = integrate_base(&alg, &|_| vec![0.1, 0.0, 0.0], &[0.2, 0.1, 0.3], 64).unwrap();
        assert!(matches!(
            holonomy(&path, &so3_generators()),
            Err(PathError::NotMatrixAction(_))
        ));
    }

    #[test]
    fn trivial_homotopy_preserves_everything() {
        let (alg, _) = so3_action();
        let mut rng = SampleRng::new(6);
        let path = random_action_path(&alg, &mut rng, 256).unwrap();
        let zero =
            Homotopy::new(SmoothMap::constant(homotopy_chart(), vec![0.0; 3]), 5).unwrap();
        let out = homotopy_flow(&path, &zero, 1e-6).unwrap();
        for (p, q) in path.a_samples().iter().zip(out.path.a_samples()) {
            assert_eq!(p, q);
        }
        // the unprojected base is untouched; the reported drift is then just
        // the re-integration floor of the projection
        assert!(out.unprojected_drift <= 1e-6);
    }

    #[test]
    fn homotopy_rejects_bad_parameters_and_curved_paths() {
        let (alg, _) = so3_action();
        // non-vanishing endpoint values
        let bad = SmoothMap::constant(homotopy_chart(), vec![0.1, 0.0, 0.0]);
        assert!(matches!(
            Homotopy::new(bad, 5),
            Err(PathError::BoundaryViolated(_))
        ));
        // a path that is not flat: corrupt the fiber samples
        let mut rng = SampleRng::new(7);
        let path = random_action_path(&alg, &mut rng, 128).unwrap();
        let mut a = path.a_samples().to_vec();
        a[40][0] += 0.5;
        let broken = APath::new(alg, path.x_samples().to_vec(), a).unwrap();
        let homotopy = random_homotopy(3, &mut rng, 0.5, 5);
        assert!(matches!(
            homotopy_flow(&broken, &homotopy, 1e-6),
            Err(PathError::NotFlat { .. })
        ));
    }

    #[test]
    fn abelian_integral_is_a_homotopy_invariant() {
        // rank-1 algebra over a point: a -> a + d_t eps; the integral of a
        // over [0, 1] is preserved exactly (Simpson is exact on the cubic
        // d_t eps of the quartic bump parameter)
        let alg =
            LieAlgebroid::from_lie_algebra(crate::linalg::Tensor::zeros(&[1, 1, 1])).unwrap();
        let n = 128;
        let a: Vec<Vec<f64>> = (0..=n)
            .map(|k| vec![0.3 + 0.2 * (k as f64 / n as f64)])
            .collect();
        let x = vec![vec![0.0]; n + 1];
        let path = APath::new(alg, x, a).unwrap();
        let before: Vec<f64> = path.a_samples().iter().map(|v| v[0]).collect();
        // eps(t, s) = t^2 (1 - t)^2, a quartic bump independent of s
        let t = Expr::coord(0);
        let bump = t.clone().pow(2).mul(Expr::num(1.0).sub(t).pow(2));
        let eps = SmoothMap::from_exprs(homotopy_chart(), vec![bump]).unwrap();
        let homotopy = Homotopy::new(eps, 4).unwrap();
        let out = homotopy_flow(&path, &homotopy, 1e-6).unwrap();
        let after: Vec<f64> = out.path.a_samples().iter().map(|v| v[0]).collect();
        let defect = (simpson(&after) - simpson(&before)).abs();
        assert!(defect <= 1e-12, "invariant drift {defect}");
        // and the flow moved the samples nontrivially (the bump derivative
        // vanishes at t = 1/2, so probe the quarter point)
        assert!((after[n / 4] - before[n / 4]).abs() > 1e-3);
    }

    #[test]
    fn homotopy_preserves_holonomy_and_endpoints() {
        let (alg, gens) = so3_action();
        let mut rng = SampleRng::new(8);
        let path = random_action_path(&alg, &mut rng, 256).unwrap();
        let h0 = holonomy(&path, &gens).unwrap();
        let mut current = path;
        for _ in 0..3 {
            let homotopy = random_homotopy(3, &mut rng, 0.5, 10);
            current = homotopy_flow(&current, &homotopy, 1e-5).unwrap().path;
        }
        let h1 = holonomy(&current, &gens).unwrap();
        assert!(
            h0.distance(&h1) <= 1e-6,
            "holonomy drifted by {}",
            h0.distance(&h1)
        );
        let endpoint_drift = current
            .end()
            .iter()
            .zip(h0.endpoint.iter())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(
            endpoint_drift <= 1e-6,
            "endpoint drifted by {endpoint_drift}"
        );
        assert!(current.residual() <= 1e-5);
    }

    #[test]
    fn weinstein_experiment_aggregates_sanely() {
        let (alg, gens) = so3_action();
        let report = weinstein_experiment(&alg, &gens, 2, 3, 256, 99).unwrap();
        assert_eq!(report.trials.len(), 6);
        assert!(report.max_holonomy_drift <= 1e-6);
        assert!(report.max_endpoint_drift <= 1e-6);
        assert!(report.max_residual <= 1e-5);
    }

    #[test]
    fn distinguishable_holonomies_stay_separated() {
        let (alg, gens) = so3_action();
        let quarter = integrate_base(
            &alg,
            &|_| vec![std::f64::consts::FRAC_PI_2, 0.0, 0.0],
            &[0.0, 0.5, 0.0],
            256,
        )
        .unwrap();
        let half = integrate_base(
            &alg,
            &|_| vec![std::f64::consts::PI, 0.0, 0.0],
            &[0.0, 0.5, 0.0],
            256,
        )
        .unwrap();
        let mut rng = SampleRng::new(12);
        let hq = {
            let out =
                homotopy_flow(&quarter, &random_homotopy(3, &mut rng, 0.5, 10), 1e-6).unwrap();
            holonomy(&out.path, &gens).unwrap()
        };
        let hh = {
            let out = homotopy_flow(&half, &random_homotopy(3, &mut rng, 0.5, 10), 1e-6).unwrap();
            holonomy(&out.path, &gens).unwrap()
        };
        assert!(
            hq.distance(&hh) > 0.5,
            "holonomies collapsed: distance {}",
            hq.distance(&hh)
        );
    }

    #[test]
    fn interp_and_simpson_are_exact_on_low_degree() {
        // interp4 reproduces cubics exactly
        let n = 16;
        let samples: Vec<Vec<f64>> = (0..=n)
            .map(|k| {
                let t = k as f64 / n as f64;
                vec![1.0 - 2.0 * t + 3.0 * t * t - 0.5 * t * t * t]
            })
            .collect();
        for &t in &[0.03, 0.31, 0.5, 0.77, 0.99] {
            let v = interp4(&samples, t)[0];
            let exact = 1.0 - 2.0 * t + 3.0 * t * t - 0.5 * t * t * t;
            assert_relative_eq!(v, exact, epsilon = 1e-13);
        }
        // Simpson is exact on cubics
        let vals: Vec<f64> = (0..=n)
            .map(|k| {
                let t = k as f64 / n as f64;
                t * t * t - t
            })
            .collect();
        assert_relative_eq!(simpson(&vals), 0.25 - 0.5, epsilon = 1e-15);
    }
}
