//! The Poisson sigma model as a cotangent-algebroid gauge theory.
//!
//! Fields are pairs `(X, eta)` on a two-dimensional source chart; packaging
//! them as a gauge field valued in the cotangent algebroid of `(M, pi)` via
//! `f = X`, `theta_(i)mu = eta_{mu i}` turns the classical equations of
//! motion into flatness: the anchor residual is
//! `r1^i_mu = d_mu X^i + pi^{ij}(X) eta_{mu j}` and the field strength is
//! `r2_{i,mu nu} = d_mu eta_{nu i} - d_nu eta_{mu i} + d_i pi^{jk}(X) eta_{mu j} eta_{nu k}`.
//! Both are computed twice: through the generic gauge operators and through
//! these component formulas directly.

use crate::algebroid::{poisson_jacobiator, AlgebroidError, LieAlgebroid};
use crate::gauge::{anchor_residual_t, field_strength_t, GaugeError, GaugeField};
use crate::linalg::{invert, Mat, Tensor};
use crate::smoothcalc::chart::Chart;
use crate::smoothcalc::map::{jacobian_t, SmoothFn, SmoothMap};
use crate::smoothcalc::scalar::Real;
use thiserror::Error;

const PSM_VALIDATION_POINTS: usize = 100;
const PSM_VALIDATION_SEED: u64 = 0x7073_6d00;

#[derive(Debug, Error)]
pub enum PsmError {
    #[error("bivector must have n*n components on its chart")]
    BivectorShape,
    #[error("bivector is not antisymmetric at {point:?}")]
    NotAntisymmetric { point: Vec<f64> },
    #[error("source chart of a sigma-model field must be two-dimensional")]
    SourceDim,
    #[error("field shapes do not match: {0}")]
    Shape(String),
    #[error("on-shell construction needs a constant invertible bivector")]
    NotSymplectic,
    #[error(transparent)]
    Gauge(#[from] GaugeError),
    #[error(transparent)]
    Algebroid(#[from] AlgebroidError),
}

/// A bivector field on a chart with its measured Jacobiator.
#[derive(Clone, Debug)]
pub struct PoissonStructure {
    name: String,
    pi: SmoothMap,
    jacobiator_max: f64,
    declared_poisson: bool,
}

impl PoissonStructure {
    pub fn new(name: &str, pi: SmoothMap, declared_poisson: bool) -> Result<Self, PsmError> {
        let n = pi.domain().dim();
        if pi.codim() != n * n {
            return Err(PsmError::BivectorShape);
        }
        let mut jacobiator_max = 0.0f64;
        for x in pi
            .domain()
            .sample_points(PSM_VALIDATION_POINTS, PSM_VALIDATION_SEED)
        {
            let p = pi.eval_t(&x);
            for i in 0..n {
                for j in 0..n {
                    if (p[i * n + j] + p[j * n + i]).abs() > 1e-12 {
                        return Err(PsmError::NotAntisymmetric { point: x });
                    }
                }
            }
            jacobiator_max = jacobiator_max.max(poisson_jacobiator(&pi, &x).max_abs());
        }
        Ok(PoissonStructure {
            name: name.to_string(),
            pi,
            jacobiator_max,
            declared_poisson,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn chart(&self) -> &Chart {
        self.pi.domain()
    }

    pub fn bivector(&self) -> &SmoothMap {
        &self.pi
    }

    /// Largest Jacobiator component seen on the validation samples.
    pub fn jacobiator_max(&self) -> f64 {
        self.jacobiator_max
    }

    /// Whether the catalog declares this structure Poisson.
    pub fn declared_poisson(&self) -> bool {
        self.declared_poisson
    }

    pub fn cotangent_algebroid(&self) -> LieAlgebroid {
        LieAlgebroid::cotangent(&self.pi).expect("bivector shape was checked")
    }
}

/// Named built-in Poisson structures (and one deliberate non-example).
pub fn builtin_models() -> Vec<PoissonStructure> {
    use crate::smoothcalc::expr::parse_expr;
    let mut out = Vec::new();

    let chart2 = Chart::cube(2, -1.0, 1.0);
    out.push(
        PoissonStructure::new(
            "sympl2",
            SmoothMap::constant(chart2.clone(), vec![0.0, 1.0, -1.0, 0.0]),
            true,
        )
        .expect("constant symplectic bivector"),
    );

    let chart3 = Chart::cube(3, -1.0, 1.0);
    let su2 = ["0", "x3", "-x2", "-x3", "0", "x1", "x2", "-x1", "0"]
        .iter()
        .map(|s| parse_expr(s, &chart3).expect("builtin expression"))
        .collect();
    out.push(
        PoissonStructure::new(
            "su2",
            SmoothMap::from_exprs(chart3.clone(), su2).expect("builtin bivector"),
            true,
        )
        .expect("linear su(2)* bivector"),
    );

    let nonpoisson = ["0", "x2", "0", "-x2", "0", "x1", "0", "-x1", "0"]
        .iter()
        .map(|s| parse_expr(s, &chart3).expect("builtin expression"))
        .collect();
    out.push(
        PoissonStructure::new(
            "nonpoisson",
            SmoothMap::from_exprs(chart3, nonpoisson).expect("builtin bivector"),
            false,
        )
        .expect("non-Poisson bivector"),
    );

    let quad = ["0", "1 + x1^2", "-(1 + x1^2)", "0"]
        .iter()
        .map(|s| parse_expr(s, &chart2).expect("builtin expression"))
        .collect();
    out.push(
        PoissonStructure::new(
            "quad2d",
            SmoothMap::from_exprs(chart2, quad).expect("builtin bivector"),
            true,
        )
        .expect("quadratic planar bivector"),
    );

    out
}

/// Look up a built-in Poisson structure by name.
pub fn builtin(name: &str) -> Option<PoissonStructure> {
    builtin_models().into_iter().find(|ps| ps.name() == name)
}

/// A sigma-model field: `X` into the Poisson chart and `eta` with components
/// `eta_{mu i}(u)` stored as `[mu*n + i]`.
#[derive(Clone, Debug)]
pub struct PsmField {
    source: Chart,
    x_map: SmoothMap,
    eta: SmoothMap,
}

impl PsmField {
    pub fn new(source: Chart, x_map: SmoothMap, eta: SmoothMap) -> Result<Self, PsmError> {
        if source.dim() != 2 {
            return Err(PsmError::SourceDim);
        }
        let n = x_map.codim();
        if x_map.domain() != &source {
            return Err(PsmError::Shape("X must live on the source chart".into()));
        }
        if eta.domain() != &source || eta.codim() != 2 * n {
            return Err(PsmError::Shape(format!(
                "eta must have m*n = {} components",
                2 * n
            )));
        }
        Ok(PsmField {
            source,
            x_map,
            eta,
        })
    }

    pub fn source(&self) -> &Chart {
        &self.source
    }

    pub fn x_map(&self) -> &SmoothMap {
        &self.x_map
    }

    pub fn eta(&self) -> &SmoothMap {
        &self.eta
    }
}

/// Repackage `(X, eta)` as a gauge field valued in the cotangent algebroid:
/// `f = X`, `theta_(i)mu = eta_{mu i}`.
pub fn as_gauge_field(ps: &PoissonStructure, field: &PsmField) -> Result<GaugeField, PsmError> {
    let n = ps.chart().dim();
    if field.x_map.codim() != n {
        return Err(PsmError::Shape("X must map into the Poisson chart".into()));
    }
    let algebroid = ps.cotangent_algebroid();
    let theta = SmoothMap::new(
        field.source.clone(),
        ThetaFromEtaFn {
            eta: field.eta.clone(),
            n,
        },
    )
    .expect("eta reindexing shapes");
    Ok(GaugeField::new(
        field.source.clone(),
        algebroid,
        field.x_map.clone(),
        theta,
    )?)
}

/// Read a gauge field back into `eta` coefficients; inverse of
/// [`as_gauge_field`] up to the index layout.
pub fn eta_of_theta(gauge: &GaugeField) -> SmoothMap {
    let n = gauge.algebroid().base().dim();
    SmoothMap::new(
        gauge.source().clone(),
        EtaFromThetaFn {
            theta: gauge.theta().clone(),
            n,
        },
    )
    .expect("theta reindexing shapes")
}

/// Equations of motion through the generic gauge operators:
/// `(anchor residual [n x m], field strength [n, m, m])` at `u`.
pub fn eom_residual(
    ps: &PoissonStructure,
    field: &PsmField,
    u: &[f64],
) -> Result<(Mat, Tensor), PsmError> {
    let gauge = as_gauge_field(ps, field)?;
    Ok((gauge.anchor_residual(u), gauge.field_strength(u)))
}

/// Equations of motion from the classical component formulas, the
/// independent second route:
/// `r1^i_mu = d_mu X^i + pi^{ij}(X) eta_{mu j}`,
/// `r2_{i,mu nu} = d_mu eta_{nu i} - d_nu eta_{mu i} + d_i pi^{jk}(X) eta_{mu j} eta_{nu k}`.
pub fn eom_residual_components(
    ps: &PoissonStructure,
    field: &PsmField,
    u: &[f64],
) -> Result<(Mat, Tensor), PsmError> {
    let n = ps.chart().dim();
    if field.x_map.codim() != n {
        return Err(PsmError::Shape("X must map into the Poisson chart".into()));
    }
    let m = 2usize;
    let xu = field.x_map.eval_t(u);
    let dx = jacobian_t(&field.x_map, u); // [i*m + mu]
    let eta = field.eta.eval_t(u); // [mu*n + i]
    let deta = jacobian_t(&field.eta, u); // [(mu*n + i)*m + nu] = d_nu eta_{mu i}
    let p = ps.pi.eval_t(&xu);
    let dp = jacobian_t(&ps.pi, &xu); // [(j*n + k)*n + i] = d_i pi^{jk}

    let mut r1 = vec![0.0; n * m];
    for i in 0..n {
        for mu in 0..m {
            let mut v = dx[i * m + mu];
            for j in 0..n {
                v += p[i * n + j] * eta[mu * n + j];
            }
            r1[i * m + mu] = v;
        }
    }
    let mut r2 = vec![0.0; n * m * m];
    for i in 0..n {
        for mu in 0..m {
            for nu in 0..m {
                let mut v = deta[(nu * n + i) * m + mu] - deta[(mu * n + i) * m + nu];
                for j in 0..n {
                    for k in 0..n {
                        v += dp[(j * n + k) * n + i] * eta[mu * n + j] * eta[nu * n + k];
                    }
                }
                r2[(i * m + mu) * m + nu] = v;
            }
        }
    }
    Ok((Mat::from_vec(n, m, r1), Tensor::from_vec(&[n, m, m], r2)))
}

/// Worst disagreement between the gauge-operator route and the component
/// formulas at `u`.
pub fn two_route_defect(
    ps: &PoissonStructure,
    field: &PsmField,
    u: &[f64],
) -> Result<f64, PsmError> {
    let gauge = as_gauge_field(ps, field)?;
    let r1_a = anchor_residual_t(&gauge, u);
    let r2_a = field_strength_t(&gauge, u);
    let (r1_b, r2_b) = eom_residual_components(ps, field, u)?;
    let mut worst = 0.0f64;
    for (a, b) in r1_a.iter().zip(r1_b.data()) {
        worst = worst.max((a - b).abs());
    }
    for (a, b) in r2_a.iter().zip(r2_b.data()) {
        worst = worst.max((a - b).abs());
    }
    Ok(worst)
}

/// For a constant invertible (symplectic) bivector, the on-shell companion
/// `eta_{mu j} = -(pi^{-1})_{ji} d_mu X^i`, which zeroes the anchor residual
/// for any smooth `X`.
pub fn symplectic_on_shell(ps: &PoissonStructure, x_map: SmoothMap) -> Result<PsmField, PsmError> {
    let n = ps.chart().dim();
    if x_map.codim() != n {
        return Err(PsmError::Shape("X must map into the Poisson chart".into()));
    }
    // constant bivector check
    let pts = ps.chart().sample_points(10, PSM_VALIDATION_SEED);
    let first = ps.pi.eval_t(&pts[0]);
    for x in &pts[1..] {
        let p = ps.pi.eval_t(x);
        if p.iter().zip(&first).any(|(a, b)| (a - b).abs() > 1e-14) {
            return Err(PsmError::NotSymplectic);
        }
    }
    let pi_inv = invert(n, &first).ok_or(PsmError::NotSymplectic)?;
    let source = x_map.domain().clone();
    let eta = SmoothMap::new(
        source.clone(),
        OnShellEtaFn {
            x_map: x_map.clone(),
            pi_inv,
            n,
        },
    )
    .expect("on-shell eta shapes");
    PsmField::new(source, x_map, eta)
}

struct ThetaFromEtaFn {
    eta: SmoothMap,
    n: usize,
}

impl SmoothFn for ThetaFromEtaFn {
    fn dim_in(&self) -> usize {
        self.eta.domain().dim()
    }
    fn dim_out(&self) -> usize {
        self.eta.codim()
    }
    fn eval<T: Real>(&self, u: &[T], out: &mut Vec<T>) {
        let m = self.eta.domain().dim();
        let eta = self.eta.eval_t(u); // [mu*n + i]
        for i in 0..self.n {
            for mu in 0..m {
                out.push(eta[mu * self.n + i]);
            }
        }
    }
}

struct EtaFromThetaFn {
    theta: SmoothMap,
    n: usize,
}

impl SmoothFn for EtaFromThetaFn {
    fn dim_in(&self) -> usize {
        self.theta.domain().dim()
    }
    fn dim_out(&self) -> usize {
        self.theta.codim()
    }
    fn eval<T: Real>(&self, u: &[T], out: &mut Vec<T>) {
        let m = self.theta.domain().dim();
        let th = self.theta.eval_t(u); // [i*m + mu]
        for mu in 0..m {
            for i in 0..self.n {
                out.push(th[i * m + mu]);
            }
        }
    }
}

struct OnShellEtaFn {
    x_map: SmoothMap,
    pi_inv: Vec<f64>,
    n: usize,
}

impl SmoothFn for OnShellEtaFn {
    fn dim_in(&self) -> usize {
        self.x_map.domain().dim()
    }
    fn dim_out(&self) -> usize {
        self.x_map.domain().dim() * self.n
    }
    fn eval<T: Real>(&self, u: &[T], out: &mut Vec<T>) {
        let n = self.n;
        let m = self.x_map.domain().dim();
        let dx = jacobian_t(&self.x_map, u); // [i*m + mu]
        for mu in 0..m {
            for j in 0..n {
                let mut acc = T::zero();
                for i in 0..n {
                    acc = acc - T::from_f64(self.pi_inv[j * n + i]) * dx[i * m + mu];
                }
                out.push(acc);
            }
        }
    }
}
