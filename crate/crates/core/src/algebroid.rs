//! Lie algebroids in coordinates: anchor components `rho^i_a(x)`, structure
//! functions `C^c_{ab}(x)`, sections, low-degree forms, the differential
//! `d_A`, and numerical residuals for the axioms.
//!
//! Conventions: the bracket on sections is
//! `[e1, e2]^c = C^c_{ab} e1^a e2^b + rho^j_a e1^a d_j e2^c - rho^j_b e2^b d_j e1^c`,
//! a 2-form evaluates on a pair of basis sections as `w(e_a, e_b) = w_{ab}`
//! with no 1/2 factor, and
//! `(d_A g)_a = rho^j_a d_j g`,
//! `(d_A l)_{ab} = rho^j_a d_j l_b - rho^j_b d_j l_a - C^c_{ab} l_c`.
//! The `d_A d_A = 0` and flat-iff-morphism suites pin these conventions; if a
//! different sign for `C` is fed in, those suites fail loudly.

use crate::linalg::{epsilon3, Tensor};
use crate::smoothcalc::chart::Chart;
use crate::smoothcalc::map::{jacobian_t, SmoothFn, SmoothMap};
use crate::smoothcalc::scalar::Real;
use serde::Serialize;
use thiserror::Error;

/// Default sample count for axiom validation at construction.
pub const VALIDATION_POINTS: usize = 100;
/// Default seed for axiom validation at construction.
pub const VALIDATION_SEED: u64 = 0x414c_4742;
/// Default residual tolerance below which an algebroid counts as valid.
pub const AXIOM_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum AlgebroidError {
    #[error("anchor map must have {expected} components (n*r), found {found}")]
    AnchorShape { expected: usize, found: usize },
    #[error("structure map must have {expected} components (r^3), found {found}")]
    StructureShape { expected: usize, found: usize },
    #[error("map domain does not match the algebroid base chart")]
    WrongChart,
    #[error("section must have {expected} components, found {found}")]
    SectionShape { expected: usize, found: usize },
    #[error("form coefficient map must have {expected} components, found {found}")]
    FormShape { expected: usize, found: usize },
    #[error("d_A is only defined here on forms of degree 0 and 1")]
    DegreeUnsupported,
    #[error("structure constants must be antisymmetric in the lower indices")]
    NotAntisymmetric,
}

/// Measured axiom residuals, recorded at construction so invalid input stays
/// usable for negative tests.
#[derive(Clone, Debug, Serialize)]
pub struct AxiomReport {
    pub points: usize,
    pub seed: u64,
    /// max |C^c_{ab} + C^c_{ba}|
    pub max_antisymmetry: f64,
    /// max |rho^i_c C^c_{ab} - rho^j_a d_j rho^i_b + rho^j_b d_j rho^i_a|
    pub max_anchor_compat: f64,
    /// max over the Jacobi residual tensor
    pub max_jacobi: f64,
    pub worst_point: Vec<f64>,
}

impl AxiomReport {
    pub fn max_residual(&self) -> f64 {
        self.max_antisymmetry
            .max(self.max_anchor_compat)
            .max(self.max_jacobi)
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        self.max_residual() <= tol
    }
}

/// A rank-`r` Lie algebroid over an `n`-dimensional chart.
#[derive(Clone, Debug)]
pub struct LieAlgebroid {
    base: Chart,
    rank: usize,
    anchor: SmoothMap,
    structure: SmoothMap,
    validation: AxiomReport,
}

impl LieAlgebroid {
    /// `anchor` has `n*r` components laid out `[i*r + a] = rho^i_a`;
    /// `structure` has `r^3` components laid out `[(c*r + a)*r + b] = C^c_{ab}`.
    ///
    /// Axiom residuals are measured on seeded sample points and stored, not
    /// enforced; query them through [`validation`](Self::validation).
    pub fn new(
        base: Chart,
        rank: usize,
        anchor: SmoothMap,
        structure: SmoothMap,
    ) -> Result<Self, AlgebroidError> {
        let n = base.dim();
        if anchor.domain() != &base {
            return Err(AlgebroidError::WrongChart);
        }
        if structure.domain() != &base {
            return Err(AlgebroidError::WrongChart);
        }
        if anchor.codim() != n * rank {
            return Err(AlgebroidError::AnchorShape {
                expected: n * rank,
                found: anchor.codim(),
            });
        }
        if structure.codim() != rank * rank * rank {
            return Err(AlgebroidError::StructureShape {
                expected: rank * rank * rank,
                found: structure.codim(),
            });
        }
        let mut alg = LieAlgebroid {
            base,
            rank,
            anchor,
            structure,
            validation: AxiomReport {
                points: 0,
                seed: 0,
                max_antisymmetry: 0.0,
                max_anchor_compat: 0.0,
                max_jacobi: 0.0,
                worst_point: Vec::new(),
            },
        };
        alg.validation = alg.validate(VALIDATION_POINTS, VALIDATION_SEED);
        Ok(alg)
    }

    pub fn base(&self) -> &Chart {
        &self.base
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn anchor(&self) -> &SmoothMap {
        &self.anchor
    }

    pub fn structure(&self) -> &SmoothMap {
        &self.structure
    }

    pub fn validation(&self) -> &AxiomReport {
        &self.validation
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        self.validation.is_valid(tol)
    }

    /// Anchor components at a point, `n*r` flat.
    pub fn anchor_t<T: Real>(&self, x: &[T]) -> Vec<T> {
        self.anchor.eval_t(x)
    }

    /// Structure functions at a point, `r^3` flat.
    pub fn structure_t<T: Real>(&self, x: &[T]) -> Vec<T> {
        self.structure.eval_t(x)
    }

    /// Re-measure axiom residuals on `points` seeded samples.
    pub fn validate(&self, points: usize, seed: u64) -> AxiomReport {
        let r = self.rank;
        let mut report = AxiomReport {
            points,
            seed,
            max_antisymmetry: 0.0,
            max_anchor_compat: 0.0,
            max_jacobi: 0.0,
            worst_point: vec![f64::NAN; self.base.dim()],
        };
        let mut worst = -1.0f64;
        for x in self.base.sample_points(points, seed) {
            let c = self.structure_t(&x);
            let mut anti = 0.0f64;
            for cc in 0..r {
                for a in 0..r {
                    for b in 0..r {
                        anti = anti.max((c[(cc * r + a) * r + b] + c[(cc * r + b) * r + a]).abs());
                    }
                }
            }
            let compat = self.anchor_compat_residual(&x).max_abs();
            let jac = self.jacobi_residual(&x).max_abs();
            report.max_antisymmetry = report.max_antisymmetry.max(anti);
            report.max_anchor_compat = report.max_anchor_compat.max(compat);
            report.max_jacobi = report.max_jacobi.max(jac);
            let here = anti.max(compat).max(jac);
            if here > worst {
                worst = here;
                report.worst_point = x;
            }
        }
        report
    }

    /// Bracket of two sections.
    pub fn bracket(&self, e1: &ASection, e2: &ASection) -> ASection {
        ASection {
            comps: SmoothMap::new(
                self.base.clone(),
                BracketFn {
                    alg: self.clone(),
                    e1: e1.comps.clone(),
                    e2: e2.comps.clone(),
                },
            )
            .expect("bracket shapes already checked"),
        }
    }

    /// The algebroid differential on degrees 0 and 1.
    pub fn d_a(&self, form: &AForm) -> Result<AForm, AlgebroidError> {
        match form {
            AForm::Zero(g) => Ok(AForm::One(
                SmoothMap::new(
                    self.base.clone(),
                    DaZeroFn {
                        alg: self.clone(),
                        g: g.clone(),
                    },
                )
                .expect("d_A shapes already checked"),
            )),
            AForm::One(lam) => Ok(AForm::Two(
                SmoothMap::new(
                    self.base.clone(),
                    DaOneFn {
                        alg: self.clone(),
                        lam: lam.clone(),
                    },
                )
                .expect("d_A shapes already checked"),
            )),
            AForm::Two(_) => Err(AlgebroidError::DegreeUnsupported),
        }
    }

    /// Lie derivative along a section via the Cartan formula
    /// `L_e = i_e d_A + d_A i_e`, on degrees 0 and 1.
    pub fn lie_derivative(&self, eps: &ASection, form: &AForm) -> Result<AForm, AlgebroidError> {
        match form {
            AForm::Zero(_) => {
                let dg = match self.d_a(form)? {
                    AForm::One(m) => m,
                    _ => unreachable!(),
                };
                Ok(AForm::Zero(
                    SmoothMap::new(
                        self.base.clone(),
                        ContractOneFn {
                            eps: eps.comps.clone(),
                            one: dg,
                        },
                    )
                    .expect("contraction shapes already checked"),
                ))
            }
            AForm::One(lam) => {
                let dlam = match self.d_a(form)? {
                    AForm::Two(m) => m,
                    _ => unreachable!(),
                };
                let term1 = SmoothMap::new(
                    self.base.clone(),
                    ContractTwoFn {
                        eps: eps.comps.clone(),
                        two: dlam,
                    },
                )
                .expect("contraction shapes already checked");
                let pairing = SmoothMap::new(
                    self.base.clone(),
                    ContractOneFn {
                        eps: eps.comps.clone(),
                        one: lam.clone(),
                    },
                )
                .expect("contraction shapes already checked");
                let term2 = match self.d_a(&AForm::Zero(pairing))? {
                    AForm::One(m) => m,
                    _ => unreachable!(),
                };
                Ok(AForm::One(
                    SmoothMap::lin_comb(vec![(1.0, term1), (1.0, term2)])
                        .expect("equal shapes by construction"),
                ))
            }
            AForm::Two(_) => Err(AlgebroidError::DegreeUnsupported),
        }
    }

    /// Residual of anchor-bracket compatibility at `x`:
    /// `R^i_{ab} = rho^i_c C^c_{ab} - rho^j_a d_j rho^i_b + rho^j_b d_j rho^i_a`,
    /// shape `[n, r, r]`.
    pub fn anchor_compat_residual(&self, x: &[f64]) -> Tensor {
        let n = self.base.dim();
        let r = self.rank;
        let rho = self.anchor_t(x);
        let c = self.structure_t(x);
        // drho[(i*r + a)*n + j] = d_j rho^i_a
        let drho = jacobian_t(&self.anchor, x);
        let mut out = Tensor::zeros(&[n, r, r]);
        for i in 0..n {
            for a in 0..r {
                for b in 0..r {
                    let mut v = 0.0;
                    for cc in 0..r {
                        v += rho[i * r + cc] * c[(cc * r + a) * r + b];
                    }
                    for j in 0..n {
                        v -= rho[j * r + a] * drho[(i * r + b) * n + j];
                        v += rho[j * r + b] * drho[(i * r + a) * n + j];
                    }
                    out.set(&[i, a, b], v);
                }
            }
        }
        out
    }

    /// Jacobi residual at `x`:
    /// `J^d_{abc} = sum_{cyc(abc)} [ C^d_{ae} C^e_{bc} + rho^j_a d_j C^d_{bc} ]`,
    /// shape `[r, r, r, r]` indexed `(d, a, b, c)`.
    pub fn jacobi_residual(&self, x: &[f64]) -> Tensor {
        let n = self.base.dim();
        let r = self.rank;
        let rho = self.anchor_t(x);
        let c = self.structure_t(x);
        // dc[((d*r + a)*r + b)*n + j] = d_j C^d_{ab}
        let dc = jacobian_t(&self.structure, x);
        let mut out = Tensor::zeros(&[r, r, r, r]);
        for d in 0..r {
            for a in 0..r {
                for b in 0..r {
                    for cc in 0..r {
                        let mut v = 0.0;
                        for (p, q, s) in [(a, b, cc), (b, cc, a), (cc, a, b)] {
                            for e in 0..r {
                                v += c[(d * r + p) * r + e] * c[(e * r + q) * r + s];
                            }
                            for j in 0..n {
                                v += rho[j * r + p] * dc[((d * r + q) * r + s) * n + j];
                            }
                        }
                        out.set(&[d, a, b, cc], v);
                    }
                }
            }
        }
        out
    }

    /// Lie algebra as an algebroid over a one-dimensional dummy chart:
    /// zero anchor, constant structure functions `c[(c*r + a)*r + b]`.
    pub fn from_lie_algebra(constants: Tensor) -> Result<Self, AlgebroidError> {
        let shape = constants.shape().to_vec();
        if shape.len() != 3 || shape[0] != shape[1] || shape[1] != shape[2] {
            return Err(AlgebroidError::StructureShape {
                expected: 0,
                found: constants.data().len(),
            });
        }
        let r = shape[0];
        for c in 0..r {
            for a in 0..r {
                for b in 0..r {
                    if (constants.at(&[c, a, b]) + constants.at(&[c, b, a])).abs() > 0.0 {
                        return Err(AlgebroidError::NotAntisymmetric);
                    }
                }
            }
        }
        let base = Chart::cube(1, -1.0, 1.0);
        let anchor = SmoothMap::constant(base.clone(), vec![0.0; r]);
        let structure = SmoothMap::constant(base.clone(), constants.data().to_vec());
        LieAlgebroid::new(base, r, anchor, structure)
    }

    /// The `so(3)` Lie algebra: `C^c_{ab} = eps_{abc}`, zero anchor.
    pub fn so3() -> Self {
        let mut c = Tensor::zeros(&[3, 3, 3]);
        for cc in 0..3 {
            for a in 0..3 {
                for b in 0..3 {
                    c.set(&[cc, a, b], epsilon3(a, b, cc));
                }
            }
        }
        Self::from_lie_algebra(c).expect("so(3) constants are antisymmetric")
    }

    /// Tangent algebroid `A = TM`: identity anchor, zero structure functions.
    pub fn tangent(chart: Chart) -> Self {
        let n = chart.dim();
        let mut id = vec![0.0; n * n];
        for i in 0..n {
            id[i * n + i] = 1.0;
        }
        let anchor = SmoothMap::constant(chart.clone(), id);
        let structure = SmoothMap::constant(chart.clone(), vec![0.0; n * n * n]);
        LieAlgebroid::new(chart, n, anchor, structure).expect("tangent shapes are consistent")
    }

    /// Action algebroid: constant Lie algebra structure `constants` with the
    /// action vector fields `v` as anchor columns (`v[i*r + a] = v_a^i(x)`).
    /// The axioms hold only when `v` really is an action for `constants`;
    /// the stored validation report records whichever residuals were found.
    pub fn action(
        chart: Chart,
        constants: Tensor,
        v: SmoothMap,
    ) -> Result<Self, AlgebroidError> {
        let shape = constants.shape().to_vec();
        if shape.len() != 3 || shape[0] != shape[1] || shape[1] != shape[2] {
            return Err(AlgebroidError::StructureShape {
                expected: 0,
                found: constants.data().len(),
            });
        }
        let r = shape[0];
        let structure = SmoothMap::constant(chart.clone(), constants.data().to_vec());
        LieAlgebroid::new(chart, r, v, structure)
    }

    /// Rotations of R^3: anchor columns `v_a(x) = e_a x x` and structure
    /// constants `C^c_{ab} = -eps_{abc}` (the sign the vector-field bracket
    /// of the rotation fields forces).
    pub fn action_so3_r3(halfwidth: f64) -> Self {
        let chart = Chart::cube(3, -halfwidth, halfwidth);
        let mut c = Tensor::zeros(&[3, 3, 3]);
        for cc in 0..3 {
            for a in 0..3 {
                for b in 0..3 {
                    c.set(&[cc, a, b], -epsilon3(a, b, cc));
                }
            }
        }
        let v = SmoothMap::new(chart.clone(), So3ActionFn).expect("action field shapes");
        Self::action(chart, c, v).expect("so(3) action shapes are consistent")
    }

    /// Cotangent algebroid of a bivector: `rho^i_(j) = pi^{ji}` and
    /// `C^(k)_((i)(j)) = d_k pi^{ij}`. `pi` has `n*n` components `[i*n + j]`.
    pub fn cotangent(pi: &SmoothMap) -> Result<Self, AlgebroidError> {
        let n = pi.domain().dim();
        if pi.codim() != n * n {
            return Err(AlgebroidError::AnchorShape {
                expected: n * n,
                found: pi.codim(),
            });
        }
        let anchor = SmoothMap::new(pi.domain().clone(), CotangentAnchorFn { pi: pi.clone() })
            .expect("cotangent anchor shapes");
        let structure =
            SmoothMap::new(pi.domain().clone(), CotangentStructureFn { pi: pi.clone() })
                .expect("cotangent structure shapes");
        LieAlgebroid::new(pi.domain().clone(), n, anchor, structure)
    }
}

/// Copy of an algebroid with one flat structure-function component scaled by
/// `factor`; the deliberately broken input for mutation-sensitivity tests.
pub fn corrupt_structure(alg: &LieAlgebroid, component: usize, factor: f64) -> LieAlgebroid {
    let structure = SmoothMap::new(
        alg.base().clone(),
        ScaleComponentFn {
            inner: alg.structure().clone(),
            component,
            factor,
        },
    )
    .expect("corrupted structure keeps its shape");
    LieAlgebroid::new(
        alg.base().clone(),
        alg.rank(),
        alg.anchor().clone(),
        structure,
    )
    .expect("corrupted algebroid keeps its shapes")
}

struct ScaleComponentFn {
    inner: SmoothMap,
    component: usize,
    factor: f64,
}

impl SmoothFn for ScaleComponentFn {
    fn dim_in(&self) -> usize {
        self.inner.domain().dim()
    }
    fn dim_out(&self) -> usize {
        self.inner.codim()
    }
    fn eval<T: Real>(&self, x: &[T], out: &mut Vec<T>) {
        let mut v = self.inner.eval_t(x);
        v[self.component] = v[self.component] * T::from_f64(self.factor);
        out.extend(v);
    }
}

/// Jacobiator of a bivector field at `x`:
/// `J^{ijk} = pi^{lk} d_l pi^{ij} + pi^{li} d_l pi^{jk} + pi^{lj} d_l pi^{ki}`,
/// fully antisymmetric; zero exactly when `pi` is Poisson at `x`.
pub fn poisson_jacobiator(pi: &SmoothMap, x: &[f64]) -> Tensor {
    let n = pi.domain().dim();
    assert_eq!(pi.codim(), n * n, "bivector must be n x n on its chart");
    let p = pi.eval_t(x);
    // dp[(i*n + j)*n + l] = d_l pi^{ij}
    let dp = jacobian_t(pi, x);
    let mut out = Tensor::zeros(&[n, n, n]);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let mut v = 0.0;
                for l in 0..n {
                    v += p[l * n + k] * dp[(i * n + j) * n + l];
                    v += p[l * n + i] * dp[(j * n + k) * n + l];
                    v += p[l * n + j] * dp[(k * n + i) * n + l];
                }
                out.set(&[i, j, k], v);
            }
        }
    }
    out
}

/// A section of the algebroid: `r` component functions on the base.
#[derive(Clone, Debug)]
pub struct ASection {
    comps: SmoothMap,
}

impl ASection {
    pub fn new(alg: &LieAlgebroid, comps: SmoothMap) -> Result<Self, AlgebroidError> {
        if comps.domain() != alg.base() {
            return Err(AlgebroidError::WrongChart);
        }
        if comps.codim() != alg.rank() {
            return Err(AlgebroidError::SectionShape {
                expected: alg.rank(),
                found: comps.codim(),
            });
        }
        Ok(ASection { comps })
    }

    pub fn constant(alg: &LieAlgebroid, values: Vec<f64>) -> Result<Self, AlgebroidError> {
        Self::new(alg, SmoothMap::constant(alg.base().clone(), values))
    }

    pub fn zero(alg: &LieAlgebroid) -> Self {
        Self::constant(alg, vec![0.0; alg.rank()]).expect("zero section shapes")
    }

    pub fn comps(&self) -> &SmoothMap {
        &self.comps
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>, crate::smoothcalc::map::EvalError> {
        self.comps.eval(x)
    }
}

/// An exterior form on the algebroid, degree 0..2. Degree-2 coefficient maps
/// hold the full `r x r` matrix `[a*r + b] = w_{ab}` and are antisymmetric.
#[derive(Clone, Debug)]
pub enum AForm {
    Zero(SmoothMap),
    One(SmoothMap),
    Two(SmoothMap),
}

impl AForm {
    pub fn zero_form(alg: &LieAlgebroid, g: SmoothMap) -> Result<Self, AlgebroidError> {
        Self::check(alg, &g, 1)?;
        Ok(AForm::Zero(g))
    }

    pub fn one_form(alg: &LieAlgebroid, lam: SmoothMap) -> Result<Self, AlgebroidError> {
        Self::check(alg, &lam, alg.rank())?;
        Ok(AForm::One(lam))
    }

    pub fn two_form(alg: &LieAlgebroid, w: SmoothMap) -> Result<Self, AlgebroidError> {
        Self::check(alg, &w, alg.rank() * alg.rank())?;
        Ok(AForm::Two(w))
    }

    /// Constant basis covector `e^a`.
    pub fn basis_covector(alg: &LieAlgebroid, a: usize) -> Self {
        let mut v = vec![0.0; alg.rank()];
        v[a] = 1.0;
        AForm::One(SmoothMap::constant(alg.base().clone(), v))
    }

    fn check(alg: &LieAlgebroid, m: &SmoothMap, codim: usize) -> Result<(), AlgebroidError> {
        if m.domain() != alg.base() {
            return Err(AlgebroidError::WrongChart);
        }
        if m.codim() != codim {
            return Err(AlgebroidError::FormShape {
                expected: codim,
                found: m.codim(),
            });
        }
        Ok(())
    }

    pub fn degree(&self) -> usize {
        match self {
            AForm::Zero(_) => 0,
            AForm::One(_) => 1,
            AForm::Two(_) => 2,
        }
    }

    pub fn coeffs(&self) -> &SmoothMap {
        match self {
            AForm::Zero(m) | AForm::One(m) | AForm::Two(m) => m,
        }
    }

    /// Pointwise linear combination of forms of equal degree.
    pub fn lin_comb(terms: Vec<(f64, AForm)>) -> Result<Self, AlgebroidError> {
        let degree = terms
            .first()
            .map(|(_, f)| f.degree())
            .ok_or(AlgebroidError::DegreeUnsupported)?;
        if terms.iter().any(|(_, f)| f.degree() != degree) {
            return Err(AlgebroidError::DegreeUnsupported);
        }
        let maps = terms
            .into_iter()
            .map(|(c, f)| {
                (
                    c,
                    match f {
                        AForm::Zero(m) | AForm::One(m) | AForm::Two(m) => m,
                    },
                )
            })
            .collect();
        let combined = SmoothMap::lin_comb(maps).map_err(|_| AlgebroidError::DegreeUnsupported)?;
        Ok(match degree {
            0 => AForm::Zero(combined),
            1 => AForm::One(combined),
            _ => AForm::Two(combined),
        })
    }
}

struct BracketFn {
    alg: LieAlgebroid,
    e1: SmoothMap,
    e2: SmoothMap,
}

impl SmoothFn for BracketFn {
    fn dim_in(&self) -> usize {
        self.alg.base().dim()
    }
    fn dim_out(&self) -> usize {
        self.alg.rank()
    }
    fn eval<T: Real>(&self, x: &[T], out: &mut Vec<T>) {
        let n = self.alg.base().dim();
        let r = self.alg.rank();
        let rho = self.alg.anchor_t(x);
        let c = self.alg.structure_t(x);
        let v1 = self.e1.eval_t(x);
        let v2 = self.e2.eval_t(x);
        let j1 = jacobian_t(&self.e1, x); // [c*n + j] = d_j e1^c
        let j2 = jacobian_t(&self.e2, x);
        for cc in 0..r {
            let mut acc = T::zero();
            for a in 0..r {
                for b in 0..r {
                    acc = acc + c[(cc * r + a) * r + b] * v1[a] * v2[b];
                }
            }
            for j in 0..n {
                for a in 0..r {
                    acc = acc + rho[j * r + a] * v1[a] * j2[cc * n + j];
                }
                for b in 0..r {
                    acc = acc - rho[j * r + b] * v2[b] * j1[cc * n + j];
                }
            }
            out.push(acc);
        }
    }
}

struct DaZeroFn {
    alg: LieAlgebroid,
    g: SmoothMap,
}

impl SmoothFn for DaZeroFn {
    fn dim_in(&self) -> usize {
        self.alg.base().dim()
    }
    fn dim_out(&self) -> usize {
        self.alg.rank()
    }
    fn eval<T: Real>(&self, x: &[T], out: &mut Vec<T>) {
        let n = self.alg.base().dim();
        let r = self.alg.rank();
        let rho = self.alg.anchor_t(x);
        let dg = jacobian_t(&self.g, x); // [0*n + j] = d_j g
        for a in 0..r {
            let mut acc = T::zero();
            for j in 0..n {
                acc = acc + rho[j * r + a] * dg[j];
            }
            out.push(acc);
        }
    }
}

struct DaOneFn {
    alg: LieAlgebroid,
    lam: SmoothMap,
}

impl SmoothFn for DaOneFn {
    fn dim_in(&self) -> usize {
        self.alg.base().dim()
    }
    fn dim_out(&self) -> usize {
        self.alg.rank() * self.alg.rank()
    }
    fn eval<T: Real>(&self, x: &[T], out: &mut Vec<T>) {
        let n = self.alg.base().dim();
        let r = self.alg.rank();
        let rho = self.alg.anchor_t(x);
        let c = self.alg.structure_t(x);
        let lam = self.lam.eval_t(x);
        let dl = jacobian_t(&self.lam, x); // [b*n + j] = d_j lam_b
        for a in 0..r {
            for b in 0..r {
                let mut acc = T::zero();
                for j in 0..n {
                    acc = acc + rho[j * r + a] * dl[b * n + j];
                    acc = acc - rho[j * r + b] * dl[a * n + j];
                }
                for cc in 0..r {
                    acc = acc - c[(cc * r + a) * r + b] * lam[cc];
                }
                out.push(acc);
            }
        }
    }
}

struct ContractOneFn {
    eps: SmoothMap,
    one: SmoothMap,
}

impl SmoothFn for ContractOneFn {
    fn dim_in(&self) -> usize {
        self.eps.domain().dim()
    }
    fn dim_out(&self) -> usize {
        1
    }
    fn eval<T: Real>(&self, x: &[T], out: &mut Vec<T>) {
        let e = self.eps.eval_t(x);
        let l = self.one.eval_t(x);
        let mut acc = T::zero();
        for (a, b) in e.iter().zip(&l) {
            acc = acc + *a * *b;
        }
        out.push(acc);
    }
}

struct ContractTwoFn {
    eps: SmoothMap,
    two: SmoothMap,
}

impl SmoothFn for ContractTwoFn {
    fn dim_in(&self) -> usize {
        self.eps.domain().dim()
    }
    fn dim_out(&self) -> usize {
        self.eps.codim()
    }
    fn eval<T: Real>(&self, x: &[T], out: &mut Vec<T>) {
        let r = self.eps.codim();
        let e = self.eps.eval_t(x);
        let w = self.two.eval_t(x);
        for b in 0..r {
            let mut acc = T::zero();
            for a in 0..r {
                acc = acc + e[a] * w[a * r + b];
            }
            out.push(acc);
        }
    }
}

struct So3ActionFn;

impl SmoothFn for So3ActionFn {
    fn dim_in(&self) -> usize {
        3
    }
    fn dim_out(&self) -> usize {
        9
    }
    fn eval<T: Real>(&self, x: &[T], out: &mut Vec<T>) {
        // v_a(x) = e_a x x, laid out [i*3 + a]
        let hat = crate::linalg::so3_generators();
        for i in 0..3 {
            for a in 0..3 {
                let mut acc = T::zero();
                for k in 0..3 {
                    acc = acc + T::from_f64(hat[a][i * 3 + k]) * x[k];
                }
                out.push(acc);
            }
        }
    }
}

struct CotangentAnchorFn {
    pi: SmoothMap,
}

impl SmoothFn for CotangentAnchorFn {
    fn dim_in(&self) -> usize {
        self.pi.domain().dim()
    }
    fn dim_out(&self) -> usize {
        self.pi.codim()
    }
    fn eval<T: Real>(&self, x: &[T], out: &mut Vec<T>) {
        let n = self.pi.domain().dim();
        let p = self.pi.eval_t(x);
        // rho^i_(j) = pi^{ji}
        for i in 0..n {
            for j in 0..n {
                out.push(p[j * n + i]);
            }
        }
    }
}

struct CotangentStructureFn {
    pi: SmoothMap,
}

impl SmoothFn for CotangentStructureFn {
    fn dim_in(&self) -> usize {
        self.pi.domain().dim()
    }
    fn dim_out(&self) -> usize {
        let n = self.pi.domain().dim();
        n * n * n
    }
    fn eval<T: Real>(&self, x: &[T], out: &mut Vec<T>) {
        let n = self.pi.domain().dim();
        // dp[(a*n + b)*n + k] = d_k pi^{ab};  C^(k)_((a)(b)) = d_k pi^{ab}
        let dp = jacobian_t(&self.pi, x);
        for k in 0..n {
            for a in 0..n {
                for b in 0..n {
                    out.push(dp[(a * n + b) * n + k]);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smoothcalc::chart::SampleRng;
    use crate::smoothcalc::expr::parse_expr;
    use crate::smoothcalc::randexpr::random_trig_map;
    use approx::assert_relative_eq;

    fn expr_map(chart: &Chart, sources: &[&str]) -> SmoothMap {
        let exprs = sources
            .iter()
            .map(|s| parse_expr(s, chart).unwrap())
            .collect();
        SmoothMap::from_exprs(chart.clone(), exprs).unwrap()
    }

    /// su(2)* Lie-Poisson bivector pi^{ij} = eps_{ijk} x_k on R^3.
    fn su2_pi() -> SmoothMap {
        let chart = Chart::cube(3, -1.0, 1.0);
        expr_map(
            &chart,
            &["0", "x3", "-x2", "-x3", "0", "x1", "x2", "-x1", "0"],
        )
    }

    /// Non-Poisson bivector pi^{12} = x2, pi^{23} = x1, pi^{13} = 0.
    fn nonpoisson_pi() -> SmoothMap {
        let chart = Chart::cube(3, -1.0, 1.0);
        expr_map(&chart, &["0", "x2", "0", "-x2", "0", "x1", "0", "-x1", "0"])
    }

    fn sympl2_pi() -> SmoothMap {
        let chart = Chart::cube(2, -1.0, 1.0);
        SmoothMap::constant(chart, vec![0.0, 1.0, -1.0, 0.0])
    }

    #[test]
    fn lie_algebra_bracket_of_basis_sections() {
        let a = LieAlgebroid::so3();
        let e0 = ASection::constant(&a, vec![1.0, 0.0, 0.0]).unwrap();
        let e1 = ASection::constant(&a, vec![0.0, 1.0, 0.0]).unwrap();
        let br = a.bracket(&e0, &e1);
        let v = br.eval(&[0.2]).unwrap();
        // [e_0, e_1]^c = C^c_{01} = eps_{01c}
        assert_relative_eq!(v[0], 0.0);
        assert_relative_eq!(v[1], 0.0);
        assert_relative_eq!(v[2], 1.0);
    }

    #[test]
    fn bracket_is_antisymmetric_pointwise() {
        let a = LieAlgebroid::cotangent(&su2_pi()).unwrap();
        let mut rng = SampleRng::new(3);
        let e1 = ASection::new(&a, random_trig_map(a.base(), 3, &mut rng, 1.0)).unwrap();
        let e2 = ASection::new(&a, random_trig_map(a.base(), 3, &mut rng, 1.0)).unwrap();
        let b12 = a.bracket(&e1, &e2);
        let b21 = a.bracket(&e2, &e1);
        let self_bracket = a.bracket(&e1, &e1);
        for x in a.base().sample_points(50, 7) {
            let u = b12.eval(&x).unwrap();
            let v = b21.eval(&x).unwrap();
            let w = self_bracket.eval(&x).unwrap();
            for c in 0..3 {
                assert!((u[c] + v[c]).abs() <= 1e-12);
                assert!(w[c].abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn tangent_bracket_is_vector_field_bracket() {
        // e1 = x2 d_1, e2 = d_2 on R^2: [e1, e2] = -d_1
        let chart = Chart::cube(2, -1.0, 1.0);
        let a = LieAlgebroid::tangent(chart.clone());
        let e1 = ASection::new(&a, expr_map(&chart, &["x2", "0"])).unwrap();
        let e2 = ASection::new(&a, expr_map(&chart, &["0", "1"])).unwrap();
        let br = a.bracket(&e1, &e2);
        for x in chart.sample_points(20, 1) {
            let v = br.eval(&x).unwrap();
            assert_relative_eq!(v[0], -1.0, epsilon = 1e-14);
            assert_relative_eq!(v[1], 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn bracket_satisfies_leibniz_rule() {
        // [e1, g e2] = g [e1, e2] + (rho(e1) g) e2
        struct ScaledFn {
            g: SmoothMap,
            sec: SmoothMap,
        }
        impl SmoothFn for ScaledFn {
            fn dim_in(&self) -> usize {
                self.sec.domain().dim()
            }
            fn dim_out(&self) -> usize {
                self.sec.codim()
            }
            fn eval<T: Real>(&self, x: &[T], out: &mut Vec<T>) {
                let gv = self.g.eval_t(x)[0];
                out.extend(self.sec.eval_t(x).into_iter().map(|v| gv * v));
            }
        }

        let a = LieAlgebroid::cotangent(&su2_pi()).unwrap();
        let mut rng = SampleRng::new(21);
        let e1 = ASection::new(&a, random_trig_map(a.base(), 3, &mut rng, 1.0)).unwrap();
        let e2 = ASection::new(&a, random_trig_map(a.base(), 3, &mut rng, 1.0)).unwrap();
        let g = random_trig_map(a.base(), 1, &mut rng, 1.0);
        let ge2 = ASection::new(
            &a,
            SmoothMap::new(
                a.base().clone(),
                ScaledFn {
                    g: g.clone(),
                    sec: e2.comps().clone(),
                },
            )
            .unwrap(),
        )
        .unwrap();

        let lhs = a.bracket(&e1, &ge2);
        let bracket12 = a.bracket(&e1, &e2);
        let rho_e1_g = a
            .lie_derivative(&e1, &AForm::zero_form(&a, g.clone()).unwrap())
            .unwrap();
        for x in a.base().sample_points(50, 8) {
            let l = lhs.eval(&x).unwrap();
            let b = bracket12.eval(&x).unwrap();
            let gv = g.eval(&x).unwrap()[0];
            let dg = rho_e1_g.coeffs().eval(&x).unwrap()[0];
            let e2v = e2.eval(&x).unwrap();
            for c in 0..3 {
                let rhs = gv * b[c] + dg * e2v[c];
                assert!(
                    (l[c] - rhs).abs() <= 1e-10,
                    "Leibniz defect {} at {x:?}",
                    l[c] - rhs
                );
            }
        }
    }

    #[test]
    fn d_a_of_constant_is_zero() {
        let a = LieAlgebroid::cotangent(&su2_pi()).unwrap();
        let g = AForm::zero_form(&a, SmoothMap::constant(a.base().clone(), vec![2.5])).unwrap();
        let dg = a.d_a(&g).unwrap();
        for x in a.base().sample_points(20, 2) {
            for v in dg.coeffs().eval(&x).unwrap() {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn d_a_on_so3_basis_covector() {
        // (d_A e^0)_{ab} = -C^0_{ab} = -eps_{ab0}; entry (a,b) = (1,2) gives -1
        let a = LieAlgebroid::so3();
        let lam = AForm::basis_covector(&a, 0);
        let dlam = a.d_a(&lam).unwrap();
        let w = dlam.coeffs().eval(&[0.1]).unwrap();
        assert_relative_eq!(w[1 * 3 + 2], -1.0);
        assert_relative_eq!(w[2 * 3 + 1], 1.0);
        assert_relative_eq!(w[0 * 3 + 1], 0.0);
        assert_relative_eq!(w[0 * 3 + 2], 0.0);
    }

    #[test]
    fn d_a_squared_vanishes_on_valid_models() {
        let models: Vec<LieAlgebroid> = vec![
            LieAlgebroid::tangent(Chart::cube(2, -1.0, 1.0)),
            LieAlgebroid::so3(),
            LieAlgebroid::action_so3_r3(2.0),
            LieAlgebroid::cotangent(&sympl2_pi()).unwrap(),
            LieAlgebroid::cotangent(&su2_pi()).unwrap(),
        ];
        for a in &models {
            let mut rng = SampleRng::new(13);
            let g = AForm::zero_form(&a, random_trig_map(a.base(), 1, &mut rng, 1.0)).unwrap();
            let ddg = a.d_a(&a.d_a(&g).unwrap()).unwrap();
            // also run a degree-0 input built by pairing a 1-form with a section
            let lam = random_trig_map(a.base(), a.rank(), &mut rng, 1.0);
            let eps = ASection::new(&a, random_trig_map(a.base(), a.rank(), &mut rng, 1.0)).unwrap();
            let pairing = a
                .lie_derivative(&eps, &AForm::one_form(&a, lam).unwrap())
                .unwrap();
            let paired_zero = AForm::Zero(
                SmoothMap::new(
                    a.base().clone(),
                    ContractOneFn {
                        eps: eps.comps().clone(),
                        one: pairing.coeffs().clone(),
                    },
                )
                .unwrap(),
            );
            let ddp = a.d_a(&a.d_a(&paired_zero).unwrap()).unwrap();
            for x in a.base().sample_points(100, 17) {
                let w = ddg.coeffs().eval(&x).unwrap();
                let worst = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                assert!(worst <= 1e-10, "d_A^2 residual {worst} at {x:?}");
                let w2 = ddp.coeffs().eval(&x).unwrap();
                let worst2 = w2.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                assert!(worst2 <= 1e-10, "paired d_A^2 residual {worst2} at {x:?}");
            }
        }
    }

    #[test]
    fn d_a_squared_detects_corrupted_structure() {
        let a = LieAlgebroid::cotangent(&su2_pi()).unwrap();
        // component (c, a, b) = (2, 0, 1): C^2_{01} = eps_{012} = 1, a live entry
        let bad = corrupt_structure(&a, (2 * 3 + 0) * 3 + 1, 1.1);
        let mut rng = SampleRng::new(19);
        let g = AForm::zero_form(&bad, random_trig_map(bad.base(), 1, &mut rng, 1.0)).unwrap();
        let ddg = bad.d_a(&bad.d_a(&g).unwrap()).unwrap();
        let mut worst = 0.0f64;
        for x in bad.base().sample_points(100, 23) {
            let w = ddg.coeffs().eval(&x).unwrap();
            worst = worst.max(w.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        }
        assert!(worst > 1e-3, "corruption went unnoticed: d_A^2 max {worst}");
    }

    #[test]
    fn d_a_rejects_two_forms() {
        let a = LieAlgebroid::so3();
        let w = AForm::two_form(&a, SmoothMap::constant(a.base().clone(), vec![0.0; 9])).unwrap();
        assert!(matches!(
            a.d_a(&w).unwrap_err(),
            AlgebroidError::DegreeUnsupported
        ));
    }

    #[test]
    fn anchor_compat_zero_for_lie_algebras_and_poisson() {
        let so3 = LieAlgebroid::so3();
        for x in so3.base().sample_points(20, 3) {
            assert_eq!(so3.anchor_compat_residual(&x).max_abs(), 0.0);
        }
        let cot = LieAlgebroid::cotangent(&su2_pi()).unwrap();
        for x in cot.base().sample_points(100, 4) {
            assert!(cot.anchor_compat_residual(&x).max_abs() <= 1e-12);
        }
    }

    #[test]
    fn anchor_compat_detects_corruption() {
        let cot = LieAlgebroid::cotangent(&su2_pi()).unwrap();
        let bad = corrupt_structure(&cot, (0 * 3 + 1) * 3 + 2, 1.1);
        let x = bad.base().sample_points(1, 99)[0].clone();
        assert!(
            bad.anchor_compat_residual(&x).max_abs() > 1e-3,
            "corrupted anchor compatibility not flagged"
        );
    }

    #[test]
    fn jacobi_residual_exact_zero_for_so3() {
        let a = LieAlgebroid::so3();
        for x in a.base().sample_points(20, 5) {
            assert_eq!(a.jacobi_residual(&x).max_abs(), 0.0);
        }
    }

    #[test]
    fn jacobi_residual_small_for_poisson_cotangents() {
        for pi in [sympl2_pi(), su2_pi()] {
            let a = LieAlgebroid::cotangent(&pi).unwrap();
            for x in a.base().sample_points(100, 6) {
                assert!(a.jacobi_residual(&x).max_abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn jacobi_residual_matches_bracket_jacobiator_oracle() {
        // Independent route: cyclic sum of nested brackets of basis sections.
        let a = LieAlgebroid::cotangent(&nonpoisson_pi()).unwrap();
        let r = a.rank();
        let basis: Vec<ASection> = (0..r)
            .map(|k| {
                let mut v = vec![0.0; r];
                v[k] = 1.0;
                ASection::constant(&a, v).unwrap()
            })
            .collect();
        for x in a.base().sample_points(25, 31) {
            let res = a.jacobi_residual(&x);
            for p in 0..r {
                for q in 0..r {
                    for s in 0..r {
                        let mut cyc = vec![0.0; r];
                        for (i, j, k) in [(p, q, s), (q, s, p), (s, p, q)] {
                            let nested = a.bracket(&basis[i], &a.bracket(&basis[j], &basis[k]));
                            for (acc, v) in cyc.iter_mut().zip(nested.eval(&x).unwrap()) {
                                *acc += v;
                            }
                        }
                        for d in 0..r {
                            assert!(
                                (res.at(&[d, p, q, s]) - cyc[d]).abs() <= 1e-10,
                                "jacobi residual disagrees with bracket oracle at {x:?}"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn nonpoisson_jacobiator_value_is_one() {
        let pi = nonpoisson_pi();
        let j = poisson_jacobiator(&pi, &[1.0, 0.0, 0.0]);
        assert_relative_eq!(j.at(&[0, 1, 2]), 1.0, epsilon = 1e-12);
        // J^{123} = x1 everywhere
        for x in pi.domain().sample_points(50, 12) {
            assert!((poisson_jacobiator(&pi, &x).at(&[0, 1, 2]) - x[0]).abs() <= 1e-12);
        }
        // The cotangent Jacobi residual is the (negated) gradient of the
        // bivector Jacobiator in these conventions: J^d_{abc} = -d_d J^{abc}.
        let a = LieAlgebroid::cotangent(&pi).unwrap();
        for x in pi.domain().sample_points(20, 13) {
            let res = a.jacobi_residual(&x);
            assert_relative_eq!(res.at(&[0, 0, 1, 2]), -1.0, epsilon = 1e-12);
            assert_relative_eq!(res.max_abs(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn poisson_jacobiator_zero_cases() {
        let sympl = sympl2_pi();
        for x in sympl.domain().sample_points(20, 14) {
            assert_eq!(poisson_jacobiator(&sympl, &x).max_abs(), 0.0);
        }
        let su2 = su2_pi();
        for x in su2.domain().sample_points(100, 15) {
            assert!(poisson_jacobiator(&su2, &x).max_abs() <= 1e-13);
        }
    }

    #[test]
    fn lie_derivative_examples() {
        // tangent algebroid: directional derivative
        let chart = Chart::cube(2, -1.0, 1.0);
        let tan = LieAlgebroid::tangent(chart.clone());
        let e1 = ASection::new(&tan, expr_map(&chart, &["1", "0"])).unwrap();
        let g = AForm::zero_form(&tan, expr_map(&chart, &["x1"])).unwrap();
        let lg = tan.lie_derivative(&e1, &g).unwrap();
        for x in chart.sample_points(10, 16) {
            assert_relative_eq!(lg.coeffs().eval(&x).unwrap()[0], 1.0, epsilon = 1e-14);
        }

        // zero section annihilates
        let a = LieAlgebroid::cotangent(&su2_pi()).unwrap();
        let zero = ASection::zero(&a);
        let mut rng = SampleRng::new(77);
        let lam = AForm::one_form(&a, random_trig_map(a.base(), 3, &mut rng, 1.0)).unwrap();
        let llam = a.lie_derivative(&zero, &lam).unwrap();
        for x in a.base().sample_points(10, 18) {
            for v in llam.coeffs().eval(&x).unwrap() {
                assert!(v.abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn lie_derivative_matches_coadjoint_flow_oracle() {
        // so(3): L_e0 e^1 against a central difference of the transported
        // covector lambda(t) = lambda . exp(t ad_e0), exp by Rodrigues.
        use crate::linalg::{mat3_transpose, mat3_vec, so3_exp};
        let a = LieAlgebroid::so3();
        let eps = ASection::constant(&a, vec![1.0, 0.0, 0.0]).unwrap();
        let lam = AForm::basis_covector(&a, 1);
        let l = a.lie_derivative(&eps, &lam).unwrap();
        let got = l.coeffs().eval(&[0.0]).unwrap();

        let t = 1e-5;
        let lam0 = [0.0, 1.0, 0.0];
        let transported = |t: f64| -> [f64; 3] {
            // row vector times matrix = matrix transpose times column vector
            let m = so3_exp(&[t, 0.0, 0.0]);
            mat3_vec(&mat3_transpose(&m), &lam0)
        };
        let plus = transported(t);
        let minus = transported(-t);
        for b in 0..3 {
            let fd = -(plus[b] - minus[b]) / (2.0 * t);
            assert!(
                (got[b] - fd).abs() <= 1e-8,
                "component {b}: lie_derivative {} vs coadjoint oracle {fd}",
                got[b]
            );
        }
        // spec value: L_{e0} e^1 = +e^2 in this convention
        assert_relative_eq!(got[2], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn constructors_produce_expected_coordinates() {
        let chart = Chart::cube(2, -1.0, 1.0);
        let tan = LieAlgebroid::tangent(chart.clone());
        let x = vec![0.3, -0.4];
        let rho = tan.anchor_t(&x);
        assert_eq!(rho, vec![1.0, 0.0, 0.0, 1.0]);
        assert!(tan.structure_t(&x).iter().all(|&v| v == 0.0));

        // cotangent su(2)*: C^(k)_((i)(j)) = eps_{ijk}, rho^i_(j) = eps_{jik} x_k
        let cot = LieAlgebroid::cotangent(&su2_pi()).unwrap();
        let x = vec![0.2, -0.7, 0.4];
        let c = cot.structure_t(&x);
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    assert_relative_eq!(c[(k * 3 + i) * 3 + j], epsilon3(i, j, k), epsilon = 1e-14);
                }
            }
        }
        let rho = cot.anchor_t(&x);
        for i in 0..3 {
            for j in 0..3 {
                let mut expect = 0.0;
                for k in 0..3 {
                    expect += epsilon3(j, i, k) * x[k];
                }
                assert_relative_eq!(rho[i * 3 + j], expect, epsilon = 1e-14);
            }
        }

        // action algebroid passes the axioms
        let act = LieAlgebroid::action_so3_r3(2.0);
        assert!(act.validation().max_residual() <= 1e-12);
    }

    #[test]
    fn validation_classifies_builtins() {
        assert!(LieAlgebroid::so3().is_valid(AXIOM_TOL));
        assert!(LieAlgebroid::tangent(Chart::cube(2, -1.0, 1.0)).is_valid(AXIOM_TOL));
        assert!(LieAlgebroid::cotangent(&su2_pi()).unwrap().is_valid(AXIOM_TOL));
        let bad = LieAlgebroid::cotangent(&nonpoisson_pi()).unwrap();
        assert!(!bad.is_valid(AXIOM_TOL));
        assert!(bad.validation().max_jacobi > 0.5);
    }
}
