//! Base manifold `(M, g)` evaluated at a chart point.
//!
//! Every model reduces to exact jets of the metric components (value plus
//! first, second and third partial derivatives). Christoffel symbols, the
//! Riemann tensor and its covariant derivative are then assembled from those
//! jets by the usual formulas, without any finite differencing.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::str::FromStr;

use nalgebra::DMatrix;
use ndarray::{Array2, Array3, Array4, Array5};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distance kept from the poles in the polar chart of the sphere.
pub const POLE_GUARD: f64 = 0.1;

/// Polynomial in the chart coordinates, stored as `(coefficient, exponents)` terms.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiPoly {
    nvars: usize,
    terms: Vec<(f64, Vec<u32>)>,
}

impl MultiPoly {
    pub fn new(nvars: usize, terms: Vec<(f64, Vec<u32>)>) -> Result<Self> {
        for (_, e) in &terms {
            if e.len() != nvars {
                return Err(Error::Config(format!(
                    "monomial exponents {e:?} do not have {nvars} entries"
                )));
            }
        }
        Ok(MultiPoly { nvars, terms })
    }

    pub fn constant(nvars: usize, a: f64) -> Self {
        MultiPoly {
            nvars,
            terms: vec![(a, vec![0; nvars])],
        }
    }

    pub fn zero(nvars: usize) -> Self {
        MultiPoly {
            nvars,
            terms: Vec::new(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(c, e)| c * e.iter().zip(x).map(|(&k, &xi)| xi.powi(k as i32)).product::<f64>())
            .sum::<f64>()
    }

    pub fn partial(&self, var: usize) -> Self {
        let terms = self
            .terms
            .iter()
            .filter(|(_, e)| e[var] > 0)
            .map(|(c, e)| {
                let mut e2 = e.clone();
                e2[var] -= 1;
                (c * e[var] as f64, e2)
            })
            .collect();
        MultiPoly {
            nvars: self.nvars,
            terms,
        }
    }
}

/// Configuration form of a base model.
///
/// `{"kind":"euclidean","dim":n}`, `{"kind":"sphere","dim":2,"radius":r}` or
/// `{"kind":"custom-polynomial","dim":n,"entries":{"0,0":[[1.0,[0,0]]], ...}}`.
/// Custom entries are keyed `"i,j"` (zero-based, upper or lower triangle) and
/// hold monomials `[coefficient, [exponent per coordinate]]`; missing entries are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BaseSpec {
    Euclidean {
        dim: usize,
    },
    Sphere {
        dim: usize,
        radius: f64,
    },
    CustomPolynomial {
        dim: usize,
        entries: BTreeMap<String, Vec<(f64, Vec<u32>)>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        domain: Option<Vec<[f64; 2]>>,
    },
}

impl BaseSpec {
    pub fn build(&self) -> Result<BaseModel> {
        match self {
            BaseSpec::Euclidean { dim } => {
                if *dim == 0 {
                    return Err(Error::Config("euclidean base needs dim >= 1".into()));
                }
                Ok(BaseModel::Euclidean { dim: *dim })
            }
            BaseSpec::Sphere { dim, radius } => {
                if *dim != 2 {
                    return Err(Error::Config(format!(
                        "sphere base is only available in dimension 2, got {dim}"
                    )));
                }
                if !(*radius > 0.0) {
                    return Err(Error::Config(format!("sphere radius must be positive, got {radius}")));
                }
                Ok(BaseModel::Sphere { radius: *radius })
            }
            BaseSpec::CustomPolynomial { dim, entries, domain } => {
                let mut m = vec![vec![MultiPoly::zero(*dim); *dim]; *dim];
                for (key, terms) in entries {
                    let (i, j) = parse_index_pair(key, *dim)?;
                    let p = MultiPoly::new(*dim, terms.clone())?;
                    m[i][j] = p.clone();
                    m[j][i] = p;
                }
                let domain = domain.clone().unwrap_or_else(|| vec![[-1.0, 1.0]; *dim]);
                PolynomialMetric::new(*dim, m, domain).map(BaseModel::CustomPolynomial)
            }
        }
    }
}

fn parse_index_pair(key: &str, dim: usize) -> Result<(usize, usize)> {
    let bad = || Error::Config(format!("bad metric entry key {key:?} for dim {dim}"));
    let (a, b) = key.split_once(',').ok_or_else(bad)?;
    let i: usize = a.trim().parse().map_err(|_| bad())?;
    let j: usize = b.trim().parse().map_err(|_| bad())?;
    if i >= dim || j >= dim {
        return Err(bad());
    }
    Ok((i, j))
}

/// Shorthand used on the command line: `euclidean:<n>` or `sphere:2:<radius>`.
impl FromStr for BaseSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |v: &str| -> Result<f64> {
            v.parse()
                .map_err(|e| Error::Config(format!("bad number {v:?} in base {s:?}: {e}")))
        };
        match parts.as_slice() {
            ["euclidean", n] => Ok(BaseSpec::Euclidean { dim: num(n)? as usize }),
            ["sphere", n, r] => Ok(BaseSpec::Sphere {
                dim: num(n)? as usize,
                radius: num(r)?,
            }),
            ["sphere", n] => Ok(BaseSpec::Sphere {
                dim: num(n)? as usize,
                radius: 1.0,
            }),
            _ => Err(Error::Config(format!(
                "expected euclidean:<n> or sphere:2:<radius>, got {s:?}"
            ))),
        }
    }
}

/// Metric whose entries are polynomials in the chart coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialMetric {
    dim: usize,
    entries: Vec<Vec<MultiPoly>>,
    domain: Vec<[f64; 2]>,
}

impl PolynomialMetric {
    /// Builds the model and checks positive definiteness on a grid of the domain box.
    pub fn new(dim: usize, entries: Vec<Vec<MultiPoly>>, domain: Vec<[f64; 2]>) -> Result<Self> {
        if dim == 0 || entries.len() != dim || entries.iter().any(|r| r.len() != dim) {
            return Err(Error::Dimension(format!("metric entries must be {dim}x{dim}")));
        }
        if domain.len() != dim || domain.iter().any(|[lo, hi]| !(lo < hi)) {
            return Err(Error::Config(format!("domain must be {dim} intervals lo < hi")));
        }
        for i in 0..dim {
            for j in 0..dim {
                if entries[i][j] != entries[j][i] {
                    return Err(Error::Config(format!("metric entry ({i},{j}) is not symmetric")));
                }
            }
        }
        let model = PolynomialMetric { dim, entries, domain };
        let per_axis = 5usize;
        let total = per_axis.pow(dim as u32);
        for idx in 0..total {
            let mut rem = idx;
            let x: Vec<f64> = model
                .domain
                .iter()
                .map(|[lo, hi]| {
                    let k = rem % per_axis;
                    rem /= per_axis;
                    lo + (hi - lo) * k as f64 / (per_axis - 1) as f64
                })
                .collect();
            let g = model.metric(&x);
            if DMatrix::from_fn(dim, dim, |i, j| g[[i, j]]).cholesky().is_none() {
                return Err(Error::BaseMetric(x));
            }
        }
        Ok(model)
    }

    fn metric(&self, x: &[f64]) -> Array2<f64> {
        Array2::from_shape_fn((self.dim, self.dim), |(i, j)| self.entries[i][j].eval(x))
    }

    fn jets(&self, x: &[f64]) -> MetricJets {
        let n = self.dim;
        let mut jets = MetricJets::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let p = &self.entries[i][j];
                jets.g[[i, j]] = p.eval(x);
                for a in 0..n {
                    let pa = p.partial(a);
                    jets.dg[[a, i, j]] = pa.eval(x);
                    for b in 0..n {
                        let pab = pa.partial(b);
                        jets.ddg[[a, b, i, j]] = pab.eval(x);
                        for c in 0..n {
                            jets.dddg[[a, b, c, i, j]] = pab.partial(c).eval(x);
                        }
                    }
                }
            }
        }
        jets
    }
}

/// The base manifold models shipped with the engine.
#[derive(Debug, Clone, PartialEq)]
pub enum BaseModel {
    Euclidean {
        dim: usize,
    },
    /// Round 2-sphere in the polar chart `(theta, phi)`.
    Sphere {
        radius: f64,
    },
    CustomPolynomial(PolynomialMetric),
}

impl BaseModel {
    pub fn euclidean(dim: usize) -> Self {
        BaseModel::Euclidean { dim }
    }

    pub fn sphere(radius: f64) -> Self {
        BaseModel::Sphere { radius }
    }

    pub fn dim(&self) -> usize {
        match self {
            BaseModel::Euclidean { dim } => *dim,
            BaseModel::Sphere { .. } => 2,
            BaseModel::CustomPolynomial(m) => m.dim,
        }
    }

    pub fn is_flat(&self) -> bool {
        matches!(self, BaseModel::Euclidean { .. })
    }

    pub fn check_domain(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "point has {} coordinates, base has dimension {}",
                x.len(),
                self.dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::ChartDomain {
                point: x.to_vec(),
                reason: "non-finite coordinate".into(),
            });
        }
        match self {
            BaseModel::Euclidean { .. } => Ok(()),
            BaseModel::Sphere { .. } => {
                if x[0] < POLE_GUARD || x[0] > PI - POLE_GUARD {
                    Err(Error::ChartDomain {
                        point: x.to_vec(),
                        reason: format!("polar angle within {POLE_GUARD} rad of a pole"),
                    })
                } else {
                    Ok(())
                }
            }
            BaseModel::CustomPolynomial(m) => {
                for (v, [lo, hi]) in x.iter().zip(&m.domain) {
                    if v < lo || v > hi {
                        return Err(Error::ChartDomain {
                            point: x.to_vec(),
                            reason: format!("coordinate {v} outside [{lo}, {hi}]"),
                        });
                    }
                }
                Ok(())
            }
        }
    }

    /// Coordinate box used when sampling interior points.
    pub fn sample_box(&self) -> Vec<[f64; 2]> {
        match self {
            BaseModel::Euclidean { dim } => vec![[-1.0, 1.0]; *dim],
            BaseModel::Sphere { .. } => vec![[0.35, PI - 0.35], [-PI, PI]],
            BaseModel::CustomPolynomial(m) => m
                .domain
                .iter()
                .map(|[lo, hi]| {
                    let pad = 0.05 * (hi - lo);
                    [lo + pad, hi - pad]
                })
                .collect(),
        }
    }

    /// Metric components only; cheaper than [`geometry_at`].
    pub fn metric(&self, x: &[f64]) -> Result<Array2<f64>> {
        self.check_domain(x)?;
        Ok(self.jets(x).g)
    }

    fn jets(&self, x: &[f64]) -> MetricJets {
        match self {
            BaseModel::Euclidean { dim } => {
                let mut j = MetricJets::zeros(*dim);
                j.g = Array2::eye(*dim);
                j
            }
            BaseModel::Sphere { radius } => {
                let r2 = radius * radius;
                let th = x[0];
                let mut j = MetricJets::zeros(2);
                j.g[[0, 0]] = r2;
                j.g[[1, 1]] = r2 * th.sin().powi(2);
                j.dg[[0, 1, 1]] = r2 * (2.0 * th).sin();
                j.ddg[[0, 0, 1, 1]] = 2.0 * r2 * (2.0 * th).cos();
                j.dddg[[0, 0, 0, 1, 1]] = -4.0 * r2 * (2.0 * th).sin();
                j
            }
            BaseModel::CustomPolynomial(m) => m.jets(x),
        }
    }
}

#[derive(Debug, Clone)]
struct MetricJets {
    g: Array2<f64>,
    dg: Array3<f64>,
    ddg: Array4<f64>,
    dddg: Array5<f64>,
}

impl MetricJets {
    fn zeros(n: usize) -> Self {
        MetricJets {
            g: Array2::zeros((n, n)),
            dg: Array3::zeros((n, n, n)),
            ddg: Array4::zeros((n, n, n, n)),
            dddg: Array5::zeros((n, n, n, n, n)),
        }
    }
}

/// Base geometry at a point.
///
/// Index conventions: `gamma[[h, i, j]] = Γʰᵢⱼ`, `riemann[[h, k, i, j]] = Rʰₖᵢⱼ`
/// with `R(∂ᵢ, ∂ⱼ)∂ₖ = Rʰₖᵢⱼ ∂ₕ`, and `nabla_riemann[[a, h, k, i, j]] = ∇̇ₐRʰₖᵢⱼ`.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseGeometry {
    pub x: Vec<f64>,
    pub g: Array2<f64>,
    pub g_inv: Array2<f64>,
    pub gamma: Array3<f64>,
    pub riemann: Array4<f64>,
    pub nabla_riemann: Array5<f64>,
}

impl BaseGeometry {
    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    /// `R_{hkij} = g_{hl} Rˡₖᵢⱼ`.
    pub fn riemann_lowered(&self) -> Array4<f64> {
        let n = self.dim();
        Array4::from_shape_fn((n, n, n, n), |(h, k, i, j)| {
            (0..n).map(|l| self.g[[h, l]] * self.riemann[[l, k, i, j]]).sum::<f64>()
        })
    }
}

/// Geometry of `model` at chart point `x`.
pub fn geometry_at(model: &BaseModel, x: &[f64]) -> Result<BaseGeometry> {
    model.check_domain(x)?;
    let mut geom = geometry_from_jets(x, &model.jets(x))?;
    if matches!(model, BaseModel::Euclidean { .. } | BaseModel::Sphere { .. }) {
        // both models are locally symmetric
        geom.nabla_riemann.fill(0.0);
    }
    Ok(geom)
}

fn mat(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn arr(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

fn geometry_from_jets(x: &[f64], jets: &MetricJets) -> Result<BaseGeometry> {
    let n = jets.g.nrows();
    let gm = mat(&jets.g);
    let chol = gm.clone().cholesky().ok_or_else(|| Error::BaseMetric(x.to_vec()))?;
    let ginv_m = chol.inverse();
    let ginv = arr(&ginv_m);

    let dg_m: Vec<DMatrix<f64>> = (0..n)
        .map(|a| DMatrix::from_fn(n, n, |i, j| jets.dg[[a, i, j]]))
        .collect();
    let dginv: Vec<Array2<f64>> = dg_m.iter().map(|d| arr(&(-(&ginv_m * d * &ginv_m)))).collect();
    let mut ddginv = Array4::<f64>::zeros((n, n, n, n));
    for a in 0..n {
        for b in 0..n {
            let ddg_ab = DMatrix::from_fn(n, n, |i, j| jets.ddg[[a, b, i, j]]);
            let m = &ginv_m * &dg_m[a] * &ginv_m * &dg_m[b] * &ginv_m
                + &ginv_m * &dg_m[b] * &ginv_m * &dg_m[a] * &ginv_m
                - &ginv_m * ddg_ab * &ginv_m;
            for i in 0..n {
                for j in 0..n {
                    ddginv[[a, b, i, j]] = m[(i, j)];
                }
            }
        }
    }

    // Christoffel symbols of the first kind Γ_{l,ij} and their derivatives.
    let first = Array3::from_shape_fn((n, n, n), |(l, i, j)| {
        0.5 * (jets.dg[[i, l, j]] + jets.dg[[j, l, i]] - jets.dg[[l, i, j]])
    });
    let d_first = Array4::from_shape_fn((n, n, n, n), |(a, l, i, j)| {
        0.5 * (jets.ddg[[a, i, l, j]] + jets.ddg[[a, j, l, i]] - jets.ddg[[a, l, i, j]])
    });
    let dd_first = Array5::from_shape_fn((n, n, n, n, n), |(a, b, l, i, j)| {
        0.5 * (jets.dddg[[a, b, i, l, j]] + jets.dddg[[a, b, j, l, i]] - jets.dddg[[a, b, l, i, j]])
    });

    let gamma = Array3::from_shape_fn((n, n, n), |(h, i, j)| {
        (0..n).map(|l| ginv[[h, l]] * first[[l, i, j]]).sum::<f64>()
    });
    let d_gamma = Array4::from_shape_fn((n, n, n, n), |(a, h, i, j)| {
        (0..n)
            .map(|l| dginv[a][[h, l]] * first[[l, i, j]] + ginv[[h, l]] * d_first[[a, l, i, j]])
            .sum::<f64>()
    });
    let dd_gamma = Array5::from_shape_fn((n, n, n, n, n), |(a, b, h, i, j)| {
        (0..n)
            .map(|l| {
                ddginv[[a, b, h, l]] * first[[l, i, j]]
                    + dginv[a][[h, l]] * d_first[[b, l, i, j]]
                    + dginv[b][[h, l]] * d_first[[a, l, i, j]]
                    + ginv[[h, l]] * dd_first[[a, b, l, i, j]]
            })
            .sum::<f64>()
    });

    let riemann = Array4::from_shape_fn((n, n, n, n), |(h, k, i, j)| {
        let mut r = d_gamma[[i, h, j, k]] - d_gamma[[j, h, i, k]];
        for l in 0..n {
            r += gamma[[h, i, l]] * gamma[[l, j, k]] - gamma[[h, j, l]] * gamma[[l, i, k]];
        }
        r
    });
    let d_riemann = Array5::from_shape_fn((n, n, n, n, n), |(a, h, k, i, j)| {
        let mut r = dd_gamma[[a, i, h, j, k]] - dd_gamma[[a, j, h, i, k]];
        for l in 0..n {
            r += d_gamma[[a, h, i, l]] * gamma[[l, j, k]] + gamma[[h, i, l]] * d_gamma[[a, l, j, k]]
                - d_gamma[[a, h, j, l]] * gamma[[l, i, k]]
                - gamma[[h, j, l]] * d_gamma[[a, l, i, k]];
        }
        r
    });
    let nabla_riemann = Array5::from_shape_fn((n, n, n, n, n), |(a, h, k, i, j)| {
        let mut r = d_riemann[[a, h, k, i, j]];
        for l in 0..n {
            r += gamma[[h, a, l]] * riemann[[l, k, i, j]]
                - gamma[[l, a, k]] * riemann[[h, l, i, j]]
                - gamma[[l, a, i]] * riemann[[h, k, l, j]]
                - gamma[[l, a, j]] * riemann[[h, k, i, l]];
        }
        r
    });

    Ok(BaseGeometry {
        x: x.to_vec(),
        g: jets.g.clone(),
        g_inv: ginv,
        gamma,
        riemann,
        nabla_riemann,
    })
}
