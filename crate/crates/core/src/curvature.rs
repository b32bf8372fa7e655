//! Curvature of the lifted metric in the adapted frame.
//!
//! A family name spells out `K(A, B)C` and the component read off: the first
//! two letters are the kinds of `A = Eᵢ` and `B = Eⱼ`, the third the kind of
//! `C = Eₖ` and the last the kind of the output direction `Eₕ`, with `X`
//! horizontal (`δ/δx`) and `Y` vertical (`∂/∂y`). Each family is stored as
//! `[h, k, i, j]`, so `K(Eᵢ, Eⱼ)Eₖ = Σₕ F[h, k, i, j] Eₕ`.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, Array4};
use rayon::prelude::*;
use serde::Serialize;

use crate::base::{geometry_at, BaseGeometry, BaseModel};
use crate::connection::{coeffs_and_derivs_at, ConnectionCoeffs, ConnectionDerivs};
use crate::error::{Error, Result};
use crate::lift::{check_positivity, LiftParams, LiftedPoint, MetricBlocks, TangentPoint};
use crate::sampling::SampleSpec;
use crate::scalarfn::CoeffFn;

/// Smallest Gram determinant accepted by [`sectional_curvature`].
pub const PLANE_EPS: f64 = 1e-8;
/// Relative residual above which [`lemma1_decompose`] rejects its input.
pub const LEMMA1_SPAN_TOL: f64 = 1e-8;
/// Largest condition number of the normalized ten-term Gram matrix.
pub const LEMMA2_MAX_COND: f64 = 1e10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Family {
    Xxxx,
    Xxxy,
    Xxyx,
    Xxyy,
    Yyxx,
    Yyxy,
    Yyyx,
    Yyyy,
    Yxxx,
    Yxxy,
    Yxyx,
    Yxyy,
}

impl Family {
    pub const ALL: [Family; 12] = [
        Family::Xxxx,
        Family::Xxxy,
        Family::Xxyx,
        Family::Xxyy,
        Family::Yyxx,
        Family::Yyxy,
        Family::Yyyx,
        Family::Yyyy,
        Family::Yxxx,
        Family::Yxxy,
        Family::Yxyx,
        Family::Yxyy,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        const NAMES: [&str; 12] = [
            "XXXX", "XXXY", "XXYX", "XXYY", "YYXX", "YYXY", "YYYX", "YYYY", "YXXX", "YXXY", "YXYX", "YXYY",
        ];
        NAMES[self.index()]
    }

    /// `true` for horizontal in each of the four positions `(i, j, k, h)`.
    pub fn kinds(self) -> [bool; 4] {
        let b = self.name().as_bytes();
        [b[0] == b'X', b[1] == b'X', b[2] == b'X', b[3] == b'X']
    }

    /// Families whose two first arguments have the same kind.
    pub fn same_kind_arguments(self) -> bool {
        let k = self.kinds();
        k[0] == k[1]
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown curvature family {s:?}")))
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureComponents {
    pub families: [Array4<f64>; 12],
}

impl CurvatureComponents {
    pub fn zeros(n: usize) -> Self {
        CurvatureComponents {
            families: std::array::from_fn(|_| Array4::zeros((n, n, n, n))),
        }
    }

    pub fn dim(&self) -> usize {
        self.families[0].shape()[0]
    }

    pub fn get(&self, f: Family) -> &Array4<f64> {
        &self.families[f.index()]
    }

    /// Full `(1,3)` tensor `R[A, B, C, D]` on the `2n` adapted frame with
    /// `K(E_C, E_D)E_B = R[A, B, C, D] E_A`, horizontal slots first.
    pub fn to_frame_tensor(&self) -> Array4<f64> {
        let n = self.dim();
        let slot = |hor: bool, i: usize| if hor { i } else { n + i };
        let mut r = Array4::zeros((2 * n, 2 * n, 2 * n, 2 * n));
        for f in Family::ALL {
            let [ki, kj, kk, kh] = f.kinds();
            for ((h, k, i, j), v) in self.get(f).indexed_iter() {
                let (a, b, c, d) = (slot(kh, h), slot(kk, k), slot(ki, i), slot(kj, j));
                r[[a, b, c, d]] = *v;
                if ki != kj {
                    r[[a, b, d, c]] = -*v;
                }
            }
        }
        r
    }

    /// Inverse of [`to_frame_tensor`](Self::to_frame_tensor).
    pub fn from_frame_tensor(r: &Array4<f64>) -> Self {
        let n = r.shape()[0] / 2;
        let slot = |hor: bool, i: usize| if hor { i } else { n + i };
        CurvatureComponents {
            families: std::array::from_fn(|idx| {
                let [ki, kj, kk, kh] = Family::ALL[idx].kinds();
                Array4::from_shape_fn((n, n, n, n), |(h, k, i, j)| {
                    r[[slot(kh, h), slot(kk, k), slot(ki, i), slot(kj, j)]]
                })
            }),
        }
    }

    /// Largest absolute entry of each family.
    pub fn family_max_abs(&self) -> [f64; 12] {
        std::array::from_fn(|i| self.families[i].iter().fold(0.0f64, |m, v| m.max(v.abs())))
    }

    pub fn max_abs(&self) -> f64 {
        self.family_max_abs().into_iter().fold(0.0, f64::max)
    }
}

impl std::ops::Sub for &CurvatureComponents {
    type Output = CurvatureComponents;

    fn sub(self, rhs: &CurvatureComponents) -> CurvatureComponents {
        CurvatureComponents {
            families: std::array::from_fn(|i| &self.families[i] - &rhs.families[i]),
        }
    }
}

/// Curvature at an already assembled lifted point.
pub fn components_at(lp: &LiftedPoint) -> CurvatureComponents {
    let (c, d) = coeffs_and_derivs_at(lp);
    assemble(
        &lp.geom,
        lp.blocks.y.as_slice().expect("contiguous fiber vector"),
        &c,
        &d,
    )
}

pub fn curvature_components(
    params: &LiftParams,
    geom: &BaseGeometry,
    pt: &TangentPoint,
) -> Result<CurvatureComponents> {
    Ok(components_at(&LiftedPoint::new(params, geom, pt)?))
}

fn assemble(geom: &BaseGeometry, y: &[f64], c: &ConnectionCoeffs, d: &ConnectionDerivs) -> CurvatureComponents {
    let n = geom.dim();
    let rm = &geom.riemann;
    let r0 = Array4::from_shape_fn((n, 1, n, n), |(l, _, i, j)| {
        (0..n).map(|m| y[m] * rm[[l, m, i, j]]).sum::<f64>()
    });
    let (q, qt, p, pt, s, st) = (&c.q, &c.qt, &c.p, &c.pt, &c.s, &c.st);
    let sh = (n, n, n, n);
    // Σₗ A[l, a, b] B[h, c, l] and Σₗ A[l, a, b] B[h, l, c].
    let ab_in = |a: &ndarray::Array3<f64>, b: &ndarray::Array3<f64>, h: usize, x: usize, y: usize, z: usize| {
        (0..n).map(|l| a[[l, x, y]] * b[[h, z, l]]).sum::<f64>()
    };
    let ab_out = |a: &ndarray::Array3<f64>, b: &ndarray::Array3<f64>, h: usize, x: usize, y: usize, z: usize| {
        (0..n).map(|l| a[[l, x, y]] * b[[h, l, z]]).sum::<f64>()
    };
    let r0_with = |b: &ndarray::Array3<f64>, h: usize, k: usize, i: usize, j: usize| {
        (0..n).map(|l| r0[[l, 0, i, j]] * b[[h, l, k]]).sum::<f64>()
    };

    let xxxx = Array4::from_shape_fn(sh, |(h, k, i, j)| {
        rm[[h, k, i, j]] + d.hst[[i, h, j, k]] - d.hst[[j, h, i, k]]
            + ab_in(st, st, h, j, k, i)
            + ab_out(s, p, h, j, k, i)
            - ab_in(st, st, h, i, k, j)
            - ab_out(s, p, h, i, k, j)
            + r0_with(p, h, k, i, j)
    });
    let xxxy = Array4::from_shape_fn(sh, |(h, k, i, j)| {
        d.hs[[i, h, j, k]] - d.hs[[j, h, i, k]] + ab_in(st, s, h, j, k, i) + ab_out(s, pt, h, j, k, i)
            - ab_in(st, s, h, i, k, j)
            - ab_out(s, pt, h, i, k, j)
            + r0_with(pt, h, k, i, j)
    });
    let xxyx = Array4::from_shape_fn(sh, |(h, k, i, j)| {
        d.hp[[i, h, k, j]] - d.hp[[j, h, k, i]] + ab_in(p, st, h, k, j, i) + ab_out(pt, p, h, k, j, i)
            - ab_in(p, st, h, k, i, j)
            - ab_out(pt, p, h, k, i, j)
            + r0_with(qt, h, k, i, j)
    });
    let xxyy = Array4::from_shape_fn(sh, |(h, k, i, j)| {
        rm[[h, k, i, j]] + d.hpt[[i, h, k, j]] - d.hpt[[j, h, k, i]]
            + ab_in(p, s, h, k, j, i)
            + ab_out(pt, pt, h, k, j, i)
            - ab_in(p, s, h, k, i, j)
            - ab_out(pt, pt, h, k, i, j)
            + r0_with(q, h, k, i, j)
    });
    // Vertical-vertical families: ∂ᵢXʰⱼₖ − ∂ⱼXʰᵢₖ + Σ[Aˡⱼₖ Bʰᵢₗ + Cˡⱼₖ Dʰᵢₗ − (i↔j)].
    let vv = |dx: &Array4<f64>,
              a: &ndarray::Array3<f64>,
              b: &ndarray::Array3<f64>,
              cc: &ndarray::Array3<f64>,
              dd: &ndarray::Array3<f64>| {
        Array4::from_shape_fn(sh, |(h, k, i, j)| {
            dx[[i, h, j, k]] - dx[[j, h, i, k]] + ab_in(a, b, h, j, k, i) + ab_in(cc, dd, h, j, k, i)
                - ab_in(a, b, h, i, k, j)
                - ab_in(cc, dd, h, i, k, j)
        })
    };
    let yyxx = vv(&d.dp, p, p, pt, qt);
    let yyxy = vv(&d.dpt, p, pt, pt, q);
    let yyyx = vv(&d.dqt, qt, p, q, qt);
    let yyyy = vv(&d.dq, qt, pt, q, q);
    let yxxx = Array4::from_shape_fn(sh, |(h, k, i, j)| {
        d.dst[[i, h, j, k]] - d.hp[[j, h, i, k]] + ab_in(st, p, h, j, k, i) + ab_in(s, qt, h, j, k, i)
            - ab_in(p, st, h, i, k, j)
            - ab_out(pt, p, h, i, k, j)
    });
    let yxxy = Array4::from_shape_fn(sh, |(h, k, i, j)| {
        d.ds[[i, h, j, k]] - d.hpt[[j, h, i, k]] + ab_in(st, pt, h, j, k, i) + ab_in(s, q, h, j, k, i)
            - ab_in(p, s, h, i, k, j)
            - ab_out(pt, pt, h, i, k, j)
    });
    let yxyx = Array4::from_shape_fn(sh, |(h, k, i, j)| {
        d.dp[[i, h, k, j]] + ab_in(p, p, h, k, j, i) + ab_in(pt, qt, h, k, j, i)
            - ab_in(qt, st, h, i, k, j)
            - ab_out(q, p, h, i, k, j)
    });
    let yxyy = Array4::from_shape_fn(sh, |(h, k, i, j)| {
        d.dpt[[i, h, k, j]] + ab_in(p, pt, h, k, j, i) + ab_in(pt, q, h, k, j, i)
            - ab_in(qt, s, h, i, k, j)
            - ab_out(q, pt, h, i, k, j)
    });
    CurvatureComponents {
        families: [xxxx, xxxy, xxyx, xxyy, yyxx, yyxy, yyyx, yyyy, yxxx, yxxy, yxyx, yxyy],
    }
}

/// Components of `K₀(X, Y)Z = k[G(Y, Z)X − G(X, Z)Y]`.
pub fn k0_components(k: f64, blocks: &MetricBlocks) -> CurvatureComponents {
    let n = blocks.dim();
    let g = blocks.full();
    let m = 2 * n;
    let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    // K₀(E_C, E_D)E_B = k[G_DB E_C − G_CB E_D].
    let r = Array4::from_shape_fn((m, m, m, m), |(a, b, c, d)| {
        k * (g[(d, b)] * delta(a, c) - g[(c, b)] * delta(a, d))
    });
    CurvatureComponents::from_frame_tensor(&r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SymmetryResidual {
    /// Worst `|F[h,k,i,j] + F[h,k,j,i]|` over same-kind families.
    pub antisymmetry: f64,
    /// Worst violation of `R_ABCD = −R_BACD` and `R_ABCD = R_CDAB` for the
    /// lowered tensor, relative to its largest entry.
    pub lowered: f64,
}

impl SymmetryResidual {
    pub fn max(&self) -> f64 {
        self.antisymmetry.max(self.lowered)
    }
}

pub fn symmetry_residual(k: &CurvatureComponents, blocks: &MetricBlocks) -> SymmetryResidual {
    let mut antisymmetry = 0.0f64;
    for f in Family::ALL.into_iter().filter(|f| f.same_kind_arguments()) {
        let a = k.get(f);
        for ((h, kk, i, j), v) in a.indexed_iter() {
            antisymmetry = antisymmetry.max((v + a[[h, kk, j, i]]).abs());
        }
    }
    let r = k.to_frame_tensor();
    let g = blocks.full();
    let m = g.nrows();
    let low = Array4::from_shape_fn((m, m, m, m), |(a, b, c, d)| {
        (0..m).map(|e| g[(a, e)] * r[[e, b, c, d]]).sum::<f64>()
    });
    let scale = 1.0 + low.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let mut lowered = 0.0f64;
    for ((a, b, c, d), v) in low.indexed_iter() {
        lowered = lowered
            .max((v + low[[b, a, c, d]]).abs())
            .max((v - low[[c, d, a, b]]).abs());
    }
    SymmetryResidual {
        antisymmetry,
        lowered: lowered / scale,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residual {
    pub max_abs: f64,
    pub per_family: [f64; 12],
}

/// Elementwise `max |K − K₀|`, overall and per family.
pub fn constant_curvature_residual(k_comp: &CurvatureComponents, k: f64, blocks: &MetricBlocks) -> Residual {
    let per_family = (k_comp - &k0_components(k, blocks)).family_max_abs();
    Residual {
        max_abs: per_family.into_iter().fold(0.0, f64::max),
        per_family,
    }
}

/// `G(K(X, Y)Y, X) / (G(X, X)G(Y, Y) − G(X, Y)²)` for adapted-frame vectors.
pub fn sectional_curvature(k_comp: &CurvatureComponents, blocks: &MetricBlocks, x: &[f64], y: &[f64]) -> Result<f64> {
    let r = k_comp.to_frame_tensor();
    sectional_from_tensor(&r, &blocks.full(), x, y)
}

pub(crate) fn sectional_from_tensor(r: &Array4<f64>, g: &DMatrix<f64>, x: &[f64], y: &[f64]) -> Result<f64> {
    let m = g.nrows();
    if x.len() != m || y.len() != m {
        return Err(Error::Dimension(format!("plane vectors must have {m} components")));
    }
    let xv = DVector::from_column_slice(x);
    let yv = DVector::from_column_slice(y);
    let gxx = xv.dot(&(g * &xv));
    let gyy = yv.dot(&(g * &yv));
    let gxy = xv.dot(&(g * &yv));
    let gram = gxx * gyy - gxy * gxy;
    if !(gram > PLANE_EPS) {
        return Err(Error::DegeneratePlane(gram));
    }
    let mut kyy = DVector::zeros(m);
    for a in 0..m {
        let mut s = 0.0;
        for b in 0..m {
            for c in 0..m {
                for d in 0..m {
                    s += r[[a, b, c, d]] * y[b] * x[c] * y[d];
                }
            }
        }
        kyy[a] = s;
    }
    Ok(xv.dot(&(g * kyy)) / gram)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lemma1 {
    pub u: f64,
    pub v: f64,
    pub residual: f64,
}

/// Least-squares `S = u g + v g₀ ⊗ g₀`.
pub fn lemma1_decompose(s: &Array2<f64>, geom: &BaseGeometry, y: &[f64]) -> Result<Lemma1> {
    let n = geom.dim();
    if n < 2 {
        return Err(Error::Dimension("the two-term decomposition needs n > 1".into()));
    }
    if y.iter().all(|v| *v == 0.0) {
        return Err(Error::DegenerateBasis("g0 vanishes at y = 0"));
    }
    let g0: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|k| y[k] * geom.g[[k, i]]).sum::<f64>())
        .collect();
    let cols = [
        geom.g.iter().copied().collect::<Vec<f64>>(),
        (0..n * n).map(|a| g0[a / n] * g0[a % n]).collect(),
    ];
    let target: Vec<f64> = s.iter().copied().collect();
    let (coef, residual) = least_squares(&cols, &target, f64::INFINITY)?;
    let norm = target.iter().map(|v| v * v).sum::<f64>().sqrt();
    if residual > LEMMA1_SPAN_TOL * norm {
        return Err(Error::NotInSpan {
            residual,
            bound: LEMMA1_SPAN_TOL * norm,
        });
    }
    Ok(Lemma1 {
        u: coef[0],
        v: coef[1],
        residual,
    })
}

/// Labels of the ten basis tensors, in coefficient order.
pub const LEMMA2_BASIS: [&str; 10] = [
    "delta^h_i g_jk",
    "delta^h_j g_ik",
    "delta^h_k g_ij",
    "delta^h_k g0_i g0_j",
    "delta^h_j g0_i g0_k",
    "delta^h_i g0_j g0_k",
    "g_jk g0_i y^h",
    "g_ik g0_j y^h",
    "g_ij g0_k y^h",
    "g0_i g0_j g0_k y^h",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lemma2 {
    pub alpha: [f64; 10],
    pub residual: f64,
}

/// The ten basis tensors evaluated as `[h, k, i, j]` arrays.
pub fn lemma2_basis(geom: &BaseGeometry, y: &[f64]) -> [Array4<f64>; 10] {
    let n = geom.dim();
    let g = &geom.g;
    let g0: Vec<f64> = (0..n).map(|i| (0..n).map(|k| y[k] * g[[k, i]]).sum::<f64>()).collect();
    let dl = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    std::array::from_fn(|idx| {
        Array4::from_shape_fn((n, n, n, n), |(h, k, i, j)| match idx {
            0 => dl(h, i) * g[[j, k]],
            1 => dl(h, j) * g[[i, k]],
            2 => dl(h, k) * g[[i, j]],
            3 => dl(h, k) * g0[i] * g0[j],
            4 => dl(h, j) * g0[i] * g0[k],
            5 => dl(h, i) * g0[j] * g0[k],
            6 => g[[j, k]] * g0[i] * y[h],
            7 => g[[i, k]] * g0[j] * y[h],
            8 => g[[i, j]] * g0[k] * y[h],
            _ => g0[i] * g0[j] * g0[k] * y[h],
        })
    })
}

/// Least-squares projection of `T[h, k, i, j]` onto [`LEMMA2_BASIS`].
///
/// Conditioning is judged on the Gram matrix of the unit-normalized basis, so
/// the natural scale difference between `g` and `g₀ ⊗ g₀` at small `|y|` is
/// not mistaken for rank loss.
pub fn lemma2_decompose(t: &Array4<f64>, geom: &BaseGeometry, y: &[f64]) -> Result<Lemma2> {
    let n = geom.dim();
    if n < 3 {
        return Err(Error::Dimension(format!(
            "the ten-term decomposition needs n >= 3, got {n}"
        )));
    }
    if y.iter().all(|v| *v == 0.0) {
        return Err(Error::DegenerateBasis("g0 vanishes at y = 0"));
    }
    let cols: Vec<Vec<f64>> = lemma2_basis(geom, y)
        .iter()
        .map(|b| b.iter().copied().collect())
        .collect();
    let target: Vec<f64> = t.iter().copied().collect();
    let (coef, residual) = least_squares(&cols, &target, LEMMA2_MAX_COND)?;
    Ok(Lemma2 {
        alpha: std::array::from_fn(|i| coef[i]),
        residual,
    })
}

/// Solves `min ‖Σ cᵢ colᵢ − target‖` through the normal equations of the
/// column-normalized system. Returns coefficients and the residual norm.
fn least_squares(cols: &[Vec<f64>], target: &[f64], max_cond: f64) -> Result<(Vec<f64>, f64)> {
    let m = cols.len();
    let norms: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    if norms.iter().any(|v| *v == 0.0) {
        return Err(Error::DegenerateBasis("a basis tensor vanishes identically"));
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let gram = DMatrix::from_fn(m, m, |a, b| dot(&cols[a], &cols[b]) / (norms[a] * norms[b]));
    let rhs = DVector::from_fn(m, |a, _| dot(&cols[a], target) / norms[a]);
    let sv = gram.clone().singular_values();
    let cond = sv.max() / sv.min();
    if !(cond <= max_cond) {
        return Err(Error::RankDeficient(cond));
    }
    let sol = gram.cholesky().ok_or(Error::RankDeficient(cond))?.solve(&rhs);
    let coef: Vec<f64> = (0..m).map(|a| sol[a] / norms[a]).collect();
    let residual = target
        .iter()
        .enumerate()
        .map(|(e, v)| {
            let fit: f64 = (0..m).map(|a| coef[a] * cols[a][e]).sum::<f64>();
            (v - fit).powi(2)
        })
        .sum::<f64>()
        .sqrt();
    Ok((coef, residual))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlatnessReport {
    pub points: usize,
    pub planes: usize,
    /// Candidate `k` with the smallest worst-case residual.
    pub best_k: f64,
    /// `max |K − K₀|` over all points at `best_k`.
    pub min_residual: f64,
    /// Worst residual at `k = 0`, per family.
    pub residual_at_zero: Residual,
    pub sectional: Vec<f64>,
    pub spread: f64,
}

/// Samples points and planes, evaluates `K − K₀` for the candidate set
/// `{0} ∪ {sampled sectional curvatures}` and the spread of the samples.
/// Plane `j` is evaluated at point `j mod points`.
pub fn flatness_report(params: &LiftParams, model: &BaseModel, spec: &SampleSpec) -> Result<FlatnessReport> {
    if spec.points == 0 {
        return Err(Error::Config("flatness report needs at least one sample point".into()));
    }
    let pts = spec.tangent_points(model);
    let per_point: Vec<(CurvatureComponents, CurvatureComponents, MetricBlocks)> = pts
        .par_iter()
        .map(|pt| {
            let geom = geometry_at(model, &pt.x)?;
            let lp = LiftedPoint::new(params, &geom, pt)?;
            let unit = k0_components(1.0, &lp.blocks);
            Ok((components_at(&lp), unit, lp.blocks))
        })
        .collect::<Result<_>>()?;
    let planes = spec.planes(model.dim());
    let tensors: Vec<Array4<f64>> = per_point.par_iter().map(|(k, _, _)| k.to_frame_tensor()).collect();
    let sectional: Vec<f64> = planes
        .par_iter()
        .enumerate()
        .map(|(j, (x, y))| {
            let idx = j % per_point.len();
            sectional_from_tensor(&tensors[idx], &per_point[idx].2.full(), x, y)
        })
        .collect::<Result<_>>()?;

    let worst = |k: f64| -> Residual {
        let mut per_family = [0.0f64; 12];
        for (kc, unit, _) in &per_point {
            for f in 0..12 {
                let m = kc.families[f]
                    .iter()
                    .zip(unit.families[f].iter())
                    .fold(0.0f64, |m, (a, b)| m.max((a - k * b).abs()));
                per_family[f] = per_family[f].max(m);
            }
        }
        Residual {
            max_abs: per_family.into_iter().fold(0.0, f64::max),
            per_family,
        }
    };
    let residual_at_zero = worst(0.0);
    let (best_k, min_residual) = std::iter::once(0.0)
        .chain(sectional.iter().copied())
        .collect::<Vec<f64>>()
        .par_iter()
        .map(|&k| (k, worst(k).max_abs))
        .collect::<Vec<(f64, f64)>>()
        .into_iter()
        .fold(
            (0.0, f64::INFINITY),
            |best, cand| if cand.1 < best.1 { cand } else { best },
        );
    let (lo, hi) = sectional
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(*v), hi.max(*v))
        });
    Ok(FlatnessReport {
        points: pts.len(),
        planes: planes.len(),
        best_k,
        min_residual,
        residual_at_zero,
        spread: if sectional.is_empty() { 0.0 } else { hi - lo },
        sectional,
    })
}

/// Default range of `t` on which [`theorem4_metric`] checks positivity.
pub const THEOREM4_T_RANGE: (f64, f64) = (0.0, 8.0);
const THEOREM4_T_SAMPLES: usize = 64;

/// The lift built from `α`, `β` and a constant `c`:
/// `c₁ = c, d₁ = 0, c₂ = α, c₃ = β, d₃ = β′,
/// d₂ = (α′β² + 2α′ββ′t − 2αβ′²t)/β²`.
///
/// Positivity is checked on `(0, 8]`; `t = 0` itself is excluded since members
/// such as `α = 1 + 2t, β = 1` degenerate exactly there.
pub fn theorem4_metric(alpha: &CoeffFn, beta: &CoeffFn, c: f64) -> Result<LiftParams> {
    theorem4_metric_on(alpha, beta, c, THEOREM4_T_RANGE)
}

/// The coefficient functions of [`theorem4_metric`] without any positivity check.
pub fn theorem4_coefficients(alpha: &CoeffFn, beta: &CoeffFn, c: f64) -> Result<LiftParams> {
    let da = alpha.derivative();
    let db = beta.derivative();
    let t = CoeffFn::t();
    let beta2 = beta * beta;
    let num = &(&da * &beta2) + &(&(&(&da * beta) * &db) * &t).scale(2.0);
    let num = &num - &(&(&(alpha * &db) * &db) * &t).scale(2.0);
    let d2 = num.checked_div(&beta2)?;
    Ok(LiftParams::new(
        [CoeffFn::constant(c), alpha.clone(), beta.clone()],
        [CoeffFn::zero(), d2, db],
    ))
}

/// [`theorem4_metric`] with positivity checked on the half-open range `(lo, hi]`.
pub fn theorem4_metric_on(alpha: &CoeffFn, beta: &CoeffFn, c: f64, range: (f64, f64)) -> Result<LiftParams> {
    let params = theorem4_coefficients(alpha, beta, c)?;
    let (lo, hi) = range;
    for s in 1..=THEOREM4_T_SAMPLES {
        let t = lo + (hi - lo) * s as f64 / THEOREM4_T_SAMPLES as f64;
        check_positivity(&params.coeff_jets(t)?, t)?;
    }
    Ok(params)
}
