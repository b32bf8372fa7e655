//! Levi-Civita connection of the lifted metric in the adapted frame.
//!
//! Every coefficient family has the shape `Xʰᵢⱼ = aᵢⱼₖ Hₐᵏʰ + bᵢⱼₖ Hᵦᵏʰ`:
//!
//! | family | a | b | Hₐ | Hᵦ |
//! |---|---|---|---|---|
//! | Q  | ½(∂ᵢG²ⱼₖ + ∂ⱼG²ᵢₖ − ∂ₖG²ᵢⱼ) | ½(∂ᵢG³ⱼₖ + ∂ⱼG³ᵢₖ) | H₂ | H₃ |
//! | Q̃  | same | same | H₃ | H₁ |
//! | P  | ½(∂ᵢG³ⱼₖ − ∂ₖG³ᵢⱼ) | ½(∂ᵢG¹ⱼₖ + Rˡ₀ⱼₖG²ₗᵢ) | H₃ | H₁ |
//! | P̃  | same | same | H₂ | H₃ |
//! | S  | −½(∂ₖG¹ᵢⱼ + Rˡ₀ᵢⱼG²ₗₖ) | c₃Rᵢ₀ⱼₖ | H₂ | H₃ |
//! | S̃  | same | same | H₃ | H₁ |
//!
//! with `Rˡ₀ⱼₖ = yᵐRˡₘⱼₖ` and `Rᵢ₀ⱼₖ = gᵢₗRˡ₀ⱼₖ`. Arrays are indexed
//! `[h, i, j]` for `Xʰᵢⱼ`.

use ndarray::{Array2, Array3, Array4};

use crate::base::{geometry_at, BaseGeometry, BaseModel};
use crate::error::Result;
use crate::lift::{metric_blocks, LiftParams, LiftedPoint, TangentPoint};

#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionCoeffs {
    pub q: Array3<f64>,
    pub qt: Array3<f64>,
    pub p: Array3<f64>,
    pub pt: Array3<f64>,
    pub s: Array3<f64>,
    pub st: Array3<f64>,
    /// Base Christoffel symbols `Γʰᵢⱼ`.
    pub gamma: Array3<f64>,
}

impl ConnectionCoeffs {
    pub fn dim(&self) -> usize {
        self.gamma.shape()[0]
    }
}

/// Fiber derivatives `∂ᵢXʰⱼₖ` stored as `[i, h, j, k]`, and horizontal covariant
/// derivatives `∇̇ₘXʰⱼₖ` stored as `[m, h, j, k]`.
///
/// The horizontal derivatives of `Q` and `Q̃` vanish identically (they are
/// built from `g`, `y` and `t` only) and are not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionDerivs {
    pub dq: Array4<f64>,
    pub dqt: Array4<f64>,
    pub dp: Array4<f64>,
    pub dpt: Array4<f64>,
    pub ds: Array4<f64>,
    pub dst: Array4<f64>,
    pub hp: Array4<f64>,
    pub hpt: Array4<f64>,
    pub hs: Array4<f64>,
    pub hst: Array4<f64>,
}

/// `a`, `b` factors of one row of the table, with their fiber derivatives
/// `[m, i, j, k]` and horizontal covariant derivatives `[m, i, j, k]`.
struct Factors {
    a: Array3<f64>,
    b: Array3<f64>,
    da: Array4<f64>,
    db: Array4<f64>,
    ha: Array4<f64>,
    hb: Array4<f64>,
}

/// `Rˡ₀ⱼₖ` as `[l, j, k]`.
fn r0(geom: &BaseGeometry, y: &[f64]) -> Array3<f64> {
    let n = geom.dim();
    Array3::from_shape_fn((n, n, n), |(l, j, k)| {
        (0..n).map(|m| y[m] * geom.riemann[[l, m, j, k]]).sum::<f64>()
    })
}

/// `yˢ∇̇ₘRˡₛⱼₖ` as `[m, l, j, k]`.
fn nabla_r0(geom: &BaseGeometry, y: &[f64]) -> Array4<f64> {
    let n = geom.dim();
    Array4::from_shape_fn((n, n, n, n), |(m, l, j, k)| {
        (0..n).map(|s| y[s] * geom.nabla_riemann[[m, l, s, j, k]]).sum::<f64>()
    })
}

fn lower_first(g: &Array2<f64>, t: &Array3<f64>) -> Array3<f64> {
    let n = g.nrows();
    Array3::from_shape_fn((n, n, n), |(i, j, k)| {
        (0..n).map(|l| g[[i, l]] * t[[l, j, k]]).sum::<f64>()
    })
}

fn lower_first4(g: &Array2<f64>, t: &Array4<f64>) -> Array4<f64> {
    let n = g.nrows();
    Array4::from_shape_fn((n, n, n, n), |(m, i, j, k)| {
        (0..n).map(|l| g[[i, l]] * t[[m, l, j, k]]).sum::<f64>()
    })
}

fn factors(lp: &LiftedPoint) -> [Factors; 3] {
    let n = lp.dim();
    let geom = &lp.geom;
    let y = lp.blocks.y.as_slice().expect("contiguous fiber vector");
    let d = &lp.derivs;
    let (dg1, dg2, dg3) = (&d.dg[0], &d.dg[1], &d.dg[2]);
    let (ddg1, ddg2, ddg3) = (&d.ddg[0], &d.ddg[1], &d.ddg[2]);
    let g2 = &lp.blocks.g2;
    let c3 = lp.coeffs.c[2];
    let g0 = &lp.blocks.g0;
    let r0 = r0(geom, y);
    let r0_low = lower_first(&geom.g, &r0);
    let nr0 = nabla_r0(geom, y);
    let nr0_low = lower_first4(&geom.g, &nr0);
    let rm = &geom.riemann;
    let zero4 = || Array4::<f64>::zeros((n, n, n, n));
    let sh3 = (n, n, n);
    let sh4 = (n, n, n, n);
    // Σₗ Rˡ…G²ₗᵢ style contraction of a [l, j, k] tensor with G² on l.
    let with_g2 =
        |t: &Array3<f64>, j: usize, k: usize, i: usize| (0..n).map(|l| t[[l, j, k]] * g2[[l, i]]).sum::<f64>();

    let q = Factors {
        a: Array3::from_shape_fn(sh3, |(i, j, k)| {
            0.5 * (dg2[[i, j, k]] + dg2[[j, i, k]] - dg2[[k, i, j]])
        }),
        b: Array3::from_shape_fn(sh3, |(i, j, k)| 0.5 * (dg3[[i, j, k]] + dg3[[j, i, k]])),
        da: Array4::from_shape_fn(sh4, |(m, i, j, k)| {
            0.5 * (ddg2[[m, i, j, k]] + ddg2[[m, j, i, k]] - ddg2[[m, k, i, j]])
        }),
        db: Array4::from_shape_fn(sh4, |(m, i, j, k)| 0.5 * (ddg3[[m, i, j, k]] + ddg3[[m, j, i, k]])),
        ha: zero4(),
        hb: zero4(),
    };
    let p = Factors {
        a: Array3::from_shape_fn(sh3, |(i, j, k)| 0.5 * (dg3[[i, j, k]] - dg3[[k, i, j]])),
        b: Array3::from_shape_fn(sh3, |(i, j, k)| 0.5 * (dg1[[i, j, k]] + with_g2(&r0, j, k, i))),
        da: Array4::from_shape_fn(sh4, |(m, i, j, k)| 0.5 * (ddg3[[m, i, j, k]] - ddg3[[m, k, i, j]])),
        db: Array4::from_shape_fn(sh4, |(m, i, j, k)| {
            let mut s = ddg1[[m, i, j, k]];
            for l in 0..n {
                s += rm[[l, m, j, k]] * g2[[l, i]] + r0[[l, j, k]] * dg2[[m, l, i]];
            }
            0.5 * s
        }),
        ha: zero4(),
        hb: Array4::from_shape_fn(sh4, |(m, i, j, k)| {
            0.5 * (0..n).map(|l| nr0[[m, l, j, k]] * g2[[l, i]]).sum::<f64>()
        }),
    };
    let s = Factors {
        a: Array3::from_shape_fn(sh3, |(i, j, k)| -0.5 * (dg1[[k, i, j]] + with_g2(&r0, i, j, k))),
        b: Array3::from_shape_fn(sh3, |(i, j, k)| c3.value() * r0_low[[i, j, k]]),
        da: Array4::from_shape_fn(sh4, |(m, i, j, k)| {
            let mut s = ddg1[[m, k, i, j]];
            for l in 0..n {
                s += rm[[l, m, i, j]] * g2[[l, k]] + r0[[l, i, j]] * dg2[[m, l, k]];
            }
            -0.5 * s
        }),
        db: Array4::from_shape_fn(sh4, |(m, i, j, k)| {
            let r_low: f64 = (0..n).map(|l| geom.g[[i, l]] * rm[[l, m, j, k]]).sum::<f64>();
            c3.d1() * g0[m] * r0_low[[i, j, k]] + c3.value() * r_low
        }),
        ha: Array4::from_shape_fn(sh4, |(m, i, j, k)| {
            -0.5 * (0..n).map(|l| nr0[[m, l, i, j]] * g2[[l, k]]).sum::<f64>()
        }),
        hb: Array4::from_shape_fn(sh4, |(m, i, j, k)| c3.value() * nr0_low[[m, i, j, k]]),
    };
    [q, p, s]
}

/// `Xʰᵢⱼ = Σₖ aᵢⱼₖ Hₐᵏʰ + bᵢⱼₖ Hᵦᵏʰ`.
fn contract(a: &Array3<f64>, ha: &Array2<f64>, b: &Array3<f64>, hb: &Array2<f64>) -> Array3<f64> {
    let n = ha.nrows();
    Array3::from_shape_fn((n, n, n), |(h, i, j)| {
        (0..n)
            .map(|k| a[[i, j, k]] * ha[[k, h]] + b[[i, j, k]] * hb[[k, h]])
            .sum::<f64>()
    })
}

/// Product-rule derivative `[m, h, i, j]` of [`contract`]; `dha`, `dhb` are the
/// derivatives of the inverse blocks as `[m, k, h]` (pass `None` when they vanish).
fn contract_deriv(
    f: (&Array3<f64>, &Array4<f64>, &Array2<f64>, Option<&Array3<f64>>),
    g: (&Array3<f64>, &Array4<f64>, &Array2<f64>, Option<&Array3<f64>>),
) -> Array4<f64> {
    let (a, da, ha, dha) = f;
    let (b, db, hb, dhb) = g;
    let n = ha.nrows();
    Array4::from_shape_fn((n, n, n, n), |(m, h, i, j)| {
        let mut s = 0.0;
        for k in 0..n {
            s += da[[m, i, j, k]] * ha[[k, h]] + db[[m, i, j, k]] * hb[[k, h]];
            if let Some(d) = dha {
                s += a[[i, j, k]] * d[[m, k, h]];
            }
            if let Some(d) = dhb {
                s += b[[i, j, k]] * d[[m, k, h]];
            }
        }
        s
    })
}

/// Coefficients at an already assembled lifted point.
pub fn coeffs_at(lp: &LiftedPoint) -> ConnectionCoeffs {
    let [q, p, s] = factors(lp);
    assemble(&q, &p, &s, lp)
}

fn assemble(q: &Factors, p: &Factors, s: &Factors, lp: &LiftedPoint) -> ConnectionCoeffs {
    let inv = &lp.inverse;
    let (h1, h2, h3) = (&inv.h1, &inv.h2, &inv.h3);
    ConnectionCoeffs {
        q: contract(&q.a, h2, &q.b, h3),
        qt: contract(&q.a, h3, &q.b, h1),
        p: contract(&p.a, h3, &p.b, h1),
        pt: contract(&p.a, h2, &p.b, h3),
        s: contract(&s.a, h2, &s.b, h3),
        st: contract(&s.a, h3, &s.b, h1),
        gamma: lp.geom.gamma.clone(),
    }
}

/// Coefficients and their derivatives at an already assembled lifted point.
pub fn coeffs_and_derivs_at(lp: &LiftedPoint) -> (ConnectionCoeffs, ConnectionDerivs) {
    let [q, p, s] = factors(lp);
    let inv = &lp.inverse;
    let (h1, h2, h3) = (&inv.h1, &inv.h2, &inv.h3);
    let dh = &lp.derivs.dh;
    let (dh1, dh2, dh3) = (Some(&dh[0]), Some(&dh[1]), Some(&dh[2]));
    let coeffs = assemble(&q, &p, &s, lp);
    let v = |f: &Factors, ha, dha, hb, dhb| contract_deriv((&f.a, &f.da, ha, dha), (&f.b, &f.db, hb, dhb));
    let hz = |f: &Factors, ha, hb| contract_deriv((&f.a, &f.ha, ha, None), (&f.b, &f.hb, hb, None));
    let derivs = ConnectionDerivs {
        dq: v(&q, h2, dh2, h3, dh3),
        dqt: v(&q, h3, dh3, h1, dh1),
        dp: v(&p, h3, dh3, h1, dh1),
        dpt: v(&p, h2, dh2, h3, dh3),
        ds: v(&s, h2, dh2, h3, dh3),
        dst: v(&s, h3, dh3, h1, dh1),
        hp: hz(&p, h3, h1),
        hpt: hz(&p, h2, h3),
        hs: hz(&s, h2, h3),
        hst: hz(&s, h3, h1),
    };
    (coeffs, derivs)
}

pub fn connection_coeffs(params: &LiftParams, geom: &BaseGeometry, pt: &TangentPoint) -> Result<ConnectionCoeffs> {
    Ok(coeffs_at(&LiftedPoint::new(params, geom, pt)?))
}

pub fn connection_coeff_derivatives(
    params: &LiftParams,
    geom: &BaseGeometry,
    pt: &TangentPoint,
) -> Result<ConnectionDerivs> {
    Ok(coeffs_and_derivs_at(&LiftedPoint::new(params, geom, pt)?).1)
}

/// Adapted-frame vector field `δ/δxⁱ` (horizontal) or `∂/∂yⁱ` (vertical).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrameIndex {
    H(usize),
    V(usize),
}

impl FrameIndex {
    /// Position in a `2n`-vector with horizontal components first.
    pub fn slot(self, n: usize) -> usize {
        match self {
            FrameIndex::H(i) => i,
            FrameIndex::V(i) => n + i,
        }
    }

    pub fn all(n: usize) -> impl Iterator<Item = FrameIndex> {
        (0..n).map(FrameIndex::H).chain((0..n).map(FrameIndex::V))
    }
}

/// Components of `∇_dir arg`, horizontal first.
pub fn nabla_frame(coeffs: &ConnectionCoeffs, dir: FrameIndex, arg: FrameIndex) -> Vec<f64> {
    use FrameIndex::{H, V};
    let n = coeffs.dim();
    let mut out = vec![0.0; 2 * n];
    for h in 0..n {
        let (hor, ver) = match (dir, arg) {
            (V(i), V(j)) => (coeffs.qt[[h, i, j]], coeffs.q[[h, i, j]]),
            (H(i), V(j)) => (coeffs.p[[h, j, i]], coeffs.gamma[[h, i, j]] + coeffs.pt[[h, j, i]]),
            (V(i), H(j)) => (coeffs.p[[h, i, j]], coeffs.pt[[h, i, j]]),
            (H(i), H(j)) => (coeffs.gamma[[h, i, j]] + coeffs.st[[h, i, j]], coeffs.s[[h, i, j]]),
        };
        out[h] = hor;
        out[n + h] = ver;
    }
    out
}

/// Moves `(x, y)` by `s` along `δ/δxᶜ` (first order: `y ↦ y − sΓʰ₀ᶜ`) or
/// along `∂/∂yᶜ`.
pub fn flow_point(geom: &BaseGeometry, pt: &TangentPoint, dir: FrameIndex, s: f64) -> TangentPoint {
    let n = geom.dim();
    let mut p = pt.clone();
    match dir {
        FrameIndex::H(c) => {
            p.x[c] += s;
            for h in 0..n {
                p.y[h] -= s * (0..n).map(|m| pt.y[m] * geom.gamma[[h, m, c]]).sum::<f64>();
            }
        }
        FrameIndex::V(c) => p.y[c] += s,
    }
    p
}

/// Worst `|E_C G(E_A, E_B) − G(∇_C E_A, E_B) − G(E_A, ∇_C E_B)| / (1 + |rhs|)`
/// with the left side by central differences of step `h`, and the offending
/// `(C, A, B)`.
pub fn metric_compatibility_residual(
    params: &LiftParams,
    model: &BaseModel,
    pt: &TangentPoint,
    h: f64,
) -> Result<(f64, [FrameIndex; 3])> {
    let geom = geometry_at(model, &pt.x)?;
    let n = geom.dim();
    let lp = LiftedPoint::new(params, &geom, pt)?;
    let c = coeffs_at(&lp);
    let gm = lp.blocks.full();
    let g_at = |p: &TangentPoint| -> Result<nalgebra::DMatrix<f64>> {
        let gg = geometry_at(model, &p.x)?;
        Ok(metric_blocks(params, &gg, p)?.full())
    };
    let mut worst = (0.0, [FrameIndex::H(0); 3]);
    for dir in FrameIndex::all(n) {
        let gp = g_at(&flow_point(&geom, pt, dir, h))?;
        let gmm = g_at(&flow_point(&geom, pt, dir, -h))?;
        for a in FrameIndex::all(n) {
            let na = nabla_frame(&c, dir, a);
            for b in FrameIndex::all(n) {
                let (sa, sb) = (a.slot(n), b.slot(n));
                let fd = (gp[(sa, sb)] - gmm[(sa, sb)]) / (2.0 * h);
                let nb = nabla_frame(&c, dir, b);
                let ex: f64 = (0..2 * n)
                    .map(|s| na[s] * gm[(s, sb)] + gm[(sa, s)] * nb[s])
                    .sum::<f64>();
                let r = (fd - ex).abs() / (1.0 + ex.abs());
                if r > worst.0 {
                    worst = (r, [dir, a, b]);
                }
            }
        }
    }
    Ok(worst)
}

/// Worst entry of `∇_A B − ∇_B A − [A, B]` over frame pairs, with the pair.
pub fn torsion_residual(coeffs: &ConnectionCoeffs, geom: &BaseGeometry, y: &[f64]) -> (f64, [FrameIndex; 2]) {
    use FrameIndex::{H, V};
    let n = geom.dim();
    let r0 = r0(geom, y);
    let mut worst = (0.0, [H(0), H(0)]);
    for a in FrameIndex::all(n) {
        for b in FrameIndex::all(n) {
            let ab = nabla_frame(coeffs, a, b);
            let ba = nabla_frame(coeffs, b, a);
            for s in 0..2 * n {
                let bracket = if s < n {
                    0.0
                } else {
                    let h = s - n;
                    match (a, b) {
                        (H(i), H(j)) => -r0[[h, i, j]],
                        (H(i), V(j)) => geom.gamma[[h, i, j]],
                        (V(i), H(j)) => -geom.gamma[[h, j, i]],
                        (V(_), V(_)) => 0.0,
                    }
                };
                let t = (ab[s] - ba[s] - bracket).abs();
                if t > worst.0 {
                    worst = (t, [a, b]);
                }
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{generic_lift, generic_model};
    use FrameIndex::{H, V};

    fn max_abs<'a>(it: impl IntoIterator<Item = &'a f64>) -> f64 {
        it.into_iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn moved(geom: &BaseGeometry, pt: &TangentPoint, dir: FrameIndex, s: f64) -> TangentPoint {
        flow_point(geom, pt, dir, s)
    }

    fn configs() -> Vec<(LiftParams, BaseModel, TangentPoint)> {
        vec![
            (
                generic_lift(),
                generic_model(),
                TangentPoint::new([0.3, -0.4, 0.5], [0.4, -0.3, 0.6]),
            ),
            (
                LiftParams::cheeger_gromoll(),
                BaseModel::sphere(1.0),
                TangentPoint::new([1.1, 0.2], [0.7, -0.5]),
            ),
            (
                generic_lift(),
                BaseModel::sphere(2.0),
                TangentPoint::new([0.9, -0.3], [-0.2, 0.8]),
            ),
            (
                LiftParams::sasaki(),
                generic_model(),
                TangentPoint::new([-0.5, 0.1, 0.2], [1.0, 0.3, -0.4]),
            ),
        ]
    }

    #[test]
    fn sasaki_euclidean_vanishes() {
        let geom = geometry_at(&BaseModel::euclidean(3), &[0.1, 0.2, 0.3]).unwrap();
        let pt = TangentPoint::new([0.1, 0.2, 0.3], [0.5, -1.0, 0.25]);
        let c = connection_coeffs(&LiftParams::sasaki(), &geom, &pt).unwrap();
        for x in [&c.q, &c.qt, &c.p, &c.pt, &c.s, &c.st] {
            assert_eq!(max_abs(x), 0.0);
        }
        let d = connection_coeff_derivatives(&LiftParams::sasaki(), &geom, &pt).unwrap();
        for x in [
            &d.dq, &d.dqt, &d.dp, &d.dpt, &d.ds, &d.dst, &d.hp, &d.hpt, &d.hs, &d.hst,
        ] {
            assert_eq!(max_abs(x), 0.0);
        }
        for a in FrameIndex::all(3) {
            for b in FrameIndex::all(3) {
                assert_eq!(max_abs(&nabla_frame(&c, a, b)), 0.0);
            }
        }
    }

    #[test]
    fn sasaki_sphere_zero_section_keeps_only_curvature_terms() {
        let geom = geometry_at(&BaseModel::sphere(1.0), &[1.0, 0.0]).unwrap();
        let pt = TangentPoint::new([1.0, 0.0], [0.0, 0.0]);
        let c = connection_coeffs(&LiftParams::sasaki(), &geom, &pt).unwrap();
        // Rˡ₀ⱼₖ vanishes with y, so at the zero section every family is zero.
        for x in [&c.q, &c.qt, &c.p, &c.pt, &c.s, &c.st] {
            assert_eq!(max_abs(x), 0.0);
        }
        // dS keeps c₃ Rⱼᵢₖᵣ (c₃ = 0 here) and the −½ Rˡᵢⱼₖ G²ₗᵣ H₂ʳʰ term.
        let d = connection_coeff_derivatives(&LiftParams::sasaki(), &geom, &pt).unwrap();
        for i in 0..2 {
            for h in 0..2 {
                for j in 0..2 {
                    for k in 0..2 {
                        let want = -0.5 * geom.riemann[[h, i, j, k]];
                        assert!((d.ds[[i, h, j, k]] - want).abs() < 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn q_families_symmetric() {
        for (params, model, pt) in configs() {
            let geom = geometry_at(&model, &pt.x).unwrap();
            let c = connection_coeffs(&params, &geom, &pt).unwrap();
            let n = geom.dim();
            for h in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        assert!((c.q[[h, i, j]] - c.q[[h, j, i]]).abs() < 1e-12);
                        assert!((c.qt[[h, i, j]] - c.qt[[h, j, i]]).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn s_families_symmetric_on_flat_base() {
        let geom = geometry_at(&BaseModel::euclidean(3), &[0.0; 3]).unwrap();
        let pt = TangentPoint::new([0.0; 3], [0.3, -0.7, 0.2]);
        let c = connection_coeffs(&generic_lift(), &geom, &pt).unwrap();
        for h in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    assert!((c.s[[h, i, j]] - c.s[[h, j, i]]).abs() < 1e-12);
                    assert!((c.st[[h, i, j]] - c.st[[h, j, i]]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn torsion_free() {
        for (params, model, pt) in configs() {
            let geom = geometry_at(&model, &pt.x).unwrap();
            let c = connection_coeffs(&params, &geom, &pt).unwrap();
            let n = geom.dim();
            let r0 = r0(&geom, &pt.y);
            for a in FrameIndex::all(n) {
                for b in FrameIndex::all(n) {
                    let mut bracket = vec![0.0; 2 * n];
                    for h in 0..n {
                        bracket[n + h] = match (a, b) {
                            (H(i), H(j)) => -r0[[h, i, j]],
                            (H(i), V(j)) => geom.gamma[[h, i, j]],
                            (V(i), H(j)) => -geom.gamma[[h, j, i]],
                            (V(_), V(_)) => 0.0,
                        };
                    }
                    let ab = nabla_frame(&c, a, b);
                    let ba = nabla_frame(&c, b, a);
                    for s in 0..2 * n {
                        let t = ab[s] - ba[s] - bracket[s];
                        assert!(t.abs() < 1e-12, "{a:?} {b:?} slot {s}: {t}");
                    }
                }
            }
        }
    }

    #[test]
    fn metric_compatible() {
        let h = 1e-5;
        for (params, model, pt) in configs() {
            let geom = geometry_at(&model, &pt.x).unwrap();
            let n = geom.dim();
            let c = connection_coeffs(&params, &geom, &pt).unwrap();
            let gm = metric_blocks(&params, &geom, &pt).unwrap().full();
            let g_at = |p: &TangentPoint| {
                let gg = geometry_at(&model, &p.x).unwrap();
                metric_blocks(&params, &gg, p).unwrap().full()
            };
            for dir in FrameIndex::all(n) {
                let gp = g_at(&moved(&geom, &pt, dir, h));
                let gmm = g_at(&moved(&geom, &pt, dir, -h));
                for a in FrameIndex::all(n) {
                    for b in FrameIndex::all(n) {
                        let (sa, sb) = (a.slot(n), b.slot(n));
                        let fd = (gp[(sa, sb)] - gmm[(sa, sb)]) / (2.0 * h);
                        let na = nabla_frame(&c, dir, a);
                        let nb = nabla_frame(&c, dir, b);
                        let mut ex = 0.0;
                        for s in 0..2 * n {
                            ex += na[s] * gm[(s, sb)] + gm[(sa, s)] * nb[s];
                        }
                        assert!(
                            (fd - ex).abs() <= 1e-5 * (1.0 + ex.abs()),
                            "{dir:?} {a:?} {b:?}: fd {fd} vs {ex}"
                        );
                    }
                }
            }
        }
    }

    fn families(c: &ConnectionCoeffs) -> [&Array3<f64>; 6] {
        [&c.q, &c.qt, &c.p, &c.pt, &c.s, &c.st]
    }

    #[test]
    fn fiber_derivatives_match_finite_differences() {
        let h = 1e-5;
        for (params, model, pt) in configs() {
            let geom = geometry_at(&model, &pt.x).unwrap();
            let n = geom.dim();
            let d = connection_coeff_derivatives(&params, &geom, &pt).unwrap();
            let exact = [&d.dq, &d.dqt, &d.dp, &d.dpt, &d.ds, &d.dst];
            for i in 0..n {
                let cp = connection_coeffs(&params, &geom, &moved(&geom, &pt, V(i), h)).unwrap();
                let cm = connection_coeffs(&params, &geom, &moved(&geom, &pt, V(i), -h)).unwrap();
                for (f, (xp, xm)) in families(&cp).into_iter().zip(families(&cm)).enumerate() {
                    for ((hh, j, k), vp) in xp.indexed_iter() {
                        let fd = (vp - xm[[hh, j, k]]) / (2.0 * h);
                        let ex = exact[f][[i, hh, j, k]];
                        assert!((fd - ex).abs() <= 1e-5 * (1.0 + ex.abs()), "family {f}: {fd} vs {ex}");
                    }
                }
            }
        }
    }

    #[test]
    fn horizontal_derivatives_match_finite_differences() {
        let h = 1e-5;
        for (params, model, pt) in configs() {
            let geom = geometry_at(&model, &pt.x).unwrap();
            let n = geom.dim();
            let c = connection_coeffs(&params, &geom, &pt).unwrap();
            let d = connection_coeff_derivatives(&params, &geom, &pt).unwrap();
            let zero = Array4::<f64>::zeros((n, n, n, n));
            let exact = [&zero, &zero, &d.hp, &d.hpt, &d.hs, &d.hst];
            let gm = &geom.gamma;
            for m in 0..n {
                let at = |s: f64| {
                    let p = moved(&geom, &pt, H(m), s);
                    let g = geometry_at(&model, &p.x).unwrap();
                    connection_coeffs(&params, &g, &p).unwrap()
                };
                let (cp, cm) = (at(h), at(-h));
                for (f, ((xp, xm), x)) in families(&cp)
                    .into_iter()
                    .zip(families(&cm))
                    .zip(families(&c))
                    .enumerate()
                {
                    for ((a, i, j), vp) in xp.indexed_iter() {
                        let mut fd = (vp - xm[[a, i, j]]) / (2.0 * h);
                        for l in 0..n {
                            fd += gm[[a, m, l]] * x[[l, i, j]]
                                - gm[[l, m, i]] * x[[a, l, j]]
                                - gm[[l, m, j]] * x[[a, i, l]];
                        }
                        let ex = exact[f][[m, a, i, j]];
                        assert!(
                            (fd - ex).abs() <= 1e-5 * (1.0 + ex.abs()),
                            "family {f} m{m} [{a},{i},{j}]: {fd} vs {ex}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn shared_residual_helpers() {
        for (params, model, pt) in configs() {
            let geom = geometry_at(&model, &pt.x).unwrap();
            let (m, _) = metric_compatibility_residual(&params, &model, &pt, 1e-5).unwrap();
            assert!(m < 1e-5, "{m}");
            let c = connection_coeffs(&params, &geom, &pt).unwrap();
            assert!(torsion_residual(&c, &geom, &pt.y).0 < 1e-12);
        }
        // Dropping S leaves the vertical part of [δᵢ, δⱼ] unmatched.
        let (params, model, pt) = configs().remove(0);
        let geom = geometry_at(&model, &pt.x).unwrap();
        let mut c = connection_coeffs(&params, &geom, &pt).unwrap();
        c.s.fill(0.0);
        assert!(torsion_residual(&c, &geom, &pt.y).0 > 1e-6);
    }

    #[test]
    fn mixed_frame_example() {
        let (params, model, pt) = configs().remove(1);
        let geom = geometry_at(&model, &pt.x).unwrap();
        let c = connection_coeffs(&params, &geom, &pt).unwrap();
        let v = nabla_frame(&c, H(0), V(1));
        for h in 0..2 {
            assert_eq!(v[h], c.p[[h, 1, 0]]);
            assert_eq!(v[2 + h], c.gamma[[h, 0, 1]] + c.pt[[h, 1, 0]]);
        }
    }
}
