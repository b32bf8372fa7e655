//! General natural lifted metric on `TM`, its inverse and fiber derivatives.
//!
//! In the adapted frame the metric has three blocks
//! `G⁽ᵅ⁾ᵢⱼ = cₐ gᵢⱼ + dₐ g₀ᵢ g₀ⱼ` (horizontal, vertical, mixed) and its inverse
//! has the same shape `H₍ₐ₎ᵏˡ = pₐ gᵏˡ + qₐ yᵏ yˡ`.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, Array3, Array4};
use serde::{Deserialize, Serialize};

use crate::base::BaseGeometry;
use crate::error::{Error, Result};
use crate::scalarfn::{CoeffFn, CoeffSpec, Jet};

/// Magnitude below which a closed-form denominator is treated as singular.
pub const SINGULAR_EPS: f64 = 1e-12;

/// The six coefficient functions `c₁, c₂, c₃, d₁, d₂, d₃` of the lift.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftParams {
    pub c1: CoeffFn,
    pub c2: CoeffFn,
    pub c3: CoeffFn,
    pub d1: CoeffFn,
    pub d2: CoeffFn,
    pub d3: CoeffFn,
}

impl LiftParams {
    pub fn new(c: [CoeffFn; 3], d: [CoeffFn; 3]) -> Self {
        let [c1, c2, c3] = c;
        let [d1, d2, d3] = d;
        LiftParams { c1, c2, c3, d1, d2, d3 }
    }

    /// All six coefficients constant.
    pub fn constants(c: [f64; 3], d: [f64; 3]) -> Self {
        Self::new(c.map(CoeffFn::constant), d.map(CoeffFn::constant))
    }

    pub fn sasaki() -> Self {
        Self::constants([1.0, 1.0, 0.0], [0.0; 3])
    }

    pub fn cheeger_gromoll() -> Self {
        let w = CoeffFn::ratio(&[1.0], &[1.0, 2.0]).expect("1 + 2t is an admissible denominator");
        Self::new(
            [CoeffFn::one(), w.clone(), CoeffFn::zero()],
            [CoeffFn::zero(), w, CoeffFn::zero()],
        )
    }

    pub fn coeff_jets(&self, t: f64) -> Result<CoeffJets> {
        Ok(CoeffJets {
            c: [self.c1.jet(t)?, self.c2.jet(t)?, self.c3.jet(t)?],
            d: [self.d1.jet(t)?, self.d2.jet(t)?, self.d3.jet(t)?],
        })
    }
}

/// Coefficient jets at one value of `t`; index 0 is the horizontal block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoeffJets {
    pub c: [Jet; 3],
    pub d: [Jet; 3],
}

/// Point `(x, y)` of the tangent bundle in induced coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentPoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl TangentPoint {
    pub fn new(x: impl Into<Vec<f64>>, y: impl Into<Vec<f64>>) -> Self {
        TangentPoint {
            x: x.into(),
            y: y.into(),
        }
    }
}

/// `t = ½ gᵢₖ yⁱ yᵏ`.
pub fn energy_density(geom: &BaseGeometry, y: &[f64]) -> f64 {
    let n = geom.dim();
    let mut s = 0.0;
    for i in 0..n {
        for k in 0..n {
            s += geom.g[[i, k]] * y[i] * y[k];
        }
    }
    0.5 * s
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricBlocks {
    pub g1: Array2<f64>,
    pub g2: Array2<f64>,
    pub g3: Array2<f64>,
    pub t: f64,
    /// `g₀ᵢ = yᵏ gₖᵢ`
    pub g0: Array1<f64>,
    pub y: Array1<f64>,
    /// Base metric at `x`.
    pub g: Array2<f64>,
}

impl MetricBlocks {
    pub fn dim(&self) -> usize {
        self.g1.nrows()
    }

    /// Block by 1-based index as in `G⁽¹⁾, G⁽²⁾, G⁽³⁾`.
    pub fn block(&self, alpha: usize) -> &Array2<f64> {
        match alpha {
            1 => &self.g1,
            2 => &self.g2,
            3 => &self.g3,
            _ => panic!("metric block index {alpha} out of range"),
        }
    }

    /// The `2n × 2n` matrix `[[G1, G3], [G3, G2]]`, horizontal directions first.
    pub fn full(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(2 * n, 2 * n, |a, b| match (a < n, b < n) {
            (true, true) => self.g1[[a, b]],
            (false, false) => self.g2[[a - n, b - n]],
            (true, false) => self.g3[[a, b - n]],
            (false, true) => self.g3[[a - n, b]],
        })
    }

    /// `G(X, Y)` for adapted-frame component vectors.
    pub fn inner(&self, x: &[f64], y: &[f64]) -> f64 {
        let m = self.full();
        let n2 = m.nrows();
        let mut s = 0.0;
        for a in 0..n2 {
            for b in 0..n2 {
                s += x[a] * m[(a, b)] * y[b];
            }
        }
        s
    }
}

/// The four inequalities that make the lifted metric positive definite at `t`.
pub fn check_positivity(j: &CoeffJets, t: f64) -> Result<()> {
    let [c1, c2, c3] = j.c.map(|v| v.value());
    let [d1, d2, d3] = j.d.map(|v| v.value());
    let a = c1 + 2.0 * t * d1;
    let b = c2 + 2.0 * t * d2;
    let c = c3 + 2.0 * t * d3;
    let checks: [(&'static str, f64); 4] = [
        ("c1 > 0", c1),
        ("c1 c2 - c3^2 > 0", c1 * c2 - c3 * c3),
        ("c1 + 2t d1 > 0", a),
        ("(c1 + 2t d1)(c2 + 2t d2) - (c3 + 2t d3)^2 > 0", a * b - c * c),
    ];
    for (inequality, value) in checks {
        if !(value > 0.0) {
            return Err(Error::DegenerateMetric { inequality, value, t });
        }
    }
    Ok(())
}

pub fn metric_blocks(params: &LiftParams, geom: &BaseGeometry, pt: &TangentPoint) -> Result<MetricBlocks> {
    let jets = params.coeff_jets(energy_density(geom, &pt.y))?;
    blocks_from_jets(&jets, geom, pt)
}

fn blocks_from_jets(jets: &CoeffJets, geom: &BaseGeometry, pt: &TangentPoint) -> Result<MetricBlocks> {
    let n = geom.dim();
    if pt.y.len() != n {
        return Err(Error::Dimension(format!(
            "fiber point has {} coordinates, base has dimension {n}",
            pt.y.len()
        )));
    }
    let t = energy_density(geom, &pt.y);
    check_positivity(jets, t)?;
    let y = Array1::from(pt.y.clone());
    let g0 = geom.g.dot(&y);
    let block = |a: usize| {
        let (c, d) = (jets.c[a].value(), jets.d[a].value());
        Array2::from_shape_fn((n, n), |(i, j)| c * geom.g[[i, j]] + d * g0[i] * g0[j])
    };
    Ok(MetricBlocks {
        g1: block(0),
        g2: block(1),
        g3: block(2),
        t,
        g0,
        y,
        g: geom.g.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InverseBlocks {
    pub h1: Array2<f64>,
    pub h2: Array2<f64>,
    pub h3: Array2<f64>,
    /// `p₁, p₂, p₃`; absent when they cannot be recovered (numeric path at `y = 0`).
    pub p: Option<[f64; 3]>,
    pub q: Option<[f64; 3]>,
}

impl InverseBlocks {
    pub fn block(&self, alpha: usize) -> &Array2<f64> {
        match alpha {
            1 => &self.h1,
            2 => &self.h2,
            3 => &self.h3,
            _ => panic!("inverse block index {alpha} out of range"),
        }
    }

    /// Largest deviation from the four block identities `G·H = I`.
    pub fn identity_residual(&self, blocks: &MetricBlocks) -> f64 {
        let n = blocks.dim();
        let eye = Array2::<f64>::eye(n);
        let r1 = blocks.g1.dot(&self.h1) + blocks.g3.dot(&self.h3) - &eye;
        let r2 = blocks.g1.dot(&self.h3) + blocks.g3.dot(&self.h2);
        let r3 = blocks.g3.dot(&self.h1) + blocks.g2.dot(&self.h3);
        let r4 = blocks.g3.dot(&self.h3) + blocks.g2.dot(&self.h2) - &eye;
        [r1, r2, r3, r4]
            .iter()
            .flat_map(|m| m.iter())
            .fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

fn guard(what: &'static str, value: Jet) -> Result<Jet> {
    if value.value().abs() < SINGULAR_EPS {
        Err(Error::Singular {
            what,
            value: value.value().abs(),
        })
    } else {
        Ok(value)
    }
}

/// `p₁, p₂, p₃` and `q₁, q₂, q₃` as jets in `t`, from the closed-form solution
/// of the block system `G·H = I`.
pub fn inverse_scalars(jets: &CoeffJets, t: f64) -> Result<([Jet; 3], [Jet; 3])> {
    let tt = Jet::variable(t);
    let two_t = tt.scale(2.0);
    let [c1, c2, c3] = jets.c;
    let [d1, d2, d3] = jets.d;

    let det = guard("c1 c2 - c3^2", c1 * c2 - c3 * c3)?;
    let p1 = c2 / det;
    let p2 = c1 / det;
    let p3 = -(c3 / det);

    let a = c1 + d1 * two_t;
    let b = guard("c2 + 2 d2 t", c2 + d2 * two_t)?;
    let c = c3 + d3 * two_t;
    let det_y = guard("(c1 + 2 d1 t)(c2 + 2 d2 t) - (c3 + 2 d3 t)^2", a * b - c * c)?;

    let q1 = -((c2 * d1 * p1 - c3 * d3 * p1 - c3 * d2 * p3 + c2 * d3 * p3 + d1 * d2 * p1 * two_t
        - d3 * d3 * p1 * two_t)
        / det_y);
    let mixed = (d3 * p1 + d2 * p3) * a - (d1 * p1 + d3 * p3) * c;
    let q2 = -((d2 * p2 + d3 * p3) / b) + c * mixed / (b * det_y);
    let q3 = -(mixed / det_y);
    Ok(([p1, p2, p3], [q1, q2, q3]))
}

fn inverse_from_scalars(geom: &BaseGeometry, y: &Array1<f64>, p: [f64; 3], q: [f64; 3]) -> InverseBlocks {
    let n = geom.dim();
    let block = |a: usize| Array2::from_shape_fn((n, n), |(k, l)| p[a] * geom.g_inv[[k, l]] + q[a] * y[k] * y[l]);
    InverseBlocks {
        h1: block(0),
        h2: block(1),
        h3: block(2),
        p: Some(p),
        q: Some(q),
    }
}

pub fn inverse_blocks_closed_form(
    params: &LiftParams,
    geom: &BaseGeometry,
    _pt: &TangentPoint,
    blocks: &MetricBlocks,
) -> Result<InverseBlocks> {
    let jets = params.coeff_jets(blocks.t)?;
    let (p, q) = inverse_scalars(&jets, blocks.t)?;
    Ok(inverse_from_scalars(
        geom,
        &blocks.y,
        p.map(|v| v.value()),
        q.map(|v| v.value()),
    ))
}

/// Inverts the full `2n × 2n` adapted-frame matrix and reads off the blocks.
///
/// `p` and `q` are recovered by contracting each block with `g` and with
/// `g₀ ⊗ g₀`, which separates the two basis tensors whenever `n > 1` and `y ≠ 0`.
pub fn inverse_blocks_numeric(blocks: &MetricBlocks) -> Result<InverseBlocks> {
    let n = blocks.dim();
    let full = blocks.full();
    let det = full.determinant();
    let inv = full
        .try_inverse()
        .filter(|_| det.abs() > SINGULAR_EPS)
        .ok_or(Error::Singular {
            what: "adapted-frame metric matrix",
            value: det.abs(),
        })?;
    let h1 = Array2::from_shape_fn((n, n), |(i, j)| inv[(i, j)]);
    let h2 = Array2::from_shape_fn((n, n), |(i, j)| inv[(n + i, n + j)]);
    let h3 = Array2::from_shape_fn((n, n), |(i, j)| inv[(i, n + j)]);

    let t = blocks.t;
    let (p, q) = if n > 1 && t > 0.0 {
        // gₖₗHᵏˡ = n p + 2t q and g₀ₖg₀ₗHᵏˡ = 2t p + 4t² q.
        let mut p = [0.0; 3];
        let mut q = [0.0; 3];
        for (a, h) in [&h1, &h2, &h3].into_iter().enumerate() {
            let tr = (&blocks.g * h).sum();
            let along = blocks.g0.dot(&h.dot(&blocks.g0));
            let nf = n as f64;
            q[a] = (nf * along - 2.0 * t * tr) / (4.0 * t * t * (nf - 1.0));
            p[a] = (tr - 2.0 * t * q[a]) / nf;
        }
        (Some(p), Some(q))
    } else {
        (None, None)
    };
    Ok(InverseBlocks { h1, h2, h3, p, q })
}

/// Fiber derivatives of the metric and inverse blocks.
///
/// `dg[a][[i, j, k]] = ∂ᵢG⁽ᵃ⁺¹⁾ⱼₖ`, `ddg[a][[i, j, k, l]] = ∂ᵢ∂ⱼG⁽ᵃ⁺¹⁾ₖₗ`,
/// `dh[a][[i, j, k]] = ∂ᵢH₍ₐ₊₁₎ʲᵏ`, all with respect to `yⁱ`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDerivatives {
    pub dg: [Array3<f64>; 3],
    pub ddg: [Array4<f64>; 3],
    pub dh: [Array3<f64>; 3],
}

/// Everything about the lift that the connection and curvature need at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedPoint {
    pub geom: BaseGeometry,
    pub blocks: MetricBlocks,
    pub coeffs: CoeffJets,
    pub p: [Jet; 3],
    pub q: [Jet; 3],
    pub inverse: InverseBlocks,
    pub derivs: BlockDerivatives,
}

impl LiftedPoint {
    pub fn new(params: &LiftParams, geom: &BaseGeometry, pt: &TangentPoint) -> Result<Self> {
        let t = energy_density(geom, &pt.y);
        let coeffs = params.coeff_jets(t)?;
        let blocks = blocks_from_jets(&coeffs, geom, pt)?;
        let (p, q) = inverse_scalars(&coeffs, t)?;
        let inverse = inverse_from_scalars(geom, &blocks.y, p.map(|v| v.value()), q.map(|v| v.value()));
        let derivs = derivatives(geom, &blocks, &coeffs, &p, &q);
        Ok(LiftedPoint {
            geom: geom.clone(),
            blocks,
            coeffs,
            p,
            q,
            inverse,
            derivs,
        })
    }

    pub fn dim(&self) -> usize {
        self.geom.dim()
    }
}

pub fn metric_block_derivatives(
    params: &LiftParams,
    geom: &BaseGeometry,
    pt: &TangentPoint,
) -> Result<BlockDerivatives> {
    Ok(LiftedPoint::new(params, geom, pt)?.derivs)
}

fn derivatives(
    geom: &BaseGeometry,
    blocks: &MetricBlocks,
    coeffs: &CoeffJets,
    p: &[Jet; 3],
    q: &[Jet; 3],
) -> BlockDerivatives {
    let n = geom.dim();
    let g = &geom.g;
    let gi = &geom.g_inv;
    let g0 = &blocks.g0;
    let y = &blocks.y;
    let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };

    let dg = std::array::from_fn(|a| {
        let (c1, d0, d1) = (coeffs.c[a].d1(), coeffs.d[a].value(), coeffs.d[a].d1());
        Array3::from_shape_fn((n, n, n), |(i, j, k)| {
            c1 * g0[i] * g[[j, k]] + d1 * g0[i] * g0[j] * g0[k] + d0 * (g[[i, j]] * g0[k] + g0[j] * g[[i, k]])
        })
    });
    let ddg = std::array::from_fn(|a| {
        let (c1, c2) = (coeffs.c[a].d1(), coeffs.c[a].d2());
        let (d0, d1, d2) = (coeffs.d[a].value(), coeffs.d[a].d1(), coeffs.d[a].d2());
        Array4::from_shape_fn((n, n, n, n), |(i, j, k, l)| {
            c2 * g0[i] * g0[j] * g[[k, l]]
                + c1 * g[[i, j]] * g[[k, l]]
                + d2 * g0[i] * g0[j] * g0[k] * g0[l]
                + d1 * (g[[i, j]] * g0[k] * g0[l]
                    + g0[j] * g[[i, k]] * g0[l]
                    + g0[j] * g0[k] * g[[i, l]]
                    + g0[i] * g[[j, k]] * g0[l]
                    + g0[i] * g0[k] * g[[j, l]])
                + d0 * (g[[j, k]] * g[[i, l]] + g[[i, k]] * g[[j, l]])
        })
    });
    let dh = std::array::from_fn(|a| {
        let (pd, q0, qd) = (p[a].d1(), q[a].value(), q[a].d1());
        Array3::from_shape_fn((n, n, n), |(i, j, k)| {
            pd * g0[i] * gi[[j, k]] + qd * g0[i] * y[j] * y[k] + q0 * (delta(j, i) * y[k] + y[j] * delta(k, i))
        })
    });
    BlockDerivatives { dg, ddg, dh }
}

/// Lift configuration.
///
/// `{"preset":"sasaki"}`, `{"preset":"cheeger-gromoll"}`,
/// `{"preset":"theorem4","alpha":…,"beta":…,"c":…}` or
/// `{"explicit":{"c1":…,…,"d3":…}}` (omitted coefficients are zero).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LiftSpec {
    Explicit { explicit: ExplicitCoeffs },
    Preset(LiftPreset),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case")]
pub enum LiftPreset {
    Sasaki,
    CheegerGromoll,
    Theorem4 { alpha: CoeffSpec, beta: CoeffSpec, c: f64 },
}

fn zero_spec() -> CoeffSpec {
    CoeffSpec::Const(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplicitCoeffs {
    #[serde(default = "zero_spec")]
    pub c1: CoeffSpec,
    #[serde(default = "zero_spec")]
    pub c2: CoeffSpec,
    #[serde(default = "zero_spec")]
    pub c3: CoeffSpec,
    #[serde(default = "zero_spec")]
    pub d1: CoeffSpec,
    #[serde(default = "zero_spec")]
    pub d2: CoeffSpec,
    #[serde(default = "zero_spec")]
    pub d3: CoeffSpec,
}

impl LiftSpec {
    pub fn build(&self) -> Result<LiftParams> {
        match self {
            LiftSpec::Preset(LiftPreset::Sasaki) => Ok(LiftParams::sasaki()),
            LiftSpec::Preset(LiftPreset::CheegerGromoll) => Ok(LiftParams::cheeger_gromoll()),
            LiftSpec::Preset(LiftPreset::Theorem4 { alpha, beta, c }) => {
                crate::curvature::theorem4_metric(&alpha.build()?, &beta.build()?, *c)
            }
            LiftSpec::Explicit { explicit: e } => Ok(LiftParams::new(
                [e.c1.build()?, e.c2.build()?, e.c3.build()?],
                [e.d1.build()?, e.d2.build()?, e.d3.build()?],
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::{geometry_at, BaseModel};
    use proptest::prelude::*;

    fn euclid(n: usize) -> BaseGeometry {
        geometry_at(&BaseModel::euclidean(n), &vec![0.0; n]).unwrap()
    }

    fn sphere_at(theta: f64, phi: f64) -> BaseGeometry {
        geometry_at(&BaseModel::sphere(1.0), &[theta, phi]).unwrap()
    }

    fn generic() -> LiftParams {
        crate::testutil::generic_lift()
    }

    fn max_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        (a - b).iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    #[test]
    fn energy_density_examples() {
        assert_eq!(energy_density(&euclid(2), &[0.0, 0.0]), 0.0);
        assert_eq!(energy_density(&euclid(2), &[3.0, 4.0]), 12.5);
        let mut g = euclid(2);
        g.g[[0, 0]] = 2.0;
        assert_eq!(energy_density(&g, &[1.0, 1.0]), 1.5);
    }

    #[test]
    fn sasaki_blocks_and_inverse() {
        let geom = euclid(2);
        let pt = TangentPoint::new([0.0, 0.0], [0.7, -0.2]);
        let b = metric_blocks(&LiftParams::sasaki(), &geom, &pt).unwrap();
        let eye = Array2::<f64>::eye(2);
        assert_eq!(b.g1, eye);
        assert_eq!(b.g2, eye);
        assert_eq!(b.g3, Array2::<f64>::zeros((2, 2)));
        let h = inverse_blocks_closed_form(&LiftParams::sasaki(), &geom, &pt, &b).unwrap();
        assert_eq!(h.p, Some([1.0, 1.0, 0.0]));
        assert_eq!(h.q, Some([0.0, 0.0, 0.0]));
        let hn = inverse_blocks_numeric(&b).unwrap();
        assert!(max_diff(&hn.h1, &eye) < 1e-15);
        assert!(max_diff(&hn.h2, &eye) < 1e-15);
        assert!(hn.h3.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn block_examples() {
        let geom = euclid(2);
        let pt = TangentPoint::new([0.0, 0.0], [1.0, 0.0]);
        let p = LiftParams::constants([1.0, 1.0, 0.0], [1.0, 0.0, 0.0]);
        let b = metric_blocks(&p, &geom, &pt).unwrap();
        assert_eq!(b.g1, ndarray::arr2(&[[2.0, 0.0], [0.0, 1.0]]));

        let b = metric_blocks(&LiftParams::cheeger_gromoll(), &geom, &pt).unwrap();
        assert_eq!(b.t, 0.5);
        assert!(max_diff(&b.g2, &ndarray::arr2(&[[1.0, 0.0], [0.0, 0.5]])) < 1e-15);
    }

    #[test]
    fn constant_p_example() {
        let p = LiftParams::constants([2.0, 2.0, 1.0], [0.0; 3]);
        let geom = euclid(3);
        let pt = TangentPoint::new([0.0; 3], [0.1, 0.2, 0.3]);
        let b = metric_blocks(&p, &geom, &pt).unwrap();
        let h = inverse_blocks_closed_form(&p, &geom, &pt, &b).unwrap();
        let [p1, p2, p3] = h.p.unwrap();
        assert!((p1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((p2 - 2.0 / 3.0).abs() < 1e-15);
        assert!((p3 + 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(h.q, Some([0.0; 3]));
    }

    #[test]
    fn positivity_violations_are_named() {
        let geom = euclid(2);
        let pt = TangentPoint::new([0.0, 0.0], [1.0, 0.0]);
        let p = LiftParams::constants([1.0, 1.0, 1.0], [0.0; 3]);
        match metric_blocks(&p, &geom, &pt) {
            Err(Error::DegenerateMetric { inequality, .. }) => assert_eq!(inequality, "c1 c2 - c3^2 > 0"),
            other => panic!("unexpected {other:?}"),
        }
        let p = LiftParams::constants([1.0, 1.0, 0.0], [-2.0, 0.0, 0.0]);
        match metric_blocks(&p, &geom, &pt) {
            Err(Error::DegenerateMetric { inequality, .. }) => assert_eq!(inequality, "c1 + 2t d1 > 0"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn closed_form_matches_numeric_with_all_d_nonzero() {
        let params = generic();
        for (geom, y) in [
            (euclid(2), vec![0.8, -0.3]),
            (euclid(3), vec![0.2, 0.5, -1.1]),
            (sphere_at(1.1, 0.4), vec![0.3, 0.9]),
        ] {
            let pt = TangentPoint::new(geom.x.to_vec(), y);
            let b = metric_blocks(&params, &geom, &pt).unwrap();
            let hc = inverse_blocks_closed_form(&params, &geom, &pt, &b).unwrap();
            let hn = inverse_blocks_numeric(&b).unwrap();
            for a in 1..=3 {
                assert!(max_diff(hc.block(a), hn.block(a)) < 1e-12, "block {a}");
            }
            assert!(hc.identity_residual(&b) < 1e-12);
            let (pc, qc, pn, qn) = (hc.p.unwrap(), hc.q.unwrap(), hn.p.unwrap(), hn.q.unwrap());
            for a in 0..3 {
                assert!((pc[a] - pn[a]).abs() < 1e-9);
                assert!((qc[a] - qn[a]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn cheeger_gromoll_numeric_consistent() {
        let geom = euclid(2);
        let pt = TangentPoint::new([0.0, 0.0], [1.0, 0.0]);
        let p = LiftParams::cheeger_gromoll();
        let b = metric_blocks(&p, &geom, &pt).unwrap();
        let hn = inverse_blocks_numeric(&b).unwrap();
        let hc = inverse_blocks_closed_form(&p, &geom, &pt, &b).unwrap();
        // G2 = diag(1, 1/2) in this chart, so H2 = diag(1, 2).
        assert!(max_diff(&hn.h2, &ndarray::arr2(&[[1.0, 0.0], [0.0, 2.0]])) < 1e-14);
        assert!(max_diff(&hn.h2, &hc.h2) < 1e-12);
    }

    #[test]
    fn zero_section() {
        let params = generic();
        let geom = sphere_at(0.9, -0.2);
        let pt = TangentPoint::new(geom.x.to_vec(), [0.0, 0.0]);
        let b = metric_blocks(&params, &geom, &pt).unwrap();
        assert!(b.g0.iter().all(|v| *v == 0.0));
        assert_eq!(b.g1, &geom.g * 2.0);
        let hn = inverse_blocks_numeric(&b).unwrap();
        assert!(hn.p.is_none() && hn.q.is_none());
        let hc = inverse_blocks_closed_form(&params, &geom, &pt, &b).unwrap();
        assert!(max_diff(&hc.h1, &hn.h1) < 1e-12);
        let d = metric_block_derivatives(&params, &geom, &pt).unwrap();
        assert!(d.dg.iter().all(|a| a.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn sasaki_derivatives_vanish() {
        let geom = euclid(2);
        let pt = TangentPoint::new([0.0, 0.0], [0.4, 1.3]);
        let d = metric_block_derivatives(&LiftParams::sasaki(), &geom, &pt).unwrap();
        for a in 0..3 {
            assert!(d.dg[a].iter().all(|v| *v == 0.0));
            assert!(d.ddg[a].iter().all(|v| *v == 0.0));
            assert!(d.dh[a].iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn derivative_example() {
        let p = LiftParams::new(
            [CoeffFn::one(), CoeffFn::poly(&[1.0, 1.0]), CoeffFn::zero()],
            [CoeffFn::zero(), CoeffFn::zero(), CoeffFn::zero()],
        );
        let geom = euclid(2);
        let pt = TangentPoint::new([0.0, 0.0], [1.0, 0.0]);
        let d = metric_block_derivatives(&p, &geom, &pt).unwrap();
        assert_eq!(d.dg[1][[0, 1, 1]], 1.0);
    }

    fn fd_check(params: &LiftParams, geom: &BaseGeometry, y: &[f64]) {
        let n = geom.dim();
        let pt = TangentPoint::new(geom.x.to_vec(), y.to_vec());
        let d = metric_block_derivatives(params, geom, &pt).unwrap();
        let h = 1e-5;
        let shifted = |i: usize, s: f64| {
            let mut yy = y.to_vec();
            yy[i] += s;
            let p = TangentPoint::new(geom.x.to_vec(), yy);
            let b = metric_blocks(params, geom, &p).unwrap();
            let hb = inverse_blocks_numeric(&b).unwrap();
            let dd = metric_block_derivatives(params, geom, &p).unwrap();
            (b, hb, dd)
        };
        for i in 0..n {
            let (bp, hp, dp) = shifted(i, h);
            let (bm, hm, dm) = shifted(i, -h);
            for a in 0..3 {
                for j in 0..n {
                    for k in 0..n {
                        let fd = (bp.block(a + 1)[[j, k]] - bm.block(a + 1)[[j, k]]) / (2.0 * h);
                        let ex = d.dg[a][[i, j, k]];
                        assert!(
                            (fd - ex).abs() <= 1e-6 * (1.0 + ex.abs()),
                            "dG{a} {i}{j}{k}: {fd} vs {ex}"
                        );
                        let fd = (hp.block(a + 1)[[j, k]] - hm.block(a + 1)[[j, k]]) / (2.0 * h);
                        let ex = d.dh[a][[i, j, k]];
                        assert!(
                            (fd - ex).abs() <= 1e-6 * (1.0 + ex.abs()),
                            "dH{a} {i}{j}{k}: {fd} vs {ex}"
                        );
                        for l in 0..n {
                            let fd = (dp.dg[a][[l, j, k]] - dm.dg[a][[l, j, k]]) / (2.0 * h);
                            let ex = d.ddg[a][[i, l, j, k]];
                            assert!((fd - ex).abs() <= 1e-6 * (1.0 + ex.abs()), "ddG{a}: {fd} vs {ex}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        fd_check(&generic(), &euclid(3), &[0.3, -0.6, 0.9]);
        fd_check(&generic(), &sphere_at(1.2, 0.3), &[0.5, 0.4]);
        fd_check(&LiftParams::cheeger_gromoll(), &sphere_at(0.8, 0.0), &[-0.7, 0.2]);
    }

    #[test]
    fn derivative_symmetries() {
        let geom = euclid(3);
        let pt = TangentPoint::new([0.0; 3], [0.3, 0.1, -0.8]);
        let d = metric_block_derivatives(&generic(), &geom, &pt).unwrap();
        for a in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        assert!((d.dg[a][[i, j, k]] - d.dg[a][[i, k, j]]).abs() < 1e-12);
                        for l in 0..3 {
                            let v = d.ddg[a][[i, j, k, l]];
                            assert!((v - d.ddg[a][[j, i, k, l]]).abs() < 1e-12);
                            assert!((v - d.ddg[a][[i, j, l, k]]).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn lift_spec_json() {
        let s: LiftSpec = serde_json::from_str(r#"{"preset":"sasaki"}"#).unwrap();
        assert_eq!(s.build().unwrap(), LiftParams::sasaki());
        let s: LiftSpec = serde_json::from_str(r#"{"preset":"cheeger-gromoll"}"#).unwrap();
        assert_eq!(s.build().unwrap(), LiftParams::cheeger_gromoll());
        let s: LiftSpec =
            serde_json::from_str(r#"{"preset":"theorem4","alpha":{"poly":[1,2]},"beta":{"const":1},"c":1}"#).unwrap();
        let p = s.build().unwrap();
        assert_eq!(p.d2.eval(0.7, 0).unwrap(), 2.0);
        let s: LiftSpec = serde_json::from_str(r#"{"explicit":{"c1":{"const":1},"c2":{"const":1}}}"#).unwrap();
        assert_eq!(s.build().unwrap(), LiftParams::sasaki());
        let back: LiftSpec = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }

    proptest! {
        #[test]
        fn energy_density_scales_quadratically(y in proptest::collection::vec(-2.0f64..2.0, 3), lam in prop::sample::select(vec![2.0, -1.0])) {
            let geom = geometry_at(&BaseModel::euclidean(3), &[0.1, 0.2, 0.3]).unwrap();
            let ys: Vec<f64> = y.iter().map(|v| v * lam).collect();
            let e = energy_density(&geom, &y);
            prop_assert!((energy_density(&geom, &ys) - lam * lam * e).abs() <= 1e-12 * (1.0 + e));
        }

        #[test]
        fn closed_and_numeric_inverse_agree(
            c in (0.5f64..3.0, 0.5f64..3.0, -0.4f64..0.4),
            d in (-0.1f64..0.5, -0.1f64..0.5, -0.2f64..0.2),
            y in proptest::collection::vec(-1.0f64..1.0, 2),
            theta in 0.5f64..2.6,
        ) {
            let params = LiftParams::new(
                [CoeffFn::poly(&[c.0, 0.1]), CoeffFn::constant(c.1), CoeffFn::constant(c.2)],
                [CoeffFn::constant(d.0), CoeffFn::constant(d.1), CoeffFn::constant(d.2)],
            );
            let geom = sphere_at(theta, 0.0);
            let pt = TangentPoint::new(geom.x.to_vec(), y);
            let Ok(b) = metric_blocks(&params, &geom, &pt) else { return Ok(()) };
            let hc = inverse_blocks_closed_form(&params, &geom, &pt, &b).unwrap();
            let hn = inverse_blocks_numeric(&b).unwrap();
            for a in 1..=3 {
                prop_assert!(max_diff(hc.block(a), hn.block(a)) < 1e-9);
            }
            prop_assert!(hc.identity_residual(&b) < 1e-9);
        }
    }
}
