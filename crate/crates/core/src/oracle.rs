//! Finite-difference curvature of the lifted metric in induced coordinates.
//!
//! Nothing here uses the connection or curvature formulas: the coordinate
//! metric is assembled from the metric blocks and the base Christoffel symbols
//! only, then differenced.

use nalgebra::DMatrix;
use ndarray::{Array3, Array4};

use crate::base::{geometry_at, BaseGeometry, BaseModel};
use crate::curvature::{sectional_from_tensor, CurvatureComponents};
use crate::error::{Error, Result};
use crate::lift::{metric_blocks, LiftParams, TangentPoint};

/// Base step before scaling by the size of the point.
pub const BASE_STEP: f64 = 1e-3;

/// `10⁻³ · max(1, ‖x‖, ‖y‖)`.
pub fn default_step(pt: &TangentPoint) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    BASE_STEP * norm(&pt.x).max(norm(&pt.y)).max(1.0)
}

/// `Γʰ₀ᵢ = yᵐΓʰₘᵢ` as an `n × n` matrix `[h, i]`.
fn gamma0(geom: &BaseGeometry, y: &[f64]) -> DMatrix<f64> {
    let n = geom.dim();
    DMatrix::from_fn(n, n, |h, i| (0..n).map(|m| y[m] * geom.gamma[[h, m, i]]).sum::<f64>())
}

/// Columns are `δ/δx¹…δ/δxⁿ, ∂/∂y¹…∂/∂yⁿ` in coordinate components.
pub fn frame_matrix(geom: &BaseGeometry, y: &[f64]) -> DMatrix<f64> {
    let n = geom.dim();
    let g0 = gamma0(geom, y);
    DMatrix::from_fn(2 * n, 2 * n, |a, b| match (a < n, b < n) {
        (true, true) | (false, false) => f64::from(u8::from(a == b)),
        (false, true) => -g0[(a - n, b)],
        (true, false) => 0.0,
    })
}

/// Metric components on `∂/∂x¹…∂/∂xⁿ, ∂/∂y¹…∂/∂yⁿ`.
pub fn coordinate_metric(params: &LiftParams, model: &BaseModel, pt: &TangentPoint) -> Result<DMatrix<f64>> {
    let geom = geometry_at(model, &pt.x)?;
    let blocks = metric_blocks(params, &geom, pt)?;
    let n = geom.dim();
    let g0 = gamma0(&geom, &pt.y);
    let (g1, g2, g3) = (&blocks.g1, &blocks.g2, &blocks.g3);
    Ok(DMatrix::from_fn(2 * n, 2 * n, |a, b| match (a < n, b < n) {
        (true, true) => {
            let (i, j) = (a, b);
            let mut s = g1[[i, j]];
            for k in 0..n {
                s += g0[(k, i)] * g3[[k, j]] + g0[(k, j)] * g3[[i, k]];
                for l in 0..n {
                    s += g0[(k, i)] * g0[(l, j)] * g2[[k, l]];
                }
            }
            s
        }
        (true, false) | (false, true) => {
            let (i, j) = if a < n { (a, b - n) } else { (b, a - n) };
            g3[[i, j]] + (0..n).map(|k| g0[(k, i)] * g2[[k, j]]).sum::<f64>()
        }
        (false, false) => g2[[a - n, b - n]],
    }))
}

fn split(z: &[f64]) -> TangentPoint {
    let n = z.len() / 2;
    TangentPoint::new(&z[..n], &z[n..])
}

fn joined(pt: &TangentPoint) -> Vec<f64> {
    pt.x.iter().chain(&pt.y).copied().collect()
}

fn oracle_err(e: Error) -> Error {
    match e {
        Error::Oracle(_) => e,
        other => Error::Oracle(other.to_string()),
    }
}

fn metric_at(params: &LiftParams, model: &BaseModel, z: &[f64]) -> Result<DMatrix<f64>> {
    coordinate_metric(params, model, &split(z)).map_err(oracle_err)
}

fn christoffel_at(params: &LiftParams, model: &BaseModel, z: &[f64], h: f64) -> Result<Array3<f64>> {
    let m = z.len();
    let g = metric_at(params, model, z)?;
    let g_inv = g
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Oracle("coordinate metric is singular".into()))?;
    let mut dg = Vec::with_capacity(m);
    for c in 0..m {
        let mut zp = z.to_vec();
        let mut zm = z.to_vec();
        zp[c] += h;
        zm[c] -= h;
        dg.push((metric_at(params, model, &zp)? - metric_at(params, model, &zm)?) / (2.0 * h));
    }
    // Γᴬ_BC = ½ Gᴬᴰ (∂_B G_DC + ∂_C G_DB − ∂_D G_BC)
    Ok(Array3::from_shape_fn((m, m, m), |(a, b, c)| {
        0.5 * (0..m)
            .map(|d| g_inv[(a, d)] * (dg[b][(d, c)] + dg[c][(d, b)] - dg[d][(b, c)]))
            .sum::<f64>()
    }))
}

/// Coordinate Christoffel symbols `Γᴬ_BC` by central differences with `step`.
pub fn fd_christoffel(params: &LiftParams, model: &BaseModel, pt: &TangentPoint, step: f64) -> Result<Array3<f64>> {
    christoffel_at(params, model, &joined(pt), step)
}

/// Coordinate curvature `Rᴬ_BCD`, with `R(∂_C, ∂_D)∂_B = Rᴬ_BCD ∂_A`.
///
/// Christoffels and their derivatives both use `step`.
pub fn fd_riemann(params: &LiftParams, model: &BaseModel, pt: &TangentPoint, step: f64) -> Result<Array4<f64>> {
    if !(step > 0.0) {
        return Err(Error::Oracle(format!("step must be positive, got {step}")));
    }
    let z = joined(pt);
    let m = z.len();
    let gam = christoffel_at(params, model, &z, step)?;
    let mut dgam = Vec::with_capacity(m);
    for c in 0..m {
        let mut zp = z.clone();
        let mut zm = z.clone();
        zp[c] += step;
        zm[c] -= step;
        dgam.push(
            (christoffel_at(params, model, &zp, step)? - christoffel_at(params, model, &zm, step)?) / (2.0 * step),
        );
    }
    Ok(Array4::from_shape_fn((m, m, m, m), |(a, b, c, d)| {
        let mut s = dgam[c][[a, d, b]] - dgam[d][[a, c, b]];
        for e in 0..m {
            s += gam[[a, c, e]] * gam[[e, d, b]] - gam[[a, d, e]] * gam[[e, c, b]];
        }
        s
    }))
}

/// Expresses a coordinate `(1,3)` tensor in the adapted frame at `(x, y)`.
pub fn to_adapted(r: &Array4<f64>, geom: &BaseGeometry, y: &[f64]) -> Array4<f64> {
    let e = frame_matrix(geom, y);
    let e_inv = e.clone().try_inverse().expect("frame matrix is unit triangular");
    let m = e.nrows();
    // Contract one index at a time to keep the cost at O(m⁵).
    let mut t = r.clone();
    t = Array4::from_shape_fn((m, m, m, m), |(a, b, c, d)| {
        (0..m).map(|s| t[[a, b, c, s]] * e[(s, d)]).sum::<f64>()
    });
    t = Array4::from_shape_fn((m, m, m, m), |(a, b, c, d)| {
        (0..m).map(|s| t[[a, b, s, d]] * e[(s, c)]).sum::<f64>()
    });
    t = Array4::from_shape_fn((m, m, m, m), |(a, b, c, d)| {
        (0..m).map(|s| t[[a, s, c, d]] * e[(s, b)]).sum::<f64>()
    });
    Array4::from_shape_fn((m, m, m, m), |(a, b, c, d)| {
        (0..m).map(|s| e_inv[(a, s)] * t[[s, b, c, d]]).sum::<f64>()
    })
}

/// `max |closed − transformed| / (1 + |transformed|)` over all twelve families.
pub fn compare_adapted(k: &CurvatureComponents, fd_r: &Array4<f64>, geom: &BaseGeometry, pt: &TangentPoint) -> f64 {
    let oracle = CurvatureComponents::from_frame_tensor(&to_adapted(fd_r, geom, &pt.y));
    k.families
        .iter()
        .zip(&oracle.families)
        .flat_map(|(a, b)| a.iter().zip(b.iter()))
        .fold(0.0, |m, (a, b)| m.max((a - b).abs() / (1.0 + b.abs())))
}

/// Sectional curvature of the plane spanned by adapted-frame vectors `x`, `y`,
/// computed entirely in coordinates from a finite-difference tensor.
pub fn fd_sectional(
    params: &LiftParams,
    model: &BaseModel,
    pt: &TangentPoint,
    fd_r: &Array4<f64>,
    x: &[f64],
    y: &[f64],
) -> Result<f64> {
    let geom = geometry_at(model, &pt.x)?;
    let e = frame_matrix(&geom, &pt.y);
    let g = coordinate_metric(params, model, pt)?;
    let xc = &e * nalgebra::DVector::from_column_slice(x);
    let yc = &e * nalgebra::DVector::from_column_slice(y);
    sectional_from_tensor(fd_r, &g, xc.as_slice(), yc.as_slice())
}
