//! The `verify`, `scan` and `decompose` drivers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use natlift_core::base::{geometry_at, BaseGeometry, BaseModel};
use natlift_core::connection::{coeffs_at, metric_compatibility_residual, torsion_residual, FrameIndex};
use natlift_core::curvature::{
    components_at, flatness_report, k0_components, lemma2_decompose, sectional_curvature, symmetry_residual,
    CurvatureComponents, Family, LEMMA2_BASIS,
};
use natlift_core::lift::{inverse_blocks_numeric, LiftParams, LiftedPoint, MetricBlocks, TangentPoint};
use natlift_core::oracle::{fd_riemann, to_adapted};
use ndarray::{Array2, Array4};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::report::{Check, Decomposition, DecompositionRow, Report, SectionalRow, Worst};
use crate::CliError;

struct Timer {
    enabled: bool,
    phases: BTreeMap<String, f64>,
    start: Instant,
}

impl Timer {
    fn new(enabled: bool) -> Self {
        Timer {
            enabled,
            phases: BTreeMap::new(),
            start: Instant::now(),
        }
    }

    fn lap(&mut self, phase: &str) {
        let now = Instant::now();
        self.phases.insert(phase.to_string(), (now - self.start).as_secs_f64());
        self.start = now;
    }

    fn finish(self) -> Option<BTreeMap<String, f64>> {
        self.enabled.then_some(self.phases)
    }
}

fn frame_label(f: FrameIndex) -> String {
    match f {
        FrameIndex::H(i) => format!("H{i}"),
        FrameIndex::V(i) => format!("V{i}"),
    }
}

fn argmax2(a: &Array2<f64>) -> (f64, [usize; 2]) {
    a.indexed_iter().fold(
        (0.0, [0, 0]),
        |best, ((i, j), v)| if v.abs() > best.0 { (v.abs(), [i, j]) } else { best },
    )
}

fn argmax4(a: &Array4<f64>) -> (f64, [usize; 4]) {
    a.indexed_iter().fold((0.0, [0; 4]), |best, ((h, k, i, j), v)| {
        if v.abs() > best.0 {
            (v.abs(), [h, k, i, j])
        } else {
            best
        }
    })
}

/// `(value, entry)` of the worst entry over all families of `k`.
fn worst_family_entry(k: &CurvatureComponents) -> (f64, String) {
    Family::ALL
        .iter()
        .map(|f| {
            let (v, [h, kk, i, j]) = argmax4(k.get(*f));
            (v, format!("{f}[{h},{kk},{i},{j}]"))
        })
        .fold((0.0, String::new()), |best, c| {
            if c.0 > best.0 || best.1.is_empty() {
                c
            } else {
                best
            }
        })
}

fn inverse_identity(lp: &LiftedPoint) -> (f64, String) {
    let b = &lp.blocks;
    let h = &lp.inverse;
    let eye = Array2::<f64>::eye(b.dim());
    let cases = [
        ("G1H1+G3H3-I", b.g1.dot(&h.h1) + b.g3.dot(&h.h3) - &eye),
        ("G1H3+G3H2", b.g1.dot(&h.h3) + b.g3.dot(&h.h2)),
        ("G3H1+G2H3", b.g3.dot(&h.h1) + b.g2.dot(&h.h3)),
        ("G3H3+G2H2-I", b.g3.dot(&h.h3) + b.g2.dot(&h.h2) - &eye),
    ];
    cases
        .iter()
        .map(|(name, m)| {
            let (v, [i, j]) = argmax2(m);
            (v, format!("{name}[{i},{j}]"))
        })
        .fold((-1.0, String::new()), |best, c| if c.0 > best.0 { c } else { best })
}

fn inverse_agreement(lp: &LiftedPoint) -> natlift_core::Result<(f64, String)> {
    let numeric = inverse_blocks_numeric(&lp.blocks)?;
    Ok((1..=3)
        .map(|a| {
            let (v, [i, j]) = argmax2(&(lp.inverse.block(a) - numeric.block(a)));
            (v, format!("H{a}[{i},{j}]"))
        })
        .fold((-1.0, String::new()), |best, c| if c.0 > best.0 { c } else { best }))
}

fn symmetry(k: &CurvatureComponents, blocks: &MetricBlocks) -> (f64, String) {
    let res = symmetry_residual(k, blocks);
    if res.antisymmetry >= res.lowered {
        let worst = Family::ALL
            .iter()
            .filter(|f| f.same_kind_arguments())
            .map(|f| {
                let a = k.get(*f);
                let sym = Array4::from_shape_fn(a.raw_dim(), |(h, kk, i, j)| a[[h, kk, i, j]] + a[[h, kk, j, i]]);
                let (v, [h, kk, i, j]) = argmax4(&sym);
                (v, format!("{f}[{h},{kk},{i},{j}]+{f}[{h},{kk},{j},{i}]"))
            })
            .fold((-1.0, String::new()), |best, c| if c.0 > best.0 { c } else { best });
        (res.antisymmetry, worst.1)
    } else {
        (
            res.lowered,
            "lowered pair symmetry R_ABCD = R_CDAB, R_ABCD = -R_BACD".into(),
        )
    }
}

struct PointEval {
    lp: LiftedPoint,
    k: CurvatureComponents,
    /// `(value, entry)` for each per-point check, in [`POINT_CHECKS`] order.
    values: Vec<(f64, String)>,
}

const POINT_CHECKS: [&str; 5] = [
    "inverse_identity",
    "inverse_agreement",
    "metric_compatibility",
    "torsion",
    "curvature_symmetry",
];

fn evaluate_point(
    cfg: &RunConfig,
    params: &LiftParams,
    model: &BaseModel,
    pt: &TangentPoint,
) -> natlift_core::Result<PointEval> {
    let geom = geometry_at(model, &pt.x)?;
    let lp = LiftedPoint::new(params, &geom, pt)?;
    let coeffs = coeffs_at(&lp);
    let k = components_at(&lp);
    let (compat, [c, a, b]) = metric_compatibility_residual(params, model, pt, cfg.oracle.compat_step)?;
    let (tors, [ta, tb]) = torsion_residual(&coeffs, &geom, &pt.y);
    let values = vec![
        inverse_identity(&lp),
        inverse_agreement(&lp)?,
        (
            compat,
            format!(
                "(C, A, B) = ({}, {}, {})",
                frame_label(c),
                frame_label(a),
                frame_label(b)
            ),
        ),
        (tors, format!("(A, B) = ({}, {})", frame_label(ta), frame_label(tb))),
        symmetry(&k, &lp.blocks),
    ];
    Ok(PointEval { lp, k, values })
}

fn worst_at(pt: &TangentPoint, point_id: usize, entry: String) -> Worst {
    Worst {
        point_id,
        x: pt.x.clone(),
        y: pt.y.clone(),
        entry,
    }
}

/// Resolves the configuration and returns the verification report.
pub fn verify(mut cfg: RunConfig) -> Result<Report, CliError> {
    let (model, params) = cfg.resolve()?;
    let mut timer = Timer::new(cfg.timings);
    let pts = cfg.sample.tangent_points(&model);
    let tol = cfg.tolerances.clone();
    let mut report = Report::new("verify", cfg.clone(), model.dim());

    let evals: Vec<natlift_core::Result<PointEval>> = pts
        .par_iter()
        .map(|pt| evaluate_point(&cfg, &params, &model, pt))
        .collect();
    timer.lap("pointwise");

    let failures: Vec<(usize, String)> = evals
        .iter()
        .enumerate()
        .filter_map(|(i, e)| e.as_ref().err().map(|err| (i, err.to_string())))
        .collect();
    if let Some((i, msg)) = failures.first() {
        report.push(Check::failed(
            "evaluation",
            0.0,
            Some(worst_at(&pts[*i], *i, "lifted point".into())),
            format!("{} of {} points failed; first: {msg}", failures.len(), pts.len()),
        ));
    }

    let tolerances = [
        tol.closed_form,
        tol.closed_form,
        tol.fd,
        tol.closed_form,
        tol.closed_form,
    ];
    for (c, name) in POINT_CHECKS.iter().enumerate() {
        let mut worst: Option<(f64, usize, String)> = None;
        for (i, e) in evals.iter().enumerate() {
            if let Ok(ev) = e {
                let (v, entry) = &ev.values[c];
                if worst.as_ref().is_none_or(|w| *v > w.0 || v.is_nan()) {
                    worst = Some((*v, i, entry.clone()));
                }
            }
        }
        if let Some((v, i, entry)) = worst {
            report.push(Check::new(name, v, tolerances[c], Some(worst_at(&pts[i], i, entry))));
        }
    }

    // Oracle on the leading points that evaluated.
    let oracle_ids: Vec<usize> = (0..pts.len())
        .filter(|i| evals[*i].is_ok())
        .take(cfg.oracle.points)
        .collect();
    let oracle: Vec<(usize, natlift_core::Result<(f64, String)>)> = oracle_ids
        .par_iter()
        .map(|&i| {
            let ev = evals[i].as_ref().expect("filtered");
            let r = fd_riemann(&params, &model, &pts[i], cfg.oracle.step).map(|fd| {
                let fd_k = CurvatureComponents::from_frame_tensor(&to_adapted(&fd, &ev.lp.geom, &pts[i].y));
                let rel = CurvatureComponents {
                    families: std::array::from_fn(|f| {
                        Array4::from_shape_fn(fd_k.families[f].raw_dim(), |idx| {
                            let b = fd_k.families[f][idx];
                            (ev.k.families[f][idx] - b) / (1.0 + b.abs())
                        })
                    }),
                };
                worst_family_entry(&rel)
            });
            (i, r)
        })
        .collect();
    timer.lap("oracle");
    if !oracle.is_empty() {
        let mut check = None::<Check>;
        for (i, r) in &oracle {
            match r {
                Ok((v, entry)) => {
                    if check.as_ref().is_none_or(|c| *v > c.measured) {
                        check = Some(Check::new(
                            "oracle_equivalence",
                            *v,
                            tol.fd,
                            Some(worst_at(&pts[*i], *i, entry.clone())),
                        ));
                    }
                }
                Err(e) => {
                    check = Some(Check::failed(
                        "oracle_equivalence",
                        tol.fd,
                        Some(worst_at(&pts[*i], *i, "fd_riemann".into())),
                        e.to_string(),
                    ));
                    break;
                }
            }
        }
        report.push(check.expect("at least one oracle point"));
    }

    let enforce = cfg.expect_constant_curvature;
    let mark = |c: Check| if enforce { c } else { c.informational() };
    match flatness_report(&params, &model, &cfg.sample) {
        Ok(flat) => {
            // Locate the worst entry of K − K₀(best_k).
            let mut worst: Option<(f64, usize, String)> = None;
            for (i, e) in evals.iter().enumerate() {
                if let Ok(ev) = e {
                    let diff = &ev.k - &k0_components(flat.best_k, &ev.lp.blocks);
                    let (v, entry) = worst_family_entry(&diff);
                    if worst.as_ref().is_none_or(|w| v > w.0) {
                        worst = Some((v, i, entry));
                    }
                }
            }
            let w = worst.map(|(_, i, entry)| worst_at(&pts[i], i, format!("{entry} at k = {}", flat.best_k)));
            report.push(mark(Check::new(
                "constant_curvature",
                flat.min_residual,
                tol.flatness,
                w,
            )));

            let n_pts = pts.len();
            let (lo, hi) = flat.sectional.iter().enumerate().fold((0, 0), |(lo, hi), (j, v)| {
                (
                    if *v < flat.sectional[lo] { j } else { lo },
                    if *v > flat.sectional[hi] { j } else { hi },
                )
            });
            let w = (!flat.sectional.is_empty()).then(|| {
                worst_at(
                    &pts[hi % n_pts],
                    hi % n_pts,
                    format!(
                        "planes {hi} (k = {}) and {lo} (k = {})",
                        flat.sectional[hi], flat.sectional[lo]
                    ),
                )
            });
            report.push(mark(Check::new("sectional_spread", flat.spread, tol.flatness, w)));
            report.best_k = Some(flat.best_k);
            report.sectional = flat
                .sectional
                .iter()
                .enumerate()
                .map(|(j, k)| SectionalRow {
                    plane_id: j,
                    point_id: j % n_pts,
                    k_value: *k,
                })
                .collect();
        }
        Err(e) => report.push(mark(Check::failed(
            "constant_curvature",
            tol.flatness,
            None,
            e.to_string(),
        ))),
    }
    timer.lap("flatness");
    report.timings = timer.finish();
    Ok(report)
}

/// CSV of sectional curvatures over the sampled planes; plane `j` sits at
/// point `j mod points`.
pub fn scan(mut cfg: RunConfig) -> Result<Result<String, String>, CliError> {
    let (model, params) = cfg.resolve()?;
    let n = model.dim();
    let pts = cfg.sample.tangent_points(&model);
    let planes = cfg.sample.planes(n);
    let per_point: Result<Vec<(CurvatureComponents, MetricBlocks)>, String> = pts
        .par_iter()
        .enumerate()
        .map(|(i, pt)| {
            let geom: BaseGeometry = geometry_at(&model, &pt.x).map_err(|e| format!("point {i}: {e}"))?;
            let lp = LiftedPoint::new(&params, &geom, pt).map_err(|e| format!("point {i}: {e}"))?;
            Ok((components_at(&lp), lp.blocks))
        })
        .collect();
    let per_point = match per_point {
        Ok(v) => v,
        Err(e) => return Ok(Err(e)),
    };
    let ks: Result<Vec<f64>, String> = planes
        .par_iter()
        .enumerate()
        .map(|(j, (x, y))| {
            let (k, b) = &per_point[j % pts.len()];
            sectional_curvature(k, b, x, y).map_err(|e| format!("plane {j}: {e}"))
        })
        .collect();
    let ks = match ks {
        Ok(v) => v,
        Err(e) => return Ok(Err(e)),
    };

    let mut out = String::from("sample_id,point_id");
    for (prefix, len) in [("x", n), ("y", n), ("X", 2 * n), ("Y", 2 * n)] {
        for i in 0..len {
            write!(out, ",{prefix}{i}").unwrap();
        }
    }
    out.push_str(",k_value\n");
    for (j, ((x, y), k)) in planes.iter().zip(&ks).enumerate() {
        let p = j % pts.len();
        write!(out, "{j},{p}").unwrap();
        for v in pts[p]
            .x
            .iter()
            .chain(&pts[p].y)
            .chain(x)
            .chain(y)
            .chain(std::iter::once(k))
        {
            write!(out, ",{v:e}").unwrap();
        }
        out.push('\n');
    }
    Ok(Ok(out))
}

/// Ten-term coefficients of `family − family₀(k)` at every sample point.
pub fn decompose(mut cfg: RunConfig, family: Family, k: f64) -> Result<Report, CliError> {
    let (model, params) = cfg.resolve()?;
    let n = model.dim();
    if n < 3 {
        return Err(CliError::Config(format!(
            "decompose needs a base of dimension >= 3, got {n}"
        )));
    }
    let mut timer = Timer::new(cfg.timings);
    let pts = cfg.sample.tangent_points(&model);
    let rows: Vec<DecompositionRow> = pts
        .par_iter()
        .enumerate()
        .map(|(i, pt)| {
            let r = geometry_at(&model, &pt.x).and_then(|geom| {
                let lp = LiftedPoint::new(&params, &geom, pt)?;
                let diff = components_at(&lp).get(family) - k0_components(k, &lp.blocks).get(family);
                lemma2_decompose(&diff, &geom, &pt.y)
            });
            let (alpha, residual, error) = match r {
                Ok(l) => (Some(l.alpha), Some(l.residual), None),
                Err(e) => (None, None, Some(e.to_string())),
            };
            DecompositionRow {
                point_id: i,
                x: pt.x.clone(),
                y: pt.y.clone(),
                alpha,
                residual,
                error,
            }
        })
        .collect();
    timer.lap("decompose");

    let mut report = Report::new("decompose", cfg.clone(), n);
    let failed: Vec<&DecompositionRow> = rows.iter().filter(|r| r.error.is_some()).collect();
    match failed.first() {
        Some(r) => report.push(Check::failed(
            "decomposition",
            0.0,
            Some(Worst {
                point_id: r.point_id,
                x: r.x.clone(),
                y: r.y.clone(),
                entry: family.to_string(),
            }),
            format!(
                "{} of {} points failed; first: {}",
                failed.len(),
                rows.len(),
                r.error.as_deref().unwrap_or_default()
            ),
        )),
        None => {
            let (v, i) = rows
                .iter()
                .map(|r| r.residual.unwrap_or(f64::NAN))
                .enumerate()
                .fold((0.0f64, 0), |b, (i, v)| if v > b.0 || v.is_nan() { (v, i) } else { b });
            let entry = format!("{family} least-squares residual");
            report.push(
                Check::new(
                    "decomposition_residual",
                    v,
                    cfg.tolerances.closed_form,
                    Some(worst_at(&pts[i], i, entry)),
                )
                .informational(),
            );
        }
    }
    report.decomposition = Some(Decomposition {
        family: family.to_string(),
        k,
        basis: LEMMA2_BASIS.to_vec(),
        rows,
    });
    report.timings = timer.finish();
    Ok(report)
}
