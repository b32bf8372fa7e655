//! Seeded sampling of tangent points and 2-planes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::base::BaseModel;
use crate::lift::TangentPoint;

/// Minimum Gram determinant of a normalized plane sample (Euclidean components).
pub const PLANE_GRAM_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleSpec {
    pub points: usize,
    pub planes: usize,
    pub seed: u64,
    /// Each fiber coordinate is drawn from this interval.
    pub fiber_range: [f64; 2],
    /// Overrides the model's sampling box for the base point.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_box: Option<Vec<[f64; 2]>>,
}

impl Default for SampleSpec {
    fn default() -> Self {
        SampleSpec {
            points: 20,
            planes: 50,
            seed: 0,
            fiber_range: [-1.0, 1.0],
            base_box: None,
        }
    }
}

impl SampleSpec {
    pub fn new(points: usize, planes: usize, seed: u64) -> Self {
        SampleSpec {
            points,
            planes,
            seed,
            ..Self::default()
        }
    }

    /// `points` tangent points, deterministic in `seed`.
    pub fn tangent_points(&self, model: &BaseModel) -> Vec<TangentPoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let bx = self.base_box.clone().unwrap_or_else(|| model.sample_box());
        let [lo, hi] = self.fiber_range;
        (0..self.points)
            .map(|_| {
                let x: Vec<f64> = bx.iter().map(|[a, b]| rng.gen_range(*a..=*b)).collect();
                let y: Vec<f64> = (0..model.dim()).map(|_| rng.gen_range(lo..=hi)).collect();
                TangentPoint::new(x, y)
            })
            .collect()
    }

    /// `planes` pairs of adapted-frame vectors in dimension `2n`, drawn from an
    /// RNG stream independent of the point stream.
    pub fn planes(&self, n: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1);
        let mut out = Vec::with_capacity(self.planes);
        while out.len() < self.planes {
            let mut draw = || {
                let v: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
                let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                v.into_iter().map(|a| a / norm).collect::<Vec<f64>>()
            };
            let (x, y) = (draw(), draw());
            let xy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>();
            if 1.0 - xy * xy >= PLANE_GRAM_FLOOR {
                out.push((x, y));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_inside_box() {
        let spec = SampleSpec::new(30, 40, 7);
        let model = BaseModel::sphere(1.0);
        let a = spec.tangent_points(&model);
        assert_eq!(a, spec.tangent_points(&model));
        for p in &a {
            model.check_domain(&p.x).unwrap();
            assert!(p.y.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
        let planes = spec.planes(2);
        assert_eq!(planes, spec.planes(2));
        assert_eq!(planes.len(), 40);
        assert_ne!(SampleSpec::new(30, 40, 8).tangent_points(&model), a);
    }

    #[test]
    fn planes_are_normalized_and_nondegenerate() {
        for (x, y) in SampleSpec::new(1, 200, 3).planes(3) {
            let nx: f64 = x.iter().map(|a| a * a).sum::<f64>();
            assert!((nx - 1.0).abs() < 1e-12);
            let xy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>();
            assert!(1.0 - xy * xy >= PLANE_GRAM_FLOOR);
        }
    }

    #[test]
    fn spec_json_defaults() {
        let s: SampleSpec = serde_json::from_str(r#"{"points":5,"seed":11}"#).unwrap();
        assert_eq!(s.points, 5);
        assert_eq!(s.planes, 50);
        assert_eq!(s.fiber_range, [-1.0, 1.0]);
    }
}
