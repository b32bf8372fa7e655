//! Fixtures shared by unit tests.

use crate::base::{BaseModel, BaseSpec};
use crate::lift::LiftParams;
use crate::scalarfn::CoeffFn;

/// Non-symmetric polynomial metric on `[-2, 2]³`, so `∇̇R ≠ 0`.
pub fn generic_model() -> BaseModel {
    let entries: [(&str, Vec<(f64, Vec<u32>)>); 5] = [
        ("0,0", vec![(1.0, vec![0, 0, 0]), (0.3, vec![0, 2, 0])]),
        (
            "1,1",
            vec![(2.0, vec![0, 0, 0]), (0.5, vec![1, 0, 1]), (0.2, vec![2, 0, 0])],
        ),
        ("2,2", vec![(1.5, vec![0, 0, 0]), (0.1, vec![0, 1, 2])]),
        ("0,1", vec![(0.2, vec![0, 0, 1])]),
        ("1,2", vec![(0.1, vec![1, 1, 0])]),
    ];
    BaseSpec::CustomPolynomial {
        dim: 3,
        entries: entries.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
        domain: Some(vec![[-2.0, 2.0]; 3]),
    }
    .build()
    .unwrap()
}

/// Lift with every coefficient nonconstant or nonzero.
pub fn generic_lift() -> LiftParams {
    LiftParams::new(
        [
            CoeffFn::poly(&[2.0, 0.5]),
            CoeffFn::poly(&[1.5, 0.0, 0.1]),
            CoeffFn::poly(&[0.3, 0.2]),
        ],
        [
            CoeffFn::ratio(&[0.4], &[1.0, 1.0]).unwrap(),
            CoeffFn::poly(&[0.2, 0.1]),
            CoeffFn::constant(0.15),
        ],
    )
}
