//! Shared fixtures for the criterion benches.

use ortholax_core::{Model, Potential};

pub const PREC: u32 = 256;

pub fn quartic() -> Potential {
    Potential::from_f64(PREC, &[(4, 1.0)]).expect("admissible")
}

pub fn mixed() -> Potential {
    Potential::from_f64(PREC, &[(2, 1.0), (3, 0.3), (4, 1.0)]).expect("admissible")
}

pub fn model(p: &Potential, order: usize) -> Model {
    Model::build(p, order, PREC, p.vprime_degree()).expect("pipeline builds")
}
