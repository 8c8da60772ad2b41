#![allow(dead_code)]

pub mod fock;

use std::f64::consts::PI;

use gqfim::family::{Param, Temperature};
use gqfim::gaussian_catalog::GateKind;
use gqfim::linalg::{hermitian_eigen, CMat};
use gqfim::ChannelFamily;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const NAMES: [&str; 3] = ["p0", "p1", "p2"];

/// A random catalog-channel family and the point to evaluate it at.
pub struct RandomFamily {
    pub family: ChannelFamily,
    pub point: Vec<f64>,
    pub modes: usize,
}

#[derive(Clone, Copy, PartialEq)]
enum Category {
    Squeezing,
    Displacement,
    Angle,
}

fn category(kind: GateKind, slot: usize) -> Category {
    match (kind, slot) {
        (GateKind::Squeeze | GateKind::TwoModeSqueeze, 0) => Category::Squeezing,
        (GateKind::Displacement, _) => Category::Displacement,
        _ => Category::Angle,
    }
}

fn draw(rng: &mut ChaCha8Rng, c: Category) -> f64 {
    match c {
        Category::Squeezing => rng.random_range(-0.6..0.6),
        Category::Displacement => rng.random_range(-1.0..1.0),
        Category::Angle => rng.random_range(-PI..PI),
    }
}

/// `N` in {1, 2}, `p` in {1, 2, 3}, thermal eigenvalues in `[lo, hi]`.
/// With `pure`, every mode starts in the vacuum instead.
pub fn random_family(seed: u64, pure: bool, lo: f64, hi: f64) -> RandomFamily {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes = rng.random_range(1..=2usize);
    let p = rng.random_range(1..=3usize);
    let names = &NAMES[..p];
    let mut point = vec![0.0; p];
    // None: the parameter sets the first symplectic eigenvalue
    let mut cats: Vec<Option<Category>> = Vec::new();
    let lambda_param = !pure && rng.random_bool(0.5);
    for i in 0..p {
        if i == 0 && lambda_param {
            point[0] = rng.random_range(lo..hi);
            cats.push(None);
        } else {
            let c = [Category::Squeezing, Category::Displacement, Category::Angle][rng.random_range(0..3)];
            point[i] = draw(&mut rng, c);
            cats.push(Some(c));
        }
    }
    let mut used: Vec<bool> = cats.iter().map(|c| c.is_none()).collect();

    let mut initial = Vec::new();
    for m in 0..modes {
        if pure {
            initial.push(Temperature::Lambda(Param::Literal(1.0)));
        } else if m == 0 && lambda_param {
            initial.push(Temperature::Lambda(Param::sym(NAMES[0])));
        } else {
            initial.push(Temperature::Lambda(Param::Literal(rng.random_range(lo..hi))));
        }
    }
    let mut fam = ChannelFamily::new(names, initial).unwrap();

    let kinds: Vec<GateKind> = GateKind::ALL.iter().cloned().filter(|k| k.arity() <= modes).collect();
    for _ in 0..rng.random_range(2..=4usize) {
        let kind = kinds[rng.random_range(0..kinds.len())];
        let targets: Vec<usize> = if kind.arity() == 2 {
            if rng.random_bool(0.5) { vec![0, 1] } else { vec![1, 0] }
        } else {
            vec![rng.random_range(0..modes)]
        };
        let mut params = Vec::new();
        for slot in 0..kind.param_names().len() {
            let c = category(kind, slot);
            let matching: Vec<usize> = (0..p).filter(|&i| cats[i] == Some(c)).collect();
            if !matching.is_empty() && rng.random_bool(0.6) {
                let i = matching[rng.random_range(0..matching.len())];
                used[i] = true;
                params.push(Param::sym(NAMES[i]));
            } else {
                params.push(Param::Literal(draw(&mut rng, c)));
            }
        }
        fam = fam.gate(kind, &targets, params).unwrap();
    }
    for i in 0..p {
        if !used[i] {
            let (kind, params) = match cats[i] {
                Some(Category::Squeezing) => (GateKind::Squeeze, vec![Param::sym(NAMES[i]), Param::Literal(draw(&mut rng, Category::Angle))]),
                Some(Category::Displacement) => (GateKind::Displacement, vec![Param::sym(NAMES[i]), Param::Literal(draw(&mut rng, Category::Displacement))]),
                _ => (GateKind::Rotation, vec![Param::sym(NAMES[i])]),
            };
            let m = rng.random_range(0..modes);
            fam = fam.gate(kind, &[m], params).unwrap();
        }
    }
    RandomFamily { family: fam, point, modes }
}

/// Product of random catalog gates on `modes` modes, moderate squeezing.
pub fn random_symplectic(rng: &mut ChaCha8Rng, modes: usize) -> CMat {
    use gqfim::gaussian_catalog::{beam_splitter, rotation, squeeze};
    let mut s = CMat::identity(2 * modes, 2 * modes);
    for _ in 0..3 {
        for m in 0..modes {
            s = rotation(rng.random_range(-PI..PI), m, modes).unwrap().s() * s;
            s = squeeze(rng.random_range(-0.5..0.5), rng.random_range(-PI..PI), m, modes).unwrap().s() * s;
        }
        if modes > 1 {
            s = beam_splitter(rng.random_range(-PI..PI), rng.random_range(-PI..PI), [0, 1], modes).unwrap().s() * s;
        }
    }
    s
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |a, z| a.max(z.norm()))
}

/// Rounding allowance for comparing the series against the exact QFIM:
/// `100 eps cond(sigma) max(1, |H|)`. Two routes that invert `sigma` differently
/// disagree at this level even where the truncation bound is zero.
pub fn series_rounding_floor(sigma: &CMat, h_scale: f64) -> f64 {
    let ev = hermitian_eigen(sigma).0;
    let cond = ev.max() / ev.min();
    100.0 * f64::EPSILON * cond * h_scale.max(1.0)
}
