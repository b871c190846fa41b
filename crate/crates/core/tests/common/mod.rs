#![allow(dead_code)]

//! Shared fixtures and independent oracles for the integration suites.

use std::collections::BTreeSet;
use std::f64::consts::FRAC_PI_2;

use cpflow::complex::{ComplexTopology, VertexId};
use cpflow::geometry::PatternState;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random simple complex on 2..=max_vertices vertices; when `connected` a
/// random spanning tree is laid down first. Thetas are drawn comfortably
/// inside the legal range.
pub fn random_complex(
    rng: &mut ChaCha8Rng,
    max_vertices: usize,
    connected: bool,
) -> ComplexTopology {
    let n = rng.gen_range(2..=max_vertices);
    let mut pairs = BTreeSet::new();
    if connected {
        for v in 1..n {
            let parent = rng.gen_range(0..v);
            pairs.insert((parent, v));
        }
    }
    for _ in 0..rng.gen_range(0..=n) {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a != b {
            pairs.insert((a.min(b), a.max(b)));
        }
    }
    let ids: Vec<VertexId> = (0..n as i64).map(VertexId::Int).collect();
    let edges = pairs
        .into_iter()
        .map(|(a, b)| {
            (
                VertexId::Int(a as i64),
                VertexId::Int(b as i64),
                rng.gen_range(0.3..FRAC_PI_2),
            )
        })
        .collect();
    ComplexTopology::build(ids, edges, None).expect("random complex is valid by construction")
}

pub fn random_state(rng: &mut ChaCha8Rng, len: usize, lo: f64, hi: f64) -> PatternState {
    PatternState::new((0..len).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Bisection root of 2 deg cos(r) arccot(cos r) = target on (0, pi/2);
/// the uniform fixed point of a deg-regular complex with theta = pi/2.
pub fn uniform_radius_oracle(degree: usize, target: f64) -> f64 {
    let f = |r: f64| 2.0 * degree as f64 * r.cos() * 1.0f64.atan2(r.cos()) - target;
    let (mut lo, mut hi) = (1e-12, FRAC_PI_2 - 1e-12);
    assert!(f(lo) > 0.0 && f(hi) < 0.0, "root not bracketed");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

// 8-point Gauss-Legendre nodes and weights on [-1, 1].
const GL8_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_48,
    0.313_706_645_877_887_27,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_27,
    0.222_381_034_453_374_48,
    0.101_228_536_290_376_26,
];

/// Composite 8-point Gauss-Legendre quadrature with `panels` equal panels;
/// the independent oracle against the library's adaptive quadrature.
pub fn gauss_composite(f: &dyn Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let mut total = 0.0;
    let h = (b - a) / panels as f64;
    for p in 0..panels {
        let left = a + p as f64 * h;
        let mid = left + 0.5 * h;
        for (x, w) in GL8_NODES.iter().zip(&GL8_WEIGHTS) {
            total += w * f(mid + 0.5 * h * x);
        }
    }
    total * 0.5 * h
}
