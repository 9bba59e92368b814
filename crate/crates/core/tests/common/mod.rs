#![allow(dead_code)]

use std::sync::OnceLock;

use biortho_core::construction::{ConstructionConfig, ConstructionState};
use biortho_core::orthopoly::OrthoBasis;
use biortho_core::weights::{AdmissiblePair, Exponents, FreudWeight, Growth, InnerWeight, NodeSource};

pub const ALPHA: f64 = 3.0;
pub const GAMMA: f64 = 0.2;
pub const N0: usize = 2;
pub const NODES: usize = 10;

/// Hermite weight, `g(k) = k^3`, ten nodes from `x_1 = 1`.
pub struct Toy {
    pub basis: OrthoBasis<f64>,
    pub pair: AdmissiblePair<f64>,
    pub state: ConstructionState<f64>,
    pub inner: InnerWeight<f64>,
}

impl Toy {
    pub fn growth(&self) -> Growth<f64> {
        Growth::Power { alpha: ALPHA }
    }
}

pub fn toy() -> &'static Toy {
    static TOY: OnceLock<Toy> = OnceLock::new();
    TOY.get_or_init(|| {
        let basis = OrthoBasis::new(FreudWeight::hermite(), 3000).unwrap();
        let pair = AdmissiblePair::power(ALPHA, GAMMA, N0);
        let state = ConstructionState::build(&basis, &pair, ConstructionConfig::default(), NODES).unwrap();
        let inner = InnerWeight::new(
            NodeSource::Explicit(state.nodes().to_vec()),
            Exponents::Constant(0.5),
            0.25,
            0.01,
        )
        .unwrap();
        Toy {
            basis,
            pair,
            state,
            inner,
        }
    })
}

/// Exact `rho_n^2` for `e^{-x^2}` from Hankel determinants of the moments
/// `mu_{2k} = (2k-1)!! / 2^k` (normalised by `sqrt(pi)`).
pub fn hermite_rho_sq_exact(n: usize) -> num_rational::BigRational {
    use num_rational::BigRational;
    use num_traits::{One, Zero};
    let moment = |k: usize| -> BigRational {
        if k % 2 == 1 {
            return BigRational::zero();
        }
        let mut m = BigRational::one();
        for j in 0..k / 2 {
            m = m * BigRational::from_integer((2 * j + 1).into()) / BigRational::from_integer(2.into());
        }
        m
    };
    let hankel = |size: usize| -> BigRational {
        let mut a: Vec<Vec<BigRational>> = (0..size).map(|i| (0..size).map(|j| moment(i + j)).collect()).collect();
        let mut det = BigRational::one();
        for c in 0..size {
            let p = (c..size).find(|&r| !a[r][c].is_zero()).expect("Hankel matrix is positive definite");
            if p != c {
                a.swap(p, c);
                det = -det;
            }
            det = det * a[c][c].clone();
            for r in c + 1..size {
                let f = a[r][c].clone() / a[c][c].clone();
                for k in c..size {
                    let t = a[c][k].clone() * f.clone();
                    a[r][k] = a[r][k].clone() - t;
                }
            }
        }
        det
    };
    let (d0, d1, d2) = (hankel(n - 1), hankel(n), hankel(n + 1));
    d0 * d2 / (d1.clone() * d1)
}

pub fn rational_to_f64(r: &num_rational::BigRational) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().expect("finite rational")
}
