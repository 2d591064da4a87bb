//! Closed forms and synthetic kernels shared by the oracle and acceptance suites.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use raman_core::*;

/// `sum_k y^k / (k! (k + order)!)` for `y >= 0`, i.e. `I_order(2 sqrt y) / y^(order/2)`.
pub fn modified_bessel_series(y: f64, order: u32) -> f64 {
    let o = order as f64;
    let mut term = 1.0 / (1..=order).map(f64::from).product::<f64>();
    let mut sum = term;
    for k in 1..500 {
        let kf = k as f64;
        term *= y / (kf * (kf + o));
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

/// Relative L2 error of Kaa's smooth part and of Kab against the
/// constant-coupling solution inside a square pump with no walk-off.
pub fn square_pump_errors(n: usize, g0: f64) -> (f64, f64) {
    // margin 2.5 puts the pump edges on cell boundaries for n divisible by 5
    let grid = make_grid(75.0, 200.0, 0.0, n, n, 2.5).unwrap();
    let pump = PumpConfig::new(200.0, 0.0, g0, PumpShape::Square).unwrap();
    let g = build_green(&grid, &pump, Pass::Stokes).unwrap();
    let (dt, dz, l) = (grid.dt(), grid.dz(), grid.length());
    let t_on = -100.0;
    let (mut e_aa, mut n_aa, mut e_ab, mut n_ab) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        let ti = grid.t(i);
        if !(ti > t_on && ti < -t_on) {
            continue;
        }
        for j in 0..i {
            let tj = grid.t(j);
            if tj > t_on {
                let tau = ti - tj;
                let want = g0 * g0 * l * modified_bessel_series(g0 * g0 * l * tau, 1) * dt;
                e_aa += (g.kaa[(i, j)] - want).norm_sqr();
                n_aa += want * want;
            }
        }
        for k in 0..n {
            let y = g0 * g0 * (l - grid.z(k)) * (ti - t_on);
            let want = g0 * modified_bessel_series(y, 0) * (dt * dz).sqrt();
            e_ab += (g.kab[(i, k)] - want).norm_sqr();
            n_ab += want * want;
        }
    }
    ((e_aa / n_aa).sqrt(), (e_ab / n_ab).sqrt())
}

pub fn random_unitary(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<C64> {
    let m = DMatrix::from_fn(n, n, |_, _| {
        C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
    });
    m.qr().q()
}

pub struct Planted {
    pub green: GreenSet,
    pub eta: Vec<f64>,
    pub v: DMatrix<C64>,
}

/// Beamsplitter kernels built from random bases and chosen efficiencies.
pub fn planted_beamsplitter(n: usize, eta: &[f64], seed: u64) -> Planted {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (u, y, v, x) = (
        random_unitary(n, &mut rng),
        random_unitary(n, &mut rng),
        random_unitary(n, &mut rng),
        random_unitary(n, &mut rng),
    );
    let c = DMatrix::from_diagonal(&DVector::from_iterator(
        n,
        eta.iter().map(|e| C64::new((1.0 - e).sqrt(), 0.0)),
    ));
    let s = DMatrix::from_diagonal(&DVector::from_iterator(
        n,
        eta.iter().map(|e| C64::new(e.sqrt(), 0.0)),
    ));
    let grid = SimulationGrid::new(10.0, 50.0, n, n).unwrap();
    let green = GreenSet::from_blocks(
        GreenKind::AntiStokesBeamsplitter,
        grid,
        &u * &c * y.adjoint(),
        &u * &s * v.adjoint(),
        &x * &s * y.adjoint(),
        &x * &c * v.adjoint(),
    )
    .unwrap();
    Planted {
        green,
        eta: eta.to_vec(),
        v,
    }
}
