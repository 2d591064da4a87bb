//! Chaining the write (Stokes) pass into the read (anti-Stokes) pass.
//!
//! A stored atomic mode `phi(z)` is read by the anti-Stokes pass into an
//! output light mode `sigma(t)`, leaving a residual polarization
//! `epsilon(z)`; `|sigma|^2 + |epsilon|^2 = 1` and the readout inefficiency
//! is `1 - eta = |epsilon|^2`. In scaled form
//! `conj(sigma) = Kab conj(phi)` and `conj(epsilon) = Kbb conj(phi)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::decomposition::{
    bloch_messiah, verify_structure, weighted_inner, weighted_norm_sqr, BeamsplitterModes,
    ResidualReport, SqueezerModes,
};
use crate::error::{Error, Result};
use crate::grid::{DimensionlessParams, PumpConfig, SimulationGrid};
use crate::linalg::canonical_phase;
use crate::propagator::{build_green, evolve_antistokes, GreenKind, GreenSet, Pass};

type C64 = Complex64;

/// Allowed deviation of the stored mode's norm from one.
pub const NORM_TOLERANCE: f64 = 1e-6;

/// Samples below this fraction of the peak are ignored when counting nodes.
pub const NODE_THRESHOLD: f64 = 1e-2;

/// Grid and pump of one pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PassConfig {
    pub grid: SimulationGrid,
    pub pump: PumpConfig,
}

impl PassConfig {
    pub fn dimensionless(&self) -> DimensionlessParams {
        self.pump.dimensionless(self.grid.length())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReadoutResult {
    /// Output light mode over the readout time grid, (ps)^-1/2.
    pub sigma: Vec<C64>,
    /// Residual atomic mode over z, (mm)^-1/2.
    pub epsilon: Vec<C64>,
    /// `1 - eta`, the weighted norm of `epsilon`.
    pub residual: f64,
    /// 1-based Stokes mode that was read, when known.
    pub target_mode_index: Option<usize>,
    /// `|sigma|^2 + |epsilon|^2 - 1`.
    pub normalization_error: f64,
}

impl ReadoutResult {
    pub fn efficiency(&self) -> f64 {
        1.0 - self.residual
    }
}

fn normalized_mode(grid: &SimulationGrid, phi: &[C64]) -> Result<Vec<C64>> {
    if phi.len() != grid.nz() {
        return Err(Error::invalid(format!(
            "atomic mode has {} samples, grid has nz = {}",
            phi.len(),
            grid.nz()
        )));
    }
    let norm = weighted_norm_sqr(phi, grid.dz()).sqrt();
    if !((norm - 1.0).abs() <= NORM_TOLERANCE) {
        return Err(Error::invalid(format!(
            "atomic mode is not normalized (norm {norm})"
        )));
    }
    Ok(phi.iter().map(|x| x / norm).collect())
}

fn assemble(grid: &SimulationGrid, sigma: Vec<C64>, epsilon: Vec<C64>) -> ReadoutResult {
    let s = weighted_norm_sqr(&sigma, grid.dt());
    let e = weighted_norm_sqr(&epsilon, grid.dz());
    ReadoutResult {
        sigma,
        epsilon,
        residual: e.clamp(0.0, 1.0),
        target_mode_index: None,
        normalization_error: s + e - 1.0,
    }
}

/// Readout of the atomic mode `phi` through precomputed anti-Stokes kernels.
pub fn readout_modes(g: &GreenSet, phi: &[C64]) -> Result<ReadoutResult> {
    if g.kind != GreenKind::AntiStokesBeamsplitter {
        return Err(Error::invalid(
            "readout needs anti-Stokes (beamsplitter) kernels",
        ));
    }
    let phi = normalized_mode(&g.grid, phi)?;
    let (st, sz) = (g.grid.dt().sqrt(), g.grid.dz().sqrt());
    let conj_phi = DVector::from_iterator(phi.len(), phi.iter().map(|x| x.conj() * sz));
    let sigma = (&g.kab * &conj_phi).iter().map(|x| x.conj() / st).collect();
    let epsilon = (&g.kbb * &conj_phi).iter().map(|x| x.conj() / sz).collect();
    Ok(assemble(&g.grid, sigma, epsilon))
}

/// Same as [`readout_modes`] but by a single propagation, without forming
/// the kernels. This is what the coupling sweeps use.
pub fn readout_by_propagation(pass: &PassConfig, phi: &[C64]) -> Result<ReadoutResult> {
    let grid = &pass.grid;
    let phi = normalized_mode(grid, phi)?;
    let c_in = vec![C64::new(0.0, 0.0); grid.nt()];
    let d_in: Vec<C64> = phi.iter().map(|x| x.conj()).collect();
    let (c_out, d_out) = evolve_antistokes(grid, &pass.pump, &c_in, &d_in)?;
    let sigma = c_out.iter().map(|x| x.conj()).collect();
    let epsilon = d_out.iter().map(|x| x.conj()).collect();
    Ok(assemble(grid, sigma, epsilon))
}

/// Basis-change coefficients `U[m][n] = int dz conj(phi_out_n) e^{-i dk z} Phi_in_m`.
#[derive(Debug, Clone, Serialize)]
pub struct OverlapMatrix {
    #[serde(skip)]
    pub u: DMatrix<C64>,
    pub delta_k: f64,
}

impl OverlapMatrix {
    /// `|U^dag U - 1|` in operator norm.
    pub fn unitarity_defect(&self) -> f64 {
        let n = self.u.ncols();
        crate::linalg::op_norm(&(self.u.adjoint() * &self.u - DMatrix::identity(n, n)))
    }
}

/// Overlaps of Stokes atomic output modes with readout atomic input modes.
pub fn basis_overlap(
    stokes: &SqueezerModes,
    readout: &BeamsplitterModes,
    delta_k: f64,
) -> Result<OverlapMatrix> {
    if !stokes.grid.shares_z_axis(&readout.grid) {
        return Err(Error::invalid(
            "Stokes and readout grids must share length and nz",
        ));
    }
    if stokes.pairs.is_empty() || readout.pairs.is_empty() {
        return Err(Error::invalid("basis_overlap needs non-empty mode lists"));
    }
    let phi_out: Vec<&[C64]> = stokes.pairs.iter().map(|p| p.phi_out.as_slice()).collect();
    let phi_in: Vec<&[C64]> = readout.pairs.iter().map(|p| p.phi_in.as_slice()).collect();
    Ok(overlap_matrix(&phi_out, &phi_in, &stokes.grid, delta_k))
}

/// [`basis_overlap`] on raw mode functions sampled on `grid`'s z axis.
pub fn overlap_matrix(
    phi_out: &[&[C64]],
    phi_in: &[&[C64]],
    grid: &SimulationGrid,
    delta_k: f64,
) -> OverlapMatrix {
    let z = grid.z_samples();
    let dz = grid.dz();
    let u = DMatrix::from_fn(phi_in.len(), phi_out.len(), |m, n| {
        z.iter()
            .enumerate()
            .map(|(i, &zi)| {
                phi_out[n][i].conj() * C64::from_polar(1.0, -delta_k * zi) * phi_in[m][i]
            })
            .sum::<C64>()
            * dz
    });
    OverlapMatrix { u, delta_k }
}

/// Largest overlap between the target's output light and the output light
/// produced by reading each of the other modes.
pub fn crosstalk_check(g: &GreenSet, phi_target: &[C64], phi_others: &[Vec<C64>]) -> Result<f64> {
    let target = readout_modes(g, phi_target)?;
    let mut worst: f64 = 0.0;
    for other in phi_others {
        let o = readout_modes(g, other)?;
        worst = worst.max(weighted_inner(&target.sigma, &o.sigma, g.grid.dt()).norm());
    }
    Ok(worst)
}

/// Everything needed to re-run and audit one chained write/read.
#[derive(Debug, Clone, Serialize)]
pub struct ChainProvenance {
    pub stokes: PassConfig,
    pub readout: PassConfig,
    pub stokes_dimensionless: DimensionlessParams,
    pub readout_dimensionless: DimensionlessParams,
    pub delta_k: f64,
    pub target_mode_index: usize,
    pub target_occupancy: f64,
    pub total_photons: f64,
    pub stokes_structure: ResidualReport,
    pub stokes_decomposition: ResidualReport,
    pub readout_structure: ResidualReport,
}

#[derive(Debug, Clone)]
pub struct ChainResult {
    pub readout: ReadoutResult,
    pub stokes_modes: SqueezerModes,
    pub readout_kernels: GreenSet,
    pub provenance: ChainProvenance,
}

/// Writes with the Stokes pass, then reads Stokes atomic output mode
/// `target` (1-based) with the anti-Stokes pass, applying the phase
/// mismatch `e^{i dk z}` to the stored mode.
pub fn full_chain(
    stokes: &PassConfig,
    readout: &PassConfig,
    delta_k: f64,
    target: usize,
) -> Result<ChainResult> {
    if !stokes.grid.shares_z_axis(&readout.grid) {
        return Err(Error::invalid(
            "Stokes and readout grids must share length and nz",
        ));
    }
    let g = build_green(&stokes.grid, &stokes.pump, Pass::Stokes)?;
    let stokes_structure = verify_structure(&g);
    let modes = bloch_messiah(&g)?;
    let pair = target
        .checked_sub(1)
        .and_then(|k| modes.pairs.get(k))
        .ok_or_else(|| {
            Error::invalid(format!(
                "target mode {target} not available ({} significant pairs)",
                modes.pairs.len()
            ))
        })?;
    let phi = stored_mode(&pair.phi_out, &stokes.grid, delta_k);

    let ga = build_green(&readout.grid, &readout.pump, Pass::AntiStokes)?;
    let readout_structure = verify_structure(&ga);
    let mut result = readout_modes(&ga, &phi)?;
    result.target_mode_index = Some(target);
    log::info!(
        "chain: mode {target} (occupancy {:.4e}) read with residual {:.4e}",
        pair.occupancy(),
        result.residual
    );

    let provenance = ChainProvenance {
        stokes: *stokes,
        readout: *readout,
        stokes_dimensionless: stokes.dimensionless(),
        readout_dimensionless: readout.dimensionless(),
        delta_k,
        target_mode_index: target,
        target_occupancy: pair.occupancy(),
        total_photons: modes.total_photons(),
        stokes_structure,
        stokes_decomposition: modes.residuals.clone(),
        readout_structure,
    };
    Ok(ChainResult {
        readout: result,
        stokes_modes: modes,
        readout_kernels: ga,
        provenance,
    })
}

/// The atomic mode seen by the readout: `phi_out(z) e^{i dk z}`.
pub fn stored_mode(phi_out: &[C64], grid: &SimulationGrid, delta_k: f64) -> Vec<C64> {
    phi_out
        .iter()
        .zip(grid.z_samples())
        .map(|(p, z)| p * C64::from_polar(1.0, delta_k * z))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub g0: f64,
    pub residual: f64,
    pub normalization_error: f64,
}

/// Readout residual of `phi` at each coupling, evaluated in parallel.
pub fn sweep_readout(pass: &PassConfig, phi: &[C64], g0s: &[f64]) -> Result<Vec<SweepPoint>> {
    g0s.par_iter()
        .map(|&g0| {
            let p = PassConfig {
                grid: pass.grid,
                pump: pass.pump.with_g0(g0),
            };
            let r = readout_by_propagation(&p, phi)?;
            Ok(SweepPoint {
                g0,
                residual: r.residual,
                normalization_error: r.normalization_error,
            })
        })
        .collect()
}

/// Interior local minima of sampled `ys(xs)`, each refined by the vertex of
/// the parabola through the bracketing samples. Returns `(x, y)` pairs.
pub fn local_minima(xs: &[f64], ys: &[f64]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for k in 1..xs.len().saturating_sub(1) {
        let (y0, y1, y2) = (ys[k - 1], ys[k], ys[k + 1]);
        if !(y1 < y0 && y1 <= y2) {
            continue;
        }
        let (x0, x1, x2) = (xs[k - 1], xs[k], xs[k + 1]);
        let d0 = (y1 - y0) / (x1 - x0);
        let d1 = (y2 - y1) / (x2 - x1);
        let curv = (d1 - d0) / (x2 - x0);
        if curv > 0.0 {
            let xv = 0.5 * (x0 + x1) - d0 / (2.0 * curv);
            let xv = xv.clamp(x0, x2);
            let yv = y0 + d0 * (xv - x0) + curv * (xv - x0) * (xv - x1);
            out.push((xv, yv.min(y1)));
        } else {
            out.push((x1, y1));
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct ReadoutMinimum {
    pub g0: f64,
    pub residual: f64,
    pub nodes: usize,
}

/// Scans the coupling, refines each interior minimum and re-evaluates the
/// readout there, reporting the node count of the output mode.
pub fn readout_minima(pass: &PassConfig, phi: &[C64], g0s: &[f64]) -> Result<Vec<ReadoutMinimum>> {
    let scan = sweep_readout(pass, phi, g0s)?;
    let ys: Vec<f64> = scan.iter().map(|p| p.residual).collect();
    local_minima(g0s, &ys)
        .into_iter()
        .map(|(g0, _)| {
            let p = PassConfig {
                grid: pass.grid,
                pump: pass.pump.with_g0(g0),
            };
            let r = readout_by_propagation(&p, phi)?;
            Ok(ReadoutMinimum {
                g0,
                residual: r.residual,
                nodes: node_count(&r.sigma),
            })
        })
        .collect()
}

/// Sign changes of the real part after phase canonicalization, ignoring
/// samples below [`NODE_THRESHOLD`] of the peak.
pub fn node_count(f: &[C64]) -> usize {
    let p = canonical_phase(f);
    let re: Vec<f64> = f.iter().map(|x| (x * p).re).collect();
    let peak = re.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if peak == 0.0 {
        return 0;
    }
    let mut last = 0.0;
    let mut count = 0;
    for &x in re.iter().filter(|x| x.abs() >= NODE_THRESHOLD * peak) {
        if last != 0.0 && x.signum() != last {
            count += 1;
        }
        last = x.signum();
    }
    count
}

/// Outcome of [`calibrate_g0`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Calibration {
    pub g0: f64,
    pub total_photons: f64,
    pub steps: usize,
    pub relative_error: f64,
}

/// Mean Stokes photon number for a coupling, from the atomic-impulse kernel.
pub fn stokes_photons(grid: &SimulationGrid, pump: &PumpConfig) -> Result<f64> {
    Ok(build_green(grid, pump, Pass::Stokes)?.total_photons())
}

/// Bisection on `ln N_tot(g0)` for the coupling that yields `target`
/// photons. Stops at relative error `rel_tol` or after `max_steps`
/// evaluations, whichever comes first.
pub fn calibrate_g0(
    grid: &SimulationGrid,
    pump: &PumpConfig,
    target: f64,
    rel_tol: f64,
    max_steps: usize,
) -> Result<Calibration> {
    if !(target > 0.0 && target.is_finite()) {
        return Err(Error::invalid("calibration target must be positive"));
    }
    let goal = target.ln();
    let mut steps = 0;
    let eval = |g0: f64, steps: &mut usize| -> Result<f64> {
        *steps += 1;
        let n = stokes_photons(grid, &pump.with_g0(g0))?;
        log::debug!("calibrate: g0 = {g0:.8e} gives N_tot = {n:.6e}");
        Ok(n)
    };

    // bracket, starting from the coupling where the pumped area gives
    // roughly unit gain
    let scale = 1.0 / (grid.length() * pump.tau_p).sqrt();
    let mut lo = scale;
    let mut hi = scale;
    let mut n_lo = eval(lo, &mut steps)?;
    let mut n_hi = n_lo;
    while n_lo > target {
        hi = lo;
        n_hi = n_lo;
        lo /= 2.0;
        n_lo = eval(lo, &mut steps)?;
        if steps >= max_steps {
            break;
        }
    }
    while n_hi < target && steps < max_steps {
        lo = hi;
        n_lo = n_hi;
        hi *= 1.5;
        n_hi = match eval(hi, &mut steps) {
            Ok(n) => n,
            // overshooting into overflow still brackets the target
            Err(e) if e.is_numerical() => f64::INFINITY,
            Err(e) => return Err(e),
        };
    }
    let mut best = if (n_lo.ln() - goal).abs() < (n_hi.ln() - goal).abs() {
        (lo, n_lo)
    } else {
        (hi, n_hi)
    };
    while steps < max_steps && (best.1 / target - 1.0).abs() > rel_tol {
        let mid = 0.5 * (lo + hi);
        let n = eval(mid, &mut steps)?;
        if n.ln() < goal {
            lo = mid;
        } else {
            hi = mid;
        }
        if (n.ln() - goal).abs() < (best.1.ln() - goal).abs() {
            best = (mid, n);
        }
    }
    let relative_error = (best.1 / target - 1.0).abs();
    if !(relative_error <= rel_tol) {
        return Err(Error::NumericalFailure(format!(
            "calibration reached N_tot = {:.6e} after {steps} steps (target {target:.6e})",
            best.1
        )));
    }
    Ok(Calibration {
        g0: best.0,
        total_photons: best.1,
        steps,
        relative_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minima_of_sampled_parabola() {
        let xs: Vec<f64> = (0..11).map(|k| k as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (x - 0.43).powi(2)).collect();
        let m = local_minima(&xs, &ys);
        assert_eq!(m.len(), 1);
        assert!((m[0].0 - 0.43).abs() < 1e-12);
        assert!(m[0].1.abs() < 1e-12);
    }

    #[test]
    fn minima_ignore_endpoints() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        assert!(local_minima(&xs, &[0.0, 1.0, 2.0, 3.0]).is_empty());
        assert!(local_minima(&xs, &[3.0, 2.0, 1.0, 0.0]).is_empty());
    }

    #[test]
    fn node_counting() {
        let f: Vec<C64> = (0..200)
            .map(|k| {
                let x = k as f64 / 199.0 * 3.0 * std::f64::consts::PI;
                C64::new(0.0, x.sin() + 0.3)
            })
            .collect();
        // sin + 0.3 crosses zero 2 times on (0, 3 pi)
        assert_eq!(node_count(&f), 2);
        assert_eq!(node_count(&[C64::new(0.0, 0.0); 4]), 0);
    }
}
