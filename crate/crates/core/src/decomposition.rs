//! Reduction of a [`GreenSet`] into independent mode pairs.
//!
//! Stokes kernels factor into two-mode squeezers,
//!
//! ```text
//! Kaa = sum_n cosh(zeta_n) u_n w_n^dag      Kab = sum_n sinh(zeta_n) u_n v_n^dag
//! Kbb = sum_n cosh(zeta_n) x_n v_n^T        Kba = sum_n sinh(zeta_n) x_n w_n^T
//! ```
//!
//! with `u = conj(psi_out)`, `w = conj(psi_in)`, `v = phi_in` and
//! `x = conj(phi_out)` on the scaled grid. A single SVD of `Kab` fixes
//! `(u, v, zeta)`; `w` and `x` are then derived from the other kernels so the
//! four factorizations share one consistent set of vectors.
//!
//! Anti-Stokes kernels are a unitary with the same bipartite structure and
//! factor into beamsplitters (a cosine-sine decomposition):
//!
//! ```text
//! Kaa = sum_n cos(theta_n) u_n y_n^dag      Kab = sum_n sin(theta_n) u_n v_n^dag
//! Kbb = sum_n cos(theta_n) x_n v_n^dag      Kba = sum_n sin(theta_n) x_n y_n^dag
//! ```
//!
//! with `u = conj(Psi_out)`, `y = conj(Psi_in)`, `v = conj(Phi_in)`,
//! `x = conj(Phi_out)` and efficiency `eta_n = sin^2(theta_n)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::SimulationGrid;
use crate::linalg::{
    canonical_phase, complement, conj_vec, gram_deviation, hermitian_eigen, op_norm, svd,
};
use crate::propagator::{GreenKind, GreenSet};

type C64 = Complex64;

/// Reconstruction residual above which a decomposition is rejected.
pub const RECONSTRUCTION_TOLERANCE: f64 = 1e-6;

/// Pairs weaker than this fraction of the total photon number are dropped.
pub const TRUNCATION_FRACTION: f64 = 1e-12;

/// Efficiency angles closer than this are treated as one degenerate cluster.
pub const DEGENERACY_ANGLE: f64 = 1e-9;

const COSINE_CLUSTER: f64 = 1e-6;

/// One independent two-mode squeezer. Mode functions are in physical units
/// ((ps)^-1/2 for light, (mm)^-1/2 for atoms) on the grid samples.
#[derive(Debug, Clone, Serialize)]
pub struct ModePair {
    /// 1-based, in order of decreasing squeezing.
    pub index: usize,
    pub zeta: f64,
    pub psi_in: Vec<C64>,
    pub psi_out: Vec<C64>,
    pub phi_in: Vec<C64>,
    pub phi_out: Vec<C64>,
}

impl ModePair {
    /// Mean photon (and atomic excitation) number `sinh^2 zeta`.
    pub fn occupancy(&self) -> f64 {
        let s = self.zeta.sinh();
        s * s
    }

    pub fn cosh(&self) -> f64 {
        self.zeta.cosh()
    }

    pub fn sinh(&self) -> f64 {
        self.zeta.sinh()
    }
}

/// One independent readout beamsplitter.
#[derive(Debug, Clone, Serialize)]
pub struct ReadoutModePair {
    pub index: usize,
    pub eta: f64,
    pub psi_in: Vec<C64>,
    pub psi_out: Vec<C64>,
    pub phi_in: Vec<C64>,
    pub phi_out: Vec<C64>,
}

/// Named scalar residuals, in insertion order.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ResidualReport {
    pub entries: Vec<Residual>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Residual {
    pub name: String,
    pub value: f64,
}

impl ResidualReport {
    pub fn push(&mut self, name: impl Into<String>, value: f64) {
        self.entries.push(Residual {
            name: name.into(),
            value,
        });
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|r| r.name == name)
            .map(|r| r.value)
    }

    pub fn max(&self) -> f64 {
        self.entries.iter().map(|r| r.value).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&Residual> {
        self.entries
            .iter()
            .max_by(|a, b| a.value.total_cmp(&b.value))
    }

    pub fn extend(&mut self, prefix: &str, other: &ResidualReport) {
        for r in &other.entries {
            self.push(format!("{prefix}{}", r.name), r.value);
        }
    }

    fn check(&self, tolerance: f64) -> Result<()> {
        match self.worst() {
            Some(w) if !(w.value <= tolerance) => Err(Error::DecompositionInconsistent {
                name: leak_name(&w.name),
                residual: w.value,
                tolerance,
            }),
            _ => Ok(()),
        }
    }
}

fn leak_name(name: &str) -> &'static str {
    const NAMES: &[&str] = &[
        "kaa_reconstruction",
        "kab_reconstruction",
        "kba_reconstruction",
        "kbb_reconstruction",
        "optical_in_orthonormality",
        "optical_out_orthonormality",
        "atomic_in_orthonormality",
        "atomic_out_orthonormality",
    ];
    NAMES
        .iter()
        .copied()
        .find(|n| *n == name)
        .unwrap_or("reconstruction")
}

fn real_diag(values: impl Iterator<Item = f64>) -> DMatrix<C64> {
    let v: Vec<C64> = values.map(|x| C64::new(x, 0.0)).collect();
    DMatrix::from_diagonal(&DVector::from_vec(v))
}

fn column_vec(m: &DMatrix<C64>, k: usize) -> DVector<C64> {
    m.column(k).into_owned()
}

fn unscale(v: impl Iterator<Item = C64>, step: f64) -> Vec<C64> {
    let f = 1.0 / step.sqrt();
    v.map(|x| x * f).collect()
}

// ---------------------------------------------------------------------------
// Stokes: two-mode squeezers

/// Scaled factor matrices of a squeezer decomposition, including pairs that
/// were truncated from the public list and modes with no partner on the
/// other side (present when `nt != nz`).
#[derive(Debug, Clone)]
struct SqueezerFactors {
    zeta: Vec<f64>,
    u: DMatrix<C64>,
    v: DMatrix<C64>,
    w: DMatrix<C64>,
    x: DMatrix<C64>,
    u_free: DMatrix<C64>,
    w_free: DMatrix<C64>,
    v_free: DMatrix<C64>,
    x_free: DMatrix<C64>,
}

impl SqueezerFactors {
    fn reconstruct(&self) -> [DMatrix<C64>; 4] {
        let c = real_diag(self.zeta.iter().map(|z| z.cosh()));
        let s = real_diag(self.zeta.iter().map(|z| z.sinh()));
        let kaa = &self.u * &c * self.w.adjoint() + &self.u_free * self.w_free.adjoint();
        let kab = &self.u * &s * self.v.adjoint();
        let kba = &self.x * &s * self.w.transpose();
        let kbb = &self.x * &c * self.v.transpose() + &self.x_free * self.v_free.transpose();
        [kaa, kab, kba, kbb]
    }
}

/// Result of [`bloch_messiah`].
#[derive(Debug, Clone)]
pub struct SqueezerModes {
    /// Significant pairs, decreasing `zeta`.
    pub pairs: Vec<ModePair>,
    /// Number of pairs dropped as numerically insignificant.
    pub dropped: usize,
    /// Reconstruction and orthonormality residuals of the full factorization.
    pub residuals: ResidualReport,
    pub grid: SimulationGrid,
    factors: SqueezerFactors,
}

impl SqueezerModes {
    pub fn total_photons(&self) -> f64 {
        self.factors.zeta.iter().map(|z| z.sinh().powi(2)).sum()
    }

    pub fn occupancies(&self) -> Vec<f64> {
        self.pairs.iter().map(ModePair::occupancy).collect()
    }

    /// The four scaled kernels rebuilt from the factorization.
    pub fn reconstruct(&self) -> [DMatrix<C64>; 4] {
        self.factors.reconstruct()
    }

    /// Applies the independent-squeezer relations to classical inputs
    /// `alpha(0, t)`, `beta(z, -T)` (physical units), mode by mode.
    pub fn apply(&self, alpha_in: &[C64], beta_in: &[C64]) -> Result<(Vec<C64>, Vec<C64>)> {
        let (nt, nz) = (self.grid.nt(), self.grid.nz());
        if alpha_in.len() != nt || beta_in.len() != nz {
            return Err(Error::invalid("input lengths do not match the grid"));
        }
        let (st, sz) = (self.grid.dt().sqrt(), self.grid.dz().sqrt());
        let a = DVector::from_iterator(nt, alpha_in.iter().map(|x| x * st));
        let b = DVector::from_iterator(nz, beta_in.iter().map(|x| x * sz));
        let f = &self.factors;

        // mode amplitudes: a_n = w_n^dag a, b_n = v_n^T b
        let a_modes = f.w.adjoint() * &a;
        let b_modes = f.v.transpose() * &b;
        let mut a_out_modes = DVector::zeros(f.zeta.len());
        let mut b_out_modes = DVector::zeros(f.zeta.len());
        for (n, z) in f.zeta.iter().enumerate() {
            let (c, s) = (z.cosh(), z.sinh());
            a_out_modes[n] = a_modes[n] * c + b_modes[n].conj() * s;
            b_out_modes[n] = b_modes[n] * c + a_modes[n].conj() * s;
        }
        let a_out = &f.u * a_out_modes + &f.u_free * (f.w_free.adjoint() * &a);
        let b_out = &f.x * b_out_modes + &f.x_free * (f.v_free.transpose() * &b);
        Ok((
            a_out.iter().map(|x| x / st).collect(),
            b_out.iter().map(|x| x / sz).collect(),
        ))
    }
}

/// Factorizes Stokes kernels into independent two-mode squeezers.
pub fn bloch_messiah(g: &GreenSet) -> Result<SqueezerModes> {
    if g.kind != GreenKind::StokesSqueezer {
        return Err(Error::invalid(
            "bloch_messiah needs Stokes (squeezer) kernels",
        ));
    }
    let (nt, nz) = (g.nt(), g.nz());
    let f = svd(&g.kab)?;
    let r = f.s.len();
    let mut u = f.u;
    let mut v = f.v;
    for k in 0..r {
        // conj(u) is psi_out; make its peak real positive
        let p = canonical_phase(u.column(k).iter());
        u.column_mut(k).apply(|c| *c *= p);
        v.column_mut(k).apply(|c| *c *= p);
    }
    let zeta: Vec<f64> = f.s.iter().map(|s| s.asinh()).collect();

    let kaa_h = g.kaa.adjoint();
    let mut w = DMatrix::zeros(nt, r);
    let mut x = DMatrix::zeros(nz, r);
    for k in 0..r {
        let (c, s) = (zeta[k].cosh(), zeta[k].sinh());
        let uk = column_vec(&u, k);
        let wk = &kaa_h * &uk / C64::new(c, 0.0);
        // Kba conj(w) = s x and Kbb conj(v) = c x; the weighted sum is
        // well conditioned for every zeta.
        let from_s = &g.kba * conj_vec(&wk) * C64::new(s, 0.0);
        let from_c = &g.kbb * conj_vec(&column_vec(&v, k)) * C64::new(c, 0.0);
        let xk = (from_s + from_c) / C64::new(s * s + c * c, 0.0);
        w.set_column(k, &wk);
        x.set_column(k, &xk);
    }

    let (u_free, w_free) = if nt > r {
        let uf = complement(&u);
        let wf = &kaa_h * &uf;
        (uf, wf)
    } else {
        (DMatrix::zeros(nt, 0), DMatrix::zeros(nt, 0))
    };
    let (v_free, x_free) = if nz > r {
        let vf = complement(&v);
        let xf = &g.kbb * vf.map(|z| z.conj());
        (vf, xf)
    } else {
        (DMatrix::zeros(nz, 0), DMatrix::zeros(nz, 0))
    };

    let factors = SqueezerFactors {
        zeta,
        u,
        v,
        w,
        x,
        u_free,
        w_free,
        v_free,
        x_free,
    };

    let mut residuals = ResidualReport::default();
    let [kaa, kab, kba, kbb] = factors.reconstruct();
    residuals.push("kaa_reconstruction", op_norm(&(kaa - &g.kaa)));
    residuals.push("kab_reconstruction", op_norm(&(kab - &g.kab)));
    residuals.push("kba_reconstruction", op_norm(&(kba - &g.kba)));
    residuals.push("kbb_reconstruction", op_norm(&(kbb - &g.kbb)));
    residuals.push(
        "optical_in_orthonormality",
        gram_deviation(&hstack(&factors.w, &factors.w_free)),
    );
    residuals.push(
        "atomic_out_orthonormality",
        gram_deviation(&hstack(&factors.x, &factors.x_free)),
    );
    residuals.check(RECONSTRUCTION_TOLERANCE)?;

    let n_tot: f64 = factors.zeta.iter().map(|z| z.sinh().powi(2)).sum();
    let threshold = TRUNCATION_FRACTION * n_tot;
    let (dt, dz) = (g.grid.dt(), g.grid.dz());
    let mut pairs = Vec::new();
    let mut dropped = 0;
    for k in 0..r {
        let z = factors.zeta[k];
        if z.sinh().powi(2) < threshold {
            dropped += 1;
            continue;
        }
        pairs.push(ModePair {
            index: pairs.len() + 1,
            zeta: z,
            psi_in: unscale(factors.w.column(k).iter().map(|c| c.conj()), dt),
            psi_out: unscale(factors.u.column(k).iter().map(|c| c.conj()), dt),
            phi_in: unscale(factors.v.column(k).iter().copied(), dz),
            phi_out: unscale(factors.x.column(k).iter().map(|c| c.conj()), dz),
        });
    }
    log::debug!(
        "bloch_messiah: {} pairs kept, {} dropped, worst residual {:.3e}",
        pairs.len(),
        dropped,
        residuals.max()
    );

    Ok(SqueezerModes {
        pairs,
        dropped,
        residuals,
        grid: g.grid,
        factors,
    })
}

fn hstack(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    let mut m = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    m.view_mut((0, 0), a.shape()).copy_from(a);
    m.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    m
}

// ---------------------------------------------------------------------------
// Anti-Stokes: beamsplitters

#[derive(Debug, Clone)]
struct BeamsplitterFactors {
    theta: Vec<f64>,
    u: DMatrix<C64>,
    y: DMatrix<C64>,
    v: DMatrix<C64>,
    x: DMatrix<C64>,
    /// Optical modes with no atomic partner, passed with amplitude `alpha_free`.
    u_free: DMatrix<C64>,
    y_free: DMatrix<C64>,
    alpha_free: Vec<f64>,
    v_free: DMatrix<C64>,
    x_free: DMatrix<C64>,
}

impl BeamsplitterFactors {
    fn reconstruct(&self) -> [DMatrix<C64>; 4] {
        let c = real_diag(self.theta.iter().map(|t| t.cos()));
        let s = real_diag(self.theta.iter().map(|t| t.sin()));
        let a_free = real_diag(self.alpha_free.iter().copied());
        let kaa = &self.u * &c * self.y.adjoint() + &self.u_free * a_free * self.y_free.adjoint();
        let kab = &self.u * &s * self.v.adjoint();
        let kba = &self.x * &s * self.y.adjoint();
        let kbb = &self.x * &c * self.v.adjoint() + &self.x_free * self.v_free.adjoint();
        [kaa, kab, kba, kbb]
    }
}

/// Result of [`beamsplitter_reduce`].
#[derive(Debug, Clone)]
pub struct BeamsplitterModes {
    /// Decreasing efficiency.
    pub pairs: Vec<ReadoutModePair>,
    pub residuals: ResidualReport,
    pub grid: SimulationGrid,
    factors: BeamsplitterFactors,
}

impl BeamsplitterModes {
    pub fn efficiencies(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.eta).collect()
    }

    pub fn reconstruct(&self) -> [DMatrix<C64>; 4] {
        self.factors.reconstruct()
    }

    /// Mode-by-mode beamsplitter relations applied to classical inputs
    /// `c(0, t)`, `d(z, -T)`.
    pub fn apply(&self, c_in: &[C64], d_in: &[C64]) -> Result<(Vec<C64>, Vec<C64>)> {
        let (nt, nz) = (self.grid.nt(), self.grid.nz());
        if c_in.len() != nt || d_in.len() != nz {
            return Err(Error::invalid("input lengths do not match the grid"));
        }
        let (st, sz) = (self.grid.dt().sqrt(), self.grid.dz().sqrt());
        let c = DVector::from_iterator(nt, c_in.iter().map(|x| x * st));
        let d = DVector::from_iterator(nz, d_in.iter().map(|x| x * sz));
        let f = &self.factors;
        let c_modes = f.y.adjoint() * &c;
        let d_modes = f.v.adjoint() * &d;
        let mut c_out_modes = DVector::zeros(f.theta.len());
        let mut d_out_modes = DVector::zeros(f.theta.len());
        for (n, th) in f.theta.iter().enumerate() {
            let (co, si) = (th.cos(), th.sin());
            c_out_modes[n] = c_modes[n] * co + d_modes[n] * si;
            d_out_modes[n] = d_modes[n] * co - c_modes[n] * si;
        }
        let a_free = real_diag(f.alpha_free.iter().copied());
        let c_out = &f.u * c_out_modes + &f.u_free * (a_free * (f.y_free.adjoint() * &c));
        let d_out = &f.x * d_out_modes + &f.x_free * (f.v_free.adjoint() * &d);
        Ok((
            c_out.iter().map(|x| x / st).collect(),
            d_out.iter().map(|x| x / sz).collect(),
        ))
    }
}

/// Factorizes anti-Stokes kernels into independent beamsplitters.
///
/// Follows the cosine-sine construction: SVD of `Kaa` with ascending
/// singular values, QR of `Kba Y` for the atomic output vectors, and the
/// atomic input vectors from whichever of `Kab`, `Kbb` is better conditioned
/// for each mode.
/// Cosines close to one are poorly separated by the SVD of Kaa, so clusters
/// there are re-split by the sines seen through Kab.
fn resolve_by_sines(
    g: &GreenSet,
    u: &mut DMatrix<C64>,
    y: &mut DMatrix<C64>,
    alpha: &mut [f64],
) -> Result<()> {
    let r = alpha.len();
    let mut start = 0;
    while start < r {
        let mut end = start + 1;
        while end < r && alpha[end] - alpha[end - 1] < COSINE_CLUSTER {
            end += 1;
        }
        let k = end - start;
        if k > 1 && alpha[start] > std::f64::consts::FRAC_1_SQRT_2 {
            let block = u.columns(start, k).adjoint() * &g.kab;
            let f = svd(&block)?;
            // largest sine first keeps the cosines ascending
            let rotated = u.columns(start, k) * f.u.columns(0, k);
            let back = g.kaa.adjoint() * &rotated;
            for c in 0..k {
                let col = back.column(c);
                let a = col.norm();
                alpha[start + c] = a;
                u.set_column(start + c, &rotated.column(c));
                y.set_column(start + c, &(col / C64::new(a, 0.0)));
            }
        }
        start = end;
    }
    Ok(())
}

pub fn beamsplitter_reduce(g: &GreenSet) -> Result<BeamsplitterModes> {
    if g.kind != GreenKind::AntiStokesBeamsplitter {
        return Err(Error::invalid(
            "beamsplitter_reduce needs anti-Stokes (beamsplitter) kernels",
        ));
    }
    let (nt, nz) = (g.nt(), g.nz());
    let r = nt.min(nz);

    let f = svd(&g.kaa)?;
    // ascending cosines == descending efficiencies
    let u_all = DMatrix::from_fn(nt, nt, |i, k| f.u[(i, nt - 1 - k)]);
    let y_all = DMatrix::from_fn(nt, nt, |i, k| f.v[(i, nt - 1 - k)]);
    let alpha_all: Vec<f64> = f.s.iter().rev().copied().collect();

    let mut u = u_all.columns(0, r).into_owned();
    let mut y = y_all.columns(0, r).into_owned();
    let mut alpha: Vec<f64> = alpha_all[..r].to_vec();
    resolve_by_sines(g, &mut u, &mut y, &mut alpha)?;

    let p = &g.kba * &y;
    let qr = p.qr();
    let q = qr.q();
    let rr = qr.r();
    let mut x = DMatrix::zeros(nz, r);
    let mut delta = vec![0.0; r];
    for k in 0..r {
        let rkk = rr[(k, k)];
        let mag = rkk.norm();
        let ph = if mag > 0.0 {
            rkk / mag
        } else {
            C64::new(1.0, 0.0)
        };
        delta[k] = mag;
        x.set_column(k, &(q.column(k) * ph));
    }

    let mut v = DMatrix::zeros(nz, r);
    let kab_h = g.kab.adjoint();
    let kbb_h = g.kbb.adjoint();
    for k in 0..r {
        let vk = if delta[k] > alpha[k] {
            &kab_h * column_vec(&u, k) / C64::new(delta[k], 0.0)
        } else {
            &kbb_h * column_vec(&x, k) / C64::new(alpha[k], 0.0)
        };
        v.set_column(k, &vk);
    }
    let mut theta: Vec<f64> = (0..r).map(|k| delta[k].atan2(alpha[k])).collect();

    // Rotate each degenerate cluster onto its time-position eigenbasis so
    // the output does not depend on how the SVD split the subspace.
    let times = g.grid.t_samples();
    let mut start = 0;
    while start < r {
        let mut end = start + 1;
        while end < r && (theta[end] - theta[end - 1]).abs() < DEGENERACY_ANGLE {
            end += 1;
        }
        if end - start > 1 {
            let k = end - start;
            let uc = u.columns(start, k).into_owned();
            let position = DMatrix::from_fn(k, k, |a, b| {
                (0..nt)
                    .map(|i| uc[(i, a)].conj() * uc[(i, b)] * times[i])
                    .sum::<C64>()
            });
            let (_, vecs) = hermitian_eigen(&position);
            // ascending centroid
            let rot = DMatrix::from_fn(k, k, |a, b| vecs[(a, k - 1 - b)]);
            for m in [&mut u, &mut y, &mut x, &mut v] {
                let block = m.columns(start, k) * &rot;
                m.columns_mut(start, k).copy_from(&block);
            }
            let mean = theta[start..end].iter().sum::<f64>() / k as f64;
            theta[start..end].iter_mut().for_each(|t| *t = mean);
        }
        start = end;
    }

    for k in 0..r {
        let p = canonical_phase(u.column(k).iter());
        for m in [&mut u, &mut y, &mut x, &mut v] {
            m.column_mut(k).apply(|c| *c *= p);
        }
    }

    let (u_free, y_free, alpha_free) = if nt > r {
        (
            u_all.columns(r, nt - r).into_owned(),
            y_all.columns(r, nt - r).into_owned(),
            alpha_all[r..].to_vec(),
        )
    } else {
        (DMatrix::zeros(nt, 0), DMatrix::zeros(nt, 0), Vec::new())
    };
    let (v_free, x_free) = if nz > r {
        let xf = complement(&x);
        let vf = &kbb_h * &xf;
        (vf, xf)
    } else {
        (DMatrix::zeros(nz, 0), DMatrix::zeros(nz, 0))
    };

    let factors = BeamsplitterFactors {
        theta,
        u,
        y,
        v,
        x,
        u_free,
        y_free,
        alpha_free,
        v_free,
        x_free,
    };

    let mut residuals = ResidualReport::default();
    let [kaa, kab, kba, kbb] = factors.reconstruct();
    residuals.push("kaa_reconstruction", op_norm(&(kaa - &g.kaa)));
    residuals.push("kab_reconstruction", op_norm(&(kab - &g.kab)));
    residuals.push("kba_reconstruction", op_norm(&(kba - &g.kba)));
    residuals.push("kbb_reconstruction", op_norm(&(kbb - &g.kbb)));
    residuals.push(
        "atomic_in_orthonormality",
        gram_deviation(&hstack(&factors.v, &factors.v_free)),
    );
    residuals.push(
        "atomic_out_orthonormality",
        gram_deviation(&hstack(&factors.x, &factors.x_free)),
    );
    residuals.check(RECONSTRUCTION_TOLERANCE)?;

    let (dt, dz) = (g.grid.dt(), g.grid.dz());
    let pairs = (0..r)
        .map(|k| ReadoutModePair {
            index: k + 1,
            eta: factors.theta[k].sin().powi(2).clamp(0.0, 1.0),
            psi_in: unscale(factors.y.column(k).iter().map(|c| c.conj()), dt),
            psi_out: unscale(factors.u.column(k).iter().map(|c| c.conj()), dt),
            phi_in: unscale(factors.v.column(k).iter().map(|c| c.conj()), dz),
            phi_out: unscale(factors.x.column(k).iter().map(|c| c.conj()), dz),
        })
        .collect();

    Ok(BeamsplitterModes {
        pairs,
        residuals,
        grid: g.grid,
        factors,
    })
}

// ---------------------------------------------------------------------------
// Structural checks and coherence modes

/// Operator-norm residuals of the identities a kernel set must satisfy.
///
/// Stokes: the pseudo-unitarity `M J M^dag = J` and `M^dag J M = J` of the
/// block matrix on `(a, conj b)`, split into its blocks, plus the
/// block-commutation with `O = diag(i, -i)`. Anti-Stokes: the six distinct
/// blocks of `U U^dag = 1` and `U^dag U = 1`.
pub fn verify_structure(g: &GreenSet) -> ResidualReport {
    let (nt, nz) = (g.nt(), g.nz());
    let id_t = DMatrix::<C64>::identity(nt, nt);
    let id_z = DMatrix::<C64>::identity(nz, nz);
    let mut report = ResidualReport::default();
    match g.kind {
        GreenKind::StokesSqueezer => {
            let kba_c = g.kba.map(|x| x.conj());
            let kbb_c = g.kbb.map(|x| x.conj());
            report.push(
                "bogoliubov_optical",
                op_norm(&(&g.kaa * g.kaa.adjoint() - &g.kab * g.kab.adjoint() - &id_t)),
            );
            report.push(
                "bogoliubov_atomic",
                op_norm(&(&g.kbb * g.kbb.adjoint() - &g.kba * g.kba.adjoint() - &id_z)),
            );
            report.push(
                "bogoliubov_cross",
                op_norm(&(&g.kaa * g.kba.transpose() - &g.kab * g.kbb.transpose())),
            );
            report.push(
                "bogoliubov_input_optical",
                op_norm(&(g.kaa.adjoint() * &g.kaa - g.kba.transpose() * &kba_c - &id_t)),
            );
            report.push(
                "bogoliubov_input_atomic",
                op_norm(&(g.kbb.transpose() * &kbb_c - g.kab.adjoint() * &g.kab - &id_z)),
            );
            report.push(
                "bogoliubov_input_cross",
                op_norm(&(g.kaa.adjoint() * &g.kab - g.kba.transpose() * &kbb_c)),
            );
            report.push("block_commutation", block_commutation(g));
        }
        GreenKind::AntiStokesBeamsplitter => {
            report.push(
                "unitarity_rows_optical",
                op_norm(&(&g.kaa * g.kaa.adjoint() + &g.kab * g.kab.adjoint() - &id_t)),
            );
            report.push(
                "unitarity_rows_atomic",
                op_norm(&(&g.kba * g.kba.adjoint() + &g.kbb * g.kbb.adjoint() - &id_z)),
            );
            report.push(
                "unitarity_rows_cross",
                op_norm(&(&g.kab * g.kbb.adjoint() - &g.kaa * g.kba.adjoint())),
            );
            report.push(
                "unitarity_cols_optical",
                op_norm(&(g.kaa.adjoint() * &g.kaa + g.kba.adjoint() * &g.kba - &id_t)),
            );
            report.push(
                "unitarity_cols_atomic",
                op_norm(&(g.kab.adjoint() * &g.kab + g.kbb.adjoint() * &g.kbb - &id_z)),
            );
            report.push(
                "unitarity_cols_cross",
                op_norm(&(g.kaa.adjoint() * &g.kab - g.kba.adjoint() * &g.kbb)),
            );
        }
    }
    report
}

/// `|C O - O C| + |O S - S O^dag|` for `C = diag(Kaa, Kbb)`,
/// `S = [[0, Kab], [Kba, 0]]` and `O = diag(i, -i)`.
fn block_commutation(g: &GreenSet) -> f64 {
    let (nt, nz) = (g.nt(), g.nz());
    let n = nt + nz;
    let mut c = DMatrix::<C64>::zeros(n, n);
    c.view_mut((0, 0), (nt, nt)).copy_from(&g.kaa);
    c.view_mut((nt, nt), (nz, nz)).copy_from(&g.kbb);
    let mut s = DMatrix::<C64>::zeros(n, n);
    s.view_mut((0, nt), (nt, nz)).copy_from(&g.kab);
    s.view_mut((nt, 0), (nz, nt)).copy_from(&g.kba);
    let o = DMatrix::from_diagonal(&DVector::from_fn(n, |k, _| {
        if k < nt {
            C64::new(0.0, 1.0)
        } else {
            C64::new(0.0, -1.0)
        }
    }));
    op_norm(&(&c * &o - &o * &c)) + op_norm(&(&o * &s - &s * o.adjoint()))
}

/// Eigenmodes of the first-order coherence of the Stokes outputs.
#[derive(Debug, Clone)]
pub struct CoherenceModes {
    /// Eigenvalues of `Kab Kab^dag`, descending.
    pub optical_occupancies: Vec<f64>,
    /// Matching `psi_out` functions, physical units.
    pub optical_modes: Vec<Vec<C64>>,
    /// Eigenvalues of `Kba Kba^dag`, descending.
    pub atomic_occupancies: Vec<f64>,
    pub atomic_modes: Vec<Vec<C64>>,
}

pub fn coherence_modes(g: &GreenSet) -> Result<CoherenceModes> {
    if g.kind != GreenKind::StokesSqueezer {
        return Err(Error::invalid(
            "coherence modes are defined for Stokes kernels",
        ));
    }
    let (opt_vals, opt_vecs) = hermitian_eigen(&(&g.kab * g.kab.adjoint()));
    let (at_vals, at_vecs) = hermitian_eigen(&(&g.kba * g.kba.adjoint()));
    let to_modes = |vecs: &DMatrix<C64>, step: f64| -> Vec<Vec<C64>> {
        (0..vecs.ncols())
            .map(|k| {
                let col: Vec<C64> = vecs.column(k).iter().map(|c| c.conj()).collect();
                let p = canonical_phase(col.iter());
                unscale(col.into_iter().map(|c| c * p), step)
            })
            .collect()
    };
    Ok(CoherenceModes {
        optical_modes: to_modes(&opt_vecs, g.grid.dt()),
        optical_occupancies: opt_vals,
        atomic_modes: to_modes(&at_vecs, g.grid.dz()),
        atomic_occupancies: at_vals,
    })
}

/// Quadrature inner product `sum conj(f) g h`.
pub fn weighted_inner(f: &[C64], g: &[C64], step: f64) -> C64 {
    f.iter().zip(g).map(|(a, b)| a.conj() * b).sum::<C64>() * step
}

pub fn weighted_norm_sqr(f: &[C64], step: f64) -> f64 {
    f.iter().map(|x| x.norm_sqr()).sum::<f64>() * step
}
