//! Classical integration of the Stokes and anti-Stokes equations and
//! assembly of the discretized Green kernels from impulse responses.
//!
//! The interaction rectangle is a lattice of `nz x nt` cells. The optical
//! field crosses each cell along z, the atomic polarization along t, and a
//! cell mixes the two samples with the trapezoidal (Cayley) form of the local
//! coupling. For the Stokes pass the mixing is hyperbolic and the state
//! carried for the atoms is the conjugate polarization, for the anti-Stokes
//! pass it is a rotation. Either way every cell is exactly pseudo-unitary or
//! unitary, so the assembled kernels satisfy their commutation identities to
//! rounding error rather than to discretization error.
//!
//! All vectors handled internally are *scaled*: optical samples carry a factor
//! `sqrt(dt)` and atomic samples `sqrt(dz)`, which turns the continuum
//! identities into plain matrix identities.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{PumpConfig, SimulationGrid};

type C64 = Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pass {
    Stokes,
    AntiStokes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GreenKind {
    /// `a_out = Kaa a_in + Kab b_in^dag`, `b_out = Kbb b_in + Kba a_in^dag`.
    StokesSqueezer,
    /// `c_out = Kaa c_in + Kab d_in`, `d_out = Kbb d_in - Kba c_in`.
    AntiStokesBeamsplitter,
}

impl From<Pass> for GreenKind {
    fn from(p: Pass) -> Self {
        match p {
            Pass::Stokes => GreenKind::StokesSqueezer,
            Pass::AntiStokes => GreenKind::AntiStokesBeamsplitter,
        }
    }
}

/// The four scaled kernels of one pass.
///
/// `kaa` is `nt x nt`, `kbb` is `nz x nz`, `kab` is `nt x nz` and `kba` is
/// `nz x nt`. Entry `kaa[(i, j)]` equals `C(t_i, t_j) dt`, `kab[(i, j)]`
/// equals `S(t_i, z_j) sqrt(dt dz)` and so on.
#[derive(Debug, Clone)]
pub struct GreenSet {
    pub kind: GreenKind,
    pub kaa: DMatrix<C64>,
    pub kbb: DMatrix<C64>,
    pub kab: DMatrix<C64>,
    pub kba: DMatrix<C64>,
    pub grid: SimulationGrid,
    /// `None` for kernels assembled from explicit blocks.
    pub pump: Option<PumpConfig>,
}

impl GreenSet {
    /// Wraps externally constructed kernels, checking only their shapes.
    pub fn from_blocks(
        kind: GreenKind,
        grid: SimulationGrid,
        kaa: DMatrix<C64>,
        kab: DMatrix<C64>,
        kba: DMatrix<C64>,
        kbb: DMatrix<C64>,
    ) -> Result<Self> {
        let (nt, nz) = (grid.nt(), grid.nz());
        let shapes = [
            ("Kaa", kaa.shape(), (nt, nt)),
            ("Kab", kab.shape(), (nt, nz)),
            ("Kba", kba.shape(), (nz, nt)),
            ("Kbb", kbb.shape(), (nz, nz)),
        ];
        for (name, got, want) in shapes {
            if got != want {
                return Err(Error::invalid(format!(
                    "{name} has shape {got:?}, grid requires {want:?}"
                )));
            }
        }
        Ok(Self {
            kind,
            kaa,
            kbb,
            kab,
            kba,
            grid,
            pump: None,
        })
    }

    pub fn nt(&self) -> usize {
        self.grid.nt()
    }

    pub fn nz(&self) -> usize {
        self.grid.nz()
    }

    /// `sum_n sinh^2 zeta_n`, read off as the squared Frobenius norm of `Kab`.
    pub fn total_photons(&self) -> f64 {
        self.kab.norm_squared()
    }

    /// The full input-output matrix acting on stacked scaled amplitudes.
    ///
    /// Stokes: `[[Kaa, Kab], [conj Kba, conj Kbb]]` on `(a, conj b)`.
    /// Anti-Stokes: `[[Kaa, Kab], [-Kba, Kbb]]` on `(c, d)`.
    pub fn block_matrix(&self) -> DMatrix<C64> {
        let (nt, nz) = (self.nt(), self.nz());
        let mut m = DMatrix::zeros(nt + nz, nt + nz);
        m.view_mut((0, 0), (nt, nt)).copy_from(&self.kaa);
        m.view_mut((0, nt), (nt, nz)).copy_from(&self.kab);
        match self.kind {
            GreenKind::StokesSqueezer => {
                m.view_mut((nt, 0), (nz, nt))
                    .copy_from(&self.kba.map(|x| x.conj()));
                m.view_mut((nt, nt), (nz, nz))
                    .copy_from(&self.kbb.map(|x| x.conj()));
            }
            GreenKind::AntiStokesBeamsplitter => {
                m.view_mut((nt, 0), (nz, nt)).copy_from(&(-&self.kba));
                m.view_mut((nt, nt), (nz, nz)).copy_from(&self.kbb);
            }
        }
        m
    }
}

/// Per-cell 2x2 transfer `(a, b) -> (t00 a + t01 b, t10 a + t11 b)`, row-major
/// over `(z index, t index)`.
struct Lattice {
    nz: usize,
    nt: usize,
    cells: Vec<[C64; 4]>,
}

impl Lattice {
    fn new(grid: &SimulationGrid, pump: &PumpConfig, pass: Pass) -> Result<Self> {
        pump.validate()?;
        let (nz, nt) = (grid.nz(), grid.nt());
        let half_step = 0.5 * (grid.dz() * grid.dt()).sqrt() * pump.g0;
        let mut cells = Vec::with_capacity(nz * nt);
        for i in 0..nz {
            let z = grid.z(i);
            for j in 0..nt {
                let kappa = C64::new(
                    half_step * pump.envelope_unchecked(grid.length(), z, grid.t(j)),
                    0.0,
                );
                let k2 = kappa.norm_sqr();
                let cell = match pass {
                    Pass::Stokes => {
                        if k2 >= 1.0 {
                            return Err(Error::NumericalFailure(format!(
                                "cell coupling {:.3} >= 1 at z={z:.4}, t={:.4}; refine the grid",
                                k2.sqrt(),
                                grid.t(j)
                            )));
                        }
                        let inv = 1.0 / (1.0 - k2);
                        let diag = C64::new((1.0 + k2) * inv, 0.0);
                        [diag, 2.0 * inv * kappa, 2.0 * inv * kappa.conj(), diag]
                    }
                    Pass::AntiStokes => {
                        let inv = 1.0 / (1.0 + k2);
                        let diag = C64::new((1.0 - k2) * inv, 0.0);
                        [diag, 2.0 * inv * kappa, -2.0 * inv * kappa.conj(), diag]
                    }
                };
                cells.push(cell);
            }
        }
        Ok(Self { nz, nt, cells })
    }

    /// Marches slice by slice in z. Cells with `i < i0` or `j < j0` are
    /// skipped, which is exact when the inputs vanish there.
    fn sweep(
        &self,
        a: &mut [C64],
        b: &mut [C64],
        i0: usize,
        j0: usize,
    ) -> std::result::Result<(), usize> {
        debug_assert_eq!(a.len(), self.nt);
        debug_assert_eq!(b.len(), self.nz);
        for i in i0..self.nz {
            let row = &self.cells[i * self.nt..(i + 1) * self.nt];
            let mut bi = b[i];
            let mut power = 0.0;
            for (aj, cell) in a[j0..].iter_mut().zip(&row[j0..]) {
                let [t00, t01, t10, t11] = *cell;
                let a_in = *aj;
                *aj = t00 * a_in + t01 * bi;
                bi = t10 * a_in + t11 * bi;
                power += aj.norm_sqr();
            }
            b[i] = bi;
            if !(power + bi.norm_sqr()).is_finite() {
                return Err(i);
            }
        }
        Ok(())
    }
}

fn check_lengths(grid: &SimulationGrid, optical: usize, atomic: usize) -> Result<()> {
    if optical != grid.nt() || atomic != grid.nz() {
        return Err(Error::invalid(format!(
            "input lengths ({optical} optical, {atomic} atomic) do not match grid (nt={}, nz={})",
            grid.nt(),
            grid.nz()
        )));
    }
    Ok(())
}

/// Propagates classical Stokes amplitudes `alpha(0, t)` and `beta(z, -T)`
/// through the medium, returning `alpha(L, t)` and `beta(z, T)`.
///
/// The map is complex-linear in `alpha_in` and conjugate-linear in
/// `beta_in`, mirroring the operator relations.
pub fn evolve_stokes(
    grid: &SimulationGrid,
    pump: &PumpConfig,
    alpha_in: &[C64],
    beta_in: &[C64],
) -> Result<(Vec<C64>, Vec<C64>)> {
    check_lengths(grid, alpha_in.len(), beta_in.len())?;
    let lattice = Lattice::new(grid, pump, Pass::Stokes)?;
    let (st, sz) = (grid.dt().sqrt(), grid.dz().sqrt());
    let mut a: Vec<C64> = alpha_in.iter().map(|x| x * st).collect();
    let mut b: Vec<C64> = beta_in.iter().map(|x| x.conj() * sz).collect();
    lattice
        .sweep(&mut a, &mut b, 0, 0)
        .map_err(|i| Error::NumericalFailure(format!("non-finite Stokes field at z slice {i}")))?;
    Ok((
        a.into_iter().map(|x| x / st).collect(),
        b.into_iter().map(|x| x.conj() / sz).collect(),
    ))
}

/// Propagates anti-Stokes amplitudes `c(0, t)` and `d(z, -T)`; number
/// conserving in the quadrature-weighted norm.
pub fn evolve_antistokes(
    grid: &SimulationGrid,
    pump: &PumpConfig,
    c_in: &[C64],
    d_in: &[C64],
) -> Result<(Vec<C64>, Vec<C64>)> {
    check_lengths(grid, c_in.len(), d_in.len())?;
    let lattice = Lattice::new(grid, pump, Pass::AntiStokes)?;
    let (st, sz) = (grid.dt().sqrt(), grid.dz().sqrt());
    let mut c: Vec<C64> = c_in.iter().map(|x| x * st).collect();
    let mut d: Vec<C64> = d_in.iter().map(|x| x * sz).collect();
    lattice.sweep(&mut c, &mut d, 0, 0).map_err(|i| {
        Error::NumericalFailure(format!("non-finite anti-Stokes field at z slice {i}"))
    })?;
    Ok((
        c.into_iter().map(|x| x / st).collect(),
        d.into_iter().map(|x| x / sz).collect(),
    ))
}

/// Assembles the Green kernels of one pass column by column from unit
/// impulses on the grid. Columns are independent and evaluated in parallel.
pub fn build_green(grid: &SimulationGrid, pump: &PumpConfig, pass: Pass) -> Result<GreenSet> {
    let lattice = Lattice::new(grid, pump, pass)?;
    let (nt, nz) = (grid.nt(), grid.nz());

    let optical: Vec<(Vec<C64>, Vec<C64>)> = (0..nt)
        .into_par_iter()
        .map(|j| {
            let mut a = vec![C64::new(0.0, 0.0); nt];
            let mut b = vec![C64::new(0.0, 0.0); nz];
            a[j] = C64::new(1.0, 0.0);
            lattice
                .sweep(&mut a, &mut b, 0, j)
                .map(|_| (a, b))
                .map_err(|_| Error::NonFinite {
                    column: j,
                    channel: "optical",
                })
        })
        .collect::<Result<_>>()?;

    let atomic: Vec<(Vec<C64>, Vec<C64>)> = (0..nz)
        .into_par_iter()
        .map(|i| {
            let mut a = vec![C64::new(0.0, 0.0); nt];
            let mut b = vec![C64::new(0.0, 0.0); nz];
            b[i] = C64::new(1.0, 0.0);
            lattice
                .sweep(&mut a, &mut b, i, 0)
                .map(|_| (a, b))
                .map_err(|_| Error::NonFinite {
                    column: i,
                    channel: "atomic",
                })
        })
        .collect::<Result<_>>()?;

    let mut kaa = DMatrix::zeros(nt, nt);
    let mut kba = DMatrix::zeros(nz, nt);
    for (j, (a, b)) in optical.iter().enumerate() {
        kaa.column_mut(j).copy_from_slice(a);
        for (i, x) in b.iter().enumerate() {
            kba[(i, j)] = match pass {
                Pass::Stokes => x.conj(),
                Pass::AntiStokes => -x,
            };
        }
    }
    let mut kab = DMatrix::zeros(nt, nz);
    let mut kbb = DMatrix::zeros(nz, nz);
    for (i, (a, b)) in atomic.iter().enumerate() {
        kab.column_mut(i).copy_from_slice(a);
        for (k, x) in b.iter().enumerate() {
            kbb[(k, i)] = match pass {
                Pass::Stokes => x.conj(),
                Pass::AntiStokes => *x,
            };
        }
    }

    Ok(GreenSet {
        kind: pass.into(),
        kaa,
        kbb,
        kab,
        kba,
        grid: *grid,
        pump: Some(*pump),
    })
}
