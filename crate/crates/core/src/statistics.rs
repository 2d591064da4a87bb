//! Photon-number observables of the Stokes output.
//!
//! Each squeezer leaves its optical mode in a thermal state, so the total
//! count is a sum of independent geometric variables with means
//! `n_m = sinh^2 zeta_m`. Small totals are handled exactly by convolution.
//! Large totals use the continuous limit, the density of a sum of
//! exponentials, obtained by numerically inverting its Laplace transform
//! `prod_m 1 / (1 + s mu_m)` along a Talbot contour.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::decomposition::ModePair;
use crate::error::{Error, Result};

/// Below this mean photon number the exact convolution is used.
pub const EXACT_LIMIT: f64 = 1e4;

/// Modes weaker than this fraction of the total are ignored in the pmf.
pub const OCCUPANCY_CUTOFF: f64 = 1e-6;

/// Modes at least this occupied use the continuous limit.
pub const STRONG_MODE: f64 = 10.0;

const TALBOT_NODES: usize = 32;
const TALBOT_CHECK_NODES: usize = 40;
const TALBOT_TOLERANCE: f64 = 1e-6;

pub fn occupancies(pairs: &[ModePair]) -> Vec<f64> {
    pairs.iter().map(ModePair::occupancy).collect()
}

/// Mean total photon number.
pub fn total_photons(pairs: &[ModePair]) -> f64 {
    pairs.iter().map(ModePair::occupancy).sum()
}

/// Number of equal-intensity thermal modes with the same photon-number
/// variance excess, `N^2 / sum n_m^2`.
pub fn equivalent_modes(pairs: &[ModePair]) -> Result<f64> {
    equivalent_modes_of(&occupancies(pairs))
}

pub fn equivalent_modes_of(occ: &[f64]) -> Result<f64> {
    check_occupancies(occ)?;
    let n: f64 = occ.iter().sum();
    let sq: f64 = occ.iter().map(|x| x * x).sum();
    if sq == 0.0 {
        return Err(Error::UndefinedStatistic(
            "equivalent mode number needs at least one occupied mode".into(),
        ));
    }
    Ok(n * n / sq)
}

fn check_occupancies(occ: &[f64]) -> Result<()> {
    match occ.iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
        Some(k) => Err(Error::invalid(format!(
            "occupancy {k} is {} (must be finite and non-negative)",
            occ[k]
        ))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PmfMethod {
    Exact,
    Continuous,
}

/// Sampled photon-count distribution.
#[derive(Debug, Clone, Serialize)]
pub struct Pmf {
    pub method: PmfMethod,
    /// Photon numbers at which `p` is given.
    pub n: Vec<f64>,
    pub p: Vec<f64>,
    /// Probability mass captured by the support (trapezoidal for sparse
    /// continuous samples).
    pub mass: f64,
    /// `1 - mass`, clamped at zero.
    pub tail: f64,
}

impl Pmf {
    /// Mean over the support, normalized by the captured mass.
    pub fn mean(&self) -> f64 {
        let w = weights(&self.n);
        let num: f64 = self
            .n
            .iter()
            .zip(&self.p)
            .zip(&w)
            .map(|((n, p), w)| n * p * w)
            .sum();
        num / self.mass
    }
}

fn weights(n: &[f64]) -> Vec<f64> {
    // unit spacing gives plain sums; otherwise trapezoid
    let unit = n.windows(2).all(|w| (w[1] - w[0] - 1.0).abs() < 1e-12);
    if unit || n.len() < 2 {
        return vec![1.0; n.len()];
    }
    let mut w = vec![0.0; n.len()];
    for k in 0..n.len() - 1 {
        let h = n[k + 1] - n[k];
        w[k] += h / 2.0;
        w[k + 1] += h / 2.0;
    }
    w
}

/// Mean plus ten standard deviations of the multimode thermal law.
pub fn default_n_max(occ: &[f64]) -> u64 {
    let n: f64 = occ.iter().sum();
    let var: f64 = occ.iter().map(|x| x * (x + 1.0)).sum();
    (n + 10.0 * var.sqrt()).ceil().max(1.0) as u64
}

fn significant(occ: &[f64]) -> Vec<f64> {
    let n: f64 = occ.iter().sum();
    occ.iter()
        .copied()
        .filter(|&x| x > 0.0 && x >= OCCUPANCY_CUTOFF * n)
        .collect()
}

/// Photon-count distribution for the given occupancies.
///
/// `n_max` defaults to [`default_n_max`]. Totals below [`EXACT_LIMIT`] are
/// computed exactly at every integer up to `n_max` and `resolution` is
/// ignored; larger totals are sampled at `resolution` evenly spaced points
/// of the continuous density.
pub fn photon_pmf(occ: &[f64], n_max: Option<u64>, resolution: usize) -> Result<Pmf> {
    check_occupancies(occ)?;
    let n_max = n_max.unwrap_or_else(|| default_n_max(occ));
    if n_max < 1 {
        return Err(Error::invalid("n_max must be at least 1"));
    }
    let total: f64 = occ.iter().sum();
    let (method, n, p) = if total < EXACT_LIMIT {
        let p = exact_pmf(occ, n_max)?;
        let n = (0..p.len()).map(|k| k as f64).collect();
        (PmfMethod::Exact, n, p)
    } else {
        if resolution < 2 {
            return Err(Error::invalid("resolution must be at least 2"));
        }
        let step = n_max as f64 / (resolution - 1) as f64;
        let n: Vec<f64> = (0..resolution).map(|k| (k as f64 * step).round()).collect();
        let mut n = n;
        n.dedup();
        let p = continuous_pmf(occ, &n)?;
        (PmfMethod::Continuous, n, p)
    };
    let w = weights(&n);
    let mass: f64 = p.iter().zip(&w).map(|(p, w)| p * w).sum();
    Ok(Pmf {
        method,
        n,
        p,
        mass,
        tail: (1.0 - mass).max(0.0),
    })
}

/// Exact multimode thermal pmf on `0..=n_max` by repeated convolution with
/// geometric laws.
pub fn exact_pmf(occ: &[f64], n_max: u64) -> Result<Vec<f64>> {
    check_occupancies(occ)?;
    let len = usize::try_from(n_max)
        .ok()
        .and_then(|n| n.checked_add(1))
        .ok_or_else(|| Error::invalid("n_max too large"))?;
    let mut p = vec![0.0; len];
    p[0] = 1.0;
    for nbar in significant(occ) {
        // convolving with (1-r) r^n is the first-order recursion below
        let r = nbar / (1.0 + nbar);
        let mut prev = 0.0;
        for x in p.iter_mut() {
            prev = r * prev + (1.0 - r) * *x;
            *x = prev;
        }
    }
    Ok(p)
}

/// Continuous-limit pmf at the given photon numbers.
///
/// Strong modes (`n >= STRONG_MODE`) enter through their continuous limit.
/// A geometric law with mean `n` is the integer part of an exponential
/// variable with rate `l = ln(1 + 1/n)`, and the integer and fractional
/// parts of an exponential are independent. The sum of the exponentials is
/// therefore the photon count smeared by the sum of fractional parts, whose
/// mean `S` and variance `V` are known; undoing the smearing to second order
/// gives `p(n) = f(n + S) - V/2 f''(n + S)`, with `f` obtained by inverting
/// `prod 1/(1 + s/l)`. Weak modes are discrete on the scale of one photon
/// and are convolved in exactly.
pub fn continuous_pmf(occ: &[f64], ns: &[f64]) -> Result<Vec<f64>> {
    check_occupancies(occ)?;
    let occ = significant(occ);
    let (strong, weak): (Vec<f64>, Vec<f64>) = occ.iter().partition(|&&n| n >= STRONG_MODE);
    let q = weak_pmf(&weak)?;
    if strong.is_empty() {
        return Ok(ns
            .iter()
            .map(|&n| {
                if n >= 0.0 && (n as usize) < q.len() {
                    q[n as usize]
                } else {
                    0.0
                }
            })
            .collect());
    }
    let rates: Vec<f64> = strong.iter().map(|&n| (1.0 + 1.0 / n).ln()).collect();
    let mu: Vec<f64> = rates.iter().map(|l| 1.0 / l).collect();
    let shift: f64 = rates.iter().map(|&l| 1.0 / l - 1.0 / l.exp_m1()).sum();
    let spread: f64 = rates
        .iter()
        .map(|&l| 1.0 / (l * l) - l.exp() / l.exp_m1().powi(2))
        .sum();
    let peak_scale = rates.iter().cloned().fold(f64::INFINITY, f64::min);

    let density = |x: f64| {
        (
            talbot(&mu, spread, x, TALBOT_NODES),
            talbot(&mu, spread, x, TALBOT_CHECK_NODES),
        )
    };
    let checked = |n: f64, a: f64, b: f64| {
        if !(a.is_finite() && b.is_finite()) || (a - b).abs() > TALBOT_TOLERANCE * peak_scale {
            return Err(Error::NumericalFailure(format!(
                "inverse transform did not converge at n = {n}: {a:e} vs {b:e}"
            )));
        }
        Ok(b.max(0.0))
    };

    if ns.iter().all(|n| n.fract() == 0.0) {
        // integer counts share their strong-mode densities across the weak
        // convolution, so each offset is inverted once
        let table = IntegerDensity::build(ns, q.len(), shift, &density);
        return ns
            .iter()
            .map(|&n| {
                let (mut a, mut b) = (0.0, 0.0);
                for (k, &qk) in q.iter().enumerate() {
                    match table.get(n as i64 - k as i64) {
                        Some((fa, fb)) => {
                            a += qk * fa;
                            b += qk * fb;
                        }
                        None => break,
                    }
                }
                checked(n, a, b)
            })
            .collect();
    }

    ns.par_iter()
        .map(|&n| {
            let (mut a, mut b) = (0.0, 0.0);
            for (k, &qk) in q.iter().enumerate() {
                let x = n - k as f64 + shift;
                if x <= 0.0 {
                    break;
                }
                let (fa, fb) = density(x);
                a += qk * fa;
                b += qk * fb;
            }
            checked(n, a, b)
        })
        .collect()
}

/// Strong-mode density at `m + shift` for every integer `m` some requested
/// count needs, stored as merged runs.
struct IntegerDensity {
    runs: Vec<(i64, Vec<(f64, f64)>)>,
    shift: f64,
}

impl IntegerDensity {
    fn build(
        ns: &[f64],
        width: usize,
        shift: f64,
        density: &(impl Fn(f64) -> (f64, f64) + Sync),
    ) -> Self {
        let mut spans: Vec<(i64, i64)> = ns
            .iter()
            .map(|&n| (n as i64 + 1 - width as i64, n as i64))
            .collect();
        spans.sort_unstable();
        let mut merged: Vec<(i64, i64)> = Vec::new();
        for (lo, hi) in spans {
            match merged.last_mut() {
                Some(last) if lo <= last.1 + 1 => last.1 = last.1.max(hi),
                _ => merged.push((lo, hi)),
            }
        }
        let runs = merged
            .into_iter()
            .map(|(lo, hi)| {
                // densities vanish for non-positive arguments
                let lo = lo.max((-shift).floor() as i64 + 1);
                let values = (lo..=hi.max(lo - 1))
                    .into_par_iter()
                    .map(|m| density(m as f64 + shift))
                    .collect();
                (lo, values)
            })
            .collect();
        Self { runs, shift }
    }

    fn get(&self, m: i64) -> Option<(f64, f64)> {
        if m as f64 + self.shift <= 0.0 {
            return None;
        }
        let at = self.runs.partition_point(|(lo, _)| *lo <= m);
        let (lo, values) = self.runs.get(at.checked_sub(1)?)?;
        values.get((m - lo) as usize).copied()
    }
}

/// Exact pmf of the weak modes, cut where it falls below `1e-18` of its
/// peak.
fn weak_pmf(weak: &[f64]) -> Result<Vec<f64>> {
    let mut len: u64 = 64;
    loop {
        let mut q = exact_pmf(weak, len)?;
        let peak = q.iter().cloned().fold(0.0, f64::max);
        let last = *q.last().unwrap_or(&0.0);
        if last < 1e-18 * peak || len >= 1 << 22 {
            let keep = q
                .iter()
                .rposition(|&x| x >= 1e-18 * peak)
                .map_or(1, |k| k + 1);
            q.truncate(keep);
            return Ok(q);
        }
        len *= 2;
    }
}

/// Fixed-Talbot inversion of `(1 - v/2 s^2) prod 1/(1 + s mu)` at `x > 0`.
fn talbot(mu: &[f64], v: f64, x: f64, nodes: usize) -> f64 {
    let m = nodes as f64;
    let r = 2.0 * m / (5.0 * x);
    let image = |s: Complex64| -> Complex64 {
        let log_f = -mu.iter().map(|&u| (1.0 + s * u).ln()).sum::<Complex64>();
        (s * x + log_f).exp() * (1.0 - 0.5 * v * s * s)
    };
    let mut sum = 0.5 * image(Complex64::new(r, 0.0)).re;
    for k in 1..nodes {
        let th = k as f64 * std::f64::consts::PI / m;
        let cot = th.cos() / th.sin();
        let s = Complex64::new(r * th * cot, r * th);
        let sigma = th + (th * cot - 1.0) * cot;
        sum += (image(s) * Complex64::new(1.0, sigma)).re;
    }
    r / m * sum
}

/// Summary statistics of one Stokes run.
#[derive(Debug, Clone, Serialize)]
pub struct PhotonStats {
    pub occupancies: Vec<f64>,
    pub n_tot: f64,
    pub m: f64,
    pub pmf: Option<Pmf>,
}

impl PhotonStats {
    /// `pmf` selects `(n_max, resolution)`; `None` skips the distribution.
    pub fn from_occupancies(occ: &[f64], pmf: Option<(Option<u64>, usize)>) -> Result<Self> {
        check_occupancies(occ)?;
        let m = equivalent_modes_of(occ)?;
        let pmf = match pmf {
            Some((n_max, res)) => Some(photon_pmf(occ, n_max, res)?),
            None => None,
        };
        Ok(Self {
            occupancies: occ.to_vec(),
            n_tot: occ.iter().sum(),
            m,
            pmf,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_mode_is_geometric() {
        let nbar = 2.5;
        let p = exact_pmf(&[nbar], 200).unwrap();
        for (n, &pn) in p.iter().enumerate() {
            let want = nbar.powi(n as i32) / (1.0 + nbar).powi(n as i32 + 1);
            assert!((pn - want).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn two_equal_modes_match_closed_form() {
        let nbar = 4.0;
        let p = exact_pmf(&[nbar, nbar], 300).unwrap();
        for (n, &pn) in p.iter().enumerate() {
            let want = (n as f64 + 1.0) * nbar.powi(n as i32) / (1.0 + nbar).powi(n as i32 + 2);
            assert!((pn - want).abs() < 1e-12);
        }
    }

    #[test]
    fn totals_and_mode_number() {
        assert_eq!(equivalent_modes_of(&[3.0]).unwrap(), 1.0);
        assert_eq!(equivalent_modes_of(&[2.0, 2.0]).unwrap(), 2.0);
        assert!(matches!(
            equivalent_modes_of(&[0.0, 0.0]),
            Err(Error::UndefinedStatistic(_))
        ));
        assert!(matches!(
            equivalent_modes_of(&[]),
            Err(Error::UndefinedStatistic(_))
        ));
        assert_eq!(total_photons(&[]), 0.0);
    }

    #[test]
    fn negative_occupancy_rejected() {
        assert!(matches!(
            photon_pmf(&[1.0, -0.5], None, 10),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn default_support_captures_mass() {
        let occ = [30.0, 10.0, 5.0, 1.0];
        let pmf = photon_pmf(&occ, None, 0).unwrap();
        assert_eq!(pmf.method, PmfMethod::Exact);
        assert!(pmf.mass > 0.999 && pmf.mass <= 1.0 + 1e-12);
        assert!((pmf.mean() - 46.0).abs() / 46.0 < 5e-3);
    }

    #[test]
    fn zero_occupancy_is_vacuum() {
        let p = exact_pmf(&[0.0, 0.0], 5).unwrap();
        assert_eq!(p, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn talbot_single_exponential() {
        for x in [0.3, 1.0, 5.0, 20.0] {
            let f = talbot(&[2.0], 0.0, x, 32);
            let want = (-x / 2.0).exp() / 2.0;
            assert!(
                (f - want).abs() < 1e-9 * want.max(1e-3),
                "x={x}: {f} vs {want}"
            );
        }
    }
}
