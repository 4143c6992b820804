//! Radial Coulomb wavefunctions at quantum-defect energies.
//!
//! The radial equation `u'' = [ℓ(ℓ+1)/r² − 2/r − 2E] u` is mapped onto the
//! variable `x = √r` with `u = √(2x) χ(x)`, which turns it into
//!
//! ```text
//! χ'' = [((2ℓ+1)² − ¼)/x² − 8 − 8E x²] χ
//! ```
//!
//! on a uniform x grid. The local wavenumber in x is bounded by 2√2 for any
//! bound state, so a fixed step resolves every Rydberg level equally well.
//! Integration runs inward from the classically forbidden tail with Numerov's
//! method. For non-integer `n*` the inward solution is irregular at the
//! origin; it is truncated at the innermost node outside the divergence.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Basis, BasisState};
use crate::error::{Error, Result};

/// Tail beyond `outer_factor · n*²`, in units of the decay length `n*`.
const TAIL_LENGTHS: f64 = 15.0;
/// Inner minima below this fraction of the peak are treated as regular behaviour.
const REGULAR_MIN_FRACTION: f64 = 1e-5;
/// Width of the inner taper applied after a node cut, relative to the node radius.
const TAPER_WIDTH: f64 = 0.5;
/// Minimum wavelength in x of any bound state, 2π / (2√2).
const MIN_WAVELENGTH_X: f64 = std::f64::consts::PI / std::f64::consts::SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub points_per_wavelength: f64,
    pub outer_factor: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            points_per_wavelength: 200.0,
            outer_factor: 3.5,
        }
    }
}

impl GridSpec {
    /// Radius up to which a state with effective quantum number `n_star` is integrated.
    pub fn extent(&self, n_star: f64) -> f64 {
        self.outer_factor * n_star * n_star + TAIL_LENGTHS * n_star
    }

    pub fn step(&self) -> f64 {
        MIN_WAVELENGTH_X / self.points_per_wavelength
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.points_per_wavelength >= 20.0) {
            return Err(Error::Config(format!(
                "grid.points_per_wavelength = {} must be at least 20",
                self.points_per_wavelength
            )));
        }
        if !(self.outer_factor > 2.0) {
            return Err(Error::Config(format!(
                "grid.outer_factor = {} must exceed 2 (classical turning point)",
                self.outer_factor
            )));
        }
        Ok(())
    }
}

/// Grid uniform in √r: `x_i = (i+1)·step`, `r_i = x_i²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialGrid {
    pub step: f64,
    pub len: usize,
}

impl RadialGrid {
    pub fn for_n_star(n_star_max: f64, spec: &GridSpec) -> Result<Self> {
        spec.validate()?;
        let step = spec.step();
        let x_max = spec.extent(n_star_max).sqrt();
        Ok(Self {
            step,
            len: (x_max / step).ceil() as usize + 1,
        })
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.step
    }

    #[inline]
    pub fn r(&self, i: usize) -> f64 {
        let x = self.x(i);
        x * x
    }

    /// Quadrature weight Δr_i = (dr/dx)·h of the trapezoid rule in x.
    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        2.0 * self.x(i) * self.step
    }

    pub fn r_min(&self) -> f64 {
        self.r(0)
    }

    pub fn r_max(&self) -> f64 {
        self.r(self.len - 1)
    }

    pub fn radii(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.r(i)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct RadialWavefunction {
    pub state: BasisState,
    pub grid: RadialGrid,
    /// u(r_i) = r R(r_i), zero inside the inner cutoff and beyond the integration start.
    pub values: Vec<f64>,
    /// First grid index kept after inner truncation.
    pub inner_cutoff: usize,
}

impl RadialWavefunction {
    pub fn norm(&self) -> f64 {
        self.integrate(|_, u| u * u)
    }

    pub fn expectation_r(&self) -> f64 {
        self.integrate(|r, u| u * u * r)
    }

    fn integrate(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(i, &u)| f(self.grid.r(i), u) * self.grid.weight(i))
            .sum()
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn nodes(&self) -> usize {
        let mut count = 0;
        let mut last = 0.0;
        for &u in &self.values[self.inner_cutoff..] {
            if u == 0.0 {
                continue;
            }
            if last != 0.0 && (u > 0.0) != (last > 0.0) {
                count += 1;
            }
            last = u;
        }
        count
    }

    /// Half-open index range outside which the function vanishes.
    pub fn support(&self) -> (usize, usize) {
        let hi = self.values.iter().rposition(|v| *v != 0.0).map_or(0, |i| i + 1);
        let lo = self.values[..hi].iter().position(|v| *v != 0.0).unwrap_or(hi);
        (lo, hi)
    }

    pub fn r_cutoff(&self) -> f64 {
        self.grid.r(self.inner_cutoff)
    }

    /// Overlap ∫ u_a u_b dr.
    pub fn overlap(&self, other: &RadialWavefunction) -> Result<f64> {
        self.matrix_element(other, |_| 1.0)
    }

    /// ∫ u_a f(r) u_b dr.
    pub fn matrix_element(&self, other: &RadialWavefunction, f: impl Fn(f64) -> f64) -> Result<f64> {
        let (a, b, grid) = common_grid(self, other)?;
        Ok(a.iter()
            .zip(b.iter())
            .enumerate()
            .map(|(i, (x, y))| x * f(grid.r(i)) * y * grid.weight(i))
            .sum())
    }
}

/// Brings two wavefunctions onto one grid. Equal steps share nodes directly;
/// when one step is an integer multiple of the other the finer function is
/// subsampled onto the coarser grid.
pub(super) fn common_grid(
    a: &RadialWavefunction,
    b: &RadialWavefunction,
) -> Result<(Vec<f64>, Vec<f64>, RadialGrid)> {
    let (ga, gb) = (a.grid, b.grid);
    let ratio = ga.step.max(gb.step) / ga.step.min(gb.step);
    let stride = ratio.round();
    if (ratio - stride).abs() > 1e-9 * ratio {
        return Err(Error::Grid(format!(
            "steps {} and {} are not commensurable",
            ga.step, gb.step
        )));
    }
    let stride = stride as usize;
    let resample = |wf: &RadialWavefunction, coarse: RadialGrid| -> Vec<f64> {
        if wf.grid.step == coarse.step || stride == 1 {
            return wf.values.clone();
        }
        // x_j(coarse) = (j+1)·stride·h_fine  ->  fine index (j+1)·stride − 1
        (0..coarse.len)
            .map(|j| wf.values.get((j + 1) * stride - 1).copied().unwrap_or(0.0))
            .collect()
    };
    let coarse_step = ga.step.max(gb.step);
    let coarse_len = |g: RadialGrid| {
        if stride == 1 || g.step == coarse_step {
            g.len
        } else {
            g.len / stride
        }
    };
    let len = coarse_len(ga).max(coarse_len(gb));
    let grid = RadialGrid {
        step: coarse_step,
        len,
    };
    let mut va = resample(a, grid);
    let mut vb = resample(b, grid);
    va.resize(len, 0.0);
    vb.resize(len, 0.0);
    Ok((va, vb, grid))
}

/// Solves for `state` on a grid sized for that state alone.
pub fn solve_radial(state: &BasisState, spec: &GridSpec) -> Result<RadialWavefunction> {
    let grid = RadialGrid::for_n_star(state.n_star(), spec)?;
    solve_radial_on(state, &grid, spec)
}

/// Solves for `state` on a shared grid (which must reach the state's tail).
pub fn solve_radial_on(
    state: &BasisState,
    grid: &RadialGrid,
    spec: &GridSpec,
) -> Result<RadialWavefunction> {
    let fail = |reason: String| Error::Solver {
        n: state.n,
        l: state.l,
        energy: state.energy,
        r_min: grid.r_min(),
        r_max: grid.r_max(),
        reason,
    };

    let extent = spec.extent(state.n_star());
    if grid.x(grid.len - 1) + grid.step < extent.sqrt() {
        return Err(fail(format!(
            "grid ends before the required tail extent r = {extent:.3e}"
        )));
    }
    let start = ((extent.sqrt() / grid.step).floor() as usize)
        .saturating_sub(1)
        .min(grid.len - 1);
    if start < 8 {
        return Err(fail("fewer than 8 grid points inside the tail extent".into()));
    }

    let h2_12 = grid.step * grid.step / 12.0;
    let c_l = {
        let t = (2 * state.l + 1) as f64;
        t * t - 0.25
    };
    let e = state.energy;
    let g = |i: usize| {
        let x = grid.x(i);
        c_l / (x * x) - 8.0 - 8.0 * e * x * x
    };

    let mut chi = vec![0.0; grid.len];
    chi[start - 1] = 1e-30;
    // inward integration stops where the Numerov denominator degenerates
    let mut inner_stop = 0;
    let mut g_next = g(start);
    let mut g_here = g(start - 1);
    for i in (1..start).rev() {
        let g_prev = g(i - 1);
        let denom = 1.0 - h2_12 * g_prev;
        if h2_12 * g_prev > 0.5 {
            inner_stop = i;
            break;
        }
        chi[i - 1] =
            (2.0 * (1.0 + 5.0 * h2_12 * g_here) * chi[i] - (1.0 - h2_12 * g_next) * chi[i + 1])
                / denom;
        if !chi[i - 1].is_finite() {
            return Err(fail(format!("non-finite value at grid index {}", i - 1)));
        }
        if chi[i - 1].abs() > 1e200 {
            for v in chi[i - 1..=start].iter_mut() {
                *v *= 1e-200;
            }
        }
        g_next = g_here;
        g_here = g_prev;
    }

    let mut u: Vec<f64> = chi
        .iter()
        .enumerate()
        .map(|(i, c)| (2.0 * grid.x(i)).sqrt() * c)
        .collect();

    let (cutoff, at_node) = inner_cutoff(&u, inner_stop, start).map_err(fail)?;
    for v in u[..cutoff].iter_mut() {
        *v = 0.0;
    }
    if at_node {
        // a bare cut leaves a slope discontinuity whose high-momentum content the
        // kick would scatter far up the series; roll the function in smoothly
        let r_node = grid.r(cutoff);
        let width = TAPER_WIDTH * r_node;
        for (i, v) in u.iter_mut().enumerate().skip(cutoff) {
            let d = (grid.r(i) - r_node) / width;
            *v *= 1.0 - (-d * d).exp();
        }
    }

    let norm: f64 = u
        .iter()
        .enumerate()
        .map(|(i, v)| v * v * grid.weight(i))
        .sum();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(fail(format!("cannot normalize (norm = {norm})")));
    }
    let scale = norm.sqrt().recip();
    for v in u.iter_mut() {
        *v *= scale;
    }

    Ok(RadialWavefunction {
        state: *state,
        grid: *grid,
        values: u,
        inner_cutoff: cutoff,
    })
}

/// Index of the first kept point. Scanning outward from the innermost
/// integrated point, the first local minimum of |u| marks where the inward
/// solution stops diverging.
/// Returns the index and whether it sits at a node of an irregular solution.
fn inner_cutoff(u: &[f64], first: usize, last: usize) -> std::result::Result<(usize, bool), String> {
    let peak = u[first..=last].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut i_min = first;
    while i_min < last && u[i_min + 1].abs() < u[i_min].abs() {
        i_min += 1;
    }
    let regular = i_min == first || u[i_min].abs() <= REGULAR_MIN_FRACTION * peak;
    if i_min < last && u[i_min] * u[i_min + 1] < 0.0 {
        return Ok((i_min + 1, !regular));
    }
    if regular {
        return Ok((i_min, false));
    }
    let from = i_min.saturating_sub(1).max(first);
    (from..last)
        .find(|&j| u[j] * u[j + 1] < 0.0)
        .map(|j| (j + 1, true))
        .ok_or_else(|| "divergent inner solution has no node to truncate at".to_string())
}

/// Basis states with their radial functions on one shared grid.
///
/// Within each ℓ series the raw functions are symmetrically (Löwdin)
/// orthonormalized: cutting a quantum-defect Coulomb function at its inner node
/// leaves same-ℓ overlaps of order 1e-4, which would otherwise show up as
/// a spurious unitarity defect of the kick operator.
#[derive(Debug, Clone)]
pub struct RadialBasis {
    pub basis: Basis,
    pub grid: RadialGrid,
    pub spec: GridSpec,
    pub wavefunctions: Vec<RadialWavefunction>,
    /// Largest |⟨a|b⟩ − δ_ab| among same-ℓ raw solutions before orthonormalization.
    pub raw_overlap_error: f64,
}

impl RadialBasis {
    pub fn solve(basis: &Basis, spec: &GridSpec) -> Result<Self> {
        let n_star_max = basis
            .states()
            .iter()
            .map(|s| s.n_star())
            .fold(0.0, f64::max);
        let grid = RadialGrid::for_n_star(n_star_max, spec)?;

        // radial functions depend on (n, ℓ) only
        let mut keys: Vec<BasisState> = Vec::new();
        for s in basis.states() {
            if !keys.iter().any(|k| k.n == s.n && k.l == s.l) {
                keys.push(*s);
            }
        }
        let mut radial = keys
            .par_iter()
            .map(|s| solve_radial_on(s, &grid, spec))
            .collect::<Result<Vec<_>>>()?;
        let raw_overlap_error = orthonormalize_series(&mut radial)?;

        // move each solution to its first state; further m-copies clone it
        let mut radial: Vec<Option<RadialWavefunction>> = radial.into_iter().map(Some).collect();
        let mut wavefunctions: Vec<RadialWavefunction> = Vec::with_capacity(basis.len());
        for s in basis.states() {
            let k = keys
                .iter()
                .position(|k| k.n == s.n && k.l == s.l)
                .expect("every state has a radial solution");
            let mut wf = match radial[k].take() {
                Some(wf) => wf,
                None => wavefunctions
                    .iter()
                    .find(|w| w.state.n == s.n && w.state.l == s.l)
                    .expect("taken solutions were stored")
                    .clone(),
            };
            wf.state = *s;
            wavefunctions.push(wf);
        }
        Ok(Self {
            basis: basis.clone(),
            grid,
            spec: *spec,
            wavefunctions,
            raw_overlap_error,
        })
    }
}

/// Löwdin orthonormalization per ℓ; returns the largest raw overlap error.
fn orthonormalize_series(wfs: &mut [RadialWavefunction]) -> Result<f64> {
    use nalgebra::DMatrix;

    let mut worst: f64 = 0.0;
    let mut ls: Vec<u32> = wfs.iter().map(|w| w.state.l).collect();
    ls.sort_unstable();
    ls.dedup();
    for l in ls {
        let idx: Vec<usize> = (0..wfs.len()).filter(|&i| wfs[i].state.l == l).collect();
        let k = idx.len();
        // all functions share one grid here, so overlaps are plain weighted dot products
        let grid = wfs[idx[0]].grid;
        let weights: Vec<f64> = (0..grid.len).map(|i| grid.weight(i)).collect();
        let supports: Vec<(usize, usize)> = idx.iter().map(|&i| wfs[i].support()).collect();
        let mut overlap = DMatrix::<f64>::zeros(k, k);
        for a in 0..k {
            for b in a..k {
                let (ua, ub) = (&wfs[idx[a]].values, &wfs[idx[b]].values);
                let lo = supports[a].0.max(supports[b].0);
                let hi = supports[a].1.min(supports[b].1);
                let o: f64 = (lo..hi).map(|i| ua[i] * ub[i] * weights[i]).sum();
                overlap[(a, b)] = o;
                overlap[(b, a)] = o;
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((o - target).abs());
            }
        }
        let eig = overlap.symmetric_eigen();
        if eig.eigenvalues.iter().any(|&v| !(v > 0.5)) {
            let s = &wfs[idx[0]].state;
            return Err(Error::Solver {
                n: s.n,
                l: s.l,
                energy: s.energy,
                r_min: wfs[idx[0]].grid.r_min(),
                r_max: wfs[idx[0]].grid.r_max(),
                reason: "radial functions of this series are nearly linearly dependent".into(),
            });
        }
        let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.sqrt().recip()));
        let transform = &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose();

        let old: Vec<Vec<f64>> = idx.iter().map(|&i| wfs[i].values.clone()).collect();
        let cutoff = idx.iter().map(|&i| wfs[i].inner_cutoff).min().unwrap_or(0);
        for (a, &i) in idx.iter().enumerate() {
            let values = &mut wfs[i].values;
            for v in values.iter_mut() {
                *v = 0.0;
            }
            for (b, src) in old.iter().enumerate() {
                let c = transform[(a, b)];
                let (lo, hi) = supports[b];
                for (v, s) in values[lo..hi].iter_mut().zip(&src[lo..hi]) {
                    *v += c * s;
                }
            }
            wfs[i].inner_cutoff = cutoff;
        }
    }
    Ok(worst)
}
