//! Sudden-impulse kick operator `exp(−iQz)` on the truncated basis.
//!
//! Matrix elements use the multipole expansion
//! `exp(−iQz) = Σ_L (−i)^L (2L+1) j_L(Qr) P_L(cos θ)`.

use std::io::{BufRead, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::radial::common_grid;
use super::{angular_coupling, spherical_bessel_array, Basis, BasisState, RadialBasis, RadialWavefunction};
use crate::error::{Error, Result};

/// ∫ u_a(r) j_L(Qr) u_b(r) dr.
pub fn radial_kick_integral(
    wf_a: &RadialWavefunction,
    wf_b: &RadialWavefunction,
    big_l: u32,
    q: f64,
) -> Result<f64> {
    let (a, b, grid) = common_grid(wf_a, wf_b)?;
    let l = big_l as usize;
    Ok(a.iter()
        .zip(b.iter())
        .enumerate()
        .filter(|(_, (x, y))| **x != 0.0 && **y != 0.0)
        .map(|(i, (x, y))| {
            let j = spherical_bessel_array(l, q * grid.r(i))[l];
            x * y * j * grid.weight(i)
        })
        .sum())
}

/// Columns whose unitarity is enforced: the states a wave packet actually occupies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicalWindow {
    pub n_min: u32,
    pub n_max: u32,
    pub l_max: u32,
}

impl Default for PhysicalWindow {
    fn default() -> Self {
        Self {
            n_min: 28,
            n_max: 32,
            l_max: 1,
        }
    }
}

impl PhysicalWindow {
    pub fn contains(&self, s: &BasisState) -> bool {
        (self.n_min..=self.n_max).contains(&s.n) && s.l <= self.l_max
    }
}

/// Which columns of U are assembled.
///
/// Only columns of states a packet occupies before the kick are ever needed;
/// a large row basis with a handful of columns is far cheaper than the full square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Columns {
    /// States inside the physical window.
    Window,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KickSettings {
    /// Highest multipole in the expansion; `None` uses 2·ℓ_max of the basis,
    /// which is complete for every pair of basis states.
    pub multipole_l_max: Option<u32>,
    pub unitarity_tol: f64,
    pub window: PhysicalWindow,
    pub columns: Columns,
}

impl Default for KickSettings {
    fn default() -> Self {
        Self {
            multipole_l_max: None,
            unitarity_tol: 1e-4,
            window: PhysicalWindow::default(),
            columns: Columns::Window,
        }
    }
}

/// U_ab = ⟨a| exp(−iQz) |b⟩ for every row a of the basis and a subset of columns b.
#[derive(Debug, Clone)]
pub struct KickOperator {
    basis: Basis,
    impulse: f64,
    /// Basis indices of the assembled columns, ascending.
    columns: Vec<usize>,
    /// Column-major: entry (a, j) at `j * dim + a`.
    matrix: Vec<Complex64>,
    column_norms: Vec<f64>,
    checked: Vec<bool>,
    unitarity_tol: f64,
}

/// Assembles the operator without judging truncation quality.
pub fn assemble_kick_operator(rb: &RadialBasis, q: f64, settings: &KickSettings) -> KickOperator {
    let states = rb.basis.states();
    let dim = states.len();
    let basis_l_max = states.iter().map(|s| s.l).max().unwrap_or(0);
    let l_max = settings.multipole_l_max.unwrap_or(2 * basis_l_max) as usize;
    let grid = rb.grid;

    let columns: Vec<usize> = match settings.columns {
        Columns::All => (0..dim).collect(),
        Columns::Window => (0..dim).filter(|&b| settings.window.contains(&states[b])).collect(),
    };

    // jw[L][i] = j_L(Q r_i) Δr_i
    let mut jw = vec![vec![0.0; grid.len]; l_max + 1];
    #[allow(clippy::needless_range_loop)] // transposed fill
    for i in 0..grid.len {
        let j = spherical_bessel_array(l_max, q * grid.r(i));
        let w = grid.weight(i);
        for (big_l, v) in j.into_iter().enumerate() {
            jw[big_l][i] = v * w;
        }
    }

    let ranges: Vec<(usize, usize)> = rb.wavefunctions.iter().map(|wf| wf.support()).collect();

    let element = |a: usize, b: usize| -> Complex64 {
        let (sa, sb) = (&states[a], &states[b]);
        if sa.m != sb.m {
            return Complex64::new(0.0, 0.0);
        }
        let lo = ranges[a].0.max(ranges[b].0);
        let hi = ranges[a].1.min(ranges[b].1);
        let (ua, ub) = (&rb.wavefunctions[a].values, &rb.wavefunctions[b].values);
        let l_lo = sa.l.abs_diff(sb.l) as usize;
        let l_hi = ((sa.l + sb.l) as usize).min(l_max);
        let mut acc = Complex64::new(0.0, 0.0);
        for big_l in (l_lo..=l_hi).step_by(2) {
            let ang = angular_coupling(sa.l as i32, sb.l as i32, big_l as i32, sa.m)
                .expect("basis states carry valid angular momenta");
            if ang == 0.0 {
                continue;
            }
            let w = &jw[big_l];
            let mut radial = 0.0;
            for i in lo..hi {
                radial += ua[i] * w[i] * ub[i];
            }
            acc += minus_i_pow(big_l) * ((2 * big_l + 1) as f64 * radial * ang);
        }
        acc
    };

    let matrix: Vec<Complex64> = columns
        .par_iter()
        .flat_map_iter(|&b| (0..dim).map(move |a| (a, b)))
        .map(|(a, b)| element(a, b))
        .collect();

    KickOperator::from_parts(
        rb.basis.clone(),
        q,
        columns,
        matrix,
        |s| settings.window.contains(s),
        settings.unitarity_tol,
    )
}

/// Assembles the operator and rejects it when a column in the physical window
/// leaks more norm than the tolerance allows.
pub fn build_kick_operator(rb: &RadialBasis, q: f64, settings: &KickSettings) -> Result<KickOperator> {
    let op = assemble_kick_operator(rb, q, settings);
    if !op.checked.iter().any(|c| *c) {
        return Err(Error::Config(format!(
            "no basis state lies in the unitarity window n in [{}, {}], l <= {}",
            settings.window.n_min, settings.window.n_max, settings.window.l_max
        )));
    }
    let (worst, deficit) = op.worst_checked_column();
    if !(deficit.abs() < op.unitarity_tol) {
        return Err(Error::Truncation {
            label: op.basis.get(worst).label(),
            deficit,
            tolerance: op.unitarity_tol,
        });
    }
    Ok(op)
}

fn minus_i_pow(l: usize) -> Complex64 {
    match l % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, -1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, 1.0),
    }
}

impl KickOperator {
    fn from_parts(
        basis: Basis,
        impulse: f64,
        columns: Vec<usize>,
        matrix: Vec<Complex64>,
        checked: impl Fn(&BasisState) -> bool,
        unitarity_tol: f64,
    ) -> Self {
        let dim = basis.len();
        let column_norms = matrix
            .chunks(dim.max(1))
            .map(|col| col.iter().map(|z| z.norm_sqr()).sum())
            .collect();
        let checked = columns.iter().map(|&b| checked(basis.get(b))).collect();
        Self {
            basis,
            impulse,
            columns,
            matrix,
            column_norms,
            checked,
            unitarity_tol,
        }
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn impulse(&self) -> f64 {
        self.impulse
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn unitarity_tol(&self) -> f64 {
        self.unitarity_tol
    }

    /// Basis indices of the assembled columns.
    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    fn slot(&self, b: usize) -> Option<usize> {
        self.columns.binary_search(&b).ok()
    }

    pub fn has_column(&self, b: usize) -> bool {
        self.slot(b).is_some()
    }

    /// U_ab, or `None` when column b was not assembled.
    #[inline]
    pub fn get(&self, a: usize, b: usize) -> Option<Complex64> {
        self.slot(b).map(|j| self.matrix[j * self.dim() + a])
    }

    /// Full column b over all rows.
    pub fn column(&self, b: usize) -> Option<&[Complex64]> {
        let dim = self.dim();
        self.slot(b).map(|j| &self.matrix[j * dim..(j + 1) * dim])
    }

    /// Σ_a |U_ab|² for each assembled column, in the order of [`KickOperator::columns`].
    pub fn column_norms(&self) -> &[f64] {
        &self.column_norms
    }

    /// 1 − Σ_a |U_ab|² for each assembled column.
    pub fn deficits(&self) -> Vec<f64> {
        self.column_norms.iter().map(|n| 1.0 - n).collect()
    }

    /// Whether assembled column b is subject to the unitarity check.
    pub fn is_checked(&self, b: usize) -> bool {
        self.slot(b).is_some_and(|j| self.checked[j])
    }

    /// Basis index and deficit of the checked column with the largest |deficit|.
    pub fn worst_checked_column(&self) -> (usize, f64) {
        self.column_norms
            .iter()
            .enumerate()
            .filter(|(j, _)| self.checked[*j])
            .map(|(j, n)| (self.columns[j], 1.0 - n))
            .fold((0, 0.0), |best, cur| {
                if cur.1.abs() > best.1.abs() {
                    cur
                } else {
                    best
                }
            })
    }

    pub fn is_valid(&self) -> bool {
        self.checked.iter().any(|c| *c) && self.worst_checked_column().1.abs() < self.unitarity_tol
    }

    /// U · v. The vector may only occupy assembled columns.
    pub fn apply(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        let dim = self.dim();
        if v.len() != dim {
            return Err(Error::BasisMismatch(format!(
                "vector of length {} applied to a kick operator of dimension {dim}",
                v.len()
            )));
        }
        let mut out = vec![Complex64::new(0.0, 0.0); dim];
        for (b, x) in v.iter().enumerate() {
            if *x == Complex64::new(0.0, 0.0) {
                continue;
            }
            let col = self.column(b).ok_or_else(|| {
                Error::BasisMismatch(format!(
                    "packet occupies {}, whose kick column was not assembled",
                    self.basis.get(b)
                ))
            })?;
            for (o, u) in out.iter_mut().zip(col) {
                *o += u * x;
            }
        }
        Ok(out)
    }

    /// Writes the text matrix format: `#` header with impulse, dimension, the
    /// ordered basis (index n l m defect energy) and the assembled column
    /// indices, then one line per row a of whitespace-separated `re im` pairs
    /// for the listed columns.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# impulse_au {}", self.impulse)?;
        writeln!(w, "# dimension {}", self.dim())?;
        writeln!(w, "# basis: index n l m defect energy_au")?;
        for (i, s) in self.basis.states().iter().enumerate() {
            writeln!(w, "# {} {} {} {} {} {}", i, s.n, s.l, s.m, s.defect, s.energy)?;
        }
        let cols: Vec<String> = self.columns.iter().map(|c| c.to_string()).collect();
        writeln!(w, "# columns {}", cols.join(" "))?;
        let dim = self.dim();
        let mut line = String::new();
        for a in 0..dim {
            line.clear();
            for j in 0..self.columns.len() {
                let z = self.matrix[j * dim + a];
                if j > 0 {
                    line.push(' ');
                }
                line.push_str(&format!("{} {}", z.re, z.im));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// Reads the format produced by [`KickOperator::write_text`]. Unrecognized
    /// `#` lines (provenance) are skipped. The unitarity window is not stored,
    /// so every column of the result is checked against `unitarity_tol`.
    pub fn read_text<R: BufRead>(r: R, unitarity_tol: f64) -> Result<Self> {
        let bad = |msg: String| Error::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, msg));
        let mut impulse = None;
        let mut dim = None;
        let mut states = Vec::new();
        let mut columns: Option<Vec<usize>> = None;
        let mut in_basis = false;
        let mut rows: Vec<Vec<Complex64>> = Vec::new();
        for line in r.lines() {
            let line = line?;
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(v) = rest.strip_prefix("impulse_au") {
                    impulse = Some(v.trim().parse::<f64>().map_err(|e| bad(e.to_string()))?);
                } else if let Some(v) = rest.strip_prefix("dimension") {
                    dim = Some(v.trim().parse::<usize>().map_err(|e| bad(e.to_string()))?);
                } else if let Some(v) = rest.strip_prefix("columns") {
                    in_basis = false;
                    columns = Some(
                        v.split_whitespace()
                            .map(|t| t.parse::<usize>().map_err(|e| bad(e.to_string())))
                            .collect::<Result<_>>()?,
                    );
                } else if rest.starts_with("basis:") {
                    in_basis = true;
                } else if in_basis && states.len() < dim.unwrap_or(0) {
                    let f: Vec<&str> = rest.split_whitespace().collect();
                    if f.len() != 6 {
                        return Err(bad(format!("malformed basis line: {line}")));
                    }
                    let p = |s: &str| s.parse::<f64>().map_err(|e| bad(e.to_string()));
                    states.push(BasisState {
                        n: f[1].parse().map_err(|_| bad(line.clone()))?,
                        l: f[2].parse().map_err(|_| bad(line.clone()))?,
                        m: f[3].parse().map_err(|_| bad(line.clone()))?,
                        defect: p(f[4])?,
                        energy: p(f[5])?,
                    });
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let nums: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| bad(e.to_string())))
                .collect::<Result<_>>()?;
            if !nums.len().is_multiple_of(2) {
                return Err(bad("odd number of entries in matrix row".into()));
            }
            rows.push(nums.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect());
        }
        let dim = dim.ok_or_else(|| bad("missing dimension header".into()))?;
        let impulse = impulse.ok_or_else(|| bad("missing impulse header".into()))?;
        let columns = columns.ok_or_else(|| bad("missing columns header".into()))?;
        if states.len() != dim
            || rows.len() != dim
            || rows.iter().any(|r| r.len() != columns.len())
            || columns.windows(2).any(|w| w[0] >= w[1])
            || columns.last().is_some_and(|&c| c >= dim)
        {
            return Err(bad(format!(
                "expected {dim} basis states and {dim} rows of {} entries",
                columns.len()
            )));
        }
        let mut matrix = vec![Complex64::new(0.0, 0.0); dim * columns.len()];
        for (a, row) in rows.iter().enumerate() {
            for (j, z) in row.iter().enumerate() {
                matrix[j * dim + a] = *z;
            }
        }
        Ok(Self::from_parts(
            Basis::from_states(states)?,
            impulse,
            columns,
            matrix,
            |_| true,
            unitarity_tol,
        ))
    }
}
