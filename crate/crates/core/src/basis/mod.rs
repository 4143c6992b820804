//! Truncated atomic basis for alkali-like Rydberg atoms.
//!
//! States carry quantum-defect energies `E = -1/(2 n*^2)` with `n* = n - δ_ℓ`.
//! The submodules provide radial wavefunctions, angular couplings and the
//! impulse-kick operator built on top of them.

mod angular;
mod bessel;
mod kick;
mod radial;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use angular::{angular_coupling, wigner_3j};
pub use bessel::{spherical_bessel, spherical_bessel_array};
pub use kick::{
    assemble_kick_operator, build_kick_operator, radial_kick_integral, Columns, KickOperator,
    KickSettings, PhysicalWindow,
};
pub use radial::{solve_radial, solve_radial_on, GridSpec, RadialBasis, RadialGrid, RadialWavefunction};

/// Per-ℓ quantum defects. Orbital momenta beyond the table have zero defect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QuantumDefects(Vec<f64>);

impl QuantumDefects {
    pub fn new(defects: Vec<f64>) -> Self {
        Self(defects)
    }

    /// Literature values for cesium s, p, d, f series (n ≈ 30); zero for ℓ ≥ 4.
    pub fn cesium() -> Self {
        Self(vec![4.049, 3.5916, 2.475, 0.0334])
    }

    pub fn hydrogen() -> Self {
        Self(Vec::new())
    }

    pub fn get(&self, l: u32) -> f64 {
        self.0.get(l as usize).copied().unwrap_or(0.0)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl Default for QuantumDefects {
    fn default() -> Self {
        Self::cesium()
    }
}

/// Quantum-defect energy in hartree.
pub fn rydberg_energy(n: u32, l: u32, defects: &QuantumDefects) -> Result<f64> {
    if n == 0 || l >= n {
        return Err(Error::Domain {
            n: n.into(),
            l: l.into(),
            m: 0,
            reason: "require n >= 1 and 0 <= l < n".into(),
        });
    }
    let n_star = n as f64 - defects.get(l);
    if !(n_star > 0.0) {
        return Err(Error::Domain {
            n: n.into(),
            l: l.into(),
            m: 0,
            reason: format!("effective quantum number n* = {n_star} is not positive"),
        });
    }
    Ok(-0.5 / (n_star * n_star))
}

/// One atomic eigenstate |n ℓ m⟩.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisState {
    pub n: u32,
    pub l: u32,
    pub m: i32,
    pub defect: f64,
    pub energy: f64,
}

impl BasisState {
    pub fn new(n: u32, l: u32, m: i32, defects: &QuantumDefects) -> Result<Self> {
        if m.unsigned_abs() > l {
            return Err(Error::Domain {
                n: n.into(),
                l: l.into(),
                m: m.into(),
                reason: "require |m| <= l".into(),
            });
        }
        let energy = rydberg_energy(n, l, defects)?;
        Ok(Self {
            n,
            l,
            m,
            defect: defects.get(l),
            energy,
        })
    }

    pub fn n_star(&self) -> f64 {
        self.n as f64 - self.defect
    }

    /// True when (n, ℓ, m) coincide; energies follow from them.
    pub fn same_quantum_numbers(&self, other: &BasisState) -> bool {
        self.n == other.n && self.l == other.l && self.m == other.m
    }

    /// Spectroscopic label such as `30p` or `28g`; `m` is appended when nonzero.
    pub fn label(&self) -> String {
        let mut s = format!("{}{}", self.n, orbital_letter(self.l));
        if self.m != 0 {
            s.push_str(&format!("(m={})", self.m));
        }
        s
    }
}

impl fmt::Display for BasisState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

const LETTERS: &[u8] = b"spdfghiklmnoqrtuvwxyz";

pub fn orbital_letter(l: u32) -> String {
    match LETTERS.get(l as usize) {
        Some(c) => (*c as char).to_string(),
        None => format!("[l={l}]"),
    }
}

/// Parses labels like `31p` into (n, ℓ).
pub fn parse_label(label: &str) -> Option<(u32, u32)> {
    let split = label.find(|c: char| !c.is_ascii_digit())?;
    let (digits, letter) = label.split_at(split);
    let n = digits.parse().ok()?;
    let mut chars = letter.chars();
    let c = chars.next()?;
    if chars.next().is_some() {
        return None;
    }
    let l = LETTERS.iter().position(|&b| b as char == c)?;
    Some((n, l as u32))
}

/// Truncation parameters for a rectangular basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub n_min: u32,
    pub n_max: u32,
    pub l_max: u32,
    pub m: i32,
}

impl Default for BasisSpec {
    fn default() -> Self {
        Self {
            n_min: 10,
            n_max: 150,
            l_max: 8,
            m: 0,
        }
    }
}

/// Ordered, shareable list of basis states.
#[derive(Debug, Clone)]
pub struct Basis {
    states: Arc<[BasisState]>,
}

impl PartialEq for Basis {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.states, &other.states)
            || (self.states.len() == other.states.len()
                && self
                    .states
                    .iter()
                    .zip(other.states.iter())
                    .all(|(a, b)| a.same_quantum_numbers(b) && a.energy == b.energy))
    }
}

impl Basis {
    pub fn from_states(states: Vec<BasisState>) -> Result<Self> {
        for (i, a) in states.iter().enumerate() {
            if states[..i].iter().any(|b| a.same_quantum_numbers(b)) {
                return Err(Error::BasisMismatch(format!("duplicate state {a}")));
            }
        }
        Ok(Self {
            states: states.into(),
        })
    }

    /// All (n, ℓ) with `n_min <= n <= n_max`, `|m| <= ℓ <= min(l_max, n-1)`,
    /// ordered by ℓ and then n.
    pub fn build(spec: &BasisSpec, defects: &QuantumDefects) -> Result<Self> {
        if spec.n_min == 0 || spec.n_min > spec.n_max {
            return Err(Error::Config(format!(
                "basis n-window [{}, {}] is empty or starts below 1",
                spec.n_min, spec.n_max
            )));
        }
        let l_lo = spec.m.unsigned_abs();
        if l_lo > spec.l_max {
            return Err(Error::Config(format!(
                "basis m = {} exceeds l_max = {}",
                spec.m, spec.l_max
            )));
        }
        let mut states = Vec::new();
        for l in l_lo..=spec.l_max {
            for n in spec.n_min.max(l + 1)..=spec.n_max {
                states.push(BasisState::new(n, l, spec.m, defects)?);
            }
        }
        Self::from_states(states)
    }

    pub fn states(&self) -> &[BasisState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn get(&self, i: usize) -> &BasisState {
        &self.states[i]
    }

    pub fn index_of(&self, n: u32, l: u32, m: i32) -> Option<usize> {
        self.states
            .iter()
            .position(|s| s.n == n && s.l == l && s.m == m)
    }

    pub fn energies(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.energy).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::period_ps;

    #[test]
    fn hydrogen_ground_state() {
        let e = rydberg_energy(1, 0, &QuantumDefects::hydrogen()).unwrap();
        assert_eq!(e, -0.5);
    }

    #[test]
    fn cesium_30p() {
        let e = rydberg_energy(30, 1, &QuantumDefects::cesium()).unwrap();
        let expected = -1.0 / (2.0 * 26.4084_f64.powi(2));
        assert!((e - expected).abs() < 1e-15);
        assert!((e + 7.170e-4).abs() < 5e-7);
    }

    #[test]
    fn adjacent_p_beat_period() {
        let d = QuantumDefects::cesium();
        let e30 = rydberg_energy(30, 1, &d).unwrap();
        let e31 = rydberg_energy(31, 1, &d).unwrap();
        let t = period_ps(e31 - e30);
        assert!((t - 2.96).abs() < 0.01, "beat period {t}");
    }

    #[test]
    fn domain_errors() {
        let d = QuantumDefects::cesium();
        assert!(rydberg_energy(0, 0, &d).is_err());
        assert!(rydberg_energy(3, 3, &d).is_err());
        // n* = 4 - 4.049 < 0
        assert!(rydberg_energy(4, 0, &d).is_err());
        assert!(BasisState::new(5, 1, 2, &d).is_err());
    }

    #[test]
    fn energy_increases_with_n() {
        let d = QuantumDefects::cesium();
        for l in 0..7 {
            for n in (l + 6)..60 {
                let lo = rydberg_energy(n, l, &d).unwrap();
                let hi = rydberg_energy(n + 1, l, &d).unwrap();
                assert!(hi > lo);
            }
        }
    }

    #[test]
    fn labels_round_trip() {
        let d = QuantumDefects::cesium();
        let s = BasisState::new(31, 1, 0, &d).unwrap();
        assert_eq!(s.label(), "31p");
        assert_eq!(parse_label("31p"), Some((31, 1)));
        assert_eq!(parse_label("28g"), Some((28, 4)));
        assert_eq!(parse_label("p31"), None);
        assert_eq!(parse_label("31pp"), None);
    }

    #[test]
    fn default_basis_layout() {
        let basis = Basis::build(&BasisSpec::default(), &QuantumDefects::cesium()).unwrap();
        assert_eq!(basis.len(), 141 * 9);
        assert_eq!(basis.index_of(10, 0, 0), Some(0));
        assert!(basis.index_of(30, 1, 0).is_some());
        assert!(basis.index_of(30, 9, 0).is_none());
        assert!(basis.states().iter().all(|s| s.m == 0 && s.l < s.n));
    }
}
