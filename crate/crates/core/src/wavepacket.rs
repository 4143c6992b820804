//! Wave packets over the truncated basis.
//!
//! Amplitudes are stored in the interaction picture, `ã_k = a_k e^{iω_k t}`, so
//! free evolution only advances the clock. This keeps `evolve` exact and makes
//! the interference with a delayed reference packet a direct function of `ã`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::{parse_label, Basis, KickOperator};
use crate::error::{Error, Result};
use crate::units::ps_to_au;

/// Binding energy of the cesium 7s launch state in hartree
/// (12871 cm⁻¹ below the ionization limit).
pub const CS_7S_ENERGY: f64 = -0.058_645;

/// Tolerance on Σ C_k² for a packet specification.
pub const SPEC_NORM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacketComponent {
    pub n: u32,
    pub l: u32,
    #[serde(default)]
    pub m: i32,
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

impl PacketComponent {
    /// Component from a label such as `30p`.
    pub fn from_label(label: &str, amplitude: f64, phase: f64) -> Result<Self> {
        let (n, l) = parse_label(label)
            .ok_or_else(|| Error::InvalidPacket(format!("cannot parse state label `{label}`")))?;
        Ok(Self {
            n,
            l,
            m: 0,
            amplitude,
            phase,
        })
    }
}

/// Launch amplitudes C_k, phases φ_k and the launch-state energy ω_g.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WavePacketSpec {
    components: Vec<PacketComponent>,
    launch_energy: f64,
}

impl WavePacketSpec {
    pub fn new(components: Vec<PacketComponent>, launch_energy: f64) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidPacket("packet has no components".into()));
        }
        for (i, c) in components.iter().enumerate() {
            if !(c.amplitude >= 0.0) || !c.amplitude.is_finite() || !c.phase.is_finite() {
                return Err(Error::InvalidPacket(format!(
                    "component {}{} needs a finite amplitude >= 0 and a finite phase",
                    c.n, c.l
                )));
            }
            if components[..i]
                .iter()
                .any(|o| o.n == c.n && o.l == c.l && o.m == c.m)
            {
                return Err(Error::InvalidPacket(format!(
                    "state (n={}, l={}, m={}) listed twice",
                    c.n, c.l, c.m
                )));
            }
        }
        let norm: f64 = components.iter().map(|c| c.amplitude * c.amplitude).sum();
        if (norm - 1.0).abs() > SPEC_NORM_TOL {
            return Err(Error::InvalidPacket(format!(
                "sum of squared amplitudes is {norm}, expected 1"
            )));
        }
        if !launch_energy.is_finite() {
            return Err(Error::InvalidPacket("launch energy must be finite".into()));
        }
        Ok(Self {
            components,
            launch_energy,
        })
    }

    /// Equal amplitudes and equal phases over the p states n_min..=n_max.
    pub fn equal_p_states(n_min: u32, n_max: u32, launch_energy: f64) -> Result<Self> {
        if n_min < 2 || n_min > n_max {
            return Err(Error::InvalidPacket(format!(
                "no p states in n-range [{n_min}, {n_max}]"
            )));
        }
        let c = 1.0 / ((n_max - n_min + 1) as f64).sqrt();
        let comps = (n_min..=n_max)
            .map(|n| PacketComponent {
                n,
                l: 1,
                m: 0,
                amplitude: c,
                phase: 0.0,
            })
            .collect();
        Self::new(comps, launch_energy)
    }

    /// Copy with `dphi` added to the phase of state (n, ℓ).
    pub fn with_phase_offset(&self, n: u32, l: u32, dphi: f64) -> Result<Self> {
        let mut out = self.clone();
        let c = out
            .components
            .iter_mut()
            .find(|c| c.n == n && c.l == l)
            .ok_or_else(|| Error::InvalidPacket(format!("no component with n={n}, l={l}")))?;
        c.phase += dphi;
        Ok(out)
    }

    pub fn components(&self) -> &[PacketComponent] {
        &self.components
    }

    pub fn launch_energy(&self) -> f64 {
        self.launch_energy
    }

    /// Basis index of every component, in component order.
    pub fn resolve(&self, basis: &Basis) -> Result<Vec<usize>> {
        self.components
            .iter()
            .map(|c| {
                basis.index_of(c.n, c.l, c.m).ok_or_else(|| {
                    Error::BasisMismatch(format!(
                        "packet state (n={}, l={}, m={}) is not in the basis",
                        c.n, c.l, c.m
                    ))
                })
            })
            .collect()
    }

    /// Population-weighted mean energy Σ C_k² E_k.
    pub fn mean_energy(&self, basis: &Basis) -> Result<f64> {
        let idx = self.resolve(basis)?;
        Ok(self
            .components
            .iter()
            .zip(idx)
            .map(|(c, i)| c.amplitude * c.amplitude * basis.get(i).energy)
            .sum())
    }
}

/// Reference packet resolved against a basis: `C_k2 e^{iφ_k2}` and ω_g.
#[derive(Debug, Clone)]
pub struct Reference {
    /// (basis index, C_k2, φ_k2, ω_k)
    terms: Vec<(usize, f64, f64, f64)>,
    launch_energy: f64,
}

impl Reference {
    pub fn new(spec: &WavePacketSpec, basis: &Basis) -> Result<Self> {
        let idx = spec.resolve(basis)?;
        let terms = spec
            .components
            .iter()
            .zip(idx)
            .map(|(c, i)| (i, c.amplitude, c.phase, basis.get(i).energy))
            .collect();
        Ok(Self {
            terms,
            launch_energy: spec.launch_energy,
        })
    }

    /// `C_k2 e^{i(φ_k2 − (ω_g − ω_k)τ)}` for basis state k, zero when k is absent.
    pub fn term(&self, k: usize, tau_au: f64) -> Complex64 {
        match self.terms.iter().find(|t| t.0 == k) {
            Some(&(_, c, phi, omega)) => Complex64::from_polar(c, phi - (self.launch_energy - omega) * tau_au),
            None => Complex64::new(0.0, 0.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct WavePacket {
    basis: Basis,
    /// Interaction-picture amplitudes ã_k.
    amplitudes: Vec<Complex64>,
    time_ps: f64,
}

/// `a_k = C_k e^{iφ_k}` on the spec components, zero elsewhere, at t = 0.
pub fn initial_wavepacket(spec: &WavePacketSpec, basis: &Basis) -> Result<WavePacket> {
    let idx = spec.resolve(basis)?;
    let mut amplitudes = vec![Complex64::new(0.0, 0.0); basis.len()];
    for (c, i) in spec.components.iter().zip(idx) {
        amplitudes[i] = Complex64::from_polar(c.amplitude, c.phase);
    }
    Ok(WavePacket {
        basis: basis.clone(),
        amplitudes,
        time_ps: 0.0,
    })
}

impl WavePacket {
    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn time_ps(&self) -> f64 {
        self.time_ps
    }

    /// Interaction-picture amplitudes ã_k (constant under free evolution).
    pub fn interaction_amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    /// Lab-frame amplitudes a_k = ã_k e^{−iω_k t}.
    pub fn amplitudes(&self) -> Vec<Complex64> {
        let t = ps_to_au(self.time_ps);
        self.amplitudes
            .iter()
            .zip(self.basis.states())
            .map(|(a, s)| a * Complex64::from_polar(1.0, -s.energy * t))
            .collect()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// |a_k|² per basis state.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Free evolution by `dt_ps` ≥ 0.
    pub fn evolve(&self, dt_ps: f64) -> Result<Self> {
        if !(dt_ps >= 0.0) || !dt_ps.is_finite() {
            return Err(Error::InvalidPacket(format!(
                "evolution step must be finite and >= 0, got {dt_ps}"
            )));
        }
        Ok(Self {
            basis: self.basis.clone(),
            amplitudes: self.amplitudes.clone(),
            time_ps: self.time_ps + dt_ps,
        })
    }

    /// Applies the sudden kick at the current time. A norm change of at least
    /// `norm_tol` is logged, or returned as an error when `strict` is set.
    ///
    /// Column errors interfere within a superposition, so a packet can lose more
    /// norm than the worst single column; `norm_tol` is therefore separate from
    /// the operator's unitarity tolerance.
    pub fn apply_kick(&self, kick: &KickOperator, norm_tol: f64, strict: bool) -> Result<Self> {
        if kick.basis() != &self.basis {
            return Err(Error::BasisMismatch(
                "wave packet and kick operator use different bases".into(),
            ));
        }
        let t = ps_to_au(self.time_ps);
        let phases: Vec<Complex64> = self
            .basis
            .states()
            .iter()
            .map(|s| Complex64::from_polar(1.0, s.energy * t))
            .collect();
        let lab: Vec<Complex64> = self
            .amplitudes
            .iter()
            .zip(&phases)
            .map(|(a, p)| a * p.conj())
            .collect();
        let kicked = kick.apply(&lab)?;
        let amplitudes: Vec<Complex64> = kicked.iter().zip(&phases).map(|(a, p)| a * p).collect();

        let before = self.norm();
        let after: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        let deviation = (after - before).abs();
        if !(deviation < norm_tol) {
            if strict {
                return Err(Error::NormDeviation {
                    deviation,
                    tolerance: norm_tol,
                });
            }
            log::warn!("packet norm changed by {deviation:.3e} in the kick (tolerance {norm_tol:.1e})");
        }
        Ok(Self {
            basis: self.basis.clone(),
            amplitudes,
            time_ps: self.time_ps,
        })
    }

    /// Population of state k after the reference packet arrives at delay τ (a.u.):
    /// `|ã_k + C_k2 e^{i(φ_k2 − (ω_g − ω_k)τ)}|²`.
    #[inline]
    pub fn population_with_reference(&self, reference: &Reference, k: usize, tau_au: f64) -> f64 {
        (self.amplitudes[k] + reference.term(k, tau_au)).norm_sqr()
    }

    /// Populations of every basis state with the reference packet delayed by `tau_ps`.
    /// States the reference does not contain contribute `|ã_k|²`.
    pub fn populations_with_reference(&self, reference: &WavePacketSpec, tau_ps: f64) -> Result<Vec<f64>> {
        if !(tau_ps >= 0.0) {
            return Err(Error::InvalidPacket(format!("reference delay must be >= 0, got {tau_ps}")));
        }
        if tau_ps < self.time_ps {
            return Err(Error::InvalidPacket(format!(
                "reference at {tau_ps} ps arrives before the packet time {} ps",
                self.time_ps
            )));
        }
        let reference = Reference::new(reference, &self.basis)?;
        let tau = ps_to_au(tau_ps);
        Ok((0..self.basis.len())
            .map(|k| self.population_with_reference(&reference, k, tau))
            .collect())
    }
}
