//! TOML scenario configuration.
//!
//! Every section is optional; omitted keys take the documented defaults.
//! [`ScenarioConfig::validate`] reports the first violated constraint.

use serde::{Deserialize, Serialize};

use crate::basis::{
    Basis, BasisSpec, Columns, GridSpec, KickSettings, PhysicalWindow, QuantumDefects,
};
use crate::error::{Error, Result};
use crate::measurement::{Channels, DelayGrid, NoiseModel};
use crate::wavepacket::{PacketComponent, WavePacketSpec, CS_7S_ENERGY};

fn default_p_states() -> Vec<String> {
    (28..=32).map(|n| format!("{n}p")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisConfig {
    pub n_min: u32,
    pub n_max: u32,
    pub l_max: u32,
    pub m: i32,
    pub defects: QuantumDefects,
    pub unitarity_tol: f64,
    /// Highest multipole of the kick expansion; omitted means 2·l_max.
    pub multipole_l_max: Option<u32>,
    pub grid: GridSpec,
    /// Columns whose unitarity is checked (and assembled).
    pub window: PhysicalWindow,
}

impl Default for BasisConfig {
    fn default() -> Self {
        let spec = BasisSpec::default();
        let kick = KickSettings::default();
        Self {
            n_min: spec.n_min,
            n_max: spec.n_max,
            l_max: spec.l_max,
            m: spec.m,
            defects: QuantumDefects::cesium(),
            unitarity_tol: kick.unitarity_tol,
            multipole_l_max: None,
            grid: GridSpec::default(),
            window: PhysicalWindow::default(),
        }
    }
}

impl BasisConfig {
    pub fn spec(&self) -> BasisSpec {
        BasisSpec {
            n_min: self.n_min,
            n_max: self.n_max,
            l_max: self.l_max,
            m: self.m,
        }
    }

    pub fn kick_settings(&self) -> KickSettings {
        KickSettings {
            multipole_l_max: self.multipole_l_max,
            unitarity_tol: self.unitarity_tol,
            window: self.window,
            columns: Columns::Window,
        }
    }
}

/// State list with optional amplitudes (default equal) and phases (default 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PacketConfig {
    pub launch_energy: f64,
    pub states: Vec<String>,
    pub amplitudes: Option<Vec<f64>>,
    pub phases: Option<Vec<f64>>,
}

impl Default for PacketConfig {
    fn default() -> Self {
        Self {
            launch_energy: CS_7S_ENERGY,
            states: default_p_states(),
            amplitudes: None,
            phases: None,
        }
    }
}

/// Reference packet override; any omitted key is taken from `[packet]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceConfig {
    pub states: Option<Vec<String>>,
    pub amplitudes: Option<Vec<f64>>,
    pub phases: Option<Vec<f64>>,
}

fn packet_spec(
    section: &str,
    states: &[String],
    amplitudes: Option<&Vec<f64>>,
    phases: Option<&Vec<f64>>,
    launch_energy: f64,
    m: i32,
) -> Result<WavePacketSpec> {
    let n = states.len();
    if n == 0 {
        return Err(Error::Config(format!("{section}.states is empty")));
    }
    let check_len = |key: &str, v: Option<&Vec<f64>>| match v {
        Some(v) if v.len() != n => Err(Error::Config(format!(
            "{section}.{key} has {} entries but {section}.states has {n}",
            v.len()
        ))),
        _ => Ok(()),
    };
    check_len("amplitudes", amplitudes)?;
    check_len("phases", phases)?;
    let equal = 1.0 / (n as f64).sqrt();
    let mut comps = Vec::with_capacity(n);
    for (i, label) in states.iter().enumerate() {
        let a = amplitudes.map_or(equal, |v| v[i]);
        let p = phases.map_or(0.0, |v| v[i]);
        let mut c = PacketComponent::from_label(label, a, p)
            .map_err(|e| Error::Config(format!("{section}.states: {e}")))?;
        c.m = m;
        comps.push(c);
    }
    WavePacketSpec::new(comps, launch_energy).map_err(|e| Error::Config(format!("{section}: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HcpConfig {
    pub enabled: bool,
    /// Impulse Q in atomic units of momentum.
    pub impulse: f64,
    /// Kick delay after the launch pulse, for `scan`.
    pub delay_ps: f64,
    /// Kick delays swept by `hcp-scan`.
    pub delay_scan: DelayGrid,
    /// Largest packet norm change tolerated in a kick before warning (error with --strict).
    pub norm_tol: f64,
}

impl Default for HcpConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            impulse: 0.0014,
            delay_ps: 7.2,
            delay_scan: DelayGrid {
                start_ps: 5.0,
                end_ps: 12.0,
                step_ps: 0.1,
            },
            norm_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelsConfig {
    pub states: Vec<String>,
}

impl Default for ChannelsConfig {
    fn default() -> Self {
        Self {
            states: default_p_states(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub tau_start_ps: f64,
    pub tau_end_ps: f64,
    pub tau_step_ps: f64,
    pub shots: usize,
    /// Jitter window in optical periods; must be a positive integer.
    pub jitter_periods: f64,
    pub seed: u64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            tau_start_ps: 15.0,
            tau_end_ps: 39.75,
            tau_step_ps: 0.25,
            shots: 500,
            jitter_periods: 3.0,
            seed: 1,
        }
    }
}

impl ScanConfig {
    pub fn grid(&self) -> DelayGrid {
        DelayGrid {
            start_ps: self.tau_start_ps,
            end_ps: self.tau_end_ps,
            step_ps: self.tau_step_ps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: "out".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub basis: BasisConfig,
    pub packet: PacketConfig,
    pub reference: Option<ReferenceConfig>,
    pub hcp: HcpConfig,
    pub channels: ChannelsConfig,
    pub noise: NoiseModel,
    pub scan: ScanConfig,
    pub output: OutputConfig,
}

/// Validated configuration with its cross-references resolved.
#[derive(Debug, Clone)]
pub struct ResolvedScenario {
    pub config: ScenarioConfig,
    pub basis: Basis,
    pub packet: WavePacketSpec,
    pub reference: WavePacketSpec,
    pub channels: Channels,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration is always representable as TOML")
    }

    /// Checks every constraint in section order and resolves the scenario.
    pub fn validate(&self) -> Result<ResolvedScenario> {
        let b = &self.basis;
        if !(b.unitarity_tol > 0.0) {
            return Err(Error::Config(format!(
                "basis.unitarity_tol must be > 0, got {}",
                b.unitarity_tol
            )));
        }
        b.grid.validate()?;
        if let Some(l) = b.multipole_l_max {
            if l < b.l_max {
                return Err(Error::Config(format!(
                    "basis.multipole_l_max = {l} is below basis.l_max = {}",
                    b.l_max
                )));
            }
        }
        let basis = Basis::build(&b.spec(), &b.defects).map_err(|e| match e {
            Error::Config(_) => e,
            other => Error::Config(format!("basis: {other}")),
        })?;
        if b.window.n_min > b.window.n_max {
            return Err(Error::Config("basis.window n_min exceeds n_max".into()));
        }
        if !basis.states().iter().any(|s| b.window.contains(s)) {
            return Err(Error::Config(
                "basis.window contains no state of the basis".into(),
            ));
        }

        let p = &self.packet;
        if !p.launch_energy.is_finite() || p.launch_energy >= 0.0 {
            return Err(Error::Config(format!(
                "packet.launch_energy must be a negative binding energy, got {}",
                p.launch_energy
            )));
        }
        let packet = packet_spec(
            "packet",
            &p.states,
            p.amplitudes.as_ref(),
            p.phases.as_ref(),
            p.launch_energy,
            b.m,
        )?;
        let packet_idx = packet
            .resolve(&basis)
            .map_err(|e| Error::Config(format!("packet: {e}")))?;
        if let Some(&i) = packet_idx.iter().find(|&&i| !b.window.contains(basis.get(i))) {
            return Err(Error::Config(format!(
                "packet state {} lies outside basis.window, where the kick is assembled",
                basis.get(i).label()
            )));
        }

        let reference = match &self.reference {
            None => packet.clone(),
            Some(r) => {
                let states = r.states.as_ref().unwrap_or(&p.states);
                // amplitudes/phases default to [packet] only when the state list is inherited too
                let inherit = r.states.is_none();
                packet_spec(
                    "reference",
                    states,
                    r.amplitudes.as_ref().or(if inherit { p.amplitudes.as_ref() } else { None }),
                    r.phases.as_ref().or(if inherit { p.phases.as_ref() } else { None }),
                    p.launch_energy,
                    b.m,
                )?
            }
        };
        reference
            .resolve(&basis)
            .map_err(|e| Error::Config(format!("reference: {e}")))?;

        let h = &self.hcp;
        if !h.impulse.is_finite() || h.impulse < 0.0 {
            return Err(Error::Config(format!(
                "hcp.impulse must be finite and >= 0, got {}",
                h.impulse
            )));
        }
        if !(h.delay_ps >= 0.0) || !h.delay_ps.is_finite() {
            return Err(Error::Config(format!("hcp.delay_ps must be >= 0, got {}", h.delay_ps)));
        }
        h.delay_scan.validate("hcp.delay_scan")?;
        if !(h.norm_tol > 0.0) {
            return Err(Error::Config(format!("hcp.norm_tol must be > 0, got {}", h.norm_tol)));
        }

        let channels = Channels::new(&self.channels.states, &basis, b.m).map_err(|e| match e {
            Error::Config(_) => e,
            other => Error::Config(format!("channels: {other}")),
        })?;
        for label in channels.labels() {
            if !reference
                .components()
                .iter()
                .any(|c| crate::basis::parse_label(label) == Some((c.n, c.l)))
            {
                return Err(Error::Config(format!(
                    "channel {label} has no reference component, so it shows no fringe"
                )));
            }
        }

        self.noise.validate()?;

        let s = &self.scan;
        s.grid().validate("scan")?;
        if s.shots < 2 {
            return Err(Error::Config(format!("scan.shots must be at least 2, got {}", s.shots)));
        }
        crate::measurement::jitter_window_ps(&reference, &basis, s.jitter_periods)?;
        if h.enabled && !(h.delay_ps < s.tau_start_ps) {
            return Err(Error::Config(format!(
                "hcp.delay_ps = {} must precede scan.tau_start_ps = {}",
                h.delay_ps, s.tau_start_ps
            )));
        }
        if !(h.delay_scan.end_ps < s.tau_start_ps) {
            return Err(Error::Config(format!(
                "hcp.delay_scan ends at {} ps, not before scan.tau_start_ps = {}",
                h.delay_scan.end_ps, s.tau_start_ps
            )));
        }

        if self.output.directory.trim().is_empty() {
            return Err(Error::Config("output.directory is empty".into()));
        }

        Ok(ResolvedScenario {
            config: self.clone(),
            basis,
            packet,
            reference,
            channels,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn err_of(text: &str) -> String {
        match ScenarioConfig::from_toml_str(text).and_then(|c| c.validate().map(|_| ())) {
            Err(Error::Config(msg)) => msg,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_the_default_scenario() {
        let cfg = ScenarioConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        let r = cfg.validate().unwrap();
        assert_eq!(r.channels.len(), 5);
        assert_eq!(r.packet, r.reference);
        assert_eq!(r.basis.len(), 141 * 9);
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ScenarioConfig {
            reference: Some(ReferenceConfig {
                phases: Some(vec![0.0, 0.0, 0.5, 0.0, 0.0]),
                ..Default::default()
            }),
            ..Default::default()
        };
        let back = ScenarioConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn reference_override_inherits_packet() {
        let cfg = ScenarioConfig::from_toml_str("[reference]\nphases = [0, 0, 0.7, 0, 0]\n").unwrap();
        let r = cfg.validate().unwrap();
        assert_eq!(r.reference.components()[2].phase, 0.7);
        assert_eq!(r.packet.components()[2].phase, 0.0);
        assert_eq!(r.reference.components()[0].amplitude, r.packet.components()[0].amplitude);
    }

    #[test]
    fn names_the_violated_constraint() {
        assert!(err_of("[scan]\nshots = 1\n").contains("scan.shots"));
        assert!(err_of("[hcp]\ndelay_ps = 20.0\n").contains("hcp.delay_ps"));
        assert!(err_of("[hcp.delay_scan]\nstart_ps = 5.0\nend_ps = 16.0\nstep_ps = 0.1\n").contains("hcp.delay_scan"));
        assert!(err_of("[channels]\nstates = [\"60p\"]\n").contains("60p"));
        assert!(err_of("[channels]\nstates = [\"30d\"]\n").contains("p states"));
        assert!(err_of("[packet]\namplitudes = [1, 0, 0, 0, 0.1]\n").contains("packet"));
        assert!(err_of("[packet]\nphases = [0, 0]\n").contains("packet.phases"));
        assert!(err_of("[scan]\njitter_periods = 2.5\n").contains("jitter_periods"));
        assert!(err_of("[noise]\nrelative_rms = -0.1\n").contains("relative_rms"));
        assert!(err_of("[basis]\nn_min = 40\nn_max = 30\n").contains("n-window"));
        assert!(err_of("[basis]\nunitarity_tol = 0\n").contains("unitarity_tol"));
        assert!(err_of("[basis.grid]\npoints_per_wavelength = 5\n").contains("points_per_wavelength"));
        assert!(err_of("[scan]\nbogus = 1\n").contains("bogus"));
        assert!(err_of("[basis.window]\nn_min = 20\nn_max = 22\n").contains("outside basis.window"));
    }

    #[test]
    fn disabled_hcp_lifts_the_ordering_constraint() {
        let cfg = ScenarioConfig::from_toml_str("[hcp]\nenabled = false\ndelay_ps = 30.0\n").unwrap();
        assert!(cfg.validate().is_ok());
    }
}
