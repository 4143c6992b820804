//! Command orchestration: each command validates first, computes everything in
//! memory, and only then writes its files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::analysis::{
    correlation_matrix, fit_amplitude_phase, p_product_curve, write_correlation_csv,
    write_summary_csv, CorrelationSeries, PairFit,
};
use crate::basis::{build_kick_operator, KickOperator, RadialBasis};
use crate::config::{ResolvedScenario, ScenarioConfig};
use crate::error::{Error, Result};
use crate::measurement::{generate_ensemble, Channels, EnsembleSpec, ShotEnsemble};
use crate::units::wrap_phase;
use crate::wavepacket::{initial_wavepacket, WavePacket};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Basis,
    Kick,
    Scan,
    HcpScan,
    Analyze,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Basis => "basis",
            Command::Kick => "kick",
            Command::Scan => "scan",
            Command::HcpScan => "hcp-scan",
            Command::Analyze => "analyze",
        }
    }
}

/// Identifies the inputs behind an output file.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub command: &'static str,
    pub config_sha256: String,
    pub seed: u64,
    pub version: &'static str,
}

impl Provenance {
    pub fn new(command: Command, config_text: &str, seed: u64) -> Self {
        Self {
            command: command.name(),
            config_sha256: hex::encode(Sha256::digest(config_text.as_bytes())),
            seed,
            version: VERSION,
        }
    }

    /// Header lines, written behind a `# ` prefix.
    pub fn lines(&self) -> Vec<String> {
        vec![
            format!("rydkick {}", self.version),
            format!("command {}", self.command),
            format!("config_sha256 {}", self.config_sha256),
            format!("seed {}", self.seed),
        ]
    }
}

/// A validated scenario with its radial basis solved on first use.
#[derive(Debug)]
pub struct Scenario {
    resolved: ResolvedScenario,
    radial: OnceLock<RadialBasis>,
}

/// Fitted pair together with the correlation series it came from.
#[derive(Debug, Clone)]
pub struct PairResult {
    pub series: CorrelationSeries,
    pub fit: PairFit,
}

/// One kick delay of an HCP scan.
#[derive(Debug, Clone)]
pub struct HcpPoint {
    pub tau_hcp_ps: f64,
    pub seed: u64,
    pub on: Vec<PairFit>,
    pub off: Vec<PairFit>,
    /// Surviving p-amplitude product per pair, relative to the unkicked packet.
    pub p_product: Vec<f64>,
    /// Post-kick population of each channel state.
    pub populations: Vec<f64>,
}

impl HcpPoint {
    /// Fitted phase change caused by the kick, when both phases are defined.
    pub fn phase_change(&self, pair: usize) -> Option<f64> {
        Some(wrap_phase(self.on[pair].phase? - self.off[pair].phase?))
    }
}

#[derive(Debug, Clone)]
pub struct HcpScan {
    pub pairs: Vec<String>,
    pub channels: Vec<String>,
    pub points: Vec<HcpPoint>,
}

/// Per-point seed for kick delay `i`: paired between HCP on and off, distinct across points.
pub fn point_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_add((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

impl Scenario {
    pub fn new(config: &ScenarioConfig) -> Result<Self> {
        Ok(Self {
            resolved: config.validate()?,
            radial: OnceLock::new(),
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.resolved.config
    }

    pub fn resolved(&self) -> &ResolvedScenario {
        &self.resolved
    }

    pub fn channels(&self) -> &Channels {
        &self.resolved.channels
    }

    pub fn radial(&self) -> Result<&RadialBasis> {
        if let Some(rb) = self.radial.get() {
            return Ok(rb);
        }
        let cfg = &self.resolved.config.basis;
        let rb = RadialBasis::solve(&self.resolved.basis, &cfg.grid)?;
        Ok(self.radial.get_or_init(|| rb))
    }

    /// Kick operator at the configured impulse; fails on truncation.
    pub fn kick_operator(&self) -> Result<KickOperator> {
        self.kick_operator_at(self.resolved.config.hcp.impulse)
    }

    pub fn kick_operator_at(&self, impulse: f64) -> Result<KickOperator> {
        let settings = self.resolved.config.basis.kick_settings();
        build_kick_operator(self.radial()?, impulse, &settings)
    }

    pub fn launch_packet(&self) -> Result<WavePacket> {
        initial_wavepacket(&self.resolved.packet, &self.resolved.basis)
    }

    /// Launch packet propagated to `tau_hcp_ps` and kicked there.
    pub fn kicked_packet(&self, kick: &KickOperator, tau_hcp_ps: f64, strict: bool) -> Result<WavePacket> {
        self.launch_packet()?
            .evolve(tau_hcp_ps)?
            .apply_kick(kick, self.resolved.config.hcp.norm_tol, strict)
    }

    pub fn ensemble(&self, packet: &WavePacket, seed: u64) -> Result<ShotEnsemble> {
        let cfg = &self.resolved.config;
        let spec = EnsembleSpec {
            packet,
            reference: &self.resolved.reference,
            channels: &self.resolved.channels,
            noise: cfg.noise,
            delays_ps: cfg.scan.grid().points(),
            shots: cfg.scan.shots,
            jitter_periods: cfg.scan.jitter_periods,
        };
        generate_ensemble(&spec, seed)
    }

    /// Correlations and amplitude/phase fits for every channel pair.
    pub fn analyze(&self, ensemble: &ShotEnsemble) -> Result<Vec<PairResult>> {
        let energies = self.resolved.channels.energies();
        correlation_matrix(ensemble)?
            .into_iter()
            .map(|series| {
                let beat = energies[series.j] - energies[series.k];
                let fit = fit_amplitude_phase(&series.taus_ps, &series.r, beat)
                    .map_err(|e| Error::Fit(format!("pair {}: {e}", series.pair)))?;
                Ok(PairResult { series, fit })
            })
            .collect()
    }

    /// Packet the `scan` command measures: kicked at `hcp.delay_ps` when the HCP is enabled.
    pub fn scan_packet(&self, strict: bool) -> Result<WavePacket> {
        let h = &self.resolved.config.hcp;
        if h.enabled {
            self.kicked_packet(&self.kick_operator()?, h.delay_ps, strict)
        } else {
            self.launch_packet()
        }
    }

    /// Sweeps the kick delay; HCP-on and HCP-off ensembles share the seed of each point.
    pub fn hcp_scan(&self, seed: u64, strict: bool) -> Result<HcpScan> {
        let kick = self.kick_operator()?;
        let launch = self.launch_packet()?;
        let channels = &self.resolved.channels;
        let delays = self.resolved.config.hcp.delay_scan.points();
        let points = delays
            .par_iter()
            .enumerate()
            .map(|(i, &tau_hcp)| {
                let seed = point_seed(seed, i);
                let free = launch.evolve(tau_hcp)?;
                let kicked = free.apply_kick(&kick, self.resolved.config.hcp.norm_tol, strict)?;
                let fits = |p: &WavePacket| -> Result<Vec<PairFit>> {
                    Ok(self.analyze(&self.ensemble(p, seed)?)?.into_iter().map(|r| r.fit).collect())
                };
                let on = fits(&kicked)?;
                let off = fits(&free)?;
                let p_product = p_product_curve(std::slice::from_ref(&kicked), &free, channels)?
                    .into_iter()
                    .map(|curve| curve[0])
                    .collect();
                let probs = kicked.probabilities();
                Ok(HcpPoint {
                    tau_hcp_ps: tau_hcp,
                    seed,
                    on,
                    off,
                    p_product,
                    populations: channels.indices().iter().map(|&k| probs[k]).collect(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let labels = channels.labels();
        let mut pairs = Vec::new();
        for j in 0..labels.len() {
            for k in j + 1..labels.len() {
                pairs.push(format!("{}-{}", labels[j], labels[k]));
            }
        }
        Ok(HcpScan {
            pairs,
            channels: labels.to_vec(),
            points,
        })
    }
}

/// Options shared by all commands.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub config_path: PathBuf,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub strict: bool,
    /// Ensemble CSV for `analyze`; defaults to `ensemble.csv` in the output directory.
    pub input: Option<PathBuf>,
}

/// Files a command produced, as (name, contents) before writing.
pub type Outputs = Vec<(String, Vec<u8>)>;

/// Runs one command end to end and returns the paths written.
pub fn run(command: Command, opts: &RunOptions) -> Result<Vec<PathBuf>> {
    let text = fs::read_to_string(&opts.config_path).map_err(|e| {
        Error::Config(format!("cannot read {}: {e}", opts.config_path.display()))
    })?;
    let config = ScenarioConfig::from_toml_str(&text)?;
    let scenario = Scenario::new(&config)?;
    let seed = opts.seed.unwrap_or(config.scan.seed);
    let out_dir = opts
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(&config.output.directory));
    let input = match (command, &opts.input) {
        (Command::Analyze, Some(p)) => Some(p.clone()),
        (Command::Analyze, None) => Some(out_dir.join("ensemble.csv")),
        _ => None,
    };
    let outputs = compute(command, &scenario, &text, seed, opts.strict, input.as_deref())?;
    write_outputs(&out_dir, &outputs)
}

/// Produces a command's files in memory.
pub fn compute(
    command: Command,
    scenario: &Scenario,
    config_text: &str,
    seed: u64,
    strict: bool,
    input: Option<&Path>,
) -> Result<Outputs> {
    match command {
        Command::Basis => basis_outputs(scenario, &Provenance::new(command, config_text, seed)),
        Command::Kick => kick_outputs(scenario, &Provenance::new(command, config_text, seed)),
        Command::Scan => {
            let prov = Provenance::new(command, config_text, seed);
            let ensemble = scenario.ensemble(&scenario.scan_packet(strict)?, seed)?;
            let results = scenario.analyze(&ensemble)?;
            let mut out = Outputs::new();
            let mut buf = Vec::new();
            ensemble.write_csv(&mut buf, &prov.lines()[..3])?;
            out.push(("ensemble.csv".into(), buf));
            out.extend(analysis_outputs(&prov, &results)?);
            Ok(out)
        }
        Command::HcpScan => {
            let prov = Provenance::new(command, config_text, seed);
            hcp_outputs(&scenario.hcp_scan(seed, strict)?, &prov)
        }
        Command::Analyze => {
            let path = input.ok_or_else(|| Error::Config("analyze needs an input ensemble".into()))?;
            let file = fs::File::open(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            let ensemble = ShotEnsemble::read_csv(std::io::BufReader::new(file))?;
            let ensemble = in_channel_order(ensemble, scenario.channels())?;
            let prov = Provenance::new(command, config_text, ensemble.seed);
            analysis_outputs(&prov, &scenario.analyze(&ensemble)?)
        }
    }
}

fn write_outputs(dir: &Path, outputs: &Outputs) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (name, bytes) in outputs {
        let path = dir.join(name);
        fs::write(&path, bytes)?;
        written.push(path);
    }
    Ok(written)
}

fn header(prov: &Provenance) -> String {
    prov.lines().iter().map(|l| format!("# {l}\n")).collect()
}

fn basis_outputs(scenario: &Scenario, prov: &Provenance) -> Result<Outputs> {
    let rb = scenario.radial()?;
    let mut basis = header(prov);
    basis.push_str("index,label,n,l,m,quantum_defect,n_star,energy_au\n");
    for (i, s) in rb.basis.states().iter().enumerate() {
        writeln!(basis, "{i},{},{},{},{},{},{},{}", s.label(), s.n, s.l, s.m, s.defect, s.n_star(), s.energy)
            .expect("writing to a String");
    }
    let mut radial = header(prov);
    writeln!(radial, "# grid points {} r_min {} r_max {}", rb.grid.len, rb.grid.r_min(), rb.grid.r_max())
        .expect("writing to a String");
    writeln!(radial, "# raw_overlap_error {}", rb.raw_overlap_error).expect("writing to a String");
    radial.push_str("label,m,r_cutoff,nodes,norm,mean_r,peak_u\n");
    for wf in &rb.wavefunctions {
        writeln!(
            radial,
            "{},{},{},{},{},{},{}",
            wf.state.label(),
            wf.state.m,
            wf.r_cutoff(),
            wf.nodes(),
            wf.norm(),
            wf.expectation_r(),
            wf.peak()
        )
        .expect("writing to a String");
    }
    Ok(vec![
        ("basis.csv".into(), basis.into_bytes()),
        ("radial.csv".into(), radial.into_bytes()),
    ])
}

fn kick_outputs(scenario: &Scenario, prov: &Provenance) -> Result<Outputs> {
    let op = scenario.kick_operator()?;
    let mut matrix = header(prov).into_bytes();
    op.write_text(&mut matrix)?;
    let (worst, deficit) = op.worst_checked_column();
    let mut report = header(prov);
    writeln!(report, "# impulse_au {}", op.impulse()).expect("writing to a String");
    writeln!(report, "# unitarity_tol {}", op.unitarity_tol()).expect("writing to a String");
    writeln!(report, "# worst {} deficit {}", op.basis().get(worst).label(), deficit)
        .expect("writing to a String");
    report.push_str("label,column,norm,deficit,checked\n");
    let norms = op.column_norms();
    let deficits = op.deficits();
    for (j, &b) in op.columns().iter().enumerate() {
        writeln!(
            report,
            "{},{},{},{},{}",
            op.basis().get(b).label(),
            b,
            norms[j],
            deficits[j],
            op.is_checked(b)
        )
        .expect("writing to a String");
    }
    Ok(vec![
        ("kick_operator.txt".into(), matrix),
        ("unitarity.csv".into(), report.into_bytes()),
    ])
}

fn analysis_outputs(prov: &Provenance, results: &[PairResult]) -> Result<Outputs> {
    let lines = prov.lines();
    let series: Vec<CorrelationSeries> = results.iter().map(|r| r.series.clone()).collect();
    let fits: Vec<(String, PairFit)> = results.iter().map(|r| (r.series.pair.clone(), r.fit)).collect();
    let mut corr = Vec::new();
    write_correlation_csv(&mut corr, &lines, &series)?;
    let mut summary = Vec::new();
    write_summary_csv(&mut summary, &lines, &fits)?;
    Ok(vec![
        ("correlation.csv".into(), corr),
        ("summary.csv".into(), summary),
    ])
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".into(), |x| x.to_string())
}

fn hcp_outputs(scan: &HcpScan, prov: &Provenance) -> Result<Outputs> {
    let mut table = header(prov);
    table.push_str(
        "tau_hcp_ps,pair,amplitude,amplitude_err,phase,phase_err,amplitude_off,phase_off,phase_change,p_product\n",
    );
    for p in &scan.points {
        for (i, pair) in scan.pairs.iter().enumerate() {
            let (on, off) = (&p.on[i], &p.off[i]);
            writeln!(
                table,
                "{},{},{},{},{},{},{},{},{},{}",
                p.tau_hcp_ps,
                pair,
                on.amplitude,
                on.amplitude_err,
                opt(on.phase),
                opt(on.phase_err),
                off.amplitude,
                opt(off.phase),
                opt(p.phase_change(i)),
                p.p_product[i]
            )
            .expect("writing to a String");
        }
    }
    let mut pops = header(prov);
    pops.push_str("tau_hcp_ps,channel,population\n");
    for p in &scan.points {
        for (c, label) in scan.channels.iter().enumerate() {
            writeln!(pops, "{},{},{}", p.tau_hcp_ps, label, p.populations[c]).expect("writing to a String");
        }
    }
    Ok(vec![
        ("hcp_scan.csv".into(), table.into_bytes()),
        ("hcp_populations.csv".into(), pops.into_bytes()),
    ])
}

/// Reorders an ensemble read from disk to the scenario's channel order.
fn in_channel_order(ens: ShotEnsemble, channels: &Channels) -> Result<ShotEnsemble> {
    let labels = channels.labels();
    if ens.channel_labels.len() != labels.len() {
        return Err(Error::Analysis(format!(
            "ensemble has channels {:?}, configuration expects {:?}",
            ens.channel_labels, labels
        )));
    }
    let perm = labels
        .iter()
        .map(|l| {
            ens.channel_labels.iter().position(|e| e == l).ok_or_else(|| {
                Error::Analysis(format!("ensemble has no channel {l} required by the configuration"))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let nc = labels.len();
    let records = ens
        .records
        .chunks(nc)
        .flat_map(|row| perm.iter().map(move |&c| row[c]))
        .collect();
    let noise_sigmas = if ens.noise_sigmas.is_empty() {
        Vec::new()
    } else {
        perm.iter().map(|&c| ens.noise_sigmas[c]).collect()
    };
    Ok(ShotEnsemble {
        channel_labels: labels.to_vec(),
        records,
        noise_sigmas,
        ..ens
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ScenarioConfig {
        ScenarioConfig::from_toml_str(
            r#"
[basis]
n_min = 20
n_max = 45
l_max = 6
unitarity_tol = 1e-3

[hcp]
impulse = 0.0005
delay_ps = 7.0
[hcp.delay_scan]
start_ps = 7.0
end_ps = 7.4
step_ps = 0.2

[scan]
tau_start_ps = 15.0
tau_end_ps = 20.0
tau_step_ps = 0.25
shots = 40
"#,
        )
        .unwrap()
    }

    #[test]
    fn provenance_hashes_the_config_text() {
        let p = Provenance::new(Command::Scan, "", 3);
        assert_eq!(
            p.config_sha256,
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(p.lines()[3], "seed 3");
    }

    #[test]
    fn scan_outputs_are_deterministic_and_readable() {
        let s = Scenario::new(&small_config()).unwrap();
        let a = compute(Command::Scan, &s, "x", 9, false, None).unwrap();
        let b = compute(Command::Scan, &s, "x", 9, false, None).unwrap();
        assert_eq!(a, b);
        let names: Vec<&str> = a.iter().map(|o| o.0.as_str()).collect();
        assert_eq!(names, ["ensemble.csv", "correlation.csv", "summary.csv"]);
        let ens = ShotEnsemble::read_csv(&a[0].1[..]).unwrap();
        assert_eq!(ens.seed, 9);
        let direct = s.analyze(&ens).unwrap();
        assert_eq!(direct.len(), 10);
        for o in &a {
            assert!(String::from_utf8_lossy(&o.1).starts_with("# rydkick "));
        }
    }

    #[test]
    fn analyze_reorders_channels() {
        let s = Scenario::new(&small_config()).unwrap();
        let ens = s.ensemble(&s.launch_packet().unwrap(), 4).unwrap();
        let mut shuffled = ens.clone();
        let nc = ens.channels();
        shuffled.channel_labels.reverse();
        shuffled.noise_sigmas.reverse();
        shuffled.records = ens.records.chunks(nc).flat_map(|r| r.iter().rev().copied()).collect();
        let back = in_channel_order(shuffled, s.channels()).unwrap();
        assert_eq!(back, ens);
    }

    #[test]
    fn hcp_scan_pairs_on_and_off() {
        let s = Scenario::new(&small_config()).unwrap();
        let scan = s.hcp_scan(5, false).unwrap();
        assert_eq!(scan.points.len(), 3);
        assert_eq!(scan.pairs.len(), 10);
        for (i, p) in scan.points.iter().enumerate() {
            assert_eq!(p.seed, point_seed(5, i));
            assert_eq!(p.on.len(), 10);
            assert!(p.p_product.iter().all(|v| (0.0..1.2).contains(v)));
        }
        let outs = hcp_outputs(&scan, &Provenance::new(Command::HcpScan, "", 5)).unwrap();
        let text = String::from_utf8(outs[0].1.clone()).unwrap();
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 1 + 30);
    }
}
