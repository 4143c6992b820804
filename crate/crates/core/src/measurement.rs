//! Detection model: p-state channels, optical-cycle jitter and additive noise.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{orbital_letter, parse_label, Basis};
use crate::error::{Error, Result};
use crate::units::{period_ps, ps_to_au};
use crate::wavepacket::{Reference, WavePacket, WavePacketSpec};

/// Detected channels, each bound to one p state of the basis, ordered by
/// ascending energy so that every pair (j, k) with j < k has ω_j < ω_k.
#[derive(Debug, Clone, PartialEq)]
pub struct Channels {
    labels: Vec<String>,
    indices: Vec<usize>,
    energies: Vec<f64>,
}

impl Channels {
    /// Resolves labels like `30p` against the basis (m = `m`).
    pub fn new<S: AsRef<str>>(labels: &[S], basis: &Basis, m: i32) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Config("at least one detection channel is required".into()));
        }
        let mut out = Self {
            labels: Vec::new(),
            indices: Vec::new(),
            energies: Vec::new(),
        };
        for label in labels {
            let label = label.as_ref();
            let (n, l) = parse_label(label)
                .ok_or_else(|| Error::Config(format!("cannot parse channel label `{label}`")))?;
            if l != 1 {
                return Err(Error::Config(format!(
                    "channel `{label}` is a {} state; channels detect p states only",
                    orbital_letter(l)
                )));
            }
            let idx = basis.index_of(n, l, m).ok_or_else(|| {
                Error::BasisMismatch(format!("channel `{label}` is not in the basis"))
            })?;
            if out.indices.contains(&idx) {
                return Err(Error::Config(format!("channel `{label}` listed twice")));
            }
            out.labels.push(label.to_string());
            out.indices.push(idx);
            out.energies.push(basis.get(idx).energy);
        }
        let mut order: Vec<usize> = (0..out.labels.len()).collect();
        order.sort_by(|a, b| out.energies[*a].total_cmp(&out.energies[*b]));
        Ok(Self {
            labels: order.iter().map(|&i| out.labels[i].clone()).collect(),
            indices: order.iter().map(|&i| out.indices[i]).collect(),
            energies: order.iter().map(|&i| out.energies[i]).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Basis index of each channel's state.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// ω_j of each channel's state (hartree).
    pub fn energies(&self) -> &[f64] {
        &self.energies
    }
}

/// Channel signal = population of that channel's p state. Other populations are dropped.
pub fn channel_map(populations: &[f64], channels: &Channels) -> Vec<f64> {
    channels.indices.iter().map(|&i| populations[i]).collect()
}

/// Additive Gaussian noise, independent per channel and shot, with
/// σ_N,j = relative_rms × (scenario-mean signal of channel j).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub relative_rms: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self { relative_rms: 1.0 }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.relative_rms >= 0.0) || !self.relative_rms.is_finite() {
            return Err(Error::Config(format!(
                "noise.relative_rms must be finite and >= 0, got {}",
                self.relative_rms
            )));
        }
        Ok(())
    }

    pub fn sigmas(&self, mean_signals: &[f64]) -> Vec<f64> {
        mean_signals.iter().map(|m| self.relative_rms * m.abs()).collect()
    }
}

/// Adds one N(0, σ_j²) draw to each channel. No clipping at zero.
pub fn add_noise<R: Rng + ?Sized>(signals: &[f64], sigmas: &[f64], rng: &mut R) -> Vec<f64> {
    signals
        .iter()
        .zip(sigmas)
        .map(|(s, sigma)| {
            let z: f64 = rng.sample(StandardNormal);
            s + sigma * z
        })
        .collect()
}

/// Independent random stream for one (delay, shot) cell.
pub fn shot_rng(seed: u64, delay: usize, shot: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((delay as u64) << 32) | shot as u64);
    rng
}

/// Nominal reference delays `start, start + step, …` up to `end` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayGrid {
    pub start_ps: f64,
    pub end_ps: f64,
    pub step_ps: f64,
}

impl DelayGrid {
    pub fn validate(&self, what: &str) -> Result<()> {
        let ok = [self.start_ps, self.end_ps, self.step_ps].iter().all(|v| v.is_finite());
        if !ok || self.start_ps < 0.0 || self.step_ps <= 0.0 || self.end_ps < self.start_ps {
            return Err(Error::Config(format!(
                "{what} needs 0 <= start <= end and step > 0 (got start {}, end {}, step {})",
                self.start_ps, self.end_ps, self.step_ps
            )));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        // index-based so that rounding does not accumulate
        let count = ((self.end_ps - self.start_ps) / self.step_ps + 1e-9).floor() as usize + 1;
        (0..count).map(|i| self.start_ps + i as f64 * self.step_ps).collect()
    }
}

/// Everything needed to simulate detector records for one kicked (or unkicked) packet.
#[derive(Debug, Clone)]
pub struct EnsembleSpec<'a> {
    /// Launch packet after any kick.
    pub packet: &'a WavePacket,
    pub reference: &'a WavePacketSpec,
    pub channels: &'a Channels,
    pub noise: NoiseModel,
    pub delays_ps: Vec<f64>,
    pub shots: usize,
    /// Width of the uniform jitter window in optical periods 2π/|ω_g − ω̄|.
    pub jitter_periods: f64,
}

/// Jitter window width in ps for a reference packet; `periods` must be a positive integer.
pub fn jitter_window_ps(reference: &WavePacketSpec, basis: &Basis, periods: f64) -> Result<f64> {
    if !(periods >= 1.0) || periods.fract() != 0.0 {
        return Err(Error::Config(format!(
            "scan.jitter_periods must be a positive integer number of optical periods, got {periods}"
        )));
    }
    let optical = reference.launch_energy() - reference.mean_energy(basis)?;
    if optical == 0.0 {
        return Err(Error::Config("launch energy equals the mean packet energy".into()));
    }
    Ok(periods * period_ps(optical))
}

/// Simulated detector records, laid out delay-major, then shot, then channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotEnsemble {
    pub delays_ps: Vec<f64>,
    pub shots: usize,
    pub channel_labels: Vec<String>,
    pub records: Vec<f64>,
    pub seed: u64,
    /// σ_N,j actually applied.
    pub noise_sigmas: Vec<f64>,
}

impl ShotEnsemble {
    pub fn channels(&self) -> usize {
        self.channel_labels.len()
    }

    #[inline]
    pub fn get(&self, delay: usize, shot: usize, channel: usize) -> f64 {
        self.records[(delay * self.shots + shot) * self.channels() + channel]
    }

    /// Records of one delay as `shots` rows of `channels` values.
    pub fn delay_block(&self, delay: usize) -> &[f64] {
        let w = self.shots * self.channels();
        &self.records[delay * w..(delay + 1) * w]
    }

    /// Per-channel sample mean at one delay.
    pub fn channel_means(&self, delay: usize) -> Vec<f64> {
        let c = self.channels();
        let mut out = vec![0.0; c];
        for row in self.delay_block(delay).chunks(c) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out.iter().map(|s| s / self.shots as f64).collect()
    }

    /// Writes `tau_ps,shot,channel_label,signal` rows after any `#` header lines.
    pub fn write_csv<W: Write>(&self, mut w: W, header: &[String]) -> Result<()> {
        for line in header {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "# seed {}", self.seed)?;
        let sig: Vec<String> = self.noise_sigmas.iter().map(|s| s.to_string()).collect();
        writeln!(w, "# noise_sigmas {}", sig.join(" "))?;
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["tau_ps", "shot", "channel_label", "signal"])?;
        for (d, tau) in self.delays_ps.iter().enumerate() {
            for s in 0..self.shots {
                for (c, label) in self.channel_labels.iter().enumerate() {
                    csv.write_record([
                        tau.to_string(),
                        s.to_string(),
                        label.clone(),
                        self.get(d, s, c).to_string(),
                    ])?;
                }
            }
        }
        csv.flush()?;
        Ok(())
    }

    /// Reads the format of [`ShotEnsemble::write_csv`]. Rows may come in any order;
    /// every (delay, shot, channel) cell must be present exactly once.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let bad = |msg: String| Error::Analysis(format!("ensemble CSV: {msg}"));
        let mut text = String::new();
        let mut r = r;
        r.read_to_string(&mut text)?;
        let mut seed = 0;
        let mut noise_sigmas = Vec::new();
        let mut body = String::new();
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(v) = rest.strip_prefix("seed ") {
                    seed = v.trim().parse().map_err(|_| bad(format!("bad seed line `{line}`")))?;
                } else if let Some(v) = rest.strip_prefix("noise_sigmas") {
                    noise_sigmas = v
                        .split_whitespace()
                        .map(|t| t.parse::<f64>().map_err(|_| bad(format!("bad sigma `{t}`"))))
                        .collect::<Result<_>>()?;
                }
                continue;
            }
            body.push_str(line);
            body.push('\n');
        }

        #[derive(Deserialize)]
        struct Row {
            tau_ps: f64,
            shot: usize,
            channel_label: String,
            signal: f64,
        }
        let mut labels: Vec<String> = Vec::new();
        let mut taus: Vec<f64> = Vec::new();
        let mut cells: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
        let mut max_shot = 0;
        for row in csv::Reader::from_reader(body.as_bytes()).deserialize::<Row>() {
            let row = row?;
            let c = match labels.iter().position(|l| *l == row.channel_label) {
                Some(c) => c,
                None => {
                    labels.push(row.channel_label.clone());
                    labels.len() - 1
                }
            };
            let d = match taus.iter().position(|t| *t == row.tau_ps) {
                Some(d) => d,
                None => {
                    taus.push(row.tau_ps);
                    taus.len() - 1
                }
            };
            max_shot = max_shot.max(row.shot);
            if cells.insert((d, row.shot, c), row.signal).is_some() {
                return Err(bad(format!(
                    "duplicate record for tau {} shot {} channel {}",
                    row.tau_ps, row.shot, row.channel_label
                )));
            }
        }
        if cells.is_empty() {
            return Err(bad("no records".into()));
        }
        let shots = max_shot + 1;
        if cells.len() != taus.len() * shots * labels.len() {
            return Err(bad(format!(
                "expected {} delays x {shots} shots x {} channels, found {} records",
                taus.len(),
                labels.len(),
                cells.len()
            )));
        }
        // sort delays ascending, keeping channel order of first appearance
        let mut order: Vec<usize> = (0..taus.len()).collect();
        order.sort_by(|a, b| taus[*a].total_cmp(&taus[*b]));
        let mut records = Vec::with_capacity(cells.len());
        for &d in &order {
            for s in 0..shots {
                for c in 0..labels.len() {
                    records.push(cells[&(d, s, c)]);
                }
            }
        }
        if !noise_sigmas.is_empty() && noise_sigmas.len() != labels.len() {
            return Err(bad("noise_sigmas header does not match the channel count".into()));
        }
        Ok(Self {
            delays_ps: order.iter().map(|&d| taus[d]).collect(),
            shots,
            channel_labels: labels,
            records,
            seed,
            noise_sigmas,
        })
    }
}

/// Draws the jittered delay and noise for every (delay, shot) and assembles
/// the ensemble. The same seed reproduces every record bit for bit, and the
/// per-shot streams make the result independent of thread scheduling.
pub fn generate_ensemble(spec: &EnsembleSpec<'_>, seed: u64) -> Result<ShotEnsemble> {
    spec.noise.validate()?;
    if spec.shots < 2 {
        return Err(Error::Config(format!(
            "scan.shots must be at least 2, got {}",
            spec.shots
        )));
    }
    if spec.delays_ps.is_empty() {
        return Err(Error::Config("the delay grid is empty".into()));
    }
    let basis = spec.packet.basis();
    let window = jitter_window_ps(spec.reference, basis, spec.jitter_periods)?;
    let first = spec.delays_ps.iter().cloned().fold(f64::INFINITY, f64::min);
    if first - 0.5 * window < spec.packet.time_ps() {
        return Err(Error::Config(format!(
            "reference delays must follow the kick at {} ps (first delay {first} ps)",
            spec.packet.time_ps()
        )));
    }
    let reference = Reference::new(spec.reference, basis)?;
    let channels = spec.channels;
    let nc = channels.len();

    // noiseless signals and standard-normal draws per cell
    let cells: Vec<(Vec<f64>, Vec<f64>)> = (0..spec.delays_ps.len() * spec.shots)
        .into_par_iter()
        .map(|cell| {
            let (d, s) = (cell / spec.shots, cell % spec.shots);
            let mut rng = shot_rng(seed, d, s);
            let u: f64 = rng.random();
            let tau = ps_to_au(spec.delays_ps[d] + (u - 0.5) * window);
            let signal: Vec<f64> = channels
                .indices()
                .iter()
                .map(|&k| spec.packet.population_with_reference(&reference, k, tau))
                .collect();
            let z: Vec<f64> = (0..nc).map(|_| rng.sample(StandardNormal)).collect();
            (signal, z)
        })
        .collect();

    let mut means = vec![0.0; nc];
    for (signal, _) in &cells {
        for (m, v) in means.iter_mut().zip(signal) {
            *m += v;
        }
    }
    for m in means.iter_mut() {
        *m /= cells.len() as f64;
    }
    let sigmas = spec.noise.sigmas(&means);

    let mut records = Vec::with_capacity(cells.len() * nc);
    for (signal, z) in &cells {
        for c in 0..nc {
            records.push(signal[c] + sigmas[c] * z[c]);
        }
    }
    Ok(ShotEnsemble {
        delays_ps: spec.delays_ps.clone(),
        shots: spec.shots,
        channel_labels: channels.labels().to_vec(),
        records,
        seed,
        noise_sigmas: sigmas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{BasisSpec, QuantumDefects};
    use crate::wavepacket::{initial_wavepacket, CS_7S_ENERGY};

    fn basis() -> Basis {
        Basis::build(
            &BasisSpec {
                n_min: 26,
                n_max: 34,
                l_max: 2,
                m: 0,
            },
            &QuantumDefects::cesium(),
        )
        .unwrap()
    }

    fn labels() -> Vec<&'static str> {
        vec!["28p", "29p", "30p", "31p", "32p"]
    }

    #[test]
    fn channel_resolution() {
        let b = basis();
        let ch = Channels::new(&labels(), &b, 0).unwrap();
        assert_eq!(ch.len(), 5);
        assert_eq!(ch.indices()[2], b.index_of(30, 1, 0).unwrap());
        let shuffled = Channels::new(&["31p", "28p", "30p"], &b, 0).unwrap();
        assert_eq!(shuffled.labels(), ["28p", "30p", "31p"]);
        assert!(Channels::new(&["30d"], &b, 0).is_err());
        assert!(matches!(Channels::new(&["40p"], &b, 0), Err(Error::BasisMismatch(_))));
        assert!(Channels::new(&["30p", "30p"], &b, 0).is_err());
        assert!(Channels::new::<&str>(&[], &b, 0).is_err());
    }

    #[test]
    fn constructive_channels_sum_to_four() {
        let b = basis();
        let spec = WavePacketSpec::equal_p_states(28, 32, CS_7S_ENERGY).unwrap();
        let wp = initial_wavepacket(&spec, &b).unwrap();
        let ch = Channels::new(&labels(), &b, 0).unwrap();
        // at τ = 0 every fringe is constructive
        let pops = wp.populations_with_reference(&spec, 0.0).unwrap();
        let signals = channel_map(&pops, &ch);
        assert!((signals.iter().sum::<f64>() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn zero_rms_is_silent() {
        let mut rng = shot_rng(1, 0, 0);
        let s = [0.3, 0.7];
        assert_eq!(add_noise(&s, &NoiseModel { relative_rms: 0.0 }.sigmas(&s), &mut rng), s);
    }

    #[test]
    fn noise_std_matches_signal_level() {
        let s = [0.8, 0.8];
        let sigmas = NoiseModel { relative_rms: 1.0 }.sigmas(&s);
        let n = 100_000;
        let mut rng = shot_rng(7, 0, 0);
        let draws: Vec<Vec<f64>> = (0..n).map(|_| add_noise(&s, &sigmas, &mut rng)).collect();
        let mean = |c: usize| draws.iter().map(|d| d[c]).sum::<f64>() / n as f64;
        let (m0, m1) = (mean(0), mean(1));
        let var0 = draws.iter().map(|d| (d[0] - m0).powi(2)).sum::<f64>() / n as f64;
        let var1 = draws.iter().map(|d| (d[1] - m1).powi(2)).sum::<f64>() / n as f64;
        assert!((var0.sqrt() / 0.8 - 1.0).abs() < 0.02);
        let cov = draws.iter().map(|d| (d[0] - m0) * (d[1] - m1)).sum::<f64>() / n as f64;
        assert!((cov / (var0 * var1).sqrt()).abs() < 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn delay_grid_points() {
        let g = DelayGrid {
            start_ps: 0.0,
            end_ps: 49.5,
            step_ps: 0.5,
        };
        let p = g.points();
        assert_eq!(p.len(), 100);
        assert_eq!(p[99], 49.5);
        assert!(DelayGrid { step_ps: 0.0, ..g }.validate("scan").is_err());
        assert!(DelayGrid { end_ps: -1.0, ..g }.validate("scan").is_err());
    }

    fn ensemble(seed: u64, rms: f64, shots: usize, jitter: f64) -> Result<ShotEnsemble> {
        let b = basis();
        let spec = WavePacketSpec::equal_p_states(28, 32, CS_7S_ENERGY).unwrap();
        let wp = initial_wavepacket(&spec, &b).unwrap();
        let ch = Channels::new(&labels(), &b, 0).unwrap();
        generate_ensemble(
            &EnsembleSpec {
                packet: &wp,
                reference: &spec,
                channels: &ch,
                noise: NoiseModel { relative_rms: rms },
                delays_ps: (0..4).map(|i| 10.0 + i as f64).collect(),
                shots,
                jitter_periods: jitter,
            },
            seed,
        )
    }

    #[test]
    fn shape_and_reproducibility() {
        let a = ensemble(11, 1.0, 50, 3.0).unwrap();
        assert_eq!(a.records.len(), 4 * 50 * 5);
        let b = ensemble(11, 1.0, 50, 3.0).unwrap();
        assert_eq!(a, b);
        let c = ensemble(12, 1.0, 50, 3.0).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn jitter_must_span_whole_periods() {
        assert!(matches!(ensemble(1, 0.0, 10, 2.5), Err(Error::Config(_))));
        assert!(matches!(ensemble(1, 0.0, 10, 0.0), Err(Error::Config(_))));
        assert!(ensemble(1, 0.0, 10, 1.0).is_ok());
    }

    #[test]
    fn cycle_average_moments() {
        // noiseless, unkicked: mean C1² + C2², variance ½(2 C1 C2)²
        let e = ensemble(3, 0.0, 4000, 3.0).unwrap();
        let c2 = 0.2;
        for d in 0..e.delays_ps.len() {
            let means = e.channel_means(d);
            for (c, m) in means.iter().enumerate() {
                assert!((m - 2.0 * c2).abs() < 0.02, "mean {m}");
                let var = (0..e.shots).map(|s| (e.get(d, s, c) - m).powi(2)).sum::<f64>() / e.shots as f64;
                assert!((var / (0.5 * (2.0 * c2).powi(2)) - 1.0).abs() < 0.06, "variance {var}");
            }
        }
    }

    #[test]
    fn csv_round_trip() {
        let e = ensemble(5, 1.0, 7, 3.0).unwrap();
        let mut buf = Vec::new();
        e.write_csv(&mut buf, &["provenance test".to_string()]).unwrap();
        let back = ShotEnsemble::read_csv(&buf[..]).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn csv_rejects_missing_cells() {
        let text = "tau_ps,shot,channel_label,signal\n1,0,30p,0.5\n1,1,30p,0.4\n2,0,30p,0.3\n";
        assert!(ShotEnsemble::read_csv(text.as_bytes()).is_err());
    }
}
