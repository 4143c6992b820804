//! Covariance correlations between channels and their amplitude/phase fits.
//!
//! Fit convention: `r(τ) = A cos(Φ − Δω τ)` with `Δω = ω_j − ω_k` and j < k in
//! ascending channel energy.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measurement::{Channels, ShotEnsemble};
use crate::units::{period_ps, ps_to_au, wrap_phase};
use crate::wavepacket::WavePacket;

/// r_jk over the nominal delays, with per-delay spreads.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSeries {
    pub j: usize,
    pub k: usize,
    pub pair: String,
    pub taus_ps: Vec<f64>,
    /// `None` where a channel has zero variance at that delay.
    pub r: Vec<Option<f64>>,
    /// Jackknife standard error of r.
    pub r_err: Vec<Option<f64>>,
    pub sigma_j: Vec<f64>,
    pub sigma_k: Vec<f64>,
}

/// Pearson r with its leave-one-out jackknife standard error.
pub fn correlation_with_error(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    // centre first; the raw signals carry a large common offset
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (a, b) = (a - mx, b - my);
        sx += a;
        sy += b;
        sxx += a * a;
        syy += b * b;
        sxy += a * b;
    }
    let r_of = |n: f64, sx: f64, sy: f64, sxx: f64, syy: f64, sxy: f64| -> Option<f64> {
        let vx = sxx / n - (sx / n).powi(2);
        let vy = syy / n - (sy / n).powi(2);
        if !(vx > 0.0 && vy > 0.0) {
            return None;
        }
        Some((sxy / n - sx * sy / (n * n)) / (vx * vy).sqrt())
    };
    let r = r_of(n as f64, sx, sy, sxx, syy, sxy)?;
    if n < 3 {
        return Some((r, f64::NAN));
    }
    let m = (n - 1) as f64;
    let mut loo = Vec::with_capacity(n);
    for (a, b) in x.iter().zip(y) {
        let (a, b) = (a - mx, b - my);
        loo.push(r_of(m, sx - a, sy - b, sxx - a * a, syy - b * b, sxy - a * b)?);
    }
    let mean = loo.iter().sum::<f64>() / n as f64;
    let var = loo.iter().map(|v| (v - mean).powi(2)).sum::<f64>() * m / n as f64;
    Some((r, var.sqrt()))
}

fn std_dev(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// r_jk(τ) = (⟨P_j P_k⟩ − ⟨P_j⟩⟨P_k⟩) / (σ_j σ_k) over the shots at each delay,
/// for every channel pair j < k.
pub fn correlation_matrix(ensemble: &ShotEnsemble) -> Result<Vec<CorrelationSeries>> {
    if ensemble.shots < 2 {
        return Err(Error::Analysis(format!(
            "correlations need at least 2 shots per delay, got {}",
            ensemble.shots
        )));
    }
    let nc = ensemble.channels();
    // per delay, per channel: the shot column
    let columns: Vec<Vec<Vec<f64>>> = (0..ensemble.delays_ps.len())
        .map(|d| {
            (0..nc)
                .map(|c| (0..ensemble.shots).map(|s| ensemble.get(d, s, c)).collect())
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    for j in 0..nc {
        for k in j + 1..nc {
            let mut series = CorrelationSeries {
                j,
                k,
                pair: format!("{}-{}", ensemble.channel_labels[j], ensemble.channel_labels[k]),
                taus_ps: ensemble.delays_ps.clone(),
                r: Vec::new(),
                r_err: Vec::new(),
                sigma_j: Vec::new(),
                sigma_k: Vec::new(),
            };
            for cols in &columns {
                let rc = correlation_with_error(&cols[j], &cols[k]);
                series.r.push(rc.map(|v| v.0));
                series.r_err.push(rc.map(|v| v.1));
                series.sigma_j.push(std_dev(&cols[j]));
                series.sigma_k.push(std_dev(&cols[k]));
            }
            out.push(series);
        }
    }
    Ok(out)
}

/// Launch and reference amplitude/phase of one channel's state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelPacket {
    pub c1: f64,
    pub phi1: f64,
    pub c2: f64,
    pub phi2: f64,
    /// State energy ω (hartree).
    pub omega: f64,
}

/// Expected r_jk at delay τ for additive noise σ_N per channel:
/// `√((1 − σ²_Nj/σ²_j,meas)(1 − σ²_Nk/σ²_k,meas)) cos((φ_j1 − φ_k1) − (φ_j2 − φ_k2) − (ω_j − ω_k)τ)`
/// with `σ_j² = 2 C_j1² C_j2²` and `σ²_meas = σ² + σ_N²`.
pub fn analytic_correlation(
    j: &ChannelPacket,
    k: &ChannelPacket,
    tau_ps: f64,
    sigma_noise_j: f64,
    sigma_noise_k: f64,
) -> Result<f64> {
    let atten = |c: &ChannelPacket, sn: f64| -> Result<f64> {
        let s2 = 2.0 * (c.c1 * c.c2).powi(2);
        let meas = s2 + sn * sn;
        if meas == 0.0 {
            return Err(Error::Analysis(
                "channel has neither fringe nor noise variance; correlation undefined".into(),
            ));
        }
        Ok(s2 / meas)
    };
    let amp = (atten(j, sigma_noise_j)? * atten(k, sigma_noise_k)?).sqrt();
    let arg = (j.phi1 - k.phi1) - (j.phi2 - k.phi2) - (j.omega - k.omega) * ps_to_au(tau_ps);
    Ok(amp * arg.cos())
}

/// Amplitude and phase of `r = A cos(Φ − Δω τ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairFit {
    pub amplitude: f64,
    pub amplitude_err: f64,
    /// `None` when A ≤ 3 σ_A.
    pub phase: Option<f64>,
    pub phase_err: Option<f64>,
    /// Δω = ω_j − ω_k in hartree.
    pub beat_frequency_au: f64,
    /// Points entering the fit.
    pub points: usize,
}

struct Linear {
    c: f64,
    s: f64,
    var_c: f64,
    var_s: f64,
    cov: f64,
    rss: f64,
}

/// Least squares of y against {cos ωτ, sin ωτ}; τ in a.u.
fn quadrature_fit(taus_au: &[f64], ys: &[f64], omega: f64) -> Option<Linear> {
    let (mut cc, mut ss, mut cs, mut yc, mut ysn) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (t, y) in taus_au.iter().zip(ys) {
        let (sn, cn) = (omega * t).sin_cos();
        cc += cn * cn;
        ss += sn * sn;
        cs += cn * sn;
        yc += y * cn;
        ysn += y * sn;
    }
    let det = cc * ss - cs * cs;
    if !(det > 1e-12 * (cc * ss).max(f64::MIN_POSITIVE)) {
        return None;
    }
    let c = (ss * yc - cs * ysn) / det;
    let s = (cc * ysn - cs * yc) / det;
    let rss: f64 = taus_au
        .iter()
        .zip(ys)
        .map(|(t, y)| {
            let (sn, cn) = (omega * t).sin_cos();
            (y - c * cn - s * sn).powi(2)
        })
        .sum();
    let dof = taus_au.len().saturating_sub(2);
    let s2 = if dof > 0 { rss / dof as f64 } else { 0.0 };
    Some(Linear {
        c,
        s,
        var_c: s2 * ss / det,
        var_s: s2 * cc / det,
        cov: -s2 * cs / det,
        rss,
    })
}

fn defined_points(taus_ps: &[f64], r: &[Option<f64>]) -> (Vec<f64>, Vec<f64>) {
    taus_ps
        .iter()
        .zip(r)
        .filter_map(|(t, v)| v.filter(|x| x.is_finite()).map(|x| (ps_to_au(*t), x)))
        .unzip()
}

/// Fits `r(τ) = c cos(Δω τ) + s sin(Δω τ)` and reports `A = √(c² + s²)`, `Φ = atan2(s, c)`.
pub fn fit_amplitude_phase(taus_ps: &[f64], r: &[Option<f64>], beat_au: f64) -> Result<PairFit> {
    let (t, y) = defined_points(taus_ps, r);
    if t.len() < 3 {
        return Err(Error::Fit(format!("only {} defined correlation points", t.len())));
    }
    if beat_au == 0.0 || !beat_au.is_finite() {
        return Err(Error::Fit("beat frequency must be finite and nonzero".into()));
    }
    let span = t.iter().cloned().fold(f64::MIN, f64::max) - t.iter().cloned().fold(f64::MAX, f64::min);
    let period = ps_to_au(period_ps(beat_au));
    if span < period {
        return Err(Error::Fit(format!(
            "delay span {:.3} ps is shorter than one beat period {:.3} ps",
            crate::units::au_to_ps(span),
            period_ps(beat_au)
        )));
    }
    let lin = quadrature_fit(&t, &y, beat_au)
        .ok_or_else(|| Error::Fit("quadrature design matrix is singular".into()))?;
    let amplitude = lin.c.hypot(lin.s);
    let (amplitude_err, phase, phase_err) = if amplitude > 0.0 {
        let (c, s, a2) = (lin.c, lin.s, amplitude * amplitude);
        let var_a = (c * c * lin.var_c + s * s * lin.var_s + 2.0 * c * s * lin.cov) / a2;
        let var_p = (s * s * lin.var_c + c * c * lin.var_s - 2.0 * c * s * lin.cov) / (a2 * a2);
        let a_err = var_a.max(0.0).sqrt();
        if amplitude > 3.0 * a_err {
            (a_err, Some(wrap_phase(s.atan2(c))), Some(var_p.max(0.0).sqrt()))
        } else {
            (a_err, None, None)
        }
    } else {
        ((lin.var_c + lin.var_s).max(0.0).sqrt() / 2f64.sqrt(), None, None)
    };
    Ok(PairFit {
        amplitude,
        amplitude_err,
        phase,
        phase_err,
        beat_frequency_au: beat_au,
        points: t.len(),
    })
}

/// Minimizes the quadrature-fit residual over ω in `[lo, hi]` (a.u.): a grid
/// scan followed by golden-section refinement around the best grid point.
fn best_frequency(lo: f64, hi: f64, steps: usize, rss: impl Fn(f64) -> f64) -> f64 {
    let h = (hi - lo) / steps as f64;
    let mut best = (lo, f64::INFINITY);
    for i in 0..=steps {
        let w = lo + i as f64 * h;
        let v = rss(w);
        if v < best.1 {
            best = (w, v);
        }
    }
    let (mut a, mut b) = ((best.0 - h).max(lo), (best.0 + h).min(hi));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut x1, mut x2) = (b - g * (b - a), a + g * (b - a));
    let (mut f1, mut f2) = (rss(x1), rss(x2));
    for _ in 0..80 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = rss(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = rss(x2);
        }
    }
    0.5 * (a + b)
}

/// Refits with the frequency free, searching |ω| within ±30% of `guess_au`.
/// Returns ω with the sign of the guess.
pub fn fit_free_frequency(taus_ps: &[f64], r: &[Option<f64>], guess_au: f64) -> Result<f64> {
    let (t, y) = defined_points(taus_ps, r);
    if t.len() < 4 || guess_au == 0.0 {
        return Err(Error::Fit("free-frequency fit needs >= 4 points and a nonzero guess".into()));
    }
    let g = guess_au.abs();
    let rss = |w: f64| quadrature_fit(&t, &y, w).map_or(f64::INFINITY, |l| l.rss);
    let w = best_frequency(0.7 * g, 1.3 * g, 600, rss);
    Ok(w.copysign(guess_au))
}

/// Period of the strongest sinusoid (with free offset) in `ys(xs)` among periods
/// in `[min_period, max_period]`, in the units of `xs`.
pub fn dominant_period(xs: &[f64], ys: &[f64], min_period: f64, max_period: f64) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 5 {
        return Err(Error::Fit("period estimate needs >= 5 paired points".into()));
    }
    if !(min_period > 0.0 && max_period > min_period) {
        return Err(Error::Fit("invalid period range".into()));
    }
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let centred: Vec<f64> = ys.iter().map(|y| y - mean).collect();
    // offset is handled by also centring the basis functions
    let rss = |w: f64| -> f64 {
        let c: Vec<f64> = xs.iter().map(|x| (w * x).cos()).collect();
        let s: Vec<f64> = xs.iter().map(|x| (w * x).sin()).collect();
        let n = xs.len() as f64;
        let (mc, ms) = (c.iter().sum::<f64>() / n, s.iter().sum::<f64>() / n);
        let (mut cc, mut ss, mut cs, mut yc, mut ysn) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..xs.len() {
            let (a, b, y) = (c[i] - mc, s[i] - ms, centred[i]);
            cc += a * a;
            ss += b * b;
            cs += a * b;
            yc += y * a;
            ysn += y * b;
        }
        let det = cc * ss - cs * cs;
        if !(det > 0.0) {
            return f64::INFINITY;
        }
        let (p, q) = ((ss * yc - cs * ysn) / det, (cc * ysn - cs * yc) / det);
        (0..xs.len())
            .map(|i| (centred[i] - p * (c[i] - mc) - q * (s[i] - ms)).powi(2))
            .sum()
    };
    let two_pi = 2.0 * std::f64::consts::PI;
    let w = best_frequency(two_pi / max_period, two_pi / min_period, 800, rss);
    Ok(two_pi / w)
}

/// Recurrence period of a uniformly sampled curve: the lag in `[min_lag, max_lag]`
/// maximizing its normalized autocorrelation, refined by a parabola through the
/// peak. Unlike a single-sinusoid fit it is not pulled by harmonics or a slow
/// envelope when the window holds only a few cycles.
pub fn recurrence_period(xs: &[f64], ys: &[f64], min_lag: f64, max_lag: f64) -> Result<f64> {
    let n = xs.len();
    if ys.len() != n || n < 5 {
        return Err(Error::Fit("recurrence estimate needs >= 5 paired points".into()));
    }
    let step = (xs[n - 1] - xs[0]) / (n - 1) as f64;
    if !(step > 0.0) || xs.windows(2).any(|w| ((w[1] - w[0]) - step).abs() > 1e-6 * step) {
        return Err(Error::Fit("recurrence estimate needs uniformly spaced samples".into()));
    }
    let lo = (min_lag / step).ceil().max(1.0) as usize;
    let hi = ((max_lag / step).floor() as usize).min(n - 3);
    if lo + 2 > hi {
        return Err(Error::Fit("lag range does not fit inside the sampled window".into()));
    }
    let mean = ys.iter().sum::<f64>() / n as f64;
    let var: f64 = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n as f64;
    if !(var > 0.0) {
        return Err(Error::Fit("constant curve has no recurrence".into()));
    }
    let acf = |lag: usize| -> f64 {
        let m = n - lag;
        (0..m).map(|i| (ys[i] - mean) * (ys[i + lag] - mean)).sum::<f64>() / (m as f64 * var)
    };
    let values: Vec<f64> = (lo - 1..=hi + 1).map(acf).collect();
    let best = (1..values.len() - 1)
        .max_by(|a, b| values[*a].total_cmp(&values[*b]))
        .expect("lag range is non-empty");
    let (a, b, c) = (values[best - 1], values[best], values[best + 1]);
    let denom = a - 2.0 * b + c;
    let shift = if denom < 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
    Ok((lo - 1 + best) as f64 * step + shift * step)
}

/// Pearson correlation coefficient, `None` for constant inputs.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    correlation_with_error(x, y).map(|v| v.0)
}

/// For each kicked packet and channel pair j < k: `|ã_j||ã_k| / (|ã⁰_j||ã⁰_k|)`,
/// the surviving p-amplitude product normalized to the unkicked packet.
/// Returned as one curve per pair, in the pair order of [`correlation_matrix`].
pub fn p_product_curve(kicked: &[WavePacket], unkicked: &WavePacket, channels: &Channels) -> Result<Vec<Vec<f64>>> {
    let idx = channels.indices();
    let base: Vec<f64> = idx.iter().map(|&i| unkicked.interaction_amplitudes()[i].norm()).collect();
    if let Some(p) = base.iter().position(|b| *b == 0.0) {
        return Err(Error::Analysis(format!(
            "channel {} is not populated by the launch packet",
            channels.labels()[p]
        )));
    }
    let mut out = Vec::new();
    for j in 0..idx.len() {
        for k in j + 1..idx.len() {
            out.push(
                kicked
                    .iter()
                    .map(|wp| {
                        let a = wp.interaction_amplitudes();
                        a[idx[j]].norm() * a[idx[k]].norm() / (base[j] * base[k])
                    })
                    .collect(),
            );
        }
    }
    Ok(out)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| x.to_string())
}

/// `tau_ps,pair,r,r_err` rows; undefined values are written as `nan`.
pub fn write_correlation_csv<W: Write>(mut w: W, header: &[String], series: &[CorrelationSeries]) -> Result<()> {
    for line in header {
        writeln!(w, "# {line}")?;
    }
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["tau_ps", "pair", "r", "r_err"])?;
    for s in series {
        for i in 0..s.taus_ps.len() {
            csv.write_record([
                s.taus_ps[i].to_string(),
                s.pair.clone(),
                fmt_opt(s.r[i]),
                fmt_opt(s.r_err[i]),
            ])?;
        }
    }
    csv.flush()?;
    Ok(())
}

/// `pair,amplitude,amplitude_err,phase,phase_err,beat_frequency_au` rows.
pub fn write_summary_csv<W: Write>(mut w: W, header: &[String], fits: &[(String, PairFit)]) -> Result<()> {
    for line in header {
        writeln!(w, "# {line}")?;
    }
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["pair", "amplitude", "amplitude_err", "phase", "phase_err", "beat_frequency_au"])?;
    for (pair, f) in fits {
        csv.write_record([
            pair.clone(),
            f.amplitude.to_string(),
            f.amplitude_err.to_string(),
            fmt_opt(f.phase),
            fmt_opt(f.phase_err),
            f.beat_frequency_au.to_string(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::shot_rng;
    use rand::Rng;
    use rand_distr::StandardNormal;
    use std::f64::consts::PI;

    /// 30p–31p beat in hartree (negative: ω_j < ω_k).
    const BEAT: f64 = -5.135e-5;

    fn taus(n: usize, start: f64, step: f64) -> Vec<f64> {
        (0..n).map(|i| start + i as f64 * step).collect()
    }

    #[test]
    fn perfect_and_anti_correlation() {
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let (r, err) = correlation_with_error(&x, &x).unwrap();
        assert!((r - 1.0).abs() < 1e-12 && err < 1e-6);
        let y: Vec<f64> = x.iter().map(|v| 3.0 - v).collect();
        assert!((pearson(&x, &y).unwrap() + 1.0).abs() < 1e-12);
        assert!(pearson(&x, &vec![1.0; 50]).is_none());
    }

    #[test]
    fn jackknife_matches_brute_force() {
        let mut rng = shot_rng(9, 0, 0);
        let x: Vec<f64> = (0..40).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = x.iter().map(|v| v + rng.sample::<f64, _>(StandardNormal)).collect();
        let (_, err) = correlation_with_error(&x, &y).unwrap();
        let n = x.len();
        let loo: Vec<f64> = (0..n)
            .map(|i| {
                let xs: Vec<f64> = x.iter().enumerate().filter(|(j, _)| *j != i).map(|v| *v.1).collect();
                let ys: Vec<f64> = y.iter().enumerate().filter(|(j, _)| *j != i).map(|v| *v.1).collect();
                correlation_with_error(&xs, &ys).unwrap().0
            })
            .collect();
        let m = loo.iter().sum::<f64>() / n as f64;
        let brute = (loo.iter().map(|v| (v - m).powi(2)).sum::<f64>() * (n - 1) as f64 / n as f64).sqrt();
        assert!((err - brute).abs() < 1e-10);
    }

    #[test]
    fn independent_noise_is_uncorrelated() {
        let mut inside = 0;
        for d in 0..200 {
            let mut rng = shot_rng(4, d, 0);
            let x: Vec<f64> = (0..500).map(|_| rng.sample(StandardNormal)).collect();
            let y: Vec<f64> = (0..500).map(|_| rng.sample(StandardNormal)).collect();
            if pearson(&x, &y).unwrap().abs() < 3.0 / 500f64.sqrt() {
                inside += 1;
            }
        }
        assert!(inside >= 198, "{inside}/200");
    }

    #[test]
    fn zero_variance_gives_sentinel() {
        let e = ShotEnsemble {
            delays_ps: vec![1.0],
            shots: 3,
            channel_labels: vec!["30p".into(), "31p".into()],
            records: vec![1.0, 0.1, 1.0, 0.2, 1.0, 0.4],
            seed: 0,
            noise_sigmas: vec![],
        };
        let s = correlation_matrix(&e).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].r[0], None);
        assert_eq!(s[0].pair, "30p-31p");
    }

    #[test]
    fn analytic_limits() {
        let c = |phi1: f64, omega: f64| ChannelPacket {
            c1: 0.4,
            phi1,
            c2: 0.4,
            phi2: 0.0,
            omega,
        };
        let r = analytic_correlation(&c(0.0, -7e-4), &c(0.0, -6e-4), 0.0, 0.0, 0.0).unwrap();
        assert!((r - 1.0).abs() < 1e-15);
        let sig = (2.0f64).sqrt() * 0.16;
        let r = analytic_correlation(&c(0.0, -7e-4), &c(0.0, -6e-4), 0.0, sig, sig).unwrap();
        assert!((r - 0.5).abs() < 1e-12);
        let r = analytic_correlation(&c(PI, -7e-4), &c(0.0, -6e-4), 0.0, 0.0, 0.0).unwrap();
        assert!((r + 1.0).abs() < 1e-12);
        let dead = ChannelPacket { c1: 0.0, ..c(0.0, -7e-4) };
        assert!(analytic_correlation(&dead, &c(0.0, -6e-4), 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn recurrence_of_a_pulse_train() {
        // narrow peaks every 2.8 plus a second harmonic; the sampled window holds 2.5 periods
        let xs: Vec<f64> = (0..=700).map(|i| 5.0 + 0.01 * i as f64).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| {
                let p = 2.0 * PI * x / 2.8;
                p.cos().powi(8) + 0.3 * (2.0 * p + 0.4).cos()
            })
            .collect();
        let t = recurrence_period(&xs, &ys, 1.5, 4.5).unwrap();
        assert!((t - 2.8).abs() < 0.03, "{t}");
        assert!(recurrence_period(&xs[..3], &ys[..3], 1.5, 4.5).is_err());
    }

    #[test]
    fn recovers_constructed_amplitude_and_phase() {
        let t = taus(100, 0.0, 0.2);
        let r: Vec<Option<f64>> = t
            .iter()
            .map(|tau| Some(0.8 * (BEAT * ps_to_au(*tau) - 0.3).cos()))
            .collect();
        let f = fit_amplitude_phase(&t, &r, BEAT).unwrap();
        assert!((f.amplitude - 0.8).abs() < 1e-12);
        assert!((f.phase.unwrap() - 0.3).abs() < 1e-12);
        assert!(f.amplitude_err < 1e-12);
    }

    #[test]
    fn noisy_unit_amplitude() {
        let t = taus(100, 0.0, 0.2);
        let mut worst: f64 = 0.0;
        for trial in 0..50 {
            let mut rng = shot_rng(21, trial, 0);
            let r: Vec<Option<f64>> = t
                .iter()
                .map(|tau| Some((BEAT * ps_to_au(*tau)).cos() + 0.1 * rng.sample::<f64, _>(StandardNormal)))
                .collect();
            let f = fit_amplitude_phase(&t, &r, BEAT).unwrap();
            worst = worst.max((f.amplitude - 1.0).abs());
            assert!(f.amplitude_err > 0.005 && f.amplitude_err < 0.03);
        }
        assert!(worst < 0.05, "worst deviation {worst}");
    }

    #[test]
    fn degenerate_inputs() {
        let t = taus(100, 0.0, 0.2);
        let zero = vec![Some(0.0); t.len()];
        let f = fit_amplitude_phase(&t, &zero, BEAT).unwrap();
        assert_eq!(f.amplitude, 0.0);
        assert!(f.phase.is_none());
        // a 2 ps span is shorter than the 2.96 ps beat period
        let short = taus(11, 0.0, 0.2);
        let r = vec![Some(0.5); short.len()];
        assert!(matches!(fit_amplitude_phase(&short, &r, BEAT), Err(Error::Fit(_))));
    }

    #[test]
    fn free_frequency_recovers_beat() {
        let t = taus(200, 0.0, 0.1);
        let mut rng = shot_rng(2, 0, 0);
        let r: Vec<Option<f64>> = t
            .iter()
            .map(|tau| Some(0.7 * (0.4 - BEAT * ps_to_au(*tau)).cos() + 0.05 * rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let w = fit_free_frequency(&t, &r, BEAT * 1.15).unwrap();
        assert!((w / BEAT - 1.0).abs() < 0.01, "{w}");
    }

    #[test]
    fn period_of_offset_sinusoid() {
        let x = taus(71, 5.0, 0.1);
        let y: Vec<f64> = x.iter().map(|v| 0.6 + 0.3 * (2.0 * PI * v / 2.9 + 1.0).cos()).collect();
        let p = dominant_period(&x, &y, 1.5, 6.0).unwrap();
        assert!((p - 2.9).abs() < 1e-3, "{p}");
    }

    #[test]
    fn csv_writers() {
        let s = CorrelationSeries {
            j: 0,
            k: 1,
            pair: "30p-31p".into(),
            taus_ps: vec![1.0, 2.0],
            r: vec![Some(0.5), None],
            r_err: vec![Some(0.01), None],
            sigma_j: vec![1.0, 0.0],
            sigma_k: vec![1.0, 1.0],
        };
        let mut buf = Vec::new();
        write_correlation_csv(&mut buf, &["h".into()], &[s]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "# h\ntau_ps,pair,r,r_err\n1,30p-31p,0.5,0.01\n2,30p-31p,nan,nan\n");
    }
}
