//! Unit conversions. Interfaces speak picoseconds; the physics runs in atomic units.

/// One atomic unit of time in seconds (CODATA 2018).
pub const AU_TIME_S: f64 = 2.418_884_326_585_7e-17;

/// Picoseconds per atomic unit of time.
pub const PS_PER_AU: f64 = AU_TIME_S * 1.0e12;

#[inline]
pub fn ps_to_au(ps: f64) -> f64 {
    ps / PS_PER_AU
}

#[inline]
pub fn au_to_ps(au: f64) -> f64 {
    au * PS_PER_AU
}

/// Period in ps of an oscillation with angular frequency `omega` (a.u.).
pub fn period_ps(omega: f64) -> f64 {
    au_to_ps(2.0 * std::f64::consts::PI / omega.abs())
}

/// Wraps an angle into (-π, π].
pub fn wrap_phase(phi: f64) -> f64 {
    use std::f64::consts::PI;
    let mut w = phi.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn round_trip() {
        let t = 12.345;
        assert!((au_to_ps(ps_to_au(t)) - t).abs() < 1e-12);
        assert!((ps_to_au(1.0) - 41_341.373_335_18).abs() < 1e-3);
    }

    #[test]
    fn wrap() {
        assert!((wrap_phase(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_phase(-PI) - PI).abs() < 1e-12);
        assert!((wrap_phase(0.5) - 0.5).abs() < 1e-15);
        assert!((wrap_phase(-0.5 - 4.0 * PI) + 0.5).abs() < 1e-12);
    }
}
