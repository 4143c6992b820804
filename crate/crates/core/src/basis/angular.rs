use crate::error::{Error, Result};

fn factorial(n: i32) -> f64 {
    debug_assert!(n >= 0);
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// Wigner 3j symbol for integer angular momenta (Racah formula).
///
/// Returns zero whenever a selection rule is violated.
pub fn wigner_3j(j1: i32, j2: i32, j3: i32, m1: i32, m2: i32, m3: i32) -> f64 {
    if j1 < 0 || j2 < 0 || j3 < 0 {
        return 0.0;
    }
    if m1 + m2 + m3 != 0 || m1.abs() > j1 || m2.abs() > j2 || m3.abs() > j3 {
        return 0.0;
    }
    if j3 > j1 + j2 || j3 < (j1 - j2).abs() {
        return 0.0;
    }

    let triangle = factorial(j1 + j2 - j3) * factorial(j1 - j2 + j3) * factorial(-j1 + j2 + j3)
        / factorial(j1 + j2 + j3 + 1);
    let prefactor = (triangle
        * factorial(j1 + m1)
        * factorial(j1 - m1)
        * factorial(j2 + m2)
        * factorial(j2 - m2)
        * factorial(j3 + m3)
        * factorial(j3 - m3))
    .sqrt();

    let k_min = 0.max(j2 - j3 - m1).max(j1 - j3 + m2);
    let k_max = (j1 + j2 - j3).min(j1 - m1).min(j2 + m2);
    let mut sum = 0.0;
    for k in k_min..=k_max {
        let denom = factorial(k)
            * factorial(j3 - j2 + k + m1)
            * factorial(j3 - j1 + k - m2)
            * factorial(j1 + j2 - j3 - k)
            * factorial(j1 - k - m1)
            * factorial(j2 - k + m2);
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign / denom;
    }
    let phase = if (j1 - j2 - m3).rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    };
    phase * prefactor * sum
}

/// Legendre matrix element ⟨ℓa m| P_L(cos θ) |ℓb m⟩.
pub fn angular_coupling(la: i32, lb: i32, big_l: i32, m: i32) -> Result<f64> {
    if la < 0 || lb < 0 || big_l < 0 {
        return Err(Error::Domain {
            n: 0,
            l: la.min(lb).min(big_l).into(),
            m: m.into(),
            reason: "angular momenta must be non-negative".into(),
        });
    }
    if m.abs() > la.min(lb) {
        return Err(Error::Domain {
            n: 0,
            l: la.min(lb).into(),
            m: m.into(),
            reason: "require |m| <= min(la, lb)".into(),
        });
    }
    if (la + lb + big_l) % 2 != 0 {
        return Ok(0.0);
    }
    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
    let norm = (((2 * la + 1) * (2 * lb + 1)) as f64).sqrt();
    Ok(sign * norm * wigner_3j(la, big_l, lb, 0, 0, 0) * wigner_3j(la, big_l, lb, -m, 0, m))
}
