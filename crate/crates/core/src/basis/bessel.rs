//! Spherical Bessel functions of the first kind.
//!
//! Small arguments use the power series, larger ones Miller's downward
//! recurrence normalized against the closed forms of j₀ or j₁.

/// Below this argument the power series is used for every order.
const SERIES_LIMIT: f64 = 1.0;

/// j₀(x), …, j_{l_max}(x).
pub fn spherical_bessel_array(l_max: usize, x: f64) -> Vec<f64> {
    if x < 0.0 {
        let mut out = spherical_bessel_array(l_max, -x);
        for (l, v) in out.iter_mut().enumerate() {
            if l % 2 == 1 {
                *v = -*v;
            }
        }
        return out;
    }
    if x < SERIES_LIMIT {
        return (0..=l_max).map(|l| series(l, x)).collect();
    }
    downward(l_max, x)
}

pub fn spherical_bessel(l: usize, x: f64) -> f64 {
    spherical_bessel_array(l, x)[l]
}

fn series(l: usize, x: f64) -> f64 {
    // x^l / (2l+1)!!
    let mut lead = 1.0;
    for k in 1..=l {
        lead *= x / (2 * k + 1) as f64;
    }
    let z = -0.5 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 0..40 {
        term *= z / ((k + 1) as f64 * (2 * l + 2 * k + 3) as f64);
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    lead * sum
}

fn downward(l_max: usize, x: f64) -> Vec<f64> {
    let start = l_max + x.ceil() as usize + 30;
    let mut vals = vec![0.0; start + 2];
    vals[start] = 1e-300;
    for l in (1..=start).rev() {
        vals[l - 1] = (2 * l + 1) as f64 / x * vals[l] - vals[l + 1];
        if vals[l - 1].abs() > 1e250 {
            for v in vals[l - 1..].iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    let j0 = x.sin() / x;
    let j1 = x.sin() / (x * x) - x.cos() / x;
    let scale = if j0.abs() >= j1.abs() {
        j0 / vals[0]
    } else {
        j1 / vals[1]
    };
    vals.truncate(l_max + 1);
    for v in vals.iter_mut() {
        *v *= scale;
    }
    vals
}
