//! Modified Bessel function of the first kind, order zero.

/// Crossover between the power series and the large-argument expansion.
const SERIES_LIMIT: f64 = 30.0;

/// I₀(x).
pub fn bessel_i0(x: f64) -> f64 {
    let x = x.abs();
    if x <= SERIES_LIMIT {
        series(x)
    } else {
        asymptotic_scaled(x) * x.exp()
    }
}

/// e^{−|x|} I₀(x), finite for every argument.
pub fn bessel_i0_scaled(x: f64) -> f64 {
    let x = x.abs();
    if x <= SERIES_LIMIT {
        series(x) * (-x).exp()
    } else {
        asymptotic_scaled(x)
    }
}

fn series(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        term *= q / (k * k);
        sum += term;
        if term < 1e-17 * sum {
            return sum;
        }
        k += 1.0;
    }
}

fn asymptotic_scaled(x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        let kf = k as f64;
        let next = term * (2.0 * kf - 1.0).powi(2) / (kf * 8.0 * x);
        if next > term {
            break;
        }
        term = next;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum / (2.0 * std::f64::consts::PI * x).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        assert_eq!(bessel_i0(0.0), 1.0);
        // 30-term power series, computed independently
        let oracle: f64 = (0..30)
            .map(|k| {
                let f: f64 = (1..=k).map(|j| j as f64).product();
                0.25f64.powi(k) / (f * f)
            })
            .sum();
        assert!((bessel_i0(1.0) - oracle).abs() < 1e-15 * oracle);
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-15);
        // reference value from arbitrary-precision evaluation
        let i10 = 2_815.716_628_466_254;
        assert!((bessel_i0(10.0) - i10).abs() < 1e-12 * i10);
        assert_eq!(bessel_i0(-2.5), bessel_i0(2.5));
    }

    #[test]
    fn branches_agree_at_crossover() {
        for x in [25.0, 30.0, 35.0, 60.0] {
            let s = series(x) * (-x).exp();
            let a = asymptotic_scaled(x);
            assert!((s - a).abs() < 1e-13 * a, "x={x}: {s} vs {a}");
        }
    }

    #[test]
    fn monotone_and_scaled_consistent() {
        let mut prev = 0.0;
        for k in 0..400 {
            let x = k as f64 * 0.25;
            let v = bessel_i0(x);
            assert!(v > prev);
            prev = v;
            let s = bessel_i0_scaled(x);
            assert!((s - v * (-x).exp()).abs() <= 1e-13 * s);
        }
        assert!(bessel_i0_scaled(1e6).is_finite());
    }
}
