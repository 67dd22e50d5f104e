//! Goodness-of-fit tests and interval estimates.

use alloc::vec::Vec;

use crate::error::{Error, Result};

pub const KS_MIN_SAMPLES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Effective sample size used for the p-value.
    pub n_eff: f64,
}

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Theta-function form converges fast for small arguments.
        let y = libm::exp(-core::f64::consts::PI * core::f64::consts::PI / (8.0 * lambda * lambda));
        let mut s = 0.0;
        let mut k = 1.0;
        loop {
            let term = libm::pow(y, k * k);
            s += term;
            if term < 1e-18 {
                break;
            }
            k += 2.0;
        }
        let cdf = libm::sqrt(2.0 * core::f64::consts::PI) / lambda * s;
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let x = libm::exp(-2.0 * lambda * lambda);
        let mut s = 0.0;
        let mut sign = 1.0;
        for k in 1..100 {
            let kf = k as f64;
            let term = libm::pow(x, kf * kf);
            s += sign * term;
            if term < 1e-18 {
                break;
            }
            sign = -sign;
        }
        (2.0 * s).clamp(0.0, 1.0)
    }
}

fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    let sn = libm::sqrt(n_eff);
    kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d)
}

fn sorted_finite(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::InvalidArgument("sample contains NaN"));
    }
    let mut v = samples.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(v)
}

/// One-sample Kolmogorov-Smirnov test against a continuous CDF.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    if samples.len() < KS_MIN_SAMPLES {
        return Err(Error::TooFewSamples { min: KS_MIN_SAMPLES, got: samples.len() });
    }
    let v = sorted_finite(samples)?;
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    Ok(KsResult { statistic: d, p_value: ks_p_value(d, n), n_eff: n })
}

/// Two-sample Kolmogorov-Smirnov test; ties are handled by comparing the
/// empirical CDFs after each distinct value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    let min = a.len().min(b.len());
    if min < KS_MIN_SAMPLES {
        return Err(Error::TooFewSamples { min: KS_MIN_SAMPLES, got: min });
    }
    let a = sorted_finite(a)?;
    let b = sorted_finite(b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let n_eff = na * nb / (na + nb);
    Ok(KsResult { statistic: d, p_value: ks_p_value(d, n_eff), n_eff })
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

/// Standard normal quantile (Wichura's AS 241, about 16 digits).
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((2509.0809287301226727 * r + 33430.575583588128105) * r + 67265.770927008700853) * r
            + 45921.953931549871457)
            * r
            + 13731.693765509461125)
            * r
            + 1971.5909503065514427)
            * r
            + 133.14166789178437745)
            * r
            + 3.387132872796366608;
        let den = ((((((5226.495278852545925 * r + 28729.085735721942674) * r + 39307.89580009271061) * r
            + 21213.794301586595867)
            * r
            + 5394.1960214247511077)
            * r
            + 687.1870074920579083)
            * r
            + 42.313330701600911252)
            * r
            + 1.0;
        return q * num / den;
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = libm::sqrt(-libm::log(r));
    let val = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r + 0.24178072517745061177) * r
            + 1.27045825245236838258)
            * r
            + 3.64784832476320460504)
            * r
            + 5.7694972214606914055)
            * r
            + 4.6303378461565452959)
            * r
            + 1.42343711074968357734;
        let den = ((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r
            + 0.14810397642748007459)
            * r
            + 0.68976733498510000455)
            * r
            + 1.6763848301838038494)
            * r
            + 2.05319162663775882187)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r
            + 0.026532189526576123093)
            * r
            + 0.29656057182850489123)
            * r
            + 1.7848265399172913358)
            * r
            + 5.4637849111641143699)
            * r
            + 6.6579046435011037772;
        let den = ((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r
            + 7.868691311456132591e-4)
            * r
            + 0.0148753612908506148525)
            * r
            + 0.13692988092273580531)
            * r
            + 0.59983220655588793769)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_ci(k: u64, n: u64, confidence: f64) -> Result<Interval> {
    if n == 0 || k > n {
        return Err(Error::InvalidArgument("need 0 <= k <= n and n > 0"));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidArgument("confidence must lie in (0,1)"));
    }
    let z = normal_quantile(0.5 + 0.5 * confidence);
    let nf = n as f64;
    let ph = k as f64 / nf;
    let z2 = z * z;
    let den = 1.0 + z2 / nf;
    let centre = (ph + z2 / (2.0 * nf)) / den;
    let half = z * libm::sqrt(ph * (1.0 - ph) / nf + z2 / (4.0 * nf * nf)) / den;
    let lo = if k == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if k == n { 1.0 } else { (centre + half).min(1.0) };
    Ok(Interval { lo, hi })
}

/// Regularized upper incomplete gamma `Q(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let ln_front = a * libm::log(x) - x - libm::lgamma(a);
    if x < a + 1.0 {
        let mut sum = 1.0 / a;
        let mut term = sum;
        let mut ap = a;
        for _ in 0..10_000 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-16 {
                break;
            }
        }
        (1.0 - sum * libm::exp(ln_front)).clamp(0.0, 1.0)
    } else {
        // Lentz continued fraction.
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (libm::exp(ln_front) * h).clamp(0.0, 1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson goodness of fit. Bins with zero expectation must be empty and
/// do not count towards the degrees of freedom.
pub fn chi_square_gof(counts: &[u64], expected: &[f64]) -> Result<ChiSquareResult> {
    if counts.len() != expected.len() {
        return Err(Error::InvalidArgument("counts and expectations differ in length"));
    }
    let mut stat = 0.0;
    let mut bins = 0usize;
    for (&c, &e) in counts.iter().zip(expected) {
        if e <= 0.0 {
            if c > 0 {
                return Err(Error::InvalidArgument("observation in a bin with zero expectation"));
            }
            continue;
        }
        bins += 1;
        let d = c as f64 - e;
        stat += d * d / e;
    }
    if bins < 2 {
        return Err(Error::TooFewSamples { min: 2, got: bins });
    }
    let dof = bins - 1;
    Ok(ChiSquareResult { statistic: stat, dof, p_value: gamma_q(dof as f64 / 2.0, stat / 2.0) })
}

/// Mean and standard error of the mean.
pub fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    if x.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (m, f64::NAN);
    }
    let v = x.iter().map(|y| (y - m) * (y - m)).sum::<f64>() / (n - 1.0);
    (m, libm::sqrt(v / n))
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    x.iter().map(|y| (y - m) * (y - m)).sum::<f64>() / (n - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_round_trips() {
        for &p in &[1e-10, 0.001, 0.025, 0.3, 0.5, 0.8, 0.975, 0.999999] {
            let z = normal_quantile(p);
            assert!((normal_cdf(z) - p).abs() < 1e-13 * p.max(1e-3), "{p}");
        }
        assert!((normal_quantile(0.995) - 2.5758293035489).abs() < 1e-12);
    }

    #[test]
    fn wilson_known_value() {
        // 50/100 at 95%: centre 0.5, half width 1.96*sqrt(.25/100 + 1.96^2/40000)/(1+1.96^2/100)
        let ci = wilson_ci(50, 100, 0.95).unwrap();
        assert!((ci.lo - 0.403831).abs() < 1e-5 && (ci.hi - 0.596169).abs() < 1e-5, "{ci:?}");
        let ci = wilson_ci(0, 10, 0.95).unwrap();
        assert_eq!(ci.lo, 0.0);
    }

    #[test]
    fn kolmogorov_branches_meet() {
        let a = kolmogorov_sf(1.18 - 1e-12);
        let b = kolmogorov_sf(1.18);
        assert!((a - b).abs() < 1e-12);
        // Critical values of the Kolmogorov distribution.
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_sf(1.9495) - 0.001).abs() < 1e-5);
    }

    #[test]
    fn ks_needs_eight_points() {
        assert!(matches!(ks_one_sample(&[0.5; 7], |x| x), Err(Error::TooFewSamples { min: 8, got: 7 })));
        assert!(ks_one_sample(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8], |x| x).is_ok());
    }

    #[test]
    fn ks_two_sample_identical_and_disjoint() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let r = ks_two_sample(&a, &a).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        let b: Vec<f64> = (0..100).map(|i| 1000.0 + i as f64).collect();
        let r = ks_two_sample(&a, &b).unwrap();
        assert_eq!(r.statistic, 1.0);
        assert!(r.p_value < 1e-20);
    }

    #[test]
    fn chi_square_p_values() {
        // One degree of freedom: Q(1/2, x/2) = erfc(sqrt(x/2)).
        let r = chi_square_gof(&[60, 40], &[50.0, 50.0]).unwrap();
        assert_eq!(r.dof, 1);
        assert!((r.statistic - 4.0).abs() < 1e-12);
        assert!((r.p_value - libm::erfc(libm::sqrt(2.0))).abs() < 1e-12);
        // Two degrees of freedom: Q(1, x/2) = exp(-x/2).
        assert!((gamma_q(1.0, 3.7) - libm::exp(-3.7)).abs() < 1e-14);
        assert!((gamma_q(1.0, 0.3) - libm::exp(-0.3)).abs() < 1e-14);
    }
}
