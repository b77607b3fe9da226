//! Special functions: modified Bessel function of the second kind, gamma
//! helpers and the standard normal distribution.

use core::f64::consts::{FRAC_1_SQRT_2, PI};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Two-sided 95% standard normal quantile.
pub const Z_975: f64 = 1.959_963_984_540_054;

pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

// Taylor coefficients of 1/Γ(z) (Abramowitz & Stegun 6.1.34), c_1 … c_16.
const RECIP_GAMMA: [f64; 16] = [
    1.0,
    0.577_215_664_901_532_9,
    -0.655_878_071_520_253_8,
    -0.042_002_635_034_095_2,
    0.166_538_611_382_291_5,
    -0.042_197_734_555_544_3,
    -0.009_621_971_527_877_0,
    0.007_218_943_246_663_0,
    -0.001_165_167_591_859_1,
    -0.000_215_241_674_114_9,
    0.000_128_050_282_388_2,
    -0.000_020_134_854_780_7,
    -0.000_001_250_493_482_1,
    0.000_001_133_027_232_0,
    -0.000_000_205_633_841_7,
    0.000_000_006_116_095_0,
];

/// `(gam1, gam2, 1/Γ(1+μ), 1/Γ(1−μ))` for `|μ| ≤ 1/2`, where
/// `gam1 = (1/Γ(1−μ) − 1/Γ(1+μ)) / 2μ` and `gam2 = (1/Γ(1−μ) + 1/Γ(1+μ)) / 2`.
fn temme_gammas(mu: f64) -> (f64, f64, f64, f64) {
    if libm::fabs(mu) < 0.1 {
        // 1/Γ(1+μ) = Σ c_{k+1} μ^k; split into even and odd powers.
        let mu2 = mu * mu;
        let (mut even, mut odd, mut p) = (0.0, 0.0, 1.0);
        for k in 0..RECIP_GAMMA.len() / 2 {
            even += RECIP_GAMMA[2 * k] * p;
            odd += RECIP_GAMMA[2 * k + 1] * p;
            p *= mu2;
        }
        let gam1 = -odd;
        let gam2 = even;
        (gam1, gam2, gam2 + mu * odd, gam2 - mu * odd)
    } else {
        let gampl = 1.0 / gamma(1.0 + mu);
        let gammi = 1.0 / gamma(1.0 - mu);
        ((gammi - gampl) / (2.0 * mu), 0.5 * (gammi + gampl), gampl, gammi)
    }
}

/// Modified Bessel function of the second kind `K_ν(x)` for `ν ≥ 0`, `x > 0`.
///
/// Temme's series for `x < 2`, Steed's continued fraction otherwise, then
/// forward recurrence in the order.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    const EPS: f64 = 1e-16;
    const MAX_IT: usize = 10_000;
    debug_assert!(nu >= 0.0 && x > 0.0);
    let nl = libm::floor(nu + 0.5) as i64;
    let xmu = nu - nl as f64;
    let xmu2 = xmu * xmu;
    let xi = 1.0 / x;
    let xi2 = 2.0 * xi;

    let (mut rkmu, mut rk1);
    if x < 2.0 {
        let x2 = 0.5 * x;
        let pimu = PI * xmu;
        let fact = if libm::fabs(pimu) < EPS { 1.0 } else { pimu / libm::sin(pimu) };
        let d = -libm::log(x2);
        let e = xmu * d;
        let fact2 = if libm::fabs(e) < EPS { 1.0 } else { libm::sinh(e) / e };
        let (gam1, gam2, gampl, gammi) = temme_gammas(xmu);
        let mut ff = fact * (gam1 * libm::cosh(e) + gam2 * fact2 * d);
        let mut sum = ff;
        let e = libm::exp(e);
        let mut p = 0.5 * e / gampl;
        let mut q = 0.5 / (e * gammi);
        let mut c = 1.0;
        let dd = x2 * x2;
        let mut sum1 = p;
        for i in 1..MAX_IT {
            let fi = i as f64;
            ff = (fi * ff + p + q) / (fi * fi - xmu2);
            c *= dd / fi;
            p /= fi - xmu;
            q /= fi + xmu;
            let del = c * ff;
            sum += del;
            let del1 = c * (p - fi * ff);
            sum1 += del1;
            if libm::fabs(del) < libm::fabs(sum) * EPS {
                break;
            }
        }
        rkmu = sum;
        rk1 = sum1 * xi2;
    } else {
        let mut b = 2.0 * (1.0 + x);
        let mut d = 1.0 / b;
        let mut delh = d;
        let mut h = d;
        let mut q1 = 0.0;
        let mut q2 = 1.0;
        let a1 = 0.25 - xmu2;
        let mut q = a1;
        let mut c = a1;
        let mut a = -a1;
        let mut s = 1.0 + q * delh;
        for i in 2..MAX_IT {
            let fi = i as f64;
            a -= 2.0 * (fi - 1.0);
            c = -a * c / fi;
            let qnew = (q1 - b * q2) / a;
            q1 = q2;
            q2 = qnew;
            q += c * qnew;
            b += 2.0;
            d = 1.0 / (b + a * d);
            delh = (b * d - 1.0) * delh;
            h += delh;
            let dels = q * delh;
            s += dels;
            if libm::fabs(dels / s) < EPS {
                break;
            }
        }
        h *= a1;
        rkmu = libm::sqrt(PI / (2.0 * x)) * libm::exp(-x) / s;
        rk1 = rkmu * (xmu + x + 0.5 - h) * xi;
    }
    for i in 1..=nl {
        let rktemp = (xmu + i as f64) * xi2 * rk1 + rkmu;
        rkmu = rk1;
        rk1 = rktemp;
    }
    rkmu
}

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail `1 − Φ(x)`, accurate far into the tail.
pub fn std_normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

pub fn std_normal_ln_pdf(x: f64) -> f64 {
    -0.5 * x * x - 0.5 * libm::log(2.0 * PI)
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}
