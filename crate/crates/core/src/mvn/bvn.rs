//! Bivariate normal upper-orthant probabilities.
//!
//! Drezner–Wesolowsky quadrature with Genz's refinements for high
//! correlation; double-precision accuracy across the whole (h, k, r) range.

use std::f64::consts::PI;

use super::normal::{band, phi};

const GL6_W: [f64; 3] = [0.171_324_492_379_170_5, 0.360_761_573_048_138_4, 0.467_913_934_572_690_4];
const GL6_X: [f64; 3] = [0.932_469_514_203_152_2, 0.661_209_386_466_264_7, 0.238_619_186_083_197];

const GL12_W: [f64; 6] = [
    0.047_175_336_386_511_77,
    0.106_939_325_995_318_3,
    0.160_078_328_543_346_4,
    0.203_167_426_723_065_9,
    0.233_492_536_538_354_7,
    0.249_147_045_813_402_9,
];
const GL12_X: [f64; 6] = [
    0.981_560_634_246_719_1,
    0.904_117_256_370_475,
    0.769_902_674_194_305,
    0.587_317_954_286_617_1,
    0.367_831_498_998_180_2,
    0.125_233_408_511_469_2,
];

const GL20_W: [f64; 10] = [
    0.017_614_007_139_152_12,
    0.040_601_429_800_386_94,
    0.062_672_048_334_109_06,
    0.083_276_741_576_704_75,
    0.101_930_119_817_240_4,
    0.118_194_531_961_518_4,
    0.131_688_638_449_176_6,
    0.142_096_109_318_382_1,
    0.149_172_986_472_603_7,
    0.152_753_387_130_725_9,
];
#[allow(clippy::excessive_precision)]
const GL20_X: [f64; 10] = [
    0.993_128_599_185_094_9,
    0.963_971_927_277_913_8,
    0.912_234_428_251_325_9,
    0.839_116_971_822_218_8,
    0.746_331_906_460_150_8,
    0.636_053_680_726_515,
    0.510_867_001_950_827_1,
    0.373_706_088_715_419_6,
    0.227_785_851_141_645_1,
    0.076_526_521_133_497_33,
];

/// `P(X > h, Y > k)` for standard bivariate normal with correlation `r`.
/// Infinite limits are allowed.
pub fn bvn_upper(h: f64, k: f64, r: f64) -> f64 {
    if h == f64::INFINITY || k == f64::INFINITY {
        return 0.0;
    }
    if h == f64::NEG_INFINITY {
        return if k == f64::NEG_INFINITY { 1.0 } else { phi(-k) };
    }
    if k == f64::NEG_INFINITY {
        return phi(-h);
    }
    if r == 0.0 {
        return phi(-h) * phi(-k);
    }
    if r >= 1.0 {
        return phi(-h.max(k));
    }
    if r <= -1.0 {
        return if h + k < 0.0 { phi(-h) - phi(k) } else { 0.0 };
    }

    let (w, x): (&[f64], &[f64]) = if r.abs() < 0.3 {
        (&GL6_W, &GL6_X)
    } else if r.abs() < 0.75 {
        (&GL12_W, &GL12_X)
    } else {
        (&GL20_W, &GL20_X)
    };
    let tp = 2.0 * PI;
    let mut k = k;
    let mut hk = h * k;
    let mut bvn = 0.0;

    if r.abs() < 0.925 {
        let hs = (h * h + k * k) / 2.0;
        let asr = r.asin() / 2.0;
        for (&wi, &xi) in w.iter().zip(x) {
            for node in [1.0 - xi, 1.0 + xi] {
                let sn = (asr * node).sin();
                bvn += wi * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
            }
        }
        bvn = bvn * asr / tp + phi(-h) * phi(-k);
    } else {
        if r < 0.0 {
            k = -k;
            hk = -hk;
        }
        if r.abs() < 1.0 {
            let as_ = 1.0 - r * r;
            let mut a = as_.sqrt();
            let bs = (h - k) * (h - k);
            let c = (4.0 - hk) / 8.0;
            let d = (12.0 - hk) / 80.0;
            let asr = -(bs / as_ + hk) / 2.0;
            if asr > -100.0 {
                bvn = a * asr.exp() * (1.0 - c * (bs - as_) * (1.0 - d * bs) / 3.0 + c * d * as_ * as_);
            }
            if hk > -100.0 {
                let b = bs.sqrt();
                let sp = tp.sqrt() * phi(-b / a);
                bvn -= (-hk / 2.0).exp() * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
            }
            a /= 2.0;
            let mut acc = 0.0;
            for (&wi, &xi) in w.iter().zip(x) {
                for node in [1.0 - xi, 1.0 + xi] {
                    let xs = (a * node) * (a * node);
                    let asr = -(bs / xs + hk) / 2.0;
                    if asr > -100.0 {
                        let sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
                        let rs = (1.0 - xs).sqrt();
                        let ep = (-(hk / 2.0) * xs / ((1.0 + rs) * (1.0 + rs))).exp() / rs;
                        acc += wi * asr.exp() * (sp - ep);
                    }
                }
            }
            bvn = (a * acc - bvn) / tp;
        }
        if r > 0.0 {
            bvn += phi(-h.max(k));
        } else if h >= k {
            bvn = -bvn;
        } else {
            let l = if h < 0.0 { phi(k) - phi(h) } else { phi(-h) - phi(-k) };
            bvn = l - bvn;
        }
    }
    bvn.clamp(0.0, 1.0)
}

/// `P(X <= h, Y <= k)`.
pub fn bvn_cdf(h: f64, k: f64, r: f64) -> f64 {
    bvn_upper(-h, -k, r)
}

/// `P(lo1 < X <= hi1, lo2 < Y <= hi2)` for a standard bivariate normal.
pub fn bvn_rectangle(lo1: f64, hi1: f64, lo2: f64, hi2: f64, r: f64) -> f64 {
    if lo1 >= hi1 || lo2 >= hi2 {
        return 0.0;
    }
    let inf = f64::INFINITY;
    match (lo1 == -inf, hi1 == inf, lo2 == -inf, hi2 == inf) {
        (true, true, _, _) => return band(lo2, hi2),
        (_, _, true, true) => return band(lo1, hi1),
        _ => {}
    }
    let p = bvn_upper(lo1, lo2, r) - bvn_upper(hi1, lo2, r) - bvn_upper(lo1, hi2, r)
        + bvn_upper(hi1, hi2, r);
    p.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arcsine_orthant_identity() {
        for r in [-0.99f64, -0.9, -0.5, -0.2, 0.0, 0.1, 0.5, 0.8, 0.93, 0.999] {
            let exact = 0.25 + r.asin() / (2.0 * PI);
            assert!((bvn_cdf(0.0, 0.0, r) - exact).abs() < 1e-14, "r={r}");
        }
    }

    #[test]
    fn degenerate_limits() {
        assert_eq!(bvn_upper(f64::INFINITY, 0.0, 0.5), 0.0);
        assert!((bvn_upper(f64::NEG_INFINITY, 1.0, 0.5) - phi(-1.0)).abs() < 1e-16);
        assert!((bvn_cdf(1.0, f64::INFINITY, 0.3) - phi(1.0)).abs() < 1e-15);
        assert!((bvn_rectangle(f64::NEG_INFINITY, f64::INFINITY, -1.0, 2.0, 0.7) - band(-1.0, 2.0)).abs() < 1e-15);
    }

    #[test]
    fn symmetry_in_arguments() {
        for &(h, k, r) in &[(0.3, -1.2, 0.4), (1.5, 0.2, -0.95), (-2.0, 0.7, 0.97)] {
            assert!((bvn_upper(h, k, r) - bvn_upper(k, h, r)).abs() < 1e-15);
            // P(X>h,Y>k) + P(X>h,Y<=k) = P(X>h)
            let split = bvn_upper(h, k, r) + bvn_upper(h, -k, -r);
            assert!((split - phi(-h)).abs() < 1e-14);
        }
    }
}
