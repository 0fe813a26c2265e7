//! Branch-free elementary functions used in the per-site disorder loops.
//!
//! Written so that the compiler vectorizes the loops that call them; std
//! calls into libm and does not. Maximum relative error against std is
//! about 3e-15 on the ranges that the disorder samplers feed in.

pub const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
#[inline(always)]
pub fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform in (0, 1] from the top 53 bits.
#[inline(always)]
pub fn unit_open0(w: u64) -> f64 {
    ((w >> 11) + 1) as f64 * (1.0 / 9_007_199_254_740_992.0)
}

/// Uniform in [0, 1) from the top 53 bits.
#[inline(always)]
pub fn unit_closed0(w: u64) -> f64 {
    (w >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
}

const ROUND_SHIFT: f64 = 6_755_399_441_055_744.0; // 1.5 * 2^52

/// e^x, clamped to the normal range.
#[inline(always)]
pub fn exp(x: f64) -> f64 {
    let x = x.max(-708.0).min(709.0);
    let t = x.mul_add(std::f64::consts::LOG2_E, ROUND_SHIFT);
    let k = t - ROUND_SHIFT;
    let r = k.mul_add(
        -1.908_214_929_270_587_7e-10,
        k.mul_add(-6.931_471_803_691_238_2e-1, x),
    );
    let mut p: f64 = 1.0 / 6_227_020_800.0;
    p = p.mul_add(r, 1.0 / 479_001_600.0);
    p = p.mul_add(r, 1.0 / 39_916_800.0);
    p = p.mul_add(r, 1.0 / 3_628_800.0);
    p = p.mul_add(r, 1.0 / 362_880.0);
    p = p.mul_add(r, 1.0 / 40_320.0);
    p = p.mul_add(r, 1.0 / 5_040.0);
    p = p.mul_add(r, 1.0 / 720.0);
    p = p.mul_add(r, 1.0 / 120.0);
    p = p.mul_add(r, 1.0 / 24.0);
    p = p.mul_add(r, 1.0 / 6.0);
    p = p.mul_add(r, 0.5);
    p = p.mul_add(r, 1.0);
    p = p.mul_add(r, 1.0);
    // low mantissa bits of t hold k + 2^51; shifting drops the 2^51 bit
    let scale = f64::from_bits(t.to_bits().wrapping_add(1023) << 52);
    p * scale
}

/// Natural log for finite positive normal x.
#[inline(always)]
pub fn ln(x: f64) -> f64 {
    let bits = x.to_bits();
    let mut e = ((bits >> 52) as i64 - 1023) as f64;
    let mut m = f64::from_bits((bits & 0x000F_FFFF_FFFF_FFFF) | 0x3FF0_0000_0000_0000);
    let big = m > std::f64::consts::SQRT_2;
    m = if big { m * 0.5 } else { m };
    e = if big { e + 1.0 } else { e };
    let s = (m - 1.0) / (m + 1.0);
    let s2 = s * s;
    let mut p: f64 = 1.0 / 21.0;
    p = p.mul_add(s2, 1.0 / 19.0);
    p = p.mul_add(s2, 1.0 / 17.0);
    p = p.mul_add(s2, 1.0 / 15.0);
    p = p.mul_add(s2, 1.0 / 13.0);
    p = p.mul_add(s2, 1.0 / 11.0);
    p = p.mul_add(s2, 1.0 / 9.0);
    p = p.mul_add(s2, 1.0 / 7.0);
    p = p.mul_add(s2, 1.0 / 5.0);
    p = p.mul_add(s2, 1.0 / 3.0);
    p = p.mul_add(s2, 1.0);
    e.mul_add(std::f64::consts::LN_2, 2.0 * s * p)
}

/// cos(2 pi u) for |u| < 2^51.
#[inline(always)]
pub fn cos_2pi(u: f64) -> f64 {
    let t = u - ((u + ROUND_SHIFT) - ROUND_SHIFT);
    let a = t.abs();
    let flip = a > 0.25;
    let b = if flip { 0.5 - a } else { a };
    let th = 2.0 * std::f64::consts::PI * b;
    let t2 = th * th;
    let mut p: f64 = -1.0 / 51_090_942_171_709_440_000.0;
    p = p.mul_add(t2, 1.0 / 2_432_902_008_176_640_000.0);
    p = p.mul_add(t2, -1.0 / 6_402_373_705_728_000.0);
    p = p.mul_add(t2, 1.0 / 20_922_789_888_000.0);
    p = p.mul_add(t2, -1.0 / 87_178_291_200.0);
    p = p.mul_add(t2, 1.0 / 479_001_600.0);
    p = p.mul_add(t2, -1.0 / 3_628_800.0);
    p = p.mul_add(t2, 1.0 / 40_320.0);
    p = p.mul_add(t2, -1.0 / 720.0);
    p = p.mul_add(t2, 1.0 / 24.0);
    p = p.mul_add(t2, -0.5);
    p = p.mul_add(t2, 1.0);
    if flip {
        -p
    } else {
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn exp_matches_std() {
        let mut worst: f64 = 0.0;
        for i in 0..200_001 {
            let x = -50.0 + i as f64 * 5e-4;
            worst = worst.max(rel(exp(x), x.exp()));
        }
        for &x in &[-700.0, -300.5, 0.0, 1e-12, 300.25, 700.0] {
            worst = worst.max(rel(exp(x), f64::exp(x)));
        }
        assert!(worst < 4e-15, "{worst}");
    }

    #[test]
    fn ln_matches_std() {
        let mut worst: f64 = 0.0;
        let mut x = 1e-300;
        while x < 1e300 {
            worst = worst.max((ln(x) - x.ln()).abs() / x.ln().abs().max(1.0));
            x *= 1.0137;
        }
        for i in 1..100_000 {
            let x = i as f64 * 1e-5;
            worst = worst.max((ln(x) - x.ln()).abs() / x.ln().abs().max(1e-3));
        }
        assert!(worst < 4e-15, "{worst}");
    }

    #[test]
    fn cos_matches_std() {
        let mut worst: f64 = 0.0;
        for i in 0..400_001 {
            let u = -2.0 + i as f64 * 1e-5;
            let want = (2.0 * std::f64::consts::PI * u).cos();
            worst = worst.max((cos_2pi(u) - want).abs());
        }
        assert!(worst < 4e-15, "{worst}");
    }

    #[test]
    fn uniforms_stay_in_range() {
        assert_eq!(unit_closed0(0), 0.0);
        assert!(unit_open0(0) > 0.0);
        assert!(unit_open0(u64::MAX) <= 1.0);
        assert!(unit_closed0(u64::MAX) < 1.0);
    }

    #[test]
    fn mix_is_a_bijection_sample() {
        let mut seen: Vec<u64> = (0..10_000u64).map(mix).collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 10_000);
    }
}
