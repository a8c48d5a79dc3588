//! Elementwise `exp` for `f64` slices that the compiler can vectorise.
//!
//! The kernel uses only IEEE add/mul and bit operations, never fused
//! multiply-add, so the scalar and SIMD paths return identical bits. That
//! keeps results reproducible across machines with different instruction
//! sets. Results are within one ulp of the correctly rounded value.

/// Table steps per octave.
const STEPS: i64 = 32;
const INV_STEP: f64 = 32.0 * std::f64::consts::LOG2_E;
// ln2 / 32 split so that `n * STEP_HI` is exact for every reachable `n`
const STEP_HI: f64 = 6.931_471_803_691_238e-1 / 32.0;
const STEP_LO: f64 = 1.908_214_929_270_587_7e-10 / 32.0;
/// 1.5 · 2^52: adding it rounds to an integer held in the low mantissa bits.
const ROUNDER: f64 = 6_755_399_441_055_744.0;
const OVERFLOW: f64 = 709.782_712_893_384;
const UNDERFLOW: f64 = -708.0;

/// Taylor coefficients 1/k! of `exp(r) - 1 - r`, from k = 6 down to 2.
const COEFFS: [f64; 5] = [1.0 / 720.0, 1.0 / 120.0, 1.0 / 24.0, 1.0 / 6.0, 0.5];

/// 2^(j/32) as a head and a tail, bit patterns of `f64`.
const TABLE: [(u64, u64); 32] = [
    (0x3ff0000000000000, 0x0000000000000000),
    (0x3ff059b0d3158574, 0x3c8d73e2a475b465),
    (0x3ff0b5586cf9890f, 0x3c98a62e4adc610b),
    (0x3ff11301d0125b51, 0xbc96c51039449b3a),
    (0x3ff172b83c7d517b, 0xbc819041b9d78a76),
    (0x3ff1d4873168b9aa, 0x3c9e016e00a2643c),
    (0x3ff2387a6e756238, 0x3c99b07eb6c70573),
    (0x3ff29e9df51fdee1, 0x3c8612e8afad1255),
    (0x3ff306fe0a31b715, 0x3c86f46ad23182e4),
    (0x3ff371a7373aa9cb, 0xbc963aeabf42eae2),
    (0x3ff3dea64c123422, 0x3c8ada0911f09ebc),
    (0x3ff44e086061892d, 0x3c489b7a04ef80d0),
    (0x3ff4bfdad5362a27, 0x3c7d4397afec42e2),
    (0x3ff5342b569d4f82, 0xbc807abe1db13cad),
    (0x3ff5ab07dd485429, 0x3c96324c054647ad),
    (0x3ff6247eb03a5585, 0xbc9383c17e40b497),
    (0x3ff6a09e667f3bcd, 0xbc9bdd3413b26456),
    (0x3ff71f75e8ec5f74, 0xbc816e4786887a99),
    (0x3ff7a11473eb0187, 0xbc841577ee04992f),
    (0x3ff82589994cce13, 0xbc9d4c1dd41532d8),
    (0x3ff8ace5422aa0db, 0x3c96e9f156864b27),
    (0x3ff93737b0cdc5e5, 0xbc675fc781b57ebc),
    (0x3ff9c49182a3f090, 0x3c7c7c46b071f2be),
    (0x3ffa5503b23e255d, 0xbc9d2f6edb8d41e1),
    (0x3ffae89f995ad3ad, 0x3c97a1cd345dcc81),
    (0x3ffb7f76f2fb5e47, 0xbc75584f7e54ac3b),
    (0x3ffc199bdd85529c, 0x3c811065895048dd),
    (0x3ffcb720dcef9069, 0x3c7503cbd1e949db),
    (0x3ffd5818dcfba487, 0x3c82ed02d75b3707),
    (0x3ffdfc97337b9b5f, 0xbc91a5cd4f184b5c),
    (0x3ffea4afa2a490da, 0xbc9e9c23179c2893),
    (0x3fff50765b6e4540, 0x3c99d3e12dd8a18b),
];

#[inline(always)]
fn kernel(x: f64) -> f64 {
    let xc = if x < UNDERFLOW { UNDERFLOW } else { x };
    let xc = if xc > OVERFLOW { OVERFLOW } else { xc };
    let t = xc * INV_STEP + ROUNDER;
    let n = t - ROUNDER;
    // |r| <= ln2 / 64
    let r = (xc - n * STEP_HI) - n * STEP_LO;
    let mut p = COEFFS[0];
    for &c in &COEFFS[1..] {
        p = p * r + c;
    }
    let q = r + r * r * p;
    let n_int = t.to_bits().wrapping_sub(ROUNDER.to_bits()) as i64;
    let (hi, lo) = TABLE[(n_int & (STEPS - 1)) as usize];
    let (hi, lo) = (f64::from_bits(hi), f64::from_bits(lo));
    let mantissa = hi + (lo + hi * q);
    // two factors keep each power of two normal over the whole range
    let k = n_int >> 5;
    let (ka, kb) = (k >> 1, k - (k >> 1));
    let pow2 = |e: i64| f64::from_bits(((e + 1023) as u64) << 52);
    let y = mantissa * pow2(ka) * pow2(kb);
    let y = if x > OVERFLOW { f64::INFINITY } else { y };
    let y = if x < UNDERFLOW { 0.0 } else { y };
    if x.is_nan() {
        x
    } else {
        y
    }
}

fn exp_portable(values: &mut [f64]) {
    for v in values {
        *v = kernel(*v);
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
fn exp_avx512(values: &mut [f64]) {
    for v in values {
        *v = kernel(*v);
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
fn exp_avx2(values: &mut [f64]) {
    for v in values {
        *v = kernel(*v);
    }
}

/// Replaces every element by its exponential.
pub(crate) fn exp_in_place(values: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx512f") {
            // SAFETY: the required CPU feature was detected at runtime.
            return unsafe { exp_avx512(values) };
        }
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: as above.
            return unsafe { exp_avx2(values) };
        }
    }
    exp_portable(values)
}
