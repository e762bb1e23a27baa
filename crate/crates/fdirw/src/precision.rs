//! Software emulation of reduced-precision floating-point arithmetic.
//!
//! Every elementary operation is computed in binary64 and then rounded to
//! the target format with round-to-nearest-even, so the behaviour is
//! portable and bit-auditable: no half-precision hardware is involved.
//! Because binary64 carries more than twice the significand of binary32
//! (and far more than binary16), the compute-wide-then-round scheme is
//! free of double-rounding artifacts for `+ - * /`, and the emulated
//! binary32 operations reproduce native `f32` hardware arithmetic bit for
//! bit.
//!
//! The superposition step consumes these primitives through
//! [`dot_with_boundary`], which fixes the arithmetic contract of each
//! [`PrecisionMode`]: what gets rounded where, and in which order the
//! accumulation runs. No fused multiply-add is used anywhere; products and
//! additions round separately.

/// Arithmetic contract for one superposition step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PrecisionMode {
    /// Native binary64 throughout.
    Full,
    /// Operands, products and the running sum all rounded to binary32.
    B32,
    /// Products rounded to binary16, accumulation carried in binary32.
    Mixed,
    /// Everything, including the running sum, rounded to binary16.
    B16,
}

impl PrecisionMode {
    pub const ALL: [PrecisionMode; 4] =
        [PrecisionMode::Full, PrecisionMode::B32, PrecisionMode::Mixed, PrecisionMode::B16];

    /// Name used in CLI flags and file headers.
    pub fn tag(self) -> &'static str {
        match self {
            PrecisionMode::Full => "full",
            PrecisionMode::B32 => "fp32",
            PrecisionMode::Mixed => "mixed",
            PrecisionMode::B16 => "fp16",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "full" => Some(PrecisionMode::Full),
            "fp32" => Some(PrecisionMode::B32),
            "mixed" => Some(PrecisionMode::Mixed),
            "fp16" => Some(PrecisionMode::B16),
            _ => None,
        }
    }

    /// Rounds a value into this mode's storage format (what a matrix held
    /// in this mode keeps per entry). `Mixed` stores matrix entries in
    /// binary16 because that is the multiplier's operand width.
    pub fn round_storage(self, x: f64) -> f64 {
        match self {
            PrecisionMode::Full => x,
            PrecisionMode::B32 => round_b32(x),
            PrecisionMode::Mixed | PrecisionMode::B16 => round_b16(x),
        }
    }

    /// Bytes per stored matrix entry.
    pub fn storage_width(self) -> usize {
        match self {
            PrecisionMode::Full => 8,
            PrecisionMode::B32 => 4,
            PrecisionMode::Mixed | PrecisionMode::B16 => 2,
        }
    }
}

/// Rounds to the nearest binary32 value (round-to-nearest-even) and widens
/// back. Rust's float casts are correctly rounded, which makes this exact.
#[inline]
pub fn round_b32(x: f64) -> f64 {
    (x as f32) as f64
}

/// Rounds to the nearest binary16 value (round-to-nearest-even) and widens
/// back. Overflow gives a signed infinity, NaN passes through, and
/// subnormals are honored.
#[inline]
pub fn round_b16(x: f64) -> f64 {
    b16_bits_to_f64(f64_to_b16_bits(x))
}

/// Converts a binary64 value to binary16 bits under round-to-nearest-even.
///
/// The rounding is done with integer arithmetic on the binary64
/// significand, so there is no intermediate rounding step.
pub fn f64_to_b16_bits(x: f64) -> u16 {
    let bits = x.to_bits();
    let sign = ((bits >> 48) & 0x8000) as u16;
    if x.is_nan() {
        return sign | 0x7e00;
    }
    let abs_bits = bits & 0x7fff_ffff_ffff_ffff;
    if abs_bits == 0 {
        return sign;
    }
    if abs_bits >= 0x7ff0_0000_0000_0000 {
        return sign | 0x7c00;
    }
    let raw_exp = ((bits >> 52) & 0x7ff) as i32;
    // Exact value is mantissa * 2^exp.
    let (mantissa, exp): (u64, i32) = if raw_exp == 0 {
        (bits & 0xf_ffff_ffff_ffff, -1074)
    } else {
        ((bits & 0xf_ffff_ffff_ffff) | (1 << 52), raw_exp - 1075)
    };
    let log2_abs = exp + 63 - mantissa.leading_zeros() as i32;
    // Quantum of the target: 2^(e-10) in the normal range, 2^-24 below it.
    let quantum = if log2_abs >= -14 { log2_abs - 10 } else { -24 };
    let shift = quantum - exp;
    debug_assert!(shift > 0, "binary16 quantum is always coarser than binary64");
    let k = rne_shift_right(mantissa, shift as u32);
    if quantum == -24 {
        // Subnormal range. k == 1024 carries into the smallest normal
        // encoding on its own because the exponent field sits right above
        // the fraction bits.
        sign | k as u16
    } else {
        let e16 = (log2_abs + 15) as u32;
        let enc = (e16 << 10) + (k as u32 - 1024);
        if enc >= 0x7c00 {
            sign | 0x7c00
        } else {
            sign | enc as u16
        }
    }
}

/// Widens binary16 bits to binary64 (always exact).
pub fn b16_bits_to_f64(h: u16) -> f64 {
    let sign = if h & 0x8000 != 0 { -1.0 } else { 1.0 };
    let exp = (h >> 10) & 0x1f;
    let frac = (h & 0x3ff) as f64;
    match exp {
        0 => sign * frac * (2.0f64).powi(-24),
        0x1f => {
            if frac == 0.0 {
                sign * f64::INFINITY
            } else {
                f64::NAN
            }
        }
        e => sign * (1024.0 + frac) * (2.0f64).powi(e as i32 - 25),
    }
}

/// `round_to_nearest_even(m / 2^s)` for a nonnegative integer `m`.
fn rne_shift_right(m: u64, s: u32) -> u64 {
    if s == 0 {
        return m;
    }
    if s >= 64 {
        // m < 2^63 here, so m / 2^s < 1/2: rounds to zero.
        return 0;
    }
    let floor = m >> s;
    let rem = m & ((1u64 << s) - 1);
    let half = 1u64 << (s - 1);
    if rem > half || (rem == half && floor & 1 == 1) {
        floor + 1
    } else {
        floor
    }
}

#[inline]
fn b32_mul(a: f64, b: f64) -> f64 {
    round_b32(round_b32(a) * round_b32(b))
}

#[inline]
fn b16_mul(a: f64, b: f64) -> f64 {
    round_b16(round_b16(a) * round_b16(b))
}

/// Row-times-vector plus boundary term under a precision mode.
///
/// Computes `sum_j p_row[j]*c_vec[j] + p_bc*c_far` with the accumulation
/// strictly in ascending index order and the boundary term added last.
/// The output bits are fully determined by the inputs and the mode.
pub fn dot_with_boundary(
    p_row: &[f64],
    c_vec: &[f64],
    p_bc: f64,
    c_far: f64,
    mode: PrecisionMode,
) -> f64 {
    debug_assert_eq!(p_row.len(), c_vec.len());
    match mode {
        PrecisionMode::Full => {
            let mut acc = 0.0f64;
            for (&p, &c) in p_row.iter().zip(c_vec) {
                acc += p * c;
            }
            acc + p_bc * c_far
        }
        PrecisionMode::B32 => {
            let mut acc = 0.0f64;
            for (&p, &c) in p_row.iter().zip(c_vec) {
                acc = round_b32(acc + b32_mul(p, c));
            }
            round_b32(acc + b32_mul(p_bc, c_far))
        }
        PrecisionMode::Mixed => {
            let mut acc = 0.0f64;
            for (&p, &c) in p_row.iter().zip(c_vec) {
                acc = round_b32(acc + b16_mul(p, c));
            }
            round_b32(acc + b16_mul(p_bc, c_far))
        }
        PrecisionMode::B16 => {
            let mut acc = 0.0f64;
            for (&p, &c) in p_row.iter().zip(c_vec) {
                acc = round_b16(acc + b16_mul(p, c));
            }
            round_b16(acc + b16_mul(p_bc, c_far))
        }
    }
}

/// Binary32-contract mean of a slice: operands, partial sums and the final
/// division all rounded to binary32, accumulation in index order. This is
/// the addition-dominant mapping step's reduced-precision path.
pub fn b32_mean(values: &[f64]) -> f64 {
    let mut acc = 0.0f64;
    for &v in values {
        acc = round_b32(acc + round_b32(v));
    }
    round_b32(acc / values.len() as f64)
}
