//! Deterministic fixed-point transcendentals over big integers.
//!
//! The codec only recovers messages when sender and receiver compute
//! bit-identical probability tables and entropy gates, so every
//! transcendental the reference provider touches (temperature power
//! transform, base-2 entropy terms) is evaluated here in pure integer
//! arithmetic instead of platform libm. Values are scaled by `2^FRAC`;
//! all roundings are pinned (half away from zero) and documented at the
//! call sites that rely on them.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::sync::OnceLock;

/// Fractional bits of the fixed-point representation.
pub const FRAC: u64 = 128;

fn one_fp() -> BigInt {
    BigInt::one() << FRAC
}

/// `x / 2^k`, rounded half up (toward +inf on ties).
pub fn round_shr(x: &BigInt, k: u64) -> BigInt {
    if k == 0 {
        return x.clone();
    }
    let floor = x >> k;
    let rem = x - (&floor << k);
    let half = BigInt::one() << (k - 1);
    if rem >= half {
        floor + 1
    } else {
        floor
    }
}

/// `x / d` for `d > 0`, rounded half up.
pub fn round_div(x: &BigInt, d: &BigInt) -> BigInt {
    debug_assert!(d.is_positive());
    let doubled: BigInt = (x * 2) + d;
    doubled.div_floor(&(d * 2))
}

/// Fixed-point product: `(a * b) / 2^FRAC`, rounded.
pub fn fp_mul(a: &BigInt, b: &BigInt) -> BigInt {
    round_shr(&(a * b), FRAC)
}

/// Fixed-point quotient: `(a << FRAC) / b` for `b > 0`, rounded.
pub fn fp_div(a: &BigInt, b: &BigInt) -> BigInt {
    round_div(&(a << FRAC), b)
}

/// Exact rational -> fixed point, rounded half up at `2^-FRAC`.
pub fn to_fixed(q: &BigRational) -> BigInt {
    round_div(&(q.numer() << FRAC), q.denom())
}

/// `ln 2` at FRAC fractional bits, computed once from the atanh series
/// `ln 2 = 2 atanh(1/3)` with 64 guard bits.
pub fn ln2_fixed() -> &'static BigInt {
    static LN2: OnceLock<BigInt> = OnceLock::new();
    LN2.get_or_init(|| {
        let prec = FRAC + 64;
        let sum = atanh_series(&(BigInt::one() << prec).div_floor(&BigInt::from(3)), prec);
        round_shr(&(sum * 2), 64)
    })
}

/// `sum_{k>=0} z^(2k+1) / (2k+1)` in fixed point at `prec` fractional bits.
/// Converges for `|z| < 1`; callers keep `z <= 1/3` so ~prec/3 terms suffice.
fn atanh_series(z: &BigInt, prec: u64) -> BigInt {
    let z2 = round_shr(&(z * z), prec);
    let mut power = z.clone();
    let mut sum = z.clone();
    let mut k: u64 = 1;
    loop {
        power = round_shr(&(&power * &z2), prec);
        if power.is_zero() {
            break;
        }
        sum += round_div(&power, &BigInt::from(2 * k + 1));
        k += 1;
    }
    sum
}

/// Splits positive fixed-point `x` into `(k, m)` with `x = m * 2^k` and
/// mantissa `m` in `[2^FRAC, 2^(FRAC+1))`. Right shifts round.
fn normalize(x: &BigInt) -> (i64, BigInt) {
    debug_assert!(x.is_positive());
    let bits = x.bits() as i64;
    let k = bits - 1 - FRAC as i64;
    let mut m = if k >= 0 {
        round_shr(x, k as u64)
    } else {
        x << (-k) as u64
    };
    // Rounding up can push the mantissa to 2^(FRAC+1); renormalize.
    if m.bits() as i64 > FRAC as i64 + 1 {
        m = round_shr(&m, 1);
        return (k + 1, m);
    }
    (k, m)
}

/// Natural log of the mantissa `m` in `[1, 2)`: `2 atanh((m-1)/(m+1))`.
fn ln_mantissa(m: &BigInt) -> BigInt {
    let one = one_fp();
    if *m == one {
        return BigInt::zero();
    }
    let z = round_div(&((m - &one) << FRAC), &(m + &one));
    atanh_series(&z, FRAC) * 2
}

/// `ln(x)` for positive fixed-point `x`. Result is fixed point, signed.
pub fn fp_ln(x: &BigInt) -> BigInt {
    let (k, m) = normalize(x);
    ln2_fixed() * k + ln_mantissa(&m)
}

/// `log2(x)` for positive fixed-point `x`. Exact when `x` is a power of two:
/// the mantissa term vanishes and the result is the integer exponent.
pub fn fp_log2(x: &BigInt) -> BigInt {
    let (k, m) = normalize(x);
    let frac_part = fp_div(&ln_mantissa(&m), ln2_fixed());
    (BigInt::from(k) << FRAC) + frac_part
}

/// `e^r` for fixed-point `r` in `[0, ln 2)`, via the Taylor series.
fn exp_small(r: &BigInt) -> BigInt {
    debug_assert!(!r.is_negative());
    let mut sum = one_fp();
    let mut term = one_fp();
    let mut n: u64 = 1;
    loop {
        term = round_div(&fp_mul(&term, r), &BigInt::from(n));
        if term.is_zero() {
            break;
        }
        sum += &term;
        n += 1;
    }
    sum
}

/// `e^t` for signed fixed-point `t`: reduce by `t = j ln2 + r` and scale
/// `e^r` by `2^j`. Underflows to zero for very negative `t`.
pub fn fp_exp(t: &BigInt) -> BigInt {
    let ln2 = ln2_fixed();
    let j_big = t.div_floor(ln2);
    let r = t - &j_big * ln2;
    let e = exp_small(&r);
    // j is tiny for every probability this crate handles; the clamp only
    // guards against absurd caller inputs blowing up the shift.
    let j = j_big.to_i64().unwrap_or(if j_big.is_negative() {
        i64::MIN / 2
    } else {
        i64::MAX / 2
    });
    if j >= 0 {
        assert!(j <= 1 << 20, "fp_exp overflow: exponent {j} too large");
        e << j as u64
    } else if -j as u64 > FRAC + e.bits() {
        BigInt::zero()
    } else {
        round_shr(&e, (-j) as u64)
    }
}

/// `base^exponent` for positive rational `base` and rational `exponent`,
/// as `exp(exponent * ln base)`. Returns fixed point; zero base pins to zero.
pub fn fp_pow(base: &BigRational, exponent: &BigRational) -> BigInt {
    if base.is_zero() {
        return BigInt::zero();
    }
    debug_assert!(base.is_positive());
    if exponent.is_one() {
        return to_fixed(base);
    }
    let x = to_fixed(base);
    if x.is_zero() {
        // Base underflowed the representation; its power does too.
        return BigInt::zero();
    }
    let ln_x = fp_ln(&x);
    let t = round_div(&(&ln_x * exponent.numer()), exponent.denom());
    fp_exp(&t)
}

/// Fixed point -> nearest f64 (ties to even). Deterministic: never calls libm.
pub fn fixed_to_f64(x: &BigInt) -> f64 {
    let neg = x.is_negative();
    let mag = x.magnitude();
    if mag.is_zero() {
        return 0.0;
    }
    let bits = mag.bits();
    let (mantissa, exp) = if bits <= 53 {
        (mag.to_u64().expect("<=53 bits"), -(FRAC as i64))
    } else {
        let shift = bits - 53;
        let top = mag >> shift;
        let rem = mag - (&top << shift);
        let half = num_bigint::BigUint::one() << (shift - 1);
        let mut t = top.to_u64().expect("53 bits");
        if rem > half || (rem == half && t & 1 == 1) {
            t += 1; // may become 2^53, still exact in f64
        }
        (t, shift as i64 - FRAC as i64)
    };
    let v = mantissa as f64 * exp2i(exp);
    if neg {
        -v
    } else {
        v
    }
}

/// Probability in [0, 1] -> f64 through the fixed-point representation,
/// so the conversion is identical on every platform.
pub fn prob_to_f64(q: &BigRational) -> f64 {
    fixed_to_f64(&to_fixed(q))
}

/// `2^e` as f64 by exact repeated squaring (powers of two never round).
fn exp2i(e: i64) -> f64 {
    let mut result = 1.0f64;
    let mut base = if e >= 0 { 2.0f64 } else { 0.5f64 };
    let mut n = e.unsigned_abs();
    while n > 0 {
        if n & 1 == 1 {
            result *= base;
        }
        base *= base;
        n >>= 1;
    }
    result
}
