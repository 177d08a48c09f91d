//! Scalar abstraction: every numeric routine in this crate is generic over a
//! floating-point type implementing [`Scalar`] (`f32` or `f64`).

use std::fmt;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Floating-point scalar usable throughout the crate.
///
/// Beyond the arithmetic supplied by `num_traits::Float`, implementors must
/// provide seeded draws from the standard normal and uniform distributions so
/// that samplers stay generic without leaking distribution bounds into every
/// signature.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
{
    /// Draw one sample from the standard normal distribution.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Draw one sample uniformly from `[lo, hi)`.
    fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: Self, hi: Self) -> Self;
}

impl Scalar for f32 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: Self, hi: Self) -> Self {
        if lo == hi {
            return lo;
        }
        rng.gen_range(lo..hi)
    }
}

impl Scalar for f64 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: Self, hi: Self) -> Self {
        if lo == hi {
            return lo;
        }
        rng.gen_range(lo..hi)
    }
}

/// Convert an `f64` constant into the working scalar type.
pub fn cast<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("f64 constant converts to scalar")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_respects_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let x = f64::uniform(&mut rng, -1.5, 2.5);
            assert!((-1.5..2.5).contains(&x));
        }
    }

    #[test]
    fn uniform_degenerate_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert_eq!(f64::uniform(&mut rng, 0.3, 0.3), 0.3);
    }

    #[test]
    fn normal_is_seed_deterministic() {
        let mut a = ChaCha8Rng::seed_from_u64(42);
        let mut b = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let x: f64 = f64::standard_normal(&mut a);
            let y: f64 = f64::standard_normal(&mut b);
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}
