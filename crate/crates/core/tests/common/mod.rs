#![allow(dead_code)]

use linvex::genperm::default_label;
use linvex::{Exchange, GeneralizedPermutation, Rational, WidthVector};
use num_bigint::BigInt;
use num_traits::Zero;
use rand::seq::SliceRandom;
use rand::{Rng, RngCore};

/// A random permutation on `d` bands that admits widths; `non_classical` forces
/// both A+ and A- to be non-empty.
pub fn random_perm(rng: &mut impl RngCore, d: usize, non_classical: bool) -> GeneralizedPermutation {
    loop {
        let mut ends: Vec<String> = (0..d).flat_map(|i| [default_label(i), default_label(i)]).collect();
        ends.shuffle(rng);
        let l = rng.random_range(1..2 * d);
        let Ok(p) = GeneralizedPermutation::new(&ends[..l], &ends[l..]) else {
            continue;
        };
        if !p.admits_widths() || (non_classical && !p.is_non_classical()) {
            continue;
        }
        return p;
    }
}

/// Integer widths in `1..=bound`, then A+ and A- rescaled to the mean of their sums
/// (denominators cleared by `2 S+ S-`).
pub fn random_widths(rng: &mut impl RngCore, p: &GeneralizedPermutation, bound: i64) -> WidthVector {
    use linvex::OrientationClass::*;
    let raw: Vec<BigInt> = (0..p.d()).map(|_| BigInt::from(rng.random_range(1..=bound))).collect();
    let sum = |c| -> BigInt { (0..p.d()).filter(|&b| p.class(b) == c).map(|b| raw[b].clone()).sum() };
    let (sp, sm) = (sum(ReversingTop), sum(ReversingBottom));
    let w: Vec<Rational> = (0..p.d())
        .map(|b| match p.class(b) {
            Preserving => big(&raw[b] * 2 * one_if_zero(&sp) * one_if_zero(&sm)),
            ReversingTop => big(&raw[b] * &sm * (&sp + &sm)),
            ReversingBottom => big(&raw[b] * &sp * (&sp + &sm)),
        })
        .collect();
    WidthVector::new(w)
}

pub fn random_exchange(rng: &mut impl RngCore, dmin: usize, dmax: usize, non_classical: bool, bound: i64) -> Exchange {
    let d = rng.random_range(dmin..=dmax);
    let p = random_perm(rng, d, non_classical);
    let w = random_widths(rng, &p, bound);
    Exchange::build(p, w).expect("switch condition holds by construction")
}

fn big(v: BigInt) -> Rational {
    Rational::from_integer(v)
}

fn one_if_zero(v: &BigInt) -> BigInt {
    if v.is_zero() {
        BigInt::from(1)
    } else {
        v.clone()
    }
}

/// Like [`random_widths`] but with entries up to `2^bits`.
pub fn random_widths_bits(rng: &mut impl RngCore, p: &GeneralizedPermutation, bits: u32) -> WidthVector {
    use linvex::OrientationClass::*;
    let draw = |rng: &mut dyn RngCore| -> BigInt {
        let words = bits.div_ceil(64);
        let mut v = BigInt::zero();
        for _ in 0..words {
            v = (v << 64) + BigInt::from(rng.next_u64());
        }
        (v >> (64 * words - bits)) + 1
    };
    let raw: Vec<BigInt> = (0..p.d()).map(|_| draw(rng)).collect();
    let sum = |c| -> BigInt { (0..p.d()).filter(|&b| p.class(b) == c).map(|b| raw[b].clone()).sum() };
    let (sp, sm) = (sum(ReversingTop), sum(ReversingBottom));
    WidthVector::new(
        (0..p.d())
            .map(|b| match p.class(b) {
                Preserving => big(&raw[b] * 2 * one_if_zero(&sp) * one_if_zero(&sm)),
                ReversingTop => big(&raw[b] * &sm * (&sp + &sm)),
                ReversingBottom => big(&raw[b] * &sp * (&sp + &sm)),
            })
            .collect(),
    )
}
