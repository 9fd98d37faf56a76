//! An integer copy of an exchange for long orbits.
//!
//! All endpoints are scaled to even integers, so odd offsets never sit on an endpoint
//! and the orientation-reversing convention never bites. The scaling is exact: a
//! lattice point `k` is the rational offset `k / scale`.

use num_bigint::BigInt;
use num_traits::{One, ToPrimitive};

use crate::exchange::{Exchange, Interval};
use crate::genperm::{EndRef, Side};
use crate::rational::{lcm_of_denominators, Rational};

/// Headroom so that sums of a few coordinates never overflow.
const MAX_COORD: i128 = 1 << 120;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("lattice scale does not fit in 128-bit integers")]
pub struct LatticeOverflow;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Link {
    to_side: Side,
    to_start: i128,
    same_side: bool,
    width: i128,
}

#[derive(Debug, Clone)]
pub struct LatticeExchange {
    scale: BigInt,
    side_length: i128,
    top_starts: Vec<i128>,
    bottom_starts: Vec<i128>,
    top_links: Vec<Link>,
    bottom_links: Vec<Link>,
    top_bands: Vec<usize>,
    bottom_bands: Vec<usize>,
}

impl LatticeExchange {
    /// `refine` multiplies the resolution (start points are drawn from the finer grid).
    pub fn new(x: &Exchange, refine: u64) -> Result<Self, LatticeOverflow> {
        let lcm = lcm_of_denominators(x.widths().values());
        let scale: BigInt = lcm * BigInt::from(refine) * BigInt::from(2);
        let to_int = |r: &Rational| -> Result<i128, LatticeOverflow> {
            let v = r * Rational::from_integer(scale.clone());
            debug_assert!(v.denom().is_one());
            v.to_integer().to_i128().filter(|v| v.abs() < MAX_COORD).ok_or(LatticeOverflow)
        };
        let conv = |side: Side| -> Result<Vec<i128>, LatticeOverflow> {
            let n = x.perm().side(side).len();
            (0..=n)
                .map(|i| {
                    let end = EndRef { side, index: i.min(n - 1) };
                    let iv = x.end_interval(end);
                    to_int(if i == n { &iv.end } else { &iv.start })
                })
                .collect()
        };
        let top_starts = conv(Side::Top)?;
        let bottom_starts = conv(Side::Bottom)?;
        let starts = |s: Side| match s {
            Side::Top => &top_starts,
            Side::Bottom => &bottom_starts,
        };
        let links = |side: Side| -> Vec<Link> {
            (0..x.perm().side(side).len())
                .map(|index| {
                    let from = EndRef { side, index };
                    let to = x.perm().partner(from);
                    Link {
                        to_side: to.side,
                        to_start: starts(to.side)[to.index],
                        same_side: to.side == side,
                        width: starts(side)[index + 1] - starts(side)[index],
                    }
                })
                .collect()
        };
        let top_links = links(Side::Top);
        let bottom_links = links(Side::Bottom);
        Ok(LatticeExchange {
            side_length: *top_starts.last().unwrap(),
            scale,
            top_links,
            bottom_links,
            top_bands: x.perm().top().to_vec(),
            bottom_bands: x.perm().bottom().to_vec(),
            top_starts,
            bottom_starts,
        })
    }

    pub fn scale(&self) -> &BigInt {
        &self.scale
    }

    pub fn side_length(&self) -> i128 {
        self.side_length
    }

    pub fn to_lattice(&self, r: &Rational) -> Option<i128> {
        let v = r * Rational::from_integer(self.scale.clone());
        if v.denom().is_one() {
            v.to_integer().to_i128()
        } else {
            None
        }
    }

    pub fn to_rational(&self, k: i128) -> Rational {
        Rational::new(BigInt::from(k), self.scale.clone())
    }

    fn starts(&self, side: Side) -> &[i128] {
        match side {
            Side::Top => &self.top_starts,
            Side::Bottom => &self.bottom_starts,
        }
    }

    fn links(&self, side: Side) -> &[Link] {
        match side {
            Side::Top => &self.top_links,
            Side::Bottom => &self.bottom_links,
        }
    }

    #[inline]
    pub fn locate(&self, side: Side, offset: i128) -> usize {
        let starts = self.starts(side);
        starts[1..].partition_point(|&s| s <= offset)
    }

    pub fn band_at(&self, side: Side, index: usize) -> usize {
        match side {
            Side::Top => self.top_bands[index],
            Side::Bottom => self.bottom_bands[index],
        }
    }

    /// One step of the map. `offset` must be odd and in `[0, side_length)`.
    #[inline]
    pub fn apply(&self, side: Side, offset: i128) -> (Side, i128) {
        let i = self.locate(side, offset);
        let link = self.links(side)[i];
        let u = offset - self.starts(side)[i];
        let v = if link.same_side { link.width - u } else { u };
        (link.to_side.flip(), link.to_start + v)
    }

    /// The image of `[start, start + len)` if it lies inside a single end.
    pub fn map_interval(&self, side: Side, start: i128, len: i128) -> Option<(Side, i128)> {
        let i = self.locate(side, start);
        let starts = self.starts(side);
        if start + len > starts[i + 1] {
            return None;
        }
        let link = self.links(side)[i];
        let u = start - starts[i];
        let v = if link.same_side { link.width - u - len } else { u };
        Some((link.to_side.flip(), link.to_start + v))
    }

    pub fn interval_to_lattice(&self, iv: &Interval) -> Option<(Side, i128, i128)> {
        let a = self.to_lattice(&iv.start)?;
        let b = self.to_lattice(&iv.end)?;
        Some((iv.side, a, b - a))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exchange::{Point, WidthVector};
    use crate::genperm::GeneralizedPermutation;
    use crate::rational::rat;

    #[test]
    fn agrees_with_exact_map() {
        let p = GeneralizedPermutation::new(&["A", "A", "B", "D"], &["B", "C", "C", "D"]).unwrap();
        let x = Exchange::build(p, WidthVector::new(vec![rat(1, 5), rat(2, 7), rat(1, 5), rat(3, 11)])).unwrap();
        let lat = LatticeExchange::new(&x, 3).unwrap();
        let mut side = Side::Bottom;
        let mut k = 1003;
        let mut t = Point::new(side, lat.to_rational(k));
        for _ in 0..500 {
            let (s2, k2) = lat.apply(side, k);
            t = x.apply(&t).unwrap();
            assert_eq!(t, Point::new(s2, lat.to_rational(k2)));
            side = s2;
            k = k2;
        }
    }
}
