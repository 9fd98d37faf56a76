//! Piecewise isometries of `I₊ ⊔ I₋` with slopes ±1, closed under composition. Used
//! for exact powers `xⁿ` and their displacement integrals.
//!
//! Endpoints are ignored: two maps that agree off a finite set are equal here.

use num_traits::{Signed, Zero};

use crate::exchange::{Exchange, Interval};
use crate::genperm::Side;
use crate::rational::{integral_abs_affine_reversal, Rational};

pub const DEFAULT_PIECE_LIMIT: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("piece count {pieces} exceeds the limit {limit}")]
pub struct PartitionBlowup {
    pub pieces: usize,
    pub limit: usize,
}

/// `t ↦ intercept + t` (or `intercept − t` when reversed) on `domain`, landing on `target`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Piece {
    pub domain: Interval,
    pub target: Side,
    pub reversed: bool,
    pub intercept: Rational,
}

impl Piece {
    fn eval(&self, t: &Rational) -> Rational {
        if self.reversed {
            &self.intercept - t
        } else {
            &self.intercept + t
        }
    }

    fn image(&self) -> (Rational, Rational) {
        let (a, b) = (self.eval(&self.domain.start), self.eval(&self.domain.end));
        if self.reversed {
            (b, a)
        } else {
            (a, b)
        }
    }

    /// The preimage of `[u, v)` (a sub-range of the image) as an interval of the domain.
    fn preimage(&self, u: &Rational, v: &Rational) -> (Rational, Rational) {
        if self.reversed {
            (&self.intercept - v, &self.intercept - u)
        } else {
            (u - &self.intercept, v - &self.intercept)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PiecewiseIsometry {
    side_length: Rational,
    /// Sorted by domain, covering both sides.
    pieces: Vec<Piece>,
}

impl PiecewiseIsometry {
    pub fn identity(side_length: Rational) -> Self {
        let pieces = [Side::Top, Side::Bottom]
            .into_iter()
            .map(|side| Piece {
                domain: Interval {
                    side,
                    start: Rational::zero(),
                    end: side_length.clone(),
                },
                target: side,
                reversed: false,
                intercept: Rational::zero(),
            })
            .collect();
        PiecewiseIsometry {
            side_length,
            pieces,
        }
    }

    pub fn from_exchange(x: &Exchange) -> Self {
        let pieces = x
            .affine_pieces()
            .into_iter()
            .map(|p| Piece {
                domain: p.domain,
                target: p.target,
                reversed: p.reversed,
                intercept: p.intercept,
            })
            .collect();
        PiecewiseIsometry {
            side_length: x.side_length().clone(),
            pieces,
        }
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn side_length(&self) -> &Rational {
        &self.side_length
    }

    /// `self ∘ first`.
    pub fn after(&self, first: &PiecewiseIsometry, limit: usize) -> Result<Self, PartitionBlowup> {
        let mut out: Vec<Piece> = Vec::new();
        for f in &first.pieces {
            let (lo, hi) = f.image();
            let side = f.target;
            let start = self
                .pieces
                .partition_point(|g| (g.domain.side, &g.domain.end) <= (side, &lo));
            for g in &self.pieces[start..] {
                if g.domain.side != side || g.domain.start >= hi {
                    break;
                }
                let u = std::cmp::max(&lo, &g.domain.start);
                let v = std::cmp::min(&hi, &g.domain.end);
                if u >= v {
                    continue;
                }
                let (a, b) = f.preimage(u, v);
                // g(f(t)) = c_g ± (c_f ± t)
                let intercept = if g.reversed {
                    &g.intercept - &f.intercept
                } else {
                    &g.intercept + &f.intercept
                };
                out.push(Piece {
                    domain: Interval {
                        side: f.domain.side,
                        start: a,
                        end: b,
                    },
                    target: g.target,
                    reversed: f.reversed != g.reversed,
                    intercept,
                });
            }
            if out.len() > limit {
                return Err(PartitionBlowup {
                    pieces: out.len(),
                    limit,
                });
            }
        }
        out.sort();
        let mut merged: Vec<Piece> = Vec::with_capacity(out.len());
        for p in out {
            match merged.last_mut() {
                Some(q)
                    if q.domain.side == p.domain.side
                        && q.domain.end == p.domain.start
                        && q.target == p.target
                        && q.reversed == p.reversed
                        && q.intercept == p.intercept =>
                {
                    q.domain.end = p.domain.end;
                }
                _ => merged.push(p),
            }
        }
        Ok(PiecewiseIsometry {
            side_length: self.side_length.clone(),
            pieces: merged,
        })
    }

    /// `selfⁿ` by repeated squaring.
    pub fn power(&self, mut n: u64, limit: usize) -> Result<Self, PartitionBlowup> {
        let mut result = PiecewiseIsometry::identity(self.side_length.clone());
        let mut base = self.clone();
        while n > 0 {
            if n & 1 == 1 {
                result = base.after(&result, limit)?;
            }
            n >>= 1;
            if n > 0 {
                base = base.after(&base, limit)?;
            }
        }
        Ok(result)
    }

    pub fn is_identity(&self) -> bool {
        self.pieces
            .iter()
            .all(|p| p.target == p.domain.side && !p.reversed && p.intercept.is_zero())
    }

    /// `∫ |f(t) − t| dℓ`, charging `penalty` per unit length where `f` changes side.
    pub fn displacement(&self, penalty: &Rational) -> Rational {
        let mut total = Rational::zero();
        for p in &self.pieces {
            let len = p.domain.len();
            if p.target != p.domain.side {
                total += penalty * &len;
            } else if p.reversed {
                total += integral_abs_affine_reversal(&p.domain.start, &p.domain.end, &p.intercept);
            } else {
                total += p.intercept.abs() * &len;
            }
        }
        total
    }
}
