//! The piecewise isometry `T` on `I₊ ⊔ I₋`: flow along the band away from the end a
//! point lies in, then switch sides with ε.
//!
//! Intervals are half-open `[a, b)`. A point at within-end offset `u = 0` of an
//! orientation-reversing end would be sent onto the right endpoint of the partner end,
//! which belongs to the next end; such points raise [`ExchangeError::EndpointHit`].

use std::collections::{BTreeMap, HashSet};

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::genperm::{EndRef, GeneralizedPermutation, Side};
use crate::rational::{format_rational, parse_rational, serde_pq, ParseRationalError, Rational};

pub const DEFAULT_RETURN_BUDGET: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExchangeError {
    #[error("width vector has {got} entries, permutation has {expected} bands")]
    WidthCount { expected: usize, got: usize },
    #[error("band {label} has non-positive width {width}")]
    NonPositiveWidth { label: String, width: String },
    #[error("switch condition violated: sum over A+ is {top}, sum over A- is {bottom}")]
    SwitchConditionViolated { top: String, bottom: String },
    #[error("unknown band label {0:?} in width file")]
    UnknownLabel(String),
    #[error("missing width for band {0:?}")]
    MissingWidth(String),
    #[error(transparent)]
    Parse(#[from] ParseRationalError),
    #[error("point {side}:{offset} is outside [0, {length})")]
    OutOfDomain {
        side: Side,
        offset: String,
        length: String,
    },
    #[error("point {side}:{offset} hits an endpoint of an orientation-reversing end")]
    EndpointHit { side: Side, offset: String },
    #[error("cut {0} is not in (0, |I+|]")]
    BadCut(String),
    #[error("a piece did not return within {0} steps")]
    NotReturning(usize),
    #[error("induced map does not pair its pieces into bands")]
    InducedStructure,
}

/// Exact band widths, indexed by band (the alphabet order of the permutation).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WidthVector(Vec<Rational>);

impl WidthVector {
    pub fn new(values: Vec<Rational>) -> Self {
        WidthVector(values)
    }

    pub fn from_labeled(
        perm: &GeneralizedPermutation,
        map: &BTreeMap<String, Rational>,
    ) -> Result<Self, ExchangeError> {
        for key in map.keys() {
            if perm.band_of(key).is_none() {
                return Err(ExchangeError::UnknownLabel(key.clone()));
            }
        }
        perm.alphabet()
            .iter()
            .map(|label| {
                map.get(label)
                    .cloned()
                    .ok_or_else(|| ExchangeError::MissingWidth(label.clone()))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(WidthVector)
    }

    pub fn to_labeled(&self, perm: &GeneralizedPermutation) -> BTreeMap<String, Rational> {
        perm.alphabet()
            .iter()
            .cloned()
            .zip(self.0.iter().cloned())
            .collect()
    }

    pub fn values(&self) -> &[Rational] {
        &self.0
    }

    pub fn get(&self, band: usize) -> &Rational {
        &self.0[band]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `|λ| = Σ λ_α` (the norm is additive on non-negative vectors).
    pub fn norm(&self) -> Rational {
        self.0.iter().sum()
    }

    pub fn normalized(&self) -> WidthVector {
        let n = self.norm();
        WidthVector(self.0.iter().map(|v| v / &n).collect())
    }

    pub fn scaled(&self, factor: &Rational) -> WidthVector {
        WidthVector(self.0.iter().map(|v| v * factor).collect())
    }
}

/// Width file format: `{"A": "3/7", "B": "1/7"}`.
pub fn parse_width_file(
    perm: &GeneralizedPermutation,
    raw: &BTreeMap<String, String>,
) -> Result<WidthVector, ExchangeError> {
    let parsed = raw
        .iter()
        .map(|(k, v)| Ok((k.clone(), parse_rational(v)?)))
        .collect::<Result<BTreeMap<_, _>, ExchangeError>>()?;
    WidthVector::from_labeled(perm, &parsed)
}

pub fn width_file(perm: &GeneralizedPermutation, widths: &WidthVector) -> BTreeMap<String, String> {
    widths
        .to_labeled(perm)
        .into_iter()
        .map(|(k, v)| (k, format_rational(&v)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Point {
    pub side: Side,
    #[serde(with = "serde_pq")]
    pub offset: Rational,
}

impl Point {
    pub fn new(side: Side, offset: Rational) -> Self {
        Point { side, offset }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrbitSegment {
    pub start: Point,
    /// `points[k] = T^k(start)`; `points[0] = start`.
    pub points: Vec<Point>,
    /// Index of the point whose image could not be resolved, if the orbit stopped early.
    pub hit_endpoint: Option<usize>,
}

/// One line of an orbit dump: `{"k":0,"side":"Top","offset":"0/1"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrbitLine {
    pub k: usize,
    pub side: Side,
    #[serde(with = "serde_pq")]
    pub offset: Rational,
}

impl OrbitSegment {
    pub fn lines(&self) -> impl Iterator<Item = OrbitLine> + '_ {
        self.points.iter().enumerate().map(|(k, p)| OrbitLine {
            k,
            side: p.side,
            offset: p.offset.clone(),
        })
    }
}

/// A half-open subinterval of one side.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Interval {
    pub side: Side,
    #[serde(with = "serde_pq")]
    pub start: Rational,
    #[serde(with = "serde_pq")]
    pub end: Rational,
}

impl Interval {
    pub fn len(&self) -> Rational {
        &self.end - &self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlap(&self, other: &Interval) -> Rational {
        if self.side != other.side {
            return Rational::zero();
        }
        let lo = std::cmp::max(&self.start, &other.start);
        let hi = std::cmp::min(&self.end, &other.end);
        if hi > lo {
            hi - lo
        } else {
            Rational::zero()
        }
    }
}

/// A maximal piece of the map in affine form: `t ↦ intercept + t` or `intercept − t`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AffinePiece {
    pub domain: Interval,
    pub target: Side,
    pub reversed: bool,
    pub intercept: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exchange {
    perm: GeneralizedPermutation,
    widths: WidthVector,
    top_starts: Vec<Rational>,
    bottom_starts: Vec<Rational>,
}

impl Exchange {
    pub fn build(perm: GeneralizedPermutation, widths: WidthVector) -> Result<Self, ExchangeError> {
        if widths.len() != perm.d() {
            return Err(ExchangeError::WidthCount {
                expected: perm.d(),
                got: widths.len(),
            });
        }
        for (band, w) in widths.values().iter().enumerate() {
            if !w.is_positive() {
                return Err(ExchangeError::NonPositiveWidth {
                    label: perm.label(band).to_string(),
                    width: format_rational(w),
                });
            }
        }
        let prefix = |ends: &[usize]| {
            let mut acc = Rational::zero();
            let mut out = Vec::with_capacity(ends.len() + 1);
            out.push(acc.clone());
            for &b in ends {
                acc += widths.get(b);
                out.push(acc.clone());
            }
            out
        };
        let top_starts = prefix(perm.top());
        let bottom_starts = prefix(perm.bottom());
        if top_starts.last() != bottom_starts.last() {
            let sum_class = |class| -> Rational {
                perm.bands_of_class(class)
                    .iter()
                    .map(|&b| widths.get(b).clone())
                    .sum()
            };
            return Err(ExchangeError::SwitchConditionViolated {
                top: format_rational(&sum_class(crate::genperm::OrientationClass::ReversingTop)),
                bottom: format_rational(&sum_class(
                    crate::genperm::OrientationClass::ReversingBottom,
                )),
            });
        }
        Ok(Exchange {
            perm,
            widths,
            top_starts,
            bottom_starts,
        })
    }

    pub fn perm(&self) -> &GeneralizedPermutation {
        &self.perm
    }

    pub fn widths(&self) -> &WidthVector {
        &self.widths
    }

    pub fn d(&self) -> usize {
        self.perm.d()
    }

    /// `|I₊| = |I₋|`.
    pub fn side_length(&self) -> &Rational {
        self.top_starts.last().unwrap()
    }

    /// `ℓ(I₊ ⊔ I₋) = 2|λ|`.
    pub fn total_measure(&self) -> Rational {
        self.side_length() * Rational::from_integer(2.into())
    }

    pub(crate) fn starts(&self, side: Side) -> &[Rational] {
        match side {
            Side::Top => &self.top_starts,
            Side::Bottom => &self.bottom_starts,
        }
    }

    pub fn end_interval(&self, end: EndRef) -> Interval {
        let s = self.starts(end.side);
        Interval {
            side: end.side,
            start: s[end.index].clone(),
            end: s[end.index + 1].clone(),
        }
    }

    /// The union `I(α)` of the two ends of a band.
    pub fn band_intervals(&self, band: usize) -> [Interval; 2] {
        let [a, b] = self.perm.ends(band);
        [self.end_interval(a), self.end_interval(b)]
    }

    /// The end containing `offset` on `side`, by binary search over exact endpoints.
    pub fn locate(&self, side: Side, offset: &Rational) -> Option<EndRef> {
        let starts = self.starts(side);
        if offset.is_negative() || offset >= starts.last().unwrap() {
            return None;
        }
        let index = starts.partition_point(|s| s <= offset) - 1;
        Some(EndRef { side, index })
    }

    fn locate_point(&self, t: &Point) -> Result<EndRef, ExchangeError> {
        self.locate(t.side, &t.offset)
            .ok_or_else(|| ExchangeError::OutOfDomain {
                side: t.side,
                offset: format_rational(&t.offset),
                length: format_rational(self.side_length()),
            })
    }

    pub fn apply(&self, t: &Point) -> Result<Point, ExchangeError> {
        let from = self.locate_point(t)?;
        let to = self.perm.partner(from);
        let band = self.perm.band_at(from);
        let u = &t.offset - &self.starts(from.side)[from.index];
        let v = if to.side == from.side {
            if u.is_zero() {
                return Err(ExchangeError::EndpointHit {
                    side: t.side,
                    offset: format_rational(&t.offset),
                });
            }
            self.widths.get(band) - u
        } else {
            u
        };
        Ok(Point {
            side: to.side.flip(),
            offset: &self.starts(to.side)[to.index] + v,
        })
    }

    pub fn apply_inverse(&self, t: &Point) -> Result<Point, ExchangeError> {
        let arrival = Point::new(t.side.flip(), t.offset.clone());
        let to = self.locate_point(&arrival)?;
        let from = self.perm.partner(to);
        let band = self.perm.band_at(to);
        let v = &t.offset - &self.starts(to.side)[to.index];
        let u = if from.side == to.side {
            if v.is_zero() {
                return Err(ExchangeError::EndpointHit {
                    side: t.side,
                    offset: format_rational(&t.offset),
                });
            }
            self.widths.get(band) - v
        } else {
            v
        };
        Ok(Point {
            side: from.side,
            offset: &self.starts(from.side)[from.index] + u,
        })
    }

    /// The image of `iv` if it lies inside a single end, with whether the map reverses it.
    pub fn map_interval(&self, iv: &Interval) -> Option<(Interval, bool)> {
        let from = self.locate(iv.side, &iv.start)?;
        let here = self.end_interval(from);
        if iv.end > here.end || iv.is_empty() {
            return None;
        }
        let to = self.perm.partner(from);
        let base = &self.starts(to.side)[to.index];
        let (u0, u1) = (&iv.start - &here.start, &iv.end - &here.start);
        let reversed = to.side == from.side;
        let (start, end) = if reversed {
            let w = self.widths.get(self.perm.band_at(from));
            (base + (w - &u1), base + (w - &u0))
        } else {
            (base + u0, base + u1)
        };
        Some((
            Interval {
                side: to.side.flip(),
                start,
                end,
            },
            reversed,
        ))
    }

    /// `n` iterates of `T`; an endpoint hit is recorded, not raised.
    pub fn orbit(&self, t: &Point, n: usize) -> Result<OrbitSegment, ExchangeError> {
        self.locate_point(t)?;
        let mut points = Vec::with_capacity(n + 1);
        points.push(t.clone());
        let mut hit_endpoint = None;
        for k in 0..n {
            match self.apply(&points[k]) {
                Ok(next) => points.push(next),
                Err(ExchangeError::EndpointHit { .. }) => {
                    hit_endpoint = Some(k);
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        Ok(OrbitSegment {
            start: t.clone(),
            points,
            hit_endpoint,
        })
    }

    /// The map as a list of maximal affine pieces, adjacent ends with the same affine
    /// law merged. Two exchanges are the same map iff these lists agree.
    pub fn affine_pieces(&self) -> Vec<AffinePiece> {
        let mut out: Vec<AffinePiece> = Vec::new();
        for side in [Side::Top, Side::Bottom] {
            for index in 0..self.perm.side(side).len() {
                let from = EndRef { side, index };
                let to = self.perm.partner(from);
                let band = self.perm.band_at(from);
                let a = &self.starts(side)[index];
                let b = &self.starts(to.side)[to.index];
                let reversed = to.side == side;
                let intercept = if reversed {
                    a + b + self.widths.get(band)
                } else {
                    b - a
                };
                let piece = AffinePiece {
                    domain: self.end_interval(from),
                    target: to.side.flip(),
                    reversed,
                    intercept,
                };
                match out.last_mut() {
                    Some(prev)
                        if prev.domain.side == side
                            && prev.domain.end == piece.domain.start
                            && prev.target == piece.target
                            && prev.reversed == piece.reversed
                            && prev.intercept == piece.intercept =>
                    {
                        prev.domain.end = piece.domain.end;
                    }
                    _ => out.push(piece),
                }
            }
        }
        out
    }

    /// Same map up to relabelling of bands.
    pub fn same_map(&self, other: &Exchange) -> bool {
        self.side_length() == other.side_length() && self.affine_pieces() == other.affine_pieces()
    }

    /// The induced map on `[0, cut)` of each side, computed by following every piece
    /// of the truncated intervals until it first returns. This is deliberately
    /// independent of the combinatorial Rauzy step.
    pub fn first_return_map(&self, cut: &Rational) -> Result<Exchange, ExchangeError> {
        self.first_return_map_with_budget(cut, DEFAULT_RETURN_BUDGET)
    }

    pub fn first_return_map_with_budget(
        &self,
        cut: &Rational,
        budget: usize,
    ) -> Result<Exchange, ExchangeError> {
        if !cut.is_positive() || cut > self.side_length() {
            return Err(ExchangeError::BadCut(format_rational(cut)));
        }
        let returned = self.return_pieces(cut, budget)?;
        self.assemble_induced(returned)
    }

    fn return_pieces(&self, cut: &Rational, budget: usize) -> Result<Vec<Tracked>, ExchangeError> {
        let mut work: Vec<Tracked> = Vec::new();
        for side in [Side::Top, Side::Bottom] {
            for index in 0..self.perm.side(side).len() {
                let end = self.end_interval(EndRef { side, index });
                if &end.start >= cut {
                    break;
                }
                let hi = std::cmp::min(&end.end, cut).clone();
                let len = &hi - &end.start;
                work.push(Tracked {
                    origin: Interval {
                        side,
                        start: end.start.clone(),
                        end: hi,
                    },
                    cur_side: side,
                    cur_start: end.start.clone(),
                    len,
                    reversed: false,
                    path: Vec::new(),
                });
            }
        }
        let mut done = Vec::new();
        while let Some(mut piece) = work.pop() {
            // `piece` lies inside a single end: advance it one step.
            self.advance(&mut piece);
            if piece.path.len() > budget {
                return Err(ExchangeError::NotReturning(budget));
            }
            let cur_end = &piece.cur_start + &piece.len;
            if &cur_end <= cut {
                done.push(piece);
                continue;
            }
            let mut rest = if &piece.cur_start < cut {
                let (inside, outside) = piece.split_at(cut);
                done.push(inside);
                outside
            } else {
                piece
            };
            // split the part in [cut, L) at end boundaries
            loop {
                let here = self
                    .locate(rest.cur_side, &rest.cur_start)
                    .expect("tracked piece stays in the domain");
                let boundary = self.starts(rest.cur_side)[here.index + 1].clone();
                if boundary < &rest.cur_start + &rest.len {
                    let (left, right) = rest.split_at(&boundary);
                    work.push(left);
                    rest = right;
                } else {
                    work.push(rest);
                    break;
                }
            }
        }
        Ok(done)
    }

    fn advance(&self, piece: &mut Tracked) {
        let from = self
            .locate(piece.cur_side, &piece.cur_start)
            .expect("tracked piece stays in the domain");
        let to = self.perm.partner(from);
        let band = self.perm.band_at(from);
        let u0 = &piece.cur_start - &self.starts(from.side)[from.index];
        let target_start = &self.starts(to.side)[to.index];
        piece.cur_start = if to.side == from.side {
            piece.reversed = !piece.reversed;
            target_start + self.widths.get(band) - u0 - &piece.len
        } else {
            target_start + u0
        };
        piece.cur_side = to.side.flip();
        piece.path.push(band);
    }

    fn assemble_induced(&self, pieces: Vec<Tracked>) -> Result<Exchange, ExchangeError> {
        let mut top: Vec<usize> = Vec::new();
        let mut bottom: Vec<usize> = Vec::new();
        let mut sorted: Vec<&Tracked> = pieces.iter().collect();
        sorted.sort_by(|a, b| a.origin.cmp(&b.origin));
        for (i, p) in sorted.iter().enumerate() {
            match p.origin.side {
                Side::Top => top.push(i),
                Side::Bottom => bottom.push(i),
            }
        }
        // partner of a piece P is ε(T(P)): same offsets, opposite side of the image
        let key = |side: Side, start: &Rational| (side, start.clone());
        let by_origin: std::collections::HashMap<(Side, Rational), usize> = sorted
            .iter()
            .enumerate()
            .map(|(i, p)| (key(p.origin.side, &p.origin.start), i))
            .collect();
        let mut partner = vec![usize::MAX; sorted.len()];
        for (i, p) in sorted.iter().enumerate() {
            let j = *by_origin
                .get(&key(p.cur_side.flip(), &p.cur_start))
                .ok_or(ExchangeError::InducedStructure)?;
            if sorted[j].len != p.len || j == i {
                return Err(ExchangeError::InducedStructure);
            }
            let same_side = sorted[j].origin.side == p.origin.side;
            if same_side != p.reversed {
                return Err(ExchangeError::InducedStructure);
            }
            partner[i] = j;
        }
        if (0..sorted.len()).any(|i| partner[partner[i]] != i) {
            return Err(ExchangeError::InducedStructure);
        }
        // bands: pairs (i, partner[i]) with i < partner[i]
        let bands: Vec<(usize, usize)> = (0..sorted.len())
            .filter(|&i| i < partner[i])
            .map(|i| (i, partner[i]))
            .collect();
        let original_band = |i: usize| {
            let o = &sorted[i].origin;
            let end = self.locate(o.side, &o.start).unwrap();
            self.perm.band_at(end)
        };
        let candidates: Vec<Vec<usize>> = bands
            .iter()
            .map(|&(i, j)| {
                let mut c = vec![original_band(i), original_band(j)];
                c.sort_unstable();
                c.dedup();
                c
            })
            .collect();
        let labels = match resolve_labels(&candidates, self.d()) {
            Some(assign) if bands.len() == self.d() => assign
                .iter()
                .map(|&b| self.perm.label(b).to_string())
                .collect::<Vec<_>>(),
            _ => fallback_labels(&bands, &sorted, &self.perm),
        };
        let mut label_of_piece = vec![String::new(); sorted.len()];
        for (k, &(i, j)) in bands.iter().enumerate() {
            label_of_piece[i] = labels[k].clone();
            label_of_piece[j] = labels[k].clone();
        }
        let top_labels: Vec<&str> = top.iter().map(|&i| label_of_piece[i].as_str()).collect();
        let bottom_labels: Vec<&str> = bottom.iter().map(|&i| label_of_piece[i].as_str()).collect();
        let perm = GeneralizedPermutation::new(&top_labels, &bottom_labels)
            .map_err(|_| ExchangeError::InducedStructure)?;
        let mut widths = vec![Rational::zero(); perm.d()];
        for (k, &(i, _)) in bands.iter().enumerate() {
            let band = perm.band_of(&labels[k]).unwrap();
            widths[band] = sorted[i].len.clone();
        }
        Exchange::build(perm, WidthVector(widths))
    }
}

/// A subinterval of the domain being followed forward until it first returns.
#[derive(Debug, Clone)]
struct Tracked {
    origin: Interval,
    cur_side: Side,
    cur_start: Rational,
    len: Rational,
    /// whether the current image runs right-to-left relative to `origin`
    reversed: bool,
    path: Vec<usize>,
}

impl Tracked {
    /// Splits at an absolute offset `at` of the current image (strictly inside it).
    fn split_at(self, at: &Rational) -> (Tracked, Tracked) {
        let left_len = at - &self.cur_start;
        let right_len = &self.len - &left_len;
        let (left_origin, right_origin) = if self.reversed {
            let mid = &self.origin.start + &right_len;
            (
                Interval {
                    side: self.origin.side,
                    start: mid.clone(),
                    end: self.origin.end.clone(),
                },
                Interval {
                    side: self.origin.side,
                    start: self.origin.start.clone(),
                    end: mid,
                },
            )
        } else {
            let mid = &self.origin.start + &left_len;
            (
                Interval {
                    side: self.origin.side,
                    start: self.origin.start.clone(),
                    end: mid.clone(),
                },
                Interval {
                    side: self.origin.side,
                    start: mid,
                    end: self.origin.end.clone(),
                },
            )
        };
        let left = Tracked {
            origin: left_origin,
            cur_side: self.cur_side,
            cur_start: self.cur_start.clone(),
            len: left_len,
            reversed: self.reversed,
            path: self.path.clone(),
        };
        let right = Tracked {
            origin: right_origin,
            cur_side: self.cur_side,
            cur_start: at.clone(),
            len: right_len,
            reversed: self.reversed,
            path: self.path,
        };
        (left, right)
    }
}

/// Each induced band may inherit the label of an original band containing one of its
/// ends. Resolve by unit propagation; `None` if ambiguous or conflicting.
fn resolve_labels(candidates: &[Vec<usize>], d: usize) -> Option<Vec<usize>> {
    let mut assigned: Vec<Option<usize>> = vec![None; candidates.len()];
    let mut used = vec![false; d];
    loop {
        let mut progress = false;
        for (k, cand) in candidates.iter().enumerate() {
            if assigned[k].is_some() {
                continue;
            }
            let free: Vec<usize> = cand.iter().copied().filter(|&b| !used[b]).collect();
            match free.len() {
                0 => return None,
                1 => {
                    assigned[k] = Some(free[0]);
                    used[free[0]] = true;
                    progress = true;
                }
                _ => {}
            }
        }
        if assigned.iter().all(Option::is_some) {
            return assigned.into_iter().collect();
        }
        if !progress {
            return None;
        }
    }
}

fn fallback_labels(
    bands: &[(usize, usize)],
    sorted: &[&Tracked],
    perm: &GeneralizedPermutation,
) -> Vec<String> {
    let mut seen = HashSet::new();
    bands
        .iter()
        .map(|&(i, _)| {
            let mut name: String = sorted[i].path.iter().map(|&b| perm.label(b)).collect::<Vec<_>>().join(".");
            while !seen.insert(name.clone()) {
                name.push('\'');
            }
            name
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;

    pub(crate) fn gp(top: &str, bottom: &str) -> GeneralizedPermutation {
        let t: Vec<&str> = top.split_whitespace().collect();
        let b: Vec<&str> = bottom.split_whitespace().collect();
        GeneralizedPermutation::new(&t, &b).unwrap()
    }

    fn rotation() -> Exchange {
        Exchange::build(gp("A B", "B A"), WidthVector::new(vec![rat(3, 7), rat(1, 7)])).unwrap()
    }

    fn aab() -> Exchange {
        Exchange::build(
            gp("A A B", "B C C"),
            WidthVector::new(vec![rat(1, 4), rat(1, 2), rat(1, 4)]),
        )
        .unwrap()
    }

    #[test]
    fn side_lengths() {
        assert_eq!(rotation().side_length(), &rat(4, 7));
        assert_eq!(aab().side_length(), &rat(1, 1));
    }

    #[test]
    fn switch_violation() {
        let err = Exchange::build(
            gp("A A B", "B C C"),
            WidthVector::new(vec![rat(1, 4), rat(1, 2), rat(1, 3)]),
        )
        .unwrap_err();
        assert!(matches!(err, ExchangeError::SwitchConditionViolated { .. }));
    }

    #[test]
    fn non_positive_width() {
        let err = Exchange::build(gp("A B", "B A"), WidthVector::new(vec![rat(0, 1), rat(1, 7)])).unwrap_err();
        assert!(matches!(err, ExchangeError::NonPositiveWidth { .. }));
    }

    #[test]
    fn apply_examples() {
        let x = rotation();
        let p = x.apply(&Point::new(Side::Top, rat(0, 1))).unwrap();
        assert_eq!(p, Point::new(Side::Top, rat(1, 7)));
        assert_eq!(x.apply_inverse(&p).unwrap(), Point::new(Side::Top, rat(0, 1)));

        let y = aab();
        let t = Point::new(Side::Top, rat(1, 8));
        let p = y.apply(&t).unwrap();
        assert_eq!(p, Point::new(Side::Bottom, rat(3, 8)));
        assert_eq!(y.apply_inverse(&p).unwrap(), t);
    }

    #[test]
    fn reversing_endpoint_hit() {
        let y = aab();
        let err = y.apply(&Point::new(Side::Top, rat(0, 1))).unwrap_err();
        assert!(matches!(err, ExchangeError::EndpointHit { .. }));
        let seg = y.orbit(&Point::new(Side::Top, rat(1, 4)), 3).unwrap();
        assert_eq!(seg.hit_endpoint, Some(0));
        assert_eq!(seg.points.len(), 1);
    }

    #[test]
    fn out_of_domain() {
        let err = rotation().apply(&Point::new(Side::Top, rat(4, 7))).unwrap_err();
        assert!(matches!(err, ExchangeError::OutOfDomain { .. }));
    }

    #[test]
    fn rotation_orbit() {
        let seg = rotation().orbit(&Point::new(Side::Top, rat(0, 1)), 3).unwrap();
        let offsets: Vec<_> = seg.points.iter().map(|p| p.offset.clone()).collect();
        assert_eq!(offsets, vec![rat(0, 1), rat(1, 7), rat(2, 7), rat(3, 7)]);
        assert!(seg.points.iter().all(|p| p.side == Side::Top));
        let zero = rotation().orbit(&Point::new(Side::Top, rat(2, 7)), 0).unwrap();
        assert_eq!(zero.points, vec![Point::new(Side::Top, rat(2, 7))]);
    }

    #[test]
    fn first_return_rauzy_cut_of_rotation() {
        let x = rotation();
        let induced = x.first_return_map(&rat(3, 7)).unwrap();
        assert_eq!(induced.perm(), &gp("A B", "B A"));
        assert_eq!(induced.widths().values(), &[rat(2, 7), rat(1, 7)]);
    }

    #[test]
    fn first_return_full_cut_is_identity_induction() {
        for x in [rotation(), aab()] {
            let same = x.first_return_map(x.side_length()).unwrap();
            assert_eq!(same, x);
        }
    }

    #[test]
    fn bad_cut() {
        assert!(matches!(
            rotation().first_return_map(&rat(5, 7)),
            Err(ExchangeError::BadCut(_))
        ));
    }

    #[test]
    fn affine_pieces_slopes() {
        let y = aab();
        for piece in y.affine_pieces() {
            assert_eq!(piece.reversed, piece.target != piece.domain.side);
        }
    }

    #[test]
    fn width_file_round_trip() {
        let x = rotation();
        let file = width_file(x.perm(), x.widths());
        assert_eq!(file.get("A").unwrap(), "3/7");
        let back = parse_width_file(x.perm(), &file).unwrap();
        assert_eq!(&back, x.widths());
        let mut bad = file.clone();
        bad.insert("Z".into(), "1/2".into());
        assert!(matches!(parse_width_file(x.perm(), &bad), Err(ExchangeError::UnknownLabel(_))));
    }
}
