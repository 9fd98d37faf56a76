//! Cyclic approximations and rigidity times.
//!
//! A tower over a preserving band `α` at depth `n` has base `J = I(α, n)` (one interval
//! on each side) and height `N = |Q_n(α)|`. Verification runs the original map on an
//! integer lattice, so every check is exact.

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::exchange::{Exchange, Interval};
use crate::genperm::{OrientationClass, Side};
use crate::isometry::{PartitionBlowup, PiecewiseIsometry};
use crate::lattice::{LatticeExchange, LatticeOverflow};
use crate::rational::{int, serde_pq, Rational};
use crate::rauzy::{nu, Expander, SplitError};

/// Towers taller than this are reported as unverifiable rather than iterated.
pub const DEFAULT_MAX_HEIGHT: u64 = 20_000_000;

/// Below this many levels the union measure is also computed by sorting and merging.
const UNION_CROSS_CHECK: u64 = 50_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ApproxError {
    #[error("delta must lie strictly between 0 and 1")]
    InvalidDelta,
    #[error("no qualifying stage within {0} splits")]
    BudgetExceeded(usize),
    #[error("expansion halted after {at} splits: {cause}")]
    ExpansionHalted { at: usize, cause: SplitError },
    #[error("band {0} is not orientation preserving at the requested depth")]
    NotPreserving(String),
    #[error(transparent)]
    Lattice(#[from] LatticeOverflow),
    #[error(transparent)]
    Blowup(#[from] PartitionBlowup),
}

/// How a stage qualified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TowerCriterion {
    /// `Q` positive and `λ⁽ⁿ⁾_α > (1 − ξ)|λ⁽ⁿ⁾|` with `ξ = min(δ/4, δ/(2ν + 1))`.
    Dominance,
    /// The exact union and overlap read off the stage both exceed `1 − δ`.
    Measure,
    /// Built by hand at a given depth, no search.
    Manual,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CyclicTower {
    pub band: usize,
    pub label: String,
    pub depth: usize,
    /// `N = |Q_n(α)|`.
    pub height: BigInt,
    /// The top component first.
    pub base: [Interval; 2],
    pub delta: Rational,
    pub xi: Option<Rational>,
    pub nu: Option<Rational>,
    pub criterion: TowerCriterion,
}

impl CyclicTower {
    /// `ℓ(J)`.
    pub fn base_measure(&self) -> Rational {
        self.base[0].len() + self.base[1].len()
    }

    /// The measures the tower promises, read off the stage without any iteration:
    /// the normalized union `N ℓ(J) / 2|I₊|` and the overlap ratio `ℓ(J ∩ xᴺJ) / ℓ(J)`.
    pub fn predicted_measures(&self, x: &Exchange) -> (Rational, Rational) {
        let w = self.base[0].len();
        let union = Rational::from_integer(self.height.clone()) * &w / x.side_length();
        let shift = (&self.base[0].start - &self.base[1].start).abs();
        let overlap = if shift < w { (&w - &shift) / &w } else { Rational::zero() };
        (union, overlap)
    }

    /// The tower over `band` after exactly `depth` splits, whatever its quality.
    pub fn at_depth(x: &Exchange, depth: usize, band: usize, delta: &Rational) -> Result<Self, ApproxError> {
        check_delta(delta)?;
        let mut ex = Expander::new(x);
        for _ in 0..depth {
            ex.step().map_err(|cause| ApproxError::ExpansionHalted {
                at: ex.depth(),
                cause,
            })?;
        }
        tower_from(&ex, band, delta.clone(), None, nu(ex.q()).ok(), TowerCriterion::Manual)
    }

    pub fn certificate(&self, x: &Exchange, verification: &TowerVerification) -> TowerCertificate {
        TowerCertificate {
            band: self.label.clone(),
            depth: self.depth,
            height: self.height.to_string(),
            base_intervals: self.base.to_vec(),
            delta: crate::rational::format_rational(&self.delta),
            xi: self.xi.as_ref().map(crate::rational::format_rational),
            nu: self.nu.as_ref().map(crate::rational::format_rational),
            criterion: self.criterion,
            predicted: {
                let (u, o) = self.predicted_measures(x);
                PredictedMeasures { union: u, overlap: o }
            },
            verification: verification.clone(),
        }
    }
}

fn check_delta(delta: &Rational) -> Result<(), ApproxError> {
    if delta.is_positive() && delta < &Rational::one() {
        Ok(())
    } else {
        Err(ApproxError::InvalidDelta)
    }
}

fn tower_from(
    ex: &Expander,
    band: usize,
    delta: Rational,
    xi: Option<Rational>,
    nu: Option<Rational>,
    criterion: TowerCriterion,
) -> Result<CyclicTower, ApproxError> {
    let x = ex.current();
    let perm = x.perm();
    if perm.class(band) != OrientationClass::Preserving {
        return Err(ApproxError::NotPreserving(perm.label(band).to_string()));
    }
    let mut base = x.band_intervals(band);
    base.sort_by_key(|iv| iv.side);
    Ok(CyclicTower {
        band,
        label: perm.label(band).to_string(),
        depth: ex.depth(),
        height: ex.q().column_norm(band),
        base,
        delta,
        xi,
        nu,
        criterion,
    })
}

/// `ξ = min(δ/4, δ/(2ν + 1))`.
pub fn xi_for(delta: &Rational, nu: &Rational) -> Rational {
    let a = delta / int(4);
    let b = delta / (nu * int(2) + int(1));
    std::cmp::min(a, b)
}

/// The per-stage test of the tower search, reusable by callers that drive their own
/// expansion. A stage qualifies through the dominance condition or, failing that,
/// through its exact predicted measures.
#[derive(Debug, Clone)]
pub struct TowerScan {
    delta: Rational,
    /// `1 − δ/4`, a cheap necessary condition checked before `ν`.
    loose: Rational,
    one_minus_delta: Rational,
    /// `|I₊|` of the exchange being expanded.
    origin_length: Rational,
    /// Positivity is permanent once reached, so it is only tested until it holds.
    positive: bool,
}

impl TowerScan {
    pub fn new(x: &Exchange, delta: &Rational) -> Result<Self, ApproxError> {
        check_delta(delta)?;
        Ok(TowerScan {
            delta: delta.clone(),
            loose: Rational::one() - delta / int(4),
            one_minus_delta: Rational::one() - delta,
            origin_length: x.side_length().clone(),
            positive: false,
        })
    }

    pub fn check(&mut self, ex: &Expander) -> Option<CyclicTower> {
        self.dominance(ex).or_else(|| self.measure(ex))
    }

    /// `Q` positive and a preserving band holding more than `1 − ξ` of the induced length.
    fn dominance(&mut self, ex: &Expander) -> Option<CyclicTower> {
        let x = ex.current();
        let total = x.side_length();
        let alpha = x
            .perm()
            .bands_of_class(OrientationClass::Preserving)
            .into_iter()
            .find(|&b| x.widths().get(b) > &(&self.loose * total))?;
        self.positive = self.positive || ex.q().is_positive();
        if !self.positive {
            return None;
        }
        let nu = nu(ex.q()).expect("Q is positive");
        let xi = xi_for(&self.delta, &nu);
        if x.widths().get(alpha) <= &((Rational::one() - &xi) * total) {
            return None;
        }
        let t = tower_from(ex, alpha, self.delta.clone(), Some(xi), Some(nu), TowerCriterion::Dominance);
        Some(t.expect("alpha is preserving"))
    }

    /// A preserving band whose tower already has union and overlap above `1 − δ`.
    fn measure(&self, ex: &Expander) -> Option<CyclicTower> {
        let x = ex.current();
        let alpha = x.perm().bands_of_class(OrientationClass::Preserving).into_iter().find(|&b| {
            let w = x.widths().get(b);
            let [e0, e1] = x.band_intervals(b);
            let shift = (&e0.start - &e1.start).abs();
            if (w - &shift) <= &self.one_minus_delta * w {
                return false;
            }
            let union = Rational::from_integer(ex.q().column_norm(b)) * w / &self.origin_length;
            union > self.one_minus_delta
        })?;
        let t = tower_from(ex, alpha, self.delta.clone(), None, nu(ex.q()).ok(), TowerCriterion::Measure);
        Some(t.expect("alpha is preserving"))
    }
}

/// Expands `x` until a stage qualifies under [`TowerScan`].
pub fn find_cyclic_tower(x: &Exchange, delta: &Rational, budget: usize) -> Result<CyclicTower, ApproxError> {
    let mut scan = TowerScan::new(x, delta)?;
    let mut ex = Expander::new(x);
    loop {
        if let Some(t) = scan.check(&ex) {
            return Ok(t);
        }
        if ex.depth() >= budget {
            return Err(ApproxError::BudgetExceeded(budget));
        }
        ex.step().map_err(|cause| ApproxError::ExpansionHalted {
            at: ex.depth(),
            cause,
        })?;
    }
}

/// One tower per `δ` in `deltas`, reusing a single expansion. Deltas should be
/// decreasing; each search resumes one split after the previous tower.
pub fn tower_ladder(x: &Exchange, deltas: &[Rational], budget: usize) -> Vec<Result<CyclicTower, ApproxError>> {
    let mut out = Vec::with_capacity(deltas.len());
    let mut ex = Expander::new(x);
    let mut halted: Option<ApproxError> = None;
    for delta in deltas {
        if let Some(e) = &halted {
            out.push(Err(e.clone()));
            continue;
        }
        let mut scan = match TowerScan::new(x, delta) {
            Ok(s) => s,
            Err(e) => {
                out.push(Err(e));
                continue;
            }
        };
        loop {
            if let Some(t) = scan.check(&ex) {
                out.push(Ok(t));
                if let Err(cause) = ex.step() {
                    halted = Some(ApproxError::ExpansionHalted { at: ex.depth(), cause });
                }
                break;
            }
            if ex.depth() >= budget {
                out.push(Err(ApproxError::BudgetExceeded(budget)));
                break;
            }
            if let Err(cause) = ex.step() {
                let e = ApproxError::ExpansionHalted { at: ex.depth(), cause };
                out.push(Err(e.clone()));
                halted = Some(e);
                break;
            }
        }
    }
    out
}

/// The outcome of checking properties (1)–(4).
///
/// Two independent checks feed it. The inductive check walks the stage: at every depth
/// each end of `x_{k+1}` must be carried by `x_k` through single ends and back into the
/// shrunken domain exactly as `x_{k+1}` says, which by induction gives the first-return
/// time of every `I(β, k)` under `x`, with linear, domain-avoiding levels. The direct
/// check iterates `x` itself on the levels `xᵏ(J)` and runs whenever `N` is small enough.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TowerVerification {
    /// `J ∩ xᵏ(J) = ∅` for `0 < k < N`.
    pub p1: bool,
    /// `x` is a single isometry on each `xᵏ(J)`, `0 ≤ k < N`.
    pub p2: bool,
    /// `ℓ(⋃ xᵏ(J)) > 1 − δ`, normalized.
    pub p3: bool,
    /// `ℓ(J ∩ xᴺ(J)) > (1 − δ) ℓ(J)`.
    pub p4: bool,
    pub measures: TowerMeasures,
    /// Why the inductive check failed, if it did.
    pub inductive_failure: Option<String>,
    /// Whether the levels were also iterated one by one, or why not.
    pub direct: DirectCheck,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DirectCheck {
    Agreed,
    Disagreed,
    Skipped(String),
}

impl TowerVerification {
    pub fn passed(&self) -> bool {
        self.p1 && self.p2 && self.p3 && self.p4
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TowerMeasures {
    /// Normalized union of the levels, when determined.
    #[serde(with = "opt_pq")]
    pub union: Option<Rational>,
    /// `ℓ(J ∩ xᴺ(J)) / ℓ(J)`, when `xᴺ(J)` was reached.
    #[serde(with = "opt_pq")]
    pub overlap: Option<Rational>,
    /// First `k` where (1) or (2) failed.
    pub first_failure: Option<u64>,
    /// Whether the union was also computed by merging all levels.
    pub union_merged: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictedMeasures {
    #[serde(with = "serde_pq")]
    pub union: Rational,
    #[serde(with = "serde_pq")]
    pub overlap: Rational,
}

/// The JSON tower certificate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TowerCertificate {
    pub band: String,
    pub depth: usize,
    pub height: String,
    pub base_intervals: Vec<Interval>,
    pub delta: String,
    pub xi: Option<String>,
    pub nu: Option<String>,
    pub criterion: TowerCriterion,
    pub predicted: PredictedMeasures,
    pub verification: TowerVerification,
}

impl TowerCertificate {
    /// Rebuilds the tower it certifies. The exchange is needed for the band index.
    pub fn tower(&self, x: &Exchange) -> Option<CyclicTower> {
        let band = x.perm().band_of(&self.band)?;
        let parse = |s: &String| crate::rational::parse_rational(s).ok();
        let [top, bottom] = <[Interval; 2]>::try_from(self.base_intervals.clone()).ok()?;
        Some(CyclicTower {
            band,
            label: self.band.clone(),
            depth: self.depth,
            height: self.height.parse().ok()?,
            base: [top, bottom],
            delta: parse(&self.delta)?,
            xi: match &self.xi {
                Some(s) => Some(parse(s)?),
                None => None,
            },
            nu: match &self.nu {
                Some(s) => Some(parse(s)?),
                None => None,
            },
            criterion: self.criterion,
        })
    }
}

mod opt_pq {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::rational::{format_rational, parse_rational, Rational};

    pub fn serialize<S: Serializer>(v: &Option<Rational>, s: S) -> Result<S::Ok, S::Error> {
        v.as_ref().map(format_rational).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Rational>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|s| parse_rational(&s).map_err(serde::de::Error::custom))
            .transpose()
    }
}

/// Checks (1)–(4) inductively along the stage and, for `N ≤ max_height`, directly.
pub fn verify_tower(x: &Exchange, tower: &CyclicTower, max_height: u64) -> Result<TowerVerification, ApproxError> {
    let inductive = verify_inductive(x, tower);
    let direct = match tower.height.to_u64().filter(|&n| n <= max_height) {
        None => Err(format!("height {} exceeds the cap {max_height}", tower.height)),
        Some(n) => match LatticeExchange::new(x, 1) {
            Ok(lat) => Ok(verify_direct(&lat, tower, n)),
            Err(e) => Err(e.to_string()),
        },
    };
    let one_minus = Rational::one() - &tower.delta;
    let (ok, measures, inductive_failure) = match inductive {
        Ok(m) => (true, m, None),
        Err(why) => (
            false,
            TowerMeasures {
                union: None,
                overlap: None,
                first_failure: None,
                union_merged: false,
            },
            Some(why),
        ),
    };
    let (direct, measures, p1, p2) = match direct {
        Err(why) => (DirectCheck::Skipped(why), measures, ok, ok),
        Ok(d) => {
            let agree = !ok || (d.p1 && d.p2 && d.measures.union == measures.union && d.measures.overlap == measures.overlap);
            let status = if agree && ok == (d.p1 && d.p2) {
                DirectCheck::Agreed
            } else {
                DirectCheck::Disagreed
            };
            let m = if ok { measures } else { d.measures.clone() };
            (status, m, ok && d.p1, ok && d.p2)
        }
    };
    let sound = p1 && p2 && direct != DirectCheck::Disagreed;
    Ok(TowerVerification {
        p1,
        p2,
        p3: sound && measures.union.as_ref().is_some_and(|u| u > &one_minus),
        p4: sound && measures.overlap.as_ref().is_some_and(|o| o > &one_minus),
        measures,
        inductive_failure,
        direct,
    })
}

/// Walks the stage, checking each split against `x_k` itself, and returns the measures
/// of the tower read off the terminal exchange.
fn verify_inductive(x: &Exchange, tower: &CyclicTower) -> Result<TowerMeasures, String> {
    let d = x.d();
    let mut ex = Expander::new(x);
    // first-return time under x of each band of the current exchange
    let mut times: Vec<BigInt> = vec![BigInt::one(); d];
    for k in 0..tower.depth {
        let prev = ex.current().clone();
        ex.step().map_err(|e| format!("split {k} undefined: {e}"))?;
        let next = ex.current();
        let cut = next.side_length();
        let mut next_times: Vec<Option<BigInt>> = vec![None; d];
        for band in 0..d {
            for end in next.perm().ends(band) {
                let start = next.end_interval(end);
                let mut cur = start.clone();
                let mut reversed = false;
                let mut time = BigInt::zero();
                let mut returned = false;
                for _ in 0..d + 1 {
                    let src = prev
                        .locate(cur.side, &cur.start)
                        .map(|e| prev.perm().band_at(e))
                        .ok_or_else(|| format!("depth {k}: level leaves the domain"))?;
                    let (img, rev) = prev
                        .map_interval(&cur)
                        .ok_or_else(|| format!("depth {k}: a level of {} meets a discontinuity", next.perm().label(band)))?;
                    time += &times[src];
                    reversed ^= rev;
                    cur = img;
                    if &cur.end <= cut {
                        returned = true;
                        break;
                    }
                    if &cur.start < cut {
                        return Err(format!("depth {k}: a level straddles the cut"));
                    }
                }
                if !returned {
                    return Err(format!("depth {k}: {} does not return", next.perm().label(band)));
                }
                let (want, want_rev) = next.map_interval(&start).expect("an end lies in itself");
                if want != cur || want_rev != reversed {
                    return Err(format!("depth {k}: induced map disagrees on {}", next.perm().label(band)));
                }
                match &next_times[band] {
                    Some(t) if *t != time => {
                        return Err(format!("depth {k}: the ends of {} return at different times", next.perm().label(band)))
                    }
                    _ => next_times[band] = Some(time),
                }
            }
        }
        times = next_times.into_iter().map(|t| t.expect("every band has ends")).collect();
    }
    let terminal = ex.current();
    if terminal.perm().class(tower.band) != OrientationClass::Preserving {
        return Err(format!("{} is not preserving at depth {}", tower.label, tower.depth));
    }
    if times[tower.band] != tower.height {
        return Err(format!("return time {} differs from the height {}", times[tower.band], tower.height));
    }
    let mut base = terminal.band_intervals(tower.band);
    base.sort_by_key(|iv| iv.side);
    if base != tower.base {
        return Err("the base is not I(α, n)".into());
    }
    let base_len = tower.base_measure();
    let overlap: Rational = base
        .iter()
        .map(|iv| {
            let (img, _) = terminal.map_interval(iv).expect("an end lies in itself");
            base.iter().map(|b| b.overlap(&img)).sum::<Rational>()
        })
        .sum();
    Ok(TowerMeasures {
        union: Some(Rational::from_integer(tower.height.clone()) * &base_len / x.total_measure()),
        overlap: Some(overlap / base_len),
        first_failure: None,
        union_merged: false,
    })
}

struct DirectResult {
    p1: bool,
    p2: bool,
    measures: TowerMeasures,
}

/// Iterates `x` on the lattice over every level `xᵏ(J)`, `k < N`.
fn verify_direct(lat: &LatticeExchange, tower: &CyclicTower, n: u64) -> DirectResult {
    let base: Vec<(Side, i128, i128)> = tower
        .base
        .iter()
        .map(|iv| lat.interval_to_lattice(iv).expect("base endpoints lie on the lattice"))
        .collect();
    let keep_levels = n <= UNION_CROSS_CHECK;
    let mut levels: Vec<(Side, i128, i128)> = Vec::new();
    let mut first_failure = None;
    let (mut p1, mut p2) = (true, true);
    let mut images = Vec::with_capacity(2);
    for &(side, start, len) in &base {
        let (mut s, mut a) = (side, start);
        for k in 0..n {
            if k > 0 {
                let hits_base = base
                    .iter()
                    .any(|&(bs, b, bl)| bs == s && a < b + bl && b < a + len);
                if hits_base {
                    p1 = false;
                    first_failure = Some(first_failure.map_or(k, |f: u64| f.min(k)));
                    break;
                }
            }
            if keep_levels {
                levels.push((s, a, len));
            }
            match lat.map_interval(s, a, len) {
                Some((s2, a2)) => {
                    s = s2;
                    a = a2;
                }
                None => {
                    p2 = false;
                    first_failure = Some(first_failure.map_or(k, |f: u64| f.min(k)));
                    break;
                }
            }
        }
        if p1 && p2 {
            images.push((s, a, len));
        }
    }
    let base_len: i128 = base.iter().map(|b| b.2).sum();
    let overlap = (p1 && p2).then(|| {
        let o: i128 = images
            .iter()
            .map(|&(s, a, len)| {
                base.iter()
                    .filter(|b| b.0 == s)
                    .map(|&(_, b, bl)| ((a + len).min(b + bl) - a.max(b)).max(0))
                    .sum::<i128>()
            })
            .sum();
        Rational::new(BigInt::from(o), BigInt::from(base_len))
    });
    let total = lat.side_length() * 2;
    let merged = (keep_levels && p2).then(|| {
        let mut v = levels.clone();
        v.sort();
        let mut covered: i128 = 0;
        let mut cur: Option<(Side, i128, i128)> = None;
        for (s, a, len) in v {
            match cur {
                Some((cs, ca, ce)) if cs == s && a <= ce => cur = Some((cs, ca, ce.max(a + len))),
                _ => {
                    if let Some((_, ca, ce)) = cur {
                        covered += ce - ca;
                    }
                    cur = Some((s, a, a + len));
                }
            }
        }
        if let Some((_, ca, ce)) = cur {
            covered += ce - ca;
        }
        covered
    });
    let union = if p1 && p2 {
        // pairwise disjoint levels, so the union is N ℓ(J); merging must agree
        if merged.is_some_and(|c| c != base_len * n as i128) {
            p1 = false;
        }
        Some(Rational::new(BigInt::from(base_len) * BigInt::from(n), BigInt::from(total)))
    } else {
        merged.map(|c| Rational::new(BigInt::from(c), BigInt::from(total)))
    };
    DirectResult {
        p1,
        p2,
        measures: TowerMeasures {
            union,
            overlap,
            first_failure,
            union_merged: merged.is_some(),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RigidityRecord {
    pub n: u64,
    /// `∫ |xⁿ(t) − t| dℓ`, or an upper bound for it when `exact` is false.
    #[serde(with = "serde_pq")]
    pub defect: Rational,
    pub exact: bool,
    pub flagged: bool,
}

/// `∫ |xⁿ(t) − t| dℓ` over `I₊ ⊔ I₋`, charging `|I₊|` where `xⁿ` changes side.
pub fn rigidity_defect(x: &Exchange, n: u64, piece_limit: usize) -> Result<Rational, PartitionBlowup> {
    let f = PiecewiseIsometry::from_exchange(x).power(n, piece_limit)?;
    Ok(f.displacement(x.side_length()))
}

/// Evaluates the defect at each candidate and flags those below `xi`.
pub fn find_rigidity_times(
    x: &Exchange,
    xi: &Rational,
    candidates: &[u64],
    piece_limit: usize,
) -> Result<Vec<RigidityRecord>, PartitionBlowup> {
    candidates
        .iter()
        .map(|&n| {
            let defect = rigidity_defect(x, n, piece_limit)?;
            Ok(RigidityRecord {
                n,
                flagged: &defect < xi,
                defect,
                exact: true,
            })
        })
        .collect()
}

/// An upper bound for the defect at the height of a verified tower. On the part of
/// each level coming from `J ∩ x⁻ᴺ(J)` the map `xᴺ` moves points by the offset between
/// the two ends of `α`; everything else is charged the maximal displacement `|I₊|`.
pub fn tower_defect_bound(x: &Exchange, tower: &CyclicTower) -> Rational {
    let n = Rational::from_integer(tower.height.clone());
    let w = tower.base[0].len();
    let l = x.side_length();
    let shift = std::cmp::min((&tower.base[0].start - &tower.base[1].start).abs(), w.clone());
    let inside = &n * int(2) * (&w - &shift) * &shift;
    let leaking = &n * int(2) * &shift * l;
    let outside = (l * int(2) - &n * int(2) * &w) * l;
    inside + leaking + outside
}

/// The defect at the height of `tower`: exact when `xᴺ` stays under the piece limit,
/// otherwise the certified bound.
pub fn tower_rigidity(x: &Exchange, tower: &CyclicTower, xi: &Rational, piece_limit: usize) -> RigidityRecord {
    let n = tower.height.to_u64().unwrap_or(u64::MAX);
    let exact = if n < u64::MAX {
        rigidity_defect(x, n, piece_limit).ok()
    } else {
        None
    };
    let (defect, exact) = match exact {
        Some(d) => (d, true),
        None => (tower_defect_bound(x, tower), false),
    };
    RigidityRecord {
        n,
        flagged: &defect < xi,
        defect,
        exact,
    }
}

/// The times `n ≤ horizon` at which the defect drops strictly below every earlier
/// value. Iterates `xⁿ⁺¹ = x ∘ xⁿ`; stops early once `xⁿ` is the identity.
pub fn rigidity_record_times(x: &Exchange, horizon: u64, piece_limit: usize) -> Result<Vec<RigidityRecord>, PartitionBlowup> {
    let f = PiecewiseIsometry::from_exchange(x);
    let mut g = f.clone();
    let mut best: Option<Rational> = None;
    let mut out = Vec::new();
    for n in 1..=horizon {
        if n > 1 {
            g = f.after(&g, piece_limit)?;
        }
        let defect = g.displacement(x.side_length());
        if best.as_ref().is_none_or(|b| &defect < b) {
            best = Some(defect.clone());
            let done = defect.is_zero();
            out.push(RigidityRecord {
                n,
                defect,
                exact: true,
                flagged: true,
            });
            if done {
                break;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exchange::WidthVector;
    use crate::genperm::GeneralizedPermutation;
    use crate::rational::rat;
    use crate::rauzy::return_time;

    fn gp(top: &str, bottom: &str) -> GeneralizedPermutation {
        let t: Vec<&str> = top.split_whitespace().collect();
        let b: Vec<&str> = bottom.split_whitespace().collect();
        GeneralizedPermutation::new(&t, &b).unwrap()
    }

    fn rotation(a: Rational, b: Rational) -> Exchange {
        Exchange::build(gp("A B", "B A"), WidthVector::new(vec![a, b])).unwrap()
    }

    #[test]
    fn delta_out_of_range() {
        let x = rotation(rat(3, 7), rat(1, 7));
        assert_eq!(find_cyclic_tower(&x, &rat(1, 1), 10), Err(ApproxError::InvalidDelta));
        assert_eq!(find_cyclic_tower(&x, &rat(0, 1), 10), Err(ApproxError::InvalidDelta));
    }

    #[test]
    fn depth_zero_tower() {
        let x = rotation(rat(3, 7), rat(1, 7));
        let t = CyclicTower::at_depth(&x, 0, 0, &rat(1, 4)).unwrap();
        assert_eq!(t.height, BigInt::one());
        let v = verify_tower(&x, &t, 100).unwrap();
        assert!(v.p1 && v.p2);
        // J = A's ends: [0,3/7) on top and [1/7,4/7) on the bottom
        assert_eq!(v.measures.union, Some(rat(3, 4)));
        assert_eq!(v.measures.overlap, Some(rat(2, 3)));
        assert!(!v.p3 && !v.p4);
        assert_eq!(verify_tower(&x, &t, 100).unwrap(), v);
    }

    #[test]
    fn one_split_rotation_tower() {
        let x = rotation(rat(3, 7), rat(1, 7));
        let t = CyclicTower::at_depth(&x, 1, 1, &rat(1, 2)).unwrap();
        assert_eq!(t.height, BigInt::from(2));
        let v = verify_tower(&x, &t, 100).unwrap();
        assert!(v.p1 && v.p2);
        assert_eq!(v.measures.union, Some(rat(1, 2)));
        let (u, o) = t.predicted_measures(&x);
        assert_eq!(Some(u), v.measures.union);
        assert_eq!(Some(o), v.measures.overlap);
    }

    /// Rotation with `b/(a+b) = [0; 1, 1, 1, 1, 1, 1, 1, 1, 40]`: golden-like, then a
    /// long run that produces a dominant band.
    fn golden_like() -> Exchange {
        let (mut p, mut q) = (BigInt::from(1), BigInt::from(40));
        for _ in 0..8 {
            // 1/(1 + p/q) = q/(q + p)
            let next = q.clone() + &p;
            p = std::mem::replace(&mut q, next);
        }
        let total = Rational::from_integer(q.clone());
        rotation(Rational::from_integer(&q - &p) / &total, Rational::from_integer(p) / &total)
    }

    /// Denominators of the convergents of `p/q`.
    fn convergent_denominators(mut p: i64, mut q: i64) -> Vec<i64> {
        let (mut prev, mut cur) = (0i64, 1i64);
        let mut out = vec![1];
        while p != 0 {
            let a = q / p;
            (p, q) = (q % p, p);
            (prev, cur) = (cur, a * cur + prev);
            out.push(cur);
        }
        out
    }

    #[test]
    fn golden_like_rotation_tower_height_is_a_convergent() {
        let x = golden_like();
        let t = find_cyclic_tower(&x, &rat(1, 4), 1000).unwrap();
        let b = x.widths().get(1) / x.side_length();
        let dens = convergent_denominators(
            b.numer().to_i64().unwrap(),
            b.denom().to_i64().unwrap(),
        );
        assert!(dens.contains(&t.height.to_i64().unwrap()), "{} not in {dens:?}", t.height);
        let v = verify_tower(&x, &t, 1_000_000).unwrap();
        assert!(v.passed(), "{v:?}");
        assert_eq!(
            t.height.to_u64().unwrap() as usize,
            return_time(&x, t.depth, t.band).unwrap()
        );
    }

    #[test]
    fn certificate_round_trip() {
        let x = golden_like();
        let t = find_cyclic_tower(&x, &rat(1, 4), 1000).unwrap();
        let v = verify_tower(&x, &t, 1_000_000).unwrap();
        let cert = t.certificate(&x, &v);
        let json = serde_json::to_string(&cert).unwrap();
        let back: TowerCertificate = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cert);
        assert_eq!(back.tower(&x).unwrap(), t);
    }

    #[test]
    fn wrong_height_is_rejected() {
        let x = golden_like();
        let mut t = find_cyclic_tower(&x, &rat(1, 4), 1000).unwrap();
        t.height += 1;
        let v = verify_tower(&x, &t, 1_000_000).unwrap();
        assert!(!v.passed());
        assert!(v.inductive_failure.is_some());
        assert!(!v.p1, "the extra level lands back on J");
    }

    #[test]
    fn direct_and_inductive_agree() {
        let x = Exchange::build(
            gp("D A A B", "B C C D"),
            WidthVector::new(vec![rat(314159, 1_000_000), rat(271828, 1_000_000), rat(314159, 1_000_000), rat(141421, 1_000_000)]),
        )
        .unwrap();
        let mut checked = 0;
        for depth in 0..30 {
            for band in 0..4 {
                let Ok(t) = CyclicTower::at_depth(&x, depth, band, &rat(1, 2)) else { continue };
                let v = verify_tower(&x, &t, 1_000_000).unwrap();
                assert_eq!(v.direct, DirectCheck::Agreed, "depth {depth}");
                assert!(v.p1 && v.p2);
                checked += 1;
            }
        }
        assert!(checked > 20, "{checked}");
    }

    #[test]
    fn defect_bounds() {
        let x = rotation(rat(3, 7), rat(1, 7));
        let bound = x.side_length() * x.side_length() * int(2);
        for n in 1..12 {
            let d = rigidity_defect(&x, n, 1000).unwrap();
            assert!(!d.is_negative() && d <= bound);
        }
        assert!(find_rigidity_times(&x, &bound, &[1, 2, 3], 1000)
            .unwrap()
            .iter()
            .all(|r| r.flagged));
        assert!(find_rigidity_times(&x, &bound, &[], 1000).unwrap().is_empty());
    }

    #[test]
    fn rotation_records_at_convergents() {
        // θ = 3/10 = [0; 3, 3]: denominators 1, 3, 10
        let x = rotation(rat(7, 10), rat(3, 10));
        let times: Vec<u64> = rigidity_record_times(&x, 100, 1000).unwrap().iter().map(|r| r.n).collect();
        assert_eq!(times, vec![1, 3, 10]);
    }

    #[test]
    fn tower_bound_dominates_exact_defect() {
        let x = golden_like();
        let t = find_cyclic_tower(&x, &rat(1, 4), 1000).unwrap();
        let exact = tower_rigidity(&x, &t, &rat(1, 1), 10_000);
        assert!(exact.exact);
        assert!(exact.defect <= tower_defect_bound(&x, &t));
    }
}
