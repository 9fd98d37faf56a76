//! Rauzy induction on labelled exchanges: one split at a time, the cocycle `Q_n`, and
//! distortion measurements.
//!
//! The wider critical band is the winner. The loser's critical end is cut off and its
//! label is re-inserted next to the winner's other end; only the winner's width
//! changes, `λ_w ← λ_w − λ_l`, so `λ = E λ′` with `E = I + M_{w,l}`.

use num_bigint::BigInt;
use num_traits::{One, Signed};
use serde::{Deserialize, Serialize};

use crate::exchange::{Exchange, ExchangeError, Point, WidthVector};
use crate::genperm::{GeneralizedPermutation, OrientationClass, PermutationFile, Side};
use crate::matrix::BigMatrix;
use crate::rational::{int, Rational};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SplitKind {
    BottomWins,
    /// The top critical band is wider and splits the bottom one.
    TopWins,
}

impl SplitKind {
    /// In tag order, which is also the tie-break order for path searches.
    pub const BOTH: [SplitKind; 2] = [SplitKind::BottomWins, SplitKind::TopWins];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SplitStep {
    pub kind: SplitKind,
    pub winner: usize,
    pub loser: usize,
}

impl SplitStep {
    /// `E = I + M_{winner,loser}`.
    pub fn matrix(&self, d: usize) -> BigMatrix {
        BigMatrix::elementary(d, self.winner, self.loser)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
pub enum SplitError {
    #[error("both critical positions hold band {0}; neither split is defined")]
    SameBand(String),
    #[error("critical bands {0} and {1} have equal width")]
    Tie(String, String),
    #[error("split leaves no valid exchange")]
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RauzyError {
    #[error("expansion halted after {at} splits: {cause}")]
    Halted { at: usize, cause: SplitError },
    #[error("back-substitution produced a non-positive width at step {0}")]
    InconsistentStage(usize),
    #[error("every probe point for band {0} hit an endpoint")]
    ProbesExhausted(String),
    #[error(transparent)]
    Exchange(#[from] ExchangeError),
    #[error("Q has a zero entry, so nu is undefined")]
    NuUndefined,
}

/// The permutation after a split in direction `kind`, with `(winner, loser)`.
pub fn split_permutation(
    perm: &GeneralizedPermutation,
    kind: SplitKind,
) -> Result<(GeneralizedPermutation, usize, usize), SplitError> {
    let (a0, a1) = perm.critical_bands();
    if a0 == a1 {
        return Err(SplitError::SameBand(perm.label(a0).to_string()));
    }
    let mut top = perm.top().to_vec();
    let mut bottom = perm.bottom().to_vec();
    let (winner, loser, win_side) = match kind {
        SplitKind::TopWins => {
            bottom.pop();
            (a0, a1, Side::Top)
        }
        SplitKind::BottomWins => {
            top.pop();
            (a1, a0, Side::Bottom)
        }
    };
    // the winner's non-critical end
    let same = match win_side {
        Side::Top => &top,
        Side::Bottom => &bottom,
    };
    let same_idx = same[..same.len() - 1].iter().position(|&b| b == winner);
    match same_idx {
        // reversing winner: the sliver lands just before its other end
        Some(i) => match win_side {
            Side::Top => top.insert(i, loser),
            Side::Bottom => bottom.insert(i, loser),
        },
        None => {
            let other = match win_side {
                Side::Top => &mut bottom,
                Side::Bottom => &mut top,
            };
            let j = other
                .iter()
                .position(|&b| b == winner)
                .expect("winner has a second end");
            other.insert(j + 1, loser);
        }
    }
    if top.is_empty() || bottom.is_empty() {
        return Err(SplitError::Infeasible);
    }
    Ok((
        GeneralizedPermutation::from_indices(perm.alphabet_arc().clone(), top, bottom),
        winner,
        loser,
    ))
}

pub fn split(x: &Exchange) -> Result<(Exchange, SplitStep), SplitError> {
    let perm = x.perm();
    let (a0, a1) = perm.critical_bands();
    if a0 == a1 {
        return Err(SplitError::SameBand(perm.label(a0).to_string()));
    }
    let (w0, w1) = (x.widths().get(a0), x.widths().get(a1));
    let kind = match w0.cmp(w1) {
        std::cmp::Ordering::Greater => SplitKind::TopWins,
        std::cmp::Ordering::Less => SplitKind::BottomWins,
        std::cmp::Ordering::Equal => {
            return Err(SplitError::Tie(
                perm.label(a0).to_string(),
                perm.label(a1).to_string(),
            ))
        }
    };
    let (next, winner, loser) = split_permutation(perm, kind)?;
    let mut widths = x.widths().values().to_vec();
    widths[winner] = &widths[winner] - &widths[loser];
    let next = Exchange::build(next, WidthVector::new(widths)).map_err(|_| SplitError::Infeasible)?;
    Ok((
        next,
        SplitStep {
            kind,
            winner,
            loser,
        },
    ))
}

/// The induction cut `|I₊| − min(λ_{α0}, λ_{α1})`.
pub fn rauzy_cut(x: &Exchange) -> Rational {
    let (a0, a1) = x.perm().critical_bands();
    let m = std::cmp::min(x.widths().get(a0), x.widths().get(a1));
    x.side_length() - m
}

/// Extreme rays of the closed cone `{λ ≥ 0, switch condition}`.
fn cone_rays(perm: &GeneralizedPermutation) -> Vec<Vec<i64>> {
    let d = perm.d();
    let unit = |bands: &[usize]| {
        let mut v = vec![0i64; d];
        bands.iter().for_each(|&b| v[b] += 1);
        v
    };
    let mut rays: Vec<Vec<i64>> = perm
        .bands_of_class(OrientationClass::Preserving)
        .into_iter()
        .map(|b| unit(&[b]))
        .collect();
    for a in perm.bands_of_class(OrientationClass::ReversingTop) {
        for b in perm.bands_of_class(OrientationClass::ReversingBottom) {
            rays.push(unit(&[a, b]));
        }
    }
    rays
}

/// Integer widths realizing a split in direction `kind`, if any exist. The witness is
/// the sum of all cone rays plus enough copies of a ray favouring the winner, so it is
/// strictly positive and satisfies the switch condition.
pub fn direction_witness(perm: &GeneralizedPermutation, kind: SplitKind) -> Option<WidthVector> {
    let (a0, a1) = perm.critical_bands();
    if a0 == a1 || !perm.admits_widths() {
        return None;
    }
    let (w, l) = match kind {
        SplitKind::TopWins => (a0, a1),
        SplitKind::BottomWins => (a1, a0),
    };
    let rays = cone_rays(perm);
    let gap = |v: &[i64]| v[w] - v[l];
    let good = rays.iter().find(|r| gap(r) > 0)?;
    let mut sum = vec![0i64; perm.d()];
    for r in &rays {
        for (s, v) in sum.iter_mut().zip(r) {
            *s += v;
        }
    }
    let k = (-gap(&sum)).max(0) / gap(good) + 1;
    let witness: Vec<Rational> = sum
        .iter()
        .zip(good)
        .map(|(s, g)| int(s + k * g))
        .collect();
    let x = Exchange::build(perm.clone(), WidthVector::new(witness)).ok()?;
    split(&x).ok()?;
    Some(x.widths().clone())
}

pub fn feasible_directions(perm: &GeneralizedPermutation) -> Vec<(SplitKind, WidthVector)> {
    SplitKind::BOTH
        .iter()
        .filter_map(|&k| direction_witness(perm, k).map(|w| (k, w)))
        .collect()
}

/// A finite splitting sequence with its accumulated cocycle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stage {
    pub nodes: Vec<GeneralizedPermutation>,
    pub steps: Vec<SplitStep>,
    pub q: BigMatrix,
    /// Set when the expansion stopped before the requested depth.
    pub halted: Option<SplitError>,
}

impl Stage {
    pub fn depth(&self) -> usize {
        self.steps.len()
    }

    pub fn terminal_node(&self) -> &GeneralizedPermutation {
        self.nodes.last().expect("a stage has at least its start node")
    }

    /// `λ⁽ⁿ⁾`, undoing one elementary factor at a time.
    pub fn widths_at(&self, x: &Exchange) -> Result<WidthVector, RauzyError> {
        let mut w = x.widths().values().to_vec();
        for (i, step) in self.steps.iter().enumerate() {
            w[step.winner] = &w[step.winner] - &w[step.loser];
            if !w[step.winner].is_positive() {
                return Err(RauzyError::InconsistentStage(i));
            }
        }
        Ok(WidthVector::new(w))
    }

    pub fn terminal_exchange(&self, x: &Exchange) -> Result<Exchange, RauzyError> {
        Ok(Exchange::build(self.terminal_node().clone(), self.widths_at(x)?)?)
    }

    pub fn to_file(&self) -> StageFile {
        let perm = &self.nodes[0];
        StageFile {
            nodes: self.nodes.iter().map(PermutationFile::from).collect(),
            steps: self
                .steps
                .iter()
                .map(|s| StepFile {
                    kind: s.kind,
                    winner: perm.label(s.winner).to_string(),
                    loser: perm.label(s.loser).to_string(),
                })
                .collect(),
            q: self.q.to_string_rows(),
            halted: self.halted.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepFile {
    pub kind: SplitKind,
    pub winner: String,
    pub loser: String,
}

/// Stage dump: nodes, `{winner, loser}` steps and `Q` as decimal strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageFile {
    pub nodes: Vec<PermutationFile>,
    pub steps: Vec<StepFile>,
    pub q: Vec<Vec<String>>,
    pub halted: Option<SplitError>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StageFileError {
    #[error("stage has no nodes")]
    Empty,
    #[error("invalid node: {0}")]
    Node(#[from] crate::genperm::PermError),
    #[error("unknown label {0:?} in step")]
    Label(String),
    #[error("bad matrix entry: {0}")]
    Matrix(String),
    #[error("stored Q does not equal the product of the steps")]
    Inconsistent,
}

impl StageFile {
    /// Rebuilds the stage, re-deriving `Q` from the steps and checking it against the
    /// stored copy.
    pub fn into_stage(self) -> Result<Stage, StageFileError> {
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for n in self.nodes {
            nodes.push(GeneralizedPermutation::try_from(n)?);
        }
        let first = nodes.first().ok_or(StageFileError::Empty)?;
        let band = |l: &str| first.band_of(l).ok_or_else(|| StageFileError::Label(l.to_string()));
        let mut q = BigMatrix::identity(first.d());
        let mut steps = Vec::with_capacity(self.steps.len());
        for s in &self.steps {
            let step = SplitStep {
                kind: s.kind,
                winner: band(&s.winner)?,
                loser: band(&s.loser)?,
            };
            q.add_column(step.loser, step.winner);
            steps.push(step);
        }
        let stored = BigMatrix::from_string_rows(&self.q).map_err(|e| StageFileError::Matrix(e.to_string()))?;
        if stored != q {
            return Err(StageFileError::Inconsistent);
        }
        Ok(Stage {
            nodes,
            steps,
            q,
            halted: self.halted,
        })
    }
}

/// Step-by-step expansion of one exchange, tracking `x⁽ⁿ⁾` and `Q_n`.
#[derive(Debug, Clone)]
pub struct Expander {
    current: Exchange,
    q: BigMatrix,
    n: usize,
}

impl Expander {
    pub fn new(x: &Exchange) -> Self {
        Expander {
            q: BigMatrix::identity(x.d()),
            current: x.clone(),
            n: 0,
        }
    }

    pub fn current(&self) -> &Exchange {
        &self.current
    }

    pub fn q(&self) -> &BigMatrix {
        &self.q
    }

    pub fn depth(&self) -> usize {
        self.n
    }

    /// One split. On error the state is left unchanged.
    pub fn step(&mut self) -> Result<SplitStep, SplitError> {
        let (next, step) = split(&self.current)?;
        self.current = next;
        self.q.add_column(step.loser, step.winner);
        self.n += 1;
        Ok(step)
    }
}

/// Up to `n` splits; an undefined split ends the stage early and is recorded.
pub fn expand(x: &Exchange, n: usize) -> Stage {
    let mut ex = Expander::new(x);
    let mut nodes = vec![x.perm().clone()];
    let mut steps = Vec::with_capacity(n);
    let mut halted = None;
    for _ in 0..n {
        match ex.step() {
            Ok(step) => {
                steps.push(step);
                nodes.push(ex.current().perm().clone());
            }
            Err(e) => {
                halted = Some(e);
                break;
            }
        }
    }
    Stage {
        nodes,
        steps,
        q: ex.q,
        halted,
    }
}

fn full_expansion(x: &Exchange, n: usize) -> Result<(Stage, Exchange), RauzyError> {
    let stage = expand(x, n);
    if let Some(cause) = stage.halted.clone() {
        return Err(RauzyError::Halted {
            at: stage.depth(),
            cause,
        });
    }
    let terminal = stage.terminal_exchange(x)?;
    Ok((stage, terminal))
}

/// Offsets tried inside an end, as fractions of its width.
const PROBES: [(i64, i64); 8] = [(1, 2), (1, 3), (2, 3), (1, 5), (3, 7), (5, 11), (7, 13), (11, 17)];

/// Follows `x` from `start` until it first re-enters `[0, cut)`, recording the band of
/// every visited point (including `start`).
fn first_return_path(x: &Exchange, start: &Point, cut: &Rational) -> Result<Vec<usize>, ExchangeError> {
    let mut bands = Vec::new();
    let mut t = start.clone();
    loop {
        let end = x.locate(t.side, &t.offset).expect("orbit stays in the domain");
        bands.push(x.perm().band_at(end));
        t = x.apply(&t)?;
        if &t.offset < cut {
            return Ok(bands);
        }
    }
}

fn probe_band(x: &Exchange, terminal: &Exchange, band: usize) -> Result<Vec<usize>, RauzyError> {
    let cut = terminal.side_length();
    for iv in terminal.band_intervals(band) {
        for (p, q) in PROBES {
            let t = Point::new(iv.side, &iv.start + iv.len() * crate::rational::rat(p, q));
            match first_return_path(x, &t, cut) {
                Ok(path) => return Ok(path),
                Err(ExchangeError::EndpointHit { .. }) => continue,
                Err(e) => return Err(e.into()),
            }
        }
    }
    Err(RauzyError::ProbesExhausted(x.perm().label(band).to_string()))
}

/// Entry `[β][α]`: how often the first-return orbit of a point of `I(α, n)` visits
/// `I(β)`. Computed from the dynamics alone; it should equal `Q_n`.
pub fn visit_counts(x: &Exchange, n: usize) -> Result<BigMatrix, RauzyError> {
    let (_, terminal) = full_expansion(x, n)?;
    let d = x.d();
    let mut counts = BigMatrix::zeros(d);
    for alpha in 0..d {
        for beta in probe_band(x, &terminal, alpha)? {
            let v = counts.get(beta, alpha) + 1;
            counts.set(beta, alpha, v);
        }
    }
    Ok(counts)
}

/// `m_n(α)`, the first-return time of `I(α, n)`, measured along an orbit.
pub fn return_time(x: &Exchange, n: usize, band: usize) -> Result<usize, RauzyError> {
    let (_, terminal) = full_expansion(x, n)?;
    Ok(probe_band(x, &terminal, band)?.len())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistortionReport {
    /// `max_{α,β} |Q(α)| / |Q(β)|`.
    pub c_distributed: Rational,
    /// `ν(Q)`, only for strictly positive `Q`.
    pub nu: Option<Rational>,
}

impl DistortionReport {
    /// The uniform-distortion constant implied by `c_distributed`, `C^{d−1}`.
    pub fn jacobian_bound(&self, d: usize) -> Rational {
        num_traits::pow(self.c_distributed.clone(), d.saturating_sub(1))
    }
}

pub fn c_distributed(q: &BigMatrix) -> Rational {
    let norms = q.column_norms();
    let max = norms.iter().max().expect("d ≥ 1").clone();
    let min = norms.iter().min().expect("d ≥ 1").clone();
    Rational::new(max, min)
}

/// `ν(Q) = max_{i,j,k} Q_{ij} / Q_{ik}`.
pub fn nu(q: &BigMatrix) -> Result<Rational, RauzyError> {
    if !q.is_positive() {
        return Err(RauzyError::NuUndefined);
    }
    let d = q.dim();
    let ratio = |i: usize| {
        let row: Vec<&BigInt> = (0..d).map(|j| q.get(i, j)).collect();
        let max = (*row.iter().max().unwrap()).clone();
        let min = (*row.iter().min().unwrap()).clone();
        Rational::new(max, min)
    };
    Ok((0..d).map(ratio).max().expect("d ≥ 1"))
}

pub fn distortion_report(q: &BigMatrix) -> DistortionReport {
    DistortionReport {
        c_distributed: c_distributed(q),
        nu: nu(q).ok(),
    }
}

/// `(|Q y′| / |Q y|)^{d−1}`: the ratio of the projectivized Jacobians at `y` and `y′`.
pub fn jacobian_ratio(q: &BigMatrix, y: &WidthVector, y_prime: &WidthVector) -> Rational {
    let norm = |v: &WidthVector| -> Rational { q.mul_vec(v.values()).iter().sum() };
    let r = norm(y_prime) / norm(y);
    num_traits::pow(r, q.dim().saturating_sub(1))
}

/// Vertices of the normalized configuration space: `e_ρ` for preserving `ρ` and
/// `(e_α + e_β)/2` for `α ∈ A₊, β ∈ A₋`.
pub fn configuration_vertices(perm: &GeneralizedPermutation) -> Vec<WidthVector> {
    cone_rays(perm)
        .into_iter()
        .map(|r| {
            let total: i64 = r.iter().sum();
            WidthVector::new(r.iter().map(|&v| Rational::new(v.into(), total.into())).collect())
        })
        .collect()
}

pub fn is_identity(q: &BigMatrix) -> bool {
    *q == BigMatrix::identity(q.dim())
}

pub fn det_is_one(q: &BigMatrix) -> bool {
    q.determinant().is_one()
}
