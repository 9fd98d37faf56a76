//! Column norms of the cocycle modulo a prime.
//!
//! A split adds the winner's column to the loser's, so the loser's remainder becomes
//! `r_l + r_w` and nothing else changes. The Claim tracked here: if the start has a
//! preserving band, then at every stage either some preserving band has a norm prime
//! to `p`, or there are reversing bands `β₁ ∈ A₊`, `β₂ ∈ A₋` with `r₁ + r₂ ≢ 0`.

use std::collections::{HashMap, VecDeque};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, ToPrimitive};
use serde::Serialize;

use crate::approx::{ApproxError, CyclicTower, TowerScan};
use crate::diagram::{forward_closure, DiagramError, PathEdge, RauzyGraph};
use crate::exchange::Exchange;
use crate::genperm::{GeneralizedPermutation, OrientationClass};
use crate::rational::Rational;
use crate::rauzy::{split_permutation, Expander, SplitKind, SplitStep, Stage};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModpError {
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("the claim fails at depth {depth}: {state}")]
    ClaimViolation { depth: usize, state: String },
    #[error("no splitting sequence reaches a preserving band with nonzero remainder")]
    Unreachable,
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error(transparent)]
    Diagram(#[from] DiagramError),
}

pub fn is_prime(p: u64) -> bool {
    p >= 2 && (2..).take_while(|k| k * k <= p).all(|k| p % k != 0)
}

fn check_prime(p: u64) -> Result<(), ModpError> {
    if is_prime(p) {
        Ok(())
    } else {
        Err(ModpError::NotPrime(p))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct RemainderState {
    pub p: u64,
    pub node: GeneralizedPermutation,
    /// `|Q(α)| mod p`, indexed by band.
    pub remainders: Vec<u64>,
}

impl RemainderState {
    /// Depth zero: every column norm is 1.
    pub fn initial(node: &GeneralizedPermutation, p: u64) -> Result<Self, ModpError> {
        check_prime(p)?;
        Ok(RemainderState {
            p,
            node: node.clone(),
            remainders: vec![1 % p; node.d()],
        })
    }

    pub fn from_norms(node: &GeneralizedPermutation, norms: &[BigInt], p: u64) -> Result<Self, ModpError> {
        check_prime(p)?;
        let pb = BigInt::from(p);
        Ok(RemainderState {
            p,
            node: node.clone(),
            remainders: norms
                .iter()
                .map(|n| n.mod_floor(&pb).to_u64().expect("below p"))
                .collect(),
        })
    }

    pub fn classes(&self) -> Vec<OrientationClass> {
        self.node.classes()
    }

    /// The state after one split into `next`, without touching any widths.
    pub fn advance(&self, step: &SplitStep, next: &GeneralizedPermutation) -> RemainderState {
        let mut r = self.remainders.clone();
        r[step.loser] = (r[step.loser] + r[step.winner]) % self.p;
        RemainderState {
            p: self.p,
            node: next.clone(),
            remainders: r,
        }
    }

    /// A preserving band with nonzero remainder, if any.
    pub fn coprime_preserving(&self) -> Option<usize> {
        self.node
            .bands_of_class(OrientationClass::Preserving)
            .into_iter()
            .find(|&b| self.remainders[b] != 0)
    }

    pub fn describe(&self) -> String {
        let classes = self.classes();
        let cells: Vec<String> = (0..self.node.d())
            .map(|b| format!("{}({})={}", self.node.label(b), classes[b], self.remainders[b]))
            .collect();
        format!("p={} {}", self.p, cells.join(" "))
    }
}

/// Remainders of the column norms of `stage.q`, at the stage's terminal node.
pub fn remainder_state(stage: &Stage, p: u64) -> Result<RemainderState, ModpError> {
    RemainderState::from_norms(stage.terminal_node(), &stage.q.column_norms(), p)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum ClaimOutcome {
    CoprimeOP(usize),
    ReversingPair(usize, usize),
    Violation,
}

/// Which disjunct of the Claim holds, preferring a coprime preserving band.
pub fn check_claim_invariant(state: &RemainderState) -> ClaimOutcome {
    if let Some(a) = state.coprime_preserving() {
        return ClaimOutcome::CoprimeOP(a);
    }
    let p = state.p;
    let r = &state.remainders;
    for b1 in state.node.bands_of_class(OrientationClass::ReversingTop) {
        for b2 in state.node.bands_of_class(OrientationClass::ReversingBottom) {
            if (r[b1] + r[b2]) % p != 0 {
                return ClaimOutcome::ReversingPair(b1, b2);
            }
        }
    }
    ClaimOutcome::Violation
}

/// Starting from an all-reversing permutation, preserving norms stay even and
/// reversing norms odd.
pub fn parity_pattern_holds(node: &GeneralizedPermutation, norms: &[BigInt]) -> bool {
    node.classes()
        .iter()
        .zip(norms)
        .all(|(c, n)| n.is_even() != c.is_reversing())
}

/// How a sequence was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SequenceMethod {
    /// The state already had a coprime preserving band.
    Immediate,
    /// Shortest path bringing `β₁` or `β₂` to a critical position, then the forced splits.
    Construction,
    /// Breadth-first search over (node, remainders) pairs, used when a forced split is
    /// not width-feasible.
    Search,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoprimeSequence {
    pub edges: Vec<PathEdge>,
    pub method: SequenceMethod,
    pub terminal: RemainderState,
    /// The preserving band with nonzero remainder at the end.
    pub band: usize,
}

impl CoprimeSequence {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

/// The split of `g.node(from)` in direction `kind`, if it is an edge of the diagram.
fn edge(g: &RauzyGraph, from: usize, kind: SplitKind) -> Option<(PathEdge, SplitStep)> {
    let e = g.edges(from).iter().find(|e| e.kind == kind)?;
    let step = SplitStep {
        kind,
        winner: e.winner,
        loser: e.loser,
    };
    Some((
        PathEdge {
            from,
            kind,
            to: e.target,
        },
        step,
    ))
}

/// A splitting sequence from `state.node` ending at a preserving band with nonzero
/// remainder, with remainders carried symbolically along the diagram edges.
pub fn coprime_band_sequence(state: &RemainderState, budget: usize) -> Result<CoprimeSequence, ModpError> {
    if let Some(band) = state.coprime_preserving() {
        return Ok(CoprimeSequence {
            edges: Vec::new(),
            method: SequenceMethod::Immediate,
            terminal: state.clone(),
            band,
        });
    }
    let g = forward_closure(&state.node, budget)?;
    let start = g.index_of(&state.node).expect("closure contains its start");
    if let Some(seq) = construction(&g, start, state) {
        return Ok(seq);
    }
    search(&g, start, state)
}

fn construction(g: &RauzyGraph, start: usize, state: &RemainderState) -> Option<CoprimeSequence> {
    let ClaimOutcome::ReversingPair(b1, b2) = check_claim_invariant(state) else {
        return None;
    };
    let critical = |n: &GeneralizedPermutation| {
        let (top, bottom) = n.critical_bands();
        (top == b1 && n.class(b1) == OrientationClass::ReversingTop)
            || (bottom == b2 && n.class(b2) == OrientationClass::ReversingBottom)
    };
    let mut edges = crate::diagram::shortest_path(g, start, critical).ok()?;
    let mut cur = state.clone();
    let mut at = start;
    let walk = |edges: &mut Vec<PathEdge>, cur: &mut RemainderState, at: &mut usize, e: PathEdge, step: SplitStep| {
        *cur = cur.advance(&step, g.node(e.to));
        *at = e.to;
        edges.push(e);
    };
    let path = std::mem::take(&mut edges);
    for e in path {
        let (e, step) = edge(g, e.from, e.kind)?;
        walk(&mut edges, &mut cur, &mut at, e, step);
        if let Some(band) = cur.coprime_preserving() {
            return Some(CoprimeSequence {
                edges,
                method: SequenceMethod::Construction,
                terminal: cur,
                band,
            });
        }
    }
    // the critical one of β₁, β₂ now splits everything in front of the other
    let (top, _) = g.node(at).critical_bands();
    let (kind, mover, other) = if top == b1 {
        (SplitKind::TopWins, b1, b2)
    } else {
        (SplitKind::BottomWins, b2, b1)
    };
    for _ in 0..=2 * g.node(at).d() {
        let (e, step) = edge(g, at, kind)?;
        if step.winner != mover && step.loser != mover {
            return None;
        }
        let finishing = step.loser == other;
        walk(&mut edges, &mut cur, &mut at, e, step);
        if let Some(band) = cur.coprime_preserving() {
            return Some(CoprimeSequence {
                edges,
                method: SequenceMethod::Construction,
                terminal: cur,
                band,
            });
        }
        if finishing {
            return None;
        }
    }
    None
}

fn search(g: &RauzyGraph, start: usize, state: &RemainderState) -> Result<CoprimeSequence, ModpError> {
    type Key = (usize, Vec<u64>);
    let mut parent: HashMap<Key, Option<(Key, PathEdge)>> = HashMap::new();
    let first: Key = (start, state.remainders.clone());
    parent.insert(first.clone(), None);
    let mut queue = VecDeque::from([first]);
    while let Some(key) = queue.pop_front() {
        let here = RemainderState {
            p: state.p,
            node: g.node(key.0).clone(),
            remainders: key.1.clone(),
        };
        if let Some(band) = here.coprime_preserving() {
            let mut edges = Vec::new();
            let mut k = key;
            while let Some(Some((prev, e))) = parent.get(&k) {
                edges.push(*e);
                k = prev.clone();
            }
            edges.reverse();
            return Ok(CoprimeSequence {
                edges,
                method: SequenceMethod::Search,
                terminal: here,
                band,
            });
        }
        for kind in SplitKind::BOTH {
            if let Some((e, step)) = edge(g, key.0, kind) {
                let next = here.advance(&step, g.node(e.to));
                let nk: Key = (e.to, next.remainders);
                if !parent.contains_key(&nk) {
                    parent.insert(nk.clone(), Some((key.clone(), e)));
                    queue.push_back(nk);
                }
            }
        }
    }
    Err(ModpError::Unreachable)
}

/// Every assignment of remainders to `node` with zero on the preserving bands and a
/// reversing pair on opposite sides summing to a nonzero remainder.
pub fn claim_assignments(node: &GeneralizedPermutation, p: u64) -> Vec<RemainderState> {
    let d = node.d();
    let classes = node.classes();
    let free: Vec<usize> = (0..d).filter(|&b| classes[b].is_reversing()).collect();
    let mut out = Vec::new();
    let total = (p as usize).pow(free.len() as u32);
    for code in 0..total {
        let mut r = vec![0u64; d];
        let mut c = code;
        for &b in &free {
            r[b] = (c % p as usize) as u64;
            c /= p as usize;
        }
        let s = RemainderState {
            p,
            node: node.clone(),
            remainders: r,
        };
        if matches!(check_claim_invariant(&s), ClaimOutcome::ReversingPair(..)) {
            out.push(s);
        }
    }
    out
}

/// The longest sequence [`coprime_band_sequence`] needs over all such assignments.
pub fn max_sequence_length(node: &GeneralizedPermutation, p: u64, budget: usize) -> Result<usize, ModpError> {
    check_prime(p)?;
    claim_assignments(node, p)
        .iter()
        .map(|s| coprime_band_sequence(s, budget).map(|q| q.len()))
        .try_fold(0, |m, l| l.map(|l| m.max(l)))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CoprimeOutcome {
    Tower(CyclicTower),
    /// From an all-reversing start every preserving norm is even, so no height is odd.
    StructuralObstruction(String),
}

/// Like [`crate::approx::find_cyclic_tower`], but only accepts heights prime to `p`.
/// The Claim is checked at every stage when the start has a preserving band.
pub fn find_coprime_tower(x: &Exchange, delta: &Rational, p: u64, budget: usize) -> Result<CoprimeOutcome, ModpError> {
    check_prime(p)?;
    if p == 2 && x.perm().is_all_reversing() {
        return Ok(CoprimeOutcome::StructuralObstruction(
            "all bands reversing at the start: every preserving column norm stays even".into(),
        ));
    }
    let watch_claim = x.perm().has_preserving_band();
    let mut scan = TowerScan::new(x, delta)?;
    let mut ex = Expander::new(x);
    let pb = BigInt::from(p);
    let mut state = RemainderState::initial(x.perm(), p)?;
    loop {
        if watch_claim && check_claim_invariant(&state) == ClaimOutcome::Violation {
            return Err(ModpError::ClaimViolation {
                depth: ex.depth(),
                state: state.describe(),
            });
        }
        if let Some(t) = scan.check(&ex) {
            if t.height.gcd(&pb).is_one() {
                return Ok(CoprimeOutcome::Tower(t));
            }
        }
        if ex.depth() >= budget {
            return Err(ApproxError::BudgetExceeded(budget).into());
        }
        let step = ex.step().map_err(|cause| ApproxError::ExpansionHalted {
            at: ex.depth(),
            cause,
        })?;
        state = state.advance(&step, ex.current().perm());
    }
}

/// Splits `node` along `edges` symbolically and returns the end node; used to replay
/// sequences without the diagram.
pub fn replay(node: &GeneralizedPermutation, kinds: &[SplitKind]) -> Option<GeneralizedPermutation> {
    kinds
        .iter()
        .try_fold(node.clone(), |n, &k| split_permutation(&n, k).ok().map(|(next, _, _)| next))
}
