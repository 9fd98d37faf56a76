//! Sampling and Monte Carlo experiments.
//!
//! The sampler draws a uniform point of the simplex on an integer grid and then
//! rescales the two reversing groups so that both sides have the same length. This is
//! not Lebesgue measure on the width polytope, but every full-measure phenomenon is
//! still seen. Every report records its seed and tolerance, and fixed inputs give
//! byte-identical output.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::approx::{find_cyclic_tower, tower_rigidity, ApproxError};
use crate::exchange::{Exchange, ExchangeError, WidthVector};
use crate::genperm::{GeneralizedPermutation, OrientationClass, Side};
use crate::lattice::{LatticeExchange, LatticeOverflow};
use crate::modp::{find_coprime_tower, CoprimeOutcome, ModpError};
use crate::rational::{format_rational, rat, to_f64, Rational};

/// Relative deviation allowed in the equidistribution checks.
pub const DEFAULT_TOLERANCE: f64 = 0.05;
/// Resamples allowed before a degenerate draw is reported.
const MAX_RESAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LabError {
    #[error("every draw had a zero width after {0} attempts")]
    DegenerateSample(usize),
    #[error("denominator bound must be at least d = {0}")]
    GridTooCoarse(usize),
    #[error("permutation admits no widths")]
    NoWidths,
    #[error(transparent)]
    Exchange(#[from] ExchangeError),
    #[error(transparent)]
    Lattice(#[from] LatticeOverflow),
    #[error(transparent)]
    Modp(#[from] ModpError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplerConfig {
    pub perm: GeneralizedPermutation,
    pub denominator_bound: BigInt,
    pub seed: u64,
    pub count: usize,
}

impl SamplerConfig {
    pub fn new(perm: GeneralizedPermutation, denominator_bound: impl Into<BigInt>, seed: u64, count: usize) -> Self {
        SamplerConfig {
            perm,
            denominator_bound: denominator_bound.into(),
            seed,
            count,
        }
    }

    /// `LINVEX_SEED` wins over the configured seed.
    pub fn effective_seed(&self) -> u64 {
        seed_override(self.seed)
    }
}

pub fn seed_override(seed: u64) -> u64 {
    std::env::var("LINVEX_SEED")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(seed)
}

/// The generator for sample `index`: one ChaCha stream per index, so samples do not
/// depend on how many were drawn before.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Uniform in `0..bound`.
pub fn random_below(rng: &mut impl RngCore, bound: &BigInt) -> BigInt {
    assert!(bound > &BigInt::zero());
    let bits = bound.bits();
    let words = bits.div_ceil(64).max(1);
    loop {
        let mut v = BigInt::zero();
        for _ in 0..words {
            v = (v << 64) + BigInt::from(rng.next_u64());
        }
        v >>= words * 64 - bits;
        if &v < bound {
            return v;
        }
    }
}

/// Grid gaps of a uniform point of the simplex: `d` positive integers summing to `bound`.
pub fn simplex_gaps(rng: &mut impl RngCore, d: usize, bound: &BigInt) -> Result<Vec<BigInt>, LabError> {
    if bound < &BigInt::from(d) {
        return Err(LabError::GridTooCoarse(d));
    }
    for _ in 0..MAX_RESAMPLES {
        let upper = bound + 1;
        let mut cuts: Vec<BigInt> = (1..d).map(|_| random_below(rng, &upper)).collect();
        cuts.push(BigInt::zero());
        cuts.push(bound.clone());
        cuts.sort();
        let gaps: Vec<BigInt> = cuts.windows(2).map(|w| &w[1] - &w[0]).collect();
        if gaps.iter().all(|g| g > &BigInt::zero()) {
            return Ok(gaps);
        }
    }
    Err(LabError::DegenerateSample(MAX_RESAMPLES))
}

/// Scales `A₊` by `S₋(S₊+S₋)`, `A₋` by `S₊(S₊+S₋)` and preserving bands by `2S₊S₋`,
/// where `S±` are the raw sums of the two groups. Both sides then have length
/// `2S₊S₋(P + S₊ + S₋)`. Classical permutations are left alone.
pub fn balance(perm: &GeneralizedPermutation, raw: &[BigInt]) -> Result<Vec<BigInt>, LabError> {
    use OrientationClass::*;
    let sum = |c| -> BigInt { (0..perm.d()).filter(|&b| perm.class(b) == c).map(|b| raw[b].clone()).sum() };
    let (sp, sm) = (sum(ReversingTop), sum(ReversingBottom));
    match (sp.is_zero(), sm.is_zero()) {
        (true, true) => return Ok(raw.to_vec()),
        (false, false) => {}
        _ => return Err(LabError::NoWidths),
    }
    let both = &sp + &sm;
    Ok((0..perm.d())
        .map(|b| match perm.class(b) {
            Preserving => &raw[b] * 2 * &sp * &sm,
            ReversingTop => &raw[b] * &sm * &both,
            ReversingBottom => &raw[b] * &sp * &both,
        })
        .collect())
}

fn normalized(values: Vec<BigInt>) -> WidthVector {
    let total: BigInt = values.iter().sum();
    WidthVector::new(values.into_iter().map(|v| Rational::new(v, total.clone())).collect())
}

/// One sample per index, normalized to total measure 1.
pub fn sample_widths(cfg: &SamplerConfig) -> Result<Vec<WidthVector>, LabError> {
    if !cfg.perm.admits_widths() {
        return Err(LabError::NoWidths);
    }
    let seed = cfg.effective_seed();
    (0..cfg.count)
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            let gaps = simplex_gaps(&mut rng, cfg.perm.d(), &cfg.denominator_bound)?;
            Ok(normalized(balance(&cfg.perm, &gaps)?))
        })
        .collect()
}

pub fn sample_exchanges(cfg: &SamplerConfig) -> Result<Vec<Exchange>, LabError> {
    sample_widths(cfg)?
        .into_iter()
        .map(|w| Ok(Exchange::build(cfg.perm.clone(), w)?))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub id: String,
    pub parameters: BTreeMap<String, Value>,
    pub records: Vec<BTreeMap<String, Value>>,
    pub aggregate: BTreeMap<String, Value>,
    pub tolerance: Option<f64>,
    /// `None` when there was not enough data to judge.
    pub passed: Option<bool>,
    pub insufficient: bool,
}

impl ExperimentReport {
    fn new(id: &str) -> Self {
        ExperimentReport {
            id: id.to_string(),
            parameters: BTreeMap::new(),
            records: Vec::new(),
            aggregate: BTreeMap::new(),
            tolerance: None,
            passed: None,
            insufficient: false,
        }
    }

    fn param(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.parameters.insert(key.to_string(), value.into());
        self
    }

    fn stat(&mut self, key: &str, value: impl Into<Value>) {
        self.aggregate.insert(key.to_string(), value.into());
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    /// One row per record; columns are the union of record keys in sorted order.
    pub fn to_csv(&self) -> String {
        let mut cols: Vec<&String> = self.records.iter().flat_map(|r| r.keys()).collect();
        cols.sort();
        cols.dedup();
        let mut out = cols.iter().map(|c| c.as_str()).collect::<Vec<_>>().join(",");
        out.push('\n');
        for r in &self.records {
            let row: Vec<String> = cols
                .iter()
                .map(|c| match r.get(*c) {
                    None | Some(Value::Null) => String::new(),
                    Some(Value::String(s)) => csv_field(s),
                    Some(v) => csv_field(&v.to_string()),
                })
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// A point of `I₊ ⊔ I₋` on the lattice, drawn with an odd offset so that it never
/// sits on an endpoint.
fn random_start(rng: &mut impl RngCore, lat: &LatticeExchange) -> (Side, i128) {
    let side = if rng.random_bool(0.5) { Side::Top } else { Side::Bottom };
    let half = lat.side_length() / 2;
    (side, 2 * rng.random_range(0..half) + 1)
}

/// Index of the cell of `(side, k)` when `I₊ ⊔ I₋` is cut into `bins` equal cells.
/// A classical exchange never changes side, so there only the current side is cut.
fn cell(lat: &LatticeExchange, side: Side, k: i128, bins: usize, classical: bool) -> usize {
    let l = lat.side_length();
    let (pos, span) = match (classical, side) {
        (true, _) => (k, l),
        (false, Side::Top) => (k, 2 * l),
        (false, Side::Bottom) => (k + l, 2 * l),
    };
    let i = match pos.checked_mul(bins as i128) {
        Some(v) => (v / span) as usize,
        None => (pos as f64 / span as f64 * bins as f64) as usize,
    };
    i.min(bins - 1)
}

/// `max |count · cells / total − 1|`.
fn max_relative_deviation(counts: &[u64], total: u64) -> f64 {
    let cells = counts.len() as f64;
    counts
        .iter()
        .map(|&c| (c as f64 * cells / total as f64 - 1.0).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Occupancy {
    pub counts: Vec<u64>,
    pub total: u64,
}

impl Occupancy {
    pub fn max_deviation(&self) -> Option<f64> {
        (self.total > 0).then(|| max_relative_deviation(&self.counts, self.total))
    }
}

/// Occupancy of `bins` cells along the orbit of `xᵖ`, one record per application.
pub fn power_occupancy(x: &Exchange, p: u64, bins: usize, iters: u64, seed: u64) -> Result<Occupancy, LabError> {
    let lat = LatticeExchange::new(x, 1)?;
    let mut rng = substream(seed, 0);
    let (mut side, mut k) = random_start(&mut rng, &lat);
    let bins = bins.max(1);
    let mut counts = vec![0u64; bins];
    let classical = x.perm().is_classical();
    for _ in 0..iters {
        for _ in 0..p {
            (side, k) = lat.apply(side, k);
        }
        counts[cell(&lat, side, k, bins, classical)] += 1;
    }
    Ok(Occupancy { counts, total: iters })
}

/// Coprime-tower search plus a Birkhoff occupancy count for `xᵖ`.
pub fn total_ergodicity_experiment(
    x: &Exchange,
    p: u64,
    bins: usize,
    iters: u64,
    seed: u64,
    budget: usize,
) -> Result<ExperimentReport, LabError> {
    let seed = seed_override(seed);
    let mut report = ExperimentReport::new("total-ergodicity")
        .param("p", p)
        .param("bins", bins)
        .param("iters", iters)
        .param("seed", seed)
        .param("budget", budget)
        .param("delta", "1/4");
    report.tolerance = Some(DEFAULT_TOLERANCE);
    let tower = match find_coprime_tower(x, &rat(1, 4), p, budget) {
        Ok(CoprimeOutcome::Tower(t)) => json!({"outcome": "tower", "height": t.height.to_string(), "depth": t.depth, "band": t.label}),
        Ok(CoprimeOutcome::StructuralObstruction(why)) => json!({"outcome": "structural-obstruction", "reason": why}),
        Err(ModpError::Approx(e @ ApproxError::BudgetExceeded(_))) => json!({"outcome": "budget-exceeded", "reason": e.to_string()}),
        Err(ModpError::Approx(e)) => json!({"outcome": "halted", "reason": e.to_string()}),
        Err(e) => return Err(e.into()),
    };
    report.stat("tower", tower);
    let occ = power_occupancy(x, p, bins, iters, seed)?;
    for (i, &c) in occ.counts.iter().enumerate() {
        report.records.push(BTreeMap::from([("bin".to_string(), json!(i)), ("count".to_string(), json!(c))]));
    }
    report.stat("total", occ.total);
    match occ.max_deviation() {
        Some(dev) => {
            report.stat("max_deviation", dev);
            report.passed = Some(dev < DEFAULT_TOLERANCE);
        }
        None => report.insufficient = true,
    }
    Ok(report)
}

/// How the two orbits of [`product_experiment`] start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Coupling {
    Independent,
    /// Both coordinates start at the same point. Used when the exchanges coincide,
    /// where the orbit stays on the diagonal.
    Diagonal,
}

/// Joint occupancy of a `boxes × boxes` grid along the orbit of `x₁ × x₂`, measured
/// against product Lebesgue measure. Evidence only.
pub fn product_experiment(x1: &Exchange, x2: &Exchange, boxes: usize, iters: u64, seed: u64) -> Result<ExperimentReport, LabError> {
    let seed = seed_override(seed);
    let coupling = if x1.same_map(x2) {
        Coupling::Diagonal
    } else {
        Coupling::Independent
    };
    let mut report = ExperimentReport::new("product")
        .param("boxes", boxes)
        .param("iters", iters)
        .param("seed", seed)
        .param("coupling", serde_json::to_value(coupling).expect("enum serializes"));
    report.tolerance = Some(DEFAULT_TOLERANCE);
    let (l1, l2) = (LatticeExchange::new(x1, 1)?, LatticeExchange::new(x2, 1)?);
    let mut rng = substream(seed, 0);
    let mut a = random_start(&mut rng, &l1);
    let mut b = match coupling {
        Coupling::Diagonal => a,
        Coupling::Independent => random_start(&mut rng, &l2),
    };
    let boxes = boxes.max(1);
    let mut counts = vec![0u64; boxes * boxes];
    let (c1, c2) = (x1.perm().is_classical(), x2.perm().is_classical());
    for _ in 0..iters {
        a = l1.apply(a.0, a.1);
        b = l2.apply(b.0, b.1);
        counts[cell(&l1, a.0, a.1, boxes, c1) * boxes + cell(&l2, b.0, b.1, boxes, c2)] += 1;
    }
    for (i, &c) in counts.iter().enumerate() {
        report.records.push(BTreeMap::from([
            ("row".to_string(), json!(i / boxes)),
            ("col".to_string(), json!(i % boxes)),
            ("count".to_string(), json!(c)),
        ]));
    }
    let occ = Occupancy { counts, total: iters };
    report.stat("total", occ.total);
    match occ.max_deviation() {
        Some(dev) => {
            report.stat("max_deviation", dev);
            report.passed = Some(dev < DEFAULT_TOLERANCE);
        }
        None => report.insufficient = true,
    }
    Ok(report)
}

/// Tower bases tried by [`rigidity_scan`], from coarse to fine.
pub const SCAN_DELTAS: [(i64, i64); 5] = [(1, 2), (1, 4), (1, 8), (1, 16), (1, 32)];
/// Piece budget for exact defects in scans.
pub const SCAN_PIECE_LIMIT: usize = 200_000;

/// For each sample, which dyadic windows `[2ⁱ, 2ⁱ⁺¹)` below `horizon` contain a time
/// with defect below `ξ`. Candidates are `2ⁱ` itself and the heights of the towers
/// found for the deltas in [`SCAN_DELTAS`].
pub fn rigidity_scan(cfg: &SamplerConfig, xi: &Rational, horizon: u64, budget: usize) -> Result<ExperimentReport, LabError> {
    let seed = cfg.effective_seed();
    let windows = (64 - horizon.max(1).leading_zeros() - 1) as usize;
    let mut report = ExperimentReport::new("rigidity-scan")
        .param("perm", format!("{} / {}", cfg.perm.top_labels().join(" "), cfg.perm.bottom_labels().join(" ")))
        .param("denominator_bound", cfg.denominator_bound.to_string())
        .param("seed", seed)
        .param("count", cfg.count)
        .param("xi", format_rational(xi))
        .param("horizon", horizon)
        .param("budget", budget);
    let mut densities = Vec::new();
    for (i, x) in sample_exchanges(cfg)?.iter().enumerate() {
        let mut hit = vec![false; windows];
        let mut heights = Vec::new();
        for &(a, b) in &SCAN_DELTAS {
            if let Ok(t) = find_cyclic_tower(x, &rat(a, b), budget) {
                let rec = tower_rigidity(x, &t, xi, SCAN_PIECE_LIMIT);
                heights.push(t.height.to_string());
                if rec.flagged && rec.n < horizon {
                    hit[window(rec.n)] = true;
                }
            }
        }
        for (w, h) in hit.iter_mut().enumerate() {
            if *h {
                continue;
            }
            if let Ok(d) = crate::approx::rigidity_defect(x, 1 << w, SCAN_PIECE_LIMIT) {
                *h = &d < xi;
            }
        }
        let flagged: Vec<usize> = (0..windows).filter(|&w| hit[w]).collect();
        let density = if windows == 0 {
            0.0
        } else {
            flagged.len() as f64 / windows as f64
        };
        densities.push(density);
        report.records.push(BTreeMap::from([
            ("sample".to_string(), json!(i)),
            ("widths".to_string(), json!(x.widths().values().iter().map(format_rational).collect::<Vec<_>>().join(" "))),
            ("tower_heights".to_string(), json!(heights.join(" "))),
            ("windows".to_string(), json!(flagged.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(" "))),
            ("density".to_string(), json!(density)),
        ]));
    }
    let mean = if densities.is_empty() {
        0.0
    } else {
        densities.iter().sum::<f64>() / densities.len() as f64
    };
    report.stat("mean_density", mean);
    report.stat("windows", windows);
    report.insufficient = densities.is_empty() || windows == 0;
    Ok(report)
}

fn window(n: u64) -> usize {
    (63 - n.max(1).leading_zeros()) as usize
}

/// Mean raw simplex coordinate per band against the exact marginal mean `1/d`, with
/// the z-score. A goodness-of-fit report for the grid sampler, not a test.
pub fn sampler_self_check(cfg: &SamplerConfig) -> Result<ExperimentReport, LabError> {
    let seed = cfg.effective_seed();
    let d = cfg.perm.d();
    let mut sums = vec![0.0; d];
    for i in 0..cfg.count {
        let mut rng = substream(seed, i as u64);
        let gaps = simplex_gaps(&mut rng, d, &cfg.denominator_bound)?;
        for (s, g) in sums.iter_mut().zip(&gaps) {
            *s += to_f64(&Rational::new(g.clone(), cfg.denominator_bound.clone()));
        }
    }
    let n = cfg.count.max(1) as f64;
    let df = d as f64;
    let sigma = ((df - 1.0) / (df * df * (df + 1.0)) / n).sqrt();
    let mut report = ExperimentReport::new("sampler-marginals")
        .param("seed", seed)
        .param("count", cfg.count)
        .param("denominator_bound", cfg.denominator_bound.to_string());
    let mut worst: f64 = 0.0;
    for (b, s) in sums.iter().enumerate() {
        let z = (s / n - 1.0 / df) / sigma;
        worst = worst.max(z.abs());
        report.records.push(BTreeMap::from([
            ("band".to_string(), json!(cfg.perm.label(b))),
            ("class".to_string(), json!(cfg.perm.class(b).to_string())),
            ("mean".to_string(), json!(s / n)),
            ("z".to_string(), json!(z)),
        ]));
    }
    report.stat("max_abs_z", worst);
    report.tolerance = Some(3.0);
    report.passed = (cfg.count > 0).then_some(worst < 3.0);
    report.insufficient = cfg.count == 0;
    Ok(report)
}

/// Widths as `f64`, for plotting columns.
pub fn widths_f64(w: &WidthVector) -> Vec<f64> {
    w.values().iter().map(to_f64).collect()
}

/// Exact integer value of a lattice count, for reports.
pub fn lattice_count(v: &BigInt) -> u64 {
    v.to_u64().unwrap_or(u64::MAX)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gp(top: &str, bottom: &str) -> GeneralizedPermutation {
        let t: Vec<&str> = top.split_whitespace().collect();
        let b: Vec<&str> = bottom.split_whitespace().collect();
        GeneralizedPermutation::new(&t, &b).unwrap()
    }

    #[test]
    fn classical_pairs_sum_to_one() {
        let cfg = SamplerConfig::new(gp("A B", "B A"), 1000, 3, 50);
        for w in sample_widths(&cfg).unwrap() {
            assert_eq!(w.get(0) + w.get(1), rat(1, 1));
            assert!((w.get(0) * rat(1000, 1)).is_integer());
        }
    }

    #[test]
    fn samples_build() {
        let cfg = SamplerConfig::new(gp("A A B C", "B D D C"), 1_000_000, 9, 40);
        let xs = sample_exchanges(&cfg).unwrap();
        assert_eq!(xs.len(), 40);
        assert_eq!(sample_exchanges(&cfg).unwrap(), xs);
    }

    #[test]
    fn substreams_are_independent_of_count() {
        let a = SamplerConfig::new(gp("A A B", "B C C"), 1 << 20, 5, 3);
        let b = SamplerConfig { count: 7, ..a.clone() };
        assert_eq!(sample_widths(&a).unwrap()[..], sample_widths(&b).unwrap()[..3]);
    }

    #[test]
    fn coarse_grid_rejected() {
        let cfg = SamplerConfig::new(gp("A A B C", "B D D C"), 3, 0, 1);
        assert_eq!(sample_widths(&cfg), Err(LabError::GridTooCoarse(4)));
    }

    #[test]
    fn zero_iterations_are_insufficient() {
        let x = Exchange::build(gp("A A B", "B C C"), WidthVector::new(vec![rat(1, 3), rat(1, 7), rat(1, 3)])).unwrap();
        let r = total_ergodicity_experiment(&x, 2, 10, 0, 1, 50).unwrap();
        assert!(r.insufficient);
        assert_eq!(r.passed, None);
        let r = product_experiment(&x, &x, 5, 0, 1).unwrap();
        assert!(r.insufficient);
    }

    #[test]
    fn occupancy_conserves_counts() {
        let x = Exchange::build(gp("A A B", "B C C"), WidthVector::new(vec![rat(1, 3), rat(1, 7), rat(1, 3)])).unwrap();
        let occ = power_occupancy(&x, 3, 17, 12345, 4).unwrap();
        assert_eq!(occ.counts.iter().sum::<u64>(), 12345);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let mut r = ExperimentReport::new("t");
        r.records.push(BTreeMap::from([("a".to_string(), json!(1)), ("b".to_string(), json!("x,y"))]));
        assert_eq!(r.to_csv(), "a,b\n1,\"x,y\"\n");
    }
}
