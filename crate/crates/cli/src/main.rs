//! Command-line front end. Exit codes: 0 success, 1 domain error, 2 usage error,
//! 3 budget exhausted, 4 a mathematical invariant failed.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use linvex::approx::{
    find_cyclic_tower, rigidity_record_times, verify_tower, ApproxError, TowerCertificate, DEFAULT_MAX_HEIGHT,
};
use linvex::diagram::{attractors, forward_closure, summarize, DEFAULT_NODE_BUDGET};
use linvex::exchange::{parse_width_file, width_file};
use linvex::isometry::DEFAULT_PIECE_LIMIT;
use linvex::lab::{product_experiment, rigidity_scan, total_ergodicity_experiment, ExperimentReport, SamplerConfig};
use linvex::modp::{check_claim_invariant, find_coprime_tower, ClaimOutcome, CoprimeOutcome, ModpError, RemainderState};
use linvex::rational::{format_rational, parse_rational};
use linvex::rauzy::{expand, visit_counts, Expander};
use linvex::{Exchange, GeneralizedPermutation, Point, Rational, Side};

#[derive(Parser)]
#[command(name = "linvex", version, about = "Exact tools for non-classical interval exchanges")]
struct Cli {
    /// Seed for every random choice; LINVEX_SEED overrides it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Split or node budget.
    #[arg(long, global = true, default_value_t = 10_000)]
    budget: usize,
    /// Write the artifact here instead of stdout. Reports ending in `.csv` are written as CSV.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct PermArg {
    /// A permutation file, or inline labels such as `A A B | B C C`.
    #[arg(long)]
    perm: String,
}

#[derive(Args)]
struct ExchangeArgs {
    #[command(flatten)]
    perm: PermArg,
    /// A width file, or inline `A=3/7,B=1/7`.
    #[arg(long)]
    widths: String,
}

#[derive(Subcommand)]
enum Command {
    /// Check a permutation and, if given, widths.
    Validate {
        #[command(flatten)]
        perm: PermArg,
        #[arg(long)]
        widths: Option<String>,
    },
    /// Apply the exchange (or its inverse) to a point such as `top:1/3`.
    Apply {
        #[command(flatten)]
        x: ExchangeArgs,
        #[arg(long)]
        point: String,
        #[arg(long)]
        inverse: bool,
    },
    Orbit {
        #[command(flatten)]
        x: ExchangeArgs,
        #[arg(long)]
        point: String,
        #[arg(long, default_value_t = 10)]
        steps: usize,
    },
    /// One Rauzy split.
    Split {
        #[command(flatten)]
        x: ExchangeArgs,
    },
    /// A stage dump after up to `steps` splits.
    Expand {
        #[command(flatten)]
        x: ExchangeArgs,
        #[arg(long, default_value_t = 10)]
        steps: usize,
    },
    /// `Q_n` beside the orbit-count matrix.
    Visits {
        #[command(flatten)]
        x: ExchangeArgs,
        #[arg(long, default_value_t = 10)]
        depth: usize,
    },
    /// The forward closure of a node as a node-link graph.
    Diagram {
        #[command(flatten)]
        perm: PermArg,
    },
    Attractors {
        #[command(flatten)]
        perm: PermArg,
    },
    /// Find and verify a cyclic tower; prints its certificate.
    Tower {
        #[command(flatten)]
        x: ExchangeArgs,
        #[arg(long, default_value = "1/4")]
        delta: String,
        #[arg(long, default_value_t = DEFAULT_MAX_HEIGHT)]
        max_height: u64,
    },
    /// Re-verify a stored certificate.
    VerifyTower {
        #[command(flatten)]
        x: ExchangeArgs,
        #[arg(long)]
        certificate: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MAX_HEIGHT)]
        max_height: u64,
    },
    /// Record-minimum defect times up to the horizon.
    Rigidity {
        #[command(flatten)]
        x: ExchangeArgs,
        #[arg(long, default_value_t = 100)]
        horizon: u64,
        #[arg(long)]
        xi: Option<String>,
    },
    /// Per stage: band, class, column norm and its remainder.
    ModpTrace {
        #[command(flatten)]
        x: ExchangeArgs,
        #[arg(long, default_value_t = 3)]
        p: u64,
        #[arg(long, default_value_t = 20)]
        steps: usize,
    },
    CoprimeTower {
        #[command(flatten)]
        x: ExchangeArgs,
        #[arg(long, default_value_t = 3)]
        p: u64,
        #[arg(long, default_value = "1/4")]
        delta: String,
    },
    Ergodicity {
        #[command(flatten)]
        x: ExchangeArgs,
        #[arg(long, default_value_t = 2)]
        p: u64,
        #[arg(long, default_value_t = 100)]
        bins: usize,
        #[arg(long, default_value_t = 100_000)]
        iters: u64,
    },
    Product {
        #[arg(long)]
        perm1: String,
        #[arg(long)]
        widths1: String,
        #[arg(long)]
        perm2: String,
        #[arg(long)]
        widths2: String,
        #[arg(long, default_value_t = 20)]
        boxes: usize,
        #[arg(long, default_value_t = 100_000)]
        iters: u64,
    },
    /// Rigidity densities over sampled widths.
    Scan {
        #[command(flatten)]
        perm: PermArg,
        #[arg(long, default_value_t = 1_000_000)]
        grid: u64,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value = "1/10")]
        xi: String,
        #[arg(long, default_value_t = 1024)]
        horizon: u64,
    },
}

enum Failure {
    Domain(anyhow::Error),
    Budget(String),
    Violation(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Domain(e)
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Domain(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Budget(e)) => {
            eprintln!("budget exhausted: {e}");
            ExitCode::from(3)
        }
        Err(Failure::Violation(e)) => {
            eprintln!("invariant violated: {e}");
            ExitCode::from(4)
        }
    }
}

fn read_perm(arg: &str) -> anyhow::Result<GeneralizedPermutation> {
    if Path::new(arg).is_file() {
        let text = fs::read_to_string(arg).with_context(|| format!("reading {arg}"))?;
        return serde_json::from_str(&text).with_context(|| format!("parsing {arg}"));
    }
    let (top, bottom) = arg
        .split_once('|')
        .ok_or_else(|| anyhow!("{arg:?} is neither a file nor `TOP | BOTTOM`"))?;
    let t: Vec<&str> = top.split_whitespace().collect();
    let b: Vec<&str> = bottom.split_whitespace().collect();
    Ok(GeneralizedPermutation::new(&t, &b)?)
}

fn read_exchange(perm: &str, widths: &str) -> anyhow::Result<Exchange> {
    let p = read_perm(perm)?;
    let raw: BTreeMap<String, String> = if Path::new(widths).is_file() {
        let text = fs::read_to_string(widths).with_context(|| format!("reading {widths}"))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {widths}"))?
    } else {
        widths
            .split(',')
            .map(|kv| {
                let (k, v) = kv.split_once('=').ok_or_else(|| anyhow!("expected LABEL=VALUE, got {kv:?}"))?;
                Ok((k.trim().to_string(), v.trim().to_string()))
            })
            .collect::<anyhow::Result<_>>()?
    };
    let w = parse_width_file(&p, &raw)?;
    Ok(Exchange::build(p, w)?)
}

fn exchange(a: &ExchangeArgs) -> anyhow::Result<Exchange> {
    read_exchange(&a.perm.perm, &a.widths)
}

fn rational(s: &str) -> anyhow::Result<Rational> {
    parse_rational(s).map_err(|e| anyhow!("{s:?}: {e}"))
}

fn point(s: &str) -> anyhow::Result<Point> {
    let (side, offset) = s.split_once(':').ok_or_else(|| anyhow!("expected SIDE:OFFSET, got {s:?}"))?;
    let side = match side.trim().to_ascii_lowercase().as_str() {
        "top" | "+" => Side::Top,
        "bottom" | "-" => Side::Bottom,
        other => bail!("unknown side {other:?}"),
    };
    Ok(Point::new(side, rational(offset.trim())?))
}

fn emit(cli: &Cli, value: &impl Serialize) -> Outcome {
    let text = serde_json::to_string_pretty(value).map_err(anyhow::Error::from)?;
    write_out(cli, &text)
}

fn write_out(cli: &Cli, text: &str) -> Outcome {
    match &cli.out {
        Some(path) => fs::write(path, format!("{text}\n")).with_context(|| format!("writing {}", path.display()))?,
        // a closed pipe downstream is not an error of ours
        None => write_out_stdout(text),
    }
    Ok(())
}

fn write_out_stdout(text: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn emit_report(cli: &Cli, report: &ExperimentReport) -> Outcome {
    let csv = cli.out.as_ref().is_some_and(|p| p.extension().is_some_and(|e| e == "csv"));
    if csv {
        write_out(cli, report.to_csv().trim_end())
    } else {
        write_out(cli, &report.to_json())
    }
}

fn approx_failure(e: ApproxError) -> Failure {
    match e {
        ApproxError::BudgetExceeded(_) => Failure::Budget(e.to_string()),
        e => Failure::Domain(e.into()),
    }
}

fn modp_failure(e: ModpError) -> Failure {
    match e {
        ModpError::Approx(e) => approx_failure(e),
        e @ ModpError::ClaimViolation { .. } => Failure::Violation(e.to_string()),
        e => Failure::Domain(e.into()),
    }
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Validate { perm, widths } => {
            let p = read_perm(&perm.perm)?;
            let classes: BTreeMap<&str, String> = (0..p.d()).map(|b| (p.label(b), p.class(b).to_string())).collect();
            let mut out = json!({
                "perm": p,
                "d": p.d(),
                "classes": classes,
                "non_classical": p.is_non_classical(),
                "admits_widths": p.admits_widths(),
                "combinatorially_reducible": p.is_combinatorially_reducible(),
                "reducible_for_all_widths": p.is_reducible_for_all_widths(),
            });
            if let Some(w) = widths {
                let x = read_exchange(&perm.perm, w)?;
                out["side_length"] = json!(format_rational(x.side_length()));
                out["widths"] = json!(width_file(x.perm(), x.widths()));
            }
            emit(cli, &out)
        }
        Command::Apply { x, point: pt, inverse } => {
            let x = exchange(x)?;
            let t = point(pt)?;
            let image = if *inverse { x.apply_inverse(&t) } else { x.apply(&t) }.map_err(anyhow::Error::from)?;
            emit(cli, &image)
        }
        Command::Orbit { x, point: pt, steps } => {
            let x = exchange(x)?;
            let orbit = x.orbit(&point(pt)?, *steps).map_err(anyhow::Error::from)?;
            let lines: Vec<_> = orbit.lines().collect();
            emit(cli, &json!({"points": lines, "hit_endpoint": orbit.hit_endpoint}))
        }
        Command::Split { x } => {
            let x = exchange(x)?;
            let (next, step) = linvex::split(&x).map_err(anyhow::Error::from)?;
            emit(
                cli,
                &json!({
                    "kind": step.kind,
                    "winner": x.perm().label(step.winner),
                    "loser": x.perm().label(step.loser),
                    "perm": next.perm(),
                    "widths": width_file(next.perm(), next.widths()),
                }),
            )
        }
        Command::Expand { x, steps } => {
            let x = exchange(x)?;
            emit(cli, &expand(&x, *steps).to_file())
        }
        Command::Visits { x, depth } => {
            let x = exchange(x)?;
            let stage = expand(&x, *depth);
            if let Some(h) = &stage.halted {
                return Err(Failure::Domain(anyhow!("expansion halted after {} splits: {h}", stage.depth())));
            }
            let counts = visit_counts(&x, *depth).map_err(anyhow::Error::from)?;
            let equal = counts == stage.q;
            let q = stage.q.to_string_rows();
            let c = counts.to_string_rows();
            let width = q.iter().chain(&c).flatten().map(|s| s.len()).max().unwrap_or(1);
            let row = |r: &Vec<String>| r.iter().map(|s| format!("{s:>width$}")).collect::<Vec<_>>().join(" ");
            let mut text = format!("Q_{depth} | visits\n");
            for (a, b) in q.iter().zip(&c) {
                text.push_str(&format!("{} | {}\n", row(a), row(b)));
            }
            text.push_str(if equal { "EQUAL" } else { "UNEQUAL" });
            if let Some(path) = &cli.out {
                let dump = json!({"depth": depth, "q": q, "visits": c, "equal": equal});
                fs::write(path, serde_json::to_string_pretty(&dump).map_err(anyhow::Error::from)?)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            write_out_stdout(&text);
            if equal {
                Ok(())
            } else {
                Err(Failure::Violation("orbit counts differ from Q_n".into()))
            }
        }
        Command::Diagram { perm } => {
            let p = read_perm(&perm.perm)?;
            let g = forward_closure(&p, cli.budget.max(DEFAULT_NODE_BUDGET)).map_err(|e| Failure::Budget(e.to_string()))?;
            emit(cli, &g.to_node_link())
        }
        Command::Attractors { perm } => {
            let p = read_perm(&perm.perm)?;
            let g = forward_closure(&p, cli.budget.max(DEFAULT_NODE_BUDGET)).map_err(|e| Failure::Budget(e.to_string()))?;
            let sets: Vec<Vec<&GeneralizedPermutation>> =
                attractors(&g).into_iter().map(|a| a.into_iter().map(|i| g.node(i)).collect()).collect();
            emit(cli, &json!({"summary": summarize(&g), "attractors": sets}))
        }
        Command::Tower { x, delta, max_height } => {
            let x = exchange(x)?;
            let tower = find_cyclic_tower(&x, &rational(delta)?, cli.budget).map_err(approx_failure)?;
            let v = verify_tower(&x, &tower, *max_height).map_err(approx_failure)?;
            emit(cli, &tower.certificate(&x, &v))?;
            if v.passed() {
                Ok(())
            } else {
                Err(Failure::Violation("tower verification failed".into()))
            }
        }
        Command::VerifyTower { x, certificate, max_height } => {
            let x = exchange(x)?;
            let text = fs::read_to_string(certificate).with_context(|| format!("reading {}", certificate.display()))?;
            let cert: TowerCertificate = serde_json::from_str(&text).map_err(anyhow::Error::from)?;
            let tower = cert
                .tower(&x)
                .ok_or_else(|| Failure::Violation("certificate does not describe a tower of this exchange".into()))?;
            let v = verify_tower(&x, &tower, *max_height).map_err(approx_failure)?;
            emit(cli, &v)?;
            if v.passed() {
                Ok(())
            } else {
                Err(Failure::Violation("tower verification failed".into()))
            }
        }
        Command::Rigidity { x, horizon, xi } => {
            let x = exchange(x)?;
            let xi = xi.as_deref().map(rational).transpose()?;
            let mut records = rigidity_record_times(&x, *horizon, DEFAULT_PIECE_LIMIT).map_err(|e| Failure::Budget(e.to_string()))?;
            if let Some(xi) = &xi {
                for r in &mut records {
                    r.flagged = &r.defect < xi;
                }
            }
            emit(cli, &records)
        }
        Command::ModpTrace { x, p, steps } => {
            let x = exchange(x)?;
            let watch = x.perm().has_preserving_band();
            let mut ex = Expander::new(&x);
            let mut state = RemainderState::initial(x.perm(), *p).map_err(modp_failure)?;
            let mut rows = Vec::new();
            let mut violation = None;
            loop {
                let norms = ex.q().column_norms();
                let outcome = check_claim_invariant(&state);
                for b in 0..x.d() {
                    rows.push(json!({
                        "n": ex.depth(),
                        "band": state.node.label(b),
                        "class": state.node.class(b).to_string(),
                        "norm": norms[b].to_string(),
                        "remainder": state.remainders[b],
                    }));
                }
                if watch && outcome == ClaimOutcome::Violation && violation.is_none() {
                    violation = Some(format!("at depth {}: {}", ex.depth(), state.describe()));
                }
                if ex.depth() >= *steps {
                    break;
                }
                match ex.step() {
                    Ok(step) => state = state.advance(&step, ex.current().perm()),
                    Err(_) => break,
                }
            }
            if cli.out.as_ref().is_some_and(|p| p.extension().is_some_and(|e| e == "csv")) {
                let mut text = String::from("n,band,class,norm,remainder\n");
                for r in &rows {
                    text.push_str(&format!("{},{},{},{},{}\n", r["n"], r["band"].as_str().unwrap(), r["class"].as_str().unwrap(), r["norm"].as_str().unwrap(), r["remainder"]));
                }
                write_out(cli, text.trim_end())?;
            } else {
                emit(cli, &json!({"p": p, "rows": rows}))?;
            }
            match violation {
                Some(v) => Err(Failure::Violation(v)),
                None => Ok(()),
            }
        }
        Command::CoprimeTower { x, p, delta } => {
            let x = exchange(x)?;
            match find_coprime_tower(&x, &rational(delta)?, *p, cli.budget).map_err(modp_failure)? {
                CoprimeOutcome::StructuralObstruction(why) => emit(cli, &json!({"outcome": "structural-obstruction", "reason": why})),
                CoprimeOutcome::Tower(t) => {
                    let v = verify_tower(&x, &t, DEFAULT_MAX_HEIGHT).map_err(approx_failure)?;
                    let cert = t.certificate(&x, &v);
                    emit(cli, &json!({"outcome": "tower", "p": p, "certificate": cert}))?;
                    if v.passed() {
                        Ok(())
                    } else {
                        Err(Failure::Violation("tower verification failed".into()))
                    }
                }
            }
        }
        Command::Ergodicity { x, p, bins, iters } => {
            let x = exchange(x)?;
            let r = total_ergodicity_experiment(&x, *p, *bins, *iters, cli.seed, cli.budget).map_err(|e| anyhow!(e))?;
            emit_report(cli, &r)
        }
        Command::Product { perm1, widths1, perm2, widths2, boxes, iters } => {
            let x1 = read_exchange(perm1, widths1)?;
            let x2 = read_exchange(perm2, widths2)?;
            let r = product_experiment(&x1, &x2, *boxes, *iters, cli.seed).map_err(|e| anyhow!(e))?;
            emit_report(cli, &r)
        }
        Command::Scan { perm, grid, count, xi, horizon } => {
            let cfg = SamplerConfig::new(read_perm(&perm.perm)?, *grid, cli.seed, *count);
            let r = rigidity_scan(&cfg, &rational(xi)?, *horizon, cli.budget).map_err(|e| anyhow!(e))?;
            emit_report(cli, &r)
        }
    }
}
