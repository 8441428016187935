use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use xmlqui::bench::{loglog_slope, render, run_grid, standard_grid, BenchCell};
use xmlqui::chains::{analyze_query, analyze_update};
use xmlqui::evaluator::{apply_update, run_query, serialize_all};
use xmlqui::finite::{query_frequency, query_k, update_frequency, update_k, FreqTag};
use xmlqui::independence::{check_cdag, query_marks, update_marks};
use xmlqui::par::Exec;
use xmlqui::verify::verify;
use xmlqui::xmlstore::EnumBounds;
use xmlqui::{fixtures, parse_query, parse_update, Dtd, Query, Tag, Tree, Update, Verdict, VerdictKind};

#[derive(Parser)]
#[command(name = "xmlqui", version, about = "Static independence of XML queries and updates")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Dot,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Role {
    Query,
    Update,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Family {
    /// Recursive schemas d_n against descendant chains e_m.
    R,
    /// The bundled example pairs.
    Paper,
}

#[derive(Subcommand)]
enum Cmd {
    /// Decide whether a query is independent of an update.
    /// Exit status: 0 independent, 1 maybe dependent, 2 error.
    Analyze {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        query: PathBuf,
        #[arg(long)]
        update: PathBuf,
        /// Chain bound; defaults to k_q + k_u.
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        k: Option<u32>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        /// Also print per-tag frequencies.
        #[arg(long)]
        verbose: bool,
    },
    /// Infer the chains of one expression and print its chain graph.
    Chains {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        expr: PathBuf,
        #[arg(long, value_enum)]
        role: Role,
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        k: Option<u32>,
        #[arg(long, value_enum, default_value = "dot")]
        format: Format,
        /// List the chains themselves (small inputs only).
        #[arg(long)]
        materialize: bool,
    },
    /// Evaluate a query or apply an update to a document.
    Eval {
        #[arg(long)]
        doc: PathBuf,
        #[arg(long, conflicts_with = "update", required_unless_present = "update")]
        query: Option<PathBuf>,
        #[arg(long)]
        update: Option<PathBuf>,
    },
    /// Compare the static verdict with every valid document within bounds.
    /// Exit status: 0 sound, 1 unsound, 2 error.
    Verify {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        query: PathBuf,
        #[arg(long)]
        update: PathBuf,
        #[arg(long, default_value_t = 4)]
        max_depth: usize,
        #[arg(long, default_value_t = 2)]
        max_repeat: usize,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Time chain inference.
    Bench {
        #[arg(long, value_enum, default_value = "r")]
        family: Family,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
}

/// Cap on chains listed by `chains --materialize`.
const MATERIALIZE_LIMIT: usize = 10_000;
const MAX_WITNESSES: usize = 16;

fn read(p: &Path) -> Result<String> {
    fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))
}

fn load_dtd(p: &Path) -> Result<Dtd> {
    Dtd::parse(&read(p)?).with_context(|| format!("parsing schema {}", p.display()))
}

fn load_query(p: &Path) -> Result<Query> {
    parse_query(read(p)?.trim()).with_context(|| format!("parsing query {}", p.display()))
}

fn load_update(p: &Path) -> Result<Update> {
    parse_update(read(p)?.trim()).with_context(|| format!("parsing update {}", p.display()))
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)?)
}

#[derive(Serialize)]
struct WitnessOut {
    query_chain: String,
    update_chain: String,
    kind: String,
}

#[derive(Serialize)]
struct Timings {
    parse: f64,
    infer_q: f64,
    infer_u: f64,
    check: f64,
}

#[derive(Serialize)]
struct GraphSize {
    nodes: usize,
    edges: usize,
}

#[derive(Serialize)]
struct Frequency {
    tag: String,
    query: usize,
    update: usize,
}

#[derive(Serialize)]
struct AnalyzeReport {
    verdict: VerdictKind,
    k_q: usize,
    k_u: usize,
    k: usize,
    witnesses: Vec<WitnessOut>,
    timings_ms: Timings,
    /// Query and update graphs together.
    cdag_stats: GraphSize,
    #[serde(skip_serializing_if = "Option::is_none")]
    frequencies: Option<Vec<Frequency>>,
}

fn frequencies(q: &Query, u: &Update) -> Vec<Frequency> {
    let tags: std::collections::BTreeSet<Tag> = q.tags().into_iter().chain(u.tags()).collect();
    let mut out: Vec<Frequency> = tags
        .iter()
        .map(|t| Frequency {
            tag: t.to_string(),
            query: query_frequency(&FreqTag::Named(t), q),
            update: update_frequency(&FreqTag::Named(t), u),
        })
        .collect();
    out.push(Frequency {
        tag: "(other)".to_string(),
        query: query_frequency(&FreqTag::Other, q),
        update: update_frequency(&FreqTag::Other, u),
    });
    out
}

fn witnesses(v: &Verdict) -> Vec<WitnessOut> {
    v.witnesses
        .iter()
        .map(|w| WitnessOut {
            query_chain: w.query_chain.to_string(),
            update_chain: w.update_chain.to_string(),
            kind: w.kind.to_string(),
        })
        .collect()
}

fn cmd_analyze(
    schema: &Path,
    query: &Path,
    update: &Path,
    k: Option<u32>,
    format: Format,
    verbose: bool,
) -> Result<ExitCode> {
    let t0 = Instant::now();
    let d = load_dtd(schema)?;
    let q = load_query(query)?;
    let u = load_update(update)?;
    let parse = ms(t0);
    let (k_q, k_u) = (query_k(&q).k(), update_k(&u).k());
    let k = k.map(|x| x as usize).unwrap_or((k_q + k_u).max(1));
    let t = Instant::now();
    let qa = analyze_query(&d, k, &q);
    let infer_q = ms(t);
    let t = Instant::now();
    let ua = analyze_update(&d, k, &u);
    let infer_u = ms(t);
    let t = Instant::now();
    let verdict = check_cdag(&qa, &ua, MAX_WITNESSES);
    let check = ms(t);
    let (sq, su) = (qa.cdag.stats(), ua.cdag.stats());
    let report = AnalyzeReport {
        verdict: verdict.result,
        k_q,
        k_u,
        k,
        witnesses: witnesses(&verdict),
        timings_ms: Timings { parse, infer_q, infer_u, check },
        cdag_stats: GraphSize { nodes: sq.nodes + su.nodes, edges: sq.edges + su.edges },
        frequencies: verbose.then(|| frequencies(&q, &u)),
    };
    match format {
        Format::Json => println!("{}", json(&report)?),
        Format::Dot => {
            println!("{}", qa.cdag.to_dot(&query_marks(&qa)));
            println!("{}", ua.cdag.to_dot(&update_marks(&ua)));
        }
        Format::Text => {
            println!("{}", report.verdict);
            println!("k_q={} k_u={} k={}", report.k_q, report.k_u, report.k);
            for w in &report.witnesses {
                println!("  {} vs {} ({})", w.query_chain, w.update_chain, w.kind);
            }
            let t = &report.timings_ms;
            println!(
                "time: parse {:.2}ms, query {:.2}ms, update {:.2}ms, check {:.2}ms",
                t.parse, t.infer_q, t.infer_u, t.check
            );
            println!("graphs: {} nodes, {} edges", report.cdag_stats.nodes, report.cdag_stats.edges);
            if let Some(fs) = &report.frequencies {
                println!("{:<12} {:>5} {:>6}", "tag", "query", "update");
                for f in fs {
                    println!("{:<12} {:>5} {:>6}", f.tag, f.query, f.update);
                }
            }
        }
    }
    Ok(if verdict.is_independent() { ExitCode::from(0) } else { ExitCode::from(1) })
}

#[derive(Serialize)]
struct Ends {
    k: usize,
    nodes: usize,
    edges: usize,
    ends: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    chains: Option<serde_json::Value>,
}

fn cmd_chains(schema: &Path, expr: &Path, role: Role, k: Option<u32>, format: Format, materialize: bool) -> Result<()> {
    let d = load_dtd(schema)?;
    let (dot, mut out) = match role {
        Role::Query => {
            let q = load_query(expr)?;
            let k = k.map(|x| x as usize).unwrap_or(query_k(&q).k().max(1));
            let qa = analyze_query(&d, k, &q);
            let g = &qa.cdag;
            let mut ends: Vec<String> = qa.r.iter().map(|&e| format!("R {}", g.describe_end(e))).collect();
            ends.extend(
                qa.v.iter().map(|v| format!("{} {}", if v.closed { "V*" } else { "V" }, g.describe_end(v.end))),
            );
            ends.extend(qa.e.iter().map(|e| format!("E {e}")));
            let chains = if materialize {
                let m = qa.materialize(MATERIALIZE_LIMIT).map_err(|_| anyhow::anyhow!("too many chains to list"))?;
                Some(serde_json::json!({
                    "return": m.r.iter().map(|c| c.to_string()).collect::<Vec<_>>(),
                    "used": m.v.iter().map(|v| format!("{}{}", v.chain, if v.closed { " (subtree)" } else { "" })).collect::<Vec<_>>(),
                    "element": m.e.iter().map(|e| e.to_string()).collect::<Vec<_>>(),
                }))
            } else {
                None
            };
            let st = g.stats();
            (g.to_dot(&query_marks(&qa)), Ends { k, nodes: st.nodes, edges: st.edges, ends, chains })
        }
        Role::Update => {
            let u = load_update(expr)?;
            let k = k.map(|x| x as usize).unwrap_or(update_k(&u).k().max(1));
            let ua = analyze_update(&d, k, &u);
            let g = &ua.cdag;
            let ends = ua.u.iter().map(|e| format!("U {}", g.describe_update(e))).collect();
            let chains = if materialize {
                let m = ua.materialize(MATERIALIZE_LIMIT).map_err(|_| anyhow::anyhow!("too many chains to list"))?;
                Some(serde_json::json!({
                    "update": m.iter().map(|c| format!("{c}{}", if c.open { " (open)" } else { "" })).collect::<Vec<_>>(),
                }))
            } else {
                None
            };
            let st = g.stats();
            (g.to_dot(&update_marks(&ua)), Ends { k, nodes: st.nodes, edges: st.edges, ends, chains })
        }
    };
    match format {
        Format::Dot => print!("{dot}"),
        Format::Json => println!("{}", json(&out)?),
        Format::Text => {
            println!("k={} nodes={} edges={}", out.k, out.nodes, out.edges);
            for e in &out.ends {
                println!("  {e}");
            }
            if let Some(serde_json::Value::Object(m)) = out.chains.take() {
                for (role, cs) in m {
                    println!("{role}:");
                    for c in cs.as_array().into_iter().flatten() {
                        println!("  {}", c.as_str().unwrap_or_default());
                    }
                }
            }
        }
    }
    Ok(())
}

fn cmd_eval(doc: &Path, query: Option<&Path>, update: Option<&Path>) -> Result<()> {
    let t = Tree::parse(&read(doc)?).with_context(|| format!("parsing document {}", doc.display()))?;
    match (query, update) {
        (Some(q), None) => {
            let q = load_query(q)?;
            let (store, locs) = run_query(&t, &q).context("evaluating query")?;
            println!("{}", serialize_all(&store, &locs));
        }
        (None, Some(u)) => {
            let u = load_update(u)?;
            let applied = apply_update(&t, &u).context("applying update")?;
            println!("{}", applied.tree.to_xml());
        }
        _ => bail!("give exactly one of --query and --update"),
    }
    Ok(())
}

fn cmd_verify(
    schema: &Path,
    query: &Path,
    update: &Path,
    max_depth: usize,
    max_repeat: usize,
    format: Format,
) -> Result<ExitCode> {
    let d = load_dtd(schema)?;
    let q = load_query(query)?;
    let u = load_update(update)?;
    let rep = verify(&d, &q, &u, &EnumBounds::new(max_depth, max_repeat), Exec::best());
    match format {
        Format::Json => println!("{}", json(&rep)?),
        _ => {
            println!("static: {} (k={})", rep.verdict, rep.k);
            println!(
                "documents: {} (depth <= {}, repeat <= {}), {} evaluation errors, {} invalid results",
                rep.stats.instances, rep.max_depth, rep.max_repeat, rep.stats.eval_errors, rep.stats.invalid_results
            );
            println!("counterexamples: {}", rep.stats.counterexamples);
            if let Some(doc) = &rep.stats.first_counterexample {
                println!("first: {doc}");
            }
            if let Some(n) = &rep.note {
                println!("note: {n}");
            }
            println!("sound: {}", rep.sound);
        }
    }
    Ok(if rep.sound { ExitCode::from(0) } else { ExitCode::from(1) })
}

#[derive(Serialize)]
struct FixtureTiming {
    name: &'static str,
    verdict: String,
    k: usize,
    millis: f64,
}

fn cmd_bench(family: Family, format: Format) -> Result<()> {
    match family {
        Family::R => {
            let cells = run_grid(&standard_grid());
            // growth in n for the largest m and k
            let pts: Vec<(f64, f64)> =
                cells.iter().filter(|c| c.m == 10 && c.k == 20).map(|c| (c.n as f64, c.millis)).collect();
            let slope = loglog_slope(&pts);
            if format == Format::Json {
                #[derive(Serialize)]
                struct Out<'a> {
                    cells: &'a [BenchCell],
                    slope_in_n: f64,
                }
                println!("{}", json(&Out { cells: &cells, slope_in_n: slope })?);
            } else {
                print!("{}", render(&cells));
                println!("log-log slope in n (m=10, k=20): {slope:.2}");
            }
        }
        Family::Paper => {
            let rows: Vec<FixtureTiming> = fixtures::ALL
                .iter()
                .map(|f| {
                    let (d, q, u) = (f.dtd(), f.query(), f.update());
                    let t = Instant::now();
                    let v = xmlqui::check(&d, &q, &u, None);
                    FixtureTiming { name: f.name, verdict: v.result.to_string(), k: v.k_used, millis: ms(t) }
                })
                .collect();
            if format == Format::Json {
                println!("{}", json(&rows)?);
            } else {
                println!("{:<20} {:<16} {:>3} {:>10}", "pair", "verdict", "k", "ms");
                for r in rows {
                    println!("{:<20} {:<16} {:>3} {:>10.3}", r.name, r.verdict, r.k, r.millis);
                }
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Analyze { schema, query, update, k, format, verbose } => {
            cmd_analyze(&schema, &query, &update, k, format, verbose)
        }
        Cmd::Chains { schema, expr, role, k, format, materialize } => {
            cmd_chains(&schema, &expr, role, k, format, materialize).map(|_| ExitCode::SUCCESS)
        }
        Cmd::Eval { doc, query, update } => {
            cmd_eval(&doc, query.as_deref(), update.as_deref()).map(|_| ExitCode::SUCCESS)
        }
        Cmd::Verify { schema, query, update, max_depth, max_repeat, format } => {
            cmd_verify(&schema, &query, &update, max_depth, max_repeat, format)
        }
        Cmd::Bench { family, format } => cmd_bench(family, format).map(|_| ExitCode::SUCCESS),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    run(cli).unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(2)
    })
}
