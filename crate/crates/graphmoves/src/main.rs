use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use serde_json::json;

use graphmoves::blocks::{block_form, canonical_form, BlockMatrix, FormLevel};
use graphmoves::graph::{parse_graph, Graph};
use graphmoves::kweb::reduced_invariant;
use graphmoves::moves::{apply_move, MoveSpec};
use graphmoves::pipeline::{
    canonical_parts_json, decide_stable, decide_unital, phi_lens, Budget,
};
use graphmoves::structure::{components, condition_k};

/// Exact-integer engine for unital graph algebras: invariants, moves,
/// canonical forms, comparison with certificates, and positive
/// factorization.
#[derive(Parser)]
#[command(name = "graphmoves", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print components, kinds, transition states and the Condition (K)
    /// verdict as JSON.
    Info { graph: PathBuf },
    /// Print the reduced filtered K-theory invariant as JSON.
    Invariant { graph: PathBuf },
    /// Apply a move (JSON spec) to a graph, printing the resulting graph.
    Move {
        graph: PathBuf,
        /// Move specification, e.g. '{"move":"col_add","u":2,"v":3}'.
        #[arg(long)]
        spec: String,
        /// Write the resulting graph here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Also emit an equivalence witness when the move carries one.
        #[arg(long)]
        witness: Option<PathBuf>,
    },
    /// Canonicalize a graph: prints the canonical graph and writes the
    /// trace plus witness to a JSON file when asked.
    Canonical {
        graph: PathBuf,
        /// Write the certificate (trace, expansions, witness) here.
        #[arg(long)]
        certificate: Option<PathBuf>,
    },
    /// Compare two graphs up to stable equivalence (or unital with the
    /// flag). Exit code: 0 equivalent, 1 not equivalent, 2 unknown.
    Compare {
        graph1: PathBuf,
        graph2: PathBuf,
        #[arg(long)]
        unital: bool,
        /// Entry bound for the diagonal block search.
        #[arg(long, default_value_t = 3)]
        budget: u32,
        /// Wall clock limit in seconds.
        #[arg(long, default_value_t = 60)]
        time_limit: u64,
    },
    /// Factor a special block equivalence into a chain of basic positive
    /// steps. All four inputs are block matrix JSON files.
    Factorize {
        b: PathBuf,
        b2: PathBuf,
        u: PathBuf,
        v: PathBuf,
        /// Write the chain JSON here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// The smallest even number exceeding the smallest divisor of r that
    /// is greater than 2.
    Phi { r: u64 },
}

fn read_graph(path: &PathBuf) -> Result<Graph, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    parse_graph(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn read_block_matrix(path: &PathBuf) -> Result<BlockMatrix, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn run() -> Result<i32, String> {
    let cli = Cli::parse();
    match cli.command {
        Command::Info { graph } => {
            let g = read_graph(&graph)?;
            let poset = components(&g);
            let out = json!({
                "vertex_count": g.vertex_count(),
                "components": poset.components.iter().map(|c| json!({
                    "vertices": c.vertices.iter().map(|v| v + 1).collect::<Vec<_>>(),
                    "kind": format!("{:?}", c.kind),
                })).collect::<Vec<_>>(),
                "transition_states": poset.transition_states.iter().map(|v| v + 1).collect::<Vec<_>>(),
                "condition_k": condition_k(&g),
            });
            println!("{}", serde_json::to_string_pretty(&out).unwrap());
            Ok(0)
        }
        Command::Invariant { graph } => {
            let g = read_graph(&graph)?;
            let (bg, _) = block_form(&g, FormLevel::Two)
                .map_err(|e| format!("normalization failed: {e}"))?;
            let inv = reduced_invariant(&bg).map_err(|e| format!("invariant failed: {e}"))?;
            let cokernels: Vec<_> = inv
                .web
                .cokernels
                .iter()
                .map(|(set, cok)| {
                    json!({
                        "convex_set": set,
                        "invariant_factors":
                            cok.factors.iter().map(|f| f.to_string()).collect::<Vec<_>>(),
                        "free_rank": cok.free_rank,
                    })
                })
                .collect();
            let mut kernels: Vec<_> = inv
                .web
                .kernels
                .iter()
                .map(|(i, k)| (i, k))
                .chain(inv.extra_kernels.iter())
                .map(|(i, k)| json!({ "index": i, "kernel": k }))
                .collect();
            kernels.sort_by_key(|v| v["index"].as_u64());
            let out = json!({
                "c_matrix": inv.c_matrix,
                "cokernels": cokernels,
                "kernels": kernels,
                "sequences": inv.web.sequences,
                "order_tags": inv.tags,
                "unit_class": inv.unit.iter().map(|x| x.to_string()).collect::<Vec<_>>(),
            });
            println!("{}", serde_json::to_string_pretty(&out).unwrap());
            Ok(0)
        }
        Command::Move { graph, spec, output, witness } => {
            let g = read_graph(&graph)?;
            let spec: MoveSpec =
                serde_json::from_str(&spec).map_err(|e| format!("bad move spec: {e}"))?;
            let h = apply_move(&g, &spec).map_err(|e| e.to_string())?;
            if let Some(path) = witness {
                let w = move_witness(&g, &spec);
                match w {
                    Some(w) => std::fs::write(&path, serde_json::to_string_pretty(&w).unwrap())
                        .map_err(|e| e.to_string())?,
                    None => eprintln!("note: this move carries no matrix witness here"),
                }
            }
            match output {
                Some(path) => std::fs::write(&path, h.render()).map_err(|e| e.to_string())?,
                None => print!("{}", h.render()),
            }
            Ok(0)
        }
        Command::Canonical { graph, certificate } => {
            let g = read_graph(&graph)?;
            let out = canonical_form(&g).map_err(|e| format!("canonicalization failed: {e}"))?;
            if let Some(path) = certificate {
                std::fs::write(&path, canonical_parts_json(&g, &out))
                    .map_err(|e| e.to_string())?;
            }
            print!("{}", out.form.graph.render());
            Ok(0)
        }
        Command::Compare { graph1, graph2, unital, budget, time_limit } => {
            let g1 = read_graph(&graph1)?;
            let g2 = read_graph(&graph2)?;
            let budget = Budget {
                entry_bound: budget,
                time_limit: Duration::from_secs(time_limit),
            };
            let verdict = if unital {
                decide_unital(&g1, &g2, budget)
            } else {
                decide_stable(&g1, &g2, budget)
            };
            println!("{}", serde_json::to_string_pretty(&verdict).unwrap());
            Ok(verdict.exit_code())
        }
        Command::Factorize { b, b2, u, v, output } => {
            let b = read_block_matrix(&b)?;
            let b2 = read_block_matrix(&b2)?;
            let u = read_block_matrix(&u)?;
            let v = read_block_matrix(&v)?;
            let chain = graphmoves::factorize::factor_positive_equivalence(&b, &b2, &u, &v)
                .map_err(|e| e.to_string())?;
            let text = serde_json::to_string_pretty(&chain).unwrap();
            match output {
                Some(path) => std::fs::write(&path, text).map_err(|e| e.to_string())?,
                None => println!("{text}"),
            }
            Ok(0)
        }
        Command::Phi { r } => {
            let out = phi_lens(r).map_err(|e| e.to_string())?;
            println!("{out}");
            Ok(0)
        }
    }
}

/// Witness for moves that carry one on block-arranged graphs.
fn move_witness(g: &Graph, spec: &MoveSpec) -> Option<serde_json::Value> {
    let (form, trace) = block_form(g, FormLevel::Three).ok()?;
    if !trace.steps.is_empty() {
        return None;
    }
    match spec {
        MoveSpec::ColAdd { u, v, subtract: false } => {
            let w = graphmoves::moves::col_add_witness(&form, u - 1, v - 1);
            Some(serde_json::to_value(w).unwrap())
        }
        MoveSpec::RowAdd { u, v, subtract: false } => {
            if !form.graph.is_regular(u - 1) || !form.graph.is_regular(v - 1) {
                return None;
            }
            let w = graphmoves::moves::row_add_witness(&form, u - 1, v - 1);
            Some(serde_json::to_value(w).unwrap())
        }
        MoveSpec::CuntzSplice { v } => {
            let (_, w) = graphmoves::moves::single_splice_witness(&form, v - 1).ok()?;
            Some(serde_json::to_value(w).unwrap())
        }
        _ => None,
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(u8::try_from(code).unwrap_or(2)),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
