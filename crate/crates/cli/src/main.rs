use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use rasp_attn::flatten::{AttentionSpec, Matrix};
use rasp_attn::lang::{ast_json, evaluate, metrics, parse, Bindings};
use rasp_attn::oracle::fuzz::{
    build_pipeline, run_fuzz, verify_variant, Orders, CHECKS, DEFAULT_SEED,
};
use rasp_attn::seqcore::{Kind, Sequence};
use rasp_attn::simulator::{embed_simulate, simulate, SimOptions, Variant};
use rasp_attn::stdlib::Style;

#[derive(Parser)]
#[command(
    name = "rasp-attn",
    version,
    about = "Run RASP programs and attention simulators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a .rasp program on a sequence or matrix.
    Run {
        program: PathBuf,
        /// JSON array of numbers, or a matrix object (flattened row-major).
        input: PathBuf,
        /// Entry parameter binding, `name=value`. Repeatable.
        #[arg(long = "bind", value_parser = parse_binding)]
        bindings: Vec<(String, f64)>,
    },
    /// Compute an attention layer through the RASP simulator.
    Simulate {
        spec: PathBuf,
        /// A matrix, or an array of matrices with one per head.
        input: PathBuf,
        #[arg(long, default_value = "attention")]
        variant: Variant,
        #[command(flatten)]
        sim: SimFlags,
        /// Run inside a larger host of orders `n,d,d_v`.
        #[arg(long, value_parser = parse_triple)]
        host: Option<(usize, usize, usize)>,
        /// Mask padded key columns when running inside a host (default).
        #[arg(long, overrides_with = "no_mask_padding")]
        mask_padding: bool,
        #[arg(long, overrides_with = "mask_padding")]
        no_mask_padding: bool,
    },
    /// Check a simulator variant against the dense reference on random instances.
    Verify {
        variant: Variant,
        #[command(flatten)]
        orders: OrderFlags,
        #[arg(long, default_value_t = 100)]
        cases: usize,
        #[arg(long, env = "RASP_ATTN_SEED", default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Relative tolerance; defaults per variant.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Run the invariant suite over generators and simulators.
    Fuzz {
        /// Run every check (the default when no --check is given).
        #[arg(long)]
        all: bool,
        #[arg(long = "check", value_parser = clap::builder::PossibleValuesParser::new(CHECKS))]
        checks: Vec<String>,
        #[arg(long, default_value_t = 50)]
        cases: usize,
        #[arg(long, env = "RASP_ATTN_SEED", default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Print metrics of a program, or the manifest of a simulator pipeline.
    Inspect {
        /// A .rasp program. Omit to inspect `--variant` instead.
        program: Option<PathBuf>,
        #[arg(long, conflicts_with = "program", required_unless_present = "program")]
        variant: Option<Variant>,
        #[command(flatten)]
        orders: OrderFlags,
        #[command(flatten)]
        sim: SimFlags,
        /// Include the syntax tree of the program.
        #[arg(long, requires = "program")]
        ast: bool,
    },
}

#[derive(Args)]
struct SimFlags {
    /// Divide scores by sqrt(d).
    #[arg(long)]
    scaled: bool,
    /// Generate with the literal exp base 2.73 and integer casts of the listings.
    #[arg(long)]
    listing_literal: bool,
}

impl SimFlags {
    fn options(&self) -> SimOptions {
        SimOptions {
            scaled: self.scaled,
            style: if self.listing_literal {
                Style::Listing
            } else {
                Style::Exact
            },
        }
    }
}

#[derive(Args)]
struct OrderFlags {
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long = "dv", default_value_t = 2)]
    d_v: usize,
    #[arg(long, default_value_t = 2)]
    d1: usize,
    #[arg(long, default_value_t = 2)]
    d2: usize,
    #[arg(long, default_value_t = 1)]
    heads: usize,
    #[arg(long = "dk", default_value_t = 2)]
    d_k: usize,
    /// Projected length for linformer.
    #[arg(long, default_value_t = 2)]
    k: usize,
}

impl OrderFlags {
    fn orders(&self) -> Orders {
        Orders {
            n: self.n,
            d: self.d,
            d_v: self.d_v,
            d1: self.d1,
            d2: self.d2,
            heads: self.heads,
            d_k: self.d_k,
            k: self.k,
        }
    }
}

fn parse_binding(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s.split_once('=').ok_or("expected name=value")?;
    let value = value.trim().parse().map_err(|e| format!("{value}: {e}"))?;
    Ok((name.trim().to_string(), value))
}

fn parse_triple(s: &str) -> Result<(usize, usize, usize), String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|e| format!("{p}: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [a, b, c] => Ok((a, b, c)),
        _ => Err("expected n,d,d_v".into()),
    }
}

/// A failure before anything was checked; exits with 2.
struct Usage(String);

impl<E: std::fmt::Display> From<E> for Usage {
    fn from(e: E) -> Self {
        Usage(e.to_string())
    }
}

fn read(path: &Path) -> Result<String, Usage> {
    std::fs::read_to_string(path).map_err(|e| Usage(format!("{}: {e}", path.display())))
}

fn read_json(path: &Path) -> Result<Value, Usage> {
    serde_json::from_str(&read(path)?).map_err(|e| Usage(format!("{}: {e}", path.display())))
}

fn input_sequence(value: Value) -> Result<Sequence, Usage> {
    if value.is_object() {
        let m: Matrix = serde_json::from_value(value)?;
        return Ok(m.to_sequence());
    }
    let values: Vec<f64> = serde_json::from_value(value)?;
    Ok(Sequence::from_f64s(&values)?)
}

fn input_matrices(value: Value) -> Result<Vec<Matrix>, Usage> {
    // An array is either one nested matrix or a list of per-head matrices.
    if let Ok(many) = serde_json::from_value::<Vec<Matrix>>(value.clone()) {
        return Ok(many);
    }
    Ok(vec![serde_json::from_value(value)?])
}

fn sequence_json(seq: &Sequence) -> Value {
    Value::Array(
        seq.tokens()
            .iter()
            .map(|t| match t.kind() {
                Kind::Boolean => json!(t.is_truthy()),
                Kind::Integer => json!(t.value() as i64),
                Kind::Real => json!(t.value()),
            })
            .collect(),
    )
}

// A closed pipe is not an error worth reporting.
fn emit(text: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn print_json(value: &Value) {
    emit(&serde_json::to_string_pretty(value).expect("json values serialize"));
}

fn dispatch(cli: Cli) -> Result<bool, Usage> {
    match cli.command {
        Command::Run {
            program,
            input,
            bindings,
        } => {
            let program = parse(&read(&program)?)?;
            let seq = input_sequence(read_json(&input)?)?;
            let bindings: Bindings = bindings.into_iter().collect();
            let out = evaluate(&program, &seq, &bindings)?;
            emit(&sequence_json(&out).to_string());
            Ok(true)
        }
        Command::Simulate {
            spec,
            input,
            variant,
            sim,
            host,
            mask_padding: _,
            no_mask_padding,
        } => {
            let spec: AttentionSpec = serde_json::from_value(read_json(&spec)?)?;
            let xs = input_matrices(read_json(&input)?)?;
            let out = match host {
                Some(host) => {
                    if variant != Variant::Attention {
                        return Err(Usage("--host only applies to the attention variant".into()));
                    }
                    let x = xs.first().ok_or(Usage("no input matrix".into()))?;
                    embed_simulate(&spec, x, host, !no_mask_padding, sim.options())?.block
                }
                None => simulate(variant, &spec, &xs, sim.options())?,
            };
            print_json(&serde_json::to_value(&out)?);
            Ok(true)
        }
        Command::Verify {
            variant,
            orders,
            cases,
            seed,
            tol,
        } => {
            build_pipeline(variant, orders.orders(), SimOptions::default())?;
            let summary = verify_variant(variant, orders.orders(), cases, seed, tol);
            print_json(&json!({ "seed": seed, "orders": orders.orders(), "summary": summary }));
            Ok(summary.pass())
        }
        Command::Fuzz {
            all,
            checks,
            cases,
            seed,
        } => {
            let names: Vec<&str> = if all || checks.is_empty() {
                CHECKS.to_vec()
            } else {
                checks.iter().map(String::as_str).collect()
            };
            let summary = run_fuzz(&names, cases, seed);
            print_json(&serde_json::to_value(&summary)?);
            Ok(summary.pass())
        }
        Command::Inspect {
            program,
            variant,
            orders,
            sim,
            ast,
        } => {
            let report = match (program, variant) {
                (Some(path), _) => {
                    let program = parse(&read(&path)?)?;
                    let mut report = json!({ "metrics": metrics(&program) });
                    if ast {
                        report["ast"] = ast_json(&program);
                    }
                    report
                }
                (None, Some(variant)) => {
                    build_pipeline(variant, orders.orders(), sim.options())?.manifest()
                }
                (None, None) => unreachable!("clap requires one of them"),
            };
            print_json(&report);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
