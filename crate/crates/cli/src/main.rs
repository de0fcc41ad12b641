//! `funsat`: lock a netlist, attack it through an oracle, measure corruption
//! curves, sweep comparison campaigns, or solve a raw DIMACS file.

mod report;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use funsat_core::attack::{fun_sat, reference_attack, AttackReport, FunSatConfig, UpdateRule};
use funsat_core::cnf::{CnfFormula, Var};
use funsat_core::encrypt::{harpoon_encrypt, interlock_encrypt, Encryption};
use funsat_core::netlist::{parse_bench, write_bench, Netlist};
use funsat_core::rng::split_seed;
use funsat_core::sim::{estimate_fc, exact_fc_counts, NetlistOracle, Oracle, EXACT_FC_CAP};
use funsat_core::solver::{SatEngine, SolveResult, Solver};
use serde::{Deserialize, Serialize};

use report::{CampaignRow, FcPoint, RunConfig, CAMPAIGN_HEADER};

#[derive(Parser)]
#[command(name = "funsat", version, about = "Workbench for corruption-guided SAT attacks on sequential logic locking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lock a netlist; writes the encrypted design and a key sidecar.
    Encrypt(EncryptArgs),
    /// Recover a key from an encrypted netlist via oracle queries.
    Attack(AttackArgs),
    /// Tabulate corruption estimates over a range of unroll depths.
    FcScan(FcScanArgs),
    /// Encrypt a grid of instances and compare both attack drivers.
    Bench(BenchArgs),
    /// Decide a DIMACS CNF file with the built-in solver.
    Solve(SolveArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Scheme {
    Harpoon,
    Interlocking,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Funsat,
    Reference,
}

impl Mode {
    fn label(self) -> &'static str {
        match self {
            Mode::Funsat => "funsat",
            Mode::Reference => "reference",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Update {
    Increment,
    Double,
}

impl From<Update> for UpdateRule {
    fn from(u: Update) -> UpdateRule {
        match u {
            Update::Increment => UpdateRule::Increment,
            Update::Double => UpdateRule::Double,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn parse_ratio(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err("ratio must be in (0, 1]".into())
    }
}

#[derive(Args)]
struct EncryptArgs {
    /// Netlist to lock (.bench).
    input: PathBuf,
    #[arg(long, value_enum)]
    scheme: Scheme,
    /// Activation-phase length in cycles.
    #[arg(long, default_value_t = 1)]
    tk: usize,
    /// Fraction of gates given corruption taps (harpoon only).
    #[arg(long, value_parser = parse_ratio)]
    rmkf: Option<f64>,
    /// Largest trap distance from reset (interlocking only).
    #[arg(long)]
    dmax: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output stem; `<stem>.enc.bench` and `<stem>.key.json` are written.
    /// Defaults to the input path without its extension.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AttackArgs {
    /// Encrypted netlist (.bench).
    input: PathBuf,
    /// Oracle netlist, used only through input-output queries.
    #[arg(long)]
    oracle: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Funsat)]
    mode: Mode,
    /// Activation-phase length in cycles.
    #[arg(long, default_value_t = 1)]
    tk: usize,
    /// Depths examined by the first analysis window.
    #[arg(long, default_value_t = 10)]
    twin: usize,
    /// Corruption growth below this counts as flat.
    #[arg(long, default_value_t = 0.01)]
    delta: f64,
    /// Consecutive flat steps required before committing to a depth.
    #[arg(long, default_value_t = 5)]
    hold: usize,
    /// Sample budget per corruption estimate.
    #[arg(long, default_value_t = 1000)]
    samples: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    depth_cap: usize,
    /// Baseline depth schedule (reference mode only).
    #[arg(long, value_enum, default_value_t = Update::Increment)]
    update: Update,
    /// Largest induction depth tried by the verifier.
    #[arg(long, default_value_t = 10)]
    max_induction: usize,
    /// Abort any solver call after this many conflicts.
    #[arg(long)]
    conflict_budget: Option<u64>,
    /// Wall-clock limit in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FcScanArgs {
    /// Encrypted netlist (.bench).
    input: PathBuf,
    /// Oracle netlist.
    #[arg(long)]
    oracle: PathBuf,
    #[arg(long, default_value_t = 1)]
    tk: usize,
    #[arg(long, default_value_t = 1)]
    from: usize,
    #[arg(long, default_value_t = 10)]
    to: usize,
    #[arg(long, default_value_t = 1000)]
    samples: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Enumerate the whole space instead of sampling (white box).
    #[arg(long)]
    exact: bool,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Original netlists to lock and attack.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![1])]
    tk: Vec<usize>,
    /// Harpoon corruption ratios to sweep.
    #[arg(long, value_delimiter = ',', value_parser = parse_ratio, default_values_t = vec![0.10])]
    rmkf: Vec<f64>,
    /// Interlocking trap distances to sweep.
    #[arg(long, value_delimiter = ',', default_values_t = vec![4])]
    dmax: Vec<usize>,
    /// Top-level seed; every instance derives its own from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    samples: u64,
    #[arg(long, default_value_t = 16)]
    depth_cap: usize,
    /// Directory receiving campaign.csv and campaign.json.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    /// DIMACS CNF file.
    input: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct KeySidecar {
    t_k: usize,
    key: Vec<String>,
    scheme: funsat_core::encrypt::SchemeInfo,
}

fn load_netlist(path: &PathBuf) -> Result<Netlist> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_bench(&text).with_context(|| format!("parsing {}", path.display()))
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, format!("{text}\n")).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn cmd_encrypt(a: EncryptArgs) -> Result<u8> {
    let orig = load_netlist(&a.input)?;
    let enc = match a.scheme {
        Scheme::Harpoon => {
            let r = a.rmkf.context("--rmkf is required for the harpoon scheme")?;
            harpoon_encrypt(&orig, a.tk, r, a.seed)?
        }
        Scheme::Interlocking => {
            let d = a.dmax.context("--dmax is required for the interlocking scheme")?;
            interlock_encrypt(&orig, a.tk, d, a.seed)?
        }
    };
    let stem = a.out.unwrap_or_else(|| a.input.with_extension(""));
    let bench_path = PathBuf::from(format!("{}.enc.bench", stem.display()));
    let key_path = PathBuf::from(format!("{}.key.json", stem.display()));
    fs::write(&bench_path, write_bench(&enc.encrypted))
        .with_context(|| format!("writing {}", bench_path.display()))?;
    let sidecar =
        KeySidecar { t_k: enc.t_k, key: report::key_to_strings(&enc.key), scheme: enc.scheme };
    fs::write(&key_path, format!("{}\n", serde_json::to_string_pretty(&sidecar)?))
        .with_context(|| format!("writing {}", key_path.display()))?;
    println!("wrote {} and {}", bench_path.display(), key_path.display());
    Ok(0)
}

fn attack_config(a: &AttackArgs) -> FunSatConfig {
    FunSatConfig {
        t_win: a.twin,
        delta: a.delta,
        hold: a.hold,
        samples: a.samples,
        seed: a.seed,
        depth_cap: a.depth_cap,
        update: a.update.into(),
        max_induction: a.max_induction,
        conflict_budget: a.conflict_budget,
        time_limit: a.time_limit.map(Duration::from_secs_f64),
    }
}

fn run_attack(
    mode: Mode,
    enc: &Netlist,
    t_k: usize,
    oracle: &NetlistOracle,
    cfg: &FunSatConfig,
) -> Result<AttackReport, funsat_core::attack::AttackError> {
    match mode {
        Mode::Funsat => fun_sat(enc, t_k, oracle, cfg),
        Mode::Reference => reference_attack(enc, t_k, oracle, cfg),
    }
}

fn cmd_attack(a: AttackArgs) -> Result<u8> {
    let enc = load_netlist(&a.input)?;
    let oracle = NetlistOracle::new(load_netlist(&a.oracle)?);
    let cfg = attack_config(&a);
    let rc = RunConfig {
        mode: a.mode.label().into(),
        input: a.input.display().to_string(),
        oracle: a.oracle.display().to_string(),
        t_k: a.tk,
        attack: cfg.clone(),
    };
    let (rep, code) = match run_attack(a.mode, &enc, a.tk, &oracle, &cfg) {
        Ok(rep) => {
            let q = rep.oracle_queries;
            (report::success_report(rc, &rep, q), 0)
        }
        Err(e) => {
            let (status, code) = report::attack_failure(&e);
            if code == 1 {
                return Err(e.into());
            }
            (report::failure_report(rc, status, oracle.queries()), code)
        }
    };
    emit(&a.out, &serde_json::to_string_pretty(&rep)?)?;
    Ok(code)
}

fn cmd_fc_scan(a: FcScanArgs) -> Result<u8> {
    if a.from < 1 || a.from > a.to {
        bail!("depth range must satisfy 1 <= from <= to");
    }
    let enc = load_netlist(&a.input)?;
    let mut rows = Vec::new();
    if a.exact {
        let orig = load_netlist(&a.oracle)?;
        for b in a.from..=a.to {
            let (num, den) = exact_fc_counts(&enc, &orig, a.tk, b, EXACT_FC_CAP)?;
            rows.push(FcPoint { b, fc: num as f64 / den as f64, exact: true, samples: den });
        }
    } else {
        let oracle = NetlistOracle::new(load_netlist(&a.oracle)?);
        for b in a.from..=a.to {
            let e = estimate_fc(&enc, &oracle, a.tk, b, a.samples, split_seed(a.seed, b as u64))?;
            rows.push(FcPoint { b, fc: e.fc, exact: e.exact, samples: e.samples });
        }
    }
    let text = match a.format {
        Format::Csv => {
            let mut t = String::from("b,fc,exact,samples");
            for r in &rows {
                t.push_str(&format!("\n{},{},{},{}", r.b, r.fc, r.exact, r.samples));
            }
            t
        }
        Format::Json => serde_json::to_string_pretty(&rows)?,
    };
    emit(&a.out, &text)?;
    Ok(0)
}

fn campaign_attack(
    mode: Mode,
    orig: &Netlist,
    enc: &Encryption,
    cfg: &FunSatConfig,
    meta: (&str, &str, &str),
) -> CampaignRow {
    let (circuit, scheme, param) = meta;
    let oracle = NetlistOracle::new(orig.clone());
    let base = CampaignRow {
        circuit: circuit.into(),
        scheme: scheme.into(),
        t_k: enc.t_k,
        param: param.into(),
        mode: mode.label().into(),
        seed: cfg.seed,
        status: String::new(),
        b_final: None,
        phases: None,
        dips: None,
        conflicts: None,
        oracle_queries: 0,
    };
    match run_attack(mode, &enc.encrypted, enc.t_k, &oracle, cfg) {
        Ok(rep) => CampaignRow {
            status: "success".into(),
            b_final: Some(rep.b_final),
            phases: Some(rep.phases.len()),
            dips: Some(rep.total_dips),
            conflicts: Some(rep.phases.iter().map(|p| p.conflicts).sum()),
            oracle_queries: rep.oracle_queries,
            ..base
        },
        Err(e) => CampaignRow {
            status: report::attack_failure(&e).0.into(),
            oracle_queries: oracle.queries(),
            ..base
        },
    }
}

fn cmd_bench(a: BenchArgs) -> Result<u8> {
    fs::create_dir_all(&a.out_dir)
        .with_context(|| format!("creating {}", a.out_dir.display()))?;
    let mut rows = Vec::new();
    let mut instance = 0u64;
    for path in &a.inputs {
        let circuit = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        let orig = load_netlist(path)?;
        for &t_k in &a.tk {
            let mut locked: Vec<(String, String, Encryption)> = Vec::new();
            for &r in &a.rmkf {
                let enc = harpoon_encrypt(&orig, t_k, r, split_seed(a.seed, instance))?;
                locked.push(("harpoon".into(), format!("rmkf={r}"), enc));
                instance += 1;
            }
            for &d in &a.dmax {
                let enc = interlock_encrypt(&orig, t_k, d, split_seed(a.seed, instance))?;
                locked.push(("interlocking".into(), format!("dmax={d}"), enc));
                instance += 1;
            }
            for (scheme, param, enc) in &locked {
                for mode in [Mode::Funsat, Mode::Reference] {
                    let cfg = FunSatConfig {
                        samples: a.samples,
                        seed: split_seed(a.seed, 1 + (rows.len() as u64)),
                        depth_cap: a.depth_cap,
                        ..FunSatConfig::default()
                    };
                    rows.push(campaign_attack(mode, &orig, enc, &cfg, (&circuit, scheme, param)));
                }
            }
        }
    }
    let csv_path = a.out_dir.join("campaign.csv");
    let json_path = a.out_dir.join("campaign.json");
    let mut csv = String::from(CAMPAIGN_HEADER);
    for r in &rows {
        csv.push('\n');
        csv.push_str(&r.csv_line());
    }
    csv.push('\n');
    fs::write(&csv_path, csv).with_context(|| format!("writing {}", csv_path.display()))?;
    fs::write(&json_path, format!("{}\n", serde_json::to_string_pretty(&rows)?))
        .with_context(|| format!("writing {}", json_path.display()))?;
    println!("wrote {} and {} ({} rows)", csv_path.display(), json_path.display(), rows.len());
    Ok(0)
}

fn cmd_solve(a: SolveArgs) -> Result<u8> {
    let text = fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let f = CnfFormula::parse_dimacs(&text)?;
    let mut s = Solver::default();
    s.load(&f);
    match s.solve_under(&[])? {
        SolveResult::Sat => {
            println!("s SATISFIABLE");
            let lits: Vec<String> = (0..f.num_vars())
                .map(|v| {
                    let l = Var(v as u32).lit(false);
                    if s.model_value(l) { format!("{}", v + 1) } else { format!("-{}", v + 1) }
                })
                .collect();
            println!("v {} 0", lits.join(" "));
        }
        SolveResult::Unsat => println!("s UNSATISFIABLE"),
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = match cli.command {
        Command::Encrypt(a) => cmd_encrypt(a),
        Command::Attack(a) => cmd_attack(a),
        Command::FcScan(a) => cmd_fc_scan(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Solve(a) => cmd_solve(a),
    };
    match run {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
