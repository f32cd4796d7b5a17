//! `ars` — command-line runner for the generator simulator and its
//! verification suites: generation demos, per-lemma checks, hybrid-chain
//! steps, the end-to-end trace-distance estimate, t-design demos, and
//! rounded-Gaussian pmf tables.
//!
//! Exit codes: 0 = pass/informational, 1 = bound violation, 2 = usage or
//! parameter error. The report document goes to stdout (and to `--out` when
//! given); human-readable progress goes to stderr.

use ars_core::gaussian::{
    derive_seed, pmf_support, rounded_pmf, seed_from_hex, seed_to_hex, RandomBitstream,
    RoundingParams, Seed256,
};
use ars_core::generator::{
    ars_generate, gen_params, tdesign_generate, tdesign_keygen, tdesign_m, GenOutcome,
};
use ars_core::verify::{
    e2e_trace_distance, hybrid_step_check, verify_lemma, HybridStep, HybridStepReport, LemmaId,
    LemmaParams, LemmaReport, Verdict,
};
use clap::{Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde::Serialize;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

const TAG_CLI_SPEC: u64 = 0x636c_6900_0000_0001;
const TAG_CLI_BVS: u64 = 0x636c_6900_0000_0002;
const TAG_CLI_KEYGEN: u64 = 0x636c_6900_0000_0003;

/// Largest pmf grid exponent the table emitter accepts (2·B·2^m rows).
const PMF_TABLE_MAX_M: u32 = 14;

#[derive(Parser)]
#[command(
    name = "ars",
    version,
    about = "Simulator and numerical verifier for an oracle-based random-state generator"
)]
struct Cli {
    /// 256-bit seed as 64 hex characters; a fresh entropy draw when omitted
    /// (always echoed into the report)
    #[arg(long, global = true, env = "ARS_SEED")]
    seed: Option<String>,

    /// Worker thread count (results are identical across thread counts)
    #[arg(long, global = true, env = "ARS_THREADS")]
    threads: Option<usize>,

    /// Also write the report document to this path
    #[arg(long, global = true, env = "ARS_OUT")]
    out: Option<PathBuf>,

    /// Report format: json (canonical) or csv (flat projection)
    #[arg(long, global = true, env = "ARS_FORMAT", value_enum, default_value_t = Format::Json)]
    format: Format,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the generator once and emit the state's amplitudes
    Sample(SampleArgs),
    /// Verify one lemma (or a hybrid step, or `all`) and report the verdict
    Verify(VerifyArgs),
    /// Estimate the end-to-end t-copy trace distance against its bound
    E2e(E2eArgs),
    /// t-design demo: sample a key, run the generator against it
    Design(DesignArgs),
    /// Emit the rounded-Gaussian pmf table on the (ε, B) grid
    Pmf(PmfArgs),
}

#[derive(clap::Args, Serialize)]
struct SampleArgs {
    #[arg(long, env = "ARS_N")]
    n: u32,
    #[arg(long, env = "ARS_LAMBDA")]
    lambda: u32,
}

#[derive(clap::Args, Serialize)]
struct VerifyArgs {
    /// Lemma id (gaussian_long, coord_bounded, balanced, rounded_long,
    /// cond_coord, cond2_coord, layer, not_in_layer, long_vectors,
    /// bvs_claim), a hybrid step (P1P2 … P10P11), `hybrid` for the whole
    /// chain, or `all` for the full lemma suite
    #[arg(long, env = "ARS_LEMMA")]
    lemma: String,
    #[arg(long, default_value_t = 1, env = "ARS_N")]
    n: u32,
    #[arg(long, default_value_t = 8, env = "ARS_LAMBDA")]
    lambda: u32,
    /// Copy count for hybrid steps
    #[arg(long, default_value_t = 1, env = "ARS_T")]
    t: u32,
    /// Monte Carlo trials; per-lemma defaults when omitted
    #[arg(long, env = "ARS_TRIALS")]
    trials: Option<u64>,
}

#[derive(clap::Args, Serialize)]
struct E2eArgs {
    #[arg(long, env = "ARS_N")]
    n: u32,
    #[arg(long, env = "ARS_LAMBDA")]
    lambda: u32,
    #[arg(long, default_value_t = 1, env = "ARS_T")]
    t: u32,
    #[arg(long, default_value_t = 1_000_000, env = "ARS_RUNS")]
    runs: u64,
}

#[derive(clap::Args, Serialize)]
struct DesignArgs {
    #[arg(long, env = "ARS_N")]
    n: u32,
    #[arg(long, env = "ARS_LAMBDA")]
    lambda: u32,
    #[arg(long, default_value_t = 1, env = "ARS_T")]
    t: u32,
}

#[derive(clap::Args, Serialize)]
struct PmfArgs {
    #[arg(long, env = "ARS_N")]
    n: u32,
    #[arg(long, env = "ARS_LAMBDA")]
    lambda: u32,
}

/// Report envelope: everything needed to reproduce the run. The `report`
/// payload is a pure function of the embedded seed and parameters;
/// `wall_seconds` is the only field that varies between identical runs.
#[derive(Serialize)]
struct Envelope<T: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    params: serde_json::Value,
    seed: String,
    threads: usize,
    wall_seconds: f64,
    report: T,
}

#[derive(Serialize)]
struct SampleReport {
    n: u32,
    lambda: u32,
    branch: ars_core::generator::GenBranch,
    failed: bool,
    candidate_index: Option<u32>,
    bvs_rounds: u32,
    norm_sqr: f64,
    amplitudes: Vec<[f64; 2]>,
}

#[derive(Serialize)]
struct DesignReport {
    n: u32,
    lambda: u32,
    t: u32,
    family_size: u64,
    input_bits: u32,
    output_bits: u32,
    coefficients: Vec<String>,
    failed: bool,
    candidate_index: Option<u32>,
    bvs_rounds: u32,
    amplitudes: Vec<[f64; 2]>,
}

#[derive(Serialize)]
struct PmfReport {
    m: u32,
    b: u32,
    eps: f64,
    mass: f64,
    /// (grid value, probability); rows below 1e-18 omitted
    rows: Vec<(f64, f64)>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

type CliError = Box<dyn std::error::Error>;

fn resolve_seed(arg: &Option<String>) -> Result<Seed256, CliError> {
    match arg {
        Some(hex) => Ok(seed_from_hex(hex)?),
        None => {
            let mut rng = rand::rng();
            Ok([rng.random(), rng.random(), rng.random(), rng.random()])
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err("--threads must be ≥ 1".into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| format!("thread pool: {e}"))?;
    }
    let seed = resolve_seed(&cli.seed)?;
    let start = Instant::now();

    match &cli.cmd {
        Cmd::Sample(args) => {
            let report = cmd_sample(args, &seed)?;
            let params = serde_json::to_value(args)?;
            emit(
                &cli,
                "sample",
                params,
                &seed,
                start,
                &report,
                sample_csv(&report),
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Verify(args) => cmd_verify(&cli, args, &seed, start),
        Cmd::E2e(args) => {
            let report = e2e_trace_distance(args.n, args.lambda, args.t, args.runs, &seed)?;
            eprintln!(
                "e2e n={} lambda={} t={}: estimate {:.6e} ± {:.1e}, bound {:.6e} → {}",
                args.n,
                args.lambda,
                args.t,
                report.estimate,
                report.stderr,
                report.bound,
                verdict_word(report.verdict)
            );
            let params = serde_json::to_value(args)?;
            let code = verdict_exit(report.verdict);
            emit(
                &cli,
                "e2e",
                params,
                &seed,
                start,
                &report,
                lemma_csv(std::slice::from_ref(&report)),
            )?;
            Ok(code)
        }
        Cmd::Design(args) => {
            if cli.format == Format::Csv {
                return Err("design reports have no CSV projection; use --format json".into());
            }
            let report = cmd_design(args, &seed)?;
            let params = serde_json::to_value(args)?;
            emit(&cli, "design", params, &seed, start, &report, None)?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Pmf(args) => {
            let report = cmd_pmf(args)?;
            let params = serde_json::to_value(args)?;
            emit(&cli, "pmf", params, &seed, start, &report, pmf_csv(&report))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn cmd_sample(args: &SampleArgs, seed: &Seed256) -> Result<SampleReport, CliError> {
    let params = gen_params(args.n, args.lambda)?;
    let spec = params.oracle_spec(derive_seed(seed, 0, TAG_CLI_SPEC));
    let mut rng = RandomBitstream::substream(seed, 0, TAG_CLI_BVS);
    let out = ars_generate(&params, &spec, &mut rng)?;
    print_amplitude_table(&out);
    let amps = out.state.amplitudes();
    Ok(SampleReport {
        n: args.n,
        lambda: args.lambda,
        branch: out.branch,
        failed: out.failed,
        candidate_index: out.candidate_index,
        bvs_rounds: out.bvs_rounds,
        norm_sqr: amps.iter().map(|z| z.norm_sqr()).sum(),
        amplitudes: amps.iter().map(|z| [z.re, z.im]).collect(),
    })
}

fn print_amplitude_table(out: &GenOutcome) {
    eprintln!(
        "branch {:?}, candidate {:?}, bvs rounds {}, failed {}",
        out.branch, out.candidate_index, out.bvs_rounds, out.failed
    );
    eprintln!(
        "{:>6}  {:>24}  {:>24}  {:>12}",
        "index", "re", "im", "|amp|^2"
    );
    for (i, z) in out.state.amplitudes().iter().enumerate() {
        eprintln!(
            "{i:>6}  {:>24.16e}  {:>24.16e}  {:>12.6e}",
            z.re,
            z.im,
            z.norm_sqr()
        );
    }
}

fn default_trials(id: LemmaId) -> u64 {
    match id {
        LemmaId::CoordBounded | LemmaId::Layer => 0,
        LemmaId::CondCoord | LemmaId::Cond2Coord | LemmaId::NotInLayer => 10_000_000,
        LemmaId::LongVectors => 10_000,
        LemmaId::BvsClaim => 100_000,
        _ => 1_000_000,
    }
}

fn cmd_verify(
    cli: &Cli,
    args: &VerifyArgs,
    seed: &Seed256,
    start: Instant,
) -> Result<ExitCode, CliError> {
    let params = LemmaParams::new(args.n, args.lambda);
    let run_one = |id: LemmaId| -> Result<LemmaReport, CliError> {
        let trials = args.trials.unwrap_or_else(|| default_trials(id));
        let r = verify_lemma(id, &params, trials, seed)?;
        eprintln!(
            "{} n={} lambda={}: estimate {:.6e} ± {:.1e}, bound {:.6e} → {}",
            r.lemma_id,
            args.n,
            args.lambda,
            r.estimate,
            r.stderr,
            r.bound,
            verdict_word(r.verdict)
        );
        Ok(r)
    };
    let run_step = |step: HybridStep| -> Result<HybridStepReport, CliError> {
        let trials = args.trials.unwrap_or(1_000_000);
        let r = hybrid_step_check(step, args.n, args.lambda, args.t, trials, seed)?;
        eprintln!(
            "{} n={} lambda={} t={}: estimate {:.6e} ± {:.1e}, bound {:.6e} → {}",
            r.step,
            args.n,
            args.lambda,
            args.t,
            r.estimate,
            r.stderr,
            r.bound,
            verdict_word(r.verdict)
        );
        Ok(r)
    };
    let cli_params = serde_json::to_value(args)?;

    if args.lemma == "all" {
        let mut reports = Vec::new();
        for id in LemmaId::ALL {
            reports.push(run_one(id)?);
        }
        let code = worst_exit(reports.iter().map(|r| r.verdict));
        emit(
            cli,
            "verify",
            cli_params,
            seed,
            start,
            &reports,
            lemma_csv(&reports),
        )?;
        Ok(code)
    } else if args.lemma == "hybrid" {
        let mut reports = Vec::new();
        for step in HybridStep::ALL {
            reports.push(run_step(step)?);
        }
        let code = worst_exit(reports.iter().map(|r| r.verdict));
        emit(
            cli,
            "verify",
            cli_params,
            seed,
            start,
            &reports,
            step_csv(&reports, args),
        )?;
        Ok(code)
    } else if let Ok(id) = LemmaId::parse(&args.lemma) {
        let report = run_one(id)?;
        let code = verdict_exit(report.verdict);
        emit(
            cli,
            "verify",
            cli_params,
            seed,
            start,
            &report,
            lemma_csv(std::slice::from_ref(&report)),
        )?;
        Ok(code)
    } else {
        let step = HybridStep::parse(&args.lemma)
            .map_err(|_| format!("unknown lemma or hybrid step '{}'", args.lemma))?;
        let report = run_step(step)?;
        let code = verdict_exit(report.verdict);
        emit(
            cli,
            "verify",
            cli_params,
            seed,
            start,
            &report,
            step_csv(std::slice::from_ref(&report), args),
        )?;
        Ok(code)
    }
}

fn cmd_design(args: &DesignArgs, seed: &Seed256) -> Result<DesignReport, CliError> {
    let params = gen_params(args.n, args.lambda)?;
    let mut keygen_rng = RandomBitstream::substream(seed, 0, TAG_CLI_KEYGEN);
    let key = tdesign_keygen(args.n, args.lambda, args.t, &mut keygen_rng)?;
    let mut bvs_rng = RandomBitstream::substream(seed, 0, TAG_CLI_BVS);
    let out = tdesign_generate(&key, &params, &mut bvs_rng)?;
    print_amplitude_table(&out);
    Ok(DesignReport {
        n: args.n,
        lambda: args.lambda,
        t: args.t,
        family_size: tdesign_m(args.n, args.lambda, args.t),
        input_bits: key.input_bits,
        output_bits: key.output_bits,
        coefficients: key
            .coefficients
            .iter()
            .map(|c| format!("{c:016x}"))
            .collect(),
        failed: out.failed,
        candidate_index: out.candidate_index,
        bvs_rounds: out.bvs_rounds,
        amplitudes: out
            .state
            .amplitudes()
            .iter()
            .map(|z| [z.re, z.im])
            .collect(),
    })
}

fn cmd_pmf(args: &PmfArgs) -> Result<PmfReport, CliError> {
    let m = args.n + args.lambda;
    if m > PMF_TABLE_MAX_M {
        return Err(format!(
            "pmf table capped at n+lambda ≤ {PMF_TABLE_MAX_M} (2·B·2^m rows); got m={m}"
        )
        .into());
    }
    let b = ars_core::verify::tail_cut(args.n, args.lambda);
    let p = RoundingParams::new(m, b)?;
    let mut rows = Vec::new();
    let mut mass = 0.0;
    for y in pmf_support(&p) {
        let prob = rounded_pmf(y, &p);
        mass += prob;
        if prob >= 1e-18 {
            rows.push((y, prob));
        }
    }
    Ok(PmfReport {
        m,
        b,
        eps: p.eps(),
        mass,
        rows,
    })
}

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

fn verdict_word(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "pass",
        Verdict::Fail => "FAIL",
        Verdict::Informational => "informational",
    }
}

fn verdict_exit(v: Verdict) -> ExitCode {
    match v {
        Verdict::Fail => ExitCode::from(1),
        _ => ExitCode::SUCCESS,
    }
}

fn worst_exit(verdicts: impl Iterator<Item = Verdict>) -> ExitCode {
    let mut code = ExitCode::SUCCESS;
    for v in verdicts {
        if v == Verdict::Fail {
            code = ExitCode::from(1);
        }
    }
    code
}

fn lemma_csv(reports: &[LemmaReport]) -> Option<Vec<Vec<String>>> {
    let mut rows = vec![vec![
        "lemma_id".into(),
        "params".into(),
        "estimate".into(),
        "stderr".into(),
        "bound".into(),
        "verdict".into(),
    ]];
    for r in reports {
        let params = r
            .params
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";");
        rows.push(vec![
            r.lemma_id.clone(),
            params,
            format!("{}", r.estimate),
            format!("{}", r.stderr),
            format!("{}", r.bound),
            verdict_word(r.verdict).into(),
        ]);
    }
    Some(rows)
}

fn step_csv(reports: &[HybridStepReport], args: &VerifyArgs) -> Option<Vec<Vec<String>>> {
    let mut rows = vec![vec![
        "lemma_id".into(),
        "params".into(),
        "estimate".into(),
        "stderr".into(),
        "bound".into(),
        "verdict".into(),
    ]];
    for r in reports {
        rows.push(vec![
            r.step.clone(),
            format!("n={};lambda={};t={}", args.n, args.lambda, args.t),
            format!("{}", r.estimate),
            format!("{}", r.stderr),
            format!("{}", r.bound),
            verdict_word(r.verdict).into(),
        ]);
    }
    Some(rows)
}

fn sample_csv(report: &SampleReport) -> Option<Vec<Vec<String>>> {
    let mut rows = vec![vec!["index".into(), "re".into(), "im".into()]];
    for (i, [re, im]) in report.amplitudes.iter().enumerate() {
        rows.push(vec![format!("{i}"), format!("{re}"), format!("{im}")]);
    }
    Some(rows)
}

fn pmf_csv(report: &PmfReport) -> Option<Vec<Vec<String>>> {
    let mut rows = vec![vec!["y".into(), "probability".into()]];
    for (y, p) in &report.rows {
        rows.push(vec![format!("{y}"), format!("{p}")]);
    }
    Some(rows)
}

/// Renders the document in the chosen format, prints it to stdout, and
/// mirrors it into `--out` when given.
fn emit<T: Serialize>(
    cli: &Cli,
    command: &'static str,
    params: serde_json::Value,
    seed: &Seed256,
    start: Instant,
    report: &T,
    csv_rows: Option<Vec<Vec<String>>>,
) -> Result<(), CliError> {
    let document = match cli.format {
        Format::Json => {
            let envelope = Envelope {
                tool: "ars",
                version: env!("CARGO_PKG_VERSION"),
                command,
                params,
                seed: seed_to_hex(seed),
                threads: rayon::current_num_threads(),
                wall_seconds: start.elapsed().as_secs_f64(),
                report,
            };
            let mut s = serde_json::to_string_pretty(&envelope)?;
            s.push('\n');
            s
        }
        Format::Csv => {
            let rows = csv_rows.ok_or("this command has no CSV projection; use --format json")?;
            let mut w = csv::Writer::from_writer(Vec::new());
            for row in rows {
                w.write_record(&row)?;
            }
            String::from_utf8(w.into_inner()?)?
        }
    };
    print!("{document}");
    if let Some(path) = &cli.out {
        let mut f = std::fs::File::create(path)?;
        f.write_all(document.as_bytes())?;
    }
    Ok(())
}
