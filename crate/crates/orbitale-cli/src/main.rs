//! Command-line front end: instance generation, verification drivers,
//! structured JSON/CSV output, seeded reproducibility.
//!
//! Exit-code contract: 0 = all requested identities hold; 2 = input or
//! precondition error; 3 = an identity was violated (the counterexample is
//! serialized in the report). On a precision shortfall the run is retried
//! once with doubled working precision unless `--strict-precision` is set.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use orbitale::error::Error;
use orbitale::lattice::{lattice_counts, DEFAULT_CAP};
use orbitale::localfield::{parse_ext, Ctx, Ext};
use orbitale::matching::match_sym_to_uni;
use orbitale::matspace::{invariants_sym, Case, Mat, OrbitInvariants, SymDatum};
use orbitale::orbital::{verify_fl_batch, FlReport};
use orbitale::par;
use orbitale::sample::{rng_from_seed, sample_sym, DEFAULT_TRIES};
use orbitale::whittaker::{random_params, verify_whittaker};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(
    name = "orbitale",
    version,
    about = "Exact engine for p-adic orbit invariants, matching, and lattice-count identities"
)]
struct Cli {
    /// Working precision in certified π-digits.
    #[arg(long, global = true, default_value_t = 32)]
    prec: usize,
    /// Fail immediately on precision exhaustion instead of retrying once
    /// with doubled precision.
    #[arg(long, global = true)]
    strict_precision: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum CaseArg {
    Fj,
    Bessel,
}

impl CaseArg {
    fn to_case(self) -> Case {
        match self {
            CaseArg::Fj => Case::FJ,
            CaseArg::Bessel => Case::Bessel,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Compute the invariants of a datum file and print them as JSON.
    Invariants {
        /// Datum JSON file (see `sample` for the schema).
        file: PathBuf,
    },
    /// Sample seeded regular r = 0 data; one JSON datum per line, or one
    /// file per datum under --out-dir.
    Sample {
        #[arg(long)]
        q: u32,
        #[arg(long, value_enum)]
        case: CaseArg,
        /// Matrix size n (fj: n = m; bessel: n = m + 1).
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 4)]
        val_delta_max: i64,
        #[arg(long, default_value_t = 1)]
        instances: u32,
        #[arg(long)]
        seed: u64,
        /// Directory for datum_###.json files (stdout when omitted).
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Match a split-side datum file to its unitary partner.
    Match {
        /// Split-side datum JSON file.
        file: PathBuf,
    },
    /// Count stable and self-dual lattices for a coefficient file
    /// {"q":3, "a":["..."], "b":["..."]}.
    CountLattices {
        file: PathBuf,
        /// Enumeration cap (log of quotient size must stay below this).
        #[arg(long, default_value_t = DEFAULT_CAP)]
        cap: u64,
    },
    /// Sample instances and verify the matching identity four ways each.
    VerifyFl {
        #[arg(long)]
        q: u32,
        #[arg(long, value_enum)]
        case: CaseArg,
        /// Matrix size n (fj: n = m; bessel: n = m + 1).
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 4)]
        val_delta_max: i64,
        #[arg(long, default_value_t = 10)]
        instances: u32,
        #[arg(long)]
        seed: u64,
        /// JSON report path; a CSV summary is written next to it.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_CAP)]
        cap: u64,
    },
    /// Verify the unramified spectral identity on seeded random parameters.
    VerifyWhittaker {
        /// Size of the first parameter tuple.
        #[arg(long)]
        n: usize,
        /// Size of the second parameter tuple.
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 8)]
        order: usize,
        #[arg(long, default_value_t = 10)]
        trials: u32,
        #[arg(long)]
        seed: u64,
    },
}

// ---------------------------------------------------------------------------
// datum files
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct DatumFile {
    q: u32,
    /// "sym" (split group) or "uni" (unitary group).
    side: String,
    /// "fj" or "bessel".
    case: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    m: usize,
    #[serde(default)]
    r: usize,
    zeta: Vec<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    x: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    y: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    beta: Option<Vec<Vec<String>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    z: Option<Vec<String>>,
}

fn jerr(e: serde_json::Error) -> Error {
    Error::Input(format!("JSON serialization: {e}"))
}

/// Print a line to stdout, exiting quietly when the reader hung up (e.g.
/// piped into `head`) instead of panicking.
fn emit(s: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    if writeln!(out, "{s}").is_err() {
        std::process::exit(0);
    }
}

fn parse_case(s: &str) -> Result<Case, Error> {
    match s {
        "fj" => Ok(Case::FJ),
        "bessel" => Ok(Case::Bessel),
        other => Err(Error::Input(format!(
            "unknown case '{other}' (expected fj|bessel)"
        ))),
    }
}

fn case_name(c: Case) -> &'static str {
    match c {
        Case::FJ => "fj",
        Case::Bessel => "bessel",
    }
}

fn parse_row(ctx: &Ctx, v: &[String]) -> Result<Mat, Error> {
    let entries: Vec<Ext> = v
        .iter()
        .map(|s| parse_ext(ctx, s))
        .collect::<Result<_, _>>()?;
    Ok(Mat::from_fn(ctx, 1, entries.len(), |_, j| {
        entries[j].clone()
    }))
}

fn parse_col(ctx: &Ctx, v: &[String]) -> Result<Mat, Error> {
    Ok(parse_row(ctx, v)?.transpose())
}

impl DatumFile {
    fn read(path: &Path) -> Result<Self, Error> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Input(format!("{}: malformed datum JSON: {e}", path.display())))
    }

    fn to_sym(&self, prec: usize) -> Result<(Ctx, SymDatum), Error> {
        if self.side != "sym" {
            return Err(Error::Input(format!(
                "expected a split-side datum (side = \"sym\"), found side = \"{}\"",
                self.side
            )));
        }
        let mut ctx = Ctx::new(self.q)?;
        ctx.prec = prec;
        let case = parse_case(&self.case)?;
        let zeta = Mat::parse(&ctx, &self.zeta)?;
        let x = self.x.as_ref().map(|v| parse_row(&ctx, v)).transpose()?;
        let y = self.y.as_ref().map(|v| parse_col(&ctx, v)).transpose()?;
        let datum = SymDatum::new(case, self.m, self.r, zeta, x, y)?;
        if let Some(n) = self.n {
            if n != datum.zeta.rows {
                return Err(Error::Input(format!(
                    "declared n = {n} but the datum has n = {}",
                    datum.zeta.rows
                )));
            }
        }
        Ok((ctx, datum))
    }

    fn from_sym(q: u32, datum: &SymDatum) -> Self {
        DatumFile {
            q,
            side: "sym".into(),
            case: case_name(datum.case).into(),
            n: Some(datum.zeta.rows),
            m: datum.m,
            r: datum.r,
            zeta: datum.zeta.render(),
            x: datum.x.as_ref().map(|m| m.render().remove(0)),
            y: datum.y.as_ref().map(|m| m.transpose().render().remove(0)),
            beta: None,
            z: None,
        }
    }
}

fn invariants_json(q: u32, inv: &OrbitInvariants) -> Value {
    json!({
        "q": q,
        "case": case_name(inv.case),
        "m": inv.m,
        "r": inv.r,
        "t": inv.t.iter().map(Ext::render).collect::<Vec<_>>(),
        "a": inv.a.iter().map(Ext::render).collect::<Vec<_>>(),
        "b": inv.b.iter().map(Ext::render).collect::<Vec<_>>(),
        "delta": inv.delta.render(),
        "T": inv.big_t.render(),
        "delta_val": inv.val_delta,
        "T_val": inv.val_big_t,
        "parity": inv.parity,
        "transfer": inv.transfer_sign,
        "regular": inv.regular,
    })
}

// ---------------------------------------------------------------------------
// validation
// ---------------------------------------------------------------------------

fn check_ranges(n: usize, val_delta_max: i64) -> Result<(), Error> {
    if n == 0 || n > 4 {
        return Err(Error::Input(format!(
            "n = {n} outside the supported range 1..=4"
        )));
    }
    if !(0..=6).contains(&val_delta_max) {
        return Err(Error::Input(format!(
            "val-delta-max = {val_delta_max} outside the supported range 0..=6"
        )));
    }
    Ok(())
}

/// fj: n = m; bessel: n = m + 1.
fn m_of_n(case: Case, n: usize) -> Result<usize, Error> {
    match case {
        Case::FJ => Ok(n),
        Case::Bessel => n
            .checked_sub(1)
            .ok_or_else(|| Error::Input("bessel data need n >= 1".into())),
    }
}

// ---------------------------------------------------------------------------
// subcommand bodies (return exit code 0 or 3; Err means exit 2)
// ---------------------------------------------------------------------------

fn cmd_invariants(file: &Path, prec: usize) -> Result<i32, Error> {
    let df = DatumFile::read(file)?;
    let (_, datum) = df.to_sym(prec)?;
    let inv = invariants_sym(&datum)?;
    emit(&serde_json::to_string_pretty(&invariants_json(df.q, &inv)).map_err(jerr)?);
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_sample(
    q: u32,
    case: Case,
    n: usize,
    val_delta_max: i64,
    instances: u32,
    seed: u64,
    out_dir: Option<&Path>,
    prec: usize,
) -> Result<i32, Error> {
    check_ranges(n, val_delta_max)?;
    let m = m_of_n(case, n)?;
    let mut ctx = Ctx::new(q)?;
    ctx.prec = prec;
    let mut rng = rng_from_seed(seed);
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)
            .map_err(|e| Error::Input(format!("cannot create {}: {e}", dir.display())))?;
    }
    for i in 0..instances {
        let (datum, _inv) = sample_sym(&ctx, case, m, val_delta_max, DEFAULT_TRIES, &mut rng)?;
        let df = DatumFile::from_sym(q, &datum);
        let line = serde_json::to_string(&df).map_err(jerr)?;
        match out_dir {
            Some(dir) => {
                let path = dir.join(format!("datum_{i:03}.json"));
                fs::write(&path, format!("{line}\n"))
                    .map_err(|e| Error::Input(format!("cannot write {}: {e}", path.display())))?;
            }
            None => emit(&line),
        }
    }
    Ok(0)
}

fn cmd_match(file: &Path, prec: usize) -> Result<i32, Error> {
    let df = DatumFile::read(file)?;
    let (_, datum) = df.to_sym(prec)?;
    let inv = invariants_sym(&datum)?;
    let (hc, uni, cert) = match_sym_to_uni(&datum)?;
    let uni_json = json!({
        "q": df.q,
        "side": "uni",
        "case": case_name(uni.case),
        "n": uni.zeta.rows,
        "m": uni.m,
        "r": uni.r,
        "beta": uni.beta.render(),
        "zeta": uni.zeta.render(),
        "z": uni.z.as_ref().map(|m| m.transpose().render().remove(0)),
    });
    let out = json!({
        "beta": hc.beta.render(),
        "epsilon": hc.epsilon,
        "unitary_datum": uni_json,
        "certificate_ok": cert.verified,
        "invariants": invariants_json(df.q, &inv),
    });
    emit(&serde_json::to_string_pretty(&out).map_err(jerr)?);
    Ok(0)
}

#[derive(Deserialize)]
struct CoeffFile {
    q: u32,
    a: Vec<String>,
    b: Vec<String>,
}

fn cmd_count_lattices(file: &Path, cap: u64, prec: usize) -> Result<i32, Error> {
    let text = fs::read_to_string(file)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", file.display())))?;
    let cf: CoeffFile = serde_json::from_str(&text).map_err(|e| {
        Error::Input(format!(
            "{}: malformed coefficient JSON: {e}",
            file.display()
        ))
    })?;
    let mut ctx = Ctx::new(cf.q)?;
    ctx.prec = prec;
    if cf.a.is_empty() || cf.a.len() != cf.b.len() {
        return Err(Error::Input(format!(
            "need equal nonempty coefficient lists, got #a = {}, #b = {}",
            cf.a.len(),
            cf.b.len()
        )));
    }
    let a: Vec<Ext> =
        cf.a.iter()
            .map(|s| parse_ext(&ctx, s))
            .collect::<Result<_, _>>()?;
    let b: Vec<Ext> =
        cf.b.iter()
            .map(|s| parse_ext(&ctx, s))
            .collect::<Result<_, _>>()?;
    let rep = lattice_counts(&ctx, &a, &b, cap)?;
    let out = json!({
        "q": rep.q,
        "n": rep.n,
        "d": rep.d,
        "M": rep.m_counts,
        "alt_sum": rep.alt_sum,
        "N": rep.n_count,
        "identity_applicable": rep.identity_applicable,
        "identity_holds": rep.identity_holds,
    });
    emit(&serde_json::to_string_pretty(&out).map_err(jerr)?);
    Ok(if rep.identity_holds == Some(false) {
        3
    } else {
        0
    })
}

fn fl_record(idx: u32, seed: u64, df: &DatumFile, r: &FlReport) -> Value {
    json!({
        "idx": idx,
        "seed": seed,
        "q": r.q,
        "case": case_name(r.case),
        "n": r.n,
        "val_delta": r.val_delta,
        "val_t": r.val_t,
        "parity": r.parity,
        "transfer": r.transfer_sign,
        "epsilon": r.epsilon,
        "sym": r.sym_direct,
        "uni": r.uni_direct,
        "alt_m": r.alt_m,
        "n_lattice": r.n_lattice,
        "m_counts": r.m_counts,
        "stage_sym_vs_lattice": r.stage_sym_vs_lattice,
        "stage_uni_vs_lattice": r.stage_uni_vs_lattice,
        "stage_identity": r.stage_identity,
        "fl_holds": r.fl_holds,
        "datum": serde_json::to_value(df).unwrap(),
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_verify_fl(
    q: u32,
    case: Case,
    n: usize,
    val_delta_max: i64,
    instances: u32,
    seed: u64,
    out: Option<&Path>,
    cap: u64,
    prec: usize,
) -> Result<i32, Error> {
    check_ranges(n, val_delta_max)?;
    let m = m_of_n(case, n)?;
    let mut ctx = Ctx::new(q)?;
    ctx.prec = prec;
    let mut rng = rng_from_seed(seed);
    let mut data = Vec::with_capacity(instances as usize);
    for _ in 0..instances {
        let (datum, _) = sample_sym(&ctx, case, m, val_delta_max, DEFAULT_TRIES, &mut rng)?;
        data.push(datum);
    }
    let reports = verify_fl_batch(data.clone(), cap);

    let mut records = Vec::with_capacity(reports.len());
    let mut failures = 0u32;
    for (i, (datum, rep)) in data.iter().zip(reports).enumerate() {
        let rep = rep?;
        if !rep.fl_holds {
            failures += 1;
        }
        let df = DatumFile::from_sym(q, datum);
        records.push(fl_record(i as u32, seed, &df, &rep));
    }

    let json_report = serde_json::to_string_pretty(&Value::Array(records.clone())).map_err(jerr)?;
    let mut csv_text = String::from("seed,n,q,valDelta,parity,sym,uni,altM,N,transfer,fl_holds\n");
    for r in &records {
        csv_text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r["seed"],
            r["n"],
            r["q"],
            r["val_delta"],
            r["parity"],
            r["sym"],
            r["uni"],
            r["alt_m"],
            r["n_lattice"],
            r["transfer"],
            r["fl_holds"],
        ));
    }

    match out {
        Some(path) => {
            fs::write(path, &json_report)
                .map_err(|e| Error::Input(format!("cannot write {}: {e}", path.display())))?;
            let csv_path = path.with_extension("csv");
            fs::write(&csv_path, &csv_text)
                .map_err(|e| Error::Input(format!("cannot write {}: {e}", csv_path.display())))?;
            let summary = json!({
                "instances": instances,
                "failed": failures,
                "all_hold": failures == 0,
                "report": path.display().to_string(),
                "csv": csv_path.display().to_string(),
            });
            emit(&serde_json::to_string_pretty(&summary).map_err(jerr)?);
        }
        None => emit(&json_report),
    }
    Ok(if failures == 0 { 0 } else { 3 })
}

fn cmd_verify_whittaker(
    n: usize,
    m: usize,
    order: usize,
    trials: u32,
    seed: u64,
) -> Result<i32, Error> {
    if n == 0 || m == 0 {
        return Err(Error::Input(
            "parameter tuple sizes must be positive".into(),
        ));
    }
    let mut rng = rng_from_seed(seed);
    let mut records = Vec::new();
    let mut failures = 0u32;
    for t in 0..trials {
        let alpha = random_params(n, &mut rng);
        let beta = random_params(m, &mut rng);
        let rep = verify_whittaker(&alpha, &beta, order)?;
        if !rep.holds {
            failures += 1;
        }
        let diffs: Vec<String> = rep
            .sum_coeffs
            .iter()
            .zip(&rep.l_coeffs)
            .map(|(a, b)| {
                if a == b {
                    "0".to_string()
                } else {
                    format!("{a} != {b}")
                }
            })
            .collect();
        records.push(json!({
            "trial": t,
            "alpha": alpha.iter().map(|r| r.to_string()).collect::<Vec<_>>(),
            "beta": beta.iter().map(|r| r.to_string()).collect::<Vec<_>>(),
            "order": order,
            "coeff_diffs": diffs,
            "first_mismatch": rep.first_mismatch,
            "holds": rep.holds,
        }));
    }
    emit(&serde_json::to_string_pretty(&Value::Array(records)).map_err(jerr)?);
    Ok(if failures == 0 { 0 } else { 3 })
}

// ---------------------------------------------------------------------------
// driver with the precision-retry policy
// ---------------------------------------------------------------------------

fn run(cli: &Cli, prec: usize) -> Result<i32, Error> {
    match &cli.cmd {
        Cmd::Invariants { file } => cmd_invariants(file, prec),
        Cmd::Sample {
            q,
            case,
            n,
            val_delta_max,
            instances,
            seed,
            out_dir,
        } => cmd_sample(
            *q,
            case.to_case(),
            *n,
            *val_delta_max,
            *instances,
            *seed,
            out_dir.as_deref(),
            prec,
        ),
        Cmd::Match { file } => cmd_match(file, prec),
        Cmd::CountLattices { file, cap } => cmd_count_lattices(file, *cap, prec),
        Cmd::VerifyFl {
            q,
            case,
            n,
            val_delta_max,
            instances,
            seed,
            out,
            cap,
        } => cmd_verify_fl(
            *q,
            case.to_case(),
            *n,
            *val_delta_max,
            *instances,
            *seed,
            out.as_deref(),
            *cap,
            prec,
        ),
        Cmd::VerifyWhittaker {
            n,
            m,
            order,
            trials,
            seed,
        } => cmd_verify_whittaker(*n, *m, *order, *trials, *seed),
    }
}

fn main() {
    par::configure_threads();
    let cli = Cli::parse();
    let code = match run(&cli, cli.prec) {
        Ok(code) => code,
        Err(Error::PrecisionExhausted(msg)) if !cli.strict_precision => {
            eprintln!(
                "precision exhausted ({msg}); retrying once at prec = {}",
                cli.prec * 2
            );
            match run(&cli, cli.prec * 2) {
                Ok(code) => code,
                Err(e) => {
                    eprintln!("error: {e}");
                    2
                }
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    };
    std::process::exit(code);
}
