use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::config::{SweepFile, SweepKind, SyntheticConfig};
use super::manifest::{allocate_run, unix_now, RunManifest, RunState, RESULTS_DIR, TABLES_DIR};
use super::output::{fmt_num, round_sig, write_csv, write_json};
use super::{exit_code, EXIT_OK, EXIT_VIOLATION};
use crate::error::{LabError, Limits, Result};
use crate::expsum::ExpSumSpec;
use crate::geometry::{
    check_partition, check_rescale, geo1_suite, geo2_suite, geo3_suite, DecouplingParams, GeoReport,
};
use crate::moment::{moment_brute, moment_exact, MomentResult};
use crate::quadrature::{moment_quadrature, QuadratureGrid, DEFAULT_OVERSAMPLE};
use crate::sharpness::{
    broad_narrow_check, exponent_fit, maincor_row, mainexp_row, sample_points, summarize_maincor,
    summarize_mainexp, CoeffFamily, ExponentFit, SweepReport, SweepRow,
};

#[derive(Debug, Parser)]
#[command(
    name = "smallcap",
    version,
    about = "Moments of cubic exponential sums and small-cap geometry checks"
)]
#[command(
    after_help = "Exit codes: 0 ok, 1 violation or FAIL verdict, 2 invalid input, 3 budget exceeded, 4 I/O error"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Output directory (results/, tables/, manifests/ are created inside).
    #[arg(long, global = true, default_value = "smallcap-out")]
    pub out: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
    /// Maximum ordered s-tuples enumerated by the exact engine.
    #[arg(long = "budget-tuples", global = true)]
    pub budget_tuples: Option<u64>,
    /// Maximum quadrature cells times frequencies.
    #[arg(long = "budget-cells", global = true)]
    pub budget_cells: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One moment of |S|^{2s} (or |S|^p) over [0,1]² × H.
    Moment(MomentArgs),
    /// Run a TOML sweep configuration and fit its exponent.
    Sweep(SweepArgs),
    /// Sampled geometry checks.
    Geometry(GeometryArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MomentMethod {
    Exact,
    Brute,
    Quad,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MomentArgs {
    #[arg(long = "N")]
    pub n: usize,
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    /// Half the even exponent.
    #[arg(long)]
    pub s: Option<usize>,
    /// Real exponent, quadrature only (defaults to 2s).
    #[arg(long)]
    pub p: Option<f64>,
    /// Left end of H.
    #[arg(long, default_value_t = 0.0)]
    pub h0: f64,
    /// constant, random_sign or random_phase.
    #[arg(long, default_value = "constant")]
    #[serde(serialize_with = "as_display")]
    pub coeffs: CoeffFamily,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = MomentMethod::Exact)]
    pub method: MomentMethod,
    #[arg(long, default_value_t = DEFAULT_OVERSAMPLE)]
    pub oversample: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    /// TOML file with `kind` and a matching [mainexp], [maincor] or [synthetic] section.
    pub config: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeoCheck {
    Geo1,
    Geo2,
    Geo3,
    Rescale,
    Partition,
    BroadNarrow,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GeometryArgs {
    #[arg(long, value_enum)]
    pub check: GeoCheck,
    /// Top scale R (for geo3, the largest R_next considered).
    #[arg(long = "R", default_value_t = 1048576.0)]
    pub r: f64,
    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,
    #[arg(long = "c-eps", default_value_t = 1.0)]
    pub c_eps: f64,
    /// Samples per configuration (per random sum for broad-narrow).
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Previous scale for the rescale check.
    #[arg(long = "R-prev", default_value_t = 4096.0)]
    pub r_prev: f64,
    /// Block index for the rescale check.
    #[arg(long, default_value_t = 0)]
    pub l: usize,
    /// Number of frequencies for broad-narrow.
    #[arg(long = "N", default_value_t = 64)]
    pub n: usize,
    #[arg(long, default_value_t = 16)]
    pub bands: usize,
    /// Band separation for broad-narrow.
    #[arg(long = "E", default_value_t = 2.0)]
    pub e: f64,
    #[arg(long, default_value = "random_phase")]
    #[serde(serialize_with = "as_display")]
    pub coeffs: CoeffFamily,
}

fn as_display<T: std::fmt::Display, S: serde::Serializer>(
    v: &T,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(v)
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let command_line = args
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    match execute(&cli, command_line) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

struct Run {
    out: PathBuf,
    manifest: RunManifest,
    clock: Instant,
}

impl Run {
    fn start(
        cli: &Cli,
        command_line: Vec<String>,
        sub: &str,
        config: serde_json::Value,
        limits: Limits,
    ) -> Result<Run> {
        let id = allocate_run(&cli.out, sub)?;
        Ok(Run {
            out: cli.out.clone(),
            clock: Instant::now(),
            manifest: RunManifest {
                id,
                command_line,
                subcommand: sub.into(),
                config,
                seeds: vec![],
                software_version: env!("CARGO_PKG_VERSION").into(),
                started_unix: unix_now(),
                wall_time: 0.0,
                workers: cli.workers,
                budgets: limits,
                state: RunState::Completed,
                message: None,
                outputs: vec![],
            },
        })
    }

    fn result_path(&self) -> PathBuf {
        Path::new(RESULTS_DIR).join(format!("{}.json", self.manifest.id))
    }

    fn table_path(&self) -> PathBuf {
        Path::new(TABLES_DIR).join(format!("{}.csv", self.manifest.id))
    }

    fn write_result(&mut self, record: &serde_json::Value) -> Result<()> {
        let rel = self.result_path();
        write_json(&self.out.join(&rel), record)?;
        self.manifest.add_output(&self.out, &rel)
    }

    fn write_table(&mut self, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let rel = self.table_path();
        write_csv(&self.out.join(&rel), header, rows)?;
        self.manifest.add_output(&self.out, &rel)
    }

    fn finish(mut self, state: RunState, message: Option<String>) -> Result<()> {
        self.manifest.state = state;
        self.manifest.message = message;
        self.manifest.wall_time = self.clock.elapsed().as_secs_f64();
        self.manifest.write(&self.out)?;
        Ok(())
    }

    /// Records a failure and hands the error back.
    fn fail(self, err: LabError) -> Result<i32> {
        self.finish(RunState::Failed, Some(err.to_string()))?;
        Err(err)
    }
}

fn limits_for(cli: &Cli, base: Limits) -> Limits {
    Limits {
        tuples: cli.budget_tuples.unwrap_or(base.tuples),
        cell_ops: cli.budget_cells.unwrap_or(base.cell_ops),
        ..base
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    serde_json::to_value(v).map_err(|e| LabError::Io(e.into()))
}

fn execute(cli: &Cli, command_line: Vec<String>) -> Result<i32> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers)
        .build()
        .map_err(|e| LabError::invalid(format!("worker pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Moment(a) => cmd_moment(cli, a, command_line),
        Command::Sweep(a) => cmd_sweep(cli, a, command_line),
        Command::Geometry(a) => cmd_geometry(cli, a, command_line),
    })
}

fn moment_value(a: &MomentArgs, limits: &Limits) -> Result<(MomentResult, f64)> {
    let spec = ExpSumSpec::new(a.coeffs.coeffs(a.n, a.seed), a.sigma, a.h0)?;
    let need_s = || {
        a.s.ok_or_else(|| LabError::invalid("--s is required for exact and brute"))
    };
    match a.method {
        MomentMethod::Exact | MomentMethod::Brute => {
            if a.p.is_some() {
                return Err(LabError::invalid("--p applies only to --method quad"));
            }
            let s = need_s()?;
            let m = if a.method == MomentMethod::Exact {
                moment_exact(&spec, s, limits)?
            } else {
                moment_brute(&spec, s, limits)?
            };
            Ok((m, 2.0 * s as f64))
        }
        MomentMethod::Quad => {
            let p = match (a.p, a.s) {
                (Some(p), _) => p,
                (None, Some(s)) => 2.0 * s as f64,
                (None, None) => return Err(LabError::invalid("--method quad needs --p or --s")),
            };
            let grid = QuadratureGrid::for_spec(&spec, p, a.oversample)?;
            Ok((moment_quadrature(&spec, p, &grid, limits)?, p))
        }
    }
}

fn cmd_moment(cli: &Cli, a: &MomentArgs, command_line: Vec<String>) -> Result<i32> {
    let limits = limits_for(cli, Limits::default());
    let mut run = Run::start(cli, command_line, "moment", to_json(a)?, limits)?;
    run.manifest.seeds = vec![a.seed];
    let (m, p) = match moment_value(a, &limits) {
        Ok(v) => v,
        Err(e) => return run.fail(e),
    };
    let record = json!({
        "manifest": run.manifest.id,
        "command": "moment",
        "N": a.n,
        "sigma": a.sigma,
        "h0": a.h0,
        "p": p,
        "coeffs": a.coeffs.to_string(),
        "seed": a.seed,
        "method": m.method,
        "value": round_sig(m.value),
        "err_estimate": round_sig(m.err_estimate),
    });
    run.write_result(&record)?;
    println!(
        "moment N={} sigma={} p={} coeffs={} method={}: {} (err {})",
        a.n,
        fmt_num(a.sigma),
        fmt_num(p),
        a.coeffs,
        m.method,
        fmt_num(m.value),
        fmt_num(m.err_estimate)
    );
    run.finish(RunState::Completed, None)?;
    Ok(EXIT_OK)
}

fn synthetic_rows(c: &SyntheticConfig) -> Vec<SweepRow> {
    c.x.iter()
        .map(|&x| {
            let v = c.constant * x.powf(c.exponent);
            SweepRow {
                x,
                value: v,
                envelope: v,
                seed_count: 1,
                method: crate::moment::Method::Exact,
                err_estimate: 0.0,
            }
        })
        .collect()
}

fn synthetic_report(c: &SyntheticConfig, rows: Vec<SweepRow>) -> Result<SweepReport> {
    let fit: ExponentFit = exponent_fit(&rows.iter().map(|r| (r.x, r.value)).collect::<Vec<_>>())?;
    Ok(SweepReport {
        pass: (fit.slope - c.exponent).abs() <= c.tolerance,
        envelope_constant: 1.0,
        target: c.exponent,
        fit,
        rows,
    })
}

/// Rows in input order up to the first failed point.
fn sweep_rows(file: &SweepFile, limits: &Limits) -> (Vec<SweepRow>, Option<LabError>) {
    let results: Vec<Result<SweepRow>> = match file.kind {
        SweepKind::Mainexp => {
            let c = file.mainexp.as_ref().expect("validated");
            c.n_values
                .par_iter()
                .map(|&n| mainexp_row(c, n, limits))
                .collect()
        }
        SweepKind::Maincor => {
            let c = file.maincor.as_ref().expect("validated");
            c.r_values
                .par_iter()
                .map(|&r| maincor_row(c, r, limits))
                .collect()
        }
        SweepKind::Synthetic => synthetic_rows(file.synthetic.as_ref().expect("validated"))
            .into_iter()
            .map(Ok)
            .collect(),
    };
    let mut rows = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => return (rows, Some(e)),
        }
    }
    (rows, None)
}

fn table_rows(rows: &[SweepRow], method: &str) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                fmt_num(r.x),
                fmt_num(r.value),
                fmt_num(r.envelope),
                r.seed_count.to_string(),
                if method.is_empty() {
                    r.method.to_string()
                } else {
                    method.to_string()
                },
                fmt_num(r.err_estimate),
            ]
        })
        .collect()
}

fn cmd_sweep(cli: &Cli, a: &SweepArgs, command_line: Vec<String>) -> Result<i32> {
    let mut file = SweepFile::load(&a.config)?;
    file.budget = limits_for(cli, file.budget);
    let limits = file.budget;
    let mut run = Run::start(cli, command_line, "sweep", to_json(&file)?, limits)?;
    run.manifest.seeds = file.seeds();
    let (x_name, method) = match file.kind {
        SweepKind::Mainexp => ("N", ""),
        SweepKind::Maincor => ("R", ""),
        SweepKind::Synthetic => ("N", "synthetic"),
    };
    let header = [
        x_name,
        "value",
        "envelope",
        "seed_count",
        "method",
        "err_estimate",
    ];
    let (rows, err) = sweep_rows(&file, &limits);
    run.write_table(&header, &table_rows(&rows, method))?;
    if let Some(e) = err {
        return run.fail(e);
    }
    let report = match file.kind {
        SweepKind::Mainexp => summarize_mainexp(file.mainexp.as_ref().expect("validated"), rows),
        SweepKind::Maincor => summarize_maincor(file.maincor.as_ref().expect("validated"), rows),
        SweepKind::Synthetic => synthetic_report(file.synthetic.as_ref().expect("validated"), rows),
    };
    let report = match report {
        Ok(r) => r,
        Err(e) => return run.fail(e),
    };
    let verdict = if report.pass { "PASS" } else { "FAIL" };
    let record = json!({
        "manifest": run.manifest.id,
        "command": "sweep",
        "kind": file.kind,
        "table": run.table_path().to_string_lossy().replace('\\', "/"),
        "slope": round_sig(report.fit.slope),
        "intercept": round_sig(report.fit.intercept),
        "max_residual": round_sig(report.fit.max_residual),
        "n_points": report.fit.n_points,
        "target": round_sig(report.target),
        "envelope_constant": round_sig(report.envelope_constant),
        "verdict": verdict,
    });
    run.write_result(&record)?;
    println!(
        "sweep {}: slope {} target {} {verdict} ({})",
        to_json(&file.kind)?.as_str().unwrap_or_default(),
        fmt_num(report.fit.slope),
        fmt_num(report.target),
        run.table_path().display()
    );
    if report.pass {
        run.finish(RunState::Completed, None)?;
        Ok(EXIT_OK)
    } else {
        let msg = format!(
            "fitted slope {} vs target {}",
            fmt_num(report.fit.slope),
            fmt_num(report.target)
        );
        run.finish(RunState::Violation, Some(msg))?;
        Ok(EXIT_VIOLATION)
    }
}

/// Runs one geometry check and returns its report as JSON plus the violation count.
fn geometry_report(a: &GeometryArgs) -> Result<(serde_json::Value, u64, Option<String>)> {
    let geo = |rep: GeoReport| -> Result<(serde_json::Value, u64, Option<String>)> {
        let v = rep.violations;
        let first = rep.first_violation.clone();
        Ok((to_json(&rep)?, v, first))
    };
    match a.check {
        GeoCheck::Geo1 => geo(geo1_suite(
            &DecouplingParams::new(a.r, a.beta)?,
            a.c_eps,
            a.samples,
            a.seed,
        )?),
        GeoCheck::Geo2 => {
            let (cases, rep) = geo2_suite(
                &DecouplingParams::new(a.r, a.beta)?,
                a.c_eps,
                a.samples,
                a.seed,
            )?;
            let (mut v, n, first) = geo(rep)?;
            v["cases"] = to_json(&cases)?;
            Ok((v, n, first))
        }
        GeoCheck::Geo3 => geo(geo3_suite(a.r, a.c_eps, &[], a.samples, a.seed)?),
        GeoCheck::Rescale => geo(check_rescale(
            a.r_prev,
            a.l,
            &DecouplingParams::new(a.r, a.beta)?,
            a.samples,
            a.seed,
        )?),
        GeoCheck::Partition => geo(check_partition(
            &DecouplingParams::new(a.r, a.beta)?,
            a.samples,
            a.seed,
        )?),
        GeoCheck::BroadNarrow => {
            let spec = ExpSumSpec::new(a.coeffs.coeffs(a.n, a.seed), 0.0, 0.0)?;
            let rep = broad_narrow_check(&spec, a.bands, a.e, &sample_points(a.samples, a.seed))?;
            let bad = u64::from(rep.max_ratio > 1.0);
            let first =
                (bad > 0).then(|| format!("ratio {} at {:?}", rep.max_ratio, rep.worst_point));
            Ok((to_json(&rep)?, bad, first))
        }
    }
}

fn cmd_geometry(cli: &Cli, a: &GeometryArgs, command_line: Vec<String>) -> Result<i32> {
    let limits = limits_for(cli, Limits::default());
    let mut run = Run::start(cli, command_line, "geometry", to_json(a)?, limits)?;
    run.manifest.seeds = vec![a.seed];
    let (report, violations, first) = match geometry_report(a) {
        Ok(v) => v,
        Err(e) => return run.fail(e),
    };
    let check = to_json(&a.check)?;
    run.write_result(&json!({
        "manifest": run.manifest.id,
        "command": "geometry",
        "check": check,
        "violations": violations,
        "report": report,
    }))?;
    println!(
        "geometry {}: {violations} violations",
        check.as_str().unwrap_or_default()
    );
    if violations == 0 {
        run.finish(RunState::Completed, None)?;
        Ok(EXIT_OK)
    } else {
        if let Some(f) = &first {
            eprintln!("violation: {f}");
        }
        run.finish(RunState::Violation, first)?;
        Ok(EXIT_VIOLATION)
    }
}
