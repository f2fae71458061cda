//! Command-line front end.
//!
//! Every subcommand prints a short human summary to stdout and optionally
//! writes a JSON report (`--json <path>`, `-` for stdout). Exit codes:
//! 0 when the report verdict passes, 1 when it fails or a stage errors,
//! 2 for usage and input parse errors.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use laxkit::mc::{mc_form, verify_mc_equation};

use laxkit_cli::{pipeline, report, spec};
use pipeline::{Overrides, Pipeline};
use report::{matrix_rows, table_lines, Envelope, RepFile, TableFile};

#[derive(Parser)]
#[command(
    name = "laxkit",
    version,
    about = "Derives and certifies zero-curvature representations of evolution equations"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Write the JSON report to this path (`-` for stdout).
    #[arg(long, global = true, value_name = "OUT")]
    json: Option<PathBuf>,
    /// Attach wall-clock stage timings to the report.
    #[arg(long, global = true)]
    timings: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Ideal encoding and closure certificates.
    #[command(subcommand)]
    Ideal(IdealCmd),
    /// Connection ansatz and determining conditions.
    #[command(subcommand)]
    Prolong(ProlongCmd),
    /// Holonomy filtration and bracket closure.
    Holonomy(HolonomyArgs),
    /// Matrix representations of the closed algebra.
    #[command(subcommand)]
    Rep(RepCmd),
    /// Lax pair assembly and compatibility.
    #[command(subcommand)]
    Lax(LaxCmd),
    /// Left-invariant form series for a bracket table.
    #[command(subcommand)]
    Mc(McCmd),
    /// All stages in order, stopping at the first failure.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct SpecArg {
    /// Problem spec file.
    #[arg(long, value_name = "FILE")]
    spec: PathBuf,
}

#[derive(Subcommand)]
enum IdealCmd {
    /// Certify that the differential of every generator stays in the ideal.
    Check {
        #[command(flatten)]
        spec: SpecArg,
        /// Degree bound for reduction multipliers.
        #[arg(long, value_name = "N")]
        max_degree: Option<u32>,
    },
}

#[derive(Subcommand)]
enum ProlongCmd {
    /// Derive the determining conditions for the connection coefficients.
    Derive {
        #[command(flatten)]
        spec: SpecArg,
    },
    /// Solve the determining conditions into coefficients and relations.
    Solve {
        #[command(flatten)]
        spec: SpecArg,
    },
}

#[derive(Args)]
struct HolonomyArgs {
    #[command(flatten)]
    spec: SpecArg,
    /// Filtration level (overrides the spec).
    #[arg(long, value_name = "L")]
    holonomy_level: Option<u32>,
}

#[derive(Subcommand)]
enum RepCmd {
    /// Verify the matrices named by the spec against table and relations.
    Verify {
        #[command(flatten)]
        spec: SpecArg,
        #[arg(long, value_name = "L")]
        holonomy_level: Option<u32>,
    },
    /// Search upper triangular representations of the closed table.
    Search {
        #[command(flatten)]
        spec: SpecArg,
        /// Matrix dimension (overrides the spec).
        #[arg(long, value_name = "N")]
        rep_dim: Option<usize>,
        /// Randomly specialize free entries and re-verify.
        #[arg(long, value_name = "SEED")]
        seed: Option<u64>,
    },
}

#[derive(Subcommand)]
enum LaxCmd {
    /// Assemble the pair and check the compatibility condition exactly.
    Verify {
        #[command(flatten)]
        spec: SpecArg,
        #[arg(long, value_name = "L")]
        holonomy_level: Option<u32>,
    },
}

#[derive(Args)]
struct McArgs {
    /// Bracket table (JSON).
    table: PathBuf,
    /// Series truncation order.
    #[arg(long, default_value_t = 2, value_name = "N")]
    series_order: u32,
}

#[derive(Subcommand)]
enum McCmd {
    /// Print the series matrices and candidate forms.
    Build(McArgs),
    /// Check the closure equation residuals at the given order.
    Verify(McArgs),
}

#[derive(Args)]
struct PipelineArgs {
    #[command(flatten)]
    spec: SpecArg,
    #[arg(long, value_name = "N")]
    max_degree: Option<u32>,
    #[arg(long, value_name = "L")]
    holonomy_level: Option<u32>,
    #[arg(long, value_name = "N")]
    rep_dim: Option<usize>,
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn usage_err(error: anyhow::Error) -> Failure {
    Failure { code: 2, error }
}

fn stage_err(error: anyhow::Error) -> Failure {
    Failure { code: 1, error }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json = cli.json.clone();
    let timings = cli.timings;
    match run(cli.cmd, json.as_deref(), timings) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn load_spec(path: &Path) -> Result<(spec::ProblemSpec, PathBuf), Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage_err(anyhow::anyhow!("cannot read `{}`: {e}", path.display())))?;
    let parsed = spec::parse_spec(&text)
        .map_err(|e| usage_err(anyhow::anyhow!("{}: {e}", path.display())))?;
    let dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    Ok((parsed, dir))
}

fn pipeline_for(
    spec_path: &Path,
    overrides: Overrides,
) -> Result<Pipeline, Failure> {
    let (parsed, dir) = load_spec(spec_path)?;
    Ok(Pipeline::new(parsed, &dir, overrides))
}

/// Serializes the envelope, emits it, and reduces to the process verdict.
fn emit<T: Serialize>(
    mut env: Envelope<T>,
    human: Vec<String>,
    json: Option<&Path>,
    timings: Option<BTreeMap<String, u128>>,
) -> Result<bool, Failure> {
    env.timings_ms = timings;
    // `--json -` replaces the human summary so stdout stays parseable.
    let json_to_stdout = json.is_some_and(|p| p.as_os_str() == "-");
    if !json_to_stdout {
        for line in &human {
            println!("{line}");
        }
        println!("verdict: {}", if env.passed() { "pass" } else { "fail" });
    }
    if let Some(path) = json {
        let body = env.to_json();
        if json_to_stdout {
            print!("{body}");
        } else {
            fs::write(path, body).map_err(|e| {
                stage_err(anyhow::anyhow!("cannot write `{}`: {e}", path.display()))
            })?;
        }
    }
    Ok(env.passed())
}

fn run(cmd: Cmd, json: Option<&Path>, timings: bool) -> Result<bool, Failure> {
    match cmd {
        Cmd::Ideal(IdealCmd::Check { spec, max_degree }) => {
            let mut p = pipeline_for(
                &spec.spec,
                Overrides { max_degree, ..Overrides::default() },
            )?;
            let (stage, pass) = p.run_ideal().map_err(stage_err)?;
            let mut human = vec![format!(
                "ideal: {} encoding, {} generators, closed = {}",
                stage.mode,
                stage.generators.len(),
                stage.closed
            )];
            for c in &stage.certificates {
                human.push(format!(
                    "  d({}) = [{}] against the generators, remainder {}",
                    c.generator,
                    c.multipliers.join(", "),
                    c.remainder
                ));
            }
            emit(
                Envelope::new("ideal check", pass, stage),
                human,
                json,
                timings.then(|| p.timings().clone()),
            )
        }
        Cmd::Prolong(ProlongCmd::Derive { spec }) => {
            let mut p = pipeline_for(&spec.spec, Overrides::default())?;
            let (ideal, ideal_pass) = p.run_ideal().map_err(stage_err)?;
            if !ideal_pass {
                let human = vec!["ideal: not closed; cannot derive".to_string()];
                return emit(Envelope::new("prolong derive", false, ideal), human, json, None);
            }
            let (stage, pass) = p.run_determining().map_err(stage_err)?;
            let mut human = vec![format!(
                "determining: {} conditions, {} multipliers eliminated, {} reduced",
                stage.conditions.len(),
                stage.eliminated.len(),
                stage.reduced.len()
            )];
            for c in &stage.conditions {
                human.push(format!("  [{}] {} = 0", c.wedge, c.lhs));
            }
            emit(
                Envelope::new("prolong derive", pass, stage),
                human,
                json,
                timings.then(|| p.timings().clone()),
            )
        }
        Cmd::Prolong(ProlongCmd::Solve { spec }) => {
            let mut p = pipeline_for(&spec.spec, Overrides::default())?;
            let (stage, pass) = p.run_solve().map_err(stage_err)?;
            let mut human = vec![
                format!("bx = {}", stage.bx),
                format!("bt = {}", stage.bt),
            ];
            for m in &stage.multipliers {
                human.push(format!("  multiplier: {m}"));
            }
            for r in &stage.relations {
                human.push(format!("  relation: {r} = 0"));
            }
            emit(
                Envelope::new("prolong solve", pass, stage),
                human,
                json,
                timings.then(|| p.timings().clone()),
            )
        }
        Cmd::Holonomy(args) => {
            let mut p = pipeline_for(
                &args.spec.spec,
                Overrides { holonomy_level: args.holonomy_level, ..Overrides::default() },
            )?;
            let (stage, pass) = p.run_holonomy().map_err(stage_err)?;
            let mut human = vec![format!(
                "holonomy level {}: basis [{}], stable = {}, perfect = {}, closure solved = {}",
                stage.level,
                stage.basis.join(", "),
                stage.stable,
                stage.perfect,
                stage.closure.verified
            )];
            for d in &stage.defining {
                human.push(format!("  {d}"));
            }
            for t in &stage.closure.table {
                human.push(format!("  table: {t}"));
            }
            for (n, v) in &stage.closure.solved {
                human.push(format!("  solved: {n} = {v}"));
            }
            for (q, l) in &stage.closure.parameter_sources {
                human.push(format!("  free: {q} = {l}"));
            }
            for (n, e) in &stage.closure.expansions {
                human.push(format!("  expansion: {n} = {e}"));
            }
            if !stage.sign_sensitive.is_empty() {
                human.push(format!(
                    "  sign convention differs from seed-reversed tables on: {}",
                    stage.sign_sensitive.join(", ")
                ));
            }
            for n in &stage.notes {
                human.push(format!("  note: {n}"));
            }
            emit(
                Envelope::new("holonomy", pass, stage),
                human,
                json,
                timings.then(|| p.timings().clone()),
            )
        }
        Cmd::Rep(RepCmd::Verify { spec, holonomy_level }) => {
            let (parsed, dir) = load_spec(&spec.spec)?;
            // Validate the representation file eagerly: unreadable or
            // malformed input is a usage error, not a verdict.
            if let Some(rel) = parsed.rep.as_ref().and_then(|r| r.matrices.clone()) {
                let path = if rel.is_absolute() { rel } else { dir.join(rel) };
                RepFile::load(&path).map_err(usage_err)?;
            } else {
                return Err(usage_err(anyhow::anyhow!(
                    "the spec names no representation file (`matrices =` in `[rep]`)"
                )));
            }
            let mut p = Pipeline::new(
                parsed,
                &dir,
                Overrides { holonomy_level, ..Overrides::default() },
            );
            let (stage, pass) = p.run_rep_verify().map_err(stage_err)?;
            let mut human = vec![format!(
                "rep: {}, dim {}, verified = {}",
                stage.source, stage.dim, stage.verified
            )];
            for f in &stage.failures {
                human.push(format!("  failure: {f}"));
            }
            emit(
                Envelope::new("rep verify", pass, stage),
                human,
                json,
                timings.then(|| p.timings().clone()),
            )
        }
        Cmd::Rep(RepCmd::Search { spec, rep_dim, seed }) => {
            let mut p = pipeline_for(
                &spec.spec,
                Overrides { rep_dim, ..Overrides::default() },
            )?;
            let (stage, pass) = p.run_rep_search(seed).map_err(stage_err)?;
            let families = stage.families.as_deref().unwrap_or(&[]);
            let mut human = vec![format!(
                "rep search: dim {}, {} families, all verified = {}",
                stage.dim,
                families.len(),
                stage.verified
            )];
            for (i, f) in families.iter().enumerate() {
                let bindings: Vec<String> =
                    f.bindings.iter().map(|(n, v)| format!("{n} = {v}")).collect();
                human.push(format!(
                    "  family {i}: [{}], free [{}], degenerate = {}, verified = {}",
                    bindings.join(", "),
                    f.free.join(", "),
                    f.degenerate,
                    f.verified
                ));
            }
            emit(
                Envelope::new("rep search", pass, stage),
                human,
                json,
                timings.then(|| p.timings().clone()),
            )
        }
        Cmd::Lax(LaxCmd::Verify { spec, holonomy_level }) => {
            let mut p = pipeline_for(
                &spec.spec,
                Overrides { holonomy_level, ..Overrides::default() },
            )?;
            let (stage, pass) = p.run_lax().map_err(stage_err)?;
            let rows = |m: &[Vec<String>]| {
                m.iter()
                    .map(|r| format!("[{}]", r.join(", ")))
                    .collect::<Vec<_>>()
                    .join(", ")
            };
            let human = vec![
                format!("lambda: {}", stage.lambda),
                format!("U = [{}]", rows(&stage.u)),
                format!("V = [{}]", rows(&stage.v)),
                format!("residual = [{}]", rows(&stage.residual)),
                format!("flat = {}", stage.flat),
            ];
            emit(
                Envelope::new("lax verify", pass, stage),
                human,
                json,
                timings.then(|| p.timings().clone()),
            )
        }
        Cmd::Mc(McCmd::Build(args)) => {
            let table = TableFile::load(&args.table).map_err(usage_err)?;
            let sc = table.to_constants().map_err(usage_err)?;
            let form = mc_form(&sc, args.series_order).map_err(|e| stage_err(e.into()))?;
            let report = McBuildReport {
                series_order: form.series_order,
                a: matrix_rows(&form.a),
                w: matrix_rows(&form.w),
                forms: form.forms.iter().map(|f| f.to_string()).collect(),
                table: table_lines(&sc),
            };
            let mut human = vec![format!("series order {}", report.series_order)];
            for (name, f) in sc.names().iter().zip(&report.forms) {
                human.push(format!("  w[{name}] = {f}"));
            }
            emit(Envelope::new("mc build", true, report), human, json, None)
        }
        Cmd::Mc(McCmd::Verify(args)) => {
            let table = TableFile::load(&args.table).map_err(usage_err)?;
            let sc = table.to_constants().map_err(usage_err)?;
            let mc = verify_mc_equation(&sc, args.series_order).map_err(|e| stage_err(e.into()))?;
            let pass = mc.basepoint_ok && mc.truncation_ok;
            let report = McVerifyReport {
                series_order: mc.form.series_order,
                exact: mc.exact,
                truncation_ok: mc.truncation_ok,
                basepoint_ok: mc.basepoint_ok,
                nilpotency_index: mc.nilpotency_index,
                w: matrix_rows(&mc.form.w),
                forms: mc.form.forms.iter().map(|f| f.to_string()).collect(),
                residuals: mc.residuals.iter().map(|r| r.to_string()).collect(),
            };
            let mut human = vec![format!(
                "series order {}: exact = {}, truncation floor ok = {}, basepoint ok = {}",
                report.series_order, report.exact, report.truncation_ok, report.basepoint_ok
            )];
            for (name, r) in sc.names().iter().zip(&report.residuals) {
                human.push(format!("  residual[{name}] = {r}"));
            }
            emit(Envelope::new("mc verify", pass, report), human, json, None)
        }
        Cmd::Pipeline(args) => {
            let mut p = pipeline_for(
                &args.spec.spec,
                Overrides {
                    max_degree: args.max_degree,
                    holonomy_level: args.holonomy_level,
                    rep_dim: args.rep_dim,
                },
            )?;
            let (stage, pass) = p.run_all().map_err(stage_err)?;
            let mut human = Vec::new();
            let done = |present: bool| if present { "done" } else { "skipped" };
            human.push(format!("ideal: {}", done(stage.ideal.is_some())));
            human.push(format!("determining: {}", done(stage.determining.is_some())));
            human.push(format!("solve: {}", done(stage.solve.is_some())));
            human.push(format!("holonomy: {}", done(stage.holonomy.is_some())));
            human.push(format!("rep: {}", done(stage.rep.is_some())));
            human.push(format!("lax: {}", done(stage.lax.is_some())));
            if let Some(f) = &stage.failed_stage {
                human.push(format!("failed stage: {f}"));
            }
            if let Some(l) = &stage.lax {
                human.push(format!("zero curvature: flat = {} (lambda {})", l.flat, l.lambda));
            }
            for n in &stage.notes {
                human.push(format!("note: {n}"));
            }
            emit(
                Envelope::new("pipeline", pass, stage),
                human,
                json,
                timings.then(|| p.timings().clone()),
            )
        }
    }
}

#[derive(Serialize)]
struct McBuildReport {
    series_order: u32,
    a: Vec<Vec<String>>,
    w: Vec<Vec<String>>,
    forms: Vec<String>,
    table: Vec<String>,
}

#[derive(Serialize)]
struct McVerifyReport {
    series_order: u32,
    exact: bool,
    truncation_ok: bool,
    basepoint_ok: bool,
    nilpotency_index: Option<u32>,
    w: Vec<Vec<String>>,
    forms: Vec<String>,
    residuals: Vec<String>,
}
