use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use lmshift::dataset::Dataset;
use lmshift::estimation::{Estimator, EstimatorConfig};
use lmshift::recovery::{self, NateWitness, QuerySpec, SearchCaps, Target};
use lmshift::scm::{self, ScmSpec};
use lmshift::study::{run_study, Scenario, StudyConfig};
use lmshift::{fixtures, LmGraph, NodeId, NodeKind};

/// Causal effects under missingness-specific mechanism shifts.
#[derive(Parser, Debug)]
#[command(name = "lmshift", version, about)]
struct Cli {
    /// Log level for messages on stderr (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decide recoverability of the FATE and/or NATE on an lm-graph.
    Check(CheckArgs),
    /// Sample a dataset from an SCM preset or file.
    Simulate(SimulateArgs),
    /// Run one estimator on a CSV dataset.
    Estimate(EstimateArgs),
    /// Monte Carlo interventional values of the FATE and NATE.
    Oracle(OracleArgs),
    /// Replication study on the benchmark SCM with pass/fail against the reference averages.
    #[command(name = "reproduce-fig4")]
    ReproduceFig4(Fig4Args),
}

#[derive(Args, Debug)]
struct CheckArgs {
    /// Graph JSON file, or a bundled name (fig1b, fig1c, fig2a, fig2b, fig3a, fig3b).
    graph: String,
    /// fate, nate or both.
    #[arg(long, default_value = "both")]
    target: String,
    #[arg(long, default_value = "A")]
    exposure: String,
    /// Defaults to the only substantive sink other than the exposure.
    #[arg(long)]
    outcome: Option<String>,
    /// Witness JSON `{"k": [...], "h": [...], "l": {"R_X=0": [...]}}` for the NATE.
    #[arg(long)]
    witness: Option<PathBuf>,
    /// Search caps `k,h,l` for the NATE witness search.
    #[arg(long, default_value = "2,2,6")]
    search_caps: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, default_value = "appendixA", conflicts_with = "scm")]
    preset: String,
    /// SCM JSON file instead of a preset.
    #[arg(long)]
    scm: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true, default_value_t = scm::APPENDIX_A_50.0)]
    beta1: f64,
    #[arg(long, allow_hyphen_values = true, default_value_t = scm::APPENDIX_A_50.1)]
    beta2: f64,
    #[arg(long, default_value_t = 5000)]
    n: usize,
    #[arg(long, env = "LMSHIFT_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Interventions, e.g. `A=1,R_Y0=1`.
    #[arg(long = "do")]
    interventions: Option<String>,
    /// Write every variable unmasked instead of the observed view.
    #[arg(long)]
    full: bool,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    data: PathBuf,
    /// drn, drf, mim, mi or cc.
    #[arg(long)]
    estimator: String,
    /// Config JSON file or a named config (appendixA).
    #[arg(long, default_value = "appendixA")]
    config: String,
    /// Overrides the config seed.
    #[arg(long, env = "LMSHIFT_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[arg(long, default_value = "appendixA", conflicts_with = "scm")]
    preset: String,
    #[arg(long)]
    scm: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true, default_value_t = scm::APPENDIX_A_50.0)]
    beta1: f64,
    #[arg(long, allow_hyphen_values = true, default_value_t = scm::APPENDIX_A_50.1)]
    beta2: f64,
    #[arg(long, default_value = "A")]
    exposure: String,
    #[arg(long, default_value = "Y1")]
    outcome: String,
    #[arg(long, default_value_t = 2_000_000)]
    n_mc: usize,
    #[arg(long, env = "LMSHIFT_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct Fig4Args {
    /// Missingness scenario: 50 or 30.
    #[arg(long, default_value = "50")]
    scenario: String,
    #[arg(long, default_value_t = 5000)]
    n: usize,
    #[arg(long, default_value_t = 200)]
    m: usize,
    #[arg(long, env = "LMSHIFT_SEED", default_value_t = 0)]
    seed: u64,
    /// Monte Carlo size for the oracle lines; 0 skips them.
    #[arg(long, default_value_t = 2_000_000)]
    oracle_n_mc: usize,
    #[arg(long, default_value = "appendixA")]
    config: String,
    /// Summary CSV (one row per estimator).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Long-format CSV of every replication estimate, for box plots.
    #[arg(long)]
    estimates_out: Option<PathBuf>,
    /// Full JSON report.
    #[arg(long)]
    json: Option<PathBuf>,
}

type AnyResult<T> = std::result::Result<T, Box<dyn std::error::Error>>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    env_logger::Builder::new()
        .parse_filters(&cli.log)
        .target(env_logger::Target::Stderr)
        .init();
    let result = match cli.command {
        Command::Check(a) => cmd_check(a),
        Command::Simulate(a) => cmd_simulate(a).map(|_| 0),
        Command::Estimate(a) => cmd_estimate(a).map(|_| 0),
        Command::Oracle(a) => cmd_oracle(a).map(|_| 0),
        Command::ReproduceFig4(a) => cmd_fig4(a).map(|_| 0),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

/// Provenance attached to every output.
struct Manifest {
    command: String,
    inputs: Vec<String>,
    config: Value,
    seed: Option<u64>,
    started: chrono::DateTime<chrono::Utc>,
    clock: Instant,
}

impl Manifest {
    fn start(command: &str, inputs: Vec<String>, config: Value, seed: Option<u64>) -> Self {
        Manifest {
            command: command.into(),
            inputs,
            config,
            seed,
            started: chrono::Utc::now(),
            clock: Instant::now(),
        }
    }

    fn finish(&self) -> Value {
        json!({
            "command": self.command,
            "inputs": self.inputs,
            "config_hash": config_hash(&self.config),
            "config": self.config,
            "seed": self.seed,
            "tool_version": env!("CARGO_PKG_VERSION"),
            "started_at": self.started.to_rfc3339(),
            "finished_at": chrono::Utc::now().to_rfc3339(),
            "elapsed_seconds": self.clock.elapsed().as_secs_f64(),
        })
    }
}

/// SHA-256 of the compact JSON; object keys are sorted by `serde_json`.
fn config_hash(v: &Value) -> String {
    hex::encode(Sha256::digest(serde_json::to_string(v).expect("json").as_bytes()))
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn write_json(path: Option<&Path>, v: &Value) -> AnyResult<()> {
    let text = serde_json::to_string_pretty(v)? + "\n";
    match path {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn read_text(path: &Path) -> AnyResult<String> {
    fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()).into())
}

fn load_graph(spec: &str) -> AnyResult<LmGraph> {
    let path = Path::new(spec);
    if !path.exists() {
        if let Some(text) = fixtures::raw_json(spec) {
            return Ok(LmGraph::from_json_str(text)?);
        }
    }
    let text = read_text(path)?;
    LmGraph::from_json_str(&text).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn default_outcome(lm: &LmGraph, exposure: &str) -> AnyResult<String> {
    let g = lm.graph();
    let sinks: Vec<NodeId> = g
        .substantive()
        .into_iter()
        .filter(|n| n.as_str() != exposure)
        .filter(|n| {
            g.directed_edges()
                .filter(|(from, _)| from == n)
                .all(|(_, to)| !g.kind(to.as_str()).is_some_and(NodeKind::is_substantive))
        })
        .collect();
    match sinks.as_slice() {
        [only] => Ok(only.to_string()),
        _ => Err(format!(
            "cannot infer the outcome (candidates: {}); pass --outcome",
            sinks.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
        )
        .into()),
    }
}

fn parse_caps(s: &str) -> AnyResult<SearchCaps> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| format!("--search-caps expects k,h,l, got {s:?}"))?;
    match parts.as_slice() {
        [k, h, l] => Ok(SearchCaps {
            k_max: *k,
            h_max: *h,
            l_max: *l,
        }),
        _ => Err(format!("--search-caps expects k,h,l, got {s:?}").into()),
    }
}

fn cmd_check(a: CheckArgs) -> AnyResult<u8> {
    let lm = load_graph(&a.graph)?;
    let outcome = match a.outcome {
        Some(o) => o,
        None => default_outcome(&lm, &a.exposure)?,
    };
    let targets = match a.target.to_ascii_lowercase().as_str() {
        "both" => vec![Target::Fate, Target::Nate],
        t => vec![t.parse::<Target>()?],
    };
    let witness = match &a.witness {
        Some(p) => Some(NateWitness::from_json(&serde_json::from_str(&read_text(p)?)?)?),
        None => None,
    };
    let caps = parse_caps(&a.search_caps)?;
    let config = json!({
        "graph": lm.to_json(),
        "exposure": a.exposure,
        "outcome": outcome,
        "targets": targets,
        "witness": witness.as_ref().map(NateWitness::to_json),
        "search_caps": [caps.k_max, caps.h_max, caps.l_max],
    });
    let manifest = Manifest::start("check", vec![a.graph.clone()], config, None);
    let mut verdicts = Vec::new();
    let mut all_recoverable = true;
    for t in targets {
        let q = QuerySpec::new(a.exposure.as_str(), outcome.as_str(), t);
        let v = recovery::check(&lm, &q, witness.as_ref(), caps)?;
        all_recoverable &= v["verdict"] == "recoverable";
        verdicts.push(v);
    }
    let report = json!({ "verdicts": verdicts, "manifest": manifest.finish() });
    write_json(a.out.as_deref(), &report)?;
    Ok(if all_recoverable { 0 } else { 2 })
}

fn parse_do(s: &str) -> AnyResult<BTreeMap<NodeId, f64>> {
    let mut out = BTreeMap::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| format!("--do expects NAME=VALUE pairs, got {part:?}"))?;
        let v: f64 = v.trim().parse().map_err(|_| format!("--do value for {k} is not a number: {v:?}"))?;
        out.insert(NodeId::from(k.trim()), v);
    }
    Ok(out)
}

fn load_scm(preset: &str, file: Option<&Path>, b1: f64, b2: f64) -> AnyResult<(ScmSpec, Value)> {
    match file {
        Some(p) => {
            let text = read_text(p)?;
            let spec = ScmSpec::from_json_str(&text).map_err(|e| format!("{}: {e}", p.display()))?;
            let v = serde_json::to_value(spec.to_json())?;
            Ok((spec, json!({ "scm": v })))
        }
        None => Ok((
            scm::preset(preset, b1, b2)?,
            json!({ "preset": preset, "beta1": b1, "beta2": b2 }),
        )),
    }
}

fn cmd_simulate(a: SimulateArgs) -> AnyResult<()> {
    let (spec, mut config) = load_scm(&a.preset, a.scm.as_deref(), a.beta1, a.beta2)?;
    let interventions = match &a.interventions {
        Some(s) => parse_do(s)?,
        None => BTreeMap::new(),
    };
    config["n"] = json!(a.n);
    config["do"] = json!(interventions);
    config["full"] = json!(a.full);
    let inputs = a.scm.iter().map(|p| p.display().to_string()).collect();
    let manifest = Manifest::start("simulate", inputs, config, Some(a.seed));
    let data = if a.full {
        spec.sample_full(a.n, a.seed, &interventions)?
    } else {
        spec.sample_interventional(&interventions, a.n, a.seed)?
    };
    data.write_csv(fs::File::create(&a.out)?)?;
    let mut m = manifest.finish();
    m["outputs"] = json!([a.out.display().to_string()]);
    write_json(Some(&sidecar(&a.out)), &m)?;
    log::info!("wrote {} rows to {}", a.n, a.out.display());
    Ok(())
}

fn load_config(spec: &str) -> AnyResult<EstimatorConfig> {
    let path = Path::new(spec);
    if !path.exists() {
        if let Ok(c) = EstimatorConfig::named(spec) {
            return Ok(c);
        }
    }
    let text = read_text(path)?;
    EstimatorConfig::from_json_str(&text).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn cmd_estimate(a: EstimateArgs) -> AnyResult<()> {
    let estimator: Estimator = a
        .estimator
        .parse()
        .map_err(|e| format!("{e}\n\nUsage: lmshift estimate <DATA> --estimator <drn|drf|mim|mi|cc> [--config <CONFIG>]"))?;
    let mut cfg = load_config(&a.config)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let data = Dataset::read_csv(fs::File::open(&a.data).map_err(|e| format!("cannot read {}: {e}", a.data.display()))?)?;
    let config = json!({ "estimator": estimator, "config": serde_json::to_value(&cfg)? });
    let manifest = Manifest::start("estimate", vec![a.data.display().to_string()], config, Some(cfg.seed));
    let report = estimator.estimate(&data, &cfg)?;
    let mut out = serde_json::to_value(&report)?;
    out["manifest"] = manifest.finish();
    write_json(a.out.as_deref(), &out)
}

fn cmd_oracle(a: OracleArgs) -> AnyResult<()> {
    let (spec, mut config) = load_scm(&a.preset, a.scm.as_deref(), a.beta1, a.beta2)?;
    config["n_mc"] = json!(a.n_mc);
    config["exposure"] = json!(a.exposure);
    config["outcome"] = json!(a.outcome);
    let inputs = a.scm.iter().map(|p| p.display().to_string()).collect();
    let manifest = Manifest::start("oracle", inputs, config, Some(a.seed));
    let q = QuerySpec::new(a.exposure.as_str(), a.outcome.as_str(), Target::Nate);
    let r = spec.oracle_effects(&q, a.n_mc, a.seed)?;
    let mut out = serde_json::to_value(&r)?;
    out["manifest"] = manifest.finish();
    write_json(None, &out)
}

fn cmd_fig4(a: Fig4Args) -> AnyResult<()> {
    let scenario: Scenario = a.scenario.parse()?;
    let mut sc = StudyConfig::new(scenario);
    sc.n = a.n;
    sc.m = a.m;
    sc.seed = a.seed;
    sc.oracle_n_mc = a.oracle_n_mc;
    sc.config = load_config(&a.config)?;
    let config = json!({
        "scenario": scenario,
        "n": a.n,
        "m": a.m,
        "oracle_n_mc": a.oracle_n_mc,
        "estimators": sc.estimators,
        "estimator_config": serde_json::to_value(&sc.config)?,
    });
    let manifest = Manifest::start("reproduce-fig4", Vec::new(), config, Some(a.seed));
    let result = run_study(&sc)?;
    let m = manifest.finish();

    let mut stdout = std::io::stdout().lock();
    writeln!(
        stdout,
        "scenario {scenario}%: n = {}, m = {}, seed = {}, mean missing rate {:.3}",
        a.n, a.m, a.seed, result.missing_rate
    )?;
    if let Some(o) = &result.oracle {
        let t = scenario.targets();
        writeln!(
            stdout,
            "oracle FATE {:.4} (se {:.4}; reference {:.4})  NATE {:.4} (se {:.4}; reference {:.4})",
            o.fate, o.mc_se_fate, t.fate, o.nate, o.mc_se_nate, t.nate
        )?;
    }
    for c in &result.checks {
        let s = &result.summaries[&c.estimator];
        writeln!(
            stdout,
            "{} {:5} mean {:9.4} target {:9.4} ±{:.2}  [sd {:.3}, q1 {:.3}, median {:.3}, q3 {:.3}, failed {}]",
            if c.pass { "PASS" } else { "FAIL" },
            c.estimator,
            c.mean,
            c.target,
            c.tolerance,
            s.sd,
            s.q1,
            s.median,
            s.q3,
            result.failures[&c.estimator],
        )?;
    }
    if let Some(p) = &a.out {
        fs::write(p, result.to_csv()?)?;
        write_json(Some(&sidecar(p)), &m)?;
    }
    if let Some(p) = &a.estimates_out {
        let mut w = csv::Writer::from_path(p)?;
        w.write_record(["estimator", "config", "replication", "estimate"])?;
        for (e, vals) in &result.estimates {
            for (k, v) in vals.iter().enumerate() {
                w.write_record([e.label().to_string(), scenario.to_string(), k.to_string(), v.to_string()])?;
            }
        }
        w.flush()?;
        write_json(Some(&sidecar(p)), &m)?;
    }
    if let Some(p) = &a.json {
        let mut v = serde_json::to_value(&result)?;
        v["manifest"] = m;
        write_json(Some(p), &v)?;
    }
    Ok(())
}
