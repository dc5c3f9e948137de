use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use mdp_forge::discrete::EnvDump;
use mdp_forge::harness::{analyze_csv, run_model, run_single, run_sweep, Policy, Protocol, SweepGrid, SweepResult};
use mdp_forge::render::{render_continuous, render_discrete, sample_transform, Scene, TransformParams};
use mdp_forge::{
    derive_stream, AgentConfig, CanvasSpec, ContinuousEnv, DiscreteModel, EnvConfig, ImageGrid, TransformDraw,
};
use serde_json::Value;

use crate::{AgentArg, Command, Common, Format};

pub const SEED_VAR: &str = "MDP_FORGE_SEED";

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Config(String),
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Config(m) | Failure::Runtime(m) => f.write_str(m),
        }
    }
}

type Outcome = Result<(), Failure>;

fn runtime<E: fmt::Display>(e: E) -> Failure {
    Failure::Runtime(e.to_string())
}

fn config_err<E: fmt::Display>(e: E) -> Failure {
    Failure::Config(e.to_string())
}

fn read_json(path: &Path) -> Result<Value, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

/// Seed from the flag, else none (the document keeps its own), else the
/// environment variable when the document has no seed of its own.
fn seed_source(flag: Option<u64>, doc_has_seed: bool) -> Result<Option<u64>, Failure> {
    if flag.is_some() {
        return Ok(flag);
    }
    if doc_has_seed {
        return Ok(None);
    }
    match std::env::var(SEED_VAR) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Failure::Config(format!("{SEED_VAR}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn is_dump(doc: &Value) -> bool {
    doc.get("format").is_some() && doc.get("transitions").is_some()
}

fn is_grid(doc: &Value) -> bool {
    doc.get("base").is_some()
}

fn load_config(common: &Common) -> Result<EnvConfig, Failure> {
    let mut doc = read_json(&common.config)?;
    if !doc.is_object() {
        return Err(Failure::Config("config must be a JSON object".into()));
    }
    if let Some(seed) = seed_source(common.seed, doc.get("seed").is_some())? {
        doc["seed"] = seed.into();
    }
    EnvConfig::validate_and_default(&doc).map_err(config_err)
}

/// A discrete model from a dump, with an optional seed override applied to
/// the runtime only (the structure is fixed by the dump).
fn load_dump(doc: Value, flag: Option<u64>) -> Result<(Arc<DiscreteModel>, u64), Failure> {
    let dump: EnvDump = serde_json::from_value(doc).map_err(config_err)?;
    let model = DiscreteModel::from_dump(dump).map_err(config_err)?;
    let seed = flag.unwrap_or(model.config().seed);
    Ok((Arc::new(model), seed))
}

fn load_grid(common: &Common) -> Result<SweepGrid, Failure> {
    let text = fs::read_to_string(&common.config).map_err(|e| Failure::Config(format!("{}: {e}", common.config.display())))?;
    let mut grid = SweepGrid::parse_unvalidated(&text).map_err(config_err)?;
    if let Some(seed) = seed_source(common.seed, !grid.seeds.is_empty())? {
        grid.seeds = vec![seed];
    }
    grid.validate().map_err(config_err)?;
    Ok(grid)
}

/// Writes `bytes` to `dir/name`, or to stdout without `--out`.
fn emit(out: Option<&Path>, name: &str, bytes: &[u8]) -> Outcome {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
            let path = dir.join(name);
            fs::write(&path, bytes).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
        }
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(bytes).and_then(|_| stdout.flush()).map_err(runtime)
        }
    }
}

fn pretty(v: &Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

fn policy_of(agent: AgentArg) -> Policy {
    match agent {
        AgentArg::QLearning => Policy::QLearning,
        AgentArg::Sarsa => Policy::Sarsa,
        AgentArg::DoubleQ => Policy::DoubleQ,
        AgentArg::FixedAction => Policy::FixedAction,
        AgentArg::Random => Policy::Random,
    }
}

/// Which tabular outputs to write: CSV records, JSON summary or both.
fn table_formats(format: Option<Format>, out: Option<&Path>) -> Result<(bool, bool), Failure> {
    match format {
        Some(Format::Csv) => Ok((true, false)),
        Some(Format::Json) => Ok((false, true)),
        Some(other) => Err(Failure::Usage(format!("--format {other:?} is not valid here; use csv or json"))),
        // Both files into a directory; CSV alone on stdout.
        None => Ok((true, out.is_some())),
    }
}

fn write_tables(result: &SweepResult, format: Option<Format>, out: Option<&Path>) -> Outcome {
    let (csv, json) = table_formats(format, out)?;
    if csv {
        emit(out, "records.csv", result.csv_string().as_bytes())?;
    }
    if json {
        emit(out, "summary.json", &pretty(&result.summary_json()))?;
    }
    Ok(())
}

pub fn dispatch(command: Command) -> Outcome {
    match command {
        Command::Validate { common, out } => validate(&common, out.as_deref()),
        Command::Generate { common, out } => generate(&common, out.as_deref()),
        Command::Run {
            common,
            out,
            format,
            agent,
            steps,
            eval_interval,
            eval_episodes,
        } => {
            let protocol = Protocol {
                total_steps: steps,
                eval_interval,
                eval_episodes,
            };
            run(&common, out.as_deref(), format, policy_of(agent), &protocol)
        }
        Command::Sweep {
            common,
            out,
            format,
            parallel,
        } => sweep(&common, out.as_deref(), format, parallel),
        Command::Analyze { input, out, format } => analyze(&input, out.as_deref(), format),
        Command::Render {
            common,
            state,
            transformed,
            out,
            format,
        } => render(&common, state, transformed, out, format),
    }
}

fn validate(common: &Common, out: Option<&Path>) -> Outcome {
    let doc = read_json(&common.config)?;
    let bytes = if is_grid(&doc) {
        let grid = load_grid(common)?;
        pretty(&serde_json::to_value(&grid).expect("grid serializes"))
    } else if is_dump(&doc) {
        let (model, _) = load_dump(doc, None)?;
        model.config().to_canonical_json().into_bytes()
    } else {
        load_config(common)?.to_canonical_json().into_bytes()
    };
    emit(out, "config.json", &bytes)
}

fn generate(common: &Common, out: Option<&Path>) -> Outcome {
    let config = load_config(common)?;
    let bytes = if config.is_discrete() {
        let model = DiscreteModel::generate(&config).map_err(runtime)?;
        model.to_dump().to_json().into_bytes()
    } else {
        // A continuous environment is fully described by its config.
        config.to_canonical_json().into_bytes()
    };
    emit(out, "env.json", &bytes)
}

fn run(common: &Common, out: Option<&Path>, format: Option<Format>, policy: Policy, protocol: &Protocol) -> Outcome {
    table_formats(format, out)?;
    let doc = read_json(&common.config)?;
    let agent = AgentConfig::default();
    let (seed, output) = if is_dump(&doc) {
        let (model, seed) = load_dump(doc, common.seed)?;
        (seed, run_model(model, policy, &agent, seed, protocol).map_err(runtime)?)
    } else {
        let config = load_config(common)?;
        let seed = config.seed;
        (seed, run_single(&config, policy, &agent, seed, protocol).map_err(runtime)?)
    };
    write_tables(&SweepResult::from_single(seed, &output), format, out)
}

fn sweep(common: &Common, out: Option<&Path>, format: Option<Format>, parallel: Option<usize>) -> Outcome {
    table_formats(format, out)?;
    let grid = load_grid(common)?;
    let threads = parallel.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if threads == 0 {
        return Err(Failure::Usage("--parallel must be at least 1".into()));
    }
    let result = run_sweep(&grid, threads).map_err(runtime)?;
    write_tables(&result, format, out)?;
    if !result.failures.is_empty() {
        for f in &result.failures {
            eprintln!("run failed: point {} {:?} seed {}: {}", f.point, f.axes, f.seed, f.error);
        }
        return Err(Failure::Runtime(format!(
            "{} of {} runs failed; partial results were written",
            result.failures.len(),
            result.points.len() * grid.seeds.len()
        )));
    }
    Ok(())
}

fn analyze(input: &Path, out: Option<&Path>, format: Option<Format>) -> Outcome {
    let file = fs::File::open(input).map_err(|e| Failure::Config(format!("{}: {e}", input.display())))?;
    let analysis = analyze_csv(file).map_err(config_err)?;
    match format.unwrap_or(Format::Json) {
        Format::Json => emit(out, "analysis.json", &pretty(&serde_json::to_value(&analysis).expect("analysis serializes"))),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = analysis.axis_keys.clone();
            header.extend(["auc_mean", "auc_std", "final_mean", "n_seeds"].map(String::from));
            w.write_record(&header).map_err(runtime)?;
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            for p in &analysis.points {
                let mut row: Vec<String> = analysis
                    .axis_keys
                    .iter()
                    .map(|k| match &p.axes[k] {
                        Value::String(s) => s.clone(),
                        v => v.to_string(),
                    })
                    .collect();
                row.extend([opt(p.auc_mean), opt(p.auc_std), opt(p.final_mean), p.n_seeds.to_string()]);
                w.write_record(&row).map_err(runtime)?;
            }
            let bytes = w.into_inner().map_err(runtime)?;
            emit(out, "analysis.csv", &bytes)
        }
        other => Err(Failure::Usage(format!("--format {other:?} is not valid here; use csv or json"))),
    }
}

fn render(common: &Common, state: Option<usize>, transformed: bool, out: Option<PathBuf>, format: Option<Format>) -> Outcome {
    let format = match (format, out.as_ref().and_then(|p| p.extension()).and_then(|e| e.to_str())) {
        (Some(f @ (Format::Pgm | Format::Png)), _) => f,
        (Some(other), _) => return Err(Failure::Usage(format!("--format {other:?} is not valid for render; use pgm or png"))),
        (None, Some(ext)) if ext.eq_ignore_ascii_case("png") => Format::Png,
        (None, _) => Format::Pgm,
    };
    let config = load_config(common)?;
    let canvas = CanvasSpec::from_config(&config);
    let image = if config.is_discrete() {
        let state = state.ok_or_else(|| Failure::Usage("render of a discrete config needs --state".into()))?;
        if state >= config.state_space_size {
            return Err(Failure::Usage(format!(
                "--state {state} is out of range for {} states",
                config.state_space_size
            )));
        }
        let draw = if transformed {
            let mut stream = derive_stream(config.seed, "render", state as u64);
            sample_transform(&TransformParams::from_config(&config), state, canvas, &mut stream)
        } else {
            TransformDraw::identity()
        };
        render_discrete(state, &draw, canvas).map_err(runtime)?
    } else {
        if state.is_some() {
            return Err(Failure::Usage("--state applies to discrete configs only".into()));
        }
        let mut env = ContinuousEnv::from_config(&config).map_err(runtime)?;
        env.reset().map_err(runtime)?;
        let scene = Scene {
            agent: env.relevant_position(),
            target: &config.target_point,
            target_radius: config.target_radius,
            terminals: &[],
            state_max: config.state_space_max,
        };
        render_continuous(&scene, canvas).map_err(runtime)?
    };
    let bytes = match format {
        Format::Png => encode_png(&image)?,
        _ => image.to_pgm(),
    };
    match out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| Failure::Runtime(format!("{}: {e}", parent.display())))?;
            }
            fs::write(&path, bytes).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
        }
        None => emit(None, "", &bytes),
    }
}

fn encode_png(image: &ImageGrid) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut buf, image.width as u32, image.height as u32);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header().map_err(runtime)?;
        writer.write_image_data(&image.pixels).map_err(runtime)?;
    }
    Ok(buf)
}
