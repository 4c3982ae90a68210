use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use riskfield::export::{write_atomic, write_heatmap, PgmFormat};
use riskfield::metrics::{evaluate, ActorScoreSeries, MetricsReport};
use riskfield::planner::plan;
use riskfield::{load_scenario, EgoState, EngineConfig, RiskEngine, ScenarioSequence};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "riskfield", version, about = "Render, evaluate and plan with composed driving risk fields")]
struct Cli {
    /// Engine configuration (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for the planner's sampler.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write composed-field heatmaps for one frame or a whole scenario.
    Render(RenderArgs),
    /// Score scenarios and write a metrics report.
    Evaluate(EvaluateArgs),
    /// Plan an ego trajectory on one frame's field.
    Plan(PlanArgs),
    /// Evaluate every combination of a grid of config values.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct RenderArgs {
    scenario: PathBuf,
    /// Frame index or `all`.
    #[arg(long, default_value = "all")]
    frame: String,
    /// Also write the MAF, VRF and RPF grids.
    #[arg(long)]
    components: bool,
    /// Also write lossless CSV grids.
    #[arg(long)]
    csv: bool,
    /// Write plain-text (P2) instead of binary PGM.
    #[arg(long)]
    ascii: bool,
    #[arg(long)]
    ablation: Option<String>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Scenario files or glob patterns.
    #[arg(required = true)]
    scenarios: Vec<String>,
    /// Ablation preset: full, no-velvar, no-vrf or no-rpf.
    #[arg(long)]
    ablation: Option<String>,
}

#[derive(Args)]
struct PlanArgs {
    scenario: PathBuf,
    #[arg(long, default_value_t = 0)]
    frame: usize,
    #[arg(long)]
    ablation: Option<String>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(required = true)]
    scenarios: Vec<String>,
    /// `dotted.key=v1,v2,...`; values are TOML literals. Repeat for more axes.
    #[arg(long = "param", required = true)]
    params: Vec<String>,
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    args: Vec<String>,
    config_hash: String,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    seed: u64,
    threads: usize,
    timings: Vec<Timing>,
}

#[derive(Serialize)]
struct Timing {
    phase: String,
    seconds: f64,
}

struct Run {
    manifest: RunManifest,
    clock: Instant,
}

impl Run {
    fn new(command: &str, cli: &Cli, config: &EngineConfig) -> Self {
        Self {
            manifest: RunManifest {
                command: command.into(),
                args: std::env::args().skip(1).collect(),
                config_hash: config.hash(),
                inputs: cli.config.iter().cloned().collect(),
                outputs: Vec::new(),
                seed: cli.seed,
                threads: rayon::current_num_threads(),
                timings: Vec::new(),
            },
            clock: Instant::now(),
        }
    }

    fn lap(&mut self, phase: &str) {
        let seconds = self.clock.elapsed().as_secs_f64();
        self.manifest.timings.push(Timing { phase: phase.into(), seconds });
        self.clock = Instant::now();
    }

    fn finish(self, dir: &Path, name: &str) -> Result<PathBuf> {
        let path = dir.join(format!("{name}.manifest.json"));
        let text = serde_json::to_string_pretty(&self.manifest)?;
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}

fn base_config(cli: &Cli, ablation: Option<&str>) -> Result<EngineConfig> {
    let config = match &cli.config {
        Some(path) => EngineConfig::load(path)?,
        None => EngineConfig::default(),
    };
    Ok(match ablation {
        Some(preset) => config.with_preset(preset)?,
        None => config,
    })
}

fn stem(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario").to_string()
}

fn expand(patterns: &[String]) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for pattern in patterns {
        for entry in glob::glob(pattern).with_context(|| format!("bad pattern `{pattern}`"))? {
            paths.push(entry?);
        }
    }
    paths.sort();
    paths.dedup();
    if paths.is_empty() {
        bail!("no scenario matches {}", patterns.join(" "));
    }
    Ok(paths)
}

fn render(cli: &Cli, args: &RenderArgs) -> Result<()> {
    let config = base_config(cli, args.ablation.as_deref())?;
    let mut run = Run::new("render", cli, &config);
    run.manifest.inputs.push(args.scenario.clone());
    let seq = load_scenario(&args.scenario)?;
    let engine = RiskEngine::new(config, seq.map.clone())?;
    let frames: Vec<usize> = if args.frame == "all" {
        (0..seq.frames.len()).collect()
    } else {
        let i: usize = args.frame.parse().with_context(|| format!("bad frame `{}`", args.frame))?;
        if i >= seq.frames.len() {
            bail!("frame {i} out of range ({} frames)", seq.frames.len());
        }
        vec![i]
    };
    run.lap("load");
    let format = if args.ascii { PgmFormat::P2 } else { PgmFormat::P5 };
    let name = stem(&args.scenario);
    let written: Vec<Vec<PathBuf>> = frames
        .par_iter()
        .map(|&i| -> Result<Vec<PathBuf>> {
            let c = engine.compose_frame(i, &seq.frames[i])?;
            let base = format!("{name}_f{i:04}");
            let mut out = write_heatmap(&c.total, &cli.out, &base, format, args.csv)?;
            if args.components {
                for (grid, tag) in [(&c.maf, "maf"), (&c.vrf, "vrf"), (&*c.rpf, "rpf")] {
                    out.extend(write_heatmap(grid, &cli.out, &format!("{base}_{tag}"), format, args.csv)?);
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    run.manifest.outputs = written.concat();
    run.lap("render");
    let manifest = run.finish(&cli.out, &format!("render_{name}"))?;
    println!("rendered {} frame(s); manifest {}", frames.len(), manifest.display());
    Ok(())
}

fn score_all(config: &EngineConfig, paths: &[PathBuf]) -> Result<Vec<ActorScoreSeries>> {
    paths
        .par_iter()
        .map(|p| {
            let seq: ScenarioSequence = load_scenario(p)?;
            let engine = RiskEngine::new(config.clone(), seq.map.clone())?;
            let mut series = engine.score_sequence(&seq)?;
            series.name = stem(p);
            Ok(series)
        })
        .collect()
}

fn report_for(config: &EngineConfig, series: &[ActorScoreSeries]) -> MetricsReport {
    let mut report = evaluate(series, &config.metrics);
    report.config_hash = Some(config.hash());
    report
}

fn evaluate_cmd(cli: &Cli, args: &EvaluateArgs) -> Result<()> {
    let config = base_config(cli, args.ablation.as_deref())?;
    let mut run = Run::new("evaluate", cli, &config);
    let paths = expand(&args.scenarios)?;
    run.manifest.inputs.extend(paths.iter().cloned());
    let series = score_all(&config, &paths)?;
    run.lap("score");
    let report = report_for(&config, &series);
    let tag = args.ablation.as_deref().unwrap_or("config");
    let path = cli.out.join(format!("report_{tag}.json"));
    write_atomic(&path, report.to_json().as_bytes())?;
    run.manifest.outputs.push(path.clone());
    run.lap("metrics");
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    run.finish(&cli.out, &format!("evaluate_{tag}"))?;
    println!(
        "OT-F1 {:.4}  1s {:.4}  2s {:.4}  3s {:.4}  PIC {:.4}  wMOTA {}  tau {:.4}  -> {}",
        report.ot_f1,
        report.ot_f1_1s,
        report.ot_f1_2s,
        report.ot_f1_3s,
        report.pic,
        report.wmota.map_or("n/a".into(), |w| format!("{w:.4}")),
        report.best_threshold,
        path.display()
    );
    Ok(())
}

fn plan_cmd(cli: &Cli, args: &PlanArgs) -> Result<()> {
    let config = base_config(cli, args.ablation.as_deref())?;
    let mut run = Run::new("plan", cli, &config);
    run.manifest.inputs.push(args.scenario.clone());
    let seq = load_scenario(&args.scenario)?;
    let Some(frame) = seq.frames.get(args.frame) else {
        bail!("frame {} out of range ({} frames)", args.frame, seq.frames.len());
    };
    let engine = RiskEngine::new(config.clone(), seq.map.clone())?;
    let composed = engine.compose_frame(args.frame, frame)?;
    run.lap("compose");
    let ego = &frame.ego;
    let start = EgoState { x: ego.position.x, y: ego.position.y, heading: ego.heading, speed: ego.speed };
    let off_grid = config
        .planner
        .footprint
        .off_grid_penalty
        .unwrap_or(config.rpf.lambda_off * config.global_scale);
    let result = plan(start, &composed.total, &config.planner, off_grid, cli.seed)?;
    run.lap("plan");
    let path = cli.out.join(format!("{}_plan_f{:04}.json", stem(&args.scenario), args.frame));
    let text = serde_json::to_string_pretty(&result.export(config.planner.weights.dt))?;
    write_atomic(&path, text.as_bytes())?;
    run.manifest.outputs.push(path.clone());
    run.finish(&cli.out, &format!("plan_{}", stem(&args.scenario)))?;
    println!("cost {:.4} -> {}", result.cost, path.display());
    Ok(())
}

fn parse_axis(spec: &str) -> Result<(String, Vec<toml::Value>)> {
    let (key, values) = spec.split_once('=').with_context(|| format!("expected key=v1,v2 in `{spec}`"))?;
    let values = values
        .split(',')
        .map(|v| {
            let doc: toml::Table = toml::from_str(&format!("v = {v}")).with_context(|| format!("bad value `{v}` for {key}"))?;
            Ok(doc["v"].clone())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((key.trim().to_string(), values))
}

fn set_path(root: &mut toml::Value, key: &str, value: toml::Value) -> Result<()> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        node = node.get_mut(*part).with_context(|| format!("unknown config key `{key}`"))?;
    }
    let last = parts[parts.len() - 1];
    let table = node.as_table_mut().with_context(|| format!("unknown config key `{key}`"))?;
    if !table.contains_key(last) {
        bail!("unknown config key `{key}`");
    }
    table.insert(last.to_string(), value);
    Ok(())
}

#[derive(Serialize)]
struct SweepEntry {
    index: usize,
    settings: Vec<(String, toml::Value)>,
    config_hash: String,
    report: PathBuf,
    ot_f1: f64,
    pic: f64,
    wmota: Option<f64>,
}

fn sweep_cmd(cli: &Cli, args: &SweepArgs) -> Result<()> {
    let base = base_config(cli, None)?;
    let mut run = Run::new("sweep", cli, &base);
    let paths = expand(&args.scenarios)?;
    run.manifest.inputs.extend(paths.iter().cloned());
    let axes = args.params.iter().map(|p| parse_axis(p)).collect::<Result<Vec<_>>>()?;
    let mut combos: Vec<Vec<(String, toml::Value)>> = vec![Vec::new()];
    for (key, values) in &axes {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                values.iter().map(move |v| {
                    let mut next = c.clone();
                    next.push((key.clone(), v.clone()));
                    next
                })
            })
            .collect();
    }
    let mut entries = Vec::with_capacity(combos.len());
    for (index, settings) in combos.into_iter().enumerate() {
        let mut value = toml::Value::try_from(&base)?;
        for (key, v) in &settings {
            set_path(&mut value, key, v.clone())?;
        }
        let config = EngineConfig::parse(&toml::to_string(&value)?)?;
        let report = report_for(&config, &score_all(&config, &paths)?);
        let path = cli.out.join(format!("sweep_{index:03}.json"));
        write_atomic(&path, report.to_json().as_bytes())?;
        run.manifest.outputs.push(path.clone());
        let label: Vec<String> = settings.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!("[{index}] {} OT-F1 {:.4} PIC {:.4}", label.join(" "), report.ot_f1, report.pic);
        entries.push(SweepEntry {
            index,
            settings,
            config_hash: config.hash(),
            report: path,
            ot_f1: report.ot_f1,
            pic: report.pic,
            wmota: report.wmota,
        });
    }
    run.lap("sweep");
    let index = cli.out.join("sweep_index.json");
    write_atomic(&index, serde_json::to_string_pretty(&entries)?.as_bytes())?;
    run.manifest.outputs.push(index);
    run.finish(&cli.out, "sweep")?;
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global()?;
    }
    std::fs::create_dir_all(&cli.out).with_context(|| format!("cannot create {}", cli.out.display()))?;
    match &cli.command {
        Command::Render(a) => render(cli, a),
        Command::Evaluate(a) => evaluate_cmd(cli, a),
        Command::Plan(a) => plan_cmd(cli, a),
        Command::Sweep(a) => sweep_cmd(cli, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
