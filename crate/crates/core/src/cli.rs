//! Command-line pipeline: `generate`, `optimize`, `eval`, `render` and
//! `replay-cache ls`. Each command is also callable as a library function.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::decoder::{decode, DecodeReport, DecoderConfig};
use crate::dsl::{parse_program, serialize_program, Diagnostic, ProgramText, Severity};
use crate::error::{Error, Result};
use crate::eval::{judge_semantics, score_scene, score_suite, EvalConfig, SceneScore};
use crate::objectives::ObjectiveConfig;
use crate::optimizer::{optimize, place_group, stage_group, OptimizationTrace, OptimizerConfig};
use crate::render::{render_topdown, ImageFormat, RenderOptions};
use crate::scene::{
    load_inventory, load_room, AssetSpec, PlacedAsset, PoseRecord, Relation, Room, SceneProgram,
    SceneState, WallId,
};
use crate::vlm::{group_assets, propose_layout, Mode, ReplayCache, ReplayMode, VlmClient};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;

/// Overrides for every tunable; any section or field may be omitted.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub objective: ObjectiveConfig,
    pub optimizer: OptimizerConfig,
    pub decoder: DecoderConfig,
    pub eval: EvalConfig,
    pub render: RenderOptions,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        cfg.objective.validate()?;
        cfg.optimizer.validate()?;
        cfg.decoder.validate()?;
        cfg.render.validate()?;
        Ok(cfg)
    }
}

/// Layout file: final poses, degrees for rotation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub assets: Vec<LayoutAsset>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutAsset {
    pub id: String,
    pub pose: PoseRecord,
    /// Supporting asset, when this one rests on another.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub on_top_of: Option<String>,
}

impl Layout {
    pub fn from_state(state: &SceneState) -> Self {
        Self {
            assets: state
                .placed
                .iter()
                .map(|a| LayoutAsset {
                    id: a.id().to_string(),
                    pose: a.pose.into(),
                    on_top_of: a.support.clone(),
                })
                .collect(),
        }
    }

    /// Rebuilds a scene; dims come from the inventory.
    pub fn to_state(&self, room: Room, inventory: &[AssetSpec]) -> Result<SceneState> {
        let mut state = SceneState::new(room);
        for a in &self.assets {
            let spec = inventory.iter().find(|s| s.id == a.id).ok_or_else(|| {
                Error::Precondition(format!("layout asset `{}` is not in the inventory", a.id))
            })?;
            let mut placed = PlacedAsset::new(spec.clone(), a.pose.into());
            placed.support = a.on_top_of.clone();
            state.insert(placed)?;
        }
        Ok(state)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("layout serializes") + "\n"
    }
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, serde_json::to_string_pretty(value)? + "\n")
}

/// Instruction text, or the contents of a file when written `@path`.
pub fn read_instruction(arg: &str) -> Result<String> {
    match arg.strip_prefix('@') {
        Some(path) => std::fs::read_to_string(path)
            .map(|s| s.trim().to_string())
            .map_err(|e| Error::io(path, e)),
        None => Ok(arg.to_string()),
    }
}

/// Everything `generate` needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub room: PathBuf,
    pub inventory: PathBuf,
    pub instruction: String,
    pub config: RunConfig,
    pub mode: ReplayMode,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupReport {
    pub index: usize,
    pub assets: Vec<String>,
    pub placed: Vec<String>,
    pub failed: Vec<String>,
    pub diagnostics: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub model: String,
    pub mode: Mode,
    pub groups: Vec<GroupReport>,
    pub grouping_warnings: Vec<String>,
    pub failed_assets: Vec<String>,
    pub score: SceneScore,
    pub network_attempts: usize,
    pub exit_code: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct GroupTrace {
    group: usize,
    trace: OptimizationTrace,
}

fn diag_strings(diags: &[Diagnostic]) -> Vec<String> {
    diags.iter().map(ToString::to_string).collect()
}

/// Runs one group through propose → parse → decode → place.
#[allow(clippy::too_many_arguments)]
fn run_group(
    client: &VlmClient,
    state: &SceneState,
    specs: &[AssetSpec],
    inventory: &[AssetSpec],
    instruction: &str,
    cfg: &RunConfig,
    report: &mut GroupReport,
) -> Result<(SceneState, SceneProgram, DecodeReport, OptimizationTrace)> {
    let text = propose_layout(client, state, specs, instruction)?;
    let group_ids: BTreeSet<String> = specs.iter().map(|s| s.id.clone()).collect();
    let mut known = group_ids.clone();
    known.extend(state.ids().map(str::to_string));
    let (mut program, diags) = parse_program(&text, &known, &WallId::ALL);
    report.diagnostics.extend(diag_strings(&diags));
    program.poses.retain(|id, _| {
        let keep = group_ids.contains(id);
        if !keep {
            report
                .diagnostics
                .push(format!("ignored pose for already placed asset `{id}`"));
        }
        keep
    });
    report.failed = group_ids
        .iter()
        .filter(|id| !program.poses.contains_key(*id))
        .cloned()
        .collect();
    if program.poses.is_empty() {
        return Err(Error::Precondition(
            "response placed none of the group's assets".into(),
        ));
    }
    let (decoded, decode_report) = decode(&program, state, inventory, &cfg.decoder);
    let (next, trace) = place_group(state, &decoded, inventory, &cfg.objective, &cfg.optimizer)?;
    report.placed = program.poses.keys().cloned().collect();
    Ok((next, decoded, decode_report, trace))
}

/// Full pipeline. Writes `layout.json`, `scene.scene`, `decode_group_<k>.json`,
/// `trace.json`, `layout.svg` and `run_report.json` into `manifest.out`.
pub fn cmd_generate(manifest: &RunManifest) -> Result<RunReport> {
    let room = load_room(&manifest.room)?;
    let inventory = load_inventory(&manifest.inventory)?;
    let client = VlmClient::from_env(manifest.mode.clone())?;
    let cfg = &manifest.config;
    let out = &manifest.out;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let grouping = group_assets(&client, &inventory, &manifest.instruction)?;
    let mut state = SceneState::new(room);
    let mut relations: Vec<Relation> = Vec::new();
    let mut traces = Vec::new();
    let mut groups = Vec::new();
    for (k, ids) in grouping.groups.iter().enumerate() {
        let specs: Vec<AssetSpec> = ids
            .iter()
            .filter_map(|id| inventory.iter().find(|s| &s.id == id).cloned())
            .collect();
        let mut report = GroupReport {
            index: k,
            assets: ids.clone(),
            placed: Vec::new(),
            failed: Vec::new(),
            diagnostics: Vec::new(),
            error: None,
        };
        match run_group(
            &client,
            &state,
            &specs,
            &inventory,
            &manifest.instruction,
            cfg,
            &mut report,
        ) {
            Ok((next, decoded, decode_report, trace)) => {
                write_file(
                    &out.join(format!("decode_group_{k}.json")),
                    decode_report.to_json() + "\n",
                )?;
                state = next;
                relations.extend(decoded.relations);
                traces.push(GroupTrace { group: k, trace });
            }
            Err(e) => {
                log::error!("group {k} ({}) failed: {e}", ids.join(", "));
                report.error = Some(e.to_string());
                report.placed.clear();
                report.failed = ids.clone();
            }
        }
        groups.push(report);
    }

    let failed_assets: Vec<String> = groups
        .iter()
        .flat_map(|g| g.failed.iter().cloned())
        .collect();
    let exit_code = if failed_assets.is_empty() {
        EXIT_OK
    } else {
        EXIT_PARTIAL
    };
    let final_program = SceneProgram {
        poses: state
            .placed
            .iter()
            .map(|a| (a.id().to_string(), a.pose))
            .collect(),
        relations,
        group_label: None,
    };
    write_file(
        &out.join("layout.json"),
        Layout::from_state(&state).to_json(),
    )?;
    write_file(
        &out.join("scene.scene"),
        serialize_program(&final_program).source,
    )?;
    write_json(&out.join("trace.json"), &traces)?;
    write_file(
        &out.join("layout.svg"),
        render_topdown(
            &state,
            &RenderOptions {
                format: ImageFormat::Svg,
                ..cfg.render.clone()
            },
        )?,
    )?;
    let report = RunReport {
        model: client.model().to_string(),
        mode: manifest.mode.mode,
        groups,
        grouping_warnings: grouping.warnings,
        failed_assets,
        score: score_scene(&state, &cfg.eval),
        network_attempts: client.network_attempts(),
        exit_code,
    };
    write_json(&out.join("run_report.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizeReport {
    pub diagnostics: Vec<String>,
    pub decode: DecodeReport,
    pub unplaced: Vec<String>,
    pub score: SceneScore,
}

/// Decodes and optimizes a hand-written program without any VLM.
/// Writes `layout.json`, `trace.json`, `decode_report.json` and `layout.svg`.
pub fn cmd_optimize(
    program_path: &Path,
    room: Room,
    inventory: &[AssetSpec],
    cfg: &RunConfig,
    out: &Path,
    trace_path: Option<&Path>,
) -> Result<(SceneState, OptimizeReport)> {
    let source = std::fs::read_to_string(program_path).map_err(|e| Error::io(program_path, e))?;
    let known: BTreeSet<String> = inventory.iter().map(|a| a.id.clone()).collect();
    let (program, diags) = parse_program(
        &ProgramText {
            source,
            origin: crate::dsl::Origin::File,
        },
        &known,
        &WallId::ALL,
    );
    if let Some(d) = diags.iter().find(|d| d.severity == Severity::Error) {
        return Err(Error::Parse {
            path: program_path.to_path_buf(),
            line: d.line,
            column: d.column,
            message: d.message.clone(),
        });
    }
    let empty = SceneState::new(room);
    let (decoded, decode_report) = decode(&program, &empty, inventory, &cfg.decoder);
    let mut staged = empty;
    stage_group(&mut staged, &decoded, inventory)?;
    let (state, trace) = optimize(&staged, &decoded.relations, &cfg.objective, &cfg.optimizer)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_file(
        &out.join("layout.json"),
        Layout::from_state(&state).to_json(),
    )?;
    write_json(
        trace_path
            .map_or(out.join("trace.json"), Path::to_path_buf)
            .as_path(),
        &trace,
    )?;
    write_file(
        &out.join("decode_report.json"),
        decode_report.to_json() + "\n",
    )?;
    write_file(
        &out.join("layout.svg"),
        render_topdown(
            &state,
            &RenderOptions {
                format: ImageFormat::Svg,
                ..cfg.render.clone()
            },
        )?,
    )?;
    let report = OptimizeReport {
        diagnostics: diag_strings(&diags),
        decode: decode_report,
        unplaced: inventory
            .iter()
            .filter(|a| state.get(&a.id).is_none())
            .map(|a| a.id.clone())
            .collect(),
        score: score_scene(&state, &cfg.eval),
    };
    Ok((state, report))
}

/// Deterministic metrics for one layout, plus judged scores when `judge` is set.
pub fn cmd_eval(
    state: &SceneState,
    cfg: &EvalConfig,
    judge: Option<(&ReplayMode, &str)>,
) -> SceneScore {
    let mut score = score_scene(state, cfg);
    if let Some((mode, instruction)) = judge {
        match VlmClient::from_env(mode.clone()) {
            Ok(client) => score.judged = Some(judge_semantics(&client, state, instruction, cfg)),
            Err(e) => log::warn!("judge unavailable, reporting deterministic metrics only: {e}"),
        }
    }
    score
}

/// Scene from a layout JSON file or, for `.scene` files, from the program's
/// initial poses.
pub fn load_scene(path: &Path, room: Room, inventory: &[AssetSpec]) -> Result<SceneState> {
    if path.extension().is_some_and(|e| e == "scene") {
        let source = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let known: BTreeSet<String> = inventory.iter().map(|a| a.id.clone()).collect();
        let (program, diags) = parse_program(
            &ProgramText {
                source,
                origin: crate::dsl::Origin::File,
            },
            &known,
            &WallId::ALL,
        );
        for d in &diags {
            log::warn!("{}:{d}", path.display());
        }
        let mut state = SceneState::new(room);
        stage_group(&mut state, &program, inventory)?;
        for rel in &program.relations {
            if let Relation::OnTopOf { subject, target } = rel {
                if let Some(a) = state.get_mut(subject) {
                    a.support = Some(target.clone());
                }
            }
        }
        Ok(state)
    } else {
        Layout::load(path)?.to_state(room, inventory)
    }
}

pub fn cmd_render(state: &SceneState, opts: &RenderOptions, out: &Path) -> Result<()> {
    write_file(out, render_topdown(state, opts)?)
}

#[derive(Debug, Parser)]
#[command(
    name = "scenelayout",
    version,
    about = "Scene layout generation and optimization"
)]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct SceneFiles {
    /// Room JSON: {"width", "depth", "height"} in meters.
    #[arg(long)]
    pub room: PathBuf,
    /// Inventory JSON: list of assets.
    #[arg(long)]
    pub inventory: PathBuf,
    /// JSON overriding objective/optimizer/decoder/eval/render settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Full pipeline: group, propose, decode and place group by group.
    Generate {
        #[command(flatten)]
        files: SceneFiles,
        /// Layout instruction, or @file.
        #[arg(long)]
        instruction: String,
        #[arg(long, value_enum, default_value = "live")]
        mode: Mode,
        /// Replay cache directory (required for record and replay).
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the per-group optimization traces here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Decode and optimize a scene program file.
    Optimize {
        program: PathBuf,
        #[command(flatten)]
        files: SceneFiles,
        #[arg(long)]
        out: PathBuf,
        /// Where to write the optimization trace (default: <out>/trace.json).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Collision-free and in-boundary metrics for one or more layouts.
    Eval {
        #[arg(required = true)]
        layouts: Vec<PathBuf>,
        #[command(flatten)]
        files: SceneFiles,
        /// Add VLM-judged scores.
        #[arg(long)]
        judge: bool,
        #[arg(long, default_value = "")]
        instruction: String,
        #[arg(long, value_enum, default_value = "live")]
        mode: Mode,
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Report file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write a CSV summary (suites only).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Top-down image of a layout JSON or scene program.
    Render {
        input: PathBuf,
        #[command(flatten)]
        files: SceneFiles,
        /// Output file; a .png extension selects PNG.
        #[arg(long)]
        out: PathBuf,
    },
    /// Inspect a replay cache.
    ReplayCache {
        #[command(subcommand)]
        action: CacheAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum CacheAction {
    /// List recorded requests.
    Ls {
        #[arg(long)]
        cache: PathBuf,
    },
}

fn replay_mode(mode: Mode, cache: Option<PathBuf>) -> ReplayMode {
    ReplayMode {
        mode,
        cache_dir: cache,
    }
}

fn run_command(command: Command) -> Result<i32> {
    match command {
        Command::Generate {
            files,
            instruction,
            mode,
            cache,
            out,
            trace,
        } => {
            let manifest = RunManifest {
                config: RunConfig::load(files.config.as_deref())?,
                room: files.room,
                inventory: files.inventory,
                instruction: read_instruction(&instruction)?,
                mode: replay_mode(mode, cache),
                out,
            };
            let report = cmd_generate(&manifest)?;
            if let Some(path) = trace {
                let text = std::fs::read(manifest.out.join("trace.json"))
                    .map_err(|e| Error::io(&manifest.out, e))?;
                write_file(&path, text)?;
            }
            for g in &report.groups {
                for d in &g.diagnostics {
                    eprintln!("group {}: {d}", g.index);
                }
            }
            if !report.failed_assets.is_empty() {
                eprintln!("not placed: {}", report.failed_assets.join(", "));
            }
            println!(
                "placed {} group(s); collision-free: {}, in-boundary: {}",
                report.groups.iter().filter(|g| g.error.is_none()).count(),
                report.score.collision_free,
                report.score.in_boundary
            );
            Ok(report.exit_code)
        }
        Command::Optimize {
            program,
            files,
            out,
            trace,
        } => {
            let cfg = RunConfig::load(files.config.as_deref())?;
            let room = load_room(&files.room)?;
            let inventory = load_inventory(&files.inventory)?;
            let (_, report) =
                cmd_optimize(&program, room, &inventory, &cfg, &out, trace.as_deref())?;
            for d in &report.diagnostics {
                eprintln!("{}:{d}", program.display());
            }
            for v in &report.decode.dropped {
                eprintln!("dropped {} ({:?})", v.relation, v.verdict);
            }
            println!(
                "kept {} relation(s); collision-free: {}, in-boundary: {}",
                report.decode.retained.len(),
                report.score.collision_free,
                report.score.in_boundary
            );
            Ok(EXIT_OK)
        }
        Command::Eval {
            layouts,
            files,
            judge,
            instruction,
            mode,
            cache,
            out,
            csv,
        } => {
            let cfg = RunConfig::load(files.config.as_deref())?;
            let room = load_room(&files.room)?;
            let inventory = load_inventory(&files.inventory)?;
            let instruction = read_instruction(&instruction)?;
            let mode = replay_mode(mode, cache);
            let judge = judge.then_some((&mode, instruction.as_str()));
            let text = if layouts.len() == 1 {
                let state = load_scene(&layouts[0], room, &inventory)?;
                serde_json::to_string_pretty(&cmd_eval(&state, &cfg.eval, judge))?
            } else {
                let scenes = layouts
                    .iter()
                    .map(|p| Ok((p.display().to_string(), load_scene(p, room, &inventory)?)))
                    .collect::<Result<Vec<_>>>()?;
                let mut report = score_suite(&scenes, &cfg.eval)?;
                if let Some((mode, instruction)) = judge {
                    match VlmClient::from_env(mode.clone()) {
                        Ok(client) => {
                            for (row, (_, s)) in report.rows.iter_mut().zip(&scenes) {
                                row.score.judged =
                                    Some(judge_semantics(&client, s, instruction, &cfg.eval));
                            }
                        }
                        Err(e) => log::warn!(
                            "judge unavailable, reporting deterministic metrics only: {e}"
                        ),
                    }
                }
                if let Some(path) = csv {
                    write_file(&path, report.to_csv())?;
                }
                serde_json::to_string_pretty(&report)?
            };
            match out {
                Some(path) => write_file(&path, text + "\n")?,
                None => println!("{text}"),
            }
            Ok(EXIT_OK)
        }
        Command::Render { input, files, out } => {
            let cfg = RunConfig::load(files.config.as_deref())?;
            let room = load_room(&files.room)?;
            let inventory = load_inventory(&files.inventory)?;
            let state = load_scene(&input, room, &inventory)?;
            let format = if out
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("png"))
            {
                ImageFormat::Png
            } else {
                ImageFormat::Svg
            };
            cmd_render(
                &state,
                &RenderOptions {
                    format,
                    ..cfg.render
                },
                &out,
            )?;
            Ok(EXIT_OK)
        }
        Command::ReplayCache {
            action: CacheAction::Ls { cache },
        } => {
            for e in ReplayCache::new(cache).list()? {
                let model = e.request["model"].as_str().unwrap_or("?");
                let images = e.request["messages"].as_array().map_or(0, |m| {
                    m.iter()
                        .flat_map(|m| m["parts"].as_array().into_iter().flatten())
                        .filter(|p| p["type"] == "image")
                        .count()
                });
                let preview: String = e
                    .response
                    .chars()
                    .take(60)
                    .collect::<String>()
                    .replace('\n', " ");
                println!(
                    "{}  {}  {model}  {images} image(s)  {preview}",
                    &e.digest[..16.min(e.digest.len())],
                    e.timestamp
                );
            }
            Ok(EXIT_OK)
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .try_init();
    match run_command(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}
