//! Command-line front end. Exit codes: 0 success, 1 domain error, 2 usage error.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::Error;
use crate::grammar::{self, ParseMode};
use crate::planner::{AttachmentKind, InputManifest};
use crate::projector::{grad_check, random_config, toy_problem, train_loop, Reduction};
use crate::router::{validate_plan, RouteLimits, TaskKind};
use crate::service::{self, AttachmentInput, PlanRequest, Runtime, ServiceConfig};
use crate::synth::{load_bases, synthesize_corpus, Category, CombinerKind, HttpLlm, LlmClient, SynthConfig};

const GRAD_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "unison", version, about = "Signal-token planning, routing and data synthesis")]
pub struct Cli {
    /// Print machine-readable JSON on stdout, including errors.
    #[arg(long, global = true)]
    pub json: bool,
    /// Service config file (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Preset table, overriding the config and UNISON_PRESETS.
    #[arg(long, global = true)]
    pub presets: Option<PathBuf>,
    /// Template bank, overriding the config.
    #[arg(long, global = true)]
    pub bank: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a stage-one output string into prompt text and signal tokens.
    Parse {
        text: String,
        /// Drop malformed token spans and report them as warnings.
        #[arg(long)]
        lenient: bool,
    },
    /// Plan an instruction without dispatching it.
    Plan(RequestArgs),
    /// Check a stage-one output against an attachment list.
    Validate {
        output: String,
        #[arg(short, long = "attach", value_parser = parse_attachment)]
        attachments: Vec<AttachmentInput>,
    },
    /// Plan, validate and dispatch an instruction, then wait for the job.
    Route {
        #[command(flatten)]
        request: RequestArgs,
        /// Give up waiting after this many milliseconds.
        #[arg(long, default_value_t = 10_000)]
        timeout_ms: u64,
    },
    /// Write a synthesized planning corpus as JSONL.
    Synth {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        bases: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = CombinerArg::Rule)]
        combiner: CombinerArg,
        /// Task weights, e.g. `TextToImage=0.5,TextToVideo=0.5`.
        #[arg(long, value_parser = parse_task_mix)]
        task_mix: Option<BTreeMap<TaskKind, f64>>,
        /// Optional categories to sample from (comma separated).
        #[arg(long, value_delimiter = ',', value_parser = parse_category)]
        categories: Vec<Category>,
    },
    /// Re-plan every record of a corpus and report agreement with its labels.
    Audit {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        listen: Option<String>,
        #[arg(long)]
        projector_ckpt: Option<PathBuf>,
        /// Append-only JSONL job log.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Compare projector gradients with finite differences.
    GradCheck {
        #[arg(long, default_value_t = 20)]
        configs: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also run the toy regression loop (lr 1e-3, 500 steps).
        #[arg(long)]
        toy: bool,
    },
}

#[derive(Debug, Args)]
pub struct RequestArgs {
    pub instruction: String,
    /// Attachment as `kind` or `kind=uri`, kind one of image, video, mask. Repeatable.
    #[arg(short, long = "attach", value_parser = parse_attachment)]
    pub attachments: Vec<AttachmentInput>,
}

impl RequestArgs {
    fn request(&self) -> PlanRequest {
        PlanRequest { instruction: self.instruction.clone(), attachments: self.attachments.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CombinerArg {
    Rule,
    Llm,
}

fn parse_attachment(s: &str) -> Result<AttachmentInput, String> {
    let (kind, uri) = s.split_once('=').unwrap_or((s, ""));
    let kind = match kind.to_ascii_lowercase().as_str() {
        "image" => AttachmentKind::Image,
        "video" => AttachmentKind::Video,
        "mask" => AttachmentKind::Mask,
        other => return Err(format!("unknown attachment kind {other:?}")),
    };
    Ok(AttachmentInput { kind, uri: uri.to_string() })
}

fn parse_task_mix(s: &str) -> Result<BTreeMap<TaskKind, f64>, String> {
    s.split(',')
        .map(|pair| {
            let (task, w) = pair.split_once('=').ok_or_else(|| format!("expected TASK=WEIGHT, got {pair:?}"))?;
            let task = TaskKind::from_name(task.trim()).ok_or_else(|| format!("unknown task {task:?}"))?;
            let w: f64 = w.trim().parse().map_err(|e| format!("{w:?}: {e}"))?;
            Ok((task, w))
        })
        .collect()
}

fn parse_category(s: &str) -> Result<Category, String> {
    Category::ALL.into_iter().find(|c| c.name().eq_ignore_ascii_case(s.trim())).ok_or_else(|| format!("unknown category {s:?}"))
}

struct Out {
    json: bool,
}

impl Out {
    fn emit<T: Serialize>(&self, value: &T, human: impl FnOnce() -> String) {
        if self.json {
            println!("{}", serde_json::to_string_pretty(value).expect("output serializes"));
        } else {
            println!("{}", human());
        }
    }

    fn error(&self, err: &Error) {
        if self.json {
            println!("{}", serde_json::to_string_pretty(&err.to_json()).expect("error serializes"));
        } else {
            eprintln!("error[{}]: {err}", err.code());
        }
    }
}

fn pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("output serializes")
}

impl Cli {
    fn service_config(&self) -> Result<ServiceConfig, Error> {
        let mut config = match &self.config {
            Some(path) => ServiceConfig::load(path)?,
            None => ServiceConfig::default(),
        }
        .with_env_overrides();
        if let Some(p) = &self.presets {
            config.presets = Some(p.clone());
        }
        if let Some(b) = &self.bank {
            config.template_bank = Some(b.clone());
        }
        Ok(config)
    }
}

/// Runs the CLI on explicit arguments and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let out = Out { json: cli.json };
    match execute(&cli, &out) {
        Ok(code) => code,
        Err(err) => {
            out.error(&err);
            1
        }
    }
}

fn execute(cli: &Cli, out: &Out) -> Result<i32, Error> {
    match &cli.command {
        Command::Parse { text, lenient } => {
            let mode = if *lenient { ParseMode::Lenient } else { ParseMode::Strict };
            let (parsed, warnings) = grammar::parse_with(text, mode)?;
            #[derive(Serialize)]
            struct Parsed<'a> {
                #[serde(flatten)]
                parsed: &'a grammar::ParsedOutput,
                #[serde(skip_serializing_if = "<[_]>::is_empty")]
                warnings: &'a [grammar::ParseWarning],
            }
            let value = Parsed { parsed: &parsed, warnings: &warnings };
            out.emit(&value, || pretty(&value));
            Ok(0)
        }
        Command::Plan(args) => {
            let rt = Runtime::from_config(cli.service_config()?)?;
            let response = rt.plan(&args.request())?;
            out.emit(&response, || match (&response.plan, &response.answer) {
                (Some(plan), _) => format!("{}\n{} {}", plan.raw, plan.task_kind, pretty(&plan.job)),
                (None, Some(answer)) => format!("understanding: {answer}"),
                _ => String::new(),
            });
            Ok(0)
        }
        Command::Validate { output, attachments } => {
            let config = cli.service_config()?;
            let parsed = grammar::parse(output)?;
            let request = PlanRequest { instruction: String::new(), attachments: attachments.clone() };
            let manifest = InputManifest::new(
                parsed.prompt_text.clone(),
                request.attachments.iter().map(|a| (a.kind, a.uri.clone())),
            );
            let report = validate_plan(&parsed, &manifest, &RouteLimits { max_resolution: config.max_resolution });
            out.emit(&report, || {
                if report.is_empty() {
                    format!("ok: {}", report.task.map_or("-", |t| t.name()))
                } else {
                    report.violations.iter().map(|v| format!("{}: {}", v.code, v.message)).collect::<Vec<_>>().join("\n")
                }
            });
            Ok(if report.is_empty() { 0 } else { 1 })
        }
        Command::Route { request, timeout_ms } => {
            let rt = Runtime::from_config(cli.service_config()?)?;
            let mut response = rt.route(&request.request())?;
            if let Some(id) = response.job_id {
                response.status = Some(rt.wait(&id, Duration::from_millis(*timeout_ms))?);
            }
            out.emit(&response, || match (&response.job, &response.status) {
                (Some(job), Some(status)) => format!("{} {} -> {}\n{}", job.job_id, job.task, status.state(), pretty(job)),
                _ => format!("understanding: {}", response.answer.as_deref().unwrap_or_default()),
            });
            Ok(0)
        }
        Command::Synth { n, seed, bases, out: path, combiner, task_mix, categories } => {
            let rt = Runtime::from_config(cli.service_config()?)?;
            let bases = load_bases(bases.as_deref())?;
            let mut config = SynthConfig::new(*n, *seed);
            if let Some(mix) = task_mix {
                config.task_mix = mix.clone();
            }
            if !categories.is_empty() {
                config.categories = categories.iter().copied().collect::<BTreeSet<_>>();
            }
            let client;
            let llm: Option<&dyn LlmClient> = match combiner {
                CombinerArg::Rule => None,
                CombinerArg::Llm => {
                    config.combiner = CombinerKind::Llm;
                    client = HttpLlm::from_env()?;
                    Some(&client)
                }
            };
            let summary = synthesize_corpus(&config, rt.bank(), &bases, rt.presets(), llm, path)?;
            out.emit(&summary, || format!("wrote {} records to {} (sha256 {})", summary.n, path.display(), summary.sha256));
            Ok(0)
        }
        Command::Audit { corpus } => {
            let rt = Runtime::from_config(cli.service_config()?)?;
            let report = crate::synth::audit_corpus(corpus, rt.planner())?;
            out.emit(&report, || {
                format!(
                    "records {}  parse rate {:.4}  planner agreement {:.4}",
                    report.records, report.parse_rate, report.planner_agreement_rate
                )
            });
            Ok(0)
        }
        Command::Serve { listen, projector_ckpt, log } => {
            let mut config = cli.service_config()?;
            if let Some(l) = listen {
                config.listen = l.clone();
            }
            if let Some(p) = projector_ckpt {
                config.projector_ckpt = Some(p.clone());
            }
            if let Some(l) = log {
                config.log = Some(l.clone());
            }
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(service::serve(config))?;
            Ok(0)
        }
        Command::GradCheck { configs, seed, toy } => {
            #[derive(Serialize)]
            struct Summary {
                reports: Vec<crate::projector::GradCheckReport>,
                max_rel_error: f64,
                tolerance: f64,
                passed: bool,
                #[serde(skip_serializing_if = "Option::is_none")]
                toy_loss: Option<(f64, f64)>,
            }
            let reports = (0..*configs)
                .map(|i| {
                    let cfg = random_config(seed.wrapping_add(i));
                    grad_check(&cfg, 1 + (i as usize % 6))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let max = reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
            let toy_loss = if *toy {
                let (params, batch) = toy_problem();
                let (_, curve) = train_loop(params, &batch, 1e-3, 500, Reduction::Sum)?;
                Some((curve[0], curve[curve.len() - 1]))
            } else {
                None
            };
            let passed = max < GRAD_TOLERANCE && toy_loss.is_none_or(|(a, b)| b < 0.1 * a);
            let summary = Summary { reports, max_rel_error: max, tolerance: GRAD_TOLERANCE, passed, toy_loss };
            out.emit(&summary, || {
                let mut s = format!(
                    "{} configs, max relative error {:.3e} (tolerance {:.0e})",
                    summary.reports.len(),
                    max,
                    GRAD_TOLERANCE
                );
                if let Some((a, b)) = toy_loss {
                    s.push_str(&format!("\ntoy regression loss {a:.6} -> {b:.6} ({:.1}%)", 100.0 * b / a));
                }
                s.push_str(if passed { "\nok" } else { "\nFAILED" });
                s
            });
            Ok(if passed { 0 } else { 1 })
        }
    }
}
