use std::fmt::Write as _;
use std::io;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use contractflow::checker::{check_plan, Classification, ViolationReport, DEFAULT_WITNESS_LIMIT};
use contractflow::config::{build_provider, parse_provider_flag, Config, CONFIG_FILE};
use contractflow::error::exit;
use contractflow::harness::reference::{self, Variant};
use contractflow::harness::{Session, SubjectDescriptor};
use contractflow::llm::{contracts_block, request_payload, PromptRequest, Provider, Purpose, StructuredPayload};
use contractflow::pipeline::{AutoApprove, FaultPoint, PipelineOptions, PipelineRun, Reviewer, TerminalStatus};
use contractflow::project::Project;
use contractflow::registry::{Actor, ContractStatus, Decision, Provenance};
use contractflow::review::TerminalReviewer;
use contractflow::server::{self, AppState};
use contractflow::store::{ProjectLock, Store};
use contractflow::trace::Task;
use contractflow::{Error, Result};

#[derive(Parser)]
#[command(name = "contractflow", version, about = "Contract-driven code generation loop")]
struct Cli {
    /// Project directory.
    #[arg(long, global = true, default_value = ".")]
    project: PathBuf,
    /// Overrides the test generation seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// `mock:<script-dir>` or `live`; defaults to the config file's provider.
    #[arg(long, global = true)]
    provider: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create a project skeleton.
    Init { dir: Option<PathBuf> },
    /// Split an intent into tasks.
    Decompose { prompt: String },
    #[command(subcommand)]
    Contracts(ContractsCommand),
    /// Generate code for a task from its approved contracts.
    Codegen { task: String },
    /// Build a test plan from a task's approved contracts.
    Testgen {
        task: String,
        /// Also write the plan and its cases as JSON.
        #[arg(long)]
        export: Option<PathBuf>,
    },
    /// Run a task's latest plan against a subject.
    Verify {
        task: String,
        /// Built-in reference subject or an external command. Defaults to the
        /// task's latest generated code.
        #[arg(long, value_enum)]
        variant: Option<VerifyVariant>,
        /// Command line for `--variant external`.
        #[arg(long, num_args = 1.., allow_hyphen_values = true)]
        command: Vec<String>,
    },
    /// Run the whole pipeline for an intent.
    Loop {
        prompt: String,
        /// Approve generated contracts without asking.
        #[arg(long)]
        auto_approve: bool,
        #[arg(long)]
        max_repair: Option<u32>,
    },
    /// Print a task's latest violation report.
    Report {
        task: String,
        #[arg(long)]
        json: bool,
    },
    /// Print the trace neighbourhood of any node id.
    Lineage { id: String },
    /// Check the traceability graph for defects.
    Check,
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
    },
}

#[derive(Subcommand)]
enum ContractsCommand {
    /// Ask the provider for a task's contracts.
    Generate { task: String },
    /// Review pending contracts interactively.
    Review {
        #[arg(long)]
        task: Option<String>,
    },
    /// Approve or reject one contract.
    Decide {
        contract: String,
        #[arg(value_enum)]
        decision: DecisionArg,
        #[arg(long)]
        note: Option<String>,
    },
    /// Replace a contract's text with a new revision.
    Revise {
        contract: String,
        text: String,
        #[arg(long)]
        note: Option<String>,
    },
    List {
        #[arg(long)]
        task: Option<String>,
        #[arg(long)]
        status: Option<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DecisionArg {
    Approve,
    Reject,
}

#[derive(Clone, Copy, ValueEnum)]
enum VerifyVariant {
    Buggy,
    Fixed,
    External,
}

struct Ctx {
    dir: PathBuf,
    config: Config,
    seed: Option<u64>,
    provider_flag: Option<String>,
}

impl Ctx {
    fn store(&self) -> Result<Store> {
        Ok(Store::open(&self.dir)?)
    }

    /// Opens the store under the project lock, for commands that write.
    fn store_locked(&self) -> Result<(Store, ProjectLock)> {
        // Fails with a clear message when there is no project at all.
        self.store()?;
        let lock = ProjectLock::acquire(&self.dir)?;
        let store = self.store()?;
        Ok((store, lock))
    }

    fn provider(&self) -> Result<Box<dyn Provider>> {
        let config = match &self.provider_flag {
            Some(flag) => parse_provider_flag(flag, self.config.provider.as_ref())?,
            None => self.config.provider.clone().ok_or_else(|| {
                Error::Usage(format!("no provider configured: pass --provider or add [provider] to {CONFIG_FILE}"))
            })?,
        };
        build_provider(&config, &self.dir)
    }

    fn options(&self) -> PipelineOptions {
        let mut options = PipelineOptions::from_config(&self.config);
        if let Some(seed) = self.seed {
            options.testgen.seed = seed;
        }
        options.fault_at = FaultPoint::from_env();
        options
    }
}

fn find_task(store: &Store, key: &str) -> Result<Task> {
    store.read(|p| p.find_task(key).cloned()).ok_or_else(|| Error::NotFound(format!("unknown task `{key}`")))
}

fn signature(task: &Task) -> String {
    task.unit.as_ref().and_then(|u| serde_json::to_string(u).ok()).unwrap_or_else(|| "not specified".into())
}

const CONFIG_TEMPLATE: &str = r#"# [provider]
# kind = "mock"
# script = "script"          # directory of NN-<purpose>.txt replies
#
# kind = "live"
# base_url = "https://api.example.com/v1"
# model = "model-name"
# api_key_env = "CONTRACTFLOW_API_KEY"

[pipeline]
max_repair_iterations = 2
call_deadline_ms = 5000

[testgen]
n_valid = 50
n_violating_per_clause = 5
seed = 7
"#;

fn init(dir: &Path) -> Result<()> {
    Project::init(dir)?;
    let config = dir.join(CONFIG_FILE);
    if !config.exists() {
        std::fs::write(&config, CONFIG_TEMPLATE)
            .map_err(|source| contractflow::project::ProjectError::Write { path: config, source })?;
    }
    println!("initialized project in {}", dir.display());
    Ok(())
}

fn decompose(ctx: &Ctx, prompt: &str) -> Result<()> {
    let provider = ctx.provider()?;
    let (store, _lock) = ctx.store_locked()?;
    let request = PromptRequest::new(Purpose::DecomposeIntent, Default::default()).var("intent", prompt);
    let StructuredPayload::TaskList(drafts) = request_payload(&request, provider.as_ref())?.0 else {
        return Err(Error::Internal("unexpected payload".into()));
    };
    let tasks = store.write(|p| {
        let intent = p.add_intent(prompt)?;
        let ids = drafts.into_iter().map(|d| p.add_task(&intent, d)).collect::<Result<Vec<_>, _>>()?;
        Ok::<_, Error>(ids.iter().filter_map(|id| p.task(id).cloned()).collect::<Vec<_>>())
    })?;
    for t in tasks {
        println!("{:<24} {}", t.key, t.title);
    }
    Ok(())
}

fn contracts(ctx: &Ctx, command: ContractsCommand) -> Result<()> {
    match command {
        ContractsCommand::Generate { task } => {
            let provider = ctx.provider()?;
            let (store, _lock) = ctx.store_locked()?;
            let task = find_task(&store, &task)?;
            let request = PromptRequest::new(Purpose::GenerateContracts, Default::default())
                .var("task_title", &task.title)
                .var("signature", signature(&task));
            let StructuredPayload::ClauseList(clauses) = request_payload(&request, provider.as_ref())?.0 else {
                return Err(Error::Internal("unexpected payload".into()));
            };
            let drafts: Vec<_> = clauses.iter().map(|c| c.draft()).collect();
            let ids = store.write(|p| p.propose(&task.task_id, &drafts, Provenance::LlmGenerated).map_err(Error::from))?;
            println!("{} contract(s) proposed for {}; review with `contractflow contracts review`", ids.len(), task.key);
            Ok(())
        }
        ContractsCommand::Review { task } => {
            let (store, _lock) = ctx.store_locked()?;
            let task_id = task.map(|t| find_task(&store, &t)).transpose()?.map(|t| t.task_id);
            if store.read(|p| p.pending_review(task_id.as_deref()).is_empty()) {
                println!("no contracts awaiting review");
                return Ok(());
            }
            let mut reviewer = TerminalReviewer::new(io::stdin().lock(), io::stdout());
            let tally = reviewer.review_pending(&store, task_id.as_deref())?;
            println!(
                "\napproved {}, rejected {}, revised {}, skipped {}",
                tally.approved, tally.rejected, tally.revised, tally.skipped
            );
            Ok(())
        }
        ContractsCommand::Decide { contract, decision, note } => {
            let (store, _lock) = ctx.store_locked()?;
            let decision = match decision {
                DecisionArg::Approve => Decision::Approve,
                DecisionArg::Reject => Decision::Reject,
            };
            let record = store.write(|p| p.review(&contract, decision, note, Actor::Human).map_err(Error::from))?;
            println!("{} is now {}", record.contract_id, record.status);
            Ok(())
        }
        ContractsCommand::Revise { contract, text, note } => {
            let (store, _lock) = ctx.store_locked()?;
            let record = store.write(|p| p.revise(&contract, &text, note).map_err(Error::from))?;
            println!("{} revises {} and awaits review", record.contract_id, contract);
            Ok(())
        }
        ContractsCommand::List { task, status } => {
            let store = ctx.store()?;
            let task_id = task.map(|t| find_task(&store, &t)).transpose()?.map(|t| t.task_id);
            let status = status
                .map(|s| ContractStatus::parse(&s).ok_or_else(|| Error::Usage(format!("unknown status `{s}`"))))
                .transpose()?;
            store.read(|p| {
                for c in &p.contracts {
                    if task_id.as_deref().is_some_and(|t| c.task_id != t) || status.is_some_and(|s| c.status != s) {
                        continue;
                    }
                    let superseded = if p.is_superseded(&c.contract_id) { " (superseded)" } else { "" };
                    println!(
                        "{}  {:<9} {} {}: {}{superseded}",
                        c.contract_id,
                        c.status.to_string(),
                        c.clause.kind,
                        c.clause.element,
                        c.clause.normalized_text()
                    );
                }
            });
            Ok(())
        }
    }
}

fn codegen(ctx: &Ctx, task: &str) -> Result<()> {
    let provider = ctx.provider()?;
    let (store, _lock) = ctx.store_locked()?;
    let task = find_task(&store, task)?;
    let clauses = store.read(|p| p.effective_contracts(&task.task_id))?;
    if clauses.is_empty() {
        eprintln!("warning: {} has no approved contracts; generating without them", task.key);
    }
    let block = if clauses.is_empty() { "(none)".to_string() } else { contracts_block(&clauses) };
    let request = PromptRequest::new(Purpose::GenerateCode, Default::default())
        .var("task_title", &task.title)
        .var("signature", signature(&task))
        .var("contracts", block);
    let StructuredPayload::CodeArtifact { subject, source } = request_payload(&request, provider.as_ref())?.0 else {
        return Err(Error::Internal("unexpected payload".into()));
    };
    let subject_id = subject.subject_id.clone();
    let iteration = store.read(|p| p.code_units.iter().filter(|c| c.task_id == task.task_id).count()) as u32;
    let id = store.write(|p| p.add_code_unit(&task.task_id, subject, source, iteration).map_err(Error::from))?;
    println!("{id}: subject {subject_id}");
    Ok(())
}

fn testgen(ctx: &Ctx, task: &str, export: Option<PathBuf>) -> Result<()> {
    let (store, _lock) = ctx.store_locked()?;
    let task = find_task(&store, task)?;
    let options = ctx.options();
    let plan_id = store.write(|p| p.build_plan(&task.task_id, &options.testgen).map_err(Error::from))?;
    let export_doc = store.read(|p| p.export_plan(&plan_id)).ok_or_else(|| Error::Internal("plan vanished".into()))?;
    let valid = export_doc.cases.iter().filter(|c| matches!(c.expectation, contractflow::testgen::Expectation::MustSatisfyPosts)).count();
    println!(
        "{plan_id}: {} case(s), {valid} valid, {} violating",
        export_doc.cases.len(),
        export_doc.cases.len() - valid
    );
    for s in &export_doc.plan.saturations {
        eprintln!("warning: {s}");
    }
    if let Some(path) = export {
        let text = serde_json::to_string_pretty(&export_doc).map_err(|e| Error::Internal(e.to_string()))?;
        std::fs::write(&path, text)
            .map_err(|source| contractflow::project::ProjectError::Write { path: path.clone(), source })?;
        println!("exported to {}", path.display());
    }
    Ok(())
}

fn verify(ctx: &Ctx, task: &str, variant: Option<VerifyVariant>, command: Vec<String>) -> Result<i32> {
    let (store, _lock) = ctx.store_locked()?;
    let task = find_task(&store, task)?;
    let latest_code = store.read(|p| p.latest_code_unit(&task.task_id).cloned());
    let (subject, code_unit_id): (SubjectDescriptor, Option<String>) = match variant {
        Some(VerifyVariant::Buggy) => (reference::reference_subject(Variant::Buggy), None),
        Some(VerifyVariant::Fixed) => (reference::reference_subject(Variant::Fixed), None),
        Some(VerifyVariant::External) => {
            if command.is_empty() {
                return Err(Error::Usage("--variant external needs --command <program> [args...]".into()));
            }
            let units = match (&task.unit, &latest_code) {
                (Some(unit), _) => vec![unit.clone()],
                (None, Some(code)) => code.subject.units.clone(),
                (None, None) => return Err(Error::Usage(format!("task `{}` has no unit signature", task.key))),
            };
            (SubjectDescriptor { subject_id: "external".into(), launch_command: command, units, variant_tag: None }, None)
        }
        None => {
            let code = latest_code.ok_or_else(|| {
                Error::Usage(format!("task `{}` has no generated code; run codegen or pass --variant", task.key))
            })?;
            (code.subject, Some(code.code_unit_id))
        }
    };
    let options = ctx.options();
    let plan = match store.read(|p| p.latest_plan(&task.task_id).cloned()) {
        Some(plan) => plan,
        None => {
            let id = store.write(|p| p.build_plan(&task.task_id, &options.testgen).map_err(Error::from))?;
            store.read(|p| p.plan(&id).cloned()).ok_or_else(|| Error::Internal("plan vanished".into()))?
        }
    };
    let (cases, clauses) = store.read(|p| {
        let cases: Vec<_> = p.plan_cases(&plan).into_iter().cloned().collect();
        let clauses = p.plan_clauses(&plan).map(|cs| cs.into_iter().cloned().collect::<Vec<_>>());
        (cases, clauses)
    });
    let clauses = clauses?;
    let mut session = Session::spawn(&subject, options.call_deadline)?;
    let mut report = check_plan(
        &plan,
        &cases.iter().collect::<Vec<_>>(),
        &clauses.iter().collect::<Vec<_>>(),
        &mut session,
        DEFAULT_WITNESS_LIMIT,
    );
    session.shutdown();
    report.code_unit_id = code_unit_id;
    store.write(|p| p.record_report(report.clone()).map_err(Error::from))?;
    print!("{}", store.read(|p| render_report(p, &report)));
    Ok(if report.failures() == 0 && !report.incomplete { exit::OK } else { exit::VIOLATIONS })
}

fn render_report(p: &Project, report: &ViolationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "report {} for {} on {}: {} case(s), {} passed, {} failed",
        report.report_id,
        p.task(&report.task_id).map_or(report.task_id.as_str(), |t| t.key.as_str()),
        report.subject_id,
        report.cases_run,
        report.passed,
        report.failures()
    );
    if let Some(reason) = &report.incomplete_reason {
        let _ = writeln!(out, "incomplete: {reason}");
    }
    if report.verdicts.is_empty() {
        return out;
    }
    for (class, n) in &report.summary {
        let _ = writeln!(out, "  {class:<24} {n}");
    }
    let _ = writeln!(out, "\n{:<24} {:<44} witnesses", "classification", "clause");
    for f in &report.clause_failures {
        let clause = p
            .contract(&f.clause_id)
            .map(|c| format!("{} {}: {}", c.clause.kind, c.clause.element, c.clause.normalized_text()))
            .unwrap_or_else(|| f.clause_id.clone());
        let witnesses: Vec<String> = f
            .witnesses
            .iter()
            .map(|w| w.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" "))
            .collect();
        let _ = writeln!(out, "{:<24} {:<44} {} ({}x)", f.classification.to_string(), clause, witnesses.join(" | "), f.count);
    }
    let unattributed = report.count(Classification::UnexpectedRejection);
    if unattributed > 0 {
        let _ = writeln!(out, "{:<24} {:<44} {unattributed}x", "unexpected_rejection", "(valid input rejected)");
    }
    out
}

fn print_run(run: &PipelineRun) {
    for ph in &run.phases {
        let task = ph.task_id.as_deref().map(|t| format!(" [{t}]")).unwrap_or_default();
        println!("{:<12} #{}{task} {:?}: {}", ph.phase.as_str(), ph.iteration, ph.outcome, ph.detail);
    }
    if let Some(f) = &run.failure {
        eprintln!("failed in {}: {}", f.phase, f.message);
    }
    println!(
        "run {} finished: {}",
        run.run_id,
        run.terminal_status.map_or_else(|| "unfinished".to_string(), |s| s.to_string())
    );
}

fn run_loop(ctx: &Ctx, prompt: &str, auto_approve: bool, max_repair: Option<u32>) -> Result<i32> {
    let provider = ctx.provider()?;
    let (store, _lock) = ctx.store_locked()?;
    let mut options = ctx.options();
    if let Some(n) = max_repair {
        options.max_repair_iterations = n;
    }
    let mut reviewer: Box<dyn Reviewer> = if auto_approve {
        Box::new(AutoApprove)
    } else {
        Box::new(TerminalReviewer::new(io::stdin().lock(), io::stdout()))
    };
    let run = contractflow::pipeline::run_pipeline(&store, provider.as_ref(), reviewer.as_mut(), prompt, options)?;
    print_run(&run);
    Ok(match (run.terminal_status, &run.failure) {
        (_, Some(f)) => f.class.exit_code(),
        (Some(TerminalStatus::Converged | TerminalStatus::DegradedNoContracts), _) => exit::OK,
        (Some(TerminalStatus::BudgetExhausted), _) => exit::VIOLATIONS,
        _ => exit::INTERNAL,
    })
}

fn report(ctx: &Ctx, task: &str, json: bool) -> Result<()> {
    let store = ctx.store()?;
    let task = find_task(&store, task)?;
    let report = store
        .read(|p| p.latest_report(&task.task_id).cloned())
        .ok_or_else(|| Error::NotFound(format!("no report for task `{}`", task.key)))?;
    if json {
        println!("{}", serde_json::to_string_pretty(&report).map_err(|e| Error::Internal(e.to_string()))?);
    } else {
        print!("{}", store.read(|p| render_report(p, &report)));
    }
    Ok(())
}

fn lineage(ctx: &Ctx, id: &str) -> Result<()> {
    let store = ctx.store()?;
    let lineage = store.read(|p| {
        let node = p.resolve_node(id).ok_or_else(|| Error::NotFound(format!("unknown node `{id}`")))?;
        p.lineage(&node).map_err(Error::from)
    })?;
    for link in &lineage.links {
        println!("{} -[{}]-> {}", link.from_ref, link.edge_kind, link.to_ref);
    }
    Ok(())
}

fn check(ctx: &Ctx) -> Result<i32> {
    let defects = ctx.store()?.read(|p| p.check_integrity());
    for d in &defects {
        println!("{:?}: {}", d.kind, d.message);
    }
    if defects.is_empty() {
        println!("no defects");
        Ok(exit::OK)
    } else {
        Ok(exit::PROJECT)
    }
}

fn serve(ctx: &Ctx, host: IpAddr, port: u16) -> Result<()> {
    let _lock = ProjectLock::acquire(&ctx.dir)?;
    let store = Arc::new(ctx.store()?);
    let provider: Option<Arc<dyn Provider>> = match ctx.provider() {
        Ok(p) => Some(Arc::from(p)),
        Err(e) => {
            eprintln!("note: pipeline runs disabled ({e})");
            None
        }
    };
    let state = AppState::new(store, provider, ctx.options());
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::Internal(e.to_string()))?;
    runtime
        .block_on(server::serve(state, SocketAddr::new(host, port)))
        .map_err(|e| Error::Usage(format!("cannot serve on {host}:{port}: {e}")))
}

fn run(cli: Cli) -> Result<i32> {
    if let Command::Init { dir } = &cli.command {
        init(dir.as_deref().unwrap_or(&cli.project))?;
        return Ok(exit::OK);
    }
    let config = Config::load(&cli.project)?;
    let ctx = Ctx { dir: cli.project, config, seed: cli.seed, provider_flag: cli.provider };
    match cli.command {
        Command::Init { .. } => unreachable!(),
        Command::Decompose { prompt } => decompose(&ctx, &prompt).map(|_| exit::OK),
        Command::Contracts(c) => contracts(&ctx, c).map(|_| exit::OK),
        Command::Codegen { task } => codegen(&ctx, &task).map(|_| exit::OK),
        Command::Testgen { task, export } => testgen(&ctx, &task, export).map(|_| exit::OK),
        Command::Verify { task, variant, command } => verify(&ctx, &task, variant, command),
        Command::Loop { prompt, auto_approve, max_repair } => run_loop(&ctx, &prompt, auto_approve, max_repair),
        Command::Report { task, json } => report(&ctx, &task, json).map(|_| exit::OK),
        Command::Lineage { id } => lineage(&ctx, &id).map(|_| exit::OK),
        Command::Check => check(&ctx),
        Command::Serve { port, host } => serve(&ctx, host, port).map(|_| exit::OK),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
