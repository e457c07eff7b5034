//! The closed loop: decompose, generate and review contracts, generate
//! code, derive tests, verify, and repair on failure.

use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::checker::{check_plan, summarize_for_repair, DEFAULT_BRIEF_BUDGET, DEFAULT_WITNESS_LIMIT};
use crate::error::{Error, ErrorClass};
use crate::harness::{Session, SubjectDescriptor, UnitSignature};
use crate::ids::new_id;
use crate::lang::ContractClause;
use crate::llm::{contracts_block, request_payload, PromptRequest, Provider, Purpose, StructuredPayload};
use crate::registry::{Actor, ContractStatus, Decision, Provenance};
use crate::store::Store;
use crate::testgen::TestgenConfig;
use crate::trace::Task;

/// Setting this to a phase name (optionally `phase:N` for its N-th
/// completion) makes the process abort right after that phase is persisted.
pub const FAULT_ENV: &str = "CONTRACTFLOW_FAULT_AT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Decompose,
    ContractGen,
    ReviewWait,
    Codegen,
    Testgen,
    Verify,
    Repair,
}

impl Phase {
    pub const ALL: [Phase; 7] = [
        Phase::Decompose,
        Phase::ContractGen,
        Phase::ReviewWait,
        Phase::Codegen,
        Phase::Testgen,
        Phase::Verify,
        Phase::Repair,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Decompose => "decompose",
            Phase::ContractGen => "contract_gen",
            Phase::ReviewWait => "review_wait",
            Phase::Codegen => "codegen",
            Phase::Testgen => "testgen",
            Phase::Verify => "verify",
            Phase::Repair => "repair",
        }
    }

    pub fn parse(s: &str) -> Option<Phase> {
        Phase::ALL.into_iter().find(|p| p.as_str() == s)
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseOutcome {
    Running,
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub phase: Phase,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<String>,
    /// 0 for the first verify; repair N and the verify after it carry N.
    pub iteration: u32,
    pub started: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished: Option<DateTime<Utc>>,
    pub outcome: PhaseOutcome,
    #[serde(default)]
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalStatus {
    Converged,
    BudgetExhausted,
    Aborted,
    DegradedNoContracts,
}

impl fmt::Display for TerminalStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TerminalStatus::Converged => "converged",
            TerminalStatus::BudgetExhausted => "budget_exhausted",
            TerminalStatus::Aborted => "aborted",
            TerminalStatus::DegradedNoContracts => "degraded_no_contracts",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunState {
    Running,
    Finished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseFailure {
    pub phase: Phase,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<String>,
    pub class: ErrorClass,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task_id: String,
    pub status: TerminalStatus,
    pub repairs: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRun {
    pub run_id: String,
    pub intent_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent_id: Option<String>,
    pub state: RunState,
    pub phases: Vec<PhaseRecord>,
    #[serde(default)]
    pub tasks: Vec<TaskResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal_status: Option<TerminalStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<PhaseFailure>,
    pub started_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<DateTime<Utc>>,
}

impl PipelineRun {
    pub fn count(&self, phase: Phase) -> usize {
        self.phases.iter().filter(|p| p.phase == phase).count()
    }

    /// The latest phase, for progress display.
    pub fn current_phase(&self) -> Option<&PhaseRecord> {
        self.phases.last()
    }
}

impl crate::project::Project {
    pub fn run(&self, run_id: &str) -> Option<&PipelineRun> {
        self.runs.iter().find(|r| r.run_id == run_id)
    }

    fn run_mut(&mut self, run_id: &str) -> Result<&mut PipelineRun, Error> {
        self.runs
            .iter_mut()
            .find(|r| r.run_id == run_id)
            .ok_or_else(|| Error::NotFound(format!("unknown run `{run_id}`")))
    }
}

/// Decides on every contract of a task still awaiting review. Returns once
/// none remain.
pub trait Reviewer {
    fn await_review(&mut self, store: &Store, task_id: &str) -> Result<(), Error>;
}

impl<F: FnMut(&Store, &str) -> Result<(), Error>> Reviewer for F {
    fn await_review(&mut self, store: &Store, task_id: &str) -> Result<(), Error> {
        self(store, task_id)
    }
}

/// Approves everything pending; the records say so.
pub struct AutoApprove;

impl Reviewer for AutoApprove {
    fn await_review(&mut self, store: &Store, task_id: &str) -> Result<(), Error> {
        store.write(|p| {
            let pending: Vec<String> =
                p.pending_review(Some(task_id)).iter().map(|c| c.contract_id.clone()).collect();
            for id in pending {
                p.review(&id, Decision::Approve, Some("auto-approved".into()), Actor::AutoApprove)?;
            }
            Ok::<_, Error>(())
        })
    }
}

/// Waits for someone else (the HTTP service) to review, by polling the
/// shared store.
pub struct StoreWaiting {
    pub poll: Duration,
    pub cancel: Arc<AtomicBool>,
}

impl StoreWaiting {
    pub fn new(cancel: Arc<AtomicBool>) -> Self {
        StoreWaiting { poll: Duration::from_millis(200), cancel }
    }
}

impl Reviewer for StoreWaiting {
    fn await_review(&mut self, store: &Store, task_id: &str) -> Result<(), Error> {
        while !store.read(|p| p.pending_review(Some(task_id)).is_empty()) {
            if self.cancel.load(Ordering::Relaxed) {
                return Err(Error::Conflict("run cancelled while waiting for review".into()));
            }
            std::thread::sleep(self.poll);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaultPoint {
    pub phase: Phase,
    /// 1-based completion count of `phase` to stop after.
    pub occurrence: usize,
}

impl FaultPoint {
    pub fn parse(s: &str) -> Option<FaultPoint> {
        let (name, n) = match s.split_once(':') {
            Some((name, n)) => (name, n.parse().ok().filter(|n| *n > 0)?),
            None => (s, 1),
        };
        Some(FaultPoint { phase: Phase::parse(name.trim())?, occurrence: n })
    }

    pub fn from_env() -> Option<FaultPoint> {
        std::env::var(FAULT_ENV).ok().and_then(|v| FaultPoint::parse(&v))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    /// 0 disables repair.
    pub max_repair_iterations: u32,
    pub testgen: TestgenConfig,
    pub call_deadline: Duration,
    pub witness_limit: usize,
    pub brief_budget: usize,
    pub fault_at: Option<FaultPoint>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            max_repair_iterations: 2,
            testgen: TestgenConfig::default(),
            call_deadline: crate::harness::DEFAULT_CALL_DEADLINE,
            witness_limit: DEFAULT_WITNESS_LIMIT,
            brief_budget: DEFAULT_BRIEF_BUDGET,
            fault_at: None,
        }
    }
}

impl PipelineOptions {
    pub fn from_config(config: &crate::config::Config) -> Self {
        PipelineOptions {
            max_repair_iterations: config.pipeline.max_repair_iterations,
            testgen: config.testgen.clone(),
            call_deadline: config.call_deadline(),
            ..PipelineOptions::default()
        }
    }
}

struct Failed {
    phase: Phase,
    task_id: Option<String>,
    error: Error,
}

pub struct Pipeline<'a> {
    store: &'a Store,
    provider: &'a dyn Provider,
    options: PipelineOptions,
}

/// Starts and runs a pipeline to the end.
pub fn run_pipeline(
    store: &Store,
    provider: &dyn Provider,
    reviewer: &mut dyn Reviewer,
    intent_text: &str,
    options: PipelineOptions,
) -> Result<PipelineRun, Error> {
    let pipeline = Pipeline::new(store, provider, options);
    let run_id = pipeline.begin(intent_text)?;
    pipeline.execute(&run_id, reviewer)
}

fn signature_text(unit: Option<&UnitSignature>) -> String {
    match unit {
        Some(unit) => serde_json::to_string(unit).unwrap_or_default(),
        None => "not specified".into(),
    }
}

fn approved_block(clauses: &[ContractClause]) -> String {
    if clauses.is_empty() {
        "(none)".into()
    } else {
        contracts_block(clauses)
    }
}

impl<'a> Pipeline<'a> {
    pub fn new(store: &'a Store, provider: &'a dyn Provider, options: PipelineOptions) -> Self {
        Pipeline { store, provider, options }
    }

    /// Persists a new run in the `running` state.
    pub fn begin(&self, intent_text: &str) -> Result<String, Error> {
        if intent_text.trim().is_empty() {
            return Err(Error::Usage("the intent text is empty".into()));
        }
        let run = PipelineRun {
            run_id: new_id("run"),
            intent_text: intent_text.to_string(),
            intent_id: None,
            state: RunState::Running,
            phases: Vec::new(),
            tasks: Vec::new(),
            terminal_status: None,
            failure: None,
            started_at: Utc::now(),
            finished_at: None,
        };
        let run_id = run.run_id.clone();
        self.store.write(|p| {
            p.runs.push(run);
            Ok::<_, Error>(())
        })?;
        Ok(run_id)
    }

    /// Runs a begun run to its terminal status. Module failures end the run
    /// as `aborted` with the failing phase recorded; `Err` is returned only
    /// when the run itself cannot be persisted.
    pub fn execute(&self, run_id: &str, reviewer: &mut dyn Reviewer) -> Result<PipelineRun, Error> {
        let intent_text = self
            .store
            .read(|p| p.run(run_id).map(|r| r.intent_text.clone()))
            .ok_or_else(|| Error::NotFound(format!("unknown run `{run_id}`")))?;
        let outcome = self.drive(run_id, &intent_text, reviewer);
        self.store.write(|p| {
            let run = p.run_mut(run_id)?;
            run.state = RunState::Finished;
            run.finished_at = Some(Utc::now());
            match outcome {
                Ok(()) => {
                    let statuses: Vec<TerminalStatus> = run.tasks.iter().map(|t| t.status).collect();
                    run.terminal_status = Some(
                        [TerminalStatus::Aborted, TerminalStatus::BudgetExhausted, TerminalStatus::DegradedNoContracts]
                            .into_iter()
                            .find(|s| statuses.contains(s))
                            .unwrap_or(TerminalStatus::Converged),
                    );
                }
                Err(Failed { phase, task_id, error }) => {
                    run.terminal_status = Some(TerminalStatus::Aborted);
                    run.failure = Some(PhaseFailure { phase, task_id, class: error.class(), message: error.to_string() });
                }
            }
            Ok::<_, Error>(run.clone())
        })
    }

    fn phase<T>(
        &self,
        run_id: &str,
        phase: Phase,
        task_id: Option<&str>,
        iteration: u32,
        body: impl FnOnce() -> Result<(T, String), Error>,
    ) -> Result<T, Failed> {
        let failed = |error: Error| Failed { phase, task_id: task_id.map(String::from), error };
        let index = self
            .store
            .write(|p| {
                let run = p.run_mut(run_id)?;
                run.phases.push(PhaseRecord {
                    phase,
                    task_id: task_id.map(String::from),
                    iteration,
                    started: Utc::now(),
                    finished: None,
                    outcome: PhaseOutcome::Running,
                    detail: String::new(),
                });
                Ok::<_, Error>(run.phases.len() - 1)
            })
            .map_err(failed)?;
        let result = body();
        let (outcome, detail) = match &result {
            Ok((_, detail)) => (PhaseOutcome::Ok, detail.clone()),
            Err(e) => (PhaseOutcome::Failed, e.to_string()),
        };
        let completed = self
            .store
            .write(|p| {
                let run = p.run_mut(run_id)?;
                let record = &mut run.phases[index];
                record.finished = Some(Utc::now());
                record.outcome = outcome;
                record.detail = detail;
                Ok::<_, Error>(run.phases.iter().filter(|r| r.phase == phase && r.finished.is_some()).count())
            })
            .map_err(failed)?;
        if let Some(fault) = &self.options.fault_at {
            if fault.phase == phase && fault.occurrence == completed {
                eprintln!("fault injected after {phase} #{completed}");
                std::process::abort();
            }
        }
        result.map(|(value, _)| value).map_err(failed)
    }

    fn request(&self, request: PromptRequest) -> Result<StructuredPayload, Error> {
        Ok(request_payload(&request, self.provider)?.0)
    }

    fn drive(&self, run_id: &str, intent_text: &str, reviewer: &mut dyn Reviewer) -> Result<(), Failed> {
        let task_ids = self.phase(run_id, Phase::Decompose, None, 0, || {
            let payload = self.request(
                PromptRequest::new(Purpose::DecomposeIntent, Default::default()).var("intent", intent_text),
            )?;
            let StructuredPayload::TaskList(drafts) = payload else {
                return Err(Error::Internal("decomposition returned a non-task payload".into()));
            };
            if drafts.is_empty() {
                return Err(Error::Llm(crate::llm::LlmError::Schema {
                    field: "tasks".into(),
                    detail: "no tasks".into(),
                }));
            }
            let task_ids = self.store.write(|p| {
                let intent_id = p.add_intent(intent_text)?;
                let ids = drafts.into_iter().map(|d| p.add_task(&intent_id, d)).collect::<Result<Vec<_>, _>>()?;
                let run = p.run_mut(run_id)?;
                run.intent_id = Some(intent_id.clone());
                Ok::<_, Error>(ids)
            })?;
            let detail = format!("{} task(s)", task_ids.len());
            Ok((task_ids, detail))
        })?;
        for task_id in task_ids {
            let result = self.run_task(run_id, &task_id, reviewer)?;
            self.store
                .write(|p| {
                    p.run_mut(run_id)?.tasks.push(result);
                    Ok::<_, Error>(())
                })
                .map_err(|error| Failed { phase: Phase::Verify, task_id: Some(task_id.clone()), error })?;
        }
        Ok(())
    }

    fn run_task(&self, run_id: &str, task_id: &str, reviewer: &mut dyn Reviewer) -> Result<TaskResult, Failed> {
        let task: Task = self.store.read(|p| p.task(task_id).cloned()).ok_or_else(|| Failed {
            phase: Phase::ContractGen,
            task_id: Some(task_id.into()),
            error: Error::NotFound(format!("unknown task `{task_id}`")),
        })?;
        let signature = signature_text(task.unit.as_ref());
        let tid = Some(task_id);

        self.phase(run_id, Phase::ContractGen, tid, 0, || {
            let payload = self.request(
                PromptRequest::new(Purpose::GenerateContracts, Default::default())
                    .var("task_title", &task.title)
                    .var("signature", &signature),
            )?;
            let StructuredPayload::ClauseList(clauses) = payload else {
                return Err(Error::Internal("contract generation returned a non-clause payload".into()));
            };
            let drafts: Vec<_> = clauses.iter().map(|c| c.draft()).collect();
            let ids = self.store.write(|p| p.propose(task_id, &drafts, Provenance::LlmGenerated).map_err(Error::from))?;
            Ok(((), format!("{} clause(s) proposed", ids.len())))
        })?;

        let clauses = self.phase(run_id, Phase::ReviewWait, tid, 0, || {
            reviewer.await_review(self.store, task_id)?;
            let (clauses, rejected) = self.store.read(|p| {
                let rejected = p
                    .contracts
                    .iter()
                    .filter(|c| c.task_id == task_id && c.status == ContractStatus::Rejected)
                    .count();
                (p.effective_contracts(task_id), rejected)
            });
            let clauses = clauses?;
            let detail = format!("{} approved, {rejected} rejected", clauses.len());
            Ok((clauses, detail))
        })?;
        let degraded = clauses.is_empty();

        let code_prompt = |purpose: Purpose| {
            PromptRequest::new(purpose, Default::default())
                .var("task_title", &task.title)
                .var("signature", &signature)
                .var("contracts", approved_block(&clauses))
        };
        let store_code = |payload: StructuredPayload, iteration: u32| -> Result<(String, String), Error> {
            let StructuredPayload::CodeArtifact { subject, source } = payload else {
                return Err(Error::Internal("code generation returned a non-code payload".into()));
            };
            let subject_id = subject.subject_id.clone();
            let id = self.store.write(|p| p.add_code_unit(task_id, subject, source, iteration).map_err(Error::from))?;
            Ok((id, format!("subject {subject_id}")))
        };

        self.phase(run_id, Phase::Codegen, tid, 0, || store_code(self.request(code_prompt(Purpose::GenerateCode))?, 0))?;

        let plan_id = self.phase(run_id, Phase::Testgen, tid, 0, || {
            let plan_id = self.store.write(|p| p.build_plan(task_id, &self.options.testgen).map_err(Error::from))?;
            let cases = self.store.read(|p| p.plan(&plan_id).map_or(0, |pl| pl.case_ids.len()));
            Ok((plan_id, format!("{cases} case(s)")))
        })?;

        let mut iteration = 0;
        loop {
            let report = self.phase(run_id, Phase::Verify, tid, iteration, || {
                let report = self.verify(task_id, &plan_id)?;
                let detail = format!("{} failure(s) in {} case(s)", report.failures(), report.cases_run);
                Ok((report, detail))
            })?;
            let result = |status| TaskResult {
                task_id: task_id.to_string(),
                status,
                repairs: iteration,
                report_id: Some(report.report_id.clone()),
            };
            if report.failures() == 0 && !report.incomplete {
                return Ok(result(if degraded {
                    TerminalStatus::DegradedNoContracts
                } else {
                    TerminalStatus::Converged
                }));
            }
            if report.logic_failures() == 0 {
                let reason = report
                    .incomplete_reason
                    .clone()
                    .unwrap_or_else(|| "only indeterminate verdicts remain; the contracts need revision".into());
                return Err(Failed { phase: Phase::Verify, task_id: Some(task_id.into()), error: Error::Internal(reason) });
            }
            if iteration >= self.options.max_repair_iterations {
                return Ok(result(TerminalStatus::BudgetExhausted));
            }
            iteration += 1;
            self.phase(run_id, Phase::Repair, tid, iteration, || {
                let brief = self.store.read(|p| {
                    let plan = p.plan(&plan_id).ok_or_else(|| crate::checker::CheckError::UnknownPlan(plan_id.clone()))?;
                    let plan_clauses = p.plan_clauses(plan)?;
                    summarize_for_repair(&report, &plan_clauses, self.options.brief_budget)
                })?;
                let payload = self.request(code_prompt(Purpose::RepairCode).var("violations", brief.text))?;
                store_code(payload, iteration)
            })?;
        }
    }

    fn verify(&self, task_id: &str, plan_id: &str) -> Result<crate::checker::ViolationReport, Error> {
        let (plan, cases, clauses, code_unit) = self.store.read(|p| {
            let plan = p.plan(plan_id).cloned().ok_or_else(|| crate::checker::CheckError::UnknownPlan(plan_id.into()))?;
            let cases: Vec<_> = p.plan_cases(&plan).into_iter().cloned().collect();
            let clauses: Vec<ContractClause> = p.plan_clauses(&plan)?.into_iter().cloned().collect();
            let code = p
                .latest_code_unit(task_id)
                .map(|c| (c.code_unit_id.clone(), c.subject.clone()))
                .ok_or_else(|| Error::NotFound(format!("task `{task_id}` has no generated code")))?;
            Ok::<_, Error>((plan, cases, clauses, code))
        })?;
        let (code_unit_id, subject): (String, SubjectDescriptor) = code_unit;
        let mut session = Session::spawn(&subject, self.options.call_deadline)?;
        let case_refs: Vec<_> = cases.iter().collect();
        let clause_refs: Vec<_> = clauses.iter().collect();
        let mut report = check_plan(&plan, &case_refs, &clause_refs, &mut session, self.options.witness_limit);
        session.shutdown();
        report.code_unit_id = Some(code_unit_id);
        self.store.write(|p| p.record_report(report.clone()).map_err(Error::from))?;
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fault_points() {
        assert_eq!(FaultPoint::parse("verify"), Some(FaultPoint { phase: Phase::Verify, occurrence: 1 }));
        assert_eq!(FaultPoint::parse("verify:2"), Some(FaultPoint { phase: Phase::Verify, occurrence: 2 }));
        assert_eq!(FaultPoint::parse("verify:0"), None);
        assert_eq!(FaultPoint::parse("deploy"), None);
    }
}
