//! Evaluates approved contracts against call records and assembles
//! violation reports and repair briefs.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::{CallOutcome, CallRecord, HarnessError, Session};
use crate::ids::new_id;
use crate::lang::{evaluate, ClauseKind, ContractClause, Env, EvalOutcome, Value};
use crate::project::Project;
use crate::testgen::{Expectation, TestCase, TestPlan};
use crate::trace::{EdgeKind, NodeKind, NodeRef, TraceError};

pub const DEFAULT_WITNESS_LIMIT: usize = 3;
pub const DEFAULT_BRIEF_BUDGET: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Pass,
    PostconditionViolation,
    InvariantViolation,
    MissingRejection,
    UnexpectedRejection,
    Indeterminate,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classification::Pass => "pass",
            Classification::PostconditionViolation => "postcondition_violation",
            Classification::InvariantViolation => "invariant_violation",
            Classification::MissingRejection => "missing_rejection",
            Classification::UnexpectedRejection => "unexpected_rejection",
            Classification::Indeterminate => "indeterminate",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Checkpoint {
    Entry,
    Exit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClauseOutcome {
    pub clause_id: String,
    pub kind: ClauseKind,
    pub at: Checkpoint,
    pub outcome: EvalOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckVerdict {
    pub case_id: String,
    pub expectation: Expectation,
    pub args: BTreeMap<String, Value>,
    /// What the subject did. Absent when the call never completed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub call: Option<CallOutcome>,
    /// Preconditions judged on the input. They decide whether the case was a
    /// fair test, not whether the subject is correct.
    pub preconditions: Vec<ClauseOutcome>,
    /// Postconditions and invariants, the oracle proper.
    pub outcomes: Vec<ClauseOutcome>,
    pub classification: Classification,
    /// Clauses this failure is attributed to.
    #[serde(default)]
    pub failing_clauses: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClauseFailure {
    pub clause_id: String,
    pub classification: Classification,
    pub count: usize,
    /// Up to `witness_limit` argument sets, in plan order.
    pub witnesses: Vec<BTreeMap<String, Value>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub report_id: String,
    pub task_id: String,
    pub plan_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code_unit_id: Option<String>,
    pub subject_id: String,
    pub cases_run: usize,
    pub passed: usize,
    /// Failing cases only.
    pub verdicts: Vec<CheckVerdict>,
    /// Failure counts per classification.
    pub summary: BTreeMap<Classification, usize>,
    /// Failures grouped per (classification, clause).
    pub clause_failures: Vec<ClauseFailure>,
    pub witness_limit: usize,
    /// Set when the subject died before every case ran.
    pub incomplete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub incomplete_reason: Option<String>,
    pub created_at: DateTime<Utc>,
}

impl ViolationReport {
    pub fn failures(&self) -> usize {
        self.verdicts.len()
    }

    pub fn count(&self, c: Classification) -> usize {
        self.summary.get(&c).copied().unwrap_or(0)
    }

    /// Failures other than indeterminate ones.
    pub fn logic_failures(&self) -> usize {
        self.verdicts.iter().filter(|v| v.classification != Classification::Indeterminate).count()
    }
}

/// The trace node for one failing (clause, case) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationNode {
    pub violation_id: String,
    pub report_id: String,
    pub task_id: String,
    pub clause_id: String,
    pub case_id: String,
    pub classification: Classification,
    pub witness: BTreeMap<String, Value>,
}

#[derive(Debug, Error)]
pub enum CheckError {
    #[error("record is for unit `{found}`, the clauses are for `{expected}`")]
    UnitMismatch { expected: String, found: String },
    #[error("the report has no failures to repair")]
    EmptyReport,
    #[error("unknown plan `{0}`")]
    UnknownPlan(String),
    #[error("plan refers to missing contract `{0}`")]
    MissingClause(String),
    #[error("no report for task `{0}`")]
    NoReport(String),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

fn judge(clauses: &[&ContractClause], kind: ClauseKind, env: &Env, at: Checkpoint) -> Vec<ClauseOutcome> {
    clauses
        .iter()
        .filter(|c| c.kind == kind)
        .map(|c| ClauseOutcome { clause_id: c.clause_id.clone(), kind, at, outcome: evaluate(&c.expr, env) })
        .collect()
}

/// Checks one call against the clauses of its unit.
pub fn check_call(
    record: &CallRecord,
    unit_name: &str,
    clauses: &[&ContractClause],
    case_id: &str,
    expectation: &Expectation,
) -> Result<CheckVerdict, CheckError> {
    if record.unit_name != unit_name {
        return Err(CheckError::UnitMismatch { expected: unit_name.into(), found: record.unit_name.clone() });
    }
    let entry = Env { this_fields: record.pre_state.clone(), ..Env::with_bindings(record.args.clone()) };
    let preconditions = judge(clauses, ClauseKind::Precondition, &entry, Checkpoint::Entry);

    let mut outcomes = Vec::new();
    if !record.pre_state.is_empty() {
        let state = Env { this_fields: record.pre_state.clone(), ..Env::default() };
        outcomes.extend(judge(clauses, ClauseKind::Invariant, &state, Checkpoint::Entry));
    }
    if let CallOutcome::Returned { result, post_state } = &record.outcome {
        let exit = Env {
            bindings: record.args.clone(),
            this_fields: post_state.clone(),
            old_fields: (!record.pre_state.is_empty()).then(|| record.pre_state.clone()),
            result: Some(result.clone()),
        };
        outcomes.extend(judge(clauses, ClauseKind::Postcondition, &exit, Checkpoint::Exit));
        let state = Env { this_fields: post_state.clone(), ..Env::default() };
        outcomes.extend(judge(clauses, ClauseKind::Invariant, &state, Checkpoint::Exit));
    }

    let violated = |kind: ClauseKind| -> Vec<String> {
        outcomes.iter().filter(|o| o.kind == kind && o.outcome.is_violated()).map(|o| o.clause_id.clone()).collect()
    };
    let indeterminate: Vec<String> =
        outcomes.iter().filter(|o| o.outcome.is_indeterminate()).map(|o| o.clause_id.clone()).collect();
    let unmet_preconditions: Vec<String> =
        preconditions.iter().filter(|o| !o.outcome.holds()).map(|o| o.clause_id.clone()).collect();
    let post_violations = violated(ClauseKind::Postcondition);
    let inv_violations = violated(ClauseKind::Invariant);
    let oracle_violations: Vec<String> = post_violations.iter().chain(&inv_violations).cloned().collect();

    let mut note = None;
    let (classification, failing_clauses) = match (expectation, &record.outcome) {
        (_, outcome) if outcome.is_timeout() => {
            note = Some("call timed out".to_string());
            (Classification::Indeterminate, Vec::new())
        }
        (Expectation::MustBeRejected { target_clause_id, .. }, CallOutcome::Returned { .. }) => {
            (Classification::MissingRejection, vec![target_clause_id.clone()])
        }
        (Expectation::MustBeRejected { .. }, CallOutcome::Raised { .. }) => {
            if inv_violations.is_empty() {
                (Classification::Pass, Vec::new())
            } else {
                (Classification::InvariantViolation, inv_violations)
            }
        }
        (Expectation::MustSatisfyPosts, CallOutcome::Raised { error_kind, .. }) => {
            note = Some(format!("valid input raised {error_kind}"));
            (Classification::UnexpectedRejection, Vec::new())
        }
        (Expectation::MustSatisfyPosts, CallOutcome::Returned { .. }) => {
            if !post_violations.is_empty() {
                (Classification::PostconditionViolation, oracle_violations)
            } else if !inv_violations.is_empty() {
                (Classification::InvariantViolation, inv_violations)
            } else if !unmet_preconditions.is_empty() {
                note = Some("input does not satisfy every precondition".to_string());
                (Classification::Indeterminate, unmet_preconditions)
            } else if !indeterminate.is_empty() {
                (Classification::Indeterminate, indeterminate)
            } else {
                (Classification::Pass, Vec::new())
            }
        }
    };
    Ok(CheckVerdict {
        case_id: case_id.to_string(),
        expectation: expectation.clone(),
        args: record.args.clone(),
        call: Some(record.outcome.clone()),
        preconditions,
        outcomes,
        classification,
        failing_clauses,
        note,
    })
}

fn unrun_verdict(case: &TestCase, note: String) -> CheckVerdict {
    CheckVerdict {
        case_id: case.case_id.clone(),
        expectation: case.expectation.clone(),
        args: case.args.clone(),
        call: None,
        preconditions: Vec::new(),
        outcomes: Vec::new(),
        classification: Classification::Indeterminate,
        failing_clauses: Vec::new(),
        note: Some(note),
    }
}

/// Runs every case in plan order on `session` and reports the failures.
/// The report is not stored; see [`Project::record_report`].
pub fn check_plan(
    plan: &TestPlan,
    cases: &[&TestCase],
    clauses: &[&ContractClause],
    session: &mut Session,
    witness_limit: usize,
) -> ViolationReport {
    let mut verdicts = Vec::new();
    let mut incomplete_reason = None;
    for case in cases {
        let verdict = match session.call(&case.unit_name, &case.args) {
            Ok(record) => check_call(&record, &plan.unit_name, clauses, &case.case_id, &case.expectation)
                .unwrap_or_else(|e| unrun_verdict(case, e.to_string())),
            Err(HarnessError::SessionDead(reason)) => {
                incomplete_reason = Some(reason);
                break;
            }
            Err(e) => unrun_verdict(case, e.to_string()),
        };
        verdicts.push(verdict);
    }
    assemble_report(plan, session.descriptor().subject_id.clone(), verdicts, witness_limit, incomplete_reason)
}

pub fn assemble_report(
    plan: &TestPlan,
    subject_id: String,
    verdicts: Vec<CheckVerdict>,
    witness_limit: usize,
    incomplete_reason: Option<String>,
) -> ViolationReport {
    let cases_run = verdicts.len();
    let failures: Vec<CheckVerdict> =
        verdicts.into_iter().filter(|v| v.classification != Classification::Pass).collect();
    let mut summary = BTreeMap::new();
    for v in &failures {
        *summary.entry(v.classification).or_insert(0) += 1;
    }
    let mut groups: BTreeMap<(Classification, String), ClauseFailure> = BTreeMap::new();
    for v in &failures {
        for clause_id in &v.failing_clauses {
            let group = groups.entry((v.classification, clause_id.clone())).or_insert_with(|| ClauseFailure {
                clause_id: clause_id.clone(),
                classification: v.classification,
                count: 0,
                witnesses: Vec::new(),
            });
            group.count += 1;
            if group.witnesses.len() < witness_limit {
                group.witnesses.push(v.args.clone());
            }
        }
    }
    ViolationReport {
        report_id: new_id("report"),
        task_id: plan.task_id.clone(),
        plan_id: plan.plan_id.clone(),
        code_unit_id: None,
        subject_id,
        cases_run,
        passed: cases_run - failures.len(),
        verdicts: failures,
        summary,
        clause_failures: groups.into_values().collect(),
        witness_limit,
        incomplete: incomplete_reason.is_some(),
        incomplete_reason,
        created_at: Utc::now(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BriefEntry {
    /// Absent for failures not attributable to a clause (a valid input that
    /// was rejected).
    pub clause_id: Option<String>,
    pub kind: Option<ClauseKind>,
    pub element: Option<String>,
    pub clause_text: Option<String>,
    pub classification: Classification,
    pub failures: usize,
    pub witnesses: Vec<BTreeMap<String, Value>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairBrief {
    pub text: String,
    pub entries: Vec<BriefEntry>,
}

fn format_args(args: &BTreeMap<String, Value>) -> String {
    args.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(", ")
}

fn render_brief(entries: &[BriefEntry], witness_cap: usize) -> String {
    let mut out = String::new();
    for e in entries {
        match (&e.kind, &e.element, &e.clause_text) {
            (Some(kind), Some(element), Some(text)) => {
                out.push_str(&format!("{} ({} failures) {kind} {element}: {text}\n", e.classification, e.failures))
            }
            _ => out.push_str(&format!("{} ({} failures): valid input was rejected\n", e.classification, e.failures)),
        }
        for w in e.witnesses.iter().take(witness_cap) {
            out.push_str(&format!("  input: {}\n", format_args(w)));
        }
    }
    out
}

/// Condenses a report into what a repair prompt needs. Indeterminate
/// failures are left out; they point at the contracts, not the code. When
/// the text exceeds `budget` characters, witnesses are dropped evenly, never
/// clauses.
pub fn summarize_for_repair(
    report: &ViolationReport,
    clauses: &[&ContractClause],
    budget: usize,
) -> Result<RepairBrief, CheckError> {
    let by_id: HashMap<&str, &ContractClause> = clauses.iter().map(|c| (c.clause_id.as_str(), *c)).collect();
    let mut groups: BTreeMap<(Classification, Option<String>), BriefEntry> = BTreeMap::new();
    for v in report.verdicts.iter().filter(|v| v.classification != Classification::Indeterminate) {
        let ids: Vec<Option<String>> = if v.failing_clauses.is_empty() {
            vec![None]
        } else {
            v.failing_clauses.iter().cloned().map(Some).collect()
        };
        for id in ids {
            let clause = id.as_deref().and_then(|i| by_id.get(i));
            let entry = groups.entry((v.classification, id.clone())).or_insert_with(|| BriefEntry {
                clause_id: id.clone(),
                kind: clause.map(|c| c.kind),
                element: clause.map(|c| c.element.clone()),
                clause_text: clause.map(|c| c.normalized_text()),
                classification: v.classification,
                failures: 0,
                witnesses: Vec::new(),
            });
            entry.failures += 1;
            if entry.witnesses.len() < report.witness_limit {
                entry.witnesses.push(v.args.clone());
            }
        }
    }
    if groups.is_empty() {
        return Err(CheckError::EmptyReport);
    }
    let mut entries: Vec<BriefEntry> = groups.into_values().collect();
    let mut cap = report.witness_limit;
    let mut text = render_brief(&entries, cap);
    while text.chars().count() > budget && cap > 0 {
        cap -= 1;
        text = render_brief(&entries, cap);
    }
    for e in &mut entries {
        e.witnesses.truncate(cap);
    }
    Ok(RepairBrief { text, entries })
}

impl Project {
    pub fn report(&self, report_id: &str) -> Option<&ViolationReport> {
        self.reports.iter().find(|r| r.report_id == report_id)
    }

    pub fn latest_report(&self, task_id: &str) -> Option<&ViolationReport> {
        self.reports.iter().rev().find(|r| r.task_id == task_id)
    }

    /// The clauses a plan was built from, in plan order.
    pub fn plan_clauses(&self, plan: &TestPlan) -> Result<Vec<&ContractClause>, CheckError> {
        plan.clause_ids
            .iter()
            .map(|id| self.contract(id).map(|c| &c.clause).ok_or_else(|| CheckError::MissingClause(id.clone())))
            .collect()
    }

    /// Stores the report with one violation node and `violated_by` link per
    /// failing (clause, case) pair.
    pub fn record_report(&mut self, report: ViolationReport) -> Result<String, CheckError> {
        let mut nodes = Vec::new();
        for v in &report.verdicts {
            for clause_id in &v.failing_clauses {
                if nodes.iter().any(|n: &ViolationNode| &n.clause_id == clause_id && n.case_id == v.case_id) {
                    continue;
                }
                nodes.push(ViolationNode {
                    violation_id: new_id(NodeKind::Violation.id_prefix()),
                    report_id: report.report_id.clone(),
                    task_id: report.task_id.clone(),
                    clause_id: clause_id.clone(),
                    case_id: v.case_id.clone(),
                    classification: v.classification,
                    witness: v.args.clone(),
                });
            }
        }
        let pairs: Vec<(NodeRef, NodeRef)> = nodes
            .iter()
            .map(|n| (NodeRef::new(NodeKind::Contract, &n.clause_id), NodeRef::new(NodeKind::Violation, &n.violation_id)))
            .collect();
        let report_id = report.report_id.clone();
        self.violations.extend(nodes);
        self.reports.push(report);
        self.link_many(pairs.iter().map(|(a, b)| (a, b)), EdgeKind::ViolatedBy)?;
        Ok(report_id)
    }
}
