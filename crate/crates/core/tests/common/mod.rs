#![allow(dead_code)]

pub mod oracle;

use std::collections::BTreeMap;
use std::path::PathBuf;

use contractflow::harness::reference::account_signature;
use contractflow::lang::{ClauseKind, Value};
use contractflow::llm::ScriptedProvider;
use contractflow::pipeline::{run_pipeline, AutoApprove, PipelineOptions, PipelineRun};
use contractflow::project::Project;
use contractflow::registry::{Actor, ClauseDraft, Decision, Provenance};
use contractflow::store::Store;
use contractflow::Error;
use contractflow::trace::{TaskDraft, TaskUnitKind};
use tempfile::TempDir;

pub const ATM_PROMPT: &str = "Build an ATM Java project for me";

/// The eight constructor clauses, in Java syntax, as the mock provider returns them.
pub const ACCOUNT_CLAUSES: [(ClauseKind, &str, &str); 8] = [
    (ClauseKind::Precondition, "accountNumber", "accountNumber != null && !accountNumber.isEmpty()"),
    (ClauseKind::Precondition, "pin", "0<= pin && pin <= 9999"),
    (ClauseKind::Precondition, "balance", "this.balance >= 0"),
    (ClauseKind::Precondition, "balance", "!Double.isNaN(balance)&& !Double.isInfinite(balance)"),
    (ClauseKind::Postcondition, "accountNumber", "this.accountNumber == accountNumber"),
    (ClauseKind::Postcondition, "pin", "this.pin == pin"),
    (ClauseKind::Postcondition, "balance", "this.balance == balance"),
    (ClauseKind::Postcondition, "balance", "this.balance>=0"),
];

pub fn mock_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/atm-mock")
}

pub fn mock_provider() -> ScriptedProvider {
    ScriptedProvider::from_dir(&mock_dir()).expect("fixture script loads")
}

pub fn cli() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_contractflow"))
}

pub fn fresh_store() -> (TempDir, Store) {
    let dir = tempfile::tempdir().unwrap();
    Project::init(dir.path()).unwrap();
    let store = Store::open(dir.path()).unwrap();
    (dir, store)
}

pub fn account_drafts() -> Vec<ClauseDraft> {
    ACCOUNT_CLAUSES.iter().map(|(k, e, t)| ClauseDraft::new(*k, *e, *t)).collect()
}

/// An intent with one constructor task carrying the account signature.
pub fn account_task(store: &Store) -> String {
    store
        .write(|p| {
            let intent = p.add_intent(ATM_PROMPT)?;
            let mut draft = TaskDraft::new("Account constructor", TaskUnitKind::Constructor);
            draft.key = Some("account-ctor".into());
            draft.unit = Some(account_signature());
            Ok::<_, Error>(p.add_task(&intent, draft)?)
        })
        .unwrap()
}

/// Task plus all eight clauses proposed and approved.
pub fn approved_account_task(store: &Store) -> (String, Vec<String>) {
    let task = account_task(store);
    let ids = store
        .write(|p| {
            let ids = p.propose(&task, &account_drafts(), Provenance::LlmGenerated)?;
            for id in &ids {
                p.review(id, Decision::Approve, None, Actor::AutoApprove)?;
            }
            Ok::<_, Error>(ids)
        })
        .unwrap();
    (task, ids)
}

pub fn golden_loop(max_repair: u32) -> (TempDir, Store, PipelineRun) {
    let (dir, store) = fresh_store();
    let provider = mock_provider();
    let options = PipelineOptions { max_repair_iterations: max_repair, ..PipelineOptions::default() };
    let run = run_pipeline(&store, &provider, &mut AutoApprove, ATM_PROMPT, options).expect("pipeline runs");
    (dir, store, run)
}

/// The four constructor preconditions restated directly in Rust.
pub fn pre_holds(index: usize, args: &BTreeMap<String, Value>) -> bool {
    match index {
        0 => matches!(args.get("accountNumber"), Some(Value::Text(t)) if !t.is_empty()),
        1 => matches!(args.get("pin"), Some(Value::Int(p)) if (0..=9999).contains(p)),
        2 => matches!(args.get("balance"), Some(Value::Decimal(b)) if *b >= 0.0),
        3 => matches!(args.get("balance"), Some(Value::Decimal(b)) if b.is_finite()),
        _ => unreachable!(),
    }
}

/// The four postconditions, given the arguments and the state after return.
pub fn post_holds(index: usize, args: &BTreeMap<String, Value>, post: &BTreeMap<String, Value>) -> bool {
    let same_text = |k: &str| match (args.get(k), post.get(k)) {
        (Some(Value::Text(a)), Some(Value::Text(b))) => a == b,
        (Some(Value::Null), Some(Value::Null)) => true,
        _ => false,
    };
    match index {
        0 => same_text("accountNumber"),
        1 => matches!((args.get("pin"), post.get("pin")), (Some(Value::Int(a)), Some(Value::Int(b))) if a == b),
        2 => matches!((args.get("balance"), post.get("balance")), (Some(Value::Decimal(a)), Some(Value::Decimal(b))) if a == b),
        3 => matches!(post.get("balance"), Some(Value::Decimal(b)) if *b >= 0.0),
        _ => unreachable!(),
    }
}
