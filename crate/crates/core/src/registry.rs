//! Contract records and their review lifecycle.

use std::collections::BTreeSet;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::new_id;
use crate::lang::{rewrite_constructor_precondition, ClauseError, ClauseKind, ContractClause, FieldRewrite};
use crate::project::Project;
use crate::trace::{EdgeKind, NodeKind, NodeRef, TaskUnitKind, TraceError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContractStatus {
    Proposed,
    Approved,
    Rejected,
    Revised,
}

impl ContractStatus {
    pub fn parse(s: &str) -> Option<ContractStatus> {
        match s {
            "proposed" => Some(ContractStatus::Proposed),
            "approved" => Some(ContractStatus::Approved),
            "rejected" => Some(ContractStatus::Rejected),
            "revised" => Some(ContractStatus::Revised),
            _ => None,
        }
    }

    /// The lifecycle relation. `None` is the state before a record exists.
    pub fn can_move(from: Option<ContractStatus>, to: ContractStatus) -> bool {
        use ContractStatus::*;
        matches!(
            (from, to),
            (None, Proposed)
                | (None, Revised)
                | (Some(Proposed), Approved | Rejected | Revised)
                | (Some(Revised), Approved | Rejected)
        )
    }

    pub fn awaits_review(self) -> bool {
        matches!(self, ContractStatus::Proposed | ContractStatus::Revised)
    }
}

impl fmt::Display for ContractStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ContractStatus::Proposed => "proposed",
            ContractStatus::Approved => "approved",
            ContractStatus::Rejected => "rejected",
            ContractStatus::Revised => "revised",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    LlmGenerated,
    HumanAuthored,
    NormalizerRewritten,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Actor {
    Human,
    AutoApprove,
    System,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Approve,
    Reject,
}

impl Decision {
    fn target(self) -> ContractStatus {
        match self {
            Decision::Approve => ContractStatus::Approved,
            Decision::Reject => ContractStatus::Rejected,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusChange {
    pub from: Option<ContractStatus>,
    pub to: ContractStatus,
    pub at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub actor: Actor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractRecord {
    pub contract_id: String,
    pub task_id: String,
    pub clause: ContractClause,
    pub status: ContractStatus,
    #[serde(default)]
    pub review_note: Option<String>,
    #[serde(default)]
    pub revision_of: Option<String>,
    pub provenance: Provenance,
    /// `this.X` → `X` substitutions applied to a constructor precondition.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rewrites: Vec<FieldRewrite>,
    /// The text as proposed, when the normalizer rewrote it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original_text: Option<String>,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub history: Vec<StatusChange>,
}

/// A clause as it arrives from a provider or a person.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClauseDraft {
    pub kind: ClauseKind,
    pub element: String,
    pub contract_text: String,
}

impl ClauseDraft {
    pub fn new(kind: ClauseKind, element: impl Into<String>, contract_text: impl Into<String>) -> Self {
        ClauseDraft { kind, element: element.into(), contract_text: contract_text.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("unknown contract `{0}`")]
    UnknownContract(String),
    #[error("contract {contract_id} cannot move from {from} to {to}")]
    IllegalTransition { contract_id: String, from: ContractStatus, to: ContractStatus },
    #[error("clause {index}: {source}")]
    InvalidClause {
        index: usize,
        #[source]
        source: ClauseError,
    },
    #[error(transparent)]
    Parse(ClauseError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

impl Project {
    pub fn contract(&self, id: &str) -> Option<&ContractRecord> {
        self.contracts.iter().find(|c| c.contract_id == id)
    }

    /// A record is superseded once a revision of it exists that was not
    /// itself rejected.
    pub fn is_superseded(&self, contract_id: &str) -> bool {
        self.contracts.iter().any(|c| {
            c.revision_of.as_deref() == Some(contract_id) && c.status != ContractStatus::Rejected
        })
    }

    /// Records a reviewer still has to decide on.
    pub fn pending_review(&self, task_id: Option<&str>) -> Vec<&ContractRecord> {
        self.contracts
            .iter()
            .filter(|c| task_id.is_none_or(|t| c.task_id == t))
            .filter(|c| c.status.awaits_review() && !self.is_superseded(&c.contract_id))
            .collect()
    }

    /// Adds one `proposed` record per draft. All drafts are validated before
    /// anything is stored.
    pub fn propose(
        &mut self,
        task_id: &str,
        drafts: &[ClauseDraft],
        provenance: Provenance,
    ) -> Result<Vec<String>, RegistryError> {
        let task = self.task(task_id).ok_or_else(|| RegistryError::UnknownTask(task_id.into()))?.clone();
        let ctor_params: Option<BTreeSet<String>> = match (&task.unit_kind, &task.unit) {
            (TaskUnitKind::Constructor, Some(unit)) => Some(unit.params.iter().map(|p| p.name.clone()).collect()),
            _ => None,
        };
        let now = Utc::now();
        let mut records = Vec::with_capacity(drafts.len());
        for (index, draft) in drafts.iter().enumerate() {
            let invalid = |source| RegistryError::InvalidClause { index, source };
            let contract_id = new_id(NodeKind::Contract.id_prefix());
            let mut clause = ContractClause::new(&contract_id, draft.kind, &draft.element, &draft.contract_text)
                .map_err(invalid)?;
            let mut record_provenance = provenance;
            let mut rewrites = Vec::new();
            let mut original_text = None;
            if let (ClauseKind::Precondition, Some(params)) = (draft.kind, &ctor_params) {
                let (expr, applied) = rewrite_constructor_precondition(clause.expr.clone(), params);
                if !applied.is_empty() {
                    let text = expr.to_string();
                    clause = ContractClause::from_expr(&contract_id, draft.kind, &draft.element, expr, text)
                        .map_err(invalid)?;
                    record_provenance = Provenance::NormalizerRewritten;
                    rewrites = applied;
                    original_text = Some(draft.contract_text.clone());
                }
            }
            records.push(ContractRecord {
                contract_id,
                task_id: task_id.to_string(),
                clause,
                status: ContractStatus::Proposed,
                review_note: None,
                revision_of: None,
                provenance: record_provenance,
                rewrites,
                original_text,
                created_at: now,
                history: vec![StatusChange {
                    from: None,
                    to: ContractStatus::Proposed,
                    at: now,
                    note: None,
                    actor: Actor::System,
                }],
            });
        }
        let ids: Vec<String> = records.iter().map(|r| r.contract_id.clone()).collect();
        self.contracts.extend(records);
        let task_ref = NodeRef::new(NodeKind::Task, task_id);
        let contract_refs: Vec<NodeRef> = ids.iter().map(|id| NodeRef::new(NodeKind::Contract, id)).collect();
        self.link_many(contract_refs.iter().map(|c| (&task_ref, c)), EdgeKind::SpecifiedBy)?;
        Ok(ids)
    }

    pub fn review(
        &mut self,
        contract_id: &str,
        decision: Decision,
        note: Option<String>,
        actor: Actor,
    ) -> Result<ContractRecord, RegistryError> {
        let record = self
            .contracts
            .iter_mut()
            .find(|c| c.contract_id == contract_id)
            .ok_or_else(|| RegistryError::UnknownContract(contract_id.into()))?;
        let to = decision.target();
        if !ContractStatus::can_move(Some(record.status), to) {
            return Err(RegistryError::IllegalTransition {
                contract_id: contract_id.into(),
                from: record.status,
                to,
            });
        }
        record.history.push(StatusChange { from: Some(record.status), to, at: Utc::now(), note: note.clone(), actor });
        record.status = to;
        record.review_note = note;
        Ok(record.clone())
    }

    /// Creates a new `revised` record carrying `new_source_text`; the
    /// original stays as it was and becomes the `revision_of` target.
    pub fn revise(
        &mut self,
        contract_id: &str,
        new_source_text: &str,
        note: Option<String>,
    ) -> Result<ContractRecord, RegistryError> {
        let original = self.contract(contract_id).ok_or_else(|| RegistryError::UnknownContract(contract_id.into()))?;
        let new_contract_id = new_id(NodeKind::Contract.id_prefix());
        let clause = ContractClause::new(&new_contract_id, original.clause.kind, &original.clause.element, new_source_text)
            .map_err(RegistryError::Parse)?;
        let now = Utc::now();
        let record = ContractRecord {
            contract_id: new_contract_id.clone(),
            task_id: original.task_id.clone(),
            clause,
            status: ContractStatus::Revised,
            review_note: note.clone(),
            revision_of: Some(contract_id.to_string()),
            provenance: Provenance::HumanAuthored,
            rewrites: Vec::new(),
            original_text: None,
            created_at: now,
            history: vec![StatusChange { from: None, to: ContractStatus::Revised, at: now, note, actor: Actor::Human }],
        };
        let task_ref = NodeRef::new(NodeKind::Task, &record.task_id);
        self.contracts.push(record.clone());
        self.link(&task_ref, &NodeRef::new(NodeKind::Contract, &new_contract_id), EdgeKind::SpecifiedBy)?;
        Ok(record)
    }

    /// Follows `revision_of` back to the first record of the chain.
    pub fn revision_root(&self, contract_id: &str) -> Option<(String, usize)> {
        let mut current = self.contract(contract_id)?;
        let mut hops = 0;
        while let Some(parent) = current.revision_of.as_deref() {
            current = self.contract(parent)?;
            hops += 1;
            if hops > self.contracts.len() {
                return None;
            }
        }
        Some((current.contract_id.clone(), hops))
    }

    /// The approved clauses of a task, ordered by kind, element, id.
    /// Records superseded by a live revision are left out.
    pub fn effective_contracts(&self, task_id: &str) -> Result<Vec<ContractClause>, RegistryError> {
        if self.task(task_id).is_none() {
            return Err(RegistryError::UnknownTask(task_id.into()));
        }
        let mut clauses: Vec<ContractClause> = self
            .contracts
            .iter()
            .filter(|c| c.task_id == task_id && c.status == ContractStatus::Approved)
            .filter(|c| !self.is_superseded(&c.contract_id))
            .map(|c| c.clause.clone())
            .collect();
        clauses.sort_by(|a, b| (a.kind, &a.element, &a.clause_id).cmp(&(b.kind, &b.element, &b.clause_id)));
        Ok(clauses)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::reference::account_signature;
    use crate::trace::TaskDraft;

    fn account_task() -> (Project, String) {
        let mut p = Project::default();
        let intent = p.add_intent("Build an ATM Java project for me").unwrap();
        let mut draft = TaskDraft::new("Account constructor", TaskUnitKind::Constructor);
        draft.unit = Some(account_signature());
        let task = p.add_task(&intent, draft).unwrap();
        (p, task)
    }

    #[test]
    fn constructor_precondition_is_rewritten() {
        let (mut p, task) = account_task();
        let ids = p
            .propose(&task, &[ClauseDraft::new(ClauseKind::Precondition, "balance", "this.balance >= 0")], Provenance::LlmGenerated)
            .unwrap();
        let rec = p.contract(&ids[0]).unwrap();
        assert_eq!(rec.clause.normalized_text(), "balance >= 0");
        assert_eq!(rec.clause.source_text, "balance >= 0");
        assert_eq!(rec.provenance, Provenance::NormalizerRewritten);
        assert_eq!(rec.original_text.as_deref(), Some("this.balance >= 0"));
        assert_eq!(rec.rewrites, vec![FieldRewrite { field: "balance".into(), parameter: "balance".into() }]);
    }

    #[test]
    fn batch_is_atomic() {
        let (mut p, task) = account_task();
        let drafts = [
            ClauseDraft::new(ClauseKind::Precondition, "pin", "0 <= pin"),
            ClauseDraft::new(ClauseKind::Precondition, "pin", "result > 0"),
        ];
        let err = p.propose(&task, &drafts, Provenance::LlmGenerated).unwrap_err();
        assert!(matches!(err, RegistryError::InvalidClause { index: 1, .. }));
        assert!(p.contracts.is_empty());
        assert_eq!(p.propose(&task, &[], Provenance::LlmGenerated).unwrap(), Vec::<String>::new());
        assert!(matches!(p.propose("task_nope", &[], Provenance::LlmGenerated), Err(RegistryError::UnknownTask(_))));
    }

    #[test]
    fn lifecycle_and_revision_chain() {
        let (mut p, task) = account_task();
        let ids = p
            .propose(&task, &[ClauseDraft::new(ClauseKind::Precondition, "pin", "pin >= 0")], Provenance::LlmGenerated)
            .unwrap();
        let c = &ids[0];
        let r1 = p.revise(c, "0 <= pin && pin <= 9999", Some("add upper bound".into())).unwrap();
        assert_eq!(r1.status, ContractStatus::Revised);
        assert_eq!(r1.provenance, Provenance::HumanAuthored);
        assert_eq!(r1.clause.normalized_text(), "0 <= pin && pin <= 9999");
        assert_eq!(p.contract(c).unwrap().status, ContractStatus::Proposed);
        assert!(matches!(p.revise(c, "pin >= &&", None), Err(RegistryError::Parse(_))));

        let r2 = p.revise(&r1.contract_id, "pin >= 0 && pin <= 9999", None).unwrap();
        assert_eq!(p.revision_root(&r2.contract_id), Some((c.clone(), 2)));
        assert_eq!(p.pending_review(None).len(), 1);

        p.review(&r2.contract_id, Decision::Approve, Some("fix accepted".into()), Actor::Human).unwrap();
        let err = p.review(&r2.contract_id, Decision::Reject, None, Actor::Human).unwrap_err();
        assert!(matches!(err, RegistryError::IllegalTransition { from: ContractStatus::Approved, .. }));
        assert_eq!(p.effective_contracts(&task).unwrap().len(), 1);
        assert!(p.check_integrity().is_empty());
    }
}
