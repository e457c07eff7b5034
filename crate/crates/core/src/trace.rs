//! Intents, tasks, generated code units and the typed links between every
//! artifact in a project.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fmt;

use chrono::{DateTime, Utc};
use petgraph::graph::{DiGraph, NodeIndex};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::{SubjectDescriptor, UnitSignature};
use crate::ids::new_id;
use crate::project::Project;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Intent,
    Task,
    Contract,
    CodeUnit,
    TestCase,
    Violation,
}

impl NodeKind {
    pub const ALL: [NodeKind; 6] = [
        NodeKind::Intent,
        NodeKind::Task,
        NodeKind::Contract,
        NodeKind::CodeUnit,
        NodeKind::TestCase,
        NodeKind::Violation,
    ];

    pub fn id_prefix(self) -> &'static str {
        match self {
            NodeKind::Intent => "intent",
            NodeKind::Task => "task",
            NodeKind::Contract => "contract",
            NodeKind::CodeUnit => "code",
            NodeKind::TestCase => "case",
            NodeKind::Violation => "violation",
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeKind::Intent => "intent",
            NodeKind::Task => "task",
            NodeKind::Contract => "contract",
            NodeKind::CodeUnit => "code_unit",
            NodeKind::TestCase => "test_case",
            NodeKind::Violation => "violation",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeRef {
    pub kind: NodeKind,
    pub id: String,
}

impl NodeRef {
    pub fn new(kind: NodeKind, id: impl Into<String>) -> Self {
        NodeRef { kind, id: id.into() }
    }
}

impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind, self.id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    DecomposesTo,
    SpecifiedBy,
    ImplementedBy,
    TestedBy,
    ViolatedBy,
}

impl EdgeKind {
    pub fn endpoints(self) -> (NodeKind, NodeKind) {
        match self {
            EdgeKind::DecomposesTo => (NodeKind::Intent, NodeKind::Task),
            EdgeKind::SpecifiedBy => (NodeKind::Task, NodeKind::Contract),
            EdgeKind::ImplementedBy => (NodeKind::Task, NodeKind::CodeUnit),
            EdgeKind::TestedBy => (NodeKind::Contract, NodeKind::TestCase),
            EdgeKind::ViolatedBy => (NodeKind::Contract, NodeKind::Violation),
        }
    }

    fn structural(self) -> bool {
        matches!(self, EdgeKind::DecomposesTo | EdgeKind::SpecifiedBy | EdgeKind::ImplementedBy)
    }
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeKind::DecomposesTo => "decomposes_to",
            EdgeKind::SpecifiedBy => "specified_by",
            EdgeKind::ImplementedBy => "implemented_by",
            EdgeKind::TestedBy => "tested_by",
            EdgeKind::ViolatedBy => "violated_by",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceLink {
    pub link_id: String,
    pub from_ref: NodeRef,
    pub to_ref: NodeRef,
    pub edge_kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intent {
    pub intent_id: String,
    pub prompt_text: String,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskUnitKind {
    Constructor,
    Method,
    Module,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub task_id: String,
    pub intent_id: String,
    /// Short stable handle used on the command line, e.g. `account-ctor`.
    pub key: String,
    pub title: String,
    #[serde(default)]
    pub description: String,
    pub order_index: u32,
    pub unit_kind: TaskUnitKind,
    /// The code unit the task produces, when known. Drives the constructor
    /// precondition rewrite and test input domains.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<UnitSignature>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDraft {
    #[serde(default)]
    pub key: Option<String>,
    pub title: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub order_index: Option<u32>,
    pub unit_kind: TaskUnitKind,
    #[serde(default)]
    pub unit: Option<UnitSignature>,
}

impl TaskDraft {
    pub fn new(title: impl Into<String>, unit_kind: TaskUnitKind) -> Self {
        TaskDraft {
            key: None,
            title: title.into(),
            description: String::new(),
            order_index: None,
            unit_kind,
            unit: None,
        }
    }
}

/// Generated code for a task: the runnable subject plus the source blob the
/// provider produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeUnit {
    pub code_unit_id: String,
    pub task_id: String,
    pub subject: SubjectDescriptor,
    #[serde(default)]
    pub source: String,
    /// 0 for the first generation, n for the n-th repair.
    pub iteration: u32,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("dangling reference {0}")]
    Dangling(NodeRef),
    #[error("{edge} cannot link {from} to {to}")]
    KindMismatch { edge: EdgeKind, from: NodeRef, to: NodeRef },
    #[error("contract {contract} is already specified by task {existing}")]
    AlreadySpecified { contract: String, existing: String },
    #[error("unknown node `{0}`")]
    UnknownNode(String),
}

/// The connected closure around one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lineage {
    pub root: NodeRef,
    pub nodes: Vec<NodeRef>,
    pub links: Vec<TraceLink>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectKind {
    DuplicateId,
    Dangling,
    KindMismatch,
    Cycle,
    OrphanContract,
    MultipleSpecifiers,
    TaskWithoutIntent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Defect {
    pub kind: DefectKind,
    pub message: String,
    pub ids: Vec<String>,
}

pub fn slugify(text: &str) -> String {
    let mut slug = String::new();
    for c in text.chars() {
        if c.is_ascii_alphanumeric() {
            slug.push(c.to_ascii_lowercase());
        } else if !slug.ends_with('-') && !slug.is_empty() {
            slug.push('-');
        }
    }
    while slug.ends_with('-') {
        slug.pop();
    }
    if slug.is_empty() {
        "task".into()
    } else {
        slug
    }
}

impl Project {
    pub fn node_exists(&self, node: &NodeRef) -> bool {
        let id = node.id.as_str();
        match node.kind {
            NodeKind::Intent => self.intents.iter().any(|n| n.intent_id == id),
            NodeKind::Task => self.tasks.iter().any(|n| n.task_id == id),
            NodeKind::Contract => self.contracts.iter().any(|n| n.contract_id == id),
            NodeKind::CodeUnit => self.code_units.iter().any(|n| n.code_unit_id == id),
            NodeKind::TestCase => self.test_cases.iter().any(|n| n.case_id == id),
            NodeKind::Violation => self.violations.iter().any(|n| n.violation_id == id),
        }
    }

    /// Finds the node carrying `id`, whatever its kind.
    pub fn resolve_node(&self, id: &str) -> Option<NodeRef> {
        NodeKind::ALL
            .into_iter()
            .map(|kind| NodeRef::new(kind, id))
            .find(|r| self.node_exists(r))
    }

    fn all_node_refs(&self) -> Vec<NodeRef> {
        let mut out = Vec::new();
        out.extend(self.intents.iter().map(|n| NodeRef::new(NodeKind::Intent, &n.intent_id)));
        out.extend(self.tasks.iter().map(|n| NodeRef::new(NodeKind::Task, &n.task_id)));
        out.extend(self.contracts.iter().map(|n| NodeRef::new(NodeKind::Contract, &n.contract_id)));
        out.extend(self.code_units.iter().map(|n| NodeRef::new(NodeKind::CodeUnit, &n.code_unit_id)));
        out.extend(self.test_cases.iter().map(|n| NodeRef::new(NodeKind::TestCase, &n.case_id)));
        out.extend(self.violations.iter().map(|n| NodeRef::new(NodeKind::Violation, &n.violation_id)));
        out
    }

    pub fn intent(&self, id: &str) -> Option<&Intent> {
        self.intents.iter().find(|i| i.intent_id == id)
    }

    pub fn task(&self, id: &str) -> Option<&Task> {
        self.tasks.iter().find(|t| t.task_id == id)
    }

    /// Looks a task up by id or by key.
    pub fn find_task(&self, id_or_key: &str) -> Option<&Task> {
        self.task(id_or_key).or_else(|| self.tasks.iter().find(|t| t.key == id_or_key))
    }

    pub fn latest_code_unit(&self, task_id: &str) -> Option<&CodeUnit> {
        self.code_units.iter().filter(|c| c.task_id == task_id).max_by_key(|c| c.iteration)
    }

    pub fn add_intent(&mut self, prompt_text: &str) -> Result<String, TraceError> {
        if prompt_text.trim().is_empty() {
            return Err(TraceError::Validation("intent prompt_text is empty".into()));
        }
        let intent_id = new_id(NodeKind::Intent.id_prefix());
        self.intents.push(Intent {
            intent_id: intent_id.clone(),
            prompt_text: prompt_text.to_string(),
            created_at: Utc::now(),
        });
        Ok(intent_id)
    }

    /// Adds a task under `intent_id` and links it with `decomposes_to`.
    pub fn add_task(&mut self, intent_id: &str, draft: TaskDraft) -> Result<String, TraceError> {
        if draft.title.trim().is_empty() {
            return Err(TraceError::Validation("task title is empty".into()));
        }
        if self.intent(intent_id).is_none() {
            return Err(TraceError::Dangling(NodeRef::new(NodeKind::Intent, intent_id)));
        }
        if let Some(unit) = &draft.unit {
            unit.validate().map_err(TraceError::Validation)?;
        }
        let siblings: Vec<&Task> = self.tasks.iter().filter(|t| t.intent_id == intent_id).collect();
        let order_index = match draft.order_index {
            Some(i) => {
                if siblings.iter().any(|t| t.order_index == i) {
                    return Err(TraceError::Validation(format!(
                        "order_index {i} is already used within intent {intent_id}"
                    )));
                }
                i
            }
            None => siblings.iter().map(|t| t.order_index + 1).max().unwrap_or(0),
        };
        let base = slugify(draft.key.as_deref().unwrap_or(&draft.title));
        let mut key = base.clone();
        let mut n = 2;
        while self.tasks.iter().any(|t| t.key == key) {
            key = format!("{base}-{n}");
            n += 1;
        }
        let task_id = new_id(NodeKind::Task.id_prefix());
        self.tasks.push(Task {
            task_id: task_id.clone(),
            intent_id: intent_id.to_string(),
            key,
            title: draft.title,
            description: draft.description,
            order_index,
            unit_kind: draft.unit_kind,
            unit: draft.unit,
        });
        self.link(
            &NodeRef::new(NodeKind::Intent, intent_id),
            &NodeRef::new(NodeKind::Task, &task_id),
            EdgeKind::DecomposesTo,
        )?;
        Ok(task_id)
    }

    /// Records generated code for a task and links it with `implemented_by`.
    pub fn add_code_unit(
        &mut self,
        task_id: &str,
        subject: SubjectDescriptor,
        source: String,
        iteration: u32,
    ) -> Result<String, TraceError> {
        if self.task(task_id).is_none() {
            return Err(TraceError::Dangling(NodeRef::new(NodeKind::Task, task_id)));
        }
        subject.validate().map_err(TraceError::Validation)?;
        let code_unit_id = new_id(NodeKind::CodeUnit.id_prefix());
        self.code_units.push(CodeUnit {
            code_unit_id: code_unit_id.clone(),
            task_id: task_id.to_string(),
            subject,
            source,
            iteration,
            created_at: Utc::now(),
        });
        self.link(
            &NodeRef::new(NodeKind::Task, task_id),
            &NodeRef::new(NodeKind::CodeUnit, &code_unit_id),
            EdgeKind::ImplementedBy,
        )?;
        Ok(code_unit_id)
    }

    /// Adds a typed link. Linking the same triple twice returns the first
    /// link's id.
    pub fn link(&mut self, from: &NodeRef, to: &NodeRef, edge: EdgeKind) -> Result<String, TraceError> {
        let mut index = LinkIndex::new(self);
        index.link(self, from, to, edge)
    }

    /// Links many pairs with one edge kind, sharing the duplicate index.
    pub fn link_many<'a>(
        &mut self,
        pairs: impl IntoIterator<Item = (&'a NodeRef, &'a NodeRef)>,
        edge: EdgeKind,
    ) -> Result<Vec<String>, TraceError> {
        let mut index = LinkIndex::new(self);
        pairs.into_iter().map(|(from, to)| index.link(self, from, to, edge)).collect()
    }

    pub fn lineage(&self, root: &NodeRef) -> Result<Lineage, TraceError> {
        if !self.node_exists(root) {
            return Err(TraceError::UnknownNode(root.id.clone()));
        }
        let mut adjacency: BTreeMap<&NodeRef, Vec<usize>> = BTreeMap::new();
        for (i, link) in self.links.iter().enumerate() {
            adjacency.entry(&link.from_ref).or_default().push(i);
            adjacency.entry(&link.to_ref).or_default().push(i);
        }
        let mut seen: BTreeSet<NodeRef> = BTreeSet::from([root.clone()]);
        let mut used: BTreeSet<usize> = BTreeSet::new();
        let mut queue = VecDeque::from([root.clone()]);
        while let Some(node) = queue.pop_front() {
            for &i in adjacency.get(&node).map(Vec::as_slice).unwrap_or(&[]) {
                used.insert(i);
                let link = &self.links[i];
                let other = if link.from_ref == node { &link.to_ref } else { &link.from_ref };
                if seen.insert(other.clone()) {
                    queue.push_back(other.clone());
                }
            }
        }
        let mut links: Vec<TraceLink> = used.into_iter().map(|i| self.links[i].clone()).collect();
        links.sort_by(|a, b| {
            (a.edge_kind, &a.from_ref.id, &a.to_ref.id).cmp(&(b.edge_kind, &b.from_ref.id, &b.to_ref.id))
        });
        Ok(Lineage { root: root.clone(), nodes: seen.into_iter().collect(), links })
    }

    /// Lists every violated graph invariant. Empty means the graph is sound.
    pub fn check_integrity(&self) -> Vec<Defect> {
        let mut defects = Vec::new();

        let mut ids = BTreeSet::new();
        for node in self.all_node_refs() {
            if !ids.insert(node.clone()) {
                defects.push(Defect {
                    kind: DefectKind::DuplicateId,
                    message: format!("{node} appears more than once"),
                    ids: vec![node.id],
                });
            }
        }

        let mut specifiers: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        let mut decomposed: BTreeSet<&str> = BTreeSet::new();
        for link in &self.links {
            let (from_kind, to_kind) = link.edge_kind.endpoints();
            if link.from_ref.kind != from_kind || link.to_ref.kind != to_kind {
                defects.push(Defect {
                    kind: DefectKind::KindMismatch,
                    message: format!(
                        "link {} is {} but joins {} to {}",
                        link.link_id, link.edge_kind, link.from_ref.kind, link.to_ref.kind
                    ),
                    ids: vec![link.link_id.clone(), link.from_ref.id.clone(), link.to_ref.id.clone()],
                });
            }
            for end in [&link.from_ref, &link.to_ref] {
                if !ids.contains(end) {
                    defects.push(Defect {
                        kind: DefectKind::Dangling,
                        message: format!("link {} points at missing {end}", link.link_id),
                        ids: vec![link.link_id.clone(), end.id.clone()],
                    });
                }
            }
            if link.edge_kind == EdgeKind::SpecifiedBy && link.to_ref.kind == NodeKind::Contract {
                specifiers.entry(&link.to_ref.id).or_default().push(&link.from_ref.id);
            }
            if link.edge_kind == EdgeKind::DecomposesTo && link.to_ref.kind == NodeKind::Task {
                decomposed.insert(&link.to_ref.id);
            }
        }

        defects.extend(self.structural_cycles());

        for contract in &self.contracts {
            match specifiers.get(contract.contract_id.as_str()).map(Vec::len).unwrap_or(0) {
                0 => defects.push(Defect {
                    kind: DefectKind::OrphanContract,
                    message: format!("contract {} has no specified_by link", contract.contract_id),
                    ids: vec![contract.contract_id.clone()],
                }),
                1 => {}
                _ => {
                    let mut ids = vec![contract.contract_id.clone()];
                    ids.extend(specifiers[contract.contract_id.as_str()].iter().map(|s| s.to_string()));
                    defects.push(Defect {
                        kind: DefectKind::MultipleSpecifiers,
                        message: format!("contract {} has several specified_by links", contract.contract_id),
                        ids,
                    });
                }
            }
        }

        for task in &self.tasks {
            if self.intent(&task.intent_id).is_none() || !decomposed.contains(task.task_id.as_str()) {
                defects.push(Defect {
                    kind: DefectKind::TaskWithoutIntent,
                    message: format!("task {} is not decomposed from intent {}", task.task_id, task.intent_id),
                    ids: vec![task.task_id.clone(), task.intent_id.clone()],
                });
            }
        }
        defects
    }

    /// One defect per strongly connected component of the structural edges
    /// that contains a cycle.
    fn structural_cycles(&self) -> Vec<Defect> {
        let mut graph: DiGraph<&NodeRef, ()> = DiGraph::new();
        let mut index: BTreeMap<&NodeRef, NodeIndex> = BTreeMap::new();
        let mut self_loops = BTreeSet::new();
        for link in self.links.iter().filter(|l| l.edge_kind.structural()) {
            let a = *index.entry(&link.from_ref).or_insert_with(|| graph.add_node(&link.from_ref));
            let b = *index.entry(&link.to_ref).or_insert_with(|| graph.add_node(&link.to_ref));
            graph.add_edge(a, b, ());
            if a == b {
                self_loops.insert(a);
            }
        }
        let mut out = Vec::new();
        for component in petgraph::algo::tarjan_scc(&graph) {
            if component.len() > 1 || self_loops.contains(&component[0]) {
                let mut ids: Vec<String> = component.iter().map(|i| graph[*i].id.clone()).collect();
                ids.sort();
                out.push(Defect {
                    kind: DefectKind::Cycle,
                    message: format!("structural links form a cycle through {}", ids.join(", ")),
                    ids,
                });
            }
        }
        out.sort_by(|a, b| a.ids.cmp(&b.ids));
        out
    }
}

struct LinkIndex {
    triples: HashSet<(NodeRef, NodeRef, EdgeKind)>,
    by_triple: BTreeMap<(NodeRef, NodeRef, EdgeKind), String>,
    specified: BTreeMap<String, String>,
}

impl LinkIndex {
    fn new(project: &Project) -> Self {
        let mut index = LinkIndex { triples: HashSet::new(), by_triple: BTreeMap::new(), specified: BTreeMap::new() };
        for link in &project.links {
            index.record(link);
        }
        index
    }

    fn record(&mut self, link: &TraceLink) {
        let key = (link.from_ref.clone(), link.to_ref.clone(), link.edge_kind);
        if self.triples.insert(key.clone()) {
            self.by_triple.insert(key, link.link_id.clone());
        }
        if link.edge_kind == EdgeKind::SpecifiedBy {
            self.specified.entry(link.to_ref.id.clone()).or_insert_with(|| link.from_ref.id.clone());
        }
    }

    fn link(
        &mut self,
        project: &mut Project,
        from: &NodeRef,
        to: &NodeRef,
        edge: EdgeKind,
    ) -> Result<String, TraceError> {
        let (from_kind, to_kind) = edge.endpoints();
        if from.kind != from_kind || to.kind != to_kind {
            return Err(TraceError::KindMismatch { edge, from: from.clone(), to: to.clone() });
        }
        for end in [from, to] {
            if !project.node_exists(end) {
                return Err(TraceError::Dangling(end.clone()));
            }
        }
        let key = (from.clone(), to.clone(), edge);
        if let Some(id) = self.by_triple.get(&key) {
            return Ok(id.clone());
        }
        if edge == EdgeKind::SpecifiedBy {
            if let Some(existing) = self.specified.get(&to.id) {
                return Err(TraceError::AlreadySpecified { contract: to.id.clone(), existing: existing.clone() });
            }
        }
        let link = TraceLink { link_id: new_id("link"), from_ref: from.clone(), to_ref: to.clone(), edge_kind: edge };
        self.record(&link);
        let id = link.link_id.clone();
        project.links.push(link);
        Ok(id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn project_with_task() -> (Project, String, String) {
        let mut p = Project::default();
        let intent = p.add_intent("Build an ATM Java project for me").unwrap();
        let mut draft = TaskDraft::new("Account constructor", TaskUnitKind::Constructor);
        draft.order_index = Some(0);
        let task = p.add_task(&intent, draft).unwrap();
        (p, intent, task)
    }

    #[test]
    fn add_task_validates_and_links() {
        let (mut p, intent, task) = project_with_task();
        assert_eq!(p.task(&task).unwrap().key, "account-constructor");
        assert_eq!(p.links.len(), 1);
        assert_eq!(
            p.add_task(&intent, TaskDraft::new("", TaskUnitKind::Method)).unwrap_err(),
            TraceError::Validation("task title is empty".into())
        );
        let mut dup = TaskDraft::new("Withdraw", TaskUnitKind::Method);
        dup.order_index = Some(0);
        assert!(matches!(p.add_task(&intent, dup), Err(TraceError::Validation(_))));
        assert!(p.check_integrity().is_empty());
    }

    #[test]
    fn link_is_idempotent_and_kind_checked() {
        let (mut p, intent, task) = project_with_task();
        let i = NodeRef::new(NodeKind::Intent, &intent);
        let t = NodeRef::new(NodeKind::Task, &task);
        let first = p.links[0].link_id.clone();
        assert_eq!(p.link(&i, &t, EdgeKind::DecomposesTo).unwrap(), first);
        assert!(matches!(p.link(&t, &i, EdgeKind::DecomposesTo), Err(TraceError::KindMismatch { .. })));
        let ghost = NodeRef::new(NodeKind::Task, "task_missing");
        assert_eq!(p.link(&i, &ghost, EdgeKind::DecomposesTo).unwrap_err(), TraceError::Dangling(ghost));
    }

    #[test]
    fn lineage_of_isolated_and_unknown() {
        let mut p = Project::default();
        let lone = p.add_intent("something").unwrap();
        let r = NodeRef::new(NodeKind::Intent, &lone);
        let lineage = p.lineage(&r).unwrap();
        assert_eq!(lineage.nodes, vec![r]);
        assert!(lineage.links.is_empty());
        assert_eq!(
            p.lineage(&NodeRef::new(NodeKind::Intent, "nope")).unwrap_err(),
            TraceError::UnknownNode("nope".into())
        );
    }

    #[test]
    fn injected_cycle_is_reported_once() {
        let (mut p, intent, task) = project_with_task();
        p.links.push(TraceLink {
            link_id: "link_injected".into(),
            from_ref: NodeRef::new(NodeKind::Task, &task),
            to_ref: NodeRef::new(NodeKind::Intent, &intent),
            edge_kind: EdgeKind::DecomposesTo,
        });
        let cycles: Vec<_> = p.check_integrity().into_iter().filter(|d| d.kind == DefectKind::Cycle).collect();
        assert_eq!(cycles.len(), 1);
        let mut expected = vec![intent, task];
        expected.sort();
        assert_eq!(cycles[0].ids, expected);
    }

    #[test]
    fn slugs() {
        assert_eq!(slugify("Account constructor"), "account-constructor");
        assert_eq!(slugify("  --Withdraw (amount)!"), "withdraw-amount");
        assert_eq!(slugify("???"), "task");
    }
}
