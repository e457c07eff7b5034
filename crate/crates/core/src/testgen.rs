//! Turns approved contracts into test plans: precondition-satisfying inputs
//! checked against postconditions, and inputs that break one precondition
//! and must be rejected.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::{Param, UnitSignature};
use crate::lang::{evaluate, extract_atoms, ClauseKind, ContractClause, Env, EvalOutcome, SemanticType, Value};
use crate::ids::new_id;
use crate::project::Project;
use crate::registry::RegistryError;
use crate::trace::{EdgeKind, NodeKind, NodeRef, TraceError};

pub const MAX_CONSECUTIVE_REJECTIONS: u32 = 10_000;

const DEFAULT_BOUND: f64 = 1e6;

/// How values for one parameter are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Domain {
    Int { lo: i64, hi: i64 },
    Decimal { lo: f64, hi: f64, specials: Vec<Value> },
    Text { min_len: usize, max_len: usize, specials: Vec<Value> },
    Bool,
}

impl Domain {
    pub fn default_for(ty: SemanticType) -> Domain {
        match ty {
            SemanticType::Int => Domain::Int { lo: -(DEFAULT_BOUND as i64), hi: DEFAULT_BOUND as i64 },
            SemanticType::Decimal => Domain::Decimal {
                lo: -DEFAULT_BOUND,
                hi: DEFAULT_BOUND,
                specials: vec![
                    Value::Decimal(f64::NAN),
                    Value::Decimal(f64::INFINITY),
                    Value::Decimal(f64::NEG_INFINITY),
                    Value::Decimal(-0.0),
                ],
            },
            SemanticType::Text => Domain::Text { min_len: 0, max_len: 32, specials: vec![Value::Text(String::new())] },
            SemanticType::Bool => Domain::Bool,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            Domain::Int { lo, hi } if lo > hi => Err(format!("int domain lo {lo} > hi {hi}")),
            Domain::Decimal { lo, hi, .. } if !(lo <= hi) => Err(format!("decimal domain lo {lo} > hi {hi}")),
            Domain::Text { min_len, max_len, .. } if min_len > max_len => {
                Err(format!("text domain min_len {min_len} > max_len {max_len}"))
            }
            _ => Ok(()),
        }
    }

    fn specials(&self) -> &[Value] {
        match self {
            Domain::Decimal { specials, .. } | Domain::Text { specials, .. } => specials,
            Domain::Int { .. } | Domain::Bool => &[],
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Value {
        match self {
            Domain::Int { lo, hi } => Value::Int(rng.random_range(*lo..=*hi)),
            Domain::Decimal { lo, hi, .. } => Value::Decimal(if lo == hi { *lo } else { rng.random_range(*lo..=*hi) }),
            Domain::Text { min_len, max_len, .. } => {
                let len = rng.random_range(*min_len..=*max_len);
                Value::Text((0..len).map(|_| rng.random_range(0x20u8..=0x7e) as char).collect())
            }
            Domain::Bool => Value::Bool(rng.random()),
        }
    }
}

/// Domains for every parameter of a unit, defaults unless overridden.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    pub domains: BTreeMap<String, Domain>,
}

impl DomainSpec {
    pub fn for_unit(unit: &UnitSignature, overrides: &BTreeMap<String, Domain>) -> Result<DomainSpec, TestgenError> {
        let mut domains = BTreeMap::new();
        for Param { name, ty } in &unit.params {
            let domain = overrides.get(name).cloned().unwrap_or_else(|| Domain::default_for(*ty));
            domain.validate().map_err(|e| TestgenError::InvalidDomain(format!("{name}: {e}")))?;
            domains.insert(name.clone(), domain);
        }
        Ok(DomainSpec { domains })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestgenConfig {
    pub n_valid: usize,
    pub n_violating_per_clause: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub domains: BTreeMap<String, Domain>,
}

impl Default for TestgenConfig {
    fn default() -> Self {
        TestgenConfig { n_valid: 50, n_violating_per_clause: 5, seed: 7, domains: BTreeMap::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Expectation {
    MustSatisfyPosts,
    MustBeRejected {
        target_clause_id: String,
        /// Other preconditions this input also breaks. Empty unless no input
        /// breaking the target alone was found.
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        co_violation: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    pub case_id: String,
    pub task_id: String,
    pub unit_name: String,
    pub args: BTreeMap<String, Value>,
    pub expectation: Expectation,
    /// Seed of the generator stream that produced this case.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Error)]
pub struct SaturationError {
    pub clause_id: Option<String>,
    pub clause_text: Option<String>,
    pub attempts: u32,
    pub rejections: BTreeMap<String, u32>,
}

impl fmt::Display for SaturationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "no acceptable input after {} consecutive draws", self.attempts)?;
        match (&self.clause_id, &self.clause_text) {
            (Some(id), Some(text)) => write!(f, "; most rejections came from {id} `{text}`"),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestPlan {
    pub plan_id: String,
    pub task_id: String,
    pub unit_name: String,
    pub generation_config: TestgenConfig,
    /// The approved clauses the plan was built from.
    pub clause_ids: Vec<String>,
    /// Cases in execution order; the cases themselves live in `test_cases`.
    pub case_ids: Vec<String>,
    /// Preconditions no violating input could be found for.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub saturations: Vec<SaturationError>,
    pub created_at: DateTime<Utc>,
}

/// A plan with its cases inlined, for external runners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanExport {
    #[serde(flatten)]
    pub plan: TestPlan,
    pub cases: Vec<TestCase>,
}

#[derive(Debug, Error)]
pub enum TestgenError {
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("task `{0}` has no unit signature to generate inputs for")]
    NoSignature(String),
    #[error("no approved preconditions to violate")]
    NoPreconditions,
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("test generation saturated: {0}")]
    Saturation(#[from] SaturationError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// Boundary candidates for `param`: `k-1, k, k+1` for integer parameters,
/// `k` and its two neighbouring doubles for decimal ones, for every
/// comparison atom on `param`. Sorted, then the domain's specials.
pub fn boundary_values(clauses: &[ContractClause], param: &str, domain: &Domain) -> Vec<Value> {
    let mut numeric: Vec<Value> = Vec::new();
    let mut other: Vec<Value> = Vec::new();
    for clause in clauses.iter().filter(|c| c.kind == ClauseKind::Precondition) {
        for atom in extract_atoms(&clause.expr).into_iter().filter(|a| a.ident == param) {
            match (domain, atom.constant) {
                (Domain::Int { .. }, Value::Int(k)) => {
                    numeric.extend([k.checked_sub(1), Some(k), k.checked_add(1)].into_iter().flatten().map(Value::Int));
                }
                (Domain::Int { .. }, Value::Decimal(k)) if k.is_finite() => {
                    if k.fract() == 0.0 && k.abs() < 9.2e18 {
                        let k = k as i64;
                        numeric.extend([k.checked_sub(1), Some(k), k.checked_add(1)].into_iter().flatten().map(Value::Int));
                    } else if k.abs() < 9.2e18 {
                        numeric.extend([Value::Int(k.floor() as i64), Value::Int(k.ceil() as i64)]);
                    }
                }
                (Domain::Decimal { .. }, Value::Int(k)) => {
                    let k = k as f64;
                    numeric.extend([k.next_down(), k, k.next_up()].map(Value::Decimal));
                }
                (Domain::Decimal { .. }, Value::Decimal(k)) if k.is_finite() => {
                    numeric.extend([k.next_down(), k, k.next_up()].map(Value::Decimal));
                }
                (Domain::Text { .. }, v @ Value::Text(_)) | (Domain::Bool, v @ Value::Bool(_)) => other.push(v),
                _ => {}
            }
        }
    }
    numeric.sort_by(|a, b| match (a, b) {
        (Value::Int(x), Value::Int(y)) => x.cmp(y),
        (Value::Decimal(x), Value::Decimal(y)) => x.total_cmp(y),
        _ => std::cmp::Ordering::Equal,
    });
    let mut out: Vec<Value> = Vec::new();
    for v in numeric.into_iter().chain(other).chain(domain.specials().iter().cloned()) {
        if !out.iter().any(|seen| seen.identical(&v)) {
            out.push(v);
        }
    }
    out
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed for case `index` of generator stream `stream`.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(stream)) ^ index)
}

/// Draws inputs for one unit under a fixed set of approved clauses.
pub struct CaseGenerator<'a> {
    task_id: &'a str,
    unit: &'a UnitSignature,
    preconditions: Vec<&'a ContractClause>,
    domains: DomainSpec,
    boundaries: BTreeMap<String, Vec<Value>>,
}

enum Verdicts {
    AllHold,
    Failing(Vec<usize>),
}

impl<'a> CaseGenerator<'a> {
    pub fn new(
        task_id: &'a str,
        unit: &'a UnitSignature,
        clauses: &'a [ContractClause],
        domains: DomainSpec,
    ) -> CaseGenerator<'a> {
        let owned: Vec<ContractClause> = clauses.to_vec();
        let boundaries = domains
            .domains
            .iter()
            .map(|(name, domain)| (name.clone(), boundary_values(&owned, name, domain)))
            .collect();
        CaseGenerator {
            task_id,
            unit,
            preconditions: clauses.iter().filter(|c| c.kind == ClauseKind::Precondition).collect(),
            domains,
            boundaries,
        }
    }

    pub fn preconditions(&self) -> &[&'a ContractClause] {
        &self.preconditions
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> BTreeMap<String, Value> {
        let mut args = BTreeMap::new();
        for param in &self.unit.params {
            let domain = &self.domains.domains[&param.name];
            let boundary = &self.boundaries[&param.name];
            let value = if !boundary.is_empty() && rng.random_bool(0.5) {
                boundary[rng.random_range(0..boundary.len())].clone()
            } else {
                domain.draw(rng)
            };
            args.insert(param.name.clone(), value);
        }
        args
    }

    fn judge(&self, args: &BTreeMap<String, Value>) -> (Verdicts, Vec<bool>) {
        let env = Env::with_bindings(args.clone());
        let violated: Vec<bool> = self
            .preconditions
            .iter()
            .map(|c| !matches!(evaluate(&c.expr, &env), EvalOutcome::Holds))
            .collect();
        let failing: Vec<usize> = violated.iter().enumerate().filter(|(_, v)| **v).map(|(i, _)| i).collect();
        let verdict = if failing.is_empty() { Verdicts::AllHold } else { Verdicts::Failing(failing) };
        (verdict, violated)
    }

    fn case(&self, args: BTreeMap<String, Value>, expectation: Expectation, seed: u64) -> TestCase {
        TestCase {
            case_id: new_id(NodeKind::TestCase.id_prefix()),
            task_id: self.task_id.to_string(),
            unit_name: self.unit.unit_name.clone(),
            args,
            expectation,
            seed,
        }
    }

    fn saturation(&self, counts: &[u32]) -> SaturationError {
        let worst = counts.iter().enumerate().filter(|(_, c)| **c > 0).max_by_key(|(i, c)| (**c, std::cmp::Reverse(*i)));
        SaturationError {
            clause_id: worst.map(|(i, _)| self.preconditions[i].clause_id.clone()),
            clause_text: worst.map(|(i, _)| self.preconditions[i].normalized_text()),
            attempts: MAX_CONSECUTIVE_REJECTIONS,
            rejections: self
                .preconditions
                .iter()
                .zip(counts)
                .filter(|(_, n)| **n > 0)
                .map(|(c, n)| (c.clause_id.clone(), *n))
                .collect(),
        }
    }

    /// `n` inputs satisfying every precondition, by rejection sampling.
    pub fn generate_valid(&self, n: usize, seed: u64) -> Result<Vec<TestCase>, SaturationError> {
        let mut out = Vec::with_capacity(n);
        for index in 0..n {
            let case_seed = derive_seed(seed, 0, index as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(case_seed);
            let mut counts = vec![0u32; self.preconditions.len()];
            let mut accepted = None;
            for _ in 0..MAX_CONSECUTIVE_REJECTIONS {
                let args = self.draw(&mut rng);
                match self.judge(&args).0 {
                    Verdicts::AllHold => {
                        accepted = Some(args);
                        break;
                    }
                    Verdicts::Failing(failing) => failing.into_iter().for_each(|i| counts[i] += 1),
                }
            }
            match accepted {
                Some(args) => out.push(self.case(args, Expectation::MustSatisfyPosts, case_seed)),
                None => return Err(self.saturation(&counts)),
            }
        }
        Ok(out)
    }

    /// For each precondition, `per_clause` inputs that break it while every
    /// other precondition holds. When no such input turns up, inputs that
    /// break it together with others are emitted with a co-violation note;
    /// when even that fails the clause's saturation is returned instead.
    pub fn generate_violating(
        &self,
        per_clause: usize,
        seed: u64,
    ) -> Result<(Vec<TestCase>, Vec<SaturationError>), TestgenError> {
        if self.preconditions.is_empty() {
            return Err(TestgenError::NoPreconditions);
        }
        let mut cases = Vec::new();
        let mut saturations = Vec::new();
        'clauses: for (target, clause) in self.preconditions.iter().enumerate() {
            for index in 0..per_clause {
                let case_seed = derive_seed(seed, 1 + target as u64, index as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(case_seed);
                let mut counts = vec![0u32; self.preconditions.len()];
                let mut found = None;
                let mut fallback = None;
                for _ in 0..MAX_CONSECUTIVE_REJECTIONS {
                    let args = self.draw(&mut rng);
                    let (_, violated) = self.judge(&args);
                    if !violated[target] {
                        counts[target] += 1;
                        continue;
                    }
                    let others: Vec<usize> = (0..violated.len()).filter(|i| *i != target && violated[*i]).collect();
                    if others.is_empty() {
                        found = Some(args);
                        break;
                    }
                    others.iter().for_each(|i| counts[*i] += 1);
                    if fallback.is_none() {
                        fallback = Some((args, others));
                    }
                }
                let expectation = |co_violation: Vec<String>| Expectation::MustBeRejected {
                    target_clause_id: clause.clause_id.clone(),
                    co_violation,
                };
                match (found, fallback) {
                    (Some(args), _) => cases.push(self.case(args, expectation(Vec::new()), case_seed)),
                    (None, Some((args, others))) => {
                        let ids = others.into_iter().map(|i| self.preconditions[i].clause_id.clone()).collect();
                        cases.push(self.case(args, expectation(ids), case_seed));
                    }
                    (None, None) => {
                        let mut sat = self.saturation(&counts);
                        sat.clause_id = Some(clause.clause_id.clone());
                        sat.clause_text = Some(clause.normalized_text());
                        saturations.push(sat);
                        continue 'clauses;
                    }
                }
            }
        }
        Ok((cases, saturations))
    }
}

impl Project {
    pub fn plan(&self, plan_id: &str) -> Option<&TestPlan> {
        self.test_plans.iter().find(|p| p.plan_id == plan_id)
    }

    pub fn latest_plan(&self, task_id: &str) -> Option<&TestPlan> {
        self.test_plans.iter().rev().find(|p| p.task_id == task_id)
    }

    pub fn test_case(&self, case_id: &str) -> Option<&TestCase> {
        self.test_cases.iter().find(|c| c.case_id == case_id)
    }

    /// The plan's cases in plan order.
    pub fn plan_cases(&self, plan: &TestPlan) -> Vec<&TestCase> {
        let by_id: HashMap<&str, &TestCase> = self.test_cases.iter().map(|c| (c.case_id.as_str(), c)).collect();
        plan.case_ids.iter().filter_map(|id| by_id.get(id.as_str()).copied()).collect()
    }

    pub fn export_plan(&self, plan_id: &str) -> Option<PlanExport> {
        let plan = self.plan(plan_id)?;
        Some(PlanExport { plan: plan.clone(), cases: self.plan_cases(plan).into_iter().cloned().collect() })
    }

    /// The signature test inputs are drawn for: the task's own, else the
    /// single unit of its latest generated code.
    pub fn unit_for_task(&self, task_id: &str) -> Option<UnitSignature> {
        let task = self.task(task_id)?;
        if let Some(unit) = &task.unit {
            return Some(unit.clone());
        }
        let code = self.latest_code_unit(task_id)?;
        match code.subject.units.as_slice() {
            [only] => Some(only.clone()),
            _ => None,
        }
    }

    /// Generates and stores a plan for the task's approved contracts and
    /// links every case to the clauses it exercises. A task without approved
    /// contracts gets an empty plan.
    pub fn build_plan(&mut self, task_id: &str, config: &TestgenConfig) -> Result<String, TestgenError> {
        if self.task(task_id).is_none() {
            return Err(TestgenError::UnknownTask(task_id.into()));
        }
        let clauses = self.effective_contracts(task_id)?;
        let unit = self.unit_for_task(task_id).ok_or_else(|| TestgenError::NoSignature(task_id.into()))?;
        let domains = DomainSpec::for_unit(&unit, &config.domains)?;
        let generator = CaseGenerator::new(task_id, &unit, &clauses, domains);

        let (mut cases, mut saturations) = (Vec::new(), Vec::new());
        if !clauses.is_empty() {
            cases = generator.generate_valid(config.n_valid, config.seed)?;
            if !generator.preconditions().is_empty() {
                let (violating, sats) = generator.generate_violating(config.n_violating_per_clause, config.seed)?;
                cases.extend(violating);
                saturations = sats;
            }
        }

        let plan_id = new_id("plan");
        let contract_refs: Vec<NodeRef> = clauses.iter().map(|c| NodeRef::new(NodeKind::Contract, &c.clause_id)).collect();
        let mut pairs: Vec<(NodeRef, NodeRef)> = Vec::new();
        for case in &cases {
            let case_ref = NodeRef::new(NodeKind::TestCase, &case.case_id);
            match &case.expectation {
                Expectation::MustSatisfyPosts => {
                    pairs.extend(contract_refs.iter().map(|c| (c.clone(), case_ref.clone())));
                }
                Expectation::MustBeRejected { target_clause_id, .. } => {
                    pairs.push((NodeRef::new(NodeKind::Contract, target_clause_id), case_ref));
                }
            }
        }
        self.test_plans.push(TestPlan {
            plan_id: plan_id.clone(),
            task_id: task_id.to_string(),
            unit_name: unit.unit_name.clone(),
            generation_config: config.clone(),
            clause_ids: clauses.iter().map(|c| c.clause_id.clone()).collect(),
            case_ids: cases.iter().map(|c| c.case_id.clone()).collect(),
            saturations,
            created_at: Utc::now(),
        });
        self.test_cases.extend(cases);
        self.link_many(pairs.iter().map(|(a, b)| (a, b)), EdgeKind::TestedBy)?;
        Ok(plan_id)
    }
}
