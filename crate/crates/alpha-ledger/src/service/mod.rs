//! Interactive sessions: an investigator proposes hypotheses one at a time,
//! receives a cost-aware recommendation, and reports outcomes. Each session is
//! an append-only JSON-lines event log; state is a fold over that log.

pub mod http;

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use alpha_ledger_core::{
    classify_regime, expected_increment, init_wealth, solve_finite_horizon, solve_one_step,
    CaeroSolution, HorizonProblem, HypothesisSpec, Outcome, Regime, SolverConfig, TestParams,
    WealthState,
};
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;

use crate::error::{Error, IoContext, Result};

/// Environment variable naming the directory that holds session logs.
pub const DATA_DIR_ENV: &str = "ALPHA_LEDGER_DATA_DIR";

/// Maximum number of rows in a what-if table.
const WHAT_IF_ROWS: usize = 24;

/// Slack allowed when re-checking the reward caps before applying an outcome.
const CAP_SLACK: f64 = 1e-12;

/// One line of a session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    /// Milliseconds since the Unix epoch when the event was appended.
    pub at_ms: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    Created {
        alpha_global: f64,
        eta: f64,
        budget: f64,
        solver_config: SolverConfig,
    },
    Proposed {
        proposal: ProposalResponse,
        spec: HypothesisSpec,
    },
    OutcomeRecorded {
        proposal_id: String,
        outcome: Outcome,
        response: OutcomeResponse,
    },
    Skipped {
        proposal_id: String,
        response: SkipResponse,
    },
}

/// One row of the what-if table: the recommendation's ante and level
/// re-evaluated at a different sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WhatIfRow {
    pub n: f64,
    pub alpha_j: f64,
    pub rho: f64,
    pub psi: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalResponse {
    pub session_id: String,
    pub proposal_id: String,
    pub skipped: bool,
    pub diagnostic: Option<String>,
    /// The solver's continuous optimum.
    pub solution: CaeroSolution,
    /// Parameters to execute: integer n, ρ recomputed, ψ re-derived.
    pub recommended: Option<TestParams>,
    pub n_continuous: f64,
    pub n_executed: Option<f64>,
    pub regime: Option<Regime>,
    pub regime_note: Option<String>,
    pub expected_increment: Option<f64>,
    /// Later steps of a finite-horizon plan (first step excluded).
    pub plan_tail: Vec<TestParams>,
    pub what_if: Vec<WhatIfRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeResponse {
    pub session_id: String,
    pub proposal_id: String,
    pub rejected: bool,
    pub p_value: Option<f64>,
    pub delta_w_alpha: f64,
    pub w_alpha: f64,
    pub w_dollar: f64,
    pub j: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipResponse {
    pub session_id: String,
    pub proposal_id: String,
    pub skipped: bool,
    pub w_alpha: f64,
    pub w_dollar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSessionRequest {
    #[serde(default = "default_alpha")]
    pub alpha_global: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_budget")]
    pub budget: f64,
    #[serde(default)]
    pub solver_config: SolverConfig,
}

fn default_alpha() -> f64 {
    0.05
}
fn default_eta() -> f64 {
    0.95
}
fn default_budget() -> f64 {
    1000.0
}

impl Default for CreateSessionRequest {
    fn default() -> Self {
        CreateSessionRequest {
            alpha_global: default_alpha(),
            eta: default_eta(),
            budget: default_budget(),
            solver_config: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposeRequest {
    pub spec: HypothesisSpec,
    #[serde(default = "one")]
    pub horizon: usize,
    /// Specs of the hypotheses after this one, for horizon > 1.
    #[serde(default)]
    pub future_specs: Vec<HypothesisSpec>,
}

fn one() -> usize {
    1
}

/// Either a raw p-value (rejection decided by p ≤ α_j) or a decided flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRequest {
    #[serde(default)]
    pub p_value: Option<f64>,
    #[serde(default)]
    pub rejected: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingSummary {
    pub proposal_id: String,
    pub spec: HypothesisSpec,
    pub recommended: TestParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub alpha_global: f64,
    pub eta: f64,
    pub initial_w_alpha: f64,
    pub budget: f64,
    pub w_alpha: f64,
    pub w_dollar: f64,
    pub j: u64,
    pub rejections: u64,
    pub solver_config: SolverConfig,
    pub pending: Option<PendingSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    /// Number of applied tests.
    pub j: u64,
    pub w_alpha: f64,
    pub w_dollar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryResponse {
    pub session_id: String,
    pub events: Vec<Event>,
    /// Initial balances followed by the balances after every outcome.
    pub trajectory: Vec<TrajectoryPoint>,
}

#[derive(Debug, Clone)]
struct Pending {
    proposal_id: String,
    spec: HypothesisSpec,
    recommended: TestParams,
}

#[derive(Debug, Clone)]
enum Resolution {
    /// Proposals the solver skipped; never pending.
    NotPending,
    Outcome(OutcomeResponse),
    Skipped(SkipResponse),
}

/// In-memory fold of a session log.
#[derive(Debug, Clone)]
pub struct Session {
    id: String,
    path: PathBuf,
    wealth: WealthState,
    solver_config: SolverConfig,
    pending: Option<Pending>,
    resolved: HashMap<String, Resolution>,
    events: Vec<Event>,
}

impl Session {
    fn fresh(id: String, path: PathBuf, created: &Event) -> Result<Self> {
        let EventKind::Created {
            alpha_global,
            eta,
            budget,
            solver_config,
        } = &created.kind
        else {
            return Err(Error::CorruptLog {
                path,
                line: 1,
                message: "first event is not a creation".into(),
            });
        };
        Ok(Session {
            id,
            path,
            wealth: init_wealth(*alpha_global, *eta, *budget)?,
            solver_config: *solver_config,
            pending: None,
            resolved: HashMap::new(),
            events: vec![created.clone()],
        })
    }

    /// Applies one later event to the fold.
    fn apply(&mut self, event: &Event) -> Result<()> {
        match &event.kind {
            EventKind::Created { .. } => {
                return Err(Error::Validation("duplicate creation event".into()))
            }
            EventKind::Proposed { proposal, spec } => {
                if let Some(p) = &self.pending {
                    return Err(Error::Conflict(format!(
                        "proposal {} is still pending",
                        p.proposal_id
                    )));
                }
                match (proposal.skipped, proposal.recommended) {
                    (false, Some(recommended)) => {
                        self.pending = Some(Pending {
                            proposal_id: proposal.proposal_id.clone(),
                            spec: *spec,
                            recommended,
                        })
                    }
                    _ => {
                        self.resolved
                            .insert(proposal.proposal_id.clone(), Resolution::NotPending);
                    }
                }
            }
            EventKind::OutcomeRecorded {
                proposal_id,
                outcome,
                response,
            } => {
                let p = self.take_pending(proposal_id)?;
                self.wealth.apply_outcome(&p.spec, &p.recommended, outcome)?;
                self.resolved
                    .insert(proposal_id.clone(), Resolution::Outcome(response.clone()));
            }
            EventKind::Skipped {
                proposal_id,
                response,
            } => {
                self.take_pending(proposal_id)?;
                self.resolved
                    .insert(proposal_id.clone(), Resolution::Skipped(response.clone()));
            }
        }
        self.events.push(event.clone());
        Ok(())
    }

    fn take_pending(&mut self, proposal_id: &str) -> Result<Pending> {
        match &self.pending {
            Some(p) if p.proposal_id == proposal_id => Ok(self.pending.take().expect("checked")),
            Some(p) => Err(Error::Conflict(format!(
                "proposal {proposal_id} is not the pending proposal ({})",
                p.proposal_id
            ))),
            None => Err(Error::Conflict(format!(
                "proposal {proposal_id} is not pending"
            ))),
        }
    }

    /// Appends `kind` to the log, then folds it in. The fold is validated on
    /// a copy first so a rejected event never reaches the file.
    fn commit(&mut self, kind: EventKind) -> Result<()> {
        let event = Event {
            seq: self.events.len() as u64,
            at_ms: now_ms(),
            kind,
        };
        let mut next = self.clone();
        next.apply(&event)?;
        append_line(&self.path, &event)?;
        *self = next;
        Ok(())
    }

    pub fn wealth(&self) -> &WealthState {
        &self.wealth
    }

    pub fn summary(&self) -> SessionSummary {
        SessionSummary {
            id: self.id.clone(),
            alpha_global: self.wealth.alpha_global(),
            eta: self.wealth.eta(),
            initial_w_alpha: self.wealth.initial_alpha_wealth(),
            budget: self.wealth.initial_budget(),
            w_alpha: self.wealth.w_alpha(),
            w_dollar: self.wealth.w_dollar(),
            j: self.wealth.j(),
            rejections: self.wealth.rejection_counts().0,
            solver_config: self.solver_config,
            pending: self.pending.as_ref().map(|p| PendingSummary {
                proposal_id: p.proposal_id.clone(),
                spec: p.spec,
                recommended: p.recommended,
            }),
        }
    }

    pub fn history(&self) -> HistoryResponse {
        let mut trajectory = vec![TrajectoryPoint {
            j: 0,
            w_alpha: self.wealth.initial_alpha_wealth(),
            w_dollar: self.wealth.initial_budget(),
        }];
        for e in &self.events {
            if let EventKind::OutcomeRecorded { response, .. } = &e.kind {
                trajectory.push(TrajectoryPoint {
                    j: response.j,
                    w_alpha: response.w_alpha,
                    w_dollar: response.w_dollar,
                });
            }
        }
        HistoryResponse {
            session_id: self.id.clone(),
            events: self.events.clone(),
            trajectory,
        }
    }

    fn propose(&mut self, req: &ProposeRequest) -> Result<ProposalResponse> {
        if let Some(p) = &self.pending {
            return Err(Error::Conflict(format!(
                "proposal {} is still pending",
                p.proposal_id
            )));
        }
        req.spec.validate()?;
        for s in &req.future_specs {
            s.validate()?;
        }
        if req.horizon == 0 || req.horizon > alpha_ledger_core::caero::MAX_HORIZON {
            return Err(Error::Validation("horizon must lie in 1..=5".into()));
        }
        let alpha = self.wealth.alpha_global();
        if !self.wealth.can_continue(0.0, req.spec.cost) {
            return Err(Error::Conflict(
                "wealth is exhausted: no α-wealth or not enough budget for one sample".into(),
            ));
        }
        let (solution, plan_tail) = if req.horizon > 1 && !req.future_specs.is_empty() {
            let mut specs = vec![req.spec];
            specs.extend(req.future_specs.iter().take(req.horizon - 1).copied());
            let problem = HorizonProblem {
                specs,
                wealth: self.wealth.clone(),
            };
            let mut plan = solve_finite_horizon(&problem, &self.solver_config)?;
            let first = plan.remove(0);
            (first, plan.into_iter().map(|s| s.params).collect())
        } else {
            (
                solve_one_step(&req.spec, &self.wealth, &self.solver_config)?,
                Vec::new(),
            )
        };
        let recommended = solution.execute(&req.spec, alpha, self.wealth.w_dollar());
        let mut diagnostic = solution.diagnostic.clone();
        if !solution.skipped && recommended.is_none() {
            diagnostic = Some("budget does not cover one sample".into());
        }
        let skipped = recommended.is_none();
        let (regime, regime_note, increment) = match &recommended {
            Some(p) => {
                let r = classify_regime(&solution.params, req.spec.q, alpha);
                (
                    Some(r.regime),
                    r.note.map(str::to_string),
                    Some(expected_increment(p, req.spec.q)),
                )
            }
            None => (None, None, None),
        };
        let what_if = match &recommended {
            Some(p) => what_if_table(&solution, p, &req.spec, alpha, &self.wealth, &self.solver_config),
            None => Vec::new(),
        };
        let proposal = ProposalResponse {
            session_id: self.id.clone(),
            proposal_id: uuid::Uuid::new_v4().simple().to_string(),
            skipped,
            diagnostic,
            n_continuous: solution.params.n,
            n_executed: recommended.map(|p| p.n),
            solution,
            recommended,
            regime,
            regime_note,
            expected_increment: increment,
            plan_tail,
            what_if,
        };
        self.commit(EventKind::Proposed {
            proposal: proposal.clone(),
            spec: req.spec,
        })?;
        Ok(proposal)
    }

    fn record_outcome(&mut self, proposal_id: &str, req: &OutcomeRequest) -> Result<OutcomeResponse> {
        match self.resolved.get(proposal_id) {
            Some(Resolution::Outcome(r)) => {
                // Retries are idempotent; a different outcome is not a retry.
                let same_p = req.p_value.is_none_or(|p| Some(p) == r.p_value);
                let same_r = req.rejected.is_none_or(|x| x == r.rejected);
                if same_p && same_r {
                    return Ok(r.clone());
                }
                return Err(Error::Conflict(format!(
                    "proposal {proposal_id} already has a different recorded outcome"
                )));
            }
            Some(Resolution::Skipped(_)) => {
                return Err(Error::Conflict(format!("proposal {proposal_id} was skipped")))
            }
            Some(Resolution::NotPending) => {
                return Err(Error::Conflict(format!(
                    "proposal {proposal_id} was not recommended for testing"
                )))
            }
            None => {}
        }
        let pending = match &self.pending {
            Some(p) if p.proposal_id == proposal_id => p.clone(),
            _ => {
                return Err(Error::Conflict(format!(
                    "proposal {proposal_id} is unknown or stale"
                )))
            }
        };
        let params = pending.recommended;
        let outcome = match (req.p_value, req.rejected) {
            (Some(p), None) => {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Validation(format!("p_value {p} is outside [0, 1]")));
                }
                Outcome::from_p_value(p, params.alpha_j)
            }
            (None, Some(r)) => Outcome::decided(r),
            _ => {
                return Err(Error::Validation(
                    "give exactly one of p_value and rejected".into(),
                ))
            }
        };
        params.check_caps(self.wealth.alpha_global(), CAP_SLACK)?;
        let after = self
            .wealth
            .clone()
            .applied(&pending.spec, &params, &outcome)?;
        let response = OutcomeResponse {
            session_id: self.id.clone(),
            proposal_id: proposal_id.to_string(),
            rejected: outcome.rejected,
            p_value: outcome.p_value,
            delta_w_alpha: after.w_alpha() - self.wealth.w_alpha(),
            w_alpha: after.w_alpha(),
            w_dollar: after.w_dollar(),
            j: after.j(),
        };
        self.commit(EventKind::OutcomeRecorded {
            proposal_id: proposal_id.to_string(),
            outcome,
            response: response.clone(),
        })?;
        Ok(response)
    }

    fn skip(&mut self, proposal_id: &str) -> Result<SkipResponse> {
        if let Some(Resolution::Skipped(r)) = self.resolved.get(proposal_id) {
            return Ok(r.clone());
        }
        let response = SkipResponse {
            session_id: self.id.clone(),
            proposal_id: proposal_id.to_string(),
            skipped: true,
            w_alpha: self.wealth.w_alpha(),
            w_dollar: self.wealth.w_dollar(),
        };
        self.commit(EventKind::Skipped {
            proposal_id: proposal_id.to_string(),
            response: response.clone(),
        })?;
        Ok(response)
    }
}

/// The recommendation's φ and α_j re-evaluated on a grid of integer sample
/// sizes up to the cap (the sample cap, the affordable count, or 4× the
/// recommended n, whichever is smallest). Always contains the recommended n.
fn what_if_table(
    solution: &CaeroSolution,
    recommended: &TestParams,
    spec: &HypothesisSpec,
    alpha: f64,
    wealth: &WealthState,
    cfg: &SolverConfig,
) -> Vec<WhatIfRow> {
    let affordable = (wealth.w_dollar() / spec.cost).floor();
    let mut cap = affordable.min((4.0 * recommended.n).max(10.0));
    if let Some(c) = cfg.n_cap {
        cap = cap.min(c.floor());
    }
    let cap = cap.max(recommended.n).max(1.0);
    let mut ns: Vec<f64> = if cap <= WHAT_IF_ROWS as f64 {
        (1..=cap as u64).map(|n| n as f64).collect()
    } else {
        (0..WHAT_IF_ROWS)
            .map(|i| (cap.ln() * i as f64 / (WHAT_IF_ROWS - 1) as f64).exp().round())
            .collect()
    };
    ns.push(recommended.n);
    ns.sort_by(f64::total_cmp);
    ns.dedup();
    ns.into_iter()
        .map(|n| {
            let p = alpha_ledger_core::caero::execute_at(&solution.params, spec, alpha, spec.q, n);
            WhatIfRow {
                n,
                alpha_j: p.alpha_j,
                rho: p.rho,
                psi: p.psi,
                cost: n * spec.cost,
            }
        })
        .collect()
}

fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Appends one event as a single write followed by a data sync.
fn append_line(path: &Path, event: &Event) -> Result<()> {
    let mut line = serde_json::to_vec(event)?;
    line.push(b'\n');
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .at(path)?;
    f.write_all(&line).at(path)?;
    f.sync_data().at(path)
}

/// Reads a session log. A final line without its newline is an interrupted
/// append: it is discarded and the file truncated to the last full line.
/// Any other unreadable line is an error.
fn load_session(id: &str, path: &Path) -> Result<Session> {
    let bytes = std::fs::read(path).at(path)?;
    let complete = match bytes.iter().rposition(|&b| b == b'\n') {
        Some(i) => i + 1,
        None => 0,
    };
    if complete < bytes.len() {
        let f = std::fs::OpenOptions::new().write(true).open(path).at(path)?;
        f.set_len(complete as u64).at(path)?;
        f.sync_data().at(path)?;
    }
    let text = std::str::from_utf8(&bytes[..complete]).map_err(|e| Error::CorruptLog {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })?;
    let mut session: Option<Session> = None;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let corrupt = |message: String| Error::CorruptLog {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let event: Event = serde_json::from_str(line).map_err(|e| corrupt(e.to_string()))?;
        match &mut session {
            None => session = Some(Session::fresh(id.to_string(), path.to_path_buf(), &event)?),
            Some(s) => s.apply(&event).map_err(|e| corrupt(e.to_string()))?,
        }
    }
    session.ok_or_else(|| Error::NotFound {
        what: "session",
        id: id.to_string(),
    })
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_hexdigit() || b == b'-')
}

/// Sessions on disk, loaded lazily and cached; one lock per session.
#[derive(Debug)]
pub struct SessionStore {
    dir: PathBuf,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
}

impl SessionStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).at(&dir)?;
        Ok(SessionStore {
            dir,
            sessions: Mutex::new(HashMap::new()),
        })
    }

    /// Opens the directory named by `ALPHA_LEDGER_DATA_DIR`, or `fallback`.
    pub fn from_env(fallback: impl Into<PathBuf>) -> Result<Self> {
        match std::env::var_os(DATA_DIR_ENV) {
            Some(d) => Self::open(PathBuf::from(d)),
            None => Self::open(fallback),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_of(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.jsonl"))
    }

    async fn get(&self, id: &str) -> Result<Arc<Mutex<Session>>> {
        let not_found = || Error::NotFound {
            what: "session",
            id: id.to_string(),
        };
        if !valid_id(id) {
            return Err(not_found());
        }
        let mut map = self.sessions.lock().await;
        if let Some(s) = map.get(id) {
            return Ok(s.clone());
        }
        let path = self.path_of(id);
        if !path.exists() {
            return Err(not_found());
        }
        let s = Arc::new(Mutex::new(load_session(id, &path)?));
        map.insert(id.to_string(), s.clone());
        Ok(s)
    }

    pub async fn create(&self, req: &CreateSessionRequest) -> Result<SessionSummary> {
        req.solver_config.validate()?;
        init_wealth(req.alpha_global, req.eta, req.budget)?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let path = self.path_of(&id);
        let created = Event {
            seq: 0,
            at_ms: now_ms(),
            kind: EventKind::Created {
                alpha_global: req.alpha_global,
                eta: req.eta,
                budget: req.budget,
                solver_config: req.solver_config,
            },
        };
        let session = Session::fresh(id.clone(), path.clone(), &created)?;
        append_line(&path, &created)?;
        let summary = session.summary();
        self.sessions
            .lock()
            .await
            .insert(id, Arc::new(Mutex::new(session)));
        Ok(summary)
    }

    pub async fn summary(&self, id: &str) -> Result<SessionSummary> {
        Ok(self.get(id).await?.lock().await.summary())
    }

    pub async fn history(&self, id: &str) -> Result<HistoryResponse> {
        Ok(self.get(id).await?.lock().await.history())
    }

    pub async fn wealth(&self, id: &str) -> Result<WealthState> {
        Ok(self.get(id).await?.lock().await.wealth().clone())
    }

    pub async fn propose(&self, id: &str, req: &ProposeRequest) -> Result<ProposalResponse> {
        self.get(id).await?.lock().await.propose(req)
    }

    pub async fn record_outcome(
        &self,
        id: &str,
        proposal_id: &str,
        req: &OutcomeRequest,
    ) -> Result<OutcomeResponse> {
        self.get(id)
            .await?
            .lock()
            .await
            .record_outcome(proposal_id, req)
    }

    pub async fn skip(&self, id: &str, proposal_id: &str) -> Result<SkipResponse> {
        self.get(id).await?.lock().await.skip(proposal_id)
    }

    /// Drops cached sessions so the next access replays the logs.
    pub async fn evict_all(&self) {
        self.sessions.lock().await.clear();
    }
}
