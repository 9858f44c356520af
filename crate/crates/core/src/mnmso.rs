//! Threshold-aware multi-scale tree search over `[0, 1]`.
//!
//! The interval is split into `M^h` cells per level (`M` odd). The search
//! repeatedly expands the best candidate leaf at the current level into its
//! `M` children; the middle child shares the parent's center and inherits
//! its value, so each expansion costs `M - 1` evaluations. Children are
//! either kept as candidates for refinement or frozen in the basket when a
//! stop condition holds, which restarts the search at the coarsest level.
//! An evaluation budget bounds the work; it is raised through a schedule
//! only while the latest children look passive but close to the threshold.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::GAMMA;

/// Deepest level whose centers are exact in `f64`.
fn max_level(m: usize) -> u32 {
    let limit = 1u64 << 51;
    let mut level = 0;
    let mut width = 1u64;
    while width.saturating_mul(m as u64) <= limit {
        width *= m as u64;
        level += 1;
    }
    level
}

fn cells_at(m: usize, level: u32) -> u64 {
    (m as u64).pow(level)
}

/// Center `(i + 1/2) M^-h` of cell `(h, i)`.
pub fn center(m: usize, level: u32, index: u64) -> f64 {
    (2 * index + 1) as f64 / (2 * cells_at(m, level)) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Odd partition factor `M >= 3`.
    pub partition: usize,
    pub initial_level: u32,
    /// Resolution stop `delta_zeta`.
    pub delta_zeta: f64,
    /// Variation stop `delta_theta`.
    pub delta_theta: f64,
    /// Minimum cell size gating the threshold-distance tests.
    pub delta_eta: f64,
    /// Initial relative closeness threshold.
    pub epsilon: f64,
    /// Factor applied to the closeness threshold at each budget raise.
    pub epsilon_decay: f64,
    /// Successive total evaluation budgets.
    pub budget_schedule: Vec<usize>,
    pub basket_reuse: bool,
    pub gamma: f64,
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        let m = self.partition;
        if m < 3 || m.is_multiple_of(2) {
            return bad(format!("partition factor must be odd and >= 3, got {m}"));
        }
        if self.initial_level >= max_level(m) || cells_at(m, self.initial_level) > 1 << 20 {
            return bad(format!("initial level {} too deep", self.initial_level));
        }
        for (name, v) in [
            ("delta_zeta", self.delta_zeta),
            ("delta_theta", self.delta_theta),
            ("delta_eta", self.delta_eta),
            ("epsilon", self.epsilon),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} must be positive and finite"));
            }
        }
        if !(self.epsilon_decay > 0.0 && self.epsilon_decay < 1.0) {
            return bad("epsilon decay must lie in (0, 1)".into());
        }
        if self.budget_schedule.is_empty() {
            return bad("budget schedule is empty".into());
        }
        if self.budget_schedule.windows(2).any(|w| w[0] >= w[1]) {
            return bad("budget schedule must be strictly increasing".into());
        }
        if !self.gamma.is_finite() {
            return bad("gamma must be finite".into());
        }
        Ok(())
    }

    /// `M^{-h-1}`: cell size of the children of a level-`h` leaf.
    fn child_width(&self, level: u32) -> f64 {
        (self.partition as f64).powi(-(level as i32) - 1)
    }
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            partition: 5,
            initial_level: 1,
            delta_zeta: 1e-8,
            delta_theta: 1e-8,
            delta_eta: 1e-2,
            epsilon: 1e-3,
            epsilon_decay: 0.1,
            budget_schedule: (1..=10).map(|k| 10 * k).collect(),
            basket_reuse: false,
            gamma: GAMMA,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LeafStatus {
    Candidate,
    Basket,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Leaf {
    pub level: u32,
    pub index: u64,
    pub center: f64,
    pub value: f64,
    pub status: LeafStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StopFlags {
    pub s1: bool,
    pub s2: bool,
    pub s3: bool,
}

impl StopFlags {
    pub fn any(self) -> bool {
        self.s1 || self.s2 || self.s3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BudgetFlags {
    pub u1: bool,
    pub u2: bool,
    pub u3: bool,
}

impl BudgetFlags {
    /// `U1 and (U2 or U3)`.
    pub fn trigger(self) -> bool {
        self.u1 && (self.u2 || self.u3)
    }
}

/// Largest gap between adjacent child values and the largest child value.
fn variation_and_peak(children: &[f64]) -> (f64, f64) {
    let spread = children
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .fold(0.0, f64::max);
    let peak = children.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (spread, peak)
}

/// Stop tests on the `M` children (index order) of a level-`level` leaf.
pub fn stop_conditions(config: &SearchConfig, level: u32, children: &[f64]) -> StopFlags {
    let width = config.child_width(level);
    let (spread, peak) = variation_and_peak(children);
    StopFlags {
        s1: width < config.delta_zeta || level + 1 >= max_level(config.partition),
        s2: spread < config.delta_theta,
        s3: width < config.delta_eta && spread < (peak - config.gamma).abs(),
    }
}

/// Budget-raise tests on the same children, at closeness threshold `epsilon`.
pub fn budget_conditions(config: &SearchConfig, epsilon: f64, level: u32, children: &[f64]) -> BudgetFlags {
    let width = config.child_width(level);
    let (spread, peak) = variation_and_peak(children);
    let gamma = config.gamma;
    BudgetFlags {
        u1: peak < gamma,
        u2: (gamma - peak) / peak < epsilon,
        u3: width < config.delta_eta && (gamma - peak).abs() < spread,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepAction {
    Refine,
    Basket,
    Return,
}

/// One line of the search trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub level: u32,
    pub expanded: (u32, u64),
    pub stop: StopFlags,
    pub budget_flags: BudgetFlags,
    pub eval_count: usize,
    pub budget: usize,
    pub epsilon: f64,
    pub action: StepAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubbandSample {
    pub zeta: f64,
    pub theta: f64,
    pub violation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubbandResult {
    /// Every evaluated leaf, sorted by `zeta`.
    pub samples: Vec<SubbandSample>,
    pub theta_max: f64,
    pub zeta_at_max: f64,
    pub eval_count: usize,
    pub iterations: usize,
    #[serde(skip)]
    pub trace: Vec<TraceRecord>,
}

/// Evaluator failure. `partial` holds what was evaluated before it.
#[derive(Debug, Clone)]
pub struct SearchFailure {
    pub zeta: f64,
    pub message: String,
    pub partial: Option<SubbandResult>,
}

impl fmt::Display for SearchFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "evaluation failed at zeta = {}: {}", self.zeta, self.message)
    }
}

impl std::error::Error for SearchFailure {}

fn evaluate<F, E>(f: &mut F, zeta: f64) -> std::result::Result<f64, SearchFailure>
where
    F: FnMut(f64) -> std::result::Result<f64, E>,
    E: fmt::Display,
{
    match f(zeta) {
        Ok(v) if v.is_nan() => Err(SearchFailure {
            zeta,
            message: "evaluator returned NaN".into(),
            partial: None,
        }),
        Ok(v) => Ok(v),
        Err(e) => Err(SearchFailure {
            zeta,
            message: e.to_string(),
            partial: None,
        }),
    }
}

/// Outcome of a single [`SearchState::step`].
#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome {
    Continue(TraceRecord),
    /// Terminal step; carries the record of the last expansion if one ran.
    Finished(Option<TraceRecord>),
}

/// Tree bookkeeping: evaluated leaves split into candidates and basket.
#[derive(Debug, Clone)]
pub struct SearchState {
    config: SearchConfig,
    leaves: BTreeMap<(u32, u64), Leaf>,
    level: u32,
    eval_count: usize,
    budget_index: usize,
    epsilon: f64,
    theta_max: f64,
    zeta_at_max: f64,
    iteration: usize,
    finished: bool,
    depth_limit: u32,
    trace: Vec<TraceRecord>,
}

impl SearchState {
    /// Evaluates all `M^h0` centers of the initial level.
    pub fn initialize<F, E>(config: &SearchConfig, mut f: F) -> std::result::Result<Self, SearchFailure>
    where
        F: FnMut(f64) -> std::result::Result<f64, E>,
        E: fmt::Display,
    {
        config.validate().map_err(|e| SearchFailure {
            zeta: f64::NAN,
            message: e.to_string(),
            partial: None,
        })?;
        let m = config.partition;
        let h0 = config.initial_level;
        let mut leaves = BTreeMap::new();
        let mut theta_max = f64::NEG_INFINITY;
        let mut zeta_at_max = f64::NAN;
        for index in 0..cells_at(m, h0) {
            let zeta = center(m, h0, index);
            let value = evaluate(&mut f, zeta)?;
            if value > theta_max {
                theta_max = value;
                zeta_at_max = zeta;
            }
            leaves.insert(
                (h0, index),
                Leaf {
                    level: h0,
                    index,
                    center: zeta,
                    value,
                    status: LeafStatus::Candidate,
                },
            );
        }
        Ok(Self {
            config: config.clone(),
            eval_count: leaves.len(),
            leaves,
            level: h0,
            budget_index: 0,
            epsilon: config.epsilon,
            theta_max,
            zeta_at_max,
            iteration: 0,
            finished: false,
            depth_limit: max_level(m),
            trace: Vec::new(),
        })
    }

    pub fn config(&self) -> &SearchConfig {
        &self.config
    }

    pub fn leaves(&self) -> impl Iterator<Item = &Leaf> {
        self.leaves.values()
    }

    pub fn candidates(&self) -> impl Iterator<Item = &Leaf> {
        self.leaves().filter(|l| l.status == LeafStatus::Candidate)
    }

    pub fn basket(&self) -> impl Iterator<Item = &Leaf> {
        self.leaves().filter(|l| l.status == LeafStatus::Basket)
    }

    pub fn current_level(&self) -> u32 {
        self.level
    }

    /// Lowest level present among evaluated leaves.
    pub fn h_min(&self) -> u32 {
        self.leaves.keys().map(|k| k.0).min().unwrap_or(self.level)
    }

    pub fn h_max(&self) -> u32 {
        self.leaves.keys().map(|k| k.0).max().unwrap_or(self.level)
    }

    pub fn eval_count(&self) -> usize {
        self.eval_count
    }

    pub fn budget(&self) -> usize {
        self.config.budget_schedule[self.budget_index]
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn theta_max(&self) -> f64 {
        self.theta_max
    }

    pub fn zeta_at_max(&self) -> f64 {
        self.zeta_at_max
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// Checks that the leaf cells tile `[0, 1]` with disjoint interiors.
    pub fn partition_is_exact(&self) -> bool {
        let m = self.config.partition as u128;
        let depth = self.h_max();
        let mut cells: Vec<(u128, u128)> = self
            .leaves
            .keys()
            .map(|&(h, i)| {
                let scale = m.pow(depth - h);
                (i as u128 * scale, (i as u128 + 1) * scale)
            })
            .collect();
        cells.sort_unstable();
        let mut cursor = 0u128;
        for (lo, hi) in cells {
            if lo != cursor {
                return false;
            }
            cursor = hi;
        }
        cursor == m.pow(depth)
    }

    /// Best candidate at the current level; ties go to the smallest index.
    pub fn select_current(&self) -> Option<Leaf> {
        let mut best: Option<Leaf> = None;
        for leaf in self
            .leaves
            .range((self.level, 0)..=(self.level, u64::MAX))
            .map(|(_, l)| l)
            .filter(|l| l.status == LeafStatus::Candidate)
        {
            if best.is_none_or(|b| leaf.value > b.value) {
                best = Some(*leaf);
            }
        }
        best
    }

    /// Replaces candidate `(level, index)` by its `M` children and returns
    /// their values in index order. The middle child reuses the parent value.
    /// On evaluator failure the state is left unchanged.
    pub fn expand<F, E>(&mut self, key: (u32, u64), f: &mut F) -> std::result::Result<Vec<f64>, SearchFailure>
    where
        F: FnMut(f64) -> std::result::Result<f64, E>,
        E: fmt::Display,
    {
        let parent = *self.leaves.get(&key).ok_or_else(|| SearchFailure {
            zeta: f64::NAN,
            message: format!("leaf {key:?} is not in the tree"),
            partial: None,
        })?;
        let m = self.config.partition;
        let level = parent.level + 1;
        let first = parent.index * m as u64;
        let middle = first + (m / 2) as u64;
        let mut children = Vec::with_capacity(m);
        for index in first..first + m as u64 {
            let zeta = center(m, level, index);
            let value = if index == middle {
                debug_assert_eq!(zeta, parent.center);
                parent.value
            } else {
                evaluate(f, zeta)?
            };
            children.push(Leaf {
                level,
                index,
                center: zeta,
                value,
                status: LeafStatus::Candidate,
            });
        }
        self.leaves.remove(&key);
        self.eval_count += m - 1;
        for child in &children {
            if child.value > self.theta_max {
                self.theta_max = child.value;
                self.zeta_at_max = child.center;
            }
            self.leaves.insert((child.level, child.index), *child);
        }
        Ok(children.iter().map(|c| c.value).collect())
    }

    fn set_status(&mut self, level: u32, first: u64, status: LeafStatus) {
        for index in first..first + self.config.partition as u64 {
            if let Some(leaf) = self.leaves.get_mut(&(level, index)) {
                leaf.status = status;
            }
        }
    }

    /// Basket leaves that are coarser than the resolution re-enter the
    /// candidate set.
    fn reuse_basket(&mut self) {
        let m = self.config.partition as f64;
        let limit = self.depth_limit;
        let delta = self.config.delta_zeta;
        for leaf in self.leaves.values_mut() {
            let resolved = leaf.level + 1 >= limit || m.powi(-(leaf.level as i32)) < delta;
            if leaf.status == LeafStatus::Basket && !resolved {
                leaf.status = LeafStatus::Candidate;
            }
        }
    }

    /// One select / expand / classify iteration.
    pub fn step<F, E>(&mut self, f: &mut F) -> std::result::Result<StepOutcome, SearchFailure>
    where
        F: FnMut(f64) -> std::result::Result<f64, E>,
        E: fmt::Display,
    {
        if self.finished {
            return Ok(StepOutcome::Finished(None));
        }
        let Some(lowest) = self.candidates().map(|l| l.level).min() else {
            self.finished = true;
            return Ok(StepOutcome::Finished(None));
        };
        if self.select_current().is_none() {
            self.level = lowest;
        }
        let leaf = self.select_current().expect("candidate at current level");
        let h = leaf.level;
        let children = self.expand((leaf.level, leaf.index), f)?;
        let stop = stop_conditions(&self.config, h, &children);
        let budget_flags = budget_conditions(&self.config, self.epsilon, h, &children);
        let mut record = TraceRecord {
            iteration: self.iteration,
            level: h,
            expanded: (leaf.level, leaf.index),
            stop,
            budget_flags,
            eval_count: self.eval_count,
            budget: self.budget(),
            epsilon: self.epsilon,
            action: StepAction::Return,
        };

        if self.eval_count > self.budget() {
            let raised = budget_flags.trigger() && self.budget_index + 1 < self.config.budget_schedule.len();
            if raised {
                self.budget_index += 1;
                self.epsilon *= self.config.epsilon_decay;
            } else {
                self.finished = true;
                self.trace.push(record.clone());
                return Ok(StepOutcome::Finished(Some(record)));
            }
        }

        let first_child = leaf.index * self.config.partition as u64;
        if stop.any() {
            self.set_status(h + 1, first_child, LeafStatus::Basket);
            self.level = self.h_min();
            self.epsilon = self.config.epsilon;
            if self.config.basket_reuse {
                self.reuse_basket();
            }
            record.action = StepAction::Basket;
        } else {
            self.level = h + 1;
            record.action = StepAction::Refine;
        }
        self.iteration += 1;
        self.trace.push(record.clone());
        Ok(StepOutcome::Continue(record))
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    /// Snapshot of all evaluated samples.
    pub fn result(&self) -> SubbandResult {
        let gamma = self.config.gamma;
        let mut samples: Vec<SubbandSample> = self
            .leaves
            .values()
            .map(|l| SubbandSample {
                zeta: l.center,
                theta: l.value,
                violation: l.value > gamma,
            })
            .collect();
        samples.sort_by(|a, b| a.zeta.total_cmp(&b.zeta));
        SubbandResult {
            samples,
            theta_max: self.theta_max,
            zeta_at_max: self.zeta_at_max,
            eval_count: self.eval_count,
            iterations: self.iteration,
            trace: self.trace.clone(),
        }
    }
}

/// Runs the search to completion with a fallible evaluator.
pub fn try_run<F, E>(config: &SearchConfig, mut f: F) -> std::result::Result<SubbandResult, SearchFailure>
where
    F: FnMut(f64) -> std::result::Result<f64, E>,
    E: fmt::Display,
{
    let mut state = SearchState::initialize(config, &mut f)?;
    loop {
        match state.step(&mut f) {
            Ok(StepOutcome::Continue(_)) => {}
            Ok(StepOutcome::Finished(_)) => return Ok(state.result()),
            Err(mut failure) => {
                failure.partial = Some(state.result());
                return Err(failure);
            }
        }
    }
}

/// Runs the search with an infallible evaluator.
pub fn run<F>(config: &SearchConfig, mut f: F) -> std::result::Result<SubbandResult, SearchFailure>
where
    F: FnMut(f64) -> f64,
{
    try_run(config, |z| Ok::<f64, std::convert::Infallible>(f(z)))
}
