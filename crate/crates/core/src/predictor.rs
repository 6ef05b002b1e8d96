//! Online per-model log-scores and the Bayes / static MDL / dynamic MDL predictors.
//!
//! Every member `ν` carries `L_ν(n) = ln w_ν + Σ_{t≤n} ln ν(y_t|x_t)`. The
//! mixture is `ln ξ = logsumexp_ν L_ν` and the two-part MDL code is
//! `ln ϱ = max_ν L_ν`, with ties going to the earliest member.
//!
//! Lazy classes are materialized only as far as the MDL pruning bound
//! requires: member `k` is skipped while `ln w_k + n·ln C < ln ϱ`, which is
//! sound because `ν(y_{1:n}|x_{1:n}) ≤ Cⁿ`. Mixture and envelope sums run over
//! the materialized prefix; [`PredictorState::truncation_log_bound`] bounds
//! what the rest could add.

use std::sync::Arc;

use crate::density::{keep_term, Component, DensityKind, PredictiveDensity};
use crate::error::{Error, Result};
use crate::math::{argmax_first, log_sum_exp};
use crate::model::{check_outcome, log_joint, ConditionalModel, InputToken, ModelClass, Outcome, OutcomeSpace};
use crate::quadrature::QuadratureSpec;

/// Hard cap on materialized members of a lazy class.
pub const MAX_MATERIALIZED: usize = 1 << 20;

/// Result of two-part MDL selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MdlSelection {
    /// Enumeration index of `ν*`.
    pub index: usize,
    /// `ln ϱ(y_{1:n}|x_{1:n}) = ln w_{ν*} + ln ν*(y_{1:n}|x_{1:n})`.
    pub log_rho: f64,
    /// Lazy members examined beyond the materialized prefix.
    pub examined: usize,
}

#[derive(Clone)]
pub struct PredictorState {
    class: Arc<ModelClass>,
    models: Vec<Arc<dyn ConditionalModel>>,
    log_weights: Vec<f64>,
    log_scores: Vec<f64>,
    xs: Vec<InputToken>,
    ys: Vec<Outcome>,
    log_mixture: f64,
    log_mdl: f64,
    best: usize,
}

impl std::fmt::Debug for PredictorState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PredictorState")
            .field("step", &self.step())
            .field("log_scores", &self.log_scores)
            .field("log_mixture", &self.log_mixture)
            .field("log_mdl", &self.log_mdl)
            .finish()
    }
}

impl PredictorState {
    pub fn new(class: Arc<ModelClass>) -> Result<Self> {
        let mut state = Self {
            class,
            models: Vec::new(),
            log_weights: Vec::new(),
            log_scores: Vec::new(),
            xs: Vec::new(),
            ys: Vec::new(),
            log_mixture: f64::NEG_INFINITY,
            log_mdl: f64::NEG_INFINITY,
            best: 0,
        };
        match state.class.entries() {
            Some(entries) => {
                for e in entries {
                    state.models.push(Arc::clone(&e.model));
                    state.log_weights.push(e.weight.ln());
                }
                state.log_scores = state.log_weights.clone();
            }
            None => {
                let first = state.class.entry(0)?.ok_or_else(|| Error::InvalidClass("empty class".into()))?;
                state.models.push(first.model);
                state.log_weights.push(first.weight.ln());
                state.log_scores.push(first.weight.ln());
            }
        }
        state.refresh();
        state.materialize()?;
        Ok(state)
    }

    /// Replays a history from scratch.
    pub fn from_history(class: Arc<ModelClass>, xs: &[InputToken], ys: &[Outcome]) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::LengthMismatch {
                left: xs.len(),
                right: ys.len(),
            });
        }
        let mut state = Self::new(class)?;
        for (x, &y) in xs.iter().zip(ys) {
            state.update(x, y)?;
        }
        Ok(state)
    }

    pub fn class(&self) -> &Arc<ModelClass> {
        &self.class
    }

    /// Number of observations absorbed so far.
    pub fn step(&self) -> usize {
        self.ys.len()
    }

    /// `L_ν(n)` for the materialized members.
    pub fn log_scores(&self) -> &[f64] {
        &self.log_scores
    }

    /// `ln ξ(y_{1:n}|x_{1:n})`.
    pub fn log_mixture(&self) -> f64 {
        self.log_mixture
    }

    /// `ln ϱ(y_{1:n}|x_{1:n}) = max_ν L_ν(n)`.
    pub fn log_mdl(&self) -> f64 {
        self.log_mdl
    }

    pub fn materialized(&self) -> usize {
        self.models.len()
    }

    pub fn history(&self) -> (&[InputToken], &[Outcome]) {
        (&self.xs, &self.ys)
    }

    /// Posterior weights `w_ν ν(y_{1:n}|x_{1:n}) / ξ(y_{1:n}|x_{1:n})`.
    pub fn posterior_weights(&self) -> Vec<f64> {
        self.log_scores.iter().map(|l| (l - self.log_mixture).exp()).collect()
    }

    /// Upper bound on `ln` of the weighted likelihood mass of all members
    /// that are not materialized, relative to `ϱ`. `-inf` for finite classes.
    pub fn truncation_log_bound(&self) -> f64 {
        let tail = self.class.tail_weight(self.models.len());
        if tail <= 0.0 {
            return f64::NEG_INFINITY;
        }
        tail.ln() + self.step() as f64 * self.class.global_bound().ln() - self.log_mdl
    }

    fn refresh(&mut self) {
        self.log_mixture = log_sum_exp(&self.log_scores);
        self.best = argmax_first(&self.log_scores).unwrap_or(0);
        self.log_mdl = self.log_scores[self.best];
    }

    fn pruning_bound(&self, weight: f64) -> f64 {
        weight.ln() + self.step() as f64 * self.class.global_bound().ln()
    }

    fn materialize(&mut self) -> Result<()> {
        if self.class.entries().is_some() {
            return Ok(());
        }
        let mut grew = false;
        loop {
            let k = self.models.len();
            let Some(entry) = self.class.entry(k)? else { break };
            if self.pruning_bound(entry.weight) < self.log_mdl {
                break;
            }
            if k >= MAX_MATERIALIZED {
                return Err(Error::InvalidClass(format!(
                    "lazy class needs more than {MAX_MATERIALIZED} materialized members"
                )));
            }
            let lw = entry.weight.ln();
            let score = lw + log_joint(entry.model.as_ref(), &self.xs, &self.ys)?;
            self.models.push(entry.model);
            self.log_weights.push(lw);
            self.log_scores.push(score);
            if score > self.log_mdl {
                self.best = k;
                self.log_mdl = score;
            }
            grew = true;
        }
        if grew {
            self.refresh();
        }
        Ok(())
    }

    /// Absorbs one observation `(x, y)`. On error the state is unchanged.
    pub fn update(&mut self, x: &InputToken, y: Outcome) -> Result<()> {
        check_outcome(y)?;
        let mut next = Vec::with_capacity(self.log_scores.len());
        for (model, score) in self.models.iter().zip(&self.log_scores) {
            let ld = model.log_density(x, y)?;
            next.push(score + ld);
        }
        if next.iter().all(|s| *s == f64::NEG_INFINITY) {
            return Err(Error::SupportExhausted { step: self.step() + 1 });
        }
        self.log_scores = next;
        self.xs.push(x.clone());
        self.ys.push(y);
        self.refresh();
        self.materialize()
    }

    /// `ν* = argmax_ν L_ν(n)`, ties to the smallest index.
    pub fn mdl_select(&self) -> Result<MdlSelection> {
        let mut sel = MdlSelection {
            index: self.best,
            log_rho: self.log_mdl,
            examined: 0,
        };
        if self.class.entries().is_some() {
            return Ok(sel);
        }
        let mut k = self.models.len();
        while let Some(entry) = self.class.entry(k)? {
            sel.examined += 1;
            if self.pruning_bound(entry.weight) < sel.log_rho {
                break;
            }
            let score = entry.weight.ln() + log_joint(entry.model.as_ref(), &self.xs, &self.ys)?;
            if score > sel.log_rho {
                sel.index = k;
                sel.log_rho = score;
            }
            k += 1;
        }
        Ok(sel)
    }

    fn model_at(&self, index: usize) -> Result<Arc<dyn ConditionalModel>> {
        if let Some(m) = self.models.get(index) {
            return Ok(Arc::clone(m));
        }
        self.class
            .entry(index)?
            .map(|e| e.model)
            .ok_or_else(|| Error::InvalidClass(format!("no member {index}")))
    }

    /// Bayes mixture prediction `ξ(·|x_{1:n+1}, y_{1:n})`.
    pub fn bayes_predict(&self, x: &InputToken) -> Result<PredictiveDensity> {
        match self.class.outcome_space() {
            OutcomeSpace::Labels(n) => {
                let mut probs = vec![0.0; n];
                for (model, score) in self.models.iter().zip(&self.log_scores) {
                    let w = (score - self.log_mixture).exp();
                    if w == 0.0 {
                        continue;
                    }
                    for (p, q) in probs.iter_mut().zip(label_probs(model.as_ref(), x, n)?) {
                        *p += w * q;
                    }
                }
                Ok(PredictiveDensity::tabular(probs))
            }
            OutcomeSpace::Real => {
                let mut parts = Vec::new();
                for (model, score) in self.models.iter().zip(&self.log_scores) {
                    let lw = score - self.log_mixture;
                    if keep_term(lw, model.density_bound()) {
                        parts.push((lw, Component::at(model, x)?));
                    }
                }
                Ok(PredictiveDensity::mixture(parts))
            }
        }
    }

    /// Static MDL prediction: the member selected on the history alone.
    pub fn static_predict(&self, x: &InputToken) -> Result<PredictiveDensity> {
        model_predict(&self.model_at(self.mdl_select()?.index)?, x)
    }

    /// Raw dynamic MDL prediction `ϱ(y_{1:n}, y) / ϱ(y_{1:n})`, whose mass
    /// is at least one. Real-valued mass comes from `quad`.
    pub fn dynamic_predict(&self, x: &InputToken, quad: &QuadratureSpec) -> Result<PredictiveDensity> {
        match self.class.outcome_space() {
            OutcomeSpace::Labels(n) => {
                let mut best = vec![f64::NEG_INFINITY; n];
                for (model, score) in self.models.iter().zip(&self.log_scores) {
                    let off = score - self.log_mdl;
                    for (b, q) in best.iter_mut().zip(label_probs(model.as_ref(), x, n)?) {
                        *b = b.max(off + q.ln());
                    }
                }
                Ok(PredictiveDensity::table(
                    DensityKind::Envelope,
                    best.into_iter().map(f64::exp).collect(),
                ))
            }
            OutcomeSpace::Real => {
                let mut terms = Vec::new();
                for (model, score) in self.models.iter().zip(&self.log_scores) {
                    let off = score - self.log_mdl;
                    if keep_term(off, model.density_bound()) {
                        terms.push((off, Component::at(model, x)?));
                    }
                }
                PredictiveDensity::envelope(terms, quad)
            }
        }
    }

    /// Normalized dynamic MDL prediction `ϱ̄`.
    pub fn normalized_predict(&self, x: &InputToken, quad: &QuadratureSpec) -> Result<PredictiveDensity> {
        self.dynamic_predict(x, quad)?.normalize()
    }
}

/// One-step prediction of a single member, e.g. the true model `μ`.
pub fn model_predict(model: &Arc<dyn ConditionalModel>, x: &InputToken) -> Result<PredictiveDensity> {
    match model.outcome_space() {
        OutcomeSpace::Labels(n) => Ok(PredictiveDensity::tabular(label_probs(model.as_ref(), x, n)?)),
        OutcomeSpace::Real => Ok(PredictiveDensity::single(Component::at(model, x)?)),
    }
}

pub(crate) fn label_probs(model: &dyn ConditionalModel, x: &InputToken, n: usize) -> Result<Vec<f64>> {
    if let Some(p) = model.label_probabilities(x)? {
        if p.len() != n {
            return Err(Error::LengthMismatch { left: p.len(), right: n });
        }
        return Ok(p);
    }
    (0..n).map(|l| model.log_density(x, Outcome::Label(l)).map(f64::exp)).collect()
}

/// `argmin_i Σ_t (y_t − f_i(x_t))² + 2σ² ln w_i⁻¹` over a constant-σ
/// Gaussian class; the same member as [`PredictorState::mdl_select`].
pub fn penalized_sse_select(class: &ModelClass, xs: &[InputToken], ys: &[f64]) -> Result<usize> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    let sigma = class.shared_sigma().ok_or(Error::NonConstantSigma)?;
    let entries = class.entries().ok_or(Error::NonConstantSigma)?;
    let penalty_scale = 2.0 * sigma * sigma;
    let mut best: Option<(usize, f64)> = None;
    for (i, e) in entries.iter().enumerate() {
        let mut sse = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            if !y.is_finite() {
                return Err(Error::NonFiniteOutcome(y));
            }
            let mean = e.model.gaussian(x)?.ok_or(Error::NonConstantSigma)?.mean;
            sse += (y - mean) * (y - mean);
        }
        let score = sse + penalty_scale * (-e.weight.ln());
        if best.is_none_or(|(_, b)| score < b) {
            best = Some((i, score));
        }
    }
    Ok(best.map(|(i, _)| i).unwrap_or(0))
}
