//! Adaptive-rate magnitude pruning of the DNN weights, the field matrix `R`,
//! and the embedding table, interleaved with training.
//!
//! After warm-up, post-warm-up iteration `k` (starting at 1) triggers a prune
//! event whenever `k % prune_every == 0`. Each enabled component is cut to
//! `s(k) = S·(1 − D^(k/f))` by zeroing its lowest-magnitude entries. Zeroed
//! entries stay trainable unless [`MaskMode::Frozen`] is selected.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::model::{count_parameters, Component, Count, Model, Params, TensorRole};
use crate::training::{IterationInfo, TrainHook};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingMode {
    /// One threshold across every embedding entry.
    Global,
    /// Each field's rows are ranked on their own.
    PerField,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskMode {
    /// Pruned weights keep receiving updates and can grow back.
    Revivable,
    /// Pruned weights are held at zero until the next event.
    Frozen,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneSchedule {
    pub target_dnn: f64,
    pub target_r: f64,
    pub target_emb: f64,
    pub damping: f64,
    pub frequency: f64,
    pub prune_every: u64,
    pub warmup_epochs: usize,
    pub embedding_mode: EmbeddingMode,
    pub mask_mode: MaskMode,
}

impl Default for PruneSchedule {
    fn default() -> Self {
        PruneSchedule {
            target_dnn: 0.0,
            target_r: 0.0,
            target_emb: 0.0,
            damping: 0.99,
            frequency: 100.0,
            prune_every: 10,
            warmup_epochs: 2,
            embedding_mode: EmbeddingMode::Global,
            mask_mode: MaskMode::Revivable,
        }
    }
}

impl PruneSchedule {
    pub fn target(&self, c: Component) -> f64 {
        match c {
            Component::Dnn => self.target_dnn,
            Component::FieldMatrix => self.target_r,
            Component::Embeddings => self.target_emb,
        }
    }

    pub fn is_enabled(&self) -> bool {
        Component::ALL.iter().any(|&c| self.target(c) > 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for c in Component::ALL {
            let s = self.target(c);
            if !(0.0..1.0).contains(&s) {
                problems.push(format!("target sparsity for {} is {s}; must lie in [0, 1)", c.as_str()));
            }
        }
        if !(self.damping > 0.0 && self.damping < 1.0) {
            problems.push(format!("damping {} must lie in (0, 1)", self.damping));
        }
        if !(self.frequency >= 1.0) {
            problems.push(format!("frequency {} must be >= 1", self.frequency));
        }
        if self.prune_every == 0 {
            problems.push("prune_every must be >= 1".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

/// `S·(1 − D^(k/f))`.
pub fn sparse_rate_at(k: u64, target: f64, damping: f64, frequency: f64) -> f64 {
    target * (1.0 - damping.powf(k as f64 / frequency))
}

/// Keep-flags for the tensors of one component.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneMask {
    pub tensors: Vec<(TensorRole, Vec<bool>)>,
    /// Number of prunable entries covered (the strict upper triangle for `R`).
    pub total: usize,
    pub pruned: usize,
}

impl PruneMask {
    pub fn sparsity(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.pruned as f64 / self.total as f64
        }
    }

    /// Zero every masked entry in `params`.
    pub fn apply(&self, params: &mut Params) {
        for t in params.tensors_mut() {
            if let Some((_, keep)) = self.tensors.iter().find(|(r, _)| *r == t.role) {
                for (x, &k) in t.data.iter_mut().zip(keep) {
                    if !k {
                        *x = 0.0;
                    }
                }
            }
        }
    }
}

fn prune_count(rate: f64, n: usize) -> usize {
    // The epsilon absorbs products such as 0.29 · 100 = 28.999999999999996.
    ((rate * n as f64 + 1e-9).floor() as usize).min(n)
}

/// Positions of the `count` smallest magnitudes; ties go to the lowest index.
fn smallest(mags: &[f64], count: usize) -> Vec<usize> {
    if count == 0 {
        return Vec::new();
    }
    let mut idx: Vec<usize> = (0..mags.len()).collect();
    let cmp = |a: &usize, b: &usize| -> Ordering { mags[*a].total_cmp(&mags[*b]).then(a.cmp(b)) };
    if count < idx.len() {
        idx.select_nth_unstable_by(count - 1, cmp);
        idx.truncate(count);
    }
    idx
}

/// Mask of `tensor` that drops exactly `⌊rate·N⌋` lowest-magnitude entries.
pub fn prune_mask(tensor: &[f64], rate: f64) -> Vec<bool> {
    let mags: Vec<f64> = tensor.iter().map(|x| x.abs()).collect();
    let mut keep = vec![true; tensor.len()];
    for i in smallest(&mags, prune_count(rate, tensor.len())) {
        keep[i] = false;
    }
    keep
}

/// Zero the `⌊rate·N⌋` lowest-magnitude entries of `tensor`.
pub fn prune_to_rate(tensor: &mut [f64], rate: f64) -> PruneMask {
    let keep = prune_mask(tensor, rate);
    for (x, &k) in tensor.iter_mut().zip(&keep) {
        if !k {
            *x = 0.0;
        }
    }
    let pruned = keep.iter().filter(|&&k| !k).count();
    PruneMask {
        total: tensor.len(),
        pruned,
        tensors: vec![(TensorRole::Linear, keep)],
    }
}

/// Rank the given (tensor, position) slots jointly and mask the lowest.
fn mask_slots(params: &Params, slots: &[(usize, usize)], rate: f64, keep: &mut [Vec<bool>]) -> usize {
    let tensors = params.tensors();
    let mags: Vec<f64> = slots.iter().map(|&(t, i)| tensors[t].data[i].abs()).collect();
    let drop = smallest(&mags, prune_count(rate, slots.len()));
    for &j in &drop {
        let (t, i) = slots[j];
        keep[t][i] = false;
    }
    drop.len()
}

fn component_mask(model: &Model, component: Component, rate: f64, mode: EmbeddingMode) -> PruneMask {
    let tensors = model.params.tensors();
    let member: Vec<usize> = tensors
        .iter()
        .enumerate()
        .filter(|(_, t)| t.role.component() == Some(component))
        .map(|(i, _)| i)
        .collect();
    let mut keep: Vec<Vec<bool>> = tensors.iter().map(|t| vec![true; t.data.len()]).collect();
    let mut total = 0;
    let mut pruned = 0;
    let mut groups: Vec<Vec<(usize, usize)>> = Vec::new();
    match component {
        Component::Dnn => {
            groups.push(member.iter().flat_map(|&t| (0..tensors[t].data.len()).map(move |i| (t, i))).collect());
        }
        Component::FieldMatrix => {
            for &t in &member {
                let n = tensors[t].rows;
                groups.push((0..n).flat_map(|a| (a + 1..n).map(move |b| (t, a * n + b))).collect());
            }
        }
        Component::Embeddings => {
            for &t in &member {
                let k = tensors[t].cols;
                match mode {
                    EmbeddingMode::Global => groups.push((0..tensors[t].data.len()).map(|i| (t, i)).collect()),
                    EmbeddingMode::PerField => {
                        for f in 0..model.config.n_fields {
                            let r = model.config.field_range(f);
                            groups.push((r.start * k..r.end * k).map(|i| (t, i)).collect());
                        }
                    }
                }
            }
        }
    }
    drop(tensors);
    for g in &groups {
        total += g.len();
        pruned += mask_slots(&model.params, g, rate, &mut keep);
    }
    let roles: Vec<TensorRole> = model.params.tensors().iter().map(|t| t.role).collect();
    PruneMask {
        tensors: member.iter().map(|&t| (roles[t], std::mem::take(&mut keep[t]))).collect(),
        total,
        pruned,
    }
}

/// Prune the embedding table to `rate` with either ranking scope.
pub fn embedding_threshold_mode(model: &mut Model, rate: f64, mode: EmbeddingMode) -> PruneMask {
    let mask = component_mask(model, Component::Embeddings, rate, mode);
    mask.apply(&mut model.params);
    mask
}

/// Prune one component of `model` to `rate` and return its mask.
pub fn prune_component(model: &mut Model, component: Component, rate: f64, mode: EmbeddingMode) -> PruneMask {
    let mask = component_mask(model, component, rate, mode);
    mask.apply(&mut model.params);
    mask
}

/// Exact nonzero counts for the three prunable components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SparsityReport {
    pub dnn: Count,
    pub field_matrix: Count,
    pub embeddings: Count,
}

impl SparsityReport {
    pub fn get(&self, c: Component) -> Count {
        match c {
            Component::Dnn => self.dnn,
            Component::FieldMatrix => self.field_matrix,
            Component::Embeddings => self.embeddings,
        }
    }
}

pub fn sparsity_report(model: &Model) -> SparsityReport {
    let c = count_parameters(model);
    SparsityReport {
        dnn: c.dnn_weights,
        field_matrix: c.field_matrix,
        embeddings: c.embeddings,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneEvent {
    /// Post-warm-up iteration index.
    pub k: u64,
    pub epoch: usize,
    /// Scheduled rate per component, `None` when the component is off.
    pub rates: [Option<f64>; 3],
    pub achieved: SparsityReport,
}

impl PruneEvent {
    /// `event_k,s_dnn,s_R,s_emb` with achieved sparsities.
    pub fn csv_fields(&self) -> String {
        format!(
            "{},{:.6},{:.6},{:.6}",
            self.k,
            self.achieved.dnn.sparsity(),
            self.achieved.field_matrix.sparsity(),
            self.achieved.embeddings.sparsity()
        )
    }
}

fn has_component(model: &Model, c: Component) -> bool {
    model.params.tensors().iter().any(|t| t.role.component() == Some(c) && !t.data.is_empty())
}

/// One prune event at post-warm-up iteration `k`; `None` when `k` is not a
/// multiple of `prune_every` or every target is zero.
pub fn prune_step(k: u64, model: &mut Model, schedule: &PruneSchedule) -> Option<(PruneEvent, Vec<PruneMask>)> {
    if k == 0 || !k.is_multiple_of(schedule.prune_every) || !schedule.is_enabled() {
        return None;
    }
    let mut rates = [None; 3];
    let mut masks = Vec::new();
    for (slot, c) in Component::ALL.into_iter().enumerate() {
        let target = schedule.target(c);
        if target <= 0.0 || !has_component(model, c) {
            continue;
        }
        let rate = sparse_rate_at(k, target, schedule.damping, schedule.frequency);
        rates[slot] = Some(rate);
        masks.push(prune_component(model, c, rate, schedule.embedding_mode));
    }
    let event = PruneEvent {
        k,
        epoch: 0,
        rates,
        achieved: sparsity_report(model),
    };
    Some((event, masks))
}

/// Training hook that runs the schedule and records every event.
#[derive(Debug, Clone)]
pub struct Pruner {
    pub schedule: PruneSchedule,
    /// Post-warm-up iterations seen so far.
    pub k: u64,
    pub events: Vec<PruneEvent>,
    frozen: Vec<PruneMask>,
}

impl Pruner {
    pub fn new(schedule: PruneSchedule) -> Result<Self> {
        schedule.validate()?;
        Ok(Pruner {
            schedule,
            k: 0,
            events: Vec::new(),
            frozen: Vec::new(),
        })
    }
}

impl TrainHook for Pruner {
    fn after_iteration(&mut self, info: &IterationInfo, model: &mut Model) -> Result<()> {
        if info.epoch < self.schedule.warmup_epochs || !self.schedule.is_enabled() {
            return Ok(());
        }
        self.k += 1;
        if self.schedule.mask_mode == MaskMode::Frozen {
            for m in &self.frozen {
                m.apply(&mut model.params);
            }
        }
        if let Some((mut event, masks)) = prune_step(self.k, model, &self.schedule) {
            event.epoch = info.epoch;
            if self.schedule.mask_mode == MaskMode::Frozen {
                self.frozen = masks;
            }
            self.events.push(event);
        }
        Ok(())
    }
}
