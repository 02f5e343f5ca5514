//! Backward-pass / communication timeline engine.
//!
//! Communication is a single FIFO channel: one all-reduce in flight at a
//! time, issued in backward order (last layer first). A layer tagged
//! [`LayerTag::Merged`] folds its gradients into the next lower layer and
//! issues nothing itself; chains of merged layers accumulate into the
//! nearest lower normal layer, which heads the communication group.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::comm_model::AllReduceModel;
use crate::error::{Error, Result};
use crate::trace::{sec_to_us, ModelTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerTag {
    Normal,
    Merged,
}

/// Per-layer normal/merged tags, forward order. The first layer is always
/// normal since there is no lower layer to merge into.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MergePlan {
    tags: Vec<LayerTag>,
}

impl MergePlan {
    pub fn new(tags: Vec<LayerTag>) -> Result<Self> {
        match tags.first() {
            None => Err(Error::InvalidPlan("plan must tag at least one layer".into())),
            Some(LayerTag::Merged) => Err(Error::InvalidPlan(
                "the first layer cannot be a merged-gradient layer".into(),
            )),
            Some(LayerTag::Normal) => Ok(Self { tags }),
        }
    }

    /// Layer-wise communication: every layer normal.
    pub fn all_normal(layers: usize) -> Self {
        Self {
            tags: vec![LayerTag::Normal; layers.max(1)],
        }
    }

    /// Single-tensor communication: every layer above the first merged.
    pub fn all_merged(layers: usize) -> Self {
        let mut tags = vec![LayerTag::Merged; layers.max(1)];
        tags[0] = LayerTag::Normal;
        Self { tags }
    }

    /// Plan whose bit `i` of `mask` marks layer `i + 1` (0-based) merged.
    pub fn from_mask(layers: usize, mask: u64) -> Self {
        let mut tags = vec![LayerTag::Normal; layers.max(1)];
        for (i, tag) in tags.iter_mut().enumerate().skip(1) {
            if (mask >> (i - 1)) & 1 == 1 {
                *tag = LayerTag::Merged;
            }
        }
        Self { tags }
    }

    pub fn tags(&self) -> &[LayerTag] {
        &self.tags
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn is_merged(&self, index: usize) -> bool {
        self.tags[index] == LayerTag::Merged
    }

    pub fn merged_count(&self) -> usize {
        self.tags.iter().filter(|t| **t == LayerTag::Merged).count()
    }

    /// Number of all-reduce operations the plan issues.
    pub fn group_count(&self) -> usize {
        self.tags.len() - self.merged_count()
    }
}

/// Layers `head..=top` (0-based, forward order) communicated as one
/// all-reduce at the point the head layer's gradients are ready.
#[derive(Debug, Clone, PartialEq)]
pub struct CommGroup {
    pub head: usize,
    pub top: usize,
    pub bytes: f64,
}

impl CommGroup {
    pub fn layers(&self) -> std::ops::RangeInclusive<usize> {
        self.head..=self.top
    }
}

/// Start timestamps of each layer's backward computation.
///
/// The last layer starts right after the forward pass; each lower layer
/// starts when the one above it finishes.
pub fn backward_starts(trace: &ModelTrace) -> Vec<f64> {
    let layers = trace.layers();
    let mut starts = vec![0.0; layers.len()];
    let last = layers.len() - 1;
    starts[last] = trace.forward_time();
    for l in (0..last).rev() {
        starts[l] = starts[l + 1] + layers[l + 1].backward_time;
    }
    starts
}

/// Collapses a plan into communication groups, in issue order (highest
/// layer first).
pub fn apply_merge(trace: &ModelTrace, plan: &MergePlan) -> Result<Vec<CommGroup>> {
    if plan.len() != trace.len() {
        return Err(Error::InvalidPlan(format!(
            "plan tags {} layers but the trace has {}",
            plan.len(),
            trace.len()
        )));
    }
    let bytes = trace.all_layer_bytes();
    let mut groups = Vec::with_capacity(plan.group_count());
    let mut top = trace.len() - 1;
    let mut pending = 0.0;
    for l in (0..trace.len()).rev() {
        pending += bytes[l];
        if !plan.is_merged(l) {
            groups.push(CommGroup {
                head: l,
                top,
                bytes: pending,
            });
            pending = 0.0;
            top = l.wrapping_sub(1);
        }
    }
    Ok(groups)
}

/// Communication start times and durations for every layer.
///
/// `tau_c[L] = tau_b[L] + t_b[L]`, and for lower layers
/// `tau_c[l] = max(tau_c[l+1] + t_c[l+1], tau_b[l] + t_b[l])`. Merged layers
/// have `t_c = 0`, so their `tau_c` only carries the channel-free time down
/// to the group head.
pub fn comm_starts(
    groups: &[CommGroup],
    tau_b: &[f64],
    t_b: &[f64],
    comm: &AllReduceModel,
) -> (Vec<f64>, Vec<f64>) {
    let n = tau_b.len();
    let mut t_c = vec![0.0; n];
    for g in groups {
        t_c[g.head] = comm.cost(g.bytes);
    }
    let tau_c = chain_comm_starts(tau_b, t_b, &t_c);
    (tau_c, t_c)
}

pub(crate) fn chain_comm_starts(tau_b: &[f64], t_b: &[f64], t_c: &[f64]) -> Vec<f64> {
    let n = tau_b.len();
    let mut tau_c = vec![0.0; n];
    let last = n - 1;
    tau_c[last] = tau_b[last] + t_b[last];
    for l in (0..last).rev() {
        tau_c[l] = (tau_c[l + 1] + t_c[l + 1]).max(tau_b[l] + t_b[l]);
    }
    tau_c
}

/// Full schedule of one training iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    pub forward_time: f64,
    pub tau_b: Vec<f64>,
    pub t_b: Vec<f64>,
    pub tau_c: Vec<f64>,
    pub t_c: Vec<f64>,
    pub merged: Vec<bool>,
    /// Completion time of the final all-reduce.
    pub iteration_time: f64,
    /// `iteration_time - (t_f + sum t_b)`.
    pub comm_nonoverlap: f64,
}

impl Timeline {
    pub fn compute_time(&self) -> f64 {
        self.forward_time + self.t_b.iter().sum::<f64>()
    }

    pub fn records(&self) -> Vec<TimelineRecord> {
        (0..self.tau_b.len())
            .map(|l| TimelineRecord {
                layer: l + 1,
                tau_b_us: sec_to_us(self.tau_b[l]),
                t_b_us: sec_to_us(self.t_b[l]),
                tau_c_us: sec_to_us(self.tau_c[l]),
                t_c_us: sec_to_us(self.t_c[l]),
                merged: self.merged[l],
            })
            .collect()
    }

    /// Exports per-layer records as a JSON array, times in microseconds.
    pub fn write_json<W: Write>(&self, mut writer: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut writer, &self.records())?;
        writer.write_all(b"\n")?;
        Ok(())
    }
}

/// One row of the timeline export. `layer` is 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineRecord {
    pub layer: usize,
    pub tau_b_us: f64,
    pub t_b_us: f64,
    pub tau_c_us: f64,
    pub t_c_us: f64,
    pub merged: bool,
}

/// Evaluates the iteration timeline of `trace` under `plan` and `comm`.
pub fn evaluate(trace: &ModelTrace, plan: &MergePlan, comm: &AllReduceModel) -> Result<Timeline> {
    let groups = apply_merge(trace, plan)?;
    let tau_b = backward_starts(trace);
    let t_b = trace.backward_times();
    let (tau_c, t_c) = comm_starts(&groups, &tau_b, &t_b, comm);
    // Layer 0 always heads the final group.
    let iteration_time = tau_c[0] + t_c[0];
    let compute = trace.forward_time() + t_b.iter().sum::<f64>();
    Ok(Timeline {
        forward_time: trace.forward_time(),
        merged: plan.tags().iter().map(|t| *t == LayerTag::Merged).collect(),
        tau_b,
        t_b,
        tau_c,
        t_c,
        iteration_time,
        comm_nonoverlap: (iteration_time - compute).max(0.0),
    })
}

/// Iteration time without any overlap: every layer all-reduced on its own
/// after the whole backward pass.
pub fn naive_time(trace: &ModelTrace, comm: &AllReduceModel) -> f64 {
    let comm_total: f64 = trace.all_layer_bytes().iter().map(|&b| comm.cost(b)).sum();
    trace.forward_time() + trace.total_backward_time() + comm_total
}

/// Iteration time with every gradient fused into one all-reduce after the
/// backward pass.
pub fn synceasgd_time(trace: &ModelTrace, comm: &AllReduceModel) -> f64 {
    trace.forward_time() + trace.total_backward_time() + comm.cost(trace.total_bytes())
}

/// Speedup over one worker, `N / (1 + r)` with
/// `r = comm_nonoverlap / (t_f + t_b)`.
pub fn speedup(n_workers: u32, forward_time: f64, backward_time: f64, comm_nonoverlap: f64) -> Result<f64> {
    let compute = forward_time + backward_time;
    if compute.is_nan() || compute <= 0.0 {
        return Err(Error::ZeroCompute);
    }
    Ok(f64::from(n_workers) / (1.0 + comm_nonoverlap / compute))
}
