//! Scaling sweeps: every strategy at every worker count for one all-reduce
//! algorithm.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comm_model::{coefficients_for, AllReduceAlgorithm, AllReduceModel, NetworkParams, TreeStartup};
use crate::error::{Error, Result};
use crate::planner;
use crate::timeline::{self, MergePlan};
use crate::trace::{sec_to_us, ModelTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Layer-wise all-reduce after the whole backward pass.
    Naive,
    /// Layer-wise all-reduce pipelined with backward computation.
    Wfbp,
    /// One fused all-reduce after the backward pass.
    #[serde(rename = "synceasgd")]
    SyncEasgd,
    /// Pipelined all-reduce of optimally merged groups.
    #[serde(rename = "mgwfbp")]
    MgWfbp,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Self::Naive, Self::Wfbp, Self::SyncEasgd, Self::MgWfbp];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Naive => "naive",
            Self::Wfbp => "wfbp",
            Self::SyncEasgd => "synceasgd",
            Self::MgWfbp => "mgwfbp",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(raw: &str) -> std::result::Result<Self, Self::Err> {
        match raw.trim().to_ascii_lowercase().as_str() {
            "naive" => Ok(Self::Naive),
            "wfbp" => Ok(Self::Wfbp),
            "synceasgd" => Ok(Self::SyncEasgd),
            "mgwfbp" => Ok(Self::MgWfbp),
            _ => Err(format!("unknown strategy: {raw}")),
        }
    }
}

/// Result of evaluating one strategy on one trace and model.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyOutcome {
    pub strategy: Strategy,
    pub iteration_time: f64,
    pub comm_nonoverlap: f64,
    /// `None` for the naive strategy, which has no merge plan.
    pub plan: Option<MergePlan>,
}

impl StrategyOutcome {
    pub fn merged_layers(&self) -> usize {
        self.plan.as_ref().map_or(0, merged_layer_count)
    }

    /// Number of all-reduce calls issued.
    pub fn groups(&self, layers: usize) -> usize {
        self.plan.as_ref().map_or(layers, MergePlan::group_count)
    }
}

/// Evaluates one strategy. Only the merged strategy needs `a > 0`.
pub fn evaluate_strategy(
    trace: &ModelTrace,
    comm: &AllReduceModel,
    strategy: Strategy,
) -> Result<StrategyOutcome> {
    let compute = trace.forward_time() + trace.total_backward_time();
    let plan = match strategy {
        Strategy::Naive => {
            let t = timeline::naive_time(trace, comm);
            return Ok(StrategyOutcome {
                strategy,
                iteration_time: t,
                comm_nonoverlap: (t - compute).max(0.0),
                plan: None,
            });
        }
        Strategy::Wfbp => MergePlan::all_normal(trace.len()),
        Strategy::SyncEasgd => MergePlan::all_merged(trace.len()),
        Strategy::MgWfbp => planner::optimal_plan(trace, comm)?,
    };
    let tl = timeline::evaluate(trace, &plan, comm)?;
    Ok(StrategyOutcome {
        strategy,
        iteration_time: tl.iteration_time,
        comm_nonoverlap: tl.comm_nonoverlap,
        plan: Some(plan),
    })
}

pub fn merged_layer_count(plan: &MergePlan) -> usize {
    plan.merged_count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_workers: u32,
    pub strategy: Strategy,
    pub algo: AllReduceAlgorithm,
    pub iter_time_sec: f64,
    pub comm_nonoverlap_sec: f64,
    pub speedup: f64,
    /// Layers tagged merged.
    pub n_merged: usize,
    /// All-reduce calls issued per iteration.
    pub n_groups: usize,
}

/// A worker count whose evaluation failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub n_workers: u32,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepResult {
    /// Ordered by `(n_workers, strategy)`.
    pub rows: Vec<SweepRow>,
    pub failures: Vec<SweepFailure>,
    pub warnings: Vec<String>,
}

impl SweepResult {
    pub fn rows_for(&self, n_workers: u32) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(move |r| r.n_workers == n_workers)
    }

    pub fn row(&self, n_workers: u32, strategy: Strategy) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.n_workers == n_workers && r.strategy == strategy)
    }

    pub fn worker_counts(&self) -> Vec<u32> {
        let mut counts: Vec<u32> = self.rows.iter().map(|r| r.n_workers).collect();
        counts.dedup();
        counts
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record([
            "n_workers",
            "strategy",
            "algo",
            "iter_time_us",
            "comm_nonoverlap_us",
            "speedup",
            "n_merged",
        ])?;
        for r in &self.rows {
            csv.write_record([
                r.n_workers.to_string(),
                r.strategy.to_string(),
                r.algo.to_string(),
                sec_to_us(r.iter_time_sec).to_string(),
                sec_to_us(r.comm_nonoverlap_sec).to_string(),
                r.speedup.to_string(),
                r.n_merged.to_string(),
            ])?;
        }
        csv.flush()?;
        Ok(())
    }

    /// Long-format JSON: one object per row with microsecond times, plus
    /// failures and warnings.
    pub fn write_json<W: Write>(&self, mut writer: W) -> Result<()> {
        #[derive(Serialize)]
        struct LongRow<'a> {
            n_workers: u32,
            strategy: Strategy,
            algo: &'a str,
            iter_time_us: f64,
            comm_nonoverlap_us: f64,
            speedup: f64,
            n_merged: usize,
            n_groups: usize,
        }
        #[derive(Serialize)]
        struct Doc<'a> {
            rows: Vec<LongRow<'a>>,
            failures: &'a [SweepFailure],
            warnings: &'a [String],
        }
        let doc = Doc {
            rows: self
                .rows
                .iter()
                .map(|r| LongRow {
                    n_workers: r.n_workers,
                    strategy: r.strategy,
                    algo: r.algo.as_str(),
                    iter_time_us: sec_to_us(r.iter_time_sec),
                    comm_nonoverlap_us: sec_to_us(r.comm_nonoverlap_sec),
                    speedup: r.speedup,
                    n_merged: r.n_merged,
                    n_groups: r.n_groups,
                })
                .collect(),
            failures: &self.failures,
            warnings: &self.warnings,
        };
        serde_json::to_writer_pretty(&mut writer, &doc)?;
        writer.write_all(b"\n")?;
        Ok(())
    }
}

/// Powers of two from 4 to 2048.
pub fn default_worker_counts() -> Vec<u32> {
    (2..=11).map(|k| 1u32 << k).collect()
}

type RowsWithWarnings = (Vec<SweepRow>, Vec<String>);

fn sweep_one(
    trace: &ModelTrace,
    net: &NetworkParams,
    algo: AllReduceAlgorithm,
    tree_startup: TreeStartup,
    n_workers: u32,
) -> Result<RowsWithWarnings> {
    let derived = coefficients_for(algo, &net.with_workers(n_workers), tree_startup)?;
    let compute_f = trace.forward_time();
    let compute_b = trace.total_backward_time();
    let rows = Strategy::ALL
        .iter()
        .map(|&strategy| {
            let outcome = evaluate_strategy(trace, &derived.model, strategy)?;
            Ok(SweepRow {
                n_workers,
                strategy,
                algo,
                iter_time_sec: outcome.iteration_time,
                comm_nonoverlap_sec: outcome.comm_nonoverlap,
                speedup: timeline::speedup(n_workers, compute_f, compute_b, outcome.comm_nonoverlap)?,
                n_merged: outcome.merged_layers(),
                n_groups: outcome.groups(trace.len()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((rows, derived.warnings))
}

/// Evaluates all four strategies at each worker count.
///
/// A failing worker count is recorded in `failures` and the sweep goes on.
/// Rows come out ordered by `(n_workers, strategy)` whatever the
/// evaluation order.
pub fn run_sweep(
    trace: &ModelTrace,
    net: &NetworkParams,
    algo: AllReduceAlgorithm,
    tree_startup: TreeStartup,
    worker_counts: &[u32],
) -> Result<SweepResult> {
    if worker_counts.is_empty() {
        return Err(Error::InvalidSweep("worker count list is empty".into()));
    }
    let mut counts = worker_counts.to_vec();
    counts.sort_unstable();
    counts.dedup();

    let outcomes: Vec<(u32, Result<RowsWithWarnings>)> = counts
        .par_iter()
        .map(|&n| (n, sweep_one(trace, net, algo, tree_startup, n)))
        .collect();

    let mut result = SweepResult::default();
    for (n, outcome) in outcomes {
        match outcome {
            Ok((rows, warnings)) => {
                result.rows.extend(rows);
                for w in warnings {
                    if !result.warnings.contains(&w) {
                        result.warnings.push(w);
                    }
                }
            }
            Err(e) => result.failures.push(SweepFailure {
                n_workers: n,
                message: e.to_string(),
            }),
        }
    }
    result.rows.sort_by_key(|r| (r.n_workers, r.strategy));
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{resnet50_like, LayerProfile};

    fn cluster1_net() -> NetworkParams {
        NetworkParams::from_ring_fit(&AllReduceModel::new(9.72e-4, 1.97e-9).unwrap(), 16).unwrap()
    }

    #[test]
    fn strategy_names() {
        for s in Strategy::ALL {
            assert_eq!(s.as_str().parse::<Strategy>().unwrap(), s);
        }
        assert!("bogus".parse::<Strategy>().is_err());
        assert_eq!(serde_json::to_value(Strategy::SyncEasgd).unwrap(), "synceasgd");
    }

    #[test]
    fn merged_counts() {
        assert_eq!(merged_layer_count(&MergePlan::all_normal(7)), 0);
        assert_eq!(merged_layer_count(&MergePlan::all_merged(7)), 6);
    }

    #[test]
    fn default_counts_are_powers_of_two() {
        assert_eq!(default_worker_counts(), vec![4, 8, 16, 32, 64, 128, 256, 512, 1024, 2048]);
    }

    #[test]
    fn empty_worker_list_is_an_error() {
        let t = resnet50_like();
        assert!(run_sweep(&t, &cluster1_net(), AllReduceAlgorithm::Ring, TreeStartup::default(), &[]).is_err());
    }

    #[test]
    fn bad_worker_counts_are_annotated_not_fatal() {
        let t = resnet50_like();
        let r = run_sweep(&t, &cluster1_net(), AllReduceAlgorithm::Ring, TreeStartup::default(), &[1, 8]).unwrap();
        assert_eq!(r.failures.len(), 1);
        assert_eq!(r.failures[0].n_workers, 1);
        assert_eq!(r.rows.len(), 4);
    }

    #[test]
    fn near_free_network_scales_linearly() {
        let t = resnet50_like();
        let net = NetworkParams::new(1e-15, 0.0, 0.0, 2).unwrap();
        let r = run_sweep(&t, &net, AllReduceAlgorithm::Ring, TreeStartup::default(), &[4, 64]).unwrap();
        for row in &r.rows {
            let n = f64::from(row.n_workers);
            assert!(row.speedup > 0.999 * n, "{row:?}");
        }
    }

    #[test]
    fn rows_are_ordered_and_dominance_holds() {
        let t = resnet50_like();
        let r = run_sweep(
            &t,
            &cluster1_net(),
            AllReduceAlgorithm::Ring,
            TreeStartup::default(),
            &[64, 4, 16],
        )
        .unwrap();
        let keys: Vec<_> = r.rows.iter().map(|r| (r.n_workers, r.strategy)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        for n in r.worker_counts() {
            let get = |s| r.row(n, s).unwrap().iter_time_sec;
            let mg = get(Strategy::MgWfbp);
            assert!(mg <= get(Strategy::Wfbp) && mg <= get(Strategy::SyncEasgd));
            assert!(get(Strategy::Naive) >= get(Strategy::Wfbp).max(get(Strategy::SyncEasgd)));
        }
        for row in &r.rows {
            assert!(row.speedup <= f64::from(row.n_workers));
        }
    }

    #[test]
    fn csv_output_is_deterministic() {
        let t = resnet50_like();
        let run = || {
            let r = run_sweep(
                &t,
                &cluster1_net(),
                AllReduceAlgorithm::Ring,
                TreeStartup::default(),
                &default_worker_counts(),
            )
            .unwrap();
            let mut buf = Vec::new();
            r.write_csv(&mut buf).unwrap();
            buf
        };
        let first = run();
        assert_eq!(first, run());
        let text = String::from_utf8(first).unwrap();
        assert!(text.starts_with("n_workers,strategy,algo,iter_time_us,comm_nonoverlap_us,speedup,n_merged\n"));
        assert_eq!(text.lines().count(), 1 + 4 * 10);
    }

    #[test]
    fn single_layer_strategies_coincide() {
        let t = ModelTrace::new(vec![LayerProfile::new("only", 1000, 0.1)], 0.05, 4).unwrap();
        let c = AllReduceModel::new(1e-3, 1e-9).unwrap();
        let times: Vec<f64> = Strategy::ALL
            .iter()
            .map(|&s| evaluate_strategy(&t, &c, s).unwrap().iteration_time)
            .collect();
        for w in times.windows(2) {
            assert!((w[0] - w[1]).abs() < 1e-15);
        }
    }
}
