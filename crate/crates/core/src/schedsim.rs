//! Offline batching-scheduler simulator.
//!
//! Jobs are chunked into fixed-size batches under a policy (FCFS, seeded
//! random, SJF on true lengths, SJF on predicted lengths) and executed
//! sequentially under a linear cost model: a batch pays prefill time on its
//! longest prompt and decode time on its longest true output, and every job
//! in the batch is allocated that longest output. The report carries
//! throughput, mean job-completion time, and the padding ratio
//! `(allocated - actual) / actual` over decode tokens.
//!
//! Batching is static by design: padding waste is a static-batching
//! phenomenon, and the simulator exists to measure exactly that. Only
//! orderings between policies are meaningful, never absolute seconds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::SeededRng;

/// One inference request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    pub prompt_len: u32,
    pub true_out: u32,
    pub predicted_out: u32,
    /// Arrival time in seconds; 0 in offline mode.
    #[serde(default)]
    pub submit_time: f64,
}

impl Job {
    pub fn new(id: String, prompt_len: u32, true_out: u32, predicted_out: u32) -> Result<Self> {
        if prompt_len == 0 || true_out == 0 {
            return Err(Error::InvalidArgument {
                what: "Job",
                reason: format!("job {id}: prompt_len and true_out must be >= 1"),
            });
        }
        Ok(Self {
            id,
            prompt_len,
            true_out,
            predicted_out: predicted_out.max(1),
            submit_time: 0.0,
        })
    }
}

/// Linear per-token cost model for one batch step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    pub t_prefill_per_token: f64,
    pub t_decode_per_step: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            t_prefill_per_token: 1e-4,
            t_decode_per_step: 2e-3,
        }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_prefill_per_token > 0.0) || !(self.t_decode_per_step > 0.0) {
            return Err(Error::InvalidArgument {
                what: "cost model",
                reason: format!(
                    "per-token costs ({}, {}) must be positive",
                    self.t_prefill_per_token, self.t_decode_per_step
                ),
            });
        }
        Ok(())
    }
}

/// Batch-forming policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Policy {
    Fcfs,
    Random { seed: u64 },
    SjfOracle,
    SjfPredicted,
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Policy::Fcfs => write!(f, "fcfs"),
            Policy::Random { .. } => write!(f, "random"),
            Policy::SjfOracle => write!(f, "sjf_oracle"),
            Policy::SjfPredicted => write!(f, "sjf_predicted"),
        }
    }
}

/// An ordered batch plan: indices into the job list, chunked by batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchPlan {
    pub policy: Policy,
    pub batches: Vec<Vec<usize>>,
}

/// Order jobs under a policy and chunk them into batches of at most `b`.
///
/// SJF sorts ascending by (length, id): ties break on the job id so plans
/// are stable.
pub fn plan_batches(jobs: &[Job], policy: Policy, batch_size: usize) -> Result<BatchPlan> {
    if jobs.is_empty() {
        return Err(Error::EmptyInput { what: "plan_batches jobs" });
    }
    if batch_size == 0 {
        return Err(Error::InvalidArgument {
            what: "batch-size",
            reason: "must be >= 1".into(),
        });
    }
    let mut order: Vec<usize> = (0..jobs.len()).collect();
    match policy {
        Policy::Fcfs => {}
        Policy::Random { seed } => {
            let mut rng = SeededRng::new(seed);
            rng.shuffle(&mut order);
        }
        Policy::SjfOracle => {
            order.sort_by(|&a, &b| {
                (jobs[a].true_out, &jobs[a].id).cmp(&(jobs[b].true_out, &jobs[b].id))
            });
        }
        Policy::SjfPredicted => {
            order.sort_by(|&a, &b| {
                (jobs[a].predicted_out, &jobs[a].id).cmp(&(jobs[b].predicted_out, &jobs[b].id))
            });
        }
    }
    let batches = order.chunks(batch_size).map(|c| c.to_vec()).collect();
    Ok(BatchPlan { policy, batches })
}

/// Per-job outcome of a simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct JobOutcome {
    pub id: String,
    pub completion_time: f64,
    pub jct: f64,
}

/// Aggregate result of simulating one plan.
#[derive(Debug, Clone)]
pub struct SimReport {
    pub policy: String,
    pub outcomes: Vec<JobOutcome>,
    pub total_time: f64,
    pub throughput: f64,
    pub mean_jct: f64,
    pub padding_ratio: f64,
    /// The executed plan, echoed as job ids per batch.
    pub plan: Vec<Vec<String>>,
}

/// Execute a batch plan under the cost model.
///
/// Batch `b` takes `t_prefill * max(prompt_len) + t_decode * max(true_out)`
/// and starts when the previous batch finished (or when its last job has
/// arrived, for non-zero submit times). Every job in a batch is allocated
/// `max(true_out in batch)` decode tokens.
pub fn simulate(plan: &BatchPlan, jobs: &[Job], cost: &CostModel) -> Result<SimReport> {
    cost.validate()?;
    let mut seen = vec![false; jobs.len()];
    for batch in &plan.batches {
        for &i in batch {
            if i >= jobs.len() {
                return Err(Error::PlanMismatch {
                    reason: format!("plan references job index {i} of {}", jobs.len()),
                });
            }
            if seen[i] {
                return Err(Error::PlanMismatch {
                    reason: format!("job {} appears twice in the plan", jobs[i].id),
                });
            }
            seen[i] = true;
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::PlanMismatch {
            reason: "plan does not cover every job".into(),
        });
    }

    let mut outcomes = Vec::with_capacity(jobs.len());
    let mut clock = 0.0f64;
    let mut allocated = 0u64;
    let mut actual = 0u64;
    let mut plan_echo = Vec::with_capacity(plan.batches.len());
    for batch in &plan.batches {
        let max_prompt = batch.iter().map(|&i| jobs[i].prompt_len).max().unwrap_or(0);
        let max_out = batch.iter().map(|&i| jobs[i].true_out).max().unwrap_or(0);
        let latest_arrival = batch
            .iter()
            .map(|&i| jobs[i].submit_time)
            .fold(0.0f64, f64::max);
        let start = clock.max(latest_arrival);
        let duration = cost.t_prefill_per_token * max_prompt as f64
            + cost.t_decode_per_step * max_out as f64;
        let finish = start + duration;
        for &i in batch {
            outcomes.push(JobOutcome {
                id: jobs[i].id.clone(),
                completion_time: finish,
                jct: finish - jobs[i].submit_time,
            });
            allocated += max_out as u64;
            actual += jobs[i].true_out as u64;
        }
        clock = finish;
        plan_echo.push(batch.iter().map(|&i| jobs[i].id.clone()).collect());
    }

    let n = jobs.len() as f64;
    let mean_jct = outcomes.iter().map(|o| o.jct).sum::<f64>() / n;
    Ok(SimReport {
        policy: plan.policy.to_string(),
        outcomes,
        total_time: clock,
        throughput: n / clock,
        mean_jct,
        padding_ratio: (allocated - actual) as f64 / actual as f64,
        plan: plan_echo,
    })
}

/// Plan and simulate every policy over the same jobs.
pub fn compare_policies(
    jobs: &[Job],
    policies: &[Policy],
    batch_size: usize,
    cost: &CostModel,
) -> Result<Vec<SimReport>> {
    policies
        .iter()
        .map(|&p| simulate(&plan_batches(jobs, p, batch_size)?, jobs, cost))
        .collect()
}

/// Render policy comparison rows as CSV.
pub fn comparison_csv(reports: &[SimReport], config_echo: &str) -> String {
    let mut out = String::new();
    out.push_str(&format!("# {config_echo}\n"));
    out.push_str("policy,throughput,mean_jct,padding_ratio\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.policy, r.throughput, r.mean_jct, r.padding_ratio
        ));
    }
    out
}

/// Parse jobs from CSV with the header `id,prompt_len,true_out,predicted_out`
/// (and an optional `submit_time` column).
pub fn read_jobs_csv(reader: impl std::io::Read) -> Result<Vec<Job>> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers = csv_reader
        .headers()
        .map_err(|e| Error::InvalidArgument {
            what: "jobs csv",
            reason: format!("cannot read header: {e}"),
        })?
        .clone();
    let expected = ["id", "prompt_len", "true_out", "predicted_out"];
    for (i, name) in expected.iter().enumerate() {
        if headers.get(i) != Some(name) {
            return Err(Error::InvalidArgument {
                what: "jobs csv",
                reason: format!(
                    "expected header to start with {expected:?}, got {:?}",
                    headers.iter().collect::<Vec<_>>()
                ),
            });
        }
    }
    let has_submit = headers.get(4) == Some("submit_time");
    let mut jobs = Vec::new();
    for (line, row) in csv_reader.records().enumerate() {
        let row = row.map_err(|e| Error::InvalidArgument {
            what: "jobs csv",
            reason: format!("row {}: {e}", line + 2),
        })?;
        let field = |i: usize| -> Result<&str> {
            row.get(i).ok_or_else(|| Error::InvalidArgument {
                what: "jobs csv",
                reason: format!("row {}: missing column {i}", line + 2),
            })
        };
        let parse_u32 = |i: usize| -> Result<u32> {
            field(i)?.trim().parse().map_err(|e| Error::InvalidArgument {
                what: "jobs csv",
                reason: format!("row {}: column {i}: {e}", line + 2),
            })
        };
        let mut job = Job::new(
            field(0)?.to_string(),
            parse_u32(1)?,
            parse_u32(2)?,
            parse_u32(3)?,
        )?;
        if has_submit {
            job.submit_time = field(4)?.trim().parse().map_err(|e| Error::InvalidArgument {
                what: "jobs csv",
                reason: format!("row {}: submit_time: {e}", line + 2),
            })?;
        }
        jobs.push(job);
    }
    if jobs.is_empty() {
        return Err(Error::EmptyInput { what: "jobs csv" });
    }
    Ok(jobs)
}

/// Render jobs as the CSV accepted by [`read_jobs_csv`].
pub fn write_jobs_csv(jobs: &[Job]) -> String {
    let mut out = String::from("id,prompt_len,true_out,predicted_out,submit_time\n");
    for j in jobs {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            j.id, j.prompt_len, j.true_out, j.predicted_out, j.submit_time
        ));
    }
    out
}

/// Assign seeded Poisson arrivals (exponential inter-arrival gaps at `rate`
/// jobs per second) in job order.
pub fn assign_poisson_arrivals(jobs: &mut [Job], rate: f64, seed: u64) -> Result<()> {
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::InvalidArgument {
            what: "poisson-rate",
            reason: format!("{rate} must be positive"),
        });
    }
    let mut rng = SeededRng::new(seed);
    let mut clock = 0.0;
    for job in jobs {
        // inverse-CDF exponential draw
        let u: f64 = rng.uniform();
        clock += -(1.0 - u).ln() / rate;
        job.submit_time = clock;
    }
    Ok(())
}
