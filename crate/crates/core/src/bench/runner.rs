use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::deploy::{catalogue, Deployment};
use crate::events::EventLog;
use crate::model::{ParticipantDescriptor, ParticipantId};
use crate::orchestrator::Modification;
use crate::sim::IaasSnapshot;

use super::scenario::{Action, Mode, ScenarioConfig};
use super::BenchError;

/// Mean and nearest-rank 95th percentile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub p95: f64,
    pub samples: usize,
}

impl Stat {
    pub fn of(samples: &[u64]) -> Stat {
        if samples.is_empty() {
            return Stat { mean: 0.0, p95: 0.0, samples: 0 };
        }
        let mut sorted = samples.to_vec();
        sorted.sort_unstable();
        let rank = ((0.95 * sorted.len() as f64).ceil() as usize).max(1);
        Stat {
            mean: sorted.iter().sum::<u64>() as f64 / sorted.len() as f64,
            p95: sorted[rank - 1] as f64,
            samples: sorted.len(),
        }
    }
}

/// Resources held across all providers with `n` participants connected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocationSample {
    pub n: u32,
    pub vms: u32,
    pub ram_mb: f64,
}

impl AllocationSample {
    pub fn from_snapshots(n: u32, snapshots: &[IaasSnapshot]) -> Self {
        AllocationSample {
            n,
            vms: snapshots.iter().map(|s| s.vms.len() as u32).sum(),
            ram_mb: snapshots.iter().flat_map(|s| &s.vms).map(|v| v.ram_total_mb).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mode: Mode,
    pub seed: u64,
    pub repetitions: u32,
    pub conference_start_time_ms: Stat,
    pub participant_join_time_ms: Stat,
    /// One sample per growth step, from the first repetition.
    pub allocation: Vec<AllocationSample>,
}

pub struct ScenarioRun {
    pub report: MetricsReport,
    /// Event log of every repetition.
    pub logs: Vec<Arc<EventLog>>,
}

/// Builds the simulated providers and orchestrator a scenario runs on.
pub fn deploy(cfg: &ScenarioConfig, seed: u64) -> Result<Deployment, BenchError> {
    let iaas = cfg.iaas_config(seed)?;
    let providers = cfg.provider_ids().into_iter().map(|p| (p, iaas.clone())).collect();
    let offers = cfg
        .provider_ids()
        .iter()
        .flat_map(|p| catalogue(p.as_str(), &iaas).into_iter().filter(|o| cfg.provider_for(o.substrate_type) == *p))
        .collect();
    Ok(Deployment::new(cfg.orchestrator.clone(), providers, offers)?)
}

struct Repetition {
    start_ms: u64,
    joins_ms: Vec<u64>,
    allocation: Vec<AllocationSample>,
    log: Arc<EventLog>,
}

enum Step<'a> {
    Grow(u32),
    Act(&'a Action),
}

fn run_once(cfg: &ScenarioConfig, seed: u64) -> Result<Repetition, BenchError> {
    let d = deploy(cfg, seed)?;
    let o = d.orchestrator();
    let rec = o.create_conference_spec(cfg.spec()?)?;
    let id = rec.id;
    let sched = &cfg.schedule;

    let mut timeline: Vec<(u64, Step)> =
        (0..sched.steps()).map(|k| (k as u64 * sched.grow_interval_s * 1000, Step::Grow(k))).collect();
    timeline.extend(cfg.actions.iter().map(|a| (a.at_s * 1000, Step::Act(&a.action))));
    // stable: growth before actions at the same instant
    timeline.sort_by_key(|(t, _)| *t);

    let mut joined: Vec<ParticipantId> = Vec::new();
    let mut joins_ms = Vec::new();
    let mut allocation = Vec::new();
    let mut next_name = 0u32;
    let mut join = |count: u32, joined: &mut Vec<ParticipantId>| -> Result<(), BenchError> {
        for _ in 0..count {
            next_name += 1;
            let desc = ParticipantDescriptor::new(format!("u{next_name}"), format!("sip:u{next_name}@bench.example"));
            let out = o.add_participant(&id, desc)?;
            joins_ms.push(out.latency_ms);
            joined.push(out.participant.id);
        }
        Ok(())
    };

    let mut end = 0;
    for (t, step) in timeline {
        o.advance_to(t);
        end = end.max(t);
        match step {
            Step::Grow(k) => {
                let target = (k + 1) * sched.grow_step;
                let capacity = o.conference(&id).map_or(0, |c| c.capacity());
                if sched.resize && capacity != target && target >= joined.len() as u32 {
                    o.modify_conference(&id, Modification::SetConferenceSize(target), None)?;
                }
                join(sched.grow_step, &mut joined)?;
                let snapshots = o.mark_quiescent();
                allocation.push(AllocationSample::from_snapshots(joined.len() as u32, &snapshots));
            }
            Step::Act(Action::Join { count }) => join(*count, &mut joined)?,
            Step::Act(Action::Leave { count }) => {
                for _ in 0..*count {
                    let Some(p) = joined.pop() else { break };
                    o.remove_participant(&id, &p)?;
                }
            }
            Step::Act(Action::AddMedia { media, duration_s }) => {
                o.modify_conference(&id, Modification::AddMedia(*media), *duration_s)?;
            }
            Step::Act(Action::RemoveMedia { media }) => {
                o.modify_conference(&id, Modification::RemoveMedia(*media), None)?;
            }
        }
    }
    o.advance_to(end + sched.grow_interval_s * 1000);
    o.mark_quiescent();
    o.terminate_conference(&id)?;
    o.mark_quiescent();
    Ok(Repetition { start_ms: rec.start_latency_ms, joins_ms, allocation, log: o.log().clone() })
}

/// Runs every repetition of a scenario. Deterministic for a given config.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioRun, BenchError> {
    cfg.validate()?;
    let reps = (0..cfg.repetitions)
        .map(|r| run_once(cfg, cfg.seed.wrapping_add(r as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    let starts: Vec<u64> = reps.iter().map(|r| r.start_ms).collect();
    let joins: Vec<u64> = reps.iter().flat_map(|r| r.joins_ms.iter().copied()).collect();
    let report = MetricsReport {
        mode: cfg.mode,
        seed: cfg.seed,
        repetitions: cfg.repetitions,
        conference_start_time_ms: Stat::of(&starts),
        participant_join_time_ms: Stat::of(&joins),
        allocation: reps[0].allocation.clone(),
    };
    Ok(ScenarioRun { report, logs: reps.into_iter().map(|r| r.log).collect() })
}

/// Runs scenarios that share one workload and differ in mode.
pub fn compare_modes(configs: &[ScenarioConfig]) -> Result<Vec<ScenarioRun>, BenchError> {
    if let Some(first) = configs.first() {
        if let Some(other) = configs.iter().find(|c| !c.same_workload(first)) {
            return Err(BenchError::Config(format!(
                "{} and {} scenarios differ in conference, schedule or actions",
                first.mode, other.mode
            )));
        }
    }
    configs.iter().map(run_scenario).collect()
}

/// The three default scenarios, seeded alike.
pub fn default_comparison(seed: u64) -> Vec<ScenarioConfig> {
    Mode::ALL.into_iter().map(|m| ScenarioConfig { seed, ..ScenarioConfig::new(m) }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stat_nearest_rank() {
        let s = Stat::of(&[5, 1, 3, 2, 4]);
        assert_eq!(s.mean, 3.0);
        assert_eq!(s.p95, 5.0);
        let s = Stat::of(&(1..=100).collect::<Vec<_>>());
        assert_eq!(s.p95, 95.0);
        assert_eq!(Stat::of(&[]).samples, 0);
    }

    #[test]
    fn csip_start_is_boot_init_and_local_connect() {
        let run = run_scenario(&ScenarioConfig::new(Mode::Csip)).unwrap();
        assert_eq!(run.report.conference_start_time_ms.mean, 3000.0 + 500.0 + 10.0 + 5.0);
        assert_eq!(run.report.allocation.len(), 15);
    }

    #[test]
    fn ncc_start_skips_virtualization() {
        let run = run_scenario(&ScenarioConfig::new(Mode::Ncc)).unwrap();
        assert!(run.report.conference_start_time_ms.mean < 500.0);
        // the pool is sized for the peak and never changes
        assert!(run.report.allocation.iter().all(|a| a.vms == 9));
    }

    #[test]
    fn allocation_follows_closed_form() {
        use crate::model::SubstrateType::*;
        use crate::sim::alloc;
        use std::collections::BTreeSet;
        let types = BTreeSet::from([DialInSignaling, AudioMixer]);
        for mode in [Mode::Csip, Mode::Cmip] {
            let cfg = ScenarioConfig::new(mode);
            let run = run_scenario(&cfg).unwrap();
            for s in &run.report.allocation {
                let want = alloc(&cfg.iaas.resources, mode.placement(), s.n, &types).unwrap();
                assert_eq!((s.vms, s.ram_mb), (want.vms, want.ram_mb), "{mode} n={}", s.n);
            }
        }
    }

    #[test]
    fn mismatched_workloads_rejected() {
        let mut cfgs = default_comparison(0);
        cfgs[1].schedule.max_size = 400;
        assert!(matches!(compare_modes(&cfgs), Err(BenchError::Config(_))));
    }
}
