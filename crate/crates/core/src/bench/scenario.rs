use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::{
    validate_spec, ConferenceModel, ConferenceSpec, Media, ProviderId, RawConferenceSpec, SubstrateType, Technology,
};
use crate::orchestrator::{required_types, OrchestratorConfig};
use crate::sim::{alloc, IaasConfig, LatencyModel, PlacementMode, ResourceModel};

use super::BenchError;

/// Deployment mode under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Non-cloud: substrates on VMs booted ahead of time.
    Ncc,
    /// Cloud, all substrates from one provider, co-hosted.
    Csip,
    /// Cloud, substrates spread over several providers.
    Cmip,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Ncc, Mode::Csip, Mode::Cmip];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Ncc => "ncc",
            Mode::Csip => "csip",
            Mode::Cmip => "cmip",
        }
    }

    pub fn placement(self) -> PlacementMode {
        match self {
            Mode::Ncc => PlacementMode::Prealloc,
            Mode::Csip => PlacementMode::Bundle,
            Mode::Cmip => PlacementMode::PerSubstrate,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ncc" => Ok(Mode::Ncc),
            "csip" => Ok(Mode::Csip),
            "cmip" => Ok(Mode::Cmip),
            other => Err(format!("unknown mode `{other}` (expected ncc, csip or cmip)")),
        }
    }
}

/// Growth schedule: every `grow_interval_s` the conference is resized by
/// `grow_step` and that many participants join, until `max_size`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schedule {
    pub grow_step: u32,
    pub grow_interval_s: u64,
    pub max_size: u32,
    /// Resize explicitly before each burst. When false, joins trigger
    /// scaling on their own.
    pub resize: bool,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule { grow_step: 200, grow_interval_s: 600, max_size: 3000, resize: true }
    }
}

impl Schedule {
    pub fn steps(&self) -> u32 {
        self.max_size / self.grow_step
    }
}

/// Something the driver does at a fixed virtual time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    AddMedia {
        media: Media,
        #[serde(default)]
        duration_s: Option<u64>,
    },
    RemoveMedia {
        media: Media,
    },
    Join {
        count: u32,
    },
    /// The most recent joiners leave first.
    Leave {
        count: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledAction {
    pub at_s: u64,
    #[serde(flatten)]
    pub action: Action,
}

/// Simulator parameters shared by every provider of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IaasSettings {
    pub resources: ResourceModel,
    pub latency: LatencyModel,
    /// NCC pool size. Defaults to what the peak conference needs.
    pub prealloc_vms: Option<u32>,
    /// CMIP provider count, at least 2.
    pub providers: u32,
}

impl Default for IaasSettings {
    fn default() -> Self {
        IaasSettings {
            resources: ResourceModel::default(),
            latency: LatencyModel::default(),
            prealloc_vms: None,
            providers: 2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub repetitions: u32,
    #[serde(default = "default_conference")]
    pub conference: RawConferenceSpec,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub actions: Vec<ScheduledAction>,
    #[serde(default = "manual_scaling")]
    pub orchestrator: OrchestratorConfig,
    #[serde(default)]
    pub iaas: IaasSettings,
}

fn one() -> u32 {
    1
}

fn manual_scaling() -> OrchestratorConfig {
    OrchestratorConfig { autoscale: false, ..Default::default() }
}

/// Dial-in SIP audio conference of one growth step.
pub fn default_conference() -> RawConferenceSpec {
    RawConferenceSpec {
        model: Some(ConferenceModel::PreArrangedDialIn),
        media: Some(BTreeSet::from([Media::Audio])),
        technology: Some(Technology::Sip),
        audio_encodings: Some(vec!["G.711".into()]),
        ..Default::default()
    }
}

impl ScenarioConfig {
    /// The default scenario for `mode`.
    pub fn new(mode: Mode) -> Self {
        ScenarioConfig {
            mode,
            seed: 0,
            repetitions: 1,
            conference: default_conference(),
            schedule: Schedule::default(),
            actions: Vec::new(),
            orchestrator: manual_scaling(),
            iaas: IaasSettings::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, BenchError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Conference description with the size of the first growth step.
    pub fn spec(&self) -> Result<ConferenceSpec, BenchError> {
        let mut spec = validate_spec(&self.conference).map_err(|e| BenchError::Config(e.to_string()))?;
        if self.conference.conference_size.is_none() {
            spec.conference_size = self.schedule.grow_step;
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::Config(m));
        let s = &self.schedule;
        if s.grow_step == 0 || s.max_size < s.grow_step {
            return bad(format!("need 0 < grow_step ({}) <= max_size ({})", s.grow_step, s.max_size));
        }
        if s.grow_interval_s == 0 {
            return bad("grow_interval_s must be > 0".into());
        }
        if self.repetitions == 0 {
            return bad("repetitions must be >= 1".into());
        }
        if self.mode == Mode::Cmip && self.iaas.providers < 2 {
            return bad("CMIP needs at least 2 providers".into());
        }
        self.iaas.resources.validate().map_err(BenchError::Config)?;
        self.iaas.latency.validate().map_err(BenchError::Config)?;
        self.orchestrator.policy.validate().map_err(BenchError::Config)?;
        self.orchestrator.weights.validate().map_err(BenchError::Config)?;
        let spec = self.spec()?;
        let types: BTreeSet<SubstrateType> = required_types(&spec).into_iter().collect();
        if alloc(&self.iaas.resources, self.mode.placement(), 1, &types).is_none() {
            return bad("one participant does not fit a VM".into());
        }
        Ok(())
    }

    /// Provider ids of this scenario.
    pub fn provider_ids(&self) -> Vec<ProviderId> {
        let n = if self.mode == Mode::Cmip { self.iaas.providers } else { 1 };
        (0..n).map(|i| ProviderId(format!("iaas-{}", (b'a' + i as u8 % 26) as char))).collect()
    }

    /// Provider hosting substrate type `t`. In CMIP signaling goes to the
    /// first provider and every other type round-robins over the rest.
    pub fn provider_for(&self, t: SubstrateType) -> ProviderId {
        let ids = self.provider_ids();
        if ids.len() == 1 || t.is_signaling() {
            return ids[0].clone();
        }
        let others: Vec<SubstrateType> = SubstrateType::ALL.into_iter().filter(|t| !t.is_signaling()).collect();
        let pos = others.iter().position(|&o| o == t).expect("non-signaling type");
        ids[1 + pos % (ids.len() - 1)].clone()
    }

    pub fn iaas_config(&self, seed: u64) -> Result<IaasConfig, BenchError> {
        let placement = self.mode.placement();
        let prealloc_vms = match (self.mode, self.iaas.prealloc_vms) {
            (Mode::Ncc, Some(n)) => n,
            (Mode::Ncc, None) => {
                let types: BTreeSet<SubstrateType> = required_types(&self.spec()?).into_iter().collect();
                alloc(&self.iaas.resources, placement, self.schedule.max_size, &types).map_or(0, |a| a.vms)
            }
            _ => 0,
        };
        Ok(IaasConfig {
            placement,
            resources: self.iaas.resources.clone(),
            latency: self.iaas.latency.clone(),
            prealloc_vms,
            seed,
        })
    }

    /// Whether two scenarios describe the same workload.
    pub fn same_workload(&self, other: &ScenarioConfig) -> bool {
        self.conference == other.conference && self.schedule == other.schedule && self.actions == other.actions
    }
}
