use std::collections::BTreeSet;

use confpaas_core::model::SubstrateType;
use confpaas_core::sim::{alloc, IaasConfig, PlacementMode, ResourceModel, SimIaas};
use confpaas_core::wire::{BundleHint, IaasRequest, RequestBody, Status};

/// Footprints in tenths of a MB, so the closed form stays in integers.
fn tenths(t: SubstrateType) -> u64 {
    match t {
        SubstrateType::DialInSignaling | SubstrateType::DialOutSignaling => 10,
        SubstrateType::AudioMixer => 50,
        SubstrateType::VideoMixer => 200,
        SubstrateType::InstantMessaging => 5,
        SubstrateType::FloorControl => 2,
    }
}

const USABLE_TENTHS: u64 = (4096 - 512) * 10;

fn closed_form(mode: PlacementMode, n: u64, types: &BTreeSet<SubstrateType>) -> u64 {
    match mode {
        PlacementMode::PerSubstrate => types.iter().map(|&t| (n * tenths(t)).div_ceil(USABLE_TENTHS)).sum(),
        _ => {
            let c = types.iter().map(|&t| USABLE_TENTHS / (types.len() as u64 * tenths(t))).min().unwrap();
            n.div_ceil(c)
        }
    }
}

/// Participants one bundle VM holds, found by adding them one at a time
/// until some type overflows its equal share.
fn enumerate_bundle_capacity(types: &BTreeSet<SubstrateType>) -> u64 {
    let share = USABLE_TENTHS / types.len() as u64;
    (0..).find(|c| types.iter().any(|&t| (c + 1) * tenths(t) > share)).unwrap()
}

/// Smallest VM count found by trying 0, 1, 2, ... VMs.
fn enumerate(mode: PlacementMode, n: u64, types: &BTreeSet<SubstrateType>, per_vm: u64) -> u64 {
    match mode {
        PlacementMode::PerSubstrate => types
            .iter()
            .map(|&t| (0..).find(|k| k * USABLE_TENTHS >= n * tenths(t)).unwrap())
            .sum(),
        _ => (0..).find(|k| k * per_vm >= n).unwrap(),
    }
}

fn subsets() -> Vec<BTreeSet<SubstrateType>> {
    (1u32..64)
        .map(|mask| SubstrateType::ALL.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, t)| *t).collect())
        .collect()
}

#[test]
fn alloc_matches_closed_form_everywhere() {
    let model = ResourceModel::default();
    let pair = BTreeSet::from([SubstrateType::DialInSignaling, SubstrateType::AudioMixer]);
    for mode in [PlacementMode::Bundle, PlacementMode::PerSubstrate] {
        for n in 1..=5000u32 {
            let got = alloc(&model, mode, n, &pair).unwrap();
            let want = closed_form(mode, n as u64, &pair);
            assert_eq!(got.vms as u64, want, "{mode:?} n={n}");
            assert_eq!(got.ram_mb, want as f64 * 4096.0);
        }
    }
}

#[test]
fn closed_form_matches_enumeration_for_every_type_set() {
    let model = ResourceModel::default();
    for types in subsets() {
        let per_vm = enumerate_bundle_capacity(&types);
        for mode in [PlacementMode::Bundle, PlacementMode::PerSubstrate] {
            for n in (1..=5000u64).step_by(7) {
                let want = enumerate(mode, n, &types, per_vm);
                assert_eq!(closed_form(mode, n, &types), want, "{mode:?} {types:?} n={n}");
                assert_eq!(alloc(&model, mode, n as u32, &types).unwrap().vms as u64, want);
            }
        }
    }
}

fn activate(sim: &mut SimIaas, t: SubstrateType, size: u32, bundle: Option<BundleHint>) {
    let r = sim.handle(&IaasRequest::new("A".into(), 0, RequestBody::ActivateSubstrate { substrate_type: t, size, bundle }));
    assert_eq!(r.status, Status::Ok, "{r:?}");
}

#[test]
fn simulator_layout_agrees_with_alloc() {
    let model = ResourceModel::default();
    let pair = BTreeSet::from([SubstrateType::DialInSignaling, SubstrateType::AudioMixer]);
    for mode in [PlacementMode::Bundle, PlacementMode::PerSubstrate] {
        for n in (1..=5000u32).step_by(37) {
            let mut sim = SimIaas::new("A".into(), IaasConfig::new(mode));
            let hint = (mode == PlacementMode::Bundle).then(|| BundleHint { group: "g".into(), types: pair.clone() });
            for &t in &pair {
                activate(&mut sim, t, n, hint.clone());
            }
            let snap = sim.snapshot();
            assert_eq!(snap.vms.len() as u32, alloc(&model, mode, n, &pair).unwrap().vms, "{mode:?} n={n}");
            assert!(snap.vms.iter().all(|v| v.fits()));
        }
    }
}

#[test]
fn crossover_sweep() {
    let model = ResourceModel::default();
    let pair = BTreeSet::from([SubstrateType::DialInSignaling, SubstrateType::AudioMixer]);
    let curve = |mode| (0..=5000).map(|n| alloc(&model, mode, n, &pair).unwrap().vms).collect::<Vec<u32>>();
    let (csip, cmip) = (curve(PlacementMode::Bundle), curve(PlacementMode::PerSubstrate));
    let holds = |star: usize| {
        (1..=5000).all(|n| if n < star { csip[n] <= cmip[n] } else { cmip[n] <= csip[n] })
    };
    let valid: Vec<usize> = (1..=5000).filter(|&s| holds(s)).collect();
    assert!(valid.contains(&1051));
    // any crossover point in this window separates the two regimes
    assert_eq!((valid[0], *valid.last().unwrap()), (359, 1075));
}
