use habsim_devs::testkit::{random_hierarchy, HierarchyShape};
use habsim_devs::{flatten, simulate, LineSink, SimulationClock, Simulator, Time};
use proptest::prelude::*;

fn trace_of(root: habsim_devs::Coupled<String>, parallel: bool) -> Vec<u8> {
    let mut sink = LineSink::new(Vec::new());
    let clock = SimulationClock::virtual_time(Time::ZERO, Time::INFINITY);
    Simulator::new(root).unwrap().parallel(parallel).simulate(&clock, &mut [&mut sink]).unwrap();
    sink.finish().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn flattened_hierarchy_emits_identical_trace(seed in any::<u64>()) {
        let shape = HierarchyShape::default();
        let nested = trace_of(random_hierarchy(seed, shape), false);
        let flat_model = flatten(random_hierarchy(seed, shape)).unwrap();
        prop_assert!(flat_model.is_flat());
        let flat = trace_of(flat_model, false);
        prop_assert_eq!(String::from_utf8_lossy(&nested), String::from_utf8_lossy(&flat));
    }

    #[test]
    fn parallel_coordinator_matches_sequential(seed in any::<u64>()) {
        let shape = HierarchyShape::default();
        let seq = trace_of(random_hierarchy(seed, shape), false);
        let par = trace_of(random_hierarchy(seed, shape), true);
        prop_assert_eq!(seq, par);
    }
}

#[test]
fn random_hierarchies_are_nontrivial() {
    let mut nested_levels = 0;
    let mut traffic = 0;
    for seed in 0..50 {
        let root = random_hierarchy(seed, HierarchyShape::default());
        assert!(root.atomic_count() <= 12);
        if !root.is_flat() {
            nested_levels += 1;
        }
        let report = simulate(root, &SimulationClock::virtual_time(Time::ZERO, Time::INFINITY), &mut []).unwrap();
        traffic += report.event_count;
    }
    assert!(nested_levels > 10, "only {nested_levels} nested hierarchies");
    assert!(traffic > 100, "only {traffic} events");
}
