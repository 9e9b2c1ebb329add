// SPDX-License-Identifier: MIT OR Apache-2.0

use approx::assert_abs_diff_eq;
use gatecircuits::discovery::discover;
use gatecircuits::evaluation::{self, proportions};
use gatecircuits::model::PlantedNetwork;
use gatecircuits::{
    classify_gates, make_task, AblationMode, Algorithm, Circuit, ComputationalGraph, DiscoveryConfig, EdgeModel,
    GateNetworkSpec, Model, ModelF32, ModelSpec, OutputDistance, RunSet, Strategy, TaskSpec,
};
use proptest::prelude::*;

fn planted(seed: u64) -> (Model<f64>, RunSet<f64>) {
    let spec = PlantedNetwork::graded(2, 2).build(seed).unwrap();
    let sources = spec.sources.len();
    let m = Model::from_spec(&ModelSpec::GateNetwork(spec)).unwrap();
    let d = make_task(&TaskSpec::GateClean { sources }, 0).unwrap();
    let runs = RunSet::new(&m, &d, AblationMode::Zero, 0).unwrap();
    (m, runs)
}

fn subset(g: &ComputationalGraph, bits: &[bool]) -> Circuit {
    g.circuit_from_indices(bits.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn labels_partition_the_union(seed in 0u64..1000, a in prop::collection::vec(any::<bool>(), 30), b in prop::collection::vec(any::<bool>(), 30)) {
        let (m, _) = planted(seed);
        let g = m.graph();
        let n = g.num_edges().min(30);
        let (ns, dn) = (subset(g, &a[..n]), subset(g, &b[..n]));
        let l = classify_gates(&ns, &dn).unwrap();
        let p = proportions(&l);
        prop_assert_eq!(p.total(), ns.union(&dn).unwrap().len());
        prop_assert!(l.and().intersection(l.or()).unwrap().is_empty());
        prop_assert_eq!(l.and().union(l.adder()).unwrap(), ns.clone());
        prop_assert_eq!(l.or().union(l.adder()).unwrap(), dn.clone());
        // Swapping strategies swaps AND and OR.
        let r = classify_gates(&dn, &ns).unwrap();
        prop_assert_eq!(r.and(), l.or());
        prop_assert_eq!(r.adder(), l.adder());
    }

    #[test]
    fn proportions_ignore_edge_order(seed in 0u64..1000, bits in prop::collection::vec(any::<bool>(), 30)) {
        let (m, _) = planted(seed);
        let g = m.graph();
        let n = g.num_edges().min(30);
        let idx: Vec<usize> = (0..n).filter(|&i| bits[i]).collect();
        let fwd = g.circuit_from_indices(idx.iter().copied()).unwrap();
        let rev = g.circuit_from_indices(idx.iter().rev().copied()).unwrap();
        let full = g.full_circuit();
        prop_assert_eq!(proportions(&classify_gates(&fwd, &full).unwrap()), proportions(&classify_gates(&rev, &full).unwrap()));
    }

    #[test]
    fn names_round_trip_in_canonical_order(seed in 0u64..1000, bits in prop::collection::vec(any::<bool>(), 30)) {
        let (m, _) = planted(seed);
        let g = m.graph();
        let n = g.num_edges().min(30);
        let c = subset(g, &bits[..n]);
        let names = g.edge_names(&c);
        let idx: Vec<usize> = c.indices().collect();
        prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(g.circuit_from_names(&names).unwrap(), c);
    }

    #[test]
    fn hamming_is_a_metric(seed in 0u64..100, a in prop::collection::vec(any::<bool>(), 30), b in prop::collection::vec(any::<bool>(), 30), c in prop::collection::vec(any::<bool>(), 30)) {
        let (m, _) = planted(seed);
        let g = m.graph();
        let n = g.num_edges().min(30);
        let (x, y, z) = (subset(g, &a[..n]), subset(g, &b[..n]), subset(g, &c[..n]));
        let d = |p: &Circuit, q: &Circuit| p.hamming_distance(q).unwrap();
        prop_assert_eq!(d(&x, &x), 0);
        prop_assert_eq!(d(&x, &y), d(&y, &x));
        prop_assert!(d(&x, &z) <= d(&x, &y) + d(&y, &z));
    }

    #[test]
    fn metric_duality(seed in 0u64..1000) {
        let (m, runs) = planted(seed);
        let g = m.graph();
        let f = evaluation::faithfulness(&m, &runs, &g.full_circuit(), OutputDistance::Sink).unwrap();
        let c = evaluation::completeness(&m, &runs, &g.empty_circuit(), OutputDistance::Sink).unwrap();
        prop_assert_eq!(f.distance, 0.0);
        prop_assert_eq!(c.distance_of_removal, 0.0);
    }

    #[test]
    fn discovery_returns_exactly_k(seed in 0u64..1000, k in 0usize..20, alg in 0usize..2, st in 0usize..3) {
        let (m, runs) = planted(seed);
        let alg = [Algorithm::Greedy, Algorithm::Linear][alg];
        let st = [Strategy::Ns, Strategy::Dn, Strategy::NsDn][st];
        let cfg = DiscoveryConfig::new(alg, st, OutputDistance::Sink).with_k(k).with_seed(seed);
        prop_assert_eq!(discover(&m, &runs, &cfg).unwrap().circuit.len(), k);
    }
}

#[test]
fn deterministic_discovery_has_zero_randomness() {
    let (m, runs) = planted(4);
    let cfg = DiscoveryConfig::new(Algorithm::Linear, Strategy::NsDn, OutputDistance::Sink);
    let r = evaluation::randomness(&m, &runs, &cfg, 8, &evaluation::run_seeds(1, 5)).unwrap();
    assert_eq!((r.mean_hamming, r.std, r.run_count), (0.0, 0.0, 5));
}

#[test]
fn incompleteness_of_the_graph_is_zero() {
    let (m, runs) = planted(2);
    let full = m.graph().full_circuit();
    let s = evaluation::incompleteness_sampled(&m, &runs, &full, 10, 2..=5, 3, OutputDistance::Sink).unwrap();
    assert_eq!((s.mean, s.std), (0.0, 0.0));
}

#[test]
fn single_precision_matches_double() {
    let spec = ModelSpec::GateNetwork(GateNetworkSpec::fig2());
    let d = make_task(&TaskSpec::GateClean { sources: 4 }, 0).unwrap();
    let m64: Model<f64> = Model::from_spec(&spec).unwrap();
    let m32: ModelF32 = Model::from_spec(&spec).unwrap();
    let r64 = RunSet::new(&m64, &d, AblationMode::Zero, 0).unwrap();
    let r32 = RunSet::new(&m32, &d, AblationMode::Zero, 0).unwrap();
    let empty = m64.graph().empty_circuit();
    let a = evaluation::faithfulness(&m64, &r64, &empty, OutputDistance::Sink).unwrap().distance;
    let b = evaluation::faithfulness(&m32, &r32, &m32.graph().empty_circuit(), OutputDistance::Sink).unwrap().distance;
    assert_abs_diff_eq!(a, b, epsilon = 1e-6);
    let cfg = DiscoveryConfig::new(Algorithm::Greedy, Strategy::Ns, OutputDistance::Sink).with_k(9);
    assert_eq!(
        m64.graph().edge_names(&discover(&m64, &r64, &cfg).unwrap().circuit),
        m32.graph().edge_names(&discover(&m32, &r32, &cfg).unwrap().circuit)
    );
}

#[test]
fn fig2_or_edges_are_individually_redundant() {
    let m: Model<f64> = Model::from_spec(&ModelSpec::GateNetwork(GateNetworkSpec::fig2())).unwrap();
    let d = make_task(&TaskSpec::GateClean { sources: 4 }, 0).unwrap();
    let runs = RunSet::new(&m, &d, AblationMode::Zero, 0).unwrap();
    let g = m.graph();
    let ns = g.complement(&g.circuit_from_names(&["g0.3->g1.1"]).unwrap()).unwrap();
    let faith = |c: &Circuit| evaluation::faithfulness(&m, &runs, c, OutputDistance::Sink).unwrap().distance;
    assert_eq!(faith(&ns), 0.0);
    assert!(faith(&g.empty_circuit()) > 0.0);
}
