mod common;

use proptest::prelude::*;

use qnc::conversion::{compile_circuit, random_circuit, random_segment, validate_segment, ConvertedCircuit};
use qnc::decomp::{controlled_sequence, kc_number, op_number, schmidt_decompose};
use qnc::implementability::{certify_local_basis, inverse_op_numbers, schmidt_triple, ChainFactor};
use qnc::locc::{execute, validate, ExecOptions, ProtocolBuilder};
use qnc::network::{build_cluster, build_generalized_cluster, build_resource_state, butterfly_edge_map, butterfly_network, NodeId};
use qnc::protocols::{butterfly_protocol, ladder_protocol, second_gate_targets, splits_into_two_controlled, verify, Program, Verdict, VerifyOptions};
use qnc::random::{ginibre, haar_state, haar_unitary, seeded, uniform};
use qnc::tensor::{gates, svd, unitarity_deviation, CMatrix, Qubit, StateVector, C64};

use common::*;

fn labelled(amps: Vec<C64>, labels: &[&str]) -> StateVector {
    let reg = labels.iter().map(|l| Qubit::new(*l, NodeId::named("n"))).collect();
    StateVector::from_amplitudes(reg, amps).unwrap()
}

fn local_dressing(seed: u64, n: usize) -> CMatrix {
    let mut rng = seeded(seed);
    kron_list(&(0..n).map(|_| haar_unitary(&mut rng, 2)).collect::<Vec<_>>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn library_gates_are_unitary(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let (a, b, c) = (uniform(&mut rng, -4.0, 4.0), uniform(&mut rng, -4.0, 4.0), uniform(&mut rng, -4.0, 4.0));
        let w: [CMatrix; 4] = std::array::from_fn(|_| haar_unitary(&mut rng, 2));
        for g in [gates::rz(a), gates::ry(b), gates::rx(c), gates::u_global(a, b, c), gates::fully_controlled(&w), gates::controlled(&w[0], &w[1])] {
            prop_assert!(unitarity_deviation(&g) <= 1e-12);
        }
    }

    #[test]
    fn gate_application_commutes_with_reordering(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let amps = haar_state(&mut rng, 3);
        let u = haar_unitary(&mut rng, 4);
        let mut a = labelled(amps.clone(), &["p", "q", "r"]);
        a.apply_matrix(&u, &["r", "p"]).unwrap();
        let mut b = labelled(amps, &["p", "q", "r"]).reordered(&["q", "r", "p"]).unwrap();
        b.apply_matrix(&u, &["r", "p"]).unwrap();
        let b = b.reordered(&["p", "q", "r"]).unwrap();
        let d = a.amplitudes().iter().zip(b.amplitudes()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        prop_assert!(d <= 1e-14);
    }

    #[test]
    fn full_partial_trace_is_the_projector(seed in any::<u64>()) {
        let amps = haar_state(&mut seeded(seed), 3);
        let s = labelled(amps.clone(), &["a", "b", "c"]);
        let rho = s.partial_trace(&["a", "b", "c"]).unwrap();
        let v = M::from_column_slice(8, 1, &amps);
        prop_assert!(max_distance(&rho, &(&v * v.adjoint())) <= 1e-14);
    }

    #[test]
    fn singular_values_are_unitarily_invariant(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let m = ginibre(&mut rng, 4, 3);
        let (l, r) = (haar_unitary(&mut rng, 4), haar_unitary(&mut rng, 3));
        let s1 = svd(&m).s;
        let s2 = svd(&(l * &m * r)).s;
        prop_assert!(s1.iter().zip(&s2).all(|(a, b)| (a - b).abs() <= 1e-10));
    }

    #[test]
    fn schmidt_coefficients_match_reduced_spectrum(seed in any::<u64>()) {
        let s = labelled(haar_state(&mut seeded(seed), 3), &["a", "b", "c"]);
        let sch = schmidt_decompose(&s, &["a"]).unwrap();
        let rho = s.partial_trace(&["a"]).unwrap();
        let mut eig: Vec<f64> = nalgebra::SymmetricEigen::new(rho).eigenvalues.iter().map(|v| v.max(0.0).sqrt()).collect();
        eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
        prop_assert!(sch.coefficients.iter().zip(&eig).all(|(a, b)| (a - b).abs() <= 1e-10));
    }

    #[test]
    fn controlled_sequence_length_is_tight(seed in any::<u64>(), class in 1usize..4) {
        let u = unitary_of_class(&mut seeded(seed), class);
        let f = controlled_sequence(&u, class).unwrap();
        let prod = f.iter().fold(CMatrix::identity(4, 4), |acc, x| acc * x.matrix());
        prop_assert!(max_distance(&prod, &u) <= 1e-9);
        prop_assert!(controlled_sequence(&u, class - 1).is_err() || class == 1);
    }

    #[test]
    fn kc_and_op_numbers_agree(seed in any::<u64>(), class in 0usize..4) {
        let u = unitary_of_class(&mut seeded(seed), class);
        let want = [1, 2, 4, 4][class];
        prop_assert_eq!(kc_number(&u).unwrap(), class);
        prop_assert_eq!(op_number(&u).unwrap(), want);
    }

    #[test]
    fn legality_is_prefix_closed(seed in any::<u64>(), k in 2usize..6) {
        let seg = random_segment(&mut seeded(seed), k, 6);
        prop_assert!(validate_segment(&seg, k).is_empty());
        for cut in 0..seg.len() {
            prop_assert!(validate_segment(&seg[..cut], k).is_empty());
        }
    }

    #[test]
    fn two_wire_chain_factors_have_op_rank_at_most_two(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let sites = (0..2).map(|_| (0..2).map(|_| ginibre(&mut rng, 2, 2)).collect()).collect();
        let f = ChainFactor::new(sites, false).unwrap();
        prop_assert!(op_number(&f.matrix()).unwrap() <= 2);
    }

    #[test]
    fn controlled_unitaries_are_certified(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let v = unitary_of_class(&mut rng, 1);
        let cert = certify_local_basis(&v).unwrap();
        prop_assert!(cert.off_block <= 1e-9 && cert.residual <= 1e-9);
        let w: [CMatrix; 4] = std::array::from_fn(|_| haar_unitary(&mut rng, 2));
        let l: [CMatrix; 3] = std::array::from_fn(|_| haar_unitary(&mut rng, 2));
        let r: [CMatrix; 3] = std::array::from_fn(|_| haar_unitary(&mut rng, 2));
        let cert = certify_local_basis(&ChainFactor::fully_controlled(&w, &l, &r).matrix()).unwrap();
        prop_assert!(cert.off_block <= 1e-9 && cert.residual <= 1e-9);
        prop_assert_eq!(cert.targets().len(), 4);
    }

    #[test]
    fn schmidt_triple_is_locally_invariant(seed in any::<u64>(), fam in 1usize..10) {
        let mut rng = seeded(seed);
        let arity = qnc::implementability::family_arity(fam).unwrap();
        let params: Vec<C64> = (0..arity).map(|_| qnc::random::gaussian(&mut rng)).collect();
        let s = qnc::implementability::family_state(fam, &params).unwrap();
        let t0 = schmidt_triple(&s).unwrap();
        let mut d = s.clone();
        d.apply_matrix(&local_dressing(seed ^ 0x5eed, 4), &["q1", "q2", "q3", "q4"]).unwrap();
        prop_assert_eq!(schmidt_triple(&d).unwrap(), t0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn kc_is_invariant_under_local_dressing(seed in any::<u64>(), class in 0usize..4) {
        let u = unitary_of_class(&mut seeded(seed), class);
        let dressed = local_dressing(seed.wrapping_add(1), 2) * &u * local_dressing(seed.wrapping_add(2), 2);
        prop_assert_eq!(kc_number(&dressed).unwrap(), kc_number(&u).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn inverse_keeps_operator_schmidt_rank_two(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let p = kron(&ginibre(&mut rng, 2, 2), &ginibre(&mut rng, 2, 2)) + kron(&ginibre(&mut rng, 2, 2), &ginibre(&mut rng, 2, 2));
        let (a, b) = inverse_op_numbers(&p).unwrap().expect("generic operator is invertible");
        prop_assert_eq!((a, b), (2, 2));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn compiled_circuits_are_exact(seed in any::<u64>(), k in 2usize..5, n in 1usize..3) {
        let c = random_circuit(&mut seeded(seed), k, n, 5);
        let (network, protocol) = compile_circuit(&c).unwrap();
        prop_assert!(validate(&protocol, &network).ok);
        for j in 1..=n {
            let col = protocol.consumed_edges.iter().filter(|e| e.as_str().starts_with("S:") && e.as_str().ends_with(&format!(",{j}"))).count();
            prop_assert!(col <= k - 1);
        }
        let program = Program { name: "circuit".into(), network, protocol, target: circuit_unitary(&c) };
        let o = VerifyOptions { seed, random_inputs: 2, basis_inputs: false, ..VerifyOptions::default() };
        prop_assert_eq!(verify(&program, &o).unwrap().verdict, Verdict::Implementable);
    }

    #[test]
    fn branch_probabilities_sum_to_one(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let (x, y, z) = weyl_point(&mut rng, 0.0);
        let p = butterfly_protocol(x, y, z).unwrap();
        let amps = haar_state(&mut rng, 2);
        let reg = p.protocol.inputs.iter().map(|q| Qubit::new(q.label.clone(), q.node.clone())).collect();
        let input = StateVector::from_amplitudes(reg, amps).unwrap();
        let set = execute(&p.protocol, &p.network, &input, &ExecOptions::default()).unwrap();
        prop_assert!((set.total_probability() - 1.0).abs() <= 1e-10);
        // The final row-2 measurement is uniform whatever the input superposition.
        let last = set.stats.last().unwrap();
        prop_assert!(last.min.iter().chain(&last.max).all(|p| (p - 0.5).abs() <= 1e-10));
    }

    #[test]
    fn teleport_there_and_back_is_identity(seed in any::<u64>()) {
        let net = build_cluster(2, 1).unwrap();
        let protocol = {
            let mut b = ProtocolBuilder::new(&net);
            let q = b.input("Q", &NodeId::grid(1, 1));
            let there = b.teleport_to(&q, &NodeId::grid(2, 1)).unwrap();
            b.finish(vec![there])
        };
        let back_net = build_cluster(2, 1).unwrap();
        let back = {
            let mut b = ProtocolBuilder::new(&back_net);
            let q = b.input("Q", &NodeId::grid(2, 1));
            let home = b.teleport_to(&q, &NodeId::grid(1, 1)).unwrap();
            b.finish(vec![home])
        };
        let amps = haar_state(&mut seeded(seed), 1);
        let input = StateVector::from_amplitudes(vec![Qubit::new("Q", NodeId::grid(1, 1))], amps.clone()).unwrap();
        let first = execute(&protocol, &net, &input, &ExecOptions::exhaustive()).unwrap();
        for br in &first.branches {
            let out = &protocol.outputs[0];
            let reduced = br.state.partial_trace(&[out.as_str()]).unwrap();
            let p = br.state.norm_sqr();
            // Re-prepare the received qubit (pure in every branch) and send it back.
            let eig = nalgebra::SymmetricEigen::new(reduced.map(|v| v / p));
            let top = (0..2).max_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap()).unwrap();
            prop_assert!((eig.eigenvalues[top] - 1.0).abs() <= 1e-12);
            let v: Vec<C64> = eig.eigenvectors.column(top).iter().copied().collect();
            let mid = StateVector::from_amplitudes(vec![Qubit::new("Q", NodeId::grid(2, 1))], v).unwrap();
            let second = execute(&back, &back_net, &mid, &ExecOptions::exhaustive()).unwrap();
            let target = StateVector::from_amplitudes(vec![Qubit::new(back.outputs[0].clone(), NodeId::grid(1, 1))], amps.clone()).unwrap();
            for b2 in &second.branches {
                prop_assert!(b2.fidelity_with(&target).unwrap() >= 1.0 - 1e-12);
            }
        }
    }

    #[test]
    fn ladder_resource_accounting(seed in any::<u64>(), n in 1usize..6) {
        let u = haar_unitary(&mut seeded(seed), 4);
        match ladder_protocol(&u, n) {
            Ok(p) => {
                let h = p.protocol.consumed_edges.iter().filter(|e| e.as_str().starts_with("K:")).count();
                let v = p.protocol.consumed_edges.iter().filter(|e| e.as_str().starts_with("S:")).count();
                prop_assert_eq!(h, 2 * (n - 1));
                prop_assert!(v <= n);
            }
            Err(qnc::protocols::ProtocolError::Refused { kc, .. }) => prop_assert!(kc > n),
            Err(e) => prop_assert!(false, "{}", e),
        }
    }

    #[test]
    fn second_butterfly_gate_never_splits(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let (_, y, z) = weyl_point(&mut rng, 0.02);
        prop_assert!(!splits_into_two_controlled(&second_gate_targets(y, z), 1e-9));
    }
}

#[test]
fn resource_state_has_two_qubits_per_edge_and_rank_two_cuts() {
    for net in [build_cluster(2, 3).unwrap(), butterfly_network(), build_cluster(3, 2).unwrap()] {
        let s = build_resource_state(&net, 24).unwrap();
        assert_eq!(s.num_qubits(), 2 * net.edges.len());
        for e in &net.edges {
            assert_eq!(qnc::decomp::schmidt_rank(&s, &[e.qubit_a.as_str()]).unwrap(), 2);
        }
    }
}

#[test]
fn butterfly_resource_equals_relabelled_cluster() {
    let cluster = build_cluster(3, 2).unwrap();
    let fly = butterfly_network();
    let cs = build_resource_state(&cluster, 24).unwrap();
    let fs = build_resource_state(&fly, 24).unwrap();
    let mut order = Vec::new();
    for (cid, bid) in butterfly_edge_map() {
        let ce = cluster.edge(&cid).unwrap();
        let be = fly.edge(&bid).unwrap();
        for (node, label) in [(&ce.a, &ce.qubit_a), (&ce.b, &ce.qubit_b)] {
            let (i, j) = cluster.coords_of(node).unwrap();
            let fly_node = fly.grid_node(i, j).unwrap();
            order.push((label.clone(), be.qubit_at(fly_node).unwrap().to_string()));
        }
    }
    let cs = cs.reordered(&order.iter().map(|(c, _)| c.as_str()).collect::<Vec<_>>()).unwrap();
    let fs = fs.reordered(&order.iter().map(|(_, b)| b.as_str()).collect::<Vec<_>>()).unwrap();
    assert_eq!(cs.amplitudes(), fs.amplitudes());
}

#[test]
fn generalized_cluster_with_nearest_neighbours_matches_plain_cluster() {
    let (k, n) = (3, 2);
    let spans: Vec<[usize; 3]> = (1..=n).flat_map(|j| (1..k).map(move |i| [i, i + 1, j])).collect();
    let g = build_generalized_cluster(k, n, &spans).unwrap();
    let c = build_cluster(k, n).unwrap();
    let mut ge = g.edges.clone();
    let mut ce = c.edges.clone();
    ge.sort_by(|a, b| a.id.cmp(&b.id));
    ce.sort_by(|a, b| a.id.cmp(&b.id));
    assert_eq!(ge, ce);
    let u = gates::swap();
    for net in [g, c] {
        let p = qnc::protocols::implement_full_two_qubit_on(net, &u).unwrap();
        let o = VerifyOptions { random_inputs: 2, ..VerifyOptions::default() };
        assert_eq!(verify(&p, &o).unwrap().verdict, Verdict::Implementable);
    }
}

#[test]
fn random_circuit_round_trips_are_standard() {
    let mut rng = seeded(12);
    for t in 0..40 {
        let k = 2 + t % 2;
        let c = random_circuit(&mut rng, k, 1 + t % 2, 6);
        let s = qnc::conversion::simulate_by_standard_form(&c).unwrap();
        assert!(phase_distance(&circuit_unitary(&s), &circuit_unitary(&c)) <= 1e-9);
        let _: &ConvertedCircuit = &s;
    }
}
