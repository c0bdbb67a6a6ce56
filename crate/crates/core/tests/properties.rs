use graphsys::cgl::{self, reference, CglProblem};
use graphsys::evaluation::{f_score, relative_error, trace_normalize};
use graphsys::gbf::{self, FilterKind, FilterSpec};
use graphsys::graph::{build_cgl, generate_graph, quadratic_form, CglMatrix, GraphKind, GraphModelSpec};
use graphsys::gsi;
use graphsys::io;
use graphsys::spectral;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

const KINDS: [FilterKind; 5] = [
    FilterKind::FrequencyScaling,
    FilterKind::FrequencyShifting,
    FilterKind::VarianceShifting,
    FilterKind::ExponentialDecay,
    FilterKind::HopLocalized,
];

fn filter() -> impl Strategy<Value = FilterSpec> {
    (0..KINDS.len(), 0.05f64..5.0, 1u32..6).prop_map(|(k, beta, hops)| match KINDS[k] {
        FilterKind::HopLocalized => FilterSpec::hop(hops).unwrap(),
        kind => FilterSpec::new(kind, beta).unwrap(),
    })
}

fn graph_kind() -> impl Strategy<Value = GraphKind> {
    prop_oneof![Just(GraphKind::Grid), Just(GraphKind::ErdosRenyi), Just(GraphKind::Modular)]
}

fn laplacian(n: usize) -> impl Strategy<Value = CglMatrix> {
    (graph_kind(), any::<u64>()).prop_map(move |(kind, seed)| {
        let mut spec = GraphModelSpec::new(kind, n, seed);
        if kind == GraphKind::ErdosRenyi {
            spec.p = 0.5;
        }
        if kind == GraphKind::Modular {
            spec.module_count = 2;
            spec.p1 = 0.3;
            spec.p2 = 0.6;
        }
        build_cgl(&generate_graph(&spec).unwrap()).unwrap()
    })
}

fn pair_weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.01f64..3.0], n * (n - 1) / 2)
}

fn wishart(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-2.0f64..2.0, 3 * n * n).prop_map(move |v| {
        let x = DMatrix::from_vec(3 * n, n, v);
        x.transpose() * &x / (3 * n) as f64
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inverse_filter_round_trip(spec in filter(), lambda in 0.05f64..5.0) {
        let back = spec.inverse_response(spec.response(lambda)).unwrap();
        prop_assert!((back - lambda).abs() <= 1e-12 * lambda.max(1.0), "{spec}: {back} vs {lambda}");
    }

    #[test]
    fn filters_decrease_on_positive_frequencies(spec in filter(), a in 0.01f64..10.0, b in 0.01f64..10.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(spec.response(lo) >= spec.response(hi));
    }

    #[test]
    fn laplacian_quadratic_form_is_nonnegative(l in laplacian(9), x in prop::collection::vec(-3.0f64..3.0, 9)) {
        let q = quadratic_form(&l, &DVector::from_vec(x)).unwrap();
        prop_assert!(q >= -1e-12);
    }

    #[test]
    fn pair_weight_parameterization_round_trips(w in pair_weights(6)) {
        let l = CglMatrix::from_pair_weights(6, &w);
        prop_assert_eq!(l.pair_weights(), w);
        prop_assert!(l.matrix().column_sum().amax() <= 1e-12);
    }

    #[test]
    fn f_score_is_symmetric(a in pair_weights(7), b in pair_weights(7)) {
        let (la, lb) = (CglMatrix::from_pair_weights(7, &a), CglMatrix::from_pair_weights(7, &b));
        let ab = f_score(la.matrix(), lb.matrix(), 1e-4).unwrap();
        let ba = f_score(lb.matrix(), la.matrix(), 1e-4).unwrap();
        prop_assert_eq!(ab.fs, ba.fs);
        prop_assert_eq!((ab.tp, ab.fp, ab.r#fn), (ba.tp, ba.r#fn, ba.fp));
    }

    #[test]
    fn trace_normalization_removes_scale(l in laplacian(9), c in 0.01f64..100.0) {
        let scaled = l.matrix() * c;
        let normalized = trace_normalize(&scaled, l.matrix()).unwrap();
        prop_assert!(relative_error(&normalized, l.matrix()).unwrap() <= 1e-12);
    }

    #[test]
    fn exact_covariances_invert_for_every_kind(spec in filter(), l in laplacian(9)) {
        // responses below 1e-10·s_max are clamped by design
        if spec.kind() == FilterKind::ExponentialDecay {
            let lambda_max = spectral::eig_sym(l.matrix()).unwrap().spectral_radius();
            prop_assume!(spec.beta() * lambda_max < 20.0);
        }
        let sigma = gbf::apply_filter(&spec, &l).unwrap();
        let ipf = gsi::baseline_ipf(&sigma, &spec).unwrap();
        prop_assert!(relative_error(&ipf, l.matrix()).unwrap() <= 1e-8, "{spec}");
    }

    #[test]
    fn pseudo_determinant_matches_shifted_determinant(l in laplacian(16)) {
        let d = spectral::eig_sym(l.matrix()).unwrap();
        let pdet = spectral::log_pseudo_determinant(d.values(), spectral::EPS_ZERO);
        let shifted = cgl::log_det_shifted(l.matrix()).unwrap();
        prop_assert!((pdet - shifted).abs() <= 1e-8 * pdet.abs().max(1.0));
    }

    #[test]
    fn graph_files_round_trip(w in pair_weights(6)) {
        prop_assume!(w.iter().any(|&x| x > 0.0));
        let g = CglMatrix::from_pair_weights(6, &w).to_graph(0.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.json");
        io::write_graph(&path, &g).unwrap();
        prop_assert_eq!(io::read_graph(&path).unwrap(), g);
    }

    #[test]
    fn matrix_csv_round_trips(values in prop::collection::vec(-1e6f64..1e6, 12)) {
        let m = DMatrix::from_vec(3, 4, values);
        let mut buf = Vec::new();
        io::write_matrix_csv(&mut buf, &m).unwrap();
        prop_assert_eq!(io::read_matrix_csv(buf.as_slice()).unwrap(), m);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn solver_descends_and_matches_the_oracle(n in 3usize..7, k_seed in any::<u64>(), alpha in prop_oneof![Just(0.0), 0.0f64..0.2]) {
        let k = {
            let mut stream = graphsys::rng::Stream::new(k_seed, 0, 0, 0);
            let x = DMatrix::from_fn(3 * n, n, |_, _| stream.standard_normal());
            x.transpose() * &x / (3 * n) as f64
        };
        let problem = CglProblem::new(k, alpha).unwrap();
        let (l, report) = cgl::estimate_cgl(&problem).unwrap();
        prop_assert!(report.converged);
        prop_assert!(report.kkt_residual <= 1e-6);
        prop_assert!(report.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0)));
        let oracle = reference::estimate_cgl_reference(&problem).unwrap();
        let gap = cgl::objective(&l, &problem).unwrap() - cgl::objective(&oracle, &problem).unwrap();
        prop_assert!(gap.abs() <= 1e-6, "gap {gap:e}");
    }

    #[test]
    fn estimates_are_valid_laplacians(k in wishart(6), alpha in 0.0f64..0.5) {
        let (l, _) = cgl::estimate_cgl(&CglProblem::new(k, alpha).unwrap()).unwrap();
        let m = l.matrix();
        prop_assert!((0..6).all(|i| (0..6).all(|j| i == j || m[(i, j)] <= 0.0)));
        prop_assert!(m.column_sum().amax() <= 1e-12 * m.amax().max(1.0));
        prop_assert!((m - m.transpose()).amax() == 0.0);
    }
}
