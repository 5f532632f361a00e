use dirlab_core::capacity::{capacity, CapacityCache};
use dirlab_core::elliptic::{boundedness_certificate, resolve, DecayConstants};
use dirlab_core::embed::{
    isocap_scan, linfty_embedding_check, lp_embedding_constant, weak_lp_embedding_check,
};
use dirlab_core::flow::{check_dissipation, evolve, StepPolicy};
use dirlab_core::forms::{check_dirichlet_properties, ring_edges};
use dirlab_core::gauge::dirichlet_norm;
use dirlab_core::{FiniteMeasuredSpace, FormInstance, FormSpec, Func, SolverConfig, SubsetMask};

fn grounded_ring(n: usize, p: f64) -> FormInstance {
    let mut kill = vec![0.0; n];
    kill[0] = 1.0;
    let measure = (0..n).map(|i| 1.0 + 0.25 * i as f64).collect();
    FormInstance::new(
        FiniteMeasuredSpace::new(measure).unwrap(),
        FormSpec::p_energy(p, ring_edges(n)).with_killing(kill, p),
    )
    .unwrap()
}

#[test]
fn capacity_witness_norm_matches_value() {
    let form = grounded_ring(6, 2.0);
    let cfg = SolverConfig::default();
    let set = SubsetMask::from_indices(6, &[2, 3]);
    let cap = capacity(&form, &set, 1e-8, &cfg).unwrap();
    let gauge = dirichlet_norm(&form, &cap.witness, 1e-12).unwrap();
    assert!((gauge.value - cap.value).abs() < 1e-6 * cap.value);
    assert!(cap.witness[2] >= 1.0 - 1e-9 && cap.witness[3] >= 1.0 - 1e-9);
}

#[test]
fn embeddings_from_one_cache() {
    let form = grounded_ring(6, 3.0);
    let cache = CapacityCache::new(&form, 1e-8, SolverConfig::default());
    let linf = linfty_embedding_check(&cache, 60, 1).unwrap();
    assert!(linf.pass(), "{linf:?}");
    let scan = isocap_scan(&cache, 4.0, 12).unwrap();
    assert!(scan.exhaustive);
    let weak = weak_lp_embedding_check(&cache, 4.0, &scan, 60, 2).unwrap();
    assert!(weak.pass(), "{weak:?}");
}

#[test]
fn bounded_solution_with_certificate() {
    let form = grounded_ring(6, 2.0);
    let cfg = SolverConfig::default();
    let f = Func::new(vec![3.0, -1.0, 0.5, 2.0, 0.0, 1.5]);
    let sol = resolve(&form, 1.0, &f, &cfg).unwrap();
    assert!(sol.u.sup_norm() <= f.sup_norm() + 1e-9);
    let cache = CapacityCache::new(&form, 1e-8, cfg.clone());
    let consts = DecayConstants {
        q: 8.0,
        p_emb: 8.0,
        r: 2.0,
        c_emb: lp_embedding_constant(&cache, 8.0).unwrap(),
    };
    let cert = boundedness_certificate(&form, &f, consts, &cfg).unwrap();
    assert!(cert.report.pass, "{:?}", cert.report);
    assert!(cert.u_sup <= cert.predicted);
}

#[test]
fn nonlocal_flow_dissipates() {
    let n: usize = 5;
    let kernel: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { 0.0 } else { 1.0 / (1 + i.abs_diff(j)) as f64 })
                .collect()
        })
        .collect();
    let form = FormInstance::new(
        FiniteMeasuredSpace::uniform(n).unwrap(),
        FormSpec::nonlocal(4.0, kernel),
    )
    .unwrap();
    assert!(check_dirichlet_properties(&form, 50, 3, 1e-9).iter().all(|r| r.pass));
    let u0 = Func::new(vec![2.0, -1.0, 0.0, 1.0, -3.0]);
    let trace = evolve(&form, &u0, 1.0, 40, StepPolicy::Geometric { ratio: 1.1 }, &SolverConfig::default()).unwrap();
    assert!(check_dissipation(&form, &trace).pass);
    // No killing: the mean is conserved.
    let mean = |u: &Func| u.iter().sum::<f64>();
    assert!((mean(trace.last()) - mean(&u0)).abs() < 1e-6);
}

#[test]
fn quadratic_fixture_is_not_dirichlet() {
    let form = FormInstance::new(
        FiniteMeasuredSpace::uniform(2).unwrap(),
        FormSpec::quadratic(vec![vec![2.0, 2.0], vec![2.0, 2.0]]),
    )
    .unwrap();
    let reports = check_dirichlet_properties(&form, 200, 4, 1e-9);
    assert!(reports.iter().any(|r| !r.pass));
}
