//! Monte Carlo unraveling against analytic and master-equation oracles.

use resfluor::correlator::evolve;
use resfluor::exec::Parallelism;
use resfluor::liouville::{liouvillian_matrix, steady_state};
use resfluor::modelkit::{build_driven_2ls, Channel, LindbladModel, SOURCE_SLOT};
use resfluor::opalg::{expectation, DensityMatrix, Operator, StateVector};
use resfluor::scenarios::{build_system, MollowConfig};
use resfluor::trajec::{
    click_statistics, ensemble_density, run_ensemble, trajectory_seed, ChannelCounts, McwfEngine, PhotonCount,
};

#[test]
fn undriven_decay_times_are_exponential() {
    let model = build_driven_2ls(0.0, 0.0, 1.0).unwrap();
    let engine = McwfEngine::new(&model).unwrap();
    let excited = StateVector::basis(model.layout(), 1).unwrap();
    let n = 100_000;
    let times: Vec<f64> = Parallelism::Rayon.map(n, |i| {
        let rec = engine.run(&excited, 60.0, trajectory_seed(5, i as u64)).unwrap();
        assert_eq!(rec.clicks.len(), 1);
        rec.clicks[0].t
    });
    let mean = times.iter().sum::<f64>() / n as f64;
    // Exponential law with unit mean: standard deviation 1.
    assert!((mean - 1.0).abs() < 3.0 / (n as f64).sqrt(), "mean {mean}");
    // Survival at t = 1 is e⁻¹.
    let surv = times.iter().filter(|&&t| t > 1.0).count() as f64 / n as f64;
    let p = (-1.0f64).exp();
    assert!((surv - p).abs() < 3.0 * (p * (1.0 - p) / n as f64).sqrt(), "survival {surv}");
}

#[test]
fn ensemble_average_matches_master_equation() {
    let model = build_driven_2ls(0.7, 1.3, 1.0).unwrap();
    let engine = McwfEngine::new(&model).unwrap();
    let psi0 = StateVector::basis(model.layout(), 0).unwrap();
    let t = 2.0;
    let (mean, stderr) = ensemble_density(&engine, &psi0, t, 21, 10_000, Parallelism::Rayon).unwrap();
    let exact = evolve(&model, &DensityMatrix::from_pure(&psi0), t).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            let (m, s, e) = (mean[(i, j)], stderr[(i, j)], exact.matrix()[(i, j)]);
            assert!((m.re - e.re).abs() <= 3.0 * s.re + 1e-12, "re[{i},{j}]: {m} vs {e} ± {s}");
            assert!((m.im - e.im).abs() <= 3.0 * s.im + 1e-12, "im[{i},{j}]: {m} vs {e} ± {s}");
        }
    }
}

#[test]
fn click_rates_match_stationary_populations() {
    let cfg = MollowConfig { truncation: 3, kappa: 0.5, ..MollowConfig::new(1.0, 1.85, 1.0) };
    let model = build_system(&cfg).unwrap();
    let engine = McwfEngine::new(&model).unwrap();
    let psi0 = StateVector::basis(model.layout(), 0).unwrap();
    let proto = ChannelCounts::new(engine.labels().len(), 10.0);
    let counts = run_ensemble(&engine, &psi0, 110.0, 3, 2000, Parallelism::Rayon, &proto).unwrap();
    let rho = steady_state(&liouvillian_matrix(&model)).unwrap();
    for (k, ch) in model.channels().iter().enumerate() {
        let c = ch.collapse.matrix();
        let cdc = Operator::new(model.layout().clone(), c.adjoint() * c).unwrap();
        let expected = ch.rate * expectation(&rho, &cdc).unwrap().re;
        let (rate, err) = counts.rate(k);
        assert!((rate - expected).abs() < 3.0 * err + 1e-12, "{}: {rate} ± {err} vs {expected}", ch.label);
    }
}

/// An identity collapse operator fires at a constant rate without touching
/// the state: a Poisson process independent of the emitter.
#[test]
fn independent_signal_gives_poisson_counts() {
    let base = build_driven_2ls(0.0, 1.0, 1.0).unwrap();
    let layout = base.layout().clone();
    let r = 0.8;
    let mut channels = base.channels().to_vec();
    channels.push(Channel { rate: r, collapse: Operator::identity(&layout), label: "poisson".into() });
    let model = LindbladModel::new(base.hamiltonian().clone(), channels).unwrap();
    let engine = McwfEngine::new(&model).unwrap();
    let psi0 = StateVector::basis(&layout, 0).unwrap();
    let taus = [0.25, 1.0, 2.5];
    let records = run_ensemble(&engine, &psi0, 400.0, 9, 200, Parallelism::Rayon, &Vec::new()).unwrap();
    let stats = click_statistics(&records, SOURCE_SLOT, "poisson", &taus, 10.0).unwrap();
    let n = stats.heralds as f64;
    assert!(n > 10_000.0);
    for (i, &tau) in taus.iter().enumerate() {
        let mu = r * tau;
        let p0 = (-mu).exp();
        let p1 = mu * p0;
        for (kind, p) in [(PhotonCount::Zero, p0), (PhotonCount::One, p1), (PhotonCount::TwoPlus, 1.0 - p0 - p1)] {
            let est = stats.probability(kind, i);
            // Overlapping windows correlate the samples; the binomial error
            // still bounds a single-herald estimate well at this count.
            assert!((est - p).abs() < 3.0 * (p * (1.0 - p) / n).sqrt() + 1e-12, "τ={tau} {kind:?}: {est} vs {p}");
        }
        let total: f64 = [PhotonCount::Zero, PhotonCount::One, PhotonCount::TwoPlus].iter().map(|&k| stats.probability(k, i)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}

#[test]
fn records_are_reproducible() {
    let model = build_system(&MollowConfig { truncation: 3, kappa: 0.5, ..MollowConfig::new(1.0, 1.85, 1.0) }).unwrap();
    let engine = McwfEngine::new(&model).unwrap();
    let psi0 = StateVector::basis(model.layout(), 0).unwrap();
    let a = engine.run(&psi0, 80.0, 17).unwrap();
    let b = engine.run(&psi0, 80.0, 17).unwrap();
    assert_eq!(a.to_json_line(), b.to_json_line());
    assert!(a.clicks.windows(2).all(|w| w[0].t < w[1].t));
}
