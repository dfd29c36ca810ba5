use std::sync::Arc;

use wfstein::kernel::{offspring_probs, simulate, transition_row};
use wfstein::{stationary_distribution, ModelParams, SimplexLattice, TransitionKernel};

fn lattice(n: usize, beta: Vec<f64>) -> Arc<SimplexLattice> {
    Arc::new(SimplexLattice::new(ModelParams::new(n, beta).unwrap()).unwrap())
}

#[test]
fn row_covariances_are_multinomial() {
    for (n, beta) in [(7, vec![1.0, 2.0]), (6, vec![0.5, 1.0, 1.5]), (4, vec![0.4, 0.3, 0.6, 0.2])] {
        let l = lattice(n, beta);
        let d = l.dim();
        for s in l.states() {
            let row = transition_row(&l, &s.signed_counts()).unwrap();
            let q = offspring_probs(l.params(), s.counts());
            let mean: Vec<f64> = (0..d)
                .map(|i| row.iter().zip(l.states()).map(|(w, t)| w * t.counts()[i] as f64).sum())
                .collect();
            for i in 0..d {
                assert!((mean[i] - n as f64 * q[i]).abs() < 1e-10);
                for j in 0..d {
                    let cov: f64 = row
                        .iter()
                        .zip(l.states())
                        .map(|(w, t)| w * (t.counts()[i] as f64 - mean[i]) * (t.counts()[j] as f64 - mean[j]))
                        .sum();
                    let a = n as f64 * q[i] * (if i == j { 1.0 } else { 0.0 } - q[j]);
                    assert!((cov - a).abs() < 1e-10, "N={n} state {:?} ({i},{j}): {cov} vs {a}", s.counts());
                }
            }
        }
    }
}

#[test]
fn long_run_occupation_matches_stationary_law() {
    let l = lattice(5, vec![2.0, 2.0]);
    let kernel = TransitionKernel::new(l.clone());
    let pi = stationary_distribution(&kernel).unwrap();
    let steps = 1_000_000;
    let path = simulate(l.params(), l.state(0), steps, 11).unwrap();
    let batches = 100;
    let len = steps / batches;
    for (idx, &p) in pi.pi().iter().enumerate() {
        let target = l.state(idx).counts();
        let means: Vec<f64> = path[1..]
            .chunks(len)
            .map(|c| c.iter().filter(|s| s.counts() == target).count() as f64 / len as f64)
            .collect();
        let m = means.iter().sum::<f64>() / batches as f64;
        let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (batches - 1) as f64;
        let se = (var / batches as f64).sqrt();
        assert!((m - p).abs() <= 3.0 * se, "state {idx}: {m} vs {p} (se {se})");
    }
}
