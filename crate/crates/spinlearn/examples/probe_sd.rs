use spinlearn::exactdiag::{generate_dataset, DatasetOptions};
use spinlearn::geometry::Boundary;
use spinlearn::hamiltonian::{build_observable, HamiltonianFamily, ObservableKind};

fn sd(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn main() {
    for n in [4usize, 8, 12, 16] {
        let fam = HamiltonianFamily::heisenberg(n, Boundary::Open).unwrap();
        let obs = build_observable(ObservableKind::EnergyOverSqrtN, &fam).unwrap();
        let ds = generate_dataset(&fam, &obs, 60, &DatasetOptions::default(), 55).unwrap();
        let v: Vec<f64> = ds.rows.iter().map(|r| r.y).collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        println!("heis n={n}: mean={:.3} sd={:.4}", mean, sd(&v));
    }
    for n in [4usize, 8, 12] {
        let fam = HamiltonianFamily::ising(n, Boundary::Open, 1.5).unwrap();
        let obs = build_observable(ObservableKind::EnergyOverSqrtN, &fam).unwrap();
        let ds = generate_dataset(&fam, &obs, 40, &DatasetOptions::default(), 55).unwrap();
        let v: Vec<f64> = ds.rows.iter().map(|r| r.y).collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        println!("ising a=1.5 n={n}: mean={:.3} sd={:.4}", mean, sd(&v));
    }
}
