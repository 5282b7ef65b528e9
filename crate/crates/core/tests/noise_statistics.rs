use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qlm_core::compiler::sub_register;
use qlm_core::gates::{GateOp, Pauli};
use qlm_core::noise::{sample_error, weyl, NoiseModel};
use qlm_core::C64;

const SAMPLES: usize = 200_000;
// Several dozen bins are tested at once.
const MAX_Z: f64 = 4.0;

fn check(label: &str, hits: usize, trials: usize, p: f64) {
    if p == 0.0 || p == 1.0 {
        assert_eq!(hits as f64, trials as f64 * p, "{label}");
        return;
    }
    let n = trials as f64;
    let z = (hits as f64 - n * p) / (n * p * (1.0 - p)).sqrt();
    assert!(z.abs() < MAX_Z, "{label}: {hits}/{trials} against p = {p} (z = {z:.2})");
}

fn run(gate: &GateOp, dims: &[usize], noise: &NoiseModel, seed: u64) {
    let reg = sub_register(dims).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let events: Vec<_> = (0..SAMPLES).filter_map(|_| sample_error(5, gate, noise, &reg, &mut rng)).collect();
    let p = noise.rate(gate.noise_class());
    check("event rate", events.len(), SAMPLES, p);

    let k = gate.targets.len() as f64;
    for &q in &gate.targets {
        let on_q: Vec<_> = events.iter().filter(|e| e.qudit == q).collect();
        check("qudit choice", on_q.len(), events.len(), 1.0 / k);
        let d = dims[q];
        let depol: Vec<_> = on_q.iter().filter(|e| e.depolarizing).collect();
        check("depolarizing share", depol.len(), on_q.len(), noise.depolarize_fraction);
        assert!(on_q.iter().filter(|e| !e.depolarizing).all(|e| e.x == 0));
        for v in 0..d {
            check("x level", depol.iter().filter(|e| e.x == v).count(), depol.len(), 1.0 / d as f64);
            check("z level", on_q.iter().filter(|e| e.z == v).count(), on_q.len(), 1.0 / d as f64);
        }
    }
    assert!(events.iter().all(|e| e.gate == 5));
}

#[test]
fn cx_channel_statistics() {
    let noise = NoiseModel { p_cx: 0.3, ..NoiseModel::trapped_ion(0.0) };
    run(&GateOp::cx(0, 1, 2, 0, 1), &[3, 4], &noise, 1);
}

#[test]
fn ms_channel_statistics() {
    let noise = NoiseModel { p_ms: 0.2, depolarize_fraction: 0.5, ..NoiseModel::none() };
    run(&GateOp::ms(0, 1, Pauli::X, Pauli::Y, 0.4), &[4, 2], &noise, 2);
}

#[test]
fn one_body_and_virtual_rates() {
    let noise = NoiseModel::uniform(0.1);
    run(&GateOp::rx(0, 0, 2, 0.3), &[3], &noise, 3);
    let reg = sub_register(&[3]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let virt = GateOp::vrz(0, 1, 0.2);
    assert!((0..1000).all(|_| sample_error(0, &virt, &noise, &reg, &mut rng).is_none()));
}

#[test]
fn trapped_ion_scaling() {
    let a = NoiseModel::trapped_ion(0.0);
    let b = NoiseModel::trapped_ion(2.0);
    assert_eq!((a.p_one_body, a.p_cx, a.p_ms), (3e-5, 2e-3, 5e-3));
    assert!((b.p_cx - 2e-5).abs() < 1e-18 && (b.p_ms - 5e-5).abs() < 1e-18);
    assert!(NoiseModel::uniform(1.2).validate().is_err());
}

#[test]
fn weyl_operators() {
    for d in 2..=4 {
        let w = C64::from_polar(1.0, 2.0 * std::f64::consts::PI / d as f64);
        let x = weyl(d, 1, 0);
        let z = weyl(d, 0, 1);
        // Z X = w X Z
        let diff = &z * &x - &x * &z * w;
        assert!(diff.iter().all(|c| c.norm() < 1e-12));
        for (a, b) in (0..d).flat_map(|a| (0..d).map(move |b| (a, b))) {
            let m = weyl(d, a, b);
            let u = m.adjoint() * &m;
            assert!((u - qlm_core::CMatrix::identity(d, d)).iter().all(|c| c.norm() < 1e-12));
            // Traceless except for the identity.
            let tr: C64 = (0..d).map(|k| m[(k, k)]).sum();
            assert!((tr.norm() - if a == 0 && b == 0 { d as f64 } else { 0.0 }).abs() < 1e-12);
        }
    }
}
