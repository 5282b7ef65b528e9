use std::path::PathBuf;

use qlm_core::artifacts::{read_grid, write_grid};
use qlm_core::compiler::CompileOptions;
use qlm_core::exact::{ExactEngine, SubspaceHamiltonian};
use qlm_core::model::enumerate_physical;
use qlm_core::scattering::{initial_physical, prepare_initial, run_exact, run_noiseless, CollisionKind, ObservableRecord};
use qlm_core::ScatteringProtocol;

const GOLDEN_TOL: f64 = 1e-9;

fn preset(name: &str) -> ScatteringProtocol {
    ScatteringProtocol::preset(name).unwrap()
}

/// Occupations `n_j = m_{j-1} + m_j` from simulation-frame fluxes, with
/// staggered charge `(-1)^j n_j`.
fn charge_oracle(fluxes: &[i8]) -> Vec<f64> {
    let l = fluxes.len() + 1;
    let m = |j: isize| if j < 0 || j as usize >= fluxes.len() { 0 } else { i32::from(fluxes[j as usize]) };
    (0..l as isize).map(|j| f64::from(if j % 2 == 0 { 1 } else { -1 } * (m(j - 1) + m(j)))).collect()
}

#[test]
fn first_frame_is_the_initial_state() {
    for name in ["meson_meson_g3", "meson_antimeson_g3", "l7_g3"] {
        let mut p = preset(name);
        p.n_steps = 1;
        let want = charge_oracle(&p.fluxes);
        for rec in [run_exact(&p).unwrap(), run_noiseless(&p, &CompileOptions::default()).unwrap()] {
            assert_eq!(rec.charge[0], want, "{name}");
            assert_eq!(rec.times, vec![0.0, p.step_size]);
        }
    }
}

#[test]
fn meson_meson_is_mirror_symmetric() {
    let p = preset("meson_meson_g3");
    let rec = run_exact(&p).unwrap();
    let l = p.l;
    // Mirroring swaps sublattices, so the staggered charge flips sign.
    let worst = rec
        .charge
        .iter()
        .flat_map(|row| (0..l).map(move |j| (row[j] + row[l - 1 - j]).abs()))
        .fold(0.0, f64::max);
    assert!(worst < 1e-8, "mirror asymmetry {worst}");
}

#[test]
fn walls_isolate_the_outer_sites() {
    for name in ["meson_meson_g3", "meson_antimeson_g3"] {
        let mut p = preset(name);
        p.n_steps = p.off_step + 4;
        let scat = run_exact(&p).unwrap();
        let vac = run_exact(&p.variant(CollisionKind::Vacuum)).unwrap();
        let (lo, hi) = (p.walls[0], p.walls[1]);
        let outer: Vec<usize> = (0..p.l).filter(|&j| j <= lo || j > hi).collect();
        for step in 0..=p.off_step {
            for &j in &outer {
                assert!((scat.charge[step][j] - vac.charge[step][j]).abs() < 1e-10, "{name} step {step} site {j}");
            }
        }
        // Once released the mesons reach the outer region.
        let moved = (p.off_step + 1..=p.n_steps).any(|s| outer.iter().any(|&j| (scat.charge[s][j] - vac.charge[s][j]).abs() > 1e-6));
        assert!(moved, "{name}");
    }
}

#[test]
fn total_charge_is_conserved() {
    let mut p = preset("meson_antimeson_g0.5");
    p.n_steps = 20;
    for rec in [run_exact(&p).unwrap(), run_noiseless(&p, &CompileOptions::default()).unwrap()] {
        let q0 = rec.total_charge(0);
        assert!((0..rec.times.len()).all(|s| (rec.total_charge(s) - q0).abs() < 1e-10));
    }
}

#[test]
fn energy_is_conserved_between_switches() {
    let p = preset("meson_antimeson_g3");
    let model = p.model().unwrap();
    let phys = enumerate_physical(&model).unwrap();
    let psi0 = initial_physical(&prepare_initial(&p).unwrap(), &phys).unwrap();
    let engine = ExactEngine::new(&model, &phys, &p.walls(), p.step_size).unwrap();
    let h_free = SubspaceHamiltonian::build(&model, &phys, &[]).unwrap();
    let h_walled = SubspaceHamiltonian::build(&model, &phys, &p.walls).unwrap();
    let hold = p.off_step as f64 * p.step_size;
    let e = |h: &SubspaceHamiltonian, t: f64| h.expectation(&engine.state_at(&psi0, t).unwrap());
    let before = e(&h_walled, 0.0);
    for t in [0.3, 1.7, hold] {
        assert!((e(&h_walled, t) - before).abs() < 1e-9);
    }
    let after = e(&h_free, hold);
    for t in [hold + 0.4, hold + 3.1, 10.0] {
        assert!((e(&h_free, t) - after).abs() < 1e-9);
    }
}

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Compares against the stored trace, or rewrites it when `QLM_BLESS` is set.
fn compare_golden(rec: &ObservableRecord, file: &str) {
    let path = golden_dir().join(file);
    if std::env::var_os("QLM_BLESS").is_some() {
        std::fs::create_dir_all(golden_dir()).unwrap();
        write_grid(&path, "site", &rec.times, &rec.charge).unwrap();
        return;
    }
    let (times, charge) = read_grid(&path).unwrap();
    assert_eq!(times, rec.times);
    for (step, (a, b)) in charge.iter().zip(&rec.charge).enumerate() {
        for (j, (x, y)) in a.iter().zip(b).enumerate() {
            assert!((x - y).abs() < GOLDEN_TOL, "{file} step {step} site {j}: {x} vs {y}");
        }
    }
}

#[test]
fn golden_meson_meson_traces() {
    let p = preset("meson_meson_g3");
    compare_golden(&run_noiseless(&p, &CompileOptions::default()).unwrap(), "meson_meson_g3.noiseless.charge.csv");
    compare_golden(&run_exact(&p).unwrap(), "meson_meson_g3.exact.charge.csv");
}
