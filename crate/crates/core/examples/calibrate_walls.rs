//! Recomputes the wall release step of each walled preset.
//!
//! Usage: `cargo run --release --example calibrate_walls [threshold]`

use qlm_core::scattering::{calibrate_off_step, ScatteringProtocol, ARRIVAL_THRESHOLD, PRESETS};

fn main() -> qlm_core::Result<()> {
    let threshold = match std::env::args().nth(1) {
        Some(s) => s.parse().map_err(|_| qlm_core::Error::InvalidArgument(format!("bad threshold '{s}'")))?,
        None => ARRIVAL_THRESHOLD,
    };
    for name in PRESETS {
        let p = ScatteringProtocol::preset(name)?;
        if p.walls.is_empty() {
            continue;
        }
        let k = calibrate_off_step(&p, threshold)?;
        println!("{name}: off_step {k} (shipped {}), t = {}", p.off_step, k as f64 * p.step_size);
    }
    Ok(())
}
