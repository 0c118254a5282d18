//! Writes the synthetic observed data used by the bundled configs.
//!
//! cargo run --release -p lfconflict --example make_observed -- data

use std::fs;
use std::path::PathBuf;

use lfconflict::simulators::{self, RickerConfig};

fn write(path: PathBuf, values: impl IntoIterator<Item = f64>) {
    let text: String = values.into_iter().map(|v| format!("{v}\n")).collect();
    fs::write(&path, text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    println!("wrote {}", path.display());
}

fn main() {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data".into()));
    fs::create_dir_all(&dir).expect("create output directory");

    write(dir.join("poisson_obs.csv"), [0.0, 0.0, 0.0, 0.0, 5.0]);

    let diam = simulators::stereo_simulate(&[100.0, 2.0, 0.2], 11).expect("stereo draw");
    write(dir.join("stereo_obs.csv"), diam);

    // growth differs between low and high abundance
    let cfg = RickerConfig::default();
    let counts = simulators::ricker_simulate_switching(&[12.0, 0.04, -2.0], &cfg, 0.001, -0.05, 1100).expect("ricker draw");
    write(dir.join("ricker_obs.csv"), counts.into_iter().map(|v| v as f64));

    let mut series: Vec<f64> = simulators::ricker_simulate(&[12.0, 0.01, -1.0], &cfg, 21)
        .expect("ricker draw")
        .into_iter()
        .map(|v| v as f64)
        .collect();
    simulators::inject_spike(&mut series, 120, 10, 3.0).expect("spike inside series");
    write(dir.join("ricker_window_obs.csv"), series);
}
