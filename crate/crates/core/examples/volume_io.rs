//! Writes a phantom pair to disk, reads it back, crops a region and exports
//! a display slice.
//!
//! cargo run --release --example volume_io

use jbf::volume::{export_pgm_slice, volume_paths, PgmWindow};
use jbf::{crop, load_volume, make_phantom, save_volume, Roi};

fn main() -> jbf::Result<()> {
    let dir = std::env::temp_dir().join("jbf-volume-example");
    std::fs::create_dir_all(&dir).map_err(|e| jbf::JbfError::Io {
        path: dir.clone(),
        source: e,
    })?;

    let ph = make_phantom([64, 48, 6], 4, 20.0)?;
    let path = dir.join("noisy");
    save_volume(&ph.noisy, &path)?;
    let (raw, json) = volume_paths(&path);
    println!("{} + {}", raw.display(), json.display());

    let back = load_volume(&path)?;
    let worst = back
        .data()
        .iter()
        .zip(ph.noisy.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("round trip max abs change {worst:.2e} (32-bit storage)");

    let roi = Roi::new([16, 8, 2], [32, 32, 2]);
    let part = crop(&back, &roi)?;
    println!(
        "roi {:?} -> dims {:?}, mean {:.2}",
        roi,
        part.dims(),
        part.mean()
    );

    let pgm = dir.join("slice.pgm");
    export_pgm_slice(&ph.clean, 3, PgmWindow::default(), &pgm)?;
    println!("slice written to {}", pgm.display());
    Ok(())
}
