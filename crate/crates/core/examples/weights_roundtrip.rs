//! Write a seeded weight file, read it back, and check it against the manifest.

use mvt::weights::{load_for_config, random_init, save_weights};
use mvt::{build_manifest, ModelConfig, MvtModel};

fn main() -> mvt::Result<()> {
    let cfg = ModelConfig::default();
    let store = random_init(&cfg, 42)?;
    let path = std::env::temp_dir().join("mvt_roundtrip.mvtw");
    save_weights(&store, &path)?;
    let bytes = std::fs::metadata(&path)?.len();
    let back = load_for_config(&path, &cfg)?;
    println!("{} tensors, {} elements, {bytes} bytes", back.len(), back.element_count());
    println!("fingerprint {:016x} -> {:016x}", store.fingerprint(), back.fingerprint());
    assert_eq!(store.fingerprint(), back.fingerprint());

    let first: Vec<_> = back.iter().take(3).map(|(n, t)| format!("{n} {:?}", t.shape())).collect();
    println!("first entries: {}", first.join(", "));
    let manifest = build_manifest(&cfg)?;
    println!("learnable parameters per manifest: {}", manifest.parameter_count());
    MvtModel::from_store(&cfg, &back)?;
    std::fs::remove_file(&path)?;
    Ok(())
}
