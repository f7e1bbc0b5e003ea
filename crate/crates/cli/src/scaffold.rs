//! Project skeleton written by `objevo init`: a commented run config, a
//! planner schedule, synthetic 4-mer activity tables and sample motifs.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CONFIG_FILE: &str = "objevo.toml";
pub const PLAN_FILE: &str = "plan.toml";
pub const MOTIF_FILE: &str = "motifs.jaspar";

pub const CONFIG_TEMPLATE: &str = include_str!("../templates/objevo.toml");
pub const PLAN_TEMPLATE: &str = include_str!("../templates/plan.toml");
pub const MOTIF_TEMPLATE: &str = include_str!("../templates/motifs.jaspar");

/// Activity tables: path, cell type, seed offset.
pub const TABLES: [(&str, &str, u64); 3] = [
    ("tables/target.tsv", "target", 1),
    ("tables/offtarget_a.tsv", "off-target A", 2),
    ("tables/offtarget_b.tsv", "off-target B", 3),
];

pub const TABLE_K: usize = 4;
/// Weights are drawn uniformly from `[-TABLE_SCALE, TABLE_SCALE]`.
pub const TABLE_SCALE: f64 = 0.1;

/// A linear k-mer activity table with seeded uniform weights, in the text
/// format `KmerWeightTable::parse` reads.
pub fn weight_table(seed: u64, k: usize, scale: f64, label: &str) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = format!("# synthetic linear {k}-mer activity model: {label}\nk={k} bias=0\n");
    for code in 0..4usize.pow(k as u32) {
        let kmer: String = (0..k).rev().map(|i| b"ACGT"[(code >> (2 * i)) & 3] as char).collect();
        let w: f64 = rng.gen_range(-scale..=scale);
        writeln!(out, "{kmer}\t{w:.6}").expect("string write");
    }
    out
}

#[derive(Debug, Clone)]
pub struct Scaffold {
    pub dir: PathBuf,
    pub config: PathBuf,
    pub files: Vec<PathBuf>,
}

/// Writes the skeleton into `dir`, refusing to overwrite an existing config.
pub fn write(dir: &Path, seed: u64) -> io::Result<Scaffold> {
    let config = dir.join(CONFIG_FILE);
    if config.exists() {
        return Err(io::Error::new(
            io::ErrorKind::AlreadyExists,
            format!("{} already exists", config.display()),
        ));
    }
    std::fs::create_dir_all(dir.join("tables"))?;
    let mut files = Vec::new();
    let mut put = |rel: &str, text: &str| -> io::Result<()> {
        let p = dir.join(rel);
        std::fs::write(&p, text)?;
        files.push(p);
        Ok(())
    };
    put(CONFIG_FILE, CONFIG_TEMPLATE)?;
    put(PLAN_FILE, PLAN_TEMPLATE)?;
    put(MOTIF_FILE, MOTIF_TEMPLATE)?;
    for (rel, label, offset) in TABLES {
        put(
            rel,
            &weight_table(seed.wrapping_add(offset), TABLE_K, TABLE_SCALE, label),
        )?;
    }
    Ok(Scaffold {
        dir: dir.to_path_buf(),
        config,
        files,
    })
}
