//! Internal helpers: seed derivation, content hashing, CSV output, and
//! small statistics shared across modules.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;

/// Domain separation tags for [`derive_seed`]. Each independent stream of
/// randomness in the toolkit gets its own tag so that, for example, the
/// parameter draw of sample 7 never collides with its noise draw.
pub mod tag {
    pub const PARAMS: u64 = 0x5041_5241;
    pub const LANCZOS_START: u64 = 0x4c41_4e43;
    pub const NOISE: u64 = 0x4e4f_4953;
    pub const SHADOW_SNAPSHOT: u64 = 0x5348_4144;
    pub const RFF_FREQ: u64 = 0x5246_4651;
    pub const CV_SHUFFLE: u64 = 0x4356_5348;
    pub const MPS_INIT: u64 = 0x4d50_5349;
    pub const TRAIN_POOL: u64 = 0x5452_4149;
    pub const TEST_POOL: u64 = 0x5445_5354;
    pub const SAMPLE: u64 = 0x534d_504c;
}

/// Derives an independent child seed from `(seed, tag)` with two rounds of
/// splitmix64. Used everywhere a reproducible sub-stream is needed.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for _ in 0..2 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
    }
    z
}

/// FNV-1a hash of a byte string, used to stamp output files with the hash of
/// the config that produced them.
pub fn fnv1a_hex(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// Writes a CSV file with `.` decimals and LF line endings. When `hash` is
/// present the first line is a `# config-hash: ...` comment.
pub fn write_csv(
    path: &Path,
    hash: Option<&str>,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    if let Some(h) = hash {
        writeln!(out, "# config-hash: {h}")?;
    }
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Renders a CSV body to a string (same format as [`write_csv`]); useful for
/// tests and for commands that log their table.
pub fn csv_string(hash: Option<&str>, header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = String::new();
    if let Some(h) = hash {
        let _ = writeln!(s, "# config-hash: {h}");
    }
    let _ = writeln!(s, "{}", header.join(","));
    for row in rows {
        let _ = writeln!(s, "{}", row.join(","));
    }
    s
}

/// Sample mean.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample standard deviation (n−1 denominator).
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Root mean squared difference between two equal-length slices.
pub fn rms_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return 0.0;
    }
    let ss: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (ss / a.len() as f64).sqrt()
}
