//! Reader for the gzipped IDX files under `data/mnist`.

use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use veil::numeric::Matrix;

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")
}

fn read_gz(path: &Path) -> Vec<u8> {
    let file = std::fs::File::open(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let mut out = Vec::new();
    GzDecoder::new(file).read_to_end(&mut out).expect("valid gzip");
    out
}

fn be_u32(b: &[u8], at: usize) -> usize {
    u32::from_be_bytes(b[at..at + 4].try_into().unwrap()) as usize
}

/// First `limit` images scaled to [0, 1], one row each.
pub fn images(name: &str, limit: usize) -> Matrix {
    let b = read_gz(&data_dir().join(name));
    assert_eq!(be_u32(&b, 0), 0x0803, "image file magic");
    let n = be_u32(&b, 4).min(limit);
    let d = be_u32(&b, 8) * be_u32(&b, 12);
    let data = b[16..16 + n * d].iter().map(|&p| p as f64 / 255.0).collect();
    Matrix::new(n, d, data).unwrap()
}

pub fn labels(name: &str, limit: usize) -> Vec<usize> {
    let b = read_gz(&data_dir().join(name));
    assert_eq!(be_u32(&b, 0), 0x0801, "label file magic");
    let n = be_u32(&b, 4).min(limit);
    b[8..8 + n].iter().map(|&l| l as usize).collect()
}
