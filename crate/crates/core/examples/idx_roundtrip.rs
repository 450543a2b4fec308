//! Writes a synthetic dataset as IDX files, reads it back, and shows the
//! errors raised for malformed input.
//!
//! cargo run --example idx_roundtrip

use evonet::data::{dataset_to_idx, encode_idx_images, encode_idx_labels, gen_rectangles, load_idx, parse_idx_labels};
use evonet::rng::stream;

fn main() -> evonet::Result<()> {
    let ds = gen_rectangles(50, 28, &mut stream(5, &[]))?;
    let (images, labels) = dataset_to_idx(&ds)?;
    let dir = std::env::temp_dir().join("evonet-idx-example");
    std::fs::create_dir_all(&dir).expect("temp dir");
    let (ip, lp) = (dir.join("images-idx3-ubyte"), dir.join("labels-idx1-ubyte"));
    std::fs::write(&ip, encode_idx_images(&images)).expect("write images");
    std::fs::write(&lp, encode_idx_labels(&labels)).expect("write labels");

    let back = load_idx(&ip, &lp)?;
    let max_err = (&back.x - &ds.x).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    println!("{} images of {:?}, labels equal: {}, max pixel error {max_err:.4}", back.len(), back.image_shape, back.y == ds.y);

    let mut bad = encode_idx_labels(&labels);
    bad[3] = 0x03;
    println!("bad magic: {}", parse_idx_labels(&bad).unwrap_err());
    println!("truncated: {}", parse_idx_labels(&encode_idx_labels(&labels)[..20]).unwrap_err());
    Ok(())
}
