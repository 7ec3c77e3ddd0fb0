//! Writes a feature map as an FTN file, dumps its header and reads it back.
//!
//!     cargo run --example tensor_io [OUT_DIR]

mod common;

use hetmm::tensor::{decode_tensor, encode_tensor, HEADER_LEN};
use hetmm::{read_tensor, write_tensor, FeatureMap};

fn main() -> hetmm::Result<()> {
    let dir = common::out_dir("tensor-io");
    let map = FeatureMap::from_fn(2, 3, 4, |x, y| {
        (0..4).map(|c| (100 * y + 10 * x + c) as f32).collect()
    })?;
    let path = dir.join("example.ftn");
    write_tensor(&path, &map)?;

    let bytes = std::fs::read(&path).map_err(|e| hetmm::Error::Io {
        path: path.clone(),
        source: e,
    })?;
    let dims: Vec<u32> = bytes[8..20]
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    println!("{}: {} bytes", path.display(), bytes.len());
    println!(
        "  magic {:?} dtype {} ndim {} dims H,W,C = {dims:?}",
        std::str::from_utf8(&bytes[..4]).unwrap(),
        bytes[4],
        bytes[5]
    );
    println!(
        "  payload {} floats after a {HEADER_LEN}-byte header",
        (bytes.len() - HEADER_LEN) / 4
    );
    println!("  vector at (x=2, y=1): {:?}", map.vector(2, 1));

    assert_eq!(read_tensor(&path)?, map);
    let mut truncated = encode_tensor(&map)?;
    truncated.pop();
    match decode_tensor(&truncated, &path) {
        Err(e) => println!("  truncated copy rejected: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
