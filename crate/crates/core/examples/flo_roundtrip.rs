// Write and read Middlebury `.flo` files, including unknown-flow pixels.

use temporal_consistency::flow::FlowField;
use temporal_consistency::imgio::{decode_flo, encode_flo, read_flo, write_flo};

pub fn run_example() -> Result<usize, Box<dyn std::error::Error>> {
    let uv: Vec<f32> = (0..24)
        .flat_map(|i| [(i % 6) as f32 * 0.5, -((i / 6) as f32)])
        .collect();
    let valid: Vec<bool> = (0..24).map(|i| i % 5 != 0).collect();
    let flow = FlowField::with_validity(6, 4, uv, valid)?;
    let path = std::env::temp_dir().join("tcon_example.flo");
    write_flo(&flow, &path)?;
    let back = read_flo(&path)?;
    assert_eq!(back, flow);

    // one pixel, u = 1.5, v = -2.0
    let mut golden = Vec::new();
    golden.extend_from_slice(b"PIEH");
    golden.extend_from_slice(&1i32.to_le_bytes());
    golden.extend_from_slice(&1i32.to_le_bytes());
    golden.extend_from_slice(&1.5f32.to_le_bytes());
    golden.extend_from_slice(&(-2.0f32).to_le_bytes());
    let one = decode_flo(&golden)?;
    println!(
        "golden pixel {:?}; {} bytes for a 6x4 field",
        one.get(0, 0),
        encode_flo(&flow)?.len()
    );
    println!(
        "{} of {} pixels valid after the roundtrip",
        back.valid_count(),
        24
    );
    Ok(back.valid_count())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
