use segalign::eval::{dump_map_image, map_image_bytes};
use segalign::SimilarityMap;

const GOLDEN: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/overlay.ppm");

fn diagonal_map() -> SimilarityMap {
    let values = (0..48).map(|k| if k / 8 == k % 8 { 1.0 } else { 0.0 }).collect();
    SimilarityMap::from_dense("q", "r", 6, 8, (8.0, 8.0), values).unwrap()
}

/// Drawn by hand: `#` white, `.` black, `G` ground truth, `R` prediction.
fn expected() -> Vec<u8> {
    let rows = ["#.RRRR..", ".GRRRR..", ".GGG....", "...#....", "....#...", ".....#.."];
    let mut out = b"P6\n8 6\n255\n".to_vec();
    for c in rows.concat().chars() {
        out.extend_from_slice(match c {
            '#' => &[255, 255, 255],
            '.' => &[0, 0, 0],
            'G' => &[0, 255, 0],
            _ => &[255, 0, 0],
        });
    }
    out
}

#[test]
fn overlay_matches_hand_drawn_image() {
    let got = map_image_bytes(&diagonal_map(), &[[1.0, 1.0, 4.0, 3.0]], &[[2.0, 0.0, 6.0, 2.0]]);
    assert_eq!(got, expected());
}

#[test]
fn overlay_file_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("map.ppm");
    dump_map_image(&diagonal_map(), &[[1.0, 1.0, 4.0, 3.0]], &[[2.0, 0.0, 6.0, 2.0]], &path).unwrap();
    assert_eq!(std::fs::read(path).unwrap(), std::fs::read(GOLDEN).unwrap());
}
