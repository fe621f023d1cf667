//! Property tests for the serialization layer: whatever goes out must come
//! back identical, and hostile bytes must produce errors, never panics.

use aspects_core::io::{
    encode_volume, parse_volume, read_score_table, read_volume, report_from_json, report_to_json,
    write_score_table, write_volume, Volume,
};
use aspects_core::phantom::{make_anatomy, make_infarct, LesionSite, PhantomSpec};
use aspects_core::{
    Dims, Hemisphere, Region, ScorePair, ScorePairTable, Spacing, VoxelGrid,
};
use proptest::prelude::*;

fn dims_strategy() -> impl Strategy<Value = Dims> {
    (1usize..=5, 1usize..=5, 1usize..=5).prop_map(|(x, y, z)| Dims::new(x, y, z).unwrap())
}

fn spacing_strategy() -> impl Strategy<Value = Spacing> {
    // spans several orders of magnitude and lands on non-representable
    // decimals
    (1u32..40000, 1u32..40000, 1u32..40000)
        .prop_map(|(a, b, c)| {
            Spacing::new(a as f64 / 1000.0, b as f64 / 997.0, c as f64 / 1.0).unwrap()
        })
}

proptest! {
    #[test]
    fn label_volumes_round_trip_exactly(
        dims in dims_strategy(),
        spacing in spacing_strategy(),
        seed in any::<u32>(),
    ) {
        let data: Vec<u8> = (0..dims.len())
            .map(|i| ((seed as usize + i * 7) % 21) as u8)
            .collect();
        let grid = VoxelGrid::new(dims, spacing, data).unwrap();
        let parsed = parse_volume(&encode_volume(&grid)).unwrap();
        match parsed {
            Volume::Labels(back) => {
                prop_assert_eq!(back.dims(), grid.dims());
                prop_assert_eq!(back.spacing().sx.to_bits(), grid.spacing().sx.to_bits());
                prop_assert_eq!(back.spacing().sy.to_bits(), grid.spacing().sy.to_bits());
                prop_assert_eq!(back.spacing().sz.to_bits(), grid.spacing().sz.to_bits());
                prop_assert_eq!(back.data(), grid.data());
            }
            Volume::Values(_) => prop_assert!(false, "element type changed"),
        }
    }

    #[test]
    fn float_volumes_preserve_every_bit_pattern(
        dims in dims_strategy(),
        bits in proptest::collection::vec(any::<u32>(), 125),
    ) {
        // raw bit patterns include NaNs, infinities, denormals
        let data: Vec<f32> = bits.iter().take(dims.len()).map(|&b| f32::from_bits(b)).collect();
        prop_assume!(data.len() == dims.len());
        let spacing = Spacing::new(0.5, 0.625, 5.0).unwrap();
        let grid = VoxelGrid::new(dims, spacing, data).unwrap();
        let parsed = parse_volume(&encode_volume(&grid)).unwrap();
        match parsed {
            Volume::Values(back) => {
                let got: Vec<u32> = back.data().iter().map(|v| v.to_bits()).collect();
                let want: Vec<u32> = grid.data().iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(got, want);
            }
            Volume::Labels(_) => prop_assert!(false, "element type changed"),
        }
    }

    /// Arbitrary bytes must never panic the parser.
    #[test]
    fn hostile_bytes_error_cleanly(bytes in proptest::collection::vec(any::<u8>(), 0..300)) {
        let _ = parse_volume(&bytes);
    }

    /// Same, but starting from a valid file and corrupting one byte.
    #[test]
    fn single_byte_corruption_errors_cleanly(
        pos in 0usize..200,
        byte in any::<u8>(),
    ) {
        let dims = Dims::new(3, 3, 3).unwrap();
        let grid = VoxelGrid::fill(dims, Spacing::isotropic(1.0).unwrap(), 1u8);
        let mut bytes = encode_volume(&grid);
        let idx = pos % bytes.len();
        bytes[idx] = byte;
        let _ = parse_volume(&bytes); // must return, not panic
    }

    #[test]
    fn score_tables_round_trip_through_csv(
        scores in proptest::collection::vec((0u8..=10, 0u8..=10), 1..60),
    ) {
        let rows: Vec<ScorePair> = scores
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| ScorePair {
                scan_id: format!("id_{i:03}"),
                score_a: a,
                score_b: b,
            })
            .collect();
        let table = ScorePairTable::new(rows).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_score_table(&table, &path).unwrap();
        prop_assert_eq!(read_score_table(&path).unwrap(), table);
    }

    #[test]
    fn reports_round_trip_through_json(seed in any::<u64>(), fraction in 0.0f64..=1.0) {
        let spec = PhantomSpec::new(seed).with_plan(vec![
            LesionSite {
                hemisphere: Hemisphere::Right,
                region: Region::M3,
                fill_fraction: fraction,
            },
            LesionSite {
                hemisphere: Hemisphere::Left,
                region: Region::LentiformNucleus,
                fill_fraction: 1.0 - fraction,
            },
        ]);
        let anatomy = make_anatomy(&spec).unwrap();
        let (_, report) = make_infarct(&spec, &anatomy).unwrap();
        let text = report_to_json(&report).unwrap();
        let back = report_from_json(&text).unwrap();
        prop_assert_eq!(&back, &report);
        prop_assert_eq!(
            back.infarct_volume_ml.to_bits(),
            report.infarct_volume_ml.to_bits()
        );
    }
}

#[test]
fn volume_files_round_trip_on_disk_for_both_element_types() {
    let dir = tempfile::tempdir().unwrap();
    let dims = Dims::new(4, 3, 2).unwrap();
    let spacing = Spacing::new(0.1, 0.2, 0.3).unwrap();

    let labels = VoxelGrid::new(dims, spacing, (0u8..24).map(|v| v % 21).collect()).unwrap();
    let path = dir.path().join("labels.mhd");
    write_volume(&labels, &path).unwrap();
    assert_eq!(read_volume(&path).unwrap(), Volume::Labels(labels));

    let values =
        VoxelGrid::new(dims, spacing, (0..24).map(|v| v as f32 / 23.0).collect()).unwrap();
    let path = dir.path().join("values.mhd");
    write_volume(&values, &path).unwrap();
    match read_volume(&path).unwrap() {
        Volume::Values(back) => {
            let got: Vec<u32> = back.data().iter().map(|v| v.to_bits()).collect();
            let want: Vec<u32> = values.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(got, want);
        }
        _ => panic!("element type changed"),
    }
}
