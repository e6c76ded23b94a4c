use dpsco::fmt_sig9;
use dpsco::io::{
    read_dataset_csv, read_metric_csv, read_trace_binary, read_trace_csv, read_trace_file,
    write_dataset_csv, write_dataset_csv_exact, write_trace_binary, write_trace_csv,
    write_trace_file,
};
use dpsco_core::{generate_shifted_gaussian_data, GradientTrace, Matrix, Split};
use proptest::prelude::*;

fn sample_trace(r: usize, p: usize) -> GradientTrace {
    let data = (0..r * p).map(|i| ((i * 37 % 101) as f64 - 50.0) / 7.0).collect();
    GradientTrace::from_matrix(Matrix::from_row_major(r, p, data).unwrap()).unwrap()
}

#[test]
fn binary_trace_layout() {
    let t = sample_trace(3, 2);
    let mut buf = Vec::new();
    write_trace_binary(&mut buf, &t).unwrap();
    assert_eq!(buf.len(), 16 + 6 * 8);
    assert_eq!(&buf[..4], b"GTRC");
    assert_eq!(&buf[4..8], &3u32.to_le_bytes());
    assert_eq!(&buf[8..12], &2u32.to_le_bytes());
    assert_eq!(&buf[12..16], &[0, 0, 0, 0]);
    let first = f64::from_le_bytes(buf[16..24].try_into().unwrap());
    assert_eq!(first, t.matrix().get(0, 0));
    let second = f64::from_le_bytes(buf[24..32].try_into().unwrap());
    assert_eq!(second, t.matrix().get(0, 1));
}

#[test]
fn malformed_traces_are_rejected() {
    let t = sample_trace(2, 2);
    let mut buf = Vec::new();
    write_trace_binary(&mut buf, &t).unwrap();
    assert!(read_trace_binary(&buf[..buf.len() - 1]).is_err());
    let mut bad = buf.clone();
    bad[0] = b'X';
    assert!(read_trace_binary(&bad[..]).is_err());
    assert!(read_trace_binary(&buf[..10]).is_err());
    assert!(read_trace_csv("1,2\n3\n".as_bytes()).is_err());
    assert!(read_trace_csv("".as_bytes()).is_err());
}

#[test]
fn trace_files_are_sniffed() {
    let dir = tempfile::tempdir().unwrap();
    let t = sample_trace(4, 3);
    for name in ["t.bin", "t.csv"] {
        let path = dir.path().join(name);
        write_trace_file(&path, &t).unwrap();
        assert_eq!(read_trace_file(&path).unwrap().matrix(), t.matrix(), "{name}");
    }
    let raw = std::fs::read(dir.path().join("t.csv")).unwrap();
    assert!(!raw.starts_with(b"GTRC"));
}

#[test]
fn dataset_round_trips() {
    let data = generate_shifted_gaussian_data(20, 6, 3, 1).unwrap();
    let mut exact = Vec::new();
    write_dataset_csv_exact(&mut exact, &data).unwrap();
    let back = read_dataset_csv(&exact[..], Split::Train).unwrap();
    assert_eq!(back.points(), data.points());
    assert_eq!(back.active_columns(), data.active_columns());

    let mut rounded = Vec::new();
    write_dataset_csv(&mut rounded, &data).unwrap();
    let text = String::from_utf8(rounded.clone()).unwrap();
    assert!(text.starts_with("x1,x2,x3,x4,x5,x6\n"));
    let back = read_dataset_csv(&rounded[..], Split::Test).unwrap();
    assert_eq!(back.split(), Split::Test);
    for (a, b) in back.points().as_slice().iter().zip(data.points().as_slice()) {
        assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0));
    }
}

#[test]
fn metric_files() {
    let m = read_metric_csv("a\n0.5\n2\n1\n".as_bytes()).unwrap();
    assert_eq!(m.diag(), &[2.0, 1.0, 0.5]);
    assert_eq!(m.permutation(), &[1, 2, 0]);
    assert!(read_metric_csv("1,2\n3,4\n".as_bytes()).is_err());
    assert!(read_metric_csv("1\n-2\n".as_bytes()).is_err());
    assert!(read_metric_csv("1\nabc\n".as_bytes()).is_err());
    assert!(read_metric_csv("".as_bytes()).is_err());
}

proptest! {
    #[test]
    fn sig9_keeps_nine_digits(v in prop::num::f64::NORMAL) {
        let back: f64 = fmt_sig9(v).parse().unwrap();
        prop_assert!((back - v).abs() <= 5e-9 * v.abs());
    }

    #[test]
    fn binary_round_trip_is_bitwise(r in 1usize..8, p in 1usize..8, seed in any::<u64>()) {
        let data: Vec<f64> = (0..r * p)
            .map(|i| f64::from_bits(seed.rotate_left(i as u32) & 0x7FEF_FFFF_FFFF_FFFF))
            .collect();
        let t = GradientTrace::from_matrix(Matrix::from_row_major(r, p, data).unwrap()).unwrap();
        let mut buf = Vec::new();
        write_trace_binary(&mut buf, &t).unwrap();
        let back = read_trace_binary(&buf[..]).unwrap();
        let same = back.matrix().as_slice().iter().zip(t.matrix().as_slice()).all(|(a, b)| a.to_bits() == b.to_bits());
        prop_assert!(same);
        let mut csv = Vec::new();
        write_trace_csv(&mut csv, &t).unwrap();
        let back = read_trace_csv(&csv[..]).unwrap();
        prop_assert_eq!(back.matrix(), t.matrix());
    }
}
