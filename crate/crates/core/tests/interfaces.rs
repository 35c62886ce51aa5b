//! External formats: codebook files, pattern caches, packet bits, CSV and the CLI.

use std::process::Command;

use agb_core::agb::FeedbackPacket;
use agb_core::codebook::{rvq_codebook, Codebook, CodebookError};
use agb_core::harness::{format_csv, parse_csv, CSV_HEADER};
use agb_core::mathkit::C64;
use agb_core::patterns::{GroupPattern, PatternSet};
use agb_core::rng::stream;

#[test]
fn codebook_file_layout() {
    let cb = Codebook::from_flat(2, vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.6), C64::new(0.8, 0.0)])
        .unwrap();
    let mut bytes = Vec::new();
    cb.write_to(&mut bytes).unwrap();
    assert_eq!(&bytes[..4], b"AGBC");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
    assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 2);
    assert_eq!(bytes.len(), 16 + 4 * 16);
    let f = |i: usize| f64::from_le_bytes(bytes[16 + 8 * i..24 + 8 * i].try_into().unwrap());
    assert_eq!((f(0), f(1), f(4), f(5), f(6)), (1.0, 0.0, 0.0, 0.6, 0.8));
    assert_eq!(Codebook::read_from(&bytes[..]).unwrap(), cb);

    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(Codebook::read_from(&bad[..]), Err(CodebookError::Format(_))));
    assert!(Codebook::read_from(&bytes[..bytes.len() - 1]).is_err());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cb.bin");
    let big = rvq_codebook(4, 6, &mut stream(1, &[])).unwrap();
    big.save(&path).unwrap();
    assert_eq!(Codebook::load(&path).unwrap(), big);
}

#[test]
fn pattern_cache_layout() {
    let set = PatternSet::new(1, vec!["0 1|2 3".parse().unwrap(), "0 2|1 3".parse().unwrap()]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("patterns.txt");
    set.write_cache(&path, 0xabc).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text, "n_t=4 n_g=2 b_p=1 model=0000000000000abc\n0 1|2 3\n0 2|1 3\n");
    assert_eq!(PatternSet::read_cache(&path, 4, 2, 1, 0xabc).unwrap(), Some(set));
    assert_eq!(PatternSet::read_cache(&path, 4, 2, 1, 0xabd).unwrap(), None);
    std::fs::write(&path, "n_t=4 n_g=2 b_p=1 model=0000000000000abc\n0 1|1 3\n0 2|1 3\n").unwrap();
    assert!(PatternSet::read_cache(&path, 4, 2, 1, 0xabc).is_err());
    let p: GroupPattern = "3 1|0 2".parse().unwrap();
    assert_eq!(p.to_string(), "1 3|0 2");
}

#[test]
fn packet_bits_are_big_endian_header_first() {
    let p = FeedbackPacket::new(5, 3, 4, 10).unwrap();
    assert_eq!(p.to_bit_string(), "0101000011");
    assert_eq!(FeedbackPacket::from_bit_string("0101000011", 4).unwrap(), p);
    assert!(FeedbackPacket::new(16, 0, 4, 10).is_err());
    assert!(FeedbackPacket::from_bit_string("01x1", 2).is_err());
}

#[test]
fn csv_header_and_round_trip() {
    let tiny = 1e-20f64;
    let text = format!(
        "{CSV_HEADER}\nfig,10,agb,3.25,0.125,2000,1\nfig,0.30000000000000004,conventional,{tiny},0,1,18446744073709551615\n"
    );
    let rows = parse_csv(&text).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1].x, 0.1 + 0.2);
    assert_eq!(rows[1].mean_rate, tiny);
    assert_eq!(format_csv(&rows), text);
}

const TINY: &str = r#"{
  "id": "tiny",
  "model": {"type": "exponential", "alpha": 0.8, "phase": {"kind": "fixed", "value": 0.0}},
  "n_t": 8, "n_g": 4, "k_users": 2, "b_total": 8, "b_p": 2, "m": 2,
  "axis": "snr_db", "grid": [0, 10],
  "methods": ["agb", "conventional", "perfect_csit"],
  "trials": 30, "seed": 5
}"#;

fn agb(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_agb")).args(args).output().unwrap()
}

#[test]
fn cli_runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.json");
    std::fs::write(&cfg, TINY).unwrap();
    let cfg = cfg.to_str().unwrap();
    let out = |name: &str, extra: &[&str]| {
        let path = dir.path().join(name);
        let mut args = vec!["--config", cfg, "--out", path.to_str().unwrap()];
        args.extend_from_slice(extra);
        let o = agb(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(path).unwrap()
    };
    let a = out("a.csv", &[]);
    assert_eq!(a, out("b.csv", &["--threads", "1"]));
    assert_ne!(a, out("c.csv", &["--seed", "6"]));
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with(&format!("{CSV_HEADER}\n")));
    assert_eq!(text.lines().count(), 7);
    assert!(text.lines().skip(1).all(|l| l.starts_with("tiny,") && l.ends_with(",30,5")));
    let t = String::from_utf8(out("d.csv", &["--trials", "3"])).unwrap();
    assert!(t.lines().skip(1).all(|l| l.ends_with(",3,5")));

    let piped = agb(&["--config", cfg, "--trials", "2"]);
    assert!(piped.status.success());
    assert!(String::from_utf8(piped.stdout).unwrap().starts_with(CSV_HEADER));
}

#[test]
fn cli_rejects_bad_configs() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, TINY.replace("\"n_g\": 4", "\"n_g\": 3")).unwrap();
    let o = agb(&["--config", bad.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("n_g"));

    std::fs::write(&bad, "{ not json").unwrap();
    assert!(!agb(&["--config", bad.to_str().unwrap()]).status.success());
    assert!(!agb(&["--scenario", "no-such-figure"]).status.success());
    assert!(!agb(&["--config", dir.path().join("missing.json").to_str().unwrap()]).status.success());
    assert!(!agb(&["--scenario", "fig6", "--trials", "0"]).status.success());
    assert!(!agb(&[]).status.success());
    let list = agb(&["--list"]);
    assert!(list.status.success());
    assert!(String::from_utf8(list.stdout).unwrap().lines().any(|l| l == "fig6"));
}
