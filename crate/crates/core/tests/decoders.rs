//! Replays the checked-in fuzz corpus through every decoder, plus simple
//! truncations and byte flips of each seed, and checks that nothing panics.

use std::path::PathBuf;

use heatrisk::descent::DescentTrace;
use heatrisk::fem::{FieldTrajectory, TrajectoryCsv};
use heatrisk::field::CacheFile;
use heatrisk::lattice::{GeneratingVector, ShiftSet};
use heatrisk::study::{embedded_hash, Manifest, StudyConfig};

fn seeds(target: &str) -> Vec<Vec<u8>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<Vec<u8>> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| std::fs::read(e.unwrap().path()).unwrap())
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn variants(seed: &[u8]) -> Vec<Vec<u8>> {
    let mut v = vec![seed.to_vec()];
    for cut in 0..seed.len() {
        v.push(seed[..cut].to_vec());
    }
    for i in 0..seed.len() {
        for mask in [0x01u8, 0x80, 0xff] {
            let mut m = seed.to_vec();
            m[i] ^= mask;
            v.push(m);
        }
    }
    v
}

fn run(target: &str, f: impl Fn(&[u8])) {
    for seed in seeds(target) {
        for v in variants(&seed) {
            f(&v);
        }
    }
}

fn text(data: &[u8]) -> Option<&str> {
    std::str::from_utf8(data).ok()
}

#[test]
fn seeds_decode() {
    for s in seeds("trajectory_bin") {
        FieldTrajectory::from_bytes(&s).unwrap();
    }
    for s in seeds("trajectory_csv") {
        TrajectoryCsv::parse(text(&s).unwrap()).unwrap();
    }
    for s in seeds("shift_set") {
        ShiftSet::from_bytes(&s).unwrap();
    }
    for s in seeds("affine_cache") {
        CacheFile::decode(&s).unwrap();
    }
    for s in seeds("generating_vector") {
        GeneratingVector::parse(text(&s).unwrap()).unwrap();
    }
    for s in seeds("manifest") {
        Manifest::parse(text(&s).unwrap()).unwrap();
    }
    for s in seeds("descent_trace") {
        DescentTrace::parse_csv(text(&s).unwrap()).unwrap();
    }
    for s in seeds("study_config") {
        StudyConfig::from_toml(text(&s).unwrap()).unwrap();
    }
}

#[test]
fn binary_decoders_survive_mutations() {
    run("trajectory_bin", |d| {
        if let Ok((meta, t)) = FieldTrajectory::from_bytes(d) {
            assert_eq!(t.to_bytes(meta.level).unwrap(), d);
        }
    });
    run("shift_set", |d| {
        if let Ok(s) = ShiftSet::from_bytes(d) {
            assert_eq!(s.to_bytes(), d);
        }
    });
    run("affine_cache", |d| {
        if let Ok(c) = CacheFile::decode(d) {
            assert_eq!(c.fluctuations.len(), c.header.nnz * c.header.s_max);
        }
    });
}

#[test]
fn text_decoders_survive_mutations() {
    run("trajectory_csv", |d| {
        if let Some(Ok(p)) = text(d).map(TrajectoryCsv::parse) {
            let _ = p.into_trajectory();
        }
    });
    run("generating_vector", |d| {
        if let Some(Ok(gv)) = text(d).map(GeneratingVector::parse) {
            assert_eq!(GeneratingVector::parse(&gv.to_text()).unwrap(), gv);
        }
    });
    run("manifest", |d| {
        if let Some(t) = text(d) {
            let _ = embedded_hash(t);
            if let Ok(m) = Manifest::parse(t) {
                let _ = m.verify();
                assert_eq!(Manifest::parse(&m.render()).unwrap(), m);
            }
        }
    });
    run("descent_trace", |d| {
        if let Some(Ok(t)) = text(d).map(DescentTrace::parse_csv) {
            assert_eq!(DescentTrace::parse_csv(&t.to_csv()).unwrap().records.len(), t.records.len());
        }
    });
    run("study_config", |d| {
        if let Some(Ok(cfg)) = text(d).map(StudyConfig::from_toml) {
            let _ = cfg.to_toml();
        }
    });
}
