//! Replays the checked-in fuzz corpus, plus seeded byte mutations of every
//! seed, through the fuzz-target checks on the stable toolchain.

#[path = "../../../fuzz/src/lib.rs"]
mod checks;

use std::path::{Path, PathBuf};

use meshforge::mesh::{read_mesh, MeshFormat};
use meshforge::pipeline::Script;
use meshforge::repo::{decode_log_line, LogEntry};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = fn(&[u8]);

const TARGETS: [(&str, Check); 7] = [
    ("mesh_binary", checks::mesh_binary),
    ("mesh_obj", checks::mesh_obj),
    ("suggestions", checks::suggestions),
    ("repo_log_line", checks::repo_log_line),
    ("session_script", checks::session_script),
    ("backend_response", checks::backend_response),
    ("lasso", checks::lasso),
];

fn corpus(target: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target)
}

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(corpus(target))
        .unwrap_or_else(|e| panic!("{target}: {e}"))
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn mutate(rng: &mut ChaCha8Rng, seed: &[u8]) -> Vec<u8> {
    let mut v = seed.to_vec();
    for _ in 0..rng.gen_range(1..6) {
        match rng.gen_range(0..4) {
            0 if !v.is_empty() => {
                let i = rng.gen_range(0..v.len());
                v[i] = rng.gen();
            }
            1 if !v.is_empty() => {
                let i = rng.gen_range(0..v.len());
                v.remove(i);
            }
            2 => {
                let i = rng.gen_range(0..=v.len());
                v.insert(i, rng.gen());
            }
            _ => {
                let i = rng.gen_range(0..=v.len());
                v.truncate(i);
            }
        }
    }
    v
}

#[test]
fn every_target_has_seeds() {
    for (target, _) in TARGETS {
        assert!(seeds(target).len() >= 3, "{target}");
    }
}

#[test]
fn seeds_pass_their_checks() {
    for (target, check) in TARGETS {
        for (name, bytes) in seeds(target) {
            let ok = std::panic::catch_unwind(|| check(&bytes)).is_ok();
            assert!(ok, "{target}/{name}");
        }
    }
}

#[test]
fn mutated_seeds_pass_their_checks() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (target, check) in TARGETS {
        for (name, bytes) in seeds(target) {
            for i in 0..300 {
                let m = mutate(&mut rng, &bytes);
                let ok = std::panic::catch_unwind(|| check(&m)).is_ok();
                assert!(ok, "{target}/{name} mutation {i}: {m:?}");
            }
        }
    }
}

fn seed(target: &str, name: &str) -> Vec<u8> {
    std::fs::read(corpus(target).join(name)).unwrap()
}

#[test]
fn well_formed_seeds_decode() {
    let tet = read_mesh(&seed("mesh_binary", "tetrahedron.mforge"), MeshFormat::Binary).unwrap();
    assert!(tet.validate().is_valid());
    let obj = read_mesh(&seed("mesh_obj", "tetrahedron.obj"), MeshFormat::Obj).unwrap();
    assert_eq!(obj, tet);
    let upsert = decode_log_line(std::str::from_utf8(&seed("repo_log_line", "upsert.json")).unwrap()).unwrap();
    assert!(matches!(upsert, LogEntry::Upsert { .. }));
    let script = Script::from_json(std::str::from_utf8(&seed("session_script", "speech.json")).unwrap()).unwrap();
    assert_eq!(script.steps.len(), 3);
    let mesh_reply = seed("backend_response", "mesh_ok.bin");
    let out = meshforge::backends::http::decode_response(200, &mesh_reply[2..]).unwrap();
    let b64: String = meshforge::backends::http::output_field(out, "mesh").unwrap();
    assert_eq!(meshforge::backends::http::decode_mesh_payload(&b64).unwrap(), tet);
    let parsed = meshforge::recommend::parse_suggestions(std::str::from_utf8(&seed("suggestions", "menu.txt")).unwrap());
    assert_eq!(parsed.suggestions.len(), 5);
    assert!(parsed.issues.is_empty());
}
