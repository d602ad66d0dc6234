use std::fs;
use std::sync::Arc;
use std::thread;

use tempfile::TempDir;
use weave::store::{add_entry, load_library, save_library, SharedLibrary};
use weave_core::{EntryKind, Library, LibraryEntry};

fn sample() -> Library {
    let mut lib = Library::new();
    lib.register(LibraryEntry::new("qc", EntryKind::Skill, "quality control")).unwrap();
    lib.register(LibraryEntry::new("umap", EntryKind::Tool, "embed cells").with_schemas("matrix", "embedding")).unwrap();
    lib.schemas.add_rename("gene", "symbol");
    lib
}

#[test]
fn save_then_load_is_identity() {
    let dir = TempDir::new().unwrap();
    let lib = sample();
    save_library(dir.path(), &lib).unwrap();
    let back = load_library(dir.path()).unwrap();
    assert_eq!(back, lib);
    let first = fs::read_to_string(dir.path().join("umap.json")).unwrap();
    save_library(dir.path(), &back).unwrap();
    assert_eq!(fs::read_to_string(dir.path().join("umap.json")).unwrap(), first);
}

#[test]
fn missing_directory_is_an_empty_library() {
    let dir = TempDir::new().unwrap();
    assert!(load_library(&dir.path().join("absent")).unwrap().is_empty());
}

#[test]
fn add_entry_appends_and_rejects_duplicates() {
    let dir = TempDir::new().unwrap();
    save_library(dir.path(), &sample()).unwrap();
    let entry = dir.path().join("new.json");
    fs::write(&entry, r#"{"id": "leiden", "kind": "skill", "description": "cluster cells"}"#).unwrap();
    assert_eq!(add_entry(dir.path(), &entry).unwrap(), "leiden");
    assert_eq!(add_entry(dir.path(), &entry).unwrap_err().code(), "DuplicateId");
    let ids: Vec<String> = load_library(dir.path()).unwrap().entries().map(|e| e.id.clone()).collect();
    assert_eq!(ids, ["leiden", "qc", "umap"]);
}

#[test]
fn snapshots_do_not_see_later_registrations() {
    let shared = Arc::new(SharedLibrary::new(sample()));
    let before = shared.snapshot();
    let writers: Vec<_> = (0..8)
        .map(|i| {
            let shared = Arc::clone(&shared);
            thread::spawn(move || shared.register(LibraryEntry::new(format!("s{i}"), EntryKind::Skill, "x")).unwrap())
        })
        .collect();
    for w in writers {
        w.join().unwrap();
    }
    assert_eq!(before.len(), 2);
    assert_eq!(shared.snapshot().len(), 10);
}
