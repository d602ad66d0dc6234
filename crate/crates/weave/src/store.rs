//! On-disk library layout and shared snapshots.
//!
//! A library directory holds one `<id>.json` file per entry, an
//! `index.json` listing the ids, and an optional `schemas.json` with the
//! schema registry (schemas plus rename rules).

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use weave_core::artifact::SchemaRegistry;
use weave_core::canonical::to_canonical_string;
use weave_core::library::LibraryError;
use weave_core::{Library, LibraryEntry};

use thiserror::Error;

const INDEX_FILE: &str = "index.json";
const SCHEMAS_FILE: &str = "schemas.json";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: MalformedDocument: {detail}")]
    Malformed { path: PathBuf, detail: String },
    #[error(transparent)]
    Library(#[from] LibraryError),
}

impl StoreError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::Io { .. } => "Unreadable",
            Self::Malformed { .. } => "MalformedDocument",
            Self::Library(LibraryError::DuplicateId(_)) => "DuplicateId",
            Self::Library(LibraryError::MissingSchema(_)) => "MissingSchema",
            Self::Library(LibraryError::InvalidId(_)) => "InvalidId",
        }
    }
}

fn read(path: &Path) -> Result<String, StoreError> {
    fs::read_to_string(path).map_err(|source| StoreError::Io { path: path.to_path_buf(), source })
}

fn write(path: &Path, text: &str) -> Result<(), StoreError> {
    fs::write(path, format!("{text}\n")).map_err(|source| StoreError::Io { path: path.to_path_buf(), source })
}

fn parse<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T, StoreError> {
    serde_json::from_str(text).map_err(|e| StoreError::Malformed { path: path.to_path_buf(), detail: e.to_string() })
}

/// Load the library stored in `dir`. A missing directory is an empty
/// library.
pub fn load_library(dir: &Path) -> Result<Library, StoreError> {
    let mut library = Library::new();
    if !dir.exists() {
        return Ok(library);
    }
    let schemas_path = dir.join(SCHEMAS_FILE);
    if schemas_path.exists() {
        library.schemas = parse::<SchemaRegistry>(&schemas_path, &read(&schemas_path)?)?;
    }
    let index_path = dir.join(INDEX_FILE);
    if !index_path.exists() {
        return Ok(library);
    }
    let ids: Vec<String> = parse(&index_path, &read(&index_path)?)?;
    for id in ids {
        let path = dir.join(format!("{id}.json"));
        let entry: LibraryEntry = parse(&path, &read(&path)?)?;
        library.register(entry)?;
    }
    Ok(library)
}

/// Write `library` to `dir`, replacing the index and entry files.
pub fn save_library(dir: &Path, library: &Library) -> Result<(), StoreError> {
    fs::create_dir_all(dir).map_err(|source| StoreError::Io { path: dir.to_path_buf(), source })?;
    let ids: Vec<&str> = library.entries().map(|e| e.id.as_str()).collect();
    for entry in library.entries() {
        let text = to_canonical_string(entry).expect("entries serialize");
        write(&dir.join(format!("{}.json", entry.id)), &text)?;
    }
    write(&dir.join(INDEX_FILE), &to_canonical_string(&ids).expect("ids serialize"))?;
    write(&dir.join(SCHEMAS_FILE), &to_canonical_string(&library.schemas).expect("schemas serialize"))?;
    Ok(())
}

/// Register the entry in `entry_path` with the library in `dir`.
pub fn add_entry(dir: &Path, entry_path: &Path) -> Result<String, StoreError> {
    let mut library = load_library(dir)?;
    let entry: LibraryEntry = parse(entry_path, &read(entry_path)?)?;
    let id = library.register(entry)?;
    save_library(dir, &library)?;
    Ok(id)
}

/// A library shared between threads. Readers take an immutable snapshot;
/// writers swap in a new version, so a synthesis running on an older
/// snapshot never sees a half-applied update.
#[derive(Debug, Default)]
pub struct SharedLibrary {
    current: RwLock<Arc<Library>>,
}

impl SharedLibrary {
    pub fn new(library: Library) -> Self {
        Self { current: RwLock::new(Arc::new(library)) }
    }

    pub fn snapshot(&self) -> Arc<Library> {
        Arc::clone(&self.current.read().expect("library lock poisoned"))
    }

    pub fn register(&self, entry: LibraryEntry) -> Result<String, LibraryError> {
        let mut guard = self.current.write().expect("library lock poisoned");
        let mut next = Library::clone(&guard);
        let id = next.register(entry)?;
        *guard = Arc::new(next);
        Ok(id)
    }
}
