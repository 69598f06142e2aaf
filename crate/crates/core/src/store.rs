//! On-disk program store: one JSON document per program under
//! `<state-dir>/programs/`.
//!
//! Each document holds the source text and the AST. Loading re-parses the
//! source under the permissive grammar and refuses documents whose text and
//! AST disagree. Saving identical content leaves the file untouched.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::home::Catalog;
use crate::language::{parse, to_text, Grammar, Program, ProgramId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredProgram {
    pub program_id: ProgramId,
    pub source: String,
    pub ast: Program,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{0:?} cannot be used as a file name")]
    BadId(String),
    #[error("{path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("no stored program {0}")]
    NotFound(ProgramId),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone)]
pub struct ProgramStore {
    dir: PathBuf,
    catalog: Arc<Catalog>,
}

fn file_name(id: &ProgramId) -> Result<String, StoreError> {
    let s = id.as_str();
    let ok = !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if !ok {
        return Err(StoreError::BadId(s.to_string()));
    }
    Ok(format!("{s}.json"))
}

impl ProgramStore {
    /// Opens (creating if needed) the store under `state_dir`.
    pub fn open(state_dir: &Path, catalog: Arc<Catalog>) -> Result<Self, StoreError> {
        let dir = state_dir.join("programs");
        fs::create_dir_all(&dir)?;
        Ok(Self { dir, catalog })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn grammar(&self) -> Grammar {
        Grammar::permissive(self.catalog.clone())
    }

    /// Canonical document for a program.
    pub fn document(&self, program: &Program) -> StoredProgram {
        StoredProgram { program_id: program.id.clone(), source: to_text(program, &self.grammar()), ast: program.clone() }
    }

    fn encode(doc: &StoredProgram) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(doc).expect("program serializes");
        bytes.push(b'\n');
        bytes
    }

    /// Writes `program`. Returns false when the file already held exactly
    /// this content.
    pub fn save(&self, program: &Program) -> Result<bool, StoreError> {
        let path = self.dir.join(file_name(&program.id)?);
        let bytes = Self::encode(&self.document(program));
        if fs::read(&path).is_ok_and(|old| old == bytes) {
            return Ok(false);
        }
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, &bytes)?;
        fs::File::open(&tmp)?.sync_all()?;
        fs::rename(&tmp, &path)?;
        Ok(true)
    }

    pub fn delete(&self, id: &ProgramId) -> Result<(), StoreError> {
        let path = self.dir.join(file_name(id)?);
        match fs::remove_file(&path) {
            Err(e) if e.kind() == io::ErrorKind::NotFound => Err(StoreError::NotFound(id.clone())),
            r => Ok(r?),
        }
    }

    /// Every stored program, in id order.
    pub fn load_all(&self) -> Result<Vec<Program>, StoreError> {
        let mut paths: Vec<PathBuf> = fs::read_dir(&self.dir)?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()?;
        paths.retain(|p| p.extension().is_some_and(|e| e == "json"));
        paths.sort();
        let mut programs = Vec::with_capacity(paths.len());
        let mut ids = Vec::with_capacity(paths.len());
        let mut docs = Vec::with_capacity(paths.len());
        for path in paths {
            let corrupt = |message: String| StoreError::Corrupt { path: path.clone(), message };
            let doc: StoredProgram = serde_json::from_slice(&fs::read(&path)?).map_err(|e| corrupt(e.to_string()))?;
            if path.file_name().and_then(|n| n.to_str()) != Some(file_name(&doc.program_id)?.as_str()) {
                return Err(corrupt(format!("holds program {}", doc.program_id)));
            }
            ids.push(doc.program_id.clone());
            docs.push((path, doc));
        }
        let g = self.grammar().with_programs(ids);
        for (path, doc) in docs {
            let corrupt = |message: String| StoreError::Corrupt { path: path.clone(), message };
            let parsed = parse(&doc.source, &g).map_err(|e| corrupt(e.to_string()))?;
            if parsed != doc.ast {
                return Err(corrupt("source and ast disagree".into()));
            }
            programs.push(doc.ast);
        }
        Ok(programs)
    }
}
