//! Tab-separated triple file ingestion.

use std::fs;
use std::path::Path;

use super::{EntityId, RelationId, Triple, Vocab};
use crate::error::{KgcError, Result};

/// Train/valid/test triples (forward direction only) over shared
/// vocabularies. Relation ids here are pre-augmentation.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub entities: Vocab,
    pub relations: Vocab,
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
}

impl DatasetSplit {
    /// Triples of the named split ("train" | "valid" | "test").
    pub fn split(&self, name: &str) -> Result<&[Triple]> {
        match name {
            "train" => Ok(&self.train),
            "valid" => Ok(&self.valid),
            "test" => Ok(&self.test),
            other => Err(KgcError::Config(format!("unknown split '{other}'"))),
        }
    }
}

/// Parse one `head<TAB>relation<TAB>tail` file.
///
/// Ids are assigned in first-appearance order. With `frozen` set, symbols
/// missing from the vocabularies are an error instead of being added
/// (inductive-style strict mode).
pub fn load_triples(
    path: &Path,
    entities: &mut Vocab,
    relations: &mut Vocab,
    frozen: bool,
) -> Result<Vec<Triple>> {
    let text = fs::read_to_string(path).map_err(|e| KgcError::io(path, e))?;
    let mut triples = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let (h, r, t) = match (fields.next(), fields.next(), fields.next(), fields.next()) {
            (Some(h), Some(r), Some(t), None) => (h, r, t),
            _ => {
                return Err(KgcError::Parse {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    msg: format!("expected 3 tab-separated fields, got {}", line.split('\t').count()),
                })
            }
        };
        let lookup_entity = |v: &mut Vocab, name: &str| -> Result<u32> {
            if frozen {
                v.get(name)
                    .ok_or_else(|| KgcError::Vocab(format!("unknown entity '{name}' (frozen vocabulary)")))
            } else {
                Ok(v.intern(name))
            }
        };
        let lookup_relation = |v: &mut Vocab, name: &str| -> Result<u32> {
            if frozen {
                v.get(name)
                    .ok_or_else(|| KgcError::Vocab(format!("unknown relation '{name}' (frozen vocabulary)")))
            } else {
                Ok(v.intern(name))
            }
        };
        triples.push(Triple::new(
            EntityId(lookup_entity(entities, h)?),
            RelationId(lookup_relation(relations, r)?),
            EntityId(lookup_entity(entities, t)?),
        ));
    }
    Ok(triples)
}

/// Load the three split files of a dataset. Vocabularies are shared across
/// splits; in the default transductive mode entities first seen in
/// valid/test are added, in `strict` mode they are rejected.
pub fn load_split_dirs(
    train: &Path,
    valid: &Path,
    test: &Path,
    strict: bool,
) -> Result<DatasetSplit> {
    let mut entities = Vocab::new();
    let mut relations = Vocab::new();
    let train_t = load_triples(train, &mut entities, &mut relations, false)?;
    let valid_t = load_triples(valid, &mut entities, &mut relations, strict)?;
    let test_t = load_triples(test, &mut entities, &mut relations, strict)?;
    Ok(DatasetSplit {
        entities,
        relations,
        train: train_t,
        valid: valid_t,
        test: test_t,
    })
}
