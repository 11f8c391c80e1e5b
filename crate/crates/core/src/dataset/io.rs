use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::InteractionDataset;
use crate::error::{Error, Result};

/// Overrides for the user/item universe. When unset, counts are the largest
/// id seen in either file plus one.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadOptions {
    pub num_users: Option<usize>,
    pub num_items: Option<usize>,
}

/// Parses the adjacency-list format `uid iid1 iid2 ...`, one user per line.
/// Blank lines are skipped; a user repeated on several lines is merged.
pub fn parse_interactions(text: &str, path: &Path) -> Result<BTreeMap<usize, Vec<usize>>> {
    let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let mut tokens = line.split_whitespace();
        let Some(first) = tokens.next() else {
            continue;
        };
        let parse = |tok: &str| {
            tok.parse::<usize>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                message: format!("malformed token {tok:?}"),
            })
        };
        let user = parse(first)?;
        let items = out.entry(user).or_default();
        for tok in tokens {
            items.push(parse(tok)?);
        }
    }
    Ok(out)
}

pub fn load_interactions(train_path: &Path, test_path: &Path) -> Result<InteractionDataset> {
    load_interactions_with(train_path, test_path, LoadOptions::default())
}

pub fn load_interactions_with(
    train_path: &Path,
    test_path: &Path,
    options: LoadOptions,
) -> Result<InteractionDataset> {
    let train = parse_interactions(&fs::read_to_string(train_path)?, train_path)?;
    let test = parse_interactions(&fs::read_to_string(test_path)?, test_path)?;

    let max_user = train.keys().chain(test.keys()).max().copied();
    let max_item = train
        .values()
        .chain(test.values())
        .flat_map(|v| v.iter())
        .max()
        .copied();
    let num_users = options
        .num_users
        .unwrap_or_else(|| max_user.map_or(0, |u| u + 1));
    let num_items = options
        .num_items
        .unwrap_or_else(|| max_item.map_or(0, |i| i + 1));
    if let Some(u) = max_user.filter(|&u| u >= num_users) {
        return Err(Error::Validation(format!(
            "user id {u} exceeds the user universe of {num_users}"
        )));
    }

    let into_rows = |map: BTreeMap<usize, Vec<usize>>| {
        let mut rows = vec![Vec::new(); num_users];
        for (u, items) in map {
            rows[u] = items;
        }
        rows
    };
    let ds = InteractionDataset::new(num_users, num_items, into_rows(train), into_rows(test))?;
    let flagged = ds.untrainable_users();
    if !flagged.is_empty() {
        log::warn!(
            "{} user(s) have no train positives and are excluded from sampling (first: {})",
            flagged.len(),
            flagged[0]
        );
    }
    Ok(ds)
}

fn render<'a>(ds: &'a InteractionDataset, items_of: impl Fn(usize) -> &'a [usize]) -> String {
    let mut out = String::new();
    for u in 0..ds.num_users() {
        let _ = write!(out, "{u}");
        for i in items_of(u) {
            let _ = write!(out, " {i}");
        }
        out.push('\n');
    }
    out
}

/// Writes both splits in the same format `load_interactions` reads. Every
/// user gets a line so the user universe survives a round trip.
pub fn write_interactions(ds: &InteractionDataset, train_path: &Path, test_path: &Path) -> Result<()> {
    fs::write(train_path, render(ds, |u| ds.train_positives(u)))?;
    fs::write(test_path, render(ds, |u| ds.test_positives(u)))?;
    Ok(())
}
