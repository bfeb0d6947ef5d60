//! pair.txt view graphs: total view count, then for each view its id on one
//! line and `num_sources (source_id score)*` on the next.

use super::SceneIoError;
use std::fs;
use std::path::Path;

/// Reference/source selection: for each view, its scored source list in
/// preference order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ViewGraph {
    pub entries: Vec<(usize, Vec<(usize, f64)>)>,
}

impl ViewGraph {
    /// Source ids for a view, best first.
    pub fn sources_of(&self, view: usize) -> Option<&[(usize, f64)]> {
        self.entries.iter().find(|(id, _)| *id == view).map(|(_, s)| s.as_slice())
    }

    /// Views with an empty source list (permitted but worth flagging).
    pub fn isolated_views(&self) -> Vec<usize> {
        self.entries.iter().filter(|(_, s)| s.is_empty()).map(|(id, _)| *id).collect()
    }
}

pub fn write_pair(path: &Path, graph: &ViewGraph) -> Result<(), SceneIoError> {
    let mut s = format!("{}\n", graph.entries.len());
    for (id, sources) in &graph.entries {
        s.push_str(&format!("{id}\n{}", sources.len()));
        for (src, score) in sources {
            s.push_str(&format!(" {src} {score}"));
        }
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

fn next_num<T: std::str::FromStr>(
    tokens: &mut std::str::SplitWhitespace<'_>,
    what: &str,
) -> Result<T, SceneIoError> {
    tokens
        .next()
        .ok_or_else(|| SceneIoError::malformed("pair.txt", format!("missing {what}")))?
        .parse()
        .map_err(|_| SceneIoError::malformed("pair.txt", format!("bad {what}")))
}

pub fn read_pair(path: &Path) -> Result<ViewGraph, SceneIoError> {
    let text = fs::read_to_string(path)?;
    let mut tokens = text.split_whitespace();
    let count: usize = next_num(&mut tokens, "view count")?;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let id = next_num(&mut tokens, "view id")?;
        let n_src: usize = next_num(&mut tokens, "source count")?;
        let mut sources = Vec::with_capacity(n_src);
        for _ in 0..n_src {
            let src = next_num(&mut tokens, "source id")?;
            let score = next_num(&mut tokens, "score")?;
            sources.push((src, score));
        }
        entries.push((id, sources));
    }
    Ok(ViewGraph { entries })
}
