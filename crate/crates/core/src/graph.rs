//! Per-(user, item) heterogeneous graph.
//!
//! Node layout is fixed: the user node is 0, the item node is 1, attribute
//! nodes follow in ascending attribute id, then sentence nodes in ascending
//! sentence id. Edges are undirected and unweighted; they only ever join an
//! attribute node to a user, item or sentence node.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{AttributeId, Corpus, ItemId, SentenceId, UserId};
use crate::error::{Error, Result};

pub const USER_NODE: usize = 0;
pub const ITEM_NODE: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    User,
    Item,
    Attribute,
    Sentence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeKind {
    UserAttribute,
    ItemAttribute,
    AttributeSentence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphOptions {
    /// Every node also attends to itself.
    pub self_loops: bool,
    /// Keep only candidates mentioning an attribute of the target item.
    pub restrict_to_item_attributes: bool,
}

impl Default for GraphOptions {
    fn default() -> Self {
        GraphOptions {
            self_loops: true,
            restrict_to_item_attributes: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairGraph {
    pub user: UserId,
    pub item: ItemId,
    pub attributes: Vec<AttributeId>,
    pub sentences: Vec<SentenceId>,
    /// Sorted neighbor lists without self loops.
    adjacency: Vec<Vec<usize>>,
    self_loops: bool,
    /// Ground-truth sentences of the pair (train mode).
    pub positives: Vec<SentenceId>,
    /// `y_f` per attribute node (train mode).
    pub attribute_labels: Option<Vec<f64>>,
}

impl PairGraph {
    /// Assembles a graph from explicit edge lists.
    ///
    /// `user_attrs` / `item_attrs` index into `attributes`; `sentence_attrs[s]`
    /// lists the attribute positions linked to sentence `s`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        user: UserId,
        item: ItemId,
        attributes: Vec<AttributeId>,
        sentences: Vec<SentenceId>,
        user_attrs: &[usize],
        item_attrs: &[usize],
        sentence_attrs: &[Vec<usize>],
        self_loops: bool,
    ) -> Result<Self> {
        let m = attributes.len();
        if sentence_attrs.len() != sentences.len() {
            return Err(Error::Graph(format!(
                "{} sentence edge lists for {} sentences",
                sentence_attrs.len(),
                sentences.len()
            )));
        }
        let n = 2 + m + sentences.len();
        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        let mut link = |a: usize, b: usize| {
            adj[a].insert(b);
            adj[b].insert(a);
        };
        for &f in user_attrs.iter().chain(item_attrs) {
            if f >= m {
                return Err(Error::Graph(format!("attribute position {f} out of range")));
            }
        }
        for &f in user_attrs {
            link(USER_NODE, 2 + f);
        }
        for &f in item_attrs {
            link(ITEM_NODE, 2 + f);
        }
        for (s, attrs) in sentence_attrs.iter().enumerate() {
            if attrs.is_empty() {
                return Err(Error::Graph(format!("sentence {s} has no attribute edge")));
            }
            for &f in attrs {
                if f >= m {
                    return Err(Error::Graph(format!("attribute position {f} out of range")));
                }
                link(2 + f, 2 + m + s);
            }
        }
        for f in 0..m {
            if !adj[2 + f].iter().any(|&j| j >= 2 + m) {
                return Err(Error::Graph(format!("attribute {f} has no sentence edge")));
            }
        }
        Ok(PairGraph {
            user,
            item,
            attributes,
            sentences,
            adjacency: adj.into_iter().map(|s| s.into_iter().collect()).collect(),
            self_loops,
            positives: Vec::new(),
            attribute_labels: None,
        })
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn attribute_node(&self, pos: usize) -> usize {
        2 + pos
    }

    pub fn sentence_node(&self, pos: usize) -> usize {
        2 + self.attributes.len() + pos
    }

    pub fn self_loops(&self) -> bool {
        self.self_loops
    }

    pub fn kind(&self, node: usize) -> NodeKind {
        let m = self.attributes.len();
        match node {
            USER_NODE => NodeKind::User,
            ITEM_NODE => NodeKind::Item,
            n if n < 2 + m => NodeKind::Attribute,
            _ => NodeKind::Sentence,
        }
    }

    pub fn edge_kind(&self, a: usize, b: usize) -> Option<EdgeKind> {
        if !self.adjacency.get(a)?.contains(&b) {
            return None;
        }
        let kinds = (self.kind(a), self.kind(b));
        Some(match kinds {
            (NodeKind::User, _) | (_, NodeKind::User) => EdgeKind::UserAttribute,
            (NodeKind::Item, _) | (_, NodeKind::Item) => EdgeKind::ItemAttribute,
            _ => EdgeKind::AttributeSentence,
        })
    }

    /// Undirected neighbors of `node`, without the node itself.
    pub fn adjacent(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    /// Attention neighborhood of `node`: its neighbors plus itself when self
    /// loops are on, ascending.
    pub fn neighbor_view(&self, node: usize) -> Result<Vec<usize>> {
        let adj = self
            .adjacency
            .get(node)
            .ok_or_else(|| Error::Graph(format!("unknown node {node}")))?;
        let mut out = adj.clone();
        if self.self_loops {
            let at = out.partition_point(|&j| j < node);
            out.insert(at, node);
        }
        Ok(out)
    }

    /// Neighborhoods of every node; errors on an empty one.
    pub fn neighborhoods(&self) -> Result<Vec<Vec<usize>>> {
        (0..self.node_count())
            .map(|i| {
                let hood = self.neighbor_view(i)?;
                if hood.is_empty() {
                    return Err(Error::Graph(format!(
                        "node {i} ({:?}) is isolated and self loops are disabled",
                        self.kind(i)
                    )));
                }
                Ok(hood)
            })
            .collect()
    }

    /// Attribute positions linked to sentence position `s`.
    pub fn sentence_attributes(&self, s: usize) -> Vec<usize> {
        self.adjacency[self.sentence_node(s)]
            .iter()
            .map(|&f| f - 2)
            .collect()
    }

    /// Debug dump: one `kind id: neighbors` line per node.
    pub fn dump(&self, corpus: &Corpus) -> String {
        let mut out = String::new();
        for node in 0..self.node_count() {
            let label = |n: usize| match self.kind(n) {
                NodeKind::User => format!("user:{}", corpus.users[self.user.index()]),
                NodeKind::Item => format!("item:{}", corpus.items[self.item.index()]),
                NodeKind::Attribute => {
                    format!("attr:{}", corpus.lexicon.surface(self.attributes[n - 2]))
                }
                NodeKind::Sentence => format!(
                    "sent:{}",
                    corpus
                        .sentence(self.sentences[n - 2 - self.attributes.len()])
                        .key
                ),
            };
            let neighbors: Vec<String> = self.adjacency[node].iter().map(|&j| label(j)).collect();
            writeln!(out, "{}\t{}", label(node), neighbors.join(" ")).unwrap();
        }
        out
    }
}

/// Builds the graph for `(user, item)` from the training split.
pub fn build_pair_graph(
    user: UserId,
    item: ItemId,
    corpus: &Corpus,
    mode: Mode,
    options: GraphOptions,
) -> Result<PairGraph> {
    let mut pool = corpus.candidate_pool(user, item)?;
    if options.restrict_to_item_attributes {
        let item_attrs = corpus.item_attributes(item);
        pool.retain(|&s| {
            corpus
                .sentence(s)
                .attributes
                .iter()
                .any(|a| item_attrs.contains(a))
        });
        if pool.is_empty() {
            return Err(Error::EmptyPool {
                user: corpus.users[user.index()].clone(),
                item: corpus.items[item.index()].clone(),
            });
        }
    }

    let attributes: Vec<AttributeId> = pool
        .iter()
        .flat_map(|&s| corpus.sentence(s).attributes.iter().copied())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let position = |a: AttributeId| attributes.binary_search(&a).ok();

    let user_attrs: Vec<usize> = corpus
        .user_attributes(user)
        .into_iter()
        .filter_map(position)
        .collect();
    let item_attrs: Vec<usize> = corpus
        .item_attributes(item)
        .into_iter()
        .filter_map(position)
        .collect();
    let sentence_attrs: Vec<Vec<usize>> = pool
        .iter()
        .map(|&s| {
            corpus
                .sentence(s)
                .attributes
                .iter()
                .filter_map(|&a| position(a))
                .collect()
        })
        .collect();

    let mut graph = PairGraph::from_parts(
        user,
        item,
        attributes,
        pool,
        &user_attrs,
        &item_attrs,
        &sentence_attrs,
        options.self_loops,
    )?;

    if mode == Mode::Train {
        let positives = corpus.train_pair_sentences(user, item);
        if positives.is_empty() {
            return Err(Error::Graph(format!(
                "no training review by {} about {}",
                corpus.users[user.index()],
                corpus.items[item.index()]
            )));
        }
        let truth: BTreeSet<AttributeId> = positives
            .iter()
            .flat_map(|&s| corpus.sentence(s).attributes.iter().copied())
            .collect();
        graph.attribute_labels = Some(
            graph
                .attributes
                .iter()
                .map(|a| if truth.contains(a) { 1.0 } else { 0.0 })
                .collect(),
        );
        graph.positives = positives;
    }
    Ok(graph)
}
