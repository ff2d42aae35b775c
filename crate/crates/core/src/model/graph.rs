use crate::error::{check_dims, Error, Result};

/// Undirected adjacency lists.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Adjacency {
    neighbors: Vec<Vec<usize>>,
}

impl Adjacency {
    pub fn new(n_nodes: usize) -> Self {
        Self {
            neighbors: vec![Vec::new(); n_nodes],
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.neighbors.len()
    }

    pub fn add_node(&mut self) -> usize {
        self.neighbors.push(Vec::new());
        self.neighbors.len() - 1
    }

    /// Adds the undirected edge `a - b`. Duplicate edges are ignored.
    pub fn add_edge(&mut self, a: usize, b: usize) {
        assert!(a != b, "self-loops are not allowed");
        if self.neighbors[a].contains(&b) {
            return;
        }
        self.neighbors[a].push(b);
        self.neighbors[b].push(a);
    }

    /// Adds an edge the caller knows is new, skipping the duplicate scan.
    pub(crate) fn add_edge_unchecked(&mut self, a: usize, b: usize) {
        debug_assert!(!self.neighbors[a].contains(&b));
        self.neighbors[a].push(b);
        self.neighbors[b].push(a);
    }

    pub fn degree(&self, node: usize) -> usize {
        self.neighbors[node].len()
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }
}

/// A client's expanded bipartite graph.
///
/// Node 0 is the client itself, nodes `1..=items.len()` are its items, and the
/// remaining nodes are anonymous neighbor users with the raw embeddings they
/// published.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalGraph {
    adjacency: Adjacency,
    items: Vec<usize>,
    neighbor_embeddings: Vec<Vec<f64>>,
}

impl LocalGraph {
    pub const CENTER: usize = 0;

    /// Star graph: the center user linked to each distinct item.
    pub fn star(items: &[usize]) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::InvalidArgument("local graph needs at least one item".into()));
        }
        let mut distinct = Vec::with_capacity(items.len());
        for &i in items {
            if !distinct.contains(&i) {
                distinct.push(i);
            }
        }
        let mut adjacency = Adjacency::new(1 + distinct.len());
        for k in 0..distinct.len() {
            adjacency.add_edge_unchecked(Self::CENTER, 1 + k);
        }
        Ok(Self {
            adjacency,
            items: distinct,
            neighbor_embeddings: Vec::new(),
        })
    }

    /// Adds an anonymous neighbor linked to the given local item positions
    /// (indices into [`LocalGraph::items`]). Returns its node index.
    pub fn add_neighbor(&mut self, embedding: Vec<f64>, item_positions: &[usize]) -> Result<usize> {
        if let Some(first) = self.neighbor_embeddings.first() {
            check_dims("neighbor embedding", first.len(), embedding.len())?;
        }
        if item_positions.is_empty() {
            return Err(Error::InvalidArgument("neighbor must share at least one item".into()));
        }
        let node = self.adjacency.add_node();
        for &pos in item_positions {
            if pos >= self.items.len() {
                return Err(Error::InvalidArgument(format!("item position {pos} out of range")));
            }
            self.adjacency.add_edge(node, 1 + pos);
        }
        self.neighbor_embeddings.push(embedding);
        Ok(node)
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    pub fn items(&self) -> &[usize] {
        &self.items
    }

    pub fn item_node(&self, position: usize) -> usize {
        1 + position
    }

    pub fn neighbor_embeddings(&self) -> &[Vec<f64>] {
        &self.neighbor_embeddings
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.n_nodes()
    }

    /// True when `node` is a user (center or neighbor), false for items.
    pub fn is_user_node(&self, node: usize) -> bool {
        node == Self::CENTER || node > self.items.len()
    }
}

/// LightGCN propagation with symmetric normalisation and mean layer
/// combination.
///
/// `embeddings` holds one row of `width` values per node. Each layer computes
/// `e'_u = sum_{i in N(u)} e_i / sqrt(|N(u)| |N(i)|)`; the output is the mean
/// of layers `0..=n_layers`. Isolated nodes keep only their layer-0 term.
pub fn lightgcn_propagate(
    adjacency: &Adjacency,
    embeddings: &[f64],
    width: usize,
    n_layers: usize,
) -> Result<Vec<f64>> {
    check_dims("lightgcn_propagate rows", adjacency.n_nodes() * width, embeddings.len())?;
    Ok(propagate(adjacency, embeddings, width, n_layers))
}

/// Like [`lightgcn_propagate`] but rows past `adjacency.n_nodes()` are treated
/// as isolated nodes.
pub(crate) fn propagate(adjacency: &Adjacency, embeddings: &[f64], width: usize, n_layers: usize) -> Vec<f64> {
    let n_rows = embeddings.len() / width;
    debug_assert!(n_rows >= adjacency.n_nodes());
    let graph_nodes = adjacency.n_nodes();
    let inv_sqrt: Vec<f64> = (0..graph_nodes)
        .map(|n| match adjacency.degree(n) {
            0 => 0.0,
            deg => 1.0 / (deg as f64).sqrt(),
        })
        .collect();

    let mut total = embeddings.to_vec();
    let mut current = embeddings[..graph_nodes * width].to_vec();
    let mut next = vec![0.0; graph_nodes * width];
    for _ in 0..n_layers {
        next.iter_mut().for_each(|v| *v = 0.0);
        for u in 0..graph_nodes {
            let out = &mut next[u * width..(u + 1) * width];
            for &i in adjacency.neighbors(u) {
                let coef = inv_sqrt[u] * inv_sqrt[i];
                let src = &current[i * width..(i + 1) * width];
                for (o, s) in out.iter_mut().zip(src) {
                    *o += coef * s;
                }
            }
        }
        for (t, n) in total.iter_mut().zip(&next) {
            *t += n;
        }
        std::mem::swap(&mut current, &mut next);
    }
    let scale = 1.0 / (n_layers as f64 + 1.0);
    total.iter_mut().for_each(|v| *v *= scale);
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_layers_is_identity() {
        let g = LocalGraph::star(&[3, 4]).unwrap();
        let raw: Vec<f64> = (0..6).map(|i| i as f64 * 0.5).collect();
        assert_eq!(lightgcn_propagate(g.adjacency(), &raw, 2, 0).unwrap(), raw);
    }

    #[test]
    fn single_edge_one_layer() {
        let mut adj = Adjacency::new(2);
        adj.add_edge(0, 1);
        let raw = [1.0, 2.0, 5.0, -3.0];
        let out = lightgcn_propagate(&adj, &raw, 2, 1).unwrap();
        assert_eq!(out, vec![(1.0 + 5.0) / 2.0, (2.0 - 3.0) / 2.0, (5.0 + 1.0) / 2.0, (-3.0 + 2.0) / 2.0]);
    }

    #[test]
    fn isolated_node_keeps_layer_zero_only() {
        let mut adj = Adjacency::new(3);
        adj.add_edge(0, 1);
        let raw = [1.0, 1.0, 9.0];
        let out = lightgcn_propagate(&adj, &raw, 1, 2).unwrap();
        assert_eq!(out[2], 3.0);
        assert!(out.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn neighbor_nodes_attach_to_items() {
        let mut g = LocalGraph::star(&[7, 8, 7]).unwrap();
        assert_eq!(g.items(), &[7, 8]);
        let node = g.add_neighbor(vec![0.0; 4], &[0]).unwrap();
        assert_eq!(node, 3);
        assert_eq!(g.adjacency().degree(g.item_node(0)), 2);
        assert!(g.is_user_node(node) && !g.is_user_node(1));
        assert!(g.add_neighbor(vec![0.0; 3], &[1]).is_err());
        assert!(LocalGraph::star(&[]).is_err());
    }
}
