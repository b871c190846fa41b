//! Generators for infinite decompositions and extraction of nested
//! combinatorial balls B(v0, n).
//!
//! A generator is an adjacency rule with a designated root; `extract_ball(n)`
//! returns the finite subcomplex induced on the vertices within graph
//! distance n of the root, with the distance-n ring marked as boundary.
//! Identifiers are stable across n, so extract_ball(n) is a subcomplex of
//! extract_ball(n+1).

use std::collections::HashMap;
use std::str::FromStr;

use crate::complex::{ComplexError, ComplexTopology, VertexId};

/// Built-in lattice families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatticeKind {
    /// Triangular lattice of the plane; interior vertices have degree 6.
    TriangularDisk,
    /// Square grid; interior vertices have degree 4.
    SquareGrid,
}

impl FromStr for LatticeKind {
    type Err = ComplexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "triangular-disk" | "triangular" => Ok(LatticeKind::TriangularDisk),
            "square-grid" | "square" => Ok(LatticeKind::SquareGrid),
            other => Err(ComplexError::UnsupportedKind(other.to_owned())),
        }
    }
}

impl LatticeKind {
    pub fn name(&self) -> &'static str {
        match self {
            LatticeKind::TriangularDisk => "triangular-disk",
            LatticeKind::SquareGrid => "square-grid",
        }
    }
}

/// Neighbor rule: for a vertex, the incident edges as (other endpoint,
/// theta) pairs. Must be symmetric; extraction verifies this for every edge
/// it touches.
pub type AdjacencyRule = Box<dyn Fn(&VertexId) -> Vec<(VertexId, f64)> + Send + Sync>;

/// A procedurally defined, locally finite infinite complex.
pub struct InfiniteComplexGenerator {
    kind: String,
    root: VertexId,
    rule: AdjacencyRule,
}

impl std::fmt::Debug for InfiniteComplexGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("InfiniteComplexGenerator")
            .field("kind", &self.kind)
            .field("root", &self.root)
            .finish_non_exhaustive()
    }
}

fn coord_id(q: i64, r: i64) -> VertexId {
    VertexId::Name(format!("{q},{r}"))
}

fn parse_coord(id: &VertexId) -> Option<(i64, i64)> {
    match id {
        VertexId::Name(s) => {
            let (q, r) = s.split_once(',')?;
            Some((q.parse().ok()?, r.parse().ok()?))
        }
        VertexId::Int(_) => None,
    }
}

// Axial-coordinate neighbor offsets of the triangular lattice.
const TRIANGULAR_OFFSETS: [(i64, i64); 6] = [(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)];
const SQUARE_OFFSETS: [(i64, i64); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];

fn offset_rule(offsets: &'static [(i64, i64)], theta: f64) -> AdjacencyRule {
    Box::new(move |id| {
        let Some((q, r)) = parse_coord(id) else {
            return Vec::new();
        };
        offsets
            .iter()
            .map(|&(dq, dr)| (coord_id(q + dq, r + dr), theta))
            .collect()
    })
}

impl InfiniteComplexGenerator {
    /// A standard lattice with constant intersection angle.
    pub fn lattice(kind: LatticeKind, theta: f64) -> Result<Self, ComplexError> {
        if !(theta > 0.0 && theta <= std::f64::consts::FRAC_PI_2) {
            return Err(ComplexError::LatticeThetaOutOfRange(theta));
        }
        let rule = match kind {
            LatticeKind::TriangularDisk => offset_rule(&TRIANGULAR_OFFSETS, theta),
            LatticeKind::SquareGrid => offset_rule(&SQUARE_OFFSETS, theta),
        };
        Ok(Self {
            kind: kind.name().to_owned(),
            root: coord_id(0, 0),
            rule,
        })
    }

    /// A user-supplied adjacency rule rooted at `root`. The rule is trusted
    /// to be locally finite; symmetry and theta ranges are validated lazily
    /// at the first extraction that touches an offending edge.
    pub fn custom(root: VertexId, rule: AdjacencyRule) -> Self {
        Self {
            kind: "custom".to_owned(),
            root,
            rule,
        }
    }

    pub fn kind(&self) -> &str {
        &self.kind
    }

    pub fn root(&self) -> &VertexId {
        &self.root
    }

    /// The combinatorial ball B(root, n): all vertices within graph distance
    /// n, every edge between them, and the distance-n ring marked boundary.
    pub fn extract_ball(&self, n: usize) -> Result<ComplexTopology, ComplexError> {
        let mut order: Vec<VertexId> = vec![self.root.clone()];
        let mut dist: HashMap<VertexId, usize> = HashMap::new();
        dist.insert(self.root.clone(), 0);

        // Breadth-first discovery in rule order keeps vertex order stable
        // across nesting levels.
        let mut head = 0;
        while head < order.len() {
            let v = order[head].clone();
            let d = dist[&v];
            head += 1;
            if d == n {
                continue;
            }
            for (w, _) in (self.rule)(&v) {
                if w != v && !dist.contains_key(&w) {
                    dist.insert(w.clone(), d + 1);
                    order.push(w);
                }
            }
        }

        // Collect edges with both endpoints inside the ball, checking the
        // rule is symmetric where we can see both sides.
        let mut directed: HashMap<(VertexId, VertexId), f64> = HashMap::new();
        for v in &order {
            let mut local = Vec::new();
            for (w, theta) in (self.rule)(v) {
                if w == *v {
                    return Err(ComplexError::SelfLoop(v.clone()));
                }
                if local.contains(&w) {
                    return Err(ComplexError::DuplicateEdge(v.clone(), w));
                }
                local.push(w.clone());
                if dist.contains_key(&w) {
                    directed.insert((v.clone(), w), theta);
                }
            }
        }
        let mut edges = Vec::new();
        for ((a, b), theta) in &directed {
            if a >= b {
                continue;
            }
            match directed.get(&(b.clone(), a.clone())) {
                Some(back) if back == theta => edges.push((a.clone(), b.clone(), *theta)),
                _ => {
                    return Err(ComplexError::InconsistentRule {
                        from: a.clone(),
                        to: b.clone(),
                    })
                }
            }
        }
        // One-sided listings: a lists b but b never lists a.
        for (a, b) in directed.keys() {
            if !directed.contains_key(&(b.clone(), a.clone())) {
                return Err(ComplexError::InconsistentRule {
                    from: a.clone(),
                    to: b.clone(),
                });
            }
        }
        // Deterministic edge order regardless of hash iteration.
        edges.sort_by(|x, y| (&x.0, &x.1).cmp(&(&y.0, &y.1)));

        let boundary: Vec<VertexId> = order.iter().filter(|id| dist[*id] == n).cloned().collect();
        let mut ball = ComplexTopology::build(order, edges, None)?;
        ball.mark_boundary(&boundary)?;
        Ok(ball)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn triangular() -> InfiniteComplexGenerator {
        InfiniteComplexGenerator::lattice(LatticeKind::TriangularDisk, FRAC_PI_2).unwrap()
    }

    #[test]
    fn ball_sizes_match_centered_hexagonal_numbers() {
        let gen = triangular();
        for n in 0..5usize {
            let ball = gen.extract_ball(n).unwrap();
            // 1 + 3n(n+1): closed-form count of the hex ball, independent of
            // the BFS implementation.
            assert_eq!(ball.vertex_count(), 1 + 3 * n * (n + 1), "n = {n}");
        }
        assert_eq!(gen.extract_ball(1).unwrap().vertex_count(), 7);
        assert_eq!(gen.extract_ball(2).unwrap().vertex_count(), 19);
    }

    #[test]
    fn degenerate_ball_is_single_marked_vertex() {
        let ball = triangular().extract_ball(0).unwrap();
        assert_eq!(ball.vertex_count(), 1);
        assert_eq!(ball.edge_count(), 0);
        assert!(ball.is_boundary(0));
    }

    #[test]
    fn interior_degrees() {
        let ball = triangular().extract_ball(3).unwrap();
        for v in 0..ball.vertex_count() {
            if !ball.is_boundary(v) {
                assert_eq!(ball.degree(v), 6);
            }
        }
        let grid = InfiniteComplexGenerator::lattice(LatticeKind::SquareGrid, 1.0).unwrap();
        let ball = grid.extract_ball(3).unwrap();
        for v in 0..ball.vertex_count() {
            if !ball.is_boundary(v) {
                assert_eq!(ball.degree(v), 4);
            }
        }
    }

    #[test]
    fn balls_are_nested_with_matching_thetas() {
        let gen = triangular();
        for n in 0..4usize {
            let small = gen.extract_ball(n).unwrap();
            let big = gen.extract_ball(n + 1).unwrap();
            for id in small.ids() {
                assert!(big.index_of(id).is_some(), "vertex {id} lost at n+1");
            }
            for e in small.edges() {
                let a = big.index_of(small.id(e.i)).unwrap();
                let b = big.index_of(small.id(e.j)).unwrap();
                let found = big
                    .edges()
                    .iter()
                    .find(|f| (f.i, f.j) == (a.min(b), a.max(b)))
                    .expect("edge lost at n+1");
                assert_eq!(found.theta, e.theta);
            }
            // Degrees only grow with the ball.
            for (v, id) in small.ids().iter().enumerate() {
                let w = big.index_of(id).unwrap();
                assert!(small.degree(v) <= big.degree(w));
            }
        }
    }

    #[test]
    fn boundary_ring_is_exactly_distance_n() {
        let ball = triangular().extract_ball(2).unwrap();
        let marked = ball.boundary_mask().iter().filter(|&&b| b).count();
        assert_eq!(marked, 12); // ring of radius 2 in the hex lattice
    }

    #[test]
    fn unsupported_kind_is_rejected() {
        assert!(matches!(
            "hexagonal-nope".parse::<LatticeKind>(),
            Err(ComplexError::UnsupportedKind(_))
        ));
    }

    #[test]
    fn inconsistent_custom_rule_fails_at_extract() {
        // 0 lists 1, but 1 does not list 0 back.
        let rule: AdjacencyRule = Box::new(|id| match id {
            VertexId::Int(0) => vec![(VertexId::Int(1), 1.0)],
            _ => Vec::new(),
        });
        let gen = InfiniteComplexGenerator::custom(VertexId::Int(0), rule);
        assert!(matches!(
            gen.extract_ball(1).unwrap_err(),
            ComplexError::InconsistentRule { .. }
        ));
    }

    #[test]
    fn mismatched_theta_between_directions_fails() {
        let rule: AdjacencyRule = Box::new(|id| match id {
            VertexId::Int(0) => vec![(VertexId::Int(1), 1.0)],
            VertexId::Int(1) => vec![(VertexId::Int(0), 0.5)],
            _ => Vec::new(),
        });
        let gen = InfiniteComplexGenerator::custom(VertexId::Int(0), rule);
        assert!(matches!(
            gen.extract_ball(1).unwrap_err(),
            ComplexError::InconsistentRule { .. }
        ));
    }

    #[test]
    fn lattice_theta_validated() {
        assert!(matches!(
            InfiniteComplexGenerator::lattice(LatticeKind::SquareGrid, 0.0).unwrap_err(),
            ComplexError::LatticeThetaOutOfRange(_)
        ));
    }
}
