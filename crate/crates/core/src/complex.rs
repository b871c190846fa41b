//! Finite weighted cellular decompositions.
//!
//! Only the 1-skeleton (vertices, edges, intersection angles) drives the
//! solvers; faces are stored for validation and documentation. All types are
//! immutable after construction and safe to share across threads.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::f64::consts::FRAC_PI_2;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Vertex identifier. Integers and names both round-trip through JSON
/// unchanged, so generated lattices can use coordinate names while small
/// fixtures use plain integers.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VertexId {
    Int(i64),
    Name(String),
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VertexId::Int(n) => write!(f, "{n}"),
            VertexId::Name(s) => write!(f, "{s}"),
        }
    }
}

impl From<i64> for VertexId {
    fn from(n: i64) -> Self {
        VertexId::Int(n)
    }
}

impl From<&str> for VertexId {
    fn from(s: &str) -> Self {
        VertexId::Name(s.to_owned())
    }
}

impl From<String> for VertexId {
    fn from(s: String) -> Self {
        VertexId::Name(s)
    }
}

#[derive(Debug, Error)]
pub enum ComplexError {
    #[error("duplicate vertex id {0}")]
    DuplicateVertex(VertexId),
    #[error("unknown vertex id {0}")]
    UnknownVertex(VertexId),
    #[error("edge {i}-{j}: theta {theta} out of range (0, pi/2]")]
    ThetaOutOfRange {
        i: VertexId,
        j: VertexId,
        theta: f64,
    },
    #[error("lattice theta {0} out of range (0, pi/2]")]
    LatticeThetaOutOfRange(f64),
    #[error("self-loop at vertex {0}")]
    SelfLoop(VertexId),
    #[error("duplicate edge {0}-{1}")]
    DuplicateEdge(VertexId, VertexId),
    #[error("face {face} has fewer than three vertices")]
    FaceTooShort { face: usize },
    #[error("face {face}: consecutive vertices {a}-{b} are not an edge")]
    FaceEdgeMissing {
        face: usize,
        a: VertexId,
        b: VertexId,
    },
    #[error("unsupported lattice kind `{0}`")]
    UnsupportedKind(String),
    #[error("adjacency rule is inconsistent between {from} and {to}")]
    InconsistentRule { from: VertexId, to: VertexId },
    #[error("target for vertex {0} is not finite")]
    NonFiniteTarget(VertexId),
    #[error("no target value for vertex {0}")]
    MissingTarget(VertexId),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// An undirected edge between vertex indices `i < j` with intersection
/// angle `theta` in (0, pi/2].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub theta: f64,
}

impl Edge {
    /// The index of the endpoint opposite to `v`.
    pub fn other(&self, v: usize) -> usize {
        if v == self.i {
            self.j
        } else {
            self.i
        }
    }
}

/// A validated finite weighted complex: ordered vertices, simple edges with
/// intersection angles, optional faces, and a per-vertex adjacency index.
/// Extracted lattice balls additionally carry boundary marks.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTopology {
    ids: Vec<VertexId>,
    index: HashMap<VertexId, usize>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<usize>>,
    faces: Option<Vec<Vec<usize>>>,
    boundary: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct ComplexJson {
    vertices: Vec<VertexId>,
    edges: Vec<(VertexId, VertexId, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    faces: Option<Vec<Vec<VertexId>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    boundary: Option<Vec<VertexId>>,
}

fn theta_valid(theta: f64) -> bool {
    theta > 0.0 && theta <= FRAC_PI_2
}

impl ComplexTopology {
    /// Validating constructor. Rejects bad thetas, self-loops, duplicate
    /// edges, and faces whose boundary is not a closed walk in the edge set.
    pub fn build(
        vertices: Vec<VertexId>,
        edges: Vec<(VertexId, VertexId, f64)>,
        faces: Option<Vec<Vec<VertexId>>>,
    ) -> Result<Self, ComplexError> {
        let mut index = HashMap::with_capacity(vertices.len());
        for (k, id) in vertices.iter().enumerate() {
            if index.insert(id.clone(), k).is_some() {
                return Err(ComplexError::DuplicateVertex(id.clone()));
            }
        }

        let lookup = |id: &VertexId| -> Result<usize, ComplexError> {
            index
                .get(id)
                .copied()
                .ok_or_else(|| ComplexError::UnknownVertex(id.clone()))
        };

        let mut edge_list = Vec::with_capacity(edges.len());
        let mut seen = HashSet::with_capacity(edges.len());
        let mut adjacency = vec![Vec::new(); vertices.len()];
        for (a, b, theta) in &edges {
            let i = lookup(a)?;
            let j = lookup(b)?;
            if i == j {
                return Err(ComplexError::SelfLoop(a.clone()));
            }
            if !theta_valid(*theta) {
                return Err(ComplexError::ThetaOutOfRange {
                    i: a.clone(),
                    j: b.clone(),
                    theta: *theta,
                });
            }
            let key = (i.min(j), i.max(j));
            if !seen.insert(key) {
                return Err(ComplexError::DuplicateEdge(a.clone(), b.clone()));
            }
            let e = edge_list.len();
            edge_list.push(Edge {
                i: key.0,
                j: key.1,
                theta: *theta,
            });
            adjacency[key.0].push(e);
            adjacency[key.1].push(e);
        }

        let faces = match faces {
            None => None,
            Some(fs) => {
                let mut out = Vec::with_capacity(fs.len());
                for (fi, face) in fs.iter().enumerate() {
                    if face.len() < 3 {
                        return Err(ComplexError::FaceTooShort { face: fi });
                    }
                    let mut walk = Vec::with_capacity(face.len());
                    for id in face {
                        walk.push(lookup(id)?);
                    }
                    for k in 0..walk.len() {
                        let a = walk[k];
                        let b = walk[(k + 1) % walk.len()];
                        if !seen.contains(&(a.min(b), a.max(b))) {
                            return Err(ComplexError::FaceEdgeMissing {
                                face: fi,
                                a: face[k].clone(),
                                b: face[(k + 1) % face.len()].clone(),
                            });
                        }
                    }
                    out.push(walk);
                }
                Some(out)
            }
        };

        let boundary = vec![false; vertices.len()];
        Ok(Self {
            ids: vertices,
            index,
            edges: edge_list,
            adjacency,
            faces,
            boundary,
        })
    }

    /// Mark the given vertices as boundary (used by ball extraction; the
    /// truncated flow freezes exactly these).
    pub fn mark_boundary(&mut self, ids: &[VertexId]) -> Result<(), ComplexError> {
        let mut mask = vec![false; self.ids.len()];
        for id in ids {
            let k = self
                .index_of(id)
                .ok_or_else(|| ComplexError::UnknownVertex(id.clone()))?;
            mask[k] = true;
        }
        self.boundary = mask;
        Ok(())
    }

    pub fn vertex_count(&self) -> usize {
        self.ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn ids(&self) -> &[VertexId] {
        &self.ids
    }

    pub fn id(&self, v: usize) -> &VertexId {
        &self.ids[v]
    }

    pub fn index_of(&self, id: &VertexId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Indices into `edges()` of the edges incident to vertex `v`.
    pub fn incident_edges(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[v]
            .iter()
            .map(move |&e| self.edges[e].other(v))
    }

    pub fn faces(&self) -> Option<&[Vec<usize>]> {
        self.faces.as_deref()
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary[v]
    }

    /// Per-vertex boundary marks; `true` entries are frozen by the
    /// truncated flow.
    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn boundary_ids(&self) -> Vec<VertexId> {
        self.ids
            .iter()
            .zip(&self.boundary)
            .filter(|(_, b)| **b)
            .map(|(id, _)| id.clone())
            .collect()
    }

    /// 2 sum of Theta(e) over edges incident to `v`: the strict upper bound
    /// for the total geodesic curvature T_v of any pattern on this complex.
    pub fn curvature_bound(&self, v: usize) -> f64 {
        2.0 * self.adjacency[v]
            .iter()
            .map(|&e| self.edges[e].theta)
            .sum::<f64>()
    }

    pub fn curvature_bounds(&self) -> Vec<f64> {
        (0..self.vertex_count())
            .map(|v| self.curvature_bound(v))
            .collect()
    }

    pub fn to_json(&self) -> String {
        let wire = ComplexJson {
            vertices: self.ids.clone(),
            edges: self
                .edges
                .iter()
                .map(|e| (self.ids[e.i].clone(), self.ids[e.j].clone(), e.theta))
                .collect(),
            faces: self.faces.as_ref().map(|fs| {
                fs.iter()
                    .map(|f| f.iter().map(|&v| self.ids[v].clone()).collect())
                    .collect()
            }),
            boundary: if self.boundary.iter().any(|&b| b) {
                Some(self.boundary_ids())
            } else {
                None
            },
        };
        serde_json::to_string_pretty(&wire).expect("complex serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, ComplexError> {
        let wire: ComplexJson = serde_json::from_str(text)?;
        let mut complex = Self::build(wire.vertices, wire.edges, wire.faces)?;
        if let Some(boundary) = wire.boundary {
            complex.mark_boundary(&boundary)?;
        }
        Ok(complex)
    }
}

/// Prescribed total geodesic curvatures, aligned with the vertex order of
/// the complex they were built against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetCurvature {
    values: Vec<f64>,
}

impl TargetCurvature {
    pub fn constant(complex: &ComplexTopology, value: f64) -> Result<Self, ComplexError> {
        Self::from_values(complex, vec![value; complex.vertex_count()])
    }

    pub fn from_values(complex: &ComplexTopology, values: Vec<f64>) -> Result<Self, ComplexError> {
        if values.len() != complex.vertex_count() {
            // Surface the first missing slot as the offending vertex.
            let v = values.len().min(complex.vertex_count().saturating_sub(1));
            return Err(ComplexError::MissingTarget(complex.id(v).clone()));
        }
        for (v, value) in values.iter().enumerate() {
            if !value.is_finite() {
                return Err(ComplexError::NonFiniteTarget(complex.id(v).clone()));
            }
        }
        Ok(Self { values })
    }

    /// Build from a map keyed by the display form of each vertex id; every
    /// vertex of the complex must be present.
    pub fn from_map(
        complex: &ComplexTopology,
        map: &BTreeMap<String, f64>,
    ) -> Result<Self, ComplexError> {
        let mut values = Vec::with_capacity(complex.vertex_count());
        for id in complex.ids() {
            let value = map
                .get(&id.to_string())
                .ok_or_else(|| ComplexError::MissingTarget(id.clone()))?;
            values.push(*value);
        }
        Self::from_values(complex, values)
    }

    pub fn get(&self, v: usize) -> f64 {
        self.values[v]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// The octahedron graph: 6 vertices, 12 edges with constant theta, and the
/// 8 triangular faces. The standard small fixture with every degree 4.
pub fn octahedron(theta: f64) -> Result<ComplexTopology, ComplexError> {
    // Antipodal pairs (0,1), (2,3), (4,5); edges join non-antipodal vertices.
    let vertices: Vec<VertexId> = (0..6).map(VertexId::Int).collect();
    let mut edges = Vec::new();
    for a in 0..6u8 {
        for b in (a + 1)..6 {
            if b != a + 1 || a % 2 != 0 {
                edges.push((VertexId::Int(a as i64), VertexId::Int(b as i64), theta));
            }
        }
    }
    let mut faces = Vec::new();
    for &x in &[0i64, 1] {
        for &y in &[2i64, 3] {
            for &z in &[4i64, 5] {
                faces.push(vec![VertexId::Int(x), VertexId::Int(y), VertexId::Int(z)]);
            }
        }
    }
    ComplexTopology::build(vertices, edges, Some(faces))
}
