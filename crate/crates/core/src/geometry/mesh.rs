use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use super::Decomposition;
use crate::error::{Error, Result};
use crate::lattice::{add, sub, Coord, Vec2, NN};

#[derive(Debug, Clone, PartialEq)]
pub struct MeshNode {
    pub coord: Coord,
    pub position: Vec2,
    /// Hop distance to the defect row.
    pub layer: u32,
    pub atom_coincident: bool,
    pub boundary: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Triangle {
    /// Counter-clockwise node indices.
    pub nodes: [usize; 3],
    pub area: f64,
    /// `∇φ_i` of the three hat functions.
    pub grads: [Vec2; 3],
    /// Longest edge.
    pub size: f64,
    /// Whether this is a cell of the canonical lattice triangulation.
    pub canonical: bool,
}

/// Triangulation of `Ω^c`: a canonically triangulated band of atom-coincident
/// nodes followed by graded hexagonal rings up to `∂Ω`.
#[derive(Debug, Clone)]
pub struct Mesh {
    nodes: Vec<MeshNode>,
    triangles: Vec<Triangle>,
    node_at: HashMap<Coord, usize>,
    rings: Vec<u32>,
}

impl Mesh {
    pub fn nodes(&self) -> &[MeshNode] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn node_at(&self, c: Coord) -> Option<usize> {
        self.node_at.get(&c).copied()
    }

    /// Layers carrying graded ring nodes, starting with the band's outer layer.
    pub fn ring_layers(&self) -> &[u32] {
        &self.rings
    }

    /// Node lines `id x y flags` (bit 0: atom-coincident, bit 1: boundary)
    /// followed by triangle lines `id n1 n2 n3`.
    pub fn write_dump(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(&format!("# nodes {}\n", self.nodes.len()));
        for (i, n) in self.nodes.iter().enumerate() {
            let flags = u8::from(n.atom_coincident) | (u8::from(n.boundary) << 1);
            out.push_str(&format!("{i} {:e} {:e} {flags}\n", n.position.x, n.position.y));
        }
        out.push_str(&format!("# triangles {}\n", self.triangles.len()));
        for (i, t) in self.triangles.iter().enumerate() {
            out.push_str(&format!("{i} {} {} {}\n", t.nodes[0], t.nodes[1], t.nodes[2]));
        }
        std::fs::File::create(path).and_then(|mut f| f.write_all(out.as_bytes())).map_err(|e| Error::io(path, e))
    }
}

/// Target mesh size `(m/K)^{3/2}` at hop distance `m`, at least one spacing.
fn target_size(m: u32, k: u32) -> f64 {
    (m as f64 / k as f64).powf(1.5).max(1.0)
}

/// Corners of the hexagonal layer at hop distance `m` from the row `lo..=hi`,
/// counter-clockwise starting on the positive `e₁` axis.
fn layer_corners(row: (i32, i32), m: i32) -> [Coord; 6] {
    let (lo, hi) = row;
    let scale = |c: Coord, base: i32| [base + m * c[0], m * c[1]];
    [scale(NN[0], hi), scale(NN[1], hi), scale(NN[2], lo), scale(NN[3], lo), scale(NN[4], lo), scale(NN[5], hi)]
}

/// For each of the six sides, lattice points from one corner to the next
/// (both included), split into `pieces(length)` nearly equal segments.
fn layer_sides(row: (i32, i32), m: i32, pieces: impl Fn(i32) -> i32) -> Vec<Vec<Coord>> {
    let corners = layer_corners(row, m);
    (0..6)
        .map(|s| {
            let (a, b) = (corners[s], corners[(s + 1) % 6]);
            let len = crate::lattice::hop_length(crate::lattice::sub(b, a)) as i32;
            let dir = NN[(s + 2) % 6];
            let n = pieces(len).clamp(1, len.max(1));
            let mut pts = Vec::with_capacity(n as usize + 1);
            for q in 0..=n {
                // Round half away from zero in integer arithmetic.
                let t = (2 * q * len + n) / (2 * n);
                pts.push([a[0] + t * dir[0], a[1] + t * dir[1]]);
            }
            pts
        })
        .collect()
}

struct Builder<'a> {
    decomp: &'a Decomposition,
    nodes: Vec<MeshNode>,
    node_at: HashMap<Coord, usize>,
    triangles: Vec<Triangle>,
}

impl Builder<'_> {
    fn node(&mut self, c: Coord) -> usize {
        if let Some(&i) = self.node_at.get(&c) {
            return i;
        }
        let config = self.decomp.config();
        let layer = config.row_distance(c);
        let i = self.nodes.len();
        self.nodes.push(MeshNode {
            coord: c,
            position: config.basis().position(c),
            layer,
            atom_coincident: layer <= self.decomp.band_outer(),
            boundary: layer == self.decomp.layers(),
        });
        self.node_at.insert(c, i);
        i
    }

    fn triangle(&mut self, mut ids: [usize; 3], canonical: bool) -> Result<()> {
        let p = |i: usize| self.nodes[ids[i]].position;
        let mut e1 = p(1) - p(0);
        let mut e2 = p(2) - p(0);
        let mut det = e1.x * e2.y - e1.y * e2.x;
        if det < 0.0 {
            ids.swap(1, 2);
            std::mem::swap(&mut e1, &mut e2);
            det = -det;
        }
        let size = e1.norm().max(e2.norm()).max((e2 - e1).norm());
        if !(det > 1e-10 * size * size) {
            return Err(Error::Mesh(format!(
                "degenerate triangle at {:?}",
                [self.nodes[ids[0]].coord, self.nodes[ids[1]].coord, self.nodes[ids[2]].coord]
            )));
        }
        // Rows of the inverse Jacobian are ∇φ₁ and ∇φ₂.
        let g1 = Vec2::new(e2.y, -e2.x) / det;
        let g2 = Vec2::new(-e1.y, e1.x) / det;
        self.triangles.push(Triangle { nodes: ids, area: 0.5 * det, grads: [-(g1 + g2), g1, g2], size, canonical });
        Ok(())
    }
}

pub fn build_mesh(decomp: &Decomposition) -> Result<Mesh> {
    let config = decomp.config();
    let inner = decomp.atomistic_layers() + decomp.interface_width();
    let outer = decomp.band_outer();
    let n = decomp.layers();
    let k = decomp.atomistic_layers();
    let mut b = Builder { decomp, nodes: Vec::new(), node_at: HashMap::new(), triangles: Vec::new() };

    // Band: lattice points between the outer interface layer and `outer`,
    // triangulated by the canonical up/down cells.
    let in_band = |c: Coord| {
        let d = config.row_distance(c);
        d >= inner && d <= outer
    };
    let band: Vec<Coord> = config.sites().iter().copied().filter(|&c| in_band(c)).collect();
    for &c in &band {
        b.node(c);
    }
    // A cell is anchored at its lower-left corner, which may lie outside the band.
    let mut anchors: Vec<Coord> =
        band.iter().flat_map(|&c| [c, sub(c, NN[0]), sub(c, NN[1]), sub(sub(c, NN[0]), NN[1])]).collect();
    anchors.sort_unstable();
    anchors.dedup();
    for &c in &anchors {
        let up = [c, add(c, NN[0]), add(c, NN[1])];
        let down = [add(c, NN[0]), add(add(c, NN[0]), NN[1]), add(c, NN[1])];
        for tri in [up, down] {
            if tri.iter().all(|&v| in_band(v)) {
                let ids = [b.node(tri[0]), b.node(tri[1]), b.node(tri[2])];
                b.triangle(ids, true)?;
            }
        }
    }

    // Graded rings from `outer` to `n`.
    let row = config.row();
    let mut rings = vec![outer];
    let mut m = outer;
    let mut inner_sides = layer_sides(row, m as i32, |len| len);
    while m < n {
        let step = |m: u32| target_size(m, k).round().max(1.0) as u32;
        let mut next = m + step(m);
        if next >= n || 2 * (n - next) < step(next) {
            next = n;
        }
        let h = target_size(next, k);
        let outer_sides = layer_sides(row, next as i32, |len| (len as f64 / h).round().max(1.0) as i32);
        for s in 0..6 {
            let inner_ids: Vec<usize> = inner_sides[s].iter().map(|&c| b.node(c)).collect();
            let outer_ids: Vec<usize> = outer_sides[s].iter().map(|&c| b.node(c)).collect();
            zipper(&mut b, &inner_ids, &outer_ids)?;
        }
        rings.push(next);
        inner_sides = outer_sides;
        m = next;
    }
    Ok(Mesh { nodes: b.nodes, triangles: b.triangles, node_at: b.node_at, rings })
}

/// Triangulates the strip between two polylines with matching end corners.
fn zipper(b: &mut Builder, inner: &[usize], outer: &[usize]) -> Result<()> {
    let (a, c) = (inner.len() - 1, outer.len() - 1);
    let (mut s, mut t) = (0, 0);
    while s < a || t < c {
        let advance_inner = if s == a {
            false
        } else if t == c {
            true
        } else {
            (2 * s + 1) * c < (2 * t + 1) * a
        };
        if advance_inner {
            b.triangle([inner[s], inner[s + 1], outer[t]], false)?;
            s += 1;
        } else {
            b.triangle([inner[s], outer[t + 1], outer[t]], false)?;
            t += 1;
        }
    }
    Ok(())
}
