//! Convex polygon clipping and areas.

use crate::lattice::{LatticeBasis, Vec2, NN};

/// Signed area, positive for counter-clockwise vertex order.
pub fn signed_area(poly: &[Vec2]) -> f64 {
    let n = poly.len();
    let mut s = 0.0;
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        s += p.x * q.y - p.y * q.x;
    }
    0.5 * s
}

pub fn area(poly: &[Vec2]) -> f64 {
    signed_area(poly).abs()
}

fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Sutherland–Hodgman clip of `subject` against the convex counter-clockwise
/// polygon `clip`. Returns an empty polygon when the intersection has no area.
pub fn clip_convex(subject: &[Vec2], clip: &[Vec2]) -> Vec<Vec2> {
    let mut out: Vec<Vec2> = subject.to_vec();
    let n = clip.len();
    for e in 0..n {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[e], clip[(e + 1) % n]);
        let edge = b - a;
        let scale = edge.norm();
        // Points within a relative 1e-12 of the edge line count as inside, so
        // shared edges neither split nor drop vertices.
        let side = |p: Vec2| cross(edge, p - a) / scale;
        let input = std::mem::take(&mut out);
        let m = input.len();
        for i in 0..m {
            let p = input[i];
            let q = input[(i + 1) % m];
            let (sp, sq) = (side(p), side(q));
            let p_in = sp >= -1e-12;
            let q_in = sq >= -1e-12;
            if p_in {
                out.push(p);
            }
            if p_in != q_in && (sp.abs() > 1e-12 || sq.abs() > 1e-12) {
                let t = sp / (sp - sq);
                if t > 0.0 && t < 1.0 {
                    out.push(p + (q - p) * t);
                }
            }
        }
    }
    if out.len() < 3 || area(&out) < 1e-14 {
        out.clear();
    }
    out
}

/// Voronoi hexagon of the site at `center`, counter-clockwise.
pub fn voronoi_cell(center: Vec2, basis: &LatticeBasis) -> [Vec2; 6] {
    let mut v = [Vec2::zeros(); 6];
    for (j, vj) in v.iter_mut().enumerate() {
        let a = basis.position(NN[j]);
        let b = basis.position(NN[(j + 1) % 6]);
        *vj = center + (a + b) / 3.0;
    }
    v
}
