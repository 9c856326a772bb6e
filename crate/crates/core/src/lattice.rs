//! Triangular reference lattice with a row of vacancies, interaction stencils,
//! finite differences and discrete norms.
//!
//! Points are addressed by integer lattice coordinates `[i, j]`; the physical
//! position is `A·(i, j)`.

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;
pub type Mat2 = Matrix2<f64>;
/// Integer lattice coordinates.
pub type Coord = [i32; 2];

/// The six nearest-neighbour directions in counter-clockwise order.
pub const NN: [Coord; 6] = [[1, 0], [0, 1], [-1, 1], [-1, 0], [0, -1], [1, -1]];

pub fn add(a: Coord, b: Coord) -> Coord {
    [a[0] + b[0], a[1] + b[1]]
}

pub fn sub(a: Coord, b: Coord) -> Coord {
    [a[0] - b[0], a[1] - b[1]]
}

pub fn neg(a: Coord) -> Coord {
    [-a[0], -a[1]]
}

/// Graph distance on the nearest-neighbour triangular lattice.
pub fn hop_length(c: Coord) -> u32 {
    ((c[0].abs() + c[1].abs() + (c[0] + c[1]).abs()) / 2) as u32
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeBasis {
    a: Mat2,
}

impl LatticeBasis {
    pub fn new(a: Mat2) -> Result<Self> {
        if !(a.determinant() > 0.0) {
            return Err(Error::Config(format!(
                "lattice basis must have positive determinant, got {}",
                a.determinant()
            )));
        }
        Ok(Self { a })
    }

    /// `A = [[1, cos(π/3)], [0, sin(π/3)]]`.
    pub fn triangular() -> Self {
        let t = std::f64::consts::FRAC_PI_3;
        Self { a: Mat2::new(1.0, t.cos(), 0.0, t.sin()) }
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.a
    }

    pub fn position(&self, c: Coord) -> Vec2 {
        self.a * Vec2::new(c[0] as f64, c[1] as f64)
    }

    /// Volume of a Voronoi cell, `det A`.
    pub fn voronoi_volume(&self) -> f64 {
        self.a.determinant()
    }
}

/// Ordered interaction directions.
///
/// For hop radius 1 the directions are `a_1..a_6`; for hop radius 2 they are
/// followed by `2a_j` and `a_j + a_{j+1}` interleaved, so that `a_7 = 2a_1`,
/// `a_8 = a_1 + a_2`, and so on.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    directions: Vec<Coord>,
    half: Vec<usize>,
    opposite: Vec<usize>,
    hop_radius: u32,
}

impl Stencil {
    pub fn new(hop_radius: u32) -> Result<Self> {
        let mut directions: Vec<Coord> = NN.to_vec();
        match hop_radius {
            1 => {}
            2 => {
                for j in 0..6 {
                    directions.push(add(NN[j], NN[j]));
                    directions.push(add(NN[j], NN[(j + 1) % 6]));
                }
            }
            r => return Err(Error::Config(format!("unsupported hop radius {r}"))),
        }
        let opposite: Vec<usize> = directions
            .iter()
            .map(|&d| directions.iter().position(|&e| e == neg(d)).expect("stencil is point symmetric"))
            .collect();
        let mut half = Vec::new();
        for (j, &o) in opposite.iter().enumerate() {
            if o > j {
                half.push(j);
            }
        }
        Ok(Self { directions, half, opposite, hop_radius })
    }

    pub fn directions(&self) -> &[Coord] {
        &self.directions
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    /// Indices of `R⁺`.
    pub fn half(&self) -> &[usize] {
        &self.half
    }

    /// Index of `-ρ` for the direction with index `j`.
    pub fn opposite(&self, j: usize) -> usize {
        self.opposite[j]
    }

    pub fn hop_radius(&self) -> u32 {
        self.hop_radius
    }

    pub fn index_of(&self, d: Coord) -> Option<usize> {
        self.directions.iter().position(|&e| e == d)
    }

    pub fn physical(&self, basis: &LatticeBasis) -> Vec<Vec2> {
        self.directions.iter().map(|&d| basis.position(d)).collect()
    }
}

/// End points of the vacancy row `{lo..=hi}·e₁`, or `None` for `k = 0`.
///
/// Odd `k` removes a centred row; even `k` removes `-(k/2 - 1)..=k/2`, so
/// `k = 2` removes the neighbouring pair `{0, e₁}`.
pub fn defect_row(k: usize) -> Option<(i32, i32)> {
    if k == 0 {
        return None;
    }
    let k = k as i32;
    if k % 2 == 1 {
        Some((-(k - 1) / 2, (k - 1) / 2))
    } else {
        Some((-(k / 2 - 1), k / 2))
    }
}

/// A finite patch of the lattice with a row of vacancies.
///
/// The domain consists of every lattice point within `layers` hops of the
/// defect row (for `k = 0` the row is the origin), i.e. a hexagon elongated
/// along `e₁`. Sites are ordered lexicographically in `(i, j)`.
#[derive(Debug, Clone)]
pub struct ReferenceConfig {
    basis: LatticeBasis,
    k: usize,
    layers: u32,
    row: (i32, i32),
    vacant: bool,
    sites: Vec<Coord>,
    defects: Vec<Coord>,
    grid: Vec<u32>,
    origin: Coord,
    width: usize,
}

const NO_SITE: u32 = u32::MAX;

impl ReferenceConfig {
    pub fn build(k: usize, layers: u32) -> Result<Self> {
        Self::with_basis(LatticeBasis::triangular(), k, layers)
    }

    pub fn with_basis(basis: LatticeBasis, k: usize, layers: u32) -> Result<Self> {
        if layers < 1 {
            return Err(Error::Config("domain needs at least one layer around the defect".into()));
        }
        if k > 1000 {
            return Err(Error::Config(format!("defect of {k} sites is larger than supported")));
        }
        Ok(Self::assemble(basis, k, layers, true))
    }

    fn assemble(basis: LatticeBasis, k: usize, layers: u32, vacant: bool) -> Self {
        let row = defect_row(k).unwrap_or((0, 0));
        let n = layers as i32;
        let origin = [row.0 - n, -n];
        let width = (row.1 - row.0 + 2 * n + 1) as usize;
        let height = (2 * n + 1) as usize;
        let mut grid = vec![NO_SITE; width * height];
        let mut sites = Vec::new();
        let mut defects = Vec::new();
        for i in origin[0]..origin[0] + width as i32 {
            for j in -n..=n {
                let c = [i, j];
                if row_distance_to(row, c) > layers {
                    continue;
                }
                if vacant && k > 0 && j == 0 && (row.0..=row.1).contains(&i) {
                    defects.push(c);
                    continue;
                }
                let slot = (i - origin[0]) as usize * height + (j - origin[1]) as usize;
                grid[slot] = sites.len() as u32;
                sites.push(c);
            }
        }
        Self { basis, k, layers, row, vacant, sites, defects, grid, origin, width }
    }

    /// The same domain with every vacancy filled; region boundaries, which are
    /// measured from the defect row, are unchanged.
    pub fn defect_free_twin(&self) -> Self {
        Self::assemble(self.basis.clone(), self.k, self.layers, false)
    }

    /// The same defect in a larger domain.
    pub fn resized(&self, layers: u32) -> Self {
        Self::assemble(self.basis.clone(), self.k, layers, self.vacant)
    }

    pub fn basis(&self) -> &LatticeBasis {
        &self.basis
    }

    pub fn sites(&self) -> &[Coord] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn defect_sites(&self) -> &[Coord] {
        &self.defects
    }

    pub fn defect_size(&self) -> usize {
        self.k
    }

    pub fn layers(&self) -> u32 {
        self.layers
    }

    /// End points of the row the domain is built around.
    pub fn row(&self) -> (i32, i32) {
        self.row
    }

    pub fn index_of(&self, c: Coord) -> Option<usize> {
        let height = 2 * self.layers as usize + 1;
        let di = c[0] - self.origin[0];
        let dj = c[1] - self.origin[1];
        if di < 0 || dj < 0 || di as usize >= self.width || dj as usize >= height {
            return None;
        }
        match self.grid[di as usize * height + dj as usize] {
            NO_SITE => None,
            s => Some(s as usize),
        }
    }

    pub fn coord(&self, site: usize) -> Coord {
        self.sites[site]
    }

    pub fn position(&self, site: usize) -> Vec2 {
        self.basis.position(self.sites[site])
    }

    pub fn is_defect(&self, c: Coord) -> bool {
        self.vacant && self.k > 0 && c[1] == 0 && (self.row.0..=self.row.1).contains(&c[0])
    }

    /// Hop distance from `c` to the defect row.
    pub fn row_distance(&self, c: Coord) -> u32 {
        row_distance_to(self.row, c)
    }

    /// Neighbours of `site` as `(direction index, site index)` pairs.
    /// Directions pointing at a vacancy are dropped.
    pub fn neighbours(&self, site: usize, stencil: &Stencil) -> Result<Vec<(usize, usize)>> {
        let c = self.sites[site];
        let mut out = Vec::with_capacity(stencil.len());
        for (j, &d) in stencil.directions().iter().enumerate() {
            let t = add(c, d);
            match self.index_of(t) {
                Some(s) => out.push((j, s)),
                None if self.is_defect(t) => {}
                None => return Err(Error::MissingNeighbor { site: c, dir: d }),
            }
        }
        Ok(out)
    }
}

fn row_distance_to(row: (i32, i32), c: Coord) -> u32 {
    // For fixed j, m ↦ hop(c - m e₁) is convex and minimal on [min(i, i+j), max(i, i+j)].
    let (i, j) = (c[0], c[1]);
    let a = i.min(i + j).clamp(row.0, row.1);
    let b = i.max(i + j).clamp(row.0, row.1);
    hop_length([i - a, j]).min(hop_length([i - b, j]))
}

/// `D_ρ v(ℓ)` for every resolvable direction, as `(direction index, difference)`.
pub fn finite_difference_stencil(
    config: &ReferenceConfig,
    stencil: &Stencil,
    v: &[Vec2],
    site: usize,
) -> Result<Vec<(usize, Vec2)>> {
    Ok(config.neighbours(site, stencil)?.into_iter().map(|(j, s)| (j, v[s] - v[site])).collect())
}

/// `Σ_j |v(ℓ+b_j) - 2v(ℓ) + v(ℓ-b_j)|²` over `b_j = a₁, a₂, a₃`.
pub fn d2nn_sq(config: &ReferenceConfig, v: &[Vec2], site: usize) -> Result<f64> {
    let c = config.coord(site);
    let mut sum = 0.0;
    for &b in &NN[..3] {
        let fwd = config.index_of(add(c, b)).ok_or(Error::MissingNeighbor { site: c, dir: b })?;
        let bwd = config.index_of(sub(c, b)).ok_or(Error::MissingNeighbor { site: c, dir: neg(b) })?;
        sum += (v[fwd] - 2.0 * v[site] + v[bwd]).norm_squared();
    }
    Ok(sum)
}

/// `(Σ_ℓ Σ_ρ |D_ρ v(ℓ)|² / |ρ|²)^{1/2}` over all pairs present in the patch.
pub fn discrete_h1_norm(config: &ReferenceConfig, stencil: &Stencil, v: &[Vec2]) -> f64 {
    let lengths: Vec<f64> = stencil.physical(config.basis()).iter().map(|r| r.norm_squared()).collect();
    let mut sum = 0.0;
    for (site, &c) in config.sites().iter().enumerate() {
        for (j, &d) in stencil.directions().iter().enumerate() {
            if let Some(t) = config.index_of(add(c, d)) {
                sum += (v[t] - v[site]).norm_squared() / lengths[j];
            }
        }
    }
    sum.sqrt()
}
