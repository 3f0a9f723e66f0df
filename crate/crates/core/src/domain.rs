//! Multiply-connected planar domains bounded by circles.
//!
//! A domain is one outer disk with `m - 1` disjoint circular holes punched
//! out of it. Every boundary circle carries a nonvanishing real boundary
//! coefficient `B` that enters the local Dirac boundary condition
//! `(n_y - i n_x) u1 = B u2`. The circles with `B > 0` form the positive
//! boundary, the only part that feeds the topological prediction in
//! [`crate::gauge::predicted_sf`].

use std::collections::VecDeque;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    /// The point as a complex number `x + i y`.
    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.x, self.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub center: Vec2,
    pub radius: f64,
}

impl Circle {
    pub const fn new(center: Vec2, radius: f64) -> Self {
        Self { center, radius }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.dist(self.center) < self.radius
    }

    /// Point at polar angle `theta` measured from the circle center.
    pub fn point_at(&self, theta: f64) -> Vec2 {
        Vec2::new(
            self.center.x + self.radius * theta.cos(),
            self.center.y + self.radius * theta.sin(),
        )
    }
}

/// Sign of a boundary coefficient or a wall mass.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn of(v: f64) -> Option<Sign> {
        if v > 0.0 {
            Some(Sign::Plus)
        } else if v < 0.0 {
            Some(Sign::Minus)
        } else {
            None
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Sign::Plus => '+',
            Sign::Minus => '-',
        }
    }
}

/// Nonvanishing constant boundary coefficient `B = sign * magnitude`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct BoundaryValue {
    sign: Sign,
    magnitude: f64,
}

impl BoundaryValue {
    pub fn new(b: f64) -> Result<Self> {
        if !b.is_finite() {
            return Err(Error::InvalidBoundaryData(format!("B = {b} is not finite")));
        }
        let sign = Sign::of(b)
            .ok_or_else(|| Error::InvalidBoundaryData("B must be nonvanishing".into()))?;
        Ok(Self { sign, magnitude: b.abs() })
    }

    pub fn from_parts(sign: Sign, magnitude: f64) -> Result<Self> {
        Self::new(sign.value() * magnitude)
    }

    pub fn sign(&self) -> Sign {
        self.sign
    }

    pub fn magnitude(&self) -> f64 {
        self.magnitude
    }

    pub fn value(&self) -> f64 {
        self.sign.value() * self.magnitude
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.value() * factor)
    }
}

impl TryFrom<f64> for BoundaryValue {
    type Error = Error;
    fn try_from(b: f64) -> Result<Self> {
        Self::new(b)
    }
}

impl From<BoundaryValue> for f64 {
    fn from(b: BoundaryValue) -> f64 {
        b.value()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hole {
    /// 1-based hole index `k`.
    pub index: usize,
    pub circle: Circle,
    pub b: BoundaryValue,
}

/// A disk with disjoint circular holes and boundary data on every circle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    outer: Circle,
    outer_b: BoundaryValue,
    holes: Vec<Hole>,
}

impl DomainSpec {
    /// Validates containment and pairwise disjointness of the holes.
    pub fn new(outer: Circle, outer_b: BoundaryValue, holes: Vec<(Circle, BoundaryValue)>) -> Result<Self> {
        if !(outer.radius > 0.0 && outer.radius.is_finite()) {
            return Err(Error::InvalidGeometry(format!("outer radius {} must be positive", outer.radius)));
        }
        let holes: Vec<Hole> = holes
            .into_iter()
            .enumerate()
            .map(|(i, (circle, b))| Hole { index: i + 1, circle, b })
            .collect();
        for h in &holes {
            let r = h.circle.radius;
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::InvalidGeometry(format!("hole {} radius {r} must be positive", h.index)));
            }
            let reach = h.circle.center.dist(outer.center) + r;
            if reach >= outer.radius {
                return Err(Error::InvalidGeometry(format!(
                    "hole {} is not strictly inside the outer circle",
                    h.index
                )));
            }
        }
        for (i, a) in holes.iter().enumerate() {
            for b in &holes[i + 1..] {
                if a.circle.center.dist(b.circle.center) <= a.circle.radius + b.circle.radius {
                    return Err(Error::InvalidGeometry(format!(
                        "holes {} and {} overlap or touch",
                        a.index, b.index
                    )));
                }
            }
        }
        Ok(Self { outer, outer_b, holes })
    }

    /// Simply connected disk.
    pub fn disk(center: Vec2, radius: f64, b: BoundaryValue) -> Result<Self> {
        Self::new(Circle::new(center, radius), b, Vec::new())
    }

    pub fn outer(&self) -> &Circle {
        &self.outer
    }

    pub fn outer_b(&self) -> BoundaryValue {
        self.outer_b
    }

    pub fn holes(&self) -> &[Hole] {
        &self.holes
    }

    /// Number of boundary components, `m = 1 + #holes`.
    pub fn m(&self) -> usize {
        1 + self.holes.len()
    }

    /// True for a single hole concentric with the outer circle.
    pub fn is_concentric_annulus(&self) -> bool {
        self.holes.len() == 1 && self.holes[0].circle.center.dist(self.outer.center) <= 1e-12 * self.outer.radius
    }

    /// Smallest distance between two boundary circles (the outer radius for a disk).
    pub fn min_clearance(&self) -> f64 {
        let mut c = f64::INFINITY;
        for h in &self.holes {
            c = c.min(self.outer.radius - h.circle.center.dist(self.outer.center) - h.circle.radius);
            c = c.min(h.circle.radius);
        }
        for (i, a) in self.holes.iter().enumerate() {
            for b in &self.holes[i + 1..] {
                c = c.min(a.circle.center.dist(b.circle.center) - a.circle.radius - b.circle.radius);
            }
        }
        c.min(self.outer.radius)
    }

    pub fn area(&self) -> f64 {
        let disk = |r: f64| std::f64::consts::PI * r * r;
        disk(self.outer.radius) - self.holes.iter().map(|h| disk(h.circle.radius)).sum::<f64>()
    }

    pub fn contains(&self, p: Vec2) -> bool {
        self.outer.contains(p) && !self.holes.iter().any(|h| p.dist(h.circle.center) <= h.circle.radius)
    }

    /// Same geometry with every boundary coefficient replaced.
    pub fn with_boundary_values(&self, outer_b: BoundaryValue, hole_bs: &[BoundaryValue]) -> Result<Self> {
        if hole_bs.len() != self.holes.len() {
            return Err(Error::InvalidBoundaryData(format!(
                "expected {} hole coefficients, got {}",
                self.holes.len(),
                hole_bs.len()
            )));
        }
        let holes = self.holes.iter().zip(hole_bs).map(|(h, b)| (h.circle, *b)).collect();
        Self::new(self.outer, outer_b, holes)
    }

    /// Multiplies every `|B|` by `factor`, keeping the signs.
    pub fn scale_b(&self, factor: f64) -> Result<Self> {
        let hole_bs = self.holes.iter().map(|h| h.b.scaled(factor)).collect::<Result<Vec<_>>>()?;
        self.with_boundary_values(self.outer_b.scaled(factor)?, &hole_bs)
    }

    /// Boundary sign pattern, outer first.
    pub fn sign_pattern(&self) -> Vec<Sign> {
        std::iter::once(self.outer_b.sign()).chain(self.holes.iter().map(|h| h.b.sign())).collect()
    }
}

/// `(r_inner, r_outer)` concentric annulus centered at the origin.
pub fn build_annulus(r_inner: f64, r_outer: f64, b_in: BoundaryValue, b_out: BoundaryValue) -> Result<DomainSpec> {
    if !(r_inner > 0.0 && r_inner < r_outer) {
        return Err(Error::InvalidGeometry(format!(
            "annulus radii must satisfy 0 < r_inner < r_outer, got ({r_inner}, {r_outer})"
        )));
    }
    DomainSpec::new(
        Circle::new(Vec2::ZERO, r_outer),
        b_out,
        vec![(Circle::new(Vec2::ZERO, r_inner), b_in)],
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ComponentKind {
    Outer,
    Hole(usize),
}

impl fmt::Display for ComponentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ComponentKind::Outer => write!(f, "outer"),
            ComponentKind::Hole(k) => write!(f, "hole{k}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    CounterClockwise,
    Clockwise,
}

impl Orientation {
    pub fn value(self) -> f64 {
        match self {
            Orientation::CounterClockwise => 1.0,
            Orientation::Clockwise => -1.0,
        }
    }
}

/// One boundary circle, oriented so that the domain stays on the left.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryComponent {
    pub id: usize,
    pub kind: ComponentKind,
    pub circle: Circle,
    pub b: BoundaryValue,
    pub orientation: Orientation,
}

impl BoundaryComponent {
    pub fn is_positive(&self) -> bool {
        self.b.sign() == Sign::Plus
    }

    /// Point at parameter `s in [0, 1)` along the oriented circle.
    pub fn point_at(&self, s: f64) -> Vec2 {
        self.circle.point_at(self.orientation.value() * std::f64::consts::TAU * s)
    }

    /// Unit inward normal (pointing into the domain) at polar angle `theta`.
    pub fn inward_normal(&self, theta: f64) -> Vec2 {
        let radial = Vec2::new(theta.cos(), theta.sin());
        match self.kind {
            ComponentKind::Outer => Vec2::new(-radial.x, -radial.y),
            ComponentKind::Hole(_) => radial,
        }
    }
}

/// The `m` boundary components: the outer circle (counterclockwise) followed
/// by the holes (clockwise).
pub fn boundary_components(d: &DomainSpec) -> Vec<BoundaryComponent> {
    let mut out = Vec::with_capacity(d.m());
    out.push(BoundaryComponent {
        id: 0,
        kind: ComponentKind::Outer,
        circle: d.outer,
        b: d.outer_b,
        orientation: Orientation::CounterClockwise,
    });
    for h in &d.holes {
        out.push(BoundaryComponent {
            id: h.index,
            kind: ComponentKind::Hole(h.index),
            circle: h.circle,
            b: h.b,
            orientation: Orientation::Clockwise,
        });
    }
    out
}

/// Which normal enters the phase `n_y - i n_x` of the boundary condition
/// used by the numerical backends.
///
/// With the inward normal, the measured flow of the gauge family equals the
/// winding of `mu` over the components where `B < 0`; the outward normal
/// flips every `B` and reproduces the winding over `B > 0`. `Outward` is the
/// default so that configuration signs label the positive boundary directly.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalConvention {
    Inward,
    #[default]
    Outward,
}

impl NormalConvention {
    /// Factor applied to `B` before it enters the inward-normal form of the condition.
    pub fn b_factor(self) -> f64 {
        match self {
            NormalConvention::Inward => 1.0,
            NormalConvention::Outward => -1.0,
        }
    }
}

/// `|<v, sigma(n) v>|` for the vector `v = (1, (n_y - i n_x)/B)` spanning the
/// boundary subspace, where `sigma(xi) = xi_x sigma_x + xi_y sigma_y` is the
/// principal symbol of the planar Dirac operator. Vanishes identically for
/// unit `n` and real nonzero `B`.
pub fn check_admissibility(n: Vec2, b: f64) -> Result<f64> {
    if b == 0.0 || !b.is_finite() {
        return Err(Error::InvalidBoundaryData(format!("B = {b} is not an admissible coefficient")));
    }
    let i = Complex64::i();
    let v1 = Complex64::new(1.0, 0.0);
    let v2 = (Complex64::new(n.y, 0.0) - i * n.x) / b;
    // sigma(n) = [[0, n_x - i n_y], [n_x + i n_y, 0]]
    let s12 = Complex64::new(n.x, -n.y);
    let s21 = Complex64::new(n.x, n.y);
    let sv1 = s12 * v2;
    let sv2 = s21 * v1;
    Ok((v1.conj() * sv1 + v2.conj() * sv2).norm())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellTag {
    Interior,
    Exterior,
    Hole(usize),
}

/// Square grid over the bounding box of the outer circle, tagged cell by cell.
#[derive(Clone, Debug)]
pub struct GridMask {
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
    /// Center of cell `(0, 0)`.
    pub origin: Vec2,
    pub margin: usize,
    tags: Vec<CellTag>,
}

impl GridMask {
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn coords(&self, s: usize) -> (usize, usize) {
        (s % self.nx, s / self.nx)
    }

    pub fn center(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(self.origin.x + i as f64 * self.h, self.origin.y + j as f64 * self.h)
    }

    pub fn tag(&self, i: usize, j: usize) -> CellTag {
        self.tags[self.index(i, j)]
    }

    pub fn tags(&self) -> &[CellTag] {
        &self.tags
    }

    pub fn n_sites(&self) -> usize {
        self.nx * self.ny
    }

    pub fn interior_count(&self) -> usize {
        self.tags.iter().filter(|t| **t == CellTag::Interior).count()
    }

    pub fn bounding_box(&self) -> (Vec2, Vec2) {
        let half = 0.5 * self.h;
        (
            Vec2::new(self.origin.x - half, self.origin.y - half),
            Vec2::new(
                self.origin.x + (self.nx as f64 - 0.5) * self.h,
                self.origin.y + (self.ny as f64 - 0.5) * self.h,
            ),
        )
    }

    /// Whether the interior cells form one edge-connected set.
    pub fn interior_connected(&self) -> bool {
        self.interior_components() == 1
    }

    /// Number of edge-connected pieces of the interior.
    pub fn interior_components(&self) -> usize {
        let mut seen = vec![false; self.tags.len()];
        let mut pieces = 0;
        for start in 0..self.tags.len() {
            if seen[start] || self.tags[start] != CellTag::Interior {
                continue;
            }
            pieces += 1;
            seen[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(s) = queue.pop_front() {
                let (i, j) = self.coords(s);
                let mut visit = |ii: usize, jj: usize| {
                    let t = self.index(ii, jj);
                    if !seen[t] && self.tags[t] == CellTag::Interior {
                        seen[t] = true;
                        queue.push_back(t);
                    }
                };
                if i > 0 {
                    visit(i - 1, j);
                }
                if i + 1 < self.nx {
                    visit(i + 1, j);
                }
                if j > 0 {
                    visit(i, j - 1);
                }
                if j + 1 < self.ny {
                    visit(i, j + 1);
                }
            }
        }
        pieces
    }
}

/// Wall cells kept around the outer circle by [`rasterize`].
pub const DEFAULT_MARGIN: usize = 6;

/// Cell-center rasterization with the default wall margin.
pub fn rasterize(d: &DomainSpec, h: f64) -> Result<GridMask> {
    rasterize_with_margin(d, h, DEFAULT_MARGIN)
}

/// Tags every cell of a square grid by the region containing its center.
///
/// The grid is placed so that the outer center sits on a cell corner and is
/// shifted by `h/7` steps until no hole center lies on a grid line through
/// cell centers, which keeps every flux tube strictly inside a plaquette.
pub fn rasterize_with_margin(d: &DomainSpec, h: f64, margin: usize) -> Result<GridMask> {
    rasterize_union_with_margin(std::slice::from_ref(d), h, margin)
}

/// Rasterizes disjoint domains onto one grid. Holes are numbered
/// consecutively across the parts, in order; the interior must split into
/// exactly one edge-connected piece per part.
pub fn rasterize_union(parts: &[DomainSpec], h: f64) -> Result<GridMask> {
    rasterize_union_with_margin(parts, h, DEFAULT_MARGIN)
}

pub fn rasterize_union_with_margin(parts: &[DomainSpec], h: f64, margin: usize) -> Result<GridMask> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Resolution(format!("grid spacing {h} must be positive")));
    }
    let Some(first) = parts.first() else {
        return Err(Error::InvalidGeometry("no domain to rasterize".into()));
    };
    for (i, a) in parts.iter().enumerate() {
        let clearance = a.min_clearance();
        if h >= clearance / 4.0 {
            return Err(Error::Resolution(format!(
                "spacing {h} is too coarse for clearance {clearance} (need h < clearance/4)"
            )));
        }
        for b in &parts[i + 1..] {
            let gap = a.outer.center.dist(b.outer.center) - a.outer.radius - b.outer.radius;
            if gap <= 4.0 * h {
                return Err(Error::InvalidGeometry(format!("disjoint parts are only {gap} apart")));
            }
        }
    }
    let lo_x = parts.iter().map(|d| d.outer.center.x - d.outer.radius).fold(f64::INFINITY, f64::min);
    let hi_x = parts.iter().map(|d| d.outer.center.x + d.outer.radius).fold(f64::NEG_INFINITY, f64::max);
    let lo_y = parts.iter().map(|d| d.outer.center.y - d.outer.radius).fold(f64::INFINITY, f64::min);
    let hi_y = parts.iter().map(|d| d.outer.center.y + d.outer.radius).fold(f64::NEG_INFINITY, f64::max);
    let cells = |lo: f64, hi: f64| {
        let n = ((hi - lo) / h).ceil() as usize;
        n + (n % 2) + 2 * margin
    };
    let (nx, ny) = (cells(lo_x, hi_x), cells(lo_y, hi_y));
    // A single domain has its outer center on a cell corner.
    let (cx, cy) = if parts.len() == 1 {
        (first.outer.center.x, first.outer.center.y)
    } else {
        (0.5 * (lo_x + hi_x), 0.5 * (lo_y + hi_y))
    };
    let base = Vec2::new(cx - (nx as f64 / 2.0 - 0.5) * h, cy - (ny as f64 / 2.0 - 0.5) * h);
    let on_line = |c: f64, o: f64| {
        let f = (c - o) / h;
        (f - f.round()).abs() < 1e-6
    };
    let centers: Vec<Vec2> = parts.iter().flat_map(|d| d.holes.iter().map(|k| k.circle.center)).collect();
    let mut origin = base;
    for step in 0..8 {
        origin = Vec2::new(base.x + step as f64 * h / 7.0, base.y + step as f64 * h / 7.0);
        if centers.iter().all(|c| !on_line(c.x, origin.x) && !on_line(c.y, origin.y)) {
            break;
        }
    }
    let mut tags = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let p = Vec2::new(origin.x + i as f64 * h, origin.y + j as f64 * h);
            let mut tag = CellTag::Exterior;
            let mut offset = 0;
            for d in parts {
                if p.dist(d.outer.center) < d.outer.radius {
                    tag = match d.holes.iter().find(|hole| p.dist(hole.circle.center) <= hole.circle.radius) {
                        Some(hole) => CellTag::Hole(offset + hole.index),
                        None => CellTag::Interior,
                    };
                    break;
                }
                offset += d.holes.len();
            }
            tags.push(tag);
        }
    }
    let mask = GridMask { h, nx, ny, origin, margin, tags };
    if mask.interior_components() != parts.len() {
        return Err(Error::Resolution(format!("spacing {h} does not resolve a connected interior")));
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bv(b: f64) -> BoundaryValue {
        BoundaryValue::new(b).unwrap()
    }

    #[test]
    fn annulus_positive_boundary_is_outer_only() {
        let d = build_annulus(1.0, 2.0, bv(-1.0), bv(1.0)).unwrap();
        let comps = boundary_components(&d);
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0].kind, ComponentKind::Outer);
        assert_eq!(comps[0].orientation, Orientation::CounterClockwise);
        assert!(comps[0].is_positive());
        assert_eq!(comps[1].kind, ComponentKind::Hole(1));
        assert_eq!(comps[1].orientation, Orientation::Clockwise);
        assert!(!comps[1].is_positive());
    }

    #[test]
    fn annulus_both_positive() {
        let d = build_annulus(1.0, 2.0, bv(1.0), bv(1.0)).unwrap();
        assert!(boundary_components(&d).iter().all(|c| c.is_positive()));
    }

    #[test]
    fn annulus_rejects_unordered_radii() {
        assert!(matches!(build_annulus(2.0, 1.0, bv(1.0), bv(1.0)), Err(Error::InvalidGeometry(_))));
        assert!(matches!(build_annulus(0.0, 1.0, bv(1.0), bv(1.0)), Err(Error::InvalidGeometry(_))));
    }

    #[test]
    fn zero_b_is_rejected() {
        assert!(matches!(BoundaryValue::new(0.0), Err(Error::InvalidBoundaryData(_))));
    }

    #[test]
    fn two_hole_disk_all_positive() {
        let d = DomainSpec::new(
            Circle::new(Vec2::ZERO, 2.0),
            bv(1.0),
            vec![
                (Circle::new(Vec2::new(-0.9, 0.0), 0.5), bv(1.0)),
                (Circle::new(Vec2::new(0.9, 0.0), 0.5), bv(1.0)),
            ],
        )
        .unwrap();
        let comps = boundary_components(&d);
        assert_eq!(comps.len(), 3);
        assert_eq!(comps.iter().filter(|c| c.is_positive()).count(), 3);
    }

    #[test]
    fn five_component_domain_has_three_positive() {
        // m = 5, B > 0 on the outer circle and on holes 3 and 4
        let d = DomainSpec::new(
            Circle::new(Vec2::ZERO, 5.0),
            bv(1.0),
            vec![
                (Circle::new(Vec2::new(-2.5, 0.0), 0.6), bv(-1.0)),
                (Circle::new(Vec2::new(0.0, 2.5), 0.6), bv(-2.0)),
                (Circle::new(Vec2::new(2.5, 0.0), 0.6), bv(0.5)),
                (Circle::new(Vec2::new(0.0, -2.5), 0.6), bv(3.0)),
            ],
        )
        .unwrap();
        let comps = boundary_components(&d);
        assert_eq!(d.m(), 5);
        assert_eq!(comps.iter().filter(|c| c.is_positive()).count(), 3);
    }

    #[test]
    fn overlapping_holes_rejected() {
        let r = DomainSpec::new(
            Circle::new(Vec2::ZERO, 2.0),
            bv(1.0),
            vec![
                (Circle::new(Vec2::new(-0.4, 0.0), 0.5), bv(1.0)),
                (Circle::new(Vec2::new(0.4, 0.0), 0.5), bv(1.0)),
            ],
        );
        assert!(matches!(r, Err(Error::InvalidGeometry(_))));
    }

    #[test]
    fn admissibility_vertical_normal() {
        assert!(check_admissibility(Vec2::new(0.0, 1.0), 2.0).unwrap() < 1e-15);
    }

    #[test]
    fn admissibility_random_normals() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let defect = check_admissibility(Vec2::new(th.cos(), th.sin()), -0.5).unwrap();
            assert!(defect < 1e-12, "defect {defect}");
        }
    }

    #[test]
    fn admissibility_rejects_zero_b() {
        assert!(check_admissibility(Vec2::new(1.0, 0.0), 0.0).is_err());
    }

    #[test]
    fn rasterized_annulus_area() {
        let d = build_annulus(1.0, 2.0, bv(-1.0), bv(1.0)).unwrap();
        let h = 0.05;
        let mask = rasterize(&d, h).unwrap();
        let expected = std::f64::consts::PI * 3.0 / (h * h);
        let rel = (mask.interior_count() as f64 - expected).abs() / expected;
        assert!(rel < 0.10, "relative area error {rel}");
    }

    #[test]
    fn disk_refinement_quadruples_count() {
        let d = DomainSpec::disk(Vec2::ZERO, 1.0, bv(1.0)).unwrap();
        let a = rasterize(&d, 0.02).unwrap().interior_count() as f64;
        let b = rasterize(&d, 0.01).unwrap().interior_count() as f64;
        assert!((b / a - 4.0).abs() / 4.0 < 0.05, "ratio {}", b / a);
    }

    #[test]
    fn coarse_spacing_is_a_resolution_error() {
        let d = build_annulus(1.0, 2.0, bv(-1.0), bv(1.0)).unwrap();
        assert!(matches!(rasterize(&d, 2.0), Err(Error::Resolution(_))));
    }

    #[test]
    fn refinement_keeps_far_tags() {
        let d = build_annulus(1.0, 2.0, bv(-1.0), bv(1.0)).unwrap();
        let coarse = rasterize(&d, 0.1).unwrap();
        let fine = rasterize(&d, 0.05).unwrap();
        // The fine cell containing a coarse center carries the tag of its own
        // center, which is within h/2 of the coarse one.
        let tag_at = |m: &GridMask, p: Vec2| {
            let i = ((p.x - m.origin.x) / m.h).round();
            let j = ((p.y - m.origin.y) / m.h).round();
            if i < 0.0 || j < 0.0 || i >= m.nx as f64 || j >= m.ny as f64 {
                return CellTag::Exterior;
            }
            m.tag(i as usize, j as usize)
        };
        for j in 0..coarse.ny {
            for i in 0..coarse.nx {
                let p = coarse.center(i, j);
                let r = p.norm();
                if (r - 1.0).abs() > 0.1 && (r - 2.0).abs() > 0.1 {
                    assert_eq!(coarse.tag(i, j), tag_at(&fine, p));
                }
            }
        }
    }

    #[test]
    fn shrinking_a_hole_never_adds_hole_cells() {
        let big = build_annulus(1.0, 2.0, bv(-1.0), bv(1.0)).unwrap();
        let small = build_annulus(0.8, 2.0, bv(-1.0), bv(1.0)).unwrap();
        let a = rasterize(&big, 0.05).unwrap();
        let b = rasterize(&small, 0.05).unwrap();
        assert_eq!(a.origin, b.origin);
        for (ta, tb) in a.tags().iter().zip(b.tags()) {
            if *ta == CellTag::Interior {
                assert_eq!(*tb, CellTag::Interior);
            }
        }
    }

    #[test]
    fn flux_centers_avoid_grid_lines() {
        let d = DomainSpec::new(
            Circle::new(Vec2::ZERO, 2.0),
            bv(1.0),
            vec![(Circle::new(Vec2::new(0.5, 0.25), 0.3), bv(1.0))],
        )
        .unwrap();
        let m = rasterize(&d, 1.0 / 24.0).unwrap();
        let c = d.holes()[0].circle.center;
        for (co, o) in [(c.x, m.origin.x), (c.y, m.origin.y)] {
            let f = (co - o) / m.h;
            assert!((f - f.round()).abs() > 1e-3);
        }
    }
}
