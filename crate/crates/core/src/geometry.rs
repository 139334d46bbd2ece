//! Road-network geometry: arc-length parametrized polyline paths, the
//! shared-prefix divergence table and reachability pruning.
//!
//! All paths start at a common origin (the driver's start). For every pair of
//! paths the map records the arc length at which their geometries diverge;
//! pruning removes a path once the driver has been observed past that point
//! on a different branch. `Path` and `PathMap` are immutable after
//! construction and safe to share; `ReachableSet` has a single writer (the
//! mission loop).

use std::collections::BTreeSet;

use serde::Deserialize;

pub type Point = nalgebra::Point2<f64>;

/// Two path points closer than this are considered coincident (meters).
pub const COINCIDENCE_TOL: f64 = 1e-9;

/// Default geometric match tolerance for pruning (meters, GPS scale).
pub const DEFAULT_MATCH_TOL: f64 = 1.0;

#[derive(Debug, Clone, thiserror::Error)]
pub enum GeometryError {
    #[error("path {path}: needs at least 2 vertices, got {got}")]
    TooFewVertices { path: usize, got: usize },
    #[error("path {path}: vertices {vertex} and {} coincide", vertex + 1)]
    DegenerateSegment { path: usize, vertex: usize },
    #[error("path {path}: does not share the common origin (vertex 0)")]
    MismatchedOrigin { path: usize },
    #[error("map needs at least one path")]
    EmptyMap,
    #[error("duplicate path id {0}")]
    DuplicatePathId(usize),
    #[error("theta {theta} outside [0, {max}] on path {path}")]
    ThetaOutOfRange { path: usize, theta: f64, max: f64 },
    #[error("unknown path id {0}")]
    UnknownPath(usize),
    #[error("measurement at theta {theta} matches no active path within {tol} m")]
    InconsistentMeasurement { theta: f64, tol: f64 },
    #[error("driver theta moved backwards: {got} < {previous}")]
    NonMonotoneTheta { got: f64, previous: f64 },
    #[error("map file: {0}")]
    MapFormat(String),
}

/// One arc-length parametrized polyline.
#[derive(Debug, Clone)]
pub struct Path {
    id: usize,
    vertices: Vec<Point>,
    cumulative_lengths: Vec<f64>,
}

impl Path {
    pub fn new(id: usize, vertices: Vec<Point>) -> Result<Self, GeometryError> {
        if vertices.len() < 2 {
            return Err(GeometryError::TooFewVertices {
                path: id,
                got: vertices.len(),
            });
        }
        let mut cumulative_lengths = Vec::with_capacity(vertices.len());
        cumulative_lengths.push(0.0);
        for (k, pair) in vertices.windows(2).enumerate() {
            let step = (pair[1] - pair[0]).norm();
            if step <= COINCIDENCE_TOL {
                return Err(GeometryError::DegenerateSegment { path: id, vertex: k });
            }
            cumulative_lengths.push(cumulative_lengths[k] + step);
        }
        Ok(Self {
            id,
            vertices,
            cumulative_lengths,
        })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn cumulative_lengths(&self) -> &[f64] {
        &self.cumulative_lengths
    }

    pub fn total_length(&self) -> f64 {
        *self.cumulative_lengths.last().expect("nonempty")
    }

    pub fn origin(&self) -> Point {
        self.vertices[0]
    }

    /// Point at arc length `theta`, by linear interpolation between the
    /// bracketing vertices. Vertices are reproduced exactly.
    pub fn evaluate(&self, theta: f64) -> Result<Point, GeometryError> {
        if !(0.0..=self.total_length()).contains(&theta) {
            return Err(GeometryError::ThetaOutOfRange {
                path: self.id,
                theta,
                max: self.total_length(),
            });
        }
        let k = match self
            .cumulative_lengths
            .binary_search_by(|l| l.total_cmp(&theta))
        {
            Ok(exact) => return Ok(self.vertices[exact]),
            Err(upper) => upper - 1,
        };
        let seg_len = self.cumulative_lengths[k + 1] - self.cumulative_lengths[k];
        let s = (theta - self.cumulative_lengths[k]) / seg_len;
        Ok(self.vertices[k] + (self.vertices[k + 1] - self.vertices[k]) * s)
    }

    /// Evaluate with `theta` clamped into `[0, total_length]`; the flag
    /// reports whether clamping occurred.
    pub fn evaluate_clamped(&self, theta: f64) -> (Point, bool) {
        let clamped = theta.clamp(0.0, self.total_length());
        let point = self.evaluate(clamped).expect("clamped theta in range");
        (point, clamped != theta)
    }
}

/// The road network: all paths, their pairwise divergence arc lengths and the
/// landing/abort sites.
#[derive(Debug, Clone)]
pub struct PathMap {
    paths: Vec<Path>,
    /// Row-major N x N table; entry (i, j) is the arc length where paths i
    /// and j diverge. Symmetric, diagonal holds each path's total length.
    divergence: Vec<f64>,
    landing_site: Point,
    abort_site: Point,
}

impl PathMap {
    pub fn new(paths: Vec<Path>, landing_site: Point, abort_site: Point) -> Result<Self, GeometryError> {
        if paths.is_empty() {
            return Err(GeometryError::EmptyMap);
        }
        let mut seen = BTreeSet::new();
        for p in &paths {
            if !seen.insert(p.id()) {
                return Err(GeometryError::DuplicatePathId(p.id()));
            }
        }
        let origin = paths[0].origin();
        for p in &paths {
            if (p.origin() - origin).norm() > COINCIDENCE_TOL {
                return Err(GeometryError::MismatchedOrigin { path: p.id() });
            }
        }

        let n = paths.len();
        let mut divergence = vec![0.0; n * n];
        for i in 0..n {
            divergence[i * n + i] = paths[i].total_length();
            for j in (i + 1)..n {
                let d = shared_prefix_length(&paths[i], &paths[j]);
                divergence[i * n + j] = d;
                divergence[j * n + i] = d;
            }
        }
        Ok(Self {
            paths,
            divergence,
            landing_site,
            abort_site,
        })
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn landing_site(&self) -> Point {
        self.landing_site
    }

    pub fn abort_site(&self) -> Point {
        self.abort_site
    }

    pub fn path(&self, id: usize) -> Result<&Path, GeometryError> {
        self.paths
            .iter()
            .find(|p| p.id() == id)
            .ok_or(GeometryError::UnknownPath(id))
    }

    fn index_of(&self, id: usize) -> Result<usize, GeometryError> {
        self.paths
            .iter()
            .position(|p| p.id() == id)
            .ok_or(GeometryError::UnknownPath(id))
    }

    /// Arc length at which the geometries of paths `i` and `j` diverge.
    pub fn shared_prefix_end(&self, i: usize, j: usize) -> Result<f64, GeometryError> {
        let a = self.index_of(i)?;
        let b = self.index_of(j)?;
        Ok(self.divergence[a * self.paths.len() + b])
    }

    /// Axis-aligned bounding box over all vertices and both sites.
    pub fn bounds(&self) -> (Point, Point) {
        let mut lo = self.landing_site;
        let mut hi = self.landing_site;
        let mut absorb = |p: Point| {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        };
        absorb(self.abort_site);
        for path in &self.paths {
            for &v in path.vertices() {
                absorb(v);
            }
        }
        (lo, hi)
    }

    pub fn from_json_str(text: &str) -> Result<Self, GeometryError> {
        let file: MapFile =
            serde_json::from_str(text).map_err(|e| GeometryError::MapFormat(e.to_string()))?;
        let paths = file
            .paths
            .into_iter()
            .map(|spec| {
                Path::new(
                    spec.id,
                    spec.vertices.iter().map(|v| Point::new(v[0], v[1])).collect(),
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(
            paths,
            Point::new(file.landing_site[0], file.landing_site[1]),
            Point::new(file.abort_site[0], file.abort_site[1]),
        )
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<Self, GeometryError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GeometryError::MapFormat(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MapFile {
    paths: Vec<PathSpec>,
    landing_site: [f64; 2],
    abort_site: [f64; 2],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PathSpec {
    id: usize,
    vertices: Vec<[f64; 2]>,
}

/// Arc length up to which two polylines from a common origin coincide.
///
/// Both paths are linear between merged breakpoints, so coincidence at the
/// two ends of a piece implies coincidence on the whole piece.
fn shared_prefix_length(a: &Path, b: &Path) -> f64 {
    let limit = a.total_length().min(b.total_length());
    let mut breaks: Vec<f64> = a
        .cumulative_lengths()
        .iter()
        .chain(b.cumulative_lengths().iter())
        .copied()
        .filter(|&t| t <= limit)
        .collect();
    breaks.push(limit);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|x, y| (*x - *y).abs() <= COINCIDENCE_TOL);

    let coincide = |theta: f64| {
        let pa = a.evaluate(theta.min(a.total_length())).expect("in range");
        let pb = b.evaluate(theta.min(b.total_length())).expect("in range");
        (pa - pb).norm() <= COINCIDENCE_TOL
    };

    let mut end = 0.0;
    for w in breaks.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if coincide(hi) && coincide(0.5 * (lo + hi)) {
            end = hi;
        } else {
            break;
        }
    }
    end
}

/// Path ids still consistent with the driver measurements seen so far.
#[derive(Debug, Clone)]
pub struct ReachableSet {
    active: BTreeSet<usize>,
    driver_theta: f64,
}

impl ReachableSet {
    /// All paths of the map active, driver at the origin.
    pub fn all(map: &PathMap) -> Self {
        Self {
            active: map.paths().iter().map(|p| p.id()).collect(),
            driver_theta: 0.0,
        }
    }

    pub fn active(&self) -> &BTreeSet<usize> {
        &self.active
    }

    pub fn is_active(&self, id: usize) -> bool {
        self.active.contains(&id)
    }

    pub fn driver_theta(&self) -> f64 {
        self.driver_theta
    }
}

/// Drop every active path the driver can no longer be on, given a measured
/// arc length and GPS point.
///
/// A path is removed when the measurement lies past its divergence from a
/// path the point geometrically matches; paths matching the point are always
/// kept (a tie exactly at a divergence keeps all candidate branches). A point
/// matching no active path is reported as an inconsistent measurement and the
/// caller should keep its previous set.
pub fn prune_reachable(
    rs: &ReachableSet,
    map: &PathMap,
    measured_theta: f64,
    measured_point: &Point,
    tolerance: f64,
) -> Result<ReachableSet, GeometryError> {
    if measured_theta < rs.driver_theta {
        return Err(GeometryError::NonMonotoneTheta {
            got: measured_theta,
            previous: rs.driver_theta,
        });
    }

    let matches: Vec<usize> = rs
        .active
        .iter()
        .copied()
        .filter(|&id| {
            let path = map.path(id).expect("active ids exist in map");
            let (point, _) = path.evaluate_clamped(measured_theta);
            (point - measured_point).norm() <= tolerance
        })
        .collect();
    if matches.is_empty() {
        return Err(GeometryError::InconsistentMeasurement {
            theta: measured_theta,
            tol: tolerance,
        });
    }

    let active = rs
        .active
        .iter()
        .copied()
        .filter(|&j| {
            matches.contains(&j)
                || matches.iter().all(|&k| {
                    measured_theta <= map.shared_prefix_end(j, k).expect("ids exist")
                })
        })
        .collect();
    Ok(ReachableSet {
        active,
        driver_theta: measured_theta,
    })
}
