//! Coupling matrices and model specifications.
//!
//! Every named lattice is turned into a raw ferromagnetic matrix with `-J`
//! on each edge, then normalised so that it is positive definite with
//! spectral radius one. The inverse temperature of a [`ModelSpec`] always
//! refers to the normalised matrix.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Margin added to `|lambda_min|` when a diagonal shift is needed.
pub const SHIFT_MARGIN: f64 = 0.5;

const SYMMETRY_TOL: f64 = 1e-12;
const RADIUS_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Lattice {
    Path {
        length: usize,
    },
    Cycle {
        length: usize,
    },
    #[serde(alias = "grid")]
    Grid2d {
        width: usize,
        height: usize,
        #[serde(default)]
        periodic: bool,
    },
    Complete {
        n: usize,
    },
    Custom {
        matrix: Vec<Vec<f64>>,
    },
}

impl Lattice {
    pub fn path(length: usize) -> Self {
        Lattice::Path { length }
    }

    pub fn cycle(length: usize) -> Self {
        Lattice::Cycle { length }
    }

    pub fn grid(width: usize, height: usize) -> Self {
        Lattice::Grid2d {
            width,
            height,
            periodic: false,
        }
    }

    pub fn periodic_grid(width: usize, height: usize) -> Self {
        Lattice::Grid2d {
            width,
            height,
            periodic: true,
        }
    }

    pub fn complete(n: usize) -> Self {
        Lattice::Complete { n }
    }

    pub fn sites(&self) -> usize {
        match self {
            Lattice::Path { length } | Lattice::Cycle { length } => *length,
            Lattice::Grid2d { width, height, .. } => width * height,
            Lattice::Complete { n } => *n,
            Lattice::Custom { matrix } => matrix.len(),
        }
    }

    /// Short human-readable label, e.g. `grid2d-4x4`.
    pub fn label(&self) -> String {
        match self {
            Lattice::Path { length } => format!("path-{length}"),
            Lattice::Cycle { length } => format!("cycle-{length}"),
            Lattice::Grid2d {
                width,
                height,
                periodic,
            } => {
                let tag = if *periodic { "torus" } else { "grid2d" };
                format!("{tag}-{width}x{height}")
            }
            Lattice::Complete { n } => format!("complete-{n}"),
            Lattice::Custom { matrix } => format!("custom-{}", matrix.len()),
        }
    }

    /// Undirected edges of a named lattice. Wrap-around edges are only added
    /// along periodic dimensions of length at least three.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges = Vec::new();
        match self {
            Lattice::Path { length } => {
                for i in 1..*length {
                    edges.push((i - 1, i));
                }
            }
            Lattice::Cycle { length } => {
                for i in 1..*length {
                    edges.push((i - 1, i));
                }
                if *length >= 3 {
                    edges.push((length - 1, 0));
                }
            }
            Lattice::Grid2d {
                width,
                height,
                periodic,
            } => {
                let (w, h) = (*width, *height);
                for row in 0..h {
                    for col in 0..w {
                        let site = row * w + col;
                        if col + 1 < w {
                            edges.push((site, site + 1));
                        } else if *periodic && w >= 3 {
                            edges.push((row * w, site));
                        }
                        if row + 1 < h {
                            edges.push((site, site + w));
                        } else if *periodic && h >= 3 {
                            edges.push((col, site));
                        }
                    }
                }
            }
            Lattice::Complete { n } => {
                for i in 0..*n {
                    for j in i + 1..*n {
                        edges.push((i, j));
                    }
                }
            }
            Lattice::Custom { matrix } => {
                for (i, row) in matrix.iter().enumerate() {
                    for (j, &v) in row.iter().enumerate().skip(i + 1) {
                        if v != 0.0 {
                            edges.push((i, j));
                        }
                    }
                }
            }
        }
        edges
    }

    /// Raw coupling matrix: `-J` per edge for named lattices, the given
    /// matrix for custom ones.
    pub fn raw_matrix(&self, coupling: f64) -> Result<DMatrix<f64>> {
        let n = self.sites();
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        if let Lattice::Custom { matrix } = self {
            if matrix.iter().any(|row| row.len() != n) {
                return Err(Error::InvalidModel("custom matrix must be square".into()));
            }
            return Ok(DMatrix::from_fn(n, n, |i, j| matrix[i][j]));
        }
        if let Lattice::Cycle { length } = self {
            if *length < 3 {
                return Err(Error::InvalidModel("a cycle needs at least 3 sites".into()));
            }
        }
        let mut m = DMatrix::zeros(n, n);
        for (i, j) in self.edges() {
            m[(i, j)] -= coupling;
            m[(j, i)] -= coupling;
        }
        Ok(m)
    }

    /// Orbits of sites under the lattice's obvious automorphisms (reflections,
    /// rotations of the square, translations along periodic directions).
    /// Sites in one orbit have identical zero-field correlation row sums.
    pub fn site_orbits(&self) -> Vec<Vec<usize>> {
        let n = self.sites();
        let mut generators: Vec<Vec<usize>> = Vec::new();
        match self {
            Lattice::Path { length } => {
                generators.push((0..*length).map(|i| length - 1 - i).collect());
            }
            Lattice::Cycle { length } | Lattice::Complete { n: length } => {
                generators.push((0..*length).map(|i| (i + 1) % length).collect());
            }
            Lattice::Grid2d {
                width,
                height,
                periodic,
            } => {
                let (w, h) = (*width, *height);
                let map = |f: &dyn Fn(usize, usize) -> (usize, usize)| -> Vec<usize> {
                    (0..w * h)
                        .map(|s| {
                            let (r, c) = f(s / w, s % w);
                            r * w + c
                        })
                        .collect()
                };
                generators.push(map(&|r, c| (r, w - 1 - c)));
                generators.push(map(&|r, c| (h - 1 - r, c)));
                if w == h {
                    generators.push(map(&|r, c| (c, r)));
                }
                if *periodic && w >= 3 {
                    generators.push(map(&|r, c| (r, (c + 1) % w)));
                }
                if *periodic && h >= 3 {
                    generators.push(map(&|r, c| ((r + 1) % h, c)));
                }
            }
            Lattice::Custom { .. } => {}
        }
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for g in &generators {
            for (s, &t) in g.iter().enumerate() {
                let (a, b) = (find(&mut parent, s), find(&mut parent, t));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut orbits: Vec<Vec<usize>> = Vec::new();
        let mut index_of_root = vec![usize::MAX; n];
        for s in 0..n {
            let root = find(&mut parent, s);
            if index_of_root[root] == usize::MAX {
                index_of_root[root] = orbits.len();
                orbits.push(Vec::new());
            }
            orbits[index_of_root[root]].push(s);
        }
        orbits
    }
}

/// A full model: lattice, raw coupling strength, field, inverse temperature
/// (with respect to the normalised matrix) and the flow parameter `alpha`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub lattice: Lattice,
    pub coupling: f64,
    pub field: Vec<f64>,
    pub beta: f64,
    pub alpha: f64,
}

impl ModelSpec {
    /// Zero field and the default `alpha = beta + 1`.
    pub fn new(lattice: Lattice, coupling: f64, beta: f64) -> Self {
        let n = lattice.sites();
        ModelSpec {
            lattice,
            coupling,
            field: vec![0.0; n],
            beta,
            alpha: beta + 1.0,
        }
    }

    pub fn with_field(mut self, field: Vec<f64>) -> Self {
        self.field = field;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn sites(&self) -> usize {
        self.lattice.sites()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.sites();
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        if !(self.coupling.is_finite() && self.beta.is_finite() && self.alpha.is_finite()) {
            return Err(Error::NonFinite("model parameters"));
        }
        if self.coupling < 0.0 {
            return Err(Error::InvalidModel(format!(
                "coupling strength J = {} must be nonnegative",
                self.coupling
            )));
        }
        if self.beta < 0.0 {
            return Err(Error::InvalidModel(format!(
                "inverse temperature {} must be nonnegative",
                self.beta
            )));
        }
        if self.alpha <= self.beta {
            return Err(Error::InvalidModel(format!(
                "alpha = {} must exceed beta = {}",
                self.alpha, self.beta
            )));
        }
        if self.field.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: self.field.len(),
            });
        }
        if self.field.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field"));
        }
        Ok(())
    }
}

/// How a raw matrix was turned into the working coupling matrix:
/// `A = scale * (raw + shift * I)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub shift: f64,
    pub scale: f64,
    pub min_eigenvalue: f64,
}

/// Normalised ferromagnetic coupling: symmetric, nonpositive off the
/// diagonal, positive definite, spectral radius one (up to rounding).
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingMatrix {
    matrix: DMatrix<f64>,
    normalization: Normalization,
}

impl CouplingMatrix {
    /// Validates a raw matrix and normalises it.
    ///
    /// A diagonal shift of `|lambda_min| + 0.5` is applied only when the raw
    /// matrix is not positive definite; the result is then scaled by
    /// `1 / lambda_max`. An already-normalised matrix is left unchanged.
    pub fn normalize(raw: &DMatrix<f64>) -> Result<Self> {
        validate_raw(raw)?;
        let n = raw.nrows();
        let (values, _) = linalg::sorted_eigen(raw);
        let lambda_min = values[0];
        let lambda_max = values[n - 1];
        let shift = if lambda_min <= 0.0 {
            lambda_min.abs() + SHIFT_MARGIN
        } else {
            0.0
        };
        let top = lambda_max + shift;
        if top <= 0.0 {
            return Err(Error::InvalidModel("coupling matrix has no positive spectrum".into()));
        }
        let scale = 1.0 / top;
        let mut matrix = raw.clone();
        for i in 0..n {
            matrix[(i, i)] += shift;
        }
        matrix *= scale;
        Ok(CouplingMatrix {
            matrix,
            normalization: Normalization {
                shift,
                scale,
                min_eigenvalue: (lambda_min + shift) * scale,
            },
        })
    }

    /// Wraps a matrix that must already satisfy the working invariants.
    pub fn from_normalized(matrix: DMatrix<f64>) -> Result<Self> {
        validate_raw(&matrix)?;
        let (values, _) = linalg::sorted_eigen(&matrix);
        let lambda_min = values[0];
        let lambda_max = values[values.len() - 1];
        if lambda_min <= 0.0 {
            return Err(Error::InvalidModel(format!(
                "matrix is not positive definite (lambda_min = {lambda_min})"
            )));
        }
        if lambda_max > 1.0 + RADIUS_TOL {
            return Err(Error::InvalidModel(format!(
                "spectral radius {lambda_max} exceeds one"
            )));
        }
        Ok(CouplingMatrix {
            matrix,
            normalization: Normalization {
                shift: 0.0,
                scale: 1.0,
                min_eigenvalue: lambda_min,
            },
        })
    }

    pub fn identity(n: usize) -> Self {
        CouplingMatrix {
            matrix: DMatrix::identity(n, n),
            normalization: Normalization {
                shift: 0.0,
                scale: 1.0,
                min_eigenvalue: 1.0,
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    /// Inverse temperature with respect to the raw couplings that
    /// corresponds to `beta` with respect to this matrix.
    pub fn raw_beta(&self, beta: f64) -> f64 {
        beta * self.normalization.scale
    }

    /// Off-diagonal neighbours of each site with their (nonpositive) entries.
    pub fn neighbours(&self) -> Vec<Vec<(usize, f64)>> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| j != i && self.matrix[(i, j)] != 0.0)
                    .map(|j| (j, self.matrix[(i, j)]))
                    .collect()
            })
            .collect()
    }
}

fn validate_raw(raw: &DMatrix<f64>) -> Result<()> {
    let n = raw.nrows();
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    if raw.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: raw.ncols(),
        });
    }
    linalg::check_finite(raw, "coupling matrix")?;
    let scale = raw.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    for i in 0..n {
        for j in i + 1..n {
            if (raw[(i, j)] - raw[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::NotSymmetric { row: i, col: j });
            }
            if raw[(i, j)] > 0.0 {
                return Err(Error::PositiveOffDiagonal {
                    row: i,
                    col: j,
                    value: raw[(i, j)],
                });
            }
        }
    }
    Ok(())
}

/// Builds the normalised coupling matrix of a model.
pub fn build_coupling(spec: &ModelSpec) -> Result<CouplingMatrix> {
    spec.validate()?;
    let raw = spec.lattice.raw_matrix(spec.coupling)?;
    CouplingMatrix::normalize(&raw)
}

/// Largest absolute eigenvalue of a symmetric matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    linalg::spectral_radius(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn single_site_normalises_to_identity() {
        for j in [0.0, 1.0, 7.5] {
            let a = build_coupling(&ModelSpec::new(Lattice::path(1), j, 0.3)).unwrap();
            assert_relative_eq!(a.matrix()[(0, 0)], 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn two_site_path_by_hand() {
        // raw eigenvalues -1, 1; shift c = 1.5, scale 1 / 2.5
        let a = build_coupling(&ModelSpec::new(Lattice::path(2), 1.0, 0.0)).unwrap();
        let norm = a.normalization();
        assert_relative_eq!(norm.shift, 1.5, epsilon = 1e-14);
        assert_relative_eq!(norm.scale, 0.4, epsilon = 1e-14);
        assert_relative_eq!(norm.min_eigenvalue, 0.5 / 2.5, epsilon = 1e-14);
        assert_relative_eq!(a.matrix()[(0, 0)], 0.6, epsilon = 1e-14);
        assert_relative_eq!(a.matrix()[(0, 1)], -0.4, epsilon = 1e-14);
        assert_relative_eq!(spectral_radius(a.matrix()).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn curie_weiss_has_unit_radius() {
        let n = 4;
        let a = build_coupling(&ModelSpec::new(Lattice::complete(n), 1.0 / n as f64, 0.0)).unwrap();
        // raw eigenvalues -J(n-1) once and +J (n-1 times)
        let j = 0.25;
        let shift = 3.0 * j + 0.5;
        assert_relative_eq!(a.normalization().shift, shift, epsilon = 1e-14);
        assert_relative_eq!(a.normalization().scale, 1.0 / (j + shift), epsilon = 1e-14);
        assert_relative_eq!(spectral_radius(a.matrix()).unwrap(), 1.0, epsilon = 1e-13);
    }

    #[test]
    fn normalisation_is_idempotent() {
        for lattice in [
            Lattice::path(5),
            Lattice::cycle(4),
            Lattice::grid(2, 3),
            Lattice::complete(5),
        ] {
            let a = build_coupling(&ModelSpec::new(lattice, 0.7, 0.0)).unwrap();
            let again = CouplingMatrix::normalize(a.matrix()).unwrap();
            let diff = (again.matrix() - a.matrix()).abs().max();
            assert!(diff < 1e-12, "diff {diff}");
        }
    }

    #[test]
    fn custom_matrix_errors() {
        let spec = |m: Vec<Vec<f64>>| ModelSpec {
            lattice: Lattice::Custom { matrix: m },
            coupling: 1.0,
            field: vec![0.0; 2],
            beta: 0.1,
            alpha: 1.1,
        };
        assert!(matches!(
            build_coupling(&spec(vec![vec![0.0, -1.0], vec![-0.5, 0.0]])),
            Err(Error::NotSymmetric { .. })
        ));
        assert!(matches!(
            build_coupling(&spec(vec![vec![0.0, 1.0], vec![1.0, 0.0]])),
            Err(Error::PositiveOffDiagonal { .. })
        ));
        assert!(matches!(
            build_coupling(&ModelSpec::new(Lattice::complete(0), 1.0, 0.0)),
            Err(Error::EmptyGraph)
        ));
    }

    #[test]
    fn spec_validation() {
        let base = ModelSpec::new(Lattice::path(3), 1.0, 0.5);
        assert!(base.validate().is_ok());
        assert!(base.clone().with_alpha(0.5).validate().is_err());
        assert!(ModelSpec::new(Lattice::path(3), -1.0, 0.5).validate().is_err());
        assert!(base.clone().with_field(vec![0.0; 2]).validate().is_err());
        assert!(base.with_field(vec![0.0, f64::NAN, 0.0]).validate().is_err());
    }

    #[test]
    fn grid_orbits() {
        let orbits = Lattice::grid(4, 4).site_orbits();
        let mut sizes: Vec<usize> = orbits.iter().map(Vec::len).collect();
        sizes.sort();
        // corners, centre, edge sites
        assert_eq!(sizes, vec![4, 4, 8]);
        assert_eq!(Lattice::periodic_grid(4, 4).site_orbits().len(), 1);
        assert_eq!(Lattice::path(5).site_orbits().len(), 3);
        assert_eq!(Lattice::grid(2, 3).site_orbits().len(), 2);
    }

    #[test]
    fn torus_edges_wrap() {
        let edges = Lattice::periodic_grid(3, 3).edges();
        assert_eq!(edges.len(), 18);
        let a = build_coupling(&ModelSpec::new(Lattice::periodic_grid(3, 3), 1.0, 0.0)).unwrap();
        // regular graph: every row sum of the raw matrix is -4 J
        for row in a.neighbours() {
            assert_eq!(row.len(), 4);
        }
    }
}
