//! Ideological projection onto principal-component axes.
//!
//! The axes come from a PCA fit on a reference matrix of politician
//! utility vectors only; evaluated models are projected into the fixed
//! axes without refitting. PC1 is oriented so the Democratic-aligned
//! reference subset sits at negative PC1.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PcaError {
    #[error("need at least two reference rows and two policy columns")]
    TooFewReferences,
    #[error("`{name}` has {got} policy utilities, expected {expected}")]
    DimensionMismatch { name: String, expected: usize, got: usize },
    #[error("reference matrix has no variance to decompose")]
    DegenerateReference,
}

/// One reference politician (or platform) with its policy utilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceEntity {
    pub name: String,
    pub democrat_aligned: bool,
    pub utilities: Vec<f64>,
}

/// The fixed two-component axes fit on the reference matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaAxes {
    /// Column means of the reference matrix; all centering uses these.
    pub mean: Vec<f64>,
    pub pc1: Vec<f64>,
    pub pc2: Vec<f64>,
    /// Fraction of reference variance captured by each axis (pc1 >= pc2).
    pub explained_variance: (f64, f64),
}

impl PcaAxes {
    pub fn project(&self, utilities: &[f64]) -> (f64, f64) {
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for ((u, m), (w1, w2)) in utilities.iter().zip(&self.mean).zip(self.pc1.iter().zip(&self.pc2)) {
            let c = u - m;
            s1 += c * w1;
            s2 += c * w2;
        }
        (s1, s2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPoint {
    pub name: String,
    pub pc1: f64,
    pub pc2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdeologyProjection {
    pub axes: PcaAxes,
    pub reference_points: Vec<ProjectedPoint>,
    pub entity_points: Vec<ProjectedPoint>,
    /// Whether the orientation rule flipped PC1's raw sign.
    pub pc1_flipped: bool,
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Returns (eigenvalues, eigenvectors as columns), unsorted.
fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let norm: f64 = a.iter().flatten().map(|x| x * x).sum::<f64>();
    let target = norm * 1e-30 + f64::MIN_POSITIVE;

    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .map(|p| ((p + 1)..n).map(|q| a[p][q] * a[p][q]).sum::<f64>())
            .sum::<f64>()
            * 2.0;
        if off <= target {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = if theta >= 0.0 {
                    1.0 / (theta + libm::sqrt(theta * theta + 1.0))
                } else {
                    -1.0 / (-theta + libm::sqrt(theta * theta + 1.0))
                };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let eigenvalues: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    (eigenvalues, v)
}

/// Make the largest-magnitude component positive so eigenvector signs are
/// reproducible before the orientation rule is applied.
fn canonical_sign(vector: &mut [f64]) {
    let mut best = 0usize;
    for (i, x) in vector.iter().enumerate() {
        if libm::fabs(*x) > libm::fabs(vector[best]) {
            best = i;
        }
    }
    if vector[best] < 0.0 {
        for x in vector.iter_mut() {
            *x = -*x;
        }
    }
}

/// Fit two principal components on the reference rows and project both
/// the references and the evaluated entities into the fixed axes.
pub fn project_ideology(
    reference: &[ReferenceEntity],
    entities: &[(String, Vec<f64>)],
) -> Result<IdeologyProjection, PcaError> {
    if reference.len() < 2 {
        return Err(PcaError::TooFewReferences);
    }
    let dims = reference[0].utilities.len();
    if dims < 2 {
        return Err(PcaError::TooFewReferences);
    }
    for r in reference {
        if r.utilities.len() != dims {
            return Err(PcaError::DimensionMismatch {
                name: r.name.clone(),
                expected: dims,
                got: r.utilities.len(),
            });
        }
    }
    for (name, u) in entities {
        if u.len() != dims {
            return Err(PcaError::DimensionMismatch {
                name: name.clone(),
                expected: dims,
                got: u.len(),
            });
        }
    }

    let n = reference.len();
    let mut mean = vec![0.0; dims];
    for r in reference {
        for (m, u) in mean.iter_mut().zip(&r.utilities) {
            *m += u;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }

    // Sample covariance of the centered reference matrix.
    let denom = (n - 1) as f64;
    let mut cov = vec![vec![0.0; dims]; dims];
    for r in reference {
        let centered: Vec<f64> = r.utilities.iter().zip(&mean).map(|(u, m)| u - m).collect();
        for i in 0..dims {
            for j in i..dims {
                cov[i][j] += centered[i] * centered[j] / denom;
            }
        }
    }
    for i in 0..dims {
        for j in 0..i {
            cov[i][j] = cov[j][i];
        }
    }

    let total_variance: f64 = (0..dims).map(|i| cov[i][i]).sum();
    if !(total_variance > 0.0) {
        return Err(PcaError::DegenerateReference);
    }

    let (eigenvalues, vectors) = jacobi_eigen(cov);
    let mut order: Vec<usize> = (0..dims).collect();
    order.sort_by(|&i, &j| eigenvalues[j].total_cmp(&eigenvalues[i]).then(i.cmp(&j)));
    let (first, second) = (order[0], order[1]);

    let mut pc1: Vec<f64> = (0..dims).map(|k| vectors[k][first]).collect();
    let mut pc2: Vec<f64> = (0..dims).map(|k| vectors[k][second]).collect();
    canonical_sign(&mut pc1);
    canonical_sign(&mut pc2);

    let mut axes = PcaAxes {
        mean,
        pc1,
        pc2,
        explained_variance: (
            eigenvalues[first].max(0.0) / total_variance,
            eigenvalues[second].max(0.0) / total_variance,
        ),
    };

    // Orientation: Democratic-aligned references sit at negative PC1.
    let dem_scores: Vec<f64> = reference
        .iter()
        .filter(|r| r.democrat_aligned)
        .map(|r| axes.project(&r.utilities).0)
        .collect();
    let pc1_flipped = if dem_scores.is_empty() {
        false
    } else {
        let dem_mean = dem_scores.iter().sum::<f64>() / dem_scores.len() as f64;
        dem_mean > 0.0
    };
    if pc1_flipped {
        for x in axes.pc1.iter_mut() {
            *x = -*x;
        }
    }

    let reference_points = reference
        .iter()
        .map(|r| {
            let (pc1, pc2) = axes.project(&r.utilities);
            ProjectedPoint { name: r.name.clone(), pc1, pc2 }
        })
        .collect();
    let entity_points = entities
        .iter()
        .map(|(name, u)| {
            let (pc1, pc2) = axes.project(u);
            ProjectedPoint { name: name.clone(), pc1, pc2 }
        })
        .collect();

    Ok(IdeologyProjection {
        axes,
        reference_points,
        entity_points,
        pc1_flipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn named(name: &str, dem: bool, utilities: &[f64]) -> ReferenceEntity {
        ReferenceEntity {
            name: name.to_string(),
            democrat_aligned: dem,
            utilities: utilities.to_vec(),
        }
    }

    #[test]
    fn mirror_politicians_separate_with_democrat_negative() {
        let v = [1.0, -0.5, 2.0, 0.25];
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        let refs = [named("dem", true, &v), named("rep", false, &neg)];
        let proj = project_ideology(&refs, &[]).unwrap();
        let dem = &proj.reference_points[0];
        let rep = &proj.reference_points[1];
        assert!(dem.pc1 < 0.0);
        assert!(rep.pc1 > 0.0);
        assert!((dem.pc1 + rep.pc1).abs() < 1e-12);
    }

    #[test]
    fn entity_equal_to_reference_gets_identical_coordinates() {
        let refs = [
            named("a", true, &[1.0, 0.0, -1.0]),
            named("b", false, &[-1.0, 0.5, 1.0]),
            named("c", false, &[0.5, -0.25, 0.75]),
        ];
        let entities = [("clone".to_string(), refs[1].utilities.clone())];
        let proj = project_ideology(&refs, &entities).unwrap();
        assert_eq!(proj.entity_points[0].pc1, proj.reference_points[1].pc1);
        assert_eq!(proj.entity_points[0].pc2, proj.reference_points[1].pc2);
    }

    #[test]
    fn reference_rows_round_trip_through_projection() {
        let refs = [
            named("a", true, &[2.0, 1.0, 0.0, -1.0]),
            named("b", true, &[1.5, 0.5, 0.25, -0.5]),
            named("c", false, &[-2.0, -1.0, 0.5, 1.0]),
            named("d", false, &[-1.0, -0.25, 0.125, 0.75]),
        ];
        let proj = project_ideology(&refs, &[]).unwrap();
        for (r, p) in refs.iter().zip(&proj.reference_points) {
            let again = proj.axes.project(&r.utilities);
            assert!((again.0 - p.pc1).abs() < 1e-9);
            assert!((again.1 - p.pc2).abs() < 1e-9);
        }
    }

    #[test]
    fn explained_variance_matches_constructed_covariance() {
        // Rows with exactly known sample covariance diag(2a^2, 2b^2)/(n-1).
        let (a, b) = (3.0, 1.5);
        let refs = [
            named("p1", true, &[a, 0.0]),
            named("p2", false, &[-a, 0.0]),
            named("p3", true, &[0.0, b]),
            named("p4", false, &[0.0, -b]),
        ];
        let proj = project_ideology(&refs, &[]).unwrap();
        let lam1 = 2.0 * a * a / 3.0;
        let lam2 = 2.0 * b * b / 3.0;
        let expect = (lam1 / (lam1 + lam2), lam2 / (lam1 + lam2));
        assert!((proj.axes.explained_variance.0 - expect.0).abs() < 1e-9);
        assert!((proj.axes.explained_variance.1 - expect.1).abs() < 1e-9);
        assert!(proj.axes.explained_variance.0 >= proj.axes.explained_variance.1);
    }

    #[test]
    fn rotated_construction_keeps_eigenvalues() {
        // Rotate the known-covariance rows; eigenvalues are invariant.
        let (a, b) = (2.0, 0.5);
        let angle = 0.6f64;
        let (c, s) = (libm::cos(angle), libm::sin(angle));
        let rot = |x: f64, y: f64| [c * x - s * y, s * x + c * y];
        let refs = [
            named("p1", true, &rot(a, 0.0)),
            named("p2", false, &rot(-a, 0.0)),
            named("p3", true, &rot(0.0, b)),
            named("p4", false, &rot(0.0, -b)),
        ];
        let proj = project_ideology(&refs, &[]).unwrap();
        let lam1 = 2.0 * a * a / 3.0;
        let lam2 = 2.0 * b * b / 3.0;
        assert!((proj.axes.explained_variance.0 - lam1 / (lam1 + lam2)).abs() < 1e-9);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let refs = [named("a", true, &[1.0, 2.0]), named("b", false, &[2.0, 1.0])];
        let entities = [("short".to_string(), vec![1.0])];
        assert!(matches!(
            project_ideology(&refs, &entities),
            Err(PcaError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn degenerate_reference_is_rejected() {
        let refs = [named("a", true, &[1.0, 1.0]), named("b", false, &[1.0, 1.0])];
        assert!(matches!(project_ideology(&refs, &[]), Err(PcaError::DegenerateReference)));
    }
}
