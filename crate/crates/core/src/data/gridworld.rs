//! Finite discrete feature spaces with exact per-client label laws.
//!
//! A grid world stores, for every grid point, the ground-truth conditional
//! label distribution and one conditional table per client, together with
//! a single feature marginal shared by all clients. Risks and the noise
//! expectation term can then be computed by exact enumeration instead of
//! sampling.

use std::io::{BufRead, Write};

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::LabeledDataset;
use crate::error::{Error, Result};

const PROB_TOL: f64 = 1e-12;

/// Which label law of a world to evaluate against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSource {
    GroundTruth,
    Client(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridWorld {
    /// Grid point coordinates, one row per point, entries in `[0,1]`.
    points: Array2<f64>,
    class_count: usize,
    /// Feature marginal over points, shared by every client.
    marginal: Vec<f64>,
    /// Ground-truth conditionals, shape (points, classes).
    truth: Array2<f64>,
    /// Per-client conditionals, each shape (points, classes).
    clients: Vec<Array2<f64>>,
}

fn check_rows_sum_to_one(table: ArrayView2<f64>, what: &str) -> Result<()> {
    for (i, row) in table.rows().into_iter().enumerate() {
        if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::Domain(format!(
                "{what}: row {i} has a probability outside [0,1]"
            )));
        }
        let s: f64 = row.sum();
        if (s - 1.0).abs() > PROB_TOL {
            return Err(Error::Domain(format!(
                "{what}: row {i} sums to {s}, expected 1"
            )));
        }
    }
    Ok(())
}

impl GridWorld {
    pub fn new(
        points: Array2<f64>,
        class_count: usize,
        marginal: Vec<f64>,
        truth: Array2<f64>,
        clients: Vec<Array2<f64>>,
    ) -> Result<Self> {
        let g = points.nrows();
        if g == 0 || class_count == 0 || clients.is_empty() {
            return Err(Error::Domain(
                "world needs points, classes, and at least one client".into(),
            ));
        }
        if points.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Domain("grid points must lie in [0,1]^d".into()));
        }
        if marginal.len() != g {
            return Err(Error::Shape(format!(
                "marginal has {} entries for {} points",
                marginal.len(),
                g
            )));
        }
        if marginal.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::Domain("marginal probabilities outside [0,1]".into()));
        }
        let s: f64 = marginal.iter().sum();
        if (s - 1.0).abs() > PROB_TOL {
            return Err(Error::Domain(format!("marginal sums to {s}, expected 1")));
        }
        if truth.dim() != (g, class_count) {
            return Err(Error::Shape("ground-truth table shape mismatch".into()));
        }
        check_rows_sum_to_one(truth.view(), "ground truth")?;
        for (k, table) in clients.iter().enumerate() {
            if table.dim() != (g, class_count) {
                return Err(Error::Shape(format!("client {k} table shape mismatch")));
            }
            check_rows_sum_to_one(table.view(), &format!("client {k}"))?;
        }
        Ok(GridWorld {
            points,
            class_count,
            marginal,
            truth,
            clients,
        })
    }

    /// Builds a world from per-client `(marginal, conditional)` pairs,
    /// verifying the shared-feature-marginal assumption: every client's
    /// marginal (and the ground truth's) must agree within `1e-12`.
    pub fn from_per_client(
        points: Array2<f64>,
        class_count: usize,
        truth: (Vec<f64>, Array2<f64>),
        client_tables: Vec<(Vec<f64>, Array2<f64>)>,
    ) -> Result<Self> {
        let (reference, truth_table) = truth;
        for (k, (marginal, _)) in client_tables.iter().enumerate() {
            if marginal.len() != reference.len()
                || marginal
                    .iter()
                    .zip(&reference)
                    .any(|(a, b)| (a - b).abs() > PROB_TOL)
            {
                return Err(Error::AssumptionViolation(format!(
                    "client {k} feature marginal differs from the shared marginal"
                )));
            }
        }
        GridWorld::new(
            points,
            class_count,
            reference,
            truth_table,
            client_tables.into_iter().map(|(_, t)| t).collect(),
        )
    }

    pub fn point_count(&self) -> usize {
        self.points.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn client_count(&self) -> usize {
        self.clients.len()
    }

    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    pub fn marginal(&self) -> &[f64] {
        &self.marginal
    }

    pub fn ground_truth(&self) -> ArrayView2<'_, f64> {
        self.truth.view()
    }

    pub fn client_conditionals(&self, client: usize) -> ArrayView2<'_, f64> {
        self.clients[client].view()
    }

    pub fn conditionals(&self, source: LabelSource) -> ArrayView2<'_, f64> {
        match source {
            LabelSource::GroundTruth => self.truth.view(),
            LabelSource::Client(k) => self.clients[k].view(),
        }
    }

    /// Grid points with the constant-1 component appended.
    pub fn augmented_points(&self) -> Array2<f64> {
        let (g, d) = self.points.dim();
        let mut out = Array2::ones((g, d + 1));
        out.slice_mut(ndarray::s![.., ..d]).assign(&self.points);
        out
    }

    /// Number of `(client, point)` pairs whose conditional differs from
    /// the ground truth.
    pub fn mismatched_pairs(&self) -> usize {
        self.clients
            .iter()
            .map(|table| {
                (0..self.point_count())
                    .filter(|&g| {
                        (0..self.class_count)
                            .any(|i| (table[[g, i]] - self.truth[[g, i]]).abs() > PROB_TOL)
                    })
                    .count()
            })
            .sum()
    }

    /// Draws `n` i.i.d. examples for `client`: a grid point from the
    /// shared marginal, then a label from the client's conditional there.
    pub fn sample(&self, client: usize, n: usize, seed: u64) -> Result<LabeledDataset> {
        if client >= self.clients.len() {
            return Err(Error::Domain(format!(
                "client {client} out of range 0..{}",
                self.clients.len()
            )));
        }
        if n == 0 {
            return Err(Error::Domain("cannot sample an empty dataset".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table = &self.clients[client];
        let mut features = Array2::zeros((n, self.feature_dim()));
        let mut labels = Vec::with_capacity(n);
        for row in 0..n {
            let g = draw_index(&mut rng, self.marginal.iter().copied());
            let y = draw_index(&mut rng, table.row(g).iter().copied());
            features.row_mut(row).assign(&self.points.row(g));
            labels.push(y);
        }
        LabeledDataset::new(features, labels, self.class_count)
    }

    /// Serializes the world as a line-oriented text table; one line per
    /// `(client, point)` carrying the marginal and conditional
    /// probabilities.
    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "gridworld\t1")?;
        writeln!(out, "classes\t{}", self.class_count)?;
        writeln!(out, "points\t{}", self.point_count())?;
        writeln!(out, "clients\t{}", self.client_count())?;
        let join = |row: ndarray::ArrayView1<f64>| {
            row.iter()
                .map(|v| format!("{v}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        for g in 0..self.point_count() {
            writeln!(out, "point\t{g}\t{}", join(self.points.row(g)))?;
        }
        for g in 0..self.point_count() {
            writeln!(
                out,
                "truth\t{g}\t{}\t{}",
                self.marginal[g],
                join(self.truth.row(g))
            )?;
        }
        for (k, table) in self.clients.iter().enumerate() {
            for g in 0..self.point_count() {
                writeln!(
                    out,
                    "client\t{k}\t{g}\t{}\t{}",
                    self.marginal[g],
                    join(table.row(g))
                )?;
            }
        }
        Ok(())
    }

    /// Parses the [`GridWorld::write_text`] format, re-verifying the
    /// shared-marginal assumption across clients.
    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut classes = None;
        let mut n_points = None;
        let mut n_clients = None;
        let mut point_rows: Vec<(usize, Vec<f64>)> = Vec::new();
        let mut truth_rows: Vec<(usize, f64, Vec<f64>)> = Vec::new();
        let mut client_rows: Vec<(usize, usize, f64, Vec<f64>)> = Vec::new();

        let parse_floats = |s: &str, what: &str| -> Result<Vec<f64>> {
            s.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(format!("{what}: {e}")))
                })
                .collect()
        };
        let parse_usize = |s: &str, what: &str| -> Result<usize> {
            s.trim()
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("{what}: {e}")))
        };
        let parse_f64 = |s: &str, what: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("{what}: {e}")))
        };

        for line in input.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            match fields[0] {
                "gridworld" => {}
                "classes" if fields.len() == 2 => {
                    classes = Some(parse_usize(fields[1], "classes")?)
                }
                "points" if fields.len() == 2 => n_points = Some(parse_usize(fields[1], "points")?),
                "clients" if fields.len() == 2 => {
                    n_clients = Some(parse_usize(fields[1], "clients")?)
                }
                "point" if fields.len() == 3 => point_rows.push((
                    parse_usize(fields[1], "point index")?,
                    parse_floats(fields[2], "point coords")?,
                )),
                "truth" if fields.len() == 4 => truth_rows.push((
                    parse_usize(fields[1], "truth point")?,
                    parse_f64(fields[2], "truth marginal")?,
                    parse_floats(fields[3], "truth conditional")?,
                )),
                "client" if fields.len() == 5 => client_rows.push((
                    parse_usize(fields[1], "client index")?,
                    parse_usize(fields[2], "client point")?,
                    parse_f64(fields[3], "client marginal")?,
                    parse_floats(fields[4], "client conditional")?,
                )),
                other => {
                    return Err(Error::Parse(format!("grid world line kind: {other:?}")));
                }
            }
        }

        let classes = classes.ok_or_else(|| Error::Parse("classes line missing".into()))?;
        let g = n_points.ok_or_else(|| Error::Parse("points line missing".into()))?;
        let n = n_clients.ok_or_else(|| Error::Parse("clients line missing".into()))?;
        if point_rows.len() != g || truth_rows.len() != g || client_rows.len() != n * g {
            return Err(Error::Parse(format!(
                "line counts: expected {g} points, {g} truth rows, {} client rows; got {}, {}, {}",
                n * g,
                point_rows.len(),
                truth_rows.len(),
                client_rows.len()
            )));
        }

        point_rows.sort_by_key(|(i, _)| *i);
        let d = point_rows[0].1.len();
        let mut points = Array2::zeros((g, d));
        for (i, coords) in &point_rows {
            if coords.len() != d {
                return Err(Error::Parse(format!("point {i}: inconsistent dimension")));
            }
            for (j, &v) in coords.iter().enumerate() {
                points[[*i, j]] = v;
            }
        }

        truth_rows.sort_by_key(|(i, ..)| *i);
        let mut truth_marginal = vec![0.0; g];
        let mut truth = Array2::zeros((g, classes));
        for (i, m, cond) in &truth_rows {
            if cond.len() != classes {
                return Err(Error::Parse(format!("truth {i}: wrong class count")));
            }
            truth_marginal[*i] = *m;
            for (j, &v) in cond.iter().enumerate() {
                truth[[*i, j]] = v;
            }
        }

        let mut client_tables = vec![(vec![0.0; g], Array2::zeros((g, classes))); n];
        for (k, i, m, cond) in &client_rows {
            if *k >= n {
                return Err(Error::Parse(format!("client index {k} out of range")));
            }
            if cond.len() != classes {
                return Err(Error::Parse(format!(
                    "client {k} point {i}: wrong class count"
                )));
            }
            client_tables[*k].0[*i] = *m;
            for (j, &v) in cond.iter().enumerate() {
                client_tables[*k].1[[*i, j]] = v;
            }
        }

        GridWorld::from_per_client(points, classes, (truth_marginal, truth), client_tables)
    }
}

fn draw_index<R: Rng>(rng: &mut R, probs: impl Iterator<Item = f64>) -> usize {
    let mut u: f64 = rng.gen();
    let mut last = 0;
    for (i, p) in probs.enumerate() {
        last = i;
        if u < p {
            return i;
        }
        u -= p;
    }
    last
}

/// 25-point, two-class world on the unit square with a uniform feature
/// marginal. `flips[k]` lists grid points where client `k`'s conditional is
/// the deterministic swap of the ground truth; everywhere else clients
/// match the truth exactly.
pub fn two_class_grid(flips: &[Vec<usize>]) -> Result<GridWorld> {
    const SIDE: usize = 5;
    const POINTS: usize = SIDE * SIDE;
    if flips.is_empty() {
        return Err(Error::Domain("need at least one client".into()));
    }
    let points = Array2::from_shape_fn((POINTS, 2), |(p, j)| {
        let (row, col) = (p / SIDE, p % SIDE);
        if j == 0 {
            row as f64 / (SIDE - 1) as f64
        } else {
            col as f64 / (SIDE - 1) as f64
        }
    });
    // Which half-plane a point falls in decides its true class; the exact
    // geometry is irrelevant to the noise expectation term.
    let truth = Array2::from_shape_fn((POINTS, 2), |(p, c)| {
        let class_a = p < 2 * SIDE;
        if (c == 0) == class_a {
            1.0
        } else {
            0.0
        }
    });
    let marginal = vec![1.0 / POINTS as f64; POINTS];
    let mut clients = Vec::with_capacity(flips.len());
    for (k, flipped) in flips.iter().enumerate() {
        let mut table = truth.clone();
        for &p in flipped {
            if p >= POINTS {
                return Err(Error::Domain(format!(
                    "client {k}: flipped point {p} out of range 0..{POINTS}"
                )));
            }
            let (a, b) = (table[[p, 0]], table[[p, 1]]);
            table[[p, 0]] = b;
            table[[p, 1]] = a;
        }
        clients.push(table);
    }
    GridWorld::new(points, 2, marginal, truth, clients)
}

/// [`two_class_grid`] with per-client flip fractions: client `k` gets
/// `round(fraction * 25)` flipped points at deterministic positions.
pub fn two_class_grid_fractions(fractions: &[f64]) -> Result<GridWorld> {
    let flips = fractions
        .iter()
        .enumerate()
        .map(|(k, &f)| {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Domain(format!("flip fraction {f} outside [0,1]")));
            }
            let count = (f * 25.0).round() as usize;
            Ok((0..count).map(|j| (7 * k + 3 * j) % 25).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    two_class_grid(&flips)
}

/// The two worked-example worlds: in the first, client 1 has three flipped
/// points and client 2 is clean; in the second, client 2 additionally has
/// one flipped point (four mismatched pairs in total).
pub fn fig2_worlds() -> (GridWorld, GridWorld) {
    let first = two_class_grid(&[vec![0, 3, 6], vec![]]).expect("static world");
    let second = two_class_grid(&[vec![0, 3, 6], vec![7]]).expect("static world");
    (first, second)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example_worlds_have_expected_mismatches() {
        let (w1, w2) = fig2_worlds();
        // client 1 differs from truth at exactly 3 points, client 2 clean
        let c1_mismatch = (0..w1.point_count())
            .filter(|&g| {
                (0..2).any(|i| w1.client_conditionals(0)[[g, i]] != w1.ground_truth()[[g, i]])
            })
            .count();
        assert_eq!(c1_mismatch, 3);
        assert_eq!(w1.mismatched_pairs(), 3);
        assert_eq!(w2.mismatched_pairs(), 4);
    }

    #[test]
    fn marginals_are_shared_and_uniform() {
        let (w1, w2) = fig2_worlds();
        for w in [&w1, &w2] {
            assert!(w.marginal().iter().all(|&p| p == 1.0 / 25.0));
        }
    }

    #[test]
    fn flipped_points_are_deterministic_swaps() {
        let (w1, _) = fig2_worlds();
        let truth = w1.ground_truth();
        let c1 = w1.client_conditionals(0);
        for &p in &[0usize, 3, 6] {
            assert_eq!(c1[[p, 0]], truth[[p, 1]]);
            assert_eq!(c1[[p, 1]], truth[[p, 0]]);
        }
    }

    #[test]
    fn deterministic_conditionals_sample_exactly() {
        let (w1, _) = fig2_worlds();
        let ds = w1.sample(0, 500, 42).unwrap();
        let table = w1.client_conditionals(0);
        for i in 0..ds.len() {
            let point = w1
                .points()
                .rows()
                .into_iter()
                .position(|r| r == ds.features().row(i))
                .expect("sampled feature must be a grid point");
            assert_eq!(table[[point, ds.labels()[i]]], 1.0);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let (w1, _) = fig2_worlds();
        assert_eq!(w1.sample(0, 100, 7).unwrap(), w1.sample(0, 100, 7).unwrap());
    }

    #[test]
    fn label_frequencies_concentrate() {
        let (w1, _) = fig2_worlds();
        let n = 100_000;
        let ds = w1.sample(0, n, 12345).unwrap();
        // Pr(Y=1) under client 1: 15 truth-B points plus 3 flipped A points.
        let expect = 18.0 / 25.0;
        let freq = ds.labels().iter().filter(|&&y| y == 1).count() as f64 / n as f64;
        let sigma = (expect * (1.0 - expect) / n as f64).sqrt();
        assert!(
            (freq - expect).abs() < 3.0 * sigma,
            "freq {freq} vs {expect} (3 sigma {})",
            3.0 * sigma
        );
    }

    #[test]
    fn text_round_trip() {
        let (_, w2) = fig2_worlds();
        let mut buf = Vec::new();
        w2.write_text(&mut buf).unwrap();
        let back = GridWorld::read_text(std::io::BufReader::new(buf.as_slice())).unwrap();
        assert_eq!(back, w2);
    }

    #[test]
    fn differing_marginals_violate_the_assumption() {
        let (w1, _) = fig2_worlds();
        let mut buf = Vec::new();
        w1.write_text(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        // perturb one client marginal entry
        let hacked = text.replace("client\t1\t0\t0.04", "client\t1\t0\t0.05");
        assert_ne!(text, hacked);
        let err = GridWorld::read_text(std::io::BufReader::new(hacked.as_bytes())).unwrap_err();
        assert!(matches!(err, Error::AssumptionViolation(_)), "{err}");
    }

    #[test]
    fn conditional_rows_must_sum_to_one() {
        let points = Array2::from_elem((2, 1), 0.5);
        let truth = ndarray::array![[0.6, 0.5], [1.0, 0.0]];
        let err =
            GridWorld::new(points, 2, vec![0.5, 0.5], truth.clone(), vec![truth]).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }
}
